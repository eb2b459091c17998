//! Bag-of-words documents: a synthetic keyword-driven corpus and ingestion
//! of pre-tokenised text.

use std::collections::HashMap;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{LanError, Result};
use crate::io::read_file;
use crate::seed;
use crate::tensor::Tensor;

pub const UNK: &str = "<unk>";

/// Ordered token list with `UNK` at index 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// `tokens` must not contain `UNK` or duplicates; `UNK` is prepended.
    pub fn new<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let mut all = vec![UNK.to_string()];
        all.extend(tokens);
        let mut index = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(LanError::Contract(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens: all, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    /// Index of `word`, or 0 for out-of-vocabulary words.
    pub fn index_of(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Count histogram of `words` over the vocabulary.
    pub fn histogram<S: AsRef<str>>(&self, words: &[S]) -> Tensor {
        let mut counts = vec![0.0f32; self.len()];
        for w in words {
            counts[self.index_of(w.as_ref())] += 1.0;
        }
        Tensor::new(vec![self.len()], counts).expect("vocabulary length")
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        match tokens.split_first() {
            Some((first, rest)) if first == UNK => {
                Vocabulary::new(rest.iter().cloned()).map_err(serde::de::Error::custom)
            }
            _ => Err(serde::de::Error::custom("vocabulary must start with <unk>")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BowSample {
    /// Length-V count histogram.
    pub counts: Tensor,
    pub label: usize,
    pub words: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub classes: usize,
    pub keywords_per_class: usize,
    /// Including `UNK`.
    pub vocab_size: usize,
    pub docs: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub min_keywords: usize,
    pub max_keywords: usize,
    /// Probability that a filler token is drawn from words outside the vocabulary.
    pub oov_rate: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            classes: 10,
            keywords_per_class: 5,
            vocab_size: 500,
            docs: 2000,
            min_len: 20,
            max_len: 60,
            min_keywords: 2,
            max_keywords: 5,
            oov_rate: 0.02,
            seed: 0,
        }
    }
}

const OOV_POOL: usize = 100;

/// Pronounceable pseudo-word for an index; distinct indices below 343000
/// give distinct words.
fn pseudo_word(i: usize) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let mut k = (i * 7919 + 13) % 343_000;
    let mut w = String::with_capacity(6);
    for _ in 0..3 {
        let syl = k % 70;
        k /= 70;
        w.push(C[syl / 5] as char);
        w.push(V[syl % 5] as char);
    }
    w
}

impl CorpusConfig {
    fn validate(&self) -> Result<()> {
        let keywords = self.classes * self.keywords_per_class;
        if self.classes < 2 || self.keywords_per_class == 0 {
            return Err(LanError::Config("corpus needs >= 2 classes with keywords".into()));
        }
        if self.vocab_size < keywords + 2 {
            return Err(LanError::Config(format!(
                "vocabulary of {} cannot hold {keywords} keywords, UNK and a filler",
                self.vocab_size
            )));
        }
        if self.min_len == 0
            || self.min_len > self.max_len
            || self.min_keywords == 0
            || self.min_keywords > self.max_keywords
            || self.max_keywords > self.min_len
            || !(0.0..=1.0).contains(&self.oov_rate)
        {
            return Err(LanError::Config(format!("inconsistent corpus lengths in {self:?}")));
        }
        Ok(())
    }

    /// Keyword tokens of `class`.
    pub fn keywords(&self, class: usize) -> Vec<String> {
        (0..self.keywords_per_class)
            .map(|j| pseudo_word(class * self.keywords_per_class + j))
            .collect()
    }
}

/// Generates the vocabulary and `cfg.docs` documents with balanced labels.
/// Each document holds between `min_keywords` and `max_keywords` tokens
/// drawn from its class keywords; the rest are Zipf-distributed fillers
/// shared by all classes.
pub fn gen_corpus(cfg: &CorpusConfig) -> Result<(Vocabulary, Vec<BowSample>)> {
    cfg.validate()?;
    let n_kw = cfg.classes * cfg.keywords_per_class;
    let fillers: Vec<String> = (n_kw..cfg.vocab_size - 1).map(pseudo_word).collect();
    let oov: Vec<String> = (cfg.vocab_size..cfg.vocab_size + OOV_POOL)
        .map(pseudo_word)
        .collect();
    let vocab = Vocabulary::new((0..n_kw).map(pseudo_word).chain(fillers.iter().cloned()))?;
    let zipf = WeightedIndex::new((0..fillers.len()).map(|r| 1.0 / (r as f64 + 1.0)))
        .expect("nonempty filler pool");

    let mut rng = seed::rng_for(cfg.seed, seed::stream::DATA);
    let docs = (0..cfg.docs)
        .map(|i| {
            let label = i % cfg.classes;
            let keywords = cfg.keywords(label);
            let len = rng.gen_range(cfg.min_len..=cfg.max_len);
            let k = rng.gen_range(cfg.min_keywords..=cfg.max_keywords);
            let mut words: Vec<String> = (0..len)
                .map(|j| {
                    if j < k {
                        keywords[rng.gen_range(0..keywords.len())].clone()
                    } else if rng.gen_bool(cfg.oov_rate) {
                        oov[rng.gen_range(0..oov.len())].clone()
                    } else {
                        fillers[zipf.sample(&mut rng)].clone()
                    }
                })
                .collect();
            words.shuffle(&mut rng);
            BowSample {
                counts: vocab.histogram(&words),
                label,
                words,
            }
        })
        .collect();
    Ok((vocab, docs))
}

/// Reads UTF-8 lines `label<TAB>tok tok ...`. With `vocab` absent, builds
/// one from the `vocab_size - 1` most frequent tokens (ties by first
/// occurrence).
pub fn load_real_corpus(
    path: &Path,
    vocab: Option<Vocabulary>,
    vocab_size: usize,
) -> Result<(Vocabulary, Vec<BowSample>)> {
    let origin = path.display().to_string();
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| {
        LanError::format(&origin, e.valid_up_to() as u64, "corpus is not valid UTF-8")
    })?;
    let mut parsed = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let body = line.trim_end_matches(['\n', '\r']);
        if !body.trim().is_empty() {
            let (label, tokens) = body
                .split_once('\t')
                .ok_or_else(|| LanError::format(&origin, offset, "missing tab after label"))?;
            let label: usize = label
                .trim()
                .parse()
                .map_err(|_| LanError::format(&origin, offset, format!("bad label {label:?}")))?;
            let words: Vec<String> = tokens.split_whitespace().map(str::to_string).collect();
            if words.is_empty() {
                return Err(LanError::format(&origin, offset, "document has no tokens"));
            }
            parsed.push((label, words));
        }
        offset += line.len() as u64;
    }
    if parsed.is_empty() {
        return Err(LanError::format(&origin, 0, "corpus has no documents"));
    }

    let vocab = match vocab {
        Some(v) => v,
        None => {
            let mut freq: HashMap<&str, (usize, usize)> = HashMap::new();
            for w in parsed.iter().flat_map(|(_, ws)| ws) {
                let next = freq.len();
                freq.entry(w.as_str()).or_insert((0, next)).0 += 1;
            }
            freq.remove(UNK);
            let mut ranked: Vec<(&str, (usize, usize))> = freq.into_iter().collect();
            ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
            Vocabulary::new(
                ranked
                    .into_iter()
                    .take(vocab_size.saturating_sub(1))
                    .map(|(w, _)| w.to_string()),
            )?
        }
    };
    let docs = parsed
        .into_iter()
        .map(|(label, words)| BowSample {
            counts: vocab.histogram(&words),
            label,
            words,
        })
        .collect();
    Ok((vocab, docs))
}
