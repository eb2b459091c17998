use serde::Serialize;

use crate::data::Vocabulary;
use crate::diagnostics::align;
use crate::error::{LanError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WordRanking {
    /// `(token, importance)`, most important first.
    pub entries: Vec<(String, f32)>,
}

impl WordRanking {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(t, _)| t.as_str())
    }

    pub fn text(&self) -> String {
        let mut rows = vec![vec!["rank".into(), "token".into(), "importance".into()]];
        rows.extend(
            self.entries
                .iter()
                .enumerate()
                .map(|(i, (t, v))| vec![(i + 1).to_string(), t.clone(), format!("{v:.4}")]),
        );
        align(&rows)
    }
}

/// The `k` tokens with the highest importance; ties go to the lower index.
pub fn top_k_words(importance: &Tensor, vocab: &Vocabulary, k: usize) -> Result<WordRanking> {
    if importance.len() != vocab.len() {
        return Err(LanError::shape(
            "top-k words",
            format!("{} importances for {} tokens", importance.len(), vocab.len()),
        ));
    }
    if k > vocab.len() {
        return Err(LanError::Config(format!("k = {k} exceeds vocabulary size {}", vocab.len())));
    }
    let v = importance.data();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    Ok(WordRanking {
        entries: order[..k].iter().map(|&i| (vocab.token(i).to_string(), v[i])).collect(),
    })
}
