use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{LanError, Result};
use crate::seed::{self, Rng};
use crate::tensor::Tensor;

/// Which distribution corruption vectors come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Every component equal to `value`.
    Constant { value: f32 },
    /// A uniformly chosen input from the training set.
    Bootstrap,
    /// Independent `Uniform[lo, hi)` components.
    Uniform { lo: f32, hi: f32 },
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::Constant { value } => write!(f, "constant:{value}"),
            NoiseKind::Bootstrap => write!(f, "bootstrap"),
            NoiseKind::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
        }
    }
}

impl FromStr for NoiseKind {
    type Err = LanError;

    /// `constant:C`, `bootstrap`, or `uniform:LO,HI`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            LanError::Config(format!(
                "unknown noise '{s}' (expected constant:C, bootstrap or uniform:LO,HI)"
            ))
        };
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        match name {
            "bootstrap" if arg.is_empty() => Ok(NoiseKind::Bootstrap),
            "constant" => Ok(NoiseKind::Constant {
                value: arg.trim().parse().map_err(|_| bad())?,
            }),
            "uniform" => {
                let (lo, hi) = arg.split_once(',').ok_or_else(bad)?;
                Ok(NoiseKind::Uniform {
                    lo: lo.trim().parse().map_err(|_| bad())?,
                    hi: hi.trim().parse().map_err(|_| bad())?,
                })
            }
            _ => Err(bad()),
        }
    }
}

/// A seeded stream of corruption vectors of one shape.
pub struct NoiseSource<'a> {
    kind: NoiseKind,
    shape: Vec<usize>,
    pool: &'a [Tensor],
    rng: Rng,
}

impl<'a> NoiseSource<'a> {
    /// `pool` is only consulted for bootstrap noise and must then be
    /// non-empty with every element of `shape`.
    pub fn new(kind: NoiseKind, shape: &[usize], pool: &'a [Tensor], seed: u64) -> Result<Self> {
        match kind {
            NoiseKind::Bootstrap => {
                if pool.is_empty() {
                    return Err(LanError::Contract(
                        "bootstrap noise needs a non-empty dataset".into(),
                    ));
                }
                if let Some(bad) = pool.iter().find(|t| t.shape() != shape) {
                    return Err(LanError::shape(
                        "bootstrap noise",
                        format!("pool element {:?} vs input {shape:?}", bad.shape()),
                    ));
                }
            }
            NoiseKind::Uniform { lo, hi } if !(lo < hi) => {
                return Err(LanError::Config(format!(
                    "uniform noise needs lo < hi, got [{lo}, {hi})"
                )));
            }
            NoiseKind::Constant { value } if !value.is_finite() => {
                return Err(LanError::Config("constant noise must be finite".into()));
            }
            _ => {}
        }
        Ok(NoiseSource {
            kind,
            shape: shape.to_vec(),
            pool,
            rng: seed::rng_for(seed, seed::stream::NOISE),
        })
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn sample(&mut self) -> Tensor {
        match self.kind {
            NoiseKind::Constant { value } => Tensor::full(&self.shape, value),
            NoiseKind::Bootstrap => {
                let i = self.rng.gen_range(0..self.pool.len());
                self.pool[i].clone()
            }
            NoiseKind::Uniform { lo, hi } => {
                let n: usize = self.shape.iter().product();
                let data = (0..n).map(|_| self.rng.gen_range(lo..hi)).collect();
                Tensor::new(self.shape.clone(), data).expect("shape from product")
            }
        }
    }

    /// `n` draws stacked into `(n, ..shape)`.
    pub fn sample_batch(&mut self, n: usize) -> Tensor {
        let draws: Vec<Tensor> = (0..n).map(|_| self.sample()).collect();
        let refs: Vec<&Tensor> = draws.iter().collect();
        Tensor::stack(&refs).expect("equal shapes")
    }
}
