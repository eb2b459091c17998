//! Latent attention masks for black-box neural classifiers.
//!
//! A small dense tensor library with reverse-mode differentiation backs
//! feed-forward classifiers. Attention masks are learned by blending inputs
//! with noise where the classifier's output is insensitive, exposing which
//! components it actually relies on.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod lan;
pub mod nn;
pub mod seed;
pub mod tensor;

pub use error::{LanError, Result};
pub use tensor::Tensor;
