//! Minority-class synthesis for imbalanced tabular data with a residual,
//! packed, classifier-guided conditional tabular GAN, plus the downstream
//! evaluation harness (decision tree, random forest, MLP, G-mean).

pub mod atomic;
pub mod bench;
pub mod codec;
pub mod error;
pub mod gan;
pub mod grad;

pub use error::{Error, Result};
