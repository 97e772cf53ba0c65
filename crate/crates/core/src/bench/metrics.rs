use crate::error::{Error, Result};

/// Binary confusion counts with the minority class as positive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        Self { tp, fn_, fp, tn }
    }

    /// Tallies predictions against truth; `positive` is the class id
    /// counted as positive, every other id is negative.
    pub fn from_predictions(truth: &[usize], predicted: &[usize], positive: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::data(format!(
                "{} labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut c = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t == positive, p == positive) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn recall(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_) as f64
    }

    pub fn specificity(&self) -> f64 {
        self.tn as f64 / (self.tn + self.fp) as f64
    }
}

/// `sqrt(TPR * TNR)`.
pub fn g_mean(c: &ConfusionMatrix) -> Result<f64> {
    if c.tp + c.fn_ == 0 || c.tn + c.fp == 0 {
        return Err(Error::data("g_mean needs both classes in the test set"));
    }
    Ok((c.recall() * c.specificity()).sqrt())
}
