use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gan::cross_entropy_node;
use crate::grad::{AdamConfig, LayerKind, Mode, Net, ParamSet, Tape, Tensor2};

#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
            lr: 2e-4,
            epochs: 100,
            batch_size: 128,
        }
    }
}

/// Feed-forward classifier on standardized features.
#[derive(Clone, Debug)]
pub struct Mlp {
    net: Net,
    params: ParamSet,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

fn standardize(x: &Tensor2, mean: &[f64], scale: &[f64]) -> Tensor2 {
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = (*v - mean[c]) / scale[c];
        }
    }
    out
}

impl Mlp {
    pub fn fit<R: Rng + ?Sized>(x: &Tensor2, y: &[usize], cfg: &MlpConfig, rng: &mut R) -> Result<Self> {
        if x.rows() != y.len() || y.is_empty() {
            return Err(Error::data(format!("{} rows but {} labels", x.rows(), y.len())));
        }
        if cfg.batch_size == 0 {
            return Err(Error::Config("MLP batch_size must be positive".into()));
        }
        let classes = y.iter().max().map_or(2, |m| (m + 1).max(2));
        let (n, d) = x.shape();
        let mean = x.col_mean().into_vec();
        let scale: Vec<f64> = (0..d)
            .map(|c| {
                let var = (0..n).map(|r| (x.get(r, c) - mean[c]).powi(2)).sum::<f64>() / n as f64;
                if var > 1e-24 { var.sqrt() } else { 1.0 }
            })
            .collect();
        let xs = standardize(x, &mean, &scale);

        let mut layers = Vec::new();
        for &h in &cfg.hidden {
            layers.extend([LayerKind::Linear(h), LayerKind::Relu]);
        }
        layers.extend([LayerKind::Linear(classes), LayerKind::Softmax]);
        let net = Net::new("mlp", d, &layers)?;
        let mut params = net.init_params(rng);
        let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(cfg.batch_size) {
                let mut tape = Tape::new(Mode::Training);
                let xb = tape.constant(xs.select_rows(chunk))?;
                let labels: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
                let p = net.forward(&params, xb, &mut tape, rng)?;
                let loss = cross_entropy_node(&mut tape, p, &labels)?;
                let grads = tape.backward(loss)?;
                params.adam_step(grads.params(), &adam)?;
            }
        }
        Ok(Self { net, params, mean, scale })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn predict_proba(&self, x: &Tensor2) -> Result<Tensor2> {
        let mut tape = Tape::new(Mode::Inference);
        let xn = tape.constant(standardize(x, &self.mean, &self.scale))?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = self.net.forward(&self.params, xn, &mut tape, &mut rng)?;
        Ok(tape.value(p).clone())
    }

    pub fn predict(&self, x: &Tensor2) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok((0..p.rows()).map(|r| p.argmax_row(r)).collect())
    }
}
