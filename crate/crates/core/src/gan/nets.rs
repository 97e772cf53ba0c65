use rand::Rng;

use super::config::{GanConfig, GanMode};
use crate::codec::TableSchema;
use crate::error::Result;
use crate::grad::{LayerKind, Net, ParamSet};

pub const GENERATOR: &str = "generator";
pub const CRITIC: &str = "critic";
pub const CLASSIFIER: &str = "classifier";

/// Generator: noise and condition in, raw encoded-width logits out.
/// Each hidden block is `concat(x, relu(bn(linear(x))))`.
pub fn generator(cfg: &GanConfig, schema: &TableSchema) -> Result<Net> {
    let mut layers: Vec<LayerKind> = cfg
        .generator_dims
        .iter()
        .map(|&d| {
            LayerKind::Concat(vec![LayerKind::Linear(d), LayerKind::BatchNorm1d, LayerKind::Relu])
        })
        .collect();
    layers.push(LayerKind::Linear(schema.encoded_width()));
    Net::new(GENERATOR, cfg.noise_dim + schema.cond_width(), &layers)
}

/// Critic over `pac` packed rows of `(encoded row, condition)`.
pub fn critic(cfg: &GanConfig, schema: &TableSchema) -> Result<Net> {
    let in_dim = cfg.pac * (schema.encoded_width() + schema.cond_width());
    let mut layers: Vec<LayerKind> = Vec::new();
    for &d in &cfg.critic_dims {
        if cfg.residual_critic() {
            layers.push(LayerKind::Concat(vec![
                LayerKind::Linear(d),
                LayerKind::BatchNorm1d,
                LayerKind::Relu,
            ]));
        } else {
            layers.extend([
                LayerKind::Linear(d),
                LayerKind::LeakyRelu(cfg.leaky_alpha),
                LayerKind::Dropout(0.5),
            ]);
        }
    }
    layers.push(LayerKind::Linear(1));
    Net::new(CRITIC, in_dim, &layers)
}

/// Columns of an encoded row the classifier sees: everything except the
/// target one-hot slice, which would otherwise give the label away.
pub fn classifier_columns(schema: &TableSchema) -> (usize, usize) {
    let t = schema.target_index();
    let start = schema.column_offset(t);
    let width = schema.columns()[t].encoded_width();
    (start, width)
}

/// Classifier over `N` real classes plus one synthetic class.
pub fn classifier(cfg: &GanConfig, schema: &TableSchema) -> Result<Net> {
    let (_, target_width) = classifier_columns(schema);
    let mut layers = Vec::new();
    for &d in &cfg.classifier_dims {
        layers.extend([
            LayerKind::Linear(d),
            LayerKind::LeakyRelu(cfg.leaky_alpha),
            LayerKind::Dropout(cfg.classifier_dropout),
        ]);
    }
    layers.push(LayerKind::Linear(schema.target_categories().len() + 1));
    layers.push(LayerKind::Softmax);
    Net::new(CLASSIFIER, schema.encoded_width() - target_width, &layers)
}

/// The three networks for a config and schema. `classifier` is `None`
/// in ctgan mode.
#[derive(Clone, Debug)]
pub struct Networks {
    pub generator: Net,
    pub critic: Net,
    pub classifier: Option<Net>,
}

impl Networks {
    pub fn build(cfg: &GanConfig, schema: &TableSchema) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            generator: generator(cfg, schema)?,
            critic: critic(cfg, schema)?,
            classifier: match cfg.mode {
                GanMode::Rctgan => Some(classifier(cfg, schema)?),
                GanMode::Ctgan => None,
            },
        })
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Params {
        Params {
            generator: self.generator.init_params(rng),
            critic: self.critic.init_params(rng),
            classifier: self.classifier.as_ref().map(|c| c.init_params(rng)),
        }
    }

    pub fn validate(&self, p: &Params) -> Result<()> {
        self.generator.validate_params(&p.generator)?;
        self.critic.validate_params(&p.critic)?;
        match (&self.classifier, &p.classifier) {
            (Some(net), Some(ps)) => net.validate_params(ps),
            (None, None) => Ok(()),
            _ => Err(crate::Error::Checkpoint(
                "classifier parameters do not match the mode".into(),
            )),
        }
    }
}

/// Parameter sets, each with its own Adam state.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub generator: ParamSet,
    pub critic: ParamSet,
    pub classifier: Option<ParamSet>,
}

