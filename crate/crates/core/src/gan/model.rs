use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::GanConfig;
use super::loss::{cross_entropy_node, gradient_penalty, pack, pack_node};
use super::nets::{classifier_columns, Networks, Params};
use crate::codec::{
    decode, encode, ColumnMeta, CondVector, ConditionSampler, MatchIndex, SpanRole, Table,
    TableSchema,
};
use crate::error::{Error, Result};
use crate::grad::{argmax, Gradients, Mode, Net, NodeId, ParamSet, Tape, Tensor2};

/// Losses observed in one training step. `loss_c` is zero without a
/// classifier; `loss_g` is the full generator objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub loss_d: f64,
    pub loss_c: f64,
    pub loss_g: f64,
    pub gp: f64,
}

/// A trained (or freshly initialized) generator with the critic and
/// classifier it was trained against.
#[derive(Clone, Debug)]
pub struct Synthesizer {
    config: GanConfig,
    schema: TableSchema,
    nets: Networks,
    params: Params,
    seed: u64,
}

fn gumbel<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor2 {
    let mut t = Tensor2::zeros(rows, cols);
    for v in t.data_mut() {
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        *v = -(-u.ln()).ln();
    }
    t
}

fn hard_one_hot(x: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        out.set(r, argmax(x.row(r)), 1.0);
    }
    out
}

/// Keeps only gradients for blocks that `ps` owns.
fn owned(grads: Gradients, ps: &ParamSet) -> std::collections::BTreeMap<String, Tensor2> {
    grads
        .into_params()
        .into_iter()
        .filter(|(k, _)| ps.get(k).is_some())
        .collect()
}

fn commit_owned(ps: &mut ParamSet, updates: Vec<(String, Tensor2)>) {
    let mine = updates
        .into_iter()
        .filter(|(k, _)| ps.buffer(k).is_some())
        .collect();
    ps.commit_buffers(mine);
}

/// Drops the target one-hot slice from encoded rows.
fn strip_target(x: &Tensor2, start: usize, width: usize) -> Tensor2 {
    let rest = x.cols() - start - width;
    let head = x.slice_cols(0, start);
    let tail = x.slice_cols(start + width, rest);
    Tensor2::concat_cols(&[&head, &tail]).expect("same row count")
}

fn strip_target_node(tape: &mut Tape, x: NodeId, start: usize, width: usize) -> Result<NodeId> {
    let cols = tape.shape(x).1;
    let mut parts = Vec::new();
    if start > 0 {
        parts.push(tape.slice_cols(x, 0, start)?);
    }
    if start + width < cols {
        parts.push(tape.slice_cols(x, start + width, cols - start - width)?);
    }
    tape.concat(&parts)
}

impl Synthesizer {
    pub fn new(config: GanConfig, schema: TableSchema, seed: u64) -> Result<Self> {
        let nets = Networks::build(&config, &schema)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = nets.init(&mut rng);
        Ok(Self {
            config,
            schema,
            nets,
            params,
            seed,
        })
    }

    /// Reassembles a model from stored parts, checking every block shape.
    pub fn from_parts(config: GanConfig, schema: TableSchema, params: Params, seed: u64) -> Result<Self> {
        let nets = Networks::build(&config, &schema)?;
        nets.validate(&params)?;
        Ok(Self {
            config,
            schema,
            nets,
            params,
            seed,
        })
    }

    pub fn config(&self) -> &GanConfig {
        &self.config
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn networks(&self) -> &Networks {
        &self.nets
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Records the generator on `tape` for `conds.rows()` rows. Returns
    /// `(activated rows, raw logits)`. α slices go through `tanh`; one-hot
    /// slices through Gumbel-softmax, or are snapped to argmax when `hard`.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        conds: &Tensor2,
        hard: bool,
        tape: &mut Tape,
        rng: &mut R,
    ) -> Result<(NodeId, NodeId)> {
        let n = conds.rows();
        let mut z = Tensor2::zeros(n, self.config.noise_dim);
        for v in z.data_mut() {
            *v = rng.sample(StandardNormal);
        }
        let input = Tensor2::concat_cols(&[&z, conds])?;
        let x = tape.constant(input)?;
        let logits = self.nets.generator.forward(&self.params.generator, x, tape, rng)?;
        let mut parts = Vec::new();
        for span in self.schema.spans() {
            let s = tape.slice_cols(logits, span.offset, span.width)?;
            let a = if span.role == SpanRole::Alpha {
                tape.tanh(s)?
            } else if hard {
                let snapped = hard_one_hot(tape.value(s));
                tape.constant(snapped)?
            } else {
                let g = tape.constant(gumbel(n, span.width, rng))?;
                let noisy = tape.add(s, g)?;
                let scaled = tape.scale(noisy, 1.0 / self.config.gumbel_tau)?;
                tape.softmax(scaled)?
            };
            parts.push(a);
        }
        Ok((tape.concat(&parts)?, logits))
    }

    /// Generates `count` rows. With `class`, every row is conditioned on
    /// that target category and its target cell is set to it; otherwise
    /// target conditions follow the training class frequencies.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, class: Option<&str>, rng: &mut R) -> Result<Table> {
        let sampler = ConditionSampler::new(&self.schema)?;
        let t = self.schema.target_index();
        let slot = sampler.slot_of_column(t).expect("target is discrete");
        let fixed = match class {
            Some(c) => Some(self.schema.class_id(c).ok_or_else(|| Error::UnknownCategory {
                column: self.schema.target_name().to_string(),
                value: c.to_string(),
            })?),
            None => None,
        };
        let freqs = self.schema.columns()[t].frequencies().expect("target is discrete");
        let (t_off, t_width) = classifier_columns(&self.schema);
        let mut chunks = Vec::new();
        let mut left = count;
        while left > 0 {
            let n = left.min(self.config.batch_size);
            left -= n;
            let mut conds = Tensor2::zeros(n, sampler.width());
            let mut classes = Vec::with_capacity(n);
            for r in 0..n {
                let k = fixed.unwrap_or_else(|| {
                    let mut u: f64 = rng.random();
                    freqs
                        .iter()
                        .position(|&f| {
                            u -= f;
                            u < 0.0
                        })
                        .unwrap_or(freqs.len() - 1)
                });
                conds.set(r, sampler.fixed(slot, k).hot, 1.0);
                classes.push(k);
            }
            let mut tape = Tape::new(Mode::Inference);
            let (rows, _) = self.generate(&conds, true, &mut tape, rng)?;
            let mut rows = tape.value(rows).clone();
            if fixed.is_some() {
                for (r, &k) in classes.iter().enumerate() {
                    let row = &mut rows.row_mut(r)[t_off..t_off + t_width];
                    row.fill(0.0);
                    row[k] = 1.0;
                }
            }
            chunks.push(rows);
        }
        let all = if chunks.is_empty() {
            Tensor2::zeros(0, self.schema.encoded_width())
        } else {
            Tensor2::concat_rows(&chunks.iter().collect::<Vec<_>>())?
        };
        decode(&all, &self.schema)
    }
}

/// Runs alternating critic, classifier and generator updates over an
/// encoded training table.
pub struct Trainer {
    model: Synthesizer,
    data: Tensor2,
    labels: Vec<usize>,
    sampler: ConditionSampler,
    index: MatchIndex,
    rng: ChaCha8Rng,
    step: usize,
    steps_per_epoch: usize,
}

impl Trainer {
    pub fn new(table: &Table, schema: TableSchema, config: GanConfig, seed: u64) -> Result<Self> {
        let model = Synthesizer::new(config, schema, seed)?;
        let schema = &model.schema;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let data = encode(table, schema, &mut rng)?.data;
        let ColumnMeta::Discrete { categories, .. } = &schema.columns()[schema.target_index()] else {
            unreachable!("target is discrete")
        };
        let labels = table
            .discrete(schema.target_name())?
            .iter()
            .map(|v| categories.iter().position(|c| c == v).expect("encode checked categories"))
            .collect();
        let sampler = ConditionSampler::new(schema)?;
        let index = MatchIndex::build(table, schema)?;
        let steps_per_epoch = (table.n_rows() / model.config.batch_size).max(1);
        Ok(Self {
            model,
            data,
            labels,
            sampler,
            index,
            rng,
            step: 0,
            steps_per_epoch,
        })
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.steps_per_epoch
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_epoch * self.model.config.epochs
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn model(&self) -> &Synthesizer {
        &self.model
    }

    pub fn into_model(self) -> Synthesizer {
        self.model
    }

    /// One critic update, one classifier update (when present) and one
    /// generator update. Any non-finite value becomes
    /// [`Error::Divergence`] tagged with the step number.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let step = self.step + 1;
        let m = self.try_step(step).map_err(|e| match e {
            Error::NonFinite(detail) => Error::Divergence { step, detail },
            e => e,
        })?;
        for v in [m.loss_d, m.loss_c, m.loss_g, m.gp] {
            if !v.is_finite() {
                return Err(Error::Divergence {
                    step,
                    detail: "non-finite loss".into(),
                });
            }
        }
        self.step = step;
        Ok(m)
    }

    fn conditions(&mut self) -> (Vec<CondVector>, Tensor2) {
        let n = self.model.config.batch_size;
        let mut c = Tensor2::zeros(n, self.sampler.width());
        let conds: Vec<CondVector> = (0..n).map(|_| self.sampler.sample(&mut self.rng)).collect();
        for (r, cv) in conds.iter().enumerate() {
            c.set(r, cv.hot, 1.0);
        }
        (conds, c)
    }

    fn try_step(&mut self, step: usize) -> Result<StepMetrics> {
        let cfg = self.model.config.clone();
        let adam = cfg.adam();
        let pac = cfg.pac;
        let n_classes = self.model.schema.target_categories().len();
        let target_slot = self
            .sampler
            .slot_of_column(self.model.schema.target_index())
            .expect("target is discrete");
        let (t_off, t_width) = classifier_columns(&self.model.schema);

        // Critic.
        let (conds, c) = self.conditions();
        let ids = conds
            .iter()
            .map(|cv| self.index.draw_one(cv, &mut self.rng))
            .collect::<Result<Vec<_>>>()?;
        let real = self.data.select_rows(&ids);
        let mut tg = Tape::new(Mode::Training);
        let (fake, _) = self.model.generate(&c, false, &mut tg, &mut self.rng)?;
        let fake = tg.value(fake).clone();
        commit_owned(&mut self.model.params.generator, tg.take_buffer_updates());

        let real_p = pack(&Tensor2::concat_cols(&[&real, &c])?, pac)?;
        let fake_p = pack(&Tensor2::concat_cols(&[&fake, &c])?, pac)?;
        let critic = &self.model.nets.critic;
        let mut td = Tape::new(Mode::Training);
        let xr = td.constant(real_p.clone())?;
        let xf = td.constant(fake_p.clone())?;
        let (yr, yf) = critic_pair(critic, &self.model.params.critic, xr, xf, &mut td, &mut self.rng)?;
        let mr = td.mean(yr)?;
        let mf = td.mean(yf)?;
        let ld = td.sub(mf, mr)?;
        let gp = gradient_penalty(
            critic,
            &self.model.params.critic,
            &real_p,
            &fake_p,
            cfg.gp_lambda,
            &mut td,
            &mut self.rng,
        )?;
        let total = td.add(ld, gp)?;
        let (loss_d, gp_value) = (td.value(ld).item(), td.value(gp).item());
        let grads = owned(td.backward(total)?, &self.model.params.critic);
        self.model.params.critic.adam_step(&grads, &adam)?;
        commit_owned(&mut self.model.params.critic, td.take_buffer_updates());

        // Classifier: real rows keep their class, generated rows get the
        // extra synthetic class.
        let mut loss_c = 0.0;
        if let (Some(net), Some(ps)) = (&self.model.nets.classifier, &mut self.model.params.classifier) {
            let x = Tensor2::concat_rows(&[
                &strip_target(&real, t_off, t_width),
                &strip_target(&fake, t_off, t_width),
            ])?;
            let mut labels: Vec<usize> = ids.iter().map(|&i| self.labels[i]).collect();
            labels.extend(std::iter::repeat_n(n_classes, fake.rows()));
            let mut tc = Tape::new(Mode::Training);
            let xn = tc.constant(x)?;
            let p = net.forward(ps, xn, &mut tc, &mut self.rng)?;
            let lc = cross_entropy_node(&mut tc, p, &labels)?;
            loss_c = tc.value(lc).item();
            let grads = owned(tc.backward(lc)?, ps);
            ps.adam_step(&grads, &adam)?;
        }

        // Generator.
        let (conds, c) = self.conditions();
        let n = conds.len();
        let mut tape = Tape::new(Mode::Training);
        let ids = conds
            .iter()
            .map(|cv| self.index.draw_one(cv, &mut self.rng))
            .collect::<Result<Vec<_>>>()?;
        let real_p = pack(&Tensor2::concat_cols(&[&self.data.select_rows(&ids), &c])?, pac)?;
        let (fake, logits) = self.model.generate(&c, false, &mut tape, &mut self.rng)?;
        let cn = tape.constant(c)?;
        let joined = tape.concat(&[fake, cn])?;
        let packed = pack_node(&mut tape, joined, pac)?;
        let xr = tape.constant(real_p)?;
        let (_, y) = critic_pair(
            &self.model.nets.critic,
            &self.model.params.critic,
            xr,
            packed,
            &mut tape,
            &mut self.rng,
        )?;
        let my = tape.mean(y)?;
        let mut objective = tape.scale(my, -1.0)?;

        // Condition consistency: cross-entropy of the selected column's
        // raw logits against the requested category.
        let mut cond_terms = Vec::new();
        for (s, slot) in self.sampler.slots().iter().enumerate() {
            let chosen: Vec<usize> = (0..n).filter(|&r| conds[r].slot == s).collect();
            if chosen.is_empty() {
                continue;
            }
            let mut target = Tensor2::zeros(n, slot.width);
            for &r in &chosen {
                target.set(r, conds[r].category, 1.0);
            }
            let off = self.model.schema.column_offset(slot.column);
            let sl = tape.slice_cols(logits, off, slot.width)?;
            let p = tape.softmax(sl)?;
            let lp = tape.log(p)?;
            let t = tape.constant(target)?;
            let picked = tape.mul(lp, t)?;
            cond_terms.push(tape.sum(picked)?);
        }
        for term in cond_terms {
            let scaled = tape.scale(term, -1.0 / n as f64)?;
            objective = tape.add(objective, scaled)?;
        }

        if let (Some(net), Some(ps)) = (&self.model.nets.classifier, &self.model.params.classifier) {
            let labels: Vec<usize> = conds
                .iter()
                .zip(&ids)
                .map(|(cv, &i)| if cv.slot == target_slot { cv.category } else { self.labels[i] })
                .collect();
            let x = strip_target_node(&mut tape, fake, t_off, t_width)?;
            let p = net.forward(ps, x, &mut tape, &mut self.rng)?;
            let lc = cross_entropy_node(&mut tape, p, &labels)?;
            objective = tape.add(objective, lc)?;
        }
        let loss_g = tape.value(objective).item();
        let grads = owned(tape.backward(objective)?, &self.model.params.generator);
        self.model.params.generator.adam_step(&grads, &adam)?;
        commit_owned(&mut self.model.params.generator, tape.take_buffer_updates());

        Ok(StepMetrics {
            step,
            loss_d,
            loss_c,
            loss_g,
            gp: gp_value,
        })
    }
}

/// Scores real and fake packs in one interleaved batch so batch
/// normalization sees both, then splits the scores apart again.
fn critic_pair<R: Rng + ?Sized>(
    critic: &Net,
    params: &ParamSet,
    real: NodeId,
    fake: NodeId,
    tape: &mut Tape,
    rng: &mut R,
) -> Result<(NodeId, NodeId)> {
    let (m, w) = tape.shape(real);
    let both = tape.concat(&[real, fake])?;
    let rows = tape.reshape(both, 2 * m, w)?;
    let y = critic.forward(params, rows, tape, rng)?;
    let y = tape.reshape(y, m, 2)?;
    Ok((tape.slice_cols(y, 0, 1)?, tape.slice_cols(y, 1, 1)?))
}

/// Trains for `config.epochs` epochs of `max(1, rows / batch_size)` steps,
/// reporting every step to `on_step`.
pub fn fit(
    table: &Table,
    schema: TableSchema,
    config: GanConfig,
    seed: u64,
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<Synthesizer> {
    let mut trainer = Trainer::new(table, schema, config, seed)?;
    for _ in 0..trainer.total_steps() {
        let m = trainer.step()?;
        on_step(&m);
    }
    Ok(trainer.into_model())
}

