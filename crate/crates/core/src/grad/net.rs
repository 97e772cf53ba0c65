//! Sequential networks described by [`LayerKind`] lists.
//!
//! A [`LayerKind::Concat`] layer evaluates its body on the incoming
//! activations and emits `concat(x, body(x))`, which is how the residual
//! blocks of the generator and critic grow their width.

use rand::Rng;

use super::optim::ParamSet;
use super::tape::{Mode, NodeId, Tape};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Linear(usize),
    BatchNorm1d,
    Relu,
    LeakyRelu(f64),
    Dropout(f64),
    Softmax,
    Tanh,
    Concat(Vec<LayerKind>),
}

/// A layer with resolved dimensions and parameter path.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    path: String,
    body: Vec<LayerSpec>,
}

impl LayerSpec {
    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn body(&self) -> &[LayerSpec] {
        &self.body
    }

    fn weight(&self) -> String {
        format!("{}.weight", self.path)
    }

    fn bias(&self) -> String {
        format!("{}.bias", self.path)
    }

    fn gamma(&self) -> String {
        format!("{}.gamma", self.path)
    }

    fn beta(&self) -> String {
        format!("{}.beta", self.path)
    }

    fn running_mean(&self) -> String {
        format!("{}.running_mean", self.path)
    }

    fn running_var(&self) -> String {
        format!("{}.running_var", self.path)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    name: String,
    in_dim: usize,
    layers: Vec<LayerSpec>,
}

/// Saved activations needed to unroll the input gradient.
enum Trace {
    Linear { weight: NodeId },
    BatchNormTrain { xhat: NodeId, inv_std: NodeId, gamma: NodeId },
    BatchNormInfer { scale: NodeId },
    Relu { pre: NodeId },
    LeakyRelu { pre: NodeId, alpha: f64 },
    Dropout { mask: NodeId },
    Tanh { out: NodeId },
    Softmax,
    Concat { in_dim: usize, body: Vec<Trace> },
}

fn resolve(prefix: &str, in_dim: usize, kinds: &[LayerKind]) -> Result<Vec<LayerSpec>> {
    let mut dim = in_dim;
    let mut out = Vec::with_capacity(kinds.len());
    for (i, kind) in kinds.iter().enumerate() {
        let path = format!("{prefix}.{i}");
        let (out_dim, body) = match kind {
            LayerKind::Linear(n) => {
                if *n == 0 {
                    return Err(Error::Config(format!("{path}: zero-width linear layer")));
                }
                (*n, Vec::new())
            }
            LayerKind::LeakyRelu(a) | LayerKind::Dropout(a) if !(*a > 0.0 && *a < 1.0) => {
                return Err(Error::Config(format!("{path}: {kind:?} rate must be in (0,1)")));
            }
            LayerKind::Concat(inner) => {
                let body = resolve(&path, dim, inner)?;
                let inner_out = body.last().map_or(dim, |l| l.out_dim);
                (dim + inner_out, body)
            }
            _ => (dim, Vec::new()),
        };
        if dim == 0 {
            return Err(Error::Config(format!("{path}: zero input width")));
        }
        out.push(LayerSpec {
            kind: kind.clone(),
            in_dim: dim,
            out_dim,
            path,
            body,
        });
        dim = out_dim;
    }
    Ok(out)
}

impl Net {
    pub fn new(name: &str, in_dim: usize, kinds: &[LayerKind]) -> Result<Self> {
        if in_dim == 0 {
            return Err(Error::Config(format!("{name}: zero input width")));
        }
        Ok(Self {
            name: name.to_string(),
            in_dim,
            layers: resolve(name, in_dim, kinds)?,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(self.in_dim, |l| l.out_dim)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Input width followed by the output width of every top-level layer
    /// that changes width.
    pub fn width_profile(&self) -> Vec<usize> {
        let mut dims = vec![self.in_dim];
        for l in &self.layers {
            if l.out_dim != *dims.last().unwrap() {
                dims.push(l.out_dim);
            }
        }
        dims
    }

    /// Fresh parameters: linear weights uniform in `±sqrt(1/in_dim)`, zero
    /// biases, unit batch-norm scale.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamSet {
        let mut ps = ParamSet::new();
        fn walk<R: Rng + ?Sized>(layers: &[LayerSpec], ps: &mut ParamSet, rng: &mut R) {
            for l in layers {
                match &l.kind {
                    LayerKind::Linear(n) => {
                        let bound = (1.0 / l.in_dim as f64).sqrt();
                        ps.insert(l.weight(), Tensor2::random_uniform(l.in_dim, *n, bound, rng));
                        ps.insert(l.bias(), Tensor2::zeros(1, *n));
                    }
                    LayerKind::BatchNorm1d => {
                        ps.insert(l.gamma(), Tensor2::ones(1, l.in_dim));
                        ps.insert(l.beta(), Tensor2::zeros(1, l.in_dim));
                        ps.insert_buffer(l.running_mean(), Tensor2::zeros(1, l.in_dim));
                        ps.insert_buffer(l.running_var(), Tensor2::ones(1, l.in_dim));
                    }
                    LayerKind::Concat(_) => walk(&l.body, ps, rng),
                    _ => {}
                }
            }
        }
        walk(&self.layers, &mut ps, rng);
        ps
    }

    /// Checks that `params` carries every block and buffer with the right shape.
    pub fn validate_params(&self, params: &ParamSet) -> Result<()> {
        fn expect(params: &ParamSet, name: &str, shape: (usize, usize), buffer: bool) -> Result<()> {
            let t = if buffer {
                params.buffer(name)
            } else {
                params.get(name)
            };
            match t {
                Some(t) if t.shape() == shape => Ok(()),
                Some(t) => Err(Error::Checkpoint(format!(
                    "block {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                ))),
                None => Err(Error::Checkpoint(format!("missing block {name}"))),
            }
        }
        fn walk(layers: &[LayerSpec], params: &ParamSet) -> Result<()> {
            for l in layers {
                match &l.kind {
                    LayerKind::Linear(n) => {
                        expect(params, &l.weight(), (l.in_dim, *n), false)?;
                        expect(params, &l.bias(), (1, *n), false)?;
                    }
                    LayerKind::BatchNorm1d => {
                        expect(params, &l.gamma(), (1, l.in_dim), false)?;
                        expect(params, &l.beta(), (1, l.in_dim), false)?;
                        expect(params, &l.running_mean(), (1, l.in_dim), true)?;
                        expect(params, &l.running_var(), (1, l.in_dim), true)?;
                    }
                    LayerKind::Concat(_) => walk(&l.body, params)?,
                    _ => {}
                }
            }
            Ok(())
        }
        walk(&self.layers, params)
    }

    /// Records the network on `tape`. Batch norm uses batch statistics and
    /// dropout is active only in [`Mode::Training`].
    pub fn forward<R: Rng + ?Sized>(
        &self,
        params: &ParamSet,
        x: NodeId,
        tape: &mut Tape,
        rng: &mut R,
    ) -> Result<NodeId> {
        self.forward_traced(params, x, tape, rng).map(|(y, _)| y)
    }

    /// Runs the network and then builds `d(sum of outputs)/dx` from
    /// differentiable primitives on the same tape. Returns `(output, grad)`.
    ///
    /// Backpropagating a function of the returned gradient reaches the
    /// network parameters, which is what a gradient penalty needs.
    pub fn input_gradient_graph<R: Rng + ?Sized>(
        &self,
        params: &ParamSet,
        x: NodeId,
        tape: &mut Tape,
        rng: &mut R,
    ) -> Result<(NodeId, NodeId)> {
        let (y, trace) = self.forward_traced(params, x, tape, rng)?;
        let (n, d) = tape.shape(y);
        let seed = tape.constant(Tensor2::ones(n, d))?;
        let g = unroll(&trace, seed, tape)?;
        Ok((y, g))
    }

    fn forward_traced<R: Rng + ?Sized>(
        &self,
        params: &ParamSet,
        x: NodeId,
        tape: &mut Tape,
        rng: &mut R,
    ) -> Result<(NodeId, Vec<Trace>)> {
        let (_, cols) = tape.shape(x);
        if cols != self.in_dim {
            return Err(Error::shape(
                "forward",
                format!("{} expects width {}, got {cols}", self.name, self.in_dim),
            ));
        }
        run_layers(&self.layers, params, x, tape, rng)
    }
}

fn run_layers<R: Rng + ?Sized>(
    layers: &[LayerSpec],
    params: &ParamSet,
    mut x: NodeId,
    tape: &mut Tape,
    rng: &mut R,
) -> Result<(NodeId, Vec<Trace>)> {
    let mut trace = Vec::with_capacity(layers.len());
    for l in layers {
        let (y, t) = run_layer(l, params, x, tape, rng)?;
        trace.push(t);
        x = y;
    }
    Ok((x, trace))
}

fn run_layer<R: Rng + ?Sized>(
    l: &LayerSpec,
    params: &ParamSet,
    x: NodeId,
    tape: &mut Tape,
    rng: &mut R,
) -> Result<(NodeId, Trace)> {
    Ok(match &l.kind {
        LayerKind::Linear(_) => {
            let w = tape.param(params, &l.weight())?;
            let b = tape.param(params, &l.bias())?;
            let xw = tape.matmul(x, w)?;
            (tape.add_row(xw, b)?, Trace::Linear { weight: w })
        }
        LayerKind::BatchNorm1d => {
            let gamma = tape.param(params, &l.gamma())?;
            let beta = tape.param(params, &l.beta())?;
            match tape.mode() {
                Mode::Training => {
                    let mu = tape.col_mean(x)?;
                    let neg_mu = tape.scale(mu, -1.0)?;
                    let xc = tape.add_row(x, neg_mu)?;
                    let sq = tape.mul(xc, xc)?;
                    let var = tape.col_mean(sq)?;
                    let var_eps = tape.add_scalar(var, BN_EPS)?;
                    let inv_std = tape.powf(var_eps, -0.5)?;
                    let xhat = tape.mul_row(xc, inv_std)?;
                    let scaled = tape.mul_row(xhat, gamma)?;
                    let y = tape.add_row(scaled, beta)?;

                    let n = tape.shape(x).0 as f64;
                    let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                    let rm = running(params, &l.running_mean())?;
                    let rv = running(params, &l.running_var())?;
                    let new_rm =
                        rm.zip_map(tape.value(mu), |r, m| BN_MOMENTUM * r + (1.0 - BN_MOMENTUM) * m);
                    let new_rv = rv.zip_map(tape.value(var), |r, v| {
                        BN_MOMENTUM * r + (1.0 - BN_MOMENTUM) * v * unbias
                    });
                    tape.record_buffer(l.running_mean(), new_rm);
                    tape.record_buffer(l.running_var(), new_rv);
                    (y, Trace::BatchNormTrain { xhat, inv_std, gamma })
                }
                Mode::Inference => {
                    let rm = running(params, &l.running_mean())?;
                    let rv = running(params, &l.running_var())?;
                    let shift = tape.constant(rm.map(|m| -m))?;
                    let inv = tape.constant(rv.map(|v| 1.0 / (v + BN_EPS).sqrt()))?;
                    let xc = tape.add_row(x, shift)?;
                    let xhat = tape.mul_row(xc, inv)?;
                    let scaled = tape.mul_row(xhat, gamma)?;
                    let y = tape.add_row(scaled, beta)?;
                    let scale = tape.mul(inv, gamma)?;
                    (y, Trace::BatchNormInfer { scale })
                }
            }
        }
        LayerKind::Relu => (tape.relu(x)?, Trace::Relu { pre: x }),
        LayerKind::LeakyRelu(alpha) => (
            tape.leaky_relu(x, *alpha)?,
            Trace::LeakyRelu {
                pre: x,
                alpha: *alpha,
            },
        ),
        LayerKind::Dropout(p) => {
            let (n, d) = tape.shape(x);
            let keep = 1.0 - p;
            let m = match tape.mode() {
                Mode::Training => {
                    let data = (0..n * d)
                        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    Tensor2::from_vec(n, d, data)?
                }
                Mode::Inference => Tensor2::ones(n, d),
            };
            let mask = tape.constant(m)?;
            (tape.mul(x, mask)?, Trace::Dropout { mask })
        }
        LayerKind::Softmax => (tape.softmax(x)?, Trace::Softmax),
        LayerKind::Tanh => {
            let y = tape.tanh(x)?;
            (y, Trace::Tanh { out: y })
        }
        LayerKind::Concat(_) => {
            let (inner, body) = run_layers(&l.body, params, x, tape, rng)?;
            (
                tape.concat(&[x, inner])?,
                Trace::Concat {
                    in_dim: l.in_dim,
                    body,
                },
            )
        }
    })
}

fn running<'a>(params: &'a ParamSet, name: &str) -> Result<&'a Tensor2> {
    params
        .buffer(name)
        .ok_or_else(|| Error::Config(format!("missing buffer {name}")))
}

/// Pulls `g = dL/d(output)` back through the traced layers.
fn unroll(trace: &[Trace], mut g: NodeId, tape: &mut Tape) -> Result<NodeId> {
    for t in trace.iter().rev() {
        g = match t {
            Trace::Linear { weight } => {
                let wt = tape.transpose(*weight)?;
                tape.matmul(g, wt)?
            }
            Trace::BatchNormTrain {
                xhat,
                inv_std,
                gamma,
            } => {
                // dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
                let dxhat = tape.mul_row(g, *gamma)?;
                let m1 = tape.col_mean(dxhat)?;
                let neg_m1 = tape.scale(m1, -1.0)?;
                let centered = tape.add_row(dxhat, neg_m1)?;
                let prod = tape.mul(dxhat, *xhat)?;
                let m2 = tape.col_mean(prod)?;
                let proj = tape.mul_row(*xhat, m2)?;
                let diff = tape.sub(centered, proj)?;
                tape.mul_row(diff, *inv_std)?
            }
            Trace::BatchNormInfer { scale } => tape.mul_row(g, *scale)?,
            Trace::Relu { pre } => tape.relu_mask(g, *pre, 0.0)?,
            Trace::LeakyRelu { pre, alpha } => tape.relu_mask(g, *pre, *alpha)?,
            Trace::Dropout { mask } => tape.mul(g, *mask)?,
            Trace::Tanh { out } => {
                let sq = tape.mul(*out, *out)?;
                let neg = tape.scale(sq, -1.0)?;
                let deriv = tape.add_scalar(neg, 1.0)?;
                tape.mul(g, deriv)?
            }
            Trace::Softmax => return Err(Error::NoInputGradient("softmax")),
            Trace::Concat { in_dim, body } => {
                let total = tape.shape(g).1;
                let direct = tape.slice_cols(g, 0, *in_dim)?;
                let through = tape.slice_cols(g, *in_dim, total - in_dim)?;
                let inner = unroll(body, through, tape)?;
                tape.add(direct, inner)?
            }
        };
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    #[test]
    fn concat_dims_grow() {
        let net = Net::new(
            "g",
            130,
            &[
                LayerKind::Concat(vec![
                    LayerKind::Linear(256),
                    LayerKind::BatchNorm1d,
                    LayerKind::Relu,
                ]),
                LayerKind::Concat(vec![
                    LayerKind::Linear(256),
                    LayerKind::BatchNorm1d,
                    LayerKind::Relu,
                ]),
                LayerKind::Linear(69),
            ],
        )
        .unwrap();
        assert_eq!(net.width_profile(), vec![130, 386, 642, 69]);
    }

    #[test]
    fn rates_validated() {
        assert!(Net::new("n", 3, &[LayerKind::Dropout(1.0)]).is_err());
        assert!(Net::new("n", 3, &[LayerKind::LeakyRelu(0.0)]).is_err());
        assert!(Net::new("n", 0, &[LayerKind::Relu]).is_err());
    }

    #[test]
    fn zero_weights_annihilate() {
        let net = Net::new("n", 4, &[LayerKind::Linear(3)]).unwrap();
        let mut ps = net.init_params(&mut rng());
        *ps.get_mut("n.0.weight").unwrap() = Tensor2::zeros(4, 3);
        let mut tape = Tape::new(Mode::Inference);
        let x = tape
            .constant(Tensor2::random_uniform(5, 4, 10.0, &mut rng()))
            .unwrap();
        let y = net.forward(&ps, x, &mut tape, &mut rng()).unwrap();
        assert_eq!(tape.value(y), &Tensor2::zeros(5, 3));
    }

    #[test]
    fn identity_weights_pass_through() {
        let net = Net::new("n", 3, &[LayerKind::Linear(3)]).unwrap();
        let mut ps = net.init_params(&mut rng());
        *ps.get_mut("n.0.weight").unwrap() = Tensor2::identity(3);
        let xv = Tensor2::random_uniform(4, 3, 2.0, &mut rng());
        let mut tape = Tape::new(Mode::Inference);
        let x = tape.constant(xv.clone()).unwrap();
        let y = net.forward(&ps, x, &mut tape, &mut rng()).unwrap();
        assert_eq!(tape.value(y), &xv);
    }

    #[test]
    fn wrong_input_width() {
        let net = Net::new("n", 3, &[LayerKind::Linear(2)]).unwrap();
        let ps = net.init_params(&mut rng());
        let mut tape = Tape::new(Mode::Inference);
        let x = tape.constant(Tensor2::zeros(2, 4)).unwrap();
        assert!(matches!(
            net.forward(&ps, x, &mut tape, &mut rng()),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn softmax_has_no_input_gradient() {
        let net = Net::new("n", 3, &[LayerKind::Linear(2), LayerKind::Softmax]).unwrap();
        let ps = net.init_params(&mut rng());
        let mut tape = Tape::new(Mode::Training);
        let x = tape.variable(Tensor2::zeros(2, 3)).unwrap();
        assert!(matches!(
            net.input_gradient_graph(&ps, x, &mut tape, &mut rng()),
            Err(Error::NoInputGradient("softmax"))
        ));
    }

    #[test]
    fn inference_batchnorm_uses_running_stats() {
        let net = Net::new("n", 2, &[LayerKind::BatchNorm1d]).unwrap();
        let mut ps = net.init_params(&mut rng());
        ps.insert_buffer("n.0.running_mean", Tensor2::from_vec(1, 2, vec![1.0, -1.0]).unwrap());
        ps.insert_buffer("n.0.running_var", Tensor2::from_vec(1, 2, vec![4.0, 1.0]).unwrap());
        let mut tape = Tape::new(Mode::Inference);
        let x = tape
            .constant(Tensor2::from_vec(1, 2, vec![3.0, 0.0]).unwrap())
            .unwrap();
        let y = net.forward(&ps, x, &mut tape, &mut rng()).unwrap();
        let v = tape.value(y);
        assert!((v.get(0, 0) - 2.0 / (4.0 + BN_EPS).sqrt()).abs() < 1e-12);
        assert!((v.get(0, 1) - 1.0 / (1.0 + BN_EPS).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn training_batchnorm_normalizes_and_updates_running_stats() {
        let net = Net::new("n", 3, &[LayerKind::BatchNorm1d]).unwrap();
        let mut ps = net.init_params(&mut rng());
        let xv = Tensor2::random_uniform(64, 3, 5.0, &mut rng()).map(|v| 3.0 * v + 7.0);
        let mut tape = Tape::new(Mode::Training);
        let x = tape.constant(xv.clone()).unwrap();
        let y = net.forward(&ps, x, &mut tape, &mut rng()).unwrap();
        let out = tape.value(y).clone();
        for c in 0..3 {
            let col: Vec<f64> = (0..64).map(|r| out.get(r, c)).collect();
            let mean = col.iter().sum::<f64>() / 64.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 64.0;
            assert!(mean.abs() < 1e-6);
            // eps in the denominator shifts the variance by O(eps / var)
            assert!((var - 1.0).abs() < 1e-6);
        }
        ps.commit_buffers(tape.take_buffer_updates());
        let mu = xv.col_mean();
        let rm = ps.buffer("n.0.running_mean").unwrap();
        assert!((rm.get(0, 0) - 0.1 * mu.get(0, 0)).abs() < 1e-12);
    }

    #[test]
    fn dropout_inference_is_identity() {
        let net = Net::new("n", 3, &[LayerKind::Dropout(0.5)]).unwrap();
        let ps = net.init_params(&mut rng());
        let xv = Tensor2::random_uniform(4, 3, 1.0, &mut rng());
        let mut tape = Tape::new(Mode::Inference);
        let x = tape.constant(xv.clone()).unwrap();
        let y = net.forward(&ps, x, &mut tape, &mut rng()).unwrap();
        assert_eq!(tape.value(y), &xv);
    }

    #[test]
    fn dropout_training_preserves_expectation() {
        let net = Net::new("n", 1, &[LayerKind::Dropout(0.5)]).unwrap();
        let ps = net.init_params(&mut rng());
        let mut tape = Tape::new(Mode::Training);
        let x = tape.constant(Tensor2::filled(20_000, 1, 1.5)).unwrap();
        let y = net.forward(&ps, x, &mut tape, &mut rng()).unwrap();
        let mean = tape.value(y).mean();
        assert!((mean - 1.5).abs() / 1.5 < 0.02, "mean {mean}");
    }
}
