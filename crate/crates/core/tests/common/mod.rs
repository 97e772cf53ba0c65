#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rctgan::codec::{ColumnMeta, Mode, TableSchema};
use rctgan::grad::{Mode as TapeMode, Net, NodeId, ParamSet, Tape, Tensor2};
use rctgan::Result;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely; below it central
/// differences are dominated by rounding in the loss.
pub const FD_FLOOR: f64 = 1e-6;

#[derive(Debug, Default)]
pub struct FdReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

impl FdReport {
    pub fn ok(&self, min_coords: usize) -> bool {
        self.failures.is_empty() && self.checked >= min_coords
    }
}

/// Compares `analytic` against central differences of `loss` on a sample
/// of coordinates: one per block first, then random ones until
/// `min_coords` smooth coordinates have been checked. Coordinates where
/// the two one-sided differences disagree sit on a kink and are skipped.
pub fn check_params(
    ps: &ParamSet,
    analytic: &BTreeMap<String, Tensor2>,
    min_coords: usize,
    seed: u64,
    loss: impl Fn(&ParamSet) -> f64,
) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<&String> = ps.blocks().keys().collect();
    let sizes: Vec<usize> = names.iter().map(|n| ps.get(n).unwrap().data().len()).collect();
    let total: usize = sizes.iter().sum();
    let mut candidates: Vec<(usize, usize)> =
        (0..names.len()).map(|b| (b, rng.random_range(0..sizes[b]))).collect();
    for _ in 0..(min_coords * 4) {
        let mut k = rng.random_range(0..total);
        let mut b = 0;
        while k >= sizes[b] {
            k -= sizes[b];
            b += 1;
        }
        candidates.push((b, k));
    }
    let f0 = loss(ps);
    let mut report = FdReport::default();
    for (b, k) in candidates {
        if report.checked >= min_coords.max(names.len()) {
            break;
        }
        let name = names[b];
        let eval = |delta: f64| {
            let mut p = ps.clone();
            p.get_mut(name).unwrap().data_mut()[k] += delta;
            loss(&p)
        };
        let (fp, fm) = (eval(FD_STEP), eval(-FD_STEP));
        let (fwd, bwd) = ((fp - f0) / FD_STEP, (f0 - fm) / FD_STEP);
        if (fwd - bwd).abs() > 1e-3 * (fwd.abs() + bwd.abs()) + 1e-5 {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * FD_STEP);
        let a = analytic.get(name.as_str()).map_or(0.0, |g| g.data()[k]);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
        report.worst = report.worst.max(rel);
        report.checked += 1;
        if rel > FD_TOL {
            report.failures.push(format!("{name}[{k}]: analytic {a:e} numeric {numeric:e} rel {rel:e}"));
        }
    }
    report
}

/// Schema with encoded width 69 and a two-category target: five ten-mode
/// columns, six single-mode columns and the target.
pub fn wide_schema() -> TableSchema {
    let mut cols = Vec::new();
    for (i, k) in [10, 10, 10, 10, 10, 1, 1, 1, 1, 1, 1].into_iter().enumerate() {
        cols.push(ColumnMeta::Continuous {
            name: format!("c{i}"),
            modes: (0..k)
                .map(|j| Mode { weight: 1.0 / k as f64, mean: j as f64, std: 1.0 })
                .collect(),
            median: 0.0,
        });
    }
    cols.push(ColumnMeta::Discrete {
        name: "failure".into(),
        categories: vec!["0".into(), "1".into()],
        counts: vec![100, 1],
    });
    TableSchema::new(cols, "failure").unwrap()
}

pub type Build = fn(&mut Tape, &[NodeId]) -> Result<NodeId>;
pub type Grads = BTreeMap<String, Tensor2>;

pub fn inputs(shapes: &[(usize, usize)], positive: bool, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    for (i, &(r, c)) in shapes.iter().enumerate() {
        let mut t = Tensor2::random_uniform(r, c, 1.0, &mut rng);
        if positive {
            t = t.map(|v| v.abs() + 0.5);
        }
        ps.insert(format!("x{i}"), t);
    }
    ps
}

/// Weighted sum of the op output with fixed random weights, so every
/// output element contributes a distinct amount.
pub fn op_loss(ps: &ParamSet, n: usize, build: Build) -> (f64, Option<Grads>) {
    let mut tape = Tape::new(TapeMode::Training);
    let ids: Vec<NodeId> = (0..n).map(|i| tape.param(ps, &format!("x{i}")).unwrap()).collect();
    let out = build(&mut tape, &ids).unwrap();
    let (r, c) = tape.shape(out);
    let w = Tensor2::random_uniform(r, c, 1.0, &mut ChaCha8Rng::seed_from_u64(99));
    let w = tape.constant(w).unwrap();
    let prod = tape.mul(out, w).unwrap();
    let loss = tape.sum(prod).unwrap();
    let value = tape.value(loss).item();
    let grads = tape.backward(loss).ok().map(|g| g.into_params());
    (value, grads)
}

pub struct OpCase {
    pub name: &'static str,
    pub shapes: &'static [(usize, usize)],
    pub positive: bool,
    pub build: Build,
}

/// Every tape op, plus two compositions used by the losses.
pub fn op_cases() -> Vec<OpCase> {
    fn case(name: &'static str, shapes: &'static [(usize, usize)], positive: bool, build: Build) -> OpCase {
        OpCase { name, shapes, positive, build }
    }
    vec![
        case("matmul", &[(4, 5), (5, 3)], false, |t, x| t.matmul(x[0], x[1])),
        case("transpose", &[(4, 6)], false, |t, x| t.transpose(x[0])),
        case("add", &[(4, 6), (4, 6)], false, |t, x| t.add(x[0], x[1])),
        case("sub", &[(4, 6), (4, 6)], false, |t, x| t.sub(x[0], x[1])),
        case("mul", &[(4, 6), (4, 6)], false, |t, x| t.mul(x[0], x[1])),
        case("add_row", &[(5, 6), (1, 6)], false, |t, x| t.add_row(x[0], x[1])),
        case("mul_row", &[(5, 6), (1, 6)], false, |t, x| t.mul_row(x[0], x[1])),
        case("scale", &[(4, 6)], false, |t, x| t.scale(x[0], -2.5)),
        case("add_scalar", &[(4, 6)], false, |t, x| t.add_scalar(x[0], 3.0)),
        case("powf", &[(4, 6)], true, |t, x| t.powf(x[0], 1.7)),
        case("col_mean", &[(5, 6)], false, |t, x| t.col_mean(x[0])),
        case("row_sum", &[(5, 6)], false, |t, x| t.row_sum(x[0])),
        case("sum", &[(5, 6)], false, |t, x| t.sum(x[0])),
        case("mean", &[(5, 6)], false, |t, x| t.mean(x[0])),
        case("relu", &[(5, 6)], false, |t, x| t.relu(x[0])),
        case("leaky_relu", &[(5, 6)], false, |t, x| t.leaky_relu(x[0], 0.2)),
        case("tanh", &[(5, 6)], false, |t, x| t.tanh(x[0])),
        case("softmax", &[(5, 6)], false, |t, x| t.softmax(x[0])),
        case("log", &[(5, 6)], true, |t, x| t.log(x[0])),
        case("concat", &[(5, 2), (5, 3)], false, |t, x| t.concat(&[x[0], x[1]])),
        case("slice_cols", &[(5, 6)], false, |t, x| t.slice_cols(x[0], 1, 3)),
        case("reshape", &[(6, 4)], false, |t, x| t.reshape(x[0], 3, 8)),
        case("relu_mask", &[(5, 6), (5, 6)], false, |t, x| t.relu_mask(x[0], x[1], 0.2)),
        case("softmax_log", &[(4, 5)], false, |t, x| {
            let p = t.softmax(x[0])?;
            t.log(p)
        }),
        case("norm", &[(6, 5)], false, |t, x| {
            let sq = t.mul(x[0], x[0])?;
            let s = t.row_sum(sq)?;
            let s = t.add_scalar(s, 1e-12)?;
            t.powf(s, 0.5)
        }),
    ]
}

pub fn check_op(case: &OpCase) -> FdReport {
    let n = case.shapes.len();
    let ps = inputs(case.shapes, case.positive, case.name.len() as u64);
    let grads = op_loss(&ps, n, case.build).1.expect("op output depends on inputs");
    check_params(&ps, &grads, 20, 1, |p| op_loss(p, n, case.build).0)
}

fn net_loss(net: &Net, ps: &ParamSet, x: &Tensor2, seed: u64) -> (f64, Grads) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new(TapeMode::Training);
    let xn = tape.constant(x.clone()).unwrap();
    let y = net.forward(ps, xn, &mut tape, &mut rng).unwrap();
    let (r, c) = tape.shape(y);
    let w = tape.constant(Tensor2::random_uniform(r, c, 1.0, &mut ChaCha8Rng::seed_from_u64(5))).unwrap();
    let prod = tape.mul(y, w).unwrap();
    let loss = tape.sum(prod).unwrap();
    let v = tape.value(loss).item();
    (v, tape.backward(loss).unwrap().into_params())
}

/// Checks a network at random init on a random batch.
pub fn check_net(net: &Net, rows: usize, seed: u64) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ps = net.init_params(&mut rng);
    let x = Tensor2::random_uniform(rows, net.in_dim(), 1.0, &mut rng);
    let (_, grads) = net_loss(net, &ps, &x, seed);
    check_params(&ps, &grads, 24, seed, |p| net_loss(net, p, &x, seed).0)
}
