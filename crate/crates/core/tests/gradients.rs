//! Reverse-mode gradients against central finite differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rctgan::codec::TableSchema;
use rctgan::gan::{critic, classifier, generator, gradient_penalty, GanConfig, GanMode, Synthesizer};
use rctgan::grad::{Mode, Net, ParamSet, Tape, Tensor2};

mod common;
use common::{check_net, check_op, check_params, inputs, op_cases, op_loss, wide_schema, Build};

#[test]
fn every_tape_op() {
    for case in op_cases() {
        let report = check_op(&case);
        assert!(report.ok(20), "{}: {report:?}", case.name);
    }
}

fn paper_schema() -> (GanConfig, TableSchema) {
    (GanConfig::default(), wide_schema())
}

#[test]
fn generator_network() {
    let (cfg, schema) = paper_schema();
    let report = check_net(&generator(&cfg, &schema).unwrap(), 8, 1);
    assert!(report.ok(20), "{report:?}");
}

#[test]
fn residual_critic_network() {
    let (cfg, schema) = paper_schema();
    let report = check_net(&critic(&cfg, &schema).unwrap(), 4, 2);
    assert!(report.ok(20), "{report:?}");
}

#[test]
fn plain_critic_network() {
    let (cfg, schema) = paper_schema();
    let cfg = GanConfig { mode: GanMode::Ctgan, ..cfg };
    let report = check_net(&critic(&cfg, &schema).unwrap(), 4, 3);
    assert!(report.ok(20), "{report:?}");
}

#[test]
fn classifier_network() {
    let (cfg, schema) = paper_schema();
    let report = check_net(&classifier(&cfg, &schema).unwrap(), 6, 4);
    assert!(report.ok(20), "{report:?}");
}

fn penalty_loss(net: &Net, ps: &ParamSet, real: &Tensor2, fake: &Tensor2) -> (f64, std::collections::BTreeMap<String, Tensor2>) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut tape = Tape::new(Mode::Training);
    let gp = gradient_penalty(net, ps, real, fake, 10.0, &mut tape, &mut rng).unwrap();
    (tape.value(gp).item(), tape.backward(gp).unwrap().into_params())
}

/// The penalty is itself a function of a gradient, so this checks the
/// second-order path through every critic layer.
#[test]
fn gradient_penalty_parameters() {
    let (cfg, schema) = paper_schema();
    for mode in [GanMode::Rctgan, GanMode::Ctgan] {
        let cfg = GanConfig { mode, ..cfg.clone() };
        let net = critic(&cfg, &schema).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ps = net.init_params(&mut rng);
        let real = Tensor2::random_uniform(4, net.in_dim(), 1.0, &mut rng);
        let fake = Tensor2::random_uniform(4, net.in_dim(), 1.0, &mut rng);
        let (_, grads) = penalty_loss(&net, &ps, &real, &fake);
        let report = check_params(&ps, &grads, 24, 8, |p| penalty_loss(&net, p, &real, &fake).0);
        assert!(report.ok(20), "{mode}: {report:?}");
    }
}

/// Gradient through the generator's tanh and Gumbel-softmax heads.
#[test]
fn generator_heads() {
    let (cfg, schema) = paper_schema();
    let base = Synthesizer::new(cfg.clone(), schema.clone(), 3).unwrap();
    let conds = {
        let mut c = Tensor2::zeros(6, 2);
        for r in 0..6 {
            c.set(r, r % 2, 1.0);
        }
        c
    };
    let run = |ps: &ParamSet| {
        let mut params = base.params().clone();
        params.generator = ps.clone();
        let model = Synthesizer::from_parts(cfg.clone(), schema.clone(), params, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut tape = Tape::new(Mode::Training);
        let (out, _) = model.generate(&conds, false, &mut tape, &mut rng).unwrap();
        let (r, c) = tape.shape(out);
        let w = tape.constant(Tensor2::random_uniform(r, c, 1.0, &mut ChaCha8Rng::seed_from_u64(2))).unwrap();
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum(prod).unwrap();
        (tape.value(loss).item(), tape.backward(loss).unwrap().into_params())
    };
    let ps = base.params().generator.clone();
    let (_, grads) = run(&ps);
    let report = check_params(&ps, &grads, 24, 4, |p| run(p).0);
    assert!(report.ok(20), "{report:?}");
}

#[test]
fn checker_rejects_wrong_gradient() {
    let ps = inputs(&[(4, 5)], false, 1);
    let build: Build = |t, x| t.tanh(x[0]);
    let (_, grads) = op_loss(&ps, 1, build);
    let skewed = grads
        .unwrap()
        .into_iter()
        .map(|(k, g)| (k, g.map(|v| v * 1.001)))
        .collect();
    let report = check_params(&ps, &skewed, 20, 1, |p| op_loss(p, 1, build).0);
    assert!(!report.ok(20));
    assert!(report.checked >= 20);
}
