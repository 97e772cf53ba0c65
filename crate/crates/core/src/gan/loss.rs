//! Adversarial and classification objectives, as plain functions on
//! values and as tape graphs for training.

use rand::Rng;

use crate::error::{Error, Result};
use crate::grad::{Net, NodeId, ParamSet, Tape, Tensor2, LOG_CLAMP};

/// `-mean(critic(fake))`.
pub fn loss_g(fake_scores: &[f64]) -> f64 {
    -mean(fake_scores)
}

/// `-(mean(critic(real)) - mean(critic(fake)))`.
pub fn loss_d(real_scores: &[f64], fake_scores: &[f64]) -> f64 {
    -(mean(real_scores) - mean(fake_scores))
}

/// Mean cross-entropy of class probabilities against integer labels.
pub fn loss_c(probs: &Tensor2, labels: &[usize]) -> f64 {
    let n = labels.len();
    (0..n)
        .map(|r| -probs.get(r, labels[r]).max(LOG_CLAMP).ln())
        .sum::<f64>()
        / n as f64
}

pub fn loss_total(loss_d: f64, loss_c: f64) -> f64 {
    loss_d + loss_c
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn one_hot(labels: &[usize], classes: usize) -> Tensor2 {
    let mut t = Tensor2::zeros(labels.len(), classes);
    for (r, &k) in labels.iter().enumerate() {
        t.set(r, k, 1.0);
    }
    t
}

/// Tape form of [`loss_c`]; `probs` must already be a distribution.
pub fn cross_entropy_node(tape: &mut Tape, probs: NodeId, labels: &[usize]) -> Result<NodeId> {
    let (n, k) = tape.shape(probs);
    if n != labels.len() || labels.iter().any(|&l| l >= k) {
        return Err(Error::shape("cross_entropy", format!("{n}x{k} probs vs {} labels", labels.len())));
    }
    let target = tape.constant(one_hot(labels, k))?;
    let logp = tape.log(probs)?;
    let picked = tape.mul(logp, target)?;
    let total = tape.sum(picked)?;
    tape.scale(total, -1.0 / n as f64)
}

/// Reshapes `n x w` rows into `n/pac x pac*w` packs, keeping row order.
pub fn pack(rows: &Tensor2, pac: usize) -> Result<Tensor2> {
    if pac == 0 || rows.rows() % pac != 0 {
        return Err(Error::shape(
            "pack",
            format!("{} rows not divisible by pac {pac}", rows.rows()),
        ));
    }
    let (n, w) = rows.shape();
    rows.clone().reshape(n / pac, pac * w)
}

pub fn pack_node(tape: &mut Tape, rows: NodeId, pac: usize) -> Result<NodeId> {
    let (n, w) = tape.shape(rows);
    if pac == 0 || n % pac != 0 {
        return Err(Error::shape("pack", format!("{n} rows not divisible by pac {pac}")));
    }
    tape.reshape(rows, n / pac, pac * w)
}

/// `lambda * mean((||d critic / d x_hat|| - 1)^2)` over packs, where
/// `x_hat = u * real + (1 - u) * fake` with one `u ~ U(0,1)` per pack.
/// Both inputs are already packed. The result stays differentiable with
/// respect to the critic parameters.
pub fn gradient_penalty<R: Rng + ?Sized>(
    critic: &Net,
    params: &ParamSet,
    real: &Tensor2,
    fake: &Tensor2,
    lambda: f64,
    tape: &mut Tape,
    rng: &mut R,
) -> Result<NodeId> {
    if real.shape() != fake.shape() {
        return Err(Error::shape(
            "gradient_penalty",
            format!("real {:?} vs fake {:?}", real.shape(), fake.shape()),
        ));
    }
    let mut mixed = real.clone();
    for r in 0..real.rows() {
        let u: f64 = rng.random();
        for (m, &f) in mixed.row_mut(r).iter_mut().zip(fake.row(r)) {
            *m = u * *m + (1.0 - u) * f;
        }
    }
    let x = tape.constant(mixed)?;
    let (_, g) = critic.input_gradient_graph(params, x, tape, rng)?;
    let sq = tape.mul(g, g)?;
    let norm2 = tape.row_sum(sq)?;
    let norm2 = tape.add_scalar(norm2, 1e-12)?;
    let norm = tape.powf(norm2, 0.5)?;
    let dev = tape.add_scalar(norm, -1.0)?;
    let dev2 = tape.mul(dev, dev)?;
    let m = tape.mean(dev2)?;
    tape.scale(m, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::{LayerKind, Mode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generator_loss() {
        assert!((loss_g(&[0.2, 0.4]) + 0.3).abs() < 1e-12);
        assert_eq!(loss_g(&[-1.0]), 1.0);
    }

    #[test]
    fn classifier_loss() {
        let uniform = Tensor2::filled(1, 3, 1.0 / 3.0);
        assert!((loss_c(&uniform, &[0]) - 1.0986).abs() < 1e-4);
        let p = Tensor2::from_vec(1, 3, vec![0.5, 0.25, 0.25]).unwrap();
        assert!((loss_c(&p, &[1]) - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn critic_and_total_loss() {
        assert!((loss_d(&[0.5], &[0.2]) + 0.3).abs() < 1e-12);
        assert!((loss_total(-0.3, 1.0986) - 0.7986).abs() < 1e-12);
    }

    #[test]
    fn tape_cross_entropy_matches_values() {
        let p = Tensor2::from_vec(2, 3, vec![0.5, 0.25, 0.25, 0.1, 0.2, 0.7]).unwrap();
        let mut tape = Tape::new(Mode::Training);
        let n = tape.variable(p.clone()).unwrap();
        let l = cross_entropy_node(&mut tape, n, &[1, 2]).unwrap();
        assert!((tape.value(l).item() - loss_c(&p, &[1, 2])).abs() < 1e-12);
    }

    #[test]
    fn pack_is_row_major() {
        let rows = Tensor2::from_vec(4, 2, (0..8).map(f64::from).collect()).unwrap();
        let p = pack(&rows, 2).unwrap();
        assert_eq!(p.shape(), (2, 4));
        assert_eq!(p.row(1), &[4.0, 5.0, 6.0, 7.0]);
        assert!(pack(&rows, 3).is_err());
    }

    fn linear_critic(w: &[f64]) -> (Net, ParamSet) {
        let net = Net::new("critic", w.len(), &[LayerKind::Linear(1)]).unwrap();
        let mut ps = ParamSet::new();
        ps.insert("critic.0.weight", Tensor2::from_vec(w.len(), 1, w.to_vec()).unwrap());
        ps.insert("critic.0.bias", Tensor2::zeros(1, 1));
        (net, ps)
    }

    #[test]
    fn penalty_of_linear_critic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let real = Tensor2::random_uniform(6, 3, 1.0, &mut rng);
        let fake = Tensor2::random_uniform(6, 3, 1.0, &mut rng);
        for (w, want) in [([2.0, 2.0, 1.0], 40.0), ([1.0, 0.0, 0.0], 0.0)] {
            let (net, ps) = linear_critic(&w);
            let mut tape = Tape::new(Mode::Training);
            let gp = gradient_penalty(&net, &ps, &real, &fake, 10.0, &mut tape, &mut rng).unwrap();
            assert!((tape.value(gp).item() - want).abs() < 1e-6);
        }
        let (net, ps) = linear_critic(&[2.0, 2.0, 1.0]);
        let mut tape = Tape::new(Mode::Training);
        let gp = gradient_penalty(&net, &ps, &real, &fake, 0.0, &mut tape, &mut rng).unwrap();
        assert_eq!(tape.value(gp).item(), 0.0);
    }
}
