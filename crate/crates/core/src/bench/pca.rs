//! Principal components via cyclic Jacobi rotations.

use crate::error::{Error, Result};
use crate::grad::Tensor2;

/// Eigen-decomposition of a symmetric matrix. Returns eigenvalues in
/// descending order and the matching unit eigenvectors as columns.
pub fn jacobi_eigen(a: &Tensor2) -> Result<(Vec<f64>, Tensor2)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape("jacobi_eigen", format!("{:?} is not square", a.shape())));
    }
    let mut m = a.clone();
    let mut v = Tensor2::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum();
        let scale: f64 = m.data().iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m.get(k, p), m.get(k, q));
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let (mpk, mqk) = (m.get(p, k), m.get(q, k));
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Tensor2::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, c, v.get(r, i));
        }
    }
    Ok((values, vectors))
}

/// Sample covariance with `n - 1` denominator.
pub fn covariance(x: &Tensor2) -> Result<Tensor2> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::data("covariance needs at least two rows"));
    }
    let mean = x.col_mean();
    let mut centered = x.clone();
    for r in 0..n {
        for (c, v) in centered.row_mut(r).iter_mut().enumerate() {
            *v -= mean.get(0, c);
        }
    }
    let mut cov = centered.transpose().matmul(&centered)?;
    for v in cov.data_mut() {
        *v /= (n - 1) as f64;
    }
    debug_assert_eq!(cov.shape(), (d, d));
    Ok(cov)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    mean: Vec<f64>,
    /// `d x k`, columns are components.
    components: Tensor2,
    variances: Vec<f64>,
}

impl Pca {
    pub fn fit(x: &Tensor2, k: usize) -> Result<Self> {
        let cov = covariance(x)?;
        if cov.data().iter().step_by(cov.cols() + 1).all(|&v| v <= 0.0) {
            return Err(Error::data("zero-variance data cannot be projected"));
        }
        let (values, vectors) = jacobi_eigen(&cov)?;
        let k = k.min(x.cols());
        Ok(Self {
            mean: x.col_mean().into_vec(),
            components: vectors.slice_cols(0, k),
            variances: values[..k].to_vec(),
        })
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn components(&self) -> &Tensor2 {
        &self.components
    }

    pub fn project(&self, x: &Tensor2) -> Result<Tensor2> {
        let mut centered = x.clone();
        for r in 0..x.rows() {
            for (c, v) in centered.row_mut(r).iter_mut().enumerate() {
                *v -= self.mean[c];
            }
        }
        centered.matmul(&self.components)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Real,
    Synthetic,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Real => "real",
            Origin::Synthetic => "synthetic",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
    pub class: String,
    pub origin: Origin,
}

/// Fits two components on `real` and projects both sets.
pub fn project_2d(
    real: &Tensor2,
    real_classes: &[String],
    synth: &Tensor2,
    synth_classes: &[String],
) -> Result<Vec<ProjectedPoint>> {
    let pca = Pca::fit(real, 2)?;
    let mut out = Vec::with_capacity(real.rows() + synth.rows());
    for (m, classes, origin) in [(real, real_classes, Origin::Real), (synth, synth_classes, Origin::Synthetic)] {
        if m.rows() == 0 {
            continue;
        }
        let p = pca.project(m)?;
        for r in 0..p.rows() {
            out.push(ProjectedPoint {
                x: p.get(r, 0),
                y: if p.cols() > 1 { p.get(r, 1) } else { 0.0 },
                class: classes[r].clone(),
                origin,
            });
        }
    }
    Ok(out)
}

pub fn projections_csv(points: &[ProjectedPoint]) -> String {
    let mut s = String::from("x,y,class,origin\n");
    for p in points {
        s.push_str(&format!("{},{},{},{}\n", p.x, p.y, p.class, p.origin.as_str()));
    }
    s
}
