//! CART classification trees and bagged forests.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grad::Tensor2;

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Gini tree grown until every leaf is pure or its rows are
/// indistinguishable. Rows with `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

fn check_xy(x: &Tensor2, y: &[usize]) -> Result<usize> {
    if x.rows() != y.len() || y.is_empty() {
        return Err(Error::data(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    let classes = y.iter().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; classes];
    for &c in y {
        seen[c] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::data("training set has a single class"));
    }
    Ok(classes)
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

struct Builder<'a, R: Rng + ?Sized> {
    x: &'a Tensor2,
    y: &'a [usize],
    classes: usize,
    max_features: Option<usize>,
    rng: &'a mut R,
}

/// Best split as `(feature, threshold, left rows, right rows)`.
type Found = (usize, f64, Vec<usize>, Vec<usize>);

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn best_split(&self, rows: &[usize], features: &[usize]) -> Option<Found> {
        let n = rows.len();
        let mut total = vec![0usize; self.classes];
        for &r in rows {
            total[self.y[r]] += 1;
        }
        let mut sorted = rows.to_vec();
        // Maximizing sum(c_l^2)/n_l + sum(c_r^2)/n_r minimizes weighted Gini.
        let mut best: Option<(f64, usize, f64, usize)> = None;
        for &f in features {
            sorted.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)));
            let mut left = vec![0usize; self.classes];
            for i in 0..n - 1 {
                left[self.y[sorted[i]]] += 1;
                let (v, next) = (self.x.get(sorted[i], f), self.x.get(sorted[i + 1], f));
                if v >= next {
                    continue;
                }
                let nl = (i + 1) as f64;
                let nr = (n - i - 1) as f64;
                let mut score = 0.0;
                for k in 0..self.classes {
                    let l = left[k] as f64;
                    let r = (total[k] - left[k]) as f64;
                    score += l * l / nl + r * r / nr;
                }
                if best.is_none_or(|(s, ..)| score > s + 1e-12) {
                    let mid = v + (next - v) / 2.0;
                    let threshold = if mid < next { mid } else { v };
                    best = Some((score, f, threshold, i + 1));
                }
            }
        }
        let (_, f, threshold, _) = best?;
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| self.x.get(r, f) <= threshold);
        Some((f, threshold, l, r))
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.cols();
        match self.max_features {
            Some(m) if m < d => {
                let mut f = sample(self.rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn build(mut self, root: Vec<usize>) -> Vec<Node> {
        let mut nodes = vec![Node::Leaf { class: 0 }];
        let mut stack = vec![(0usize, root)];
        let all: Vec<usize> = (0..self.x.cols()).collect();
        while let Some((id, rows)) = stack.pop() {
            let mut counts = vec![0usize; self.classes];
            for &r in &rows {
                counts[self.y[r]] += 1;
            }
            let class = majority(&counts);
            if counts[class] == rows.len() || rows.len() < 2 {
                nodes[id] = Node::Leaf { class };
                continue;
            }
            let feats = self.candidate_features();
            let found = self
                .best_split(&rows, &feats)
                .or_else(|| if feats.len() < all.len() { self.best_split(&rows, &all) } else { None });
            match found {
                None => nodes[id] = Node::Leaf { class },
                Some((feature, threshold, l, r)) => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf { class: 0 });
                    nodes.push(Node::Leaf { class: 0 });
                    nodes[id] = Node::Split { feature, threshold, left, right: left + 1 };
                    stack.push((left + 1, r));
                    stack.push((left, l));
                }
            }
        }
        nodes
    }
}

impl DecisionTree {
    /// Fits on `rows` of `x` (duplicates allowed), considering
    /// `max_features` randomly chosen features per split when set.
    pub fn fit_rows<R: Rng + ?Sized>(
        x: &Tensor2,
        y: &[usize],
        rows: Vec<usize>,
        max_features: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let classes = check_xy(x, y)?;
        let b = Builder { x, y, classes, max_features, rng };
        Ok(Self {
            nodes: b.build(rows),
            n_features: x.cols(),
        })
    }

    pub fn fit(x: &Tensor2, y: &[usize]) -> Result<Self> {
        Self::fit_rows(x, y, (0..x.rows()).collect(), None, &mut ChaCha8Rng::seed_from_u64(0))
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { class } => return *class,
                Node::Split { feature, threshold, left, right } => {
                    id = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, x: &Tensor2) -> Result<Vec<usize>> {
        if x.cols() != self.n_features {
            return Err(Error::shape("predict", format!("{} features, tree expects {}", x.cols(), self.n_features)));
        }
        Ok((0..x.rows()).map(|r| self.predict_row(x.row(r))).collect())
    }

    /// `(feature, threshold)` of the root split, if any.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes[0] {
            Node::Split { feature, threshold, .. } => Some((feature, threshold)),
            Node::Leaf { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub bootstrap: bool,
    /// Features tried per split; `None` means `floor(sqrt(d))`.
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 45,
            bootstrap: true,
            max_features: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn fit<R: Rng + ?Sized>(x: &Tensor2, y: &[usize], cfg: &ForestConfig, rng: &mut R) -> Result<Self> {
        if cfg.n_trees == 0 {
            return Err(Error::Config("n_trees must be positive".into()));
        }
        check_xy(x, y)?;
        let n = x.rows();
        let m = cfg
            .max_features
            .unwrap_or_else(|| ((x.cols() as f64).sqrt().floor() as usize).max(1));
        let mut trees = Vec::with_capacity(cfg.n_trees);
        for _ in 0..cfg.n_trees {
            let rows = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            trees.push(DecisionTree::fit_rows(x, y, rows, Some(m), rng)?);
        }
        Ok(Self { trees })
    }

    pub fn from_trees(trees: Vec<DecisionTree>) -> Self {
        Self { trees }
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Majority vote; ties go to the lower class id.
    pub fn predict(&self, x: &Tensor2) -> Result<Vec<usize>> {
        let votes: Vec<Vec<usize>> = self.trees.iter().map(|t| t.predict(x)).collect::<Result<_>>()?;
        Ok((0..x.rows())
            .map(|r| {
                let mut counts = Vec::new();
                for v in &votes {
                    if counts.len() <= v[r] {
                        counts.resize(v[r] + 1, 0);
                    }
                    counts[v[r]] += 1;
                }
                majority(&counts)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Tensor2 {
        Tensor2::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn separable_midpoint() {
        let x = col(&[1.0, 2.0, 3.0, 7.0, 8.0, 9.0]);
        let y = [0, 0, 0, 1, 1, 1];
        let t = DecisionTree::fit(&x, &y).unwrap();
        assert_eq!(t.root_split(), Some((0, 5.0)));
        assert_eq!(t.n_nodes(), 3);
        assert_eq!(t.predict(&x).unwrap(), y);
    }

    #[test]
    fn constant_features_give_majority_stump() {
        let x = Tensor2::filled(5, 2, 1.0);
        let t = DecisionTree::fit(&x, &[1, 0, 1, 1, 0]).unwrap();
        assert_eq!(t.n_nodes(), 1);
        assert_eq!(t.predict(&Tensor2::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap()).unwrap(), vec![1, 1]);
    }

    #[test]
    fn single_class_rejected() {
        assert!(DecisionTree::fit(&col(&[1.0, 2.0]), &[1, 1]).is_err());
    }

    #[test]
    fn xor_needs_zero_gain_split() {
        let x = Tensor2::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let y = [0, 1, 1, 0];
        let t = DecisionTree::fit(&x, &y).unwrap();
        assert_eq!(t.root_split(), Some((0, 0.5)));
        assert_eq!(t.predict(&x).unwrap(), y);
    }

    #[test]
    fn single_unbagged_tree_equals_dt() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor2::random_uniform(60, 4, 1.0, &mut rng);
        let y: Vec<usize> = (0..60).map(|r| usize::from(x.get(r, 0) + x.get(r, 2) > 0.1)).collect();
        let cfg = ForestConfig { n_trees: 1, bootstrap: false, max_features: Some(4) };
        let f = RandomForest::fit(&x, &y, &cfg, &mut rng).unwrap();
        assert_eq!(f.trees()[0], DecisionTree::fit(&x, &y).unwrap());
    }

    #[test]
    fn identical_trees_vote_like_one() {
        let x = col(&[1.0, 2.0, 3.0, 7.0]);
        let t = DecisionTree::fit(&x, &[0, 1, 0, 1]).unwrap();
        let f = RandomForest::from_trees(vec![t.clone(); 45]);
        let q = col(&[0.0, 1.5, 2.5, 5.0, 10.0]);
        assert_eq!(f.predict(&q).unwrap(), t.predict(&q).unwrap());
    }

    #[test]
    fn tied_vote_goes_to_lower_class() {
        let x = col(&[0.0, 1.0]);
        let a = DecisionTree::fit(&x, &[0, 1]).unwrap();
        let b = DecisionTree::fit(&x, &[1, 0]).unwrap();
        let f = RandomForest::from_trees(vec![a, b]);
        assert_eq!(f.predict(&x).unwrap(), vec![0, 0]);
    }
}
