//! Random forest of CART classification trees.
//!
//! Trees are grown on bootstrap resamples (kept as per-row multiplicities)
//! with Gini splits. At each node, features are visited in a random order
//! and split candidates are evaluated until `max_features` non-constant
//! features have been examined. Thresholds are midpoints between consecutive
//! distinct values; rows with `x <= threshold` go left.
//!
//! Tree `t` draws all of its randomness from a ChaCha8 stream seeded with
//! [`seed::derive`](crate::seed::derive)`(seed, [t])`, so the forest is the
//! same whether trees are grown sequentially or in parallel.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features examined per split; `None` means `floor(sqrt(d))`.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_features: None,
            max_depth: None,
            min_samples_leaf: 1,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be >= 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::Config("max_features must be >= 1".into()));
        }
        Ok(())
    }

    fn features_per_split(&self, d: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
            .clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { class: u32 },
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class as usize,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, left as usize).max(walk(nodes, right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    /// Mean impurity decrease per feature, normalized to sum to 1.
    pub importances: Vec<f64>,
    pub n_classes: usize,
}

impl RandomForest {
    /// `y` holds class indices in `0..n_classes`.
    pub fn fit(
        params: &ForestParams,
        x: ArrayView2<f64>,
        y: &[usize],
        n_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        let (n, d) = x.dim();
        if n == 0 || d == 0 {
            return Err(Error::DegenerateTraining("empty training matrix".into()));
        }
        let columns: Vec<Vec<f64>> = (0..d).map(|j| x.column(j).to_vec()).collect();
        let labels: Vec<u32> = y.iter().map(|&c| c as u32).collect();
        let data = Columns {
            columns: &columns,
            labels: &labels,
            n_classes,
        };
        let grown: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| grow_tree(&data, params, seed::derive(seed, &[t as u64])))
            .collect();

        let mut importances = vec![0.0; d];
        let mut trees = Vec::with_capacity(grown.len());
        for (tree, imp) in grown {
            for (acc, v) in importances.iter_mut().zip(&imp) {
                *acc += v;
            }
            trees.push(tree);
        }
        let total: f64 = importances.iter().sum();
        if total > 0.0 {
            for v in &mut importances {
                *v /= total;
            }
        } else {
            importances.fill(1.0 / d as f64);
        }
        Ok(RandomForest {
            trees,
            importances,
            n_classes,
        })
    }

    /// Vote counts per class for one row.
    pub fn votes(&self, row: &[f64]) -> Vec<usize> {
        let mut votes = vec![0; self.n_classes];
        for t in &self.trees {
            votes[t.predict_row(row)] += 1;
        }
        votes
    }

    /// Fraction of trees voting for each class.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let n_trees = self.trees.len() as f64;
        let mut out = Array2::<f64>::zeros((x.nrows(), self.n_classes));
        let mut row = vec![0.0; x.ncols()];
        for (i, r) in x.rows().into_iter().enumerate() {
            for (dst, src) in row.iter_mut().zip(r.iter()) {
                *dst = *src;
            }
            for (j, v) in self.votes(&row).into_iter().enumerate() {
                out[[i, j]] = v as f64 / n_trees;
            }
        }
        out
    }
}

struct Columns<'a> {
    columns: &'a [Vec<f64>],
    labels: &'a [u32],
    n_classes: usize,
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

struct Pending {
    node: usize,
    start: usize,
    end: usize,
    depth: usize,
}

/// Grows one tree; returns it with its per-feature impurity decrease
/// (weighted by node size, divided by the root weight).
fn grow_tree(data: &Columns<'_>, params: &ForestParams, tree_seed: u64) -> (Tree, Vec<f64>) {
    let mut rng = seed::rng(tree_seed);
    let n = data.labels.len();
    let d = data.columns.len();
    let k = data.n_classes;

    let mut weights = vec![0u32; n];
    if params.bootstrap {
        for _ in 0..n {
            weights[rng.random_range(0..n)] += 1;
        }
    } else {
        weights.fill(1);
    }
    let mut rows: Vec<u32> = (0..n as u32).filter(|&i| weights[i as usize] > 0).collect();
    let root_weight: f64 = rows.iter().map(|&i| f64::from(weights[i as usize])).sum();

    let max_features = params.features_per_split(d);
    let mut importance = vec![0.0; d];
    let mut nodes: Vec<Node> = vec![Node::Leaf { class: 0 }];
    let mut stack = vec![Pending {
        node: 0,
        start: 0,
        end: rows.len(),
        depth: 0,
    }];
    let mut features: Vec<usize> = (0..d).collect();
    let mut sorted: Vec<(f64, u32, u32)> = Vec::with_capacity(rows.len());
    let mut counts = vec![0.0f64; k];
    let mut left = vec![0.0f64; k];

    while let Some(p) = stack.pop() {
        let node_rows = &rows[p.start..p.end];
        counts.fill(0.0);
        for &r in node_rows {
            counts[data.labels[r as usize] as usize] += f64::from(weights[r as usize]);
        }
        let total: f64 = counts.iter().sum();
        let majority = super::argmax(&counts) as u32;
        let occupied = counts.iter().filter(|&&c| c > 0.0).count();
        let depth_capped = params.max_depth.is_some_and(|m| p.depth >= m);
        if occupied <= 1 || depth_capped || node_rows.len() < 2 * params.min_samples_leaf {
            nodes[p.node] = Node::Leaf { class: majority };
            continue;
        }
        let parent_score: f64 = counts.iter().map(|c| c * c).sum::<f64>() / total;

        let mut best: Option<Best> = None;
        let mut examined = 0;
        for i in 0..d {
            if examined >= max_features {
                break;
            }
            let j = rng.random_range(i..d);
            features.swap(i, j);
            let f = features[i];
            let col = &data.columns[f];

            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &r in node_rows {
                let v = col[r as usize];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo == hi {
                continue;
            }
            examined += 1;

            sorted.clear();
            sorted.extend(
                node_rows
                    .iter()
                    .map(|&r| (col[r as usize], data.labels[r as usize], weights[r as usize])),
            );
            sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

            left.fill(0.0);
            let mut left_weight = 0.0;
            let m = sorted.len();
            for s in 0..m - 1 {
                let (v, label, w) = sorted[s];
                let w = f64::from(w);
                left[label as usize] += w;
                left_weight += w;
                let next = sorted[s + 1].0;
                if v == next || s + 1 < params.min_samples_leaf || m - s - 1 < params.min_samples_leaf {
                    continue;
                }
                let right_weight = total - left_weight;
                let mut l_sq = 0.0;
                let mut r_sq = 0.0;
                for c in 0..k {
                    let lc = left[c];
                    let rc = counts[c] - lc;
                    l_sq += lc * lc;
                    r_sq += rc * rc;
                }
                let score = l_sq / left_weight + r_sq / right_weight;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(Best {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }

        let Some(best) = best else {
            nodes[p.node] = Node::Leaf { class: majority };
            continue;
        };
        importance[best.feature] += (best.score - parent_score).max(0.0);

        let col = &data.columns[best.feature];
        let slice = &mut rows[p.start..p.end];
        let mut mid = 0;
        for i in 0..slice.len() {
            if col[slice[i] as usize] <= best.threshold {
                slice.swap(i, mid);
                mid += 1;
            }
        }
        let left_id = nodes.len();
        nodes.push(Node::Leaf { class: majority });
        nodes.push(Node::Leaf { class: majority });
        nodes[p.node] = Node::Split {
            feature: best.feature as u32,
            threshold: best.threshold,
            left: left_id as u32,
            right: left_id as u32 + 1,
        };
        stack.push(Pending {
            node: left_id + 1,
            start: p.start + mid,
            end: p.end,
            depth: p.depth + 1,
        });
        stack.push(Pending {
            node: left_id,
            start: p.start,
            end: p.start + mid,
            depth: p.depth + 1,
        });
    }

    for v in &mut importance {
        *v /= root_weight;
    }
    (Tree { nodes }, importance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{train, ModelSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noisy_xor(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 5), |_| rng.random_range(-1.0..1.0));
        let y = x
            .rows()
            .into_iter()
            .map(|r| usize::from((r[0] > 0.0) ^ (r[1] > 0.0)))
            .collect();
        (x, y)
    }

    #[test]
    fn seeded_training_is_deterministic() {
        let (x, y) = noisy_xor(200, 1);
        let spec = ModelSpec::Forest(ForestParams::default());
        let a = train(&spec, x.view(), &y, 42).unwrap();
        let b = train(&spec, x.view(), &y, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predict(x.view()).unwrap(), b.predict(x.view()).unwrap());
        let c = train(&spec, x.view(), &y, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unbounded_trees_interpolate_training_data() {
        let (x, y) = noisy_xor(300, 2);
        let m = train(&ModelSpec::Forest(ForestParams::default()), x.view(), &y, 7).unwrap();
        let pred = m.predict(x.view()).unwrap();
        let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
        assert!(acc >= 0.99, "training accuracy {acc}");
    }

    #[test]
    fn leaves_are_pure_without_bootstrap() {
        let (x, y) = noisy_xor(150, 3);
        let params = ForestParams {
            n_trees: 3,
            bootstrap: false,
            ..ForestParams::default()
        };
        let m = train(&ModelSpec::Forest(params), x.view(), &y, 0).unwrap();
        let crate::models::ModelState::Forest(f) = &m.state else { unreachable!() };
        for tree in &f.trees {
            for (row, &label) in x.rows().into_iter().zip(&y) {
                assert_eq!(tree.predict_row(row.as_slice().unwrap()), label);
            }
        }
    }

    #[test]
    fn importances_normalized_and_informative() {
        let (x, y) = noisy_xor(400, 4);
        let m = train(&ModelSpec::Forest(ForestParams::default()), x.view(), &y, 9).unwrap();
        let imp = m.feature_importances().unwrap();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(imp.iter().all(|&v| v >= 0.0));
        // the two xor inputs carry the signal
        assert!(imp[0] > imp[2] && imp[0] > imp[3] && imp[1] > imp[4]);
    }

    #[test]
    fn vote_fractions() {
        let (x, y) = noisy_xor(100, 5);
        let m = train(&ModelSpec::Forest(ForestParams::default()), x.view(), &y, 1).unwrap();
        let crate::models::ModelState::Forest(f) = &m.state else { unreachable!() };
        let p = m.predict_proba(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let votes = f.votes(row.as_slice().unwrap());
            assert_eq!(votes.iter().sum::<usize>(), 100);
            assert_eq!(p[[i, 1]], votes[1] as f64 / 100.0);
        }
    }

    #[test]
    fn depth_cap_respected() {
        let (x, y) = noisy_xor(200, 6);
        let params = ForestParams {
            n_trees: 5,
            max_depth: Some(2),
            ..ForestParams::default()
        };
        let m = train(&ModelSpec::Forest(params), x.view(), &y, 0).unwrap();
        let crate::models::ModelState::Forest(f) = &m.state else { unreachable!() };
        assert!(f.trees.iter().all(|t| t.depth() <= 2));
    }
}
