//! CART regression trees with exact greedy squared-error splits, and the
//! additive ensembles that boosting builds from them.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WdlError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Minimum reduction in the node's sum of squared errors for a split.
    pub min_split_improvement: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 3,
            min_samples_leaf: 10,
            min_split_improvement: 0.0,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(WdlError::invalid("max_depth must be at least 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(WdlError::invalid("min_samples_leaf must be at least 1"));
        }
        if !(self.min_split_improvement >= 0.0) || !self.min_split_improvement.is_finite() {
            return Err(WdlError::invalid(
                "min_split_improvement must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Arena node. Children of a split always have larger indices than the split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

/// Nested form of a tree, as stored in model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        leaf: f64,
    },
}

impl RegressionTree {
    pub fn constant(value: f64, n_features: usize) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value }],
            n_features,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Thresholds used on `feature`, in node order.
    pub fn thresholds(&self, feature: usize) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match *n {
                Node::Split {
                    feature: f, threshold, ..
                } if f == feature => Some(threshold),
                _ => None,
            })
            .collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(WdlError::invalid(format!(
                "covariate vector has {} entries, tree expects {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// Index of the leaf node `x` is routed to.
    pub fn leaf_index(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(self.route(x))
    }

    fn route(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    fn value_at(&self, i: usize) -> f64 {
        match self.nodes[i] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("routing ends at a leaf"),
        }
    }

    pub fn to_nested(&self) -> TreeNode {
        fn go(nodes: &[Node], i: usize) -> TreeNode {
            match nodes[i] {
                Node::Leaf { value } => TreeNode::Leaf { leaf: value },
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => TreeNode::Split {
                    feature,
                    threshold,
                    left: Box::new(go(nodes, left)),
                    right: Box::new(go(nodes, right)),
                },
            }
        }
        go(&self.nodes, 0)
    }

    pub fn from_nested(root: &TreeNode, n_features: usize) -> Result<Self> {
        fn go(node: &TreeNode, n_features: usize, out: &mut Vec<Node>) -> Result<usize> {
            let at = out.len();
            match node {
                TreeNode::Leaf { leaf } => {
                    if !leaf.is_finite() {
                        return Err(WdlError::Decode("non-finite leaf value".into()));
                    }
                    out.push(Node::Leaf { value: *leaf });
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= n_features {
                        return Err(WdlError::Decode(format!(
                            "split on feature {feature} but only {n_features} features"
                        )));
                    }
                    if threshold.is_nan() {
                        return Err(WdlError::Decode("NaN split threshold".into()));
                    }
                    out.push(Node::Leaf { value: 0.0 });
                    let l = go(left, n_features, out)?;
                    let r = go(right, n_features, out)?;
                    out[at] = Node::Split {
                        feature: *feature,
                        threshold: *threshold,
                        left: l,
                        right: r,
                    };
                }
            }
            Ok(at)
        }
        let mut nodes = Vec::new();
        go(root, n_features, &mut nodes)?;
        Ok(RegressionTree { nodes, n_features })
    }
}

/// Fits a regression tree; see [`fit_tree_with_assignments`].
pub fn fit_tree(x: ArrayView2<f64>, targets: &[f64], params: &TreeParams) -> Result<RegressionTree> {
    fit_tree_with_assignments(x, targets, params).map(|(t, _)| t)
}

/// Greedy CART fit that also returns, for every training row, the index of
/// the leaf it ended up in.
///
/// Candidate thresholds are midpoints between consecutive distinct values of
/// a feature among the node's rows. Ties in improvement go to the lowest
/// feature index, then the lowest threshold.
pub fn fit_tree_with_assignments(
    x: ArrayView2<f64>,
    targets: &[f64],
    params: &TreeParams,
) -> Result<(RegressionTree, Vec<usize>)> {
    params.validate()?;
    let (n, p) = x.dim();
    if n != targets.len() {
        return Err(WdlError::invalid(format!(
            "{n} covariate rows but {} targets",
            targets.len()
        )));
    }
    if p == 0 {
        return Err(WdlError::invalid("covariate matrix has no columns"));
    }
    if n < 2 * params.min_samples_leaf {
        return Err(WdlError::invalid(format!(
            "{n} rows is fewer than twice min_samples_leaf ({})",
            params.min_samples_leaf
        )));
    }
    if x.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(WdlError::invalid("covariates and targets must be finite"));
    }
    let mut builder = Builder {
        x,
        y: targets,
        params,
        nodes: Vec::new(),
        assignment: vec![0; n],
    };
    let rows: Vec<usize> = (0..n).collect();
    builder.grow(rows, 0);
    Ok((
        RegressionTree {
            nodes: builder.nodes,
            n_features: p,
        },
        builder.assignment,
    ))
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    params: &'a TreeParams,
    nodes: Vec<Node>,
    assignment: Vec<usize>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let at = self.nodes.len();
        let mean = rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf { value: mean });
        if depth < self.params.max_depth {
            if let Some(best) = self.best_split(&rows, mean) {
                let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| self.x[[i, best.feature]] <= best.threshold);
                let left = self.grow(l_rows, depth + 1);
                let right = self.grow(r_rows, depth + 1);
                self.nodes[at] = Node::Split {
                    feature: best.feature,
                    threshold: best.threshold,
                    left,
                    right,
                };
                return at;
            }
        }
        for &i in &rows {
            self.assignment[i] = at;
        }
        at
    }

    fn best_split(&self, rows: &[usize], mean: f64) -> Option<BestSplit> {
        let first = self.y[rows[0]];
        if rows.iter().all(|&i| self.y[i] == first) {
            return None;
        }
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf;
        // Centered targets keep the prefix sums well conditioned.
        let sse: f64 = rows.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let total: f64 = rows.iter().map(|&i| self.y[i] - mean).sum();
        let parent = total * total / n as f64;
        let floor = self.params.min_split_improvement.max(sse * 1e-12);
        let mut best: Option<BestSplit> = None;
        let mut order = rows.to_vec();
        for f in 0..self.x.ncols() {
            order.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for j in 0..n - 1 {
                left_sum += self.y[order[j]] - mean;
                let nl = j + 1;
                let nr = n - nl;
                if nl < min_leaf {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let lo = self.x[[order[j], f]];
                let hi = self.x[[order[j + 1], f]];
                if lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - parent;
                if gain > floor && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }
}

/// Prediction of `tree` at `x`: go left iff `x[feature] <= threshold`.
pub fn predict_tree(tree: &RegressionTree, x: &[f64]) -> Result<f64> {
    tree.check_dim(x)?;
    Ok(tree.value_at(tree.route(x)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    pub base_value: f64,
    pub learning_rate: f64,
    trees: Vec<RegressionTree>,
}

impl TreeEnsemble {
    pub fn new(base_value: f64, learning_rate: f64) -> Result<Self> {
        if !base_value.is_finite() {
            return Err(WdlError::invalid("ensemble base value must be finite"));
        }
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(WdlError::invalid("learning rate must be positive"));
        }
        Ok(TreeEnsemble {
            base_value,
            learning_rate,
            trees: Vec::new(),
        })
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn push(&mut self, tree: RegressionTree) {
        self.trees.push(tree);
    }

    /// Drops every tree after the first `m`.
    pub fn truncate(&mut self, m: usize) {
        self.trees.truncate(m);
    }
}

/// `base_value + learning_rate * sum_m predict_tree(tree_m, x)`.
pub fn ensemble_predict(ens: &TreeEnsemble, x: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for t in &ens.trees {
        sum += predict_tree(t, x)?;
    }
    Ok(ens.base_value + ens.learning_rate * sum)
}
