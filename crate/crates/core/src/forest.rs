//! Binary-classification random forest: bootstrapped CART trees split on Gini
//! impurity, predicting the mean positive-class leaf frequency.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::EncodedDataset;
use crate::scalar::Scalar;
use crate::seeding::{self, tags, StreamRng};

/// Version written into serialized forests.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training data is empty")]
    EmptyTrainingData,
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("feature count mismatch: forest expects {expected}, got {found}")]
    FeatureMismatch { expected: usize, found: usize },
    #[error("unsupported forest format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed forest document: {0}")]
    Malformed(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// How many features are considered at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturesPerSplit {
    /// `max(1, floor(sqrt(F)))`
    #[default]
    Sqrt,
    All,
    Count(usize),
}

impl FeaturesPerSplit {
    pub fn resolve(self, n_features: usize) -> usize {
        let m = match self {
            Self::Sqrt => (n_features as f64).sqrt().floor() as usize,
            Self::All => n_features,
            Self::Count(k) => k,
        };
        m.clamp(1, n_features.max(1))
    }
}

/// Tuned triple `(n_trees, max_depth, train_proportion)` plus fixed settings.
///
/// `max_depth = None` means unlimited; it is enforced as a depth bound equal
/// to the number of training rows, which no tree can reach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub train_proportion: f64,
    #[serde(default)]
    pub features_per_split: FeaturesPerSplit,
    #[serde(default = "default_min_samples_leaf")]
    pub min_samples_leaf: usize,
}

fn default_min_samples_leaf() -> usize {
    1
}

impl ForestParams {
    pub fn new(n_trees: usize, max_depth: Option<usize>, train_proportion: f64) -> Self {
        Self {
            n_trees,
            max_depth,
            train_proportion,
            features_per_split: FeaturesPerSplit::Sqrt,
            min_samples_leaf: 1,
        }
    }

    /// 10 trees, unlimited depth, full training data.
    pub fn baseline() -> Self {
        Self::new(10, None, 1.0)
    }

    pub fn with_features_per_split(mut self, rule: FeaturesPerSplit) -> Self {
        self.features_per_split = rule;
        self
    }

    pub fn with_min_samples_leaf(mut self, min_samples_leaf: usize) -> Self {
        self.min_samples_leaf = min_samples_leaf;
        self
    }

    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidParams("n_trees must be at least 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(ForestError::InvalidParams("max_depth must be at least 1".into()));
        }
        if !(self.train_proportion > 0.0 && self.train_proportion <= 1.0) {
            return Err(ForestError::InvalidParams(format!(
                "train_proportion {} outside (0, 1]",
                self.train_proportion
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(ForestError::InvalidParams(
                "min_samples_leaf must be at least 1".into(),
            ));
        }
        if self.features_per_split == FeaturesPerSplit::Count(0) {
            return Err(ForestError::InvalidParams(
                "features_per_split must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Depth bound actually enforced for a training set of `train_size` rows.
    pub fn depth_bound(&self, train_size: usize) -> usize {
        self.max_depth.unwrap_or(train_size.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node<T> {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf { probability: T },
}

/// Flat node array; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> DecisionTree<T> {
    pub fn from_nodes(nodes: Vec<Node<T>>) -> Result<Self, ForestError> {
        let tree = Self { nodes };
        tree.check()?;
        Ok(tree)
    }

    /// Single-leaf tree.
    pub fn constant(probability: T) -> Self {
        Self {
            nodes: vec![Node::Leaf { probability }],
        }
    }

    fn check(&self) -> Result<(), ForestError> {
        if self.nodes.is_empty() {
            return Err(ForestError::Malformed("tree has no nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Split { left, right, .. } => {
                    // children come after their parent, which rules out cycles
                    if left <= i || right <= i || left >= self.nodes.len() || right >= self.nodes.len()
                    {
                        return Err(ForestError::Malformed(format!(
                            "node {i} has invalid children ({left}, {right})"
                        )));
                    }
                }
                Node::Leaf { probability } => {
                    if !(probability >= T::zero() && probability <= T::one()) {
                        return Err(ForestError::Malformed(format!(
                            "node {i} has probability {probability} outside [0, 1]"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn predict_row(&self, row: ArrayView1<'_, T>) -> T {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { probability } => return probability,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Length of the longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            match self.nodes[i] {
                Node::Leaf { .. } => deepest = deepest.max(d),
                Node::Split { left, right, .. } => {
                    stack.push((left, d + 1));
                    stack.push((right, d + 1));
                }
            }
        }
        deepest
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest<T> {
    trees: Vec<DecisionTree<T>>,
    params: ForestParams,
    seed: u64,
    n_features: usize,
}

#[derive(Serialize, Deserialize)]
struct ForestDocument<T> {
    format_version: u32,
    #[serde(flatten)]
    forest: RandomForest<T>,
}

impl<T: Scalar> RandomForest<T> {
    /// Assembles a forest from already-grown trees.
    pub fn from_trees(
        trees: Vec<DecisionTree<T>>,
        params: ForestParams,
        seed: u64,
        n_features: usize,
    ) -> Result<Self, ForestError> {
        if trees.is_empty() {
            return Err(ForestError::InvalidParams("a forest needs at least one tree".into()));
        }
        for tree in &trees {
            tree.check()?;
            if let Some(f) = tree.max_feature() {
                if f >= n_features {
                    return Err(ForestError::Malformed(format!(
                        "split on feature {f} but the forest has {n_features} features"
                    )));
                }
            }
        }
        Ok(Self {
            trees,
            params,
            seed,
            n_features,
        })
    }

    pub fn trees(&self) -> &[DecisionTree<T>] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn to_json(&self) -> Result<String, ForestError> {
        let doc = ForestDocument {
            format_version: FORMAT_VERSION,
            forest: self.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(json: &str) -> Result<Self, ForestError> {
        let value: serde_json::Value = serde_json::from_str(json)?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| ForestError::Malformed("missing format_version".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(ForestError::UnsupportedVersion(version as u32));
        }
        let doc: ForestDocument<T> = serde_json::from_value(value)?;
        let f = doc.forest;
        Self::from_trees(f.trees, f.params, f.seed, f.n_features)
    }
}

/// Trains `params.n_trees` trees in parallel. Tree `t` draws its bootstrap and
/// feature subsets from a stream derived from `(seed, t)`, so the result does
/// not depend on the thread count.
pub fn train_forest<T: Scalar>(
    train: &EncodedDataset<T>,
    params: &ForestParams,
    seed: u64,
) -> Result<RandomForest<T>, ForestError> {
    params.validate()?;
    if train.n_rows() == 0 {
        return Err(ForestError::EmptyTrainingData);
    }
    let grower = TreeGrower::new(train, params);
    let trees: Vec<DecisionTree<T>> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeding::rng_from(tree_seed(seed, t));
            grower.grow(&mut rng)
        })
        .collect();
    Ok(RandomForest {
        trees,
        params: params.clone(),
        seed,
        n_features: train.n_features(),
    })
}

fn tree_seed(seed: u64, tree_index: usize) -> u64 {
    seeding::derive(seed, &[tags::TREE, tree_index as u64])
}

/// Bootstrap row indices for tree `tree_index`, exactly as used in training.
pub fn bootstrap_indices(n_rows: usize, seed: u64, tree_index: usize) -> Vec<usize> {
    let mut rng = seeding::rng_from(tree_seed(seed, tree_index));
    draw_bootstrap(n_rows, &mut rng)
}

fn draw_bootstrap(n_rows: usize, rng: &mut StreamRng) -> Vec<usize> {
    (0..n_rows).map(|_| rng.random_range(0..n_rows)).collect()
}

/// Mean leaf probability over trees for every row of `features`.
pub fn predict_proba<T: Scalar>(
    forest: &RandomForest<T>,
    features: &Array2<T>,
) -> Result<Vec<T>, ForestError> {
    if features.ncols() != forest.n_features {
        return Err(ForestError::FeatureMismatch {
            expected: forest.n_features,
            found: features.ncols(),
        });
    }
    let n_trees = T::of(forest.trees.len() as f64);
    Ok(features
        .rows()
        .into_iter()
        .map(|row| {
            let total: T = forest.trees.iter().map(|tree| tree.predict_row(row)).sum();
            total / n_trees
        })
        .collect())
}

/// Analytic training cost in model units:
/// `n_trees * n * log2(n + 1) * min(depth, log2(n + 1))`.
pub fn training_cost(train_size: usize, params: &ForestParams) -> f64 {
    let n = train_size.max(1) as f64;
    let log_n = (n + 1.0).log2();
    let depth = params.depth_bound(train_size) as f64;
    params.n_trees as f64 * n * log_n * depth.min(log_n)
}

struct TreeGrower<'a, T> {
    data: &'a EncodedDataset<T>,
    depth_bound: usize,
    features_per_split: usize,
    min_samples_leaf: usize,
}

struct Candidate<T> {
    feature: usize,
    threshold: T,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl<'a, T: Scalar> TreeGrower<'a, T> {
    fn new(data: &'a EncodedDataset<T>, params: &ForestParams) -> Self {
        Self {
            data,
            depth_bound: params.depth_bound(data.n_rows()),
            features_per_split: params.features_per_split.resolve(data.n_features()),
            min_samples_leaf: params.min_samples_leaf,
        }
    }

    fn grow(&self, rng: &mut StreamRng) -> DecisionTree<T> {
        let sample = draw_bootstrap(self.data.n_rows(), rng);
        let mut nodes = Vec::new();
        self.grow_node(sample, 0, rng, &mut nodes);
        DecisionTree { nodes }
    }

    /// Appends the subtree for `sample` and returns its node index.
    fn grow_node(
        &self,
        sample: Vec<usize>,
        depth: usize,
        rng: &mut StreamRng,
        nodes: &mut Vec<Node<T>>,
    ) -> usize {
        let positives = sample.iter().filter(|&&i| self.data.labels[i] == 1).count();
        let n = sample.len();
        let index = nodes.len();
        let leaf = Node::Leaf {
            probability: T::of(positives as f64 / n as f64),
        };
        nodes.push(leaf);

        let pure = positives == 0 || positives == n;
        if pure || depth >= self.depth_bound || n < 2 * self.min_samples_leaf {
            return index;
        }
        let Some(split) = self.best_split(&sample, rng) else {
            return index;
        };
        let left = self.grow_node(split.left, depth + 1, rng, nodes);
        let right = self.grow_node(split.right, depth + 1, rng, nodes);
        nodes[index] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        index
    }

    /// Best Gini split over a random feature subset. Ties keep the lowest
    /// feature index, then the lowest threshold.
    fn best_split(&self, sample: &[usize], rng: &mut StreamRng) -> Option<Candidate<T>> {
        let n_features = self.data.n_features();
        let mut features =
            rand::seq::index::sample(rng, n_features, self.features_per_split).into_vec();
        features.sort_unstable();

        let n = sample.len();
        let total_pos = sample.iter().filter(|&&i| self.data.labels[i] == 1).count() as f64;
        let mut best: Option<(usize, T, f64)> = None;
        let mut column: Vec<(T, u8)> = Vec::with_capacity(n);
        for &feature in &features {
            column.clear();
            column.extend(
                sample
                    .iter()
                    .map(|&i| (self.data.features[[i, feature]], self.data.labels[i])),
            );
            column.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));

            let mut left_pos = 0.0;
            for k in 0..n - 1 {
                left_pos += f64::from(column[k].1);
                let (lo, hi) = (column[k].0, column[k + 1].0);
                if lo == hi {
                    continue;
                }
                let n_left = k + 1;
                let n_right = n - n_left;
                if n_left < self.min_samples_leaf || n_right < self.min_samples_leaf {
                    continue;
                }
                let score = gini_score(left_pos, n_left as f64)
                    + gini_score(total_pos - left_pos, n_right as f64);
                if best.is_none_or(|(_, _, s)| score > s) {
                    best = Some((feature, midpoint(lo, hi), score));
                }
            }
        }
        let (feature, threshold, _) = best?;
        let (left, right) = sample
            .iter()
            .partition(|&&i| self.data.features[[i, feature]] <= threshold);
        Some(Candidate {
            feature,
            threshold,
            left,
            right,
        })
    }
}

/// `(p^2 + q^2) / n` for a child with `p` positives out of `n`. Maximizing the
/// sum over both children minimizes the size-weighted Gini impurity.
#[inline]
fn gini_score(positives: f64, n: f64) -> f64 {
    let negatives = n - positives;
    (positives * positives + negatives * negatives) / n
}

/// Midpoint of two distinct sorted values that still separates them.
fn midpoint<T: Scalar>(lo: T, hi: T) -> T {
    let two = T::one() + T::one();
    let mid = lo + (hi - lo) / two;
    if mid >= hi || mid < lo {
        lo
    } else {
        mid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dataset(features: Array2<f64>, labels: Vec<u8>) -> EncodedDataset<f64> {
        let names = (0..features.ncols()).map(|i| format!("f{i}")).collect();
        EncodedDataset::new(features, labels, names).unwrap()
    }

    #[test]
    fn single_class_data_gives_constant_predictions() {
        let x = Array2::from_shape_fn((30, 3), |(i, j)| (i * 7 + j * 3) as f64 % 11.0);
        let data = dataset(x.clone(), vec![1; 30]);
        let forest = train_forest(&data, &ForestParams::new(5, Some(4), 1.0), 3).unwrap();
        for tree in forest.trees() {
            assert_eq!(tree.nodes().len(), 1);
        }
        let p = predict_proba(&forest, &x).unwrap();
        assert!(p.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn stump_separates_one_dimensional_classes() {
        let xs = [-3.0, -2.6, -2.3, -2.0, 2.0, 2.4, 2.7, 3.0];
        let labels: Vec<u8> = xs.iter().map(|&x| u8::from(x >= 0.0)).collect();
        let x = Array2::from_shape_vec((8, 1), xs.to_vec()).unwrap();
        let data = dataset(x.clone(), labels.clone());

        // Oracle: enumerate every midpoint threshold and its weighted Gini.
        let mut sorted = xs.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let gini = |ls: &[u8]| {
            if ls.is_empty() {
                return 0.0;
            }
            let p = ls.iter().filter(|&&l| l == 1).count() as f64 / ls.len() as f64;
            1.0 - p * p - (1.0 - p) * (1.0 - p)
        };
        let mut best = (f64::INFINITY, 0.0);
        for w in sorted.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let l: Vec<u8> = xs.iter().zip(&labels).filter(|(&x, _)| x <= t).map(|(_, &y)| y).collect();
            let r: Vec<u8> = xs.iter().zip(&labels).filter(|(&x, _)| x > t).map(|(_, &y)| y).collect();
            let w_gini = l.len() as f64 * gini(&l) + r.len() as f64 * gini(&r);
            if w_gini < best.0 {
                best = (w_gini, t);
            }
        }
        assert_eq!(best, (0.0, 0.0));

        // A bootstrap with both classes puts its midpoint inside the class
        // gap, so the stump still separates every row.
        let params = ForestParams::new(1, Some(1), 1.0).with_features_per_split(FeaturesPerSplit::All);
        for seed in 0..20 {
            let forest = train_forest(&data, &params, seed).unwrap();
            let tree = &forest.trees()[0];
            if let Node::Split { threshold, .. } = tree.nodes()[0] {
                assert!((-0.5..=0.5).contains(&threshold));
                let p = predict_proba(&forest, &x).unwrap();
                let as_labels: Vec<u8> = p.iter().map(|&v| v as u8).collect();
                assert_eq!(as_labels, labels);
                assert!(p.iter().all(|&v| v == 0.0 || v == 1.0));
                return;
            }
        }
        panic!("no bootstrap with both classes in 20 seeds");
    }

    #[test]
    fn training_is_deterministic() {
        let x = Array2::from_shape_fn((60, 4), |(i, j)| ((i * 31 + j * 17) % 23) as f64);
        let labels = (0..60).map(|i| u8::from((i * 31) % 23 > 11)).collect();
        let data = dataset(x, labels);
        let params = ForestParams::new(8, Some(5), 1.0);
        let a = train_forest(&data, &params, 99).unwrap();
        let b = train_forest(&data, &params, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn mean_of_two_trees() {
        let left = DecisionTree::from_nodes(vec![
            Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2 },
            Node::Leaf { probability: 0.2 },
            Node::Leaf { probability: 0.9 },
        ])
        .unwrap();
        let right = DecisionTree::constant(0.6);
        let forest =
            RandomForest::from_trees(vec![left.clone(), right], ForestParams::new(2, None, 1.0), 0, 1)
                .unwrap();
        let p = predict_proba(&forest, &array![[0.0], [1.0]]).unwrap();
        approx::assert_abs_diff_eq!(p[0], 0.4, epsilon = 1e-15);
        approx::assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-15);

        let single = RandomForest::from_trees(vec![left.clone()], ForestParams::new(1, None, 1.0), 0, 1)
            .unwrap();
        let x = array![[0.0], [0.7]];
        let p = predict_proba(&single, &x).unwrap();
        assert_eq!(p, vec![left.predict_row(x.row(0)), left.predict_row(x.row(1))]);
    }

    #[test]
    fn feature_mismatch_is_rejected() {
        let forest = RandomForest::from_trees(
            vec![DecisionTree::constant(0.5)],
            ForestParams::new(1, None, 1.0),
            0,
            3,
        )
        .unwrap();
        let err = predict_proba(&forest, &Array2::<f64>::zeros((2, 2))).unwrap_err();
        assert!(matches!(err, ForestError::FeatureMismatch { expected: 3, found: 2 }));
    }

    #[test]
    fn empty_training_data_is_rejected() {
        let data = dataset(Array2::zeros((0, 2)), vec![]);
        assert!(matches!(
            train_forest(&data, &ForestParams::new(1, None, 1.0), 0),
            Err(ForestError::EmptyTrainingData)
        ));
    }

    #[test]
    fn invalid_params_are_rejected() {
        for params in [
            ForestParams::new(0, None, 1.0),
            ForestParams::new(1, Some(0), 1.0),
            ForestParams::new(1, None, 0.0),
            ForestParams::new(1, None, 1.01),
            ForestParams::new(1, None, 1.0).with_min_samples_leaf(0),
        ] {
            assert!(params.validate().is_err(), "{params:?}");
        }
    }

    #[test]
    fn cost_model() {
        let p10 = ForestParams::new(10, Some(5), 1.0);
        let p20 = ForestParams::new(20, Some(5), 1.0);
        assert_eq!(training_cost(1000, &p20), 2.0 * training_cost(1000, &p10));
        let expected = 10.0 * 1000.0 * 1001f64.log2() * 5.0;
        assert_eq!(training_cost(1000, &p10), expected);
        assert!((expected - 498_361.3).abs() < 0.1, "{expected}");

        let log_n = 1001f64.log2();
        let mut last = 0.0;
        for d in 1..=30 {
            let c = training_cost(1000, &ForestParams::new(10, Some(d), 1.0));
            assert!(c >= last);
            if d as f64 > log_n {
                assert_eq!(c, training_cost(1000, &ForestParams::new(10, None, 1.0)));
            }
            last = c;
        }
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| (i as f64 - 20.0) * (j as f64 + 1.0));
        let labels = (0..40).map(|i| u8::from(i >= 20)).collect();
        let forest = train_forest(&dataset(x, labels), &ForestParams::new(3, Some(3), 1.0), 5).unwrap();
        let json = forest.to_json().unwrap();
        assert!(json.contains("\"format_version\":1"));
        assert_eq!(RandomForest::<f64>::from_json(&json).unwrap(), forest);
        let bumped = json.replace("\"format_version\":1", "\"format_version\":2");
        assert!(matches!(
            RandomForest::<f64>::from_json(&bumped),
            Err(ForestError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn features_per_split_rule() {
        assert_eq!(FeaturesPerSplit::Sqrt.resolve(15), 3);
        assert_eq!(FeaturesPerSplit::Sqrt.resolve(1), 1);
        assert_eq!(FeaturesPerSplit::All.resolve(7), 7);
        assert_eq!(FeaturesPerSplit::Count(10).resolve(7), 7);
    }

    #[test]
    fn midpoint_separates_adjacent_floats() {
        let lo = 1.0f32;
        let hi = f32::from_bits(lo.to_bits() + 1);
        let m = midpoint(lo, hi);
        assert!(lo <= m && m < hi);
    }
}
