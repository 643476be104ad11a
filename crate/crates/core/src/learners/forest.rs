//! Gini decision trees and a bootstrap random forest over them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Size of the random feature subset examined at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Log2,
    Sqrt,
    All,
}

impl MaxFeatures {
    pub fn count(self, n_features: usize) -> usize {
        let d = n_features as f64;
        let m = match self {
            MaxFeatures::Log2 if n_features > 0 => d.log2().floor() as usize,
            MaxFeatures::Sqrt => d.sqrt().floor() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Log2 => 0,
        };
        m.max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Voting {
    /// Average the per-tree leaf class frequencies.
    Soft,
    /// Each tree votes for its most frequent leaf class.
    Majority,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestOptions {
    pub n_estimators: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub voting: Voting,
    pub seed: u64,
}

impl Default for ForestOptions {
    fn default() -> Self {
        ForestOptions {
            n_estimators: 10,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            voting: Voting::Soft,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
enum Node<T: Scalar> {
    Leaf {
        distribution: Vec<T>,
    },
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct DecisionTree<T: Scalar> {
    nodes: Vec<Node<T>>,
    n_classes: usize,
}

struct SplitChoice<T> {
    feature: usize,
    threshold: T,
    score: f64,
}

/// `n·gini = n − Σ c²/n`, the size-weighted impurity of a node.
#[cfg(test)]
fn weighted_gini(counts: &[usize], n: usize) -> f64 {
    gini_from_squares(counts.iter().map(|&c| (c as u64) * (c as u64)).sum(), n)
}

#[inline]
fn gini_from_squares(sq: u64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    n as f64 - sq as f64 / n as f64
}

#[inline(always)]
fn move_left(left: &mut usize, right: &mut usize, w: usize, sq_left: &mut u64, sq_right: &mut u64) {
    let (l, r, w) = (*left as u64, *right as u64, w as u64);
    *sq_left += 2 * l * w + w * w;
    *sq_right -= 2 * r * w - w * w;
    *left += w as usize;
    *right -= w as usize;
}

/// Cost of a row lookup relative to scanning one column entry.
const ROW_PROBE_COST: usize = 8;

/// Nonzero training features indexed both by row and by column.
struct Columns<T> {
    rows: usize,
    row_starts: Vec<usize>,
    row_cols: Vec<u32>,
    row_vals: Vec<T>,
    col_starts: Vec<usize>,
    col_rows: Vec<u32>,
    col_vals: Vec<T>,
    /// Position in `dense` of each column stored densely, else `NOT_DENSE`.
    dense_slot: Vec<usize>,
    dense: Vec<T>,
}

const NOT_DENSE: usize = usize::MAX;

impl<T: Scalar> Columns<T> {
    fn new(x: &Matrix<T>) -> Self {
        let (rows, cols) = (x.rows(), x.cols());
        let mut row_starts = Vec::with_capacity(rows + 1);
        let mut row_cols = Vec::new();
        let mut row_vals = Vec::new();
        let mut col_counts = vec![0usize; cols];
        row_starts.push(0);
        for row in x.iter_rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    row_cols.push(j as u32);
                    row_vals.push(v);
                    col_counts[j] += 1;
                }
            }
            row_starts.push(row_cols.len());
        }
        let mut col_starts = Vec::with_capacity(cols + 1);
        col_starts.push(0);
        for c in &col_counts {
            col_starts.push(col_starts.last().unwrap() + c);
        }
        let mut fill = col_starts[..cols].to_vec();
        let mut col_rows = vec![0u32; row_cols.len()];
        let mut col_vals = vec![T::zero(); row_cols.len()];
        for i in 0..rows {
            for k in row_starts[i]..row_starts[i + 1] {
                let j = row_cols[k] as usize;
                col_rows[fill[j]] = i as u32;
                col_vals[fill[j]] = row_vals[k];
                fill[j] += 1;
            }
        }
        let mut entries = Vec::new();
        for j in 0..cols {
            let (lo, hi) = (col_starts[j], col_starts[j + 1]);
            entries.clear();
            entries.extend(col_vals[lo..hi].iter().copied().zip(col_rows[lo..hi].iter().copied()));
            entries.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
            for (k, (v, i)) in entries.iter().enumerate() {
                col_vals[lo + k] = *v;
                col_rows[lo + k] = *i;
            }
        }
        let mut dense_slot = vec![NOT_DENSE; cols];
        let mut dense = Vec::new();
        for j in 0..cols {
            if (col_starts[j + 1] - col_starts[j]) * ROW_PROBE_COST >= rows {
                dense_slot[j] = dense.len();
                dense.extend(x.iter_rows().map(|row| row[j]));
            }
        }
        Columns {
            rows,
            row_starts,
            row_cols,
            row_vals,
            col_starts,
            col_rows,
            col_vals,
            dense_slot,
            dense,
        }
    }

    fn cols(&self) -> usize {
        self.col_starts.len() - 1
    }

    fn nonzero_in_row(&self, i: usize) -> &[u32] {
        &self.row_cols[self.row_starts[i]..self.row_starts[i + 1]]
    }

    fn column_len(&self, j: usize) -> usize {
        self.col_starts[j + 1] - self.col_starts[j]
    }

    fn row(&self, i: usize) -> (&[u32], &[T]) {
        let (lo, hi) = (self.row_starts[i], self.row_starts[i + 1]);
        (&self.row_cols[lo..hi], &self.row_vals[lo..hi])
    }

    fn get(&self, i: usize, j: usize) -> T {
        let slot = self.dense_slot[j];
        if slot != NOT_DENSE {
            return self.dense[slot + i];
        }
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    fn mean_row_nonzeros(&self) -> usize {
        self.row_cols.len().div_ceil(self.rows.max(1))
    }
}

/// Training rows reaching the node being split.
struct NodeRows<'a> {
    samples: &'a [usize],
    /// `node_of[i] == id` for every row of the node.
    node_of: &'a [usize],
    id: usize,
    y: &'a [usize],
    weight: &'a [usize],
}

struct SplitBuffers<T> {
    /// `(value, class, weight)` of the node's nonzero entries.
    nonzero: Vec<(T, u32, u32)>,
    /// Whether `nonzero` is already in ascending value order.
    sorted: bool,
    zeros: Vec<usize>,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl<T> SplitBuffers<T> {
    fn new(n_classes: usize) -> Self {
        SplitBuffers {
            nonzero: Vec::new(),
            sorted: false,
            zeros: vec![0; n_classes],
            left: vec![0; n_classes],
            right: vec![0; n_classes],
        }
    }
}

/// Calls `visit(row, value)` for the node's nonzero entries in column `f`,
/// walking whichever of the node rows and the column's nonzero rows is
/// cheaper. Returns true when the entries were visited in ascending value
/// order.
#[inline(always)]
fn for_each_nonzero<T: Scalar>(columns: &Columns<T>, f: usize, node: &NodeRows<'_>, mut visit: impl FnMut(usize, T)) -> bool {
    let slot = columns.dense_slot[f];
    if slot != NOT_DENSE {
        let values = &columns.dense[slot..slot + columns.rows];
        for &i in node.samples {
            let v = values[i];
            if v != T::zero() {
                visit(i, v);
            }
        }
    } else if node.samples.len() * ROW_PROBE_COST <= columns.column_len(f) {
        for &i in node.samples {
            let v = columns.get(i, f);
            if v != T::zero() {
                visit(i, v);
            }
        }
    } else {
        let (lo, hi) = (columns.col_starts[f], columns.col_starts[f + 1]);
        for (&i, &v) in columns.col_rows[lo..hi].iter().zip(&columns.col_vals[lo..hi]) {
            let i = i as usize;
            if node.node_of[i] == node.id {
                visit(i, v);
            }
        }
        return true;
    }
    false
}

/// Collects the node's nonzero entries in column `f` into `buf`.
fn gather_nonzero<T: Scalar>(columns: &Columns<T>, f: usize, node: &NodeRows<'_>, buf: &mut SplitBuffers<T>) {
    let out = &mut buf.nonzero;
    out.clear();
    buf.sorted = for_each_nonzero(columns, f, node, |i, v| out.push((v, node.y[i] as u32, node.weight[i] as u32)));
}

/// Best threshold given the node's class totals and its nonzero entries in
/// `buf.nonzero`. Zeros form one block and only nonzero values are sorted;
/// candidate thresholds are midpoints between consecutive distinct values.
fn best_split_from<T: Scalar>(total: &[usize], buf: &mut SplitBuffers<T>) -> Option<(T, f64)> {
    let n: usize = total.iter().sum();
    buf.zeros.copy_from_slice(total);
    let mut n_zero = n;
    for &(_, c, w) in &buf.nonzero {
        buf.zeros[c as usize] -= w as usize;
        n_zero -= w as usize;
    }
    if !buf.sorted {
        buf.nonzero
            .sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
    }
    let n_neg = buf.nonzero.partition_point(|p| p.0 < T::zero());
    buf.left.iter_mut().for_each(|c| *c = 0);
    buf.right.copy_from_slice(total);
    // Sums of squared class counts on each side, kept exact.
    let mut sq_left: u64 = 0;
    let mut sq_right: u64 = total.iter().map(|&c| (c as u64) * (c as u64)).sum();
    let mut best: Option<(T, f64)> = None;
    let mut taken = 0;
    let mut k = 0;
    // Groups of equal values in ascending order, the zero block in place.
    let mut zero_pending = n_zero > 0;
    loop {
        let value;
        if zero_pending && k == n_neg {
            zero_pending = false;
            value = T::zero();
            for (c, &z) in buf.zeros.iter().enumerate() {
                if z > 0 {
                    move_left(&mut buf.left[c], &mut buf.right[c], z, &mut sq_left, &mut sq_right);
                }
            }
            taken += n_zero;
        } else if k < buf.nonzero.len() {
            value = buf.nonzero[k].0;
            while k < buf.nonzero.len() && buf.nonzero[k].0 == value {
                let (_, c, w) = buf.nonzero[k];
                let (c, w) = (c as usize, w as usize);
                move_left(&mut buf.left[c], &mut buf.right[c], w, &mut sq_left, &mut sq_right);
                k += 1;
                taken += w;
            }
        } else {
            break;
        }
        if taken == n {
            break;
        }
        let next = if zero_pending && k == n_neg {
            T::zero()
        } else {
            buf.nonzero[k].0
        };
        let score = gini_from_squares(sq_left, taken) + gini_from_squares(sq_right, n - taken);
        if best.is_none_or(|b| score < b.1) {
            let mut threshold = (value + next) / T::of(2.0);
            // Midpoint may round up to `next` in low precision.
            if !(threshold < next) {
                threshold = value;
            }
            best = Some((threshold, score));
        }
    }
    best
}

impl<T: Scalar> DecisionTree<T> {
    /// Grows a tree on `samples` (row indices, repeats allowed) until nodes
    /// are pure, smaller than two samples, or constant on every feature.
    pub fn fit(
        x: &Matrix<T>,
        y: &[usize],
        n_classes: usize,
        samples: Vec<usize>,
        max_features: MaxFeatures,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self::fit_columns(&Columns::new(x), y, n_classes, samples, max_features, rng)
    }

    /// At each node the first `max_features` non-constant features of a
    /// uniformly random feature order are examined.
    fn fit_columns(
        columns: &Columns<T>,
        y: &[usize],
        n_classes: usize,
        samples: Vec<usize>,
        max_features: MaxFeatures,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let d = columns.cols();
        let m = max_features.count(d).min(d.max(1));
        let row_nonzeros = columns.mean_row_nonzeros();
        let mut nodes: Vec<Node<T>> = Vec::new();
        // Each node owns a contiguous range of `order`.
        let mut stack: Vec<(usize, usize, usize)> = Vec::new();
        nodes.push(Node::Leaf {
            distribution: Vec::new(),
        });
        let mut weight = vec![0usize; columns.rows];
        for &i in &samples {
            weight[i] += 1;
        }
        let mut distinct = samples;
        distinct.sort_unstable();
        distinct.dedup();
        let mut node_of = vec![usize::MAX; columns.rows];
        let mut goes_left = vec![false; columns.rows];
        for &i in &distinct {
            node_of[i] = 0;
        }
        let mut order = distinct;
        stack.push((0, 0, order.len()));
        let mut all_features: Vec<usize> = (0..d).collect();
        let mut candidates: Vec<usize> = Vec::new();
        let mut stamp = vec![0usize; d];
        let mut visit = 0;
        let mut buf = SplitBuffers::new(n_classes);
        let mut counts = vec![0usize; n_classes];

        while let Some((slot, start, end)) = stack.pop() {
            let node_samples = &order[start..end];
            counts.iter_mut().for_each(|c| *c = 0);
            for &i in node_samples {
                counts[y[i]] += weight[i];
            }
            let n: usize = counts.iter().sum();
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let mut choice: Option<SplitChoice<T>> = None;
            if !pure && n >= 2 {
                let node = NodeRows {
                    samples: node_samples,
                    node_of: &node_of,
                    id: slot,
                    y,
                    weight: &weight,
                };
                // Small nodes draw only from features nonzero somewhere in
                // the node; the rest are constant zero there.
                let pool: &mut Vec<usize> = if node_samples.len() * row_nonzeros < d {
                    visit += 1;
                    candidates.clear();
                    for &i in node_samples {
                        for &f in columns.nonzero_in_row(i) {
                            let f = f as usize;
                            if stamp[f] != visit {
                                stamp[f] = visit;
                                candidates.push(f);
                            }
                        }
                    }
                    &mut candidates
                } else {
                    &mut all_features
                };
                let mut examined = 0;
                for pos in 0..pool.len() {
                    if examined >= m {
                        break;
                    }
                    let pick = rng.gen_range(pos..pool.len());
                    pool.swap(pos, pick);
                    let f = pool[pos];
                    gather_nonzero(columns, f, &node, &mut buf);
                    if let Some((threshold, score)) = best_split_from(&counts, &mut buf) {
                        examined += 1;
                        if choice.as_ref().is_none_or(|c| score < c.score) {
                            choice = Some(SplitChoice {
                                feature: f,
                                threshold,
                                score,
                            });
                        }
                    }
                }
            }
            match choice {
                None => {
                    let inv = T::one() / T::of_usize(n.max(1));
                    nodes[slot] = Node::Leaf {
                        distribution: counts.iter().map(|&c| T::of_usize(c) * inv).collect(),
                    };
                }
                Some(split) => {
                    let zero_left = T::zero() <= split.threshold;
                    for &i in &order[start..end] {
                        goes_left[i] = zero_left;
                    }
                    let node = NodeRows {
                        samples: &order[start..end],
                        node_of: &node_of,
                        id: slot,
                        y,
                        weight: &weight,
                    };
                    for_each_nonzero(columns, split.feature, &node, |i, v| goes_left[i] = v <= split.threshold);
                    let rows = &mut order[start..end];
                    let mut mid = 0;
                    for k in 0..rows.len() {
                        if goes_left[rows[k]] {
                            rows.swap(mid, k);
                            mid += 1;
                        }
                    }
                    let left = nodes.len();
                    let right = left + 1;
                    for (k, &i) in rows.iter().enumerate() {
                        node_of[i] = if k < mid { left } else { right };
                    }
                    nodes.push(Node::Leaf { distribution: Vec::new() });
                    nodes.push(Node::Leaf { distribution: Vec::new() });
                    nodes[slot] = Node::Split {
                        feature: split.feature,
                        threshold: split.threshold,
                        left,
                        right,
                    };
                    stack.push((right, start + mid, end));
                    stack.push((left, start, start + mid));
                }
            }
        }
        DecisionTree { nodes, n_classes }
    }

    pub fn leaf_distribution(&self, row: &[T]) -> &[T] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { distribution } => return distribution,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Per-tree RNG seed, decorrelated from neighbouring tree indices.
fn tree_seed(seed: u64, tree: usize) -> u64 {
    let mut z = seed ^ (tree as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn bootstrap_sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct RandomForest<T: Scalar> {
    trees: Vec<DecisionTree<T>>,
    n_classes: usize,
    n_features: usize,
    n_train: usize,
    options: ForestOptions,
}

impl<T: Scalar> RandomForest<T> {
    pub fn fit(x: &Matrix<T>, y: &[usize], n_classes: usize, options: &ForestOptions) -> Result<Self> {
        if options.n_estimators == 0 {
            return Err(Error::invalid("RF_e must be at least 1"));
        }
        if x.rows() != y.len() || y.is_empty() {
            return Err(Error::invalid("feature rows and labels must be non-empty and aligned"));
        }
        if !x.all_finite() {
            return Err(Error::invalid("non-finite feature values"));
        }
        let n = y.len();
        let columns = Columns::new(x);
        let trees = (0..options.n_estimators)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(options.seed, t));
                let samples = if options.bootstrap {
                    bootstrap_sample(&mut rng, n)
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit_columns(&columns, y, n_classes, samples, options.max_features, &mut rng)
            })
            .collect();
        Ok(RandomForest {
            trees,
            n_classes,
            n_features: x.cols(),
            n_train: n,
            options: *options,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[DecisionTree<T>] {
        &self.trees
    }

    /// Training rows left out of tree `tree`'s bootstrap sample, recomputed
    /// from the forest seed.
    pub fn out_of_bag(&self, tree: usize) -> Vec<usize> {
        if !self.options.bootstrap {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(self.options.seed, tree));
        let mut drawn = vec![false; self.n_train];
        for i in bootstrap_sample(&mut rng, self.n_train) {
            drawn[i] = true;
        }
        (0..self.n_train).filter(|&i| !drawn[i]).collect()
    }

    pub fn predict_proba_row(&self, row: &[T]) -> Vec<T> {
        let mut acc = vec![T::zero(); self.n_classes];
        for tree in &self.trees {
            let dist = tree.leaf_distribution(row);
            match self.options.voting {
                Voting::Soft => {
                    for (a, &p) in acc.iter_mut().zip(dist) {
                        *a = *a + p;
                    }
                }
                Voting::Majority => {
                    let top = argmax(dist);
                    acc[top] = acc[top] + T::one();
                }
            }
        }
        let inv = T::one() / T::of_usize(self.trees.len());
        acc.iter_mut().for_each(|a| *a = *a * inv);
        acc
    }
}

/// Index of the largest value; the first one wins ties.
pub(crate) fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor() -> (Matrix<f64>, Vec<usize>) {
        let x = Matrix::from_rows([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]).unwrap();
        (x, vec![0, 1, 1, 0])
    }

    fn full_tree_options(n: usize, seed: u64) -> ForestOptions {
        ForestOptions {
            n_estimators: n,
            max_features: MaxFeatures::All,
            bootstrap: false,
            voting: Voting::Soft,
            seed,
        }
    }

    #[test]
    fn max_feature_counts() {
        assert_eq!(MaxFeatures::Sqrt.count(100), 10);
        assert_eq!(MaxFeatures::Log2.count(100), 6);
        assert_eq!(MaxFeatures::Log2.count(1), 1);
        assert_eq!(MaxFeatures::Sqrt.count(2), 1);
        assert_eq!(MaxFeatures::All.count(7), 7);
    }

    #[test]
    fn single_tree_shatters_xor() {
        let (x, y) = xor();
        let f = RandomForest::fit(&x, &y, 2, &full_tree_options(1, 0)).unwrap();
        for i in 0..4 {
            assert_eq!(argmax(&f.predict_proba_row(x.row(i))), y[i]);
        }
    }

    #[test]
    fn forest_of_one_equals_plain_tree() {
        let (x, y) = xor();
        let f = RandomForest::fit(&x, &y, 2, &full_tree_options(1, 3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(3, 0));
        let tree = DecisionTree::fit(&x, &y, 2, (0..4).collect(), MaxFeatures::All, &mut rng);
        for row in [[0.2, 0.9], [0.7, 0.1], [1.0, 1.0]] {
            assert_eq!(f.predict_proba_row(&row), tree.leaf_distribution(&row).to_vec());
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let x = Matrix::from_vec(12, 3, (0..36).map(|v| ((v * 7) % 11) as f64).collect()).unwrap();
        let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let opts = ForestOptions {
            n_estimators: 5,
            seed: 42,
            ..Default::default()
        };
        let a = RandomForest::fit(&x, &y, 3, &opts).unwrap();
        let b = RandomForest::fit(&x, &y, 3, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.out_of_bag(2), b.out_of_bag(2));
    }

    #[test]
    fn out_of_bag_rows_are_not_in_the_bootstrap() {
        let x = Matrix::from_vec(30, 1, (0..30).map(f64::from).collect()).unwrap();
        let y: Vec<usize> = (0..30).map(|i| (i >= 15) as usize).collect();
        let opts = ForestOptions {
            n_estimators: 3,
            seed: 9,
            ..Default::default()
        };
        let f = RandomForest::fit(&x, &y, 2, &opts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(9, 1));
        let drawn = bootstrap_sample(&mut rng, 30);
        for i in f.out_of_bag(1) {
            assert!(!drawn.contains(&i));
        }
        assert!(!f.out_of_bag(1).is_empty());
    }

    #[test]
    fn probabilities_are_distributions() {
        let (x, y) = xor();
        let opts = ForestOptions {
            n_estimators: 7,
            seed: 1,
            ..Default::default()
        };
        for voting in [Voting::Soft, Voting::Majority] {
            let f = RandomForest::fit(&x, &y, 2, &ForestOptions { voting, ..opts }).unwrap();
            let p = f.predict_proba_row(&[0.5, 0.5]);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    fn brute_force_split(values: &[f64], y: &[usize], n_classes: usize) -> Option<(f64, f64)> {
        let mut distinct: Vec<f64> = values.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let mut best: Option<(f64, f64)> = None;
        for w in distinct.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let mut l = vec![0; n_classes];
            let mut r = vec![0; n_classes];
            for (&v, &c) in values.iter().zip(y) {
                if v <= t {
                    l[c] += 1;
                } else {
                    r[c] += 1;
                }
            }
            let (nl, nr) = (l.iter().sum(), r.iter().sum());
            let score = weighted_gini(&l, nl) + weighted_gini(&r, nr);
            if best.is_none_or(|b| score < b.1) {
                best = Some((t, score));
            }
        }
        best
    }

    #[test]
    fn split_search_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let n = rng.gen_range(1..30);
            // Column 1 is mostly zero so both gather paths are exercised.
            let rows: Vec<[f64; 2]> = (0..n)
                .map(|_| {
                    let dense = match rng.gen_range(0..4) {
                        0 | 1 => 0.0,
                        2 => -(rng.gen_range(1..4) as f64),
                        _ => rng.gen_range(1..4) as f64 / 2.0,
                    };
                    let sparse = if rng.gen_bool(0.15) { rng.gen_range(1..3) as f64 } else { 0.0 };
                    [dense, sparse]
                })
                .collect();
            let columns = Columns::new(&Matrix::from_rows(&rows).unwrap());
            let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let weight: Vec<usize> = (0..n).map(|_| rng.gen_range(1..4)).collect();
            let samples: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
            let mut node_of = vec![usize::MAX; n];
            samples.iter().for_each(|&i| node_of[i] = 4);
            let mut total = vec![0; 3];
            for &i in &samples {
                total[y[i]] += weight[i];
            }
            let node = NodeRows {
                samples: &samples,
                node_of: &node_of,
                id: 4,
                y: &y,
                weight: &weight,
            };
            for f in 0..2 {
                let mut buf = SplitBuffers::new(3);
                gather_nonzero(&columns, f, &node, &mut buf);
                let got = best_split_from(&total, &mut buf);
                let (mut ev, mut ey) = (Vec::new(), Vec::new());
                for &i in &samples {
                    for _ in 0..weight[i] {
                        ev.push(rows[i][f]);
                        ey.push(y[i]);
                    }
                }
                let want = brute_force_split(&ev, &ey, 3);
                match (got, want) {
                    (None, None) => {}
                    (Some(g), Some(w)) => {
                        assert_eq!(g.0, w.0);
                        assert!((g.1 - w.1).abs() < 1e-12);
                    }
                    other => panic!("{other:?}"),
                }
            }
        }
    }

    #[test]
    fn zero_estimators_is_rejected() {
        let (x, y) = xor();
        assert!(RandomForest::fit(&x, &y, 2, &full_tree_options(0, 0)).is_err());
    }
}
