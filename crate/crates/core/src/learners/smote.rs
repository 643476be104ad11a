//! Synthetic minority oversampling.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::scalar::Scalar;

/// Where an output row of [`smote_oversample`] came from. Indices refer to
/// rows of the input matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowOrigin {
    Original(usize),
    Synthetic { source: usize, neighbor: usize, gap: f64 },
    /// Copy of the only member of a singleton class.
    Duplicate(usize),
}

impl RowOrigin {
    /// Input rows that contributed to this output row.
    pub fn inputs(&self) -> impl Iterator<Item = usize> {
        let (a, b) = match *self {
            RowOrigin::Original(i) | RowOrigin::Duplicate(i) => (i, None),
            RowOrigin::Synthetic { source, neighbor, .. } => (source, Some(neighbor)),
        };
        std::iter::once(a).chain(b)
    }
}

#[derive(Debug, Clone)]
pub struct Oversampled<T, L> {
    pub x: Matrix<T>,
    pub y: Vec<L>,
    pub origin: Vec<RowOrigin>,
}

/// Indices of the `k` nearest rows to `row` among `members` (excluding
/// `row` itself), by Euclidean distance with index tie-break.
pub(crate) fn nearest_members<T: Scalar>(x: &Matrix<T>, row: usize, members: &[usize], k: usize) -> Vec<usize> {
    let mut dist: Vec<(f64, usize)> = members
        .iter()
        .filter(|&&m| m != row)
        .map(|&m| (squared_distance(x.row(row), x.row(m)).as_f64(), m))
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dist.truncate(k);
    dist.into_iter().map(|d| d.1).collect()
}

/// Oversamples every class to the size of the largest class. Each synthetic
/// row is `x + u·(x_nn − x)` with `u ~ U[0, 1)` and `x_nn` drawn from the
/// `k` nearest same-class neighbours of a randomly chosen class member `x`.
/// Input rows come first in the output, unchanged. Classes with fewer than
/// `k + 1` members use `k = size − 1`; singleton classes are duplicated.
pub fn smote_oversample<T: Scalar, L: Clone + Ord>(
    x: &Matrix<T>,
    y: &[L],
    k: usize,
    seed: u64,
) -> Result<Oversampled<T, L>> {
    if k == 0 {
        return Err(Error::invalid("SMOTE needs k >= 1"));
    }
    if x.rows() != y.len() {
        return Err(Error::invalid(format!(
            "{} feature rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    let mut classes: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, label) in y.iter().enumerate() {
        classes.entry(label).or_default().push(i);
    }
    if classes.len() < 2 {
        return Err(Error::invalid("SMOTE needs at least two classes"));
    }
    let target = classes.values().map(Vec::len).max().unwrap_or(0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out_x = x.clone();
    let mut out_y = y.to_vec();
    let mut origin: Vec<RowOrigin> = (0..x.rows()).map(RowOrigin::Original).collect();
    let mut synthetic = vec![T::zero(); x.cols()];

    for (label, members) in &classes {
        let needed = target - members.len();
        if needed == 0 {
            continue;
        }
        if members.len() == 1 {
            log::warn!("SMOTE: class with a single sample is duplicated {needed} time(s)");
            for _ in 0..needed {
                out_x.push_row(x.row(members[0]))?;
                out_y.push((*label).clone());
                origin.push(RowOrigin::Duplicate(members[0]));
            }
            continue;
        }
        let k_eff = k.min(members.len() - 1);
        let mut neighbours: HashMap<usize, Vec<usize>> = HashMap::new();
        for _ in 0..needed {
            let source = members[rng.gen_range(0..members.len())];
            let nn = neighbours
                .entry(source)
                .or_insert_with(|| nearest_members(x, source, members, k_eff));
            let neighbor = nn[rng.gen_range(0..nn.len())];
            let gap: f64 = rng.gen();
            let g = T::of(gap);
            for ((s, &a), &b) in synthetic.iter_mut().zip(x.row(source)).zip(x.row(neighbor)) {
                *s = a + g * (b - a);
            }
            out_x.push_row(&synthetic)?;
            out_y.push((*label).clone());
            origin.push(RowOrigin::Synthetic { source, neighbor, gap });
        }
    }
    Ok(Oversampled {
        x: out_x,
        y: out_y,
        origin,
    })
}
