//! Classical solvers for maximum-weight bipartite matching: the Hungarian
//! method, an enumeration oracle, a greedy baseline, and a thresholded
//! birth/death variant.

use serde::{Deserialize, Serialize};

use crate::assoc::AssociationResult;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Largest `min(I, J)` the enumeration oracle accepts.
pub const BRUTE_FORCE_CAP: usize = 8;

/// Default threshold for [`solve_with_birth_death`] on sigmoid-scaled
/// affinities.
pub const DEFAULT_BIRTH_DEATH_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactAssignment {
    /// Sorted by row.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of the selected entries.
    pub objective: f64,
}

impl ExactAssignment {
    fn from_pairs(s: &Tensor, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        let objective = pairs.iter().map(|&(i, j)| s.get(i, j)).sum();
        Self { pairs, objective }
    }
}

fn check_finite(s: &Tensor) -> Result<()> {
    if !s.is_finite() {
        return Err(Error::invalid("weight matrix must be finite"));
    }
    Ok(())
}

/// Maximum-weight matching of size `min(I, J)`.
///
/// The matrix is padded with zero-weight rows or columns to square, negated,
/// and handed to an O(n³) shortest-augmenting-path Hungarian kernel with row
/// and column potentials.
pub fn hungarian(s: &Tensor) -> Result<ExactAssignment> {
    check_finite(s)?;
    let (rows, cols) = (s.rows(), s.cols());
    let n = rows.max(cols);
    if n == 0 {
        return Ok(ExactAssignment {
            pairs: vec![],
            objective: 0.0,
        });
    }
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -s.get(i, j)
        } else {
            0.0
        }
    };

    // 1-based indexing; column 0 is the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let pairs = (1..=n)
        .filter_map(|j| {
            let i = owner[j];
            (i >= 1 && i - 1 < rows && j - 1 < cols).then(|| (i - 1, j - 1))
        })
        .collect();
    Ok(ExactAssignment::from_pairs(s, pairs))
}

/// Enumerates every matching of size `min(I, J)` and returns the best one.
/// Among equal objectives the lexicographically smallest sorted pair list
/// wins.
pub fn brute_force(s: &Tensor) -> Result<ExactAssignment> {
    check_finite(s)?;
    let (rows, cols) = (s.rows(), s.cols());
    let size = rows.min(cols);
    if size > BRUTE_FORCE_CAP {
        return Err(Error::invalid(format!(
            "brute force refuses min(I, J) = {size} > {BRUTE_FORCE_CAP}"
        )));
    }

    // Enumerate injective maps from the smaller side into the larger one.
    let transposed = rows > cols;
    let (small, large) = if transposed { (cols, rows) } else { (rows, cols) };
    let mut best: Option<ExactAssignment> = None;
    let mut chosen = Vec::with_capacity(small);
    let mut used = vec![false; large];

    fn recurse(
        k: usize,
        small: usize,
        large: usize,
        chosen: &mut Vec<usize>,
        used: &mut [bool],
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if k == small {
            visit(chosen);
            return;
        }
        for c in 0..large {
            if !used[c] {
                used[c] = true;
                chosen.push(c);
                recurse(k + 1, small, large, chosen, used, visit);
                chosen.pop();
                used[c] = false;
            }
        }
    }

    let mut visit = |sel: &[usize]| {
        let pairs: Vec<(usize, usize)> = sel
            .iter()
            .enumerate()
            .map(|(a, &b)| if transposed { (b, a) } else { (a, b) })
            .collect();
        let cand = ExactAssignment::from_pairs(s, pairs);
        let better = match &best {
            None => true,
            Some(b) => {
                cand.objective > b.objective
                    || (cand.objective == b.objective && cand.pairs < b.pairs)
            }
        };
        if better {
            best = Some(cand);
        }
    };
    recurse(0, small, large, &mut chosen, &mut used, &mut visit);
    Ok(best.unwrap_or(ExactAssignment {
        pairs: vec![],
        objective: 0.0,
    }))
}

/// Row-by-row argmax with conflict suppression: each row in order takes its
/// best still-free column (smallest index on ties).
pub fn greedy(s: &Tensor) -> Result<ExactAssignment> {
    check_finite(s)?;
    let mut free = vec![true; s.cols()];
    let mut pairs = Vec::new();
    for i in 0..s.rows() {
        let best = (0..s.cols())
            .filter(|&j| free[j])
            .fold(None::<usize>, |acc, j| match acc {
                Some(b) if s.get(i, b) >= s.get(i, j) => Some(b),
                _ => Some(j),
            });
        if let Some(j) = best {
            free[j] = false;
            pairs.push((i, j));
        }
    }
    Ok(ExactAssignment::from_pairs(s, pairs))
}

/// Hungarian matching followed by dropping every pair whose weight is below
/// `threshold`; dropped or unmatched rows are deaths, columns births.
pub fn solve_with_birth_death(s: &Tensor, threshold: f64) -> Result<AssociationResult> {
    let exact = hungarian(s)?;
    let kept = exact
        .pairs
        .into_iter()
        .filter(|&(i, j)| s.get(i, j) >= threshold)
        .collect();
    Ok(AssociationResult::from_matches(kept, s.rows(), s.cols()))
}
