//! Minimum-cost rectangular assignment (Hungarian method).
//!
//! The solver runs the shortest-augmenting-path form of the Hungarian method
//! with row/column potentials, O(n²m) for an n×m problem with n ≤ m. Wide
//! problems (more rows than columns) are padded with zero-cost columns.
//!
//! Among equal-cost optima the solver returns the lexicographically smallest
//! pair list. Only edges that are tight under the optimal potentials can
//! appear in any optimum, so rows with a single tight candidate are fixed
//! directly; only genuine ties trigger a re-solve of the remaining subproblem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{rows}x{cols} matrix needs {} cells, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged cost matrix".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(row, column)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Optimal one-to-one assignment of `min(rows, cols)` pairs.
pub fn solve_assignment(cost: &CostMatrix) -> Result<Assignment> {
    if let Some(k) = cost.data.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFiniteCost {
            row: k / cost.cols.max(1),
            col: k % cost.cols.max(1),
        });
    }
    if cost.rows == 0 || cost.cols == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            total_cost: 0.0,
        });
    }

    let n = cost.rows;
    let m = cost.cols.max(n);
    let real_cols = cost.cols;
    let cell = |i: usize, j: usize| if j < real_cols { cost.get(i, j) } else { 0.0 };

    let rows: Vec<usize> = (0..n).collect();
    let cols: Vec<usize> = (0..m).collect();
    let full = hungarian(&rows, &cols, &cell);
    let optimum: f64 = full.row_to_col.iter().enumerate().map(|(i, &j)| cell(i, j)).sum();

    let max_abs = cost.data.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
    let eps = 1e-9 * (1.0 + max_abs) * (n as f64);

    let chosen = lexicographic_optimum(n, m, real_cols, &cell, &full, optimum, eps)
        .unwrap_or_else(|| full.row_to_col.clone());

    let pairs: Vec<(usize, usize)> = chosen
        .into_iter()
        .enumerate()
        .filter(|&(_, j)| j < real_cols)
        .collect();
    let total_cost = pairs.iter().map(|&(i, j)| cost.get(i, j)).sum();
    Ok(Assignment { pairs, total_cost })
}

struct Solution {
    /// Column (index into the `cols` slice passed in) for each row.
    row_to_col: Vec<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Hungarian method on the sub-matrix `rows × cols` (requires `rows.len() <= cols.len()`).
fn hungarian(rows: &[usize], cols: &[usize], cell: &impl Fn(usize, usize) -> f64) -> Solution {
    let n = rows.len();
    let m = cols.len();
    debug_assert!(n <= m);
    // 1-based with a virtual column 0, following the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![f64::INFINITY; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cell(rows[i0 - 1], cols[j - 1]) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=m {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    Solution {
        row_to_col,
        u: u[1..].to_vec(),
        v: v[1..].to_vec(),
    }
}

/// Greedy row-by-row search for the lexicographically smallest optimal
/// assignment. Returns `None` if numerical trouble prevents a consistent
/// choice; the caller then falls back to the raw solver output.
fn lexicographic_optimum(
    n: usize,
    m: usize,
    real_cols: usize,
    cell: &impl Fn(usize, usize) -> f64,
    full: &Solution,
    optimum: f64,
    eps: f64,
) -> Option<Vec<usize>> {
    let mut taken = vec![false; m];
    let mut chosen = Vec::with_capacity(n);
    let mut fixed_cost = 0.0;

    for i in 0..n {
        let mut candidates = Vec::new();
        let mut dummy_seen = false;
        #[allow(clippy::needless_range_loop)]
        for j in 0..m {
            if taken[j] || cell(i, j) - full.u[i] - full.v[j] > eps {
                continue;
            }
            if j >= real_cols {
                // Padding columns are interchangeable; the lowest free one suffices.
                if dummy_seen {
                    continue;
                }
                dummy_seen = true;
            }
            candidates.push(j);
        }

        let pick = if candidates.len() == 1 {
            Some(candidates[0])
        } else {
            candidates.into_iter().find(|&j| {
                let rest_rows: Vec<usize> = (i + 1..n).collect();
                let rest_cols: Vec<usize> = (0..m).filter(|&c| !taken[c] && c != j).collect();
                let rest = if rest_rows.is_empty() {
                    0.0
                } else {
                    let sol = hungarian(&rest_rows, &rest_cols, cell);
                    sol.row_to_col
                        .iter()
                        .enumerate()
                        .map(|(r, &c)| cell(rest_rows[r], rest_cols[c]))
                        .sum()
                };
                fixed_cost + cell(i, j) + rest <= optimum + eps
            })
        }?;
        taken[pick] = true;
        fixed_cost += cell(i, pick);
        chosen.push(pick);
    }
    Some(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(rows: &[Vec<f64>]) -> Assignment {
        solve_assignment(&CostMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn symmetric_two_by_two() {
        let a = solve(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 2.0);
    }

    #[test]
    fn single_cell() {
        let a = solve(&[vec![7.0]]);
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.total_cost, 7.0);
    }

    #[test]
    fn empty_dimensions() {
        let a = solve_assignment(&CostMatrix::new(0, 3, vec![]).unwrap()).unwrap();
        assert!(a.pairs.is_empty());
        let a = solve_assignment(&CostMatrix::new(2, 0, vec![]).unwrap()).unwrap();
        assert!(a.pairs.is_empty());
    }

    #[test]
    fn rectangular_both_orientations() {
        let tall = solve(&[vec![5.0], vec![1.0], vec![3.0]]);
        assert_eq!(tall.pairs, vec![(1, 0)]);
        let wide = solve(&[vec![5.0, 1.0, 3.0]]);
        assert_eq!(wide.pairs, vec![(0, 1)]);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let a = solve(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        // All-zero tall matrix: the first rows take the columns.
        let a = solve(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        let a = solve(&[vec![0.0, 0.0, 0.0]]);
        assert_eq!(a.pairs, vec![(0, 0)]);
    }

    #[test]
    fn non_finite_is_rejected() {
        let err = solve_assignment(&CostMatrix::from_rows(&[vec![1.0, f64::NAN]]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteCost { row: 0, col: 1 }));
        assert!(solve_assignment(&CostMatrix::from_rows(&[vec![f64::INFINITY]]).unwrap()).is_err());
    }
}
