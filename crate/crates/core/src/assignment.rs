//! Minimum-cost bipartite assignment.
//!
//! The solver runs the O(n^3) Hungarian algorithm with dual potentials,
//! then canonicalizes the answer: among all minimum-cost assignments it
//! returns the lexicographically smallest row-sorted pair sequence. The
//! canonical pass walks the tight subgraph (edges where cost equals the
//! sum of potentials), where every perfect matching is optimal.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AssignmentError {
    #[error("cost matrix entry at ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("cost data length {len} does not match {rows}x{cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("cost matrix rows have unequal lengths")]
    RaggedRows,
}

/// Dense row-major cost matrix. Construction rejects NaN and infinities,
/// so `solve_assignment` never sees a non-finite entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AssignmentError> {
        if data.len() != rows * cols {
            return Err(AssignmentError::ShapeMismatch {
                rows,
                cols,
                len: data.len(),
            });
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(AssignmentError::NonFinite {
                    row: i / cols.max(1),
                    col: i % cols.max(1),
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, AssignmentError> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(AssignmentError::RaggedRows);
        }
        Self::new(n, m, rows.into_iter().flatten().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

/// Returns the `min(rows, cols)` pairs of a minimum-cost assignment,
/// sorted by row index. Ties between equally cheap assignments resolve
/// to the lexicographically smallest pair sequence.
pub fn solve_assignment(cost: &CostMatrix) -> Vec<(usize, usize)> {
    let (n, m) = (cost.rows(), cost.cols());
    if n == 0 || m == 0 {
        return Vec::new();
    }

    // Pad to square; the pad value is uniform so it never changes which
    // real pairs are optimal.
    let dim = n.max(m);
    let mut max_abs = 0f64;
    let mut pad = 1.0;
    for r in 0..n {
        for c in 0..m {
            let v = cost.at(r, c);
            max_abs = max_abs.max(v.abs());
            pad += v.abs();
        }
    }
    let mut square = vec![pad; dim * dim];
    for r in 0..n {
        for c in 0..m {
            square[r * dim + c] = cost.at(r, c);
        }
    }

    let (row_of_col, u, v) = hungarian(&square, dim);
    let eps = 1e-9 * max_abs.max(1.0);
    let col_of_row = canonicalize(&square, dim, &row_of_col, &u, &v, eps);

    let mut pairs: Vec<(usize, usize)> = col_of_row
        .iter()
        .enumerate()
        .filter(|&(r, &c)| r < n && c < m)
        .map(|(r, &c)| (r, c))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Total cost of a pair set against the matrix.
pub fn assignment_cost(cost: &CostMatrix, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(r, c)| cost.at(r, c)).sum()
}

/// Hungarian algorithm on a dense square matrix. Returns the matched row
/// per column and the dual potentials, which satisfy
/// `u[r] + v[c] <= cost[r][c]` with equality on matched edges.
fn hungarian(cost: &[f64], dim: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    const NONE: usize = usize::MAX;
    let mut u = vec![0f64; dim];
    // Index `dim` is a virtual column that hosts the row being inserted.
    let mut v = vec![0f64; dim + 1];
    let mut row_of_col = vec![NONE; dim + 1];
    let mut way = vec![0usize; dim + 1];

    for row in 0..dim {
        row_of_col[dim] = row;
        let mut j0 = dim;
        let mut min_to = vec![f64::INFINITY; dim + 1];
        let mut used = vec![false; dim + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = dim;
            for j in 0..dim {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 * dim + j] - u[i0] - v[j];
                if cur < min_to[j] {
                    min_to[j] = cur;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=dim {
                if used[j] {
                    if row_of_col[j] != NONE {
                        u[row_of_col[j]] += delta;
                    }
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == NONE {
                break;
            }
        }
        while j0 != dim {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
        }
    }
    row_of_col.truncate(dim);
    (row_of_col, u, v)
}

/// Rewrites an optimal matching into the lexicographically smallest one.
///
/// Works row by row: for each row, try its tight columns in ascending
/// order and keep the first choice that still lets all later rows match
/// inside the tight subgraph.
fn canonicalize(
    cost: &[f64],
    dim: usize,
    row_of_col: &[usize],
    u: &[f64],
    v: &[f64],
    eps: f64,
) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let tight: Vec<Vec<usize>> = (0..dim)
        .map(|r| {
            (0..dim)
                .filter(|&c| (cost[r * dim + c] - u[r] - v[c]).abs() <= eps)
                .collect()
        })
        .collect();

    let mut row_of_col: Vec<usize> = row_of_col.to_vec();
    let mut col_of_row = vec![NONE; dim];
    for (c, &r) in row_of_col.iter().enumerate() {
        if r != NONE {
            col_of_row[r] = c;
        }
    }

    let mut fixed_col = vec![false; dim];
    for r in 0..dim {
        for &c in &tight[r] {
            if fixed_col[c] {
                continue;
            }
            if col_of_row[r] == c {
                break;
            }
            // Hand column c to row r, then try to re-seat the displaced row
            // using only tight edges and unfixed columns.
            let displaced = row_of_col[c];
            let own = col_of_row[r];
            row_of_col[c] = r;
            col_of_row[r] = c;
            if own != NONE {
                row_of_col[own] = NONE;
            }
            let ok = if displaced == NONE {
                true
            } else {
                col_of_row[displaced] = NONE;
                let mut visited = vec![false; dim];
                visited[c] = true;
                try_seat(
                    displaced,
                    &tight,
                    &fixed_col,
                    &mut visited,
                    &mut row_of_col,
                    &mut col_of_row,
                )
            };
            if ok {
                break;
            }
            // Roll back.
            if displaced != NONE {
                col_of_row[displaced] = c;
            }
            row_of_col[c] = displaced;
            col_of_row[r] = own;
            if own != NONE {
                row_of_col[own] = r;
            }
        }
        debug_assert_ne!(col_of_row[r], NONE, "row {r} left unmatched");
        fixed_col[col_of_row[r]] = true;
    }
    col_of_row
}

fn try_seat(
    row: usize,
    tight: &[Vec<usize>],
    fixed_col: &[bool],
    visited: &mut [bool],
    row_of_col: &mut [usize],
    col_of_row: &mut [usize],
) -> bool {
    const NONE: usize = usize::MAX;
    for &c in &tight[row] {
        if fixed_col[c] || visited[c] {
            continue;
        }
        visited[c] = true;
        let owner = row_of_col[c];
        if owner == NONE || try_seat(owner, tight, fixed_col, visited, row_of_col, col_of_row) {
            row_of_col[c] = row;
            col_of_row[row] = c;
            return true;
        }
    }
    false
}
