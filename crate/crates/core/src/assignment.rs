//! Minimum-cost bipartite assignment (Kuhn-Munkres) with forbidden pairs.
//!
//! Tracks are rows, detections are columns. Entries above the forbid
//! threshold can never be paired. Among all matchings of maximum cardinality
//! over the allowed pairs, the solver returns one of minimum total cost; ties
//! go to the matching whose row-by-row column choices are lexicographically
//! smallest, with "unmatched" ordered after every column.
//!
//! Rectangular and partially forbidden problems are reduced to a square
//! problem of size `rows + cols`: every row gets a private "leave unmatched"
//! column and every column a private "leave unmatched" row, each priced at a
//! penalty large enough that one more real pair always beats any cost saving.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignmentError {
    #[error("cost matrix has {got} entries, expected {rows}x{cols}")]
    Shape {
        rows: usize,
        cols: usize,
        got: usize,
    },
    #[error("cost entry ({row}, {col}) is {value}; entries must be finite and non-negative")]
    InvalidEntry { row: usize, col: usize, value: f64 },
    #[error("forbid threshold must not be NaN")]
    InvalidThreshold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    cost: Vec<f64>,
    forbid_threshold: f64,
}

impl CostMatrix {
    /// Row-major `cost` of shape `rows x cols`.
    pub fn new(
        rows: usize,
        cols: usize,
        cost: Vec<f64>,
        forbid_threshold: f64,
    ) -> Result<Self, AssignmentError> {
        if cost.len() != rows * cols {
            return Err(AssignmentError::Shape {
                rows,
                cols,
                got: cost.len(),
            });
        }
        if forbid_threshold.is_nan() {
            return Err(AssignmentError::InvalidThreshold);
        }
        if let Some((idx, &value)) = cost
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(AssignmentError::InvalidEntry {
                row: idx / cols,
                col: idx % cols,
                value,
            });
        }
        Ok(Self {
            rows,
            cols,
            cost,
            forbid_threshold,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], forbid_threshold: f64) -> Result<Self, AssignmentError> {
        let cols = rows.first().map_or(0, Vec::len);
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), cols, flat, forbid_threshold)
    }

    /// An empty `rows x cols` problem (all columns unmatched when `rows == 0`).
    pub fn empty(rows: usize, cols: usize) -> Self {
        debug_assert!(rows == 0 || cols == 0);
        Self {
            rows,
            cols,
            cost: Vec::new(),
            forbid_threshold: f64::INFINITY,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn forbid_threshold(&self) -> f64 {
        self.forbid_threshold
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cost[row * self.cols + col]
    }

    pub fn is_allowed(&self, row: usize, col: usize) -> bool {
        self.get(row, col) <= self.forbid_threshold
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    /// `(row, col)` pairs in increasing row order.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    /// Sum of paired costs, accumulated in row order.
    pub fn total_cost(&self, m: &CostMatrix) -> f64 {
        self.pairs.iter().map(|&(r, c)| m.get(r, c)).sum()
    }
}

pub fn solve_assignment(m: &CostMatrix) -> Assignment {
    let (rows, cols) = (m.rows, m.cols);
    if rows == 0 || cols == 0 {
        return Assignment {
            pairs: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        };
    }
    let problem = Extended::new(m);
    let solved = problem.solve();
    let row_to_col = problem.canonicalize(solved);

    let mut out = Assignment::default();
    let mut col_used = vec![false; cols];
    for (r, &c) in row_to_col.iter().take(rows).enumerate() {
        if c < cols {
            out.pairs.push((r, c));
            col_used[c] = true;
        } else {
            out.unmatched_rows.push(r);
        }
    }
    out.unmatched_cols = (0..cols).filter(|&c| !col_used[c]).collect();
    out
}

/// The square `(rows + cols)` reduction described in the module docs.
struct Extended<'a> {
    m: &'a CostMatrix,
    n: usize,
    penalty: f64,
}

struct Solved {
    row_to_col: Vec<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl<'a> Extended<'a> {
    fn new(m: &'a CostMatrix) -> Self {
        let max_allowed = (0..m.rows)
            .flat_map(|r| (0..m.cols).map(move |c| (r, c)))
            .filter(|&(r, c)| m.is_allowed(r, c))
            .map(|(r, c)| m.get(r, c))
            .fold(0.0, f64::max);
        let penalty = max_allowed * m.rows.min(m.cols) as f64 + 1.0;
        Self {
            m,
            n: m.rows + m.cols,
            penalty,
        }
    }

    fn cost(&self, i: usize, j: usize) -> f64 {
        let (rows, cols) = (self.m.rows, self.m.cols);
        match (i < rows, j < cols) {
            (true, true) if self.m.is_allowed(i, j) => self.m.get(i, j),
            (true, true) => f64::INFINITY,
            (true, false) if j - cols == i => self.penalty,
            (false, true) if i - rows == j => self.penalty,
            (false, false) => 0.0,
            _ => f64::INFINITY,
        }
    }

    /// Shortest augmenting path Hungarian method with row/column potentials.
    fn solve(&self) -> Solved {
        let n = self.n;
        // 1-based bookkeeping; index 0 is the virtual source column.
        let mut u = vec![0.0; n + 1];
        let mut v = vec![0.0; n + 1];
        let mut owner = vec![0usize; n + 1];
        let mut way = vec![0usize; n + 1];
        for i in 1..=n {
            owner[0] = i;
            let mut j0 = 0;
            let mut minv = vec![f64::INFINITY; n + 1];
            let mut used = vec![false; n + 1];
            loop {
                used[j0] = true;
                let i0 = owner[j0];
                let mut delta = f64::INFINITY;
                let mut j1 = 0;
                for j in 1..=n {
                    if used[j] {
                        continue;
                    }
                    let cur = self.cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
                // The reduction always admits a perfect matching.
                assert!(delta.is_finite(), "augmenting path must exist");
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
        let mut row_to_col = vec![0; n];
        for j in 1..=n {
            row_to_col[owner[j] - 1] = j - 1;
        }
        Solved {
            row_to_col,
            u: u[1..].to_vec(),
            v: v[1..].to_vec(),
        }
    }

    /// Every optimal matching is perfect on the zero-reduced-cost edges of an
    /// optimal dual, so the preferred optimum is found greedily on that graph.
    fn canonicalize(&self, solved: Solved) -> Vec<usize> {
        let Solved {
            mut row_to_col,
            u,
            v,
        } = solved;
        let n = self.n;
        let tol = 1e-9 * self.penalty.max(1.0);
        let tight: Vec<Vec<bool>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let c = self.cost(i, j);
                        c.is_finite() && c - u[i] - v[j] <= tol
                    })
                    .collect()
            })
            .collect();
        let mut col_to_row = vec![0; n];
        for (r, &c) in row_to_col.iter().enumerate() {
            col_to_row[c] = r;
        }

        let (rows, cols) = (self.m.rows, self.m.cols);
        let mut fixed = vec![false; n];
        for r in 0..rows {
            let preference = (0..cols).chain(std::iter::once(cols + r));
            for c in preference {
                if !tight[r][c] {
                    continue;
                }
                let cur = row_to_col[r];
                if c == cur {
                    break;
                }
                // Hand `c` to `r`: its owner must reach `cur` by an alternating
                // path through rows that are still free to move.
                let start = col_to_row[c];
                if fixed[start] {
                    continue;
                }
                let mut seen = vec![false; n];
                seen[c] = true;
                let mut path = Vec::new();
                if reroute(
                    start,
                    cur,
                    r,
                    &tight,
                    &fixed,
                    &col_to_row,
                    &mut seen,
                    &mut path,
                ) {
                    for &(row, col) in &path {
                        row_to_col[row] = col;
                        col_to_row[col] = row;
                    }
                    row_to_col[r] = c;
                    col_to_row[c] = r;
                    break;
                }
            }
            fixed[r] = true;
        }
        row_to_col
    }
}

/// Depth-first alternating path from `row` to the column `target`, avoiding
/// fixed rows and the row `claimant` currently taking over a column.
/// Records the new `(row, col)` assignments along the path.
#[allow(clippy::too_many_arguments)]
fn reroute(
    row: usize,
    target: usize,
    claimant: usize,
    tight: &[Vec<bool>],
    fixed: &[bool],
    col_to_row: &[usize],
    seen: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    for col in 0..tight.len() {
        if !tight[row][col] || seen[col] {
            continue;
        }
        seen[col] = true;
        if col == target {
            path.push((row, col));
            return true;
        }
        let next = col_to_row[col];
        if next == claimant || fixed[next] {
            continue;
        }
        path.push((row, col));
        if reroute(next, target, claimant, tight, fixed, col_to_row, seen, path) {
            return true;
        }
        path.pop();
    }
    false
}
