//! Gated maximum-score linear assignment over rectangular matrices.
//!
//! Rows are detections and columns tracks; higher scores are better. Pairs
//! scoring below the gate are never matched, and a row may stay unmatched
//! whenever that yields a larger total. Among optimal matchings the solver
//! returns the lexicographically smallest one: rows are settled in index
//! order, each taking the lowest column index compatible with optimality,
//! and being matched ranks before staying unmatched.

use crate::error::{Error, Result};

/// Dense row-major score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "score matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged score matrix"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
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

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.cols + col] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    /// Matched `(row, col)` pairs, sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    /// Sum of matched scores, accumulated in row order.
    pub fn total(&self, m: &ScoreMatrix) -> f64 {
        self.matches.iter().map(|&(r, c)| m.get(r, c)).sum()
    }
}

/// Solve the gated assignment problem. See the module docs for semantics.
pub fn solve(m: &ScoreMatrix, gate: f64) -> Result<Assignment> {
    if !m.is_finite() {
        return Err(Error::invalid("score matrix contains a non-finite entry"));
    }
    if gate.is_nan() {
        return Err(Error::invalid("gate is NaN"));
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            matches: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        });
    }

    let problem = Padded::new(m, gate);
    let (row_to_col, u, v) = problem.hungarian();
    let scale = 1.0 + m.values().iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let row_to_col = problem.lexicographic(row_to_col, &u, &v, 1e-12 * scale * problem.n as f64);

    let mut matches = Vec::new();
    let mut col_used = vec![false; cols];
    for (r, &c) in row_to_col.iter().enumerate().take(rows) {
        if c < cols && m.get(r, c) >= gate {
            matches.push((r, c));
            col_used[c] = true;
        }
    }
    let matched_rows: Vec<bool> = {
        let mut v = vec![false; rows];
        for &(r, _) in &matches {
            v[r] = true;
        }
        v
    };
    Ok(Assignment {
        unmatched_rows: (0..rows).filter(|&r| !matched_rows[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
        matches,
    })
}

/// Square min-cost formulation: `rows + cols` on each side. Real pairs cost
/// `-score` (or are forbidden below the gate); every dummy pairing costs 0,
/// which is how a row or column stays unmatched.
struct Padded<'a> {
    m: &'a ScoreMatrix,
    gate: f64,
    n: usize,
}

impl<'a> Padded<'a> {
    fn new(m: &'a ScoreMatrix, gate: f64) -> Self {
        Self {
            m,
            gate,
            n: m.rows() + m.cols(),
        }
    }

    fn cost(&self, i: usize, j: usize) -> f64 {
        if i < self.m.rows() && j < self.m.cols() {
            let s = self.m.get(i, j);
            if s >= self.gate {
                -s
            } else {
                f64::INFINITY
            }
        } else {
            0.0
        }
    }

    /// Shortest augmenting path Hungarian method. Returns the row->col
    /// assignment and the dual potentials.
    fn hungarian(&self) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
        let n = self.n;
        // 1-based with a virtual column 0
        let mut u = vec![0.0; n + 1];
        let mut v = vec![0.0; n + 1];
        let mut p = vec![0usize; n + 1];
        let mut way = vec![0usize; n + 1];
        for i in 1..=n {
            p[0] = i;
            let mut j0 = 0usize;
            let mut minv = vec![f64::INFINITY; n + 1];
            let mut used = vec![false; n + 1];
            loop {
                used[j0] = true;
                let i0 = p[j0];
                let mut delta = f64::INFINITY;
                let mut j1 = 0usize;
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
                debug_assert!(delta.is_finite(), "padded problem always has a perfect matching");
                for j in 0..=n {
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
        for j in 1..=n {
            row_to_col[p[j] - 1] = j - 1;
        }
        (row_to_col, u[1..].to_vec(), v[1..].to_vec())
    }

    /// Rewrite an optimal matching into the lexicographically smallest one.
    ///
    /// Every optimal matching lives on the tight edges of an optimal dual
    /// solution, so rows are fixed greedily while an alternating path keeps
    /// the rest of the tight subgraph perfectly matched.
    fn lexicographic(&self, mut row_to_col: Vec<usize>, u: &[f64], v: &[f64], tol: f64) -> Vec<usize> {
        let n = self.n;
        let (rows, cols) = self.m.shape();
        let tight = |i: usize, j: usize| {
            let c = self.cost(i, j);
            c.is_finite() && c - u[i] - v[j] <= tol
        };
        let mut col_to_row = vec![0usize; n];
        for (r, &c) in row_to_col.iter().enumerate() {
            col_to_row[c] = r;
        }
        let mut fixed = vec![false; n];
        for i in 0..rows {
            for c in 0..cols {
                if !tight(i, c) {
                    continue;
                }
                if row_to_col[i] == c {
                    break;
                }
                let holder = col_to_row[c];
                if fixed[holder] {
                    continue;
                }
                let freed = row_to_col[i];
                if let Some(path) = self.alternating_path(holder, freed, c, i, &fixed, &row_to_col, &col_to_row, &tight) {
                    // path: sequence of (row, new col)
                    for (r, nc) in path {
                        row_to_col[r] = nc;
                        col_to_row[nc] = r;
                    }
                    row_to_col[i] = c;
                    col_to_row[c] = i;
                    break;
                }
            }
            fixed[i] = true;
        }
        row_to_col
    }

    /// Breadth-first search for an alternating path that re-seats `start`
    /// (currently on `blocked`) and ends on the column `target`.
    #[allow(clippy::too_many_arguments)]
    fn alternating_path(
        &self,
        start: usize,
        target: usize,
        blocked: usize,
        requester: usize,
        fixed: &[bool],
        row_to_col: &[usize],
        col_to_row: &[usize],
        tight: &dyn Fn(usize, usize) -> bool,
    ) -> Option<Vec<(usize, usize)>> {
        let n = self.n;
        let mut parent_row: Vec<Option<usize>> = vec![None; n];
        let mut seen_col = vec![false; n];
        seen_col[blocked] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        let mut seen_row = vec![false; n];
        seen_row[start] = true;
        while let Some(r) = queue.pop_front() {
            for k in 0..n {
                if seen_col[k] || !tight(r, k) {
                    continue;
                }
                if k != target {
                    let owner = col_to_row[k];
                    if fixed[owner] || owner == requester || seen_row[owner] {
                        continue;
                    }
                }
                seen_col[k] = true;
                parent_row[k] = Some(r);
                if k == target {
                    let mut path = Vec::new();
                    let mut col = k;
                    loop {
                        let row = parent_row[col].expect("visited column has a parent");
                        path.push((row, col));
                        if row == start {
                            return Some(path);
                        }
                        col = row_to_col[row];
                    }
                }
                let owner = col_to_row[k];
                seen_row[owner] = true;
                queue.push_back(owner);
            }
        }
        None
    }
}
