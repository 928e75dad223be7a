//! Row-sparse matrices, direct sparse LU solves and the sign-pattern /
//! diagonal-dominance checks that certify the assembled systems.

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative slack used when comparing a diagonal against its off-diagonal sum.
const DOMINANCE_SLACK: f64 = 1e-14;

/// Square matrix stored as sorted `(column, value)` lists per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> SparseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            rows: vec![Vec::new(); n],
        }
    }

    pub fn from_dense(dense: &[Vec<T>]) -> Self {
        let mut m = Self::zeros(dense.len());
        for (i, row) in dense.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    m.add(i, j, v);
                }
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Adds `value` to entry `(row, col)`.
    pub fn add(&mut self, row: usize, col: usize, value: T) {
        let entries = &mut self.rows[row];
        match entries.binary_search_by_key(&col, |&(c, _)| c) {
            Ok(pos) => entries[pos].1 = entries[pos].1 + value,
            Err(pos) => entries.insert(pos, (col, value)),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.rows[row]
            .binary_search_by_key(&col, |&(c, _)| c)
            .map(|pos| self.rows[row][pos].1)
            .unwrap_or_else(|_| T::zero())
    }

    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.dim();
        let mut dense = vec![vec![T::zero(); n]; n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                dense[i][c] = v;
            }
        }
        dense
    }

    /// Solves `A x = rhs` by sparse Gaussian elimination in natural order
    /// without pivoting. Nonsingular M-matrices (in particular weakly chained
    /// diagonally dominant Z-matrices) have positive pivots, so no row
    /// exchanges are needed.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::InvalidArgument(format!(
                "right-hand side has length {}, expected {n}",
                rhs.len()
            )));
        }
        let mut lower: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        // Row i of U: diagonal first, then columns > i.
        let mut upper: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        let mut work = vec![T::zero(); n];
        let mut pattern = BTreeSet::new();
        for i in 0..n {
            for &(c, v) in &self.rows[i] {
                work[c] = work[c] + v;
                pattern.insert(c);
            }
            let mut cursor = 0;
            while let Some(&k) = pattern.range(cursor..i).next() {
                let multiplier = work[k] / upper[k][0].1;
                work[k] = T::zero();
                if multiplier != T::zero() {
                    lower[i].push((k, multiplier));
                    for &(c, v) in &upper[k][1..] {
                        pattern.insert(c);
                        work[c] = work[c] - multiplier * v;
                    }
                }
                cursor = k + 1;
            }
            let pivot = work[i];
            if pivot == T::zero() || !pivot.is_finite() {
                return Err(Error::SingularPivot { row: i });
            }
            let mut row = vec![(i, pivot)];
            row.extend(pattern.range(i + 1..).map(|&c| (c, work[c])));
            for &c in &pattern {
                work[c] = T::zero();
            }
            pattern.clear();
            upper[i] = row;
        }

        let mut x = rhs.to_vec();
        for i in 0..n {
            let s = lower[i].iter().fold(x[i], |acc, &(k, l)| acc - l * x[k]);
            x[i] = s;
        }
        for i in (0..n).rev() {
            let s = upper[i][1..]
                .iter()
                .fold(x[i], |acc, &(c, v)| acc - v * x[c]);
            x[i] = s / upper[i][0].1;
        }
        Ok(x)
    }
}

/// Row access shared by the matrix types the checks understand.
pub trait RowMatrix<T> {
    fn dim(&self) -> usize;
    /// Nonzero entries of row `i`, diagonal included.
    fn row_entries(&self, i: usize) -> Vec<(usize, T)>;
}

impl<T: Real> RowMatrix<T> for SparseMatrix<T> {
    fn dim(&self) -> usize {
        self.rows.len()
    }

    fn row_entries(&self, i: usize) -> Vec<(usize, T)> {
        self.rows[i]
            .iter()
            .copied()
            .filter(|&(_, v)| v != T::zero())
            .collect()
    }
}

/// Result of [`check_matrix_properties`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixReport {
    pub dimension: usize,
    /// Positive diagonal and nonpositive off-diagonals.
    pub sign_pattern: bool,
    /// First `(row, col, value)` breaking the sign pattern.
    pub sign_violation: Option<(usize, usize, f64)>,
    /// Every row weakly diagonally dominant.
    pub weakly_dominant: bool,
    /// First row that is not weakly diagonally dominant.
    pub dominance_violation: Option<usize>,
    pub strictly_dominant_rows: usize,
    /// Weakly chained diagonally dominant.
    pub wcdd: bool,
    /// Rows with no path to a strictly dominant row (the WCDD witness).
    pub unreachable_rows: Vec<usize>,
}

impl MatrixReport {
    /// Sign pattern plus WCDD: a nonsingular M-matrix.
    pub fn passed(&self) -> bool {
        self.sign_pattern && self.wcdd
    }

    pub fn strictly_dominant(&self) -> bool {
        self.strictly_dominant_rows == self.dimension
    }

    /// Converts a failing report into the matching solver error.
    pub fn into_result(self) -> Result<Self> {
        if let Some((row, col, value)) = self.sign_violation {
            return Err(if row == col {
                Error::NonPositiveDiagonal { row, value }
            } else {
                Error::PositiveOffDiagonal { row, col, value }
            });
        }
        if !self.wcdd {
            let rows = match self.dominance_violation {
                Some(row) if self.unreachable_rows.is_empty() => vec![row],
                _ => self.unreachable_rows,
            };
            return Err(Error::NotWcdd { rows });
        }
        Ok(self)
    }
}

/// Checks the sign pattern, row dominance and weak chaining: every row must
/// reach a strictly dominant row through the directed graph of nonzeros.
#[allow(clippy::needless_range_loop)]
pub fn check_matrix_properties<T: Real, M: RowMatrix<T> + ?Sized>(matrix: &M) -> MatrixReport {
    let n = matrix.dim();
    let mut sign_violation = None;
    let mut dominance_violation = None;
    let mut strict = vec![false; n];
    let mut predecessors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let mut diag = T::zero();
        let mut off = T::zero();
        for (c, v) in matrix.row_entries(i) {
            if c == i {
                diag = v;
            } else {
                off = off + v.abs();
                predecessors[c].push(i);
                if v > T::zero() && sign_violation.is_none() {
                    sign_violation = Some((i, c, v.as_f64()));
                }
            }
        }
        if !(diag > T::zero()) && sign_violation.is_none() {
            sign_violation = Some((i, i, diag.as_f64()));
        }
        let slack = T::lit(DOMINANCE_SLACK) * diag.abs();
        let margin = diag.abs() - off;
        if margin < -slack && dominance_violation.is_none() {
            dominance_violation = Some(i);
        }
        strict[i] = margin > slack;
    }

    let mut reached = strict.clone();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| strict[i]).collect();
    while let Some(j) = queue.pop_front() {
        for &i in &predecessors[j] {
            if !reached[i] {
                reached[i] = true;
                queue.push_back(i);
            }
        }
    }
    let unreachable_rows: Vec<usize> = (0..n).filter(|&i| !reached[i]).collect();
    let weakly_dominant = dominance_violation.is_none();
    MatrixReport {
        dimension: n,
        sign_pattern: sign_violation.is_none(),
        sign_violation,
        weakly_dominant,
        dominance_violation,
        strictly_dominant_rows: strict.iter().filter(|&&s| s).count(),
        wcdd: weakly_dominant && unreachable_rows.is_empty(),
        unreachable_rows,
    }
}
