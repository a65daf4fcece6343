//! Quadratic programs over product-of-simplices and capped-simplex sets.
//!
//! Both problems minimise `1/2 x^T Q x` for a symmetric PSD `Q`:
//!
//! * [`BlockSimplexQP`]: every block of variables lies on the unit simplex.
//!   Solved by projected gradient with exact per-block simplex projection.
//! * [`BoxSumQP`]: `0 <= x_i <= upper`, `sum x = 1`. Solved by pairwise
//!   (SMO-style) updates on the maximally violating pair.
//!
//! KKT residuals are measured relative to the matrix scale (its largest
//! diagonal entry), so scaling `Q` by a positive constant leaves the iterates
//! and the stopping point unchanged.

use std::ops::Range;

use ndarray::Array2;

use crate::error::{PmiError, Result};

mod oracle;
mod simplex;
mod smo;

pub use oracle::{brute_force_block_simplex, brute_force_box_sum, ORACLE_MAX_VARIABLES};
pub use simplex::{project_onto_simplex, solve_block_simplex};
pub use smo::{classify_alpha, recover_rho, solve_box_sum, AlphaBound};

/// Default KKT tolerance.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Relative tolerance for classifying a dual weight as sitting on a bound.
pub const DEFAULT_BOUND_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    /// `None` means `100 * m` for an m-variable problem.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, max_iter: None }
    }

    pub(crate) fn iteration_limit(&self, m: usize) -> usize {
        self.max_iter.unwrap_or(100 * m.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QPSolution {
    pub variables: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSimplexQP {
    q: Array2<f64>,
    blocks: Vec<Range<usize>>,
}

impl BlockSimplexQP {
    /// `blocks` must be disjoint, contiguous and cover `0..m` in order.
    pub fn new(q: Array2<f64>, blocks: Vec<Range<usize>>) -> Result<Self> {
        check_square_symmetric(&q)?;
        let mut next = 0;
        for b in &blocks {
            if b.start != next || b.end <= b.start {
                return Err(PmiError::PartitionMismatch(format!(
                    "block {b:?} does not continue at index {next}"
                )));
            }
            next = b.end;
        }
        if next != q.nrows() {
            return Err(PmiError::PartitionMismatch(format!(
                "blocks cover {next} of {} variables",
                q.nrows()
            )));
        }
        Ok(Self { q, blocks })
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.q.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.q.nrows() == 0
    }

    /// Uniform weights inside every block.
    pub fn uniform_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.len()];
        for b in &self.blocks {
            let w = 1.0 / b.len() as f64;
            x[b.clone()].fill(w);
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSumQP {
    k: Array2<f64>,
    upper: f64,
}

impl BoxSumQP {
    pub fn new(k: Array2<f64>, upper: f64) -> Result<Self> {
        check_square_symmetric(&k)?;
        let m = k.nrows();
        if m == 0 {
            return Err(PmiError::EmptyDataset);
        }
        if !(upper > 0.0) || (m as f64) * upper < 1.0 - 1e-12 {
            return Err(PmiError::Infeasible { vars: m, upper });
        }
        Ok(Self { k, upper })
    }

    pub fn k(&self) -> &Array2<f64> {
        &self.k
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.k.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.k.nrows() == 0
    }

    pub fn uniform_point(&self) -> Vec<f64> {
        vec![1.0 / self.len() as f64; self.len()]
    }
}

/// `1/2 x^T Q x`.
pub fn quadratic_objective(q: &Array2<f64>, x: &[f64]) -> f64 {
    0.5 * x.iter().zip(mat_vec(q, x)).map(|(a, b)| a * b).sum::<f64>()
}

pub(crate) fn mat_vec(q: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    q.rows()
        .into_iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Largest diagonal entry, or 1 when the diagonal is all zero.
pub(crate) fn matrix_scale(q: &Array2<f64>) -> f64 {
    let s = q.diag().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

fn check_square_symmetric(q: &Array2<f64>) -> Result<()> {
    let (r, c) = q.dim();
    if r != c {
        return Err(PmiError::PartitionMismatch(format!("matrix is {r}x{c}, not square")));
    }
    let tol = 1e-10 * matrix_scale(q).max(1.0);
    for i in 0..r {
        if !q[[i, i]].is_finite() {
            return Err(PmiError::NotPsd(format!("non-finite diagonal entry at {i}")));
        }
        if q[[i, i]] < -tol {
            return Err(PmiError::NotPsd(format!("negative diagonal entry {} at {i}", q[[i, i]])));
        }
        for j in (i + 1)..r {
            let gap = (q[[i, j]] - q[[j, i]]).abs();
            if !(gap <= tol) {
                return Err(PmiError::NotSymmetric { row: i, col: j, gap });
            }
        }
    }
    Ok(())
}
