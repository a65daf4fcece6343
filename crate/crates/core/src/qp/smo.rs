use ndarray::Array2;

use super::{mat_vec, matrix_scale, BoxSumQP, QPSolution, SolverOptions};
use crate::error::{PmiError, Result};

/// Where a dual weight sits relative to its box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlphaBound {
    /// `alpha <= tol_bound`: the point lies inside the boundary.
    Zero,
    /// Strictly between the bounds: the point is on the boundary.
    Interior,
    /// `alpha >= upper - tol_bound`: the point lies outside.
    AtUpper,
}

pub fn classify_alpha(alpha: f64, upper: f64, tol_bound: f64) -> AlphaBound {
    if alpha >= upper - tol_bound {
        AlphaBound::AtUpper
    } else if alpha <= tol_bound {
        AlphaBound::Zero
    } else {
        AlphaBound::Interior
    }
}

/// Minimises `1/2 a^T K a` subject to `0 <= a_i <= upper`, `sum a = 1`.
///
/// Starts from the uniform point `1/M` (always inside the box when the
/// problem is feasible) and repeatedly moves mass between the maximally
/// violating pair: the lowest-gradient variable that can still grow and the
/// highest-gradient variable that can still shrink. Ties go to the lowest
/// index. Converged when that gap is at most `tol` times the matrix scale.
pub fn solve_box_sum(problem: &BoxSumQP, opts: &SolverOptions) -> Result<QPSolution> {
    let k = problem.k();
    let upper = problem.upper();
    let m = problem.len();
    let scale = matrix_scale(k);
    let max_iter = opts.iteration_limit(m);
    let tau = 1e-12 * scale;

    let mut alpha = problem.uniform_point();
    let mut g = mat_vec(k, &alpha);
    let mut iterations = 0;
    let mut violation;

    loop {
        let (up, low, gap) = most_violating_pair(&alpha, &g, upper);
        violation = gap / scale;
        if violation <= opts.tol || iterations >= max_iter {
            break;
        }
        let (i, j) = (up.expect("gap > 0 implies a pair"), low.expect("gap > 0 implies a pair"));
        iterations += 1;

        let mut eta = k[[i, i]] + k[[j, j]] - 2.0 * k[[i, j]];
        if eta <= tau {
            eta = tau;
        }
        let room_i = upper - alpha[i];
        let room_j = alpha[j];
        let mut t = gap / eta;
        if t >= room_i.min(room_j) {
            t = room_i.min(room_j);
            if room_i <= room_j {
                alpha[i] = upper;
                alpha[j] -= t;
                if room_i == room_j {
                    alpha[j] = 0.0;
                }
            } else {
                alpha[i] += t;
                alpha[j] = 0.0;
            }
        } else {
            alpha[i] += t;
            alpha[j] -= t;
        }
        for (p, gp) in g.iter_mut().enumerate() {
            *gp += t * (k[[p, i]] - k[[p, j]]);
        }
    }

    let g = mat_vec(k, &alpha);
    let objective = 0.5 * alpha.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
    debug_assert!(box_feasible(&alpha, upper));
    Ok(QPSolution {
        variables: alpha,
        objective,
        iterations,
        converged: violation <= opts.tol,
        kkt_residual: violation,
    })
}

fn most_violating_pair(alpha: &[f64], g: &[f64], upper: f64) -> (Option<usize>, Option<usize>, f64) {
    let mut up: Option<usize> = None;
    let mut low: Option<usize> = None;
    for p in 0..alpha.len() {
        if alpha[p] < upper && up.is_none_or(|i| g[p] < g[i]) {
            up = Some(p);
        }
        if alpha[p] > 0.0 && low.is_none_or(|j| g[p] > g[j]) {
            low = Some(p);
        }
    }
    let gap = match (up, low) {
        (Some(i), Some(j)) if i != j => (g[j] - g[i]).max(0.0),
        _ => 0.0,
    };
    (up, low, gap)
}

fn box_feasible(alpha: &[f64], upper: f64) -> bool {
    let s: f64 = alpha.iter().sum();
    (s - 1.0).abs() <= 1e-9 && alpha.iter().all(|&a| a >= -1e-12 && a <= upper + 1e-12)
}

/// Offset of the decision function: the mean of `sum_i alpha_i K[i][j]` over
/// interior columns `j`, falling back to all columns with non-zero weight.
pub fn recover_rho(k: &Array2<f64>, alpha: &[f64], upper: f64, tol_bound: f64) -> Result<f64> {
    if k.nrows() != alpha.len() || k.ncols() != alpha.len() {
        return Err(PmiError::DimensionMismatch {
            expected: k.nrows(),
            found: alpha.len(),
        });
    }
    let column = |j: usize| -> f64 { alpha.iter().enumerate().map(|(i, a)| a * k[[i, j]]).sum() };
    let mean_over = |pred: &dyn Fn(f64) -> bool| -> Option<f64> {
        let cols: Vec<usize> = (0..alpha.len()).filter(|&j| pred(alpha[j])).collect();
        if cols.is_empty() {
            None
        } else {
            Some(cols.iter().map(|&j| column(j)).sum::<f64>() / cols.len() as f64)
        }
    };
    mean_over(&|a| classify_alpha(a, upper, tol_bound) == AlphaBound::Interior)
        .or_else(|| mean_over(&|a| a > tol_bound))
        .ok_or_else(|| PmiError::InvalidConfig("all dual weights are zero".into()))
}
