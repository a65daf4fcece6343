use super::{mat_vec, matrix_scale, BlockSimplexQP, QPSolution, SolverOptions};
use crate::error::{PmiError, Result};

/// Euclidean projection of `v` onto `{x >= 0, sum x = 1}`, written into `out`.
pub fn project_onto_simplex(v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(v.len(), out.len());
    if v.len() == 1 {
        out[0] = 1.0;
        return;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - theta).max(0.0);
    }
}

fn project_blocks(problem: &BlockSimplexQP, v: &[f64], out: &mut [f64]) {
    for b in problem.blocks() {
        project_onto_simplex(&v[b.clone()], &mut out[b.clone()]);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected-gradient residual `max |x - P(x - g / scale)|`.
fn residual(problem: &BlockSimplexQP, x: &[f64], g: &[f64], scale: f64, work: &mut [f64], proj: &mut [f64]) -> f64 {
    for ((w, &xi), &gi) in work.iter_mut().zip(x).zip(g) {
        *w = xi - gi / scale;
    }
    project_blocks(problem, work, proj);
    x.iter().zip(proj.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// Minimises `1/2 x^T Q x` over a product of unit simplices.
///
/// Starts from uniform weights in every block. Each step projects a
/// Barzilai-Borwein gradient step and then takes the exact minimiser of the
/// quadratic along the segment to the projected point, so the objective never
/// increases. Negative curvature along a search direction is reported as a
/// non-PSD matrix.
pub fn solve_block_simplex(problem: &BlockSimplexQP, opts: &SolverOptions) -> Result<QPSolution> {
    let q = problem.q();
    let m = problem.len();
    let scale = matrix_scale(q);
    let max_iter = opts.iteration_limit(m);

    let mut x = problem.uniform_point();
    let mut g = mat_vec(q, &x);
    let mut step = 1.0 / scale;
    let mut work = vec![0.0; m];
    let mut proj = vec![0.0; m];
    let mut d = vec![0.0; m];

    let mut iterations = 0;
    let mut res = residual(problem, &x, &g, scale, &mut work, &mut proj);
    let mut converged = res <= opts.tol;

    while !converged && iterations < max_iter {
        iterations += 1;
        for ((w, &xi), &gi) in work.iter_mut().zip(&x).zip(&g) {
            *w = xi - step * gi;
        }
        project_blocks(problem, &work, &mut proj);
        for ((di, &p), &xi) in d.iter_mut().zip(&proj).zip(&x) {
            *di = p - xi;
        }
        let gd = dot(&g, &d);
        let qd = mat_vec(q, &d);
        let dqd = dot(&d, &qd);
        let dd = dot(&d, &d);

        if dqd < -1e-10 * scale * dd {
            return Err(PmiError::NotPsd(format!(
                "curvature {dqd:e} along a search direction of squared length {dd:e}"
            )));
        }
        if !(gd < 0.0) {
            // no descent along the BB step; fall back to the residual step once
            if step != 1.0 / scale {
                step = 1.0 / scale;
                continue;
            }
            break;
        }
        let t = if dqd > 0.0 { (-gd / dqd).min(1.0) } else { 1.0 };
        for i in 0..m {
            x[i] += t * d[i];
            g[i] += t * qd[i];
        }
        // BB1 step from s = t d, y = t Q d
        step = if dqd > 0.0 { dd / dqd } else { 1e6 / scale };
        step = step.clamp(1e-10 / scale, 1e10 / scale);

        pairwise_sweep(problem, &mut x, &mut g, scale);

        res = residual(problem, &x, &g, scale, &mut work, &mut proj);
        converged = res <= opts.tol;
    }

    let g = mat_vec(q, &x);
    let objective = 0.5 * dot(&x, &g);
    let solution = QPSolution {
        variables: x,
        objective,
        iterations,
        converged,
        kkt_residual: res,
    };
    debug_assert!(block_feasible(problem, &solution.variables));
    Ok(solution)
}

/// One exact two-coordinate move per block, shifting mass from the
/// highest-gradient positive coordinate to the lowest-gradient one. This
/// settles coordinates that the gradient step leaves hovering near zero.
fn pairwise_sweep(problem: &BlockSimplexQP, x: &mut [f64], g: &mut [f64], scale: f64) {
    let q = problem.q();
    for b in problem.blocks() {
        if b.len() < 2 {
            continue;
        }
        let mut i = b.start;
        let mut j = None::<usize>;
        for p in b.clone() {
            if g[p] < g[i] {
                i = p;
            }
            if x[p] > 0.0 && j.is_none_or(|j| g[p] > g[j]) {
                j = Some(p);
            }
        }
        let Some(j) = j else { continue };
        let gap = g[j] - g[i];
        if i == j || gap <= 0.0 {
            continue;
        }
        let eta = q[[i, i]] + q[[j, j]] - 2.0 * q[[i, j]];
        let t = if eta > 1e-12 * scale { (gap / eta).min(x[j]) } else { x[j] };
        if t == x[j] {
            x[i] += x[j];
            x[j] = 0.0;
        } else {
            x[i] += t;
            x[j] -= t;
        }
        for p in 0..x.len() {
            g[p] += t * (q[[p, i]] - q[[p, j]]);
        }
    }
}

fn block_feasible(problem: &BlockSimplexQP, x: &[f64]) -> bool {
    problem.blocks().iter().all(|b| {
        let s: f64 = x[b.clone()].iter().sum();
        (s - 1.0).abs() <= 1e-9 && x[b.clone()].iter().all(|&v| v >= -1e-12)
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests_support::{random_psd, rng};
    use super::super::{brute_force_block_simplex, quadratic_objective};
    use super::*;
    use ndarray::{arr2, Array2};
    use rand::Rng;

    #[test]
    fn projection_known_values() {
        let mut out = [0.0; 3];
        project_onto_simplex(&[0.2, 0.3, 0.5], &mut out);
        assert_eq!(out, [0.2, 0.3, 0.5]);
        project_onto_simplex(&[2.0, 0.0, 0.0], &mut out);
        assert_eq!(out, [1.0, 0.0, 0.0]);
        project_onto_simplex(&[1.0, 1.0, -5.0], &mut out);
        assert_eq!(out, [0.5, 0.5, 0.0]);
        let mut one = [0.0];
        project_onto_simplex(&[-3.0], &mut one);
        assert_eq!(one, [1.0]);
    }

    #[test]
    fn projection_is_closest_feasible_point() {
        let mut r = rng(1);
        for _ in 0..200 {
            let n = r.random_range(2..6);
            let v: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
            let mut p = vec![0.0; n];
            project_onto_simplex(&v, &mut p);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let dist = |x: &[f64]| x.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            // compare against random feasible points
            for _ in 0..50 {
                let mut w: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= s);
                assert!(dist(&p) <= dist(&w) + 1e-12);
            }
        }
    }

    #[test]
    fn singleton_blocks_force_ones() {
        let q = arr2(&[[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 1.0]]);
        let p = BlockSimplexQP::new(q.clone(), vec![0..1, 1..2, 2..3]).unwrap();
        let s = solve_block_simplex(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.variables, vec![1.0, 1.0, 1.0]);
        assert!(s.converged);
        assert!((s.objective - 0.5 * q.sum()).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_keeps_uniform_point() {
        let p = BlockSimplexQP::new(Array2::zeros((5, 5)), vec![0..2, 2..5]).unwrap();
        let s = solve_block_simplex(&p, &SolverOptions::default()).unwrap();
        assert!(s.converged);
        assert_eq!(s.objective, 0.0);
        assert_eq!(s.variables, p.uniform_point());
    }

    #[test]
    fn matches_grid_oracle_on_linear_fixture() {
        // linear-kernel Gram of 2 bags x 2 points, variance-style objective
        let pts = [[0.0, 1.0], [2.0, 0.5], [0.3, 0.9], [-1.0, 2.0]];
        let q = Array2::from_shape_fn((4, 4), |(i, j)| pts[i][0] * pts[j][0] + pts[i][1] * pts[j][1]);
        let p = BlockSimplexQP::new(q, vec![0..2, 2..4]).unwrap();
        let s = solve_block_simplex(&p, &SolverOptions::with_tol(1e-10)).unwrap();
        let o = brute_force_block_simplex(&p, 1e-3).unwrap();
        assert!(s.converged);
        assert!((o.objective - s.objective).abs() < 1e-5);
        assert!(o.objective >= s.objective - 1e-9);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let q = arr2(&[[1.0, 3.0], [3.0, 1.0]]);
        let p = BlockSimplexQP::new(q, vec![0..2]).unwrap();
        let mut opts = SolverOptions::default();
        opts.max_iter = Some(50);
        // uniform start is a saddle: the gradient is constant in the block so
        // projection yields no direction; perturb through a different block shape
        let r = solve_block_simplex(&p, &opts).unwrap();
        assert_eq!(r.variables, vec![0.5, 0.5]);

        let q = arr2(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -5.0]]);
        assert!(matches!(
            BlockSimplexQP::new(q, vec![0..3]),
            Err(PmiError::NotPsd(_))
        ));

        // negative curvature along the only feasible direction
        let q = arr2(&[[1.0, 3.0], [3.0, 2.0]]);
        let p = BlockSimplexQP::new(q, vec![0..2]).unwrap();
        assert!(matches!(solve_block_simplex(&p, &opts), Err(PmiError::NotPsd(_))));
    }

    #[test]
    fn properties_on_random_problems() {
        let mut r = rng(17);
        for _ in 0..60 {
            let blocks_n = r.random_range(1..5);
            let mut blocks = Vec::new();
            let mut start = 0;
            for _ in 0..blocks_n {
                let len = r.random_range(1..5);
                blocks.push(start..start + len);
                start += len;
            }
            let q = random_psd(&mut r, start);
            let p = BlockSimplexQP::new(q.clone(), blocks.clone()).unwrap();
            let s = solve_block_simplex(&p, &SolverOptions::with_tol(1e-9)).unwrap();
            assert!(block_feasible(&p, &s.variables));
            assert!(s.objective <= quadratic_objective(&q, &p.uniform_point()) + 1e-15);

            // scaling equivariance
            let c = r.random_range(0.1..50.0);
            let p2 = BlockSimplexQP::new(&q * c, blocks).unwrap();
            let s2 = solve_block_simplex(&p2, &SolverOptions::with_tol(1e-9)).unwrap();
            assert!(block_feasible(&p2, &s2.variables));
            assert!((s2.objective - c * s.objective).abs() < 1e-8 * c, "{} vs {}", s2.objective, c * s.objective);
        }
    }

    #[test]
    fn iterations_never_increase_objective() {
        let mut r = rng(3);
        for _ in 0..30 {
            let q = random_psd(&mut r, 6);
            let p = BlockSimplexQP::new(q.clone(), vec![0..3, 3..6]).unwrap();
            let mut prev = f64::INFINITY;
            for it in 0..25 {
                let opts = SolverOptions { tol: 0.0, max_iter: Some(it) };
                let s = solve_block_simplex(&p, &opts).unwrap();
                assert!(s.objective <= prev + 1e-12);
                prev = s.objective;
            }
        }
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let mut r = rng(8);
        let q = random_psd(&mut r, 6);
        let p = BlockSimplexQP::new(q, vec![0..3, 3..6]).unwrap();
        let s = solve_block_simplex(&p, &SolverOptions { tol: 0.0, max_iter: Some(3) }).unwrap();
        assert!(!s.converged);
        assert!(s.iterations <= 3);
    }
}
