//! Grid-search reference solvers used to check the real solvers.
//!
//! Points are restricted to the lattice `x_i = u_i * h` with integer `u_i`.
//! When the lattice over the free coordinates is small enough it is
//! enumerated outright; otherwise a coarse sub-lattice is enumerated first
//! and then refined in windows around the incumbent down to the requested
//! step. The last free coordinate is always minimised exactly over its lattice
//! line (the objective restricted to a line is a 1-D convex quadratic, so its
//! best lattice point is a neighbour of the continuous minimiser).

use ndarray::Array2;

use super::{BlockSimplexQP, BoxSumQP, QPSolution};
use crate::error::{PmiError, Result};

pub const ORACLE_MAX_VARIABLES: usize = 6;

const BUDGET: f64 = 2.0e5;
const LADDER: [i64; 16] = [1, 2, 4, 5, 8, 10, 20, 25, 40, 50, 100, 125, 200, 250, 500, 1000];

pub fn brute_force_block_simplex(problem: &BlockSimplexQP, grid_step: f64) -> Result<QPSolution> {
    check_size(problem.len(), grid_step)?;
    let units = units_for(grid_step);
    let mut blocks: Vec<Vec<usize>> = problem.blocks().iter().map(|b| b.clone().collect()).collect();
    if let Some(pos) = blocks.iter().rposition(|b| b.len() >= 2) {
        let b = blocks.remove(pos);
        blocks.push(b);
    }
    Grid::new(problem.q(), units, blocks, units).solve()
}

pub fn brute_force_box_sum(problem: &BoxSumQP, grid_step: f64) -> Result<QPSolution> {
    check_size(problem.len(), grid_step)?;
    let units = units_for(grid_step);
    let cap = ((problem.upper() * units as f64 + 1e-9).floor() as i64).min(units);
    if cap * (problem.len() as i64) < units {
        return Err(PmiError::InvalidConfig(format!(
            "no lattice point of step {grid_step} satisfies the box bound {}",
            problem.upper()
        )));
    }
    Grid::new(problem.k(), units, vec![(0..problem.len()).collect()], cap).solve()
}

fn check_size(m: usize, grid_step: f64) -> Result<()> {
    if m > ORACLE_MAX_VARIABLES {
        return Err(PmiError::OracleTooLarge {
            max: ORACLE_MAX_VARIABLES,
            got: m,
        });
    }
    if !(grid_step > 0.0 && grid_step <= 0.5) {
        return Err(PmiError::InvalidConfig(format!("grid step must lie in (0, 0.5], got {grid_step}")));
    }
    Ok(())
}

fn units_for(grid_step: f64) -> i64 {
    (1.0 / grid_step).round() as i64
}

struct Grid<'a> {
    q: &'a Array2<f64>,
    h: f64,
    units: i64,
    blocks: Vec<Vec<usize>>,
    cap: i64,
    x: Vec<i64>,
    best: Option<(f64, Vec<i64>)>,
    evaluations: usize,
}

struct Window<'a> {
    step: i64,
    center: Option<&'a [i64]>,
    radius: i64,
}

impl<'a> Grid<'a> {
    fn new(q: &'a Array2<f64>, units: i64, blocks: Vec<Vec<usize>>, cap: i64) -> Self {
        Self {
            q,
            h: 1.0 / units as f64,
            units,
            blocks,
            cap,
            x: vec![0; q.nrows()],
            best: None,
            evaluations: 0,
        }
    }

    fn enumerated_vars(&self) -> usize {
        let free: usize = self.blocks.iter().map(|b| b.len() - 1).sum();
        let analytic = usize::from(self.blocks.last().is_some_and(|b| b.len() >= 2));
        free - analytic
    }

    fn solve(mut self) -> Result<QPSolution> {
        let e = self.enumerated_vars() as i32;
        let mut step = *LADDER
            .iter()
            .find(|&&s| ((self.units / s + 2) as f64).powi(e) <= BUDGET)
            .unwrap_or(&LADDER[LADDER.len() - 1]);
        self.search(&Window {
            step,
            center: None,
            radius: 0,
        });
        while step > 1 {
            let next = (step / 5).max(1);
            let center = self.best_point()?;
            self.search(&Window {
                step: next,
                center: Some(&center),
                radius: 2 * step,
            });
            step = next;
        }
        for _ in 0..100 {
            let before = self.best_point()?;
            self.search(&Window {
                step: 1,
                center: Some(&before),
                radius: 2,
            });
            if self.best_point()? == before {
                break;
            }
        }
        let units = self.best_point()?;
        let variables: Vec<f64> = units.iter().map(|&u| u as f64 * self.h).collect();
        Ok(QPSolution {
            objective: super::quadratic_objective(self.q, &variables),
            variables,
            iterations: self.evaluations,
            converged: true,
            // not meaningful for a lattice search
            kkt_residual: f64::NAN,
        })
    }

    fn best_point(&self) -> Result<Vec<i64>> {
        self.best
            .as_ref()
            .map(|(_, x)| x.clone())
            .ok_or_else(|| PmiError::InvalidConfig("constraint set has no lattice point".into()))
    }

    fn search(&mut self, w: &Window<'_>) {
        self.recurse(w, 0, 0, self.units);
    }

    fn values(&self, lo: i64, hi: i64, var: usize, w: &Window<'_>) -> Vec<i64> {
        let mut out = Vec::new();
        match w.center {
            None => {
                out.push(lo);
                let mut v = (lo + w.step - 1) / w.step * w.step;
                while v <= hi {
                    out.push(v);
                    v += w.step;
                }
                out.push(hi);
            }
            Some(c) => {
                let c = c[var];
                let (wlo, whi) = (c - w.radius, c + w.radius);
                if lo >= wlo && lo <= whi {
                    out.push(lo);
                }
                if hi >= wlo && hi <= whi {
                    out.push(hi);
                }
                let k = w.radius / w.step;
                for j in -k..=k {
                    let v = c + j * w.step;
                    if v >= lo && v <= hi {
                        out.push(v);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn recurse(&mut self, w: &Window<'_>, b: usize, p: usize, rem: i64) {
        if b == self.blocks.len() {
            self.evaluate_point();
            return;
        }
        let len = self.blocks[b].len();
        let var = self.blocks[b][p];
        let after = (len - p - 1) as i64;
        if after == 0 {
            if rem < 0 || rem > self.cap {
                return;
            }
            self.x[var] = rem;
            self.recurse(w, b + 1, 0, self.units);
        } else if after == 1 && b == self.blocks.len() - 1 {
            let other = self.blocks[b][p + 1];
            self.evaluate_line(var, other, rem);
        } else {
            let lo = (rem - self.cap * after).max(0);
            let hi = self.cap.min(rem);
            if lo > hi {
                return;
            }
            for v in self.values(lo, hi, var, w) {
                self.x[var] = v;
                self.recurse(w, b, p + 1, rem - v);
            }
        }
    }

    fn real_point(&self) -> Vec<f64> {
        self.x.iter().map(|&u| u as f64 * self.h).collect()
    }

    fn offer(&mut self, value: f64) {
        self.evaluations += 1;
        let better = self.best.as_ref().is_none_or(|(f, _)| value < *f);
        if better {
            self.best = Some((value, self.x.clone()));
        }
    }

    fn evaluate_point(&mut self) {
        let value = super::quadratic_objective(self.q, &self.real_point());
        self.offer(value);
    }

    /// Minimises over `x_a + x_b = rem` with both coordinates in `[0, cap]`.
    fn evaluate_line(&mut self, a: usize, b: usize, rem: i64) {
        let tlo = (rem - self.cap).max(0);
        let thi = self.cap.min(rem);
        if tlo > thi {
            return;
        }
        self.x[a] = tlo;
        self.x[b] = rem - tlo;
        let x = self.real_point();
        let g = super::mat_vec(self.q, &x);
        let f0 = 0.5 * x.iter().zip(&g).map(|(u, v)| u * v).sum::<f64>();
        let q = self.q;
        let slope = self.h * (g[a] - g[b]);
        let curv = self.h * self.h * (q[[a, a]] + q[[b, b]] - 2.0 * q[[a, b]]);
        let span = thi - tlo;
        let f = |s: i64| f0 + s as f64 * slope + 0.5 * (s * s) as f64 * curv;

        let mut candidates = vec![0, span];
        if curv > 0.0 {
            let s_star = -slope / curv;
            if s_star.is_finite() {
                let fl = s_star.floor().clamp(0.0, span as f64) as i64;
                candidates.push(fl);
                candidates.push((fl + 1).min(span));
            }
        }
        let mut best_s = 0;
        let mut best_f = f64::INFINITY;
        for s in candidates {
            let v = f(s);
            if v < best_f || (v == best_f && s < best_s) {
                best_f = v;
                best_s = s;
            }
        }
        self.x[a] = tlo + best_s;
        self.x[b] = rem - tlo - best_s;
        let exact = super::quadratic_objective(self.q, &self.real_point());
        self.offer(exact);
    }
}
