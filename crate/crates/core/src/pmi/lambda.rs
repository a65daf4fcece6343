//! Per-bag convex weights that turn every bag into one virtual instance.
//!
//! The weights minimise the spread of the virtual instances around their
//! common mean, `sum_i |B_i l_i - m|^2` with `m = (1/N) sum_j B_j l_j`, which
//! in kernel form is `l^T (blockdiag(K) - K/N) l`.

use std::ops::Range;

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{PmiError, Result};
use crate::kernel::GramMatrix;
use crate::qp::{solve_block_simplex, BlockSimplexQP, QPSolution, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSolution {
    weights: Vec<Vec<f64>>,
    /// Variance `l^T Q l` at the returned weights.
    pub variance: f64,
    /// Diagnostics of the underlying solve, when the weights came from one.
    pub solve: Option<QPSolution>,
}

impl LambdaSolution {
    pub fn uniform(dataset: &Dataset) -> Self {
        let weights = dataset
            .bags()
            .iter()
            .map(|b| vec![1.0 / b.len() as f64; b.len()])
            .collect();
        Self {
            weights,
            variance: f64::NAN,
            solve: None,
        }
    }

    /// Checks partition sizes and simplex feasibility.
    pub fn from_weights(dataset: &Dataset, weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.len() != dataset.len() {
            return Err(PmiError::PartitionMismatch(format!(
                "{} weight vectors for {} bags",
                weights.len(),
                dataset.len()
            )));
        }
        for (i, (w, bag)) in weights.iter().zip(dataset.bags()).enumerate() {
            if w.len() != bag.len() {
                return Err(PmiError::PartitionMismatch(format!(
                    "bag {i} has {} instances but {} weights",
                    bag.len(),
                    w.len()
                )));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > 1e-9 || w.iter().any(|&v| v < -1e-12 || !v.is_finite()) {
                return Err(PmiError::InvalidConfig(format!("weights of bag {i} are not on the simplex")));
            }
        }
        Ok(Self {
            weights,
            variance: f64::NAN,
            solve: None,
        })
    }

    pub fn bag_count(&self) -> usize {
        self.weights.len()
    }

    pub fn bag(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Concatenation of all bag weights in flat instance order.
    pub fn flat(&self) -> Vec<f64> {
        self.weights.iter().flatten().copied().collect()
    }

    /// The explicit feature-space virtual instance `sum_k l_ik B_ik`.
    pub fn virtual_instance(&self, dataset: &Dataset, bag: usize) -> Vec<f64> {
        let mut out = vec![0.0; dataset.dimension()];
        for (w, inst) in self.weights[bag].iter().zip(&dataset.bag(bag).instances) {
            for (o, v) in out.iter_mut().zip(&inst.features) {
                *o += w * v;
            }
        }
        out
    }

    pub fn converged(&self) -> bool {
        self.solve.as_ref().is_none_or(|s| s.converged)
    }
}

/// `Q = blockdiag(K) - K / N` for the given bag blocks.
pub fn build_lambda_q(k: &Array2<f64>, blocks: &[Range<usize>]) -> Result<Array2<f64>> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(PmiError::PartitionMismatch("kernel matrix is not square".into()));
    }
    let covered: usize = blocks.iter().map(|b| b.len()).sum();
    if covered != n || blocks.iter().any(|b| b.end > n) {
        return Err(PmiError::PartitionMismatch(format!(
            "blocks cover {covered} indices, kernel matrix has {n}"
        )));
    }
    let inv_n = 1.0 / blocks.len() as f64;
    let mut q = k.mapv(|v| -inv_n * v);
    for b in blocks {
        for p in b.clone() {
            for r in b.clone() {
                q[[p, r]] = k[[p, r]] - inv_n * k[[p, r]];
            }
        }
    }
    Ok(q)
}

/// `l^T Q l`.
pub fn variance_objective(q: &Array2<f64>, lambda: &[f64]) -> f64 {
    2.0 * crate::qp::quadratic_objective(q, lambda)
}

pub fn fit_lambda(dataset: &Dataset, gram: &GramMatrix, opts: &SolverOptions) -> Result<LambdaSolution> {
    if dataset.is_empty() {
        return Err(PmiError::EmptyDataset);
    }
    if gram.offsets != dataset.offsets() {
        return Err(PmiError::PartitionMismatch("Gram matrix was built for another dataset".into()));
    }
    let blocks = gram.blocks();
    let q = build_lambda_q(&gram.entries, &blocks)?;
    let problem = BlockSimplexQP::new(q, blocks.clone())?;
    let solve = solve_block_simplex(&problem, opts)?;
    let weights = blocks.iter().map(|b| solve.variables[b.clone()].to_vec()).collect();
    Ok(LambdaSolution {
        weights,
        variance: 2.0 * solve.objective,
        solve: Some(solve),
    })
}
