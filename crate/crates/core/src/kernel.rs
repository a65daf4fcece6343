//! Kernel functions, Gram matrices and the kernel between virtual instances.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{PmiError, Result};
use crate::pmi::LambdaSolution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `exp(-gamma * |x - y|^2)`
    Rbf { gamma: f64 },
    /// `x . y`
    Linear,
    /// `(x . y + coef)^degree`
    Polynomial { degree: u32, coef: f64 },
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        let spec = KernelSpec::Rbf { gamma };
        spec.validate()?;
        Ok(spec)
    }

    /// RBF with `gamma = 1/d`.
    pub fn default_for_dimension(d: usize) -> Self {
        KernelSpec::Rbf {
            gamma: 1.0 / d.max(1) as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(PmiError::InvalidKernel(format!("gamma must be positive, got {gamma}")))
            }
            KernelSpec::Polynomial { degree: 0, .. } => {
                Err(PmiError::InvalidKernel("degree must be at least 1".into()))
            }
            KernelSpec::Polynomial { coef, .. } if !coef.is_finite() => {
                Err(PmiError::InvalidKernel("coef must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// Evaluates the kernel without checking dimensions.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match *self {
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
            KernelSpec::Linear => dot(x, y),
            KernelSpec::Polynomial { degree, coef } => (dot(x, y) + coef).powi(degree as i32),
        }
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Rbf { gamma } => write!(f, "rbf:gamma={gamma:?}"),
            KernelSpec::Linear => f.write_str("linear"),
            KernelSpec::Polynomial { degree, coef } => write!(f, "poly:degree={degree},coef={coef:?}"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = PmiError;

    /// Accepts `rbf:gamma=<float>`, `linear`, `poly:degree=<int>,coef=<float>`.
    fn from_str(s: &str) -> Result<Self> {
        let invalid = || PmiError::InvalidKernel(s.to_string());
        let s = s.trim();
        let (family, params) = match s.split_once(':') {
            Some((f, p)) => (f, p),
            None => (s, ""),
        };
        let mut gamma = None;
        let mut degree = None;
        let mut coef = None;
        for kv in params.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = kv.split_once('=').ok_or_else(invalid)?;
            match key.trim() {
                "gamma" => gamma = Some(value.trim().parse::<f64>().map_err(|_| invalid())?),
                "degree" => degree = Some(value.trim().parse::<u32>().map_err(|_| invalid())?),
                "coef" => coef = Some(value.trim().parse::<f64>().map_err(|_| invalid())?),
                _ => return Err(invalid()),
            }
        }
        let spec = match family {
            "rbf" if degree.is_none() && coef.is_none() => KernelSpec::Rbf {
                gamma: gamma.ok_or_else(invalid)?,
            },
            "linear" if params.is_empty() => KernelSpec::Linear,
            "poly" if gamma.is_none() => KernelSpec::Polynomial {
                degree: degree.ok_or_else(invalid)?,
                coef: coef.unwrap_or(0.0),
            },
            _ => return Err(invalid()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Kernel value between two feature vectors, with a dimension check.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(PmiError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(spec.eval(x, y))
}

/// Dense kernel matrix over every instance of a dataset in flat order.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub kernel: KernelSpec,
    pub entries: Array2<f64>,
    /// Bag boundaries in the flat index space (N + 1 entries).
    pub offsets: Vec<usize>,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    pub fn bag_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn block(&self, bag: usize) -> Range<usize> {
        self.offsets[bag]..self.offsets[bag + 1]
    }

    pub fn blocks(&self) -> Vec<Range<usize>> {
        (0..self.bag_count()).map(|i| self.block(i)).collect()
    }

    /// Flat index of instance `j` in bag `i`.
    pub fn flat_index(&self, bag: usize, instance: usize) -> usize {
        self.offsets[bag] + instance
    }
}

/// Symmetric kernel matrix of a list of points; each entry is computed once
/// and mirrored.
pub fn gram_of_points<P: AsRef<[f64]>>(spec: &KernelSpec, points: &[P]) -> Array2<f64> {
    let n = points.len();
    let mut k = Array2::<f64>::zeros((n, n));
    for p in 0..n {
        for q in p..n {
            let v = spec.eval(points[p].as_ref(), points[q].as_ref());
            k[[p, q]] = v;
            k[[q, p]] = v;
        }
    }
    k
}

pub fn gram_matrix(spec: &KernelSpec, dataset: &Dataset) -> Result<GramMatrix> {
    spec.validate()?;
    let points: Vec<&[f64]> = dataset.instances().map(|i| i.features.as_slice()).collect();
    if points.is_empty() {
        return Err(PmiError::EmptyDataset);
    }
    Ok(GramMatrix {
        kernel: *spec,
        entries: gram_of_points(spec, &points),
        offsets: dataset.offsets(),
    })
}

/// Kernel between the virtual instances `b_i = sum_k lambda_ik B_ik`:
/// `V[i][j] = sum_k sum_r lambda_ik lambda_jr K[(i,k)][(j,r)]`.
pub fn virtual_kernel(gram: &GramMatrix, lambda: &LambdaSolution) -> Result<Array2<f64>> {
    let n_bags = gram.bag_count();
    if lambda.bag_count() != n_bags {
        return Err(PmiError::PartitionMismatch(format!(
            "{} weight vectors for {} bags",
            lambda.bag_count(),
            n_bags
        )));
    }
    for i in 0..n_bags {
        if lambda.bag(i).len() != gram.block(i).len() {
            return Err(PmiError::PartitionMismatch(format!(
                "bag {i} has {} instances but {} weights",
                gram.block(i).len(),
                lambda.bag(i).len()
            )));
        }
    }
    let n = gram.len();
    // T = K * Lambda, one column per bag
    let mut t = Array2::<f64>::zeros((n, n_bags));
    for p in 0..n {
        for j in 0..n_bags {
            let block = gram.block(j);
            t[[p, j]] = lambda
                .bag(j)
                .iter()
                .zip(block)
                .map(|(w, q)| w * gram.entries[[p, q]])
                .sum();
        }
    }
    let mut v = Array2::<f64>::zeros((n_bags, n_bags));
    for i in 0..n_bags {
        let block = gram.block(i);
        for j in i..n_bags {
            let s: f64 = lambda
                .bag(i)
                .iter()
                .zip(block.clone())
                .map(|(w, p)| w * t[[p, j]])
                .sum();
            v[[i, j]] = s;
            v[[j, i]] = s;
        }
    }
    Ok(v)
}

/// One `(weight, point)` pair of a kernel expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTerm {
    pub weight: f64,
    pub point: Vec<f64>,
}

/// `sum_p w_p * k(x, v_p)`.
pub fn cross_kernel_row(spec: &KernelSpec, x: &[f64], expansion: &[ExpansionTerm]) -> Result<f64> {
    if let Some(bad) = expansion.iter().find(|t| t.point.len() != x.len()) {
        return Err(PmiError::DimensionMismatch {
            expected: bad.point.len(),
            found: x.len(),
        });
    }
    Ok(expansion_sum(spec, x, expansion))
}

#[inline]
pub(crate) fn expansion_sum(spec: &KernelSpec, x: &[f64], expansion: &[ExpansionTerm]) -> f64 {
    expansion.iter().map(|t| t.weight * spec.eval(x, &t.point)).sum()
}
