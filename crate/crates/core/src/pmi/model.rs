//! One-class training over virtual instances, the retraining step with
//! representative instances, and the bag-level decision rule.

use ndarray::Array2;

use crate::data::{Bag, Dataset, Label};
use crate::error::{PmiError, Result};
use crate::kernel::{expansion_sum, gram_of_points, virtual_kernel, ExpansionTerm, GramMatrix, KernelSpec};
use crate::pmi::LambdaSolution;
use crate::qp::{
    classify_alpha, matrix_scale, recover_rho, solve_box_sum, AlphaBound, BoxSumQP, QPSolution, SolverOptions,
    DEFAULT_BOUND_TOL,
};

/// Box bound used when retraining on virtual plus representative instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RetrainBound {
    /// `1/(nu N)` over the 2N points, so at most `nu N` points reach the bound.
    #[default]
    PerBag,
    /// `1/(2 nu N)`, i.e. the original `nu` applied to all 2N points.
    PerPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub solver: SolverOptions,
    /// Bound-classification tolerance relative to the box bound.
    pub bound_tol: f64,
    pub retrain_bound: RetrainBound,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            bound_tol: DEFAULT_BOUND_TOL,
            retrain_bound: RetrainBound::PerBag,
        }
    }
}

/// Role of a training bag according to its dual weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BagRole {
    /// Weight strictly inside the box: the bag sits on the boundary.
    Support,
    /// Weight at the box bound: the bag falls outside.
    Outlier,
    /// Zero weight: the bag lies inside the boundary.
    Interior,
}

impl From<AlphaBound> for BagRole {
    fn from(b: AlphaBound) -> Self {
        match b {
            AlphaBound::Zero => BagRole::Interior,
            AlphaBound::Interior => BagRole::Support,
            AlphaBound::AtUpper => BagRole::Outlier,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainingSet {
    /// One virtual instance per bag.
    Virtual,
    /// Virtual instances followed by one representative instance per bag.
    VirtualAndRepresentatives { representatives: Vec<usize> },
    /// Plain feature vectors.
    Points,
}

/// Result of classifying a bag: the label plus its best instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BagDecision {
    pub label: Label,
    /// Index of the instance with the largest decision value (lowest on ties).
    pub witness: usize,
    pub value: f64,
}

/// `l(x) = sum_p w_p k(x, v_p) - rho`, with `x` counted as inside when
/// `l(x) >= -slack`.
///
/// `slack` absorbs the solver's KKT tolerance, so points on the boundary are
/// not flipped by round-off in the recovered offset.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionFunction {
    pub kernel: KernelSpec,
    pub rho: f64,
    pub slack: f64,
    pub dimension: usize,
    pub expansion: Vec<ExpansionTerm>,
}

impl DecisionFunction {
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension {
            return Err(PmiError::DimensionMismatch {
                expected: self.dimension,
                found: x.len(),
            });
        }
        Ok(self.value_unchecked(x))
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, x: &[f64]) -> f64 {
        expansion_sum(&self.kernel, x, &self.expansion) - self.rho
    }

    pub fn is_inside(&self, value: f64) -> bool {
        value >= -self.slack
    }

    pub fn label_of(&self, value: f64) -> Label {
        if self.is_inside(value) {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn instance_values(&self, bag: &Bag) -> Result<Vec<f64>> {
        bag.instances.iter().map(|i| self.decision_value(&i.features)).collect()
    }

    /// `+1` iff the largest instance value is inside the boundary.
    pub fn classify_bag(&self, bag: &Bag) -> Result<BagDecision> {
        let values = self.instance_values(bag)?;
        let (witness, value) = argmax(&values).ok_or_else(|| {
            PmiError::InvalidConfig(format!("bag `{}` has no instances", bag.id))
        })?;
        Ok(BagDecision {
            label: self.label_of(value),
            witness,
            value,
        })
    }
}

/// First index of the maximum.
pub(crate) fn argmax(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneClassModel {
    pub decision: DecisionFunction,
    pub nu: f64,
    /// Dual weights, one per training point.
    pub alpha: Vec<f64>,
    pub upper: f64,
    pub tol_bound: f64,
    /// Decision value at each training point, from the dual gradient.
    pub training_values: Vec<f64>,
    pub bag_roles: Vec<BagRole>,
    pub training: TrainingSet,
    pub solve: QPSolution,
}

impl OneClassModel {
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        self.decision.decision_value(x)
    }

    pub fn classify_bag(&self, bag: &Bag) -> Result<BagDecision> {
        self.decision.classify_bag(bag)
    }

    pub fn converged(&self) -> bool {
        self.solve.converged
    }

    pub fn outlier_bags(&self) -> usize {
        self.bag_roles.iter().filter(|&&r| r == BagRole::Outlier).count()
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu <= 1.0 {
        Ok(())
    } else {
        Err(PmiError::InvalidConfig(format!("nu must lie in (0, 1], got {nu}")))
    }
}

struct DualFit {
    alpha: Vec<f64>,
    rho: f64,
    slack: f64,
    tol_bound: f64,
    training_values: Vec<f64>,
    solve: QPSolution,
}

fn fit_dual(k: Array2<f64>, upper: f64, opts: &TrainOptions) -> Result<DualFit> {
    let scale = matrix_scale(&k);
    let problem = BoxSumQP::new(k, upper)?;
    let solve = solve_box_sum(&problem, &opts.solver)?;
    let tol_bound = opts.bound_tol * upper;
    let alpha = solve.variables.clone();
    let k = problem.k();
    let rho = recover_rho(k, &alpha, upper, tol_bound)?;
    let training_values = (0..alpha.len())
        .map(|j| alpha.iter().enumerate().map(|(i, a)| a * k[[i, j]]).sum::<f64>() - rho)
        .collect();
    Ok(DualFit {
        alpha,
        rho,
        slack: 2.0 * opts.solver.tol * scale,
        tol_bound,
        training_values,
        solve,
    })
}

fn virtual_terms(dataset: &Dataset, lambda: &LambdaSolution, alpha: &[f64], out: &mut Vec<ExpansionTerm>) {
    for (j, bag) in dataset.bags().iter().enumerate() {
        for (w, inst) in lambda.bag(j).iter().zip(&bag.instances) {
            let weight = alpha[j] * w;
            if weight != 0.0 {
                out.push(ExpansionTerm {
                    weight,
                    point: inst.features.clone(),
                });
            }
        }
    }
}

fn check_gram(dataset: &Dataset, gram: &GramMatrix) -> Result<()> {
    if gram.offsets != dataset.offsets() {
        return Err(PmiError::PartitionMismatch("Gram matrix was built for another dataset".into()));
    }
    Ok(())
}

/// One-class training over the virtual instances with box bound `1/(nu N)`.
pub fn train_once(
    dataset: &Dataset,
    gram: &GramMatrix,
    lambda: &LambdaSolution,
    nu: f64,
    opts: &TrainOptions,
) -> Result<OneClassModel> {
    check_nu(nu)?;
    check_gram(dataset, gram)?;
    let n_bags = dataset.len();
    let kv = virtual_kernel(gram, lambda)?;
    let upper = 1.0 / (nu * n_bags as f64);
    let fit = fit_dual(kv, upper, opts)?;

    let mut expansion = Vec::new();
    virtual_terms(dataset, lambda, &fit.alpha, &mut expansion);
    let bag_roles = fit
        .alpha
        .iter()
        .map(|&a| classify_alpha(a, upper, fit.tol_bound).into())
        .collect();
    Ok(OneClassModel {
        decision: DecisionFunction {
            kernel: gram.kernel,
            rho: fit.rho,
            slack: fit.slack,
            dimension: dataset.dimension(),
            expansion,
        },
        nu,
        alpha: fit.alpha,
        upper,
        tol_bound: fit.tol_bound,
        training_values: fit.training_values,
        bag_roles,
        training: TrainingSet::Virtual,
        solve: fit.solve,
    })
}

/// Plain one-class training on explicit feature vectors with box bound
/// `1/(nu M)`. Roles are reported per point.
pub fn train_one_class(points: &[Vec<f64>], kernel: &KernelSpec, nu: f64, opts: &TrainOptions) -> Result<OneClassModel> {
    check_nu(nu)?;
    kernel.validate()?;
    let dimension = points.first().ok_or(PmiError::EmptyDataset)?.len();
    if let Some(bad) = points.iter().find(|p| p.len() != dimension) {
        return Err(PmiError::DimensionMismatch {
            expected: dimension,
            found: bad.len(),
        });
    }
    let upper = 1.0 / (nu * points.len() as f64);
    let fit = fit_dual(gram_of_points(kernel, points), upper, opts)?;
    let expansion = fit
        .alpha
        .iter()
        .zip(points)
        .filter(|(a, _)| **a != 0.0)
        .map(|(&weight, p)| ExpansionTerm {
            weight,
            point: p.clone(),
        })
        .collect();
    let bag_roles = fit
        .alpha
        .iter()
        .map(|&a| classify_alpha(a, upper, fit.tol_bound).into())
        .collect();
    Ok(OneClassModel {
        decision: DecisionFunction {
            kernel: *kernel,
            rho: fit.rho,
            slack: fit.slack,
            dimension,
            expansion,
        },
        nu,
        alpha: fit.alpha,
        upper,
        tol_bound: fit.tol_bound,
        training_values: fit.training_values,
        bag_roles,
        training: TrainingSet::Points,
        solve: fit.solve,
    })
}

/// True when some bag whose virtual instance is not an outlier still has
/// every real instance outside the boundary.
pub fn needs_retrain(model: &OneClassModel, dataset: &Dataset) -> Result<bool> {
    for (i, bag) in dataset.bags().iter().enumerate() {
        let below_bound = classify_alpha(model.alpha[i], model.upper, model.tol_bound) != AlphaBound::AtUpper;
        if below_bound && model.classify_bag(bag)?.label == Label::Negative {
            return Ok(true);
        }
    }
    Ok(false)
}

/// The highest-valued instance of every bag (lowest index on ties).
pub fn select_representatives(model: &OneClassModel, dataset: &Dataset) -> Result<Vec<usize>> {
    dataset
        .bags()
        .iter()
        .map(|bag| Ok(model.classify_bag(bag)?.witness))
        .collect()
}

/// One-class training over the N virtual instances plus the N representative
/// instances. Bag roles follow the representative's dual weight.
pub fn retrain(
    dataset: &Dataset,
    gram: &GramMatrix,
    lambda: &LambdaSolution,
    representatives: &[usize],
    nu: f64,
    opts: &TrainOptions,
) -> Result<OneClassModel> {
    check_nu(nu)?;
    check_gram(dataset, gram)?;
    let n_bags = dataset.len();
    if representatives.len() != n_bags {
        return Err(PmiError::PartitionMismatch(format!(
            "{} representatives for {} bags",
            representatives.len(),
            n_bags
        )));
    }
    for (i, &s) in representatives.iter().enumerate() {
        if s >= dataset.bag(i).len() {
            return Err(PmiError::PartitionMismatch(format!(
                "representative {s} out of range for bag {i}"
            )));
        }
    }
    let kv = virtual_kernel(gram, lambda)?;
    let raw: Vec<usize> = representatives
        .iter()
        .enumerate()
        .map(|(i, &s)| gram.flat_index(i, s))
        .collect();
    let k = &gram.entries;
    let m = 2 * n_bags;
    let mut full = Array2::<f64>::zeros((m, m));
    for i in 0..n_bags {
        for j in 0..n_bags {
            full[[i, j]] = kv[[i, j]];
        }
    }
    for i in 0..n_bags {
        let block = gram.block(i);
        for (j, &r) in raw.iter().enumerate() {
            let v: f64 = lambda
                .bag(i)
                .iter()
                .zip(block.clone())
                .map(|(w, p)| w * k[[p, r]])
                .sum();
            full[[i, n_bags + j]] = v;
            full[[n_bags + j, i]] = v;
        }
    }
    for (i, &ri) in raw.iter().enumerate() {
        for (j, &rj) in raw.iter().enumerate() {
            full[[n_bags + i, n_bags + j]] = k[[ri, rj]];
        }
    }

    let upper = match opts.retrain_bound {
        RetrainBound::PerBag => 1.0 / (nu * n_bags as f64),
        RetrainBound::PerPoint => 1.0 / (2.0 * nu * n_bags as f64),
    };
    let fit = fit_dual(full, upper, opts)?;

    let mut expansion = Vec::new();
    virtual_terms(dataset, lambda, &fit.alpha[..n_bags], &mut expansion);
    for (i, &s) in representatives.iter().enumerate() {
        let weight = fit.alpha[n_bags + i];
        if weight != 0.0 {
            expansion.push(ExpansionTerm {
                weight,
                point: dataset.bag(i).instances[s].features.clone(),
            });
        }
    }
    let bag_roles = fit.alpha[n_bags..]
        .iter()
        .map(|&a| classify_alpha(a, upper, fit.tol_bound).into())
        .collect();
    Ok(OneClassModel {
        decision: DecisionFunction {
            kernel: gram.kernel,
            rho: fit.rho,
            slack: fit.slack,
            dimension: dataset.dimension(),
            expansion,
        },
        nu,
        alpha: fit.alpha,
        upper,
        tol_bound: fit.tol_bound,
        training_values: fit.training_values,
        bag_roles,
        training: TrainingSet::VirtualAndRepresentatives {
            representatives: representatives.to_vec(),
        },
        solve: fit.solve,
    })
}

/// Fraction of training bags whose role is [`BagRole::Outlier`].
pub fn outlier_bag_fraction(model: &OneClassModel) -> f64 {
    if model.bag_roles.is_empty() {
        return 0.0;
    }
    model.outlier_bags() as f64 / model.bag_roles.len() as f64
}

/// Whether every bag's label agrees with the side of the boundary its
/// virtual instance falls on. Only meaningful for models trained on virtual
/// instances.
pub fn bag_and_virtual_labels_agree(model: &OneClassModel, dataset: &Dataset) -> Result<bool> {
    for (i, bag) in dataset.bags().iter().enumerate() {
        let virtual_label = model.decision.label_of(model.training_values[i]);
        if model.classify_bag(bag)?.label != virtual_label {
            return Ok(false);
        }
    }
    Ok(true)
}
