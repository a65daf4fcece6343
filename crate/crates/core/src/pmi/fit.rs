use std::fmt;
use std::str::FromStr;

use crate::data::{Dataset, Label};
use crate::error::{PmiError, Result};
use crate::kernel::{gram_matrix, KernelSpec};
use crate::pmi::lambda::{fit_lambda, LambdaSolution};
use crate::pmi::model::{needs_retrain, retrain, select_representatives, train_once, OneClassModel, TrainOptions};
use crate::pmi::query::{remove_positive_labeled, select_query, LabelOracle, QueryLog, QueryRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmiConfig {
    pub kernel: KernelSpec,
    pub nu: f64,
    pub train: TrainOptions,
}

impl PmiConfig {
    pub fn new(kernel: KernelSpec, nu: f64) -> Self {
        Self {
            kernel,
            nu,
            train: TrainOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(PmiError::InvalidConfig(format!("nu must lie in (0, 1], got {}", self.nu)));
        }
        if !(self.train.solver.tol >= 0.0) {
            return Err(PmiError::InvalidConfig("solver tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TerminationReason {
    NoOracle,
    AllInstancesPositiveBag,
    PositiveQuery,
    EmptyBag,
    NoQueryableInstance,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::NoOracle => "no_oracle",
            TerminationReason::AllInstancesPositiveBag => "all_instances_positive_bag",
            TerminationReason::PositiveQuery => "positive_query",
            TerminationReason::EmptyBag => "empty_bag",
            TerminationReason::NoQueryableInstance => "no_queryable_instance",
        }
    }
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TerminationReason {
    type Err = PmiError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "no_oracle" => TerminationReason::NoOracle,
            "all_instances_positive_bag" => TerminationReason::AllInstancesPositiveBag,
            "positive_query" => TerminationReason::PositiveQuery,
            "empty_bag" => TerminationReason::EmptyBag,
            "no_queryable_instance" => TerminationReason::NoQueryableInstance,
            other => return Err(PmiError::InvalidConfig(format!("unknown termination reason `{other}`"))),
        })
    }
}

/// Bookkeeping for one pass of the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct PassSummary {
    pub bags: usize,
    pub instances: usize,
    pub retrained: bool,
    /// Instances removed after a negative answer, if the pass got that far.
    pub removed: Option<usize>,
    /// Bags that lost at least one instance in that removal.
    pub bags_with_removal: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmiModel {
    pub model: OneClassModel,
    pub config: PmiConfig,
    pub lambda_history: Vec<LambdaSolution>,
    pub query_log: QueryLog,
    pub termination: TerminationReason,
    pub passes: Vec<PassSummary>,
    /// Training data of the final pass.
    pub final_dataset: Dataset,
    /// All solver calls converged.
    pub converged: bool,
}

impl PmiModel {
    pub fn queries(&self) -> usize {
        self.query_log.len()
    }
}

/// Upper bound on the number of oracle queries the loop can issue.
pub fn max_query_bound(dataset: &Dataset, nu: f64) -> usize {
    let n_bags = dataset.len();
    let min_size = dataset.bags().iter().map(|b| b.len()).min().unwrap_or(0);
    if nu * (n_bags as f64) < 1.0 {
        return min_size.saturating_sub(1);
    }
    query_count_formula(dataset.total_instances(), n_bags, nu)
}

/// `ceil(n / ((1 - nu) N)) - 1`, saturating at `usize::MAX` for `nu = 1`.
pub fn query_count_formula(total_instances: usize, n_bags: usize, nu: f64) -> usize {
    let denom = (1.0 - nu) * n_bags as f64;
    if denom <= 0.0 {
        return usize::MAX;
    }
    let ratio = total_instances as f64 / denom;
    // guard against a ratio that is integral in exact arithmetic
    let ceil = (ratio - 1e-9).ceil();
    (ceil as usize).saturating_sub(1)
}

fn at_iteration<T>(iteration: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| PmiError::Iteration {
        iteration,
        source: Box::new(e),
    })
}

fn train_pass(data: &Dataset, config: &PmiConfig) -> Result<(LambdaSolution, OneClassModel, bool)> {
    let gram = gram_matrix(&config.kernel, data)?;
    let lambda = fit_lambda(data, &gram, &config.train.solver)?;
    let first = train_once(data, &gram, &lambda, config.nu, &config.train)?;
    if needs_retrain(&first, data)? {
        let reps = select_representatives(&first, data)?;
        let model = retrain(data, &gram, &lambda, &reps, config.nu, &config.train)?;
        Ok((lambda, model, true))
    } else {
        Ok((lambda, first, false))
    }
}

/// Weights, one-class training, then an unconditional retraining step with
/// the selected representatives. Used to check the outlier-fraction bound of
/// the retrained model on data where the loop itself would not retrain.
pub fn train_with_representatives(data: &Dataset, config: &PmiConfig) -> Result<OneClassModel> {
    config.validate()?;
    let gram = gram_matrix(&config.kernel, data)?;
    let lambda = fit_lambda(data, &gram, &config.train.solver)?;
    let first = train_once(data, &gram, &lambda, config.nu, &config.train)?;
    let reps = select_representatives(&first, data)?;
    retrain(data, &gram, &lambda, &reps, config.nu, &config.train)
}

/// Runs the full loop: weights, one-class training, optional retraining, and
/// oracle queries with removal of already-captured instances.
pub fn fit_pmi(dataset: &Dataset, config: &PmiConfig, oracle: &mut dyn LabelOracle) -> Result<PmiModel> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(PmiError::EmptyDataset);
    }
    // (original bag, original instance indices) for every current bag
    let mut origin: Vec<(usize, Vec<usize>)> = dataset.bags().iter().enumerate().map(|(i, b)| (i, (0..b.len()).collect())).collect();
    let mut data = dataset.clone();
    let mut lambda_history = Vec::new();
    let mut log = QueryLog::default();
    let mut passes = Vec::new();
    let mut converged = true;
    let mut iteration = 0;

    loop {
        iteration += 1;
        let (lambda, model, retrained) = at_iteration(iteration, train_pass(&data, config))?;
        converged &= lambda.converged() && model.converged();
        lambda_history.push(lambda);
        let mut pass = PassSummary {
            bags: data.len(),
            instances: data.total_instances(),
            retrained,
            removed: None,
            bags_with_removal: 0,
        };

        let finish = |termination, model, data, passes: Vec<PassSummary>, lambda_history, log| PmiModel {
            model,
            config: *config,
            lambda_history,
            query_log: log,
            termination,
            passes,
            final_dataset: data,
            converged,
        };

        if !oracle.is_available() {
            passes.push(pass);
            return Ok(finish(TerminationReason::NoOracle, model, data, passes, lambda_history, log));
        }
        let decision = &model.decision;
        let mut fully_positive = false;
        for bag in data.bags() {
            let values = at_iteration(iteration, decision.instance_values(bag))?;
            if values.iter().all(|&v| decision.is_inside(v)) {
                fully_positive = true;
                break;
            }
        }
        if fully_positive {
            passes.push(pass);
            return Ok(finish(
                TerminationReason::AllInstancesPositiveBag,
                model,
                data,
                passes,
                lambda_history,
                log,
            ));
        }
        let Some((b, i, value)) = at_iteration(iteration, select_query(decision, &data))? else {
            passes.push(pass);
            return Ok(finish(
                TerminationReason::NoQueryableInstance,
                model,
                data,
                passes,
                lambda_history,
                log,
            ));
        };
        let (orig_bag, orig_instance) = (origin[b].0, origin[b].1[i]);
        let answer = oracle.query(orig_bag, orig_instance)?;
        log.entries.push(QueryRecord {
            iteration,
            bag: orig_bag,
            instance: orig_instance,
            value,
            answer,
        });
        if answer == Label::Positive {
            passes.push(pass);
            return Ok(finish(TerminationReason::PositiveQuery, model, data, passes, lambda_history, log));
        }

        let removal = at_iteration(iteration, remove_positive_labeled(decision, &data))?;
        pass.removed = Some(removal.removed);
        pass.bags_with_removal = removal
            .kept
            .iter()
            .zip(data.bags())
            .filter(|(k, bag)| k.len() < bag.len())
            .count();
        passes.push(pass);
        if removal.empty_bag {
            return Ok(finish(TerminationReason::EmptyBag, model, data, passes, lambda_history, log));
        }
        let next = removal.dataset.expect("no bag emptied, so some bag remains");
        origin = origin
            .into_iter()
            .zip(&removal.kept)
            .map(|((ob, idx), keep)| (ob, keep.iter().map(|&k| idx[k]).collect()))
            .collect();
        data = next;
    }
}
