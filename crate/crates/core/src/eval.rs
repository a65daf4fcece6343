//! Cross-validation, accuracy, parameter search and the bound checks.

use std::fmt::Write as _;
use std::time::Instant;

use crate::data::{format_f64, split_folds, Dataset, Fold, Label, ScaleParams};
use crate::error::{PmiError, Result};
use crate::kernel::KernelSpec;
use crate::pmi::{
    fit_pmi, max_query_bound, outlier_bag_fraction, train_with_representatives, DecisionFunction, GroundTruthOracle,
    LabelOracle, NoOracle, PmiConfig, PmiModel, TerminationReason,
};

/// Where instance labels come from during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OracleMode {
    #[default]
    None,
    /// Instance labels stored in the training data.
    GroundTruth,
}

impl OracleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OracleMode::None => "none",
            OracleMode::GroundTruth => "ground-truth",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pmi: PmiConfig,
    pub k_folds: usize,
    pub seed: u64,
    /// Min-max scale features, fitted on the training bags of each fold.
    pub scale: bool,
    pub oracle: OracleMode,
    /// Candidate (nu, gamma) pairs searched on the training folds. Empty
    /// means use `pmi` as given.
    pub grid: Vec<(f64, f64)>,
}

impl RunConfig {
    pub fn new(pmi: PmiConfig) -> Self {
        Self {
            pmi,
            k_folds: 10,
            seed: 0,
            scale: true,
            oracle: OracleMode::None,
            grid: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pmi.validate()?;
        if self.k_folds < 2 {
            return Err(PmiError::InvalidConfig(format!("k must be at least 2, got {}", self.k_folds)));
        }
        for &(nu, gamma) in &self.grid {
            PmiConfig::new(KernelSpec::Rbf { gamma }, nu).validate()?;
        }
        Ok(())
    }
}

/// Fraction of bags whose predicted label equals the bag label.
pub fn accuracy(decision: &DecisionFunction, test: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for bag in test.bags() {
        if bag.label == Label::Unknown {
            return Err(PmiError::UnlabeledBag(bag.id.clone()));
        }
        if decision.classify_bag(bag)?.label == bag.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Fits PMI on positive bags with the chosen oracle.
pub fn fit_with_oracle(train: &Dataset, config: &PmiConfig, oracle: OracleMode) -> Result<PmiModel> {
    match oracle {
        OracleMode::None => fit_pmi(train, config, &mut NoOracle),
        OracleMode::GroundTruth => fit_pmi(train, config, &mut GroundTruthOracle::new(train)),
    }
}

/// A model fitted on one fold, plus the scaling it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldModel {
    pub model: PmiModel,
    pub scale: Option<ScaleParams>,
    pub nu: f64,
    pub kernel: KernelSpec,
}

impl FoldModel {
    pub fn prepare(&self, data: &Dataset) -> Result<Dataset> {
        match &self.scale {
            Some(s) => s.apply(data),
            None => Ok(data.clone()),
        }
    }
}

/// Trains on the positive training bags of `fold`. Only bags outside the
/// test fold are read, which the parameter search also respects.
pub fn fit_fold(dataset: &Dataset, fold: &Fold, config: &RunConfig) -> Result<FoldModel> {
    let mut pmi = config.pmi;
    if !config.grid.is_empty() {
        let outside: Vec<usize> = (0..dataset.len()).filter(|i| !fold.test.contains(i)).collect();
        let pool = dataset.subset(&outside)?;
        let choice = grid_search(&pool, config)?;
        pmi.nu = choice.nu;
        pmi.kernel = KernelSpec::Rbf { gamma: choice.gamma };
    }
    let raw = dataset.subset(&fold.train)?;
    let (train, scale) = if config.scale {
        let params = ScaleParams::fit(&raw)?;
        (params.apply(&raw)?, Some(params))
    } else {
        (raw, None)
    };
    let model = fit_with_oracle(&train, &pmi, config.oracle)?;
    Ok(FoldModel {
        model,
        scale,
        nu: pmi.nu,
        kernel: pmi.kernel,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub repetition: usize,
    pub fold: usize,
    pub train_bags: usize,
    pub test_bags: usize,
    pub nu: f64,
    pub kernel: KernelSpec,
    pub accuracy: f64,
    pub queries: usize,
    pub termination: TerminationReason,
    pub converged: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub config: RunConfig,
    pub repetitions: usize,
    pub folds: Vec<FoldResult>,
    pub mean: f64,
    pub sd: f64,
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn converged(&self) -> bool {
        self.folds.iter().all(|f| f.converged)
    }

    /// Deterministic key=value lines followed by a per-fold CSV block.
    /// Timing is left out so identical runs print identical bytes.
    pub fn to_machine(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "command=cv");
        let _ = writeln!(out, "kernel={}", c.pmi.kernel);
        let _ = writeln!(out, "nu={}", format_f64(c.pmi.nu));
        let _ = writeln!(out, "k={}", c.k_folds);
        let _ = writeln!(out, "repetitions={}", self.repetitions);
        let _ = writeln!(out, "seed={}", c.seed);
        let _ = writeln!(out, "scale={}", c.scale);
        let _ = writeln!(out, "oracle={}", c.oracle.as_str());
        let _ = writeln!(out, "grid_size={}", c.grid.len());
        let _ = writeln!(out, "folds={}", self.folds.len());
        let _ = writeln!(out, "mean_accuracy={}", format_f64(self.mean));
        let _ = writeln!(out, "sd_accuracy={}", format_f64(self.sd));
        let (mq, _) = mean_sd(&self.folds.iter().map(|f| f.queries as f64).collect::<Vec<_>>());
        let _ = writeln!(out, "mean_queries={}", format_f64(mq));
        let _ = writeln!(out, "converged={}", self.converged());
        let _ = writeln!(out, "fold_csv_begin");
        let _ = writeln!(
            out,
            "repetition,fold,train_bags,test_bags,nu,kernel,accuracy,queries,termination,converged"
        );
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{},{},{},{},{},\"{}\",{},{},{},{}",
                f.repetition,
                f.fold,
                f.train_bags,
                f.test_bags,
                format_f64(f.nu),
                f.kernel,
                format_f64(f.accuracy),
                f.queries,
                f.termination,
                f.converged
            );
        }
        let _ = writeln!(out, "fold_csv_end");
        out
    }

    pub fn to_human(&self) -> String {
        let mut out = String::new();
        for f in &self.folds {
            let _ = writeln!(
                out,
                "rep {:>2} fold {:>2}: accuracy {:6.2}%  queries {}  {}  ({:.3}s)",
                f.repetition,
                f.fold,
                100.0 * f.accuracy,
                f.queries,
                f.termination,
                f.seconds
            );
        }
        let _ = writeln!(out, "accuracy {:.1} +- {:.1}", 100.0 * self.mean, 100.0 * self.sd);
        out
    }
}

/// Stratified k-fold CV repeated with seeds `seed, seed + 1, ...`. Training
/// uses the positive bags of the other folds only.
pub fn cross_validate(dataset: &Dataset, config: &RunConfig, repetitions: usize) -> Result<EvalReport> {
    config.validate()?;
    if repetitions == 0 {
        return Err(PmiError::InvalidConfig("repetitions must be positive".into()));
    }
    if let Some(b) = dataset.bags().iter().find(|b| b.label == Label::Unknown) {
        return Err(PmiError::UnlabeledBag(b.id.clone()));
    }
    let mut folds = Vec::new();
    for rep in 0..repetitions {
        let splits = split_folds(dataset, config.k_folds, config.seed.wrapping_add(rep as u64))?;
        for (f, fold) in splits.iter().enumerate() {
            let start = Instant::now();
            let fitted = fit_fold(dataset, fold, config)?;
            let test = fitted.prepare(&dataset.subset(&fold.test)?)?;
            let acc = accuracy(&fitted.model.model.decision, &test)?;
            folds.push(FoldResult {
                repetition: rep,
                fold: f,
                train_bags: fold.train.len(),
                test_bags: fold.test.len(),
                nu: fitted.nu,
                kernel: fitted.kernel,
                accuracy: acc,
                queries: fitted.model.queries(),
                termination: fitted.model.termination,
                converged: fitted.model.converged,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    let (mean, sd) = mean_sd(&folds.iter().map(|f| f.accuracy).collect::<Vec<_>>());
    Ok(EvalReport {
        config: config.clone(),
        repetitions,
        folds,
        mean,
        sd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridChoice {
    pub nu: f64,
    pub gamma: f64,
    pub accuracy: f64,
}

/// Picks the (nu, gamma) pair with the best inner-CV accuracy on `pool`;
/// ties go to the earliest pair. Negatives in `pool` only score the
/// candidates; models are always trained on positives.
pub fn grid_search(pool: &Dataset, config: &RunConfig) -> Result<GridChoice> {
    if config.grid.is_empty() {
        return Err(PmiError::InvalidConfig("empty parameter grid".into()));
    }
    let inner_k = config.k_folds.min(
        [Label::Positive, Label::Negative]
            .iter()
            .map(|l| pool.bags().iter().filter(|b| b.label == *l).count())
            .filter(|&c| c > 0)
            .min()
            .unwrap_or(0),
    );
    let inner = RunConfig {
        k_folds: inner_k.max(2),
        grid: Vec::new(),
        ..config.clone()
    };
    let mut best: Option<GridChoice> = None;
    for &(nu, gamma) in &config.grid {
        let mut cfg = inner.clone();
        cfg.pmi.nu = nu;
        cfg.pmi.kernel = KernelSpec::Rbf { gamma };
        let report = cross_validate(pool, &cfg, 1)?;
        if best.is_none_or(|b| report.mean > b.accuracy) {
            best = Some(GridChoice {
                nu,
                gamma,
                accuracy: report.mean,
            });
        }
    }
    Ok(best.expect("grid is non-empty"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremRow {
    pub nu: f64,
    pub gamma: f64,
    pub queries: usize,
    pub query_bound: usize,
    pub query_ok: bool,
    pub termination: TerminationReason,
    /// Outlier-bag fraction of the model retrained with representatives.
    pub outlier_fraction: f64,
    pub outlier_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub rows: Vec<TheoremRow>,
}

impl TheoremReport {
    pub fn all_satisfied(&self) -> bool {
        self.rows.iter().all(|r| r.query_ok && r.outlier_ok)
    }

    pub fn to_machine(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command=theorems");
        let _ = writeln!(out, "cells={}", self.rows.len());
        let _ = writeln!(out, "all_satisfied={}", self.all_satisfied());
        let _ = writeln!(out, "cell_csv_begin");
        let _ = writeln!(
            out,
            "nu,gamma,queries,query_bound,query_ok,termination,outlier_fraction,outlier_ok"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                format_f64(r.nu),
                format_f64(r.gamma),
                r.queries,
                r.query_bound,
                r.query_ok,
                r.termination,
                format_f64(r.outlier_fraction),
                r.outlier_ok
            );
        }
        let _ = writeln!(out, "cell_csv_end");
        out
    }
}

/// Runs PMI with the ground-truth oracle on every positive bag of `dataset`
/// for each (nu, gamma) cell, recording the query count against its bound
/// and the retrained model's outlier-bag fraction against nu.
pub fn check_theorems(dataset: &Dataset, grid: &[(f64, f64)], base: &PmiConfig) -> Result<TheoremReport> {
    let train = dataset.positive_bags()?;
    let mut rows = Vec::with_capacity(grid.len());
    for &(nu, gamma) in grid {
        let config = PmiConfig {
            kernel: KernelSpec::Rbf { gamma },
            nu,
            ..*base
        };
        let mut oracle = GroundTruthOracle::new(&train);
        let fitted = fit_pmi(&train, &config, &mut oracle as &mut dyn LabelOracle)?;
        let bound = max_query_bound(&train, nu);
        let retrained = train_with_representatives(&train, &config)?;
        let fraction = outlier_bag_fraction(&retrained);
        rows.push(TheoremRow {
            nu,
            gamma,
            queries: fitted.queries(),
            query_bound: bound,
            query_ok: fitted.queries() <= bound,
            termination: fitted.termination,
            outlier_fraction: fraction,
            outlier_ok: fraction <= nu,
        });
    }
    Ok(TheoremReport { rows })
}
