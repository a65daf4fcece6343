//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or configuration error,
//! 3 solver failure or non-convergence.

use std::fs;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{format_f64, parse_mil_csv, to_mil_csv, Dataset, Label, ScaleParams};
use crate::error::{PmiError, Result};
use crate::eval::{check_theorems, cross_validate, OracleMode, RunConfig};
use crate::kernel::KernelSpec;
use crate::pmi::{
    fit_pmi, GroundTruthOracle, LabelOracle, NoOracle, PmiConfig, PmiModel, RetrainBound, SavedModel, TrainOptions,
};
use crate::qp::SolverOptions;
use crate::synth::{synth_generate, Cluster, NegativeMode, SynthConfig};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pmi", version, about = "One-class multiple-instance learning from positive bags")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on the positive bags of a MIL-CSV file and write a model.
    Train(TrainArgs),
    /// Classify the bags of a MIL-CSV file with a saved model.
    Predict(PredictArgs),
    /// Stratified k-fold cross-validation.
    Cv(CvArgs),
    /// Generate a synthetic MIL-CSV dataset.
    Synth(SynthArgs),
    /// Check the query-count and outlier-fraction bounds over a parameter grid.
    Theorems(TheoremArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleArg {
    None,
    GroundTruth,
    Interactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RetrainBoundArg {
    /// 1/(nu N) over the 2N retraining points
    PerBag,
    /// 1/(2 nu N) over the 2N retraining points
    PerPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NegativeArg {
    Scattered,
    Clustered,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Kernel, e.g. `rbf:gamma=0.5`, `linear`, `poly:degree=2,coef=1`.
    /// Defaults to RBF with gamma = 1/d.
    #[arg(long, conflicts_with = "gamma")]
    kernel: Option<String>,
    /// Shorthand for `--kernel rbf:gamma=<G>`.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    nu: f64,
    /// KKT tolerance of both solvers.
    #[arg(long, default_value_t = crate::qp::DEFAULT_TOL)]
    tol: f64,
    /// Iteration cap of both solvers (default 100 times the problem size).
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_enum, default_value_t = RetrainBoundArg::PerBag)]
    retrain_bound: RetrainBoundArg,
    /// Min-max scale features into [0,1] using the training bags.
    #[arg(long)]
    scale: bool,
}

impl ModelArgs {
    fn config(&self, dimension: usize) -> Result<PmiConfig> {
        let kernel = match (&self.kernel, self.gamma) {
            (Some(k), _) => k.parse()?,
            (None, Some(g)) => KernelSpec::rbf(g)?,
            (None, None) => KernelSpec::default_for_dimension(dimension),
        };
        let config = PmiConfig {
            kernel,
            nu: self.nu,
            train: TrainOptions {
                solver: SolverOptions {
                    tol: self.tol,
                    max_iter: self.max_iter,
                },
                retrain_bound: match self.retrain_bound {
                    RetrainBoundArg::PerBag => RetrainBound::PerBag,
                    RetrainBoundArg::PerPoint => RetrainBound::PerPoint,
                },
                ..TrainOptions::default()
            },
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// MIL-CSV input; standard input when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Model output path; standard output when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OracleArg::None)]
    oracle: OracleArg,
    /// Print solver diagnostics to standard error.
    #[arg(long)]
    verbose: bool,
    #[command(flatten)]
    params: ModelArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// MIL-CSV input; standard input when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OracleArg::None)]
    oracle: OracleArg,
    /// Candidate nu values for a search on the training folds.
    #[arg(long, value_delimiter = ',')]
    grid_nu: Vec<f64>,
    /// Candidate RBF gamma values for a search on the training folds.
    #[arg(long, value_delimiter = ',')]
    grid_gamma: Vec<f64>,
    #[command(flatten)]
    params: ModelArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    dimension: usize,
    #[arg(long, default_value_t = 50)]
    positive_bags: usize,
    #[arg(long, default_value_t = 0)]
    negative_bags: usize,
    #[arg(long, default_value_t = 8)]
    instances_per_bag: usize,
    #[arg(long, default_value_t = 1)]
    positives_per_bag: usize,
    /// Every coordinate of the positive cluster centre.
    #[arg(long, default_value_t = 0.5)]
    center: f64,
    #[arg(long, default_value_t = 0.05)]
    spread: f64,
    #[arg(long, value_enum, default_value_t = NegativeArg::Scattered)]
    negatives: NegativeArg,
    #[arg(long, default_value_t = 0.7)]
    negative_center: f64,
    #[arg(long, default_value_t = 0.02)]
    negative_spread: f64,
    /// Output path; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TheoremArgs {
    /// MIL-CSV with instance labels; standard input when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.05, 0.1, 0.2, 0.3, 0.5])]
    nu: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [60.0, 70.0, 80.0, 90.0, 100.0])]
    gamma: Vec<f64>,
    #[arg(long, default_value_t = crate::qp::DEFAULT_TOL)]
    tol: f64,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<PmiError> for Failure {
    fn from(e: PmiError) -> Self {
        let code = match &e {
            PmiError::NotPsd(_)
            | PmiError::NotSymmetric { .. }
            | PmiError::Infeasible { .. }
            | PmiError::Iteration { .. } => EXIT_SOLVER,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Standard streams, swappable for tests.
pub struct Io<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn run<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(io.stderr, "{text}");
            } else {
                let _ = write!(io.stdout, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a, io),
        Command::Predict(a) => predict(a, io),
        Command::Cv(a) => cv(a, io),
        Command::Synth(a) => synth(a, io),
        Command::Theorems(a) => theorems(a, io),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(io.stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn read_input(path: &Option<PathBuf>, io: &mut Io<'_>) -> Result<Dataset> {
    let text = match path {
        Some(p) => fs::read_to_string(p)?,
        None => {
            let mut s = String::new();
            io.stdin.read_to_string(&mut s)?;
            s
        }
    };
    parse_mil_csv(&text)
}

fn write_out(path: &Option<PathBuf>, text: &str, io: &mut Io<'_>) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => io.stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn oracle_mode(o: OracleArg) -> std::result::Result<OracleMode, Failure> {
    match o {
        OracleArg::None => Ok(OracleMode::None),
        OracleArg::GroundTruth => Ok(OracleMode::GroundTruth),
        OracleArg::Interactive => Err(Failure {
            code: EXIT_USAGE,
            message: "the interactive oracle is only available for `train`".into(),
        }),
    }
}

fn non_convergence(what: &str, model: &PmiModel) -> Failure {
    let mut message = format!("{what}: solver did not converge");
    for (i, l) in model.lambda_history.iter().enumerate() {
        if let Some(s) = &l.solve {
            message.push_str(&format!(
                "\n  pass {}: weights iterations={} residual={:e}",
                i + 1,
                s.iterations,
                s.kkt_residual
            ));
        }
    }
    let s = &model.model.solve;
    message.push_str(&format!(
        "\n  final one-class solve: iterations={} residual={:e}",
        s.iterations, s.kkt_residual
    ));
    Failure {
        code: EXIT_SOLVER,
        message,
    }
}

/// Prompts on standard error and reads answers from standard input.
struct Interactive<'a, 'b> {
    io: &'a mut Io<'b>,
    ids: Vec<String>,
}

impl LabelOracle for Interactive<'_, '_> {
    fn query(&mut self, bag: usize, instance: usize) -> Result<Label> {
        loop {
            write!(self.io.stderr, "label instance {}/{} [p/n]: ", self.ids[bag], instance)?;
            self.io.stderr.flush()?;
            let mut line = String::new();
            if self.io.stdin.read_line(&mut line)? == 0 {
                return Err(PmiError::InvalidConfig("no answer on standard input".into()));
            }
            match line.trim().to_ascii_lowercase().as_str() {
                "p" | "+" | "+1" | "y" | "yes" => return Ok(Label::Positive),
                "n" | "-" | "-1" | "no" => return Ok(Label::Negative),
                _ => writeln!(self.io.stderr, "please answer p or n")?,
            }
        }
    }
}

fn train(a: TrainArgs, io: &mut Io<'_>) -> CliResult {
    if a.oracle == OracleArg::Interactive && a.input.is_none() {
        return Err(Failure {
            code: EXIT_USAGE,
            message: "--oracle interactive needs --input, since answers are read from standard input".into(),
        });
    }
    let data = read_input(&a.input, io)?;
    let positives: Vec<usize> = (0..data.len()).filter(|&i| data.bag(i).label != Label::Negative).collect();
    let raw = data.subset(&positives)?;
    let config = a.params.config(raw.dimension())?;
    let (train, scale) = if a.params.scale {
        let p = ScaleParams::fit(&raw)?;
        (p.apply(&raw)?, Some(p))
    } else {
        (raw, None)
    };
    let model = match a.oracle {
        OracleArg::None => fit_pmi(&train, &config, &mut NoOracle)?,
        OracleArg::GroundTruth => fit_pmi(&train, &config, &mut GroundTruthOracle::new(&train))?,
        OracleArg::Interactive => {
            let ids = train.bags().iter().map(|b| b.id.clone()).collect();
            fit_pmi(&train, &config, &mut Interactive { io, ids })?
        }
    };
    if a.verbose {
        let s = &model.model.solve;
        let _ = writeln!(
            io.stderr,
            "passes={} one-class iterations={} residual={:e}",
            model.passes.len(),
            s.iterations,
            s.kkt_residual
        );
    }
    if !model.converged {
        return Err(non_convergence("train", &model));
    }
    let saved = SavedModel::from_fit(&model, scale);
    let text = saved.to_text();
    match &a.model {
        Some(path) => {
            fs::write(path, &text).map_err(PmiError::from)?;
            let mut out = String::new();
            out.push_str("command=train\n");
            out.push_str(&format!("bags={}\n", train.len()));
            out.push_str(&format!("instances={}\n", train.total_instances()));
            out.push_str(&format!("kernel={}\n", config.kernel));
            out.push_str(&format!("nu={}\n", format_f64(config.nu)));
            out.push_str(&format!("termination={}\n", model.termination));
            out.push_str(&format!("queries={}\n", model.queries()));
            out.push_str(&format!("passes={}\n", model.passes.len()));
            out.push_str(&format!("expansion_terms={}\n", saved.decision.expansion.len()));
            write_out(&None, &out, io)?;
        }
        None => write_out(&None, &text, io)?,
    }
    Ok(())
}

fn predict(a: PredictArgs, io: &mut Io<'_>) -> CliResult {
    let text = fs::read_to_string(&a.model).map_err(PmiError::from)?;
    let model = SavedModel::from_text(&text)?;
    let data = read_input(&a.input, io)?;
    let mut out = String::from("bag_id,bag_label,predicted,witness,value\n");
    let mut correct = 0usize;
    let mut labeled = 0usize;
    for bag in data.bags() {
        let mut best: Option<(usize, f64)> = None;
        for (j, inst) in bag.instances.iter().enumerate() {
            let v = model.decision_value(&inst.features)?;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        let (witness, value) = best.expect("bags are non-empty");
        let predicted = model.decision.label_of(value);
        if bag.label.is_known() {
            labeled += 1;
            correct += usize::from(bag.label == predicted);
        }
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            bag.id,
            bag.label,
            predicted,
            witness,
            format_f64(value)
        ));
    }
    write_out(&None, &out, io)?;
    if labeled > 0 {
        let _ = writeln!(
            io.stderr,
            "accuracy {:.2}% on {labeled} labeled bags",
            100.0 * correct as f64 / labeled as f64
        );
    }
    Ok(())
}

fn cv(a: CvArgs, io: &mut Io<'_>) -> CliResult {
    let oracle = oracle_mode(a.oracle)?;
    let data = read_input(&a.input, io)?;
    let pmi = a.params.config(data.dimension())?;
    let grid = match (a.grid_nu.is_empty(), a.grid_gamma.is_empty()) {
        (true, true) => Vec::new(),
        (false, false) => a
            .grid_nu
            .iter()
            .flat_map(|&nu| a.grid_gamma.iter().map(move |&g| (nu, g)))
            .collect(),
        _ => {
            return Err(Failure {
                code: EXIT_USAGE,
                message: "--grid-nu and --grid-gamma must be given together".into(),
            })
        }
    };
    let config = RunConfig {
        pmi,
        k_folds: a.k,
        seed: a.seed,
        scale: a.params.scale,
        oracle,
        grid,
    };
    let report = cross_validate(&data, &config, a.reps)?;
    let _ = write!(io.stderr, "{}", report.to_human());
    write_out(&None, &report.to_machine(), io)?;
    if !report.converged() {
        return Err(Failure {
            code: EXIT_SOLVER,
            message: "cv: solver did not converge on at least one fold (see the `converged` column)".into(),
        });
    }
    Ok(())
}

fn synth(a: SynthArgs, io: &mut Io<'_>) -> CliResult {
    let d = a.dimension;
    let config = SynthConfig {
        positive_bags: a.positive_bags,
        negative_bags: a.negative_bags,
        instances_per_bag: a.instances_per_bag,
        dimension: d,
        positive_cluster: Cluster {
            center: vec![a.center; d],
            spread: a.spread,
        },
        negative_mode: match a.negatives {
            NegativeArg::Scattered => NegativeMode::Scattered,
            NegativeArg::Clustered => NegativeMode::Clustered(Cluster {
                center: vec![a.negative_center; d],
                spread: a.negative_spread,
            }),
        },
        positives_per_bag: a.positives_per_bag,
        seed: a.seed,
    };
    let data = synth_generate(&config)?;
    write_out(&a.output, &to_mil_csv(&data), io)?;
    Ok(())
}

fn theorems(a: TheoremArgs, io: &mut Io<'_>) -> CliResult {
    let data = read_input(&a.input, io)?;
    let grid: Vec<(f64, f64)> = a
        .nu
        .iter()
        .flat_map(|&nu| a.gamma.iter().map(move |&g| (nu, g)))
        .collect();
    let mut base = PmiConfig::new(KernelSpec::default_for_dimension(data.dimension()), 0.1);
    base.train.solver.tol = a.tol;
    let report = check_theorems(&data, &grid, &base)?;
    write_out(&None, &report.to_machine(), io)?;
    Ok(())
}
