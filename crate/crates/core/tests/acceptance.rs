//! Acceptance suite: one PASS/FAIL line per criterion, then a single assert
//! over the gating ones.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use pmi::data::{parse_mil_csv, Bag, Dataset, Instance, Label};
use pmi::eval::{accuracy, check_theorems, cross_validate, OracleMode, RunConfig};
use pmi::kernel::{gram_matrix, KernelSpec};
use pmi::pmi::{
    build_lambda_q, fit_lambda, fit_pmi, max_query_bound, outlier_bag_fraction, train_once, train_one_class,
    train_with_representatives, variance_objective, AlwaysNegative, GroundTruthOracle, LabelOracle, LambdaSolution,
    NoOracle, PmiConfig, PmiModel, TrainOptions,
};
use pmi::qp::{
    brute_force_block_simplex, brute_force_box_sum, solve_block_simplex, solve_box_sum, BlockSimplexQP, BoxSumQP,
    SolverOptions,
};
use pmi::synth::{synth_generate, Cluster, NegativeMode, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: u32,
    pass: bool,
    gating: bool,
    line: String,
}

fn report(out: &mut Vec<Outcome>, id: u32, gating: bool, pass: bool, text: &str) {
    let verdict = match (pass, gating) {
        (true, _) => "PASS",
        (false, true) => "FAIL",
        (false, false) => "FAIL (non-gating)",
    };
    let line = format!("criterion {id:>2}: {verdict} - {text}");
    eprintln!("{line}");
    out.push(Outcome { id, pass, gating, line });
}

/// Every fit_pmi run in the suite, as (queries, bound, label).
#[derive(Default)]
struct QueryLedger(Vec<(usize, usize, String)>);

impl QueryLedger {
    fn fit(&mut self, data: &Dataset, config: &PmiConfig, oracle: &mut dyn LabelOracle, label: &str) -> PmiModel {
        let m = fit_pmi(data, config, oracle).expect("fit_pmi");
        self.0.push((m.queries(), max_query_bound(data, config.nu), label.to_string()));
        m
    }
}

fn random_psd(r: &mut ChaCha8Rng, m: usize) -> Array2<f64> {
    let rows = r.random_range(1..=m + 1);
    let a = Array2::from_shape_fn((rows, m), |_| r.random_range(-1.0..1.0));
    let k = a.t().dot(&a);
    let trace: f64 = k.diag().sum();
    k / trace
}

fn random_blocks(r: &mut ChaCha8Rng, m: usize) -> Vec<std::ops::Range<usize>> {
    let mut blocks = Vec::new();
    let mut start = 0;
    while start < m {
        let len = r.random_range(1..=m - start);
        blocks.push(start..start + len);
        start += len;
    }
    blocks
}

fn positive_dataset(bags: Vec<Vec<Vec<f64>>>) -> Dataset {
    Dataset::new(
        bags.into_iter()
            .enumerate()
            .map(|(i, b)| Bag::new(format!("b{i}"), Label::Positive, b.into_iter().map(Instance::unlabeled).collect()))
            .collect(),
    )
    .unwrap()
}

fn random_bags(r: &mut ChaCha8Rng, n: usize, max_size: usize, d: usize) -> Dataset {
    positive_dataset(
        (0..n)
            .map(|_| {
                let size = r.random_range(1..=max_size);
                (0..size).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect()
            })
            .collect(),
    )
}

fn random_simplex(r: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..len).map(|_| -r.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn criterion_1(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let opts = SolverOptions::with_tol(1e-12);
    let mut worst: f64 = 0.0;
    let mut r = ChaCha8Rng::seed_from_u64(1001);
    for _ in 0..50 {
        let m = r.random_range(1..=6);
        let p = BlockSimplexQP::new(random_psd(&mut r, m), random_blocks(&mut r, m)).unwrap();
        let s = solve_block_simplex(&p, &opts).unwrap();
        let o = brute_force_block_simplex(&p, 1e-3).unwrap();
        worst = worst.max((s.objective - o.objective).abs());
    }
    for _ in 0..50 {
        let m = r.random_range(2..=6);
        // feasible bound between 1/m and 1
        let upper = r.random_range(1.0 / m as f64..=1.0);
        let upper = (upper * 1000.0).ceil() / 1000.0;
        let p = BoxSumQP::new(random_psd(&mut r, m), upper).unwrap();
        let s = solve_box_sum(&p, &opts).unwrap();
        let o = brute_force_box_sum(&p, 1e-3).unwrap();
        worst = worst.max((s.objective - o.objective).abs());
    }
    let elapsed = start.elapsed();
    report(
        out,
        1,
        true,
        worst <= 1e-5 && elapsed < Duration::from_secs(30),
        &format!("QP solvers vs grid oracles on 100 problems: worst gap {worst:.2e} (<= 1e-5), {elapsed:.2?} (< 30 s)"),
    );
}

fn criterion_2(out: &mut Vec<Outcome>) {
    let mut r = ChaCha8Rng::seed_from_u64(2002);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let data = random_bags(&mut r, 3, 4, 3);
        let g = gram_matrix(&KernelSpec::Linear, &data).unwrap();
        let q = build_lambda_q(&g.entries, &g.blocks()).unwrap();
        let weights: Vec<Vec<f64>> = data.bag_sizes().iter().map(|&s| random_simplex(&mut r, s)).collect();
        let lambda = LambdaSolution::from_weights(&data, weights).unwrap();
        // feature-space oracle: sum of squared distances to the mean
        let pts: Vec<Vec<f64>> = (0..3).map(|i| lambda.virtual_instance(&data, i)).collect();
        let mean: Vec<f64> = (0..3).map(|k| pts.iter().map(|p| p[k]).sum::<f64>() / 3.0).collect();
        let explicit: f64 = pts
            .iter()
            .map(|p| p.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum();
        worst = worst.max((variance_objective(&q, &lambda.flat()) - explicit).abs());
    }
    report(
        out,
        2,
        true,
        worst <= 1e-9,
        &format!("quadratic form vs feature-space variance, 20 random weightings: worst diff {worst:.2e} (<= 1e-9)"),
    );
}

fn criterion_3(out: &mut Vec<Outcome>) {
    let mut r = ChaCha8Rng::seed_from_u64(3003);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let data = random_bags(&mut r, 4, 3, 5);
        let g = gram_matrix(&KernelSpec::Linear, &data).unwrap();
        let l = fit_lambda(&data, &g, &SolverOptions::default()).unwrap();
        let opts = TrainOptions::default();
        let m = train_once(&data, &g, &l, 0.5, &opts).unwrap();
        let points: Vec<Vec<f64>> = (0..data.len()).map(|i| l.virtual_instance(&data, i)).collect();
        let explicit = train_one_class(&points, &KernelSpec::Linear, 0.5, &opts).unwrap();
        for (a, b) in m.alpha.iter().zip(&explicit.alpha) {
            worst = worst.max((a - b).abs());
        }
    }
    report(
        out,
        3,
        true,
        worst <= 1e-6,
        &format!("linear kernel, virtual-instance training vs explicit points on 10 fixtures: worst alpha diff {worst:.2e} (<= 1e-6)"),
    );
}

fn criterion_4(out: &mut Vec<Outcome>) {
    let mut runs = 0;
    let mut violations = Vec::new();
    let mut max_fraction = [0.0f64; 3];
    let nus = [0.1, 0.3, 0.5];
    for seed in 0..50u64 {
        // 21 bags with a positive cluster plus 9 bags of pure background,
        // all presented as positive so some representatives are true outliers
        let mut c = SynthConfig::scattered(5, 21, 9, 4000 + seed);
        c.instances_per_bag = 4;
        c.positive_cluster.spread = 0.1;
        let data = synth_generate(&c).unwrap();
        let data = Dataset::new(
            data.into_bags()
                .into_iter()
                .map(|b| Bag { label: Label::Positive, ..b })
                .collect(),
        )
        .unwrap();
        for (slot, &nu) in nus.iter().enumerate() {
            let config = PmiConfig::new(KernelSpec::Rbf { gamma: 1.0 }, nu);
            let m = train_with_representatives(&data, &config).unwrap();
            let f = outlier_bag_fraction(&m);
            max_fraction[slot] = max_fraction[slot].max(f);
            runs += 1;
            if f > nu {
                violations.push((seed, nu, f));
            }
        }
    }
    report(
        out,
        4,
        true,
        violations.is_empty(),
        &format!(
            "retrained outlier-bag fraction <= nu in {}/{runs} runs (50 seeds x nu in {{0.1,0.3,0.5}}); largest fraction seen {:.3} / {:.3} / {:.3}",
            runs - violations.len(),
            max_fraction[0],
            max_fraction[1],
            max_fraction[2]
        ),
    );
}

fn criterion_5(out: &mut Vec<Outcome>, ledger: &mut QueryLedger) {
    // adversarial oracle: every answer negative, so the loop runs until a bag empties
    for seed in 0..10u64 {
        let mut c = SynthConfig::scattered(3, 12, 0, 5000 + seed);
        c.instances_per_bag = 3 + (seed as usize % 4);
        let data = synth_generate(&c).unwrap();
        for nu in [0.05, 0.2, 0.5] {
            let config = PmiConfig::new(KernelSpec::Rbf { gamma: 10.0 }, nu);
            ledger.fit(&data, &config, &mut AlwaysNegative, "always-negative");
            ledger.fit(&data, &config, &mut GroundTruthOracle::new(&data), "ground-truth");
            ledger.fit(&data, &config, &mut NoOracle, "no-oracle");
        }
    }
    let violations: Vec<_> = ledger.0.iter().filter(|(q, b, _)| q > b).collect();
    let adversarial_max = ledger.0.iter().filter(|e| e.2 == "always-negative").map(|e| e.0).max().unwrap_or(0);

    // 111 bags with 867 instances in total: 90 bags of 8 and 21 of 7
    let bags: Vec<Vec<Vec<f64>>> = (0..111)
        .map(|i| (0..if i < 90 { 8 } else { 7 }).map(|j| vec![i as f64, j as f64]).collect())
        .collect();
    let worked = positive_dataset(bags);
    let worked_bound = max_query_bound(&worked, 0.01);
    let pass = violations.is_empty() && worked.total_instances() == 867 && worked_bound == 7;
    report(
        out,
        5,
        true,
        pass,
        &format!(
            "query count <= bound in {}/{} fit runs (adversarial max {adversarial_max}); N=111, n={}, nu=0.01 -> bound {worked_bound} (expected 7)",
            ledger.0.len() - violations.len(),
            ledger.0.len(),
            worked.total_instances()
        ),
    );
}

fn criterion_6(out: &mut Vec<Outcome>, ledger: &mut QueryLedger) {
    let start = Instant::now();
    let mut c = SynthConfig::scattered(5, 111, 0, 4);
    c.instances_per_bag = 8;
    let data = synth_generate(&c).unwrap();
    let grid: Vec<(f64, f64)> = [0.01, 0.05, 0.1, 0.2, 0.3, 0.5]
        .iter()
        .flat_map(|&nu| [60.0, 70.0, 80.0, 90.0, 100.0].map(move |g| (nu, g)))
        .collect();
    let base = PmiConfig::new(KernelSpec::Rbf { gamma: 1.0 }, 0.1);
    let t = check_theorems(&data, &grid, &base).unwrap();
    for row in &t.rows {
        ledger.0.push((row.queries, row.query_bound, "table-grid".into()));
    }
    let ones = t.rows.iter().filter(|r| r.queries == 1).count();
    let elapsed = start.elapsed();
    report(
        out,
        6,
        true,
        ones == grid.len() && elapsed < Duration::from_secs(120),
        &format!(
            "compact positives + scattered negatives, 6 nu x 5 gamma grid: {ones}/{} cells with exactly 1 query, {elapsed:.2?} (< 2 min)",
            grid.len()
        ),
    );
}

fn criterion_7(out: &mut Vec<Outcome>, ledger: &mut QueryLedger) {
    let mut accs = Vec::new();
    for seed in 0..10u64 {
        let mut tr = SynthConfig::scattered(5, 50, 0, 7000 + seed);
        tr.positives_per_bag = 2;
        let mut te = tr.clone();
        te.positive_bags = 20;
        te.negative_bags = 20;
        te.seed = tr.seed + 1000;
        let train = synth_generate(&tr).unwrap();
        let test = synth_generate(&te).unwrap();
        let config = PmiConfig::new(KernelSpec::Rbf { gamma: 20.0 }, 0.1);
        let m = ledger.fit(&train, &config, &mut GroundTruthOracle::new(&train), "separable");
        accs.push(accuracy(&m.model.decision, &test).unwrap());
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let min = accs.iter().cloned().fold(f64::INFINITY, f64::min);
    report(
        out,
        7,
        true,
        mean >= 0.95,
        &format!("separable synthetic, 50 training bags, 40 test bags: mean accuracy {:.1}% over 10 seeds (>= 95%), min {:.1}%", 100.0 * mean, 100.0 * min),
    );
}

fn criterion_8(out: &mut Vec<Outcome>, ledger: &mut QueryLedger) {
    let d = 5;
    let mut gains = Vec::new();
    let mut negative_first = 0;
    let mut with_removal = 0;
    for seed in 0..10u64 {
        let mut tr = SynthConfig::scattered(d, 40, 0, 8000 + seed);
        tr.positive_cluster = Cluster {
            center: vec![0.3; d],
            spread: 0.08,
        };
        tr.negative_mode = NegativeMode::Clustered(Cluster {
            center: vec![0.7; d],
            spread: 0.02,
        });
        tr.instances_per_bag = 4;
        tr.positives_per_bag = 2;
        let mut te = tr.clone();
        te.positive_bags = 20;
        te.negative_bags = 20;
        te.seed = tr.seed + 1000;
        let train = synth_generate(&tr).unwrap();
        let test = synth_generate(&te).unwrap();
        let config = PmiConfig::new(KernelSpec::Rbf { gamma: 20.0 }, 0.1);
        let plain = ledger.fit(&train, &config, &mut NoOracle, "tight-negatives");
        let queried = ledger.fit(&train, &config, &mut GroundTruthOracle::new(&train), "tight-negatives");
        if queried.query_log.first_answer() == Some(Label::Negative) {
            negative_first += 1;
        }
        if queried.passes.iter().any(|p| p.removed.is_some_and(|r| r > 0)) {
            with_removal += 1;
        }
        let a0 = accuracy(&plain.model.decision, &test).unwrap();
        let a1 = accuracy(&queried.model.decision, &test).unwrap();
        gains.push(100.0 * (a1 - a0));
    }
    let mean_gain = gains.iter().sum::<f64>() / gains.len() as f64;
    let min_gain = gains.iter().cloned().fold(f64::INFINITY, f64::min);
    report(
        out,
        8,
        true,
        negative_first == 10 && with_removal == 10 && min_gain >= 10.0,
        &format!(
            "tight negative cluster: first answer negative {negative_first}/10, removal pass {with_removal}/10, accuracy gain over no-query model min {min_gain:.1} / mean {mean_gain:.1} points (>= 10)"
        ),
    );
}

fn criterion_9(out: &mut Vec<Outcome>) {
    let Some(path) = std::env::var_os("PMI_MUSK1_CSV") else {
        report(out, 9, false, false, "Musk1 not supplied (set PMI_MUSK1_CSV to a MIL-CSV file); target 79.1 +- 5 points not checked");
        return;
    };
    let data = parse_mil_csv(&std::fs::read_to_string(&path).expect("read Musk1")).expect("parse Musk1");
    let mut config = RunConfig::new(PmiConfig::new(KernelSpec::default_for_dimension(data.dimension()), 0.1));
    config.k_folds = 10;
    config.seed = 0;
    config.scale = true;
    config.oracle = OracleMode::GroundTruth;
    config.grid = [0.05, 0.1, 0.2, 0.3]
        .iter()
        .flat_map(|&nu| [0.005, 0.01, 0.02, 0.05, 0.1].map(move |g| (nu, g)))
        .collect();
    let r = cross_validate(&data, &config, 10).expect("cross-validation");
    let pass = (100.0 * r.mean - 79.1).abs() <= 5.0;
    report(
        out,
        9,
        false,
        pass,
        &format!("Musk1 10x10-fold CV: {:.1} +- {:.1} (target 79.1 +- 5 points)", 100.0 * r.mean, 100.0 * r.sd),
    );
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pmi")
}

fn run_cli(args: &[&str], stdin: Option<&str>) -> (i32, Vec<u8>) {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(bin())
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .expect("spawn pmi");
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    let o = child.wait_with_output().unwrap();
    (o.status.code().unwrap_or(-1), o.stdout)
}

fn criterion_10(out: &mut Vec<Outcome>) {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-determinism");
    std::fs::create_dir_all(&dir).unwrap();
    let data = dir.join("data.csv");
    let model = dir.join("model.txt");
    let (d, m) = (data.to_str().unwrap(), model.to_str().unwrap());
    let synth = ["synth", "--seed", "7", "--positive-bags", "20", "--negative-bags", "10", "--positives-per-bag", "2"];
    let (code, csv) = run_cli(&synth, None);
    assert_eq!(code, 0);
    std::fs::write(&data, &csv).unwrap();

    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("synth", synth.to_vec()),
        ("train", vec!["train", "--input", d, "--gamma", "20", "--oracle", "ground-truth"]),
        ("predict", vec!["predict", "--model", m, "--input", d]),
        ("cv", vec!["cv", "--input", d, "--k", "5", "--reps", "3", "--seed", "11", "--gamma", "20", "--oracle", "ground-truth"]),
        ("theorems", vec!["theorems", "--input", d, "--nu", "0.1,0.3", "--gamma", "10,20"]),
    ];
    let (code, _) = run_cli(&["train", "--input", d, "--gamma", "20", "--model", m], None);
    assert_eq!(code, 0);
    let mut identical = Vec::new();
    let mut differing = Vec::new();
    for (name, args) in &commands {
        let (c1, o1) = run_cli(args, None);
        let (c2, o2) = run_cli(args, None);
        if c1 == 0 && c2 == 0 && o1 == o2 && !o1.is_empty() {
            identical.push(*name);
        } else {
            differing.push(*name);
        }
    }
    report(
        out,
        10,
        true,
        differing.is_empty(),
        &format!("byte-identical output across two runs: {} of {} commands ({})", identical.len(), commands.len(), identical.join(", ")),
    );
}

#[test]
fn acceptance() {
    let mut out = Vec::new();
    let mut ledger = QueryLedger::default();
    criterion_1(&mut out);
    criterion_2(&mut out);
    criterion_3(&mut out);
    criterion_4(&mut out);
    criterion_6(&mut out, &mut ledger);
    criterion_7(&mut out, &mut ledger);
    criterion_8(&mut out, &mut ledger);
    // runs last so the query-bound check covers every fit above
    criterion_5(&mut out, &mut ledger);
    criterion_9(&mut out);
    criterion_10(&mut out);
    out.sort_by_key(|o| o.id);
    for o in &out {
        println!("{}", o.line);
    }
    let failed: Vec<u32> = out.iter().filter(|o| o.gating && !o.pass).map(|o| o.id).collect();
    println!(
        "acceptance: {}/{} gating criteria passed",
        out.iter().filter(|o| o.gating && o.pass).count(),
        out.iter().filter(|o| o.gating).count()
    );
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
