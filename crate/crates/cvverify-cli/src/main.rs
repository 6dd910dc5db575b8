mod io;
mod svg;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cvverify::backprop::HomodyneRule;
use cvverify::estimators::EstimatorConfig;
use cvverify::experiments::{CurveSet, ExperimentConfig, ExperimentId, run};
use cvverify::fock::CoreState;
use cvverify::gaussian::{GaussianCircuit, apply_circuit};
use cvverify::measure::{ThetaPolicy, sample_heterodyne, sample_parallel_homodyne_noisy};
use cvverify::oracle::{Population, empirical_vs_bound_report};
use cvverify::protocols::{Estimate, plan_homodyne, plan_samples, protocol1, protocol2, protocol3, protocol4};
use cvverify::witness::{EpsilonBudget, Partition, WitnessReport, block_factor, target_blocks};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const LEAK_BOUND: f64 = 1e-8;

#[derive(Debug)]
pub enum CliError {
    /// malformed input or configuration (exit 2)
    Config(String),
    /// failure inside the numerical library (exit 3)
    Numeric(cvverify::Error),
    Io(String),
}

impl From<cvverify::Error> for CliError {
    fn from(e: cvverify::Error) -> Self {
        use cvverify::Error::*;
        match e {
            Invalid(_) | Dimension(_) | ModeIndex(_) | NotBlockProduct(_) | XiMismatch => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numeric(other),
        }
    }
}

#[derive(Parser)]
#[command(name = "cvverify", version, about = "Fidelity witnesses for bosonic states from homodyne and heterodyne data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample homodyne or heterodyne data from a state, written as CSV
    Simulate(SimulateArgs),
    /// Run a protocol on a sample CSV and print a witness report as JSON
    Estimate(EstimateArgs),
    /// Choose N and estimator parameters for an (epsilon, delta) target
    Plan(PlanArgs),
    /// Recompute the example curves as CSV and SVG
    Reproduce(ReproduceArgs),
    /// Compare exact estimator expectations with their bounds
    OracleReport(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Measurement {
    Homodyne,
    Heterodyne,
}

#[derive(Args)]
struct PartitionArgs {
    /// blocks of 1-based modes, e.g. "1,2|3,4"
    #[arg(long, conflicts_with = "k")]
    partition: Option<String>,
    /// contiguous blocks of k modes
    #[arg(long)]
    k: Option<usize>,
}

impl PartitionArgs {
    fn resolve(&self, m: usize) -> Result<Partition, CliError> {
        match (&self.partition, self.k) {
            (Some(s), _) => parse_partition(s),
            (None, Some(k)) => Ok(Partition::contiguous(m, k)?),
            (None, None) => Ok(Partition::new(vec![(0..m).collect()])?),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// state JSON (core state or density operator)
    #[arg(long)]
    state: PathBuf,
    #[arg(long, value_enum)]
    measurement: Measurement,
    /// number of shots
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// detector efficiency
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Gaussian circuit applied before detection; its squeezing sets the
    /// heterodyne unbalancing
    #[arg(long)]
    circuit: Option<PathBuf>,
    /// per-mode Fock cutoff the state is padded to before the circuit
    #[arg(long)]
    cutoff: Option<usize>,
    /// fixed local-oscillator phase instead of uniform
    #[arg(long)]
    theta: Option<f64>,
    /// output CSV (stdout if absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    protocol: u8,
    /// sample CSV
    #[arg(long)]
    samples: PathBuf,
    /// target JSON: one core state, or an array with one per block
    #[arg(long)]
    target: PathBuf,
    /// Gaussian circuit the data was taken after (protocols 2 and 4)
    #[arg(long)]
    circuit: Option<PathBuf>,
    #[command(flatten)]
    part: PartitionArgs,
    /// regularization order per mode (protocols 3, 4)
    #[arg(long, requires = "tau")]
    p: Option<usize>,
    #[arg(long, requires = "p")]
    tau: Option<f64>,
    /// detector efficiency of the data
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// accuracy used to plan (p, tau) when they are not given
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    target: PathBuf,
    #[command(flatten)]
    part: PartitionArgs,
    #[arg(long, value_enum, default_value = "heterodyne")]
    measurement: Measurement,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// example1, example2 or example3
    experiment: String,
    /// output directory
    #[arg(long)]
    out: PathBuf,
    /// experiment config JSON; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// grid "a:b:n"
    #[arg(long)]
    eta_grid: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cutoff: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// JSON report path
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_partition(s: &str) -> Result<Partition, CliError> {
    let blocks = s
        .split('|')
        .map(|b| {
            b.split(',')
                .map(|i| match i.trim().parse::<usize>() {
                    Ok(k) if k >= 1 => Ok(k - 1),
                    _ => Err(CliError::Config(format!("partition: bad mode label `{i}`"))),
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Partition::new(blocks)?)
}

fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("eta-grid: expected a:b:n, got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].parse().map_err(|_| bad())?;
    let b: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    Ok(match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    })
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize") + "\n"
}

/// Per-block targets: taken as given when the file lists one per block,
/// otherwise factored out of a product target.
fn block_targets(targets: Vec<CoreState>, partition: &Partition) -> Result<Vec<CoreState>, CliError> {
    if targets.len() == partition.num_blocks() && targets.len() > 1 {
        return Ok(targets);
    }
    match targets.as_slice() {
        [t] if partition.num_blocks() == 1 => Ok(vec![t.clone()]),
        [t] => Ok(target_blocks(t, partition)?.iter().map(block_factor).collect::<Result<_, _>>()?),
        _ => Err(CliError::Config(format!(
            "target: {} states given for {} blocks",
            targets.len(),
            partition.num_blocks()
        ))),
    }
}

fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut rho = io::read_state(&a.state)?;
    if let Some(c) = a.cutoff {
        rho = rho.resize(&vec![c; rho.num_modes()])?;
    }
    let circuit = a.circuit.as_deref().map(io::read_json::<GaussianCircuit>).transpose()?;
    if let Some(c) = &circuit {
        rho = apply_circuit(&rho, c, LEAK_BOUND)?;
    }
    let m = rho.num_modes();
    let batch = match a.measurement {
        Measurement::Homodyne => {
            if circuit.as_ref().is_some_and(|c| c.xi.iter().any(|x| x.norm() > 0.0)) {
                return Err(CliError::Config("circuit: homodyne data cannot carry squeezing".into()));
            }
            let policy = a.theta.map_or(ThetaPolicy::Uniform, ThetaPolicy::Fixed);
            sample_parallel_homodyne_noisy(&rho, a.samples, a.seed, policy, a.eta)?
        }
        Measurement::Heterodyne => {
            let xi = circuit.map_or_else(|| vec![cvverify::c64(0.0, 0.0); m], |c| c.xi);
            sample_heterodyne(&rho, a.samples, a.seed, &xi, &vec![a.eta; m])?
        }
    };
    match &a.out {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            io::write_batch(&batch, std::io::BufWriter::new(f))
        }
        None => io::write_batch(&batch, std::io::stdout().lock()),
    }
}

fn single_block(est: Estimate, partition: Partition, delta: f64, config: Vec<EstimatorConfig>) -> WitnessReport {
    WitnessReport {
        value: est.value,
        partition,
        fidelity_terms: vec![est.value],
        epsilon: EpsilonBudget { statistical: vec![est.lambda(delta)], bias: vec![est.bias] },
        delta,
        n: est.n,
        config,
    }
}

fn estimate(a: &EstimateArgs) -> Result<(), CliError> {
    let circuit = a.circuit.as_deref().map(io::read_json::<GaussianCircuit>).transpose()?;
    let xi = circuit.as_ref().map(|c| c.xi.clone());
    let batch = io::read_batch(&a.samples, a.eta, xi.as_deref())?;
    let m = batch.num_modes();
    let targets = io::read_targets(&a.target)?;
    let report = match a.protocol {
        1 | 3 => {
            let whole = Partition::new(vec![(0..m).collect()])?;
            let target = block_targets(targets, &whole)?.remove(0);
            if a.protocol == 1 {
                single_block(protocol1(&batch, &target)?, whole, a.delta, vec![])
            } else {
                let cfg = configs(a, &[target.clone()], &whole)?.remove(0);
                single_block(protocol3(&batch, &target, &cfg)?, whole, a.delta, vec![cfg])
            }
        }
        2 => {
            let singles = Partition::singletons(m);
            let targets = block_targets(targets, &singles)?;
            let rule = match &circuit {
                Some(c) => HomodyneRule::from_circuit(c)?,
                None => HomodyneRule::identity(m),
            };
            protocol2(&batch, &targets, &rule, a.delta)?
        }
        _ => {
            let partition = a.part.resolve(m)?;
            let targets = block_targets(targets, &partition)?;
            let circuit = circuit.unwrap_or_else(|| GaussianCircuit::identity(m));
            let cfgs = configs(a, &targets, &partition)?;
            protocol4(&batch, &targets, &circuit, &partition, &cfgs, a.delta)?
        }
    };
    emit(&to_json(&report), a.out.as_deref())
}

fn configs(a: &EstimateArgs, targets: &[CoreState], partition: &Partition) -> Result<Vec<EstimatorConfig>, CliError> {
    match (a.p, a.tau) {
        (Some(p), Some(tau)) => partition
            .blocks()
            .iter()
            .map(|b| EstimatorConfig::new(vec![p; b.len()], tau, a.eta).map_err(CliError::from))
            .collect(),
        _ => Ok(plan_samples(targets, partition, a.epsilon, a.delta, a.eta)?.configs()?),
    }
}

fn plan(a: &PlanArgs) -> Result<(), CliError> {
    let targets = io::read_targets(&a.target)?;
    let m: usize = targets.iter().map(CoreState::num_modes).sum();
    let plan = match a.measurement {
        Measurement::Homodyne => {
            if a.eta != 1.0 {
                return Err(CliError::Config("homodyne planning assumes ideal detectors".into()));
            }
            plan_homodyne(&block_targets(targets, &Partition::singletons(m))?, a.epsilon, a.delta)?
        }
        Measurement::Heterodyne => {
            let partition = a.part.resolve(m)?;
            plan_samples(&block_targets(targets, &partition)?, &partition, a.epsilon, a.delta, a.eta)?
        }
    };
    emit(&to_json(&plan), a.out.as_deref())
}

fn curves_csv(c: &CurveSet) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![c.x_label.clone()];
    header.extend(c.names.iter().cloned());
    w.write_record(&header).map_err(|e| CliError::Io(e.to_string()))?;
    for (i, eta) in c.eta.iter().enumerate() {
        let mut row = vec![eta.to_string()];
        row.extend(c.values.iter().map(|col| col[i].to_string()));
        w.write_record(&row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn reproduce(a: &ReproduceArgs) -> Result<(), CliError> {
    let id: ExperimentId = a.experiment.parse()?;
    let mut cfg = match &a.config {
        Some(p) => io::read_json::<ExperimentConfig>(p)?,
        None => ExperimentConfig::default_for(id),
    };
    cfg.experiment = id;
    if let Some(g) = &a.eta_grid {
        cfg.eta_grid = parse_grid(g)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.cutoff {
        cfg.cutoff = c;
    }
    cfg.validate()?;
    let curves = run(&cfg)?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Io(format!("{}: {e}", a.out.display())))?;
    let name = a.experiment.to_lowercase();
    emit(&curves_csv(&curves)?, Some(&a.out.join(format!("{name}.csv"))))?;
    emit(&svg::line_chart(&curves, &name), Some(&a.out.join(format!("{name}.svg"))))?;
    for col in &curves.names {
        if let Some(z) = curves.zero_crossing(col) {
            println!("{name}: {col} crosses zero at {} = {z:.4}", curves.x_label);
        }
    }
    Ok(())
}

fn oracle_report(a: &OracleArgs) -> Result<bool, CliError> {
    let pop = Population { seed: a.seed, ..Population::default() };
    let report = empirical_vs_bound_report(&pop)?;
    print!("{report}");
    if let Some(p) = &a.out {
        emit(&to_json(&report), Some(p))?;
    }
    Ok(report.all_pass())
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("CVVERIFY_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("CVVERIFY_THREADS: expected a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.cmd {
        Cmd::Simulate(a) => simulate(a).map(|()| true),
        Cmd::Estimate(a) => estimate(a).map(|()| true),
        Cmd::Plan(a) => plan(a).map(|()| true),
        Cmd::Reproduce(a) => reproduce(a).map(|()| true),
        Cmd::OracleReport(a) => oracle_report(a),
    });
    let _ = std::io::stdout().flush();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
