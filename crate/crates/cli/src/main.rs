use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use ecosched::harness::{compare, run_scenario};
use ecosched::predictor::{CostModel, RegressionTree, TrainingHistory};
use ecosched::profiling::{serialize_trace, synthesize_telemetry, DEFAULT_SAMPLE_INTERVAL};
use ecosched::scenario::{Population, Scenario};
use ecosched::workloads::{generate, ArrivalModel, WorkloadFamily};
use ecosched::{Error, Policy, SchedulerConfig};

/// Energy-aware scheduling experiments on a simulated cluster.
#[derive(Parser)]
#[command(name = "ecosched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one policy and write the result document.
    Run(RunArgs),
    /// Fit a regression tree to a training history.
    Train(TrainArgs),
    /// Compare energy-aware against round-robin over seeded repetitions.
    Compare(CompareArgs),
    /// Export a generated workload population.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML). Defaults to the bundled reference scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    config: ConfigFlags,
}

/// Overrides for the scenario's scheduler section.
#[derive(Args)]
struct ConfigFlags {
    #[arg(long)]
    delta_low: Option<f64>,
    #[arg(long)]
    delta_high: Option<f64>,
    #[arg(long)]
    delta_mig: Option<f64>,
    #[arg(long)]
    risk_cap: Option<f64>,
    #[arg(long)]
    consolidation_period: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
}

impl ConfigFlags {
    fn apply(&self, c: &mut SchedulerConfig) {
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.delta_low, self.delta_low);
        set(&mut c.delta_high, self.delta_high);
        set(&mut c.delta_mig, self.delta_mig);
        set(&mut c.risk_cap, self.risk_cap);
        set(&mut c.consolidation_period, self.consolidation_period);
        set(&mut c.tau, self.tau);
    }
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let mut s = match &self.scenario {
            Some(path) => Scenario::load(path)?,
            None => Scenario::reference(),
        };
        self.config.apply(&mut s.scheduler);
        s.scheduler.validate()?;
        Ok(s)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value = "energy-aware")]
    policy: Policy,
    /// Trained tree for energy-aware placement; otherwise one is bootstrapped.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Result document; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the run's training history here.
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training history document.
    #[arg(long)]
    history: PathBuf,
    #[arg(long, default_value_t = ecosched::predictor::DEFAULT_MAX_DEPTH)]
    max_depth: usize,
    #[arg(long, default_value_t = ecosched::predictor::DEFAULT_MIN_LEAF_SIZE)]
    min_leaf_size: usize,
    /// Model document to write.
    #[arg(long, alias = "model")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 3)]
    reps: u32,
    /// Report document; per-run rows go next to it with a .csv extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Generate one family instead of the scenario's mix.
    #[arg(long, requires = "count")]
    family: Option<WorkloadFamily>,
    #[arg(long)]
    count: Option<usize>,
    /// Poisson arrival rate per second; batch at t=0 when omitted with --family.
    #[arg(long)]
    rate: Option<f64>,
    /// Population document; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write synthetic telemetry for every job as a trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let model = match &args.model {
        Some(p) => Some(CostModel::Tree(
            RegressionTree::from_json(&read(p)?).with_context(|| p.display().to_string())?,
        )),
        None => None,
    };
    let result = run_scenario(&scenario, args.policy, args.scenario.seed, model.as_ref())?;
    if let Some(p) = &args.records {
        write(
            p,
            &TrainingHistory::new(result.training_records()).to_json(),
        )?;
    }
    emit(args.out.as_deref(), &result.to_json())?;
    eprintln!(
        "{}: {:.3} Wh, {} of {} jobs completed, compliance {:.3}, {} migrations",
        result.policy,
        result.total_energy_wh,
        result.completed,
        result.jobs.len(),
        result.compliance_rate(),
        result.migrations
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let history = TrainingHistory::from_json(&read(&args.history)?)
        .with_context(|| args.history.display().to_string())?;
    let tree = RegressionTree::train(&history.records, args.max_depth, args.min_leaf_size)?;
    write(&args.out, &tree.to_json())?;
    println!(
        "trained on {} records: {} leaves, depth {}, MAE {} Wh",
        history.records.len(),
        tree.leaf_count(),
        tree.depth(),
        tree.mae(&history.records)
    );
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let report = compare(&scenario, args.reps, args.scenario.seed)?;
    match &args.out {
        Some(p) => {
            write(p, &report.to_json())?;
            write(&p.with_extension("csv"), &report.runs_csv())?;
        }
        None => println!("{}", report.to_json()),
    }
    let savings = report
        .energy_savings_pct
        .map_or_else(|| "undefined".to_string(), |s| format!("{s:.2} %"));
    eprintln!(
        "energy savings {savings}; compliance rr {:.3} ea {:.3}; completion deviation {:.2} %",
        report.round_robin.compliance_rate,
        report.energy_aware.compliance_rate,
        100.0 * report.completion_deviation
    );
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let seed = args.scenario.seed;
    let arrivals = match args.family {
        Some(family) => {
            let arrival = match args.rate {
                Some(rate) => ArrivalModel::Poisson { rate },
                None => ArrivalModel::BatchAtZero,
            };
            generate(family, args.count.unwrap_or(0), seed, arrival)?
        }
        None => {
            let mut s = args.scenario.load()?;
            if let Some(rate) = args.rate {
                s.workloads.arrival = ArrivalModel::Poisson { rate };
                s.validate()?;
            }
            s.arrivals(seed)?
        }
    };
    if let Some(p) = &args.trace {
        let samples: Vec<_> = arrivals
            .iter()
            .enumerate()
            .flat_map(|(k, a)| {
                synthesize_telemetry(
                    &a.profile,
                    DEFAULT_SAMPLE_INTERVAL,
                    0.05,
                    seed.wrapping_add(k as u64),
                )
            })
            .collect();
        write(p, &serialize_trace(&samples))?;
    }
    emit(args.out.as_deref(), &Population::new(arrivals).to_json())
}

/// 1 for scenarios no host can serve within the SLA, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::InfeasibleWorkload(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Train(a) => cmd_train(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Sources already quoted by their parent are skipped.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
