//! `vvo` command-line harness: solve, train, eval and baseline.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use vvo_core::devices::JointAction;
use vvo_core::env::{sample_scenario, EnvConfig, Scenario};
use vvo_core::experiment::{self, baseline_stats, evaluate};
use vvo_core::madrl::{self, OptimizerKind, StateEncoding, TrainerConfig};
use vvo_core::network::{parse_feeder, FeederNetwork};
use vvo_core::powerflow::{Solver, SolverConfig};
use vvo_core::{bundled, Feeder};

/// Environment variable naming the directory searched for feeder files.
pub const FEEDER_DIR_VAR: &str = "VVO_FEEDER_DIR";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CASES_FILE: &str = "cases.csv";
pub const TIMING_FILE: &str = "timing.csv";

#[derive(Parser, Debug)]
#[command(name = "vvo", version, about = "Volt-VAR control with multi-agent DQN on radial feeders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one power flow and print per-bus voltages and the loss.
    Solve(SolveArgs),
    /// Train an agent pool; writes a checkpoint and the training log.
    Train(TrainArgs),
    /// Evaluate a checkpoint on fresh cases; writes report JSON and CSVs.
    Eval(EvalArgs),
    /// Statistics of the baseline settings on fresh cases.
    Baseline(BaselineArgs),
}

#[derive(Args, Debug)]
struct FeederArgs {
    /// Feeder file path, a name in $VVO_FEEDER_DIR, or a bundled name (ieee13, ieee123).
    #[arg(long, default_value = "ieee13")]
    feeder: String,
}

#[derive(Args, Debug)]
struct EnvArgs {
    /// Lower and upper load multipliers.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.8, 1.2])]
    load_bounds: Vec<f64>,
    /// Lower and upper DG output multipliers.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.8, 1.2])]
    dg_bounds: Vec<f64>,
    /// Reward penalty per p.u. of voltage violation.
    #[arg(long, default_value_t = 1000.0)]
    penalty: f64,
    #[arg(long, default_value_t = 1)]
    steps_per_episode: usize,
    /// Power-flow convergence tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
}

impl EnvArgs {
    fn config(&self) -> EnvConfig<f64> {
        let mut cfg = EnvConfig::default();
        cfg.bounds.load = (self.load_bounds[0], self.load_bounds[1]);
        cfg.bounds.dg = (self.dg_bounds[0], self.dg_bounds[1]);
        cfg.reward.penalty = self.penalty;
        cfg.steps_per_episode = self.steps_per_episode;
        cfg.solver = SolverConfig {
            tolerance: self.tol,
            max_iterations: self.max_iter,
            source_voltage: None,
        };
        cfg
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    feeder: FeederArgs,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Solve a random scenario drawn from this seed instead of nominal loads.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the result as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EncodingArg {
    Raw,
    Centered,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    feeder: FeederArgs,
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long, default_value_t = 8000)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the checkpoint and training log.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    replay_capacity: Option<usize>,
    /// Target-network sync period in updates; 0 disables the target network.
    #[arg(long)]
    target_sync: Option<usize>,
    #[arg(long)]
    reward_scale: Option<f64>,
    #[arg(long, value_enum)]
    encoding: Option<EncodingArg>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Use a sigmoid output layer instead of a linear one.
    #[arg(long)]
    sigmoid_output: bool,
}

impl TrainArgs {
    fn config(&self) -> TrainerConfig<f64> {
        let mut cfg = TrainerConfig {
            episodes: self.episodes,
            seed: self.seed,
            ..TrainerConfig::default()
        };
        match self.optimizer {
            Some(OptimizerArg::Sgd) => cfg.optimizer = OptimizerKind::Sgd,
            Some(OptimizerArg::Adam) => cfg.optimizer = OptimizerKind::adam(),
            None => {}
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.epsilon_decay {
            cfg.epsilon_decay = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.replay_capacity {
            cfg.replay_capacity = v;
        }
        if let Some(v) = self.target_sync {
            cfg.target_sync = (v > 0).then_some(v);
        }
        if let Some(v) = self.reward_scale {
            cfg.reward_scale = v;
        }
        match self.encoding {
            Some(EncodingArg::Raw) => cfg.encoding = StateEncoding::Raw,
            Some(EncodingArg::Centered) => cfg.encoding = StateEncoding::centered(),
            None => {}
        }
        if let Some(h) = &self.hidden {
            cfg.hidden = h.clone();
        }
        if self.sigmoid_output {
            cfg.output = madrl::Activation::Sigmoid;
        }
        cfg
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    feeder: FeederArgs,
    #[command(flatten)]
    env: EnvArgs,
    /// Checkpoint file, or a directory containing checkpoint.json.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1000)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for report.json, cases.csv and timing.csv.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[command(flatten)]
    feeder: FeederArgs,
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long, default_value_t = 1000)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report JSON into this directory.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Resolves `spec` as a path, then inside `$VVO_FEEDER_DIR`, then as a bundled name.
pub fn load_feeder(spec: &str) -> Result<Feeder> {
    let direct = Path::new(spec);
    let candidate = if direct.is_file() {
        Some(direct.to_path_buf())
    } else {
        std::env::var_os(FEEDER_DIR_VAR).and_then(|dir| {
            let dir = PathBuf::from(dir);
            [dir.join(spec), dir.join(format!("{spec}.json"))]
                .into_iter()
                .find(|p| p.is_file())
        })
    };
    let net = match candidate {
        Some(path) => parse_feeder::<f64>(&path).with_context(|| format!("reading feeder {}", path.display()))?,
        None => {
            let name = Path::new(spec).file_name().and_then(|n| n.to_str()).unwrap_or(spec);
            match bundled::by_name(name) {
                Some(text) => FeederNetwork::from_json_str(text)?,
                None => bail!("feeder {spec} not found (not a file, not in ${FEEDER_DIR_VAR}, not bundled)"),
            }
        }
    };
    Ok(net.to_per_unit()?)
}

fn checkpoint_path(model: &Path) -> PathBuf {
    if model.is_dir() {
        model.join(CHECKPOINT_FILE)
    } else {
        model.to_path_buf()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn solve(args: &SolveArgs, out: &mut dyn Write) -> Result<()> {
    let net = load_feeder(&args.feeder.feeder)?;
    let cfg = SolverConfig {
        tolerance: args.tol,
        max_iterations: args.max_iter,
        source_voltage: None,
    };
    let scenario = match args.seed {
        Some(seed) => sample_scenario(&net, &Default::default(), seed),
        None => Scenario::nominal(&net),
    };
    let action = JointAction::neutral(&net);
    let sol = Solver::new(&net)?.solve(&action, &scenario.operating_point(&net), &cfg)?;
    let mags = sol.magnitudes();
    if args.json {
        let buses: Vec<_> = net
            .buses
            .iter()
            .zip(&mags)
            .map(|(b, m)| {
                let v: Vec<Option<f64>> = vvo_core::phase::Phase::ALL
                    .iter()
                    .map(|&p| b.phases.contains(p).then_some(m[p.index()]))
                    .collect();
                serde_json::json!({ "bus": b.id, "v_pu": v })
            })
            .collect();
        let doc = serde_json::json!({
            "feeder": net.name,
            "converged": sol.converged,
            "iterations": sol.iterations,
            "loss_kw": sol.total_loss_kw,
            "buses": buses,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
    } else {
        writeln!(
            out,
            "feeder {}: converged={} iterations={} loss={:.4} kW",
            net.name, sol.converged, sol.iterations, sol.total_loss_kw
        )?;
        writeln!(out, "{:>8} {:>8} {:>8} {:>8}", "bus", "|Ua|", "|Ub|", "|Uc|")?;
        for (b, m) in net.buses.iter().zip(&mags) {
            let cell = |p: vvo_core::phase::Phase| {
                if b.phases.contains(p) {
                    format!("{:.5}", m[p.index()])
                } else {
                    "-".to_string()
                }
            };
            use vvo_core::phase::Phase::*;
            writeln!(out, "{:>8} {:>8} {:>8} {:>8}", b.id, cell(A), cell(B), cell(C))?;
        }
    }
    if !sol.converged {
        bail!("power flow did not converge in {} iterations", sol.iterations);
    }
    Ok(())
}

fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let net = load_feeder(&args.feeder.feeder)?;
    let env = args.env.config();
    let cfg = args.config();
    let (pool, log) = madrl::train(&net, &env, &cfg)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let ckpt = args.out.join(CHECKPOINT_FILE);
    madrl::save_checkpoint(&pool, &ckpt)?;
    let mut w = create(&args.out.join(TRAINING_LOG_FILE))?;
    experiment::write_training_log(&mut w, &log)?;
    w.flush()?;
    match experiment::learning_trend(&log, 500.min(log.len())) {
        Some(t) => writeln!(
            out,
            "trained {} agents for {} episodes; leading/trailing mean reward {:.3}/{:.3}, violation rate {:.3}/{:.3}",
            pool.len(),
            log.len(),
            t.leading_mean_reward,
            t.trailing_mean_reward,
            t.leading_violation_rate,
            t.trailing_violation_rate
        )?,
        None => writeln!(out, "initialized {} agents (no episodes)", pool.len())?,
    }
    writeln!(out, "checkpoint written to {}", ckpt.display())?;
    Ok(())
}

fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let net = load_feeder(&args.feeder.feeder)?;
    let pool = madrl::load_checkpoint(checkpoint_path(&args.model), &net)?;
    let ev = evaluate(&net, &pool, &args.env.config(), args.cases, args.seed)?;
    fs::create_dir_all(&args.report).with_context(|| format!("creating {}", args.report.display()))?;
    let mut w = create(&args.report.join(CASES_FILE))?;
    experiment::write_cases_csv(&mut w, &ev.cases)?;
    w.flush()?;
    let mut w = create(&args.report.join(TIMING_FILE))?;
    experiment::write_timing_csv(&mut w, &ev.timings)?;
    w.flush()?;
    let json = serde_json::to_string_pretty(&ev.report)?;
    fs::write(args.report.join(REPORT_FILE), &json)?;
    writeln!(out, "{json}")?;
    Ok(())
}

fn baseline(args: &BaselineArgs, out: &mut dyn Write) -> Result<()> {
    let net = load_feeder(&args.feeder.feeder)?;
    let report = baseline_stats(&net, &args.env.config(), args.cases, args.seed)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(dir) = &args.report {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("baseline.json"), &json)?;
    }
    writeln!(out, "{json}")?;
    Ok(())
}

/// Parses `argv` (program name first) and runs the subcommand.
/// Returns the process exit code; diagnostics go to `err`.
pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => solve(a, out),
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Baseline(a) => baseline(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
