//! `decsbpr`: parse models, simulate data, learn and evaluate controllers.

mod config;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use decsbpr::fsc::JointFsc;
use decsbpr::inference::{run_em_fixed, run_vb, EmConfig, EpisodeSet, EvidenceWeight, VbConfig};
use decsbpr::model::{exact_fsc_value, parse_dpomdp, DecPomdpModel};
use decsbpr::sbprior::SbPrior;
use decsbpr::sim::{
    collect_episodes, evaluate_policy, offline_trial, semi_random_behavior, sequential_batch_learn, LearnConfig,
    SimConfig, TrialConfig, TrialOutcome,
};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(
    name = "decsbpr",
    version,
    about = "Learn stick-breaking controllers for Dec-POMDPs from episodes"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a .dpomdp file and print its dimensions.
    Parse {
        #[arg(long)]
        model: PathBuf,
    },
    /// Simulate episodes under random or expert-mixed behavior.
    Simulate(SimulateArgs),
    /// Fit controllers to an episode file.
    Train(TrainArgs),
    /// Monte-Carlo value of controllers.
    Evaluate(EvalArgs),
    /// Exact discounted value of controllers.
    Exact {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        controllers: PathBuf,
    },
    /// Sequential batch learning with adaptive exploration.
    Learn(LearnArgs),
    /// EM value against a range of fixed controller sizes.
    Sweep(SweepArgs),
    /// Learning runs over every .dpomdp file in a directory.
    Bench(BenchArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Stick-breaking prior with `--sigma`.
    Sb,
    /// Dirichlet-process special case (sigma fixed to 1).
    Dp,
    /// Fixed-size EM baseline.
    Em,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Evidence {
    /// Soft counts weighted by reweighted reward over episode count.
    PerEpisode,
    /// Soft counts weighted by reweighted reward.
    Total,
}

#[derive(Args, Debug, Clone)]
struct FitArgs {
    #[arg(long, default_value_t = 50)]
    truncation: usize,
    /// Gamma shape of the stick prior.
    #[arg(long, default_value_t = 0.1)]
    c: f64,
    /// Gamma rate of the stick prior.
    #[arg(long, default_value_t = 1e-6)]
    d: f64,
    /// Dirichlet weight of each action.
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = Mode::Dp)]
    mode: Mode,
    /// Data weighting of the soft counts [default: per-episode; total for bench].
    #[arg(long, value_enum)]
    evidence: Option<Evidence>,
    #[arg(long, default_value_t = 3)]
    em_nodes: usize,
    /// Pseudo-count weight of the initial controller.
    #[arg(long, default_value_t = 1.0)]
    init_strength: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FitArgs {
    fn vb_config(&self) -> Result<VbConfig> {
        self.vb_config_with(Evidence::PerEpisode)
    }

    fn vb_config_with(&self, default_evidence: Evidence) -> Result<VbConfig> {
        let sigma = if self.mode == Mode::Dp { 1.0 } else { self.sigma };
        let prior = SbPrior::new(self.rho, sigma, self.c, self.d)?;
        let mut cfg = VbConfig::new(self.truncation, prior);
        cfg.tol = self.tol;
        cfg.max_iter = self.max_iter;
        cfg.init_strength = self.init_strength;
        cfg.evidence = match self.evidence.unwrap_or(default_evidence) {
            Evidence::PerEpisode => EvidenceWeight::PerEpisode,
            Evidence::Total => EvidenceWeight::Total,
        };
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Number of episodes.
    #[arg(long, default_value_t = 300)]
    count: usize,
    #[arg(long, default_value_t = 50)]
    horizon: usize,
    /// Expert controllers; without them actions are uniform.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Probability of following the expert.
    #[arg(long, default_value_t = 0.3)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    episodes: PathBuf,
    /// Model supplying action and observation counts (default: from the data).
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    controllers: PathBuf,
    #[arg(long, default_value_t = 100)]
    eval_episodes: usize,
    #[arg(long, default_value_t = 1000)]
    eval_horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct LearnOpts {
    #[arg(long, default_value_t = 6)]
    iterations: usize,
    #[arg(long, default_value_t = 50)]
    batch_size: usize,
    /// Steps per training episode.
    #[arg(long, default_value_t = 50)]
    horizon: usize,
    #[arg(long, default_value_t = 100.0)]
    u1: f64,
    #[arg(long, default_value_t = 100)]
    eval_episodes: usize,
    #[arg(long, default_value_t = 1000)]
    eval_horizon: usize,
    /// Continue each round from the previous posterior.
    #[arg(long)]
    warm_start: bool,
    #[command(flatten)]
    fit: FitArgs,
}

impl LearnOpts {
    fn config(&self) -> Result<LearnConfig> {
        if self.fit.mode == Mode::Em {
            return Err(decsbpr::Error::InvalidConfig("sequential learning needs --mode sb or dp".into()).into());
        }
        let mut cfg = LearnConfig::new(self.iterations, self.fit.vb_config()?);
        cfg.batch_size = self.batch_size;
        cfg.horizon = self.horizon;
        cfg.u1 = self.u1;
        cfg.eval_episodes = self.eval_episodes;
        cfg.eval_horizon = self.eval_horizon;
        cfg.seed = self.fit.seed;
        cfg.warm_start = self.warm_start;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct LearnArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    opts: LearnOpts,
    /// Learning-curve CSV.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the final controllers.
    #[arg(long)]
    controllers_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    episodes: PathBuf,
    #[arg(long, default_value_t = 12)]
    max_nodes: usize,
    /// EM restarts per size; the best exact value is kept.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Directory of .dpomdp files; `NAME.expert.json` next to a model is
    /// used as its semi-random expert.
    #[arg(long, default_value = "benchmarks")]
    dir: PathBuf,
    /// Training episodes per run.
    #[arg(long, default_value_t = 300)]
    count: usize,
    #[arg(long, default_value_t = 50)]
    horizon: usize,
    /// Probability of following the expert.
    #[arg(long, default_value_t = 0.3)]
    epsilon: f64,
    /// Seeded runs per benchmark; the best evaluated run is reported.
    #[arg(long, default_value_t = 5)]
    runs: u64,
    #[arg(long, default_value_t = 100)]
    eval_episodes: usize,
    #[arg(long, default_value_t = 1000)]
    eval_horizon: usize,
    #[command(flatten)]
    fit: FitArgs,
    /// Report CSV.
    #[arg(long)]
    out: PathBuf,
}

/// Exit status for a failed command.
fn exit_code(err: &anyhow::Error) -> u8 {
    use decsbpr::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::NonConvergence(_)) => 3,
        Some(E::InvalidConfig(_)) => 1,
        Some(_) => 2,
        None => {
            if err.downcast_ref::<clap::Error>().is_some() {
                1
            } else {
                2
            }
        }
    }
}

fn load_model(path: &Path) -> Result<DecPomdpModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_dpomdp(&text)?)
}

fn load_episodes(path: &Path) -> Result<EpisodeSet> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(EpisodeSet::read_jsonl(BufReader::new(file))?)
}

fn load_controllers(path: &Path) -> Result<JointFsc> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(JointFsc::from_json(&text)?)
}

fn model_dims(model: &DecPomdpModel) -> Vec<(usize, usize)> {
    (0..model.num_agents())
        .map(|n| (model.num_actions(n), model.num_observations(n)))
        .collect()
}

fn sizes_text(sizes: &[usize]) -> String {
    sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

fn cmd_parse(path: &Path) -> Result<()> {
    let m = load_model(path)?;
    let (lo, hi) = m.reward_range();
    println!("agents: {}", m.num_agents());
    println!("states: {}", m.num_states());
    println!("actions: {:?}", m.action_counts());
    println!("observations: {:?}", m.observation_counts());
    println!("discount: {}", m.discount);
    println!("rewards: [{lo}, {hi}]");
    println!("stochastic: ok");
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let expert = args.policy.as_deref().map(load_controllers).transpose()?;
    let behaviors = semi_random_behavior(&model, expert.as_ref(), args.epsilon)?;
    let (set, stats) = collect_episodes(&model, &behaviors, &SimConfig::new(args.count, args.horizon, args.seed))?;
    let out = BufWriter::new(File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?);
    set.write_jsonl(out)?;
    println!(
        "wrote {} episodes to {} (exploration rate {:.3})",
        set.len(),
        args.out.display(),
        stats.exploration_rate
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let episodes = load_episodes(&args.episodes)?;
    let dims = match &args.model {
        Some(p) => model_dims(&load_model(p)?),
        None => episodes.observed_dims(),
    };
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let start = Instant::now();
    let trace_path = args.out.join("trace.csv");
    let (joint, converged, iterations) = if args.fit.mode == Mode::Em {
        let mut cfg = EmConfig::new(args.fit.em_nodes);
        cfg.max_iter = args.fit.max_iter;
        cfg.seed = args.fit.seed;
        let out = run_em_fixed(&episodes, &dims, &cfg)?;
        let mut w = csv::Writer::from_path(&trace_path)?;
        w.write_record(["iter", "log_value"])?;
        for (i, v) in out.log_values.iter().enumerate() {
            w.write_record([(i + 1).to_string(), v.to_string()])?;
        }
        w.flush()?;
        (out.controllers, out.converged, out.log_values.len())
    } else {
        let out = run_vb(&episodes, &dims, &args.fit.vb_config()?)?;
        let mut w = csv::Writer::from_path(&trace_path)?;
        w.write_record([
            "iter",
            "lower_bound",
            "delta",
            "log_value",
            "value_estimate",
            "sizes",
            "nu_sum_error",
            "underflow",
        ])?;
        for r in &out.trace {
            w.write_record([
                r.iter.to_string(),
                r.lower_bound.to_string(),
                r.delta.to_string(),
                r.log_value.to_string(),
                r.value_estimate.to_string(),
                sizes_text(&r.sizes),
                r.nu_sum_error.to_string(),
                r.underflow.to_string(),
            ])?;
        }
        w.flush()?;
        println!("inferred sizes: {:?}", out.sizes);
        let joint = JointFsc {
            agents: out.posterior.point_estimates(),
        };
        (joint, out.converged, out.trace.len())
    };
    std::fs::write(args.out.join("controllers.json"), joint.to_json()?)?;
    println!(
        "{} iterations in {:.2}s, converged: {converged}; output in {}",
        iterations,
        start.elapsed().as_secs_f64(),
        args.out.display()
    );
    if !converged {
        return Err(decsbpr::Error::NonConvergence(format!("stopped after {iterations} iterations")).into());
    }
    Ok(())
}

fn cmd_evaluate(args: &EvalArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let joint = load_controllers(&args.controllers)?;
    let e = evaluate_policy(&model, &joint, args.eval_episodes, args.eval_horizon, args.seed)?;
    println!("value: {:.6} ± {:.6}", e.mean, e.std_err);
    Ok(())
}

fn cmd_exact(model: &Path, controllers: &Path) -> Result<()> {
    let model = load_model(model)?;
    let joint = load_controllers(controllers)?;
    println!("value: {:.9}", exact_fsc_value(&model, &joint.agents)?);
    Ok(())
}

fn cmd_learn(args: &LearnArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let out = sequential_batch_learn(&model, &args.opts.config()?)?;
    let mut w = csv::Writer::from_path(&args.out)?;
    w.write_record([
        "iter",
        "dataset_size",
        "test_value",
        "std_err",
        "mean_inferred_Z",
        "exploration_rate",
    ])?;
    for p in &out.curve {
        w.serialize((
            p.iter,
            p.dataset_size,
            p.test_value,
            p.std_err,
            p.mean_nodes,
            p.exploration_rate,
        ))?;
    }
    w.flush()?;
    if let Some(path) = &args.controllers_out {
        std::fs::write(path, out.controllers.to_json()?)?;
    }
    if let Some(last) = out.curve.last() {
        println!(
            "final value {:.4} ± {:.4}, sizes {:?}",
            last.test_value,
            last.std_err,
            out.controllers.sizes()
        );
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let episodes = load_episodes(&args.episodes)?;
    let dims = model_dims(&model);
    let mut w = csv::Writer::from_path(&args.out)?;
    w.write_record(["nodes", "best_value", "mean_value", "seconds"])?;
    for nodes in 1..=args.max_nodes {
        let start = Instant::now();
        let mut values = Vec::new();
        for s in 0..args.seeds.max(1) {
            let mut cfg = EmConfig::new(nodes);
            cfg.seed = args.seed + s;
            cfg.max_iter = args.max_iter;
            let out = run_em_fixed(&episodes, &dims, &cfg)?;
            values.push(exact_fsc_value(&model, &out.controllers.agents)?);
        }
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let secs = start.elapsed().as_secs_f64();
        log::info!("|Z| = {nodes}: best {best:.4}, mean {mean:.4}");
        w.serialize((nodes, best, mean, secs))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    if args.runs == 0 {
        return Err(decsbpr::Error::InvalidConfig("--runs must be at least 1".into()).into());
    }
    let mut trial = TrialConfig::new(args.fit.vb_config_with(Evidence::Total)?);
    trial.episodes = args.count;
    trial.horizon = args.horizon;
    trial.epsilon = args.epsilon;
    trial.eval_episodes = args.eval_episodes;
    trial.eval_horizon = args.eval_horizon;
    let mut files: Vec<PathBuf> = std::fs::read_dir(&args.dir)
        .with_context(|| format!("listing {}", args.dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dpomdp"))
        .collect();
    files.sort();
    let mut w = csv::Writer::from_path(&args.out)?;
    w.write_record(["benchmark", "value", "std_err", "sizes", "best_seed", "runs", "seconds"])?;
    for path in files {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let model = load_model(&path)?;
        let expert_path = path.with_extension("expert.json");
        let expert = if expert_path.exists() {
            Some(load_controllers(&expert_path)?)
        } else {
            None
        };
        let start = Instant::now();
        let mut best: Option<(u64, TrialOutcome)> = None;
        for r in 0..args.runs {
            trial.seed = args.fit.seed + r;
            let out = offline_trial(&model, expert.as_ref(), &trial)?;
            log::info!(
                "{name} seed {}: value {:.4}, sizes {:?}",
                trial.seed,
                out.evaluation.mean,
                out.fit.sizes
            );
            if best
                .as_ref()
                .is_none_or(|(_, b)| out.evaluation.mean > b.evaluation.mean)
            {
                best = Some((trial.seed, out));
            }
        }
        let secs = start.elapsed().as_secs_f64();
        let (seed, out) = best.expect("at least one run");
        println!(
            "{name}: value {:.4} ± {:.4}, sizes {:?}, seed {seed}, {secs:.1}s",
            out.evaluation.mean, out.evaluation.std_err, out.fit.sizes
        );
        w.write_record([
            name,
            out.evaluation.mean.to_string(),
            out.evaluation.std_err.to_string(),
            sizes_text(&out.fit.sizes),
            seed.to_string(),
            args.runs.to_string(),
            format!("{secs:.3}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Parse { model } => cmd_parse(model),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Exact { model, controllers } => cmd_exact(model, controllers),
        Command::Learn(a) => cmd_learn(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

/// Whether subcommand `sub` has a long flag `key`.
fn accepts(sub: &str, key: &str) -> bool {
    let cmd = Cli::command();
    let global = cmd.get_arguments().any(|a| a.get_long() == Some(key));
    global
        || cmd
            .find_subcommand(sub)
            .is_some_and(|s| s.get_arguments().any(|a| a.get_long() == Some(key)))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DEC_SBPR_LOG", "warn")).init();
    let args = match config::splice_config(std::env::args().collect(), accepts) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let _ = std::io::stderr().flush();
            ExitCode::from(exit_code(&e))
        }
    }
}
