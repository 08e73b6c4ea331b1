//! Command-line front end: model ingestion, certification, both solvers,
//! filter replay, rollout evaluation and CSV artifacts.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use wbpomdp::conjugate::{solve_sets, SetAlgorithm, SetOptions, SetSolution};
use wbpomdp::csvio::{
    fmt_f64, read_measure, write_alphas, write_argmax_trace, write_measure, write_set_convergence,
    write_values, write_vi_convergence,
};
use wbpomdp::filter::{bayes_update, obs_marginal, sample_transition};
use wbpomdp::kalman::{build_model, KalmanSpec};
use wbpomdp::measure::tilde_w;
use wbpomdp::rollout::{horizon_for, rollout_estimate, SelectorPolicy};
use wbpomdp::sample::{reachability_sample, BeliefSample, ReachabilityConfig};
use wbpomdp::toy::toy_model;
use wbpomdp::value_iteration::{solve_vi, GeneralizerKind, ViOptions, ViSolution};
use wbpomdp::{certify, CertifiedModel, DiscreteMeasure, Error, PomdpModel};

/// Environment variable that overrides `--out`.
pub const OUT_ENV: &str = "WBPOMDP_OUT";

#[derive(Debug, Parser)]
#[command(name = "wbpomdp", version, about = "POMDP solvers on Wasserstein belief spaces")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify a model and print its contraction constants.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Value iteration on a reachability sample.
    SolveVi(SolveArgs),
    /// Set iteration on a reachability sample.
    SolveSets {
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long, value_enum, default_value_t = Algorithm::Alg1)]
        algorithm: Algorithm,
    },
    /// Replay the Bayes filter along actions and observation nodes.
    Filter(FilterArgs),
    /// Solve by value iteration, then estimate the selector's value by
    /// Monte Carlo from the initial belief.
    Rollout {
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        /// Simulation horizon; defaults to the first T whose discounted tail
        /// bound is below epsilon / 10.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        rollout_seed: u64,
    },
    /// Run both solvers on one sample and compare them.
    Compare {
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long, value_enum, default_value_t = Algorithm::Alg1)]
        algorithm: Algorithm,
    },
    /// Write a built-in model as JSON.
    Example {
        #[command(subcommand)]
        which: ExampleKind,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExampleKind {
    /// The scalar linear-Gaussian model on a grid.
    Kalman {
        /// JSON spec file; defaults to the reference spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Override the grid step.
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        output: PathBuf,
    },
    /// The two-state model used in tests.
    Toy {
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Alg1,
    Alg2,
}

impl From<Algorithm> for SetAlgorithm {
    fn from(a: Algorithm) -> Self {
        match a {
            Algorithm::Alg1 => SetAlgorithm::Alg1,
            Algorithm::Alg2 => SetAlgorithm::Alg2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Generalizer {
    AlphaSet,
    NearestNeighbor,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    /// Reachability depth of the belief sample.
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    /// Seed for truncating oversized sample levels and for mixtures.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum sample size.
    #[arg(long, default_value_t = 5000)]
    pub cap: usize,
    /// Random mixtures appended to the sample.
    #[arg(long, default_value_t = 0)]
    pub mixtures: usize,
    /// Belief CSV (`index,mass`) used as the sample root instead of the
    /// model's initial belief.
    #[arg(long)]
    pub belief: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Generalizer::AlphaSet)]
    pub generalizer: Generalizer,
    #[arg(long, env = OUT_ENV, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Starting belief CSV; defaults to the model's initial belief.
    #[arg(long)]
    pub belief: Option<PathBuf>,
    /// `ACTION:NODE` pairs, by name or index. Repeatable.
    #[arg(long = "step")]
    pub steps: Vec<String>,
    /// Number of extra steps with observations drawn from the marginal.
    #[arg(long, default_value_t = 0)]
    pub simulate: usize,
    /// Action used for simulated steps.
    #[arg(long, default_value = "0")]
    pub action: String,
    /// Required with `--simulate`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = OUT_ENV, default_value = ".")]
    pub out: PathBuf,
}

/// Error surfaced by [`run`]: a library error (exit 1) or a usage error
/// detected after parsing (exit 2).
#[derive(Debug)]
enum Failure {
    Model(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Model(Error::Io(e))
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(Failure::Usage(format!("cannot build thread pool: {e}"))),
        },
        None => dispatch(&cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Model(e)) => {
            eprintln!("error code={} message={:?}", e.code(), e.to_string());
            1
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error code=Usage message={msg:?}");
            2
        }
    }
}

fn dispatch(cmd: &Command) -> Result<(), Failure> {
    match cmd {
        Command::Validate { model } => validate(model),
        Command::SolveVi(args) => cmd_solve_vi(args),
        Command::SolveSets { solve, algorithm } => cmd_solve_sets(solve, *algorithm),
        Command::Filter(args) => cmd_filter(args),
        Command::Rollout {
            solve,
            paths,
            horizon,
            rollout_seed,
        } => cmd_rollout(solve, *paths, *horizon, *rollout_seed),
        Command::Compare { solve, algorithm } => cmd_compare(solve, *algorithm),
        Command::Example { which } => cmd_example(which),
    }
}

fn load_certified(path: &Path) -> Result<CertifiedModel, Failure> {
    Ok(certify(PomdpModel::load(path)?)?)
}

fn check_epsilon(eps: f64) -> Result<(), Failure> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--epsilon must be positive and finite (got {eps})")))
    }
}

fn out_dir(path: &Path) -> Result<&Path, Failure> {
    std::fs::create_dir_all(path)?;
    Ok(path)
}

fn root_belief(model: &PomdpModel, belief: Option<&PathBuf>) -> Result<DiscreteMeasure, Failure> {
    match belief {
        Some(p) => Ok(read_measure(p, model.grid().clone())?),
        None => Ok(model.initial_belief()),
    }
}

fn build_sample(model: &CertifiedModel, args: &SolveArgs) -> Result<BeliefSample, Failure> {
    let root = root_belief(model, args.belief.as_ref())?;
    let cfg = ReachabilityConfig {
        depth: args.depth,
        cap: args.cap,
        mixtures: args.mixtures,
        seed: args.seed,
        ..Default::default()
    };
    Ok(reachability_sample(model, &root, &cfg)?)
}

fn vi_options(args: &SolveArgs) -> ViOptions {
    ViOptions {
        epsilon: args.epsilon,
        max_iters: args.max_iters,
        generalizer: match args.generalizer {
            Generalizer::AlphaSet => GeneralizerKind::AlphaSet,
            Generalizer::NearestNeighbor => GeneralizerKind::NearestNeighbor { lipschitz: None },
        },
        ..Default::default()
    }
}

fn set_options(args: &SolveArgs, algorithm: Algorithm) -> SetOptions {
    SetOptions {
        epsilon: args.epsilon,
        max_iters: args.max_iters,
        algorithm: algorithm.into(),
        ..Default::default()
    }
}

fn print_kv(pairs: &[(&str, String)]) {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    for (k, v) in pairs {
        let _ = writeln!(lock, "{k}={v}");
    }
}

fn validate(path: &Path) -> Result<(), Failure> {
    let model = load_certified(path)?;
    let c = model.constants();
    print_kv(&[
        ("states", model.n_states().to_string()),
        ("actions", model.n_actions().to_string()),
        ("nodes", model.n_nodes().to_string()),
        ("alpha", fmt_f64(c.alpha)),
        ("k", fmt_f64(c.k)),
        ("r_bar", fmt_f64(c.r_bar)),
        ("beta", fmt_f64(c.beta)),
        ("gamma", fmt_f64(c.gamma)),
    ]);
    Ok(())
}

fn run_vi(args: &SolveArgs) -> Result<(CertifiedModel, BeliefSample, ViSolution), Failure> {
    check_epsilon(args.epsilon)?;
    let model = load_certified(&args.model)?;
    let sample = build_sample(&model, args)?;
    let sol = solve_vi(&model, &sample, &vi_options(args))?;
    Ok((model, sample, sol))
}

fn cmd_solve_vi(args: &SolveArgs) -> Result<(), Failure> {
    let (model, sample, sol) = run_vi(args)?;
    let dir = out_dir(&args.out)?;
    write_vi_convergence(dir.join("convergence.csv"), &sol.trace)?;
    write_values(
        dir.join("values.csv"),
        &sol.values.values,
        &sol.selector.actions,
        model.action_names(),
    )?;
    print_kv(&[
        ("beliefs", sample.len().to_string()),
        ("iters", sol.iters.to_string()),
        ("bound", fmt_f64(sol.error_bound)),
        ("converged", sol.converged.to_string()),
        ("value_root", fmt_f64(sol.values.values[0])),
    ]);
    sol.require_converged()?;
    Ok(())
}

fn write_set_artifacts(dir: &Path, model: &CertifiedModel, sol: &SetSolution) -> Result<(), Failure> {
    write_alphas(dir.join("alphas.csv"), &sol.set, model.action_names())?;
    write_argmax_trace(dir.join("argmax-trace.csv"), &sol.argmax_trace, model.action_names())?;
    Ok(())
}

fn cmd_solve_sets(args: &SolveArgs, algorithm: Algorithm) -> Result<(), Failure> {
    check_epsilon(args.epsilon)?;
    let model = load_certified(&args.model)?;
    let sample = build_sample(&model, args)?;
    let sol = solve_sets(&model, &sample, &set_options(args, algorithm))?;
    let dir = out_dir(&args.out)?;
    write_set_artifacts(dir, &model, &sol)?;
    write_set_convergence(dir.join("convergence.csv"), &sol.trace)?;
    write_values(
        dir.join("values.csv"),
        &sol.values.values,
        &sol.selector.actions,
        model.action_names(),
    )?;
    print_kv(&[
        ("beliefs", sample.len().to_string()),
        ("iters", sol.iters.to_string()),
        ("bound", fmt_f64(sol.error_bound)),
        ("converged", sol.converged.to_string()),
        ("set_size", sol.set.len().to_string()),
        ("value_root", fmt_f64(sol.values.values[0])),
    ]);
    sol.require_converged()?;
    Ok(())
}

fn resolve_action(model: &PomdpModel, s: &str) -> Result<usize, Failure> {
    if let Some(i) = model.action_names().iter().position(|n| n == s) {
        return Ok(i);
    }
    match s.parse::<usize>() {
        Ok(i) if i < model.n_actions() => Ok(i),
        _ => Err(Failure::Usage(format!("unknown action '{s}'"))),
    }
}

fn cmd_filter(args: &FilterArgs) -> Result<(), Failure> {
    let model = PomdpModel::load(&args.model)?;
    let mut steps = Vec::new();
    for s in &args.steps {
        let (a, j) = s
            .split_once(':')
            .ok_or_else(|| Failure::Usage(format!("--step expects ACTION:NODE, got '{s}'")))?;
        let a = resolve_action(&model, a)?;
        let j: usize = j
            .parse()
            .ok()
            .filter(|&j| j < model.n_nodes())
            .ok_or_else(|| Failure::Usage(format!("bad observation node in '{s}'")))?;
        steps.push((a, Some(j)));
    }
    if args.simulate > 0 {
        if args.seed.is_none() {
            return Err(Failure::Usage("--simulate requires --seed".into()));
        }
        let a = resolve_action(&model, &args.action)?;
        steps.extend(std::iter::repeat((a, None)).take(args.simulate));
    }

    let dir = out_dir(&args.out)?;
    let mut mu = root_belief(&model, args.belief.as_ref())?;
    write_measure(dir.join("posterior-000.csv"), &mu)?;
    let mut summary = csv::Writer::from_path(dir.join("filter.csv")).map_err(Error::from)?;
    summary
        .write_record(["step", "action", "node", "probability", "mean", "variance"])
        .map_err(Error::from)?;
    for (t, (a, j)) in steps.into_iter().enumerate() {
        let (j, post) = match j {
            Some(j) => (j, bayes_update(&model, &mu, a, j)?),
            None => sample_transition(&model, &mu, a, args.seed.unwrap_or(0).wrapping_add(t as u64))?,
        };
        let prob = obs_marginal(&model, &mu, a)?.probability(j);
        mu = post;
        write_measure(dir.join(format!("posterior-{:03}.csv", t + 1)), &mu)?;
        summary
            .write_record([
                (t + 1).to_string(),
                model.action_names()[a].clone(),
                j.to_string(),
                fmt_f64(prob),
                fmt_f64(mu.mean()),
                fmt_f64(mu.variance()),
            ])
            .map_err(Error::from)?;
    }
    summary.flush()?;
    print_kv(&[("mean", fmt_f64(mu.mean())), ("variance", fmt_f64(mu.variance()))]);
    Ok(())
}

fn cmd_rollout(
    args: &SolveArgs,
    paths: usize,
    horizon: Option<usize>,
    seed: u64,
) -> Result<(), Failure> {
    let (model, sample, sol) = run_vi(args)?;
    sol.require_converged()?;
    let horizon = horizon.unwrap_or_else(|| horizon_for(model.constants(), args.epsilon));
    let policy = SelectorPolicy {
        sample: &sample,
        selector: &sol.selector,
    };
    let root = &sample.beliefs()[0];
    let est = rollout_estimate(&model, &policy, root, horizon, paths, seed)?;
    let dir = out_dir(&args.out)?;
    let mut w = csv::Writer::from_path(dir.join("rollout.csv")).map_err(Error::from)?;
    w.write_record(["paths", "horizon", "mean", "stderr", "value_root", "bound"])
        .map_err(Error::from)?;
    w.write_record([
        est.paths.to_string(),
        est.horizon.to_string(),
        fmt_f64(est.mean),
        fmt_f64(est.stderr),
        fmt_f64(sol.values.values[0]),
        fmt_f64(sol.error_bound),
    ])
    .map_err(Error::from)?;
    w.flush()?;
    print_kv(&[
        ("horizon", horizon.to_string()),
        ("mean", fmt_f64(est.mean)),
        ("stderr", fmt_f64(est.stderr)),
        ("value_root", fmt_f64(sol.values.values[0])),
    ]);
    Ok(())
}

fn cmd_compare(args: &SolveArgs, algorithm: Algorithm) -> Result<(), Failure> {
    let (model, sample, vi) = run_vi(args)?;
    let sets = solve_sets(&model, &sample, &set_options(args, algorithm))?;
    vi.require_converged()?;
    sets.require_converged()?;
    let bound = vi.error_bound + sets.error_bound;
    let wf = *model.weight();
    let dir = out_dir(&args.out)?;
    let mut w = csv::Writer::from_path(dir.join("diff.csv")).map_err(Error::from)?;
    w.write_record(["belief", "vi", "sets", "abs_diff", "weighted_bound"])
        .map_err(Error::from)?;
    let mut max_diff = 0.0f64;
    let mut within = true;
    for (i, mu) in sample.beliefs().iter().enumerate() {
        let (a, b) = (vi.values.values[i], sets.values.values[i]);
        let d = (a - b).abs();
        let wb = bound * tilde_w(&wf, mu)?;
        max_diff = max_diff.max(d);
        within &= d <= wb;
        w.write_record([i.to_string(), fmt_f64(a), fmt_f64(b), fmt_f64(d), fmt_f64(wb)])
            .map_err(Error::from)?;
    }
    w.flush()?;
    write_set_artifacts(dir, &model, &sets)?;
    print_kv(&[
        ("beliefs", sample.len().to_string()),
        ("vi_iters", vi.iters.to_string()),
        ("sets_iters", sets.iters.to_string()),
        ("max_diff", fmt_f64(max_diff)),
        ("bound", fmt_f64(bound)),
        ("within_bound", within.to_string()),
    ]);
    Ok(())
}

fn cmd_example(which: &ExampleKind) -> Result<(), Failure> {
    let (model, output) = match which {
        ExampleKind::Kalman { spec, step, output } => {
            let mut s = match spec {
                Some(p) => serde_json::from_str::<KalmanSpec>(&std::fs::read_to_string(p)?)
                    .map_err(Error::from)?,
                None => KalmanSpec::reference(),
            };
            if let Some(step) = step {
                s = s.with_step(*step);
            }
            (build_model(&s)?, output)
        }
        ExampleKind::Toy { output } => (toy_model(), output),
    };
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    model.save(output)?;
    let cert = certify(model)?;
    print_kv(&[
        ("states", cert.n_states().to_string()),
        ("gamma", fmt_f64(cert.constants().gamma)),
    ]);
    Ok(())
}
