//! Command-line front end: experiment configs in, strategies, reports and
//! CSV tables out.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ftrv::environment::{gen_grid, gen_path, gen_triangle};
use ftrv::evaluator::{evaluate, report, EvalOptions};
use ftrv::gradient::finite_diff_check;
use ftrv::objective::{compile, standard_objective, CompiledObjective, Objective};
use ftrv::optimizer::{synthesize, OptimizerConfig};
use ftrv::simulate::{brute_force_deterministic, validate_solution, DEFAULT_ENUM_LIMIT};
use ftrv::strategy::{init_params, parse_solution, serialize_solution};
use ftrv::{Environment, Mode, Solution, SolutionSpec};

/// Exit code for an objective that does not parse or validate.
pub const EXIT_OBJECTIVE: u8 = 2;
/// Exit code for a failed validation or gradient check.
pub const EXIT_CHECK: u8 = 3;

/// Largest tolerated finite-difference error for `gradcheck`.
pub const GRADCHECK_TOL: f64 = 1e-4;

pub const SUMMARY_HEADER: [&str; 9] =
    ["mode", "m", "kappa", "alpha", "ET_max", "sqrt_VT_max", "ET_R_max", "step_time_s", "seed"];

#[derive(Parser, Debug)]
#[command(name = "ftrv", version, about = "Synthesize and evaluate randomized patrolling strategies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Optimize a strategy and write strategy.json, report.json, steps.csv and summary.csv.
    Synth(Common),
    /// Exact evaluation of a strategy file.
    Eval {
        strategy: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo check of every atom of the objective on a strategy file.
    Simulate {
        strategy: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Best deterministic finite-memory solution by exhaustive enumeration.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_ENUM_LIMIT)]
        limit: usize,
    },
    /// Compare the analytic gradient with central finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        /// Number of logit coordinates compared.
        #[arg(long, default_value_t = 50)]
        coords: usize,
    },
}

/// Flags shared by all subcommands; they override the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Graph file (line format: `vertex X`, `edge X Y`, `undirected X Y`).
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long)]
    pub agents: Option<usize>,
    #[arg(long)]
    pub memory: Option<usize>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Number of seeds (seeds 0..N).
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Seed for simulation and gradient checks.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Graph given as a file path or a generator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    File(PathBuf),
    Generator(Generator),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Generator {
    Path(usize),
    Grid {
        w: usize,
        h: usize,
        #[serde(default)]
        removed: Vec<(String, String)>,
    },
    Triangle {},
}

/// Experiment description read from `--config`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: Option<GraphSpec>,
    pub mode: Mode,
    pub n: usize,
    pub memory: usize,
    /// Objective string; when absent the standard template is built from
    /// `kappa`, `alpha` and `targets`.
    pub objective: Option<String>,
    pub kappa: Option<f64>,
    pub alpha: Option<f64>,
    pub targets: Option<Vec<String>>,
    pub optimizer: OptimizerConfig,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            graph: None,
            mode: Mode::Coordinated,
            n: 2,
            memory: 1,
            objective: None,
            kappa: None,
            alpha: None,
            targets: None,
            optimizer: OptimizerConfig::default(),
            trials: 100_000,
            seed: 0,
            out: None,
        }
    }
}

/// Everything a command needs once config and flags are merged.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub env: Environment,
    pub spec: SolutionSpec,
    pub objective: CompiledObjective,
}

/// An error carrying the process exit code.
#[derive(Debug, thiserror::Error)]
#[error("{msg}")]
pub struct Exit {
    pub code: u8,
    pub msg: String,
}

pub fn load_graph(spec: &GraphSpec, base: &Path) -> Result<Environment> {
    Ok(match spec {
        GraphSpec::File(p) => {
            let path = if p.is_relative() { base.join(p) } else { p.clone() };
            let text = fs::read_to_string(&path).with_context(|| format!("reading graph {}", path.display()))?;
            Environment::parse(&text).with_context(|| format!("graph {}", path.display()))?
        }
        GraphSpec::Generator(Generator::Path(k)) => gen_path(*k)?,
        GraphSpec::Generator(Generator::Grid { w, h, removed }) => gen_grid(*w, *h, removed)?,
        GraphSpec::Generator(Generator::Triangle {}) => gen_triangle()?,
    })
}

fn objective_error(e: ftrv::Error) -> anyhow::Error {
    match e {
        ftrv::Error::Parse(_) | ftrv::Error::Objective(_) => {
            Exit { code: EXIT_OBJECTIVE, msg: format!("invalid objective: {e}") }.into()
        }
        other => other.into(),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn objective_source(&self) -> Result<Objective> {
        match &self.objective {
            Some(src) => Objective::parse(src).map_err(objective_error),
            None => standard_objective(
                self.kappa.unwrap_or(0.0),
                self.alpha.unwrap_or(0.0),
                self.targets.as_deref(),
            )
            .map_err(objective_error),
        }
    }
}

impl Common {
    /// Reads the config (if any) and applies command-line overrides.
    pub fn resolve(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let (mut cfg, base) = match &self.config {
            Some(p) => (
                ExperimentConfig::load(p)?,
                p.parent().map(Path::to_path_buf).unwrap_or_default(),
            ),
            None => (ExperimentConfig::default(), PathBuf::from(".")),
        };
        if let Some(g) = &self.graph {
            cfg.graph = Some(GraphSpec::File(std::path::absolute(g)?));
        }
        if let Some(o) = &self.objective {
            cfg.objective = Some(o.clone());
        }
        if let Some(n) = self.agents {
            cfg.n = n;
        }
        if let Some(m) = self.memory {
            cfg.memory = m;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(s) = self.steps {
            cfg.optimizer.steps = s;
        }
        if let Some(lr) = self.lr {
            cfg.optimizer.lr = lr;
        }
        if let Some(k) = self.seeds {
            cfg.optimizer.seeds = (0..k).collect();
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok((cfg, base))
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let (config, base) = self.resolve()?;
        let graph = config.graph.as_ref().context("no graph given (use --graph or a config file)")?;
        let env = load_graph(graph, &base)?;
        let spec = SolutionSpec::uniform(config.mode, config.n, config.memory)?;
        let ast = config.objective_source()?;
        let objective = compile(&ast, &env, &spec).map_err(objective_error)?;
        Ok(Experiment { config, env, spec, objective })
    }
}

fn read_strategy(env: &Environment, path: &Path) -> Result<Solution> {
    let text = fs::read_to_string(path).with_context(|| format!("reading strategy {}", path.display()))?;
    parse_solution(env, &text).with_context(|| format!("strategy {}", path.display()))
}

/// Graph and objective for a command acting on a strategy file; the solution
/// shape comes from the file.
fn strategy_experiment(common: &Common, strategy: &Path) -> Result<(Experiment, Solution)> {
    let (config, base) = common.resolve()?;
    let graph = config.graph.as_ref().context("no graph given (use --graph or a config file)")?;
    let env = load_graph(graph, &base)?;
    let sol = read_strategy(&env, strategy)?;
    let spec = sol.spec().clone();
    let ast = config.objective_source()?;
    let objective = compile(&ast, &env, &spec).map_err(objective_error)?;
    Ok((Experiment { config, env, spec, objective }, sol))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "inf".into())
}

/// One row of summary.csv, in [`SUMMARY_HEADER`] order.
#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub mode: String,
    pub m: usize,
    pub kappa: String,
    pub alpha: String,
    #[serde(rename = "ET_max")]
    pub et_max: String,
    #[serde(rename = "sqrt_VT_max")]
    pub sqrt_vt_max: String,
    #[serde(rename = "ET_R_max")]
    pub et_r_max: String,
    pub step_time_s: String,
    pub seed: u64,
}

#[derive(Serialize)]
struct StepRow {
    seed: u64,
    step: usize,
    value: f64,
    seconds: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn out_dir(cfg: &ExperimentConfig) -> Result<Option<PathBuf>> {
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(cfg.out.clone())
}

pub fn cmd_synth(common: &Common) -> Result<SummaryRow> {
    let ex = common.experiment()?;
    let cfg = &ex.config;
    let syn = synthesize(&ex.env, &ex.spec, &ex.objective, &cfg.optimizer)?;
    let best = syn.best_run();

    // the checkpoint is re-evaluated as is; pin the chosen BSCC
    let exact = EvalOptions { prune: 0.0, ..cfg.optimizer.eval.clone() };
    let ev = evaluate(&ex.env, &best.best, &ex.objective, &exact)?;
    let mut sol = ev.chain.solution().clone();
    sol.initial = Some(ev.initial());
    let rep = report(&ex.env, &ev, &ex.objective, &exact)?;

    let steps: Vec<f64> = syn.runs.iter().flat_map(|r| r.step_seconds.iter().copied()).collect();
    let step_time = steps.iter().sum::<f64>() / steps.len().max(1) as f64;
    let row = SummaryRow {
        mode: ex.spec.mode().to_string(),
        m: cfg.memory,
        kappa: cfg.kappa.map(|k| k.to_string()).unwrap_or_default(),
        alpha: cfg.alpha.map(|a| a.to_string()).unwrap_or_default(),
        et_max: fmt_opt(rep.metrics.et_max),
        sqrt_vt_max: fmt_opt(rep.metrics.sqrt_vt_max),
        et_r_max: fmt_opt(rep.metrics.et_r_max),
        step_time_s: format!("{step_time:.6}"),
        seed: best.seed,
    };

    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("strategy.json"), serialize_solution(&ex.env, &sol)? + "\n")?;
    write_json(&dir.join("report.json"), &rep)?;
    let step_rows: Vec<StepRow> = syn
        .runs
        .iter()
        .flat_map(|r| {
            r.values.iter().zip(&r.step_seconds).enumerate().map(move |(step, (&value, &seconds))| StepRow {
                seed: r.seed,
                step,
                value,
                seconds,
            })
        })
        .collect();
    write_csv(&dir.join("steps.csv"), &step_rows)?;
    write_csv(&dir.join("summary.csv"), std::slice::from_ref(&row))?;
    for r in &syn.runs {
        if let Some(e) = &r.error {
            eprintln!("seed {} stopped early: {e}", r.seed);
        }
    }
    println!("{}", serde_json::to_string(&row)?);
    Ok(row)
}

pub fn cmd_eval(common: &Common, strategy: &Path) -> Result<ftrv::EvaluationReport> {
    let (ex, sol) = strategy_experiment(common, strategy)?;
    let opts = EvalOptions::default();
    let ev = evaluate(&ex.env, &sol, &ex.objective, &opts)?;
    let rep = report(&ex.env, &ev, &ex.objective, &opts)?;
    if let Some(dir) = out_dir(&ex.config)? {
        write_json(&dir.join("report.json"), &rep)?;
    }
    println!("{}", serde_json::to_string_pretty(&rep)?);
    Ok(rep)
}

pub fn cmd_simulate(common: &Common, strategy: &Path) -> Result<ftrv::simulate::ValidationReport> {
    let (ex, sol) = strategy_experiment(common, strategy)?;
    let rep = validate_solution(&ex.env, &sol, &ex.objective, ex.config.trials, ex.config.seed)?;
    if let Some(dir) = out_dir(&ex.config)? {
        write_json(&dir.join("report.json"), &rep)?;
    }
    println!("{}", serde_json::to_string_pretty(&rep)?);
    if !rep.passed() {
        return Err(Exit { code: EXIT_CHECK, msg: format!("{} atom(s) flagged", rep.flags) }.into());
    }
    Ok(rep)
}

pub fn cmd_oracle(common: &Common, limit: usize) -> Result<f64> {
    let mut common = common.clone();
    // a single memoryless agent cannot sweep a path; two cells can
    common.agents = common.agents.or(Some(1));
    common.memory = common.memory.or(Some(2));
    common.mode = common.mode.or(Some(Mode::Autonomous));
    let ex = common.experiment()?;
    let bf = brute_force_deterministic(&ex.env, &ex.spec, &ex.objective, limit)?;
    if let Some(dir) = out_dir(&ex.config)? {
        fs::write(dir.join("strategy.json"), serialize_solution(&ex.env, &bf.solution)? + "\n")?;
    }
    eprintln!("{} candidates, {} covering", bf.candidates, bf.covering);
    println!("{}", bf.value);
    Ok(bf.value)
}

pub fn cmd_gradcheck(common: &Common, h: f64, coords: usize) -> Result<f64> {
    let ex = common.experiment()?;
    let params = init_params(&ex.env, &ex.spec, ex.config.seed)?;
    let opts = EvalOptions { prune: 0.0, ..ex.config.optimizer.eval.clone() };
    let rep = finite_diff_check(&ex.env, &params, &ex.objective, &opts, h, coords, ex.config.seed)?;
    println!("max rel err {:.3e} ({} checked, {} excluded)", rep.max_error, rep.checked, rep.excluded);
    if rep.checked == 0 || rep.max_error > GRADCHECK_TOL {
        return Err(Exit { code: EXIT_CHECK, msg: format!("gradient check failed: {:.3e}", rep.max_error) }.into());
    }
    Ok(rep.max_error)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(c) => cmd_synth(c).map(drop),
        Command::Eval { strategy, common } => cmd_eval(common, strategy).map(drop),
        Command::Simulate { strategy, common } => cmd_simulate(common, strategy).map(drop),
        Command::Oracle { common, limit } => cmd_oracle(common, *limit).map(drop),
        Command::Gradcheck { common, h, coords } => {
            if !(*h > 0.0) {
                bail!("--h must be positive");
            }
            cmd_gradcheck(common, *h, *coords).map(drop)
        }
    }
}

/// Process exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Exit>() {
        Some(e) => e.code,
        None => 1,
    }
}
