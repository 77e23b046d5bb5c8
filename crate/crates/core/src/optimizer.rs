//! Adam over softmax logits, restarted from several seeds, keeping the best
//! solution seen at any step.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::evaluator::EvalOptions;
use crate::gradient::{grad_with, Descent};
use crate::objective::CompiledObjective;
use crate::par;
use crate::strategy::{init_params, ParamSet, Solution, SolutionSpec};

/// Default pruning threshold applied during synthesis.
pub const DEFAULT_PRUNE: f64 = 0.02;

/// Default Adam step size.
pub const DEFAULT_LR: f64 = 0.3;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seeds: Vec<u64>,
    pub descent: Descent,
    pub eval: EvalOptions,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            steps: 600,
            lr: DEFAULT_LR,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seeds: (0..5).collect(),
            descent: Descent::AllBsccs,
            eval: EvalOptions { prune: DEFAULT_PRUNE, ..EvalOptions::default() },
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Invalid("steps must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Invalid("at least one seed is required".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates of Adam.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// One bias-corrected Adam update of `params` followed by logit clamping.
/// A non-finite gradient leaves everything untouched and is reported.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState, grad: &[f64], cfg: &OptimizerConfig) -> Result<()> {
    if grad.len() != params.logits.len() {
        return Err(Error::Invalid("gradient length does not match the parameters".into()));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i}")));
    }
    state.t += 1;
    let b1t = 1.0 - cfg.beta1.powi(state.t as i32);
    let b2t = 1.0 - cfg.beta2.powi(state.t as i32);
    for (i, &g) in grad.iter().enumerate() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let mhat = state.m[i] / b1t;
        let vhat = state.v[i] / b2t;
        params.logits[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
    }
    params.clamp();
    Ok(())
}

/// Trajectory and best checkpoint of one seed.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    /// Objective value evaluated at every step.
    pub values: Vec<f64>,
    pub best_value: f64,
    pub best_step: usize,
    /// Wall-clock seconds of every step (evaluation, gradient and update).
    pub step_seconds: Vec<f64>,
    /// Why the run stopped early, if it did.
    pub error: Option<String>,
    /// Solution with the least value, as evaluated (pruned when pruning applied).
    #[serde(skip)]
    pub best: Solution,
}

impl RunRecord {
    pub fn mean_step_seconds(&self) -> f64 {
        if self.step_seconds.is_empty() {
            0.0
        } else {
            self.step_seconds.iter().sum::<f64>() / self.step_seconds.len() as f64
        }
    }
}

/// Runs one seed.
pub fn run_seed(env: &Environment, spec: &SolutionSpec, obj: &CompiledObjective, cfg: &OptimizerConfig, seed: u64) -> Result<RunRecord> {
    let mut params = init_params(env, spec, seed)?;
    let mut state = AdamState::new(params.logits.len());
    let mut record: Option<RunRecord> = None;
    for step in 0..cfg.steps {
        let start = Instant::now();
        let g = match grad_with(env, &params, obj, &cfg.eval, cfg.descent) {
            Ok(g) => g,
            // a failure on the very first step is a property of the instance
            Err(e) if record.is_none() => return Err(e),
            Err(e) => {
                record.as_mut().expect("record").error = Some(e.to_string());
                break;
            }
        };
        let rec = record.get_or_insert_with(|| RunRecord {
            seed,
            values: Vec::with_capacity(cfg.steps),
            best_value: f64::INFINITY,
            best_step: 0,
            step_seconds: Vec::with_capacity(cfg.steps),
            error: None,
            best: g.evaluation.chain.solution().clone(),
        });
        rec.values.push(g.value);
        if g.value < rec.best_value {
            rec.best_value = g.value;
            rec.best_step = step;
            rec.best = g.evaluation.chain.solution().clone();
        }
        let update = adam_step(&mut params, &mut state, &g.grad, cfg);
        rec.step_seconds.push(start.elapsed().as_secs_f64());
        if let Err(e) = update {
            rec.error = Some(e.to_string());
            break;
        }
    }
    Ok(record.expect("at least one step"))
}

/// All runs plus the index of the winner (least value, ties to the first seed).
#[derive(Clone, Debug, Serialize)]
pub struct Synthesis {
    pub runs: Vec<RunRecord>,
    pub best: usize,
}

impl Synthesis {
    pub fn best_run(&self) -> &RunRecord {
        &self.runs[self.best]
    }
}

/// Optimizes from every configured seed (in parallel when enabled).
pub fn synthesize(env: &Environment, spec: &SolutionSpec, obj: &CompiledObjective, cfg: &OptimizerConfig) -> Result<Synthesis> {
    cfg.validate()?;
    let runs = par::map(cfg.eval.exec, &cfg.seeds, |&seed| run_seed(env, spec, obj, cfg, seed))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.best_value < runs[best].best_value {
            best = i;
        }
    }
    Ok(Synthesis { runs, best })
}
