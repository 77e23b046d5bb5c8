use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::environment::Environment;
use crate::error::{Error, Result};

use super::{Layout, SolutionSpec};

/// Logits are kept inside `[-LOGIT_BOUND, LOGIT_BOUND]` after every update.
pub const LOGIT_BOUND: f64 = 50.0;

/// Half-width of the log-range used for initialization: logits are `ln u`
/// with `u ~ Uniform(e^-INIT_SPREAD, e^INIT_SPREAD)`.
pub const INIT_SPREAD: f64 = 3.0;

/// Raw real-valued parameters of a solution, one logit per admissible action.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    layout: Arc<Layout>,
    pub logits: Vec<f64>,
}

impl ParamSet {
    pub fn new(layout: Arc<Layout>, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != layout.len() {
            return Err(Error::Invalid(format!("expected {} logits, got {}", layout.len(), logits.len())));
        }
        if let Some(i) = logits.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("logit {i}")));
        }
        Ok(Self { layout, logits })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn spec(&self) -> &SolutionSpec {
        self.layout.spec()
    }

    pub fn state_logits(&self, state: usize) -> &[f64] {
        &self.logits[self.layout.range(state)]
    }

    pub fn clamp(&mut self) {
        for x in &mut self.logits {
            *x = x.clamp(-LOGIT_BOUND, LOGIT_BOUND);
        }
    }
}

/// Per-decision-state probability distributions over admissible actions.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    layout: Arc<Layout>,
    pub probs: Vec<f64>,
    /// Pinned initial configuration, if any.
    pub initial: Option<usize>,
}

impl Solution {
    /// Wraps raw probabilities after checking every distribution.
    pub fn new(layout: Arc<Layout>, probs: Vec<f64>, tol: f64) -> Result<Self> {
        if probs.len() != layout.len() {
            return Err(Error::Invalid(format!("expected {} probabilities, got {}", layout.len(), probs.len())));
        }
        for s in 0..layout.state_count() {
            let row = &probs[layout.range(s)];
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Strategy(format!("state {s} has a probability outside [0, 1]")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > tol {
                return Err(Error::Strategy(format!("state {s} sums to {total}")));
            }
        }
        Ok(Self { layout, probs, initial: None })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn spec(&self) -> &SolutionSpec {
        self.layout.spec()
    }

    pub fn dist(&self, state: usize) -> &[f64] {
        &self.probs[self.layout.range(state)]
    }

    /// Snaps probabilities below `threshold` to zero and renormalizes each
    /// distribution. The largest entry of a distribution is always kept.
    pub fn pruned(&self, threshold: f64) -> Solution {
        if threshold <= 0.0 {
            return self.clone();
        }
        let mut probs = self.probs.clone();
        for s in 0..self.layout.state_count() {
            let row = &mut probs[self.layout.range(s)];
            let top = row.iter().cloned().fold(0.0, f64::max);
            let mut total = 0.0;
            for p in row.iter_mut() {
                if *p < threshold && *p < top {
                    *p = 0.0;
                }
                total += *p;
            }
            for p in row.iter_mut() {
                *p /= total;
            }
        }
        Solution { layout: self.layout.clone(), probs, initial: self.initial }
    }

    /// True when every distribution puts all mass on a single action.
    pub fn is_deterministic(&self) -> bool {
        (0..self.layout.state_count()).all(|s| self.dist(s).iter().filter(|&&p| p > 0.0).count() == 1)
    }
}

/// Samples logits `ln u`, `u ~ Uniform(e^-3, e^3)`, from a seeded generator.
pub fn init_params(env: &Environment, spec: &SolutionSpec, seed: u64) -> Result<ParamSet> {
    let layout = Arc::new(Layout::new(env, spec)?);
    Ok(init_with_layout(layout, seed))
}

pub(crate) fn init_with_layout(layout: Arc<Layout>, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = ((-INIT_SPREAD).exp(), INIT_SPREAD.exp());
    let logits = (0..layout.len()).map(|_| rng.gen_range(lo..hi).ln()).collect();
    ParamSet { layout, logits }
}

/// Per-state softmax of the logits.
pub fn to_solution(params: &ParamSet) -> Solution {
    let layout = params.layout.clone();
    let mut probs = vec![0.0; params.logits.len()];
    for s in 0..layout.state_count() {
        let r = layout.range(s);
        softmax_into(&params.logits[r.clone()], &mut probs[r]);
    }
    Solution { layout, probs, initial: None }
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(logits) {
        *o = (x - top).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}
