//! Monte Carlo validation of analytic hitting-time moments and a brute-force
//! oracle over deterministic finite-memory solutions.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::evaluator::{evaluate, mask_agents, subsets, target_configs, EvalOptions};
use crate::objective::{AtomKind, CompiledObjective};
use crate::par::{self, Exec};
use crate::strategy::{ConfigChain, Layout, Solution, SolutionSpec};

/// Default number of steps after which a trajectory is censored.
pub const DEFAULT_HORIZON: usize = 10_000;

/// Largest tolerated fraction of censored trials for one atom.
pub const CENSOR_LIMIT: f64 = 1e-3;

/// Discrepancies larger than this many standard errors are flagged.
pub const FLAG_SIGMAS: f64 = 4.0;

/// Two-sided 99% normal quantile.
const Z99: f64 = 2.576;

/// Default bound on the number of deterministic candidates enumerated.
pub const DEFAULT_ENUM_LIMIT: usize = 1_000_000;

/// Sample moments of a hitting time; censored trials are excluded from the
/// moments and counted separately.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimEstimate {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Fourth central sample moment.
    pub fourth: f64,
    /// Number of trials that reached a target.
    pub trials: usize,
    /// Half-width of the 99% confidence interval of the mean.
    pub half_width: f64,
    pub censored: usize,
}

impl SimEstimate {
    pub fn mean_stderr(&self) -> f64 {
        (self.variance / self.trials.max(1) as f64).sqrt()
    }

    /// Standard error of the sample variance, `Var(s^2) = (mu4 - (n-3)/(n-1) sigma^4) / n`
    /// with plug-in moments. Unlike the large-sample `(mu4 - sigma^4) / n` it
    /// stays positive for symmetric two-point distributions.
    pub fn variance_stderr(&self) -> f64 {
        let n = self.trials as f64;
        if self.trials < 2 {
            return f64::INFINITY;
        }
        let s4 = self.variance * self.variance;
        ((self.fourth - (n - 3.0) / (n - 1.0) * s4).max(0.0) / n).sqrt()
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / (self.trials + self.censored).max(1) as f64
    }
}

fn step(chain: &ConfigChain, c: usize, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = c;
    for (d, p) in chain.row(c) {
        acc += p;
        last = d;
        if u < acc {
            return d;
        }
    }
    last
}

/// Simulates `trials` trajectories from `c0` until a configuration in
/// `targets` is entered (time 0 if `c0` is a target) or `horizon` steps pass.
/// Trial `k` uses its own stream derived from `seed`, so results do not depend
/// on the execution mode.
pub fn sample_hitting(
    chain: &ConfigChain,
    c0: usize,
    targets: &[usize],
    trials: usize,
    horizon: usize,
    seed: u64,
) -> Result<SimEstimate> {
    sample_hitting_with(chain, c0, targets, trials, horizon, seed, Exec::default())
}

pub fn sample_hitting_with(
    chain: &ConfigChain,
    c0: usize,
    targets: &[usize],
    trials: usize,
    horizon: usize,
    seed: u64,
    exec: Exec,
) -> Result<SimEstimate> {
    if trials == 0 || horizon == 0 {
        return Err(Error::Invalid("trials and horizon must be at least 1".into()));
    }
    if c0 >= chain.len() {
        return Err(Error::Invalid(format!("configuration {c0} out of range")));
    }
    let mut is_target = vec![false; chain.len()];
    for &t in targets {
        is_target[t] = true;
    }
    const BLOCK: usize = 4096;
    let blocks = trials.div_ceil(BLOCK);
    let times: Vec<Vec<Option<u32>>> = par::map_range(exec, blocks, |b| {
        (b * BLOCK..((b + 1) * BLOCK).min(trials))
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let mut c = c0;
                for t in 0..=horizon {
                    if is_target[c] {
                        return Some(t as u32);
                    }
                    if t < horizon {
                        c = step(chain, c, &mut rng);
                    }
                }
                None
            })
            .collect()
    });
    let hits: Vec<f64> = times.iter().flatten().flatten().map(|&t| t as f64).collect();
    let censored = trials - hits.len();
    let n = hits.len();
    if n == 0 {
        return Ok(SimEstimate {
            mean: f64::NAN,
            variance: f64::NAN,
            fourth: f64::NAN,
            trials: 0,
            half_width: f64::INFINITY,
            censored,
        });
    }
    let mean = hits.iter().sum::<f64>() / n as f64;
    let (m2, m4) = hits.iter().fold((0.0, 0.0), |(a, b), &x| {
        let d = (x - mean) * (x - mean);
        (a + d, b + d * d)
    });
    let variance = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    let fourth = m4 / n as f64;
    Ok(SimEstimate {
        mean,
        variance,
        fourth,
        trials: n,
        half_width: Z99 * (variance / n as f64).sqrt(),
        censored,
    })
}

/// Analytic versus empirical value of one atom at its worst configuration.
#[derive(Clone, Debug, Serialize)]
pub struct AtomCheck {
    pub atom: String,
    pub config: String,
    pub agents: Vec<usize>,
    pub analytic: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub censored_fraction: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub trials: usize,
    pub seed: u64,
    pub atoms: Vec<AtomCheck>,
    pub flags: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.flags == 0
    }
}

/// Compares every atom of `obj` on the chosen BSCC of `sol` (evaluated without
/// pruning) against a Monte Carlo estimate started at the analytic maximizer.
pub fn validate_solution(
    env: &Environment,
    sol: &Solution,
    obj: &CompiledObjective,
    trials: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let ev = evaluate(env, sol, obj, &EvalOptions::default())?;
    let chain = &ev.chain;
    let b = ev.best_bscc();
    let members = &b.members;
    let mut atoms = Vec::with_capacity(obj.atoms.len());
    for (i, a) in obj.atoms.iter().enumerate() {
        let mut best: Option<(f64, usize, u64)> = None;
        for mask in subsets(chain.agents(), a.faults as usize) {
            let m = b.table.get(a.vertex, mask);
            for c in 0..members.len() {
                let v = match a.kind {
                    AtomKind::ET => m.e[c],
                    AtomKind::VT => m.s.as_ref().expect("second moments solved")[c] - m.e[c] * m.e[c],
                };
                if best.is_none_or(|(x, _, _)| v > x) {
                    best = Some((v, c, mask));
                }
            }
        }
        let (analytic, c, mask) = best.expect("nonempty BSCC");
        let targets = target_configs(chain, a.vertex, mask);
        let est = sample_hitting(
            chain,
            members[c],
            &targets,
            trials,
            DEFAULT_HORIZON,
            seed.wrapping_add(i as u64),
        )?;
        let (empirical, stderr) = match a.kind {
            AtomKind::ET => (est.mean, est.mean_stderr()),
            AtomKind::VT => (est.variance, est.variance_stderr()),
        };
        let censored_fraction = est.censored_fraction();
        let slack = 1e-9 * (1.0 + analytic.abs());
        let flagged = !empirical.is_finite()
            || (analytic - empirical).abs() > FLAG_SIGMAS * stderr + slack
            || censored_fraction > CENSOR_LIMIT;
        atoms.push(AtomCheck {
            atom: a.label(env),
            config: chain.label(env, members[c]),
            agents: mask_agents(mask),
            analytic,
            empirical,
            stderr,
            censored_fraction,
            flagged,
        });
    }
    let flags = atoms.iter().filter(|a| a.flagged).count();
    Ok(ValidationReport { trials, seed, atoms, flags })
}

/// Best deterministic solution found by exhaustive enumeration.
#[derive(Clone, Debug)]
pub struct BruteForce {
    pub value: f64,
    pub solution: Solution,
    /// Number of candidates enumerated.
    pub candidates: usize,
    /// Number of candidates whose chain covers the objective.
    pub covering: usize,
}

/// Enumerates every deterministic solution of `spec` (one action per decision
/// state) and returns one minimizing the objective. Candidates whose chain
/// covers no atom set are skipped; ties go to the first candidate in
/// enumeration order.
pub fn brute_force_deterministic(
    env: &Environment,
    spec: &SolutionSpec,
    obj: &CompiledObjective,
    limit: usize,
) -> Result<BruteForce> {
    let layout = Arc::new(Layout::new(env, spec)?);
    let radix: Vec<usize> = (0..layout.state_count()).map(|s| layout.range(s).len()).collect();
    let total = radix.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r).filter(|&t| t <= limit));
    let total = total.ok_or_else(|| Error::SearchLimit {
        candidates: radix.iter().map(|&r| r as f64).product(),
        limit,
    })?;
    let opts = EvalOptions { exec: Exec::Sequential, ..EvalOptions::default() };

    let candidate = |mut k: usize| -> Result<Solution> {
        let mut probs = vec![0.0; layout.len()];
        for (s, &r) in radix.iter().enumerate() {
            probs[layout.range(s).start + k % r] = 1.0;
            k /= r;
        }
        Solution::new(layout.clone(), probs, 0.0)
    };

    const CHUNK: usize = 256;
    let chunks = total.div_ceil(CHUNK);
    let results: Vec<Result<(Option<(f64, usize)>, usize)>> = par::map_range(Exec::default(), chunks, |j| {
        let mut best: Option<(f64, usize)> = None;
        let mut covering = 0;
        for k in j * CHUNK..((j + 1) * CHUNK).min(total) {
            let sol = candidate(k)?;
            match evaluate(env, &sol, obj, &opts) {
                Ok(ev) => {
                    covering += 1;
                    if best.is_none_or(|(u, _)| ev.value < u) {
                        best = Some((ev.value, k));
                    }
                }
                Err(Error::Uncoverable(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok((best, covering))
    });

    let mut best: Option<(f64, usize)> = None;
    let mut covering = 0;
    for r in results {
        let (b, n) = r?;
        covering += n;
        if let Some((u, k)) = b {
            if best.is_none_or(|(x, _)| u < x) {
                best = Some((u, k));
            }
        }
    }
    let (value, k) = best.ok_or_else(|| Error::Uncoverable(Vec::new()))?;
    Ok(BruteForce { value, solution: candidate(k)?, candidates: total, covering })
}
