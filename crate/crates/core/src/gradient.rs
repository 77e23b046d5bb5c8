//! Exact gradients of the objective with respect to the logits.
//!
//! The maxima and the BSCC choice are frozen at their witnesses. Each
//! witness hitting-time system `(I - Q) E = 1`, `(I - Q) S = 2E - 1` is
//! differentiated with adjoints: with `M = I - Q`, cotangents `gE`, `gS`
//! on `E` and `S`,
//!
//! ```text
//! lS = M^-T gS,   lE = M^-T (gE + 2 lS),   dU/dQ[c][d] = lE[c] E[d] + lS[c] S[d].
//! ```
//!
//! Chain-entry sensitivities are then pushed through the product (autonomous)
//! or direct (coordinated) transition structure and the per-state softmax.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::evaluator::{atom_at, evaluate, solve_moments, EvalOptions, Evaluation, Restricted};
use crate::linalg::Factor;
use crate::objective::{AtomKind, CompiledObjective};
use crate::par;
use crate::strategy::{to_solution, Mode, ParamSet};

/// Objective value, logit gradient and the evaluation they were taken at.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub value: f64,
    pub grad: Vec<f64>,
    pub evaluation: Evaluation,
}

pub fn grad_objective(env: &Environment, params: &ParamSet, obj: &CompiledObjective, opts: &EvalOptions) -> Result<Gradient> {
    grad_with(env, params, obj, opts, Descent::Chosen)
}

/// Which BSCC values the descent direction differentiates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Descent {
    /// The objective itself: the value of the best BSCC.
    #[default]
    Chosen,
    /// The sum of the values of every covered BSCC, so components that are
    /// not currently the best keep improving.
    AllBsccs,
}

/// Like [`grad_objective`], but the returned direction follows `descent`.
pub fn grad_with(env: &Environment, params: &ParamSet, obj: &CompiledObjective, opts: &EvalOptions, descent: Descent) -> Result<Gradient> {
    let sol = to_solution(params);
    let ev = evaluate(env, &sol, obj, opts)?;
    let mut gp = vec![0.0; params.logits.len()];
    let chosen = [ev.best];
    let all: Vec<usize> = (0..ev.bsccs.len()).filter(|&b| ev.bsccs[b].value.is_some()).collect();
    let which: &[usize] = match descent {
        Descent::Chosen => &chosen,
        Descent::AllBsccs => &all,
    };
    for &b in which {
        for (g, x) in gp.iter_mut().zip(prob_gradient_at(&ev, b, obj, opts)?) {
            *g += x;
        }
    }
    // softmax backward on the distributions actually used by the chain
    let layout = params.layout();
    let q = ev.chain.solution();
    let mut grad = vec![0.0; layout.len()];
    for s in 0..layout.state_count() {
        let r = layout.range(s);
        let dot: f64 = r.clone().map(|i| q.probs[i] * gp[i]).sum();
        for i in r {
            grad[i] = q.probs[i] * (gp[i] - dot);
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok(Gradient { value: ev.value, grad, evaluation: ev })
}

/// Gradient of the objective with respect to the decision probabilities of
/// the chain's solution (treating every entry as independent).
pub fn prob_gradient(ev: &Evaluation, obj: &CompiledObjective, opts: &EvalOptions) -> Result<Vec<f64>> {
    prob_gradient_at(ev, ev.best, obj, opts)
}

/// Gradient of the value of BSCC `bscc` with respect to the decision probabilities.
pub fn prob_gradient_at(ev: &Evaluation, bscc: usize, obj: &CompiledObjective, opts: &EvalOptions) -> Result<Vec<f64>> {
    let chain = &ev.chain;
    let b = &ev.bsccs[bscc];
    let size = b.members.len();

    // cotangents on (E, S) per witness system, member-indexed
    let mut cot: BTreeMap<(usize, u64), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (s, w) in obj.summands.iter().zip(&b.witnesses) {
        let term = &s.terms[w.term];
        let atom_fn = |i: usize| atom_at(obj, term, &b.table, i, w.member, &w.masks);
        term.expr.backward(&atom_fn, s.weight, &mut |i, g| {
            let a = &obj.atoms[i];
            let grp = term.fault_groups.binary_search(&a.faults).expect("fault group");
            let key = (a.vertex, w.masks[grp]);
            let (ge, gs) = cot.entry(key).or_insert_with(|| (vec![0.0; size], vec![0.0; size]));
            match a.kind {
                AtomKind::ET => ge[w.member] += g,
                AtomKind::VT => {
                    let e = b.table.get(key.0, key.1).e[w.member];
                    gs[w.member] += g;
                    ge[w.member] -= 2.0 * e * g;
                }
            }
        });
    }

    let mut local = vec![u32::MAX; chain.len()];
    for (i, &c) in b.members.iter().enumerate() {
        local[c] = i as u32;
    }
    let keys: Vec<_> = cot.into_iter().collect();
    let parts = par::map(opts.exec, &keys, |((v, mask), (ge, gs))| -> Result<Vec<(usize, f64)>> {
        let target: Vec<bool> = b.members.iter().map(|&c| crate::evaluator::target_of(chain, c, *v, *mask)).collect();
        let r = Restricted::new(chain, &b.members, &local, &target);
        if r.q.n == 0 {
            return Ok(Vec::new());
        }
        let need_s = gs.iter().any(|&x| x != 0.0);
        let m = solve_moments(&r, need_s, opts.dense_limit)?;
        let restrict = |x: &[f64]| r.unknown.iter().map(|&i| x[i]).collect::<Vec<f64>>();
        let factor = Factor::new(&r.q, true, opts.dense_limit)?;
        let e = restrict(&m.e);
        let mut ge = restrict(ge);
        let (ls, s) = if need_s {
            let ls = factor.solve(&restrict(gs))?;
            for (g, l) in ge.iter_mut().zip(&ls) {
                *g += 2.0 * l;
            }
            (ls, restrict(m.s.as_ref().expect("second moments")))
        } else {
            (vec![0.0; r.q.n], vec![0.0; r.q.n])
        };
        let le = factor.solve(&ge)?;
        let mut out = Vec::with_capacity(r.entry.len());
        for row in 0..r.q.n {
            for k in r.q.row_ptr[row]..r.q.row_ptr[row + 1] {
                let d = r.q.cols[k];
                out.push((r.entry[k], le[row] * e[d] + ls[row] * s[d]));
            }
        }
        Ok(out)
    });
    let mut g_entry = vec![0.0; chain.nnz()];
    for part in parts {
        for (e, g) in part? {
            g_entry[e] += g;
        }
    }

    let sol = chain.solution();
    let layout = chain.layout();
    let mut gp = vec![0.0; layout.len()];
    match layout.spec().mode() {
        Mode::Coordinated => {
            for &c in &b.members {
                let base = layout.range(c).start;
                for e in chain.row_range(c) {
                    gp[base + chain.origin(e)[0] as usize] += g_entry[e];
                }
            }
        }
        Mode::Autonomous => {
            let n = layout.spec().agents();
            let mut locals = vec![0; n];
            let mut idx = vec![0; n];
            let mut q = vec![0.0; n];
            for &c in &b.members {
                layout.agent_states_of(c, &mut locals);
                for e in chain.row_range(c) {
                    if g_entry[e] == 0.0 {
                        continue;
                    }
                    let origin = chain.origin(e);
                    for i in 0..n {
                        let st = layout.agent_state(i, locals[i]);
                        idx[i] = layout.range(st).start + origin[i] as usize;
                        q[i] = sol.probs[idx[i]];
                    }
                    for i in 0..n {
                        let others: f64 = (0..n).filter(|&j| j != i).map(|j| q[j]).product();
                        gp[idx[i]] += g_entry[e] * others;
                    }
                }
            }
        }
    }
    Ok(gp)
}

/// Outcome of comparing analytic and central finite-difference gradients.
#[derive(Clone, Debug, Serialize)]
pub struct FdReport {
    /// Worst error over compared coordinates: relative, or absolute when both
    /// sides are below `1e-6` in magnitude.
    pub max_error: f64,
    pub worst: Option<usize>,
    pub checked: usize,
    /// Coordinates skipped because a perturbation changed a witness.
    pub excluded: usize,
}

fn signature(ev: &Evaluation) -> (bool, usize, Vec<(usize, usize, Vec<u64>)>, Vec<bool>) {
    let b = ev.best_bscc();
    (
        ev.pruned,
        b.members[0],
        b.witnesses.iter().map(|w| (w.term, w.member, w.masks.clone())).collect(),
        ev.chain.solution().probs.iter().map(|&p| p > 0.0).collect(),
    )
}

/// Error measure used by [`finite_diff_check`].
pub fn fd_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < 1e-6 {
        diff
    } else {
        diff / scale
    }
}

/// Compares [`grad_objective`] with central differences of step `h` on
/// `trials` coordinates drawn without replacement (all when `trials` covers
/// them).
pub fn finite_diff_check(
    env: &Environment,
    params: &ParamSet,
    obj: &CompiledObjective,
    opts: &EvalOptions,
    h: f64,
    trials: usize,
    seed: u64,
) -> Result<FdReport> {
    if !(h > 0.0) {
        return Err(Error::Invalid("finite-difference step must be positive".into()));
    }
    let base = grad_objective(env, params, obj, opts)?;
    let sig = signature(&base.evaluation);
    let mut coords: Vec<usize> = (0..params.logits.len()).collect();
    if trials < coords.len() {
        coords.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        coords.truncate(trials);
        coords.sort_unstable();
    }
    let results = par::map(opts.exec, &coords, |&i| -> Result<Option<f64>> {
        let shifted = |delta: f64| -> Result<Evaluation> {
            let mut p = params.clone();
            p.logits[i] += delta;
            evaluate(env, &to_solution(&p), obj, opts)
        };
        let (up, down) = (shifted(h)?, shifted(-h)?);
        if signature(&up) != sig || signature(&down) != sig {
            return Ok(None);
        }
        Ok(Some((up.value - down.value) / (2.0 * h)))
    });
    let mut report = FdReport { max_error: 0.0, worst: None, checked: 0, excluded: 0 };
    for (&i, r) in coords.iter().zip(results) {
        match r? {
            None => report.excluded += 1,
            Some(fd) => {
                report.checked += 1;
                let err = fd_error(base.grad[i], fd);
                if report.worst.is_none() || err > report.max_error {
                    report.max_error = err;
                    report.worst = Some(i);
                }
            }
        }
    }
    Ok(report)
}
