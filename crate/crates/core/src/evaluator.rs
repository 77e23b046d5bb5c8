//! Exact evaluation of FTRV objectives on a configuration chain.
//!
//! For every bottom strongly connected component `B` and every pair of a
//! vertex `v` and an agent subset `A`, the expected hitting time of the
//! target set `C[v, A]` (configurations where an agent of `A` is at `v`) and
//! its second moment are obtained from two linear systems sharing the
//! coefficient matrix `I - Q`, with `Q` the chain restricted to
//! `B \ C[v, A]`. Terms are maximized over configurations of `B` and over
//! subsets; the BSCC with the least objective value is selected.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::linalg::{Csr, Factor, DENSE_LIMIT};
use crate::objective::{AtomKind, CompiledObjective, CompiledTerm};
use crate::par::{self, Exec};
use crate::scc;
use crate::strategy::{ConfigChain, Solution, SolutionSpec, DEFAULT_STATE_LIMIT};

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Decision probabilities below this value are treated as zero before the
    /// chain is built (0 disables pruning).
    pub prune: f64,
    pub exec: Exec,
    /// Largest restricted system solved with dense LU.
    pub dense_limit: usize,
    pub state_limit: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { prune: 0.0, exec: Exec::default(), dense_limit: DENSE_LIMIT, state_limit: DEFAULT_STATE_LIMIT }
    }
}

/// Agent subsets of size `n - f` as bitmasks, ascending.
pub fn subsets(n: usize, f: usize) -> Vec<u64> {
    assert!(n <= 64 && f < n.max(1), "unsupported subset query n={n}, f={f}");
    let k = (n - f) as u32;
    let top: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut out = Vec::new();
    let mut m: u64 = if k == 0 { 0 } else { (1u64 << k) - 1 };
    loop {
        out.push(m);
        if m == top || k == 0 {
            break;
        }
        // next bit permutation with the same popcount
        let t = m | (m - 1);
        let next = (t + 1) | (((!t & (!t).wrapping_neg()) - 1) >> (m.trailing_zeros() + 1));
        if next > top || next <= m {
            break;
        }
        m = next;
    }
    out
}

pub fn mask_agents(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

/// Bottom strongly connected components, each sorted, ordered by smallest member.
pub fn bsccs(chain: &ConfigChain) -> Vec<Vec<usize>> {
    scc::bottom_components(chain)
}

pub(crate) fn target_of(chain: &ConfigChain, c: usize, v: usize, mask: u64) -> bool {
    chain.positions(c).iter().enumerate().any(|(i, &p)| mask >> i & 1 == 1 && p as usize == v)
}

/// Configurations where some agent of `mask` is located at `v`.
pub fn target_configs(chain: &ConfigChain, v: usize, mask: u64) -> Vec<usize> {
    (0..chain.len()).filter(|&c| target_of(chain, c, v, mask)).collect()
}

/// Chain restricted to the non-target members of a BSCC.
pub(crate) struct Restricted {
    /// Member position (within the BSCC) of each unknown.
    pub unknown: Vec<usize>,
    /// Unknown index of each member, `NONE` for targets.
    pub slot: Vec<u32>,
    pub q: Csr,
    /// Chain entry behind each nonzero of `q`.
    pub entry: Vec<usize>,
}

impl Restricted {
    /// `local` maps chain configurations to positions inside `members`.
    pub fn new(chain: &ConfigChain, members: &[usize], local: &[u32], target: &[bool]) -> Self {
        let mut slot = vec![NONE; members.len()];
        let mut unknown = Vec::new();
        for (i, &t) in target.iter().enumerate() {
            if !t {
                slot[i] = unknown.len() as u32;
                unknown.push(i);
            }
        }
        let mut q = Csr { n: unknown.len(), row_ptr: vec![0], ..Default::default() };
        let mut entry = Vec::new();
        for &i in &unknown {
            for e in chain.row_range(members[i]) {
                let j = local[chain.col(e)];
                debug_assert!(j != NONE, "BSCC is not closed");
                let s = slot[j as usize];
                if s != NONE {
                    q.cols.push(s as usize);
                    q.vals.push(chain.prob(e));
                    entry.push(e);
                }
            }
            q.row_ptr.push(q.cols.len());
        }
        Self { unknown, slot, q, entry }
    }

    /// Spreads per-unknown values over all members (zero on targets).
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.slot.len()];
        for (k, &i) in self.unknown.iter().enumerate() {
            out[i] = x[k];
        }
        out
    }
}

/// First and second moments of the hitting time, indexed by member position.
#[derive(Clone, Debug)]
pub(crate) struct Moments {
    pub e: Vec<f64>,
    pub s: Option<Vec<f64>>,
}

pub(crate) fn solve_moments(r: &Restricted, second: bool, dense_limit: usize) -> Result<Moments> {
    if r.q.n == 0 {
        let z = vec![0.0; r.slot.len()];
        return Ok(Moments { e: z.clone(), s: second.then_some(z) });
    }
    let factor = Factor::new(&r.q, false, dense_limit)?;
    let e = factor.solve(&vec![1.0; r.q.n])?;
    check_finite(&e, "expected hitting time")?;
    let s = if second {
        let rhs: Vec<f64> = e.iter().map(|x| 2.0 * x - 1.0).collect();
        let s = factor.solve(&rhs)?;
        check_finite(&s, "second moment")?;
        Some(r.expand(&s))
    } else {
        None
    };
    Ok(Moments { e: r.expand(&e), s })
}

fn check_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

fn local_index(chain: &ConfigChain, members: &[usize]) -> Vec<u32> {
    let mut local = vec![NONE; chain.len()];
    for (i, &c) in members.iter().enumerate() {
        local[c] = i as u32;
    }
    local
}

fn closed_members(chain: &ConfigChain, members: &[usize], targets: &[usize]) -> Result<(Vec<u32>, Vec<bool>)> {
    let local = local_index(chain, members);
    for &c in members {
        if chain.successors(c).any(|d| local[d] == NONE) {
            return Err(Error::Invalid("member set is not closed under transitions".into()));
        }
    }
    let mut target = vec![false; members.len()];
    for &t in targets {
        if local[t] != NONE {
            target[local[t] as usize] = true;
        }
    }
    if !target.contains(&true) {
        return Err(Error::Invalid("no target inside the component".into()));
    }
    Ok((local, target))
}

/// Expected hitting times of `targets` from every member of the closed set
/// `members`, in member order.
pub fn expected_times(chain: &ConfigChain, members: &[usize], targets: &[usize]) -> Result<Vec<f64>> {
    let (local, target) = closed_members(chain, members, targets)?;
    let r = Restricted::new(chain, members, &local, &target);
    Ok(solve_moments(&r, false, DENSE_LIMIT)?.e)
}

/// Second moments of the hitting time given the expectations `et`.
pub fn second_moments(chain: &ConfigChain, members: &[usize], targets: &[usize], et: &[f64]) -> Result<Vec<f64>> {
    let (local, target) = closed_members(chain, members, targets)?;
    let r = Restricted::new(chain, members, &local, &target);
    if r.q.n == 0 {
        return Ok(vec![0.0; members.len()]);
    }
    let rhs: Vec<f64> = r.unknown.iter().map(|&i| 2.0 * et[i] - 1.0).collect();
    let x = Factor::new(&r.q, false, DENSE_LIMIT)?.solve(&rhs)?;
    Ok(r.expand(&x))
}

/// Stationary distribution of the chain restricted to a BSCC, in member order.
pub fn stationary_distribution(chain: &ConfigChain, members: &[usize]) -> Result<Vec<f64>> {
    let n = members.len();
    let local = local_index(chain, members);
    if n <= DENSE_LIMIT {
        // (I - P)^T pi = 0 with the last equation replaced by sum(pi) = 1
        let mut m = DMatrix::<f64>::identity(n, n);
        for (i, &c) in members.iter().enumerate() {
            for (d, p) in chain.row(c) {
                m[(local[d] as usize, i)] -= p;
            }
        }
        for j in 0..n {
            m[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let pi = m.lu().solve(&b).ok_or_else(|| Error::Solver("singular stationary system".into()))?;
        return Ok(pi.iter().map(|&x| x.max(0.0)).collect());
    }
    // lazy power iteration for large components
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let mut next: Vec<f64> = pi.iter().map(|x| 0.5 * x).collect();
        for (i, &c) in members.iter().enumerate() {
            for (d, p) in chain.row(c) {
                next[local[d] as usize] += 0.5 * p * pi[i];
            }
        }
        let change = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if change < 1e-14 {
            return Ok(pi);
        }
    }
    Err(Error::Solver("power iteration did not converge".into()))
}

/// Solved hitting-time systems of one BSCC, keyed by `(vertex, subset)`.
#[derive(Clone, Debug, Default)]
pub(crate) struct SystemTable {
    pub keys: HashMap<(usize, u64), usize>,
    pub systems: Vec<(usize, u64, Moments)>,
}

impl SystemTable {
    pub fn get(&self, v: usize, mask: u64) -> &Moments {
        &self.systems[self.keys[&(v, mask)]].2
    }

    fn value(&self, kind: AtomKind, v: usize, mask: u64, c: usize) -> f64 {
        let m = self.get(v, mask);
        match kind {
            AtomKind::ET => m.e[c],
            AtomKind::VT => m.s.as_ref().expect("second moments solved")[c] - m.e[c] * m.e[c],
        }
    }
}

/// Maximizer of one summand.
#[derive(Clone, Debug)]
pub struct SummandWitness {
    pub value: f64,
    /// Index of the maximizing term within the summand.
    pub term: usize,
    /// Member position of the maximizing configuration.
    pub member: usize,
    /// One agent subset per fault group of the term.
    pub masks: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct BsccEval {
    pub members: Vec<usize>,
    /// Objective value, `None` when some atom is not covered.
    pub value: Option<f64>,
    /// Atom indices that no configuration of this BSCC can satisfy.
    pub uncovered: Vec<usize>,
    pub witnesses: Vec<SummandWitness>,
    pub(crate) table: SystemTable,
}

/// Result of evaluating a solution: the chain, every BSCC and the choice.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub chain: ConfigChain,
    /// Whether the chain was built from the pruned solution.
    pub pruned: bool,
    pub bsccs: Vec<BsccEval>,
    pub best: usize,
    pub value: f64,
}

impl Evaluation {
    pub fn best_bscc(&self) -> &BsccEval {
        &self.bsccs[self.best]
    }

    /// Reported initial configuration: the pinned one, or the lowest member
    /// of the chosen BSCC.
    pub fn initial(&self) -> usize {
        self.chain.solution().initial.unwrap_or(self.best_bscc().members[0])
    }
}

/// Evaluates `sol`, pruning first when requested. If no BSCC of the pruned
/// chain covers the objective, the unpruned chain is used instead.
pub fn evaluate(env: &crate::Environment, sol: &Solution, obj: &CompiledObjective, opts: &EvalOptions) -> Result<Evaluation> {
    if opts.prune > 0.0 {
        let pruned = sol.pruned(opts.prune);
        if pruned != *sol {
            let chain = ConfigChain::build(env, &pruned, opts.state_limit)?;
            match evaluate_chain(chain, obj, opts) {
                Ok(mut ev) => {
                    ev.pruned = true;
                    return Ok(ev);
                }
                Err(Error::Uncoverable(_)) | Err(Error::Invalid(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    evaluate_chain(ConfigChain::build(env, sol, opts.state_limit)?, obj, opts)
}

/// Evaluates the objective on every BSCC of `chain` (only the BSCC holding
/// the pinned initial configuration, if the solution has one).
pub fn evaluate_chain(chain: ConfigChain, obj: &CompiledObjective, opts: &EvalOptions) -> Result<Evaluation> {
    if obj.agents != chain.agents() {
        return Err(Error::Objective(format!(
            "objective compiled for {} agents, solution has {}",
            obj.agents,
            chain.agents()
        )));
    }
    let mut components = bsccs(&chain);
    if let Some(init) = chain.solution().initial {
        let pos = components
            .iter()
            .position(|b| b.binary_search(&init).is_ok())
            .ok_or_else(|| Error::Invalid("initial configuration is not recurrent".into()))?;
        components = vec![components.swap_remove(pos)];
    }
    let groups = atom_groups(obj);

    let uncovered: Vec<Vec<usize>> = components
        .iter()
        .map(|b| uncovered_atoms(&chain, b, obj, &groups))
        .collect();
    if uncovered.iter().all(|u| !u.is_empty()) {
        let env_free = |a: usize| {
            let atom = &obj.atoms[a];
            format!("{:?}(#{},{})", atom.kind, atom.vertex, atom.faults)
        };
        let pairs = uncovered
            .iter()
            .enumerate()
            .flat_map(|(b, u)| u.iter().map(move |&a| (env_free(a), b)))
            .collect();
        return Err(Error::Uncoverable(pairs));
    }

    // one task per (BSCC, vertex, subset); solved in parallel, order kept
    let mut tasks = Vec::new();
    for (b, _) in components.iter().enumerate().filter(|(b, _)| uncovered[*b].is_empty()) {
        for (&(v, f), &second) in &groups {
            for mask in subsets(chain.agents(), f as usize) {
                tasks.push((b, v, mask, second));
            }
        }
    }
    tasks.sort_by_key(|t| (t.0, t.1, t.2));
    let locals: Vec<Vec<u32>> = components.iter().map(|b| local_index_sparse(&chain, b)).collect();
    let solved = par::map(opts.exec, &tasks, |&(b, v, mask, second)| {
        let members = &components[b];
        let target: Vec<bool> = members.iter().map(|&c| target_of(&chain, c, v, mask)).collect();
        let r = Restricted::new(&chain, members, &locals[b], &target);
        solve_moments(&r, second, opts.dense_limit)
    });
    drop(locals);

    let mut tables = vec![SystemTable::default(); components.len()];
    for (&(b, v, mask, _), m) in tasks.iter().zip(solved) {
        let t = &mut tables[b];
        t.keys.insert((v, mask), t.systems.len());
        t.systems.push((v, mask, m?));
    }

    let mut out = Vec::with_capacity(components.len());
    let mut best: Option<(usize, f64)> = None;
    for (b, (members, table)) in components.into_iter().zip(tables).enumerate() {
        let unc = std::mem::take(&mut { uncovered[b].clone() });
        let (value, witnesses) = if unc.is_empty() {
            let (v, w) = score(obj, &table, chain.agents(), members.len());
            if !v.is_finite() {
                return Err(Error::NonFinite("objective value".into()));
            }
            if best.is_none_or(|(_, u)| v < u) {
                best = Some((b, v));
            }
            (Some(v), w)
        } else {
            (None, Vec::new())
        };
        out.push(BsccEval { members, value, uncovered: unc, witnesses, table });
    }
    let (best, value) = best.expect("some BSCC is covered");
    Ok(Evaluation { chain, pruned: false, bsccs: out, best, value })
}

/// Sparse variant of the global-to-member map: only entries of `members`
/// are meaningful, others are `NONE`.
fn local_index_sparse(chain: &ConfigChain, members: &[usize]) -> Vec<u32> {
    local_index(chain, members)
}

/// `(vertex, faults)` pairs used by atoms, with whether variance is needed.
fn atom_groups(obj: &CompiledObjective) -> std::collections::BTreeMap<(usize, u32), bool> {
    let mut groups = std::collections::BTreeMap::new();
    for a in &obj.atoms {
        let e = groups.entry((a.vertex, a.faults)).or_insert(false);
        *e |= a.kind == AtomKind::VT;
    }
    groups
}

fn uncovered_atoms(
    chain: &ConfigChain,
    members: &[usize],
    obj: &CompiledObjective,
    groups: &std::collections::BTreeMap<(usize, u32), bool>,
) -> Vec<usize> {
    let mut bad_groups = std::collections::BTreeSet::new();
    for &(v, f) in groups.keys() {
        let covered = subsets(chain.agents(), f as usize)
            .into_iter()
            .all(|mask| members.iter().any(|&c| target_of(chain, c, v, mask)));
        if !covered {
            bad_groups.insert((v, f));
        }
    }
    (0..obj.atoms.len())
        .filter(|&i| bad_groups.contains(&(obj.atoms[i].vertex, obj.atoms[i].faults)))
        .collect()
}

/// Every combination of one subset per fault group, in lexicographic order.
pub(crate) fn subset_combos(n: usize, groups: &[u32]) -> Vec<Vec<u64>> {
    let mut combos = vec![Vec::new()];
    for &f in groups {
        let options = subsets(n, f as usize);
        combos = combos
            .into_iter()
            .flat_map(|c| {
                options.iter().map(move |&m| {
                    let mut next = c.clone();
                    next.push(m);
                    next
                })
            })
            .collect();
    }
    combos
}

/// Value of `term` at member `c` under the subset combination `masks`.
pub(crate) fn term_value(
    obj: &CompiledObjective,
    term: &CompiledTerm,
    table: &SystemTable,
    c: usize,
    masks: &[u64],
) -> f64 {
    term.expr.eval(&|i| atom_at(obj, term, table, i, c, masks))
}

pub(crate) fn atom_at(obj: &CompiledObjective, term: &CompiledTerm, table: &SystemTable, i: usize, c: usize, masks: &[u64]) -> f64 {
    let a = &obj.atoms[i];
    let g = term.fault_groups.binary_search(&a.faults).expect("atom fault count is a group");
    table.value(a.kind, a.vertex, masks[g], c)
}

fn score(obj: &CompiledObjective, table: &SystemTable, n: usize, size: usize) -> (f64, Vec<SummandWitness>) {
    let mut total = 0.0;
    let mut witnesses = Vec::with_capacity(obj.summands.len());
    for s in &obj.summands {
        let mut best: Option<SummandWitness> = None;
        for (ti, term) in s.terms.iter().enumerate() {
            let combos = subset_combos(n, &term.fault_groups);
            for c in 0..size {
                for masks in &combos {
                    let v = term_value(obj, term, table, c, masks);
                    if best.as_ref().is_none_or(|b| v > b.value || (v.is_nan() && !b.value.is_nan())) {
                        best = Some(SummandWitness { value: v, term: ti, member: c, masks: masks.clone() });
                    }
                }
            }
        }
        let w = best.expect("nonempty summand");
        total += s.weight * w.value;
        witnesses.push(w);
    }
    (total, witnesses)
}

/// Coverage of every atom by every BSCC of the support digraph of a fully
/// randomized solution (the support of any softmax solution).
pub fn structural_coverage_check(
    env: &crate::Environment,
    spec: &SolutionSpec,
    obj: &CompiledObjective,
) -> Result<Vec<Vec<bool>>> {
    let layout = std::sync::Arc::new(crate::strategy::Layout::with_limit(env, spec, DEFAULT_STATE_LIMIT)?);
    let probs = (0..layout.state_count())
        .flat_map(|s| {
            let k = layout.range(s).len();
            std::iter::repeat_n(1.0 / k as f64, k)
        })
        .collect();
    let sol = Solution::new(layout, probs, 1e-9)?;
    let chain = ConfigChain::build(env, &sol, DEFAULT_STATE_LIMIT)?;
    let groups = atom_groups(obj);
    Ok(bsccs(&chain)
        .iter()
        .map(|b| {
            let unc = uncovered_atoms(&chain, b, obj, &groups);
            (0..obj.atoms.len()).map(|a| !unc.contains(&a)).collect()
        })
        .collect())
}

/// Long-run average of `term` over the stationary distribution of BSCC
/// `bscc`, with subset combinations weighted by `weights` (uniform when
/// `None`).
pub fn avg_term(ev: &Evaluation, bscc: usize, obj: &CompiledObjective, term: &CompiledTerm, weights: Option<&[f64]>) -> Result<f64> {
    let b = &ev.bsccs[bscc];
    if b.value.is_none() {
        return Err(Error::Invalid("BSCC does not cover the objective".into()));
    }
    let pi = stationary_distribution(&ev.chain, &b.members)?;
    let combos = subset_combos(ev.chain.agents(), &term.fault_groups);
    let uniform = vec![1.0 / combos.len() as f64; combos.len()];
    let w = weights.unwrap_or(&uniform);
    if w.len() != combos.len() {
        return Err(Error::Invalid(format!("expected {} subset weights", combos.len())));
    }
    let mut total = 0.0;
    for (c, p) in pi.iter().enumerate() {
        for (masks, wa) in combos.iter().zip(w) {
            total += p * wa * term_value(obj, term, &b.table, c, masks);
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Reporting

#[derive(Clone, Debug, Serialize)]
pub struct AtomReport {
    pub atom: String,
    pub value: f64,
    pub config: String,
    pub agents: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SummandReport {
    pub weight: f64,
    pub value: f64,
    pub term: String,
    pub config: String,
    /// One agent list per fault group of the term.
    pub agents: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BsccReport {
    pub index: usize,
    pub size: usize,
    pub first: String,
    pub value: Option<f64>,
    pub uncovered: Vec<String>,
    pub atoms: Vec<AtomReport>,
    pub summands: Vec<SummandReport>,
}

/// Headline metrics over the reported vertex set, on the chosen BSCC.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Metrics {
    pub vertices: Vec<String>,
    /// Worst expected visiting time with no faults.
    pub et_max: Option<f64>,
    /// Worst standard deviation of the visiting time with no faults.
    pub sqrt_vt_max: Option<f64>,
    /// Worst expected visiting time with one faulty agent.
    pub et_r_max: Option<f64>,
    /// Largest hitting time with positive probability (`None` if unbounded).
    pub visit_bound: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvaluationReport {
    pub objective: String,
    pub value: f64,
    pub states: usize,
    pub pruned: bool,
    pub chosen_bscc: usize,
    pub initial: String,
    pub metrics: Metrics,
    pub bsccs: Vec<BsccReport>,
}

/// Evaluates `chain` and builds the full report.
pub fn eval_objective(env: &Environment, chain: ConfigChain, obj: &CompiledObjective, opts: &EvalOptions) -> Result<EvaluationReport> {
    let ev = evaluate_chain(chain, obj, opts)?;
    report(env, &ev, obj, opts)
}

pub fn report(env: &Environment, ev: &Evaluation, obj: &CompiledObjective, opts: &EvalOptions) -> Result<EvaluationReport> {
    let chain = &ev.chain;
    let n = chain.agents();
    let label = |c: usize| chain.label(env, c);
    let mut bsccs = Vec::with_capacity(ev.bsccs.len());
    for (index, b) in ev.bsccs.iter().enumerate() {
        let mut atoms = Vec::new();
        let mut summands = Vec::new();
        if b.value.is_some() {
            for a in &obj.atoms {
                let mut best: Option<(f64, usize, u64)> = None;
                for mask in subsets(n, a.faults as usize) {
                    for c in 0..b.members.len() {
                        let v = b.table.value(a.kind, a.vertex, mask, c);
                        if best.is_none_or(|(x, _, _)| v > x) {
                            best = Some((v, c, mask));
                        }
                    }
                }
                let (value, c, mask) = best.expect("nonempty BSCC");
                atoms.push(AtomReport { atom: a.label(env), value, config: label(b.members[c]), agents: mask_agents(mask) });
            }
            for (s, w) in obj.summands.iter().zip(&b.witnesses) {
                summands.push(SummandReport {
                    weight: s.weight,
                    value: w.value,
                    term: s.terms[w.term].label.clone(),
                    config: label(b.members[w.member]),
                    agents: w.masks.iter().map(|&m| mask_agents(m)).collect(),
                });
            }
        }
        bsccs.push(BsccReport {
            index,
            size: b.members.len(),
            first: label(b.members[0]),
            value: b.value,
            uncovered: b.uncovered.iter().map(|&a| obj.atoms[a].label(env)).collect(),
            atoms,
            summands,
        });
    }
    Ok(EvaluationReport {
        objective: obj.source().to_string(),
        value: ev.value,
        states: chain.len(),
        pruned: ev.pruned,
        chosen_bscc: ev.best,
        initial: label(ev.initial()),
        metrics: metrics(env, ev, obj, opts)?,
        bsccs,
    })
}

/// Metrics on the chosen BSCC over the objective's vertices (all vertices
/// when the objective names none).
pub fn metrics(env: &Environment, ev: &Evaluation, obj: &CompiledObjective, opts: &EvalOptions) -> Result<Metrics> {
    let chain = &ev.chain;
    let b = ev.best_bscc();
    let n = chain.agents();
    let mut vertices = obj.vertices();
    if vertices.is_empty() {
        vertices = (0..env.len()).collect();
    }
    let local = local_index(chain, &b.members);
    let solve = |v: usize, mask: u64, second: bool| -> Result<Option<Moments>> {
        let target: Vec<bool> = b.members.iter().map(|&c| target_of(chain, c, v, mask)).collect();
        if !target.contains(&true) {
            return Ok(None);
        }
        if let Some(&k) = b.table.keys.get(&(v, mask)) {
            let m = &b.table.systems[k].2;
            if !second || m.s.is_some() {
                return Ok(Some(m.clone()));
            }
        }
        let r = Restricted::new(chain, &b.members, &local, &target);
        solve_moments(&r, second, opts.dense_limit).map(Some)
    };
    let all = subsets(n, 0)[0];
    let mut et_max = Some(0.0f64);
    let mut sd_max = Some(0.0f64);
    for &v in &vertices {
        match solve(v, all, true)? {
            Some(m) => {
                let s = m.s.as_ref().expect("second moments");
                for c in 0..m.e.len() {
                    et_max = et_max.map(|x| x.max(m.e[c]));
                    sd_max = sd_max.map(|x| x.max((s[c] - m.e[c] * m.e[c]).max(0.0).sqrt()));
                }
            }
            None => {
                et_max = None;
                sd_max = None;
            }
        }
    }
    let et_r_max = if n >= 2 {
        let mut acc = Some(0.0f64);
        for &v in &vertices {
            for mask in subsets(n, 1) {
                match solve(v, mask, false)? {
                    Some(m) => acc = acc.map(|x| m.e.iter().fold(x, |a, &e| a.max(e))),
                    None => acc = None,
                }
            }
        }
        acc
    } else {
        None
    };
    let mut visit_bound = Some(0usize);
    for &v in &vertices {
        let bound = hitting_support(chain, &b.members, &local, |c| target_of(chain, c, v, all));
        visit_bound = match (visit_bound, bound) {
            (Some(a), Some(x)) => Some(a.max(x)),
            _ => None,
        };
    }
    Ok(Metrics {
        vertices: vertices.iter().map(|&v| env.name(v).to_string()).collect(),
        et_max,
        sqrt_vt_max: sd_max,
        et_r_max,
        visit_bound,
    })
}

/// Largest number of steps after which the target is hit with positive
/// probability, over all members; `None` when a target-avoiding cycle exists.
fn hitting_support(chain: &ConfigChain, members: &[usize], local: &[u32], target: impl Fn(usize) -> bool) -> Option<usize> {
    const OPEN: usize = usize::MAX - 1;
    const NEW: usize = usize::MAX;
    let mut depth = vec![NEW; members.len()];
    for (i, &c) in members.iter().enumerate() {
        if target(c) {
            depth[i] = 0;
        }
    }
    if !depth.contains(&0) {
        return None;
    }
    let mut worst = 0;
    for start in 0..members.len() {
        if depth[start] != NEW {
            worst = worst.max(depth[start]);
            continue;
        }
        // iterative DFS computing 1 + max over successors
        let mut stack = vec![(start, 0usize)];
        depth[start] = OPEN;
        while let Some(&mut (i, ref mut k)) = stack.last_mut() {
            let row = chain.row_range(members[i]);
            if *k < row.len() {
                let j = local[chain.col(row.start + *k)] as usize;
                *k += 1;
                match depth[j] {
                    OPEN => return None,
                    NEW => {
                        depth[j] = OPEN;
                        stack.push((j, 0));
                    }
                    _ => {}
                }
                continue;
            }
            let d = 1 + chain.row_range(members[i]).map(|e| depth[local[chain.col(e)] as usize]).max().unwrap_or(0);
            depth[i] = d;
            worst = worst.max(d);
            stack.pop();
        }
    }
    Some(worst)
}
