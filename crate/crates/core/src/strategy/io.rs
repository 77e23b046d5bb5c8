//! JSON strategy files.
//!
//! ```json
//! {
//!   "mode": "coordinated", "n": 2, "memory": 1,
//!   "states": [{"state": "A,C/0", "moves": [{"action": "B,D/0", "prob": 1.0}]}],
//!   "initial": "A,C/0",
//!   "unlisted": "uniform"
//! }
//! ```
//!
//! Autonomous states are written `agent:vertex/memory` (`0:A/1`) with actions
//! `vertex/memory`; autonomous memory is a list with one size per agent and
//! the initial configuration reads `A/0,D/1`. Coordinated states and actions
//! list every agent's vertex followed by the shared memory (`A,C/0`).

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{Error, Result};

use super::chain::format_configuration;
use super::{Configuration, Layout, Mode, Solution, SolutionSpec};

/// Tolerance on the sum of each distribution read from a file.
pub const FILE_SUM_TOL: f64 = 1e-9;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategyFile {
    mode: Mode,
    n: usize,
    memory: MemoryField,
    states: Vec<StateEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unlisted: Option<Unlisted>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MemoryField {
    Shared(usize),
    PerAgent(Vec<usize>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateEntry {
    state: String,
    moves: Vec<Move>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Move {
    action: String,
    prob: f64,
}

/// What to do with decision states the file does not mention.
#[derive(Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Unlisted {
    Error,
    Uniform,
}

/// Writes every decision state, omitting zero-probability moves.
pub fn serialize_solution(env: &Environment, sol: &Solution) -> Result<String> {
    let layout = sol.layout();
    let spec = layout.spec();
    let memory = match spec.mode() {
        Mode::Coordinated => MemoryField::Shared(spec.memory()[0]),
        Mode::Autonomous => MemoryField::PerAgent(spec.memory().to_vec()),
    };
    let mut states = Vec::with_capacity(layout.state_count());
    for (state, label) in state_labels(env, layout) {
        let moves = sol
            .dist(state)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(a, &prob)| Move { action: action_label(env, layout, state, a), prob })
            .collect();
        states.push(StateEntry { state: label, moves });
    }
    let file = StrategyFile {
        mode: spec.mode(),
        n: spec.agents(),
        memory,
        states,
        initial: sol.initial.map(|c| format_configuration(env, spec.mode(), &layout.decode(c))),
        unlisted: None,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Parses a strategy file against `env`. Probabilities are taken as written,
/// without renormalization.
pub fn parse_solution(env: &Environment, text: &str) -> Result<Solution> {
    let file: StrategyFile = serde_json::from_str(text)?;
    let memory = match (file.mode, file.memory) {
        (Mode::Coordinated, MemoryField::Shared(m)) => vec![m],
        (Mode::Autonomous, MemoryField::Shared(m)) => vec![m; file.n],
        (_, MemoryField::PerAgent(v)) => v,
    };
    let spec = SolutionSpec::new(file.mode, file.n, memory)?;
    let layout = Arc::new(Layout::new(env, &spec)?);

    let mut probs = vec![0.0; layout.len()];
    let mut seen = vec![false; layout.state_count()];
    for entry in &file.states {
        let state = parse_state(env, &layout, &entry.state)?;
        if std::mem::replace(&mut seen[state], true) {
            return Err(Error::Strategy(format!("state {} listed twice", entry.state)));
        }
        let base = layout.range(state).start;
        let mut actions = HashSet::new();
        let mut total = 0.0;
        for mv in &entry.moves {
            if !(0.0..=1.0).contains(&mv.prob) {
                return Err(Error::Strategy(format!(
                    "state {}: probability {} outside [0, 1]",
                    entry.state, mv.prob
                )));
            }
            let a = parse_action(env, &layout, state, &mv.action).ok_or_else(|| {
                Error::Strategy(format!("state {}: illegal move {}", entry.state, mv.action))
            })?;
            if !actions.insert(a) {
                return Err(Error::Strategy(format!("state {}: move {} listed twice", entry.state, mv.action)));
            }
            probs[base + a] = mv.prob;
            total += mv.prob;
        }
        if (total - 1.0).abs() > FILE_SUM_TOL {
            return Err(Error::Strategy(format!("state {}: probabilities sum to {total}", entry.state)));
        }
    }
    let uniform = file.unlisted == Some(Unlisted::Uniform);
    for (state, label) in state_labels(env, &layout) {
        if seen[state] {
            continue;
        }
        if !uniform {
            return Err(Error::Strategy(format!("state {label} is missing")));
        }
        let r = layout.range(state);
        let p = 1.0 / r.len() as f64;
        probs[r].iter_mut().for_each(|x| *x = p);
    }

    let mut sol = Solution::new(layout.clone(), probs, FILE_SUM_TOL)?;
    if let Some(init) = &file.initial {
        let cfg = parse_configuration(env, &layout, init)
            .ok_or_else(|| Error::Strategy(format!("bad initial configuration {init:?}")))?;
        sol.initial = Some(layout.encode(&cfg)?);
    }
    Ok(sol)
}

/// Label of every decision state in layout order.
fn state_labels(env: &Environment, layout: &Layout) -> Vec<(usize, String)> {
    let spec = layout.spec();
    match spec.mode() {
        Mode::Coordinated => (0..layout.config_count())
            .map(|c| (c, format_configuration(env, Mode::Coordinated, &layout.decode(c))))
            .collect(),
        Mode::Autonomous => {
            let mut out = Vec::with_capacity(layout.state_count());
            for (i, &mi) in spec.memory().iter().enumerate() {
                for s in 0..layout.agent_states(i) {
                    out.push((layout.agent_state(i, s), format!("{i}:{}/{}", env.name(s / mi), s % mi)));
                }
            }
            out
        }
    }
}

fn action_label(env: &Environment, layout: &Layout, state: usize, a: usize) -> String {
    match layout.spec().mode() {
        Mode::Coordinated => {
            let target = layout.decode(layout.coordinated_action_target(state, a));
            format_configuration(env, Mode::Coordinated, &target)
        }
        Mode::Autonomous => {
            let (agent, s) = locate_agent_state(layout, state);
            let mi = layout.spec().memory()[agent];
            let t = layout.agent_action_target(agent, s, a);
            format!("{}/{}", env.name(t / mi), t % mi)
        }
    }
}

fn locate_agent_state(layout: &Layout, state: usize) -> (usize, usize) {
    let mut rest = state;
    for i in 0..layout.spec().agents() {
        let count = layout.agent_states(i);
        if rest < count {
            return (i, rest);
        }
        rest -= count;
    }
    unreachable!("state index out of range")
}

fn split_memory(s: &str) -> Option<(&str, usize)> {
    let (head, m) = s.trim().rsplit_once('/')?;
    Some((head.trim(), m.trim().parse().ok()?))
}

fn parse_vertices(env: &Environment, s: &str) -> Option<Vec<usize>> {
    s.split(',').map(|name| env.vertex(name.trim())).collect()
}

fn parse_state(env: &Environment, layout: &Layout, s: &str) -> Result<usize> {
    let bad = || Error::Strategy(format!("bad state id {s:?}"));
    let spec = layout.spec();
    match spec.mode() {
        Mode::Coordinated => {
            let (head, m) = split_memory(s).ok_or_else(bad)?;
            let vertices = parse_vertices(env, head).ok_or_else(bad)?;
            layout.encode(&Configuration { vertices, memory: vec![m] }).map_err(|_| bad())
        }
        Mode::Autonomous => {
            let (agent, rest) = s.split_once(':').ok_or_else(bad)?;
            let agent: usize = agent.trim().parse().map_err(|_| bad())?;
            let (name, m) = split_memory(rest).ok_or_else(bad)?;
            let v = env.vertex(name).ok_or_else(bad)?;
            if agent >= spec.agents() || m >= spec.memory()[agent] {
                return Err(bad());
            }
            Ok(layout.agent_state(agent, v * spec.memory()[agent] + m))
        }
    }
}

fn parse_action(env: &Environment, layout: &Layout, state: usize, s: &str) -> Option<usize> {
    let (head, m) = split_memory(s)?;
    match layout.spec().mode() {
        Mode::Coordinated => layout.coordinated_action(state, &parse_vertices(env, head)?, m),
        Mode::Autonomous => {
            let (agent, local) = locate_agent_state(layout, state);
            layout.agent_action(agent, local, env.vertex(head)?, m)
        }
    }
}

/// Parses a configuration label such as `A,C/0` or `A/0,D/1`.
pub fn parse_configuration(env: &Environment, layout: &Layout, s: &str) -> Option<Configuration> {
    match layout.spec().mode() {
        Mode::Coordinated => {
            let (head, m) = split_memory(s)?;
            Some(Configuration { vertices: parse_vertices(env, head)?, memory: vec![m] })
        }
        Mode::Autonomous => {
            let mut vertices = Vec::new();
            let mut memory = Vec::new();
            for part in s.split(',') {
                let (name, m) = split_memory(part)?;
                vertices.push(env.vertex(name)?);
                memory.push(m);
            }
            Some(Configuration { vertices, memory })
        }
    }
}
