use crate::environment::Environment;
use crate::error::{Error, Result};

use super::{Mode, SolutionSpec};

/// Joint position and memory of all agents.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub vertices: Vec<usize>,
    /// One entry per agent (autonomous) or a single shared entry (coordinated).
    pub memory: Vec<usize>,
}

/// Parameter layout shared by logits, probabilities and gradients: one
/// contiguous block per decision state, one entry per admissible action.
///
/// Decision states are `(agent, v, m)` in agent-major, vertex, memory order
/// for autonomous solutions, and configurations in index order for
/// coordinated ones. Actions enumerate successors in declaration order with
/// the memory update varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    spec: SolutionSpec,
    succ: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    agent_base: Vec<usize>,
    configs: usize,
}

impl Layout {
    pub fn new(env: &Environment, spec: &SolutionSpec) -> Result<Self> {
        Self::with_limit(env, spec, usize::MAX)
    }

    pub fn with_limit(env: &Environment, spec: &SolutionSpec, limit: usize) -> Result<Self> {
        let nv = env.len();
        let configs = spec
            .config_count(nv)
            .ok_or(Error::TooManyStates { states: usize::MAX, limit })?;
        if configs > limit {
            return Err(Error::TooManyStates { states: configs, limit });
        }
        let succ: Vec<Vec<usize>> = (0..nv).map(|v| env.successors(v).to_vec()).collect();
        let mut offsets = vec![0];
        let mut agent_base = Vec::new();
        match spec.mode() {
            Mode::Autonomous => {
                for &m in spec.memory() {
                    agent_base.push(offsets.len() - 1);
                    for row in &succ {
                        for _ in 0..m {
                            let last = *offsets.last().unwrap();
                            offsets.push(last + row.len() * m);
                        }
                    }
                }
            }
            Mode::Coordinated => {
                let mem = spec.memory()[0];
                let mut layout = Self { spec: spec.clone(), succ, offsets: vec![], agent_base, configs };
                offsets.reserve(configs);
                let mut pos = vec![0; spec.agents()];
                for c in 0..configs {
                    layout.decode_coordinated(c, &mut pos);
                    let count: usize = pos.iter().map(|&v| layout.succ[v].len()).product::<usize>() * mem;
                    let last = *offsets.last().unwrap();
                    offsets.push(last + count);
                }
                layout.offsets = offsets;
                return Ok(layout);
            }
        }
        Ok(Self { spec: spec.clone(), succ, offsets, agent_base, configs })
    }

    pub fn spec(&self) -> &SolutionSpec {
        &self.spec
    }

    pub fn vertex_count(&self) -> usize {
        self.succ.len()
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.succ[v]
    }

    /// Total number of parameters.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn config_count(&self) -> usize {
        self.configs
    }

    pub fn range(&self, state: usize) -> std::ops::Range<usize> {
        self.offsets[state]..self.offsets[state + 1]
    }

    /// Decision state of autonomous agent `agent` at local state `s = v * m_i + m`.
    pub fn agent_state(&self, agent: usize, s: usize) -> usize {
        self.agent_base[agent] + s
    }

    /// Number of local states `|V| * m_i` of an autonomous agent.
    pub fn agent_states(&self, agent: usize) -> usize {
        self.succ.len() * self.spec.memory()[agent]
    }

    fn decode_coordinated(&self, mut c: usize, pos: &mut [usize]) -> usize {
        let nv = self.succ.len();
        let mem = self.spec.memory()[0];
        let m = c % mem;
        c /= mem;
        for slot in pos.iter_mut().rev() {
            *slot = c % nv;
            c /= nv;
        }
        m
    }

    pub fn encode(&self, cfg: &Configuration) -> Result<usize> {
        let nv = self.succ.len();
        let n = self.spec.agents();
        if cfg.vertices.len() != n || cfg.vertices.iter().any(|&v| v >= nv) {
            return Err(Error::Invalid(format!("bad configuration vertices {:?}", cfg.vertices)));
        }
        match self.spec.mode() {
            Mode::Coordinated => {
                let mem = self.spec.memory()[0];
                match cfg.memory.as_slice() {
                    [m] if *m < mem => {
                        Ok(cfg.vertices.iter().fold(0, |acc, &v| acc * nv + v) * mem + m)
                    }
                    _ => Err(Error::Invalid(format!("bad shared memory {:?}", cfg.memory))),
                }
            }
            Mode::Autonomous => {
                if cfg.memory.len() != n {
                    return Err(Error::Invalid(format!("bad memory {:?}", cfg.memory)));
                }
                let mut idx = 0;
                for i in 0..n {
                    let mi = self.spec.memory()[i];
                    if cfg.memory[i] >= mi {
                        return Err(Error::Invalid(format!("memory {} out of range for agent {i}", cfg.memory[i])));
                    }
                    idx = idx * nv * mi + cfg.vertices[i] * mi + cfg.memory[i];
                }
                Ok(idx)
            }
        }
    }

    pub fn decode(&self, c: usize) -> Configuration {
        let n = self.spec.agents();
        match self.spec.mode() {
            Mode::Coordinated => {
                let mut vertices = vec![0; n];
                let m = self.decode_coordinated(c, &mut vertices);
                Configuration { vertices, memory: vec![m] }
            }
            Mode::Autonomous => {
                let mut vertices = vec![0; n];
                let mut memory = vec![0; n];
                let mut rest = c;
                for i in (0..n).rev() {
                    let mi = self.spec.memory()[i];
                    let s = rest % (self.succ.len() * mi);
                    rest /= self.succ.len() * mi;
                    vertices[i] = s / mi;
                    memory[i] = s % mi;
                }
                Configuration { vertices, memory }
            }
        }
    }

    /// Autonomous local state of each agent in configuration `c`.
    pub fn agent_states_of(&self, c: usize, out: &mut [usize]) {
        let mut rest = c;
        for i in (0..out.len()).rev() {
            let si = self.agent_states(i);
            out[i] = rest % si;
            rest /= si;
        }
    }

    /// Stride of agent `i`'s local state inside an autonomous configuration index.
    pub fn agent_stride(&self, agent: usize) -> usize {
        (agent + 1..self.spec.agents()).map(|j| self.agent_states(j)).product()
    }

    /// Target of action `a` taken by autonomous agent `agent` in local state
    /// `s`, as a local state.
    pub fn agent_action_target(&self, agent: usize, s: usize, a: usize) -> usize {
        let mi = self.spec.memory()[agent];
        let v = s / mi;
        let w = self.succ[v][a / mi];
        w * mi + a % mi
    }

    /// Target configuration of coordinated action `a` from configuration `c`.
    pub fn coordinated_action_target(&self, c: usize, a: usize) -> usize {
        let nv = self.succ.len();
        let mem = self.spec.memory()[0];
        let n = self.spec.agents();
        let mut pos = vec![0; n];
        self.decode_coordinated(c, &mut pos);
        let m_next = a % mem;
        let mut rest = a / mem;
        let mut target = vec![0; n];
        for i in (0..n).rev() {
            let row = &self.succ[pos[i]];
            target[i] = row[rest % row.len()];
            rest /= row.len();
        }
        target.iter().fold(0, |acc, &v| acc * nv + v) * mem + m_next
    }

    /// Action index of the coordinated move from `c` to target vertices `to`
    /// with memory `m_next`, if every move follows an edge.
    pub fn coordinated_action(&self, c: usize, to: &[usize], m_next: usize) -> Option<usize> {
        let mem = self.spec.memory()[0];
        if m_next >= mem || to.len() != self.spec.agents() {
            return None;
        }
        let from = self.decode(c).vertices;
        let mut a = 0;
        for (i, &w) in to.iter().enumerate() {
            let row = &self.succ[from[i]];
            a = a * row.len() + row.binary_search(&w).ok()?;
        }
        Some(a * mem + m_next)
    }

    /// Action index of the autonomous move from local state `s` to vertex `w`
    /// with memory `m_next`.
    pub fn agent_action(&self, agent: usize, s: usize, w: usize, m_next: usize) -> Option<usize> {
        let mi = self.spec.memory()[agent];
        if m_next >= mi {
            return None;
        }
        let k = self.succ[s / mi].binary_search(&w).ok()?;
        Some(k * mi + m_next)
    }
}
