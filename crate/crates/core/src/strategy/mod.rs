//! Solutions (autonomous strategy profiles or coordinated strategies), their
//! logit parameterization, and the induced Markov chain over configurations.

mod chain;
mod io;
mod layout;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chain::{build_chain, ConfigChain, DEFAULT_STATE_LIMIT};
pub use io::{parse_solution, serialize_solution};
pub use layout::{Configuration, Layout};
pub use params::{init_params, to_solution, ParamSet, Solution, LOGIT_BOUND};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Autonomous,
    Coordinated,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autonomous" => Ok(Mode::Autonomous),
            "coordinated" => Ok(Mode::Coordinated),
            _ => Err(Error::Spec(format!("unknown mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Autonomous => "autonomous",
            Mode::Coordinated => "coordinated",
        })
    }
}

/// Shape of a solution: mode, agent count and memory sizes.
///
/// Autonomous solutions carry one memory size per agent; coordinated ones a
/// single shared memory size.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SolutionSpec {
    mode: Mode,
    agents: usize,
    memory: Vec<usize>,
}

impl SolutionSpec {
    pub fn new(mode: Mode, agents: usize, memory: Vec<usize>) -> Result<Self> {
        if agents == 0 {
            return Err(Error::Spec("at least one agent is required".into()));
        }
        let want = match mode {
            Mode::Autonomous => agents,
            Mode::Coordinated => 1,
        };
        if memory.len() != want {
            return Err(Error::Spec(format!("{mode} spec with {agents} agents needs {want} memory sizes")));
        }
        if memory.contains(&0) {
            return Err(Error::Spec("memory sizes must be at least 1".into()));
        }
        Ok(Self { mode, agents, memory })
    }

    /// Per-agent memory sizes.
    ///
    /// # Panics
    /// If `memory` is empty or contains a zero.
    pub fn autonomous(memory: Vec<usize>) -> Self {
        Self::new(Mode::Autonomous, memory.len(), memory).expect("valid autonomous spec")
    }

    /// # Panics
    /// If `agents` or `memory` is zero.
    pub fn coordinated(agents: usize, memory: usize) -> Self {
        Self::new(Mode::Coordinated, agents, vec![memory]).expect("valid coordinated spec")
    }

    /// Convenience constructor using the same memory size for every agent.
    pub fn uniform(mode: Mode, agents: usize, memory: usize) -> Result<Self> {
        match mode {
            Mode::Autonomous => Self::new(mode, agents, vec![memory; agents]),
            Mode::Coordinated => Self::new(mode, agents, vec![memory]),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    /// Memory sizes: one per agent (autonomous) or one shared (coordinated).
    pub fn memory(&self) -> &[usize] {
        &self.memory
    }

    /// Number of joint configurations for `vertices` locations.
    pub fn config_count(&self, vertices: usize) -> Option<usize> {
        match self.mode {
            Mode::Autonomous => self
                .memory
                .iter()
                .try_fold(1usize, |acc, &m| acc.checked_mul(vertices.checked_mul(m)?)),
            Mode::Coordinated => (0..self.agents)
                .try_fold(1usize, |acc, _| acc.checked_mul(vertices))?
                .checked_mul(self.memory[0]),
        }
    }
}
