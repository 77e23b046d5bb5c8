use std::sync::Arc;

use crate::environment::Environment;
use crate::error::{Error, Result};

use super::{Configuration, Layout, Mode, Solution};

/// Default cap on the number of configurations.
pub const DEFAULT_STATE_LIMIT: usize = 1_000_000;

/// Markov chain over configurations induced by a solution, stored as a
/// sparse row-stochastic matrix holding only strictly positive entries.
///
/// Each entry remembers which actions produced it: one action index for
/// coordinated solutions, one per agent for autonomous ones.
#[derive(Clone, Debug)]
pub struct ConfigChain {
    solution: Solution,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    origin: Vec<u32>,
    positions: Vec<u32>,
}

/// Builds the configuration chain of `sol` with the default state limit.
pub fn build_chain(env: &Environment, sol: &Solution) -> Result<ConfigChain> {
    ConfigChain::build(env, sol, DEFAULT_STATE_LIMIT)
}

impl ConfigChain {
    pub fn build(env: &Environment, sol: &Solution, limit: usize) -> Result<Self> {
        let layout = sol.layout().clone();
        if layout.vertex_count() != env.len() {
            return Err(Error::Invalid("solution does not match the environment".into()));
        }
        let states = layout.config_count();
        if states > limit {
            return Err(Error::TooManyStates { states, limit });
        }
        if states > u32::MAX as usize {
            return Err(Error::TooManyStates { states, limit: u32::MAX as usize });
        }
        let n = layout.spec().agents();
        let mut chain = ConfigChain {
            solution: sol.clone(),
            row_ptr: Vec::with_capacity(states + 1),
            cols: Vec::new(),
            vals: Vec::new(),
            origin: Vec::new(),
            positions: Vec::with_capacity(states * n),
        };
        chain.row_ptr.push(0);
        for c in 0..states {
            let cfg = layout.decode(c);
            chain.positions.extend(cfg.vertices.iter().map(|&v| v as u32));
        }
        match layout.spec().mode() {
            Mode::Coordinated => chain.fill_coordinated(&layout),
            Mode::Autonomous => chain.fill_autonomous(&layout),
        }
        Ok(chain)
    }

    fn fill_coordinated(&mut self, layout: &Layout) {
        for c in 0..layout.config_count() {
            let dist = self.solution.dist(c);
            for (a, &p) in dist.iter().enumerate() {
                if p > 0.0 {
                    self.cols.push(layout.coordinated_action_target(c, a) as u32);
                    self.vals.push(p);
                    self.origin.push(a as u32);
                }
            }
            self.row_ptr.push(self.cols.len());
        }
    }

    fn fill_autonomous(&mut self, layout: &Layout) {
        let n = layout.spec().agents();
        let strides: Vec<usize> = (0..n).map(|i| layout.agent_stride(i)).collect();
        let mut local = vec![0; n];
        // per agent: (action, target local state, probability) with p > 0
        let mut moves: Vec<Vec<(u32, usize, f64)>> = vec![Vec::new(); n];
        let mut digit = vec![0usize; n];
        for c in 0..layout.config_count() {
            layout.agent_states_of(c, &mut local);
            for i in 0..n {
                moves[i].clear();
                let d = self.solution.dist(layout.agent_state(i, local[i]));
                for (a, &p) in d.iter().enumerate() {
                    if p > 0.0 {
                        moves[i].push((a as u32, layout.agent_action_target(i, local[i], a), p));
                    }
                }
            }
            digit.iter_mut().for_each(|d| *d = 0);
            'product: loop {
                let mut target = 0;
                let mut prob = 1.0;
                for i in 0..n {
                    let (a, t, p) = moves[i][digit[i]];
                    target += t * strides[i];
                    prob *= p;
                    self.origin.push(a);
                }
                self.cols.push(target as u32);
                self.vals.push(prob);
                for i in (0..n).rev() {
                    digit[i] += 1;
                    if digit[i] < moves[i].len() {
                        continue 'product;
                    }
                    digit[i] = 0;
                }
                break;
            }
            self.row_ptr.push(self.cols.len());
        }
    }

    pub fn solution(&self) -> &Solution {
        &self.solution
    }

    pub fn layout(&self) -> &Arc<Layout> {
        self.solution.layout()
    }

    pub fn len(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn agents(&self) -> usize {
        self.layout().spec().agents()
    }

    /// Entry range of row `c`; use with [`col`](Self::col) and [`prob`](Self::prob).
    pub fn row_range(&self, c: usize) -> std::ops::Range<usize> {
        self.row_ptr[c]..self.row_ptr[c + 1]
    }

    pub fn col(&self, e: usize) -> usize {
        self.cols[e] as usize
    }

    pub fn prob(&self, e: usize) -> f64 {
        self.vals[e]
    }

    pub fn row(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_range(c).map(move |e| (self.cols[e] as usize, self.vals[e]))
    }

    pub fn successors(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.cols[self.row_range(c)].iter().map(|&d| d as usize)
    }

    /// Actions that produced entry `e`: one index (coordinated) or one per agent.
    pub fn origin(&self, e: usize) -> &[u32] {
        let w = match self.layout().spec().mode() {
            Mode::Coordinated => 1,
            Mode::Autonomous => self.agents(),
        };
        &self.origin[e * w..(e + 1) * w]
    }

    /// Vertex of `agent` in configuration `c`.
    pub fn position(&self, c: usize, agent: usize) -> usize {
        self.positions[c * self.agents() + agent] as usize
    }

    pub fn positions(&self, c: usize) -> &[u32] {
        let n = self.agents();
        &self.positions[c * n..(c + 1) * n]
    }

    pub fn configuration(&self, c: usize) -> Configuration {
        self.layout().decode(c)
    }

    /// Human-readable configuration label, e.g. `A,C/0` (coordinated) or
    /// `A/0,D/1` (autonomous).
    pub fn label(&self, env: &Environment, c: usize) -> String {
        format_configuration(env, self.layout().spec().mode(), &self.configuration(c))
    }

    /// Largest deviation of a row sum from 1.
    pub fn max_row_error(&self) -> f64 {
        (0..self.len())
            .map(|c| (self.row(c).map(|(_, p)| p).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn format_configuration(env: &Environment, mode: Mode, cfg: &Configuration) -> String {
    match mode {
        Mode::Coordinated => {
            let names: Vec<&str> = cfg.vertices.iter().map(|&v| env.name(v)).collect();
            format!("{}/{}", names.join(","), cfg.memory[0])
        }
        Mode::Autonomous => cfg
            .vertices
            .iter()
            .zip(&cfg.memory)
            .map(|(&v, m)| format!("{}/{m}", env.name(v)))
            .collect::<Vec<_>>()
            .join(","),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::gen_path;
    use crate::strategy::{init_params, to_solution, SolutionSpec};
    use proptest::prelude::*;

    #[test]
    fn deterministic_two_cycle_is_a_permutation() {
        let env = Environment::parse("vertex A\nvertex B\nundirected A B").unwrap();
        let sol = to_solution(&init_params(&env, &SolutionSpec::autonomous(vec![1]), 0).unwrap());
        let chain = build_chain(&env, &sol).unwrap();
        assert_eq!(chain.len(), 2);
        assert_eq!(chain.row(0).collect::<Vec<_>>(), vec![(1, 1.0)]);
        assert_eq!(chain.row(1).collect::<Vec<_>>(), vec![(0, 1.0)]);
    }

    #[test]
    fn state_counts() {
        let env = gen_path(5).unwrap();
        let sol = to_solution(&init_params(&env, &SolutionSpec::autonomous(vec![3, 3]), 0).unwrap());
        let chain = build_chain(&env, &sol).unwrap();
        assert_eq!(chain.len(), 225);
        assert!(chain.max_row_error() < 1e-10);
        let sol = to_solution(&init_params(&env, &SolutionSpec::coordinated(2, 3), 0).unwrap());
        let chain = build_chain(&env, &sol).unwrap();
        assert_eq!(chain.len(), 75);
        assert!(chain.max_row_error() < 1e-10);
        assert!(matches!(
            ConfigChain::build(&env, &sol, 10),
            Err(Error::TooManyStates { states: 75, limit: 10 })
        ));
    }

    #[test]
    fn labels() {
        let env = gen_path(5).unwrap();
        let sol = to_solution(&init_params(&env, &SolutionSpec::coordinated(2, 3), 0).unwrap());
        let chain = build_chain(&env, &sol).unwrap();
        let c = chain.layout().encode(&Configuration { vertices: vec![0, 2], memory: vec![1] }).unwrap();
        assert_eq!(chain.label(&env, c), "A,C/1");
        assert_eq!((chain.position(c, 0), chain.position(c, 1)), (0, 2));
    }

    proptest! {
        #[test]
        fn autonomous_entries_factorize(seed in 0u64..200, m0 in 1usize..3, m1 in 1usize..3) {
            let env = gen_path(4).unwrap();
            let spec = SolutionSpec::autonomous(vec![m0, m1]);
            let sol = to_solution(&init_params(&env, &spec, seed).unwrap());
            let chain = build_chain(&env, &sol).unwrap();
            let layout = chain.layout().clone();
            prop_assert!(chain.max_row_error() < 1e-10);
            let mut local = [0usize; 2];
            for c in 0..chain.len() {
                layout.agent_states_of(c, &mut local);
                let to_cfg = |d: usize| layout.decode(d);
                for e in chain.row_range(c) {
                    let d = to_cfg(chain.col(e));
                    let mut direct = 1.0;
                    for i in 0..2 {
                        let a = layout.agent_action(i, local[i], d.vertices[i], d.memory[i]).unwrap();
                        direct *= sol.dist(layout.agent_state(i, local[i]))[a];
                    }
                    prop_assert!((direct - chain.prob(e)).abs() < 1e-12);
                    prop_assert!(chain.prob(e) > 0.0);
                }
            }
        }
    }
}
