//! Deterministic baselines: agents repeating fixed closed walks.
//!
//! A closed walk `w_0 w_1 ... w_{L-1}` (returning to `w_0` after `w_{L-1}`)
//! becomes a deterministic autonomous controller whose memory counts how many
//! times the current vertex already occurred earlier in the walk.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::strategy::{Configuration, Layout, Solution, SolutionSpec};

/// Occurrence index of every walk position and the memory size it needs.
fn occurrences(walk: &[usize], nv: usize) -> (Vec<usize>, usize) {
    let mut seen = vec![0usize; nv];
    let occ: Vec<usize> = walk
        .iter()
        .map(|&v| {
            seen[v] += 1;
            seen[v] - 1
        })
        .collect();
    (occ, seen.into_iter().max().unwrap_or(1).max(1))
}

/// Autonomous deterministic profile in which agent `i` repeats `walks[i]`,
/// starting at position `starts[i]`. The returned solution pins that initial
/// configuration. States never visited by the walk move to their first
/// successor.
pub fn walk_profile(env: &Environment, walks: &[Vec<usize>], starts: &[usize]) -> Result<Solution> {
    if walks.is_empty() || walks.len() != starts.len() {
        return Err(Error::Invalid("need one start position per walk".into()));
    }
    let nv = env.len();
    let mut occ = Vec::with_capacity(walks.len());
    let mut memory = Vec::with_capacity(walks.len());
    for (i, w) in walks.iter().enumerate() {
        if w.is_empty() {
            return Err(Error::Invalid(format!("walk {i} is empty")));
        }
        if starts[i] >= w.len() {
            return Err(Error::Invalid(format!("start {} outside walk {i}", starts[i])));
        }
        for k in 0..w.len() {
            let (a, b) = (w[k], w[(k + 1) % w.len()]);
            if a >= nv || b >= nv || !env.has_edge(a, b) {
                return Err(Error::Invalid(format!("walk {i} is not a closed walk at step {k}")));
            }
        }
        let (o, m) = occurrences(w, nv);
        occ.push(o);
        memory.push(m);
    }
    let spec = SolutionSpec::autonomous(memory.clone());
    let layout = Arc::new(Layout::new(env, &spec)?);
    let mut probs = vec![0.0; layout.len()];
    for (i, w) in walks.iter().enumerate() {
        let mi = memory[i];
        let mut chosen = vec![None; nv * mi];
        for k in 0..w.len() {
            let next = (k + 1) % w.len();
            let s = w[k] * mi + occ[i][k];
            chosen[s] = layout.agent_action(i, s, w[next], occ[i][next]);
        }
        for (s, a) in chosen.into_iter().enumerate() {
            let range = layout.range(layout.agent_state(i, s));
            probs[range.start + a.unwrap_or(0)] = 1.0;
        }
    }
    let mut sol = Solution::new(layout.clone(), probs, 0.0)?;
    let cfg = Configuration {
        vertices: walks.iter().zip(starts).map(|(w, &k)| w[k]).collect(),
        memory: occ.iter().zip(starts).map(|(o, &k)| o[k]).collect(),
    };
    sol.initial = Some(layout.encode(&cfg)?);
    Ok(sol)
}

/// Breadth-first shortest path from `a` to `b`, both endpoints included.
/// Ties prefer lower-indexed successors.
pub fn shortest_path(env: &Environment, a: usize, b: usize) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; env.len()];
    prev[a] = a;
    let mut queue = VecDeque::from([a]);
    while let Some(v) = queue.pop_front() {
        if v == b {
            let mut path = vec![b];
            let mut x = b;
            while x != a {
                x = prev[x];
                path.push(x);
            }
            path.reverse();
            return Some(path);
        }
        for &w in env.successors(v) {
            if prev[w] == usize::MAX {
                prev[w] = v;
                queue.push_back(w);
            }
        }
    }
    None
}

/// Closed walk through `stops` in order (and back to the first stop) along
/// shortest paths. The last vertex of the result is adjacent to the first.
pub fn closed_tour(env: &Environment, stops: &[usize]) -> Result<Vec<usize>> {
    if stops.is_empty() {
        return Err(Error::Invalid("tour needs at least one stop".into()));
    }
    if stops.len() == 1 {
        let v = stops[0];
        let w = *env.successors(v).first().expect("every vertex has a successor");
        let back = shortest_path(env, w, v).ok_or_else(|| Error::Graph("graph is not strongly connected".into()))?;
        let mut tour = vec![v];
        tour.extend_from_slice(&back[..back.len() - 1]);
        return Ok(tour);
    }
    let mut tour = Vec::new();
    for k in 0..stops.len() {
        let (a, b) = (stops[k], stops[(k + 1) % stops.len()]);
        let p = shortest_path(env, a, b).ok_or_else(|| Error::Graph("graph is not strongly connected".into()))?;
        tour.extend_from_slice(&p[..p.len() - 1]);
    }
    Ok(tour)
}

/// Resolves whitespace-separated vertex names.
pub fn parse_walk(env: &Environment, text: &str) -> Result<Vec<usize>> {
    text.split_whitespace()
        .map(|n| env.vertex(n).ok_or_else(|| Error::Graph(format!("unknown vertex {n}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{gen_grid, gen_path};
    use crate::evaluator::{evaluate, EvalOptions};
    use crate::objective::{compile, Objective};

    #[test]
    fn sweep_on_p3_needs_two_memory_cells() {
        let env = gen_path(3).unwrap();
        let walk = parse_walk(&env, "A B C B").unwrap();
        let sol = walk_profile(&env, &[walk], &[0]).unwrap();
        assert_eq!(sol.spec().memory(), &[2]);
        assert!(sol.is_deterministic());
        let ast: Objective = "max{ET(v,0) for v in V}".parse().unwrap();
        let obj = compile(&ast, &env, sol.spec()).unwrap();
        let ev = evaluate(&env, &sol, &obj, &EvalOptions::default()).unwrap();
        assert!((ev.value - 3.0).abs() < 1e-12);
        assert_eq!(ev.best_bscc().members.len(), 4);
    }

    #[test]
    fn two_agents_on_p5_halves() {
        // agent 0 sweeps A..C, agent 1 sweeps C..E, in phase
        let env = gen_path(5).unwrap();
        let w0 = parse_walk(&env, "A B C B").unwrap();
        let w1 = parse_walk(&env, "C D E D").unwrap();
        let sol = walk_profile(&env, &[w0, w1], &[0, 0]).unwrap();
        let ast: Objective = "max{ET(v,0) for v in V}".parse().unwrap();
        let obj = compile(&ast, &env, sol.spec()).unwrap();
        let ev = evaluate(&env, &sol, &obj, &EvalOptions::default()).unwrap();
        assert!((ev.value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_broken_walks() {
        let env = gen_path(3).unwrap();
        assert!(walk_profile(&env, &[vec![0, 2]], &[0]).is_err());
        assert!(walk_profile(&env, &[vec![0, 1]], &[2]).is_err());
        assert!(parse_walk(&env, "A Z").is_err());
    }

    #[test]
    fn tours_close_up() {
        let env = gen_grid(3, 3, &[]).unwrap();
        let stops: Vec<usize> = ["r0c0", "r2c2"].iter().map(|n| env.vertex(n).unwrap()).collect();
        let tour = closed_tour(&env, &stops).unwrap();
        assert_eq!(tour.len(), 8);
        for k in 0..tour.len() {
            assert!(env.has_edge(tour[k], tour[(k + 1) % tour.len()]));
        }
        assert_eq!(shortest_path(&env, stops[0], stops[0]), Some(vec![stops[0]]));
        let single = closed_tour(&env, &stops[..1]).unwrap();
        assert_eq!(single.len(), 2);
    }
}
