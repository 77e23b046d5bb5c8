//! Strongly connected components (iterative Tarjan) and bottom components.

use crate::strategy::ConfigChain;

/// Minimal read-only digraph view: successor `k` of node `v`, if any.
pub trait Digraph {
    fn node_count(&self) -> usize;
    fn successor(&self, v: usize, k: usize) -> Option<usize>;
}

impl Digraph for ConfigChain {
    fn node_count(&self) -> usize {
        self.len()
    }

    fn successor(&self, v: usize, k: usize) -> Option<usize> {
        let r = self.row_range(v);
        (k < r.len()).then(|| self.col(r.start + k))
    }
}

impl Digraph for [Vec<usize>] {
    fn node_count(&self) -> usize {
        self.len()
    }

    fn successor(&self, v: usize, k: usize) -> Option<usize> {
        self[v].get(k).copied()
    }
}

impl Digraph for Vec<Vec<usize>> {
    fn node_count(&self) -> usize {
        self.len()
    }

    fn successor(&self, v: usize, k: usize) -> Option<usize> {
        self[v].get(k).copied()
    }
}

const UNVISITED: usize = usize::MAX;

/// Component id of every node; ids are assigned in Tarjan completion order,
/// so every edge between components goes from a higher to a lower id.
pub fn tarjan<G: Digraph + ?Sized>(g: &G) -> (Vec<usize>, usize) {
    let n = g.node_count();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut comp = vec![UNVISITED; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut frames: Vec<(usize, usize)> = Vec::new();
    let mut next = 0;
    let mut count = 0;
    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        frames.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut k)) = frames.last_mut() {
            if let Some(w) = g.successor(v, *k) {
                *k += 1;
                if index[w] == UNVISITED {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            frames.pop();
            if let Some(&(parent, _)) = frames.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp[w] = count;
                    if w == v {
                        break;
                    }
                }
                count += 1;
            }
        }
    }
    (comp, count)
}

/// Bottom strongly connected components (no edge leaves them), each sorted,
/// ordered by smallest member.
pub fn bottom_components<G: Digraph + ?Sized>(g: &G) -> Vec<Vec<usize>> {
    let (comp, count) = tarjan(g);
    let mut bottom = vec![true; count];
    for v in 0..g.node_count() {
        let mut k = 0;
        while let Some(w) = g.successor(v, k) {
            if comp[w] != comp[v] {
                bottom[comp[v]] = false;
            }
            k += 1;
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for v in 0..g.node_count() {
        if bottom[comp[v]] {
            members[comp[v]].push(v);
        }
    }
    let mut out: Vec<Vec<usize>> = members.into_iter().filter(|m| !m.is_empty()).collect();
    out.sort_by_key(|m| m[0]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reachable(g: &[Vec<usize>], from: usize) -> Vec<bool> {
        let mut seen = vec![false; g.len()];
        let mut todo = vec![from];
        seen[from] = true;
        while let Some(v) = todo.pop() {
            for &w in &g[v] {
                if !seen[w] {
                    seen[w] = true;
                    todo.push(w);
                }
            }
        }
        seen
    }

    #[test]
    fn single_cycle() {
        let g = vec![vec![1], vec![2], vec![0]];
        assert_eq!(bottom_components(&g), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn two_sinks() {
        let g = vec![vec![1], vec![1], vec![2]];
        assert_eq!(bottom_components(&g), vec![vec![1], vec![2]]);
    }

    #[test]
    fn deep_path_does_not_overflow() {
        let n = 200_000;
        let g: Vec<Vec<usize>> = (0..n).map(|i| vec![(i + 1) % n]).collect();
        assert_eq!(bottom_components(&g)[0].len(), n);
    }

    proptest! {
        #[test]
        fn bottom_components_match_reachability(edges in proptest::collection::vec((0usize..12, 0usize..12), 1..40)) {
            let n = 12;
            let mut g = vec![Vec::new(); n];
            for (a, b) in edges {
                g[a].push(b);
            }
            for (v, row) in g.iter_mut().enumerate() {
                if row.is_empty() {
                    row.push(v);
                }
            }
            let reach: Vec<Vec<bool>> = (0..n).map(|v| reachable(&g, v)).collect();
            // v is in a bottom component iff everything it reaches can reach it back
            let expected: Vec<bool> = (0..n).map(|v| (0..n).all(|w| !reach[v][w] || reach[w][v])).collect();
            let found = bottom_components(&g);
            let mut flag = vec![false; n];
            for b in &found {
                for &v in b {
                    prop_assert!(!flag[v]);
                    flag[v] = true;
                    for &w in b {
                        prop_assert!(reach[v][w]);
                    }
                }
            }
            prop_assert_eq!(flag, expected);
        }
    }
}
