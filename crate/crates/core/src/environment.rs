//! Patrolling environments: directed graphs with unit traversal time.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// A directed graph of locations. Vertex indices follow declaration order and
/// every successor list is sorted by that order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Environment {
    names: Vec<String>,
    index: HashMap<String, usize>,
    succ: Vec<Vec<usize>>,
}

pub(crate) fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Environment {
    /// Builds an environment from names and directed edges given as index pairs.
    pub fn from_edges(names: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if !is_valid_name(name) {
                return Err(Error::Graph(format!("invalid vertex name {name:?}")));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Graph(format!("duplicate vertex {name}")));
            }
        }
        let mut succ = vec![Vec::new(); names.len()];
        for &(a, b) in edges {
            if a >= names.len() || b >= names.len() {
                return Err(Error::Graph(format!("edge ({a}, {b}) out of range")));
            }
            succ[a].push(b);
        }
        for (v, row) in succ.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if row.is_empty() {
                return Err(Error::Graph(format!("vertex {} has no successor", names[v])));
            }
        }
        Ok(Self { names, index, succ })
    }

    /// Parses the line-oriented graph format (`vertex`, `edge`, `undirected`, `#`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::GraphSyntax { line: lineno + 1, msg };
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                ["vertex", name] => {
                    if !is_valid_name(name) {
                        return Err(err(format!("invalid vertex name {name:?}")));
                    }
                    if seen.contains_key(*name) {
                        return Err(err(format!("duplicate vertex {name}")));
                    }
                    seen.insert(name.to_string(), names.len());
                    names.push(name.to_string());
                }
                [kind @ ("edge" | "undirected"), a, b] => {
                    let lookup = |n: &str| {
                        seen.get(n)
                            .copied()
                            .ok_or_else(|| err(format!("unknown vertex {n}")))
                    };
                    let (ia, ib) = (lookup(a)?, lookup(b)?);
                    edges.push((ia, ib));
                    if *kind == "undirected" {
                        edges.push((ib, ia));
                    }
                }
                _ => return Err(err(format!("cannot parse {line:?}"))),
            }
        }
        Self::from_edges(names, &edges)
    }

    /// Emits vertices first, then one `edge` line per directed edge.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for name in &self.names {
            let _ = writeln!(out, "vertex {name}");
        }
        for (a, b) in self.edges() {
            let _ = writeln!(out, "edge {} {}", self.names[a], self.names[b]);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vertex(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.succ[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.succ[a].binary_search(&b).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(a, row)| row.iter().map(move |&b| (a, b)))
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn is_strongly_connected(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        let reach = |adj: &[Vec<usize>]| {
            let mut seen = vec![false; adj.len()];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        let mut rev = vec![Vec::new(); self.len()];
        for (a, b) in self.edges() {
            rev[b].push(a);
        }
        reach(&self.succ) && reach(&rev)
    }

    /// Proper 2-coloring of the underlying undirected graph, if one exists.
    pub fn two_coloring(&self) -> Option<Vec<u8>> {
        let mut adj = vec![Vec::new(); self.len()];
        for (a, b) in self.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut color = vec![u8::MAX; self.len()];
        for start in 0..self.len() {
            if color[start] != u8::MAX {
                continue;
            }
            color[start] = 0;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if color[w] == u8::MAX {
                        color[w] = 1 - color[v];
                        queue.push_back(w);
                    } else if color[w] == color[v] && v != w {
                        return None;
                    }
                }
            }
        }
        Some(color)
    }
}

fn undirected_pairs(pairs: &[(usize, usize)]) -> Vec<(usize, usize)> {
    pairs.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect()
}

/// Open perimeter on `k` vertices. Names are `A`, `B`, ... for `k <= 26`,
/// otherwise `v0`, `v1`, ...
pub fn gen_path(k: usize) -> Result<Environment> {
    if k < 2 {
        return Err(Error::Graph(format!("path needs at least 2 vertices, got {k}")));
    }
    let names = (0..k)
        .map(|i| {
            if k <= 26 {
                char::from(b'A' + i as u8).to_string()
            } else {
                format!("v{i}")
            }
        })
        .collect();
    let pairs: Vec<_> = (1..k).map(|i| (i - 1, i)).collect();
    Environment::from_edges(names, &undirected_pairs(&pairs))
}

pub fn grid_name(x: usize, y: usize) -> String {
    format!("r{y}c{x}")
}

/// 4-neighbour `width` x `height` grid with some undirected edges removed.
/// Vertices are row-major and named `r{row}c{col}`.
pub fn gen_grid(width: usize, height: usize, removed: &[(String, String)]) -> Result<Environment> {
    if width == 0 || height == 0 || width * height < 2 {
        return Err(Error::Graph(format!("grid {width}x{height} is too small")));
    }
    let id = |x: usize, y: usize| y * width + x;
    let mut names = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            names.push(grid_name(x, y));
        }
    }
    let mut pairs = Vec::new();
    for y in 0..height {
        for x in 0..width {
            if x + 1 < width {
                pairs.push((id(x, y), id(x + 1, y)));
            }
            if y + 1 < height {
                pairs.push((id(x, y), id(x, y + 1)));
            }
        }
    }
    for (a, b) in removed {
        let find = |n: &str| {
            names
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| Error::Graph(format!("unknown grid vertex {n}")))
        };
        let (ia, ib) = (find(a)?, find(b)?);
        let before = pairs.len();
        pairs.retain(|&(p, q)| !((p, q) == (ia, ib) || (p, q) == (ib, ia)));
        if pairs.len() == before {
            return Err(Error::Graph(format!("grid has no edge {a}-{b}")));
        }
    }
    let env = Environment::from_edges(names, &undirected_pairs(&pairs))?;
    if !env.is_strongly_connected() {
        return Err(Error::Graph("removing these edges disconnects the grid".into()));
    }
    Ok(env)
}

/// Closed perimeter of length 6 with one chord between opposite vertices.
pub fn gen_triangle() -> Result<Environment> {
    gen_triangle_with_chord(0, 3)
}

/// Closed perimeter `v0..v5` plus the undirected chord `{a, b}`.
pub fn gen_triangle_with_chord(a: usize, b: usize) -> Result<Environment> {
    if a >= 6 || b >= 6 || a == b || (a + 1) % 6 == b || (b + 1) % 6 == a {
        return Err(Error::Graph(format!("chord {a}-{b} is not a proper chord of the 6-cycle")));
    }
    let names = (0..6).map(|i| format!("v{i}")).collect();
    let mut pairs: Vec<_> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
    pairs.push((a, b));
    Environment::from_edges(names, &undirected_pairs(&pairs))
}
