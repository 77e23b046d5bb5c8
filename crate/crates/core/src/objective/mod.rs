//! FTRV objective language: weighted sums of maxima over terms built from
//! `ET(v,f)` and `VT(v,f)` atoms.

mod parser;

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::strategy::SolutionSpec;

pub use parser::{parse_expr, parse_objective, ParseError};

/// Derivative floor for `sqrt` at zero.
pub const SQRT_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum AtomKind {
    ET,
    VT,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    /// `node` is a vertex name or the comprehension variable.
    Atom { kind: AtomKind, node: String, faults: u32 },
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Sqrt(Box<Expr>),
    Pow(Box<Expr>, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeSet {
    All,
    Names(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TermSet {
    List(Vec<Expr>),
    Each { body: Expr, var: String, nodes: NodeSet },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summand {
    pub weight: f64,
    pub terms: TermSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub summands: Vec<Summand>,
}

impl std::str::FromStr for Objective {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        parse_objective(s)
    }
}

impl Objective {
    pub fn parse(src: &str) -> Result<Self> {
        Ok(parse_objective(src)?)
    }
}

// ---------------------------------------------------------------------------
// Printing

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        _ => 5,
    }
}

fn fmt_num(x: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if x.is_sign_negative() {
        write!(f, "(-{})", -x)
    } else {
        write!(f, "{x}")
    }
}

fn fmt_wrapped(e: &Expr, wrap: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if wrap {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => fmt_num(*x, f),
            Expr::Atom { kind, node, faults } => write!(f, "{kind:?}({node},{faults})"),
            Expr::Neg(inner) => {
                f.write_str("-")?;
                let wrap = precedence(inner) < 3 || matches!(**inner, Expr::Num(_));
                fmt_wrapped(inner, wrap, f)
            }
            Expr::Bin(op, l, r) => {
                let p = precedence(self);
                fmt_wrapped(l, precedence(l) < p, f)?;
                f.write_str(match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                })?;
                fmt_wrapped(r, precedence(r) <= p, f)
            }
            Expr::Sqrt(inner) => write!(f, "sqrt({inner})"),
            Expr::Pow(base, exp) => {
                fmt_wrapped(base, precedence(base) < 5 || matches!(**base, Expr::Num(_)), f)?;
                write!(f, "^{exp}")
            }
        }
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeSet::All => f.write_str("V"),
            NodeSet::Names(names) => write!(f, "{{{}}}", names.join(", ")),
        }
    }
}

impl fmt::Display for Summand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.weight != 1.0 {
            write!(f, "{}*", self.weight)?;
        }
        f.write_str("max{")?;
        match &self.terms {
            TermSet::List(list) => {
                for (i, e) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{e}")?;
                }
            }
            TermSet::Each { body, var, nodes } => write!(f, "{body} for {var} in {nodes}")?,
        }
        f.write_str("}")
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.summands.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Templates

fn atom(kind: AtomKind, node: &str, faults: u32) -> Expr {
    Expr::Atom { kind, node: node.to_string(), faults }
}

fn each(body: Expr, nodes: NodeSet) -> TermSet {
    TermSet::Each { body, var: "v".into(), nodes }
}

fn check_weight(w: f64) -> Result<()> {
    if w > 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::Objective(format!("weights must be positive, got {w}")))
    }
}

/// `max{ET(v,0) for v in V} + alpha*max{VT(v,0) for v in V}`: idleness with a
/// determinism-enforcing variance penalty.
pub fn encode_idleness(alpha: f64) -> Result<Objective> {
    check_weight(alpha)?;
    Ok(Objective {
        summands: vec![
            Summand { weight: 1.0, terms: each(atom(AtomKind::ET, "v", 0), NodeSet::All) },
            Summand { weight: alpha, terms: each(atom(AtomKind::VT, "v", 0), NodeSet::All) },
        ],
    })
}

/// `max{w_v*(ET(v,0) + 1) | v}`: worst weighted time to discover an attack.
pub fn encode_patrolling(weights: &[(String, f64)]) -> Result<Objective> {
    if weights.is_empty() {
        return Err(Error::Objective("no vertices to protect".into()));
    }
    let mut list = Vec::with_capacity(weights.len());
    for (node, w) in weights {
        check_weight(*w)?;
        let shifted = Expr::Bin(BinOp::Add, Box::new(atom(AtomKind::ET, node, 0)), Box::new(Expr::Num(1.0)));
        list.push(Expr::Bin(BinOp::Mul, Box::new(Expr::Num(*w)), Box::new(shifted)));
    }
    Ok(Objective { summands: vec![Summand { weight: 1.0, terms: TermSet::List(list) }] })
}

/// The experiment template
/// `max{ET(v,0) + kappa*sqrt(VT(v,0))} + alpha*max{ET(v,1) + kappa*sqrt(VT(v,1))}`
/// over `targets` (all vertices when `None`). Zero `kappa` drops the variance
/// term and zero `alpha` drops the second summand.
pub fn standard_objective(kappa: f64, alpha: f64, targets: Option<&[String]>) -> Result<Objective> {
    if !(kappa >= 0.0 && alpha >= 0.0 && kappa.is_finite() && alpha.is_finite()) {
        return Err(Error::Objective(format!("kappa and alpha must be nonnegative, got {kappa}, {alpha}")));
    }
    let nodes = || match targets {
        Some(t) => NodeSet::Names(t.to_vec()),
        None => NodeSet::All,
    };
    let body = |f: u32| {
        let et = atom(AtomKind::ET, "v", f);
        if kappa == 0.0 {
            return et;
        }
        let sd = Expr::Sqrt(Box::new(atom(AtomKind::VT, "v", f)));
        let scaled = Expr::Bin(BinOp::Mul, Box::new(Expr::Num(kappa)), Box::new(sd));
        Expr::Bin(BinOp::Add, Box::new(et), Box::new(scaled))
    };
    let mut summands = vec![Summand { weight: 1.0, terms: each(body(0), nodes()) }];
    if alpha > 0.0 {
        summands.push(Summand { weight: alpha, terms: each(body(1), nodes()) });
    }
    Ok(Objective { summands })
}

// ---------------------------------------------------------------------------
// Compilation against an environment

/// A resolved atom: `kind` of the visiting time of `vertex` with `faults`
/// faulty agents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub kind: AtomKind,
    pub vertex: usize,
    pub faults: u32,
}

impl Atom {
    pub fn label(&self, env: &Environment) -> String {
        format!("{:?}({},{})", self.kind, env.name(self.vertex), self.faults)
    }
}

/// Term expression whose atoms are indices into [`CompiledObjective::atoms`].
#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Num(f64),
    Atom(usize),
    Neg(Box<Term>),
    Bin(BinOp, Box<Term>, Box<Term>),
    Sqrt(Box<Term>),
    Pow(Box<Term>, f64),
}

impl Term {
    pub fn eval(&self, atom: &impl Fn(usize) -> f64) -> f64 {
        match self {
            Term::Num(x) => *x,
            Term::Atom(i) => atom(*i),
            Term::Neg(e) => -e.eval(atom),
            Term::Bin(op, l, r) => {
                let (a, b) = (l.eval(atom), r.eval(atom));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Term::Sqrt(e) => e.eval(atom).max(0.0).sqrt(),
            Term::Pow(e, p) => e.eval(atom).powf(*p),
        }
    }

    /// Reverse pass: calls `out(atom, d term / d atom * adj)` once per atom
    /// occurrence.
    pub fn backward(&self, atom: &impl Fn(usize) -> f64, adj: f64, out: &mut impl FnMut(usize, f64)) {
        match self {
            Term::Num(_) => {}
            Term::Atom(i) => out(*i, adj),
            Term::Neg(e) => e.backward(atom, -adj, out),
            Term::Bin(op, l, r) => match op {
                BinOp::Add => {
                    l.backward(atom, adj, out);
                    r.backward(atom, adj, out);
                }
                BinOp::Sub => {
                    l.backward(atom, adj, out);
                    r.backward(atom, -adj, out);
                }
                BinOp::Mul => {
                    let (a, b) = (l.eval(atom), r.eval(atom));
                    l.backward(atom, adj * b, out);
                    r.backward(atom, adj * a, out);
                }
                BinOp::Div => {
                    let (a, b) = (l.eval(atom), r.eval(atom));
                    l.backward(atom, adj / b, out);
                    r.backward(atom, -adj * a / (b * b), out);
                }
            },
            Term::Sqrt(e) => {
                let x = e.eval(atom).max(SQRT_FLOOR);
                e.backward(atom, adj / (2.0 * x.sqrt()), out);
            }
            Term::Pow(e, p) => {
                let x = e.eval(atom);
                e.backward(atom, adj * p * x.powf(p - 1.0), out);
            }
        }
    }

    fn collect_atoms(&self, out: &mut Vec<usize>) {
        match self {
            Term::Num(_) => {}
            Term::Atom(i) => out.push(*i),
            Term::Neg(e) | Term::Sqrt(e) | Term::Pow(e, _) => e.collect_atoms(out),
            Term::Bin(_, l, r) => {
                l.collect_atoms(out);
                r.collect_atoms(out);
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct CompiledTerm {
    pub expr: Term,
    /// Human-readable form with vertex names substituted.
    pub label: String,
    /// Distinct fault counts used by this term, ascending. The subset
    /// quantifier ranges over one `Ag[f]` per entry.
    pub fault_groups: Vec<u32>,
    /// Distinct atom indices used by this term.
    pub atoms: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct CompiledSummand {
    pub weight: f64,
    pub terms: Vec<CompiledTerm>,
}

/// An objective validated against an environment and agent count.
#[derive(Clone, Debug)]
pub struct CompiledObjective {
    pub atoms: Vec<Atom>,
    pub summands: Vec<CompiledSummand>,
    pub agents: usize,
    source: Objective,
}

impl CompiledObjective {
    pub fn source(&self) -> &Objective {
        &self.source
    }

    /// Vertices mentioned by any atom, ascending.
    pub fn vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.atoms.iter().map(|a| a.vertex).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

fn substitute(e: &Expr, var: Option<&str>, value: &str) -> Expr {
    match e {
        Expr::Atom { kind, node, faults } => {
            let node = if Some(node.as_str()) == var { value.to_string() } else { node.clone() };
            Expr::Atom { kind: *kind, node, faults: *faults }
        }
        Expr::Num(x) => Expr::Num(*x),
        Expr::Neg(i) => Expr::Neg(Box::new(substitute(i, var, value))),
        Expr::Sqrt(i) => Expr::Sqrt(Box::new(substitute(i, var, value))),
        Expr::Pow(i, p) => Expr::Pow(Box::new(substitute(i, var, value)), *p),
        Expr::Bin(op, l, r) => Expr::Bin(*op, Box::new(substitute(l, var, value)), Box::new(substitute(r, var, value))),
    }
}

struct Compiler<'a> {
    env: &'a Environment,
    agents: usize,
    atoms: Vec<Atom>,
    index: HashMap<Atom, usize>,
}

impl Compiler<'_> {
    fn lower(&mut self, e: &Expr) -> Result<Term> {
        Ok(match e {
            Expr::Num(x) => Term::Num(*x),
            Expr::Atom { kind, node, faults } => {
                let vertex = self
                    .env
                    .vertex(node)
                    .ok_or_else(|| Error::Objective(format!("unknown vertex {node}")))?;
                if *faults as usize >= self.agents {
                    return Err(Error::Objective(format!(
                        "{kind:?}({node},{faults}): fault count must be below the agent count {}",
                        self.agents
                    )));
                }
                let atom = Atom { kind: *kind, vertex, faults: *faults };
                let next = self.atoms.len();
                let idx = *self.index.entry(atom).or_insert(next);
                if idx == next {
                    self.atoms.push(atom);
                }
                Term::Atom(idx)
            }
            Expr::Neg(i) => Term::Neg(Box::new(self.lower(i)?)),
            Expr::Sqrt(i) => Term::Sqrt(Box::new(self.lower(i)?)),
            Expr::Pow(i, p) => Term::Pow(Box::new(self.lower(i)?), *p),
            Expr::Bin(op, l, r) => Term::Bin(*op, Box::new(self.lower(l)?), Box::new(self.lower(r)?)),
        })
    }

    fn term(&mut self, e: &Expr) -> Result<CompiledTerm> {
        let expr = self.lower(e)?;
        let mut atoms = Vec::new();
        expr.collect_atoms(&mut atoms);
        atoms.sort_unstable();
        atoms.dedup();
        let mut fault_groups: Vec<u32> = atoms.iter().map(|&a| self.atoms[a].faults).collect();
        fault_groups.sort_unstable();
        fault_groups.dedup();
        Ok(CompiledTerm { expr, label: e.to_string(), fault_groups, atoms })
    }
}

/// Resolves vertex names, expands comprehensions and deduplicates atoms.
pub fn compile(ast: &Objective, env: &Environment, spec: &SolutionSpec) -> Result<CompiledObjective> {
    compile_for_agents(ast, env, spec.agents())
}

pub fn compile_for_agents(ast: &Objective, env: &Environment, agents: usize) -> Result<CompiledObjective> {
    if ast.summands.is_empty() {
        return Err(Error::Objective("objective has no summands".into()));
    }
    let mut c = Compiler { env, agents, atoms: Vec::new(), index: HashMap::new() };
    let mut summands = Vec::with_capacity(ast.summands.len());
    for s in &ast.summands {
        check_weight(s.weight)?;
        let terms = match &s.terms {
            TermSet::List(list) => {
                if list.is_empty() {
                    return Err(Error::Objective("empty term set".into()));
                }
                list.iter().map(|e| c.term(e)).collect::<Result<Vec<_>>>()?
            }
            TermSet::Each { body, var, nodes } => {
                let names: Vec<String> = match nodes {
                    NodeSet::All => env.names().to_vec(),
                    NodeSet::Names(n) => n.clone(),
                };
                if names.is_empty() {
                    return Err(Error::Objective("empty node set".into()));
                }
                let mut terms = Vec::with_capacity(names.len());
                for name in &names {
                    if env.vertex(name).is_none() {
                        return Err(Error::Objective(format!("unknown vertex {name} in node set")));
                    }
                    terms.push(c.term(&substitute(body, Some(var), name))?);
                }
                terms
            }
        };
        summands.push(CompiledSummand { weight: s.weight, terms });
    }
    Ok(CompiledObjective { atoms: c.atoms, summands, agents, source: ast.clone() })
}

/// Returns the deduplicated atom set after checking vertices and fault counts.
pub fn validate(ast: &Objective, env: &Environment, spec: &SolutionSpec) -> Result<Vec<Atom>> {
    Ok(compile(ast, env, spec)?.atoms)
}
