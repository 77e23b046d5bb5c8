//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the verdict lines are always
//! printed; the process fails if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use ftrv::environment::{gen_grid, gen_path};
use ftrv::evaluator::{bsccs, evaluate, expected_times, metrics, second_moments, target_configs, EvalOptions, Metrics};
use ftrv::gradient::finite_diff_check;
use ftrv::objective::{compile, standard_objective, CompiledObjective, Objective};
use ftrv::optimizer::{synthesize, OptimizerConfig, Synthesis};
use ftrv::simulate::{brute_force_deterministic, validate_solution, DEFAULT_ENUM_LIMIT};
use ftrv::strategy::{build_chain, init_params, parse_solution, to_solution, ConfigChain};
use ftrv::walks::{closed_tour, walk_profile};
use ftrv::{Environment, Mode, Solution, SolutionSpec};

type Verdict = (bool, String);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn p5() -> Environment {
    gen_path(5).unwrap()
}

fn fixture(env: &Environment, name: &str) -> Solution {
    let text = std::fs::read_to_string(fixtures().join(format!("{name}.json"))).unwrap();
    parse_solution(env, &text).unwrap()
}

const OBJ_TIME_VAR: &str = "max{ET(v,0) for v in V} + max{VT(v,0) for v in V}";
const OBJ_TIME_FAULT: &str = "max{ET(v,0) for v in V} + 0.5*max{ET(v,1) for v in V}";

fn close(a: Option<f64>, b: f64, tol: f64) -> bool {
    a.is_some_and(|a| (a - b).abs() <= tol)
}

// ---------------------------------------------------------------------------
// 1. Evaluator fixtures through the `eval` command

fn eval_cli(name: &str, objective: &str) -> Value {
    let out = Command::new(env!("CARGO_BIN_EXE_ftrv"))
        .arg("eval")
        .arg(fixtures().join(format!("{name}.json")))
        .arg("--graph")
        .arg(fixtures().join("p5.txt"))
        .arg("--objective")
        .arg(objective)
        .output()
        .expect("run ftrv eval");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("report JSON")
}

fn criterion_fixtures() -> Verdict {
    let start = Instant::now();
    let metric = |r: &Value, k: &str| r["metrics"][k].as_f64();
    let a = eval_cli("p5_a", OBJ_TIME_VAR);
    let b = eval_cli("p5_b", OBJ_TIME_VAR);
    let c = eval_cli("p5_c", OBJ_TIME_VAR);
    let d = eval_cli("p5_d", OBJ_TIME_FAULT);
    let e = eval_cli("p5_e", OBJ_TIME_FAULT);
    let secs = start.elapsed().as_secs_f64();
    let c_vt = metric(&c, "sqrt_vt_max").map(|s| s * s);
    let c_bound = c["metrics"]["visit_bound"].as_u64();
    let checks = [
        close(metric(&a, "et_max"), 3.0, 1e-9),
        close(metric(&b, "et_max"), 1.0 + 2f64.sqrt(), 1e-9),
        close(metric(&c, "et_max"), 2.0, 1e-9),
        close(c_vt, 1.0, 1e-9),
        c_bound.is_some_and(|x| x <= 3),
        close(metric(&d, "et_max"), 3.0, 1e-9),
        close(metric(&d, "et_r_max"), 7.0, 1e-9),
        close(metric(&e, "et_max"), 1.0, 1e-9),
        close(metric(&e, "et_r_max"), 5.0, 1e-9),
        secs < 1.0,
    ];
    let show = |x: Option<f64>| x.map_or("none".to_string(), |v| format!("{v:.10}"));
    let detail = format!(
        "(a) ET {} | (b) ET {} | (c) ET {} VT {} bound {:?} | (d) ET {} ET_R {} | (e) ET {} ET_R {} | {secs:.2}s",
        show(metric(&a, "et_max")),
        show(metric(&b, "et_max")),
        show(metric(&c, "et_max")),
        show(c_vt),
        c_bound,
        show(metric(&d, "et_max")),
        show(metric(&d, "et_r_max")),
        show(metric(&e, "et_max")),
        show(metric(&e, "et_r_max")),
    );
    (checks.iter().all(|&x| x), detail)
}

// ---------------------------------------------------------------------------
// 2. Linear systems against value iteration

/// Strongly connected digraph on `k` vertices: a random Hamiltonian cycle
/// plus random extra edges (self-loops allowed).
fn random_graph(rng: &mut ChaCha8Rng, k: usize) -> Environment {
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = (0..k).map(|i| (order[i], order[(i + 1) % k])).collect();
    for _ in 0..rng.gen_range(0..2 * k) {
        edges.push((rng.gen_range(0..k), rng.gen_range(0..k)));
    }
    let names = (0..k).map(|i| format!("v{i}")).collect();
    Environment::from_edges(names, &edges).unwrap()
}

fn random_spec(rng: &mut ChaCha8Rng, vertices: usize, max_states: usize) -> SolutionSpec {
    loop {
        let mode = if rng.gen_bool(0.5) { Mode::Autonomous } else { Mode::Coordinated };
        let n = rng.gen_range(1..=2);
        let m = rng.gen_range(1..=2);
        let spec = SolutionSpec::uniform(mode, n, m).unwrap();
        if spec.config_count(vertices).is_some_and(|c| c <= max_states) {
            return spec;
        }
    }
}

/// Value iteration for the first two moments of the hitting time of
/// `target` inside the closed set `members`.
/// Stops value iteration once the sup-change is below 1e-12 and has not
/// improved for 50 sweeps. Stopping at the first sweep under 1e-12 leaves an
/// error of order 1e-12 / (1 - rho) in E, which the S recursion multiplies
/// by roughly 2 max E.
#[derive(Default)]
struct Stagnation {
    best: Option<f64>,
    idle: usize,
}

impl Stagnation {
    fn done(&mut self, change: f64) -> bool {
        if change == 0.0 {
            return true;
        }
        match self.best {
            Some(b) if change >= b => self.idle += 1,
            _ => {
                self.best = Some(change);
                self.idle = 0;
            }
        }
        change < 1e-12 && self.idle >= 50
    }
}

fn value_iteration(chain: &ConfigChain, members: &[usize], target: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let n = members.len();
    let mut local = vec![usize::MAX; chain.len()];
    for (i, &c) in members.iter().enumerate() {
        local[c] = i;
    }
    let mut e = vec![0.0; n];
    let mut stop = Stagnation::default();
    loop {
        let mut change: f64 = 0.0;
        let next: Vec<f64> = (0..n)
            .map(|i| {
                if target[i] {
                    return 0.0;
                }
                let x = 1.0 + chain.row(members[i]).map(|(d, p)| p * e[local[d]]).sum::<f64>();
                change = change.max((x - e[i]).abs());
                x
            })
            .collect();
        e = next;
        if stop.done(change) {
            break;
        }
    }
    let mut s = vec![0.0; n];
    let mut stop = Stagnation::default();
    loop {
        let mut change: f64 = 0.0;
        let next: Vec<f64> = (0..n)
            .map(|i| {
                if target[i] {
                    return 0.0;
                }
                let x = 1.0 + chain.row(members[i]).map(|(d, p)| p * (2.0 * e[local[d]] + s[local[d]])).sum::<f64>();
                change = change.max((x - s[i]).abs());
                x
            })
            .collect();
        s = next;
        if stop.done(change) {
            break;
        }
    }
    (e, s)
}

fn criterion_linear_systems() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_e, mut worst_s, mut min_var, mut max_states) = (0f64, 0f64, f64::INFINITY, 0);
    let mut chains = 0;
    while chains < 50 {
        let k = rng.gen_range(2..=15);
        let env = random_graph(&mut rng, k);
        let spec = random_spec(&mut rng, k, 500);
        let sol = to_solution(&init_params(&env, &spec, rng.gen()).unwrap());
        let chain = build_chain(&env, &sol).unwrap();
        let comps = bsccs(&chain);
        let members = comps.iter().max_by_key(|b| b.len()).unwrap();
        let v = rng.gen_range(0..k);
        let targets = target_configs(&chain, v, (1u64 << spec.agents()) - 1);
        let target: Vec<bool> = members.iter().map(|c| targets.binary_search(c).is_ok()).collect();
        if !target.contains(&true) {
            continue;
        }
        chains += 1;
        max_states = max_states.max(chain.len());
        let et = expected_times(&chain, members, &targets).unwrap();
        let sm = second_moments(&chain, members, &targets, &et).unwrap();
        let (oe, os) = value_iteration(&chain, members, &target);
        for i in 0..members.len() {
            worst_e = worst_e.max((et[i] - oe[i]).abs());
            worst_s = worst_s.max((sm[i] - os[i]).abs());
            min_var = min_var.min(sm[i] - et[i] * et[i]);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst_e <= 1e-8 && worst_s <= 1e-8 && min_var >= -1e-9 && secs < 30.0;
    (
        ok,
        format!(
            "50 chains (<= {max_states} states): max |dE| {worst_e:.2e}, max |dS| {worst_s:.2e}, min Var {min_var:.3e} | {secs:.2}s"
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. Gradient against finite differences

const GRAD_OBJECTIVES: [&str; 5] = [
    "max{ET(v,0) for v in V}",
    "max{ET(v,0) + 0.5*sqrt(VT(v,0)) for v in V}",
    "max{ET(v,0) for v in V} + 0.3*max{VT(v,0) for v in V}",
    "max{ET(v,0) for v in V} + 0.5*max{ET(v,1) for v in V}",
    "2*max{pow(ET(v,0),2) / (1 + VT(v,0)) for v in V}",
];

fn criterion_gradient() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0f64;
    let mut min_checked = usize::MAX;
    let mut instances = 0;
    while instances < 20 {
        let k = rng.gen_range(3..=6);
        let env = random_graph(&mut rng, k);
        let spec = random_spec(&mut rng, k, 300);
        let params = init_params(&env, &spec, rng.gen()).unwrap();
        if params.logits.len() < 120 {
            continue;
        }
        let src = GRAD_OBJECTIVES[instances % GRAD_OBJECTIVES.len()];
        let src = if spec.agents() < 2 { GRAD_OBJECTIVES[instances % 3] } else { src };
        let obj = compile(&src.parse().unwrap(), &env, &spec).unwrap();
        if evaluate(&env, &to_solution(&params), &obj, &EvalOptions::default()).is_err() {
            continue;
        }
        let rep = finite_diff_check(&env, &params, &obj, &EvalOptions::default(), 1e-5, 120, rng.gen()).unwrap();
        instances += 1;
        worst = worst.max(rep.max_error);
        min_checked = min_checked.min(rep.checked);
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst <= 1e-4 && min_checked >= 50 && secs < 120.0;
    (ok, format!("20 instances, >= {min_checked} coordinates each: max rel err {worst:.2e} | {secs:.2}s"))
}

// ---------------------------------------------------------------------------
// 4, 5, 7. Synthesis

struct Synthesized {
    syn: Synthesis,
    /// Metrics of every seed's best checkpoint, evaluated exactly.
    per_run: Vec<Metrics>,
    best: Metrics,
    step_seconds: f64,
}

fn run_synthesis(env: &Environment, spec: &SolutionSpec, ast: &Objective) -> Synthesized {
    let obj = compile(ast, env, spec).unwrap();
    let cfg = OptimizerConfig::default();
    let syn = synthesize(env, spec, &obj, &cfg).unwrap();
    let exact = EvalOptions::default();
    let per_run: Vec<Metrics> = syn
        .runs
        .iter()
        .map(|r| {
            let ev = evaluate(env, &r.best, &obj, &exact).unwrap();
            metrics(env, &ev, &obj, &exact).unwrap()
        })
        .collect();
    let best = per_run[syn.best].clone();
    let steps: Vec<f64> = syn.runs.iter().flat_map(|r| r.step_seconds.iter().copied()).collect();
    let step_seconds = steps.iter().sum::<f64>() / steps.len() as f64;
    Synthesized { syn, per_run, best, step_seconds }
}

fn fmt(x: Option<f64>) -> String {
    x.map_or("inf".into(), |v| format!("{v:.3}"))
}

fn criterion_p5_synthesis(floor: &mut Vec<f64>) -> Verdict {
    let env = p5();
    let plain = standard_objective(0.0, 0.0, None).unwrap();
    let stable = standard_objective(1.0, 0.0, None).unwrap();
    let cases: [(&str, SolutionSpec, &Objective); 4] = [
        ("coord m=3 k=0", SolutionSpec::coordinated(2, 3), &plain),
        ("coord m=1 k=0", SolutionSpec::coordinated(2, 1), &plain),
        ("coord m=3 k=1", SolutionSpec::coordinated(2, 3), &stable),
        ("auto m=2 k=0", SolutionSpec::autonomous(vec![2, 2]), &plain),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (label, spec, ast)) in cases.iter().enumerate() {
        let s = run_synthesis(&env, spec, ast);
        floor.extend(s.per_run.iter().filter_map(|m| m.et_max));
        let et = s.best.et_max;
        let sd = s.best.sqrt_vt_max;
        let pass = match i {
            0 => et.is_some_and(|x| x <= 2.05),
            1 => et.is_some_and(|x| x <= 2.85),
            2 => et.is_some_and(|x| (2.9..=3.1).contains(&x)) && sd.is_some_and(|x| x <= 0.05),
            _ => et.is_some_and(|x| x <= 2.50),
        } && s.step_seconds <= 0.2;
        ok &= pass;
        parts.push(format!(
            "{label}: ET {} sd {} seed {} {:.1e}s/step{}",
            fmt(et),
            fmt(sd),
            s.syn.best_run().seed,
            s.step_seconds,
            if pass { "" } else { " <- FAIL" }
        ));
    }
    (ok, parts.join(" | "))
}

/// Corner-patrolling instance on a 4x4 grid with two interior walls.
fn grid_instance() -> (Environment, Objective, Vec<usize>) {
    let removed = [("r1c1", "r1c2"), ("r2c1", "r2c2"), ("r1c1", "r2c1")];
    let removed: Vec<(String, String)> = removed.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    let env = gen_grid(4, 4, &removed).unwrap();
    let corners: Vec<String> = ["r0c0", "r0c3", "r3c3", "r3c0"].iter().map(|s| s.to_string()).collect();
    let ids = corners.iter().map(|c| env.vertex(c).unwrap()).collect();
    let ast = standard_objective(0.0, 0.0, Some(&corners)).unwrap();
    (env, ast, ids)
}

/// Best value over a few deterministic sweeps of the corners by two agents.
fn grid_baseline(env: &Environment, ast: &Objective, corners: &[usize]) -> (f64, String) {
    let mut best = (f64::INFINITY, String::new());
    let tour = closed_tour(env, corners).unwrap();
    let l = tour.len();
    let mut designs = vec![(format!("shared tour, offset {}", l / 2), vec![tour.clone(), tour.clone()], vec![0, l / 2])];
    // each agent sweeps two adjacent corners
    for split in 0..2 {
        let a = closed_tour(env, &[corners[split], corners[split + 1]]).unwrap();
        let b = closed_tour(env, &[corners[split + 2], corners[(split + 3) % 4]]).unwrap();
        for off in 0..b.len() {
            designs.push((format!("split {split}, offset {off}"), vec![a.clone(), b.clone()], vec![0, off]));
        }
    }
    for (label, walks, starts) in designs {
        let sol = walk_profile(env, &walks, &starts).unwrap();
        let obj = compile(ast, env, sol.spec()).unwrap();
        if let Ok(ev) = evaluate(env, &sol, &obj, &EvalOptions::default()) {
            if ev.value < best.0 {
                best = (ev.value, label);
            }
        }
    }
    best
}

fn criterion_longer_paths() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    let cases = [(7, 1.0, 4.95, 5.10), (9, 1.0, 6.95, 7.10), (7, 0.0, f64::NEG_INFINITY, 4.3)];
    for (k, kappa, lo, hi) in cases {
        let env = gen_path(k).unwrap();
        let ast = standard_objective(kappa, 0.0, None).unwrap();
        let s = run_synthesis(&env, &SolutionSpec::coordinated(2, 3), &ast);
        let pass = s.best.et_max.is_some_and(|x| x >= lo && x <= hi);
        ok &= pass;
        parts.push(format!("P{k} k={kappa}: ET {}{}", fmt(s.best.et_max), if pass { "" } else { " <- FAIL" }));
    }

    let (env, ast, corners) = grid_instance();
    let (baseline, design) = grid_baseline(&env, &ast, &corners);
    let spec = SolutionSpec::coordinated(2, 2);
    let s0 = run_synthesis(&env, &spec, &ast);
    let pass = s0.best.et_max.is_some_and(|x| x <= baseline + 1e-9);
    ok &= pass;
    parts.push(format!(
        "grid corners: synthesized ET {} vs sweep {baseline:.3} ({design}){}",
        fmt(s0.best.et_max),
        if pass { "" } else { " <- FAIL" }
    ));
    let deterministic_like = s0.best.et_max.is_some_and(|x| (x - baseline).abs() <= 0.05);
    let corners_named: Vec<String> = corners.iter().map(|&c| env.name(c).to_string()).collect();
    let s1 = run_synthesis(&env, &spec, &standard_objective(0.1, 0.0, Some(&corners_named)).unwrap());
    let sd = s1.best.sqrt_vt_max;
    if deterministic_like {
        let pass = sd.is_some_and(|x| x < 0.1);
        ok &= pass;
        parts.push(format!("k=0.1 sd {}{}", fmt(sd), if pass { "" } else { " <- FAIL" }));
    } else {
        parts.push(format!("k=0.1 sd {} (k=0 optimum randomized, sd bound not required)", fmt(sd)));
    }
    (ok, parts.join(" | "))
}

fn criterion_floor(floor: &[f64]) -> Verdict {
    let min = floor.iter().copied().fold(f64::INFINITY, f64::min);
    let env = gen_path(3).unwrap();
    let spec = SolutionSpec::autonomous(vec![2]);
    let ast: Objective = "max{ET(v,0) for v in V}".parse().unwrap();
    let obj = compile(&ast, &env, &spec).unwrap();
    let bf = brute_force_deterministic(&env, &spec, &obj, DEFAULT_ENUM_LIMIT).unwrap();
    let ok = min >= 2.0 - 1e-9 && (bf.value - 3.0).abs() < 1e-12;
    (
        ok,
        format!(
            "min ET over {} synthesized P5 runs {min:.6}; P3 deterministic optimum {} ({} candidates)",
            floor.len(),
            bf.value,
            bf.candidates
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. Monte Carlo

fn criterion_monte_carlo() -> Verdict {
    let start = Instant::now();
    let env = p5();
    let mut cases: Vec<(String, Solution, &str)> = vec![
        ("a".into(), fixture(&env, "p5_a"), OBJ_TIME_VAR),
        ("b".into(), fixture(&env, "p5_b"), OBJ_TIME_VAR),
        ("c".into(), fixture(&env, "p5_c"), OBJ_TIME_VAR),
        ("d".into(), fixture(&env, "p5_d"), OBJ_TIME_FAULT),
        ("e".into(), fixture(&env, "p5_e"), OBJ_TIME_FAULT),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let graphs: Vec<Environment> = (0..10).map(|i| random_graph(&mut rng, 3 + i % 3)).collect();
    let mut randoms = Vec::new();
    for (i, g) in graphs.iter().enumerate() {
        let spec = random_spec(&mut rng, g.len(), 200);
        let sol = to_solution(&init_params(g, &spec, i as u64).unwrap());
        randoms.push((format!("r{i}"), sol));
    }
    let mut flags = 0;
    let mut atoms = 0;
    let mut worst_z: f64 = 0.0;
    let mut e_fault_max = None;
    let mut check = |env: &Environment, label: &str, sol: &Solution, src: &str, seed: u64| {
        let obj: CompiledObjective = compile(&src.parse().unwrap(), env, sol.spec()).unwrap();
        let rep = validate_solution(env, sol, &obj, 100_000, seed).unwrap();
        flags += rep.flags;
        atoms += rep.atoms.len();
        for a in &rep.atoms {
            if a.flagged {
                eprintln!("{label}: {a:?}");
            }
            if a.stderr > 0.0 {
                worst_z = worst_z.max((a.analytic - a.empirical).abs() / a.stderr);
            }
            if label == "e" && a.atom.starts_with("ET(") && a.atom.ends_with(",1)") {
                e_fault_max = Some(a.empirical.max(e_fault_max.unwrap_or(0.0)));
            }
        }
    };
    for (i, (label, sol, src)) in cases.drain(..).enumerate() {
        check(&env, &label, &sol, src, i as u64);
    }
    for (i, (label, sol)) in randoms.iter().enumerate() {
        check(&graphs[i], label, sol, OBJ_TIME_VAR, 100 + i as u64);
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = flags == 0 && secs < 120.0 && e_fault_max.is_some_and(|x: f64| (x - 5.0).abs() < 0.05);
    (
        ok,
        format!(
            "{atoms} atoms on 5 fixtures + 10 random solutions at 1e5 trials: {flags} flags, worst |z| {worst_z:.2}, (e) empirical ET_R max {} | {secs:.1}s",
            fmt(e_fault_max)
        ),
    )
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut floor = Vec::new();
    let mut results: Vec<(&str, Verdict)> = Vec::new();
    results.push(("1 evaluator fixtures", criterion_fixtures()));
    results.push(("2 linear-system oracles", criterion_linear_systems()));
    results.push(("3 gradient vs finite differences", criterion_gradient()));
    results.push(("4 synthesis on P5", criterion_p5_synthesis(&mut floor)));
    results.push(("5 synthesis, longer paths + grid", criterion_longer_paths()));
    results.push(("6 Monte Carlo consistency", criterion_monte_carlo()));
    results.push(("7 optimality floor", criterion_floor(&floor)));
    let mut failed = 0;
    for (name, (ok, detail)) in &results {
        println!("{} criterion {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
