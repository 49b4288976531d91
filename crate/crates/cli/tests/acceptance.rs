//! The acceptance gate. Each test covers one shipping criterion and
//! prints a `criterion N: pass` line (run with `-- --nocapture` to see
//! them); the harness summary doubles as the pass/fail report.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prover_core::accel::{accelerate, AccelFailure};
use prover_core::certs::simulate;
use prover_core::engine::{analyze, verify_witness, Analysis, Event, Mode, SearchOptions, Verdict};
use prover_core::logic::{fresh_aux, Formula, Literal, Model, ProgVar, Term, VarRef};
use prover_core::smt::{Solver, SolverConfig, DEFAULT_QUERY_TIMEOUT};
use prover_core::ts::{chain_conditions, enumerate_relation, LocKind, Provenance};

fn config() -> SolverConfig {
    SolverConfig::locate(DEFAULT_QUERY_TIMEOUT).expect("an SMT solver")
}

fn solver() -> Solver {
    Solver::spawn(config()).expect("solver starts")
}

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn run_corpus_file(name: &str, mode: Mode) -> Analysis {
    let path = corpus_dir().join(name);
    let text = std::fs::read_to_string(&path).expect("corpus file");
    let sys = prover_core::parser::parse(&text)
        .expect("corpus parses")
        .system;
    analyze(&sys, mode, &SearchOptions::default(), &config()).expect("analysis runs")
}

fn prover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prover"))
        .args(args)
        .output()
        .expect("prover runs")
}

fn first_line(out: &Output) -> &str {
    std::str::from_utf8(&out.stdout)
        .expect("utf-8")
        .lines()
        .next()
        .unwrap_or_default()
}

fn pre(i: u32) -> Term {
    Term::var(VarRef::Pre(ProgVar(i)))
}

fn post(i: u32) -> Term {
    Term::var(VarRef::Post(ProgVar(i)))
}

#[test]
fn criterion_1_the_leapfrog_run_is_disproved_with_the_diagonal_certificate() {
    let started = Instant::now();
    let path = corpus_dir().join("leapfrog.its");
    let out = prover(&["--mode", "nonterm", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(first_line(&out), "NO");
    assert!(started.elapsed() < Duration::from_secs(60), "over budget");

    let analysis = run_corpus_file("leapfrog.its", Mode::Nonterm);
    let Verdict::Nonterm(w) = &analysis.verdict else {
        panic!("expected non-termination, got {:?}", analysis.verdict);
    };
    let cert = w.certificate.as_ref().expect("certificate");
    let diagonal = Formula::and([
        Formula::Lit(Literal::eq(&pre(0), &pre(1))),
        Formula::Lit(Literal::gt(&pre(0), &Term::int(1))),
    ]);
    let mut s = solver();
    assert!(
        s.entails(&cert.psi, &diagonal).unwrap(),
        "psi misses the diagonal"
    );
    let sys = &analysis.system;
    let last = sys.transition(w.steps.last().unwrap().parent);
    assert_eq!(sys.loc(last.dst).name, "l2");
    println!(
        "criterion 1: pass - NO with a certificate entailing x = y && x > 1, in {:.2}s",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_2_safety_mode_reaches_the_error_and_learns_both_climb_summaries() {
    let started = Instant::now();
    let path = corpus_dir().join("leapfrog_err.its");
    let out = prover(&["--mode", "safety", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(first_line(&out), "unsafe");

    let analysis = run_corpus_file("leapfrog_err.its", Mode::Safety);
    let Verdict::Unsafe(w) = &analysis.verdict else {
        panic!("expected unsafe, got {:?}", analysis.verdict);
    };
    let sys = &analysis.system;
    assert_eq!(
        sys.loc(sys.transition(w.steps.last().unwrap().parent).dst)
            .kind,
        LocKind::Err
    );

    // The two summaries of the climb: x advances by n while it stays
    // below z with y frozen, and above z with y dragged along.
    let n = Term::var(VarRef::Aux(fresh_aux()));
    let below = Formula::conj(vec![
        Literal::le(&pre(1), &(&Term::int(2) * &pre(2))),
        Literal::gt(&n, &Term::zero()),
        Literal::eq(&post(0), &(&pre(0) + &n)),
        Literal::le(&(&pre(0) + &n), &pre(2)),
        Literal::eq(&post(1), &pre(1)),
        Literal::eq(&post(2), &pre(2)),
    ]);
    let above = Formula::conj(vec![
        Literal::le(
            &(&(&pre(1) + &n) - &Term::int(1)),
            &(&Term::int(2) * &pre(2)),
        ),
        Literal::gt(&n, &Term::zero()),
        Literal::eq(&post(0), &(&pre(0) + &n)),
        Literal::ge(&pre(0), &pre(2)),
        Literal::eq(&post(1), &(&pre(1) + &n)),
        Literal::eq(&post(2), &pre(2)),
    ]);
    let mut s = solver();
    for (what, expected) in [("below", below), ("above", above)] {
        let found = sys
            .derived()
            .iter()
            .filter(|t| matches!(t.provenance, Provenance::Accelerated { .. }))
            .any(|t| s.equivalent(&t.cond, &expected).unwrap());
        assert!(found, "no learned transition matches the {what}-z climb");
    }
    assert!(started.elapsed() < Duration::from_secs(60), "over budget");
    println!(
        "criterion 2: pass - unsafe with both climb summaries learned, in {:.2}s",
        started.elapsed().as_secs_f64()
    );
}

/// A generated loop: every variable moves by a constant increment (or,
/// to exercise the failure path, copies another variable), guarded by
/// linear comparisons over the pre state.
#[derive(Debug)]
struct GenLoop {
    /// `(base, c)` per variable: `x_i' = x_base + c`.
    updates: Vec<(usize, i64)>,
    /// `(coeffs, constant, rel)` with `rel` indexing REL_TABLE.
    guards: Vec<(Vec<i64>, i64, usize)>,
}

const REL_TABLE: [fn(&Term, &Term) -> Literal; 6] = [
    Literal::le,
    Literal::lt,
    Literal::ge,
    Literal::gt,
    Literal::eq,
    Literal::ne,
];

fn rel_holds(rel: usize, v: i64) -> bool {
    match rel {
        0 => v <= 0,
        1 => v < 0,
        2 => v >= 0,
        3 => v > 0,
        4 => v == 0,
        _ => v != 0,
    }
}

fn gen_guard(rng: &mut ChaCha8Rng, n_vars: usize) -> (Vec<i64>, i64, usize) {
    let coeffs: Vec<i64> = (0..n_vars).map(|_| rng.random_range(-3..=3)).collect();
    let constant = rng.random_range(-3..=3);
    // Orders four to one over equalities, which rarely stay invariant.
    let rel = *[0, 1, 2, 3, 0, 1, 2, 3, 4, 5]
        .get(rng.random_range(0..10))
        .unwrap();
    (coeffs, constant, rel)
}

fn guard_term(coeffs: &[i64], constant: i64, vars: &dyn Fn(u32) -> Term) -> Term {
    let mut t = Term::int(constant);
    for (i, c) in coeffs.iter().enumerate() {
        t = &t + &vars(i as u32).scale(&BigInt::from(*c));
    }
    t
}

impl GenLoop {
    fn random(rng: &mut ChaCha8Rng, n_vars: usize) -> GenLoop {
        let updates = (0..n_vars)
            .map(|i| {
                // One update in five copies a different variable, which
                // acceleration must reject rather than approximate.
                let base = if rng.random_range(0..5) == 0 {
                    rng.random_range(0..n_vars)
                } else {
                    i
                };
                (base, rng.random_range(-3..=3))
            })
            .collect();
        let guards = (0..rng.random_range(0..=2))
            .map(|_| gen_guard(rng, n_vars))
            .collect();
        GenLoop { updates, guards }
    }

    fn is_pure(&self) -> bool {
        self.updates
            .iter()
            .enumerate()
            .all(|(i, (base, _))| *base == i)
    }

    fn formula(&self) -> Formula {
        let mut lits = Vec::new();
        for (coeffs, constant, rel) in &self.guards {
            let t = guard_term(coeffs, *constant, &pre);
            lits.push(REL_TABLE[*rel](&t, &Term::zero()));
        }
        for (i, (base, c)) in self.updates.iter().enumerate() {
            lits.push(Literal::eq(
                &post(i as u32),
                &(&pre(*base as u32) + &Term::int(*c)),
            ));
        }
        Formula::conj(lits)
    }

    fn guards_hold(&self, state: &[i64]) -> bool {
        self.guards.iter().all(|(coeffs, constant, rel)| {
            let v = constant + coeffs.iter().zip(state).map(|(c, x)| c * x).sum::<i64>();
            rel_holds(*rel, v)
        })
    }

    /// The union of the 1..=kmax-fold compositions of the loop relation,
    /// restricted to pre and post states inside the bound. Intermediate
    /// states are free, matching true relational composition.
    fn compositions(&self, bound: i64, kmax: usize) -> BTreeSet<(Vec<i64>, Vec<i64>)> {
        assert!(self.is_pure());
        let incs: Vec<i64> = self.updates.iter().map(|(_, c)| *c).collect();
        let n = incs.len();
        let mut out = BTreeSet::new();
        // Walk the grid without recursion: odometer over [-bound, bound]^n.
        let mut s = vec![-bound; n];
        loop {
            let mut cur = s.clone();
            for _ in 1..=kmax {
                if !self.guards_hold(&cur) {
                    break;
                }
                for (x, c) in cur.iter_mut().zip(&incs) {
                    *x += c;
                }
                if cur.iter().all(|x| x.abs() <= bound) {
                    out.insert((s.clone(), cur.clone()));
                }
            }
            let mut i = 0;
            loop {
                if i == n {
                    return out;
                }
                s[i] += 1;
                if s[i] <= bound {
                    break;
                }
                s[i] = -bound;
                i += 1;
            }
        }
    }
}

#[test]
fn criterion_3_acceleration_is_exact_on_random_constant_increment_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x61cce1);
    let mut s = solver();
    let (mut tried, mut exact, mut rejected) = (0usize, 0usize, 0usize);
    while tried < 120 {
        let shape = GenLoop::random(&mut rng, 3);
        let cond = shape.formula();
        tried += 1;
        match accelerate(&cond, 3, &mut s) {
            Err(AccelFailure::Solver(e)) => panic!("solver failed: {e}"),
            Err(_) => rejected += 1,
            Ok(acc) => {
                let bounded = Formula::and([
                    acc.cond.clone(),
                    Formula::Lit(Literal::le(&Term::var(acc.n), &Term::int(4))),
                ]);
                let got = enumerate_relation(&bounded, 3, 3, 4);
                let want = shape.compositions(3, 4);
                assert_eq!(got, want, "acceleration is inexact for {shape:?}");
                exact += 1;
            }
        }
    }
    assert!(tried >= 100, "suite too small");
    assert!(
        exact >= 40,
        "too few accelerations succeeded to be meaningful: {exact}"
    );
    println!("criterion 3: pass - {tried} loops: {exact} accelerated exactly, {rejected} rejected");
}

fn gen_nnf(rng: &mut ChaCha8Rng, n_vars: usize, depth: usize) -> Formula {
    if depth >= 2 || rng.random_range(0..3) == 0 {
        let mut coeffs = vec![0i64; n_vars];
        for _ in 0..rng.random_range(1..=2) {
            coeffs[rng.random_range(0..n_vars)] = rng.random_range(-2..=2);
        }
        let (_, constant, rel) = gen_guard(rng, 0);
        let t = guard_term(&coeffs, constant, &pre);
        return Formula::Lit(REL_TABLE[rel](&t, &Term::zero()));
    }
    let kids: Vec<Formula> = (0..rng.random_range(2..=3))
        .map(|_| gen_nnf(rng, n_vars, depth + 1))
        .collect();
    if rng.random_range(0..2) == 0 {
        Formula::and(kids)
    } else {
        Formula::or(kids)
    }
}

#[test]
fn criterion_4_sips_cover_their_formula_and_never_escape_it() {
    let n_vars = 4usize;
    let bound = 3i64;
    // Every assignment of the four variables over [-3, 3].
    let mut grid: Vec<Model> = Vec::new();
    let mut s = vec![-bound; n_vars];
    'grid: loop {
        grid.push(
            s.iter()
                .enumerate()
                .map(|(i, v)| (VarRef::Pre(ProgVar(i as u32)), BigInt::from(*v)))
                .collect(),
        );
        let mut i = 0;
        loop {
            if i == n_vars {
                break 'grid;
            }
            s[i] += 1;
            if s[i] <= bound {
                break;
            }
            s[i] = -bound;
            i += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x51b);
    let mut nontrivial = 0usize;
    for round in 0..210 {
        let psi = gen_nnf(&mut rng, n_vars, 0);
        let truth: Vec<bool> = grid.iter().map(|m| psi.evaluate(m).unwrap()).collect();
        if truth.iter().any(|t| *t) && !truth.iter().all(|t| *t) {
            nontrivial += 1;
        }
        let mut sips: BTreeSet<Vec<Literal>> = BTreeSet::new();
        for (m, t) in grid.iter().zip(&truth) {
            if *t {
                sips.insert(psi.sip(m).unwrap());
            }
        }
        let mut union = vec![false; grid.len()];
        for lits in &sips {
            let sip = Formula::conj(lits.clone());
            for (i, m) in grid.iter().enumerate() {
                if sip.evaluate(m).unwrap() {
                    assert!(truth[i], "round {round}: sip {sip:?} escapes {psi:?}");
                    union[i] = true;
                }
            }
        }
        assert_eq!(union, truth, "round {round}: sips miss models of {psi:?}");
    }
    assert!(nontrivial >= 100, "too many trivial formulas: {nontrivial}");
    println!("criterion 4: pass - 210 formulas, {nontrivial} nontrivial, sips exact on all");
}

#[test]
fn criterion_5_the_cycle_regressions_stay_proven_without_unsound_pruning() {
    for name in ["ping_pong.its", "three_cycle.its"] {
        let path = corpus_dir().join(name);
        let out = prover(&[path.to_str().unwrap()]);
        assert!(out.status.success());
        assert_eq!(first_line(&out), "NO", "{name}");
    }
    // The straight l0 -> l1 -> l2 prefix is entailed by the direct hop,
    // but only loops may be pruned; the log must show no other covers.
    let analysis = run_corpus_file("ping_pong.its", Mode::Nonterm);
    assert!(matches!(analysis.verdict, Verdict::Nonterm(_)));
    let mut covers = 0usize;
    for event in &analysis.log {
        if let Event::Covered { src, dst, .. } = event {
            assert_eq!(src, dst, "a non-recursive suffix was pruned: {event}");
            covers += 1;
        }
    }
    println!("criterion 5: pass - both cycles disproved; {covers} covers, all recursive");
}

#[test]
fn criterion_6_terminating_controls_stay_unproven_and_witnesses_replay() {
    let terminating = [
        "countdown.its",
        "bounded_climb.its",
        "two_phase.its",
        "race_to_meet.its",
        "descending_pair.its",
        "split_braid.its",
        "strided_climb.its",
        "box_walk.its",
        "paired_countdown.its",
        "no_loop.its",
    ];
    for name in terminating {
        let analysis = run_corpus_file(name, Mode::Nonterm);
        assert!(
            !matches!(analysis.verdict, Verdict::Nonterm(_)),
            "{name} is terminating but was disproved"
        );
    }

    // Every NO this suite can produce: re-verify against a fresh solver
    // process and replay the certified loop for 25 concrete steps.
    let mut replayed = 0usize;
    for name in ["leapfrog.its", "ping_pong.its", "three_cycle.its"] {
        let analysis = run_corpus_file(name, Mode::Nonterm);
        let Verdict::Nonterm(w) = &analysis.verdict else {
            panic!("{name}: expected non-termination");
        };
        let sys = &analysis.system;
        assert!(
            verify_witness(w, sys, &config()).unwrap(),
            "{name}: witness rejected"
        );

        let cert = w.certificate.as_ref().expect("certificate");
        let n_vars = sys.n_vars();
        let loop_cond = w
            .loop_sips
            .iter()
            .skip(1)
            .fold(w.loop_sips[0].clone(), |acc, sip| {
                chain_conditions(n_vars, &acc, sip)
            })
            .eliminate_defined_aux();
        let step = cert.step_cond(&loop_cond, n_vars);
        let start = w.tip_state(n_vars).expect("tip state");
        let mut s = solver();
        let run = simulate(&step, n_vars, &start, 25, &mut s).unwrap();
        assert_eq!(run.len(), 26, "{name}: the loop stalled");
        for state in &run {
            let m: Model = state
                .iter()
                .enumerate()
                .map(|(i, v)| (VarRef::Pre(ProgVar(i as u32)), v.clone()))
                .collect();
            assert!(
                cert.psi.evaluate(&m).unwrap(),
                "{name}: simulation left the certified set at {state:?}"
            );
        }
        replayed += 1;
    }
    println!("criterion 6: pass - 10 controls unproven; {replayed} witnesses re-verified and replayed 25 steps");
}

fn gen_conj_cond(rng: &mut ChaCha8Rng, n_vars: usize) -> Formula {
    let lits = (0..rng.random_range(1..=4))
        .map(|_| {
            let mut coeffs = vec![0i64; 2 * n_vars];
            for _ in 0..rng.random_range(1..=2) {
                coeffs[rng.random_range(0..2 * n_vars)] = rng.random_range(-2..=2);
            }
            let (_, constant, rel) = gen_guard(rng, 0);
            let vars = |i: u32| {
                if (i as usize) < n_vars {
                    pre(i)
                } else {
                    post(i - n_vars as u32)
                }
            };
            let t = guard_term(&coeffs, constant, &vars);
            REL_TABLE[rel](&t, &Term::zero())
        })
        .collect::<Vec<_>>();
    Formula::conj(lits)
}

#[test]
fn criterion_7_chaining_matches_relational_composition() {
    let n_vars = 2u32;
    let bound = 2i64;
    let mut rng = ChaCha8Rng::seed_from_u64(0xc4a1);
    let (mut checked, mut nonempty) = (0usize, 0usize);
    while checked < 150 {
        let a = gen_conj_cond(&mut rng, n_vars as usize);
        let b = gen_conj_cond(&mut rng, n_vars as usize);
        let ra = enumerate_relation(&a, n_vars, bound, bound);
        let rb = enumerate_relation(&b, n_vars, bound, bound);
        let mut want = BTreeSet::new();
        for (s, t) in &ra {
            for (t2, u) in &rb {
                if t == t2 {
                    want.insert((s.clone(), u.clone()));
                }
            }
        }
        let chained = chain_conditions(n_vars, &a, &b);
        let got = enumerate_relation(&chained, n_vars, bound, bound);
        assert_eq!(
            got, want,
            "chain of {a:?} and {b:?} diverges from composition"
        );
        checked += 1;
        if !want.is_empty() {
            nonempty += 1;
        }
    }
    assert!(nonempty >= 40, "too few nonempty compositions: {nonempty}");
    println!("criterion 7: pass - {checked} pairs, {nonempty} with nonempty composition, zero mismatches");
}

#[test]
fn criterion_8_full_corpus_runs_are_byte_identical() {
    let dir = corpus_dir();
    let expected = std::fs::read_to_string(dir.join("expected.txt")).expect("expectations");
    let mut files = 0usize;
    for line in expected.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (name, token) = (parts.next().unwrap(), parts.next().unwrap());
        let mode = match token {
            "safe" | "unsafe" => "safety",
            _ => "nonterm",
        };
        let path = dir.join(name);
        let args = ["--mode", mode, "--proof", path.to_str().unwrap()];
        let one = prover(&args);
        let two = prover(&args);
        assert!(one.status.success(), "{name} failed");
        assert_eq!(first_line(&one), token, "{name}");
        assert_eq!(
            one.stdout,
            two.stdout,
            "{name}: two runs disagree:\n--- first\n{}\n--- second\n{}",
            String::from_utf8_lossy(&one.stdout),
            String::from_utf8_lossy(&two.stdout)
        );
        files += 1;
    }
    assert_eq!(files, 14, "corpus shrank");
    println!("criterion 8: pass - {files} files, verdicts and proofs byte-identical across reruns");
}
