//! Acceleration against a live solver: golden summaries and exactness.

use num_bigint::BigInt;
use prover_core::accel::{accelerate, AccelFailure};
use prover_core::logic::{fresh_aux, Formula, Literal, ProgVar, Term, VarRef};
use prover_core::smt::{Solver, SolverConfig, DEFAULT_QUERY_TIMEOUT};
use prover_core::ts::{chain_conditions, enumerate_relation, TransId};

fn solver() -> Solver {
    let config = SolverConfig::locate(DEFAULT_QUERY_TIMEOUT).expect("an SMT solver");
    Solver::spawn(config).expect("solver starts")
}

/// Parses a one-rule system and returns the rule's condition.
fn cond(vars: &str, body: &str) -> Formula {
    let src = format!("vars {vars}\ninit l\nrule l -> l :|: {body}\n");
    let parsed = prover_core::parser::parse(&src).expect("parses");
    parsed.system.transition(TransId(0)).cond.clone()
}

fn pre(i: u32) -> Term {
    Term::var(VarRef::Pre(ProgVar(i)))
}

fn post(i: u32) -> Term {
    Term::var(VarRef::Post(ProgVar(i)))
}

#[test]
fn accelerating_the_stable_branch_matches_the_known_summary() {
    // x advances toward z while y and z stay put.
    let loop_cond = cond(
        "x y z",
        "y <= 2*z && x' = x + 1 && x < z && y' = y && z' = z",
    );
    let mut s = solver();
    let acc = accelerate(&loop_cond, 3, &mut s).expect("accelerates");

    // m > 0 && x' = x + m && x + m <= z && y' = y && z' = z && y <= 2z
    let m = Term::var(VarRef::Aux(fresh_aux()));
    let expected = Formula::conj([
        Literal::gt(&m, &Term::zero()),
        Literal::eq(&post(0), &(&pre(0) + &m)),
        Literal::le(&(&pre(0) + &m), &pre(2)),
        Literal::eq(&post(1), &pre(1)),
        Literal::eq(&post(2), &pre(2)),
        Literal::le(&pre(1), &pre(2).scale(&BigInt::from(2))),
    ]);
    assert!(s.equivalent(&acc.cond, &expected).unwrap());
}

#[test]
fn accelerating_the_drifting_branch_shifts_its_guard() {
    // x and y advance together; the guard on y tightens every step.
    let loop_cond = cond(
        "x y z",
        "y <= 2*z && x' = x + 1 && x >= z && y' = y + 1 && z' = z",
    );
    let mut s = solver();
    let acc = accelerate(&loop_cond, 3, &mut s).expect("accelerates");

    // m > 0 && x' = x + m && x >= z && y' = y + m && z' = z && y + m - 1 <= 2z
    let m = Term::var(VarRef::Aux(fresh_aux()));
    let expected = Formula::conj([
        Literal::gt(&m, &Term::zero()),
        Literal::eq(&post(0), &(&pre(0) + &m)),
        Literal::ge(&pre(0), &pre(2)),
        Literal::eq(&post(1), &(&pre(1) + &m)),
        Literal::eq(&post(2), &pre(2)),
        Literal::le(
            &(&(&pre(1) + &m) - &Term::int(1)),
            &pre(2).scale(&BigInt::from(2)),
        ),
    ]);
    assert!(s.equivalent(&acc.cond, &expected).unwrap());
}

#[test]
fn one_iteration_of_the_summary_is_the_original_step() {
    let loop_cond = cond("x y", "x' = x + 2 && y' = y - 1 && y > 0 && x < y");
    let mut s = solver();
    let acc = accelerate(&loop_cond, 2, &mut s).expect("accelerates");
    let once = Formula::and([
        acc.cond.clone(),
        Formula::Lit(Literal::eq(&Term::var(acc.n), &Term::int(1))),
    ]);
    assert!(s.equivalent(&once, &loop_cond).unwrap());
}

#[test]
fn summaries_enumerate_exactly_the_iterated_relation() {
    let loop_cond = cond("x y", "x' = x + 1 && y' = y && x < y");
    let mut s = solver();
    let acc = accelerate(&loop_cond, 2, &mut s).expect("accelerates");

    let bound = 3;
    let max_n = 4;
    let bounded = Formula::and([
        acc.cond.clone(),
        Formula::Lit(Literal::le(&Term::var(acc.n), &Term::int(max_n))),
    ]);
    let got = enumerate_relation(&bounded, 2, bound, max_n);

    let mut expected = std::collections::BTreeSet::new();
    let mut chained = loop_cond.clone();
    for _ in 0..max_n {
        expected.extend(enumerate_relation(&chained, 2, bound, 2 * bound + 2));
        chained = chain_conditions(2, &chained, &loop_cond);
    }
    assert_eq!(got, expected);
}

#[test]
fn equality_guards_on_moving_variables_are_rejected() {
    let loop_cond = cond("x y", "x' = x + 1 && y' = y && x = y");
    let mut s = solver();
    assert!(matches!(
        accelerate(&loop_cond, 2, &mut s),
        Err(AccelFailure::NonMonotoneGuard(_))
    ));
}
