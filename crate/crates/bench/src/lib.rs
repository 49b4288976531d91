//! Shared inputs for the benchmarks: a representative system and the
//! formulas its analysis spends time on.

use prover_core::logic::{Formula, Literal, ProgVar, Term, VarRef};
use prover_core::ts::TransitionSystem;

pub const CLIMB: &str = "\
vars x y z
init l0
rule l0 -> l1 :|: x' <= 0 && z' >= 5000 && y' <= z'
rule l1 -> l1 :|: y <= 2*z && x' = x + 1 && ((x < z && y' = y) || (x >= z && y' = y + 1)) && z' = z
rule l1 -> l2 :|: x = y && x > 2*z && x' = x && y' = y && z' = z
rule l2 -> l2 :|: x = y && x > 0 && x' = x && y' = y - 1 && z' = z
rule l2 -> l2 :|: x > 0 && y > 0 && x' = y && ((x > y && y' = x) || (x < y && y' = y)) && z' = z
";

pub fn climb_system() -> TransitionSystem {
    prover_core::parser::parse(CLIMB).expect("parses").system
}

pub fn pre(i: u32) -> Term {
    Term::var(VarRef::Pre(ProgVar(i)))
}

pub fn post(i: u32) -> Term {
    Term::var(VarRef::Post(ProgVar(i)))
}

/// A three-variable loop body with a two-way branch, the shape the
/// search narrows over and over.
pub fn branchy_step() -> Formula {
    Formula::and([
        Formula::Lit(Literal::le(&pre(1), &(&Term::int(2) * &pre(2)))),
        Formula::Lit(Literal::eq(&post(0), &(&pre(0) + &Term::int(1)))),
        Formula::or([
            Formula::and([
                Formula::Lit(Literal::lt(&pre(0), &pre(2))),
                Formula::Lit(Literal::eq(&post(1), &pre(1))),
            ]),
            Formula::and([
                Formula::Lit(Literal::ge(&pre(0), &pre(2))),
                Formula::Lit(Literal::eq(&post(1), &(&pre(1) + &Term::int(1)))),
            ]),
        ]),
        Formula::Lit(Literal::eq(&post(2), &pre(2))),
    ])
}

/// A conjunctive countdown used for the relation oracles.
pub fn countdown_step() -> Formula {
    Formula::conj(vec![
        Literal::gt(&(&pre(0) + &pre(1)), &Term::zero()),
        Literal::eq(&post(0), &(&pre(1) - &Term::int(1))),
        Literal::eq(&post(1), &(&pre(0) - &Term::int(1))),
    ])
}
