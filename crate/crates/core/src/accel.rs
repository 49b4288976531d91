//! Exact acceleration of constant-increment loops.
//!
//! A conjunctive self-loop whose every update has the form `x' = x + c`
//! can be summarized exactly: `n` applications move each variable by
//! `n*c`, and the guards only need to be checked where they are
//! strongest. A guard that gets harder with every iteration holds along
//! the whole run iff it holds at the last step; one that gets easier
//! holds iff it holds at the first. Guards that do neither (equalities
//! and disequalities on moving variables, non-monotone nonlinear
//! constraints) make the loop ineligible rather than approximated.

use num_bigint::BigInt;

use crate::logic::{fresh_aux, Formula, Literal, ProgVar, Term, VarRef};
use crate::smt::{SmtError, Solver};

/// Why a condition could not be accelerated. All of these mean "learn
/// nothing", never "learn something weaker".
#[derive(Debug, thiserror::Error)]
pub enum AccelFailure {
    #[error("condition contains a disjunction")]
    NotConjunctive,
    #[error("condition mentions auxiliary variables that cannot be eliminated")]
    HasAux,
    #[error("{0} is not updated by a constant increment")]
    NoConstantUpdate(VarRef),
    #[error("literal {0:?} fits neither an update nor a pre-state guard")]
    UnsupportedLiteral(String),
    #[error("guard {0:?} is not monotone along the loop")]
    NonMonotoneGuard(String),
    #[error(transparent)]
    Solver(#[from] SmtError),
}

/// The normal form acceleration works on: one constant increment per
/// program variable plus guards over the pre state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopShape {
    pub increments: Vec<BigInt>,
    pub guards: Vec<Literal>,
}

pub fn extract_shape(cond: &Formula, n_vars: u32) -> Result<LoopShape, AccelFailure> {
    if !cond.is_conjunctive() {
        return Err(AccelFailure::NotConjunctive);
    }
    if !cond.aux_vars().is_empty() {
        return Err(AccelFailure::HasAux);
    }
    let mut increments: Vec<Option<BigInt>> = vec![None; n_vars as usize];
    let mut guards = Vec::new();
    for lit in cond.literals() {
        let vars = lit.term.vars();
        if vars.iter().all(|v| v.is_pre()) {
            guards.push(lit);
            continue;
        }
        let unsupported = || AccelFailure::UnsupportedLiteral(lit.render(&mut |v| v.to_string()));
        let mut posts = vars.iter().filter(|v| v.is_post());
        let post = match (posts.next(), posts.next()) {
            (Some(p), None) => *p,
            _ => return Err(unsupported()),
        };
        let p = post.prog_var().expect("post var");
        let def = lit.defines(post).ok_or_else(unsupported)?;
        let step = &def - &Term::var(VarRef::Pre(p));
        let c = step.as_constant().ok_or_else(unsupported)?;
        let slot = &mut increments[p.0 as usize];
        if slot.is_some() {
            return Err(unsupported());
        }
        *slot = Some(c);
    }
    let increments = increments
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            c.ok_or(AccelFailure::NoConstantUpdate(VarRef::Post(ProgVar(
                i as u32,
            ))))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LoopShape { increments, guards })
}

/// An exact summary of `n > 0` iterations of a loop.
#[derive(Debug, Clone)]
pub struct Accelerated {
    pub cond: Formula,
    /// The iteration-count variable, existential in `cond`.
    pub n: VarRef,
}

/// Replaces every pre-state variable `x` by `x + e*c` where `c` is the
/// variable's increment.
fn shift(lit: &Literal, e: &Term, increments: &[BigInt]) -> Literal {
    use num_traits::Zero;
    let map: std::collections::BTreeMap<VarRef, Term> = increments
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(i, c)| {
            let v = VarRef::Pre(ProgVar(i as u32));
            (v, &Term::var(v) + &e.scale(c))
        })
        .collect();
    lit.substitute(&map)
}

pub fn accelerate(
    cond: &Formula,
    n_vars: u32,
    solver: &mut Solver,
) -> Result<Accelerated, AccelFailure> {
    let cond = cond.eliminate_defined_aux();
    let shape = extract_shape(&cond, n_vars)?;
    let n = VarRef::Aux(fresh_aux());
    let n_term = Term::var(n);
    let k = VarRef::Aux(fresh_aux());
    let k_term = Term::var(k);
    let k_nonneg = Formula::Lit(Literal::ge(&k_term, &Term::zero()));

    let mut parts = vec![Literal::gt(&n_term, &Term::zero())];
    for (i, c) in shape.increments.iter().enumerate() {
        let v = ProgVar(i as u32);
        parts.push(Literal::eq(
            &Term::var(VarRef::Post(v)),
            &(&Term::var(VarRef::Pre(v)) + &n_term.scale(c)),
        ));
    }
    for g in &shape.guards {
        let at_k = Formula::Lit(shift(g, &k_term, &shape.increments));
        let at_k1 = Formula::Lit(shift(g, &(&k_term + &Term::int(1)), &shape.increments));
        // Tightening: holding at iteration k+1 implies holding at k, so
        // the final check subsumes the earlier ones. `k` is shared
        // between the two sides, so this must not quantify it.
        if solver.implies(&Formula::and([k_nonneg.clone(), at_k1.clone()]), &at_k)? {
            parts.push(shift(g, &(&n_term - &Term::int(1)), &shape.increments));
            continue;
        }
        // Loosening: the first check subsumes the later ones.
        if solver.implies(&Formula::and([k_nonneg.clone(), at_k]), &at_k1)? {
            parts.push(g.clone());
            continue;
        }
        return Err(AccelFailure::NonMonotoneGuard(
            g.render(&mut |v| v.to_string()),
        ));
    }
    Ok(Accelerated {
        cond: Formula::conj(parts),
        n,
    })
}
