//! Certificates of non-termination for conjunctive loops.
//!
//! A certificate for a self-loop at some location is a satisfiable
//! formula over the pre-state variables such that every state
//! satisfying it starts an infinite run of the loop. Two searches are
//! implemented: a fixed point (a state that can step to itself) and a
//! recurrent guard (the loop's own pre-state constraints, when they are
//! closed under stepping and every constrained state can step).

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;

use crate::logic::{fresh_aux, Formula, Literal, ProgVar, Term, VarRef};
use crate::smt::{SatResult, SmtError, Solver};
use crate::ts::{chain_conditions, TransId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Technique {
    FixedPoint,
    RecurrentGuard,
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Technique::FixedPoint => write!(f, "fixed point"),
            Technique::RecurrentGuard => write!(f, "recurrent guard"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Certificate {
    /// Over pre-state variables only; every model starts an infinite
    /// run of the loop the certificate was found for.
    pub psi: Formula,
    pub technique: Technique,
    /// Ids of the transitions whose chaining produced the loop.
    pub source: Vec<TransId>,
}

impl Certificate {
    /// The step relation the certificate's obligations are checked
    /// against. A fixed point only ever repeats its own state, so its
    /// invariants hold for the loop restricted to stationary steps; the
    /// restriction is still a subrelation of the loop.
    pub fn step_cond(&self, loop_cond: &Formula, n_vars: u32) -> Formula {
        match self.technique {
            Technique::FixedPoint => stationary(loop_cond, n_vars),
            Technique::RecurrentGuard => loop_cond.clone(),
        }
    }
}

fn stationary(cond: &Formula, n_vars: u32) -> Formula {
    let frozen = (0..n_vars).map(|i| {
        Literal::eq(
            &Term::var(VarRef::Post(ProgVar(i))),
            &Term::var(VarRef::Pre(ProgVar(i))),
        )
    });
    Formula::and([cond.clone(), Formula::conj(frozen)])
}

/// The three obligations a certificate carries: `psi` is satisfiable,
/// stepping cannot leave `psi`, and every `psi` state can step.
pub fn holds(
    psi: &Formula,
    step_cond: &Formula,
    n_vars: u32,
    solver: &mut Solver,
) -> Result<bool, SmtError> {
    if solver.sat_scoped([psi])? != SatResult::Sat {
        return Ok(false);
    }
    let pre_to_post: BTreeMap<VarRef, Term> = (0..n_vars)
        .map(|i| (VarRef::Pre(ProgVar(i)), Term::var(VarRef::Post(ProgVar(i)))))
        .collect();
    let stays = psi.substitute(&pre_to_post);
    if !solver.entails(&Formula::and([psi.clone(), step_cond.clone()]), &stays)? {
        return Ok(false);
    }
    progress(psi, step_cond, n_vars, solver)
}

/// Validity of "psi implies some post state satisfies the condition".
fn progress(
    psi: &Formula,
    step_cond: &Formula,
    n_vars: u32,
    solver: &mut Solver,
) -> Result<bool, SmtError> {
    // Renaming the post variables to fresh auxiliaries makes them
    // existential on the right-hand side of the entailment, alongside
    // any auxiliaries the condition already has.
    let post_to_aux: BTreeMap<VarRef, Term> = (0..n_vars)
        .map(|i| {
            (
                VarRef::Post(ProgVar(i)),
                Term::var(VarRef::Aux(fresh_aux())),
            )
        })
        .collect();
    if solver.entails(psi, &step_cond.substitute(&post_to_aux))? {
        return Ok(true);
    }
    // The quantified query can come back unknown; a syntactic check
    // rescues the common shape where every post variable is either
    // pinned by an equation over the pre state or not mentioned at all.
    syntactic_progress(psi, step_cond, solver)
}

fn syntactic_progress(
    psi: &Formula,
    step_cond: &Formula,
    solver: &mut Solver,
) -> Result<bool, SmtError> {
    if !step_cond.is_conjunctive() {
        return Ok(false);
    }
    let mut defined = BTreeMap::new();
    let mut guards = Vec::new();
    for lit in step_cond.literals() {
        let vars = lit.term.vars();
        if vars.iter().all(|v| v.is_pre()) {
            guards.push(lit);
            continue;
        }
        if vars.iter().any(|v| v.is_aux()) {
            return Ok(false);
        }
        let mut posts = vars.iter().filter(|v| v.is_post());
        let post = match (posts.next(), posts.next()) {
            (Some(p), None) => *p,
            _ => return Ok(false),
        };
        if lit.defines(post).is_none() || defined.insert(post, ()).is_some() {
            return Ok(false);
        }
    }
    // Updates are functional and unconstrained posts are free, so a
    // successor exists wherever the guards hold.
    solver.implies(psi, &Formula::conj(guards))
}

pub fn certify_fixed_point(
    cond: &Formula,
    n_vars: u32,
    source: &[TransId],
    solver: &mut Solver,
) -> Result<Option<Certificate>, SmtError> {
    let step_cond = stationary(cond, n_vars);
    let model = match solver.model_scoped([&step_cond])? {
        Some(m) => m,
        None => return Ok(None),
    };
    let psi = Formula::conj((0..n_vars).map(|i| {
        let v = VarRef::Pre(ProgVar(i));
        let val = model.get(&v).cloned().unwrap_or_default();
        Literal::eq(&Term::var(v), &Term::int(val))
    }));
    if !holds(&psi, &step_cond, n_vars, solver)? {
        return Ok(None);
    }
    Ok(Some(Certificate {
        psi,
        technique: Technique::FixedPoint,
        source: source.to_vec(),
    }))
}

pub fn certify_recurrent_guard(
    cond: &Formula,
    n_vars: u32,
    source: &[TransId],
    solver: &mut Solver,
) -> Result<Option<Certificate>, SmtError> {
    if !cond.is_conjunctive() {
        return Ok(None);
    }
    let guard = cond
        .literals()
        .into_iter()
        .filter(|l| l.term.vars().iter().all(|v| v.is_pre()));
    let psi = Formula::conj(guard);
    if !holds(&psi, cond, n_vars, solver)? {
        return Ok(None);
    }
    Ok(Some(Certificate {
        psi,
        technique: Technique::RecurrentGuard,
        source: source.to_vec(),
    }))
}

/// Chains a recursive sequence of conjunctive conditions and searches
/// for a certificate of the resulting loop. The recurrent guard is
/// preferred: it admits every state it describes, whereas a fixed
/// point pins a single solver-chosen state that the enclosing search
/// may never be able to reach. The fixed point remains as a fallback
/// for loops whose guard is not recurrent under all successors.
pub fn certify(
    conds: &[Formula],
    n_vars: u32,
    source: Vec<TransId>,
    solver: &mut Solver,
) -> Result<Option<Certificate>, SmtError> {
    let Some(first) = conds.first() else {
        return Ok(None);
    };
    let mut loop_cond = first.clone();
    for c in &conds[1..] {
        loop_cond = chain_conditions(n_vars, &loop_cond, c);
    }
    let loop_cond = loop_cond.eliminate_defined_aux();
    if let Some(c) = certify_recurrent_guard(&loop_cond, n_vars, &source, solver)? {
        return Ok(Some(c));
    }
    certify_fixed_point(&loop_cond, n_vars, &source, solver)
}

/// Follows the loop from `start` for up to `steps` steps, letting the
/// solver pick successors. Returns the states visited, starting with
/// `start`; the walk ends early if no successor exists. Post variables
/// the condition leaves unconstrained keep their value.
pub fn simulate(
    cond: &Formula,
    n_vars: u32,
    start: &[BigInt],
    steps: usize,
    solver: &mut Solver,
) -> Result<Vec<Vec<BigInt>>, SmtError> {
    let mut states = vec![start.to_vec()];
    let mut current = start.to_vec();
    for _ in 0..steps {
        let pin = Formula::conj((0..n_vars).map(|i| {
            Literal::eq(
                &Term::var(VarRef::Pre(ProgVar(i))),
                &Term::int(current[i as usize].clone()),
            )
        }));
        match solver.model_scoped([cond, &pin])? {
            Some(model) => {
                current = (0..n_vars)
                    .map(|i| {
                        model
                            .get(&VarRef::Post(ProgVar(i)))
                            .cloned()
                            .unwrap_or_else(|| current[i as usize].clone())
                    })
                    .collect();
                states.push(current.clone());
            }
            None => break,
        }
    }
    Ok(states)
}
