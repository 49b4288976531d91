//! Polynomial terms and quantifier-free formulas over integer variables.

mod formula;
mod term;

pub use formula::{Formula, Literal, Rel};
pub use term::{fresh_aux, AuxVar, Model, Monomial, ProgVar, Term, VarRef};

/// Errors from evaluating or narrowing formulas under a model.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("model has no value for {0}")]
    MissingVar(VarRef),
    #[error("model does not satisfy the formula")]
    NotSatisfied,
}
