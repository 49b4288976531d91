//! Disproves termination of integer transition systems and, in safety mode,
//! searches for reachable error locations.
//!
//! The analysis unrolls transitions into a trace, narrows each step to the
//! conjunctive case a model actually took, accelerates recursive suffixes
//! into learned transitions, and looks for loops that can be certified as
//! non-terminating. Every verdict is backed by a witness that can be
//! re-checked independently of the search.

pub mod accel;
pub mod certs;
pub mod engine;
pub mod logic;
pub mod parser;
pub mod report;
pub mod smt;
pub mod ts;
