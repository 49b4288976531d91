//! The proof search: a backtracking unrolling of the transition system
//! that learns accelerated and certified transitions as it goes.
//!
//! The search keeps a trace of conjunctive steps, each narrowed to the
//! branch a concrete model took, together with one set of blocked
//! variants per trace position. Recursive suffixes are handed to the
//! certificate search and to acceleration; learned transitions join the
//! store and compete with the originals for the next step. A refuted
//! search produces a witness that is re-verified from scratch before
//! the verdict is reported.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::{Duration, Instant};

use num_bigint::BigInt;

use crate::accel::{accelerate, AccelFailure};
use crate::certs::{certify, holds, Certificate};
use crate::logic::{fresh_aux, AuxVar, Formula, Model, ProgVar, VarRef};
use crate::smt::{SatResult, SmtError, Solver, SolverConfig};
use crate::ts::{
    chain_conditions, LocId, LocKind, Provenance, TransId, Transition, TransitionSystem,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Nonterm,
    Safety,
}

/// Which store transitions the step rule tries first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StepOrder {
    /// Learned error transitions, then learned loops newest first,
    /// then originals in input order: reach a refutation early.
    #[default]
    LearnedFirst,
    /// Plain store order: originals as written, learned afterwards.
    FileOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuffixOrder {
    LongestFirst,
    ShortestFirst,
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    pub wall: Duration,
    /// Trace depth at which the search stops extending and backtracks.
    pub max_depth: usize,
    pub max_learned: usize,
    pub order: StepOrder,
    pub covered_order: SuffixOrder,
    pub accelerate_order: SuffixOrder,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            wall: Duration::from_secs(60),
            max_depth: 50,
            max_learned: 200,
            order: StepOrder::LearnedFirst,
            covered_order: SuffixOrder::LongestFirst,
            accelerate_order: SuffixOrder::ShortestFirst,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("the system has no initial location")]
    NoInit,
    #[error("transition {0} leads to the error location; use safety mode for reachability")]
    UnsafeInput(String),
    #[error(transparent)]
    Smt(#[from] SmtError),
}

/// One rule application, kept for diagnostics and tests.
#[derive(Clone, Debug)]
pub enum Event {
    Step {
        id: TransId,
        sip: Formula,
    },
    Accelerated {
        id: TransId,
        of: Vec<TransId>,
    },
    AccelFailed {
        of: Vec<TransId>,
        reason: String,
    },
    CertLearned {
        id: TransId,
        of: Vec<TransId>,
    },
    CertFailed {
        of: Vec<TransId>,
    },
    CertRedundant {
        of: Vec<TransId>,
    },
    Covered {
        suffix: Vec<TransId>,
        by: TransId,
        src: LocId,
        dst: LocId,
    },
    Backtracked {
        id: TransId,
    },
    Refuted {
        id: TransId,
    },
    Exhausted,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids = |v: &[TransId]| {
            v.iter()
                .map(|t| t.0.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            Event::Step { id, sip } => {
                write!(f, "step {} [{}]", id.0, sip.render(&mut |v| v.to_string()))
            }
            Event::Accelerated { id, of } => write!(f, "accelerate [{}] -> {}", ids(of), id.0),
            Event::AccelFailed { of, reason } => {
                write!(f, "accelerate [{}] failed: {}", ids(of), reason)
            }
            Event::CertLearned { id, of } => write!(f, "nonterm [{}] -> {}", ids(of), id.0),
            Event::CertFailed { of } => write!(f, "nonterm [{}] found no certificate", ids(of)),
            Event::CertRedundant { of } => {
                write!(f, "nonterm [{}] certificate already covered", ids(of))
            }
            Event::Covered { suffix, by, .. } => {
                write!(f, "covered [{}] by {}", ids(suffix), by.0)
            }
            Event::Backtracked { id } => write!(f, "backtrack {}", id.0),
            Event::Refuted { id } => write!(f, "refute via {}", id.0),
            Event::Exhausted => write!(f, "search exhausted"),
        }
    }
}

/// One step of a reconstructible run: which store transition was taken
/// and the conjunctive variant of its condition that was followed.
#[derive(Clone, Debug)]
pub struct WitnessStep {
    pub parent: TransId,
    pub sip: Formula,
}

/// Everything a verdict rests on. `steps` reach the certified location
/// (or the error location in safety mode); `model` assigns the
/// variables of the canonical unrolling of `steps`.
#[derive(Clone, Debug)]
pub struct Witness {
    pub steps: Vec<WitnessStep>,
    pub certificate: Option<Certificate>,
    /// Conjunctive conditions of the certified loop, parallel to
    /// `certificate.source`.
    pub loop_sips: Vec<Formula>,
    pub model: Model,
}

impl Witness {
    /// The state the prefix ends in, read off the model.
    pub fn tip_state(&self, n_vars: u32) -> Option<Vec<BigInt>> {
        let copies = copy_row(self.steps.len(), n_vars);
        copies.iter().map(|v| self.model.get(v).cloned()).collect()
    }
}

#[derive(Clone, Debug)]
pub enum Verdict {
    Nonterm(Witness),
    Unsafe(Witness),
    Safe,
    Unknown(String),
}

impl Verdict {
    /// The verdict token, the first line of any output.
    pub fn token(&self) -> &'static str {
        match self {
            Verdict::Nonterm(_) => "NO",
            Verdict::Unsafe(_) => "unsafe",
            Verdict::Safe => "safe",
            Verdict::Unknown(_) => "MAYBE",
        }
    }
}

#[derive(Debug)]
pub struct Analysis {
    pub verdict: Verdict,
    /// The final store: originals plus everything learned.
    pub system: TransitionSystem,
    pub log: Vec<Event>,
}

/// The canonical renaming of an unrolled prefix. State copy `d` of
/// program variable `i` is the auxiliary `d*n_vars + i`; each step's own
/// auxiliaries follow, numbered in order of appearance. Witness models
/// are keyed by these variables, so they can be re-checked by anyone
/// who unrolls the same steps.
pub struct Unrolled {
    pub cond: Formula,
    pub copies: Vec<Vec<VarRef>>,
}

fn copy_row(depth: usize, n_vars: u32) -> Vec<VarRef> {
    (0..n_vars as u64)
        .map(|i| VarRef::Aux(AuxVar(depth as u64 * n_vars as u64 + i)))
        .collect()
}

pub fn unroll(steps: &[WitnessStep], n_vars: u32) -> Unrolled {
    let copies: Vec<Vec<VarRef>> = (0..=steps.len()).map(|d| copy_row(d, n_vars)).collect();
    let mut next = (steps.len() as u64 + 1) * n_vars as u64;
    let mut parts = Vec::new();
    for (d, step) in steps.iter().enumerate() {
        let mut aux: BTreeMap<VarRef, VarRef> = BTreeMap::new();
        for a in step.sip.aux_vars() {
            aux.insert(a, VarRef::Aux(AuxVar(next)));
            next += 1;
        }
        parts.push(step.sip.rename(&mut |v| match v {
            VarRef::Pre(p) => copies[d][p.0 as usize],
            VarRef::Post(p) => copies[d + 1][p.0 as usize],
            VarRef::Aux(_) => aux[&v],
        }));
    }
    Unrolled {
        cond: Formula::and(parts),
        copies,
    }
}

/// The per-step canonical auxiliaries, in the same order `unroll`
/// assigns them.
fn unrolled_step_aux(steps: &[WitnessStep], n_vars: u32) -> Vec<BTreeMap<VarRef, VarRef>> {
    let mut next = (steps.len() as u64 + 1) * n_vars as u64;
    steps
        .iter()
        .map(|step| {
            let mut aux = BTreeMap::new();
            for a in step.sip.aux_vars() {
                aux.insert(a, VarRef::Aux(AuxVar(next)));
                next += 1;
            }
            aux
        })
        .collect()
}

const SIP_RETRY_LIMIT: usize = 64;
const RULE_LIMIT: usize = 100_000;

struct TraceEntry {
    parent: TransId,
    sip: Formula,
    /// `sip` over this depth's variable copies, as asserted for the
    /// entry's solver frame.
    renamed: Formula,
    aux_map: BTreeMap<VarRef, VarRef>,
}

struct BlockedItem {
    parent: TransId,
    cond: Formula,
}

struct CertInfo {
    certificate: Certificate,
    loop_sips: Vec<Formula>,
}

pub fn analyze(
    sys: &TransitionSystem,
    mode: Mode,
    opts: &SearchOptions,
    config: &SolverConfig,
) -> Result<Analysis, EngineError> {
    if sys.init().is_none() {
        return Err(EngineError::NoInit);
    }
    if mode == Mode::Nonterm {
        for t in sys.originals() {
            if sys.loc(t.dst).kind == LocKind::Err {
                return Err(EngineError::UnsafeInput(t.name.clone()));
            }
        }
    }
    let solver = Solver::spawn(config.clone())?;
    let engine = Engine {
        sys: sys.clone(),
        mode,
        opts: opts.clone(),
        config: config.clone(),
        started: Instant::now(),
        solver,
        trace: Vec::new(),
        blocked: vec![Vec::new()],
        copies: Vec::new(),
        memo: BTreeSet::new(),
        cert_info: BTreeMap::new(),
        depth_clipped: false,
        log: Vec::new(),
    };
    engine.run()
}

struct Engine {
    sys: TransitionSystem,
    mode: Mode,
    opts: SearchOptions,
    config: SolverConfig,
    started: Instant,
    solver: Solver,
    trace: Vec<TraceEntry>,
    blocked: Vec<Vec<BlockedItem>>,
    copies: Vec<Vec<VarRef>>,
    memo: BTreeSet<Vec<TransId>>,
    cert_info: BTreeMap<TransId, CertInfo>,
    /// Whether the depth bound ever cut a branch short; if so, an
    /// exhausted search proves nothing.
    depth_clipped: bool,
    log: Vec<Event>,
}

impl Engine {
    fn run(mut self) -> Result<Analysis, EngineError> {
        for _ in 0..RULE_LIMIT {
            if self.started.elapsed() > self.opts.wall {
                return self.finish(Verdict::Unknown("wall clock budget exhausted".into()));
            }
            if self.sys.derived().len() > self.opts.max_learned {
                return self.finish(Verdict::Unknown(
                    "learned-transition budget exhausted".into(),
                ));
            }
            if let Some(verdict) = self.refute()? {
                return self.finish(verdict);
            }
            if self.mode == Mode::Nonterm && self.nonterm()? {
                continue;
            }
            if self.covered()? {
                continue;
            }
            if self.accelerate_suffix()? {
                continue;
            }
            // The depth bound acts like a failed step: the search
            // backtracks instead of giving up outright, but remembers
            // that it proved nothing about the clipped branch.
            if self.trace.len() < self.opts.max_depth {
                if self.step()? {
                    continue;
                }
            } else {
                self.depth_clipped = true;
            }
            if !self.trace.is_empty() {
                let id = self.bt()?;
                self.log.push(Event::Backtracked { id });
                continue;
            }
            self.log.push(Event::Exhausted);
            let verdict = if self.depth_clipped {
                Verdict::Unknown("depth budget exhausted".into())
            } else {
                match self.mode {
                    Mode::Safety => Verdict::Safe,
                    Mode::Nonterm => {
                        Verdict::Unknown("search exhausted without a certificate".into())
                    }
                }
            };
            return self.finish(verdict);
        }
        self.finish(Verdict::Unknown("rule budget exhausted".into()))
    }

    fn finish(self, verdict: Verdict) -> Result<Analysis, EngineError> {
        Ok(Analysis {
            verdict,
            system: self.sys,
            log: self.log,
        })
    }

    fn src_of(&self, i: usize) -> LocId {
        self.sys.transition(self.trace[i].parent).src
    }

    fn dst_of(&self, i: usize) -> LocId {
        self.sys.transition(self.trace[i].parent).dst
    }

    fn tip_loc(&self) -> LocId {
        match self.trace.last() {
            Some(_) => self.dst_of(self.trace.len() - 1),
            None => self.sys.init().expect("validated"),
        }
    }

    /// The chained condition of trace positions `j..end`, mids
    /// eliminated where possible.
    fn chained_sips(&self, j: usize, end: usize) -> Formula {
        let mut cond = self.trace[j].sip.clone();
        for e in &self.trace[j + 1..end] {
            cond = chain_conditions(self.sys.n_vars(), &cond, &e.sip);
        }
        cond.eliminate_defined_aux()
    }

    /// Store transitions between the given locations, in id order.
    fn between(&self, src: LocId, dst: LocId) -> Vec<(TransId, Formula)> {
        self.sys
            .transitions()
            .filter(|t| t.src == src && t.dst == dst)
            .map(|t| (t.id, t.cond.clone()))
            .collect()
    }

    fn refute(&mut self) -> Result<Option<Verdict>, EngineError> {
        let Some(tip) = self.trace.last() else {
            return Ok(None);
        };
        let parent = tip.parent;
        if self.sys.loc(self.sys.transition(parent).dst).kind != LocKind::Err {
            return Ok(None);
        }
        self.log.push(Event::Refuted { id: parent });
        let witness = match self.mode {
            Mode::Safety => self.build_witness(self.trace.len(), None)?,
            Mode::Nonterm => {
                let info = self
                    .cert_info
                    .get(&parent)
                    .map(|i| CertInfo {
                        certificate: i.certificate.clone(),
                        loop_sips: i.loop_sips.clone(),
                    })
                    .expect("error steps in this mode come from certified transitions");
                self.build_witness(self.trace.len() - 1, Some(info))?
            }
        };
        if !verify_witness(&witness, &self.sys, &self.config)? {
            return Ok(Some(Verdict::Unknown(
                "witness failed re-verification".into(),
            )));
        }
        Ok(Some(match self.mode {
            Mode::Safety => Verdict::Unsafe(witness),
            Mode::Nonterm => Verdict::Nonterm(witness),
        }))
    }

    fn build_witness(
        &mut self,
        prefix_len: usize,
        info: Option<CertInfo>,
    ) -> Result<Witness, EngineError> {
        let n = self.sys.n_vars();
        let mut wanted: BTreeSet<VarRef> = BTreeSet::new();
        for row in &self.copies[..=prefix_len] {
            wanted.extend(row.iter().copied());
        }
        for e in &self.trace[..prefix_len] {
            wanted.extend(e.aux_map.values().copied());
        }
        if self.solver.check_sat()? != SatResult::Sat {
            return Err(SmtError::Protocol("trace condition no longer satisfiable".into()).into());
        }
        let sigma = self.solver.get_values(&wanted)?;
        let steps: Vec<WitnessStep> = self.trace[..prefix_len]
            .iter()
            .map(|e| WitnessStep {
                parent: e.parent,
                sip: e.sip.clone(),
            })
            .collect();
        let mut model: Model = BTreeMap::new();
        for (d, row) in self.copies[..=prefix_len].iter().enumerate() {
            for (canon, engine_var) in copy_row(d, n).into_iter().zip(row) {
                model.insert(canon, sigma[engine_var].clone());
            }
        }
        let canon_aux = unrolled_step_aux(&steps, n);
        for (e, canon) in self.trace[..prefix_len].iter().zip(&canon_aux) {
            for (orig, renamed) in &e.aux_map {
                model.insert(canon[orig], sigma[renamed].clone());
            }
        }
        Ok(Witness {
            steps,
            certificate: info.as_ref().map(|i| i.certificate.clone()),
            loop_sips: info.map(|i| i.loop_sips).unwrap_or_default(),
            model,
        })
    }

    /// Tries to certify each recursive suffix not attempted before,
    /// longest first, learning an error transition on success.
    fn nonterm(&mut self) -> Result<bool, EngineError> {
        let len = self.trace.len();
        if len == 0 {
            return Ok(false);
        }
        let tip = self.dst_of(len - 1);
        for j in 0..len {
            if self.src_of(j) != tip {
                continue;
            }
            let source: Vec<TransId> = self.trace[j..].iter().map(|e| e.parent).collect();
            if !self.memo.insert(source.clone()) {
                continue;
            }
            let conds: Vec<Formula> = self.trace[j..].iter().map(|e| e.sip.clone()).collect();
            let cert = certify(&conds, self.sys.n_vars(), source.clone(), &mut self.solver)?;
            let Some(cert) = cert else {
                self.log.push(Event::CertFailed { of: source });
                continue;
            };
            let err = self.sys.ensure_err_location();
            let mut redundant = false;
            for (_, cond) in self.between(tip, err) {
                if self.solver.entails(&cert.psi, &cond)? {
                    redundant = true;
                    break;
                }
            }
            if redundant {
                self.log.push(Event::CertRedundant { of: source });
                continue;
            }
            let id = self.sys.add_transition(
                tip,
                err,
                cert.psi.clone(),
                Provenance::Certified { of: source.clone() },
            );
            self.cert_info.insert(
                id,
                CertInfo {
                    certificate: cert,
                    loop_sips: conds,
                },
            );
            self.log.push(Event::CertLearned { id, of: source });
            return Ok(true);
        }
        Ok(false)
    }

    fn suffix_starts(&self, order: SuffixOrder, upto: usize) -> Vec<usize> {
        let mut js: Vec<usize> = (0..upto).collect();
        if order == SuffixOrder::ShortestFirst {
            js.reverse();
        }
        js
    }

    /// Backtracks off a redundant suffix: recursive ones in either
    /// mode, any multi-step suffix in safety mode.
    fn covered(&mut self) -> Result<bool, EngineError> {
        let len = self.trace.len();
        if len < 2 {
            return Ok(false);
        }
        let tip = self.dst_of(len - 1);
        for j in self.suffix_starts(self.opts.covered_order, len - 1) {
            let src = self.src_of(j);
            if self.mode == Mode::Nonterm && src != tip {
                continue;
            }
            let chain = self.chained_sips(j, len);
            for (by, cond) in self.between(src, tip) {
                if self.solver.entails(&chain, &cond)? {
                    let suffix: Vec<TransId> = self.trace[j..].iter().map(|e| e.parent).collect();
                    self.log.push(Event::Covered {
                        suffix,
                        by,
                        src,
                        dst: tip,
                    });
                    self.bt()?;
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    /// Learns the closure of a recursive suffix, shortest first, and
    /// replaces the suffix with the learned transition.
    fn accelerate_suffix(&mut self) -> Result<bool, EngineError> {
        let len = self.trace.len();
        if len == 0 {
            return Ok(false);
        }
        let tip = self.dst_of(len - 1);
        'suffixes: for j in self.suffix_starts(self.opts.accelerate_order, len) {
            if self.src_of(j) != tip {
                continue;
            }
            let source: Vec<TransId> = self.trace[j..].iter().map(|e| e.parent).collect();
            let chained = self.chained_sips(j, len);
            let acc = match accelerate(&chained, self.sys.n_vars(), &mut self.solver) {
                Ok(acc) => acc,
                Err(AccelFailure::Solver(e)) => return Err(e.into()),
                Err(e) => {
                    self.log.push(Event::AccelFailed {
                        of: source,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            for (_, cond) in self.between(tip, tip) {
                if self.solver.entails(&acc.cond, &cond)? {
                    self.log.push(Event::AccelFailed {
                        of: source,
                        reason: "learned transition would be redundant".into(),
                    });
                    continue 'suffixes;
                }
            }
            // Swap the suffix for the learned transition. The learned
            // relation contains the suffix's, so the shortened chain
            // stays satisfiable; a solver hiccup rolls the swap back.
            let m = len - j;
            for _ in 0..m {
                self.solver.pop()?;
            }
            let (renamed, aux_map) = self.rename_step(j, &acc.cond)?;
            self.solver.push()?;
            self.declare_rows(j)?;
            self.solver.assert(&renamed)?;
            if self.solver.check_sat()? != SatResult::Sat {
                self.solver.pop()?;
                for d in j..len {
                    self.solver.push()?;
                    self.declare_rows(d)?;
                    let frame = self.trace[d].renamed.clone();
                    self.solver.assert(&frame)?;
                }
                self.log.push(Event::AccelFailed {
                    of: source,
                    reason: "learned transition not confirmed satisfiable".into(),
                });
                continue;
            }
            let id = self.sys.add_transition(
                tip,
                tip,
                acc.cond.clone(),
                Provenance::Accelerated { of: source.clone() },
            );
            self.trace.truncate(j);
            self.blocked.truncate(self.blocked.len() - m);
            self.trace.push(TraceEntry {
                parent: id,
                sip: acc.cond.clone(),
                renamed,
                aux_map,
            });
            self.blocked.push(vec![BlockedItem {
                parent: id,
                cond: acc.cond,
            }]);
            self.log.push(Event::Accelerated { id, of: source });
            return Ok(true);
        }
        Ok(false)
    }

    /// Appends one active transition to the trace: learned error
    /// transitions first, then learned loops newest first, then the
    /// originals in input order.
    fn step(&mut self) -> Result<bool, EngineError> {
        let at = self.tip_loc();
        let err = self
            .sys
            .locations()
            .find(|(_, l)| l.kind == LocKind::Err)
            .map(|(id, _)| id);
        let mut candidates: Vec<TransId> = Vec::new();
        match self.opts.order {
            StepOrder::LearnedFirst => {
                for t in self.sys.derived().iter().rev() {
                    if Some(t.dst) == err {
                        candidates.push(t.id);
                    }
                }
                for t in self.sys.derived().iter().rev() {
                    if Some(t.dst) != err {
                        candidates.push(t.id);
                    }
                }
                candidates.extend(self.sys.originals().iter().map(|t| t.id));
            }
            StepOrder::FileOrder => {
                candidates.extend(self.sys.transitions().map(|t| t.id));
            }
        }
        for id in candidates {
            let t = self.sys.transition(id).clone();
            if t.src != at {
                continue;
            }
            if self.fully_blocked(&t)? {
                continue;
            }
            if self.try_step(&t)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Whether every conjunctive variant of `t` is blocked at the tip.
    fn fully_blocked(&mut self, t: &Transition) -> Result<bool, EngineError> {
        let items: Vec<(TransId, Formula)> = self
            .blocked
            .last()
            .expect("tip blocked set")
            .iter()
            .map(|b| (b.parent, b.cond.clone()))
            .collect();
        for (parent, cond) in items {
            let b = self.sys.transition(parent);
            if b.src != t.src || b.dst != t.dst {
                continue;
            }
            if (parent == t.id && cond == t.cond) || self.solver.entails(&t.cond, &cond)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn sip_blocked(&mut self, t: &Transition, sip: &Formula) -> Result<bool, EngineError> {
        let items: Vec<(TransId, Formula)> = self
            .blocked
            .last()
            .expect("tip blocked set")
            .iter()
            .map(|b| (b.parent, b.cond.clone()))
            .collect();
        for (parent, cond) in items {
            let b = self.sys.transition(parent);
            if b.src != t.src || b.dst != t.dst {
                continue;
            }
            if *sip == cond || self.solver.entails(sip, &cond)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn try_step(&mut self, t: &Transition) -> Result<bool, EngineError> {
        let depth = self.trace.len();
        let (renamed_full, aux_map) = self.rename_step(depth, &t.cond)?;
        // Probe for a model whose conjunctive variant is not blocked.
        // The probe frame is discarded either way; the committed frame
        // asserts only the chosen variant.
        self.solver.push()?;
        let probe = (|| -> Result<Option<Formula>, EngineError> {
            self.declare_rows(depth)?;
            self.solver.assert(&renamed_full)?;
            for _ in 0..SIP_RETRY_LIMIT {
                if self.solver.check_sat()? != SatResult::Sat {
                    return Ok(None);
                }
                let local = self.fetch_step_model(depth, &aux_map)?;
                let lits = t
                    .cond
                    .sip(&local)
                    .map_err(|_| SmtError::Protocol("model does not satisfy the step".into()))?;
                let sip = Formula::conj(lits);
                if !self.sip_blocked(t, &sip)? {
                    return Ok(Some(sip));
                }
                let excluded = self.rename_with(&sip, depth, &aux_map);
                self.solver.assert(&excluded.negate())?;
            }
            Ok(None)
        })();
        self.solver.pop()?;
        let Some(sip) = probe? else {
            return Ok(false);
        };
        let renamed = self.rename_with(&sip, depth, &aux_map);
        self.solver.push()?;
        self.declare_rows(depth)?;
        self.solver.assert(&renamed)?;
        if self.solver.check_sat()? != SatResult::Sat {
            self.solver.pop()?;
            return Err(SmtError::Protocol("chosen step variant did not re-check".into()).into());
        }
        self.log.push(Event::Step {
            id: t.id,
            sip: sip.clone(),
        });
        self.trace.push(TraceEntry {
            parent: t.id,
            sip,
            renamed,
            aux_map,
        });
        self.blocked.push(Vec::new());
        Ok(true)
    }

    /// Pops the last trace entry and blocks its conjunctive variant at
    /// the new tip.
    fn bt(&mut self) -> Result<TransId, EngineError> {
        let entry = self.trace.pop().expect("non-empty trace");
        self.blocked.pop();
        self.solver.pop()?;
        self.blocked
            .last_mut()
            .expect("blocked sets never empty")
            .push(BlockedItem {
                parent: entry.parent,
                cond: entry.sip,
            });
        Ok(entry.parent)
    }

    fn ensure_copies(&mut self, rows: usize) {
        while self.copies.len() < rows {
            let row = (0..self.sys.n_vars())
                .map(|_| VarRef::Aux(fresh_aux()))
                .collect();
            self.copies.push(row);
        }
    }

    fn declare_rows(&mut self, depth: usize) -> Result<(), EngineError> {
        let vars: Vec<VarRef> = self.copies[depth]
            .iter()
            .chain(&self.copies[depth + 1])
            .copied()
            .collect();
        self.solver.ensure_declared(vars)?;
        Ok(())
    }

    /// Renames a condition to the depth's variable copies, giving its
    /// auxiliaries fresh names.
    fn rename_step(
        &mut self,
        depth: usize,
        cond: &Formula,
    ) -> Result<(Formula, BTreeMap<VarRef, VarRef>), EngineError> {
        self.ensure_copies(depth + 2);
        let mut aux_map = BTreeMap::new();
        for a in cond.aux_vars() {
            aux_map.insert(a, VarRef::Aux(fresh_aux()));
        }
        Ok((self.rename_with(cond, depth, &aux_map), aux_map))
    }

    fn rename_with(
        &self,
        cond: &Formula,
        depth: usize,
        aux_map: &BTreeMap<VarRef, VarRef>,
    ) -> Formula {
        cond.rename(&mut |v| match v {
            VarRef::Pre(p) => self.copies[depth][p.0 as usize],
            VarRef::Post(p) => self.copies[depth + 1][p.0 as usize],
            VarRef::Aux(_) => aux_map[&v],
        })
    }

    /// Reads the current model back in the transition's own variables.
    fn fetch_step_model(
        &mut self,
        depth: usize,
        aux_map: &BTreeMap<VarRef, VarRef>,
    ) -> Result<Model, EngineError> {
        let mut wanted: BTreeSet<VarRef> = BTreeSet::new();
        wanted.extend(self.copies[depth].iter().copied());
        wanted.extend(self.copies[depth + 1].iter().copied());
        wanted.extend(aux_map.values().copied());
        let sigma = self.solver.get_values(&wanted)?;
        let mut local: Model = BTreeMap::new();
        for (i, v) in self.copies[depth].iter().enumerate() {
            local.insert(VarRef::Pre(ProgVar(i as u32)), sigma[v].clone());
        }
        for (i, v) in self.copies[depth + 1].iter().enumerate() {
            local.insert(VarRef::Post(ProgVar(i as u32)), sigma[v].clone());
        }
        for (orig, renamed) in aux_map {
            local.insert(*orig, sigma[renamed].clone());
        }
        Ok(local)
    }
}

/// Re-checks a witness without trusting the search that produced it:
/// the steps must be conjunctive variants of store transitions with a
/// provenance chain down to the input system, the model must make every
/// unrolled step true under plain evaluation, and the certificate's
/// obligations are re-established with a fresh solver process.
pub fn verify_witness(
    w: &Witness,
    sys: &TransitionSystem,
    config: &SolverConfig,
) -> Result<bool, SmtError> {
    let n = sys.n_vars();
    let n_store = sys.transitions().count() as u32;
    let Some(init) = sys.init() else {
        return Ok(false);
    };
    let mut at = init;
    for step in &w.steps {
        if step.parent.0 >= n_store {
            return Ok(false);
        }
        let t = sys.transition(step.parent);
        if t.src != at {
            return Ok(false);
        }
        at = t.dst;
        if !is_sip_of(&step.sip, &t.cond) || !valid_provenance(sys, step.parent) {
            return Ok(false);
        }
    }
    // Ground re-evaluation: each step's full parent condition must hold
    // under the model, read at that step's variable copies.
    let unrolled = unroll(&w.steps, n);
    if !matches!(unrolled.cond.evaluate(&w.model), Ok(true)) {
        return Ok(false);
    }
    let canon_aux = unrolled_step_aux(&w.steps, n);
    for (d, step) in w.steps.iter().enumerate() {
        let t = sys.transition(step.parent);
        let mut local: Model = BTreeMap::new();
        for i in 0..n as usize {
            let Some(pre) = w.model.get(&unrolled.copies[d][i]) else {
                return Ok(false);
            };
            let Some(post) = w.model.get(&unrolled.copies[d + 1][i]) else {
                return Ok(false);
            };
            local.insert(VarRef::Pre(ProgVar(i as u32)), pre.clone());
            local.insert(VarRef::Post(ProgVar(i as u32)), post.clone());
        }
        for (orig, canon) in &canon_aux[d] {
            let Some(value) = w.model.get(canon) else {
                return Ok(false);
            };
            local.insert(*orig, value.clone());
        }
        if !matches!(t.cond.evaluate(&local), Ok(true)) {
            return Ok(false);
        }
    }
    match &w.certificate {
        None => {
            // A safety refutation: the run must end at the error
            // location.
            if w.steps.is_empty() || !w.loop_sips.is_empty() {
                return Ok(false);
            }
            Ok(sys.loc(at).kind == LocKind::Err)
        }
        Some(cert) => {
            if !cert.psi.vars().iter().all(|v| v.is_pre()) {
                return Ok(false);
            }
            let tip = unrolled.copies.last().expect("at least one row");
            let psi_tip = cert.psi.rename(&mut |v| match v {
                VarRef::Pre(p) => tip[p.0 as usize],
                other => other,
            });
            if !matches!(psi_tip.evaluate(&w.model), Ok(true)) {
                return Ok(false);
            }
            // The certified loop: conjunctive variants of store
            // transitions forming a cycle at the tip location.
            if cert.source.is_empty() || cert.source.len() != w.loop_sips.len() {
                return Ok(false);
            }
            let mut fresh = Solver::spawn(config.clone())?;
            let mut loc = at;
            for (tid, sip) in cert.source.iter().zip(&w.loop_sips) {
                if tid.0 >= n_store {
                    return Ok(false);
                }
                let t = sys.transition(*tid);
                if t.src != loc {
                    return Ok(false);
                }
                loc = t.dst;
                if !is_sip_of(sip, &t.cond) || !valid_provenance(sys, *tid) {
                    return Ok(false);
                }
                if !fresh.entails(sip, &t.cond)? {
                    return Ok(false);
                }
            }
            if loc != at {
                return Ok(false);
            }
            let mut loop_cond = w.loop_sips[0].clone();
            for sip in &w.loop_sips[1..] {
                loop_cond = chain_conditions(n, &loop_cond, sip);
            }
            let loop_cond = loop_cond.eliminate_defined_aux();
            let step_cond = cert.step_cond(&loop_cond, n);
            holds(&cert.psi, &step_cond, n, &mut fresh)
        }
    }
}

/// Whether `sip` is a conjunction of literals drawn from `cond`.
fn is_sip_of(sip: &Formula, cond: &Formula) -> bool {
    if !sip.is_conjunctive() {
        return false;
    }
    let pool = cond.literals();
    sip.literals().iter().all(|l| pool.contains(l))
}

/// Every derived transition must reference earlier transitions,
/// bottoming out at originals.
fn valid_provenance(sys: &TransitionSystem, id: TransId) -> bool {
    let t = sys.transition(id);
    let of = match &t.provenance {
        Provenance::Original => return true,
        Provenance::Narrowed { of } => std::slice::from_ref(of),
        Provenance::Accelerated { of } => of.as_slice(),
        Provenance::Certified { of } => of.as_slice(),
    };
    !of.is_empty() && of.iter().all(|r| r.0 < id.0 && valid_provenance(sys, *r))
}
