//! Client for an external SMT-LIB v2 solver process.
//!
//! The client keeps one long-lived solver session whose assertion stack
//! mirrors the caller's, synchronizing on echo markers instead of
//! `:print-success` so that any conformant solver works. Every query runs
//! under a wall-clock watchdog: a query that exceeds the budget kills the
//! process, respawns it, and replays the journal of declarations and
//! assertions, reporting `Unknown` for the interrupted query. Callers
//! treat `Unknown` as "could not establish", never as a positive answer.

mod sexpr;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use num_bigint::BigInt;

use crate::logic::{Formula, Model, Rel, Term, VarRef};

pub use sexpr::Sexpr;

#[derive(Debug, thiserror::Error)]
pub enum SmtError {
    #[error("failed to start SMT solver {0:?}: {1}")]
    Spawn(String, #[source] std::io::Error),
    #[error("no SMT solver found; install z3 or cvc5, or point PROVER_SMT at one")]
    NoSolver,
    #[error("solver protocol error: {0}")]
    Protocol(String),
    #[error("solver query timed out and the session was restarted")]
    Timeout,
    #[error("solver returned a model that does not satisfy the query")]
    ModelMismatch,
    #[error("solver I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Program and arguments of an SMT-LIB v2 solver reading from stdin.
    pub command: Vec<String>,
    /// Wall-clock budget per query.
    pub query_timeout: Duration,
}

pub const DEFAULT_QUERY_TIMEOUT: Duration = Duration::from_secs(10);

impl SolverConfig {
    pub fn new(command: Vec<String>, query_timeout: Duration) -> Self {
        SolverConfig {
            command,
            query_timeout,
        }
    }

    /// Picks a solver: `PROVER_SMT` if set (whitespace-split command),
    /// then `z3` or `cvc5` from the PATH, then the bundled `z3-stdio`
    /// binary next to the current executable.
    pub fn locate(query_timeout: Duration) -> Result<Self, SmtError> {
        if let Ok(cmd) = std::env::var("PROVER_SMT") {
            let command: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if !command.is_empty() {
                return Ok(SolverConfig::new(command, query_timeout));
            }
        }
        if runs(Command::new("z3").arg("-version")) {
            return Ok(SolverConfig::new(
                vec!["z3".into(), "-in".into()],
                query_timeout,
            ));
        }
        if runs(Command::new("cvc5").arg("--version")) {
            return Ok(SolverConfig::new(
                vec![
                    "cvc5".into(),
                    "--incremental".into(),
                    "--produce-models".into(),
                ],
                query_timeout,
            ));
        }
        if let Some(bundled) = bundled_solver() {
            return Ok(SolverConfig::new(
                vec![bundled.to_string_lossy().into_owned()],
                query_timeout,
            ));
        }
        Err(SmtError::NoSolver)
    }
}

fn runs(cmd: &mut Command) -> bool {
    cmd.stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

/// The `z3-stdio` binary from this build tree, looked up relative to the
/// current executable so tests and installed binaries both find it.
fn bundled_solver() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    for dir in exe.ancestors().skip(1).take(4) {
        for name in ["z3-stdio", "z3-stdio.exe"] {
            let candidate = dir.join(name);
            if candidate.is_file() {
                return Some(candidate);
            }
        }
    }
    None
}

#[derive(Debug)]
pub struct Solver {
    config: SolverConfig,
    child: Child,
    stdin: ChildStdin,
    rx: Receiver<String>,
    seq: u64,
    /// Commands that rebuild the current session: one frame per stack
    /// level, base frame first. Queries are not journaled.
    journal: Vec<Vec<String>>,
    declared: Vec<BTreeSet<VarRef>>,
}

impl Solver {
    pub fn spawn(config: SolverConfig) -> Result<Self, SmtError> {
        let (child, stdin, rx) = launch(&config)?;
        let mut solver = Solver {
            config,
            child,
            stdin,
            rx,
            seq: 0,
            journal: vec![Vec::new()],
            declared: vec![BTreeSet::new()],
        };
        for cmd in ["(set-option :produce-models true)", "(set-logic NIA)"] {
            solver.send(cmd, true)?;
        }
        // A first round trip catches a broken solver before any query.
        solver.sync()?;
        Ok(solver)
    }

    pub fn query_timeout(&self) -> Duration {
        self.config.query_timeout
    }

    pub fn set_query_timeout(&mut self, timeout: Duration) {
        self.config.query_timeout = timeout;
    }

    fn send(&mut self, cmd: &str, journal: bool) -> Result<(), SmtError> {
        writeln!(self.stdin, "{cmd}")?;
        self.stdin.flush()?;
        if journal {
            self.journal
                .last_mut()
                .expect("base frame")
                .push(cmd.to_string());
        }
        Ok(())
    }

    /// Sends an echo marker and collects every line up to it. A timeout
    /// restarts the session and surfaces as `SmtError::Timeout`.
    fn sync(&mut self) -> Result<Vec<String>, SmtError> {
        match self.sync_inner() {
            Err(SmtError::Timeout) => {
                self.restart()?;
                Err(SmtError::Timeout)
            }
            other => other,
        }
    }

    fn sync_inner(&mut self) -> Result<Vec<String>, SmtError> {
        self.seq += 1;
        let marker = format!("@{}", self.seq);
        writeln!(self.stdin, "(echo \"{marker}\")")?;
        self.stdin.flush()?;
        let deadline = std::time::Instant::now() + self.config.query_timeout;
        let mut lines = Vec::new();
        loop {
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            match self.rx.recv_timeout(left) {
                Ok(line) => {
                    let line = line.trim().to_string();
                    // Some solvers echo with the quotes kept.
                    if line == marker || line == format!("\"{marker}\"") {
                        return Ok(lines);
                    }
                    if !line.is_empty() {
                        lines.push(line);
                    }
                }
                Err(RecvTimeoutError::Timeout) => return Err(SmtError::Timeout),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(SmtError::Protocol("solver exited unexpectedly".to_string()))
                }
            }
        }
    }

    /// Kills the solver process and replays the journal of declarations
    /// and assertions into a fresh one. The logical state is preserved;
    /// any learned clauses and caches are dropped.
    pub fn restart(&mut self) -> Result<(), SmtError> {
        let _ = self.child.kill();
        let _ = self.child.wait();
        let (child, stdin, rx) = launch(&self.config)?;
        self.child = child;
        self.stdin = stdin;
        self.rx = rx;
        for (level, frame) in self.journal.clone().into_iter().enumerate() {
            if level > 0 {
                writeln!(self.stdin, "(push 1)")?;
            }
            for cmd in frame {
                writeln!(self.stdin, "{cmd}")?;
            }
        }
        self.stdin.flush()?;
        self.sync_inner()?;
        Ok(())
    }

    pub(crate) fn ensure_declared(
        &mut self,
        vars: impl IntoIterator<Item = VarRef>,
    ) -> Result<(), SmtError> {
        for v in vars {
            if self.declared.iter().any(|frame| frame.contains(&v)) {
                continue;
            }
            self.send(&format!("(declare-const {} Int)", sym(v)), true)?;
            self.declared.last_mut().expect("base frame").insert(v);
        }
        Ok(())
    }

    pub fn push(&mut self) -> Result<(), SmtError> {
        self.send("(push 1)", false)?;
        self.journal.push(Vec::new());
        self.declared.push(BTreeSet::new());
        Ok(())
    }

    pub fn pop(&mut self) -> Result<(), SmtError> {
        assert!(self.journal.len() > 1, "pop without matching push");
        self.send("(pop 1)", false)?;
        self.journal.pop();
        self.declared.pop();
        Ok(())
    }

    pub fn stack_depth(&self) -> usize {
        self.journal.len() - 1
    }

    pub fn assert(&mut self, f: &Formula) -> Result<(), SmtError> {
        self.ensure_declared(f.vars())?;
        self.send(&format!("(assert {})", encode_formula(f)), true)
    }

    /// Asserts that `phi` has no solution in its auxiliary variables, i.e.
    /// the negation of `phi` with its auxiliaries universally quantified.
    /// Used to test entailment up to auxiliaries.
    fn assert_no_aux_solution(&mut self, phi: &Formula) -> Result<(), SmtError> {
        let aux = phi.aux_vars();
        if aux.is_empty() {
            return self.assert(&phi.negate());
        }
        let free: Vec<VarRef> = phi
            .vars()
            .into_iter()
            .filter(|v| !aux.contains(v))
            .collect();
        self.ensure_declared(free)?;
        let binders: Vec<String> = aux.iter().map(|v| format!("({} Int)", sym(*v))).collect();
        self.send(
            &format!(
                "(assert (forall ({}) (not {})))",
                binders.join(" "),
                encode_formula(phi)
            ),
            true,
        )
    }

    pub fn check_sat(&mut self) -> Result<SatResult, SmtError> {
        self.send("(check-sat)", false)?;
        let lines = match self.sync() {
            Ok(lines) => lines,
            Err(SmtError::Timeout) => return Ok(SatResult::Unknown),
            Err(e) => return Err(e),
        };
        for line in &lines {
            match line.as_str() {
                "sat" => return Ok(SatResult::Sat),
                "unsat" => return Ok(SatResult::Unsat),
                "unknown" => return Ok(SatResult::Unknown),
                _ => {}
            }
        }
        Err(SmtError::Protocol(format!(
            "expected sat/unsat/unknown, got {lines:?}"
        )))
    }

    /// Fetches values for `vars` after a `Sat` answer.
    pub fn get_values(&mut self, vars: &BTreeSet<VarRef>) -> Result<Model, SmtError> {
        if vars.is_empty() {
            return Ok(Model::new());
        }
        let names: Vec<String> = vars.iter().map(|v| sym(*v)).collect();
        let by_name: BTreeMap<String, VarRef> = vars.iter().map(|v| (sym(*v), *v)).collect();
        self.send(&format!("(get-value ({}))", names.join(" ")), false)?;
        let lines = self.sync()?;
        let text = lines.join(" ");
        if text.contains("(error") {
            return Err(SmtError::Protocol(text));
        }
        let parsed = sexpr::parse_all(&text).map_err(SmtError::Protocol)?;
        let pairs = parsed
            .first()
            .and_then(|s| s.as_list())
            .ok_or_else(|| SmtError::Protocol(format!("bad get-value reply: {text}")))?;
        let mut model = Model::new();
        for pair in pairs {
            let pair = pair
                .as_list()
                .ok_or_else(|| SmtError::Protocol(format!("bad model entry in {text}")))?;
            if pair.len() != 2 {
                return Err(SmtError::Protocol(format!("bad model entry in {text}")));
            }
            let name = pair[0]
                .as_atom()
                .ok_or_else(|| SmtError::Protocol(format!("bad model entry in {text}")))?;
            let var = by_name
                .get(name)
                .ok_or_else(|| SmtError::Protocol(format!("unrequested symbol {name}")))?;
            model.insert(*var, decode_int(&pair[1])?);
        }
        if model.len() != vars.len() {
            return Err(SmtError::Protocol(format!("model missing values: {text}")));
        }
        Ok(model)
    }

    /// Satisfiability of a conjunction, in a fresh scope.
    pub fn sat_scoped<'a>(
        &mut self,
        parts: impl IntoIterator<Item = &'a Formula>,
    ) -> Result<SatResult, SmtError> {
        self.push()?;
        let result = (|| {
            for f in parts {
                self.assert(f)?;
            }
            self.check_sat()
        })();
        self.pop()?;
        result
    }

    /// A model of a conjunction, in a fresh scope. The model is checked
    /// against the formulas before it is returned; a mismatch means the
    /// encoder and the solver disagree and is reported as an error, not
    /// as an answer.
    pub fn model_scoped<'a>(
        &mut self,
        parts: impl IntoIterator<Item = &'a Formula> + Clone,
    ) -> Result<Option<Model>, SmtError> {
        self.push()?;
        let result = (|| {
            let mut vars = BTreeSet::new();
            for f in parts.clone() {
                self.assert(f)?;
                vars.extend(f.vars());
            }
            match self.check_sat()? {
                SatResult::Sat => {
                    let model = self.get_values(&vars)?;
                    for f in parts {
                        if !f.evaluate(&model).map_err(|e| {
                            SmtError::Protocol(format!("model evaluation failed: {e}"))
                        })? {
                            return Err(SmtError::ModelMismatch);
                        }
                    }
                    Ok(Some(model))
                }
                _ => Ok(None),
            }
        })();
        self.pop()?;
        result
    }

    /// Does `psi` entail `phi`, treating `phi`'s auxiliary variables as
    /// existential? `Unknown` counts as "not established".
    pub fn entails(&mut self, psi: &Formula, phi: &Formula) -> Result<bool, SmtError> {
        self.push()?;
        let result = (|| {
            self.assert(psi)?;
            self.assert_no_aux_solution(phi)?;
            self.check_sat()
        })();
        self.pop()?;
        Ok(result? == SatResult::Unsat)
    }

    /// Whether `psi` implies `phi` with every variable, auxiliaries
    /// included, read as the same free constant on both sides. Unlike
    /// [`Solver::entails`] this never introduces quantifiers, so it
    /// stays decidable on linear formulas.
    pub fn implies(&mut self, psi: &Formula, phi: &Formula) -> Result<bool, SmtError> {
        self.push()?;
        let result = (|| {
            self.assert(psi)?;
            self.assert(&phi.negate())?;
            self.check_sat()
        })();
        self.pop()?;
        Ok(result? == SatResult::Unsat)
    }

    /// Mutual entailment.
    pub fn equivalent(&mut self, a: &Formula, b: &Formula) -> Result<bool, SmtError> {
        Ok(self.entails(a, b)? && self.entails(b, a)?)
    }
}

impl Drop for Solver {
    fn drop(&mut self) {
        let _ = writeln!(self.stdin, "(exit)");
        let _ = self.stdin.flush();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn launch(config: &SolverConfig) -> Result<(Child, ChildStdin, Receiver<String>), SmtError> {
    if config.command.is_empty() {
        return Err(SmtError::NoSolver);
    }
    let mut child = Command::new(&config.command[0])
        .args(&config.command[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| SmtError::Spawn(config.command.join(" "), e))?;
    let stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut reader = BufReader::new(stdout);
        let mut line = String::new();
        loop {
            line.clear();
            match reader.read_line(&mut line) {
                Ok(0) | Err(_) => break,
                Ok(_) => {
                    if tx.send(line.trim_end().to_string()).is_err() {
                        break;
                    }
                }
            }
        }
    });
    Ok((child, stdin, rx))
}

fn sym(v: VarRef) -> String {
    match v {
        VarRef::Pre(p) => format!("v{}", p.0),
        VarRef::Post(p) => format!("v{}p", p.0),
        VarRef::Aux(a) => format!("a{}", a.0),
    }
}

fn encode_int(c: &BigInt) -> String {
    if c.sign() == num_bigint::Sign::Minus {
        format!("(- {})", -c)
    } else {
        c.to_string()
    }
}

pub(crate) fn encode_term(t: &Term) -> String {
    use num_traits::One;
    let pieces: Vec<String> = t
        .monomials()
        .map(|(m, c)| {
            let mut factors = Vec::new();
            if !c.is_one() || m.is_unit() {
                factors.push(encode_int(c));
            }
            for (v, e) in m.exponents() {
                for _ in 0..e {
                    factors.push(sym(v));
                }
            }
            if factors.len() == 1 {
                factors.pop().unwrap()
            } else {
                format!("(* {})", factors.join(" "))
            }
        })
        .collect();
    match pieces.len() {
        0 => "0".to_string(),
        1 => pieces.into_iter().next().unwrap(),
        _ => format!("(+ {})", pieces.join(" ")),
    }
}

pub(crate) fn encode_formula(f: &Formula) -> String {
    match f {
        Formula::True => "true".to_string(),
        Formula::False => "false".to_string(),
        Formula::Lit(l) => {
            let t = encode_term(&l.term);
            match l.rel {
                Rel::Eq => format!("(= {t} 0)"),
                Rel::Ne => format!("(not (= {t} 0))"),
                Rel::Le => format!("(<= {t} 0)"),
                Rel::Lt => format!("(< {t} 0)"),
            }
        }
        Formula::And(kids) => {
            let parts: Vec<String> = kids.iter().map(encode_formula).collect();
            format!("(and {})", parts.join(" "))
        }
        Formula::Or(kids) => {
            let parts: Vec<String> = kids.iter().map(encode_formula).collect();
            format!("(or {})", parts.join(" "))
        }
    }
}

fn decode_int(s: &Sexpr) -> Result<BigInt, SmtError> {
    match s {
        Sexpr::Atom(a) => a
            .parse()
            .map_err(|_| SmtError::Protocol(format!("expected an integer, got {a}"))),
        Sexpr::List(items) => {
            if items.len() == 2 && items[0].as_atom() == Some("-") {
                Ok(-decode_int(&items[1])?)
            } else {
                Err(SmtError::Protocol(format!(
                    "expected an integer, got {items:?}"
                )))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{Literal, ProgVar};

    #[test]
    fn terms_and_formulas_encode_canonically() {
        let x = Term::var(VarRef::Pre(ProgVar(0)));
        let xp = Term::var(VarRef::Post(ProgVar(0)));
        let t = &(&xp - &x) - &Term::int(2);
        assert_eq!(encode_term(&t), "(+ (- 2) (* (- 1) v0) v0p)");
        let f = Formula::and([
            Formula::Lit(Literal::eq(&xp, &(&x + &Term::int(2)))),
            Formula::Lit(Literal::gt(&x, &Term::zero())),
        ]);
        assert_eq!(
            encode_formula(&f),
            "(and (= (+ (- 2) (* (- 1) v0) v0p) 0) (< (* (- 1) v0) 0))"
        );
        assert_eq!(encode_term(&Term::zero()), "0");
        let sq = &x * &x;
        assert_eq!(encode_term(&sq), "(* v0 v0)");
    }

    #[test]
    fn integers_decode_with_negation() {
        let parsed = sexpr::parse_all("((v0 5) (v1 (- 3)))").unwrap();
        let pairs = parsed[0].as_list().unwrap();
        assert_eq!(
            decode_int(&pairs[0].as_list().unwrap()[1]).unwrap(),
            BigInt::from(5)
        );
        assert_eq!(
            decode_int(&pairs[1].as_list().unwrap()[1]).unwrap(),
            BigInt::from(-3)
        );
    }
}
