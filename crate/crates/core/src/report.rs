//! Rendering of analysis results: a human-readable proof and a
//! line-oriented machine format, both deterministic for identical
//! analyses. Variables print under their source names; auxiliaries are
//! renumbered in order of appearance so internal counters never leak
//! into the output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;

use crate::engine::{unroll, Analysis, Verdict, Witness};
use crate::logic::{Formula, Model, VarRef};
use crate::ts::TransitionSystem;

/// Names auxiliaries n0, n1, ... in first-appearance order.
#[derive(Default)]
struct AuxNames {
    assigned: BTreeMap<VarRef, String>,
}

impl AuxNames {
    fn name(&mut self, v: VarRef) -> String {
        let next = format!("n{}", self.assigned.len());
        self.assigned.entry(v).or_insert(next).clone()
    }
}

fn fmt_formula(f: &Formula, sys: &TransitionSystem, aux: &mut AuxNames) -> String {
    f.render(&mut |v| match v {
        VarRef::Pre(p) => sys.var_name(p).to_string(),
        VarRef::Post(p) => format!("{}'", sys.var_name(p)),
        VarRef::Aux(_) => aux.name(v),
    })
}

/// The values of one unrolled state, in variable order.
fn state_row(model: &Model, copies: &[VarRef]) -> Vec<BigInt> {
    copies
        .iter()
        .map(|v| model.get(v).cloned().unwrap_or_default())
        .collect()
}

struct WitnessView<'a> {
    steps: Vec<StepView>,
    states: Vec<Vec<BigInt>>,
    certificate: Option<CertView>,
    sys: &'a TransitionSystem,
}

struct StepView {
    name: String,
    src: String,
    dst: String,
    sip: String,
    aux: Vec<(String, BigInt)>,
}

struct CertView {
    technique: &'static str,
    psi: String,
    loop_steps: Vec<(String, String)>,
}

fn view<'a>(w: &Witness, sys: &'a TransitionSystem) -> WitnessView<'a> {
    let mut aux = AuxNames::default();
    let unrolled = unroll(&w.steps, sys.n_vars());
    let mut steps = Vec::new();
    let mut canon = (w.steps.len() as u64 + 1) * sys.n_vars() as u64;
    for step in &w.steps {
        let t = sys.transition(step.parent);
        let sip = fmt_formula(&step.sip, sys, &mut aux);
        let mut vals = Vec::new();
        for a in step.sip.aux_vars() {
            let value = w
                .model
                .get(&VarRef::Aux(crate::logic::AuxVar(canon)))
                .cloned()
                .unwrap_or_default();
            canon += 1;
            vals.push((aux.name(a), value));
        }
        steps.push(StepView {
            name: t.name.clone(),
            src: sys.loc(t.src).name.clone(),
            dst: sys.loc(t.dst).name.clone(),
            sip,
            aux: vals,
        });
    }
    let states = unrolled
        .copies
        .iter()
        .map(|row| state_row(&w.model, row))
        .collect();
    let certificate = w.certificate.as_ref().map(|cert| {
        let mut loop_aux = AuxNames::default();
        CertView {
            technique: match cert.technique {
                crate::certs::Technique::FixedPoint => "fixed-point",
                crate::certs::Technique::RecurrentGuard => "recurrent-guard",
            },
            psi: fmt_formula(&cert.psi, sys, &mut loop_aux),
            loop_steps: cert
                .source
                .iter()
                .zip(&w.loop_sips)
                .map(|(id, sip)| {
                    let t = sys.transition(*id);
                    (t.name.clone(), fmt_formula(sip, sys, &mut loop_aux))
                })
                .collect(),
        }
    });
    WitnessView {
        steps,
        states,
        certificate,
        sys,
    }
}

/// The default output: the verdict token alone.
pub fn plain(analysis: &Analysis) -> String {
    format!("{}\n", analysis.verdict.token())
}

/// Verdict plus a readable account of the witness.
pub fn human(analysis: &Analysis) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", analysis.verdict.token());
    match &analysis.verdict {
        Verdict::Nonterm(w) => {
            let v = view(w, &analysis.system);
            let _ = writeln!(
                out,
                "The certified states below admit an infinite run; the prefix reaches one of them."
            );
            render_prefix(&mut out, &v);
            let cert = v.certificate.as_ref().expect("certified verdict");
            let technique = cert.technique.replace('-', " ");
            let _ = writeln!(out, "certificate ({technique}): {}", cert.psi);
            let _ = writeln!(out, "loop:");
            for (i, (name, sip)) in cert.loop_steps.iter().enumerate() {
                let _ = writeln!(out, "  {}. {} [{}]", i + 1, name, sip);
            }
        }
        Verdict::Unsafe(w) => {
            let v = view(w, &analysis.system);
            let _ = writeln!(out, "The error location is reachable along this run.");
            render_prefix(&mut out, &v);
        }
        Verdict::Safe => {
            let _ = writeln!(out, "No error location is reachable.");
        }
        Verdict::Unknown(reason) => {
            let _ = writeln!(out, "No verdict: {reason}.");
        }
    }
    out
}

fn render_prefix(out: &mut String, v: &WitnessView<'_>) {
    let names = v.sys.var_names();
    let fmt_state = |vals: &[BigInt]| {
        names
            .iter()
            .zip(vals)
            .map(|(n, x)| format!("{n} = {x}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let _ = writeln!(out, "prefix:");
    let _ = writeln!(out, "  start: {}", fmt_state(&v.states[0]));
    for (i, step) in v.steps.iter().enumerate() {
        let mut line = format!(
            "  {}. {} -> {} via {} [{}]",
            i + 1,
            step.src,
            step.dst,
            step.name,
            step.sip
        );
        if !step.aux.is_empty() {
            let vals = step
                .aux
                .iter()
                .map(|(n, x)| format!("{n} = {x}"))
                .collect::<Vec<_>>()
                .join(", ");
            let _ = write!(line, " with {vals}");
        }
        let _ = writeln!(out, "{line}");
        let _ = writeln!(out, "     reaching {}", fmt_state(&v.states[i + 1]));
    }
}

/// Line-oriented key/value rendering of the same content. The first
/// line stays the bare verdict token so pipelines grep one format.
pub fn machine(analysis: &Analysis) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", analysis.verdict.token());
    let witness = match &analysis.verdict {
        Verdict::Nonterm(w) | Verdict::Unsafe(w) => Some(w),
        Verdict::Safe => None,
        Verdict::Unknown(reason) => {
            let _ = writeln!(out, "reason {reason}");
            None
        }
    };
    let Some(w) = witness else {
        return out;
    };
    let v = view(w, &analysis.system);
    let _ = writeln!(out, "vars {}", v.sys.var_names().join(" "));
    let _ = writeln!(out, "steps {}", v.steps.len());
    for (i, step) in v.steps.iter().enumerate() {
        let _ = writeln!(out, "step {} {} {} {}", i, step.name, step.src, step.dst);
        let _ = writeln!(out, "sip {} {}", i, step.sip);
        for (name, value) in &step.aux {
            let _ = writeln!(out, "aux {i} {name} {value}");
        }
    }
    for (d, state) in v.states.iter().enumerate() {
        let vals = state
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(out, "state {d} {vals}");
    }
    if let Some(cert) = &v.certificate {
        let _ = writeln!(out, "certificate {}", cert.technique);
        let _ = writeln!(out, "psi {}", cert.psi);
        for (j, (name, sip)) in cert.loop_steps.iter().enumerate() {
            let _ = writeln!(out, "loop {j} {name}");
            let _ = writeln!(out, "loopsip {j} {sip}");
        }
    }
    out
}
