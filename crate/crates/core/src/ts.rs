//! Integer transition systems: locations, transitions, and the relational
//! semantics used to compose and test them.
//!
//! A transition's condition relates pre-state variables to post-state
//! variables; program variables that the condition never constrains in
//! post form are reassigned nondeterministically. Auxiliary variables are
//! existentially quantified.

use std::collections::{BTreeMap, BTreeSet};

use crate::logic::{fresh_aux, Formula, ProgVar, Term, VarRef};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocKind {
    Init,
    Plain,
    Err,
}

#[derive(Clone, Debug)]
pub struct Location {
    pub name: String,
    pub kind: LocKind,
}

/// How a transition entered the system. Everything except `Original`
/// records the transitions it was derived from, so a verdict can be
/// traced back to the input system without trusting the search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    Original,
    /// A conjunctive case of `of`, narrowed to the branch a model took.
    Narrowed {
        of: TransId,
    },
    /// The n-fold closure of the given chained sequence.
    Accelerated {
        of: Vec<TransId>,
    },
    /// An error transition recording a certified non-terminating loop.
    Certified {
        of: Vec<TransId>,
    },
}

#[derive(Clone, Debug)]
pub struct Transition {
    pub id: TransId,
    pub name: String,
    pub src: LocId,
    pub dst: LocId,
    pub cond: Formula,
    pub provenance: Provenance,
}

impl Transition {
    pub fn is_original(&self) -> bool {
        matches!(self.provenance, Provenance::Original)
    }
}

/// A transition system plus every transition derived from it during an
/// analysis. The original transitions always form a prefix of the store.
#[derive(Clone, Debug, Default)]
pub struct TransitionSystem {
    vars: Vec<String>,
    locs: Vec<Location>,
    init: Option<LocId>,
    store: Vec<Transition>,
    n_original: usize,
}

impl TransitionSystem {
    pub fn new() -> Self {
        TransitionSystem::default()
    }

    pub fn add_var(&mut self, name: &str) -> ProgVar {
        assert!(self.var_index(name).is_none(), "duplicate variable {name}");
        self.vars.push(name.to_string());
        ProgVar(self.vars.len() as u32 - 1)
    }

    pub fn n_vars(&self) -> u32 {
        self.vars.len() as u32
    }

    pub fn var_index(&self, name: &str) -> Option<ProgVar> {
        self.vars
            .iter()
            .position(|v| v == name)
            .map(|i| ProgVar(i as u32))
    }

    pub fn var_name(&self, v: ProgVar) -> &str {
        &self.vars[v.0 as usize]
    }

    pub fn var_names(&self) -> &[String] {
        &self.vars
    }

    /// Declares a location; the name `err` marks the error location that
    /// safety mode checks for.
    pub fn declare_location(&mut self, name: &str) -> LocId {
        if let Some(id) = self.loc_index(name) {
            return id;
        }
        let kind = if name == "err" {
            LocKind::Err
        } else {
            LocKind::Plain
        };
        self.locs.push(Location {
            name: name.to_string(),
            kind,
        });
        LocId(self.locs.len() as u32 - 1)
    }

    pub fn set_init(&mut self, loc: LocId) {
        self.locs[loc.0 as usize].kind = LocKind::Init;
        self.init = Some(loc);
    }

    pub fn init(&self) -> Option<LocId> {
        self.init
    }

    pub fn loc_index(&self, name: &str) -> Option<LocId> {
        self.locs
            .iter()
            .position(|l| l.name == name)
            .map(|i| LocId(i as u32))
    }

    pub fn loc(&self, id: LocId) -> &Location {
        &self.locs[id.0 as usize]
    }

    pub fn locations(&self) -> impl Iterator<Item = (LocId, &Location)> {
        self.locs
            .iter()
            .enumerate()
            .map(|(i, l)| (LocId(i as u32), l))
    }

    /// The error location, created on demand for learned error transitions.
    pub fn ensure_err_location(&mut self) -> LocId {
        if let Some((id, _)) = self.locations().find(|(_, l)| l.kind == LocKind::Err) {
            return id;
        }
        self.locs.push(Location {
            name: "err".to_string(),
            kind: LocKind::Err,
        });
        LocId(self.locs.len() as u32 - 1)
    }

    pub fn add_transition(
        &mut self,
        src: LocId,
        dst: LocId,
        cond: Formula,
        provenance: Provenance,
    ) -> TransId {
        let id = TransId(self.store.len() as u32);
        let name = match &provenance {
            Provenance::Original => format!("r{}", id.0),
            Provenance::Narrowed { .. } => format!("n{}", id.0),
            Provenance::Accelerated { .. } => format!("acc{}", id.0),
            Provenance::Certified { .. } => format!("cert{}", id.0),
        };
        if matches!(provenance, Provenance::Original) {
            assert_eq!(
                self.store.len(),
                self.n_original,
                "original transitions must be added before derived ones"
            );
            self.n_original += 1;
        }
        self.store.push(Transition {
            id,
            name,
            src,
            dst,
            cond,
            provenance,
        });
        id
    }

    pub fn transition(&self, id: TransId) -> &Transition {
        &self.store[id.0 as usize]
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.store.iter()
    }

    pub fn originals(&self) -> &[Transition] {
        &self.store[..self.n_original]
    }

    pub fn derived(&self) -> &[Transition] {
        &self.store[self.n_original..]
    }

    /// Composes two transitions; the condition is `False` when the first
    /// does not end where the second starts.
    pub fn chain(&self, a: TransId, b: TransId) -> Formula {
        let (a, b) = (self.transition(a), self.transition(b));
        if a.dst != b.src {
            return Formula::False;
        }
        chain_conditions(self.n_vars(), &a.cond, &b.cond)
    }

    /// Composes a path of transitions left to right.
    pub fn chain_seq(&self, ids: &[TransId]) -> Formula {
        let mut iter = ids.iter();
        let first = match iter.next() {
            Some(id) => id,
            None => return Formula::True,
        };
        let mut cond = self.transition(*first).cond.clone();
        let mut at = self.transition(*first).dst;
        for id in iter {
            let t = self.transition(*id);
            if t.src != at {
                return Formula::False;
            }
            cond = chain_conditions(self.n_vars(), &cond, &t.cond);
            at = t.dst;
        }
        cond
    }

    pub fn render_formula(&self, f: &Formula) -> String {
        f.render(&mut |v| self.render_var(v))
    }

    pub fn render_var(&self, v: VarRef) -> String {
        match v {
            VarRef::Pre(p) => self.var_name(p).to_string(),
            VarRef::Post(p) => format!("{}'", self.var_name(p)),
            VarRef::Aux(a) => format!("aux{}", a.0),
        }
    }

    /// The system in its input syntax. Only original transitions are
    /// printed; derived conditions may mention auxiliary variables that
    /// the syntax cannot express.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("vars");
        for v in &self.vars {
            out.push(' ');
            out.push_str(v);
        }
        out.push('\n');
        if let Some(init) = self.init {
            out.push_str(&format!("init {}\n", self.loc(init).name));
        }
        for t in self.originals() {
            out.push_str(&format!(
                "rule {} -> {} :|: {}\n",
                self.loc(t.src).name,
                self.loc(t.dst).name,
                self.render_formula(&t.cond)
            ));
        }
        out
    }
}

/// Composes two conditions relationally: the post state of `a` is
/// identified with the pre state of `b` through fresh auxiliary middle
/// variables, and the auxiliaries of `b` are freshened so that a
/// condition can be chained with itself.
pub fn chain_conditions(n_vars: u32, a: &Formula, b: &Formula) -> Formula {
    let mut map_a = BTreeMap::new();
    let mut map_b = BTreeMap::new();
    for i in 0..n_vars {
        let mid = VarRef::Aux(fresh_aux());
        map_a.insert(VarRef::Post(ProgVar(i)), Term::var(mid));
        map_b.insert(VarRef::Pre(ProgVar(i)), Term::var(mid));
    }
    for v in b.aux_vars() {
        map_b.insert(v, Term::var(VarRef::Aux(fresh_aux())));
    }
    Formula::and([a.substitute(&map_a), b.substitute(&map_b)])
}

pub fn default_aux_bound(state_bound: i64) -> i64 {
    4 * state_bound + 4
}

/// Enumerates the relation a condition denotes, restricted to states in
/// `[-state_bound, state_bound]^n` and auxiliary values in
/// `[-aux_bound, aux_bound]`. Exhaustive and slow; meant as the ground
/// truth that composed and accelerated conditions are tested against.
pub fn enumerate_relation(
    cond: &Formula,
    n_vars: u32,
    state_bound: i64,
    aux_bound: i64,
) -> BTreeSet<(Vec<i64>, Vec<i64>)> {
    let mut dims: Vec<(VarRef, i64)> = Vec::new();
    for i in 0..n_vars {
        dims.push((VarRef::Pre(ProgVar(i)), state_bound));
    }
    for v in cond.aux_vars() {
        dims.push((v, aux_bound));
    }
    for i in 0..n_vars {
        dims.push((VarRef::Post(ProgVar(i)), state_bound));
    }
    let mut out = BTreeSet::new();
    let mut values = Vec::with_capacity(dims.len());
    enum_rec(
        &cond.fold_consts(),
        &dims,
        &mut values,
        &mut |values: &[i64]| {
            let pre = values[..n_vars as usize].to_vec();
            let post = values[values.len() - n_vars as usize..].to_vec();
            out.insert((pre, post));
        },
    );
    out
}

/// Whether `(pre, post)` is in the relation for some auxiliary values in
/// `[-aux_bound, aux_bound]`.
pub fn relation_contains(cond: &Formula, pre: &[i64], post: &[i64], aux_bound: i64) -> bool {
    let mut map = BTreeMap::new();
    for (i, v) in pre.iter().enumerate() {
        map.insert(VarRef::Pre(ProgVar(i as u32)), Term::int(*v));
    }
    for (i, v) in post.iter().enumerate() {
        map.insert(VarRef::Post(ProgVar(i as u32)), Term::int(*v));
    }
    let ground = cond.substitute(&map).fold_consts();
    let dims: Vec<(VarRef, i64)> = ground
        .aux_vars()
        .into_iter()
        .map(|v| (v, aux_bound))
        .collect();
    let mut found = false;
    let mut values = Vec::with_capacity(dims.len());
    enum_rec(&ground, &dims, &mut values, &mut |_: &[i64]| {
        found = true;
    });
    found
}

fn enum_rec(
    f: &Formula,
    dims: &[(VarRef, i64)],
    values: &mut Vec<i64>,
    sink: &mut dyn FnMut(&[i64]),
) {
    match f {
        Formula::False => return,
        Formula::True if dims.is_empty() => {
            sink(values);
            return;
        }
        _ => {}
    }
    let (var, bound) = match dims.first() {
        Some(d) => *d,
        None => {
            // All variables are bound, so folding must have decided.
            debug_assert!(matches!(f, Formula::True | Formula::False));
            if matches!(f, Formula::True) {
                sink(values);
            }
            return;
        }
    };
    for val in -bound..=bound {
        let map = BTreeMap::from([(var, Term::int(val))]);
        let g = f.substitute(&map).fold_consts();
        if matches!(g, Formula::False) {
            continue;
        }
        values.push(val);
        enum_rec(&g, &dims[1..], values, sink);
        values.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::Literal;
    use num_bigint::BigInt;

    fn pre(i: u32) -> Term {
        Term::var(VarRef::Pre(ProgVar(i)))
    }

    fn post(i: u32) -> Term {
        Term::var(VarRef::Post(ProgVar(i)))
    }

    fn pairs(set: &BTreeSet<(Vec<i64>, Vec<i64>)>) -> Vec<(i64, i64)> {
        set.iter().map(|(a, b)| (a[0], b[0])).collect()
    }

    #[test]
    fn enumeration_matches_a_hand_computed_relation() {
        // x < 2 && x' = x + 1 over [-2, 2]
        let cond = Formula::and([
            Formula::Lit(Literal::lt(&pre(0), &Term::int(2))),
            Formula::Lit(Literal::eq(&post(0), &(&pre(0) + &Term::int(1)))),
        ]);
        let rel = enumerate_relation(&cond, 1, 2, 0);
        assert_eq!(pairs(&rel), [(-2, -1), (-1, 0), (0, 1), (1, 2)]);
    }

    #[test]
    fn unconstrained_post_vars_are_havocked() {
        let rel = enumerate_relation(&Formula::True, 1, 1, 0);
        assert_eq!(rel.len(), 9);
    }

    #[test]
    fn chaining_composes_functional_updates() {
        let mut sys = TransitionSystem::new();
        sys.add_var("x");
        let l = sys.declare_location("l");
        // a: x' = x + 1, b: x' = 2x
        let a = sys.add_transition(
            l,
            l,
            Formula::Lit(Literal::eq(&post(0), &(&pre(0) + &Term::int(1)))),
            Provenance::Original,
        );
        let b = sys.add_transition(
            l,
            l,
            Formula::Lit(Literal::eq(&post(0), &pre(0).scale(&BigInt::from(2)))),
            Provenance::Original,
        );
        let ab = sys.chain(a, b);
        // x -> 2(x + 1)
        for x in -3..=3 {
            assert!(relation_contains(&ab, &[x], &[2 * (x + 1)], 10));
            assert!(!relation_contains(&ab, &[x], &[2 * (x + 1) + 1], 10));
        }
        let ba = sys.chain(b, a);
        // x -> 2x + 1
        assert!(relation_contains(&ba, &[3], &[7], 10));
        assert!(!relation_contains(&ba, &[3], &[8], 10));
    }

    #[test]
    fn chaining_a_condition_with_itself_freshens_its_auxiliaries() {
        // tau: n > 0 && x' = x + n, so tau;tau reaches x + 3 but a
        // capturing composition (x' = x + 2n) would not.
        let n = Term::var(VarRef::Aux(fresh_aux()));
        let cond = Formula::and([
            Formula::Lit(Literal::gt(&n, &Term::zero())),
            Formula::Lit(Literal::eq(&post(0), &(&pre(0) + &n))),
        ]);
        let twice = chain_conditions(1, &cond, &cond);
        assert!(relation_contains(&twice, &[0], &[3], 10));
        assert!(relation_contains(&twice, &[0], &[2], 10));
        assert!(!relation_contains(&twice, &[0], &[1], 10));
    }

    #[test]
    fn chain_seq_rejects_disconnected_paths() {
        let mut sys = TransitionSystem::new();
        sys.add_var("x");
        let l0 = sys.declare_location("l0");
        let l1 = sys.declare_location("l1");
        let l2 = sys.declare_location("l2");
        let a = sys.add_transition(l0, l1, Formula::True, Provenance::Original);
        let b = sys.add_transition(l2, l2, Formula::True, Provenance::Original);
        assert_eq!(sys.chain(a, b), Formula::False);
        assert_eq!(sys.chain_seq(&[a, b]), Formula::False);
        let c = sys.add_transition(l1, l2, Formula::True, Provenance::Original);
        assert!(sys.chain_seq(&[a, c, b]) != Formula::False);
    }

    #[test]
    fn chained_relation_equals_the_relational_join() {
        // a: x' = x + 2 && x <= 1, b: x > 0 && x' = x - 1
        let a = Formula::and([
            Formula::Lit(Literal::eq(&post(0), &(&pre(0) + &Term::int(2)))),
            Formula::Lit(Literal::le(&pre(0), &Term::int(1))),
        ]);
        let b = Formula::and([
            Formula::Lit(Literal::gt(&pre(0), &Term::zero())),
            Formula::Lit(Literal::eq(&post(0), &(&pre(0) - &Term::int(1)))),
        ]);
        let mid_bound = 8;
        let ra = enumerate_relation(&a, 1, mid_bound, 0);
        let rb = enumerate_relation(&b, 1, mid_bound, 0);
        let state = 2;
        let mut join = BTreeSet::new();
        for (x, m) in pairs(&ra) {
            if x.abs() > state {
                continue;
            }
            for (m2, z) in pairs(&rb) {
                if m == m2 && z.abs() <= state {
                    join.insert((vec![x], vec![z]));
                }
            }
        }
        let chained = enumerate_relation(&chain_conditions(1, &a, &b), 1, state, mid_bound);
        assert_eq!(chained, join);
        assert!(!join.is_empty());
    }

    #[test]
    fn locations_and_store_bookkeeping() {
        let mut sys = TransitionSystem::new();
        sys.add_var("x");
        sys.add_var("y");
        assert_eq!(sys.n_vars(), 2);
        let l0 = sys.declare_location("l0");
        sys.set_init(l0);
        assert_eq!(sys.init(), Some(l0));
        assert_eq!(sys.loc(l0).kind, LocKind::Init);
        let e = sys.ensure_err_location();
        assert_eq!(sys.loc(e).kind, LocKind::Err);
        assert_eq!(sys.ensure_err_location(), e);
        let t = sys.add_transition(l0, e, Formula::True, Provenance::Original);
        let d = sys.add_transition(l0, e, Formula::True, Provenance::Narrowed { of: t });
        assert_eq!(sys.originals().len(), 1);
        assert_eq!(sys.derived().len(), 1);
        assert_eq!(sys.transition(d).name, "n1");
        assert!(sys.transition(t).is_original());
    }
}
