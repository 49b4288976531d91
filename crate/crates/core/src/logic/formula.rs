use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use super::term::{Model, Term, VarRef};
use super::Error;

/// Comparison of a term against zero. The four relations are closed under
/// negation, so formulas never need a negation node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rel {
    Eq,
    Ne,
    Le,
    Lt,
}

/// An atomic constraint `term REL 0`. Comparisons between two terms are
/// normalized by moving everything to one side, so syntactically different
/// spellings of the same atom compare equal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub term: Term,
    pub rel: Rel,
}

impl Literal {
    pub fn eq(lhs: &Term, rhs: &Term) -> Literal {
        Literal {
            term: lhs - rhs,
            rel: Rel::Eq,
        }
    }

    pub fn ne(lhs: &Term, rhs: &Term) -> Literal {
        Literal {
            term: lhs - rhs,
            rel: Rel::Ne,
        }
    }

    pub fn le(lhs: &Term, rhs: &Term) -> Literal {
        Literal {
            term: lhs - rhs,
            rel: Rel::Le,
        }
    }

    pub fn lt(lhs: &Term, rhs: &Term) -> Literal {
        Literal {
            term: lhs - rhs,
            rel: Rel::Lt,
        }
    }

    pub fn ge(lhs: &Term, rhs: &Term) -> Literal {
        Literal::le(rhs, lhs)
    }

    pub fn gt(lhs: &Term, rhs: &Term) -> Literal {
        Literal::lt(rhs, lhs)
    }

    pub fn negate(&self) -> Literal {
        match self.rel {
            Rel::Eq => Literal {
                term: self.term.clone(),
                rel: Rel::Ne,
            },
            Rel::Ne => Literal {
                term: self.term.clone(),
                rel: Rel::Eq,
            },
            // not (t <= 0)  is  t > 0  is  -t < 0
            Rel::Le => Literal {
                term: -&self.term,
                rel: Rel::Lt,
            },
            // not (t < 0)  is  t >= 0  is  -t <= 0
            Rel::Lt => Literal {
                term: -&self.term,
                rel: Rel::Le,
            },
        }
    }

    pub fn evaluate(&self, model: &Model) -> Result<bool, Error> {
        let v = self.term.evaluate(model)?;
        Ok(match self.rel {
            Rel::Eq => v.is_zero(),
            Rel::Ne => !v.is_zero(),
            Rel::Le => !v.is_positive(),
            Rel::Lt => v.is_negative(),
        })
    }

    pub fn substitute(&self, map: &BTreeMap<VarRef, Term>) -> Literal {
        Literal {
            term: self.term.substitute(map),
            rel: self.rel,
        }
    }

    /// If the literal defines `v` as a polynomial over other variables
    /// (an equation `v = t` with `v` occurring linearly with coefficient
    /// +-1 and not inside `t`), returns that `t`.
    pub fn defines(&self, v: VarRef) -> Option<Term> {
        if self.rel != Rel::Eq {
            return None;
        }
        let coeff = self.term.linear_coeff(v)?;
        let rest = &self.term - &Term::var(v).scale(&coeff);
        if rest.mentions(v) {
            return None;
        }
        // coeff*v + rest = 0, so v = -rest/coeff when coeff is a unit.
        if coeff == BigInt::from(1) {
            Some(-&rest)
        } else if coeff == BigInt::from(-1) {
            Some(rest)
        } else {
            None
        }
    }

    pub fn render(&self, name: &mut dyn FnMut(VarRef) -> String) -> String {
        // Split into positive and negated-negative parts so `x - z < 0`
        // prints as `x < z`.
        let mut lhs = Term::zero();
        let mut rhs = Term::zero();
        for (m, c) in self.term.monomials() {
            if c.is_positive() {
                let t = Term::int(c.clone());
                let mut piece = t;
                for (v, e) in m.exponents() {
                    piece = &piece * &Term::var(v).pow(e);
                }
                lhs = &lhs + &piece;
            } else {
                let t = Term::int(-c.clone());
                let mut piece = t;
                for (v, e) in m.exponents() {
                    piece = &piece * &Term::var(v).pow(e);
                }
                rhs = &rhs + &piece;
            }
        }
        let op = match self.rel {
            Rel::Eq => "=",
            Rel::Ne => "!=",
            Rel::Le => "<=",
            Rel::Lt => "<",
        };
        format!("{} {} {}", lhs.render(name), op, rhs.render(name))
    }
}

/// A quantifier-free formula in negation normal form. The smart
/// constructors flatten nested connectives and fold constants, so `And`
/// and `Or` nodes always have at least two live children.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    False,
    Lit(Literal),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    pub fn lit(l: Literal) -> Formula {
        Formula::Lit(l)
    }

    pub fn and(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(kids) => flat.extend(kids),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Formula::True,
            1 => flat.pop().unwrap(),
            _ => Formula::And(flat),
        }
    }

    pub fn or(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(kids) => flat.extend(kids),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Formula::False,
            1 => flat.pop().unwrap(),
            _ => Formula::Or(flat),
        }
    }

    pub fn conj(lits: impl IntoIterator<Item = Literal>) -> Formula {
        Formula::and(lits.into_iter().map(Formula::Lit))
    }

    pub fn negate(&self) -> Formula {
        match self {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Lit(l) => Formula::Lit(l.negate()),
            Formula::And(kids) => Formula::or(kids.iter().map(|k| k.negate())),
            Formula::Or(kids) => Formula::and(kids.iter().map(|k| k.negate())),
        }
    }

    pub fn evaluate(&self, model: &Model) -> Result<bool, Error> {
        match self {
            Formula::True => Ok(true),
            Formula::False => Ok(false),
            Formula::Lit(l) => l.evaluate(model),
            Formula::And(kids) => {
                for k in kids {
                    if !k.evaluate(model)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Formula::Or(kids) => {
                for k in kids {
                    if k.evaluate(model)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }

    pub fn substitute(&self, map: &BTreeMap<VarRef, Term>) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Lit(l) => Formula::Lit(l.substitute(map)),
            Formula::And(kids) => Formula::and(kids.iter().map(|k| k.substitute(map))),
            Formula::Or(kids) => Formula::or(kids.iter().map(|k| k.substitute(map))),
        }
    }

    /// Applies a variable-to-variable renaming.
    pub fn rename(&self, f: &mut dyn FnMut(VarRef) -> VarRef) -> Formula {
        let map: BTreeMap<VarRef, Term> = self
            .vars()
            .into_iter()
            .map(|v| (v, Term::var(f(v))))
            .collect();
        self.substitute(&map)
    }

    pub fn for_each_literal(&self, f: &mut dyn FnMut(&Literal)) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Lit(l) => f(l),
            Formula::And(kids) | Formula::Or(kids) => {
                for k in kids {
                    k.for_each_literal(f);
                }
            }
        }
    }

    /// The distinct literals of the formula in first-occurrence order.
    pub fn literals(&self) -> Vec<Literal> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.for_each_literal(&mut |l| {
            if seen.insert(l.clone()) {
                out.push(l.clone());
            }
        });
        out
    }

    pub fn vars(&self) -> BTreeSet<VarRef> {
        let mut out = BTreeSet::new();
        self.for_each_literal(&mut |l| out.extend(l.term.vars()));
        out
    }

    pub fn aux_vars(&self) -> BTreeSet<VarRef> {
        self.vars().into_iter().filter(|v| v.is_aux()).collect()
    }

    /// True when the formula contains no disjunction, i.e. it is a
    /// conjunction of literals (or a constant).
    pub fn is_conjunctive(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Lit(_) => true,
            Formula::And(kids) => kids.iter().all(|k| k.is_conjunctive()),
            Formula::Or(_) => false,
        }
    }

    /// The syntactic implicant of the formula under a satisfying model:
    /// the literals of the formula that the model makes true, in
    /// first-occurrence order. Their conjunction implies the formula, and
    /// the disjunction of all implicants over all models is equivalent to
    /// it. Fails if the model does not satisfy the formula.
    pub fn sip(&self, model: &Model) -> Result<Vec<Literal>, Error> {
        if !self.evaluate(model)? {
            return Err(Error::NotSatisfied);
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut failure = None;
        self.for_each_literal(&mut |l| {
            if failure.is_some() || seen.contains(l) {
                return;
            }
            match l.evaluate(model) {
                Ok(true) => {
                    seen.insert(l.clone());
                    out.push(l.clone());
                }
                Ok(false) => {}
                Err(e) => failure = Some(e),
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    /// Replaces ground literals by their truth value and refolds the
    /// connectives around them.
    pub fn fold_consts(&self) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Lit(l) => match l.term.as_constant() {
                Some(c) => {
                    let holds = match l.rel {
                        Rel::Eq => c.is_zero(),
                        Rel::Ne => !c.is_zero(),
                        Rel::Le => !c.is_positive(),
                        Rel::Lt => c.is_negative(),
                    };
                    if holds {
                        Formula::True
                    } else {
                        Formula::False
                    }
                }
                None => Formula::Lit(l.clone()),
            },
            Formula::And(kids) => Formula::and(kids.iter().map(|k| k.fold_consts())),
            Formula::Or(kids) => Formula::or(kids.iter().map(|k| k.fold_consts())),
        }
    }

    /// Substitutes away auxiliary variables that a top-level conjunct
    /// defines as an equation, e.g. `m = x + 1 && x' = 2*m` becomes
    /// `x' = 2*x + 2`. Only top-level conjuncts may be used as
    /// definitions; an equation under a disjunction does not hold in
    /// every model.
    pub fn eliminate_defined_aux(&self) -> Formula {
        let mut f = self.fold_consts();
        loop {
            let conjuncts: &[Formula] = match &f {
                Formula::And(kids) => kids,
                Formula::Lit(_) => std::slice::from_ref(&f),
                _ => return f,
            };
            let mut binding = None;
            'scan: for part in conjuncts {
                if let Formula::Lit(l) = part {
                    for v in l.term.vars() {
                        if !v.is_aux() {
                            continue;
                        }
                        if let Some(def) = l.defines(v) {
                            binding = Some((v, def));
                            break 'scan;
                        }
                    }
                }
            }
            match binding {
                Some((v, def)) => {
                    let map = BTreeMap::from([(v, def)]);
                    f = f.substitute(&map).fold_consts();
                }
                None => return f,
            }
        }
    }

    pub fn render(&self, name: &mut dyn FnMut(VarRef) -> String) -> String {
        match self {
            Formula::True => "TRUE".to_string(),
            Formula::False => "FALSE".to_string(),
            Formula::Lit(l) => l.render(name),
            Formula::And(kids) => kids
                .iter()
                .map(|k| match k {
                    Formula::Or(_) => format!("({})", k.render(name)),
                    _ => k.render(name),
                })
                .collect::<Vec<_>>()
                .join(" && "),
            Formula::Or(kids) => kids
                .iter()
                .map(|k| k.render(name))
                .collect::<Vec<_>>()
                .join(" || "),
        }
    }
}
