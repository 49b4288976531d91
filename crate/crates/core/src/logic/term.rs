use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use super::Error;

/// A program variable, identified by its index in the system's vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProgVar(pub u32);

/// An auxiliary variable, existentially quantified in the condition that
/// introduces it. Ids come from a process-wide counter so that composing
/// arbitrary conditions can never capture a variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AuxVar(pub u64);

static NEXT_AUX: AtomicU64 = AtomicU64::new(0);

/// Returns an auxiliary variable that no existing formula mentions.
pub fn fresh_aux() -> AuxVar {
    AuxVar(NEXT_AUX.fetch_add(1, Ordering::Relaxed))
}

/// A variable occurrence inside a condition: the pre-state or post-state
/// copy of a program variable, or an auxiliary variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarRef {
    Pre(ProgVar),
    Post(ProgVar),
    Aux(AuxVar),
}

impl VarRef {
    pub fn prog_var(self) -> Option<ProgVar> {
        match self {
            VarRef::Pre(v) | VarRef::Post(v) => Some(v),
            VarRef::Aux(_) => None,
        }
    }

    pub fn is_pre(self) -> bool {
        matches!(self, VarRef::Pre(_))
    }

    pub fn is_post(self) -> bool {
        matches!(self, VarRef::Post(_))
    }

    pub fn is_aux(self) -> bool {
        matches!(self, VarRef::Aux(_))
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarRef::Pre(ProgVar(i)) => write!(f, "x{i}"),
            VarRef::Post(ProgVar(i)) => write!(f, "x{i}'"),
            VarRef::Aux(AuxVar(i)) => write!(f, "a{i}"),
        }
    }
}

/// An assignment of integers to variables.
pub type Model = BTreeMap<VarRef, BigInt>;

/// A product of variables with positive exponents; the empty product is 1.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(BTreeMap<VarRef, u32>);

impl Monomial {
    pub fn unit() -> Self {
        Monomial::default()
    }

    pub fn var(v: VarRef) -> Self {
        Monomial(BTreeMap::from([(v, 1)]))
    }

    pub fn is_unit(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn vars(&self) -> impl Iterator<Item = VarRef> + '_ {
        self.0.keys().copied()
    }

    pub fn exponents(&self) -> impl Iterator<Item = (VarRef, u32)> + '_ {
        self.0.iter().map(|(v, e)| (*v, *e))
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = self.0.clone();
        for (v, e) in &other.0 {
            *out.entry(*v).or_insert(0) += e;
        }
        Monomial(out)
    }

    fn eval(&self, model: &Model) -> Result<BigInt, Error> {
        let mut acc = BigInt::one();
        for (v, e) in &self.0 {
            let val = model.get(v).ok_or(Error::MissingVar(*v))?;
            acc *= num_traits::Pow::pow(val, *e);
        }
        Ok(acc)
    }
}

/// A polynomial with integer coefficients, kept in canonical form: zero
/// coefficients are never stored, so structural equality is semantic
/// equality of polynomials.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term {
    coeffs: BTreeMap<Monomial, BigInt>,
}

impl Term {
    pub fn zero() -> Self {
        Term::default()
    }

    pub fn int(value: impl Into<BigInt>) -> Self {
        let value = value.into();
        let mut coeffs = BTreeMap::new();
        if !value.is_zero() {
            coeffs.insert(Monomial::unit(), value);
        }
        Term { coeffs }
    }

    pub fn var(v: VarRef) -> Self {
        Term {
            coeffs: BTreeMap::from([(Monomial::var(v), BigInt::one())]),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// The constant value, if the term has no variables.
    pub fn as_constant(&self) -> Option<BigInt> {
        if self.coeffs.is_empty() {
            return Some(BigInt::zero());
        }
        if self.coeffs.len() == 1 {
            if let Some(c) = self.coeffs.get(&Monomial::unit()) {
                return Some(c.clone());
            }
        }
        None
    }

    pub fn monomials(&self) -> impl Iterator<Item = (&Monomial, &BigInt)> {
        self.coeffs.iter()
    }

    /// The coefficient of `v` if the term is linear in it; the coefficient
    /// of a variable that does not occur is zero.
    pub fn linear_coeff(&self, v: VarRef) -> Option<BigInt> {
        let mono = Monomial::var(v);
        for m in self.coeffs.keys() {
            if m.vars().any(|w| w == v) && *m != mono {
                return None;
            }
        }
        Some(self.coeffs.get(&mono).cloned().unwrap_or_else(BigInt::zero))
    }

    pub fn vars(&self) -> BTreeSet<VarRef> {
        self.coeffs.keys().flat_map(|m| m.vars()).collect()
    }

    pub fn mentions(&self, v: VarRef) -> bool {
        self.coeffs.keys().any(|m| m.vars().any(|w| w == v))
    }

    pub fn scale(&self, by: &BigInt) -> Term {
        if by.is_zero() {
            return Term::zero();
        }
        Term {
            coeffs: self
                .coeffs
                .iter()
                .map(|(m, c)| (m.clone(), c * by))
                .collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Term {
        let mut out = Term::int(1);
        for _ in 0..e {
            out = &out * self;
        }
        out
    }

    pub fn evaluate(&self, model: &Model) -> Result<BigInt, Error> {
        let mut acc = BigInt::zero();
        for (m, c) in &self.coeffs {
            acc += c * m.eval(model)?;
        }
        Ok(acc)
    }

    /// Replaces every variable that `map` mentions by its image.
    pub fn substitute(&self, map: &BTreeMap<VarRef, Term>) -> Term {
        let mut out = Term::zero();
        for (m, c) in &self.coeffs {
            let mut factor = Term::int(c.clone());
            for (v, e) in m.exponents() {
                let base = match map.get(&v) {
                    Some(t) => t.pow(e),
                    None => Term {
                        coeffs: BTreeMap::from([(
                            Monomial(BTreeMap::from([(v, e)])),
                            BigInt::one(),
                        )]),
                    },
                };
                factor = &factor * &base;
            }
            out = &out + &factor;
        }
        out
    }

    fn insert(&mut self, m: Monomial, c: BigInt) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.coeffs.entry(m) {
            Entry::Vacant(slot) => {
                slot.insert(c);
            }
            Entry::Occupied(mut slot) => {
                *slot.get_mut() += c;
                if slot.get().is_zero() {
                    slot.remove();
                }
            }
        }
    }

    /// Renders the term with `name` resolving variables, e.g. `2*x + y - 3`.
    pub fn render(&self, name: &mut dyn FnMut(VarRef) -> String) -> String {
        if self.coeffs.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        // Variables first, the constant part last.
        let ordered = self
            .coeffs
            .iter()
            .filter(|(m, _)| !m.is_unit())
            .chain(self.coeffs.iter().filter(|(m, _)| m.is_unit()));
        for (m, c) in ordered {
            let neg = c.is_negative();
            let mag = c.abs();
            if out.is_empty() {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            let mut factors = Vec::new();
            if !mag.is_one() || m.is_unit() {
                factors.push(mag.to_string());
            }
            for (v, e) in m.exponents() {
                for _ in 0..e {
                    factors.push(name(v));
                }
            }
            out.push_str(&factors.join("*"));
        }
        out
    }
}

impl Add for &Term {
    type Output = Term;
    fn add(self, rhs: &Term) -> Term {
        let mut out = self.clone();
        for (m, c) in &rhs.coeffs {
            out.insert(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Term {
    type Output = Term;
    fn sub(self, rhs: &Term) -> Term {
        let mut out = self.clone();
        for (m, c) in &rhs.coeffs {
            out.insert(m.clone(), -c.clone());
        }
        out
    }
}

impl Neg for &Term {
    type Output = Term;
    fn neg(self) -> Term {
        Term {
            coeffs: self
                .coeffs
                .iter()
                .map(|(m, c)| (m.clone(), -c.clone()))
                .collect(),
        }
    }
}

impl Mul for &Term {
    type Output = Term;
    fn mul(self, rhs: &Term) -> Term {
        let mut out = Term::zero();
        for (ma, ca) in &self.coeffs {
            for (mb, cb) in &rhs.coeffs {
                out.insert(ma.mul(mb), ca * cb);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> VarRef {
        VarRef::Pre(ProgVar(0))
    }

    fn y() -> VarRef {
        VarRef::Pre(ProgVar(1))
    }

    fn model(vals: &[(VarRef, i64)]) -> Model {
        vals.iter().map(|(v, k)| (*v, BigInt::from(*k))).collect()
    }

    #[test]
    fn arithmetic_normalizes() {
        let t = &(&Term::var(x()) + &Term::var(y())) - &Term::var(y());
        assert_eq!(t, Term::var(x()));
        let zero = &Term::var(x()) - &Term::var(x());
        assert!(zero.is_zero());
        assert_eq!(zero, Term::zero());
        assert_eq!(Term::int(0), Term::zero());
    }

    #[test]
    fn products_expand() {
        // (x + 1) * (x - 1) = x^2 - 1
        let a = &Term::var(x()) + &Term::int(1);
        let b = &Term::var(x()) - &Term::int(1);
        let p = &a * &b;
        let m = model(&[(x(), 5)]);
        assert_eq!(p.evaluate(&m).unwrap(), BigInt::from(24));
        assert_eq!(p.vars(), BTreeSet::from([x()]));
    }

    #[test]
    fn substitution_agrees_with_evaluation() {
        // t = 2*x*y - 3, x := y + 1
        let t = &(&Term::int(2) * &(&Term::var(x()) * &Term::var(y()))) - &Term::int(3);
        let map = BTreeMap::from([(x(), &Term::var(y()) + &Term::int(1))]);
        let s = t.substitute(&map);
        for yv in -4..=4 {
            let inner = model(&[(x(), yv + 1), (y(), yv)]);
            let outer = model(&[(y(), yv)]);
            assert_eq!(t.evaluate(&inner).unwrap(), s.evaluate(&outer).unwrap());
        }
    }

    #[test]
    fn evaluation_requires_all_vars() {
        let t = &Term::var(x()) + &Term::var(y());
        let err = t.evaluate(&model(&[(x(), 1)])).unwrap_err();
        assert_eq!(err, Error::MissingVar(y()));
    }

    #[test]
    fn linear_coeff_rejects_nonlinear_occurrences() {
        let sq = &Term::var(x()) * &Term::var(x());
        assert_eq!(sq.linear_coeff(x()), None);
        let t = &Term::var(x()).scale(&BigInt::from(3)) + &Term::int(7);
        assert_eq!(t.linear_coeff(x()), Some(BigInt::from(3)));
        assert_eq!(t.linear_coeff(y()), Some(BigInt::zero()));
    }

    #[test]
    fn fresh_aux_never_repeats() {
        let a = fresh_aux();
        let b = fresh_aux();
        assert_ne!(a, b);
    }

    #[test]
    fn rendering_is_readable() {
        let t = &(&Term::int(2) * &Term::var(x())) - &(&Term::var(y()) + &Term::int(5));
        let mut name = |v: VarRef| v.to_string();
        assert_eq!(t.render(&mut name), "2*x0 - x1 - 5");
        assert_eq!(Term::zero().render(&mut name), "0");
        assert_eq!(Term::int(-2).render(&mut name), "-2");
    }
}
