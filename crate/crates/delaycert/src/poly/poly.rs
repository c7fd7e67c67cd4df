//! Multivariate polynomials with exact rational coefficients.
//!
//! All constraint assembly is done in this representation so coefficient
//! matching is exact; floating point enters only inside the SDP solver.

use super::monomial::Monomial;
use crate::symbol::Symbol;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Exact coefficient type.
pub type Rat = BigRational;

/// Converts an `f64` to the rational it represents exactly.
pub fn rat_from_f64(x: f64) -> Rat {
    BigRational::from_float(x).expect("finite float required")
}

pub fn rat_from_int(n: i64) -> Rat {
    BigRational::from_integer(n.into())
}

pub fn rat(n: i64, d: i64) -> Rat {
    BigRational::new(n.into(), d.into())
}

pub fn rat_to_f64(x: &Rat) -> f64 {
    x.to_f64().expect("rational convertible to f64")
}

/// A sparse polynomial: map from monomial to nonzero rational coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rat>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly::default()
    }

    pub fn one() -> Poly {
        Poly::constant(Rat::one())
    }

    pub fn constant(c: Rat) -> Poly {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Monomial::one(), c);
        }
        Poly { terms }
    }

    pub fn var(v: Symbol) -> Poly {
        Poly::from_term(Monomial::var(v), Rat::one())
    }

    pub fn from_term(m: Monomial, c: Rat) -> Poly {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        Poly { terms }
    }

    pub fn from_terms(it: impl IntoIterator<Item = (Monomial, Rat)>) -> Poly {
        let mut p = Poly::zero();
        for (m, c) in it {
            p.add_term(m, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rat)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> Rat {
        self.terms.get(m).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn constant_term(&self) -> Rat {
        self.coeff(&Monomial::one())
    }

    /// The set of variables actually appearing.
    pub fn variables(&self) -> Vec<Symbol> {
        let mut set = BTreeSet::new();
        for m in self.terms.keys() {
            for (s, _) in m.powers() {
                set.insert(*s);
            }
        }
        set.into_iter().collect()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn degree_in(&self, v: Symbol) -> u32 {
        self.terms.keys().map(|m| m.degree_in(v)).max().unwrap_or(0)
    }

    pub fn degree_in_set(&self, vars: &[Symbol]) -> u32 {
        self.terms
            .keys()
            .map(|m| m.degree_in_set(vars))
            .max()
            .unwrap_or(0)
    }

    pub fn add_term(&mut self, m: Monomial, c: Rat) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(m.clone()).or_insert_with(Rat::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Poly {
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), -c.clone()))
                .collect(),
        }
    }

    pub fn scale(&self, c: &Rat) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, k)| (m.clone(), k * c))
                .collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut out = Poly::one();
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    /// Formal partial derivative with respect to `v`.
    pub fn differentiate(&self, v: Symbol) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let (rest, p) = m.without(v);
            if p == 0 {
                continue;
            }
            let m2 = if p == 1 {
                rest
            } else {
                rest.mul(&Monomial::from_powers([(v, p - 1)]))
            };
            out.add_term(m2, c * rat_from_int(p as i64));
        }
        out
    }

    /// Antiderivative in `v` with zero constant of integration.
    pub fn antiderivative(&self, v: Symbol) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let (rest, p) = m.without(v);
            let m2 = rest.mul(&Monomial::from_powers([(v, p + 1)]));
            out.add_term(m2, c / rat_from_int((p + 1) as i64));
        }
        out
    }

    /// Definite integral over `v` with polynomial bounds (which may involve
    /// other variables, e.g. a symbolic delay). The result no longer
    /// contains `v`.
    pub fn definite_integral(&self, v: Symbol, lower: &Poly, upper: &Poly) -> Poly {
        let anti = self.antiderivative(v);
        anti.substitute(v, upper).sub(&anti.substitute(v, lower))
    }

    /// Definite integral with rational bounds.
    pub fn definite_integral_num(&self, v: Symbol, lower: &Rat, upper: &Rat) -> Poly {
        self.definite_integral(
            v,
            &Poly::constant(lower.clone()),
            &Poly::constant(upper.clone()),
        )
    }

    /// Replaces `v` by an arbitrary polynomial, fully expanded.
    pub fn substitute(&self, v: Symbol, by: &Poly) -> Poly {
        let mut out = Poly::zero();
        // Cache powers of the substituted polynomial.
        let max_p = self.degree_in(v);
        let mut pows: Vec<Poly> = Vec::with_capacity(max_p as usize + 1);
        pows.push(Poly::one());
        for k in 1..=max_p {
            let prev = pows[(k - 1) as usize].clone();
            pows.push(prev.mul(by));
        }
        for (m, c) in &self.terms {
            let (rest, p) = m.without(v);
            let factor = &pows[p as usize];
            for (mf, cf) in &factor.terms {
                out.add_term(rest.mul(mf), c * cf);
            }
        }
        out
    }

    /// Replaces `v` by `alpha * v + beta`.
    pub fn affine_substitute(&self, v: Symbol, alpha: &Rat, beta: &Rat) -> Poly {
        let by = Poly::from_terms([
            (Monomial::var(v), alpha.clone()),
            (Monomial::one(), beta.clone()),
        ]);
        self.substitute(v, &by)
    }

    /// Renames a variable (substitution by another symbol).
    pub fn rename(&self, from: Symbol, to: Symbol) -> Poly {
        if from == to {
            return self.clone();
        }
        self.substitute(from, &Poly::var(to))
    }

    /// Substitutes a rational value for `v`.
    pub fn substitute_num(&self, v: Symbol, value: &Rat) -> Poly {
        self.substitute(v, &Poly::constant(value.clone()))
    }

    /// Exact evaluation; every variable of the polynomial must be assigned.
    pub fn evaluate(&self, point: &BTreeMap<Symbol, Rat>) -> Rat {
        let mut total = Rat::zero();
        for (m, c) in &self.terms {
            let mut v = c.clone();
            for (s, p) in m.powers() {
                let x = point
                    .get(s)
                    .unwrap_or_else(|| panic!("unassigned variable {s} in evaluate"));
                for _ in 0..*p {
                    v *= x;
                }
            }
            total += v;
        }
        total
    }

    /// Floating-point evaluation.
    pub fn eval_f64(&self, point: &BTreeMap<Symbol, f64>) -> f64 {
        let mut total = 0.0;
        for (m, c) in &self.terms {
            let mut v = rat_to_f64(c);
            for (s, p) in m.powers() {
                let x = *point
                    .get(s)
                    .unwrap_or_else(|| panic!("unassigned variable {s} in eval_f64"));
                v *= x.powi(*p as i32);
            }
            total += v;
        }
        total
    }

    /// Largest absolute coefficient, as f64.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms
            .values()
            .map(|c| rat_to_f64(&c.abs()))
            .fold(0.0, f64::max)
    }

    /// Converts all coefficients to f64 and back, for certificate storage.
    pub fn to_f64_terms(&self) -> Vec<(Monomial, f64)> {
        self.terms
            .iter()
            .map(|(m, c)| (m.clone(), rat_to_f64(c)))
            .collect()
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if m.is_one() {
                write!(f, "{c}")?;
            } else if c.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{c}*{m}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta() -> Symbol {
        Symbol::new("poly_test_theta")
    }

    #[test]
    fn product_of_conjugates() {
        let t = Poly::var(theta());
        let p = t.add(&Poly::one()); // theta + 1
        let q = t.sub(&Poly::one()); // theta - 1
        let r = p.mul(&q);
        let expect = t.mul(&t).sub(&Poly::one());
        assert_eq!(r, expect);
    }

    #[test]
    fn additive_identity() {
        let t = Poly::var(theta());
        let p = t.mul(&t).add(&t.scale(&rat(3, 2)));
        assert_eq!(p.add(&Poly::zero()), p);
    }

    #[test]
    fn exponent_addition_degree() {
        let t = Poly::var(theta());
        let p = t.pow(2).mul(&t.pow(3));
        assert_eq!(p.degree(), 5);
    }

    #[test]
    fn differentiate_power_rule() {
        let th = theta();
        let om = Symbol::new("poly_test_omega");
        let t = Poly::var(th);
        // d/dtheta theta^3 = 3 theta^2
        assert_eq!(t.pow(3).differentiate(th), t.pow(2).scale(&rat_from_int(3)));
        // d/dtheta constant = 0
        assert!(Poly::constant(rat(7, 3)).differentiate(th).is_zero());
        // d/dtheta theta^2*omega = 2 theta omega
        let p = t.pow(2).mul(&Poly::var(om));
        let expect = t.mul(&Poly::var(om)).scale(&rat_from_int(2));
        assert_eq!(p.differentiate(th), expect);
    }

    #[test]
    fn definite_integrals_match_hand_values() {
        let th = theta();
        let t = Poly::var(th);
        // int_{-1}^0 theta dtheta = -1/2
        let v = t.definite_integral_num(th, &rat_from_int(-1), &Rat::zero());
        assert_eq!(v, Poly::constant(rat(-1, 2)));
        // int_{-1}^0 1 dtheta = 1
        let v = Poly::one().definite_integral_num(th, &rat_from_int(-1), &Rat::zero());
        assert_eq!(v, Poly::one());
        // moment vector of [1, th, th^2, th^3, th^4] over [-1, 0]
        let moments: Vec<Rat> = (0u32..5)
            .map(|k| {
                t.pow(k)
                    .definite_integral_num(th, &rat_from_int(-1), &Rat::zero())
                    .constant_term()
            })
            .collect();
        let expect = [rat(1, 1), rat(-1, 2), rat(1, 3), rat(-1, 4), rat(1, 5)];
        assert_eq!(moments, expect);
    }

    #[test]
    fn evaluate_boundary_vectors() {
        let th = theta();
        let t = Poly::var(th);
        // (theta^2 + 1) at theta = -2 gives 5
        let p = t.pow(2).add(&Poly::one());
        let mut pt = BTreeMap::new();
        pt.insert(th, rat_from_int(-2));
        assert_eq!(p.evaluate(&pt), rat_from_int(5));
        // Z(0) = [1,0,0,0,0], Z(-1) = [1,-1,1,-1,1]
        let z0: Vec<Rat> = (0u32..5)
            .map(|k| t.pow(k).substitute_num(th, &Rat::zero()).constant_term())
            .collect();
        assert_eq!(z0[0], Rat::one());
        assert!(z0[1..].iter().all(|c| c.is_zero()));
        let zm: Vec<Rat> = (0u32..5)
            .map(|k| {
                t.pow(k)
                    .substitute_num(th, &rat_from_int(-1))
                    .constant_term()
            })
            .collect();
        let expect = [
            rat_from_int(1),
            rat_from_int(-1),
            rat_from_int(1),
            rat_from_int(-1),
            rat_from_int(1),
        ];
        assert_eq!(zm, expect);
    }

    #[test]
    fn affine_substitution_expands() {
        let th = theta();
        let t = Poly::var(th);
        // theta -> 2 theta + 1 applied to theta^2 gives 4 theta^2 + 4 theta + 1
        let p = t.pow(2).affine_substitute(th, &rat_from_int(2), &Rat::one());
        let expect = Poly::from_terms([
            (Monomial::from_powers([(th, 2)]), rat_from_int(4)),
            (Monomial::var(th), rat_from_int(4)),
            (Monomial::one(), rat_from_int(1)),
        ]);
        assert_eq!(p, expect);
        // identity map leaves polynomials unchanged
        let q = t.pow(3).add(&t.scale(&rat(5, 7)));
        assert_eq!(q.affine_substitute(th, &Rat::one(), &Rat::zero()), q);
    }

    #[test]
    fn interval_remap_endpoints() {
        // theta_i = (tau_K / d_i) theta + tau_{i-1} tau_K / d_i maps
        // -tau_i to -tau_K and -tau_{i-1} to 0.
        let tau_k = rat(3, 1);
        let tau_im1 = rat(1, 2);
        let tau_i = rat(5, 4);
        let delta = &tau_i - &tau_im1;
        let alpha = &tau_k / &delta;
        let beta = &tau_im1 * &tau_k / &delta;
        let th = theta();
        let map = Poly::var(th)
            .scale(&alpha)
            .add(&Poly::constant(beta.clone()));
        assert_eq!(
            map.substitute_num(th, &(-tau_i.clone())).constant_term(),
            -tau_k.clone()
        );
        assert_eq!(
            map.substitute_num(th, &(-tau_im1.clone())).constant_term(),
            Rat::zero()
        );
    }
}
