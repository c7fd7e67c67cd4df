//! Polynomials whose coefficients are affine expressions in SDP variables.
//!
//! The certification builders assemble all functional data symbolically:
//! a `VarPoly` is a polynomial in the problem's symbols (state, `theta`,
//! parameters) whose coefficients are affine combinations of scalar SDP
//! variables with exact rational weights. Coefficient matching between two
//! `VarPoly`s then emits equality constraints whose coefficients were
//! computed exactly.

use crate::poly::{Monomial, Poly, Rat};
use crate::sdp::{SdpProblem, VarId};
use crate::symbol::Symbol;
use num_traits::{One, Zero};
use std::collections::BTreeMap;

/// An affine expression `constant + sum coeff_i * var_i` over SDP scalars.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub constant: Rat,
    pub terms: BTreeMap<VarId, Rat>,
}

impl LinExpr {
    pub fn constant(c: Rat) -> LinExpr {
        LinExpr {
            constant: c,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_var(v: VarId) -> LinExpr {
        LinExpr::from_var_scaled(v, Rat::one())
    }

    pub fn from_var_scaled(v: VarId, c: Rat) -> LinExpr {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(v, c);
        }
        LinExpr {
            constant: Rat::zero(),
            terms,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant.is_zero() && self.terms.is_empty()
    }

    pub fn add_assign(&mut self, other: &LinExpr) {
        self.constant += &other.constant;
        for (v, c) in &other.terms {
            let e = self.terms.entry(*v).or_insert_with(Rat::zero);
            *e += c;
            if e.is_zero() {
                self.terms.remove(v);
            }
        }
    }

    pub fn neg(&self) -> LinExpr {
        LinExpr {
            constant: -self.constant.clone(),
            terms: self.terms.iter().map(|(v, c)| (*v, -c.clone())).collect(),
        }
    }

    pub fn scale(&self, k: &Rat) -> LinExpr {
        if k.is_zero() {
            return LinExpr::default();
        }
        LinExpr {
            constant: &self.constant * k,
            terms: self.terms.iter().map(|(v, c)| (*v, c * k)).collect(),
        }
    }

    /// Numeric evaluation given variable values.
    pub fn eval(&self, value_of: &dyn Fn(VarId) -> f64) -> f64 {
        let mut acc = crate::poly::rat_to_f64(&self.constant);
        for (v, c) in &self.terms {
            acc += crate::poly::rat_to_f64(c) * value_of(*v);
        }
        acc
    }

    /// Exact evaluation: float values are converted to the rationals they
    /// represent, so linear identities that hold by construction (e.g.
    /// zero-integral bases) survive instantiation exactly.
    pub fn eval_exact(&self, value_of: &dyn Fn(VarId) -> f64) -> Rat {
        let mut acc = self.constant.clone();
        for (v, c) in &self.terms {
            acc += c * crate::poly::rat_from_f64(value_of(*v));
        }
        acc
    }
}

/// A polynomial with `LinExpr` coefficients.
#[derive(Debug, Clone, Default)]
pub struct VarPoly {
    terms: BTreeMap<Monomial, LinExpr>,
}

impl VarPoly {
    pub fn zero() -> VarPoly {
        VarPoly::default()
    }

    pub fn from_poly(p: &Poly) -> VarPoly {
        VarPoly {
            terms: p
                .terms()
                .map(|(m, c)| (m.clone(), LinExpr::constant(c.clone())))
                .collect(),
        }
    }

    /// A single unknown coefficient times a monomial.
    pub fn var_term(v: VarId, m: Monomial) -> VarPoly {
        let mut terms = BTreeMap::new();
        terms.insert(m, LinExpr::from_var(v));
        VarPoly { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &LinExpr)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> LinExpr {
        self.terms.get(m).cloned().unwrap_or_default()
    }

    pub fn add_term(&mut self, m: Monomial, e: LinExpr) {
        if e.is_zero() {
            return;
        }
        let entry = self.terms.entry(m.clone()).or_default();
        entry.add_assign(&e);
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn add(&self, other: &VarPoly) -> VarPoly {
        let mut out = self.clone();
        for (m, e) in &other.terms {
            out.add_term(m.clone(), e.clone());
        }
        out
    }

    pub fn sub(&self, other: &VarPoly) -> VarPoly {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> VarPoly {
        VarPoly {
            terms: self
                .terms
                .iter()
                .map(|(m, e)| (m.clone(), e.neg()))
                .collect(),
        }
    }

    pub fn scale(&self, k: &Rat) -> VarPoly {
        if k.is_zero() {
            return VarPoly::zero();
        }
        VarPoly {
            terms: self
                .terms
                .iter()
                .map(|(m, e)| (m.clone(), e.scale(k)))
                .collect(),
        }
    }

    /// Multiplies by a known polynomial.
    pub fn mul_poly(&self, p: &Poly) -> VarPoly {
        let mut out = VarPoly::zero();
        for (m, e) in &self.terms {
            for (mp, cp) in p.terms() {
                out.add_term(m.mul(mp), e.scale(cp));
            }
        }
        out
    }

    pub fn differentiate(&self, v: Symbol) -> VarPoly {
        let mut out = VarPoly::zero();
        for (m, e) in &self.terms {
            let (rest, p) = m.without(v);
            if p == 0 {
                continue;
            }
            let m2 = if p == 1 {
                rest
            } else {
                rest.mul(&Monomial::from_powers([(v, p - 1)]))
            };
            out.add_term(m2, e.scale(&crate::poly::rat_from_int(p as i64)));
        }
        out
    }

    pub fn antiderivative(&self, v: Symbol) -> VarPoly {
        let mut out = VarPoly::zero();
        for (m, e) in &self.terms {
            let (rest, p) = m.without(v);
            let m2 = rest.mul(&Monomial::from_powers([(v, p + 1)]));
            out.add_term(m2, e.scale(&(Rat::one() / crate::poly::rat_from_int((p + 1) as i64))));
        }
        out
    }

    /// Substitutes a known polynomial for a variable.
    pub fn substitute(&self, v: Symbol, by: &Poly) -> VarPoly {
        let max_p = self
            .terms
            .keys()
            .map(|m| m.degree_in(v))
            .max()
            .unwrap_or(0);
        let mut pows: Vec<Poly> = Vec::with_capacity(max_p as usize + 1);
        pows.push(Poly::one());
        for k in 1..=max_p {
            let prev = pows[(k - 1) as usize].clone();
            pows.push(prev.mul(by));
        }
        let mut out = VarPoly::zero();
        for (m, e) in &self.terms {
            let (rest, p) = m.without(v);
            for (mf, cf) in pows[p as usize].terms() {
                out.add_term(rest.mul(mf), e.scale(cf));
            }
        }
        out
    }

    pub fn substitute_num(&self, v: Symbol, value: &Rat) -> VarPoly {
        self.substitute(v, &Poly::constant(value.clone()))
    }

    pub fn rename(&self, from: Symbol, to: Symbol) -> VarPoly {
        if from == to {
            return self.clone();
        }
        self.substitute(from, &Poly::var(to))
    }

    /// Renames several symbols at once (no aliasing between the images and
    /// remaining sources is checked; the builders use disjoint families).
    pub fn rename_many(&self, map: &[(Symbol, Symbol)]) -> VarPoly {
        let mut out = self.clone();
        for (from, to) in map {
            out = out.rename(*from, *to);
        }
        out
    }

    pub fn definite_integral(&self, v: Symbol, lower: &Poly, upper: &Poly) -> VarPoly {
        let anti = self.antiderivative(v);
        anti.substitute(v, upper).sub(&anti.substitute(v, lower))
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn degree_in_set(&self, vars: &[Symbol]) -> u32 {
        self.terms
            .keys()
            .map(|m| m.degree_in_set(vars))
            .max()
            .unwrap_or(0)
    }

    /// Instantiates the unknowns, producing a concrete polynomial. The
    /// coefficient arithmetic is exact (floats enter as the rationals they
    /// are), so structural identities of the assembly survive.
    pub fn instantiate(&self, value_of: &dyn Fn(VarId) -> f64) -> Poly {
        let mut out = Poly::zero();
        for (m, e) in &self.terms {
            out.add_term(m.clone(), e.eval_exact(value_of));
        }
        out
    }
}

/// A matrix of `VarPoly` entries (row major).
#[derive(Debug, Clone)]
pub struct VarPolyMatrix {
    pub rows: usize,
    pub cols: usize,
    entries: Vec<VarPoly>,
}

impl VarPolyMatrix {
    pub fn zeros(rows: usize, cols: usize) -> VarPolyMatrix {
        VarPolyMatrix {
            rows,
            cols,
            entries: vec![VarPoly::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> VarPoly) -> VarPolyMatrix {
        let mut m = VarPolyMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                *m.entry_mut(i, j) = f(i, j);
            }
        }
        m
    }

    pub fn from_polymatrix(p: &crate::poly::PolyMatrix) -> VarPolyMatrix {
        VarPolyMatrix::from_fn(p.rows, p.cols, |i, j| VarPoly::from_poly(p.entry(i, j)))
    }

    pub fn entry(&self, i: usize, j: usize) -> &VarPoly {
        &self.entries[i * self.cols + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut VarPoly {
        &mut self.entries[i * self.cols + j]
    }

    pub fn add(&self, other: &VarPolyMatrix) -> VarPolyMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        VarPolyMatrix::from_fn(self.rows, self.cols, |i, j| {
            self.entry(i, j).add(other.entry(i, j))
        })
    }

    pub fn sub(&self, other: &VarPolyMatrix) -> VarPolyMatrix {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> VarPolyMatrix {
        VarPolyMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).neg())
    }

    pub fn transpose(&self) -> VarPolyMatrix {
        VarPolyMatrix::from_fn(self.cols, self.rows, |i, j| self.entry(j, i).clone())
    }

    pub fn scale(&self, k: &Rat) -> VarPolyMatrix {
        VarPolyMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).scale(k))
    }

    pub fn mul_poly(&self, p: &Poly) -> VarPolyMatrix {
        VarPolyMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).mul_poly(p))
    }

    /// Known matrix times unknown matrix.
    pub fn left_mul(&self, a: &crate::poly::PolyMatrix) -> VarPolyMatrix {
        assert_eq!(a.cols, self.rows);
        VarPolyMatrix::from_fn(a.rows, self.cols, |i, j| {
            let mut acc = VarPoly::zero();
            for k in 0..a.cols {
                acc = acc.add(&self.entry(k, j).mul_poly(a.entry(i, k)));
            }
            acc
        })
    }

    /// Unknown matrix times known matrix.
    pub fn right_mul(&self, a: &crate::poly::PolyMatrix) -> VarPolyMatrix {
        assert_eq!(self.cols, a.rows);
        VarPolyMatrix::from_fn(self.rows, a.cols, |i, j| {
            let mut acc = VarPoly::zero();
            for k in 0..self.cols {
                acc = acc.add(&self.entry(i, k).mul_poly(a.entry(k, j)));
            }
            acc
        })
    }

    pub fn map(&self, f: impl Fn(&VarPoly) -> VarPoly) -> VarPolyMatrix {
        VarPolyMatrix::from_fn(self.rows, self.cols, |i, j| f(self.entry(i, j)))
    }

    /// Assembles a block matrix from a grid of blocks.
    pub fn from_blocks(grid: &[Vec<&VarPolyMatrix>]) -> VarPolyMatrix {
        let rows: usize = grid.iter().map(|r| r[0].rows).sum();
        let cols: usize = grid[0].iter().map(|b| b.cols).sum();
        let mut out = VarPolyMatrix::zeros(rows, cols);
        let mut r0 = 0;
        for row in grid {
            let mut c0 = 0;
            let rh = row[0].rows;
            for blk in row {
                assert_eq!(blk.rows, rh, "ragged block row");
                for i in 0..blk.rows {
                    for j in 0..blk.cols {
                        *out.entry_mut(r0 + i, c0 + j) = blk.entry(i, j).clone();
                    }
                }
                c0 += blk.cols;
            }
            assert_eq!(c0, cols, "ragged block widths");
            r0 += rh;
        }
        out
    }

    pub fn max_degree_in_set(&self, vars: &[Symbol]) -> u32 {
        self.entries
            .iter()
            .map(|p| p.degree_in_set(vars))
            .max()
            .unwrap_or(0)
    }

    pub fn instantiate(&self, value_of: &dyn Fn(VarId) -> f64) -> crate::poly::PolyMatrix {
        let mut out = crate::poly::PolyMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.entry_mut(i, j) = self.entry(i, j).instantiate(value_of);
            }
        }
        out
    }
}

/// Declares an unknown polynomial with the given monomial support: one
/// fresh free scalar per monomial.
pub fn declare_poly(prob: &mut SdpProblem, monomials: &[Monomial]) -> VarPoly {
    let mut out = VarPoly::zero();
    for m in monomials {
        let v = prob.declare_free();
        out.add_term(m.clone(), LinExpr::from_var(v));
    }
    out
}

/// Declares an unknown symmetric matrix polynomial with the given support
/// per entry.
pub fn declare_symmetric_matrix(
    prob: &mut SdpProblem,
    n: usize,
    monomials: &[Monomial],
) -> VarPolyMatrix {
    let mut out = VarPolyMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let p = declare_poly(prob, monomials);
            *out.entry_mut(i, j) = p.clone();
            if i != j {
                *out.entry_mut(j, i) = p;
            }
        }
    }
    out
}

/// Declares an unknown (not necessarily symmetric) matrix polynomial.
pub fn declare_matrix(
    prob: &mut SdpProblem,
    rows: usize,
    cols: usize,
    monomials: &[Monomial],
) -> VarPolyMatrix {
    let mut out = VarPolyMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            *out.entry_mut(i, j) = declare_poly(prob, monomials);
        }
    }
    out
}

/// Emits the equality `p = 0` coefficient-by-coefficient, one row per
/// monomial in the support. Returns the constraint ids.
pub fn assert_zero(prob: &mut SdpProblem, p: &VarPoly) -> Vec<usize> {
    let mut rows = Vec::new();
    for (_, e) in p.terms() {
        let lincomb: Vec<(VarId, f64)> = e
            .terms
            .iter()
            .map(|(v, c)| (*v, crate::poly::rat_to_f64(c)))
            .collect();
        let rhs = -crate::poly::rat_to_f64(&e.constant);
        if lincomb.is_empty() && rhs == 0.0 {
            continue;
        }
        rows.push(prob.add_equality(lincomb, rhs).expect("declared variables"));
    }
    rows
}

/// Emits `A = B` entry-wise. When both sides are symmetric only the upper
/// triangle is emitted.
pub fn assert_matrix_eq(
    prob: &mut SdpProblem,
    a: &VarPolyMatrix,
    b: &VarPolyMatrix,
    symmetric: bool,
) -> Vec<usize> {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols));
    let mut rows = Vec::new();
    for i in 0..a.rows {
        let j0 = if symmetric { i } else { 0 };
        for j in j0..a.cols {
            let diff = a.entry(i, j).sub(b.entry(i, j));
            rows.extend(assert_zero(prob, &diff));
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{rat, rat_from_int};

    #[test]
    fn varpoly_linear_structure() {
        let th = Symbol::new("vp_theta");
        let mut prob = SdpProblem::new();
        let b = prob.declare_block(2);
        let q = VarId::entry(b, 0, 1);
        let p = VarPoly::var_term(q, Monomial::var(th));
        let two_p = p.add(&p);
        let c = two_p.coeff(&Monomial::var(th));
        assert_eq!(c.terms.get(&q), Some(&rat_from_int(2)));
        let scaled = p.scale(&rat(1, 3));
        assert_eq!(
            scaled.coeff(&Monomial::var(th)).terms.get(&q),
            Some(&rat(1, 3))
        );
    }

    #[test]
    fn substitution_moves_unknowns() {
        let th = Symbol::new("vp_sub_theta");
        let mut prob = SdpProblem::new();
        let v = prob.declare_free();
        // p = v * theta^2; theta -> theta + 1 gives v*(theta^2 + 2 theta + 1)
        let p = VarPoly::var_term(v, Monomial::from_powers([(th, 2)]));
        let q = p.substitute(
            th,
            &Poly::var(th).add(&Poly::one()),
        );
        assert_eq!(q.coeff(&Monomial::one()).terms.get(&v), Some(&rat_from_int(1)));
        assert_eq!(q.coeff(&Monomial::var(th)).terms.get(&v), Some(&rat_from_int(2)));
    }

    #[test]
    fn assert_zero_emits_rows() {
        let th = Symbol::new("vp_az_theta");
        let mut prob = SdpProblem::new();
        let v = prob.declare_free();
        // v * theta - 3 theta = 0 and constant 5 - w = 0
        let w = prob.declare_free();
        let mut p = VarPoly::var_term(v, Monomial::var(th));
        p.add_term(
            Monomial::var(th),
            LinExpr::constant(rat_from_int(-3)),
        );
        p.add_term(Monomial::one(), LinExpr::constant(rat_from_int(5)));
        p.add_term(Monomial::one(), LinExpr::from_var_scaled(w, rat_from_int(-1)));
        let rows = assert_zero(&mut prob, &p);
        assert_eq!(rows.len(), 2);
        let sol = prob.solve(&crate::sdp::SolveOptions::default());
        assert!(sol.is_feasible());
        assert!((sol.free[0] - 3.0).abs() < 1e-7);
        assert!((sol.free[1] - 5.0).abs() < 1e-7);
    }
}
