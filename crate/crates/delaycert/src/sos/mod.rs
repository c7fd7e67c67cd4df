//! Sum-of-squares compilation.
//!
//! Turns polynomial nonnegativity assertions into Gram-matrix PSD
//! variables plus coefficient-matching equality constraints: scalar and
//! matrix sum-of-squares, positivity on an interval through quadratic
//! interval multipliers, and region-restricted positivity with
//! bounded-degree multipliers over `{x : g_i(x) >= 0}`.

pub mod expr;

pub use expr::{
    assert_matrix_eq, assert_zero, declare_matrix, declare_poly, declare_symmetric_matrix,
    LinExpr, VarPoly, VarPolyMatrix,
};

use crate::poly::{MonomialBasis, Poly, PolyMatrix, Rat};
use crate::sdp::{BlockId, SdpProblem, VarId};
use crate::symbol::Symbol;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SosError {
    #[error("target has odd degree {0}; a sum of squares must have even degree")]
    OddDegree(u32),
    #[error("matrix target must be symmetric")]
    NotSymmetric,
    #[error("interval is empty: lower bound must be below upper bound")]
    EmptyInterval,
}

/// One Gram block of a sum-of-squares membership: the PSD variable, the
/// scalar monomial basis it is indexed by (block form is `dim` copies),
/// and the region polynomial it multiplies (`None` for the leading term).
#[derive(Debug, Clone)]
pub struct GramBlock {
    pub block: BlockId,
    pub basis: Vec<crate::poly::Monomial>,
    pub dim: usize,
    pub multiplier: Option<Poly>,
}

/// A compiled nonnegativity assertion.
#[derive(Debug, Clone)]
pub struct SosConstraint {
    pub grams: Vec<GramBlock>,
    pub rows: Vec<usize>,
}

/// Expands the block quadratic form `Zbar' Q Zbar` where `Zbar` is the
/// Kronecker lift of the scalar basis to `dim` components.
pub fn gram_matrix_poly(
    block: BlockId,
    basis: &[crate::poly::Monomial],
    dim: usize,
) -> VarPolyMatrix {
    let l = basis.len();
    VarPolyMatrix::from_fn(dim, dim, |i, j| {
        let mut p = VarPoly::zero();
        for a in 0..l {
            for b in 0..l {
                let v = VarId::entry(block, i * l + a, j * l + b);
                p.add_term(basis[a].mul(&basis[b]), LinExpr::from_var(v));
            }
        }
        p
    })
}

/// Expands the two-argument kernel `Zbar(theta)' Q Zbar(omega)`: entry
/// `(i, j)` is `sum_ab z_a(theta) z_b(omega) Q[(i,a),(j,b)]`. The omega
/// basis is the theta basis with the argument renamed, so the kernel
/// automatically satisfies `R(theta, omega) = R(omega, theta)'`.
pub fn gram_kernel_poly(
    block: BlockId,
    basis: &[crate::poly::Monomial],
    theta: Symbol,
    omega: Symbol,
    dim: usize,
) -> VarPolyMatrix {
    let l = basis.len();
    let omega_basis: Vec<crate::poly::Monomial> = basis
        .iter()
        .map(|m| {
            let (rest, p) = m.without(theta);
            rest.mul(&crate::poly::Monomial::from_powers([(omega, p)]))
        })
        .collect();
    VarPolyMatrix::from_fn(dim, dim, |i, j| {
        let mut poly = VarPoly::zero();
        for a in 0..l {
            for b in 0..l {
                let v = VarId::entry(block, i * l + a, j * l + b);
                poly.add_term(basis[a].mul(&omega_basis[b]), LinExpr::from_var(v));
            }
        }
        poly
    })
}

/// Degree cap of a Gram basis per variable group so that squared basis
/// elements cover the target degree after subtracting a multiplier degree.
fn caps_for(
    target: &VarPolyMatrix,
    groups: &[Vec<Symbol>],
    multiplier: Option<&Poly>,
) -> Vec<(Vec<Symbol>, usize)> {
    groups
        .iter()
        .map(|g| {
            let dt = target.max_degree_in_set(g) as i64;
            let dm = multiplier.map(|m| m.degree_in_set(g) as i64).unwrap_or(0);
            let d = ((dt - dm).max(0) + 1) / 2;
            (g.clone(), d as usize)
        })
        .collect()
}

/// Constrains a symmetric matrix polynomial to be positive semidefinite on
/// the region `{x : g >= 0 for g in region}` via the multiplier
/// parameterization `target = Z'S0 Z + sum_i g_i * Z'S_i Z` with each
/// `S_i` PSD. An empty region is a plain (matrix) sum-of-squares
/// membership. `groups` partitions the variables for anisotropic basis
/// degree caps; variables not listed get no basis powers.
pub fn psd_on_region(
    prob: &mut SdpProblem,
    target: &VarPolyMatrix,
    groups: &[Vec<Symbol>],
    region: &[Poly],
) -> SosConstraint {
    let mult_caps: Vec<Vec<(Vec<Symbol>, usize)>> = region
        .iter()
        .map(|g| caps_for(target, groups, Some(g)))
        .collect();
    psd_on_region_with_caps(prob, target, &caps_for(target, groups, None), region, &mult_caps)
}

/// As [`psd_on_region`] with explicit basis degree caps.
pub fn psd_on_region_with_caps(
    prob: &mut SdpProblem,
    target: &VarPolyMatrix,
    lead_caps: &[(Vec<Symbol>, usize)],
    region: &[Poly],
    mult_caps: &[Vec<(Vec<Symbol>, usize)>],
) -> SosConstraint {
    let n = target.rows;
    assert_eq!(target.rows, target.cols);

    let mut grams = Vec::new();
    let lead_basis = MonomialBasis::capped_groups(lead_caps);
    let lead_block = prob.declare_block(n * lead_basis.len());
    let mut sum = gram_matrix_poly(lead_block, &lead_basis.monomials, n);
    grams.push(GramBlock {
        block: lead_block,
        basis: lead_basis.monomials.clone(),
        dim: n,
        multiplier: None,
    });
    for (g, caps) in region.iter().zip(mult_caps) {
        let basis = MonomialBasis::capped_groups(caps);
        let block = prob.declare_block(n * basis.len());
        let term = gram_matrix_poly(block, &basis.monomials, n).mul_poly(g);
        sum = sum.add(&term);
        grams.push(GramBlock {
            block,
            basis: basis.monomials.clone(),
            dim: n,
            multiplier: Some(g.clone()),
        });
    }
    let rows = assert_matrix_eq(prob, target, &sum, true);
    SosConstraint { grams, rows }
}

/// Scalar sum-of-squares membership: declares `Q >= 0` over the full
/// monomial basis of half the target degree and equates coefficients with
/// `Z' Q Z`.
pub fn sos(prob: &mut SdpProblem, target: &VarPoly) -> Result<SosConstraint, SosError> {
    let deg = target.degree();
    if deg % 2 != 0 {
        return Err(SosError::OddDegree(deg));
    }
    sos_with_degree(prob, target, (deg as usize + 1) / 2)
}

/// Scalar sum-of-squares with an explicit basis degree bound.
pub fn sos_with_degree(
    prob: &mut SdpProblem,
    target: &VarPoly,
    basis_degree: usize,
) -> Result<SosConstraint, SosError> {
    let vars = varpoly_vars(target);
    let mut m = VarPolyMatrix::zeros(1, 1);
    *m.entry_mut(0, 0) = target.clone();
    Ok(psd_on_region_with_caps(
        prob,
        &m,
        &[(vars, basis_degree)],
        &[],
        &[],
    ))
}

/// Matrix sum-of-squares membership for a symmetric polynomial matrix.
pub fn matrix_sos(
    prob: &mut SdpProblem,
    target: &VarPolyMatrix,
) -> Result<SosConstraint, SosError> {
    if target.rows != target.cols {
        return Err(SosError::NotSymmetric);
    }
    let vars = varpolymatrix_vars(target);
    let deg = target.max_degree_in_set(&vars);
    Ok(psd_on_region(prob, target, &[vars], &[]))
        .map(|c| {
            let _ = deg;
            c
        })
}

/// Positivity of a symmetric matrix polynomial in `theta` on `[a, b]`,
/// using the quadratic interval certificate `p(theta) = (theta-a)(b-theta)`
/// which is nonnegative exactly on the interval. Other variables of the
/// target are grouped together for the basis caps.
pub fn interval_positivity(
    prob: &mut SdpProblem,
    target: &VarPolyMatrix,
    theta: Symbol,
    a: &Rat,
    b: &Rat,
) -> Result<SosConstraint, SosError> {
    if a >= b {
        return Err(SosError::EmptyInterval);
    }
    let p = interval_polynomial(theta, a, b);
    let mut groups = vec![vec![theta]];
    let rest: Vec<Symbol> = varpolymatrix_vars(target)
        .into_iter()
        .filter(|v| *v != theta)
        .collect();
    if !rest.is_empty() {
        groups.push(rest);
    }
    Ok(psd_on_region(prob, target, &groups, &[p]))
}

/// `(theta - a)(b - theta)`, nonnegative exactly on `[a, b]`.
pub fn interval_polynomial(theta: Symbol, a: &Rat, b: &Rat) -> Poly {
    let t = Poly::var(theta);
    t.sub(&Poly::constant(a.clone()))
        .mul(&Poly::constant(b.clone()).sub(&t))
}

/// Putinar-style region positivity with an explicit multiplier degree
/// bound: `target - sum_i g_i S_i` is (matrix) SOS with each `S_i` SOS of
/// degree at most `d_mult`.
pub fn putinar(
    prob: &mut SdpProblem,
    target: &VarPolyMatrix,
    region: &[Poly],
    d_mult: usize,
) -> Result<SosConstraint, SosError> {
    let mut vars = varpolymatrix_vars(target);
    for g in region {
        for v in g.variables() {
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
    }
    vars.sort();
    let groups = vec![vars.clone()];
    let lead = caps_for(target, &groups, None);
    let mult: Vec<Vec<(Vec<Symbol>, usize)>> = region
        .iter()
        .map(|_| vec![(vars.clone(), d_mult / 2)])
        .collect();
    Ok(psd_on_region_with_caps(prob, target, &lead, region, &mult))
}

fn varpoly_vars(p: &VarPoly) -> Vec<Symbol> {
    let mut vars: Vec<Symbol> = Vec::new();
    for (m, _) in p.terms() {
        for (s, _) in m.powers() {
            if !vars.contains(s) {
                vars.push(*s);
            }
        }
    }
    vars.sort();
    vars
}

fn varpolymatrix_vars(m: &VarPolyMatrix) -> Vec<Symbol> {
    let mut vars: Vec<Symbol> = Vec::new();
    for i in 0..m.rows {
        for j in 0..m.cols {
            for v in varpoly_vars(m.entry(i, j)) {
                if !vars.contains(&v) {
                    vars.push(v);
                }
            }
        }
    }
    vars.sort();
    vars
}

/// Report from re-expanding a solved Gram matrix against its target.
#[derive(Debug, Clone)]
pub struct DecompositionReport {
    /// Infinity norm of the coefficient residual `target - Z' Q Z`.
    pub residual: f64,
    /// Minimum eigenvalue of the Gram matrix.
    pub min_eigenvalue: f64,
}

/// Re-expands `Z' Q Z` from a solved Gram matrix and reports the
/// coefficient residual against `target` together with the minimum
/// eigenvalue of `Q`. Every acceptance check of a solved decomposition
/// goes through here.
pub fn check_decomposition(
    target: &Poly,
    gram: &DMatrix<f64>,
    basis: &[crate::poly::Monomial],
) -> DecompositionReport {
    check_matrix_decomposition(
        &PolyMatrix::from_fn(1, 1, |_, _| target.clone()),
        gram,
        basis,
        None,
    )
}

/// Matrix version of [`check_decomposition`]; `multiplier` weights the
/// expansion for multiplier Gram blocks.
pub fn check_matrix_decomposition(
    target: &PolyMatrix,
    gram: &DMatrix<f64>,
    basis: &[crate::poly::Monomial],
    multiplier: Option<&Poly>,
) -> DecompositionReport {
    use std::collections::BTreeMap;
    let n = target.rows;
    let l = basis.len();
    assert_eq!(gram.nrows(), n * l);
    let mut residual: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            // Expand entry (i, j) of Zbar' Q Zbar (times multiplier).
            let mut coeffs: BTreeMap<crate::poly::Monomial, f64> = BTreeMap::new();
            for a in 0..l {
                for b in 0..l {
                    let q = gram[(i * l + a, j * l + b)];
                    if q == 0.0 {
                        continue;
                    }
                    let m = basis[a].mul(&basis[b]);
                    match multiplier {
                        None => *coeffs.entry(m).or_insert(0.0) += q,
                        Some(p) => {
                            for (mp, cp) in p.terms() {
                                *coeffs.entry(m.mul(mp)).or_insert(0.0) +=
                                    q * crate::poly::rat_to_f64(cp);
                            }
                        }
                    }
                }
            }
            for (m, c) in target.entry(i, j).terms() {
                *coeffs.entry(m.clone()).or_insert(0.0) -= crate::poly::rat_to_f64(c);
            }
            for (_, c) in coeffs {
                residual = residual.max(c.abs());
            }
        }
    }
    let sym = (gram + gram.transpose()) * 0.5;
    let min_eig = nalgebra::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    DecompositionReport {
        residual,
        min_eigenvalue: min_eig,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{rat, rat_from_int};
    use crate::sdp::{SolveOptions, SolveStatus};
    use num_traits::Zero;

    fn solve(prob: &SdpProblem) -> crate::sdp::SdpSolution {
        prob.solve(&SolveOptions::default())
    }

    #[test]
    fn square_is_sos_and_negative_square_is_not() {
        let x = Symbol::new("sos_x");
        let p = Poly::var(x).pow(2);

        let mut prob = SdpProblem::new();
        sos(&mut prob, &VarPoly::from_poly(&p)).unwrap();
        assert_eq!(solve(&prob).status, SolveStatus::Feasible);

        let mut prob = SdpProblem::new();
        sos(&mut prob, &VarPoly::from_poly(&p.neg())).unwrap();
        assert_eq!(solve(&prob).status, SolveStatus::InfeasibleCertificate);
    }

    #[test]
    fn odd_degree_rejected() {
        let x = Symbol::new("sos_odd_x");
        let mut prob = SdpProblem::new();
        let err = sos(&mut prob, &VarPoly::from_poly(&Poly::var(x).pow(3)));
        assert!(matches!(err, Err(SosError::OddDegree(3))));
    }

    fn motzkin() -> Poly {
        // x^4 y^2 + x^2 y^4 - 3 x^2 y^2 + 1: nonnegative but not SOS.
        let x = Poly::var(Symbol::new("motzkin_x"));
        let y = Poly::var(Symbol::new("motzkin_y"));
        x.pow(4)
            .mul(&y.pow(2))
            .add(&x.pow(2).mul(&y.pow(4)))
            .add(&x.pow(2).mul(&y.pow(2)).scale(&rat_from_int(-3)))
            .add(&Poly::one())
    }

    #[test]
    fn motzkin_rejected_but_nonnegative() {
        let m = motzkin();
        for d in [3usize, 4] {
            let mut prob = SdpProblem::new();
            sos_with_degree(&mut prob, &VarPoly::from_poly(&m), d).unwrap();
            let sol = solve(&prob);
            assert_eq!(
                sol.status,
                SolveStatus::InfeasibleCertificate,
                "degree {d} should reject the Motzkin polynomial"
            );
        }
        // Sampling confirms pointwise nonnegativity.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let vars = m.variables();
        for _ in 0..200 {
            let pt: std::collections::BTreeMap<_, _> = vars
                .iter()
                .map(|v| (*v, rng.gen_range(-3.0..3.0)))
                .collect();
            assert!(m.eval_f64(&pt) >= -1e-9);
        }
    }

    #[test]
    fn matrix_sos_memberships() {
        let x = Symbol::new("msos_x");
        // Constant identity is trivially SOS.
        let mut prob = SdpProblem::new();
        let eye = VarPolyMatrix::from_polymatrix(&PolyMatrix::identity(2));
        matrix_sos(&mut prob, &eye).unwrap();
        assert_eq!(solve(&prob).status, SolveStatus::Feasible);

        // [1, x; x, x^2] = [1, x]' [1, x] is a rank-one outer product.
        let t = Poly::var(x);
        let mut outer = PolyMatrix::zeros(2, 2);
        *outer.entry_mut(0, 0) = Poly::one();
        *outer.entry_mut(0, 1) = t.clone();
        *outer.entry_mut(1, 0) = t.clone();
        *outer.entry_mut(1, 1) = t.pow(2);
        let mut prob = SdpProblem::new();
        matrix_sos(&mut prob, &VarPolyMatrix::from_polymatrix(&outer)).unwrap();
        assert_eq!(solve(&prob).status, SolveStatus::Feasible);

        // Pointwise indefinite: diag(1, -1).
        let mut bad = PolyMatrix::identity(2);
        *bad.entry_mut(1, 1) = Poly::one().neg();
        let mut prob = SdpProblem::new();
        matrix_sos(&mut prob, &VarPolyMatrix::from_polymatrix(&bad)).unwrap();
        assert_eq!(solve(&prob).status, SolveStatus::InfeasibleCertificate);
    }

    #[test]
    fn matrix_sos_equals_scalarization_univariate() {
        // M(x) = [[x^2 + 1, x], [x, 1]] is pointwise PD; both the matrix
        // test and the scalarized y' M y test must accept.
        let x = Symbol::new("msc_x");
        let y1 = Symbol::new("msc_y1");
        let y2 = Symbol::new("msc_y2");
        let t = Poly::var(x);
        let mut m = PolyMatrix::zeros(2, 2);
        *m.entry_mut(0, 0) = t.pow(2).add(&Poly::one());
        *m.entry_mut(0, 1) = t.clone();
        *m.entry_mut(1, 0) = t.clone();
        *m.entry_mut(1, 1) = Poly::one();

        let mut prob = SdpProblem::new();
        matrix_sos(&mut prob, &VarPolyMatrix::from_polymatrix(&m)).unwrap();
        assert_eq!(solve(&prob).status, SolveStatus::Feasible);

        let ys = [Poly::var(y1), Poly::var(y2)];
        let mut scalar = Poly::zero();
        for i in 0..2 {
            for j in 0..2 {
                scalar = scalar.add(&ys[i].mul(&ys[j]).mul(m.entry(i, j)));
            }
        }
        let mut prob = SdpProblem::new();
        sos(&mut prob, &VarPoly::from_poly(&scalar)).unwrap();
        assert_eq!(solve(&prob).status, SolveStatus::Feasible);
    }

    #[test]
    fn interval_positivity_vertex_cases() {
        let th = Symbol::new("ip_theta");
        let t = Poly::var(th);
        // theta (theta + 1) has minimum -1/4 at theta = -1/2 on [-1, 0].
        let parabola = t.mul(&t.add(&Poly::one()));
        let lo = rat_from_int(-1);
        let hi = Rat::zero();

        // +1/5 leaves the minimum negative: infeasible.
        let bad = parabola.add(&Poly::constant(rat(1, 5)));
        let mut prob = SdpProblem::new();
        let mut tgt = VarPolyMatrix::zeros(1, 1);
        *tgt.entry_mut(0, 0) = VarPoly::from_poly(&bad);
        interval_positivity(&mut prob, &tgt, th, &lo, &hi).unwrap();
        assert_eq!(solve(&prob).status, SolveStatus::InfeasibleCertificate);

        // +1/3 clears it: feasible.
        let good = parabola.add(&Poly::constant(rat(1, 3)));
        let mut prob = SdpProblem::new();
        let mut tgt = VarPolyMatrix::zeros(1, 1);
        *tgt.entry_mut(0, 0) = VarPoly::from_poly(&good);
        interval_positivity(&mut prob, &tgt, th, &lo, &hi).unwrap();
        assert_eq!(solve(&prob).status, SolveStatus::Feasible);

        // The interval polynomial itself is trivially feasible.
        let p = interval_polynomial(th, &lo, &hi);
        let mut prob = SdpProblem::new();
        let mut tgt = VarPolyMatrix::zeros(1, 1);
        *tgt.entry_mut(0, 0) = VarPoly::from_poly(&p);
        interval_positivity(&mut prob, &tgt, th, &lo, &hi).unwrap();
        assert_eq!(solve(&prob).status, SolveStatus::Feasible);
    }

    #[test]
    fn putinar_region_memberships() {
        let y = Symbol::new("put_y");
        let t = Poly::var(y);
        let one_by_one = |p: &Poly| {
            let mut m = VarPolyMatrix::zeros(1, 1);
            *m.entry_mut(0, 0) = VarPoly::from_poly(p);
            m
        };

        // y >= 0 on {y >= 0}.
        let mut prob = SdpProblem::new();
        putinar(&mut prob, &one_by_one(&t), &[t.clone()], 0).unwrap();
        assert_eq!(solve(&prob).status, SolveStatus::Feasible);

        // 1 - y^2 >= 0 on {(1-y)(1+y) >= 0}.
        let g = Poly::one().sub(&t.pow(2));
        let mut prob = SdpProblem::new();
        putinar(&mut prob, &one_by_one(&g), &[g.clone()], 0).unwrap();
        assert_eq!(solve(&prob).status, SolveStatus::Feasible);

        // y is negative somewhere on {1 - y^2 >= 0}: rejected at several
        // multiplier degrees.
        for d in [0usize, 2] {
            let mut prob = SdpProblem::new();
            putinar(&mut prob, &one_by_one(&t), &[g.clone()], d).unwrap();
            assert_eq!(solve(&prob).status, SolveStatus::InfeasibleCertificate);
        }
    }

    #[test]
    fn degree_monotonicity_spot_checks() {
        let x = Symbol::new("mono_sos_x");
        let p = Poly::var(x).pow(4).add(&Poly::one());
        for d in [2usize, 3, 4] {
            let mut prob = SdpProblem::new();
            sos_with_degree(&mut prob, &VarPoly::from_poly(&p), d).unwrap();
            assert_eq!(solve(&prob).status, SolveStatus::Feasible, "degree {d}");
        }
    }

    #[test]
    fn reconstruction_and_soundness_sampling() {
        // Solve the SOS of a generic positive quartic, then re-expand the
        // Gram and sample.
        let x = Symbol::new("rec_x");
        let t = Poly::var(x);
        let target = t
            .pow(4)
            .add(&t.pow(3).scale(&rat(1, 2)))
            .add(&t.pow(2).scale(&rat_from_int(2)))
            .add(&t.scale(&rat(-1, 3)))
            .add(&Poly::one());
        let mut prob = SdpProblem::new();
        let c = sos(&mut prob, &VarPoly::from_poly(&target)).unwrap();
        let sol = solve(&prob);
        assert_eq!(sol.status, SolveStatus::Feasible);
        let gram = &sol.blocks[c.grams[0].block.0 as usize];
        let report = check_decomposition(&target, gram, &c.grams[0].basis);
        assert!(report.residual <= 1e-7, "residual {}", report.residual);
        assert!(report.min_eigenvalue >= -1e-8);

        // Perturbing one Gram entry shows up linearly in the residual.
        let mut perturbed = gram.clone();
        perturbed[(0, 0)] += 1e-3;
        let report = check_decomposition(&target, &perturbed, &c.grams[0].basis);
        assert!((report.residual - 1e-3).abs() < 1e-9);

        // Zero polynomial with zero Gram: residual 0.
        let z = check_decomposition(
            &Poly::zero(),
            &DMatrix::zeros(c.grams[0].basis.len(), c.grams[0].basis.len()),
            &c.grams[0].basis,
        );
        assert_eq!(z.residual, 0.0);

        // Soundness by sampling.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut pt = std::collections::BTreeMap::new();
            pt.insert(x, rng.gen_range(-5.0..5.0));
            assert!(target.eval_f64(&pt) >= -1e-6);
        }
    }
}
