//! Positive multiplier and integral-operator cones.
//!
//! The certification conditions constrain matrix-valued functions two
//! ways: pointwise positivity of a multiplier `M(theta)` on the delay
//! interval, corrected by a spacing function `T` with zero integral (which
//! shifts pointwise-indefinite multipliers into pointwise-PSD form without
//! changing the integral quadratic form), and positivity of integral
//! operators with kernel `R(theta, omega) = Zbar(theta)' Q Zbar(omega)`,
//! `Q >= 0` (finite-rank positive kernels). Piecewise variants cover
//! multiple delays: per-piece multipliers share one spacing budget, and a
//! piecewise kernel is the block image of a continuous kernel on the full
//! interval under per-piece affine rescaling.
//!
//! Spacing functions are parameterized directly in an exact zero-integral
//! polynomial basis (computed as the rational nullspace of the moment
//! map), so solved spacing integrals vanish identically rather than to
//! solver tolerance.

use crate::poly::{Monomial, MonomialBasis, Poly, Rat};
use crate::sdp::{BlockId, SdpProblem};
use crate::sos::{
    self, gram_kernel_poly, gram_matrix_poly, LinExpr, SosConstraint, VarPoly, VarPolyMatrix,
};
use crate::symbol::Symbol;
use num_traits::Zero;

/// Exact basis of the space of polynomials (per piece) whose summed
/// definite integral over the pieces vanishes identically.
///
/// Candidates are `theta^k * m` with `k <= d_theta` and `m` ranging over
/// the outer-variable monomials; each basis element is one polynomial per
/// piece. Bounds may involve other symbols (a symbolic delay), in which
/// case the integral vanishes as a polynomial identity in those symbols.
pub fn zero_integral_basis(
    theta: Symbol,
    intervals: &[(Poly, Poly)],
    d_theta: usize,
    outer: &[(Vec<Symbol>, usize)],
) -> Vec<Vec<Poly>> {
    let mut groups = vec![(vec![theta], d_theta)];
    groups.extend_from_slice(outer);
    let candidates = MonomialBasis::capped_groups(&groups).monomials;
    let ncand = candidates.len() * intervals.len();

    // Integral of each candidate; collect the union of result monomials.
    let mut integrals: Vec<Poly> = Vec::with_capacity(ncand);
    for (lo, hi) in intervals {
        for m in &candidates {
            let p = Poly::from_term(m.clone(), Rat::one());
            integrals.push(p.definite_integral(theta, lo, hi));
        }
    }
    let mut row_monos: Vec<Monomial> = Vec::new();
    for p in &integrals {
        for (m, _) in p.terms() {
            if !row_monos.contains(m) {
                row_monos.push(m.clone());
            }
        }
    }
    row_monos.sort();
    let mat: Vec<Vec<Rat>> = row_monos
        .iter()
        .map(|rm| integrals.iter().map(|p| p.coeff(rm)).collect())
        .collect();
    let null = rational_nullspace(&mat, ncand);

    let per_piece = candidates.len();
    null.into_iter()
        .map(|vec| {
            (0..intervals.len())
                .map(|pi| {
                    let mut p = Poly::zero();
                    for (ci, m) in candidates.iter().enumerate() {
                        p.add_term(m.clone(), vec[pi * per_piece + ci].clone());
                    }
                    p
                })
                .collect()
        })
        .collect()
}

use num_traits::One;

/// Exact nullspace basis of a rational matrix (rows given explicitly).
fn rational_nullspace(rows: &[Vec<Rat>], ncols: usize) -> Vec<Vec<Rat>> {
    let mut m: Vec<Vec<Rat>> = rows.to_vec();
    let nrows = m.len();
    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        // Find a pivot in column c at or below row r.
        let Some(pr) = (r..nrows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, pr);
        let inv = Rat::one() / m[r][c].clone();
        for x in &mut m[r] {
            *x *= &inv;
        }
        for i in 0..nrows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in 0..ncols {
                    let sub = &m[r][j] * &f;
                    m[i][j] -= sub;
                }
            }
        }
        pivot_cols.push(c);
        r += 1;
        if r == nrows {
            break;
        }
    }
    let mut basis = Vec::new();
    for c in 0..ncols {
        if pivot_cols.contains(&c) {
            continue;
        }
        let mut v = vec![Rat::zero(); ncols];
        v[c] = Rat::one();
        for (pi, &pc) in pivot_cols.iter().enumerate() {
            v[pc] = -m[pi][c].clone();
        }
        basis.push(v);
    }
    basis
}

/// An unknown symmetric matrix function with identically zero integral
/// over the delay intervals, one matrix piece per interval.
#[derive(Debug, Clone)]
pub struct SpacingFunction {
    /// One symmetric matrix per piece; all share coefficient variables.
    pub pieces: Vec<VarPolyMatrix>,
    /// Basis elements (per basis function, per piece) used per entry.
    pub basis: Vec<Vec<Poly>>,
    pub dim: usize,
}

/// Declares a spacing function of size `n` on the given intervals:
/// per-entry coefficients range over the exact zero-integral basis, so the
/// integral constraint holds by construction. `outer` adds parameter
/// dependence to the coefficients.
pub fn spacing_function(
    prob: &mut SdpProblem,
    n: usize,
    theta: Symbol,
    intervals: &[(Poly, Poly)],
    d_theta: usize,
    outer: &[(Vec<Symbol>, usize)],
) -> SpacingFunction {
    let basis = zero_integral_basis(theta, intervals, d_theta, outer);
    let k = intervals.len();
    let mut pieces = vec![VarPolyMatrix::zeros(n, n); k];
    for i in 0..n {
        for j in i..n {
            for b in &basis {
                let v = prob.declare_free();
                for (pi, piece_poly) in b.iter().enumerate() {
                    let mut term = VarPoly::zero();
                    for (m, c) in piece_poly.terms() {
                        term.add_term(m.clone(), LinExpr::from_var_scaled(v, c.clone()));
                    }
                    let cur = pieces[pi].entry(i, j).add(&term);
                    *pieces[pi].entry_mut(i, j) = cur.clone();
                    if i != j {
                        *pieces[pi].entry_mut(j, i) = cur;
                    }
                }
            }
        }
    }
    SpacingFunction {
        pieces,
        basis,
        dim: n,
    }
}

/// A compiled multiplier-positivity membership: per piece,
/// `M_i(theta) + diag(T_i(theta), 0) >= 0` pointwise on its interval
/// (through interval multipliers), with `T` a shared spacing function.
#[derive(Debug, Clone)]
pub struct MultiplierCone {
    pub spacing: SpacingFunction,
    pub memberships: Vec<SosConstraint>,
}

/// Emits the positive-multiplier constraint for `pieces[i]` on
/// `intervals[i]`. The leading `spacing_dim` block of each piece is
/// corrected by the spacing function; `param_region` adds parameter
/// constraints (each `g >= 0`) to the pointwise positivity, and
/// `spacing_outer` gives the spacing coefficients parameter dependence.
#[allow(clippy::too_many_arguments)]
pub fn multiplier_positivity(
    prob: &mut SdpProblem,
    pieces: &[VarPolyMatrix],
    spacing_dim: usize,
    theta: Symbol,
    intervals: &[(Poly, Poly)],
    d_spacing: usize,
    param_region: &[Poly],
    spacing_outer: &[(Vec<Symbol>, usize)],
) -> MultiplierCone {
    assert_eq!(pieces.len(), intervals.len());
    let q = pieces[0].rows;
    assert!(spacing_dim <= q, "spacing block exceeds multiplier size");
    let spacing = spacing_function(prob, spacing_dim, theta, intervals, d_spacing, spacing_outer);

    let mut memberships = Vec::new();
    for (pi, m) in pieces.iter().enumerate() {
        // M_i + diag(T_i, 0)
        let mut target = m.clone();
        for i in 0..spacing_dim {
            for j in 0..spacing_dim {
                let sum = target.entry(i, j).add(spacing.pieces[pi].entry(i, j));
                *target.entry_mut(i, j) = sum;
            }
        }
        let (lo, hi) = &intervals[pi];
        let p_int = interval_polynomial_bounds(theta, lo, hi);
        let mut region = vec![p_int];
        region.extend_from_slice(param_region);
        let mut groups = vec![vec![theta]];
        let rest: Vec<Symbol> = collect_vars(&target, &region)
            .into_iter()
            .filter(|v| *v != theta)
            .collect();
        if !rest.is_empty() {
            groups.push(rest);
        }
        memberships.push(sos::psd_on_region(prob, &target, &groups, &region));
    }
    MultiplierCone {
        spacing,
        memberships,
    }
}

/// `(theta - lo)(hi - theta)` with polynomial bounds.
pub fn interval_polynomial_bounds(theta: Symbol, lo: &Poly, hi: &Poly) -> Poly {
    let t = Poly::var(theta);
    t.sub(lo).mul(&hi.sub(&t))
}

fn collect_vars(target: &VarPolyMatrix, region: &[Poly]) -> Vec<Symbol> {
    let mut vars: Vec<Symbol> = Vec::new();
    for i in 0..target.rows {
        for j in 0..target.cols {
            for (m, _) in target.entry(i, j).terms() {
                for (s, _) in m.powers() {
                    if !vars.contains(s) {
                        vars.push(*s);
                    }
                }
            }
        }
    }
    for g in region {
        for v in g.variables() {
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
    }
    vars.sort();
    vars
}

/// A finite-rank positive integral-operator kernel
/// `R(theta, omega) = Zbar(theta)' Q Zbar(omega)` with `Q >= 0`.
#[derive(Debug, Clone)]
pub struct KernelVariable {
    pub gram: BlockId,
    pub basis: Vec<Monomial>,
    pub dim: usize,
    pub kernel: VarPolyMatrix,
}

/// Declares a continuous positive kernel of size `dim` with scalar
/// theta-basis degree `d_basis`.
pub fn kernel_variable(
    prob: &mut SdpProblem,
    dim: usize,
    theta: Symbol,
    omega: Symbol,
    d_basis: usize,
) -> KernelVariable {
    let basis = MonomialBasis::total_degree(&[theta], d_basis).monomials;
    let gram = prob.declare_block(dim * basis.len());
    let kernel = gram_kernel_poly(gram, &basis, theta, omega, dim);
    KernelVariable {
        gram,
        basis,
        dim,
        kernel,
    }
}

/// Declares a parameter-dependent positive kernel: the Gram factor is
/// `P(y) = S0(y) + sum_i g_i(y) S_i(y)` with each `S_i` a matrix
/// sum-of-squares in the parameters, so `P(y) >= 0` whenever every
/// `g_i(y) >= 0`.
pub fn kernel_variable_pd(
    prob: &mut SdpProblem,
    dim: usize,
    theta: Symbol,
    omega: Symbol,
    d_basis: usize,
    params: &[Symbol],
    d_param: usize,
    region: &[Poly],
) -> (Vec<BlockId>, Vec<Monomial>, VarPolyMatrix) {
    let basis = MonomialBasis::total_degree(&[theta], d_basis).monomials;
    let l = basis.len();
    let pdim = dim * l;
    let pbasis = MonomialBasis::total_degree(params, d_param.div_ceil(2)).monomials;
    let mut grams = Vec::new();

    let lead = prob.declare_block(pdim * pbasis.len());
    grams.push(lead);
    let mut pmat = gram_matrix_poly(lead, &pbasis, pdim);
    for g in region {
        let gb = prob.declare_block(pdim * pbasis.len());
        grams.push(gb);
        pmat = pmat.add(&gram_matrix_poly(gb, &pbasis, pdim).mul_poly(g));
    }

    // Kernel entries: R_{ij}(theta, omega, y) = sum_ab z_a(th) z_b(om) P[(i,a),(j,b)](y)
    let omega_basis: Vec<Monomial> = basis
        .iter()
        .map(|m| {
            let (rest, p) = m.without(theta);
            rest.mul(&Monomial::from_powers([(omega, p)]))
        })
        .collect();
    let kernel = VarPolyMatrix::from_fn(dim, dim, |i, j| {
        let mut poly = VarPoly::zero();
        for a in 0..l {
            for b in 0..l {
                let mono = basis[a].mul(&omega_basis[b]);
                let term = pmat
                    .entry(i * l + a, j * l + b)
                    .mul_poly(&Poly::from_term(mono, Rat::one()));
                poly = poly.add(&term);
            }
        }
        poly
    });
    (grams, basis, kernel)
}

/// A piecewise positive kernel: block `(i, j)` of a continuous master
/// kernel on the full interval, pulled to local coordinates by the affine
/// maps `theta -> a_i theta + b_i` that send each piece onto the full
/// interval.
#[derive(Debug, Clone)]
pub struct PiecewiseKernel {
    pub gram: BlockId,
    pub basis: Vec<Monomial>,
    pub n: usize,
    pub k: usize,
    /// Master kernel of size `n * k` in the master coordinates.
    pub master: VarPolyMatrix,
    /// Local kernels per (piece i, piece j), size n, in local coordinates.
    pub pieces: Vec<Vec<VarPolyMatrix>>,
    /// Affine maps `(a_i, b_i)`.
    pub maps: Vec<(Rat, Rat)>,
}

/// Declares a piecewise positive kernel for delays `0 < tau_1 < ... <
/// tau_K` (piece `i` covers `[-tau_{i+1}, -tau_i]` with `tau_0 = 0`).
pub fn piecewise_kernel(
    prob: &mut SdpProblem,
    n: usize,
    theta: Symbol,
    omega: Symbol,
    d_basis: usize,
    delays: &[Rat],
) -> PiecewiseKernel {
    let k = delays.len();
    assert!(k >= 1);
    let tau_k = delays[k - 1].clone();
    let master = kernel_variable(prob, n * k, theta, omega, d_basis);

    let mut maps = Vec::with_capacity(k);
    for i in 0..k {
        let tau_prev = if i == 0 { Rat::zero() } else { delays[i - 1].clone() };
        let delta = delays[i].clone() - tau_prev.clone();
        let a = tau_k.clone() / delta.clone();
        let b = tau_prev * tau_k.clone() / delta;
        maps.push((a, b));
    }

    let mut pieces: Vec<Vec<VarPolyMatrix>> = Vec::with_capacity(k);
    for i in 0..k {
        let mut row = Vec::with_capacity(k);
        for j in 0..k {
            let blk = VarPolyMatrix::from_fn(n, n, |r, c| {
                master
                    .kernel
                    .entry(i * n + r, j * n + c)
                    .substitute(
                        theta,
                        &Poly::var(theta)
                            .scale(&maps[i].0)
                            .add(&Poly::constant(maps[i].1.clone())),
                    )
                    .substitute(
                        omega,
                        &Poly::var(omega)
                            .scale(&maps[j].0)
                            .add(&Poly::constant(maps[j].1.clone())),
                    )
            });
            row.push(blk);
        }
        pieces.push(row);
    }
    PiecewiseKernel {
        gram: master.gram,
        basis: master.basis,
        n,
        k,
        master: master.kernel,
        pieces,
        maps,
    }
}

/// Equates two kernel matrices entry- and coefficient-wise, emitting only
/// the canonical half of the rows implied by the kernel symmetry
/// `K(theta, omega) = K(omega, theta)'` (verified before dropping).
pub fn assert_kernel_eq(
    prob: &mut SdpProblem,
    a: &VarPolyMatrix,
    b: &VarPolyMatrix,
    theta: Symbol,
    omega: Symbol,
) -> Vec<usize> {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols));
    let n = a.rows;
    let diff = a.sub(b);
    // Verify the mirror structure: diff_ij(theta, omega) must equal
    // diff_ji(omega, theta); any violation is a builder bug.
    for i in 0..n {
        for j in i..n {
            let mirrored = swap_args(diff.entry(j, i), theta, omega);
            assert!(
                varpoly_eq(diff.entry(i, j), &mirrored),
                "kernel symmetry violated at block ({i},{j})"
            );
        }
    }
    let mut rows = Vec::new();
    for i in 0..n {
        for j in i..n {
            let e = diff.entry(i, j);
            let mut canon = VarPoly::zero();
            for (m, c) in e.terms() {
                if i == j && m.degree_in(theta) > m.degree_in(omega) {
                    continue; // mirror of an emitted row
                }
                canon.add_term(m.clone(), c.clone());
            }
            rows.extend(sos::assert_zero(prob, &canon));
        }
    }
    rows
}

fn swap_args(p: &VarPoly, theta: Symbol, omega: Symbol) -> VarPoly {
    // Swap two symbols through a temporary.
    let tmp = Symbol::new("__kernel_swap_tmp");
    p.rename(theta, tmp).rename(omega, theta).rename(tmp, omega)
}

fn varpoly_eq(a: &VarPoly, b: &VarPoly) -> bool {
    a.sub(b).is_zero()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{rat, rat_from_int, rat_to_f64, PolyMatrix};
    use crate::quadrature::GaussLegendre;
    use crate::sdp::{SolveOptions, SolveStatus, VarId};
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeMap;

    fn th() -> Symbol {
        Symbol::new("cone_theta")
    }
    fn om() -> Symbol {
        Symbol::new("cone_omega")
    }
    fn unit_interval() -> Vec<(Poly, Poly)> {
        vec![(Poly::constant(rat_from_int(-1)), Poly::zero())]
    }

    #[test]
    fn spacing_degree_zero_is_trivial() {
        let mut prob = SdpProblem::new();
        let t = spacing_function(&mut prob, 1, th(), &unit_interval(), 0, &[]);
        assert!(t.basis.is_empty());
        assert!(t.pieces[0].entry(0, 0).is_zero());
    }

    #[test]
    fn spacing_degree_one_family() {
        // T = a + b theta on [-1, 0] with zero integral: a = b/2, a
        // one-parameter family.
        let basis = zero_integral_basis(th(), &unit_interval(), 1, &[]);
        assert_eq!(basis.len(), 1);
        let p = &basis[0][0];
        // The element must be a multiple of 1/2 + theta... check a = b/2.
        let a = p.coeff(&Monomial::one());
        let b = p.coeff(&Monomial::var(th()));
        assert_eq!(a * rat_from_int(2), b);
        // And its integral vanishes exactly.
        let integral = p.definite_integral_num(th(), &rat_from_int(-1), &Rat::zero());
        assert!(integral.is_zero());
    }

    #[test]
    fn piecewise_spacing_constant_family() {
        // Two constants c1, c2 on [-1, -1/2], [-1/2, 0] with
        // (1/2) c1 + (1/2) c2 = 0.
        let intervals = vec![
            (Poly::constant(rat(-1, 2)), Poly::zero()),
            (Poly::constant(rat_from_int(-1)), Poly::constant(rat(-1, 2))),
        ];
        let basis = zero_integral_basis(th(), &intervals, 0, &[]);
        assert_eq!(basis.len(), 1);
        let c1 = basis[0][0].constant_term();
        let c2 = basis[0][1].constant_term();
        assert_eq!(c1.clone() * rat(1, 2) + c2.clone() * rat(1, 2), Rat::zero());
    }

    #[test]
    fn symbolic_bound_spacing_vanishes_identically() {
        // Spacing over [-tau, 0] with symbolic tau: the integral must
        // vanish as a polynomial in tau.
        let tau = Symbol::new("cone_tau_sym");
        let lo = Poly::var(tau).neg();
        let intervals = vec![(lo.clone(), Poly::zero())];
        let basis = zero_integral_basis(th(), &intervals, 2, &[(vec![tau], 2)]);
        assert!(!basis.is_empty());
        for b in &basis {
            let integral = b[0].definite_integral(th(), &lo, &Poly::zero());
            assert!(integral.is_zero(), "got {integral}");
        }
    }

    #[test]
    fn multiplier_positivity_examples() {
        let n = 1;
        // M = I (2x2) is positive with T = 0.
        let eye = VarPolyMatrix::from_polymatrix(&PolyMatrix::identity(2));
        let mut prob = SdpProblem::new();
        multiplier_positivity(&mut prob, &[eye], n, th(), &unit_interval(), 2, &[], &[]);
        assert_eq!(prob.solve(&SolveOptions::default()).status, SolveStatus::Feasible);

        // M = diag(theta + 1/2, 1): pointwise indefinite but spacing
        // T = -theta - 1/2 cancels the top-left entry.
        let t = Poly::var(th());
        let mut m = PolyMatrix::identity(2);
        *m.entry_mut(0, 0) = t.add(&Poly::constant(rat(1, 2)));
        let mut prob = SdpProblem::new();
        multiplier_positivity(
            &mut prob,
            &[VarPolyMatrix::from_polymatrix(&m)],
            n,
            th(),
            &unit_interval(),
            2,
            &[],
            &[],
        );
        let sol = prob.solve(&SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Feasible);

        // M = -I stays negative under any spacing.
        let neg = VarPolyMatrix::from_polymatrix(&PolyMatrix::identity(2).neg());
        let mut prob = SdpProblem::new();
        multiplier_positivity(&mut prob, &[neg], n, th(), &unit_interval(), 2, &[], &[]);
        assert_eq!(
            prob.solve(&SolveOptions::default()).status,
            SolveStatus::InfeasibleCertificate
        );
    }

    #[test]
    fn spacing_integral_exact_after_solve() {
        // Solve the diag(theta + 1/2, 1) example and integrate the solved
        // spacing function in exact arithmetic: the result must be the
        // zero polynomial, not merely small.
        let t = Poly::var(th());
        let mut m = PolyMatrix::identity(2);
        *m.entry_mut(0, 0) = t.add(&Poly::constant(rat(1, 2)));
        let mut prob = SdpProblem::new();
        let cone = multiplier_positivity(
            &mut prob,
            &[VarPolyMatrix::from_polymatrix(&m)],
            1,
            th(),
            &unit_interval(),
            2,
            &[],
            &[],
        );
        let sol = prob.solve(&SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Feasible);
        let solved = cone.spacing.pieces[0].instantiate(&|v| sol.value_of(v));
        let integral =
            solved
                .entry(0, 0)
                .definite_integral_num(th(), &rat_from_int(-1), &Rat::zero());
        assert!(integral.is_zero(), "exact spacing integral: {integral}");
    }

    #[test]
    fn kernel_moment_identity_by_quadrature() {
        // For any Gram values Q (not necessarily PSD), the double integral
        // of x(th)' R(th,om) x(om) equals m' Q m with m the moment vector
        // of x against the lifted basis.
        let mut prob = SdpProblem::new();
        let kv = kernel_variable(&mut prob, 2, th(), om(), 2);
        let l = kv.basis.len();
        let dim = 2 * l;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut q = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = rng.gen_range(-1.0..1.0);
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
        }
        let assign = |v: VarId| match v {
            VarId::Entry { row, col, .. } => q[(row as usize, col as usize)],
            _ => 0.0,
        };
        let kernel = kv.kernel.instantiate(&assign);
        // Random polynomial test function x: 2 components of degree 3.
        let coeffs: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let xf = |t: f64, c: &Vec<f64>| c.iter().rev().fold(0.0, |acc, k| acc * t + k);
        let gl = GaussLegendre::new(12);
        let lhs = gl.integrate2(-1.0, 0.0, |tv, ov| {
            let mut acc = 0.0;
            for r in 0..2 {
                for c in 0..2 {
                    let mut pt = BTreeMap::new();
                    pt.insert(th(), tv);
                    pt.insert(om(), ov);
                    acc += xf(tv, &coeffs[r])
                        * kernel.entry(r, c).eval_f64(&pt)
                        * xf(ov, &coeffs[c]);
                }
            }
            acc
        });
        // Moment vector: m[(comp, basis)] = int z_b(t) x_comp(t) dt.
        let mut mvec = vec![0.0; dim];
        for comp in 0..2 {
            for (bi, bm) in kv.basis.iter().enumerate() {
                mvec[comp * l + bi] = gl.integrate(-1.0, 0.0, |tv| {
                    let mut pt = BTreeMap::new();
                    pt.insert(th(), tv);
                    Poly::from_term(bm.clone(), Rat::one()).eval_f64(&pt) * xf(tv, &coeffs[comp])
                });
            }
        }
        let mv = nalgebra::DVector::from_vec(mvec);
        let rhs = (mv.transpose() * &q * &mv)[(0, 0)];
        assert!((lhs - rhs).abs() < 1e-9, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn piecewise_kernel_change_of_variables() {
        // Quadrature identity: the piecewise quadratic form over the full
        // square equals the master form on the rescaled stacked test
        // functions.
        let delays = vec![rat(1, 2), rat_from_int(1)];
        let tau_k = 1.0;
        let mut prob = SdpProblem::new();
        let pk = piecewise_kernel(&mut prob, 1, th(), om(), 1, &delays);
        assert_eq!(pk.k, 2);
        // Endpoint mapping checks: theta = -tau_i maps to -tau_K, theta =
        // -tau_{i-1} maps to 0.
        for i in 0..2 {
            let (a, b) = (&pk.maps[i].0, &pk.maps[i].1);
            let tau_i = rat_to_f64(&delays[i]);
            let tau_prev = if i == 0 { 0.0 } else { rat_to_f64(&delays[i - 1]) };
            let map = |t: f64| rat_to_f64(a) * t + rat_to_f64(b);
            assert!((map(-tau_i) + tau_k).abs() < 1e-12);
            assert!(map(-tau_prev).abs() < 1e-12);
        }

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let dim = pk.basis.len() * pk.n * pk.k;
        let mut q = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = rng.gen_range(-1.0..1.0);
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
        }
        let assign = |v: VarId| match v {
            VarId::Entry { row, col, .. } => q[(row as usize, col as usize)],
            _ => 0.0,
        };
        let master = pk.master.instantiate(&assign);
        let pieces: Vec<Vec<crate::poly::PolyMatrix>> = pk
            .pieces
            .iter()
            .map(|row| row.iter().map(|m| m.instantiate(&assign)).collect())
            .collect();

        let xc: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = |t: f64| xc.iter().rev().fold(0.0, |acc, k| acc * t + k);
        let gl = GaussLegendre::new(16);

        // Left side: sum over piece pairs in local coordinates.
        let mut lhs = 0.0;
        let bounds = [(-0.5, 0.0), (-1.0, -0.5)];
        for i in 0..2 {
            for j in 0..2 {
                let (la, lb) = bounds[i];
                let (ma, mb) = bounds[j];
                let half_i = 0.5 * (lb - la);
                let mid_i = 0.5 * (la + lb);
                let half_j = 0.5 * (mb - ma);
                let mid_j = 0.5 * (ma + mb);
                for (ti, wi) in gl.nodes.iter().zip(&gl.weights) {
                    let tv = mid_i + half_i * ti;
                    for (tj, wj) in gl.nodes.iter().zip(&gl.weights) {
                        let ov = mid_j + half_j * tj;
                        let mut pt = BTreeMap::new();
                        pt.insert(th(), tv);
                        pt.insert(om(), ov);
                        lhs += wi * wj * half_i * half_j
                            * x(tv)
                            * pieces[i][j].entry(0, 0).eval_f64(&pt)
                            * x(ov);
                    }
                }
            }
        }

        // Right side: master form on the stacked rescaled functions
        // xtilde_i(u) = x((u - b_i)/a_i) / a_i.
        let xt = |i: usize, u: f64| {
            let (a, b) = (rat_to_f64(&pk.maps[i].0), rat_to_f64(&pk.maps[i].1));
            x((u - b) / a) / a
        };
        let rhs = gl.integrate2(-tau_k, 0.0, |u, v| {
            let mut acc = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let mut pt = BTreeMap::new();
                    pt.insert(th(), u);
                    pt.insert(om(), v);
                    acc += xt(i, u) * master.entry(i, j).eval_f64(&pt) * xt(j, v);
                }
            }
            acc
        });
        assert!((lhs - rhs).abs() < 1e-9, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn kernel_equality_emission() {
        // Constrain one positive kernel to coincide with another whose
        // Gram is pinned; the canonical row emission must reproduce it.
        let mut prob = SdpProblem::new();
        let r = kernel_variable(&mut prob, 2, th(), om(), 1);
        let l = kernel_variable(&mut prob, 2, th(), om(), 1);
        assert_kernel_eq(&mut prob, &r.kernel, &l.kernel, th(), om());
        // Pin r's Gram to a positive definite matrix.
        let n = 2 * r.basis.len();
        for i in 0..n {
            for j in i..n {
                let v = if i == j { 2.0 } else { 0.4 };
                prob.add_equality([(VarId::entry(r.gram, i, j), 1.0)], v)
                    .unwrap();
            }
        }
        let sol = prob.solve(&SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Feasible);
        let rk = r.kernel.instantiate(&|v| sol.value_of(v));
        let lk = l.kernel.instantiate(&|v| sol.value_of(v));
        let mut pt = BTreeMap::new();
        pt.insert(th(), -0.3);
        pt.insert(om(), -0.7);
        for i in 0..2 {
            for j in 0..2 {
                let want = rk.entry(i, j).eval_f64(&pt);
                let got = lk.entry(i, j).eval_f64(&pt);
                assert!((want - got).abs() < 1e-6, "entry ({i},{j})");
            }
        }
        // And the derivative combination of a symmetric kernel keeps the
        // kernel symmetry, which is what canonical emission relies on.
        let dr = rk
            .entry(0, 1)
            .differentiate(th())
            .add(&rk.entry(0, 1).differentiate(om()));
        let dr_mirror = rk
            .entry(1, 0)
            .differentiate(th())
            .add(&rk.entry(1, 0).differentiate(om()))
            .rename(th(), Symbol::new("cone_swap_tmp"))
            .rename(om(), th())
            .rename(Symbol::new("cone_swap_tmp"), om());
        assert_eq!(dr, dr_mirror);
    }
}
