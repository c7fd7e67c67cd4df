//! Certification SDPs for linear time-delay systems.
//!
//! For each class the complete quadratic functional
//!
//! ```text
//! V(phi) = phi(0)' P phi(0) + 2 phi(0)' sum_i int Q_i phi
//!        + sum_i int phi' S_i phi + sum_ij int int phi' R_ij phi
//! ```
//!
//! is declared symbolically, its positivity is routed through the
//! multiplier cone (with the kernel part positive by construction), and
//! the negated Lie derivative matrix is assembled exactly and constrained
//! the same way. The derivative assembly is cross-checked against a
//! finite-difference oracle in the verification module.
//!
//! All functional data is assembled in the normalized delay coordinate
//! `s = theta / tau_K` on `[-1, 0]`: coefficient magnitudes then stay
//! O(1) regardless of the delay, which keeps the SDP conditioning uniform
//! along margin sweeps. Artifacts are converted back to the physical
//! coordinate on extraction.

use super::{
    declare_margin, omega_symbol, theta_symbol, Artifacts, BuildError, BuildOptions, BuiltProblem,
    DelayValue, ParamBox, SystemSpec,
};
use crate::cones::{
    assert_kernel_eq, kernel_variable, kernel_variable_pd, multiplier_positivity, piecewise_kernel,
    MultiplierCone,
};
use crate::poly::{Monomial, MonomialBasis, Poly, PolyMatrix, Rat};
use crate::sdp::{SdpProblem, VarId};
use crate::sos::{declare_matrix, declare_symmetric_matrix, VarPoly, VarPolyMatrix};
use crate::symbol::Symbol;
use num_traits::{One, Zero};

/// Symbolic functional and derivative data retained from a linear build.
/// Polynomials are in the normalized coordinate; `tau_poly` converts back.
pub struct LinearArtifacts {
    pub n: usize,
    pub theta: Symbol,
    pub omega: Symbol,
    /// `0 = tau_0 < tau_1 < ... < tau_K` for fixed-delay builds (empty
    /// when the delay is a parameter).
    pub breaks: Vec<Rat>,
    /// The outermost delay as a polynomial (a constant, or the parameter).
    pub tau_poly: Poly,
    pub params: Vec<ParamBox>,
    pub p: VarPolyMatrix,
    /// Normalized-coordinate pieces.
    pub q_pieces: Vec<VarPolyMatrix>,
    pub s_pieces: Vec<VarPolyMatrix>,
    /// Kernel pieces in normalized local coordinates.
    pub r_pieces: Vec<Vec<VarPolyMatrix>>,
    /// Derivative matrix per piece (in `s`), margin term included.
    pub d_pieces: Vec<VarPolyMatrix>,
    /// Derivative kernel per piece pair (in `s`), scaled so that
    /// substituting `s = theta/tau_K` yields the physical kernel.
    pub l_pieces: Vec<Vec<VarPolyMatrix>>,
    pub margin: VarId,
    pub positivity: MultiplierCone,
    pub derivative: MultiplierCone,
}

fn eps_eye(n: usize, margin: VarId) -> VarPolyMatrix {
    VarPolyMatrix::from_fn(n, n, |i, j| {
        if i == j {
            VarPoly::var_term(margin, Monomial::one())
        } else {
            VarPoly::zero()
        }
    })
}

/// `R(at, s)`: evaluates the kernel's first argument at a polynomial and
/// renames the second argument to the running variable.
fn kernel_first_arg_at(
    r: &VarPolyMatrix,
    theta: Symbol,
    omega: Symbol,
    at: &Poly,
) -> VarPolyMatrix {
    r.map(|p| p.substitute(theta, at).rename(omega, theta))
}

fn unit_interval() -> Vec<(Poly, Poly)> {
    vec![(Poly::constant(-Rat::one()), Poly::zero())]
}

/// Builds the single-delay problem, including the parameter-dependent
/// variant when the spec carries boxed parameters or a boxed delay.
pub fn build_single_delay(
    spec: &SystemSpec,
    opts: &BuildOptions,
) -> Result<BuiltProblem, BuildError> {
    let SystemSpec::LinearSingle { n, a, b, tau, params } = spec else {
        unreachable!("dispatch guarantees the variant");
    };
    let n = *n;
    let d = opts.degree;
    let dp = opts.degree_param;
    let theta = theta_symbol();
    let omega = omega_symbol();

    let (tau_poly, breaks) = match tau {
        DelayValue::Fixed(t) => (Poly::constant(t.clone()), vec![Rat::zero(), t.clone()]),
        DelayValue::Param(s) => (Poly::var(*s), Vec::new()),
    };
    let param_syms: Vec<Symbol> = params.iter().map(|p| p.sym).collect();
    let region: Vec<Poly> = params.iter().map(|p| p.region_poly()).collect();
    let scale = spec.scale();

    let mut prob = SdpProblem::new();
    let margin = declare_margin(&mut prob, scale);

    let p_monos = MonomialBasis::total_degree(&param_syms, dp).monomials;
    let qs_monos =
        MonomialBasis::capped_groups(&[(vec![theta], d), (param_syms.clone(), dp)]).monomials;
    let p = declare_symmetric_matrix(&mut prob, n, &p_monos);
    let q = declare_matrix(&mut prob, n, n, &qs_monos);
    let s = declare_symmetric_matrix(&mut prob, n, &qs_monos);

    let kb = opts.kernel_degree.unwrap_or(d.div_ceil(2));
    let r_kernel = if params.is_empty() {
        kernel_variable(&mut prob, n, theta, omega, kb).kernel
    } else {
        kernel_variable_pd(&mut prob, n, theta, omega, kb, &param_syms, dp, &region).2
    };

    let interval = unit_interval();
    let spacing_outer: Vec<(Vec<Symbol>, usize)> = if param_syms.is_empty() {
        vec![]
    } else {
        vec![(param_syms.clone(), dp)]
    };

    // Functional positivity: [P - eps I, tau Q; tau Q', tau S] evaluated
    // in the normalized coordinate.
    let m11 = p.sub(&eps_eye(n, margin));
    let m12 = q.mul_poly(&tau_poly);
    let m21 = m12.transpose();
    let m22 = s.mul_poly(&tau_poly);
    let m_pos = VarPolyMatrix::from_blocks(&[vec![&m11, &m12], vec![&m21, &m22]]);
    let positivity = multiplier_positivity(
        &mut prob,
        &[m_pos],
        n,
        theta,
        &interval,
        d,
        &region,
        &spacing_outer,
    );

    // Derivative matrix in the normalized coordinate: with
    // Q(theta) = Qhat(theta/tau), the transport terms lose one tau factor
    // against the physical form.
    let at = a.transpose();
    let bt = b.transpose();
    let minus_one = Poly::constant(-Rat::one());
    let q0 = q.map(|x| x.substitute_num(theta, &Rat::zero()));
    let q_tau = q.map(|x| x.substitute(theta, &minus_one));
    let s0 = s.map(|x| x.substitute_num(theta, &Rat::zero()));
    let s_tau = s.map(|x| x.substitute(theta, &minus_one));
    let r0 = kernel_first_arg_at(&r_kernel, theta, omega, &Poly::zero());
    let r_tau = kernel_first_arg_at(&r_kernel, theta, omega, &minus_one);

    let d00 = p
        .right_mul(a)
        .add(&p.left_mul(&at))
        .add(&q0)
        .add(&q0.transpose())
        .add(&s0)
        .add(&eps_eye(n, margin));
    let d01 = p.right_mul(b).sub(&q_tau);
    let d02 = q
        .left_mul(&at)
        .mul_poly(&tau_poly)
        .sub(&q.map(|x| x.differentiate(theta)))
        .add(&r0.mul_poly(&tau_poly));
    let d11 = s_tau.neg();
    let d12 = q
        .left_mul(&bt)
        .mul_poly(&tau_poly)
        .sub(&r_tau.mul_poly(&tau_poly));
    let d22 = s.map(|x| x.differentiate(theta)).neg();
    let (d10, d20, d21) = (d01.transpose(), d02.transpose(), d12.transpose());
    let d_mat = VarPolyMatrix::from_blocks(&[
        vec![&d00, &d01, &d02],
        vec![&d10, &d11, &d12],
        vec![&d20, &d21, &d22],
    ]);
    let derivative = multiplier_positivity(
        &mut prob,
        &[d_mat.neg()],
        2 * n,
        theta,
        &interval,
        d,
        &region,
        &spacing_outer,
    );

    // Derivative kernel membership: the physical (d/dth + d/dom) R kernel
    // is the normalized one scaled by 1/tau, so positivity of the
    // normalized combination is equivalent.
    let deriv_kernel = r_kernel.map(|x| x.differentiate(theta).add(&x.differentiate(omega)));
    let fresh = if params.is_empty() {
        kernel_variable(&mut prob, n, theta, omega, kb).kernel
    } else {
        kernel_variable_pd(&mut prob, n, theta, omega, kb, &param_syms, dp, &region).2
    };
    assert_kernel_eq(&mut prob, &deriv_kernel, &fresh, theta, omega);

    // The physical derivative kernel for the oracle carries 1/tau; only
    // available with a fixed delay.
    let l_for_oracle = if let DelayValue::Fixed(t) = tau {
        deriv_kernel.scale(&(Rat::one() / t.clone()))
    } else {
        deriv_kernel
    };

    let artifacts = LinearArtifacts {
        n,
        theta,
        omega,
        breaks,
        tau_poly,
        params: params.clone(),
        p,
        q_pieces: vec![q],
        s_pieces: vec![s],
        r_pieces: vec![vec![r_kernel.clone()]],
        d_pieces: vec![d_mat],
        l_pieces: vec![vec![l_for_oracle]],
        margin,
        positivity,
        derivative,
    };
    Ok(BuiltProblem {
        problem: prob,
        margin,
        margin_cap: 1e-3 * scale,
        scale,
        artifacts: Artifacts::Linear(artifacts),
    })
}

/// Builds the multiple-delay problem with piecewise functional data in the
/// normalized coordinate `s = theta / tau_K`.
pub fn build_multiple_delay(
    spec: &SystemSpec,
    opts: &BuildOptions,
) -> Result<BuiltProblem, BuildError> {
    let SystemSpec::LinearMultiple { n, a0, delayed } = spec else {
        unreachable!("dispatch guarantees the variant");
    };
    let n = *n;
    let d = opts.degree;
    let k = delayed.len();
    let theta = theta_symbol();
    let omega = omega_symbol();
    let delays: Vec<Rat> = delayed.iter().map(|(t, _)| t.clone()).collect();
    let tau_k = delays[k - 1].clone();
    let tau_poly = Poly::constant(tau_k.clone());
    let mut breaks = vec![Rat::zero()];
    breaks.extend(delays.iter().cloned());
    // Normalized breakpoints c_i = tau_i / tau_K, with c_K = 1.
    let cbreaks: Vec<Rat> = breaks.iter().map(|t| t / &tau_k).collect();
    let norm_delays: Vec<Rat> = cbreaks[1..].to_vec();
    let scale = spec.scale();

    let mut prob = SdpProblem::new();
    let margin = declare_margin(&mut prob, scale);

    let qs_monos = MonomialBasis::total_degree(&[theta], d).monomials;
    let p = declare_symmetric_matrix(&mut prob, n, &MonomialBasis::total_degree(&[], 0).monomials);
    let q_pieces: Vec<VarPolyMatrix> = (0..k)
        .map(|_| declare_matrix(&mut prob, n, n, &qs_monos))
        .collect();
    let s_pieces: Vec<VarPolyMatrix> = (0..k)
        .map(|_| declare_symmetric_matrix(&mut prob, n, &qs_monos))
        .collect();

    let kb = opts.kernel_degree.unwrap_or(d.div_ceil(2));
    let pk = piecewise_kernel(&mut prob, n, theta, omega, kb, &norm_delays);

    let intervals: Vec<(Poly, Poly)> = (0..k)
        .map(|i| {
            (
                Poly::constant(-cbreaks[i + 1].clone()),
                Poly::constant(-cbreaks[i].clone()),
            )
        })
        .collect();

    // Positivity pieces: [P - eps I, tau_K Q_i; tau_K Q_i', tau_K S_i].
    let pos_pieces: Vec<VarPolyMatrix> = (0..k)
        .map(|i| {
            let m11 = p.sub(&eps_eye(n, margin));
            let m12 = q_pieces[i].mul_poly(&tau_poly);
            let m21 = m12.transpose();
            let m22 = s_pieces[i].mul_poly(&tau_poly);
            VarPolyMatrix::from_blocks(&[vec![&m11, &m12], vec![&m21, &m22]])
        })
        .collect();
    let positivity =
        multiplier_positivity(&mut prob, &pos_pieces, n, theta, &intervals, d, &[], &[]);

    // Constant boundary blocks shared by every piece. Coordinates:
    // [y_0; y_1; ...; y_K; z] with y_j = x(-tau_j) and z = x(tau_K s).
    let a_mats: Vec<&PolyMatrix> = delayed.iter().map(|(_, m)| m).collect();
    let mut corner = vec![vec![VarPolyMatrix::zeros(n, n); k + 1]; k + 1];
    {
        let q0 = q_pieces[0].map(|x| x.substitute_num(theta, &Rat::zero()));
        let s0 = s_pieces[0].map(|x| x.substitute_num(theta, &Rat::zero()));
        corner[0][0] = p
            .right_mul(a0)
            .add(&p.left_mul(&a0.transpose()))
            .add(&q0)
            .add(&q0.transpose())
            .add(&s0)
            .add(&eps_eye(n, margin));
        for j in 1..=k {
            let at_j = Poly::constant(-cbreaks[j].clone());
            let mut blk = p.right_mul(a_mats[j - 1]);
            if j < k {
                // Jump terms Q_j(-c_j) - Q_{j-1}(-c_j).
                blk = blk
                    .add(&q_pieces[j].map(|x| x.substitute(theta, &at_j)))
                    .sub(&q_pieces[j - 1].map(|x| x.substitute(theta, &at_j)));
            } else {
                blk = blk.sub(&q_pieces[k - 1].map(|x| x.substitute(theta, &at_j)));
            }
            corner[0][j] = blk;
        }
        for j in 1..k {
            let at_j = Poly::constant(-cbreaks[j].clone());
            corner[j][j] = s_pieces[j]
                .map(|x| x.substitute(theta, &at_j))
                .sub(&s_pieces[j - 1].map(|x| x.substitute(theta, &at_j)));
        }
        let at_k = Poly::constant(-cbreaks[k].clone());
        corner[k][k] = s_pieces[k - 1].map(|x| x.substitute(theta, &at_k)).neg();
        for i in 0..=k {
            for j in 0..i {
                corner[i][j] = corner[j][i].transpose();
            }
        }
    }

    // Per-piece derivative matrices: transport blocks lose one tau_K
    // against the physical form because d/dtheta = (1/tau_K) d/ds.
    let mut d_pieces = Vec::with_capacity(k);
    for piece in 0..k {
        let qp = &q_pieces[piece];
        let sp = &s_pieces[piece];
        let mut col: Vec<VarPolyMatrix> = Vec::with_capacity(k + 1);
        let r0p = kernel_first_arg_at(&pk.pieces[0][piece], theta, omega, &Poly::zero());
        col.push(
            qp.left_mul(&a0.transpose())
                .mul_poly(&tau_poly)
                .sub(&qp.map(|x| x.differentiate(theta)))
                .add(&r0p.mul_poly(&tau_poly)),
        );
        for j in 1..=k {
            let at_j = Poly::constant(-cbreaks[j].clone());
            let mut blk = qp.left_mul(&a_mats[j - 1].transpose());
            if j < k {
                let upper = kernel_first_arg_at(&pk.pieces[j][piece], theta, omega, &at_j);
                let lower = kernel_first_arg_at(&pk.pieces[j - 1][piece], theta, omega, &at_j);
                blk = blk.add(&upper).sub(&lower);
            } else {
                let lower = kernel_first_arg_at(&pk.pieces[k - 1][piece], theta, omega, &at_j);
                blk = blk.sub(&lower);
            }
            col.push(blk.mul_poly(&tau_poly));
        }
        let dzz = sp.map(|x| x.differentiate(theta)).neg();

        let col_t: Vec<VarPolyMatrix> = col.iter().map(|c| c.transpose()).collect();
        let mut grid: Vec<Vec<&VarPolyMatrix>> = Vec::with_capacity(k + 2);
        for i in 0..=k {
            let mut row: Vec<&VarPolyMatrix> = (0..=k).map(|j| &corner[i][j]).collect();
            row.push(&col[i]);
            grid.push(row);
        }
        let mut last: Vec<&VarPolyMatrix> = col_t.iter().collect();
        last.push(&dzz);
        grid.push(last);
        d_pieces.push(VarPolyMatrix::from_blocks(&grid));
    }
    let neg_d: Vec<VarPolyMatrix> = d_pieces.iter().map(|m| m.neg()).collect();
    let derivative = multiplier_positivity(
        &mut prob,
        &neg_d,
        (k + 1) * n,
        theta,
        &intervals,
        d,
        &[],
        &[],
    );

    // Derivative kernel: in master coordinates each block picks up the
    // chain-rule factor of its piece map, `a_i dR/du + a_j dR/dv`.
    let master_target = VarPolyMatrix::from_fn(n * k, n * k, |ii, jj| {
        let (pi, pj) = (ii / n, jj / n);
        let m = pk.master.entry(ii, jj);
        m.differentiate(theta)
            .scale(&pk.maps[pi].0)
            .add(&m.differentiate(omega).scale(&pk.maps[pj].0))
    });
    let fresh = kernel_variable(&mut prob, n * k, theta, omega, kb).kernel;
    assert_kernel_eq(&mut prob, &master_target, &fresh, theta, omega);

    // Physical-kernel oracle pieces: (1/tau_K)(d/ds + d/dt) of the local
    // normalized pieces.
    let inv_tau = Rat::one() / tau_k.clone();
    let l_pieces: Vec<Vec<VarPolyMatrix>> = pk
        .pieces
        .iter()
        .map(|row| {
            row.iter()
                .map(|r| {
                    r.map(|x| x.differentiate(theta).add(&x.differentiate(omega)))
                        .scale(&inv_tau)
                })
                .collect()
        })
        .collect();

    let artifacts = LinearArtifacts {
        n,
        theta,
        omega,
        breaks,
        tau_poly,
        params: Vec::new(),
        p,
        q_pieces,
        s_pieces,
        r_pieces: pk.pieces.clone(),
        d_pieces,
        l_pieces,
        margin,
        positivity,
        derivative,
    };
    Ok(BuiltProblem {
        problem: prob,
        margin,
        margin_cap: 1e-3 * scale,
        scale,
        artifacts: Artifacts::Linear(artifacts),
    })
}

/// Builds the distributed-delay problem for
/// `x' = A_0 x + int_{-tau}^0 A(theta) x(t + theta)`.
pub fn build_distributed_delay(
    spec: &SystemSpec,
    opts: &BuildOptions,
) -> Result<BuiltProblem, BuildError> {
    let SystemSpec::LinearDistributed { n, a0, kernel, theta: ktheta, tau } = spec else {
        unreachable!("dispatch guarantees the variant");
    };
    let n = *n;
    let d = opts.degree;
    if kernel.max_degree() as usize > d {
        return Err(BuildError::KernelDegree {
            found: kernel.max_degree(),
            degree: d,
        });
    }
    let theta = theta_symbol();
    let omega = omega_symbol();
    // Normalize the user kernel argument: Ahat(s) = A(tau s).
    let a_theta = kernel.map(|p| {
        p.rename(*ktheta, theta)
            .affine_substitute(theta, tau, &Rat::zero())
    });
    let a_omega = a_theta.map(|p| p.rename(theta, omega));
    let tau_poly = Poly::constant(tau.clone());
    let breaks = vec![Rat::zero(), tau.clone()];
    let scale = spec.scale();

    let mut prob = SdpProblem::new();
    let margin = declare_margin(&mut prob, scale);

    let qs_monos = MonomialBasis::total_degree(&[theta], d).monomials;
    let p = declare_symmetric_matrix(&mut prob, n, &MonomialBasis::total_degree(&[], 0).monomials);
    let q = declare_matrix(&mut prob, n, n, &qs_monos);
    let s = declare_symmetric_matrix(&mut prob, n, &qs_monos);
    let kb = opts.kernel_degree.unwrap_or(d.div_ceil(2));
    let r_kernel = kernel_variable(&mut prob, n, theta, omega, kb).kernel;

    let interval = unit_interval();
    let m11 = p.sub(&eps_eye(n, margin));
    let m12 = q.mul_poly(&tau_poly);
    let m21 = m12.transpose();
    let m22 = s.mul_poly(&tau_poly);
    let m_pos = VarPolyMatrix::from_blocks(&[vec![&m11, &m12], vec![&m21, &m22]]);
    let positivity =
        multiplier_positivity(&mut prob, &[m_pos], n, theta, &interval, d, &[], &[]);

    let at = a0.transpose();
    let minus_one = Poly::constant(-Rat::one());
    let q0 = q.map(|x| x.substitute_num(theta, &Rat::zero()));
    let q_tau = q.map(|x| x.substitute(theta, &minus_one));
    let s0 = s.map(|x| x.substitute_num(theta, &Rat::zero()));
    let s_tau = s.map(|x| x.substitute(theta, &minus_one));
    let r0 = kernel_first_arg_at(&r_kernel, theta, omega, &Poly::zero());
    let r_tau = kernel_first_arg_at(&r_kernel, theta, omega, &minus_one);

    let d00 = p
        .right_mul(a0)
        .add(&p.left_mul(&at))
        .add(&q0)
        .add(&q0.transpose())
        .add(&s0)
        .add(&eps_eye(n, margin));
    let d01 = q_tau.neg();
    // tau A0' Qhat + tau^2 P Ahat - Qhat' + tau Rhat(0, s): the
    // distributed transport P A(theta) integrates over theta, hence the
    // extra tau against the discrete case.
    let d02 = q
        .left_mul(&at)
        .mul_poly(&tau_poly)
        .add(&p.right_mul(&a_theta).mul_poly(&tau_poly))
        .sub(&q.map(|x| x.differentiate(theta)))
        .add(&r0.mul_poly(&tau_poly));
    let d11 = s_tau.neg();
    let d12 = r_tau.neg().mul_poly(&tau_poly);
    let d22 = s.map(|x| x.differentiate(theta)).neg();
    let (d10, d20, d21) = (d01.transpose(), d02.transpose(), d12.transpose());
    let d_mat = VarPolyMatrix::from_blocks(&[
        vec![&d00, &d01, &d02],
        vec![&d10, &d11, &d12],
        vec![&d20, &d21, &d22],
    ]);
    let derivative = multiplier_positivity(
        &mut prob,
        &[d_mat.neg()],
        2 * n,
        theta,
        &interval,
        d,
        &[],
        &[],
    );

    // Kernel membership of the transport-corrected derivative kernel: the
    // physical kernel is (1/tau) [ (d1 + d2) Rhat ] - Ahat' Qhat - ...,
    // so the normalized membership target carries tau on the transport.
    let q_om = q.map(|x| x.rename(theta, omega));
    let transport = q_om
        .left_mul(&a_theta.transpose())
        .add(&q.transpose().right_mul(&a_omega))
        .mul_poly(&tau_poly);
    let m_kernel = r_kernel
        .map(|x| x.differentiate(theta).add(&x.differentiate(omega)))
        .sub(&transport);
    let fresh = kernel_variable(&mut prob, n, theta, omega, kb.max(1)).kernel;
    assert_kernel_eq(&mut prob, &m_kernel, &fresh, theta, omega);

    let inv_tau = Rat::one() / tau.clone();
    let artifacts = LinearArtifacts {
        n,
        theta,
        omega,
        breaks,
        tau_poly,
        params: Vec::new(),
        p,
        q_pieces: vec![q],
        s_pieces: vec![s],
        r_pieces: vec![vec![r_kernel.clone()]],
        d_pieces: vec![d_mat],
        l_pieces: vec![vec![m_kernel.scale(&inv_tau)]],
        margin,
        positivity,
        derivative,
    };
    Ok(BuiltProblem {
        problem: prob,
        margin,
        margin_cap: 1e-3 * scale,
        scale,
        artifacts: Artifacts::Linear(artifacts),
    })
}

/// Converts a normalized-coordinate polynomial matrix to the physical
/// coordinate: `f(theta) = fhat(theta / tau)` (and likewise in omega).
fn to_physical(m: &PolyMatrix, theta: Symbol, omega: Symbol, tau: &Rat) -> PolyMatrix {
    let inv = Rat::one() / tau.clone();
    m.map(|p| {
        p.affine_substitute(theta, &inv, &Rat::zero())
            .affine_substitute(omega, &inv, &Rat::zero())
    })
}

/// The margin-free derivative matrix pieces (margin variable set to zero)
/// instantiated at an assignment and converted to physical coordinates:
/// used by the derivative-identity oracle.
pub fn instantiate_derivative(
    art: &LinearArtifacts,
    value_of: &dyn Fn(VarId) -> f64,
) -> (Vec<PolyMatrix>, Vec<Vec<PolyMatrix>>) {
    let tau_k = art.breaks.last().expect("fixed delays for the oracle").clone();
    let masked = |v: VarId| if v == art.margin { 0.0 } else { value_of(v) };
    let d: Vec<PolyMatrix> = art
        .d_pieces
        .iter()
        .map(|m| to_physical(&m.instantiate(&masked), art.theta, art.omega, &tau_k))
        .collect();
    let l: Vec<Vec<PolyMatrix>> = art
        .l_pieces
        .iter()
        .map(|row| {
            row.iter()
                .map(|m| to_physical(&m.instantiate(&masked), art.theta, art.omega, &tau_k))
                .collect()
        })
        .collect();
    (d, l)
}

/// Instantiates the functional data (P, Q, S, R pieces) at an assignment,
/// converted to physical coordinates.
pub struct InstantiatedFunctional {
    pub p: PolyMatrix,
    pub q_pieces: Vec<PolyMatrix>,
    pub s_pieces: Vec<PolyMatrix>,
    pub r_pieces: Vec<Vec<PolyMatrix>>,
}

pub fn instantiate_functional(
    art: &LinearArtifacts,
    value_of: &dyn Fn(VarId) -> f64,
) -> InstantiatedFunctional {
    let tau_k = art.breaks.last().expect("fixed delays").clone();
    let phys = |m: &VarPolyMatrix| to_physical(&m.instantiate(value_of), art.theta, art.omega, &tau_k);
    InstantiatedFunctional {
        p: art.p.instantiate(value_of),
        q_pieces: art.q_pieces.iter().map(&phys).collect(),
        s_pieces: art.s_pieces.iter().map(&phys).collect(),
        r_pieces: art
            .r_pieces
            .iter()
            .map(|row| row.iter().map(&phys).collect())
            .collect(),
    }
}
