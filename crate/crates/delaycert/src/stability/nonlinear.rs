//! Certification SDPs for nonlinear time-delay systems.
//!
//! The functional generalizes the complete quadratic form to polynomial
//! integrands:
//!
//! ```text
//! V(x_t) = sum_i int_{I_i} g_i(x(t), x(t+theta), theta) dtheta
//!        + sum_ij int int h_ij(x(t+theta), x(t+omega), theta, omega)
//! ```
//!
//! with `h` carried by a positive finite-rank kernel over a state
//! monomial basis. Positivity and the negated Lie derivative become
//! sum-of-squares memberships with zero-integral spacing terms; a single
//! margin `alpha` is maximized against configurable even powers of
//! `||x(t)||` (systems with degenerate linearization need higher powers
//! than the quadratic default).
//!
//! The delay-independent route uses the simpler functional
//! `p_0(x(t)) + sum_i int_{-tau_i}^0 p_i(x(t+theta))`, whose derivative is
//! delay-free.

use super::{
    declare_margin, omega_symbol, theta_symbol, Artifacts, BuildError, BuildOptions, BuiltProblem,
    SystemSpec,
};
use crate::cones::{assert_kernel_eq, kernel_variable, piecewise_kernel, spacing_function};
use crate::poly::{Monomial, MonomialBasis, Poly, Rat};
use crate::sdp::{SdpProblem, VarId};
use crate::sos::{self, declare_poly, VarPoly, VarPolyMatrix};
use crate::symbol::{symbol_family, Symbol};
use num_traits::Zero;

pub struct NonlinearArtifacts {
    pub n: usize,
    pub theta: Symbol,
    pub omega: Symbol,
    pub breaks: Vec<Rat>,
    /// Slot families: current state, per-delay boundary states, running
    /// integration states.
    pub x0: Vec<Symbol>,
    pub xd: Vec<Vec<Symbol>>,
    pub xq: Vec<Symbol>,
    pub xo: Vec<Symbol>,
    pub g_pieces: Vec<VarPoly>,
    /// `h_ij` evaluated on (xq, xo) slots, local coordinates.
    pub h_pieces_eval: Vec<Vec<VarPoly>>,
    /// Per-piece derivative integrand over (x0, xd.., xq, theta).
    pub ghat_pieces: Vec<VarPoly>,
    /// `(d/dtheta + d/domega) h_ij` on (xq, xo) slots.
    pub hhat_pieces: Vec<Vec<VarPoly>>,
    pub margin: VarId,
}

/// Kernel trace `h(a, b, u, v) = Z(a)' R(u, v) Z(b)` with optional
/// argument substitutions (`None` keeps the variable).
#[allow(clippy::too_many_arguments)]
fn kernel_trace(
    r: &VarPolyMatrix,
    basis: &[Monomial],
    zk: &[Symbol],
    a: &[Symbol],
    b: &[Symbol],
    theta: Symbol,
    omega: Symbol,
    u: Option<&Poly>,
    v: Option<&Poly>,
) -> VarPoly {
    let rename_mono = |m: &Monomial, to: &[Symbol]| -> Monomial {
        Monomial::from_powers(
            m.powers()
                .iter()
                .map(|(s, p)| {
                    let ix = zk.iter().position(|z| z == s).expect("basis symbol");
                    (to[ix], *p)
                })
                .collect::<Vec<_>>(),
        )
    };
    let mut out = VarPoly::zero();
    for (ai, am) in basis.iter().enumerate() {
        let ma = rename_mono(am, a);
        for (bi, bm) in basis.iter().enumerate() {
            let mb = rename_mono(bm, b);
            let mut entry = r.entry(ai, bi).clone();
            if let Some(up) = u {
                entry = entry.substitute(theta, up);
            }
            if let Some(vp) = v {
                entry = entry.substitute(omega, vp);
            }
            let mono = ma.mul(&mb);
            out = out.add(&entry.mul_poly(&Poly::from_term(mono, Rat::one())));
        }
    }
    out
}

use num_traits::One;

/// `(sum_i x_i^2)^power`.
fn norm_power(x: &[Symbol], power: usize) -> Poly {
    let mut sq = Poly::zero();
    for s in x {
        sq = sq.add(&Poly::var(*s).pow(2));
    }
    sq.pow(power as u32)
}

/// Builds the delay-dependent nonlinear problem (single delay is the
/// one-piece case).
pub fn build_nonlinear(spec: &SystemSpec, opts: &BuildOptions) -> Result<BuiltProblem, BuildError> {
    let SystemSpec::NonlinearDelay { n, f, current, delayed } = spec else {
        unreachable!("dispatch guarantees the variant");
    };
    let n = *n;
    let k = delayed.len();
    let d_s = opts.degree;
    let d_theta = opts.degree_theta.unwrap_or(d_s);
    let theta = theta_symbol();
    let omega = omega_symbol();
    let scale = spec.scale();

    let delays: Vec<Rat> = delayed.iter().map(|(t, _)| t.clone()).collect();
    let tau_k = delays[k - 1].clone();
    let tau_poly = Poly::constant(tau_k.clone());
    let mut breaks = vec![Rat::zero()];
    breaks.extend(delays.iter().cloned());

    // Slot families.
    let x0 = symbol_family("xs0_", n);
    let xd: Vec<Vec<Symbol>> = (1..=k).map(|i| symbol_family(&format!("xsd{i}_"), n)).collect();
    let xq = symbol_family("xsq_", n);
    let xo = symbol_family("xso_", n);
    let zk = symbol_family("xsz_", n);

    // The dynamics over (x0, xd..) slots.
    let f_slots: Vec<Poly> = f
        .iter()
        .map(|p| {
            let mut q = p.clone();
            for (i, s) in current.iter().enumerate() {
                q = q.rename(*s, x0[i]);
            }
            for (ki, (_, syms)) in delayed.iter().enumerate() {
                for (i, s) in syms.iter().enumerate() {
                    q = q.rename(*s, xd[ki][i]);
                }
            }
            q
        })
        .collect();

    let mut prob = SdpProblem::new();
    let margin = declare_margin(&mut prob, scale);

    // Kernel for h over the state basis (degree >= 1 so V(0) = 0).
    let dh = d_s.div_ceil(2);
    let state_basis = MonomialBasis::total_degree(&zk, dh)
        .filter(|m| m.degree() >= 1)
        .monomials;
    let ktheta = d_theta.div_ceil(2);
    let pk = piecewise_kernel(&mut prob, state_basis.len(), theta, omega, ktheta, &delays);

    // g pieces: state monomials of degree 1..d_s over (x0, xq), theta
    // degree up to d_theta.
    let mut gx_vars = x0.clone();
    gx_vars.extend(&xq);
    let g_support: Vec<Monomial> =
        MonomialBasis::capped_groups(&[(gx_vars.clone(), d_s), (vec![theta], d_theta)])
            .filter(|m| m.degree_in_set(&gx_vars) >= 1)
            .monomials;
    let g_pieces: Vec<VarPoly> = (0..k).map(|_| declare_poly(&mut prob, &g_support)).collect();

    let intervals: Vec<(Poly, Poly)> = (0..k)
        .map(|i| {
            (
                Poly::constant(-breaks[i + 1].clone()),
                Poly::constant(-breaks[i].clone()),
            )
        })
        .collect();

    // Positivity memberships: g_i - t_i - alpha m_pos in SOS on the piece.
    let m_pos = norm_power(&x0, opts.margin_pos_power);
    let t_pos = spacing_function(
        &mut prob,
        1,
        theta,
        &intervals,
        d_theta,
        &[(x0.clone(), d_s)],
    );
    for (i, g) in g_pieces.iter().enumerate() {
        let target = g
            .sub(t_pos.pieces[i].entry(0, 0))
            .sub(&VarPoly::var_term(margin, Monomial::one()).mul_poly(&m_pos));
        let mut tm = VarPolyMatrix::zeros(1, 1);
        *tm.entry_mut(0, 0) = target;
        let region = if d_theta >= 1 {
            vec![crate::cones::interval_polynomial_bounds(
                theta,
                &intervals[i].0,
                &intervals[i].1,
            )]
        } else {
            vec![]
        };
        let mut groups = vec![gx_vars.clone()];
        if d_theta >= 1 {
            groups.push(vec![theta]);
        }
        sos::psd_on_region(&mut prob, &tm, &groups, &region);
    }

    // Slot vectors Y_0 = x0, Y_j = xd_j.
    let slot = |j: usize| -> &[Symbol] {
        if j == 0 {
            &x0
        } else {
            &xd[j - 1]
        }
    };

    // Derivative integrand per piece.
    let mut ghat_pieces: Vec<VarPoly> = Vec::with_capacity(k);
    for r in 0..k {
        let delta = breaks[r + 1].clone() - breaks[r].clone();
        let boundary_scale = tau_k.clone() / delta;
        let upper = Poly::constant(-breaks[r].clone());
        let lower = Poly::constant(-breaks[r + 1].clone());

        // g_r(x0, Y_r, -tau_r) - g_r(x0, Y_{r+1}, -tau_{r+1}), slots
        // renamed from (x0, xq, theta).
        let g_at = |target: &[Symbol], at: &Poly| -> VarPoly {
            let mut g = g_pieces[r].substitute(theta, at);
            for (i, s) in xq.iter().enumerate() {
                g = g.rename(*s, target[i]);
            }
            g
        };
        let mut ghat = g_at(slot(r), &upper)
            .sub(&g_at(slot(r + 1), &lower))
            .scale(&boundary_scale);

        // Transport: tau_K (grad_{x0} g_r . f - dg_r/dtheta).
        let mut transport = VarPoly::zero();
        for i in 0..n {
            transport = transport.add(&g_pieces[r].differentiate(x0[i]).mul_poly(&f_slots[i]));
        }
        transport = transport.sub(&g_pieces[r].differentiate(theta));
        ghat = ghat.add(&transport.mul_poly(&tau_poly));

        // Kernel boundary traces.
        let mut htr = VarPoly::zero();
        for p in 0..k {
            let up_p = Poly::constant(-breaks[p].clone());
            let lo_p = Poly::constant(-breaks[p + 1].clone());
            // h_{pr}(Y_p, xq, -tau_p, theta) - h_{pr}(Y_{p+1}, xq, -tau_{p+1}, theta)
            htr = htr.add(&kernel_trace(
                &pk.pieces[p][r],
                &state_basis,
                &zk,
                slot(p),
                &xq,
                theta,
                omega,
                Some(&up_p),
                None,
            ).rename(omega, theta));
            htr = htr.sub(&kernel_trace(
                &pk.pieces[p][r],
                &state_basis,
                &zk,
                slot(p + 1),
                &xq,
                theta,
                omega,
                Some(&lo_p),
                None,
            ).rename(omega, theta));
            // h_{rq}(xq, Y_q, theta, -tau_q) - h_{rq}(xq, Y_{q+1}, theta, -tau_{q+1})
            htr = htr.add(&kernel_trace(
                &pk.pieces[r][p],
                &state_basis,
                &zk,
                &xq,
                slot(p),
                theta,
                omega,
                None,
                Some(&up_p),
            ));
            htr = htr.sub(&kernel_trace(
                &pk.pieces[r][p],
                &state_basis,
                &zk,
                &xq,
                slot(p + 1),
                theta,
                omega,
                None,
                Some(&lo_p),
            ));
        }
        ghat = ghat.add(&htr.mul_poly(&tau_poly));
        ghat_pieces.push(ghat);
    }

    // Decrease memberships: -ghat_r - t_r - alpha m_dec in SOS per piece.
    let mut all_states = x0.clone();
    for fam in &xd {
        all_states.extend(fam);
    }
    let mut dec_states = all_states.clone();
    dec_states.extend(&xq);
    let m_dec = norm_power(&x0, opts.margin_dec_power);
    let t_state_cap = ghat_pieces
        .iter()
        .map(|g| g.degree_in_set(&all_states))
        .max()
        .unwrap_or(0) as usize;
    let t_theta_cap = ghat_pieces
        .iter()
        .map(|g| g.degree_in_set(&[theta]))
        .max()
        .unwrap_or(0) as usize;
    let t_dec = spacing_function(
        &mut prob,
        1,
        theta,
        &intervals,
        t_theta_cap,
        &[(all_states.clone(), t_state_cap)],
    );
    for r in 0..k {
        let target = ghat_pieces[r]
            .neg()
            .sub(t_dec.pieces[r].entry(0, 0))
            .sub(&VarPoly::var_term(margin, Monomial::one()).mul_poly(&m_dec));
        let mut tm = VarPolyMatrix::zeros(1, 1);
        *tm.entry_mut(0, 0) = target;
        let theta_deg = tm.entry(0, 0).degree_in_set(&[theta]);
        let region = if theta_deg >= 1 {
            vec![crate::cones::interval_polynomial_bounds(
                theta,
                &intervals[r].0,
                &intervals[r].1,
            )]
        } else {
            vec![]
        };
        let mut groups = vec![dec_states.clone()];
        if theta_deg >= 1 {
            groups.push(vec![theta]);
        }
        sos::psd_on_region(&mut prob, &tm, &groups, &region);
    }

    // hhat membership: the master pullback of (d/du + d/dv) must itself be
    // a positive kernel.
    let m = state_basis.len();
    let master_target = VarPolyMatrix::from_fn(m * k, m * k, |ii, jj| {
        let (pi, pj) = (ii / m, jj / m);
        let e = pk.master.entry(ii, jj);
        e.differentiate(theta)
            .scale(&pk.maps[pi].0)
            .add(&e.differentiate(omega).scale(&pk.maps[pj].0))
    });
    let fresh = kernel_variable(&mut prob, m * k, theta, omega, ktheta).kernel;
    assert_kernel_eq(&mut prob, &master_target, &fresh, theta, omega);

    // Artifacts for extraction and the derivative oracle.
    let h_pieces_eval: Vec<Vec<VarPoly>> = (0..k)
        .map(|p| {
            (0..k)
                .map(|q| {
                    kernel_trace(
                        &pk.pieces[p][q],
                        &state_basis,
                        &zk,
                        &xq,
                        &xo,
                        theta,
                        omega,
                        None,
                        None,
                    )
                })
                .collect()
        })
        .collect();
    let hhat_pieces: Vec<Vec<VarPoly>> = h_pieces_eval
        .iter()
        .map(|row| {
            row.iter()
                .map(|h| h.differentiate(theta).add(&h.differentiate(omega)))
                .collect()
        })
        .collect();

    let artifacts = NonlinearArtifacts {
        n,
        theta,
        omega,
        breaks,
        x0,
        xd,
        xq,
        xo,
        g_pieces,
        h_pieces_eval,
        ghat_pieces,
        hhat_pieces,
        margin,
    };
    Ok(BuiltProblem {
        problem: prob,
        margin,
        margin_cap: 1e-3 * scale,
        scale,
        artifacts: Artifacts::Nonlinear(artifacts),
    })
}

pub struct DelayIndependentArtifacts {
    pub n: usize,
    pub x0: Vec<Symbol>,
    pub xd: Vec<Vec<Symbol>>,
    pub slot: Vec<Symbol>,
    pub p0: VarPoly,
    pub terms: Vec<(Rat, VarPoly)>,
    /// The negated derivative target (before spacing/margin subtraction).
    pub vdot_neg: VarPoly,
    pub margin: VarId,
}

/// Builds the delay-independent problem: `p_0(x_0) - alpha m` SOS, each
/// `p_i` SOS, and the delay-free negated derivative SOS, all restricted to
/// the state box when one is given.
pub fn build_delay_independent(
    spec: &SystemSpec,
    opts: &BuildOptions,
) -> Result<BuiltProblem, BuildError> {
    let SystemSpec::DelayIndependent { n, f, current, delayed, state_box } = spec else {
        unreachable!("dispatch guarantees the variant");
    };
    let n = *n;
    let k = delayed.len();
    let d = opts.degree;
    let scale = spec.scale();

    let x0 = symbol_family("xs0_", n);
    let xd: Vec<Vec<Symbol>> = (1..=k).map(|i| symbol_family(&format!("xsd{i}_"), n)).collect();
    let slot = symbol_family("xsp_", n);

    let f_slots: Vec<Poly> = f
        .iter()
        .map(|p| {
            let mut q = p.clone();
            for (i, s) in current.iter().enumerate() {
                q = q.rename(*s, x0[i]);
            }
            for (ki, syms) in delayed.iter().enumerate() {
                for (i, s) in syms.iter().enumerate() {
                    q = q.rename(*s, xd[ki][i]);
                }
            }
            q
        })
        .collect();

    let mut prob = SdpProblem::new();
    let margin = declare_margin(&mut prob, scale);

    let box_polys = |syms: &[Symbol]| -> Vec<Poly> {
        match state_box {
            None => vec![],
            Some((lo, hi)) => syms
                .iter()
                .map(|s| {
                    let p = Poly::var(*s);
                    p.sub(&Poly::constant(lo.clone()))
                        .mul(&Poly::constant(hi.clone()).sub(&p))
                })
                .collect(),
        }
    };

    let support = |syms: &[Symbol]| -> Vec<Monomial> {
        MonomialBasis::total_degree(syms, d)
            .filter(|m| m.degree() >= 1)
            .monomials
    };

    let p0 = declare_poly(&mut prob, &support(&x0));
    let terms: Vec<(Rat, VarPoly)> = (0..k)
        .map(|_| {
            (
                Rat::one(), // delay value is irrelevant to the conditions
                declare_poly(&mut prob, &support(&slot)),
            )
        })
        .collect();

    let one_by_one = |p: VarPoly| {
        let mut m = VarPolyMatrix::zeros(1, 1);
        *m.entry_mut(0, 0) = p;
        m
    };

    // p0 - alpha m_pos >= 0 on the region.
    let m_pos = norm_power(&x0, opts.margin_pos_power);
    let target = p0
        .sub(&VarPoly::var_term(margin, Monomial::one()).mul_poly(&m_pos));
    sos::psd_on_region(
        &mut prob,
        &one_by_one(target),
        &[x0.clone()],
        &box_polys(&x0),
    );
    // Each p_i >= 0 on the region.
    for (_, p) in &terms {
        sos::psd_on_region(
            &mut prob,
            &one_by_one(p.clone()),
            &[slot.clone()],
            &box_polys(&slot),
        );
    }

    // Negated derivative: -grad p0 . f - sum_i (p_i(x0) - p_i(x_i)).
    let mut vdot = VarPoly::zero();
    for i in 0..n {
        vdot = vdot.add(&p0.differentiate(x0[i]).mul_poly(&f_slots[i]));
    }
    for (ki, (_, p)) in terms.iter().enumerate() {
        let at_x0 = (0..n).fold(p.clone(), |acc, i| acc.rename(slot[i], x0[i]));
        let at_xi = (0..n).fold(p.clone(), |acc, i| acc.rename(slot[i], xd[ki][i]));
        vdot = vdot.add(&at_x0).sub(&at_xi);
    }
    let vdot_neg = vdot.neg();

    let mut all_states = x0.clone();
    for fam in &xd {
        all_states.extend(fam);
    }
    let m_dec = norm_power(&x0, opts.margin_dec_power);
    let target = vdot_neg
        .sub(&VarPoly::var_term(margin, Monomial::one()).mul_poly(&m_dec));
    sos::psd_on_region(
        &mut prob,
        &one_by_one(target),
        &[all_states.clone()],
        &box_polys(&all_states),
    );

    let artifacts = DelayIndependentArtifacts {
        n,
        x0,
        xd,
        slot,
        p0,
        terms,
        vdot_neg,
        margin,
    };
    Ok(BuiltProblem {
        problem: prob,
        margin,
        margin_cap: 1e-3 * scale,
        scale,
        artifacts: Artifacts::DelayIndependent(artifacts),
    })
}
