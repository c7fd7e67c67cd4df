//! Independent re-verification of solved certificates, and the
//! finite-difference oracle that pins the derivative assembly.
//!
//! Verification samples random polynomial initial histories and checks,
//! with the simulation oracle, that (a) the functional dominates its
//! claimed positivity margin at the history (by exact symbolic
//! quadrature) and (b) along the simulated solution the functional is
//! non-increasing with at least half the claimed decrease margin. A
//! simulation blow-up from a certified spec would mean a false
//! certificate and is reported separately.

use super::certificate::Certificate;
use super::linear::{instantiate_derivative, LinearArtifacts};
use super::nonlinear::NonlinearArtifacts;
use super::{Artifacts, BuildOptions, SystemSpec};
use crate::poly::{rat_to_f64, Poly, PolyMatrix};
use crate::quadrature::GaussLegendre;
use crate::sdp::VarId;
use crate::simulate::{functional_value, integrate, SimSystem, Trajectory};
use crate::symbol::Symbol;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Outcome of sampling-based certificate verification.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub trials: usize,
    /// Histories where `V(phi) < (pos_margin/2) ||phi(0)||^(2p)`.
    pub positivity_violations: usize,
    /// Smallest ratio of `V(phi)` to its required lower bound.
    pub worst_positivity_ratio: f64,
    /// Trajectories along which the decrease check failed.
    pub decrease_violations: usize,
    /// Largest violation of the decrease requirement (negative is good).
    pub worst_decrease_gap: f64,
    /// Simulations that escaped to infinity (must never happen under a
    /// valid certificate).
    pub blowups: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.positivity_violations == 0 && self.decrease_violations == 0 && self.blowups == 0
    }
}

/// Converts a spec into simulation form.
pub fn sim_system(spec: &SystemSpec) -> SimSystem {
    match spec {
        SystemSpec::LinearSingle { n: _, a, b, tau, .. } => {
            let tau = match tau {
                super::DelayValue::Fixed(t) => rat_to_f64(t),
                super::DelayValue::Param(_) => {
                    panic!("simulation needs a fixed delay; substitute the parameter first")
                }
            };
            SimSystem::linear(
                numeric_matrix(a),
                vec![(tau, numeric_matrix(b))],
            )
        }
        SystemSpec::LinearMultiple { a0, delayed, .. } => SimSystem::linear(
            numeric_matrix(a0),
            delayed
                .iter()
                .map(|(t, m)| (rat_to_f64(t), numeric_matrix(m)))
                .collect(),
        ),
        SystemSpec::LinearDistributed { a0, kernel, theta, tau, .. } => {
            SimSystem::distributed(numeric_matrix(a0), kernel.clone(), *theta, rat_to_f64(tau))
        }
        SystemSpec::NonlinearDelay { f, current, delayed, .. } => SimSystem::polynomial(
            f.clone(),
            current.clone(),
            delayed
                .iter()
                .map(|(t, s)| (rat_to_f64(t), s.clone()))
                .collect(),
        ),
        SystemSpec::DelayIndependent { f, current, delayed, .. } => SimSystem::polynomial(
            f.clone(),
            current.clone(),
            // Delay-independent certificates hold for any delays; verify
            // at tau_i = i.
            delayed
                .iter()
                .enumerate()
                .map(|(i, s)| ((i + 1) as f64, s.clone()))
                .collect(),
        ),
        SystemSpec::Ode { f, state, .. } => {
            SimSystem::polynomial(f.clone(), state.clone(), Vec::new())
        }
    }
}

fn numeric_matrix(m: &PolyMatrix) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(m.rows, m.cols, |i, j| {
        m.entry(i, j).constant_term_f64()
    })
}

trait ConstF64 {
    fn constant_term_f64(&self) -> f64;
}
impl ConstF64 for Poly {
    fn constant_term_f64(&self) -> f64 {
        rat_to_f64(&self.constant_term())
    }
}

/// Random polynomial history of degree 3 per component, scaled to
/// `amplitude` and kept inside `state_box` when one applies.
fn random_history(
    rng: &mut ChaCha8Rng,
    n: usize,
    hist_var: Symbol,
    tau: f64,
    amplitude: f64,
    state_box: Option<(f64, f64)>,
) -> Vec<Poly> {
    (0..n)
        .map(|_| {
            match state_box {
                None => {
                    let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-amplitude..amplitude)).collect();
                    poly_from_coeffs(hist_var, &c)
                }
                Some((lo, hi)) => {
                    // Center strictly inside, slope small enough to stay in.
                    let mid = rng.gen_range(lo + 0.05 * (hi - lo)..hi - 0.05 * (hi - lo));
                    let room = (mid - lo).min(hi - mid);
                    let mut c = vec![mid];
                    let mut budget = 0.9 * room;
                    for k in 1..4 {
                        let cap = budget / (3.0 * tau.powi(k)).max(1e-9);
                        let v = rng.gen_range(-cap..cap);
                        budget -= v.abs() * tau.powi(k);
                        c.push(v);
                    }
                    poly_from_coeffs(hist_var, &c)
                }
            }
        })
        .collect()
}

fn poly_from_coeffs(v: Symbol, c: &[f64]) -> Poly {
    let mut p = Poly::zero();
    for (k, ck) in c.iter().enumerate() {
        p = p.add(&Poly::var(v).pow(k as u32).scale(&crate::poly::rat_from_f64(*ck)));
    }
    p
}

/// Verifies a certificate against its spec with `trials` random
/// histories.
pub fn verify_certificate(
    cert: &Certificate,
    spec: &SystemSpec,
    trials: usize,
    seed: u64,
) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hist_var = Symbol::new("hist_s");
    let system = sim_system(spec);
    let tau = system.max_delay.max(1e-6);
    let n = spec.dim();
    let state_box = match spec {
        SystemSpec::DelayIndependent { state_box, .. } => state_box
            .as_ref()
            .map(|(lo, hi)| (rat_to_f64(lo), rat_to_f64(hi))),
        _ => None,
    };
    let functional = cert.to_functional();
    let order = 2 * cert.degree + 6;

    let mut report = VerifyReport {
        trials,
        positivity_violations: 0,
        worst_positivity_ratio: f64::INFINITY,
        decrease_violations: 0,
        worst_decrease_gap: f64::NEG_INFINITY,
        blowups: 0,
    };

    for _ in 0..trials {
        let hist = random_history(&mut rng, n, hist_var, tau, 1.0, state_box);
        // (a) positivity at the history, by exact quadrature.
        let v_exact = rat_to_f64(&cert.exact_value(&hist, hist_var));
        let phi0_sq: f64 = hist
            .iter()
            .map(|h| {
                let x = h.constant_term_f64();
                x * x
            })
            .sum();
        let required = 0.5 * cert.pos_margin * phi0_sq.powi(cert.pos_power as i32);
        if phi0_sq > 1e-12 {
            let ratio = v_exact / required.max(1e-300);
            report.worst_positivity_ratio = report.worst_positivity_ratio.min(ratio);
            if v_exact + 1e-12 < required {
                report.positivity_violations += 1;
            }
        }

        // (b) decrease along the simulated solution.
        let h = tau / 50.0;
        let t_end = 20.0 * tau;
        let traj = integrate(&system, &hist, hist_var, t_end, h);
        if traj.escape.is_some() {
            report.blowups += 1;
            continue;
        }
        let stride = 5;
        let dt = traj.h * stride as f64;
        let mut t = tau;
        let t_last = traj.t_end() - dt;
        let mut prev = functional_value(&functional, &traj.history_at(t), order);
        let v_scale = prev.abs().max(1.0);
        let mut worst = f64::NEG_INFINITY;
        while t + dt <= t_last {
            let next = functional_value(&functional, &traj.history_at(t + dt), order);
            let xt = traj.value(t);
            let margin_here =
                0.5 * cert.dec_margin * xt.norm_squared().powi(cert.dec_power as i32);
            let diff = (next - prev) / dt;
            // Forward differencing of a C^1 functional along RK4 output:
            // allow a discretization slack proportional to dt and to the
            // functional's scale.
            let tol = 1e-7 * v_scale + 2.0 * dt * dt * v_scale + 1e-9;
            worst = worst.max(diff + margin_here - tol);
            prev = next;
            t += dt;
        }
        report.worst_decrease_gap = report.worst_decrease_gap.max(worst);
        if worst > 0.0 {
            report.decrease_violations += 1;
        }
    }
    report
}

/// Deterministic pseudo-random assignment for SDP variables, used to
/// instantiate unsolved functional data in the derivative oracle.
pub fn hashed_assignment(seed: u64) -> impl Fn(VarId) -> f64 {
    move |v: VarId| {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        seed.hash(&mut h);
        match v {
            VarId::Free(i) => {
                0u8.hash(&mut h);
                i.hash(&mut h);
            }
            VarId::Entry { block, row, col } => {
                1u8.hash(&mut h);
                block.hash(&mut h);
                row.hash(&mut h);
                col.hash(&mut h);
            }
        }
        let x = h.finish();
        // Map to [-1, 1].
        (x as f64 / u64::MAX as f64) * 2.0 - 1.0
    }
}

/// Finite-difference probe of the derivative assembly: for a random
/// assignment of the functional data and a simulated trajectory of the
/// system, compares the assembled derivative quadratic form at `x_t`
/// against the centered difference of `V(x_t)` and returns the errors for
/// a sequence of halved step widths (expected ratio 4, i.e. O(h^2)).
pub fn derivative_identity_errors(
    spec: &SystemSpec,
    opts: &BuildOptions,
    seed: u64,
) -> Vec<(f64, f64)> {
    let built = super::build(spec, opts).expect("build for oracle");
    let assign = hashed_assignment(seed);
    let system = sim_system(spec);
    let tau = system.max_delay;
    let hist_var = Symbol::new("hist_s");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b9);
    let hist = random_history(&mut rng, spec.dim(), hist_var, tau, 0.6, None);

    let h_grid = tau / 400.0;
    let t0 = 5.0 * tau;
    let traj = integrate(&system, &hist, hist_var, t0 + 2.0 * tau, h_grid);
    assert!(traj.escape.is_none(), "oracle trajectory must stay bounded");

    match &built.artifacts {
        Artifacts::Linear(art) => {
            let cert_like = linear_value_data(art, &assign);
            let (d_pieces, l_pieces) = instantiate_derivative(art, &assign);
            let order = 2 * opts.degree + 8;
            let breaks: Vec<f64> = art.breaks.iter().map(rat_to_f64).collect();
            let v_of = |t: f64| functional_value(&cert_like, &traj.history_at(t), order);
            let dform = |t: f64| {
                linear_derivative_form(
                    art, &d_pieces, &l_pieces, &breaks, &traj, t, order,
                )
            };
            fd_errors(&v_of, &dform, t0, traj.h)
        }
        Artifacts::Nonlinear(art) => {
            let cert_like = nonlinear_value_data(art, &assign);
            let order = 2 * opts.degree + 8;
            let breaks: Vec<f64> = art.breaks.iter().map(rat_to_f64).collect();
            let v_of = |t: f64| functional_value(&cert_like, &traj.history_at(t), order);
            let ghat: Vec<Poly> = art.ghat_pieces.iter().map(|g| g.instantiate(&masked(art.margin, &assign))).collect();
            let hhat: Vec<Vec<Poly>> = art
                .hhat_pieces
                .iter()
                .map(|row| row.iter().map(|h| h.instantiate(&masked(art.margin, &assign))).collect())
                .collect();
            let dform = |t: f64| {
                nonlinear_derivative_form(art, &ghat, &hhat, &breaks, &traj, t, order)
            };
            fd_errors(&v_of, &dform, t0, traj.h)
        }
        _ => panic!("derivative oracle applies to delay-dependent builders"),
    }
}

fn masked<'a>(margin: VarId, assign: &'a dyn Fn(VarId) -> f64) -> impl Fn(VarId) -> f64 + 'a {
    move |v| if v == margin { 0.0 } else { assign(v) }
}

fn linear_value_data(art: &LinearArtifacts, assign: &dyn Fn(VarId) -> f64) -> crate::simulate::Functional {
    let f = super::linear::instantiate_functional(art, assign);
    let k = f.q_pieces.len();
    let breaks: Vec<f64> = art.breaks.iter().map(rat_to_f64).collect();
    crate::simulate::Functional::Quadratic {
        p: numeric_matrix(&f.p),
        pieces: (0..k)
            .map(|i| (-breaks[i + 1], -breaks[i], f.q_pieces[i].clone(), f.s_pieces[i].clone()))
            .collect(),
        kernels: f.r_pieces.clone(),
        theta: art.theta,
        omega: art.omega,
    }
}

fn nonlinear_value_data(
    art: &NonlinearArtifacts,
    assign: &dyn Fn(VarId) -> f64,
) -> crate::simulate::Functional {
    let breaks: Vec<f64> = art.breaks.iter().map(rat_to_f64).collect();
    let k = art.g_pieces.len();
    let ivs: Vec<(f64, f64)> = (0..k).map(|i| (-breaks[i + 1], -breaks[i])).collect();
    let masked_assign = masked(art.margin, assign);
    crate::simulate::Functional::PolyIntegral {
        g_pieces: (0..k)
            .map(|i| (ivs[i].0, ivs[i].1, art.g_pieces[i].instantiate(&masked_assign)))
            .collect(),
        h_pieces: (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .map(|(i, j)| {
                (
                    ivs[i].0,
                    ivs[i].1,
                    ivs[j].0,
                    ivs[j].1,
                    art.h_pieces_eval[i][j].instantiate(&masked_assign),
                )
            })
            .collect(),
        x0: art.x0.clone(),
        xtheta: art.xq.clone(),
        xomega: art.xo.clone(),
        theta: art.theta,
        omega: art.omega,
    }
}

/// Evaluates `(1/tau_K) sum_p int v' D_p v - sum_pq int int x' L_pq x`.
#[allow(clippy::too_many_arguments)]
fn linear_derivative_form(
    art: &LinearArtifacts,
    d_pieces: &[PolyMatrix],
    l_pieces: &[Vec<PolyMatrix>],
    breaks: &[f64],
    traj: &Trajectory,
    t: f64,
    order: usize,
) -> f64 {
    let gl = GaussLegendre::new(order.max(4));
    let n = art.n;
    let k = d_pieces.len();
    let tau_k = breaks[k];
    let hist = traj.history_at(t);
    // Boundary samples y_0..y_K.
    let ys: Vec<DVector<f64>> = (0..=k).map(|j| hist(-breaks[j])).collect();
    let mut total = 0.0;
    for p in 0..k {
        let (lo, hi) = (-breaks[p + 1], -breaks[p]);
        total += gl.integrate(lo, hi, |tv| {
            let mut v = DVector::zeros((k + 2) * n);
            for (j, y) in ys.iter().enumerate() {
                v.rows_mut(j * n, n).copy_from(y);
            }
            v.rows_mut((k + 1) * n, n).copy_from(&hist(tv));
            let mut pt = BTreeMap::new();
            pt.insert(art.theta, tv);
            let dm = d_pieces[p].eval_f64(&pt);
            (v.transpose() * dm * &v)[(0, 0)]
        }) / tau_k;
    }
    for p in 0..k {
        for q in 0..k {
            let (lo_i, hi_i) = (-breaks[p + 1], -breaks[p]);
            let (lo_j, hi_j) = (-breaks[q + 1], -breaks[q]);
            let half_i = 0.5 * (hi_i - lo_i);
            let mid_i = 0.5 * (hi_i + lo_i);
            let half_j = 0.5 * (hi_j - lo_j);
            let mid_j = 0.5 * (hi_j + lo_j);
            for (na, wa) in gl.nodes.iter().zip(&gl.weights) {
                let tv = mid_i + half_i * na;
                let xt = hist(tv);
                for (nb, wb) in gl.nodes.iter().zip(&gl.weights) {
                    let ov = mid_j + half_j * nb;
                    let xo = hist(ov);
                    let mut pt = BTreeMap::new();
                    pt.insert(art.theta, tv);
                    pt.insert(art.omega, ov);
                    let lm = l_pieces[p][q].eval_f64(&pt);
                    total -= wa * wb * half_i * half_j * (xt.transpose() * lm * &xo)[(0, 0)];
                }
            }
        }
    }
    total
}

/// Evaluates `(1/tau_K) sum_r int Ghat_r - sum_pq int int hhat_pq`.
fn nonlinear_derivative_form(
    art: &NonlinearArtifacts,
    ghat: &[Poly],
    hhat: &[Vec<Poly>],
    breaks: &[f64],
    traj: &Trajectory,
    t: f64,
    order: usize,
) -> f64 {
    let gl = GaussLegendre::new(order.max(4));
    let n = art.n;
    let k = ghat.len();
    let tau_k = breaks[k];
    let hist = traj.history_at(t);
    let ys: Vec<DVector<f64>> = (0..=k).map(|j| hist(-breaks[j])).collect();
    let mut total = 0.0;
    for r in 0..k {
        let (lo, hi) = (-breaks[r + 1], -breaks[r]);
        total += gl.integrate(lo, hi, |tv| {
            let xt = hist(tv);
            let mut pt = BTreeMap::new();
            pt.insert(art.theta, tv);
            for i in 0..n {
                pt.insert(art.x0[i], ys[0][i]);
                pt.insert(art.xq[i], xt[i]);
                for (j, fam) in art.xd.iter().enumerate() {
                    pt.insert(fam[i], ys[j + 1][i]);
                }
            }
            ghat[r].eval_f64(&pt)
        }) / tau_k;
    }
    for p in 0..k {
        for q in 0..k {
            let (lo_i, hi_i) = (-breaks[p + 1], -breaks[p]);
            let (lo_j, hi_j) = (-breaks[q + 1], -breaks[q]);
            let half_i = 0.5 * (hi_i - lo_i);
            let mid_i = 0.5 * (hi_i + lo_i);
            let half_j = 0.5 * (hi_j - lo_j);
            let mid_j = 0.5 * (hi_j + lo_j);
            for (na, wa) in gl.nodes.iter().zip(&gl.weights) {
                let tv = mid_i + half_i * na;
                let xt = hist(tv);
                for (nb, wb) in gl.nodes.iter().zip(&gl.weights) {
                    let ov = mid_j + half_j * nb;
                    let xo = hist(ov);
                    let mut pt = BTreeMap::new();
                    pt.insert(art.theta, tv);
                    pt.insert(art.omega, ov);
                    for i in 0..n {
                        pt.insert(art.xq[i], xt[i]);
                        pt.insert(art.xo[i], xo[i]);
                    }
                    total -= wa * wb * half_i * half_j * hhat[p][q].eval_f64(&pt);
                }
            }
        }
    }
    total
}

/// Centered finite differences of `v_of` against the assembled form at
/// three halved widths.
fn fd_errors(
    v_of: &dyn Fn(f64) -> f64,
    dform: &dyn Fn(f64) -> f64,
    t0: f64,
    h_grid: f64,
) -> Vec<(f64, f64)> {
    let target = dform(t0);
    let mut out = Vec::new();
    for steps in [64usize, 32, 16] {
        let h = steps as f64 * h_grid;
        let fd = (v_of(t0 + h) - v_of(t0 - h)) / (2.0 * h);
        out.push((h, (fd - target).abs()));
    }
    out.reverse(); // smallest h first
    out
}
