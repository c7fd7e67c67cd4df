//! Independent numerical oracle.
//!
//! Integrates delay-differential equations by the method of steps
//! (classical RK4 with cubic-Hermite dense output for the delayed
//! arguments) and evaluates Lyapunov-Krasovskii functionals along
//! trajectories by Gauss-Legendre quadrature. Certificates produced by the
//! SDP layer are re-verified against this module; it shares no code with
//! the constraint assembly.

use crate::poly::{Poly, PolyMatrix};
use crate::quadrature::GaussLegendre;
use crate::symbol::Symbol;
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// A time-invariant delay system in simulation form.
pub struct SimSystem {
    pub dim: usize,
    pub max_delay: f64,
    /// `rhs(x(t), history)` where `history(s)` returns `x(t + s)` for
    /// `s` in `[-max_delay, 0]`.
    #[allow(clippy::type_complexity)]
    pub rhs: Box<dyn Fn(&DVector<f64>, &dyn Fn(f64) -> DVector<f64>) -> DVector<f64> + Sync>,
}

impl SimSystem {
    /// Linear system `x' = A0 x + sum_i A_i x(t - tau_i)`.
    pub fn linear(a0: DMatrix<f64>, delayed: Vec<(f64, DMatrix<f64>)>) -> SimSystem {
        let dim = a0.nrows();
        let max_delay = delayed.iter().map(|(t, _)| *t).fold(0.0, f64::max);
        SimSystem {
            dim,
            max_delay,
            rhs: Box::new(move |x, hist| {
                let mut dx = &a0 * x;
                for (tau, ai) in &delayed {
                    dx += ai * hist(-tau);
                }
                dx
            }),
        }
    }

    /// Distributed system `x' = A0 x + int_{-tau}^0 A(theta) x(t+theta)`.
    pub fn distributed(a0: DMatrix<f64>, kernel: PolyMatrix, theta: Symbol, tau: f64) -> SimSystem {
        let dim = a0.nrows();
        let order = (kernel.max_degree() as usize + 12).max(16);
        let gl = GaussLegendre::new(order);
        SimSystem {
            dim,
            max_delay: tau,
            rhs: Box::new(move |x, hist| {
                let mut dx = &a0 * x;
                for (node, w) in gl.nodes.iter().zip(&gl.weights) {
                    let s = 0.5 * tau * (node - 1.0); // maps [-1,1] -> [-tau,0]
                    let mut pt = BTreeMap::new();
                    pt.insert(theta, s);
                    let a_s = kernel.eval_f64(&pt);
                    dx += (a_s * hist(s)) * (w * 0.5 * tau);
                }
                dx
            }),
        }
    }

    /// Polynomial system `x' = f(x(t), x(t - tau_1), ..., x(t - tau_K))`
    /// with named state symbols per slot.
    pub fn polynomial(
        f: Vec<Poly>,
        current: Vec<Symbol>,
        delayed: Vec<(f64, Vec<Symbol>)>,
    ) -> SimSystem {
        let dim = f.len();
        let max_delay = delayed.iter().map(|(t, _)| *t).fold(0.0, f64::max);
        SimSystem {
            dim,
            max_delay,
            rhs: Box::new(move |x, hist| {
                let mut pt = BTreeMap::new();
                for (i, s) in current.iter().enumerate() {
                    pt.insert(*s, x[i]);
                }
                for (tau, syms) in &delayed {
                    let xd = hist(-tau);
                    for (i, s) in syms.iter().enumerate() {
                        pt.insert(*s, xd[i]);
                    }
                }
                DVector::from_fn(dim, |i, _| f[i].eval_f64(&pt))
            }),
        }
    }
}

/// A computed trajectory on a uniform grid starting at `-max_delay`, with
/// stored derivatives for cubic-Hermite dense output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t0: f64,
    pub h: f64,
    pub states: Vec<DVector<f64>>,
    /// Right-sided derivatives at the grid points.
    pub derivs: Vec<DVector<f64>>,
    /// Grid index of t = 0, where the derivative jumps from the history
    /// slope to the right-hand side.
    pub zero_index: usize,
    /// Left-sided derivative at t = 0 (the history slope).
    pub deriv_zero_left: DVector<f64>,
    pub dim: usize,
    /// Time at which the solution escaped the blow-up bound, if it did.
    pub escape: Option<f64>,
    /// Endpoint difference against a double-step integration.
    pub step_doubling_error: f64,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        self.t0 + self.h * (self.states.len() - 1) as f64
    }

    /// Dense evaluation by piecewise cubic Hermite interpolation; exact at
    /// grid points, O(h^4) in between for smooth solutions. The segment
    /// ending at t = 0 uses the left-sided history slope.
    pub fn value(&self, t: f64) -> DVector<f64> {
        let last = self.states.len() - 1;
        let pos = (t - self.t0) / self.h;
        let k = (pos.floor() as isize).clamp(0, last as isize - 1) as usize;
        let u = (pos - k as f64).clamp(0.0, 1.0);
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        let m_right = if k + 1 == self.zero_index {
            &self.deriv_zero_left
        } else {
            &self.derivs[k + 1]
        };
        &self.states[k] * h00
            + &self.derivs[k] * (h10 * self.h)
            + &self.states[k + 1] * h01
            + m_right * (h11 * self.h)
    }

    /// History accessor centered at `t`: returns `s -> x(t + s)`.
    pub fn history_at(&self, t: f64) -> impl Fn(f64) -> DVector<f64> + '_ {
        move |s| self.value(t + s)
    }

    pub fn max_norm(&self) -> f64 {
        self.states.iter().map(|x| x.amax()).fold(0.0, f64::max)
    }
}

/// Integrates the system from a polynomial initial history on
/// `[-max_delay, 0]` to `t_end` with step `h`. Blow-ups are flagged with
/// the escape time, not an error.
pub fn integrate(
    system: &SimSystem,
    history: &[Poly],
    theta: Symbol,
    t_end: f64,
    h: f64,
) -> Trajectory {
    let base = integrate_once(system, history, theta, t_end, h);
    // Step-doubling error estimate on the endpoint.
    let coarse = integrate_once(system, history, theta, t_end, 2.0 * h);
    let err = match (base.escape, coarse.escape) {
        (None, None) => (base.states.last().unwrap() - coarse.states.last().unwrap()).amax(),
        _ => f64::NAN,
    };
    Trajectory {
        step_doubling_error: err,
        ..base
    }
}

fn integrate_once(
    system: &SimSystem,
    history: &[Poly],
    theta: Symbol,
    t_end: f64,
    h: f64,
) -> Trajectory {
    assert_eq!(history.len(), system.dim);
    let tau = system.max_delay;
    let t0 = -tau;
    let hist_steps = if tau > 0.0 { (tau / h).ceil() as usize } else { 0 };
    // Align the grid so t = 0 is a grid point.
    let h_eff = if hist_steps > 0 { tau / hist_steps as f64 } else { h };
    let n_steps = (t_end / h_eff).ceil() as usize;

    let eval_hist = |t: f64| {
        let mut pt = BTreeMap::new();
        pt.insert(theta, t);
        DVector::from_fn(system.dim, |i, _| history[i].eval_f64(&pt))
    };
    let dhistory: Vec<Poly> = history.iter().map(|p| p.differentiate(theta)).collect();
    let eval_dhist = |t: f64| {
        let mut pt = BTreeMap::new();
        pt.insert(theta, t);
        DVector::from_fn(system.dim, |i, _| dhistory[i].eval_f64(&pt))
    };

    let mut states: Vec<DVector<f64>> = Vec::with_capacity(hist_steps + n_steps + 1);
    let mut derivs: Vec<DVector<f64>> = Vec::with_capacity(hist_steps + n_steps + 1);
    for k in 0..=hist_steps {
        let t = t0 + k as f64 * h_eff;
        states.push(eval_hist(t.min(0.0)));
        derivs.push(eval_dhist(t.min(0.0)));
    }
    // The derivative jumps at t = 0: keep the one-sided history slope for
    // interpolation on the last history segment and store the dynamics
    // slope as the grid derivative for the forward segments.
    let deriv_zero_left = derivs[hist_steps].clone();
    let d0 = {
        let lookup = |s: f64| {
            if s <= t0 {
                eval_hist(s)
            } else {
                hermite_eval(&states, &derivs, hist_steps, &deriv_zero_left, t0, h_eff, s)
            }
        };
        (system.rhs)(&states[hist_steps], &lookup)
    };
    derivs[hist_steps] = d0;

    let blow_limit = 1e6 * (1.0 + states.iter().map(|x| x.amax()).fold(0.0, f64::max));
    let mut escape = None;

    for k in 0..n_steps {
        let t = k as f64 * h_eff;
        let (next, d, blew) = {
            // Dense lookup over everything computed so far plus the exact
            // polynomial history for t <= t0.
            let lookup = |s: f64| -> DVector<f64> {
                if s <= t0 {
                    return eval_hist(s);
                }
                hermite_eval(&states, &derivs, hist_steps, &deriv_zero_left, t0, h_eff, s)
            };
            let f = |state: &DVector<f64>, at: f64| -> DVector<f64> {
                (system.rhs)(state, &|s: f64| lookup(at + s))
            };
            let x = states[hist_steps + k].clone();
            let k1 = f(&x, t);
            let k2 = f(&(&x + &k1 * (h_eff / 2.0)), t + h_eff / 2.0);
            let k3 = f(&(&x + &k2 * (h_eff / 2.0)), t + h_eff / 2.0);
            let k4 = f(&(&x + &k3 * h_eff), t + h_eff);
            let next = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h_eff / 6.0);
            let blew = !next.iter().all(|v| v.is_finite()) || next.amax() > blow_limit;
            let d = if blew {
                DVector::zeros(system.dim)
            } else {
                f(&next, t + h_eff)
            };
            (next, d, blew)
        };
        states.push(next);
        derivs.push(d);
        if blew {
            escape = Some(t + h_eff);
            break;
        }
    }

    Trajectory {
        t0,
        h: h_eff,
        dim: system.dim,
        states,
        derivs,
        zero_index: hist_steps,
        deriv_zero_left,
        escape,
        step_doubling_error: f64::NAN,
    }
}

fn hermite_eval(
    states: &[DVector<f64>],
    derivs: &[DVector<f64>],
    zero_index: usize,
    deriv_zero_left: &DVector<f64>,
    t0: f64,
    h: f64,
    t: f64,
) -> DVector<f64> {
    let last = states.len() - 1;
    let pos = (t - t0) / h;
    let k = (pos.floor() as isize).clamp(0, last as isize - 1) as usize;
    let u = (pos - k as f64).clamp(0.0, 1.0);
    let (u2, u3) = (u * u, u * u * u);
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    let m_right = if k + 1 == zero_index {
        deriv_zero_left
    } else {
        &derivs[k + 1]
    };
    &states[k] * h00 + &derivs[k] * (h10 * h) + &states[k + 1] * h01 + m_right * (h11 * h)
}

/// A functional in evaluation form, paired with a history to produce
/// `V(x_t)` by quadrature.
pub enum Functional {
    /// Complete quadratic functional: `x(0)' P x(0) + 2 x(0)' sum_i int
    /// Q_i x + sum_i int x' S_i x + sum_ij int int x' R_ij x`, with one
    /// piece per delay interval (a single piece for the continuous case).
    Quadratic {
        p: DMatrix<f64>,
        /// Per piece: (lower, upper, Q_i, S_i).
        pieces: Vec<(f64, f64, PolyMatrix, PolyMatrix)>,
        /// Kernel blocks R_ij in local coordinates per piece pair.
        kernels: Vec<Vec<PolyMatrix>>,
        theta: Symbol,
        omega: Symbol,
    },
    /// `int g(x(t), x(t+theta), theta) + int int h(x(t+theta), x(t+omega),
    /// theta, omega)` over per-piece rectangles.
    PolyIntegral {
        g_pieces: Vec<(f64, f64, Poly)>,
        h_pieces: Vec<(f64, f64, f64, f64, Poly)>,
        x0: Vec<Symbol>,
        xtheta: Vec<Symbol>,
        xomega: Vec<Symbol>,
        theta: Symbol,
        omega: Symbol,
    },
    /// `p0(x(t)) + sum_i int_{-tau_i}^0 p_i(x(t+theta))`.
    PointState {
        p0: Poly,
        terms: Vec<(f64, Poly)>,
        x0: Vec<Symbol>,
        xi: Vec<Symbol>,
    },
}

/// Evaluates the functional on the history `s -> x(t + s)` with an
/// n-point Gauss-Legendre rule (per dimension).
pub fn functional_value(
    functional: &Functional,
    history: &dyn Fn(f64) -> DVector<f64>,
    order: usize,
) -> f64 {
    let gl = GaussLegendre::new(order.max(2));
    match functional {
        Functional::Quadratic {
            p,
            pieces,
            kernels,
            theta,
            omega,
        } => {
            let x0 = history(0.0);
            let mut v = (x0.transpose() * p * &x0)[(0, 0)];
            for (lo, hi, q, s) in pieces {
                v += gl.integrate(*lo, *hi, |tv| {
                    let mut pt = BTreeMap::new();
                    pt.insert(*theta, tv);
                    let qm = q.eval_f64(&pt);
                    let sm = s.eval_f64(&pt);
                    let xt = history(tv);
                    2.0 * (x0.transpose() * qm * &xt)[(0, 0)] + (xt.transpose() * sm * &xt)[(0, 0)]
                });
            }
            for (i, (lo_i, hi_i, _, _)) in pieces.iter().enumerate() {
                for (j, (lo_j, hi_j, _, _)) in pieces.iter().enumerate() {
                    let r = &kernels[i][j];
                    let half_i = 0.5 * (hi_i - lo_i);
                    let mid_i = 0.5 * (hi_i + lo_i);
                    let half_j = 0.5 * (hi_j - lo_j);
                    let mid_j = 0.5 * (hi_j + lo_j);
                    for (na, wa) in gl.nodes.iter().zip(&gl.weights) {
                        let tv = mid_i + half_i * na;
                        let xt = history(tv);
                        for (nb, wb) in gl.nodes.iter().zip(&gl.weights) {
                            let ov = mid_j + half_j * nb;
                            let xo = history(ov);
                            let mut pt = BTreeMap::new();
                            pt.insert(*theta, tv);
                            pt.insert(*omega, ov);
                            let rm = r.eval_f64(&pt);
                            v += wa * wb * half_i * half_j * (xt.transpose() * rm * &xo)[(0, 0)];
                        }
                    }
                }
            }
            v
        }
        Functional::PolyIntegral {
            g_pieces,
            h_pieces,
            x0,
            xtheta,
            xomega,
            theta,
            omega,
        } => {
            let xc = history(0.0);
            let mut v = 0.0;
            for (lo, hi, g) in g_pieces {
                v += gl.integrate(*lo, *hi, |tv| {
                    let xt = history(tv);
                    let mut pt = BTreeMap::new();
                    pt.insert(*theta, tv);
                    for (i, s) in x0.iter().enumerate() {
                        pt.insert(*s, xc[i]);
                    }
                    for (i, s) in xtheta.iter().enumerate() {
                        pt.insert(*s, xt[i]);
                    }
                    g.eval_f64(&pt)
                });
            }
            for (lo_t, hi_t, lo_o, hi_o, hp) in h_pieces {
                let half_i = 0.5 * (hi_t - lo_t);
                let mid_i = 0.5 * (hi_t + lo_t);
                let half_j = 0.5 * (hi_o - lo_o);
                let mid_j = 0.5 * (hi_o + lo_o);
                for (na, wa) in gl.nodes.iter().zip(&gl.weights) {
                    let tv = mid_i + half_i * na;
                    let xt = history(tv);
                    for (nb, wb) in gl.nodes.iter().zip(&gl.weights) {
                        let ov = mid_j + half_j * nb;
                        let xo = history(ov);
                        let mut pt = BTreeMap::new();
                        pt.insert(*theta, tv);
                        pt.insert(*omega, ov);
                        for (i, s) in xtheta.iter().enumerate() {
                            pt.insert(*s, xt[i]);
                        }
                        for (i, s) in xomega.iter().enumerate() {
                            pt.insert(*s, xo[i]);
                        }
                        v += wa * wb * half_i * half_j * hp.eval_f64(&pt);
                    }
                }
            }
            v
        }
        Functional::PointState { p0, terms, x0, xi } => {
            let xc = history(0.0);
            let mut pt0 = BTreeMap::new();
            for (i, s) in x0.iter().enumerate() {
                pt0.insert(*s, xc[i]);
            }
            let mut v = p0.eval_f64(&pt0);
            for (tau, pi) in terms {
                v += gl.integrate(-tau, 0.0, |tv| {
                    let xt = history(tv);
                    let mut pt = BTreeMap::new();
                    for (i, s) in xi.iter().enumerate() {
                        pt.insert(*s, xt[i]);
                    }
                    pi.eval_f64(&pt)
                });
            }
            v
        }
    }
}

/// Outcome of sampling a functional along a trajectory.
#[derive(Debug, Clone)]
pub struct DecreaseReport {
    /// Largest forward difference of `V` (positive means an increase).
    pub max_increase: f64,
    /// Worst violation of the required decrease margin (positive is bad).
    pub worst_margin_gap: f64,
    pub samples: usize,
}

/// Samples `t -> V(x_t)` on the trajectory grid for `t >= start` and
/// compares the forward difference against the required decrease
/// `-margin(t)`, within `tolerance`.
pub fn decrease_check(
    traj: &Trajectory,
    v_of: &dyn Fn(f64) -> f64,
    margin: &dyn Fn(f64) -> f64,
    start: f64,
    stride: usize,
    tolerance: f64,
) -> DecreaseReport {
    let mut max_increase = f64::NEG_INFINITY;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut samples = 0;
    let dt = traj.h * stride as f64;
    let mut t = start;
    let t_last = traj.t_end() - dt;
    let mut prev = v_of(t);
    while t + dt <= t_last {
        let next = v_of(t + dt);
        let diff = (next - prev) / dt;
        max_increase = max_increase.max(next - prev);
        // Required: dV/dt <= -margin(t) + tolerance.
        worst_gap = worst_gap.max(diff + margin(t) - tolerance);
        samples += 1;
        prev = next;
        t += dt;
    }
    DecreaseReport {
        max_increase,
        worst_margin_gap: worst_gap,
        samples,
    }
}

/// Writes the trajectory as CSV (`t, x1, ..., xn`).
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t");
    for i in 1..=traj.dim {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    for (k, x) in traj.states.iter().enumerate() {
        out.push_str(&format!("{}", traj.t0 + k as f64 * traj.h));
        for v in x.iter() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn th() -> Symbol {
        Symbol::new("sim_theta")
    }

    fn scalar_delay(tau: f64) -> SimSystem {
        SimSystem::linear(dmatrix![0.0], vec![(tau, dmatrix![-1.0])])
    }

    #[test]
    fn pure_delay_decays_below_percent() {
        // x' = -x(t-1) from constant history 1 decays: |x(10)| < 0.2.
        let traj = integrate(&scalar_delay(1.0), &[Poly::one()], th(), 10.0, 1.0 / 50.0);
        assert!(traj.escape.is_none());
        let x10 = traj.value(10.0)[0].abs();
        assert!(x10 < 0.2, "x(10) = {x10}");
        assert!(traj.step_doubling_error < 1e-6);
    }

    #[test]
    fn beyond_critical_delay_oscillates_and_grows() {
        // tau = 2 exceeds pi/2: oscillatory growth, |x| > 10 before t = 60.
        let traj = integrate(&scalar_delay(2.0), &[Poly::one()], th(), 60.0, 2.0 / 50.0);
        assert!(traj.max_norm() > 10.0, "max {}", traj.max_norm());
    }

    #[test]
    fn zero_rhs_stays_constant() {
        let sys = SimSystem::linear(dmatrix![0.0], vec![(1.0, dmatrix![0.0])]);
        let traj = integrate(&sys, &[Poly::constant(crate::poly::rat(7, 2))], th(), 5.0, 0.02);
        let x5 = traj.value(5.0)[0];
        assert!((x5 - 3.5).abs() < 1e-12);
    }

    #[test]
    fn rk4_order_check() {
        // Halving h cuts the endpoint error roughly sixteenfold.
        let reference = integrate(&scalar_delay(1.0), &[Poly::one()], th(), 5.0, 1.0 / 1600.0);
        let xr = reference.value(5.0)[0];
        let e1 = (integrate(&scalar_delay(1.0), &[Poly::one()], th(), 5.0, 1.0 / 25.0).value(5.0)[0]
            - xr)
            .abs();
        let e2 = (integrate(&scalar_delay(1.0), &[Poly::one()], th(), 5.0, 1.0 / 50.0).value(5.0)[0]
            - xr)
            .abs();
        let ratio = e1 / e2;
        assert!(
            ratio > 8.0 && ratio < 40.0,
            "expected ~16x reduction, got {ratio} (e1={e1:.3e}, e2={e2:.3e})"
        );
    }

    #[test]
    fn blow_up_is_flagged_with_escape_time() {
        // x' = x^3 from history 2 escapes in finite time.
        let x = Symbol::new("sim_blow_x");
        let sys = SimSystem::polynomial(vec![Poly::var(x).pow(3)], vec![x], vec![]);
        let traj = integrate(&sys, &[Poly::constant(crate::poly::rat_from_int(2))], th(), 10.0, 0.001);
        assert!(traj.escape.is_some());
        assert!(traj.escape.unwrap() < 1.0);
    }

    #[test]
    fn quadratic_functional_values() {
        let theta = th();
        let omega = Symbol::new("sim_omega");
        // Constant history x = 1 (scalar), tau = 1.
        let hist = |_: f64| DVector::from_element(1, 1.0);
        // V = x(0)' P x(0) with P = 2, all else zero.
        let f = Functional::Quadratic {
            p: dmatrix![2.0],
            pieces: vec![(-1.0, 0.0, PolyMatrix::zeros(1, 1), PolyMatrix::zeros(1, 1))],
            kernels: vec![vec![PolyMatrix::zeros(1, 1)]],
            theta,
            omega,
        };
        assert!((functional_value(&f, &hist, 8) - 2.0).abs() < 1e-12);

        // S = I: V = int_{-1}^0 1 = 1.
        let f = Functional::Quadratic {
            p: dmatrix![0.0],
            pieces: vec![(-1.0, 0.0, PolyMatrix::zeros(1, 1), PolyMatrix::identity(1))],
            kernels: vec![vec![PolyMatrix::zeros(1, 1)]],
            theta,
            omega,
        };
        assert!((functional_value(&f, &hist, 8) - 1.0).abs() < 1e-12);

        // R = 1 (rank one): V = (int 1)^2 = 1.
        let f = Functional::Quadratic {
            p: dmatrix![0.0],
            pieces: vec![(-1.0, 0.0, PolyMatrix::zeros(1, 1), PolyMatrix::zeros(1, 1))],
            kernels: vec![vec![PolyMatrix::identity(1)]],
            theta,
            omega,
        };
        assert!((functional_value(&f, &hist, 8) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn functional_exact_on_polynomial_segments() {
        // Compare quadrature against exact symbolic integration for a
        // polynomial history and polynomial Q, S, R.
        let theta = th();
        let omega = Symbol::new("sim_omega_ex");
        let t = Poly::var(theta);
        // History x(s) = 1 + s + s^2 (scalar), tau = 1.
        let hist_poly = Poly::one().add(&t).add(&t.pow(2));
        let hist = |s: f64| {
            let mut pt = BTreeMap::new();
            pt.insert(theta, s);
            DVector::from_element(1, hist_poly.eval_f64(&pt))
        };
        let q = PolyMatrix::from_fn(1, 1, |_, _| t.pow(2));
        let s = PolyMatrix::from_fn(1, 1, |_, _| Poly::one().add(&t));
        let r = PolyMatrix::from_fn(1, 1, |_, _| {
            Poly::var(theta).mul(&Poly::var(omega)).add(&Poly::one())
        });
        let f = Functional::Quadratic {
            p: dmatrix![1.0],
            pieces: vec![(-1.0, 0.0, q.clone(), s.clone())],
            kernels: vec![vec![r.clone()]],
            theta,
            omega,
        };
        let got = functional_value(&f, &hist, 12);

        // Exact: x(0)^2 + 2 x(0) int q x + int s x^2 + int int x r x.
        use num_traits::Zero;
        let zero = crate::poly::Rat::zero();
        let x0 = hist_poly.substitute_num(theta, &zero);
        let m1 = crate::poly::rat_from_int(-1);
        let qint = q
            .entry(0, 0)
            .mul(&hist_poly)
            .definite_integral_num(theta, &m1, &zero);
        let sint = s
            .entry(0, 0)
            .mul(&hist_poly.pow(2))
            .definite_integral_num(theta, &m1, &zero);
        let hist_om = hist_poly.rename(theta, omega);
        let rint = r
            .entry(0, 0)
            .mul(&hist_poly)
            .mul(&hist_om)
            .definite_integral_num(theta, &m1, &zero)
            .definite_integral_num(omega, &m1, &zero);
        let expect = crate::poly::rat_to_f64(
            &(x0.pow(2).constant_term()
                + crate::poly::rat_from_int(2) * x0.constant_term() * qint.constant_term()
                + sint.constant_term()
                + rint.constant_term()),
        );
        assert!((got - expect).abs() < 1e-10, "got {got} expect {expect}");
    }

    #[test]
    fn decrease_check_flags_sign() {
        // Constant functional on a constant trajectory: no increase.
        let sys = SimSystem::linear(dmatrix![0.0], vec![(1.0, dmatrix![0.0])]);
        let traj = integrate(&sys, &[Poly::one()], th(), 8.0, 0.02);
        let v = |_: f64| 1.0;
        let rep = decrease_check(&traj, &v, &|_| 0.0, 1.0, 5, 1e-9);
        assert!(rep.max_increase <= 1e-12);
        // A growing functional fails the margin check.
        let v2 = |t: f64| t;
        let rep = decrease_check(&traj, &v2, &|_| 0.0, 1.0, 5, 1e-9);
        assert!(rep.worst_margin_gap > 0.0);
    }
}
