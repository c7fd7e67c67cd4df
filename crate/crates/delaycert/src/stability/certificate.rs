//! Extracted certificates: the solved functional data, margins, and Gram
//! matrices, plus JSON serialization.

use super::linear::instantiate_functional;
use super::{Artifacts, BuildOptions, BuiltProblem, SystemSpec};
use crate::poly::{rat_to_f64, Poly, PolyMatrix, Rat};
use crate::sdp::{SdpSolution, VarId};
use crate::simulate::Functional;
use crate::symbol::Symbol;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// The functional data of a solved certificate.
#[derive(Debug, Clone)]
pub enum CertificateKind {
    /// Complete quadratic functional (piecewise for multiple delays).
    Linear {
        n: usize,
        theta: Symbol,
        omega: Symbol,
        breaks: Vec<Rat>,
        p: PolyMatrix,
        q_pieces: Vec<PolyMatrix>,
        s_pieces: Vec<PolyMatrix>,
        r_pieces: Vec<Vec<PolyMatrix>>,
    },
    /// `V = sum_i int g_i + sum_ij int int h_ij` over state polynomials.
    Nonlinear {
        n: usize,
        theta: Symbol,
        omega: Symbol,
        breaks: Vec<Rat>,
        x0: Vec<Symbol>,
        xq: Vec<Symbol>,
        xo: Vec<Symbol>,
        g_pieces: Vec<Poly>,
        /// h evaluated with first slot on `xq` and second on `xo`.
        h_pieces: Vec<Vec<Poly>>,
    },
    /// `V = p0(x(0)) + sum_i int_{-tau_i}^0 p_i(x(theta))`.
    DelayIndependent {
        n: usize,
        x0: Vec<Symbol>,
        slot: Vec<Symbol>,
        p0: Poly,
        terms: Vec<(Rat, Poly)>,
    },
    /// Plain Lyapunov function for an ODE.
    Ode { n: usize, state: Vec<Symbol>, v: Poly },
}

/// A named solved Gram block.
#[derive(Debug, Clone)]
pub struct GramInfo {
    pub name: String,
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub degree: usize,
    /// Achieved margin variable value.
    pub margin: f64,
    /// `V(phi) >= pos_margin * ||phi(0)||^(2 pos_power)`.
    pub pos_margin: f64,
    pub pos_power: usize,
    /// `dV/dt <= -dec_margin * ||x(t)||^(2 dec_power)`.
    pub dec_margin: f64,
    pub dec_power: usize,
    pub gram_blocks: Vec<GramInfo>,
    pub spec_hash: String,
}

/// Maps the solved SDP back to named functional data.
pub fn extract_certificate(
    _spec: &SystemSpec,
    opts: &BuildOptions,
    built: &BuiltProblem,
    sol: &SdpSolution,
) -> Certificate {
    let value_of = |v: VarId| sol.value_of(v);
    let margin = sol.value_of(built.margin);
    let mut gram_blocks = Vec::new();
    for (i, b) in sol.blocks.iter().enumerate() {
        if b.nrows() > 1 {
            gram_blocks.push(GramInfo {
                name: format!("block{i}"),
                matrix: b.clone(),
            });
        }
    }
    let (kind, pos_margin, pos_power, dec_margin, dec_power) = match &built.artifacts {
        Artifacts::Linear(art) => {
            let f = instantiate_functional(art, &value_of);
            (
                CertificateKind::Linear {
                    n: art.n,
                    theta: art.theta,
                    omega: art.omega,
                    breaks: art.breaks.clone(),
                    p: f.p,
                    q_pieces: f.q_pieces,
                    s_pieces: f.s_pieces,
                    r_pieces: f.r_pieces,
                },
                margin,
                1,
                margin,
                1,
            )
        }
        Artifacts::Nonlinear(art) => {
            let tau_k = rat_to_f64(art.breaks.last().unwrap());
            (
                CertificateKind::Nonlinear {
                    n: art.n,
                    theta: art.theta,
                    omega: art.omega,
                    breaks: art.breaks.clone(),
                    x0: art.x0.clone(),
                    xq: art.xq.clone(),
                    xo: art.xo.clone(),
                    g_pieces: art.g_pieces.iter().map(|g| g.instantiate(&value_of)).collect(),
                    h_pieces: art
                        .h_pieces_eval
                        .iter()
                        .map(|row| row.iter().map(|h| h.instantiate(&value_of)).collect())
                        .collect(),
                },
                margin * tau_k,
                opts.margin_pos_power,
                margin,
                opts.margin_dec_power,
            )
        }
        Artifacts::DelayIndependent(art) => (
            CertificateKind::DelayIndependent {
                n: art.n,
                x0: art.x0.clone(),
                slot: art.slot.clone(),
                p0: art.p0.instantiate(&value_of),
                terms: art
                    .terms
                    .iter()
                    .map(|(t, p)| (t.clone(), p.instantiate(&value_of)))
                    .collect(),
            },
            margin,
            opts.margin_pos_power,
            margin,
            opts.margin_dec_power,
        ),
        Artifacts::Ode(art) => (
            CertificateKind::Ode {
                n: art.n,
                state: art.state.clone(),
                v: art.v.instantiate(&value_of),
            },
            margin,
            1,
            margin,
            1,
        ),
    };
    Certificate {
        kind,
        degree: opts.degree,
        margin,
        pos_margin,
        pos_power,
        dec_margin,
        dec_power,
        gram_blocks,
        spec_hash: String::new(),
    }
}

impl Certificate {
    /// Conversion to the quadrature-evaluation form used by the
    /// simulation oracle.
    pub fn to_functional(&self) -> Functional {
        match &self.kind {
            CertificateKind::Linear {
                theta,
                omega,
                breaks,
                p,
                q_pieces,
                s_pieces,
                r_pieces,
                ..
            } => {
                let k = q_pieces.len();
                let pieces = (0..k)
                    .map(|i| {
                        (
                            -rat_to_f64(&breaks[i + 1]),
                            -rat_to_f64(&breaks[i]),
                            q_pieces[i].clone(),
                            s_pieces[i].clone(),
                        )
                    })
                    .collect();
                Functional::Quadratic {
                    p: numeric(p),
                    pieces,
                    kernels: r_pieces.clone(),
                    theta: *theta,
                    omega: *omega,
                }
            }
            CertificateKind::Nonlinear {
                theta,
                omega,
                breaks,
                x0,
                xq,
                xo,
                g_pieces,
                h_pieces,
                ..
            } => {
                let k = g_pieces.len();
                let ivs: Vec<(f64, f64)> = (0..k)
                    .map(|i| (-rat_to_f64(&breaks[i + 1]), -rat_to_f64(&breaks[i])))
                    .collect();
                Functional::PolyIntegral {
                    g_pieces: (0..k).map(|i| (ivs[i].0, ivs[i].1, g_pieces[i].clone())).collect(),
                    h_pieces: (0..k)
                        .flat_map(|i| {
                            (0..k).map(move |j| (i, j))
                        })
                        .map(|(i, j)| (ivs[i].0, ivs[i].1, ivs[j].0, ivs[j].1, h_pieces[i][j].clone()))
                        .collect(),
                    x0: x0.clone(),
                    xtheta: xq.clone(),
                    xomega: xo.clone(),
                    theta: *theta,
                    omega: *omega,
                }
            }
            CertificateKind::DelayIndependent { x0, slot, p0, terms, .. } => Functional::PointState {
                p0: p0.clone(),
                terms: terms.iter().map(|(t, p)| (rat_to_f64(t), p.clone())).collect(),
                x0: x0.clone(),
                xi: slot.clone(),
            },
            CertificateKind::Ode { state, v, .. } => Functional::PointState {
                p0: v.clone(),
                terms: Vec::new(),
                x0: state.clone(),
                xi: state.clone(),
            },
        }
    }

    /// Exact value of `V` at a polynomial history (each component a
    /// polynomial in `hist_var` on `[-tau_K, 0]`), by symbolic
    /// integration over the rationals.
    pub fn exact_value(&self, history: &[Poly], hist_var: Symbol) -> Rat {
        use num_traits::Zero;
        match &self.kind {
            CertificateKind::Linear {
                n,
                theta,
                omega,
                breaks,
                p,
                q_pieces,
                s_pieces,
                r_pieces,
            } => {
                let phi: Vec<Poly> = history.iter().map(|h| h.rename(hist_var, *theta)).collect();
                let phi0: Vec<Rat> = phi
                    .iter()
                    .map(|h| h.substitute_num(*theta, &Rat::zero()).constant_term())
                    .collect();
                let mut v = Rat::zero();
                for i in 0..*n {
                    for j in 0..*n {
                        v += phi0[i].clone()
                            * p.entry(i, j).constant_term()
                            * phi0[j].clone();
                    }
                }
                let k = q_pieces.len();
                for pc in 0..k {
                    let (lo, hi) = (-breaks[pc + 1].clone(), -breaks[pc].clone());
                    for i in 0..*n {
                        for j in 0..*n {
                            let qint = q_pieces[pc]
                                .entry(i, j)
                                .mul(&phi[j])
                                .definite_integral_num(*theta, &lo, &hi)
                                .constant_term();
                            v += crate::poly::rat_from_int(2) * phi0[i].clone() * qint;
                            let sint = s_pieces[pc]
                                .entry(i, j)
                                .mul(&phi[i])
                                .mul(&phi[j])
                                .definite_integral_num(*theta, &lo, &hi)
                                .constant_term();
                            v += sint;
                        }
                    }
                }
                for (pi, row) in r_pieces.iter().enumerate() {
                    for (pj, r) in row.iter().enumerate() {
                        let (lo_i, hi_i) = (-breaks[pi + 1].clone(), -breaks[pi].clone());
                        let (lo_j, hi_j) = (-breaks[pj + 1].clone(), -breaks[pj].clone());
                        let phi_om: Vec<Poly> =
                            phi.iter().map(|h| h.rename(*theta, *omega)).collect();
                        for i in 0..*n {
                            for j in 0..*n {
                                let term = r
                                    .entry(i, j)
                                    .mul(&phi[i])
                                    .mul(&phi_om[j])
                                    .definite_integral_num(*theta, &lo_i, &hi_i)
                                    .definite_integral_num(*omega, &lo_j, &hi_j)
                                    .constant_term();
                                v += term;
                            }
                        }
                    }
                }
                v
            }
            CertificateKind::Nonlinear {
                n,
                theta,
                omega,
                breaks,
                x0,
                xq,
                xo,
                g_pieces,
                h_pieces,
            } => {
                let phi: Vec<Poly> = history.iter().map(|h| h.rename(hist_var, *theta)).collect();
                let phi0: Vec<Rat> = phi
                    .iter()
                    .map(|h| h.substitute_num(*theta, &Rat::zero()).constant_term())
                    .collect();
                let mut v = Rat::zero();
                let k = g_pieces.len();
                for pc in 0..k {
                    let (lo, hi) = (-breaks[pc + 1].clone(), -breaks[pc].clone());
                    let mut g = g_pieces[pc].clone();
                    for i in 0..*n {
                        g = g.substitute_num(x0[i], &phi0[i]);
                        g = g.substitute(xq[i], &phi[i]);
                    }
                    v += g.definite_integral_num(*theta, &lo, &hi).constant_term();
                }
                for pi in 0..k {
                    for pj in 0..k {
                        let (lo_i, hi_i) = (-breaks[pi + 1].clone(), -breaks[pi].clone());
                        let (lo_j, hi_j) = (-breaks[pj + 1].clone(), -breaks[pj].clone());
                        let mut h = h_pieces[pi][pj].clone();
                        for i in 0..*n {
                            h = h.substitute(xq[i], &phi[i]);
                            h = h.substitute(xo[i], &phi[i].rename(*theta, *omega));
                        }
                        v += h
                            .definite_integral_num(*theta, &lo_i, &hi_i)
                            .definite_integral_num(*omega, &lo_j, &hi_j)
                            .constant_term();
                    }
                }
                v
            }
            CertificateKind::DelayIndependent { n, x0, slot, p0, terms } => {
                let phi: Vec<Poly> = history.to_vec();
                let phi0: Vec<Rat> = phi
                    .iter()
                    .map(|h| h.substitute_num(hist_var, &Rat::zero()).constant_term())
                    .collect();
                let mut v = {
                    let mut p = p0.clone();
                    for i in 0..*n {
                        p = p.substitute_num(x0[i], &phi0[i]);
                    }
                    p.constant_term()
                };
                for (tau, pi) in terms {
                    let mut p = pi.clone();
                    for i in 0..*n {
                        p = p.substitute(slot[i], &phi[i]);
                    }
                    v += p
                        .definite_integral_num(hist_var, &(-tau.clone()), &Rat::zero())
                        .constant_term();
                }
                v
            }
            CertificateKind::Ode { n, state, v } => {
                let mut p = v.clone();
                for i in 0..*n {
                    let x0 = history[i].substitute_num(hist_var, &Rat::zero()).constant_term();
                    p = p.substitute_num(state[i], &x0);
                }
                p.constant_term()
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SerializedCertificate::from(self)).expect("serializable")
    }
}

// Serialized form: polynomials as exponent-keyed coefficient lists, Gram
// matrices row major.

#[derive(Serialize, Deserialize)]
struct SerializedPolyTerm {
    powers: Vec<(String, u32)>,
    coeff: f64,
}

#[derive(Serialize, Deserialize)]
struct SerializedPoly(Vec<SerializedPolyTerm>);

fn ser_poly(p: &Poly) -> SerializedPoly {
    SerializedPoly(
        p.terms()
            .map(|(m, c)| SerializedPolyTerm {
                powers: m.powers().iter().map(|(s, e)| (s.name(), *e)).collect(),
                coeff: rat_to_f64(c),
            })
            .collect(),
    )
}

fn ser_matrix(m: &PolyMatrix) -> Vec<Vec<SerializedPoly>> {
    (0..m.rows)
        .map(|i| (0..m.cols).map(|j| ser_poly(m.entry(i, j))).collect())
        .collect()
}

#[derive(Serialize, Deserialize)]
struct SerializedCertificate {
    version: u32,
    kind: String,
    degree: usize,
    margin: f64,
    pos_margin: f64,
    pos_power: usize,
    dec_margin: f64,
    dec_power: usize,
    spec_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<Vec<Vec<SerializedPoly>>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    q_pieces: Vec<Vec<Vec<SerializedPoly>>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    s_pieces: Vec<Vec<Vec<SerializedPoly>>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    r_pieces: Vec<Vec<Vec<Vec<SerializedPoly>>>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    g_pieces: Vec<SerializedPoly>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    h_pieces: Vec<Vec<SerializedPoly>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p0: Option<SerializedPoly>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    integral_terms: Vec<(f64, SerializedPoly)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lyapunov: Option<SerializedPoly>,
    grams: Vec<(String, usize, Vec<f64>)>,
}

impl From<&Certificate> for SerializedCertificate {
    fn from(c: &Certificate) -> Self {
        let grams = c
            .gram_blocks
            .iter()
            .map(|g| {
                (
                    g.name.clone(),
                    g.matrix.nrows(),
                    g.matrix.transpose().as_slice().to_vec(),
                )
            })
            .collect();
        let mut out = SerializedCertificate {
            version: 1,
            kind: String::new(),
            degree: c.degree,
            margin: c.margin,
            pos_margin: c.pos_margin,
            pos_power: c.pos_power,
            dec_margin: c.dec_margin,
            dec_power: c.dec_power,
            spec_hash: c.spec_hash.clone(),
            p: None,
            q_pieces: Vec::new(),
            s_pieces: Vec::new(),
            r_pieces: Vec::new(),
            g_pieces: Vec::new(),
            h_pieces: Vec::new(),
            p0: None,
            integral_terms: Vec::new(),
            lyapunov: None,
            grams,
        };
        match &c.kind {
            CertificateKind::Linear { p, q_pieces, s_pieces, r_pieces, .. } => {
                out.kind = "linear".into();
                out.p = Some(ser_matrix(p));
                out.q_pieces = q_pieces.iter().map(ser_matrix).collect();
                out.s_pieces = s_pieces.iter().map(ser_matrix).collect();
                out.r_pieces = r_pieces
                    .iter()
                    .map(|row| row.iter().map(ser_matrix).collect())
                    .collect();
            }
            CertificateKind::Nonlinear { g_pieces, h_pieces, .. } => {
                out.kind = "nonlinear".into();
                out.g_pieces = g_pieces.iter().map(ser_poly).collect();
                out.h_pieces = h_pieces
                    .iter()
                    .map(|row| row.iter().map(ser_poly).collect())
                    .collect();
            }
            CertificateKind::DelayIndependent { p0, terms, .. } => {
                out.kind = "delay-independent".into();
                out.p0 = Some(ser_poly(p0));
                out.integral_terms = terms
                    .iter()
                    .map(|(t, p)| (rat_to_f64(t), ser_poly(p)))
                    .collect();
            }
            CertificateKind::Ode { v, .. } => {
                out.kind = "ode".into();
                out.lyapunov = Some(ser_poly(v));
            }
        }
        out
    }
}

fn numeric(m: &PolyMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows, m.cols, |i, j| {
        m.entry(i, j).constant_term().to_f64()
    })
}

trait ToF64 {
    fn to_f64(&self) -> f64;
}
impl ToF64 for Rat {
    fn to_f64(&self) -> f64 {
        rat_to_f64(self)
    }
}
