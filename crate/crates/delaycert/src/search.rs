//! Delay-margin bisection, grid sweeps, and parameter-region
//! certification on top of the stability builders.

use crate::poly::{rat_from_f64, Rat};
use crate::sdp::SolveOptions;
use crate::stability::{
    certify, BuildError, BuildOptions, Certificate, CertifyOutcome, SystemSpec, Verdict,
};
use rayon::prelude::*;
use serde::Serialize;

/// Result of a delay-margin bisection.
#[derive(Debug)]
pub struct MarginResult {
    /// Certified delay closest to the boundary.
    pub certified: f64,
    /// Uncertified delay closest to the boundary.
    pub uncertified: f64,
    pub degree: usize,
    /// Certificate at the certified endpoint.
    pub certificate: Certificate,
    /// Per-solve diagnostics: (tau, verdict, margin, iterations).
    pub trace: Vec<(f64, Verdict, f64, usize)>,
}

impl MarginResult {
    /// Midpoint estimate of the stability margin.
    pub fn estimate(&self) -> f64 {
        0.5 * (self.certified + self.uncertified)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("bracket endpoints must have opposite verdicts (lo: {lo:?}, hi: {hi:?})")]
    SameVerdict { lo: Verdict, hi: Verdict },
    #[error("bisection tolerance must be positive")]
    BadTolerance,
    #[error("no certificate produced at the certified endpoint")]
    MissingCertificate,
}

/// Bisects the CERTIFIED predicate over delays in `[lo, hi]`. The two
/// endpoints must disagree; within the bracket the certifiable set is
/// assumed to be an interval (solver failures count as not certified and
/// are visible in the trace).
pub fn margin_bisection(
    template: &dyn Fn(f64) -> SystemSpec,
    d: usize,
    bracket: (f64, f64),
    tol: f64,
    opts: &BuildOptions,
    solve_opts: &SolveOptions,
) -> Result<MarginResult, SearchError> {
    if tol <= 0.0 {
        return Err(SearchError::BadTolerance);
    }
    let mut trace = Vec::new();
    let mut run = |tau: f64| -> Result<(Verdict, CertifyOutcome), SearchError> {
        let spec = template(tau);
        let mut o = opts.clone();
        o.degree = d;
        let out = certify(&spec, &o, solve_opts)?;
        trace.push((tau, out.verdict.clone(), out.margin, out.iterations));
        Ok((out.verdict.clone(), out))
    };

    let (mut lo, mut hi) = bracket;
    let (v_lo, out_lo) = run(lo)?;
    let (v_hi, out_hi) = run(hi)?;
    let lo_certified = v_lo == Verdict::Certified;
    let hi_certified = v_hi == Verdict::Certified;
    if lo_certified == hi_certified {
        return Err(SearchError::SameVerdict { lo: v_lo, hi: v_hi });
    }
    let mut cert_out = if lo_certified { out_lo } else { out_hi };
    // Orient so `lo` carries the certified side.
    let mut flipped = false;
    if hi_certified {
        std::mem::swap(&mut lo, &mut hi);
        flipped = true;
    }
    while (lo - hi).abs() > tol {
        let mid = 0.5 * (lo + hi);
        let (v, out) = run(mid)?;
        if v == Verdict::Certified {
            lo = mid;
            cert_out = out;
        } else {
            hi = mid;
        }
    }
    let _ = flipped;
    let certificate = cert_out
        .certificate
        .ok_or(SearchError::MissingCertificate)?;
    Ok(MarginResult {
        certified: lo,
        uncertified: hi,
        degree: d,
        certificate,
        trace,
    })
}

/// One sweep entry.
#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub value: f64,
    pub certified: bool,
    pub margin: f64,
    pub solve_ms: u128,
}

/// Certifies every grid point independently (in parallel).
pub fn sweep(
    template: &(dyn Fn(f64) -> SystemSpec + Sync),
    grid: &[f64],
    opts: &BuildOptions,
    solve_opts: &SolveOptions,
) -> Vec<SweepEntry> {
    grid.par_iter()
        .map(|&tau| {
            let started = std::time::Instant::now();
            let spec = template(tau);
            let out = certify(&spec, opts, solve_opts);
            let (certified, margin) = match out {
                Ok(o) => (o.verdict == Verdict::Certified, o.margin),
                Err(_) => (false, 0.0),
            };
            SweepEntry {
                value: tau,
                certified,
                margin,
                solve_ms: started.elapsed().as_millis(),
            }
        })
        .collect()
}

/// Parses a `LO:STEP:HI` grid description.
pub fn parse_grid(desc: &str) -> Option<Vec<f64>> {
    let parts: Vec<&str> = desc.split(':').collect();
    if parts.len() != 3 {
        return None;
    }
    let lo: f64 = parts[0].parse().ok()?;
    let step: f64 = parts[1].parse().ok()?;
    let hi: f64 = parts[2].parse().ok()?;
    if step <= 0.0 || hi < lo {
        return None;
    }
    let mut out = Vec::new();
    let mut v = lo;
    while v <= hi + 1e-12 {
        out.push(v);
        v += step;
    }
    Some(out)
}

/// Certifies a parameter-dependent spec over its whole box in a single
/// solve.
pub fn region_certify(
    spec: &SystemSpec,
    d_theta: usize,
    d_param: usize,
    solve_opts: &SolveOptions,
) -> Result<CertifyOutcome, BuildError> {
    let opts = BuildOptions::new(d_theta).with_param_degree(d_param);
    certify(spec, &opts, solve_opts)
}

/// Convenience: a 1e-3 bisection of the upper stability margin of
/// a delay template, bracketing from a known-certified point.
pub fn upper_margin(
    template: &dyn Fn(f64) -> SystemSpec,
    d: usize,
    bracket: (f64, f64),
    tol: f64,
    solve_opts: &SolveOptions,
) -> Result<MarginResult, SearchError> {
    margin_bisection(template, d, bracket, tol, &BuildOptions::new(d), solve_opts)
}

pub fn rat_delay(tau: f64) -> Rat {
    rat_from_f64(tau)
}
