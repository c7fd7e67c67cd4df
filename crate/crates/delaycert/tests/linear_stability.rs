//! End-to-end checks of the linear delay-system builders against known
//! stability boundaries and the finite-difference derivative oracle.

use delaycert::poly::{rat, rat_from_f64, rat_from_int, Poly, PolyMatrix, Rat};
use delaycert::sdp::SolveOptions;
use delaycert::stability::{
    certify, verify, BuildOptions, DelayValue, SystemSpec, Verdict,
};
use delaycert::symbol::Symbol;

fn example1(tau: f64) -> SystemSpec {
    // x' = [0 1; -2 0.1] x + [0 0; 1 0] x(t - tau)
    let a = PolyMatrix::from_scalars(
        2,
        2,
        &[
            Rat::from_integer(0.into()),
            rat_from_int(1),
            rat_from_int(-2),
            rat(1, 10),
        ],
    );
    let b = PolyMatrix::from_scalars(
        2,
        2,
        &[
            rat_from_int(0),
            rat_from_int(0),
            rat_from_int(1),
            rat_from_int(0),
        ],
    );
    SystemSpec::LinearSingle {
        n: 2,
        a,
        b,
        tau: DelayValue::Fixed(rat_from_f64(tau)),
        params: vec![],
    }
}

fn scalar_delay(tau: f64) -> SystemSpec {
    SystemSpec::LinearSingle {
        n: 1,
        a: PolyMatrix::from_scalars(1, 1, &[rat_from_int(0)]),
        b: PolyMatrix::from_scalars(1, 1, &[rat_from_int(-1)]),
        tau: DelayValue::Fixed(rat_from_f64(tau)),
        params: vec![],
    }
}

fn run(spec: &SystemSpec, d: usize) -> Verdict {
    let out = certify(spec, &BuildOptions::new(d), &SolveOptions::default()).unwrap();
    out.verdict
}

#[test]
fn scalar_delay_within_margin_certifies() {
    assert_eq!(run(&scalar_delay(1.0), 4), Verdict::Certified);
}

#[test]
fn scalar_delay_beyond_margin_fails() {
    // tau = 2 exceeds the analytic margin pi/2.
    assert_eq!(run(&scalar_delay(2.0), 4), Verdict::NotCertified);
}

#[test]
fn example1_certifies_at_unit_delay() {
    assert_eq!(run(&example1(1.0), 4), Verdict::Certified);
}

#[test]
fn example1_fails_beyond_analytic_limit() {
    assert_eq!(run(&example1(1.8), 4), Verdict::NotCertified);
}

#[test]
fn derivative_identity_quadratic_convergence() {
    let spec = example1(1.0);
    let errs = verify::derivative_identity_errors(&spec, &BuildOptions::new(2), 42);
    // errs sorted smallest h first; expect roughly 4x decay per halving.
    assert_eq!(errs.len(), 3);
    let r1 = errs[2].1 / errs[1].1;
    let r2 = errs[1].1 / errs[0].1;
    assert!(
        r1 > 2.0 && r1 < 8.0 && r2 > 2.0 && r2 < 8.0,
        "expected quadratic decay, got errors {errs:?}"
    );
}

#[test]
fn certificate_verifies_against_simulation() {
    let out = certify(&example1(1.0), &BuildOptions::new(4), &SolveOptions::default()).unwrap();
    assert_eq!(out.verdict, Verdict::Certified);
    let cert = out.certificate.expect("certificate");
    // P must be positive definite.
    let p = match &cert.kind {
        delaycert::stability::CertificateKind::Linear { p, .. } => p.clone(),
        _ => unreachable!(),
    };
    let pm = nalgebra::DMatrix::from_fn(2, 2, |i, j| {
        delaycert::poly::rat_to_f64(&p.entry(i, j).constant_term())
    });
    let eig = nalgebra::SymmetricEigen::new(pm);
    assert!(eig.eigenvalues.iter().all(|&e| e > 0.0), "P not PD");

    let report = verify::verify_certificate(&cert, &example1(1.0), 20, 7);
    assert!(report.passed(), "verify failed: {report:?}");
}

#[test]
fn spot_poly() {
    // Sanity on the test helpers themselves.
    let th = Symbol::new("lin_test_t");
    let p = Poly::var(th);
    assert_eq!(p.degree(), 1);
}
