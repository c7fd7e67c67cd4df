use delaycert::poly::{rat, rat_from_f64, rat_from_int, PolyMatrix, Rat};
use delaycert::sdp::SolveOptions;
use delaycert::search::margin_bisection;
use delaycert::stability::{BuildOptions, DelayValue, SystemSpec};

fn example1(tau: f64) -> SystemSpec {
    let a = PolyMatrix::from_scalars(2, 2, &[rat_from_int(0), rat_from_int(1), rat_from_int(-2), rat(1, 10)]);
    let b = PolyMatrix::from_scalars(2, 2, &[rat_from_int(0), rat_from_int(0), rat_from_int(1), rat_from_int(0)]);
    SystemSpec::LinearSingle { n: 2, a, b, tau: DelayValue::Fixed(rat_from_f64(tau)), params: vec![] }
}

fn scalar(tau: f64) -> SystemSpec {
    SystemSpec::LinearSingle {
        n: 1,
        a: PolyMatrix::from_scalars(1, 1, &[rat_from_int(0)]),
        b: PolyMatrix::from_scalars(1, 1, &[rat_from_int(-1)]),
        tau: DelayValue::Fixed(rat_from_f64(tau)),
        params: vec![],
    }
}

fn main() {
    let so = SolveOptions::default();
    let t0 = std::time::Instant::now();
    for d in [2usize, 4, 6] {
        let started = std::time::Instant::now();
        let r = margin_bisection(&example1, d, (1.0, 2.0), 1e-3, &BuildOptions::new(d), &so).unwrap();
        println!(
            "example1 d={d}: tau_max in [{:.5}, {:.5}] ({} solves, {:.1}s)",
            r.certified, r.uncertified, r.trace.len(), started.elapsed().as_secs_f64()
        );
    }
    let r = margin_bisection(&example1, 2, (0.05, 0.5), 1e-4, &BuildOptions::new(2), &so).unwrap();
    println!("example1 d=2: tau_min in [{:.5}, {:.5}]", r.uncertified, r.certified);
    let r = margin_bisection(&scalar, 6, (1.0, 2.0), 1e-3, &BuildOptions::new(6), &so).unwrap();
    println!("scalar d=6: tau_max in [{:.5}, {:.5}] (pi/2 = {:.5})", r.certified, r.uncertified, std::f64::consts::FRAC_PI_2);
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
