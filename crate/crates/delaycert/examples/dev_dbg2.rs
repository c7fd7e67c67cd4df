use delaycert::poly::{rat, rat_from_f64, rat_from_int, PolyMatrix};
use delaycert::sdp::SolveOptions;
use delaycert::stability::{certify, BuildOptions, DelayValue, SystemSpec};

fn example1(tau: f64) -> SystemSpec {
    let a = PolyMatrix::from_scalars(2, 2, &[rat_from_int(0), rat_from_int(1), rat_from_int(-2), rat(1, 10)]);
    let b = PolyMatrix::from_scalars(2, 2, &[rat_from_int(0), rat_from_int(0), rat_from_int(1), rat_from_int(0)]);
    SystemSpec::LinearSingle { n: 2, a, b, tau: DelayValue::Fixed(rat_from_f64(tau)), params: vec![] }
}

fn main() {
    let so = SolveOptions::default();
    for tau in [1.55f64, 1.6, 1.65, 1.7] {
        let out = certify(&example1(tau), &BuildOptions::new(4), &so).unwrap();
        println!(
            "tau={tau}: verdict={:?} status={:?} margin={:.3e} iters={} gap={:.2e} res={:.2e}",
            out.verdict, out.status, out.margin, out.iterations, out.solution.rel_gap, out.solution.eq_residual
        );
    }
}
