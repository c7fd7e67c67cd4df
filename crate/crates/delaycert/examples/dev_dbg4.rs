use delaycert::poly::{rat, rat_from_f64, Poly, PolyMatrix, Rat};
use delaycert::simulate::{integrate, SimSystem};
use delaycert::stability::{verify, BuildOptions, SystemSpec};
use delaycert::symbol::Symbol;
use nalgebra::dmatrix;

fn example3(tau: f64) -> SystemSpec {
    let zero = Rat::from_integer(0.into());
    let a0 = PolyMatrix::from_scalars(2, 2, &[rat(-2, 1), zero.clone(), zero.clone(), rat(-9, 10)]);
    let b = [rat(-1, 1), zero.clone(), rat(-1, 1), rat(-1, 1)];
    let b1: Vec<Rat> = b.iter().map(|v| v / rat(20, 1)).collect();
    let b2: Vec<Rat> = b.iter().map(|v| v * rat(19, 20)).collect();
    let t = rat_from_f64(tau);
    SystemSpec::LinearMultiple {
        n: 2,
        a0,
        delayed: vec![
            (t.clone() / rat(2, 1), PolyMatrix::from_scalars(2, 2, &b1)),
            (t, PolyMatrix::from_scalars(2, 2, &b2)),
        ],
    }
}

fn main() {
    // Simulate at tau = 1.45: should grow if unstable.
    let b = dmatrix![-1.0, 0.0; -1.0, -1.0];
    let sys = SimSystem::linear(
        dmatrix![-2.0, 0.0; 0.0, -0.9],
        vec![(0.725, &b / 20.0), (1.45, &b * (19.0 / 20.0))],
    );
    let th = Symbol::new("dbg_theta");
    let traj = integrate(&sys, &[Poly::one(), Poly::one()], th, 120.0, 1.45 / 100.0);
    println!("tau=1.45: |x| max over [100,120] = {:.3}",
        (0..200).map(|k| traj.value(100.0 + 0.1 * k as f64).norm()).fold(0.0f64, f64::max));

    // Derivative identity oracle on the multiple-delay builder.
    let errs = verify::derivative_identity_errors(&example3(1.0), &BuildOptions::new(2), 3);
    println!("oracle errors: {errs:?}");
}
