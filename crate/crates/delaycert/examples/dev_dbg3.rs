use delaycert::poly::{rat, rat_from_f64, PolyMatrix, Rat};
use delaycert::sdp::SolveOptions;
use delaycert::search::margin_bisection;
use delaycert::stability::{BuildOptions, SystemSpec};

fn example3(tau: f64) -> SystemSpec {
    // x' = diag(-2, -0.9) x + B [ x(t-tau/2)/20 + 19 x(t-tau)/20 ],
    // B = [[-1, 0], [-1, -1]].
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
    let so = SolveOptions::default();
    for d in [2usize, 4] {
        let started = std::time::Instant::now();
        let r = margin_bisection(&example3, d, (1.0, 1.6), 1e-3, &BuildOptions::new(d), &so).unwrap();
        println!("example3 d={d}: tau_max in [{:.5}, {:.5}] ({:.1}s)", r.certified, r.uncertified, started.elapsed().as_secs_f64());
    }
    let r = margin_bisection(&example3, 4, (0.1, 0.4), 5e-4, &BuildOptions::new(4), &so).unwrap();
    println!("example3 d=4: tau_min in [{:.5}, {:.5}]", r.uncertified, r.certified);
}
