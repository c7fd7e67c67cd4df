//! Lyapunov certification for ordinary differential equations, global or
//! restricted to semialgebraic state/parameter regions, plus the matrix
//! conditions for linear systems with boxed parametric uncertainty.

use super::{
    declare_margin, Artifacts, BuildError, BuildOptions, BuiltProblem, ParamBox, SystemSpec,
};
use crate::poly::{Monomial, MonomialBasis, Poly, PolyMatrix};
use crate::sdp::{SdpProblem, SolveOptions, SolveStatus, VarId};
use crate::sos::{self, declare_poly, declare_symmetric_matrix, VarPoly, VarPolyMatrix};
use crate::symbol::Symbol;

pub struct OdeArtifacts {
    pub n: usize,
    pub state: Vec<Symbol>,
    pub v: VarPoly,
    pub vdot_neg: VarPoly,
    pub margin: VarId,
}

/// Builds the scalar-Lyapunov ODE problem: `V - alpha ||x||^2` and
/// `-(grad V . f + alpha ||x||^2)` nonnegative, globally or on the
/// product of the state region and the parameter boxes.
pub fn build_ode(spec: &SystemSpec, opts: &BuildOptions) -> Result<BuiltProblem, BuildError> {
    let SystemSpec::Ode { n, f, state, params, state_region } = spec else {
        unreachable!("dispatch guarantees the variant");
    };
    let n = *n;
    let d = opts.degree;
    let scale = spec.scale();
    let param_syms: Vec<Symbol> = params.iter().map(|p| p.sym).collect();
    let mut region: Vec<Poly> = state_region.clone();
    region.extend(params.iter().map(ParamBox::region_poly));

    let mut prob = SdpProblem::new();
    let margin = declare_margin(&mut prob, scale);

    let support = MonomialBasis::capped_groups(&[
        (state.clone(), d),
        (param_syms.clone(), opts.degree_param),
    ])
    .filter(|m| m.degree_in_set(state) >= 1)
    .monomials;
    let v = declare_poly(&mut prob, &support);

    let mut groups = vec![state.clone()];
    if !param_syms.is_empty() {
        groups.push(param_syms.clone());
    }
    let one_by_one = |p: VarPoly| {
        let mut m = VarPolyMatrix::zeros(1, 1);
        *m.entry_mut(0, 0) = p;
        m
    };
    let norm_sq = state
        .iter()
        .fold(Poly::zero(), |acc, s| acc.add(&Poly::var(*s).pow(2)));

    // V - alpha ||x||^2 on the region.
    let target = v.sub(&VarPoly::var_term(margin, Monomial::one()).mul_poly(&norm_sq));
    sos::psd_on_region(&mut prob, &one_by_one(target), &groups, &region);

    // -(grad V . f + alpha ||x||^2) on the region.
    let mut vdot = VarPoly::zero();
    for i in 0..n {
        vdot = vdot.add(&v.differentiate(state[i]).mul_poly(&f[i]));
    }
    let vdot_neg = vdot.neg();
    let target = vdot_neg.sub(&VarPoly::var_term(margin, Monomial::one()).mul_poly(&norm_sq));
    sos::psd_on_region(&mut prob, &one_by_one(target), &groups, &region);

    let artifacts = OdeArtifacts {
        n,
        state: state.clone(),
        v: v.clone(),
        vdot_neg,
        margin,
    };
    Ok(BuiltProblem {
        problem: prob,
        margin,
        margin_cap: 1e-3 * scale,
        scale,
        artifacts: Artifacts::Ode(artifacts),
    })
}

/// Matrix-valued Lyapunov test for `x' = A(y) x` with `y` confined to a
/// semialgebraic region: `P(y) - I` and `-(A' P + P A + I)` must lie in
/// the region-restricted matrix-SOS cone. This is a plain feasibility
/// question (the identity terms fix the scale), so the verdict is the
/// solver status.
pub fn certify_linear_ode_uncertain(
    a: &PolyMatrix,
    region: &[Poly],
    d_param: usize,
    solve_opts: &SolveOptions,
) -> (bool, Option<PolyMatrix>) {
    let n = a.rows;
    let mut param_syms: Vec<Symbol> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for s in a.entry(i, j).variables() {
                if !param_syms.contains(&s) {
                    param_syms.push(s);
                }
            }
        }
    }
    for g in region {
        for s in g.variables() {
            if !param_syms.contains(&s) {
                param_syms.push(s);
            }
        }
    }
    param_syms.sort();

    let mut prob = SdpProblem::new();
    let monos = MonomialBasis::total_degree(&param_syms, d_param).monomials;
    let p = declare_symmetric_matrix(&mut prob, n, &monos);
    let eye = VarPolyMatrix::from_polymatrix(&PolyMatrix::identity(n));
    let groups = vec![param_syms.clone()];

    // P(y) - I.
    sos::psd_on_region(&mut prob, &p.sub(&eye), &groups, region);
    // -(A' P + P A + I).
    let target = p
        .left_mul(&a.transpose())
        .add(&p.right_mul(a))
        .add(&eye)
        .neg();
    sos::psd_on_region(&mut prob, &target, &groups, region);

    let sol = prob.solve(solve_opts);
    if sol.status == SolveStatus::Feasible {
        (true, Some(p.instantiate(&|v| sol.value_of(v))))
    } else {
        (false, None)
    }
}
