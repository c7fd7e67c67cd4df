//! Ordered monomial bases for Gram-matrix parameterizations.

use super::monomial::Monomial;
use crate::symbol::Symbol;

/// An ordered vector of monomials in graded lexicographic order. Gram
/// matrices are indexed against this ordering, so it must be deterministic.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    pub vars: Vec<Symbol>,
    pub monomials: Vec<Monomial>,
}

impl MonomialBasis {
    /// All monomials of total degree at most `d` in `vars`.
    pub fn total_degree(vars: &[Symbol], d: usize) -> MonomialBasis {
        Self::capped_groups(&[(vars.to_vec(), d)])
    }

    /// Monomials with a separate total-degree cap per variable group
    /// (anisotropic degrees: e.g. state variables up to `d_s`, the kernel
    /// argument up to `d_theta`).
    pub fn capped_groups(groups: &[(Vec<Symbol>, usize)]) -> MonomialBasis {
        let mut per_group: Vec<Vec<Monomial>> = Vec::new();
        for (vars, cap) in groups {
            per_group.push(enumerate_total_degree(vars, *cap));
        }
        let mut monomials = vec![Monomial::one()];
        for group in per_group {
            let mut next = Vec::with_capacity(monomials.len() * group.len());
            for m in &monomials {
                for g in &group {
                    next.push(m.mul(g));
                }
            }
            monomials = next;
        }
        monomials.sort();
        monomials.dedup();
        let mut vars: Vec<Symbol> = groups.iter().flat_map(|(v, _)| v.clone()).collect();
        vars.sort();
        vars.dedup();
        MonomialBasis { vars, monomials }
    }

    /// Drops monomials for which `keep` returns false (e.g. the constant
    /// monomial when a functional must vanish at the origin).
    pub fn filter(mut self, keep: impl Fn(&Monomial) -> bool) -> MonomialBasis {
        self.monomials.retain(|m| keep(m));
        self
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }
}

fn enumerate_total_degree(vars: &[Symbol], d: usize) -> Vec<Monomial> {
    let mut out = Vec::new();
    let mut exps = vec![0u32; vars.len()];
    enumerate_rec(vars, d as u32, 0, &mut exps, &mut out);
    out.sort();
    out
}

fn enumerate_rec(
    vars: &[Symbol],
    remaining: u32,
    ix: usize,
    exps: &mut Vec<u32>,
    out: &mut Vec<Monomial>,
) {
    if ix == vars.len() {
        out.push(Monomial::from_powers(
            vars.iter().copied().zip(exps.iter().copied()),
        ));
        return;
    }
    for e in 0..=remaining {
        exps[ix] = e;
        enumerate_rec(vars, remaining - e, ix + 1, exps, out);
    }
    exps[ix] = 0;
}

/// binomial(n, k) as usize; used to check basis sizes.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for i in 0..k {
        num *= (n - i) as u128;
        den *= (i + 1) as u128;
    }
    (num / den) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::symbol_family;

    #[test]
    fn univariate_basis_lists_powers() {
        let th = Symbol::new("basis_theta");
        let b = MonomialBasis::total_degree(&[th], 4);
        assert_eq!(b.len(), 5);
        for (k, m) in b.monomials.iter().enumerate() {
            assert_eq!(m.degree_in(th), k as u32);
        }
    }

    #[test]
    fn degree_zero_is_constant() {
        let x = Symbol::new("basis_x0");
        let b = MonomialBasis::total_degree(&[x], 0);
        assert_eq!(b.len(), 1);
        assert!(b.monomials[0].is_one());
    }

    #[test]
    fn trivariate_count_matches_binomial() {
        let xs = symbol_family("basis_v", 3);
        let b = MonomialBasis::total_degree(&xs, 2);
        assert_eq!(b.len(), 10);
        assert_eq!(binomial(3 + 2, 2), 10);
    }

    #[test]
    fn basis_size_binomial_identity() {
        for v in 1..=4usize {
            for d in 0..=5usize {
                let xs = symbol_family("basis_w", v);
                let b = MonomialBasis::total_degree(&xs[..v], d);
                assert_eq!(b.len(), binomial(v + d, d), "v={v} d={d}");
            }
        }
    }

    #[test]
    fn capped_groups_are_tensor_products() {
        let th = Symbol::new("basis_cg_t");
        let xs = symbol_family("basis_cg_x", 2);
        let b = MonomialBasis::capped_groups(&[(xs.clone(), 2), (vec![th], 1)]);
        // 6 state monomials of degree <= 2 times 2 powers of theta
        assert_eq!(b.len(), 12);
        assert!(b.monomials.iter().all(|m| m.degree_in(th) <= 1));
        assert!(b.monomials.iter().all(|m| m.degree_in_set(&xs) <= 2));
    }
}
