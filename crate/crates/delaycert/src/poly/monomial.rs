//! Sparse monomials over globally interned symbols.

use crate::symbol::Symbol;
use std::cmp::Ordering;
use std::fmt;

/// A product of variables raised to positive powers, stored sparsely and
/// sorted by symbol. The empty product is the constant monomial `1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial {
    pows: Vec<(Symbol, u32)>,
}

impl Monomial {
    pub fn one() -> Monomial {
        Monomial { pows: Vec::new() }
    }

    pub fn var(v: Symbol) -> Monomial {
        Monomial { pows: vec![(v, 1)] }
    }

    /// Builds from (symbol, power) pairs; need not be sorted or deduplicated.
    pub fn from_powers(pairs: impl IntoIterator<Item = (Symbol, u32)>) -> Monomial {
        let mut pows: Vec<(Symbol, u32)> = Vec::new();
        for (s, p) in pairs {
            if p == 0 {
                continue;
            }
            match pows.iter_mut().find(|(t, _)| *t == s) {
                Some((_, q)) => *q += p,
                None => pows.push((s, p)),
            }
        }
        pows.sort_by_key(|(s, _)| *s);
        Monomial { pows }
    }

    pub fn is_one(&self) -> bool {
        self.pows.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.pows.iter().map(|(_, p)| p).sum()
    }

    pub fn degree_in(&self, v: Symbol) -> u32 {
        self.pows
            .iter()
            .find(|(s, _)| *s == v)
            .map(|(_, p)| *p)
            .unwrap_or(0)
    }

    /// Total degree restricted to a set of variables.
    pub fn degree_in_set(&self, vars: &[Symbol]) -> u32 {
        self.pows
            .iter()
            .filter(|(s, _)| vars.contains(s))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn powers(&self) -> &[(Symbol, u32)] {
        &self.pows
    }

    pub fn contains(&self, v: Symbol) -> bool {
        self.degree_in(v) > 0
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut pows = Vec::with_capacity(self.pows.len() + other.pows.len());
        let (mut i, mut j) = (0, 0);
        while i < self.pows.len() && j < other.pows.len() {
            match self.pows[i].0.cmp(&other.pows[j].0) {
                Ordering::Less => {
                    pows.push(self.pows[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    pows.push(other.pows[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    pows.push((self.pows[i].0, self.pows[i].1 + other.pows[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        pows.extend_from_slice(&self.pows[i..]);
        pows.extend_from_slice(&other.pows[j..]);
        Monomial { pows }
    }

    /// Removes `v` entirely, returning its former power.
    pub fn without(&self, v: Symbol) -> (Monomial, u32) {
        let mut pows = self.pows.clone();
        let mut power = 0;
        pows.retain(|(s, p)| {
            if *s == v {
                power = *p;
                false
            } else {
                true
            }
        });
        (Monomial { pows }, power)
    }
}

/// Graded lexicographic order: lower total degree first; within a grade the
/// monomial with the higher power on the earliest symbol comes first, so a
/// univariate basis lists as `1, x, x^2, ...` and a bivariate grade as
/// `x^2, xy, y^2`.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        let (mut i, mut j) = (0, 0);
        loop {
            match (self.pows.get(i), other.pows.get(j)) {
                (None, None) => return Ordering::Equal,
                // Exhausted earlier means remaining weight sits on later
                // symbols, so the other monomial has more weight early on.
                (None, Some(_)) => return Ordering::Greater,
                (Some(_), None) => return Ordering::Less,
                (Some((sa, pa)), Some((sb, pb))) => match sa.cmp(sb) {
                    // A power on an earlier symbol outranks none at all.
                    Ordering::Less => return Ordering::Less,
                    Ordering::Greater => return Ordering::Greater,
                    Ordering::Equal => {
                        if pa != pb {
                            // Higher power on this (earliest differing)
                            // symbol sorts earlier.
                            return pb.cmp(pa);
                        }
                        i += 1;
                        j += 1;
                    }
                },
            }
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pows.is_empty() {
            return write!(f, "1");
        }
        let mut first = true;
        for (s, p) in &self.pows {
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if *p == 1 {
                write!(f, "{s}")?;
            } else {
                write!(f, "{s}^{p}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_order() {
        let x = Symbol::new("mono_x");
        let y = Symbol::new("mono_y");
        let m = |px, py| Monomial::from_powers([(x, px), (y, py)]);
        let mut ms = vec![m(0, 2), m(1, 1), m(2, 0), m(0, 0), m(0, 1), m(1, 0)];
        ms.sort();
        assert_eq!(
            ms,
            vec![m(0, 0), m(1, 0), m(0, 1), m(2, 0), m(1, 1), m(0, 2)]
        );
    }

    #[test]
    fn mul_merges_powers() {
        let x = Symbol::new("mono_mx");
        let y = Symbol::new("mono_my");
        let a = Monomial::from_powers([(x, 2)]);
        let b = Monomial::from_powers([(x, 3), (y, 1)]);
        let c = a.mul(&b);
        assert_eq!(c.degree_in(x), 5);
        assert_eq!(c.degree_in(y), 1);
        assert_eq!(c.degree(), 6);
    }
}
