//! Matrices of polynomials and their piecewise variants.

use super::poly::{Poly, Rat};
use crate::symbol::Symbol;

/// A dense n-by-m matrix of polynomials (row major).
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    pub rows: usize,
    pub cols: usize,
    entries: Vec<Poly>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize) -> PolyMatrix {
        PolyMatrix {
            rows,
            cols,
            entries: vec![Poly::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> PolyMatrix {
        let mut m = PolyMatrix::zeros(n, n);
        for i in 0..n {
            *m.entry_mut(i, i) = Poly::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Poly) -> PolyMatrix {
        let mut m = PolyMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                *m.entry_mut(i, j) = f(i, j);
            }
        }
        m
    }

    /// Constant scalar matrix from row-major rational values.
    pub fn from_scalars(rows: usize, cols: usize, vals: &[Rat]) -> PolyMatrix {
        assert_eq!(vals.len(), rows * cols);
        PolyMatrix {
            rows,
            cols,
            entries: vals.iter().map(|v| Poly::constant(v.clone())).collect(),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> &Poly {
        &self.entries[i * self.cols + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut Poly {
        &mut self.entries[i * self.cols + j]
    }

    pub fn transpose(&self) -> PolyMatrix {
        PolyMatrix::from_fn(self.cols, self.rows, |i, j| self.entry(j, i).clone())
    }

    pub fn add(&self, other: &PolyMatrix) -> PolyMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        PolyMatrix::from_fn(self.rows, self.cols, |i, j| {
            self.entry(i, j).add(other.entry(i, j))
        })
    }

    pub fn sub(&self, other: &PolyMatrix) -> PolyMatrix {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> PolyMatrix {
        PolyMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).neg())
    }

    pub fn scale(&self, c: &Rat) -> PolyMatrix {
        PolyMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).scale(c))
    }

    pub fn mul(&self, other: &PolyMatrix) -> PolyMatrix {
        assert_eq!(self.cols, other.rows);
        PolyMatrix::from_fn(self.rows, other.cols, |i, j| {
            let mut acc = Poly::zero();
            for k in 0..self.cols {
                acc = acc.add(&self.entry(i, k).mul(other.entry(k, j)));
            }
            acc
        })
    }

    pub fn mul_poly(&self, p: &Poly) -> PolyMatrix {
        PolyMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).mul(p))
    }

    pub fn map(&self, f: impl Fn(&Poly) -> Poly) -> PolyMatrix {
        PolyMatrix::from_fn(self.rows, self.cols, |i, j| f(self.entry(i, j)))
    }

    pub fn substitute_num(&self, v: Symbol, value: &Rat) -> PolyMatrix {
        self.map(|p| p.substitute_num(v, value))
    }

    pub fn is_symmetric(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if self.entry(i, j) != self.entry(j, i) {
                    return false;
                }
            }
        }
        true
    }

    pub fn max_degree(&self) -> u32 {
        self.entries.iter().map(|p| p.degree()).max().unwrap_or(0)
    }

    pub fn max_degree_in_set(&self, vars: &[Symbol]) -> u32 {
        self.entries
            .iter()
            .map(|p| p.degree_in_set(vars))
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.entries
            .iter()
            .map(|p| p.max_abs_coeff())
            .fold(0.0, f64::max)
    }

    /// Evaluates to a numeric matrix at a floating-point assignment.
    pub fn eval_f64(&self, point: &std::collections::BTreeMap<Symbol, f64>) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).eval_f64(point))
    }
}

/// A matrix-valued function on `[-tau_K, 0]` given by one polynomial matrix
/// per delay interval `[-tau_i, -tau_{i-1}]`. `breaks` stores
/// `0 = tau_0 < tau_1 < ... < tau_K`, so piece `i` (0-based) lives on
/// `[-breaks[i+1], -breaks[i]]`.
#[derive(Debug, Clone)]
pub struct PiecewisePolyMatrix {
    pub breaks: Vec<Rat>,
    pub pieces: Vec<PolyMatrix>,
}

impl PiecewisePolyMatrix {
    pub fn new(breaks: Vec<Rat>, pieces: Vec<PolyMatrix>) -> PiecewisePolyMatrix {
        assert_eq!(breaks.len(), pieces.len() + 1);
        assert!(
            breaks.windows(2).all(|w| w[0] < w[1]),
            "delay breakpoints must be strictly increasing"
        );
        PiecewisePolyMatrix { breaks, pieces }
    }

    pub fn num_pieces(&self) -> usize {
        self.pieces.len()
    }

    /// Interval of piece `i` as `(lower, upper) = (-tau_i, -tau_{i-1})`.
    pub fn interval(&self, i: usize) -> (Rat, Rat) {
        (-self.breaks[i + 1].clone(), -self.breaks[i].clone())
    }

    /// Piece index whose interval contains `theta` in `[-tau_K, 0]`.
    pub fn piece_at(&self, theta: f64) -> usize {
        use super::poly::rat_to_f64;
        for i in 0..self.pieces.len() {
            let (lo, hi) = self.interval(i);
            if theta >= rat_to_f64(&lo) - 1e-12 && theta <= rat_to_f64(&hi) + 1e-12 {
                return i;
            }
        }
        self.pieces.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::poly::{rat, rat_from_int};

    #[test]
    fn symmetric_detection() {
        let th = Symbol::new("pm_theta");
        let t = Poly::var(th);
        let mut m = PolyMatrix::zeros(2, 2);
        *m.entry_mut(0, 0) = Poly::one();
        *m.entry_mut(0, 1) = t.clone();
        *m.entry_mut(1, 0) = t.clone();
        *m.entry_mut(1, 1) = t.pow(2);
        assert!(m.is_symmetric());
        *m.entry_mut(1, 0) = t.pow(3);
        assert!(!m.is_symmetric());
    }

    #[test]
    fn piecewise_tiling() {
        let breaks = vec![rat_from_int(0), rat(1, 2), rat_from_int(1)];
        let pw = PiecewisePolyMatrix::new(breaks, vec![PolyMatrix::identity(1); 2]);
        assert_eq!(pw.interval(0), (rat(-1, 2), rat_from_int(0)));
        assert_eq!(pw.interval(1), (rat_from_int(-1), rat(-1, 2)));
        assert_eq!(pw.piece_at(-0.25), 0);
        assert_eq!(pw.piece_at(-0.75), 1);
    }
}
