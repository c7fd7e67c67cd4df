//! Gauss-Legendre quadrature.
//!
//! Nodes and weights come from the Golub-Welsch eigenvalue method on the
//! Jacobi matrix; an n-point rule integrates polynomials of degree
//! `2n - 1` exactly, which is what the functional-evaluation oracle relies
//! on.

use nalgebra::DMatrix;

/// An n-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> GaussLegendre {
        assert!(n >= 1);
        if n == 1 {
            return GaussLegendre {
                nodes: vec![0.0],
                weights: vec![2.0],
            };
        }
        // Symmetric tridiagonal Jacobi matrix: off-diagonal
        // beta_k = k / sqrt(4k^2 - 1).
        let mut j = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
            j[(k - 1, k)] = b;
            j[(k, k - 1)] = b;
        }
        let es = nalgebra::SymmetricEigen::new(j);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let w = 2.0 * es.eigenvectors[(0, i)].powi(2);
                (es.eigenvalues[i], w)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        GaussLegendre {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        half * acc
    }

    /// Integrates `f(theta, omega)` over `[a, b] x [a, b]` by tensor
    /// quadrature.
    pub fn integrate2(&self, a: f64, b: f64, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, wx) in self.nodes.iter().zip(&self.weights) {
            let tx = mid + half * x;
            for (y, wy) in self.nodes.iter().zip(&self.weights) {
                acc += wx * wy * f(tx, mid + half * y);
            }
        }
        half * half * acc
    }
}

/// Rule exact for polynomial integrands of degree `deg`.
pub fn rule_for_degree(deg: usize) -> GaussLegendre {
    GaussLegendre::new(deg / 2 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_polynomials() {
        for n in 1..=12usize {
            let gl = GaussLegendre::new(n);
            for deg in 0..=(2 * n - 1) {
                let got = gl.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                let expect = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!(
                    (got - expect).abs() < 1e-12,
                    "n={n} deg={deg}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn shifted_interval_and_tensor() {
        let gl = GaussLegendre::new(8);
        let v = gl.integrate(-2.0, 0.5, |x| 3.0 * x * x);
        assert!((v - (0.5f64.powi(3) - (-2.0f64).powi(3))).abs() < 1e-12);
        let v2 = gl.integrate2(-1.0, 0.0, |x, y| x * y);
        assert!((v2 - 0.25).abs() < 1e-12);
    }
}
