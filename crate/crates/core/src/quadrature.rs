//! Gauss-Legendre rules and tensor-product box averages.

use crate::error::{Error, Result};

/// `q`-point Gauss-Legendre rule on `[-1, 1]`, exact for polynomials of degree `2q - 1`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(q: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::config("quadrature needs at least one point"));
        }
        let mut nodes = vec![0.0; q];
        let mut weights = vec![0.0; q];
        let n = q as f64;
        for i in 0..q.div_ceil(2) {
            // Chebyshev-like initial guess, then Newton on P_q.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(q, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(q, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[q - 1 - i] = x;
            weights[i] = w;
            weights[q - 1 - i] = w;
        }
        if q % 2 == 1 {
            nodes[q / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Average of `f` over the box `[lower, lower + width]` by the tensor-product rule.
    ///
    /// `point` is scratch space of length `lower.len()`.
    pub fn box_average<F>(&self, lower: &[f64], width: &[f64], point: &mut [f64], f: &F) -> f64
    where
        F: Fn(&[f64]) -> f64 + ?Sized,
    {
        let dim = lower.len();
        let q = self.len();
        let total = q.pow(dim as u32);
        let mut sum = 0.0;
        let mut digits = vec![0usize; dim];
        for _ in 0..total {
            let mut w = 1.0;
            for k in 0..dim {
                let j = digits[k];
                point[k] = lower[k] + 0.5 * width[k] * (self.nodes[j] + 1.0);
                w *= self.weights[j];
            }
            sum += w * f(point);
            for k in (0..dim).rev() {
                digits[k] += 1;
                if digits[k] < q {
                    break;
                }
                digits[k] = 0;
            }
        }
        // weights on [-1,1]^d sum to 2^d
        sum / f64::powi(2.0, dim as i32)
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_rules() {
        let r = GaussLegendre::new(1).unwrap();
        assert_eq!(r.nodes(), &[0.0]);
        assert!((r.weights()[0] - 2.0).abs() < 1e-15);

        let r = GaussLegendre::new(2).unwrap();
        let a = 1.0 / 3f64.sqrt();
        assert!((r.nodes()[0] + a).abs() < 1e-15 && (r.nodes()[1] - a).abs() < 1e-15);
        assert!((r.weights()[0] - 1.0).abs() < 1e-15);

        let r = GaussLegendre::new(3).unwrap();
        assert!((r.nodes()[2] - 0.6f64.sqrt()).abs() < 1e-15);
        assert!((r.weights()[1] - 8.0 / 9.0).abs() < 1e-15);
        assert!((r.weights()[0] - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn exact_up_to_degree_2q_minus_1() {
        for q in 1..=8 {
            let r = GaussLegendre::new(q).unwrap();
            let sum_w: f64 = r.weights().iter().sum();
            assert!((sum_w - 2.0).abs() < 1e-13);
            for deg in 0..(2 * q) {
                let approx: f64 = r
                    .nodes()
                    .iter()
                    .zip(r.weights())
                    .map(|(x, w)| w * x.powi(deg as i32))
                    .sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-13, "q={q} deg={deg}");
            }
        }
    }

    #[test]
    fn zero_points_rejected() {
        assert!(GaussLegendre::new(0).is_err());
    }
}
