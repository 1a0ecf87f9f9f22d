//! Gauss-Legendre rules on the reference interval and tensor rules on squares.

use std::f64::consts::PI;

/// Gauss-Legendre rule with `n` points on [-1, 1], nodes ascending.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the rule by Newton iteration on the Legendre polynomial `P_n`.
    ///
    /// Panics if `n == 0`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre rule needs at least one point");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi's initial guess for the i-th largest root.
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[n - 1 - i] = x;
            nodes[i] = -x;
            weights[n - 1 - i] = w;
            weights[i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to [0, 1].
    pub fn unit_interval(&self) -> Vec<(f64, f64)> {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
    }

    /// Integrates `f` over [a, b].
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(mid + half * x)).sum::<f64>() * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor-product rule on the unit square: `(xi, eta, weight)` triples.
#[derive(Clone, Debug)]
pub struct SquareRule {
    points: Vec<(f64, f64, f64)>,
}

impl SquareRule {
    pub fn new(order: usize) -> Self {
        let line = GaussLegendre::new(order).unit_interval();
        let mut points = Vec::with_capacity(order * order);
        for &(eta, wy) in &line {
            for &(xi, wx) in &line {
                points.push((xi, eta, wx * wy));
            }
        }
        Self { points }
    }

    pub fn points(&self) -> &[(f64, f64, f64)] {
        &self.points
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_rule() {
        let g = GaussLegendre::new(2);
        let r = 1.0 / 3f64.sqrt();
        assert!((g.nodes[0] + r).abs() < 1e-15);
        assert!((g.nodes[1] - r).abs() < 1e-15);
        assert!((g.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_for_degree_2n_minus_1() {
        for n in 1..=12 {
            let g = GaussLegendre::new(n);
            let wsum: f64 = g.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n={n}");
            for deg in 0..2 * n {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let approx = g.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                assert!((approx - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn nodes_ascending() {
        let g = GaussLegendre::new(7);
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.nodes[3], 0.0);
    }

    #[test]
    fn square_rule_integrates_bilinear_products() {
        let rule = SquareRule::new(3);
        let v: f64 = rule.points().iter().map(|&(x, y, w)| w * x * x * y * y * y).sum();
        assert!((v - 1.0 / 12.0).abs() < 1e-15);
    }
}
