//! Gauss–Legendre rules and the velocity averages `⟨·⟩`.
//!
//! In 1D the average runs over the half slab `v ∈ [0, 1]` with unit measure.
//! In 2D velocities live on the quarter unit circle, parameterised by the
//! angle `θ ∈ [0, π/2]` as `(ξ, η) = (cos θ, sin θ)`; the average carries the
//! normalisation `2/π`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl QuadratureRule {
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

    pub fn interval(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Σ weights·values.
    pub fn weighted_sum(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.nodes.len() {
            return Err(Error::InvalidArgument(format!("expected {} samples, got {}", self.nodes.len(), values.len())));
        }
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `n`-point Gauss–Legendre rule on `[a, b]`, nodes strictly increasing.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid interval [{a}, {b}]")));
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut ref_nodes = vec![0.0; n];
    let mut ref_weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Roots come out descending; mirror them into both halves.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        ref_nodes[i] = -x;
        ref_nodes[n - 1 - i] = x;
        ref_weights[i] = w;
        ref_weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        ref_nodes[n / 2] = 0.0;
    }
    let nodes = ref_nodes.iter().map(|&x| mid + half * x).collect();
    let weights = ref_weights.iter().map(|&w| half * w).collect();
    Ok(QuadratureRule { nodes, weights, lower: a, upper: b })
}

/// The slab rule on `v ∈ [0, 1]`.
pub fn slab_rule(n: usize) -> Result<QuadratureRule> {
    gauss_legendre(n, 0.0, 1.0)
}

/// The angular rule on `θ ∈ [0, π/2]`.
pub fn quarter_circle_rule(n: usize) -> Result<QuadratureRule> {
    gauss_legendre(n, 0.0, FRAC_PI_2)
}

/// `⟨g⟩ = ∫₀¹ g dv` for samples at the nodes of a rule on `[0, 1]`.
pub fn average_1d(values: &[f64], rule: &QuadratureRule) -> Result<f64> {
    rule.weighted_sum(values)
}

/// `⟨g⟩ = (2/π)∫₀^{π/2} g dθ` for samples at the nodes of a rule on `[0, π/2]`.
pub fn average_2d(values: &[f64], rule: &QuadratureRule) -> Result<f64> {
    Ok(2.0 / PI * rule.weighted_sum(values)?)
}

/// Velocity set used by the averaging operator: sample coordinates plus
/// weights that already include the normalisation of `⟨·⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocitySet {
    /// `v` in 1D; `(ξ, η)` pairs in 2D.
    pub coords: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub rule: QuadratureRule,
}

impl VelocitySet {
    pub fn slab(n: usize) -> Result<Self> {
        let rule = slab_rule(n)?;
        Ok(Self { coords: rule.nodes().iter().map(|&v| [v, 0.0]).collect(), weights: rule.weights().to_vec(), rule })
    }

    pub fn quarter_circle(n: usize) -> Result<Self> {
        let rule = quarter_circle_rule(n)?;
        Ok(Self {
            coords: rule.nodes().iter().map(|&th| [th.cos(), th.sin()]).collect(),
            weights: rule.weights().iter().map(|w| 2.0 / PI * w).collect(),
            rule,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn xi(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c[0]).collect()
    }

    pub fn eta(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c[1]).collect()
    }

    pub fn average(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::InvalidArgument(format!("expected {} samples, got {}", self.len(), values.len())));
        }
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Adaptive Simpson, used as an independent oracle.
    fn adaptive_simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
            let c = 0.5 * (a + b);
            (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b))
        }
        fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let c = 0.5 * (a + b);
            let left = simpson(f, a, c);
            let right = simpson(f, c, b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, c, left, tol / 2.0, depth - 1) + rec(f, c, b, right, tol / 2.0, depth - 1)
        }
        rec(&f, a, b, simpson(&f, a, b), tol, 40)
    }

    #[test]
    fn midpoint_rule() {
        let r = gauss_legendre(1, 0.0, 1.0).unwrap();
        assert_eq!(r.nodes(), &[0.5]);
        assert_eq!(r.weights(), &[1.0]);
    }

    #[test]
    fn invalid_arguments() {
        assert!(gauss_legendre(0, 0.0, 1.0).is_err());
        assert!(gauss_legendre(4, 1.0, 1.0).is_err());
        assert!(gauss_legendre(4, 2.0, 1.0).is_err());
        let r = slab_rule(4).unwrap();
        assert!(average_1d(&[1.0; 3], &r).is_err());
        assert!(average_2d(&[1.0; 5], &quarter_circle_rule(4).unwrap()).is_err());
    }

    #[test]
    fn sixteen_point_cubic() {
        let r = slab_rule(16).unwrap();
        assert!((r.integrate(|v| v * v * v) - 0.25).abs() <= 1e-14);
    }

    #[test]
    fn gaussian_half_mass() {
        let g = |v: f64| (-v * v / 2.0).exp() / (2.0 * PI).sqrt();
        let oracle = adaptive_simpson(g, 0.0, 1.0, 1e-13);
        assert!((oracle - 0.3413447).abs() <= 1e-7);
        let r = slab_rule(16).unwrap();
        assert!((r.integrate(g) - oracle).abs() <= 1e-9);
    }

    #[test]
    fn slab_averages() {
        let r = slab_rule(16).unwrap();
        let at = |f: fn(f64) -> f64| r.nodes().iter().map(|&v| f(v)).collect::<Vec<_>>();
        assert!((average_1d(&at(|_| 1.0), &r).unwrap() - 1.0).abs() <= 1e-14);
        assert!((average_1d(&at(|v| v * v), &r).unwrap() - 1.0 / 3.0).abs() <= 1e-14);
        assert!((average_1d(&at(|v| v.powi(4)), &r).unwrap() - 0.2).abs() <= 1e-14);
    }

    #[test]
    fn quarter_circle_averages() {
        let r = quarter_circle_rule(16).unwrap();
        let at = |f: fn(f64) -> f64| r.nodes().iter().map(|&t| f(t)).collect::<Vec<_>>();
        assert!((average_2d(&at(|_| 1.0), &r).unwrap() - 1.0).abs() <= 1e-13);
        assert!((average_2d(&at(|t| t.cos().powi(2)), &r).unwrap() - 0.5).abs() <= 1e-13);
        assert!((average_2d(&at(|t| t.cos() * t.sin()), &r).unwrap() - 1.0 / PI).abs() <= 1e-13);
        let vs = VelocitySet::quarter_circle(16).unwrap();
        let xi2: Vec<f64> = vs.xi().iter().map(|x| x * x).collect();
        assert!((vs.average(&xi2).unwrap() - 0.5).abs() <= 1e-13);
    }

    #[test]
    fn monomial_exactness_up_to_degree_2n_minus_1() {
        for n in [1usize, 2, 5, 8, 16, 24] {
            let r = gauss_legendre(n, 0.0, 1.0).unwrap();
            for d in 0..(2 * n) as i32 {
                let exact = 1.0 / (d as f64 + 1.0);
                let got = r.integrate(|x| x.powi(d));
                assert!((got - exact).abs() <= 1e-13 * exact, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn weights_positive_nodes_increasing() {
        for n in 1..40 {
            let r = gauss_legendre(n, -0.5, 2.0).unwrap();
            assert!(r.weights().iter().all(|&w| w > 0.0));
            assert!(r.nodes().windows(2).all(|p| p[0] < p[1]));
            let total: f64 = r.weights().iter().sum();
            assert!((total - 2.5).abs() <= 1e-13);
        }
    }

    proptest! {
        #[test]
        fn average_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, seed in 0u64..1000) {
            let r = slab_rule(16).unwrap();
            let f: Vec<f64> = r.nodes().iter().map(|v| (v * (seed as f64 + 1.0)).sin()).collect();
            let g: Vec<f64> = r.nodes().iter().map(|v| (v + seed as f64 * 0.01).exp()).collect();
            let comb: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
            let lhs = average_1d(&comb, &r).unwrap();
            let rhs = a * average_1d(&f, &r).unwrap() + b * average_1d(&g, &r).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));
        }

        #[test]
        fn average_preserves_sign(vals in proptest::collection::vec(0.0..10.0f64, 16)) {
            let r = quarter_circle_rule(16).unwrap();
            prop_assert!(average_2d(&vals, &r).unwrap() >= 0.0);
        }
    }
}
