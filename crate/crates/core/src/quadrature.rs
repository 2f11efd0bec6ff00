//! Gauss-Legendre rules and an adaptive bisection integrator.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            // Tricomi's initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
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

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut acc = CompensatedSum::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(mid + half * x));
        }
        half * acc.value()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Settings of the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    /// Nodes of the base Gauss-Legendre rule.
    pub nodes: usize,
    /// Absolute acceptance threshold between a panel and its two halves.
    pub tolerance: f64,
    pub max_depth: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes: 20,
            tolerance: 1e-12,
            max_depth: 40,
        }
    }
}

/// Adaptive Gauss-Legendre integration with interval bisection.
///
/// A panel is accepted once the single-panel estimate and the sum over its
/// two halves differ by less than the panel's share of the tolerance.
#[derive(Debug, Clone)]
pub struct AdaptiveIntegrator {
    rule: GaussLegendre,
    cfg: QuadratureConfig,
}

impl AdaptiveIntegrator {
    pub fn new(cfg: QuadratureConfig) -> Self {
        Self {
            rule: GaussLegendre::new(cfg.nodes.max(1)),
            cfg,
        }
    }

    pub fn config(&self) -> &QuadratureConfig {
        &self.cfg
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let whole = self.rule.integrate(a, b, &mut f);
        let mut acc = CompensatedSum::new();
        self.refine(a, b, whole, self.cfg.tolerance, 0, &mut f, &mut acc)?;
        Ok(acc.value())
    }

    #[allow(clippy::too_many_arguments)]
    fn refine<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: usize,
        f: &mut F,
        acc: &mut CompensatedSum,
    ) -> Result<()> {
        let m = 0.5 * (a + b);
        let left = self.rule.integrate(a, m, &mut *f);
        let right = self.rule.integrate(m, b, &mut *f);
        let refined = left + right;
        if !refined.is_finite() {
            return Err(Error::QuadratureFailure {
                detail: format!("non-finite integrand on [{a}, {b}]"),
            });
        }
        if (refined - whole).abs() < tol {
            acc.add(left);
            acc.add(right);
            return Ok(());
        }
        if depth >= self.cfg.max_depth {
            return Err(Error::QuadratureFailure {
                detail: format!(
                    "no convergence on [{a}, {b}] after {depth} bisections (difference {:e})",
                    (refined - whole).abs()
                ),
            });
        }
        self.refine(a, m, left, 0.5 * tol, depth + 1, f, acc)?;
        self.refine(m, b, right, 0.5 * tol, depth + 1, f, acc)
    }
}
