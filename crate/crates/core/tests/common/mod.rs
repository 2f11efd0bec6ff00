//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// `2 int_0^1 x^2 sin(pi x) sin(k pi x) dx` in closed form.
pub fn dirichlet_ground_coupling(k: usize) -> f64 {
    if k == 1 {
        (2.0 * PI * PI - 3.0) / (6.0 * PI * PI)
    } else {
        let kf = k as f64;
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        8.0 * kf * sign / (PI * PI * (kf * kf - 1.0).powi(2))
    }
}

/// `int_0^T exp(a (t - T)) exp(b (t - T)) dt`.
pub fn gram_entry(a: f64, b: f64, t: f64) -> f64 {
    let s = a + b;
    if s == 0.0 {
        t
    } else {
        -(-s * t).exp_m1() / s
    }
}

/// Shifted Dirichlet exponents `(k^2 - 1) pi^2`.
pub fn shifted_dirichlet(n: usize) -> Vec<f64> {
    (1..=n).map(|k| ((k * k) as f64 - 1.0) * PI * PI).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
