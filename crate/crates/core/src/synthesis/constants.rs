//! Theoretical constants of the local construction, evaluated in the log
//! domain. All series are truncated at the model's `N` modes; an analytic
//! bound on the discarded tail is reported next to each truncated value.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::numeric::{log_grid, log_sum_exp};
use crate::quadrature::{AdaptiveIntegrator, QuadratureConfig};
use crate::spectral::SpectralModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstantsConfig {
    /// The constant `C-bar` of the biorthogonal norm bound.
    pub c_bar: f64,
    /// Fixed `C_K`; calibrated when absent.
    pub c_k: Option<f64>,
    /// Fixed `C_M`; calibrated when absent.
    pub c_m: Option<f64>,
    /// Log-spaced calibration grid `[lo, hi]` with `points` nodes.
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            c_bar: 1.0,
            c_k: None,
            c_m: None,
            grid_lo: 1e-3,
            grid_hi: 1.0,
            grid_points: 61,
        }
    }
}

/// `ln C_alpha^2(T)`. The two branches do not agree at `T = 1/alpha^2`, where
/// the first stage of a schedule with `T_f = T_alpha` sits; a relative slack of
/// 1e-12 keeps that point on the first (larger) branch despite rounding.
pub fn ln_c_alpha_sq(c_bar: f64, alpha: f64, t: f64) -> f64 {
    let a2 = alpha * alpha;
    if t <= (1.0 + 1e-12) / a2 {
        c_bar.ln() + (1.0 / t + 1.0 / (t * t * a2)).ln() + c_bar / (t * a2)
    } else {
        2.0 * c_bar.ln() + a2.ln()
    }
}

pub fn c_alpha(c_bar: f64, alpha: f64, t: f64) -> f64 {
    (0.5 * ln_c_alpha_sq(c_bar, alpha, t)).exp()
}

/// Truncated series `sum_k exp(-2 mu_k T + a sqrt(mu_k)) / c_1k^2` and a bound
/// on its tail over `k > N`, both as logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogSeries {
    pub ln_truncated: f64,
    pub ln_tail_bound: f64,
}

pub fn ln_weighted_series(model: &SpectralModel, t: f64, a: f64) -> LogSeries {
    let terms: Vec<f64> = model
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, mu)| {
            let c = model.coupling[0][k];
            -2.0 * mu * t + a * mu.max(0.0).sqrt() - 2.0 * c.abs().ln()
        })
        .collect();
    LogSeries {
        ln_truncated: log_sum_exp(&terms),
        ln_tail_bound: ln_tail_bound(model, t, a),
    }
}

/// Bound on `sum_{k>N} exp(-2 mu_k T + a sqrt(mu_k)) / c_1k^2`.
///
/// With `s = sqrt(lambda_k - lambda_1)` (original spectrum), the declared
/// hypotheses give `s_{k+1} - s_k >= alpha` and `1/c_1k^2 <= lambda_k^{2q}/b^2`.
/// Writing `mu = s^2 + delta` and `lambda = s^2 + lambda_1 <= (s + r)^2` with
/// `r = sqrt(lambda_1)`, each term is at most `exp(h(s))` with
///
/// ```text
/// h(s) = -2T s^2 + a s + 4q ln(s + r) - 2T delta + a sqrt(delta) - 2 ln b,
/// ```
///
/// which is concave. For a unimodal function sampled at points spaced at least
/// `alpha` apart beyond `s_N`, the sum is at most `2 max h + (1/alpha) int h`.
pub fn ln_tail_bound(model: &SpectralModel, t: f64, a: f64) -> f64 {
    let original = model.original_eigenvalues();
    let l1 = original[0];
    let delta = (l1 - model.shift).max(0.0);
    let r = l1.max(0.0).sqrt();
    let q = model.dispersion_q;
    let c0 = -2.0 * t * delta + a * delta.sqrt() - 2.0 * model.dispersion_b.ln();
    let h = |s: f64| -2.0 * t * s * s + a * s + 4.0 * q * (s + r).ln() + c0;
    let dh = |s: f64| -4.0 * t * s + a + 4.0 * q / (s + r);
    let s_n = (original[original.len() - 1] - l1).max(0.0).sqrt();

    // maximum of the concave h on [s_N, inf)
    let s_star = if dh(s_n) <= 0.0 {
        s_n
    } else {
        let (mut lo, mut hi) = (s_n, s_n.max(1.0));
        while dh(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dh(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let h_max = h(s_star);

    // beyond s0 the log-slope is at most -1, so the remaining integral is
    // bounded by exp(h(s0)) / |h'(s0)|
    let mut s0 = s_star.max(s_n + 1.0);
    while dh(s0) > -1.0 {
        s0 *= 1.5;
    }
    let quad = AdaptiveIntegrator::new(QuadratureConfig {
        nodes: 20,
        tolerance: 1e-10,
        max_depth: 50,
    });
    let body = quad
        .integrate(s_n, s0, |s| (h(s) - h_max).exp())
        .unwrap_or((s0 - s_n).max(0.0));
    let tail = (h(s0) - h_max).exp() / dh(s0).abs();
    h_max + (2.0 + (body + tail) / model.gap_alpha).ln()
}

/// `Lambda_T` with its tail bound, for the model's spectrum.
pub fn lambda_t(model: &SpectralModel, t: f64, c_bar: f64) -> (f64, f64) {
    let s = ln_weighted_series(model, t, c_bar / model.gap_alpha);
    ((0.5 * s.ln_truncated).exp(), s.ln_tail_bound.exp())
}

/// `M = C-bar (1 + 1/alpha^2)`.
pub fn m_constant(c_bar: f64, alpha: f64) -> f64 {
    c_bar * (1.0 + 1.0 / (alpha * alpha))
}

/// `ln G_M(T)` (truncated) and the log of the tail contribution to `G_M`.
pub fn ln_g_m(model: &SpectralModel, t: f64, c_bar: f64) -> (f64, f64) {
    let m = m_constant(c_bar, model.gap_alpha);
    let s = ln_weighted_series(model, t, m);
    let pre = m.ln() - 2.0 * t.ln() + m / t;
    (pre + s.ln_truncated, pre + s.ln_tail_bound)
}

/// Spectral norm of the truncated coupling, floored at 1.
pub fn c_b(model: &SpectralModel) -> f64 {
    model.coupling_norm().max(1.0)
}

/// Constants that depend on a single stage length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConstants {
    pub t: f64,
    pub c_alpha: f64,
    pub lambda_t: f64,
    pub lambda_t_tail: f64,
    /// `C_alpha(T) Lambda_T`, the factor of the admissibility gate.
    pub gate_factor: f64,
    pub c_3: f64,
    pub c_4: f64,
    pub k: f64,
    pub ln_k: f64,
}

pub fn stage_constants(model: &SpectralModel, t: f64, c_bar: f64, c_b: f64) -> StageConstants {
    let ln_ca2 = ln_c_alpha_sq(c_bar, model.gap_alpha, t);
    let series = ln_weighted_series(model, t, c_bar / model.gap_alpha);
    let ln_l2 = series.ln_truncated;
    // ln(C_alpha^2 Lambda^2)
    let ln_x = ln_ca2 + ln_l2;
    let ln_k2 = 2.0 * c_b.ln()
        + 2.0 * c_b * t.sqrt()
        + (c_b + 1.0) * t
        + ln_x
        + log_sum_exp(&[0.0, c_b.ln() + ln_x]);
    let c_alpha = (0.5 * ln_ca2).exp();
    let lambda_t = (0.5 * ln_l2).exp();
    StageConstants {
        t,
        c_alpha,
        lambda_t,
        lambda_t_tail: series.ln_tail_bound.exp(),
        gate_factor: (0.5 * ln_x).exp(),
        c_3: 2.0 * t.sqrt() * c_b * c_alpha,
        c_4: c_b * ln_ca2.exp(),
        k: (0.5 * ln_k2).exp(),
        ln_k: 0.5 * ln_k2,
    }
}

/// Global constants of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub c_bar: f64,
    pub c_k: f64,
    pub c_m: f64,
    pub c_k_calibrated: bool,
    pub c_m_calibrated: bool,
    /// Spectral norm of the truncated coupling (a lower bound for the norm
    /// of `B`), floored at 1.
    pub c_b: f64,
    pub m: f64,
    pub t_final: f64,
    pub t_tilde: f64,
    /// Constants at `T = T~`, the first stage length.
    pub first_stage: StageConstants,
    pub g_m: f64,
    pub g_m_tail: f64,
    /// `R_T = exp(-pi^2 C_K / T_f)`.
    pub r_t: f64,
    pub ln_r_t: f64,
    /// Bound on `||p||^2` over `[0, T_f]`.
    pub control_norm_sq_bound: f64,
}

/// `C_M = max T ln G_M(T)` over the grid.
pub fn calibrate_c_m(model: &SpectralModel, c_bar: f64, grid: &[f64]) -> f64 {
    grid_max(grid, |t| t * ln_g_m(model, t, c_bar).0)
}

/// `max T ln K(T)` over the grid.
pub fn calibrate_k_exponent(model: &SpectralModel, c_bar: f64, grid: &[f64]) -> f64 {
    let cb = c_b(model);
    grid_max(grid, |t| t * stage_constants(model, t, c_bar, cb).ln_k)
}

/// Maximum of `f` over `[grid[0], grid[last]]`: the grid maximum, with every
/// interior local maximum refined by golden-section search in `ln T` between
/// its neighbours.
fn grid_max(grid: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let values: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
    let mut best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for i in 1..grid.len().saturating_sub(1) {
        if values[i] >= values[i - 1] && values[i] >= values[i + 1] {
            let (mut a, mut b) = (grid[i - 1].ln(), grid[i + 1].ln());
            let g = (5f64.sqrt() - 1.0) / 2.0;
            let mut c = b - g * (b - a);
            let mut d = a + g * (b - a);
            let (mut fc, mut fd) = (f(c.exp()), f(d.exp()));
            for _ in 0..60 {
                if fc >= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - g * (b - a);
                    fc = f(c.exp());
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + g * (b - a);
                    fd = f(d.exp());
                }
            }
            best = best.max(fc).max(fd);
        }
    }
    best
}

/// Evaluates every constant for the schedule with final time `t_final`.
pub fn theoretical_constants(model: &SpectralModel, t_final: f64, cfg: &ConstantsConfig) -> ConstantsReport {
    let grid = log_grid(cfg.grid_lo, cfg.grid_hi, cfg.grid_points.max(2));
    let c_m = cfg.c_m.unwrap_or_else(|| calibrate_c_m(model, cfg.c_bar, &grid));
    let c_k = cfg
        .c_k
        .unwrap_or_else(|| 1.05 * c_m.max(calibrate_k_exponent(model, cfg.c_bar, &grid)));
    let cb = c_b(model);
    let t_tilde = 6.0 * t_final / (PI * PI);
    let (ln_gm, ln_gm_tail) = ln_g_m(model, t_tilde, cfg.c_bar);
    let ln_r_t = -PI * PI * c_k / t_final;
    // exp(-pi^2 C_K/T_f) / (exp(2 pi^2 C_K / (3 T_f)) - 1)
    let control_norm_sq_bound = (ln_r_t - (2.0 * PI * PI * c_k / (3.0 * t_final)).exp_m1().ln()).exp();
    ConstantsReport {
        c_bar: cfg.c_bar,
        c_k,
        c_m,
        c_k_calibrated: cfg.c_k.is_none(),
        c_m_calibrated: cfg.c_m.is_none(),
        c_b: cb,
        m: m_constant(cfg.c_bar, model.gap_alpha),
        t_final,
        t_tilde,
        first_stage: stage_constants(model, t_tilde, cfg.c_bar, cb),
        g_m: ln_gm.exp(),
        g_m_tail: ln_gm_tail.exp(),
        r_t: ln_r_t.exp(),
        ln_r_t,
        control_norm_sq_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_model, SpectralKind};

    fn dirichlet(n: usize) -> SpectralModel {
        build_model(SpectralKind::DirichletHeat, n, &QuadratureConfig::default()).unwrap()
    }

    #[test]
    fn c_alpha_branches() {
        assert!((c_alpha(1.0, PI, 0.5) - PI).abs() < 1e-14);
        let t = 0.05;
        let direct = (1.0 / t + 1.0 / (t * t * PI * PI)) * (1.0 / (t * PI * PI)).exp();
        assert!((c_alpha(1.0, PI, t).powi(2) / direct - 1.0).abs() < 1e-13);
    }

    #[test]
    fn lambda_t_dirichlet_half() {
        let m = dirichlet(8);
        let (l, tail) = lambda_t(&m, 0.5, 1.0);
        let first = ((-PI * PI).exp() * 1.0f64.exp()).sqrt() / m.coupling[0][0].abs();
        assert!((l - 0.0420).abs() < 1e-4);
        assert!(l >= first && l < first * (1.0 + 1e-6));
        assert!(tail < 1e-12);
    }

    #[test]
    fn r_t_for_unit_c_k() {
        let m = dirichlet(4);
        let cfg = ConstantsConfig {
            c_k: Some(1.0),
            ..Default::default()
        };
        let r = theoretical_constants(&m, 1.0 / 6.0, &cfg);
        assert!((r.ln_r_t + 6.0 * PI * PI).abs() < 1e-12);
        assert!((r.r_t / 1.9e-26 - 1.0).abs() < 0.05);
    }

    #[test]
    fn calibrated_c_k_dominates_grid() {
        let (m, _) = crate::simulate::shift_spectrum(&dirichlet(8));
        let cfg = ConstantsConfig::default();
        let r = theoretical_constants(&m, 1.0 / 6.0, &cfg);
        assert!(r.c_k > r.c_m);
        for t in log_grid(1e-3, 1.0, 61) {
            let s = stage_constants(&m, t, 1.0, r.c_b);
            assert!(s.ln_k <= r.c_k / t);
        }
    }

    #[test]
    fn tail_bound_dominates_next_terms() {
        // compare the bound for N = 4 against the explicit terms 5..40
        let m4 = dirichlet(4);
        let m40 = build_model(SpectralKind::DirichletHeat, 40, &QuadratureConfig::default()).unwrap();
        for &t in &[0.002, 0.02, 0.2] {
            for a in [1.0 / PI, 2.0] {
                let bound = ln_tail_bound(&m4, t, a);
                let explicit: Vec<f64> = (4..40)
                    .map(|k| -2.0 * m40.eigenvalues[k] * t + a * m40.eigenvalues[k].sqrt() - 2.0 * m40.coupling[0][k].abs().ln())
                    .collect();
                assert!(log_sum_exp(&explicit) <= bound, "t = {t}, a = {a}");
            }
        }
    }
}
