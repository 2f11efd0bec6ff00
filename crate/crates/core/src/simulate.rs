//! Galerkin simulation of the truncated modal dynamics
//!
//! ```text
//! x_k' = -mu_k x_k - p(t) sum_j coupling[k][j] x_j - f_k(t)
//! ```
//!
//! The diagonal is integrated exactly through integrating factors and the
//! bilinear term by a Lawson fourth-order Runge-Kutta rule, with step-doubling
//! error control and local extrapolation of the accepted step.

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::chebyshev::Chebyshev;
use crate::error::{Error, Result};
use crate::moment::ExpSum;
use crate::numeric::norm2;
use crate::quadrature::{AdaptiveIntegrator, QuadratureConfig};
use crate::spectral::{ModalVector, SpectralModel};

/// A scalar control `p(t)`.
pub trait ControlSignal {
    fn value(&self, t: f64) -> f64;

    /// Exact representation as an exponential sum on `[0, T]`, when known.
    fn exp_sum(&self) -> Option<&ExpSum> {
        None
    }
}

impl<F: Fn(f64) -> f64> ControlSignal for F {
    fn value(&self, t: f64) -> f64 {
        self(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantControl(pub f64);

impl ControlSignal for ConstantControl {
    fn value(&self, _t: f64) -> f64 {
        self.0
    }
}

impl ControlSignal for ExpSum {
    fn value(&self, t: f64) -> f64 {
        self.eval(t)
    }

    fn exp_sum(&self) -> Option<&ExpSum> {
        Some(self)
    }
}

/// Affine forcing `f(t)`, written into the output slice.
pub type Forcing<'a> = &'a dyn Fn(f64, &mut [f64]);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatorConfig {
    /// Relative local error per step.
    pub tolerance: f64,
    /// Output samples per interval (plus the initial state).
    pub samples: usize,
    pub max_steps: usize,
    /// Used by the linearized simulator for non-exponential controls.
    pub quadrature: QuadratureConfig,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            samples: 32,
            max_steps: 2_000_000,
            quadrature: QuadratureConfig::default(),
        }
    }
}

/// Sampled modal states.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub controls: Vec<f64>,
    /// Largest relative local error estimate since the previous sample.
    pub errors: Vec<f64>,
    pub steps: usize,
}

impl Trajectory {
    fn push(&mut self, t: f64, x: &[f64], p: f64, err: f64) {
        self.times.push(t);
        self.norms.push(norm2(x));
        self.states.push(x.to_vec());
        self.controls.push(p);
        self.errors.push(err);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn sup_norm(&self) -> f64 {
        self.norms.iter().cloned().fold(0.0, f64::max)
    }

    /// Appends `other`. When it starts at our last time, our last sample is
    /// replaced, so a control switching there reads from the later segment.
    pub fn extend(&mut self, other: Trajectory) {
        if let (Some(a), Some(b)) = (self.times.last(), other.times.first()) {
            if a == b {
                self.times.pop();
                self.states.pop();
                self.norms.pop();
                self.controls.pop();
                self.errors.pop();
            }
        }
        self.times.extend(other.times);
        self.states.extend(other.states);
        self.norms.extend(other.norms);
        self.controls.extend(other.controls);
        self.errors.extend(other.errors);
        self.steps += other.steps;
    }
}

struct Stepper<'a> {
    mu: &'a [f64],
    coupling: &'a [Vec<f64>],
    control: &'a dyn ControlSignal,
    forcing: Option<Forcing<'a>>,
    scratch: Vec<f64>,
}

impl Stepper<'_> {
    /// `out = -p(t) C x - f(t)`
    fn rhs(&mut self, t: f64, x: &[f64], out: &mut [f64]) {
        let p = self.control.value(t);
        if let Some(f) = self.forcing {
            f(t, &mut self.scratch);
        } else {
            self.scratch.iter_mut().for_each(|v| *v = 0.0);
        }
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            if p != 0.0 {
                for (c, xj) in self.coupling[k].iter().zip(x) {
                    acc += c * xj;
                }
            }
            *o = -p * acc - self.scratch[k];
        }
    }

    fn step(&mut self, t: f64, x: &[f64], h: f64) -> Vec<f64> {
        let n = x.len();
        let eh: Vec<f64> = self.mu.iter().map(|m| (-m * 0.5 * h).exp()).collect();
        let ef: Vec<f64> = eh.iter().map(|e| e * e).collect();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        self.rhs(t, x, &mut k1);
        let xa: Vec<f64> = (0..n).map(|i| eh[i] * (x[i] + 0.5 * h * k1[i])).collect();
        self.rhs(t + 0.5 * h, &xa, &mut k2);
        let xb: Vec<f64> = (0..n).map(|i| eh[i] * x[i] + 0.5 * h * k2[i]).collect();
        self.rhs(t + 0.5 * h, &xb, &mut k3);
        let xc: Vec<f64> = (0..n).map(|i| ef[i] * x[i] + h * eh[i] * k3[i]).collect();
        self.rhs(t + h, &xc, &mut k4);
        (0..n)
            .map(|i| ef[i] * x[i] + h / 6.0 * (ef[i] * k1[i] + 2.0 * eh[i] * (k2[i] + k3[i]) + k4[i]))
            .collect()
    }
}

/// Integrates the bilinear system (optionally forced) over `[t0, t1]`.
pub fn simulate_bilinear(
    model: &SpectralModel,
    state0: &[f64],
    control: &dyn ControlSignal,
    interval: (f64, f64),
    cfg: &SimulatorConfig,
    forcing: Option<Forcing<'_>>,
) -> Result<Trajectory> {
    let n = model.n_modes();
    let (t0, t1) = interval;
    if state0.len() != n {
        return Err(Error::OutOfRange {
            detail: format!("state has {} components, model has {n} modes", state0.len()),
        });
    }
    if !(t1 >= t0) || !(cfg.tolerance > 0.0) {
        return Err(Error::OutOfRange {
            detail: format!("bad interval [{t0}, {t1}] or tolerance {}", cfg.tolerance),
        });
    }
    let mut stepper = Stepper {
        mu: &model.eigenvalues,
        coupling: &model.coupling,
        control,
        forcing,
        scratch: vec![0.0; n],
    };
    let mut traj = Trajectory::default();
    let mut x = state0.to_vec();
    traj.push(t0, &x, control.value(t0), 0.0);
    if t1 == t0 {
        return Ok(traj);
    }
    let samples = cfg.samples.max(1);
    let span = t1 - t0;
    let mut h = span / samples as f64;
    let mut t = t0;
    for s in 1..=samples {
        let target = if s == samples { t1 } else { t0 + span * s as f64 / samples as f64 };
        let mut seg_err = 0.0_f64;
        while t < target {
            let hs = h.min(target - t);
            if hs <= 4.0 * f64::EPSILON * t.abs().max(span) || traj.steps >= cfg.max_steps {
                return Err(Error::ToleranceUnreachable { t, step: hs });
            }
            let full = stepper.step(t, &x, hs);
            let mid = stepper.step(t, &x, 0.5 * hs);
            let half = stepper.step(t + 0.5 * hs, &mid, 0.5 * hs);
            let diff: Vec<f64> = half.iter().zip(&full).map(|(a, b)| a - b).collect();
            let err = norm2(&diff) / 15.0;
            let scale = norm2(&x).max(norm2(&half));
            let bad = !half.iter().all(|v| v.is_finite());
            if !bad && err <= cfg.tolerance * scale {
                t = if hs == target - t { target } else { t + hs };
                // local extrapolation; err stays a bound for the unextrapolated half-step pair
                x = half.iter().zip(&diff).map(|(a, d)| a + d / 15.0).collect();
                traj.steps += 1;
                if scale > 0.0 {
                    seg_err = seg_err.max(err / scale);
                }
                let grow = if err == 0.0 { 4.0 } else { (0.9 * (cfg.tolerance * scale / err).powf(0.2)).clamp(0.2, 4.0) };
                // keep the proposal from the unclipped step when we were only
                // clipped by the sample boundary
                h = if hs < h { h.max(hs * grow) } else { hs * grow };
            } else {
                let shrink = if bad || err == 0.0 || scale == 0.0 {
                    0.25
                } else {
                    (0.9 * (cfg.tolerance * scale / err).powf(0.2)).clamp(0.1, 0.5)
                };
                h = hs * shrink;
            }
        }
        traj.push(target, &x, control.value(target), seg_err);
    }
    Ok(traj)
}

/// Deviation system `v' = -A v - p B v - p B phi_1` integrated directly.
pub fn simulate_deviation(
    model: &SpectralModel,
    v0: &[f64],
    control: &dyn ControlSignal,
    interval: (f64, f64),
    cfg: &SimulatorConfig,
) -> Result<Trajectory> {
    let column: Vec<f64> = model.coupling.iter().map(|r| r[0]).collect();
    let f = |t: f64, out: &mut [f64]| {
        let p = control.value(t);
        for (o, c) in out.iter_mut().zip(&column) {
            *o = p * c;
        }
    };
    simulate_bilinear(model, v0, control, interval, cfg, Some(&f))
}

fn wide(bits: u32, x: f64) -> Float {
    Float::with_val(bits, x)
}

/// Closed-form linearized state at local time `s` for an exponential-sum
/// control `p(r) = sum_j D_j exp(mu_j (r - T))`:
///
/// ```text
/// vbar_k(s) = exp(-mu_k s) v0_k
///           - c_1k sum_j D_j exp(mu_j (s - T)) (1 - exp(-(mu_j + mu_k) s)) / (mu_j + mu_k)
/// ```
///
/// with the `mu_j + mu_k = 0` term replaced by its limit `exp(mu_j (s - T)) s`.
pub(crate) fn duhamel_wide(model: &SpectralModel, v0: &[f64], p: &ExpSum, s: f64, bits: u32) -> Vec<Float> {
    let mu = &model.eigenvalues;
    let n = mu.len();
    let d = p.coefficients_wide();
    let s_w = wide(bits, s);
    let decay: Vec<Float> = mu.iter().map(|m| Float::with_val(bits, &s_w * -*m).exp()).collect();
    let growth: Vec<Float> = mu
        .iter()
        .map(|m| Float::with_val(bits, Float::with_val(bits, &s_w - p.horizon()) * *m).exp())
        .collect();
    (0..n)
        .map(|k| {
            let mut conv = Float::new(bits);
            for j in 0..n {
                if d[j].is_zero() {
                    continue;
                }
                let sum = mu[j] + mu[k];
                let kernel = if sum == 0.0 {
                    Float::with_val(bits, &growth[j] * &s_w)
                } else {
                    let one_minus = Float::with_val(bits, 1 - Float::with_val(bits, &decay[j] * &decay[k]));
                    Float::with_val(bits, &growth[j] * &one_minus) / (wide(bits, mu[j]) + mu[k])
                };
                conv += kernel * &d[j];
            }
            let c1k = model.coupling[0][k];
            Float::with_val(bits, &decay[k] * v0[k]) - conv * c1k
        })
        .collect()
}

fn linearized_bits(p: &ExpSum) -> u32 {
    (2 * p.bits()).max(256)
}

/// Linearized system `vbar' = -A vbar - p B phi_1` over `[t0, t1]`.
///
/// When `control` is an exponential sum the solution is evaluated in closed
/// form in wide arithmetic (local time, so `t0` must be 0); otherwise the
/// Duhamel integral is computed by adaptive quadrature.
pub fn simulate_linearized(
    model: &SpectralModel,
    v0: &[f64],
    control: &dyn ControlSignal,
    interval: (f64, f64),
    cfg: &SimulatorConfig,
) -> Result<Trajectory> {
    let n = model.n_modes();
    let (t0, t1) = interval;
    if v0.len() != n || !(t1 >= t0) {
        return Err(Error::OutOfRange {
            detail: "linearized simulation needs a matching state and t1 >= t0".into(),
        });
    }
    let samples = if t1 == t0 { 0 } else { cfg.samples.max(1) };
    let times: Vec<f64> = (0..=samples)
        .map(|i| if i == samples { t1 } else { t0 + (t1 - t0) * i as f64 / samples as f64 })
        .collect();
    let mut traj = Trajectory::default();
    match control.exp_sum() {
        Some(p) if t0 == 0.0 => {
            let bits = linearized_bits(p);
            for &t in &times {
                let x: Vec<f64> = duhamel_wide(model, v0, p, t, bits).iter().map(Float::to_f64).collect();
                traj.push(t, &x, control.value(t), 0.0);
            }
        }
        _ => {
            let quad = AdaptiveIntegrator::new(cfg.quadrature);
            for &t in &times {
                let mut x = vec![0.0; n];
                for k in 0..n {
                    let mu = model.eigenvalues[k];
                    let c1k = model.coupling[0][k];
                    let integral = if c1k == 0.0 {
                        0.0
                    } else {
                        quad.integrate(t0, t, |s| (-mu * (t - s)).exp() * control.value(s))?
                    };
                    x[k] = (-mu * (t - t0)).exp() * v0[k] - c1k * integral;
                }
                traj.push(t, &x, control.value(t), 0.0);
            }
        }
    }
    Ok(traj)
}

/// Result of one stage of the deviation system under an exponential-sum control.
#[derive(Debug, Clone)]
pub struct StageSimulation {
    /// Samples of `v = vbar + w` on local time `[0, T]`.
    pub trajectory: Trajectory,
    pub v_end: Vec<f64>,
    pub vbar_end: Vec<f64>,
    pub w_end: Vec<f64>,
    /// Degree of the double-precision proxies used for the forcing.
    pub proxy_degree: usize,
}

/// Integrates `v' = -A v - p B v - p B phi_1` on `[0, T]` by splitting
/// `v = vbar + w`: the linearized part in closed form, the remainder
/// `w' = -A w - p B (vbar + w)` numerically. Direct integration of `v` would
/// lose the cancellation that makes `v(T)` quadratically small.
pub fn simulate_stage(model: &SpectralModel, v0: &[f64], p: &ExpSum, cfg: &SimulatorConfig) -> Result<StageSimulation> {
    let n = model.n_modes();
    let horizon = p.horizon();
    let bits = linearized_bits(p);
    if p.is_zero() {
        let traj = simulate_bilinear(model, v0, &ConstantControl(0.0), (0.0, horizon), cfg, None)?;
        let end = traj.final_state().to_vec();
        return Ok(StageSimulation {
            trajectory: traj,
            vbar_end: end.clone(),
            w_end: vec![0.0; n],
            v_end: end,
            proxy_degree: 0,
        });
    }
    let (proxies, _) = Chebyshev::fit_many(0.0, horizon, n + 1, 1e-15, 2048, |s| {
        let mut out = Vec::with_capacity(n + 1);
        out.push(p.eval_wide(s, bits).to_f64());
        out.extend(duhamel_wide(model, v0, p, s, bits).iter().map(Float::to_f64));
        out
    });
    let proxy_degree = proxies.iter().map(Chebyshev::degree).max().unwrap_or(0);
    let p_proxy = &proxies[0];
    let vbar_proxy = &proxies[1..];
    let control = |t: f64| p_proxy.eval(t);
    let forcing = |t: f64, out: &mut [f64]| {
        let pt = p_proxy.eval(t);
        let vb: Vec<f64> = vbar_proxy.iter().map(|c| c.eval(t)).collect();
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, x) in model.coupling[k].iter().zip(&vb) {
                acc += c * x;
            }
            *o = pt * acc;
        }
    };
    let w = simulate_bilinear(model, &vec![0.0; n], &control, (0.0, horizon), cfg, Some(&forcing))?;
    let mut traj = Trajectory {
        steps: w.steps,
        ..Default::default()
    };
    let mut vbar_end = Vec::new();
    for (i, &t) in w.times.iter().enumerate() {
        let vbar: Vec<f64> = duhamel_wide(model, v0, p, t, bits).iter().map(Float::to_f64).collect();
        let v: Vec<f64> = vbar.iter().zip(&w.states[i]).map(|(a, b)| a + b).collect();
        traj.push(t, &v, p.eval(t), w.errors[i]);
        vbar_end = vbar;
    }
    let w_end = w.final_state().to_vec();
    Ok(StageSimulation {
        v_end: traj.final_state().to_vec(),
        trajectory: traj,
        vbar_end,
        w_end,
        proxy_degree,
    })
}

/// Free evolution `x_k -> exp(-mu_k dt) x_k`.
pub fn propagate_free(model: &SpectralModel, state: &ModalVector, dt: f64) -> ModalVector {
    assert!(dt >= 0.0, "free propagation needs dt >= 0");
    ModalVector(
        state
            .0
            .iter()
            .zip(&model.eigenvalues)
            .map(|(x, mu)| if dt == 0.0 { *x } else { x * (-mu * dt).exp() })
            .collect(),
    )
}

/// Ground-shifted model `mu_k = lambda_k - lambda_1`, and `lambda_1`.
pub fn shift_spectrum(model: &SpectralModel) -> (SpectralModel, f64) {
    let l1 = model.eigenvalues[0];
    let mut shifted = model.clone();
    for l in shifted.eigenvalues.iter_mut() {
        *l -= l1;
    }
    shifted.eigenvalues[0] = 0.0;
    shifted.shift += l1;
    (shifted, l1)
}
