use serde::Serialize;

use crate::error::{Error, Result};
use crate::moment::{biorthogonal_family, ExpSum, PrecisionConfig};
use crate::simulate::ControlSignal;
use crate::spectral::SpectralModel;

/// The control of one stage, `p_n(t) = sum_k d_k sigma_k(t - tau_{n-1})`.
#[derive(Debug, Clone, Serialize)]
pub struct StageControl {
    pub stage: usize,
    pub start: f64,
    pub length: f64,
    /// `d_k = v_k / coupling(1, k)`.
    pub weights: Vec<f64>,
    #[serde(skip)]
    pub signal: ExpSum,
    pub residual: f64,
    pub bits: u32,
    pub condition: f64,
    pub l2_norm: f64,
}

impl StageControl {
    pub fn end(&self) -> f64 {
        self.start + self.length
    }

    /// Value at local time `s` in `[0, T_n]`.
    pub fn eval_local(&self, s: f64) -> f64 {
        if self.signal.is_zero() {
            0.0
        } else {
            self.signal.eval(s)
        }
    }
}

impl ControlSignal for StageControl {
    fn value(&self, t: f64) -> f64 {
        self.eval_local(t)
    }

    fn exp_sum(&self) -> Option<&ExpSum> {
        Some(&self.signal)
    }
}

/// Builds the moment control steering the linearized deviation from `v`
/// to zero in time `length`. The model must be ground-shifted.
pub fn synthesize_stage_control(
    model: &SpectralModel,
    v: &[f64],
    length: f64,
    precision: &PrecisionConfig,
) -> Result<StageControl> {
    if model.eigenvalues[0] != 0.0 {
        return Err(Error::Config {
            detail: format!("stage synthesis needs a shifted model (mu_1 = {})", model.eigenvalues[0]),
        });
    }
    if v.len() != model.n_modes() {
        return Err(Error::OutOfRange {
            detail: format!("state has {} modes, model has {}", v.len(), model.n_modes()),
        });
    }
    let weights: Vec<f64> = v
        .iter()
        .enumerate()
        .map(|(k, x)| x / model.coupling_to_ground(k + 1))
        .collect();
    if weights.iter().all(|w| *w == 0.0) {
        return Ok(StageControl {
            stage: 0,
            start: 0.0,
            length,
            weights,
            signal: ExpSum::zero(&model.eigenvalues, length),
            residual: 0.0,
            bits: 53,
            condition: f64::NAN,
            l2_norm: 0.0,
        });
    }
    let basis = biorthogonal_family(&model.eigenvalues, length, precision)?;
    let signal = basis.combine(&weights);
    let l2_norm = signal.l2_norm_sq().sqrt();
    Ok(StageControl {
        stage: 0,
        start: 0.0,
        length,
        weights,
        residual: basis.max_residual(),
        bits: basis.precision_bits(),
        condition: basis.condition(),
        signal,
        l2_norm,
    })
}

/// Stage controls laid end to end, extended by zero past the last stage.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PiecewiseControl {
    /// Global time at which the first stage starts.
    pub offset: f64,
    pub stages: Vec<StageControl>,
}

impl PiecewiseControl {
    pub fn new(offset: f64) -> Self {
        Self {
            offset,
            stages: Vec::new(),
        }
    }

    pub fn push(&mut self, stage: StageControl) {
        debug_assert!(self
            .stages
            .last()
            .map_or(true, |s| (s.end() - stage.start).abs() <= 1e-15 * s.end().max(1.0)));
        self.stages.push(stage);
    }

    pub fn end(&self) -> f64 {
        self.stages.last().map_or(self.offset, StageControl::end)
    }

    /// `||p||_{L^2}`; stage supports are disjoint.
    pub fn l2_norm(&self) -> f64 {
        self.stages.iter().map(|s| s.l2_norm * s.l2_norm).sum::<f64>().sqrt()
    }
}

/// `p(t)`, right-continuous at breakpoints and zero outside the stages.
pub fn eval_control(control: &PiecewiseControl, t: f64) -> f64 {
    // last stage whose start is <= t
    let idx = control.stages.partition_point(|s| s.start <= t);
    if idx == 0 {
        return 0.0;
    }
    let s = &control.stages[idx - 1];
    if t >= s.end() {
        return 0.0;
    }
    s.eval_local(t - s.start)
}
