use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Shrinking stage lengths `T_j = T~ / j^2` whose infinite sum is `T_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub requested: f64,
    pub alpha: f64,
    pub t_alpha: f64,
    pub t_final: f64,
    pub t_tilde: f64,
    /// `lengths[j-1] = T_j`.
    pub lengths: Vec<f64>,
    /// `breakpoints[n] = tau_n`, starting with `tau_0 = 0`.
    pub breakpoints: Vec<f64>,
    pub j_max: usize,
}

impl StageSchedule {
    /// Length of stage `n` (1-based).
    pub fn length(&self, n: usize) -> f64 {
        self.lengths[n - 1]
    }

    /// Start of stage `n` (1-based), `tau_{n-1}`.
    pub fn start(&self, n: usize) -> f64 {
        self.breakpoints[n - 1]
    }

    /// Part of `[0, T_f]` not covered by the first `j_max` stages.
    pub fn uncovered(&self) -> f64 {
        let head: CompensatedSum = (1..=self.j_max).map(|j| 1.0 / (j as f64 * j as f64)).collect();
        self.t_tilde * (PI * PI / 6.0 - head.value())
    }
}

pub fn stage_schedule(requested: f64, alpha: f64, j_max: usize) -> Result<StageSchedule> {
    if !(requested > 0.0 && requested.is_finite()) || !(alpha > 0.0) || j_max == 0 {
        return Err(Error::OutOfRange {
            detail: format!("schedule needs T > 0, alpha > 0, J_max >= 1 (got {requested}, {alpha}, {j_max})"),
        });
    }
    let t_alpha = PI * PI / 6.0 * (1.0_f64).min(1.0 / (alpha * alpha));
    let t_final = requested.min(t_alpha);
    let t_tilde = 6.0 * t_final / (PI * PI);
    let lengths: Vec<f64> = (1..=j_max).map(|j| t_tilde / (j * j) as f64).collect();
    let mut acc = CompensatedSum::new();
    let mut breakpoints = vec![0.0];
    for l in &lengths {
        acc.add(*l);
        breakpoints.push(acc.value());
    }
    Ok(StageSchedule {
        requested,
        alpha,
        t_alpha,
        t_final,
        t_tilde,
        lengths,
        breakpoints,
        j_max,
    })
}
