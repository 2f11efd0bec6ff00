//! Checks of the estimate chain against recorded run data, contraction
//! exponent fits, the series identities behind the schedule, and the `G_M`
//! bound.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_grid, ls_slope};
use crate::spectral::SpectralModel;
use crate::synthesis::constants::{calibrate_c_m, ln_g_m, ConstantsReport, StageConstants};
use crate::synthesis::run::RunMode;
use crate::synthesis::schedule::StageSchedule;

/// Multiplicative tolerance on the right-hand side of every inequality.
pub const CHECK_TOLERANCE: f64 = 1.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    /// Global start time `tau_{n-1}` (plus any strip offset).
    pub start: f64,
    pub length: f64,
    /// `||v(tau_{n-1})||`.
    pub v_start: f64,
    /// `||v(tau_n)||`.
    pub v_end: f64,
    /// Norm of the linearized part at the stage end.
    pub vbar_end: f64,
    /// Largest sampled `||v||` over the stage.
    pub sup_norm: f64,
    pub p_norm: f64,
    /// `C_alpha(T_n) Lambda_{T_n} ||v(tau_{n-1})||`.
    pub gate: f64,
    /// Upper limit on `||v(tau_{n-1})||` enforced in theory mode.
    pub theory_limit: Option<f64>,
    pub moment_residual: f64,
    pub precision_bits: u32,
    pub condition: f64,
    pub proxy_degree: usize,
    pub steps: usize,
    pub constants: StageConstants,
}

/// The free-decay phase of the strip strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripPhase {
    pub r1: f64,
    pub radius: f64,
    pub gamma: f64,
    pub duration: f64,
    pub deviation_sq_after: f64,
    pub limit_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub strategy: String,
    pub mode: RunMode,
    /// `lambda_1`, undone when mapping back to the original frame.
    pub lambda_1: f64,
    /// Target multiple of the ground state (`gamma` in the cone strategy).
    pub scale: f64,
    /// Global time at which the staged phase starts.
    pub offset: f64,
    pub schedule: StageSchedule,
    pub constants: ConstantsReport,
    pub target: f64,
    pub initial_deviation: f64,
    pub stages: Vec<StageRecord>,
    pub total_control_norm: f64,
    /// `||u - gamma psi_1|| / ||gamma psi_1||` at the final time.
    pub final_deviation: f64,
    pub final_time: f64,
    pub converged: bool,
    pub strip: Option<StripPhase>,
}

impl RunReport {
    /// `||v(tau_0)||, ||v(tau_1)||, ...` for the executed stages.
    pub fn norm_sequence(&self) -> Vec<f64> {
        let mut out = vec![self.initial_deviation];
        out.extend(self.stages.iter().map(|s| s.v_end));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Stage index, or `None` for whole-run checks.
    pub stage: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs / lhs`; infinite when `lhs = 0`.
    pub margin: f64,
    pub passed: bool,
    /// Whether the run mode guarantees this inequality.
    pub asserted: bool,
}

impl Check {
    fn new(name: &str, stage: Option<usize>, lhs: f64, rhs: f64, asserted: bool) -> Self {
        let margin = if lhs == 0.0 { f64::INFINITY } else { rhs / lhs };
        Self {
            name: name.to_string(),
            stage,
            lhs,
            rhs,
            margin,
            passed: lhs <= CHECK_TOLERANCE * rhs,
            asserted,
        }
    }

    /// Built from logarithms, to survive constants far outside the f64 range.
    fn from_logs(name: &str, stage: Option<usize>, ln_lhs: f64, ln_rhs: f64, asserted: bool) -> Self {
        let margin = if ln_lhs == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            (ln_rhs - ln_lhs).exp()
        };
        Self {
            name: name.to_string(),
            stage,
            lhs: ln_lhs.exp(),
            rhs: ln_rhs.exp(),
            margin,
            passed: ln_lhs <= ln_rhs + CHECK_TOLERANCE.ln(),
            asserted,
        }
    }

    /// Holds with at least 1% to spare.
    pub fn has_slack(&self) -> bool {
        self.margin >= 1.0 / 0.99
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateChecks {
    pub checks: Vec<Check>,
}

impl EstimateChecks {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Every check the run mode asserts holds.
    pub fn asserted_passed(&self) -> bool {
        self.checks.iter().filter(|c| c.asserted).all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Check> + 'a {
        self.checks.iter().filter(move |c| c.name == name)
    }
}

/// Evaluates the per-stage and cumulative inequalities on a run report.
pub fn verify_run(report: &RunReport, constants: &ConstantsReport) -> EstimateChecks {
    let asserted = report.mode == RunMode::Theory;
    let c_b = constants.c_b;
    let v0 = report.initial_deviation;
    let mut checks = Vec::new();
    // sum_j 2^{n-j} ln K(T_j), accumulated as S_n = 2 S_{n-1} + ln K(T_n)
    let mut ln_k_chain = 0.0;
    for s in &report.stages {
        let c = &s.constants;
        let n = s.stage;
        checks.push(Check::new("pbound", Some(n), s.p_norm, c.gate_factor * s.v_start, asserted));

        let exponent = c.c_3 * c.lambda_t * s.v_start + c_b * s.length;
        let ln_rhs = exponent + (c.c_4 * c.lambda_t * c.lambda_t).ln_1p() + 2.0 * s.v_start.ln();
        checks.push(Check::from_logs("unifv", Some(n), 2.0 * s.sup_norm.ln(), ln_rhs, asserted));

        checks.push(Check::from_logs(
            "wT",
            Some(n),
            s.v_end.ln(),
            c.ln_k + 2.0 * s.v_start.ln(),
            asserted,
        ));

        ln_k_chain = 2.0 * ln_k_chain + c.ln_k;
        let ln_rhs = ln_k_chain + 2f64.powi(n as i32) * v0.ln();
        checks.push(Check::from_logs("estimvn", Some(n), s.v_end.ln(), ln_rhs, asserted));
    }
    let p_sq: f64 = report.stages.iter().map(|s| s.p_norm * s.p_norm).sum();
    checks.push(Check::new(
        "pestimate",
        None,
        p_sq,
        constants.control_norm_sq_bound,
        asserted,
    ));
    EstimateChecks { checks }
}

/// Contraction fingerprint of a norm sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionFit {
    /// Entries used, after removing those below the floor.
    pub used: Vec<f64>,
    /// Entries dropped as having reached the exact floor.
    pub floored: usize,
    /// `ln v_n / ln v_{n-1}`.
    pub exponents: Vec<f64>,
    /// Least-squares slope of `ln(-ln v_n)` against `n`.
    pub slope: f64,
    /// Log-log regression exponent of `v_n` against `v_{n-1}`, from `n = 2`.
    pub loglog_exponent: Option<f64>,
    pub superexponential: bool,
}

/// Entries below this fraction of the first are treated as the exact floor.
pub const NORM_FLOOR: f64 = 1e-14;

pub fn contraction_exponents(sequence: &[f64]) -> Result<ContractionFit> {
    if let Some(i) = sequence.iter().position(|v| *v == 0.0) {
        return Err(Error::DegenerateSequence {
            detail: format!("entry {i} reached exact floor (zero)"),
        });
    }
    if sequence.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::DegenerateSequence {
            detail: "non-finite or negative entry".into(),
        });
    }
    let first = match sequence.first() {
        Some(f) => *f,
        None => {
            return Err(Error::DegenerateSequence {
                detail: "empty sequence".into(),
            })
        }
    };
    let used: Vec<f64> = sequence.iter().copied().filter(|v| *v >= NORM_FLOOR * first).collect();
    let floored = sequence.len() - used.len();
    if used.len() < 2 {
        return Err(Error::DegenerateSequence {
            detail: format!("{} usable entries after the floor", used.len()),
        });
    }
    if used.iter().any(|v| *v >= 1.0) {
        return Err(Error::DegenerateSequence {
            detail: "exponents need entries below 1".into(),
        });
    }
    let logs: Vec<f64> = used.iter().map(|v| v.ln()).collect();
    let exponents = logs.windows(2).map(|w| w[1] / w[0]).collect();
    let idx: Vec<f64> = (0..used.len()).map(|i| i as f64).collect();
    let loglog: Vec<f64> = logs.iter().map(|l| (-l).ln()).collect();
    let slope = ls_slope(&idx, &loglog);
    // pairs (v_{n-1}, v_n) for n >= 2
    let loglog_exponent = if logs.len() >= 4 {
        Some(ls_slope(&logs[1..logs.len() - 1], &logs[2..]))
    } else {
        None
    };
    Ok(ContractionFit {
        used,
        floored,
        exponents,
        slope,
        loglog_exponent,
        superexponential: slope >= 0.5 * std::f64::consts::LN_2,
    })
}

/// Exact and asymptotic checks of `sum_{j<=n} j^2 / 2^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesCheck {
    pub n: usize,
    /// Both sides as reduced fractions `numerator/denominator`.
    pub lhs: String,
    pub rhs: String,
    pub exact: bool,
    pub partial_sum: f64,
    /// `6 - S_n`, exactly.
    pub remainder: f64,
    /// `(n^2 + 4n + 6) / 2^n`.
    pub remainder_bound: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub checks: Vec<SeriesCheck>,
    pub monotone: bool,
}

impl SeriesReport {
    pub fn passed(&self) -> bool {
        self.monotone && self.checks.iter().all(|c| c.exact && c.within_bound)
    }
}

fn ratio_f64(r: &Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn verify_series_identities(n_max: usize) -> Result<SeriesReport> {
    // 2^n must fit i128 with room for the n^2 numerator
    if n_max == 0 || n_max > 100 {
        return Err(Error::OutOfRange {
            detail: format!("series check supports 1 <= n <= 100 (got {n_max})"),
        });
    }
    let mut checks = Vec::with_capacity(n_max + 1);
    let mut sum = Ratio::<i128>::from_integer(0);
    let mut previous = Ratio::<i128>::from_integer(-1);
    let mut monotone = true;
    for n in 0..=n_max {
        let pow = 1i128 << n;
        let ni = n as i128;
        if n > 0 {
            sum += Ratio::new(ni * ni, pow);
        }
        let closed = Ratio::new(-ni * ni - 4 * ni + 6 * (pow - 1), pow);
        let remainder = Ratio::from_integer(6) - sum;
        let bound = Ratio::new(ni * ni + 4 * ni + 6, pow);
        let partial = ratio_f64(&sum);
        if n > 0 && sum <= previous {
            monotone = false;
        }
        previous = sum;
        checks.push(SeriesCheck {
            n,
            lhs: format!("{}/{}", sum.numer(), sum.denom()),
            rhs: format!("{}/{}", closed.numer(), closed.denom()),
            exact: sum == closed,
            partial_sum: partial,
            remainder: ratio_f64(&remainder),
            remainder_bound: ratio_f64(&bound),
            within_bound: remainder <= bound && remainder > Ratio::from_integer(0),
        });
    }
    Ok(SeriesReport { checks, monotone })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmPoint {
    pub t: f64,
    pub ln_g_m: f64,
    /// `C_M / T`.
    pub ln_bound: f64,
    pub holds: bool,
    /// `sum_k lambda_k^{2q} exp(-lambda_k T)` on the original spectrum.
    pub inner_sum: f64,
    /// `C_q / T^{2q} + C_{alpha,q} / T^{1+2q}`.
    pub envelope: f64,
    pub envelope_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmBoundReport {
    pub c_bar: f64,
    pub m: f64,
    pub c_m: f64,
    pub calibration_grid: (f64, f64, usize),
    pub c_q: f64,
    pub c_alpha_q: f64,
    pub points: Vec<GmPoint>,
}

impl GmBoundReport {
    pub fn passed(&self) -> bool {
        self.c_m.is_finite() && self.points.iter().all(|p| p.holds && p.envelope_holds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmConfig {
    pub c_bar: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub points: usize,
    /// Verification grid density relative to the calibration grid.
    pub refine: usize,
}

impl Default for GmConfig {
    fn default() -> Self {
        Self {
            c_bar: 1.0,
            t_lo: 1e-2,
            t_hi: 1.0,
            points: 41,
            refine: 10,
        }
    }
}

/// Calibrates `C_M` on a coarse grid and checks `G_M(T) <= e^{C_M/T}` and the
/// inner-sum envelope on a finer one.
///
/// The envelope constants follow from the gap condition on the original
/// spectrum: with `g` the smallest gap of `sqrt(lambda_k)`, the sum is bounded
/// by its largest term plus an integral against `g` times the `sqrt`-spacing,
/// giving `C_q = 2 (2q)^{2q} e^{-2q}` and
/// `C_{alpha,q} = 2 Gamma(2q+1) / (g (sqrt(lambda_2) + sqrt(lambda_1)))`.
pub fn verify_gm_bound(model: &SpectralModel, cfg: &GmConfig) -> Result<GmBoundReport> {
    if !(cfg.t_lo > 0.0 && cfg.t_hi <= 1.0 && cfg.t_lo < cfg.t_hi) || cfg.points < 2 || cfg.refine == 0 {
        return Err(Error::OutOfRange {
            detail: "G_M grid must lie in (0, 1] with at least two points".into(),
        });
    }
    let coarse = log_grid(cfg.t_lo, cfg.t_hi, cfg.points);
    let c_m = calibrate_c_m(model, cfg.c_bar, &coarse);
    let fine = log_grid(cfg.t_lo, cfg.t_hi, (cfg.points - 1) * cfg.refine + 1);

    let lambda = model.original_eigenvalues();
    let q = model.dispersion_q;
    let roots: Vec<f64> = lambda.iter().map(|l| l.max(0.0).sqrt()).collect();
    let gap = roots.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let c_q = if q == 0.0 {
        2.0
    } else {
        2.0 * (2.0 * q).powf(2.0 * q) * (-2.0 * q).exp()
    };
    let spread = if roots.len() >= 2 { roots[1] + roots[0] } else { 1.0 };
    let c_alpha_q = 2.0 * libm::tgamma(2.0 * q + 1.0) / (gap * spread);

    let points = fine
        .iter()
        .map(|&t| {
            let ln_g = ln_g_m(model, t, cfg.c_bar).0;
            let ln_bound = c_m / t;
            let inner: f64 = lambda.iter().map(|l| l.powf(2.0 * q) * (-l * t).exp()).sum();
            let envelope = c_q / t.powf(2.0 * q) + c_alpha_q / t.powf(1.0 + 2.0 * q);
            GmPoint {
                t,
                ln_g_m: ln_g,
                ln_bound,
                holds: ln_g <= ln_bound + 1e-12 * ln_bound.abs().max(1.0),
                inner_sum: inner,
                envelope,
                envelope_holds: inner <= envelope,
            }
        })
        .collect();
    Ok(GmBoundReport {
        c_bar: cfg.c_bar,
        m: crate::synthesis::constants::m_constant(cfg.c_bar, model.gap_alpha),
        c_m,
        calibration_grid: (cfg.t_lo, cfg.t_hi, cfg.points),
        c_q,
        c_alpha_q,
        points,
    })
}
