//! Truncated biorthogonal families to real exponentials.
//!
//! Given exponents `mu_1 < ... < mu_N` (with `mu_1 >= 0`) and a horizon `T`,
//! the family `sigma_k(t) = sum_j C[k][j] exp(mu_j (t - T))` is the
//! minimal-L²-norm solution of the moment problem
//!
//! ```text
//! int_0^T sigma_k(t) exp(mu_j t) dt = delta_kj,   j = 1..N.
//! ```
//!
//! The coefficient vectors solve `G c_k = exp(-mu_k T) e_k` where `G` is the
//! Gram matrix of the shifted exponentials. `G` is Cauchy-like and loses about
//! one decimal digit per mode, so factorization runs on a ladder of software
//! float precisions until the residual certificate passes.

use rug::ops::NegAssign;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Precision ladder and residual acceptance for the moment solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrecisionConfig {
    pub residual_tolerance: f64,
    /// Mantissa widths tried in order; 53 is IEEE double.
    pub ladder_bits: Vec<u32>,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        Self {
            residual_tolerance: 1e-8,
            ladder_bits: vec![53, 128, 256],
        }
    }
}

fn residual_bits(bits: u32) -> u32 {
    (2 * bits).max(256)
}

fn wide(bits: u32, x: f64) -> Float {
    Float::with_val(bits, x)
}

/// Gram entry `int_0^T exp(mu_i (t-T)) exp(mu_j (t-T)) dt` at `bits` precision.
fn gram_entry(mu_i: f64, mu_j: f64, horizon: f64, bits: u32) -> Float {
    let s = wide(bits, mu_i) + mu_j;
    if s.is_zero() {
        return wide(bits, horizon);
    }
    // (1 - exp(-sT)) / s = -expm1(-sT) / s
    let mut e = Float::with_val(bits, &s * horizon);
    e.neg_assign();
    e.exp_m1_mut();
    e.neg_assign();
    e / s
}

fn gram_wide(exponents: &[f64], horizon: f64, bits: u32) -> Vec<Vec<Float>> {
    let n = exponents.len();
    let mut g: Vec<Vec<Float>> = vec![Vec::with_capacity(n); n];
    for i in 0..n {
        for j in 0..n {
            if j < i {
                let v = g[j][i].clone();
                g[i].push(v);
            } else {
                g[i].push(gram_entry(exponents[i], exponents[j], horizon, bits));
            }
        }
    }
    g
}

/// Lower Cholesky factor, or the index of the first non-positive pivot.
fn cholesky(a: &[Vec<Float>], bits: u32) -> std::result::Result<Vec<Vec<Float>>, usize> {
    let n = a.len();
    let mut l = vec![vec![Float::new(bits); n]; n];
    for j in 0..n {
        let mut d = a[j][j].clone();
        for k in 0..j {
            d -= Float::with_val(bits, &l[j][k] * &l[j][k]);
        }
        if d <= 0 || d.is_nan() {
            return Err(j);
        }
        let d = d.sqrt();
        for i in (j + 1)..n {
            let mut s = a[i][j].clone();
            for k in 0..j {
                s -= Float::with_val(bits, &l[i][k] * &l[j][k]);
            }
            l[i][j] = s / &d;
        }
        l[j][j] = d;
    }
    Ok(l)
}

fn cholesky_solve(l: &[Vec<Float>], b: &[Float], bits: u32) -> Vec<Float> {
    let n = l.len();
    let mut y: Vec<Float> = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = b[i].clone();
        for k in 0..i {
            s -= Float::with_val(bits, &l[i][k] * &y[k]);
        }
        y.push(s / &l[i][i]);
    }
    let mut x = vec![Float::new(bits); n];
    for i in (0..n).rev() {
        let mut s = y[i].clone();
        for k in (i + 1)..n {
            s -= Float::with_val(bits, &l[k][i] * &x[k]);
        }
        x[i] = s / &l[i][i];
    }
    x
}

fn check_exponents(exponents: &[f64], horizon: f64) -> Result<()> {
    if exponents.is_empty() {
        return Err(Error::OutOfRange {
            detail: "empty exponent list".into(),
        });
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::OutOfRange {
            detail: format!("horizon must be positive, got {horizon}"),
        });
    }
    if exponents[0] < 0.0 || exponents.iter().any(|m| !m.is_finite()) {
        return Err(Error::OutOfRange {
            detail: "exponents must be finite and nonnegative".into(),
        });
    }
    if exponents.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::OutOfRange {
            detail: "exponents must be strictly ascending".into(),
        });
    }
    Ok(())
}

/// Largest eigenvalue of a symmetric matrix.
fn spectral_radius_sym(m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let eig = nalgebra::SymmetricEigen::new(mat);
    eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// Gram matrix of `exp(mu_j (t - T))` on `[0, T]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramMatrix {
    pub exponents: Vec<f64>,
    pub horizon: f64,
    pub entries: Vec<Vec<f64>>,
    /// 2-norm condition number, `lambda_max(G) * lambda_max(G^-1)`.
    pub condition: f64,
    /// Mantissa width at which the Cholesky factorization succeeded.
    pub factorized_bits: u32,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.exponents.len()
    }
}

/// Builds the Gram matrix and its condition estimate.
///
/// The factorization is attempted on the default precision ladder; the
/// condition number is taken from the inverse assembled out of the first
/// successful factorization.
pub fn gram_matrix(exponents: &[f64], horizon: f64) -> Result<GramMatrix> {
    gram_matrix_with(exponents, horizon, &PrecisionConfig::default())
}

pub fn gram_matrix_with(
    exponents: &[f64],
    horizon: f64,
    precision: &PrecisionConfig,
) -> Result<GramMatrix> {
    check_exponents(exponents, horizon)?;
    let n = exponents.len();
    let mut last_pivot = 0;
    let mut last_bits = 53;
    for &bits in &precision.ladder_bits {
        let g = gram_wide(exponents, horizon, bits);
        let l = match cholesky(&g, bits) {
            Ok(l) => l,
            Err(pivot) => {
                last_pivot = pivot;
                last_bits = bits;
                continue;
            }
        };
        let mut inv = vec![vec![0.0; n]; n];
        for k in 0..n {
            let mut e = vec![Float::new(bits); n];
            e[k] = wide(bits, 1.0);
            let col = cholesky_solve(&l, &e, bits);
            for (j, c) in col.iter().enumerate() {
                inv[j][k] = c.to_f64();
            }
        }
        let entries: Vec<Vec<f64>> = g
            .iter()
            .map(|row| row.iter().map(Float::to_f64).collect())
            .collect();
        let condition = spectral_radius_sym(entries.clone()) * spectral_radius_sym(inv);
        return Ok(GramMatrix {
            exponents: exponents.to_vec(),
            horizon,
            entries,
            condition,
            factorized_bits: bits,
        });
    }
    Err(Error::NotPositiveDefinite {
        precision_bits: last_bits,
        pivot: last_pivot,
    })
}

/// Residuals of the moment conditions, `int sigma_k e^{mu_j t} - delta_kj`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentResidual {
    pub entries: Vec<Vec<f64>>,
    pub max: f64,
}

/// Coefficients of a truncated biorthogonal family, kept at working precision.
#[derive(Debug, Clone)]
pub struct BiorthogonalBasis {
    exponents: Vec<f64>,
    horizon: f64,
    /// `coefficients[k][j]` multiplies `exp(mu_j (t - T))` in `sigma_k`.
    coefficients: Vec<Vec<Float>>,
    precision_bits: u32,
    max_residual: f64,
    condition: f64,
}

impl BiorthogonalBasis {
    /// Wraps externally supplied double-precision coefficients. The residual
    /// is recomputed, so a broken coefficient matrix is reported, not trusted.
    pub fn from_coefficients(
        exponents: &[f64],
        horizon: f64,
        coefficients: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_exponents(exponents, horizon)?;
        let n = exponents.len();
        if coefficients.len() != n || coefficients.iter().any(|r| r.len() != n) {
            return Err(Error::OutOfRange {
                detail: format!("coefficient matrix must be {n}x{n}"),
            });
        }
        let mut basis = Self {
            exponents: exponents.to_vec(),
            horizon,
            coefficients: coefficients
                .into_iter()
                .map(|r| r.into_iter().map(|c| wide(53, c)).collect())
                .collect(),
            precision_bits: 53,
            max_residual: f64::NAN,
            condition: f64::NAN,
        };
        basis.max_residual = moment_residual(&basis).max;
        Ok(basis)
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    /// Gram condition number at construction (NaN for wrapped coefficients).
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Coefficients rounded to double precision.
    pub fn coefficients_f64(&self) -> Vec<Vec<f64>> {
        self.coefficients
            .iter()
            .map(|r| r.iter().map(Float::to_f64).collect())
            .collect()
    }

    /// The exponential sum `sum_k weights[k] sigma_k`.
    pub fn combine(&self, weights: &[f64]) -> ExpSum {
        assert_eq!(weights.len(), self.dim());
        let bits = self.precision_bits;
        let n = self.dim();
        let coeffs = (0..n)
            .map(|j| {
                let mut acc = Float::new(bits);
                for (k, w) in weights.iter().enumerate() {
                    if *w != 0.0 {
                        acc += Float::with_val(bits, &self.coefficients[k][j] * *w);
                    }
                }
                acc
            })
            .collect();
        ExpSum {
            exponents: self.exponents.clone(),
            horizon: self.horizon,
            coefficients: coeffs,
            bits,
        }
    }

    /// `||sum_k d_k sigma_k||^2` through the inverse Gram matrix,
    /// `sum_{k,l} d_k d_l exp(-(mu_k+mu_l)T) (G^-1)_{kl}`.
    pub fn norm_sq_by_inverse_gram(&self, weights: &[f64]) -> f64 {
        // (G^-1)_{kl} = exp(mu_l T) C[l][k], so each term is d_k d_l exp(-mu_k T) C[l][k].
        let bits = self.precision_bits.max(128);
        let mut acc = Float::new(bits);
        for (k, dk) in weights.iter().enumerate() {
            if *dk == 0.0 {
                continue;
            }
            let ek = Float::with_val(bits, -self.exponents[k] * self.horizon).exp();
            for (l, dl) in weights.iter().enumerate() {
                if *dl == 0.0 {
                    continue;
                }
                let term = Float::with_val(bits, &self.coefficients[l][k] * &ek) * (*dk * *dl);
                acc += term;
            }
        }
        acc.to_f64()
    }
}

/// Minimal-norm biorthogonal family on `[0, T]`, climbing the precision ladder
/// until the moment residual is below the configured tolerance.
pub fn biorthogonal_family(
    exponents: &[f64],
    horizon: f64,
    precision: &PrecisionConfig,
) -> Result<BiorthogonalBasis> {
    check_exponents(exponents, horizon)?;
    let n = exponents.len();
    let mut best: Option<(f64, u32)> = None;
    let mut factorized_any = false;
    let mut last_pivot = (53, 0);
    for &bits in &precision.ladder_bits {
        let g = gram_wide(exponents, horizon, bits);
        let l = match cholesky(&g, bits) {
            Ok(l) => l,
            Err(p) => {
                last_pivot = (bits, p);
                continue;
            }
        };
        factorized_any = true;
        let mut coefficients = Vec::with_capacity(n);
        let mut inv_diag_max = 0.0_f64;
        for k in 0..n {
            let mut rhs = vec![Float::new(bits); n];
            rhs[k] = Float::with_val(bits, -exponents[k] * horizon).exp();
            let c = cholesky_solve(&l, &rhs, bits);
            inv_diag_max = inv_diag_max.max(c[k].to_f64().abs());
            coefficients.push(c);
        }
        let mut basis = BiorthogonalBasis {
            exponents: exponents.to_vec(),
            horizon,
            coefficients,
            precision_bits: bits,
            max_residual: f64::NAN,
            condition: f64::NAN,
        };
        let residual = moment_residual(&basis).max;
        basis.max_residual = residual;
        if residual <= precision.residual_tolerance {
            let entries: Vec<Vec<f64>> = g
                .iter()
                .map(|r| r.iter().map(Float::to_f64).collect())
                .collect();
            let inv: Vec<Vec<f64>> = (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| {
                            let e = Float::with_val(bits, exponents[k] * horizon).exp();
                            Float::with_val(bits, &basis.coefficients[k][j] * &e).to_f64()
                        })
                        .collect()
                })
                .collect();
            basis.condition = spectral_radius_sym(entries) * spectral_radius_sym(inv);
            return Ok(basis);
        }
        if best.map_or(true, |(r, _)| residual < r) {
            best = Some((residual, bits));
        }
    }
    match best {
        Some((residual, bits)) => Err(Error::ResidualTooLarge {
            residual,
            tolerance: precision.residual_tolerance,
            precision_bits: bits,
        }),
        None => {
            debug_assert!(!factorized_any);
            Err(Error::NotPositiveDefinite {
                precision_bits: last_pivot.0,
                pivot: last_pivot.1,
            })
        }
    }
}

/// Moment residuals computed in closed form from the Gram entries,
/// `exp(mu_j T) sum_i C[k][i] G[i][j] - delta_kj`, at twice the working
/// precision (at least 256 bits).
pub fn moment_residual(basis: &BiorthogonalBasis) -> MomentResidual {
    let bits = residual_bits(basis.precision_bits);
    let n = basis.dim();
    let g = gram_wide(&basis.exponents, basis.horizon, bits);
    let mut entries = vec![vec![0.0; n]; n];
    let mut max = 0.0_f64;
    for j in 0..n {
        let scale = Float::with_val(bits, basis.exponents[j] * basis.horizon).exp();
        for k in 0..n {
            let mut acc = Float::new(bits);
            for i in 0..n {
                acc += Float::with_val(bits, &basis.coefficients[k][i] * &g[i][j]);
            }
            acc *= &scale;
            if j == k {
                acc -= 1;
            }
            let r = acc.to_f64();
            entries[k][j] = r;
            max = max.max(if r.is_nan() { f64::INFINITY } else { r.abs() });
        }
    }
    MomentResidual { entries, max }
}

/// `sigma_k(t)` for 1-based `k` and `t` in `[0, T]`.
pub fn eval_sigma(basis: &BiorthogonalBasis, k: usize, t: f64) -> Result<f64> {
    if k == 0 || k > basis.dim() {
        return Err(Error::OutOfRange {
            detail: format!("mode index {k} outside 1..={}", basis.dim()),
        });
    }
    if !(0.0..=basis.horizon).contains(&t) {
        return Err(Error::OutOfRange {
            detail: format!("time {t} outside [0, {}]", basis.horizon),
        });
    }
    let bits = basis.precision_bits;
    if bits <= 53 {
        let row = &basis.coefficients[k - 1];
        let v = basis
            .exponents
            .iter()
            .zip(row)
            .map(|(mu, c)| c.to_f64() * (mu * (t - basis.horizon)).exp())
            .collect::<CompensatedSum>()
            .value();
        return Ok(v);
    }
    let mut acc = Float::new(bits);
    for (mu, c) in basis.exponents.iter().zip(&basis.coefficients[k - 1]) {
        let e = Float::with_val(bits, wide(bits, t) - basis.horizon) * *mu;
        acc += e.exp() * c;
    }
    Ok(acc.to_f64())
}

/// A finite sum `sum_j D_j exp(mu_j (t - T))` on `[0, T]`, kept at the
/// precision of the basis it came from.
#[derive(Debug, Clone)]
pub struct ExpSum {
    exponents: Vec<f64>,
    horizon: f64,
    coefficients: Vec<Float>,
    bits: u32,
}

impl ExpSum {
    pub fn zero(exponents: &[f64], horizon: f64) -> Self {
        Self {
            exponents: exponents.to_vec(),
            horizon,
            coefficients: vec![Float::new(53); exponents.len()],
            bits: 53,
        }
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(Float::is_zero)
    }

    pub(crate) fn coefficients_wide(&self) -> &[Float] {
        &self.coefficients
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_wide(t, self.bits.max(64)).to_f64()
    }

    pub(crate) fn eval_wide(&self, t: f64, bits: u32) -> Float {
        let mut acc = Float::new(bits);
        let shifted = Float::with_val(bits, wide(bits, t) - self.horizon);
        for (mu, d) in self.exponents.iter().zip(&self.coefficients) {
            if d.is_zero() {
                continue;
            }
            let e = Float::with_val(bits, &shifted * *mu).exp();
            acc += e * d;
        }
        acc
    }

    /// `||.||^2_{L^2(0,T)} = D^T G D`.
    pub fn l2_norm_sq(&self) -> f64 {
        let bits = self.bits.max(128);
        let n = self.exponents.len();
        let mut acc = Float::new(bits);
        for i in 0..n {
            if self.coefficients[i].is_zero() {
                continue;
            }
            for j in 0..n {
                if self.coefficients[j].is_zero() {
                    continue;
                }
                let g = gram_entry(self.exponents[i], self.exponents[j], self.horizon, bits);
                acc += g * &self.coefficients[i] * &self.coefficients[j];
            }
        }
        acc.to_f64().max(0.0)
    }

    /// `int_0^T self(t) exp(mu_k t) dt`, exactly, for every exponent.
    pub fn moments(&self) -> Vec<f64> {
        let bits = self.bits.max(128);
        let n = self.exponents.len();
        (0..n)
            .map(|k| {
                let mut acc = Float::new(bits);
                for j in 0..n {
                    let g = gram_entry(self.exponents[j], self.exponents[k], self.horizon, bits);
                    acc += g * &self.coefficients[j];
                }
                acc *= Float::with_val(bits, self.exponents[k] * self.horizon).exp();
                acc.to_f64()
            })
            .collect()
    }
}
