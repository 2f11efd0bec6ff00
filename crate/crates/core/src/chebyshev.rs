//! Chebyshev interpolants used as fast double-precision proxies of signals
//! that are only cheap to evaluate in wide arithmetic.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct Chebyshev {
    a: f64,
    b: f64,
    coeffs: Vec<f64>,
}

impl Chebyshev {
    /// Interpolates several functions at shared first-kind Chebyshev points,
    /// doubling the point count until every trailing block of coefficients is
    /// below `rel_tol` times the largest coefficient of its function.
    ///
    /// `f(t)` returns one value per function. The returned flag is false when
    /// `max_points` was reached without meeting the tolerance.
    pub fn fit_many<F>(a: f64, b: f64, count: usize, rel_tol: f64, max_points: usize, mut f: F) -> (Vec<Self>, bool)
    where
        F: FnMut(f64) -> Vec<f64>,
    {
        let mut n = 32usize.min(max_points.max(2));
        loop {
            let nodes: Vec<f64> = (0..n)
                .map(|i| (PI * (i as f64 + 0.5) / n as f64).cos())
                .collect();
            let samples: Vec<Vec<f64>> = nodes
                .iter()
                .map(|x| {
                    let v = f(0.5 * (b - a) * x + 0.5 * (b + a));
                    debug_assert_eq!(v.len(), count);
                    v
                })
                .collect();
            let table = cosine_table(n);
            let fits: Vec<Self> = (0..count)
                .map(|m| {
                    let column: Vec<f64> = samples.iter().map(|s| s[m]).collect();
                    Self {
                        a,
                        b,
                        coeffs: dct(&column, &table),
                    }
                })
                .collect();
            let converged = fits.iter().all(|c| c.tail_ratio() <= rel_tol);
            if converged || n >= max_points {
                return (fits, converged);
            }
            n = (2 * n).min(max_points);
        }
    }

    pub fn fit<F: FnMut(f64) -> f64>(a: f64, b: f64, rel_tol: f64, max_points: usize, mut f: F) -> (Self, bool) {
        let (mut v, ok) = Self::fit_many(a, b, 1, rel_tol, max_points, |t| vec![f(t)]);
        (v.pop().unwrap(), ok)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Largest of the last four coefficients relative to the largest one.
    fn tail_ratio(&self) -> f64 {
        let scale = self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let k = self.coeffs.len().saturating_sub(4);
        self.coeffs[k..].iter().fold(0.0_f64, |m, c| m.max(c.abs())) / scale
    }

    /// Clenshaw evaluation; arguments are clamped to the fitted interval.
    pub fn eval(&self, t: f64) -> f64 {
        let x = ((2.0 * t - self.a - self.b) / (self.b - self.a)).clamp(-1.0, 1.0);
        let (mut b1, mut b2) = (0.0, 0.0);
        for c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * x * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + self.coeffs[0]
    }
}

/// `cos(pi k (i + 1/2) / n)` indexed by `k * n + i`.
fn cosine_table(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let mut t = Vec::with_capacity(n * n);
    for k in 0..n {
        for i in 0..n {
            // reduce k (2i + 1) modulo 4n to keep the argument small
            let m = (k * (2 * i + 1)) % (4 * n);
            t.push((PI * m as f64 / (2.0 * nf)).cos());
        }
    }
    t
}

/// Chebyshev coefficients from values at first-kind points.
fn dct(values: &[f64], table: &[f64]) -> Vec<f64> {
    let n = values.len();
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let row = &table[k * n..(k + 1) * n];
            let s: f64 = values.iter().zip(row).map(|(v, c)| v * c).sum();
            if k == 0 {
                s / nf
            } else {
                2.0 * s / nf
            }
        })
        .collect()
}
