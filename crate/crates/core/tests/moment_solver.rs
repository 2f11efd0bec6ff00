mod common;

use gsteer::moment::*;
use proptest::prelude::*;

fn family(exponents: &[f64], t: f64) -> BiorthogonalBasis {
    biorthogonal_family(exponents, t, &PrecisionConfig::default()).unwrap()
}

#[test]
fn gram_entries_match_closed_form() {
    let mu = common::shifted_dirichlet(5);
    let g = gram_matrix(&mu, 0.1).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let oracle = common::gram_entry(mu[i], mu[j], 0.1);
            assert!((g.entries[i][j] - oracle).abs() <= 1e-15 * oracle.max(1e-300), "({i},{j})");
        }
    }
}

#[test]
fn biorthogonality_for_builtin_scenarios() {
    use gsteer::quadrature::QuadratureConfig;
    use gsteer::simulate::shift_spectrum;
    use gsteer::spectral::{build_model, SpectralKind};
    for kind in [
        SpectralKind::DirichletHeat,
        SpectralKind::NeumannHeat,
        SpectralKind::VariableCoefficient,
        SpectralKind::RadialBall3d,
    ] {
        for n in [2, 4, 8] {
            let (m, _) = shift_spectrum(&build_model(kind, n, &QuadratureConfig::default()).unwrap());
            for t in [1.0 / (std::f64::consts::PI * std::f64::consts::PI), 0.01] {
                let b = family(&m.eigenvalues, t);
                assert!(b.max_residual() <= 1e-8, "{kind:?} N={n} T={t}: {}", b.max_residual());
            }
        }
    }
}

#[test]
fn residual_matches_independent_quadrature() {
    let mu = common::shifted_dirichlet(3);
    let t = 0.2;
    let b = family(&mu, t);
    for k in 1..=3 {
        for (j, m) in mu.iter().enumerate() {
            let moment = common::simpson(0.0, t, 20_000, |s| eval_sigma(&b, k, s).unwrap() * (m * s).exp());
            let expected = if j + 1 == k { 1.0 } else { 0.0 };
            assert!((moment - expected).abs() < 1e-7, "k={k} j={j}: {moment}");
        }
    }
}

#[test]
fn conditioning_grows_with_modes() {
    let mut previous = 0.0;
    for n in 2..=10 {
        let g = gram_matrix(&common::shifted_dirichlet(n), 0.1).unwrap();
        assert!(g.condition >= previous, "N={n}: {} < {previous}", g.condition);
        previous = g.condition;
    }
}

#[test]
fn norm_identity_against_quadrature() {
    let mu = common::shifted_dirichlet(4);
    let t = 0.1;
    let b = family(&mu, t);
    let d = [0.3, -1.2, 0.05, 2.0];
    let p = b.combine(&d);
    let quad = common::simpson(0.0, t, 20_000, |s| p.eval(s).powi(2));
    let identity = b.norm_sq_by_inverse_gram(&d);
    assert!((identity / quad - 1.0).abs() < 1e-6);
    assert!((p.l2_norm_sq() / quad - 1.0).abs() < 1e-6);
}

/// `h = e^{m (t - T)}` minus its L2 projection onto the family's span has
/// zero moments, so `sigma_k + c h` solves the same moment problem.
fn kernel_element(mu: &[f64], extra: f64, t: f64) -> impl Fn(f64) -> f64 {
    let n = mu.len();
    let g: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| common::gram_entry(mu[i], mu[j], t)).collect()).collect();
    let rhs: Vec<f64> = mu.iter().map(|m| common::gram_entry(*m, extra, t)).collect();
    // Gaussian elimination, fine for N <= 3
    let mut a = g.clone();
    let mut y = rhs.clone();
    for c in 0..n {
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            y[r] -= f * y[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (y[r] - s) / a[r][r];
    }
    let mu = mu.to_vec();
    move |s: f64| {
        let proj: f64 = mu.iter().zip(&x).map(|(m, c)| c * (m * (s - t)).exp()).sum();
        (extra * (s - t)).exp() - proj
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn minimal_norm_among_moment_solutions(
        extra in 0.5f64..20.0,
        c in -3.0f64..3.0,
        k in 1usize..=3,
    ) {
        let mu = [0.0, 3.0, 8.0];
        let t = 1.0;
        prop_assume!(mu.iter().all(|m| (m - extra).abs() > 0.25));
        let b = family(&mu, t);
        let h = kernel_element(&mu, extra, t);
        for m in mu {
            let moment = common::simpson(0.0, t, 4000, |s| h(s) * (m * s).exp());
            prop_assert!(moment.abs() < 1e-8);
        }
        let base = common::simpson(0.0, t, 4000, |s| eval_sigma(&b, k, s).unwrap().powi(2));
        let other = common::simpson(0.0, t, 4000, |s| (eval_sigma(&b, k, s).unwrap() + c * h(s)).powi(2));
        prop_assert!(other >= base * (1.0 - 1e-10));
    }

    #[test]
    fn combinations_have_prescribed_moments(
        d in proptest::collection::vec(-1.0f64..1.0, 4),
        t in 0.02f64..0.5,
    ) {
        let mu = common::shifted_dirichlet(4);
        let b = family(&mu, t);
        let p = b.combine(&d);
        for (m, w) in p.moments().iter().zip(&d) {
            prop_assert!((m - w).abs() <= 1e-7 * (1.0 + w.abs()));
        }
        let a = b.norm_sq_by_inverse_gram(&d);
        let q = p.l2_norm_sq();
        prop_assert!((a - q).abs() <= 1e-9 * a.max(1e-300));
    }

    #[test]
    fn gram_is_symmetric_and_positive(n in 1usize..7, t in 0.01f64..2.0) {
        let g = gram_matrix(&common::shifted_dirichlet(n), t).unwrap();
        for i in 0..n {
            prop_assert!(g.entries[i][i] > 0.0);
            for j in 0..n {
                prop_assert_eq!(g.entries[i][j], g.entries[j][i]);
            }
        }
    }
}
