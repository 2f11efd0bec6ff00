mod common;

use gsteer::moment::{biorthogonal_family, PrecisionConfig};
use gsteer::quadrature::QuadratureConfig;
use gsteer::simulate::*;
use gsteer::spectral::{build_model, parse_custom_spectral, SpectralKind, SpectralModel};
use proptest::prelude::*;

fn dirichlet(n: usize) -> SpectralModel {
    build_model(SpectralKind::DirichletHeat, n, &QuadratureConfig::default()).unwrap()
}

fn stage_signal(shifted: &SpectralModel, v: &[f64], t: f64) -> gsteer::moment::ExpSum {
    let d: Vec<f64> = v.iter().enumerate().map(|(k, x)| x / shifted.coupling_to_ground(k + 1)).collect();
    biorthogonal_family(&shifted.eigenvalues, t, &PrecisionConfig::default()).unwrap().combine(&d)
}

#[test]
fn identity_coupling_decays_exactly() {
    let m = parse_custom_spectral(
        r#"{"eigenvalues": [0, 1, 4, 9], "coupling": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]],
            "alpha": 1, "q": 1, "b": 1}"#,
    );
    // zero off-diagonal couplings violate the dispersion hypothesis
    assert!(m.is_err());
    let m = SpectralModel::new_unchecked(
        "identity",
        vec![0.0, 1.0, 4.0, 9.0],
        (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
        1.0,
        1.0,
        1.0,
    );
    let x0 = [1.0, -0.5, 0.25, 2.0];
    let traj = simulate_bilinear(&m, &x0, &ConstantControl(1.0), (0.0, 1.0), &SimulatorConfig::default(), None).unwrap();
    for (t, x) in traj.times.iter().zip(&traj.states) {
        for k in 0..4 {
            let exact = x0[k] * (-(m.eigenvalues[k] + 1.0) * t).exp();
            assert!((x[k] - exact).abs() <= 1e-10 * x0[k].abs(), "t={t} k={k} err={:e} steps={}", (x[k] - exact).abs() / x0[k].abs(), traj.steps);
        }
    }
}

#[test]
fn shift_equivalence_over_one_stage() {
    let m = dirichlet(8);
    let (shifted, l1) = shift_spectrum(&m);
    let t = 1.0 / (std::f64::consts::PI * std::f64::consts::PI);
    let mut v = vec![0.0; 8];
    v[1] = 1e-3;
    let p = stage_signal(&shifted, &v, t);
    let mut u0 = v.clone();
    u0[0] += 1.0;
    let cfg = SimulatorConfig::default();
    let u = simulate_bilinear(&m, &u0, &p, (0.0, t), &cfg, None).unwrap();
    let z = simulate_bilinear(&shifted, &u0, &p, (0.0, t), &cfg, None).unwrap();
    let zt = z.final_state();
    let ut = u.final_state();
    for k in 0..8 {
        assert!((zt[k] - (l1 * t).exp() * ut[k]).abs() < 1e-10, "k={k}");
    }
}

#[test]
fn superposition_of_split_parts() {
    // v = vbar + w with w(0) = 0; compare against direct integration of the
    // deviation system and the closed-form linearized solution
    let (shifted, _) = shift_spectrum(&dirichlet(6));
    let t = 0.1;
    let mut v0 = vec![0.0; 6];
    v0[1] = 1e-2;
    v0[2] = -5e-3;
    let p = stage_signal(&shifted, &v0, t);
    let cfg = SimulatorConfig {
        tolerance: 1e-12,
        ..Default::default()
    };
    let split = simulate_stage(&shifted, &v0, &p, &cfg).unwrap();
    let direct = simulate_deviation(&shifted, &v0, &p, (0.0, t), &cfg).unwrap();
    let lin = simulate_linearized(&shifted, &v0, &p, (0.0, t), &cfg).unwrap();
    let w_direct: Vec<f64> = direct.final_state().iter().zip(lin.final_state()).map(|(a, b)| a - b).collect();
    let scale = common::norm(&w_direct);
    let defect: Vec<f64> = w_direct.iter().zip(&split.w_end).map(|(a, b)| a - b).collect();
    assert!(common::norm(&defect) <= 1e-6 * scale, "{} vs {}", common::norm(&defect), scale);
    assert!(common::norm(&split.vbar_end) < 1e-12);
    assert_eq!(split.trajectory.states[0], v0);
}

#[test]
fn tightening_tolerance_approaches_reference() {
    let (shifted, _) = shift_spectrum(&dirichlet(6));
    let p = |t: f64| 3.0 * (7.0 * t).sin() + 1.0;
    let x0 = [1.0, 0.3, -0.2, 0.1, 0.05, -0.02];
    let run = |tol: f64| {
        let cfg = SimulatorConfig {
            tolerance: tol,
            samples: 1,
            ..Default::default()
        };
        simulate_bilinear(&shifted, &x0, &p, (0.0, 0.5), &cfg, None).unwrap().final_state().to_vec()
    };
    let fine = run(1e-13);
    let finer = run(5e-14);
    let reference: Vec<f64> = fine.iter().zip(&finer).map(|(a, b)| 2.0 * b - a).collect();
    let dev = |tol: f64| {
        let x = run(tol);
        common::norm(&x.iter().zip(&reference).map(|(a, b)| a - b).collect::<Vec<_>>())
    };
    let errors: Vec<f64> = [1e-5, 1e-6, 1e-7, 1e-8, 1e-9].iter().map(|t| dev(*t)).collect();
    for w in errors.windows(2) {
        assert!(w[1] <= w[0], "{errors:?}");
    }
}

#[test]
fn mild_solution_is_bounded_by_data() {
    let m = dirichlet(8);
    let x0 = [0.5, 0.1, 0.0, 0.0, -0.2, 0.0, 0.0, 0.3];
    let f = |t: f64, out: &mut [f64]| {
        for (k, o) in out.iter_mut().enumerate() {
            *o = (t * (k + 1) as f64).cos() / (k + 1) as f64;
        }
    };
    let f_l2 = {
        let sq = common::simpson(0.0, 1.0, 2000, |t| {
            let mut out = [0.0; 8];
            f(t, &mut out);
            out.iter().map(|x| x * x).sum()
        });
        sq.sqrt()
    };
    let p = |t: f64| 2.0 * (3.0 * t).cos();
    let traj = simulate_bilinear(&m, &x0, &p, (0.0, 1.0), &SimulatorConfig::default(), Some(&f)).unwrap();
    let c = traj.sup_norm() / (common::norm(&x0) + f_l2);
    assert!(c.is_finite() && c > 0.0 && c < 10.0, "measured C = {c}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn state_linearity(
        x0 in proptest::collection::vec(-1.0f64..1.0, 5),
        c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
        amp in -5.0f64..5.0,
    ) {
        prop_assume!(common::norm(&x0) > 1e-3);
        let m = dirichlet(5);
        let p = move |t: f64| amp * (1.0 + t).ln();
        let cfg = SimulatorConfig { samples: 4, ..Default::default() };
        let a = simulate_bilinear(&m, &x0, &p, (0.0, 0.3), &cfg, None).unwrap();
        let scaled: Vec<f64> = x0.iter().map(|x| c * x).collect();
        let b = simulate_bilinear(&m, &scaled, &p, (0.0, 0.3), &cfg, None).unwrap();
        for (xa, xb) in a.states.iter().zip(&b.states) {
            let diff: Vec<f64> = xa.iter().zip(xb).map(|(u, v)| c * u - v).collect();
            prop_assert!(common::norm(&diff) <= 1e-12 * common::norm(xb).max(1e-300));
        }
    }

    #[test]
    fn free_propagation_composes(dt1 in 0.0f64..0.2, dt2 in 0.0f64..0.2) {
        let m = dirichlet(4);
        let x = gsteer::spectral::ModalVector(vec![1.0, -2.0, 0.5, 0.1]);
        let once = propagate_free(&m, &x, dt1 + dt2);
        let twice = propagate_free(&m, &propagate_free(&m, &x, dt1), dt2);
        for (a, b) in once.0.iter().zip(&twice.0) {
            prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300) + 1e-300);
        }
    }
}
