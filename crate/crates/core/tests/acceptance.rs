//! One line per acceptance criterion; exits non-zero if any fails.

use std::f64::consts::{LN_2, PI};
use std::time::Instant;

use gsteer::moment::{biorthogonal_family, PrecisionConfig};
use gsteer::quadrature::QuadratureConfig;
use gsteer::simulate::*;
use gsteer::spectral::*;
use gsteer::synthesis::run::*;
use gsteer::synthesis::stage::{eval_control, synthesize_stage_control};
use gsteer::verify::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn dirichlet(n: usize) -> SpectralModel {
    build_model(SpectralKind::DirichletHeat, n, &QuadratureConfig::default()).unwrap()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion3_state() -> Vec<f64> {
    let mut u = vec![0.0; 8];
    u[0] = 1.0;
    u[1] = 1e-3 / 2f64.sqrt();
    u[2] = 1e-3 / 2f64.sqrt();
    u
}

fn moment_certification() -> Outcome {
    let (m, _) = shift_spectrum(&dirichlet(8));
    let start = Instant::now();
    let b = biorthogonal_family(&m.eigenvalues, 0.1, &PrecisionConfig::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let r = b.max_residual();
    ensure(
        r <= 1e-8 && secs < 5.0,
        format!("residual {r:.2e}, {} bits, {secs:.2} s", b.precision_bits()),
    )
}

fn linearized_exactness() -> Outcome {
    let (m, _) = shift_spectrum(&dirichlet(8));
    let t = 0.1;
    let min_c = (1..=8).map(|k| m.coupling_to_ground(k).abs()).fold(f64::INFINITY, f64::min);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let mut v: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = 1e-3 / norm(&v);
        v.iter_mut().for_each(|x| *x *= s);
        let c = synthesize_stage_control(&m, &v, t, &PrecisionConfig::default()).map_err(|e| e.to_string())?;
        let lin = simulate_linearized(&m, &v, &c, (0.0, t), &SimulatorConfig::default()).map_err(|e| e.to_string())?;
        let bound = 10.0 * c.residual * 1e-3 / min_c;
        let end = norm(lin.final_state());
        if end > bound {
            return Err(format!("|vbar(T)| = {end:.2e} > {bound:.2e}"));
        }
        worst = worst.max(end / bound);
    }
    Ok(format!("5 random directions, worst |vbar(T)|/bound = {worst:.2e}"))
}

fn local_run() -> Result<RunOutcome, String> {
    run_local_control(&dirichlet(8), &criterion3_state(), &RunConfig::default()).map_err(|e| e.to_string())
}

fn local_controllability(out: &RunOutcome) -> Outcome {
    let r = &out.report;
    let seq = r.norm_sequence();
    let last = seq.len() - 1;
    let window = &seq[1..=last.min(6)];
    let fit = contraction_exponents(window).map_err(|e| e.to_string())?;
    let ratio = fit.slope / LN_2;
    let gates = r.stages.iter().all(|s| s.gate <= 1.0);
    ensure(
        r.converged && r.final_deviation <= 1e-12 && r.stages.len() <= 8 && (0.5..=1.1).contains(&ratio) && gates,
        format!(
            "{} stages, final {:.2e}, slope {ratio:.3}·ln 2, max gate {:.2e}",
            r.stages.len(),
            r.final_deviation,
            r.stages.iter().map(|s| s.gate).fold(0.0, f64::max)
        ),
    )
}

fn estimate_suite(out: &RunOutcome) -> Outcome {
    let r = &out.report;
    let checks = verify_run(r, &r.constants);
    let mut tight = Vec::new();
    for c in checks.named("wT").chain(checks.named("estimvn")) {
        if !c.has_slack() {
            tight.push(format!("{}@{:?} margin {:.3}", c.name, c.stage, c.margin));
        }
    }
    let p = checks.named("pestimate").next().unwrap();
    let min_margin = |name| checks.named(name).map(|c| c.margin).fold(f64::INFINITY, f64::min);
    ensure(
        tight.is_empty() && r.total_control_norm.is_finite(),
        format!(
            "min margin wT {:.2e}, estimvn {:.2e}; ||p||^2 = {:.3e} vs bound {:.3e} ({}) {}",
            min_margin("wT"),
            min_margin("estimvn"),
            p.lhs,
            p.rhs,
            if p.passed { "holds" } else { "exceeds" },
            tight.join(", ")
        ),
    )
}

fn hypothesis_reproduction() -> Outcome {
    let q = QuadratureConfig::default();
    let d = verify_spectral_hypotheses(&dirichlet(8));
    let radial = verify_spectral_hypotheses(&build_model(SpectralKind::RadialBall3d, 8, &q).unwrap());
    let c11 = (2.0 * PI * PI - 3.0) / (6.0 * PI * PI);
    let neumann = build_model(SpectralKind::NeumannHeat, 8, &q).unwrap();
    let nl = neumann.original_eigenvalues();
    let neumann_err = (2..=8)
        .map(|k| (nl[k - 1] * neumann.coupling_to_ground(k).abs() - 8f64.sqrt()).abs())
        .fold(0.0, f64::max);
    let vc = build_model(SpectralKind::VariableCoefficient, 8, &q).unwrap();
    let vr = verify_spectral_hypotheses(&vc);
    let gap_err = (d.min_gap_original - PI).abs().max((radial.min_gap_original - PI).abs());
    ensure(
        gap_err < 1e-10
            && d.declared_alpha == PI
            && (d.coupling_11 - c11).abs() < 1e-10
            && neumann_err < 1e-10
            && vc.gap_alpha == PI / LN_2
            && vr.gap_ok,
        format!(
            "gap error {gap_err:.1e}, c11 error {:.1e}, Neumann error {neumann_err:.1e}, variable-coefficient gap {:.4} >= {:.4}",
            (d.coupling_11 - c11).abs(),
            vr.min_gap,
            vc.gap_alpha
        ),
    )
}

fn shift_equivalence() -> Outcome {
    let m = dirichlet(8);
    let (shifted, l1) = shift_spectrum(&m);
    let t = 0.1;
    let mut v = vec![0.0; 8];
    v[1] = 1e-3;
    v[3] = -5e-4;
    let c = synthesize_stage_control(&shifted, &v, t, &PrecisionConfig::default()).map_err(|e| e.to_string())?;
    let mut u0 = v.clone();
    u0[0] += 1.0;
    let cfg = SimulatorConfig::default();
    let u = simulate_bilinear(&m, &u0, &c, (0.0, t), &cfg, None).map_err(|e| e.to_string())?;
    let z = simulate_bilinear(&shifted, &u0, &c, (0.0, t), &cfg, None).map_err(|e| e.to_string())?;
    let mut err: f64 = 0.0;
    for (tu, (xu, xz)) in u.times.iter().zip(u.states.iter().zip(&z.states)) {
        for k in 0..8 {
            err = err.max((xz[k] - (l1 * tu).exp() * xu[k]).abs());
        }
    }
    ensure(err <= 1e-10, format!("max |z - e^(lambda_1 t) u| = {err:.2e}"))
}

fn strip_strategy(local: &RunOutcome) -> Outcome {
    let m = dirichlet(8);
    let r1 = calibrate_r1(&m, &RunConfig::default()).map_err(|e| e.to_string())?;
    let cfg = RunConfig {
        r1: Some(r1),
        radius: 10.0 * r1,
        ..Default::default()
    };
    let mut u0 = vec![0.0; 8];
    u0[0] = 1.0;
    u0[1] = 5.0 * r1;
    u0[2] = -5.0 * r1;
    let out = run_strip_control(&m, &u0, &cfg).map_err(|e| e.to_string())?;
    let strip = out.report.strip.clone().unwrap();
    let mu2 = 3.0 * PI * PI;
    let dur_err = (strip.duration - 100f64.ln() / (2.0 * mu2)).abs();
    let r = &out.report;
    ensure(
        dur_err <= 1e-12
            && strip.deviation_sq_after < 2.0 * r1 * r1
            && r.converged
            && r.final_deviation <= 1e-12
            && r.stages.len() <= 8
            && r.stages.iter().all(|s| s.gate <= 1.0)
            && local.report.converged,
        format!(
            "r1 = 2^{}, duration error {dur_err:.1e}, dev^2 {:.2e} < {:.2e}, {} stages, final {:.2e}",
            r1.log2(),
            strip.deviation_sq_after,
            2.0 * r1 * r1,
            r.stages.len(),
            r.final_deviation
        ),
    )
}

fn cone_strategy() -> Outcome {
    let m = dirichlet(8);
    let base = RunConfig::default();
    let r1 = calibrate_r1(&m, &base).map_err(|e| e.to_string())?;
    let cfg = RunConfig { r1: Some(r1), ..base };
    let mut u0 = vec![0.0; 8];
    u0[0] = 2.0;
    u0[1] = 0.1;
    let out = run_cone_control(&m, &u0, &cfg).map_err(|e| e.to_string())?;
    let r = &out.report;
    // u(t; p, c u0) = c u(t; p, u0) under the run's control
    let p = |t: f64| eval_control(&out.control, t);
    let horizon = out.control.end().max(r.final_time);
    // the identity is exact; integrate tightly enough that solver error stays below it
    let sim = SimulatorConfig {
        tolerance: 1e-14,
        ..Default::default()
    };
    let a = simulate_bilinear(&m, &u0, &p, (0.0, horizon), &sim, None).map_err(|e| e.to_string())?;
    let c = 3.0;
    let cu0: Vec<f64> = u0.iter().map(|x| c * x).collect();
    let b = simulate_bilinear(&m, &cu0, &p, (0.0, horizon), &sim, None).map_err(|e| e.to_string())?;
    let mut rel: f64 = 0.0;
    for (xa, xb) in a.states.iter().zip(&b.states) {
        let diff: Vec<f64> = xa.iter().zip(xb).map(|(x, y)| c * x - y).collect();
        rel = rel.max(norm(&diff) / norm(xb));
    }
    ensure(
        r.converged && r.final_deviation <= 1e-12 && rel <= 1e-12,
        format!(
            "gamma = {:.3}, final {:.2e}, rescaling defect {rel:.1e}",
            r.scale, r.final_deviation
        ),
    )
}

fn series_identities() -> Outcome {
    let r = verify_series_identities(30).map_err(|e| e.to_string())?;
    let last = r.checks.last().unwrap();
    ensure(
        r.passed(),
        format!("exact for n <= 30, 6 - S_30 = {:.3e} <= {:.3e}", last.remainder, last.remainder_bound),
    )
}

fn gm_bound() -> Outcome {
    let r = verify_gm_bound(&dirichlet(8), &GmConfig::default()).map_err(|e| e.to_string())?;
    ensure(
        r.passed(),
        format!("C_M = {:.4}, {} verification points", r.c_m, r.points.len()),
    )
}

fn integrator_oracle() -> Outcome {
    let n = 6;
    let mu: Vec<f64> = (0..n).map(|k| (k * k) as f64 * PI * PI).collect();
    let eye = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let m = SpectralModel::new_unchecked("identity", mu.clone(), eye, PI, 1.0, 1.0);
    let x0: Vec<f64> = (0..n).map(|k| 1.0 / (k + 1) as f64).collect();
    let traj = simulate_bilinear(&m, &x0, &ConstantControl(1.0), (0.0, 1.0), &SimulatorConfig::default(), None)
        .map_err(|e| e.to_string())?;
    let mut err: f64 = 0.0;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        for k in 0..n {
            let exact = x0[k] * (-(mu[k] + 1.0) * t).exp();
            err = err.max((x[k] - exact).abs() / x0[k]);
        }
    }
    ensure(err <= 1e-10, format!("max relative modal error {err:.2e}"))
}

fn main() {
    let local = local_run();
    let local = &local;
    let with_local = |f: fn(&RunOutcome) -> Outcome| move || local.as_ref().map_err(Clone::clone).and_then(f);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("moment certification", Box::new(moment_certification)),
        ("linearized exactness", Box::new(linearized_exactness)),
        ("local controllability", Box::new(with_local(local_controllability))),
        ("estimate suite", Box::new(with_local(estimate_suite))),
        ("hypothesis reproduction", Box::new(hypothesis_reproduction)),
        ("shift equivalence", Box::new(shift_equivalence)),
        ("strip strategy", Box::new(with_local(strip_strategy))),
        ("cone strategy", Box::new(cone_strategy)),
        ("series identities", Box::new(series_identities)),
        ("G_M bound", Box::new(gm_bound)),
        ("integrator oracle", Box::new(integrator_oracle)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
