//! JSON scenario files, pipeline dispatch, and artifact export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, FailureClass, Result};
use crate::moment::PrecisionConfig;
use crate::quadrature::QuadratureConfig;
use crate::simulate::{shift_spectrum, SimulatorConfig, Trajectory};
use crate::spectral::{build_model_with, load_custom_spectral, verify_spectral_hypotheses, Multiplier, SpectralKind, SpectralModel};
use crate::synthesis::constants::theoretical_constants;
use crate::synthesis::run::{run_cone_control, run_local_control, run_strip_control, RunConfig, RunMode, RunResult};
use crate::synthesis::schedule::stage_schedule;
use crate::verify::{contraction_exponents, verify_gm_bound, verify_run, verify_series_identities, GmConfig, RunReport};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONTROL: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Local,
    Strip,
    Cone,
    Constants,
    Hypotheses,
    VerifyIdentities,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Local => "local",
            Pipeline::Strip => "strip",
            Pipeline::Cone => "cone",
            Pipeline::Constants => "constants",
            Pipeline::Hypotheses => "hypotheses",
            Pipeline::VerifyIdentities => "verify-identities",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: SpectralKind,
    /// Spectral data file, required for `custom`.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    /// Multiplier of the built-in problems; defaults per kind.
    #[serde(default)]
    pub multiplier: Option<Multiplier>,
}

fn default_modes() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    pub horizon: f64,
    pub mode: RunMode,
    pub target: f64,
    pub j_max: usize,
    pub c_bar: f64,
    pub c_k: Option<f64>,
    pub c_m: Option<f64>,
    pub r1: Option<f64>,
    pub radius: f64,
    pub probe_directions: usize,
    pub seed: u64,
    /// Modal coordinates of `u_0`, zero-padded to `n_modes`.
    pub initial_state: Vec<f64>,
    pub precision: PrecisionConfig,
}

impl Default for ControlSection {
    fn default() -> Self {
        let r = RunConfig::default();
        Self {
            horizon: r.horizon,
            mode: r.mode,
            target: r.target,
            j_max: r.j_max,
            c_bar: r.c_bar,
            c_k: r.c_k,
            c_m: r.c_m,
            r1: r.r1,
            radius: r.radius,
            probe_directions: r.probe_directions,
            seed: r.seed,
            initial_state: vec![1.0],
            precision: r.precision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulatorSection {
    pub tolerance: f64,
    pub samples: usize,
    pub max_steps: usize,
}

impl Default for SimulatorSection {
    fn default() -> Self {
        let s = SimulatorConfig::default();
        Self {
            tolerance: s.tolerance,
            samples: s.samples,
            max_steps: s.max_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![OutputFormat::Json, OutputFormat::Csv],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerificationSection {
    pub series_n_max: usize,
    pub gm: GmConfig,
}

impl Default for VerificationSection {
    fn default() -> Self {
        Self {
            series_n_max: 30,
            gm: GmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    /// Pipeline to run when the command line does not pick one.
    #[serde(default)]
    pub pipeline: Option<Pipeline>,
    pub model: ModelSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub simulator: SimulatorSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub verification: VerificationSection,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse { detail: e.to_string() })?;
        Ok(cfg)
    }

    /// Reads a scenario; relative custom-model paths resolve against the
    /// scenario's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Parse {
            detail: format!("{}: {e}", path.display()),
        })?;
        let mut cfg = Self::parse(&text)?;
        if let (Some(p), Some(dir)) = (cfg.model.path.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::Config { detail });
        if self.schema != SCHEMA_VERSION {
            return bad(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema));
        }
        match (self.model.kind, &self.model.path) {
            (SpectralKind::Custom, None) => return bad("custom model needs `model.path`".into()),
            (SpectralKind::Custom, Some(p)) if !p.is_file() => {
                return bad(format!("custom model file {} does not exist", p.display()))
            }
            (SpectralKind::Custom, Some(_)) => {}
            (_, Some(_)) => return bad("`model.path` is only used by the custom kind".into()),
            _ => {
                if self.model.n_modes < 2 {
                    return bad("`model.n_modes` must be at least 2".into());
                }
            }
        }
        let c = &self.control;
        let positive = [
            ("control.horizon", c.horizon),
            ("control.target", c.target),
            ("control.c_bar", c.c_bar),
            ("control.radius", c.radius),
            ("simulator.tolerance", self.simulator.tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("`{name}` must be positive (got {v})"));
            }
        }
        for (name, v) in [("control.c_k", c.c_k), ("control.c_m", c.c_m), ("control.r1", c.r1)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("`{name}` must be positive (got {v})"));
                }
            }
        }
        if c.j_max == 0 || self.simulator.samples == 0 || self.simulator.max_steps == 0 {
            return bad("`control.j_max`, `simulator.samples` and `simulator.max_steps` must be positive".into());
        }
        if c.initial_state.iter().any(|x| !x.is_finite()) {
            return bad("`control.initial_state` must be finite".into());
        }
        Ok(())
    }

    pub fn run_config(&self) -> RunConfig {
        let c = &self.control;
        RunConfig {
            mode: c.mode,
            horizon: c.horizon,
            target: c.target,
            j_max: c.j_max,
            c_bar: c.c_bar,
            c_k: c.c_k,
            c_m: c.c_m,
            r1: c.r1,
            radius: c.radius,
            probe_directions: c.probe_directions,
            seed: c.seed,
            precision: c.precision.clone(),
            simulator: SimulatorConfig {
                tolerance: self.simulator.tolerance,
                samples: self.simulator.samples,
                max_steps: self.simulator.max_steps,
                quadrature: QuadratureConfig::default(),
            },
        }
    }

    pub fn build_model(&self) -> Result<SpectralModel> {
        match self.model.kind {
            SpectralKind::Custom => load_custom_spectral(self.model.path.as_ref().expect("validated")),
            kind => build_model_with(
                kind,
                self.model.n_modes,
                self.model.multiplier.unwrap_or(kind.default_multiplier()),
                &QuadratureConfig::default(),
            ),
        }
    }

    /// `u_0` padded with zeros to the model size.
    pub fn initial_state(&self, n: usize) -> Result<Vec<f64>> {
        let u = &self.control.initial_state;
        if u.len() > n {
            return Err(Error::Config {
                detail: format!("initial state has {} entries, model has {n} modes", u.len()),
            });
        }
        let mut out = u.clone();
        out.resize(n, 0.0);
        Ok(out)
    }
}

/// The JSON report and CSV trajectory of one scenario.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub report: Value,
    /// Rows `t, p, norm_dev, x_1..x_N` in the original frame.
    pub trajectory: TrajectoryTable,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryTable {
    pub n_modes: usize,
    pub rows: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    /// Maps the relative deviation `v` of the shifted frame back to
    /// `u = gamma exp(-lambda_1 t) (phi_1 + v)`.
    pub fn from_deviation(traj: &Trajectory, lambda_1: f64, scale: f64, n_modes: usize) -> Self {
        let rows = (0..traj.len())
            .map(|i| {
                let t = traj.times[i];
                let factor = scale * (-lambda_1 * t).exp();
                let mut row = vec![t, traj.controls[i], traj.norms[i]];
                row.extend(traj.states[i].iter().enumerate().map(|(k, v)| {
                    let ground = if k == 0 { 1.0 } else { 0.0 };
                    factor * (ground + v)
                }));
                row
            })
            .collect();
        Self { n_modes, rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,p,norm_dev");
        for k in 1..=self.n_modes {
            let _ = write!(out, ",x_{k}");
        }
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Writes `report.json` and `trajectory.csv` (per the requested formats).
pub fn export_artifacts(artifacts: &Artifacts, formats: &[OutputFormat], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    if formats.contains(&OutputFormat::Json) {
        let path = out_dir.join("report.json");
        let mut text = serde_json::to_string_pretty(&artifacts.report).map_err(|e| Error::Parse { detail: e.to_string() })?;
        text.push('\n');
        fs::write(&path, text)?;
        written.push(path);
    }
    if formats.contains(&OutputFormat::Csv) {
        let path = out_dir.join("trajectory.csv");
        fs::write(&path, artifacts.trajectory.to_csv())?;
        written.push(path);
    }
    Ok(written)
}

pub fn exit_code(class: FailureClass) -> i32 {
    match class {
        FailureClass::Config | FailureClass::Io => EXIT_CONFIG,
        FailureClass::Control => EXIT_CONTROL,
        FailureClass::Numerical => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub exit_code: i32,
    pub status: String,
    pub artifacts: Option<Artifacts>,
    pub written: Vec<PathBuf>,
    /// Set when the failure happened before a report could be built.
    pub message: Option<String>,
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

fn error_value(e: &Error) -> Value {
    let mut v = json!({ "kind": e.kind(), "message": e.to_string() });
    let extra = match e {
        Error::AdmissibilityViolated { stage, value, limit } => json!({ "stage": stage, "value": value, "limit": limit }),
        Error::ContractionFailure { stage, previous, current } => {
            json!({ "stage": stage, "previous": previous, "current": current })
        }
        _ => Value::Null,
    };
    if let Value::Object(m) = extra {
        v.as_object_mut().unwrap().extend(m);
    }
    v
}

fn report_document(echo: &Value, constants: Value, stages: Value, checks: Value, fin: Value, status: &str) -> Value {
    json!({
        "config_echo": echo,
        "constants": constants,
        "stages": stages,
        "checks": checks,
        "final": fin,
        "status": status,
    })
}

fn run_document(echo: &Value, report: &RunReport, error: Option<&Error>) -> Value {
    let checks = verify_run(report, &report.constants);
    let fit = contraction_exponents(&report.norm_sequence()[1..]).ok();
    let status = match error {
        Some(e) => e.kind().to_string(),
        None if report.converged => "converged".to_string(),
        None => "not-converged".to_string(),
    };
    let fin = json!({
        "strategy": report.strategy,
        "mode": report.mode,
        "lambda_1": report.lambda_1,
        "scale": report.scale,
        "initial_deviation": report.initial_deviation,
        "final_deviation": report.final_deviation,
        "final_time": report.final_time,
        "total_control_norm": report.total_control_norm,
        "converged": report.converged,
        "target": report.target,
        "schedule": report.schedule,
        "strip": report.strip,
        "contraction": fit,
        "error": error.map(error_value),
    });
    report_document(
        echo,
        to_value(&report.constants),
        to_value(&report.stages),
        to_value(&checks.checks),
        fin,
        &status,
    )
}

fn run_pipeline(model: &SpectralModel, u0: &[f64], cfg: &RunConfig, pipeline: Pipeline) -> RunResult {
    match pipeline {
        Pipeline::Local => run_local_control(model, u0, cfg),
        Pipeline::Strip => run_strip_control(model, u0, cfg),
        Pipeline::Cone => run_cone_control(model, u0, cfg),
        _ => unreachable!("not a control pipeline"),
    }
}

/// Runs a validated scenario and builds its artifacts. The returned outcome
/// carries the exit code; artifacts are present whenever the model was built.
pub fn execute(cfg: &ScenarioConfig, pipeline: Pipeline) -> ScenarioOutcome {
    let echo = to_value(cfg);
    let fail_early = |e: Error| ScenarioOutcome {
        exit_code: exit_code(e.class()),
        status: e.kind().to_string(),
        artifacts: Some(Artifacts {
            report: report_document(&echo, Value::Null, json!([]), json!([]), json!({ "error": error_value(&e) }), e.kind()),
            trajectory: TrajectoryTable::default(),
        }),
        written: Vec::new(),
        message: None,
    };
    if let Err(e) = cfg.validate() {
        return fail_early(e);
    }
    let model = match cfg.build_model() {
        Ok(m) => m,
        Err(e) => return fail_early(e),
    };
    let n = model.n_modes();
    let run_cfg = cfg.run_config();
    match pipeline {
        Pipeline::Local | Pipeline::Strip | Pipeline::Cone => {
            let u0 = match cfg.initial_state(n) {
                Ok(u) => u,
                Err(e) => return fail_early(e),
            };
            match run_pipeline(&model, &u0, &run_cfg, pipeline) {
                Ok(out) => {
                    let doc = run_document(&echo, &out.report, None);
                    let code = if out.report.converged { EXIT_OK } else { EXIT_CONTROL };
                    ScenarioOutcome {
                        exit_code: code,
                        status: doc["status"].as_str().unwrap_or_default().to_string(),
                        artifacts: Some(Artifacts {
                            report: doc,
                            trajectory: TrajectoryTable::from_deviation(&out.trajectory, out.report.lambda_1, out.report.scale, n),
                        }),
                        written: Vec::new(),
                        message: None,
                    }
                }
                Err(f) => {
                    let code = exit_code(f.error.class());
                    match f.report {
                        Some(report) => {
                            let doc = run_document(&echo, &report, Some(&f.error));
                            let table = f
                                .trajectory
                                .as_ref()
                                .map(|t| TrajectoryTable::from_deviation(t, report.lambda_1, report.scale, n))
                                .unwrap_or(TrajectoryTable {
                                    n_modes: n,
                                    rows: Vec::new(),
                                });
                            ScenarioOutcome {
                                exit_code: code,
                                status: f.error.kind().to_string(),
                                artifacts: Some(Artifacts {
                                    report: doc,
                                    trajectory: table,
                                }),
                                written: Vec::new(),
                                message: None,
                            }
                        }
                        None => fail_early(f.error),
                    }
                }
            }
        }
        Pipeline::Constants => {
            let (shifted, _) = shift_spectrum(&model);
            let schedule = match stage_schedule(run_cfg.horizon, shifted.gap_alpha, run_cfg.j_max) {
                Ok(s) => s,
                Err(e) => return fail_early(e),
            };
            let constants = theoretical_constants(&shifted, schedule.t_final, &run_cfg.constants_config());
            let gm_cfg = GmConfig {
                c_bar: run_cfg.c_bar,
                ..cfg.verification.gm.clone()
            };
            let gm = match verify_gm_bound(&shifted, &gm_cfg) {
                Ok(g) => g,
                Err(e) => return fail_early(e),
            };
            let checks: Vec<Value> = gm
                .points
                .iter()
                .map(|p| {
                    json!({
                        "name": "gm_bound",
                        "t": p.t,
                        "ln_g_m": p.ln_g_m,
                        "ln_bound": p.ln_bound,
                        "passed": p.holds,
                        "inner_sum": p.inner_sum,
                        "envelope": p.envelope,
                        "envelope_passed": p.envelope_holds,
                    })
                })
                .collect();
            let ok = gm.passed();
            let status = if ok { "ok" } else { "bound-violated" };
            let fin = json!({
                "schedule": schedule,
                "c_m": gm.c_m,
                "c_q": gm.c_q,
                "c_alpha_q": gm.c_alpha_q,
                "passed": ok,
            });
            table_only(
                report_document(&echo, to_value(&constants), json!([]), Value::Array(checks), fin, status),
                n,
                if ok { EXIT_OK } else { EXIT_NUMERICAL },
                status,
            )
        }
        Pipeline::Hypotheses => {
            let h = verify_spectral_hypotheses(&model);
            let checks = json!([
                { "name": "gap", "passed": h.gap_ok, "measured": h.min_gap, "declared": h.declared_alpha },
                { "name": "dispersion", "passed": h.dispersion_ok, "measured": h.dispersion_min, "declared": h.declared_b },
                { "name": "symmetry", "passed": h.symmetric, "measured": h.symmetry_defect },
                { "name": "nonzero_coupling", "passed": h.zero_coupling.is_none(), "measured": h.coupling_11 },
            ]);
            let ok = h.passed();
            let status = if ok { "ok" } else { "HypothesisViolation" };
            table_only(
                report_document(&echo, Value::Null, json!([]), checks, to_value(&h), status),
                n,
                if ok { EXIT_OK } else { EXIT_CONFIG },
                status,
            )
        }
        Pipeline::VerifyIdentities => match verify_series_identities(cfg.verification.series_n_max) {
            Ok(s) => {
                let ok = s.passed();
                let status = if ok { "ok" } else { "identity-failed" };
                let fin = json!({ "monotone": s.monotone, "passed": ok });
                table_only(
                    report_document(&echo, Value::Null, json!([]), to_value(&s.checks), fin, status),
                    n,
                    if ok { EXIT_OK } else { EXIT_NUMERICAL },
                    status,
                )
            }
            Err(e) => fail_early(e),
        },
    }
}

fn table_only(report: Value, n: usize, exit_code: i32, status: &str) -> ScenarioOutcome {
    ScenarioOutcome {
        exit_code,
        status: status.to_string(),
        artifacts: Some(Artifacts {
            report,
            trajectory: TrajectoryTable {
                n_modes: n,
                rows: Vec::new(),
            },
        }),
        written: Vec::new(),
        message: None,
    }
}

/// Loads, runs and exports a scenario. `pipeline` and `out_dir` override the
/// file's choices. A config that does not parse produces no artifacts.
pub fn run_scenario(
    config_path: &Path,
    pipeline: Option<Pipeline>,
    out_dir: Option<&Path>,
    seed: Option<u64>,
) -> ScenarioOutcome {
    let mut cfg = match ScenarioConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            return ScenarioOutcome {
                exit_code: exit_code(e.class()),
                status: e.kind().to_string(),
                artifacts: None,
                written: Vec::new(),
                message: Some(e.to_string()),
            }
        }
    };
    if let Some(s) = seed {
        cfg.control.seed = s;
    }
    if let Some(d) = out_dir {
        cfg.output.directory = d.to_path_buf();
    }
    let pipeline = match pipeline.or(cfg.pipeline) {
        Some(p) => p,
        None => {
            return ScenarioOutcome {
                exit_code: EXIT_CONFIG,
                status: "ConfigError".into(),
                artifacts: None,
                written: Vec::new(),
                message: Some("no pipeline given on the command line or in the config".into()),
            }
        }
    };
    cfg.pipeline = Some(pipeline);
    let mut outcome = execute(&cfg, pipeline);
    if let Some(a) = &outcome.artifacts {
        match export_artifacts(a, &cfg.output.formats, &cfg.output.directory) {
            Ok(w) => outcome.written = w,
            Err(e) => {
                outcome.exit_code = exit_code(e.class());
                outcome.status = e.kind().to_string();
                outcome.message = Some(e.to_string());
            }
        }
    }
    outcome
}
