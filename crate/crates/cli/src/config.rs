//! Flat key-value experiment configuration.
//!
//! Files use dotted keys with one value per line, for example
//!
//! ```text
//! model = "pendulum"
//! noise.Rn = 0.1
//! noise.Qd = [[0.1, 0.0], [0.0, 0.1]]
//! ```
//!
//! Matrices are lists of rows; a `1×1` matrix may be written as a bare
//! number. The syntax is a subset of TOML. Keys under `artifact.` are
//! written into manifests for provenance and ignored on input.

use std::fmt::Write as _;
use std::str::FromStr;

use sdre::estimators::{EstimatorKind, NoiseConfig, PfPropagation};
use sdre::models::{LinearModel, PendulumParams, VdpParams};
use sdre::numerics::{Mat, Vector};
use sdre::sim::{ControlSource, InjectedNoise, ModelSpec, SimConfig, SimError};
use toml::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("parse error{}{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default(), field.as_ref().map(|f| format!(" (field `{f}`)")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        field: Option<String>,
        message: String,
    },
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
}

impl ConfigError {
    fn field(field: &str, line: Option<usize>, message: impl Into<String>) -> Self {
        ConfigError::Parse {
            line,
            field: Some(field.to_string()),
            message: message.into(),
        }
    }

    fn invalid(field: &str, message: impl Into<String>) -> Self {
        ConfigError::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Named parameter sets for the two benchmark studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentPreset {
    PendulumPaper,
    VdpPaper,
}

impl ExperimentPreset {
    pub const ALL: [ExperimentPreset; 2] =
        [ExperimentPreset::PendulumPaper, ExperimentPreset::VdpPaper];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentPreset::PendulumPaper => "pendulum-paper",
            ExperimentPreset::VdpPaper => "vdp-paper",
        }
    }

    pub fn expand(self) -> SimConfig {
        match self {
            ExperimentPreset::PendulumPaper => SimConfig::pendulum_benchmark(),
            ExperimentPreset::VdpPaper => SimConfig::vdp_benchmark(),
        }
    }

    fn for_model(name: &str) -> Option<Self> {
        match name {
            "pendulum" => Some(ExperimentPreset::PendulumPaper),
            "vdp" => Some(ExperimentPreset::VdpPaper),
            _ => None,
        }
    }
}

impl FromStr for ExperimentPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pendulum-paper" => Ok(ExperimentPreset::PendulumPaper),
            "vdp-paper" => Ok(ExperimentPreset::VdpPaper),
            _ => Err(format!(
                "unknown preset `{s}` (expected pendulum-paper or vdp-paper)"
            )),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<ExperimentPreset>,
    pub model: Option<String>,
    pub estimator: Option<EstimatorKind>,
    pub runs: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub particles: Option<usize>,
}

/// A parsed experiment: the simulation config plus the estimator list used
/// by `compare`.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: SimConfig,
    pub estimators: Option<Vec<EstimatorKind>>,
}

struct Entry {
    key: String,
    value: Value,
    line: Option<usize>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn key_line(text: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    let starts = |probe: &str, line: &str| {
        line.strip_prefix(probe)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    };
    let lines: Vec<&str> = text.lines().map(str::trim).collect();
    lines
        .iter()
        .position(|l| starts(key, l))
        .or_else(|| lines.iter().position(|l| starts(leaf, l)))
        .map(|i| i + 1)
}

fn flatten(prefix: &str, table: &toml::Table, text: &str, out: &mut Vec<Entry>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, text, out),
            other => out.push(Entry {
                line: key_line(text, &key),
                key,
                value: other.clone(),
            }),
        }
    }
}

fn parse_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse {
            line: e.span().map(|s| line_of(text, s.start)),
            field: None,
            message: e.message().trim().to_string(),
        })?;
    let mut out = Vec::new();
    flatten("", &table, text, &mut out);
    Ok(out)
}

impl Entry {
    fn err(&self, message: impl Into<String>) -> ConfigError {
        ConfigError::field(&self.key, self.line, message)
    }

    fn float(&self) -> Result<f64, ConfigError> {
        as_float(&self.value).ok_or_else(|| self.err("expected a number"))
    }

    fn count(&self) -> Result<usize, ConfigError> {
        match &self.value {
            Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            _ => Err(self.err("expected a non-negative integer")),
        }
    }

    fn seed(&self) -> Result<u64, ConfigError> {
        match &self.value {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            Value::String(s) => s
                .parse()
                .map_err(|_| self.err("expected an unsigned 64-bit integer")),
            _ => Err(self.err("expected a non-negative integer")),
        }
    }

    fn string(&self) -> Result<&str, ConfigError> {
        self.value
            .as_str()
            .ok_or_else(|| self.err("expected a quoted string"))
    }

    fn parsed<T: FromStr<Err = String>>(&self) -> Result<T, ConfigError> {
        self.string()?.parse().map_err(|e: String| self.err(e))
    }

    fn vector(&self) -> Result<Vector, ConfigError> {
        let items = self
            .value
            .as_array()
            .ok_or_else(|| self.err("expected a list of numbers"))?;
        let vals = items
            .iter()
            .map(|v| as_float(v).ok_or_else(|| self.err("expected a list of numbers")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Vector::from_vec(vals))
    }

    fn matrix(&self) -> Result<Mat, ConfigError> {
        if let Some(v) = as_float(&self.value) {
            return Ok(Mat::from_element(1, 1, v));
        }
        let shape_err = || self.err("expected a list of equal-length rows of numbers");
        let rows = self.value.as_array().ok_or_else(shape_err)?;
        let mut data = Vec::new();
        let mut ncols = None;
        for row in rows {
            let row = row.as_array().ok_or_else(shape_err)?;
            if *ncols.get_or_insert(row.len()) != row.len() {
                return Err(shape_err());
            }
            for v in row {
                data.push(as_float(v).ok_or_else(shape_err)?);
            }
        }
        let ncols = ncols.unwrap_or(0);
        if rows.is_empty() || ncols == 0 {
            return Err(self.err("matrix must not be empty"));
        }
        Ok(Mat::from_row_slice(rows.len(), ncols, &data))
    }

    fn estimators(&self) -> Result<Vec<EstimatorKind>, ConfigError> {
        let items = self
            .value
            .as_array()
            .ok_or_else(|| self.err("expected a list of estimator names"))?;
        items
            .iter()
            .map(|v| {
                v.as_str()
                    .ok_or_else(|| self.err("expected a list of estimator names"))?
                    .parse()
                    .map_err(|e: String| self.err(e))
            })
            .collect()
    }
}

fn as_float(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn base_config(
    preset: Option<ExperimentPreset>,
    model: Option<&str>,
) -> Result<SimConfig, ConfigError> {
    if let Some(p) = preset {
        let cfg = p.expand();
        if let Some(m) = model {
            if m != cfg.model.name() {
                return Err(ConfigError::invalid(
                    "model",
                    format!("`{m}` conflicts with preset {}", p.as_str()),
                ));
            }
        }
        return Ok(cfg);
    }
    match model {
        None => Ok(ExperimentPreset::PendulumPaper.expand()),
        Some(name) => match ExperimentPreset::for_model(name) {
            Some(p) => Ok(p.expand()),
            None if name == "linear" => Ok(ExperimentPreset::PendulumPaper.expand()),
            None => Err(ConfigError::invalid(
                "model",
                format!("unknown model `{name}` (expected pendulum, vdp or linear)"),
            )),
        },
    }
}

#[derive(Default)]
struct LinearParts {
    a: Option<Mat>,
    b: Option<Mat>,
    c: Option<Mat>,
    x_ref: Option<Vector>,
    x0: Option<Vector>,
}

fn apply_model_entry(
    cfg: &mut SimConfig,
    linear: &mut LinearParts,
    e: &Entry,
) -> Result<(), ConfigError> {
    let (section, leaf) = e.key.split_once('.').unwrap_or(("", &e.key));
    let model_name = cfg.model.name();
    match (section, &mut cfg.model) {
        ("pendulum", ModelSpec::Pendulum(p)) => match leaf {
            "l" => p.l = e.float()?,
            "m" => p.m = e.float()?,
            "k" => p.k = e.float()?,
            "g" => p.g = e.float()?,
            _ => return Err(e.err("unknown key")),
        },
        ("vdp", ModelSpec::Vdp(p)) => match leaf {
            "mu" => p.mu = e.float()?,
            _ => return Err(e.err("unknown key")),
        },
        ("linear", ModelSpec::Linear(_)) => match leaf {
            "A" => linear.a = Some(e.matrix()?),
            "B" => linear.b = Some(e.matrix()?),
            "C" => linear.c = Some(e.matrix()?),
            "x_ref" => linear.x_ref = Some(e.vector()?),
            "x0" => linear.x0 = Some(e.vector()?),
            _ => return Err(e.err("unknown key")),
        },
        _ => return Err(e.err(format!("does not apply to model `{model_name}`"))),
    }
    Ok(())
}

fn finish_linear(cfg: &mut SimConfig, parts: LinearParts) -> Result<(), ConfigError> {
    let ModelSpec::Linear(current) = &cfg.model else {
        return Ok(());
    };
    let a = parts.a.unwrap_or_else(|| current.a.clone());
    let b = parts.b.unwrap_or_else(|| current.b.clone());
    let c = parts.c.unwrap_or_else(|| current.c.clone());
    let n = a.nrows();
    let x_ref = parts.x_ref.unwrap_or_else(|| {
        if current.x_ref.len() == n {
            current.x_ref.clone()
        } else {
            Vector::zeros(n)
        }
    });
    let x0 = parts.x0.unwrap_or_else(|| cfg.x0.clone());
    let model =
        LinearModel::new(a, b, c).map_err(|e| ConfigError::invalid("linear", e.to_string()))?;
    cfg.model = ModelSpec::Linear(model.with_reference(x_ref).with_initial_state(x0));
    Ok(())
}

fn placeholder_linear() -> ModelSpec {
    ModelSpec::Linear(LinearModel {
        a: Mat::zeros(0, 0),
        b: Mat::zeros(0, 0),
        c: Mat::zeros(0, 0),
        x_ref: Vector::zeros(0),
        x0: Vector::zeros(0),
    })
}

/// Builds a validated experiment from preset, file text and flags, in that
/// order of precedence.
pub fn parse_config(text: Option<&str>, flags: &Overrides) -> Result<Experiment, ConfigError> {
    let entries = match text {
        Some(t) => parse_entries(t)?,
        None => Vec::new(),
    };
    let find = |key: &str| entries.iter().find(|e| e.key == key);

    let preset = match (flags.preset, find("preset")) {
        (Some(p), _) => Some(p),
        (None, Some(e)) => Some(e.parsed()?),
        (None, None) => None,
    };
    let model_name = match (&flags.model, find("model")) {
        (Some(m), _) => Some(m.clone()),
        (None, Some(e)) => Some(e.string()?.to_string()),
        (None, None) => None,
    };
    let mut cfg = base_config(preset, model_name.as_deref())?;
    if model_name.as_deref() == Some("linear") && !matches!(cfg.model, ModelSpec::Linear(_)) {
        cfg.model = placeholder_linear();
    }

    let mut linear = LinearParts::default();
    let mut injected = (None, None);
    let mut estimators = None;
    for e in &entries {
        match e.key.as_str() {
            "preset" | "model" => {}
            k if k.starts_with("artifact.") => {}
            "estimator" => cfg.estimator = e.parsed()?,
            "estimators" => estimators = Some(e.estimators()?),
            "dt" => cfg.dt = e.float()?,
            "horizon" => cfg.horizon = e.float()?,
            "n_runs" => cfg.n_runs = e.count()?,
            "seed" => cfg.seed = e.seed()?,
            "noise.Qd" => cfg.noise.qd = e.matrix()?,
            "noise.Rn" => cfg.noise.rn = e.matrix()?,
            "injected.Qd" => injected.0 = Some(e.matrix()?),
            "injected.Rn" => injected.1 = Some(e.matrix()?),
            "controller.Qw" => cfg.controller.qw = e.matrix()?,
            "controller.Rw" => cfg.controller.rw = e.matrix()?,
            "controller.care_tol" => cfg.controller.care_tol = e.float()?,
            "controller.rank_tol" => cfg.controller.rank_tol = e.float()?,
            "pf.particles" => cfg.pf_particles = e.count()?,
            "pf.propagation" => cfg.pf_propagation = parse_propagation(e)?,
            "control_source" => cfg.control_source = parse_source(e)?,
            "x0" => cfg.x0 = e.vector()?,
            "x0_hat" => cfg.x0_hat = e.vector()?,
            "P0" => cfg.p0 = e.matrix()?,
            k if k.starts_with("pendulum.")
                || k.starts_with("vdp.")
                || k.starts_with("linear.") =>
            {
                apply_model_entry(&mut cfg, &mut linear, e)?
            }
            _ => return Err(e.err("unknown key")),
        }
    }
    finish_linear(&mut cfg, linear)?;
    cfg.injected = match injected {
        (None, None) => None,
        (Some(qd), Some(rn)) => Some(InjectedNoise { qd, rn }),
        (Some(_), None) => {
            return Err(ConfigError::invalid(
                "injected.Rn",
                "missing (injected.Qd is set)",
            ))
        }
        (None, Some(_)) => {
            return Err(ConfigError::invalid(
                "injected.Qd",
                "missing (injected.Rn is set)",
            ))
        }
    };

    if let Some(v) = flags.estimator {
        cfg.estimator = v;
    }
    if let Some(v) = flags.runs {
        cfg.n_runs = v;
    }
    if let Some(v) = flags.dt {
        cfg.dt = v;
    }
    if let Some(v) = flags.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.particles {
        cfg.pf_particles = v;
    }
    validate(&cfg)?;
    Ok(Experiment {
        config: cfg,
        estimators,
    })
}

fn parse_propagation(e: &Entry) -> Result<PfPropagation, ConfigError> {
    match e.string()? {
        "euler" => Ok(PfPropagation::Euler),
        "rk4" => Ok(PfPropagation::Rk4),
        other => Err(e.err(format!(
            "unknown propagation `{other}` (expected euler or rk4)"
        ))),
    }
}

fn parse_source(e: &Entry) -> Result<ControlSource, ConfigError> {
    match e.string()? {
        "estimate" => Ok(ControlSource::Estimate),
        "truth" => Ok(ControlSource::Truth),
        other => Err(e.err(format!(
            "unknown control source `{other}` (expected estimate or truth)"
        ))),
    }
}

/// Names the offending field for each invariant [`SimConfig::validate`]
/// enforces.
pub fn validate(cfg: &SimConfig) -> Result<(), ConfigError> {
    if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
        return Err(ConfigError::invalid(
            "dt",
            format!("must be positive, got {}", cfg.dt),
        ));
    }
    if !(cfg.horizon.is_finite() && cfg.horizon >= cfg.dt) {
        return Err(ConfigError::invalid(
            "horizon",
            format!("must be at least dt, got {}", cfg.horizon),
        ));
    }
    if cfg.n_runs == 0 {
        return Err(ConfigError::invalid("n_runs", "must be at least 1"));
    }
    if cfg.estimator == EstimatorKind::Pf && cfg.pf_particles == 0 {
        return Err(ConfigError::invalid("pf.particles", "must be at least 1"));
    }
    let model = cfg
        .model
        .build()
        .map_err(|e| ConfigError::invalid(cfg.model.name(), e.to_string()))?;
    let (n, m, p) = (model.n_states(), model.n_inputs(), model.n_outputs());
    let check_vec = |name: &str, v: &Vector| {
        if v.len() != n {
            Err(ConfigError::invalid(
                name,
                format!("expected {n} entries, got {}", v.len()),
            ))
        } else {
            Ok(())
        }
    };
    check_vec("x0", &cfg.x0)?;
    check_vec("x0_hat", &cfg.x0_hat)?;
    let check_shape = |name: &str, a: &Mat, r: usize| {
        if a.shape() != (r, r) {
            Err(ConfigError::invalid(
                name,
                format!("expected {r}x{r}, got {:?}", a.shape()),
            ))
        } else {
            Ok(())
        }
    };
    check_shape("P0", &cfg.p0, n)?;
    check_shape("noise.Qd", &cfg.noise.qd, n)?;
    check_shape("noise.Rn", &cfg.noise.rn, p)?;
    check_shape("controller.Qw", &cfg.controller.qw, n)?;
    check_shape("controller.Rw", &cfg.controller.rw, m)?;
    if let Some(inj) = &cfg.injected {
        check_shape("injected.Qd", &inj.qd, n)?;
        check_shape("injected.Rn", &inj.rn, p)?;
    }
    cfg.validate().map_err(|e| {
        let field = match &e {
            SimError::Estimator(_) => guess_covariance_field(cfg, &e),
            SimError::Control(_) => "controller",
            _ => "config",
        };
        ConfigError::invalid(field, e.to_string())
    })
}

fn guess_covariance_field(cfg: &SimConfig, e: &SimError) -> &'static str {
    let msg = e.to_string();
    if msg.contains("injected Qd") {
        "injected.Qd"
    } else if msg.contains("injected Rn") {
        "injected.Rn"
    } else if msg.contains("P0") {
        "P0"
    } else if msg.contains("Qd") {
        "noise.Qd"
    } else if msg.contains("Rn") {
        "noise.Rn"
    } else if cfg.injected.is_some() {
        "injected"
    } else {
        "noise"
    }
}

fn fmt_f64(v: f64) -> String {
    // Debug formatting is the shortest string that parses back exactly.
    format!("{v:?}")
}

fn fmt_vector(v: &Vector) -> String {
    let items: Vec<String> = v.iter().map(|x| fmt_f64(*x)).collect();
    format!("[{}]", items.join(", "))
}

fn fmt_matrix(a: &Mat) -> String {
    if a.shape() == (1, 1) {
        return fmt_f64(a[(0, 0)]);
    }
    let rows: Vec<String> = a
        .row_iter()
        .map(|r| {
            let items: Vec<String> = r.iter().map(|x| fmt_f64(*x)).collect();
            format!("[{}]", items.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Serializes a config in the file format read by [`parse_config`].
///
/// `extra` lines are appended verbatim (used for `artifact.*` provenance).
pub fn emit_config(
    cfg: &SimConfig,
    estimators: Option<&[EstimatorKind]>,
    extra: &[(String, String)],
) -> String {
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    put("model", format!("\"{}\"", cfg.model.name()));
    match &cfg.model {
        ModelSpec::Pendulum(PendulumParams { l, m, k, g }) => {
            put("pendulum.l", fmt_f64(*l));
            put("pendulum.m", fmt_f64(*m));
            put("pendulum.k", fmt_f64(*k));
            put("pendulum.g", fmt_f64(*g));
        }
        ModelSpec::Vdp(VdpParams { mu }) => put("vdp.mu", fmt_f64(*mu)),
        ModelSpec::Linear(lin) => {
            put("linear.A", fmt_matrix(&lin.a));
            put("linear.B", fmt_matrix(&lin.b));
            put("linear.C", fmt_matrix(&lin.c));
            put("linear.x_ref", fmt_vector(&lin.x_ref));
            put("linear.x0", fmt_vector(&lin.x0));
        }
    }
    put("estimator", format!("\"{}\"", cfg.estimator));
    if let Some(list) = estimators {
        let names: Vec<String> = list.iter().map(|k| format!("\"{k}\"")).collect();
        put("estimators", format!("[{}]", names.join(", ")));
    }
    put("dt", fmt_f64(cfg.dt));
    put("horizon", fmt_f64(cfg.horizon));
    put("n_runs", cfg.n_runs.to_string());
    put(
        "seed",
        if cfg.seed <= i64::MAX as u64 {
            cfg.seed.to_string()
        } else {
            format!("\"{}\"", cfg.seed)
        },
    );
    put("x0", fmt_vector(&cfg.x0));
    put("x0_hat", fmt_vector(&cfg.x0_hat));
    put("P0", fmt_matrix(&cfg.p0));
    let NoiseConfig { qd, rn } = &cfg.noise;
    put("noise.Qd", fmt_matrix(qd));
    put("noise.Rn", fmt_matrix(rn));
    if let Some(inj) = &cfg.injected {
        put("injected.Qd", fmt_matrix(&inj.qd));
        put("injected.Rn", fmt_matrix(&inj.rn));
    }
    put("controller.Qw", fmt_matrix(&cfg.controller.qw));
    put("controller.Rw", fmt_matrix(&cfg.controller.rw));
    put("controller.care_tol", fmt_f64(cfg.controller.care_tol));
    put("controller.rank_tol", fmt_f64(cfg.controller.rank_tol));
    put("pf.particles", cfg.pf_particles.to_string());
    put(
        "pf.propagation",
        match cfg.pf_propagation {
            PfPropagation::Euler => "\"euler\"",
            PfPropagation::Rk4 => "\"rk4\"",
        }
        .to_string(),
    );
    put(
        "control_source",
        match cfg.control_source {
            ControlSource::Estimate => "\"estimate\"",
            ControlSource::Truth => "\"truth\"",
        }
        .to_string(),
    );
    for (k, v) in extra {
        put(k, v.clone());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SimConfig, ConfigError> {
        parse_config(Some(text), &Overrides::default()).map(|e| e.config)
    }

    #[test]
    fn presets_round_trip() {
        for p in ExperimentPreset::ALL {
            let cfg = p.expand();
            assert_eq!(parse(&emit_config(&cfg, None, &[])).unwrap(), cfg);
        }
    }

    #[test]
    fn scalar_and_row_list_matrices() {
        let cfg = parse("noise.Rn = 0.25\nnoise.Qd = [[1, 0], [0, 2.5]]\n").unwrap();
        assert_eq!(cfg.noise.rn, Mat::from_element(1, 1, 0.25));
        assert_eq!(
            cfg.noise.qd,
            Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.5])
        );
    }

    #[test]
    fn wrong_type_reports_line_and_field() {
        let err = parse("dt = 0.01\n\nhorizon = \"long\"\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::Parse {
                line: Some(3),
                field: Some("horizon".into()),
                message: "expected a number".into()
            }
        );
    }

    #[test]
    fn syntax_error_reports_line() {
        match parse("dt = 0.01\nseed = = 3\n").unwrap_err() {
            ConfigError::Parse { line, .. } => assert_eq!(line, Some(2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_and_misplaced_keys() {
        assert!(matches!(
            parse("dtt = 0.1").unwrap_err(),
            ConfigError::Parse { field: Some(f), .. } if f == "dtt"
        ));
        assert!(parse("model = \"vdp\"\npendulum.l = 2.0").is_err());
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        assert!(parse("P0 = [[1, 0], [0]]").is_err());
    }

    #[test]
    fn linear_model_from_file() {
        let text = "model = \"linear\"\nlinear.A = [[0, 1], [0, 0]]\nlinear.B = [[0], [1]]\nlinear.C = [[1, 0]]\nx0 = [1, 0]\nx0_hat = [1, 0]\n";
        let cfg = parse(text).unwrap();
        let ModelSpec::Linear(lin) = &cfg.model else {
            panic!()
        };
        assert_eq!(lin.x0, Vector::from_vec(vec![1.0, 0.0]));
        assert_eq!(parse(&emit_config(&cfg, None, &[])).unwrap(), cfg);
    }

    #[test]
    fn large_seed_survives_round_trip() {
        let cfg = SimConfig {
            seed: u64::MAX,
            ..SimConfig::vdp_benchmark()
        };
        assert_eq!(parse(&emit_config(&cfg, None, &[])).unwrap().seed, u64::MAX);
    }

    #[test]
    fn flags_beat_file_beats_preset() {
        let flags = Overrides {
            preset: Some(ExperimentPreset::VdpPaper),
            seed: Some(9),
            ..Overrides::default()
        };
        let exp = parse_config(Some("seed = 3\nn_runs = 4\n"), &flags).unwrap();
        assert_eq!(exp.config.seed, 9);
        assert_eq!(exp.config.n_runs, 4);
        assert_eq!(exp.config.model.name(), "vdp");
    }

    #[test]
    fn validation_names_the_field() {
        let flags = Overrides {
            dt: Some(0.0),
            ..Overrides::default()
        };
        assert!(matches!(
            parse_config(None, &flags).unwrap_err(),
            ConfigError::Validation { field, .. } if field == "dt"
        ));
        assert!(matches!(
            parse("noise.Rn = -1.0").unwrap_err(),
            ConfigError::Validation { field, .. } if field == "noise.Rn"
        ));
        assert!(matches!(
            parse("x0 = [1.0]").unwrap_err(),
            ConfigError::Validation { field, .. } if field == "x0"
        ));
    }

    #[test]
    fn model_flag_conflicting_with_preset() {
        let flags = Overrides {
            preset: Some(ExperimentPreset::PendulumPaper),
            model: Some("vdp".into()),
            ..Overrides::default()
        };
        assert!(parse_config(None, &flags).is_err());
    }
}
