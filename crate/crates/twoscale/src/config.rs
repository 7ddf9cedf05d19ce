//! Run configuration: JSON in, validated and canonicalised.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;
use twoscale_core::ergodics::AverageWindow;
use twoscale_core::experiments::TestFunctional;
use twoscale_core::khasminskii::{DEFAULT_KAPPA1, DEFAULT_KAPPA2};
use twoscale_core::model::{BasisParams, CatalogModel, LinearParams, ModelSpec};
use twoscale_core::spectral::Exponent;
use twoscale_core::FieldCoeffs;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Check,
    Simulate,
    Fast,
    Estimate,
    Remainder,
    Gap,
    Converge,
    Moments,
    Holder,
    Weak,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Check => "check",
            Study::Simulate => "simulate",
            Study::Fast => "fast",
            Study::Estimate => "estimate",
            Study::Remainder => "remainder",
            Study::Gap => "gap",
            Study::Converge => "converge",
            Study::Moments => "moments",
            Study::Holder => "holder",
            Study::Weak => "weak",
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub model_params: LinearParams,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub hypothesis: HypothesisConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub study: Option<Study>,
    #[serde(default)]
    pub params: StudyParams,
    #[serde(default)]
    pub seed: u64,
    /// Run directory; defaults to `runs/<study>`.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_model() -> String {
    "linear_test_model".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisConfig {
    pub n: usize,
    pub length: f64,
    pub slow_shift: f64,
    pub fast_shift: f64,
    pub grid_factor: usize,
    pub slow_noise_decay: f64,
    pub fast_noise_decay: f64,
}

impl Default for BasisConfig {
    fn default() -> Self {
        let b = BasisParams::default();
        BasisConfig {
            n: b.modes,
            length: b.length,
            slow_shift: b.slow_shift,
            fast_shift: b.fast_shift,
            grid_factor: b.grid_factor,
            slow_noise_decay: b.slow_noise_decay,
            fast_noise_decay: b.fast_noise_decay,
        }
    }
}

impl BasisConfig {
    pub fn params(&self) -> BasisParams {
        BasisParams {
            modes: self.n,
            length: self.length,
            slow_shift: self.slow_shift,
            fast_shift: self.fast_shift,
            grid_factor: self.grid_factor,
            slow_noise_decay: self.slow_noise_decay,
            fast_noise_decay: self.fast_noise_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesisConfig {
    pub beta: [f64; 2],
    pub rho: [Exponent; 2],
    /// Random points used by the Lipschitz checks.
    pub samples: usize,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        HypothesisConfig { beta: [0.75, 0.75], rho: [Exponent::Infinite; 2], samples: 200 }
    }
}

/// Time step: a number, or `"eps/K"` resolved against the smallest ε of the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtRule {
    Fixed(f64),
    EpsOver(f64),
}

impl DtRule {
    pub fn resolve(self, eps: f64) -> f64 {
        match self {
            DtRule::Fixed(dt) => dt,
            DtRule::EpsOver(k) => eps / k,
        }
    }
}

impl Serialize for DtRule {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            DtRule::Fixed(dt) => s.serialize_f64(dt),
            DtRule::EpsOver(k) => s.serialize_str(&format!("eps/{k}")),
        }
    }
}

impl<'de> Deserialize<'de> for DtRule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(DtRule::Fixed(v)),
            Raw::Str(s) => s
                .strip_prefix("eps/")
                .and_then(|k| k.trim().parse::<f64>().ok())
                .filter(|k| *k > 0.0 && k.is_finite())
                .map(DtRule::EpsOver)
                .ok_or_else(|| de::Error::custom(format!("expected a number or \"eps/K\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub t_end: f64,
    pub dt: DtRule,
    /// ε for single-ε commands.
    pub eps: f64,
    pub allow_unstable: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { t_end: 1.0, dt: DtRule::EpsOver(10.0), eps: 0.02, allow_unstable: false }
    }
}

/// Initial data: `"zero"`, `{"unit": k, "scale": a}` or a coefficient list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialData {
    Named(NamedData),
    Coeffs(Vec<f64>),
    Unit(UnitData),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitData {
    pub unit: usize,
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedData {
    Zero,
}

fn one() -> f64 {
    1.0
}

impl InitialData {
    pub fn unit(k: usize) -> Self {
        InitialData::Unit(UnitData { unit: k, scale: 1.0 })
    }

    pub fn resolve(&self, n: usize) -> Result<FieldCoeffs, String> {
        match self {
            InitialData::Named(NamedData::Zero) => Ok(FieldCoeffs::zeros(n)),
            InitialData::Unit(UnitData { unit, scale }) => {
                if *unit == 0 || *unit > n {
                    return Err(format!("mode {unit} is outside 1..={n}"));
                }
                Ok(FieldCoeffs::unit(n, *unit).scaled(*scale))
            }
            InitialData::Coeffs(c) => {
                if c.len() != n {
                    return Err(format!("expected {n} coefficients, got {}", c.len()));
                }
                if c.iter().any(|v| !v.is_finite()) {
                    return Err("coefficients must be finite".into());
                }
                Ok(FieldCoeffs::from_vec(c.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub t: f64,
    /// Defaults to `5 / λ`.
    pub burn_in: Option<f64>,
    pub dt: f64,
    pub replicas: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { t: 200.0, burn_in: None, dt: 1e-3, replicas: 20 }
    }
}

impl WindowConfig {
    pub fn window(&self, model: &ModelSpec) -> AverageWindow {
        let mut w = AverageWindow::for_model(model, self.t, self.dt, self.replicas);
        if let Some(b) = self.burn_in {
            w.burn_in = b;
        }
        w
    }
}

/// How the averaged coefficients are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BbarMode {
    /// Closed forms where they exist, estimates otherwise.
    Auto,
    Analytic,
    Estimated,
}

/// Parameters of every study; each command reads the ones it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyParams {
    pub eps_list: Vec<f64>,
    pub replicas: usize,
    pub x: InitialData,
    pub y: InitialData,
    /// Test direction of the remainder.
    pub h: InitialData,
    pub window: WindowConfig,
    /// Also fit the mixing rate in `fast`, coupling `y` with `y2`.
    pub mixing: bool,
    pub y2: InitialData,
    pub mixing_t_end: f64,
    /// Estimate `S` in `estimate`; defaults to whether `g1` reads the fast variable.
    pub diffusion: Option<bool>,
    pub record_every: usize,
    pub bbar: BbarMode,
    pub anchors: Vec<InitialData>,
    pub jacobian_step: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub t1: f64,
    pub t2: f64,
    pub outer: usize,
    pub inner: usize,
    pub phi_mode: usize,
    pub p_list: Vec<u32>,
    pub h_list: Vec<f64>,
    pub functionals: Vec<TestFunctional>,
}

impl Default for StudyParams {
    fn default() -> Self {
        StudyParams {
            eps_list: vec![0.1, 0.02, 0.004],
            replicas: 200,
            x: InitialData::unit(1),
            y: InitialData::Named(NamedData::Zero),
            h: InitialData::unit(1),
            window: WindowConfig::default(),
            mixing: false,
            y2: InitialData::unit(1),
            mixing_t_end: 5.0,
            diffusion: None,
            record_every: 10,
            bbar: BbarMode::Auto,
            anchors: vec![InitialData::Named(NamedData::Zero)],
            jacobian_step: 0.1,
            kappa1: DEFAULT_KAPPA1,
            kappa2: DEFAULT_KAPPA2,
            t1: 0.25,
            t2: 0.5,
            outer: 50,
            inner: 32,
            phi_mode: 1,
            p_list: vec![2, 4],
            h_list: vec![0.01, 0.02, 0.04, 0.08, 0.16],
            functionals: vec![TestFunctional::Mode1Clipped { clip: 10.0 }, TestFunctional::NormClipped { clip: 10.0 }],
        }
    }
}

impl RunConfig {
    /// Parses a JSON value, reporting the key path of the first error.
    pub fn from_value(v: Value) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_path_to_error::deserialize(v).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn study(&self) -> Result<Study, CliError> {
        self.study.ok_or_else(|| CliError::config("study", "no study selected"))
    }

    pub fn catalog(&self) -> Result<CatalogModel, CliError> {
        CatalogModel::from_id(&self.model, self.model_params).map_err(|e| CliError::config("model", e.to_string()))
    }

    pub fn build_model(&self) -> Result<ModelSpec, CliError> {
        self.catalog()?.build(&self.basis.params()).map_err(|e| CliError::config("basis", e.to_string()))
    }

    /// Smallest ε the run touches, which fixes `eps/K` step rules.
    pub fn min_eps(&self, study: Study) -> f64 {
        match study {
            Study::Remainder | Study::Gap | Study::Converge | Study::Moments | Study::Holder | Study::Weak => {
                self.params.eps_list.iter().copied().fold(f64::INFINITY, f64::min)
            }
            _ => self.integrator.eps,
        }
    }

    pub fn dt(&self, study: Study) -> f64 {
        self.integrator.dt.resolve(self.min_eps(study))
    }

    pub fn out_dir(&self) -> PathBuf {
        match (&self.out, self.study) {
            (Some(p), _) => p.clone(),
            (None, Some(s)) => Path::new("runs").join(s.name()),
            (None, None) => PathBuf::from("runs"),
        }
    }

    /// Fills the run directory so the canonical form is fully explicit.
    pub fn resolved(mut self) -> Self {
        self.out = Some(self.out_dir());
        self
    }

    /// Sorted-key JSON of the fully resolved configuration.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self.clone().resolved()).expect("config serialises");
        serde_json::to_string_pretty(&v).expect("value serialises")
    }

    pub fn resolve_data(&self, key: &str, d: &InitialData) -> Result<FieldCoeffs, CliError> {
        d.resolve(self.basis.n).map_err(|m| CliError::config(format!("params.{key}"), m))
    }

    fn validate(&self) -> Result<(), CliError> {
        let err = CliError::config;
        let b = &self.basis;
        if b.n == 0 {
            return Err(err("basis.n", "must be positive"));
        }
        if !(b.length > 0.0 && b.length.is_finite()) {
            return Err(err("basis.length", "must be positive"));
        }
        if b.slow_shift.is_nan() || b.fast_shift.is_nan() || b.slow_shift < 0.0 || b.fast_shift < 0.0 {
            return Err(err("basis", "shifts must be non-negative"));
        }
        if b.grid_factor == 0 {
            return Err(err("basis.grid_factor", "must be at least 1"));
        }
        let i = &self.integrator;
        if !(i.t_end > 0.0 && i.t_end.is_finite()) {
            return Err(err("integrator.t_end", "must be positive"));
        }
        if !(i.eps > 0.0 && i.eps < 1.0) {
            return Err(err("integrator.eps", "must lie in (0, 1)"));
        }
        if let DtRule::Fixed(dt) = i.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(err("integrator.dt", "must be positive"));
            }
        }
        let p = &self.params;
        if p.eps_list.is_empty() || p.eps_list.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(err("params.eps_list", "needs at least one ε in (0, 1)"));
        }
        if p.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(err("params.eps_list", "must be strictly decreasing"));
        }
        if p.replicas == 0 {
            return Err(err("params.replicas", "must be positive"));
        }
        if p.record_every == 0 {
            return Err(err("params.record_every", "must be positive"));
        }
        for (key, d) in [("x", &p.x), ("y", &p.y), ("h", &p.h), ("y2", &p.y2)] {
            self.resolve_data(key, d)?;
        }
        for (k, a) in p.anchors.iter().enumerate() {
            self.resolve_data(&format!("anchors[{k}]"), a)?;
        }
        if p.phi_mode == 0 || p.phi_mode > b.n {
            return Err(CliError::config("params.phi_mode", format!("must lie in 1..={}", b.n)));
        }
        self.catalog()?;
        Ok(())
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    RunConfig::from_value(read_config_value(path)?)
}

pub fn read_config_value(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::config("<root>", format!("{}: {e}", path.display())))
}

/// Applies `a.b.c=value`; the value is parsed as JSON and falls back to a
/// plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {assignment:?} is not KEY=VALUE")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Usage(format!("override key {key:?} is malformed")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        let map = match node {
            Value::Object(m) => m,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().unwrap()
            }
            _ => return Err(CliError::config(key, format!("`{part}` is not inside an object"))),
        };
        if parts.peek().is_none() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn parse(v: Value) -> Result<RunConfig, CliError> {
        RunConfig::from_value(v)
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse(json!({"model": "linear_test_model", "study": "check"})).unwrap();
        assert_eq!(c.basis.n, 32);
        assert_eq!(c.integrator.t_end, 1.0);
        assert_eq!(c.seed, 0);
        assert_eq!(c.study, Some(Study::Check));
    }

    #[test]
    fn unknown_keys_name_the_key() {
        let e = parse(json!({"model": "linear_test_model", "fooo": 1})).unwrap_err();
        assert!(e.to_string().contains("fooo"), "{e}");
        let e = parse(json!({"params": {"window": {"fooo": 1}}})).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("params.window") && msg.contains("fooo"), "{msg}");
    }

    #[test]
    fn type_mismatch_reports_path() {
        let e = parse(json!({"basis": {"n": "many"}})).unwrap_err();
        assert!(e.to_string().contains("basis.n"), "{e}");
    }

    #[test]
    fn constraint_violations() {
        assert!(parse(json!({"params": {"eps_list": [0.01, 0.1]}})).is_err());
        assert!(parse(json!({"basis": {"n": 0}})).is_err());
        assert!(parse(json!({"params": {"x": {"unit": 40}}})).is_err());
        assert!(parse(json!({"model": "nope"})).is_err());
        assert!(parse(json!({"integrator": {"dt": "eps/0"}})).is_err());
    }

    #[test]
    fn dt_rule_evaluation() {
        let c = parse(json!({"integrator": {"dt": "eps/10", "eps": 0.02}})).unwrap();
        assert!((c.dt(Study::Simulate) - 0.002).abs() < 1e-18);
        assert!((c.dt(Study::Converge) - 0.0004).abs() < 1e-18);
        let c = parse(json!({"integrator": {"dt": 0.001}})).unwrap();
        assert_eq!(c.dt(Study::Converge), 0.001);
    }

    #[test]
    fn initial_data_forms() {
        let c = parse(json!({"basis": {"n": 3}, "params": {"x": [1, 2, 3], "y": {"unit": 2, "scale": 50}}})).unwrap();
        assert_eq!(c.resolve_data("x", &c.params.x).unwrap().to_vec(), vec![1.0, 2.0, 3.0]);
        assert_eq!(c.resolve_data("y", &c.params.y).unwrap().to_vec(), vec![0.0, 50.0, 0.0]);
        assert!(parse(json!({"basis": {"n": 3}, "params": {"x": [1, 2]}})).is_err());
        assert!(parse(json!({"params": {"x": {"unit": 1, "scal": 2}}})).is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let c = parse(json!({
            "study": "gap",
            "model_params": {"g1": "sin_fast"},
            "hypothesis": {"rho": [4, "inf"]},
            "params": {"functionals": [{"kind": "constant", "value": 1.5}]}
        }))
        .unwrap();
        let once = c.canonical_json();
        let again = parse(serde_json::from_str(&once).unwrap()).unwrap();
        assert_eq!(again, c.clone().resolved());
        assert_eq!(again.canonical_json(), once);
        let parsed: Value = serde_json::from_str(&once).unwrap();
        let keys: Vec<&String> = parsed.as_object().unwrap().keys().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn overrides_follow_dot_paths() {
        let mut v = json!({"model": "linear_test_model"});
        apply_override(&mut v, "basis.n=8").unwrap();
        apply_override(&mut v, "model_params.g1=sin_fast").unwrap();
        apply_override(&mut v, "params.eps_list=[0.1,0.05]").unwrap();
        let c = parse(v.clone()).unwrap();
        assert_eq!(c.basis.n, 8);
        assert_eq!(c.params.eps_list, vec![0.1, 0.05]);
        assert!(apply_override(&mut v, "basis").is_err());
        assert!(apply_override(&mut v, "model.x=1").is_err());
    }
}
