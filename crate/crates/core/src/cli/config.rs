//! Experiment configuration: a flat `key = value` file under an
//! `[experiment]` header.
//!
//! Vectors are comma lists and matrix rows are separated by `;`. Every key
//! is checked against the experiment kind (keys that do not apply are
//! rejected) and every value against the preconditions of the component
//! it configures. Errors carry the line of the offending key.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::learners::ConvexSet;
use crate::numerics::{min_eig_lower_bound, psd_margin, Matrix, Vector, PIVOT_TOLERANCE};
use crate::oac::{CostWeights, PlantModel};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(entry: &Entry, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(entry.line),
            key: Some(entry.key.clone()),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            key: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(line), Some(key)) => write!(f, "line {line}: {key}: {}", self.message),
            (Some(line), None) => write!(f, "line {line}: {}", self.message),
            (None, Some(key)) => write!(f, "{key}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    ConvexOgd,
    AdaptiveGrad,
    StronglyConvex,
    NormalizedRegression,
    DisturbedSigmaMod,
    PeStudy,
    Oac,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::ConvexOgd,
        ExperimentKind::AdaptiveGrad,
        ExperimentKind::StronglyConvex,
        ExperimentKind::NormalizedRegression,
        ExperimentKind::DisturbedSigmaMod,
        ExperimentKind::PeStudy,
        ExperimentKind::Oac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ConvexOgd => "convex_ogd",
            ExperimentKind::AdaptiveGrad => "adaptive_grad",
            ExperimentKind::StronglyConvex => "strongly_convex",
            ExperimentKind::NormalizedRegression => "normalized_regression",
            ExperimentKind::DisturbedSigmaMod => "disturbed_sigma_mod",
            ExperimentKind::PeStudy => "pe_study",
            ExperimentKind::Oac => "oac",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    fn has_set(self) -> bool {
        matches!(
            self,
            ExperimentKind::ConvexOgd
                | ExperimentKind::AdaptiveGrad
                | ExperimentKind::StronglyConvex
                | ExperimentKind::DisturbedSigmaMod
        )
    }

    fn has_features(self) -> bool {
        matches!(
            self,
            ExperimentKind::ConvexOgd
                | ExperimentKind::AdaptiveGrad
                | ExperimentKind::NormalizedRegression
                | ExperimentKind::DisturbedSigmaMod
                | ExperimentKind::PeStudy
        )
    }

    fn has_disturbance(self) -> bool {
        matches!(
            self,
            ExperimentKind::ConvexOgd | ExperimentKind::AdaptiveGrad | ExperimentKind::DisturbedSigmaMod
        )
    }

    fn has_normalized_rate(self) -> bool {
        matches!(
            self,
            ExperimentKind::NormalizedRegression | ExperimentKind::DisturbedSigmaMod | ExperimentKind::PeStudy
        )
    }

    /// Regression and convex kinds track θ̂ against a truth vector.
    fn has_parameter(self) -> bool {
        self != ExperimentKind::Oac
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureSpec {
    CyclingBasis { scale: f64 },
    GaussianClipped { x_max: f64 },
    SinusoidBank { frequencies: Vec<f64>, amplitudes: Vec<f64> },
    ConstantDirection { direction: Vector },
}

impl FeatureSpec {
    fn name(&self) -> &'static str {
        match self {
            FeatureSpec::CyclingBasis { .. } => "cycling_basis",
            FeatureSpec::GaussianClipped { .. } => "gaussian_clipped",
            FeatureSpec::SinusoidBank { .. } => "sinusoid_bank",
            FeatureSpec::ConstantDirection { .. } => "constant_direction",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DisturbanceKind {
    Zero,
    Uniform,
    Sinusoid,
    Alternating,
    Gaussian,
}

impl DisturbanceKind {
    pub fn name(self) -> &'static str {
        match self {
            DisturbanceKind::Zero => "zero",
            DisturbanceKind::Uniform => "uniform",
            DisturbanceKind::Sinusoid => "sinusoid",
            DisturbanceKind::Alternating => "alternating",
            DisturbanceKind::Gaussian => "gaussian",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [
            DisturbanceKind::Zero,
            DisturbanceKind::Uniform,
            DisturbanceKind::Sinusoid,
            DisturbanceKind::Alternating,
            DisturbanceKind::Gaussian,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OacSpec {
    pub a_star: Matrix,
    pub b_star: Matrix,
    pub q: Matrix,
    pub r: Matrix,
    pub noise_std: f64,
    pub c_xi: f64,
    pub refresh_period: u64,
    pub x0: Vector,
}

/// A fully resolved experiment. Fields that do not apply to `kind` hold
/// their defaults and are ignored by the runner.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub horizon: u64,
    pub seed: u64,
    pub checkpoints: Vec<u64>,
    pub set: ConvexSet,
    /// Regression truth, or the mean center for strongly convex rounds.
    pub theta_star: Vector,
    pub theta_init: Vector,
    pub features: FeatureSpec,
    pub disturbance: DisturbanceKind,
    pub d: f64,
    pub disturbance_freq: f64,
    /// `None` derives G from the declared stream and set bounds.
    pub grad_bound: Option<f64>,
    pub eps_floor: f64,
    pub mu: f64,
    pub inverse_t_c: f64,
    pub center_spread: f64,
    pub alpha: f64,
    pub m: f64,
    pub sigma: f64,
    pub pe_window: usize,
    pub pe_beta: f64,
    pub oac: OacSpec,
}

const KNOWN_KEYS: &[&str] = &[
    "kind",
    "n",
    "horizon",
    "seed",
    "checkpoints",
    "set",
    "set_center",
    "set_radius",
    "set_lower",
    "set_upper",
    "theta_star",
    "theta_init",
    "feature",
    "feature_scale",
    "x_max",
    "frequencies",
    "amplitudes",
    "direction",
    "disturbance",
    "d",
    "disturbance_freq",
    "grad_bound",
    "eps_floor",
    "mu",
    "inverse_t_c",
    "center_spread",
    "alpha",
    "m",
    "sigma",
    "pe_window",
    "pe_beta",
    "a_star",
    "b_star",
    "q",
    "r",
    "noise_std",
    "c_xi",
    "refresh_period",
    "x0",
];

#[derive(Clone, Debug)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Entries {
    list: Vec<Entry>,
    index: HashMap<String, usize>,
}

impl Entries {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.index.get(key).map(|&i| &self.list[i])
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut list = Vec::new();
    let mut index = HashMap::new();
    let mut seen_header = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            if content != "[experiment]" {
                return Err(ConfigError {
                    line: Some(line),
                    key: None,
                    message: format!("unknown section {content}, expected [experiment]"),
                });
            }
            if seen_header {
                return Err(ConfigError {
                    line: Some(line),
                    key: None,
                    message: "duplicate [experiment] header".into(),
                });
            }
            seen_header = true;
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError {
                line: Some(line),
                key: None,
                message: format!("expected key = value, got `{content}`"),
            });
        };
        let key = key.trim().to_string();
        let entry = Entry {
            key: key.clone(),
            value: value.trim().to_string(),
            line,
        };
        if !seen_header {
            return Err(ConfigError::at(&entry, "key appears before the [experiment] header"));
        }
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::at(&entry, "unknown key"));
        }
        if let Some(&prev) = index.get(&key) {
            let first: &Entry = &list[prev];
            return Err(ConfigError::at(
                &entry,
                format!("duplicate key (first set on line {})", first.line),
            ));
        }
        index.insert(key, list.len());
        list.push(entry);
    }
    if !seen_header {
        return Err(ConfigError::general("missing [experiment] header"));
    }
    Ok(Entries { list, index })
}

fn parse_f64(e: &Entry, s: &str) -> Result<f64, ConfigError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| ConfigError::at(e, format!("malformed number `{}`", s.trim())))?;
    if !v.is_finite() {
        return Err(ConfigError::at(e, format!("value must be finite, got {v}")));
    }
    Ok(v)
}

fn scalar(e: &Entry) -> Result<f64, ConfigError> {
    parse_f64(e, &e.value)
}

/// Nonnegative integer; integral floats such as `1e4` are accepted.
fn integer(e: &Entry) -> Result<u64, ConfigError> {
    if let Ok(v) = e.value.parse::<u64>() {
        return Ok(v);
    }
    let v = scalar(e)?;
    if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(ConfigError::at(
            e,
            format!("expected a nonnegative integer, got `{}`", e.value),
        ))
    }
}

fn list(e: &Entry) -> Result<Vec<f64>, ConfigError> {
    if e.value.is_empty() {
        return Err(ConfigError::at(e, "empty list"));
    }
    e.value.split(',').map(|s| parse_f64(e, s)).collect()
}

fn vector(e: &Entry) -> Result<Vector, ConfigError> {
    Ok(Vector::from_finite(list(e)?))
}

fn matrix(e: &Entry) -> Result<Matrix, ConfigError> {
    let rows: Vec<Vec<f64>> = e
        .value
        .split(';')
        .map(|row| {
            if row.trim().is_empty() {
                return Err(ConfigError::at(e, "empty matrix row"));
            }
            row.split(',').map(|s| parse_f64(e, s)).collect()
        })
        .collect::<Result<_, _>>()?;
    Matrix::from_rows(&rows).map_err(|err| ConfigError::at(e, err.to_string()))
}

fn expect_dim(e: &Entry, what: &str, found: usize, n: usize) -> Result<(), ConfigError> {
    if found == n {
        Ok(())
    } else {
        Err(ConfigError::at(
            e,
            format!("{what} has {found} entries, expected {n}"),
        ))
    }
}

fn positive(e: &Entry, name: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::at(e, format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(e: &Entry, name: &str, v: f64) -> Result<f64, ConfigError> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::at(e, format!("{name} must be nonnegative, got {v}")))
    }
}

/// 10², 10³, … up to the horizon, plus the horizon itself.
pub fn default_checkpoints(horizon: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut t = 100;
    while t < horizon {
        out.push(t);
        t *= 10;
    }
    out.push(horizon);
    out
}

/// ‖θ_*‖ = 0.5 with alternating signs.
fn default_theta_star(n: usize) -> Vector {
    let s = 0.5 / (n as f64).sqrt();
    Vector::from_finite((0..n).map(|i| if i % 2 == 0 { s } else { -s }).collect())
}

fn applies(cfg: &ExperimentConfig, key: &str) -> bool {
    let k = cfg.kind;
    match key {
        "kind" | "horizon" | "seed" | "checkpoints" => true,
        "n" | "theta_star" | "theta_init" => k.has_parameter(),
        "set" => k.has_set(),
        "set_center" | "set_radius" => k.has_set() && matches!(cfg.set, ConvexSet::Ball { .. }),
        "set_lower" | "set_upper" => k.has_set() && matches!(cfg.set, ConvexSet::Box { .. }),
        "feature" => k.has_features(),
        "feature_scale" => k.has_features() && matches!(cfg.features, FeatureSpec::CyclingBasis { .. }),
        "x_max" => k.has_features() && matches!(cfg.features, FeatureSpec::GaussianClipped { .. }),
        "frequencies" | "amplitudes" => {
            k.has_features() && matches!(cfg.features, FeatureSpec::SinusoidBank { .. })
        }
        "direction" => {
            k.has_features() && matches!(cfg.features, FeatureSpec::ConstantDirection { .. })
        }
        "disturbance" => k.has_disturbance(),
        "d" => k.has_disturbance() && cfg.disturbance != DisturbanceKind::Zero,
        "disturbance_freq" => k.has_disturbance() && cfg.disturbance == DisturbanceKind::Sinusoid,
        "grad_bound" => matches!(k, ExperimentKind::ConvexOgd | ExperimentKind::AdaptiveGrad),
        "eps_floor" => k == ExperimentKind::AdaptiveGrad,
        "mu" | "inverse_t_c" | "center_spread" => k == ExperimentKind::StronglyConvex,
        "alpha" | "m" => k.has_normalized_rate(),
        "sigma" => k == ExperimentKind::DisturbedSigmaMod,
        "pe_window" | "pe_beta" => k == ExperimentKind::PeStudy,
        "a_star" | "b_star" | "q" | "r" | "noise_std" | "c_xi" | "refresh_period" | "x0" => {
            k == ExperimentKind::Oac
        }
        _ => false,
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigError::general(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Parses and validates configuration text.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let entries = tokenize(text)?;
        let kind_entry = entries
            .get("kind")
            .ok_or_else(|| ConfigError::general("missing required key `kind`"))?;
        let kind = ExperimentKind::from_name(&kind_entry.value).ok_or_else(|| {
            ConfigError::at(
                kind_entry,
                format!("unknown experiment kind `{}`", kind_entry.value),
            )
        })?;
        let mut cfg = Self::defaults(kind);

        // selectors and dimension first; later defaults depend on them
        if let Some(e) = entries.get("n") {
            cfg.n = integer(e)? as usize;
            if cfg.n == 0 {
                return Err(ConfigError::at(e, "n must be at least 1"));
            }
        }
        cfg.resize_defaults();
        if let Some(e) = entries.get("set") {
            cfg.set = match e.value.as_str() {
                "ball" => ConvexSet::Ball {
                    center: Vector::zeros(cfg.n),
                    radius: 1.0,
                },
                "box" => ConvexSet::Box {
                    lower: Vector::from_finite(vec![-1.0; cfg.n]),
                    upper: Vector::from_finite(vec![1.0; cfg.n]),
                },
                other => return Err(ConfigError::at(e, format!("unknown set `{other}`, expected ball or box"))),
            };
        }
        if let Some(e) = entries.get("feature") {
            cfg.features = match e.value.as_str() {
                "cycling_basis" => FeatureSpec::CyclingBasis { scale: 1.0 },
                "gaussian_clipped" => FeatureSpec::GaussianClipped { x_max: 1.0 },
                "sinusoid_bank" => FeatureSpec::SinusoidBank {
                    frequencies: (0..cfg.n).map(|i| 0.5 + i as f64).collect(),
                    amplitudes: vec![1.0; cfg.n],
                },
                "constant_direction" => FeatureSpec::ConstantDirection {
                    direction: Vector::basis(cfg.n, 0),
                },
                other => {
                    return Err(ConfigError::at(
                        e,
                        format!("unknown feature generator `{other}`"),
                    ))
                }
            };
        }
        if let Some(e) = entries.get("disturbance") {
            cfg.disturbance = DisturbanceKind::from_name(&e.value)
                .ok_or_else(|| ConfigError::at(e, format!("unknown disturbance `{}`", e.value)))?;
        }

        for e in &entries.list {
            if !applies(&cfg, &e.key) {
                return Err(ConfigError::at(
                    e,
                    format!("key does not apply to this configuration (kind {kind})"),
                ));
            }
        }

        cfg.apply_values(&entries)?;
        cfg.validate(&entries)?;
        Ok(cfg)
    }

    fn defaults(kind: ExperimentKind) -> Self {
        let n = 2;
        let features = match kind {
            ExperimentKind::ConvexOgd | ExperimentKind::AdaptiveGrad | ExperimentKind::DisturbedSigmaMod => {
                FeatureSpec::GaussianClipped { x_max: 1.0 }
            }
            _ => FeatureSpec::CyclingBasis { scale: 1.0 },
        };
        let (disturbance, d) = match kind {
            ExperimentKind::ConvexOgd | ExperimentKind::AdaptiveGrad => (DisturbanceKind::Uniform, 0.1),
            ExperimentKind::DisturbedSigmaMod => (DisturbanceKind::Uniform, 0.5),
            _ => (DisturbanceKind::Zero, 0.0),
        };
        let m = if kind == ExperimentKind::DisturbedSigmaMod { 1.1 } else { 1.0 };
        ExperimentConfig {
            kind,
            n,
            horizon: 10_000,
            seed: 0,
            checkpoints: default_checkpoints(10_000),
            set: ConvexSet::Ball {
                center: Vector::zeros(n),
                radius: 1.0,
            },
            theta_star: default_theta_star(n),
            theta_init: Vector::zeros(n),
            features,
            disturbance,
            d,
            disturbance_freq: 0.1,
            grad_bound: None,
            eps_floor: 1e-12,
            mu: 1.0,
            inverse_t_c: 1.0,
            center_spread: 0.5,
            alpha: 1.0,
            m,
            sigma: 0.1,
            pe_window: 2,
            pe_beta: 0.5,
            oac: OacSpec {
                a_star: Matrix::identity(1),
                b_star: Matrix::identity(1),
                q: Matrix::identity(1),
                r: Matrix::identity(1),
                noise_std: 0.1,
                c_xi: 0.5,
                refresh_period: 1,
                x0: Vector::zeros(1),
            },
        }
    }

    /// Re-derives the dimension-dependent defaults after `n` is known.
    fn resize_defaults(&mut self) {
        let n = self.n;
        self.set = ConvexSet::Ball {
            center: Vector::zeros(n),
            radius: 1.0,
        };
        self.theta_star = default_theta_star(n);
        self.theta_init = Vector::zeros(n);
        if let FeatureSpec::SinusoidBank { .. } = self.features {
            self.features = FeatureSpec::SinusoidBank {
                frequencies: (0..n).map(|i| 0.5 + i as f64).collect(),
                amplitudes: vec![1.0; n],
            };
        }
    }

    fn apply_values(&mut self, entries: &Entries) -> Result<(), ConfigError> {
        let n = self.n;
        if let Some(e) = entries.get("horizon") {
            self.horizon = integer(e)?;
            if self.horizon == 0 {
                return Err(ConfigError::at(e, "horizon must be at least 1"));
            }
        }
        self.checkpoints = default_checkpoints(self.horizon);
        if let Some(e) = entries.get("seed") {
            self.seed = integer(e)?;
        }
        if let Some(e) = entries.get("checkpoints") {
            let mut cps = Vec::new();
            for s in e.value.split(',') {
                let v = parse_f64(e, s)?;
                if !(v >= 1.0 && v.fract() == 0.0 && v <= self.horizon as f64) {
                    return Err(ConfigError::at(
                        e,
                        format!("checkpoints must be integers in [1, horizon], got {v}"),
                    ));
                }
                cps.push(v as u64);
            }
            if cps.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ConfigError::at(e, "checkpoints must be strictly increasing"));
            }
            self.checkpoints = cps;
        }

        if let Some(e) = entries.get("theta_star") {
            let v = vector(e)?;
            expect_dim(e, "theta_star", v.dim(), n)?;
            self.theta_star = v;
        }
        if let Some(e) = entries.get("theta_init") {
            let v = vector(e)?;
            expect_dim(e, "theta_init", v.dim(), n)?;
            self.theta_init = v;
        }

        // set
        if self.kind == ExperimentKind::DisturbedSigmaMod {
            if let ConvexSet::Ball { radius, .. } = &mut self.set {
                *radius = 2.0 * self.theta_star.norm();
            }
        }
        match &mut self.set {
            ConvexSet::Ball { center, radius } => {
                if let Some(e) = entries.get("set_center") {
                    let v = vector(e)?;
                    expect_dim(e, "set_center", v.dim(), n)?;
                    *center = v;
                }
                if let Some(e) = entries.get("set_radius") {
                    *radius = positive(e, "set_radius", scalar(e)?)?;
                } else if !(*radius > 0.0) {
                    return Err(ConfigError::general(
                        "set radius defaults to 2‖theta_star‖, which is zero; set set_radius",
                    ));
                }
            }
            ConvexSet::Box { lower, upper } => {
                if let Some(e) = entries.get("set_lower") {
                    let v = vector(e)?;
                    expect_dim(e, "set_lower", v.dim(), n)?;
                    *lower = v;
                }
                if let Some(e) = entries.get("set_upper") {
                    let v = vector(e)?;
                    expect_dim(e, "set_upper", v.dim(), n)?;
                    *upper = v;
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
                    let e = entries.get("set_upper").or_else(|| entries.get("set_lower"));
                    let msg = "box bounds must satisfy set_lower < set_upper componentwise";
                    return Err(match e {
                        Some(e) => ConfigError::at(e, msg),
                        None => ConfigError::general(msg),
                    });
                }
            }
        }

        // features
        match &mut self.features {
            FeatureSpec::CyclingBasis { scale } => {
                if let Some(e) = entries.get("feature_scale") {
                    *scale = positive(e, "feature_scale", scalar(e)?)?;
                }
            }
            FeatureSpec::GaussianClipped { x_max } => {
                if let Some(e) = entries.get("x_max") {
                    *x_max = positive(e, "x_max", scalar(e)?)?;
                }
            }
            FeatureSpec::SinusoidBank {
                frequencies,
                amplitudes,
            } => {
                if let Some(e) = entries.get("frequencies") {
                    let v = list(e)?;
                    expect_dim(e, "frequencies", v.len(), n)?;
                    *frequencies = v;
                }
                if let Some(e) = entries.get("amplitudes") {
                    let v = list(e)?;
                    expect_dim(e, "amplitudes", v.len(), n)?;
                    if v.iter().any(|a| *a < 0.0) {
                        return Err(ConfigError::at(e, "amplitudes must be nonnegative"));
                    }
                    *amplitudes = v;
                }
            }
            FeatureSpec::ConstantDirection { direction } => {
                if let Some(e) = entries.get("direction") {
                    let v = vector(e)?;
                    expect_dim(e, "direction", v.dim(), n)?;
                    if v.norm() == 0.0 {
                        return Err(ConfigError::at(e, "direction must be nonzero"));
                    }
                    *direction = v;
                }
            }
        }

        // disturbance
        if self.disturbance == DisturbanceKind::Zero {
            self.d = 0.0;
        }
        if let Some(e) = entries.get("d") {
            self.d = positive(e, "d", scalar(e)?)?;
        }
        if let Some(e) = entries.get("disturbance_freq") {
            self.disturbance_freq = scalar(e)?;
        }

        if let Some(e) = entries.get("grad_bound") {
            self.grad_bound = if e.value == "auto" {
                None
            } else {
                Some(positive(e, "grad_bound", scalar(e)?)?)
            };
        }
        if let Some(e) = entries.get("eps_floor") {
            self.eps_floor = positive(e, "eps_floor", scalar(e)?)?;
        }
        if let Some(e) = entries.get("mu") {
            self.mu = positive(e, "mu", scalar(e)?)?;
        }
        self.inverse_t_c = 1.0 / self.mu;
        if let Some(e) = entries.get("inverse_t_c") {
            self.inverse_t_c = positive(e, "inverse_t_c", scalar(e)?)?;
        }
        if let Some(e) = entries.get("center_spread") {
            self.center_spread = nonnegative(e, "center_spread", scalar(e)?)?;
        }
        if let Some(e) = entries.get("alpha") {
            let a = scalar(e)?;
            if !(a > 0.0 && a < 2.0) {
                return Err(ConfigError::at(e, format!("alpha must lie in (0,2), got {a}")));
            }
            self.alpha = a;
        }
        if let Some(e) = entries.get("m") {
            self.m = positive(e, "m", scalar(e)?)?;
        }
        if let Some(e) = entries.get("sigma") {
            self.sigma = positive(e, "sigma", scalar(e)?)?;
        }
        if let Some(e) = entries.get("pe_window") {
            self.pe_window = integer(e)? as usize;
            if self.pe_window == 0 {
                return Err(ConfigError::at(e, "pe_window must be at least 1"));
            }
        }
        if let Some(e) = entries.get("pe_beta") {
            self.pe_beta = positive(e, "pe_beta", scalar(e)?)?;
        }

        // control
        let spec = &mut self.oac;
        if let Some(e) = entries.get("a_star") {
            spec.a_star = matrix(e)?;
            if !spec.a_star.is_square() {
                return Err(ConfigError::at(e, "a_star must be square"));
            }
        }
        let ns = spec.a_star.rows();
        if entries.get("a_star").is_some() {
            spec.b_star = Matrix::zeros(ns, 1);
            spec.b_star.set(ns - 1, 0, 1.0);
            spec.q = Matrix::identity(ns);
            spec.x0 = Vector::zeros(ns);
        }
        if let Some(e) = entries.get("b_star") {
            spec.b_star = matrix(e)?;
            expect_dim(e, "b_star rows", spec.b_star.rows(), ns)?;
        }
        let ms = spec.b_star.cols();
        spec.r = Matrix::identity(ms);
        if let Some(e) = entries.get("q") {
            spec.q = matrix(e)?;
            if spec.q.rows() != ns || spec.q.cols() != ns {
                return Err(ConfigError::at(e, format!("q must be {ns}x{ns}")));
            }
        }
        if let Some(e) = entries.get("r") {
            spec.r = matrix(e)?;
            if spec.r.rows() != ms || spec.r.cols() != ms {
                return Err(ConfigError::at(e, format!("r must be {ms}x{ms}")));
            }
        }
        if let Some(e) = entries.get("noise_std") {
            spec.noise_std = nonnegative(e, "noise_std", scalar(e)?)?;
        }
        if let Some(e) = entries.get("c_xi") {
            spec.c_xi = nonnegative(e, "c_xi", scalar(e)?)?;
        }
        if let Some(e) = entries.get("refresh_period") {
            spec.refresh_period = integer(e)?;
            if spec.refresh_period == 0 {
                return Err(ConfigError::at(e, "refresh_period must be at least 1"));
            }
        }
        if let Some(e) = entries.get("x0") {
            let v = vector(e)?;
            expect_dim(e, "x0", v.dim(), ns)?;
            spec.x0 = v;
        }
        Ok(())
    }

    /// Cross-field checks: every runnable configuration sits inside the
    /// hypotheses of the result it exercises.
    fn validate(&self, entries: &Entries) -> Result<(), ConfigError> {
        let blame = |keys: &[&str], msg: String| -> ConfigError {
            match keys.iter().find_map(|k| entries.get(k)) {
                Some(e) => ConfigError::at(e, msg),
                None => ConfigError {
                    line: None,
                    key: Some(keys[0].to_string()),
                    message: msg,
                },
            }
        };
        let k = self.kind;
        if k.has_set() {
            let contains = |v: &Vector| self.set.contains(v).unwrap_or(false);
            if !contains(&self.theta_star) {
                return Err(blame(
                    &["theta_star", "set_radius", "set_center", "set_lower", "set_upper"],
                    "theta_star must lie in the set".into(),
                ));
            }
            let projected = matches!(
                k,
                ExperimentKind::ConvexOgd | ExperimentKind::AdaptiveGrad | ExperimentKind::StronglyConvex
            );
            if projected && !contains(&self.theta_init) {
                return Err(blame(
                    &["theta_init", "set_radius", "set_center", "set_lower", "set_upper"],
                    "theta_init must lie in the set for projected updates".into(),
                ));
            }
        }
        if k == ExperimentKind::DisturbedSigmaMod {
            let floor = self.d.max(1.0);
            if !(self.m > floor) {
                return Err(blame(
                    &["m", "d"],
                    format!("m must exceed max{{d,1}} = {floor}, got m = {}", self.m),
                ));
            }
            let r = self.set.max_norm();
            if self.theta_init.norm() > 10.0 * r {
                return Err(blame(
                    &["theta_init"],
                    format!("theta_init must satisfy ‖theta_init‖ ≤ 10·{r}"),
                ));
            }
        }
        if k == ExperimentKind::PeStudy && self.horizon < self.pe_window as u64 + 1 {
            return Err(blame(
                &["pe_window", "horizon"],
                "horizon must exceed pe_window".into(),
            ));
        }
        if k == ExperimentKind::Oac {
            let spec = &self.oac;
            if !min_eig_lower_bound(&spec.q, 0.0).unwrap_or(false) {
                return Err(blame(&["q"], "Q must be symmetric positive semidefinite".into()));
            }
            if !(psd_margin(&spec.r, 0.0).unwrap_or(f64::NEG_INFINITY) > PIVOT_TOLERANCE) {
                return Err(blame(&["r"], "R must be symmetric positive definite".into()));
            }
            let weights = CostWeights::new(spec.q.clone(), spec.r.clone())
                .map_err(|e| blame(&["q", "r"], e.to_string()))?;
            let plant = PlantModel::new(spec.a_star.clone(), spec.b_star.clone(), spec.noise_std)
                .map_err(|e| blame(&["a_star", "b_star"], e.to_string()))?;
            plant
                .optimal_gain(&weights)
                .map_err(|_| blame(&["a_star", "b_star"], "(A_*, B_*) is not stabilizable".into()))?;
        }
        Ok(())
    }

    /// Declared bound X_max on the feature norm.
    pub fn x_max(&self) -> f64 {
        match &self.features {
            FeatureSpec::CyclingBasis { scale } => *scale,
            FeatureSpec::GaussianClipped { x_max } => *x_max,
            FeatureSpec::SinusoidBank { amplitudes, .. } => {
                amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt()
            }
            FeatureSpec::ConstantDirection { direction } => direction.norm(),
        }
    }
}

fn fmt_list<'a>(values: impl IntoIterator<Item = &'a f64>) -> String {
    values
        .into_iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn fmt_matrix(m: &Matrix) -> String {
    (0..m.rows())
        .map(|i| fmt_list(m.row(i).as_slice()))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Writes every resolved key that applies to the kind; the output parses
/// back to an equal configuration.
impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut lines: Vec<(&str, String)> = vec![
            ("kind", self.kind.name().into()),
            ("n", self.n.to_string()),
            ("horizon", self.horizon.to_string()),
            ("seed", self.seed.to_string()),
            (
                "checkpoints",
                self.checkpoints
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
        ];
        match &self.set {
            ConvexSet::Ball { center, radius } => {
                lines.push(("set", "ball".into()));
                lines.push(("set_center", fmt_list(center.as_slice())));
                lines.push(("set_radius", format!("{radius:?}")));
            }
            ConvexSet::Box { lower, upper } => {
                lines.push(("set", "box".into()));
                lines.push(("set_lower", fmt_list(lower.as_slice())));
                lines.push(("set_upper", fmt_list(upper.as_slice())));
            }
        }
        lines.push(("theta_star", fmt_list(self.theta_star.as_slice())));
        lines.push(("theta_init", fmt_list(self.theta_init.as_slice())));
        lines.push(("feature", self.features.name().into()));
        match &self.features {
            FeatureSpec::CyclingBasis { scale } => lines.push(("feature_scale", format!("{scale:?}"))),
            FeatureSpec::GaussianClipped { x_max } => lines.push(("x_max", format!("{x_max:?}"))),
            FeatureSpec::SinusoidBank {
                frequencies,
                amplitudes,
            } => {
                lines.push(("frequencies", fmt_list(frequencies)));
                lines.push(("amplitudes", fmt_list(amplitudes)));
            }
            FeatureSpec::ConstantDirection { direction } => {
                lines.push(("direction", fmt_list(direction.as_slice())))
            }
        }
        lines.push(("disturbance", self.disturbance.name().into()));
        lines.push(("d", format!("{:?}", self.d)));
        lines.push(("disturbance_freq", format!("{:?}", self.disturbance_freq)));
        lines.push((
            "grad_bound",
            self.grad_bound.map_or("auto".into(), |g| format!("{g:?}")),
        ));
        lines.push(("eps_floor", format!("{:?}", self.eps_floor)));
        lines.push(("mu", format!("{:?}", self.mu)));
        lines.push(("inverse_t_c", format!("{:?}", self.inverse_t_c)));
        lines.push(("center_spread", format!("{:?}", self.center_spread)));
        lines.push(("alpha", format!("{:?}", self.alpha)));
        lines.push(("m", format!("{:?}", self.m)));
        lines.push(("sigma", format!("{:?}", self.sigma)));
        lines.push(("pe_window", self.pe_window.to_string()));
        lines.push(("pe_beta", format!("{:?}", self.pe_beta)));
        let spec = &self.oac;
        lines.push(("a_star", fmt_matrix(&spec.a_star)));
        lines.push(("b_star", fmt_matrix(&spec.b_star)));
        lines.push(("q", fmt_matrix(&spec.q)));
        lines.push(("r", fmt_matrix(&spec.r)));
        lines.push(("noise_std", format!("{:?}", spec.noise_std)));
        lines.push(("c_xi", format!("{:?}", spec.c_xi)));
        lines.push(("refresh_period", spec.refresh_period.to_string()));
        lines.push(("x0", fmt_list(spec.x0.as_slice())));

        writeln!(f, "[experiment]")?;
        for (key, value) in lines {
            if applies(self, key) {
                writeln!(f, "{key} = {value}")?;
            }
        }
        Ok(())
    }
}
