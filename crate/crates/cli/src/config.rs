//! Line-based `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// Keys accepted in a config file.
pub const KEYS: &[&str] = &[
    "command",
    "domain",
    "rule",
    "initial_refinements",
    "m",
    "d",
    "p",
    "q",
    "alpha",
    "sigma",
    "theta",
    "rho",
    "indicator",
    "field",
    "problem",
    "eps_start",
    "eps_factor",
    "eps_steps",
    "uniform_levels",
    "max_iter",
    "marking",
    "rounds",
    "seed",
    "max_cells",
    "greedy_cap",
    "fit_points",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}, key `{k}`: {}", self.msg),
            (Some(l), None) => write!(f, "line {l}: {}", self.msg),
            (None, Some(k)) => write!(f, "key `{k}`: {}", self.msg),
            (None, None) => write!(f, "{}", self.msg),
        }
    }
}

/// Raw values with the line each key came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub values: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(ConfigError {
                    line: Some(line),
                    key: None,
                    msg: "expected `key = value`".into(),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ConfigError {
                    line: Some(line),
                    key: Some(k.into()),
                    msg: "unknown key".into(),
                });
            }
            if v.is_empty() {
                return Err(ConfigError {
                    line: Some(line),
                    key: Some(k.into()),
                    msg: "missing value".into(),
                });
            }
            if values.insert(k.to_string(), (v.to_string(), line)).is_some() {
                return Err(ConfigError {
                    line: Some(line),
                    key: Some(k.into()),
                    msg: "duplicate key".into(),
                });
            }
        }
        Ok(RawConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            key: None,
            msg: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    fn err(&self, key: &str, msg: String) -> ConfigError {
        ConfigError {
            line: self.values.get(key).map(|v| v.1),
            key: Some(key.into()),
            msg,
        }
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.values.get(key).map(|v| v.0.clone()).unwrap_or_else(|| default.into())
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.values.get(key) {
            None => Ok(default),
            Some((v, _)) => v.parse().map_err(|_| self.err(key, format!("cannot parse `{v}`"))),
        }
    }

    /// Real number; `inf` is accepted.
    pub fn real(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.get(key, default)?;
        if v.is_nan() {
            return Err(self.err(key, "NaN is not allowed".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoTag {
    H1,
    Lp,
    WeightedLp,
    TotalError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndicatorTag {
    InterpError,
    LocalSeminorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marking {
    Uniform,
    Corner,
    Random,
}

/// Validated experiment parameters.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub domain: String,
    pub rule: apxlab_core::mesh::Rule,
    pub initial_refinements: usize,
    pub m: usize,
    pub d: usize,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub theta: f64,
    pub rho: RhoTag,
    pub indicator: IndicatorTag,
    pub field: String,
    pub problem: String,
    pub eps_start: Option<f64>,
    pub eps_factor: f64,
    pub eps_steps: usize,
    pub uniform_levels: usize,
    pub max_iter: usize,
    pub marking: Marking,
    pub rounds: usize,
    pub seed: u64,
    pub max_cells: usize,
    pub greedy_cap: usize,
    pub fit_points: usize,
    /// Non-fatal remarks about sharpness of the requested parameters.
    pub warnings: Vec<String>,
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig, command: &str) -> Result<Self, ConfigError> {
        if let Some((c, line)) = raw.values.get("command") {
            if c != command {
                return Err(ConfigError {
                    line: Some(*line),
                    key: Some("command".into()),
                    msg: format!("config is for `{c}` but `{command}` was requested"),
                });
            }
        }
        let afem = command == "afem";
        let domain = raw.str_or("domain", if afem { "l_shape" } else { "unit_square" });
        let rule = match raw.str_or("rule", "nvb").as_str() {
            "nvb" => apxlab_core::mesh::Rule::Nvb,
            "red" => apxlab_core::mesh::Rule::Red,
            r => return Err(raw.err("rule", format!("unknown rule `{r}` (nvb or red)"))),
        };
        let m = raw.get("m", 1usize)?;
        if !(1..=4).contains(&m) && !(m == 0 && raw.str_or("rho", "h1") == "weighted_lp") {
            return Err(raw.err("m", format!("degree {m} outside 1..=4")));
        }
        let d = raw.get("d", m.saturating_sub(2))?;
        if afem && d + 2 < m {
            return Err(raw.err("d", format!("oscillation degree must satisfy d >= m - 2, got d = {d}, m = {m}")));
        }
        let p = raw.real("p", 2.0)?;
        let q = raw.real("q", p)?;
        if !(p > 0.0) || !(q > 0.0) {
            return Err(raw.err("p", "exponents must be positive".into()));
        }
        let alpha = raw.real("alpha", 1.5)?;
        let sigma = raw.real("sigma", 1.0)?;
        let theta = raw.real("theta", if afem { 0.5 } else { 0.0 })?;
        if afem && !(theta > 0.0 && theta <= 1.0) {
            return Err(raw.err("theta", format!("marking fraction must lie in (0, 1], got {theta}")));
        }
        let rho = match raw.str_or("rho", "h1").as_str() {
            "h1" => RhoTag::H1,
            "lp" => RhoTag::Lp,
            "weighted_lp" => RhoTag::WeightedLp,
            "total_error" => RhoTag::TotalError,
            r => return Err(raw.err("rho", format!("unknown distance `{r}`"))),
        };
        let indicator = match raw.str_or("indicator", "interp_error").as_str() {
            "interp_error" => IndicatorTag::InterpError,
            "local_seminorm" => IndicatorTag::LocalSeminorm,
            r => return Err(raw.err("indicator", format!("unknown indicator `{r}`"))),
        };
        let field = raw.str_or("field", "lshape_corner");
        if !apxlab_core::catalog::FIELD_NAMES.contains(&field.as_str()) {
            return Err(raw.err("field", format!("no catalog field `{field}`")));
        }
        let problem = raw.str_or("problem", "poisson_lshape");
        if !apxlab_core::elliptic::PROBLEM_NAMES.contains(&problem.as_str()) {
            return Err(raw.err("problem", format!("no catalog problem `{problem}`")));
        }
        let eps_start = match raw.values.get("eps_start") {
            None => None,
            Some(_) => Some(raw.real("eps_start", 1.0)?),
        };
        if let Some(e) = eps_start {
            if !(e > 0.0) {
                return Err(raw.err("eps_start", "threshold must be positive".into()));
            }
        }
        let eps_factor = raw.real("eps_factor", 0.5)?;
        if !(eps_factor > 0.0 && eps_factor < 1.0) {
            return Err(raw.err("eps_factor", format!("factor must lie in (0, 1), got {eps_factor}")));
        }
        let marking = match raw.str_or("marking", "uniform").as_str() {
            "uniform" => Marking::Uniform,
            "corner" => Marking::Corner,
            "random" => Marking::Random,
            r => return Err(raw.err("marking", format!("unknown marking `{r}`"))),
        };
        let mut cfg = ExperimentConfig {
            domain,
            rule,
            initial_refinements: raw.get("initial_refinements", 0)?,
            m,
            d,
            p,
            q,
            alpha,
            sigma,
            theta,
            rho,
            indicator,
            field,
            problem,
            eps_start,
            eps_factor,
            eps_steps: raw.get("eps_steps", 12)?,
            uniform_levels: raw.get("uniform_levels", 8)?,
            max_iter: raw.get("max_iter", 20)?,
            marking,
            rounds: raw.get("rounds", 4)?,
            seed: raw.get("seed", 0)?,
            max_cells: raw.get("max_cells", 200_000)?,
            greedy_cap: raw.get("greedy_cap", 60)?,
            fit_points: raw.get("fit_points", 6)?,
            warnings: vec![],
        };
        if cfg.fit_points < 4 {
            return Err(raw.err("fit_points", "a rate fit needs at least 4 points".into()));
        }
        if command == "rates" {
            cfg.check_rate_hypotheses(raw)?;
        }
        Ok(cfg)
    }

    /// δ of the local seminorm indicator for the configured distance.
    pub fn delta(&self) -> f64 {
        match self.rho {
            RhoTag::H1 => (self.alpha - self.sigma) / 2.0,
            _ => self.alpha / 2.0 + 1.0 / self.p - 1.0 / self.q,
        }
    }

    fn check_rate_hypotheses(&mut self, raw: &RawConfig) -> Result<(), ConfigError> {
        if self.rho == RhoTag::WeightedLp && self.indicator == IndicatorTag::LocalSeminorm {
            return Err(raw.err("indicator", "local seminorm indicators use continuous chains; pick interp_error for weighted_lp".into()));
        }
        if self.rho == RhoTag::TotalError && self.indicator == IndicatorTag::LocalSeminorm {
            return Err(raw.err("indicator", "total_error runs use interp_error".into()));
        }
        if self.indicator == IndicatorTag::LocalSeminorm {
            if self.q > self.p {
                return Err(raw.err("q", format!("the direct estimate needs q <= p, got q = {} > p = {}", self.q, self.p)));
            }
            if self.rho == RhoTag::H1 && self.alpha <= self.sigma {
                return Err(raw.err("alpha", format!("need alpha > sigma, got {} <= {}", self.alpha, self.sigma)));
            }
            if self.delta() <= 0.0 {
                return Err(raw.err(
                    "alpha",
                    format!("delta = alpha/n + 1/p - 1/q = {:.4} must be positive", self.delta()),
                ));
            }
            let saturation = self.m as f64 + 1.0 / self.q;
            if self.alpha >= saturation {
                self.warnings.push(format!(
                    "alpha = {} is at or above the saturation m + 1/q = {saturation}: seminorms of smooth fields diverge",
                    self.alpha
                ));
            }
        }
        if self.eps_steps == 0 {
            return Err(raw.err("eps_steps", "need at least one threshold".into()));
        }
        Ok(())
    }

    /// Resolved values in a stable order.
    pub fn resolved(&self) -> Vec<(&'static str, String)> {
        vec![
            ("domain", self.domain.clone()),
            ("rule", self.rule.name().to_string()),
            ("initial_refinements", self.initial_refinements.to_string()),
            ("m", self.m.to_string()),
            ("d", self.d.to_string()),
            ("p", self.p.to_string()),
            ("q", self.q.to_string()),
            ("alpha", self.alpha.to_string()),
            ("sigma", self.sigma.to_string()),
            ("theta", self.theta.to_string()),
            ("rho", format!("{:?}", self.rho)),
            ("indicator", format!("{:?}", self.indicator)),
            ("field", self.field.clone()),
            ("problem", self.problem.clone()),
            ("eps_start", self.eps_start.map(|e| e.to_string()).unwrap_or_else(|| "auto".into())),
            ("eps_factor", self.eps_factor.to_string()),
            ("eps_steps", self.eps_steps.to_string()),
            ("uniform_levels", self.uniform_levels.to_string()),
            ("max_iter", self.max_iter.to_string()),
            ("marking", format!("{:?}", self.marking)),
            ("rounds", self.rounds.to_string()),
            ("seed", self.seed.to_string()),
            ("max_cells", self.max_cells.to_string()),
            ("greedy_cap", self.greedy_cap.to_string()),
            ("fit_points", self.fit_points.to_string()),
        ]
    }
}
