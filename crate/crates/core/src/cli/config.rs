use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Experiment kinds understood by the runner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Trajectory,
    Classify,
    Nontrap,
    Simulate,
    Transfer,
    Resolvent,
    Wigner,
}

impl RunKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RunKind::Trajectory => "trajectory",
            RunKind::Classify => "classify",
            RunKind::Nontrap => "nontrap",
            RunKind::Simulate => "simulate",
            RunKind::Transfer => "transfer",
            RunKind::Resolvent => "resolvent",
            RunKind::Wigner => "wigner",
        }
    }
}

impl fmt::Display for RunKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub kind: Option<RunKind>,
}

/// Numeric parameters. Which ones are required depends on the run kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSection {
    pub eps: Option<Vec<f64>>,
    pub grid: Option<Vec<usize>>,
    pub half_width: Option<f64>,
    pub center_x: Option<Vec<f64>>,
    pub center_xi: Option<Vec<f64>>,
    pub mode: Option<usize>,
    pub sigma: Option<f64>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub step: Option<f64>,
    pub snapshots: Option<usize>,
    pub eta: Option<f64>,
    pub a_plus: Option<f64>,
    pub a_minus: Option<f64>,
    pub alpha: Option<f64>,
    pub crossing: Option<usize>,
    pub k_max: Option<usize>,
    pub tol: Option<f64>,
    pub energy: Option<Vec<f64>>,
    pub seeds: Option<usize>,
    pub seed_radius: Option<f64>,
    pub r_escape: Option<f64>,
    pub s: Option<f64>,
    pub eta_min: Option<f64>,
    pub coarse_points: Option<usize>,
    pub refine_steps: Option<usize>,
    pub cap_strength: Option<f64>,
    pub subsample: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub seed: Option<u64>,
}

/// A complete experiment description, read from TOML.
///
/// ```toml
/// [model]
/// name = "degenerate_k"
/// params = { k = 0.5 }
///
/// [run]
/// kind = "transfer"
///
/// [params]
/// eps = [0.02]
/// eta = 1.0
///
/// [output]
/// dir = "out/transfer"
/// seed = 7
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub params: ParamSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Every problem found in a configuration, reported together.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigError {
    pub missing: Vec<String>,
    pub invalid: Vec<String>,
}

impl ConfigError {
    fn is_empty(&self) -> bool {
        self.missing.is_empty() && self.invalid.is_empty()
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration")?;
        if !self.missing.is_empty() {
            write!(f, "; missing required fields: {}", self.missing.join(", "))?;
        }
        if !self.invalid.is_empty() {
            write!(f, "; invalid fields: {}", self.invalid.join("; "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Self::from_toml_str(&text).map_err(|e| anyhow::anyhow!("cannot parse config {}: {e}", path.display()))
    }

    pub fn to_toml_string(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Checks presence and ranges of every field the run kind needs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut err = ConfigError::default();
        if self.model.name.is_none() {
            err.missing.push("model.name".into());
        }
        let Some(kind) = self.run.kind else {
            err.missing.push("run.kind".into());
            return Err(err);
        };
        let p = &self.params;
        let mut need = |present: bool, name: &str| {
            if !present {
                err.missing.push(format!("params.{name}"));
            }
        };
        match kind {
            RunKind::Trajectory => {
                need(p.center_x.is_some(), "center_x");
                need(p.center_xi.is_some(), "center_xi");
                need(p.horizon.is_some(), "horizon");
            }
            RunKind::Classify => {
                need(p.center_x.is_some(), "center_x");
                need(p.center_xi.is_some(), "center_xi");
            }
            RunKind::Nontrap => {
                need(p.energy.is_some(), "energy");
            }
            RunKind::Simulate | RunKind::Wigner => {
                need(p.eps.is_some(), "eps");
                need(p.grid.is_some(), "grid");
                need(p.center_x.is_some(), "center_x");
                need(p.center_xi.is_some(), "center_xi");
                if kind == RunKind::Simulate {
                    need(p.horizon.is_some(), "horizon");
                }
            }
            RunKind::Transfer => {
                need(p.eps.is_some(), "eps");
            }
            RunKind::Resolvent => {
                need(p.eps.is_some(), "eps");
                need(p.energy.is_some(), "energy");
            }
        }
        let mut bad = |ok: bool, msg: &str| {
            if !ok {
                err.invalid.push(msg.to_string());
            }
        };
        let pos = |v: Option<f64>| v.is_none_or(|x| x.is_finite() && x > 0.0);
        if let Some(eps) = &p.eps {
            bad(
                !eps.is_empty() && eps.iter().all(|e| e.is_finite() && *e > 0.0),
                "params.eps: non-empty list of positive numbers",
            );
        }
        if let Some(grid) = &p.grid {
            bad(
                matches!(grid.len(), 1 | 2) && grid.iter().all(|n| n.is_power_of_two() && *n >= 2),
                "params.grid: one or two powers of two",
            );
        }
        for (v, name) in [
            (p.half_width, "params.half_width"),
            (p.sigma, "params.sigma"),
            (p.horizon, "params.horizon"),
            (p.dt, "params.dt"),
            (p.step, "params.step"),
            (p.eta, "params.eta"),
            (p.tol, "params.tol"),
            (p.seed_radius, "params.seed_radius"),
            (p.r_escape, "params.r_escape"),
            (p.eta_min, "params.eta_min"),
        ] {
            bad(pos(v), &format!("{name}: must be a positive number"));
        }
        if let Some(a) = p.alpha {
            bad(a > 0.0 && a < 1.0, "params.alpha: must lie in (0, 1)");
        }
        if let Some(s) = p.s {
            bad(s.is_finite() && s >= 0.0, "params.s: must be nonnegative");
        }
        if let Some(c) = p.cap_strength {
            bad(c.is_finite() && c >= 0.0, "params.cap_strength: must be nonnegative");
        }
        for (v, name) in [(p.a_plus, "params.a_plus"), (p.a_minus, "params.a_minus")] {
            bad(
                v.is_none_or(|x| (0.0..=1.0).contains(&x)),
                &format!("{name}: must lie in [0, 1]"),
            );
        }
        if let Some(e) = &p.energy {
            let ok = match kind {
                RunKind::Resolvent => e.len() == 2 && e[0].is_finite() && e[1].is_finite() && e[0] <= e[1],
                _ => !e.is_empty() && e.iter().all(|v| v.is_finite()),
            };
            bad(ok, "params.energy: [lo, hi] for resolvent, a non-empty list otherwise");
        }
        if let (Some(x), Some(xi)) = (&p.center_x, &p.center_xi) {
            bad(
                x.len() == xi.len(),
                "params.center_x and params.center_xi: equal lengths",
            );
        }
        for (v, name) in [
            (p.snapshots, "params.snapshots"),
            (p.seeds, "params.seeds"),
            (p.coarse_points, "params.coarse_points"),
            (p.subsample, "params.subsample"),
            (p.k_max, "params.k_max"),
        ] {
            bad(v != Some(0), &format!("{name}: must be at least 1"));
        }
        for (k, v) in &self.model.params {
            bad(v.is_finite(), &format!("model.params.{k}: must be finite"));
        }
        if err.is_empty() {
            Ok(())
        } else {
            Err(err)
        }
    }
}
