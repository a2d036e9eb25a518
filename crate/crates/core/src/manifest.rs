//! Run manifests: the serializable description of one CLI invocation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{AxisSpec, GridSpec};
use crate::params::SystemParams;
use crate::tunneling::{uniform_grid, DEFAULT_C_STEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Portrait,
    Spectrum,
    Propagate,
    Husimi,
    Tunneling,
    SweepN,
    SweepC,
    Landscape,
    Crossings,
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string tag"))
    }
}

/// `{min, max, steps}`; `steps` may be left out where a natural grid exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

impl Range {
    fn validate(&self, field: &'static str) -> Result<()> {
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::invalid(field, "bounds must be finite"));
        }
        if self.max < self.min {
            return Err(Error::invalid(
                field,
                format!("max {} below min {}", self.max, self.min),
            ));
        }
        if self.steps == Some(0) || (self.steps == Some(1) && self.max != self.min) {
            return Err(Error::invalid(
                field,
                "steps must be >= 2 for a non-trivial range",
            ));
        }
        Ok(())
    }

    /// Uniform nodes; without `steps`, spaced by `default_step`.
    pub fn values(&self, default_step: f64) -> Vec<f64> {
        match self.steps {
            Some(1) => vec![self.min],
            Some(k) => AxisSpec::new(self.min, self.max, k).values(),
            None => uniform_grid(self.min, self.max, default_step),
        }
    }
}

/// Which state a propagation or Husimi plot starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StateChoice {
    /// Coherent state on the southern island.
    #[default]
    Minus,
    /// Coherent state on the northern island.
    Plus,
    /// Doublet reconstruction of the southern island.
    PsiMinus,
    PsiPlus,
    /// All particles in well 1.
    North,
    /// Coherent state at `theta`, `phi`.
    Coherent,
    /// Floquet state number `index`.
    Floquet,
}

fn one() -> f64 {
    1.0
}

fn default_out() -> PathBuf {
    PathBuf::from(".")
}

fn default_threshold() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub subcommand: Subcommand,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// `c (N + 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_scaled: Option<f64>,
    /// Raw kick strength, used instead of `c_scaled` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_raw: Option<f64>,
    #[serde(default = "one")]
    pub v: f64,
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kicks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_range: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_range: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_range: Option<Range>,
    /// Explicit portrait seeds `(theta, phi)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<(f64, f64)>>,
    /// Portrait seed grid `(n_theta, n_phi)` when no seeds are listed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_grid: Option<(usize, usize)>,
    #[serde(default)]
    pub state: StateChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    /// Husimi grid `(n_theta, n_phi)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub husimi_grid: Option<(usize, usize)>,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Ridge/valley threshold in decades.
    #[serde(default = "default_threshold")]
    pub feature_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl RunManifest {
    pub fn new(subcommand: Subcommand) -> Self {
        RunManifest {
            subcommand,
            n: None,
            c_scaled: None,
            c_raw: None,
            v: 1.0,
            tau: 1.0,
            epsilon: 0.0,
            kicks: None,
            n_range: None,
            c_range: None,
            v_range: None,
            seeds: None,
            seed_grid: None,
            state: StateChoice::default(),
            theta: None,
            phi: None,
            index: None,
            husimi_grid: None,
            output_dir: default_out(),
            workers: None,
            feature_threshold: default_threshold(),
            checkpoint: None,
        }
    }

    fn require_n(&self) -> Result<usize> {
        let n = self
            .n
            .ok_or_else(|| Error::invalid("n", "particle number is required"))?;
        if n < 1 {
            return Err(Error::invalid("n", "particle number must be >= 1"));
        }
        Ok(n)
    }

    fn check_c(&self) -> Result<()> {
        match (self.c_scaled, self.c_raw) {
            (Some(_), Some(_)) => Err(Error::invalid("c_raw", "give either c_scaled or c_raw, not both")),
            (None, None) => Err(Error::invalid("c_scaled", "kick strength is required")),
            (Some(x), None) | (None, Some(x)) if !x.is_finite() => {
                Err(Error::invalid("c_scaled", "must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Physical parameters at the manifest's `n` and kick strength.
    pub fn params(&self) -> Result<SystemParams> {
        let n = self.require_n()?;
        self.params_at(n)
    }

    /// Parameters for particle number `n`; `c_scaled` is kept fixed.
    pub fn params_at(&self, n: usize) -> Result<SystemParams> {
        self.check_c()?;
        let c = match (self.c_scaled, self.c_raw) {
            (Some(cs), _) => cs / (n as f64 + 1.0),
            (None, Some(c)) => c,
            _ => unreachable!("checked above"),
        };
        SystemParams::new(self.epsilon, self.v, c, self.tau, n)
    }

    /// Template with every physical field except the swept one.
    pub fn template(&self, n: usize) -> Result<SystemParams> {
        SystemParams::new(self.epsilon, self.v, 0.0, self.tau, n)
    }

    pub fn c_values(&self) -> Result<Vec<f64>> {
        let r = self
            .c_range
            .ok_or_else(|| Error::invalid("c_range", "required for this subcommand"))?;
        Ok(r.values(DEFAULT_C_STEP))
    }

    pub fn n_values(&self) -> Result<Vec<usize>> {
        let r = self
            .n_range
            .ok_or_else(|| Error::invalid("n_range", "required for this subcommand"))?;
        if r.min < 1.0 || r.min.fract() != 0.0 || r.max.fract() != 0.0 {
            return Err(Error::invalid("n_range", "bounds must be integers >= 1"));
        }
        let all: Vec<usize> = (r.min as usize..=r.max as usize).collect();
        Ok(match r.steps {
            Some(k) if k >= 2 && k < all.len() => {
                let mut picked: Vec<usize> = AxisSpec::new(r.min, r.max, k)
                    .values()
                    .iter()
                    .map(|x| x.round() as usize)
                    .collect();
                picked.dedup();
                picked
            }
            _ => all,
        })
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let c = self
            .c_range
            .ok_or_else(|| Error::invalid("c_range", "required for landscape"))?;
        let v = self
            .v_range
            .ok_or_else(|| Error::invalid("v_range", "required for landscape"))?;
        let spec = GridSpec {
            c_scaled: AxisSpec::new(c.min, c.max, c.steps.unwrap_or(160)),
            v: AxisSpec::new(v.min, v.max, v.steps.unwrap_or(160)),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks every physical constraint before any computation starts.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid("tau", format!("must be > 0, got {}", self.tau)));
        }
        if !self.v.is_finite() {
            return Err(Error::invalid("v", "must be finite"));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::invalid("epsilon", "must be finite"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("workers", "must be >= 1"));
        }
        if !(self.feature_threshold > 0.0) {
            return Err(Error::invalid("feature_threshold", "must be > 0"));
        }
        for (field, r) in [
            ("n_range", self.n_range),
            ("c_range", self.c_range),
            ("v_range", self.v_range),
        ] {
            if let Some(r) = r {
                r.validate(field)?;
            }
        }
        use Subcommand::*;
        match self.subcommand {
            Portrait | Spectrum | Propagate | Husimi | Tunneling => {
                self.params()?;
            }
            SweepN => {
                self.check_c()?;
                if self.c_raw.is_some() {
                    return Err(Error::invalid("c_raw", "sweep-n keeps c_scaled fixed"));
                }
                self.n_values()?;
            }
            SweepC | Crossings => {
                let n = self.require_n()?;
                self.template(n)?;
                let cs = self.c_values()?;
                if cs.len() < 2 {
                    return Err(Error::invalid("c_range", "need at least two points"));
                }
            }
            Landscape => {
                let n = self.require_n()?;
                self.template(n)?;
                self.grid()?;
            }
        }
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                return Err(Error::invalid("seeds", "list is empty"));
            }
            if seeds
                .iter()
                .any(|&(t, _)| !(0.0..=std::f64::consts::PI).contains(&t))
            {
                return Err(Error::invalid("seeds", "theta must lie in [0, pi]"));
            }
        }
        if let Some((a, b)) = self.husimi_grid {
            if a < 2 || b < 2 {
                return Err(Error::invalid("husimi_grid", "need at least 2 points per axis"));
            }
        }
        if self.state == StateChoice::Coherent && (self.theta.is_none() || self.phi.is_none()) {
            return Err(Error::invalid("theta", "coherent start needs theta and phi"));
        }
        if self.state == StateChoice::Floquet {
            let n = self.require_n()?;
            match self.index {
                Some(k) if k <= n => {}
                _ => {
                    return Err(Error::invalid(
                        "index",
                        format!("Floquet index must be in 0..={n}"),
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let m: RunManifest = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::invalid("manifest", format!("at `{path}`: {}", e.into_inner()))
        })?;
        m.validate()?;
        Ok(m)
    }
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid("manifest", format!("{}: {e}", path.display())))?;
    RunManifest::from_json(&text)
}
