use std::path::{Path, PathBuf};

use orbits_core::{Model, ModelSpec, OrbitError, Orientation, Result, Settings, Strip};
use serde::{Deserialize, Serialize};

/// The JSON file passed with `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Model file, relative to the config file.
    pub model_path: PathBuf,
    #[serde(default)]
    pub energy: Option<f64>,
    #[serde(default)]
    pub energy_range: Option<[f64; 2]>,
    #[serde(default)]
    pub de: Option<f64>,
    #[serde(default)]
    pub m_initial: Option<usize>,
    #[serde(default)]
    pub settings: Settings,
    #[serde(default)]
    pub strip: Option<Strip>,
    #[serde(default)]
    pub orientation: Orientation,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Used when `--out` is not given; relative to the config file.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> OrbitError {
    OrbitError::InvalidConfig(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.check()?;
        Ok((cfg, base))
    }

    fn check(&self) -> Result<()> {
        self.settings().validate()?;
        if let Some(e) = self.energy {
            if !e.is_finite() {
                return Err(invalid(format!("energy must be finite, got {e}")));
            }
        }
        if let Some([a, d]) = self.energy_range {
            if !(a < d) || !a.is_finite() || !d.is_finite() {
                return Err(invalid(format!("energy_range needs E_a < E_d, got [{a}, {d}]")));
            }
        }
        if let Some(de) = self.de {
            if !(de > 0.0) || !de.is_finite() {
                return Err(invalid(format!("de must be positive, got {de}")));
            }
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(invalid(format!("epsilon must be positive, got {eps}")));
            }
        }
        if let Some(s) = self.strip {
            if !(s.lo < s.hi) {
                return Err(invalid(format!("strip needs lo < hi, got [{}, {}]", s.lo, s.hi)));
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> Settings {
        let mut s = self.settings.clone();
        if let Some(m) = self.m_initial {
            s.m = m;
            s.m_max = s.m_max.max(m);
        }
        s
    }

    pub fn strip(&self) -> Strip {
        self.strip.unwrap_or_default()
    }

    pub fn model_spec(&self, base: &Path) -> Result<ModelSpec> {
        let path = base.join(&self.model_path);
        let text = std::fs::read_to_string(&path)?;
        ModelSpec::from_json(&text).map_err(|e| OrbitError::InvalidModel(format!("{}: {e}", path.display())))
    }

    pub fn model(&self, base: &Path) -> Result<Model> {
        Model::new(self.model_spec(base)?)
    }

    pub fn require_energy(&self) -> Result<f64> {
        self.energy.ok_or_else(|| invalid("solve needs `energy`"))
    }

    pub fn require_range(&self) -> Result<([f64; 2], f64)> {
        let range = self.energy_range.ok_or_else(|| invalid("needs `energy_range`"))?;
        let de = self.de.unwrap_or(range[1] - range[0]);
        Ok((range, de))
    }
}
