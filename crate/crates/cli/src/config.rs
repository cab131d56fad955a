use std::path::{Path, PathBuf};

use catmfpca::ingestion::DEFAULT_TICK;
use catmfpca::{Error, GridPolicy, Mode, Result, Retention, SchemeTag, Solver};
use serde::{Deserialize, Serialize};

/// Settings shared by the subcommands. Loadable from JSON; flags override.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Expected protocol; checked against the sidecar or panel when set.
    pub mode: Option<Mode>,
    pub weights: SchemeTag,
    /// Explicit per-state weights; implies the `custom` scheme.
    pub weight_values: Option<Vec<f64>>,
    pub grid: GridPolicy,
    pub components: Option<usize>,
    pub variance_fraction: Option<f64>,
    pub solver: Solver,
    pub tick: f64,
    pub band_scale: f64,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: None,
            weights: SchemeTag::Equal,
            weight_values: None,
            grid: GridPolicy::default(),
            components: None,
            variance_fraction: None,
            solver: Solver::default(),
            tick: DEFAULT_TICK,
            band_scale: 1.0,
            out_dir: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_some() && self.variance_fraction.is_some() {
            return Err(Error::Validation(
                "give either a component count or a variance fraction, not both".into(),
            ));
        }
        if let Some(f) = self.variance_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Validation(format!("variance fraction {f} outside (0, 1]")));
            }
        }
        if self.components == Some(0) {
            return Err(Error::Validation("at least one component must be kept".into()));
        }
        if !(self.tick > 0.0 && self.tick < 0.5) {
            return Err(Error::Validation(format!("tick {} outside (0, 0.5)", self.tick)));
        }
        if !(self.band_scale.is_finite() && self.band_scale >= 0.0) {
            return Err(Error::Validation(format!("band scale {} must be non-negative", self.band_scale)));
        }
        if self.weight_values.is_some() != (self.weights == SchemeTag::Custom) {
            return Err(Error::Validation(
                "custom weights and explicit weight values go together".into(),
            ));
        }
        Ok(())
    }

    pub fn retention(&self) -> Retention {
        match (self.components, self.variance_fraction) {
            (Some(k), _) => Retention::Components(k),
            (None, Some(f)) => Retention::VarianceFraction(f),
            (None, None) => Retention::Auto,
        }
    }

    pub fn check_mode(&self, actual: Mode) -> Result<()> {
        match self.mode {
            Some(m) if m != actual => Err(Error::Validation(format!(
                "configured mode {m} but the input is {actual}"
            ))),
            _ => Ok(()),
        }
    }
}
