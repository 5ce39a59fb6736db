//! Display and timing configuration shared by the CLI and the server.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ViewingGeometry, STUDY_DISC_DIAMETER_CM, STUDY_MARGIN_H_CM, STUDY_MARGIN_V_CM};
use crate::protocol::TimingConfig;
use crate::render::{CrosshairSpec, RenderOptions};
use crate::scene::Palette;
use crate::stimgen::{GridSpec, PlanOptions, DEFAULT_EXPOSURE_MS, DEFAULT_JITTER_DEG};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub margin_h_cm: f64,
    pub margin_v_cm: f64,
    pub disc_diameter_cm: f64,
    pub jitter_deg: f64,
    pub exposure_ms: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            margin_h_cm: STUDY_MARGIN_H_CM,
            margin_v_cm: STUDY_MARGIN_V_CM,
            disc_diameter_cm: STUDY_DISC_DIAMETER_CM,
            jitter_deg: DEFAULT_JITTER_DEG,
            exposure_ms: DEFAULT_EXPOSURE_MS,
        }
    }
}

/// Everything not fixed by the trial plan itself. Every section and field is
/// optional in the TOML file; omitted values keep the laboratory defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub geometry: ViewingGeometry,
    pub layout: LayoutConfig,
    pub timing: TimingConfig,
    pub palette: Palette,
    pub crosshair: CrosshairSpec,
    pub render: RenderOptions,
}

impl Config {
    pub fn from_toml(text: &str, source_name: &str) -> Result<Config> {
        let cfg: Config = crate::schema::parse_toml(text, source_name)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.timing.validate()?;
        if !(self.layout.exposure_ms > 0.0) {
            return Err(Error::InvalidGeometry("exposure_ms must be positive".into()));
        }
        self.grid().map(|_| ())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let l = &self.layout;
        let grid = GridSpec::from_geometry(
            &self.geometry,
            l.margin_h_cm,
            l.margin_v_cm,
            l.disc_diameter_cm,
            l.jitter_deg,
        )?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn plan_options(&self) -> Result<PlanOptions> {
        Ok(PlanOptions {
            grid: self.grid()?,
            palette: self.palette,
            exposure_ms: self.layout.exposure_ms,
            ..PlanOptions::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let c = Config::from_toml("", "t").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.grid().unwrap(), GridSpec::default());
    }

    #[test]
    fn partial_override() {
        let c = Config::from_toml("[timing]\nrefresh_hz = 120\n[geometry]\ndistance_cm = 200\n", "t")
            .unwrap();
        assert_eq!(c.timing.refresh_hz, 120.0);
        assert_eq!(c.timing.fixation_ms, 2500.0);
        assert_eq!(c.geometry.distance_cm, 200.0);
    }

    #[test]
    fn errors_name_the_field() {
        let err = Config::from_toml("[timing]\nrefresh_hz = \"fast\"\n", "lab.toml")
            .unwrap_err()
            .to_string();
        assert!(err.contains("timing.refresh_hz") && err.contains("lab.toml"), "{err}");
        assert!(Config::from_toml("[layout]\njitter_deg = 5.0\n", "t").is_err());
    }
}
