//! Self-contained experiment bundles for the browser runner.

use std::path::Path;

use deadeye_core::config::Config;
use deadeye_core::geometry::ViewingGeometry;
use deadeye_core::protocol::{ScheduledTrial, Sound, TimingConfig};
use deadeye_core::render::{compose, render_pair_with, ComposeMode, CrosshairSpec, RenderOptions};
use deadeye_core::scene::{Palette, Stimulus};
use deadeye_core::schema::check_version;
use deadeye_core::session::schedule;
use deadeye_core::stimgen::{instantiate_trial, TrialPlan};
use deadeye_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

/// Pre-rendered images of one trial, relative to the bundle's asset folder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetEntry {
    pub trial: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundAsset {
    pub id: Sound,
    /// Audio file inside the asset folder; the runner synthesizes a tone
    /// when absent.
    #[serde(default)]
    pub file: Option<String>,
}

/// Everything the runner needs: the plan, every trial's disc layout for
/// client-side drawing, and optionally pre-rendered images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentBundle {
    pub schema_version: u32,
    pub plan: TrialPlan,
    pub schedule: Vec<ScheduledTrial>,
    /// One parametric stimulus per trial, in plan order.
    pub stimuli: Vec<Stimulus>,
    #[serde(default)]
    pub assets: Vec<AssetEntry>,
    #[serde(default)]
    pub asset_mode: Option<ComposeMode>,
    pub geometry: ViewingGeometry,
    pub timing: TimingConfig,
    pub palette: Palette,
    pub crosshair: CrosshairSpec,
    pub sounds: Vec<SoundAsset>,
}

impl ExperimentBundle {
    pub fn new(plan: TrialPlan, config: &Config) -> Result<Self> {
        config.validate()?;
        plan.validate()?;
        let stimuli = (0..plan.len())
            .map(|i| instantiate_trial(&plan, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            schema_version: BUNDLE_SCHEMA_VERSION,
            schedule: schedule(&plan)?,
            plan,
            stimuli,
            assets: Vec::new(),
            asset_mode: None,
            geometry: config.geometry,
            timing: config.timing,
            palette: config.palette,
            crosshair: config.crosshair,
            sounds: [Sound::Correct, Sound::Incorrect, Sound::Neutral]
                .into_iter()
                .map(|id| SoundAsset { id, file: None })
                .collect(),
        })
    }

    /// Renders every trial into `dir` and lists the files in the manifest.
    pub fn prerender(&mut self, dir: &Path, mode: ComposeMode, opts: RenderOptions) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut assets = Vec::with_capacity(self.stimuli.len());
        for (i, stim) in self.stimuli.iter().enumerate() {
            let composite = compose(&render_pair_with(stim, &self.geometry, opts)?, mode);
            let mut files = Vec::new();
            for (suffix, raster) in composite.files(mode) {
                let name = format!("{i:04}_{suffix}.png");
                raster.write_png(&dir.join(&name))?;
                files.push(name);
            }
            assets.push(AssetEntry { trial: i, files });
        }
        self.assets = assets;
        self.asset_mode = Some(mode);
        Ok(())
    }

    /// Structural checks; with `asset_dir`, also that every manifest entry
    /// exists on disk.
    pub fn validate(&self, asset_dir: Option<&Path>) -> Result<()> {
        check_version(self.schema_version, BUNDLE_SCHEMA_VERSION, "bundle")?;
        self.plan.validate()?;
        let bad = |path: String, message: String| Error::Schema {
            source_name: "bundle".into(),
            path,
            message,
        };
        if self.stimuli.len() != self.plan.len() || self.schedule.len() != self.plan.len() {
            return Err(bad(
                "stimuli".into(),
                format!("plan has {} trials but {} stimuli", self.plan.len(), self.stimuli.len()),
            ));
        }
        for (i, s) in self.stimuli.iter().enumerate() {
            s.validate().map_err(|e| bad(format!("stimuli[{i}]"), e.to_string()))?;
        }
        for (i, a) in self.assets.iter().enumerate() {
            if a.trial >= self.plan.len() {
                return Err(bad(format!("assets[{i}].trial"), "no such trial".into()));
            }
            for (j, f) in a.files.iter().enumerate() {
                let p = Path::new(f);
                if p.is_absolute() || p.components().any(|c| c == std::path::Component::ParentDir) {
                    return Err(bad(format!("assets[{i}].files[{j}]"), "must be a relative path".into()));
                }
                if let Some(dir) = asset_dir {
                    if !dir.join(p).is_file() {
                        return Err(bad(format!("assets[{i}].files[{j}]"), format!("missing file {f}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let b: ExperimentBundle = deadeye_core::schema::load_json(path)?;
        b.validate(None)?;
        Ok(b)
    }
}

