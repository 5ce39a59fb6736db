//! Scene model: discs with per-eye visibility and the monocular-target transform.
//!
//! A disc that is drawn for one eye only is "monocular". Everything else in a
//! stimulus is shown identically to both eyes, so the two per-eye images differ
//! only where a monocular disc sits.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stimgen::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eye {
    Left,
    Right,
}

impl Eye {
    pub const BOTH: [Eye; 2] = [Eye::Left, Eye::Right];

    pub fn other(self) -> Eye {
        match self {
            Eye::Left => Eye::Right,
            Eye::Right => Eye::Left,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Eye::Left => "L",
            Eye::Right => "R",
        }
    }
}

impl std::str::FromStr for Eye {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Eye::Left),
            "right" | "r" => Ok(Eye::Right),
            other => Err(format!("unknown eye `{other}` (expected left or right)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColorRgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl ColorRgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    pub const fn to_array(self) -> [u8; 3] {
        [self.r, self.g, self.b]
    }
}

/// Display colors. Defaults are a saturated blue background with yellow and
/// magenta discs and a white fixation cross.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Palette {
    pub background: ColorRgb,
    pub distractor: ColorRgb,
    pub magenta: ColorRgb,
    pub crosshair: ColorRgb,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            background: ColorRgb::new(0, 84, 159),
            distractor: ColorRgb::new(255, 214, 0),
            magenta: ColorRgb::new(227, 0, 102),
            crosshair: ColorRgb::new(255, 255, 255),
        }
    }
}

/// Position in degrees of visual angle from the screen center, y pointing up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegPoint {
    pub x: f64,
    pub y: f64,
}

impl DegPoint {
    pub fn distance(self, other: DegPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn eccentricity(self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Layout grid cell, row 0 at the top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: u8,
    pub col: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub id: u32,
    pub center: DegPoint,
    pub radius_deg: f64,
    pub color: ColorRgb,
    pub visible_left: bool,
    pub visible_right: bool,
    /// Grid cell the disc was laid out in, if it came from a grid layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<Cell>,
}

impl Disc {
    pub fn visible_to(&self, eye: Eye) -> bool {
        match eye {
            Eye::Left => self.visible_left,
            Eye::Right => self.visible_right,
        }
    }

    pub fn is_bilateral(&self) -> bool {
        self.visible_left && self.visible_right
    }

    pub fn is_monocular(&self) -> bool {
        self.visible_left != self.visible_right
    }

    fn set_visible(&mut self, eye: Eye, visible: bool) {
        match eye {
            Eye::Left => self.visible_left = visible,
            Eye::Right => self.visible_right = visible,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Preattentive,
    Conjunction,
}

impl Experiment {
    pub fn set_sizes(self) -> &'static [usize] {
        match self {
            Experiment::Preattentive => &[4, 8, 16, 30],
            Experiment::Conjunction => &[4, 8, 16],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Preattentive => "preattentive",
            Experiment::Conjunction => "conjunction",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "preattentive" => Ok(Experiment::Preattentive),
            "conjunction" => Ok(Experiment::Conjunction),
            other => Err(format!(
                "unknown experiment `{other}` (expected preattentive or conjunction)"
            )),
        }
    }
}

/// Target type in the color/monocularity conjunction display.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjunctionTarget {
    /// Magenta disc shown to one eye (all other magenta discs are bilateral).
    MagentaPopout,
    /// Yellow disc shown to both eyes (all other yellow discs are monocular).
    YellowNonPopout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "ms")]
pub enum Exposure {
    Fixed(f64),
    UntilResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialCondition {
    pub set_size: usize,
    pub target_present: bool,
    /// Eye that sees the monocular disc(s). In conjunction trials this is the
    /// trial's eye assignment and is also set for yellow (bilateral) targets.
    pub target_eye: Option<Eye>,
    pub experiment: Experiment,
    pub conjunction_target_kind: Option<ConjunctionTarget>,
    pub exposure: Exposure,
}

impl TrialCondition {
    /// True when the target itself is shown to one eye only.
    pub fn target_is_monocular(&self) -> bool {
        self.target_present
            && match self.experiment {
                Experiment::Preattentive => true,
                Experiment::Conjunction => {
                    self.conjunction_target_kind == Some(ConjunctionTarget::MagentaPopout)
                }
            }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.experiment.set_sizes().contains(&self.set_size) {
            return Err(Error::SetSize(self.set_size));
        }
        let bad = |msg: &str| Err(Error::InvalidStimulus(msg.to_string()));
        match self.experiment {
            Experiment::Preattentive => {
                if self.target_eye.is_some() != self.target_present {
                    return bad("target_eye must be set exactly when a target is present");
                }
                if self.conjunction_target_kind.is_some() {
                    return bad("preattentive trials carry no conjunction target kind");
                }
            }
            Experiment::Conjunction => {
                if self.conjunction_target_kind.is_some() != self.target_present {
                    return bad("conjunction_target_kind must be set exactly when a target is present");
                }
                if self.target_present && self.target_eye.is_none() {
                    return bad("conjunction target trials need an eye assignment");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub background: ColorRgb,
    pub discs: Vec<Disc>,
    pub target_id: Option<u32>,
    pub grid: GridSpec,
    pub condition: TrialCondition,
}

impl Stimulus {
    pub fn disc(&self, id: u32) -> Option<&Disc> {
        self.discs.iter().find(|d| d.id == id)
    }

    pub fn target(&self) -> Option<&Disc> {
        self.target_id.and_then(|id| self.disc(id))
    }

    /// Checks every structural invariant that holds regardless of experiment,
    /// plus the per-experiment visibility rules.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidStimulus(msg));
        let mut ids = BTreeSet::new();
        for d in &self.discs {
            if !ids.insert(d.id) {
                return bad(format!("duplicate disc id {}", d.id));
            }
            if !(d.radius_deg > 0.0) || !d.center.x.is_finite() || !d.center.y.is_finite() {
                return bad(format!("disc {} has invalid geometry", d.id));
            }
            if !d.visible_left && !d.visible_right {
                return bad(format!("disc {} is invisible to both eyes", d.id));
            }
        }
        if let Some(t) = self.target_id {
            if !ids.contains(&t) {
                return bad(format!("target id {t} names no disc"));
            }
        }
        for (i, a) in self.discs.iter().enumerate() {
            for b in &self.discs[i + 1..] {
                if a.center.distance(b.center) < a.radius_deg + b.radius_deg {
                    return bad(format!("discs {} and {} overlap", a.id, b.id));
                }
            }
        }
        match self.condition.experiment {
            Experiment::Preattentive => {
                for d in &self.discs {
                    if Some(d.id) != self.target_id && !d.is_bilateral() {
                        return bad(format!("non-target disc {} is monocular", d.id));
                    }
                }
            }
            Experiment::Conjunction => {
                // Checked by conjunction_invariant_holds; colors are needed for that.
            }
        }
        Ok(())
    }
}

/// Hide disc `disc_id` from `hidden_eye` and make it the target.
pub fn apply_deadeye(stimulus: &Stimulus, disc_id: u32, hidden_eye: Eye) -> Result<Stimulus> {
    let mut out = stimulus.clone();
    let disc = out
        .discs
        .iter_mut()
        .find(|d| d.id == disc_id)
        .ok_or(Error::UnknownDisc(disc_id))?;
    if !disc.is_bilateral() {
        let hidden = if disc.visible_left { Eye::Right } else { Eye::Left };
        return Err(Error::AlreadyMonocular { id: disc_id, hidden });
    }
    disc.set_visible(hidden_eye, false);
    disc.set_visible(hidden_eye.other(), true);
    out.target_id = Some(disc_id);
    Ok(out)
}

/// Turn an all-yellow, all-bilateral display into the color × monocularity
/// conjunction display.
///
/// `⌈n/2⌉` discs become magenta. Yellow non-targets become monocular and
/// magenta non-targets stay bilateral; the target breaks the rule for its
/// color. Every monocular disc is visible only to the trial's eye
/// (`condition.target_eye`, drawn from the seed when unset).
///
/// When the stimulus already names a target it is kept, otherwise one is
/// drawn uniformly.
pub fn conjunction_paint(
    stimulus: &Stimulus,
    palette: &Palette,
    rng_seed: u64,
    target_kind: Option<ConjunctionTarget>,
) -> Result<Stimulus> {
    let n = stimulus.discs.len();
    if n < 2 {
        return Err(Error::SetSize(n));
    }
    for d in &stimulus.discs {
        if d.color != palette.distractor || !d.is_bilateral() {
            return Err(Error::InvalidStimulus(format!(
                "disc {} is not a bilateral distractor-colored disc",
                d.id
            )));
        }
    }
    if target_kind.is_none() && stimulus.target_id.is_some() {
        return Err(Error::InvalidStimulus(
            "target-absent conjunction paint on a stimulus with a target".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = stimulus.clone();

    let target_idx = match target_kind {
        None => None,
        Some(_) => Some(match stimulus.target_id {
            Some(id) => out
                .discs
                .iter()
                .position(|d| d.id == id)
                .ok_or(Error::UnknownDisc(id))?,
            None => rng.random_range(0..n),
        }),
    };
    let visible_eye = match stimulus.condition.target_eye {
        Some(e) => e,
        None => {
            if rng.random_bool(0.5) {
                Eye::Left
            } else {
                Eye::Right
            }
        }
    };

    let n_magenta = n.div_ceil(2);
    let mut others: Vec<usize> = (0..n).filter(|&i| Some(i) != target_idx).collect();
    others.shuffle(&mut rng);
    let mut magenta = vec![false; n];
    let mut budget = n_magenta;
    if let (Some(t), Some(ConjunctionTarget::MagentaPopout)) = (target_idx, target_kind) {
        magenta[t] = true;
        budget -= 1;
    }
    for &i in others.iter().take(budget) {
        magenta[i] = true;
    }

    for (i, d) in out.discs.iter_mut().enumerate() {
        let is_target = Some(i) == target_idx;
        let monocular = if magenta[i] {
            d.color = palette.magenta;
            is_target
        } else {
            !is_target
        };
        if monocular {
            d.set_visible(visible_eye.other(), false);
        }
    }

    out.target_id = target_idx.map(|i| out.discs[i].id);
    out.condition.experiment = Experiment::Conjunction;
    out.condition.target_present = target_kind.is_some();
    out.condition.conjunction_target_kind = target_kind;
    if target_kind.is_some() {
        out.condition.target_eye = Some(visible_eye);
    }
    Ok(out)
}

/// The conjunction display rule: yellow discs are monocular and magenta discs
/// bilateral, except for the target, which breaks the rule of its color.
pub fn conjunction_invariant_holds(stimulus: &Stimulus, palette: &Palette) -> bool {
    let kind = stimulus.condition.conjunction_target_kind;
    stimulus.discs.iter().all(|d| {
        let is_target = Some(d.id) == stimulus.target_id;
        let yellow_rule = d.color == palette.distractor && d.is_monocular();
        let magenta_rule = d.color == palette.magenta && d.is_bilateral();
        let yellow_exception = is_target && kind == Some(ConjunctionTarget::YellowNonPopout);
        let magenta_exception = is_target && kind == Some(ConjunctionTarget::MagentaPopout);
        if d.color == palette.distractor {
            yellow_rule ^ yellow_exception
        } else if d.color == palette.magenta {
            magenta_rule ^ magenta_exception
        } else {
            false
        }
    })
}
