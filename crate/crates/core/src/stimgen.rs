//! Jittered-grid layouts and balanced trial plans.
//!
//! Everything here is a pure function of its seed. A plan stores one layout
//! seed per trial, so any single trial can be re-instantiated on its own.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    cm_to_deg, ViewingGeometry, STUDY_DISC_DIAMETER_CM, STUDY_MARGIN_H_CM, STUDY_MARGIN_V_CM,
};
use crate::scene::{
    apply_deadeye, conjunction_paint, Cell, ConjunctionTarget, DegPoint, Disc, Experiment,
    Exposure, Eye, Palette, Stimulus, TrialCondition,
};

pub const PLAN_SCHEMA_VERSION: u32 = 1;

/// Seed used when every participant should see the same sequence.
pub const CANONICAL_SEED: u64 = 20_190_917;

pub const TRIALS_PER_BLOCK: usize = 48;
pub const DEFAULT_EXPOSURE_MS: f64 = 250.0;
pub const DEFAULT_JITTER_DEG: f64 = 0.3;

const STREAM_BLOCK_ORDER: u64 = 1;
const STREAM_LAYOUT: u64 = 2;
const STREAM_TARGET: u64 = 3;
const STREAM_PAINT: u64 = 4;

/// SplitMix64 finalizer over (seed, stream, index).
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: u8,
    pub cols: u8,
    pub cell_w_deg: f64,
    pub cell_h_deg: f64,
    pub margin_h_deg: f64,
    pub margin_v_deg: f64,
    pub jitter_max_deg: f64,
    pub disc_radius_deg: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::from_geometry(
            &ViewingGeometry::default(),
            STUDY_MARGIN_H_CM,
            STUDY_MARGIN_V_CM,
            STUDY_DISC_DIAMETER_CM,
            DEFAULT_JITTER_DEG,
        )
        .expect("default geometry is valid")
    }
}

impl GridSpec {
    /// 5×6 grid filling the screen minus the given margins.
    pub fn from_geometry(
        geom: &ViewingGeometry,
        margin_h_cm: f64,
        margin_v_cm: f64,
        disc_diameter_cm: f64,
        jitter_max_deg: f64,
    ) -> Result<Self> {
        geom.validate()?;
        if margin_h_cm * 2.0 >= geom.screen_w_cm || margin_v_cm * 2.0 >= geom.screen_h_cm {
            return Err(Error::InvalidGrid("margins exceed the screen".into()));
        }
        let (rows, cols) = (5u8, 6u8);
        let half_w = geom.usable_half_width_deg(margin_h_cm);
        let half_h = geom.usable_half_height_deg(margin_v_cm);
        let grid = GridSpec {
            rows,
            cols,
            cell_w_deg: 2.0 * half_w / cols as f64,
            cell_h_deg: 2.0 * half_h / rows as f64,
            margin_h_deg: geom.half_width_deg() - half_w,
            margin_v_deg: geom.half_height_deg() - half_h,
            jitter_max_deg,
            disc_radius_deg: cm_to_deg(disc_diameter_cm, geom.distance_cm)? / 2.0,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn n_cells(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    /// Largest jitter that keeps every disc inside its own cell.
    pub fn max_safe_jitter(&self) -> f64 {
        (self.cell_w_deg.min(self.cell_h_deg) - 2.0 * self.disc_radius_deg) / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidGrid("grid needs at least one cell".into()));
        }
        if !(self.disc_radius_deg > 0.0) || !(self.cell_w_deg > 0.0) || !(self.cell_h_deg > 0.0) {
            return Err(Error::InvalidGrid("cell and disc sizes must be positive".into()));
        }
        if !(self.jitter_max_deg >= 0.0) || self.jitter_max_deg > self.max_safe_jitter() + 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "jitter {} exceeds the safe bound {}",
                self.jitter_max_deg,
                self.max_safe_jitter()
            )));
        }
        Ok(())
    }

    pub fn cell_index(&self, cell: Cell) -> usize {
        cell.row as usize * self.cols as usize + cell.col as usize
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell {
            row: (index / self.cols as usize) as u8,
            col: (index % self.cols as usize) as u8,
        }
    }

    pub fn cell_center(&self, cell: Cell) -> DegPoint {
        DegPoint {
            x: -(self.cols as f64) * self.cell_w_deg / 2.0 + (cell.col as f64 + 0.5) * self.cell_w_deg,
            y: (self.rows as f64) * self.cell_h_deg / 2.0 - (cell.row as f64 + 0.5) * self.cell_h_deg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutSlot {
    pub cell: Cell,
    pub center: DegPoint,
}

/// Pick `set_size` distinct cells uniformly and jitter each disc around its
/// cell centre.
pub fn generate_layout(grid: &GridSpec, set_size: usize, seed: u64) -> Result<Vec<LayoutSlot>> {
    grid.validate()?;
    if set_size == 0 || set_size > grid.n_cells() {
        return Err(Error::SetSize(set_size));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: Vec<usize> = index::sample(&mut rng, grid.n_cells(), set_size).into_vec();
    cells.sort_unstable();
    let j = grid.jitter_max_deg;
    Ok(cells
        .into_iter()
        .map(|i| {
            let cell = grid.cell_at(i);
            let c = grid.cell_center(cell);
            let (dx, dy) = if j > 0.0 {
                (rng.random_range(-j..=j), rng.random_range(-j..=j))
            } else {
                (0.0, 0.0)
            };
            LayoutSlot {
                cell,
                center: DegPoint {
                    x: c.x + dx,
                    y: c.y + dy,
                },
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrial {
    pub index: usize,
    pub condition: TrialCondition,
    pub layout_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanBlock {
    pub set_size: usize,
    pub trials: Vec<PlannedTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub seed: u64,
    pub grid: GridSpec,
    pub palette: Palette,
    pub blocks: Vec<PlanBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOptions {
    pub grid: GridSpec,
    pub palette: Palette,
    /// Set sizes in presentation order; `None` means ascending.
    pub block_order: Option<Vec<usize>>,
    pub exposure_ms: f64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            palette: Palette::default(),
            block_order: None,
            exposure_ms: DEFAULT_EXPOSURE_MS,
        }
    }
}

/// Per-block condition counts, used to check balancing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BlockCounts {
    pub present: usize,
    pub absent: usize,
    pub left: usize,
    pub right: usize,
    pub magenta: usize,
    pub yellow: usize,
    pub magenta_left: usize,
    pub magenta_right: usize,
    pub yellow_left: usize,
    pub yellow_right: usize,
}

impl PlanBlock {
    pub fn counts(&self) -> BlockCounts {
        let mut c = BlockCounts::default();
        for t in &self.trials {
            let cond = &t.condition;
            if !cond.target_present {
                c.absent += 1;
                continue;
            }
            c.present += 1;
            let left = cond.target_eye == Some(Eye::Left);
            let right = cond.target_eye == Some(Eye::Right);
            c.left += left as usize;
            c.right += right as usize;
            match cond.conjunction_target_kind {
                Some(ConjunctionTarget::MagentaPopout) => {
                    c.magenta += 1;
                    c.magenta_left += left as usize;
                    c.magenta_right += right as usize;
                }
                Some(ConjunctionTarget::YellowNonPopout) => {
                    c.yellow += 1;
                    c.yellow_left += left as usize;
                    c.yellow_right += right as usize;
                }
                None => {}
            }
        }
        c
    }
}

impl TrialPlan {
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.trials.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn trials(&self) -> impl Iterator<Item = (usize, &PlannedTrial)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(b, block)| block.trials.iter().map(move |t| (b, t)))
    }

    /// Block index and trial for a global trial index.
    pub fn trial(&self, index: usize) -> Result<(usize, &PlannedTrial)> {
        let len = self.len();
        self.trials()
            .nth(index)
            .ok_or(Error::TrialIndex { index, len })
    }

    /// Checks the exact per-block balancing rules and index continuity.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let bad = |m: String| Err(Error::InvalidStimulus(m));
        let mut expect_index = 0;
        for (b, block) in self.blocks.iter().enumerate() {
            for t in &block.trials {
                if t.index != expect_index {
                    return bad(format!("block {b}: trial index {} out of sequence", t.index));
                }
                expect_index += 1;
                t.condition.validate()?;
                if t.condition.set_size != block.set_size || t.condition.experiment != self.experiment {
                    return bad(format!("trial {} does not match its block", t.index));
                }
            }
            if block.trials.len() != TRIALS_PER_BLOCK {
                return bad(format!("block {b} has {} trials", block.trials.len()));
            }
            let c = block.counts();
            let balanced = match self.experiment {
                Experiment::Preattentive => {
                    c.present == 24 && c.absent == 24 && c.left == 12 && c.right == 12
                }
                Experiment::Conjunction => {
                    c.present == 24
                        && c.absent == 24
                        && c.magenta == 12
                        && c.yellow == 12
                        && c.magenta_left == 6
                        && c.magenta_right == 6
                        && c.yellow_left == 6
                        && c.yellow_right == 6
                }
            };
            if !balanced {
                return bad(format!("block {b} is unbalanced: {c:?}"));
            }
        }
        Ok(())
    }
}

pub fn generate_plan(experiment: Experiment, seed: u64) -> TrialPlan {
    generate_plan_with(experiment, seed, &PlanOptions::default())
        .expect("default plan options are valid")
}

pub fn generate_plan_with(
    experiment: Experiment,
    seed: u64,
    options: &PlanOptions,
) -> Result<TrialPlan> {
    options.grid.validate()?;
    let sizes: Vec<usize> = match &options.block_order {
        None => experiment.set_sizes().to_vec(),
        Some(order) => {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != experiment.set_sizes() {
                return Err(Error::InvalidStimulus(format!(
                    "block order {order:?} is not a permutation of {:?}",
                    experiment.set_sizes()
                )));
            }
            order.clone()
        }
    };
    let exposure = match experiment {
        Experiment::Preattentive => Exposure::Fixed(options.exposure_ms),
        Experiment::Conjunction => Exposure::UntilResponse,
    };

    let mut blocks = Vec::with_capacity(sizes.len());
    let mut index = 0;
    for (b, &set_size) in sizes.iter().enumerate() {
        let mut conditions = block_conditions(experiment, set_size, exposure);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_BLOCK_ORDER, b as u64));
        conditions.shuffle(&mut rng);
        let trials = conditions
            .into_iter()
            .map(|condition| {
                let t = PlannedTrial {
                    index,
                    condition,
                    layout_seed: derive_seed(seed, STREAM_LAYOUT, index as u64),
                };
                index += 1;
                t
            })
            .collect();
        blocks.push(PlanBlock { set_size, trials });
    }
    Ok(TrialPlan {
        schema_version: PLAN_SCHEMA_VERSION,
        experiment,
        seed,
        grid: options.grid,
        palette: options.palette,
        blocks,
    })
}

/// The 48 balanced conditions of one block, in canonical (unshuffled) order.
fn block_conditions(experiment: Experiment, set_size: usize, exposure: Exposure) -> Vec<TrialCondition> {
    let make = |present: bool, eye: Option<Eye>, kind: Option<ConjunctionTarget>| TrialCondition {
        set_size,
        target_present: present,
        target_eye: eye,
        experiment,
        conjunction_target_kind: kind,
        exposure,
    };
    let mut out = Vec::with_capacity(TRIALS_PER_BLOCK);
    match experiment {
        Experiment::Preattentive => {
            for eye in Eye::BOTH {
                out.extend(std::iter::repeat_n(make(true, Some(eye), None), 12));
            }
        }
        Experiment::Conjunction => {
            for kind in [ConjunctionTarget::MagentaPopout, ConjunctionTarget::YellowNonPopout] {
                for eye in Eye::BOTH {
                    out.extend(std::iter::repeat_n(make(true, Some(eye), Some(kind)), 6));
                }
            }
        }
    }
    out.extend(std::iter::repeat_n(make(false, None, None), 24));
    out
}

/// Build the stimulus for trial `index` of `plan`.
pub fn instantiate_trial(plan: &TrialPlan, index: usize) -> Result<Stimulus> {
    let (_, trial) = plan.trial(index)?;
    let cond = &trial.condition;
    let layout = generate_layout(&plan.grid, cond.set_size, trial.layout_seed)?;
    let discs = layout
        .iter()
        .enumerate()
        .map(|(i, slot)| Disc {
            id: i as u32,
            center: slot.center,
            radius_deg: plan.grid.disc_radius_deg,
            color: plan.palette.distractor,
            visible_left: true,
            visible_right: true,
            cell: Some(slot.cell),
        })
        .collect::<Vec<_>>();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(trial.layout_seed, STREAM_TARGET, 0));
    let target_id = cond
        .target_present
        .then(|| rng.random_range(0..discs.len()) as u32);
    let base = Stimulus {
        background: plan.palette.background,
        discs,
        target_id: None,
        grid: plan.grid,
        condition: cond.clone(),
    };
    let stimulus = match cond.experiment {
        Experiment::Preattentive => match (target_id, cond.target_eye) {
            (Some(id), Some(eye)) => apply_deadeye(&base, id, eye.other())?,
            (None, _) => base,
            (Some(_), None) => {
                return Err(Error::InvalidStimulus(format!(
                    "trial {index}: target without an eye"
                )))
            }
        },
        Experiment::Conjunction => {
            let base = Stimulus { target_id, ..base };
            conjunction_paint(
                &base,
                &plan.palette,
                derive_seed(trial.layout_seed, STREAM_PAINT, 0),
                cond.conjunction_target_kind,
            )?
        }
    };
    stimulus.validate()?;
    Ok(stimulus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::conjunction_invariant_holds;

    #[test]
    fn default_grid_respects_jitter_bound() {
        let g = GridSpec::default();
        g.validate().unwrap();
        assert!(g.jitter_max_deg <= g.max_safe_jitter());
        assert_eq!(g.n_cells(), 30);
    }

    #[test]
    fn oversize_jitter_rejected() {
        let mut g = GridSpec::default();
        g.jitter_max_deg = g.max_safe_jitter() + 0.01;
        assert!(g.validate().is_err());
    }

    #[test]
    fn full_layout_uses_every_cell() {
        let g = GridSpec::default();
        let slots = generate_layout(&g, 30, 42).unwrap();
        let mut cells: Vec<usize> = slots.iter().map(|s| g.cell_index(s.cell)).collect();
        cells.sort_unstable();
        assert_eq!(cells, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn zero_jitter_sits_on_cell_center() {
        let mut g = GridSpec::default();
        g.jitter_max_deg = 0.0;
        let slots = generate_layout(&g, 1, 7).unwrap();
        assert_eq!(slots[0].center, g.cell_center(slots[0].cell));
    }

    #[test]
    fn layout_rejects_bad_set_sizes() {
        let g = GridSpec::default();
        assert!(matches!(generate_layout(&g, 31, 0), Err(Error::SetSize(31))));
        assert!(matches!(generate_layout(&g, 0, 0), Err(Error::SetSize(0))));
    }

    #[test]
    fn plan_sizes() {
        let p = generate_plan(Experiment::Preattentive, 1);
        assert_eq!(p.len(), 192);
        p.validate().unwrap();
        let c = generate_plan(Experiment::Conjunction, 1);
        assert_eq!(c.len(), 144);
        c.validate().unwrap();
        assert_eq!(
            c.blocks.iter().map(|b| b.set_size).collect::<Vec<_>>(),
            vec![4, 8, 16]
        );
    }

    #[test]
    fn plan_is_deterministic() {
        let a = serde_json::to_vec(&generate_plan(Experiment::Conjunction, 99)).unwrap();
        let b = serde_json::to_vec(&generate_plan(Experiment::Conjunction, 99)).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_vec(&generate_plan(Experiment::Conjunction, 100)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn custom_block_order() {
        let opts = PlanOptions {
            block_order: Some(vec![30, 4, 16, 8]),
            ..PlanOptions::default()
        };
        let p = generate_plan_with(Experiment::Preattentive, 3, &opts).unwrap();
        assert_eq!(
            p.blocks.iter().map(|b| b.set_size).collect::<Vec<_>>(),
            vec![30, 4, 16, 8]
        );
        p.validate().unwrap();
        let bad = PlanOptions {
            block_order: Some(vec![4, 8, 16]),
            ..PlanOptions::default()
        };
        assert!(generate_plan_with(Experiment::Preattentive, 3, &bad).is_err());
    }

    #[test]
    fn preattentive_absent_trial_is_all_bilateral_yellow() {
        let p = generate_plan(Experiment::Preattentive, 5);
        let (i, _) = p
            .trials()
            .map(|(_, t)| t)
            .enumerate()
            .find(|(_, t)| !t.condition.target_present)
            .unwrap();
        let s = instantiate_trial(&p, i).unwrap();
        assert!(s.discs.iter().all(|d| d.is_bilateral() && d.color == p.palette.distractor));
        assert_eq!(s.target_id, None);
    }

    #[test]
    fn preattentive_left_target_hides_right_eye() {
        let p = generate_plan(Experiment::Preattentive, 5);
        let i = p
            .trials()
            .position(|(_, t)| t.condition.target_eye == Some(Eye::Left))
            .unwrap();
        let s = instantiate_trial(&p, i).unwrap();
        let hidden: Vec<_> = s.discs.iter().filter(|d| !d.visible_right).collect();
        assert_eq!(hidden.len(), 1);
        assert_eq!(Some(hidden[0].id), s.target_id);
        assert!(hidden[0].visible_left);
    }

    #[test]
    fn conjunction_trials_follow_color_rule() {
        let p = generate_plan(Experiment::Conjunction, 8);
        for i in 0..p.len() {
            let s = instantiate_trial(&p, i).unwrap();
            assert!(conjunction_invariant_holds(&s, &p.palette), "trial {i}");
            let (_, t) = p.trial(i).unwrap();
            assert_eq!(s.condition, t.condition);
        }
    }

    #[test]
    fn trial_index_out_of_range() {
        let p = generate_plan(Experiment::Conjunction, 8);
        assert!(matches!(
            instantiate_trial(&p, 144),
            Err(Error::TrialIndex { index: 144, len: 144 })
        ));
    }
}
