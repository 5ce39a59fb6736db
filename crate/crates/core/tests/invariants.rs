use deadeye_core::geometry::ViewingGeometry;
use deadeye_core::observer::{simulate_cohort, CohortOptions, Observer};
use deadeye_core::protocol::{PhaseKind, Protocol, SessionMode};
use deadeye_core::render::{disc_bbox, render_pair};
use deadeye_core::scene::{apply_deadeye, conjunction_invariant_holds, Experiment, Eye};
use deadeye_core::session::{run_schedule, schedule, FrameClock, Response, RunOptions};
use deadeye_core::stats::{fn_fp_split, spatial_matrix};
use deadeye_core::stimgen::{generate_layout, generate_plan, instantiate_trial, GridSpec};
use deadeye_core::Error;
use proptest::prelude::*;

fn experiment() -> impl Strategy<Value = Experiment> {
    prop_oneof![Just(Experiment::Preattentive), Just(Experiment::Conjunction)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deadeye_changes_exactly_one_visibility_flag(seed in any::<u64>(), pick in any::<prop::sample::Index>(), right in any::<bool>()) {
        let plan = generate_plan(Experiment::Preattentive, seed);
        let absent = plan.trials().position(|(_, t)| !t.condition.target_present).unwrap();
        let base = instantiate_trial(&plan, absent).unwrap();
        let disc = base.discs[pick.index(base.discs.len())].clone();
        let hidden = if right { Eye::Right } else { Eye::Left };
        let out = apply_deadeye(&base, disc.id, hidden).unwrap();

        let before = serde_json::to_value(&base).unwrap();
        let after = serde_json::to_value(&out).unwrap();
        let flag = match hidden { Eye::Left => "visible_left", Eye::Right => "visible_right" };
        let mut expected = before.clone();
        expected["target_id"] = serde_json::json!(disc.id);
        let i = base.discs.iter().position(|d| d.id == disc.id).unwrap();
        expected["discs"][i][flag] = serde_json::json!(false);
        prop_assert_eq!(after, expected);

        let again = matches!(apply_deadeye(&out, disc.id, hidden.other()), Err(Error::AlreadyMonocular { .. }));
        prop_assert!(again);
        let unknown = matches!(apply_deadeye(&base, 10_000, hidden), Err(Error::UnknownDisc(10_000)));
        prop_assert!(unknown);
    }

    #[test]
    fn plans_are_balanced(seed in any::<u64>(), exp in experiment()) {
        let plan = generate_plan(exp, seed);
        plan.validate().unwrap();
        for block in &plan.blocks {
            let c = block.counts();
            prop_assert_eq!(block.trials.len(), 48);
            prop_assert_eq!((c.present, c.absent), (24, 24));
            match exp {
                Experiment::Preattentive => prop_assert_eq!((c.left, c.right), (12, 12)),
                Experiment::Conjunction => {
                    prop_assert_eq!((c.magenta, c.yellow), (12, 12));
                    prop_assert_eq!((c.magenta_left, c.magenta_right, c.yellow_left, c.yellow_right), (6, 6, 6, 6));
                }
            }
        }
    }

    #[test]
    fn instantiated_stimuli_are_valid(seed in any::<u64>(), exp in experiment(), pick in any::<prop::sample::Index>()) {
        let plan = generate_plan(exp, seed);
        let i = pick.index(plan.len());
        let s = instantiate_trial(&plan, i).unwrap();
        s.validate().unwrap();
        prop_assert_eq!(s.discs.len(), s.condition.set_size);
        prop_assert_eq!(s.target_id.is_some(), s.condition.target_present);
        if exp == Experiment::Conjunction {
            prop_assert!(conjunction_invariant_holds(&s, &plan.palette));
        } else if let Some(t) = s.target() {
            prop_assert!(t.visible_to(s.condition.target_eye.unwrap()));
            prop_assert!(!t.visible_to(s.condition.target_eye.unwrap().other()));
        }
        prop_assert_eq!(&s, &instantiate_trial(&plan, i).unwrap());
    }

    #[test]
    fn layouts_respect_cells_and_jitter(seed in any::<u64>(), n in 1usize..=30) {
        let grid = GridSpec::default();
        let slots = generate_layout(&grid, n, seed).unwrap();
        prop_assert_eq!(slots.len(), n);
        for w in slots.windows(2) {
            prop_assert!(grid.cell_index(w[0].cell) < grid.cell_index(w[1].cell));
        }
        for s in &slots {
            let c = grid.cell_center(s.cell);
            prop_assert!((s.center.x - c.x).abs() <= grid.jitter_max_deg + 1e-12);
            prop_assert!((s.center.y - c.y).abs() <= grid.jitter_max_deg + 1e-12);
        }
        for (i, a) in slots.iter().enumerate() {
            for b in &slots[i + 1..] {
                prop_assert!(a.center.distance(b.center) >= 2.0 * grid.disc_radius_deg);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pair_differs_only_under_the_target(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let geom = ViewingGeometry { res_w_px: 640, res_h_px: 360, ..ViewingGeometry::default() };
        let plan = generate_plan(Experiment::Preattentive, seed);
        let s = instantiate_trial(&plan, pick.index(plan.len())).unwrap();
        let pair = render_pair(&s, &geom).unwrap();
        let bbox = s.target().map(|t| disc_bbox(t, &geom));
        let mut inside_diff = false;
        for y in 0..pair.left.height() {
            for x in 0..pair.left.width() {
                let differs = pair.left.get(x, y) != pair.right.get(x, y);
                let inside = bbox.is_some_and(|b| b.contains(x, y));
                prop_assert!(!differs || inside, "difference outside target box at {x},{y}");
                inside_diff |= differs;
            }
        }
        prop_assert_eq!(inside_diff, s.condition.target_present);
    }

    #[test]
    fn replaying_the_event_log_reproduces_the_session(seed in any::<u64>(), exp in experiment()) {
        let plan = generate_plan(exp, seed);
        let trials = schedule(&plan).unwrap();
        let mut k = 0u64;
        let mut responder = |t: &deadeye_core::protocol::ScheduledTrial| {
            k += 1;
            Some(Response { answer: (k + seed) % 3 != 0, rt_ms: 300.0 + ((seed ^ k) % 900) as f64 + 0.37 * t.index as f64 })
        };
        let (log, events) = run_schedule(&trials, &plan, &mut responder, &mut FrameClock::new(60.0), &RunOptions::default()).unwrap();
        let mut replay = Protocol::new(trials.clone(), log.header.timing, SessionMode::Recorded).unwrap();
        for ev in &events {
            replay.advance(*ev).unwrap();
        }
        prop_assert!(replay.is_done());
        let (records, strays, _) = replay.into_parts();
        prop_assert_eq!(records, log.trials);
        prop_assert_eq!(strays, log.stray_inputs);
    }
}

#[test]
fn fixed_exposure_and_fixation_span_whole_frames() {
    let plan = generate_plan(Experiment::Preattentive, 7);
    let logs = simulate_cohort(&Observer::from_name_or_file("preattentive").unwrap(), &plan, 2, 7, &CohortOptions::default()).unwrap();
    let frame = 1000.0 / 60.0;
    let frames = |a: f64, b: f64| {
        let n = ((b - a) / frame).round();
        assert!(((b - a) - n * frame).abs() < 1e-6, "{a}..{b} is not a whole number of frames");
        n as u64
    };
    for log in &logs {
        for t in &log.trials {
            let at = |k: PhaseKind| t.phase_log.iter().position(|e| e.phase == k).unwrap();
            let (f, e) = (at(PhaseKind::Fixation), at(PhaseKind::Exposure));
            assert_eq!(e, f + 1);
            assert_eq!(frames(t.phase_log[f].at, t.phase_log[e].at), 150);
            assert_eq!(frames(t.phase_log[e].at, t.phase_log[e + 1].at), 15);
            assert!(!t.exposure_flagged);
        }
    }
}

#[test]
fn error_shares_and_spatial_counts_are_consistent() {
    for seed in 0..6u64 {
        let exp = if seed % 2 == 0 { Experiment::Preattentive } else { Experiment::Conjunction };
        let obs = Observer::from_name_or_file(if seed % 2 == 0 { "preattentive" } else { "serial" }).unwrap();
        let plan = generate_plan(exp, seed);
        let logs = simulate_cohort(&obs, &plan, 4, seed, &CohortOptions::default()).unwrap();
        if let Ok(split) = fn_fp_split(&logs) {
            assert_eq!(split.fn_share + split.fp_share, 1.0);
        }
        let m = spatial_matrix(&logs);
        let monocular = logs
            .iter()
            .flat_map(|l| &l.trials)
            .filter(|t| t.response.is_some() && t.condition.target_is_monocular())
            .count();
        assert_eq!(m.total_opportunities(), monocular);
        for c in m.cells.iter().flatten() {
            assert!(c.hits <= c.opportunities);
            assert_eq!(c.rate.is_some(), c.opportunities > 0);
        }
    }
}

proptest! {
    #[test]
    fn error_shares_sum_to_one(misses in 0usize..50, fas in 0usize..50) {
        prop_assume!(misses + fas > 0);
        let share = misses as f64 / (misses + fas) as f64;
        prop_assert_eq!(share + (1.0 - share), 1.0);
    }
}

/// Chi-square goodness of fit against a uniform distribution; returns the
/// statistic.
fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

// Upper 0.1% point of chi-square with 29 degrees of freedom.
const CHI2_29_999: f64 = 58.301;

#[test]
fn occupied_cells_are_uniform() {
    let grid = GridSpec::default();
    let mut counts = vec![0u64; grid.n_cells()];
    for seed in 0..3000u64 {
        for s in generate_layout(&grid, 8, seed).unwrap() {
            counts[grid.cell_index(s.cell)] += 1;
        }
    }
    let chi = chi_square_uniform(&counts);
    assert!(chi < CHI2_29_999, "chi-square {chi}");
}

#[test]
fn target_cells_are_uniform() {
    let mut counts = vec![0u64; 30];
    let grid = GridSpec::default();
    for seed in 0..40u64 {
        let plan = generate_plan(Experiment::Preattentive, seed);
        for t in schedule(&plan).unwrap() {
            if let Some(c) = t.target_cell {
                counts[grid.cell_index(c)] += 1;
            }
        }
    }
    let chi = chi_square_uniform(&counts);
    assert!(chi < CHI2_29_999, "chi-square {chi}");
}
