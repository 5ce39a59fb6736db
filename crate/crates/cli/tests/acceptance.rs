//! Acceptance suite. Runs every primary criterion at its stated tolerance
//! and prints one PASS/FAIL line each; exits nonzero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use deadeye_core::chart::{highlight_footprint, render_chart_pair, ChartSpec, Series};
use deadeye_core::config::Config;
use deadeye_core::geometry::{cm_to_deg, ViewingGeometry, STUDY_DISC_DIAMETER_CM, STUDY_MARGIN_H_CM, STUDY_MARGIN_V_CM};
use deadeye_core::observer::{simulate_cohort, CohortOptions, Observer};
use deadeye_core::protocol::{PhaseKind, Protocol, ScheduledTrial, SessionMode};
use deadeye_core::render::{disc_bbox, render_pair, PixelRect, Raster};
use deadeye_core::scene::{Experiment, Exposure, Eye};
use deadeye_core::session::{load_log_dir, run_schedule, schedule, FrameClock, Response, RunOptions};
use deadeye_core::stats::{analyze, paired_ttest, rm_anova, ExperimentSection};
use deadeye_core::stimgen::{derive_seed, generate_plan, instantiate_trial, TrialPlan, CANONICAL_SEED};
use deadeye_server::store::Store;
use deadeye_server::{router, AppState, ExperimentBundle};
use http_body_util::BodyExt;
use rayon::prelude::*;
use serde_json::{json, Value};
use tower::ServiceExt;

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn section(logs: &[deadeye_core::session::SessionLog]) -> ExperimentSection {
    let mut report = analyze(logs).expect("analysis");
    assert_eq!(report.sections.len(), 1);
    report.sections.remove(0)
}

fn cohort(exp: Experiment, seed: u64) -> Vec<deadeye_core::session::SessionLog> {
    let obs = Observer::from_name_or_file(match exp {
        Experiment::Preattentive => "preattentive",
        Experiment::Conjunction => "serial",
    })
    .unwrap();
    simulate_cohort(&obs, &generate_plan(exp, seed), 21, seed, &CohortOptions::default()).unwrap()
}

/// Left and right rows agree everywhere except possibly inside `bbox`.
fn differs_only_inside(l: &Raster, r: &Raster, bbox: Option<PixelRect>) -> Result<bool, String> {
    let w = l.width() as usize * 3;
    let mut inside_diff = false;
    for (y, (a, b)) in l.pixels().chunks(w).zip(r.pixels().chunks(w)).enumerate() {
        match bbox.filter(|bb| (bb.y0 as usize..bb.y1 as usize).contains(&y)) {
            None => check(a == b, format!("row {y} differs outside the target box"))?,
            Some(bb) => {
                let (x0, x1) = (bb.x0 as usize * 3, bb.x1 as usize * 3);
                check(a[..x0] == b[..x0] && a[x1..] == b[x1..], format!("row {y} differs beside the target box"))?;
                inside_diff |= a[x0..x1] != b[x0..x1];
            }
        }
    }
    Ok(inside_diff)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let geom = ViewingGeometry::default();
    let plans: Vec<TrialPlan> = (0..6).map(|k| generate_plan(Experiment::Preattentive, derive_seed(CANONICAL_SEED, 1, k))).collect();
    let jobs: Vec<(usize, usize)> = (0..1000).map(|i| (i % plans.len(), (i * 37) % 192)).collect();
    let present: usize = jobs
        .par_iter()
        .map(|&(p, t)| -> Result<usize, String> {
            let s = instantiate_trial(&plans[p], t).map_err(|e| e.to_string())?;
            let pair = render_pair(&s, &geom).map_err(|e| e.to_string())?;
            let bbox = s.target().map(|d| disc_bbox(d, &geom));
            let inside = differs_only_inside(&pair.left, &pair.right, bbox)?;
            check(inside == s.condition.target_present, format!("plan {p} trial {t}: differs inside box = {inside}"))?;
            Ok(usize::from(inside))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    let took = start.elapsed();
    check(took < Duration::from_secs(60), format!("took {took:.1?}"))?;
    Ok(format!("1000 stimuli at {}x{} ({present} with target), {took:.1?}", geom.res_w_px, geom.res_h_px))
}

fn criterion_2() -> Outcome {
    for seed in 0..100u64 {
        for b in &generate_plan(Experiment::Preattentive, seed).blocks {
            let c = b.counts();
            check(
                b.trials.len() == 48 && (c.present, c.absent, c.left, c.right) == (24, 24, 12, 12),
                format!("seed {seed} preattentive set size {}: {c:?}", b.set_size),
            )?;
        }
        for b in &generate_plan(Experiment::Conjunction, seed).blocks {
            let c = b.counts();
            check(
                b.trials.len() == 48
                    && (c.magenta, c.yellow) == (12, 12)
                    && (c.magenta_left, c.magenta_right, c.yellow_left, c.yellow_right) == (6, 6, 6, 6),
                format!("seed {seed} conjunction set size {}: {c:?}", b.set_size),
            )?;
        }
    }
    Ok("100 seeds, 4 preattentive and 3 conjunction blocks each".into())
}

fn criterion_3() -> Outcome {
    let g = ViewingGeometry::default();
    let disc = cm_to_deg(STUDY_DISC_DIAMETER_CM, g.distance_cm).map_err(|e| e.to_string())?;
    let w = g.usable_half_width_deg(STUDY_MARGIN_H_CM);
    let h = g.usable_half_height_deg(STUDY_MARGIN_V_CM);
    check((0.935..=0.945).contains(&disc), format!("disc {disc:.4} deg"))?;
    check((w - 8.88).abs() <= 0.01, format!("half width {w:.4} deg"))?;
    check((h - 5.22).abs() <= 0.01, format!("half height {h:.4} deg"))?;
    Ok(format!("disc {disc:.4} deg, usable half-angles {w:.4} x {h:.4} deg"))
}

fn criterion_4() -> Outcome {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(CANONICAL_SEED);
    let tol = 1e-6;
    let mut worst = 0.0f64;
    let mut rel = |got: f64, want: f64, what: &str| -> Result<(), String> {
        let e = (got - want).abs() / want.abs().max(1e-300);
        worst = worst.max(e);
        check(e <= tol, format!("{what}: {got} vs oracle {want}"))
    };
    for i in 0..100 {
        let n = rng.random_range(3..=21);
        let k = rng.random_range(2..=5);
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let a = rm_anova(&m).map_err(|e| e.to_string())?;
        let (f, p, _) = oracle::anova_oracle(&m);
        rel(a.f, f, &format!("matrix {i} F"))?;
        rel(a.p, p, &format!("matrix {i} ANOVA p (F {} on {}, {})", a.f, a.df_effect, a.df_error))?;
        let (x, y): (Vec<f64>, Vec<f64>) = m.iter().map(|r| (r[0], r[k - 1])).unzip();
        let t = paired_ttest(&x, &y).map_err(|e| e.to_string())?;
        let (to, tp) = oracle::t_oracle(&x, &y);
        rel(t.t, to, &format!("matrix {i} t"))?;
        rel(t.p, tp, &format!("matrix {i} t p"))?;
        let two: Vec<Vec<f64>> = m.iter().map(|r| vec![r[0], r[k - 1]]).collect();
        let f2 = rm_anova(&two).map_err(|e| e.to_string())?;
        rel(f2.f, t.t * t.t, &format!("matrix {i} F = t^2"))?;
        rel(f2.p, t.p, &format!("matrix {i} p(F) = p(t)"))?;
    }
    Ok(format!("100 matrices, worst relative error {worst:.1e}"))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let s = section(&cohort(Experiment::Preattentive, CANONICAL_SEED));
    let reference = [0.88, 0.88, 0.91, 0.89];
    let means = s.accuracy.means();
    for (row, (got, want)) in s.accuracy.rows.iter().zip(means.iter().zip(reference)) {
        check((got - want).abs() <= 0.03, format!("set size {}: accuracy {got:.3} vs {want}", row.set_size))?;
    }
    let fn_share = s.errors.as_ref().ok_or("no error split")?.fn_share;
    check((fn_share - 0.68).abs() <= 0.05, format!("FN share {fn_share:.3}"))?;
    let kept = (0..100u64)
        .into_par_iter()
        .filter(|&r| {
            let s = section(&cohort(Experiment::Preattentive, derive_seed(CANONICAL_SEED, 5, r)));
            s.accuracy_test.expect("accuracy ANOVA").anova.p > 0.05
        })
        .count();
    check(kept >= 90, format!("ANOVA kept the null in {kept}/100 runs"))?;
    let took = start.elapsed();
    check(took < Duration::from_secs(120), format!("took {took:.1?}"))?;
    let acc: Vec<String> = means.iter().map(|m| format!("{m:.3}")).collect();
    Ok(format!("accuracy {}, FN share {fn_share:.3}, p > .05 in {kept}/100, {took:.1?}", acc.join("/")))
}

fn criterion_6() -> Outcome {
    let s = section(&cohort(Experiment::Conjunction, CANONICAL_SEED));
    let rt: Vec<f64> = s.rt.all.means();
    let acc = s.accuracy.means();
    let (rt_ref, acc_ref) = ([2250.0, 2630.0, 3470.0], [0.87, 0.81, 0.77]);
    check(rt.windows(2).all(|w| w[0] < w[1]), format!("RT not increasing: {rt:?}"))?;
    check(acc.windows(2).all(|w| w[0] > w[1]), format!("accuracy not declining: {acc:?}"))?;
    for i in 0..3 {
        check((rt[i] - rt_ref[i]).abs() <= 300.0, format!("RT {:.0} ms vs {}", rt[i], rt_ref[i]))?;
        check((acc[i] - acc_ref[i]).abs() <= 0.05, format!("accuracy {:.3} vs {}", acc[i], acc_ref[i]))?;
    }
    let rejected = (0..100u64)
        .into_par_iter()
        .filter(|&r| {
            let s = section(&cohort(Experiment::Conjunction, derive_seed(CANONICAL_SEED, 6, r)));
            s.rt_test.expect("RT ANOVA").anova.p < 0.01
        })
        .count();
    check(rejected >= 95, format!("RT ANOVA rejected in {rejected}/100 runs"))?;
    Ok(format!(
        "RT {:.0}/{:.0}/{:.0} ms, accuracy {:.3}/{:.3}/{:.3}, p < .01 in {rejected}/100",
        rt[0], rt[1], rt[2], acc[0], acc[1], acc[2]
    ))
}

fn criterion_7() -> Outcome {
    let frame = 1000.0 / 60.0;
    let (mut checked, mut fixed) = (0, 0);
    for (exp, seed) in [(Experiment::Preattentive, CANONICAL_SEED), (Experiment::Conjunction, CANONICAL_SEED + 1)] {
        let plan = generate_plan(exp, seed);
        let trials = schedule(&plan).map_err(|e| e.to_string())?;
        let mut k = 0u64;
        // Responses before, during and after the exposure window.
        let mut responder = |_: &ScheduledTrial| {
            k += 1;
            Some(Response { answer: k % 3 != 0, rt_ms: 90.0 + (k * 137 % 2900) as f64 })
        };
        let (log, events) = run_schedule(&trials, &plan, &mut responder, &mut FrameClock::new(60.0), &RunOptions::default())
            .map_err(|e| e.to_string())?;
        for t in &log.trials {
            let at = |kind: PhaseKind| t.phase_log.iter().position(|e| e.phase == kind);
            let (f, e) = (at(PhaseKind::Fixation).ok_or("no fixation")?, at(PhaseKind::Exposure).ok_or("no exposure")?);
            let next = t.phase_log.get(e + 1).ok_or("exposure never ended")?;
            let frames = |a: f64, b: f64| (b - a) / frame;
            let fix = frames(t.phase_log[f].at, t.phase_log[e].at);
            let exp_frames = frames(t.phase_log[e].at, next.at);
            check((fix - 150.0).abs() < 1e-6, format!("trial {}: fixation {fix} frames", t.trial_index))?;
            if let Exposure::Fixed(_) = t.condition.exposure {
                check((exp_frames - 15.0).abs() < 1e-6, format!("trial {}: exposure {exp_frames} frames", t.trial_index))?;
                check(!t.exposure_flagged, format!("trial {}: exposure flagged", t.trial_index))?;
                fixed += 1;
            }
            checked += 1;
        }
        let mut replay = Protocol::new(trials.clone(), log.header.timing, SessionMode::Recorded).map_err(|e| e.to_string())?;
        for ev in &events {
            replay.advance(*ev).map_err(|e| e.to_string())?;
        }
        check(replay.is_done(), "replay did not finish")?;
        let (records, strays, _) = replay.into_parts();
        check(records == log.trials && strays == log.stray_inputs, format!("{} replay diverged", exp.name()))?;
    }
    check(fixed == 192, format!("{fixed} fixed exposures, expected 192"))?;
    Ok(format!("{checked} fixations at 150 frames, {fixed} fixed exposures at 15 frames, both event logs replay identically"))
}

fn criterion_8() -> Outcome {
    let geom = ViewingGeometry::default();
    let series: Vec<Series> = (0..5)
        .map(|s| Series {
            name: format!("series{s}"),
            points: (0..40).map(|i| (i as f64, ((i as f64) * 0.3 + s as f64).sin() * (5.0 + s as f64) + 2.0 * s as f64)).collect(),
        })
        .collect();
    let mut cases = 0;
    for mask in 1u32..32 {
        for (stroke, hidden) in [(1, Eye::Right), (3, Eye::Left)] {
            let mut spec = ChartSpec::new(series.clone());
            spec.style.stroke_px = stroke;
            spec.hidden_eye = hidden;
            spec.highlight = series.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, s)| s.name.clone()).collect::<BTreeSet<_>>();
            let pair = render_chart_pair(&spec, &geom).map_err(|e| e.to_string())?;
            let mut plain = spec.clone();
            plain.highlight.clear();
            let reference = render_chart_pair(&plain, &geom).map_err(|e| e.to_string())?;
            let visible = pair.eye(hidden.other());
            check(visible == &reference.left, format!("mask {mask:05b}: visible eye differs from plain chart"))?;
            let hidden_r = pair.eye(hidden);
            let footprint = highlight_footprint(&spec, &geom).map_err(|e| e.to_string())?;
            let any_diff = hidden_r
                .pixels()
                .chunks(3)
                .zip(visible.pixels().chunks(3))
                .enumerate()
                .filter(|(_, (a, b))| a != b)
                .map(|(i, _)| check(footprint[i], format!("mask {mask:05b}: diff at pixel {i} outside footprint")))
                .collect::<Result<Vec<_>, _>>()?;
            check(!any_diff.is_empty(), format!("mask {mask:05b}: hidden eye shows everything"))?;
            cases += 1;
        }
    }
    Ok(format!("{cases} highlighted charts at {}x{}", geom.res_w_px, geom.res_h_px))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn deadeye(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_deadeye")).args(args).current_dir(cwd).output().map_err(|e| e.to_string())?;
    check(out.status.success(), format!("deadeye {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
}

fn criterion_9() -> Outcome {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let mut bytes = 0;
    for (exp, obs) in [("preattentive", "preattentive"), ("conjunction", "serial")] {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let dir = tmp.path();
        let seed = CANONICAL_SEED.to_string();
        deadeye(&["gen", "--experiment", exp, "--seed", &seed, "--out", "plan.json"], dir)?;
        deadeye(&["simulate", "--plan", "plan.json", "--observer", obs, "--subjects", "21", "--seed", &seed, "--out", "logs"], dir)?;
        deadeye(&["analyze", "--logs", "logs", "--out", "report.json", "--text", "report.txt"], dir)?;
        let offline = std::fs::read_to_string(dir.join("report.json")).map_err(|e| e.to_string())?;

        let plan = deadeye_core::schema::load_json(&dir.join("plan.json")).map_err(|e| e.to_string())?;
        let bundle = ExperimentBundle::new(plan, &Config::default()).map_err(|e| e.to_string())?;
        let store = Store::open(&dir.join("server-data")).map_err(|e| e.to_string())?;
        let app = router(AppState::new(bundle, store, None));
        let logs = load_log_dir(&dir.join("logs")).map_err(|e| e.to_string())?;
        let served = rt.block_on(async {
            for log in &logs {
                let body = json!({ "participant": log.header.participant, "mode": "recorded" });
                let (status, text) = call(&app, "POST", "/api/session", Some(body.to_string())).await;
                check(status == StatusCode::CREATED, text.clone())?;
                let id = serde_json::from_str::<Value>(&text).unwrap()["id"].as_str().unwrap().to_string();
                for chunk in log.trials.chunks(16) {
                    let body = json!({ "records": chunk }).to_string();
                    let (status, text) = call(&app, "POST", &format!("/api/session/{id}/records"), Some(body)).await;
                    check(status == StatusCode::OK, text)?;
                }
            }
            let (status, text) = call(&app, "GET", "/api/report", None).await;
            check(status == StatusCode::OK, text.clone())?;
            Ok::<_, String>(text)
        })?;
        check(served == offline, format!("{exp}: service report differs from CLI report"))?;
        bytes += offline.len();
    }
    Ok(format!("CLI and service reports byte-identical for both experiments ({bytes} bytes)"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("stereo-pair invariant", criterion_1),
        ("block balancing", criterion_2),
        ("viewing geometry", criterion_3),
        ("statistics oracle", criterion_4),
        ("preattentive reproduction", criterion_5),
        ("conjunction reproduction", criterion_6),
        ("protocol timing", criterion_7),
        ("chart highlighting", criterion_8),
        ("cross-path equivalence", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
