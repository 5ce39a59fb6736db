//! Simulated observers.
//!
//! [`PreattentiveObserver`] answers with fixed hit and correct-rejection
//! rates regardless of how many discs are shown. [`SerialObserver`] inspects
//! discs one at a time in random order and stops at the first recognized
//! target, so its response time grows with set size.
//!
//! Default parameters are calibrated against reference group means (accuracy
//! 0.89 with a 0.68 miss share for the parallel observer; accuracies
//! 0.87/0.81/0.77 and mean response times 2.25/2.63/3.47 s at 4/8/16 discs for
//! the serial observer). They are a calibration, not a fit to raw data.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{ScheduledTrial, TimingConfig};
use crate::scene::{Eye, TrialCondition};
use crate::session::{run_schedule, schedule, FrameClock, Participant, Responder, Response, RunOptions, SessionLog};
use crate::stimgen::{derive_seed, TrialPlan};

const STREAM_TRIAL: u64 = 11;
const STREAM_SUBJECT: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreattentiveObserver {
    pub hit_rate: f64,
    pub correct_rejection_rate: f64,
    /// Log-normal response latency; cosmetic under fixed exposure.
    pub rt_mean_ms: f64,
    pub rt_sd_ms: f64,
    /// Hit-rate loss per degree of target eccentricity (0 disables).
    pub eccentricity_falloff_per_deg: f64,
}

impl Default for PreattentiveObserver {
    fn default() -> Self {
        Self {
            hit_rate: 0.85,
            correct_rejection_rate: 0.93,
            rt_mean_ms: 650.0,
            rt_sd_ms: 180.0,
            eccentricity_falloff_per_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SerialObserver {
    pub base_ms: f64,
    pub per_item_ms: f64,
    /// Probability of recognizing the target when it is inspected.
    pub item_detect_prob: f64,
    /// Probability of giving up ("no") after each unrecognized item.
    pub lapse_rate: f64,
    pub motor_sd_ms: f64,
}

impl Default for SerialObserver {
    fn default() -> Self {
        Self {
            base_ms: 1545.0,
            per_item_ms: 210.0,
            item_detect_prob: 0.79,
            lapse_rate: 0.057,
            motor_sd_ms: 150.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observer {
    Preattentive(PreattentiveObserver),
    Serial(SerialObserver),
    /// Always answers "yes" after `rt_ms`.
    AlwaysYes { rt_ms: f64 },
    /// Always answers correctly after `rt_ms`.
    Oracle { rt_ms: f64 },
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidObserver(format!("{name} = {p} is not a probability")))
    }
}

impl Observer {
    pub fn validate(&self) -> Result<()> {
        match self {
            Observer::Preattentive(o) => {
                check_prob("hit_rate", o.hit_rate)?;
                check_prob("correct_rejection_rate", o.correct_rejection_rate)?;
                if !(o.rt_mean_ms > 0.0) || !(o.rt_sd_ms >= 0.0) || !(o.eccentricity_falloff_per_deg >= 0.0) {
                    return Err(Error::InvalidObserver("latency parameters must be positive".into()));
                }
            }
            Observer::Serial(o) => {
                check_prob("item_detect_prob", o.item_detect_prob)?;
                check_prob("lapse_rate", o.lapse_rate)?;
                if !(o.base_ms > 0.0) || !(o.per_item_ms > 0.0) || !(o.motor_sd_ms >= 0.0) {
                    return Err(Error::InvalidObserver("times must be positive".into()));
                }
            }
            Observer::AlwaysYes { rt_ms } | Observer::Oracle { rt_ms } => {
                if !(*rt_ms >= 0.0) {
                    return Err(Error::InvalidObserver("rt_ms must be non-negative".into()));
                }
            }
        }
        Ok(())
    }

    /// Built-in names (`preattentive`, `serial`, `oracle`, `always-yes`) or a
    /// TOML/JSON observer file.
    pub fn from_name_or_file(spec: &str) -> Result<Observer> {
        let builtin = match spec {
            "preattentive" => Some(Observer::Preattentive(PreattentiveObserver::default())),
            "serial" => Some(Observer::Serial(SerialObserver::default())),
            "oracle" => Some(Observer::Oracle { rt_ms: 500.0 }),
            "always-yes" | "always_yes" => Some(Observer::AlwaysYes { rt_ms: 500.0 }),
            _ => None,
        };
        if let Some(o) = builtin {
            return Ok(o);
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let obs: Observer = if path.extension().is_some_and(|e| e == "json") {
            crate::schema::parse_json(&text, spec)?
        } else {
            crate::schema::parse_toml(&text, spec)?
        };
        obs.validate()?;
        Ok(obs)
    }

    /// One simulated answer. `target_eccentricity_deg` feeds the optional
    /// eccentricity falloff.
    pub fn respond_with<R: Rng + ?Sized>(
        &self,
        condition: &TrialCondition,
        target_eccentricity_deg: Option<f64>,
        rng: &mut R,
    ) -> Response {
        match self {
            Observer::Preattentive(o) => o.respond(condition, target_eccentricity_deg, rng),
            Observer::Serial(o) => o.respond(condition, rng),
            Observer::AlwaysYes { rt_ms } => Response {
                answer: true,
                rt_ms: *rt_ms,
            },
            Observer::Oracle { rt_ms } => Response {
                answer: condition.target_present,
                rt_ms: *rt_ms,
            },
        }
    }

    pub fn respond(&self, condition: &TrialCondition, seed: u64) -> Response {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.respond_with(condition, None, &mut rng)
    }

    /// Copy with subject-level parameter noise.
    pub fn jittered<R: Rng + ?Sized>(&self, jitter: &ParamJitter, rng: &mut R) -> Observer {
        let mut prob = |p: f64| {
            if jitter.probability_sd > 0.0 {
                let n = Normal::new(0.0, jitter.probability_sd).expect("finite sd");
                (p + n.sample(rng)).clamp(0.0, 1.0)
            } else {
                p
            }
        };
        match *self {
            Observer::Preattentive(o) => Observer::Preattentive(PreattentiveObserver {
                hit_rate: prob(o.hit_rate),
                correct_rejection_rate: prob(o.correct_rejection_rate),
                ..o
            }),
            Observer::Serial(o) => {
                let detect = prob(o.item_detect_prob);
                let base = if jitter.time_sd_ms > 0.0 {
                    let n = Normal::new(0.0, jitter.time_sd_ms).expect("finite sd");
                    (o.base_ms + n.sample(rng)).max(o.base_ms * 0.25)
                } else {
                    o.base_ms
                };
                Observer::Serial(SerialObserver {
                    base_ms: base,
                    item_detect_prob: detect,
                    ..o
                })
            }
            other => other,
        }
    }
}

impl PreattentiveObserver {
    pub fn respond<R: Rng + ?Sized>(
        &self,
        condition: &TrialCondition,
        target_eccentricity_deg: Option<f64>,
        rng: &mut R,
    ) -> Response {
        let answer = if condition.target_present {
            let hit = (self.hit_rate
                - self.eccentricity_falloff_per_deg * target_eccentricity_deg.unwrap_or(0.0))
            .clamp(0.0, 1.0);
            rng.random_bool(hit)
        } else {
            !rng.random_bool(self.correct_rejection_rate)
        };
        let rt_ms = if self.rt_sd_ms > 0.0 {
            let (m, s) = (self.rt_mean_ms, self.rt_sd_ms);
            let sigma2 = (1.0 + (s * s) / (m * m)).ln();
            LogNormal::new(m.ln() - sigma2 / 2.0, sigma2.sqrt())
                .expect("valid log-normal")
                .sample(rng)
        } else {
            self.rt_mean_ms
        };
        Response { answer, rt_ms }
    }
}

/// Outcome of one serial scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanOutcome {
    pub answer: bool,
    pub inspected: usize,
}

impl SerialObserver {
    /// Self-terminating scan of `n` items in random order.
    pub fn scan<R: Rng + ?Sized>(&self, n: usize, target_present: bool, rng: &mut R) -> ScanOutcome {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        // item 0 plays the target
        for (i, &item) in order.iter().enumerate() {
            let inspected = i + 1;
            if target_present && item == 0 && rng.random_bool(self.item_detect_prob) {
                return ScanOutcome {
                    answer: true,
                    inspected,
                };
            }
            if inspected < n && self.lapse_rate > 0.0 && rng.random_bool(self.lapse_rate) {
                return ScanOutcome {
                    answer: false,
                    inspected,
                };
            }
        }
        ScanOutcome {
            answer: false,
            inspected: n,
        }
    }

    pub fn respond<R: Rng + ?Sized>(&self, condition: &TrialCondition, rng: &mut R) -> Response {
        let scan = self.scan(condition.set_size, condition.target_present, rng);
        let motor = if self.motor_sd_ms > 0.0 {
            Normal::new(0.0, self.motor_sd_ms).expect("finite sd").sample(rng)
        } else {
            0.0
        };
        Response {
            answer: scan.answer,
            rt_ms: (self.base_ms + scan.inspected as f64 * self.per_item_ms + motor).max(0.0),
        }
    }
}

/// Adapts an [`Observer`] to the session driver with per-trial seeds.
#[derive(Debug, Clone)]
pub struct ObserverResponder {
    pub observer: Observer,
    pub seed: u64,
}

impl Responder for ObserverResponder {
    fn respond(&mut self, trial: &ScheduledTrial) -> Option<Response> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, STREAM_TRIAL, trial.index as u64));
        Some(
            self.observer
                .respond_with(&trial.condition, trial.target_eccentricity_deg, &mut rng),
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamJitter {
    /// SD added to each probability parameter (clamped to [0, 1]).
    pub probability_sd: f64,
    /// SD added to the serial observer's base time.
    pub time_sd_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortOptions {
    pub jitter: ParamJitter,
    pub timing: TimingConfig,
    /// Share of simulated participants with a right dominant eye.
    pub right_dominant_share: f64,
}

impl Default for CohortOptions {
    fn default() -> Self {
        Self {
            jitter: ParamJitter::default(),
            timing: TimingConfig::default(),
            right_dominant_share: 16.0 / 21.0,
        }
    }
}

/// Simulate `n_subjects` independent recorded sessions over the same plan.
pub fn simulate_cohort(
    observer: &Observer,
    plan: &TrialPlan,
    n_subjects: usize,
    seed: u64,
    options: &CohortOptions,
) -> Result<Vec<SessionLog>> {
    if n_subjects < 2 {
        return Err(Error::InsufficientData(format!(
            "a cohort needs at least 2 subjects, got {n_subjects}"
        )));
    }
    observer.validate()?;
    let trials = schedule(plan)?;
    (0..n_subjects)
        .into_par_iter()
        .map(|s| {
            let subject_seed = derive_seed(seed, STREAM_SUBJECT, s as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(subject_seed);
            let participant = Participant {
                id: format!("sim-{:03}", s + 1),
                age: Some(rng.random_range(18..=42)),
                dominant_eye: Some(if rng.random_bool(options.right_dominant_share) {
                    Eye::Right
                } else {
                    Eye::Left
                }),
                vision_normal: true,
                demographics: Default::default(),
            };
            let mut responder = ObserverResponder {
                observer: observer.jittered(&options.jitter, &mut rng),
                seed: rng.random(),
            };
            let run = RunOptions {
                participant,
                timing: options.timing,
            };
            let mut clock = FrameClock::new(options.timing.refresh_hz);
            run_schedule(&trials, plan, &mut responder, &mut clock, &run).map(|(log, _)| log)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Experiment, Exposure};

    fn cond(n: usize, present: bool) -> TrialCondition {
        TrialCondition {
            set_size: n,
            target_present: present,
            target_eye: present.then_some(Eye::Left),
            experiment: Experiment::Preattentive,
            conjunction_target_kind: None,
            exposure: Exposure::UntilResponse,
        }
    }

    #[test]
    fn deterministic_absent_scan() {
        let o = Observer::Serial(SerialObserver {
            base_ms: 400.0,
            per_item_ms: 50.0,
            item_detect_prob: 1.0,
            lapse_rate: 0.0,
            motor_sd_ms: 0.0,
        });
        for n in [4, 8, 16] {
            for seed in 0..20 {
                let r = o.respond(&cond(n, false), seed);
                assert!(!r.answer);
                assert_eq!(r.rt_ms, 400.0 + n as f64 * 50.0);
            }
        }
    }

    #[test]
    fn rt_never_below_base_without_motor_noise() {
        let o = SerialObserver {
            motor_sd_ms: 0.0,
            ..SerialObserver::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..2000 {
            let r = o.respond(&cond(8, i % 2 == 0), &mut rng);
            assert!(r.rt_ms >= o.base_ms);
        }
    }

    #[test]
    fn invalid_probability_rejected() {
        let o = Observer::Preattentive(PreattentiveObserver {
            hit_rate: 1.2,
            ..Default::default()
        });
        assert!(o.validate().is_err());
    }

    #[test]
    fn cohort_needs_two_subjects() {
        let plan = crate::stimgen::generate_plan(Experiment::Preattentive, 1);
        let o = Observer::Preattentive(PreattentiveObserver::default());
        assert!(simulate_cohort(&o, &plan, 0, 1, &CohortOptions::default()).is_err());
        assert!(simulate_cohort(&o, &plan, 1, 1, &CohortOptions::default()).is_err());
    }

    #[test]
    fn cohort_is_reproducible() {
        let plan = crate::stimgen::generate_plan(Experiment::Conjunction, 1);
        let o = Observer::Serial(SerialObserver::default());
        let a = simulate_cohort(&o, &plan, 3, 77, &CohortOptions::default()).unwrap();
        let b = simulate_cohort(&o, &plan, 3, 77, &CohortOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].trials, a[1].trials);
    }

    #[test]
    fn observer_file_parses() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("obs.toml");
        std::fs::write(&p, "kind = \"serial\"\nbase_ms = 1830.0\nper_item_ms = 130.0\n").unwrap();
        let o = Observer::from_name_or_file(p.to_str().unwrap()).unwrap();
        match o {
            Observer::Serial(s) => {
                assert_eq!(s.base_ms, 1830.0);
                assert_eq!(s.lapse_rate, SerialObserver::default().lapse_rate);
            }
            _ => panic!(),
        }
    }
}
