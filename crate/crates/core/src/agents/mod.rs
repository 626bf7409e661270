//! Scripted Worker and Manager behavior for headless sessions and
//! estimator recovery studies.
//!
//! Managers value a worker with signal `(x, y)` in job `j` at
//!
//! ```text
//! a_i + b1 x + b2 y + b3 x y + (trait interactions) + N(0, noise_sd)
//! ```
//!
//! rounded and clamped to `[0, 100]`. Values are certainty equivalents in
//! points; risk curvature is not modeled.

mod sim;

pub use sim::{
    lab_worker_policies, session_seed, simulate_study, simulate_worker_session, LatentRecord, ManagerBot, StudyOutput,
    WorkerBot, WorkerSessionOutput, BOT_STEP_MS,
};

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{JobId, Questionnaire, WorkerId, WorkerProfile, MAX_VALUE, PROBLEMS_PER_TASK};

/// Job-specific slopes of a manager's valuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Coefficients {
    pub sent: f64,
    pub score: f64,
    pub sent_x_score: f64,
    pub sent_x_stem: f64,
    pub score_x_stem: f64,
    pub sent_x_male: f64,
    pub score_x_male: f64,
    /// Interactions with the manager's own Part 1 and Part 2 results.
    pub sent_x_high_sent: f64,
    pub score_x_high_sent: f64,
    pub sent_x_high_score: f64,
    pub score_x_high_score: f64,
    pub sent_x_sent_gt_score: f64,
    pub score_x_sent_gt_score: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Self::linear(0.0, 0.0, 0.0)
    }
}

impl Coefficients {
    pub const fn linear(sent: f64, score: f64, sent_x_score: f64) -> Self {
        Self {
            sent,
            score,
            sent_x_score,
            sent_x_stem: 0.0,
            score_x_stem: 0.0,
            sent_x_male: 0.0,
            score_x_male: 0.0,
            sent_x_high_sent: 0.0,
            score_x_high_sent: 0.0,
            sent_x_high_score: 0.0,
            score_x_high_score: 0.0,
            sent_x_sent_gt_score: 0.0,
            score_x_sent_gt_score: 0.0,
        }
    }

    /// Pooled estimates for job C without controls.
    pub const fn conflict_reference() -> Self {
        Self::linear(1.740, 4.644, 0.101)
    }

    /// Pooled estimates for job NC without controls.
    pub const fn no_conflict_reference() -> Self {
        Self::linear(1.409, 5.762, 0.046)
    }
}

/// The manager's own characteristics that enter interaction terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnTraits {
    pub sent: u8,
    pub score: u8,
    pub stem: bool,
    pub male: bool,
    pub age: u8,
    pub risk: u8,
}

impl Default for OwnTraits {
    fn default() -> Self {
        Self {
            sent: 5,
            score: 7,
            stem: false,
            male: false,
            age: 21,
            risk: 5,
        }
    }
}

impl OwnTraits {
    /// Sent 6 or more tokens.
    pub fn high_sent(&self) -> bool {
        self.sent >= 6
    }

    /// Solved 8 or more problems.
    pub fn high_score(&self) -> bool {
        self.score >= 8
    }

    pub fn sent_gt_score(&self) -> bool {
        self.sent > self.score
    }

    pub fn questionnaire(&self) -> Questionnaire {
        Questionnaire {
            stem: self.stem,
            male: self.male,
            age: self.age,
            risk: self.risk,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManagerPolicy {
    pub intercept: f64,
    pub conflict: Coefficients,
    pub no_conflict: Coefficients,
    pub noise_sd: f64,
    pub own: OwnTraits,
    /// Inattentive type: reports this value for every worker in both jobs.
    #[serde(default)]
    pub constant_value: Option<u32>,
}

impl Default for ManagerPolicy {
    fn default() -> Self {
        Self {
            intercept: 0.0,
            conflict: Coefficients::conflict_reference(),
            no_conflict: Coefficients::no_conflict_reference(),
            noise_sd: 10.0,
            own: OwnTraits::default(),
            constant_value: None,
        }
    }
}

impl ManagerPolicy {
    pub fn constant(value: u32, own: OwnTraits) -> Self {
        Self {
            constant_value: Some(value.min(MAX_VALUE)),
            own,
            ..Self::default()
        }
    }

    pub fn coefficients(&self, job: JobId) -> &Coefficients {
        match job {
            JobId::C => &self.conflict,
            JobId::NC => &self.no_conflict,
        }
    }

    /// The noise-free part of the valuation.
    pub fn mean_value(&self, worker: &WorkerProfile, job: JobId) -> f64 {
        let c = self.coefficients(job);
        let (x, y) = (f64::from(worker.sent), f64::from(worker.score));
        let d = |b: bool| if b { 1.0 } else { 0.0 };
        let o = &self.own;
        self.intercept
            + c.sent * x
            + c.score * y
            + c.sent_x_score * x * y
            + d(o.stem) * (c.sent_x_stem * x + c.score_x_stem * y)
            + d(o.male) * (c.sent_x_male * x + c.score_x_male * y)
            + d(o.high_sent()) * (c.sent_x_high_sent * x + c.score_x_high_sent * y)
            + d(o.high_score()) * (c.sent_x_high_score * x + c.score_x_high_score * y)
            + d(o.sent_gt_score()) * (c.sent_x_sent_gt_score * x + c.score_x_sent_gt_score * y)
    }
}

/// A manager's latent valuation and the integer value they report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub latent: f64,
    pub value: u32,
}

pub fn clamp_value(latent: f64) -> u32 {
    libm::round(latent).clamp(0.0, f64::from(MAX_VALUE)) as u32
}

pub fn manager_report<R: Rng + ?Sized>(
    policy: &ManagerPolicy,
    worker: &WorkerProfile,
    job: JobId,
    rng: &mut R,
) -> Report {
    if let Some(v) = policy.constant_value {
        return Report {
            latent: f64::from(v),
            value: v,
        };
    }
    let mut latent = policy.mean_value(worker, job);
    if policy.noise_sd > 0.0 {
        latent += Normal::new(0.0, policy.noise_sd)
            .expect("noise_sd is finite and positive")
            .sample(rng);
    }
    Report {
        latent,
        value: clamp_value(latent),
    }
}

/// Orders workers by descending value; equal values are shuffled.
pub fn manager_ranking<R: Rng + ?Sized>(values: &[(WorkerId, u32)], rng: &mut R) -> Vec<WorkerId> {
    let mut order: Vec<(WorkerId, u32)> = values.to_vec();
    order.shuffle(rng);
    // stable sort keeps the shuffled order within ties
    order.sort_by_key(|o| core::cmp::Reverse(o.1));
    order.into_iter().map(|(w, _)| w).collect()
}

/// How a worker chooses attempts in the job where skipping pays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum AttemptRule {
    /// `round(10 * weight * sent / 10)`, capped at 10.
    Prosocial { weight: f64 },
    Fixed { attempted: u8 },
}

impl Default for AttemptRule {
    fn default() -> Self {
        AttemptRule::Prosocial { weight: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerPolicy {
    pub sent: u8,
    pub score: u8,
    #[serde(default)]
    pub attempt_rule: AttemptRule,
    #[serde(default)]
    pub questionnaire: Option<Questionnaire>,
}

impl WorkerPolicy {
    pub fn new(sent: u8, score: u8) -> Self {
        Self {
            sent,
            score,
            attempt_rule: AttemptRule::default(),
            questionnaire: None,
        }
    }

    /// Per-problem accuracy.
    pub fn accuracy(&self) -> f64 {
        (f64::from(self.score) / f64::from(PROBLEMS_PER_TASK)).clamp(0.0, 1.0)
    }

    pub fn attempts(&self, job: JobId) -> u8 {
        match job {
            JobId::NC => PROBLEMS_PER_TASK,
            JobId::C => match self.attempt_rule {
                AttemptRule::Prosocial { weight } => {
                    let share = (weight * f64::from(self.sent) / 10.0).clamp(0.0, 1.0);
                    libm::round(f64::from(PROBLEMS_PER_TASK) * share) as u8
                }
                AttemptRule::Fixed { attempted } => attempted.min(PROBLEMS_PER_TASK),
            },
        }
    }
}

/// Which attempted problems come out correct, one Bernoulli draw each.
pub fn worker_answers<R: Rng + ?Sized>(policy: &WorkerPolicy, job: JobId, rng: &mut R) -> Vec<bool> {
    let p = policy.accuracy();
    (0..policy.attempts(job)).map(|_| rng.random_bool(p)).collect()
}

/// `(attempted, correct)` for one job.
pub fn worker_job_choice<R: Rng + ?Sized>(policy: &WorkerPolicy, job: JobId, rng: &mut R) -> (u8, u8) {
    let answers = worker_answers(policy, job, rng);
    (answers.len() as u8, answers.iter().filter(|c| **c).count() as u8)
}

/// Draws a heterogeneous cohort: intercepts from `N(intercept_mean,
/// intercept_sd)` and uniformly drawn own traits.
pub fn draw_manager_policies<R: Rng + ?Sized>(
    n: usize,
    template: &ManagerPolicy,
    intercept_mean: f64,
    intercept_sd: f64,
    rng: &mut R,
) -> Vec<ManagerPolicy> {
    let normal = Normal::new(intercept_mean, intercept_sd.max(0.0)).expect("finite intercept parameters");
    (0..n)
        .map(|_| ManagerPolicy {
            intercept: normal.sample(rng),
            own: OwnTraits {
                sent: rng.random_range(0..=10),
                score: rng.random_range(0..=10),
                stem: rng.random_bool(0.5),
                male: rng.random_bool(0.5),
                age: rng.random_range(18..=30),
                risk: rng.random_range(0..=10),
            },
            ..template.clone()
        })
        .collect()
}
