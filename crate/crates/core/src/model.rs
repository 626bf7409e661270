//! Domain types shared across the crate.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Tokens a Dictator is endowed with, and the upper bound on a sent amount.
pub const ENDOWMENT_TOKENS: u8 = 10;
/// Problems in the Part 2 addition task and in each job.
pub const PROBLEMS_PER_TASK: u8 = 10;
/// Upper bound of a reported value and of the BDM draw, in points.
pub const MAX_VALUE: u32 = 100;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.into())
            }
        }
    };
}

string_id!(
    /// Opaque identifier of a worker in the evaluated pool.
    WorkerId
);
string_id!(
    /// Opaque identifier of a lab participant (worker or manager).
    SubjectId
);
string_id!(SessionId);

/// The two jobs: Conflict (shirking pays the worker) and No Conflict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum JobId {
    C,
    NC,
}

impl JobId {
    pub const ALL: [JobId; 2] = [JobId::C, JobId::NC];

    pub fn as_str(self) -> &'static str {
        match self {
            JobId::C => "C",
            JobId::NC => "NC",
        }
    }

    pub fn parse(s: &str) -> Option<JobId> {
        match s {
            "C" => Some(JobId::C),
            "NC" => Some(JobId::NC),
            _ => None,
        }
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Human,
    Synthetic,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Human => "human",
            Provenance::Synthetic => "synthetic",
        }
    }
}

/// A worker's public signal pair as shown to managers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub worker_id: WorkerId,
    /// Tokens sent in the Dictator Game.
    pub sent: u8,
    /// Correct solutions in the addition task.
    pub score: u8,
    pub provenance: Provenance,
}

impl WorkerProfile {
    pub fn new(
        worker_id: impl Into<WorkerId>,
        sent: u8,
        score: u8,
        provenance: Provenance,
    ) -> Result<Self, ModelError> {
        check_signal("sent", sent)?;
        check_signal("score", score)?;
        Ok(Self {
            worker_id: worker_id.into(),
            sent,
            score,
            provenance,
        })
    }

    pub fn signal(&self) -> (u8, u8) {
        (self.sent, self.score)
    }

    pub fn is_human(&self) -> bool {
        self.provenance == Provenance::Human
    }
}

impl From<String> for WorkerId {
    fn from(s: String) -> Self {
        WorkerId(s)
    }
}

impl From<String> for SubjectId {
    fn from(s: String) -> Self {
        SubjectId(s)
    }
}

pub(crate) fn check_signal(field: &'static str, v: u8) -> Result<(), ModelError> {
    if v > 10 {
        Err(ModelError::SignalOutOfRange { field, value: v })
    } else {
        Ok(())
    }
}

/// Point rates of one job. Conflict and No Conflict differ only in
/// `rate_skip_worker`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSpec {
    pub job_id: JobId,
    pub rate_correct_worker: u32,
    pub rate_correct_manager: u32,
    pub rate_skip_worker: u32,
    pub rate_skip_manager: u32,
    pub num_problems: u8,
    pub seconds_per_attempt: u32,
}

impl JobSpec {
    pub const fn conflict() -> Self {
        Self {
            job_id: JobId::C,
            rate_correct_worker: 10,
            rate_correct_manager: 10,
            rate_skip_worker: 15,
            rate_skip_manager: 0,
            num_problems: PROBLEMS_PER_TASK,
            seconds_per_attempt: 6,
        }
    }

    pub const fn no_conflict() -> Self {
        Self {
            job_id: JobId::NC,
            rate_correct_worker: 10,
            rate_correct_manager: 10,
            rate_skip_worker: 0,
            rate_skip_manager: 0,
            num_problems: PROBLEMS_PER_TASK,
            seconds_per_attempt: 6,
        }
    }

    pub fn for_job(job: JobId) -> Self {
        match job {
            JobId::C => Self::conflict(),
            JobId::NC => Self::no_conflict(),
        }
    }

    /// Time budget for a job in which `attempted` problems are chosen.
    pub fn time_budget_ms(&self, attempted: u8) -> u64 {
        u64::from(self.seconds_per_attempt) * u64::from(attempted) * 1000
    }
}

/// Both job specs, indexed by job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct JobSpecs {
    pub conflict: JobSpec,
    pub no_conflict: JobSpec,
}

impl Default for JobSpecs {
    fn default() -> Self {
        Self {
            conflict: JobSpec::conflict(),
            no_conflict: JobSpec::no_conflict(),
        }
    }
}

impl JobSpecs {
    pub fn get(&self, job: JobId) -> &JobSpec {
        match job {
            JobId::C => &self.conflict,
            JobId::NC => &self.no_conflict,
        }
    }

    /// Checks the structural invariants: matching ids, shared problem count
    /// and time rule, and rates that differ only in the worker skip rate.
    pub fn validate(&self) -> Result<(), ModelError> {
        let (c, nc) = (&self.conflict, &self.no_conflict);
        if c.job_id != JobId::C || nc.job_id != JobId::NC {
            return Err(ModelError::InvalidJobSpecs("job ids must be C and NC"));
        }
        let same_except_skip = c.rate_correct_worker == nc.rate_correct_worker
            && c.rate_correct_manager == nc.rate_correct_manager
            && c.rate_skip_manager == nc.rate_skip_manager
            && c.num_problems == nc.num_problems
            && c.seconds_per_attempt == nc.seconds_per_attempt;
        if !same_except_skip {
            return Err(ModelError::InvalidJobSpecs(
                "C and NC may differ only in the worker skip rate",
            ));
        }
        if c.num_problems == 0 || c.num_problems > PROBLEMS_PER_TASK {
            return Err(ModelError::InvalidJobSpecs("problem count must be in 1..=10"));
        }
        Ok(())
    }
}

/// Post-experiment questionnaire answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Questionnaire {
    pub stem: bool,
    pub male: bool,
    pub age: u8,
    /// Self-reported willingness to take risks, 0 (none) to 10.
    pub risk: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManagerProfile {
    pub manager_id: SubjectId,
    pub own_sent: u8,
    pub own_score: u8,
    pub questionnaire: Option<Questionnaire>,
}

/// One manager's rank and value for one worker in one job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValuationReport {
    pub manager_id: SubjectId,
    pub job_id: JobId,
    pub worker_id: WorkerId,
    /// 1 is the top of the manager's table.
    pub rank: u32,
    pub value: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timers {
    pub math_task_seconds: u32,
}

impl Default for Timers {
    fn default() -> Self {
        Self {
            math_task_seconds: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub rng_seed: u64,
    pub n_workers: usize,
    /// Currency per point.
    pub conversion_rate: f64,
    pub job_specs: JobSpecs,
    pub timers: Timers,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            rng_seed: 0,
            n_workers: 20,
            conversion_rate: 0.08,
            job_specs: JobSpecs::default(),
            timers: Timers::default(),
        }
    }
}

impl SessionConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            rng_seed: seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.conversion_rate.is_finite() || self.conversion_rate <= 0.0 {
            return Err(ModelError::InvalidConfig("conversion_rate must be positive"));
        }
        if self.n_workers < 2 {
            return Err(ModelError::InvalidConfig("n_workers must be at least 2"));
        }
        if self.timers.math_task_seconds == 0 {
            return Err(ModelError::InvalidConfig("math task timer must be positive"));
        }
        self.job_specs.validate()
    }
}

/// Inclusive rectangle of (sent, score) signal pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridBounds {
    pub sent: (u8, u8),
    pub score: (u8, u8),
}

impl Default for GridBounds {
    /// The evaluation grid: sent 0..=10, score 4..=10.
    fn default() -> Self {
        Self {
            sent: (0, 10),
            score: (4, 10),
        }
    }
}

impl GridBounds {
    pub fn contains(&self, sent: u8, score: u8) -> bool {
        (self.sent.0..=self.sent.1).contains(&sent) && (self.score.0..=self.score.1).contains(&score)
    }

    pub fn sent_levels(&self) -> usize {
        usize::from(self.sent.1 - self.sent.0) + 1
    }

    pub fn score_levels(&self) -> usize {
        usize::from(self.score.1 - self.score.0) + 1
    }

    /// All pairs, sent-major then score, in lexicographic order.
    pub fn points(&self) -> Vec<(u8, u8)> {
        let mut out = Vec::with_capacity(self.sent_levels() * self.score_levels());
        for x in self.sent.0..=self.sent.1 {
            for y in self.score.0..=self.score.1 {
                out.push((x, y));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("{field} = {value} is outside 0..=10")]
    SignalOutOfRange { field: &'static str, value: u8 },
    #[error("invalid job specs: {0}")]
    InvalidJobSpecs(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
}
