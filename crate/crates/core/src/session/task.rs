use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// A two-digit addition problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub a: u8,
    pub b: u8,
}

impl Problem {
    pub fn solution(self) -> i64 {
        i64::from(self.a) + i64::from(self.b)
    }

    pub fn generate<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<Problem> {
        (0..count)
            .map(|_| Problem {
                a: rng.random_range(10..=99),
                b: rng.random_range(10..=99),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedTask {
    pub problems: Vec<Problem>,
    pub started_ms: u64,
    /// Answers stamped strictly before this instant count.
    pub deadline_ms: u64,
    pub answers: Vec<Option<i64>>,
    pub late: u32,
    pub closed: bool,
}

impl TimedTask {
    pub fn new(problems: Vec<Problem>, started_ms: u64, deadline_ms: u64) -> Self {
        let n = problems.len();
        Self {
            problems,
            started_ms,
            deadline_ms,
            answers: alloc::vec![None; n],
            late: 0,
            closed: n == 0,
        }
    }

    pub fn is_late(&self, ts: u64) -> bool {
        self.closed || ts >= self.deadline_ms
    }

    pub fn all_answered(&self) -> bool {
        self.answers.iter().all(Option::is_some)
    }

    /// Correct on-time answers; blanks and wrong answers count as incorrect.
    pub fn correct(&self) -> u8 {
        self.problems
            .iter()
            .zip(&self.answers)
            .filter(|(p, a)| **a == Some(p.solution()))
            .count() as u8
    }
}
