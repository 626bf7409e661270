use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::JobSpecs;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizQuestion {
    pub prompt: String,
    pub answer: i64,
}

/// Comprehension quiz on the job returns, answered before Part 3. Answers
/// follow from the configured rates.
pub fn job_quiz(specs: &JobSpecs) -> Vec<QuizQuestion> {
    let c = &specs.conflict;
    let nc = &specs.no_conflict;
    let q = |prompt: String, answer: u32| QuizQuestion {
        prompt,
        answer: i64::from(answer),
    };
    alloc::vec![
        q(
            String::from("In job C, how many points does a Worker earn for each problem answered correctly?"),
            c.rate_correct_worker,
        ),
        q(
            String::from("In job C, how many points does a Worker earn for each skipped problem?"),
            c.rate_skip_worker,
        ),
        q(
            String::from("In job C, how many points does a Manager earn for each skipped problem?"),
            c.rate_skip_manager,
        ),
        q(
            String::from("In job NC, how many points does a Worker earn for each skipped problem?"),
            nc.rate_skip_worker,
        ),
        q(
            String::from("A Worker answers 6 problems correctly in job NC. How many points does the Manager earn?"),
            6 * nc.rate_correct_manager,
        ),
        q(
            String::from("A Worker chooses to attempt 4 problems. How many seconds do they get?"),
            4 * c.seconds_per_attempt,
        ),
    ]
}
