use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{JobId, WorkerId, MAX_VALUE};

/// Workers visible when a ranking table opens.
pub const INITIAL_ROWS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TableError {
    #[error("all workers are already in the table")]
    NothingToAdd,
    #[error("ranking is locked once values are entered")]
    OrderLocked,
    #[error("values can only be entered after every worker is ranked")]
    RankingIncomplete,
    #[error("worker {0} is not in the table")]
    NotRevealed(WorkerId),
    #[error("position {position} is outside the {len} ranked rows")]
    BadPosition { position: usize, len: usize },
    #[error("value {0} outside 0..=100")]
    ValueOutOfRange(i64),
    #[error("values missing for {0:?}")]
    MissingValues(Vec<WorkerId>),
}

/// The drag-to-rank table: revealed rows top to bottom are ranks 1, 2, ...
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingTable {
    pub job: JobId,
    pub revealed: Vec<WorkerId>,
    pub unrevealed: VecDeque<WorkerId>,
    pub values: BTreeMap<WorkerId, u32>,
    pub order_locked: bool,
}

impl RankingTable {
    pub fn new(job: JobId, presentation: Vec<WorkerId>) -> Self {
        let mut unrevealed: VecDeque<WorkerId> = presentation.into();
        let take = INITIAL_ROWS.min(unrevealed.len());
        let revealed = unrevealed.drain(..take).collect();
        Self {
            job,
            revealed,
            unrevealed,
            values: BTreeMap::new(),
            order_locked: false,
        }
    }

    pub fn fully_revealed(&self) -> bool {
        self.unrevealed.is_empty()
    }

    pub fn check_add(&self) -> Result<(), TableError> {
        if self.order_locked {
            Err(TableError::OrderLocked)
        } else if self.unrevealed.is_empty() {
            Err(TableError::NothingToAdd)
        } else {
            Ok(())
        }
    }

    /// Appends the next worker at the bottom of the table.
    pub fn add_worker(&mut self) -> Result<WorkerId, TableError> {
        self.check_add()?;
        let w = self.unrevealed.pop_front().ok_or(TableError::NothingToAdd)?;
        self.revealed.push(w.clone());
        Ok(w)
    }

    pub fn check_move(&self, worker: &WorkerId, position: usize) -> Result<usize, TableError> {
        if self.order_locked {
            return Err(TableError::OrderLocked);
        }
        let from = self
            .revealed
            .iter()
            .position(|w| w == worker)
            .ok_or_else(|| TableError::NotRevealed(worker.clone()))?;
        if position >= self.revealed.len() {
            return Err(TableError::BadPosition {
                position,
                len: self.revealed.len(),
            });
        }
        Ok(from)
    }

    pub fn move_worker(&mut self, worker: &WorkerId, position: usize) -> Result<(), TableError> {
        let from = self.check_move(worker, position)?;
        let w = self.revealed.remove(from);
        self.revealed.insert(position, w);
        Ok(())
    }

    pub fn check_value(&self, worker: &WorkerId, value: i64) -> Result<u32, TableError> {
        if !self.fully_revealed() {
            return Err(TableError::RankingIncomplete);
        }
        if !self.revealed.contains(worker) {
            return Err(TableError::NotRevealed(worker.clone()));
        }
        if !(0..=i64::from(MAX_VALUE)).contains(&value) {
            return Err(TableError::ValueOutOfRange(value));
        }
        Ok(value as u32)
    }

    /// Records a value; the first value locks the ranking. Equal values for
    /// different workers are allowed.
    pub fn enter_value(&mut self, worker: &WorkerId, value: i64) -> Result<(), TableError> {
        let v = self.check_value(worker, value)?;
        self.values.insert(worker.clone(), v);
        self.order_locked = true;
        Ok(())
    }

    pub fn missing_values(&self) -> Vec<WorkerId> {
        let mut missing: Vec<WorkerId> = self
            .revealed
            .iter()
            .chain(self.unrevealed.iter())
            .filter(|w| !self.values.contains_key(*w))
            .cloned()
            .collect();
        missing.sort();
        missing
    }

    /// Final `(worker, rank, value)` rows in rank order.
    pub fn submit(&self) -> Result<Vec<(WorkerId, u32, u32)>, TableError> {
        let missing = self.missing_values();
        if !missing.is_empty() {
            return Err(TableError::MissingValues(missing));
        }
        Ok(self
            .revealed
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32 + 1, self.values[w]))
            .collect())
    }
}
