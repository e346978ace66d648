use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing window lengths `n_1 < n_2 < ... < n_m` along which
/// averages are sampled. Asymptotic quantities (limits, limsup, liminf) are
/// replaced by statistics over the tail of the schedule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct CheckpointSchedule {
    checkpoints: Vec<usize>,
}

impl CheckpointSchedule {
    pub fn new(checkpoints: Vec<usize>) -> Result<Self> {
        if checkpoints.len() < 2 {
            return Err(Error::argument(format!(
                "schedule needs at least 2 checkpoints, got {}",
                checkpoints.len()
            )));
        }
        if checkpoints[0] == 0 {
            return Err(Error::argument("checkpoints must be positive"));
        }
        if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::argument("checkpoints must be strictly increasing"));
        }
        Ok(Self { checkpoints })
    }

    /// `count` dyadic checkpoints ending at `last`: `last/2^(count-1), ..., last/2, last`.
    pub fn geometric(last: usize, count: usize) -> Result<Self> {
        if count < 2 || count >= usize::BITS as usize {
            return Err(Error::argument(format!("invalid checkpoint count {count}")));
        }
        let checkpoints = (0..count).rev().map(|i| last >> i).collect();
        Self::new(checkpoints)
    }

    pub fn checkpoints(&self) -> &[usize] {
        &self.checkpoints
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn first(&self) -> usize {
        self.checkpoints[0]
    }

    pub fn last(&self) -> usize {
        *self.checkpoints.last().expect("schedule is nonempty")
    }

    /// Number of trailing checkpoints used as the limsup/liminf surrogate:
    /// `max(2, ceil(m/3))`.
    pub fn tail_len(&self) -> usize {
        let m = self.checkpoints.len();
        m.div_ceil(3).max(2).min(m)
    }

    pub fn tail<'a, T>(&self, values: &'a [T]) -> &'a [T] {
        &values[values.len() - self.tail_len()..]
    }

    pub fn fits(&self, available: usize) -> Result<()> {
        if self.last() > available {
            return Err(Error::argument(format!(
                "schedule needs {} samples but only {available} are available",
                self.last()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for CheckpointSchedule {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CheckpointSchedule> for Vec<usize> {
    fn from(s: CheckpointSchedule) -> Self {
        s.checkpoints
    }
}
