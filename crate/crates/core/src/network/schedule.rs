use serde::{Deserialize, Serialize};

use super::NetworkError;

/// Right-open time interval `[start, end)` in seconds from scenario start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

/// Piecewise-constant schedule over sorted, non-overlapping intervals.
/// Outside every interval the schedule has no value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule<T> {
    entries: Vec<(Interval, T)>,
}

impl<T> Schedule<T> {
    pub fn new(mut entries: Vec<(Interval, T)>) -> Result<Self, NetworkError> {
        for (iv, _) in &entries {
            if !(iv.start.is_finite() && iv.end.is_finite()) || iv.end <= iv.start {
                return Err(NetworkError::Schedule(format!(
                    "interval [{}, {}) is empty or not finite",
                    iv.start, iv.end
                )));
            }
        }
        entries.sort_by(|a, b| a.0.start.total_cmp(&b.0.start));
        for pair in entries.windows(2) {
            if pair[1].0.start < pair[0].0.end {
                return Err(NetworkError::Schedule(format!(
                    "intervals [{}, {}) and [{}, {}) overlap",
                    pair[0].0.start, pair[0].0.end, pair[1].0.start, pair[1].0.end
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// Value active at `t`. At a shared boundary the later interval wins.
    pub fn at(&self, t: f64) -> Option<&T> {
        let idx = self.entries.partition_point(|(iv, _)| iv.start <= t);
        if idx == 0 {
            return None;
        }
        let (iv, value) = &self.entries[idx - 1];
        iv.contains(t).then_some(value)
    }

    pub fn entries(&self) -> &[(Interval, T)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// End of the last interval, if any.
    pub fn horizon(&self) -> Option<f64> {
        self.entries.last().map(|(iv, _)| iv.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ControlMode {
    Proceed,
    Stop,
}
