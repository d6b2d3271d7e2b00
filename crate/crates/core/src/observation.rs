use serde::{Deserialize, Serialize};

/// A time-stamped batch of emissions.
///
/// For the CIR model `values` holds `k` Poisson counts; for the Wright–Fisher
/// model it holds the per-category counts of a categorical batch (length `K`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub time: f64,
    pub values: Vec<u32>,
}

impl ObservationRecord {
    pub fn new(time: f64, values: Vec<u32>) -> Self {
        Self { time, values }
    }

    /// Number of emissions in the batch interpreted as Poisson draws.
    pub fn batch_len(&self) -> usize {
        self.values.len()
    }

    pub fn total(&self) -> u64 {
        self.values.iter().map(|&v| v as u64).sum()
    }
}
