use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DualModel;
use crate::observation::ObservationRecord;

/// A simulated hidden signal path with its observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub signal: Vec<Vec<f64>>,
    pub observations: Vec<ObservationRecord>,
}

/// Signal path started from the stationary law and observed at
/// `0, Δ, …, (n−1)Δ` with `batch` emissions per time.
pub fn simulate_dataset<M, R>(
    model: &M,
    n_times: usize,
    spacing: f64,
    batch: u32,
    rng: &mut R,
) -> Result<Dataset>
where
    M: DualModel + ?Sized,
    R: Rng,
{
    let mut signal = Vec::with_capacity(n_times);
    let mut observations = Vec::with_capacity(n_times);
    let mut x = Vec::new();
    for i in 0..n_times {
        x = if i == 0 {
            model.signal_prior_sample(rng)?
        } else {
            model.signal_transition_sample(&x, spacing, rng)?
        };
        let values = model.emission_sample(&x, batch, rng)?;
        observations.push(ObservationRecord::new(i as f64 * spacing, values));
        signal.push(x.clone());
    }
    Ok(Dataset {
        signal,
        observations,
    })
}

/// Writes `time_index,time,x_0..,y_0..` rows.
pub fn write_dataset_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::DomainError(format!("dataset write failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let dim = data.signal.first().map_or(0, Vec::len);
    let width = data.observations.first().map_or(0, |o| o.values.len());
    let mut header = vec!["time_index".to_string(), "time".to_string()];
    header.extend((0..dim).map(|i| format!("x_{i}")));
    header.extend((0..width).map(|i| format!("y_{i}")));
    w.write_record(&header).map_err(io)?;
    for (i, (x, y)) in data.signal.iter().zip(&data.observations).enumerate() {
        let mut row = vec![i.to_string(), y.time.to_string()];
        row.extend(x.iter().map(f64::to_string));
        row.extend(y.values.iter().map(u32::to_string));
        w.write_record(&row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::DomainError(format!("dataset write failed: {e}")))
}
