use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{DualMixture, Family};
use crate::numeric::KahanSum;

use super::{Cloud, FilterTrace};

/// Number of midpoints on which predictive densities are compared.
pub const GRID_POINTS: usize = 512;

/// Upper quantile of the reference law bounding the CIR comparison grid.
const CIR_GRID_QUANTILE: f64 = 0.9995;

/// Midpoint grid for first-coordinate density comparisons: `[0, q₀.₉₉₉₅]`
/// of the reference for CIR, `[0, 1]` for WF.
pub fn predictive_grid(reference: &DualMixture) -> Vec<f64> {
    let hi = match reference.family() {
        Family::CirGamma { .. } => reference.marginal_quantile(0, CIR_GRID_QUANTILE),
        Family::WfDirichlet { .. } => 1.0,
    };
    let h = hi / GRID_POINTS as f64;
    (0..GRID_POINTS).map(|i| (i as f64 + 0.5) * h).collect()
}

/// `∫|f_a − f_b|` of the first-coordinate densities, by the midpoint rule.
pub fn grid_l1(a: &Cloud, b: &Cloud, grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::AlignmentError(
            "comparison grid needs at least two points".into(),
        ));
    }
    let h = grid[1] - grid[0];
    let fa = a.marginal_density(0, grid)?;
    let fb = b.marginal_density(0, grid)?;
    Ok(fa
        .iter()
        .zip(&fb)
        .map(|(x, y)| (x - y).abs() * h)
        .collect::<KahanSum>()
        .value())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub mean_error: f64,
    pub sd_error: f64,
    pub signal_error: Option<f64>,
    pub predictive_l1: f64,
}

/// Averages over the second half of the time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mean_error: f64,
    pub sd_error: f64,
    pub signal_error: Option<f64>,
    pub predictive_l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub steps: Vec<StepMetrics>,
    pub summary: MetricsSummary,
}

fn second_half_mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let tail = &v[v.len() / 2..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().copied().collect::<KahanSum>().value() / tail.len() as f64
}

/// Per-step first-coordinate errors of `trace` against `exact`, plus the
/// grid-L1 distance between predictive laws.
pub fn error_metrics(
    trace: &FilterTrace,
    exact: &FilterTrace,
    signal: Option<&[Vec<f64>]>,
) -> Result<MetricsTable> {
    if trace.len() != exact.len() {
        return Err(Error::AlignmentError(format!(
            "traces have {} and {} steps",
            trace.len(),
            exact.len()
        )));
    }
    if let Some(path) = signal {
        if path.len() != exact.len() {
            return Err(Error::AlignmentError(format!(
                "signal path has {} points for {} steps",
                path.len(),
                exact.len()
            )));
        }
    }
    let mut steps = Vec::with_capacity(trace.len());
    for (i, (a, e)) in trace.steps.iter().zip(&exact.steps).enumerate() {
        if a.time != e.time {
            return Err(Error::AlignmentError(format!(
                "step {i} at time {} vs {}",
                a.time, e.time
            )));
        }
        let reference = e.predictive.as_mixture().ok_or_else(|| {
            Error::AlignmentError("reference predictive must be a mixture".into())
        })?;
        let grid = predictive_grid(reference);
        steps.push(StepMetrics {
            mean_error: (a.filtering_moments.mean[0] - e.filtering_moments.mean[0]).abs(),
            sd_error: (a.filtering_moments.sd[0] - e.filtering_moments.sd[0]).abs(),
            signal_error: signal.map(|p| (a.filtering_moments.mean[0] - p[i][0]).abs()),
            predictive_l1: grid_l1(&a.predictive, &e.predictive, &grid)?,
        });
    }
    let summary = MetricsSummary {
        mean_error: second_half_mean(steps.iter().map(|s| s.mean_error)),
        sd_error: second_half_mean(steps.iter().map(|s| s.sd_error)),
        signal_error: signal
            .map(|_| second_half_mean(steps.iter().map(|s| s.signal_error.unwrap_or(f64::NAN)))),
        predictive_l1: second_half_mean(steps.iter().map(|s| s.predictive_l1)),
    };
    Ok(MetricsTable { steps, summary })
}
