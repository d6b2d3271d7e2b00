//! Benchmark fixtures.

use dualfilter::cir::CirParams;
use dualfilter::filter::exact_filter;
use dualfilter::wf::WfParams;
use dualfilter::{CirModel, DualMixture, ObservationRecord, WfModel};

/// CIR model with δ = 11, γ = 1.1, σ = 1.
pub fn cir_model() -> CirModel {
    CirModel::new(CirParams::new(11.0, 1.1, 1.0).unwrap())
}

/// Three-type WF model with α = 1.1 per type.
pub fn wf_model() -> WfModel {
    WfModel::new(WfParams::new(vec![1.1; 3]).unwrap())
}

/// CIR filtering law after `steps` observations spaced 0.1 apart.
pub fn cir_filtered(steps: usize) -> DualMixture {
    let ys = [4u32, 2, 6, 3, 5, 1, 7, 3];
    let data: Vec<ObservationRecord> = (0..steps)
        .map(|i| ObservationRecord::new(i as f64 * 0.1, vec![ys[i % ys.len()]]))
        .collect();
    let trace = exact_filter(&cir_model(), &data).unwrap();
    trace
        .steps
        .last()
        .unwrap()
        .filtering
        .as_mixture()
        .unwrap()
        .clone()
}
