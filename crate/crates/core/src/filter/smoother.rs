use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mixture::{DualMixture, MultiIndex};
use crate::model::{closure_spread, DualModel};
use crate::numeric::log_sum_exp;
use crate::observation::ObservationRecord;

use super::{propagate_mixture, FilterTrace, Method};

/// Largest relative spread tolerated when checking a kernel-product closure.
pub const CLOSURE_TOL: f64 = 1e-9;

/// Marginal smoothing law at one observation time.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingResult {
    pub time_index: usize,
    pub mixture: DualMixture,
}

fn heaviest(m: &DualMixture) -> &MultiIndex {
    m.iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
        .expect("mixtures are non-empty")
}

/// Combines a backward cost-to-go mixture with a filtering mixture through
/// the model's kernel-product closure.
fn combine<M: DualModel + ?Sized>(
    model: &M,
    back: &DualMixture,
    filt: &DualMixture,
) -> Result<DualMixture> {
    let spread = closure_spread(
        model,
        heaviest(back),
        &back.param(),
        heaviest(filt),
        &filt.param(),
    )?;
    if !(spread < CLOSURE_TOL) {
        return Err(Error::UnsupportedModel(format!(
            "kernel-product closure fails on the check grid (spread {spread:.3e})"
        )));
    }
    let mut terms: BTreeMap<MultiIndex, Vec<f64>> = BTreeMap::new();
    let mut param = None;
    for (m, wb) in back.iter() {
        for (n, wf) in filt.iter() {
            let c = model.closure(m, &back.param(), n, &filt.param())?;
            param.get_or_insert(c.param);
            terms
                .entry(c.index)
                .or_default()
                .push(wb.ln() + wf.ln() + c.ln_c);
        }
    }
    let ln_w: BTreeMap<MultiIndex, f64> = terms
        .into_iter()
        .map(|(d, v)| (d, log_sum_exp(&v)))
        .collect();
    let all: Vec<f64> = ln_w.values().copied().collect();
    let total = log_sum_exp(&all);
    let weights = ln_w
        .into_iter()
        .map(|(d, l)| (d, (l - total).exp()))
        .collect();
    DualMixture::from_weights(
        weights,
        param.expect("non-empty product"),
        filt.family().clone(),
    )
}

/// Marginal smoothing laws at every observation time of an exact or pruned
/// filtering run. The backward cost-to-go weights are obtained by running
/// the same update/propagation steps over the reversed data.
pub fn smoother<M: DualModel + ?Sized>(
    model: &M,
    data: &[ObservationRecord],
    trace: &FilterTrace,
) -> Result<Vec<SmoothingResult>> {
    let method = match trace.method {
        m @ (Method::Exact | Method::Pruned { .. }) => m,
        other => {
            return Err(Error::UnsupportedModel(format!(
                "smoothing needs an exact or pruned trace, got {}",
                other.tag()
            )))
        }
    };
    if trace.len() != data.len() {
        return Err(Error::AlignmentError(format!(
            "trace has {} steps for {} observations",
            trace.len(),
            data.len()
        )));
    }
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return Ok(out);
    }
    // exact and pruned propagation draw no randomness
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut back = model.prior();
    for i in (0..n).rev() {
        if i + 1 < n {
            let dt = data[i + 1].time - data[i].time;
            let upd = back.update(
                &data[i + 1],
                |m, p, y| model.ln_marginal(m, p, y),
                |m, y| model.shift_index(m, y),
                |p, y| model.shift_param(p, y),
            )?;
            back = propagate_mixture(
                model,
                &upd.mixture,
                dt,
                &method,
                Default::default(),
                &mut rng,
            )?;
        }
        let filt = trace.steps[i]
            .filtering
            .as_mixture()
            .ok_or_else(|| Error::UnsupportedModel("filtering step is not a mixture".into()))?;
        out.push(SmoothingResult {
            time_index: i,
            mixture: combine(model, &back, filt)?,
        });
    }
    out.reverse();
    Ok(out)
}
