//! Series sampler for the WF diffusion transition and the two particle
//! approximations of the Moran dual built on it.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kingman::{block_count_entrance_probs, block_count_probs, sample_index};
use crate::mixture::MultiIndex;
use crate::wf::{dirichlet_sample, multinomial_sample, SimplexPoint, WfParams};

/// Generations per unit time per individual in the WF chain approximation.
pub const C_GEN: f64 = 1.0;

pub const M_TRUNC_MIN: u32 = 50;
pub const M_TRUNC_MAX: u32 = 500;

/// Pmf shift above which a truncated start level is reported as unreliable.
pub const TRUNC_SENSITIVITY_TOL: f64 = 1e-3;

/// Truncated start level `max(50, ⌈10/t⌉)` capped at 500.
pub fn m_trunc(t: f64) -> u32 {
    let want = (10.0 / t).ceil();
    let want = if want.is_finite() {
        want.min(M_TRUNC_MAX as f64) as u32
    } else {
        M_TRUNC_MAX
    };
    want.clamp(M_TRUNC_MIN, M_TRUNC_MAX)
}

/// How the law of the number of surviving lineages was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockCountSource {
    /// Started from infinitely many lineages.
    Entrance,
    /// Started from `start` lineages; `sensitivity` is the largest pmf shift
    /// observed when doubling the start level.
    Truncated { start: u32, sensitivity: f64 },
}

/// Draws from the WF diffusion transition over a fixed horizon:
/// survivors `A ~ d(t)`, ancestral types `l ~ Multinomial(A, x)`, then
/// `x' ~ Dirichlet(α + l)`.
#[derive(Debug, Clone)]
pub struct WfTransitionSampler {
    params: WfParams,
    t: f64,
    pmf: Vec<f64>,
    source: BlockCountSource,
}

impl WfTransitionSampler {
    pub fn new(params: &WfParams, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::DomainError(format!(
                "transition horizon {t} must be positive"
            )));
        }
        let theta = params.theta();
        let (pmf, source) = match block_count_entrance_probs(t, theta) {
            Some(pmf) => (pmf, BlockCountSource::Entrance),
            None => {
                let start = m_trunc(t);
                let pmf = block_count_probs(start, t, theta);
                let doubled = block_count_probs(2 * start, t, theta);
                let sensitivity = (0..doubled.len())
                    .map(|j| (pmf.get(j).copied().unwrap_or(0.0) - doubled[j]).abs())
                    .fold(0.0, f64::max);
                if sensitivity > TRUNC_SENSITIVITY_TOL {
                    log::warn!(
                        "WF transition truncated at {start} lineages for t={t}; doubling shifts pmf by {sensitivity:.3e}"
                    );
                }
                (pmf, BlockCountSource::Truncated { start, sensitivity })
            }
        };
        Ok(Self {
            params: params.clone(),
            t,
            pmf,
            source,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.t
    }

    pub fn source(&self) -> BlockCountSource {
        self.source
    }

    pub fn block_count_pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<SimplexPoint> {
        if x.len() != self.params.dim() {
            return Err(Error::DimensionError {
                expected: self.params.dim(),
                got: x.len(),
            });
        }
        let a = sample_index(&self.pmf, rng) as u32;
        let l = multinomial_sample(a, x, rng)?;
        let shape: Vec<f64> = self
            .params
            .alpha()
            .iter()
            .zip(&l)
            .map(|(ai, &li)| ai + li as f64)
            .collect();
        dirichlet_sample(&shape, rng)
    }

    /// Moves `n0/|n0|` through the transition and bins back to `|n0|` counts.
    pub fn sample_binned<R: Rng + ?Sized>(
        &self,
        n0: &MultiIndex,
        rng: &mut R,
    ) -> Result<MultiIndex> {
        let total = n0.total();
        if total == 0 {
            return Ok(n0.clone());
        }
        let x: Vec<f64> = n0
            .coords()
            .iter()
            .map(|&c| c as f64 / total as f64)
            .collect();
        let x1 = self.sample(&x, rng)?;
        Ok(MultiIndex::new(largest_remainder(
            x1.coords(),
            total as u32,
        )))
    }
}

/// Apportions `total` units proportionally to `x` (summing to one) so the
/// result sums to exactly `total`.
pub fn largest_remainder(x: &[f64], total: u32) -> Vec<u32> {
    let scaled: Vec<f64> = x.iter().map(|&xi| xi.max(0.0) * total as f64).collect();
    let mut out: Vec<u32> = scaled.iter().map(|s| s.floor() as u32).collect();
    let assigned: u32 = out.iter().sum();
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - scaled[a].floor();
        let rb = scaled[b] - scaled[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    if assigned <= total {
        for &i in order.iter().cycle().take((total - assigned) as usize) {
            out[i] += 1;
        }
    } else {
        let mut excess = assigned - total;
        for &i in order.iter().rev() {
            if excess == 0 {
                break;
            }
            if out[i] > 0 {
                out[i] -= 1;
                excess -= 1;
            }
        }
    }
    out
}

pub fn wf_transition_sample<R: Rng + ?Sized>(
    x: &SimplexPoint,
    t: f64,
    p: &WfParams,
    rng: &mut R,
) -> Result<SimplexPoint> {
    WfTransitionSampler::new(p, t)?.sample(x.coords(), rng)
}

pub fn moran_wf_diffusion_sample<R: Rng + ?Sized>(
    n0: &MultiIndex,
    t: f64,
    p: &WfParams,
    rng: &mut R,
) -> Result<MultiIndex> {
    WfTransitionSampler::new(p, t)?.sample_binned(n0, rng)
}

/// Number of WF generations used over a horizon `t` for population `N`.
pub fn wf_chain_generations(pop: u64, t: f64) -> u64 {
    ((C_GEN * pop as f64 * t).round() as u64).max(1)
}

/// Discrete WF chain of `|n0|` individuals: each generation resamples the
/// population multinomially with probabilities `(1−u)xᵢ + u αᵢ/θ`, where
/// `u = 1 − exp(−θt/(2G))` makes the mean match the diffusion exactly.
pub fn moran_wf_chain_sample<R: Rng + ?Sized>(
    n0: &MultiIndex,
    t: f64,
    p: &WfParams,
    rng: &mut R,
) -> Result<MultiIndex> {
    let pop = n0.total();
    if pop == 0 {
        return Ok(n0.clone());
    }
    if n0.dim() != p.dim() {
        return Err(Error::DimensionError {
            expected: p.dim(),
            got: n0.dim(),
        });
    }
    let gens = wf_chain_generations(pop, t);
    let u = -(-p.theta() * t / (2.0 * gens as f64)).exp_m1();
    let mut counts = n0.coords().to_vec();
    let mut probs = vec![0.0; counts.len()];
    for _ in 0..gens {
        for (i, pi) in probs.iter_mut().enumerate() {
            *pi = (1.0 - u) * counts[i] as f64 / pop as f64 + u * p.alpha()[i] / p.theta();
        }
        counts = multinomial_sample(pop as u32, &probs, rng)?;
    }
    Ok(MultiIndex::new(counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trunc_level_rule() {
        assert_eq!(m_trunc(1.0), 50);
        assert_eq!(m_trunc(0.1), 100);
        assert_eq!(m_trunc(0.001), 500);
    }

    #[test]
    fn apportionment_preserves_total() {
        assert_eq!(largest_remainder(&[0.5, 0.5], 3).iter().sum::<u32>(), 3);
        assert_eq!(largest_remainder(&[1.0 / 3.0; 3], 2), vec![1, 1, 0]);
        assert_eq!(largest_remainder(&[0.26, 0.74], 4), vec![1, 3]);
    }

    #[test]
    fn chain_runs_at_least_one_generation() {
        assert_eq!(wf_chain_generations(10, 1e-9), 1);
        let p = WfParams::new(vec![1.1, 1.1, 1.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n0 = MultiIndex::new(vec![10, 5, 5]);
        for _ in 0..50 {
            assert_eq!(
                moran_wf_chain_sample(&n0, 1.0, &p, &mut rng)
                    .unwrap()
                    .total(),
                20
            );
        }
    }

    #[test]
    fn transition_stays_on_simplex() {
        let p = WfParams::new(vec![3.0; 4]).unwrap();
        let s = WfTransitionSampler::new(&p, 0.1).unwrap();
        assert_eq!(s.source(), BlockCountSource::Entrance);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let x = s.sample(&[0.1, 0.2, 0.3, 0.4], &mut rng).unwrap();
            let total: f64 = x.coords().iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
            let n = s
                .sample_binned(&MultiIndex::new(vec![4, 0, 9, 2]), &mut rng)
                .unwrap();
            assert_eq!(n.total(), 15);
        }
    }
}
