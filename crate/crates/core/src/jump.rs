//! Exact continuous-time simulation of the WF dual jump chains.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mixture::MultiIndex;
use crate::wf::WfParams;

/// A time-homogeneous jump process on count vectors.
pub trait JumpProcess {
    /// Total rate of leaving `state`.
    fn total_rate(&self, state: &[u32]) -> f64;

    /// Applies one jump chosen proportionally to the individual rates.
    fn jump<R: Rng + ?Sized>(&self, state: &mut [u32], rng: &mut R);
}

/// Typed Kingman coalescent with mutation: `m → m − eᵢ` at
/// `mᵢ(θ + |m| − 1)/2`.
#[derive(Debug, Clone)]
pub struct KingmanProcess<'a> {
    pub params: &'a WfParams,
}

/// Moran dual: `n → n − eᵢ + eⱼ` at `nᵢ(αⱼ + nⱼ)/2`.
#[derive(Debug, Clone)]
pub struct MoranProcess<'a> {
    pub params: &'a WfParams,
}

fn pick<R: Rng + ?Sized>(weights: impl Iterator<Item = f64> + Clone, rng: &mut R) -> usize {
    let total: f64 = weights.clone().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    last
}

impl JumpProcess for KingmanProcess<'_> {
    fn total_rate(&self, state: &[u32]) -> f64 {
        let n: u64 = state.iter().map(|&x| x as u64).sum();
        let n = n as f64;
        n * (self.params.theta() + n - 1.0) / 2.0
    }

    fn jump<R: Rng + ?Sized>(&self, state: &mut [u32], rng: &mut R) {
        let i = pick(state.iter().map(|&x| x as f64), rng);
        state[i] -= 1;
    }
}

impl MoranProcess<'_> {
    /// `Σ_{j≠i} (αⱼ + nⱼ)`, computed without cancellation when `K = 1`.
    fn others(&self, state: &[u32], total: u64, i: usize) -> f64 {
        (self.params.theta() - self.params.alpha()[i]) + (total - state[i] as u64) as f64
    }
}

impl JumpProcess for MoranProcess<'_> {
    fn total_rate(&self, state: &[u32]) -> f64 {
        let total: u64 = state.iter().map(|&x| x as u64).sum();
        (0..state.len())
            .map(|i| state[i] as f64 * self.others(state, total, i) / 2.0)
            .sum()
    }

    fn jump<R: Rng + ?Sized>(&self, state: &mut [u32], rng: &mut R) {
        let total: u64 = state.iter().map(|&x| x as u64).sum();
        let from = pick(
            (0..state.len()).map(|i| state[i] as f64 * self.others(state, total, i)),
            rng,
        );
        let alpha = self.params.alpha();
        let to = pick(
            (0..state.len()).map(|j| {
                if j == from {
                    0.0
                } else {
                    alpha[j] + state[j] as f64
                }
            }),
            rng,
        );
        state[from] -= 1;
        state[to] += 1;
    }
}

/// Terminal state of a simulated path with its event count and the time of
/// the last jump (`0` when no jump occurred).
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOutcome {
    pub state: MultiIndex,
    pub events: u64,
    pub last_jump: f64,
}

/// Gillespie simulation of `process` from `n0` up to time `t`.
pub fn simulate_jump_chain<P, R>(
    process: &P,
    n0: &MultiIndex,
    t: f64,
    budget: u64,
    rng: &mut R,
) -> Result<JumpOutcome>
where
    P: JumpProcess,
    R: Rng + ?Sized,
{
    let mut state = n0.coords().to_vec();
    let mut clock = 0.0;
    let mut events = 0u64;
    let mut last_jump = 0.0;
    loop {
        let rate = process.total_rate(&state);
        if !(rate > 0.0) {
            break;
        }
        let e: f64 = rng.sample(rand_distr::Exp1);
        clock += e / rate;
        if clock > t {
            break;
        }
        if events == budget {
            return Err(Error::SimulationBudgetExceeded { budget });
        }
        process.jump(&mut state, rng);
        events += 1;
        last_jump = clock;
    }
    Ok(JumpOutcome {
        state: MultiIndex::new(state),
        events,
        last_jump,
    })
}

pub fn gillespie_jump_chain<P, R>(
    process: &P,
    n0: &MultiIndex,
    t: f64,
    budget: u64,
    rng: &mut R,
) -> Result<MultiIndex>
where
    P: JumpProcess,
    R: Rng + ?Sized,
{
    simulate_jump_chain(process, n0, t, budget, rng).map(|o| o.state)
}
