//! World-model contract and rollout machinery.
//!
//! A [`WorldModel`] samples `P(s' | s, a)`. The three analytic environments
//! here stand in for a learned stochastic model while preserving its
//! interface: stateless after construction, seeded draws, multi-step
//! autoregressive rollouts.

mod chain;
mod cubes;
mod pusht;
mod stochastic;

pub use chain::{step_chain, ChainModel, ChainParams};
pub use cubes::{step_cubes, CubesModel, CubesParams};
pub use pusht::{step_pusht, tee_corners, tee_rects, PushTModel, PushTParams};
pub use stochastic::{StochasticWrapper, StochasticWrapperParams};

use crate::rng::{child_seed, SeededRng};
use crate::state::{ActionChunk, EnvState, Trajectory, BOARD_MARGIN};
use crate::state::Action;
use rayon::prelude::*;

/// Largest pusher travel per contact-resolution substep. Steps are split so
/// the disc cannot tunnel through thin features in a single update.
pub(crate) const MAX_SUBSTEP_TRAVEL: f64 = 0.01;

/// Stochastic next-state sampler.
///
/// `step` must be a pure function of `(state, action, rng stream)`: repeated
/// calls with identical inputs and seeds return identical states.
pub trait WorldModel: Sync {
    fn step(&self, state: &EnvState, action: Action, rng: &mut SeededRng) -> EnvState;

    /// Conditioning history length; the analytic models are Markovian.
    fn history_len(&self) -> usize {
        1
    }
}

impl<M: WorldModel + ?Sized> WorldModel for &M {
    fn step(&self, state: &EnvState, action: Action, rng: &mut SeededRng) -> EnvState {
        (**self).step(state, action, rng)
    }
    fn history_len(&self) -> usize {
        (**self).history_len()
    }
}

pub(crate) fn clamp_board(v: crate::geom::Vec2) -> crate::geom::Vec2 {
    v.clamp_coords(-BOARD_MARGIN, 1.0 + BOARD_MARGIN)
}

/// Roll a chunk forward from `s0`: `states[i+1] = step(states[i], actions[i])`.
pub fn rollout(
    model: &dyn WorldModel,
    s0: &EnvState,
    actions: &ActionChunk,
    rng: &mut SeededRng,
) -> Trajectory {
    let mut states = Vec::with_capacity(actions.len() + 1);
    states.push(s0.clone());
    for &a in &actions.actions {
        let next = model.step(states.last().expect("nonempty"), a, rng);
        states.push(next);
    }
    Trajectory::new(states, actions.actions.clone())
}

/// Roll out many chunks from the same start state. Each chunk gets an
/// independently derived child seed, so the result is identical whether the
/// batch runs serially or in parallel.
pub fn rollout_batch(
    model: &dyn WorldModel,
    s0: &EnvState,
    chunks: &[ActionChunk],
    base_seed: u64,
) -> Vec<Trajectory> {
    assert!(!chunks.is_empty(), "rollout_batch needs at least one chunk");
    chunks
        .par_iter()
        .enumerate()
        .map(|(i, chunk)| {
            let mut rng = SeededRng::new(child_seed(base_seed, i as u64));
            rollout(model, s0, chunk, &mut rng)
        })
        .collect()
}
