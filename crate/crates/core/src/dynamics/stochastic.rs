//! Stochastic wrapper emulating world-model uncertainty.
//!
//! Adds zero-mean Gaussian noise to the objects an inner step actually
//! moved. The pusher is never perturbed: commands execute exactly, the
//! uncertainty lives in how objects respond.

use super::{clamp_board, WorldModel};
use crate::geom::Vec2;
use crate::rng::SeededRng;
use crate::state::{Action, EnvState, Scene};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct StochasticWrapperParams {
    /// Positional noise per step, board-lengths.
    pub sigma_pos: f64,
    /// Rotational noise per step, radians (push-T only).
    pub sigma_rot: f64,
}

impl Default for StochasticWrapperParams {
    fn default() -> Self {
        Self {
            sigma_pos: 0.002,
            sigma_rot: 0.01,
        }
    }
}

/// Wraps any world model; with `sigma = 0` it is exactly the inner model.
#[derive(Debug, Clone)]
pub struct StochasticWrapper<M> {
    pub inner: M,
    pub params: StochasticWrapperParams,
}

impl<M> StochasticWrapper<M> {
    pub fn new(inner: M, params: StochasticWrapperParams) -> Self {
        Self { inner, params }
    }
}

fn noisy(v: Vec2, sigma: f64, rng: &mut SeededRng) -> Vec2 {
    clamp_board(Vec2::new(v.x + sigma * rng.normal(), v.y + sigma * rng.normal()))
}

impl<M: WorldModel> WorldModel for StochasticWrapper<M> {
    fn step(&self, state: &EnvState, action: Action, rng: &mut SeededRng) -> EnvState {
        let mut next = self.inner.step(state, action, rng);
        let (sp, sr) = (self.params.sigma_pos, self.params.sigma_rot);
        if sp == 0.0 && sr == 0.0 {
            return next;
        }
        match (&state.scene, &mut next.scene) {
            (Scene::PushT { tee: old }, Scene::PushT { tee }) => {
                if tee != old {
                    tee.position = noisy(tee.position, sp, rng);
                    tee.rotate_by(sr * rng.normal());
                }
            }
            (Scene::Cubes { cubes: old }, Scene::Cubes { cubes }) => {
                for (c, o) in cubes.iter_mut().zip(old) {
                    if c != o {
                        *c = noisy(*c, sp, rng);
                    }
                }
            }
            (Scene::Chain { links: old }, Scene::Chain { links }) => {
                for (l, o) in links.iter_mut().zip(old) {
                    if l != o {
                        *l = noisy(*l, sp, rng);
                    }
                }
            }
            _ => panic!("inner model changed the scene variant"),
        }
        next
    }

    fn history_len(&self) -> usize {
        self.inner.history_len()
    }
}
