//! Push-cubes environment: three collision discs with inter-object contact.
//!
//! Overlaps are removed by iterative positional projection. The pusher is
//! immovable; cube-cube overlaps are split equally between the pair.

use super::{clamp_board, WorldModel, MAX_SUBSTEP_TRAVEL};
use crate::geom::Vec2;
use crate::rng::SeededRng;
use crate::state::{Action, EnvState, Scene, DEFAULT_DT};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CubesParams {
    /// Collision radius of each cube disc.
    pub cube_radius: f64,
    pub pusher_radius: f64,
    pub dt: f64,
}

impl Default for CubesParams {
    fn default() -> Self {
        Self {
            cube_radius: 0.03,
            pusher_radius: 0.02,
            dt: DEFAULT_DT,
        }
    }
}

const PROJECTION_TOL: f64 = 1e-6;
const MAX_PROJECTION_ITERS: usize = 16;

fn separation_dir(from: Vec2, to: Vec2) -> Vec2 {
    let d = to - from;
    let n = d.norm();
    if n <= f64::EPSILON {
        // Coincident centers: deterministic fallback axis.
        Vec2::new(1.0, 0.0)
    } else {
        d / n
    }
}

fn project_overlaps(pusher: Vec2, cubes: &mut [Vec2; 3], params: &CubesParams) {
    for _ in 0..MAX_PROJECTION_ITERS {
        let mut worst: f64 = 0.0;
        // Pusher-cube: cube takes the whole correction.
        for cube in cubes.iter_mut() {
            let min_dist = params.pusher_radius + params.cube_radius;
            let overlap = min_dist - pusher.dist(*cube);
            if overlap > 0.0 {
                *cube = clamp_board(*cube + separation_dir(pusher, *cube) * overlap);
                worst = worst.max(overlap);
            }
        }
        // Cube-cube: split equally.
        for i in 0..cubes.len() {
            for j in (i + 1)..cubes.len() {
                let min_dist = 2.0 * params.cube_radius;
                let overlap = min_dist - cubes[i].dist(cubes[j]);
                if overlap > 0.0 {
                    let dir = separation_dir(cubes[i], cubes[j]);
                    cubes[i] = clamp_board(cubes[i] - dir * (0.5 * overlap));
                    cubes[j] = clamp_board(cubes[j] + dir * (0.5 * overlap));
                    worst = worst.max(overlap);
                }
            }
        }
        if worst <= PROJECTION_TOL {
            return;
        }
    }
}

/// One control step of the cubes environment.
pub fn step_cubes(
    state: &EnvState,
    action: Action,
    params: &CubesParams,
    _rng: &mut SeededRng,
) -> EnvState {
    let Scene::Cubes { cubes } = &state.scene else {
        panic!("step_cubes requires a cubes state");
    };
    let travel = action.v * params.dt;
    let n_sub = (travel.norm() / MAX_SUBSTEP_TRAVEL).ceil().max(1.0) as usize;
    let delta = travel / n_sub as f64;

    let mut pusher = state.pusher;
    let mut cubes = *cubes;
    for _ in 0..n_sub {
        pusher = clamp_board(pusher + delta);
        project_overlaps(pusher, &mut cubes, params);
    }
    EnvState::cubes(pusher, cubes)
}

/// Cubes dynamics as a [`WorldModel`].
#[derive(Debug, Clone, Default)]
pub struct CubesModel {
    pub params: CubesParams,
}

impl CubesModel {
    pub fn new(params: CubesParams) -> Self {
        Self { params }
    }
}

impl WorldModel for CubesModel {
    fn step(&self, state: &EnvState, action: Action, rng: &mut SeededRng) -> EnvState {
        step_cubes(state, action, &self.params, rng)
    }
}
