//! Unstructured play-data generation.
//!
//! An Ornstein-Uhlenbeck velocity process with occasional approach-biased
//! segments drives the pusher around the board. No resets: episodes are
//! periodic cuts of one continuous run, which is exactly the data regime
//! the rest of the pipeline assumes.

mod prior;

pub use prior::{
    fit_prior, state_features, ChunkPolicy, DiscreteSetPolicy, PriorError, PriorModel,
    PriorParams, TracedSample,
};

use crate::dynamics::WorldModel;
use crate::rng::SeededRng;
use crate::state::{clamp_action, Action, EnvKind, EnvState, Scene, Trajectory, DEFAULT_A_MAX, DEFAULT_DT};
use crate::geom::Vec2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorationParams {
    /// OU mean-reversion rate, 1/s.
    pub ou_rate: f64,
    /// OU noise scale, board-lengths/s per sqrt(s).
    pub noise_scale: f64,
    /// Fraction of segments whose velocity is biased toward the nearest object.
    pub approach_bias_prob: f64,
    /// Steps per bias segment.
    pub segment_len: usize,
    /// Steps per episode cut.
    pub episode_len: usize,
    pub a_max: f64,
    pub dt: f64,
}

impl Default for ExplorationParams {
    fn default() -> Self {
        Self {
            ou_rate: 0.5,
            noise_scale: 0.15,
            approach_bias_prob: 0.3,
            segment_len: 16,
            episode_len: 512,
            a_max: DEFAULT_A_MAX,
            dt: DEFAULT_DT,
        }
    }
}

/// The play dataset: episodes cut from one continuous run.
#[derive(Debug, Clone)]
pub struct PlayDataset {
    pub episodes: Vec<Trajectory>,
    pub env: EnvKind,
    pub dt: f64,
}

impl PlayDataset {
    pub fn n_transitions(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    /// Iterate all states in episode order, including episode-final states.
    pub fn states(&self) -> impl Iterator<Item = &EnvState> {
        self.episodes.iter().flat_map(|e| e.states.iter())
    }
}

fn nearest_object(state: &EnvState) -> (Vec2, f64) {
    match &state.scene {
        Scene::PushT { tee } => (tee.position, 0.07),
        Scene::Cubes { cubes } => {
            let c = cubes
                .iter()
                .min_by(|a, b| {
                    state
                        .pusher
                        .dist(**a)
                        .partial_cmp(&state.pusher.dist(**b))
                        .expect("finite coords")
                })
                .expect("three cubes");
            (*c, 0.035)
        }
        Scene::Chain { links } => {
            let l = links
                .iter()
                .min_by(|a, b| {
                    state
                        .pusher
                        .dist(**a)
                        .partial_cmp(&state.pusher.dist(**b))
                        .expect("finite coords")
                })
                .expect("nonempty chain");
            (*l, 0.02)
        }
    }
}

/// Pursuit point for a biased segment. The point sits on a circle around
/// the nearest object and may orbit it over the segment, so the pusher
/// circles, grazes and shoves the object at varied bearings the way a
/// human plays with a toy. Recentering segments instead aim at the
/// object's outward side, nudging it back toward the middle of the board.
fn pursuit_point(state: &EnvState, bearing: f64, radius_scale: f64, recenter: bool) -> Vec2 {
    let board_center = Vec2::new(0.5, 0.5);
    let (object, extent) = nearest_object(state);
    if recenter && object.dist(board_center) > 0.15 {
        let outward = (object - board_center).normalized();
        return object + outward * extent;
    }
    object + Vec2::new(bearing.cos(), bearing.sin()) * (extent * radius_scale)
}

/// Generate `n_steps` transitions of OU-driven play from `s0`, cut into
/// episodes every `episode_len` steps.
pub fn gen_play(
    model: &dyn WorldModel,
    s0: &EnvState,
    params: &ExplorationParams,
    n_steps: usize,
    seed: u64,
) -> PlayDataset {
    assert!(n_steps >= 1, "gen_play needs n_steps >= 1");
    let mut rng = SeededRng::new(seed);
    let env = s0.kind();
    let mut episodes = Vec::new();
    let mut states = vec![s0.clone()];
    let mut actions: Vec<Action> = Vec::new();

    let mut v = Vec2::ZERO;
    let mut pursuing = false;
    let mut bearing = 0.0f64;
    let mut orbit_rate = 0.0f64;
    let mut radius_scale = 1.0f64;
    let mut speed = 0.8;
    let mut recenter = false;
    let sqrt_dt = params.dt.sqrt();

    for step in 0..n_steps {
        if step % params.segment_len.max(1) == 0 {
            pursuing = rng.uniform() < params.approach_bias_prob;
            // Fresh interaction style per segment: a contact bearing, an
            // orbit rate (0 = hold the bearing, otherwise the point circles
            // the object), a press-in/stand-off radius and a speed. A third
            // of the segments push the object back toward the middle.
            bearing = rng.uniform() * std::f64::consts::TAU;
            orbit_rate = if rng.uniform() < 0.5 {
                0.0
            } else {
                (0.1 + 0.3 * rng.uniform()) * if rng.uniform() < 0.5 { 1.0 } else { -1.0 }
            };
            radius_scale = 0.4 + 1.2 * rng.uniform();
            speed = 0.25 + 0.75 * rng.uniform();
            recenter = rng.uniform() < 0.34;
        }
        // A wall retrieval overrides everything: when an object drifts
        // out of the playable region the player pushes it back in, the way
        // a human keeps a toy on the table.
        let state = states.last().expect("nonempty");
        let (object, _) = nearest_object(state);
        let at_wall = object.x < 0.12 || object.x > 0.88 || object.y < 0.12 || object.y > 0.88;
        // Pursuit tracks the object continuously, so biased segments stay
        // engaged instead of sliding off after the first touch.
        let target = if at_wall {
            (pursuit_point(state, bearing, radius_scale, true) - state.pusher).normalized()
                * (0.8 * params.a_max)
        } else if pursuing {
            bearing += orbit_rate;
            (pursuit_point(state, bearing, radius_scale, recenter) - state.pusher).normalized()
                * (speed * params.a_max)
        } else {
            Vec2::ZERO
        };
        let noise = Vec2::new(rng.normal(), rng.normal()) * (params.noise_scale * sqrt_dt);
        v = v + (target - v) * (params.ou_rate * params.dt) + noise;
        let a = clamp_action(Action { v }, params.a_max);
        v = a.v;

        let next = model.step(states.last().expect("nonempty"), a, &mut rng);
        actions.push(a);
        states.push(next);

        let episode_full = actions.len() == params.episode_len;
        if episode_full || step + 1 == n_steps {
            let carry = states.last().expect("nonempty").clone();
            episodes.push(Trajectory::new(
                std::mem::take(&mut states),
                std::mem::take(&mut actions),
            ));
            // No reset: the next episode continues from where this one ended.
            states.push(carry);
        }
    }

    PlayDataset {
        episodes,
        env,
        dt: params.dt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ChainModel, PushTModel};
    use crate::geom::Pose2;

    fn pusht_start() -> EnvState {
        EnvState::push_t(Vec2::new(0.25, 0.25), Pose2::new(Vec2::new(0.5, 0.5), 0.0))
    }

    #[test]
    fn episode_cut_rule() {
        let model = PushTModel::default();
        let params = ExplorationParams::default();
        let ds = gen_play(&model, &pusht_start(), &params, 512, 1);
        assert_eq!(ds.episodes.len(), 1);
        assert_eq!(ds.episodes[0].len(), 512);
        let ds2 = gen_play(&model, &pusht_start(), &params, 1100, 1);
        assert_eq!(ds2.episodes.len(), 3);
        assert_eq!(ds2.episodes[2].len(), 76);
        assert_eq!(ds2.n_transitions(), 1100);
    }

    #[test]
    fn episodes_are_continuous() {
        let model = PushTModel::default();
        let ds = gen_play(&model, &pusht_start(), &ExplorationParams::default(), 1024, 2);
        for w in ds.episodes.windows(2) {
            assert_eq!(w[0].terminal(), w[1].start(), "no resets between episodes");
        }
    }

    #[test]
    fn ou_fixed_point_gives_zero_actions() {
        let model = PushTModel::default();
        let params = ExplorationParams {
            noise_scale: 0.0,
            approach_bias_prob: 0.0,
            ..ExplorationParams::default()
        };
        let ds = gen_play(&model, &pusht_start(), &params, 100, 3);
        for ep in &ds.episodes {
            for a in &ep.actions {
                assert_eq!(*a, Action::ZERO);
            }
        }
    }

    #[test]
    fn actions_respect_bound() {
        let model = PushTModel::default();
        let params = ExplorationParams::default();
        let ds = gen_play(&model, &pusht_start(), &params, 2000, 4);
        for ep in &ds.episodes {
            for a in &ep.actions {
                assert!(a.v.norm() <= params.a_max + 1e-12);
            }
        }
    }

    #[test]
    fn exploration_displaces_object_in_most_episodes() {
        let model = PushTModel::default();
        let params = ExplorationParams::default();
        let ds = gen_play(&model, &pusht_start(), &params, 20_000, 5);
        let moved = ds
            .episodes
            .iter()
            .filter(|ep| {
                let a = ep.start().tee().unwrap();
                let b = ep.terminal().tee().unwrap();
                a.position.dist(b.position) > 0.01 || crate::angdist(a.theta(), b.theta()) > 0.05
            })
            .count();
        assert!(
            moved * 2 >= ds.episodes.len(),
            "object moved in only {moved}/{} episodes",
            ds.episodes.len()
        );
    }

    #[test]
    fn chain_play_reaches_the_chain() {
        let model = ChainModel::default();
        let links = model.params.straight_links(Vec2::new(0.5, 0.5));
        let s0 = EnvState::chain(Vec2::new(0.4, 0.42), links.clone());
        let ds = gen_play(&model, &s0, &ExplorationParams::default(), 4096, 6);
        let moved = ds.states().any(|s| match &s.scene {
            Scene::Chain { links: l } => l != &links,
            _ => false,
        });
        assert!(moved, "play never touched the chain");
    }

    #[test]
    fn deterministic_under_seed() {
        let model = PushTModel::default();
        let params = ExplorationParams::default();
        let a = gen_play(&model, &pusht_start(), &params, 600, 9);
        let b = gen_play(&model, &pusht_start(), &params, 600, 9);
        assert_eq!(a.episodes, b.episodes);
    }
}
