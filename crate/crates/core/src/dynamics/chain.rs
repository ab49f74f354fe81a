//! Push-chain environment: a deformable chain of point links.
//!
//! Position-based dynamics with pairwise distance constraints. The
//! constraint pass uses a Jacobi-style symmetric update (corrections are
//! accumulated against the old positions, then applied together), so a
//! geometrically symmetric push produces an exactly symmetric chain.

use super::{clamp_board, WorldModel, MAX_SUBSTEP_TRAVEL};
use crate::geom::Vec2;
use crate::rng::SeededRng;
use crate::state::{Action, EnvState, Scene, DEFAULT_DT};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainParams {
    pub n_links: usize,
    /// Rest distance between consecutive links.
    pub rest_length: f64,
    /// Constraint projection rounds per substep.
    pub projection_iters: usize,
    /// 1.0 = fully quasi-static: induced displacement is kept as-is.
    /// Smaller values scale down link displacement after each step.
    pub ground_friction: f64,
    pub pusher_radius: f64,
    pub dt: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            n_links: 12,
            rest_length: 0.025,
            projection_iters: 8,
            ground_friction: 1.0,
            pusher_radius: 0.02,
            dt: DEFAULT_DT,
        }
    }
}

impl ChainParams {
    /// A straight horizontal chain centered on the board.
    pub fn straight_links(&self, center: Vec2) -> Vec<Vec2> {
        let span = (self.n_links - 1) as f64 * self.rest_length;
        (0..self.n_links)
            .map(|i| Vec2::new(center.x - 0.5 * span + i as f64 * self.rest_length, center.y))
            .collect()
    }
}

fn push_links_out(pusher: Vec2, links: &mut [Vec2], radius: f64) {
    for link in links.iter_mut() {
        let d = *link - pusher;
        let dist = d.norm();
        if dist < radius {
            let dir = if dist <= f64::EPSILON {
                Vec2::new(1.0, 0.0)
            } else {
                d / dist
            };
            *link = clamp_board(pusher + dir * radius);
        }
    }
}

/// One Jacobi round over all pairwise distance constraints.
fn project_distances(links: &mut [Vec2], rest: f64) {
    let n = links.len();
    let mut acc = vec![Vec2::ZERO; n];
    let mut count = vec![0u32; n];
    for i in 0..n - 1 {
        let diff = links[i + 1] - links[i];
        let d = diff.norm();
        if d <= f64::EPSILON {
            continue;
        }
        let corr = diff * (0.5 * (d - rest) / d);
        acc[i] = acc[i] + corr;
        acc[i + 1] = acc[i + 1] - corr;
        count[i] += 1;
        count[i + 1] += 1;
    }
    for i in 0..n {
        if count[i] > 0 {
            links[i] = clamp_board(links[i] + acc[i] / count[i] as f64);
        }
    }
}

/// One control step of the chain environment.
pub fn step_chain(
    state: &EnvState,
    action: Action,
    params: &ChainParams,
    _rng: &mut SeededRng,
) -> EnvState {
    let Scene::Chain { links } = &state.scene else {
        panic!("step_chain requires a chain state");
    };
    let travel = action.v * params.dt;
    let n_sub = (travel.norm() / MAX_SUBSTEP_TRAVEL).ceil().max(1.0) as usize;
    let delta = travel / n_sub as f64;

    let mut pusher = state.pusher;
    let mut links = links.clone();
    for _ in 0..n_sub {
        pusher = clamp_board(pusher + delta);
        for _ in 0..params.projection_iters {
            push_links_out(pusher, &mut links, params.pusher_radius);
            project_distances(&mut links, params.rest_length);
            project_distances(&mut links, params.rest_length);
        }
    }
    if params.ground_friction < 1.0 {
        let Scene::Chain { links: old } = &state.scene else { unreachable!() };
        for (l, o) in links.iter_mut().zip(old) {
            *l = *o + (*l - *o) * params.ground_friction;
        }
        for _ in 0..params.projection_iters {
            project_distances(&mut links, params.rest_length);
        }
    }
    EnvState::chain(pusher, links)
}

/// Chain dynamics as a [`WorldModel`].
#[derive(Debug, Clone, Default)]
pub struct ChainModel {
    pub params: ChainParams,
}

impl ChainModel {
    pub fn new(params: ChainParams) -> Self {
        Self { params }
    }
}

impl WorldModel for ChainModel {
    fn step(&self, state: &EnvState, action: Action, rng: &mut SeededRng) -> EnvState {
        step_chain(state, action, &self.params, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn link_spacings(links: &[Vec2]) -> Vec<f64> {
        links.windows(2).map(|w| w[0].dist(w[1])).collect()
    }

    #[test]
    fn far_pusher_leaves_chain_unchanged() {
        let p = ChainParams::default();
        let links = p.straight_links(Vec2::new(0.5, 0.5));
        let s = EnvState::chain(Vec2::new(0.1, 0.1), links.clone());
        let next = step_chain(&s, Action::new(0.05, 0.0), &p, &mut SeededRng::new(0));
        let Scene::Chain { links: l2 } = &next.scene else { unreachable!() };
        assert_eq!(&links, l2, "quasi-static: untouched chain is bit-identical");
    }

    #[test]
    fn mid_link_push_moves_neighbors_and_conserves_length() {
        let p = ChainParams::default();
        let links = p.straight_links(Vec2::new(0.5, 0.5));
        let mid = links[6];
        // Start the pusher just below a middle link, drive up so the link is
        // displaced roughly 0.01 beyond the contact radius.
        let s = EnvState::chain(Vec2::new(mid.x, mid.y - p.pusher_radius - 0.005), links.clone());
        let next = step_chain(&s, Action::new(0.0, 0.08), &p, &mut SeededRng::new(0));
        let Scene::Chain { links: l2 } = &next.scene else { unreachable!() };
        assert!(l2[6].y > links[6].y + 1e-4, "pushed link moved");
        assert!(l2[5].y > links[5].y + 1e-6, "left neighbor dragged");
        assert!(l2[7].y > links[7].y + 1e-6, "right neighbor dragged");
        for d in link_spacings(l2) {
            assert!(
                (0.8 * p.rest_length..=1.2 * p.rest_length).contains(&d),
                "spacing {d} outside 20% band"
            );
        }
    }

    #[test]
    fn perpendicular_mid_push_is_symmetric() {
        // Odd link count, pusher exactly on the middle link's vertical:
        // the resulting shape must mirror about the push axis.
        let p = ChainParams {
            n_links: 11,
            ..ChainParams::default()
        };
        let links = p.straight_links(Vec2::new(0.5, 0.5));
        let mid_x = links[5].x;
        let s = EnvState::chain(Vec2::new(mid_x, 0.5 - p.pusher_radius - 0.004), links);
        let mut state = s;
        for _ in 0..5 {
            state = step_chain(&state, Action::new(0.0, 0.1), &p, &mut SeededRng::new(0));
        }
        let Scene::Chain { links: l } = &state.scene else { unreachable!() };
        for i in 0..l.len() {
            let j = l.len() - 1 - i;
            assert_abs_diff_eq!(l[i].x - mid_x, -(l[j].x - mid_x), epsilon = 1e-6);
            assert_abs_diff_eq!(l[i].y, l[j].y, epsilon = 1e-6);
        }
    }

    #[test]
    fn spacing_band_under_random_interaction() {
        let p = ChainParams::default();
        let mut rng = SeededRng::new(8);
        let mut s = EnvState::chain(Vec2::new(0.45, 0.48), p.straight_links(Vec2::new(0.5, 0.5)));
        for _ in 0..1500 {
            let a = Action::new(rng.normal() * 0.15, rng.normal() * 0.15);
            s = step_chain(&s, crate::state::clamp_action(a, 0.25), &p, &mut rng);
            let Scene::Chain { links } = &s.scene else { unreachable!() };
            for d in link_spacings(links) {
                assert!(
                    (0.8 * p.rest_length..=1.2 * p.rest_length).contains(&d),
                    "spacing {d} outside band"
                );
            }
        }
    }
}
