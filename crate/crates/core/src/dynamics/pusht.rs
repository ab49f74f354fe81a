//! Quasi-static push-T environment: a disc pusher sliding a T-shaped tool.
//!
//! Contact is resolved positionally. When the pusher disc penetrates the T,
//! the T translates along the minimal-translation vector and rotates about
//! its centroid in proportion to the torque of the contact impulse.

use super::{clamp_board, WorldModel, MAX_SUBSTEP_TRAVEL};
use crate::geom::{Pose2, Vec2};
use crate::rng::SeededRng;
use crate::state::{Action, EnvState, Scene, DEFAULT_DT};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PushTParams {
    pub pusher_radius: f64,
    /// Horizontal bar of the T: width x height, board-lengths.
    pub bar_size: (f64, f64),
    /// Vertical stem hanging below the bar: width x height.
    pub stem_size: (f64, f64),
    /// Radians of rotation per unit of torque impulse (board-length squared).
    pub torque_gain: f64,
    pub dt: f64,
}

impl Default for PushTParams {
    fn default() -> Self {
        Self {
            pusher_radius: 0.02,
            bar_size: (0.12, 0.03),
            stem_size: (0.03, 0.09),
            torque_gain: 32.0,
            dt: DEFAULT_DT,
        }
    }
}

/// Axis-aligned rectangle in the T's local frame.
#[derive(Debug, Clone, Copy)]
pub struct LocalRect {
    pub center: Vec2,
    pub half: Vec2,
}

impl PushTParams {
    /// Bar and stem rectangles in the local frame, placed so the area
    /// centroid of the union sits at the origin and the stem's top edge
    /// abuts the bar's bottom edge.
    pub fn local_rects(&self) -> [LocalRect; 2] {
        let (bw, bh) = self.bar_size;
        let (sw, sh) = self.stem_size;
        let area_bar = bw * bh;
        let area_stem = sw * sh;
        let gap = 0.5 * (bh + sh);
        let bar_y = area_stem * gap / (area_bar + area_stem);
        let stem_y = bar_y - gap;
        [
            LocalRect {
                center: Vec2::new(0.0, bar_y),
                half: Vec2::new(0.5 * bw, 0.5 * bh),
            },
            LocalRect {
                center: Vec2::new(0.0, stem_y),
                half: Vec2::new(0.5 * sw, 0.5 * sh),
            },
        ]
    }
}

/// Board-frame rectangles of the T at a given pose (bar first).
pub fn tee_rects(pose: &Pose2, params: &PushTParams) -> [(Pose2, LocalRect); 2] {
    let rects = params.local_rects();
    [(*pose, rects[0]), (*pose, rects[1])]
}

/// Board-frame corner loops of the two rectangles, counterclockwise.
pub fn tee_corners(pose: &Pose2, params: &PushTParams) -> [[Vec2; 4]; 2] {
    let rects = params.local_rects();
    let mut out = [[Vec2::ZERO; 4]; 2];
    for (i, r) in rects.iter().enumerate() {
        let c = r.center;
        let h = r.half;
        let local = [
            Vec2::new(c.x - h.x, c.y - h.y),
            Vec2::new(c.x + h.x, c.y - h.y),
            Vec2::new(c.x + h.x, c.y + h.y),
            Vec2::new(c.x - h.x, c.y + h.y),
        ];
        for (j, &p) in local.iter().enumerate() {
            out[i][j] = pose.to_board(p);
        }
    }
    out
}

fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Signed distance from a local-frame point to a rectangle, with the
/// gradient direction (unit, pointing toward increasing distance).
fn rect_signed_distance(p: Vec2, rect: &LocalRect) -> (f64, Vec2) {
    let d = p - rect.center;
    let q = Vec2::new(d.x.abs() - rect.half.x, d.y.abs() - rect.half.y);
    if q.x > 0.0 || q.y > 0.0 {
        let outside = Vec2::new(q.x.max(0.0) * sign(d.x), q.y.max(0.0) * sign(d.y));
        let dist = outside.norm();
        (dist, outside / dist)
    } else {
        // Inside: nearest face along the axis with the least clearance.
        if q.x > q.y {
            (q.x, Vec2::new(sign(d.x), 0.0))
        } else {
            (q.y, Vec2::new(0.0, sign(d.y)))
        }
    }
}

struct Contact {
    depth: f64,
    /// Direction the T must move, board frame.
    push_dir: Vec2,
    /// Contact point on the T surface, board frame.
    point: Vec2,
}

fn deepest_contact(pusher: Vec2, tee: &Pose2, params: &PushTParams) -> Option<Contact> {
    let local_p = tee.to_local(pusher);
    let mut best: Option<(f64, Vec2, Vec2)> = None;
    for rect in params.local_rects() {
        let (phi, grad) = rect_signed_distance(local_p, &rect);
        let depth = params.pusher_radius - phi;
        if depth > 0.0 && best.map_or(true, |(d, _, _)| depth > d) {
            let surface_local = local_p - grad * phi;
            best = Some((depth, grad, surface_local));
        }
    }
    best.map(|(depth, grad_local, surface_local)| Contact {
        depth,
        push_dir: -grad_local.rotated(tee.theta()),
        point: tee.to_board(surface_local),
    })
}

/// Resolve pusher/T overlap by translating (and torque-rotating) the T until
/// residual penetration is below `tol`.
fn resolve_tee(pusher: Vec2, tee: &mut Pose2, params: &PushTParams, tol: f64) {
    for iter in 0..32 {
        let Some(contact) = deepest_contact(pusher, tee, params) else {
            return;
        };
        if contact.depth <= tol {
            return;
        }
        let mtv = contact.push_dir * contact.depth;
        let arm = contact.point - tee.position;
        tee.position = clamp_board(tee.position + mtv);
        // Torque shrinks with depth, so the loop contracts; the last
        // iterations are effectively translation-only.
        if iter < 24 {
            tee.rotate_by(params.torque_gain * arm.cross(mtv));
        }
    }
}

/// One control step of the push-T environment.
pub fn step_pusht(
    state: &EnvState,
    action: Action,
    params: &PushTParams,
    _rng: &mut SeededRng,
) -> EnvState {
    let Scene::PushT { tee } = &state.scene else {
        panic!("step_pusht requires a push-T state");
    };
    let travel = action.v * params.dt;
    let n_sub = (travel.norm() / MAX_SUBSTEP_TRAVEL).ceil().max(1.0) as usize;
    let delta = travel / n_sub as f64;

    let mut pusher = state.pusher;
    let mut tee = *tee;
    for _ in 0..n_sub {
        pusher = clamp_board(pusher + delta);
        resolve_tee(pusher, &mut tee, params, 1e-9);
    }
    EnvState::push_t(pusher, tee)
}

/// Push-T dynamics as a [`WorldModel`].
#[derive(Debug, Clone, Default)]
pub struct PushTModel {
    pub params: PushTParams,
}

impl PushTModel {
    pub fn new(params: PushTParams) -> Self {
        Self { params }
    }
}

impl WorldModel for PushTModel {
    fn step(&self, state: &EnvState, action: Action, rng: &mut SeededRng) -> EnvState {
        step_pusht(state, action, &self.params, rng)
    }
}
