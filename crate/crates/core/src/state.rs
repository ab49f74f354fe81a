//! Actions, environment states and trajectories — the `(s, a)` vocabulary
//! shared by the simulators, the prior, the reward models and the planners.

use crate::geom::{Pose2, Vec2};
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Default speed bound, board-lengths per second.
pub const DEFAULT_A_MAX: f64 = 0.25;
/// Default control step duration, seconds.
pub const DEFAULT_DT: f64 = 0.2;
/// Positions are soft-clamped to `[-BOARD_MARGIN, 1 + BOARD_MARGIN]`.
pub const BOARD_MARGIN: f64 = 0.1;

/// A planar velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action {
    pub v: Vec2,
}

impl Action {
    pub const ZERO: Action = Action { v: Vec2::ZERO };

    pub fn new(vx: f64, vy: f64) -> Self {
        Self {
            v: Vec2::new(vx, vy),
        }
    }
}

/// Rescale `a` so its speed never exceeds `a_max`; direction is preserved
/// and feasible actions pass through unchanged.
pub fn clamp_action(a: Action, a_max: f64) -> Action {
    debug_assert!(a_max > 0.0);
    let n = a.v.norm();
    if n <= a_max {
        return a;
    }
    let mut v = a.v * (a_max / n);
    // Rounding can leave the rescaled norm a ulp above the bound; nudge it
    // under so clamping is exactly idempotent.
    while v.norm() > a_max {
        v = v * (1.0 - f64::EPSILON);
    }
    Action { v }
}

/// A bounded sequence of consecutive velocity commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    pub actions: Vec<Action>,
    /// Seconds per step.
    pub dt: f64,
}

impl ActionChunk {
    pub fn new(actions: Vec<Action>, dt: f64) -> Self {
        assert!(!actions.is_empty(), "action chunk must be nonempty");
        assert!(dt > 0.0, "dt must be positive");
        Self { actions, dt }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Which analytic environment a state belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    PushT,
    Cubes,
    Chain,
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnvKind::PushT => write!(f, "pusht"),
            EnvKind::Cubes => write!(f, "cubes"),
            EnvKind::Chain => write!(f, "chain"),
        }
    }
}

/// Object payload of a state; exactly one variant per environment.
#[derive(Debug, Clone, PartialEq)]
pub enum Scene {
    PushT { tee: Pose2 },
    Cubes { cubes: [Vec2; 3] },
    Chain { links: Vec<Vec2> },
}

/// Full simulator state: pusher position plus the environment's objects.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub pusher: Vec2,
    pub scene: Scene,
}

impl EnvState {
    pub fn push_t(pusher: Vec2, tee: Pose2) -> Self {
        Self {
            pusher,
            scene: Scene::PushT { tee },
        }
    }

    pub fn cubes(pusher: Vec2, cubes: [Vec2; 3]) -> Self {
        Self {
            pusher,
            scene: Scene::Cubes { cubes },
        }
    }

    pub fn chain(pusher: Vec2, links: Vec<Vec2>) -> Self {
        assert!(links.len() >= 2, "chain needs at least two links");
        Self {
            pusher,
            scene: Scene::Chain { links },
        }
    }

    pub fn kind(&self) -> EnvKind {
        match self.scene {
            Scene::PushT { .. } => EnvKind::PushT,
            Scene::Cubes { .. } => EnvKind::Cubes,
            Scene::Chain { .. } => EnvKind::Chain,
        }
    }

    pub fn tee(&self) -> Option<&Pose2> {
        match &self.scene {
            Scene::PushT { tee } => Some(tee),
            _ => None,
        }
    }
}

/// A rollout: `states.len() == actions.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<EnvState>,
    pub actions: Vec<Action>,
}

impl Trajectory {
    pub fn new(states: Vec<EnvState>, actions: Vec<Action>) -> Self {
        assert_eq!(
            states.len(),
            actions.len() + 1,
            "trajectory requires states.len() == actions.len() + 1"
        );
        Self { states, actions }
    }

    pub fn start(&self) -> &EnvState {
        &self.states[0]
    }

    pub fn terminal(&self) -> &EnvState {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum StateError {
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("expected exactly one object field of `tee`, `cubes`, `links`")]
    AmbiguousScene,
    #[error("non-finite value in field `{0}`")]
    NonFinite(&'static str),
    #[error("field `links` needs at least 2 entries, got {0}")]
    ChainTooShort(usize),
}

// --- canonical record form -------------------------------------------------
//
// States serialize as flat JSON objects with fixed field names:
//   {"pusher":[x,y], "tee":[x,y,theta]}            push-T
//   {"pusher":[x,y], "cubes":[[x,y],[x,y],[x,y]]}  cubes
//   {"pusher":[x,y], "links":[[x,y],...]}          chain
// Orientation is wrapped to (-pi, pi] on the way in.

fn vec2_pair(v: Vec2) -> [f64; 2] {
    [v.x, v.y]
}

fn pair_vec2(p: [f64; 2], field: &'static str) -> Result<Vec2, StateError> {
    let v = Vec2::new(p[0], p[1]);
    if !v.is_finite() {
        return Err(StateError::NonFinite(field));
    }
    Ok(v)
}

#[derive(Serialize, Deserialize)]
struct RawState {
    #[serde(skip_serializing_if = "Option::is_none")]
    pusher: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tee: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cubes: Option<[[f64; 2]; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    links: Option<Vec<[f64; 2]>>,
}

impl From<&EnvState> for RawState {
    fn from(s: &EnvState) -> Self {
        let mut raw = RawState {
            pusher: Some(vec2_pair(s.pusher)),
            tee: None,
            cubes: None,
            links: None,
        };
        match &s.scene {
            Scene::PushT { tee } => {
                raw.tee = Some([tee.position.x, tee.position.y, tee.theta()]);
            }
            Scene::Cubes { cubes } => {
                raw.cubes = Some([vec2_pair(cubes[0]), vec2_pair(cubes[1]), vec2_pair(cubes[2])]);
            }
            Scene::Chain { links } => {
                raw.links = Some(links.iter().map(|&l| vec2_pair(l)).collect());
            }
        }
        raw
    }
}

impl TryFrom<RawState> for EnvState {
    type Error = StateError;

    fn try_from(raw: RawState) -> Result<Self, StateError> {
        let pusher = pair_vec2(
            raw.pusher.ok_or(StateError::MissingField("pusher"))?,
            "pusher",
        )?;
        let present =
            raw.tee.is_some() as u8 + raw.cubes.is_some() as u8 + raw.links.is_some() as u8;
        if present != 1 {
            return if present == 0 {
                Err(StateError::MissingField("tee|cubes|links"))
            } else {
                Err(StateError::AmbiguousScene)
            };
        }
        let scene = if let Some([x, y, theta]) = raw.tee {
            if !(x.is_finite() && y.is_finite() && theta.is_finite()) {
                return Err(StateError::NonFinite("tee"));
            }
            Scene::PushT {
                tee: Pose2::new(Vec2::new(x, y), theta),
            }
        } else if let Some(cs) = raw.cubes {
            Scene::Cubes {
                cubes: [
                    pair_vec2(cs[0], "cubes")?,
                    pair_vec2(cs[1], "cubes")?,
                    pair_vec2(cs[2], "cubes")?,
                ],
            }
        } else {
            let ls = raw.links.expect("checked above");
            if ls.len() < 2 {
                return Err(StateError::ChainTooShort(ls.len()));
            }
            Scene::Chain {
                links: ls
                    .into_iter()
                    .map(|p| pair_vec2(p, "links"))
                    .collect::<Result<_, _>>()?,
            }
        };
        Ok(EnvState { pusher, scene })
    }
}

impl Serialize for EnvState {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RawState::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EnvState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawState::deserialize(deserializer)?;
        EnvState::try_from(raw).map_err(D::Error::custom)
    }
}

/// Serialize a state to its canonical single-line JSON record.
pub fn serialize_state(state: &EnvState) -> String {
    serde_json::to_string(state).expect("state serialization cannot fail")
}

/// Parse a canonical record back into a state. Orientation wraps to
/// `(-pi, pi]`; malformed records report the offending field.
pub fn deserialize_state(record: &str) -> Result<EnvState, serde_json::Error> {
    serde_json::from_str(record)
}
