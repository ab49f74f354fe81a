//! Model-based planning toolkit for planar pushing tasks.
//!
//! The pipeline mirrors a play-data driven robot stack end to end:
//! unstructured play generation, a nonparametric multimodal action prior,
//! three reward formulations (geometric, occupancy-embedding distance,
//! pairwise-ranked progress), a Monte Carlo Tree Search global planner and
//! a zeroth-order MPC tracker — all against pluggable stochastic world
//! models. Three analytic environments (push-T, push-cubes, push-chain)
//! implement the world-model contract with ground-truth dynamics.

pub mod dynamics;
pub mod geom;
pub mod io;
pub mod mcts;
pub mod mpc;
pub mod play;
pub mod rewards;
pub mod rng;
pub mod state;

pub use geom::{angdist, wrap_angle, Pose2, Vec2};
pub use rng::{child_seed, SeededRng};
pub use state::{
    clamp_action, deserialize_state, serialize_state, Action, ActionChunk, EnvKind, EnvState,
    Scene, Trajectory, BOARD_MARGIN, DEFAULT_A_MAX, DEFAULT_DT,
};
