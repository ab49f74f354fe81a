//! Local zeroth-order MPC tracking an MCTS plan under disturbances.
//!
//! Per control step: sample knot-point action populations around the plan,
//! roll them out in the planning model, score tracking cost plus action
//! cost, refine the sampling distribution with the CEM rule, execute the
//! first `h_exec` actions of the best sample, observe, and trigger
//! replanning when the observation drifts too far from the plan.

use crate::dynamics::WorldModel;
use crate::geom::Vec2;
use crate::mcts::Plan;
use crate::rewards::{embed, n_channels, EmbedParams, Embedding, ObjectMask};
use crate::rng::{child_seed, SeededRng};
use crate::state::{clamp_action, Action, ActionChunk, EnvState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcParams {
    /// Optimization window, steps.
    pub h_mpc: usize,
    /// Actions executed per control step.
    pub h_exec: usize,
    /// Plan-centered samples per round.
    pub k: usize,
    /// Extra zero-mean samples in the initial population.
    pub k_zero: usize,
    pub k_elite: usize,
    /// CEM rounds per control step.
    pub n_mpc: usize,
    /// Baseline sampling std per axis, board-lengths/s.
    pub sigma0: f64,
    /// Std floor keeping exploration alive.
    pub sigma_min: f64,
    pub n_knots: usize,
    /// Observation-to-plan embedding distance that triggers replanning.
    pub d_max: f64,
    /// Weight on the per-step embedding tracking cost.
    pub w_track: f64,
    /// Weight on the squared action norm.
    pub w_a: f64,
    pub a_max: f64,
    pub embed: EmbedParams,
}

impl Default for MpcParams {
    fn default() -> Self {
        Self {
            h_mpc: 4,
            h_exec: 2,
            k: 16,
            k_zero: 4,
            k_elite: 4,
            n_mpc: 10,
            sigma0: 0.05,
            sigma_min: 0.005,
            n_knots: 2,
            d_max: 0.7,
            w_track: 1.0,
            w_a: 0.01,
            a_max: crate::state::DEFAULT_A_MAX,
            embed: EmbedParams::default(),
        }
    }
}

/// Knot-point vector: one planar velocity per knot.
pub type KnotVector = Vec<Vec2>;

/// Diagonal Gaussian over knot vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub mean: Vec<Vec2>,
    /// Per-axis variances, floored at `sigma_min^2`.
    pub var: Vec<Vec2>,
}

impl ActionDistribution {
    pub fn isotropic(mean: Vec<Vec2>, sigma: f64) -> Self {
        let var = vec![Vec2::new(sigma * sigma, sigma * sigma); mean.len()];
        Self { mean, var }
    }

    pub fn sample(&self, rng: &mut SeededRng) -> KnotVector {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(m, v)| {
                Vec2::new(
                    m.x + v.x.sqrt() * rng.normal(),
                    m.y + v.y.sqrt() * rng.normal(),
                )
            })
            .collect()
    }
}

/// Step indices of the knots within a window of `h` steps: first knot at
/// the window start, last at the window end, evenly spaced.
fn knot_indices(n_knots: usize, h: usize) -> Vec<usize> {
    assert!(n_knots >= 2, "need at least two knots");
    if h <= 1 {
        return vec![0; n_knots];
    }
    (0..n_knots)
        .map(|j| (j as f64 * (h - 1) as f64 / (n_knots - 1) as f64).round() as usize)
        .collect()
}

/// Piecewise-linear interpolation of knot velocities across the window,
/// clamped per step to the action bound.
pub fn knots_to_actions(knots: &KnotVector, h_mpc: usize, dt: f64, a_max: f64) -> ActionChunk {
    assert!(knots.len() >= 2, "need at least two knots");
    assert!(h_mpc >= 1);
    let actions: Vec<Action> = (0..h_mpc)
        .map(|i| {
            let v = if h_mpc == 1 {
                knots[0]
            } else {
                // Knot positions are evenly spaced over [0, h-1].
                let pos = i as f64 * (knots.len() - 1) as f64 / (h_mpc - 1) as f64;
                let seg = (pos.floor() as usize).min(knots.len() - 2);
                let frac = pos - seg as f64;
                knots[seg] + (knots[seg + 1] - knots[seg]) * frac
            };
            clamp_action(Action { v }, a_max)
        })
        .collect();
    ActionChunk::new(actions, dt)
}

/// Population for the window starting at plan index `t`: `k` samples around
/// the plan's knot actions plus `k_zero` zero-mean samples, all as knot
/// vectors. Tail windows shorten to the remaining plan length.
pub fn gen_population(
    plan: &Plan,
    t: usize,
    params: &MpcParams,
    rng: &mut SeededRng,
) -> Vec<KnotVector> {
    let h = params.h_mpc.min(plan.len() - t);
    assert!(h >= 1, "window start beyond plan end");
    let idx = knot_indices(params.n_knots, h);
    let plan_knots: KnotVector = idx.iter().map(|&j| plan.actions[t + j].v).collect();
    let centered = ActionDistribution::isotropic(plan_knots, params.sigma0);
    let zero = ActionDistribution::isotropic(vec![Vec2::ZERO; params.n_knots], params.sigma0);
    let mut population = Vec::with_capacity(params.k + params.k_zero);
    for _ in 0..params.k {
        population.push(centered.sample(rng));
    }
    for _ in 0..params.k_zero {
        population.push(zero.sample(rng));
    }
    population
}

fn embed_state(state: &EnvState, params: &EmbedParams) -> Embedding {
    let mask = ObjectMask::all(n_channels(state.kind()));
    embed(state, &mask, params)
}

/// Embedding distance between an observation and a plan state; the metric
/// for both tracking cost and the deviation check.
pub fn plan_deviation(observed: &EnvState, plan_state: &EnvState, params: &EmbedParams) -> f64 {
    embed_state(observed, params).l2_dist(&embed_state(plan_state, params))
}

/// Roll out every knot vector from `s_cam` and score it against the plan
/// window: `R = -sum(w_track * embedding distance + w_a * |a|^2)`.
/// Child-seeded rollouts keep the result independent of scheduling.
pub fn evaluate_population(
    population: &[KnotVector],
    s_cam: &EnvState,
    plan: &Plan,
    t: usize,
    model: &dyn WorldModel,
    params: &MpcParams,
    base_seed: u64,
) -> Vec<f64> {
    assert!(!population.is_empty());
    let h = params.h_mpc.min(plan.len() - t);
    let plan_embeddings: Vec<Embedding> = (0..h)
        .map(|i| embed_state(&plan.states[t + i + 1], &params.embed))
        .collect();
    population
        .par_iter()
        .enumerate()
        .map(|(k, knots)| {
            let chunk = knots_to_actions(knots, h, plan.dt, params.a_max);
            let mut rng = SeededRng::new(child_seed(base_seed, k as u64));
            let mut state = s_cam.clone();
            let mut total = 0.0;
            for (i, &a) in chunk.actions.iter().enumerate() {
                state = model.step(&state, a, &mut rng);
                let tracking = embed_state(&state, &params.embed).l2_dist(&plan_embeddings[i]);
                total -= params.w_track * tracking + params.w_a * a.v.norm_sq();
            }
            total
        })
        .collect()
}

const ELITE_WEIGHT_EPS: f64 = 1e-6;

/// CEM update: fit a diagonal Gaussian to the top-`k_elite` samples using
/// min-shifted positive weights, variances floored at `sigma_min^2`.
pub fn cem_update(
    population: &[KnotVector],
    rewards: &[f64],
    k_elite: usize,
    sigma_min: f64,
) -> ActionDistribution {
    assert!(k_elite >= 1 && k_elite <= population.len());
    assert_eq!(population.len(), rewards.len());
    let n_knots = population[0].len();

    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&a, &b| {
        rewards[b]
            .partial_cmp(&rewards[a])
            .expect("finite rewards")
            .then(a.cmp(&b))
    });
    let elites = &order[..k_elite];
    let min_r = elites
        .iter()
        .map(|&i| rewards[i])
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = elites
        .iter()
        .map(|&i| rewards[i] - min_r + ELITE_WEIGHT_EPS)
        .collect();
    let total: f64 = weights.iter().sum();

    let mut mean = vec![Vec2::ZERO; n_knots];
    for (&i, &w) in elites.iter().zip(&weights) {
        for (m, a) in mean.iter_mut().zip(&population[i]) {
            *m = *m + *a * (w / total);
        }
    }
    let floor = sigma_min * sigma_min;
    let mut var = vec![Vec2::ZERO; n_knots];
    for (&i, &w) in elites.iter().zip(&weights) {
        for (v, (a, m)) in var.iter_mut().zip(population[i].iter().zip(&mean)) {
            let d = *a - *m;
            *v = *v + Vec2::new(d.x * d.x, d.y * d.y) * (w / total);
        }
    }
    for v in &mut var {
        v.x = v.x.max(floor);
        v.y = v.y.max(floor);
    }
    ActionDistribution { mean, var }
}

/// Result of one MPC control step.
#[derive(Debug, Clone)]
pub struct MpcStepResult {
    /// Actions to execute, at most `h_exec`.
    pub exec_chunk: ActionChunk,
    pub best_reward: f64,
    /// Best-so-far reward after each CEM round (nondecreasing).
    pub round_best: Vec<f64>,
}

/// Optimize the window starting at plan index `t` from observation `s_cam`
/// and return the first `h_exec` actions of the best sample found.
pub fn mpc_step(
    s_cam: &EnvState,
    plan: &Plan,
    t: usize,
    model: &dyn WorldModel,
    params: &MpcParams,
    rng: &mut SeededRng,
) -> MpcStepResult {
    assert!(t < plan.len(), "window start beyond plan end");
    let h = params.h_mpc.min(plan.len() - t);
    let mut best: Option<(f64, KnotVector)> = None;
    let mut round_best = Vec::with_capacity(params.n_mpc);
    let mut dist: Option<ActionDistribution> = None;

    for _ in 0..params.n_mpc {
        let population = match &dist {
            // First round: plan-centered samples augmented with zero-mean.
            None => gen_population(plan, t, params, rng),
            // Later rounds: resample everything from the updated parameters.
            Some(d) => (0..params.k + params.k_zero).map(|_| d.sample(rng)).collect(),
        };
        let rewards = evaluate_population(&population, s_cam, plan, t, model, params, rng.next_seed());
        for (knots, &r) in population.iter().zip(&rewards) {
            if best.as_ref().map_or(true, |(br, _)| r > *br) {
                best = Some((r, knots.clone()));
            }
        }
        round_best.push(best.as_ref().expect("population nonempty").0);
        dist = Some(cem_update(
            &population,
            &rewards,
            params.k_elite.min(population.len()),
            params.sigma_min,
        ));
    }

    let (best_reward, knots) = best.expect("at least one round");
    let window = knots_to_actions(&knots, h, plan.dt, params.a_max);
    let exec_len = params.h_exec.min(h);
    MpcStepResult {
        exec_chunk: ActionChunk::new(window.actions[..exec_len].to_vec(), plan.dt),
        best_reward,
        round_best,
    }
}

/// One executed step of a tracking run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionStep {
    pub t: usize,
    pub action: Action,
    pub observed: EnvState,
}

/// Full closed-loop execution trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub steps: Vec<ExecutionStep>,
    /// Plan deviation at each observation point (every `h_exec` steps).
    pub deviations: Vec<f64>,
    pub replan_requested: bool,
    pub terminal: EnvState,
}

/// Track a plan with MPC: optimize in `model_plan`, execute in
/// `model_exec` (which may carry noise or disturbances), observe, and
/// request replanning when the deviation metric exceeds `d_max`.
pub fn track_plan(
    s0: &EnvState,
    plan: &Plan,
    model_exec: &dyn WorldModel,
    model_plan: &dyn WorldModel,
    params: &MpcParams,
    rng: &mut SeededRng,
) -> ExecutionRecord {
    assert!(!plan.is_empty(), "cannot track an empty plan");
    let mut s_cam = s0.clone();
    let mut t = 0usize;
    let mut steps = Vec::new();
    let mut deviations = Vec::new();
    let mut replan_requested = false;

    while t < plan.len() {
        let result = mpc_step(&s_cam, plan, t, model_plan, params, rng);
        for &a in &result.exec_chunk.actions {
            s_cam = model_exec.step(&s_cam, a, rng);
            steps.push(ExecutionStep {
                t,
                action: a,
                observed: s_cam.clone(),
            });
            t += 1;
        }
        let deviation = plan_deviation(&s_cam, &plan.states[t], &params.embed);
        deviations.push(deviation);
        if deviation > params.d_max {
            replan_requested = true;
            break;
        }
    }

    ExecutionRecord {
        steps,
        deviations,
        replan_requested,
        terminal: s_cam,
    }
}
