//! Ranked-progress reward learned from passive trajectories.
//!
//! An affine energy `f(s | s_start, s_goal) = w . [f(s); f(s_start);
//! f(s_goal)] + b` over occupancy embeddings is fitted with the
//! Bradley-Terry pairwise objective: states sampled later in a chunk should
//! score higher than earlier ones. Convention fixed here: the later state
//! wins the comparison.

use super::embed::{embed, n_channels, EmbedParams, ObjectMask};
use super::{RewardError, RewardModel};
use crate::rng::SeededRng;
use crate::state::{Action, EnvState, Trajectory};
use serde::{Deserialize, Serialize};

/// Feature layout version persisted with trained models.
pub const RANK_FEATURE_LAYOUT_VERSION: u32 = 1;

/// Probability that the first argument wins the pairwise comparison.
pub fn bt_pair_prob(f_i: f64, f_j: f64) -> f64 {
    let d = f_i - f_j;
    1.0 / (1.0 + (-d).exp())
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn affine(weights: &[f64], bias: f64, z: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), z.len());
    weights.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + bias
}

/// Negative log-likelihood of ordering `z_late` above `z_early`.
pub fn bt_pair_loss(weights: &[f64], bias: f64, z_early: &[f64], z_late: &[f64]) -> f64 {
    let delta = affine(weights, bias, z_late) - affine(weights, bias, z_early);
    softplus(-delta)
}

/// Analytic gradient of [`bt_pair_loss`] in `(weights, bias)`.
pub fn bt_pair_grad(
    weights: &[f64],
    bias: f64,
    z_early: &[f64],
    z_late: &[f64],
) -> (Vec<f64>, f64) {
    let delta = affine(weights, bias, z_late) - affine(weights, bias, z_early);
    // d/d_delta of softplus(-delta) = -sigma(-delta).
    let coef = -1.0 / (1.0 + delta.exp());
    let grad_w = z_late
        .iter()
        .zip(z_early)
        .map(|(l, e)| coef * (l - e))
        .collect();
    // Bias cancels in the pairwise difference.
    (grad_w, 0.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RankTrainConfig {
    /// Steps per training chunk; pairs are sampled within one chunk.
    pub chunk_len_steps: usize,
    /// Total state pairs sampled for training plus holdout.
    pub n_pairs: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Fraction of pairs held out for the ordering-accuracy report.
    pub holdout_frac: f64,
    pub embed: EmbedParams,
}

impl Default for RankTrainConfig {
    fn default() -> Self {
        Self {
            chunk_len_steps: 64,
            n_pairs: 4096,
            learning_rate: 0.5,
            epochs: 30,
            holdout_frac: 0.2,
            embed: EmbedParams::default(),
        }
    }
}

/// Affine ranked-progress energy over `[f(s); f(s_start); f(s_goal)]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankRewardModel {
    /// `3d` weights: state block, start block, goal block.
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Per-block feature dimension `d`.
    pub feat_dim: usize,
    pub embed: EmbedParams,
    pub layout_version: u32,
}

impl RankRewardModel {
    /// Zero-initialized model for a given environment embedding size.
    pub fn zeroed(kind: crate::state::EnvKind, embed: EmbedParams) -> Self {
        let d = embed.grid_res * embed.grid_res * n_channels(kind);
        Self {
            weights: vec![0.0; 3 * d],
            bias: 0.0,
            feat_dim: d,
            embed,
            layout_version: RANK_FEATURE_LAYOUT_VERSION,
        }
    }

    fn phi(&self, state: &EnvState) -> Vec<f64> {
        let mask = ObjectMask::all(n_channels(state.kind()));
        embed(state, &mask, &self.embed).values
    }

    /// The learned energy at `s` conditioned on the problem endpoints.
    pub fn eval(&self, s: &EnvState, s_start: &EnvState, s_goal: &EnvState) -> f64 {
        let d = self.feat_dim;
        let phi_s = self.phi(s);
        let phi_start = self.phi(s_start);
        let phi_goal = self.phi(s_goal);
        affine(&self.weights[0..d], 0.0, &phi_s)
            + affine(&self.weights[d..2 * d], 0.0, &phi_start)
            + affine(&self.weights[2 * d..3 * d], 0.0, &phi_goal)
            + self.bias
    }

    /// Bind the problem endpooints once and return a planner-facing
    /// `r(s, a) = f(s) - w_a |a|^2` reward.
    pub fn planning_reward(&self, s_start: &EnvState, s_goal: &EnvState, w_a: f64) -> RankReward {
        let d = self.feat_dim;
        let ctx = affine(&self.weights[d..2 * d], 0.0, &self.phi(s_start))
            + affine(&self.weights[2 * d..3 * d], 0.0, &self.phi(s_goal))
            + self.bias;
        RankReward {
            state_weights: self.weights[0..d].to_vec(),
            ctx_const: ctx,
            embed: self.embed.clone(),
            w_a,
        }
    }
}

/// Training statistics reported alongside a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankTrainReport {
    pub n_train_pairs: usize,
    pub n_holdout_pairs: usize,
    /// Fraction of held-out pairs ordered correctly.
    pub holdout_accuracy: f64,
    pub final_train_loss: f64,
}

struct PairSample {
    early: usize,
    late: usize,
}

/// Fit the ranked-progress model on passive trajectories.
///
/// Chunks of `chunk_len_steps` are drawn uniformly from the trajectories;
/// within each chunk a pair of states with known temporal order is sampled
/// and the Bradley-Terry likelihood of the later state scoring higher is
/// maximized by stochastic gradient ascent.
pub fn train_rank_reward(
    trajectories: &[Trajectory],
    config: &RankTrainConfig,
    seed: u64,
) -> Result<(RankRewardModel, RankTrainReport), RewardError> {
    let usable: Vec<&Trajectory> = trajectories
        .iter()
        .filter(|t| t.len() >= config.chunk_len_steps)
        .collect();
    if usable.is_empty() {
        return Err(RewardError::InsufficientData(format!(
            "no trajectory has at least chunk_len_steps = {} transitions",
            config.chunk_len_steps
        )));
    }
    if config.n_pairs < 10 {
        return Err(RewardError::InsufficientData(
            "n_pairs must be at least 10".into(),
        ));
    }

    let kind = usable[0].start().kind();
    let mut model = RankRewardModel::zeroed(kind, config.embed.clone());
    let d = model.feat_dim;
    let mask = ObjectMask::all(n_channels(kind));

    // Embed every state once; pairs reference rows of this table.
    let mut rng = SeededRng::new(seed);
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut pairs: Vec<PairSample> = Vec::with_capacity(config.n_pairs);
    let mut cache: std::collections::HashMap<(usize, usize), usize> =
        std::collections::HashMap::new();

    let embed_row = |ti: usize, si: usize, traj: &Trajectory, features: &mut Vec<Vec<f64>>,
                         cache: &mut std::collections::HashMap<(usize, usize), usize>|
     -> usize {
        *cache.entry((ti, si)).or_insert_with(|| {
            features.push(embed(&traj.states[si], &mask, &config.embed).values);
            features.len() - 1
        })
    };

    for _ in 0..config.n_pairs {
        let ti = rng.index(usable.len());
        let traj = usable[ti];
        let w0 = rng.index(traj.len() - config.chunk_len_steps + 1);
        let lo = w0;
        let hi = w0 + config.chunk_len_steps; // inclusive state index range [lo, hi]
        let mut i = lo + rng.index(config.chunk_len_steps + 1);
        let mut j = lo + rng.index(config.chunk_len_steps + 1);
        if i == j {
            j = if j == hi { lo } else { j + 1 };
        }
        if i > j {
            std::mem::swap(&mut i, &mut j);
        }
        let early = embed_row(ti, i, traj, &mut features, &mut cache);
        let late = embed_row(ti, j, traj, &mut features, &mut cache);
        pairs.push(PairSample { early, late });
    }

    let n_holdout = ((config.n_pairs as f64) * config.holdout_frac).round() as usize;
    let n_train = config.n_pairs - n_holdout;
    let (train, holdout) = pairs.split_at(n_train);

    // SGD on the state block; start/goal blocks cancel within a pair and
    // stay zero, as does the bias.
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut final_loss = 0.0;
    for _ in 0..config.epochs {
        // Fisher-Yates with the seeded stream.
        for i in (1..order.len()).rev() {
            let j = rng.index(i + 1);
            order.swap(i, j);
        }
        final_loss = 0.0;
        for &pi in &order {
            let p = &train[pi];
            let ze = &features[p.early];
            let zl = &features[p.late];
            let delta: f64 = model.weights[0..d]
                .iter()
                .zip(zl.iter().zip(ze.iter()))
                .map(|(w, (l, e))| w * (l - e))
                .sum();
            final_loss += softplus(-delta);
            let coef = config.learning_rate / (1.0 + delta.exp());
            for (w, (l, e)) in model.weights[0..d].iter_mut().zip(zl.iter().zip(ze.iter())) {
                *w += coef * (l - e);
            }
        }
        final_loss /= train.len().max(1) as f64;
    }

    let mut correct = 0usize;
    for p in holdout {
        let ze = &features[p.early];
        let zl = &features[p.late];
        let delta: f64 = model.weights[0..d]
            .iter()
            .zip(zl.iter().zip(ze.iter()))
            .map(|(w, (l, e))| w * (l - e))
            .sum();
        if delta > 0.0 {
            correct += 1;
        }
    }
    let report = RankTrainReport {
        n_train_pairs: n_train,
        n_holdout_pairs: n_holdout,
        holdout_accuracy: if n_holdout == 0 {
            f64::NAN
        } else {
            correct as f64 / n_holdout as f64
        },
        final_train_loss: final_loss,
    };
    Ok((model, report))
}

/// Planner-facing ranked reward with problem endpoints bound.
#[derive(Debug, Clone)]
pub struct RankReward {
    state_weights: Vec<f64>,
    ctx_const: f64,
    embed: EmbedParams,
    pub w_a: f64,
}

impl RewardModel for RankReward {
    fn eval(&self, state: &EnvState, action: Action) -> f64 {
        let mask = ObjectMask::all(n_channels(state.kind()));
        let phi = embed(state, &mask, &self.embed).values;
        affine(&self.state_weights, 0.0, &phi) + self.ctx_const - self.w_a * action.v.norm_sq()
    }
}
