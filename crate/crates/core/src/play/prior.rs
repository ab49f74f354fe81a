//! Nonparametric state-conditioned action prior.
//!
//! Stores every play transition with at least `h_edge` remaining steps as a
//! `(feature, action-chunk)` pair. Sampling picks among the `k` nearest
//! stored features with softmax weights and returns the stored chunk plus a
//! small norm-truncated Gaussian perturbation, so every proposal stays
//! provably close to an action that actually occurred in the data.

use crate::play::PlayDataset;
use crate::rng::SeededRng;
use crate::state::{clamp_action, Action, ActionChunk, EnvKind, EnvState, Scene, DEFAULT_A_MAX};
use crate::geom::Vec2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A source of action-chunk proposals for tree expansion and rollouts.
///
/// `sample_idx` distinguishes parallel proposals made from one call site;
/// stochastic policies may ignore it, deterministic test policies use it to
/// enumerate a fixed action set.
pub trait ChunkPolicy: Sync {
    fn sample_chunk(
        &self,
        state: &EnvState,
        sample_idx: usize,
        rng: &mut SeededRng,
    ) -> ActionChunk;

    /// Steps per proposed chunk.
    fn chunk_len(&self) -> usize;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorParams {
    /// Neighborhood size.
    pub k: usize,
    /// Stored forward chunk length, steps.
    pub h_edge: usize,
    /// Perturbation scale, board-lengths/s.
    pub sigma_prior: f64,
    /// Softmax temperature over neighbor distances.
    pub tau_prior: f64,
    /// Minimum transitions required before fitting.
    pub min_transitions: usize,
    pub a_max: f64,
}

impl Default for PriorParams {
    fn default() -> Self {
        Self {
            k: 16,
            h_edge: 8,
            sigma_prior: 0.02,
            tau_prior: 0.1,
            min_transitions: 20_000,
            a_max: DEFAULT_A_MAX,
        }
    }
}

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("dataset too small: {have} transitions, need at least {need}")]
    DatasetTooSmall { have: usize, need: usize },
    #[error("h_edge {h_edge} exceeds the longest episode ({max_episode} steps)")]
    ChunkTooLong { h_edge: usize, max_episode: usize },
    #[error("k must be >= 1")]
    ZeroK,
}

/// Normalized state feature vector with a fixed per-variant layout:
/// push-T `[px, py, tx, ty, (1+cos th)/2, (1+sin th)/2]`, cubes
/// `[px, py, c0x, c0y, c1x, c1y, c2x, c2y]`, chain
/// `[px, py, l0x, l0y, ..]`.
pub fn state_features(state: &EnvState) -> Vec<f64> {
    let mut f = vec![state.pusher.x, state.pusher.y];
    match &state.scene {
        Scene::PushT { tee } => {
            f.push(tee.position.x);
            f.push(tee.position.y);
            f.push(0.5 * (1.0 + tee.theta().cos()));
            f.push(0.5 * (1.0 + tee.theta().sin()));
        }
        Scene::Cubes { cubes } => {
            for c in cubes {
                f.push(c.x);
                f.push(c.y);
            }
        }
        Scene::Chain { links } => {
            for l in links {
                f.push(l.x);
                f.push(l.y);
            }
        }
    }
    f
}

/// Balanced kd-tree over the feature rows for exact k-nearest queries.
/// Rebuilt from the feature table on deserialization.
#[derive(Debug, Clone, Default)]
struct KdTree {
    /// Flat node array: leaves hold index ranges into `order`.
    nodes: Vec<KdNode>,
    /// Permutation of row indices, partitioned by the tree.
    order: Vec<u32>,
}

#[derive(Debug, Clone)]
enum KdNode {
    Split {
        axis: u8,
        value: f32,
        left: u32,
        right: u32,
    },
    Leaf {
        start: u32,
        end: u32,
    },
}

const KD_LEAF_SIZE: usize = 24;

impl KdTree {
    fn build(features: &[f32], dim: usize, n: usize) -> Self {
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::new();
        if n > 0 {
            Self::build_range(features, dim, &mut order, 0, n, &mut nodes);
        }
        Self { nodes, order }
    }

    fn build_range(
        features: &[f32],
        dim: usize,
        order: &mut [u32],
        start: usize,
        end: usize,
        nodes: &mut Vec<KdNode>,
    ) -> u32 {
        let id = nodes.len() as u32;
        if end - start <= KD_LEAF_SIZE {
            nodes.push(KdNode::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }
        // Split on the axis with the widest extent in this range.
        let mut best_axis = 0usize;
        let mut best_extent = -1.0f32;
        for axis in 0..dim {
            let mut lo = f32::MAX;
            let mut hi = f32::MIN;
            for &row in &order[start..end] {
                let v = features[row as usize * dim + axis];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_extent {
                best_extent = hi - lo;
                best_axis = axis;
            }
        }
        let mid = (start + end) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            let va = features[a as usize * dim + best_axis];
            let vb = features[b as usize * dim + best_axis];
            va.partial_cmp(&vb).expect("finite features").then(a.cmp(&b))
        });
        let split_value = features[order[mid] as usize * dim + best_axis];
        nodes.push(KdNode::Leaf { start: 0, end: 0 }); // placeholder
        let left = Self::build_range(features, dim, order, start, mid, nodes);
        let right = Self::build_range(features, dim, order, mid, end, nodes);
        nodes[id as usize] = KdNode::Split {
            axis: best_axis as u8,
            value: split_value,
            left,
            right,
        };
        id
    }

    /// Exact k-nearest rows to `query`, as `(dist2, idx)` sorted ascending
    /// with index ties broken low.
    fn knearest(&self, features: &[f32], dim: usize, query: &[f32], k: usize) -> Vec<(f32, u32)> {
        // Small sorted buffer; k is tiny (<= a few dozen).
        let mut best: Vec<(f32, u32)> = Vec::with_capacity(k + 1);
        self.search(features, dim, query, k, 0, &mut best);
        best
    }

    fn consider(best: &mut Vec<(f32, u32)>, k: usize, cand: (f32, u32)) {
        let pos = best
            .binary_search_by(|probe| {
                probe
                    .0
                    .partial_cmp(&cand.0)
                    .expect("finite")
                    .then(probe.1.cmp(&cand.1))
            })
            .unwrap_or_else(|p| p);
        if pos < k {
            best.insert(pos, cand);
            best.truncate(k);
        }
    }

    fn search(
        &self,
        features: &[f32],
        dim: usize,
        query: &[f32],
        k: usize,
        node: u32,
        best: &mut Vec<(f32, u32)>,
    ) {
        match &self.nodes[node as usize] {
            KdNode::Leaf { start, end } => {
                for &row in &self.order[*start as usize..*end as usize] {
                    let base = row as usize * dim;
                    let mut d2 = 0.0f32;
                    for (a, b) in features[base..base + dim].iter().zip(query) {
                        let diff = a - b;
                        d2 += diff * diff;
                    }
                    Self::consider(best, k, (d2, row));
                }
            }
            KdNode::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = query[*axis as usize] - value;
                let (near, far) = if delta < 0.0 { (*left, *right) } else { (*right, *left) };
                self.search(features, dim, query, k, near, best);
                let worst = if best.len() < k {
                    f32::MAX
                } else {
                    best[best.len() - 1].0
                };
                if delta * delta <= worst {
                    self.search(features, dim, query, k, far, best);
                }
            }
        }
    }
}

/// Fitted nonparametric prior over play transitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorModel {
    pub params: PriorParams,
    pub env: EnvKind,
    pub dt: f64,
    feat_dim: usize,
    /// Row-major `n x feat_dim` feature table.
    features: Vec<f32>,
    /// Flattened `n x h_edge` stored chunks.
    chunk_actions: Vec<Vec2>,
    n: usize,
    #[serde(skip)]
    index: std::sync::OnceLock<KdTree>,
}

/// Index all transitions with at least `params.h_edge` remaining in-episode
/// steps and freeze them into a queryable table.
pub fn fit_prior(dataset: &PlayDataset, params: PriorParams) -> Result<PriorModel, PriorError> {
    if params.k == 0 {
        return Err(PriorError::ZeroK);
    }
    let have = dataset.n_transitions();
    if have < params.min_transitions {
        return Err(PriorError::DatasetTooSmall {
            have,
            need: params.min_transitions,
        });
    }
    let max_episode = dataset.episodes.iter().map(|e| e.len()).max().unwrap_or(0);
    if params.h_edge == 0 || max_episode < params.h_edge {
        return Err(PriorError::ChunkTooLong {
            h_edge: params.h_edge,
            max_episode,
        });
    }

    let feat_dim = dataset
        .episodes
        .first()
        .map(|e| state_features(e.start()).len())
        .expect("nonempty dataset");

    let mut features: Vec<f32> = Vec::new();
    let mut chunk_actions: Vec<Vec2> = Vec::new();
    let mut n = 0usize;
    for ep in &dataset.episodes {
        if ep.len() < params.h_edge {
            continue;
        }
        for t in 0..=(ep.len() - params.h_edge) {
            let f = state_features(&ep.states[t]);
            debug_assert_eq!(f.len(), feat_dim);
            features.extend(f.iter().map(|&x| x as f32));
            chunk_actions.extend(ep.actions[t..t + params.h_edge].iter().map(|a| a.v));
            n += 1;
        }
    }

    Ok(PriorModel {
        params,
        env: dataset.env,
        dt: dataset.dt,
        feat_dim,
        features,
        chunk_actions,
        n,
        index: std::sync::OnceLock::new(),
    })
}

impl PriorModel {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn index(&self) -> &KdTree {
        self.index
            .get_or_init(|| KdTree::build(&self.features, self.feat_dim, self.n))
    }

    /// The `k` nearest stored transitions to `feat`, as `(index, distance)`,
    /// ordered nearest-first with index ties broken low.
    fn nearest(&self, feat: &[f32]) -> Vec<(usize, f64)> {
        let k = self.params.k.min(self.n);
        self.index()
            .knearest(&self.features, self.feat_dim, feat, k)
            .into_iter()
            .map(|(d2, i)| (i as usize, (d2 as f64).sqrt()))
            .collect()
    }

    /// Linear-scan reference for the kd-tree (tests only).
    #[doc(hidden)]
    pub fn nearest_brute_force(&self, feat: &[f32]) -> Vec<(usize, f64)> {
        let k = self.params.k.min(self.n);
        let mut all: Vec<(f32, u32)> = (0..self.n)
            .map(|i| {
                let row = &self.features[i * self.feat_dim..(i + 1) * self.feat_dim];
                let mut d2 = 0.0f32;
                for (a, b) in row.iter().zip(feat) {
                    let diff = a - b;
                    d2 += diff * diff;
                }
                (d2, i as u32)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
        all.truncate(k);
        all.into_iter()
            .map(|(d2, i)| (i as usize, (d2 as f64).sqrt()))
            .collect()
    }

    fn sample_inner(&self, state: &EnvState, rng: &mut SeededRng) -> TracedSample {
        assert!(self.n > 0, "prior has no transitions");
        let feat: Vec<f32> = state_features(state).iter().map(|&x| x as f32).collect();
        let neighbors = self.nearest(&feat);

        // Softmax over -distance/tau, stabilized by the nearest distance.
        let d0 = neighbors[0].1;
        let weights: Vec<f64> = neighbors
            .iter()
            .map(|(_, d)| (-(d - d0) / self.params.tau_prior).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.uniform() * total;
        let mut chosen = neighbors.len() - 1;
        for (j, w) in weights.iter().enumerate() {
            if u < *w {
                chosen = j;
                break;
            }
            u -= w;
        }
        let idx = neighbors[chosen].0;

        let h = self.params.h_edge;
        let sigma = self.params.sigma_prior;
        let source = self.chunk_actions[idx * h..(idx + 1) * h].to_vec();
        let mut pre_clamp = Vec::with_capacity(h);
        let mut actions = Vec::with_capacity(h);
        for &v in &source {
            let mut delta = Vec2::new(rng.normal(), rng.normal()) * sigma;
            let max_norm = 3.0 * sigma;
            let dn = delta.norm();
            if dn > max_norm {
                delta = delta * (max_norm / dn);
            }
            let raw = v + delta;
            pre_clamp.push(raw);
            actions.push(clamp_action(Action { v: raw }, self.params.a_max));
        }
        TracedSample {
            chunk: ActionChunk::new(actions, self.dt),
            source,
            pre_clamp,
        }
    }

    /// Sample one action chunk near `state`: softmax-weighted neighbor
    /// choice, stored chunk plus truncated Gaussian perturbation, clamped
    /// to the action bound.
    pub fn sample(&self, state: &EnvState, rng: &mut SeededRng) -> ActionChunk {
        self.sample_inner(state, rng).chunk
    }

    /// Like [`sample`](Self::sample) but reporting the source chunk and the
    /// pre-clamp proposal, for in-distribution checks.
    pub fn sample_traced(&self, state: &EnvState, rng: &mut SeededRng) -> TracedSample {
        self.sample_inner(state, rng)
    }
}

/// A prior sample along with its provenance.
#[derive(Debug, Clone)]
pub struct TracedSample {
    pub chunk: ActionChunk,
    /// The stored dataset actions the sample was perturbed from.
    pub source: Vec<Vec2>,
    /// Perturbed actions before clamping to the action bound.
    pub pre_clamp: Vec<Vec2>,
}

impl ChunkPolicy for PriorModel {
    fn sample_chunk(&self, state: &EnvState, _sample_idx: usize, rng: &mut SeededRng) -> ActionChunk {
        self.sample(state, rng)
    }

    fn chunk_len(&self) -> usize {
        self.params.h_edge
    }
}

/// Fixed discrete action set as a chunk policy: proposal `i` is the
/// constant chunk of `actions[i % len]`. Used to make planner behavior
/// enumerable in tests and calibration runs.
#[derive(Debug, Clone)]
pub struct DiscreteSetPolicy {
    pub actions: Vec<Action>,
    pub h_edge: usize,
    pub dt: f64,
}

impl ChunkPolicy for DiscreteSetPolicy {
    fn sample_chunk(&self, _state: &EnvState, sample_idx: usize, _rng: &mut SeededRng) -> ActionChunk {
        let a = self.actions[sample_idx % self.actions.len()];
        ActionChunk::new(vec![a; self.h_edge], self.dt)
    }

    fn chunk_len(&self) -> usize {
        self.h_edge
    }
}
