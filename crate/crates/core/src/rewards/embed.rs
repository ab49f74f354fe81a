//! Occupancy-grid state embedding.
//!
//! Each object rasterizes onto its own `grid_res x grid_res` channel over
//! the unit board with exact anti-aliased area coverage (convex polygons
//! clipped cell by cell). The flattened channels form the feature space in
//! which goal distance and plan deviation are measured; masking channels
//! restricts attention to objects of interest.

use crate::geom::Vec2;
use crate::state::{EnvKind, EnvState, Scene};
use crate::dynamics::{tee_corners, PushTParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedParams {
    pub grid_res: usize,
    /// Disc radius used to rasterize chain links.
    pub chain_disc_radius: f64,
    /// Disc radius used to rasterize cubes.
    pub cube_radius: f64,
    /// Polygon segments approximating a disc.
    pub disc_segments: usize,
    /// Geometry of the T when embedding push-T states.
    pub tee: PushTParams,
}

impl Default for EmbedParams {
    fn default() -> Self {
        Self {
            grid_res: 16,
            chain_disc_radius: 0.02,
            cube_radius: 0.03,
            disc_segments: 24,
            tee: PushTParams::default(),
        }
    }
}

/// Number of object channels for an environment.
pub fn n_channels(kind: EnvKind) -> usize {
    match kind {
        EnvKind::PushT => 1,
        EnvKind::Cubes => 3,
        EnvKind::Chain => 1,
    }
}

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("object mask must retain at least one channel")]
    Empty,
    #[error("mask channel {channel} out of range for {channels} channels")]
    OutOfRange { channel: usize, channels: usize },
}

/// Subset of object channels retained by the embedding; others are zeroed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectMask {
    keep: Vec<bool>,
}

impl ObjectMask {
    pub fn all(channels: usize) -> Self {
        Self {
            keep: vec![true; channels],
        }
    }

    pub fn subset(channels: usize, retained: &[usize]) -> Result<Self, MaskError> {
        if retained.is_empty() {
            return Err(MaskError::Empty);
        }
        let mut keep = vec![false; channels];
        for &c in retained {
            if c >= channels {
                return Err(MaskError::OutOfRange { channel: c, channels });
            }
            keep[c] = true;
        }
        Ok(Self { keep })
    }

    pub fn keeps(&self, channel: usize) -> bool {
        self.keep.get(channel).copied().unwrap_or(false)
    }

    pub fn channels(&self) -> usize {
        self.keep.len()
    }
}

/// Flattened multi-channel occupancy embedding; entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub channels: usize,
    pub grid_res: usize,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn l2_dist(&self, other: &Embedding) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn cell(&self, channel: usize, ix: usize, iy: usize) -> f64 {
        self.values[channel * self.grid_res * self.grid_res + iy * self.grid_res + ix]
    }
}

/// Clip a convex polygon against the half-plane `keep` (true side kept).
fn clip_half_plane(poly: &[Vec2], out: &mut Vec<Vec2>, inside: impl Fn(Vec2) -> f64) {
    out.clear();
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let da = inside(a);
        let db = inside(b);
        if da >= 0.0 {
            out.push(a);
        }
        if (da > 0.0 && db < 0.0) || (da < 0.0 && db > 0.0) {
            let t = da / (da - db);
            out.push(a + (b - a) * t);
        }
    }
}

fn polygon_area(poly: &[Vec2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        s += a.cross(b);
    }
    0.5 * s.abs()
}

/// Exact area of `poly` inside the axis-aligned cell `[x0,x1] x [y0,y1]`.
fn poly_cell_area(poly: &[Vec2], x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let mut a: Vec<Vec2> = poly.to_vec();
    let mut b: Vec<Vec2> = Vec::with_capacity(poly.len() + 4);
    clip_half_plane(&a, &mut b, |p| p.x - x0);
    std::mem::swap(&mut a, &mut b);
    clip_half_plane(&a, &mut b, |p| x1 - p.x);
    std::mem::swap(&mut a, &mut b);
    clip_half_plane(&a, &mut b, |p| p.y - y0);
    std::mem::swap(&mut a, &mut b);
    clip_half_plane(&a, &mut b, |p| y1 - p.y);
    polygon_area(&b)
}

/// Accumulate a convex polygon's coverage into one channel grid.
fn splat_polygon(grid: &mut [f64], res: usize, poly: &[Vec2]) {
    let cell = 1.0 / res as f64;
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in poly {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let ix0 = ((min_x / cell).floor().max(0.0)) as usize;
    let iy0 = ((min_y / cell).floor().max(0.0)) as usize;
    let ix1 = (((max_x / cell).ceil()) as isize).clamp(0, res as isize) as usize;
    let iy1 = (((max_y / cell).ceil()) as isize).clamp(0, res as isize) as usize;
    let inv_area = 1.0 / (cell * cell);
    for iy in iy0..iy1 {
        for ix in ix0..ix1 {
            let x0 = ix as f64 * cell;
            let y0 = iy as f64 * cell;
            let a = poly_cell_area(poly, x0, x0 + cell, y0, y0 + cell);
            if a > 0.0 {
                grid[iy * res + ix] += a * inv_area;
            }
        }
    }
}

fn disc_polygon(center: Vec2, radius: f64, segments: usize) -> Vec<Vec2> {
    (0..segments)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
            center + Vec2::new(t.cos(), t.sin()) * radius
        })
        .collect()
}

/// Rasterize each object onto its own occupancy channel, zero masked
/// channels, and flatten channel-major.
pub fn embed(state: &EnvState, mask: &ObjectMask, params: &EmbedParams) -> Embedding {
    let res = params.grid_res;
    let channels = n_channels(state.kind());
    debug_assert_eq!(mask.channels(), channels, "mask sized for this variant");
    let mut values = vec![0.0; channels * res * res];

    match &state.scene {
        Scene::PushT { tee } => {
            if mask.keeps(0) {
                let grid = &mut values[0..res * res];
                for corners in tee_corners(tee, &params.tee) {
                    splat_polygon(grid, res, &corners);
                }
            }
        }
        Scene::Cubes { cubes } => {
            for (i, c) in cubes.iter().enumerate() {
                if mask.keeps(i) {
                    let grid = &mut values[i * res * res..(i + 1) * res * res];
                    splat_polygon(grid, res, &disc_polygon(*c, params.cube_radius, params.disc_segments));
                }
            }
        }
        Scene::Chain { links } => {
            if mask.keeps(0) {
                let grid = &mut values[0..res * res];
                for l in links {
                    splat_polygon(
                        grid,
                        res,
                        &disc_polygon(*l, params.chain_disc_radius, params.disc_segments),
                    );
                }
            }
        }
    }
    // Overlapping splats (chain links) can exceed unit coverage; clamp.
    for v in &mut values {
        *v = v.min(1.0);
    }
    Embedding {
        values,
        channels,
        grid_res: res,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose2;
    use approx::assert_abs_diff_eq;

    fn tee_state(x: f64, y: f64, theta: f64) -> EnvState {
        EnvState::push_t(Vec2::new(0.1, 0.1), Pose2::new(Vec2::new(x, y), theta))
    }

    #[test]
    fn identical_states_identical_embeddings() {
        let p = EmbedParams::default();
        let m = ObjectMask::all(1);
        let a = embed(&tee_state(0.5, 0.5, 0.7), &m, &p);
        let b = embed(&tee_state(0.5, 0.5, 0.7), &m, &p);
        assert_eq!(a, b);
    }

    #[test]
    fn entries_in_unit_interval_and_mass_matches_area() {
        let p = EmbedParams::default();
        let m = ObjectMask::all(1);
        let e = embed(&tee_state(0.47, 0.53, 0.9), &m, &p);
        let cell_area = 1.0 / (p.grid_res * p.grid_res) as f64;
        let mass: f64 = e.values.iter().sum::<f64>() * cell_area;
        let tee_area = 0.12 * 0.03 + 0.03 * 0.09;
        assert_abs_diff_eq!(mass, tee_area, epsilon = 1e-9);
        for &v in &e.values {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn mask_zeroes_excluded_channels() {
        let p = EmbedParams::default();
        let cubes_a = [Vec2::new(0.3, 0.3), Vec2::new(0.5, 0.5), Vec2::new(0.7, 0.7)];
        let mut cubes_b = cubes_a;
        cubes_b[1] = Vec2::new(0.55, 0.45); // only object 1 differs
        let sa = EnvState::cubes(Vec2::new(0.1, 0.1), cubes_a);
        let sb = EnvState::cubes(Vec2::new(0.1, 0.1), cubes_b);
        let mask = ObjectMask::subset(3, &[0, 2]).unwrap();
        let ea = embed(&sa, &mask, &p);
        let eb = embed(&sb, &mask, &p);
        assert_eq!(ea, eb, "masked channel must not leak");
        // Unmasked embeddings do differ.
        let full = ObjectMask::all(3);
        assert_ne!(embed(&sa, &full, &p), embed(&sb, &full, &p));
    }

    #[test]
    fn one_cell_translation_shifts_embedding() {
        let p = EmbedParams::default();
        let m = ObjectMask::all(1);
        let cell = 1.0 / p.grid_res as f64;
        let a = embed(&tee_state(0.5, 0.5, 0.3), &m, &p);
        let b = embed(&tee_state(0.5 + cell, 0.5, 0.3), &m, &p);
        let res = p.grid_res;
        for iy in 0..res {
            for ix in 0..res - 1 {
                assert_abs_diff_eq!(a.cell(0, ix, iy), b.cell(0, ix + 1, iy), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(matches!(ObjectMask::subset(3, &[]), Err(MaskError::Empty)));
        assert!(matches!(
            ObjectMask::subset(3, &[5]),
            Err(MaskError::OutOfRange { .. })
        ));
    }

    #[test]
    fn chain_embedding_covers_links() {
        let p = EmbedParams::default();
        let links: Vec<Vec2> = (0..12)
            .map(|i| Vec2::new(0.35 + i as f64 * 0.025, 0.5))
            .collect();
        let s = EnvState::chain(Vec2::new(0.1, 0.1), links);
        let e = embed(&s, &ObjectMask::all(1), &p);
        assert!(e.values.iter().sum::<f64>() > 0.0);
        assert!(e.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
