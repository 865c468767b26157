//! Box-counting dimension of sampled limit sets, compared with the growth
//! exponent of the same orbit ball.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{enumerate_ball, exponent_from_norms, EnumerateConfig, GroupError, GroupSpec, OrbitBall};
use crate::hyperbolic::{boundary_direction, BoundaryPoint};
use crate::stats::linear_fit;

#[derive(Debug, Error)]
pub enum DimensionError {
    #[error("no orbit point at norm >= {cutoff}")]
    EmptySample { cutoff: f64 },
    #[error("cutoff {cutoff} is not below the ball radius {radius}")]
    Cutoff { cutoff: f64, radius: f64 },
    #[error("scale {scale} is not above the sample resolution {resolution}")]
    Resolution { scale: f64, resolution: f64 },
    #[error("need at least {need} scales in the fit window, got {got}")]
    Scales { need: usize, got: usize },
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// Boundary directions of orbit points, standing in for the limit set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionSample {
    pub directions: Vec<BoundaryPoint>,
    pub source: String,
    pub norm_cutoff: f64,
    pub min_norm: f64,
    pub theta_dedup: f64,
    /// Below this angular scale the sample no longer tracks the limit set:
    /// the larger of the dedup angle and `exp(-horizon)`.
    pub resolution: f64,
}

impl DirectionSample {
    pub fn dim(&self) -> usize {
        self.directions.first().map_or(0, BoundaryPoint::dim)
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

fn angle(u: &[f64], v: &[f64]) -> f64 {
    // chord-based, accurate for small angles
    let chord = u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    2.0 * (0.5 * chord).min(1.0).asin()
}

/// Directions of all orbit points with norm at least `cutoff`, greedily
/// thinned so that kept directions are more than `theta_dedup` apart.
pub fn sample_limit_directions(
    ball: &OrbitBall,
    cutoff: f64,
    theta_dedup: f64,
) -> Result<DirectionSample, DimensionError> {
    if cutoff >= ball.radius {
        return Err(DimensionError::Cutoff { cutoff, radius: ball.radius });
    }
    let order = ball.norm_order();
    let mut kept: Vec<BoundaryPoint> = Vec::new();
    let mut cells: std::collections::HashMap<Vec<i64>, Vec<usize>> = std::collections::HashMap::new();
    let cell = |u: &[f64]| -> Vec<i64> { u.iter().map(|x| (x / theta_dedup.max(1e-300)).floor() as i64).collect() };
    let mut min_norm = f64::INFINITY;
    for &i in order.iter() {
        let e = &ball.elements[i];
        if e.norm < cutoff {
            continue;
        }
        let Ok(xi) = boundary_direction(&e.iso.orbit_point()) else {
            continue;
        };
        let key = cell(xi.direction());
        // chord <= angle, so neighbors within theta lie in adjacent cells
        let near = neighbors(&key).any(|k| {
            cells
                .get(&k)
                .is_some_and(|v| v.iter().any(|&j| angle(kept[j].direction(), xi.direction()) <= theta_dedup))
        });
        if !near {
            min_norm = min_norm.min(e.norm);
            cells.entry(key).or_default().push(kept.len());
            kept.push(xi);
        }
    }
    if kept.is_empty() {
        return Err(DimensionError::EmptySample { cutoff });
    }
    let horizon = ball.radius - ball.prune_margin;
    Ok(DirectionSample {
        directions: kept,
        source: format!("orbit ball R = {}, norm >= {cutoff}", ball.radius),
        norm_cutoff: cutoff,
        min_norm,
        theta_dedup,
        resolution: theta_dedup.max((-horizon).exp()),
    })
}

fn neighbors(key: &[i64]) -> impl Iterator<Item = Vec<i64>> + '_ {
    let n = 3usize.pow(key.len() as u32);
    (0..n).map(move |mut c| {
        key.iter()
            .map(|&k| {
                let off = (c % 3) as i64 - 1;
                c /= 3;
                k + off
            })
            .collect()
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxCountConfig {
    /// Random grid placements averaged per scale.
    pub n_rot: usize,
    pub seed: u64,
    /// Scales dropped from each end of the (descending) list before fitting.
    pub trim: usize,
}

impl Default for BoxCountConfig {
    fn default() -> Self {
        Self { n_rot: 8, seed: 0, trim: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxCountResult {
    /// Descending.
    pub scales: Vec<f64>,
    /// Occupied cells per scale, averaged over grid placements.
    pub counts: Vec<f64>,
    pub dim_hat: f64,
    pub fit_residual: f64,
    pub window: (f64, f64),
    pub label: String,
}

/// Random rotation (Gram-Schmidt on a random matrix) and grid offset.
fn placement(dim: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for r in &rows {
            let p: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            rows.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    let offset = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (rows, offset)
}

/// Occupied cubes of side `scale` in the ambient grid of the unit sphere.
/// Chordal and angular distances agree up to a factor `pi / 2`, so the
/// growth rate of the counts is the box dimension in the visual metric.
fn occupied(sample: &DirectionSample, scale: f64, rot: &[Vec<f64>], offset: &[f64]) -> usize {
    let cells: HashSet<Vec<i64>> = sample
        .directions
        .iter()
        .map(|xi| {
            rot.iter()
                .zip(offset)
                .map(|(r, o)| {
                    let x: f64 = r.iter().zip(xi.direction()).map(|(a, b)| a * b).sum();
                    (x / scale + o).floor() as i64
                })
                .collect()
        })
        .collect();
    cells.len()
}

pub fn box_count(
    sample: &DirectionSample,
    scales: &[f64],
    cfg: &BoxCountConfig,
) -> Result<BoxCountResult, DimensionError> {
    let mut scales = scales.to_vec();
    scales.sort_by(|a, b| b.total_cmp(a));
    if let Some(&s) = scales.iter().find(|&&s| s <= sample.resolution) {
        return Err(DimensionError::Resolution { scale: s, resolution: sample.resolution });
    }
    let window_len = scales.len().saturating_sub(2 * cfg.trim);
    if window_len < 2 {
        return Err(DimensionError::Scales { need: 2, got: window_len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let placements: Vec<_> = (0..cfg.n_rot.max(1)).map(|_| placement(sample.dim(), &mut rng)).collect();
    let mut counts: Vec<f64> = scales
        .par_iter()
        .map(|&s| {
            let total: usize = placements.iter().map(|(r, o)| occupied(sample, s, r, o)).sum();
            total as f64 / placements.len() as f64
        })
        .collect();
    // averaging over placements can break monotonicity by a fraction of a cell
    for i in 1..counts.len() {
        counts[i] = counts[i].max(counts[i - 1]);
    }
    let w = cfg.trim..cfg.trim + window_len;
    let xs: Vec<f64> = scales[w.clone()].iter().map(|s| -s.ln()).collect();
    let ys: Vec<f64> = counts[w.clone()].iter().map(|c| c.ln()).collect();
    let fit = linear_fit(&xs, &ys);
    Ok(BoxCountResult {
        window: (scales[w.end - 1], scales[w.start]),
        scales,
        counts,
        dim_hat: fit.slope.max(0.0),
        fit_residual: fit.max_residual,
        label: "box dimension".into(),
    })
}

/// `n` scales spaced geometrically from `largest` down to `smallest`.
pub fn geometric_scales(largest: f64, smallest: f64, n: usize) -> Vec<f64> {
    let r = (smallest / largest).ln() / (n.max(2) - 1) as f64;
    (0..n.max(2)).map(|k| largest * (r * k as f64).exp()).collect()
}

pub const MYRBERG_CAVEAT: &str = "finite samples cannot separate Myrberg and sublinearly conical points from \
     the conical limit set; only the box dimension of the orbit-direction sample is compared";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionComparison {
    pub label: String,
    pub radius: f64,
    pub delta_hat: f64,
    pub exponent_residual: f64,
    pub box_count: BoxCountResult,
    pub sample_size: usize,
    pub gap: f64,
    pub caveat: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DimensionConfig {
    pub window_fraction: f64,
    /// Sample cutoff as a fraction of the radius.
    pub cutoff_fraction: f64,
    pub largest_scale: f64,
    /// Smallest scale is `exp(-smallest_depth_fraction * R)`.
    pub smallest_depth_fraction: f64,
    pub n_scales: usize,
    pub boxes: BoxCountConfig,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        Self {
            window_fraction: 0.6,
            cutoff_fraction: 0.5,
            largest_scale: 0.5,
            smallest_depth_fraction: 0.6,
            n_scales: 10,
            boxes: BoxCountConfig::default(),
        }
    }
}

/// Growth exponent and box dimension from one enumeration of the ball.
pub fn dimension_vs_exponent(
    spec: &GroupSpec,
    radius: f64,
    cfg: &DimensionConfig,
    enumerate: &EnumerateConfig,
) -> Result<DimensionComparison, DimensionError> {
    let ball = enumerate_ball(spec, radius, enumerate)?;
    let exponent = exponent_from_norms(&ball.norms(), radius, cfg.window_fraction)?;
    let smallest = (-cfg.smallest_depth_fraction * radius).exp();
    let scales = geometric_scales(cfg.largest_scale, smallest, cfg.n_scales);
    let sample = sample_limit_directions(&ball, cfg.cutoff_fraction * radius, smallest / 4.0)?;
    let boxes = box_count(&sample, &scales, &cfg.boxes)?;
    Ok(DimensionComparison {
        label: spec.label.clone(),
        radius,
        delta_hat: exponent.delta_hat,
        exponent_residual: exponent.residual,
        gap: (boxes.dim_hat - exponent.delta_hat).abs(),
        sample_size: sample.len(),
        box_count: boxes,
        caveat: MYRBERG_CAVEAT.into(),
    })
}

/// Semigroup exponent against the ambient one, allowing `epsilon` and the
/// fit residuals of both estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentGap {
    pub delta_f: f64,
    pub delta_gamma: f64,
    pub epsilon: f64,
    pub residuals: f64,
    pub holds: bool,
}

pub fn exponent_gap(delta_f: f64, res_f: f64, delta_gamma: f64, res_gamma: f64, epsilon: f64) -> ExponentGap {
    let residuals = res_f + res_gamma;
    ExponentGap {
        delta_f,
        delta_gamma,
        epsilon,
        residuals,
        holds: delta_f >= delta_gamma - epsilon - residuals,
    }
}
