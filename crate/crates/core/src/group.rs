//! Orbit enumeration and growth statistics for finitely generated groups.

use std::borrow::Cow;
use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hyperbolic::{
    distance, spatial_distance, validate_isometry, GeometryError, Isometry, Point, Tolerances,
};
use crate::stats::{linear_fit, LinearFit};

#[derive(Debug, Error)]
pub enum GroupError {
    #[error("generator {index} is not an isometry: {source}")]
    InvalidGenerator {
        index: usize,
        source: GeometryError,
    },
    #[error("generator {0} has the wrong dimension")]
    Dimension(usize),
    #[error("spec needs at least one generator")]
    NoGenerators,
    #[error("element budget {cap} exceeded at radius {radius}")]
    Budget {
        cap: usize,
        radius: f64,
        partial: Box<OrbitBall>,
    },
    #[error("window [{lo}, {hi}] holds {count} sample radii, need at least 5")]
    Window { lo: f64, hi: f64, count: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid builtin parameters: {0}")]
    Builtin(String),
}

/// A finitely generated group given by generator matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSpec {
    pub dim: usize,
    pub generators: Vec<Isometry>,
    pub label: String,
    pub freeness_hint: bool,
}

impl GroupSpec {
    pub fn new(
        dim: usize,
        generators: Vec<Isometry>,
        label: impl Into<String>,
        freeness_hint: bool,
        tol: &Tolerances,
    ) -> Result<Self, GroupError> {
        if generators.is_empty() {
            return Err(GroupError::NoGenerators);
        }
        let mut gens = Vec::with_capacity(generators.len());
        for (index, g) in generators.into_iter().enumerate() {
            if g.dim() != dim {
                return Err(GroupError::Dimension(index));
            }
            if !validate_isometry(g.matrix(), dim + 1, tol.iso) {
                return Err(GroupError::InvalidGenerator {
                    index,
                    source: GeometryError::IsometryDrift {
                        drift: crate::hyperbolic::form_defect(g.matrix(), dim + 1),
                        tol: tol.iso,
                    },
                });
            }
            gens.push(g.with_word(vec![index as i32 + 1]));
        }
        Ok(Self {
            dim,
            generators: gens,
            label: label.into(),
            freeness_hint,
        })
    }

    /// Generators followed by inverses in the order `1, -1, 2, -2, ...`.
    pub fn letters(&self) -> Vec<Isometry> {
        self.generators
            .iter()
            .flat_map(|g| [g.clone(), g.inverse()])
            .collect()
    }

    pub fn max_generator_norm(&self) -> f64 {
        self.generators.iter().map(|g| g.norm()).fold(0.0, f64::max)
    }

    /// Evaluates a word in the generators.
    pub fn evaluate(&self, word: &[i32], tol: &Tolerances) -> Result<Isometry, GroupError> {
        let mut g = Isometry::identity(self.dim);
        for &l in word {
            let idx = l.unsigned_abs() as usize - 1;
            let gen = self.generators.get(idx).ok_or(GroupError::Dimension(idx))?;
            let s = if l > 0 { gen.clone() } else { gen.inverse() };
            g = g.compose(&s, tol)?;
        }
        Ok(g)
    }
}

/// Cyclic group generated by a translation of length `t`.
pub fn cyclic(t: f64, tol: &Tolerances) -> Result<GroupSpec, GroupError> {
    if !(t > 0.0) {
        return Err(GroupError::Builtin(format!("translation {t} must be positive")));
    }
    GroupSpec::new(2, vec![Isometry::boost(2, 1, t)], format!("cyclic({t})"), true, tol)
}

/// One Schottky pairing: the boundary disk of angular radius `radius` around
/// `center` is paired with the antipodal disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchottkyCircle {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Schottky group from boundary circle data. Each pairing becomes a
/// translation through `x0` along the center direction by `2 artanh(cos r)`.
pub fn schottky(circles: &[SchottkyCircle], tol: &Tolerances) -> Result<GroupSpec, GroupError> {
    let Some(first) = circles.first() else {
        return Err(GroupError::Builtin("no circles".into()));
    };
    let d = first.center.len();
    if !(2..=3).contains(&d) {
        return Err(GroupError::Builtin(format!("dimension {d} unsupported")));
    }
    let mut disks: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in circles {
        if c.center.len() != d {
            return Err(GroupError::Builtin("mixed circle dimensions".into()));
        }
        if !(c.radius > 0.0 && c.radius < std::f64::consts::FRAC_PI_2) {
            return Err(GroupError::Builtin(format!("radius {} out of (0, pi/2)", c.radius)));
        }
        let n = c.center.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(GroupError::Builtin("zero center".into()));
        }
        let u: Vec<f64> = c.center.iter().map(|x| x / n).collect();
        disks.push((u.iter().map(|x| -x).collect(), c.radius));
        disks.push((u, c.radius));
    }
    for i in 0..disks.len() {
        for j in i + 1..disks.len() {
            let dot: f64 = disks[i].0.iter().zip(&disks[j].0).map(|(a, b)| a * b).sum();
            let angle = dot.clamp(-1.0, 1.0).acos();
            if angle <= disks[i].1 + disks[j].1 {
                return Err(GroupError::Builtin(format!(
                    "disks {i} and {j} overlap (angle {angle:.4})"
                )));
            }
        }
    }
    let gens = circles
        .iter()
        .map(|c| {
            let len = 2.0 * c.radius.cos().atanh();
            translation_along(&c.center, len, tol)
        })
        .collect::<Result<Vec<_>, _>>()?;
    GroupSpec::new(d, gens, format!("schottky({} circles)", circles.len()), true, tol)
}

/// Symmetric Schottky group: `k` translations of length `len` along axes
/// evenly spaced in the plane.
pub fn symmetric_schottky(k: usize, len: f64, tol: &Tolerances) -> Result<GroupSpec, GroupError> {
    if k == 0 || !(len > 0.0) {
        return Err(GroupError::Builtin("need k >= 1 and positive length".into()));
    }
    let radius = (len / 2.0).tanh().acos();
    let circles: Vec<SchottkyCircle> = (0..k)
        .map(|i| {
            let phi = std::f64::consts::PI * i as f64 / k as f64;
            SchottkyCircle {
                center: vec![phi.cos(), phi.sin()],
                radius,
            }
        })
        .collect();
    let mut spec = schottky(&circles, tol)?;
    spec.label = format!("schottky(k={k}, len={len})");
    Ok(spec)
}

/// Commutator subgroup of the modular group: free on two hyperbolic
/// generators of trace 3, with parabolic commutator. Finite covolume, not
/// convex-cocompact.
pub fn punctured_torus(tol: &Tolerances) -> Result<GroupSpec, GroupError> {
    let a = Isometry::from_sl2(1.0, 1.0, 1.0, 2.0);
    let b = Isometry::from_sl2(1.0, -1.0, -1.0, 2.0);
    GroupSpec::new(2, vec![a, b], "punctured-torus", true, tol)
}

fn translation_along(dir: &[f64], len: f64, tol: &Tolerances) -> Result<Isometry, GroupError> {
    let d = dir.len();
    let boost = Isometry::boost(d, 1, len);
    let rot = rotation_to(dir, tol)?;
    Ok(rot.compose(&boost, tol)?.compose(&rot.inverse(), tol)?)
}

/// A rotation fixing `x0` taking the first axis to `dir`.
fn rotation_to(dir: &[f64], tol: &Tolerances) -> Result<Isometry, GroupError> {
    let d = dir.len();
    let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u: Vec<f64> = dir.iter().map(|x| x / n).collect();
    if d == 2 {
        return Ok(Isometry::rotation(2, 1, 2, u[1].atan2(u[0])));
    }
    // d = 3: polar angle from axis 1, then azimuth around axis 1.
    let polar = u[0].clamp(-1.0, 1.0).acos();
    let azimuth = u[2].atan2(u[1]);
    let r1 = Isometry::rotation(3, 1, 2, polar);
    let r2 = Isometry::rotation(3, 2, 3, azimuth);
    Ok(r2.compose(&r1, tol)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DedupMode {
    #[default]
    OrbitPoint,
    Matrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnumerateConfig {
    pub dedup_tol: f64,
    /// Defaults to twice the largest generator norm.
    pub prune_margin: Option<f64>,
    pub max_elements: usize,
    pub dedup_mode: DedupMode,
    pub tol: Tolerances,
}

impl Default for EnumerateConfig {
    fn default() -> Self {
        Self {
            dedup_tol: 1e-7,
            prune_margin: None,
            max_elements: 4_000_000,
            dedup_mode: DedupMode::OrbitPoint,
            tol: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BallElement {
    pub iso: Isometry,
    pub norm: f64,
}

/// The truncated orbit `{g : ||g|| < R}`, one representative per orbit point,
/// in shortlex order of representative words.
#[derive(Clone, Serialize, Deserialize)]
pub struct OrbitBall {
    pub radius: f64,
    pub elements: Vec<BallElement>,
    pub dedup_tol: f64,
    pub prune_margin: f64,
    pub complete: bool,
    /// Distinct reduced words that landed on an already seen orbit point.
    pub coincidences: usize,
    #[serde(skip)]
    by_norm: Vec<usize>,
}

impl std::fmt::Debug for OrbitBall {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OrbitBall")
            .field("radius", &self.radius)
            .field("len", &self.elements.len())
            .field("complete", &self.complete)
            .field("coincidences", &self.coincidences)
            .finish()
    }
}

impl OrbitBall {
    /// Wraps an explicit element list (used for truncated subsets).
    pub fn from_elements(radius: f64, elements: Vec<BallElement>, dedup_tol: f64) -> Self {
        let mut ball = Self {
            radius,
            elements,
            dedup_tol,
            prune_margin: 0.0,
            complete: true,
            coincidences: 0,
            by_norm: Vec::new(),
        };
        ball.index();
        ball
    }

    fn index(&mut self) {
        let mut idx: Vec<usize> = (0..self.elements.len()).collect();
        idx.sort_by(|&a, &b| {
            self.elements[a]
                .norm
                .total_cmp(&self.elements[b].norm)
                .then(a.cmp(&b))
        });
        self.by_norm = idx;
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Indices sorted by ascending norm, ties in enumeration order.
    pub fn norm_order(&self) -> Cow<'_, [usize]> {
        if self.by_norm.len() != self.elements.len() {
            // deserialized balls skip the index
            let mut idx: Vec<usize> = (0..self.elements.len()).collect();
            idx.sort_by(|&a, &b| self.elements[a].norm.total_cmp(&self.elements[b].norm));
            return Cow::Owned(idx);
        }
        Cow::Borrowed(&self.by_norm)
    }

    pub fn norms(&self) -> Vec<f64> {
        self.elements.iter().map(|e| e.norm).collect()
    }

    /// Restriction to norms below `r`.
    pub fn restrict(&self, r: f64) -> OrbitBall {
        let elements = self
            .elements
            .iter()
            .filter(|e| e.norm < r)
            .cloned()
            .collect();
        let mut ball = OrbitBall::from_elements(r.min(self.radius), elements, self.dedup_tol);
        ball.prune_margin = self.prune_margin;
        ball.complete = self.complete;
        ball
    }

    /// Writes `word, norm, x_0..x_d` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.elements.first().map(|e| e.iso.dim()).unwrap_or(0);
        let mut header = vec!["word".to_string(), "norm".to_string()];
        header.extend((0..=d).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for e in &self.elements {
            let p = e.iso.orbit_point();
            let mut row = vec![format_word(e.iso.word()), format!("{:.12}", e.norm)];
            row.extend(p.coords().iter().map(|c| format!("{c:.12e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn format_word(w: &[i32]) -> String {
    w.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ")
}

/// Relative coordinate gap, `max_i |p_i - q_i| / max(1, p_0)`. To first order
/// this is the hyperbolic displacement, without the cancellation that
/// `arcosh(-<p,q>)` suffers far from `x0`.
pub fn coordinate_gap(p: &Point, q: &Point) -> f64 {
    let scale = p.coords()[0].max(q.coords()[0]).max(1.0);
    p.coords()
        .iter()
        .zip(q.coords())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}

fn matrix_gap(a: &Isometry, b: &Isometry) -> f64 {
    let scale = a.entry(0, 0).max(b.entry(0, 0)).max(1.0);
    a.matrix()
        .iter()
        .zip(b.matrix())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

const NORM_BUCKET: f64 = 1e-4;

struct DedupIndex {
    buckets: HashMap<i64, Vec<usize>>,
}

impl DedupIndex {
    fn find(&self, stored: &[BallElement], cand: &Isometry, norm: f64, cfg: &EnumerateConfig) -> Option<usize> {
        let key = (norm / NORM_BUCKET).floor() as i64;
        let n = cand.size();
        for k in key - 1..=key + 1 {
            let Some(list) = self.buckets.get(&k) else {
                continue;
            };
            for &i in list {
                let other = &stored[i].iso;
                let hit = match cfg.dedup_mode {
                    DedupMode::OrbitPoint => {
                        let scale = cand.entry(0, 0).max(other.entry(0, 0)).max(1.0);
                        (0..n).all(|r| (cand.entry(r, 0) - other.entry(r, 0)).abs() < cfg.dedup_tol * scale)
                    }
                    DedupMode::Matrix => matrix_gap(other, cand) < cfg.dedup_tol,
                };
                if hit {
                    return Some(i);
                }
            }
        }
        None
    }

    fn insert(&mut self, norm: f64, i: usize) {
        self.buckets
            .entry((norm / NORM_BUCKET).floor() as i64)
            .or_default()
            .push(i);
    }
}

/// Breadth-first enumeration of `B_R` over reduced words in the generators and
/// their inverses. Words whose norm reaches `R + prune_margin` are not
/// extended; a word landing on an already seen orbit point is dropped, so the
/// shortlex-first word represents each orbit point.
pub fn enumerate_ball(spec: &GroupSpec, radius: f64, cfg: &EnumerateConfig) -> Result<OrbitBall, GroupError> {
    let margin = cfg
        .prune_margin
        .unwrap_or(2.0 * spec.max_generator_norm());
    let cutoff = radius + margin;
    let letters = spec.letters();
    let letter_ids: Vec<i32> = (0..spec.generators.len() as i32)
        .flat_map(|i| [i + 1, -(i + 1)])
        .collect();
    let id = Isometry::identity(spec.dim);
    let mut stored = vec![BallElement { norm: 0.0, iso: id }];
    let mut index = DedupIndex {
        buckets: HashMap::new(),
    };
    index.insert(0.0, 0);
    let mut frontier = vec![0usize];
    let mut coincidences = 0usize;
    let mut complete = true;

    while !frontier.is_empty() {
        let candidates: Vec<Vec<Option<(Isometry, f64)>>> = frontier
            .par_iter()
            .map(|&i| {
                let g = &stored[i].iso;
                let last = g.word().last().copied();
                letters
                    .iter()
                    .zip(&letter_ids)
                    .map(|(s, &lid)| {
                        if last == Some(-lid) {
                            return None;
                        }
                        let h = g.compose(s, &cfg.tol).ok()?;
                        let n = h.norm();
                        (n < cutoff).then_some((h, n))
                    })
                    .collect()
            })
            .collect();
        let mut next = Vec::new();
        'commit: for row in candidates {
            for (h, n) in row.into_iter().flatten() {
                if index.find(&stored, &h, n, cfg).is_some() {
                    coincidences += 1;
                    continue;
                }
                let i = stored.len();
                index.insert(n, i);
                stored.push(BallElement { iso: h, norm: n });
                next.push(i);
                if stored.len() > cfg.max_elements {
                    complete = false;
                    break 'commit;
                }
            }
        }
        if !complete {
            break;
        }
        frontier = next;
    }

    let elements: Vec<BallElement> = stored.into_iter().filter(|e| e.norm < radius).collect();
    let mut ball = OrbitBall {
        radius,
        elements,
        dedup_tol: cfg.dedup_tol,
        prune_margin: margin,
        complete,
        coincidences,
        by_norm: Vec::new(),
    };
    ball.index();
    if !complete {
        return Err(GroupError::Budget {
            cap: cfg.max_elements,
            radius,
            partial: Box::new(ball),
        });
    }
    Ok(ball)
}

/// Truncated Poincare series `sum exp(-s ||g||)`, summed in ascending norm.
pub fn poincare_partial(ball: &OrbitBall, s: f64) -> f64 {
    ball.norm_order()
        .iter()
        .map(|&i| (-s * ball.elements[i].norm).exp())
        .sum()
}

/// Same series over a bare list of norms.
pub fn poincare_of_norms(norms: &[f64], s: f64) -> f64 {
    let mut sorted = norms.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().map(|n| (-s * n).exp()).sum()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CriticalExponentEstimate {
    pub delta_hat: f64,
    pub window: (f64, f64),
    pub residual: f64,
    pub counts: Vec<(f64, usize)>,
    pub degenerate: bool,
}

/// Slope of `log #{norm < r}` against `r` over `[window_fraction * R, R]`,
/// sampled at unit-spaced radii.
pub fn exponent_from_norms(
    norms: &[f64],
    radius: f64,
    window_fraction: f64,
) -> Result<CriticalExponentEstimate, GroupError> {
    let mut sorted = norms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let count_below = |r: f64| sorted.partition_point(|&n| n < r);
    let mut radii: Vec<f64> = (1..).map(|k| k as f64).take_while(|&r| r <= radius).collect();
    if radii.last().is_none_or(|&r| r < radius) {
        radii.push(radius);
    }
    let counts: Vec<(f64, usize)> = radii.iter().map(|&r| (r, count_below(r))).collect();
    let lo = window_fraction * radius;
    let window: Vec<(f64, usize)> = counts
        .iter()
        .copied()
        .filter(|&(r, c)| r >= lo - 1e-12 && c > 0)
        .collect();
    if window.len() < 5 {
        return Err(GroupError::Window {
            lo,
            hi: radius,
            count: window.len(),
        });
    }
    let xs: Vec<f64> = window.iter().map(|w| w.0).collect();
    let ys: Vec<f64> = window.iter().map(|w| (w.1 as f64).ln()).collect();
    let degenerate = window.iter().all(|w| w.1 == window[0].1);
    let (delta_hat, residual) = if degenerate {
        (0.0, 0.0)
    } else {
        let LinearFit {
            slope,
            max_residual,
            ..
        } = linear_fit(&xs, &ys);
        (slope.max(0.0), max_residual)
    };
    Ok(CriticalExponentEstimate {
        delta_hat,
        window: (lo, radius),
        residual,
        counts,
        degenerate,
    })
}

pub fn estimate_critical_exponent(
    spec: &GroupSpec,
    radius: f64,
    window_fraction: f64,
    cfg: &EnumerateConfig,
) -> Result<CriticalExponentEstimate, GroupError> {
    let ball = enumerate_ball(spec, radius, cfg)?;
    exponent_from_norms(&ball.norms(), radius, window_fraction)
}

/// Greedy maximal `r`-separated subset in ascending-norm order; returns
/// indices into `elements`.
pub fn separated_net(elements: &[BallElement], r: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..elements.len()).collect();
    order.sort_by(|&a, &b| elements[a].norm.total_cmp(&elements[b].norm).then(a.cmp(&b)));
    let points: Vec<Point> = elements.iter().map(|e| e.iso.orbit_point()).collect();
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let ni = elements[i].norm;
        // kept is norm-sorted; only those with norm >= ni - r can be within r
        let start = kept.partition_point(|&k| elements[k].norm < ni - r);
        let close = kept[start..]
            .iter()
            .any(|&k| distance(&points[k], &points[i]) <= r);
        if !close {
            kept.push(i);
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitDistance {
    pub value: f64,
    pub nearest: usize,
    /// False when an orbit point outside the ball could be nearer.
    pub exact: bool,
}

/// `min_{g in ball} d(p, g x0)`.
pub fn orbit_distance(p: &Point, ball: &OrbitBall) -> OrbitDistance {
    let order = ball.norm_order();
    let r = p.norm();
    let pos = order.partition_point(|&i| ball.elements[i].norm < r);
    let mut best = f64::INFINITY;
    let mut nearest = 0;
    let (mut lo, mut hi) = (pos, pos);
    loop {
        let mut progressed = false;
        if hi < order.len() {
            let i = order[hi];
            if ball.elements[i].norm - r < best {
                let d = distance(p, &ball.elements[i].iso.orbit_point());
                if d < best {
                    best = d;
                    nearest = i;
                }
                hi += 1;
                progressed = true;
            }
        }
        if lo > 0 {
            let i = order[lo - 1];
            if r - ball.elements[i].norm < best {
                let d = distance(p, &ball.elements[i].iso.orbit_point());
                if d < best {
                    best = d;
                    nearest = i;
                }
                lo -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    OrbitDistance {
        value: best,
        nearest,
        exact: best <= ball.radius - r + 1e-12,
    }
}

/// Norm-sorted orbit points of a ball for repeated orbit-distance queries.
pub struct OrbitIndex<'a> {
    ball: &'a OrbitBall,
    order: Vec<usize>,
    norms: Vec<f64>,
    spatial: Vec<f64>,
    dim: usize,
}

impl<'a> OrbitIndex<'a> {
    pub fn new(ball: &'a OrbitBall) -> Self {
        let order = ball.norm_order().into_owned();
        let dim = ball.elements.first().map_or(0, |e| e.iso.dim());
        let mut spatial = Vec::with_capacity(order.len() * dim);
        for &i in &order {
            let g = &ball.elements[i].iso;
            spatial.extend((1..=dim).map(|r| g.entry(r, 0)));
        }
        let norms = order.iter().map(|&i| ball.elements[i].norm).collect();
        Self { ball, order, norms, spatial, dim }
    }

    pub fn ball(&self) -> &OrbitBall {
        self.ball
    }

    /// Same result as [`orbit_distance`].
    pub fn distance(&self, p: &Point) -> OrbitDistance {
        let r = p.norm();
        let u = p.spatial();
        let pos = self.norms.partition_point(|&n| n < r);
        let mut best = f64::INFINITY;
        let mut nearest = 0;
        let d = self.dim;
        let mut visit = |k: usize, best: &mut f64| {
            let dist = spatial_distance(u, &self.spatial[k * d..(k + 1) * d]);
            if dist < *best {
                *best = dist;
                nearest = self.order[k];
            }
        };
        let mut hi = pos;
        let mut lo = pos;
        loop {
            let mut progressed = false;
            if hi < self.norms.len() && self.norms[hi] - r < best {
                visit(hi, &mut best);
                hi += 1;
                progressed = true;
            }
            if lo > 0 && r - self.norms[lo - 1] < best {
                visit(lo - 1, &mut best);
                lo -= 1;
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
        OrbitDistance {
            value: best,
            nearest,
            exact: best <= self.ball.radius - r + 1e-12,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn trivial_group_ball_is_identity() {
        let spec = GroupSpec::new(2, vec![Isometry::identity(2)], "trivial", true, &tol()).unwrap();
        let ball = enumerate_ball(&spec, 5.0, &EnumerateConfig::default()).unwrap();
        assert_eq!(ball.len(), 1);
        assert_eq!(ball.elements[0].norm, 0.0);
    }

    #[test]
    fn cyclic_ball_has_seven_elements() {
        let spec = cyclic(1.0, &tol()).unwrap();
        let ball = enumerate_ball(&spec, 3.5, &EnumerateConfig::default()).unwrap();
        assert_eq!(ball.len(), 7);
        let mut norms = ball.norms();
        norms.sort_by(f64::total_cmp);
        let expected = [0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        for (a, b) in norms.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        // shortlex order: id, g, G, gg, GG, ...
        let words: Vec<_> = ball.elements.iter().map(|e| e.iso.word().to_vec()).collect();
        assert_eq!(words[1], vec![1]);
        assert_eq!(words[2], vec![-1]);
        assert_eq!(words[3], vec![1, 1]);
    }

    #[test]
    fn poincare_examples() {
        let spec = cyclic(1.0, &tol()).unwrap();
        let ball = enumerate_ball(&spec, 6.5, &EnumerateConfig::default()).unwrap();
        assert_eq!(poincare_partial(&ball, 0.0), 13.0);
        let s = 0.7f64;
        let oracle = 1.0 + 2.0 * (1..=6).map(|k| (-s * k as f64).exp()).sum::<f64>();
        assert!((poincare_partial(&ball, s) - oracle).abs() < 1e-12);
        let id_only = ball.restrict(0.5);
        assert_eq!(poincare_partial(&id_only, 3.0), 1.0);
    }

    #[test]
    fn cyclic_exponent_small() {
        let spec = cyclic(1.0, &tol()).unwrap();
        let est = estimate_critical_exponent(&spec, 40.0, 0.6, &EnumerateConfig::default()).unwrap();
        assert!(est.delta_hat < 0.05, "{}", est.delta_hat);
    }

    #[test]
    fn window_too_small_is_error() {
        let r = exponent_from_norms(&[0.0, 1.0], 4.0, 0.6);
        assert!(matches!(r, Err(GroupError::Window { .. })));
    }

    #[test]
    fn constant_counts_are_degenerate() {
        let est = exponent_from_norms(&[0.0], 10.0, 0.5).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.delta_hat, 0.0);
    }

    #[test]
    fn separated_net_examples() {
        let spec = cyclic(1.0, &tol()).unwrap();
        let ball = enumerate_ball(&spec, 6.5, &EnumerateConfig::default()).unwrap();
        assert_eq!(ball.len(), 13);
        assert_eq!(separated_net(&ball.elements, 0.0).len(), 13);
        let kept = separated_net(&ball.elements, 1.5);
        let mut norms: Vec<f64> = kept.iter().map(|&i| ball.elements[i].norm.round()).collect();
        norms.sort_by(f64::total_cmp);
        assert_eq!(norms, vec![0.0, 2.0, 2.0, 4.0, 4.0, 6.0, 6.0]);
        assert_eq!(separated_net(&ball.elements[3..4], 100.0), vec![0]);
    }

    #[test]
    fn orbit_distance_examples() {
        let spec = symmetric_schottky(2, 2.0, &tol()).unwrap();
        let ball = enumerate_ball(&spec, 8.0, &EnumerateConfig::default()).unwrap();
        let x0 = Point::origin(2);
        assert!(orbit_distance(&x0, &ball).value < 1e-12);
        for e in ball.elements.iter().take(20) {
            assert!(orbit_distance(&e.iso.orbit_point(), &ball).value < 1e-9);
        }
        let p = spec.generators[0].orbit_point();
        let q = spec.generators[1].orbit_point();
        let mid = crate::hyperbolic::geodesic_point(&p, &q, 0.5 * distance(&p, &q)).unwrap();
        let brute = ball
            .elements
            .iter()
            .map(|e| distance(&mid, &e.iso.orbit_point()))
            .fold(f64::INFINITY, f64::min);
        let got = orbit_distance(&mid, &ball);
        assert!((got.value - brute).abs() < 1e-12);
        assert!(got.exact);
        let index = OrbitIndex::new(&ball);
        for t in [0.0_f64, 0.7, 1.9, 3.3] {
            let p = crate::hyperbolic::geodesic_point(&x0, &mid, t.min(mid.norm())).unwrap();
            assert_eq!(index.distance(&p), orbit_distance(&p, &ball));
        }
    }

    #[test]
    fn schottky_validation_rejects_overlap() {
        let circles = vec![
            SchottkyCircle { center: vec![1.0, 0.0], radius: 0.9 },
            SchottkyCircle { center: vec![0.0, 1.0], radius: 0.9 },
        ];
        assert!(matches!(schottky(&circles, &tol()), Err(GroupError::Builtin(_))));
        assert!(symmetric_schottky(2, 1.5, &tol()).is_err());
        assert!(symmetric_schottky(2, 2.0, &tol()).is_ok());
    }

    #[test]
    fn schottky_3d_generators_are_translations() {
        let circles = vec![
            SchottkyCircle { center: vec![1.0, 0.0, 0.0], radius: 0.5 },
            SchottkyCircle { center: vec![0.0, 0.6, 0.8], radius: 0.5 },
        ];
        let spec = schottky(&circles, &tol()).unwrap();
        let expected = 2.0 * 0.5f64.cos().atanh();
        for g in &spec.generators {
            assert!((g.norm() - expected).abs() < 1e-12);
        }
        let dir = crate::hyperbolic::boundary_direction(&spec.generators[1].orbit_point()).unwrap();
        assert!((dir.direction()[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn punctured_torus_commutator_is_parabolic() {
        let spec = punctured_torus(&tol()).unwrap();
        let c = spec.evaluate(&[1, 2, -1, -2], &tol()).unwrap();
        // trace of the SO(2,1) image of a parabolic is 3
        let tr: f64 = (0..3).map(|i| c.entry(i, i)).sum();
        assert!((tr - 3.0).abs() < 1e-9, "{tr}");
    }

    #[test]
    fn budget_error_carries_partial() {
        let spec = symmetric_schottky(2, 2.0, &tol()).unwrap();
        let cfg = EnumerateConfig {
            max_elements: 50,
            ..Default::default()
        };
        match enumerate_ball(&spec, 12.0, &cfg) {
            Err(GroupError::Budget { partial, .. }) => {
                assert!(!partial.complete);
                assert!(partial.len() <= 51);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let spec = cyclic(1.0, &tol()).unwrap();
        let ball = enumerate_ball(&spec, 2.5, &EnumerateConfig::default()).unwrap();
        let mut buf = Vec::new();
        ball.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "word,norm,x0,x1,x2");
        assert_eq!(lines.len(), 6);
        assert!(lines[2].starts_with("1,"));
    }

    /// Plain depth-first count of reduced words with norm below `r`, using
    /// raw 3x3 products and no orbit-point deduplication.
    fn reduced_word_count(gens: &[[[f64; 3]; 3]], r: f64) -> usize {
        fn mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
            let mut c = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
                }
            }
            c
        }
        fn walk(g: &[[f64; 3]; 3], last: Option<usize>, letters: &[[[f64; 3]; 3]], r: f64) -> usize {
            let mut n = 1;
            for (i, s) in letters.iter().enumerate() {
                if last.is_some_and(|l| l ^ 1 == i) {
                    continue;
                }
                let h = mul(g, s);
                if h[0][0].acosh() < r {
                    n += walk(&h, Some(i), letters, r);
                }
            }
            n
        }
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        walk(&id, None, gens, r)
    }

    #[test]
    fn schottky_count_matches_reduced_words() {
        let spec = symmetric_schottky(2, 2.0, &tol()).unwrap();
        let letters: Vec<[[f64; 3]; 3]> = spec
            .letters()
            .iter()
            .map(|g| std::array::from_fn(|i| std::array::from_fn(|j| g.entry(i, j))))
            .collect();
        for r in [4.0, 7.0, 9.5] {
            let ball = enumerate_ball(&spec, r, &EnumerateConfig::default()).unwrap();
            assert_eq!(ball.len(), reduced_word_count(&letters, r), "radius {r}");
            assert_eq!(ball.coincidences, 0);
        }
    }
}
