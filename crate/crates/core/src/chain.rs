//! (C, D)-chains: certification, shadowing by the endpoint geodesic, and
//! fellow-traveling of nearby geodesics.
//!
//! Chains can be given as raw points or as a list of step isometries with
//! `z_0 = x0` and `z_k = S_1 ... S_k x0`. The step form lets every quantity at
//! `z_i` be evaluated in the frame where `z_i = x0`, which keeps long chains
//! well inside floating-point range.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hyperbolic::{
    distance, geodesic_point, gromov_product, GeometryError, Isometry, Point, Tolerances,
};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("a chain needs at least 2 points, got {0}")]
    Arity(usize),
    #[error("parameter regime: {0}")]
    Regime(String),
    #[error("lemma counterexample: {} at index {} ({} vs bound {})", .0.kind, .0.index, .0.value, .0.bound)]
    Counterexample(Box<Counterexample>),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub c: f64,
    pub d: f64,
}

impl ChainParams {
    pub fn new(c: f64, d: f64) -> Result<Self, ChainError> {
        if !(c >= 0.0 && d >= 0.0) {
            return Err(ChainError::Regime(format!("C = {c}, D = {d} must be non-negative")));
        }
        Ok(Self { c, d })
    }

    /// Whether the shadowing consequences apply (`D >= 2C + 15`).
    pub fn lemma_regime(&self) -> bool {
        self.d >= 2.0 * self.c + 15.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationKind {
    Gromov,
    Gap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainCertificate {
    pub points: Vec<Point>,
    pub params: ChainParams,
    pub ok: bool,
    pub first_violation: Option<Violation>,
    /// Step isometries when the chain was built from steps.
    #[serde(skip)]
    steps: Option<Vec<Isometry>>,
}

impl ChainCertificate {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The chain as seen from `z_i`: an isometric copy with `z_i` near `x0`
    /// when steps are available, otherwise the raw points.
    pub fn view(&self, i: usize, tol: &Tolerances) -> Result<Vec<Point>, ChainError> {
        let Some(steps) = &self.steps else {
            return Ok(self.points.clone());
        };
        let n = steps.len() + 1;
        let d = steps[0].dim();
        let mut out = vec![Point::origin(d); n];
        let mut acc = Isometry::identity(d);
        for k in i + 1..n {
            acc = acc.compose(&steps[k - 1], tol)?;
            out[k] = acc.orbit_point();
        }
        let mut acc = Isometry::identity(d);
        for k in (0..i).rev() {
            acc = acc.compose(&steps[k].inverse(), tol)?;
            out[k] = acc.orbit_point();
        }
        Ok(out)
    }
}

fn scan(
    n: usize,
    params: ChainParams,
    gap: impl Fn(usize) -> Result<f64, ChainError>,
    product: impl Fn(usize) -> Result<f64, ChainError>,
) -> Result<Option<Violation>, ChainError> {
    for i in 0..n {
        if i > 0 && i + 1 < n {
            let g = product(i)?;
            if g > params.c {
                return Ok(Some(Violation { index: i, kind: ViolationKind::Gromov, value: g }));
            }
        }
        if i + 1 < n {
            let d = gap(i)?;
            if d < params.d {
                return Ok(Some(Violation { index: i, kind: ViolationKind::Gap, value: d }));
            }
        }
    }
    Ok(None)
}

/// Checks both chain conditions, reporting the first violation in index order.
pub fn check_chain(points: &[Point], params: ChainParams) -> Result<ChainCertificate, ChainError> {
    if points.len() < 2 {
        return Err(ChainError::Arity(points.len()));
    }
    let v = scan(
        points.len(),
        params,
        |i| Ok(distance(&points[i], &points[i + 1])),
        |i| Ok(gromov_product(&points[i - 1], &points[i + 1], &points[i])),
    )?;
    Ok(ChainCertificate {
        points: points.to_vec(),
        params,
        ok: v.is_none(),
        first_violation: v,
        steps: None,
    })
}

/// Same as [`check_chain`] for the chain `z_k = S_1 ... S_k x0`.
pub fn check_chain_steps(
    steps: &[Isometry],
    params: ChainParams,
    tol: &Tolerances,
) -> Result<ChainCertificate, ChainError> {
    if steps.is_empty() {
        return Err(ChainError::Arity(1));
    }
    let d = steps[0].dim();
    let x0 = Point::origin(d);
    let v = scan(
        steps.len() + 1,
        params,
        |i| Ok(steps[i].norm()),
        |i| {
            let back = steps[i - 1].inverse().orbit_point();
            let fwd = steps[i].orbit_point();
            Ok(gromov_product(&back, &fwd, &x0))
        },
    )?;
    let mut cert = ChainCertificate {
        points: Vec::new(),
        params,
        ok: v.is_none(),
        first_violation: v,
        steps: Some(steps.to_vec()),
    };
    cert.points = cert.view(0, tol)?;
    Ok(cert)
}

/// Nearest point to `z` on `[x, y]` by golden-section search on the convex
/// function `t -> d(z, gamma(t))`. Returns `(t, point, distance)`.
pub fn nearest_on_geodesic(
    z: &Point,
    x: &Point,
    y: &Point,
    tol: f64,
) -> Result<(f64, Point, f64), ChainError> {
    let len = distance(x, y);
    if len <= 0.0 {
        return Ok((0.0, x.clone(), distance(z, x)));
    }
    let f = |t: f64| -> Result<f64, ChainError> { Ok(distance(z, &geodesic_point(x, y, t)?)) };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, len);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    // the endpoints are candidates too: the minimum may sit on the boundary
    let mut best = (0.5 * (a + b), f(0.5 * (a + b))?);
    for t in [0.0, len] {
        let v = f(t)?;
        if v < best.1 {
            best = (t, v);
        }
    }
    let p = geodesic_point(x, y, best.0)?;
    Ok((best.0, p, best.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CounterexampleKind {
    Offset,
    Ordering,
    Gromov,
}

impl std::fmt::Display for CounterexampleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Offset => "offset",
            Self::Ordering => "ordering",
            Self::Gromov => "gromov",
        };
        f.write_str(s)
    }
}

/// A failed lemma assertion with the full chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Counterexample {
    pub kind: CounterexampleKind,
    pub index: usize,
    pub value: f64,
    pub bound: f64,
    pub params: ChainParams,
    pub points: Vec<Vec<f64>>,
}

impl Counterexample {
    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShadowPoint {
    pub index: usize,
    /// `d(z_0, y_i)`.
    pub t: f64,
    pub y: Point,
    pub offset: f64,
    /// `(z_0 | z_N)_{z_i}`.
    pub gromov: f64,
}

/// Projects each interior chain point to `[z_0, z_N]` and asserts the
/// shadowing bounds: offset `<= C + 6`, products `< C + 1.5`, and monotone
/// projections.
pub fn chain_shadowing(cert: &ChainCertificate, tol: &Tolerances) -> Result<Vec<ShadowPoint>, ChainError> {
    if !cert.ok {
        return Err(ChainError::Regime("certificate is not ok".into()));
    }
    let params = cert.params;
    if !params.lemma_regime() {
        return Err(ChainError::Regime(format!(
            "D = {} < 2C + 15 = {}",
            params.d,
            2.0 * params.c + 15.0
        )));
    }
    let n = cert.len();
    let counterexample = |kind, index, value, bound| {
        ChainError::Counterexample(Box::new(Counterexample {
            kind,
            index,
            value,
            bound,
            params,
            points: cert.points.iter().map(|p| p.coords().to_vec()).collect(),
        }))
    };
    let mut out: Vec<ShadowPoint> = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let view = cert.view(i, tol)?;
        let (z0, zi, zn) = (&view[0], &view[i], &view[n - 1]);
        let (t, _, offset) = nearest_on_geodesic(zi, z0, zn, tol.point)?;
        let gromov = gromov_product(z0, zn, zi);
        let offset_bound = params.c + 6.0;
        if offset > offset_bound + tol.point {
            return Err(counterexample(CounterexampleKind::Offset, i, offset, offset_bound));
        }
        let gromov_bound = params.c + 1.5;
        if gromov >= gromov_bound + tol.point {
            return Err(counterexample(CounterexampleKind::Gromov, i, gromov, gromov_bound));
        }
        if let Some(prev) = out.last() {
            if t + tol.point.max(1e-9 * t) < prev.t {
                return Err(counterexample(CounterexampleKind::Ordering, i, t, prev.t));
            }
        }
        let y = geodesic_point(&cert.points[0], &cert.points[n - 1], t)?;
        out.push(ShadowPoint { index: i, t, y, offset, gromov });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FellowTravelReport {
    pub hausdorff_ok: bool,
    /// Largest sampled distance from `[x, y]` to `[x', y']`.
    pub max_distance: f64,
    /// Largest sampled distance over samples at least `R` from both ends.
    pub deep_point_bound: Option<f64>,
    /// Added to sampled values for a bound on the whole segment.
    pub sampling_slack: f64,
    pub samples: usize,
}

/// Samples `[x, y]` every `h_geo` and measures distances to `[x', y']`.
pub fn fellow_travel_check(
    x: &Point,
    y: &Point,
    x2: &Point,
    y2: &Point,
    r: f64,
    h_geo: f64,
    tol: &Tolerances,
) -> Result<FellowTravelReport, ChainError> {
    let (dx, dy) = (distance(x, x2), distance(y, y2));
    if !(dx < r && dy < r) {
        return Err(ChainError::Regime(format!(
            "endpoint displacements {dx}, {dy} not below R = {r}"
        )));
    }
    if !(h_geo > 0.0) {
        return Err(ChainError::Regime("h_geo must be positive".into()));
    }
    let len = distance(x, y);
    let steps = (len / h_geo).ceil().max(1.0) as usize;
    let mut max_distance: f64 = 0.0;
    let mut deep: Option<f64> = None;
    for k in 0..=steps {
        let t = len * k as f64 / steps as f64;
        let p = if len > 0.0 { geodesic_point(x, y, t)? } else { x.clone() };
        let (_, _, dist) = nearest_on_geodesic(&p, x2, y2, tol.point)?;
        max_distance = max_distance.max(dist);
        if t >= r && len - t >= r {
            deep = Some(deep.map_or(dist, |v: f64| v.max(dist)));
        }
    }
    Ok(FellowTravelReport {
        hausdorff_ok: max_distance <= r + tol.point,
        max_distance,
        deep_point_bound: deep,
        sampling_slack: h_geo / 2.0,
        samples: steps + 1,
    })
}

/// Random chain steps in the plane (d = 2) or space (d = 3). Each step turns
/// by a random angle and travels a gap in `[D, D + spread]`; turns whose
/// Gromov product exceeds `C` are resampled.
pub fn random_chain_steps<R: Rng>(
    rng: &mut R,
    params: ChainParams,
    n_points: usize,
    dim: usize,
    spread: f64,
    tol: &Tolerances,
) -> Result<Vec<Isometry>, ChainError> {
    let x0 = Point::origin(dim);
    let mut steps = Vec::with_capacity(n_points.saturating_sub(1));
    let mut prev_gap: Option<f64> = None;
    for _ in 1..n_points {
        loop {
            let gap = params.d + rng.gen::<f64>() * spread;
            let theta = rng.gen::<f64>() * std::f64::consts::PI;
            let mut s = Isometry::rotation(dim, 1, 2, theta);
            if dim >= 3 {
                let phi = rng.gen::<f64>() * std::f64::consts::TAU;
                s = Isometry::rotation(dim, 2, 3, phi).compose(&s, tol)?;
            }
            let s = s.compose(&Isometry::boost(dim, 1, gap), tol)?;
            if let Some(g) = prev_gap {
                let back = Point::from_polar(&unit(dim, -1.0), g);
                if gromov_product(&back, &s.orbit_point(), &x0) > params.c {
                    continue;
                }
            }
            prev_gap = Some(gap);
            steps.push(s);
            break;
        }
    }
    Ok(steps)
}

fn unit(dim: usize, sign: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = sign;
    v
}
