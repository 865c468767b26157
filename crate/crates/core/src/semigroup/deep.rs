use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SemigroupError;
use crate::group::{OrbitBall, OrbitIndex};
use crate::hyperbolic::{geodesic_point, Isometry, Point, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeepSearchConfig {
    /// Required excess over `2M` at the seed point.
    pub slack: f64,
    /// Certification sample spacing along `[x, y]`.
    pub h_geo: f64,
    /// Spacing of the first scan along each geodesic.
    pub coarse_step: f64,
    /// Elements examined per parallel batch.
    pub batch: usize,
}

impl Default for DeepSearchConfig {
    fn default() -> Self {
        Self {
            slack: 0.25,
            h_geo: 0.05,
            coarse_step: 0.5,
            batch: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeepWitness {
    pub g: Isometry,
    pub x: Point,
    pub y: Point,
    pub measured_depth: f64,
    /// The ball element whose geodesic `[x0, h x0]` contained the deep point.
    pub source: Isometry,
    /// Orbit elements nearest to the two level-`M` points.
    pub a: Isometry,
    pub b: Isometry,
    /// Arclength along `[x0, h x0]` of the seed, `P` and `Q`.
    pub t_seed: f64,
    pub t_p: f64,
    pub t_q: f64,
    /// `(arclength from x, orbit distance)` along `[x, y]`.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeepElementQuery {
    pub m: f64,
    pub result: Option<DeepWitness>,
    pub scanned: usize,
    pub config: DeepSearchConfig,
}

/// Orbit distance, or `None` when the truncated ball cannot certify it.
fn certified_depth(p: &Point, index: &OrbitIndex) -> Option<(f64, usize)> {
    let d = index.distance(p);
    d.exact.then_some((d.value, d.nearest))
}

/// Searches the geodesics `[x0, h x0]`, `h` in the ball by decreasing norm,
/// for a point at orbit distance above `2M + slack`. From such a point it
/// walks to the nearest points `P`, `Q` on either side at orbit distance
/// exactly `M`, takes orbit points `a x0`, `b x0` at distance `M` from them
/// and returns `g = a^-1 b` with `x = a^-1 P`, `y = a^-1 Q`.
pub fn find_deep_element(
    m: f64,
    ball: &OrbitBall,
    cfg: &DeepSearchConfig,
    tol: &Tolerances,
) -> Result<DeepElementQuery, SemigroupError> {
    if m < 0.0 {
        return Err(SemigroupError::Degenerate(format!("depth {m} < 0")));
    }
    let order = ball.norm_order();
    if m == 0.0 {
        // depth 0: any element, witnessed by its own endpoints
        let pick = order.get(1).or(order.first()).copied().unwrap_or(0);
        let g = ball.elements[pick].iso.clone();
        let x = Point::origin(g.dim());
        let y = g.orbit_point();
        let witness = DeepWitness {
            source: g.clone(),
            a: Isometry::identity(g.dim()),
            b: g.clone(),
            t_seed: 0.0,
            t_p: 0.0,
            t_q: g.norm(),
            samples: vec![(0.0, 0.0), (g.norm(), 0.0)],
            measured_depth: 0.0,
            g,
            x,
            y,
        };
        return Ok(DeepElementQuery { m, result: Some(witness), scanned: 1, config: *cfg });
    }
    let target = 2.0 * m + cfg.slack;
    if ball.radius <= 2.0 * target {
        return Err(SemigroupError::Budget(format!(
            "ball radius {} does not exceed 2(2M + slack) = {}",
            ball.radius,
            2.0 * target
        )));
    }
    let index = OrbitIndex::new(ball);
    let candidates: Vec<usize> = order
        .iter()
        .rev()
        .copied()
        .filter(|&i| ball.elements[i].norm >= 2.0 * target)
        .collect();
    let mut scanned = 0;
    for batch in candidates.chunks(cfg.batch.max(1)) {
        let seeds: Vec<Option<f64>> = batch
            .par_iter()
            .map(|&i| find_seed(&ball.elements[i].iso, target, &index, cfg))
            .collect::<Result<_, _>>()?;
        for (&i, seed) in batch.iter().zip(seeds) {
            scanned += 1;
            let Some(t_seed) = seed else { continue };
            if let Some(w) = complete_witness(&ball.elements[i].iso, m, t_seed, &index, cfg, tol)? {
                return Ok(DeepElementQuery { m, result: Some(w), scanned, config: *cfg });
            }
        }
    }
    Ok(DeepElementQuery { m, result: None, scanned, config: *cfg })
}

/// First arclength on `[x0, h x0]` with certified orbit distance above `target`.
fn find_seed(h: &Isometry, target: f64, index: &OrbitIndex, cfg: &DeepSearchConfig) -> Result<Option<f64>, SemigroupError> {
    let x0 = Point::origin(h.dim());
    let end = h.orbit_point();
    // such a point is farther than target from both ends and needs
    // |p| + target <= R to be certifiable
    let hi = (h.norm() - target).min(index.ball().radius - target);
    let deep = |t: f64| -> Result<Option<f64>, SemigroupError> {
        Ok(certified_depth(&geodesic_point(&x0, &end, t)?, index).map(|d| d.0))
    };
    let mut t = target;
    while t <= hi {
        if let Some(f) = deep(t)? {
            if f > target {
                return Ok(Some(t));
            }
            // 1-Lipschitz: refine only where the coarse value is within reach
            if f + 0.5 * cfg.coarse_step > target {
                let mut s = (t - 0.5 * cfg.coarse_step).max(target);
                while s <= (t + 0.5 * cfg.coarse_step).min(hi) {
                    if deep(s)?.is_some_and(|fs| fs > target) {
                        return Ok(Some(s));
                    }
                    s += cfg.h_geo;
                }
            }
        }
        t += cfg.coarse_step;
    }
    Ok(None)
}

fn complete_witness(
    h: &Isometry,
    m: f64,
    t_seed: f64,
    index: &OrbitIndex,
    cfg: &DeepSearchConfig,
    tol: &Tolerances,
) -> Result<Option<DeepWitness>, SemigroupError> {
    let x0 = Point::origin(h.dim());
    let end = h.orbit_point();
    let len = h.norm();
    let at = |t: f64| geodesic_point(&x0, &end, t);
    let level = |t: f64| -> Result<Option<(f64, usize)>, SemigroupError> { Ok(certified_depth(&at(t)?, index)) };
    // walk outward in h_geo steps until the depth drops to M, then bisect
    let cross = |dir: f64| -> Result<Option<f64>, SemigroupError> {
        let mut inside = t_seed;
        loop {
            let next = inside + dir * cfg.h_geo;
            if !(0.0..=len).contains(&next) {
                return Ok(None);
            }
            match level(next)? {
                None => return Ok(None),
                Some((f, _)) if f <= m => {
                    let (mut lo, mut hi) = (inside, next);
                    for _ in 0..50 {
                        let mid = 0.5 * (lo + hi);
                        match level(mid)? {
                            Some((f, _)) if f > m => lo = mid,
                            Some(_) => hi = mid,
                            None => return Ok(None),
                        }
                    }
                    return Ok(Some(hi));
                }
                Some(_) => inside = next,
            }
        }
    };
    let (Some(t_p), Some(t_q)) = (cross(-1.0)?, cross(1.0)?) else {
        return Ok(None);
    };
    let p = at(t_p)?;
    let q = at(t_q)?;
    let (Some((_, ia)), Some((_, ib))) = (certified_depth(&p, index), certified_depth(&q, index)) else {
        return Ok(None);
    };
    let ball = index.ball();
    let a = ball.elements[ia].iso.clone();
    let b = ball.elements[ib].iso.clone();
    let a_inv = a.inverse();
    let g = a_inv.compose(&b, tol)?;
    let x = a_inv.apply(&p);
    let y = a_inv.apply(&q);
    let mut samples = Vec::new();
    let mut depth = f64::INFINITY;
    let n = ((t_q - t_p) / cfg.h_geo).ceil().max(1.0) as usize;
    for k in 0..=n {
        let s = t_p + (t_q - t_p) * k as f64 / n as f64;
        let Some((f, _)) = certified_depth(&at(s)?, index) else {
            return Ok(None);
        };
        depth = depth.min(f);
        samples.push((s - t_p, f));
    }
    Ok(Some(DeepWitness {
        g,
        x,
        y,
        measured_depth: depth,
        source: h.clone(),
        a,
        b,
        t_seed,
        t_p,
        t_q,
        samples,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{enumerate_ball, punctured_torus, symmetric_schottky, EnumerateConfig};
    use crate::hyperbolic::distance;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn ball_of(spec: &crate::group::GroupSpec, r: f64) -> OrbitBall {
        let cfg = EnumerateConfig { prune_margin: Some(0.0), ..EnumerateConfig::default() };
        enumerate_ball(spec, r, &cfg).unwrap()
    }

    /// Brute-force orbit distance over every ball element.
    fn brute(p: &Point, ball: &OrbitBall) -> f64 {
        ball.elements
            .iter()
            .map(|e| distance(p, &e.iso.orbit_point()))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn torus_has_depth_two_element() {
        let spec = punctured_torus(&tol()).unwrap();
        let ball = ball_of(&spec, 11.0);
        let cfg = DeepSearchConfig::default();
        let q = find_deep_element(2.0, &ball, &cfg, &tol()).unwrap();
        let w = q.result.expect("deep element");
        assert!(w.measured_depth >= 2.0 - cfg.h_geo / 2.0);
        let x0 = Point::origin(2);
        assert!(distance(&x0, &w.x) <= 2.0 + 1e-6);
        assert!(distance(&w.g.orbit_point(), &w.y) <= 2.0 + 1e-6);
        // independent check in the original frame: a[x, y] = [P, Q] on [x0, h x0]
        let p = w.a.apply(&w.x);
        let q_pt = w.a.apply(&w.y);
        let len = distance(&p, &q_pt);
        let n = (len / cfg.h_geo).ceil() as usize;
        for k in 0..=n {
            let s = geodesic_point(&p, &q_pt, len * k as f64 / n as f64).unwrap();
            assert!(brute(&s, &ball) >= 2.0 - cfg.h_geo / 2.0);
        }
    }

    #[test]
    fn schottky_has_none() {
        let spec = symmetric_schottky(2, 2.0, &tol()).unwrap();
        let ball = ball_of(&spec, 11.0);
        let q = find_deep_element(2.0, &ball, &DeepSearchConfig::default(), &tol()).unwrap();
        assert!(q.result.is_none());
        assert!(q.scanned > 0);
    }

    #[test]
    fn depth_zero_is_degenerate() {
        let spec = symmetric_schottky(2, 2.0, &tol()).unwrap();
        let ball = ball_of(&spec, 4.0);
        let q = find_deep_element(0.0, &ball, &DeepSearchConfig::default(), &tol()).unwrap();
        let w = q.result.unwrap();
        assert_eq!(w.x, Point::origin(2));
        assert!(distance(&w.y, &w.g.orbit_point()) < 1e-12);
    }

    #[test]
    fn small_ball_is_a_budget_error() {
        let spec = punctured_torus(&tol()).unwrap();
        let ball = ball_of(&spec, 5.0);
        let r = find_deep_element(2.0, &ball, &DeepSearchConfig::default(), &tol());
        assert!(matches!(r, Err(SemigroupError::Budget(_))));
    }
}
