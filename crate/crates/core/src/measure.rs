//! Atomic approximations of the Patterson-Sullivan measure of a truncated
//! semigroup, shadows and the statistics built from them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{OrbitBall, OrbitIndex};
use crate::hyperbolic::{
    distance, geodesic_point, spatial_distance, BoundaryPoint, GeometryError, Isometry, Point, Tolerances,
};
use crate::semigroup::{PingPongPair, SemigroupError};
use crate::stats::linear_fit;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("s = {s} does not exceed the exponent estimate {delta}")]
    Regime { s: f64, delta: f64 },
    #[error("t_max = {t_max} is beyond the reliability horizon {horizon}")]
    Horizon { t_max: f64, horizon: f64 },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("budget: {0}")]
    Budget(String),
    #[error(transparent)]
    Semigroup(#[from] SemigroupError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Every semigroup word below a radius, flattened: spatial coordinates of
/// the orbit point, norm and letter sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FAtomTable {
    pub dim: usize,
    pub radius: f64,
    pub word_cap: usize,
    pub complete_below: f64,
    spatial: Vec<f64>,
    norms: Vec<f64>,
    letters: Vec<u32>,
    offsets: Vec<usize>,
}

struct AtomCtx<'a> {
    letters: &'a [Isometry],
    norms: &'a [f64],
    a: &'a Isometry,
    radius: f64,
    word_cap: usize,
    max_words: usize,
    counter: &'a std::sync::atomic::AtomicUsize,
    tol: &'a Tolerances,
}

#[derive(Default)]
struct AtomBuf {
    spatial: Vec<f64>,
    norms: Vec<f64>,
    letters: Vec<u32>,
    offsets: Vec<usize>,
}

fn atom_dfs(
    ctx: &AtomCtx,
    element: &Isometry,
    norm: f64,
    stack: &mut Vec<u32>,
    out: &mut AtomBuf,
) -> Result<(), SemigroupError> {
    let p = element.orbit_point();
    out.spatial.extend_from_slice(p.spatial());
    out.norms.push(norm);
    out.letters.extend_from_slice(stack);
    out.offsets.push(out.letters.len());
    if ctx.counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed) >= ctx.max_words {
        return Err(SemigroupError::Budget(format!(
            "atom table exceeds {} words below {}",
            ctx.max_words, ctx.radius
        )));
    }
    if stack.len() == ctx.word_cap {
        return Ok(());
    }
    let stem = element.compose(ctx.a, ctx.tol)?;
    for (i, (g, &gn)) in ctx.letters.iter().zip(ctx.norms).enumerate() {
        if norm + gn >= ctx.radius {
            continue;
        }
        let child = stem.compose(g, ctx.tol)?;
        let cn = child.norm();
        if cn < norm + gn - ctx.tol.point {
            return Err(SemigroupError::ExtensionViolation { norm: cn, sum: norm + gn, words: Vec::new() });
        }
        if cn < ctx.radius {
            stack.push(i as u32);
            atom_dfs(ctx, &child, cn, stack, out)?;
            stack.pop();
        }
    }
    Ok(())
}

impl FAtomTable {
    /// Depth-first over semigroup words, one task per first letter. Order
    /// is deterministic: by first letter, then depth-first.
    pub fn build(
        letters: &[Isometry],
        pair: &PingPongPair,
        radius: f64,
        word_cap: usize,
        max_words: usize,
        tol: &Tolerances,
    ) -> Result<Self, MeasureError> {
        let Some(first) = letters.first() else {
            return Err(MeasureError::Empty("alphabet".into()));
        };
        let dim = first.dim();
        let a = pair.a()?.clone().with_word(Vec::new());
        let stripped: Vec<Isometry> = letters.iter().map(|g| g.clone().with_word(Vec::new())).collect();
        let norms: Vec<f64> = letters.iter().map(Isometry::norm).collect();
        let counter = std::sync::atomic::AtomicUsize::new(0);
        let ctx = AtomCtx {
            letters: &stripped,
            norms: &norms,
            a: &a,
            radius,
            word_cap,
            max_words,
            counter: &counter,
            tol,
        };
        let parts: Vec<AtomBuf> = (0..stripped.len())
            .into_par_iter()
            .map(|i| {
                let mut out = AtomBuf::default();
                if norms[i] < radius {
                    atom_dfs(&ctx, &stripped[i], norms[i], &mut vec![i as u32], &mut out)?;
                }
                Ok(out)
            })
            .collect::<Result<_, SemigroupError>>()?;
        let mut table = FAtomTable {
            dim,
            radius,
            word_cap,
            complete_below: radius.min((word_cap + 1) as f64 * norms.iter().copied().fold(f64::INFINITY, f64::min)),
            spatial: Vec::new(),
            norms: Vec::new(),
            letters: Vec::new(),
            offsets: vec![0],
        };
        for part in parts {
            let base = table.letters.len();
            table.spatial.extend(part.spatial);
            table.norms.extend(part.norms);
            table.letters.extend(part.letters);
            table.offsets.extend(part.offsets.iter().map(|o| o + base));
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    pub fn word(&self, i: usize) -> &[u32] {
        &self.letters[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn spatial(&self, i: usize) -> &[f64] {
        &self.spatial[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point(&self, i: usize) -> Point {
        let s = self.spatial(i);
        let mut coords = Vec::with_capacity(self.dim + 1);
        coords.push(self.norms[i].cosh());
        coords.extend_from_slice(s);
        Point::from_coords_unchecked(coords)
    }

    pub fn direction(&self, i: usize) -> Result<BoundaryPoint, GeometryError> {
        crate::hyperbolic::boundary_direction(&self.point(i))
    }

    /// Indices sorted lexicographically by letter sequence, so that every
    /// cylinder (words extending a fixed word) is a contiguous range.
    pub fn lexicographic_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.par_sort_by(|&i, &j| self.word(i).cmp(self.word(j)));
        order
    }

    /// Gromov product `(w x0 | x0)_{y}` for atom `w`, from coordinates
    /// centered at `x0`.
    pub fn product_at(&self, i: usize, apex_spatial: &[f64], apex_norm: f64) -> f64 {
        let d = spatial_distance(self.spatial(i), apex_spatial);
        (0.5 * (d + apex_norm - self.norms[i])).max(0.0)
    }
}

/// Normalized atoms `exp(-s ||g||) / Z`, aligned with the atom table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PSAtomSet {
    pub s: f64,
    pub delta_hat: f64,
    /// `Z`: truncated series at `s` over the kept atoms.
    pub z: f64,
    pub w_min: f64,
    /// Mass fraction of dropped atoms before renormalization.
    pub mass_dropped: f64,
    pub dropped: usize,
    pub weights: Vec<f64>,
}

pub const W_MIN: f64 = 1e-12;

pub fn ps_atoms(norms: &[f64], s: f64, delta_hat: f64, w_min: f64) -> Result<PSAtomSet, MeasureError> {
    if norms.is_empty() {
        return Err(MeasureError::Empty("truncated semigroup".into()));
    }
    if s <= delta_hat {
        return Err(MeasureError::Regime { s, delta: delta_hat });
    }
    let raw: Vec<f64> = norms.iter().map(|n| (-s * n).exp()).collect();
    let total = sorted_sum(&raw);
    let mut dropped = 0;
    let mut dropped_mass = Vec::new();
    let kept: Vec<f64> = raw
        .iter()
        .map(|&w| {
            if w / total < w_min {
                dropped += 1;
                dropped_mass.push(w);
                0.0
            } else {
                w
            }
        })
        .collect();
    let z = sorted_sum(&kept);
    Ok(PSAtomSet {
        s,
        delta_hat,
        z,
        w_min,
        mass_dropped: if dropped == 0 { 0.0 } else { sorted_sum(&dropped_mass) / total },
        dropped,
        weights: kept.iter().map(|w| w / z).collect(),
    })
}

/// Sum in ascending order, for reproducible low-error totals.
fn sorted_sum(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.iter().sum()
}

/// `S(y, r) = { z : (z | x0)_y <= r }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Shadow {
    pub apex: Point,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub inside: bool,
    pub product: f64,
    /// Radius of the far point standing in for a boundary input.
    pub proxy_radius: Option<f64>,
}

pub enum ShadowInput<'a> {
    Point(&'a Point),
    Boundary(&'a BoundaryPoint, f64),
}

pub fn shadow_contains(z: ShadowInput, shadow: &Shadow) -> Membership {
    let x0 = Point::origin(shadow.apex.dim());
    let (p, proxy_radius) = match z {
        ShadowInput::Point(p) => (p.clone(), None),
        ShadowInput::Boundary(xi, r) => (Point::from_polar(xi.direction(), r), Some(r)),
    };
    let product = crate::hyperbolic::gromov_product(&p, &x0, &shadow.apex);
    Membership {
        inside: product <= shadow.r,
        product,
        proxy_radius,
    }
}

/// Atoms inside `S(y, r)`. In the plane the scan is restricted to an
/// angular window: a point `z` with `(z | x0)_y <= r` has `[x0, z]` within
/// `r + 2` of `y`, hence `sin angle(y, z) <= sinh(r + 2) / sinh ||y||`.
pub struct ShadowScanner<'a> {
    table: &'a FAtomTable,
    /// Planar atoms sorted by angle.
    by_angle: Option<Vec<(f64, usize)>>,
}

impl<'a> ShadowScanner<'a> {
    pub fn new(table: &'a FAtomTable) -> Self {
        let by_angle = (table.dim == 2).then(|| {
            let mut v: Vec<(f64, usize)> = (0..table.len())
                .map(|i| {
                    let s = table.spatial(i);
                    (s[1].atan2(s[0]), i)
                })
                .collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            v
        });
        Self { table, by_angle }
    }

    fn candidates(&self, apex: &[f64], apex_norm: f64, r: f64) -> Vec<usize> {
        let all = || (0..self.table.len()).collect();
        let Some(by_angle) = &self.by_angle else {
            return all();
        };
        let ratio = (r + 2.0).sinh() / apex_norm.sinh();
        if !(ratio < 1.0) || apex_norm == 0.0 {
            return all();
        }
        let width = ratio.asin() + 1e-9;
        let center = apex[1].atan2(apex[0]);
        let pi = std::f64::consts::PI;
        let mut out = Vec::new();
        let mut take = |lo: f64, hi: f64| {
            let start = by_angle.partition_point(|e| e.0 < lo);
            for e in &by_angle[start..] {
                if e.0 > hi {
                    break;
                }
                out.push(e.1);
            }
        };
        let (lo, hi) = (center - width, center + width);
        take(lo.max(-pi), hi.min(pi));
        if lo < -pi {
            take(lo + 2.0 * pi, pi);
        }
        if hi > pi {
            take(-pi, hi - 2.0 * pi);
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Indices of atoms with `(w x0 | x0)_{apex} <= r`, ascending.
    pub fn members(&self, apex: &Point, r: f64) -> Vec<usize> {
        let apex_norm = apex.norm();
        self.candidates(apex.spatial(), apex_norm, r)
            .into_iter()
            .filter(|&i| self.table.product_at(i, apex.spatial(), apex_norm) <= r)
            .collect()
    }

    pub fn measure(&self, atoms: &PSAtomSet, apex: &Point, r: f64) -> f64 {
        let w: Vec<f64> = self.members(apex, r).iter().map(|&i| atoms.weights[i]).collect();
        sorted_sum(&w)
    }
}

/// Letter sequences sorted lexicographically with prefix sums of weight:
/// cylinder masses and word lookups by binary search.
pub struct CylinderIndex<'a> {
    table: &'a FAtomTable,
    order: Vec<usize>,
    cumulative: Vec<f64>,
}

impl<'a> CylinderIndex<'a> {
    pub fn new(table: &'a FAtomTable, atoms: &PSAtomSet) -> Self {
        let order = table.lexicographic_order();
        let mut cumulative = Vec::with_capacity(order.len() + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for &i in &order {
            acc += atoms.weights[i];
            cumulative.push(acc);
        }
        Self { table, order, cumulative }
    }

    fn range(&self, w: &[u32]) -> (usize, usize) {
        let lo = self.order.partition_point(|&i| self.table.word(i) < w);
        let hi = self
            .order
            .partition_point(|&i| self.table.word(i) < w || self.table.word(i).starts_with(w));
        (lo, hi)
    }

    pub fn lookup(&self, w: &[u32]) -> Option<usize> {
        let (lo, hi) = self.range(w);
        (lo < hi && self.table.word(self.order[lo]) == w).then(|| self.order[lo])
    }

    /// Mass of the words extending `w` (including `w`).
    pub fn cylinder_mass(&self, w: &[u32]) -> f64 {
        let (lo, hi) = self.range(w);
        self.cumulative[hi] - self.cumulative[lo]
    }

    pub fn cylinder_members(&self, w: &[u32]) -> Vec<usize> {
        let (lo, hi) = self.range(w);
        let mut v = self.order[lo..hi].to_vec();
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShadowEntry {
    pub letters: Vec<u32>,
    pub norm: f64,
    pub mass: f64,
    /// `mu(S(g x0, r)) e^{s ||g||}`.
    pub ratio: f64,
    pub cylinder_mass: f64,
    /// Shadow atoms whose words do not extend `g`.
    pub outside_cylinder: usize,
    /// Words extending `g` that fall outside the shadow.
    pub cylinder_outside_shadow: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShadowPrincipleReport {
    pub s: f64,
    pub r: f64,
    pub max_letters: usize,
    pub tested: usize,
    pub max_upper_ratio: f64,
    pub min_lower_ratio: f64,
    /// Largest max/min ratio among prefixes in one unit norm shell.
    pub shell_spread: f64,
    pub upper_holds: bool,
    pub tol_series: f64,
    pub nesting_violations: usize,
    pub entries: Vec<ShadowEntry>,
}

pub const TOL_SERIES: f64 = 1e-6;

/// Tests `mu_s(S(g x0, r)) e^{s ||g||} <= 1` for every word of at most
/// `max_letters` letters in the table.
pub fn shadow_principle_report(
    table: &FAtomTable,
    atoms: &PSAtomSet,
    r: f64,
    max_letters: usize,
    upper_tol: f64,
) -> ShadowPrincipleReport {
    let scanner = ShadowScanner::new(table);
    let cylinders = CylinderIndex::new(table, atoms);
    let tested: Vec<usize> = (0..table.len()).filter(|&i| table.word(i).len() <= max_letters).collect();
    let mut entries: Vec<ShadowEntry> = tested
        .par_iter()
        .map(|&i| {
            let apex = table.point(i);
            let members = scanner.members(&apex, r);
            let mass = sorted_sum(&members.iter().map(|&m| atoms.weights[m]).collect::<Vec<_>>());
            let w = table.word(i);
            let cyl = cylinders.cylinder_members(w);
            let outside_cylinder = members.iter().filter(|m| cyl.binary_search(m).is_err()).count();
            let cylinder_outside_shadow = cyl.iter().filter(|m| members.binary_search(m).is_err()).count();
            ShadowEntry {
                letters: w.to_vec(),
                norm: table.norm(i),
                mass,
                ratio: mass * (atoms.s * table.norm(i)).exp(),
                cylinder_mass: cylinders.cylinder_mass(w),
                outside_cylinder,
                cylinder_outside_shadow,
            }
        })
        .collect();
    entries.sort_by(|a, b| a.norm.total_cmp(&b.norm).then_with(|| a.letters.cmp(&b.letters)));
    let max_upper_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    let min_lower_ratio = entries.iter().map(|e| e.ratio).fold(f64::INFINITY, f64::min);
    let mut shell_spread: f64 = 1.0;
    let mut start = 0;
    while start < entries.len() {
        let shell = entries[start].norm.floor();
        let end = start + entries[start..].iter().take_while(|e| e.norm.floor() == shell).count();
        let (lo, hi) = entries[start..end]
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(e.ratio), hi.max(e.ratio)));
        if lo > 0.0 {
            shell_spread = shell_spread.max(hi / lo);
        }
        start = end;
    }
    ShadowPrincipleReport {
        s: atoms.s,
        r,
        max_letters,
        tested: entries.len(),
        max_upper_ratio,
        min_lower_ratio,
        shell_spread,
        upper_holds: max_upper_ratio <= 1.0 + upper_tol,
        tol_series: upper_tol,
        nesting_violations: entries.iter().map(|e| e.outside_cylinder).sum(),
        entries,
    }
}

/// Shadow nesting on words: whenever `(x0 | u x0)_{v x0} < threshold`, the
/// letters of `v` are a prefix of those of `u`. Returns violating pairs.
pub fn shadow_nesting_violations(
    table: &FAtomTable,
    apexes: &[usize],
    threshold: f64,
) -> Vec<(usize, usize)> {
    let scanner = ShadowScanner::new(table);
    apexes
        .par_iter()
        .flat_map_iter(|&v| {
            let apex = table.point(v);
            let vw = table.word(v);
            scanner
                .members(&apex, threshold)
                .into_iter()
                .filter(|&u| table.product_at(u, apex.spatial(), table.norm(v)) < threshold)
                .filter(move |&u| !table.word(u).starts_with(vw))
                .map(move |u| (u, v))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// `mu_s(h a O) e^{s (||h|| + ||a||)}` against `mu_s(O)` for the cylinder
/// `O` of the word `u`. Words of `O` whose image `h a w` may leave the
/// truncation make up `slack`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuasiInvariance {
    pub h: u32,
    pub u: Vec<u32>,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

pub fn quasi_invariance(
    table: &FAtomTable,
    atoms: &PSAtomSet,
    cylinders: &CylinderIndex,
    h: u32,
    u: &[u32],
    a_norm: f64,
) -> Option<QuasiInvariance> {
    let hn = table.norm(cylinders.lookup(&[h])?);
    let mut hu = vec![h];
    hu.extend_from_slice(u);
    let lhs = cylinders.cylinder_mass(&hu) * (atoms.s * (hn + a_norm)).exp();
    let rhs = cylinders.cylinder_mass(u);
    let cut = table.radius - hn - a_norm;
    let late: Vec<f64> = cylinders
        .cylinder_members(u)
        .into_iter()
        .filter(|&i| table.norm(i) >= cut)
        .map(|i| atoms.weights[i])
        .collect();
    let slack = sorted_sum(&late);
    Some(QuasiInvariance {
        h,
        u: u.to_vec(),
        lhs,
        rhs,
        slack,
        holds: lhs >= rhs - slack - 1e-12,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailShell {
    pub r: usize,
    pub shadows: usize,
    pub sum: f64,
    /// `1.1 exp(-0.5 delta eta R)`.
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SublinearTailReport {
    pub eta: f64,
    pub s: f64,
    pub delta_hat: f64,
    pub shells: Vec<TailShell>,
    pub max_bound_ratio: f64,
    /// Fitted decay rate of the shell sums (negated slope of the log-sums).
    pub decay_exponent: f64,
    pub fit_residual: f64,
    /// Shells with `R + 1 <= complete_below / (1 + eta)`; beyond it the
    /// suffix `h` cannot be long enough inside the truncation.
    pub reliable_below: f64,
}

/// Shell sums over `S_{eta,R}`: shadows `S(g a h x0, r)` with `g, h` in the
/// truncation, `||h|| > eta ||g||`, `R <= ||g|| < R + 1`. Shadow masses are
/// cylinder masses, which the nesting check ties to the true shadows.
pub fn sublinear_shadow_tail(
    table: &FAtomTable,
    atoms: &PSAtomSet,
    eta: f64,
    delta_hat: f64,
) -> Result<SublinearTailReport, MeasureError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(MeasureError::Empty(format!("eta = {eta} outside (0, 1)")));
    }
    let cylinders = CylinderIndex::new(table, atoms);
    let reliable_below = table.complete_below / (1.0 + eta);
    let n_shells = reliable_below.floor() as usize;
    let per_word: Vec<Vec<usize>> = (0..table.len())
        .into_par_iter()
        .map(|i| {
            let w = table.word(i);
            let mut shells = Vec::new();
            for split in 1..w.len() {
                let (Some(g), Some(h)) = (cylinders.lookup(&w[..split]), cylinders.lookup(&w[split..])) else {
                    continue;
                };
                let (gn, hn) = (table.norm(g), table.norm(h));
                let shell = gn.floor() as usize;
                if hn > eta * gn && shell < n_shells {
                    shells.push(shell);
                }
            }
            shells.sort_unstable();
            shells.dedup();
            shells
        })
        .collect();
    let mut sums = vec![Vec::new(); n_shells];
    let mut counts = vec![0usize; n_shells];
    for (i, shells) in per_word.iter().enumerate() {
        if shells.is_empty() {
            continue;
        }
        let m = cylinders.cylinder_mass(table.word(i));
        for &r in shells {
            sums[r].push(m);
            counts[r] += 1;
        }
    }
    let shells: Vec<TailShell> = sums
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(r, v)| TailShell {
            r,
            shadows: counts[r],
            sum: sorted_sum(v),
            bound: 1.1 * (-0.5 * delta_hat * eta * r as f64).exp(),
        })
        .collect();
    let max_bound_ratio = shells.iter().map(|t| t.sum / t.bound).fold(0.0, f64::max);
    let (decay_exponent, fit_residual) = if shells.len() >= 3 {
        let xs: Vec<f64> = shells.iter().map(|t| t.r as f64).collect();
        let ys: Vec<f64> = shells.iter().map(|t| t.sum.ln()).collect();
        let fit = linear_fit(&xs, &ys);
        (-fit.slope, fit.max_residual)
    } else {
        (0.0, 0.0)
    };
    Ok(SublinearTailReport {
        eta,
        s: atoms.s,
        delta_hat,
        shells,
        max_bound_ratio,
        decay_exponent,
        fit_residual,
        reliable_below,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConicalProfile {
    pub direction: BoundaryPoint,
    pub h_t: f64,
    /// `(t, f(t))`; `f` is the orbit distance of the ray point at time `t`.
    pub samples: Vec<(f64, f64)>,
    /// Samples the ball cannot certify (true distance may be smaller).
    pub censored: Vec<bool>,
    pub max_f: f64,
    /// Minimum of `f` over the second half of the window.
    pub tail_min_f: f64,
    /// Maximum of `f(t) / t` over the second half of the window.
    pub tail_max_ratio: f64,
    pub caveat: String,
}

pub const PROXY_CAVEAT: &str = "finite-window proxy";

fn horizon(ball: &OrbitBall) -> f64 {
    ball.radius - ball.prune_margin
}

/// Samples `f(t) = d(gamma(t), orbit)` along `[x0, xi)` for `t` in `[0, t_max]`.
pub fn conical_profile(
    xi: &BoundaryPoint,
    ball: &OrbitBall,
    t_max: f64,
    h_t: f64,
) -> Result<ConicalProfile, MeasureError> {
    if t_max > horizon(ball) {
        return Err(MeasureError::Horizon { t_max, horizon: horizon(ball) });
    }
    let index = OrbitIndex::new(ball);
    let n = (t_max / h_t).round().max(1.0) as usize;
    let (samples, censored): (Vec<(f64, f64)>, Vec<bool>) = (0..=n)
        .into_par_iter()
        .map(|k| {
            let t = t_max * k as f64 / n as f64;
            let d = index.distance(&Point::from_polar(xi.direction(), t));
            ((t, d.value), !d.exact)
        })
        .unzip();
    let max_f = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let tail: Vec<(f64, f64)> = samples.iter().copied().filter(|s| s.0 >= 0.5 * t_max && s.0 > 0.0).collect();
    Ok(ConicalProfile {
        direction: xi.clone(),
        h_t,
        max_f,
        tail_min_f: tail.iter().map(|s| s.1).fold(f64::INFINITY, f64::min),
        tail_max_ratio: tail.iter().map(|s| s.1 / s.0).fold(0.0, f64::max),
        samples,
        censored,
        caveat: PROXY_CAVEAT.into(),
    })
}

/// Distance from `p` to the ray segment `{ from_polar(u, t) : 0 <= t <= t_max }`.
pub fn distance_to_ray(p: &Point, u: &[f64], t_max: f64) -> f64 {
    let s = p.spatial();
    let sn = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    if sn == 0.0 {
        return 0.0;
    }
    let rho = sn.asinh();
    let along: f64 = s.iter().zip(u).map(|(a, b)| a * b).sum();
    if along <= 0.0 {
        return rho;
    }
    // perpendicular part computed directly, not as sqrt(1 - cos^2)
    let perp = s.iter().zip(u).map(|(a, b)| (a - along * b).powi(2)).sum::<f64>().sqrt();
    let (cos_t, sin_t) = (along / sn, perp / sn);
    let foot = (rho.tanh() * cos_t).atanh();
    if foot <= t_max {
        (rho.sinh() * sin_t).asinh()
    } else {
        distance(p, &Point::from_polar(u, t_max))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MyrbergWitness {
    pub h: Isometry,
    /// Largest distance from a sample of `h [x0, g x0]` to the ray.
    pub max_offset: f64,
    pub samples: usize,
}

/// First ball element `h` (enumeration order) with `h [x0, g x0]` inside
/// the `k_nbhd`-neighborhood of `[x0, xi)` up to `t_max`.
pub fn myrberg_witness(
    xi: &BoundaryPoint,
    g: &Isometry,
    k_nbhd: f64,
    ball: &OrbitBall,
    t_max: f64,
    h_geo: f64,
) -> Result<Option<MyrbergWitness>, MeasureError> {
    if t_max > horizon(ball) {
        return Err(MeasureError::Horizon { t_max, horizon: horizon(ball) });
    }
    let x0 = Point::origin(g.dim());
    let end = g.orbit_point();
    let len = g.norm();
    let n = (len / h_geo).ceil().max(1.0) as usize;
    let segment: Vec<Point> = (0..=n)
        .map(|k| geodesic_point(&x0, &end, len * k as f64 / n as f64))
        .collect::<Result<_, _>>()?;
    let u = xi.direction();
    let found = ball.elements.par_iter().position_first(|e| {
        // endpoints first: most elements fail there
        [0, n]
            .iter()
            .copied()
            .chain(1..n)
            .all(|k| distance_to_ray(&e.iso.apply(&segment[k]), u, t_max) <= k_nbhd)
    });
    Ok(found.map(|i| {
        let h = ball.elements[i].iso.clone();
        let max_offset = segment
            .iter()
            .map(|p| distance_to_ray(&h.apply(p), u, t_max))
            .fold(0.0, f64::max);
        MyrbergWitness { h, max_offset, samples: n + 1 }
    }))
}
