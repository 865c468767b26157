//! Hyperbolic geometry in the hyperboloid model.
//!
//! `H^d` is the upper sheet `{x : <x,x>_J = -1, x_0 > 0}` of Minkowski space
//! `R^{d+1}` with `<u,v>_J = -u_0 v_0 + sum_{i>=1} u_i v_i`. Isometries are
//! `(d+1) x (d+1)` matrices with `M^T J M = J` and `M[0][0] >= 1`.
//!
//! Distances are evaluated through the Poincare-ball chord,
//! `sinh(d/2) = |u - v| sqrt((1 + x_0)(1 + y_0)) / 2` with `u = x_s / (1 + x_0)`,
//! which equals `arcosh(-<x,y>_J)` but does not cancel catastrophically when
//! both points are far from the basepoint and close to each other.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of compositions after which a matrix is re-projected onto the
/// Minkowski-orthogonal set.
pub const K_REORTH: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub point: f64,
    pub iso: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            point: 1e-9,
            iso: 1e-8,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("direction undefined: points coincide")]
    UndefinedDirection,
    #[error("parameter {t} outside [0, {len}] on geodesic")]
    OutOfRange { t: f64, len: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("isometry drift {drift:e} exceeds tolerance {tol:e}")]
    IsometryDrift { drift: f64, tol: f64 },
    #[error("point off the hyperboloid: <x,x> + 1 = {0:e}")]
    OffSheet(f64),
    #[error("not a unit direction (norm {0})")]
    NotUnit(f64),
}

/// A point of `H^d` in Minkowski coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    /// Validating constructor. The sheet check is relative to `x_0^2` since
    /// absolute accuracy of the form degrades like `x_0^2 * eps`.
    pub fn new(coords: Vec<f64>, tol: f64) -> Result<Self, GeometryError> {
        let p = Self { coords };
        let q = minkowski_form(&p.coords, &p.coords) + 1.0;
        let scale = p.coords[0].abs().max(1.0).powi(2);
        if q.abs() > tol * scale || p.coords[0] < 1.0 - tol {
            return Err(GeometryError::OffSheet(q));
        }
        Ok(p)
    }

    pub fn from_coords_unchecked(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    /// The basepoint `x0 = (1, 0, ..., 0)`.
    pub fn origin(d: usize) -> Self {
        let mut coords = vec![0.0; d + 1];
        coords[0] = 1.0;
        Self { coords }
    }

    /// Point at distance `t` from `x0` in the (unit) spatial direction `dir`.
    pub fn from_polar(dir: &[f64], t: f64) -> Self {
        let mut coords = Vec::with_capacity(dir.len() + 1);
        coords.push(t.cosh());
        let s = t.sinh();
        coords.extend(dir.iter().map(|v| v * s));
        Self { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Hyperbolic dimension `d`.
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn spatial(&self) -> &[f64] {
        &self.coords[1..]
    }

    /// Distance from the basepoint, `arcosh(x_0)`.
    pub fn norm(&self) -> f64 {
        arcosh_stable(self.coords[0].max(1.0))
    }
}

/// A point of the boundary sphere, stored as a unit tangent direction at `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    direction: Vec<f64>,
}

impl BoundaryPoint {
    pub fn new(direction: Vec<f64>, tol: f64) -> Result<Self, GeometryError> {
        let n = euclid_norm(&direction);
        if (n - 1.0).abs() > tol {
            return Err(GeometryError::NotUnit(n));
        }
        Ok(Self { direction })
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn from_vector(v: &[f64]) -> Result<Self, GeometryError> {
        let n = euclid_norm(v);
        if n == 0.0 || !n.is_finite() {
            return Err(GeometryError::UndefinedDirection);
        }
        Ok(Self {
            direction: v.iter().map(|x| x / n).collect(),
        })
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    /// Point at distance `t` from `x0` toward this boundary point.
    pub fn ray_point(&self, t: f64) -> Point {
        Point::from_polar(&self.direction, t)
    }
}

/// Signed generator indices: `k > 0` is generator `k - 1`, `-k` its inverse.
pub type Word = Vec<i32>;

/// Reverses and negates a word.
pub fn invert_word(w: &[i32]) -> Word {
    w.iter().rev().map(|l| -l).collect()
}

/// Concatenates two words with free reduction at the seam.
pub fn concat_words(a: &[i32], b: &[i32]) -> Word {
    let mut out: Word = a.to_vec();
    for &l in b {
        if out.last() == Some(&-l) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    out
}

/// An isometry of `H^d` paired with the word that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Isometry {
    n: usize,
    matrix: Vec<f64>,
    word: Word,
    #[serde(skip)]
    since_reorth: u32,
}

impl Isometry {
    pub fn identity(d: usize) -> Self {
        let n = d + 1;
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            matrix[i * n + i] = 1.0;
        }
        Self {
            n,
            matrix,
            word: Vec::new(),
            since_reorth: 0,
        }
    }

    /// Builds an isometry from a row-major matrix, validating it.
    pub fn from_matrix(matrix: Vec<f64>, word: Word, tol: f64) -> Result<Self, GeometryError> {
        let n = (matrix.len() as f64).sqrt().round() as usize;
        if n * n != matrix.len() || n < 2 {
            return Err(GeometryError::DimensionMismatch(matrix.len(), n * n));
        }
        if !validate_isometry(&matrix, n, tol) {
            return Err(GeometryError::IsometryDrift {
                drift: form_defect(&matrix, n),
                tol,
            });
        }
        Ok(Self {
            n,
            matrix,
            word,
            since_reorth: 0,
        })
    }

    /// Hyperbolic translation by `t` along spatial axis `axis` (1-based)
    /// through `x0`.
    pub fn boost(d: usize, axis: usize, t: f64) -> Self {
        assert!(axis >= 1 && axis <= d, "axis out of range");
        let mut g = Self::identity(d);
        let n = g.n;
        g.matrix[0] = t.cosh();
        g.matrix[axis * n + axis] = t.cosh();
        g.matrix[axis] = t.sinh();
        g.matrix[axis * n] = t.sinh();
        g
    }

    /// Rotation by `theta` in the spatial plane spanned by axes `i`, `j`
    /// (1-based), fixing `x0`.
    pub fn rotation(d: usize, i: usize, j: usize, theta: f64) -> Self {
        assert!(i >= 1 && j >= 1 && i <= d && j <= d && i != j);
        let mut g = Self::identity(d);
        let n = g.n;
        let (s, c) = theta.sin_cos();
        g.matrix[i * n + i] = c;
        g.matrix[j * n + j] = c;
        g.matrix[i * n + j] = -s;
        g.matrix[j * n + i] = s;
        g
    }

    /// Image of a Moebius transformation `z -> (az + b)/(cz + d)` of the upper
    /// half-plane, `ad - bc = 1`, acting on `H^2`. The basepoint `x0`
    /// corresponds to `i`.
    pub fn from_sl2(a: f64, b: f64, c: f64, d: f64) -> Self {
        // x <-> X = [[x0 + x1, x2], [x2, x0 - x1]], action X -> g X g^T.
        let act = |x: [f64; 3]| -> [f64; 3] {
            let m = [[x[0] + x[1], x[2]], [x[2], x[0] - x[1]]];
            let g = [[a, b], [c, d]];
            let mut gm = [[0.0; 2]; 2];
            for r in 0..2 {
                for s in 0..2 {
                    gm[r][s] = g[r][0] * m[0][s] + g[r][1] * m[1][s];
                }
            }
            let mut y = [[0.0; 2]; 2];
            for r in 0..2 {
                for s in 0..2 {
                    y[r][s] = gm[r][0] * g[s][0] + gm[r][1] * g[s][1];
                }
            }
            [
                (y[0][0] + y[1][1]) / 2.0,
                (y[0][0] - y[1][1]) / 2.0,
                (y[0][1] + y[1][0]) / 2.0,
            ]
        };
        let cols = [
            act([1.0, 0.0, 0.0]),
            act([0.0, 1.0, 0.0]),
            act([0.0, 0.0, 1.0]),
        ];
        let mut matrix = vec![0.0; 9];
        for (j, col) in cols.iter().enumerate() {
            for i in 0..3 {
                matrix[i * 3 + j] = col[i];
            }
        }
        Self {
            n: 3,
            matrix,
            word: Vec::new(),
            since_reorth: 0,
        }
    }

    pub fn with_word(mut self, word: Word) -> Self {
        self.word = word;
        self
    }

    pub fn dim(&self) -> usize {
        self.n - 1
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn word(&self) -> &[i32] {
        &self.word
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n + j]
    }

    /// `||g|| = d(x0, g x0) = arcosh(M[0][0])`.
    pub fn norm(&self) -> f64 {
        arcosh_stable(self.matrix[0].max(1.0))
    }

    /// The orbit point `g x0`, i.e. the first column.
    pub fn orbit_point(&self) -> Point {
        Point::from_coords_unchecked((0..self.n).map(|i| self.matrix[i * self.n]).collect())
    }

    /// Matrix product `self * other`; words concatenate with free reduction.
    pub fn compose(&self, other: &Isometry, tol: &Tolerances) -> Result<Isometry, GeometryError> {
        if self.n != other.n {
            return Err(GeometryError::DimensionMismatch(self.n, other.n));
        }
        let n = self.n;
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.matrix[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    matrix[i * n + j] += a * other.matrix[k * n + j];
                }
            }
        }
        let mut out = Isometry {
            n,
            matrix,
            word: concat_words(&self.word, &other.word),
            since_reorth: self.since_reorth + other.since_reorth + 1,
        };
        if out.since_reorth >= K_REORTH {
            out.reorthogonalize();
        }
        let drift = relative_drift(&out.matrix, n);
        if drift > tol.iso {
            out.reorthogonalize();
            let drift = relative_drift(&out.matrix, n);
            if drift > tol.iso {
                return Err(GeometryError::IsometryDrift {
                    drift,
                    tol: tol.iso,
                });
            }
        }
        Ok(out)
    }

    /// Minkowski inverse `J M^T J`.
    pub fn inverse(&self) -> Isometry {
        let n = self.n;
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let sign = if (i == 0) != (j == 0) { -1.0 } else { 1.0 };
                matrix[i * n + j] = sign * self.matrix[j * n + i];
            }
        }
        Isometry {
            n,
            matrix,
            word: invert_word(&self.word),
            since_reorth: self.since_reorth,
        }
    }

    pub fn apply(&self, x: &Point) -> Point {
        let n = self.n;
        debug_assert_eq!(x.coords.len(), n);
        let coords = (0..n)
            .map(|i| (0..n).map(|k| self.matrix[i * n + k] * x.coords[k]).sum())
            .collect();
        Point::from_coords_unchecked(coords)
    }

    /// Integer power; negative exponents use the inverse.
    pub fn pow(&self, k: i64, tol: &Tolerances) -> Result<Isometry, GeometryError> {
        let base = if k < 0 { self.inverse() } else { self.clone() };
        let mut out = Isometry::identity(self.dim());
        for _ in 0..k.unsigned_abs() {
            out = out.compose(&base, tol)?;
        }
        Ok(out)
    }

    /// Re-projects onto `M^T J M = J` via `M <- M S^{-1/2}`, `S = J M^T J M`,
    /// with the inverse square root from a coupled Newton-Schulz iteration.
    /// Keeps the original matrix if the drift is already at rounding level,
    /// or if the correction does not reduce it, moves entries by more than
    /// `1e-6` of their scale, or leaves the upper sheet. For large entries
    /// `S` is pure rounding noise and its correction would be garbage.
    pub fn reorthogonalize(&mut self) {
        self.since_reorth = 0;
        let n = self.n;
        let before = relative_drift(&self.matrix, n);
        if before <= 64.0 * f64::EPSILON {
            return;
        }
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    let jk = if k == 0 { -1.0 } else { 1.0 };
                    acc += self.matrix[k * n + i] * jk * self.matrix[k * n + j];
                }
                let ji = if i == 0 { -1.0 } else { 1.0 };
                s[i * n + j] = ji * acc;
            }
        }
        let Some(z) = inverse_sqrt_newton(&s, n) else {
            return;
        };
        let corrected = matmul(&self.matrix, &z, n);
        let scale = self.matrix.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        let moved = self.matrix.iter().zip(&corrected).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        if corrected[0] >= 1.0 && moved <= 1e-6 * scale && relative_drift(&corrected, n) < before {
            self.matrix = corrected;
        }
    }
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

fn inverse_sqrt_newton(s: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut y = s.to_vec();
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    for _ in 0..30 {
        let zy = matmul(&z, &y, n);
        let mut t = vec![0.0; n * n];
        let mut off = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                t[i * n + j] = 0.5 * (3.0 * id - zy[i * n + j]);
                off = off.max((zy[i * n + j] - id).abs());
            }
        }
        if !off.is_finite() || off > 1.0 {
            return None;
        }
        y = matmul(&y, &t, n);
        z = matmul(&t, &z, n);
        if off < 1e-15 {
            break;
        }
    }
    Some(z)
}

/// `max |M^T J M - J|` entrywise.
pub fn form_defect(m: &[f64], n: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                let jk = if k == 0 { -1.0 } else { 1.0 };
                acc += m[k * n + i] * jk * m[k * n + j];
            }
            let target = if i != j {
                0.0
            } else if i == 0 {
                -1.0
            } else {
                1.0
            };
            worst = worst.max((acc - target).abs());
        }
    }
    worst
}

/// Form defect divided by the squared largest entry: the accuracy floating
/// point can deliver for a matrix of that size.
pub fn relative_drift(m: &[f64], n: usize) -> f64 {
    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    form_defect(m, n) / (scale * scale)
}

/// True iff `max |M^T J M - J| <= tol` and `M[0][0] >= 1`.
pub fn validate_isometry(m: &[f64], n: usize, tol: f64) -> bool {
    m.len() == n * n && m[0] >= 1.0 - tol && form_defect(m, n) <= tol
}

pub fn minkowski_form(u: &[f64], v: &[f64]) -> f64 {
    -u[0] * v[0] + u[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum::<f64>()
}

pub fn minkowski_inner(x: &Point, y: &Point) -> f64 {
    minkowski_form(&x.coords, &y.coords)
}

/// `arcosh(x)` for `x >= 1`, written as `log1p` of the offset from 1.
pub fn arcosh_stable(x: f64) -> f64 {
    let u = (x - 1.0).max(0.0);
    (u + (u * (u + 2.0)).sqrt()).ln_1p()
}

fn euclid_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Hyperbolic distance, split into radial and angular parts:
/// `cosh d = cosh(r1 - r2) + 2 sinh r1 sinh r2 sin^2(theta / 2)`.
/// Points on a common ray through `x0` get exact radial differences.
pub fn distance(x: &Point, y: &Point) -> f64 {
    spatial_distance(&x.coords[1..], &y.coords[1..])
}

/// `distance` on spatial coordinates alone.
pub fn spatial_distance(u: &[f64], v: &[f64]) -> f64 {
    let (nu, nv) = (euclid_norm(u), euclid_norm(v));
    let half_radial = 0.5 * (nu.asinh() - nv.asinh());
    let angular = if nu > 0.0 && nv > 0.0 {
        // |u^ - v^| = 2 sin(theta / 2)
        let gap2: f64 = u.iter().zip(v).map(|(a, b)| (a / nu - b / nv).powi(2)).sum();
        nu * nv * gap2 / 4.0
    } else {
        0.0
    };
    let sh = half_radial.sinh();
    2.0 * (sh * sh + angular).sqrt().asinh()
}

/// `(x|y)_base = (d(x,base) + d(base,y) - d(x,y)) / 2`, clamped at 0.
pub fn gromov_product(x: &Point, y: &Point, base: &Point) -> f64 {
    (0.5 * (distance(x, base) + distance(base, y) - distance(x, y))).max(0.0)
}

/// Point at arclength `t` from `x` on `[x, y]`.
pub fn geodesic_point(x: &Point, y: &Point, t: f64) -> Result<Point, GeometryError> {
    let len = distance(x, y);
    if len <= 0.0 {
        return Err(GeometryError::UndefinedDirection);
    }
    if t < -1e-12 || t > len + 1e-9 * len.max(1.0) {
        return Err(GeometryError::OutOfRange { t, len });
    }
    let t = t.clamp(0.0, len);
    let sl = len.sinh();
    let (wa, wb) = ((len - t).sinh() / sl, t.sinh() / sl);
    let coords = x
        .coords
        .iter()
        .zip(&y.coords)
        .map(|(a, b)| wa * a + wb * b)
        .collect();
    Ok(Point::from_coords_unchecked(coords))
}

/// Angle at `x0` between two boundary directions, in `[0, pi]`.
pub fn visual_angle(xi: &BoundaryPoint, eta: &BoundaryPoint) -> f64 {
    let dot: f64 = xi
        .direction
        .iter()
        .zip(&eta.direction)
        .map(|(a, b)| a * b)
        .sum();
    dot.clamp(-1.0, 1.0).acos()
}

/// Initial direction at `x0` of the ray through `x`.
pub fn boundary_direction(x: &Point) -> Result<BoundaryPoint, GeometryError> {
    let s = x.spatial();
    let n = euclid_norm(s);
    if n <= 1e-300 {
        return Err(GeometryError::UndefinedDirection);
    }
    BoundaryPoint::from_vector(s)
}

/// Point at distance `t` from `p` along the unit tangent `v` (`<p,v> = 0`).
pub fn exp_map(p: &Point, v: &[f64], t: f64) -> Point {
    let (c, s) = (t.cosh(), t.sinh());
    Point::from_coords_unchecked(p.coords.iter().zip(v).map(|(a, b)| c * a + s * b).collect())
}

/// Projects `w` onto the tangent space at `p` and normalizes it.
pub fn tangent_direction(p: &Point, w: &[f64]) -> Option<Vec<f64>> {
    let ip = minkowski_form(w, &p.coords);
    let v: Vec<f64> = w.iter().zip(&p.coords).map(|(a, b)| a + ip * b).collect();
    let n2 = minkowski_form(&v, &v);
    if n2 <= 1e-24 {
        return None;
    }
    let n = n2.sqrt();
    Some(v.into_iter().map(|x| x / n).collect())
}

/// Unit tangent at `x` pointing toward `y`.
pub fn direction_toward(x: &Point, y: &Point) -> Result<Vec<f64>, GeometryError> {
    let len = distance(x, y);
    if len <= 0.0 {
        return Err(GeometryError::UndefinedDirection);
    }
    // y = cosh(len) x + sinh(len) v
    let (c, s) = (len.cosh(), len.sinh());
    Ok(x
        .coords
        .iter()
        .zip(&y.coords)
        .map(|(a, b)| (b - c * a) / s)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn x0() -> Point {
        Point::origin(2)
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn inner_product_examples() {
        assert!((minkowski_inner(&x0(), &x0()) + 1.0).abs() < 1e-15);
        let p = Isometry::boost(2, 1, 1.0).apply(&x0());
        assert!((minkowski_inner(&x0(), &p) + 1f64.cosh()).abs() < 1e-14);
        let a = Point::new(vec![1f64.cosh(), 1f64.sinh(), 0.0], 1e-12).unwrap();
        let b = Point::new(vec![1f64.cosh(), -1f64.sinh(), 0.0], 1e-12).unwrap();
        assert!((minkowski_inner(&a, &b) + 2f64.cosh()).abs() < 1e-13);
        assert!((distance(&a, &b) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&x0(), &x0()), 0.0);
        let p = Isometry::boost(2, 1, 1.0).apply(&x0());
        assert!((distance(&x0(), &p) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn distance_matches_arcosh_of_form() {
        let g = Isometry::boost(3, 2, 0.7)
            .compose(&Isometry::rotation(3, 1, 3, 0.4), &tol())
            .unwrap()
            .compose(&Isometry::boost(3, 1, 2.3), &tol())
            .unwrap();
        let p = g.apply(&x0_3());
        let q = Isometry::boost(3, 3, 1.9).apply(&x0_3());
        let oracle = arcosh_stable(-minkowski_inner(&p, &q));
        assert!((distance(&p, &q) - oracle).abs() < 1e-12);
    }

    fn x0_3() -> Point {
        Point::origin(3)
    }

    #[test]
    fn gromov_product_examples() {
        let x = Isometry::boost(2, 1, 1.0).apply(&x0());
        let y = Isometry::boost(2, 2, 1.0).apply(&x0());
        assert!(gromov_product(&x, &y, &x).abs() < 1e-12);
        let far = Isometry::boost(2, 1, -2.0).apply(&x0());
        assert!(gromov_product(&x, &far, &x0()).abs() < 1e-12);
        let expected = 0.5 * (2.0 - arcosh_stable(1f64.cosh().powi(2)));
        assert!((gromov_product(&x, &y, &x0()) - expected).abs() < 1e-12);
    }

    #[test]
    fn geodesic_point_examples() {
        let y = Isometry::boost(2, 1, 2.0).apply(&x0());
        let start = geodesic_point(&x0(), &y, 0.0).unwrap();
        assert!(distance(&start, &x0()) < 1e-12);
        let end = geodesic_point(&x0(), &y, 2.0).unwrap();
        assert!(distance(&end, &y) < 1e-12);
        let mid = geodesic_point(&x0(), &y, 1.0).unwrap();
        let b1 = Isometry::boost(2, 1, 1.0).apply(&x0());
        assert!(distance(&mid, &b1) < 1e-12);
        assert_eq!(
            geodesic_point(&x0(), &x0(), 0.0),
            Err(GeometryError::UndefinedDirection)
        );
    }

    #[test]
    fn visual_angle_examples() {
        let e1 = BoundaryPoint::new(vec![1.0, 0.0], 1e-12).unwrap();
        let e2 = BoundaryPoint::new(vec![0.0, 1.0], 1e-12).unwrap();
        let m1 = BoundaryPoint::new(vec![-1.0, 0.0], 1e-12).unwrap();
        assert_eq!(visual_angle(&e1, &e1), 0.0);
        assert!((visual_angle(&e1, &m1) - PI).abs() < 1e-15);
        assert!((visual_angle(&e1, &e2) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_direction_examples() {
        let p = Isometry::boost(3, 1, 2.5).apply(&x0_3());
        assert_eq!(boundary_direction(&p).unwrap().direction(), &[1.0, 0.0, 0.0]);
        let q = Isometry::boost(3, 2, 0.5).apply(&x0_3());
        assert_eq!(boundary_direction(&q).unwrap().direction(), &[0.0, 1.0, 0.0]);
        assert_eq!(
            boundary_direction(&x0_3()),
            Err(GeometryError::UndefinedDirection)
        );
    }

    #[test]
    fn loxodromic_directions_converge() {
        let g = Isometry::boost(2, 1, 1.0)
            .compose(&Isometry::rotation(2, 1, 2, 0.3), &tol())
            .unwrap()
            .compose(&Isometry::boost(2, 2, 0.8), &tol())
            .unwrap();
        let dirs: Vec<_> = (5..=10)
            .map(|n| boundary_direction(&g.pow(n, &tol()).unwrap().orbit_point()).unwrap())
            .collect();
        let gaps: Vec<f64> = dirs.windows(2).map(|w| visual_angle(&w[0], &w[1])).collect();
        for w in gaps.windows(2) {
            assert!(w[1] < w[0] || w[1] < 1e-12);
        }
        assert!(*gaps.last().unwrap() < 1e-3);
    }

    #[test]
    fn isometry_algebra_examples() {
        let g = Isometry::boost(3, 1, 1.3)
            .compose(&Isometry::rotation(3, 2, 3, 0.9), &tol())
            .unwrap();
        let id = g.compose(&g.inverse(), &tol()).unwrap();
        assert!(validate_isometry(id.matrix(), 4, 1e-8));
        for i in 0..4 {
            for j in 0..4 {
                let t = if i == j { 1.0 } else { 0.0 };
                assert!((id.entry(i, j) - t).abs() < 1e-8);
            }
        }
        assert!(id.word().is_empty());
        let x = Isometry::boost(3, 2, 0.4).apply(&x0_3());
        assert!(distance(&Isometry::identity(3).apply(&x), &x) < 1e-15);
        let st = Isometry::boost(2, 1, 0.6)
            .compose(&Isometry::boost(2, 1, 1.1), &tol())
            .unwrap();
        let direct = Isometry::boost(2, 1, 1.7).apply(&x0());
        assert!(distance(&st.apply(&x0()), &direct) < 1e-12);
    }

    #[test]
    fn validate_examples() {
        assert!(validate_isometry(Isometry::identity(2).matrix(), 3, 1e-8));
        let bad = vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0];
        assert!(!validate_isometry(&bad, 3, 1e-8));
        for t in [-3.0, -0.5, 0.0, 0.1, 2.0, 7.5] {
            let b = Isometry::boost(3, 2, t);
            assert!(validate_isometry(b.matrix(), 4, 1e-8 * b.entry(0, 0).powi(2)));
        }
    }

    #[test]
    fn sl2_image_is_isometry() {
        let g = Isometry::from_sl2(1.0, 1.0, 1.0, 2.0);
        assert!(validate_isometry(g.matrix(), 3, 1e-12));
        // trace 3 hyperbolic: translation length 2 arcosh(3/2), symmetric so
        // its axis passes through i.
        assert!((g.norm() - 2.0 * arcosh_stable(1.5)).abs() < 1e-12);
        let p = Isometry::from_sl2(1.0, 2.0, 0.0, 1.0);
        assert!(validate_isometry(p.matrix(), 3, 1e-12));
    }

    #[test]
    fn long_words_stay_valid() {
        let a = Isometry::boost(2, 1, 0.3)
            .compose(&Isometry::rotation(2, 1, 2, 1.0), &tol())
            .unwrap();
        let b = a.inverse();
        let mut g = Isometry::identity(2);
        for i in 0..500 {
            g = g.compose(if i % 3 == 0 { &b } else { &a }, &tol()).unwrap();
        }
        assert!(relative_drift(g.matrix(), 3) < 1e-12);
    }

    #[test]
    fn reorthogonalize_repairs_perturbation() {
        let mut g = Isometry::boost(2, 1, 1.0);
        g.matrix[1] += 1e-6;
        assert!(form_defect(&g.matrix, 3) > 1e-7);
        g.reorthogonalize();
        assert!(form_defect(&g.matrix, 3) < 1e-12);
    }

    #[test]
    fn long_products_match_plain_multiplication() {
        // past the periodic re-projection with entries far above 1e15
        let a = Isometry::boost(2, 1, 1.0);
        let b = Isometry::rotation(2, 1, 2, 0.2);
        let mut g = Isometry::identity(2);
        let mut plain = g.matrix.clone();
        for k in 0..140 {
            let s = if k % 2 == 0 { &a } else { &b };
            g = g.compose(s, &Tolerances::default()).unwrap();
            plain = matmul(&plain, &s.matrix, 3);
        }
        assert!(plain[0] > 1e15);
        assert!((g.matrix[0] / plain[0] - 1.0).abs() < 1e-9, "{} vs {}", g.matrix[0], plain[0]);
    }

    #[test]
    fn word_algebra() {
        assert_eq!(concat_words(&[1, 2], &[-2, 3]), vec![1, 3]);
        assert_eq!(invert_word(&[1, -2, 3]), vec![-3, 2, -1]);
    }

    #[test]
    fn far_nearby_points_keep_precision() {
        // two points at radius 20 separated by 1e-3 along a sphere
        let p = Point::from_polar(&[1.0, 0.0], 20.0);
        let r = Isometry::rotation(2, 1, 2, 1e-3 / 20f64.sinh());
        let q = r.apply(&p);
        let d = distance(&p, &q);
        // tangential displacement: sinh(d/2) = sinh(20) sin(theta/2)
        let exact = 2.0 * (20f64.sinh() * (0.5e-3 / 20f64.sinh()).sin()).asinh();
        assert!((d - exact).abs() < 1e-9, "{d} vs {exact}");
    }
}
