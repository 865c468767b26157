//! Seeded randomized and exhaustive checks of the geometric lemmas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{chain_shadowing, check_chain_steps, random_chain_steps, ChainError, ChainParams};
use crate::group::{GroupSpec, OrbitBall};
use crate::hyperbolic::{gromov_product, Isometry, Point, Tolerances};
use crate::semigroup::{phi_map, word_distance, PhiChoice, PingPongPair, SemigroupError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest observed value of the checked quantity.
    pub worst: f64,
    pub bound: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize, max_norm: f64) -> Point {
    let dir: Vec<f64> = if dim == 2 {
        let t = rng.gen::<f64>() * std::f64::consts::TAU;
        vec![t.cos(), t.sin()]
    } else {
        let z: f64 = rng.gen_range(-1.0..1.0);
        let p = rng.gen::<f64>() * std::f64::consts::TAU;
        let r = (1.0 - z * z).sqrt();
        vec![r * p.cos(), r * p.sin(), z]
    };
    Point::from_polar(&dir, rng.gen::<f64>() * max_norm)
}

/// `(x|z)_{x0} >= min((x|y)_{x0}, (y|z)_{x0}) - ln 2` on random triples,
/// half in H^2 and half in H^3. `worst` is the largest deficit
/// `min(..) - (x|z)` seen.
pub fn four_point_suite(seed: u64, n: usize, max_norm: f64, slack: f64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..n {
        let dim = 2 + k % 2;
        let o = Point::origin(dim);
        let (x, y, z) = (
            random_point(&mut rng, dim, max_norm),
            random_point(&mut rng, dim, max_norm),
            random_point(&mut rng, dim, max_norm),
        );
        let deficit = gromov_product(&x, &y, &o).min(gromov_product(&y, &z, &o)) - gromov_product(&x, &z, &o);
        worst = worst.max(deficit);
        if deficit > slack {
            failures += 1;
        }
    }
    SuiteReport { name: "four-point".into(), cases: n, failures, worst, bound: slack }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSuiteReport {
    pub chains: usize,
    pub counterexamples: usize,
    /// Largest `offset - C` and `(z_0|z_N)_{z_i} - C` over all chains.
    pub worst_offset_excess: f64,
    pub worst_product_excess: f64,
    pub offset_allowance: f64,
    pub product_allowance: f64,
    pub first_counterexample: Option<String>,
}

impl ChainSuiteReport {
    pub fn passed(&self) -> bool {
        self.counterexamples == 0 && self.chains > 0
    }
}

/// Random `(C, D)`-chains with `D = 2C + 15` and 3 to 9 points, shadowed by
/// their endpoint geodesic.
pub fn chain_suite(seed: u64, n: usize, tol: &Tolerances) -> Result<ChainSuiteReport, ChainError> {
    let results: Vec<Result<Result<(f64, f64), String>, ChainError>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let c = rng.gen_range(0.5..3.0);
            let params = ChainParams::new(c, 2.0 * c + 15.0)?;
            let points = rng.gen_range(3..10);
            let dim = 2 + k % 2;
            let steps = random_chain_steps(&mut rng, params, points, dim, 5.0, tol)?;
            let cert = check_chain_steps(&steps, params, tol)?;
            match chain_shadowing(&cert, tol) {
                Ok(shadow) => Ok(Ok(shadow.iter().fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |(o, g), p| {
                    (o.max(p.offset - c), g.max(p.gromov - c))
                }))),
                Err(ChainError::Counterexample(ce)) => Ok(Err(format!("chain {k}: {} at {}", ce.kind, ce.index))),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut report = ChainSuiteReport {
        chains: n,
        counterexamples: 0,
        worst_offset_excess: f64::NEG_INFINITY,
        worst_product_excess: f64::NEG_INFINITY,
        offset_allowance: 6.0,
        product_allowance: 1.5,
        first_counterexample: None,
    };
    for r in results {
        match r? {
            Ok((o, g)) => {
                report.worst_offset_excess = report.worst_offset_excess.max(o);
                report.worst_product_excess = report.worst_product_excess.max(g);
            }
            Err(msg) => {
                report.counterexamples += 1;
                report.first_counterexample.get_or_insert(msg);
            }
        }
    }
    Ok(report)
}

/// `||g_1 a g_2 ... a g_N|| >= sum ||g_i|| - slack` for random tuples of
/// alphabet letters with `N` in `lengths`. `worst` is the largest deficit.
pub fn extension_suite(
    seed: u64,
    n: usize,
    letters: &[Isometry],
    pair: &PingPongPair,
    lengths: std::ops::RangeInclusive<usize>,
    slack: f64,
    tol: &Tolerances,
) -> Result<SuiteReport, SemigroupError> {
    if letters.is_empty() {
        return Err(SemigroupError::Degenerate("empty alphabet".into()));
    }
    let a = pair.a()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tuples: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let len = rng.gen_range(lengths.clone());
            (0..len).map(|_| rng.gen_range(0..letters.len())).collect()
        })
        .collect();
    let deficits: Vec<f64> = tuples
        .par_iter()
        .map(|t| -> Result<f64, SemigroupError> {
            let mut acc = letters[t[0]].clone();
            for &i in &t[1..] {
                acc = acc.compose(a, tol)?.compose(&letters[i], tol)?;
            }
            let sum: f64 = t.iter().map(|&i| letters[i].norm()).sum();
            Ok(sum - acc.norm())
        })
        .collect::<Result<_, _>>()?;
    Ok(SuiteReport {
        name: "extension".into(),
        cases: n,
        failures: deficits.iter().filter(|&&d| d > slack).count(),
        worst: deficits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        bound: slack,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiSuiteReport {
    pub elements: usize,
    pub counterexamples: usize,
    /// Largest `| ||Phi(g)|| - ||g|| |` over `||g|| >= ||a||`.
    pub max_shift: f64,
    pub shift_bound: f64,
    pub max_class: usize,
    /// Elements shorter than `a`, all sent to `b a b`.
    pub small_bucket: usize,
    pub choices: [usize; 5],
}

impl PhiSuiteReport {
    pub fn passed(&self) -> bool {
        self.counterexamples == 0 && self.max_shift <= self.shift_bound + 1e-9 && self.max_class <= 4
    }
}

/// Runs the repair map over every ball element. Preimage classes are found
/// by comparing outputs of nearly equal norm with the exact word distance.
pub fn phi_suite(
    spec: &GroupSpec,
    ball: &OrbitBall,
    pair: &PingPongPair,
    dedup_tol: f64,
    tol: &Tolerances,
) -> Result<PhiSuiteReport, SemigroupError> {
    let a_norm = pair.a()?.norm();
    let outputs: Vec<Result<(f64, Isometry, PhiChoice), SemigroupError>> = ball
        .elements
        .par_iter()
        .map(|e| phi_map(&e.iso, pair, tol).map(|o| (e.norm, o.element, o.choice)))
        .collect();
    let mut report = PhiSuiteReport {
        elements: ball.len(),
        counterexamples: 0,
        max_shift: 0.0,
        shift_bound: 2.5 * a_norm,
        max_class: 0,
        small_bucket: 0,
        choices: [0; 5],
    };
    let mut images: Vec<Isometry> = Vec::new();
    for out in outputs {
        match out {
            Ok((norm, image, choice)) => {
                report.choices[choice as usize] += 1;
                if choice == PhiChoice::SmallNorm {
                    report.small_bucket += 1;
                    continue;
                }
                report.max_shift = report.max_shift.max((image.norm() - norm).abs());
                images.push(image);
            }
            Err(SemigroupError::FactCounterexample { .. }) => report.counterexamples += 1,
            Err(e) => return Err(e),
        }
    }
    images.sort_by(|x, y| x.norm().total_cmp(&y.norm()));
    let classes: Vec<usize> = (0..images.len())
        .into_par_iter()
        .map(|i| -> Result<usize, SemigroupError> {
            let mut size = 1;
            for j in i + 1..images.len() {
                if images[j].norm() - images[i].norm() > 1e-6 {
                    break;
                }
                if word_distance(spec, &images[i], &images[j], tol)? < dedup_tol {
                    size += 1;
                }
            }
            Ok(size)
        })
        .collect::<Result<_, _>>()?;
    report.max_class = classes.into_iter().max().unwrap_or(0);
    Ok(report)
}
