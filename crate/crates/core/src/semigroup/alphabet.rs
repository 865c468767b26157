use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_property_a, ConstantsMode, PingPongPair, PropertyACertificate, SemigroupError, SyntheticParams};
use crate::group::{exponent_from_norms, separated_net, BallElement, CriticalExponentEstimate, GroupSpec, OrbitBall};
use crate::hyperbolic::{concat_words, invert_word, Isometry, Tolerances};

/// The seed alphabet `K` with the data that selected it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedAlphabet {
    pub mode: ConstantsMode,
    pub epsilon: f64,
    pub r0: f64,
    /// `[R0 - width, R0]`.
    pub annulus: (f64, f64),
    pub separation: f64,
    pub letters: Vec<Isometry>,
    pub certificates: Vec<PropertyACertificate>,
    /// Annulus elements of `Phi(Gamma)`, i.e. those passing the canonical check.
    pub annulus_candidates: usize,
    /// `exp((1 - 0.007 eps) delta R0)` when an exponent estimate was given.
    pub growth_bound: Option<f64>,
    pub growth_bound_met: Option<bool>,
    /// `(R0, #K)` for each radius tried.
    pub r0_search: Vec<(f64, usize)>,
}

impl SeedAlphabet {
    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.letters.iter().map(Isometry::norm).collect()
    }
}

/// The radius bound `R0 > 10^7 (C + r0)(1 + delta) / (delta eps)`, with
/// `r0` the smallest sampled radius past which the ball obeys
/// `#B_r <= exp((1 + 0.001 eps) delta r)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PaperAlphabetPlan {
    pub c: f64,
    pub growth_onset: f64,
    pub r0_required: f64,
    pub delta_hat: f64,
    pub epsilon: f64,
}

pub fn paper_alphabet_plan(ball: &OrbitBall, pair: &PingPongPair, delta_hat: f64, epsilon: f64) -> PaperAlphabetPlan {
    let mut norms = ball.norms();
    norms.sort_by(f64::total_cmp);
    let limit = |r: f64| ((1.0 + 1e-3 * epsilon) * delta_hat * r).exp();
    let mut onset = 0.0;
    let mut r = 1.0;
    while r <= ball.radius {
        let count = norms.partition_point(|&n| n < r) as f64;
        if count > limit(r) {
            onset = r;
        }
        r += 1.0;
    }
    let c = pair.c();
    PaperAlphabetPlan {
        c,
        growth_onset: onset,
        r0_required: 1e7 * (c + onset) * (1.0 + delta_hat) / (delta_hat * epsilon),
        delta_hat,
        epsilon,
    }
}

pub const R0_STEP: f64 = 0.25;

/// Selects `K`: a greedy maximal separated subset of the annulus elements
/// of `Phi(Gamma)`. In synthetic mode `R0` is the smallest grid radius
/// giving at least `n_min` letters unless `r0_override` is set.
pub fn build_seed_alphabet(
    ball: &OrbitBall,
    pair: &PingPongPair,
    epsilon: f64,
    synth: &SyntheticParams,
    r0_override: Option<f64>,
    delta_hat: Option<f64>,
) -> Result<SeedAlphabet, SemigroupError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SemigroupError::Degenerate(format!("epsilon {epsilon} outside (0, 1)")));
    }
    if pair.constants.mode == ConstantsMode::Paper {
        let plan = paper_alphabet_plan(ball, pair, delta_hat.unwrap_or(1.0), epsilon);
        return Err(SemigroupError::PaperModeOnly(format!(
            "seed alphabet needs R0 > {:.3e} (C = {:.3e}, growth onset {})",
            plan.r0_required, plan.c, plan.growth_onset
        )));
    }
    let a_norm = pair.a()?.norm();
    let c = pair.c();
    // only annulus elements can become letters; certify those at or above ||a||
    let lowest = r0_override.map_or(a_norm, |r| r * (1.0 - synth.annulus_frac * epsilon));
    let pool: Vec<usize> = (0..ball.len())
        .filter(|&i| ball.elements[i].norm >= lowest.min(a_norm))
        .collect();
    let certs: Vec<(usize, PropertyACertificate)> = pool
        .par_iter()
        .map(|&i| check_property_a(&ball.elements[i].iso, pair).map(|c| (i, c)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|(_, c)| c.ok)
        .collect();

    let select = |r0: f64| {
        let width = synth.annulus_frac * epsilon * r0;
        let sep = synth.separation_factor * c + synth.width_factor * width;
        let subset: Vec<&(usize, PropertyACertificate)> = certs
            .iter()
            .filter(|(i, _)| {
                let n = ball.elements[*i].norm;
                n >= r0 - width && n <= r0
            })
            .collect();
        let elems: Vec<BallElement> = subset.iter().map(|(i, _)| ball.elements[*i].clone()).collect();
        let net = separated_net(&elems, sep);
        (width, sep, subset.len(), net.into_iter().map(|k| subset[k].clone()).collect::<Vec<_>>())
    };

    let mut r0_search = Vec::new();
    let chosen = if let Some(r0) = r0_override {
        if r0 > ball.radius {
            return Err(SemigroupError::Budget(format!("R0 = {r0} exceeds the ball radius {}", ball.radius)));
        }
        let s = select(r0);
        r0_search.push((r0, s.3.len()));
        Some((r0, s))
    } else {
        let mut r0 = (a_norm / R0_STEP).ceil() * R0_STEP;
        let mut found = None;
        while r0 <= ball.radius + 1e-12 {
            let s = select(r0);
            r0_search.push((r0, s.3.len()));
            if s.3.len() >= synth.n_min {
                found = Some((r0, s));
                break;
            }
            r0 += R0_STEP;
        }
        found
    };
    let Some((r0, (width, separation, annulus_candidates, picked))) = chosen else {
        return Err(SemigroupError::Budget(format!(
            "no R0 <= {} gives {} letters (best {:?})",
            ball.radius,
            synth.n_min,
            r0_search.iter().map(|x| x.1).max()
        )));
    };
    if picked.is_empty() {
        return Err(SemigroupError::Budget(format!("annulus at R0 = {r0} is empty")));
    }
    let growth_bound = delta_hat.map(|d| ((1.0 - 0.007 * epsilon) * d * r0).exp());
    let (letters, certificates): (Vec<Isometry>, Vec<PropertyACertificate>) = picked
        .into_iter()
        .map(|(i, c)| (ball.elements[i].iso.clone(), c))
        .unzip();
    Ok(SeedAlphabet {
        mode: ConstantsMode::Synthetic,
        epsilon,
        r0,
        annulus: (r0 - width, r0),
        separation,
        growth_bound_met: growth_bound.map(|b| letters.len() as f64 >= b),
        growth_bound,
        annulus_candidates,
        letters,
        certificates,
        r0_search,
    })
}

/// An element `g_1 a g_2 ... a g_n` of the truncated semigroup set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FWord {
    /// Indices into the alphabet.
    pub letters: Vec<usize>,
    pub element: Isometry,
    pub norm: f64,
    /// `sum ||g_i||`, a lower bound for `norm`.
    pub part_sum: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FTruncation {
    pub words: Vec<FWord>,
    pub radius: f64,
    pub word_cap: usize,
    /// Every word of norm below this value is present.
    pub complete_below: f64,
    /// `min (norm - part_sum)` over enumerated words.
    pub min_slack: f64,
}

impl FTruncation {
    pub fn norms(&self) -> Vec<f64> {
        self.words.iter().map(|w| w.norm).collect()
    }

    /// Growth regression over `[window_fraction * T, T]` with `T` the
    /// completeness radius.
    pub fn exponent(&self, window_fraction: f64) -> Result<CriticalExponentEstimate, SemigroupError> {
        Ok(exponent_from_norms(&self.norms(), self.complete_below, window_fraction)?)
    }
}

/// Enumerates the words of at most `word_cap` letters with norm below
/// `radius`. Words of the semigroup set are themselves admissible, so each
/// extension satisfies `||w a g|| >= ||w|| + ||g||` as well as
/// `||g_1 a ... g_n|| >= sum ||g_i||`; both are asserted, and the first
/// justifies pruning a branch once `||w|| + ||g||` reaches the radius.
pub fn enumerate_f(
    letters: &[Isometry],
    pair: &PingPongPair,
    radius: f64,
    word_cap: usize,
    max_words: usize,
    tol: &Tolerances,
) -> Result<FTruncation, SemigroupError> {
    if letters.is_empty() {
        return Err(SemigroupError::Degenerate("empty alphabet".into()));
    }
    let a = pair.a()?;
    let norms: Vec<f64> = letters.iter().map(Isometry::norm).collect();
    let min_norm = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let mut level: Vec<FWord> = letters
        .iter()
        .enumerate()
        .filter(|(i, _)| norms[*i] < radius)
        .map(|(i, g)| FWord { letters: vec![i], element: g.clone(), norm: norms[i], part_sum: norms[i] })
        .collect();
    let mut words = Vec::new();
    for _ in 1..word_cap {
        if level.is_empty() {
            break;
        }
        let next: Vec<FWord> = level
            .par_iter()
            .map(|w| -> Result<Vec<FWord>, SemigroupError> {
                let stem = w.element.compose(a, tol)?;
                let mut out = Vec::new();
                for (i, g) in letters.iter().enumerate() {
                    if w.norm + norms[i] >= radius {
                        continue;
                    }
                    let element = stem.compose(g, tol)?;
                    let norm = element.norm();
                    let part_sum = w.part_sum + norms[i];
                    let bound = part_sum.max(w.norm + norms[i]);
                    if norm < bound - tol.point {
                        let mut parts: Vec<Vec<i32>> = w.letters.iter().map(|&k| letters[k].word().to_vec()).collect();
                        parts.push(g.word().to_vec());
                        return Err(SemigroupError::ExtensionViolation { norm, sum: bound, words: parts });
                    }
                    if norm >= radius {
                        continue;
                    }
                    let mut l = w.letters.clone();
                    l.push(i);
                    out.push(FWord { letters: l, element, norm, part_sum });
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect();
        words.append(&mut level);
        if words.len() + next.len() > max_words {
            return Err(SemigroupError::Budget(format!(
                "truncated F exceeds {max_words} words below {radius}"
            )));
        }
        level = next;
    }
    words.append(&mut level);
    let min_slack = words.iter().map(|w| w.norm - w.part_sum).fold(f64::INFINITY, f64::min);
    Ok(FTruncation {
        words,
        radius,
        word_cap,
        complete_below: radius.min((word_cap + 1) as f64 * min_norm),
        min_slack,
    })
}

/// Norms of every semigroup word below `radius` (at most `word_cap`
/// letters), without keeping the elements. Depth-first, one task per first
/// letter; the inequalities of `enumerate_f` are asserted on every
/// extension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FNormCensus {
    pub norms: Vec<f64>,
    pub radius: f64,
    pub word_cap: usize,
    pub complete_below: f64,
    pub min_slack: f64,
}

impl FNormCensus {
    pub fn exponent(&self, window_fraction: f64) -> Result<CriticalExponentEstimate, SemigroupError> {
        Ok(exponent_from_norms(&self.norms, self.complete_below, window_fraction)?)
    }
}

struct CensusCtx<'a> {
    letters: &'a [Isometry],
    norms: &'a [f64],
    a: &'a Isometry,
    radius: f64,
    word_cap: usize,
    max_words: usize,
    counter: &'a std::sync::atomic::AtomicUsize,
    tol: &'a Tolerances,
}

fn census_dfs(
    ctx: &CensusCtx,
    element: &Isometry,
    norm: f64,
    part_sum: f64,
    depth: usize,
    out: &mut (Vec<f64>, f64),
) -> Result<(), SemigroupError> {
    out.0.push(norm);
    out.1 = out.1.min(norm - part_sum);
    if ctx.counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed) >= ctx.max_words {
        return Err(SemigroupError::Budget(format!(
            "semigroup census exceeds {} words below {}",
            ctx.max_words, ctx.radius
        )));
    }
    if depth == ctx.word_cap {
        return Ok(());
    }
    let stem = element.compose(ctx.a, ctx.tol)?;
    for (g, &gn) in ctx.letters.iter().zip(ctx.norms) {
        if norm + gn >= ctx.radius {
            continue;
        }
        let child = stem.compose(g, ctx.tol)?;
        let cn = child.norm();
        let bound = (part_sum + gn).max(norm + gn);
        if cn < bound - ctx.tol.point {
            return Err(SemigroupError::ExtensionViolation { norm: cn, sum: bound, words: Vec::new() });
        }
        if cn < ctx.radius {
            census_dfs(ctx, &child, cn, part_sum + gn, depth + 1, out)?;
        }
    }
    Ok(())
}

pub fn f_norm_census(
    letters: &[Isometry],
    pair: &PingPongPair,
    radius: f64,
    word_cap: usize,
    max_words: usize,
    tol: &Tolerances,
) -> Result<FNormCensus, SemigroupError> {
    if letters.is_empty() {
        return Err(SemigroupError::Degenerate("empty alphabet".into()));
    }
    // words are dropped: only matrices travel through the recursion
    let a = pair.a()?.clone().with_word(Vec::new());
    let stripped: Vec<Isometry> = letters.iter().map(|g| g.clone().with_word(Vec::new())).collect();
    let norms: Vec<f64> = letters.iter().map(Isometry::norm).collect();
    let counter = std::sync::atomic::AtomicUsize::new(0);
    let ctx = CensusCtx {
        letters: &stripped,
        norms: &norms,
        a: &a,
        radius,
        word_cap,
        max_words,
        counter: &counter,
        tol,
    };
    let parts: Vec<(Vec<f64>, f64)> = (0..stripped.len())
        .into_par_iter()
        .map(|i| {
            let mut out = (Vec::new(), f64::INFINITY);
            if norms[i] < radius {
                census_dfs(&ctx, &stripped[i], norms[i], norms[i], 1, &mut out)?;
            }
            Ok(out)
        })
        .collect::<Result<_, SemigroupError>>()?;
    let min_norm = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let mut all = Vec::new();
    let mut min_slack = f64::INFINITY;
    for (n, s) in parts {
        all.extend(n);
        min_slack = min_slack.min(s);
    }
    Ok(FNormCensus {
        norms: all,
        radius,
        word_cap,
        complete_below: radius.min((word_cap + 1) as f64 * min_norm),
        min_slack,
    })
}

/// `d(u x0, v x0)` evaluated as `||u^-1 v||` on the freely reduced word, so
/// that no far coordinates are differenced.
pub fn word_distance(spec: &GroupSpec, u: &Isometry, v: &Isometry, tol: &Tolerances) -> Result<f64, SemigroupError> {
    let w = concat_words(&invert_word(u.word()), v.word());
    Ok(spec.evaluate(&w, tol)?.norm())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectivityReport {
    pub n_max: usize,
    pub tuples: usize,
    pub pairs_compared: usize,
    pub collisions: Vec<(Vec<usize>, Vec<usize>)>,
    /// Smallest `d(u x0, v x0)` among compared pairs.
    pub min_distance: f64,
}

impl InjectivityReport {
    pub fn injective(&self) -> bool {
        self.collisions.is_empty()
    }
}

/// All tuples in `K^n` for `n <= n_max`, in lexicographic order per length.
pub fn all_tuples(letters: &[Isometry], n_max: usize, pair: &PingPongPair, tol: &Tolerances) -> Result<Vec<FWord>, SemigroupError> {
    let a = pair.a()?;
    let mut out: Vec<FWord> = Vec::new();
    let mut level: Vec<FWord> = letters
        .iter()
        .enumerate()
        .map(|(i, g)| FWord { letters: vec![i], element: g.clone(), norm: g.norm(), part_sum: g.norm() })
        .collect();
    for n in 1..=n_max {
        let next = if n < n_max {
            let mut next = Vec::with_capacity(level.len() * letters.len());
            for w in &level {
                let stem = w.element.compose(a, tol)?;
                for (i, g) in letters.iter().enumerate() {
                    let element = stem.compose(g, tol)?;
                    let mut l = w.letters.clone();
                    l.push(i);
                    next.push(FWord { norm: element.norm(), letters: l, element, part_sum: w.part_sum + g.norm() });
                }
            }
            next
        } else {
            Vec::new()
        };
        out.append(&mut level);
        level = next;
    }
    Ok(out)
}

/// Injectivity of `F` on `K^n`, `n <= n_max`, across all lengths. Pairs
/// are bucketed by norm (equal orbit points have equal norms) and compared
/// by `word_distance` against `dedup_tol`; pairs with norms within
/// `window` are compared, which also yields the reported minimum distance.
pub fn check_injectivity(
    spec: &GroupSpec,
    letters: &[Isometry],
    pair: &PingPongPair,
    n_max: usize,
    dedup_tol: f64,
    window: f64,
    tol: &Tolerances,
) -> Result<InjectivityReport, SemigroupError> {
    let mut words = all_tuples(letters, n_max, pair, tol)?;
    words.sort_by(|x, y| x.norm.total_cmp(&y.norm).then_with(|| x.letters.cmp(&y.letters)));
    let width = window.max(dedup_tol);
    let results: Vec<(usize, f64, Vec<(Vec<usize>, Vec<usize>)>)> = (0..words.len())
        .into_par_iter()
        .map(|i| -> Result<_, SemigroupError> {
            let mut compared = 0;
            let mut best = f64::INFINITY;
            let mut hits = Vec::new();
            for j in i + 1..words.len() {
                if words[j].norm - words[i].norm > width {
                    break;
                }
                compared += 1;
                let d = word_distance(spec, &words[i].element, &words[j].element, tol)?;
                best = best.min(d);
                if d < dedup_tol {
                    hits.push((words[i].letters.clone(), words[j].letters.clone()));
                }
            }
            Ok((compared, best, hits))
        })
        .collect::<Result<_, _>>()?;
    let mut report = InjectivityReport {
        n_max,
        tuples: words.len(),
        pairs_compared: 0,
        collisions: Vec::new(),
        min_distance: f64::INFINITY,
    };
    for (c, b, mut h) in results {
        report.pairs_compared += c;
        report.min_distance = report.min_distance.min(b);
        report.collisions.append(&mut h);
    }
    Ok(report)
}
