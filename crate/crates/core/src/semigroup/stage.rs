use serde::{Deserialize, Serialize};

use super::{
    check_property_a, concat_f, f_norm_census, find_deep_element, phi_map, ConstantsMode, DeepSearchConfig,
    PingPongPair, PropertyACertificate, SeedAlphabet, SemigroupError, SyntheticParams,
};
use crate::group::{CriticalExponentEstimate, OrbitBall};
use crate::hyperbolic::{Isometry, Tolerances};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageConfig {
    /// Radius of every truncated `F_k`. Shared by all stages so that the
    /// series in Condition 4 are compared at one truncation.
    pub truncation_radius: f64,
    pub max_words: usize,
    pub window_fraction: f64,
    pub bisection_iters: usize,
    pub deep: DeepSearchConfig,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            truncation_radius: 28.0,
            max_words: 20_000_000,
            window_fraction: 0.8,
            bisection_iters: 30,
            deep: DeepSearchConfig::default(),
        }
    }
}

/// A truncated Poincare series with the shell-ratio tail heuristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeasurement {
    pub s: f64,
    pub value: f64,
    /// Ratio of the last two complete unit shells.
    pub shell_ratio: f64,
    /// Geometric tail `S_last * q / (1 - q)`; `None` when `q >= 1`.
    pub tail: Option<f64>,
}

/// `sum exp(-s ||w||)` over norms below `complete_below`, in ascending order.
pub fn truncated_series(norms: &[f64], s: f64, complete_below: f64) -> SeriesMeasurement {
    let mut sorted: Vec<f64> = norms.iter().copied().filter(|&n| n < complete_below).collect();
    sorted.sort_by(f64::total_cmp);
    let value = sorted.iter().map(|n| (-s * n).exp()).sum();
    let last = complete_below.floor() as i64 - 1;
    let shell = |k: i64| -> f64 {
        sorted
            .iter()
            .filter(|&&n| n >= k as f64 && n < (k + 1) as f64)
            .map(|n| (-s * n).exp())
            .sum()
    };
    let (s_last, s_prev) = (shell(last), shell(last - 1));
    let shell_ratio = if s_prev > 0.0 { s_last / s_prev } else { f64::INFINITY };
    let tail = (shell_ratio < 1.0).then(|| s_last * shell_ratio / (1.0 - shell_ratio));
    SeriesMeasurement {
        s,
        value,
        shell_ratio,
        tail,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiSource {
    /// A deep element of the ball, lengthened by concatenation.
    Deep,
    /// No deep element in the ball: the longest ball element instead.
    LongestElement,
}

/// The element `phi_k = Phi(phi_hat) a Phi(g_k)` added at stage `k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiRecord {
    pub k: usize,
    pub element: Isometry,
    pub norm: f64,
    pub source: PhiSource,
    pub deep_depth: Option<f64>,
    /// Copies of the seed concatenated to pass `R_k`.
    pub copies: usize,
    pub phi_hat_norm: f64,
    /// The enumerated group element folded into `phi_k`.
    pub enumerated: Isometry,
    pub certificate: PropertyACertificate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTruncation {
    pub radius: f64,
    pub word_cap: usize,
    pub complete_below: f64,
    pub words: usize,
    /// Words using at least one added element.
    pub words_with_phi: usize,
    pub min_extension_slack: f64,
    /// Word counts in unit shells `[r, r + 1)`.
    pub shell_counts: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Condition1 {
    pub alpha: f64,
    pub fit_residual: f64,
    pub delta_gamma: f64,
    pub epsilon: f64,
    /// `(1 - eps) delta_Gamma`, the requirement on `alpha_1`.
    pub bound: f64,
    /// `(1 - 0.008 eps) delta_Gamma`, the counting bound on `alpha_1`.
    pub counting_bound: f64,
    pub holds: bool,
    /// Only paper mode turns a failure into a stage failure.
    pub enforced: bool,
    /// `alpha_k` was raised to `alpha_{k-1}` because `F_k` contains `F_{k-1}`.
    pub monotone_clamp: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Condition2 {
    pub width: f64,
    pub bound: f64,
    pub nested: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Condition3 {
    pub series: SeriesMeasurement,
    pub target: f64,
    pub at_alpha: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Condition4Entry {
    pub j: usize,
    pub beta_j: f64,
    /// `P_{F_k}(beta_j)`.
    pub series: f64,
    /// `P_{F_j}(beta_j)`.
    pub own: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub c1: Condition1,
    pub c2: Condition2,
    pub c3: Condition3,
    pub c4: Vec<Condition4Entry>,
    /// `M_j = P_{F_{k-1}}(beta_j)` and the chosen `eps_j`, for `j < k`.
    pub m_j: Vec<f64>,
    pub eps_j: Vec<f64>,
}

impl ConditionReport {
    pub fn passes(&self) -> bool {
        (self.c1.holds || !self.c1.enforced) && self.c2.holds && self.c3.holds && self.c4.iter().all(|c| c.holds)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemigroupStage {
    pub k: usize,
    pub mode: ConstantsMode,
    /// `K` followed by `phi_1, .., phi_{k-1}`.
    pub alphabet: Vec<Isometry>,
    pub seed_len: usize,
    pub phis: Vec<PhiRecord>,
    pub interval: (f64, f64),
    /// `R_0, .., R_{k-1}`.
    pub radii: Vec<f64>,
    pub truncation: StageTruncation,
    pub exponent: Option<CriticalExponentEstimate>,
    pub conditions: ConditionReport,
    pub degenerate: bool,
    /// `beta_j` and `P_{F_j}(beta_j)` for `j <= k`.
    pub betas: Vec<f64>,
    pub own_series: Vec<f64>,
    /// Tail estimates of `P_{F_j}(beta_j)`.
    pub own_tails: Vec<Option<f64>>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub norms: Vec<f64>,
}

impl SemigroupStage {
    pub fn passes(&self) -> bool {
        self.conditions.passes()
    }

    pub fn alpha(&self) -> f64 {
        self.interval.0
    }

    pub fn beta(&self) -> f64 {
        self.interval.1
    }
}

/// Why a stage was rejected. A Condition 4 violation that survives the
/// tail estimate of the right-hand side is genuine, anything else may be
/// truncation. `UnseenElement` means the added element has no words inside
/// the truncation, so Conditions 2 and 3 cannot see it and fail on the
/// previous stage's series alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionKind {
    TruncationShortfall,
    GenuineViolation,
    UnseenElement,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRejection {
    pub k: usize,
    /// Index of the violated Condition 4 inequality; `0` for `UnseenElement`.
    pub j: usize,
    pub kind: RejectionKind,
    pub series: f64,
    pub bound: f64,
    pub bound_with_tail: Option<f64>,
}

struct Measured {
    truncation: StageTruncation,
    norms: Vec<f64>,
    exponent: Option<CriticalExponentEstimate>,
    alpha_hat: f64,
    degenerate: bool,
}

fn measure(
    alphabet: &[Isometry],
    seed_len: usize,
    pair: &PingPongPair,
    word_cap: usize,
    cfg: &StageConfig,
    tol: &Tolerances,
) -> Result<Measured, SemigroupError> {
    let census = f_norm_census(alphabet, pair, cfg.truncation_radius, word_cap, cfg.max_words, tol)?;
    // words using an added letter are exactly those the seed alphabet misses
    let words_with_phi = if alphabet[seed_len..].iter().any(|g| g.norm() < cfg.truncation_radius) {
        let seed = f_norm_census(&alphabet[..seed_len], pair, cfg.truncation_radius, word_cap, cfg.max_words, tol)?;
        census.norms.len() - seed.norms.len()
    } else {
        0
    };
    let mut shell_counts = vec![0usize; census.radius.ceil() as usize];
    for &n in &census.norms {
        if let Some(c) = shell_counts.get_mut(n.floor() as usize) {
            *c += 1;
        }
    }
    let degenerate = alphabet.len() == 1;
    let (exponent, alpha_hat) = if degenerate {
        // one letter: words g (a g)^n grow linearly, exponent 0
        (None, 0.0)
    } else {
        let e = census.exponent(cfg.window_fraction)?;
        let d = e.delta_hat;
        (Some(e), d)
    };
    Ok(Measured {
        truncation: StageTruncation {
            radius: census.radius,
            word_cap: census.word_cap,
            complete_below: census.complete_below,
            words: census.norms.len(),
            words_with_phi,
            min_extension_slack: census.min_slack,
            shell_counts,
        },
        norms: census.norms,
        exponent,
        alpha_hat,
        degenerate,
    })
}

/// Largest `beta` in `(alpha, hi)` found by bisection with truncated
/// `P(beta) > target`; `hi` itself when even `P(alpha)` falls short.
fn select_beta(norms: &[f64], complete_below: f64, alpha: f64, hi: f64, target: f64, iters: usize) -> f64 {
    let p = |s: f64| truncated_series(norms, s, complete_below).value;
    if hi <= alpha || p(alpha) <= target {
        return hi;
    }
    let (mut lo, mut up) = (alpha, hi);
    for _ in 0..iters {
        let mid = 0.5 * (lo + up);
        if p(mid) > target {
            lo = mid;
        } else {
            up = mid;
        }
    }
    lo
}

/// First stage: `F_1` is generated by the seed alphabet alone and
/// `beta_1 in (alpha_1, alpha_1 + 1/2)` with `P(beta_1) > 2`.
pub fn build_first_stage(
    seed: &SeedAlphabet,
    pair: &PingPongPair,
    delta_gamma: f64,
    synth: &SyntheticParams,
    cfg: &StageConfig,
    tol: &Tolerances,
) -> Result<SemigroupStage, SemigroupError> {
    if seed.is_empty() {
        return Err(SemigroupError::Degenerate("empty alphabet".into()));
    }
    let m = measure(&seed.letters, seed.len(), pair, synth.word_cap, cfg, tol)?;
    let alpha = m.alpha_hat;
    let target = 2.0;
    let cb = m.truncation.complete_below;
    let beta = select_beta(&m.norms, cb, alpha, alpha + 0.5, target, cfg.bisection_iters);
    let series = truncated_series(&m.norms, beta, cb);
    let at_alpha = truncated_series(&m.norms, alpha, cb).value;
    let eps = seed.epsilon;
    let c1 = Condition1 {
        alpha,
        fit_residual: m.exponent.as_ref().map_or(0.0, |e| e.residual),
        delta_gamma,
        epsilon: eps,
        bound: (1.0 - eps) * delta_gamma,
        counting_bound: (1.0 - 0.008 * eps) * delta_gamma,
        holds: alpha >= (1.0 - eps) * delta_gamma,
        enforced: seed.mode == ConstantsMode::Paper,
        monotone_clamp: false,
    };
    let width = beta - alpha;
    let conditions = ConditionReport {
        c1,
        c2: Condition2 {
            width,
            bound: 0.5,
            nested: true,
            holds: width > 0.0 && width <= 0.5,
        },
        c3: Condition3 {
            holds: series.value > target,
            series: series.clone(),
            target,
            at_alpha,
        },
        c4: vec![Condition4Entry {
            j: 1,
            beta_j: beta,
            series: series.value,
            own: series.value,
            bound: series.value,
            holds: true,
        }],
        m_j: Vec::new(),
        eps_j: Vec::new(),
    };
    let mut warnings = Vec::new();
    if m.degenerate {
        warnings.push("single-letter alphabet: exponent set to 0".into());
    }
    Ok(SemigroupStage {
        k: 1,
        mode: seed.mode,
        alphabet: seed.letters.clone(),
        seed_len: seed.len(),
        phis: Vec::new(),
        interval: (alpha, beta),
        radii: vec![seed.r0],
        truncation: m.truncation,
        exponent: m.exponent,
        conditions,
        degenerate: m.degenerate,
        betas: vec![beta],
        own_series: vec![series.value],
        own_tails: vec![series.tail],
        warnings,
        norms: m.norms,
    })
}

/// Largest admissible `eps_j`, halved for strictness: solves
/// `(M + 2e + 4Me) / (1 - 2eM) = target` for `e`.
fn eps_for(m: f64, target: f64) -> Option<f64> {
    (target > m).then(|| (0.5 * (target - m) / (2.0 + 4.0 * m + 2.0 * target * m)).min(0.49))
}

/// Picks `phi_hat` (deep if possible) and lengthens it past `radius` by
/// concatenating copies of `Phi(phi_hat)`.
fn long_admissible(
    ball: &OrbitBall,
    pair: &PingPongPair,
    radius: f64,
    deep: &DeepSearchConfig,
    tol: &Tolerances,
) -> Result<(Isometry, PhiSource, Option<f64>, usize, f64), SemigroupError> {
    let query = find_deep_element(pair.c(), ball, deep, tol)?;
    let (hat, source, depth) = match query.result {
        Some(w) => (w.g, PhiSource::Deep, Some(w.measured_depth)),
        None => {
            let order = ball.norm_order();
            let last = *order.last().ok_or_else(|| SemigroupError::Degenerate("empty ball".into()))?;
            (ball.elements[last].iso.clone(), PhiSource::LongestElement, None)
        }
    };
    let base = phi_map(&hat, pair, tol)?.element;
    let mut copies = 1;
    let mut acc = base.clone();
    while acc.norm() < radius {
        acc = concat_f(&[&acc, &base], pair, tol)?;
        copies += 1;
    }
    Ok((acc, source, depth, copies, hat.norm()))
}

/// Matrix entries grow like `e^norm` and Minkowski forms square them.
pub const NUMERIC_HORIZON: f64 = 300.0;

/// Stage `k + 1` from stage `k`: picks `R_k`, adds `phi_k`, remeasures the
/// truncated series, selects `beta_{k+1}` and evaluates Conditions 1-4.
/// A Condition 4 failure rejects the stage.
pub fn build_stage(
    prev: &SemigroupStage,
    pair: &PingPongPair,
    ball: &OrbitBall,
    synth: &SyntheticParams,
    cfg: &StageConfig,
    tol: &Tolerances,
) -> Result<Result<SemigroupStage, StageRejection>, SemigroupError> {
    if prev.truncation.radius != cfg.truncation_radius {
        return Err(SemigroupError::Degenerate(format!(
            "truncation radius {} differs from the previous stage's {}",
            cfg.truncation_radius, prev.truncation.radius
        )));
    }
    let k = prev.k;
    let cb_prev = prev.truncation.complete_below;
    // M_j and eps_j from the previous stage's series
    let mut m_j = Vec::new();
    let mut eps_j = Vec::new();
    for j in 1..=k {
        let beta_j = prev.betas[j - 1];
        let m = truncated_series(&prev.norms, beta_j, cb_prev).value;
        let target = (2.0 - 2f64.powi(j as i32 - k as i32 - 1)) * prev.own_series[j - 1];
        let e = eps_for(m, target).ok_or_else(|| {
            SemigroupError::Degenerate(format!("stage {k} violates Condition 4 at j = {j}: {m} >= {target}"))
        })?;
        m_j.push(m);
        eps_j.push(e);
    }
    let max_letter = prev.alphabet.iter().map(Isometry::norm).fold(0.0, f64::max);
    let mut r_k = prev.radii[k - 1] * synth.rho_r.max(1.0);
    if pair.constants.mode == ConstantsMode::Paper {
        r_k = r_k.max(100.0 * prev.radii[k - 1]);
    }
    r_k = r_k.max(max_letter);
    for (j, e) in eps_j.iter().enumerate() {
        r_k = r_k.max(-e.ln() / prev.betas[j]);
    }
    if r_k > NUMERIC_HORIZON {
        return Err(SemigroupError::Budget(format!(
            "R_{k} = {r_k:.1} is beyond the f64 horizon {NUMERIC_HORIZON}"
        )));
    }
    let (phi_hat, source, depth, copies, hat_norm) = long_admissible(ball, pair, r_k, &cfg.deep, tol)?;
    let enumerated = ball
        .elements
        .get(k - 1)
        .ok_or_else(|| SemigroupError::Budget(format!("ball has fewer than {k} elements")))?
        .iso
        .clone();
    let g_k = phi_map(&enumerated, pair, tol)?.element;
    let phi = concat_f(&[&phi_hat, &g_k], pair, tol)?;
    let certificate = check_property_a(&phi, pair)?;
    let mut warnings = Vec::new();
    if !certificate.ok {
        warnings.push(format!("phi_{k} fails the canonical admissibility check"));
    }
    if source == PhiSource::LongestElement {
        warnings.push("no deep element in the ball; phi_hat is the longest element".into());
    }
    let mut alphabet = prev.alphabet.clone();
    alphabet.push(phi.clone());
    let mut phis = prev.phis.clone();
    phis.push(PhiRecord {
        k,
        norm: phi.norm(),
        element: phi,
        source,
        deep_depth: depth,
        copies,
        phi_hat_norm: hat_norm,
        enumerated,
        certificate,
    });

    let m = measure(&alphabet, prev.seed_len, pair, synth.word_cap, cfg, tol)?;
    let cb = m.truncation.complete_below;
    if m.truncation.words_with_phi == 0 {
        warnings.push(format!("phi_{k} lies beyond the truncation radius"));
    }
    let kn = k + 1;
    let monotone_clamp = m.alpha_hat < prev.alpha();
    let alpha = m.alpha_hat.max(prev.alpha());
    let target = 2f64.powi(kn as i32);
    let hi = (alpha + 2f64.powi(-(kn as i32))).min(prev.beta());
    let beta = select_beta(&m.norms, cb, alpha, hi, target, cfg.bisection_iters);
    let series = truncated_series(&m.norms, beta, cb);
    let at_alpha = truncated_series(&m.norms, alpha, cb).value;

    let mut betas = prev.betas.clone();
    betas.push(beta);
    let mut own_series = prev.own_series.clone();
    own_series.push(series.value);
    let mut own_tails = prev.own_tails.clone();
    own_tails.push(series.tail);

    let mut c4 = Vec::new();
    for j in 1..=kn {
        let beta_j = betas[j - 1];
        let value = truncated_series(&m.norms, beta_j, cb).value;
        let factor = 2.0 - 2f64.powi(j as i32 - kn as i32);
        let bound = factor * own_series[j - 1];
        let holds = value <= bound * (1.0 + 1e-12);
        if !holds {
            let bound_with_tail = own_tails[j - 1].map(|t| bound + factor * t);
            let kind = match bound_with_tail {
                Some(b) if value > b => RejectionKind::GenuineViolation,
                _ => RejectionKind::TruncationShortfall,
            };
            return Ok(Err(StageRejection {
                k: kn,
                j,
                kind,
                series: value,
                bound,
                bound_with_tail,
            }));
        }
        c4.push(Condition4Entry {
            j,
            beta_j,
            series: value,
            own: own_series[j - 1],
            bound,
            holds,
        });
    }
    let width = beta - alpha;
    let bound2 = 2f64.powi(-(kn as i32));
    let c2_holds = width > 0.0 && width <= bound2 && alpha >= prev.alpha() && beta < prev.beta();
    if m.truncation.words_with_phi == 0 && !(c2_holds && series.value > target) {
        return Ok(Err(StageRejection {
            k: kn,
            j: 0,
            kind: RejectionKind::UnseenElement,
            series: series.value,
            bound: target,
            bound_with_tail: None,
        }));
    }
    let eps = prev.conditions.c1.epsilon;
    let delta_gamma = prev.conditions.c1.delta_gamma;
    let conditions = ConditionReport {
        c1: Condition1 {
            alpha,
            fit_residual: m.exponent.as_ref().map_or(0.0, |e| e.residual),
            delta_gamma,
            epsilon: eps,
            bound: (1.0 - eps) * delta_gamma,
            counting_bound: (1.0 - 0.008 * eps) * delta_gamma,
            holds: alpha >= (1.0 - eps) * delta_gamma,
            enforced: prev.mode == ConstantsMode::Paper,
            monotone_clamp,
        },
        c2: Condition2 {
            width,
            bound: bound2,
            nested: alpha >= prev.alpha() && beta < prev.beta(),
            holds: c2_holds,
        },
        c3: Condition3 {
            holds: series.value > target,
            series,
            target,
            at_alpha,
        },
        c4,
        m_j,
        eps_j,
    };
    let mut radii = prev.radii.clone();
    radii.push(r_k);
    Ok(Ok(SemigroupStage {
        k: kn,
        mode: prev.mode,
        alphabet,
        seed_len: prev.seed_len,
        phis,
        interval: (alpha, beta),
        radii,
        truncation: m.truncation,
        exponent: m.exponent,
        conditions,
        degenerate: m.degenerate,
        betas,
        own_series,
        own_tails,
        warnings,
        norms: m.norms,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{enumerate_ball, punctured_torus, symmetric_schottky, EnumerateConfig, GroupSpec};
    use crate::semigroup::{build_seed_alphabet, find_ping_pong_pair};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    struct Setup {
        pair: PingPongPair,
        ball: OrbitBall,
        seed: SeedAlphabet,
        synth: SyntheticParams,
    }

    fn setup(spec: &GroupSpec, synth: SyntheticParams, ball_r: f64, r0: f64) -> Setup {
        let pair = find_ping_pong_pair(spec, ConstantsMode::Synthetic, &synth, &tol()).unwrap();
        let cfg = EnumerateConfig { prune_margin: Some(0.0), ..EnumerateConfig::default() };
        let ball = enumerate_ball(spec, ball_r, &cfg).unwrap();
        let seed = build_seed_alphabet(&ball, &pair, 0.5, &synth, Some(r0), None).unwrap();
        Setup { pair, ball, seed, synth }
    }

    #[test]
    fn series_matches_reverse_summation() {
        let norms: Vec<f64> = (0..500).map(|i| 0.37 * i as f64 % 19.0 + 1.0).collect();
        for s in [0.2, 0.5, 1.3] {
            let m = truncated_series(&norms, s, 15.0);
            let mut kept: Vec<f64> = norms.iter().copied().filter(|&n| n < 15.0).collect();
            kept.sort_by(|a, b| b.total_cmp(a));
            let oracle: f64 = kept.iter().map(|n| (-s * n).exp()).sum();
            assert!((m.value - oracle).abs() <= 1e-12 * oracle);
        }
    }

    #[test]
    fn decaying_shells_give_a_tail() {
        // counts e^{r/2} per unit shell at s = 1: ratio e^{-1/2}
        let mut norms = Vec::new();
        for r in 0..20 {
            let n = (0.5 * r as f64).exp().round() as usize;
            norms.extend(std::iter::repeat_n(r as f64 + 0.5, n));
        }
        let m = truncated_series(&norms, 1.0, 20.0);
        assert!((m.shell_ratio - (-0.5f64).exp()).abs() < 0.05);
        assert!(m.tail.is_some());
        assert!(truncated_series(&norms, 0.1, 20.0).tail.is_none());
    }

    #[test]
    fn eps_choice_satisfies_the_margin_inequality() {
        for (m, target) in [(2.0, 3.0), (5.0, 5.5), (0.5, 8.0)] {
            let e = eps_for(m, target).unwrap();
            assert!(e > 0.0 && e < 0.5);
            assert!(1.0 - 2.0 * e * m > 0.0);
            assert!((m + 2.0 * e + 4.0 * m * e) / (1.0 - 2.0 * e * m) < target);
        }
        assert!(eps_for(3.0, 3.0).is_none());
    }

    #[test]
    fn beta_bisection_hits_the_target() {
        let norms: Vec<f64> = (1..4000).map(|i| 2.0 + (i as f64).ln()).collect();
        let p = |s: f64| truncated_series(&norms, s, 12.0).value;
        let target = p(0.75);
        let beta = select_beta(&norms, 12.0, 0.5, 1.0, target, 30);
        assert!((beta - 0.75).abs() < 1e-8, "{beta} {} {target}", p(beta));
        assert!(p(beta) > target);
        // target out of reach: the upper end is returned
        assert_eq!(select_beta(&norms, 12.0, 0.5, 1.0, 1e9, 30), 1.0);
    }

    #[test]
    fn single_letter_stage_is_degenerate() {
        let spec = symmetric_schottky(2, 2.0, &tol()).unwrap();
        let mut s = setup(&spec, SyntheticParams::default(), 8.0, 8.0);
        s.seed.letters.truncate(1);
        s.seed.certificates.truncate(1);
        let cfg = StageConfig { truncation_radius: 24.0, ..StageConfig::default() };
        let st = build_first_stage(&s.seed, &s.pair, 0.75, &s.synth, &cfg, &tol()).unwrap();
        assert!(st.degenerate);
        assert_eq!(st.alpha(), 0.0);
        // words g (a g)^n: one per length class
        let step = s.seed.letters[0].norm() + s.pair.a_norm;
        assert!(st.truncation.words as f64 <= 24.0 / step + 2.0);
    }

    #[test]
    fn schottky_first_stage_records_condition_one() {
        let spec = symmetric_schottky(2, 2.0, &tol()).unwrap();
        let s = setup(&spec, SyntheticParams::default(), 9.0, 9.0);
        let cfg = StageConfig { truncation_radius: 28.0, ..StageConfig::default() };
        let st = build_first_stage(&s.seed, &s.pair, 0.75, &s.synth, &cfg, &tol()).unwrap();
        let c1 = &st.conditions.c1;
        assert!(!c1.enforced);
        assert_eq!(c1.holds, c1.alpha >= c1.bound);
        assert!(st.alpha() > 0.0);
        assert!(st.beta() > st.alpha() && st.beta() - st.alpha() <= 0.5);
        assert!(st.conditions.c3.series.value > 2.0);
        assert!(st.alphabet.len() == s.seed.len());
        assert!(s.seed.certificates.iter().all(|c| c.ok));
    }

    #[test]
    fn torus_stages_nest() {
        let spec = punctured_torus(&tol()).unwrap();
        let synth = SyntheticParams { margin_extra: 2.0, ..SyntheticParams::default() };
        let s = setup(&spec, synth, 10.5, 10.0);
        let cfg = StageConfig { truncation_radius: 28.0, ..StageConfig::default() };
        let st1 = build_first_stage(&s.seed, &s.pair, 0.97, &s.synth, &cfg, &tol()).unwrap();
        assert!(st1.passes());
        let st2 = build_stage(&st1, &s.pair, &s.ball, &s.synth, &cfg, &tol()).unwrap().unwrap();
        assert_eq!(st2.k, 2);
        assert!(st2.passes(), "{:?}", st2.conditions);
        assert!(st2.alpha() >= st1.alpha() && st2.beta() < st1.beta());
        assert!(st2.conditions.c3.series.value > 4.0);
        let phi = &st2.phis[0];
        assert!(phi.certificate.ok);
        assert!(phi.norm >= st2.radii[1]);
        assert_eq!(phi.source, PhiSource::Deep);
        // the stage-1 series at beta_1 is unchanged or grows by at most the Condition 4 factor
        let c4 = &st2.conditions.c4[0];
        assert!(c4.series >= c4.own - 1e-12 && c4.series <= 1.5 * c4.own + 1e-9);
        let json = serde_json::to_string(&st2).unwrap();
        assert!(json.contains("\"interval\""));
    }
}
