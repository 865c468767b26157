//! Command orchestration: each command turns a config into a JSON report
//! plus CSV artifacts, written once the command finishes.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context as _;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::dimension::{dimension_vs_exponent, exponent_gap, DimensionError};
use crate::group::{enumerate_ball, exponent_from_norms, GroupError, GroupSpec, OrbitBall};
use crate::hyperbolic::Tolerances;
use crate::measure::{
    ps_atoms, shadow_principle_report, sublinear_shadow_tail, FAtomTable, MeasureError, W_MIN,
};
use crate::semigroup::{
    build_first_stage, build_seed_alphabet, build_stage, check_injectivity, find_deep_element, find_ping_pong_pair,
    paper_alphabet_plan, ConstantsMode, PingPongPair, RejectionKind, SemigroupError, SemigroupStage,
};
use crate::suites::{chain_suite, extension_suite, four_point_suite, phi_suite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Enumerate,
    Exponent,
    VerifyLemmas,
    Deep,
    Build,
    Measure,
    Dimension,
    All,
}

impl Command {
    pub const PIPELINE: [Command; 7] = [
        Command::Enumerate,
        Command::Exponent,
        Command::VerifyLemmas,
        Command::Deep,
        Command::Build,
        Command::Measure,
        Command::Dimension,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Enumerate => "enumerate",
            Command::Exponent => "exponent",
            Command::VerifyLemmas => "verify-lemmas",
            Command::Deep => "deep",
            Command::Build => "build",
            Command::Measure => "measure",
            Command::Dimension => "dimension",
            Command::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Partial,
    Fail,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Partial => 3,
            Status::Fail => 4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub version: String,
    /// Unix seconds; absent under `--fixed-clock`.
    pub generated_at: Option<u64>,
    pub seed: u64,
    pub status: Status,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
    pub config: RunConfig,
    pub results: Value,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub fixed_clock: bool,
}

#[derive(Default)]
struct Outcome {
    results: Value,
    warnings: Vec<String>,
    failures: Vec<String>,
    partial: bool,
    artifacts: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn status(&self) -> Status {
        if !self.failures.is_empty() {
            Status::Fail
        } else if self.partial {
            Status::Partial
        } else {
            Status::Pass
        }
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    spec: GroupSpec,
    tol: Tolerances,
}

impl Ctx<'_> {
    fn ball(&self, radius: f64) -> Result<OrbitBall, GroupError> {
        enumerate_ball(&self.spec, radius, &self.cfg.enumerate_config())
    }

    fn pair(&self, synth: &crate::semigroup::SyntheticParams) -> Result<PingPongPair, SemigroupError> {
        find_ping_pong_pair(&self.spec, self.cfg.mode, synth, &self.tol)
    }
}

/// Errors that mean "ran out of budget or regime" rather than "a checked
/// statement failed".
fn is_partial(e: &anyhow::Error) -> bool {
    let semigroup = |s: &SemigroupError| {
        matches!(
            s,
            SemigroupError::Budget(_)
                | SemigroupError::PaperModeOnly(_)
                | SemigroupError::NotFound(_)
                | SemigroupError::Group(GroupError::Budget { .. })
        )
    };
    if let Some(s) = e.downcast_ref::<SemigroupError>() {
        return semigroup(s);
    }
    if let Some(g) = e.downcast_ref::<GroupError>() {
        return matches!(g, GroupError::Budget { .. } | GroupError::Window { .. });
    }
    if let Some(m) = e.downcast_ref::<MeasureError>() {
        return match m {
            MeasureError::Budget(_) | MeasureError::Horizon { .. } => true,
            MeasureError::Semigroup(s) => semigroup(s),
            _ => false,
        };
    }
    if let Some(d) = e.downcast_ref::<DimensionError>() {
        return matches!(
            d,
            DimensionError::Group(GroupError::Budget { .. } | GroupError::Window { .. }) | DimensionError::Resolution { .. }
        );
    }
    false
}

fn to_value<T: Serialize>(v: &T) -> anyhow::Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn cmd_enumerate(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let mut out = Outcome::default();
    let radius = ctx.cfg.budgets.radius;
    let ball = match ctx.ball(radius) {
        Ok(b) => b,
        Err(GroupError::Budget { cap, partial, .. }) => {
            out.partial = true;
            out.warnings.push(format!("element budget {cap} reached; the ball is incomplete"));
            *partial
        }
        Err(e) => return Err(e.into()),
    };
    let mut csv = Vec::new();
    ball.write_csv(&mut csv)?;
    out.artifacts.push(("ball.csv".into(), csv));
    out.results = json!({
        "label": ctx.spec.label,
        "radius": ball.radius,
        "prune_margin": ball.prune_margin,
        "elements": ball.len(),
        "max_norm": ball.norms().into_iter().fold(0.0, f64::max),
    });
    Ok(out)
}

fn cmd_exponent(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let mut out = Outcome::default();
    let radius = ctx.cfg.budgets.radius;
    let ball = ctx.ball(radius)?;
    let est = exponent_from_norms(&ball.norms(), radius, ctx.cfg.exponent.window_fraction)?;
    if est.degenerate {
        out.warnings.push("orbit counts are flat over the fit window; exponent reported as 0".into());
    }
    out.results = json!({ "label": ctx.spec.label, "elements": ball.len(), "estimate": to_value(&est)? });
    Ok(out)
}

fn cmd_verify_lemmas(ctx: &Ctx, seed: u64) -> anyhow::Result<Outcome> {
    let mut out = Outcome::default();
    let l = &ctx.cfg.lemmas;
    let fp = four_point_suite(seed, l.four_point_cases, l.max_norm, 2f64.ln() + 1e-8);
    out.check(fp.passed(), format!("four-point inequality fails in {} of {} triples", fp.failures, fp.cases));
    let chains = chain_suite(seed, l.chains, &ctx.tol)?;
    out.check(
        chains.passed(),
        format!("chain shadowing: {} counterexamples, first {:?}", chains.counterexamples, chains.first_counterexample),
    );
    let mut results = json!({ "four_point": to_value(&fp)?, "chains": to_value(&chains)? });
    let pair = match ctx.pair(&l.synthetic) {
        Ok(p) => p,
        Err(e @ (SemigroupError::NotFound(_) | SemigroupError::PaperModeOnly(_))) => {
            out.partial = true;
            out.warnings.push(format!("alphabet checks skipped: {e}"));
            out.results = results;
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    };
    let ball = ctx.ball(l.alphabet_radius)?;
    let k = match build_seed_alphabet(&ball, &pair, l.epsilon, &l.synthetic, Some(l.alphabet_radius), None) {
        Ok(k) => k,
        Err(e @ SemigroupError::PaperModeOnly(_)) => {
            out.partial = true;
            out.warnings.push(format!("alphabet checks skipped: {e}"));
            out.results = results;
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    };
    let ext = extension_suite(seed, l.tuples, &k.letters, &pair, l.min_tuple..=l.max_tuple, l.extension_slack, &ctx.tol)?;
    out.check(ext.passed(), format!("extension inequality fails in {} of {} tuples", ext.failures, ext.cases));
    if k.len() < 4 {
        out.warnings.push(format!("alphabet has {} letters; injectivity needs at least 4 to be meaningful", k.len()));
    }
    let inj = check_injectivity(&ctx.spec, &k.letters, &pair, l.injectivity_letters, ctx.cfg.tolerances.dedup, 1e-6, &ctx.tol)?;
    out.check(inj.injective(), format!("{} collisions among concatenations", inj.collisions.len()));
    let phi_ball = ctx.ball(l.phi_radius)?;
    let phi = phi_suite(&ctx.spec, &phi_ball, &pair, ctx.cfg.tolerances.dedup, &ctx.tol)?;
    out.check(
        phi.passed(),
        format!(
            "repair map: {} counterexamples, shift {:.4} (bound {:.4}), largest class {}",
            phi.counterexamples, phi.max_shift, phi.shift_bound, phi.max_class
        ),
    );
    results["alphabet"] = json!({ "letters": k.len(), "r0": k.r0, "annulus": k.annulus, "separation": k.separation });
    results["extension"] = to_value(&ext)?;
    results["injectivity"] = json!({
        "n_max": inj.n_max,
        "tuples": inj.tuples,
        "pairs_compared": inj.pairs_compared,
        "collisions": inj.collisions.len(),
        "min_distance": inj.min_distance,
    });
    results["phi"] = to_value(&phi)?;
    out.results = results;
    Ok(out)
}

fn cmd_deep(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let mut out = Outcome::default();
    let d = &ctx.cfg.deep;
    let ball = ctx.ball(d.radius)?;
    let q = find_deep_element(d.m, &ball, &d.search, &ctx.tol)?;
    if let Some(w) = &q.result {
        let floor = d.m - d.search.h_geo / 2.0;
        out.check(w.measured_depth >= floor, format!("certified depth {} below {floor}", w.measured_depth));
    } else {
        out.warnings.push(format!("no element of depth {} within radius {}", d.m, d.radius));
    }
    out.results = json!({
        "m": q.m,
        "found": q.result.is_some(),
        "scanned": q.scanned,
        "depth": q.result.as_ref().map(|w| w.measured_depth),
        "word": q.result.as_ref().map(|w| crate::group::format_word(w.g.word())),
        "norm": q.result.as_ref().map(|w| w.g.norm()),
        "witness": to_value(&q.result)?,
    });
    Ok(out)
}

fn stage_summary(st: &SemigroupStage) -> Value {
    json!({
        "k": st.k,
        "letters": st.alphabet.len(),
        "alpha": st.alpha(),
        "beta": st.beta(),
        "interval": st.interval,
        "radii": st.radii,
        "passes": st.passes(),
        "degenerate": st.degenerate,
        "exponent": st.exponent,
        "truncation": st.truncation,
    })
}

fn cmd_build(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let mut out = Outcome::default();
    let b = &ctx.cfg.build;
    let ball = ctx.ball(b.ball_radius)?;
    let gamma = exponent_from_norms(&ball.norms(), b.ball_radius, ctx.cfg.exponent.window_fraction)?;
    let pair = ctx.pair(&b.synthetic)?;
    if ctx.cfg.mode == ConstantsMode::Paper {
        let plan = paper_alphabet_plan(&ball, &pair, gamma.delta_hat, b.epsilon);
        out.partial = true;
        out.warnings.push("paper constants: the construction is reported as arithmetic only".into());
        out.results = json!({ "delta_gamma": to_value(&gamma)?, "paper_plan": to_value(&plan)? });
        return Ok(out);
    }
    let seed = build_seed_alphabet(&ball, &pair, b.epsilon, &b.synthetic, Some(b.r0), Some(gamma.delta_hat))?;
    let first = build_first_stage(&seed, &pair, gamma.delta_hat, &b.synthetic, &b.stage, &ctx.tol)?;
    let mut stages = vec![first];
    let mut rejection = None;
    while stages.len() < b.stages {
        match build_stage(stages.last().unwrap(), &pair, &ball, &b.synthetic, &b.stage, &ctx.tol) {
            Ok(Ok(st)) => stages.push(st),
            Ok(Err(rej)) => {
                match rej.kind {
                    RejectionKind::GenuineViolation => out.failures.push(format!(
                        "stage {} violates Condition 4 for j = {}: {} > {}",
                        rej.k, rej.j, rej.series, rej.bound
                    )),
                    RejectionKind::TruncationShortfall => {
                        out.partial = true;
                        out.warnings.push(format!("stage {} rejected by a truncation shortfall", rej.k));
                    }
                    RejectionKind::UnseenElement => {
                        out.partial = true;
                        out.warnings.push(format!(
                            "stage {} not checkable: its added element lies beyond the truncation radius",
                            rej.k
                        ));
                    }
                }
                rejection = Some(rej);
                break;
            }
            Err(e @ SemigroupError::Budget(_)) => {
                out.partial = true;
                out.warnings.push(format!("stage {} not built: {e}", stages.len() + 1));
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    for st in &stages {
        out.check(st.passes(), format!("stage {} fails its conditions", st.k));
        out.warnings.extend(st.warnings.iter().map(|w| format!("stage {}: {w}", st.k)));
        out.artifacts.push((format!("stage_{}.json", st.k), pretty(st)?));
    }
    let gap = stages[0].exponent.as_ref().map(|e| {
        exponent_gap(e.delta_hat, e.residual, gamma.delta_hat, gamma.residual, b.epsilon)
    });
    if let Some(g) = &gap {
        out.check(g.holds, format!("stage-1 exponent {} below {} - {} - {}", g.delta_f, g.delta_gamma, g.epsilon, g.residuals));
    }
    out.results = json!({
        "delta_gamma": to_value(&gamma)?,
        "seed_alphabet": { "letters": seed.len(), "r0": seed.r0, "annulus": seed.annulus, "separation": seed.separation },
        "stages": stages.iter().map(stage_summary).collect::<Vec<_>>(),
        "rejection": to_value(&rejection)?,
        "exponent_gap": to_value(&gap)?,
    });
    Ok(out)
}

fn cmd_measure(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let mut out = Outcome::default();
    let m = &ctx.cfg.measure;
    let ball = ctx.ball(m.r0)?;
    let pair = ctx.pair(&m.synthetic)?;
    let k = build_seed_alphabet(&ball, &pair, m.epsilon, &m.synthetic, Some(m.r0), None)?;
    let table = FAtomTable::build(&k.letters, &pair, m.truncation_radius, m.word_cap, m.max_words, &ctx.tol)?;
    if table.complete_below < table.radius {
        out.warnings.push(format!(
            "the word cap makes the truncation complete only below {:.3}",
            table.complete_below
        ));
    }
    let est = exponent_from_norms(table.norms(), table.complete_below, m.window_fraction)?;
    let r = m.shadow_factor * pair.c();
    let mut trend = Vec::new();
    for &eps in &m.eps_s {
        let atoms = ps_atoms(table.norms(), est.delta_hat + eps, est.delta_hat, W_MIN)?;
        let rep = shadow_principle_report(&table, &atoms, r, m.max_letters, m.upper_tol);
        trend.push(json!({
            "eps_s": eps,
            "s": atoms.s,
            "z": atoms.z,
            "max_upper_ratio": rep.max_upper_ratio,
            "min_lower_ratio": rep.min_lower_ratio,
            "shell_spread": rep.shell_spread,
            "nesting_violations": rep.nesting_violations,
        }));
    }
    let atoms = ps_atoms(table.norms(), est.delta_hat + m.check_eps, est.delta_hat, W_MIN)?;
    let rep = shadow_principle_report(&table, &atoms, r, m.max_letters, m.upper_tol);
    out.check(rep.upper_holds, format!("shadow ratio {} exceeds 1 + {}", rep.max_upper_ratio, m.upper_tol));
    out.check(rep.min_lower_ratio > 0.0, "a shadow of a prefix has zero mass");
    if rep.nesting_violations > 0 {
        out.warnings.push(format!(
            "{} shadow atoms lie outside the cylinder of their apex word",
            rep.nesting_violations
        ));
    }
    let mut tails = Vec::new();
    for &eta in &m.etas {
        let tail = sublinear_shadow_tail(&table, &atoms, eta, est.delta_hat)?;
        let need = m.decay_factor * est.delta_hat * eta;
        out.check(
            tail.shells.len() >= 3 && tail.decay_exponent >= need,
            format!("eta {eta}: shell sums decay at {} over {} shells, need {need}", tail.decay_exponent, tail.shells.len()),
        );
        tails.push(json!({ "required_decay": need, "report": to_value(&tail)? }));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "letters", "norm", "weight"])?;
    for i in 0..table.len() {
        let letters: Vec<String> = table.word(i).iter().map(u32::to_string).collect();
        w.write_record([i.to_string(), letters.join("."), format!("{:.12}", table.norm(i)), format!("{:.6e}", atoms.weights[i])])?;
    }
    out.artifacts.push(("atoms.csv".into(), w.into_inner()?));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["letters", "norm", "ratio", "cylinder_mass", "outside_cylinder"])?;
    for e in &rep.entries {
        let letters: Vec<String> = e.letters.iter().map(u32::to_string).collect();
        w.write_record([
            letters.join("."),
            format!("{:.12}", e.norm),
            format!("{:.6e}", e.ratio),
            format!("{:.6e}", e.cylinder_mass),
            e.outside_cylinder.to_string(),
        ])?;
    }
    out.artifacts.push(("shadows.csv".into(), w.into_inner()?));
    out.results = json!({
        "letters": k.len(),
        "atoms": table.len(),
        "truncation_radius": table.radius,
        "complete_below": table.complete_below,
        "delta_f": to_value(&est)?,
        "shadow_radius": r,
        "trend": trend,
        "shadow_principle": {
            "s": rep.s,
            "z": atoms.z,
            "tested": rep.tested,
            "max_upper_ratio": rep.max_upper_ratio,
            "min_lower_ratio": rep.min_lower_ratio,
            "shell_spread": rep.shell_spread,
            "upper_holds": rep.upper_holds,
            "nesting_violations": rep.nesting_violations,
            "mass_dropped": atoms.mass_dropped,
        },
        "tails": tails,
    });
    Ok(out)
}

fn cmd_dimension(ctx: &Ctx, seed: u64) -> anyhow::Result<Outcome> {
    let mut out = Outcome::default();
    let d = &ctx.cfg.dimension;
    let mut est = d.estimator.clone();
    est.boxes.seed = seed;
    let c = dimension_vs_exponent(&ctx.spec, d.radius, &est, &ctx.cfg.enumerate_config())?;
    if let Some(max) = d.max_gap {
        out.check(c.gap <= max, format!("box dimension {} and exponent {} differ by more than {max}", c.box_count.dim_hat, c.delta_hat));
    }
    if let Some(max) = d.max_residual {
        out.check(
            c.exponent_residual <= max && c.box_count.fit_residual <= max,
            format!("fit residuals {} / {} exceed {max}", c.exponent_residual, c.box_count.fit_residual),
        );
    }
    out.warnings.push(c.caveat.clone());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scale", "count"])?;
    for (s, n) in c.box_count.scales.iter().zip(&c.box_count.counts) {
        w.write_record([format!("{s:.6e}"), format!("{n:.3}")])?;
    }
    out.artifacts.push(("boxes.csv".into(), w.into_inner()?));
    out.results = to_value(&c)?;
    Ok(out)
}

fn pretty<T: Serialize>(v: &T) -> anyhow::Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn now() -> Option<u64> {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).ok().map(|d| d.as_secs())
}

fn run_one(command: Command, ctx: &Ctx, seed: u64, opts: &RunOptions) -> anyhow::Result<Report> {
    let result = match command {
        Command::Enumerate => cmd_enumerate(ctx),
        Command::Exponent => cmd_exponent(ctx),
        Command::VerifyLemmas => cmd_verify_lemmas(ctx, seed),
        Command::Deep => cmd_deep(ctx),
        Command::Build => cmd_build(ctx),
        Command::Measure => cmd_measure(ctx),
        Command::Dimension => cmd_dimension(ctx, seed),
        Command::All => unreachable!("expanded by run"),
    };
    let outcome = result.unwrap_or_else(|e| {
        let mut o = Outcome::default();
        if is_partial(&e) {
            o.partial = true;
            o.warnings.push(format!("{e:#}"));
        } else {
            o.failures.push(format!("{e:#}"));
        }
        o
    });
    let report = Report {
        command: command.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        generated_at: if opts.fixed_clock { None } else { now() },
        seed,
        status: outcome.status(),
        failures: outcome.failures,
        warnings: outcome.warnings,
        config: ctx.cfg.clone(),
        results: outcome.results,
    };
    std::fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
    for (name, bytes) in &outcome.artifacts {
        std::fs::write(opts.out.join(name), bytes)?;
    }
    std::fs::write(opts.out.join(format!("{}.json", command.name())), pretty(&report)?)?;
    Ok(report)
}

/// Runs `command` (every pipeline step for `all`) and returns the reports
/// in order. `all` also writes a summary `all.json`.
pub fn run(command: Command, cfg: &RunConfig, seed: Option<u64>, opts: &RunOptions) -> anyhow::Result<Vec<Report>> {
    let tol = cfg.tolerances();
    let ctx = Ctx { cfg, spec: cfg.group.build(&tol)?, tol };
    let seed = seed.unwrap_or(cfg.seed);
    if command != Command::All {
        return Ok(vec![run_one(command, &ctx, seed, opts)?]);
    }
    let start = Instant::now();
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for c in Command::PIPELINE {
        if cfg.budgets.time_cap_secs.is_some_and(|cap| start.elapsed().as_secs_f64() > cap) {
            skipped.push(c.name());
            continue;
        }
        reports.push(run_one(c, &ctx, seed, opts)?);
    }
    let mut status = reports.iter().map(|r| r.status).max().unwrap_or(Status::Pass);
    let mut warnings = Vec::new();
    if !skipped.is_empty() {
        status = status.max(Status::Partial);
        warnings.push(format!("time cap reached; skipped {}", skipped.join(", ")));
    }
    let summary = Report {
        command: "all".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        generated_at: if opts.fixed_clock { None } else { now() },
        seed,
        status,
        failures: reports.iter().flat_map(|r| r.failures.iter().map(move |f| format!("{}: {f}", r.command))).collect(),
        warnings,
        config: cfg.clone(),
        results: json!({
            "steps": reports.iter().map(|r| json!({ "command": r.command, "status": r.status })).collect::<Vec<_>>(),
            "skipped": skipped,
        }),
    };
    std::fs::write(opts.out.join("all.json"), pretty(&summary)?)?;
    reports.push(summary);
    Ok(reports)
}

/// Exit status for a finished run: the worst status over its reports.
pub fn exit_code(reports: &[Report]) -> i32 {
    reports.iter().map(|r| r.status).max().unwrap_or(Status::Pass).exit_code()
}
