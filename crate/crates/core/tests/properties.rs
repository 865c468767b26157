use std::sync::OnceLock;

use kleinian::chain::{check_chain, ChainParams};
use kleinian::dimension::{box_count, BoxCountConfig, DirectionSample};
use kleinian::group::{
    enumerate_ball, poincare_partial, separated_net, symmetric_schottky, EnumerateConfig, GroupSpec, OrbitBall,
};
use kleinian::hyperbolic::{
    distance, geodesic_point, gromov_product, visual_angle, BoundaryPoint, Isometry, Point, Tolerances,
};
use kleinian::measure::{ps_atoms, shadow_nesting_violations, FAtomTable, W_MIN};
use kleinian::semigroup::{
    build_seed_alphabet, concat_f, find_ping_pong_pair, phi_map, semiconvexity_gap, ConstantsMode, PingPongPair,
    SeedAlphabet, SyntheticParams,
};
use proptest::prelude::*;

fn tol() -> Tolerances {
    Tolerances::default()
}

fn unit(dim: usize, angles: &[f64]) -> Vec<f64> {
    if dim == 2 {
        vec![angles[0].cos(), angles[0].sin()]
    } else {
        let (t, p) = (angles[0], angles[1]);
        vec![t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
    }
}

fn point(dim: usize, angles: &[f64], r: f64) -> Point {
    Point::from_polar(&unit(dim, angles), r)
}

fn isometry(dim: usize, th: f64, t: f64, ph: f64) -> Isometry {
    let t1 = Isometry::rotation(dim, 1, 2, th);
    let b = Isometry::boost(dim, 1, t);
    let mut g = t1.compose(&b, &tol()).unwrap().compose(&Isometry::rotation(dim, 1, 2, ph), &tol()).unwrap();
    if dim == 3 {
        g = Isometry::rotation(dim, 2, 3, ph).compose(&g, &tol()).unwrap();
    }
    g
}

fn angles() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..std::f64::consts::TAU, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn four_point_inequality(dim in 2usize..=3, a in angles(), b in angles(), c in angles(),
                             r in prop::array::uniform3(0.0..15.0f64)) {
        let (x, y, z) = (point(dim, &a, r[0]), point(dim, &b, r[1]), point(dim, &c, r[2]));
        let o = Point::origin(dim);
        let lhs = gromov_product(&x, &z, &o);
        let rhs = gromov_product(&x, &y, &o).min(gromov_product(&y, &z, &o)) - 2f64.ln();
        prop_assert!(lhs >= rhs - 1e-8);
    }

    #[test]
    fn distance_is_a_metric(dim in 2usize..=3, a in angles(), b in angles(), c in angles(),
                            r in prop::array::uniform3(0.0..15.0f64)) {
        let (x, y, z) = (point(dim, &a, r[0]), point(dim, &b, r[1]), point(dim, &c, r[2]));
        prop_assert!((distance(&x, &y) - distance(&y, &x)).abs() <= 1e-9);
        prop_assert!(distance(&x, &z) <= distance(&x, &y) + distance(&y, &z) + 1e-8);
    }

    #[test]
    fn geodesic_points_are_at_the_requested_distance(dim in 2usize..=3, a in angles(), b in angles(),
                                                     r in prop::array::uniform2(0.0..12.0f64), f in 0.0..1.0f64) {
        let (x, y) = (point(dim, &a, r[0]), point(dim, &b, r[1]));
        let t = f * distance(&x, &y);
        if let Ok(p) = geodesic_point(&x, &y, t) {
            prop_assert!((distance(&x, &p) - t).abs() <= 1e-7);
        }
    }

    #[test]
    fn visual_angle_triangle_inequality(dim in 2usize..=3, a in angles(), b in angles(), c in angles()) {
        let u = BoundaryPoint::from_vector(&unit(dim, &a)).unwrap();
        let v = BoundaryPoint::from_vector(&unit(dim, &b)).unwrap();
        let w = BoundaryPoint::from_vector(&unit(dim, &c)).unwrap();
        prop_assert!(visual_angle(&u, &w) <= visual_angle(&u, &v) + visual_angle(&v, &w) + 1e-9);
    }

    #[test]
    fn isometries_preserve_distance(dim in 2usize..=3, a in angles(), b in angles(),
                                    r in prop::array::uniform2(0.0..8.0f64),
                                    th in 0.0..6.3f64, t in 0.0..6.0f64, ph in 0.0..6.3f64) {
        let (x, y) = (point(dim, &a, r[0]), point(dim, &b, r[1]));
        let g = isometry(dim, th, t, ph);
        prop_assert!((distance(&g.apply(&x), &g.apply(&y)) - distance(&x, &y)).abs() <= 1e-7);
    }

    #[test]
    fn chain_params_are_monotone(r in prop::collection::vec(1.0..6.0f64, 3..7), th in prop::collection::vec(-0.6..0.6f64, 7),
                                 c in 0.0..3.0f64, d in 0.0..5.0f64, dc in 0.0..2.0f64, dd in 0.0..2.0f64) {
        // points marching outward with small turns
        let mut pts = vec![Point::origin(2)];
        let mut g = Isometry::identity(2);
        for (k, step) in r.iter().enumerate() {
            g = g.compose(&isometry(2, th[k], *step, 0.0), &tol()).unwrap();
            pts.push(g.orbit_point());
        }
        let loose = ChainParams::new(c + dc, (d - dd).max(0.0)).unwrap();
        if check_chain(&pts, ChainParams::new(c, d).unwrap()).unwrap().ok {
            prop_assert!(check_chain(&pts, loose).unwrap().ok);
        }
        let rev: Vec<Point> = pts.iter().rev().cloned().collect();
        let p = ChainParams::new(c, d).unwrap();
        prop_assert_eq!(check_chain(&pts, p).unwrap().ok, check_chain(&rev, p).unwrap().ok);
    }

    #[test]
    fn atom_weights_sum_to_one(norms in prop::collection::vec(0.0..40.0f64, 1..300), s in 0.3..2.0f64) {
        let atoms = ps_atoms(&norms, s, 0.2, W_MIN).unwrap();
        prop_assert!((atoms.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let raw: Vec<f64> = norms.iter().map(|n| (-s * n).exp()).collect();
        let total: f64 = raw.iter().sum();
        prop_assert!((atoms.z - total).abs() <= atoms.mass_dropped * total + 1e-12 * total);
    }

    #[test]
    fn box_counts_grow_with_the_sample(dirs in prop::collection::vec(0.0..6.3f64, 2..200), keep in 1usize..200) {
        let make = |v: &[f64]| DirectionSample {
            directions: v.iter().map(|t| BoundaryPoint::from_vector(&[t.cos(), t.sin()]).unwrap()).collect(),
            source: "prop".into(),
            norm_cutoff: 0.0,
            min_norm: 0.0,
            theta_dedup: 1e-6,
            resolution: 1e-6,
        };
        let scales = [0.5, 0.2, 0.1, 0.05, 0.02];
        let cfg = BoxCountConfig::default();
        let all = box_count(&make(&dirs), &scales, &cfg).unwrap();
        let part = box_count(&make(&dirs[..keep.min(dirs.len())]), &scales, &cfg).unwrap();
        for (p, a) in part.counts.iter().zip(&all.counts) {
            prop_assert!(p <= a);
        }
    }
}

fn schottky() -> &'static GroupSpec {
    static S: OnceLock<GroupSpec> = OnceLock::new();
    S.get_or_init(|| symmetric_schottky(2, 2.0, &tol()).unwrap())
}

fn ball(r: f64) -> OrbitBall {
    enumerate_ball(schottky(), r, &EnumerateConfig { prune_margin: Some(0.0), ..Default::default() }).unwrap()
}

fn same_points(small: &OrbitBall, big: &OrbitBall) -> bool {
    small.elements.iter().all(|e| {
        let p = e.iso.orbit_point();
        big.elements.iter().any(|f| distance(&p, &f.iso.orbit_point()) < 1e-7)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn balls_are_nested(r1 in 2.0..6.0f64, dr in 0.0..2.0f64) {
        prop_assert!(same_points(&ball(r1), &ball(r1 + dr)));
    }

    #[test]
    fn poincare_partial_monotone(s in 0.3..2.0f64, ds in 0.0..1.0f64, r in 3.0..6.0f64, dr in 0.0..2.0f64) {
        let (b, big) = (ball(r), ball(r + dr));
        prop_assert!(poincare_partial(&b, s + ds) <= poincare_partial(&b, s) + 1e-12);
        prop_assert!(poincare_partial(&b, s) <= poincare_partial(&big, s) + 1e-12);
    }

    #[test]
    fn separated_nets_are_separated(r in 0.5..4.0f64) {
        let b = ball(7.0);
        let net = separated_net(&b.elements, r);
        for (k, &i) in net.iter().enumerate() {
            for &j in &net[..k] {
                let d = distance(&b.elements[i].iso.orbit_point(), &b.elements[j].iso.orbit_point());
                prop_assert!(d > r);
            }
        }
    }
}

struct Fixture {
    pair: PingPongPair,
    seed: SeedAlphabet,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let synth = SyntheticParams::default();
        let pair = find_ping_pong_pair(schottky(), ConstantsMode::Synthetic, &synth, &tol()).unwrap();
        let seed = build_seed_alphabet(&ball(9.0), &pair, 0.5, &synth, Some(9.0), Some(0.75)).unwrap();
        Fixture { pair, seed }
    })
}

fn reduced_word() -> impl Strategy<Value = Vec<i32>> {
    prop::collection::vec(prop::sample::select(vec![1, -1, 2, -2]), 1..7).prop_map(|w| {
        let mut out: Vec<i32> = Vec::new();
        for x in w {
            if out.last() == Some(&-x) {
                out.pop();
            } else {
                out.push(x);
            }
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn phi_moves_norms_boundedly(w in reduced_word()) {
        let f = fixture();
        let g = schottky().evaluate(&w, &tol()).unwrap();
        let out = phi_map(&g, &f.pair, &tol()).unwrap();
        let a = f.pair.a().unwrap().norm();
        if g.norm() >= a {
            prop_assert!((out.element.norm() - g.norm()).abs() <= 2.5 * a + 1e-9);
        }
        prop_assert!(out.certificate.ok);
    }

    #[test]
    fn concatenation_is_superadditive(idx in prop::collection::vec(any::<prop::sample::Index>(), 2..6)) {
        let f = fixture();
        let parts: Vec<&Isometry> = idx.iter().map(|i| &f.seed.letters[i.index(f.seed.len())]).collect();
        prop_assert!(concat_f(&parts, &f.pair, &tol()).is_ok());
    }

    #[test]
    fn semigroup_words_are_semiconvex(idx in prop::collection::vec(any::<prop::sample::Index>(), 1..4)) {
        let f = fixture();
        let parts: Vec<&Isometry> = idx.iter().map(|i| &f.seed.letters[i.index(f.seed.len())]).collect();
        let longest = parts.iter().map(|g| g.norm()).fold(0.0, f64::max);
        let gap = semiconvexity_gap(&parts, &f.pair, 0.05, &tol()).unwrap();
        prop_assert!(gap < 600.0 * f.pair.c() + longest, "{gap}");
    }
}

/// In the regime where the letter separation exceeds the annulus width by
/// more than `18C`, shadows at `9C` only contain extensions of their word.
#[test]
fn shadows_nest_along_words() {
    let synth = SyntheticParams { c_divisor: 20.0, annulus_frac: 0.6, separation_factor: 32.0, ..Default::default() };
    let pair = find_ping_pong_pair(schottky(), ConstantsMode::Synthetic, &synth, &tol()).unwrap();
    let k = build_seed_alphabet(&ball(10.0), &pair, 0.5, &synth, Some(10.0), Some(0.75)).unwrap();
    let table = FAtomTable::build(&k.letters, &pair, 24.0, 12, 1_000_000, &tol()).unwrap();
    let apexes: Vec<usize> = (0..table.len()).collect();
    let bad = shadow_nesting_violations(&table, &apexes, 9.0 * pair.c());
    assert!(bad.is_empty(), "{} violations", bad.len());
}
