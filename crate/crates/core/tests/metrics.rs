mod common;

use proptest::prelude::*;
use rand::Rng;
use revolve_core::metrics::{
    directed_avg_error, directed_hausdorff, profile_sampling, symmetric_avg_error, symmetric_hausdorff, ProfileErrors,
    EVALUATION_STEP,
};
use revolve_core::spline::ProfileCurve;
use revolve_core::Point2;

fn oracle_directed(a: &[Point2], b: &[Point2]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for p in a {
        let mut best = f64::INFINITY;
        for q in b {
            let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
            if d < best {
                best = d;
            }
        }
        sum += best;
        max = max.max(best);
    }
    (sum / a.len() as f64, max)
}

fn random_set(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<Point2> {
    (0..n)
        .map(|_| Point2::new(rng.random_range(0.0..160.0), rng.random_range(0.0..160.0)))
        .collect()
}

#[test]
fn metrics_match_double_loop_oracle() {
    let mut rng = common::rng(11);
    for (na, nb) in [(1, 1), (50, 7), (400, 900), (12_000, 11_000)] {
        let a = random_set(&mut rng, na);
        let b = random_set(&mut rng, nb);
        let (ae_ab, hd_ab) = oracle_directed(&a, &b);
        let (ae_ba, hd_ba) = oracle_directed(&b, &a);
        assert!((directed_avg_error(&a, &b).unwrap() - ae_ab).abs() <= 1e-12 * ae_ab.max(1.0));
        assert_eq!(directed_hausdorff(&a, &b).unwrap(), hd_ab);
        let ae = symmetric_avg_error(&a, &b).unwrap();
        assert!((ae - (ae_ab + ae_ba) / 2.0).abs() <= 1e-12 * ae.max(1.0));
        assert_eq!(symmetric_hausdorff(&a, &b).unwrap(), (hd_ab + hd_ba) / 2.0);
    }
}

fn set_strategy() -> impl Strategy<Value = Vec<Point2>> {
    prop::collection::vec((0.0..160.0f64, 0.0..160.0f64).prop_map(|(x, y)| Point2::new(x, y)), 1..60)
}

proptest! {
    #[test]
    fn symmetric_and_bounded(a in set_strategy(), b in set_strategy()) {
        let ae = symmetric_avg_error(&a, &b).unwrap();
        let hd = symmetric_hausdorff(&a, &b).unwrap();
        prop_assert_eq!(ae, symmetric_avg_error(&b, &a).unwrap());
        prop_assert_eq!(hd, symmetric_hausdorff(&b, &a).unwrap());
        prop_assert!(ae <= hd + 1e-12);
    }

    #[test]
    fn rigid_motion_invariance(a in set_strategy(), b in set_strategy(), angle in -3.2..3.2f64,
                               tx in -500.0..500.0f64, ty in -500.0..500.0f64) {
        let (s, c) = angle.sin_cos();
        let m = |p: &Point2| Point2::new(c * p.x - s * p.y + tx, s * p.x + c * p.y + ty);
        let ma: Vec<_> = a.iter().map(m).collect();
        let mb: Vec<_> = b.iter().map(m).collect();
        prop_assert!((symmetric_avg_error(&a, &b).unwrap() - symmetric_avg_error(&ma, &mb).unwrap()).abs() < 1e-9);
        prop_assert!((symmetric_hausdorff(&a, &b).unwrap() - symmetric_hausdorff(&ma, &mb).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn translated_segment(vx in -5.0..5.0f64, vy in -5.0..5.0f64) {
        let line: Vec<Point2> = (0..=100).map(|i| Point2::new(0.0, i as f64 * 0.5)).collect();
        let shifted: Vec<Point2> = line.iter().map(|p| p + Point2::new(vx, vy)).collect();
        let norm = (vx * vx + vy * vy).sqrt();
        prop_assert!(symmetric_avg_error(&line, &shifted).unwrap() <= norm + 1e-12);
        let across: Vec<Point2> = line.iter().map(|p| p + Point2::new(vx, 0.0)).collect();
        prop_assert!((symmetric_avg_error(&line, &across).unwrap() - vx.abs()).abs() < 1e-12);
    }
}

#[test]
fn zero_only_for_identical_sets() {
    let a = vec![Point2::new(1.0, 2.0), Point2::new(3.0, 4.0)];
    let same = vec![Point2::new(3.0, 4.0), Point2::new(1.0, 2.0)];
    assert_eq!(symmetric_avg_error(&a, &same).unwrap(), 0.0);
    let b = vec![Point2::new(1.0, 2.0)];
    assert!(symmetric_avg_error(&a, &b).unwrap() > 0.0);
    assert_eq!(symmetric_hausdorff(&a, &a).unwrap(), 0.0);
}

#[test]
fn evaluation_sampling_spacing() {
    let curve = ProfileCurve::from_coords([[0.0, 20.0], [60.0, 45.0], [100.0, 120.0]]);
    let s = profile_sampling(&curve);
    for w in s[..s.len() - 1].windows(2) {
        assert!(((w[1] - w[0]).norm() - EVALUATION_STEP).abs() < 1e-6);
    }
    assert!((s.last().unwrap() - curve.knots[2]).norm() < 1e-9);
}

#[test]
fn profile_errors_agree_with_point_set_metrics() {
    let truth = ProfileCurve::from_coords([[0.0, 20.0], [60.0, 45.0], [100.0, 120.0]]);
    let guess = ProfileCurve::from_coords([[0.0, 25.0], [55.0, 45.0], [104.0, 110.0]]);
    let e = ProfileErrors::between(&truth, &guess);
    let (p, q) = (profile_sampling(&truth), profile_sampling(&guess));
    assert!((e.ae_mm - symmetric_avg_error(&p, &q).unwrap()).abs() < 1e-12);
    assert_eq!(e.hd_mm, symmetric_hausdorff(&p, &q).unwrap());
}
