use inr_codec::{bd_rate, RdPoint};
use proptest::prelude::*;

fn curve(points: &[(f64, f64)]) -> Vec<RdPoint> {
    points.iter().map(|&(r, p)| RdPoint::new(r, p, "").unwrap()).collect()
}

/// Through four points the cubic fit is the interpolating polynomial, so the
/// reference integrates the Lagrange form with a fine trapezoid rule.
fn lagrange_trapezoid_bd(anchor: &[(f64, f64)], test: &[(f64, f64)]) -> f64 {
    let interp = |pts: &[(f64, f64)], p: f64| {
        let mut acc = 0.0;
        for (i, &(ri, pi)) in pts.iter().enumerate() {
            let mut basis = 1.0;
            for (j, &(_, pj)) in pts.iter().enumerate() {
                if i != j {
                    basis *= (p - pj) / (pi - pj);
                }
            }
            acc += ri.log10() * basis;
        }
        acc
    };
    let min_p = |pts: &[(f64, f64)]| pts.iter().map(|x| x.1).fold(f64::MAX, f64::min);
    let max_p = |pts: &[(f64, f64)]| pts.iter().map(|x| x.1).fold(f64::MIN, f64::max);
    let lo = min_p(anchor).max(min_p(test));
    let hi = max_p(anchor).min(max_p(test));
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let mut integral = 0.0;
    for i in 0..=n {
        let p = lo + h * i as f64;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        integral += w * (interp(test, p) - interp(anchor, p));
    }
    (10f64.powf(integral * h / (hi - lo)) - 1.0) * 100.0
}

#[test]
fn four_point_hand_case_matches_integration_oracle() {
    let anchor = [(0.12, 23.1), (0.25, 25.9), (0.51, 28.4), (0.98, 30.6)];
    let test = [(0.10, 23.6), (0.22, 26.3), (0.43, 28.9), (0.90, 31.2)];
    let oracle = lagrange_trapezoid_bd(&anchor, &test);
    let got = bd_rate(&curve(&anchor), &curve(&test)).unwrap();
    assert!(got < 0.0, "test curve is cheaper everywhere: {got}");
    assert!((got - oracle).abs() <= 1e-4 * oracle.abs(), "{got} vs {oracle}");
}

#[test]
fn argument_order_does_not_matter_within_curves() {
    let a = [(0.1, 24.0), (0.2, 26.5), (0.4, 29.0), (0.8, 31.0)];
    let mut shuffled = curve(&a);
    shuffled.reverse();
    let t = curve(&[(0.09, 24.2), (0.19, 26.4), (0.37, 29.3), (0.7, 31.1)]);
    assert_eq!(bd_rate(&curve(&a), &t).unwrap(), bd_rate(&shuffled, &t).unwrap());
}

proptest! {
    #[test]
    fn swapping_curves_inverts_the_rate_ratio(scale in 0.3f64..3.0, offset in -0.2f64..0.2) {
        let a = [(0.1, 24.0), (0.2, 26.5), (0.4, 29.0), (0.8, 31.0), (1.3, 32.5)];
        let b: Vec<(f64, f64)> = a.iter().map(|&(r, p)| (r * scale, p + offset)).collect();
        let ab = bd_rate(&curve(&a), &curve(&b)).unwrap() / 100.0 + 1.0;
        let ba = bd_rate(&curve(&b), &curve(&a)).unwrap() / 100.0 + 1.0;
        prop_assert!((ab * ba - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_rate_scaling_is_recovered(scale in 0.2f64..5.0) {
        let a = [(0.1, 24.0), (0.2, 26.5), (0.4, 29.0), (0.8, 31.0)];
        let b: Vec<(f64, f64)> = a.iter().map(|&(r, p)| (r * scale, p)).collect();
        let got = bd_rate(&curve(&a), &curve(&b)).unwrap();
        prop_assert!((got - (scale - 1.0) * 100.0).abs() < 1e-6);
    }
}
