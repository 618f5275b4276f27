use std::f64::consts::PI;

use alprs::locator::{
    density_anchor, filter_by_orientation, offset_densities, offset_density_inliers, DensityConfig,
    MatchPair,
};
use proptest::prelude::*;

fn arb_pair() -> impl Strategy<Value = MatchPair> {
    (
        (0.0f64..40.0, 0.0f64..60.0, -PI..PI),
        (0.0f64..200.0, 0.0f64..200.0, -PI..PI),
    )
        .prop_map(|(t, i)| MatchPair {
            template_char: '7',
            template_xy: (t.0, t.1),
            template_theta: t.2,
            image_xy: (i.0, i.1),
            image_theta: i.2,
        })
}

fn rotate(a: f64, by: f64) -> f64 {
    let mut r = (a + by) % (2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    } else if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

proptest! {
    #[test]
    fn orientation_filter_is_idempotent(pairs in prop::collection::vec(arb_pair(), 0..40)) {
        let once = filter_by_orientation(&pairs);
        prop_assert_eq!(filter_by_orientation(&once), once.clone());
        for p in &once {
            prop_assert!(p.orientation_diff() <= 2.0 * PI / 36.0);
        }
    }

    #[test]
    fn orientation_filter_ignores_common_rotation(
        pairs in prop::collection::vec(arb_pair(), 0..40),
        by in -PI..PI,
    ) {
        let rotated: Vec<MatchPair> = pairs
            .iter()
            .map(|p| MatchPair {
                template_theta: rotate(p.template_theta, by),
                image_theta: rotate(p.image_theta, by),
                ..*p
            })
            .collect();
        let keep: Vec<bool> = pairs.iter().map(|p| p.orientation_diff() <= 2.0 * PI / 36.0 - 1e-9).collect();
        let drop: Vec<bool> = pairs.iter().map(|p| p.orientation_diff() > 2.0 * PI / 36.0 + 1e-9).collect();
        let kept_rot: Vec<bool> = rotated.iter().map(|p| filter_by_orientation(&[*p]).len() == 1).collect();
        for i in 0..pairs.len() {
            if keep[i] { prop_assert!(kept_rot[i]); }
            if drop[i] { prop_assert!(!kept_rot[i]); }
        }
    }

    #[test]
    fn densities_match_brute_force(pairs in prop::collection::vec(arb_pair(), 0..30), h in 1.0f64..40.0) {
        let dens = offset_densities(&pairs, h);
        for (i, p) in pairs.iter().enumerate() {
            let (ax, ay) = (p.image_xy.0 - p.template_xy.0, p.image_xy.1 - p.template_xy.1);
            let n = pairs
                .iter()
                .filter(|q| {
                    let (bx, by) = (q.image_xy.0 - q.template_xy.0, q.image_xy.1 - q.template_xy.1);
                    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt() <= h
                })
                .count();
            prop_assert_eq!(dens[i], n);
        }
        if let Some(a) = density_anchor(&pairs, h) {
            let max = *dens.iter().max().unwrap();
            prop_assert_eq!(dens[a], max);
            prop_assert!(dens[..a].iter().all(|&d| d < max));
        } else {
            prop_assert!(pairs.is_empty());
        }
    }

    #[test]
    fn inliers_are_a_subset_and_translation_invariant(
        pairs in prop::collection::vec(arb_pair(), 1..30),
        shift in (-500.0f64..500.0, -500.0f64..500.0),
    ) {
        let cfg = DensityConfig::default();
        let inl = offset_density_inliers(&pairs, &cfg);
        prop_assert!(!inl.is_empty());
        prop_assert!(inl.iter().all(|p| pairs.contains(p)));
        let moved: Vec<MatchPair> = pairs
            .iter()
            .map(|p| MatchPair { image_xy: (p.image_xy.0 + shift.0, p.image_xy.1 + shift.1), ..*p })
            .collect();
        let inl_moved = offset_density_inliers(&moved, &cfg);
        prop_assert_eq!(inl_moved.len(), inl.len());
    }

    #[test]
    fn anchor_density_grows_with_bandwidth(pairs in prop::collection::vec(arb_pair(), 1..30), h in 1.0f64..30.0) {
        let d1 = offset_densities(&pairs, h).into_iter().max().unwrap();
        let d2 = offset_densities(&pairs, h * 1.5).into_iter().max().unwrap();
        prop_assert!(d2 >= d1);
    }
}
