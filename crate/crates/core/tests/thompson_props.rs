use proptest::prelude::*;
use rampguard_core::thompson::{sharpen, win_probability};
use rampguard_core::{thompson_assignment_probability, PerArm, PosteriorState};
use statrs::distribution::{ContinuousCDF, Normal};

fn posterior(mu0: f64, mu1: f64, v0: f64, v1: f64) -> PosteriorState {
    PosteriorState {
        mean: PerArm::new(mu0, mu1),
        variance: PerArm::new(v0, v1),
    }
}

proptest! {
    #[test]
    fn win_probability_matches_reference(
        mu0 in -3.0f64..3.0, mu1 in -3.0f64..3.0, v0 in 1e-3f64..5.0, v1 in 1e-3f64..5.0,
    ) {
        let p = win_probability(&posterior(mu0, mu1, v0, v1));
        let reference = Normal::standard().cdf((mu1 - mu0) / (v0 + v1).sqrt());
        prop_assert!((p - reference).abs() < 1e-9 * reference.max(1e-300));
    }

    #[test]
    fn sharpening_is_monotone_in_the_exponent(p in 1e-6f64..(1.0 - 1e-6), c1 in 0.05f64..8.0, dc in 0.0f64..8.0) {
        let (a, b) = (sharpen(p, c1), sharpen(p, c1 + dc));
        // Larger exponents push the probability away from one half.
        if p < 0.5 {
            prop_assert!(b <= a + 1e-15);
        } else if p > 0.5 {
            prop_assert!(b >= a - 1e-15);
        }
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn sharpening_matches_direct_formula(p in 1e-3f64..0.999, c in 0.1f64..5.0) {
        let direct = p.powf(c) / (p.powf(c) + (1.0 - p).powf(c));
        prop_assert!((sharpen(p, c) - direct).abs() < 1e-12);
        prop_assert!((sharpen(p, 1.0) - p).abs() < 1e-15);
        prop_assert!((sharpen(p, c) + sharpen(1.0 - p, c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn assignment_is_monotone_in_the_effect(mu1 in -4.0f64..4.0, d in 0.0f64..2.0, c in 0.1f64..5.0) {
        let lo = thompson_assignment_probability(&posterior(0.0, mu1, 0.05, 0.05), c);
        let hi = thompson_assignment_probability(&posterior(0.0, mu1 + d, 0.05, 0.05), c);
        prop_assert!(hi >= lo);
    }
}

#[test]
fn extreme_posteriors_stay_finite() {
    let bad = thompson_assignment_probability(&posterior(0.0, -1e3, 1e-6, 1e-6), 4.0);
    assert_eq!(bad, 0.0);
    let good = thompson_assignment_probability(&posterior(0.0, 1e3, 1e-6, 1e-6), 0.25);
    assert_eq!(good, 1.0);
}
