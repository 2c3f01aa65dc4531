//! Both ramp solvers against exhaustive search over every treatment size.

use proptest::prelude::*;
use rampguard_core::cantelli::{
    cantelli_coefficients, solve_ramp_size_cantelli, PosteriorQuantities,
};
use rampguard_core::posterior::VarianceKind;
use rampguard_core::{
    solve_ramp_size, Branch, OutcomeVariance, PerArm, PosteriorState, RampInputs,
};
use statrs::distribution::{ContinuousCDF, Normal};

/// Largest `m` in `[1, ⌊N/2⌋]` with `(b - S - μ̃(m)) / σ̃(m) <= Φ⁻¹(Δ)`,
/// recomputed from scratch.
fn grid_analytic(inp: &RampInputs) -> u64 {
    if inp.tolerance <= 0.0 {
        return 0;
    }
    let q = Normal::standard().inverse_cdf(inp.tolerance);
    let p = inp.posterior;
    let s = inp.variance.sigma_sq;
    let before = inp.treated_before as f64;
    (1..=inp.population / 2)
        .rev()
        .find(|&m| {
            let m = m as f64;
            let mu = p.mean.treatment * m - p.mean.control * (m + before);
            let var = m * m * p.variance.treatment
                + m * s.treatment
                + (m + before).powi(2) * p.variance.control
                + (m + before) * s.control;
            (inp.stage_budget - inp.treated_sum_before - mu) / var.sqrt() <= q + 1e-12
        })
        .unwrap_or(0)
}

fn grid_cantelli(q: &PosteriorQuantities, b: f64, delta: f64, population: u64) -> u64 {
    if delta <= 0.0 || q.survivors == 0 {
        return 0;
    }
    (1..=population / 2)
        .rev()
        .find(|&m| {
            let m = m as f64;
            let mean = m * q.phi1 + q.phi2;
            let var = m * q.phi3 + m * (m - 1.0) * q.phi4 + q.phi5 + m * q.phi6;
            // Cantelli bound V / (V + (E - b)²) <= Δ, cross-multiplied.
            mean >= b && (1.0 - delta) * var <= delta * (mean - b) * (mean - b)
        })
        .unwrap_or(0)
}

prop_compose! {
    fn ramp_inputs()(
        mu0 in -3.0f64..3.0, mu1 in -3.0f64..3.0,
        v0 in 1e-3f64..10.0, v1 in 1e-3f64..10.0,
        s0 in 0.5f64..20.0, s1 in 0.5f64..20.0,
        before in 0u64..2000, per_unit in -2.0f64..1.0,
        budget in -3000.0f64..-1.0, tolerance in 1e-4f64..0.3,
        population in 1u64..=1000,
    ) -> RampInputs {
        RampInputs {
            posterior: PosteriorState {
                mean: PerArm::new(mu0, mu1),
                variance: PerArm::new(v0, v1),
            },
            variance: OutcomeVariance { sigma_sq: PerArm::new(s0, s1), kind: VarianceKind::Known },
            treated_before: before,
            treated_sum_before: per_unit * before as f64,
            stage_budget: budget,
            tolerance,
            population,
        }
    }
}

prop_compose! {
    fn quantities()(
        phi1 in -3.0f64..1.0, phi2 in -400.0f64..0.0,
        phi3 in 0.1f64..30.0, phi4 in -0.5f64..2.0,
        phi5 in 0.0f64..3000.0, phi6 in -5.0f64..5.0,
    ) -> PosteriorQuantities {
        PosteriorQuantities {
            phi0: 1.0, phi1, phi2, phi3, phi4, phi5, phi6,
            phi4_plugin: phi4, phi4_conditional: None,
            phi6_plugin: phi6, phi6_natural: phi6, phi6_conditional: None,
            samples: 1, survivors: 1,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn analytic_matches_grid(inp in ramp_inputs()) {
        let d = solve_ramp_size(&inp);
        prop_assert_eq!(d.m, grid_analytic(&inp));
        prop_assert!(d.m <= inp.population / 2);
        prop_assert_eq!(d.assignment_probability, d.m as f64 / inp.population as f64);
    }

    #[test]
    fn cantelli_matches_grid(
        q in quantities(),
        b in -800.0f64..-1.0,
        delta in 1e-4f64..0.3,
        population in 1u64..=1000,
    ) {
        let d = solve_ramp_size_cantelli(&q, b, delta, population);
        prop_assert_eq!(d.m, grid_cantelli(&q, b, delta, population));
    }

    #[test]
    fn cantelli_boundary_search_matches_scan(
        q in quantities(),
        b in -800.0f64..-1.0,
        delta in 1e-4f64..0.3,
    ) {
        // Above the scan limit the solver uses boundary candidates only.
        let population = 25_000;
        let c = cantelli_coefficients(&q, b, delta);
        let scan = (1..=population / 2).rev().find(|&m| {
            let x = m as f64;
            x * q.phi1 + q.phi2 >= b && (c.a * x + c.b) * x + c.c >= 0.0
        }).unwrap_or(0);
        prop_assert_eq!(solve_ramp_size_cantelli(&q, b, delta, population).m, scan);
    }

    #[test]
    fn looser_tolerance_never_shrinks_the_ramp(inp in ramp_inputs(), extra in 0.0f64..0.2) {
        let tight = solve_ramp_size(&inp).m;
        let loose = solve_ramp_size(&RampInputs { tolerance: inp.tolerance + extra, ..inp }).m;
        prop_assert!(loose >= tight);
    }

    #[test]
    fn larger_budget_never_shrinks_the_ramp(inp in ramp_inputs(), extra in 0.0f64..500.0) {
        let tight = solve_ramp_size(&inp).m;
        let loose = solve_ramp_size(&RampInputs { stage_budget: inp.stage_budget - extra, ..inp }).m;
        prop_assert!(loose >= tight);
    }
}

#[test]
fn branches_are_labelled() {
    let base = RampInputs {
        posterior: PosteriorState {
            mean: PerArm::splat(0.0),
            variance: PerArm::splat(100.0),
        },
        variance: OutcomeVariance::known(10.0, 10.0).unwrap(),
        treated_before: 0,
        treated_sum_before: 0.0,
        stage_budget: -500.0,
        tolerance: 0.005,
        population: 500,
    };
    assert_eq!(solve_ramp_size(&base).branch, Branch::RootSelected);
    assert_eq!(
        solve_ramp_size(&RampInputs {
            tolerance: 0.0,
            ..base
        })
        .branch,
        Branch::ZeroTolerance
    );
    let sure = RampInputs {
        posterior: PosteriorState {
            mean: PerArm::new(0.0, 3.0),
            variance: PerArm::splat(1e-4),
        },
        ..base
    };
    assert_eq!(solve_ramp_size(&sure).branch, Branch::CapAtHalf);
}
