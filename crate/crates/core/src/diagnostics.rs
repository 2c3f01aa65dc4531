//! Plug-in checks of the sufficient conditions under which the closed-form
//! rule stays valid for non-Gaussian or non-stationary outcomes.
//!
//! The checks compare the model inputs used at each stage (prior, outcome
//! variance) against the scenario's true moments. They need the truth and
//! so are only available in simulation.

use serde::{Deserialize, Serialize};

use crate::experiment::ExperimentTrace;
use crate::posterior::GaussianPrior;
use crate::scenario::Scenario;

const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostic {
    pub stage: usize,
    pub m: u64,
    /// Prior does not overstate the first-stage effect or understate its
    /// spread. Only evaluated at stage 1.
    pub prior_conservative: Option<bool>,
    /// Current effect is at least the treated-weighted mean of past effects.
    /// Needs earlier treated units.
    pub effect_nondecreasing: Option<bool>,
    /// Plug-in variances are at least the true ones.
    pub variance_conservative: Option<bool>,
}

impl StageDiagnostic {
    pub fn passed(&self) -> bool {
        [
            self.prior_conservative,
            self.effect_nondecreasing,
            self.variance_conservative,
        ]
        .iter()
        .all(|c| c.unwrap_or(true))
    }
}

fn at_least(lhs: f64, rhs: f64) -> bool {
    lhs >= rhs - SLACK * rhs.abs().max(1.0)
}

/// One entry per stage with `m_t > 0`.
pub fn robustness_diagnostics(
    scenario: &Scenario,
    prior: &GaussianPrior,
    trace: &ExperimentTrace,
) -> Vec<StageDiagnostic> {
    let mut out = Vec::new();
    let mut treated_before = 0u64;
    let mut weighted_effect = 0.0;
    let mut weighted_control_var = 0.0;
    for r in &trace.records {
        let Some(spec) = scenario.stage(r.stage) else {
            break;
        };
        if r.m > 0 {
            let effect = spec.effect();
            let diff_var = scenario.effect_variance(r.stage).unwrap_or(f64::NAN);
            let plug = r.variance.control + r.variance.treatment;
            let m = r.m as f64;
            let prior_conservative = (r.stage == 1).then(|| {
                let prior_spread = prior.variance.control + prior.variance.treatment;
                prior.mean.treatment - prior.mean.control <= effect + SLACK
                    && at_least(plug + m * prior_spread, diff_var)
            });
            let (effect_nondecreasing, past_var_ok) = if treated_before > 0 {
                let n = treated_before as f64;
                (
                    Some(at_least(effect, weighted_effect / n)),
                    at_least(r.variance.control, weighted_control_var / n),
                )
            } else {
                (None, true)
            };
            let variance_conservative =
                (r.stage >= 2).then(|| past_var_ok && at_least(plug, diff_var));
            out.push(StageDiagnostic {
                stage: r.stage,
                m: r.m,
                prior_conservative,
                effect_nondecreasing,
                variance_conservative,
            });
        }
        treated_before += r.m;
        weighted_effect += r.m as f64 * spec.effect();
        weighted_control_var += r.m as f64 * spec.variance.control;
    }
    out
}
