//! `csib verify`: randomized checks of the estimator identities and
//! inequalities, one JSON line per suite.

use csib_core::divergence::{gaussian_cs, Convention, GaussianParams};
use csib_core::oracle::{
    conditional_nonnegativity, consistency_study, demo_cloud_descent, demo_mode_coverage, discrete_threshold,
    forms_check, gradcheck, integrate_cs, monte_carlo_discrete, mse_ranking_agreement, validate_corollary1,
    validate_prop5_gaussians, validate_theorem1, Axis, CloudConfig, GridDensity, CONSISTENCY_BOUND_1600,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::io::{json_line, json_record, write_atomic};
use crate::{Suite, VerifyArgs};

/// Dimensions covered by the Gaussian CS-versus-KL suite.
pub const THEOREM1_DIMS: [usize; 3] = [1, 2, 5];

/// Sample sizes of the consistency suite.
pub const CONSISTENCY_GRID: [usize; 5] = [100, 200, 400, 800, 1600];

/// Largest gap between the quadrature and the closed form.
pub const QUADRATURE_TOL: f64 = 1e-4;

/// Least fraction of cloud steps whose MMD² may not rise.
pub const CLOUD_MONOTONE_MIN: f64 = 0.95;

/// Rise in MMD² still counted as non-increasing.
pub const CLOUD_MMD_SLACK: f64 = 1e-6;

const ALL: [Suite; 12] = [
    Suite::Theorem1,
    Suite::Corollary1,
    Suite::Prop5,
    Suite::Discrete,
    Suite::Quadrature,
    Suite::Consistency,
    Suite::Conditional,
    Suite::Ranking,
    Suite::Cloud,
    Suite::Modes,
    Suite::Gradcheck,
    Suite::Forms,
];

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub check: &'static str,
    pub trials: usize,
    pub violations: usize,
    pub pass: bool,
    pub details: Value,
}

fn result(check: &'static str, trials: usize, violations: usize, details: Value) -> SuiteResult {
    SuiteResult {
        check,
        trials,
        violations,
        pass: violations == 0,
        details,
    }
}

pub fn default_trials(s: Suite) -> usize {
    match s {
        Suite::Theorem1 | Suite::Corollary1 | Suite::Discrete | Suite::Conditional => 1000,
        Suite::Prop5 | Suite::Ranking | Suite::Forms => 100,
        Suite::Consistency | Suite::Gradcheck => 20,
        Suite::Cloud | Suite::Modes => csib_core::oracle::demos::DEFAULT_CLOUD_STEPS,
        Suite::Quadrature | Suite::All => 1,
    }
}

/// Runs one suite. `trials` is the unit each suite counts: pairs, seeds,
/// steps or models.
pub fn run_suite(s: Suite, trials: usize, seed: u64) -> CliResult<SuiteResult> {
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    Ok(match s {
        Suite::Theorem1 => {
            let r = validate_theorem1(trials, &THEOREM1_DIMS, seed)?;
            result("theorem1", r.trials, r.violations, json!({"dims": THEOREM1_DIMS, "max_gap": r.max_gap}))
        }
        Suite::Corollary1 => {
            let r = validate_corollary1(trials, seed)?;
            result("corollary1", r.trials, r.violations, json!({"max_gap": r.max_gap}))
        }
        Suite::Prop5 => {
            let r = validate_prop5_gaussians(trials, seed)?;
            result("prop5", r.trials, r.violations, json!({"max_gap": r.max_gap}))
        }
        Suite::Discrete => {
            let mut rows = Vec::new();
            let mut bad = 0;
            for k in [2, 3, 10] {
                let f = monte_carlo_discrete(k, trials, seed)?;
                let tau = discrete_threshold(k).expect("threshold exists for the suite's K");
                bad += usize::from(f < tau);
                rows.push(json!({"k": k, "fraction": f, "threshold": tau}));
            }
            result("discrete", 3 * trials, bad, json!({"per_k": rows}))
        }
        Suite::Quadrature => {
            let ax = Axis::new(-8.0, 9.0, 10_000)?;
            let quad = integrate_cs(&GridDensity::normal_1d(ax, 0.0, 1.0)?, &GridDensity::normal_1d(ax, 1.0, 1.0)?)?.nats();
            let closed = gaussian_cs(
                &GaussianParams::scalar(0.0, 1.0)?,
                &GaussianParams::scalar(1.0, 1.0)?,
                Convention::Eq10,
            )?
            .nats();
            let gap = (quad - closed).abs();
            result(
                "quadrature",
                1,
                usize::from(!(gap <= QUADRATURE_TOL)),
                json!({"closed_form": closed, "quadrature": quad}),
            )
        }
        Suite::Consistency => {
            let seeds: Vec<u64> = (0..trials as u64).map(|i| seed + i).collect();
            let rows = consistency_study(&CONSISTENCY_GRID, &seeds)?;
            let rising = rows.windows(2).filter(|w| !(w[1].median_error < w[0].median_error)).count();
            let last = rows.last().expect("grid is nonempty").median_error;
            let over = usize::from(!(last <= CONSISTENCY_BOUND_1600));
            result(
                "consistency",
                trials,
                rising + over,
                json!({"rows": rows, "bound_at_1600": CONSISTENCY_BOUND_1600}),
            )
        }
        Suite::Conditional => {
            let r = conditional_nonnegativity(trials, seed)?;
            result("conditional", r.trials, r.negatives, json!({"min_value": r.min_value}))
        }
        Suite::Ranking => {
            let r = mse_ranking_agreement(trials, seed)?;
            result("ranking", r.pairs, r.pairs - r.agreements, json!({"agreements": r.agreements}))
        }
        Suite::Cloud => {
            let cfg = CloudConfig {
                steps: trials,
                seed,
                ..CloudConfig::default()
            };
            let t = demo_cloud_descent(&cfg)?;
            let (first, last) = (t.steps[0], *t.steps.last().expect("initial step recorded"));
            let frac = t.non_increasing_fraction(CLOUD_MMD_SLACK);
            let bad = usize::from(t.aborted.is_some())
                + usize::from(!(last.mmd_sq < first.mmd_sq))
                + usize::from(frac < CLOUD_MONOTONE_MIN);
            result(
                "cloud",
                trials,
                bad,
                json!({
                    "initial_d_cs": first.d_cs,
                    "final_d_cs": last.d_cs,
                    "initial_mmd_sq": first.mmd_sq,
                    "final_mmd_sq": last.mmd_sq,
                    "mmd_non_increasing_fraction": frac,
                    "aborted": t.aborted,
                }),
            )
        }
        Suite::Modes => {
            let m = demo_mode_coverage(seed, trials)?;
            result("modes", trials, usize::from(!m.passes()), serde_json::to_value(&m).expect("serializable"))
        }
        Suite::Gradcheck => {
            let r = gradcheck(trials, seed)?;
            result(
                "gradcheck",
                r.entries,
                r.failures,
                json!({"models": r.models, "max_rel_error": r.max_rel_error}),
            )
        }
        Suite::Forms => {
            let r = forms_check(trials, seed)?;
            result("forms", r.instances, usize::from(!r.passes()), serde_json::to_value(r).expect("serializable"))
        }
        Suite::All => unreachable!("expanded by the caller"),
    })
}

pub fn expand(suites: &[Suite]) -> Vec<Suite> {
    let mut out = Vec::new();
    for &s in suites {
        let add: &[Suite] = if s == Suite::All { &ALL } else { std::slice::from_ref(&s) };
        for &a in add {
            if !out.contains(&a) {
                out.push(a);
            }
        }
    }
    out
}

pub fn verify(a: &VerifyArgs) -> CliResult<()> {
    let mut lines = String::new();
    let mut failed = Vec::new();
    for s in expand(&a.suite) {
        let r = run_suite(s, a.trials.unwrap_or_else(|| default_trials(s)), a.seed)?;
        let line = json_line(&json_record(&r, &[]));
        print!("{line}");
        lines.push_str(&line);
        if !r.pass {
            failed.push(r.check);
        }
    }
    if let Some(p) = &a.output {
        write_atomic(p, lines.as_bytes())?;
    }
    if !failed.is_empty() {
        return Err(CliError::CheckFailed(format!("failed suites: {}", failed.join(", "))));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_expands_once() {
        let e = expand(&[Suite::Forms, Suite::All]);
        assert_eq!(e.len(), ALL.len());
        assert_eq!(e[0], Suite::Forms);
    }

    #[test]
    fn quick_suites_pass() {
        for s in [Suite::Theorem1, Suite::Corollary1, Suite::Quadrature, Suite::Forms] {
            let r = run_suite(s, 20, 0).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }
}
