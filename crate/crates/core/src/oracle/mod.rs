//! Brute-force and numeric-integration references, theorem validators and
//! the sample-cloud demonstrations.

pub mod consistency;
pub mod demos;
pub mod forms;
pub mod gradcheck;
pub mod integrate;
pub mod naive;
pub mod prediction;
pub mod validators;

pub use consistency::{consistency_study, ConsistencyRow, CONSISTENCY_BOUND_1600};
pub use demos::{demo_cloud_descent, demo_mode_coverage, CloudConfig, CloudStep, CloudTrajectory, ModeCoverage};
pub use forms::{forms_check, FormsReport};
pub use gradcheck::{gradcheck, GradcheckReport};
pub use integrate::{integrate_cs, integrate_holder, integrate_kl, validate_prop5, validate_prop5_gaussians, Axis, GridDensity, Prop5Report};
pub use naive::{naive_cs_qmi, naive_hsic};
pub use prediction::{conditional_nonnegativity, mse_ranking_agreement, NonnegReport, RankingReport};
pub use validators::{discrete_threshold, monte_carlo_discrete, validate_corollary1, validate_theorem1, ValidationReport};
