//! Conditional bivariate Clayton copulas with covariate-dependent
//! calibration, and data-splitting checks of the simplifying assumption
//! (the copula parameter does not depend on the covariates).
//!
//! The pipeline: fit both margins by kernel regression, turn responses into
//! PIT pairs, estimate the calibration function `η(x) = log θ(x)` on a
//! training split, bin the test split by `η̂` and compare within-bin rank
//! correlations with a permutation test (Method 1) or a χ² contrast test
//! (Method 2). Generic model-selection criteria (CVML, CCVML, WAIC) and a
//! Monte Carlo harness are included for comparison.
//!
//! ```
//! use sacheck::{gen_scenario, run_sa_check, substream, SaConfig, Scenario, ScenarioId};
//!
//! let s = Scenario::new(ScenarioId::Sc1, 0.0).unwrap();
//! let d = gen_scenario(&s, 300, &mut substream(7, "data", &[])).unwrap();
//! let report = run_sa_check(&d, &SaConfig { k: 2, permutations: 99, ..SaConfig::default() }, 7).unwrap();
//! assert!(report.method1.p_value > 0.0 && report.method1.p_value <= 1.0);
//! ```

pub mod calibration;
pub mod cli;
pub mod copula;
pub mod data;
pub mod error;
pub mod marginal;
pub mod model_select;
pub mod numeric;
pub mod rng;
pub mod sim;
pub mod special;
pub mod stats;

pub use calibration::{fit_calibration, Backend, CalibrationFit, CalibrationSpec};
pub use copula::{CopulaParam, UnitPair};
pub use data::Dataset;
pub use error::{Error, Result};
pub use marginal::{fit_margin, Bandwidth, MarginalFit};
pub use model_select::{ccvml, compare_full_reduced, cvml, waic, Criterion, DrawsMatrix};
pub use rng::{derive_seed, substream};
pub use sa_tests::{chisq_test, permutation_test, run_sa_check, SaConfig, SaReport, TestResult};
pub use sim::{gen_scenario, run_bench, BenchMethod, BenchSpec, Scenario, ScenarioId};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/copula.md")]
    mod copula {}
    #[doc = include_str!("../../../book/src/margins.md")]
    mod margins {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/tests.md")]
    mod tests {}
    #[doc = include_str!("../../../book/src/criteria.md")]
    mod criteria {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
