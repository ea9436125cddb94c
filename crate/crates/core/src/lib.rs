//! Conditional linear factor models with tradable factors on possibly
//! rank-deficient, unbalanced cross-sections.
//!
//! Each date carries asset means `μ`, covariance `Σ`, characteristics `Φ`
//! (`n × m`) and factor weights `W` (`n × m`), so that factors are the
//! portfolios `f = Wᵀx` and residuals are `ε = x − Φf`. The crate builds
//! OLS, GLS and GLS-type weights, computes MVE portfolios and
//! minimum-variance SDFs with pseudoinverses, evaluates every structural and
//! pricing condition with a residual, and checks the implications between
//! them on each instance.
//!
//! ```
//! use linfactor::{diagnostics, fixtures, ConditionId, Tolerance};
//!
//! let tol = Tolerance::default();
//! let p = fixtures::Example3Params::continuation_default();
//! let (moments, phi, w) = fixtures::example3_instance(&p, &tol).unwrap();
//! let reports = diagnostics::run_all(&moments, &phi, &w, &tol).unwrap();
//! let spanning = diagnostics::report_for(&reports, ConditionId::Spanning).unwrap();
//! assert!(spanning.holds);
//! ```

pub mod builders;
pub mod diagnostics;
pub mod error;
pub mod fixtures;
pub mod generative;
pub mod io;
pub mod linalg;
pub mod model;
pub mod portfolio;

pub use diagnostics::{ConditionId, ConditionReport};
pub use error::{Error, Result};
pub use linalg::{Matrix, Tolerance, Vector};
pub use model::{Characteristics, CrossSectionMoments, FactorWeights, PanelSequence, ReturnSample};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tradable-factors.md")]
    mod tradable_factors {}
    #[doc = include_str!("../../../book/src/spanning.md")]
    mod spanning {}
    #[doc = include_str!("../../../book/src/counterexample.md")]
    mod counterexample {}
    #[doc = include_str!("../../../book/src/implication-graph.md")]
    mod implication_graph {}
    #[doc = include_str!("../../../book/src/gls-type.md")]
    mod gls_type {}
    #[doc = include_str!("../../../book/src/files-and-cli.md")]
    mod files_and_cli {}
}
