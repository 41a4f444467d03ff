//! Bounds on the probability of necessity and sufficiency (PNS) of a binary
//! treatment `X` on a binary outcome `Z`, obtained by merging a target dataset
//! that records `(Z, X)` with an external dataset that records `(Z, Y)` for a
//! different randomized treatment or covariate `Y`.
//!
//! The crate is organised as:
//!
//! - [`marginals`]: dataset summaries, validation and the compatibility identity.
//! - [`classic`]: baseline bounds (Tian–Pearl, covariate-adjusted bounds with a
//!   fully observed joint) and the comparator between the two covariate forms.
//! - [`constraint`]: the free-parameter parameterisation of every joint that
//!   reproduces both marginals, and the coherence box of those parameters.
//! - [`merge`]: closed-form merged bounds, including treatment-mechanism shifts
//!   and stratification by observed covariates.
//! - [`oracle`]: brute-force grid minimisation over the coherence box, used to
//!   cross-check the closed forms.
//! - [`scm`]: response-function structural causal models used as ground truth.

pub mod classic;
pub mod constraint;
pub mod error;
pub mod marginals;
pub mod merge;
pub mod oracle;
pub mod scm;

pub use classic::{
    dawid_bounds, joint_covariate_bounds, marginal_covariate_bounds, tian_pearl_bounds,
    tightness_check, JointBoundComponents, StratumTightness, TightnessReport,
};
pub use constraint::{
    parameter_box, solve_system, solve_system_unchecked, stratified_parameter_box,
    ConditionalTable, FreeParameterAssignment, FreeParameterBox, Interval,
};
pub use error::{BoundsError, Result};
pub use marginals::{
    compatibility_check, validate, validate_with_tol, BoundResult, ExternalMarginal, JointDistribution,
    StratifiedInput, Stratum, TargetMarginal, DEFAULT_TOL,
};
pub use merge::{
    binary_merged_bounds, merged_bounds, shifted_merged_bounds, stratified_merged_bounds,
    StratifiedBounds,
};
pub use oracle::{
    default_grid, gamma_delta_terms, oracle_bounds, oracle_bounds_stratified, OracleResult,
    StratifiedOracleResult,
};
pub use scm::{
    coverage_trial, marginalize, random_scm, random_shift, true_pns, CoverageConfig, CoverageReport,
    DeltaPolicy, Marginals, ResponseFunctionScm, Shift, COVERAGE_TOL,
};
