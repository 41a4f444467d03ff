//! Baseline PNS bounds that do not merge datasets.
//!
//! These are the intervals the merged bounds must contain or tighten: the
//! exogenous Tian–Pearl bounds from `P(Z, X)` alone, and the covariate-adjusted
//! bounds available when the full conditional table `P(Z | X, Y, C)` is known.

use serde::Serialize;

use crate::error::{BoundsError, Result};
use crate::marginals::{dot, BoundResult, JointDistribution, TargetMarginal};

/// Contrasts smaller than this in magnitude count as zero when looking for
/// sign changes across `Y`.
pub const SIGN_TOL: f64 = 1e-12;

/// Per-stratum adjustment terms of the covariate bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointBoundComponents {
    /// `sum_y P(y) max{0, P(Z=1|X=1,y,c) - P(Z=1|X=0,y,c)}` per stratum.
    pub delta_c: Vec<f64>,
    /// `sum_y P(y) max{0, P(Z=1|X=1,y,c) - P(Z=0|X=0,y,c)}` per stratum.
    pub gamma_c: Vec<f64>,
}

/// `max{0, p11 - p10} <= PNS <= min{p11, p00}`.
pub fn tian_pearl_bounds(target: &TargetMarginal) -> BoundResult {
    BoundResult::interval(
        (target.p11 - target.p10).max(0.0),
        target.p11.min(target.p00()),
    )
}

/// Bounds from a full table `P(Z=1 | X, Y)` for a single covariate level.
///
/// `z1_x1[y] = P(Z=1 | X=1, Y=y)` and `z1_x0[y] = P(Z=1 | X=0, Y=y)`.
pub fn dawid_bounds(p_y: &[f64], z1_x1: &[f64], z1_x0: &[f64]) -> Result<BoundResult> {
    if z1_x1.len() != p_y.len() || z1_x0.len() != p_y.len() {
        return Err(BoundsError::domain(
            "conditional rows must have one entry per value of Y",
        ));
    }
    let (delta, gamma) = delta_gamma(p_y, z1_x1, z1_x0);
    Ok(BoundResult::interval(delta, dot(p_y, z1_x1) - gamma))
}

fn delta_gamma(p_y: &[f64], z1_x1: &[f64], z1_x0: &[f64]) -> (f64, f64) {
    let mut delta = 0.0;
    let mut gamma = 0.0;
    for ((&w, &a), &b) in p_y.iter().zip(z1_x1).zip(z1_x0) {
        delta += w * (a - b).max(0.0);
        gamma += w * (a - (1.0 - b)).max(0.0);
    }
    (delta, gamma)
}

/// Bounds with both `Y` and `C` observed:
/// `sum_c P(c) Delta_c <= PNS <= P(Z=1|X=1) - sum_c P(c) Gamma_c`.
pub fn joint_covariate_bounds(joint: &JointDistribution) -> Result<(BoundResult, JointBoundComponents)> {
    joint.validate()?;
    let mut delta_c = Vec::with_capacity(joint.n_strata());
    let mut gamma_c = Vec::with_capacity(joint.n_strata());
    for by_x in &joint.p_z1 {
        let (d, g) = delta_gamma(&joint.p_y, &by_x[1], &by_x[0]);
        delta_c.push(d);
        gamma_c.push(g);
    }
    let lower = dot(&joint.p_c, &delta_c);
    let upper = joint.z1_given_x(1) - dot(&joint.p_c, &gamma_c);
    Ok((
        BoundResult::interval(lower, upper),
        JointBoundComponents { delta_c, gamma_c },
    ))
}

/// Bounds with only `C` observed: the covariate bounds after marginalising
/// `Y` out of every stratum.
pub fn marginal_covariate_bounds(joint: &JointDistribution) -> Result<BoundResult> {
    joint.validate()?;
    let mut lower = 0.0;
    let mut gamma = 0.0;
    for c in 0..joint.n_strata() {
        let a = joint.z1_given_xc(c, 1);
        let b = joint.z1_given_xc(c, 0);
        lower += joint.p_c[c] * (a - b).max(0.0);
        gamma += joint.p_c[c] * (a - (1.0 - b)).max(0.0);
    }
    Ok(BoundResult::interval(lower, joint.z1_given_x(1) - gamma))
}

/// Sign pattern of the contrasts inside one stratum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumTightness {
    /// `P(Z=1|X=1,y,c) - P(Z=1|X=0,y,c)` changes sign across `y`.
    pub lower_signs_vary: bool,
    /// `P(Z=1|X=1,y,c) - P(Z=0|X=0,y,c)` changes sign across `y`.
    pub upper_signs_vary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessReport {
    /// The `(Y, C)` interval lies inside the `C`-only interval.
    pub contained: bool,
    pub strictly_tighter_lower: bool,
    pub strictly_tighter_upper: bool,
    pub per_stratum: Vec<StratumTightness>,
    pub joint_bounds: BoundResult,
    pub marginal_bounds: BoundResult,
}

/// Compares the `(Y, C)` covariate bounds with the `C`-only bounds.
///
/// Aggregate strictness flags compare the two intervals numerically; the
/// per-stratum flags report whether the contrasts change sign across `Y`,
/// which is what makes a stratum's term strictly tighter.
pub fn tightness_check(joint: &JointDistribution) -> Result<TightnessReport> {
    let (joint_bounds, _) = joint_covariate_bounds(joint)?;
    let marginal_bounds = marginal_covariate_bounds(joint)?;

    let per_stratum = joint
        .p_z1
        .iter()
        .map(|by_x| {
            let lower: Vec<f64> = by_x[1].iter().zip(&by_x[0]).map(|(a, b)| a - b).collect();
            let upper: Vec<f64> = by_x[1]
                .iter()
                .zip(&by_x[0])
                .map(|(a, b)| a - (1.0 - b))
                .collect();
            StratumTightness {
                lower_signs_vary: signs_vary(&lower),
                upper_signs_vary: signs_vary(&upper),
            }
        })
        .collect();

    Ok(TightnessReport {
        contained: joint_bounds.is_within(&marginal_bounds, SIGN_TOL),
        strictly_tighter_lower: joint_bounds.lower > marginal_bounds.lower + SIGN_TOL,
        strictly_tighter_upper: joint_bounds.upper < marginal_bounds.upper - SIGN_TOL,
        per_stratum,
        joint_bounds,
        marginal_bounds,
    })
}

fn signs_vary(contrasts: &[f64]) -> bool {
    contrasts.iter().any(|&d| d > SIGN_TOL) && contrasts.iter().any(|&d| d < -SIGN_TOL)
}
