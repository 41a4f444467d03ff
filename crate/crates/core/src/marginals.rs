//! Dataset summaries and the checks every bound computation relies on.
//!
//! All probabilities are plain `f64`. Sums and identities are compared with
//! an absolute tolerance, [`DEFAULT_TOL`] unless a caller overrides it.

use serde::{Deserialize, Serialize};

use crate::error::{BoundsError, Result};

/// Absolute tolerance for normalisation and compatibility checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Summary of the target dataset `P^T(Z, X)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetMarginal {
    /// `P^T(X = 1)`.
    pub p_x: f64,
    /// `P^T(Z = 1 | X = 1)`.
    #[serde(rename = "p_z1_given_x1")]
    pub p11: f64,
    /// `P^T(Z = 1 | X = 0)`.
    #[serde(rename = "p_z1_given_x0")]
    pub p10: f64,
}

impl TargetMarginal {
    pub fn new(p_x: f64, p11: f64, p10: f64) -> Result<Self> {
        let target = TargetMarginal { p_x, p11, p10 };
        target.validate()?;
        Ok(target)
    }

    /// `P^T(Z = 0 | X = 0)`.
    pub fn p00(&self) -> f64 {
        1.0 - self.p10
    }

    pub fn validate(&self) -> Result<()> {
        open_unit("p_x", self.p_x)?;
        closed_unit("p_z1_given_x1", self.p11)?;
        closed_unit("p_z1_given_x0", self.p10)
    }
}

/// Summary of the external dataset `P^E(Z, Y)` with `Y` taking values `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalMarginal {
    /// `P(Y = i)`, shared by both datasets.
    pub p_y: Vec<f64>,
    /// `P^E(Z = 1 | Y = i)`.
    #[serde(rename = "p_z1_given_y")]
    pub p_e1: Vec<f64>,
    /// Additive shift of the treatment mechanism: `P^E(X=1) = P^T(X=1) + delta_x`.
    #[serde(default)]
    pub delta_x: f64,
}

impl ExternalMarginal {
    pub fn new(p_y: Vec<f64>, p_e1: Vec<f64>, delta_x: f64) -> Result<Self> {
        let external = ExternalMarginal { p_y, p_e1, delta_x };
        external.validate_with_tol(DEFAULT_TOL)?;
        Ok(external)
    }

    /// Index of the largest value of `Y`, i.e. the number of free parameters.
    pub fn n(&self) -> usize {
        self.p_y.len().saturating_sub(1)
    }

    /// `P^E(X = 1)` for a given target prevalence.
    pub fn shifted_px(&self, p_x: f64) -> f64 {
        p_x + self.delta_x
    }

    pub fn validate_with_tol(&self, tol: f64) -> Result<()> {
        distribution("p_y", &self.p_y, tol)?;
        conditionals("p_z1_given_y", &self.p_e1, self.p_y.len())?;
        if !self.delta_x.is_finite() {
            return Err(BoundsError::domain("delta_x must be finite"));
        }
        Ok(())
    }
}

/// One level `c` of the observed covariate `C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stratum {
    /// `P(C = c)`.
    pub p_c: f64,
    /// `P^T(Z = 1 | X = 1, C = c)`.
    #[serde(rename = "p_z1_given_x1")]
    pub p11: f64,
    /// `P^T(Z = 1 | X = 0, C = c)`.
    #[serde(rename = "p_z1_given_x0")]
    pub p10: f64,
    /// `P^E(Z = 1 | Y = i, C = c)`.
    #[serde(rename = "p_z1_given_y")]
    pub p_e1: Vec<f64>,
    /// `P^E(X = 1 | C = c) - P^T(X = 1)`.
    pub delta_x_c: f64,
}

/// Target and external summaries stratified by an observed covariate `C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratifiedInput {
    pub p_x: f64,
    pub p_y: Vec<f64>,
    pub strata: Vec<Stratum>,
}

impl StratifiedInput {
    pub fn validate(&self) -> Result<()> {
        self.validate_with_tol(DEFAULT_TOL)
    }

    pub fn validate_with_tol(&self, tol: f64) -> Result<()> {
        open_unit("p_x", self.p_x)?;
        distribution("p_y", &self.p_y, tol)?;
        if self.strata.is_empty() {
            return Err(BoundsError::domain("strata must not be empty"));
        }
        let p_c: Vec<f64> = self.strata.iter().map(|s| s.p_c).collect();
        distribution("p_c", &p_c, tol)?;
        for (c, stratum) in self.strata.iter().enumerate() {
            closed_unit(&format!("strata[{c}].p_z1_given_x1"), stratum.p11)?;
            closed_unit(&format!("strata[{c}].p_z1_given_x0"), stratum.p10)?;
            conditionals(
                &format!("strata[{c}].p_z1_given_y"),
                &stratum.p_e1,
                self.p_y.len(),
            )?;
            let shifted = self.p_x + stratum.delta_x_c;
            if !(shifted > 0.0 && shifted < 1.0) {
                return Err(BoundsError::domain(format!(
                    "p_x + delta_x_c must lie strictly in (0,1) (stratum {c}: {shifted})"
                )));
            }
        }
        Ok(())
    }

    /// Target summary conditional on `C = c`.
    pub fn stratum_target(&self, c: usize) -> TargetMarginal {
        let s = &self.strata[c];
        TargetMarginal {
            p_x: self.p_x,
            p11: s.p11,
            p10: s.p10,
        }
    }

    /// External summary conditional on `C = c`, carrying that stratum's shift.
    pub fn stratum_external(&self, c: usize) -> ExternalMarginal {
        let s = &self.strata[c];
        ExternalMarginal {
            p_y: self.p_y.clone(),
            p_e1: s.p_e1.clone(),
            delta_x: s.delta_x_c,
        }
    }
}

/// Fully observed `P(Z = 1 | X, Y, C)` together with `P(C)` and `P(Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDistribution {
    pub p_c: Vec<f64>,
    pub p_y: Vec<f64>,
    /// `P(Z = 1 | X = x, Y = y, C = c)` indexed `[c][x][y]`.
    pub p_z1: Vec<Vec<Vec<f64>>>,
}

impl JointDistribution {
    pub fn validate(&self) -> Result<()> {
        self.validate_with_tol(DEFAULT_TOL)
    }

    pub fn validate_with_tol(&self, tol: f64) -> Result<()> {
        distribution("p_c", &self.p_c, tol)?;
        distribution("p_y", &self.p_y, tol)?;
        if self.p_z1.len() != self.p_c.len() {
            return Err(BoundsError::domain(format!(
                "p_z1 must have one entry per stratum ({} != {})",
                self.p_z1.len(),
                self.p_c.len()
            )));
        }
        for (c, by_x) in self.p_z1.iter().enumerate() {
            if by_x.len() != 2 {
                return Err(BoundsError::domain(format!(
                    "p_z1[{c}] must have exactly two rows (x = 0, 1)"
                )));
            }
            for (x, row) in by_x.iter().enumerate() {
                conditionals(&format!("p_z1[{c}][{x}]"), row, self.p_y.len())?;
            }
        }
        Ok(())
    }

    pub fn n_strata(&self) -> usize {
        self.p_c.len()
    }

    /// `P(Z = 1 | X = x, Y = y, C = c)`.
    pub fn z1(&self, c: usize, x: usize, y: usize) -> f64 {
        self.p_z1[c][x][y]
    }

    /// `P(Z = 1 | X = x, C = c)`, with `Y` marginalised out.
    pub fn z1_given_xc(&self, c: usize, x: usize) -> f64 {
        dot(&self.p_y, &self.p_z1[c][x])
    }

    /// `P(Z = 1 | X = x)`.
    pub fn z1_given_x(&self, x: usize) -> f64 {
        (0..self.n_strata())
            .map(|c| self.p_c[c] * self.z1_given_xc(c, x))
            .sum()
    }
}

/// An interval on PNS with the tightening terms that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub lower: f64,
    pub upper: f64,
    /// Tightening terms subtracted from `P(Z=1|X=1)` in the upper bound.
    pub phi: Vec<f64>,
    /// Tightening terms subtracted from `P(Z=0|X=0)` in the upper bound.
    pub theta: Vec<f64>,
}

impl BoundResult {
    pub fn interval(lower: f64, upper: f64) -> Self {
        BoundResult {
            lower,
            upper,
            phi: Vec::new(),
            theta: Vec::new(),
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64, tol: f64) -> bool {
        value >= self.lower - tol && value <= self.upper + tol
    }

    /// True when `self` lies inside `outer` up to `tol` on each end.
    pub fn is_within(&self, outer: &BoundResult, tol: f64) -> bool {
        self.lower >= outer.lower - tol && self.upper <= outer.upper + tol
    }
}

/// Checks both summaries and their pairing, returning them unchanged on success.
pub fn validate<'a>(
    target: &'a TargetMarginal,
    external: &'a ExternalMarginal,
) -> Result<(&'a TargetMarginal, &'a ExternalMarginal)> {
    validate_with_tol(target, external, DEFAULT_TOL)
}

pub fn validate_with_tol<'a>(
    target: &'a TargetMarginal,
    external: &'a ExternalMarginal,
    tol: f64,
) -> Result<(&'a TargetMarginal, &'a ExternalMarginal)> {
    target.validate()?;
    external.validate_with_tol(tol)?;
    let shifted = external.shifted_px(target.p_x);
    if !(shifted > 0.0 && shifted < 1.0) {
        return Err(BoundsError::domain(format!(
            "p_x + delta_x must lie strictly in (0,1) (got {shifted})"
        )));
    }
    Ok((target, external))
}

/// `P(Z = 1)` as implied by the target summary under the external mechanism.
pub fn target_implied_pz(target: &TargetMarginal, external: &ExternalMarginal) -> f64 {
    let q = external.shifted_px(target.p_x);
    target.p11 * q + target.p10 * (1.0 - q)
}

/// `P(Z = 1)` as implied by the external summary.
pub fn external_implied_pz(external: &ExternalMarginal) -> f64 {
    dot(&external.p_y, &external.p_e1)
}

/// Whether both summaries agree on `P(Z = 1)` within `tol`.
pub fn compatibility_check(target: &TargetMarginal, external: &ExternalMarginal, tol: f64) -> bool {
    (target_implied_pz(target, external) - external_implied_pz(external)).abs() <= tol
}

pub(crate) fn require_compatible(
    target: &TargetMarginal,
    external: &ExternalMarginal,
    tol: f64,
    stratum: Option<usize>,
) -> Result<()> {
    if compatibility_check(target, external, tol) {
        Ok(())
    } else {
        Err(BoundsError::Incompatible {
            target: target_implied_pz(target, external),
            external: external_implied_pz(external),
            stratum,
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn open_unit(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(BoundsError::domain(format!(
            "{name} must lie strictly in (0,1) (got {value})"
        )))
    }
}

fn closed_unit(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(BoundsError::domain(format!(
            "{name} must lie in [0,1] (got {value})"
        )))
    }
}

fn distribution(name: &str, values: &[f64], tol: f64) -> Result<()> {
    if values.is_empty() {
        return Err(BoundsError::domain(format!("{name} must not be empty")));
    }
    for (i, &v) in values.iter().enumerate() {
        if !(v > 0.0 && v <= 1.0) {
            return Err(BoundsError::domain(format!(
                "{name}[{i}] must lie in (0,1] (got {v})"
            )));
        }
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(BoundsError::domain(format!(
            "{name} must sum to 1 (got {total})"
        )));
    }
    Ok(())
}

fn conditionals(name: &str, values: &[f64], len: usize) -> Result<()> {
    if values.len() != len {
        return Err(BoundsError::domain(format!(
            "{name} must have {len} entries (got {})",
            values.len()
        )));
    }
    for (i, &v) in values.iter().enumerate() {
        closed_unit(&format!("{name}[{i}]"), v)?;
    }
    Ok(())
}
