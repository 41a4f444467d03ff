//! Every conditional table `P(Z=1 | X, Y)` that reproduces both marginals,
//! written in terms of the free parameters `P(Z=1 | X=1, Y=i)` for
//! `i = 1..=N`, and the box those parameters must lie in for the table to be
//! a valid set of probabilities.
//!
//! Throughout, `q = p_x + delta_x` is the treatment prevalence under the
//! external mechanism. With no shift it is the target prevalence.

use serde::Serialize;

use crate::error::{BoundsError, Result};
use crate::marginals::{
    dot, require_compatible, validate, ExternalMarginal, StratifiedInput, TargetMarginal,
    DEFAULT_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, value: f64, tol: f64) -> bool {
        value >= self.lo - tol && value <= self.hi + tol
    }

    pub fn is_empty(&self, tol: f64) -> bool {
        self.lo > self.hi + tol
    }
}

/// Values of the free parameters `P(Z=1 | X=1, Y=i)`, `i = 1..=N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeParameterAssignment {
    pub values: Vec<f64>,
}

impl FreeParameterAssignment {
    pub fn new(values: Vec<f64>) -> Self {
        FreeParameterAssignment { values }
    }
}

/// The region of free parameters for which the solved table is coherent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeParameterBox {
    /// Interval for each `P(Z=1 | X=1, Y=i)`, `i = 1..=N`.
    pub per_param: Vec<Interval>,
    /// Interval for `sum_{n>=1} P(Y=n) P(Z=1 | X=1, Y=n)`.
    pub sum_interval: Interval,
    /// `P(Y=n)` for `n = 1..=N`, the weights of the constrained sum.
    pub weights: Vec<f64>,
}

impl FreeParameterBox {
    pub fn dim(&self) -> usize {
        self.per_param.len()
    }

    pub fn weighted_sum(&self, assignment: &FreeParameterAssignment) -> f64 {
        dot(&self.weights, &assignment.values)
    }

    pub fn contains(&self, assignment: &FreeParameterAssignment, tol: f64) -> bool {
        self.violation(assignment, tol).is_none()
    }

    fn violation(&self, assignment: &FreeParameterAssignment, tol: f64) -> Option<String> {
        if assignment.values.len() != self.dim() {
            return Some(format!(
                "expected {} free parameters, got {}",
                self.dim(),
                assignment.values.len()
            ));
        }
        for (i, (v, iv)) in assignment.values.iter().zip(&self.per_param).enumerate() {
            if !iv.contains(*v, tol) {
                return Some(format!(
                    "parameter {} = {v} outside [{}, {}]",
                    i + 1,
                    iv.lo,
                    iv.hi
                ));
            }
        }
        let s = self.weighted_sum(assignment);
        if !self.sum_interval.contains(s, tol) {
            return Some(format!(
                "weighted sum {s} outside [{}, {}]",
                self.sum_interval.lo, self.sum_interval.hi
            ));
        }
        None
    }
}

/// Solved conditional table `P(Z=1 | X, Y)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalTable {
    /// `P(Z=1 | X=0, Y=y)`.
    pub z1_x0: Vec<f64>,
    /// `P(Z=1 | X=1, Y=y)`.
    pub z1_x1: Vec<f64>,
}

impl ConditionalTable {
    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.z1_x0.iter().chain(&self.z1_x1).copied()
    }

    pub fn is_coherent(&self, tol: f64) -> bool {
        self.entries().all(|v| (-tol..=1.0 + tol).contains(&v))
    }

    /// `(P(Z=1|X=1), P(Z=1|X=0))` after averaging over `Y`.
    pub fn target_marginal(&self, p_y: &[f64]) -> (f64, f64) {
        (dot(p_y, &self.z1_x1), dot(p_y, &self.z1_x0))
    }

    /// `P(Z=1 | Y=i)` after averaging over `X` with prevalence `q`.
    pub fn external_marginal(&self, q: f64) -> Vec<f64> {
        self.z1_x1
            .iter()
            .zip(&self.z1_x0)
            .map(|(a, b)| q * a + (1.0 - q) * b)
            .collect()
    }
}

/// Solves for the full table given the free parameters, without checking
/// that the assignment is coherent.
pub fn solve_system_unchecked(
    target: &TargetMarginal,
    external: &ExternalMarginal,
    assignment: &FreeParameterAssignment,
) -> ConditionalTable {
    let q = external.shifted_px(target.p_x);
    let p_y = &external.p_y;
    let p_e1 = &external.p_e1;
    let py0 = p_y[0];
    let free = &assignment.values;
    let s = dot(&p_y[1..], free);

    let mut z1_x1 = Vec::with_capacity(p_y.len());
    let mut z1_x0 = Vec::with_capacity(p_y.len());
    z1_x1.push((target.p11 - s) / py0);
    z1_x0.push(q / (1.0 - q) * s / py0 + (p_e1[0] * py0 - target.p11 * q) / ((1.0 - q) * py0));
    for (i, &f) in free.iter().enumerate() {
        z1_x1.push(f);
        z1_x0.push(p_e1[i + 1] / (1.0 - q) - q / (1.0 - q) * f);
    }
    ConditionalTable { z1_x0, z1_x1 }
}

/// Solves for the full table, rejecting assignments outside the coherence box.
pub fn solve_system(
    target: &TargetMarginal,
    external: &ExternalMarginal,
    assignment: &FreeParameterAssignment,
) -> Result<ConditionalTable> {
    let bx = parameter_box(target, external)?;
    if let Some(why) = bx.violation(assignment, DEFAULT_TOL) {
        return Err(BoundsError::OutOfBox(why));
    }
    Ok(solve_system_unchecked(target, external, assignment))
}

/// Coherence box for validated, compatible marginals.
pub fn parameter_box(target: &TargetMarginal, external: &ExternalMarginal) -> Result<FreeParameterBox> {
    parameter_box_with_tol(target, external, DEFAULT_TOL)
}

pub fn parameter_box_with_tol(
    target: &TargetMarginal,
    external: &ExternalMarginal,
    tol: f64,
) -> Result<FreeParameterBox> {
    validate(target, external)?;
    if external.n() == 0 {
        return Err(BoundsError::Arity {
            expected: 2,
            found: 1,
        });
    }
    require_compatible(target, external, tol, None)?;
    let bx = raw_parameter_box(target, external);
    check_nonempty(&bx, tol)?;
    Ok(bx)
}

/// Box for stratum `c` of a stratified input, using that stratum's shift.
pub fn stratified_parameter_box(input: &StratifiedInput, c: usize) -> Result<FreeParameterBox> {
    input.validate()?;
    if c >= input.strata.len() {
        return Err(BoundsError::domain(format!(
            "stratum {c} out of range ({} strata)",
            input.strata.len()
        )));
    }
    let target = input.stratum_target(c);
    let external = input.stratum_external(c);
    if external.n() == 0 {
        return Err(BoundsError::Arity {
            expected: 2,
            found: 1,
        });
    }
    require_compatible(&target, &external, DEFAULT_TOL, Some(c))?;
    let bx = raw_parameter_box(&target, &external);
    check_nonempty(&bx, DEFAULT_TOL)?;
    Ok(bx)
}

pub(crate) fn raw_parameter_box(target: &TargetMarginal, external: &ExternalMarginal) -> FreeParameterBox {
    let q = external.shifted_px(target.p_x);
    let p11 = target.p11;
    let py0 = external.p_y[0];
    let pe0 = external.p_e1[0];

    let per_param = external.p_e1[1..]
        .iter()
        .map(|&pe| Interval::new(((pe - (1.0 - q)) / q).max(0.0), (pe / q).min(1.0)))
        .collect();
    let lo = ((p11 * q - pe0 * py0) / q).max(p11 - py0);
    let hi = (((1.0 - q) * py0 + p11 * q - pe0 * py0) / q).min(p11);

    FreeParameterBox {
        per_param,
        sum_interval: Interval::new(lo, hi),
        weights: external.p_y[1..].to_vec(),
    }
}

fn check_nonempty(bx: &FreeParameterBox, tol: f64) -> Result<()> {
    for (i, iv) in bx.per_param.iter().enumerate() {
        if iv.is_empty(tol) {
            return Err(BoundsError::EmptyBox(format!(
                "parameter {} has interval [{}, {}]",
                i + 1,
                iv.lo,
                iv.hi
            )));
        }
    }
    let reach = Interval::new(
        bx.per_param.iter().zip(&bx.weights).map(|(iv, w)| w * iv.lo).sum(),
        bx.per_param.iter().zip(&bx.weights).map(|(iv, w)| w * iv.hi).sum(),
    );
    let sum = bx.sum_interval;
    if sum.is_empty(tol) || sum.lo > reach.hi + tol || sum.hi < reach.lo - tol {
        return Err(BoundsError::EmptyBox(format!(
            "weighted sum interval [{}, {}] unreachable from [{}, {}]",
            sum.lo, sum.hi, reach.lo, reach.hi
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_c() -> (TargetMarginal, ExternalMarginal) {
        (
            TargetMarginal::new(0.7, 0.8, 0.5).unwrap(),
            ExternalMarginal::new(vec![0.5, 0.5], vec![0.45, 0.97], 0.0).unwrap(),
        )
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn solves_example_c_at_upper_corner() {
        let (t, e) = example_c();
        let table = solve_system(&t, &e, &FreeParameterAssignment::new(vec![1.0])).unwrap();
        // (0.8 - 0.5)/0.5, (0.97 - 0.7)/0.3, (0.5 - 0.5*0.9)/0.5
        assert!(close(table.z1_x1[0], 0.6));
        assert!(close(table.z1_x1[1], 1.0));
        assert!(close(table.z1_x0[1], 0.9));
        assert!(close(table.z1_x0[0], 0.1));
        let (p11, p10) = table.target_marginal(&e.p_y);
        assert!(close(p11, 0.8) && close(p10, 0.5));
        let pe = table.external_marginal(0.7);
        assert!(close(pe[0], 0.45) && close(pe[1], 0.97));
    }

    #[test]
    fn lower_corner_saturates_control_arm() {
        let (t, e) = example_c();
        let lo = (0.97 - 0.3) / 0.7;
        let table = solve_system(&t, &e, &FreeParameterAssignment::new(vec![lo])).unwrap();
        assert!(close(table.z1_x0[1], 1.0));
    }

    #[test]
    fn round_trip_of_an_explicit_table() {
        // P(Z=1|X,Y) with X at 0.5 and three values of Y.
        let p_y = [0.2, 0.5, 0.3];
        let z1_x1 = [0.3, 0.8, 0.55];
        let z1_x0 = [0.6, 0.1, 0.4];
        let q = 0.5;
        let t = TargetMarginal::new(q, dot(&p_y, &z1_x1), dot(&p_y, &z1_x0)).unwrap();
        let pe: Vec<f64> = z1_x1.iter().zip(&z1_x0).map(|(a, b)| q * a + (1.0 - q) * b).collect();
        let e = ExternalMarginal::new(p_y.to_vec(), pe, 0.0).unwrap();
        let table = solve_system(&t, &e, &FreeParameterAssignment::new(z1_x1[1..].to_vec())).unwrap();
        for y in 0..3 {
            assert!((table.z1_x1[y] - z1_x1[y]).abs() < 1e-12);
            assert!((table.z1_x0[y] - z1_x0[y]).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_box_assignment_is_rejected() {
        let (t, e) = example_c();
        let err = solve_system(&t, &e, &FreeParameterAssignment::new(vec![0.9])).unwrap_err();
        assert!(matches!(err, BoundsError::OutOfBox(_)));
        let err = solve_system(&t, &e, &FreeParameterAssignment::new(vec![0.97, 0.5])).unwrap_err();
        assert!(matches!(err, BoundsError::OutOfBox(_)));
    }

    #[test]
    fn box_of_example_c() {
        let (t, e) = example_c();
        let bx = parameter_box(&t, &e).unwrap();
        assert!(close(bx.per_param[0].lo, 0.67 / 0.7));
        assert!(close(bx.per_param[0].hi, 1.0));
        assert!((bx.per_param[0].lo - 0.957142857).abs() < 1e-9);
        assert!((bx.sum_interval.lo - 0.478571428).abs() < 1e-9);
        assert!((bx.sum_interval.hi - 0.692857142).abs() < 1e-9);
    }

    #[test]
    fn low_external_rate_puts_lower_edge_at_zero() {
        // p_e1[1] = 0.2 <= 1 - p_x = 0.3
        let q: f64 = 0.7;
        let p_y = [0.5, 0.5];
        let z1_x1 = [0.4, 0.1];
        let z1_x0 = [0.3, 0.4];
        let t = TargetMarginal::new(q, dot(&p_y, &z1_x1), dot(&p_y, &z1_x0)).unwrap();
        let pe: Vec<f64> = z1_x1.iter().zip(&z1_x0).map(|(a, b)| q * a + (1.0 - q) * b).collect();
        assert!(pe[1] <= 1.0 - q);
        let e = ExternalMarginal::new(p_y.to_vec(), pe, 0.0).unwrap();
        let bx = parameter_box(&t, &e).unwrap();
        assert_eq!(bx.per_param[0].lo, 0.0);
    }

    #[test]
    fn shift_only_enters_through_effective_prevalence() {
        let (t, e) = example_c();
        let base = parameter_box(&t, &e).unwrap();
        let shifted_t = TargetMarginal::new(0.6, 0.8, 0.5).unwrap();
        let shifted_e = ExternalMarginal::new(vec![0.5, 0.5], vec![0.45, 0.97], 0.1).unwrap();
        let shifted = parameter_box(&shifted_t, &shifted_e).unwrap();
        for (a, b) in base.per_param.iter().zip(&shifted.per_param) {
            assert!((a.lo - b.lo).abs() < 1e-12 && (a.hi - b.hi).abs() < 1e-12);
        }
        assert!((base.sum_interval.lo - shifted.sum_interval.lo).abs() < 1e-12);
        assert!((base.sum_interval.hi - shifted.sum_interval.hi).abs() < 1e-12);
    }

    #[test]
    fn constant_y_is_rejected() {
        let t = TargetMarginal::new(0.5, 0.4, 0.4).unwrap();
        let e = ExternalMarginal::new(vec![1.0], vec![0.4], 0.0).unwrap();
        assert!(matches!(
            parameter_box(&t, &e).unwrap_err(),
            BoundsError::Arity { .. }
        ));
    }

    #[test]
    fn incompatible_marginals_are_rejected() {
        let t = TargetMarginal::new(0.7, 0.8, 0.5).unwrap();
        let e = ExternalMarginal::new(vec![0.5, 0.5], vec![0.5, 0.97], 0.0).unwrap();
        assert!(matches!(
            parameter_box(&t, &e).unwrap_err(),
            BoundsError::Incompatible { .. }
        ));
    }

    fn stratified() -> StratifiedInput {
        use crate::marginals::Stratum;
        StratifiedInput {
            p_x: 0.6,
            p_y: vec![0.5, 0.5],
            strata: vec![
                Stratum {
                    p_c: 0.5,
                    p11: 0.8,
                    p10: 0.5,
                    p_e1: vec![0.45, 0.97],
                    delta_x_c: 0.1,
                },
                Stratum {
                    p_c: 0.5,
                    p11: 0.8,
                    p10: 0.5,
                    p_e1: vec![0.4, 0.96],
                    delta_x_c: 0.0,
                },
            ],
        }
    }

    #[test]
    fn stratified_box_matches_unstratified_box() {
        let input = stratified();
        let (t, e) = example_c();
        assert_eq!(
            stratified_parameter_box(&input, 0).unwrap(),
            parameter_box(&t, &e).unwrap()
        );
    }

    #[test]
    fn strata_use_their_own_shift() {
        // Stratum 1: q = 0.6, compatible since 0.8*0.6 + 0.5*0.4 = 0.68 = 0.5*(0.4 + 0.96)
        let input = stratified();
        let bx = stratified_parameter_box(&input, 1).unwrap();
        assert!(close(bx.per_param[0].lo, (0.96 - 0.4) / 0.6));
        assert!(close(bx.per_param[0].hi, 1.0));
        let bx0 = stratified_parameter_box(&input, 0).unwrap();
        assert!(close(bx0.per_param[0].lo, (0.97 - 0.3) / 0.7));
        assert!(stratified_parameter_box(&input, 2).is_err());
    }

    #[test]
    fn stratum_rate_equal_to_prevalence_opens_upper_edge() {
        // p_e1 = q for every y: hi = 1, lo = max(0, (2q - 1)/q).
        use crate::marginals::Stratum;
        let input = StratifiedInput {
            p_x: 0.3,
            p_y: vec![0.5, 0.5],
            strata: vec![Stratum {
                p_c: 1.0,
                p11: 0.4,
                p10: 0.4,
                p_e1: vec![0.4, 0.4],
                delta_x_c: 0.1,
            }],
        };
        let bx = stratified_parameter_box(&input, 0).unwrap();
        assert_eq!(bx.per_param[0].hi, 1.0);
        assert_eq!(bx.per_param[0].lo, 0.0);
    }
}
