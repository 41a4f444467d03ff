//! Closed-form PNS bounds on the target dataset after merging it with an
//! external dataset.
//!
//! The lower bound is the exogenous one, `max{0, p11 - p10}`; merging cannot
//! raise it. The upper bound subtracts non-negative tightening terms from the
//! two Tian–Pearl candidates:
//!
//! ```text
//! upper = min{ p11 - sum_i phi_i, p00 - sum_i theta_i }
//! phi_i   = [p_e1[i] >= hi] * p_y[i] * (p_e1[i] - hi) / lo
//! theta_i = [p_e1[i] <= lo] * p_y[i] * (lo - p_e1[i]) / lo
//! ```
//!
//! with `hi = max{q, 1 - q}`, `lo = min{q, 1 - q}` and `q = p_x + delta_x`
//! the treatment prevalence in the external dataset.

use serde::Serialize;

use crate::error::{BoundsError, Result};
use crate::marginals::{
    require_compatible, validate, BoundResult, ExternalMarginal, StratifiedInput, TargetMarginal,
    DEFAULT_TOL,
};

/// Tightening terms `(phi, theta)` for external prevalence `q`.
pub fn tightening_terms(q: f64, p_y: &[f64], p_e1: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hi = q.max(1.0 - q);
    let lo = q.min(1.0 - q);
    p_y.iter()
        .zip(p_e1)
        .map(|(&w, &pe)| {
            let phi = if pe >= hi { w * (pe - hi) / lo } else { 0.0 };
            let theta = if pe <= lo { w * (lo - pe) / lo } else { 0.0 };
            (phi, theta)
        })
        .unzip()
}

fn closed_form(
    target: &TargetMarginal,
    external: &ExternalMarginal,
    stratum: Option<usize>,
) -> Result<BoundResult> {
    if external.n() == 0 {
        return Err(BoundsError::Arity {
            expected: 2,
            found: 1,
        });
    }
    require_compatible(target, external, DEFAULT_TOL, stratum)?;

    let q = external.shifted_px(target.p_x);
    let (phi, theta) = tightening_terms(q, &external.p_y, &external.p_e1);
    let lower = (target.p11 - target.p10).max(0.0);
    let upper = (target.p11 - phi.iter().sum::<f64>()).min(target.p00() - theta.iter().sum::<f64>());
    if lower > upper + DEFAULT_TOL {
        return Err(BoundsError::Inverted { lower, upper });
    }
    Ok(BoundResult {
        lower,
        upper,
        phi,
        theta,
    })
}

fn require_unshifted(external: &ExternalMarginal) -> Result<()> {
    if external.delta_x != 0.0 {
        return Err(BoundsError::domain(
            "delta_x must be 0 when both datasets share the treatment mechanism; use the shifted bounds",
        ));
    }
    Ok(())
}

/// Merged bounds for binary `Y` and a shared treatment mechanism.
pub fn binary_merged_bounds(target: &TargetMarginal, external: &ExternalMarginal) -> Result<BoundResult> {
    validate(target, external)?;
    if external.p_y.len() != 2 {
        return Err(BoundsError::Arity {
            expected: 2,
            found: external.p_y.len(),
        });
    }
    require_unshifted(external)?;
    closed_form(target, external, None)
}

/// Merged bounds for `Y` with any finite support and a shared treatment
/// mechanism.
pub fn merged_bounds(target: &TargetMarginal, external: &ExternalMarginal) -> Result<BoundResult> {
    validate(target, external)?;
    require_unshifted(external)?;
    closed_form(target, external, None)
}

/// Merged bounds when `P^E(X=1) = P^T(X=1) + delta_x`.
pub fn shifted_merged_bounds(target: &TargetMarginal, external: &ExternalMarginal) -> Result<BoundResult> {
    validate(target, external)?;
    closed_form(target, external, None)
}

/// Aggregate bounds across strata together with each stratum's own interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratifiedBounds {
    /// `P(C)`-weighted bounds; `phi` and `theta` are the weighted terms.
    pub bounds: BoundResult,
    pub per_stratum: Vec<BoundResult>,
}

/// Merged bounds when the external treatment mechanism depends on an
/// observed covariate `C`: `P^E(X=1 | C=c) = P^T(X=1) + delta_x_c`.
///
/// Each stratum is bounded on its own and the intervals are averaged with
/// weights `P(C)`. Strata are summed in index order.
pub fn stratified_merged_bounds(input: &StratifiedInput) -> Result<StratifiedBounds> {
    input.validate()?;
    let per_stratum = (0..input.strata.len())
        .map(|c| closed_form(&input.stratum_target(c), &input.stratum_external(c), Some(c)))
        .collect::<Result<Vec<_>>>()?;

    let n_y = input.p_y.len();
    let mut bounds = BoundResult {
        lower: 0.0,
        upper: 0.0,
        phi: vec![0.0; n_y],
        theta: vec![0.0; n_y],
    };
    for (stratum, b) in input.strata.iter().zip(&per_stratum) {
        let w = stratum.p_c;
        bounds.lower += w * b.lower;
        bounds.upper += w * b.upper;
        for i in 0..n_y {
            bounds.phi[i] += w * b.phi[i];
            bounds.theta[i] += w * b.theta[i];
        }
    }
    Ok(StratifiedBounds {
        bounds,
        per_stratum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classic::tian_pearl_bounds;
    use crate::marginals::Stratum;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    fn pair(p_x: f64, p11: f64, p10: f64, p_y: &[f64], p_e1: &[f64], delta: f64) -> (TargetMarginal, ExternalMarginal) {
        (
            TargetMarginal::new(p_x, p11, p10).unwrap(),
            ExternalMarginal::new(p_y.to_vec(), p_e1.to_vec(), delta).unwrap(),
        )
    }

    #[test]
    fn point_identified_instance() {
        let (t, e) = pair(0.5, 0.9, 0.3, &[0.5, 0.5], &[0.4, 0.8], 0.0);
        let b = binary_merged_bounds(&t, &e).unwrap();
        assert!(close(b.phi[0], 0.0) && close(b.phi[1], 0.3));
        assert!(close(b.theta[0], 0.1) && close(b.theta[1], 0.0));
        assert!(close(b.lower, 0.6) && close(b.upper, 0.6));
    }

    #[test]
    fn tightened_upper_bound() {
        let (t, e) = pair(0.7, 0.8, 0.5, &[0.5, 0.5], &[0.45, 0.97], 0.0);
        let b = binary_merged_bounds(&t, &e).unwrap();
        assert_eq!(b.phi[0], 0.0);
        assert!(close(b.phi[1], 0.45));
        assert!(b.theta.iter().all(|&x| x == 0.0));
        assert!(close(b.lower, 0.3) && close(b.upper, 0.35));
        let tp = tian_pearl_bounds(&t);
        assert!(b.upper < tp.upper);
    }

    #[test]
    fn rates_inside_band_do_not_tighten() {
        let (t, e) = pair(0.7, 0.6, 0.6, &[0.5, 0.5], &[0.5, 0.7], 0.0);
        let b = binary_merged_bounds(&t, &e).unwrap();
        assert!(b.phi.iter().chain(&b.theta).all(|&x| x == 0.0));
        assert!(close(b.lower, 0.0) && close(b.upper, 0.4));
        let tp = tian_pearl_bounds(&t);
        assert_eq!((b.lower, b.upper), (tp.lower, tp.upper));
    }

    #[test]
    fn binary_bounds_check_arity_and_shift() {
        let (t, e) = pair(0.5, 0.5, 0.5, &[0.3, 0.3, 0.4], &[0.5, 0.5, 0.5], 0.0);
        assert!(matches!(
            binary_merged_bounds(&t, &e).unwrap_err(),
            BoundsError::Arity { expected: 2, found: 3 }
        ));
        let (t, e) = pair(0.6, 0.8, 0.5, &[0.5, 0.5], &[0.45, 0.97], 0.1);
        assert!(matches!(binary_merged_bounds(&t, &e), Err(BoundsError::Domain(_))));
        assert!(matches!(merged_bounds(&t, &e), Err(BoundsError::Domain(_))));
    }

    #[test]
    fn multivalued_y_matches_binary_on_binary_input() {
        let (t, e) = pair(0.7, 0.8, 0.5, &[0.5, 0.5], &[0.45, 0.97], 0.0);
        assert_eq!(merged_bounds(&t, &e).unwrap(), binary_merged_bounds(&t, &e).unwrap());
    }

    #[test]
    fn three_valued_y_at_one_half() {
        let third = 1.0 / 3.0;
        let (t, e) = pair(0.5, 0.5, 0.5, &[third, third, 1.0 - 2.0 * third], &[0.5, 0.5, 0.5], 0.0);
        let b = merged_bounds(&t, &e).unwrap();
        assert!(close(b.lower, 0.0) && close(b.upper, 0.5));
        assert!(b.phi.iter().chain(&b.theta).all(|&x| x == 0.0));
    }

    #[test]
    fn incompatible_input_is_rejected() {
        let (t, e) = pair(0.7, 0.8, 0.5, &[0.5, 0.5], &[0.5, 0.97], 0.0);
        assert!(matches!(
            merged_bounds(&t, &e).unwrap_err(),
            BoundsError::Incompatible { stratum: None, .. }
        ));
    }

    #[test]
    fn shift_reproduces_unshifted_instance() {
        let (t, e) = pair(0.6, 0.8, 0.5, &[0.5, 0.5], &[0.45, 0.97], 0.1);
        let b = shifted_merged_bounds(&t, &e).unwrap();
        assert!(close(b.lower, 0.3) && close(b.upper, 0.35));

        // p_x + delta_x = 0.5 on the point-identified instance.
        let (t, e) = pair(0.8, 0.9, 0.3, &[0.5, 0.5], &[0.4, 0.8], 0.5 - 0.8);
        let b = shifted_merged_bounds(&t, &e).unwrap();
        assert!(close(b.lower, 0.6) && close(b.upper, 0.6));
    }

    #[test]
    fn zero_shift_is_bit_identical() {
        let (t, e) = pair(0.7, 0.8, 0.5, &[0.5, 0.5], &[0.45, 0.97], 0.0);
        assert_eq!(shifted_merged_bounds(&t, &e).unwrap(), merged_bounds(&t, &e).unwrap());
    }

    #[test]
    fn shift_out_of_range_is_a_domain_error() {
        let (t, e) = pair(0.95, 0.8, 0.5, &[0.5, 0.5], &[0.45, 0.97], 0.1);
        assert!(matches!(shifted_merged_bounds(&t, &e), Err(BoundsError::Domain(_))));
    }

    #[test]
    fn raising_a_high_external_rate_lowers_the_first_candidate() {
        // Keep compatibility by moving the other external rate in the
        // opposite direction.
        let q: f64 = 0.7;
        let mut last = f64::INFINITY;
        for k in 0..5 {
            let pe1 = 0.8 + 0.04 * k as f64;
            let pe0 = 2.0 * 0.71 - pe1;
            let (_, e) = pair(q, 0.8, 0.5, &[0.5, 0.5], &[pe0, pe1], 0.0);
            let (phi, _) = tightening_terms(q, &e.p_y, &e.p_e1);
            let candidate = 0.8 - phi.iter().sum::<f64>();
            assert!(candidate < last);
            last = candidate;
        }
    }

    fn stratum(p_c: f64, p11: f64, p10: f64, p_e1: &[f64], delta: f64) -> Stratum {
        Stratum {
            p_c,
            p11,
            p10,
            p_e1: p_e1.to_vec(),
            delta_x_c: delta,
        }
    }

    #[test]
    fn single_stratum_matches_shifted_bounds() {
        let input = StratifiedInput {
            p_x: 0.6,
            p_y: vec![0.5, 0.5],
            strata: vec![stratum(1.0, 0.8, 0.5, &[0.45, 0.97], 0.1)],
        };
        let s = stratified_merged_bounds(&input).unwrap();
        assert!(close(s.bounds.lower, 0.3) && close(s.bounds.upper, 0.35));
        let (t, e) = pair(0.6, 0.8, 0.5, &[0.5, 0.5], &[0.45, 0.97], 0.1);
        assert_eq!(s.per_stratum[0], shifted_merged_bounds(&t, &e).unwrap());
    }

    #[test]
    fn identical_strata_match_one_stratum() {
        let input = StratifiedInput {
            p_x: 0.6,
            p_y: vec![0.5, 0.5],
            strata: vec![
                stratum(0.5, 0.8, 0.5, &[0.45, 0.97], 0.1),
                stratum(0.5, 0.8, 0.5, &[0.45, 0.97], 0.1),
            ],
        };
        let s = stratified_merged_bounds(&input).unwrap();
        assert!(close(s.bounds.lower, 0.3) && close(s.bounds.upper, 0.35));
    }

    #[test]
    fn two_strata_by_hand() {
        let input = StratifiedInput {
            p_x: 0.6,
            p_y: vec![0.5, 0.5],
            strata: vec![
                stratum(0.5, 0.8, 0.5, &[0.45, 0.97], 0.1),
                stratum(0.5, 0.6, 0.6, &[0.5, 0.7], 0.1),
            ],
        };
        let s = stratified_merged_bounds(&input).unwrap();
        assert!(close(s.per_stratum[1].lower, 0.0) && close(s.per_stratum[1].upper, 0.4));
        assert!(close(s.bounds.upper, 0.375));
        assert!(close(s.bounds.lower, 0.15));
    }

    #[test]
    fn incompatible_stratum_is_named() {
        let input = StratifiedInput {
            p_x: 0.6,
            p_y: vec![0.5, 0.5],
            strata: vec![
                stratum(0.5, 0.8, 0.5, &[0.45, 0.97], 0.1),
                stratum(0.5, 0.6, 0.6, &[0.5, 0.9], 0.1),
            ],
        };
        let err = stratified_merged_bounds(&input).unwrap_err();
        assert!(matches!(err, BoundsError::Incompatible { stratum: Some(1), .. }));
        assert!(err.to_string().contains("stratum 1"));
    }
}
