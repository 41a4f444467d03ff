//! Brute-force verifier for the closed-form merged bounds.
//!
//! The sharp bounds are
//!
//! ```text
//! min Delta(f)  <=  PNS  <=  p11 - min Gamma(f)
//! ```
//!
//! where `f` ranges over the coherence box of the free parameters and
//! `Delta`, `Gamma` are the covariate-adjusted adjustment terms of the solved
//! table. Both objectives are sums of hinge functions of `f`, hence convex and
//! piecewise linear. The oracle evaluates them on a dense grid that always
//! contains the box faces and the hinge breakpoints of each coordinate. The
//! last coordinate is not gridded blindly: given the others, its feasible
//! range is computed from the weighted-sum constraint and every breakpoint
//! inside that range is evaluated, so for a single free parameter the search
//! is exact.

use rayon::prelude::*;
use serde::Serialize;

use crate::constraint::{raw_parameter_box, FreeParameterAssignment, FreeParameterBox, Interval};
use crate::error::{BoundsError, Result};
use crate::marginals::{
    compatibility_check, dot, validate, ExternalMarginal, StratifiedInput, TargetMarginal,
    DEFAULT_TOL,
};

/// Largest admissible `grid^N`.
pub const GRID_BUDGET: f64 = 1e8;

/// Default grid resolution for `n` free parameters.
pub fn default_grid(n: usize) -> usize {
    match n {
        0 | 1 => 2001,
        2 => 301,
        3 => 101,
        _ => (10f64.powf(6.0 / n as f64).floor() as usize).max(2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    /// Minimum of `Delta` over the feasible grid.
    pub lower: f64,
    /// `p11` minus the minimum of `Gamma` over the feasible grid.
    pub upper: f64,
    pub argmin_delta: FreeParameterAssignment,
    pub argmin_gamma: FreeParameterAssignment,
    pub grid_points_per_dim: usize,
    /// Bound on how far `lower` may sit above the true minimum.
    pub slack_lower: f64,
    /// Bound on how far `upper` may sit below the true maximum.
    pub slack_upper: f64,
    /// Number of feasible points evaluated.
    pub evaluated: u64,
}

/// The four families of terms inside `Delta` and `Gamma`, as functions of the
/// free parameters.
struct Objective {
    q: f64,
    p11: f64,
    p_y: Vec<f64>,
    p_e1: Vec<f64>,
}

impl Objective {
    fn new(target: &TargetMarginal, external: &ExternalMarginal) -> Self {
        Objective {
            q: external.shifted_px(target.p_x),
            p11: target.p11,
            p_y: external.p_y.clone(),
            p_e1: external.p_e1.clone(),
        }
    }

    /// `P(Z=1|X=1,Y=0) - P(Z=1|X=0,Y=0)` given the weighted sum `s`.
    fn delta_base(&self, s: f64) -> f64 {
        let py0 = self.p_y[0];
        (self.p11 - self.p_e1[0] * py0 - s) / ((1.0 - self.q) * py0)
    }

    /// `P(Z=1|X=1,Y=0) - P(Z=0|X=0,Y=0)` given the weighted sum `s`.
    fn gamma_base(&self, s: f64) -> f64 {
        let q = self.q;
        let py0 = self.p_y[0];
        (self.p_e1[0] - (1.0 - q)) / (1.0 - q) + (s - self.p11) / py0 * (q / (1.0 - q) - 1.0)
    }

    /// `P(Z=1|X=1,Y=i) - P(Z=1|X=0,Y=i)` for `i >= 1`.
    fn delta_free(&self, i: usize, f: f64) -> f64 {
        (f - self.p_e1[i]) / (1.0 - self.q)
    }

    /// `P(Z=1|X=1,Y=i) - P(Z=0|X=0,Y=i)` for `i >= 1`.
    fn gamma_free(&self, i: usize, f: f64) -> f64 {
        let q = self.q;
        f * (1.0 - q / (1.0 - q)) + (self.p_e1[i] - (1.0 - q)) / (1.0 - q)
    }

    fn terms(&self, free: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let s = dot(&self.p_y[1..], free);
        let mut delta = vec![self.delta_base(s)];
        let mut gamma = vec![self.gamma_base(s)];
        for (k, &f) in free.iter().enumerate() {
            delta.push(self.delta_free(k + 1, f));
            gamma.push(self.gamma_free(k + 1, f));
        }
        (delta, gamma)
    }

    /// `(Delta, Gamma)` at a point whose weighted sum is `s`.
    fn evaluate(&self, free: &[f64], s: f64) -> (f64, f64) {
        let w0 = self.p_y[0];
        let mut delta = w0 * self.delta_base(s).max(0.0);
        let mut gamma = w0 * self.gamma_base(s).max(0.0);
        for (k, &f) in free.iter().enumerate() {
            let w = self.p_y[k + 1];
            delta += w * self.delta_free(k + 1, f).max(0.0);
            gamma += w * self.gamma_free(k + 1, f).max(0.0);
        }
        (delta, gamma)
    }

    /// Zeros of the hinges of coordinate `i >= 1`.
    fn free_breakpoints(&self, i: usize) -> Vec<f64> {
        let q = self.q;
        let mut out = vec![self.p_e1[i]];
        if (1.0 - 2.0 * q).abs() > 1e-12 {
            out.push(((1.0 - q) - self.p_e1[i]) / (1.0 - 2.0 * q));
        }
        out
    }

    /// Values of the weighted sum at which the `Y = 0` hinges switch.
    fn sum_breakpoints(&self) -> Vec<f64> {
        let q = self.q;
        let py0 = self.p_y[0];
        let mut out = vec![self.p11 - self.p_e1[0] * py0];
        if (2.0 * q - 1.0).abs() > 1e-12 {
            out.push(self.p11 - py0 * (self.p_e1[0] - (1.0 - q)) / (2.0 * q - 1.0));
        }
        out
    }

    /// Per-coordinate Lipschitz constants of `(Delta, Gamma)`.
    fn lipschitz(&self, i: usize) -> (f64, f64) {
        let q = self.q;
        let w = self.p_y[i];
        (2.0 * w / (1.0 - q), 2.0 * w * (1.0 - 2.0 * q).abs() / (1.0 - q))
    }
}

/// The terms of `Delta` and `Gamma` for `Y = 0..=N` before the `max{0, .}`
/// and before weighting by `P(Y)`, returned as `(delta_terms, gamma_terms)`.
pub fn gamma_delta_terms(
    target: &TargetMarginal,
    external: &ExternalMarginal,
    assignment: &FreeParameterAssignment,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let bx = crate::constraint::parameter_box(target, external)?;
    if !bx.contains(assignment, DEFAULT_TOL) {
        return Err(BoundsError::OutOfBox(format!(
            "{:?} is not a coherent assignment",
            assignment.values
        )));
    }
    Ok(Objective::new(target, external).terms(&assignment.values))
}

/// Grid search for the sharp merged bounds.
pub fn oracle_bounds(
    target: &TargetMarginal,
    external: &ExternalMarginal,
    grid_points_per_dim: usize,
) -> Result<OracleResult> {
    if grid_points_per_dim < 2 {
        return Err(BoundsError::domain("grid must have at least 2 points per dimension"));
    }
    validate(target, external)?;
    let n = external.n();
    if n == 0 {
        return Err(BoundsError::Arity {
            expected: 2,
            found: 1,
        });
    }
    let points = (grid_points_per_dim as f64).powi(n as i32);
    if points > GRID_BUDGET {
        return Err(BoundsError::Budget {
            points,
            budget: GRID_BUDGET,
        });
    }
    if !compatibility_check(target, external, DEFAULT_TOL) {
        return Err(BoundsError::Infeasible(
            "the marginals disagree on P(Z=1), so no joint reproduces both".into(),
        ));
    }
    let bx = raw_parameter_box(target, external);
    if let Some(iv) = bx.per_param.iter().find(|iv| iv.is_empty(DEFAULT_TOL)) {
        return Err(BoundsError::Infeasible(format!(
            "free-parameter interval [{}, {}] is empty",
            iv.lo, iv.hi
        )));
    }
    if bx.sum_interval.is_empty(DEFAULT_TOL) {
        return Err(BoundsError::Infeasible("weighted-sum interval is empty".into()));
    }

    let objective = Objective::new(target, external);
    let search = GridSearch::new(&objective, &bx, grid_points_per_dim);
    let best = search.run().ok_or_else(|| {
        BoundsError::Infeasible("no grid point satisfies the weighted-sum constraint".into())
    })?;

    let (mut slack_lower, mut slack_upper) = (0.0, 0.0);
    for (k, iv) in search.intervals.iter().enumerate() {
        let h = iv.width() / (grid_points_per_dim - 1) as f64;
        let (ld, lg) = objective.lipschitz(k + 1);
        slack_lower += 2.0 * h * ld;
        slack_upper += 2.0 * h * lg;
    }

    Ok(OracleResult {
        lower: best.delta.value,
        upper: target.p11 - best.gamma.value,
        argmin_delta: FreeParameterAssignment::new(best.delta.point),
        argmin_gamma: FreeParameterAssignment::new(best.gamma.point),
        grid_points_per_dim,
        slack_lower,
        slack_upper,
        evaluated: best.evaluated,
    })
}

#[derive(Debug, Clone)]
struct Candidate {
    value: f64,
    /// Lexicographic position: outer flat index, then position on the last axis.
    rank: (usize, usize),
    point: Vec<f64>,
}

impl Candidate {
    fn better(self, other: Candidate) -> Candidate {
        if (other.value, other.rank) < (self.value, self.rank) {
            other
        } else {
            self
        }
    }
}

struct Best {
    delta: Candidate,
    gamma: Candidate,
    evaluated: u64,
}

fn merge_best(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => Some(Best {
            delta: a.delta.better(b.delta),
            gamma: a.gamma.better(b.gamma),
            evaluated: a.evaluated + b.evaluated,
        }),
    }
}

struct GridSearch<'a> {
    objective: &'a Objective,
    intervals: Vec<Interval>,
    weights: Vec<f64>,
    sum: Interval,
    /// Candidate values for every coordinate except the last.
    axes: Vec<Vec<f64>>,
    /// Regular grid and own breakpoints of the last coordinate.
    last_axis: Vec<f64>,
    sum_breaks: Vec<f64>,
}

impl<'a> GridSearch<'a> {
    fn new(objective: &'a Objective, bx: &FreeParameterBox, grid: usize) -> Self {
        let n = bx.dim();
        let intervals: Vec<Interval> = bx
            .per_param
            .iter()
            .map(|iv| {
                if iv.lo > iv.hi {
                    let mid = 0.5 * (iv.lo + iv.hi);
                    Interval::new(mid, mid)
                } else {
                    *iv
                }
            })
            .collect();
        let weights = bx.weights.clone();
        let sum = if bx.sum_interval.lo > bx.sum_interval.hi {
            let mid = 0.5 * (bx.sum_interval.lo + bx.sum_interval.hi);
            Interval::new(mid, mid)
        } else {
            bx.sum_interval
        };

        let axis = |k: usize| -> Vec<f64> {
            let iv = intervals[k];
            let mut values = linspace(iv, grid);
            values.extend(objective.free_breakpoints(k + 1));
            // Faces of the projection of the feasible set onto this axis.
            let (rest_lo, rest_hi) = intervals
                .iter()
                .zip(&weights)
                .enumerate()
                .filter(|(j, _)| *j != k)
                .fold((0.0, 0.0), |(lo, hi), (_, (iv, w))| (lo + w * iv.lo, hi + w * iv.hi));
            values.push((sum.lo - rest_hi) / weights[k]);
            values.push((sum.hi - rest_lo) / weights[k]);
            sorted_within(values, iv)
        };

        let axes = (0..n - 1).map(axis).collect();
        let mut last_axis = linspace(intervals[n - 1], grid);
        last_axis.extend(objective.free_breakpoints(n));
        GridSearch {
            objective,
            last_axis: sorted_within(last_axis, intervals[n - 1]),
            sum_breaks: objective.sum_breakpoints(),
            intervals,
            weights,
            sum,
            axes,
        }
    }

    fn outer_len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    fn run(&self) -> Option<Best> {
        (0..self.outer_len())
            .into_par_iter()
            .map(|k| self.scan_line(k))
            .reduce(|| None, merge_best)
    }

    /// Evaluates every candidate on the last axis for outer grid point `k`.
    fn scan_line(&self, k: usize) -> Option<Best> {
        let n = self.intervals.len();
        let mut point = Vec::with_capacity(n);
        let mut rem = k;
        for axis in self.axes.iter().rev() {
            point.push(axis[rem % axis.len()]);
            rem /= axis.len();
        }
        point.reverse();
        let partial = dot(&self.weights[..n - 1], &point);

        let w_last = self.weights[n - 1];
        let own = self.intervals[n - 1];
        let mut range = Interval::new(
            own.lo.max((self.sum.lo - partial) / w_last),
            own.hi.min((self.sum.hi - partial) / w_last),
        );
        if range.lo > range.hi {
            if (range.lo - range.hi) * w_last > DEFAULT_TOL {
                return None;
            }
            let mid = 0.5 * (range.lo + range.hi);
            range = Interval::new(mid, mid);
        }

        let mut values: Vec<f64> = self
            .last_axis
            .iter()
            .copied()
            .filter(|v| range.contains(*v, 0.0))
            .collect();
        values.push(range.lo);
        values.push(range.hi);
        values.extend(self.sum_breaks.iter().map(|s| (s - partial) / w_last));
        let values = sorted_within(values, range);

        point.push(0.0);
        let mut best: Option<Best> = None;
        for (pos, &v) in values.iter().enumerate() {
            point[n - 1] = v;
            let s = partial + w_last * v;
            let (delta, gamma) = self.objective.evaluate(&point, s);
            let here = Best {
                delta: Candidate {
                    value: delta,
                    rank: (k, pos),
                    point: point.clone(),
                },
                gamma: Candidate {
                    value: gamma,
                    rank: (k, pos),
                    point: point.clone(),
                },
                evaluated: 1,
            };
            best = merge_best(best, Some(here));
        }
        best
    }
}

fn linspace(iv: Interval, points: usize) -> Vec<f64> {
    let step = iv.width() / (points - 1) as f64;
    (0..points)
        .map(|j| {
            if j == points - 1 {
                iv.hi
            } else {
                iv.lo + step * j as f64
            }
        })
        .collect()
}

fn sorted_within(mut values: Vec<f64>, iv: Interval) -> Vec<f64> {
    values.retain(|v| v.is_finite() && *v >= iv.lo && *v <= iv.hi);
    values.push(iv.lo);
    values.push(iv.hi);
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratifiedOracleResult {
    pub lower: f64,
    pub upper: f64,
    pub slack_lower: f64,
    pub slack_upper: f64,
    pub per_stratum: Vec<OracleResult>,
}

/// Runs the oracle in every stratum and averages the results with `P(C)`.
pub fn oracle_bounds_stratified(
    input: &StratifiedInput,
    grid_points_per_dim: usize,
) -> Result<StratifiedOracleResult> {
    input.validate()?;
    let per_stratum = (0..input.strata.len())
        .map(|c| {
            oracle_bounds(
                &input.stratum_target(c),
                &input.stratum_external(c),
                grid_points_per_dim,
            )
            .map_err(|e| match e {
                BoundsError::Infeasible(msg) => BoundsError::Infeasible(format!("stratum {c}: {msg}")),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = StratifiedOracleResult {
        lower: 0.0,
        upper: 0.0,
        slack_lower: 0.0,
        slack_upper: 0.0,
        per_stratum: Vec::new(),
    };
    for (stratum, r) in input.strata.iter().zip(&per_stratum) {
        out.lower += stratum.p_c * r.lower;
        out.upper += stratum.p_c * r.upper;
        out.slack_lower += stratum.p_c * r.slack_lower;
        out.slack_upper += stratum.p_c * r.slack_upper;
    }
    out.per_stratum = per_stratum;
    Ok(out)
}
