//! Response-function structural causal models on the collider `X -> Z <- Y`
//! with an independent covariate `C -> Z`.
//!
//! `X`, `Y`, `C` and the response type are mutually independent. A response
//! type is a deterministic map `(x, y, c) -> z`, stored as a bit mask, so
//! counterfactuals such as `Z_{x=1}` and `Z_{x=0}` are read off the same map
//! and PNS is computed exactly by enumeration.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classic::{joint_covariate_bounds, marginal_covariate_bounds, tian_pearl_bounds};
use crate::error::{BoundsError, Result};
use crate::marginals::{
    dot, BoundResult, ExternalMarginal, JointDistribution, StratifiedInput, Stratum, TargetMarginal,
    DEFAULT_TOL,
};
use crate::merge::{binary_merged_bounds, merged_bounds, shifted_merged_bounds, stratified_merged_bounds};
use crate::oracle::{oracle_bounds, oracle_bounds_stratified};

/// Largest `|Y| * |C|`; one map holds two bits per `(y, c)` cell.
pub const MAX_CELLS: usize = 16;

/// Smallest probability given to any value of `Y` or `C` by [`random_scm`].
pub const MIN_MASS: f64 = 0.01;

/// Most response types drawn by [`random_scm`].
pub const MAX_RESPONSE_TYPES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseFunctionScm {
    pub p_x: f64,
    pub p_y: Vec<f64>,
    pub p_c: Vec<f64>,
    /// `(map, weight)`: bit `(c * |Y| + y) * 2 + x` of `map` is `Z` at `(x, y, c)`.
    pub responses: Vec<(u32, f64)>,
}

impl ResponseFunctionScm {
    pub fn new(p_x: f64, p_y: Vec<f64>, p_c: Vec<f64>, responses: Vec<(u32, f64)>) -> Result<Self> {
        let scm = ResponseFunctionScm {
            p_x,
            p_y,
            p_c,
            responses,
        };
        scm.validate()?;
        Ok(scm)
    }

    /// An SCM in which `Z = f(X, Y, C)` deterministically.
    pub fn deterministic(
        p_x: f64,
        p_y: Vec<f64>,
        p_c: Vec<f64>,
        f: impl Fn(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        let (ny, nc) = (p_y.len(), p_c.len());
        let mut map = 0u32;
        for c in 0..nc {
            for y in 0..ny {
                for x in 0..2 {
                    if f(x, y, c) {
                        map |= 1 << bit(ny, x, y, c);
                    }
                }
            }
        }
        Self::new(p_x, p_y, p_c, vec![(map, 1.0)])
    }

    /// An SCM reproducing a given table `P(Z=1 | X=x, Y=y, C=c)`, indexed
    /// `[c][x][y]`, by thresholding one shared uniform variable.
    pub fn from_conditionals(
        p_x: f64,
        p_y: Vec<f64>,
        p_c: Vec<f64>,
        table: &[Vec<Vec<f64>>],
    ) -> Result<Self> {
        let (ny, nc) = (p_y.len(), p_c.len());
        if table.len() != nc || table.iter().any(|rows| rows.len() != 2 || rows.iter().any(|r| r.len() != ny)) {
            return Err(BoundsError::domain(format!("table must be indexed [{nc}][2][{ny}]")));
        }
        if table.iter().flatten().flatten().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(BoundsError::domain("table entries must lie in [0,1]"));
        }
        let mut cuts: Vec<f64> = table.iter().flatten().flatten().copied().collect();
        cuts.push(0.0);
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut responses = Vec::new();
        for pair in cuts.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let mut map = 0u32;
            for (c, rows) in table.iter().enumerate() {
                for (x, row) in rows.iter().enumerate() {
                    for (y, &v) in row.iter().enumerate() {
                        if v >= hi {
                            map |= 1 << bit(ny, x, y, c);
                        }
                    }
                }
            }
            responses.push((map, hi - lo));
        }
        Self::new(p_x, p_y, p_c, responses)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_x > 0.0 && self.p_x < 1.0) {
            return Err(BoundsError::domain("p_x must lie strictly in (0,1)"));
        }
        for (name, dist) in [("p_y", &self.p_y), ("p_c", &self.p_c)] {
            if dist.is_empty() || dist.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
                return Err(BoundsError::domain(format!("{name} entries must lie in (0,1]")));
            }
            if (dist.iter().sum::<f64>() - 1.0).abs() > DEFAULT_TOL {
                return Err(BoundsError::domain(format!("{name} must sum to 1")));
            }
        }
        let cells = self.p_y.len() * self.p_c.len();
        if cells > MAX_CELLS {
            return Err(BoundsError::domain(format!(
                "|Y| * |C| = {cells} exceeds the supported {MAX_CELLS}"
            )));
        }
        if self.responses.iter().any(|&(map, w)| w < 0.0 || (cells < 16 && map >> (2 * cells) != 0)) {
            return Err(BoundsError::domain(
                "response weights must be non-negative and maps must fit the support",
            ));
        }
        if (self.responses.iter().map(|r| r.1).sum::<f64>() - 1.0).abs() > DEFAULT_TOL {
            return Err(BoundsError::domain("response weights must sum to 1"));
        }
        Ok(())
    }

    pub fn ny(&self) -> usize {
        self.p_y.len()
    }

    pub fn nc(&self) -> usize {
        self.p_c.len()
    }

    /// `P(Z = 1 | do(X=x), Y=y, C=c)`, which equals the observational
    /// conditional because every parent of `Z` is exogenous.
    pub fn z1(&self, x: usize, y: usize, c: usize) -> f64 {
        let b = bit(self.ny(), x, y, c);
        self.responses
            .iter()
            .filter(|(map, _)| map >> b & 1 == 1)
            .map(|r| r.1)
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// The same model with the values of `Y` relabelled: new value `perm[y]`
    /// plays the role of old value `y`.
    pub fn relabel_y(&self, perm: &[usize]) -> Self {
        let ny = self.ny();
        let mut p_y = vec![0.0; ny];
        for (y, &to) in perm.iter().enumerate() {
            p_y[to] = self.p_y[y];
        }
        let responses = self
            .responses
            .iter()
            .map(|&(map, w)| {
                let mut out = 0u32;
                for c in 0..self.nc() {
                    for (y, &to) in perm.iter().enumerate() {
                        for x in 0..2 {
                            if map >> bit(ny, x, y, c) & 1 == 1 {
                                out |= 1 << bit(ny, x, to, c);
                            }
                        }
                    }
                }
                (out, w)
            })
            .collect();
        ResponseFunctionScm {
            p_x: self.p_x,
            p_y,
            p_c: self.p_c.clone(),
            responses,
        }
    }
}

fn bit(ny: usize, x: usize, y: usize, c: usize) -> usize {
    (c * ny + y) * 2 + x
}

/// `P(Z_{x=1} = 1, Z_{x=0} = 0)` by exact enumeration.
pub fn true_pns(scm: &ResponseFunctionScm) -> f64 {
    let ny = scm.ny();
    let mut pns = 0.0;
    for &(map, w) in &scm.responses {
        for (c, &pc) in scm.p_c.iter().enumerate() {
            for (y, &py) in scm.p_y.iter().enumerate() {
                let treated = map >> bit(ny, 1, y, c) & 1 == 1;
                let control = map >> bit(ny, 0, y, c) & 1 == 1;
                if treated && !control {
                    pns += w * pc * py;
                }
            }
        }
    }
    pns
}

/// How the external dataset's treatment mechanism differs from the target's.
#[derive(Debug, Clone, PartialEq)]
pub enum Shift {
    /// `P^E(X=1) = p_x + delta` in every stratum.
    Uniform(f64),
    /// `P^E(X=1 | C=c) = p_x + delta[c]`.
    PerStratum(Vec<f64>),
}

impl Shift {
    fn per_stratum(&self, nc: usize) -> Result<Vec<f64>> {
        match self {
            Shift::Uniform(d) => Ok(vec![*d; nc]),
            Shift::PerStratum(ds) if ds.len() == nc => Ok(ds.clone()),
            Shift::PerStratum(ds) => Err(BoundsError::domain(format!(
                "expected {nc} per-stratum shifts, got {}",
                ds.len()
            ))),
        }
    }
}

/// Everything observable from an SCM under a given external mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub target: TargetMarginal,
    /// Present only for a uniform shift; a stratum-dependent mechanism makes
    /// `X` confounded with `C` once `C` is marginalised away.
    pub external: Option<ExternalMarginal>,
    pub stratified: StratifiedInput,
    pub joint: JointDistribution,
}

/// Target, external, stratified and joint summaries of an SCM.
pub fn marginalize(scm: &ResponseFunctionScm, shift: &Shift) -> Result<Marginals> {
    scm.validate()?;
    let (ny, nc) = (scm.ny(), scm.nc());
    let deltas = shift.per_stratum(nc)?;
    for (c, d) in deltas.iter().enumerate() {
        let q = scm.p_x + d;
        if !(q > 0.0 && q < 1.0) {
            return Err(BoundsError::domain(format!(
                "p_x + delta must lie strictly in (0,1) (stratum {c}: {q})"
            )));
        }
    }

    let p_z1: Vec<Vec<Vec<f64>>> = (0..nc)
        .map(|c| (0..2).map(|x| (0..ny).map(|y| scm.z1(x, y, c)).collect()).collect())
        .collect();
    let joint = JointDistribution {
        p_c: scm.p_c.clone(),
        p_y: scm.p_y.clone(),
        p_z1,
    };

    let strata: Vec<Stratum> = (0..nc)
        .map(|c| {
            let q = scm.p_x + deltas[c];
            let rows = &joint.p_z1[c];
            Stratum {
                p_c: scm.p_c[c],
                p11: clamp_unit(dot(&scm.p_y, &rows[1])),
                p10: clamp_unit(dot(&scm.p_y, &rows[0])),
                p_e1: (0..ny)
                    .map(|y| clamp_unit(q * rows[1][y] + (1.0 - q) * rows[0][y]))
                    .collect(),
                delta_x_c: deltas[c],
            }
        })
        .collect();

    let target = TargetMarginal {
        p_x: scm.p_x,
        p11: clamp_unit(joint.z1_given_x(1)),
        p10: clamp_unit(joint.z1_given_x(0)),
    };

    let external = match shift {
        Shift::Uniform(d) => Some(ExternalMarginal {
            p_y: scm.p_y.clone(),
            p_e1: (0..ny)
                .map(|y| clamp_unit(strata.iter().map(|s| s.p_c * s.p_e1[y]).sum()))
                .collect(),
            delta_x: *d,
        }),
        Shift::PerStratum(_) => None,
    };

    Ok(Marginals {
        target,
        external,
        stratified: StratifiedInput {
            p_x: scm.p_x,
            p_y: scm.p_y.clone(),
            strata,
        },
        joint,
    })
}

fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn dirichlet_ones<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

fn support_distribution<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    loop {
        let p = dirichlet_ones(rng, k);
        if p.iter().all(|&v| v >= MIN_MASS) {
            return p;
        }
    }
}

/// Draws an SCM: `P(X=1) ~ U(0.05, 0.95)`, flat Dirichlet `P(Y)` and `P(C)`,
/// and a flat Dirichlet over a random subset of at most
/// [`MAX_RESPONSE_TYPES`] response types.
pub fn random_scm<R: Rng + ?Sized>(rng: &mut R, ny: usize, nc: usize) -> Result<ResponseFunctionScm> {
    if ny == 0 || nc == 0 || ny * nc > MAX_CELLS {
        return Err(BoundsError::domain(format!(
            "supports must be non-empty with |Y| * |C| <= {MAX_CELLS}"
        )));
    }
    let p_x = rng.random_range(0.05..0.95);
    let p_y = support_distribution(rng, ny);
    let p_c = support_distribution(rng, nc);
    let n_maps: u64 = 1u64 << (2 * ny * nc);
    let k = rng.random_range(1..=MAX_RESPONSE_TYPES);
    let weights = dirichlet_ones(rng, k);
    let responses = weights
        .into_iter()
        .map(|w| (rng.random_range(0..n_maps) as u32, w))
        .collect();
    ResponseFunctionScm::new(p_x, p_y, p_c, responses)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaPolicy {
    Zero,
    Random,
}

/// Draws a shift keeping every external prevalence in `[0.05, 0.95]`.
///
/// Under [`DeltaPolicy::Random`] a single stratum always gets a uniform
/// shift; with several strata the shift is uniform or per-stratum with equal
/// probability, so both the unstratified and the stratified bounds are
/// exercised.
pub fn random_shift<R: Rng + ?Sized>(rng: &mut R, p_x: f64, nc: usize, policy: DeltaPolicy) -> Shift {
    match policy {
        DeltaPolicy::Zero => Shift::Uniform(0.0),
        DeltaPolicy::Random => {
            if nc == 1 || rng.random_bool(0.5) {
                Shift::Uniform(rng.random_range(0.05..0.95) - p_x)
            } else {
                Shift::PerStratum((0..nc).map(|_| rng.random_range(0.05..0.95) - p_x).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub seed: u64,
    pub trials: usize,
    pub support_y: usize,
    pub support_c: usize,
    pub delta_policy: DeltaPolicy,
    /// Grid for the oracle checks; `None` skips them.
    pub oracle_grid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub trials: usize,
    pub violations: usize,
    /// Failed checks by name; a trial may fail several.
    pub violations_by_check: BTreeMap<String, usize>,
    pub mean_width_merged: f64,
    pub mean_width_tian_pearl: f64,
    pub mean_width_joint: f64,
}

/// Tolerance for containment of the true PNS in closed-form intervals.
pub const COVERAGE_TOL: f64 = 1e-9;

struct TrialOutcome {
    failed: Vec<String>,
    width_merged: f64,
    width_tian_pearl: f64,
    width_joint: f64,
}

fn check(failed: &mut Vec<String>, name: &str, ok: bool) {
    if !ok {
        failed.push(name.to_string());
    }
}

fn contains(bounds: &Result<BoundResult>, pns: f64, failed: &mut Vec<String>, name: &str) -> Option<BoundResult> {
    match bounds {
        Ok(b) => {
            check(failed, name, b.contains(pns, COVERAGE_TOL));
            Some(b.clone())
        }
        Err(_) => {
            failed.push(format!("{name}:error"));
            None
        }
    }
}

fn run_trial(config: &CoverageConfig, index: usize) -> Result<TrialOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(index as u64));
    let scm = random_scm(&mut rng, config.support_y, config.support_c)?;
    let shift = random_shift(&mut rng, scm.p_x, config.support_c, config.delta_policy);
    let m = marginalize(&scm, &shift)?;
    let pns = true_pns(&scm);
    let mut failed = Vec::new();

    let tp = tian_pearl_bounds(&m.target);
    check(&mut failed, "tian_pearl", tp.contains(pns, COVERAGE_TOL));

    let joint = contains(&joint_covariate_bounds(&m.joint).map(|r| r.0), pns, &mut failed, "joint");
    let marginal = contains(&marginal_covariate_bounds(&m.joint), pns, &mut failed, "marginal_covariate");
    if let (Some(j), Some(mc)) = (&joint, &marginal) {
        check(&mut failed, "joint_within_marginal_covariate", j.is_within(mc, COVERAGE_TOL));
    }

    if let Some(external) = &m.external {
        let merged = contains(&shifted_merged_bounds(&m.target, external), pns, &mut failed, "merged");
        if external.delta_x == 0.0 {
            let unshifted = merged_bounds(&m.target, external);
            check(&mut failed, "merged_unshifted_agrees", unshifted.as_ref().ok() == merged.as_ref());
            if external.p_y.len() == 2 {
                contains(&binary_merged_bounds(&m.target, external), pns, &mut failed, "merged_binary");
            }
        }
        if let Some(b) = &merged {
            check(&mut failed, "merged_within_tian_pearl", b.is_within(&tp, COVERAGE_TOL));
            if let Some(j) = &joint {
                check(&mut failed, "joint_within_merged", j.is_within(b, COVERAGE_TOL));
            }
        }
        if let Some(grid) = config.oracle_grid {
            match oracle_bounds(&m.target, external, grid) {
                Ok(o) => check(
                    &mut failed,
                    "oracle",
                    pns >= o.lower - o.slack_lower - COVERAGE_TOL
                        && pns <= o.upper + o.slack_upper + COVERAGE_TOL,
                ),
                Err(_) => failed.push("oracle:error".into()),
            }
        }
    }

    let stratified = stratified_merged_bounds(&m.stratified).map(|s| s.bounds);
    let strat = contains(&stratified, pns, &mut failed, "stratified");
    if let Some(s) = &strat {
        check(&mut failed, "stratified_within_tian_pearl", s.is_within(&tp, COVERAGE_TOL));
        if let Some(j) = &joint {
            check(&mut failed, "joint_within_stratified", j.is_within(s, COVERAGE_TOL));
        }
    }
    if let Some(grid) = config.oracle_grid {
        match oracle_bounds_stratified(&m.stratified, grid) {
            Ok(o) => check(
                &mut failed,
                "stratified_oracle",
                pns >= o.lower - o.slack_lower - COVERAGE_TOL
                    && pns <= o.upper + o.slack_upper + COVERAGE_TOL,
            ),
            Err(_) => failed.push("stratified_oracle:error".into()),
        }
    }

    Ok(TrialOutcome {
        failed,
        width_merged: strat.map_or(0.0, |s| s.width()),
        width_tian_pearl: tp.width(),
        width_joint: joint.map_or(0.0, |j| j.width()),
    })
}

/// Draws `trials` random SCMs and checks that the true PNS lies inside every
/// applicable interval. Trial `i` is seeded with `seed + i`, so the report
/// does not depend on scheduling.
pub fn coverage_trial(config: &CoverageConfig) -> Result<CoverageReport> {
    if config.support_y < 2 {
        return Err(BoundsError::domain("support_y must be at least 2"));
    }
    let outcomes = (0..config.trials)
        .into_par_iter()
        .map(|i| run_trial(config, i))
        .collect::<Result<Vec<_>>>()?;

    let mut report = CoverageReport {
        trials: config.trials,
        violations: 0,
        violations_by_check: BTreeMap::new(),
        mean_width_merged: 0.0,
        mean_width_tian_pearl: 0.0,
        mean_width_joint: 0.0,
    };
    for o in &outcomes {
        if !o.failed.is_empty() {
            report.violations += 1;
        }
        for name in &o.failed {
            *report.violations_by_check.entry(name.clone()).or_default() += 1;
        }
        report.mean_width_merged += o.width_merged;
        report.mean_width_tian_pearl += o.width_tian_pearl;
        report.mean_width_joint += o.width_joint;
    }
    if !outcomes.is_empty() {
        let n = outcomes.len() as f64;
        report.mean_width_merged /= n;
        report.mean_width_tian_pearl /= n;
        report.mean_width_joint /= n;
    }
    Ok(report)
}
