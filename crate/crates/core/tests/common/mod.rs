#![allow(dead_code)]

use pns_bounds::{
    marginalize, parameter_box, random_scm, ExternalMarginal, FreeParameterAssignment, FreeParameterBox,
    ResponseFunctionScm, Shift, TargetMarginal,
};
use rand::Rng;

pub struct Instance {
    pub scm: ResponseFunctionScm,
    pub target: TargetMarginal,
    pub external: ExternalMarginal,
}

/// A compatible pair with `n + 1` values of `Y` and no shift.
pub fn instance<R: Rng>(rng: &mut R, n: usize) -> Instance {
    shifted_instance(rng, n, 0.0)
}

/// A compatible pair whose external prevalence is `p_x + delta`, with
/// `delta` redrawn when it would leave `[0.05, 0.95]`.
pub fn shifted_instance<R: Rng>(rng: &mut R, n: usize, delta: f64) -> Instance {
    let scm = random_scm(rng, n + 1, 1).unwrap();
    let q = scm.p_x + delta;
    let delta = if (0.05..=0.95).contains(&q) { delta } else { 0.0 };
    let m = marginalize(&scm, &Shift::Uniform(delta)).unwrap();
    Instance {
        target: m.target,
        external: m.external.unwrap(),
        scm,
    }
}

/// The free parameters of the generating model, which are always coherent.
pub fn generating_point(inst: &Instance) -> FreeParameterAssignment {
    FreeParameterAssignment {
        values: (1..inst.scm.ny()).map(|y| inst.scm.z1(1, y, 0)).collect(),
    }
}

/// A random coherent point: a uniform draw from the per-parameter box pulled
/// towards a known coherent point until the weighted sum is admissible.
pub fn sample_in_box<R: Rng>(rng: &mut R, bx: &FreeParameterBox, anchor: &FreeParameterAssignment) -> FreeParameterAssignment {
    let u: Vec<f64> = bx
        .per_param
        .iter()
        .zip(&anchor.values)
        .map(|(iv, &a)| {
            let (lo, hi) = (iv.lo.min(a), iv.hi.max(a));
            if hi > lo { rng.random_range(lo..=hi) } else { lo }
        })
        .collect();
    let s_anchor = bx.weighted_sum(anchor);
    let s_u: f64 = bx.weights.iter().zip(&u).map(|(w, v)| w * v).sum();
    // Largest t in [0, 1] with the sum of anchor + t (u - anchor) admissible.
    let slope = s_u - s_anchor;
    let mut t_max: f64 = 1.0;
    if slope > 0.0 {
        t_max = t_max.min((bx.sum_interval.hi - s_anchor) / slope);
    } else if slope < 0.0 {
        t_max = t_max.min((bx.sum_interval.lo - s_anchor) / slope);
    }
    let t = rng.random_range(0.0..=t_max.max(0.0));
    FreeParameterAssignment {
        values: anchor.values.iter().zip(&u).map(|(a, v)| a + t * (v - a)).collect(),
    }
}

/// A point `eps` beyond a random face of the coherence box.
pub fn sample_outside_face<R: Rng>(
    rng: &mut R,
    bx: &FreeParameterBox,
    inside: &FreeParameterAssignment,
    eps: f64,
) -> FreeParameterAssignment {
    let n = bx.dim();
    let mut values = inside.values.clone();
    let face = rng.random_range(0..2 * n + 2);
    if face < 2 * n {
        let i = face / 2;
        values[i] = if face % 2 == 0 { bx.per_param[i].lo - eps } else { bx.per_param[i].hi + eps };
    } else {
        let i = rng.random_range(0..n);
        let s = bx.weighted_sum(inside);
        let target = if face == 2 * n { bx.sum_interval.lo - eps } else { bx.sum_interval.hi + eps };
        values[i] += (target - s) / bx.weights[i];
    }
    FreeParameterAssignment { values }
}

pub fn coherence_box(inst: &Instance) -> FreeParameterBox {
    parameter_box(&inst.target, &inst.external).unwrap()
}
