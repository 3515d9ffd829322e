//! Discrete Holder norms `||u||_{rho,a}` and empirical audits of the norm
//! inequalities used by the iteration (interpolation, convexity, product,
//! chain, inverse-map, X-derivative).
//!
//! Norm convention: sum of the sup norms of all finite-difference derivatives
//! of order <= floor(a), plus the Holder ratio of the top-order derivatives
//! with exponent a - floor(a) (zero for integer a). The sum convention keeps
//! the triangle inequality exact on a fixed grid; the inequality constants
//! c_a absorb the choice.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CrError, Result};
use crate::frames::EmbeddingState;
use crate::grid::{GridField, MAX_DIM};

/// Pair sampling switches from exhaustive to Monte-Carlo above this count.
pub const EXHAUSTIVE_PAIR_LIMIT: usize = 20_000;
/// Number of sampled pairs in the Monte-Carlo regime.
pub const SAMPLED_PAIRS: usize = 1_000_000;
/// Fixed seed for pair sampling, so norms are reproducible.
pub const PAIR_SEED: u64 = 0x9e3779b9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormReport {
    pub a: f64,
    pub value: f64,
    /// Sum of sup norms over all derivative multi-indices, per order.
    pub derivative_sups: Vec<f64>,
    /// Top-order Holder ratio term (0 for integer a).
    pub holder_ratio: f64,
    pub pairs_sampled: usize,
    pub exhaustive: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioReport {
    pub kind: String,
    pub a: f64,
    pub lhs: f64,
    /// Right-hand side with the constant c_a stripped.
    pub rhs_skeleton: f64,
    /// lhs / rhs_skeleton; this is the fitted constant.
    pub ratio: f64,
    pub pass: bool,
}

/// All derivative fields of `u` (one component) up to order `k`, grouped by
/// order. Differences are applied in nondecreasing axis order so mixed
/// derivatives are canonical.
fn derivative_levels(u: &GridField, k: usize) -> Result<Vec<Vec<GridField>>> {
    let dim = u.mask.lattice.dim;
    let mut levels: Vec<Vec<GridField>> = vec![vec![u.clone()]];
    let mut last_axis: Vec<usize> = vec![0];
    for _ in 0..k {
        let prev = levels.last().unwrap();
        let mut next = Vec::new();
        let mut next_axis = Vec::new();
        for (f, &la) in prev.iter().zip(&last_axis) {
            for axis in la..dim {
                next.push(f.diff(axis)?);
                next_axis.push(axis);
            }
        }
        levels.push(next);
        last_axis = next_axis;
    }
    Ok(levels)
}

/// Max over point pairs and fields of |f(x)-f(y)| / |x-y|^theta.
fn holder_ratio_of(fields: &[&GridField], theta: f64) -> (f64, usize, bool) {
    if fields.is_empty() || theta <= 0.0 {
        return (0.0, 0, true);
    }
    let mask = &fields[0].mask;
    let n = mask.len();
    if n < 2 {
        return (0.0, 0, true);
    }
    let lat = &mask.lattice;
    let pts: Vec<[f64; MAX_DIM]> = (0..n).map(|mi| lat.point(mask.points[mi] as usize)).collect();
    let dim = lat.dim;
    let vals: Vec<&[Complex64]> = fields.iter().map(|f| f.comp(0)).collect();
    let pair_max = |i: usize, j: usize| -> f64 {
        let mut d2 = 0.0;
        for a in 0..dim {
            let d = pts[i][a] - pts[j][a];
            d2 += d * d;
        }
        if d2 == 0.0 {
            return 0.0;
        }
        let w = (-0.5 * theta * d2.ln()).exp();
        vals.iter()
            .map(|v| (v[i] - v[j]).norm() * w)
            .fold(0.0, f64::max)
    };
    if n <= EXHAUSTIVE_PAIR_LIMIT {
        let best = (0..n - 1)
            .into_par_iter()
            .map(|i| {
                let mut m = 0.0f64;
                for j in i + 1..n {
                    m = m.max(pair_max(i, j));
                }
                m
            })
            .reduce(|| 0.0, f64::max);
        (best, n * (n - 1) / 2, true)
    } else {
        let seeds: Vec<u64> = (0..64).map(|c| PAIR_SEED.wrapping_add(c)).collect();
        let per_chunk = SAMPLED_PAIRS / seeds.len();
        let best = seeds
            .par_iter()
            .map(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let mut m = 0.0f64;
                for _ in 0..per_chunk {
                    let i = rng.gen_range(0..n);
                    let j = rng.gen_range(0..n);
                    if i != j {
                        m = m.max(pair_max(i, j));
                    }
                }
                m
            })
            .reduce(|| 0.0, f64::max);
        (best, per_chunk * seeds.len(), false)
    }
}

fn holder_norm_scalar(u: &GridField, a: f64) -> Result<NormReport> {
    let k = a.floor() as usize;
    let theta = a - k as f64;
    let levels = derivative_levels(u, k)?;
    let derivative_sups: Vec<f64> = levels
        .iter()
        .map(|fs| fs.iter().map(|f| f.sup()).sum())
        .collect();
    let (holder_ratio, pairs_sampled, exhaustive) = if theta > 0.0 {
        let top: Vec<&GridField> = levels[k].iter().collect();
        holder_ratio_of(&top, theta)
    } else {
        (0.0, 0, true)
    };
    Ok(NormReport {
        a,
        value: derivative_sups.iter().sum::<f64>() + holder_ratio,
        derivative_sups,
        holder_ratio,
        pairs_sampled,
        exhaustive,
    })
}

/// Holder norm of a field. For multi-component fields the component with the
/// largest norm is reported.
pub fn holder_norm(u: &GridField, a: f64) -> Result<NormReport> {
    if a < 0.0 {
        return Err(CrError::Hypothesis("norm order a must be >= 0".into()));
    }
    let mut best: Option<NormReport> = None;
    for c in 0..u.comps {
        let r = holder_norm_scalar(&u.component(c), a)?;
        if best.as_ref().map_or(true, |b| r.value > b.value) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| CrError::Degenerate("field has no components".into()))
}

/// Shorthand for the norm value alone.
pub fn norm(u: &GridField, a: f64) -> Result<f64> {
    Ok(holder_norm(u, a)?.value)
}

/// Interpolation inequality audit, `||u||_c <= c_a rho^-c ||u||_a^l ||u||_b^(1-l)`.
pub fn audit_interpolation(
    u: &GridField,
    rho: f64,
    a: f64,
    b: f64,
    lambda: f64,
    limit: f64,
) -> Result<RatioReport> {
    if !(a < b) || !(0.0 < lambda && lambda < 1.0) {
        return Err(CrError::Hypothesis("need a < b and 0 < lambda < 1".into()));
    }
    let c = lambda * a + (1.0 - lambda) * b;
    let na = norm(u, a)?;
    let nb = norm(u, b)?;
    let lhs = norm(u, c)?;
    let rhs_skeleton = rho.powf(-c) * na.powf(lambda) * nb.powf(1.0 - lambda);
    let ratio = if rhs_skeleton == 0.0 { 0.0 } else { lhs / rhs_skeleton };
    Ok(RatioReport {
        kind: "interpolation".into(),
        a: c,
        lhs,
        rhs_skeleton,
        ratio,
        pass: ratio <= limit,
    })
}

/// Inputs for the inequality audits of `audit_rule`.
pub enum Rule<'a> {
    /// `||u||_a ||v||_b <= c rho^-a tau^-b (||u||_a1||v||_b1 + ||u||_a2||v||_b2)`
    /// with `(a,b) = lambda (a1,b1) + (1-lambda)(a2,b2)`.
    Convexity {
        u: &'a GridField,
        v: &'a GridField,
        rho: f64,
        tau: f64,
        ab1: (f64, f64),
        ab2: (f64, f64),
        lambda: f64,
    },
    /// `||uv||_a <= c rho^-a (||u||_a||v||_0 + ||u||_0||v||_a)`.
    Product {
        u: &'a GridField,
        v: &'a GridField,
        rho: f64,
        a: f64,
    },
    /// `||u.g||_a <= c K_a (||u||_a + ||u||_1 ||g||_a)`,
    /// `K_a = tau^-2a rho^-a^2 (1+||g||_1)^2a`; `g` maps the mask of `g`
    /// into the domain of `u` (components are absolute target coordinates).
    Chain {
        u: &'a GridField,
        g: &'a GridField,
        rho: f64,
        tau: f64,
        a: f64,
    },
    /// Fixed analytic outer function `W -> (I+W)^-1 - I` applied to a small
    /// matrix field: `||u.g||_a <= c rho^-a (1+||g||_0)^(a-1) ||g||_a`.
    ChainFixed {
        g: &'a GridField,
        q: usize,
        rho: f64,
        a: f64,
    },
    /// `||g2||_{rho(1-sigma),a} <= c_a ||f2||_{rho,a}` for a <= 2
    /// (inverse-map refinement; no rho factor in this range).
    InverseMap {
        f2: &'a GridField,
        g2: &'a GridField,
        a: f64,
    },
    /// `||Xbar u||_a <= K' (||u||_{a+1} + (||dbar_X Z||_a + ||h||_{a+1})||u||_1)`,
    /// `K' = rho^-2a (1 + ||dbar_X Z||_0)`.
    XDerivative {
        state: &'a EmbeddingState,
        u: &'a GridField,
        a: f64,
    },
}

pub fn audit_rule(rule: Rule<'_>, limit: f64) -> Result<RatioReport> {
    let (kind, a, lhs, rhs_skeleton) = match rule {
        Rule::Convexity {
            u,
            v,
            rho,
            tau,
            ab1,
            ab2,
            lambda,
        } => {
            if !(0.0 < lambda && lambda < 1.0) {
                return Err(CrError::Hypothesis("convexity needs 0 < lambda < 1".into()));
            }
            let a = lambda * ab1.0 + (1.0 - lambda) * ab2.0;
            let b = lambda * ab1.1 + (1.0 - lambda) * ab2.1;
            let lhs = norm(u, a)? * norm(v, b)?;
            let rhs = rho.powf(-a)
                * tau.powf(-b)
                * (norm(u, ab1.0)? * norm(v, ab1.1)? + norm(u, ab2.0)? * norm(v, ab2.1)?);
            ("convexity", a, lhs, rhs)
        }
        Rule::Product { u, v, rho, a } => {
            let uv = u.zip(v, |x, y| x * y);
            let lhs = norm(&uv, a)?;
            let rhs = rho.powf(-a) * (norm(u, a)? * norm(v, 0.0)? + norm(u, 0.0)? * norm(v, a)?);
            ("product", a, lhs, rhs)
        }
        Rule::Chain { u, g, rho, tau, a } => {
            let comp = compose(u, g)?;
            let lhs = norm(&comp, a)?;
            let g1 = norm(g, 1.0)?;
            let ka = tau.powf(-2.0 * a) * rho.powf(-a * a) * (1.0 + g1).powf(2.0 * a);
            let rhs = ka * (norm(u, a)? + norm(u, 1.0)? * norm(g, a)?);
            ("chain", a, lhs, rhs)
        }
        Rule::ChainFixed { g, q, rho, a } => {
            if a < 1.0 {
                return Err(CrError::Hypothesis("chain_fixed stated for a >= 1".into()));
            }
            let comp = matrix_inverse_composite(g, q)?;
            let lhs = norm(&comp, a)?;
            let rhs = rho.powf(-a) * (1.0 + norm(g, 0.0)?).powf(a - 1.0) * norm(g, a)?;
            ("chain_fixed", a, lhs, rhs)
        }
        Rule::InverseMap { f2, g2, a } => {
            if a > 2.0 {
                return Err(CrError::Hypothesis(
                    "inverse-map audit without rho factor is stated for a <= 2".into(),
                ));
            }
            let lhs = norm(g2, a)?;
            let rhs = norm(f2, a)?;
            ("inverse_map", a, lhs, rhs)
        }
        Rule::XDerivative { state, u, a } => {
            let xu = state.apply_x_bar(u)?;
            let lhs = norm(&xu, a)?;
            let err = state.error_form()?;
            let d0 = norm(&err, 0.0)?;
            let da = norm(&err, a)?;
            let h = state.domain.h_field();
            let ha1 = norm(&h, a + 1.0)?;
            let kp = state.domain.rho.powf(-2.0 * a) * (1.0 + d0);
            let rhs = kp * (norm(u, a + 1.0)? + (da + ha1) * norm(u, 1.0)?);
            ("x_derivative", a, lhs, rhs)
        }
    };
    let ratio = if rhs_skeleton == 0.0 { 0.0 } else { lhs / rhs_skeleton };
    Ok(RatioReport {
        kind: kind.into(),
        a,
        lhs,
        rhs_skeleton,
        ratio,
        pass: ratio <= limit,
    })
}

/// Resample `u` along the map `g` (components of `g` are target coordinates).
pub fn compose(u: &GridField, g: &GridField) -> Result<GridField> {
    let dim = g.mask.lattice.dim;
    if g.comps != dim {
        return Err(CrError::Hypothesis(format!(
            "map field must have dim={dim} components, got {}",
            g.comps
        )));
    }
    let mut out = GridField::zeros(g.mask.clone(), u.comps);
    for mi in 0..g.mask.len() {
        let mut p = [0.0; MAX_DIM];
        for a in 0..dim {
            p[a] = g.at(a, mi).re;
        }
        for c in 0..u.comps {
            *out.at_mut(c, mi) = u.interp_quadratic(c, &p)?;
        }
    }
    Ok(out)
}

/// Pointwise `(I+W)^-1 - I` for a q x q matrix field (row-major components).
fn matrix_inverse_composite(g: &GridField, q: usize) -> Result<GridField> {
    if g.comps != q * q {
        return Err(CrError::Hypothesis("matrix field has wrong component count".into()));
    }
    let mut out = GridField::zeros(g.mask.clone(), q * q);
    for mi in 0..g.mask.len() {
        let mut m = nalgebra::DMatrix::<Complex64>::identity(q, q);
        for r in 0..q {
            for c in 0..q {
                m[(r, c)] += g.at(r * q + c, mi);
            }
        }
        let inv = m.try_inverse().ok_or_else(|| {
            CrError::Degenerate("I + W singular in chain_fixed composite".into())
        })?;
        for r in 0..q {
            for c in 0..q {
                let id = if r == c { Complex64::new(1.0, 0.0) } else { Complex64::default() };
                *out.at_mut(r * q + c, mi) = inv[(r, c)] - id;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Lattice, Mask};

    fn ball_mask(res: usize) -> std::sync::Arc<Mask> {
        let lat = Lattice::cube(3, 2.0f64.sqrt(), res);
        Mask::from_predicate(lat.clone(), |idx| {
            let p = lat.point(idx);
            p[..3].iter().map(|x| x * x).sum::<f64>() <= 1.0
        })
    }

    #[test]
    fn constant_field_norm_is_its_modulus() {
        let f = GridField::from_fn(ball_mask(17), |_| Complex64::new(-2.5, 0.0));
        for &a in &[0.0, 1.0, 1.5, 2.0] {
            let r = holder_norm(&f, a).unwrap();
            assert!((r.value - 2.5).abs() < 1e-12, "a={a} value={}", r.value);
        }
    }

    #[test]
    fn linear_field_c1_norm() {
        // u = x1 on the unit ball: sup|u| + sup|du| = 1 + 1 = 2, up to the
        // lattice not containing points with |x1| = 1 exactly.
        let f = GridField::from_fn(ball_mask(33), |p| Complex64::new(p[0], 0.0));
        let r = holder_norm(&f, 1.0).unwrap();
        assert!((r.value - 2.0).abs() < 0.05, "value={}", r.value);
        assert!((r.derivative_sups[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quadratic_field_fractional_norm_matches_brute_force() {
        // u = x1^2, a = 1.5: continuum value 1 + 2 + 2 sqrt(2) ~ 5.828.
        let f = GridField::from_fn(ball_mask(33), |p| Complex64::new(p[0] * p[0], 0.0));
        let r = holder_norm(&f, 1.5).unwrap();
        assert!(r.exhaustive);
        // independent brute-force oracle over the same lattice
        let mask = f.mask.clone();
        let lat = &mask.lattice;
        let d = f.diff(0).unwrap();
        let mut sup0: f64 = 0.0;
        let mut sup1: f64 = 0.0;
        let mut ratio: f64 = 0.0;
        let n = mask.len();
        for i in 0..n {
            sup0 = sup0.max(f.at(0, i).norm());
            sup1 = sup1.max(d.at(0, i).norm());
            let pi = lat.point(mask.points[i] as usize);
            for j in 0..i {
                let pj = lat.point(mask.points[j] as usize);
                let dist = (0..3).map(|a| (pi[a] - pj[a]).powi(2)).sum::<f64>().sqrt();
                ratio = ratio.max((d.at(0, i) - d.at(0, j)).norm() / dist.sqrt());
            }
        }
        let oracle = sup0 + sup1 + ratio;
        assert!((r.value - oracle).abs() <= 1e-10 * oracle.max(1.0));
        // the lattice sits strictly inside the ball and the edge stencils
        // are one-sided, so the discrete value undershoots by O(spacing)
        let continuum = 1.0 + 2.0 + 2.0 * 2.0f64.sqrt();
        assert!(r.value <= continuum + 1e-9, "value={}", r.value);
        assert!((r.value - continuum).abs() < 0.5, "value={}", r.value);
    }

    #[test]
    fn norm_is_homogeneous_and_triangle_exact() {
        let u = GridField::from_fn(ball_mask(17), |p| Complex64::new(p[0] * p[1], p[2]));
        let v = GridField::from_fn(ball_mask(17), |p| Complex64::new(p[2] * p[2], -p[0]));
        let a = 1.5;
        let nu = norm(&u, a).unwrap();
        assert!((norm(&u.scale(-3.0), a).unwrap() - 3.0 * nu).abs() < 1e-10 * nu);
        let sum = u.zip(&v, |x, y| x + y);
        assert!(norm(&sum, a).unwrap() <= nu + norm(&v, a).unwrap() + 1e-10);
    }

    #[test]
    fn product_rule_with_unit_factor() {
        let u = GridField::from_fn(ball_mask(17), |_| Complex64::new(1.0, 0.0));
        let v = GridField::from_fn(ball_mask(17), |p| Complex64::new(p[0] * p[2], p[1]));
        let r = audit_rule(
            Rule::Product { u: &u, v: &v, rho: 1.0, a: 1.0 },
            1.0,
        )
        .unwrap();
        assert!(r.pass, "ratio = {}", r.ratio);
    }

    #[test]
    fn chain_fixed_constant_composite_vanishes() {
        let g = GridField::zeros(ball_mask(9), 1);
        let r = audit_rule(Rule::ChainFixed { g: &g, q: 1, rho: 1.0, a: 1.0 }, 1.0).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn interpolation_of_zero_field_passes_trivially() {
        let u = GridField::zeros(ball_mask(9), 1);
        let r = audit_interpolation(&u, 1.0, 0.0, 2.0, 0.5, 1.0).unwrap();
        assert_eq!(r.ratio, 0.0);
        assert!(r.pass);
    }
}
