//! One full improvement step of the embedding: the smoothed correction
//! `F = -S_t P dbar_X Z` with its four-term error decomposition, the
//! renormalization that restores the second-order normalization at the
//! origin (Taylor strip, projected map and its contraction inverse, new
//! graph function and frame), and the driver that runs the shrinking
//! schedule `rho_{j+1} = rho_j (1 - 5 sigma_j)`, `sigma_{j+1} = sigma_j/5`,
//! `t_{j+1} = t_j^kappa`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::domain::{Domain, C_HAT_SMOOTHING};
use crate::error::{CrError, Result};
use crate::frames::EmbeddingState;
use crate::grid::{GridField, Point, MAX_DIM};
use crate::holder;
use crate::homotopy::HomotopyOperator;
use crate::smoothing::{commutator, smooth, Mollifier, SmoothFlags};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);
/// Hypothesis bound `||F||_{rho,1} <= GAMMA1 rho sigma` for renormalization.
pub const GAMMA1: f64 = 1.0 / 45.0;
const CONTRACT_TOL: f64 = 1e-12;
const CONTRACT_MAX_ITERS: usize = 100;
/// Relative homotopy defect above which a step is flagged operator-limited.
pub const DEFECT_FRACTION: f64 = 0.2;

/// First-order Taylor data of a field at the origin, from a least-squares
/// fit over the radius-3 axis star.
#[derive(Debug, Clone)]
pub struct TaylorStrip {
    /// Value at 0 per component.
    pub k0: Vec<Complex64>,
    /// Real-coordinate gradient at 0, `grad[c][axis]`.
    pub grad: Vec<Vec<Complex64>>,
}

impl TaylorStrip {
    /// Coefficient of `z^a` (holomorphic first-order term) of component c.
    pub fn k_hol(&self, c: usize, a: usize) -> Complex64 {
        (self.grad[c][2 * a] - I * self.grad[c][2 * a + 1]) / 2.0
    }

    /// Coefficient of `conj(z^a)` of component c.
    pub fn k_anti(&self, c: usize, a: usize) -> Complex64 {
        (self.grad[c][2 * a] + I * self.grad[c][2 * a + 1]) / 2.0
    }

    /// Coefficient of `x^n` of component c.
    pub fn k_n(&self, c: usize) -> Complex64 {
        *self.grad[c].last().unwrap()
    }
}

/// Least-squares affine fit at the origin over the star of lattice nodes
/// within `radius` steps along each axis.
pub fn taylor_fit_origin(f: &GridField, radius: usize) -> Result<TaylorStrip> {
    let lat = &f.mask.lattice;
    let dim = lat.dim;
    let om = lat.origin_multi();
    let mut nodes: Vec<usize> = Vec::new(); // mask indices
    let center = lat
        .index(&om)
        .and_then(|lidx| {
            let mi = f.mask.index_of[lidx];
            (mi >= 0).then_some(mi as usize)
        })
        .ok_or_else(|| CrError::OutOfDomain("origin not in mask".into()))?;
    nodes.push(center);
    for a in 0..dim {
        for s in 1..=radius as isize {
            for sgn in [-1isize, 1] {
                let mut m = om;
                m[a] += sgn * s;
                if let Some(lidx) = lat.index(&m) {
                    let mi = f.mask.index_of[lidx];
                    if mi >= 0 {
                        nodes.push(mi as usize);
                    }
                }
            }
        }
    }
    if nodes.len() < dim + 2 {
        return Err(CrError::Resolution("too few nodes for a Taylor fit at 0".into()));
    }
    let rows = nodes.len();
    let mut amat = DMatrix::<f64>::zeros(rows, dim + 1);
    for (r, &mi) in nodes.iter().enumerate() {
        let p = lat.point(f.mask.points[mi] as usize);
        amat[(r, 0)] = 1.0;
        for a in 0..dim {
            amat[(r, a + 1)] = p[a];
        }
    }
    let svd = amat.clone().svd(true, true);
    let mut k0 = Vec::with_capacity(f.comps);
    let mut grad = Vec::with_capacity(f.comps);
    for c in 0..f.comps {
        let re = DVector::<f64>::from_fn(rows, |r, _| f.at(c, nodes[r]).re);
        let im = DVector::<f64>::from_fn(rows, |r, _| f.at(c, nodes[r]).im);
        let sre = svd
            .solve(&re, 1e-12)
            .map_err(|e| CrError::Degenerate(format!("taylor fit: {e}")))?;
        let sim = svd
            .solve(&im, 1e-12)
            .map_err(|e| CrError::Degenerate(format!("taylor fit: {e}")))?;
        k0.push(Complex64::new(sre[0], sim[0]));
        grad.push((0..dim).map(|a| Complex64::new(sre[a + 1], sim[a + 1])).collect());
    }
    Ok(TaylorStrip { k0, grad })
}

fn restrict_state(state: &EmbeddingState, domain: Domain) -> Result<EmbeddingState> {
    let a = state.a.restrict(&domain.mask)?;
    let b = state.b.restrict(&domain.mask)?;
    Ok(EmbeddingState::new(domain, a, b))
}

/// Quadratic interpolation with a multilinear fallback near mask edges, and
/// a nearest-node fallback when even the multilinear cell pokes out of the
/// mask. The last resort is exact whenever `p` is a lattice node (the common
/// case: contraction iterates that barely move), O(spacing) otherwise.
fn interp_best(f: &GridField, comp: usize, p: &Point) -> Result<Complex64> {
    if let Ok(v) = f.interp_quadratic(comp, p) {
        return Ok(v);
    }
    if let Ok(v) = f.interp_linear(comp, p) {
        return Ok(v);
    }
    let lat = &f.mask.lattice;
    let om = lat.origin_multi();
    let mut m = om;
    let mut far = 0.0f64;
    for a in 0..lat.dim {
        let steps = p[a] / lat.spacing;
        m[a] = om[a] + steps.round() as isize;
        far = far.max((steps - steps.round()).abs());
    }
    // only rescue points essentially on a node: the substitution error is
    // |p - node| |grad f|, so a tight radius keeps it below interpolation
    // accuracy instead of injecting node-scale noise into the result
    if far > 0.15 {
        return Err(CrError::OutOfDomain("interpolation point has no usable cell".into()));
    }
    let lidx = lat
        .index(&m)
        .ok_or_else(|| CrError::OutOfDomain("interpolation point outside lattice".into()))?;
    let mi = f.mask.index_of[lidx];
    if mi < 0 {
        return Err(CrError::OutOfDomain("interpolation point outside mask".into()));
    }
    Ok(f.at(comp, mi as usize))
}

/// Result of the alteration `F = -S_t P dbar_X Z` together with the
/// four-term decomposition of the altered error.
pub struct AlterOutcome {
    /// The correction, n components, on the sigma-shrunk mask.
    pub f: GridField,
    /// The input state restricted to `D_{rho(1-sigma)}`.
    pub shrunk: EmbeddingState,
    /// I1..I4 as (0,1)-forms per Z-component (layout a*n + j).
    pub i_terms: [GridField; 4],
    /// Max over Z-components of the relative homotopy defect.
    pub defect: f64,
    /// sup |I1+I2+I3+I4 - dbar_X (Z+F)| on the shrunk mask.
    pub sum_residual: f64,
    /// sup |dbar_X Z| on the full mask (reference scale for the residual).
    pub phi_sup: f64,
    pub flags: SmoothFlags,
    /// Defect exceeds DEFECT_FRACTION: divergence past this point says more
    /// about the model solution operator than about the step algebra.
    pub operator_limited: bool,
}

/// One alteration on `D_rho`, output on `D_{rho(1-sigma)}` (the smoothing
/// margin consumes the sigma-collar; hence sigma is an explicit argument).
pub fn alter(
    state: &EmbeddingState,
    t: f64,
    sigma: f64,
    op: &HomotopyOperator,
    moll: &Mollifier,
) -> Result<AlterOutcome> {
    alter_impl(state, t, sigma, op, moll, true, &mut Vec::new())
}

fn alter_impl(
    state: &EmbeddingState,
    t: f64,
    sigma: f64,
    op: &HomotopyOperator,
    moll: &Mollifier,
    strict: bool,
    flags_out: &mut Vec<String>,
) -> Result<AlterOutcome> {
    let n = state.n();
    let m = n - 1;
    let rho = state.domain.rho;
    let mut gate = |ok: bool, msg: String| -> Result<()> {
        if ok {
            Ok(())
        } else if strict {
            Err(CrError::Hypothesis(msg))
        } else {
            flags_out.push(msg);
            Ok(())
        }
    };
    if !(t > 0.0) {
        return Err(CrError::Hypothesis("smoothing scale must be positive".into()));
    }
    // geometric margin: the kernel support t*support_half must stay within
    // the collar rho*sigma/c_hat around the shrunk domain
    gate(
        t * moll.support_half <= rho * sigma / C_HAT_SMOOTHING,
        format!(
            "smoothing margin violated: t = {t:.3e} vs rho sigma / c_hat = {:.3e}",
            rho * sigma / C_HAT_SMOOTHING
        ),
    )?;
    let phi = state.error_form()?;
    let phi_sup = phi.sup();
    let phi_c1 = holder::norm(&phi, 1.0)?;
    gate(phi_c1 <= 0.5, format!("||dbar_X Z||_1 = {phi_c1:.3e} > 1/2"))?;
    let u = op.solve_p_multi(&phi, n)?;

    let d1 = state.domain.shrunk(sigma);
    let out_mask = d1.mask.clone();
    let shrunk = restrict_state(state, d1)?;

    let (su, flags) = smooth(&u, t, moll, &out_mask)?;
    let f = su.scale(-1.0);

    // I1 = (I - S_t) dbar_X Z
    let (sphi, _) = smooth(&phi, t, moll, &out_mask)?;
    let i1 = phi.restrict(&out_mask)?.zip(&sphi, |a, b| a - b);

    // I2 = (dbar_M - dbar_X) S_t P phi = (dbar_X - dbar_M) F
    let fc1 = shrunk.frame_coeffs()?;
    let xf = shrunk.apply_x_bar_with(&fc1, &f)?;
    let mf = fc1.apply_y_bar(&f)?;
    let i2 = xf.zip(&mf, |a, b| a - b);

    // I3 = [S_t, dbar_M] P phi, per direction via the vertical coefficient
    let fc_full = state.frame_coeffs()?;
    let mut i3 = GridField::zeros(out_mask.clone(), m * n);
    for al in 0..m {
        let w = fc_full.c.component(al).map(|v| v.conj());
        for j in 0..n {
            let cj = commutator(&u.component(j), &w, t, moll, &out_mask)?;
            i3.comp_mut(al * n + j).copy_from_slice(cj.comp(0));
        }
    }

    // I4 = S_t Q (dbar_M - dbar_X) dbar_X Z; identically zero when n = 2
    let i4 = if m >= 2 {
        let psi_m = state.dbar_m_1form(&phi)?;
        let psi_x = state.dbar_x_1form(&phi)?;
        let psi = psi_m.zip(&psi_x, |a, b| a - b); // pairs * n comps
        let pairs = m * (m - 1) / 2;
        let mut qphi = GridField::zeros(state.domain.mask.clone(), m * n);
        for j in 0..n {
            let mut slot = GridField::zeros(state.domain.mask.clone(), pairs);
            for p in 0..pairs {
                slot.comp_mut(p).copy_from_slice(psi.comp(p * n + j));
            }
            let qj = op.solve_q(&slot)?;
            for al in 0..m {
                qphi.comp_mut(al * n + j).copy_from_slice(qj.comp(al));
            }
        }
        smooth(&qphi, t, moll, &out_mask)?.0
    } else {
        GridField::zeros(out_mask.clone(), m * n)
    };

    // measured homotopy defect, worst Z-component
    let mut defect: f64 = 0.0;
    for j in 0..n {
        let mut slot = GridField::zeros(state.domain.mask.clone(), m);
        for al in 0..m {
            slot.comp_mut(al).copy_from_slice(phi.comp(al * n + j));
        }
        if slot.sup() > 0.0 {
            defect = defect.max(op.homotopy_defect(state, &slot)?);
        }
    }

    // identity audit: sum of the four terms against dbar_X (Z + F)
    let estar = phi.restrict(&out_mask)?.zip(&xf, |a, b| a + b);
    let sum = i1
        .zip(&i2, |a, b| a + b)
        .zip(&i3, |a, b| a + b)
        .zip(&i4, |a, b| a + b);
    let sum_residual = sum.zip(&estar, |a, b| a - b).sup();

    Ok(AlterOutcome {
        f,
        shrunk,
        i_terms: [i1, i2, i3, i4],
        defect,
        sum_residual,
        phi_sup,
        flags,
        operator_limited: defect > DEFECT_FRACTION,
    })
}

/// The projected map and its contraction inverse.
#[derive(Debug, Clone)]
pub struct MapPair {
    /// `f = I + f_2`: complex packing, component a < n-1 displaces the pair
    /// (x_{2a}, x_{2a+1}), the last (real) component the x^n axis. On the
    /// source mask.
    pub f2: GridField,
    /// `g = I + g_2`, same packing, on the target mask.
    pub g2: GridField,
    pub rho_source: f64,
    pub rho_target: f64,
    /// sup |f(g(x)) - x| over the target mask.
    pub roundtrip: f64,
}

fn displacement(f2: &GridField, x: &Point) -> Result<[f64; MAX_DIM]> {
    let n = f2.comps;
    let mut d = [0.0f64; MAX_DIM];
    for c in 0..n - 1 {
        let v = interp_best(f2, c, x)?;
        d[2 * c] = v.re;
        d[2 * c + 1] = v.im;
    }
    d[2 * n - 2] = interp_best(f2, n - 1, x)?.re;
    Ok(d)
}

/// Fixed point of `x -> x_star - f_2(x)`; None if the iterate leaves the
/// region where f_2 is known or fails to settle.
fn solve_g(f2: &GridField, x_star: &Point, dim: usize) -> Option<Point> {
    let mut x = *x_star;
    for _ in 0..CONTRACT_MAX_ITERS {
        let d = displacement(f2, &x).ok()?;
        let mut nx = *x_star;
        let mut delta: f64 = 0.0;
        for a in 0..dim {
            nx[a] -= d[a];
            delta = delta.max((nx[a] - x[a]).abs());
        }
        x = nx;
        if delta < CONTRACT_TOL {
            return Some(x);
        }
    }
    None
}

/// Invert `f = I + f_2` onto the sigma-shrunk domain by contraction.
pub fn invert_map(f2: &GridField, dom: &Domain, sigma: f64) -> Result<MapPair> {
    let nrm1 = holder::norm(f2, 1.0)?;
    if nrm1 > sigma / 5.0 {
        return Err(CrError::Hypothesis(format!(
            "||f_2||_1 = {nrm1:.3e} > sigma/5 = {:.3e}",
            sigma / 5.0
        )));
    }
    let dim = dom.dim();
    let target = dom.shrunk(sigma);
    let mask = target.mask.clone();
    let sols: Vec<Option<Point>> = (0..mask.len())
        .into_par_iter()
        .map(|mi| solve_g(f2, &mask.lattice.point(mask.points[mi] as usize), dim))
        .collect();
    let mut g2 = GridField::zeros(mask.clone(), f2.comps);
    let mut roundtrip: f64 = 0.0;
    for (mi, sol) in sols.iter().enumerate() {
        let x_star = mask.lattice.point(mask.points[mi] as usize);
        let g = sol.ok_or_else(|| {
            CrError::SolverDiverged("contraction for the inverse map failed".into())
        })?;
        for c in 0..f2.comps - 1 {
            *g2.at_mut(c, mi) =
                Complex64::new(g[2 * c] - x_star[2 * c], g[2 * c + 1] - x_star[2 * c + 1]);
        }
        *g2.at_mut(f2.comps - 1, mi) = Complex64::new(g[dim - 1] - x_star[dim - 1], 0.0);
        if let Ok(d) = displacement(f2, &g) {
            let mut r: f64 = 0.0;
            for a in 0..dim {
                r = r.max((g[a] + d[a] - x_star[a]).abs());
            }
            roundtrip = roundtrip.max(r);
        }
    }
    Ok(MapPair {
        f2: f2.clone(),
        g2,
        rho_source: dom.rho,
        rho_target: target.rho,
        roundtrip,
    })
}

/// Per-step record; everything a trajectory consumer needs, flattened to
/// plain numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub j: usize,
    pub rho: f64,
    pub sigma: f64,
    pub log_t: f64,
    /// sup norms of I1..I4.
    pub i_sup: [f64; 4],
    pub defect: f64,
    pub sum_residual: f64,
    /// |K_0| and |dF(0)| per component (Taylor strip magnitudes).
    pub k0_mag: Vec<f64>,
    pub khat_mag: Vec<f64>,
    /// max |dbar_{X^1} Z_1| at the origin after renormalization.
    pub error_origin: f64,
    /// D_{rho(1-2 sigma)}(h_1) contained in D_{rho(1-sigma)}(h) as lattice sets.
    pub nesting: bool,
    pub roundtrip: f64,
    /// ||h_1 - h||_2 on the new mask.
    pub h_increment_c2: f64,
    /// delta(a) = ||dbar_X Z||_a after the step, a in {0, 1}.
    pub delta_after: [f64; 2],
    /// N(a) = 1 + ||h||_a after the step, a in {2, 3}.
    pub n_after: [f64; 2],
    pub operator_limited: bool,
    pub grid_limited: bool,
    /// Inductive-hypothesis checks that failed (recorded, not fatal, when the
    /// driver runs in non-strict mode).
    pub hypothesis_flags: Vec<String>,
}

/// Renormalization outcome: the new state plus the map pair and the filled
/// diagnostic record (schedule fields j, sigma, t left for the driver).
pub struct RenormOutcome {
    pub state: EmbeddingState,
    pub pair: MapPair,
    pub taylor: TaylorStrip,
    pub error_origin: f64,
    pub nesting: bool,
    pub h_increment_c2: f64,
    /// Fitted constants ||g_2||_a / ||f_2||_a for a in {0, 1, 2}.
    pub g_audit: Vec<(f64, f64)>,
}

/// Restore the origin normalization: subtract the Taylor strip of F, project
/// to the hyperplane, invert, and rebuild graph, error, and frame. The new
/// state lives on `D_{rho(1-2 sigma)}(h_1)`.
pub fn renormalize(state: &EmbeddingState, f: &GridField, sigma: f64) -> Result<RenormOutcome> {
    renormalize_impl(state, f, sigma, true, &mut Vec::new())
}

fn renormalize_impl(
    state: &EmbeddingState,
    f: &GridField,
    sigma: f64,
    strict: bool,
    flags_out: &mut Vec<String>,
) -> Result<RenormOutcome> {
    let n = state.n();
    let m = n - 1;
    let d = state.domain.dim();
    let rho = state.domain.rho;
    let lat = state.domain.lattice.clone();
    if f.comps != n {
        return Err(CrError::Degenerate("correction must have n components".into()));
    }
    let f_full = if Arc::ptr_eq(&f.mask, &state.domain.mask) {
        f.clone()
    } else {
        return Err(CrError::Degenerate(
            "correction and state live on different masks".into(),
        ));
    };
    let mut gate = |ok: bool, msg: String| -> Result<()> {
        if ok {
            Ok(())
        } else if strict {
            Err(CrError::Hypothesis(msg))
        } else {
            flags_out.push(msg);
            Ok(())
        }
    };
    let f_c1 = holder::norm(&f_full, 1.0)?;
    gate(
        f_c1 <= GAMMA1 * rho * sigma,
        format!(
            "||F||_1 = {f_c1:.3e} > gamma1 rho sigma = {:.3e}",
            GAMMA1 * rho * sigma
        ),
    )?;

    let taylor = taylor_fit_origin(&f_full, 3).map_err(|e| { eprintln!("TRACE renorm taylor: {e}"); e })?;
    let mask = state.domain.mask.clone();

    // y^n = |z'|^2 + h on the graph
    let mut yn = GridField::zeros(mask.clone(), 1);
    for mi in 0..mask.len() {
        let lidx = mask.points[mi] as usize;
        let p = lat.point(lidx);
        let mut s = state.domain.h[lidx];
        for a in 0..d - 1 {
            s += p[a] * p[a];
        }
        yn.vals[mi] = Complex64::new(s, 0.0);
    }

    // F_2 = F - K_0 - dF(0).x, then the projected displacement f_2 and the
    // graph increment h_hat
    let mut f2 = GridField::zeros(mask.clone(), n);
    let mut hph = GridField::zeros(mask.clone(), 1); // h + h_hat
    let knn = taylor.k_n(n - 1);
    for mi in 0..mask.len() {
        let lidx = mask.points[mi] as usize;
        let p = lat.point(lidx);
        let y = yn.vals[mi].re;
        for c in 0..n {
            let mut v = f_full.at(c, mi) - taylor.k0[c];
            for a in 0..d {
                v -= taylor.grad[c][a] * p[a];
            }
            // v is now F_2 of component c
            if c < m {
                *f2.at_mut(c, mi) = v - I * taylor.k_n(c) * y;
            } else {
                *f2.at_mut(c, mi) = Complex64::new(v.re + knn.im * y, 0.0);
                let h_hat = v.im - knn.re * y;
                hph.vals[mi] = Complex64::new(state.domain.h[lidx] + h_hat, 0.0);
            }
        }
    }
    let f2_c1 = holder::norm(&f2, 1.0)?;
    gate(
        f2_c1 <= sigma / 5.0,
        format!("||f_2||_1 = {f2_c1:.3e} > sigma/5 = {:.3e}", sigma / 5.0),
    )?;

    // W: the renormalized error numerator before composition.
    // conj(X)(Z + F) is assembled as the algebraic error form (exact for the
    // graph embedding) plus the differenced conj(X) F: differencing Z itself
    // would leave O(spacing) one-sided junk at every node near the mask
    // boundary, which dominates on coarse high-dimensional grids
    let e = state.error_form()?;
    let xbf = state.apply_x_bar(&f_full)?;
    let xbzf = e.zip(&xbf, |a, b| a + b);
    let mut w = GridField::zeros(mask.clone(), m * n);
    for be in 0..m {
        for j in 0..n {
            let w0 = xbzf.at_origin(be * n + j).map_err(|e| { eprintln!("TRACE renorm w0: {e}"); e })?;
            for mi in 0..mask.len() {
                let mut v = xbzf.at(be * n + j, mi) - w0;
                for al in 0..m {
                    v -= taylor.k_hol(j, al) * e.at(be * n + al, mi);
                }
                v -= taylor.k_n(j) * e.at(be * n + n - 1, mi);
                *w.at_mut(be * n + j, mi) = v;
            }
        }
    }

    // frame-correction matrix C and the composed numerator conj(C) W
    let xf2 = state.apply_x(&f2)?; // X_a f_2^b at a*n + b
    let mut cw = GridField::zeros(mask.clone(), m * n);
    for mi in 0..mask.len() {
        let mut mm = DMatrix::<Complex64>::zeros(m, m);
        let mut xq = DMatrix::<Complex64>::zeros(m, m);
        for ga in 0..m {
            for be in 0..m {
                let v = xf2.at(ga * n + be, mi);
                xq[(ga, be)] = v;
                mm[(ga, be)] = v + if ga == be { ONE } else { Complex64::default() };
            }
        }
        let inv = mm
            .try_inverse()
            .ok_or_else(|| CrError::Degenerate("I + X f_2 singular".into()))?;
        let c = DMatrix::<Complex64>::identity(m, m) - &xq * inv;
        for al in 0..m {
            for j in 0..n {
                let mut acc = Complex64::default();
                for be in 0..m {
                    acc += c[(al, be)].conj() * w.at(be * n + j, mi);
                }
                *cw.at_mut(al * n + j, mi) = acc;
            }
        }
    }

    // per candidate node: inverse map, new graph value, composed error
    let rho1 = rho * (1.0 - 2.0 * sigma);
    let npts = mask.len();
    struct NodeOut {
        lidx: usize,
        h1: f64,
        evals: Vec<Complex64>,
        g2: Vec<Complex64>,
        roundtrip: f64,
    }
    let nodes: Vec<Option<NodeOut>> = (0..npts)
        .into_par_iter()
        .map(|mi| {
            let lidx = mask.points[mi] as usize;
            let x_star = lat.point(lidx);
            let g = solve_g(&f2, &x_star, d)?;
            let hg = interp_best(&hph, 0, &g).ok()?.re;
            let mut g2v = Vec::with_capacity(n);
            let mut quad = 0.0;
            for c in 0..m {
                let gc = Complex64::new(g[2 * c] - x_star[2 * c], g[2 * c + 1] - x_star[2 * c + 1]);
                let zc = Complex64::new(x_star[2 * c], x_star[2 * c + 1]);
                quad += 2.0 * (zc * gc.conj()).re + gc.norm_sqr();
                g2v.push(gc);
            }
            g2v.push(Complex64::new(g[d - 1] - x_star[d - 1], 0.0));
            let h1 = hg + quad;
            let mut evals = Vec::with_capacity(m * n);
            for c in 0..m * n {
                evals.push(interp_best(&cw, c, &g).ok()?);
            }
            let mut rt: f64 = 0.0;
            if let Ok(dv) = displacement(&f2, &g) {
                for a in 0..d {
                    rt = rt.max((g[a] + dv[a] - x_star[a]).abs());
                }
            }
            Some(NodeOut {
                lidx,
                h1,
                evals,
                g2: g2v,
                roundtrip: rt,
            })
        })
        .collect();

    let mut h1_vec = vec![f64::NAN; lat.len()];
    for node in nodes.iter().flatten() {
        h1_vec[node.lidx] = node.h1;
    }
    {
        let fin: Vec<f64> = h1_vec.iter().copied().filter(|v| v.is_finite()).collect();
        let mn = fin.iter().copied().fold(f64::INFINITY, f64::min);
        let mx = fin.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        eprintln!("TRACE h1: finite={} of {} min={mn:.3e} max={mx:.3e} rho1={rho1:.4}", fin.len(), h1_vec.len());
    }
    let new_domain = Domain::from_h(n, rho1, lat.clone(), h1_vec);
    let shrunk_mask = state.domain.shrunk(sigma).mask.clone();
    let nesting = shrunk_mask.contains_mask(&new_domain.mask);

    let new_mask = new_domain.mask.clone();
    let mut e1 = GridField::zeros(new_mask.clone(), m * n);
    let mut g2 = GridField::zeros(new_mask.clone(), n);
    let mut roundtrip: f64 = 0.0;
    let mut per_lidx: Vec<Option<&NodeOut>> = vec![None; lat.len()];
    for node in nodes.iter().flatten() {
        per_lidx[node.lidx] = Some(node);
    }
    for mi in 0..new_mask.len() {
        let node = per_lidx[new_mask.points[mi] as usize]
            .ok_or_else(|| CrError::Degenerate("new mask node without map data".into()))?;
        for c in 0..m * n {
            *e1.at_mut(c, mi) = node.evals[c];
        }
        for c in 0..n {
            *g2.at_mut(c, mi) = node.g2[c];
        }
        roundtrip = roundtrip.max(node.roundtrip);
    }

    let new_state = EmbeddingState::from_error(new_domain, &e1)?;
    {
        let ef = new_state.error_form()?;
        eprintln!(
            "TRACE renorm e1.sup={:.3e} cw.sup={:.3e} re-derived error sup={:.3e} c1={:.3e}",
            e1.sup(), cw.sup(), ef.sup(), holder::norm(&ef, 1.0)?
        );
    }

    let mut error_origin: f64 = 0.0;
    eprintln!("TRACE renorm new_mask={} ", new_mask.len());
    for c in 0..m * n {
        error_origin = error_origin.max(e1.at_origin(c).map_err(|e| { eprintln!("TRACE renorm e1 origin: {e}"); e })?.norm());
    }

    // ||h_1 - h||_2 on the new mask
    let mut hdiff = GridField::zeros(new_mask.clone(), 1);
    for mi in 0..new_mask.len() {
        let lidx = new_mask.points[mi] as usize;
        hdiff.vals[mi] = Complex64::new(new_state.domain.h[lidx] - state.domain.h[lidx], 0.0);
    }
    let h_increment_c2 = holder::norm(&hdiff, 2.0)?;

    let mut g_audit = Vec::new();
    for a in [0.0, 1.0, 2.0] {
        let fa = holder::norm(&f2, a)?;
        let ga = holder::norm(&g2, a)?;
        if fa > 1e-300 {
            g_audit.push((a, ga / fa));
        }
    }

    let pair = MapPair {
        f2,
        g2,
        rho_source: rho,
        rho_target: rho1,
        roundtrip,
    };
    Ok(RenormOutcome {
        state: new_state,
        pair,
        taylor,
        error_origin,
        nesting,
        h_increment_c2,
        g_audit,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub sigma0: f64,
    pub kappa: f64,
    pub t0: f64,
    pub max_steps: usize,
    /// When true, a failed inductive hypothesis halts the run; when false it
    /// is recorded in the step flags and the run continues (the gates are
    /// sized for the continuum constants and are unreachable on coarse
    /// grids, where the collar rho*sigma is thinner than a lattice cell).
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sigma0: 1.0 / 25.0,
            kappa: 1.2,
            t0: 0.3,
            max_steps: 3,
            strict: true,
        }
    }
}

pub struct RunOutcome {
    pub trajectory: Vec<(EmbeddingState, StepDiagnostics)>,
    /// Why the run stopped: "completed", "grid-limited", or the hypothesis
    /// that failed.
    pub halt: String,
}

/// Drive the shrinking schedule from an initial normalized state.
pub fn run_sequence(
    initial: &EmbeddingState,
    cfg: &RunConfig,
    moll: &Mollifier,
) -> Result<RunOutcome> {
    initial.normalize_initial(10.0 * initial.domain.spacing().powi(2).max(1e-8))?;
    let mut state = initial.clone();
    let mut trajectory = Vec::new();
    let mut sigma = cfg.sigma0;
    let mut t = cfg.t0;
    let mut halt = "completed".to_string();
    for j in 0..cfg.max_steps {
        let rho = state.domain.rho;
        let spacing = state.domain.spacing();
        let tj = t;
        if tj < 0.01 * spacing {
            halt = "grid-limited".into();
            break;
        }
        // under-resolved smoothing is a flag, not a stop: the discrete S_t
        // degrades to the identity and the step becomes a plain Newton step
        let grid_limited = tj * moll.support_half < 2.0 * spacing;
        let op = HomotopyOperator::build(&state)?;
        let step = (|| -> Result<(EmbeddingState, StepDiagnostics)> {
            let mut hyp_flags = Vec::new();
            let alt = alter_impl(&state, tj, sigma, &op, moll, cfg.strict, &mut hyp_flags)?;
            eprintln!(
                "TRACE j={j} alter defect={:.3e} phi_sup={:.3e} f.sup={:.3e} f.c1={:.3e} flags={:?}",
                alt.defect, alt.phi_sup, alt.f.sup(), holder::norm(&alt.f, 1.0)?, hyp_flags
            );
            let ren = renormalize_impl(&alt.shrunk, &alt.f, sigma, cfg.strict, &mut hyp_flags)?;
            eprintln!("TRACE j={j} renorm ok new_mask={} origin_err={:.2e}", ren.state.domain.mask.len(), ren.error_origin);
            // final shrink of the step: rho_{j+1} = rho_j (1 - 5 sigma_j)
            let rho_next = rho * (1.0 - 5.0 * sigma);
            let next_domain = ren.state.domain.with_rho(rho_next);
            let next = restrict_state(&ren.state, next_domain)?;
            let e_after = next.error_form()?;
            let h_after = next.domain.h_field();
            let diag = StepDiagnostics {
                j,
                rho,
                sigma,
                log_t: tj.ln(),
                i_sup: [
                    alt.i_terms[0].sup(),
                    alt.i_terms[1].sup(),
                    alt.i_terms[2].sup(),
                    alt.i_terms[3].sup(),
                ],
                defect: alt.defect,
                sum_residual: alt.sum_residual,
                k0_mag: ren.taylor.k0.iter().map(|v| v.norm()).collect(),
                khat_mag: ren
                    .taylor
                    .grad
                    .iter()
                    .map(|g| g.iter().map(|v| v.norm()).fold(0.0, f64::max))
                    .collect(),
                error_origin: ren.error_origin,
                nesting: ren.nesting,
                roundtrip: ren.pair.roundtrip,
                h_increment_c2: ren.h_increment_c2,
                delta_after: [holder::norm(&e_after, 0.0)?, holder::norm(&e_after, 1.0)?],
                n_after: [
                    1.0 + holder::norm(&h_after, 2.0)?,
                    1.0 + holder::norm(&h_after, 3.0)?,
                ],
                operator_limited: alt.operator_limited,
                grid_limited,
                hypothesis_flags: hyp_flags,
            };
            Ok((next, diag))
        })();
        match step {
            Ok((next, diag)) => {
                trajectory.push((next.clone(), diag));
                state = next;
            }
            Err(CrError::Hypothesis(msg)) => {
                halt = format!("hypothesis failed at step {j}: {msg}");
                break;
            }
            // a collapsed or origin-less renormalized mask is the grid
            // running out of nodes, not a caller error: keep the trajectory
            Err(CrError::OutOfDomain(msg)) | Err(CrError::Resolution(msg)) => {
                halt = format!("resolution limit at step {j}: {msg}");
                break;
            }
            Err(e) => return Err(e),
        }
        sigma /= 5.0;
        t = t.powf(cfg.kappa);
    }
    Ok(RunOutcome { trajectory, halt })
}
