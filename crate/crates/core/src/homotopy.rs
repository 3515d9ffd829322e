//! Model homotopy operator: a ridge-regularized least-squares inverse of the
//! discrete tangential CR operator, standing in for the integral-kernel
//! solution operators. It supplies `P` ((0,1)-form -> function) and `Q`
//! ((0,2)-form -> (0,1)-form) with the homotopy identity
//! `phi = dbar_M P phi + Q dbar_M phi` verified a posteriori through the
//! measured defect, not assumed.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::EstimateConstants;
use crate::error::{CrError, Result};
use crate::frames::{EmbeddingState, FrameCoeffs};
use crate::grid::GridField;
use crate::holder;

/// Relative ridge weight: lambda = RIDGE_REL * (max row norm)^2.
pub const RIDGE_REL: f64 = 1e-8;
/// CGNR relative residual target.
pub const CG_TOL: f64 = 1e-8;
pub const CG_MAX_ITERS: usize = 20_000;

/// Compressed sparse rows over complex entries.
#[derive(Debug, Clone)]
pub struct Csr {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<Complex64>,
}

impl Csr {
    pub fn from_rows(cols: usize, rows: Vec<Vec<(u32, Complex64)>>) -> Csr {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0usize);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(u32, Complex64)> = Vec::with_capacity(row.len());
            for (j, v) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            for (j, v) in merged {
                indices.push(j);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Csr {
            rows: indptr.len() - 1,
            cols,
            indptr,
            indices,
            data,
        }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.rows)
            .into_par_iter()
            .map(|i| {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in self.indptr[i]..self.indptr[i + 1] {
                    acc += self.data[k] * x[self.indices[k] as usize];
                }
                acc
            })
            .collect()
    }

    /// Conjugate transpose, as CSR.
    pub fn adjoint(&self) -> Csr {
        let mut counts = vec![0usize; self.cols];
        for &j in &self.indices {
            counts[j as usize] += 1;
        }
        let mut indptr = vec![0usize; self.cols + 1];
        for j in 0..self.cols {
            indptr[j + 1] = indptr[j] + counts[j];
        }
        let nnz = self.data.len();
        let mut indices = vec![0u32; nnz];
        let mut data = vec![Complex64::new(0.0, 0.0); nnz];
        let mut next = indptr.clone();
        for i in 0..self.rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k] as usize;
                let pos = next[j];
                next[j] += 1;
                indices[pos] = i as u32;
                data[pos] = self.data[k].conj();
            }
        }
        Csr {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            data,
        }
    }

    pub fn max_row_norm2(&self) -> f64 {
        (0..self.rows)
            .map(|i| {
                self.data[self.indptr[i]..self.indptr[i + 1]]
                    .iter()
                    .map(|v| v.norm_sqr())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub ridge: f64,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn nrm2(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// CGNR on the ridge normal equations `(A^H A + lambda I) x = A^H b`.
pub fn cgnr(a: &Csr, at: &Csr, b: &[Complex64], ridge: f64) -> Result<(Vec<Complex64>, SolveStats)> {
    let n = a.cols;
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut r = b.to_vec(); // b - A x
    let mut s = at.matvec(&r); // A^H r - lambda x (x = 0)
    let mut p = s.clone();
    let mut gamma = dot(&s, &s).re;
    let s0 = gamma.sqrt().max(f64::MIN_POSITIVE);
    let bnorm = nrm2(b).max(f64::MIN_POSITIVE);
    let mut iters = 0;
    while iters < CG_MAX_ITERS {
        if gamma.sqrt() <= CG_TOL * s0 {
            break;
        }
        let q = a.matvec(&p);
        let denom = dot(&q, &q).re + ridge * dot(&p, &p).re;
        if denom <= 0.0 || !denom.is_finite() {
            return Err(CrError::SolverDiverged(format!(
                "cgnr curvature {denom:.3e} at iteration {iters}"
            )));
        }
        let alpha = gamma / denom;
        for i in 0..n {
            x[i] += alpha * p[i];
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        s = at.matvec(&r);
        for i in 0..n {
            s[i] -= ridge * x[i];
        }
        let gnew = dot(&s, &s).re;
        let beta = gnew / gamma;
        gamma = gnew;
        for i in 0..n {
            p[i] = s[i] + beta * p[i];
        }
        iters += 1;
    }
    if !gamma.is_finite() {
        return Err(CrError::SolverDiverged("cgnr produced non-finite residual".into()));
    }
    let rel = nrm2(&r) / bnorm;
    Ok((
        x,
        SolveStats {
            iterations: iters,
            relative_residual: rel,
            ridge,
        },
    ))
}

/// First-difference stencil of one axis at a mask point, as (column, weight)
/// pairs: central where possible, one-sided at the mask edge.
fn axis_stencil(mask: &crate::grid::Mask, mi: usize, axis: usize, delta: f64) -> Result<Vec<(u32, f64)>> {
    let fwd = mask.neighbor(mi, axis, 1);
    let bwd = mask.neighbor(mi, axis, -1);
    Ok(match (bwd, fwd) {
        (Some(b), Some(f)) => vec![
            (f as u32, 0.5 / delta),
            (b as u32, -0.5 / delta),
        ],
        (None, Some(f)) => vec![(f as u32, 1.0 / delta), (mi as u32, -1.0 / delta)],
        (Some(b), None) => vec![(mi as u32, 1.0 / delta), (b as u32, -1.0 / delta)],
        (None, None) => {
            return Err(CrError::Resolution(format!(
                "mask point has no neighbor along axis {axis}"
            )))
        }
    })
}

pub struct HomotopyOperator {
    /// Discrete dbar_M on scalars: (n-1) N rows (alpha-major), N columns.
    pub d0: Csr,
    d0t: Csr,
    /// Discrete dbar_M from (0,1)- to (0,2)-forms; None when n = 2.
    pub d1: Option<Csr>,
    d1t: Option<Csr>,
    pub ridge0: f64,
    pub ridge1: f64,
    /// n <= 3: the model solver is exercised outside the regime where the
    /// integral-kernel operators it mimics are available.
    pub plumbing_mode: bool,
    pub n: usize,
    pub npts: usize,
    pub mask: std::sync::Arc<crate::grid::Mask>,
    pub last_stats: std::sync::Mutex<Vec<SolveStats>>,
}

impl HomotopyOperator {
    pub fn build(state: &EmbeddingState) -> Result<HomotopyOperator> {
        let n = state.n();
        let m = n - 1;
        let mask = state.domain.mask.clone();
        let npts = mask.len();
        let delta = state.domain.spacing();
        let dim = state.domain.dim();
        let fc = state.frame_coeffs()?;

        // row (alpha, i): (d_{2a} + i d_{2a+1})/2 + conj(c_a)(i) d_n
        let mut rows: Vec<Vec<(u32, Complex64)>> = Vec::with_capacity(m * npts);
        for al in 0..m {
            for mi in 0..npts {
                rows.push(ybar_row(&fc, &mask, mi, al, delta, dim)?);
            }
        }
        let d0 = Csr::from_rows(npts, rows);
        let d0t = d0.adjoint();
        let ridge0 = RIDGE_REL * d0.max_row_norm2();

        let (d1, d1t, ridge1) = if m >= 2 {
            // row (pair (a<b), i): Y_abar applied to slot b minus Y_bbar
            // applied to slot a; columns are (0,1)-form unknowns beta*N + j
            let pairs = m * (m - 1) / 2;
            let mut rows1: Vec<Vec<(u32, Complex64)>> = Vec::with_capacity(pairs * npts);
            for al in 0..m {
                for be in al + 1..m {
                    for mi in 0..npts {
                        let mut row = Vec::new();
                        for (j, v) in ybar_row(&fc, &mask, mi, al, delta, dim)? {
                            row.push((be as u32 * npts as u32 + j, v));
                        }
                        for (j, v) in ybar_row(&fc, &mask, mi, be, delta, dim)? {
                            row.push((al as u32 * npts as u32 + j, -v));
                        }
                        rows1.push(row);
                    }
                }
            }
            let d1 = Csr::from_rows(m * npts, rows1);
            let d1t = d1.adjoint();
            let ridge1 = RIDGE_REL * d1.max_row_norm2();
            (Some(d1), Some(d1t), ridge1)
        } else {
            (None, None, 0.0)
        };

        Ok(HomotopyOperator {
            d0,
            d0t,
            d1,
            d1t,
            ridge0,
            ridge1,
            plumbing_mode: n <= 3,
            n,
            npts,
            mask,
            last_stats: std::sync::Mutex::new(Vec::new()),
        })
    }

    fn record(&self, s: SolveStats) {
        self.last_stats.lock().unwrap().push(s);
    }

    pub fn take_stats(&self) -> Vec<SolveStats> {
        std::mem::take(&mut *self.last_stats.lock().unwrap())
    }

    /// `P phi`: ridge least-squares preimage of a scalar-valued (0,1)-form
    /// ((n-1) components) under the discrete dbar_M.
    pub fn solve_p(&self, phi: &GridField) -> Result<GridField> {
        let m = self.n - 1;
        if phi.comps != m || phi.mask.len() != self.npts {
            return Err(CrError::Degenerate("solve_p expects an (n-1)-component form".into()));
        }
        let (x, stats) = cgnr(&self.d0, &self.d0t, &phi.vals, self.ridge0)?;
        self.record(stats);
        let mut out = GridField::zeros(phi.mask.clone(), 1);
        out.vals = x;
        Ok(out)
    }

    /// `P` applied slotwise to a vector-valued (0,1)-form with layout
    /// alpha * q + c (as produced by `apply_x_bar` / `error_form`).
    pub fn solve_p_multi(&self, phi: &GridField, q: usize) -> Result<GridField> {
        let m = self.n - 1;
        if phi.comps != m * q {
            return Err(CrError::Degenerate("solve_p_multi arity mismatch".into()));
        }
        let mut out = GridField::zeros(phi.mask.clone(), q);
        for c in 0..q {
            let mut slot = GridField::zeros(phi.mask.clone(), m);
            for al in 0..m {
                let src = phi.comp(al * q + c);
                slot.comp_mut(al).copy_from_slice(src);
            }
            let u = self.solve_p(&slot)?;
            out.comp_mut(c).copy_from_slice(u.comp(0));
        }
        Ok(out)
    }

    /// `Q psi`: ridge least-squares preimage of a (0,2)-form under the
    /// discrete dbar_M on (0,1)-forms; identically zero when n = 2 (there
    /// are no (0,2)-forms).
    pub fn solve_q(&self, psi: &GridField) -> Result<GridField> {
        let m = self.n - 1;
        let mut out = GridField::zeros(psi.mask.clone(), m);
        match (&self.d1, &self.d1t) {
            (Some(d1), Some(d1t)) => {
                let pairs = m * (m - 1) / 2;
                if psi.comps != pairs || psi.mask.len() != self.npts {
                    return Err(CrError::Degenerate("solve_q expects a (0,2)-form".into()));
                }
                let (x, stats) = cgnr(d1, d1t, &psi.vals, self.ridge1)?;
                self.record(stats);
                out.vals = x;
                Ok(out)
            }
            _ => Ok(out),
        }
    }

    /// Relative defect of the homotopy identity on a scalar-valued
    /// (0,1)-form: `||dbar_M P phi + Q dbar_M phi - phi||_0 / ||phi||_0`.
    pub fn homotopy_defect(&self, state: &EmbeddingState, phi: &GridField) -> Result<f64> {
        let u = self.solve_p(phi)?;
        let du = state.dbar_m(&u)?;
        let mut recon = du;
        if self.d1.is_some() {
            let dphi = state.dbar_m_1form(phi)?;
            let qd = self.solve_q(&dphi)?;
            recon = recon.zip(&qd, |a, b| a + b);
        }
        let num = recon.zip(phi, |a, b| a - b).sup();
        let den = phi.sup().max(f64::MIN_POSITIVE);
        Ok(num / den)
    }
}

/// Matrix row of `conj(Y_a)` at mask point `mi`.
fn ybar_row(
    fc: &FrameCoeffs,
    mask: &crate::grid::Mask,
    mi: usize,
    al: usize,
    delta: f64,
    dim: usize,
) -> Result<Vec<(u32, Complex64)>> {
    let i_unit = Complex64::new(0.0, 1.0);
    let mut row: Vec<(u32, Complex64)> = Vec::with_capacity(8);
    for (j, v) in axis_stencil(mask, mi, 2 * al, delta)? {
        row.push((j, 0.5 * v * Complex64::new(1.0, 0.0)));
    }
    for (j, v) in axis_stencil(mask, mi, 2 * al + 1, delta)? {
        row.push((j, 0.5 * v * i_unit));
    }
    let w = fc.c.at(al, mi).conj();
    for (j, v) in axis_stencil(mask, mi, dim - 1, delta)? {
        row.push((j, w * v));
    }
    Ok(row)
}

/// Empirical audit of a solution-operator estimate contract
/// `||P phi||_a <= c_a (rho sigma)^{-s(a)} ||phi||_a`: both sides evaluated,
/// fitted ratio reported.
pub fn audit_p_estimate(
    op: &HomotopyOperator,
    state: &EmbeddingState,
    phi: &GridField,
    a: f64,
    sigma: f64,
    constants: &EstimateConstants,
) -> Result<holder::RatioReport> {
    let u = op.solve_p(phi)?;
    let lhs = holder::norm(&u, a)?;
    let skel = constants.c_a(a)
        * (state.domain.rho * sigma).powf(-constants.s_of(a))
        * holder::norm(phi, a)?;
    let ratio = if skel == 0.0 { 0.0 } else { lhs / skel };
    Ok(holder::RatioReport {
        kind: "p_estimate".into(),
        a,
        lhs,
        rhs_skeleton: skel,
        ratio,
        pass: ratio.is_finite() && ratio <= 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{generate, StructureKind};

    #[test]
    fn csr_matvec_and_adjoint() {
        // [[1, i], [0, 2]]
        let a = Csr::from_rows(
            2,
            vec![
                vec![(0, Complex64::new(1.0, 0.0)), (1, Complex64::new(0.0, 1.0))],
                vec![(1, Complex64::new(2.0, 0.0))],
            ],
        );
        let x = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let y = a.matvec(&x);
        assert_eq!(y[0], Complex64::new(0.0, 0.0));
        assert_eq!(y[1], Complex64::new(0.0, 2.0));
        let at = a.adjoint();
        let z = at.matvec(&x);
        // A^H = [[1,0],[-i,2]]
        assert_eq!(z[0], Complex64::new(1.0, 0.0));
        assert_eq!(z[1], Complex64::new(0.0, 1.0));
    }

    #[test]
    fn cgnr_solves_identity_like_system() {
        let n = 50;
        let rows: Vec<Vec<(u32, Complex64)>> = (0..n)
            .map(|i| vec![(i as u32, Complex64::new(2.0 + (i % 3) as f64, 0.0))])
            .collect();
        let a = Csr::from_rows(n, rows);
        let at = a.adjoint();
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, -1.0)).collect();
        let (x, stats) = cgnr(&a, &at, &b, 0.0).unwrap();
        assert!(stats.relative_residual < 1e-7);
        for i in 0..n {
            let d = 2.0 + (i % 3) as f64;
            assert!((x[i] * d - b[i]).norm() < 1e-6);
        }
    }

    #[test]
    fn p_inverts_dbar_on_exact_forms() {
        let st = EmbeddingState::quadric(2, 1.0, 13);
        let op = HomotopyOperator::build(&st).unwrap();
        assert!(op.plumbing_mode);
        // phi = dbar_M u for a smooth u
        let u = GridField::from_fn(st.domain.mask.clone(), |p| {
            Complex64::new(p[0] * p[1], p[2] * p[0])
        });
        let phi = st.dbar_m(&u).unwrap();
        let defect = op.homotopy_defect(&st, &phi).unwrap();
        // floor set by the ridge weight and the CG stopping tolerance
        assert!(defect < 1e-4, "defect = {defect}");
    }

    #[test]
    fn homotopy_defect_small_on_curved_structure() {
        let st = generate(
            &StructureKind::RandomIntegrable { seed: 2, eps: 0.05, h_scale: 0.05 },
            2,
            1.0,
            11,
        )
        .unwrap();
        let op = HomotopyOperator::build(&st).unwrap();
        let u = GridField::from_fn(st.domain.mask.clone(), |p| {
            Complex64::new((2.0 * p[0]).sin(), p[1] * p[2])
        });
        let phi = st.dbar_m(&u).unwrap();
        let defect = op.homotopy_defect(&st, &phi).unwrap();
        assert!(defect < 1e-4, "defect = {defect}");
    }

    #[test]
    fn q_vanishes_for_n_two() {
        let st = EmbeddingState::quadric(2, 1.0, 9);
        let op = HomotopyOperator::build(&st).unwrap();
        let psi = GridField::from_fn(st.domain.mask.clone(), |p| Complex64::new(p[0], p[1]));
        let q = op.solve_q(&psi).unwrap();
        assert_eq!(q.sup(), 0.0);
    }

    #[test]
    fn homotopy_identity_with_q_term() {
        // n = 3: a non-closed form needs the Q branch
        let st = EmbeddingState::quadric(3, 1.0, 7);
        let op = HomotopyOperator::build(&st).unwrap();
        assert!(op.d1.is_some());
        let u = GridField::from_fn(st.domain.mask.clone(), |p| {
            Complex64::new(p[0] * p[3], p[1] - p[2] * p[4])
        });
        let phi = st.dbar_m(&u).unwrap();
        let defect = op.homotopy_defect(&st, &phi).unwrap();
        assert!(defect < 1e-4, "defect = {defect}");
    }
}
