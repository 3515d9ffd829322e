//! Almost-CR structures in adapted frame form on a graph reference manifold.
//!
//! The reference manifold is the graph `Im z^n = |z'|^2 + h(x)` in complex
//! coordinates `z^a = x_{2a-1} + i x_{2a}` (0-based axes 2a, 2a+1) with real
//! last coordinate `x^n`. Its tangential holomorphic fields are
//! `Y_a = d_a - (r_a / 2 r_n) d_{x^n}` with `r_a = conj(z^a) + h_a`,
//! `2 r_n = i + h_{x^n}`; on the quadric (h = 0) this is
//! `Y_a = d_a + i conj(z^a) d_{x^n}`.
//!
//! A structure is stored through its deviation from the reference frame:
//! `X_a = Y_a + A_a^b conj(Y_b) + B_a d_{x^n}`. The embedding error of a
//! candidate map Z is `dbar_X Z = (conj(X) Z^j)`, and for the reference
//! coordinate functions that error is an algebraic expression in (A, B, h),
//! which is what `error_form` evaluates (no differencing noise).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{CrError, Result};
use crate::grid::{GridField, Lattice, Point, MAX_DIM};
use crate::holder;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone)]
pub struct EmbeddingState {
    pub domain: Domain,
    /// Coefficients `A_a^b`, (n-1)^2 components, index a*(n-1)+b.
    pub a: GridField,
    /// Coefficients `B_a`, n-1 components.
    pub b: GridField,
}

/// Reference-frame data shared by the differential operators: the vertical
/// coefficients `c_a = -r_a / (2 r_n)` of `Y_a`, plus `r_a`, `2 r_n`.
#[derive(Debug, Clone)]
pub struct FrameCoeffs {
    pub n: usize,
    /// c_a, n-1 components.
    pub c: GridField,
    /// r_a, n-1 components.
    pub r: GridField,
    /// 2 r_n (one component).
    pub two_r_n: GridField,
}

impl FrameCoeffs {
    pub fn of(domain: &Domain) -> Result<FrameCoeffs> {
        let n = domain.n;
        let d = domain.dim();
        let h = domain.h_field();
        let hn = h.diff(d - 1)?;
        let mut hd = Vec::with_capacity(d - 1);
        for k in 0..d - 1 {
            hd.push(h.diff(k)?);
        }
        let mask = domain.mask.clone();
        let mut r = GridField::zeros(mask.clone(), n - 1);
        let mut c = GridField::zeros(mask.clone(), n - 1);
        let mut two_r_n = GridField::zeros(mask.clone(), 1);
        for mi in 0..mask.len() {
            let p = mask.lattice.point(mask.points[mi] as usize);
            let trn = I + hn.at(0, mi);
            *two_r_n.at_mut(0, mi) = trn;
            for al in 0..n - 1 {
                let zbar = Complex64::new(p[2 * al], -p[2 * al + 1]);
                let ha = (hd[2 * al].at(0, mi) - I * hd[2 * al + 1].at(0, mi)) / 2.0;
                let ra = zbar + ha;
                *r.at_mut(al, mi) = ra;
                *c.at_mut(al, mi) = -ra / trn;
            }
        }
        Ok(FrameCoeffs { n, c, r, two_r_n })
    }

    /// `Y_a u` for every a; output has (n-1) * u.comps components, laid out
    /// a * u.comps + c.
    pub fn apply_y(&self, u: &GridField) -> Result<GridField> {
        self.apply_y_impl(u, false)
    }

    /// `conj(Y_a) u` (the tangential CR operator on scalars).
    pub fn apply_y_bar(&self, u: &GridField) -> Result<GridField> {
        self.apply_y_impl(u, true)
    }

    fn apply_y_impl(&self, u: &GridField, bar: bool) -> Result<GridField> {
        let d = u.mask.lattice.dim;
        let dn = u.diff(d - 1)?;
        let mut dx = Vec::with_capacity(d - 1);
        for k in 0..d - 1 {
            dx.push(u.diff(k)?);
        }
        let m = self.n - 1;
        let mut out = GridField::zeros(u.mask.clone(), m * u.comps);
        let npts = u.mask.len();
        for al in 0..m {
            for cidx in 0..u.comps {
                for mi in 0..npts {
                    let (da, vert) = if bar {
                        (
                            (dx[2 * al].at(cidx, mi) + I * dx[2 * al + 1].at(cidx, mi)) / 2.0,
                            self.c.at(al, mi).conj(),
                        )
                    } else {
                        (
                            (dx[2 * al].at(cidx, mi) - I * dx[2 * al + 1].at(cidx, mi)) / 2.0,
                            self.c.at(al, mi),
                        )
                    };
                    *out.at_mut(al * u.comps + cidx, mi) = da + vert * dn.at(cidx, mi);
                }
            }
        }
        Ok(out)
    }
}

/// Decompose a complex vector written in the `d_{x_k}` basis into
/// coefficients over `{d_a, d_abar, d_{x^n}}` (0-based complex index a).
pub fn split_vector(v: &[Complex64], n: usize) -> (Vec<Complex64>, Vec<Complex64>, Complex64) {
    let mut hol = Vec::with_capacity(n - 1);
    let mut anti = Vec::with_capacity(n - 1);
    for al in 0..n - 1 {
        hol.push(v[2 * al] + I * v[2 * al + 1]);
        anti.push(v[2 * al] - I * v[2 * al + 1]);
    }
    (hol, anti, v[2 * n - 2])
}

impl EmbeddingState {
    pub fn new(domain: Domain, a: GridField, b: GridField) -> EmbeddingState {
        let m = domain.n - 1;
        assert_eq!(a.comps, m * m);
        assert_eq!(b.comps, m);
        EmbeddingState { domain, a, b }
    }

    pub fn quadric(n: usize, rho: f64, res: usize) -> EmbeddingState {
        let domain = Domain::ball(n, rho, res);
        let m = n - 1;
        let a = GridField::zeros(domain.mask.clone(), m * m);
        let b = GridField::zeros(domain.mask.clone(), m);
        EmbeddingState { domain, a, b }
    }

    pub fn n(&self) -> usize {
        self.domain.n
    }

    pub fn frame_coeffs(&self) -> Result<FrameCoeffs> {
        FrameCoeffs::of(&self.domain)
    }

    /// The reference CR functions `(z^1, ..., z^{n-1}, z^n)` with
    /// `z^n = x^n + i (|z'|^2 + h)`; n components.
    pub fn z_candidate(&self) -> GridField {
        let n = self.n();
        let d = self.domain.dim();
        let mask = self.domain.mask.clone();
        let mut z = GridField::zeros(mask.clone(), n);
        for mi in 0..mask.len() {
            let lidx = mask.points[mi] as usize;
            let p = mask.lattice.point(lidx);
            for c in 0..n - 1 {
                *z.at_mut(c, mi) = Complex64::new(p[2 * c], p[2 * c + 1]);
            }
            let mut s = self.domain.h[lidx];
            for k in 0..d - 1 {
                s += p[k] * p[k];
            }
            *z.at_mut(n - 1, mi) = Complex64::new(p[d - 1], s);
        }
        z
    }

    /// `conj(X_a) u` for every a; output (n-1) * u.comps components.
    pub fn apply_x_bar(&self, u: &GridField) -> Result<GridField> {
        let fc = self.frame_coeffs()?;
        self.apply_x_bar_with(&fc, u)
    }

    pub fn apply_x_bar_with(&self, fc: &FrameCoeffs, u: &GridField) -> Result<GridField> {
        let m = self.n() - 1;
        let yu = fc.apply_y(u)?;
        let ybu = fc.apply_y_bar(u)?;
        let dn = u.diff(u.mask.lattice.dim - 1)?;
        let mut out = GridField::zeros(u.mask.clone(), m * u.comps);
        for al in 0..m {
            for c in 0..u.comps {
                for mi in 0..u.mask.len() {
                    let mut v = ybu.at(al * u.comps + c, mi);
                    for be in 0..m {
                        v += self.a.at(al * m + be, mi).conj() * yu.at(be * u.comps + c, mi);
                    }
                    v += self.b.at(al, mi).conj() * dn.at(c, mi);
                    *out.at_mut(al * u.comps + c, mi) = v;
                }
            }
        }
        Ok(out)
    }

    /// `X_a u` for every a.
    pub fn apply_x(&self, u: &GridField) -> Result<GridField> {
        let fc = self.frame_coeffs()?;
        self.apply_x_with(&fc, u)
    }

    pub fn apply_x_with(&self, fc: &FrameCoeffs, u: &GridField) -> Result<GridField> {
        let m = self.n() - 1;
        let yu = fc.apply_y(u)?;
        let ybu = fc.apply_y_bar(u)?;
        let dn = u.diff(u.mask.lattice.dim - 1)?;
        let mut out = GridField::zeros(u.mask.clone(), m * u.comps);
        for al in 0..m {
            for c in 0..u.comps {
                for mi in 0..u.mask.len() {
                    let mut v = yu.at(al * u.comps + c, mi);
                    for be in 0..m {
                        v += self.a.at(al * m + be, mi) * ybu.at(be * u.comps + c, mi);
                    }
                    v += self.b.at(al, mi) * dn.at(c, mi);
                    *out.at_mut(al * u.comps + c, mi) = v;
                }
            }
        }
        Ok(out)
    }

    /// Embedding error of the reference coordinates: `e = dbar_X z` with
    /// components `e_abar^j = conj(X_a) z^j`, laid out a * n + j. Evaluated
    /// algebraically:
    ///   e_abar^b = conj(A_a^b),
    ///   e_abar^n = -sum_b conj(A_a^b) r_b / r_n + conj(B_a)(1 + i h_{x^n}).
    pub fn error_form(&self) -> Result<GridField> {
        let fc = self.frame_coeffs()?;
        self.error_form_with(&fc)
    }

    pub fn error_form_with(&self, fc: &FrameCoeffs) -> Result<GridField> {
        let n = self.n();
        let m = n - 1;
        let mask = self.domain.mask.clone();
        let mut e = GridField::zeros(mask.clone(), m * n);
        for al in 0..m {
            for mi in 0..mask.len() {
                let trn = fc.two_r_n.at(0, mi);
                let hn = trn - I; // 2 r_n = i + h_{x^n}, so this is h_{x^n}
                let dzn = ONE + I * hn; // d_{x^n} z^n
                let mut en = Complex64::new(0.0, 0.0);
                for be in 0..m {
                    let abar = self.a.at(al * m + be, mi).conj();
                    *e.at_mut(al * n + be, mi) = abar;
                    en += abar * (-2.0 * fc.r.at(be, mi) / trn);
                }
                en += self.b.at(al, mi).conj() * dzn;
                *e.at_mut(al * n + n - 1, mi) = en;
            }
        }
        Ok(e)
    }

    /// Recover (A, B) from an error form with the layout of `error_form`.
    pub fn from_error(domain: Domain, e: &GridField) -> Result<EmbeddingState> {
        let n = domain.n;
        let m = n - 1;
        if e.comps != m * n {
            return Err(CrError::Degenerate("error form has wrong arity".into()));
        }
        let fc = FrameCoeffs::of(&domain)?;
        let mask = domain.mask.clone();
        let mut a = GridField::zeros(mask.clone(), m * m);
        let mut b = GridField::zeros(mask.clone(), m);
        for al in 0..m {
            for mi in 0..mask.len() {
                let trn = fc.two_r_n.at(0, mi);
                let hn = trn - I;
                let dzn = ONE + I * hn;
                let mut en = e.at(al * n + n - 1, mi);
                for be in 0..m {
                    let abar = e.at(al * n + be, mi);
                    *a.at_mut(al * m + be, mi) = abar.conj();
                    en -= abar * (-2.0 * fc.r.at(be, mi) / trn);
                }
                *b.at_mut(al, mi) = (en / dzn).conj();
            }
        }
        Ok(EmbeddingState { domain, a, b })
    }

    /// Tangential CR operator of the reference manifold on scalars.
    pub fn dbar_m(&self, u: &GridField) -> Result<GridField> {
        self.frame_coeffs()?.apply_y_bar(u)
    }

    /// dbar_M on (0,1)-forms with u.comps = (n-1) * q components (q scalar
    /// slots per form index): antisymmetrized pairs a < b, output
    /// pair_index * q + c.
    pub fn dbar_m_1form(&self, phi: &GridField) -> Result<GridField> {
        let fc = self.frame_coeffs()?;
        curl_1form(&fc, phi, self.n(), |u| fc.apply_y_bar(u))
    }

    /// dbar_X on (0,1)-forms, same layout as `dbar_m_1form`.
    pub fn dbar_x_1form(&self, phi: &GridField) -> Result<GridField> {
        let fc = self.frame_coeffs()?;
        curl_1form(&fc, phi, self.n(), |u| self.apply_x_bar_with(&fc, u))
    }

    /// Levi form of the structure at the origin:
    /// `g_ab(0) = i (X_a conj(Bt_b) - conj(X_b) Bt_a)(0)` with
    /// `Bt_a = c_a + sum_b A_a^b conj(c_b) + B_a`. The quadric gives
    /// `2 delta_ab`.
    pub fn levi_form_origin(&self) -> Result<DMatrix<Complex64>> {
        let fc = self.frame_coeffs()?;
        let m = self.n() - 1;
        let mask = self.domain.mask.clone();
        let mut bt = GridField::zeros(mask.clone(), m);
        for al in 0..m {
            for mi in 0..mask.len() {
                let mut v = fc.c.at(al, mi) + self.b.at(al, mi);
                for be in 0..m {
                    v += self.a.at(al * m + be, mi) * fc.c.at(be, mi).conj();
                }
                *bt.at_mut(al, mi) = v;
            }
        }
        let bt_conj = bt.map(|v| v.conj());
        let x_btc = self.apply_x_with(&fc, &bt_conj)?; // X_a conj(Bt_b): comp a*m + b
        let xb_bt = self.apply_x_bar_with(&fc, &bt)?; // conj(X_b) Bt_a: comp b*m + a
        let mut g = DMatrix::<Complex64>::zeros(m, m);
        for al in 0..m {
            for be in 0..m {
                let t1 = x_btc.at_origin(al * m + be)?;
                let t2 = xb_bt.at_origin(be * m + al)?;
                g[(al, be)] = I * (t1 - t2);
            }
        }
        Ok(g)
    }

    /// Max |A|, |B| and Levi deviation at the origin; the inputs the
    /// iteration accepts must be normalized to second order.
    pub fn normalization_report(&self) -> Result<NormalizationReport> {
        let m = self.n() - 1;
        let mut a0: f64 = 0.0;
        for c in 0..m * m {
            a0 = a0.max(self.a.at_origin(c)?.norm());
        }
        let mut b0: f64 = 0.0;
        for c in 0..m {
            b0 = b0.max(self.b.at_origin(c)?.norm());
        }
        let g = self.levi_form_origin()?;
        let mut dev: f64 = 0.0;
        for al in 0..m {
            for be in 0..m {
                let want = if al == be { 2.0 * ONE } else { Complex64::new(0.0, 0.0) };
                dev = dev.max((g[(al, be)] - want).norm());
            }
        }
        Ok(NormalizationReport {
            a_origin: a0,
            b_origin: b0,
            levi_deviation: dev,
        })
    }

    /// Verify second-order normalization at the origin within `tol`.
    pub fn normalize_initial(&self, tol: f64) -> Result<NormalizationReport> {
        let rep = self.normalization_report()?;
        if rep.a_origin > tol || rep.b_origin > tol {
            return Err(CrError::Hypothesis(format!(
                "structure not normalized at 0: |A(0)|={:.3e}, |B(0)|={:.3e} > {tol:.3e}",
                rep.a_origin, rep.b_origin
            )));
        }
        Ok(rep)
    }

    /// Sup of the residual of `[conj(X_a), conj(X_b)] u_k` after projecting
    /// onto span{conj(X_c) u_k} pointwise across a panel of test functions.
    /// Vanishes (to differencing accuracy) for integrable structures.
    pub fn integrability_defect(&self) -> Result<f64> {
        let n = self.n();
        let m = n - 1;
        if m < 2 {
            // a single antiholomorphic direction is always integrable
            return Ok(0.0);
        }
        let fc = self.frame_coeffs()?;
        let d = self.domain.dim();
        // test panel: coordinates and a mixed quadratic
        let ntest = d + 1;
        let mask = self.domain.mask.clone();
        let u = GridField::from_fn_multi(mask.clone(), ntest, |p, c| {
            if c < d {
                Complex64::new(p[c], 0.0)
            } else {
                Complex64::new(p[0] * p[d - 1], p[1.min(d - 1)] * p[0])
            }
        });
        let xu = self.apply_x_bar_with(&fc, &u)?; // m * ntest comps
        let xxu = self.apply_x_bar_with(&fc, &xu)?; // m * m * ntest comps
        let npts = mask.len();
        let mut worst: f64 = 0.0;
        for mi in 0..npts {
            for al in 0..m {
                for be in al + 1..m {
                    // rows: tests, unknowns: lambda_c, rhs: bracket entries
                    let mut amat = DMatrix::<Complex64>::zeros(ntest, m);
                    let mut rhs = DVector::<Complex64>::zeros(ntest);
                    for t in 0..ntest {
                        rhs[t] = xxu.at(al * m * ntest + be * ntest + t, mi)
                            - xxu.at(be * m * ntest + al * ntest + t, mi);
                        for c in 0..m {
                            amat[(t, c)] = xu.at(c * ntest + t, mi);
                        }
                    }
                    let svd = amat.clone().svd(true, true);
                    if let Ok(sol) = svd.solve(&rhs, 1e-10) {
                        let res = (&amat * sol - &rhs).norm();
                        worst = worst.max(res);
                    } else {
                        worst = worst.max(rhs.norm());
                    }
                }
            }
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizationReport {
    pub a_origin: f64,
    pub b_origin: f64,
    pub levi_deviation: f64,
}

/// Antisymmetrized first-order operator on (0,1)-forms:
/// `(D phi)_{ab} = D_a phi_b - D_b phi_a` for a < b; phi has (n-1)*q comps.
fn curl_1form<F>(_fc: &FrameCoeffs, phi: &GridField, n: usize, apply: F) -> Result<GridField>
where
    F: Fn(&GridField) -> Result<GridField>,
{
    let m = n - 1;
    if phi.comps % m != 0 {
        return Err(CrError::Degenerate("(0,1)-form has wrong arity".into()));
    }
    let q = phi.comps / m;
    let dphi = apply(phi)?; // comps a * (m*q) + b*q + c  = D_a phi_{b,c}
    let pairs = m * (m - 1) / 2;
    let mut out = GridField::zeros(phi.mask.clone(), pairs.max(1) * q);
    if pairs == 0 {
        return Ok(out);
    }
    let mut pidx = 0usize;
    for al in 0..m {
        for be in al + 1..m {
            for c in 0..q {
                for mi in 0..phi.mask.len() {
                    let v = dphi.at(al * m * q + be * q + c, mi)
                        - dphi.at(be * m * q + al * q + c, mi);
                    *out.at_mut(pidx * q + c, mi) = v;
                }
            }
            pidx += 1;
        }
    }
    Ok(out)
}

/// Families of test structures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum StructureKind {
    /// The flat model: A = B = 0, h = 0.
    Quadric,
    /// Deterministic cubic coordinate distortion of the quadric.
    CubicBump { eps: f64 },
    /// Seeded cubic distortion of a graph with a seeded cubic-quartic h.
    RandomIntegrable { seed: u64, eps: f64, h_scale: f64 },
}

/// Produce a structure on `D_rho` sampled at `res` points per axis. The
/// distorted families are genuinely integrable: they are the pushforward of
/// the reference CR bundle under a diffeomorphism `y = x + eps q(x)` with q
/// cubic, so A and B vanish to second order at the origin and the Levi form
/// there stays `2 delta`.
pub fn generate(kind: &StructureKind, n: usize, rho: f64, res: usize) -> Result<EmbeddingState> {
    match kind {
        StructureKind::Quadric => Ok(EmbeddingState::quadric(n, rho, res)),
        StructureKind::CubicBump { eps } => pushforward_structure(n, rho, res, 0xC0FFEE, *eps, 0.0, true),
        StructureKind::RandomIntegrable { seed, eps, h_scale } => {
            pushforward_structure(n, rho, res, *seed, *eps, *h_scale, false)
        }
    }
}

/// Polynomial in dim variables with exponent tuples and coefficients.
#[derive(Debug, Clone)]
struct Poly {
    dim: usize,
    terms: Vec<([u8; MAX_DIM], f64)>,
}

impl Poly {
    fn eval(&self, p: &Point) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut v = *c;
                for a in 0..self.dim {
                    for _ in 0..e[a] {
                        v *= p[a];
                    }
                }
                v
            })
            .sum()
    }

    fn grad(&self, p: &Point) -> Point {
        let mut g = [0.0; MAX_DIM];
        for (e, c) in &self.terms {
            for a in 0..self.dim {
                if e[a] == 0 {
                    continue;
                }
                let mut v = *c * e[a] as f64;
                for b in 0..self.dim {
                    let pow = if b == a { e[b] - 1 } else { e[b] };
                    for _ in 0..pow {
                        v *= p[b];
                    }
                }
                g[a] += v;
            }
        }
        g
    }

    fn scaled(mut self, s: f64) -> Poly {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self
    }
}

fn random_poly(rng: &mut ChaCha8Rng, dim: usize, degrees: &[u8], count: usize) -> Poly {
    let mut terms = Vec::with_capacity(count);
    for _ in 0..count {
        let deg = degrees[rng.gen_range(0..degrees.len())];
        let mut e = [0u8; MAX_DIM];
        for _ in 0..deg {
            e[rng.gen_range(0..dim)] += 1;
        }
        terms.push((e, rng.gen_range(-1.0..1.0)));
    }
    Poly { dim, terms }
}

fn pushforward_structure(
    n: usize,
    rho: f64,
    res: usize,
    seed: u64,
    eps: f64,
    h_scale: f64,
    bump: bool,
) -> Result<EmbeddingState> {
    let dim = 2 * n - 1;
    let m = n - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lattice = Lattice::cube(dim, 2.0f64.sqrt() * rho, res);

    // graph function: cubic + quartic only, so it does not disturb the
    // Levi normalization at the origin
    let h_poly = if h_scale > 0.0 {
        let raw = random_poly(&mut rng, dim, &[3, 4], 2 * dim);
        // normalize on a coarse copy of the box: the C^2 norm of a low-degree
        // polynomial is resolved by a handful of nodes per axis, and the
        // derivative fields of the full lattice would not fit in memory
        let nl = Lattice::cube(dim, 2.0f64.sqrt() * rho, res.min(9));
        let samples: Vec<f64> = (0..nl.len()).map(|i| raw.eval(&nl.point(i))).collect();
        let full = crate::grid::Mask::full(nl);
        let mut f = GridField::zeros(full, 1);
        for (i, &v) in samples.iter().enumerate() {
            f.vals[i] = Complex64::new(v, 0.0);
        }
        let c2 = holder::norm(&f, 2.0)?;
        Some(raw.scaled(if c2 > 0.0 { h_scale / c2 } else { 0.0 }))
    } else {
        None
    };
    let h: Vec<f64> = (0..lattice.len())
        .map(|i| h_poly.as_ref().map_or(0.0, |p| p.eval(&lattice.point(i))))
        .collect();
    let domain = Domain::from_h(n, rho, lattice.clone(), h);

    // distortion q: one cubic polynomial per coordinate, normalized so the
    // sup of |dq| over the box is about 1, making eps the contraction rate.
    // The deterministic bump uses pure powers of the tangential coordinates,
    // so dq is quadratic in z' with no x^n admixture and the dilation decay
    // of A and B is clean (rho^-2 and rho^-1 respectively).
    let mut q: Vec<Poly> = if bump {
        (0..dim)
            .map(|k| {
                let mut terms = Vec::new();
                // the vertical component carries most of the weight so that
                // the dilated error form is B-dominated from small factors on
                let (range, coef) = if k < dim - 1 { (k..k + 1, 0.25) } else { (0..dim - 1, 1.0) };
                for t in range {
                    let mut e = [0u8; MAX_DIM];
                    e[t] = 3;
                    terms.push((e, coef));
                }
                Poly { dim, terms }
            })
            .collect()
    } else {
        (0..dim).map(|_| random_poly(&mut rng, dim, &[3], dim + 2)).collect()
    };
    let mut gsup: f64 = 0.0;
    for i in 0..lattice.len() {
        let p = lattice.point(i);
        for qk in &q {
            let g = qk.grad(&p);
            gsup = gsup.max(g[..dim].iter().map(|x| x.abs()).fold(0.0, f64::max));
        }
    }
    if gsup > 0.0 {
        q = q.into_iter().map(|p| p.scaled(1.0 / gsup)).collect();
    }

    let phi_inverse = |y: &Point| -> Point {
        let mut x = *y;
        for _ in 0..60 {
            let mut nx = *y;
            for k in 0..dim {
                nx[k] -= eps * q[k].eval(&x);
            }
            let delta: f64 = (0..dim).map(|k| (nx[k] - x[k]).abs()).fold(0.0, f64::max);
            x = nx;
            if delta < 1e-14 {
                break;
            }
        }
        x
    };

    let fc = FrameCoeffs::of(&domain)?;
    // analytic vertical coefficient at an arbitrary point
    let c_at = |p: &Point, al: usize| -> Complex64 {
        let (ha, hn) = match &h_poly {
            Some(hp) => {
                let g = hp.grad(p);
                (
                    Complex64::new(g[2 * al], -g[2 * al + 1]) / 2.0,
                    g[dim - 1],
                )
            }
            None => (Complex64::new(0.0, 0.0), 0.0),
        };
        let zbar = Complex64::new(p[2 * al], -p[2 * al + 1]);
        -(zbar + ha) / (I + hn)
    };

    let mask = domain.mask.clone();
    let mut a = GridField::zeros(mask.clone(), m * m);
    let mut b = GridField::zeros(mask.clone(), m);
    for mi in 0..mask.len() {
        let y = mask.lattice.point(mask.points[mi] as usize);
        let x = phi_inverse(&y);
        // pushforward of each Y_a(x) through dphi(x) = I + eps dq(x)
        let mut pmat = DMatrix::<Complex64>::zeros(m, m);
        let mut qmat = DMatrix::<Complex64>::zeros(m, m);
        let mut rvec = DVector::<Complex64>::zeros(m);
        for al in 0..m {
            // Y_a(x) in the d_{x_k} basis
            let mut v = vec![Complex64::new(0.0, 0.0); dim];
            v[2 * al] += Complex64::new(0.5, 0.0);
            v[2 * al + 1] += Complex64::new(0.0, -0.5);
            v[dim - 1] += c_at(&x, al);
            // apply dphi(x)
            let mut w = v.clone();
            for k in 0..dim {
                let g = q[k].grad(&x);
                for l in 0..dim {
                    w[k] += eps * g[l] * v[l];
                }
            }
            // decompose at y over {Y_b(y), conj(Y_b)(y), d_n}
            let (hol, anti, vert) = split_vector(&w, n);
            let mut rest = vert;
            for be in 0..m {
                pmat[(al, be)] = hol[be];
                qmat[(al, be)] = anti[be];
                rest -= hol[be] * fc.c.at(be, mi) + anti[be] * fc.c.at(be, mi).conj();
            }
            rvec[al] = rest;
        }
        // adapted combination: A = P^-1 Q, B = P^-1 R (rows index a)
        let lu = pmat.clone().lu();
        let asol = lu
            .solve(&qmat)
            .ok_or_else(|| CrError::Degenerate("frame matrix singular in pushforward".into()))?;
        let bsol = lu
            .solve(&rvec)
            .ok_or_else(|| CrError::Degenerate("frame matrix singular in pushforward".into()))?;
        for al in 0..m {
            for be in 0..m {
                *a.at_mut(al * m + be, mi) = asol[(al, be)];
            }
            *b.at_mut(al, mi) = bsol[al];
        }
    }
    Ok(EmbeddingState { domain, a, b })
}

/// Non-isotropic rescaling: restrict to the scale-1/rho neighborhood of the
/// origin and blow it up to unit size, `z' = zhat'/rho`, `x^n = xhat^n/rho^2`.
/// On the unit domain the new data are
///   hhat(xhat) = rho^2 h(delta_{1/rho} xhat),
///   Ahat(xhat) = A(delta_{1/rho} xhat),
///   Bhat(xhat) = rho B(delta_{1/rho} xhat),
/// so quadratically vanishing A decays like rho^-2 and B like rho^-1.
pub fn dilate(state: &EmbeddingState, rho: f64, res: usize) -> Result<EmbeddingState> {
    let n = state.n();
    let m = n - 1;
    let dim = state.domain.dim();
    if rho <= 1.0 {
        return Err(CrError::Hypothesis("dilation expects rho > 1".into()));
    }
    let lattice = Lattice::cube(dim, 2.0f64.sqrt(), res);
    let shrink = |p: &Point| -> Point {
        let mut x = [0.0; MAX_DIM];
        for k in 0..dim - 1 {
            x[k] = p[k] / rho;
        }
        x[dim - 1] = p[dim - 1] / (rho * rho);
        x
    };
    let h_src = state.domain.h_field();
    let mut h = vec![f64::NAN; lattice.len()];
    for (idx, hv) in h.iter_mut().enumerate() {
        let x = shrink(&lattice.point(idx));
        if let Ok(v) = h_src.interp_quadratic(0, &x) {
            *hv = rho * rho * v.re;
        }
    }
    let domain = Domain::from_h(n, 1.0, lattice, h);
    let mask = domain.mask.clone();
    let mut a = GridField::zeros(mask.clone(), m * m);
    let mut b = GridField::zeros(mask.clone(), m);
    for mi in 0..mask.len() {
        let x = shrink(&mask.lattice.point(mask.points[mi] as usize));
        for c in 0..m * m {
            *a.at_mut(c, mi) = state.a.interp_quadratic(c, &x)?;
        }
        for c in 0..m {
            *b.at_mut(c, mi) = rho * state.b.interp_quadratic(c, &x)?;
        }
    }
    Ok(EmbeddingState { domain, a, b })
}
