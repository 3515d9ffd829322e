//! Strictly convex lattice domains `D_rho(h) = { psi <= rho^2 }` with
//! `psi(x) = |x|^2 + h(x)`, the shrinking family used by the iteration, and
//! the geometric audits (ball inclusions, boundary distance).

use base64::Engine;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{CrError, Result};
use crate::grid::{GridField, Lattice, Mask, Point, MAX_DIM};
use crate::holder;

/// Distance-bound constant of the boundary-separation estimate
/// `rho sigma <= c_hat dist(bd D_{rho(1-sigma)}, bd D_rho)`.
pub const C_HAT_DISTANCE: f64 = 4.242640687119285; // 3 sqrt(2)
/// Smoothing-support margin constant (used by the mollifier margin check;
/// a separate value from the distance bound, kept deliberately distinct).
pub const C_HAT_SMOOTHING: f64 = 3.5355339059327378; // 5 / sqrt(2)
/// Hypothesis bound on ||h||_C2 for the geometric lemmas.
pub const GAMMA0: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct Domain {
    /// CR dimension; the lattice dimension is 2n-1.
    pub n: usize,
    pub rho: f64,
    pub lattice: Arc<Lattice>,
    /// Graph-function samples, dense over the bounding lattice; NaN marks
    /// nodes where h is unknown (outside the region a previous step covered).
    pub h: Arc<Vec<f64>>,
    pub mask: Arc<Mask>,
}

/// Constants governing the estimate audits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateConstants {
    pub gamma0: f64,
    pub gamma1: f64,
    pub c_hat: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Constant c_a per norm order; orders not listed fall back to
    /// `c_default`.
    pub c_table: Vec<(f64, f64)>,
    pub c_default: f64,
    /// Coefficients of the loss polynomial s(a), lowest order first.
    pub s_poly: Vec<f64>,
}

impl Default for EstimateConstants {
    fn default() -> Self {
        EstimateConstants {
            gamma0: GAMMA0,
            gamma1: 1.0 / 45.0,
            c_hat: C_HAT_DISTANCE,
            beta: 2.5,
            alpha: 0.5,
            c_table: Vec::new(),
            c_default: 1.0,
            // s(a) = a^2 + 7a + 8
            s_poly: vec![8.0, 7.0, 1.0],
        }
    }
}

impl EstimateConstants {
    pub fn c_a(&self, a: f64) -> f64 {
        self.c_table
            .iter()
            .find(|(k, _)| (k - a).abs() < 1e-12)
            .map(|&(_, v)| v)
            .unwrap_or(self.c_default)
    }

    pub fn s_of(&self, a: f64) -> f64 {
        self.s_poly
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * a + c)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InclusionReport {
    pub pass: bool,
    /// Largest r such that every lattice node with |x| <= r is in the mask.
    pub inner_radius: f64,
    /// Largest |x| over mask nodes.
    pub outer_radius: f64,
    pub c2: f64,
}

impl Domain {
    /// Round ball domain (h = 0) on the standard bounding box
    /// `[-sqrt(2) rho, sqrt(2) rho]^{2n-1}`.
    pub fn ball(n: usize, rho: f64, res: usize) -> Domain {
        let dim = 2 * n - 1;
        let lattice = Lattice::cube(dim, 2.0f64.sqrt() * rho, res);
        let h = vec![0.0; lattice.len()];
        Domain::from_h(n, rho, lattice, h)
    }

    /// Domain from dense graph-function samples on an existing lattice.
    pub fn from_h(n: usize, rho: f64, lattice: Arc<Lattice>, h: Vec<f64>) -> Domain {
        assert_eq!(lattice.dim, 2 * n - 1);
        assert_eq!(h.len(), lattice.len());
        let h = Arc::new(h);
        let mask = Self::build_mask(&lattice, &h, rho);
        Domain {
            n,
            rho,
            lattice,
            h,
            mask,
        }
    }

    fn build_mask(lattice: &Arc<Lattice>, h: &Arc<Vec<f64>>, rho: f64) -> Arc<Mask> {
        let r2 = rho * rho;
        let dim = lattice.dim;
        let mut keep: Vec<bool> = (0..lattice.len())
            .map(|idx| {
                let hx = h[idx];
                if !hx.is_finite() {
                    return false;
                }
                let p = lattice.point(idx);
                let mut s = hx;
                for a in 0..dim {
                    s += p[a] * p[a];
                }
                s <= r2
            })
            .collect();
        // erode isolated tips: every retained node must have a neighbor in
        // the mask along each axis, or first differences are undefined there
        loop {
            let mut changed = false;
            for idx in 0..lattice.len() {
                if !keep[idx] {
                    continue;
                }
                let m = lattice.multi(idx);
                for a in 0..dim {
                    let mut has = false;
                    for step in [-1isize, 1] {
                        let mut mm = m;
                        mm[a] += step;
                        if let Some(j) = lattice.index(&mm) {
                            if keep[j] {
                                has = true;
                                break;
                            }
                        }
                    }
                    if !has {
                        keep[idx] = false;
                        changed = true;
                        break;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        Mask::from_predicate(lattice.clone(), move |idx| keep[idx])
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim
    }

    pub fn spacing(&self) -> f64 {
        self.lattice.spacing
    }

    /// Same h on the same lattice at a smaller scale.
    pub fn with_rho(&self, rho: f64) -> Domain {
        let mask = Self::build_mask(&self.lattice, &self.h, rho);
        Domain {
            n: self.n,
            rho,
            lattice: self.lattice.clone(),
            h: self.h.clone(),
            mask,
        }
    }

    pub fn shrunk(&self, sigma: f64) -> Domain {
        self.with_rho(self.rho * (1.0 - sigma))
    }

    /// psi at a lattice node.
    pub fn psi_at(&self, idx: usize) -> f64 {
        let p = self.lattice.point(idx);
        let mut s = self.h[idx];
        for a in 0..self.dim() {
            s += p[a] * p[a];
        }
        s
    }

    /// psi at an arbitrary point; h interpolated multilinearly.
    pub fn psi(&self, p: &Point) -> Result<f64> {
        if !self.lattice.contains_point(p) {
            return Err(CrError::OutOfDomain(format!("{:?}", &p[..self.dim()])));
        }
        let h = self.h_interp(p)?;
        Ok(h + p[..self.dim()].iter().map(|x| x * x).sum::<f64>())
    }

    fn h_interp(&self, p: &Point) -> Result<f64> {
        let lat = &self.lattice;
        let dim = lat.dim;
        let mut base = [0isize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for a in 0..dim {
            let f = (p[a] - lat.lower[a]) / lat.spacing;
            let mut b = f.floor() as isize;
            if b as usize >= lat.shape[a] - 1 {
                b = lat.shape[a] as isize - 2;
            }
            base[a] = b;
            frac[a] = f - b as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut m = base;
            let mut w = 1.0;
            for a in 0..dim {
                if corner >> a & 1 == 1 {
                    m[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            let lidx = lat
                .index(&m)
                .ok_or_else(|| CrError::OutOfDomain("h cell outside lattice".into()))?;
            let hv = self.h[lidx];
            if !hv.is_finite() {
                return Err(CrError::OutOfDomain("h unknown on interpolation cell".into()));
            }
            acc += w * hv;
        }
        Ok(acc)
    }

    /// h restricted to the mask, as a complex field (for norm evaluation).
    pub fn h_field(&self) -> GridField {
        let mut f = GridField::zeros(self.mask.clone(), 1);
        for mi in 0..self.mask.len() {
            f.vals[mi] = Complex64::new(self.h[self.mask.points[mi] as usize], 0.0);
        }
        f
    }

    /// Discrete C2 norm of h over the mask.
    pub fn h_c2(&self) -> Result<f64> {
        holder::norm(&self.h_field(), 2.0)
    }

    /// Ball-inclusion audit: `B(sqrt(2/3) rho) <= D_rho <= B(sqrt(2) rho)`
    /// as lattice sets, under `||h||_C2 < gamma0`.
    pub fn check_inclusions(&self) -> Result<InclusionReport> {
        let c2 = self.h_c2()?;
        if c2 >= GAMMA0 {
            return Err(CrError::Hypothesis(format!(
                "||h||_C2 = {c2:.4} >= gamma0 = {GAMMA0}"
            )));
        }
        let lat = &self.lattice;
        let mut inner_radius = f64::INFINITY;
        let mut outer_radius: f64 = 0.0;
        for idx in 0..lat.len() {
            let p = lat.point(idx);
            let r = p[..self.dim()].iter().map(|x| x * x).sum::<f64>().sqrt();
            if self.mask.contains_lattice(idx) {
                outer_radius = outer_radius.max(r);
            } else {
                inner_radius = inner_radius.min(r);
            }
        }
        if inner_radius.is_infinite() {
            // whole box inside: inner radius is the box half-width
            inner_radius = (lat.shape[0] - 1) as f64 * lat.spacing / 2.0;
        }
        let want_inner = (2.0f64 / 3.0).sqrt() * self.rho;
        let want_outer = 2.0f64.sqrt() * self.rho;
        let pass = inner_radius >= want_inner - 1e-12 && outer_radius <= want_outer + 1e-12;
        Ok(InclusionReport {
            pass,
            inner_radius,
            outer_radius,
            c2,
        })
    }

    /// Centers of lattice cells crossed by the level set psi = r^2.
    fn boundary_cells(&self, rho: f64) -> Vec<Point> {
        let lat = &self.lattice;
        let dim = lat.dim;
        let r2 = rho * rho;
        let psi: Vec<f64> = (0..lat.len()).map(|i| self.psi_at(i)).collect();
        let mut cell_shape = [1usize; MAX_DIM];
        for a in 0..dim {
            cell_shape[a] = lat.shape[a] - 1;
        }
        let ncells: usize = cell_shape[..dim].iter().product();
        (0..ncells)
            .into_par_iter()
            .filter_map(|cidx| {
                let mut rem = cidx;
                let mut m = [0isize; MAX_DIM];
                for a in (0..dim).rev() {
                    m[a] = (rem % cell_shape[a]) as isize;
                    rem /= cell_shape[a];
                }
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for corner in 0..(1usize << dim) {
                    let mut mm = m;
                    for a in 0..dim {
                        if corner >> a & 1 == 1 {
                            mm[a] += 1;
                        }
                    }
                    let v = psi[self.lattice.index(&mm).unwrap()];
                    if !v.is_finite() {
                        return None;
                    }
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                if lo <= r2 && r2 < hi {
                    let mut c = self.lattice.point_of_multi(&m);
                    for a in 0..dim {
                        c[a] += 0.5 * self.lattice.spacing;
                    }
                    Some(c)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Distance between the boundaries of `D_{rho(1-sigma)}` and `D_rho`,
    /// measured between crossed-cell centers, plus the audit
    /// `rho sigma <= c_hat distance` with `c_hat = 3 sqrt(2)`.
    pub fn boundary_distance(&self, sigma: f64) -> Result<(f64, bool)> {
        if !(0.0 < sigma && sigma < 1.0) {
            return Err(CrError::Hypothesis("sigma must lie in (0,1)".into()));
        }
        let c2 = self.h_c2()?;
        if c2 >= 0.5 {
            return Err(CrError::Hypothesis(format!("||h||_C2 = {c2:.4} >= 1/2")));
        }
        let outer = self.boundary_cells(self.rho);
        let inner = self.boundary_cells(self.rho * (1.0 - sigma));
        if inner.is_empty() || outer.is_empty() {
            return Err(CrError::Degenerate(
                "sublevel-set boundary not resolved on this lattice".into(),
            ));
        }
        let dim = self.dim();
        let dist2 = inner
            .par_iter()
            .map(|p| {
                outer
                    .iter()
                    .map(|q| (0..dim).map(|a| (p[a] - q[a]).powi(2)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| f64::INFINITY, f64::min);
        let distance = dist2.sqrt();
        let bound_ok = self.rho * sigma <= C_HAT_DISTANCE * distance;
        Ok((distance, bound_ok))
    }

    /// BFS connectivity of the mask from the origin node.
    pub fn mask_connected(&self) -> bool {
        let lat = &self.lattice;
        let origin = match lat.index(&lat.origin_multi()) {
            Some(i) if self.mask.contains_lattice(i) => self.mask.index_of[i] as usize,
            _ => return false,
        };
        let n = self.mask.len();
        let mut seen = vec![false; n];
        let mut stack = vec![origin];
        seen[origin] = true;
        let mut count = 1;
        while let Some(mi) = stack.pop() {
            for axis in 0..lat.dim {
                for step in [-1isize, 1] {
                    if let Some(nb) = self.mask.neighbor(mi, axis, step) {
                        if !seen[nb] {
                            seen[nb] = true;
                            count += 1;
                            stack.push(nb);
                        }
                    }
                }
            }
        }
        count == n
    }
}

/// Random smooth graph function: a quadratic-through-quartic polynomial with
/// seeded coefficients, rescaled so its C2 norm over the full box equals
/// `target_c2`. Vanishes to second order at 0 by construction.
pub fn random_h(lattice: &Arc<Lattice>, seed: u64, target_c2: f64) -> Vec<f64> {
    let dim = lattice.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // monomial exponents: all of degree 2, a seeded handful of degree 3, 4
    let mut monomials: Vec<([u8; MAX_DIM], f64)> = Vec::new();
    for i in 0..dim {
        for j in i..dim {
            let mut e = [0u8; MAX_DIM];
            e[i] += 1;
            e[j] += 1;
            monomials.push((e, rng.gen_range(-1.0..1.0)));
        }
    }
    for _ in 0..2 * dim {
        let mut e = [0u8; MAX_DIM];
        let deg = rng.gen_range(3..=4);
        for _ in 0..deg {
            e[rng.gen_range(0..dim)] += 1;
        }
        monomials.push((e, rng.gen_range(-1.0..1.0)));
    }
    let eval = |p: &Point| {
        monomials
            .iter()
            .map(|(e, c)| {
                let mut v = *c;
                for a in 0..dim {
                    for _ in 0..e[a] {
                        v *= p[a];
                    }
                }
                v
            })
            .sum::<f64>()
    };
    let raw: Vec<f64> = (0..lattice.len())
        .map(|idx| eval(&lattice.point(idx)))
        .collect();
    let full = Mask::full(lattice.clone());
    let mut f = GridField::zeros(full, 1);
    for (i, &v) in raw.iter().enumerate() {
        f.vals[i] = Complex64::new(v, 0.0);
    }
    let c2 = holder::norm(&f, 2.0).expect("C2 norm of polynomial field");
    let scale = if c2 > 0.0 { target_c2 / c2 } else { 0.0 };
    raw.into_iter().map(|v| v * scale).collect()
}

/// Serializable descriptor: {dim, rho, spacing, h samples, mask bitset}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainDescriptor {
    pub dim: usize,
    pub n: usize,
    pub rho: f64,
    pub spacing: f64,
    pub shape: Vec<usize>,
    pub lower: Vec<f64>,
    /// Row-major h samples; None where unknown.
    pub h: Vec<Option<f64>>,
    /// Mask membership as a base64 bitset, row-major.
    pub mask_b64: String,
}

impl Domain {
    pub fn to_descriptor(&self) -> DomainDescriptor {
        let n_nodes = self.lattice.len();
        let mut bits = vec![0u8; (n_nodes + 7) / 8];
        for idx in 0..n_nodes {
            if self.mask.contains_lattice(idx) {
                bits[idx / 8] |= 1 << (idx % 8);
            }
        }
        DomainDescriptor {
            dim: self.dim(),
            n: self.n,
            rho: self.rho,
            spacing: self.lattice.spacing,
            shape: self.lattice.shape[..self.dim()].to_vec(),
            lower: self.lattice.lower[..self.dim()].to_vec(),
            h: self
                .h
                .iter()
                .map(|&v| if v.is_finite() { Some(v) } else { None })
                .collect(),
            mask_b64: base64::engine::general_purpose::STANDARD.encode(&bits),
        }
    }

    pub fn from_descriptor(d: &DomainDescriptor) -> Result<Domain> {
        if d.dim != 2 * d.n - 1 || d.shape.len() != d.dim {
            return Err(CrError::Degenerate("inconsistent domain descriptor".into()));
        }
        let mut shape = [1usize; MAX_DIM];
        let mut lower = [0.0; MAX_DIM];
        for a in 0..d.dim {
            shape[a] = d.shape[a];
            lower[a] = d.lower[a];
        }
        let lattice = Arc::new(Lattice {
            dim: d.dim,
            shape,
            lower,
            spacing: d.spacing,
        });
        let h: Vec<f64> = d.h.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        Ok(Domain::from_h(d.n, d.rho, lattice, h))
    }
}
