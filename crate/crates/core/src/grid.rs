//! Uniform lattices, membership masks and complex-valued lattice fields.
//!
//! All fields in the crate live on a fixed bounding lattice; a `Mask` selects
//! the sublevel set that is currently meaningful. Values are stored only at
//! mask points, so shrinking the domain never drags stale data along.

use num_complex::Complex64;
use std::sync::Arc;

use crate::error::{CrError, Result};

/// Largest manifold dimension handled (2n-1 with n <= 4).
pub const MAX_DIM: usize = 7;

pub type Point = [f64; MAX_DIM];
pub type Multi = [isize; MAX_DIM];

/// Uniform axis-aligned lattice with equal spacing on every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub dim: usize,
    pub shape: [usize; MAX_DIM],
    pub lower: Point,
    pub spacing: f64,
}

impl Lattice {
    /// Cube `[-half, half]^dim` with `res` points per axis.
    pub fn cube(dim: usize, half: f64, res: usize) -> Arc<Lattice> {
        assert!(dim >= 1 && dim <= MAX_DIM);
        assert!(res >= 3, "lattice needs at least 3 points per axis");
        let mut shape = [1usize; MAX_DIM];
        let mut lower = [0.0; MAX_DIM];
        for a in 0..dim {
            shape[a] = res;
            lower[a] = -half;
        }
        Arc::new(Lattice {
            dim,
            shape,
            lower,
            spacing: 2.0 * half / (res - 1) as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.shape[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of a multi-index (row-major, last axis fastest).
    pub fn index(&self, m: &Multi) -> Option<usize> {
        let mut idx = 0usize;
        for a in 0..self.dim {
            if m[a] < 0 || m[a] as usize >= self.shape[a] {
                return None;
            }
            idx = idx * self.shape[a] + m[a] as usize;
        }
        Some(idx)
    }

    pub fn multi(&self, mut idx: usize) -> Multi {
        let mut m = [0isize; MAX_DIM];
        for a in (0..self.dim).rev() {
            m[a] = (idx % self.shape[a]) as isize;
            idx /= self.shape[a];
        }
        m
    }

    pub fn point_of_multi(&self, m: &Multi) -> Point {
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.dim {
            p[a] = self.lower[a] + m[a] as f64 * self.spacing;
        }
        p
    }

    pub fn point(&self, idx: usize) -> Point {
        self.point_of_multi(&self.multi(idx))
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        (0..self.dim).all(|a| {
            let hi = self.lower[a] + (self.shape[a] - 1) as f64 * self.spacing;
            p[a] >= self.lower[a] - 1e-12 && p[a] <= hi + 1e-12
        })
    }

    /// Lattice multi-index nearest to the origin (requires 0 on the lattice
    /// only approximately; returns the closest node).
    pub fn origin_multi(&self) -> Multi {
        let mut m = [0isize; MAX_DIM];
        for a in 0..self.dim {
            let f = -self.lower[a] / self.spacing;
            m[a] = f.round() as isize;
            m[a] = m[a].clamp(0, self.shape[a] as isize - 1);
        }
        m
    }
}

/// Membership set over a lattice, with both directions of the index map.
#[derive(Debug)]
pub struct Mask {
    pub lattice: Arc<Lattice>,
    /// Lattice index -> mask index, or -1.
    pub index_of: Vec<i32>,
    /// Mask index -> lattice index.
    pub points: Vec<u32>,
}

impl Mask {
    pub fn from_predicate<F: Fn(usize) -> bool>(lattice: Arc<Lattice>, keep: F) -> Arc<Mask> {
        let n = lattice.len();
        let mut index_of = vec![-1i32; n];
        let mut points = Vec::new();
        for idx in 0..n {
            if keep(idx) {
                index_of[idx] = points.len() as i32;
                points.push(idx as u32);
            }
        }
        Arc::new(Mask {
            lattice,
            index_of,
            points,
        })
    }

    pub fn full(lattice: Arc<Lattice>) -> Arc<Mask> {
        Mask::from_predicate(lattice, |_| true)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains_lattice(&self, lidx: usize) -> bool {
        self.index_of[lidx] >= 0
    }

    /// Mask index of the offset neighbor of mask point `mi`, if present.
    pub fn neighbor(&self, mi: usize, axis: usize, step: isize) -> Option<usize> {
        let mut m = self.lattice.multi(self.points[mi] as usize);
        m[axis] += step;
        let lidx = self.lattice.index(&m)?;
        let j = self.index_of[lidx];
        (j >= 0).then_some(j as usize)
    }

    /// True if `other` selects a subset of this mask (same lattice assumed).
    pub fn contains_mask(&self, other: &Mask) -> bool {
        other
            .points
            .iter()
            .all(|&l| self.index_of[l as usize] >= 0)
    }
}

/// Complex lattice field with `comps` components, stored component-major at
/// mask points only.
#[derive(Debug, Clone)]
pub struct GridField {
    pub mask: Arc<Mask>,
    pub comps: usize,
    pub vals: Vec<Complex64>,
}

impl GridField {
    pub fn zeros(mask: Arc<Mask>, comps: usize) -> GridField {
        let n = mask.len() * comps;
        GridField {
            mask,
            comps,
            vals: vec![Complex64::default(); n],
        }
    }

    pub fn from_fn<F: FnMut(&Point) -> Complex64>(mask: Arc<Mask>, mut f: F) -> GridField {
        let mut out = GridField::zeros(mask, 1);
        for mi in 0..out.mask.len() {
            let p = out.mask.lattice.point(out.mask.points[mi] as usize);
            out.vals[mi] = f(&p);
        }
        out
    }

    pub fn from_fn_multi<F: FnMut(&Point, usize) -> Complex64>(
        mask: Arc<Mask>,
        comps: usize,
        mut f: F,
    ) -> GridField {
        let mut out = GridField::zeros(mask, comps);
        for c in 0..comps {
            for mi in 0..out.mask.len() {
                let p = out.mask.lattice.point(out.mask.points[mi] as usize);
                out.vals[c * out.mask.len() + mi] = f(&p, c);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    #[inline]
    pub fn at(&self, comp: usize, mi: usize) -> Complex64 {
        self.vals[comp * self.mask.len() + mi]
    }

    #[inline]
    pub fn at_mut(&mut self, comp: usize, mi: usize) -> &mut Complex64 {
        let n = self.mask.len();
        &mut self.vals[comp * n + mi]
    }

    pub fn comp(&self, c: usize) -> &[Complex64] {
        let n = self.mask.len();
        &self.vals[c * n..(c + 1) * n]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = self.mask.len();
        &mut self.vals[c * n..(c + 1) * n]
    }

    /// Single component as its own field (shares the mask).
    pub fn component(&self, c: usize) -> GridField {
        GridField {
            mask: self.mask.clone(),
            comps: 1,
            vals: self.comp(c).to_vec(),
        }
    }

    /// Value at the lattice node nearest the origin.
    pub fn at_origin(&self, comp: usize) -> Result<Complex64> {
        let lat = &self.mask.lattice;
        let lidx = lat
            .index(&lat.origin_multi())
            .ok_or_else(|| CrError::OutOfDomain("origin not on lattice".into()))?;
        let mi = self.mask.index_of[lidx];
        if mi < 0 {
            return Err(CrError::OutOfDomain("origin not in mask".into()));
        }
        Ok(self.at(comp, mi as usize))
    }

    /// First difference along `axis`: 2nd-order central in the interior,
    /// 1st-order one-sided within one stencil of the mask boundary.
    pub fn diff(&self, axis: usize) -> Result<GridField> {
        let n = self.mask.len();
        let h = self.mask.lattice.spacing;
        let mut out = GridField::zeros(self.mask.clone(), self.comps);
        for mi in 0..n {
            let fwd = self.mask.neighbor(mi, axis, 1);
            let bwd = self.mask.neighbor(mi, axis, -1);
            for c in 0..self.comps {
                let v = match (bwd, fwd) {
                    (Some(b), Some(f)) => (self.at(c, f) - self.at(c, b)) / (2.0 * h),
                    (None, Some(f)) => (self.at(c, f) - self.at(c, mi)) / h,
                    (Some(b), None) => (self.at(c, mi) - self.at(c, b)) / h,
                    (None, None) => {
                        return Err(CrError::Resolution(format!(
                            "mask has no neighbor along axis {axis}; cannot difference"
                        )))
                    }
                };
                *out.at_mut(c, mi) = v;
            }
        }
        Ok(out)
    }

    /// Multilinear interpolation of one component at an off-lattice point.
    /// Errors if any cell corner is missing from the mask (no extrapolation).
    pub fn interp_linear(&self, comp: usize, p: &Point) -> Result<Complex64> {
        let lat = &self.mask.lattice;
        if !lat.contains_point(p) {
            return Err(CrError::OutOfDomain(format!("{:?}", &p[..lat.dim])));
        }
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
        let mut acc = Complex64::default();
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
            if w == 0.0 {
                continue;
            }
            let lidx = lat
                .index(&m)
                .ok_or_else(|| CrError::OutOfDomain("interpolation cell outside lattice".into()))?;
            let mi = self.mask.index_of[lidx];
            if mi < 0 {
                return Err(CrError::OutOfDomain(
                    "interpolation cell corner outside mask".into(),
                ));
            }
            acc += w * self.at(comp, mi as usize);
        }
        Ok(acc)
    }

    /// Tensor-quadratic (3-point Lagrange per axis) interpolation. Exact for
    /// quadratics, which linear interpolation is not; used where second-order
    /// accuracy in the value itself matters (dilation, map composition).
    pub fn interp_quadratic(&self, comp: usize, p: &Point) -> Result<Complex64> {
        let lat = &self.mask.lattice;
        if !lat.contains_point(p) {
            return Err(CrError::OutOfDomain(format!("{:?}", &p[..lat.dim])));
        }
        let dim = lat.dim;
        let mut center = [0isize; MAX_DIM];
        let mut w = [[0.0f64; 3]; MAX_DIM];
        for a in 0..dim {
            let f = (p[a] - lat.lower[a]) / lat.spacing;
            let mut c = f.round() as isize;
            c = c.clamp(1, lat.shape[a] as isize - 2);
            center[a] = c;
            let s = f - c as f64; // in [-1, 1] near the node
            w[a][0] = 0.5 * s * (s - 1.0);
            w[a][1] = 1.0 - s * s;
            w[a][2] = 0.5 * s * (s + 1.0);
        }
        let mut acc = Complex64::default();
        let mut offs = [0isize; MAX_DIM];
        self.quad_rec(comp, 0, dim, &center, &w, &mut offs, 1.0, &mut acc)?;
        Ok(acc)
    }

    fn quad_rec(
        &self,
        comp: usize,
        axis: usize,
        dim: usize,
        center: &[isize; MAX_DIM],
        w: &[[f64; 3]; MAX_DIM],
        offs: &mut [isize; MAX_DIM],
        weight: f64,
        acc: &mut Complex64,
    ) -> Result<()> {
        if axis == dim {
            let mut m = *center;
            for a in 0..dim {
                m[a] += offs[a];
            }
            let lidx = self
                .mask
                .lattice
                .index(&m)
                .ok_or_else(|| CrError::OutOfDomain("quadratic stencil off lattice".into()))?;
            let mi = self.mask.index_of[lidx];
            if mi < 0 {
                return Err(CrError::OutOfDomain(
                    "quadratic stencil corner outside mask".into(),
                ));
            }
            *acc += weight * self.at(comp, mi as usize);
            return Ok(());
        }
        for (k, &wk) in w[axis].iter().enumerate() {
            if wk == 0.0 {
                continue;
            }
            offs[axis] = k as isize - 1;
            self.quad_rec(comp, axis + 1, dim, center, w, offs, weight * wk, acc)?;
        }
        Ok(())
    }

    /// Restrict to a sub-mask of the same lattice.
    pub fn restrict(&self, mask: &Arc<Mask>) -> Result<GridField> {
        let mut out = GridField::zeros(mask.clone(), self.comps);
        for mi in 0..mask.len() {
            let lidx = mask.points[mi] as usize;
            let src = self.mask.index_of[lidx];
            if src < 0 {
                return Err(CrError::OutOfDomain(
                    "restriction target not contained in source mask".into(),
                ));
            }
            for c in 0..self.comps {
                *out.at_mut(c, mi) = self.at(c, src as usize);
            }
        }
        Ok(out)
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> GridField {
        GridField {
            mask: self.mask.clone(),
            comps: self.comps,
            vals: self.vals.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip<F: Fn(Complex64, Complex64) -> Complex64>(&self, o: &GridField, f: F) -> GridField {
        assert_eq!(self.vals.len(), o.vals.len());
        GridField {
            mask: self.mask.clone(),
            comps: self.comps,
            vals: self
                .vals
                .iter()
                .zip(&o.vals)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> GridField {
        self.map(|v| s * v)
    }

    pub fn sup(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}
