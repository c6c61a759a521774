//! Uniform Cartesian grids, fields, masks and set metrics.

mod distance;
pub mod io;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::norm::Norm;

pub use distance::{signed_distance, signed_distance_field, Stencil};

/// Cell-centred grid; `origin` is the centre of cell `(0, .., 0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: Vec<usize>,
    spacing: f64,
    origin: Vec<f64>,
}

impl Grid {
    pub fn new(dims: Vec<usize>, spacing: f64, origin: Vec<f64>) -> Result<Grid> {
        if !(2..=3).contains(&dims.len()) {
            return Err(FlowError::input("grids are supported for N = 2 and N = 3"));
        }
        if dims.iter().any(|&d| d < 4) {
            return Err(FlowError::input("every axis needs at least 4 cells"));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(FlowError::input("grid spacing must be positive"));
        }
        if origin.len() != dims.len() || origin.iter().any(|x| !x.is_finite()) {
            return Err(FlowError::input("grid origin must be finite with one entry per axis"));
        }
        Ok(Grid { dims, spacing, origin })
    }

    /// The box `[-half_width, half_width]^N` split into `cells` cells per axis.
    pub fn cube(dim: usize, cells: usize, half_width: f64) -> Result<Grid> {
        let dx = 2.0 * half_width / cells as f64;
        Grid::new(vec![cells; dim], dx, vec![-half_width + 0.5 * dx; dim])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    /// Lower and upper box corners (cell faces, not centres).
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self.origin.iter().map(|o| o - 0.5 * self.spacing).collect();
        let hi = self
            .origin
            .iter()
            .zip(&self.dims)
            .map(|(o, &n)| o + (n as f64 - 0.5) * self.spacing)
            .collect();
        (lo, hi)
    }

    /// Row-major strides, last axis fastest.
    pub fn strides(&self) -> Vec<usize> {
        let n = self.dim();
        let mut s = vec![1; n];
        for a in (0..n - 1).rev() {
            s[a] = s[a + 1] * self.dims[a + 1];
        }
        s
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        for (c, n) in coords.iter().zip(&self.dims) {
            idx = idx * n + c;
        }
        idx
    }

    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        let n = self.dim();
        let mut out = vec![0; n];
        for a in (0..n).rev() {
            out[a] = idx % self.dims[a];
            idx /= self.dims[a];
        }
        out
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.coords(idx)
            .iter()
            .zip(&self.origin)
            .map(|(&c, o)| o + c as f64 * self.spacing)
            .collect()
    }

    /// All cell centres, in index order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Index of the cell whose centre is nearest to `x`, if inside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut coords = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            let c = ((x[a] - self.origin[a]) / self.spacing).round();
            if c < 0.0 || c >= self.dims[a] as f64 {
                return None;
            }
            coords.push(c as usize);
        }
        Some(self.index(&coords))
    }

    /// Neighbour of `idx` shifted by `offset` cells, if inside the box.
    pub fn shifted(&self, idx: usize, offset: &[i64]) -> Option<usize> {
        let c = self.coords(idx);
        let mut out = Vec::with_capacity(c.len());
        for a in 0..c.len() {
            let v = c[a] as i64 + offset[a];
            if v < 0 || v >= self.dims[a] as i64 {
                return None;
            }
            out.push(v as usize);
        }
        Some(self.index(&out))
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(FlowError::input("fields live on different grids"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.len() {
            return Err(FlowError::input("value count does not match the grid"));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: &Grid, v: f64) -> ScalarField {
        ScalarField { grid: grid.clone(), values: vec![v; grid.len()] }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        ScalarField { grid: grid.clone(), values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|v| f(*v)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_distance(&self, other: &ScalarField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SetMask {
    pub grid: Grid,
    pub flags: Vec<bool>,
}

impl SetMask {
    pub fn new(grid: Grid, flags: Vec<bool>) -> Result<SetMask> {
        if flags.len() != grid.len() {
            return Err(FlowError::input("flag count does not match the grid"));
        }
        Ok(SetMask { grid, flags })
    }

    pub fn empty(grid: &Grid) -> SetMask {
        SetMask { grid: grid.clone(), flags: vec![false; grid.len()] }
    }

    pub fn full(grid: &Grid) -> SetMask {
        SetMask { grid: grid.clone(), flags: vec![true; grid.len()] }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> bool) -> SetMask {
        SetMask { grid: grid.clone(), flags: (0..grid.len()).map(|i| f(&grid.point(i))).collect() }
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.flags.iter().any(|f| *f)
    }

    pub fn is_full(&self) -> bool {
        self.flags.iter().all(|f| *f)
    }

    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }

    /// Cells of `self` missing from `other`.
    pub fn excess_over(&self, other: &SetMask) -> usize {
        self.flags.iter().zip(&other.flags).filter(|(a, b)| **a && !**b).count()
    }

    pub fn is_subset_of(&self, other: &SetMask) -> bool {
        self.grid == other.grid && self.excess_over(other) == 0
    }

    pub fn union(&self, other: &SetMask) -> SetMask {
        let flags = self.flags.iter().zip(&other.flags).map(|(a, b)| *a || *b).collect();
        SetMask { grid: self.grid.clone(), flags }
    }

    /// Mask as a 0/1 field.
    pub fn to_field(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.flags.iter().map(|f| if *f { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Mask-level centroid of the member cell centres.
    pub fn centroid(&self) -> Option<Vec<f64>> {
        let n = self.count();
        if n == 0 {
            return None;
        }
        let mut c = vec![0.0; self.grid.dim()];
        for (i, f) in self.flags.iter().enumerate() {
            if *f {
                for (ca, pa) in c.iter_mut().zip(self.grid.point(i)) {
                    *ca += pa;
                }
            }
        }
        Some(c.into_iter().map(|x| x / n as f64).collect())
    }
}

/// A set given by a mask, optionally with a level function whose zero crossing
/// locates the interface inside cells (`level <= 0` exactly on the mask).
#[derive(Clone, Debug)]
pub struct Front {
    pub mask: SetMask,
    pub level: Option<Vec<f64>>,
}

impl Front {
    pub fn from_mask(mask: SetMask) -> Front {
        Front { mask, level: None }
    }

    /// `{level <= 0}` with sub-cell interface positions taken from `level`.
    pub fn from_level(level: &ScalarField) -> Front {
        Front { mask: sublevel_mask(level, 0.0), level: Some(level.values.clone()) }
    }

    pub fn grid(&self) -> &Grid {
        &self.mask.grid
    }

    /// Fraction along the member-to-outsider edge where the interface sits.
    pub fn crossing(&self, member: usize, outsider: usize) -> f64 {
        match &self.level {
            Some(u) => {
                let (a, b) = (u[member].min(0.0), u[outsider]);
                if b > a {
                    (a / (a - b)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            }
            None => 0.5,
        }
    }

    /// Interface points on every axis edge joining a member and a non-member.
    pub fn interface_points(&self) -> Vec<Vec<f64>> {
        let grid = self.grid();
        let strides = grid.strides();
        let dx = grid.spacing();
        let mut out = Vec::new();
        for i in 0..grid.len() {
            let c = grid.coords(i);
            for a in 0..grid.dim() {
                if c[a] + 1 >= grid.dims()[a] {
                    continue;
                }
                let j = i + strides[a];
                let (fi, fj) = (self.mask.flags[i], self.mask.flags[j]);
                if fi == fj {
                    continue;
                }
                let (m, o, sign) = if fi { (i, j, 1.0) } else { (j, i, -1.0) };
                let t = self.crossing(m, o);
                let mut p = grid.point(m);
                p[a] += sign * t * dx;
                out.push(p);
            }
        }
        out
    }
}

/// `{f <= lam}`.
pub fn sublevel_mask(f: &ScalarField, lam: f64) -> SetMask {
    SetMask { grid: f.grid.clone(), flags: f.values.iter().map(|v| *v <= lam).collect() }
}

/// `{f < lam}`.
pub fn strict_sublevel_mask(f: &ScalarField, lam: f64) -> SetMask {
    SetMask { grid: f.grid.clone(), flags: f.values.iter().map(|v| *v < lam).collect() }
}

/// Staircase estimate: sum over exposed faces of `phi(outer normal) dx^{N-1}`.
/// Faces on the box boundary are not counted.
pub fn anisotropic_perimeter(mask: &SetMask, phi: &Norm) -> Result<f64> {
    if mask.is_empty() || mask.is_full() {
        return Err(FlowError::input("perimeter of an empty or full mask"));
    }
    Ok(staircase_perimeter(mask, phi))
}

pub(crate) fn staircase_perimeter(mask: &SetMask, phi: &Norm) -> f64 {
    let grid = &mask.grid;
    let n = grid.dim();
    let strides = grid.strides();
    let face = grid.spacing().powi(n as i32 - 1);
    let mut weights = Vec::with_capacity(n);
    for a in 0..n {
        let mut e = vec![0.0; n];
        e[a] = 1.0;
        let plus = phi.eval(&e);
        e[a] = -1.0;
        weights.push((plus, phi.eval(&e)));
    }
    let mut total = 0.0;
    for i in 0..grid.len() {
        let c = grid.coords(i);
        for a in 0..n {
            if c[a] + 1 >= grid.dims()[a] {
                continue;
            }
            let j = i + strides[a];
            match (mask.flags[i], mask.flags[j]) {
                (true, false) => total += weights[a].0,
                (false, true) => total += weights[a].1,
                _ => {}
            }
        }
    }
    total * face
}

/// `(min, max)` of `eta(p - center)` over the interface points of `front`.
pub fn inner_outer_radius(front: &Front, eta: &Norm, center: &[f64]) -> Option<(f64, f64)> {
    let pts = front.interface_points();
    if pts.is_empty() {
        return None;
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut diff = vec![0.0; center.len()];
    for p in &pts {
        for (d, (a, b)) in diff.iter_mut().zip(p.iter().zip(center)) {
            *d = a - b;
        }
        let r = eta.eval(&diff);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Some((lo, hi))
}

/// Band-restricted Hausdorff-type distance: `max |d_a - d_b|` over cells where
/// either distance is inside the band. Infinite if either mask is empty.
pub fn hausdorff_distance(a: &SetMask, b: &SetMask, eta: &Norm, band: f64) -> Result<f64> {
    a.grid.check_same(&b.grid)?;
    if a.is_empty() || b.is_empty() {
        return Ok(f64::INFINITY);
    }
    let da = signed_distance_field(a, eta, band)?;
    let db = signed_distance_field(b, eta, band)?;
    let mut best = 0.0f64;
    for (x, y) in da.values.iter().zip(&db.values) {
        if x.abs() < band || y.abs() < band {
            best = best.max((x - y).abs());
        }
    }
    Ok(best)
}

/// True when no interface edge comes within `margin` cells of the box, except
/// near faces across which the mask is invariant in that margin.
pub fn interface_clear_of_boundary(mask: &SetMask, margin: usize) -> bool {
    let grid = &mask.grid;
    let n = grid.dim();
    let strides = grid.strides();
    let dims = grid.dims();
    // invariance of the mask along axis a inside the low / high margin slab
    let mut invariant = vec![[true, true]; n];
    for i in 0..grid.len() {
        let c = grid.coords(i);
        for a in 0..n {
            let m = margin.min(dims[a] - 1);
            if c[a] < m {
                let j = i + (m - c[a]) * strides[a];
                if mask.flags[i] != mask.flags[j] {
                    invariant[a][0] = false;
                }
            }
            if c[a] + m >= dims[a] {
                let top = dims[a] - 1 - m;
                let j = i - (c[a] - top) * strides[a];
                if mask.flags[i] != mask.flags[j] {
                    invariant[a][1] = false;
                }
            }
        }
    }
    for i in 0..grid.len() {
        let c = grid.coords(i);
        for a in 0..n {
            if c[a] + 1 >= dims[a] || mask.flags[i] == mask.flags[i + strides[a]] {
                continue;
            }
            for b in 0..n {
                let lo = c[b].min(if a == b { c[b] + 1 } else { c[b] });
                let hi = if a == b { c[b] + 1 } else { c[b] };
                if lo < margin && !invariant[b][0] {
                    return false;
                }
                if hi + margin >= dims[b] && !invariant[b][1] {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout() {
        let g = Grid::cube(2, 8, 1.0).unwrap();
        assert_eq!(g.spacing(), 0.25);
        assert_eq!(g.point(0), vec![-0.875, -0.875]);
        assert_eq!(g.point(1), vec![-0.875, -0.625]);
        assert_eq!(g.index(&g.coords(37)), 37);
        assert_eq!(g.locate(&[0.1, -0.1]), Some(g.index(&[4, 3])));
        assert!(Grid::cube(2, 3, 1.0).is_err());
        assert!(Grid::new(vec![4, 4], 0.0, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn sublevel_examples() {
        let g = Grid::cube(2, 32, 1.0).unwrap();
        let psi = Norm::l2(2);
        let f = ScalarField::from_fn(&g, |x| psi.polar_eval(x) - 0.5);
        let m = sublevel_mask(&f, 0.1);
        assert_eq!(m, SetMask::from_fn(&g, |x| psi.polar_eval(x) <= 0.6));
        assert!(sublevel_mask(&f, f.max()).is_full());
    }

    #[test]
    fn perimeter_examples() {
        let g = Grid::cube(2, 64, 1.0).unwrap();
        let sq = SetMask::from_fn(&g, |x| x[0].abs() < 0.5 && x[1].abs() < 0.5);
        assert!((anisotropic_perimeter(&sq, &Norm::l2(2)).unwrap() - 4.0).abs() < 1e-12);
        assert!((anisotropic_perimeter(&sq, &Norm::l1(2)).unwrap() - 4.0).abs() < 1e-12);
        assert!(anisotropic_perimeter(&SetMask::empty(&g), &Norm::l2(2)).is_err());
        assert!(anisotropic_perimeter(&SetMask::full(&g), &Norm::l2(2)).is_err());
    }

    #[test]
    fn diamond_staircase_perimeter() {
        // staircase value 8R against the l2 perimeter 4 sqrt(2) R of the diamond
        let g = Grid::cube(2, 128, 1.0).unwrap();
        let r = 0.5;
        let d = SetMask::from_fn(&g, |x| x[0].abs() + x[1].abs() <= r);
        let p = anisotropic_perimeter(&d, &Norm::l2(2)).unwrap();
        assert!((p - 8.0 * r).abs() <= 4.0 * g.spacing(), "{p}");
        assert!(p > 4.0 * 2f64.sqrt() * r);
    }

    #[test]
    fn boundary_margin() {
        let g = Grid::cube(2, 64, 1.0).unwrap();
        let disk = SetMask::from_fn(&g, |x| x[0] * x[0] + x[1] * x[1] <= 0.25);
        assert!(interface_clear_of_boundary(&disk, 8));
        let big = SetMask::from_fn(&g, |x| x[0] * x[0] + x[1] * x[1] <= 0.95);
        assert!(!interface_clear_of_boundary(&big, 8));
        let half = SetMask::from_fn(&g, |x| x[0] <= 0.0);
        assert!(interface_clear_of_boundary(&half, 8));
    }

    #[test]
    fn interface_points_follow_level() {
        let g = Grid::cube(2, 16, 1.0).unwrap();
        let level = ScalarField::from_fn(&g, |x| x[0] - 0.03);
        let front = Front::from_level(&level);
        for p in front.interface_points() {
            assert!((p[0] - 0.03).abs() < 1e-12);
        }
    }
}
