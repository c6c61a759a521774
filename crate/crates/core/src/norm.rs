//! Even, convex, one-homogeneous gauges on R^N with their polars.
//!
//! A [`Norm`] is cheap to clone and immutable. Crystalline norms are stored in
//! facet form `eta(x) = max_i <p_i, x>`; the dual facet list (the H-representation
//! of `conv{p_i}`) is computed once so both `eta` and its polar are exact.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::sphere;

const FACET_TOL: f64 = 1e-12;
const TABLE_DIRECTIONS_2D: usize = 1 << 14;
const ICOSPHERE_LEVEL: usize = 5;

/// Configuration form of a norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NormSpec {
    L1,
    Linf,
    L2,
    Lp { p: f64 },
    Quadratic { matrix: Vec<Vec<f64>> },
    Crystalline { facets: Vec<Vec<f64>> },
    Sum { terms: Vec<TermSpec> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub weight: f64,
    pub norm: NormSpec,
}

impl NormSpec {
    pub fn build(&self, dim: usize) -> Result<Norm> {
        match self {
            NormSpec::L1 => Norm::lp(dim, 1.0),
            NormSpec::Linf => Norm::lp(dim, f64::INFINITY),
            NormSpec::L2 => Norm::lp(dim, 2.0),
            NormSpec::Lp { p } => Norm::lp(dim, *p),
            NormSpec::Quadratic { matrix } => {
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                    return Err(FlowError::input(format!("quadratic norm needs a {dim}x{dim} matrix")));
                }
                Norm::quadratic(DMatrix::from_fn(dim, dim, |i, j| matrix[i][j]))
            }
            NormSpec::Crystalline { facets } => {
                if facets.iter().any(|f| f.len() != dim) {
                    return Err(FlowError::input(format!("crystalline facets must have dimension {dim}")));
                }
                Norm::crystalline(facets.clone())
            }
            NormSpec::Sum { terms } => {
                let built = terms
                    .iter()
                    .map(|t| Ok((t.weight, t.norm.build(dim)?)))
                    .collect::<Result<Vec<_>>>()?;
                Norm::sum(built)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Norm {
    dim: usize,
    kind: Arc<Kind>,
}

#[derive(Debug)]
enum Kind {
    Power(f64),
    Quadratic(Quadratic),
    Crystalline(Polytope),
    Sum(SumNorm),
    SumPolar(Norm),
}

#[derive(Debug)]
struct Quadratic {
    a: Vec<f64>,
    a_inv: Vec<f64>,
    // eigenvectors of A^{-1} (column-major) and its eigenvalues
    evec: Vec<f64>,
    eval_inv: Vec<f64>,
    eig_range: (f64, f64),
}

#[derive(Debug)]
struct Polytope {
    facets: Vec<Vec<f64>>,
    dual: Vec<Vec<f64>>,
    projectors: OnceLock<Vec<FaceProjector>>,
    // 2D: hull vertices of the facet directions, counter-clockwise
    polygon: OnceLock<Vec<[f64; 2]>>,
}

#[derive(Debug)]
struct FaceProjector {
    rows: Vec<usize>,
    // N x k matrix Q_S^T (Q_S Q_S^T)^{-1}, row-major
    lift: Vec<f64>,
}

#[derive(Debug)]
struct SumNorm {
    terms: Vec<(f64, Norm)>,
    table: OnceLock<PolarTable>,
}

#[derive(Debug)]
struct PolarTable {
    points: Vec<Vec<f64>>,
    // outward edge-normal angles, unwrapped to increase (2D only)
    angles: Vec<f64>,
    // subgradients at the points and their unwrapped angles (2D only)
    xi: Vec<[f64; 2]>,
    xi_angles: Vec<f64>,
    // chordal covering radius of the direction mesh
    rho: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn euclid(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dim(n: &Norm, v: &[f64]) -> Result<()> {
    if v.len() != n.dim {
        return Err(FlowError::input(format!(
            "vector of dimension {} given to a norm on R^{}",
            v.len(),
            n.dim
        )));
    }
    Ok(())
}

impl Norm {
    pub fn lp(dim: usize, p: f64) -> Result<Norm> {
        if dim < 2 {
            return Err(FlowError::input("dimension must be at least 2"));
        }
        if !(p >= 1.0) {
            return Err(FlowError::input(format!("l^p norm needs p >= 1, got {p}")));
        }
        Ok(Norm { dim, kind: Arc::new(Kind::Power(p)) })
    }

    pub fn l1(dim: usize) -> Norm {
        Norm::lp(dim, 1.0).expect("valid")
    }

    pub fn l2(dim: usize) -> Norm {
        Norm::lp(dim, 2.0).expect("valid")
    }

    pub fn linf(dim: usize) -> Norm {
        Norm::lp(dim, f64::INFINITY).expect("valid")
    }

    /// `eta(x) = sqrt(x^T A x)` for a symmetric positive definite `A`.
    pub fn quadratic(a: DMatrix<f64>) -> Result<Norm> {
        let n = a.nrows();
        if n < 2 || a.ncols() != n {
            return Err(FlowError::input("quadratic norm needs a square matrix of size >= 2"));
        }
        if (&a - a.transpose()).abs().max() > 1e-12 * a.abs().max() {
            return Err(FlowError::input("quadratic norm matrix must be symmetric"));
        }
        let eig = SymmetricEigen::new(a.clone());
        let lo = eig.eigenvalues.min();
        let hi = eig.eigenvalues.max();
        if !(lo > 0.0) {
            return Err(FlowError::input("quadratic norm matrix must be positive definite"));
        }
        let a_inv = a.clone().try_inverse().ok_or_else(|| FlowError::input("singular matrix"))?;
        let row_major = |m: &DMatrix<f64>| {
            let mut out = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    out.push(m[(i, j)]);
                }
            }
            out
        };
        let q = Quadratic {
            a: row_major(&a),
            a_inv: row_major(&a_inv),
            evec: eig.eigenvectors.as_slice().to_vec(),
            eval_inv: eig.eigenvalues.iter().map(|l| 1.0 / l).collect(),
            eig_range: (lo, hi),
        };
        Ok(Norm { dim: n, kind: Arc::new(Kind::Quadratic(q)) })
    }

    /// Facet form `eta(x) = max_i <p_i, x>`; the list must be symmetric and span R^N.
    pub fn crystalline(facets: Vec<Vec<f64>>) -> Result<Norm> {
        let dim = facets.first().map(|f| f.len()).unwrap_or(0);
        if dim < 2 {
            return Err(FlowError::input("crystalline norm needs facet vectors of dimension >= 2"));
        }
        if facets.iter().any(|f| f.len() != dim || f.iter().any(|x| !x.is_finite())) {
            return Err(FlowError::input("crystalline facets must be finite and of equal dimension"));
        }
        let scale = facets.iter().map(|f| euclid(f)).fold(0.0, f64::max);
        for f in &facets {
            let has_neg = facets
                .iter()
                .any(|g| f.iter().zip(g).all(|(a, b)| (a + b).abs() <= 1e-12 * scale));
            if !has_neg {
                return Err(FlowError::input("crystalline facet list must be symmetric under negation"));
            }
        }
        let rank = DMatrix::from_fn(facets.len(), dim, |i, j| facets[i][j]).rank(1e-10 * scale);
        if rank < dim {
            return Err(FlowError::input("crystalline facet list must span R^N"));
        }
        let dual = dual_facets(&facets)?;
        Ok(Norm { dim, kind: Arc::new(Kind::Crystalline(Polytope::new(facets, dual))) })
    }

    /// Regular 2D polygonal norm with facet vectors `(cos k pi/m, sin k pi/m)`, `k < 2m`.
    pub fn regular_polygon(m: usize) -> Result<Norm> {
        if m < 2 {
            return Err(FlowError::input("regular polygon needs m >= 2"));
        }
        let facets = (0..2 * m)
            .map(|k| {
                let t = k as f64 * PI / m as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        Norm::crystalline(facets)
    }

    pub fn hexagon() -> Norm {
        Norm::regular_polygon(3).expect("valid")
    }

    /// Weighted sum `sum_i w_i eta_i` with `w_i >= 0`.
    pub fn sum(terms: Vec<(f64, Norm)>) -> Result<Norm> {
        let dim = terms.first().map(|t| t.1.dim).ok_or_else(|| FlowError::input("empty sum"))?;
        let mut flat = Vec::new();
        for (w, n) in terms {
            if n.dim != dim {
                return Err(FlowError::input("sum terms must share a dimension"));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(FlowError::input(format!("sum weight must be finite and >= 0, got {w}")));
            }
            if w == 0.0 {
                continue;
            }
            match &*n.kind {
                Kind::Sum(s) => flat.extend(s.terms.iter().map(|(v, m)| (w * v, m.clone()))),
                _ => flat.push((w, n)),
            }
        }
        if flat.is_empty() {
            return Err(FlowError::input("sum needs at least one positive weight"));
        }
        if flat.len() > 1 && dim > 3 {
            return Err(FlowError::input("polar of multi-term sums is only available for N <= 3"));
        }
        Ok(Norm { dim, kind: Arc::new(Kind::Sum(SumNorm { terms: flat, table: OnceLock::new() })) })
    }

    pub fn scaled(&self, w: f64) -> Result<Norm> {
        Norm::sum(vec![(w, self.clone())])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_crystalline(&self) -> bool {
        self.polytope().is_some()
    }

    /// `eta(v)`. Panics in debug builds on a dimension mismatch; see [`eval_norm`].
    pub fn eval(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim);
        match &*self.kind {
            Kind::Power(p) => power_norm(v, *p),
            Kind::Quadratic(q) => quad_form(&q.a, v).sqrt(),
            Kind::Crystalline(poly) => max_dot(&poly.facets, v),
            Kind::Sum(s) => s.terms.iter().map(|(w, n)| w * n.eval(v)).sum(),
            Kind::SumPolar(s) => s.sum_polar_bracket(v).0,
        }
    }

    /// `eta°(v) = sup { <nu, v> : eta(nu) <= 1 }`.
    pub fn polar_eval(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim);
        match &*self.kind {
            Kind::Power(p) => power_norm(v, conjugate_exponent(*p)),
            Kind::Quadratic(q) => quad_form(&q.a_inv, v).sqrt(),
            Kind::Crystalline(poly) => max_dot(&poly.dual, v),
            Kind::Sum(_) => self.sum_polar_bracket(v).0,
            Kind::SumPolar(s) => s.eval(v),
        }
    }

    /// Certified enclosure `[lo, hi]` of `eta°(v)`; `lo == hi` for exact kinds.
    pub fn polar_bracket(&self, v: &[f64]) -> (f64, f64) {
        match &*self.kind {
            Kind::Sum(_) => self.sum_polar_bracket(v),
            _ => {
                let p = self.polar_eval(v);
                (p, p)
            }
        }
    }

    /// The polar norm as a [`Norm`].
    pub fn polar(&self) -> Norm {
        let kind = match &*self.kind {
            Kind::Power(p) => Kind::Power(conjugate_exponent(*p)),
            Kind::Quadratic(q) => {
                let n = self.dim;
                let a = DMatrix::from_row_slice(n, n, &q.a_inv);
                return Norm::quadratic(a).expect("inverse of an SPD matrix is SPD");
            }
            Kind::Crystalline(poly) => Kind::Crystalline(Polytope::new(poly.dual.clone(), poly.facets.clone())),
            Kind::Sum(s) if s.terms.len() == 1 => {
                let (w, n) = &s.terms[0];
                return n.polar().scaled(1.0 / w).expect("positive weight");
            }
            Kind::Sum(_) => Kind::SumPolar(self.clone()),
            Kind::SumPolar(s) => return s.clone(),
        };
        Norm { dim: self.dim, kind: Arc::new(kind) }
    }

    /// One element of the subdifferential of `eta` at `v`; zero at `v = 0`.
    pub fn subgradient(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        if v.iter().all(|x| *x == 0.0) {
            return vec![0.0; self.dim];
        }
        match &*self.kind {
            Kind::Power(p) => power_subgradient(v, *p),
            Kind::Quadratic(q) => {
                let eta = quad_form(&q.a, v).sqrt();
                mat_vec(&q.a, v).into_iter().map(|x| x / eta).collect()
            }
            Kind::Crystalline(poly) => poly.facets[argmax_dot(&poly.facets, v)].clone(),
            Kind::Sum(s) => {
                let mut out = vec![0.0; self.dim];
                for (w, n) in &s.terms {
                    for (o, x) in out.iter_mut().zip(n.subgradient(v)) {
                        *o += w * x;
                    }
                }
                out
            }
            Kind::SumPolar(s) => {
                let table = s.sum_table();
                table.points[table.argmax(v)].clone()
            }
        }
    }

    /// Constants `(a1, a2)` with `a1 |x| <= eta(x) <= a2 |x|`.
    pub fn euclidean_bounds(&self) -> (f64, f64) {
        let n = self.dim as f64;
        match &*self.kind {
            Kind::Power(p) => {
                let k = n.powf(1.0 / p - 0.5);
                if *p >= 2.0 {
                    (k, 1.0)
                } else {
                    (1.0, k)
                }
            }
            Kind::Quadratic(q) => (q.eig_range.0.sqrt(), q.eig_range.1.sqrt()),
            Kind::Crystalline(poly) => {
                let a2 = poly.facets.iter().map(|p| euclid(p)).fold(0.0, f64::max);
                let qmax = poly.dual.iter().map(|q| euclid(q)).fold(0.0, f64::max);
                (1.0 / qmax, a2)
            }
            Kind::Sum(s) => s.terms.iter().fold((0.0, 0.0), |(lo, hi), (w, m)| {
                let (a, b) = m.euclidean_bounds();
                (lo + w * a, hi + w * b)
            }),
            Kind::SumPolar(s) => {
                let (a, b) = s.euclidean_bounds();
                (1.0 / b, 1.0 / a)
            }
        }
    }

    pub fn polar_euclidean_bounds(&self) -> (f64, f64) {
        let (a, b) = self.euclidean_bounds();
        (1.0 / b, 1.0 / a)
    }

    /// Facet form `(p_i, q_j)` with `eta = max <p_i, .>` and `eta° = max <q_j, .>`, if polyhedral.
    pub fn polytope(&self) -> Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        match &*self.kind {
            Kind::Power(p) if *p == 1.0 => Some((sign_vectors(self.dim), signed_axes(self.dim))),
            Kind::Power(p) if p.is_infinite() => Some((signed_axes(self.dim), sign_vectors(self.dim))),
            Kind::Crystalline(poly) => Some((poly.facets.clone(), poly.dual.clone())),
            Kind::Sum(s) if s.terms.len() == 1 => {
                let (w, n) = &s.terms[0];
                let (f, d) = n.polytope()?;
                let scale = |vs: Vec<Vec<f64>>, k: f64| vs.into_iter().map(|v| v.iter().map(|x| x * k).collect()).collect();
                Some((scale(f, *w), scale(d, 1.0 / w)))
            }
            _ => None,
        }
    }

    /// Splits a single-term sum `w * eta` into `(w, eta)`.
    fn strip_scale(&self) -> (f64, &Norm) {
        match &*self.kind {
            Kind::Sum(s) if s.terms.len() == 1 => (s.terms[0].0, &s.terms[0].1),
            _ => (1.0, self),
        }
    }

    /// Weights `a` with `eta(x) = sum a_k |x_k|`, when the norm has that form.
    pub fn axis_weights(&self) -> Option<Vec<f64>> {
        let (w, n) = self.strip_scale();
        match &*n.kind {
            Kind::Power(p) if *p == 1.0 => Some(vec![w; self.dim]),
            _ => None,
        }
    }

    /// Structural equality of the underlying definitions.
    pub fn same_as(&self, other: &Norm) -> bool {
        if self.dim != other.dim {
            return false;
        }
        if Arc::ptr_eq(&self.kind, &other.kind) {
            return true;
        }
        match (&*self.kind, &*other.kind) {
            (Kind::Power(a), Kind::Power(b)) => a == b,
            (Kind::Quadratic(a), Kind::Quadratic(b)) => a.a == b.a,
            (Kind::Crystalline(a), Kind::Crystalline(b)) => a.facets == b.facets,
            (Kind::Sum(a), Kind::Sum(b)) => {
                a.terms.len() == b.terms.len()
                    && a.terms.iter().zip(&b.terms).all(|((w, m), (v, n))| w == v && m.same_as(n))
            }
            (Kind::SumPolar(a), Kind::SumPolar(b)) => a.same_as(b),
            _ => false,
        }
    }

    /// Whether [`Norm::project_polar_ball`] is available for this kind.
    pub fn supports_projection(&self) -> bool {
        !matches!(&*self.kind, Kind::SumPolar(_))
    }

    /// Euclidean projection of `w` onto `{z : eta°(z) <= 1}`.
    pub fn project_polar_ball(&self, w: &[f64]) -> Vec<f64> {
        let mut out = w.to_vec();
        self.project_polar_ball_in_place(&mut out);
        out
    }

    pub fn project_polar_ball_in_place(&self, w: &mut [f64]) {
        match &*self.kind {
            Kind::Power(p) => project_lq_ball(w, conjugate_exponent(*p)),
            Kind::Quadratic(q) => project_ellipsoid(q, w),
            Kind::Crystalline(poly) => poly.project(w),
            Kind::Sum(s) if s.terms.len() == 1 => {
                let (c, n) = (&s.terms[0].0, &s.terms[0].1);
                w.iter_mut().for_each(|x| *x /= c);
                n.project_polar_ball_in_place(w);
                w.iter_mut().for_each(|x| *x *= c);
            }
            Kind::Sum(s) => s.project_minkowski(w),
            Kind::SumPolar(_) => panic!("projection onto the unit ball of a sum norm is not supported"),
        }
    }

    fn sum_table(&self) -> &PolarTable {
        match &*self.kind {
            Kind::Sum(s) => s.table.get_or_init(|| PolarTable::build(self)),
            _ => unreachable!("polar table requested for a non-sum norm"),
        }
    }

    fn sum_polar_bracket(&self, v: &[f64]) -> (f64, f64) {
        let s = match &*self.kind {
            Kind::Sum(s) => s,
            _ => unreachable!(),
        };
        if s.terms.len() == 1 {
            let (w, n) = &s.terms[0];
            let p = n.polar_eval(v) / w;
            return (p, p);
        }
        let table = self.sum_table();
        let lo = dot(&table.points[table.argmax(v)], v).max(0.0);
        if let Some(hi) = table.gauge_of_subgradients(v) {
            return (lo, hi.max(lo));
        }
        let (a1, a2) = self.euclidean_bounds();
        let lip = 1.0 / a1 + a2 / (a1 * a1);
        (lo, lo + euclid(v) * lip * table.rho)
    }
}

/// `eta(v)` with a dimension check.
pub fn eval_norm(n: &Norm, v: &[f64]) -> Result<f64> {
    check_dim(n, v)?;
    Ok(n.eval(v))
}

/// `eta°(v)` with a dimension check.
pub fn polar_eval(n: &Norm, v: &[f64]) -> Result<f64> {
    check_dim(n, v)?;
    Ok(n.polar_eval(v))
}

pub fn subgradient_select(n: &Norm, v: &[f64]) -> Result<Vec<f64>> {
    check_dim(n, v)?;
    Ok(n.subgradient(v))
}

/// `psi + delta phi`; `delta = 0` returns `psi` unchanged.
pub fn regularize_mobility(psi: &Norm, delta: f64, phi: &Norm) -> Result<Norm> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(FlowError::input(format!("regularization weight must be >= 0, got {delta}")));
    }
    if psi.dim != phi.dim {
        return Err(FlowError::input("mobility and anisotropy must share a dimension"));
    }
    if delta == 0.0 {
        return Ok(psi.clone());
    }
    Norm::sum(vec![(1.0, psi.clone()), (delta, phi.clone())])
}

/// Certified `(c1, c2)` with `c1 b°(v) <= a°(v) <= c2 b°(v)` for all `v`.
pub fn ellipticity_constants(a: &Norm, b: &Norm) -> Result<(f64, f64)> {
    if a.dim != b.dim {
        return Err(FlowError::input("norms must share a dimension"));
    }
    let needs_sampling = a.polytope().is_none() || b.polytope().is_none();
    if needs_sampling && a.dim > 3 {
        return Err(FlowError::input("sampled ellipticity constants are only available for N <= 3"));
    }
    let (wa, ua) = a.strip_scale();
    let (wb, ub) = b.strip_scale();
    if ua.same_as(ub) {
        let r = wb / wa;
        return Ok((r, r));
    }
    let c2 = match b.polytope() {
        Some((pb, _)) => vertex_ratio_max(a, b, &pb),
        None => sampled_ratio_max(a, b),
    };
    let inv_c1 = match a.polytope() {
        Some((pa, _)) => vertex_ratio_max(b, a, &pa),
        None => sampled_ratio_max(b, a),
    };
    Ok((1.0 / inv_c1, c2))
}

// max of num°/den° over the polytope {den° <= 1}, attained at its vertices
fn vertex_ratio_max(num: &Norm, den: &Norm, vertices: &[Vec<f64>]) -> f64 {
    vertices
        .iter()
        .map(|p| num.polar_bracket(p).1 / den.polar_bracket(p).0)
        .fold(0.0, f64::max)
}

#[derive(PartialEq)]
struct Arc2 {
    ub: f64,
    lo: f64,
    hi: f64,
}

impl Eq for Arc2 {}

impl PartialOrd for Arc2 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Arc2 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ub.total_cmp(&other.ub)
    }
}

// certified upper bound of num°/den° over the unit sphere
fn sampled_ratio_max(num: &Norm, den: &Norm) -> f64 {
    let (_, n_hi) = num.polar_euclidean_bounds();
    let (d_lo, d_hi) = den.polar_euclidean_bounds();
    let lip = n_hi / d_lo + n_hi * d_hi / (d_lo * d_lo);
    let ratio = |u: &[f64]| num.polar_bracket(u).1 / den.polar_bracket(u).0;
    if num.dim == 2 {
        // arc bound: numerator is convex along the chord, denominator is bounded
        // below by the supporting lines of its polar subgradients at the endpoints
        let den_polar = den.polar();
        let probe = |t: f64| {
            let u = [t.cos(), t.sin()];
            let (_, a_hi) = num.polar_bracket(&u);
            let (b_lo, _) = den.polar_bracket(&u);
            let xi = den_polar.subgradient(&u);
            (u, a_hi, b_lo, [xi[0], xi[1]])
        };
        type Probe = ([f64; 2], f64, f64, [f64; 2]);
        let arc_bound = |l: &Probe, r: &Probe| -> f64 {
            let (ul, al, _, xl) = l;
            let (ur, ar, _, xr) = r;
            let dl = |w: [f64; 2]| xl[0] * w[0] + xl[1] * w[1];
            let dr = |w: [f64; 2]| xr[0] * w[0] + xr[1] * w[1];
            let at_s = |s: f64| {
                let w = [s * ul[0] + (1.0 - s) * ur[0], s * ul[1] + (1.0 - s) * ur[1]];
                (s * al + (1.0 - s) * ar) / dl(w).max(dr(w))
            };
            let mut ub = at_s(0.0).max(at_s(1.0));
            // crossing of the two supporting lines along the chord
            let g0 = dl(*ur) - dr(*ur);
            let g1 = dl(*ul) - dr(*ul);
            if (g0 > 0.0) != (g1 > 0.0) && g1 != g0 {
                let sc = g0 / (g0 - g1);
                if sc > 0.0 && sc < 1.0 {
                    ub = ub.max(at_s(sc));
                }
            }
            ub
        };
        let start = 1024;
        let probes: Vec<Probe> = (0..=start).map(|k| probe(PI * k as f64 / start as f64)).collect();
        let mut heap = BinaryHeap::new();
        let mut best = 0.0f64;
        for p in &probes {
            best = best.max(ratio(&p.0));
        }
        for k in 0..start {
            let lo = PI * k as f64 / start as f64;
            let hi = PI * (k + 1) as f64 / start as f64;
            heap.push(Arc2 { ub: arc_bound(&probes[k], &probes[k + 1]), lo, hi });
        }
        let mut evals = 0usize;
        while let Some(top) = heap.pop() {
            if top.ub - best <= 1e-10 * best.max(1.0) || evals > 1 << 20 {
                return top.ub.max(best);
            }
            let mid = 0.5 * (top.lo + top.hi);
            let (pl, pm, pr) = (probe(top.lo), probe(mid), probe(top.hi));
            evals += 1;
            best = best.max(ratio(&pm.0));
            heap.push(Arc2 { ub: arc_bound(&pl, &pm), lo: top.lo, hi: mid });
            heap.push(Arc2 { ub: arc_bound(&pm, &pr), lo: mid, hi: top.hi });
        }
        best
    } else {
        let mesh = sphere::mesh(num.dim, ICOSPHERE_LEVEL);
        let best = mesh.directions.iter().map(|u| ratio(u)).fold(0.0, f64::max);
        best + lip * mesh.rho
    }
}

fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn power_norm(v: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else if p == 2.0 {
        euclid(v)
    } else if p.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else {
        let m = v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        if m == 0.0 {
            return 0.0;
        }
        m * v.iter().map(|x| (x.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

fn power_subgradient(v: &[f64], p: f64) -> Vec<f64> {
    if p == 1.0 {
        v.iter().map(|x| if *x == 0.0 { 0.0 } else { x.signum() }).collect()
    } else if p.is_infinite() {
        let mut k = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[k].abs() {
                k = i;
            }
        }
        let mut out = vec![0.0; v.len()];
        out[k] = v[k].signum();
        out
    } else {
        let m = v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        let w: Vec<f64> = v.iter().map(|x| x / m).collect();
        let nrm = power_norm(&w, p);
        w.iter().map(|x| x.signum() * (x.abs() / nrm).powf(p - 1.0)).collect()
    }
}

fn quad_form(a: &[f64], v: &[f64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut r = 0.0;
        for j in 0..n {
            r += a[i * n + j] * v[j];
        }
        s += v[i] * r;
    }
    s.max(0.0)
}

fn mat_vec(a: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| (0..n).map(|j| a[i * n + j] * v[j]).sum()).collect()
}

fn max_dot(list: &[Vec<f64>], v: &[f64]) -> f64 {
    list.iter().map(|p| dot(p, v)).fold(f64::NEG_INFINITY, f64::max).max(0.0)
}

// lowest index among maximizers, with a relative tie tolerance
fn argmax_dot(list: &[Vec<f64>], v: &[f64]) -> usize {
    let vals: Vec<f64> = list.iter().map(|p| dot(p, v)).collect();
    let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-14 * best.abs().max(1e-300);
    vals.iter().position(|x| *x >= best - tol).unwrap_or(0)
}

fn sign_vectors(dim: usize) -> Vec<Vec<f64>> {
    (0..1usize << dim)
        .map(|m| (0..dim).map(|i| if m >> i & 1 == 1 { -1.0 } else { 1.0 }).collect())
        .collect()
}

fn signed_axes(dim: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[i] = s;
            out.push(e);
        }
    }
    out
}

/// Counter-clockwise hull vertices (monotone chain, collinear points dropped).
fn convex_hull_2d(points: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 1e-14 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

// facet normals q of conv{p_i}, scaled so that max_i <q, p_i> = 1
fn dual_facets(points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let dim = points[0].len();
    let scale = points.iter().map(|p| euclid(p)).fold(0.0, f64::max);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for combo in combinations(points.len(), dim) {
        let m = DMatrix::from_fn(dim, dim, |i, j| points[combo[i]][j]);
        let Some(q) = m.lu().solve(&DVector::from_element(dim, 1.0)) else { continue };
        let q: Vec<f64> = q.iter().cloned().collect();
        if !q.iter().all(|x| x.is_finite()) {
            continue;
        }
        let qn = euclid(&q);
        if points.iter().any(|p| dot(p, &q) > 1.0 + FACET_TOL * qn * scale) {
            continue;
        }
        let fresh = !out
            .iter()
            .any(|o| o.iter().zip(&q).all(|(a, b)| (a - b).abs() <= 1e-10 * qn.max(1.0)));
        if fresh {
            out.push(q);
        }
    }
    if out.len() < dim + 1 {
        return Err(FlowError::input("crystalline facet list does not bound a full-dimensional polytope"));
    }
    Ok(out)
}

impl Polytope {
    fn new(facets: Vec<Vec<f64>>, dual: Vec<Vec<f64>>) -> Polytope {
        Polytope { facets, dual, projectors: OnceLock::new(), polygon: OnceLock::new() }
    }

    // projection onto conv{facets} = {z : <q_j, z> <= 1}
    fn project(&self, w: &mut [f64]) {
        let viol = self.dual.iter().map(|q| dot(q, w)).fold(f64::NEG_INFINITY, f64::max);
        if viol <= 1.0 {
            return;
        }
        if w.len() == 2 {
            self.project_polygon(w);
            return;
        }
        // nearest feasible projection onto the affine hull of an active set
        let dim = w.len();
        let projectors = self.projectors.get_or_init(|| self.build_projectors(dim));
        let mut best = f64::INFINITY;
        let mut best_z = [0.0; 3];
        let mut z = [0.0; 3];
        let mut resid = [0.0; 3];
        for fp in projectors {
            let k = fp.rows.len();
            for (r, &j) in resid.iter_mut().zip(&fp.rows) {
                *r = dot(&self.dual[j], w) - 1.0;
            }
            for i in 0..dim {
                let mut s = 0.0;
                for c in 0..k {
                    s += fp.lift[i * k + c] * resid[c];
                }
                z[i] = w[i] - s;
            }
            let d: f64 = (0..dim).map(|i| (z[i] - w[i]) * (z[i] - w[i])).sum();
            if d >= best {
                continue;
            }
            if self.dual.iter().all(|q| dot(q, &z[..dim]) <= 1.0 + 1e-12) {
                best = d;
                best_z = z;
            }
        }
        w.copy_from_slice(&best_z[..dim]);
    }

    fn project_polygon(&self, w: &mut [f64]) {
        let poly = self.polygon.get_or_init(|| convex_hull_2d(&self.facets));
        let mut best = f64::INFINITY;
        let mut out = [0.0; 2];
        for k in 0..poly.len() {
            let a = poly[k];
            let b = poly[(k + 1) % poly.len()];
            let e = [b[0] - a[0], b[1] - a[1]];
            let t = (((w[0] - a[0]) * e[0] + (w[1] - a[1]) * e[1]) / (e[0] * e[0] + e[1] * e[1])).clamp(0.0, 1.0);
            let q = [a[0] + t * e[0], a[1] + t * e[1]];
            let d = (q[0] - w[0]).powi(2) + (q[1] - w[1]).powi(2);
            if d < best {
                best = d;
                out = q;
            }
        }
        w.copy_from_slice(&out);
    }

    fn build_projectors(&self, dim: usize) -> Vec<FaceProjector> {
        let mut out = Vec::new();
        for k in 1..=dim {
            for rows in combinations(self.dual.len(), k) {
                let q = DMatrix::from_fn(k, dim, |i, j| self.dual[rows[i]][j]);
                let gram = &q * q.transpose();
                if gram.determinant().abs() < 1e-12 {
                    continue;
                }
                let Some(gi) = gram.try_inverse() else { continue };
                let lift = q.transpose() * gi;
                let mut flat = Vec::with_capacity(dim * k);
                for i in 0..dim {
                    for c in 0..k {
                        flat.push(lift[(i, c)]);
                    }
                }
                out.push(FaceProjector { rows, lift: flat });
            }
        }
        out
    }
}

// projection onto the unit ball of l^q
fn project_lq_ball(w: &mut [f64], q: f64) {
    if q.is_infinite() {
        w.iter_mut().for_each(|x| *x = x.clamp(-1.0, 1.0));
    } else if q == 2.0 {
        let r = euclid(w);
        if r > 1.0 {
            w.iter_mut().for_each(|x| *x /= r);
        }
    } else if q == 1.0 {
        project_l1_ball(w);
    } else {
        if power_norm(w, q) <= 1.0 {
            return;
        }
        // z_i = sign(w_i) t_i with t_i + mu q t_i^{q-1} = |w_i|, mu chosen so that |z|_q = 1
        let abs: Vec<f64> = w.iter().map(|x| x.abs()).collect();
        let solve_t = |a: f64, mu: f64| {
            let (mut lo, mut hi) = (0.0, a);
            for _ in 0..100 {
                let t = 0.5 * (lo + hi);
                if t + mu * q * t.powf(q - 1.0) > a {
                    hi = t;
                } else {
                    lo = t;
                }
            }
            0.5 * (lo + hi)
        };
        let norm_at = |mu: f64| abs.iter().map(|a| solve_t(*a, mu).powf(q)).sum::<f64>();
        let (mut lo, mut hi) = (0.0, 1.0);
        while norm_at(hi) > 1.0 {
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mu = 0.5 * (lo + hi);
            if norm_at(mu) > 1.0 {
                lo = mu;
            } else {
                hi = mu;
            }
        }
        for (x, a) in w.iter_mut().zip(&abs) {
            *x = x.signum() * solve_t(*a, hi);
        }
    }
}

fn project_l1_ball(w: &mut [f64]) {
    let s: f64 = w.iter().map(|x| x.abs()).sum();
    if s <= 1.0 {
        return;
    }
    let mut u: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if *ui > t {
            theta = t;
        }
    }
    w.iter_mut().for_each(|x| *x = x.signum() * (x.abs() - theta).max(0.0));
}

// projection onto {z^T A^{-1} z <= 1}
fn project_ellipsoid(q: &Quadratic, w: &mut [f64]) {
    if quad_form(&q.a_inv, w) <= 1.0 {
        return;
    }
    let n = w.len();
    // coordinates in the eigenbasis of A^{-1}
    let c: Vec<f64> = (0..n).map(|k| (0..n).map(|i| q.evec[k * n + i] * w[i]).sum()).collect();
    let g = |mu: f64| -> f64 {
        c.iter()
            .zip(&q.eval_inv)
            .map(|(ci, l)| l * ci * ci / ((1.0 + mu * l) * (1.0 + mu * l)))
            .sum::<f64>()
            - 1.0
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mu = 0.5 * (lo + hi);
        if g(mu) > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    let y: Vec<f64> = c.iter().zip(&q.eval_inv).map(|(ci, l)| ci / (1.0 + hi * l)).collect();
    for i in 0..n {
        w[i] = (0..n).map(|k| q.evec[k * n + i] * y[k]).sum();
    }
}

impl SumNorm {
    // projection onto sum_i w_i K_i by block coordinate descent over the summands
    fn project_minkowski(&self, w: &mut [f64]) {
        let n = w.len();
        let m = self.terms.len();
        let mut parts = vec![vec![0.0; n]; m];
        let mut total = vec![0.0; n];
        let mut r = vec![0.0; n];
        for _ in 0..2000 {
            let mut change = 0.0f64;
            for (i, (wi, ni)) in self.terms.iter().enumerate() {
                for k in 0..n {
                    r[k] = (w[k] - total[k] + wi * parts[i][k]) / wi;
                }
                ni.project_polar_ball_in_place(&mut r);
                for k in 0..n {
                    let delta = wi * (r[k] - parts[i][k]);
                    total[k] += delta;
                    change = change.max(delta.abs());
                    parts[i][k] = r[k];
                }
            }
            if change <= 1e-14 {
                break;
            }
        }
        w.copy_from_slice(&total);
    }
}

impl PolarTable {
    fn build(norm: &Norm) -> PolarTable {
        if norm.dim == 2 {
            let m = TABLE_DIRECTIONS_2D;
            let points: Vec<Vec<f64>> = (0..m)
                .map(|j| {
                    let t = 2.0 * PI * j as f64 / m as f64;
                    let u = [t.cos(), t.sin()];
                    let e = norm.eval(&u);
                    vec![u[0] / e, u[1] / e]
                })
                .collect();
            let mut angles = Vec::with_capacity(m);
            let mut prev = f64::NEG_INFINITY;
            for j in 0..m {
                let a = &points[j];
                let b = &points[(j + 1) % m];
                let mut t = (-(b[0] - a[0])).atan2(b[1] - a[1]);
                while t < prev {
                    t += 2.0 * PI;
                }
                angles.push(t);
                prev = t;
            }
            let xi: Vec<[f64; 2]> = points
                .iter()
                .map(|k| {
                    let g = norm.subgradient(k);
                    [g[0], g[1]]
                })
                .collect();
            let mut xi_angles = Vec::with_capacity(m);
            let mut prev = f64::NEG_INFINITY;
            for g in &xi {
                let mut t = g[1].atan2(g[0]);
                while t < prev {
                    t += 2.0 * PI;
                }
                xi_angles.push(t);
                prev = t;
            }
            PolarTable { points, angles, xi, xi_angles, rho: 2.0 * (PI / (2.0 * m as f64)).sin() }
        } else {
            let mesh = sphere::mesh(norm.dim, ICOSPHERE_LEVEL);
            let points = mesh
                .directions
                .iter()
                .map(|u| {
                    let e = norm.eval(u);
                    u.iter().map(|x| x / e).collect()
                })
                .collect();
            PolarTable { points, angles: Vec::new(), xi: Vec::new(), xi_angles: Vec::new(), rho: mesh.rho }
        }
    }

    // gauge of conv{xi_j} at v: an upper bound for the support function of the
    // unit ball, which lies inside every half-plane {xi_j . nu <= 1}
    fn gauge_of_subgradients(&self, v: &[f64]) -> Option<f64> {
        if self.xi.is_empty() {
            return None;
        }
        if v[0] == 0.0 && v[1] == 0.0 {
            return Some(0.0);
        }
        let m = self.xi.len();
        let a0 = self.xi_angles[0];
        let mut beta = v[1].atan2(v[0]);
        while beta < a0 {
            beta += 2.0 * PI;
        }
        while beta >= a0 + 2.0 * PI {
            beta -= 2.0 * PI;
        }
        let j = self.xi_angles.partition_point(|a| *a < beta);
        let mut best = f64::INFINITY;
        for back in 1..4 {
            for fwd in 0..3 {
                let a = self.xi[(j + m - back) % m];
                let b = self.xi[(j + fwd) % m];
                let det = a[0] * b[1] - a[1] * b[0];
                if det.abs() < 1e-300 {
                    continue;
                }
                let la = (v[0] * b[1] - v[1] * b[0]) / det;
                let lb = (a[0] * v[1] - a[1] * v[0]) / det;
                if la >= 0.0 && lb >= 0.0 {
                    best = best.min(la + lb);
                }
            }
        }
        best.is_finite().then_some(best)
    }

    fn argmax(&self, v: &[f64]) -> usize {
        if self.angles.is_empty() {
            return argmax_dot(&self.points, v);
        }
        let m = self.points.len();
        let a0 = self.angles[0];
        let mut beta = v[1].atan2(v[0]);
        while beta < a0 {
            beta += 2.0 * PI;
        }
        while beta >= a0 + 2.0 * PI {
            beta -= 2.0 * PI;
        }
        let j = self.angles.partition_point(|a| *a < beta);
        let mut best = j % m;
        let mut best_val = dot(&self.points[best], v);
        for off in [m - 2, m - 1, 1, 2] {
            let k = (j + off) % m;
            let val = dot(&self.points[k], v);
            if val > best_val {
                best_val = val;
                best = k;
            }
        }
        best
    }
}
