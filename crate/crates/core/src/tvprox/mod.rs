//! Anisotropic total-variation resolvent: find `(u, z)` with
//! `-h div z + u = f`, `phi°(z) <= 1` and `z . grad u = phi(grad u)`.
//!
//! The discrete problem is `min_u sum phi(grad u) + (1/2h) |u - f|^2` with
//! forward differences (zero across the last cell of each axis) and the exact
//! negative adjoint as divergence. Backends: exact line solves for
//! axis-separable anisotropies in 2D, ADMM with a DCT-based linear solve, and
//! accelerated primal-dual iterations.
//!
//! Stopping certificate: with `r = u - f - h div z` and calibration defect
//! `e = phi(grad u) - z . grad u >= 0`, the iterate `u` is within
//! `sqrt(2 h sum e)` (in l2, hence in sup) of the exact resolvent of `f + r`,
//! and the resolvent is a sup-norm contraction, so
//! `|u - u*|_inf <= |r|_inf + sqrt(2 h sum e)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::geometry::{Grid, ScalarField};
use crate::norm::Norm;

mod admm;
mod neumann;
mod separable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub method: Method,
    pub max_iterations: usize,
    /// Certified sup-norm tolerance; `None` means `1e-4 * max(1, |f|_inf)`.
    pub tolerance: Option<f64>,
    /// Initial primal step in units of `h`; the dual step follows from
    /// `primal * dual * |grad|^2 = 1`.
    pub primal_step: Option<f64>,
    pub dual_step: Option<f64>,
    pub overrelaxation: f64,
    /// Use the strong convexity of the fidelity term to shrink the primal step.
    pub accelerate: bool,
    /// Iterations between certificate evaluations.
    pub check_every: usize,
    /// Initial ADMM penalty times `h` (a squared length).
    pub penalty: Option<f64>,
    /// Rebalance the ADMM penalty from primal and dual residuals.
    pub adaptive: bool,
    /// ADMM over-relaxation factor in `(0, 2)`.
    pub relaxation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `Separable` when it applies, otherwise `Admm`.
    Auto,
    /// Alternating exact 1D solves; 2D weighted-l1 anisotropies only.
    Separable,
    /// Splitting `p = grad u`; the `u` update is an exact DCT solve.
    Admm,
    /// Accelerated primal-dual iterations on the saddle-point form.
    PrimalDual,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            method: Method::Auto,
            max_iterations: 20_000,
            tolerance: None,
            primal_step: None,
            dual_step: None,
            overrelaxation: 1.0,
            accelerate: true,
            check_every: 10,
            penalty: None,
            adaptive: true,
            relaxation: 1.6,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ResolventProblem<'a> {
    pub f: &'a ScalarField,
    pub h: f64,
    pub phi: &'a Norm,
}

#[derive(Clone, Debug)]
pub struct ResolventSolution {
    pub u: ScalarField,
    /// Dual field, `N` entries per cell, cell-major.
    pub z: Vec<f64>,
    /// `max |-h div z + u - f|`.
    pub residual: f64,
    /// Upper bound for `|u - u*|_inf`.
    pub certificate: f64,
    /// Duality gap `sum e + (1/2h) |r|^2`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub tolerance: f64,
}

impl ResolventSolution {
    pub fn dim(&self) -> usize {
        self.u.grid.dim()
    }

    pub fn z_at(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.z[i * n..(i + 1) * n]
    }

    /// Discrete divergence of `z`.
    pub fn div_z(&self) -> Vec<f64> {
        let ops = Ops::new(&self.u.grid);
        let mut out = vec![0.0; self.u.grid.len()];
        ops.div(&self.z, &mut out);
        out
    }
}

/// Euclidean projection onto `{z : phi°(z) <= 1}`.
pub fn project_polar_ball(phi: &Norm, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != phi.dim() {
        return Err(FlowError::input("vector and norm dimensions differ"));
    }
    if !phi.supports_projection() {
        return Err(FlowError::input("projection is not available for this norm kind"));
    }
    Ok(phi.project_polar_ball(w))
}

/// Squared operator norm bound of the forward-difference gradient.
pub fn gradient_norm_sq(grid: &Grid) -> f64 {
    4.0 * grid.dim() as f64 / (grid.spacing() * grid.spacing())
}

/// Forward-difference gradient, `N` entries per cell.
pub fn gradient(field: &ScalarField) -> Vec<f64> {
    let ops = Ops::new(&field.grid);
    let mut out = vec![0.0; field.values.len() * ops.n];
    ops.grad(&field.values, &mut out);
    out
}

/// Negative adjoint of [`gradient`].
pub fn divergence(grid: &Grid, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != grid.len() * grid.dim() {
        return Err(FlowError::input("dual field size does not match the grid"));
    }
    let ops = Ops::new(grid);
    let mut out = vec![0.0; grid.len()];
    ops.div(z, &mut out);
    Ok(out)
}

const CHUNK: usize = 4096;

pub(crate) struct Ops {
    pub(crate) n: usize,
    strides: Vec<usize>,
    inv_dx: f64,
    // bit a: cell is last along axis a; bit a + 4: first along axis a
    edge: Vec<u8>,
}

impl Ops {
    fn new(grid: &Grid) -> Ops {
        let n = grid.dim();
        let strides = grid.strides();
        let dims = grid.dims().to_vec();
        let edge = (0..grid.len())
            .map(|i| {
                let mut b = 0u8;
                for a in 0..n {
                    let c = i / strides[a] % dims[a];
                    if c + 1 == dims[a] {
                        b |= 1 << a;
                    }
                    if c == 0 {
                        b |= 1 << (a + 4);
                    }
                }
                b
            })
            .collect();
        Ops { n, strides, inv_dx: 1.0 / grid.spacing(), edge }
    }

    pub(crate) fn grad(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.par_chunks_mut(CHUNK * n).enumerate().for_each(|(c, block)| {
            let base = c * CHUNK;
            for (k, g) in block.chunks_mut(n).enumerate() {
                let i = base + k;
                let e = self.edge[i];
                for a in 0..n {
                    g[a] = if e & (1 << a) != 0 { 0.0 } else { (u[i + self.strides[a]] - u[i]) * self.inv_dx };
                }
            }
        });
    }

    pub(crate) fn div(&self, z: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, block)| {
            let base = c * CHUNK;
            for (k, d) in block.iter_mut().enumerate() {
                let i = base + k;
                let e = self.edge[i];
                let mut s = 0.0;
                for a in 0..n {
                    if e & (1 << a) == 0 {
                        s += z[i * n + a];
                    }
                    if e & (1 << (a + 4)) == 0 {
                        s -= z[(i - self.strides[a]) * n + a];
                    }
                }
                *d = s * self.inv_dx;
            }
        });
    }
}

fn check_problem(p: &ResolventProblem) -> Result<()> {
    if !(p.h > 0.0) || !p.h.is_finite() {
        return Err(FlowError::input("time step must be positive"));
    }
    if p.f.values.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::input("resolvent data must be finite"));
    }
    if p.phi.dim() != p.f.grid.dim() {
        return Err(FlowError::input("anisotropy and grid dimensions differ"));
    }
    if !p.phi.supports_projection() {
        return Err(FlowError::input("the anisotropy must admit projection onto its polar ball"));
    }
    Ok(())
}

pub fn solve_resolvent(p: &ResolventProblem, s: &SolverParams) -> Result<ResolventSolution> {
    solve_resolvent_from(p, s, None)
}

/// As [`solve_resolvent`], starting from the dual field `z0` when given.
pub fn solve_resolvent_from(p: &ResolventProblem, s: &SolverParams, z0: Option<&[f64]>) -> Result<ResolventSolution> {
    check_problem(p)?;
    let grid = &p.f.grid;
    let n = grid.dim();
    let len = grid.len();
    let tol = s.tolerance.unwrap_or_else(|| 1e-4 * p.f.max_abs().max(1.0));
    if !(tol > 0.0) {
        return Err(FlowError::config("solver tolerance must be positive"));
    }
    if let Some(z0) = z0 {
        if z0.len() != len * n {
            return Err(FlowError::input("warm-start dual field size does not match the grid"));
        }
    }
    let phi = p.phi;
    let z = match z0 {
        Some(z0) => {
            let mut z = z0.to_vec();
            z.par_chunks_mut(n).for_each(|c| phi.project_polar_ball_in_place(c));
            z
        }
        None => vec![0.0; len * n],
    };
    let ctx = Context::new(p);
    let weights = if n == 2 { phi.axis_weights() } else { None };
    let method = match (s.method, &weights) {
        (Method::Auto, Some(_)) => Method::Separable,
        (Method::Auto, None) => Method::Admm,
        (Method::Separable, None) => {
            return Err(FlowError::config("the separable backend needs a weighted-l1 anisotropy in 2D"));
        }
        (m, _) => m,
    };
    let (best, iterations) = match method {
        Method::Separable => {
            let w = weights.expect("checked above");
            separable::run(&ctx, s.max_iterations, s.check_every, tol, &w, z)?
        }
        Method::Auto => unreachable!("resolved above"),
        Method::Admm => admm::run(&ctx, s, tol, z)?,
        Method::PrimalDual => primal_dual(&ctx, s, tol, z)?,
    };
    Ok(ResolventSolution {
        u: ScalarField::new(grid.clone(), best.u)?,
        z: best.z,
        residual: best.residual,
        certificate: best.certificate,
        gap: best.gap,
        iterations,
        converged: best.certificate <= tol,
        tolerance: tol,
    })
}

pub(crate) struct Context<'a> {
    pub(crate) ops: Ops,
    pub(crate) phi: &'a Norm,
    pub(crate) f: &'a [f64],
    pub(crate) h: f64,
    pub(crate) grid: &'a Grid,
    fmin: f64,
    fmax: f64,
}

impl<'a> Context<'a> {
    fn new(p: &ResolventProblem<'a>) -> Context<'a> {
        Context {
            ops: Ops::new(&p.f.grid),
            phi: p.phi,
            f: &p.f.values,
            h: p.h,
            grid: &p.f.grid,
            fmin: p.f.min(),
            fmax: p.f.max(),
        }
    }
}

fn primal_dual(ctx: &Context, s: &SolverParams, tol: f64, mut z: Vec<f64>) -> Result<(Certified, usize)> {
    if !(s.overrelaxation > 0.0 && s.overrelaxation <= 1.0) {
        return Err(FlowError::config("over-relaxation must lie in (0, 1]"));
    }
    let (h, f, phi) = (ctx.h, ctx.f, ctx.phi);
    let n = ctx.ops.n;
    let len = f.len();
    let lsq = gradient_norm_sq(ctx.grid);
    let mut tau = s.primal_step.unwrap_or(0.25) * h;
    let mut sigma = match s.dual_step {
        Some(d) => d,
        None => 1.0 / (tau * lsq),
    };
    if !(tau > 0.0 && sigma > 0.0) || tau * sigma * lsq > 1.0 + 1e-12 {
        return Err(FlowError::config("primal and dual steps violate primal * dual * |grad|^2 <= 1"));
    }
    let mut u = f.to_vec();
    let mut ubar = u.clone();
    let mut g = vec![0.0; len * n];
    let mut d = vec![0.0; len];

    let mut iterations = 0;
    let mut best = certify(ctx, &u, &z, &mut g, &mut d);
    while best.certificate > tol && iterations < s.max_iterations {
        for _ in 0..s.check_every.max(1) {
            ctx.ops.grad(&ubar, &mut g);
            z.par_chunks_mut(CHUNK * n).zip(g.par_chunks(CHUNK * n)).for_each(|(zb, gb)| {
                for (zc, gc) in zb.chunks_mut(n).zip(gb.chunks(n)) {
                    for a in 0..n {
                        zc[a] += sigma * gc[a];
                    }
                    phi.project_polar_ball_in_place(zc);
                }
            });
            ctx.ops.div(&z, &mut d);
            // strong convexity 1/h of the fidelity term drives the step update
            let theta = if s.accelerate { 1.0 / (1.0 + 2.0 * tau / h).sqrt() } else { s.overrelaxation };
            let w = tau / h;
            u.par_chunks_mut(CHUNK).zip(ubar.par_chunks_mut(CHUNK)).enumerate().for_each(|(c, (ub, bb))| {
                let base = c * CHUNK;
                for k in 0..ub.len() {
                    let i = base + k;
                    let old = ub[k];
                    let new = (old + tau * d[i] + w * f[i]) / (1.0 + w);
                    ub[k] = new;
                    bb[k] = new + theta * (new - old);
                }
            });
            if s.accelerate {
                tau *= theta;
                sigma /= theta;
            }
            iterations += 1;
        }
        let c = certify(ctx, &u, &z, &mut g, &mut d);
        if c.certificate < best.certificate {
            best = c;
        }
    }
    Ok((best, iterations))
}

pub(crate) struct Certified {
    pub(crate) u: Vec<f64>,
    pub(crate) z: Vec<f64>,
    pub(crate) residual: f64,
    pub(crate) gap: f64,
    pub(crate) certificate: f64,
}

pub(crate) fn certify(ctx: &Context, u: &[f64], z: &[f64], g: &mut [f64], d: &mut [f64]) -> Certified {
    let (ops, phi, f, h) = (&ctx.ops, ctx.phi, ctx.f, ctx.h);
    let (fmin, fmax) = (ctx.fmin, ctx.fmax);
    let n = ops.n;
    let uc: Vec<f64> = u.iter().map(|v| v.clamp(fmin, fmax)).collect();
    ops.grad(&uc, g);
    ops.div(z, d);
    // per-chunk partial sums, combined in order
    let parts: Vec<(f64, f64, f64)> = g
        .par_chunks(CHUNK * n)
        .zip(z.par_chunks(CHUNK * n))
        .enumerate()
        .map(|(c, (gb, zb))| {
            let base = c * CHUNK;
            let (mut tv, mut rr, mut rmax) = (0.0, 0.0, 0.0f64);
            for (k, (gc, zc)) in gb.chunks(n).zip(zb.chunks(n)).enumerate() {
                let i = base + k;
                let pairing: f64 = gc.iter().zip(zc).map(|(a, b)| a * b).sum();
                tv += (phi.eval(gc) - pairing).max(0.0);
                let r = uc[i] - f[i] - h * d[i];
                rr += r * r;
                rmax = rmax.max(r.abs());
            }
            (tv, rr, rmax)
        })
        .collect();
    let (mut tv, mut rr, mut rmax) = (0.0, 0.0, 0.0f64);
    for (a, b, c) in parts {
        tv += a;
        rr += b;
        rmax = rmax.max(c);
    }
    let gap = tv + rr / (2.0 * h);
    let certificate = rmax + (2.0 * h * tv).sqrt();
    Certified { u: uc, z: z.to_vec(), residual: rmax, gap, certificate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sublevel_mask;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn adjoint_pair() {
        let g = Grid::new(vec![7, 9], 0.3, vec![0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = ScalarField::new(g.clone(), (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let z: Vec<f64> = (0..2 * g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gu = gradient(&u);
        let dz = divergence(&g, &z).unwrap();
        let lhs: f64 = gu.iter().zip(&z).map(|(a, b)| a * b).sum();
        let rhs: f64 = -u.values.iter().zip(&dz).map(|(a, b)| a * b).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn constants_are_fixed_points() {
        let g = Grid::cube(2, 16, 1.0).unwrap();
        let f = ScalarField::constant(&g, 3.0);
        let phi = Norm::l1(2);
        let sol = solve_resolvent(&ResolventProblem { f: &f, h: 0.01, phi: &phi }, &SolverParams::default()).unwrap();
        assert!(sol.u.values.iter().all(|v| *v == 3.0));
        assert!(sol.z.iter().all(|v| *v == 0.0));
        assert_eq!(sol.residual, 0.0);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_polar_ball(&Norm::l1(2), &[2.0, -0.5]).unwrap(), vec![1.0, -0.5]);
        let p = project_polar_ball(&Norm::l2(2), &[3.0, 4.0]).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert!(project_polar_ball(&Norm::l2(2), &[1.0]).is_err());
    }

    #[test]
    fn step_rule_is_checked() {
        let g = Grid::cube(2, 8, 1.0).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0]);
        let phi = Norm::l2(2);
        let s = SolverParams { method: Method::PrimalDual, primal_step: Some(1.0), dual_step: Some(1.0), ..SolverParams::default() };
        let r = solve_resolvent(&ResolventProblem { f: &f, h: 0.01, phi: &phi }, &s);
        assert!(matches!(r, Err(FlowError::Config(_))));
        let bad = f.map(|v| if v > 0.5 { f64::NAN } else { v });
        let r = solve_resolvent(&ResolventProblem { f: &bad, h: 0.01, phi: &phi }, &SolverParams::default());
        assert!(matches!(r, Err(FlowError::Input(_))));
    }

    fn optimality_residual(sol: &ResolventSolution, f: &ScalarField, h: f64) -> f64 {
        let d = sol.div_z();
        sol.u.values.iter().zip(&f.values).zip(&d).fold(0.0, |m, ((u, f), d)| m.max((u - f - h * d).abs()))
    }

    #[test]
    fn certificate_is_honest() {
        // a tight solve must stay within the certificate of a loose one; the two
        // backends must agree within their certificates
        let g = Grid::cube(2, 32, 1.0).unwrap();
        let phi = Norm::l1(2);
        let f = ScalarField::from_fn(&g, |x| Norm::l2(2).eval(&[x[0] - 0.1, x[1]]) - 0.5);
        let prob = ResolventProblem { f: &f, h: 0.01, phi: &phi };
        let loose = solve_resolvent(&prob, &SolverParams { tolerance: Some(1e-2), ..Default::default() }).unwrap();
        let tight = solve_resolvent(&prob, &SolverParams { tolerance: Some(1e-6), ..Default::default() }).unwrap();
        assert!(tight.converged);
        let err = loose.u.sup_distance(&tight.u).unwrap();
        assert!(err <= loose.certificate + tight.certificate, "{err} {}", loose.certificate);
        assert!(optimality_residual(&tight, &f, 0.01) <= tight.certificate + 1e-12);
        assert!(loose.residual <= loose.certificate + 1e-12);
        for method in [Method::PrimalDual, Method::Admm] {
            let s = SolverParams { method, tolerance: Some(1e-3), max_iterations: 100_000, ..Default::default() };
            let other = solve_resolvent(&prob, &s).unwrap();
            assert!(other.converged);
            assert!(other.u.sup_distance(&tight.u).unwrap() <= other.certificate + tight.certificate);
        }
    }

    #[test]
    fn separable_backend_scope() {
        let g = Grid::cube(2, 8, 1.0).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0]);
        let s = SolverParams { method: Method::Separable, ..Default::default() };
        let l2 = Norm::l2(2);
        assert!(matches!(solve_resolvent(&ResolventProblem { f: &f, h: 0.01, phi: &l2 }, &s), Err(FlowError::Config(_))));
        // a weighted l1 norm is separable and matches ADMM
        let phi = Norm::l1(2).scaled(2.0).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0].abs().max(x[1].abs()) - 0.5);
        let prob = ResolventProblem { f: &f, h: 0.02, phi: &phi };
        let a = solve_resolvent(&prob, &SolverParams { tolerance: Some(1e-6), ..s.clone() }).unwrap();
        let b = solve_resolvent(&prob, &SolverParams { method: Method::Admm, tolerance: Some(1e-6), ..Default::default() }).unwrap();
        assert!(a.converged && b.converged);
        assert!(a.u.sup_distance(&b.u).unwrap() <= 2e-6);
    }

    #[test]
    fn dual_field_is_feasible_and_calibrated() {
        let g = Grid::cube(2, 32, 1.0).unwrap();
        let phi = Norm::l2(2);
        let f = ScalarField::from_fn(&g, |x| x[0] * x[0] - x[1]);
        let sol = solve_resolvent(&ResolventProblem { f: &f, h: 0.02, phi: &phi }, &SolverParams::default()).unwrap();
        assert!(sol.converged);
        let du = gradient(&sol.u);
        let mut slack = 0.0;
        for i in 0..g.len() {
            let z = sol.z_at(i);
            assert!(phi.polar_eval(z) <= 1.0 + 1e-8);
            let gu = &du[2 * i..2 * i + 2];
            slack += phi.eval(gu) - (z[0] * gu[0] + z[1] * gu[1]);
        }
        assert!(slack <= sol.gap + 1e-9);
    }

    #[test]
    fn maximum_principle() {
        let g = Grid::cube(2, 24, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = ScalarField::new(g.clone(), (0..g.len()).map(|_| rng.gen_range(-2.0..5.0)).collect()).unwrap();
        let phi = Norm::hexagon();
        let sol = solve_resolvent(&ResolventProblem { f: &f, h: 0.05, phi: &phi }, &SolverParams::default()).unwrap();
        assert!(sol.u.values.iter().all(|v| *v >= f.min() && *v <= f.max()));
    }

    #[test]
    fn additive_constant() {
        let g = Grid::cube(2, 32, 1.0).unwrap();
        let phi = Norm::l1(2);
        let f1 = ScalarField::from_fn(&g, |x| phi.polar_eval(x) - 0.5);
        let f2 = f1.map(|v| v + 1.0);
        let s = SolverParams { tolerance: Some(1e-6), ..Default::default() };
        let a = solve_resolvent(&ResolventProblem { f: &f1, h: 0.004, phi: &phi }, &s).unwrap();
        let b = solve_resolvent(&ResolventProblem { f: &f2, h: 0.004, phi: &phi }, &s).unwrap();
        for (x, y) in a.u.values.iter().zip(&b.u.values) {
            assert!((y - x - 1.0).abs() <= 1e-9);
        }
        assert_eq!(a.iterations, b.iterations);
        for lam in [-0.3, -0.1, 0.0, 0.2] {
            assert_eq!(sublevel_mask(&a.u, lam), sublevel_mask(&b.u, lam + 1.0));
        }
    }

    fn smooth_random(g: &Grid, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.0..6.3), rng.gen_range(0.0..0.5)))
            .collect();
        ScalarField::from_fn(g, |x| modes.iter().map(|(a, b, c, w)| w * (a * x[0] + b * x[1] + c).sin()).sum())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn comparison_and_contraction(seed in 0u64..100_000, lift in 0.0f64..0.3) {
            let g = Grid::cube(2, 20, 1.0).unwrap();
            let phi = Norm::l1(2);
            let f1 = smooth_random(&g, seed);
            let bump = smooth_random(&g, seed + 1);
            let f2 = ScalarField::new(g.clone(), f1.values.iter().zip(&bump.values).map(|(a, b)| a + b.abs() + lift).collect()).unwrap();
            let s = SolverParams::default();
            let a = solve_resolvent(&ResolventProblem { f: &f1, h: 0.02, phi: &phi }, &s).unwrap();
            let b = solve_resolvent(&ResolventProblem { f: &f2, h: 0.02, phi: &phi }, &s).unwrap();
            prop_assert!(a.converged && b.converged);
            let tau = a.tolerance.max(b.tolerance);
            prop_assert!(a.u.values.iter().zip(&b.u.values).all(|(x, y)| *x <= y + 2.0 * tau));
            let df = f1.sup_distance(&f2).unwrap();
            prop_assert!(a.u.sup_distance(&b.u).unwrap() <= df + 2.0 * tau);
        }
    }
}
