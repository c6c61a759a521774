//! ADMM on `min sum phi(p) + (1/2h) |u - f|^2` subject to `p = grad u`.
//!
//! Scaled form with multiplier `w`; the dual field is `z = rho w`, which is
//! always a projection onto the polar ball and hence feasible. The `u` update
//! solves `(1/h + rho L) u = f/h - rho div(p - w)` exactly.

use rayon::prelude::*;

use super::neumann::NeumannSolver;
use super::{certify, Certified, Context, SolverParams, CHUNK};
use crate::error::{FlowError, Result};

/// Initial penalty times `h`.
const DEFAULT_PENALTY: f64 = 0.002;
const BALANCE: f64 = 10.0;
const MAX_ADAPTATIONS: usize = 40;

pub(crate) fn run(ctx: &Context, s: &SolverParams, tol: f64, z0: Vec<f64>) -> Result<(Certified, usize)> {
    if !(s.relaxation > 0.0 && s.relaxation < 2.0) {
        return Err(FlowError::config("ADMM relaxation must lie in (0, 2)"));
    }
    let (h, f, phi) = (ctx.h, ctx.f, ctx.phi);
    let n = ctx.ops.n;
    let len = f.len();
    let mut rho = s.penalty.unwrap_or(DEFAULT_PENALTY) / h;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(FlowError::config("ADMM penalty must be positive"));
    }
    let alpha = s.relaxation;
    let solver = NeumannSolver::new(ctx.grid);

    let mut u = f.to_vec();
    let mut p = vec![0.0; len * n];
    ctx.ops.grad(&u, &mut p);
    let mut w: Vec<f64> = z0.iter().map(|v| v / rho).collect();
    let mut q = vec![0.0; len * n];
    let mut g = vec![0.0; len * n];
    let mut d = vec![0.0; len];
    let mut z = z0;

    let mut p_prev = p.clone();
    let mut adaptations = 0;
    let mut iterations = 0;
    let mut best = certify(ctx, &u, &z, &mut g, &mut d);
    while best.certificate > tol && iterations < s.max_iterations {
        let burst = s.check_every.max(1);
        for k in 0..burst {
            if k + 1 == burst {
                p_prev.copy_from_slice(&p);
            }
            q.par_iter_mut().zip(p.par_iter().zip(w.par_iter())).for_each(|(q, (p, w))| *q = p - w);
            ctx.ops.div(&q, &mut d);
            u.par_iter_mut().zip(d.par_iter().zip(f.par_iter())).for_each(|(u, (d, f))| *u = f / h - rho * d);
            solver.solve(1.0 / h, rho, &mut u);
            ctx.ops.grad(&u, &mut g);
            p.par_chunks_mut(CHUNK * n)
                .zip(w.par_chunks_mut(CHUNK * n))
                .zip(g.par_chunks(CHUNK * n).zip(z.par_chunks_mut(CHUNK * n)))
                .for_each(|((pb, wb), (gb, zb))| {
                    for (((pc, wc), gc), zc) in pb.chunks_mut(n).zip(wb.chunks_mut(n)).zip(gb.chunks(n)).zip(zb.chunks_mut(n)) {
                        for a in 0..n {
                            let v = alpha * gc[a] + (1.0 - alpha) * pc[a] + wc[a];
                            pc[a] = v;
                            zc[a] = rho * v;
                        }
                        phi.project_polar_ball_in_place(zc);
                        for a in 0..n {
                            wc[a] = zc[a] / rho;
                            pc[a] -= wc[a];
                        }
                    }
                });
            iterations += 1;
        }
        if s.adaptive && adaptations < MAX_ADAPTATIONS {
            // residual balancing on the last iteration of the burst
            let primal = g.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            q.iter_mut().zip(p.iter().zip(&p_prev)).for_each(|(q, (a, b))| *q = a - b);
            ctx.ops.div(&q, &mut d);
            let dual = rho * d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = if primal > BALANCE * dual {
                2.0
            } else if dual > BALANCE * primal {
                0.5
            } else {
                1.0
            };
            if scale != 1.0 {
                rho *= scale;
                w.iter_mut().for_each(|v| *v /= scale);
                adaptations += 1;
            }
        }
        let c = certify(ctx, &u, &z, &mut g, &mut d);
        if c.certificate < best.certificate {
            best = c;
        }
    }
    Ok((best, iterations))
}
