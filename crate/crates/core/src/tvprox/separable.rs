//! Axis-separable anisotropies `phi(x) = sum a_k |x_k|` in 2D.
//!
//! The resolvent is the prox of `F1 + F2`, each a sum of independent 1D total
//! variations along one axis. Dual block coordinate descent alternates exact
//! line solves; the second block is accelerated (its reduced dual objective
//! is smooth with unit Lipschitz gradient) with adaptive restart.
//! With `y_k = f - prox_k(f - ...)`, the iterate is `u = f - y1 - y2` and the
//! dual field follows from cumulative sums of `y_k` along lines.

use rayon::prelude::*;

use super::{certify, Certified, Context};
use crate::error::Result;

/// Exact 1D total-variation denoising: `argmin 1/2 |y - x|^2 + lambda sum |y_{i+1} - y_i|`
/// (Condat's direct algorithm).
pub(crate) fn tv1d(input: &[f64], output: &mut [f64], lambda: f64) {
    let width = input.len();
    if width == 0 {
        return;
    }
    if lambda <= 0.0 {
        output.copy_from_slice(input);
        return;
    }
    let (mut k, mut k0) = (0usize, 0usize);
    let (mut kplus, mut kminus) = (0usize, 0usize);
    let mut umin = lambda;
    let mut umax = -lambda;
    let mut vmin = input[0] - lambda;
    let mut vmax = input[0] + lambda;
    let twolambda = 2.0 * lambda;
    let minlambda = -lambda;
    loop {
        while k == width - 1 {
            if umin < 0.0 {
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = input[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    output[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = input[k0];
                umax = minlambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > k {
                        break;
                    }
                }
                return;
            }
        }
        umin += input[k + 1] - vmin;
        if umin < minlambda {
            loop {
                output[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = input[k0];
            vmax = vmin + twolambda;
            umin = lambda;
            umax = minlambda;
            continue;
        }
        umax += input[k + 1] - vmax;
        if umax > lambda {
            loop {
                output[k0] = vmax;
                k0 += 1;
                if k0 > kplus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = input[k0];
            vmin = vmax - twolambda;
            umin = lambda;
            umax = minlambda;
        } else {
            k += 1;
            if umin >= lambda {
                kminus = k;
                vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
                umin = lambda;
            }
            if umax <= minlambda {
                kplus = k;
                vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
                umax = minlambda;
            }
        }
    }
}

// Line layout of a 2D grid along one axis.
struct Lines {
    len: usize,
    stride: usize,
    count: usize,
}

impl Lines {
    fn new(dims: &[usize], axis: usize) -> Lines {
        let stride = if axis == 0 { dims[1] } else { 1 };
        Lines { len: dims[axis], stride, count: dims[1 - axis] }
    }

    fn start(&self, line: usize) -> usize {
        if self.stride == 1 {
            line * self.len
        } else {
            line
        }
    }
}

/// `y = v - prox(v)` along every line of `axis`, where `prox` is 1D TV with weight `lambda`.
fn dual_prox(v: &[f64], y: &mut [f64], lines: &Lines, lambda: f64) {
    let parts: Vec<(usize, Vec<f64>)> = (0..lines.count)
        .into_par_iter()
        .map(|l| {
            let s = lines.start(l);
            let input: Vec<f64> = (0..lines.len).map(|k| v[s + k * lines.stride]).collect();
            let mut out = vec![0.0; lines.len];
            tv1d(&input, &mut out, lambda);
            for (o, x) in out.iter_mut().zip(&input) {
                *o = x - *o;
            }
            (s, out)
        })
        .collect();
    for (s, out) in parts {
        for (k, val) in out.into_iter().enumerate() {
            y[s + k * lines.stride] = val;
        }
    }
}

/// Dual components `z_axis = (dx / h) w` with `w_i = -sum_{j <= i} y_j` along each line.
fn write_dual(y: &[f64], z: &mut [f64], lines: &Lines, axis: usize, scale: f64) {
    for l in 0..lines.count {
        let s = lines.start(l);
        let mut w = 0.0;
        for k in 0..lines.len {
            let i = s + k * lines.stride;
            w -= y[i];
            z[2 * i + axis] = if k + 1 == lines.len { 0.0 } else { scale * w };
        }
    }
}

pub(crate) fn run(ctx: &Context, max_iterations: usize, check_every: usize, tol: f64, weights: &[f64], z0: Vec<f64>) -> Result<(Certified, usize)> {
    let (h, f) = (ctx.h, ctx.f);
    let dims = ctx.grid.dims();
    let dx = ctx.grid.spacing();
    let len = f.len();
    let rows = Lines::new(dims, 0);
    let cols = Lines::new(dims, 1);
    let lam = [h * weights[0] / dx, h * weights[1] / dx];
    let scale = dx / h;

    // warm start: second block from the axis-1 component of z0
    let mut y2 = vec![0.0; len];
    if z0.iter().any(|v| *v != 0.0) {
        let mut zy = vec![0.0; 2 * len];
        for i in 0..len {
            zy[2 * i + 1] = z0[2 * i + 1];
        }
        let mut d = vec![0.0; len];
        ctx.ops.div(&zy, &mut d);
        y2.iter_mut().zip(&d).for_each(|(y, d)| *y = -h * d);
    }
    let mut y2bar = y2.clone();
    let mut y1 = vec![0.0; len];
    let mut v = vec![0.0; len];
    let mut y2new = vec![0.0; len];
    let mut t = 1.0f64;

    let mut z = z0;
    let mut g = vec![0.0; 2 * len];
    let mut d = vec![0.0; len];
    let u: Vec<f64> = (0..len).map(|i| f[i] - y2[i]).collect();
    let mut best = certify(ctx, &u, &z, &mut g, &mut d);
    let mut iterations = 0;
    while best.certificate > tol && iterations < max_iterations {
        for _ in 0..check_every.max(1) {
            v.par_iter_mut().zip(f.par_iter().zip(y2bar.par_iter())).for_each(|(v, (f, y))| *v = f - y);
            dual_prox(&v, &mut y1, &rows, lam[0]);
            v.par_iter_mut().zip(f.par_iter().zip(y1.par_iter())).for_each(|(v, (f, y))| *v = f - y);
            dual_prox(&v, &mut y2new, &cols, lam[1]);
            // restart when the step opposes the momentum
            let dot: f64 = y2bar.iter().zip(&y2new).zip(&y2).map(|((b, n), o)| (b - n) * (n - o)).sum();
            let tn = if dot > 0.0 { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
            let beta = if dot > 0.0 { 0.0 } else { (t - 1.0) / tn };
            t = tn;
            for i in 0..len {
                y2bar[i] = y2new[i] + beta * (y2new[i] - y2[i]);
            }
            std::mem::swap(&mut y2, &mut y2new);
            iterations += 1;
        }
        let u: Vec<f64> = (0..len).map(|i| f[i] - y1[i] - y2[i]).collect();
        write_dual(&y1, &mut z, &rows, 0, scale);
        write_dual(&y2, &mut z, &cols, 1, scale);
        for c in z.chunks_mut(2) {
            for (a, zc) in c.iter_mut().enumerate() {
                *zc = zc.clamp(-weights[a], weights[a]);
            }
        }
        let c = certify(ctx, &u, &z, &mut g, &mut d);
        if c.certificate < best.certificate {
            best = c;
        }
    }
    Ok((best, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // KKT check: w_i = sum_{j <= i} (y_j - x_j) must satisfy |w| <= lambda,
    // w = lambda sign(y_{i+1} - y_i) on jumps, and w_{n-1} = 0.
    fn kkt_violation(x: &[f64], y: &[f64], lambda: f64) -> f64 {
        let mut w = 0.0;
        let mut worst = 0.0f64;
        for i in 0..x.len() {
            w += y[i] - x[i];
            if i + 1 == x.len() {
                worst = worst.max(w.abs());
                break;
            }
            worst = worst.max(w.abs() - lambda);
            let jump = y[i + 1] - y[i];
            if jump.abs() > 1e-12 {
                worst = worst.max((w - lambda * jump.signum()).abs());
            }
        }
        worst
    }

    #[test]
    fn small_cases() {
        let mut out = [0.0; 3];
        tv1d(&[0.0, 0.0, 3.0], &mut out, 0.5);
        // the jump shrinks by lambda on each side, the left plateau shares it
        assert!((out[0] - 0.25).abs() < 1e-15 && (out[1] - 0.25).abs() < 1e-15 && (out[2] - 2.5).abs() < 1e-15);
        tv1d(&[1.0, -1.0, 1.0], &mut out, 10.0);
        assert!(out.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let mut one = [0.0];
        tv1d(&[4.0], &mut one, 1.0);
        assert_eq!(one[0], 4.0);
    }

    proptest! {
        #[test]
        fn satisfies_optimality(x in proptest::collection::vec(-2.0f64..2.0, 1..60), lambda in 0.0f64..1.5) {
            let mut y = vec![0.0; x.len()];
            tv1d(&x, &mut y, lambda);
            prop_assert!(kkt_violation(&x, &y, lambda) < 1e-9);
        }
    }
}
