//! Quantitative checks on a computed flow.

use serde::Serialize;

use super::{FlowConfig, FlowTrace};
use crate::geometry::{ScalarField, SetMask};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivzRecord {
    pub delta: f64,
    /// Largest `div z` over `{d >= delta}`; `None` if that set is empty.
    pub max: Option<f64>,
    /// `2 c2 L + (N - 1) / ((eps0 delta) ^ 1)` when `eps0` is known.
    pub bound: Option<f64>,
}

/// Smallest `|E' cap B_r(x)| / r^N` over fresh cells `x` of `E' \ E` with `B_r(x) cap E` empty.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityRecord {
    pub step: usize,
    /// Ball radius in cells.
    pub radius_cells: usize,
    pub samples: usize,
    pub min_ratio: f64,
}

/// `sup_x (d(x, t) e^{-5 M s} - d(x, t + s)) / sqrt(s)` over `s = h .. 4h`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuityRecord {
    pub step: usize,
    pub value: f64,
    /// Lag in steps attaining the value.
    pub lag: usize,
}

pub const DENSITY_RADII: [usize; 3] = [2, 4, 8];

pub(crate) fn density(prev: &SetMask, next: &SetMask, step: usize) -> Vec<DensityRecord> {
    let grid = &next.grid;
    let n = grid.dim();
    let dims = grid.dims();
    let strides = grid.strides();
    let mut out = Vec::new();
    for &r in &DENSITY_RADII {
        let ri = r as i64;
        // integer offsets inside the Euclidean ball of radius r cells
        let mut ball: Vec<(Vec<i64>, i64)> = Vec::new();
        let side = (2 * ri + 1) as usize;
        for k in 0..side.pow(n as u32) {
            let mut o = Vec::with_capacity(n);
            let mut rem = k;
            for _ in 0..n {
                o.push((rem % side) as i64 - ri);
                rem /= side;
            }
            if o.iter().map(|v| v * v).sum::<i64>() <= ri * ri {
                let off = o.iter().zip(&strides).map(|(v, s)| v * *s as i64).sum();
                ball.push((o, off));
            }
        }
        let mut min_ratio = f64::INFINITY;
        let mut samples = 0;
        for i in 0..grid.len() {
            if !next.flags[i] || prev.flags[i] {
                continue;
            }
            let c = grid.coords(i);
            let mut covered = 0usize;
            let mut clear = true;
            for (o, off) in &ball {
                if (0..n).any(|a| {
                    let v = c[a] as i64 + o[a];
                    v < 0 || v >= dims[a] as i64
                }) {
                    clear = false;
                    break;
                }
                let j = (i as i64 + off) as usize;
                if prev.flags[j] {
                    clear = false;
                    break;
                }
                covered += next.flags[j] as usize;
            }
            if clear {
                samples += 1;
                min_ratio = min_ratio.min(covered as f64 / ((r * r) as f64).powf(n as f64 / 2.0));
            }
        }
        if samples > 0 {
            out.push(DensityRecord { step, radius_cells: r, samples, min_ratio });
        }
    }
    out
}

/// `history` holds the latest distance fields, oldest first; the last one is at step `k`.
pub(crate) fn continuity(history: &[ScalarField], k: usize, h: f64, m: f64, band: f64) -> Option<ContinuityRecord> {
    let now = history.last()?;
    let mut best: Option<(f64, usize)> = None;
    for lag in 1..history.len().min(5) {
        let then = &history[history.len() - 1 - lag];
        let s = lag as f64 * h;
        let decay = (-5.0 * m * s).exp();
        let mut sup = f64::NEG_INFINITY;
        for (a, b) in then.values.iter().zip(&now.values) {
            if *a > 0.0 && *a < band && *b < band {
                sup = sup.max((a * decay - b) / s.sqrt());
            }
        }
        if sup.is_finite() && best.map_or(true, |(v, _)| sup > v) {
            best = Some((sup, lag));
        }
    }
    best.map(|(value, lag)| ContinuityRecord { step: k, value, lag })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivzSummary {
    pub delta: f64,
    pub max: Option<f64>,
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    /// Largest discrete `psi(grad u)` over all steps.
    pub max_psi_grad: Option<f64>,
    /// `1 + L h`.
    pub lipschitz_bound: f64,
    pub divz: Vec<DivzSummary>,
    /// Smallest density ratio per ball radius (cells).
    pub density: Vec<(usize, f64)>,
    pub continuity_max: Option<f64>,
    pub max_residual: f64,
    pub unconverged_steps: usize,
    /// Only mask-level quantities were available.
    pub masks_only: bool,
}

pub fn diagnostics_report(trace: &FlowTrace, cfg: &FlowConfig) -> DiagnosticsRecord {
    let lip = cfg.forcing.lipschitz(&cfg.psi);
    let divz = super::DIVZ_LEVELS
        .iter()
        .enumerate()
        .map(|(j, &delta)| {
            let recs = trace.steps.iter().filter_map(|s| s.divz.get(j));
            let max = recs.clone().filter_map(|r| r.max).reduce(f64::max);
            let bound = recs.filter_map(|r| r.bound).next();
            DivzSummary { delta, max, bound }
        })
        .collect();
    let density = super::diagnostics::DENSITY_RADII
        .iter()
        .filter_map(|&r| {
            trace.density.iter().filter(|d| d.radius_cells == r).map(|d| d.min_ratio).reduce(f64::min).map(|v| (r, v))
        })
        .collect();
    let masks_only = trace.steps.iter().all(|s| s.max_psi_grad.is_none() && s.divz.is_empty());
    DiagnosticsRecord {
        max_psi_grad: trace.max_psi_grad(),
        lipschitz_bound: 1.0 + lip * cfg.h,
        divz,
        density,
        continuity_max: trace.continuity.iter().map(|c| c.value).reduce(f64::max),
        max_residual: trace.max_residual(),
        unconverged_steps: trace.steps.iter().filter(|s| !s.converged).count(),
        masks_only,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Grid;

    #[test]
    fn density_of_a_full_ball_is_the_ball_volume() {
        let grid = Grid::cube(2, 40, 1.0).unwrap();
        let prev = SetMask::from_fn(&grid, |x| x[0] < -0.8);
        let next = SetMask::from_fn(&grid, |x| x[0] < 0.5);
        let recs = density(&prev, &next, 1);
        // an interior fresh cell sees a fully covered disc of about pi r^2 cells
        let r4 = recs.iter().find(|r| r.radius_cells == 4).unwrap();
        assert!(r4.samples > 0);
        assert!(r4.min_ratio > 1.2 && r4.min_ratio < 3.2, "{}", r4.min_ratio);
    }

    #[test]
    fn continuity_of_a_static_distance_is_zero() {
        let grid = Grid::cube(2, 10, 1.0).unwrap();
        let d = ScalarField::from_fn(&grid, |x| x[0]);
        let rec = continuity(&[d.clone(), d.clone(), d], 2, 0.01, 0.0, 1.0).unwrap();
        assert!(rec.value.abs() < 1e-15);
    }
}
