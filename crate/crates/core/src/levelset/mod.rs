//! Level-set minimizing movements: every sublevel set of an initial function
//! evolves under the scheme and the evolution is reassembled as
//! `u_h(x, t) = min { lambda : x in E_lambda(t) }` over a finite level grid.

pub mod output;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atw::{FlowConfig, Stepper, VALIDITY_MARGIN};
use crate::error::{FlowError, Result};
use crate::geometry::{
    inner_outer_radius, interface_clear_of_boundary, signed_distance_field, sublevel_mask, Front, Grid, ScalarField,
    SetMask, Stencil,
};
use crate::norm::{regularize_mobility, Norm};

/// Pseudo-random cells added to every probe set.
pub const PROBE_SAMPLES: usize = 1000;
const PROBE_SEED: u64 = 0x5eed_1e7e;
const MODULUS_PAIRS: usize = 1000;

/// Equispaced levels `min + m step`, `m = 0 .. count`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelGrid {
    pub min: f64,
    pub step: f64,
    pub count: usize,
}

impl LevelGrid {
    pub fn new(min: f64, step: f64, count: usize) -> Result<LevelGrid> {
        if count < 2 || !(step > 0.0) || !min.is_finite() || !step.is_finite() {
            return Err(FlowError::input("a level grid needs at least two levels and a positive spacing"));
        }
        Ok(LevelGrid { min, step, count })
    }

    /// `count` levels covering `[min u0 - step, max u0 + step]`.
    pub fn covering(u0: &ScalarField, count: usize) -> Result<LevelGrid> {
        if count < 4 {
            return Err(FlowError::input("at least four levels are needed to cover a range"));
        }
        let (lo, hi) = (u0.min(), u0.max());
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(FlowError::input("initial function has non-finite values"));
        }
        let step = if hi > lo { (hi - lo) / (count - 3) as f64 } else { 1.0 };
        LevelGrid::new(lo - step, step, count)
    }

    pub fn value(&self, m: usize) -> f64 {
        self.min + m as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|m| self.value(m)).collect()
    }

    pub fn max(&self) -> f64 {
        self.value(self.count - 1)
    }

    /// Value assigned where no level contains the point.
    pub fn above(&self) -> f64 {
        self.max() + self.step
    }

    pub fn covers(&self, u0: &ScalarField) -> bool {
        self.min <= u0.min() - self.step * (1.0 - 1e-9) && self.max() >= u0.max() + self.step * (1.0 - 1e-9)
    }
}

/// Reconstructed `u_h` at the time stamps `t_j = j h`.
#[derive(Clone, Debug)]
pub struct LevelSetFunction {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub fields: Vec<ScalarField>,
    pub levels: LevelGrid,
    /// Distance band of the runs, used for the probe set.
    pub band: f64,
}

impl LevelSetFunction {
    /// Cells within `band / 2` of `{u_h = 0}` at stamp `j`, plus a fixed seeded sample.
    pub fn probe_cells(&self, j: usize) -> Result<Vec<usize>> {
        probe_cells(&[&self.fields[j]], self.band)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelMetrics {
    pub stamp: usize,
    pub t: f64,
    pub lambda: f64,
    pub volume: f64,
    pub inradius: Option<f64>,
    pub outradius: Option<f64>,
    /// `|{u_h <= lambda}| - |{u_h < lambda}|`.
    pub fattening_gap: f64,
}

/// Spatial modulus check `|u(x) - u(y)| <= L0 (2e)^(L t) psi°(x - y) + step` on sampled pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModulusCheck {
    /// Discrete `psi°`-Lipschitz constant of `u0`.
    pub lipschitz: f64,
    /// Forcing Lipschitz constant `L`.
    pub forcing_lipschitz: f64,
    /// `(1 - L h)^(-1 / (L h)) <= 2e`, the regime where the propagated modulus is asserted.
    pub h_within_threshold: bool,
    /// Largest violation beyond the level spacing; `<= 0` means satisfied.
    pub max_excess: f64,
}

#[derive(Clone, Debug)]
pub struct LevelSetRun {
    pub function: LevelSetFunction,
    pub metrics: Vec<LevelMetrics>,
    /// `(stamp, lambda)` whose fattening gap exceeds the one-cell shell.
    pub fattening_suspects: Vec<(usize, f64)>,
    /// Levels whose interface came within the validity margin of the box.
    pub boundary_levels: Vec<f64>,
    pub modulus: ModulusCheck,
    /// Largest solver certificate over all levels and steps.
    pub max_residual: f64,
    pub unconverged_steps: usize,
}

// one level's masks at every stamp
struct LevelTrace {
    masks: Vec<SetMask>,
    fronts_last: Front,
    max_residual: f64,
    unconverged: usize,
    touched_boundary: bool,
}

fn evolve_level(u0: &ScalarField, lambda: f64, cfg: &FlowConfig) -> Result<LevelTrace> {
    // masks only, so that relabeling u0 by an increasing map changes nothing
    let mut front = Front::from_mask(sublevel_mask(u0, lambda));
    let mut stepper = Stepper::new(cfg)?;
    let mut masks = vec![front.mask.clone()];
    let mut max_residual = 0.0f64;
    let mut unconverged = 0;
    let clear = |m: &SetMask| m.is_empty() || m.is_full() || interface_clear_of_boundary(m, VALIDITY_MARGIN);
    let mut touched_boundary = !clear(&front.mask);
    for k in 0..cfg.steps() {
        let out = stepper.step(&front, k)?;
        max_residual = max_residual.max(out.diagnostics.residual);
        unconverged += (!out.diagnostics.converged) as usize;
        front = out.front;
        touched_boundary |= !clear(&front.mask);
        masks.push(front.mask.clone());
    }
    Ok(LevelTrace { masks, fronts_last: front, max_residual, unconverged, touched_boundary })
}

/// Masks of `{u0 <= lambda}` under the scheme at every stamp.
pub fn evolve_sublevel(u0: &ScalarField, lambda: f64, cfg: &FlowConfig) -> Result<Vec<SetMask>> {
    cfg.grid.check_same(&u0.grid)?;
    Ok(evolve_level(u0, lambda, cfg)?.masks)
}

/// Discrete `psi°`-Lipschitz constant of `u` over stencil pairs.
pub fn discrete_lipschitz(u: &ScalarField, dist: &Norm) -> f64 {
    let grid = &u.grid;
    let dx = grid.spacing();
    let pairs: Vec<(Vec<i64>, f64)> = Stencil::for_dim(grid.dim())
        .offsets
        .into_iter()
        .map(|o| {
            let v: Vec<f64> = o.iter().map(|k| *k as f64 * dx).collect();
            let len = dist.eval(&v);
            (o, len)
        })
        .collect();
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            pairs
                .iter()
                .filter_map(|(o, len)| grid.shifted(i, o).map(|j| (u.values[j] - u.values[i]).abs() / len))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

fn probe_cells(fields: &[&ScalarField], band: f64) -> Result<Vec<usize>> {
    let grid = &fields[0].grid;
    let mut near = vec![false; grid.len()];
    let euclid = Norm::l2(grid.dim());
    for f in fields {
        let zero = sublevel_mask(f, 0.0);
        if zero.is_empty() || zero.is_full() {
            continue;
        }
        let d = signed_distance_field(&zero, &euclid, band)?;
        for (n, v) in near.iter_mut().zip(&d.values) {
            *n |= v.abs() <= 0.5 * band;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    for i in rand::seq::index::sample(&mut rng, grid.len(), PROBE_SAMPLES.min(grid.len())) {
        near[i] = true;
    }
    Ok(near.iter().enumerate().filter(|(_, n)| **n).map(|(i, _)| i).collect())
}

fn modulus_check(u0: &ScalarField, fields: &[ScalarField], times: &[f64], cfg: &FlowConfig, dist: &Norm, step: f64) -> ModulusCheck {
    let lipschitz = discrete_lipschitz(u0, dist);
    let l = cfg.forcing.lipschitz(&cfg.psi);
    let lh = l * cfg.h;
    let h_within_threshold = lh == 0.0 || (lh < 1.0 && (1.0 - lh).powf(-1.0 / lh) <= 2.0 * std::f64::consts::E);
    let grid = &u0.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED ^ 1);
    let pairs: Vec<(usize, usize)> =
        (0..MODULUS_PAIRS).map(|_| (rng.gen_range(0..grid.len()), rng.gen_range(0..grid.len()))).collect();
    let mut max_excess = f64::NEG_INFINITY;
    for (field, t) in fields.iter().zip(times) {
        let growth = (2.0 * std::f64::consts::E).powf(l * t);
        for &(i, j) in &pairs {
            let (x, y) = (grid.point(i), grid.point(j));
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let bound = lipschitz * growth * dist.eval(&diff) + step;
            max_excess = max_excess.max((field.values[i] - field.values[j]).abs() - bound);
        }
    }
    ModulusCheck { lipschitz, forcing_lipschitz: l, h_within_threshold, max_excess }
}

// member cells with a neighbour (diagonals included) outside the set
fn boundary_cells(mask: &SetMask) -> usize {
    let grid = &mask.grid;
    let neighbours = Stencil::with_radius(grid.dim(), 1).offsets;
    (0..grid.len())
        .filter(|&i| mask.flags[i] && neighbours.iter().any(|o| grid.shifted(i, o).is_some_and(|j| !mask.flags[j])))
        .count()
}

/// Evolves every sublevel `{u0 <= lambda}`, `lambda` in `levels`, and reassembles `u_h`.
pub fn run_levelset(u0: &ScalarField, cfg: &FlowConfig, levels: &LevelGrid) -> Result<LevelSetRun> {
    cfg.grid.check_same(&u0.grid)?;
    cfg.validate()?;
    if u0.values.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::input("initial function has non-finite values"));
    }
    if !levels.covers(u0) {
        return Err(FlowError::input(format!(
            "levels [{}, {}] do not cover [min u0 - step, max u0 + step] = [{}, {}]",
            levels.min,
            levels.max(),
            u0.min() - levels.step,
            u0.max() + levels.step
        )));
    }
    let lambdas = levels.values();
    let traces: Vec<LevelTrace> =
        lambdas.par_iter().map(|&lam| evolve_level(u0, lam, cfg)).collect::<Result<Vec<_>>>()?;
    let stamps = cfg.steps() + 1;
    let times: Vec<f64> = (0..stamps).map(|j| j as f64 * cfg.h).collect();
    let grid = &cfg.grid;
    let dist = cfg.psi.polar();

    // nesting at every stamp
    for j in 0..stamps {
        for m in 1..lambdas.len() {
            if !traces[m - 1].masks[j].is_subset_of(&traces[m].masks[j]) {
                return Err(FlowError::Nesting { lower: lambdas[m - 1], upper: lambdas[m], t: times[j] });
            }
        }
    }

    let mut fields = Vec::with_capacity(stamps);
    for j in 0..stamps {
        let mut values = vec![levels.above(); grid.len()];
        for (m, tr) in traces.iter().enumerate().rev() {
            for (v, f) in values.iter_mut().zip(&tr.masks[j].flags) {
                if *f {
                    *v = lambdas[m];
                }
            }
        }
        fields.push(ScalarField::new(grid.clone(), values)?);
    }

    let cell = grid.cell_volume();
    let slack = (levels.step / (discrete_lipschitz(u0, &dist).max(1e-300) * grid.spacing())).max(1.0);
    let mut metrics = Vec::new();
    let mut fattening_suspects = Vec::new();
    for j in 0..stamps {
        for (m, tr) in traces.iter().enumerate() {
            let mask = &tr.masks[j];
            let below = if m == 0 { 0.0 } else { traces[m - 1].masks[j].volume() };
            let gap = mask.volume() - below;
            let shell = boundary_cells(mask) as f64 * cell * slack;
            if gap > shell + 1e-12 {
                fattening_suspects.push((j, lambdas[m]));
            }
            let radii = if mask.is_empty() || mask.is_full() {
                None
            } else if j + 1 == stamps {
                inner_outer_radius(&tr.fronts_last, &dist, &cfg.center)
            } else {
                inner_outer_radius(&Front::from_mask(mask.clone()), &dist, &cfg.center)
            };
            metrics.push(LevelMetrics {
                stamp: j,
                t: times[j],
                lambda: lambdas[m],
                volume: mask.volume(),
                inradius: radii.map(|r| r.0),
                outradius: radii.map(|r| r.1),
                fattening_gap: gap,
            });
        }
    }

    let modulus = modulus_check(u0, &fields, &times, cfg, &dist, levels.step);
    let boundary_levels = lambdas.iter().zip(&traces).filter(|(_, t)| t.touched_boundary).map(|(l, _)| *l).collect();
    let max_residual = traces.iter().map(|t| t.max_residual).fold(0.0, f64::max);
    let unconverged_steps = traces.iter().map(|t| t.unconverged).sum();
    Ok(LevelSetRun {
        function: LevelSetFunction { grid: grid.clone(), times, fields, levels: *levels, band: cfg.band },
        metrics,
        fattening_suspects,
        boundary_levels,
        modulus,
        max_residual,
        unconverged_steps,
    })
}

/// `sup |a - b|` over the union of both probe sets at every stamp.
pub fn compare_levelset_functions(a: &LevelSetFunction, b: &LevelSetFunction) -> Result<f64> {
    a.grid.check_same(&b.grid)?;
    if a.times.len() != b.times.len() || a.times.iter().zip(&b.times).any(|(s, t)| (s - t).abs() > 1e-12) {
        return Err(FlowError::input("level-set functions have different time stamps"));
    }
    let band = a.band.max(b.band);
    let mut sup = 0.0f64;
    for j in 0..a.times.len() {
        for i in probe_cells(&[&a.fields[j], &b.fields[j]], band)? {
            sup = sup.max((a.fields[j].values[i] - b.fields[j].values[i]).abs());
        }
    }
    Ok(sup)
}

/// `u_a <= u_b + slack` on the probe set at every stamp; returns the largest excess `u_a - u_b`.
pub fn max_exceedance(a: &LevelSetFunction, b: &LevelSetFunction) -> Result<f64> {
    a.grid.check_same(&b.grid)?;
    if a.times.len() != b.times.len() {
        return Err(FlowError::input("level-set functions have different time stamps"));
    }
    let band = a.band.max(b.band);
    let mut worst = f64::NEG_INFINITY;
    for j in 0..a.times.len() {
        for i in probe_cells(&[&a.fields[j], &b.fields[j]], band)? {
            worst = worst.max(a.fields[j].values[i] - b.fields[j].values[i]);
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub struct ApproximationReport {
    pub schedule: Vec<f64>,
    pub runs: Vec<LevelSetRun>,
    /// `d_j = sup |u^(delta_j) - u^(delta_(j+1))|`.
    pub differences: Vec<f64>,
    /// `2 tau + step + 2 dx Lip(u0)`, Euclidean Lipschitz constant.
    pub floor: f64,
    pub acceptance_gap: f64,
    /// Differences decrease strictly until they reach the floor.
    pub cauchy: bool,
    pub converged: bool,
    /// Linear extrapolation in `delta` of the last two runs, per stamp.
    pub extrapolated: Vec<ScalarField>,
}

impl ApproximationReport {
    pub fn last(&self) -> &LevelSetFunction {
        &self.runs.last().expect("a schedule is never empty").function
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ApproximationSummary {
    pub schedule: Vec<f64>,
    pub differences: Vec<f64>,
    pub floor: f64,
    pub acceptance_gap: f64,
    pub cauchy: bool,
    pub converged: bool,
    pub max_residual: Vec<f64>,
}

impl ApproximationReport {
    pub fn summary(&self) -> ApproximationSummary {
        ApproximationSummary {
            schedule: self.schedule.clone(),
            differences: self.differences.clone(),
            floor: self.floor,
            acceptance_gap: self.acceptance_gap,
            cauchy: self.cauchy,
            converged: self.converged,
            max_residual: self.runs.iter().map(|r| r.max_residual).collect(),
        }
    }
}

/// Level-set runs with the mobilities `psi + delta phi` along a strictly decreasing schedule.
///
/// `cfg.psi` is replaced per run; `cfg.phi` is the anisotropy. `acceptance_gap`
/// defaults to the resolution floor.
pub fn solve_via_approximation(
    u0: &ScalarField,
    psi: &Norm,
    schedule: &[f64],
    cfg: &FlowConfig,
    levels: &LevelGrid,
    acceptance_gap: Option<f64>,
) -> Result<ApproximationReport> {
    if schedule.is_empty() {
        return Err(FlowError::input("empty regularization schedule"));
    }
    if schedule.iter().any(|d| !(*d > 0.0 && d.is_finite())) || schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(FlowError::input("regularization schedule must be positive and strictly decreasing"));
    }
    let runs = schedule
        .iter()
        .map(|&delta| {
            let mut c = cfg.clone();
            c.psi = regularize_mobility(psi, delta, &cfg.phi)?;
            c.band = c.band.max(c.min_band());
            run_levelset(u0, &c, levels)
        })
        .collect::<Result<Vec<_>>>()?;
    let differences = runs
        .windows(2)
        .map(|w| compare_levelset_functions(&w[0].function, &w[1].function))
        .collect::<Result<Vec<_>>>()?;
    let tau = runs.iter().map(|r| r.max_residual).fold(0.0, f64::max);
    let lip = discrete_lipschitz(u0, &Norm::l2(u0.grid.dim()));
    let floor = 2.0 * tau + levels.step + 2.0 * cfg.grid.spacing() * lip;
    let acceptance_gap = acceptance_gap.unwrap_or(floor);
    let cauchy = differences.windows(2).all(|w| w[1] < w[0] || w[1] <= floor);
    let converged = cauchy && differences.last().map_or(true, |d| *d <= acceptance_gap);
    let extrapolated = match runs.len() {
        1 => runs[0].function.fields.clone(),
        n => {
            let (a, b) = (&runs[n - 2].function, &runs[n - 1].function);
            let w = schedule[n - 1] / (schedule[n - 2] - schedule[n - 1]);
            a.fields
                .iter()
                .zip(&b.fields)
                .map(|(fa, fb)| {
                    let values = fa.values.iter().zip(&fb.values).map(|(x, y)| y + w * (y - x)).collect();
                    ScalarField::new(fb.grid.clone(), values)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(ApproximationReport {
        schedule: schedule.to_vec(),
        runs,
        differences,
        floor,
        acceptance_gap,
        cauchy,
        converged,
        extrapolated,
    })
}
