//! Minimizing movements: each step solves the resolvent problem for the
//! signed `psi°`-distance of the current set plus the forcing increment and
//! keeps `{u <= 0}`.

pub mod diagnostics;
pub mod forcing;
pub mod output;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::geometry::{
    interface_clear_of_boundary, inner_outer_radius, signed_distance, staircase_perimeter, Front, Grid, ScalarField,
    SetMask, Stencil,
};
use crate::norm::{ellipticity_constants, Norm};
use crate::tvprox::{solve_resolvent_from, ResolventProblem, ResolventSolution, SolverParams};

pub use diagnostics::{diagnostics_report, ContinuityRecord, DensityRecord, DiagnosticsRecord, DivzRecord};
pub use forcing::{forcing_increment, ForcingFn, ForcingSpec, ForcingTerm};

/// Cells between the zero level and the box below which a run is flagged invalid.
pub const VALIDITY_MARGIN: usize = 8;
/// Distance levels for the `div z` diagnostic.
pub const DIVZ_LEVELS: [f64; 3] = [0.05, 0.1, 0.2];
/// Calibrated one-step motion constant in the band rule `band >= 4 dx + M0 sqrt(h) + h |g|`.
pub const MOTION_CONSTANT: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsToggles {
    /// Largest `psi`-slope of `u` over stencil pairs.
    pub lipschitz: bool,
    /// Largest `div z` on `{d >= delta}`.
    pub divz: bool,
    /// Density ratios at freshly covered cells.
    pub density: bool,
    /// Time-continuity statistic of the distance function.
    pub continuity: bool,
    /// Keep `u` of every step in the trace.
    pub retain_fields: bool,
}

impl Default for DiagnosticsToggles {
    fn default() -> Self {
        DiagnosticsToggles { lipschitz: true, divz: true, density: false, continuity: false, retain_fields: false }
    }
}

#[derive(Clone, Debug)]
pub struct FlowConfig {
    /// Anisotropy.
    pub phi: Norm,
    /// Mobility; distances are measured in `psi°`.
    pub psi: Norm,
    pub forcing: ForcingTerm,
    pub h: f64,
    pub t_final: f64,
    pub grid: Grid,
    /// Distances are clamped to `[-band, band]`.
    pub band: f64,
    pub solver: SolverParams,
    pub diagnostics: DiagnosticsToggles,
    /// Abort on solver non-convergence instead of flagging the step.
    pub hard_fail: bool,
    /// Carry sub-cell interface positions from `u` to the next distance.
    pub subcell: bool,
    /// Start each solve from the previous dual field.
    pub warm_start: bool,
    /// Centre for the inner and outer radius metrics.
    pub center: Vec<f64>,
    /// Interior Wulff radius of a `phi`-regular mobility, when known.
    pub epsilon0: Option<f64>,
}

impl FlowConfig {
    pub fn new(phi: Norm, psi: Norm, grid: Grid, h: f64, t_final: f64) -> FlowConfig {
        let center = vec![0.0; grid.dim()];
        let mut cfg = FlowConfig {
            phi,
            psi,
            forcing: ForcingTerm::Zero,
            h,
            t_final,
            grid,
            band: 0.0,
            solver: SolverParams::default(),
            diagnostics: DiagnosticsToggles::default(),
            hard_fail: false,
            subcell: true,
            warm_start: true,
            center,
            epsilon0: None,
        };
        cfg.band = cfg.min_band();
        cfg
    }

    pub fn with_forcing(mut self, g: ForcingTerm) -> FlowConfig {
        self.forcing = g;
        self.band = self.band.max(self.min_band());
        self
    }

    /// Smallest admissible band for one step's motion.
    pub fn min_band(&self) -> f64 {
        4.0 * self.grid.spacing() + MOTION_CONSTANT * self.h.max(0.0).sqrt() + self.h * self.forcing.sup()
    }

    /// Number of steps covering `[0, t_final]`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.h - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.dim();
        if self.phi.dim() != n || self.psi.dim() != n {
            return Err(FlowError::config("norm and grid dimensions differ"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(FlowError::config("time step must be positive"));
        }
        if !(self.t_final >= self.h) {
            return Err(FlowError::config("final time must be at least one time step"));
        }
        if !self.phi.supports_projection() {
            return Err(FlowError::config("anisotropy does not support polar-ball projection"));
        }
        if !(self.band >= self.min_band()) {
            return Err(FlowError::config(format!("band {} is below the one-step motion bound {}", self.band, self.min_band())));
        }
        if self.center.len() != n {
            return Err(FlowError::config("metric centre has the wrong dimension"));
        }
        if let Some(e) = self.epsilon0 {
            if !(e > 0.0) {
                return Err(FlowError::config("epsilon0 must be positive"));
            }
        }
        self.forcing.validate(&self.grid, &self.psi, self.t_final)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    /// Empty or full input; the set is kept.
    pub skipped: bool,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub max_psi_grad: Option<f64>,
    pub divz: Vec<DivzRecord>,
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub front: Front,
    pub diagnostics: StepDiagnostics,
    /// Signed distance of the input set, clamped to the band.
    pub distance: Option<ScalarField>,
    pub solution: Option<ResolventSolution>,
}

/// Reusable state for consecutive steps of one configuration.
pub struct Stepper<'a> {
    cfg: &'a FlowConfig,
    dist: Norm,
    pairs: Vec<(Vec<i64>, f64)>,
    c2: f64,
    lip: f64,
    warm: Option<Vec<f64>>,
}

impl<'a> Stepper<'a> {
    pub fn new(cfg: &'a FlowConfig) -> Result<Stepper<'a>> {
        cfg.validate()?;
        let dist = cfg.psi.polar();
        let dx = cfg.grid.spacing();
        let pairs = Stencil::for_dim(cfg.grid.dim())
            .offsets
            .into_iter()
            .map(|o| {
                let v: Vec<f64> = o.iter().map(|k| *k as f64 * dx).collect();
                let len = dist.eval(&v);
                (o, len)
            })
            .collect();
        let (_, c2) = ellipticity_constants(&cfg.psi, &cfg.phi)?;
        let lip = cfg.forcing.lipschitz(&cfg.psi);
        Ok(Stepper { cfg, dist, pairs, c2, lip, warm: None })
    }

    /// `psi°`, the distance norm.
    pub fn distance_norm(&self) -> &Norm {
        &self.dist
    }

    pub fn step(&mut self, front: &Front, k: usize) -> Result<StepOutput> {
        let cfg = self.cfg;
        let t = (k + 1) as f64 * cfg.h;
        if front.mask.is_empty() || front.mask.is_full() {
            let diagnostics = StepDiagnostics {
                step: k + 1,
                t,
                skipped: true,
                iterations: 0,
                residual: 0.0,
                converged: true,
                max_psi_grad: None,
                divz: Vec::new(),
            };
            return Ok(StepOutput { front: front.clone(), diagnostics, distance: None, solution: None });
        }
        let d = if cfg.subcell {
            signed_distance(front, &self.dist, cfg.band)?
        } else {
            signed_distance(&Front::from_mask(front.mask.clone()), &self.dist, cfg.band)?
        };
        let mut f = d.clone();
        match forcing::scalar_increment(&cfg.forcing, k, cfg.h) {
            Some(0.0) => {}
            Some(c) => f.values.iter_mut().for_each(|v| *v += c),
            None => {
                let g = forcing_increment(&cfg.forcing, k, cfg.h, &cfg.grid);
                f.values.iter_mut().zip(&g.values).for_each(|(v, w)| *v += w);
            }
        }
        let warm = if cfg.warm_start { self.warm.as_deref() } else { None };
        let sol = solve_resolvent_from(&ResolventProblem { f: &f, h: cfg.h, phi: &cfg.phi }, &cfg.solver, warm)?;
        if !sol.converged && cfg.hard_fail {
            return Err(FlowError::Numerical(format!(
                "resolvent at step {} stopped with certificate {:.3e} above tolerance {:.3e}",
                k + 1,
                sol.certificate,
                sol.tolerance
            )));
        }
        let max_psi_grad = cfg.diagnostics.lipschitz.then(|| self.slope(&sol.u));
        let divz = if cfg.diagnostics.divz { self.divz(&sol, &d) } else { Vec::new() };
        let next = if cfg.subcell { Front::from_level(&sol.u) } else { Front::from_mask(crate::geometry::sublevel_mask(&sol.u, 0.0)) };
        if cfg.warm_start {
            self.warm = Some(sol.z.clone());
        }
        let diagnostics = StepDiagnostics {
            step: k + 1,
            t,
            skipped: false,
            iterations: sol.iterations,
            residual: sol.certificate,
            converged: sol.converged,
            max_psi_grad,
            divz,
        };
        Ok(StepOutput { front: next, diagnostics, distance: Some(d), solution: Some(sol) })
    }

    /// `max (u(x + tau) - u(x)) / psi°(tau)` over stencil offsets, the discrete `psi(grad u)`.
    fn slope(&self, u: &ScalarField) -> f64 {
        let grid = &u.grid;
        let dims = grid.dims();
        let strides = grid.strides();
        let mut best = 0.0f64;
        for i in 0..grid.len() {
            let c = grid.coords(i);
            'pairs: for (o, len) in &self.pairs {
                let mut j = i as i64;
                for a in 0..c.len() {
                    let v = c[a] as i64 + o[a];
                    if v < 0 || v >= dims[a] as i64 {
                        continue 'pairs;
                    }
                    j += o[a] * strides[a] as i64;
                }
                best = best.max((u.values[j as usize] - u.values[i]) / len);
            }
        }
        best
    }

    fn divz(&self, sol: &ResolventSolution, d: &ScalarField) -> Vec<DivzRecord> {
        let cfg = self.cfg;
        let div = sol.div_z();
        let n = cfg.grid.dim() as f64;
        // stay clear of the clamp, where f is no longer the distance
        let top = cfg.band - MOTION_CONSTANT * cfg.h.sqrt();
        DIVZ_LEVELS
            .iter()
            .map(|&delta| {
                let mut max = f64::NEG_INFINITY;
                for (v, dv) in div.iter().zip(&d.values) {
                    if *dv >= delta && *dv <= top {
                        max = max.max(*v);
                    }
                }
                let bound = cfg.epsilon0.map(|e| 2.0 * self.c2 * self.lip + (n - 1.0) / (e * delta).min(1.0));
                DivzRecord { delta, max: max.is_finite().then_some(max), bound }
            })
            .collect()
    }
}

/// One scheme step on a mask (interface at edge midpoints).
pub fn atw_step(e: &SetMask, cfg: &FlowConfig, k: usize) -> Result<(SetMask, StepDiagnostics)> {
    let mut stepper = Stepper::new(cfg)?;
    let out = stepper.step(&Front::from_mask(e.clone()), k)?;
    Ok((out.front.mask, out.diagnostics))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepMetrics {
    pub step: usize,
    pub t: f64,
    pub volume: f64,
    pub perimeter: f64,
    pub inradius: Option<f64>,
    pub outradius: Option<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub max_psi_grad: Option<f64>,
    pub max_divz_d05: Option<f64>,
    pub extinct: bool,
    pub full: bool,
}

#[derive(Clone, Debug)]
pub struct FlowTrace {
    /// Masks at `t = k h`, starting with the initial set.
    pub masks: Vec<SetMask>,
    /// Final front, with the sub-cell level when available.
    pub last: Front,
    pub metrics: Vec<StepMetrics>,
    pub steps: Vec<StepDiagnostics>,
    /// `u` per step when retained.
    pub fields: Vec<ScalarField>,
    pub density: Vec<DensityRecord>,
    pub continuity: Vec<ContinuityRecord>,
    pub h: f64,
    /// First `k h` with an empty set.
    pub extinction_time: Option<f64>,
    /// First `k h` with the whole box.
    pub full_time: Option<f64>,
    /// False once the zero level came within the validity margin of the box.
    pub valid: bool,
    pub warnings: Vec<String>,
}

impl FlowTrace {
    pub fn max_psi_grad(&self) -> Option<f64> {
        self.steps.iter().filter_map(|s| s.max_psi_grad).reduce(f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.steps.iter().map(|s| s.residual).fold(0.0, f64::max)
    }

    pub fn all_converged(&self) -> bool {
        self.steps.iter().all(|s| s.converged)
    }
}

fn metrics(front: &Front, step: usize, t: f64, dist: &Norm, cfg: &FlowConfig, diag: Option<&StepDiagnostics>) -> StepMetrics {
    let mask = &front.mask;
    let (extinct, full) = (mask.is_empty(), mask.is_full());
    let radii = if extinct || full { None } else { inner_outer_radius(front, dist, &cfg.center) };
    StepMetrics {
        step,
        t,
        volume: mask.volume(),
        perimeter: if extinct || full { 0.0 } else { staircase_perimeter(mask, &cfg.phi) },
        inradius: radii.map(|r| r.0),
        outradius: radii.map(|r| r.1),
        residual: diag.map_or(0.0, |d| d.residual),
        iterations: diag.map_or(0, |d| d.iterations),
        max_psi_grad: diag.and_then(|d| d.max_psi_grad),
        max_divz_d05: diag.and_then(|d| d.divz.first().and_then(|r| r.max)),
        extinct,
        full,
    }
}

/// Iterates the scheme from `e0` up to `t_final`, stopping at extinction or full space.
pub fn run_flow(e0: &Front, cfg: &FlowConfig) -> Result<FlowTrace> {
    cfg.grid.check_same(e0.grid())?;
    if !interface_clear_of_boundary(&e0.mask, VALIDITY_MARGIN) {
        return Err(FlowError::input(format!("initial interface lies within {VALIDITY_MARGIN} cells of the box boundary")));
    }
    let mut stepper = Stepper::new(cfg)?;
    let dist = stepper.distance_norm().clone();
    let m = cfg.forcing.lipschitz(&cfg.psi);
    let mut trace = FlowTrace {
        masks: vec![e0.mask.clone()],
        last: e0.clone(),
        metrics: vec![metrics(e0, 0, 0.0, &dist, cfg, None)],
        steps: Vec::new(),
        fields: Vec::new(),
        density: Vec::new(),
        continuity: Vec::new(),
        h: cfg.h,
        extinction_time: e0.mask.is_empty().then_some(0.0),
        full_time: e0.mask.is_full().then_some(0.0),
        valid: true,
        warnings: Vec::new(),
    };
    let mut history: Vec<ScalarField> = Vec::new();
    let mut front = e0.clone();
    for k in 0..cfg.steps() {
        if front.mask.is_empty() || front.mask.is_full() {
            break;
        }
        let out = stepper.step(&front, k)?;
        let t = out.diagnostics.t;
        if !out.diagnostics.converged {
            trace.warnings.push(format!(
                "step {}: solver stopped at certificate {:.3e}",
                out.diagnostics.step, out.diagnostics.residual
            ));
        }
        if cfg.diagnostics.continuity {
            if let Some(d) = &out.distance {
                history.push(d.clone());
                if history.len() > 5 {
                    history.remove(0);
                }
                if let Some(r) = diagnostics::continuity(&history, k, cfg.h, m, cfg.band) {
                    trace.continuity.push(r);
                }
            }
        }
        if cfg.diagnostics.density {
            trace.density.extend(diagnostics::density(&front.mask, &out.front.mask, k + 1));
        }
        if cfg.diagnostics.retain_fields {
            if let Some(sol) = &out.solution {
                trace.fields.push(sol.u.clone());
            }
        }
        front = out.front;
        let mask = &front.mask;
        if trace.valid && !mask.is_empty() && !mask.is_full() && !interface_clear_of_boundary(mask, VALIDITY_MARGIN) {
            trace.valid = false;
            trace.warnings.push(format!("step {}: interface within {VALIDITY_MARGIN} cells of the box", k + 1));
        }
        trace.metrics.push(metrics(&front, k + 1, t, &dist, cfg, Some(&out.diagnostics)));
        trace.steps.push(out.diagnostics);
        trace.masks.push(mask.clone());
        if mask.is_empty() {
            trace.extinction_time = Some(t);
        }
        if mask.is_full() {
            trace.full_time = Some(t);
        }
    }
    trace.last = front;
    Ok(trace)
}
