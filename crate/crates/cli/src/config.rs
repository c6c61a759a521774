//! Run configuration as read from JSON, and its resolution into core types.

use std::path::Path;

use crystalflow::atw::{DiagnosticsToggles, ForcingSpec};
use crystalflow::levelset::LevelGrid;
use crystalflow::{FlowConfig, Front, Grid, Norm, NormSpec, ScalarField, SolverParams};
use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Value};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

fn yes() -> bool {
    true
}

fn default_stride() -> usize {
    10
}

fn default_dim() -> usize {
    2
}

fn default_half_width() -> f64 {
    1.0
}

fn default_level_count() -> usize {
    64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Evolve the single set `{u0 <= 0}`.
    #[default]
    Flow,
    /// Evolve every sublevel set of `u0`.
    Levelset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub cells: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Initial set, or initial function in level-set mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `{eta°(x - center) <= radius}`, with `eta = phi` unless given.
    Wulff {
        center: Vec<f64>,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        norm: Option<NormSpec>,
    },
    /// `{x . normal <= offset}`.
    Halfspace { normal: Vec<f64>, offset: f64 },
    Union {
        balls: Vec<Ball>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        norm: Option<NormSpec>,
    },
    /// Expression in `x`, `y`, `z`.
    Levelset { expr: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsSpec {
    #[serde(default = "default_level_count")]
    pub count: usize,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
}

/// Refinement ladder for `converge`; a single `cells` entry is broadcast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    pub h: Vec<f64>,
    #[serde(default)]
    pub cells: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub phi: NormSpec,
    /// Mobility; defaults to `phi`.
    #[serde(default)]
    pub psi: Option<NormSpec>,
    #[serde(default)]
    pub forcing: ForcingSpec,
    pub initial: InitialSpec,
    pub grid: GridSpec,
    pub h: f64,
    pub t_final: f64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub band: Option<f64>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub levels: Option<LevelsSpec>,
    /// Regularization schedule `delta_j`; level-set mode only.
    #[serde(default)]
    pub schedule: Option<Vec<f64>>,
    #[serde(default)]
    pub acceptance_gap: Option<f64>,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub diagnostics: DiagnosticsToggles,
    #[serde(default)]
    pub hard_fail: bool,
    #[serde(default = "yes")]
    pub subcell: bool,
    #[serde(default = "yes")]
    pub warm_start: bool,
    #[serde(default)]
    pub epsilon0: Option<f64>,
    /// Check the one-step Wulff radius against its closed form.
    #[serde(default)]
    pub oracle_check: bool,
    #[serde(default)]
    pub ladder: Option<Ladder>,
}

/// Reads a config file; a `report.json` is accepted through its `config` entry.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("malformed JSON: {e}")))?;
    let value = match value.get("config") {
        Some(inner) if value.get("phi").is_none() => inner.clone(),
        _ => value,
    };
    serde_json::from_value(value).map_err(|e| CliError::Input(format!("invalid config: {e}")))
}

/// Core objects built from a config.
pub struct Resolved {
    pub config: RunConfig,
    pub flow: FlowConfig,
    pub psi: Norm,
    pub u0: ScalarField,
    pub levels: Option<LevelGrid>,
}

impl Resolved {
    pub fn front(&self) -> Front {
        Front::from_level(&self.u0)
    }
}

impl RunConfig {
    /// Validates and fills every default so that the result round-trips.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let mut cfg = self.clone();
        let n = cfg.grid.dim;
        if !(2..=3).contains(&n) {
            return Err(CliError::Input(format!("dimension {n} is not supported, use 2 or 3")));
        }
        let grid = Grid::cube(n, cfg.grid.cells, cfg.grid.half_width)?;
        let phi = cfg.phi.build(n)?;
        let psi_spec = cfg.psi.clone().unwrap_or_else(|| cfg.phi.clone());
        let psi = psi_spec.build(n)?;
        cfg.psi = Some(psi_spec);
        let mut flow = FlowConfig::new(phi, psi.clone(), grid, cfg.h, cfg.t_final).with_forcing(cfg.forcing.build()?);
        if let Some(b) = cfg.band {
            flow.band = b;
        }
        cfg.band = Some(flow.band);
        if cfg.center.is_none() {
            if let InitialSpec::Wulff { center, .. } = &cfg.initial {
                cfg.center = Some(center.clone());
            }
        }
        if let Some(c) = &cfg.center {
            if c.len() != n {
                return Err(CliError::Input("center has the wrong dimension".into()));
            }
            flow.center = c.clone();
        }
        cfg.center = Some(flow.center.clone());
        flow.solver = cfg.solver.clone();
        flow.diagnostics = cfg.diagnostics.clone();
        flow.hard_fail = cfg.hard_fail;
        flow.subcell = cfg.subcell;
        flow.warm_start = cfg.warm_start;
        flow.epsilon0 = cfg.epsilon0;
        flow.validate()?;

        if cfg.snapshot_stride == 0 {
            return Err(CliError::Input("snapshot_stride must be positive".into()));
        }
        if cfg.schedule.is_some() && cfg.mode != Mode::Levelset {
            return Err(CliError::Input("a regularization schedule needs mode \"levelset\"".into()));
        }
        let u0 = initial_function(&cfg.initial, &flow)?;
        let levels = match cfg.mode {
            Mode::Flow => None,
            Mode::Levelset => {
                let spec = cfg.levels.clone().unwrap_or(LevelsSpec { count: default_level_count(), min: None, step: None });
                let lv = match (spec.min, spec.step) {
                    (Some(min), Some(step)) => LevelGrid::new(min, step, spec.count)?,
                    (None, None) => LevelGrid::covering(&u0, spec.count)?,
                    _ => return Err(CliError::Input("levels need both min and step, or neither".into())),
                };
                cfg.levels = Some(LevelsSpec { count: lv.count, min: Some(lv.min), step: Some(lv.step) });
                Some(lv)
            }
        };
        Ok(Resolved { config: cfg, flow, psi, u0, levels })
    }
}

fn norm_or_phi(spec: &Option<NormSpec>, flow: &FlowConfig) -> Result<Norm, CliError> {
    match spec {
        Some(s) => Ok(s.build(flow.grid.dim())?),
        None => Ok(flow.phi.clone()),
    }
}

fn check_point(p: &[f64], n: usize, what: &str) -> Result<(), CliError> {
    if p.len() != n || p.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Input(format!("{what} must be {n} finite numbers")));
    }
    Ok(())
}

fn wulff_level<'a>(eta: &'a Norm, center: &[f64], radius: f64) -> impl Fn(&[f64]) -> f64 + 'a {
    let center = center.to_vec();
    move |x: &[f64]| {
        let d: Vec<f64> = x.iter().zip(&center).map(|(a, b)| a - b).collect();
        eta.polar_eval(&d) - radius
    }
}

/// Initial function whose zero sublevel set is the initial set.
pub fn initial_function(spec: &InitialSpec, flow: &FlowConfig) -> Result<ScalarField, CliError> {
    let grid = &flow.grid;
    let n = grid.dim();
    match spec {
        InitialSpec::Wulff { center, radius, norm } => {
            check_point(center, n, "center")?;
            if !(*radius > 0.0) {
                return Err(CliError::Input("radius must be positive".into()));
            }
            let eta = norm_or_phi(norm, flow)?;
            Ok(ScalarField::from_fn(grid, wulff_level(&eta, center, *radius)))
        }
        InitialSpec::Halfspace { normal, offset } => {
            check_point(normal, n, "normal")?;
            let len = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            if len == 0.0 {
                return Err(CliError::Input("normal must be nonzero".into()));
            }
            Ok(ScalarField::from_fn(grid, |x| x.iter().zip(normal).map(|(a, b)| a * b).sum::<f64>() / len - offset))
        }
        InitialSpec::Union { balls, norm } => {
            if balls.is_empty() {
                return Err(CliError::Input("union needs at least one ball".into()));
            }
            let eta = norm_or_phi(norm, flow)?;
            for b in balls {
                check_point(&b.center, n, "center")?;
                if !(b.radius > 0.0) {
                    return Err(CliError::Input("radius must be positive".into()));
                }
            }
            let parts: Vec<_> = balls.iter().map(|b| wulff_level(&eta, &b.center, b.radius)).collect();
            Ok(ScalarField::from_fn(grid, |x| parts.iter().map(|f| f(x)).fold(f64::INFINITY, f64::min)))
        }
        InitialSpec::Levelset { expr } => expression_field(expr, grid),
    }
}

/// Evaluates `expr` at every cell centre with `x`, `y`, `z` bound to its coordinates.
pub fn expression_field(expr: &str, grid: &Grid) -> Result<ScalarField, CliError> {
    let tree = build_operator_tree::<DefaultNumericTypes>(expr).map_err(|e| CliError::Input(format!("bad expression: {e}")))?;
    let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let p = grid.point(i);
        for (name, k) in [("x", 0), ("y", 1), ("z", 2)] {
            let v = p.get(k).copied().unwrap_or(0.0);
            ctx.set_value(name.into(), Value::Float(v)).map_err(|e| CliError::Input(e.to_string()))?;
        }
        let v = tree.eval_number_with_context(&ctx).map_err(|e| CliError::Input(format!("bad expression: {e}")))?;
        if !v.is_finite() {
            return Err(CliError::Input(format!("expression is not finite at {p:?}")));
        }
        values.push(v);
    }
    Ok(ScalarField::new(grid.clone(), values)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        serde_json::from_value(serde_json::json!({
            "phi": {"kind": "l1"},
            "initial": {"kind": "wulff", "center": [0.1, 0.0], "radius": 0.4},
            "grid": {"cells": 32},
            "h": 0.004,
            "t_final": 0.02
        }))
        .unwrap()
    }

    #[test]
    fn expressions_see_coordinates() {
        let grid = Grid::cube(2, 8, 1.0).unwrap();
        let f = expression_field("2 * x - y + 1", &grid).unwrap();
        for i in 0..grid.len() {
            let p = grid.point(i);
            assert!((f.values[i] - (2.0 * p[0] - p[1] + 1.0)).abs() < 1e-12);
        }
        assert!(expression_field("math::sqrt(x - 5)", &grid).is_err());
        assert!(expression_field("w + 1", &grid).is_err());
    }

    #[test]
    fn resolution_fills_defaults_and_is_idempotent() {
        let r = base().resolve().unwrap();
        let c = &r.config;
        assert_eq!(c.psi, Some(NormSpec::L1));
        assert_eq!(c.center, Some(vec![0.1, 0.0]));
        assert!((c.band.unwrap() - r.flow.min_band()).abs() < 1e-15);
        let again = c.resolve().unwrap();
        assert_eq!(&again.config, c);
        assert_eq!(again.u0.values, r.u0.values);
    }

    #[test]
    fn wulff_and_union_levels() {
        let r = base().resolve().unwrap();
        let grid = &r.flow.grid;
        let i = grid.locate(&[0.1, 0.0]).unwrap();
        assert!(r.u0.values[i] < -0.35);
        let mut cfg = base();
        cfg.initial = InitialSpec::Union {
            balls: vec![Ball { center: vec![-0.5, 0.0], radius: 0.2 }, Ball { center: vec![0.5, 0.0], radius: 0.2 }],
            norm: Some(NormSpec::L2),
        };
        let u = cfg.resolve().unwrap().u0;
        let mid = grid.locate(&[0.0, 0.0]).unwrap();
        assert!(u.values[mid] > 0.0);
        assert!(u.values[grid.locate(&[0.5, 0.0]).unwrap()] < 0.0);
    }

    #[test]
    fn levelset_mode_resolves_levels() {
        let mut cfg = base();
        cfg.mode = Mode::Levelset;
        cfg.levels = Some(LevelsSpec { count: 12, min: Some(-0.5), step: None });
        assert!(cfg.resolve().is_err());
        cfg.levels = Some(LevelsSpec { count: 12, min: None, step: None });
        let r = cfg.resolve().unwrap();
        let lv = r.levels.unwrap();
        assert!(lv.covers(&r.u0));
        assert_eq!(r.config.levels.unwrap().step, Some(lv.step));
    }

    #[test]
    fn determinism_forces_one_thread() {
        let mut cfg = base();
        cfg.threads = Some(4);
        assert_eq!(crate::threads::resolve(&cfg, Some(3)).unwrap(), Some(3));
        cfg.deterministic = true;
        assert_eq!(crate::threads::resolve(&cfg, Some(3)).unwrap(), Some(1));
    }
}
