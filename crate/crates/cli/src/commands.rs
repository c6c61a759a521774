use std::fs;
use std::path::Path;

use crystalflow::acceptance::{fit_rate, run_suite, Suite};
use crystalflow::atw::diagnostics_report;
use crystalflow::atw::output::write_flow_outputs;
use crystalflow::atw::ForcingSpec;
use crystalflow::levelset::output::{write_approximation_report, write_levelset_outputs};
use crystalflow::oracle::{wulff_radius_law, wulff_step_radius, OracleParams};
use crystalflow::{run_flow, run_levelset, solve_via_approximation, FlowTrace};
use serde_json::json;

use crate::config::{InitialSpec, Mode, Resolved, RunConfig};
use crate::error::CliError;

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn constant_forcing(spec: &ForcingSpec) -> Option<f64> {
    match spec {
        ForcingSpec::Zero => Some(0.0),
        ForcingSpec::Constant { value } => Some(*value),
        _ => None,
    }
}

/// Initial radius when the run is a Wulff shape of `phi` moving with `psi = phi`
/// under a constant forcing, the case with closed-form radii.
fn wulff_case(r: &Resolved) -> Option<(f64, f64)> {
    let cfg = &r.config;
    let InitialSpec::Wulff { radius, norm, .. } = &cfg.initial else { return None };
    let same_shape = norm.as_ref().is_none_or(|n| *n == cfg.phi);
    let g = constant_forcing(&cfg.forcing)?;
    (same_shape && r.flow.psi.same_as(&r.flow.phi)).then_some((*radius, g))
}

fn oracle_params(r: &Resolved, radius: f64, g: f64) -> OracleParams {
    OracleParams { n: r.flow.grid.dim(), r: radius, h: r.flow.h, gmax: g, ..OracleParams::default() }
}

fn final_radius(trace: &FlowTrace) -> Option<f64> {
    let m = trace.metrics.last()?;
    Some(0.5 * (m.inradius? + m.outradius?))
}

pub fn run(path: &Path, out: &Path, threads: Option<usize>) -> Result<(), CliError> {
    let resolved = crate::config::load(path)?.resolve()?;
    let cfg = &resolved.config;
    let predicted = if cfg.oracle_check {
        if cfg.mode != Mode::Flow {
            return Err(CliError::Input("oracle_check applies to flow runs".into()));
        }
        let (radius, g) = wulff_case(&resolved)
            .ok_or_else(|| CliError::Input("oracle_check needs a Wulff initial set, psi = phi and a constant forcing".into()))?;
        let p = oracle_params(&resolved, radius, g);
        let step = wulff_step_radius(radius, &p)?;
        if step.outside_window {
            let limit = radius * radius / (p.n as f64 + 1.0);
            return Err(CliError::OracleWindow { h: p.h, limit, radius });
        }
        Some(step)
    } else {
        None
    };
    crate::threads::configure(cfg, threads)?;
    fs::create_dir_all(out)?;
    match cfg.mode {
        Mode::Flow => {
            let trace = run_flow(&resolved.front(), &resolved.flow)?;
            write_flow_outputs(&trace, out, cfg.snapshot_stride)?;
            let mut oracle = serde_json::Value::Null;
            let mut mismatch = None;
            if let (Some(step), Some(m)) = (predicted, trace.metrics.get(1)) {
                let tolerance = resolved.flow.grid.spacing();
                let measured = match (m.inradius, m.outradius) {
                    (Some(a), Some(b)) => [a, b],
                    _ => [0.0, 0.0],
                };
                let worst = measured.iter().map(|v| (v - step.radius).abs()).fold(0.0, f64::max);
                let ok = if step.extinct { m.extinct } else { worst <= tolerance };
                oracle = json!({
                    "predicted": step.radius,
                    "predicted_extinct": step.extinct,
                    "inradius": m.inradius,
                    "outradius": m.outradius,
                    "tolerance": tolerance,
                    "passed": ok,
                });
                if !ok {
                    mismatch = Some(CliError::OracleMismatch { measured: 0.5 * (measured[0] + measured[1]), predicted: step.radius, tolerance });
                }
            }
            let report = json!({
                "mode": "flow",
                "config": cfg,
                "steps": trace.metrics.len().saturating_sub(1),
                "extinction_time": trace.extinction_time,
                "full_time": trace.full_time,
                "valid": trace.valid,
                "warnings": trace.warnings,
                "max_residual": trace.max_residual(),
                "all_converged": trace.all_converged(),
                "diagnostics": diagnostics_report(&trace, &resolved.flow),
                "oracle": oracle,
            });
            write_json(&out.join("report.json"), &report)?;
            for w in &trace.warnings {
                eprintln!("{}", json!({"level": "warning", "message": w}));
            }
            if let Some(e) = mismatch {
                return Err(e);
            }
        }
        Mode::Levelset => {
            let levels = resolved.levels.as_ref().expect("level-set mode resolves levels");
            let (run, approximation) = match &cfg.schedule {
                Some(schedule) => {
                    let rep = solve_via_approximation(&resolved.u0, &resolved.psi, schedule, &resolved.flow, levels, cfg.acceptance_gap)?;
                    write_approximation_report(&rep, out)?;
                    let summary = serde_json::to_value(rep.summary()).map_err(|e| CliError::Input(e.to_string()))?;
                    (rep.runs.last().expect("nonempty schedule").clone(), summary)
                }
                None => (run_levelset(&resolved.u0, &resolved.flow, levels)?, serde_json::Value::Null),
            };
            write_levelset_outputs(&run, out, cfg.snapshot_stride)?;
            let report = json!({
                "mode": "levelset",
                "config": cfg,
                "steps": run.function.fields.len().saturating_sub(1),
                "fattening_suspects": run.fattening_suspects,
                "boundary_levels": run.boundary_levels,
                "modulus": run.modulus,
                "max_residual": run.max_residual,
                "unconverged_steps": run.unconverged_steps,
                "approximation": approximation,
            });
            write_json(&out.join("report.json"), &report)?;
        }
    }
    Ok(())
}

pub fn verify(selector: &str, out: Option<&Path>) -> Result<(), CliError> {
    let suite: Suite = selector.parse().map_err(CliError::Input)?;
    let results = run_suite(suite, |r| {
        println!("{r}");
        for n in &r.notes {
            println!("    {n}");
        }
    })?;
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let value = serde_json::to_value(&results).map_err(|e| CliError::Input(e.to_string()))?;
        write_json(&dir.join("verify.json"), &value)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::VerifyFailed { failed })
    }
}

// (h, cells) for each rung
fn ladder(cfg: &RunConfig) -> Result<Vec<(f64, usize)>, CliError> {
    let l = cfg.ladder.as_ref().ok_or_else(|| CliError::Input("converge needs a ladder with at least three h values".into()))?;
    let cells = match &l.cells {
        None => vec![cfg.grid.cells; l.h.len()],
        Some(c) if c.len() == 1 => vec![c[0]; l.h.len()],
        Some(c) if c.len() == l.h.len() => c.clone(),
        Some(_) => return Err(CliError::Input("ladder cells must have one entry or one per h".into())),
    };
    let rungs: Vec<(f64, usize)> = l.h.iter().copied().zip(cells).collect();
    if rungs.len() < 3 {
        return Err(CliError::Input("a convergence ladder needs at least three points".into()));
    }
    if rungs.iter().any(|(h, _)| !(*h > 0.0 && h.is_finite())) {
        return Err(CliError::Input("ladder time steps must be positive".into()));
    }
    for (i, a) in rungs.iter().enumerate() {
        if rungs[..i].contains(a) {
            return Err(CliError::Input(format!("ladder repeats the point h = {}, cells = {}", a.0, a.1)));
        }
    }
    Ok(rungs)
}

pub fn converge(path: &Path, out: &Path, threads: Option<usize>) -> Result<(), CliError> {
    let base = crate::config::load(path)?;
    if base.mode != Mode::Flow {
        return Err(CliError::Input("converge applies to flow runs".into()));
    }
    let rungs = ladder(&base)?;
    let mut runs = Vec::with_capacity(rungs.len());
    for &(h, cells) in &rungs {
        let mut c = base.clone();
        c.h = h;
        c.grid.cells = cells;
        c.band = None;
        c.ladder = None;
        runs.push(c.resolve()?);
    }
    crate::threads::configure(&base, threads)?;

    let law = match wulff_case(&runs[0]) {
        Some((r0, g)) => Some(wulff_radius_law(r0, base.t_final, base.grid.dim, g)?),
        None => None,
    };
    let mut radii = Vec::with_capacity(runs.len());
    for (r, &(h, _)) in runs.iter().zip(&rungs) {
        let trace = run_flow(&r.front(), &r.flow)?;
        let radius = final_radius(&trace).ok_or_else(|| {
            CliError::Input(format!("the set vanished or filled the box before t_final at h = {h}; shorten t_final"))
        })?;
        radii.push(radius);
    }
    // the finest rung is the reference when no closed form applies
    let finest = (0..rungs.len())
        .min_by(|&a, &b| rungs[a].0.total_cmp(&rungs[b].0).then(rungs[b].1.cmp(&rungs[a].1)))
        .expect("at least three rungs");
    let (reference, reference_kind) = match law {
        Some(v) => (v.radius, "radius_law"),
        None => (radii[finest], "finest_run"),
    };
    let dx: Vec<f64> = runs.iter().map(|r| r.flow.grid.spacing()).collect();
    let mut csv = String::from("h,dx,radius,reference,error\n");
    let mut fit_x = Vec::new();
    let mut fit_e = Vec::new();
    let distinct_h = rungs.iter().any(|(h, _)| *h != rungs[0].0);
    for (i, &(h, _)) in rungs.iter().enumerate() {
        let err = (radii[i] - reference).abs();
        csv.push_str(&format!("{h},{},{},{reference},{err}\n", dx[i], radii[i]));
        if law.is_none() && i == finest {
            continue;
        }
        if err > 0.0 {
            fit_x.push(if distinct_h { h } else { dx[i] });
            fit_e.push(err);
        }
    }
    let rate = (fit_x.len() >= 2).then(|| fit_rate(&fit_x, &fit_e));
    fs::create_dir_all(out)?;
    fs::write(out.join("convergence.csv"), csv)?;
    let mut resolved = runs[0].config.clone();
    resolved.ladder = base.ladder.clone();
    let report = json!({
        "config": resolved,
        "reference": reference_kind,
        "rate_in": if distinct_h { "h" } else { "dx" },
        "rate": rate,
        "radii": radii,
    });
    write_json(&out.join("convergence.json"), &report)?;
    match rate {
        Some(r) => println!("fitted rate {r:.4} against {}", if distinct_h { "h" } else { "dx" }),
        None => println!("fitted rate unavailable: fewer than two nonzero errors"),
    }
    Ok(())
}
