//! `levelset_metrics.csv`, `u_h` snapshots and `approximation_report.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{ApproximationReport, LevelSetRun};
use crate::error::Result;
use crate::geometry::io::write_field;

pub const LEVELSET_HEADER: &str = "stamp,lambda,volume,inradius,outradius,fattening_gap";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn levelset_csv(run: &LevelSetRun) -> String {
    let mut s = String::from(LEVELSET_HEADER);
    s.push('\n');
    for m in &run.metrics {
        let _ = writeln!(s, "{},{},{},{},{},{}", m.stamp, m.lambda, m.volume, opt(m.inradius), opt(m.outradius), m.fattening_gap);
    }
    s
}

/// Writes `levelset_metrics.csv` and `levelset_NNNNN.f64grid` every `stride` stamps (and the last).
pub fn write_levelset_outputs(run: &LevelSetRun, dir: &Path, stride: usize) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let path = dir.join("levelset_metrics.csv");
    fs::write(&path, levelset_csv(run))?;
    let mut written = vec![path];
    let f = &run.function;
    let last = f.fields.len().saturating_sub(1);
    for (j, (field, t)) in f.fields.iter().zip(&f.times).enumerate() {
        if stride > 0 && (j % stride == 0 || j == last) {
            let path = dir.join(format!("levelset_{j:05}.f64grid"));
            write_field(&path, field, *t, "levelset")?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn write_approximation_report(report: &ApproximationReport, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("approximation_report.json");
    fs::write(&path, serde_json::to_string_pretty(&report.summary())?)?;
    Ok(path)
}
