//! `metrics.csv` and mask snapshots for a flow run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::FlowTrace;
use crate::error::Result;
use crate::geometry::io::write_mask;

pub const METRICS_HEADER: &str =
    "step,t,volume,perimeter_staircase,inradius,outradius,residual,max_psi_grad,max_divz_d05,extinct_flag";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(trace: &FlowTrace) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for m in &trace.metrics {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            m.step,
            m.t,
            m.volume,
            m.perimeter,
            opt(m.inradius),
            opt(m.outradius),
            m.residual,
            opt(m.max_psi_grad),
            opt(m.max_divz_d05),
            m.extinct as u8
        );
    }
    s
}

/// Writes `metrics.csv` and `mask_NNNNN.f64grid` every `stride` steps (and the last step).
pub fn write_flow_outputs(trace: &FlowTrace, dir: &Path, stride: usize) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("metrics.csv");
    fs::write(&path, metrics_csv(trace))?;
    written.push(path);
    let last = trace.masks.len().saturating_sub(1);
    for (k, mask) in trace.masks.iter().enumerate() {
        if stride > 0 && (k % stride == 0 || k == last) {
            let path = dir.join(format!("mask_{k:05}.f64grid"));
            write_mask(&path, mask, k as f64 * trace.h)?;
            written.push(path);
        }
    }
    Ok(written)
}
