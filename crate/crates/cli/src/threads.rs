use crate::config::RunConfig;
use crate::error::CliError;

pub const THREADS_ENV: &str = "CRYSTALFLOW_THREADS";

/// Worker count: one when deterministic, else the flag, the environment, the config, in that order.
pub fn resolve(cfg: &RunConfig, flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if cfg.deterministic {
        return Ok(Some(1));
    }
    if flag.is_some() {
        return Ok(flag);
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| CliError::Input(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        return Ok(Some(n));
    }
    Ok(cfg.threads)
}

pub fn configure(cfg: &RunConfig, flag: Option<usize>) -> Result<(), CliError> {
    let Some(n) = resolve(cfg, flag)? else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Input("thread count must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Input(format!("cannot start {n} worker threads: {e}")))
}
