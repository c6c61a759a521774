use crystalflow::FlowError;
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    /// Bad config, malformed JSON, unknown selector or bad domain parameters.
    Input(String),
    /// Solver or nesting failure.
    Numerical(String),
    /// Time step outside the window where the closed-form radius holds.
    OracleWindow { h: f64, limit: f64, radius: f64 },
    /// Measured one-step radius disagrees with the closed form.
    OracleMismatch { measured: f64, predicted: f64, tolerance: f64 },
    /// Some acceptance criterion failed.
    VerifyFailed { failed: Vec<u8> },
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Numerical(_) | FlowError::Nesting { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("io error: {e}"))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::VerifyFailed { .. } => 1,
            CliError::Input(_) => 2,
            CliError::Numerical(_) | CliError::OracleWindow { .. } | CliError::OracleMismatch { .. } => 3,
        }
    }

    /// One JSON line for stderr.
    pub fn record(&self) -> serde_json::Value {
        match self {
            CliError::Input(m) => json!({"level": "error", "kind": "input", "message": m}),
            CliError::Numerical(m) => json!({"level": "error", "kind": "numerical", "message": m}),
            CliError::OracleWindow { h, limit, radius } => json!({
                "level": "error",
                "kind": "oracle_window",
                "message": format!("h = {h} exceeds R^2 / (N + 1) = {limit} for R = {radius}; the closed-form radius does not apply"),
                "h": h,
                "limit": limit,
                "radius": radius,
            }),
            CliError::OracleMismatch { measured, predicted, tolerance } => json!({
                "level": "error",
                "kind": "oracle_mismatch",
                "message": format!("one-step radius {measured} differs from {predicted} by more than {tolerance}"),
                "measured": measured,
                "predicted": predicted,
                "tolerance": tolerance,
            }),
            CliError::VerifyFailed { failed } => json!({
                "level": "error",
                "kind": "verify",
                "message": format!("criteria {failed:?} failed"),
            }),
        }
    }
}
