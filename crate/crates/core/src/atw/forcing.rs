//! Forcing terms `g(x, t)` and their time increments over one step.
//!
//! Positive `g` accelerates shrinking: the normal velocity is `-psi(nu)(kappa + g)`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::geometry::{Grid, ScalarField};
use crate::norm::Norm;

pub type ForcingFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ForcingTerm {
    Zero,
    Constant(f64),
    /// Piecewise-linear `c(t)` through `(times, values)`, constant outside.
    Profile { times: Vec<f64>, values: Vec<f64> },
    /// `amplitude * sin(2 pi (wavevector . x) - omega t)`.
    Wave { amplitude: f64, wavevector: Vec<f64>, omega: f64 },
    /// Arbitrary callable with declared sup bound and Lipschitz constant w.r.t. `psi°`.
    Custom { g: ForcingFn, sup: f64, lipschitz: f64 },
}

impl fmt::Debug for ForcingTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForcingTerm::Zero => write!(f, "Zero"),
            ForcingTerm::Constant(c) => write!(f, "Constant({c})"),
            ForcingTerm::Profile { times, values } => write!(f, "Profile({times:?}, {values:?})"),
            ForcingTerm::Wave { amplitude, wavevector, omega } => write!(f, "Wave({amplitude}, {wavevector:?}, {omega})"),
            ForcingTerm::Custom { sup, lipschitz, .. } => write!(f, "Custom(sup {sup}, L {lipschitz})"),
        }
    }
}

/// Serializable forcing description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    Zero,
    Constant { value: f64 },
    Profile { times: Vec<f64>, values: Vec<f64> },
    Wave { amplitude: f64, wavevector: Vec<f64>, omega: f64 },
}

impl Default for ForcingSpec {
    fn default() -> Self {
        ForcingSpec::Zero
    }
}

impl ForcingSpec {
    pub fn build(&self) -> Result<ForcingTerm> {
        let g = match self.clone() {
            ForcingSpec::Zero => ForcingTerm::Zero,
            ForcingSpec::Constant { value } => ForcingTerm::Constant(value),
            ForcingSpec::Profile { times, values } => ForcingTerm::Profile { times, values },
            ForcingSpec::Wave { amplitude, wavevector, omega } => ForcingTerm::Wave { amplitude, wavevector, omega },
        };
        g.check_declared()?;
        Ok(g)
    }
}

impl ForcingTerm {
    pub fn spec(&self) -> Option<ForcingSpec> {
        Some(match self.clone() {
            ForcingTerm::Zero => ForcingSpec::Zero,
            ForcingTerm::Constant(value) => ForcingSpec::Constant { value },
            ForcingTerm::Profile { times, values } => ForcingSpec::Profile { times, values },
            ForcingTerm::Wave { amplitude, wavevector, omega } => ForcingSpec::Wave { amplitude, wavevector, omega },
            ForcingTerm::Custom { .. } => return None,
        })
    }

    pub fn is_space_constant(&self) -> bool {
        matches!(self, ForcingTerm::Zero | ForcingTerm::Constant(_) | ForcingTerm::Profile { .. })
    }

    /// Declared `||g||_inf`.
    pub fn sup(&self) -> f64 {
        match self {
            ForcingTerm::Zero => 0.0,
            ForcingTerm::Constant(c) => c.abs(),
            ForcingTerm::Profile { values, .. } => values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            ForcingTerm::Wave { amplitude, .. } => amplitude.abs(),
            ForcingTerm::Custom { sup, .. } => *sup,
        }
    }

    /// Spatial Lipschitz constant with respect to `psi°`.
    pub fn lipschitz(&self, psi: &Norm) -> f64 {
        match self {
            ForcingTerm::Zero | ForcingTerm::Constant(_) | ForcingTerm::Profile { .. } => 0.0,
            ForcingTerm::Wave { amplitude, wavevector, .. } => {
                2.0 * std::f64::consts::PI * amplitude.abs() * psi.eval(wavevector)
            }
            ForcingTerm::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            ForcingTerm::Zero => 0.0,
            ForcingTerm::Constant(c) => *c,
            ForcingTerm::Profile { times, values } => interpolate(times, values, t),
            ForcingTerm::Wave { amplitude, wavevector, omega } => {
                let phase: f64 = wavevector.iter().zip(x).map(|(k, x)| k * x).sum();
                amplitude * (2.0 * std::f64::consts::PI * phase - omega * t).sin()
            }
            ForcingTerm::Custom { g, .. } => g(x, t),
        }
    }

    fn check_declared(&self) -> Result<()> {
        match self {
            ForcingTerm::Constant(c) if !c.is_finite() => Err(FlowError::config("constant forcing must be finite")),
            ForcingTerm::Profile { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(FlowError::config("profile needs matching, nonempty times and values"));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(FlowError::config("profile times must be strictly increasing"));
                }
                if values.iter().chain(times).any(|v| !v.is_finite()) {
                    return Err(FlowError::config("profile entries must be finite"));
                }
                Ok(())
            }
            ForcingTerm::Wave { amplitude, wavevector, omega } => {
                if !amplitude.is_finite() || !omega.is_finite() || wavevector.iter().any(|k| !k.is_finite()) {
                    return Err(FlowError::config("wave parameters must be finite"));
                }
                Ok(())
            }
            ForcingTerm::Custom { sup, lipschitz, .. } => {
                if !(sup.is_finite() && *sup >= 0.0 && lipschitz.is_finite() && *lipschitz >= 0.0) {
                    return Err(FlowError::config("declared forcing bounds must be finite and nonnegative"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Checks the declared bounds and spot-checks sampled values against them.
    pub fn validate(&self, grid: &Grid, psi: &Norm, t_final: f64) -> Result<()> {
        self.check_declared()?;
        if let ForcingTerm::Wave { wavevector, .. } = self {
            if wavevector.len() != grid.dim() {
                return Err(FlowError::config("wave vector dimension differs from the grid"));
            }
        }
        let (lo, hi) = grid.bounds();
        let sup = self.sup();
        let lip = self.lipschitz(psi);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> { lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..=*b)).collect() };
        for _ in 0..256 {
            let t = rng.gen_range(0.0..=t_final.max(0.0));
            let x = sample(&mut rng);
            let y = sample(&mut rng);
            let (gx, gy) = (self.eval(&x, t), self.eval(&y, t));
            if !gx.is_finite() || gx.abs() > sup * (1.0 + 1e-12) + 1e-12 {
                return Err(FlowError::config(format!("forcing value {gx} exceeds the declared bound {sup}")));
            }
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let allowed = lip * psi.polar_eval(&diff);
            if (gx - gy).abs() > allowed * (1.0 + 1e-9) + 1e-12 {
                return Err(FlowError::config(format!(
                    "forcing varies by {} over a pair where the declared Lipschitz constant allows {allowed}",
                    (gx - gy).abs()
                )));
            }
        }
        Ok(())
    }
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= times[0] {
        return values[0];
    }
    let last = times.len() - 1;
    if t >= times[last] {
        return values[last];
    }
    let k = times.partition_point(|s| *s <= t) - 1;
    let w = (t - times[k]) / (times[k + 1] - times[k]);
    values[k] + w * (values[k + 1] - values[k])
}

// exact integral of the piecewise-linear profile over [a, b]
fn profile_integral(times: &[f64], values: &[f64], a: f64, b: f64) -> f64 {
    let mut knots = vec![a];
    knots.extend(times.iter().copied().filter(|s| *s > a && *s < b));
    knots.push(b);
    knots.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (interpolate(times, values, w[0]) + interpolate(times, values, w[1]))).sum()
}

const SUBINTERVALS: usize = 4;

// two-point Gauss-Legendre rule on each of four sub-intervals
fn time_integral(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let w = (b - a) / SUBINTERVALS as f64;
    let off = 0.5 * w / 3f64.sqrt();
    (0..SUBINTERVALS)
        .map(|j| {
            let m = a + (j as f64 + 0.5) * w;
            0.5 * w * (f(m - off) + f(m + off))
        })
        .sum()
}

/// Scalar increment `G((k+1)h) - G(kh)` for space-constant forcing.
pub fn scalar_increment(g: &ForcingTerm, k: usize, h: f64) -> Option<f64> {
    let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
    match g {
        ForcingTerm::Zero => Some(0.0),
        ForcingTerm::Constant(c) => Some(c * h),
        ForcingTerm::Profile { times, values } => Some(profile_integral(times, values, a, b)),
        _ => None,
    }
}

/// Per-cell `int_{kh}^{(k+1)h} g(x, s) ds`.
pub fn forcing_increment(g: &ForcingTerm, k: usize, h: f64, grid: &Grid) -> ScalarField {
    if let Some(v) = scalar_increment(g, k, h) {
        return ScalarField::constant(grid, v);
    }
    let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
    ScalarField::from_fn(grid, |x| time_integral(|t| g.eval(x, t), a, b))
}
