//! Closed-form reference values for Wulff-shape evolutions and separation bounds.

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    /// Space dimension `N`.
    pub n: usize,
    /// Wulff radius.
    pub r: f64,
    pub h: f64,
    /// Ellipticity constants with `c1 phi° <= psi° <= c2 phi°`.
    pub c1: f64,
    pub c2: f64,
    /// Forcing bound; in [`wulff_step_radius`] a signed constant forcing is also accepted.
    pub gmax: f64,
    /// Lipschitz constant of the forcing.
    pub l: f64,
    /// Comparison rate constant.
    pub m: f64,
    /// Mobility bound.
    pub beta: f64,
    /// Initial separation.
    pub delta: f64,
    /// Horizon fraction.
    pub theta: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams { n: 2, r: 0.5, h: 0.004, c1: 1.0, c2: 1.0, gmax: 0.0, l: 0.0, m: 0.0, beta: 1.0, delta: 0.0, theta: 0.5 }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(FlowError::input("dimension must be at least 2"));
        }
        if !(self.c1 > 0.0 && self.c1 <= self.c2) {
            return Err(FlowError::input("ellipticity constants need 0 < c1 <= c2"));
        }
        if !(self.r > 0.0 && self.h > 0.0) {
            return Err(FlowError::input("radius and time step must be positive"));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(FlowError::input("horizon fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Radius of the inner plateau, `sqrt(h (N + 1) / c1)`.
    pub fn plateau_radius(&self) -> f64 {
        (self.h * (self.n as f64 + 1.0) / self.c1).sqrt()
    }
}

/// Resolvent of `f = c1 (phi° - R) v c2 (phi° - R)` at a point with `phi°(x) = x_norm`.
pub fn resolvent_closed_form(x_norm: f64, p: &OracleParams) -> Result<f64> {
    p.validate()?;
    if !(x_norm >= 0.0) {
        return Err(FlowError::input("x_norm must be nonnegative"));
    }
    let n = p.n as f64;
    if p.h / p.c1 > p.r * p.r / (n + 1.0) {
        return Err(FlowError::Domain(format!(
            "closed form requires h / c1 <= R^2 / (N + 1); got {} > {}",
            p.h / p.c1,
            p.r * p.r / (n + 1.0)
        )));
    }
    if x_norm <= p.plateau_radius() {
        Ok((p.c1 * p.h).sqrt() * 2.0 * n / (n + 1.0).sqrt() - p.c1 * p.r)
    } else {
        let f = (p.c1 * (x_norm - p.r)).max(p.c2 * (x_norm - p.r));
        Ok(f + p.h * (n - 1.0) / x_norm)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRadius {
    pub radius: f64,
    /// Negative discriminant: the barrier vanishes within one step.
    pub extinct: bool,
    /// `h / c1 > R^2 / (N + 1)`: outside the window where the barrier is proved.
    pub outside_window: bool,
}

/// Post-step inner Wulff radius
/// `(R - (h/c1) g + sqrt((R - (h/c1) g)^2 - 4 (h/c1)(N - 1))) / 2`.
pub fn wulff_step_radius(r: f64, p: &OracleParams) -> Result<StepRadius> {
    if !(r >= 0.0) || !(p.h > 0.0) || !(p.c1 > 0.0) || p.n < 2 {
        return Err(FlowError::input("invalid Wulff step parameters"));
    }
    let n = p.n as f64;
    let s = p.h / p.c1;
    let a = r - s * p.gmax;
    let disc = a * a - 4.0 * s * (n - 1.0);
    let outside_window = s > r * r / (n + 1.0);
    if disc < 0.0 || a <= 0.0 {
        return Ok(StepRadius { radius: 0.0, extinct: true, outside_window });
    }
    Ok(StepRadius { radius: 0.5 * (a + disc.sqrt()), extinct: false, outside_window })
}

/// Radii after each of `steps` iterations of [`wulff_step_radius`], starting with `r0`;
/// entries after extinction are zero.
pub fn wulff_recursion(r0: f64, steps: usize, p: &OracleParams) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(r0);
    let mut r = r0;
    for _ in 0..steps {
        if r > 0.0 {
            let s = wulff_step_radius(r, p)?;
            r = s.radius;
        }
        out.push(r);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LawValue {
    pub radius: f64,
    pub extinct: bool,
}

/// Radius of the Wulff shape moving by `R' = -((N - 1)/R + c)` from `r0`.
pub fn wulff_radius_law(r0: f64, t: f64, n: usize, c: f64) -> Result<LawValue> {
    if !(r0 > 0.0) || !(t >= 0.0) || n < 2 {
        return Err(FlowError::input("invalid radius-law parameters"));
    }
    let k = n as f64 - 1.0;
    if c == 0.0 {
        let s = r0 * r0 - 2.0 * k * t;
        return Ok(if s <= 0.0 { LawValue { radius: 0.0, extinct: true } } else { LawValue { radius: s.sqrt(), extinct: false } });
    }
    let rate0 = k + c * r0;
    if rate0 == 0.0 {
        return Ok(LawValue { radius: r0, extinct: false });
    }
    // time to go from r0 to r: int_r^r0 s / (k + c s) ds
    let elapsed = |r: f64| (r0 - r) / c - k / (c * c) * (rate0 / (k + c * r)).ln();
    if rate0 > 0.0 {
        let t_ext = elapsed(0.0);
        if t >= t_ext {
            return Ok(LawValue { radius: 0.0, extinct: true });
        }
        Ok(LawValue { radius: bisect(|r| elapsed(r) - t, 0.0, r0), extinct: false })
    } else {
        // growing; the radius tends to infinity but is finite at every t
        let mut hi = 2.0 * r0;
        while elapsed(hi) < t {
            hi *= 2.0;
        }
        Ok(LawValue { radius: bisect(|r| elapsed(r) - t, r0, hi), extinct: false })
    }
}

// root of a monotone function between a and b
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Guaranteed separation after `k` steps:
/// `(delta + c/L)(1 - beta L h)^k - c/L`, and `delta - c beta k h` at `L = 0`.
pub fn comparison_lower_bound(delta: f64, k: u32, beta: f64, l: f64, h: f64, c: f64) -> Result<f64> {
    if !(beta >= 0.0 && l >= 0.0 && h > 0.0) {
        return Err(FlowError::input("comparison bound needs beta, L >= 0 and h > 0"));
    }
    let x = beta * l * h;
    if x >= 1.0 {
        return Err(FlowError::input("comparison bound needs beta L h < 1"));
    }
    if l == 0.0 {
        return Ok(delta - c * beta * k as f64 * h);
    }
    // (1 - x)^k written to stay accurate as L -> 0
    let log_factor = k as f64 * (-x).ln_1p();
    Ok(delta * log_factor.exp() + c / l * log_factor.exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wulff(r: f64, h: f64) -> OracleParams {
        OracleParams { r, h, ..OracleParams::default() }
    }

    #[test]
    fn closed_form_examples() {
        let p = wulff(0.5, 0.004);
        let plateau = resolvent_closed_form(0.0, &p).unwrap();
        let expected = 4.0 / 3f64.sqrt() * 0.004f64.sqrt() - 0.5;
        assert!((plateau - expected).abs() < 1e-15);
        assert!((plateau + 0.353941).abs() < 5e-7);
        assert!((resolvent_closed_form(0.5, &p).unwrap() - 0.008).abs() < 1e-15);
        // resolvent tends to the identity as h -> 0
        for x in [0.1, 0.3, 0.7] {
            let v = resolvent_closed_form(x, &wulff(0.5, 1e-12)).unwrap();
            assert!((v - (x - 0.5)).abs() < 1e-10);
        }
        assert!(matches!(resolvent_closed_form(0.1, &wulff(0.1, 0.004)), Err(FlowError::Domain(_))));
    }

    #[test]
    fn closed_form_two_slopes() {
        let p = OracleParams { c1: 0.5, c2: 2.0, ..wulff(0.5, 0.004) };
        let x = 0.8;
        let v = resolvent_closed_form(x, &p).unwrap();
        assert!((v - (2.0 * 0.3 + 0.004 / 0.8)).abs() < 1e-15);
        let v = resolvent_closed_form(0.3, &p).unwrap();
        assert!((v - (0.5 * -0.2 + 0.004 / 0.3)).abs() < 1e-15);
    }

    #[test]
    fn step_radius_examples() {
        let s = wulff_step_radius(0.5, &wulff(0.5, 0.004)).unwrap();
        assert!((s.radius - (0.5 + 0.234f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((s.radius - 0.491868).abs() < 5e-7);
        assert!(!s.extinct);
        let s = wulff_step_radius(0.5, &wulff(0.5, 1e-14)).unwrap();
        assert!((s.radius - 0.5).abs() < 1e-12);
        let s = wulff_step_radius(0.1, &wulff(0.1, 0.004)).unwrap();
        assert!(s.extinct && s.radius == 0.0 && s.outside_window);
    }

    #[test]
    fn step_radius_zero_level_of_closed_form() {
        // the outer root of the shifted closed form is the new radius
        let p = OracleParams { gmax: 1.5, ..wulff(0.4, 0.003) };
        let r = wulff_step_radius(0.4, &p).unwrap().radius;
        let u = resolvent_closed_form(r, &p).unwrap() + p.gmax * p.h;
        assert!(u.abs() < 1e-14, "{u}");
    }

    #[test]
    fn law_examples() {
        let v = wulff_radius_law(0.3, 0.04, 2, 0.0).unwrap();
        assert!((v.radius - 0.1).abs() < 1e-14);
        let v = wulff_radius_law(0.5, 0.05, 3, 0.0).unwrap();
        assert!((v.radius - 0.05f64.sqrt()).abs() < 1e-14);
        assert!((v.radius - 0.223607).abs() < 5e-7);
        for t in [0.0, 0.1, 1.0, 10.0] {
            let v = wulff_radius_law(0.4, t, 2, -1.0 / 0.4).unwrap();
            assert_eq!(v.radius, 0.4);
        }
        assert!(wulff_radius_law(0.3, 0.05, 2, 0.0).unwrap().extinct);
    }

    #[test]
    fn law_solves_the_ode() {
        for (c, r0) in [(1.5, 0.3), (-1.0, 0.3), (-5.0, 0.3), (0.7, 0.5)] {
            let rhs = |r: f64| -(1.0 / r + c);
            // classical RK4 reference
            let (mut r, mut t) = (r0, 0.0);
            let dt = 1e-5;
            while t < 0.02 - 1e-12 {
                let k1 = rhs(r);
                let k2 = rhs(r + 0.5 * dt * k1);
                let k3 = rhs(r + 0.5 * dt * k2);
                let k4 = rhs(r + dt * k3);
                r += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                t += dt;
            }
            let v = wulff_radius_law(r0, 0.02, 2, c).unwrap();
            assert!((v.radius - r).abs() < 1e-10, "{c}: {} vs {r}", v.radius);
        }
    }

    #[test]
    fn recursion_tracks_the_law() {
        for r0 in [0.3, 0.5] {
            let t_ext = r0 * r0 / 2.0;
            for h in [4e-3, 2e-3, 1e-3] {
                let p = wulff(r0, h);
                let steps = (0.8 * t_ext / h).floor() as usize;
                let radii = wulff_recursion(r0, steps, &p).unwrap();
                for (k, r) in radii.iter().enumerate() {
                    let law = wulff_radius_law(r0, k as f64 * h, 2, 0.0).unwrap().radius;
                    assert!((r - law).abs() <= 3.0 * h / law, "r0 {r0} h {h} k {k}: {r} vs {law}");
                }
            }
        }
    }

    #[test]
    fn comparison_examples() {
        for k in [0, 1, 10, 100] {
            assert_eq!(comparison_lower_bound(0.3, k, 1.0, 0.0, 0.01, 0.0).unwrap(), 0.3);
        }
        let v = comparison_lower_bound(0.2, 50, 1.0, 1.0, 0.01, 0.0).unwrap();
        assert!((v - 0.2 * 0.99f64.powi(50)).abs() < 1e-15);
        assert!((v - 0.1210012).abs() < 1e-7);
        let v = comparison_lower_bound(0.2, 10, 1.0, 0.0, 0.01, 0.05).unwrap();
        assert!((v - 0.195).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn comparison_bound_monotone_and_continuous(
            delta in 0.0f64..1.0, beta in 0.0f64..2.0, l in 0.0f64..5.0, c in 0.0f64..1.0, k in 0u32..200,
        ) {
            let h = 0.01;
            let a = comparison_lower_bound(delta, k, beta, l, h, c).unwrap();
            let b = comparison_lower_bound(delta, k + 1, beta, l, h, c).unwrap();
            prop_assert!(b <= a + 1e-15);
            let near = comparison_lower_bound(delta, k, beta, 1e-9, h, c).unwrap();
            let at = comparison_lower_bound(delta, k, beta, 0.0, h, c).unwrap();
            prop_assert!((near - at).abs() < 1e-6);
        }

        #[test]
        fn closed_form_outer_branch(x in 0.2f64..2.0, h in 1e-5f64..1e-3) {
            let p = wulff(1.0, h);
            let v = resolvent_closed_form(x, &p).unwrap();
            prop_assert_eq!(v, (x - 1.0) + h / x);
        }
    }
}
