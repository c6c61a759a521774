//! Fixtures shared by the benchmarks in `benches/`.

use crystalflow::{FlowConfig, Front, Grid, Norm, ScalarField};

/// Level function of the square `max |x_i| <= r`.
pub fn square_level(grid: &Grid, r: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x| x[0].abs().max(x[1].abs()) - r)
}

pub fn square_front(grid: &Grid, r: f64) -> Front {
    Front::from_level(&square_level(grid, r))
}

/// 2D flow on `[-1, 1]^2` with the given norms.
pub fn config(phi: Norm, psi: Norm, cells: usize, h: f64) -> FlowConfig {
    FlowConfig::new(phi, psi, Grid::cube(2, cells, 1.0).expect("valid grid"), h, h)
}
