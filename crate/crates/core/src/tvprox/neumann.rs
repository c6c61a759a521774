//! Exact solver for `(a + b L) u = rhs`, `L = grad^T grad` with the
//! forward-difference gradient, diagonalised by the DCT-II along each axis.

use std::sync::Arc;

use rayon::prelude::*;
use rustdct::{DctPlanner, TransformType2And3};

use crate::geometry::Grid;

pub(crate) struct NeumannSolver {
    dims: Vec<usize>,
    strides: Vec<usize>,
    plans: Vec<Arc<dyn TransformType2And3<f64>>>,
    // eigenvalues of L, cell-major
    eig: Vec<f64>,
    // dct3(dct2(x)) = norm * x over all axes
    norm: f64,
}

impl NeumannSolver {
    pub(crate) fn new(grid: &Grid) -> NeumannSolver {
        let dims = grid.dims().to_vec();
        let strides = grid.strides();
        let mut planner = DctPlanner::new();
        let plans: Vec<_> = dims.iter().map(|&n| planner.plan_dct2(n)).collect();
        let dx2 = grid.spacing() * grid.spacing();
        let axis_eig: Vec<Vec<f64>> = dims
            .iter()
            .map(|&n| (0..n).map(|k| (2.0 - 2.0 * (std::f64::consts::PI * k as f64 / n as f64).cos()) / dx2).collect())
            .collect();
        let eig = (0..grid.len())
            .map(|i| (0..dims.len()).map(|a| axis_eig[a][i / strides[a] % dims[a]]).sum())
            .collect();
        let mut norm = 1.0;
        for plan in &plans {
            let mut probe = vec![0.0; plan.len()];
            probe[0] = 1.0;
            plan.process_dct2(&mut probe);
            plan.process_dct3(&mut probe);
            norm *= probe[0];
        }
        NeumannSolver { dims, strides, plans, eig, norm }
    }

    fn transform(&self, data: &mut [f64], forward: bool) {
        let n = self.dims.len();
        for a in 0..n {
            let len = self.dims[a];
            let stride = self.strides[a];
            let plan = &self.plans[a];
            let run = |line: &mut [f64]| {
                if forward {
                    plan.process_dct2(line)
                } else {
                    plan.process_dct3(line)
                }
            };
            if stride == 1 {
                data.par_chunks_mut(len).for_each(run);
                continue;
            }
            // gather each line along axis a into a contiguous buffer
            let block = len * stride;
            data.par_chunks_mut(block).for_each(|slab| {
                let mut line = vec![0.0; len];
                for off in 0..stride {
                    for k in 0..len {
                        line[k] = slab[off + k * stride];
                    }
                    run(&mut line);
                    for k in 0..len {
                        slab[off + k * stride] = line[k];
                    }
                }
            });
        }
    }

    /// Overwrites `rhs` with the solution of `(a + b L) u = rhs`.
    pub(crate) fn solve(&self, a: f64, b: f64, rhs: &mut [f64]) {
        self.transform(rhs, true);
        let norm = self.norm;
        rhs.par_iter_mut().zip(self.eig.par_iter()).for_each(|(v, l)| *v /= norm * (a + b * l));
        self.transform(rhs, false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ScalarField;
    use crate::tvprox::{divergence, gradient};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inverts_the_operator() {
        for grid in [Grid::new(vec![12, 7], 0.2, vec![0.0, 0.0]).unwrap(), Grid::new(vec![5, 6, 4], 0.5, vec![0.0; 3]).unwrap()] {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let u: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (a, b) = (2.5, 0.3);
            let field = ScalarField::new(grid.clone(), u.clone()).unwrap();
            let lu = divergence(&grid, &gradient(&field)).unwrap();
            let mut rhs: Vec<f64> = u.iter().zip(&lu).map(|(x, l)| a * x - b * l).collect();
            NeumannSolver::new(&grid).solve(a, b, &mut rhs);
            for (x, y) in rhs.iter().zip(&u) {
                assert!((x - y).abs() < 1e-11, "{x} {y}");
            }
        }
    }
}
