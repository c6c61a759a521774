//! Anisotropic signed distance by front propagation over an integer stencil.
//!
//! Sources are member cell centres plus one interface point on the segment
//! joining each pair of neighbouring member and outsider cells. Shortest paths use edge weight `eta(offset * dx)`, so the result is
//! monotone in the set and Lipschitz along every stencil offset.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Front, Grid, ScalarField, SetMask};
use crate::error::{FlowError, Result};
use crate::norm::Norm;

/// Integer offsets with coprime entries, radius 3 in 2D and 2 in 3D.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub offsets: Vec<Vec<i64>>,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Stencil {
    pub fn for_dim(dim: usize) -> Stencil {
        Stencil::with_radius(dim, if dim == 2 { 3 } else { 2 })
    }

    pub fn with_radius(dim: usize, r: i64) -> Stencil {
        let mut offsets = Vec::new();
        let side = (2 * r + 1) as usize;
        for k in 0..side.pow(dim as u32) {
            let mut o = Vec::with_capacity(dim);
            let mut rem = k;
            for _ in 0..dim {
                o.push((rem % side) as i64 - r);
                rem /= side;
            }
            let g = o.iter().fold(0, |g, &x| gcd(g, x));
            if g == 1 {
                offsets.push(o);
            }
        }
        Stencil { offsets }
    }

    /// Largest relative overestimate of `eta` by the stencil path metric,
    /// measured on a fine direction scan (2D).
    pub fn chordal_error(&self, eta: &Norm) -> f64 {
        assert_eq!(eta.dim(), 2);
        let mut worst = 0.0f64;
        let m = 1 << 14;
        for k in 0..m {
            let t = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            let v = [t.cos(), t.sin()];
            let exact = eta.eval(&v);
            // best two-offset decomposition of v on the adjacent cone
            let mut best = f64::INFINITY;
            for a in &self.offsets {
                for b in &self.offsets {
                    let (a0, a1, b0, b1) = (a[0] as f64, a[1] as f64, b[0] as f64, b[1] as f64);
                    let det = a0 * b1 - a1 * b0;
                    if det.abs() < 1e-12 {
                        continue;
                    }
                    let s = (v[0] * b1 - v[1] * b0) / det;
                    let r = (a0 * v[1] - a1 * v[0]) / det;
                    if s >= -1e-15 && r >= -1e-15 {
                        let cost = s * eta.eval(&[a0, a1]) + r * eta.eval(&[b0, b1]);
                        best = best.min(cost);
                    }
                }
            }
            worst = worst.max(best / exact - 1.0);
        }
        worst
    }
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

struct Propagator {
    // per-axis offset, weight
    moves: Vec<(Vec<i64>, f64)>,
}

impl Propagator {
    fn new(grid: &Grid, eta: &Norm) -> Propagator {
        let dx = grid.spacing();
        let stencil = Stencil::for_dim(grid.dim());
        let moves = stencil
            .offsets
            .into_iter()
            .map(|o| {
                let v: Vec<f64> = o.iter().map(|x| *x as f64 * dx).collect();
                let w = eta.eval(&v);
                (o, w)
            })
            .collect();
        Propagator { moves }
    }

    // shortest-path distance from sources in `seed` (finite entries), capped at `band`
    fn run(&self, grid: &Grid, mut dist: Vec<f64>, band: f64) -> Vec<f64> {
        let n = grid.dim();
        let dims = grid.dims();
        let strides = grid.strides();
        let mut heap: BinaryHeap<Item> = dist
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_finite())
            .map(|(i, d)| Item(*d, i))
            .collect();
        let mut done = vec![false; dist.len()];
        let mut coords = vec![0i64; n];
        while let Some(Item(d, i)) = heap.pop() {
            if done[i] || d > dist[i] {
                continue;
            }
            done[i] = true;
            let mut rem = i;
            for a in (0..n).rev() {
                coords[a] = (rem % dims[a]) as i64;
                rem /= dims[a];
            }
            'moves: for (o, w) in &self.moves {
                let nd = d + w;
                if nd > band {
                    continue;
                }
                let mut j = 0i64;
                for a in 0..n {
                    let c = coords[a] + o[a];
                    if c < 0 || c >= dims[a] as i64 {
                        continue 'moves;
                    }
                    j += c * strides[a] as i64;
                }
                let j = j as usize;
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Item(nd, j));
                }
            }
        }
        dist
    }
}

/// Signed distance `dist(x, E) - dist(x, E^c)` measured with `eta`, clamped to `[-band, band]`.
pub fn signed_distance(front: &Front, eta: &Norm, band: f64) -> Result<ScalarField> {
    let grid = front.grid();
    if eta.dim() != grid.dim() {
        return Err(FlowError::input("distance norm and grid dimensions differ"));
    }
    if !(band > 0.0) {
        return Err(FlowError::input("distance band must be positive"));
    }
    let flags = &front.mask.flags;
    if !flags.iter().any(|f| *f) {
        return ScalarField::new(grid.clone(), vec![band; grid.len()]);
    }
    if flags.iter().all(|f| *f) {
        return ScalarField::new(grid.clone(), vec![-band; grid.len()]);
    }
    let prop = Propagator::new(grid, eta);
    let dx = grid.spacing();
    let mut outside = vec![f64::INFINITY; grid.len()];
    let mut inside = vec![f64::INFINITY; grid.len()];
    for (i, f) in flags.iter().enumerate() {
        if *f {
            outside[i] = 0.0;
        } else {
            inside[i] = 0.0;
        }
    }
    let neighbours = Stencil::with_radius(grid.dim(), 1).offsets;
    let weights: Vec<f64> = neighbours
        .iter()
        .map(|o| eta.eval(&o.iter().map(|k| *k as f64 * dx).collect::<Vec<_>>()))
        .collect();
    for m in 0..grid.len() {
        if !flags[m] {
            continue;
        }
        // every member/outsider pair of neighbouring cells (diagonals included)
        for (off, &w) in neighbours.iter().zip(&weights) {
            let Some(o) = grid.shifted(m, off) else { continue };
            if flags[o] {
                continue;
            }
            let t = front.crossing(m, o);
            outside[o] = outside[o].min((1.0 - t) * w);
            inside[m] = inside[m].min(t * w);
        }
    }
    let outside = prop.run(grid, outside, band);
    let inside = prop.run(grid, inside, band);
    let values = flags
        .iter()
        .enumerate()
        .map(|(i, f)| if *f { -inside[i].min(band) } else { outside[i].min(band) })
        .collect();
    ScalarField::new(grid.clone(), values)
}

/// Signed distance of a mask with interface points at edge midpoints.
pub fn signed_distance_field(mask: &SetMask, eta: &Norm, band: f64) -> Result<ScalarField> {
    signed_distance(&Front::from_mask(mask.clone()), eta, band)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sublevel_mask;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(mask: &SetMask, eta: &Norm) -> Vec<f64> {
        // exact straight-line distance from the same cell sources and offsets, O(n^2)
        let grid = &mask.grid;
        let dx = grid.spacing();
        let mut out_src: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut in_src: Vec<(Vec<f64>, f64)> = Vec::new();
        for i in 0..grid.len() {
            let x = grid.point(i);
            if mask.flags[i] {
                out_src.push((x.clone(), 0.0));
            } else {
                in_src.push((x.clone(), 0.0));
            }
            for a in -1i64..=1 {
                for b in -1i64..=1 {
                    if let Some(j) = grid.shifted(i, &[a, b]) {
                        if mask.flags[i] != mask.flags[j] {
                            let half = 0.5 * eta.eval(&[a as f64 * dx, b as f64 * dx]);
                            if mask.flags[i] {
                                in_src.push((x.clone(), half));
                            } else {
                                out_src.push((x.clone(), half));
                            }
                        }
                    }
                }
            }
        }
        let dist = |x: &[f64], set: &[(Vec<f64>, f64)]| {
            set.iter().map(|(p, d0)| d0 + eta.eval(&[x[0] - p[0], x[1] - p[1]])).fold(f64::INFINITY, f64::min)
        };
        (0..grid.len())
            .map(|i| {
                let x = grid.point(i);
                if mask.flags[i] {
                    -dist(&x, &in_src)
                } else {
                    dist(&x, &out_src)
                }
            })
            .collect()
    }

    #[test]
    fn half_space_is_exact() {
        let g = Grid::cube(2, 64, 1.0).unwrap();
        let m = SetMask::from_fn(&g, |x| x[0] <= 0.0);
        let d = signed_distance_field(&m, &Norm::l2(2), 0.5).unwrap();
        for i in 0..g.len() {
            let x = g.point(i);
            if x[0].abs() < 0.5 - 1e-9 {
                assert!((d.values[i] - x[0]).abs() < 1e-12, "{} {}", d.values[i], x[0]);
            } else {
                assert!(d.values[i].abs() == 0.5 || (d.values[i] - x[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wulff_shape_distance() {
        let g = Grid::cube(2, 64, 1.0).unwrap();
        for psi in [Norm::l1(2), Norm::l2(2), Norm::hexagon()] {
            let dnorm = psi.polar();
            let r = 0.5;
            let level = ScalarField::from_fn(&g, |x| dnorm.eval(x) - r);
            let front = Front::from_level(&level);
            let d = signed_distance(&front, &dnorm, 0.4).unwrap();
            let tol = g.spacing() + 0.015 * 0.4;
            for i in 0..g.len() {
                if level.values[i].abs() < 0.4 - tol {
                    assert!((d.values[i] - level.values[i]).abs() <= tol, "{}", d.values[i] - level.values[i]);
                }
            }
        }
    }

    #[test]
    fn stencil_chordal_error_is_small() {
        let st = Stencil::for_dim(2);
        assert_eq!(st.offsets.len(), 32);
        assert!(st.chordal_error(&Norm::l2(2)) < 0.015);
        assert!(st.chordal_error(&Norm::linf(2)) < 1e-12);
        assert!(st.chordal_error(&Norm::l1(2)) < 1e-12);
    }

    #[test]
    fn matches_brute_force_on_random_masks() {
        let g = Grid::cube(2, 64, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for eta in [Norm::l2(2), Norm::linf(2), Norm::hexagon().polar()] {
            let eps = Stencil::for_dim(2).chordal_error(&eta);
            let mut flags = vec![false; g.len()];
            for _ in 0..15 {
                flags[rng.gen_range(0..g.len())] = true;
            }
            let m = SetMask::new(g.clone(), flags).unwrap();
            let d = signed_distance_field(&m, &eta, 10.0).unwrap();
            let exact = brute_force(&m, &eta);
            for (a, b) in d.values.iter().zip(&exact) {
                assert!(a.abs() >= b.abs() - 1e-12);
                assert!((a - b).abs() <= eps * b.abs() + 1e-12, "{a} {b} {eps}");
            }
        }
    }

    #[test]
    fn empty_and_full() {
        let g = Grid::cube(2, 8, 1.0).unwrap();
        let d = signed_distance_field(&SetMask::empty(&g), &Norm::l2(2), 0.3).unwrap();
        assert!(d.values.iter().all(|v| *v == 0.3));
        let d = signed_distance_field(&SetMask::full(&g), &Norm::l2(2), 0.3).unwrap();
        assert!(d.values.iter().all(|v| *v == -0.3));
    }

    #[test]
    fn sublevel_of_distance_recovers_mask() {
        let g = Grid::cube(2, 32, 1.0).unwrap();
        let m = SetMask::from_fn(&g, |x| (x[0] - 0.1).abs() + x[1].abs() < 0.4);
        let d = signed_distance_field(&m, &Norm::l2(2), 1.0).unwrap();
        assert_eq!(sublevel_mask(&d, 0.0), m);
    }

    #[test]
    fn translation_hausdorff() {
        let g = Grid::cube(2, 64, 1.0).unwrap();
        let a = SetMask::from_fn(&g, |x| x[0] * x[0] + x[1] * x[1] <= 0.16);
        let b = SetMask::from_fn(&g, |x| (x[0] - g.spacing()).powi(2) + x[1] * x[1] <= 0.16);
        let h = crate::geometry::hausdorff_distance(&a, &b, &Norm::l2(2), 0.3).unwrap();
        assert!((h - g.spacing()).abs() < 1e-12, "{h}");
        assert_eq!(crate::geometry::hausdorff_distance(&a, &a, &Norm::l2(2), 0.3).unwrap(), 0.0);
    }

    #[test]
    fn wulff_hausdorff() {
        let g = Grid::cube(2, 64, 1.0).unwrap();
        let psi = Norm::hexagon();
        let dn = psi.polar();
        let a = SetMask::from_fn(&g, |x| dn.eval(x) <= 0.5);
        let b = SetMask::from_fn(&g, |x| dn.eval(x) <= 0.4);
        let h = crate::geometry::hausdorff_distance(&a, &b, &dn, 0.3).unwrap();
        assert!((h - 0.1).abs() <= g.spacing(), "{h}");
    }

    fn random_mask(g: &Grid, seed: u64) -> SetMask {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let discs: Vec<(f64, f64, f64)> =
            (0..3).map(|_| (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(0.05..0.3))).collect();
        SetMask::from_fn(g, |x| discs.iter().any(|(a, b, r)| (x[0] - a).powi(2) + (x[1] - b).powi(2) <= r * r))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn nesting_monotonicity(seed in 0u64..10_000, extra in 0u64..10_000) {
            let g = Grid::cube(2, 40, 1.0).unwrap();
            let e = random_mask(&g, seed);
            let f = e.union(&random_mask(&g, extra));
            for eta in [Norm::l2(2), Norm::hexagon(), Norm::linf(2)] {
                let de = signed_distance_field(&e, &eta, 0.5).unwrap();
                let df = signed_distance_field(&f, &eta, 0.5).unwrap();
                prop_assert!(de.values.iter().zip(&df.values).all(|(a, b)| a >= b));
            }
        }

        #[test]
        fn lipschitz_along_stencil(seed in 0u64..10_000) {
            let g = Grid::cube(2, 40, 1.0).unwrap();
            let m = random_mask(&g, seed);
            let eta = Norm::hexagon();
            let d = signed_distance_field(&m, &eta, 0.5).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..400 {
                let i = rng.gen_range(0..g.len());
                let o = [rng.gen_range(-3i64..=3), rng.gen_range(-3i64..=3)];
                if let Some(j) = g.shifted(i, &o) {
                    let w = eta.eval(&[o[0] as f64 * g.spacing(), o[1] as f64 * g.spacing()]);
                    // one interface crossing may add the two half-edge legs
                    prop_assert!((d.values[i] - d.values[j]).abs() <= w * 2.0 + 1e-12);
                }
            }
        }
    }
}
