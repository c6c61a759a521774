use crystalflow::atw::{run_flow, FlowConfig, ForcingTerm};
use crystalflow::geometry::{signed_distance_field, sublevel_mask, Stencil};
use crystalflow::levelset::evolve_sublevel;
use crystalflow::{solve_resolvent, Front, Grid, Norm, ResolventProblem, ScalarField, SetMask, SolverParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn squares(grid: &Grid, list: &[([f64; 2], f64)]) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        list.iter().map(|(c, r)| (x[0] - c[0]).abs().max((x[1] - c[1]).abs()) - r).fold(f64::INFINITY, f64::min)
    })
}

fn random_squares(rng: &mut ChaCha8Rng, spread: f64) -> Vec<([f64; 2], f64)> {
    (0..rng.gen_range(1..=3))
        .map(|_| ([rng.gen_range(-spread..spread), rng.gen_range(-spread..spread)], rng.gen_range(0.1..0.25)))
        .collect()
}

fn slope(u: &ScalarField, dist: &Norm) -> f64 {
    let g = &u.grid;
    let dx = g.spacing();
    let mut best = 0.0f64;
    for o in Stencil::for_dim(2).offsets {
        let len = dist.eval(&[o[0] as f64 * dx, o[1] as f64 * dx]);
        for i in 0..g.len() {
            if let Some(j) = g.shifted(i, &o) {
                best = best.max((u.values[j] - u.values[i]) / len);
            }
        }
    }
    best
}

fn random_mask(grid: &Grid, seed: u64) -> SetMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let list = random_squares(&mut rng, 0.4);
    sublevel_mask(&squares(grid, &list), 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn resolvent_keeps_distances_lipschitz(seed in 0u64..10_000, h in 0.002f64..0.02) {
        let grid = Grid::cube(2, 40, 1.0).unwrap();
        let phi = Norm::l1(2);
        let dist = phi.polar();
        let f = signed_distance_field(&random_mask(&grid, seed), &dist, 0.6).unwrap();
        prop_assert!(slope(&f, &dist) <= 1.0 + 1e-12);
        let sol = solve_resolvent(&ResolventProblem { f: &f, h, phi: &phi }, &SolverParams::default()).unwrap();
        prop_assert!(slope(&sol.u, &dist) <= 1.0 + 2.0 * sol.certificate / grid.spacing());
    }

    #[test]
    fn resolvent_commutes_with_constants(seed in 0u64..10_000, c in -2.0f64..2.0) {
        let grid = Grid::cube(2, 32, 1.0).unwrap();
        let phi = Norm::l1(2);
        let f = signed_distance_field(&random_mask(&grid, seed), &phi.polar(), 0.5).unwrap();
        let s = SolverParams::default();
        let a = solve_resolvent(&ResolventProblem { f: &f, h: 0.01, phi: &phi }, &s).unwrap();
        let g = f.map(|v| v + c);
        let b = solve_resolvent(&ResolventProblem { f: &g, h: 0.01, phi: &phi }, &s).unwrap();
        let tau = a.certificate + b.certificate;
        // sublevels coincide away from values within the certified error of the level
        for lam in [-0.1, 0.0, 0.07] {
            for i in 0..grid.len() {
                if (a.u.values[i] - lam).abs() > tau {
                    prop_assert_eq!(a.u.values[i] <= lam, b.u.values[i] <= lam + c);
                }
            }
        }
    }

    #[test]
    fn nested_sets_stay_nested(seed in 0u64..10_000) {
        let cfg = FlowConfig::new(Norm::l1(2), Norm::l1(2), Grid::cube(2, 48, 1.0).unwrap(), 0.004, 0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = random_squares(&mut rng, 0.3);
        let outer: Vec<_> = inner.iter().map(|(c, r)| (*c, r + rng.gen_range(0.0..0.08))).collect();
        let a = run_flow(&Front::from_level(&squares(&cfg.grid, &inner)), &cfg).unwrap();
        let b = run_flow(&Front::from_level(&squares(&cfg.grid, &outer)), &cfg).unwrap();
        for (ma, mb) in a.masks.iter().zip(&b.masks) {
            prop_assert!(ma.is_subset_of(mb));
        }
    }

    #[test]
    fn integer_translations_commute(seed in 0u64..10_000, sx in -4i64..=4, sy in -4i64..=4) {
        let cfg = FlowConfig::new(Norm::l1(2), Norm::l1(2), Grid::cube(2, 48, 1.0).unwrap(), 0.004, 0.016)
            .with_forcing(ForcingTerm::Constant(0.5));
        let dx = cfg.grid.spacing();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let list = random_squares(&mut rng, 0.25);
        let moved: Vec<_> = list.iter().map(|(c, r)| ([c[0] + sx as f64 * dx, c[1] + sy as f64 * dx], *r)).collect();
        let a = run_flow(&Front::from_mask(sublevel_mask(&squares(&cfg.grid, &list), 0.0)), &cfg).unwrap();
        let b = run_flow(&Front::from_mask(sublevel_mask(&squares(&cfg.grid, &moved), 0.0)), &cfg).unwrap();
        for (ma, mb) in a.masks.iter().zip(&b.masks) {
            for i in 0..cfg.grid.len() {
                if let Some(j) = cfg.grid.shifted(i, &[sx, sy]) {
                    prop_assert_eq!(ma.flags[i], mb.flags[j]);
                }
            }
        }
    }

    #[test]
    fn stronger_outward_forcing_gives_larger_sets(seed in 0u64..10_000, g in -3.0f64..3.0, c in 0.1f64..2.0) {
        let base = FlowConfig::new(Norm::l1(2), Norm::l1(2), Grid::cube(2, 48, 1.0).unwrap(), 0.004, 0.016);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e0 = Front::from_level(&squares(&base.grid, &random_squares(&mut rng, 0.25)));
        let a = run_flow(&e0, &base.clone().with_forcing(ForcingTerm::Constant(g))).unwrap();
        let b = run_flow(&e0, &base.with_forcing(ForcingTerm::Constant(g - c))).unwrap();
        for (ma, mb) in a.masks.iter().zip(&b.masks) {
            prop_assert!(ma.is_subset_of(mb));
        }
    }

    #[test]
    fn opposite_forcings_keep_sets_apart(seed in 0u64..10_000, g in 0.0f64..3.0) {
        let base = FlowConfig::new(Norm::l1(2), Norm::l1(2), Grid::cube(2, 48, 1.0).unwrap(), 0.004, 0.016);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gap = rng.gen_range(0.05..0.2);
        let (r1, r2) = (rng.gen_range(0.1..0.25), rng.gen_range(0.1..0.25));
        let y = rng.gen_range(-0.1..0.1);
        let left = squares(&base.grid, &[([-gap / 2.0 - r1, y], r1)]);
        let right = squares(&base.grid, &[([gap / 2.0 + r2, -y], r2)]);
        let a = run_flow(&Front::from_level(&left), &base.clone().with_forcing(ForcingTerm::Constant(-g))).unwrap();
        let b = run_flow(&Front::from_level(&right), &base.with_forcing(ForcingTerm::Constant(g))).unwrap();
        // E grows under -g, F shrinks under g; they stay disjoint
        for (ma, mb) in a.masks.iter().zip(&b.masks) {
            prop_assert!(ma.flags.iter().zip(&mb.flags).all(|(x, y)| !(*x && *y)));
        }
    }

    #[test]
    fn increasing_relabeling_keeps_masks(seed in 0u64..10_000, lam in -0.2f64..0.2, k in 0.2f64..4.0) {
        let cfg = FlowConfig::new(Norm::l1(2), Norm::l1(2), Grid::cube(2, 40, 1.0).unwrap(), 0.004, 0.012);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u0 = squares(&cfg.grid, &random_squares(&mut rng, 0.2));
        let relabel = move |s: f64| if s < lam { k * (s - lam) } else { (s - lam).powi(3) + (s - lam) };
        let a = evolve_sublevel(&u0, lam, &cfg).unwrap();
        let b = evolve_sublevel(&u0.map(relabel), relabel(lam), &cfg).unwrap();
        prop_assert_eq!(a, b);
    }
}
