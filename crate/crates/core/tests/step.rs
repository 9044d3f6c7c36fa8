use fracflow::grid::{sym_diff_volume, GridSet};
use fracflow::kernel::{KernelModel, KernelParams};
use fracflow::step::{min_band_halfwidth, StepCase, StepProblem};
use proptest::prelude::*;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;

mod common;
use common::{exhaustive_lagrangian, exhaustive_minimum, random_problem};

fn problem(seed: u64, s: f64, n_free: usize) -> (StepProblem, GridSet, Vec<usize>) {
    random_problem(&mut SplitMix64::seed_from_u64(seed), s, n_free)
}

fn subset(a: &GridSet, b: &GridSet) -> bool {
    a.mask().iter().zip(b.mask()).all(|(&x, &y)| !x || y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn cuts_are_nested(seed in any::<u64>(), s in 0.1f64..0.9, l1 in -50.0f64..50.0, l2 in -50.0f64..50.0) {
        let (p, _, _) = problem(seed, s, 16);
        let (lo, hi) = if l1 < l2 { (l1, l2) } else { (l2, l1) };
        prop_assert!(subset(&p.solve_cut(lo).unwrap(), &p.solve_cut(hi).unwrap()));
    }

    #[test]
    fn step_beats_identity_and_stores_energy(seed in any::<u64>(), s in 0.1f64..0.9) {
        let (p, e, _) = problem(seed, s, 14);
        let r = p.step().unwrap();
        let again = p.energy(&r.f_next).unwrap();
        prop_assert_eq!(again, r.energy);
        let stay = p.energy(&e).unwrap();
        prop_assert!(r.energy.total() <= stay.total() * (1.0 + 1e-12));
        prop_assert!(r.energy.perimeter + r.energy.dissipation + r.energy.penalty
            <= stay.perimeter + stay.penalty + 1e-12 * stay.total());
        prop_assert!(r.gap >= 0.0);
        if matches!(r.case, StepCase::UpperMultiplier | StepCase::LowerMultiplier | StepCase::ExactVolume) {
            prop_assert_eq!(r.gap, 0.0);
        }
    }

    #[test]
    fn gap_free_steps_are_global_minima(seed in any::<u64>(), s in prop::sample::select(vec![0.3, 0.7])) {
        let (p, e, cells) = problem(seed, s, 12);
        let r = p.step().unwrap();
        prop_assume!(r.gap == 0.0);
        prop_assert_eq!(r.energy.total().to_bits(), exhaustive_minimum(&p, &e, &cells).to_bits());
    }
}

#[test]
fn cut_matches_exhaustive_lagrangian() {
    let mut rng = SplitMix64::seed_from_u64(5);
    for s in [0.3, 0.7] {
        for lambda in [-20.0, 0.0, 7.5, 40.0] {
            let (p, e, cells) = random_problem(&mut rng, s, 20);
            let f = p.solve_cut(lambda).unwrap();
            let ef = p.energy(&f).unwrap();
            let got = ef.perimeter + ef.dissipation - lambda * f.volume();
            let want = exhaustive_lagrangian(&p, &e, &cells, lambda);
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn extreme_multipliers_fill_or_empty_the_band() {
    let (p, e, cells) = problem(3, 0.5, 18);
    let full = p.solve_cut(1e9).unwrap();
    let empty = p.solve_cut(-1e9).unwrap();
    for &c in &cells {
        assert!(full.mask()[c]);
        assert!(!empty.mask()[c]);
    }
    for k in 0..e.len() {
        if !cells.contains(&k) {
            assert_eq!(full.mask()[k], e.mask()[k]);
            assert_eq!(empty.mask()[k], e.mask()[k]);
        }
    }
}

#[test]
fn penalty_slope_and_band() {
    let (s, h) = (0.5, 1e-3);
    let n = 40;
    let a = 0.05;
    let g = GridSet::disk(n, n, a, [0.0, 0.0], 0.6).unwrap();
    let k = KernelModel::new(KernelParams::for_window(s, a, n, n)).unwrap();
    let p = StepProblem::new(g.clone(), k.clone(), h, g.volume(), 3.0).unwrap();
    assert_eq!(p.kappa, h.powf(-s / (1.0 + s)));
    assert!(p.band_halfwidth >= 2.0 * 3.0 * h.powf(1.0 / (1.0 + s)));
    assert_eq!(min_band_halfwidth(3.0, h, s), p.band_halfwidth);
    assert!(p.clone().with_band_halfwidth(0.5 * p.band_halfwidth).is_err());
}

#[test]
fn upper_multiplier_case_uses_kappa() {
    let n = 32;
    let a = 0.0625;
    let g = GridSet::disk(n, n, a, [0.0, 0.0], 0.6).unwrap();
    let k = KernelModel::new(KernelParams::for_window(0.5, a, n, n)).unwrap();
    let p = StepProblem::new(g.clone(), k, 0.01, 10.0 * g.volume(), 3.0).unwrap();
    let r = p.step().unwrap();
    assert_eq!(r.case, StepCase::UpperMultiplier);
    assert_eq!(r.gap, 0.0);
    assert_eq!(r.lambda_star, p.kappa);
    assert_eq!(p.residual_multiplier(&r), p.kappa);
}

fn ball_step(shift: usize) -> (f64, f64, f64, StepCase) {
    let (n, a, s) = (96, 1.0 / 24.0, 0.5);
    let c = [shift as f64 * a, 0.0];
    let g = GridSet::disk(n, n, a, c, 1.0).unwrap();
    let k = KernelModel::new(KernelParams::for_window(s, a, n, n)).unwrap();
    let p = StepProblem::new(g.clone(), k.clone(), 2f64.powi(-10), g.volume(), 6.0).unwrap();
    let r = p.step().unwrap();
    let shell = a * 2.0 * std::f64::consts::PI;
    assert!(sym_diff_volume(&g, &r.f_next).unwrap() <= shell);
    assert_eq!(r.gap, 0.0);
    let hmax = k
        .cell_curvature(&r.f_next)
        .unwrap()
        .iter()
        .zip(r.f_next.mask())
        .filter(|(_, &b)| b)
        .map(|(v, _)| v.abs())
        .fold(0.0, f64::max);
    (p.lagrange_residual(&r).unwrap(), hmax, r.energy.total(), r.case)
}

#[test]
fn ball_is_stationary() {
    let (res, hmax, _, _) = ball_step(0);
    assert!(res < 0.5 * hmax, "residual {res} vs curvature {hmax}");
}

#[test]
fn residual_is_translation_invariant() {
    let (r0, _, e0, c0) = ball_step(0);
    let (r1, _, e1, c1) = ball_step(3);
    assert_eq!(c0, c1);
    assert!((r0 - r1).abs() <= 1e-9 * r0.max(1.0), "{r0} vs {r1}");
    assert!((e0 - e1).abs() <= 1e-9 * e0);
}

#[test]
fn huge_target_still_certified() {
    let (p0, _, _) = problem(11, 0.5, 10);
    for m in [1e-6, 1e3] {
        let mut p = p0.clone();
        p.m = m;
        p.kappa = 1e6;
        let r = p.step().unwrap();
        assert_eq!(r.gap, 0.0);
        assert!(matches!(r.case, StepCase::UpperMultiplier | StepCase::LowerMultiplier));
    }
}
