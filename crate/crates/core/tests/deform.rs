use std::f64::consts::PI;

use fracflow::deform::{
    alexandrov_ratio, classical_limits, curvature_field, curvature_on_deformation,
    mean_curvature_average, mean_curvature_average_with, mode_multiplier, perimeter_representation,
    second_variation, seminorm_direct, seminorm_spectral, Deformation, SEMINORM_LIMIT_CONSTANT,
};
use fracflow::kernel::{KernelModel, KernelParams};
use fracflow::special::ball_perimeter;
use proptest::prelude::*;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;

fn random(seed: u64, k_max: usize) -> Deformation {
    Deformation::random(&mut SplitMix64::seed_from_u64(seed), k_max, 0.05).unwrap()
}

fn cos2(eps: f64) -> Deformation {
    Deformation::mode(2, eps, 0.0, 0.15).unwrap().project_constraints().unwrap()
}

fn ball_curvature(s: f64) -> f64 {
    (2.0 - s) * ball_perimeter(s).unwrap() / (2.0 * PI)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn projection_meets_constraints(seed in any::<u64>(), k_max in 2usize..12) {
        let f = random(seed, k_max);
        prop_assert!((f.area() - PI).abs() <= 1e-10);
        let b = f.barycenter();
        prop_assert!(b[0].hypot(b[1]) <= 1e-10);
        prop_assert!(f.c1_norm() <= 0.05);
    }

    #[test]
    fn direct_and_spectral_seminorms_agree(seed in any::<u64>(), s in prop::sample::select(vec![0.25, 0.5, 0.75, 0.9])) {
        let f = random(seed, 16);
        let d = seminorm_direct(&f, s).unwrap();
        let sp = seminorm_spectral(&f, s).unwrap();
        prop_assert!((d / sp - 1.0).abs() <= 1e-4, "{} vs {}", d, sp);
    }

    #[test]
    fn coercivity_slack_nonnegative(seed in any::<u64>(), s in prop::sample::select(vec![0.25, 0.5, 0.75, 0.9])) {
        let f = random(seed, 8);
        prop_assert!(second_variation(&f, s).unwrap().slack >= -1e-8);
    }

    #[test]
    fn rotation_equivariance(seed in any::<u64>(), c in 0.0f64..(2.0 * PI)) {
        let f = random(seed, 6);
        let g = f.rotated(c);
        let s = 0.5;
        for th in [0.3, 1.7, 4.0] {
            let a = curvature_on_deformation(&f, s, th).unwrap();
            let b = curvature_on_deformation(&g, s, th + c).unwrap();
            prop_assert!((a - b).abs() <= 1e-7 * a.abs());
        }
        let ra = alexandrov_ratio(&f, s).unwrap().ratio;
        let rb = alexandrov_ratio(&g, s).unwrap().ratio;
        prop_assert!((ra / rb - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn text_round_trip(seed in any::<u64>(), k_max in 2usize..20) {
        let f = random(seed, k_max);
        let g = Deformation::parse(&f.to_text(), 0.05).unwrap();
        prop_assert_eq!(f, g);
    }

    #[test]
    fn alexandrov_report_is_sane(seed in any::<u64>()) {
        let f = random(seed, 8);
        let r = alexandrov_ratio(&f, 0.5).unwrap();
        for v in [r.seminorm_sq, r.l2_sq, r.hs_norm_sq, r.curvature_dev_sq, r.ratio, r.scaled_ratio] {
            prop_assert!(v.is_finite() && v >= 0.0);
        }
        prop_assert!(r.curvature_dev_sq > 0.0);
        prop_assert!((r.hs_norm_sq - r.seminorm_sq - r.l2_sq).abs() <= 1e-15 * r.hs_norm_sq);
    }
}

#[test]
fn multipliers_increase_with_k() {
    for s in [0.1, 0.5, 0.9] {
        let mu: Vec<f64> = (1..=16).map(|k| mode_multiplier(k, s).unwrap()).collect();
        assert!(mu.windows(2).all(|w| w[1] > w[0]), "s={s}");
    }
}

#[test]
fn constant_has_zero_seminorm() {
    let f = Deformation::new(vec![0.01], vec![0.0], 0.05).unwrap();
    assert_eq!(seminorm_spectral(&f, 0.5).unwrap(), 0.0);
    assert!(seminorm_direct(&f, 0.5).unwrap().abs() < 1e-14);
}

#[test]
fn translation_mode_has_no_second_variation() {
    let f = Deformation::mode(1, 0.01, -0.004, 0.05).unwrap();
    for s in [0.25, 0.75] {
        assert!(second_variation(&f, s).unwrap().value.abs() < 1e-6);
    }
}

#[test]
fn cos2_second_variation() {
    let f = Deformation::mode(2, 1.0, 0.0, 10.0).unwrap();
    for s in [0.3, 0.6] {
        let want = (mode_multiplier(2, s).unwrap() - mode_multiplier(1, s).unwrap()) * PI;
        assert!((second_variation(&f, s).unwrap().value / want - 1.0).abs() < 1e-12);
    }
}

#[test]
fn projection_examples() {
    let f = cos2(0.02);
    let a0 = f.cos_coeffs()[0];
    assert!((a0 + 0.02f64.powi(2) / 4.0).abs() < 1e-7, "{a0}");
    assert_eq!(f.cos_coeffs()[1], 0.0);
    let z = Deformation::zero().project_constraints().unwrap();
    assert!(z.cos_coeffs().iter().chain(z.sin_coeffs()).all(|&c| c == 0.0));
}

#[test]
fn disk_representation_matches_closed_form() {
    for s in [0.2, 0.5, 0.8] {
        let p = perimeter_representation(&Deformation::zero(), s).unwrap();
        assert!((p / ball_perimeter(s).unwrap() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn representation_is_even() {
    let p = perimeter_representation(&cos2(0.02), 0.5).unwrap();
    let q = perimeter_representation(&cos2(-0.02), 0.5).unwrap();
    assert!((p - q).abs() <= 1e-8, "{}", p - q);
}

#[test]
fn disk_curvature_and_scaling() {
    let s = 0.5;
    let hb = ball_curvature(s);
    let z = Deformation::zero();
    for th in [0.0, 1.0, 2.5] {
        assert!((curvature_on_deformation(&z, s, th).unwrap() / hb - 1.0).abs() < 1e-6);
    }
    assert!((mean_curvature_average(&z, s).unwrap() / hb - 1.0).abs() < 1e-6);
    let r = 1.2;
    let big = Deformation::new(vec![r - 1.0], vec![0.0], 1.0).unwrap();
    let v = curvature_on_deformation(&big, s, 0.4).unwrap();
    assert!((v / (r.powf(-s) * hb) - 1.0).abs() < 1e-6);
}

#[test]
fn mean_curvature_stable_under_refinement() {
    let f = cos2(0.02);
    let a = mean_curvature_average_with(&f, 0.5, 128).unwrap();
    let b = mean_curvature_average_with(&f, 0.5, 256).unwrap();
    assert!((a / b - 1.0).abs() < 1e-6);
    let field = curvature_field(&f, 0.5, 128).unwrap();
    let dev: f64 = field.iter().map(|h| h - a).sum::<f64>() / 128.0;
    assert!(dev.abs() < 1e-10 * a);
}

#[test]
fn limits_for_the_disk() {
    let rows = classical_limits(&Deformation::zero(), &[0.9, 0.95, 0.99]).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].perimeter_error < w[0].perimeter_error);
        assert!(w[1].curvature_error < w[0].curvature_error);
        assert!(w[1].lambda1_error < w[0].lambda1_error);
    }
    assert!((rows[0].perimeter_target - 4.0 * PI).abs() < 1e-12);
}

#[test]
fn seminorm_limit_is_monotone() {
    let f = Deformation::mode(2, 1.0, 0.0, 10.0).unwrap();
    let target = SEMINORM_LIMIT_CONSTANT * f.grad_sq();
    let errs: Vec<f64> = [0.9, 0.99]
        .iter()
        .map(|&s| ((1.0 - s) * seminorm_spectral(&f, s).unwrap() / target - 1.0).abs())
        .collect();
    assert!(errs[1] < errs[0], "{errs:?}");
}

#[test]
fn scaled_ratio_is_stable_near_one() {
    let f = cos2(0.02);
    let a = alexandrov_ratio(&f, 0.9).unwrap().scaled_ratio;
    let b = alexandrov_ratio(&f, 0.99).unwrap().scaled_ratio;
    assert!((a - b).abs() / a.min(b) <= 0.25);
    assert!(alexandrov_ratio(&Deformation::zero(), 0.5).is_err());
}

#[test]
fn grid_curvature_agrees_by_sector() {
    let (s, n) = (0.5, 1024);
    let a = 2.5 / n as f64;
    let f = cos2(0.02);
    let g = f.rasterize(n, n, a).unwrap();
    let k = KernelModel::new(KernelParams::for_window(s, a, n, n)).unwrap();
    let sigma = k.cell_curvature(&g).unwrap();
    let sectors = 16;
    let mut acc = vec![(0.0, 0.0); sectors];
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            for (p, q) in [(i + 1, j), (i, j + 1)] {
                if g.get(i, j) == g.get(p, q) {
                    continue;
                }
                let (c1, c2) = (g.center(i, j), g.center(p, q));
                let th = (0.5 * (c1[1] + c2[1])).atan2(0.5 * (c1[0] + c2[0])).rem_euclid(2.0 * PI);
                let sec = ((th / (2.0 * PI) * sectors as f64) as usize).min(sectors - 1);
                acc[sec].0 += 0.5 * (sigma[g.idx(i, j)] + sigma[g.idx(p, q)]);
                acc[sec].1 += curvature_on_deformation(&f, s, th).unwrap();
            }
        }
    }
    for (grid, exact) in acc {
        assert!((grid / exact - 1.0).abs() < 0.05);
    }
}
