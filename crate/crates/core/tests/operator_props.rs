mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use singular_parabolic::linops::{
    c64, certify_sectorial, log_radii, matmul, op_norm, resolvent, spectral_bound, CMat, CVec,
};
use singular_parabolic::semigroup::{
    decay_report, exp_semigroup, frac_power, frac_power_inv, semigroup, ContourSpec, FractionalRule,
};

use common::{random_stable, rel_err, Sample};

fn sample(seed: u64, n: usize) -> Sample {
    random_stable(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn resolvent_identity(seed in 0u64..1000, n in 1usize..7, re in 0.1f64..5.0, im in -5.0f64..5.0, re2 in 0.1f64..5.0) {
        let s = sample(seed, n);
        let (l, m) = (c64(re, im), c64(re2, -im));
        let rl = resolvent(&s.a, l).unwrap();
        let rm = resolvent(&s.a, m).unwrap();
        let lhs = rl.matrix() - rm.matrix();
        let rhs = matmul(rl.matrix(), rm.matrix()) * (m - l);
        prop_assert!(op_norm(&(&lhs - &rhs)) <= 1e-10 * (1.0 + op_norm(&lhs)));
    }

    #[test]
    fn sector_constant_grows_with_angle(seed in 0u64..1000, n in 1usize..6) {
        let s = sample(seed, n);
        let radii = log_radii(1e-2, 1e2, 4);
        let narrow = certify_sectorial(&s.a, 0.55 * PI, &radii, 17).unwrap();
        let wide = certify_sectorial(&s.a, 0.75 * PI, &radii, 17).unwrap();
        prop_assert!(wide.m_est >= narrow.m_est * (1.0 - 1e-12));
        prop_assert!(narrow.pass && wide.pass);
    }

    #[test]
    fn shift_moves_spectral_bound(seed in 0u64..1000, n in 1usize..7, c in -3.0f64..3.0) {
        let s = sample(seed, n);
        let b0 = spectral_bound(&s.a).unwrap();
        let b1 = spectral_bound(&s.a.shifted(c)).unwrap();
        prop_assert!((b1 - b0 - c).abs() <= 1e-9 * (1.0 + b0.abs()));
    }

    #[test]
    fn semigroup_law(seed in 0u64..1000, n in 1usize..7, s in 0.01f64..3.0, t in 0.01f64..3.0) {
        let smp = sample(seed, n);
        let es = semigroup(&smp.a, s).unwrap();
        let et = semigroup(&smp.a, t).unwrap();
        let est = semigroup(&smp.a, s + t).unwrap();
        prop_assert!(rel_err(&matmul(es.matrix(), et.matrix()), est.matrix()) <= 1e-9);
    }

    #[test]
    fn semigroup_matches_eigen_decomposition(seed in 0u64..1000, n in 1usize..9, t in 0.01f64..5.0) {
        let smp = sample(seed, n);
        let got = semigroup(&smp.a, t).unwrap();
        prop_assert!(rel_err(got.matrix(), &smp.exp(t)) <= 1e-9);
    }

    #[test]
    fn contour_angle_does_not_matter(seed in 0u64..1000, n in 1usize..7, t in 0.05f64..2.0) {
        let smp = sample(seed, n);
        let a = exp_semigroup(&smp.a, t, &ContourSpec::default()).unwrap();
        let b = exp_semigroup(&smp.a, t, &ContourSpec::default().with_eta(0.65 * PI).refined()).unwrap();
        prop_assert!(rel_err(a.matrix(), b.matrix()) <= 1e-8);
    }

    #[test]
    fn fractional_power_law(seed in 0u64..1000, n in 1usize..5, a in 0.2f64..0.9, b in 0.2f64..0.9) {
        let smp = sample(seed, n);
        let rule = FractionalRule::default();
        let pa = frac_power_inv(&smp.a, a, &rule).unwrap();
        let pb = frac_power_inv(&smp.a, b, &rule).unwrap();
        let pab = frac_power_inv(&smp.a, a + b, &rule).unwrap();
        prop_assert!(rel_err(&matmul(pa.matrix(), pb.matrix()), pab.matrix()) <= 1e-8);
        let want = smp.apply_fn(|z| (-z).powf(-(a + b)));
        prop_assert!(rel_err(pab.matrix(), &want) <= 1e-8);
    }
}

#[test]
fn zero_time_gives_identity() {
    let smp = sample(3, 5);
    let e = semigroup(&smp.a, 1e-12).unwrap();
    assert!(rel_err(e.matrix(), &CMat::identity(5, 5)) <= 1e-9);
}

#[test]
fn decay_report_passes_for_stable_samples() {
    for seed in 0..10 {
        let smp = sample(seed, 1 + seed as usize % 6);
        let rep = decay_report(&smp.a, 1.0).unwrap();
        assert!(rep.pass, "seed {seed}");
        assert!(rep.omega_est > 0.0 && rep.c_est >= 1.0 - 1e-9);
    }
}

/// `||(-A)^a x|| <= c ||x||^{1-a} ||A x||^a`: the constant fitted on the
/// first half of the samples must already bound the second half up to 50%.
#[test]
fn moment_inequality_constant_is_stable() {
    use rand::Rng;
    let smp = sample(11, 4);
    let alpha = 0.5;
    let pa = frac_power(&smp.a, alpha).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let ratios: Vec<f64> = (0..120)
        .map(|_| {
            let x = CVec::from_fn(4, |_, _| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let ax = smp.a.apply(&x).unwrap().norm();
            (pa.matrix() * &x).norm() / (x.norm().powf(1.0 - alpha) * ax.powf(alpha))
        })
        .collect();
    let fit = ratios[..60].iter().copied().fold(0.0, f64::max);
    let all = ratios.iter().copied().fold(0.0, f64::max);
    assert!(fit > 0.0 && fit.is_finite());
    assert!(all <= 1.5 * fit, "fitted {fit}, overall {all}");
}
