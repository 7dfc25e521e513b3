mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use singular_parabolic::cauchy::{
    holder_norm, holder_norm_plain, solve_scp, verify_maxreg, ForcingClass, GridFunction,
};
use singular_parabolic::evolution::{
    construct, construct_ode, construct_volterra, graded_mesh, verify_singular_bounds, Method,
};
use singular_parabolic::family::{check_hypotheses, geometric_grid};
use singular_parabolic::linops::{c64, op_norm, CMat, CVec};

use common::{diagonal_prototype, noncommuting_prototype};

/// `U(t,s)` of the diagonal prototype in closed form.
fn diagonal_exact(t: f64, s: f64) -> CMat {
    let entry = |b: f64, c: f64| (b * (t - s) + c * (1.0 / s - 1.0 / t)).exp();
    CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
        c64(entry(-1.0, -1.0), 0.0),
        c64(entry(-2.0, -3.0), 0.0),
    ]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn family_difference_vanishes_on_the_diagonal(t in 1e-4f64..1.0) {
        let f = noncommuting_prototype();
        prop_assert_eq!(op_norm(&f.diff(t, t)), 0.0);
    }

    #[test]
    fn family_difference_is_antisymmetric(t in 1e-3f64..1.0, s in 1e-3f64..1.0) {
        let f = noncommuting_prototype();
        let d = f.diff(t, s) + f.diff(s, t);
        prop_assert!(op_norm(&d) <= 1e-12 * (1.0 + op_norm(&f.diff(t, s))));
    }
}

#[test]
fn hypothesis_constants_are_unitarily_invariant() {
    let fam = noncommuting_prototype();
    let th: f64 = 0.7;
    let mut q = CMat::identity(4, 4);
    q[(0, 0)] = c64(th.cos(), 0.0);
    q[(0, 2)] = c64(-th.sin(), 0.0);
    q[(2, 0)] = c64(th.sin(), 0.0);
    q[(2, 2)] = c64(th.cos(), 0.0);
    q[(3, 3)] = c64(0.0, 1.0);
    let grid = geometric_grid(1.0, 0.8, 1e-3);
    let a = check_hypotheses(&fam, 1.5, &grid, 50).unwrap();
    let b = check_hypotheses(&fam.conjugated(&q), 1.5, &grid, 50).unwrap();
    assert!((a.c1_est - b.c1_est).abs() <= 1e-9 * a.c1_est);
    assert!((a.c2_est - b.c2_est).abs() <= 1e-7 * a.c2_est);
    assert_eq!(a.pass, b.pass);
}

#[test]
fn every_method_matches_the_commuting_closed_form() {
    let fam = diagonal_prototype();
    let mesh = graded_mesh(1e-2, 1.0, 16).unwrap();
    for method in [Method::Ode, Method::Volterra, Method::Fixedpoint] {
        let g = construct(&fam, &mesh, method).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..mesh.len() {
            for j in 0..=i {
                let got = g.block(i, j).unwrap();
                worst = worst.max(op_norm(&(got - diagonal_exact(mesh[i], mesh[j]))));
            }
        }
        assert!(worst <= 1e-6, "{method:?}: {worst:e}");
    }
}

#[test]
fn cocycle_and_agreement_on_noncommuting_family() {
    let fam = noncommuting_prototype();
    let mesh = graded_mesh(1e-3, 1.0, 24).unwrap();
    let v = construct_volterra(&fam, &mesh).unwrap();
    let o = construct_ode(&fam, &mesh, 1e-10).unwrap();
    assert!(v.cocycle_defect() <= 1e-8, "{:e}", v.cocycle_defect());
    assert!(o.cocycle_defect() <= 1e-6, "{:e}", o.cocycle_defect());
    assert!(v.max_difference(&o) <= 1e-5, "{:e}", v.max_difference(&o));
}

#[test]
fn shifted_grid_matches_shifted_family() {
    let fam = noncommuting_prototype();
    let mesh = graded_mesh(1e-2, 1.0, 12).unwrap();
    let g = construct_volterra(&fam, &mesh).unwrap();
    let direct = construct_volterra(&fam.shifted(-0.7), &mesh).unwrap();
    assert!(g.shifted(-0.7).max_difference(&direct) <= 1e-7);
}

#[test]
fn evolution_operator_respects_pointwise_bound() {
    for fam in [diagonal_prototype(), noncommuting_prototype()] {
        let mesh = graded_mesh(1e-3, 1.0, 24).unwrap();
        let g = construct_volterra(&fam, &mesh).unwrap();
        let rep = verify_singular_bounds(&g, 1.5).unwrap();
        assert_eq!(rep.bound_violations, 0);
        assert!(rep.pass, "{:?}", rep.decades);
        assert!(rep.decay_ratio < 1e-6);
    }
}

fn sine_forcing(mesh: &[f64], w: f64) -> GridFunction {
    GridFunction::from_fn(mesh, |t| {
        CVec::from_iterator(4, (0..4).map(|k| c64((w * t + k as f64).sin() - (k as f64).sin(), 0.0)))
    })
    .unwrap()
}

#[test]
fn scp_solution_is_linear_in_the_forcing() {
    let fam = noncommuting_prototype();
    let mesh = graded_mesh(1e-3, 1.0, 20).unwrap();
    let g = construct_volterra(&fam, &mesh).unwrap();
    let f1 = sine_forcing(&mesh, 2.0);
    let f2 = GridFunction::from_fn(&mesh, |t| CVec::from_element(4, c64(t.sqrt(), -t))).unwrap();
    let combo = f1.combine(2.0, &f2, -0.5).unwrap();
    let u = solve_scp(&fam, &g, &combo).unwrap();
    let want = solve_scp(&fam, &g, &f1).unwrap().combine(2.0, &solve_scp(&fam, &g, &f2).unwrap(), -0.5).unwrap();
    let diff = u.combine(1.0, &want, -1.0).unwrap().sup_norm();
    assert!(diff <= 1e-12 * (1.0 + want.sup_norm()), "{diff:e}");
}

#[test]
fn holder_seminorm_grows_under_refinement() {
    // every coarse point is a fine point, so the fine sup runs over more pairs
    let f = |t: f64| CVec::from_element(2, c64((3.0 * t).sin() + t.powf(0.7), 0.0));
    for alpha in [0.3, 0.5, 0.8] {
        let coarse = GridFunction::from_fn(&graded_mesh(1e-3, 1.0, 16).unwrap(), f).unwrap();
        let fine = GridFunction::from_fn(&graded_mesh(1e-3, 1.0, 32).unwrap(), f).unwrap();
        let (c, d) = (holder_norm_plain(&coarse, alpha).unwrap(), holder_norm_plain(&fine, alpha).unwrap());
        assert!(d.seminorm >= c.seminorm * (1.0 - 1e-12));
        let (c, d) = (holder_norm(&coarse, alpha, 0.0).unwrap(), holder_norm(&fine, alpha, 0.0).unwrap());
        assert!(d.seminorm >= c.seminorm * (1.0 - 1e-12));
    }
}

#[test]
fn equation_residual_shrinks_under_refinement() {
    let fam = diagonal_prototype();
    let res: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&n| {
            let mesh = graded_mesh(1e-2, 1.0, n).unwrap();
            let g = construct_volterra(&fam, &mesh).unwrap();
            let f = GridFunction::from_fn(&mesh, |t| CVec::from_element(2, c64((PI * t).sin(), 0.0))).unwrap();
            verify_maxreg(&fam, &g, &f, 0.5, 1.5, ForcingClass::VanishingAtOrigin).unwrap().residual
        })
        .collect();
    assert!(res[0] / res[1] >= 1.5 && res[1] / res[2] >= 1.5, "{res:?}");
}

#[test]
fn vanishing_forcing_gives_linear_origin_growth() {
    let fam = noncommuting_prototype();
    let mesh = graded_mesh(1e-3, 1.0, 32).unwrap();
    let g = construct_volterra(&fam, &mesh).unwrap();
    let rep = verify_maxreg(&fam, &g, &sine_forcing(&mesh, 2.0), 0.5, 1.5, ForcingClass::VanishingAtOrigin).unwrap();
    let e = rep.origin_exponent.unwrap();
    assert!((e - 1.0).abs() <= 0.1, "{e}");
    assert!(rep.vanishes_at_origin && rep.pass);
}
