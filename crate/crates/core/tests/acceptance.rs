//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use singular_parabolic::cauchy::{verify_maxreg_with, ForcingClass, ScpSolver};
use singular_parabolic::cli::random_forcing;
use singular_parabolic::evolution::{
    construct_fixedpoint_grid, construct_ode, construct_volterra, counterexample_scan, graded_mesh,
    verify_singular_bounds, EvolutionGrid, FixedPointConfig,
};
use singular_parabolic::family::{check_hypotheses, geometric_grid, SingularFamily};
use singular_parabolic::linops::{c64, CVec, DenseOperator};
use singular_parabolic::semigroup::{
    exp_semigroup, frac_power_inv, semigroup, verify_integral_identity, ContourSpec, FractionalRule,
};
use singular_parabolic::wedge::{
    lift_dirichlet, lift_neumann, residual_study, rhs_modes, solve_wedge, BoundaryData, WedgeProblem,
};

use common::{diagonal_prototype, noncommuting_prototype, random_suite, rel_err, scalar_family};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

const SUITE_SEED: u64 = 20_240_601;
const SUITE_SIZE: usize = 50;

fn semigroup_oracle() -> Outcome {
    let suite = random_suite(SUITE_SEED, SUITE_SIZE);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let times: Vec<Vec<f64>> = suite
        .iter()
        .map(|_| {
            let mut ts = vec![1e-2, 10.0];
            ts.extend((0..3).map(|_| 10f64.powf(rng.gen_range(-2.0..1.0))));
            ts
        })
        .collect();
    let worst = suite
        .par_iter()
        .zip(&times)
        .map(|(s, ts)| {
            ts.iter()
                .map(|&t| rel_err(semigroup(&s.a, t).unwrap().matrix(), &s.exp(t)))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    outcome(worst <= 1e-8, format!("max relative error {worst:.2e} over {} matrices", suite.len()))
}

fn semigroup_law_and_contours() -> Outcome {
    let suite = random_suite(SUITE_SEED, SUITE_SIZE);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs: Vec<(f64, f64)> =
        suite.iter().map(|_| (rng.gen_range(0.01..5.0), rng.gen_range(0.01..5.0))).collect();
    let (law, contour) = suite
        .par_iter()
        .zip(&pairs)
        .map(|(smp, &(s, t))| {
            let es = semigroup(&smp.a, s).unwrap();
            let et = semigroup(&smp.a, t).unwrap();
            let est = semigroup(&smp.a, s + t).unwrap();
            let law = rel_err(&(es.matrix() * et.matrix()), est.matrix());
            let base = ContourSpec::default();
            let mut contour: f64 = 0.0;
            for spec in [
                base.clone().with_eta(0.6 * std::f64::consts::PI),
                base.clone().refined(),
                base.clone().with_eta(0.6 * std::f64::consts::PI).refined(),
            ] {
                let other = exp_semigroup(&smp.a, t, &spec).unwrap();
                contour = contour.max(rel_err(other.matrix(), et.matrix()));
            }
            (law, contour)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    outcome(
        law <= 1e-8 && contour <= 1e-8,
        format!("semigroup law defect {law:.2e}, contour variation {contour:.2e}"),
    )
}

fn fractional_powers() -> Outcome {
    let suite = random_suite(SUITE_SEED, SUITE_SIZE);
    let rule = FractionalRule::default();
    let (inv_err, law_err) = suite
        .par_iter()
        .map(|s| {
            let one = frac_power_inv(&s.a, 1.0, &rule).unwrap();
            let minus_inv = -s.a.matrix().clone().try_inverse().unwrap();
            let inv_err = rel_err(one.matrix(), &minus_inv);
            let mut law: f64 = 0.0;
            for (r1, r2) in [(0.3, 0.6), (0.5, 0.5), (0.25, 1.5), (0.9, 0.9)] {
                let a = frac_power_inv(&s.a, r1, &rule).unwrap();
                let b = frac_power_inv(&s.a, r2, &rule).unwrap();
                let ab = frac_power_inv(&s.a, r1 + r2, &rule).unwrap();
                law = law.max(rel_err(&(a.matrix() * b.matrix()), ab.matrix()));
            }
            (inv_err, law)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    let scalar = frac_power_inv(&DenseOperator::diag(&[-2.0]).unwrap(), 1.5, &rule).unwrap();
    let scalar_err = (scalar.matrix()[(0, 0)].re - 2f64.powf(-1.5)).abs();
    outcome(
        inv_err <= 1e-9 && law_err <= 1e-8 && scalar_err <= 1e-9,
        format!("rho=1 vs -A^-1 {inv_err:.2e}, power law {law_err:.2e}, scalar (-2)^-1.5 {scalar_err:.2e}"),
    )
}

fn integral_identity() -> Outcome {
    let suite = random_suite(SUITE_SEED, SUITE_SIZE);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<CVec> = suite
        .iter()
        .map(|s| {
            let x = CVec::from_fn(s.a.dim(), |_, _| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            x.normalize()
        })
        .collect();
    let worst = suite
        .par_iter()
        .zip(&xs)
        .map(|(s, x)| {
            [0.3, 1.0]
                .iter()
                .map(|&t| verify_integral_identity(&s.a, t, x).unwrap())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    outcome(worst <= 1e-8, format!("max identity residual {worst:.2e}"))
}

fn closed_form_error(grid: &EvolutionGrid) -> f64 {
    let m = grid.mesh();
    let mut worst: f64 = 0.0;
    for i in 0..m.len() {
        for j in 0..i {
            let exact = (-(1.0 / m[j] - 1.0 / m[i])).exp();
            worst = worst.max((grid.block(i, j).unwrap()[(0, 0)] - c64(exact, 0.0)).norm());
        }
    }
    worst
}

fn evolution_operators() -> Outcome {
    let mesh = graded_mesh(1e-2, 1.0, 16).unwrap();
    let fam = scalar_family();
    let ode = construct_ode(&fam, &mesh, 1e-10).unwrap();
    let vol = construct_volterra(&fam, &mesh).unwrap();
    let fp = construct_fixedpoint_grid(&fam, &mesh, &FixedPointConfig::default()).unwrap();
    let errs = [closed_form_error(&ode), closed_form_error(&vol), closed_form_error(&fp)];
    let closed = errs.iter().copied().fold(0.0, f64::max);

    let nc = noncommuting_prototype();
    let nmesh = graded_mesh(1e-3, 1.0, 32).unwrap();
    let nc_ode = construct_ode(&nc, &nmesh, 1e-10).unwrap();
    let nc_vol = construct_volterra(&nc, &nmesh).unwrap();
    let agreement = nc_vol.max_difference(&nc_ode);
    let cocycle_vol = vol.cocycle_defect().max(nc_vol.cocycle_defect());
    let cocycle_ode = ode.cocycle_defect().max(nc_ode.cocycle_defect());
    outcome(
        closed <= 1e-5 && cocycle_vol <= 1e-6 && cocycle_ode <= 1e-8 && agreement <= 1e-5,
        format!(
            "scalar closed form ode/volterra/fixedpoint {:.1e}/{:.1e}/{:.1e}, cocycle volterra {cocycle_vol:.1e} ode {cocycle_ode:.1e}, 4x4 agreement {agreement:.1e}",
            errs[0], errs[1], errs[2]
        ),
    )
}

fn singular_bounds() -> Outcome {
    let mesh = graded_mesh(1e-3, 1.0, 40).unwrap();
    let mut details = vec![];
    let mut pass = true;
    for (name, fam) in [("diagonal", diagonal_prototype()), ("noncommuting", noncommuting_prototype())] {
        let grid = construct_volterra(&fam, &mesh).unwrap();
        let rep = verify_singular_bounds(&grid, 1.5).unwrap();
        let ok = rep.partial_decade_change < 0.25 && rep.full_decade_change < 0.25 && rep.decay_ratio < 1e-6;
        pass &= ok;
        details.push(format!(
            "{name}: decade change {:.3}/{:.3}, decay ratio {:.1e}",
            rep.partial_decade_change, rep.full_decade_change, rep.decay_ratio
        ));
    }
    outcome(pass, details.join("; "))
}

fn counterexample() -> Outcome {
    let eigs: Vec<f64> = (1..=1024).map(|k| -(k as f64)).collect();
    let taus: Vec<f64> = (0..=8).map(|k| 10f64.powf(-1.0 - 0.25 * k as f64)).collect();
    let tab = counterexample_scan(&eigs, 1.0, 1.0, &taus).unwrap();
    // independent evaluation at the two end points
    let direct = |tau: f64| {
        eigs.iter()
            .map(|&l| (1.0 - tau) * (l.abs() / tau) * (tau / 1.0f64).powf(l.abs()))
            .fold(0.0, f64::max)
    };
    let growth = direct(1e-3) / direct(1e-1);
    let envelope = |tau: f64| (1.0 - tau) / (tau * (1.0 / tau).ln());
    let mismatch = [1e-1, 1e-3]
        .iter()
        .map(|&tau| {
            let r = direct(tau) / envelope(tau);
            r.max(1.0 / r)
        })
        .fold(0.0, f64::max);
    let consistent = (tab.growth - growth).abs() < 1e-9 * growth;
    outcome(
        consistent && growth >= 5.0 && mismatch <= 2.0,
        format!(
            "growth {growth:.3} from tau = 1e-1 to 1e-3 (table {:.3}), envelope mismatch {mismatch:.2}",
            tab.growth
        ),
    )
}

fn maximal_regularity() -> Outcome {
    let (alpha, rho) = (0.5, 1.5);
    let mut details = vec![];
    let mut pass = true;
    for (name, fam) in [("diagonal", diagonal_prototype()), ("noncommuting", noncommuting_prototype())] {
        let mut ratios: Vec<(ForcingClass, f64)> = vec![];
        let mut reports_ok = true;
        for n in [16, 32, 64] {
            let mesh = graded_mesh(1e-3, 1.0, n).unwrap();
            let grid = construct_volterra(&fam, &mesh).unwrap();
            let solver = ScpSolver::new(&grid).unwrap();
            for class in [ForcingClass::VanishingAtOrigin, ForcingClass::Singular] {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + class as u64);
                for _ in 0..20 {
                    let f = random_forcing(&mesh, fam.dim(), 3, class, &mut rng).unwrap();
                    let rep = verify_maxreg_with(&solver, &fam, &f, alpha, rho, class).unwrap();
                    reports_ok &= rep.pass;
                    ratios.push((class, rep.ratio.unwrap()));
                }
            }
        }
        for class in [ForcingClass::VanishingAtOrigin, ForcingClass::Singular] {
            let rs: Vec<f64> = ratios.iter().filter(|r| r.0 == class).map(|r| r.1).collect();
            let hi = rs.iter().copied().fold(0.0, f64::max);
            let lo = rs.iter().copied().fold(f64::INFINITY, f64::min);
            pass &= hi / lo <= 2.0;
            details.push(format!("{name}/{class:?}: R in [{lo:.3}, {hi:.3}], max/min {:.3}", hi / lo));
        }
        pass &= reports_ok;
        if !reports_ok {
            details.push(format!("{name}: a regularity report failed"));
        }
    }
    outcome(pass, details.join("; "))
}

/// `[(y/t) d_y - d_t] (R_D g + t R_N h)` by central differences with step `d`.
fn fd_rhs(g: num_complex::Complex64, h: num_complex::Complex64, xi: f64, t: f64, y: f64, d: f64) -> num_complex::Complex64 {
    let lift = |t: f64, y: f64| lift_dirichlet(g, xi, t, &[y])[0] + lift_neumann(h, xi, t, &[y])[0] * t;
    let dy = (lift(t, y + d) - lift(t, y - d)) / (2.0 * d);
    let dt = (lift(t + d, y) - lift(t - d, y)) / (2.0 * d);
    dy * (y / t) - dt
}

fn wedge_problem(g: BoundaryData, h: BoundaryData, n_modes: usize, half_period: f64) -> WedgeProblem {
    WedgeProblem {
        half_period,
        n_modes,
        n_y: 8,
        horizon: 1.0,
        t_min: 1e-3,
        n_t: 16,
        n_x: None,
        alpha: 0.5,
        subpanels: 8,
        g,
        h,
    }
}

fn wedge() -> Outcome {
    let (g0, h0) = (0.7, -1.3);
    let p0 = wedge_problem(BoundaryData::Constant { value: g0 }, BoundaryData::Constant { value: h0 }, 0, 1.0);
    let sol = solve_wedge(&WedgeProblem { n_y: 16, ..p0 }).unwrap();
    let mut exact_err: f64 = 0.0;
    for (i, &t) in sol.mesh.iter().enumerate() {
        for &x in &sol.x_grid {
            for (j, &y) in sol.y_grid.iter().enumerate() {
                exact_err = exact_err.max((sol.value(i, x, j).re - (g0 + t * h0 * y)).abs());
            }
        }
    }

    let p = wedge_problem(
        BoundaryData::Fourier { cos: vec![0.5, 1.0], sin: vec![0.0, 0.4] },
        BoundaryData::Cosine { amplitude: 0.3, mode: 1 },
        2,
        8.0,
    );
    let study = residual_study(&p, 2).unwrap();
    let ratio = study.ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let imag = study.rows.iter().map(|r| r.max_imag).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut order = f64::INFINITY;
    for _ in 0..200 {
        let xi = rng.gen_range(0.0..6.0);
        let t = rng.gen_range(0.2..1.5);
        let y = rng.gen_range(0.1..0.9);
        let g = c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let h = c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let exact = rhs_modes(g, h, xi, t, &[y])[0];
        let e1 = (fd_rhs(g, h, xi, t, y, 2e-2) - exact).norm();
        let e2 = (fd_rhs(g, h, xi, t, y, 1e-2) - exact).norm();
        if e2 > 1e-10 {
            order = order.min((e1 / e2).log2());
        }
    }
    outcome(
        exact_err <= 1e-6 && ratio >= 3.5 && imag < 1e-10 && order >= 1.8,
        format!(
            "mode-0 error {exact_err:.1e}, residual ratio {ratio:.2} (n_y {} -> {}), max imag {imag:.1e}, rhs order {order:.2}",
            study.rows[0].n_y, study.rows[1].n_y
        ),
    )
}

fn hypotheses() -> Outcome {
    let fam = diagonal_prototype();
    let grid = geometric_grid(1.0, 0.8, 1e-3);
    let rep = check_hypotheses(&fam, 1.5, &grid, 200).unwrap();
    let (b, c) = ([-1.0f64, -2.0], [-1.0f64, -3.0]);
    let n = grid.len();
    let mut brute: f64 = 0.0;
    for l in 0..n {
        for j in 0..l {
            for i in 0..=j {
                let (tau, s, t) = (grid[i], grid[j], grid[l]);
                for d in 0..2 {
                    let v = c[d].abs() * (1.0 / (s * s) - 1.0 / (t * t)) * tau * tau / (b[d] * tau * tau + c[d]).abs()
                        * t
                        / (t - s);
                    brute = brute.max(v);
                }
            }
        }
    }
    let rel = (rep.c1_est - brute).abs() / brute;
    let power = SingularFamily::power(DenseOperator::diag(&[-1.0, -4.0]).unwrap(), 1.0, 1.0).unwrap();
    let prep = check_hypotheses(&power, 1.5, &grid, 50).unwrap();
    let divergence = prep.failures.iter().any(|f| f.contains("diverges"));
    outcome(
        rep.pass && rel <= 0.1 && !prep.pass && divergence,
        format!(
            "prototype pass={} c1_est {:.4} vs brute force {brute:.4}; beta=1 pass={} ({})",
            rep.pass,
            rep.c1_est,
            prep.pass,
            prep.failures.join("; ")
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("semigroup oracle agreement", semigroup_oracle),
        ("semigroup law and contour invariance", semigroup_law_and_contours),
        ("fractional powers", fractional_powers),
        ("integral identity", integral_identity),
        ("evolution-operator correctness", evolution_operators),
        ("singular bounds", singular_bounds),
        ("beta = 1 counterexample", counterexample),
        ("maximal regularity", maximal_regularity),
        ("wedge solution", wedge),
        ("hypothesis verifier", hypotheses),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (title, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| title.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match panic::catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} [{}] {title}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
