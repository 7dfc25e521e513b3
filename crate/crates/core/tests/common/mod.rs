#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use singular_parabolic::family::SingularFamily;
use singular_parabolic::linops::{c64, op_norm, CMat, DenseOperator};

/// Real stable matrix `V D V^{-1}` with its eigen-decomposition.
pub struct Sample {
    pub a: DenseOperator,
    pub v: CMat,
    pub v_inv: CMat,
    pub eigs: Vec<Complex64>,
}

impl Sample {
    /// `V f(D) V^{-1}`.
    pub fn apply_fn(&self, f: impl Fn(Complex64) -> Complex64) -> CMat {
        let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            self.eigs.len(),
            self.eigs.iter().map(|&z| f(z)),
        ));
        &self.v * d * &self.v_inv
    }

    pub fn exp(&self, t: f64) -> CMat {
        self.apply_fn(|z| (z * t).exp())
    }
}

/// Eigenvalues `-r e^{+-i phi}` with `r` log-uniform in `[0.2, 20]`, then
/// rescaled so the smallest modulus is exactly 0.2, and `|phi| <= pi/6`,
/// well inside the default contour angle.
/// The fixed slowest mode keeps `||e^{tA}||` of order one up to `t = 10`, so
/// relative errors stay meaningful. Complex pairs enter as real 2x2 rotation
/// blocks. `V = I + 0.4 G / sqrt(n)` with `G` uniform in `[-1, 1]` keeps the
/// basis well conditioned.
pub fn random_stable(rng: &mut impl Rng, n: usize) -> Sample {
    let mut parts: Vec<(f64, Option<f64>)> = vec![];
    let mut k = 0;
    while k < n {
        let r = 10f64.powf(rng.gen_range(0.2f64.log10()..20f64.log10()));
        if k + 1 < n && rng.gen_bool(0.5) {
            parts.push((r, Some(rng.gen_range(0.05..std::f64::consts::FRAC_PI_6))));
            k += 2;
        } else {
            parts.push((r, None));
            k += 1;
        }
    }
    let scale = 0.2 / parts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let mut blocks = DMatrix::<f64>::zeros(n, n);
    let mut eigs = vec![];
    let mut k = 0;
    for (r, phi) in parts {
        let r = r * scale;
        match phi {
            Some(phi) => {
                let (a, b) = (-r * phi.cos(), r * phi.sin());
                blocks[(k, k)] = a;
                blocks[(k + 1, k + 1)] = a;
                blocks[(k, k + 1)] = b;
                blocks[(k + 1, k)] = -b;
                k += 2;
            }
            None => {
                blocks[(k, k)] = -r;
                k += 1;
            }
        }
    }
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let v_real = DMatrix::<f64>::identity(n, n) + g * (0.4 / (n as f64).sqrt());
    let a_real = &v_real * &blocks * v_real.clone().try_inverse().expect("well conditioned");
    // eigenvectors of the block-diagonal part, then mapped through V
    let mut w = CMat::zeros(n, n);
    let mut k = 0;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    while k < n {
        if k + 1 < n && blocks[(k, k + 1)] != 0.0 {
            let (a, b) = (blocks[(k, k)], blocks[(k, k + 1)]);
            eigs.push(c64(a, b));
            eigs.push(c64(a, -b));
            w[(k, k)] = c64(s, 0.0);
            w[(k + 1, k)] = c64(0.0, s);
            w[(k, k + 1)] = c64(s, 0.0);
            w[(k + 1, k + 1)] = c64(0.0, -s);
            k += 2;
        } else {
            eigs.push(c64(blocks[(k, k)], 0.0));
            w[(k, k)] = c64(1.0, 0.0);
            k += 1;
        }
    }
    let v = singular_parabolic::linops::real_to_complex(&v_real) * w;
    let v_inv = v.clone().try_inverse().expect("invertible");
    let a = DenseOperator::from_real(&a_real, format!("random{n}")).expect("square");
    Sample { a, v, v_inv, eigs }
}

/// `count` samples with dimensions cycling through `1..=16`.
pub fn random_suite(seed: u64, count: usize) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| random_stable(&mut rng, 1 + i % 16)).collect()
}

pub fn rel_err(got: &CMat, want: &CMat) -> f64 {
    op_norm(&(got - want)) / op_norm(want).max(1e-300)
}

/// `A(t) = B + C/t^2` with diagonal `B = diag(-1,-2)`, `C = diag(-1,-3)`.
pub fn diagonal_prototype() -> SingularFamily {
    SingularFamily::prototype(
        DenseOperator::diag(&[-1.0, -2.0]).unwrap(),
        DenseOperator::diag(&[-1.0, -3.0]).unwrap(),
        2.0,
        1.0,
    )
    .unwrap()
}

/// 4x4 prototype whose `B` and `C` do not commute.
pub fn noncommuting_prototype() -> SingularFamily {
    let n = 4;
    let r = CMat::from_fn(n, n, |i, j| c64(((i + 2 * j) as f64 + 0.5).sin(), 0.0));
    let b = CMat::identity(n, n) * c64(-0.5, 0.0) + &r * c64(0.3, 0.0);
    let q = CMat::identity(n, n) + &r * c64(0.15, 0.0);
    let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(n, (1..=n).map(|k| c64(-(k as f64), 0.0))));
    let c = &q * d * q.clone().try_inverse().unwrap();
    SingularFamily::prototype(
        DenseOperator::new(b, "B").unwrap(),
        DenseOperator::new(c, "C").unwrap(),
        2.0,
        1.0,
    )
    .unwrap()
}

/// `A(t) = -1/t^2`, with `U(t,s) = exp(-(1/s - 1/t))`.
pub fn scalar_family() -> SingularFamily {
    SingularFamily::power(DenseOperator::diag(&[-1.0]).unwrap(), 2.0, 1.0).unwrap()
}
