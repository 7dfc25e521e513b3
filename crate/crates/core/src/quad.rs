//! Quadrature helpers shared by the operator-function and evolution code.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{Dim, Matrix, Owned};
use num_complex::Complex64;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n.max(1)).unwrap();
    let mut pairs = GaussLegendre::new(n).as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .collect()
}

/// `n + 1` points with geometric spacing from `lo` to `hi`.
pub fn geometric_mesh(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ratio = hi / lo;
    let mut m: Vec<f64> = (0..=n)
        .map(|j| lo * ratio.powf(j as f64 / n as f64))
        .collect();
    m[0] = lo;
    m[n] = hi;
    m
}

/// Values that can be accumulated by the adaptive integrator.
pub trait Accumulate: Clone {
    fn axpy(&mut self, w: f64, other: &Self);
    fn scaled(&self, w: f64) -> Self;
    fn dist(&self, other: &Self) -> f64;
    fn magnitude(&self) -> f64;
}

impl Accumulate for f64 {
    fn axpy(&mut self, w: f64, other: &Self) {
        *self += w * other;
    }
    fn scaled(&self, w: f64) -> Self {
        self * w
    }
    fn dist(&self, other: &Self) -> f64 {
        (self - other).abs()
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl<R: Dim, C: Dim> Accumulate for Matrix<Complex64, R, C, Owned<Complex64, R, C>>
where
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<R, C>,
{
    fn axpy(&mut self, w: f64, other: &Self) {
        *self += other * Complex64::new(w, 0.0);
    }
    fn scaled(&self, w: f64) -> Self {
        self * Complex64::new(w, 0.0)
    }
    fn dist(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

fn gl_panel<T: Accumulate>(rule: &[(f64, f64)], a: f64, b: f64, f: &mut impl FnMut(f64) -> T) -> T {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc: Option<T> = None;
    for &(x, w) in rule {
        let v = f(mid + half * x);
        match acc.as_mut() {
            None => acc = Some(v.scaled(w * half)),
            Some(s) => s.axpy(w * half, &v),
        }
    }
    acc.expect("rule is nonempty")
}

/// Adaptive composite Gauss–Legendre (16 points per panel, bisection).
///
/// Stops a panel when the two halves agree with the whole to `tol` relative
/// to the running magnitude of the integral.
pub fn adaptive_gl<T: Accumulate>(a: f64, b: f64, tol: f64, mut f: impl FnMut(f64) -> T) -> T {
    let rule = gauss_legendre(16);
    let whole = gl_panel(&rule, a, b, &mut f);
    let scale = whole.magnitude().max(1e-300);
    let mut stack = vec![(a, b, whole, 0usize)];
    let mut total: Option<T> = None;
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = gl_panel(&rule, lo, mid, &mut f);
        let right = gl_panel(&rule, mid, hi, &mut f);
        let mut refined = left.clone();
        refined.axpy(1.0, &right);
        let err = refined.dist(&est);
        if err <= tol * scale * ((hi - lo) / (b - a)).max(1e-3) || depth >= 40 {
            match total.as_mut() {
                None => total = Some(refined),
                Some(t) => t.axpy(1.0, &refined),
            }
        } else {
            stack.push((mid, hi, right, depth + 1));
            stack.push((lo, mid, left, depth + 1));
        }
    }
    total.expect("at least one panel")
}
