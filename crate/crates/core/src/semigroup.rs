//! Operator functions of a single generator.
//!
//! The semigroup `e^{tA}` is evaluated from the resolvent by the
//! Dunford–Schwarz contour integral
//!
//! ```text
//! e^{tA} = 1/(2 pi i) \int_Gamma e^{lambda t} (lambda - A)^{-1} d lambda
//! ```
//!
//! over the path made of the rays `{rho e^{+-i eta} : rho >= r}` joined by
//! the arc `|lambda| = r, |arg lambda| <= eta`. The spectrum must lie on the
//! left of the path: inside the disk of radius `r` or in `|arg| > eta`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::family::SingularFamily;
use crate::linops::{c64, eigenvalues, expm, op_norm, spectral_bound, CMat, CVec, DenseOperator};
use crate::quad::{adaptive_gl, gauss_legendre};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    /// Composite Gauss–Legendre, 8 nodes per panel on the rays.
    GaussLegendre,
    /// Composite trapezoid on the same node layout (low order).
    Trapezoid,
}

/// Integration path for the semigroup integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourSpec {
    /// Arc radius; `None` means `1/t`.
    #[serde(default)]
    pub radius: Option<f64>,
    pub eta: f64,
    pub nodes_per_ray: usize,
    pub nodes_on_arc: usize,
    pub rule: QuadratureRule,
}

impl Default for ContourSpec {
    fn default() -> Self {
        Self {
            radius: None,
            eta: 0.7 * PI,
            nodes_per_ray: 120,
            nodes_on_arc: 40,
            rule: QuadratureRule::GaussLegendre,
        }
    }
}

/// `e^{lambda t}` is cut off on the rays once it drops below `e^{-RAY_CUTOFF}`.
const RAY_CUTOFF: f64 = 40.0;
const GL_PANEL: usize = 8;

impl ContourSpec {
    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn refined(mut self) -> Self {
        self.nodes_per_ray *= 2;
        self.nodes_on_arc *= 2;
        self
    }

    /// Checks the path invariants; `theta` is a certified sector angle if known.
    pub fn validate(&self, theta: Option<f64>) -> Result<()> {
        let upper = theta.unwrap_or(PI);
        if !(self.eta > PI / 2.0 && self.eta < upper) {
            return Err(Error::InvalidArgument(format!(
                "contour angle {} must lie in (pi/2, {upper})",
                self.eta
            )));
        }
        if 2 * self.nodes_per_ray + self.nodes_on_arc < 8 || self.nodes_per_ray == 0 {
            return Err(Error::InvalidArgument("contour needs at least 8 nodes".into()));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument("contour radius must be positive".into()));
            }
        }
        Ok(())
    }

    /// Nodes `lambda_k` and weights `c_k` with `e^{tA} ~ sum_k c_k (lambda_k - A)^{-1}`.
    fn nodes(&self, t: f64) -> Vec<(Complex64, Complex64)> {
        let r = self.radius.unwrap_or(1.0 / t);
        let (sin_eta, cos_eta) = self.eta.sin_cos();
        let span = RAY_CUTOFF / (t * cos_eta.abs());
        let two_pi_i = c64(0.0, 2.0 * PI);
        let mut out = Vec::with_capacity(2 * self.nodes_per_ray + self.nodes_on_arc);

        // offsets sigma = rho - r along the ray with weights
        let ray: Vec<(f64, f64)> = match self.rule {
            QuadratureRule::GaussLegendre => {
                let panels = (self.nodes_per_ray / GL_PANEL).max(1);
                let per = self.nodes_per_ray.div_ceil(panels);
                let first = (0.1 * r).min(span / panels as f64);
                let growth = if panels > 1 {
                    (span / first).powf(1.0 / (panels - 1) as f64)
                } else {
                    1.0
                };
                let mut edges = vec![0.0];
                for k in 0..panels {
                    edges.push(first * growth.powi(k as i32));
                }
                *edges.last_mut().unwrap() = span;
                let rule = gauss_legendre(per);
                let mut v = Vec::with_capacity(panels * per);
                for w in edges.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    for &(x, wt) in &rule {
                        v.push((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * wt));
                    }
                }
                v
            }
            QuadratureRule::Trapezoid => {
                let n = self.nodes_per_ray.max(2);
                let first = (0.1 * r).min(span / n as f64);
                let growth = (span / first).powf(1.0 / (n - 2).max(1) as f64);
                let mut pts = vec![0.0];
                for k in 0..n - 1 {
                    pts.push(first * growth.powi(k as i32));
                }
                *pts.last_mut().unwrap() = span;
                let mut v: Vec<(f64, f64)> = pts.iter().map(|&p| (p, 0.0)).collect();
                for k in 0..pts.len() - 1 {
                    let h = pts[k + 1] - pts[k];
                    v[k].1 += 0.5 * h;
                    v[k + 1].1 += 0.5 * h;
                }
                v
            }
        };
        let up = c64(cos_eta, sin_eta);
        let down = c64(cos_eta, -sin_eta);
        for &(sigma, w) in &ray {
            let rho = r + sigma;
            // upper ray runs outward, lower ray inward
            let lu = up * rho;
            out.push((lu, (lu * t).exp() * up * w / two_pi_i));
            let ld = down * rho;
            out.push((ld, -(ld * t).exp() * down * w / two_pi_i));
        }

        let arc: Vec<(f64, f64)> = match self.rule {
            QuadratureRule::GaussLegendre => gauss_legendre(self.nodes_on_arc)
                .into_iter()
                .map(|(x, w)| (self.eta * x, self.eta * w))
                .collect(),
            QuadratureRule::Trapezoid => {
                let n = self.nodes_on_arc.max(2);
                let h = 2.0 * self.eta / (n - 1) as f64;
                (0..n)
                    .map(|k| {
                        let w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
                        (-self.eta + k as f64 * h, w)
                    })
                    .collect()
            }
        };
        for (phi, w) in arc {
            let lambda = Complex64::from_polar(r, phi);
            let dl = c64(0.0, 1.0) * lambda;
            out.push((lambda, (lambda * t).exp() * dl * w / two_pi_i));
        }
        out
    }
}

fn check_contour_side(a: &DenseOperator, r: f64, eta: f64) -> Result<()> {
    for mu in eigenvalues(a)? {
        let inside = mu.norm() < r || mu.arg().abs() > eta;
        if !inside {
            return Err(Error::InvalidArgument(format!(
                "eigenvalue {mu} lies outside the integration contour (r = {r:.3e}, eta = {eta:.3})"
            )));
        }
    }
    Ok(())
}

/// `e^{tA}` by contour quadrature.
pub fn exp_semigroup(a: &DenseOperator, t: f64, contour: &ContourSpec) -> Result<DenseOperator> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("semigroup time {t} must be positive")));
    }
    contour.validate(None)?;
    let r = contour.radius.unwrap_or(1.0 / t);
    check_contour_side(a, r, contour.eta)?;

    let n = a.dim();
    let nodes = contour.nodes(t);
    let id = CMat::identity(n, n);
    let terms: Vec<Result<CMat>> = nodes
        .par_iter()
        .map(|&(lambda, c)| {
            let shifted = &id * lambda - a.matrix();
            let inv = shifted
                .lu()
                .try_inverse()
                .ok_or(Error::NearSingular { lambda, cond: f64::INFINITY })?;
            Ok(inv * c)
        })
        .collect();
    let mut sum = CMat::zeros(n, n);
    for term in terms {
        sum += term?;
    }

    // tail left beyond the ray cut-off
    let (sin_eta, cos_eta) = contour.eta.sin_cos();
    let rho_end = r + RAY_CUTOFF / (t * cos_eta.abs());
    let lambda_end = c64(cos_eta, sin_eta) * rho_end;
    let tail_res = (&id * lambda_end - a.matrix())
        .lu()
        .try_inverse()
        .map_or(f64::INFINITY, |m| op_norm(&m));
    let tail = (rho_end * t * cos_eta).exp() * tail_res / (t * cos_eta.abs());
    if tail > 1e-12 * op_norm(&sum).max(1e-300) && tail > 1e-14 {
        return Err(Error::QuadratureDivergence(format!(
            "ray truncation error estimate {tail:.3e}"
        )));
    }

    if a.max_imag() == 0.0 {
        let scale = sum.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let imag = sum.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if imag > 1e-10 * scale {
            return Err(Error::QuadratureDivergence(format!(
                "imaginary residue {imag:.3e} for a real generator"
            )));
        }
        sum.iter_mut().for_each(|z| z.im = 0.0);
    }
    DenseOperator::new(sum, format!("exp({t}*{})", a.label()))
}

/// Contour-quadrature semigroup with the default path.
pub fn semigroup(a: &DenseOperator, t: f64) -> Result<DenseOperator> {
    exp_semigroup(a, t, &ContourSpec::default())
}

/// Trapezoid rule in `u = ln t` for the fractional-power integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractionalRule {
    pub step: f64,
    /// Lower cut in `u`; `None` picks the point where `e^{rho u}/rho` drops below 1e-17.
    #[serde(default)]
    pub u_min: Option<f64>,
}

impl Default for FractionalRule {
    fn default() -> Self {
        Self { step: 0.125, u_min: None }
    }
}

/// `(-A)^{-rho} = 1/Gamma(rho) \int_0^inf t^{rho-1} e^{tA} dt`.
pub fn frac_power_inv(a: &DenseOperator, rho: f64, rule: &FractionalRule) -> Result<DenseOperator> {
    if !(rho > 0.0 && rho < 2.0) {
        return Err(Error::InvalidArgument(format!("exponent {rho} must lie in (0, 2)")));
    }
    let bound = spectral_bound(a)?;
    if bound >= 0.0 {
        return Err(Error::DivergentTail(bound));
    }
    let omega = -bound;
    let m = a.matrix();

    let mut t_max = 1.0 / omega;
    for _ in 0..80 {
        let e = expm(&(m * c64(t_max, 0.0)));
        if op_norm(&e) * t_max.powf(rho) < 1e-18 {
            break;
        }
        t_max *= 1.5;
    }
    let u_max = t_max.ln();
    let u_min = rule.u_min.unwrap_or((1e-17 * rho).ln() / rho);
    let h = rule.step;
    let count = ((u_max - u_min) / h).ceil().max(1.0) as usize;

    let terms: Vec<CMat> = (0..=count)
        .into_par_iter()
        .map(|k| {
            let u = u_max - k as f64 * h;
            let t = u.exp();
            expm(&(m * c64(t, 0.0))) * c64(h * (rho * u).exp(), 0.0)
        })
        .collect();
    let n = a.dim();
    let mut sum = CMat::zeros(n, n);
    for term in &terms {
        sum += term;
    }
    sum /= c64(gamma(rho), 0.0);
    if a.max_imag() == 0.0 {
        sum.iter_mut().for_each(|z| z.im = 0.0);
    }
    DenseOperator::new(sum, format!("(-{})^-{rho}", a.label()))
}

/// `(-A)^{rho}` as the inverse of [`frac_power_inv`].
pub fn frac_power(a: &DenseOperator, rho: f64) -> Result<DenseOperator> {
    let inv = frac_power_inv(a, rho, &FractionalRule::default())?;
    let m = inv
        .matrix()
        .clone()
        .try_inverse()
        .ok_or(Error::NearSingular { lambda: c64(0.0, 0.0), cond: f64::INFINITY })?;
    DenseOperator::new(m, format!("(-{})^{rho}", a.label()))
}

/// Interpolation seminorm `[x]_{alpha,p}` evaluated on a grid in `(0, 1]`.
///
/// `p = f64::INFINITY` gives the sup over the grid of `||t^{1-alpha} A e^{tA} x||`.
/// For finite `p` the `L_p(0,1)` norm of `v(t) = ||t^{1-alpha-1/p} A e^{tA} x||`
/// is integrated by the trapezoid rule in `ln t`, plus the `(0, t_0)` head
/// where `v(t)^p ~ t^{p(1-alpha)-1}`.
pub fn interp_seminorm(
    a: &DenseOperator,
    x: &CVec,
    alpha: f64,
    p: f64,
    t_grid: &[f64],
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || !(p >= 1.0) {
        return Err(Error::InvalidArgument("need alpha in (0,1) and p >= 1".into()));
    }
    if t_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut grid = t_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    if grid[0] <= 0.0 || *grid.last().unwrap() > 1.0 {
        return Err(Error::InvalidArgument("grid must lie in (0, 1]".into()));
    }
    if x.norm() == 0.0 {
        return Ok(0.0);
    }
    let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
    let ax = a.apply(x)?;
    let v: Vec<f64> = grid
        .par_iter()
        .map(|&t| -> Result<f64> {
            let e = semigroup(a, t)?;
            Ok(t.powf(1.0 - alpha - inv_p) * (e.matrix() * &ax).norm())
        })
        .collect::<Result<_>>()?;
    if p.is_infinite() {
        return Ok(v.iter().copied().fold(0.0, f64::max));
    }
    let mut integral = grid[0] * v[0].powf(p) / (p * (1.0 - alpha));
    for k in 0..grid.len() - 1 {
        let du = (grid[k + 1] / grid[k]).ln();
        integral += 0.5 * du * (grid[k] * v[k].powf(p) + grid[k + 1] * v[k + 1].powf(p));
    }
    Ok(integral.powf(1.0 / p))
}

/// `|| A \int_0^t e^{sA} x ds - (e^{tA} x - x) ||` with the integral by adaptive quadrature.
pub fn verify_integral_identity(a: &DenseOperator, t: f64, x: &CVec) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time {t} must be positive")));
    }
    if x.len() != a.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: x.len() });
    }
    let mut failure = None;
    let integral: CVec = adaptive_gl(0.0, t, 1e-13, |s| match semigroup(a, s) {
        Ok(e) => e.matrix() * x,
        Err(err) => {
            failure.get_or_insert(err);
            CVec::zeros(x.len())
        }
    });
    if let Some(err) = failure {
        return Err(err);
    }
    let lhs = a.matrix() * integral;
    let rhs = semigroup(a, t)?.matrix() * x - x;
    Ok((lhs - rhs).norm())
}

/// `|| A(t) [e^{(t-tau) A(tau)} - e^{(t-tau) A(t)}] ||`.
pub fn semigroup_difference_bound(family: &SingularFamily, tau: f64, t: f64) -> Result<f64> {
    if !(tau > 0.0 && tau <= t) {
        return Err(Error::InvalidArgument(format!("need 0 < tau <= t, got tau={tau}, t={t}")));
    }
    if tau == t {
        return Ok(0.0);
    }
    let h = t - tau;
    let at = family.eval(t)?;
    let atau = family.eval(tau)?;
    let e_tau = semigroup(&atau, h)?;
    let e_t = semigroup(&at, h)?;
    Ok(op_norm(&(at.matrix() * (e_tau.matrix() - e_t.matrix()))))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    pub omega_est: f64,
    pub c_est: f64,
    #[serde(rename = "tAe_sup")]
    pub tae_sup: f64,
    pub t_grid: Vec<f64>,
    pub exp_norms: Vec<f64>,
    pub tae_norms: Vec<f64>,
    pub pass: bool,
}

/// Samples `||e^{tA}||` and `||t A e^{tA}||` on a log grid over `(0, T]`
/// (20 points per decade over four decades) and fits the decay rate from
/// the upper half of the window.
pub fn decay_report(a: &DenseOperator, horizon: f64) -> Result<DecayReport> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let per_decade = 20;
    let decades = 4;
    let n = per_decade * decades;
    let t_grid: Vec<f64> = (0..=n)
        .map(|k| horizon * 10f64.powf((k as f64 - n as f64) / per_decade as f64))
        .collect();
    let samples: Vec<(f64, f64)> = t_grid
        .par_iter()
        .map(|&t| -> Result<(f64, f64)> {
            let e = semigroup(a, t)?;
            let tae = a.matrix() * e.matrix() * c64(t, 0.0);
            Ok((e.norm(), op_norm(&tae)))
        })
        .collect::<Result<_>>()?;
    let exp_norms: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let tae_norms: Vec<f64> = samples.iter().map(|s| s.1).collect();

    let fit: Vec<(f64, f64)> = t_grid
        .iter()
        .zip(&exp_norms)
        .filter(|(t, e)| **t >= 0.5 * horizon && **e > 1e-12)
        .map(|(t, e)| (*t, e.ln()))
        .collect();
    let omega_est = if fit.len() >= 2 {
        let m = fit.len() as f64;
        let mt = fit.iter().map(|p| p.0).sum::<f64>() / m;
        let my = fit.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = fit.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = fit.iter().map(|p| (p.0 - mt).powi(2)).sum();
        -sxy / sxx
    } else {
        -spectral_bound(a)?
    };
    let c_est = t_grid
        .iter()
        .zip(&exp_norms)
        .map(|(t, e)| e * (omega_est * t).exp())
        .fold(0.0, f64::max);
    let tae_sup = tae_norms.iter().copied().fold(0.0, f64::max);
    Ok(DecayReport {
        omega_est,
        c_est,
        tae_sup,
        t_grid,
        exp_norms,
        pass: tae_sup.is_finite(),
        tae_norms,
    })
}
