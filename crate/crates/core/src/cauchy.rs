//! Singular Hölder norms and the bounded solution
//! `u(t) = int_0^t U(t,r) f(r) dr` of `u' - A(t) u = f(t)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{phi_functions, EvolutionGrid};
use crate::family::SingularFamily;
use crate::linops::{c64, expm, matmul, CMat, CVec};

/// Vector samples `v(t_j)` on an increasing mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    mesh: Vec<f64>,
    values: Vec<CVec>,
    space_dim: usize,
}

impl GridFunction {
    pub fn new(mesh: Vec<f64>, values: Vec<CVec>) -> Result<Self> {
        if mesh.is_empty() || !mesh.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::DegenerateMesh);
        }
        if values.len() != mesh.len() {
            return Err(Error::DimensionMismatch { expected: mesh.len(), got: values.len() });
        }
        let space_dim = values[0].len();
        if let Some(v) = values.iter().find(|v| v.len() != space_dim) {
            return Err(Error::DimensionMismatch { expected: space_dim, got: v.len() });
        }
        Ok(Self { mesh, values, space_dim })
    }

    pub fn from_fn(mesh: &[f64], f: impl Fn(f64) -> CVec) -> Result<Self> {
        Self::new(mesh.to_vec(), mesh.iter().map(|&t| f(t)).collect())
    }

    pub fn zeros(mesh: &[f64], dim: usize) -> Result<Self> {
        Self::from_fn(mesh, |_| CVec::zeros(dim))
    }

    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    pub fn values(&self) -> &[CVec] {
        &self.values
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    /// `a self + b other` on a shared mesh.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        if self.mesh != other.mesh {
            return Err(Error::InvalidArgument("grid functions live on different meshes".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x * c64(a, 0.0) + y * c64(b, 0.0))
            .collect();
        GridFunction::new(self.mesh.clone(), values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// The samples at `t >= t_lo`.
    pub fn restrict_from(&self, t_lo: f64) -> Result<GridFunction> {
        let k = self.mesh.iter().position(|&t| t >= t_lo).ok_or(Error::DegenerateMesh)?;
        GridFunction::new(self.mesh[k..].to_vec(), self.values[k..].to_vec())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolderReport {
    pub alpha: f64,
    pub beta: f64,
    /// Exponent of the weight inside the seminorm.
    pub weight: f64,
    /// `max_j ||t_j^beta v_j||`
    pub sup_part: f64,
    /// `max_{j != k} ||t^w v(t) - s^w v(s)|| / |t - s|^alpha`
    pub seminorm: f64,
    pub argmax_pair: (f64, f64),
    pub norm: f64,
}

fn weighted_holder(v: &GridFunction, alpha: f64, beta: f64, weight: f64) -> Result<HolderReport> {
    if v.len() < 2 {
        return Err(Error::DegenerateMesh);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let mesh = &v.mesh;
    let sup_part = mesh
        .iter()
        .zip(&v.values)
        .map(|(&t, x)| t.powf(beta) * x.norm())
        .fold(0.0, f64::max);
    let weighted: Vec<CVec> =
        mesh.iter().zip(&v.values).map(|(&t, x)| x * c64(t.powf(weight), 0.0)).collect();
    let (seminorm, argmax_pair) = (1..mesh.len())
        .into_par_iter()
        .map(|i| {
            let mut best = (0.0, (mesh[i], mesh[0]));
            for j in 0..i {
                let q = (&weighted[i] - &weighted[j]).norm() / (mesh[i] - mesh[j]).powf(alpha);
                if q > best.0 {
                    best = (q, (mesh[i], mesh[j]));
                }
            }
            best
        })
        .reduce(|| (0.0, (mesh[0], mesh[0])), |a, b| if b.0 > a.0 { b } else { a });
    Ok(HolderReport {
        alpha,
        beta,
        weight,
        sup_part,
        seminorm,
        argmax_pair,
        norm: sup_part + seminorm,
    })
}

/// `||(.)^beta v||_inf + [(.)^{alpha+beta} v]_alpha` by brute force over all mesh pairs.
pub fn holder_norm(v: &GridFunction, alpha: f64, beta: f64) -> Result<HolderReport> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("beta = {beta} must be nonnegative")));
    }
    weighted_holder(v, alpha, beta, alpha + beta)
}

/// Unweighted `||v||_inf + [v]_alpha`, the norm of functions Hölder up to `t = 0`.
pub fn holder_norm_plain(v: &GridFunction, alpha: f64) -> Result<HolderReport> {
    weighted_holder(v, alpha, 0.0, 0.0)
}

/// Product-integration weights of the variation-of-constants formula on a
/// fixed evolution grid.
///
/// With `f` linear between mesh points, the contribution of `[t_m, t_{m+1}]`
/// is `W0_m f(t_m) + W1_m f(t_{m+1})`. Each interval is cut into sub-panels on
/// which `U(t_{m+1}, r)` is the exponential of the generator frozen at the
/// panel midpoint, so the hat functions integrate exactly against it through
/// `phi_1` and `phi_2`; runs with `m` and `2m` panels are extrapolated.
pub struct ScpSolver<'a> {
    grid: &'a EvolutionGrid,
    w0: Vec<CMat>,
    w1: Vec<CMat>,
    origin: CMat,
}

fn auto_panels(a: f64, b: f64) -> usize {
    ((b - a) / a * 40.0).ceil().clamp(4.0, 32.0) as usize
}

/// `e^X, phi_1(X), phi_2(X)` by two solves with `X` when that is well
/// conditioned, otherwise from the augmented exponential.
fn phi_pair(x: &CMat) -> (CMat, CMat, CMat) {
    let n = x.nrows();
    let lu = x.clone().lu();
    if let Some(inv) = lu.try_inverse() {
        if inv.norm() < 1e2 {
            let e = expm(x);
            let id = CMat::identity(n, n);
            let phi1 = matmul(&inv, &(&e - &id));
            let phi2 = matmul(&inv, &(&phi1 - &id));
            return (e, phi1, phi2);
        }
    }
    phi_functions(x)
}

fn interval_weights(family: &SingularFamily, a: f64, b: f64, m: usize) -> (CMat, CMat) {
    let n = family.dim();
    let len = b - a;
    let h = len / m as f64;
    let mut u = CMat::identity(n, n);
    let mut wa = CMat::zeros(n, n);
    let mut wb = CMat::zeros(n, n);
    for p in (0..m).rev() {
        let right = if p + 1 == m { b } else { a + (p + 1) as f64 * h };
        let x = family.eval_matrix(right - 0.5 * h) * c64(h, 0.0);
        let (e, phi1, phi2) = phi_pair(&x);
        let first = matmul(&u, &phi1) * c64(h, 0.0);
        let moment = matmul(&u, &(&phi1 - &phi2)) * c64(h * h / len, 0.0);
        wb += &first * c64((right - a) / len, 0.0) - moment;
        wa += first;
        u = matmul(&u, &e);
    }
    (&wa - &wb, wb)
}

impl<'a> ScpSolver<'a> {
    pub fn new(grid: &'a EvolutionGrid) -> Result<Self> {
        Self::with_panels(grid, 0)
    }

    /// `panels = 0` picks a sub-panel count from each interval's relative length.
    pub fn with_panels(grid: &'a EvolutionGrid, panels: usize) -> Result<Self> {
        let family = grid.family();
        let mesh = grid.mesh();
        let n = family.dim();
        let weights: Vec<(CMat, CMat)> = mesh
            .par_windows(2)
            .map(|w| {
                let m = if panels == 0 { auto_panels(w[0], w[1]) } else { panels };
                let (c0, c1) = interval_weights(family, w[0], w[1], m);
                let (f0, f1) = interval_weights(family, w[0], w[1], 2 * m);
                let third = c64(1.0 / 3.0, 0.0);
                ((f0 * c64(4.0, 0.0) - c0) * third, (f1 * c64(4.0, 0.0) - c1) * third)
            })
            .collect();
        let (w0, w1) = weights.into_iter().unzip();
        // (0, t_0] with the generator frozen at t_0 and f constant there
        let t0 = mesh[0];
        let a0 = family.eval_matrix(t0);
        let inv = family.inverse_at(t0)?;
        let origin = -(inv * (CMat::identity(n, n) - expm(&(&a0 * c64(t0, 0.0)))));
        Ok(Self { grid, w0, w1, origin })
    }

    pub fn solve(&self, f: &GridFunction) -> Result<GridFunction> {
        let mesh = self.grid.mesh();
        if f.mesh() != mesh {
            return Err(Error::InvalidArgument("forcing must be sampled on the evolution mesh".into()));
        }
        let n = self.grid.dim();
        if f.space_dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: f.space_dim() });
        }
        let fv = f.values();
        let local: Vec<CVec> = (0..mesh.len() - 1)
            .map(|m| &self.w0[m] * &fv[m] + &self.w1[m] * &fv[m + 1])
            .collect();
        let u0 = &self.origin * &fv[0];
        let values: Vec<CVec> = (0..mesh.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = if i == 0 {
                    u0.clone()
                } else {
                    self.grid.block_ref(i, 0).ok_or(Error::MissingBlock(i, 0))? * &u0
                };
                for m in 0..i {
                    if m + 1 == i {
                        acc += &local[m];
                    } else {
                        let blk = self.grid.block_ref(i, m + 1).ok_or(Error::MissingBlock(i, m + 1))?;
                        acc += blk * &local[m];
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        GridFunction::new(mesh.to_vec(), values)
    }
}

/// Bounded solution of `u' - A(t) u = f` on the grid mesh.
pub fn solve_scp(family: &SingularFamily, grid: &EvolutionGrid, f: &GridFunction) -> Result<GridFunction> {
    if family.dim() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), got: family.dim() });
    }
    ScpSolver::new(grid)?.solve(f)
}

/// `A(t_j) u(t_j)` on the mesh.
pub fn apply_family(family: &SingularFamily, u: &GridFunction) -> Result<GridFunction> {
    let values = u
        .mesh()
        .iter()
        .zip(u.values())
        .map(|(&t, v)| family.eval_matrix(t) * v)
        .collect();
    GridFunction::new(u.mesh().to_vec(), values)
}

/// `max ||u'(t_j) - A(t_j) u(t_j) - f(t_j)||` over interior points, `u'` by
/// centered differences.
pub fn equation_residual(family: &SingularFamily, u: &GridFunction, f: &GridFunction) -> f64 {
    let m = u.mesh();
    (1..m.len().saturating_sub(1))
        .map(|j| {
            let du = (&u.values()[j + 1] - &u.values()[j - 1]) * c64(1.0 / (m[j + 1] - m[j - 1]), 0.0);
            (du - family.eval_matrix(m[j]) * &u.values()[j] - &f.values()[j]).norm()
        })
        .fold(0.0, f64::max)
}

/// Regularity class of the forcing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingClass {
    /// Hölder up to the origin with `f(0) = 0`; measured in the plain norm.
    VanishingAtOrigin,
    /// Bounded with `t^alpha f` Hölder; measured in `||.||_inf + [(.)^alpha .]_alpha`.
    Singular,
}

impl ForcingClass {
    pub fn norm(&self, v: &GridFunction, alpha: f64) -> Result<HolderReport> {
        match self {
            ForcingClass::VanishingAtOrigin => holder_norm_plain(v, alpha),
            ForcingClass::Singular => holder_norm(v, alpha, 0.0),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxRegReport {
    pub alpha: f64,
    pub rho: f64,
    pub class: ForcingClass,
    pub f_norm: f64,
    pub udot_norm: f64,
    pub au_norm: f64,
    /// `(||u'|| + ||Au||) / ||f||`; `None` when `f` vanishes.
    pub ratio: Option<f64>,
    /// Slope of `log ||A(t)u(t)||` against `log t` over the first decade.
    pub origin_exponent: Option<f64>,
    /// `||f(t_min)|| <= t_min^alpha [f]_alpha`, the discrete form of `f(0) = 0`.
    pub vanishes_at_origin: bool,
    pub residual: f64,
    pub pass: bool,
}

fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Solves, forms `Au` and `u' = Au + f`, and compares their Hölder norms
/// with that of `f` in the scale of `class`.
pub fn verify_maxreg(
    family: &SingularFamily,
    grid: &EvolutionGrid,
    f: &GridFunction,
    alpha: f64,
    rho: f64,
    class: ForcingClass,
) -> Result<MaxRegReport> {
    let solver = ScpSolver::new(grid)?;
    verify_maxreg_with(&solver, family, f, alpha, rho, class)
}

pub fn verify_maxreg_with(
    solver: &ScpSolver,
    family: &SingularFamily,
    f: &GridFunction,
    alpha: f64,
    rho: f64,
    class: ForcingClass,
) -> Result<MaxRegReport> {
    let u = solver.solve(f)?;
    let au = apply_family(family, &u)?;
    let udot = au.combine(1.0, f, 1.0)?;
    let fr = class.norm(f, alpha)?;
    let f_norm = fr.norm;
    let udot_norm = class.norm(&udot, alpha)?.norm;
    let au_norm = class.norm(&au, alpha)?.norm;
    let ratio = (f_norm > 0.0).then(|| (udot_norm + au_norm) / f_norm);
    let mesh = f.mesh();
    let decade: Vec<(f64, f64)> = mesh
        .iter()
        .zip(au.values())
        .filter(|(&t, _)| t <= 10.0 * mesh[0])
        .map(|(&t, v)| (t, v.norm()))
        .collect();
    let origin_exponent = loglog_slope(&decade);
    let plain = holder_norm_plain(f, alpha)?;
    let vanishes_at_origin =
        f.values()[0].norm() <= mesh[0].powf(alpha) * plain.seminorm * (1.0 + 1e-12);
    let residual = equation_residual(family, &u, f);
    let pass = match class {
        _ if f_norm == 0.0 => true,
        ForcingClass::VanishingAtOrigin => {
            ratio.is_some_and(f64::is_finite)
                && origin_exponent.map_or(true, |e| e >= alpha - 0.1)
        }
        ForcingClass::Singular => ratio.is_some_and(f64::is_finite),
    };
    Ok(MaxRegReport {
        alpha,
        rho,
        class,
        f_norm,
        udot_norm,
        au_norm,
        ratio,
        origin_exponent,
        vanishes_at_origin,
        residual,
        pass,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbedReport {
    /// `||f||_{alpha, rho-1} / ||f||` in the plain Hölder norm.
    pub weighted_over_plain: f64,
    /// `max_delta delta^alpha ||f||_{alpha,[delta,T]} / ||f||_{alpha,s}`.
    pub interval_over_singular: f64,
    pub deltas: Vec<f64>,
}

/// Ratios behind the embeddings used for the origin estimates.
pub fn embed_check(f: &GridFunction, alpha: f64, rho: f64) -> Result<EmbedReport> {
    let weighted = holder_norm(f, alpha, rho - 1.0)?.norm;
    let plain = holder_norm_plain(f, alpha)?.norm;
    let singular = holder_norm(f, alpha, 0.0)?.norm;
    let mesh = f.mesh();
    let mut deltas = vec![];
    let mut d = mesh[0];
    while d < mesh[mesh.len() - 1] / 2.0 {
        deltas.push(d);
        d *= 10f64.sqrt();
    }
    let mut interval_over_singular: f64 = 0.0;
    for &delta in &deltas {
        let part = f.restrict_from(delta)?;
        if part.len() < 2 {
            continue;
        }
        let local = holder_norm_plain(&part, alpha)?.norm;
        if singular > 0.0 {
            interval_over_singular = interval_over_singular.max(delta.powf(alpha) * local / singular);
        }
    }
    Ok(EmbedReport {
        weighted_over_plain: if plain > 0.0 { weighted / plain } else { 0.0 },
        interval_over_singular,
        deltas,
    })
}
