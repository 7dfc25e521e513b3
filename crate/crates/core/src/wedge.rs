//! The space-time wedge diffusion problem after flattening, solved mode by
//! mode in a periodic `x` variable.
//!
//! Per Fourier mode `xi` the flattened unknown satisfies
//! `u' = -xi^2 u + u_yy / t^2 + (y/t) u_y` on `0 < y < 1` with `u(t,0) = g`
//! and `u_y(t,1) = t h`. Boundary data are removed by explicit lifts and the
//! homogeneous remainder is propagated by the evolution machinery.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cauchy::{holder_norm, GridFunction, ScpSolver};
use crate::error::{Error, Result};
use crate::evolution::{construct_volterra_with, graded_mesh, EvolutionGrid, VolterraConfig};
use crate::family::{FamilyKind, SingularFamily};
use crate::linops::{c64, CVec, DenseOperator};

/// `cosh(z(1-y)) / cosh(z)` for `z >= 0`.
fn cosh_ratio_rev(z: f64, y: f64) -> f64 {
    (-z * y).exp() * (1.0 + (-2.0 * z * (1.0 - y)).exp()) / (1.0 + (-2.0 * z).exp())
}

/// `sinh(z(1-y)) / cosh(z)`.
fn sinh_ratio_rev(z: f64, y: f64) -> f64 {
    (-z * y).exp() * -(-2.0 * z * (1.0 - y)).exp_m1() / (1.0 + (-2.0 * z).exp())
}

/// `cosh(zy) / cosh(z)`.
fn cosh_ratio(z: f64, y: f64) -> f64 {
    (z * (y - 1.0)).exp() * (1.0 + (-2.0 * z * y).exp()) / (1.0 + (-2.0 * z).exp())
}

/// `sinh(zy) / cosh(z)`.
fn sinh_ratio(z: f64, y: f64) -> f64 {
    (z * (y - 1.0)).exp() * -(-2.0 * z * y).exp_m1() / (1.0 + (-2.0 * z).exp())
}

/// Dirichlet lift `g cosh(t|xi|(1-y)) / cosh(t|xi|)`.
pub fn lift_dirichlet(g_mode: Complex64, xi: f64, t: f64, y_grid: &[f64]) -> Vec<Complex64> {
    let z = t * xi.abs();
    y_grid.iter().map(|&y| g_mode * cosh_ratio_rev(z, y)).collect()
}

/// Neumann lift `h sinh(t|xi|y) / (t|xi| cosh(t|xi|))`; its `y`-derivative is
/// `h` at `y = 1`.
pub fn lift_neumann(h_mode: Complex64, xi: f64, t: f64, y_grid: &[f64]) -> Vec<Complex64> {
    let z = t * xi.abs();
    y_grid
        .iter()
        .map(|&y| {
            if z == 0.0 {
                h_mode * y
            } else {
                h_mode * (sinh_ratio(z, y) / z)
            }
        })
        .collect()
}

/// Forcing `[(y/t) d_y - d_t] (R_D g + t R_N h)` of the homogenized mode problem.
pub fn rhs_modes(
    g_mode: Complex64,
    h_mode: Complex64,
    xi: f64,
    t: f64,
    y_grid: &[f64],
) -> Vec<Complex64> {
    let a = xi.abs();
    let z = t * a;
    let tanh = -(-2.0 * z).exp_m1() / (1.0 + (-2.0 * z).exp());
    y_grid
        .iter()
        .map(|&y| {
            let s1 = sinh_ratio_rev(z, y);
            let c1 = cosh_ratio_rev(z, y);
            let s2 = sinh_ratio(z, y);
            let c2 = cosh_ratio(z, y);
            let g_part = a * (-(1.0 - y) * s1 + tanh * c1) - y * s1 * a;
            let h_part = -(y * c2 - tanh * s2) + y * c2;
            g_mode * g_part + h_mode * h_part
        })
        .collect()
}

/// Uniform grid `y_j = j / n_y`, `j = 0..=n_y`.
pub fn uniform_y_grid(n_y: usize) -> Result<Vec<f64>> {
    if n_y < 8 {
        return Err(Error::InvalidArgument(format!("n_y = {n_y} must be at least 8")));
    }
    Ok((0..=n_y).map(|j| j as f64 / n_y as f64).collect())
}

/// Per-mode operator family on the unknowns `y_1, …, y_{n-1}`.
///
/// `v(0) = 0` is eliminated directly; `v(1)` is eliminated through the
/// one-sided closure `3v_n - 4v_{n-1} + v_{n-2} = 0`.
#[derive(Clone, Debug)]
pub struct ModeOperatorFamily {
    pub xi: f64,
    pub y_grid: Vec<f64>,
    pub family: SingularFamily,
}

impl ModeOperatorFamily {
    pub fn unknowns(&self) -> &[f64] {
        &self.y_grid[1..self.y_grid.len() - 1]
    }

    /// Full-grid values of a homogeneous state, boundary values restored.
    pub fn extend(&self, v: &[Complex64]) -> Vec<Complex64> {
        let m = v.len();
        let mut out = Vec::with_capacity(m + 2);
        out.push(c64(0.0, 0.0));
        out.extend_from_slice(v);
        let prev2 = if m >= 2 { v[m - 2] } else { c64(0.0, 0.0) };
        out.push((v[m - 1] * 4.0 - prev2) / 3.0);
        out
    }
}

/// `(D_yy, diag(y) D_y)` on the unknowns with both boundary eliminations.
pub fn mode_difference_matrices(y_grid: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = y_grid.len() - 1;
    if n < 8 {
        return Err(Error::InvalidArgument(format!("n_y = {n} must be at least 8")));
    }
    let h = 1.0 / n as f64;
    let m = n - 1;
    let mut dyy = DMatrix::<f64>::zeros(m, m);
    let mut ydy = DMatrix::<f64>::zeros(m, m);
    // Row r corresponds to grid index j = r + 1; column c to j = c + 1.
    // Eliminated v_n = (4 v_{n-1} - v_{n-2}) / 3.
    let add = |mat: &mut DMatrix<f64>, r: usize, j: usize, w: f64| {
        if j == n {
            mat[(r, n - 2)] += 4.0 * w / 3.0;
            mat[(r, n - 3)] -= w / 3.0;
        } else if j > 0 {
            mat[(r, j - 1)] += w;
        }
    };
    for r in 0..m {
        let j = r + 1;
        let y = y_grid[j];
        add(&mut dyy, r, j - 1, 1.0 / (h * h));
        add(&mut dyy, r, j, -2.0 / (h * h));
        add(&mut dyy, r, j + 1, 1.0 / (h * h));
        add(&mut ydy, r, j - 1, -y / (2.0 * h));
        add(&mut ydy, r, j + 1, y / (2.0 * h));
    }
    Ok((dyy, ydy))
}

/// `A(t) = -xi^2 I + (D_yy + t diag(y) D_y) / t^2`.
pub fn assemble_mode_family(xi: f64, y_grid: &[f64], horizon: f64) -> Result<ModeOperatorFamily> {
    let (dyy, ydy) = mode_difference_matrices(y_grid)?;
    let m = dyy.nrows();
    let b = DenseOperator::from_real(&(DMatrix::<f64>::identity(m, m) * (-xi * xi)), "B")?;
    let c0 = DenseOperator::from_real(&dyy, "D_yy")?;
    let c1 = DenseOperator::from_real(&ydy, "y D_y")?;
    let family = SingularFamily::new(b, vec![c0, c1], 2.0, horizon, FamilyKind::WedgeMode)?;
    Ok(ModeOperatorFamily { xi, y_grid: y_grid.to_vec(), family })
}

/// Real boundary datum on the periodic interval `[-L, L)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundaryData {
    Constant { value: f64 },
    Cosine { amplitude: f64, mode: usize },
    /// `cos[0] + sum_m cos[m] cos(xi_m x) + sin[m-1] sin(xi_m x)`
    Fourier {
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

impl BoundaryData {
    fn cos_sin(&self, m: usize) -> (f64, f64) {
        match self {
            BoundaryData::Constant { value } => (if m == 0 { *value } else { 0.0 }, 0.0),
            BoundaryData::Cosine { amplitude, mode } => (if m == *mode { *amplitude } else { 0.0 }, 0.0),
            BoundaryData::Fourier { cos, sin } => {
                let a = cos.get(m).copied().unwrap_or(0.0);
                let b = if m == 0 { 0.0 } else { sin.get(m - 1).copied().unwrap_or(0.0) };
                (a, b)
            }
        }
    }

    pub fn max_mode(&self) -> usize {
        match self {
            BoundaryData::Constant { .. } => 0,
            BoundaryData::Cosine { mode, .. } => *mode,
            BoundaryData::Fourier { cos, sin } => cos.len().saturating_sub(1).max(sin.len()),
        }
    }

    /// Complex coefficient of `e^{i xi_m x}`.
    pub fn mode_coefficient(&self, m: i64) -> Complex64 {
        let (a, b) = self.cos_sin(m.unsigned_abs() as usize);
        match m.cmp(&0) {
            std::cmp::Ordering::Equal => c64(a, 0.0),
            std::cmp::Ordering::Greater => c64(a / 2.0, -b / 2.0),
            std::cmp::Ordering::Less => c64(a / 2.0, b / 2.0),
        }
    }

    pub fn eval(&self, x: f64, half_period: f64) -> f64 {
        (0..=self.max_mode())
            .map(|m| {
                let (a, b) = self.cos_sin(m);
                let arg = PI * m as f64 * x / half_period;
                a * arg.cos() + b * arg.sin()
            })
            .sum()
    }
}

fn default_n_t() -> usize {
    24
}

fn default_alpha() -> f64 {
    0.5
}

fn default_subpanels() -> usize {
    8
}

/// Flattened wedge problem with `phi = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WedgeProblem {
    #[serde(rename = "L")]
    pub half_period: f64,
    pub n_modes: usize,
    pub n_y: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub t_min: f64,
    #[serde(default = "default_n_t")]
    pub n_t: usize,
    /// Synthesis points in `x`; defaults to `4 n_modes + 4`.
    #[serde(default)]
    pub n_x: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Volterra sub-panels per mesh interval (0 picks them from the interval length).
    #[serde(default = "default_subpanels")]
    pub subpanels: usize,
    pub g: BoundaryData,
    pub h: BoundaryData,
}

impl WedgeProblem {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.half_period > 0.0) {
            return bad(format!("L = {} must be positive", self.half_period));
        }
        if self.n_y < 8 {
            return bad(format!("n_y = {} must be at least 8", self.n_y));
        }
        if !(self.t_min > 0.0 && self.t_min < self.horizon) {
            return bad(format!("need 0 < t_min < T, got t_min = {}, T = {}", self.t_min, self.horizon));
        }
        if self.n_t < 2 {
            return bad(format!("n_t = {} must be at least 2", self.n_t));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} must lie in (0, 1)", self.alpha));
        }
        if self.n_x.is_some_and(|n| n < 1) {
            return bad("n_x must be positive".into());
        }
        let m = self.g.max_mode().max(self.h.max_mode());
        if m > self.n_modes {
            return bad(format!("boundary data use mode {m} beyond n_modes = {}", self.n_modes));
        }
        Ok(())
    }

    pub fn xi(&self, m: i64) -> f64 {
        PI * m as f64 / self.half_period
    }

    pub fn x_grid(&self) -> Vec<f64> {
        let n = self.n_x.unwrap_or(4 * self.n_modes + 4);
        (0..n).map(|j| -self.half_period + 2.0 * self.half_period * j as f64 / n as f64).collect()
    }

    pub fn time_mesh(&self) -> Result<Vec<f64>> {
        graded_mesh(self.t_min, self.horizon, self.n_t)
    }
}

/// One Fourier mode of the solution.
#[derive(Clone, Debug)]
pub struct ModeSolution {
    pub m: i64,
    pub xi: f64,
    pub g_mode: Complex64,
    pub h_mode: Complex64,
    /// Homogeneous part on the unknowns, per time.
    pub v: Vec<CVec>,
    /// Forcing of the homogeneous problem on the unknowns, per time.
    pub f: Vec<CVec>,
    /// `A(t) v(t)` per time.
    pub av: Vec<CVec>,
    /// Full mode profile on the whole `y` grid, per time.
    pub profile: Vec<Vec<Complex64>>,
}

#[derive(Clone, Debug)]
pub struct WedgeSolution {
    pub problem: WedgeProblem,
    pub mesh: Vec<f64>,
    pub y_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub modes: Vec<ModeSolution>,
}

impl WedgeSolution {
    fn synthesize(&self, x: f64, term: impl Fn(&ModeSolution) -> Complex64) -> Complex64 {
        self.modes.iter().map(|md| term(md) * Complex64::from_polar(1.0, md.xi * x)).sum()
    }

    /// Complex field at mesh time `i`, point `x`, grid row `j`.
    pub fn value(&self, i: usize, x: f64, j: usize) -> Complex64 {
        self.synthesize(x, |md| md.profile[i][j])
    }

    /// Real field in row-major `[t][x][y]` order.
    pub fn field(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.mesh.len() * self.x_grid.len() * self.y_grid.len());
        for i in 0..self.mesh.len() {
            for &x in &self.x_grid {
                for j in 0..self.y_grid.len() {
                    out.push(self.value(i, x, j).re);
                }
            }
        }
        out
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.mesh.len(), self.x_grid.len(), self.y_grid.len()]
    }

    /// Largest imaginary part after synthesis on the tensor grid.
    pub fn max_imag(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.mesh.len() {
            for &x in &self.x_grid {
                for j in 0..self.y_grid.len() {
                    worst = worst.max(self.value(i, x, j).im.abs());
                }
            }
        }
        worst
    }
}

fn to_cvec(v: &[Complex64]) -> CVec {
    CVec::from_column_slice(v)
}

fn solve_mode_pair(
    problem: &WedgeProblem,
    base: &EvolutionGrid,
    shape: &ModeOperatorFamily,
    m: i64,
) -> Result<Vec<ModeSolution>> {
    let xi = problem.xi(m);
    let signs: Vec<i64> = if m == 0 { vec![0] } else { vec![m, -m] };
    let coeffs: Vec<(i64, Complex64, Complex64)> = signs
        .iter()
        .map(|&s| (s, problem.g.mode_coefficient(s), problem.h.mode_coefficient(s)))
        .filter(|(_, g, h)| g.norm() > 0.0 || h.norm() > 0.0)
        .collect();
    if coeffs.is_empty() {
        return Ok(vec![]);
    }
    let grid = base.shifted(-xi * xi);
    let family = grid.family();
    let solver = ScpSolver::new(&grid)?;
    let mesh = grid.mesh();
    let y = &shape.y_grid;
    let interior = shape.unknowns();
    coeffs
        .into_iter()
        .map(|(s, g, h)| {
            let f = GridFunction::from_fn(mesh, |t| to_cvec(&rhs_modes(g, h, xi, t, interior)))?;
            let v = solver.solve(&f)?;
            let av: Vec<CVec> =
                mesh.iter().zip(v.values()).map(|(&t, vi)| family.eval_matrix(t) * vi).collect();
            let profile = mesh
                .iter()
                .zip(v.values())
                .map(|(&t, vi)| {
                    let ext = shape.extend(vi.as_slice());
                    let rd = lift_dirichlet(g, xi, t, y);
                    let rn = lift_neumann(h, xi, t, y);
                    (0..y.len()).map(|j| ext[j] + rd[j] + rn[j] * t).collect()
                })
                .collect();
            Ok(ModeSolution {
                m: s,
                xi: problem.xi(s),
                g_mode: g,
                h_mode: h,
                v: v.values().to_vec(),
                f: f.values().to_vec(),
                av,
                profile,
            })
        })
        .collect()
}

/// Solves the flattened problem mode by mode: variation of constants on a
/// volterra evolution grid plus the explicit lifts.
///
/// `B = -xi^2 I` is scalar, so every mode's evolution operator is the
/// `xi = 0` one times `e^{-xi^2 (t - s)}`; the grid is built once and shifted.
pub fn solve_wedge(problem: &WedgeProblem) -> Result<WedgeSolution> {
    problem.validate()?;
    let mesh = problem.time_mesh()?;
    let y = uniform_y_grid(problem.n_y)?;
    let shape = assemble_mode_family(0.0, &y, problem.horizon)?;
    let cfg = VolterraConfig { subpanels: problem.subpanels, ..VolterraConfig::default() };
    let base = construct_volterra_with(&shape.family, &mesh, &cfg)
        .map_err(|e| Error::Mode { mode: 0, source: Box::new(e) })?;
    let per_mode: Vec<Vec<ModeSolution>> = (0..=problem.n_modes as i64)
        .into_par_iter()
        .map(|m| {
            solve_mode_pair(problem, &base, &shape, m).map_err(|e| Error::Mode { mode: m, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let mut modes: Vec<ModeSolution> = per_mode.into_iter().flatten().collect();
    modes.sort_by_key(|md| md.m);
    Ok(WedgeSolution { problem: problem.clone(), mesh, x_grid: problem.x_grid(), y_grid: y, modes })
}

/// Fourth-order `(v'', v')` at grid rows `1..n-1` from full-grid values.
fn fourth_order_derivatives(v: &[Complex64], h: f64) -> Vec<(Complex64, Complex64)> {
    let n = v.len() - 1;
    (1..n)
        .map(|j| {
            let (d2, d1) = if j == 1 {
                (
                    v[0] * 10.0 - v[1] * 15.0 - v[2] * 4.0 + v[3] * 14.0 - v[4] * 6.0 + v[5],
                    -v[0] * 3.0 - v[1] * 10.0 + v[2] * 18.0 - v[3] * 6.0 + v[4],
                )
            } else if j == n - 1 {
                (
                    v[n] * 10.0 - v[n - 1] * 15.0 - v[n - 2] * 4.0 + v[n - 3] * 14.0 - v[n - 4] * 6.0
                        + v[n - 5],
                    -(-v[n] * 3.0 - v[n - 1] * 10.0 + v[n - 2] * 18.0 - v[n - 3] * 6.0 + v[n - 4]),
                )
            } else {
                (
                    -v[j - 2] + v[j - 1] * 16.0 - v[j] * 30.0 + v[j + 1] * 16.0 - v[j + 2],
                    v[j - 2] - v[j - 1] * 8.0 + v[j + 1] * 8.0 - v[j + 2],
                )
            };
            (d2 / (12.0 * h * h), d1 / (12.0 * h))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WedgeResidualReport {
    pub n_y: usize,
    /// `max |u' - u_xx - u_yy / t^2 - (y/t) u_y|` over the interior tensor grid,
    /// `u'` from the semi-discrete equation and `y`-derivatives at fourth order.
    pub interior: f64,
    /// `max |u(t,x,0) - g(x)|`
    pub dirichlet: f64,
    /// `max |u_y(t,x,1) - t h(x)|`, second-order one-sided difference.
    pub neumann: f64,
    pub max_imag: f64,
}

pub fn residual_check(sol: &WedgeSolution) -> Result<WedgeResidualReport> {
    let y = &sol.y_grid;
    let n = y.len() - 1;
    let h = 1.0 / n as f64;
    // per mode, per time, per interior row
    let mode_res: Vec<Vec<Vec<Complex64>>> = sol
        .modes
        .par_iter()
        .map(|md| {
            let mf = assemble_mode_family(md.xi, y, sol.problem.horizon)?;
            Ok(sol
                .mesh
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let ext = mf.extend(md.v[i].as_slice());
                    fourth_order_derivatives(&ext, h)
                        .into_iter()
                        .enumerate()
                        .map(|(r, (d2, d1))| {
                            let exact = -ext[r + 1] * (md.xi * md.xi) + d2 / (t * t) + d1 * (y[r + 1] / t);
                            md.av[i][r] - exact
                        })
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let p = &sol.problem;
    let mut report = WedgeResidualReport {
        n_y: p.n_y,
        interior: 0.0,
        dirichlet: 0.0,
        neumann: 0.0,
        max_imag: sol.max_imag(),
    };
    for (i, &t) in sol.mesh.iter().enumerate() {
        for &x in &sol.x_grid {
            let phase: Vec<Complex64> = sol.modes.iter().map(|md| Complex64::from_polar(1.0, md.xi * x)).collect();
            for r in 0..n - 1 {
                let s: Complex64 = mode_res.iter().zip(&phase).map(|(mr, ph)| mr[i][r] * ph).sum();
                report.interior = report.interior.max(s.norm());
            }
            let u0 = sol.value(i, x, 0).re;
            report.dirichlet = report.dirichlet.max((u0 - p.g.eval(x, p.half_period)).abs());
            let uy = (sol.value(i, x, n) * 3.0 - sol.value(i, x, n - 1) * 4.0 + sol.value(i, x, n - 2)).re
                / (2.0 * h);
            report.neumann = report.neumann.max((uy - t * p.h.eval(x, p.half_period)).abs());
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualStudy {
    pub rows: Vec<WedgeResidualReport>,
    /// `interior(n_y) / interior(2 n_y)` for consecutive levels.
    pub ratios: Vec<f64>,
}

/// Interior residual at `n_y, 2 n_y, 4 n_y, …` (`levels` solves).
pub fn residual_study(problem: &WedgeProblem, levels: usize) -> Result<ResidualStudy> {
    let rows: Vec<WedgeResidualReport> = (0..levels)
        .map(|l| {
            let p = WedgeProblem { n_y: problem.n_y << l, ..problem.clone() };
            residual_check(&solve_wedge(&p)?)
        })
        .collect::<Result<_>>()?;
    let ratios = rows.windows(2).map(|w| w[0].interior / w[1].interior).collect();
    Ok(ResidualStudy { rows, ratios })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeRegularity {
    pub m: i64,
    pub au_norm: f64,
    pub udot_norm: f64,
    pub f_norm: f64,
}

/// Hölder norms `||.||_inf + [(.)^alpha .]_alpha` of `A v`, `v'` and `f` per mode.
pub fn mode_regularity(sol: &WedgeSolution) -> Result<Vec<ModeRegularity>> {
    let alpha = sol.problem.alpha;
    sol.modes
        .iter()
        .map(|md| {
            let av = GridFunction::new(sol.mesh.clone(), md.av.clone())?;
            let f = GridFunction::new(sol.mesh.clone(), md.f.clone())?;
            let udot = av.combine(1.0, &f, 1.0)?;
            Ok(ModeRegularity {
                m: md.m,
                au_norm: holder_norm(&av, alpha, 0.0)?.norm,
                udot_norm: holder_norm(&udot, alpha, 0.0)?.norm,
                f_norm: holder_norm(&f, alpha, 0.0)?.norm,
            })
        })
        .collect()
}

/// Cubic Lagrange interpolation of a profile on the uniform `y` grid.
fn interp_profile(profile: &[Complex64], eta: f64) -> Complex64 {
    let n = profile.len() - 1;
    let s = eta * n as f64;
    let base = (s.floor() as isize - 1).clamp(0, n as isize - 3) as usize;
    (0..4)
        .map(|a| {
            let w: f64 = (0..4)
                .filter(|&b| b != a)
                .map(|b| (s - (base + b) as f64) / (a as f64 - b as f64))
                .product();
            profile[base + a] * w
        })
        .sum()
}

/// Samples of the original unknown at wedge points `(t, x, y)` with `0 <= y <= t`.
pub fn pull_back(sol: &WedgeSolution, points: &[(f64, f64, f64)]) -> Result<Vec<f64>> {
    let mesh = &sol.mesh;
    let (t_lo, t_hi) = (mesh[0], mesh[mesh.len() - 1]);
    points
        .iter()
        .map(|&(t, x, y)| {
            if !(t >= t_lo && t <= t_hi && y >= 0.0 && y <= t * (1.0 + 1e-14)) {
                return Err(Error::InterpolationOutOfRange(t, y));
            }
            let eta = (y / t).min(1.0);
            let i = mesh.partition_point(|&s| s <= t).clamp(1, mesh.len() - 1) - 1;
            let w = (t - mesh[i]) / (mesh[i + 1] - mesh[i]);
            let v = sol.synthesize(x, |md| {
                interp_profile(&md.profile[i], eta) * (1.0 - w) + interp_profile(&md.profile[i + 1], eta) * w
            });
            Ok(v.re)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PullbackReport {
    pub samples: usize,
    /// `max |u_t - u_xx - u_yy|` by finite differences in the original variables.
    pub interior: f64,
    /// `max |u_y(t,x,t) - h(x)|`
    pub flux: f64,
    /// `max |u(t,x,0) - g(x)|`
    pub dirichlet: f64,
}

/// Checks the unflattened equation and boundary conditions on pulled-back samples.
pub fn pullback_check(sol: &WedgeSolution) -> Result<PullbackReport> {
    let p = &sol.problem;
    let mesh = &sol.mesh;
    let n = sol.y_grid.len() - 1;
    let dx = 1e-3 * p.half_period;
    let mut report = PullbackReport { samples: 0, interior: 0.0, flux: 0.0, dirichlet: 0.0 };
    for i in 1..mesh.len() - 1 {
        let t = 0.5 * (mesh[i] + mesh[i + 1]);
        let dt = 0.25 * (mesh[i + 1] - mesh[i]);
        let dy = t / n as f64;
        for &x in &sol.x_grid {
            for eta in [0.25, 0.5, 0.75] {
                let y = eta * t;
                let pts = [
                    (t, x, y),
                    (t + dt, x, y),
                    (t - dt, x, y),
                    (t, x + dx, y),
                    (t, x - dx, y),
                    (t, x, y + dy),
                    (t, x, y - dy),
                ];
                let u = pull_back(sol, &pts)?;
                let ut = (u[1] - u[2]) / (2.0 * dt);
                let uxx = (u[3] - 2.0 * u[0] + u[4]) / (dx * dx);
                let uyy = (u[5] - 2.0 * u[0] + u[6]) / (dy * dy);
                report.interior = report.interior.max((ut - uxx - uyy).abs());
                report.samples += 1;
            }
            let top = pull_back(sol, &[(t, x, t), (t, x, t - dy), (t, x, t - 2.0 * dy), (t, x, 0.0)])?;
            let uy = (3.0 * top[0] - 4.0 * top[1] + top[2]) / (2.0 * dy);
            report.flux = report.flux.max((uy - p.h.eval(x, p.half_period)).abs());
            report.dirichlet = report.dirichlet.max((top[3] - p.g.eval(x, p.half_period)).abs());
        }
    }
    Ok(report)
}
