//! Evolution operators `U(t,s)` of singular families, built three ways:
//! a Magnus integrator for `dU/dt = A(t) U` (the reference), product
//! integration of the Volterra equation
//! `U(t,s) = e^{(t-s)A(s)} + int_s^t U(t,r) [A(r)-A(s)] e^{(r-s)A(s)} dr`,
//! and Picard iteration for `W(t,s) = U(t,s) - e^{(t-s)A(s)}`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::SingularFamily;
use crate::linops::{c64, expm, matmul, op_norm, CMat, DenseOperator};
use crate::quad::{gauss_legendre, geometric_mesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ode,
    Volterra,
    Fixedpoint,
}

/// `t_j = t_min (T/t_min)^{j/n}`, `j = 0..=n`.
pub fn graded_mesh(t_min: f64, horizon: f64, n: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_min < horizon) || n == 0 {
        return Err(Error::DegenerateMesh);
    }
    Ok(geometric_mesh(t_min, horizon, n))
}

fn check_mesh(family: &SingularFamily, mesh: &[f64]) -> Result<()> {
    if mesh.len() < 2 {
        return Err(Error::DegenerateMesh);
    }
    if !mesh.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::DegenerateMesh);
    }
    if !(mesh[0] > 0.0) {
        return Err(Error::DomainError(mesh[0]));
    }
    let last = mesh[mesh.len() - 1];
    if last > family.horizon() * (1.0 + 1e-12) {
        return Err(Error::DomainError(last));
    }
    Ok(())
}

/// Blocks `U(t_i, t_j)` for `i > j` on a fixed mesh; `U(t_i, t_i) = I`.
#[derive(Clone, Debug)]
pub struct EvolutionGrid {
    mesh: Vec<f64>,
    blocks: BTreeMap<(usize, usize), CMat>,
    method: Method,
    family: SingularFamily,
    tolerance: f64,
    kernel_sup: Option<f64>,
    construction: Construction,
}

#[derive(Clone, Debug)]
enum Construction {
    Ode(OdeConfig),
    Volterra(VolterraConfig),
    Fixedpoint,
}

impl EvolutionGrid {
    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn family(&self) -> &SingularFamily {
        &self.family
    }

    /// Cocycle tolerance this construction is expected to meet.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Largest `(r-s)^{rho-1} ||[A(r)-A(s)] e^{(r-s)A(s)}||` seen by the Volterra solver.
    pub fn kernel_sup(&self) -> Option<f64> {
        self.kernel_sup
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn block(&self, i: usize, j: usize) -> Result<CMat> {
        if i == j && i < self.mesh.len() {
            return Ok(CMat::identity(self.dim(), self.dim()));
        }
        self.blocks.get(&(i, j)).cloned().ok_or(Error::MissingBlock(i, j))
    }

    pub fn block_ref(&self, i: usize, j: usize) -> Option<&CMat> {
        self.blocks.get(&(i, j))
    }

    pub fn operator(&self, i: usize, j: usize) -> Result<DenseOperator> {
        DenseOperator::new(self.block(i, j)?, format!("U({},{})", self.mesh[i], self.mesh[j]))
    }

    /// `U(t, t_j)` for off-mesh `t` in `(t_j, t_{j+1})` by the grid's own
    /// construction (the Magnus reference for fixed-point grids).
    pub fn local_column(&self, j: usize, times: &[f64]) -> Result<Vec<CMat>> {
        let tau = self.mesh[j];
        if times.iter().any(|&t| !(t > tau)) || !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::DegenerateMesh);
        }
        match &self.construction {
            Construction::Volterra(cfg) => times
                .par_iter()
                .map(|&t| Ok(volterra_block(&self.family, tau, t, cfg)?.0))
                .collect(),
            Construction::Ode(cfg) => {
                let mut pts = vec![tau];
                pts.extend_from_slice(times);
                magnus_column(&self.family, &pts, 0, cfg)
            }
            Construction::Fixedpoint => {
                let mut pts = vec![tau];
                pts.extend_from_slice(times);
                magnus_column(&self.family, &pts, 0, &OdeConfig::default())
            }
        }
    }

    /// The grid of `A(t) + cI`: every block picks up `e^{c(t_i - t_j)}`.
    pub fn shifted(&self, c: f64) -> EvolutionGrid {
        let blocks = self
            .blocks
            .iter()
            .map(|(&(i, j), b)| ((i, j), b * c64((c * (self.mesh[i] - self.mesh[j])).exp(), 0.0)))
            .collect();
        EvolutionGrid { blocks, family: self.family.shifted(c), ..self.clone() }
    }

    /// Drops a block, e.g. to exercise downstream error paths.
    pub fn remove_block(&mut self, i: usize, j: usize) -> Option<CMat> {
        self.blocks.remove(&(i, j))
    }

    /// `max ||U(t_i,t_j) U(t_j,t_l) - U(t_i,t_l)||` over stored `i > j > l`.
    pub fn cocycle_defect(&self) -> f64 {
        let n = self.mesh.len();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut worst: f64 = 0.0;
                for j in 0..i {
                    let Some(uij) = self.blocks.get(&(i, j)) else { continue };
                    for l in 0..j {
                        let (Some(ujl), Some(uil)) =
                            (self.blocks.get(&(j, l)), self.blocks.get(&(i, l)))
                        else {
                            continue;
                        };
                        worst = worst.max(op_norm(&(uij * ujl - uil)));
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }

    /// `max ||U_self(t_i,t_j) - U_other(t_i,t_j)||` over blocks stored in both.
    pub fn max_difference(&self, other: &EvolutionGrid) -> f64 {
        self.blocks
            .par_iter()
            .filter_map(|(key, b)| other.blocks.get(key).map(|o| op_norm(&(b - o))))
            .reduce(|| 0.0, f64::max)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeConfig {
    /// Absolute tolerance on each block.
    pub tol: f64,
    /// Optional cap on `||A(t)|| h`.
    pub stiffness_cap: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self { tol: 1e-10, stiffness_cap: None, max_steps: 2_000_000 }
    }
}

const MAGNUS_C: f64 = 0.288_675_134_594_812_9; // sqrt(3)/6

fn magnus_step<G: Fn(f64) -> CMat>(gen: &G, t: f64, h: f64) -> CMat {
    let a1 = gen(t + (0.5 - MAGNUS_C) * h);
    let a2 = gen(t + (0.5 + MAGNUS_C) * h);
    let comm = matmul(&a2, &a1) - matmul(&a1, &a2);
    let omega = (&a1 + &a2) * c64(0.5 * h, 0.0) + comm * c64(MAGNUS_C * 0.5 * h * h, 0.0);
    expm(&omega)
}

/// Propagators of `dY/dt = G(t) Y` from `times[0]` to each later entry,
/// by adaptive fourth-order Magnus steps with step-doubling error control.
pub(crate) fn magnus_path<G: Fn(f64) -> CMat>(
    gen: G,
    times: &[f64],
    cfg: &OdeConfig,
) -> Result<Vec<CMat>> {
    let n = gen(times[0]).nrows();
    let mut y = CMat::identity(n, n);
    let mut t = times[0];
    let mut h = 0.01 * t;
    let mut out = Vec::with_capacity(times.len() - 1);
    let mut steps = 0usize;
    for &target in &times[1..] {
        while t < target {
            let mut hh = h.min(target - t).min(0.25 * t);
            if let Some(cap) = cfg.stiffness_cap {
                hh = hh.min(cap / op_norm(&gen(t)).max(1e-300));
            }
            let last = t + hh >= target * (1.0 - 1e-14);
            let big = magnus_step(&gen, t, hh);
            let half = magnus_step(&gen, t, 0.5 * hh);
            let half2 = magnus_step(&gen, t + 0.5 * hh, 0.5 * hh);
            let fine = matmul(&half2, &half);
            let err = op_norm(&matmul(&(&fine - &big), &y)) / 15.0;
            // below the rounding floor no step size can do better
            let allowed = (cfg.tol * 0.1 * hh / t).max(4.0 * f64::EPSILON * op_norm(&y));
            if err <= allowed || hh < 1e-14 * t {
                if hh < 1e-14 * t && err > allowed {
                    return Err(Error::StepperStall { t, h: hh });
                }
                y = matmul(&fine, &y);
                t = if last { target } else { t + hh };
                steps += 1;
                if steps > cfg.max_steps {
                    return Err(Error::StepperStall { t, h: hh });
                }
            }
            let grow = if err == 0.0 { 4.0 } else { (0.9 * (allowed / err).powf(0.2)).clamp(0.2, 4.0) };
            h = hh * grow;
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn magnus_column(
    family: &SingularFamily,
    mesh: &[f64],
    start: usize,
    cfg: &OdeConfig,
) -> Result<Vec<CMat>> {
    magnus_path(|t| family.eval_matrix(t), &mesh[start..], cfg)
}

/// Reference construction: adaptive fourth-order Magnus integration of
/// `dU/dt = A(t) U` from every mesh point.
pub fn construct_ode(family: &SingularFamily, mesh: &[f64], tol: f64) -> Result<EvolutionGrid> {
    construct_ode_with(family, mesh, &OdeConfig { tol, ..OdeConfig::default() })
}

pub fn construct_ode_with(
    family: &SingularFamily,
    mesh: &[f64],
    cfg: &OdeConfig,
) -> Result<EvolutionGrid> {
    check_mesh(family, mesh)?;
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument("ODE tolerance must be positive".into()));
    }
    let columns: Vec<Vec<CMat>> = (0..mesh.len() - 1)
        .into_par_iter()
        .map(|j| magnus_column(family, mesh, j, cfg))
        .collect::<Result<_>>()?;
    let mut blocks = BTreeMap::new();
    for (j, col) in columns.into_iter().enumerate() {
        for (off, b) in col.into_iter().enumerate() {
            blocks.insert((j + 1 + off, j), b);
        }
    }
    Ok(EvolutionGrid {
        mesh: mesh.to_vec(),
        blocks,
        method: Method::Ode,
        family: family.clone(),
        tolerance: 1e-8,
        kernel_sup: None,
        construction: Construction::Ode(cfg.clone()),
    })
}

/// All blocks from the adjacent ones by the evolution property.
fn compose_adjacent(adjacent: &[CMat]) -> BTreeMap<(usize, usize), CMat> {
    let n = adjacent.len() + 1;
    let cols: Vec<Vec<((usize, usize), CMat)>> = (0..n - 1)
        .into_par_iter()
        .map(|j| {
            let mut acc = adjacent[j].clone();
            let mut col = vec![((j + 1, j), acc.clone())];
            for i in j + 2..n {
                acc = matmul(&adjacent[i - 1], &acc);
                col.push(((i, j), acc.clone()));
            }
            col
        })
        .collect();
    cols.into_iter().flatten().collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolterraConfig {
    /// Sub-panels per mesh interval; 0 picks a count from the interval length.
    pub subpanels: usize,
    /// Gauss nodes per sub-panel.
    pub gauss: usize,
    /// Exponent used in the kernel envelope `(r-s)^{1-rho}`.
    pub rho: f64,
    /// Envelope constant; when set, a kernel exceeding `blowup_factor` times
    /// the envelope aborts with `KernelBlowup`.
    pub envelope: Option<f64>,
    pub blowup_factor: f64,
    /// Combine runs with `m` and `2m` sub-panels to cancel the `m^-2` error term.
    pub extrapolate: bool,
}

impl Default for VolterraConfig {
    fn default() -> Self {
        Self {
            subpanels: 0,
            gauss: 3,
            rho: 1.5,
            envelope: None,
            blowup_factor: 10.0,
            extrapolate: true,
        }
    }
}

fn auto_subpanels(a: f64, b: f64) -> usize {
    ((b - a) / a * 150.0).ceil().clamp(8.0, 64.0) as usize
}

fn volterra_block(family: &SingularFamily, a: f64, b: f64, cfg: &VolterraConfig) -> Result<(CMat, f64)> {
    let m = if cfg.subpanels == 0 { auto_subpanels(a, b) } else { cfg.subpanels };
    if !cfg.extrapolate {
        return volterra_interval(family, a, b, m, cfg);
    }
    let (coarse, _) = volterra_interval(family, a, b, m, cfg)?;
    let (fine, ksup) = volterra_interval(family, a, b, 2 * m, cfg)?;
    Ok(((fine * c64(4.0, 0.0) - coarse) * c64(1.0 / 3.0, 0.0), ksup))
}

/// `U(b, a)` from the Volterra equation with fixed end point `b`, marching
/// the start point down from `b` to `a`.
///
/// On each sub-panel `[r_{q-1}, r_q]` the unknown is interpolated as
/// `U(b, r) ~ U(b, r_q) e^{(r_q - r) A(r_q)}`, which is exact for a constant
/// generator and keeps stiff components bounded.
fn volterra_interval(
    family: &SingularFamily,
    a: f64,
    b: f64,
    m: usize,
    cfg: &VolterraConfig,
) -> Result<(CMat, f64)> {
    let n = family.dim();
    let h = (b - a) / m as f64;
    let nodes: Vec<f64> = (0..=m).map(|p| if p == m { b } else { a + p as f64 * h }).collect();
    let gl: Vec<(f64, f64)> = gauss_legendre(cfg.gauss)
        .into_iter()
        .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    let gens: Vec<CMat> = nodes.iter().map(|&r| family.eval_matrix(r)).collect();

    // left[q][g] = e^{(1 - x_g) h A(r_q)}
    let left: Vec<Vec<CMat>> = (0..=m)
        .into_par_iter()
        .map(|q| {
            if q == 0 {
                vec![]
            } else {
                gl.iter().map(|&(x, _)| expm(&(&gens[q] * c64((1.0 - x) * h, 0.0)))).collect()
            }
        })
        .collect();

    // right[p][j][g] = e^{(j + x_g) h A(r_p)}, full[p] = e^{(b - r_p) A(r_p)}
    struct Right {
        right: Vec<Vec<CMat>>,
        full: CMat,
    }
    let rights: Vec<Right> = (0..m)
        .into_par_iter()
        .map(|p| {
            let step = expm(&(&gens[p] * c64(h, 0.0)));
            let frac: Vec<CMat> =
                gl.iter().map(|&(x, _)| expm(&(&gens[p] * c64(x * h, 0.0)))).collect();
            let mut pow = CMat::identity(n, n);
            let mut right = Vec::with_capacity(m - p);
            for _ in 0..m - p {
                right.push(frac.iter().map(|f| matmul(&pow, f)).collect());
                pow = matmul(&step, &pow);
            }
            Right { right, full: pow }
        })
        .collect();

    // With X = U(b, r_q) e^{(1-x)h A(r_q)} w h, the panel term is
    // X (A(r) - A(r_p)) R = X A(r) R - (X R) A(r_p), R commuting with A(r_p).
    let weighted = |xq: &CMat, q: usize| -> Vec<(CMat, CMat)> {
        gl.iter()
            .enumerate()
            .map(|(g, &(x, w))| {
                let xg = matmul(xq, &left[q][g]) * c64(w * h, 0.0);
                let yg = matmul(&xg, &family.eval_matrix(nodes[q - 1] + x * h));
                (xg, yg)
            })
            .collect()
    };
    let mut xs: Vec<CMat> = vec![CMat::zeros(n, n); m + 1];
    xs[m] = CMat::identity(n, n);
    let mut xy: Vec<Vec<(CMat, CMat)>> = vec![vec![]; m + 1];
    xy[m] = weighted(&xs[m], m);
    let mut kernel_sup: f64 = 0.0;
    for p in (0..m).rev() {
        let rp = nodes[p];
        let mut s_x = CMat::zeros(n, n);
        let mut s_y = CMat::zeros(n, n);
        for q in p + 1..=m {
            for (g, (xg, yg)) in xy[q].iter().enumerate() {
                let r = &rights[p].right[q - 1 - p][g];
                s_x += matmul(xg, r);
                s_y += matmul(yg, r);
            }
        }
        for (g, &(x, _)) in gl.iter().enumerate() {
            let r = nodes[p] + x * h;
            let kern = family.diff(r, rp) * &rights[p].right[0][g];
            kernel_sup = kernel_sup.max(op_norm(&kern) * (r - rp).powf(cfg.rho - 1.0));
        }
        if let Some(env) = cfg.envelope {
            if kernel_sup > cfg.blowup_factor * env {
                return Err(Error::KernelBlowup { s: rp, norm: kernel_sup, envelope: env });
            }
        }
        xs[p] = &rights[p].full + s_y - matmul(&s_x, &gens[p]);
        if p > 0 {
            xy[p] = weighted(&xs[p], p);
        }
    }
    Ok((xs.swap_remove(0), kernel_sup))
}

/// Product integration of the Volterra equation on each mesh interval; longer
/// blocks follow from the evolution property.
pub fn construct_volterra(family: &SingularFamily, mesh: &[f64]) -> Result<EvolutionGrid> {
    construct_volterra_with(family, mesh, &VolterraConfig::default())
}

pub fn construct_volterra_with(
    family: &SingularFamily,
    mesh: &[f64],
    cfg: &VolterraConfig,
) -> Result<EvolutionGrid> {
    check_mesh(family, mesh)?;
    if cfg.gauss == 0 {
        return Err(Error::InvalidArgument("need at least one Gauss node".into()));
    }
    let pieces: Vec<(CMat, f64)> = mesh
        .par_windows(2)
        .map(|w| volterra_block(family, w[0], w[1], cfg))
        .collect::<Result<_>>()?;
    let kernel_sup = pieces.iter().map(|p| p.1).fold(0.0, f64::max);
    let adjacent: Vec<CMat> = pieces.into_iter().map(|p| p.0).collect();
    Ok(EvolutionGrid {
        mesh: mesh.to_vec(),
        blocks: compose_adjacent(&adjacent),
        method: Method::Volterra,
        family: family.clone(),
        tolerance: 1e-6,
        kernel_sup: Some(kernel_sup),
        construction: Construction::Volterra(cfg.clone()),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointConfig {
    pub maxiter: usize,
    /// Stop when successive iterates differ by less than this (sup norm).
    pub tol: f64,
    /// Largest `h ||A(s)||` of the inner exponential integrator.
    pub stiffness_step: f64,
    /// Largest accepted contraction estimate.
    pub max_contraction: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self { maxiter: 200, tol: 1e-12, stiffness_step: 0.2, max_contraction: 0.9 }
    }
}

/// Trajectory of `W(t,s) x = U(t,s) x - e^{(t-s)A(s)} x`.
#[derive(Clone, Debug)]
pub struct FixedPointResult {
    pub mesh: Vec<f64>,
    /// `W(t_k, s) x` at each mesh point.
    pub w: Vec<CMat>,
    /// `U(t_k, s) x` at each mesh point.
    pub u: Vec<CMat>,
    pub iterations: usize,
    pub contraction_estimate: f64,
    pub increments: Vec<f64>,
}

/// `e^X`, `phi_1(X)`, `phi_2(X)` from one augmented exponential.
pub(crate) fn phi_functions(x: &CMat) -> (CMat, CMat, CMat) {
    let n = x.nrows();
    let mut big = CMat::zeros(3 * n, 3 * n);
    big.view_mut((0, 0), (n, n)).copy_from(x);
    for i in 0..n {
        big[(i, n + i)] = c64(1.0, 0.0);
        big[(n + i, 2 * n + i)] = c64(1.0, 0.0);
    }
    let e = expm(&big);
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
        e.view((0, 2 * n), (n, n)).into_owned(),
    )
}

type Forcing<'a> = Option<&'a (dyn Fn(f64) -> CMat + Sync)>;

struct Frozen {
    times: Vec<f64>,
    /// indices into `times` of the requested mesh points
    marks: Vec<usize>,
    free: Vec<CMat>,
    diffs: Vec<CMat>,
    forcing: Vec<CMat>,
    e: Vec<CMat>,
    p1: Vec<CMat>,
    p2: Vec<CMat>,
}

fn frozen_setup(
    family: &SingularFamily,
    s: f64,
    x: &CMat,
    mesh: &[f64],
    refine: usize,
    cfg: &FixedPointConfig,
    f: Forcing,
) -> Frozen {
    let a_s = family.eval_matrix(s);
    let norm = op_norm(&a_s);
    let mut times = vec![s];
    let mut marks = vec![];
    let mut lo = s;
    for &hi in mesh {
        let k = (((hi - lo) * norm / cfg.stiffness_step).ceil() as usize).max(4) * refine;
        for i in 1..=k {
            times.push(if i == k { hi } else { lo + (hi - lo) * i as f64 / k as f64 });
        }
        marks.push(times.len() - 1);
        lo = hi;
    }
    // steps are uniform within each mesh interval, so the phi functions are
    // shared by runs of equal length
    let mut e = Vec::with_capacity(times.len() - 1);
    let mut p1 = Vec::with_capacity(times.len() - 1);
    let mut p2 = Vec::with_capacity(times.len() - 1);
    let mut cache: Option<(f64, (CMat, CMat, CMat))> = None;
    for w in times.windows(2) {
        let h = w[1] - w[0];
        let hit = matches!(&cache, Some((hc, _)) if ((hc - h) / h).abs() < 1e-12);
        if !hit {
            cache = Some((h, phi_functions(&(&a_s * c64(h, 0.0)))));
        }
        let (_, (ee, f1, f2)) = cache.as_ref().unwrap();
        e.push(ee.clone());
        p1.push(f1 * c64(h, 0.0));
        p2.push(f2 * c64(h, 0.0));
    }
    let free: Vec<CMat> = times
        .par_iter()
        .map(|&t| expm(&(&a_s * c64(t - s, 0.0))) * x)
        .collect();
    let diffs: Vec<CMat> = times.iter().map(|&t| family.diff(t, s)).collect();
    let forcing: Vec<CMat> = match f {
        Some(f) => times.iter().map(|&t| f(t)).collect(),
        None => vec![CMat::zeros(x.nrows(), x.ncols()); times.len()],
    };
    Frozen { times, marks, free, diffs, forcing, e, p1, p2 }
}

/// One application of the fixed-point map on the fine grid.
fn frozen_sweep(fz: &Frozen, v: &[CMat]) -> Vec<CMat> {
    let g: Vec<CMat> = (0..fz.times.len())
        .map(|k| &fz.diffs[k] * (&v[k] + &fz.free[k]) + &fz.forcing[k])
        .collect();
    let mut w = Vec::with_capacity(fz.times.len());
    w.push(CMat::zeros(v[0].nrows(), v[0].ncols()));
    for k in 0..fz.times.len() - 1 {
        let next = &fz.e[k] * &w[k] + &fz.p1[k] * &g[k] + &fz.p2[k] * (&g[k + 1] - &g[k]);
        w.push(next);
    }
    w
}

fn sup_dist(a: &[CMat], b: &[CMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn picard(
    family: &SingularFamily,
    s: f64,
    x: &CMat,
    mesh: &[f64],
    refine: usize,
    cfg: &FixedPointConfig,
    f: Forcing,
) -> Result<(Vec<CMat>, usize, Vec<f64>, Vec<CMat>)> {
    let fz = frozen_setup(family, s, x, mesh, refine, cfg, f);
    let mut v = vec![CMat::zeros(x.nrows(), x.ncols()); fz.times.len()];
    let mut increments = vec![];
    for it in 1..=cfg.maxiter {
        let next = frozen_sweep(&fz, &v);
        let d = sup_dist(&next, &v);
        v = next;
        if let Some(&prev) = increments.last() {
            if it > 3 && d > prev && d > cfg.tol {
                return Err(Error::NoContraction(d / prev));
            }
        }
        increments.push(d);
        if d <= cfg.tol {
            let at = |k: &usize| v[*k].clone();
            let w = fz.marks.iter().map(at).collect();
            let free = fz.marks.iter().map(|k| fz.free[*k].clone()).collect();
            return Ok((w, it, increments, free));
        }
    }
    let n = increments.len();
    Err(Error::NoContraction(increments[n - 1] / increments[n - 2].max(1e-300)))
}

/// `sup_r ||[A(r) - A(s)] A(s)^{-1}||` over `(s, s + delta]`.
pub fn contraction_estimate(family: &SingularFamily, s: f64, end: f64) -> Result<f64> {
    let inv = family.inverse_at(s)?;
    let mut q: f64 = 0.0;
    for i in 1..=32 {
        let r = s + (end - s) * i as f64 / 32.0;
        q = q.max(op_norm(&(family.diff(r, s) * &inv)));
    }
    Ok(q)
}

/// Picard iteration for `W(.,s) x` on `(s, s + delta]`: each sweep solves
/// `w' = A(s) w + [A(t) - A(s)](v + e^{(t-s)A(s)} x) + f` by a second-order
/// exponential integrator, with Richardson extrapolation over two step sizes.
pub fn construct_fixedpoint(
    family: &SingularFamily,
    s: f64,
    x: &CMat,
    mesh: &[f64],
    cfg: &FixedPointConfig,
) -> Result<FixedPointResult> {
    construct_fixedpoint_forced(family, s, x, mesh, cfg, None)
}

pub fn construct_fixedpoint_forced(
    family: &SingularFamily,
    s: f64,
    x: &CMat,
    mesh: &[f64],
    cfg: &FixedPointConfig,
    f: Forcing,
) -> Result<FixedPointResult> {
    if mesh.is_empty() || !(mesh[0] > s) || !mesh.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::DegenerateMesh);
    }
    if !(s > 0.0) {
        return Err(Error::DomainError(s));
    }
    let end = mesh[mesh.len() - 1];
    if end > family.horizon() * (1.0 + 1e-12) {
        return Err(Error::DomainError(end));
    }
    let q = contraction_estimate(family, s, end)?;
    if !(q < cfg.max_contraction) {
        return Err(Error::NoContraction(q));
    }
    let (coarse, _, _, _) = picard(family, s, x, mesh, 1, cfg, f)?;
    let (fine, iterations, increments, free) = picard(family, s, x, mesh, 2, cfg, f)?;
    let w: Vec<CMat> = fine
        .iter()
        .zip(&coarse)
        .map(|(a, b)| (a * c64(4.0, 0.0) - b) * c64(1.0 / 3.0, 0.0))
        .collect();
    let u = w.iter().zip(&free).map(|(a, b)| a + b).collect();
    Ok(FixedPointResult {
        mesh: mesh.to_vec(),
        w,
        u,
        iterations,
        contraction_estimate: q,
        increments,
    })
}

/// Adjacent blocks by the fixed-point route, each interval split into
/// geometric windows small enough for the contraction estimate.
pub fn construct_fixedpoint_grid(
    family: &SingularFamily,
    mesh: &[f64],
    cfg: &FixedPointConfig,
) -> Result<EvolutionGrid> {
    check_mesh(family, mesh)?;
    let n = family.dim();
    let adjacent: Vec<CMat> = mesh
        .par_windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let mut pieces = 1usize;
            loop {
                let edges = geometric_mesh(a, b, pieces);
                let ok = edges
                    .windows(2)
                    .map(|e| contraction_estimate(family, e[0], e[1]))
                    .collect::<Result<Vec<f64>>>()?
                    .into_iter()
                    .all(|q| q < 0.5);
                if ok {
                    break;
                }
                pieces *= 2;
                if pieces > 1 << 12 {
                    return Err(Error::NoContraction(1.0));
                }
            }
            let edges = geometric_mesh(a, b, pieces);
            let mut acc = CMat::identity(n, n);
            for e in edges.windows(2) {
                let sub = geometric_mesh(e[0], e[1], 4);
                let res = construct_fixedpoint(family, e[0], &acc, &sub[1..], cfg)?;
                acc = res.u[res.u.len() - 1].clone();
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(EvolutionGrid {
        mesh: mesh.to_vec(),
        blocks: compose_adjacent(&adjacent),
        method: Method::Fixedpoint,
        family: family.clone(),
        tolerance: 1e-6,
        kernel_sup: None,
        construction: Construction::Fixedpoint,
    })
}

pub fn construct(family: &SingularFamily, mesh: &[f64], method: Method) -> Result<EvolutionGrid> {
    match method {
        Method::Ode => construct_ode(family, mesh, OdeConfig::default().tol),
        Method::Volterra => construct_volterra(family, mesh),
        Method::Fixedpoint => construct_fixedpoint_grid(family, mesh, &FixedPointConfig::default()),
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundSample {
    pub t: f64,
    pub tau: f64,
    /// `(t - tau)^{rho-1} ||A(tau) W(t,tau)||`
    pub partial: f64,
    /// `(t - tau) ||A(tau) U(t,tau)||`
    pub full: f64,
    pub u_norm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecadeRow {
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub partial_sup: f64,
    pub full_sup: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SingularBoundsReport {
    pub rho: f64,
    pub partial_sup: f64,
    pub full_sup: f64,
    pub decades: Vec<DecadeRow>,
    /// Largest relative change of the sup over `[tau_0, T]` when `tau_0`
    /// moves down by one decade.
    pub partial_decade_change: f64,
    pub full_decade_change: f64,
    /// `(tau, ||U(T, tau)||)` for every mesh point below `T`.
    pub u_decay: Vec<(f64, f64)>,
    /// `||U(T, t_min)|| / ||U(T, T/2)||`, the second at the nearest mesh point.
    pub decay_ratio: f64,
    /// Pairs violating `||U(t,tau)|| <= ||A^{-1}(tau)|| c / (t - tau)` with `c = full_sup`.
    pub bound_violations: usize,
    pub pass: bool,
    #[serde(skip)]
    pub samples: Vec<BoundSample>,
}

fn relative_change(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        0.0
    } else {
        (a / b).max(b / a) - 1.0
    }
}

const LOCAL_SAMPLES: usize = 28;

/// Sups of both bound estimands over the stored blocks and over off-mesh
/// points in the first interval after each `tau`.
pub fn verify_singular_bounds(grid: &EvolutionGrid, rho: f64) -> Result<SingularBoundsReport> {
    let mesh = grid.mesh();
    let fam = grid.family();
    let n = mesh.len();
    let gens: Vec<CMat> = mesh.iter().map(|&t| fam.eval_matrix(t)).collect();
    let inv_norms: Vec<f64> = mesh
        .iter()
        .map(|&t| Ok(op_norm(&fam.inverse_at(t)?)))
        .collect::<Result<_>>()?;
    let sample = |j: usize, t: f64, u: &CMat| {
        let tau = mesh[j];
        let frozen = expm(&(&gens[j] * c64(t - tau, 0.0)));
        let w = u - frozen;
        BoundSample {
            t,
            tau,
            partial: (t - tau).powf(rho - 1.0) * op_norm(&(&gens[j] * &w)),
            full: (t - tau) * op_norm(&(&gens[j] * u)),
            u_norm: op_norm(u),
        }
    };
    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
    let mut samples: Vec<BoundSample> = pairs
        .par_iter()
        .map(|&(i, j)| Ok(sample(j, mesh[i], &grid.block(i, j)?)))
        .collect::<Result<_>>()?;
    // The estimands peak where t - tau is of the order of 1/||A(tau)||, well
    // inside the first mesh interval, so each column is also sampled there.
    let local: Vec<Vec<BoundSample>> = (0..n - 1)
        .into_par_iter()
        .map(|j| {
            let gap = mesh[j + 1] - mesh[j];
            let times: Vec<f64> =
                (1..=LOCAL_SAMPLES).rev().map(|m| mesh[j] + gap * 10f64.powf(-0.25 * m as f64)).collect();
            let us = grid.local_column(j, &times)?;
            Ok(times.iter().zip(&us).map(|(&t, u)| sample(j, t, u)).collect())
        })
        .collect::<Result<_>>()?;
    samples.extend(local.into_iter().flatten());

    let partial_sup = samples.iter().map(|s| s.partial).fold(0.0, f64::max);
    let full_sup = samples.iter().map(|s| s.full).fold(0.0, f64::max);

    let t_min = mesh[0];
    let ndec = ((mesh[n - 1] / t_min).log10() - 1e-9).ceil().max(1.0) as usize;
    let mut decades: Vec<DecadeRow> = (0..ndec)
        .map(|d| DecadeRow {
            tau_lo: t_min * 10f64.powi(d as i32),
            tau_hi: t_min * 10f64.powi(d as i32 + 1),
            partial_sup: 0.0,
            full_sup: 0.0,
        })
        .collect();
    for s in &samples {
        let d = (((s.tau / t_min).log10() + 1e-9).floor() as usize).min(ndec - 1);
        decades[d].partial_sup = decades[d].partial_sup.max(s.partial);
        decades[d].full_sup = decades[d].full_sup.max(s.full);
    }
    // constants fitted on [tau_0, T] as tau_0 moves down one decade at a time
    let (mut partial_decade_change, mut full_decade_change) = (0.0f64, 0.0f64);
    let (mut cum_p, mut cum_f) = (0.0f64, 0.0f64);
    for (k, row) in decades.iter().enumerate().rev() {
        let (np, nf) = (cum_p.max(row.partial_sup), cum_f.max(row.full_sup));
        if k + 1 < decades.len() {
            partial_decade_change = partial_decade_change.max(relative_change(np, cum_p));
            full_decade_change = full_decade_change.max(relative_change(nf, cum_f));
        }
        cum_p = np;
        cum_f = nf;
    }

    let top = n - 1;
    let u_decay: Vec<(f64, f64)> = (0..top)
        .map(|j| Ok((mesh[j], op_norm(&grid.block(top, j)?))))
        .collect::<Result<_>>()?;
    let half = mesh[top] / 2.0;
    let j_half = (0..top)
        .min_by(|&a, &b| (mesh[a] - half).abs().total_cmp(&(mesh[b] - half).abs()))
        .unwrap_or(0);
    let decay_ratio = u_decay[0].1 / u_decay[j_half].1;

    let index_of = |tau: f64| mesh.iter().position(|&m| m == tau).unwrap();
    let bound_violations = samples
        .iter()
        .filter(|s| s.u_norm > inv_norms[index_of(s.tau)] * full_sup / (s.t - s.tau) * (1.0 + 1e-9))
        .count();

    let pass = partial_sup.is_finite()
        && full_sup.is_finite()
        && partial_decade_change < 0.25
        && full_decade_change < 0.25
        && decay_ratio < 1e-6
        && bound_violations == 0;
    Ok(SingularBoundsReport {
        rho,
        partial_sup,
        full_sup,
        decades,
        partial_decade_change,
        full_decade_change,
        u_decay,
        decay_ratio,
        bound_violations,
        pass,
        samples,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub tau: f64,
    /// `max_i (t - tau)(|l_i| / tau^beta) exp(-|l_i| int_tau^t s^-beta ds)`
    pub sup: f64,
    pub argmax_eig: f64,
    /// The same maximum taken over all `|l| > 0`: `(t - tau) / (e tau^beta I)`.
    pub envelope: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CounterexampleTable {
    pub beta: f64,
    pub t: f64,
    pub rows: Vec<CounterexampleRow>,
    /// `sup` at the smallest `tau` over `sup` at the largest.
    pub growth: f64,
    /// Largest `max(sup/envelope, envelope/sup)` over the rows.
    pub envelope_mismatch: f64,
}

fn singular_integral(beta: f64, tau: f64, t: f64) -> f64 {
    if (beta - 1.0).abs() < 1e-14 {
        (t / tau).ln()
    } else {
        (t.powf(1.0 - beta) - tau.powf(1.0 - beta)) / (1.0 - beta)
    }
}

/// `(t - tau) ||A(tau) U(t, tau)||` for `A(t) = diag(eigs) / t^beta`, where
/// `U(t,tau) = exp(diag(eigs) int_tau^t s^-beta ds)` in closed form.
pub fn counterexample_scan(
    eigs: &[f64],
    beta: f64,
    t: f64,
    tau_grid: &[f64],
) -> Result<CounterexampleTable> {
    if eigs.is_empty() || eigs.iter().any(|&l| !(l < 0.0)) {
        return Err(Error::InvalidArgument("eigenvalues must be negative".into()));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!("beta = {beta} must lie in (0, 1]")));
    }
    if tau_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut taus = tau_grid.to_vec();
    taus.sort_by(|a, b| b.total_cmp(a));
    let mut rows = vec![];
    for &tau in &taus {
        if !(tau > 0.0 && tau < t) {
            return Err(Error::DomainError(tau));
        }
        let integral = singular_integral(beta, tau, t);
        let (mut sup, mut arg) = (0.0, eigs[0]);
        for &l in eigs {
            let v = (t - tau) * (l.abs() / tau.powf(beta)) * (-l.abs() * integral).exp();
            if v > sup {
                sup = v;
                arg = l;
            }
        }
        let envelope = (t - tau) / (std::f64::consts::E * tau.powf(beta) * integral);
        rows.push(CounterexampleRow { tau, sup, argmax_eig: arg, envelope });
    }
    let growth = rows[rows.len() - 1].sup / rows[0].sup;
    let envelope_mismatch = rows
        .iter()
        .map(|r| (r.sup / r.envelope).max(r.envelope / r.sup))
        .fold(0.0, f64::max);
    Ok(CounterexampleTable { beta, t, rows, growth, envelope_mismatch })
}
