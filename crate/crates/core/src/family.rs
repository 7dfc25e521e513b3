//! Singular generator families `A(t) = B + C(t)/t^k` on `(0, T]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{c64, op_norm, spectral_bound, CMat, DenseOperator};
use crate::semigroup::{frac_power_inv, FractionalRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Prototype,
    Power,
    WedgeMode,
}

/// `A(t) = B + C(t)/t^k` with `C(t) = sum_p C_p t^p`.
#[derive(Clone, Debug)]
pub struct SingularFamily {
    b: CMat,
    c_coeffs: Vec<CMat>,
    k: f64,
    horizon: f64,
    kind: FamilyKind,
}

impl SingularFamily {
    pub fn new(
        b: DenseOperator,
        c_coeffs: Vec<DenseOperator>,
        k: f64,
        horizon: f64,
        kind: FamilyKind,
    ) -> Result<Self> {
        if c_coeffs.is_empty() {
            return Err(Error::InvalidArgument("C needs at least one coefficient".into()));
        }
        let n = b.dim();
        if let Some(bad) = c_coeffs.iter().find(|c| c.dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: bad.dim() });
        }
        if !(k > 0.0) || !(horizon > 0.0) {
            return Err(Error::InvalidArgument("need k > 0 and T > 0".into()));
        }
        Ok(Self {
            b: b.into_matrix(),
            c_coeffs: c_coeffs.into_iter().map(DenseOperator::into_matrix).collect(),
            k,
            horizon,
            kind,
        })
    }

    /// `B + C/t^k` with constant `C`.
    pub fn prototype(b: DenseOperator, c: DenseOperator, k: f64, horizon: f64) -> Result<Self> {
        Self::new(b, vec![c], k, horizon, FamilyKind::Prototype)
    }

    /// `A/t^beta`.
    pub fn power(a: DenseOperator, beta: f64, horizon: f64) -> Result<Self> {
        let n = a.dim();
        let zero = DenseOperator::new(CMat::zeros(n, n), "0")?;
        Self::new(zero, vec![a], beta, horizon, FamilyKind::Power)
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// The family with `B` replaced by `B + cI`.
    pub fn shifted(&self, c: f64) -> Self {
        let n = self.dim();
        Self { b: &self.b + CMat::identity(n, n) * c64(c, 0.0), ..self.clone() }
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn b(&self) -> &CMat {
        &self.b
    }

    pub fn c_coeffs(&self) -> &[CMat] {
        &self.c_coeffs
    }

    pub fn is_real(&self) -> bool {
        std::iter::once(&self.b)
            .chain(&self.c_coeffs)
            .all(|m| m.iter().all(|z| z.im == 0.0))
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t > 0.0 && t <= self.horizon * (1.0 + 1e-12) {
            Ok(())
        } else {
            Err(Error::DomainError(t))
        }
    }

    pub fn c_at(&self, t: f64) -> CMat {
        let mut c = self.c_coeffs[0].clone();
        let mut tp = 1.0;
        for cp in &self.c_coeffs[1..] {
            tp *= t;
            c += cp * c64(tp, 0.0);
        }
        c
    }

    /// `A(t)` without the domain check.
    pub fn eval_matrix(&self, t: f64) -> CMat {
        &self.b + self.c_at(t) * c64(t.powf(-self.k), 0.0)
    }

    pub fn eval(&self, t: f64) -> Result<DenseOperator> {
        self.check_time(t)?;
        DenseOperator::new(self.eval_matrix(t), format!("A({t})"))
    }

    /// `A(t) - A(s)`, formed without the constant part so nearby times do not cancel.
    pub fn diff(&self, t: f64, s: f64) -> CMat {
        let n = self.dim();
        let mut d = CMat::zeros(n, n);
        for (p, cp) in self.c_coeffs.iter().enumerate() {
            let e = p as f64 - self.k;
            let w = t.powf(e) - s.powf(e);
            if w != 0.0 {
                d += cp * c64(w, 0.0);
            }
        }
        d
    }

    pub fn inverse_at(&self, t: f64) -> Result<CMat> {
        self.eval_matrix(t)
            .try_inverse()
            .ok_or(Error::NearSingular { lambda: c64(0.0, 0.0), cond: f64::INFINITY })
    }

    /// `Q^* A(t) Q` for every `t`.
    pub fn conjugated(&self, q: &CMat) -> Self {
        let qa = q.adjoint();
        Self {
            b: &qa * &self.b * q,
            c_coeffs: self.c_coeffs.iter().map(|c| &qa * c * q).collect(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Constant(DenseOperator),
    Polynomial(Vec<DenseOperator>),
}

/// JSON family declaration, e.g. `{"kind":"prototype","B":…,"C":…,"k":2,"T":1}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    Prototype {
        #[serde(rename = "B")]
        b: DenseOperator,
        #[serde(rename = "C")]
        c: CoefficientSpec,
        k: f64,
        #[serde(rename = "T")]
        horizon: f64,
    },
    Power {
        #[serde(rename = "A")]
        a: DenseOperator,
        beta: f64,
        #[serde(rename = "T")]
        horizon: f64,
    },
    WedgeMode {
        xi: f64,
        n_y: usize,
        #[serde(rename = "T")]
        horizon: f64,
    },
}

impl FamilySpec {
    pub fn build(&self) -> Result<SingularFamily> {
        match self {
            FamilySpec::Prototype { b, c, k, horizon } => {
                let coeffs = match c {
                    CoefficientSpec::Constant(c) => vec![c.clone()],
                    CoefficientSpec::Polynomial(cs) => cs.clone(),
                };
                SingularFamily::new(b.clone(), coeffs, *k, *horizon, FamilyKind::Prototype)
            }
            FamilySpec::Power { a, beta, horizon } => {
                SingularFamily::power(a.clone(), *beta, *horizon)
            }
            FamilySpec::WedgeMode { xi, n_y, horizon } => {
                let y = crate::wedge::uniform_y_grid(*n_y)?;
                Ok(crate::wedge::assemble_mode_family(*xi, &y, *horizon)?.family)
            }
        }
    }
}

/// Geometric grid `t_j = T q^j` down to `t_min`, returned ascending.
pub fn geometric_grid(horizon: f64, q: f64, t_min: f64) -> Vec<f64> {
    let mut g = vec![];
    let mut t = horizon;
    while t >= t_min * (1.0 - 1e-12) {
        g.push(t);
        t *= q;
    }
    g.reverse();
    g
}

/// Doubles the density of a geometric grid by inserting geometric midpoints.
pub fn refine_grid(grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * grid.len());
    for w in grid.windows(2) {
        out.push(w[0]);
        out.push((w[0] * w[1]).sqrt());
    }
    if let Some(&last) = grid.last() {
        out.push(last);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub tau: f64,
    pub s: f64,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleSample {
    pub triple: Triple,
    /// `||[A(t)-A(s)] A^{-1}(tau)|| t/(t-s)`
    pub c1: f64,
    /// `||[A(t)-A(s)] (-A(tau))^{-rho}|| / (t-s)`
    pub c2: f64,
}

/// Adjacent triples (with `tau = s` and `tau` one step below) plus `pairs`
/// random ordered triples. `grid` is ascending.
pub fn sample_triples(grid: &[f64], pairs: usize, seed: u64) -> Vec<(usize, usize, usize)> {
    let n = grid.len();
    let mut out = vec![];
    for j in 0..n.saturating_sub(1) {
        out.push((j, j, j + 1));
        if j >= 1 {
            out.push((j - 1, j, j + 1));
        }
    }
    if n >= 2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..pairs {
            let mut idx = [rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n)];
            idx.sort_unstable();
            if idx[1] == idx[2] {
                if idx[2] + 1 < n {
                    idx[2] += 1;
                } else {
                    idx[1] -= 1;
                    idx[0] = idx[0].min(idx[1]);
                }
            }
            out.push((idx[0], idx[1], idx[2]));
        }
    }
    out
}

struct Sweep {
    samples: Vec<TripleSample>,
    c1: f64,
    c2: f64,
    worst_c1: Triple,
    worst_c2: Triple,
    c1_outer: f64,
    c2_outer: f64,
}

/// Evaluates both estimands on the sampled triples of `grid`.
///
/// `*_outer` are the sups restricted to `tau >= 10 t_min`, i.e. with the
/// last decade toward the origin removed.
fn sweep(family: &SingularFamily, rho: f64, grid: &[f64], pairs: usize, seed: u64) -> Result<Sweep> {
    let inv: Vec<CMat> = grid
        .par_iter()
        .map(|&t| family.inverse_at(t))
        .collect::<Result<_>>()?;
    let rule = FractionalRule::default();
    let frac: Vec<CMat> = grid
        .par_iter()
        .map(|&t| Ok(frac_power_inv(&family.eval(t)?, rho, &rule)?.into_matrix()))
        .collect::<Result<_>>()?;
    let triples = sample_triples(grid, pairs, seed);
    let samples: Vec<TripleSample> = triples
        .par_iter()
        .map(|&(i, j, l)| {
            let (tau, s, t) = (grid[i], grid[j], grid[l]);
            let d = family.diff(t, s);
            TripleSample {
                triple: Triple { tau, s, t },
                c1: op_norm(&(&d * &inv[i])) * t / (t - s),
                c2: op_norm(&(&d * &frac[i])) / (t - s),
            }
        })
        .collect();
    let cut = 10.0 * grid[0] * (1.0 - 1e-12);
    let first = Triple { tau: grid[0], s: grid[0], t: grid[0] };
    let mut sw = Sweep {
        samples: vec![],
        c1: 0.0,
        c2: 0.0,
        worst_c1: first,
        worst_c2: first,
        c1_outer: 0.0,
        c2_outer: 0.0,
    };
    for smp in &samples {
        if !(smp.c1 <= sw.c1) {
            sw.c1 = smp.c1;
            sw.worst_c1 = smp.triple;
        }
        if !(smp.c2 <= sw.c2) {
            sw.c2 = smp.c2;
            sw.worst_c2 = smp.triple;
        }
        if smp.triple.tau >= cut {
            sw.c1_outer = sw.c1_outer.max(smp.c1);
            sw.c2_outer = sw.c2_outer.max(smp.c2);
        }
    }
    sw.samples = samples;
    Ok(sw)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub rho: f64,
    pub c1_est: f64,
    pub c2_est: f64,
    pub omega_est: f64,
    pub inv_decay: Vec<(f64, f64)>,
    pub pass: bool,
    pub grids: String,
    /// Sups on the grid with doubled density.
    pub c1_refined: f64,
    pub c2_refined: f64,
    /// Sup over the full grid divided by the sup without the decade closest to 0.
    pub c1_decade_ratio: f64,
    pub c2_decade_ratio: f64,
    pub worst_c1: Triple,
    pub worst_c2: Triple,
    pub failures: Vec<String>,
    #[serde(skip)]
    pub samples: Vec<TripleSample>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisConfig {
    pub rho: f64,
    pub pairs: usize,
    pub seed: u64,
    /// Largest accepted change factor of a fitted constant.
    pub stability_factor: f64,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        Self { rho: 1.5, pairs: 200, seed: 7, stability_factor: 1.25 }
    }
}

fn change_factor(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        1.0
    } else {
        (a / b).max(b / a)
    }
}

pub fn check_hypotheses(
    family: &SingularFamily,
    rho: f64,
    time_grid: &[f64],
    pairs: usize,
) -> Result<HypothesisReport> {
    check_hypotheses_with(
        family,
        time_grid,
        &HypothesisConfig { rho, pairs, ..HypothesisConfig::default() },
    )
}

pub fn check_hypotheses_with(
    family: &SingularFamily,
    time_grid: &[f64],
    cfg: &HypothesisConfig,
) -> Result<HypothesisReport> {
    let rho = cfg.rho;
    if !(rho > 1.0 && rho < 2.0) {
        return Err(Error::InvalidArgument(format!("rho = {rho} must lie in (1, 2)")));
    }
    if time_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut grid = time_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    for &t in &grid {
        if !(t > 0.0 && t <= family.horizon() * (1.0 + 1e-12)) {
            return Err(Error::DomainError(t));
        }
    }
    if grid.len() < 3 {
        return Err(Error::InvalidArgument("hypothesis grid needs at least 3 points".into()));
    }

    let base = sweep(family, rho, &grid, cfg.pairs, cfg.seed)?;
    let fine_grid = refine_grid(&grid);
    let fine = sweep(family, rho, &fine_grid, cfg.pairs, cfg.seed.wrapping_add(1))?;

    let omega_est = grid
        .par_iter()
        .map(|&t| Ok(-spectral_bound(&family.eval(t)?)?))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let inv_decay: Vec<(f64, f64)> = grid
        .iter()
        .map(|&t| Ok((t, op_norm(&family.inverse_at(t)?))))
        .collect::<Result<_>>()?;

    let mut failures = vec![];
    let factor = cfg.stability_factor;
    for (name, c, cf) in [("c1", base.c1, fine.c1), ("c2", base.c2, fine.c2)] {
        if !c.is_finite() || !cf.is_finite() {
            failures.push(format!("{name} is not finite"));
        } else if change_factor(c, cf) >= factor {
            failures.push(format!(
                "{name} changes by x{:.3} under grid doubling",
                change_factor(c, cf)
            ));
        }
    }
    let c1_decade_ratio = fine.c1 / fine.c1_outer;
    let c2_decade_ratio = fine.c2 / fine.c2_outer;
    for (name, ratio, worst) in [
        ("c1", c1_decade_ratio, fine.worst_c1),
        ("c2", c2_decade_ratio, fine.worst_c2),
    ] {
        if !(ratio < factor) {
            failures.push(format!(
                "{name} diverges toward t = 0: x{ratio:.3} over the last decade (worst triple tau={:.3e}, s={:.3e}, t={:.3e})",
                worst.tau, worst.s, worst.t
            ));
        }
    }
    if !(omega_est > 0.0) {
        failures.push(format!("generator not exponentially stable (omega = {omega_est:.3e})"));
    }
    let third = (inv_decay.len() / 3).max(2);
    let head = &inv_decay[..third];
    let slope = loglog_slope(head);
    if !(inv_decay[0].1 < inv_decay[inv_decay.len() - 1].1 && slope > 0.0) {
        failures.push(format!("||A^-1(t)|| does not decay as t -> 0 (slope {slope:.3})"));
    }

    Ok(HypothesisReport {
        rho,
        c1_est: base.c1,
        c2_est: base.c2,
        omega_est,
        inv_decay,
        pass: failures.is_empty(),
        grids: format!(
            "{} points on [{:.3e}, {:.3e}]; refined to {} points",
            grid.len(),
            grid[0],
            grid[grid.len() - 1],
            fine_grid.len()
        ),
        c1_refined: fine.c1,
        c2_refined: fine.c2,
        c1_decade_ratio,
        c2_decade_ratio,
        worst_c1: base.worst_c1,
        worst_c2: base.worst_c2,
        failures,
        samples: base.samples,
    })
}

fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RhoRow {
    pub rho: f64,
    pub c2_est: f64,
    pub decade_ratio: f64,
    pub stable: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RhoScan {
    pub rows: Vec<RhoRow>,
    /// Smallest `c2_est` among rows that are stable toward the origin.
    pub best_rho: Option<f64>,
}

/// `c2_est` for `rho` in {1.1, …, 1.9}.
pub fn scan_rho(family: &SingularFamily, grid: &[f64]) -> Result<RhoScan> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    let mut rows = vec![];
    for i in 1..=9 {
        let rho = 1.0 + 0.1 * i as f64;
        let sw = sweep(family, rho, &g, 0, 0)?;
        let decade_ratio = sw.c2 / sw.c2_outer;
        rows.push(RhoRow {
            rho,
            c2_est: sw.c2,
            decade_ratio,
            stable: sw.c2.is_finite() && decade_ratio < 1.25,
        });
    }
    let best_rho = rows
        .iter()
        .filter(|r| r.stable)
        .min_by(|a, b| a.c2_est.total_cmp(&b.c2_est))
        .map(|r| r.rho);
    Ok(RhoScan { rows, best_rho })
}
