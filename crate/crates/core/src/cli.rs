//! Command-line front end: strict JSON experiment configs, dispatch to the
//! numerical modules, and JSON/CSV artifacts in one directory per command.
//!
//! Every flag has an environment override with the prefix [`ENV_PREFIX`]
//! (`SINGPAR_CONFIG`, `SINGPAR_OUT`, `SINGPAR_THREADS`, `SINGPAR_SEED`).
//! Exit codes: 0 when every asserted invariant holds, 2 for configuration
//! errors, 3 for numerical failures.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cauchy::{embed_check, holder_norm, holder_norm_plain, verify_maxreg_with, ForcingClass, GridFunction, ScpSolver};
use crate::evolution::{
    construct, counterexample_scan, graded_mesh, verify_singular_bounds, EvolutionGrid, Method,
};
use crate::family::{check_hypotheses_with, geometric_grid, FamilySpec, HypothesisConfig, SingularFamily};
use crate::linops::{c64, CVec, DenseOperator};
use crate::semigroup::{decay_report, semigroup_difference_bound, verify_integral_identity};
use crate::wedge::{
    mode_regularity, pullback_check, residual_check, residual_study, solve_wedge, BoundaryData, WedgeProblem,
    WedgeSolution,
};
use crate::{Error, Result};

pub const ENV_PREFIX: &str = "SINGPAR_";

#[derive(Parser, Debug)]
#[command(name = "singular-parabolic", version, about = "Evolution operators and maximal-regularity checks for singular parabolic problems")]
pub struct Cli {
    /// JSON experiment config; omitted keys take their defaults.
    #[arg(long, env = "SINGPAR_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Root output directory; each command writes into `<out>/<command>/`.
    #[arg(long, env = "SINGPAR_OUT", global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, env = "SINGPAR_THREADS", global = true)]
    pub threads: Option<usize>,
    /// Seed for random sampling; overrides the config.
    #[arg(long, env = "SINGPAR_SEED", global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Decay of a single analytic semigroup and the integral identity.
    SemigroupCheck,
    /// Hypothesis constants of a singular family.
    HypoCheck,
    /// Evolution operator on a graded mesh and its singular bounds.
    Evolve,
    /// Growth table for the beta <= 1 power family.
    Counterexample,
    /// Singular Cauchy problem and maximal-regularity ratios.
    SolveScp,
    /// Space-time wedge solve with residual and regularity reports.
    Wedge,
    /// Merge the reports found under the output directory.
    Report,
}

impl Command {
    pub const RUNS: [Command; 6] = [
        Command::SemigroupCheck,
        Command::HypoCheck,
        Command::Evolve,
        Command::Counterexample,
        Command::SolveScp,
        Command::Wedge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SemigroupCheck => "semigroup-check",
            Command::HypoCheck => "hypo-check",
            Command::Evolve => "evolve",
            Command::Counterexample => "counterexample",
            Command::SolveScp => "solve-scp",
            Command::Wedge => "wedge",
            Command::Report => "report",
        }
    }
}

/// Summary rows and the command that produces each.
pub const SURROGATES: [(&str, Command); 12] = [
    ("analytic-semigroup", Command::SemigroupCheck),
    ("integral-identity", Command::SemigroupCheck),
    ("hypotheses", Command::HypoCheck),
    ("evolution-operator", Command::Evolve),
    ("singular-bounds", Command::Evolve),
    ("origin-decay", Command::Evolve),
    ("semigroup-difference", Command::Evolve),
    ("variation-of-constants", Command::SolveScp),
    ("maxreg-vanishing", Command::SolveScp),
    ("maxreg-singular", Command::SolveScp),
    ("counterexample", Command::Counterexample),
    ("wedge", Command::Wedge),
];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSettings {
    pub t_min: f64,
    /// Number of intervals of the graded mesh.
    pub n: usize,
}

impl Default for MeshSettings {
    fn default() -> Self {
        Self { t_min: 1e-3, n: 32 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypoSettings {
    pub rho: f64,
    pub pairs: usize,
    /// Ratio of the geometric time grid.
    pub q: f64,
    pub t_min: f64,
    pub stability_factor: f64,
}

impl Default for HypoSettings {
    fn default() -> Self {
        let h = HypothesisConfig::default();
        Self { rho: h.rho, pairs: h.pairs, q: 0.8, t_min: 1e-3, stability_factor: h.stability_factor }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSettings {
    pub method: Method,
    /// Second construction compared block by block.
    pub compare: Option<Method>,
    pub rho: f64,
    pub write_blocks: bool,
}

impl Default for EvolveSettings {
    fn default() -> Self {
        Self { method: Method::Volterra, compare: Some(Method::Ode), rho: 1.5, write_blocks: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleSettings {
    pub beta: f64,
    /// Eigenvalues `-1, -2, …, -n_eigs`.
    pub n_eigs: usize,
    pub t: f64,
    pub taus: Vec<f64>,
}

impl Default for CounterexampleSettings {
    fn default() -> Self {
        Self { beta: 1.0, n_eigs: 1024, t: 1.0, taus: (0..=8).map(|k| 10f64.powf(-1.0 - 0.25 * k as f64)).collect() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaxRegSettings {
    pub alpha: f64,
    pub rho: f64,
    pub classes: Vec<ForcingClass>,
    pub method: Method,
    /// Meshes with `n, 2n, …` intervals.
    pub refinements: usize,
    /// Sub-panels of the solver weights (0 picks them per interval).
    pub panels: usize,
}

impl Default for MaxRegSettings {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            rho: 1.5,
            classes: vec![ForcingClass::VanishingAtOrigin, ForcingClass::Singular],
            method: Method::Volterra,
            refinements: 2,
            panels: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FieldFormat {
    #[default]
    Csv,
    /// `field.bin`: three little-endian u64 dims `(n_t, n_x, n_y + 1)`, then
    /// the row-major f64 values `u[t][x][y]`, little-endian.
    Binary,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WedgeSettings {
    pub format: FieldFormat,
    /// Solves at `n_y, 2 n_y, …` for the residual ratio.
    pub residual_levels: usize,
    pub pullback: bool,
}

impl Default for WedgeSettings {
    fn default() -> Self {
        Self { format: FieldFormat::Csv, residual_levels: 2, pullback: true }
    }
}

fn default_terms() -> usize {
    3
}

/// Forcing of the singular Cauchy problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForcingSpec {
    Constant { value: Vec<f64> },
    /// `t^exponent * coefficients`
    Power { coefficients: Vec<f64>, exponent: f64 },
    /// `amplitude * sin(frequency t + phase)`
    Sine {
        amplitude: Vec<f64>,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Seeded random member of `class`, see [`random_forcing`].
    Random {
        #[serde(default = "default_terms")]
        terms: usize,
        class: ForcingClass,
    },
    /// Samples with header `t,f_1,…,f_n`; the `t` column becomes the mesh.
    Csv { path: PathBuf },
}

impl ForcingSpec {
    fn check_dim(v: &[f64], dim: usize) -> Result<()> {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
        Ok(())
    }

    /// Samples on `mesh`; a CSV forcing ignores `mesh` and uses its own times.
    pub fn sample(&self, mesh: &[f64], dim: usize, seed: u64) -> Result<GridFunction> {
        let real = |v: &[f64], s: f64| CVec::from_iterator(v.len(), v.iter().map(|&x| c64(x * s, 0.0)));
        match self {
            ForcingSpec::Constant { value } => {
                Self::check_dim(value, dim)?;
                GridFunction::from_fn(mesh, |_| real(value, 1.0))
            }
            ForcingSpec::Power { coefficients, exponent } => {
                Self::check_dim(coefficients, dim)?;
                GridFunction::from_fn(mesh, |t| real(coefficients, t.powf(*exponent)))
            }
            ForcingSpec::Sine { amplitude, frequency, phase } => {
                Self::check_dim(amplitude, dim)?;
                GridFunction::from_fn(mesh, |t| real(amplitude, (frequency * t + phase).sin()))
            }
            ForcingSpec::Random { terms, class } => {
                random_forcing(mesh, dim, *terms, *class, &mut ChaCha8Rng::seed_from_u64(seed))
            }
            ForcingSpec::Csv { path } => read_forcing_csv(path, dim),
        }
    }
}

/// Random forcing of a given class. `VanishingAtOrigin`:
/// `sum_k w_k sin(omega_k t)` with `omega_k` in `[0.5, 6]`. `Singular`:
/// `sum_k w_k cos(c_k ln t + phi_k)`, bounded but oscillating without limit
/// at the origin. Weights are uniform in `[-1, 1]^dim`.
pub fn random_forcing(
    mesh: &[f64],
    dim: usize,
    terms: usize,
    class: ForcingClass,
    rng: &mut impl Rng,
) -> Result<GridFunction> {
    if terms == 0 || dim == 0 {
        return Err(Error::InvalidArgument("random forcing needs terms > 0 and dim > 0".into()));
    }
    let modes: Vec<(Vec<f64>, f64, f64)> = (0..terms)
        .map(|_| {
            let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            match class {
                ForcingClass::VanishingAtOrigin => (w, rng.gen_range(0.5..6.0), 0.0),
                ForcingClass::Singular => (w, rng.gen_range(0.5..2.0), rng.gen_range(0.0..2.0 * PI)),
            }
        })
        .collect();
    GridFunction::from_fn(mesh, |t| {
        let mut v = CVec::zeros(dim);
        for (w, freq, phase) in &modes {
            let s = match class {
                ForcingClass::VanishingAtOrigin => (freq * t).sin(),
                ForcingClass::Singular => (freq * t.ln() + phase).cos(),
            };
            for (vi, wi) in v.iter_mut().zip(w) {
                *vi += c64(wi * s, 0.0);
            }
        }
        v
    })
}

fn read_forcing_csv(path: &Path, dim: usize) -> Result<GridFunction> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let (mut mesh, mut values) = (vec![], vec![]);
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("{} row {}: {e}", path.display(), line + 1)))?;
        if nums.len() != dim + 1 {
            return Err(Error::Config(format!(
                "{} row {}: expected {} columns, found {}",
                path.display(),
                line + 1,
                dim + 1,
                nums.len()
            )));
        }
        mesh.push(nums[0]);
        values.push(CVec::from_iterator(dim, nums[1..].iter().map(|&x| c64(x, 0.0))));
    }
    GridFunction::new(mesh, values)
}

fn default_family() -> FamilySpec {
    FamilySpec::Prototype {
        b: DenseOperator::diag(&[-1.0, -2.0]).expect("diagonal"),
        c: crate::family::CoefficientSpec::Constant(DenseOperator::diag(&[-1.0, -3.0]).expect("diagonal")),
        k: 2.0,
        horizon: 1.0,
    }
}

fn default_problem() -> WedgeProblem {
    WedgeProblem {
        half_period: 8.0,
        n_modes: 2,
        n_y: 8,
        horizon: 1.0,
        t_min: 1e-3,
        n_t: 16,
        n_x: None,
        alpha: 0.5,
        subpanels: 8,
        g: BoundaryData::Fourier { cos: vec![0.5, 1.0], sin: vec![0.0, 0.4] },
        h: BoundaryData::Cosine { amplitude: 0.3, mode: 1 },
    }
}

/// One experiment. Payload keys that the command does not read are rejected.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator: Option<DenseOperator>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hypotheses: Option<HypoSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evolve: Option<EvolveSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<CounterexampleSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maxreg: Option<MaxRegSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<WedgeProblem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wedge: Option<WedgeSettings>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn payload_keys(&self) -> Vec<&'static str> {
        let mut keys = vec![];
        let mut add = |present: bool, k: &'static str| {
            if present {
                keys.push(k);
            }
        };
        add(self.operator.is_some(), "operator");
        add(self.horizon.is_some(), "T");
        add(self.family.is_some(), "family");
        add(self.mesh.is_some(), "mesh");
        add(self.hypotheses.is_some(), "hypotheses");
        add(self.evolve.is_some(), "evolve");
        add(self.counterexample.is_some(), "counterexample");
        add(self.forcing.is_some(), "forcing");
        add(self.maxreg.is_some(), "maxreg");
        add(self.problem.is_some(), "problem");
        add(self.wedge.is_some(), "wedge");
        keys
    }

    /// Checks the command tag and payload keys and fills every default in,
    /// so the result is the complete description of the run.
    pub fn resolve(mut self, command: Command, seed: Option<u64>) -> Result<Self> {
        if let Some(c) = self.command {
            if c != command {
                return Err(Error::Config(format!(
                    "config is for `{}` but `{}` was requested",
                    c.name(),
                    command.name()
                )));
            }
        }
        let allowed: &[&str] = match command {
            Command::SemigroupCheck => &["operator", "T"],
            Command::HypoCheck => &["family", "hypotheses"],
            Command::Evolve => &["family", "mesh", "evolve"],
            Command::Counterexample => &["counterexample"],
            Command::SolveScp => &["family", "mesh", "forcing", "maxreg"],
            Command::Wedge => &["problem", "wedge"],
            Command::Report => &[],
        };
        if let Some(k) = self.payload_keys().into_iter().find(|k| !allowed.contains(k)) {
            return Err(Error::Config(format!("key `{k}` is not used by `{}`", command.name())));
        }
        let defaults = default_tolerances(command, &self);
        if let Some(k) = self.tolerances.keys().find(|k| !defaults.contains_key(*k)) {
            return Err(Error::Config(format!("unknown tolerance `{k}` for `{}`", command.name())));
        }
        for (k, v) in defaults {
            self.tolerances.entry(k).or_insert(v);
        }
        self.command = Some(command);
        self.seed = Some(seed.or(self.seed).unwrap_or(0));
        self.output_dir = None;
        match command {
            Command::SemigroupCheck => {
                self.operator.get_or_insert_with(|| DenseOperator::diag(&[-1.0]).expect("diagonal"));
                self.horizon.get_or_insert(1.0);
            }
            Command::HypoCheck => {
                self.family.get_or_insert_with(default_family);
                self.hypotheses.get_or_insert_with(HypoSettings::default);
            }
            Command::Evolve => {
                self.family.get_or_insert_with(default_family);
                self.mesh.get_or_insert_with(MeshSettings::default);
                self.evolve.get_or_insert_with(EvolveSettings::default);
            }
            Command::Counterexample => {
                self.counterexample.get_or_insert_with(CounterexampleSettings::default);
            }
            Command::SolveScp => {
                self.family.get_or_insert_with(default_family);
                self.mesh.get_or_insert_with(MeshSettings::default);
                self.forcing
                    .get_or_insert(ForcingSpec::Random { terms: 3, class: ForcingClass::VanishingAtOrigin });
                self.maxreg.get_or_insert_with(MaxRegSettings::default);
            }
            Command::Wedge => {
                self.problem.get_or_insert_with(default_problem);
                self.wedge.get_or_insert_with(WedgeSettings::default);
            }
            Command::Report => {}
        }
        Ok(self)
    }

    fn tol(&self, key: &str) -> f64 {
        self.tolerances[key]
    }
}

fn default_tolerances(command: Command, cfg: &ExperimentConfig) -> BTreeMap<String, f64> {
    let pairs: Vec<(&str, f64)> = match command {
        Command::SemigroupCheck => vec![("identity_residual", 1e-8)],
        Command::HypoCheck | Command::Report => vec![],
        Command::Evolve => {
            let method = cfg.evolve.as_ref().map_or(Method::Volterra, |e| e.method);
            let cocycle = if method == Method::Ode { 1e-8 } else { 1e-6 };
            vec![("cocycle", cocycle), ("agreement", 1e-5), ("difference_change", 0.25)]
        }
        Command::Counterexample => vec![("growth_min", 5.0), ("envelope_factor", 2.0)],
        Command::SolveScp => vec![("refinement_spread", 1.25)],
        Command::Wedge => vec![("residual_ratio", 3.5), ("dirichlet", 1e-10), ("imag", 1e-10)],
    };
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub name: String,
    pub pass: bool,
    pub constants: BTreeMap<String, f64>,
    pub failures: Vec<String>,
}

impl Surrogate {
    fn new(name: &str) -> Self {
        Self { name: name.into(), pass: true, ..Self::default() }
    }

    fn constant(mut self, key: &str, value: f64) -> Self {
        self.constants.insert(key.into(), value);
        self
    }

    /// Records `msg` as a failure unless `ok`.
    fn require(mut self, ok: bool, msg: impl FnOnce() -> String) -> Self {
        if !ok {
            self.pass = false;
            self.failures.push(msg());
        }
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub command: Command,
    pub config: ExperimentConfig,
    pub pass: bool,
    pub failures: Vec<String>,
    pub surrogates: Vec<Surrogate>,
    pub results: Value,
}

/// Writes artifacts into one directory.
pub struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    pub fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        Ok(())
    }

    pub fn csv<I>(&self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut w = csv::Writer::from_path(self.dir.join(name)).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row.iter().map(|x| x.to_string())).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn bytes(&self, name: &str, data: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), data)?;
        Ok(())
    }
}

fn relative_change(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        0.0
    } else {
        (a / b).max(b / a) - 1.0
    }
}

fn family_mesh(family: &SingularFamily, mesh: &MeshSettings, scale: usize) -> Result<Vec<f64>> {
    graded_mesh(mesh.t_min, family.horizon(), mesh.n * scale)
}

fn semigroup_check(cfg: &ExperimentConfig, out: &Artifacts) -> Result<(Vec<Surrogate>, Value)> {
    let a = cfg.operator.as_ref().expect("resolved");
    let horizon = cfg.horizon.expect("resolved");
    let decay = decay_report(a, horizon)?;
    out.csv(
        "semigroup.csv",
        &["t [time]", "exp_tA_norm [1]", "tA_exp_tA_norm [1]"],
        decay.t_grid.iter().zip(&decay.exp_norms).zip(&decay.tae_norms).map(|((&t, &e), &s)| vec![t, e, s]),
    )?;
    let x = CVec::from_element(a.dim(), c64(1.0, 0.0));
    let times = [0.1 * horizon, horizon];
    let residuals: Vec<f64> = times.iter().map(|&t| verify_integral_identity(a, t, &x)).collect::<Result<_>>()?;
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    let tol = cfg.tol("identity_residual");
    let s1 = Surrogate::new("analytic-semigroup")
        .constant("omega_est", decay.omega_est)
        .constant("c_est", decay.c_est)
        .constant("tAe_sup", decay.tae_sup)
        .require(decay.pass, || "decay report failed".into());
    let s2 = Surrogate::new("integral-identity")
        .constant("residual", worst)
        .require(worst <= tol, || format!("integral identity residual {worst:e} > {tol:e}"));
    Ok((vec![s1, s2], json!({ "decay": decay, "identity_times": times, "identity_residuals": residuals })))
}

fn hypo_check(cfg: &ExperimentConfig, out: &Artifacts) -> Result<(Vec<Surrogate>, Value)> {
    let family = cfg.family.as_ref().expect("resolved").build()?;
    let h = cfg.hypotheses.as_ref().expect("resolved");
    if !(h.q > 0.0 && h.q < 1.0) {
        return Err(Error::Config(format!("hypotheses.q = {} must lie in (0, 1)", h.q)));
    }
    let grid = geometric_grid(family.horizon(), h.q, h.t_min);
    let hc = HypothesisConfig {
        rho: h.rho,
        pairs: h.pairs,
        seed: cfg.seed.expect("resolved"),
        stability_factor: h.stability_factor,
    };
    let rep = check_hypotheses_with(&family, &grid, &hc)?;
    out.csv(
        "samples.csv",
        &["tau [time]", "s [time]", "t [time]", "c1 [1]", "c2 [time^-1]"],
        rep.samples.iter().map(|s| vec![s.triple.tau, s.triple.s, s.triple.t, s.c1, s.c2]),
    )?;
    out.json("hypotheses.json", &rep)?;
    let mut s = Surrogate::new("hypotheses")
        .constant("c1_est", rep.c1_est)
        .constant("c2_est", rep.c2_est)
        .constant("omega_est", rep.omega_est);
    for f in &rep.failures {
        s = s.require(false, || f.clone());
    }
    s = s.require(rep.pass, || "hypothesis check failed".into());
    Ok((vec![s], serde_json::to_value(&rep).map_err(|e| Error::Io(e.to_string()))?))
}

fn blocks_json(grid: &EvolutionGrid) -> Result<Value> {
    let mesh = grid.mesh();
    let mut blocks = vec![];
    for i in 0..mesh.len() {
        for j in 0..=i {
            let b = grid.block(i, j)?;
            let part = |f: fn(&num_complex::Complex64) -> f64| -> Vec<Vec<f64>> {
                (0..b.nrows()).map(|r| (0..b.ncols()).map(|c| f(&b[(r, c)])).collect()).collect()
            };
            blocks.push(json!({ "i": i, "j": j, "re": part(|z| z.re), "im": part(|z| z.im) }));
        }
    }
    Ok(json!({ "mesh": mesh, "blocks": blocks }))
}

fn evolve(cfg: &ExperimentConfig, out: &Artifacts) -> Result<(Vec<Surrogate>, Value)> {
    let family = cfg.family.as_ref().expect("resolved").build()?;
    let ev = cfg.evolve.as_ref().expect("resolved");
    let mesh = family_mesh(&family, cfg.mesh.as_ref().expect("resolved"), 1)?;
    let grid = construct(&family, &mesh, ev.method)?;
    let cocycle = grid.cocycle_defect();
    let agreement = ev.compare.map(|m| construct(&family, &mesh, m).map(|g| grid.max_difference(&g))).transpose()?;
    let bounds = verify_singular_bounds(&grid, ev.rho)?;
    out.csv(
        "bounds.csv",
        &["t [time]", "tau [time]", "partial [time^(rho-1)]", "full [1]", "u_norm [1]"],
        bounds.samples.iter().map(|s| vec![s.t, s.tau, s.partial, s.full, s.u_norm]),
    )?;
    if ev.write_blocks {
        out.json("blocks.json", &blocks_json(&grid)?)?;
    }

    let pairs: Vec<(f64, f64)> =
        (0..mesh.len()).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| (mesh[j], mesh[i])).collect();
    let diffs: Vec<f64> = pairs
        .par_iter()
        .map(|&(tau, t)| Ok(t * semigroup_difference_bound(&family, tau, t)?))
        .collect::<Result<_>>()?;
    out.csv(
        "difference.csv",
        &["tau [time]", "t [time]", "t_times_difference [1]"],
        pairs.iter().zip(&diffs).map(|(&(tau, t), &d)| vec![tau, t, d]),
    )?;
    let c_all = diffs.iter().copied().fold(0.0, f64::max);
    let cut = 10.0 * mesh[0];
    let c_upper = pairs.iter().zip(&diffs).filter(|(p, _)| p.0 >= cut).map(|(_, &d)| d).fold(0.0, f64::max);
    let diff_change = relative_change(c_all, c_upper);

    let (tc, ta, td) = (cfg.tol("cocycle"), cfg.tol("agreement"), cfg.tol("difference_change"));
    let mut s_op = Surrogate::new("evolution-operator")
        .constant("cocycle_defect", cocycle)
        .require(cocycle <= tc, || format!("cocycle defect {cocycle:e} > {tc:e}"));
    if let Some(a) = agreement {
        s_op = s_op.constant("agreement", a).require(a <= ta, || format!("constructions differ by {a:e} > {ta:e}"));
    }
    let s_bounds = Surrogate::new("singular-bounds")
        .constant("partial_sup", bounds.partial_sup)
        .constant("full_sup", bounds.full_sup)
        .constant("partial_decade_change", bounds.partial_decade_change)
        .constant("full_decade_change", bounds.full_decade_change)
        .require(bounds.partial_decade_change < 0.25, || {
            format!("partial-bound constant changes by {:.3} per decade", bounds.partial_decade_change)
        })
        .require(bounds.full_decade_change < 0.25, || {
            format!("full-bound constant changes by {:.3} per decade", bounds.full_decade_change)
        })
        .require(bounds.bound_violations == 0, || format!("{} bound violations", bounds.bound_violations));
    let s_decay = Surrogate::new("origin-decay")
        .constant("decay_ratio", bounds.decay_ratio)
        .require(bounds.decay_ratio < 1e-6, || format!("||U(T,t_min)|| / ||U(T,T/2)|| = {:e}", bounds.decay_ratio));
    let s_diff = Surrogate::new("semigroup-difference")
        .constant("c", c_all)
        .constant("decade_change", diff_change)
        .require(c_all.is_finite() && diff_change < td, || {
            format!("difference constant changes by {diff_change:.3} over the first decade")
        });
    let results = json!({
        "mesh": mesh,
        "method": ev.method,
        "cocycle_defect": cocycle,
        "agreement": agreement,
        "kernel_sup": grid.kernel_sup(),
        "bounds": bounds,
        "difference": { "c": c_all, "c_without_first_decade": c_upper, "decade_change": diff_change },
    });
    Ok((vec![s_op, s_bounds, s_decay, s_diff], results))
}

fn counterexample(cfg: &ExperimentConfig, out: &Artifacts) -> Result<(Vec<Surrogate>, Value)> {
    let c = cfg.counterexample.as_ref().expect("resolved");
    if c.n_eigs == 0 {
        return Err(Error::Config("counterexample.n_eigs must be positive".into()));
    }
    let eigs: Vec<f64> = (1..=c.n_eigs).map(|k| -(k as f64)).collect();
    let table = counterexample_scan(&eigs, c.beta, c.t, &c.taus)?;
    out.csv(
        "counterexample.csv",
        &["tau [time]", "sup [1]", "argmax_eig [1]", "envelope [1]"],
        table.rows.iter().map(|r| vec![r.tau, r.sup, r.argmax_eig, r.envelope]),
    )?;
    let (g, e) = (cfg.tol("growth_min"), cfg.tol("envelope_factor"));
    let s = Surrogate::new("counterexample")
        .constant("growth", table.growth)
        .constant("envelope_mismatch", table.envelope_mismatch)
        .require(table.growth >= g, || format!("growth {:.3} < {g}", table.growth))
        .require(table.envelope_mismatch <= e, || format!("envelope mismatch {:.3} > {e}", table.envelope_mismatch));
    Ok((vec![s], serde_json::to_value(&table).map_err(|e| Error::Io(e.to_string()))?))
}

fn solution_rows(u: &GridFunction) -> Vec<Vec<f64>> {
    u.mesh()
        .iter()
        .zip(u.values())
        .map(|(&t, v)| std::iter::once(t).chain(v.iter().flat_map(|z| [z.re, z.im])).collect())
        .collect()
}

fn solve_scp_cmd(cfg: &ExperimentConfig, out: &Artifacts) -> Result<(Vec<Surrogate>, Value)> {
    let family = cfg.family.as_ref().expect("resolved").build()?;
    let mr = cfg.maxreg.as_ref().expect("resolved");
    let forcing = cfg.forcing.as_ref().expect("resolved");
    let mesh_cfg = cfg.mesh.as_ref().expect("resolved");
    let seed = cfg.seed.expect("resolved");
    let dim = family.dim();
    if mr.classes.is_empty() {
        return Err(Error::Config("maxreg.classes must not be empty".into()));
    }
    let from_csv = matches!(forcing, ForcingSpec::Csv { .. });
    let levels = if from_csv { 1 } else { mr.refinements.max(1) };
    let mut level_rows = vec![];
    let mut ratios: BTreeMap<ForcingClass, Vec<Option<f64>>> = BTreeMap::new();
    let mut passes: BTreeMap<ForcingClass, bool> = BTreeMap::new();
    let mut residuals = vec![];
    for level in 0..levels {
        let mesh = family_mesh(&family, mesh_cfg, 1 << level)?;
        let f = forcing.sample(&mesh, dim, seed)?;
        let grid = construct(&family, f.mesh(), mr.method)?;
        let solver = ScpSolver::with_panels(&grid, mr.panels)?;
        let mut reports = vec![];
        for &class in &mr.classes {
            let rep = verify_maxreg_with(&solver, &family, &f, mr.alpha, mr.rho, class)?;
            ratios.entry(class).or_default().push(rep.ratio);
            *passes.entry(class).or_insert(true) &= rep.pass;
            reports.push(rep);
        }
        let residual = reports[0].residual / f.sup_norm().max(f64::MIN_POSITIVE);
        residuals.push(residual);
        if level == 0 {
            let u = solver.solve(&f)?;
            let mut header = vec!["t [time]".to_string()];
            for k in 1..=dim {
                header.push(format!("u{k}_re [1]"));
                header.push(format!("u{k}_im [1]"));
            }
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            out.csv("solution.csv", &header, solution_rows(&u))?;
            let holder = json!({
                "u_singular": holder_norm(&u, mr.alpha, 0.0)?,
                "u_weighted": holder_norm(&u, mr.alpha, mr.alpha)?,
                "u_plain": holder_norm_plain(&u, mr.alpha)?,
                "f_singular": holder_norm(&f, mr.alpha, 0.0)?,
                "f_plain": holder_norm_plain(&f, mr.alpha)?,
                "embedding": embed_check(&f, mr.alpha, mr.rho)?,
            });
            out.json("holder.json", &holder)?;
        }
        level_rows.push(json!({ "intervals": f.len() - 1, "relative_residual": residual, "maxreg": reports }));
    }
    out.json("maxreg.json", &level_rows)?;

    let spread_tol = cfg.tol("refinement_spread");
    let mut surrogates = vec![];
    let first = residuals[0];
    let last = residuals[residuals.len() - 1];
    surrogates.push(
        Surrogate::new("variation-of-constants")
            .constant("relative_residual_coarse", first)
            .constant("relative_residual_fine", last)
            .require(last.is_finite() && (levels == 1 || last < first), || {
                format!("equation residual does not decrease under refinement ({first:e} -> {last:e})")
            }),
    );
    for (key, rs) in &ratios {
        let name = match key {
            ForcingClass::VanishingAtOrigin => "maxreg-vanishing",
            ForcingClass::Singular => "maxreg-singular",
        };
        let vals: Vec<f64> = rs.iter().flatten().copied().collect();
        let mut s = Surrogate::new(name).require(passes[key], || "regularity report failed".into());
        if !vals.is_empty() {
            let hi = vals.iter().copied().fold(0.0, f64::max);
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let spread = hi / lo;
            s = s
                .constant("ratio_max", hi)
                .constant("ratio_min", lo)
                .constant("spread", spread)
                .require(spread <= spread_tol, || format!("ratio spread {spread:.3} > {spread_tol}"));
        }
        surrogates.push(s);
    }
    Ok((surrogates, json!({ "levels": level_rows })))
}

fn write_field(sol: &WedgeSolution, format: FieldFormat, out: &Artifacts) -> Result<()> {
    let [nt, nx, ny] = sol.dims();
    let field = sol.field();
    match format {
        FieldFormat::Csv => out.csv(
            "field.csv",
            &["t [time]", "x [length]", "y [1]", "u [1]"],
            (0..nt).flat_map(|i| {
                let field = &field;
                (0..nx).flat_map(move |k| {
                    (0..ny).map(move |j| {
                        vec![sol.mesh[i], sol.x_grid[k], sol.y_grid[j], field[(i * nx + k) * ny + j]]
                    })
                })
            }),
        )?,
        FieldFormat::Binary => {
            let mut bytes = Vec::with_capacity(24 + 8 * field.len());
            for d in [nt, nx, ny] {
                bytes.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &field {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            out.bytes("field.bin", &bytes)?;
            out.json("field_axes.json", &json!({ "t": sol.mesh, "x": sol.x_grid, "y": sol.y_grid }))?;
        }
    }
    let fr = field.as_slice();
    let last = nt - 1;
    out.csv(
        "slice_final_time.csv",
        &["x [length]", "y [1]", "u [1]"],
        (0..nx).flat_map(|k| (0..ny).map(move |j| vec![sol.x_grid[k], sol.y_grid[j], fr[(last * nx + k) * ny + j]])),
    )?;
    let k0 = (0..nx).min_by(|&a, &b| sol.x_grid[a].abs().total_cmp(&sol.x_grid[b].abs())).unwrap_or(0);
    out.csv(
        "slice_x0.csv",
        &["t [time]", "y [1]", "u [1]"],
        (0..nt).flat_map(|i| (0..ny).map(move |j| vec![sol.mesh[i], sol.y_grid[j], fr[(i * nx + k0) * ny + j]])),
    )?;
    Ok(())
}

fn wedge_cmd(cfg: &ExperimentConfig, out: &Artifacts) -> Result<(Vec<Surrogate>, Value)> {
    let problem = cfg.problem.as_ref().expect("resolved");
    let ws = cfg.wedge.as_ref().expect("resolved");
    problem.validate().map_err(|e| Error::Config(e.to_string()))?;
    let sol = solve_wedge(problem)?;
    write_field(&sol, ws.format, out)?;
    let residual = residual_check(&sol)?;
    let regularity = mode_regularity(&sol)?;
    let study = if ws.residual_levels >= 2 { Some(residual_study(problem, ws.residual_levels)?) } else { None };
    let pullback = if ws.pullback { Some(pullback_check(&sol)?) } else { None };
    out.json("residual.json", &json!({ "base": residual, "study": study, "pullback": pullback }))?;
    out.json("regularity.json", &regularity)?;

    let (tr, td, ti) = (cfg.tol("residual_ratio"), cfg.tol("dirichlet"), cfg.tol("imag"));
    let mut s = Surrogate::new("wedge")
        .constant("interior_residual", residual.interior)
        .constant("dirichlet", residual.dirichlet)
        .constant("max_imag", residual.max_imag)
        .require(residual.dirichlet <= td, || format!("Dirichlet defect {:e} > {td:e}", residual.dirichlet))
        .require(residual.max_imag <= ti, || format!("imaginary part {:e} > {ti:e}", residual.max_imag));
    if let Some(st) = &study {
        let worst = st.ratios.iter().copied().fold(f64::INFINITY, f64::min);
        s = s.constant("residual_ratio", worst).require(worst >= tr, || format!("residual ratio {worst:.3} < {tr}"));
    }
    let ratios: Vec<f64> = regularity.iter().filter(|r| r.f_norm > 0.0).map(|r| (r.au_norm + r.udot_norm) / r.f_norm).collect();
    if let Some(m) = ratios.iter().copied().reduce(f64::max) {
        s = s.constant("mode_ratio_max", m).require(m.is_finite(), || "infinite mode regularity ratio".into());
    }
    let results = json!({
        "dims": sol.dims(),
        "residual": residual,
        "study": study,
        "pullback": pullback,
        "regularity": regularity,
    });
    Ok((vec![s], results))
}

/// Runs one command from a resolved config and writes its artifacts to
/// `<out>/<command>/`, including `report.json`.
pub fn run(command: Command, cfg: ExperimentConfig, out_root: &Path) -> Result<RunReport> {
    if command == Command::Report {
        return report(out_root);
    }
    let out = Artifacts::create(out_root.join(command.name()))?;
    let (surrogates, results) = match command {
        Command::SemigroupCheck => semigroup_check(&cfg, &out),
        Command::HypoCheck => hypo_check(&cfg, &out),
        Command::Evolve => evolve(&cfg, &out),
        Command::Counterexample => counterexample(&cfg, &out),
        Command::SolveScp => solve_scp_cmd(&cfg, &out),
        Command::Wedge => wedge_cmd(&cfg, &out),
        Command::Report => unreachable!(),
    }?;
    let failures: Vec<String> =
        surrogates.iter().flat_map(|s| s.failures.iter().map(move |f| format!("{}: {f}", s.name))).collect();
    let rep = RunReport { command, config: cfg, pass: failures.is_empty(), failures, surrogates, results };
    out.json("report.json", &rep)?;
    Ok(rep)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryRow {
    pub surrogate: String,
    pub command: Command,
    /// `pass`, `fail` or `not run`.
    pub status: String,
    pub constants: BTreeMap<String, f64>,
    pub failures: Vec<String>,
}

/// Merges `<out>/<command>/report.json` for every command into
/// `<out>/report/summary.json` and `summary.csv`.
pub fn report(out_root: &Path) -> Result<RunReport> {
    let mut found: BTreeMap<Command, RunReport> = BTreeMap::new();
    for c in Command::RUNS {
        let path = out_root.join(c.name()).join("report.json");
        if let Ok(text) = fs::read_to_string(&path) {
            let rep: RunReport = serde_json::from_str(&text)
                .map_err(|e| Error::MissingArtifacts(format!("{}: {e}", path.display())))?;
            found.insert(c, rep);
        }
    }
    if found.is_empty() {
        return Err(Error::MissingArtifacts(format!("no run reports under {}", out_root.display())));
    }
    let rows: Vec<SummaryRow> = SURROGATES
        .iter()
        .map(|&(name, command)| {
            let s = found.get(&command).and_then(|r| r.surrogates.iter().find(|s| s.name == name));
            SummaryRow {
                surrogate: name.into(),
                command,
                status: match s {
                    None => "not run",
                    Some(s) if s.pass => "pass",
                    Some(_) => "fail",
                }
                .into(),
                constants: s.map(|s| s.constants.clone()).unwrap_or_default(),
                failures: s.map(|s| s.failures.clone()).unwrap_or_default(),
            }
        })
        .collect();
    let out = Artifacts::create(out_root.join(Command::Report.name()))?;
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut w = csv::Writer::from_path(out.dir().join("summary.csv")).map_err(io)?;
    w.write_record(["surrogate", "command", "status"]).map_err(io)?;
    for r in &rows {
        w.write_record([r.surrogate.as_str(), r.command.name(), r.status.as_str()]).map_err(io)?;
    }
    w.flush()?;
    let failures: Vec<String> = rows
        .iter()
        .filter(|r| r.status == "fail")
        .flat_map(|r| r.failures.iter().map(move |f| format!("{}: {f}", r.surrogate)))
        .collect();
    let sources: BTreeMap<&str, &ExperimentConfig> = found.iter().map(|(c, r)| (c.name(), &r.config)).collect();
    let rep = RunReport {
        command: Command::Report,
        config: ExperimentConfig { command: Some(Command::Report), ..ExperimentConfig::default() },
        pass: failures.is_empty(),
        failures,
        surrogates: vec![],
        results: json!({ "rows": rows, "configs": sources }),
    };
    out.json("summary.json", &rep)?;
    Ok(rep)
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::MissingArtifacts(_)
            | Error::InvalidArgument(_)
            | Error::NotSquare { .. }
            | Error::DimensionMismatch { .. }
            | Error::DegenerateMesh
            | Error::Empty
    )
}

pub fn exit_code(result: &Result<RunReport>) -> i32 {
    match result {
        Ok(r) if r.pass => 0,
        Ok(_) => 3,
        Err(e) if is_config_error(e) => 2,
        Err(_) => 3,
    }
}

/// Parses the config named by the flags, runs the command and prints a
/// one-line JSON status. Returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    if let Some(n) = cli.threads {
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = (|| {
        let cfg = match &cli.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let out = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
        let cfg = cfg.resolve(cli.command, cli.seed)?;
        run(cli.command, cfg, &out)
    })();
    let code = exit_code(&result);
    let status = match &result {
        Ok(r) => json!({ "command": cli.command.name(), "pass": r.pass, "failures": r.failures }),
        Err(e) => json!({
            "command": cli.command.name(),
            "pass": false,
            "error": e.to_string(),
            "kind": if code == 2 { "config" } else { "numerical" },
        }),
    };
    if code == 0 {
        println!("{status}");
    } else {
        eprintln!("{status}");
    }
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(ExperimentConfig::from_json(r#"{"bogus": 1}"#), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"mesh": {"t_min": 1e-3, "n": 8, "extra": 0}}"#),
            Err(Error::Config(_))
        ));
        let cfg = ExperimentConfig::from_json(r#"{"problem": null, "tolerances": {"nope": 1}}"#).unwrap();
        assert!(matches!(cfg.resolve(Command::Evolve, None), Err(Error::Config(_))));
    }

    #[test]
    fn payload_must_match_command() {
        let cfg = ExperimentConfig::from_json(r#"{"counterexample": {"beta": 1.0}}"#).unwrap();
        assert!(matches!(cfg.clone().resolve(Command::Wedge, None), Err(Error::Config(_))));
        assert!(cfg.resolve(Command::Counterexample, None).is_ok());
        let tagged = ExperimentConfig::from_json(r#"{"command": "evolve"}"#).unwrap();
        assert!(matches!(tagged.resolve(Command::Wedge, None), Err(Error::Config(_))));
    }

    #[test]
    fn resolve_fills_defaults_and_seed() {
        let cfg = ExperimentConfig::from_json(r#"{"seed": 5, "tolerances": {"agreement": 1e-4}}"#)
            .unwrap()
            .resolve(Command::Evolve, None)
            .unwrap();
        assert_eq!(cfg.seed, Some(5));
        assert_eq!(cfg.tol("agreement"), 1e-4);
        assert_eq!(cfg.tol("cocycle"), 1e-6);
        assert!(cfg.family.is_some() && cfg.mesh.is_some());
        let flag = ExperimentConfig::from_json(r#"{"seed": 5}"#).unwrap().resolve(Command::Evolve, Some(9)).unwrap();
        assert_eq!(flag.seed, Some(9));
    }

    #[test]
    fn forcing_forms() {
        let mesh = [0.1, 0.5, 1.0];
        let f = ForcingSpec::Power { coefficients: vec![1.0, 2.0], exponent: 0.5 }.sample(&mesh, 2, 0).unwrap();
        assert!((f.values()[1][1].re - 2.0 * 0.5f64.sqrt()).abs() < 1e-15);
        assert!(ForcingSpec::Constant { value: vec![1.0] }.sample(&mesh, 2, 0).is_err());
        let a = ForcingSpec::Random { terms: 3, class: ForcingClass::Singular }.sample(&mesh, 2, 4).unwrap();
        let b = ForcingSpec::Random { terms: 3, class: ForcingClass::Singular }.sample(&mesh, 2, 4).unwrap();
        assert_eq!(a.values(), b.values());
        let spec: ForcingSpec = serde_json::from_str(r#"{"form": "sine", "amplitude": [1.0], "frequency": 2.0}"#).unwrap();
        let s = spec.sample(&mesh, 1, 0).unwrap();
        assert!((s.values()[2][0].re - 2f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Err(Error::Config("x".into()))), 2);
        assert_eq!(exit_code(&Err(Error::MissingArtifacts("x".into()))), 2);
        assert_eq!(exit_code(&Err(Error::EigenFailure)), 3);
    }
}
