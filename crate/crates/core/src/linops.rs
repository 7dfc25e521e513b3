//! Dense complex matrices standing in for sectorial generators.
//!
//! Everything here works on small dense matrices (dimension up to a few
//! hundred). Operator norms are spectral norms, i.e. the largest singular
//! value.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Condition estimate above which a shifted matrix is treated as singular.
pub const NEAR_SINGULAR_COND: f64 = 1e12;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Spectral norm of a matrix.
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn vec_norm(v: &CVec) -> f64 {
    v.norm()
}

pub fn real_to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|x| c64(x, 0.0))
}

/// Square complex matrix with a free-text label.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    entries: CMat,
    label: String,
}

impl DenseOperator {
    pub fn new(entries: CMat, label: impl Into<String>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        if entries.nrows() == 0 {
            return Err(Error::Empty);
        }
        Ok(Self {
            entries,
            label: label.into(),
        })
    }

    pub fn from_real(entries: &DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        Self::new(real_to_complex(entries), label)
    }

    /// Row-major real entries.
    pub fn from_rows(rows: &[Vec<f64>], label: impl Into<String>) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    cols: r.len(),
                });
            }
        }
        let m = DMatrix::from_fn(n, n, |i, j| c64(rows[i][j], 0.0));
        Self::new(m, label)
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let d = DVector::from_iterator(values.len(), values.iter().map(|&x| c64(x, 0.0)));
        Self::new(CMat::from_diagonal(&d), "diag")
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: CMat::identity(dim, dim),
            label: "I".into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.entries
    }

    pub fn into_matrix(self) -> CMat {
        self.entries
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn norm(&self) -> f64 {
        op_norm(&self.entries)
    }

    /// Largest imaginary part among the entries.
    pub fn max_imag(&self) -> f64 {
        self.entries.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn shifted(&self, c: f64) -> Self {
        let n = self.dim();
        Self {
            entries: &self.entries + CMat::identity(n, n) * c64(c, 0.0),
            label: format!("{}+{c}I", self.label),
        }
    }

    pub fn apply(&self, x: &CVec) -> Result<CVec> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(&self.entries * x)
    }
}

/// JSON layout `{"dim": n, "re": [[...]], "im": [[...]]}`; `im` may be omitted on input.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonMatrix {
    dim: usize,
    re: Vec<Vec<f64>>,
    #[serde(default)]
    im: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl Serialize for DenseOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        let rows = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| (0..n).map(|j| f(&self.entries[(i, j)])).collect())
                .collect()
        };
        JsonMatrix {
            dim: n,
            re: rows(|z| z.re),
            im: Some(rows(|z| z.im)),
            label: (!self.label.is_empty()).then(|| self.label.clone()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = JsonMatrix::deserialize(d)?;
        let n = j.dim;
        let check = |rows: &Vec<Vec<f64>>, what: &str| {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                Err(D::Error::custom(format!("`{what}` must be {n}x{n}")))
            } else {
                Ok(())
            }
        };
        check(&j.re, "re")?;
        if let Some(im) = &j.im {
            check(im, "im")?;
        }
        let m = CMat::from_fn(n, n, |r, c| {
            let im = j.im.as_ref().map_or(0.0, |im| im[r][c]);
            c64(j.re[r][c], im)
        });
        DenseOperator::new(m, j.label.unwrap_or_default()).map_err(D::Error::custom)
    }
}

fn condition_2(m: &CMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `(lambda I - A)^{-1}`.
pub fn resolvent(a: &DenseOperator, lambda: Complex64) -> Result<DenseOperator> {
    let n = a.dim();
    let shifted = CMat::identity(n, n) * lambda - a.matrix();
    let cond = condition_2(&shifted);
    if !cond.is_finite() || cond > NEAR_SINGULAR_COND {
        return Err(Error::NearSingular { lambda, cond });
    }
    let inv = shifted
        .lu()
        .try_inverse()
        .ok_or(Error::NearSingular { lambda, cond })?;
    DenseOperator::new(inv, format!("R({lambda})"))
}

/// Eigenvalues through the complex Schur form.
pub fn eigenvalues(a: &DenseOperator) -> Result<Vec<Complex64>> {
    let schur = nalgebra::linalg::Schur::try_new(a.matrix().clone(), f64::EPSILON, 10_000)
        .ok_or(Error::EigenFailure)?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Largest real part of the spectrum.
pub fn spectral_bound(a: &DenseOperator) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Real and imaginary parts; the imaginary part is `None` when it vanishes.
pub fn split_parts(m: &CMat) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let re = m.map(|z| z.re);
    let im = m.iter().any(|z| z.im != 0.0).then(|| m.map(|z| z.im));
    (re, im)
}

fn join_parts(re: DMatrix<f64>, im: Option<DMatrix<f64>>) -> CMat {
    match im {
        None => re.map(|x| c64(x, 0.0)),
        Some(im) => re.zip_map(&im, c64),
    }
}

/// `a * b` through real products, which nalgebra hands to an optimized
/// kernel; its complex product is a plain triple loop.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    if a.ncols() < 8 {
        return a * b;
    }
    let (ar, ai) = split_parts(a);
    let (br, bi) = split_parts(b);
    let (re, im) = match (ai, bi) {
        (None, None) => (&ar * &br, None),
        (None, Some(bi)) => (&ar * &br, Some(&ar * bi)),
        (Some(ai), None) => (&ar * &br, Some(ai * &br)),
        (Some(ai), Some(bi)) => (&ar * &br - &ai * &bi, Some(&ar * bi + ai * &br)),
    };
    join_parts(re, im)
}

/// Matrix exponential by Padé scaling and squaring (in real arithmetic when
/// the matrix is real).
pub fn expm(m: &CMat) -> CMat {
    match split_parts(m) {
        (re, None) => join_parts(re.exp(), None),
        _ => m.exp(),
    }
}

/// Sampling configuration for [`certify_sectorial`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorConfig {
    pub radii: Vec<f64>,
    pub rays: usize,
    pub m_cap: f64,
}

impl Default for SectorConfig {
    fn default() -> Self {
        Self {
            radii: log_radii(1e-3, 1e3, 20),
            rays: 33,
            m_cap: 1e6,
        }
    }
}

/// Logarithmically spaced radii, `per_decade` points per decade, both ends included.
pub fn log_radii(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).round() as usize;
    (0..=n)
        .map(|k| lo * 10f64.powf(k as f64 / per_decade as f64))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorCertificate {
    pub theta: f64,
    pub m_est: f64,
    pub sample_count: usize,
    pub pass: bool,
    pub worst_lambda: Complex64,
}

pub fn certify_sectorial(
    a: &DenseOperator,
    theta: f64,
    radii: &[f64],
    rays: usize,
) -> Result<SectorCertificate> {
    certify_sectorial_with(
        a,
        theta,
        &SectorConfig {
            radii: radii.to_vec(),
            rays,
            ..SectorConfig::default()
        },
    )
}

/// Empirical sup of `|lambda| ||(lambda - A)^{-1}||` over the sector `|arg lambda| <= theta`.
pub fn certify_sectorial_with(
    a: &DenseOperator,
    theta: f64,
    cfg: &SectorConfig,
) -> Result<SectorCertificate> {
    if !(theta > PI / 2.0 && theta < PI) {
        return Err(Error::InvalidArgument(format!(
            "sector angle {theta} must lie in (pi/2, pi)"
        )));
    }
    if cfg.radii.is_empty() || cfg.radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidArgument("radii must be nonempty and positive".into()));
    }
    let rays = cfg.rays.max(2);
    let mut samples: Vec<Complex64> = Vec::with_capacity(cfg.radii.len() * rays);
    for &r in &cfg.radii {
        for k in 0..rays {
            let phi = -theta + 2.0 * theta * k as f64 / (rays - 1) as f64;
            samples.push(Complex64::from_polar(r, phi));
        }
    }
    // spectrum inside the closed sector is sampled directly
    for mu in eigenvalues(a)? {
        if mu.norm() == 0.0 || mu.arg().abs() <= theta {
            samples.push(mu);
        }
    }

    let n = a.dim();
    let id = CMat::identity(n, n);
    let values: Vec<Option<f64>> = samples
        .par_iter()
        .map(|&lambda| {
            let shifted = &id * lambda - a.matrix();
            let cond = condition_2(&shifted);
            if !cond.is_finite() || cond > NEAR_SINGULAR_COND {
                return None;
            }
            let inv = shifted.lu().try_inverse()?;
            Some(lambda.norm() * op_norm(&inv))
        })
        .collect();

    let mut m_est = 0.0f64;
    let mut worst = samples[0];
    let mut failed = false;
    for (lambda, v) in samples.iter().zip(&values) {
        match v {
            None => {
                if !failed {
                    worst = *lambda;
                }
                failed = true;
                m_est = f64::INFINITY;
            }
            Some(m) if !failed && *m > m_est => {
                m_est = *m;
                worst = *lambda;
            }
            _ => {}
        }
    }
    let pass = !failed && m_est.is_finite() && m_est <= cfg.m_cap;
    Ok(SectorCertificate {
        theta,
        m_est,
        sample_count: samples.len(),
        pass,
        worst_lambda: worst,
    })
}
