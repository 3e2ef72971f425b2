//! Normalized functionals of a simulated path and their empirical moments.
//!
//! For a path on `[0, T]` with cumulative losses `L_T`:
//!
//! ```text
//! F_T  = (L_T − diag(m) ∫_0^T λ_t dt) / √T        martingale statistic
//! Y_T  = (L_T − diag(m) ∫_0^T E[λ_t] dt) / √T     exactly centered losses
//! Y'_T = (L_T − diag(m) λ̄ T) / √T                 stationary centering
//! R_T  = diag(m) V⁻¹ (E[λ_T] − λ_T) / √T
//! ```
//!
//! and `Y_T = J F_T + R_T` holds path by path.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{self, Matrix};
use crate::model::HawkesModel;
use crate::moments::{self, check_time_fractions};
use crate::simulator::SimulatedPath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltSample {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "F_T")]
    pub f_t: Vec<f64>,
    #[serde(rename = "Y_T")]
    pub y_t: Vec<f64>,
    #[serde(rename = "Yprime_T")]
    pub yprime_t: Vec<f64>,
    #[serde(rename = "R_T")]
    pub r_t: Vec<f64>,
    #[serde(rename = "Gamma_T", skip_serializing_if = "Option::is_none", default)]
    pub gamma_t: Option<Vec<f64>>,
}

impl CltSample {
    /// Largest componentwise `|Y_T − J F_T − R_T|`.
    pub fn decomposition_error(&self, j: &Matrix) -> f64 {
        let jf = j.matvec(&self.f_t);
        self.y_t
            .iter()
            .zip(jf)
            .zip(&self.r_t)
            .map(|((y, jf), r)| (y - jf - r).abs())
            .fold(0.0, f64::max)
    }
}

/// Deterministic quantities shared by every path of one `(model, T)` pair.
#[derive(Debug, Clone)]
pub struct CltContext {
    model: HawkesModel,
    horizon: f64,
    mean_marks: Vec<f64>,
    /// `diag(m) ∫_0^T E[λ_t] dt`.
    centered_mean: Vec<f64>,
    /// `diag(m) λ̄ T`.
    stationary_mean: Vec<f64>,
    /// `E[λ_T]`.
    terminal_mean: Vec<f64>,
    /// `diag(m) V⁻¹`.
    remainder_map: Matrix,
    j: Matrix,
}

impl CltContext {
    pub fn new(model: &HawkesModel, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "horizon {horizon} must be finite and > 0"
            )));
        }
        let m = model.mean_marks();
        let integrated = moments::integrated_mean_intensity(model, horizon)?;
        let lambda_bar = moments::stationary_intensity(model)?;
        let terminal_mean = moments::mean_intensity(model, horizon)?;
        let remainder_map = Matrix::diag(&m).matmul(&linalg::inverse(&model.v_matrix())?);
        Ok(Self {
            model: model.clone(),
            horizon,
            centered_mean: m.iter().zip(&integrated).map(|(a, b)| a * b).collect(),
            stationary_mean: m
                .iter()
                .zip(&lambda_bar)
                .map(|(a, b)| a * b * horizon)
                .collect(),
            mean_marks: m,
            terminal_mean,
            remainder_map,
            j: moments::j_matrix(model)?,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn j(&self) -> &Matrix {
        &self.j
    }

    pub fn sample(&self, path: &SimulatedPath, v_grid: Option<&[f64]>) -> Result<CltSample> {
        let d = self.model.dim();
        if path.dim() != d {
            return Err(LabError::Dimension(format!(
                "path has dimension {}, model {d}",
                path.dim()
            )));
        }
        if path.start != 0.0 || path.horizon != self.horizon {
            return Err(LabError::InvalidParameter(format!(
                "path covers [{}, {}], expected [0, {}]",
                path.start, path.horizon, self.horizon
            )));
        }
        let root = self.horizon.sqrt();
        let m = &self.mean_marks;
        let f_t = (0..d)
            .map(|i| (path.l_t[i] - m[i] * path.int_lambda[i]) / root)
            .collect();
        let y_t = (0..d)
            .map(|i| (path.l_t[i] - self.centered_mean[i]) / root)
            .collect();
        let yprime_t = (0..d)
            .map(|i| (path.l_t[i] - self.stationary_mean[i]) / root)
            .collect();
        let gap: Vec<f64> = (0..d)
            .map(|i| (self.terminal_mean[i] - path.lambda_t[i]) / root)
            .collect();
        let r_t = self.remainder_map.matvec(&gap);
        let gamma_t = v_grid.map(|v| self.gamma(path, v)).transpose()?;
        Ok(CltSample {
            horizon: self.horizon,
            f_t,
            y_t,
            yprime_t,
            r_t,
            gamma_t,
        })
    }

    /// `(F^1_{v_1T}, …, F^1_{v_pT}, …, F^d_{v_pT})` with `F^n_{vT}` normalized
    /// by `√(vT)`.
    fn gamma(&self, path: &SimulatedPath, v: &[f64]) -> Result<Vec<f64>> {
        check_time_fractions(v)?;
        let d = self.model.dim();
        let m = &self.mean_marks;
        let mut per_fraction = Vec::with_capacity(v.len());
        for &frac in v {
            let t = frac * self.horizon;
            let values: Vec<f64> = if frac == 1.0 {
                (0..d)
                    .map(|i| (path.l_t[i] - m[i] * path.int_lambda[i]) / t.sqrt())
                    .collect()
            } else {
                let state = path.state_at(&self.model, t)?;
                (0..d)
                    .map(|i| (state.l[i] - m[i] * state.int_lambda[i]) / t.sqrt())
                    .collect()
            };
            per_fraction.push(values);
        }
        Ok((0..d)
            .flat_map(|n| per_fraction.iter().map(move |row| row[n]))
            .collect())
    }
}

/// Computes every normalized statistic of one path.
pub fn compute_clt_sample(
    path: &SimulatedPath,
    model: &HawkesModel,
    v_grid: Option<&[f64]>,
) -> Result<CltSample> {
    CltContext::new(model, path.horizon)?.sample(path, v_grid)
}

/// Writes one JSON object per line.
pub fn write_jsonl<'a, W: Write>(
    samples: impl IntoIterator<Item = &'a CltSample>,
    mut out: W,
) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Sample mean and unbiased covariance with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub n: usize,
    pub mean: Vec<f64>,
    /// Standard error of each mean entry.
    pub mean_se: Vec<f64>,
    pub covariance: Matrix,
    /// Standard error of each covariance entry, `√((m₂₂ − s²)/n)` with `m₂₂`
    /// the empirical mean of `(x_a − x̄_a)²(x_b − x̄_b)²`.
    pub covariance_se: Matrix,
}

impl CovarianceEstimate {
    /// Entrywise `(Ŝ − Σ)/SE`; zero where both the deviation and the SE vanish.
    pub fn z_scores(&self, reference: &Matrix) -> Matrix {
        let k = self.covariance.rows();
        let mut z = Matrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                let dev = self.covariance[(a, b)] - reference[(a, b)];
                let se = self.covariance_se[(a, b)];
                z[(a, b)] = if dev == 0.0 { 0.0 } else { dev / se };
            }
        }
        z
    }
}

/// Aggregates `samples` (all of equal length) in index order with compensated
/// sums, so the result depends only on the samples and their order.
pub fn batch_covariance<S: AsRef<[f64]>>(samples: &[S]) -> Result<CovarianceEstimate> {
    let n = samples.len();
    if n < 2 {
        return Err(LabError::NotEnoughSamples { needed: 2, got: n });
    }
    let k = samples[0].as_ref().len();
    if k == 0 || samples.iter().any(|s| s.as_ref().len() != k) {
        return Err(LabError::Dimension(
            "samples must be nonempty vectors of equal length".into(),
        ));
    }
    let nf = n as f64;
    let mean: Vec<f64> = (0..k)
        .map(|a| compensated_sum(samples.iter().map(|s| s.as_ref()[a])) / nf)
        .collect();

    let mut covariance = Matrix::zeros(k, k);
    let mut covariance_se = Matrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let mut cross = KahanSum::default();
            let mut fourth = KahanSum::default();
            for s in samples {
                let s = s.as_ref();
                let p = (s[a] - mean[a]) * (s[b] - mean[b]);
                cross.add(p);
                fourth.add(p * p);
            }
            let biased = cross.value() / nf;
            let cov = cross.value() / (nf - 1.0);
            let se = ((fourth.value() / nf - biased * biased).max(0.0) / nf).sqrt();
            covariance[(a, b)] = cov;
            covariance[(b, a)] = cov;
            covariance_se[(a, b)] = se;
            covariance_se[(b, a)] = se;
        }
    }
    let mean_se = (0..k).map(|a| (covariance[(a, a)] / nf).sqrt()).collect();
    Ok(CovarianceEstimate {
        n,
        mean,
        mean_se,
        covariance,
        covariance_se,
    })
}
