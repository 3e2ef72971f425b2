//! Closed-form first and second order quantities.
//!
//! With `V = B − A·diag(m)` and `λ̄ = V⁻¹Bμ`, the mean intensity solves the
//! linear ODE `d/dt E[λ_t] = Bμ − V E[λ_t]` started at `μ`, so
//!
//! ```text
//! E[λ_t]      = λ̄ + e^{-Vt}(μ − λ̄)
//! ∫_0^T E[λ]  = λ̄T + (I − e^{-VT}) V⁻¹ (μ − λ̄)
//! ```
//!
//! The limit covariances are `C = diag(m2_j λ̄_j)` for the martingale
//! statistic, `C̃ = J C Jᵀ` with `J = (I − diag(m) B⁻¹ A)⁻¹` for the centered
//! losses, and the block matrix `Ĉ` for the multi-marginal vector.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{self, Matrix};
use crate::model::{validate, HawkesModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    #[serde(rename = "V")]
    pub v: Matrix,
    #[serde(rename = "J")]
    pub j: Matrix,
    pub lambda_bar: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Matrix,
    #[serde(rename = "Ctilde")]
    pub ctilde: Matrix,
}

fn require_stable(model: &HawkesModel) -> Result<()> {
    validate(model)?.require_ok()
}

/// Stationary mean intensity `λ̄ = V⁻¹Bμ`, by linear solve.
pub fn stationary_intensity(model: &HawkesModel) -> Result<Vec<f64>> {
    let b_mu: Vec<f64> = model
        .beta()
        .iter()
        .zip(model.mu())
        .map(|(b, m)| b * m)
        .collect();
    linalg::solve(&model.v_matrix(), &b_mu)
}

/// `J = (I − diag(m) B⁻¹ A)⁻¹`.
pub fn j_matrix(model: &HawkesModel) -> Result<Matrix> {
    let d = model.dim();
    let m = model.mean_marks();
    let inner: Vec<f64> = (0..d * d)
        .map(|k| {
            let (i, j) = (k / d, k % d);
            let delta = if i == j { 1.0 } else { 0.0 };
            delta - m[i] * model.alpha()[(i, j)] / model.beta()[i]
        })
        .collect();
    linalg::inverse(&Matrix::new(d, d, inner)?)
}

/// `E[λ_t]` for `λ_0 = μ`.
pub fn mean_intensity(model: &HawkesModel, t: f64) -> Result<Vec<f64>> {
    require_stable(model)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LabError::InvalidParameter(format!(
            "time {t} must be finite and >= 0"
        )));
    }
    let lambda_bar = stationary_intensity(model)?;
    let gap: Vec<f64> = model
        .mu()
        .iter()
        .zip(&lambda_bar)
        .map(|(m, l)| m - l)
        .collect();
    let relax = linalg::mat_exp(&model.v_matrix(), -t)?.matvec(&gap);
    Ok(lambda_bar.iter().zip(relax).map(|(l, r)| l + r).collect())
}

/// `∫_0^T E[λ_t] dt` in closed form.
pub fn integrated_mean_intensity(model: &HawkesModel, horizon: f64) -> Result<Vec<f64>> {
    require_stable(model)?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(LabError::InvalidParameter(format!(
            "horizon {horizon} must be finite and >= 0"
        )));
    }
    let lambda_bar = stationary_intensity(model)?;
    let transient = transient_mass(model, &lambda_bar, horizon)?;
    Ok(lambda_bar
        .iter()
        .zip(transient)
        .map(|(l, r)| l * horizon + r)
        .collect())
}

/// `(I − e^{-VT}) V⁻¹ (μ − λ̄)`, the part of `∫E[λ]` not captured by `λ̄T`.
fn transient_mass(model: &HawkesModel, lambda_bar: &[f64], horizon: f64) -> Result<Vec<f64>> {
    let v = model.v_matrix();
    let gap: Vec<f64> = model
        .mu()
        .iter()
        .zip(lambda_bar)
        .map(|(m, l)| m - l)
        .collect();
    let w = linalg::solve(&v, &gap)?;
    let decayed = linalg::mat_exp(&v, -horizon)?.matvec(&w);
    Ok(w.iter().zip(decayed).map(|(a, b)| a - b).collect())
}

/// Deterministic gap `R'_T = Y_T − Y'_T = diag(m)(I − e^{-VT})V⁻¹(μ − λ̄)/√T`
/// between the two centerings of the losses.
pub fn centering_remainder(model: &HawkesModel, horizon: f64) -> Result<Vec<f64>> {
    require_stable(model)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(LabError::InvalidParameter(format!(
            "horizon {horizon} must be finite and > 0"
        )));
    }
    let lambda_bar = stationary_intensity(model)?;
    let transient = transient_mass(model, &lambda_bar, horizon)?;
    let root = horizon.sqrt();
    Ok(model
        .mean_marks()
        .iter()
        .zip(transient)
        .map(|(m, r)| m * r / root)
        .collect())
}

/// `V`, `J`, `λ̄`, `C` and `C̃` of a stable model.
pub fn limit_covariances(model: &HawkesModel) -> Result<MomentSet> {
    require_stable(model)?;
    let lambda_bar = stationary_intensity(model)?;
    let sigma2: Vec<f64> = model
        .second_moments()
        .iter()
        .zip(&lambda_bar)
        .map(|(m2, l)| m2 * l)
        .collect();
    let c = Matrix::diag(&sigma2);
    let j = j_matrix(model)?;
    let mut ctilde = j.matmul(&c).matmul(&j.transpose());
    // Symmetrize away rounding so downstream Cholesky sees an exact
    // symmetric matrix.
    let d = model.dim();
    for r in 0..d {
        for s in 0..r {
            let avg = 0.5 * (ctilde[(r, s)] + ctilde[(s, r)]);
            ctilde[(r, s)] = avg;
            ctilde[(s, r)] = avg;
        }
    }
    Ok(MomentSet {
        v: model.v_matrix(),
        j,
        lambda_bar,
        c,
        ctilde,
    })
}

/// Checks `0 < v_1 < … < v_p ≤ 1`.
pub fn check_time_fractions(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(LabError::InvalidParameter(
            "time fraction grid is empty".into(),
        ));
    }
    if v.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
        return Err(LabError::InvalidParameter(format!(
            "time fractions {v:?} must lie in (0, 1]"
        )));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::InvalidParameter(format!(
            "time fractions {v:?} must be strictly increasing"
        )));
    }
    Ok(())
}

/// Block-diagonal limit covariance of
/// `Γ_T = (F^1_{v_1T}, …, F^1_{v_pT}, …, F^d_{v_1T}, …, F^d_{v_pT})`,
/// where `F^n_{vT}` is the component-`n` martingale at `vT` normalized by
/// `√(vT)`. Block `n` has entries `m2_n λ̄_n √(v_i/v_j)` for `i ≤ j`.
pub fn multimarginal_covariance(model: &HawkesModel, v: &[f64]) -> Result<Matrix> {
    require_stable(model)?;
    check_time_fractions(v)?;
    let lambda_bar = stationary_intensity(model)?;
    let m2 = model.second_moments();
    let d = model.dim();
    let p = v.len();
    let mut out = Matrix::zeros(p * d, p * d);
    for n in 0..d {
        let sigma2 = m2[n] * lambda_bar[n];
        for i in 0..p {
            for j in i..p {
                let value = if i == j {
                    sigma2
                } else {
                    sigma2 * (v[i] / v[j]).sqrt()
                };
                out[(n * p + i, n * p + j)] = value;
                out[(n * p + j, n * p + i)] = value;
            }
        }
    }
    Ok(out)
}

/// `E[exp(−s‖G‖²)] = det(I + 2sΣ)^{-1/2}` for `G ∼ N(0, Σ)`, `s ≥ 0`.
pub fn exp_quadratic_expectation(sigma: &Matrix, scale: f64) -> Result<f64> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(LabError::InvalidParameter(format!(
            "scale {scale} must be finite and >= 0"
        )));
    }
    linalg::cholesky(sigma)?;
    let n = sigma.rows();
    let det = linalg::determinant(&Matrix::identity(n).add(&sigma.scale(2.0 * scale)))?;
    Ok(det.powf(-0.5))
}

/// Reference value of the test function `f(x) = e^{−‖x‖²/4}` under `N(0, Σ)`:
/// `det(I + Σ/2)^{-1/2}`.
pub fn gaussian_test_expectation(sigma: &Matrix) -> Result<f64> {
    exp_quadratic_expectation(sigma, 0.25)
}
