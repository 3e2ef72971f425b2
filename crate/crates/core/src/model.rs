//! Process parameterization and the standing stability checks.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::linalg::{self, Matrix};

/// Eigenvalues with imaginary part below this are reported as real.
pub const EIGEN_TOL: f64 = 1e-10;

/// Models whose subcriticality ratio is this close to 1 get a warning.
pub const NEAR_CRITICAL: f64 = 1e-6;

/// Law of the marks (losses) attached to the events of one component.
///
/// All supported laws live on `(0, ∞)` and have finite moments of every order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MarkDistribution {
    /// Point mass at `value`; `Constant { value: 1.0 }` turns `L` into the counting process.
    Constant {
        value: f64,
    },
    Exponential {
        rate: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
}

impl MarkDistribution {
    pub fn check(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        let valid = match *self {
            Self::Constant { value } => ok(value),
            Self::Exponential { rate } => ok(rate),
            Self::Gamma { shape, rate } => ok(shape) && ok(rate),
        };
        if valid {
            Ok(())
        } else {
            Err(LabError::InvalidParameter(format!(
                "mark law {self:?} needs finite positive parameters"
            )))
        }
    }

    /// Raw moments `(E[Y], E[Y²], E[Y³])`.
    pub fn moments(&self) -> (f64, f64, f64) {
        match *self {
            Self::Constant { value: c } => (c, c * c, c * c * c),
            Self::Exponential { rate } => {
                (1.0 / rate, 2.0 / (rate * rate), 6.0 / (rate * rate * rate))
            }
            Self::Gamma { shape: k, rate } => (
                k / rate,
                k * (k + 1.0) / (rate * rate),
                k * (k + 1.0) * (k + 2.0) / (rate * rate * rate),
            ),
        }
    }

    pub fn mean(&self) -> f64 {
        self.moments().0
    }

    pub fn second_moment(&self) -> f64 {
        self.moments().1
    }

    /// Draws one strictly positive mark.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Exponential { rate } => loop {
                let e: f64 = Exp1.sample(rng);
                if e > 0.0 {
                    break e / rate;
                }
            },
            Self::Gamma { shape, rate } => {
                let g = Gamma::new(shape, 1.0 / rate)
                    .expect("gamma parameters checked at construction");
                loop {
                    let y = g.sample(rng);
                    if y > 0.0 {
                        break y;
                    }
                }
            }
        }
    }
}

/// Closed-form `(m1, m2, m3)` of a mark law.
pub fn mark_moments(dist: &MarkDistribution) -> (f64, f64, f64) {
    dist.moments()
}

/// Multivariate compound Hawkes model with kernels `Φ_ij(u) = α_ij e^{-β_i u}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct HawkesModel {
    mu: Vec<f64>,
    alpha: Matrix,
    beta: Vec<f64>,
    marks: Vec<MarkDistribution>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    d: usize,
    mu: Vec<f64>,
    alpha: Vec<Vec<f64>>,
    beta: Vec<f64>,
    marks: Vec<MarkDistribution>,
}

impl TryFrom<RawModel> for HawkesModel {
    type Error = LabError;

    fn try_from(raw: RawModel) -> Result<Self> {
        if raw.alpha.len() != raw.d {
            return Err(LabError::Dimension(format!(
                "alpha has {} rows, d = {}",
                raw.alpha.len(),
                raw.d
            )));
        }
        let alpha = Matrix::from_rows(&raw.alpha)?;
        let model = HawkesModel::new(raw.mu, alpha, raw.beta, raw.marks)?;
        if model.dim() != raw.d {
            return Err(LabError::Dimension(format!(
                "mu has length {}, d = {}",
                model.dim(),
                raw.d
            )));
        }
        Ok(model)
    }
}

impl From<HawkesModel> for RawModel {
    fn from(m: HawkesModel) -> Self {
        RawModel {
            d: m.dim(),
            alpha: m.alpha.to_rows(),
            mu: m.mu,
            beta: m.beta,
            marks: m.marks,
        }
    }
}

impl HawkesModel {
    pub fn new(
        mu: Vec<f64>,
        alpha: Matrix,
        beta: Vec<f64>,
        marks: Vec<MarkDistribution>,
    ) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(LabError::Dimension("dimension must be positive".into()));
        }
        if alpha.rows() != d || alpha.cols() != d {
            return Err(LabError::Dimension(format!(
                "alpha is {}x{}, expected {d}x{d}",
                alpha.rows(),
                alpha.cols()
            )));
        }
        if beta.len() != d {
            return Err(LabError::Dimension(format!(
                "beta has length {}, expected {d}",
                beta.len()
            )));
        }
        if marks.len() != d {
            return Err(LabError::Dimension(format!(
                "marks has length {}, expected {d}",
                marks.len()
            )));
        }
        if let Some(x) = mu.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(LabError::InvalidParameter(format!(
                "baseline intensity {x} must be finite and >= 0"
            )));
        }
        if let Some(x) = alpha.as_slice().iter().find(|x| **x < 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "excitation amplitude {x} must be >= 0"
            )));
        }
        if let Some(x) = beta.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(LabError::InvalidParameter(format!(
                "decay rate {x} must be finite and > 0"
            )));
        }
        for mark in &marks {
            mark.check()?;
        }
        Ok(Self {
            mu,
            alpha,
            beta,
            marks,
        })
    }

    /// The bivariate model used in the histogram and discrepancy experiments:
    /// `A = [[1/2, 2], [2, 1/2]]`, `μ = (2, 3)`, common decay `β`, `Exp(1)` marks.
    pub fn reference_bivariate(beta: f64) -> Result<Self> {
        Self::new(
            vec![2.0, 3.0],
            Matrix::from_rows(&[[0.5, 2.0], [2.0, 0.5]])?,
            vec![beta, beta],
            vec![MarkDistribution::Exponential { rate: 1.0 }; 2],
        )
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn alpha(&self) -> &Matrix {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn marks(&self) -> &[MarkDistribution] {
        &self.marks
    }

    /// `(m^1, …, m^d)`.
    pub fn mean_marks(&self) -> Vec<f64> {
        self.marks.iter().map(MarkDistribution::mean).collect()
    }

    pub fn second_moments(&self) -> Vec<f64> {
        self.marks
            .iter()
            .map(MarkDistribution::second_moment)
            .collect()
    }

    /// `B = diag(β)`.
    pub fn b_matrix(&self) -> Matrix {
        Matrix::diag(&self.beta)
    }

    /// `A·diag(m)`.
    pub fn excitation(&self) -> Matrix {
        self.alpha.matmul(&Matrix::diag(&self.mean_marks()))
    }

    /// `V = B − A·diag(m)`.
    pub fn v_matrix(&self) -> Matrix {
        self.b_matrix().sub(&self.excitation())
    }

    /// `B⁻¹·A·diag(m)`, the matrix of mean offspring counts.
    pub fn branching_matrix(&self) -> Matrix {
        let inv_b: Vec<f64> = self.beta.iter().map(|b| 1.0 / b).collect();
        Matrix::diag(&inv_b).matmul(&self.excitation())
    }

    /// Short content hash of the canonical JSON form.
    pub fn id(&self) -> String {
        let json = serde_json::to_vec(self).expect("model serializes");
        short_hash(&json)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// First 16 hex characters of the SHA-256 digest.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(16);
    for b in &digest[..8] {
        write!(out, "{b:02x}").unwrap();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for Eigenvalue {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `ρ(B⁻¹ A diag(m))`.
    pub rho_sub: f64,
    /// Eigenvalues of `V = B − A diag(m)`.
    pub eigs_v: Vec<Eigenvalue>,
    pub assumption1_ok: bool,
    pub assumption2_ok: bool,
    pub assumption3_ok: bool,
    pub warnings: Vec<String>,
}

impl StabilityReport {
    pub fn all_ok(&self) -> bool {
        self.assumption1_ok && self.assumption2_ok && self.assumption3_ok
    }

    pub fn min_real_eig(&self) -> f64 {
        self.eigs_v
            .iter()
            .map(|e| e.re)
            .fold(f64::INFINITY, f64::min)
    }

    /// Fails with [`LabError::Unstable`] unless every check passes.
    pub fn require_ok(&self) -> Result<()> {
        if self.all_ok() {
            return Ok(());
        }
        let mut failed = Vec::new();
        if !self.assumption1_ok {
            failed.push(format!("spectral radius {} >= 1", self.rho_sub));
        }
        if !self.assumption2_ok {
            failed.push(format!(
                "eigenvalue of V with real part {} <= 0",
                self.min_real_eig()
            ));
        }
        if !self.assumption3_ok {
            failed.push("mark law without finite third moment".to_string());
        }
        Err(LabError::Unstable(failed.join("; ")))
    }
}

/// Checks subcriticality, positivity of the spectrum of `V` and finiteness of
/// third mark moments.
pub fn validate(model: &HawkesModel) -> Result<StabilityReport> {
    let d = model.dim();
    if model.alpha().rows() != d || model.beta().len() != d || model.marks().len() != d {
        return Err(LabError::Dimension("inconsistent model shapes".into()));
    }
    let mut warnings = Vec::new();

    let rho_sub = linalg::spectral_radius(&model.branching_matrix())?;
    let assumption1_ok = rho_sub < 1.0;
    if (rho_sub - 1.0).abs() < NEAR_CRITICAL {
        warnings.push(format!(
            "model is within {NEAR_CRITICAL:e} of criticality (rho = {rho_sub})"
        ));
    }

    let eigs = linalg::eigenvalues(&model.v_matrix())?;
    let assumption2_ok = eigs.iter().all(|z| z.re > 0.0);
    if eigs.iter().any(|z| z.im.abs() > EIGEN_TOL) {
        warnings.push("V has complex eigenvalues; positivity is checked on real parts".to_string());
    }
    let eigs_v = eigs
        .into_iter()
        .map(|z| {
            if z.im.abs() <= EIGEN_TOL {
                Complex64::new(z.re, 0.0)
            } else {
                z
            }
        })
        .map(Eigenvalue::from)
        .collect();

    let assumption3_ok = model.marks().iter().all(|m| {
        let (m1, m2, m3) = m.moments();
        m1.is_finite() && m2.is_finite() && m3.is_finite()
    });

    Ok(StabilityReport {
        rho_sub,
        eigs_v,
        assumption1_ok,
        assumption2_ok,
        assumption3_ok,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sorted_re(report: &StabilityReport) -> Vec<f64> {
        let mut re: Vec<f64> = report.eigs_v.iter().map(|e| e.re).collect();
        re.sort_by(f64::total_cmp);
        re
    }

    #[test]
    fn reference_model_passes() {
        let report = validate(&HawkesModel::reference_bivariate(4.0).unwrap()).unwrap();
        assert_abs_diff_eq!(report.rho_sub, 0.625, epsilon = 1e-12);
        let re = sorted_re(&report);
        assert_abs_diff_eq!(re[0], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(re[1], 5.5, epsilon = 1e-12);
        assert!(report.all_ok());
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn decoupled_model_passes() {
        let model = HawkesModel::new(
            vec![1.0, 0.0, 2.0],
            Matrix::zeros(3, 3),
            vec![1.0, 2.5, 7.0],
            vec![MarkDistribution::Constant { value: 1.0 }; 3],
        )
        .unwrap();
        let report = validate(&model).unwrap();
        assert_eq!(report.rho_sub, 0.0);
        assert_eq!(sorted_re(&report), vec![1.0, 2.5, 7.0]);
        assert!(report.all_ok());
    }

    #[test]
    fn slow_decay_fails_subcriticality() {
        let report = validate(&HawkesModel::reference_bivariate(2.4).unwrap()).unwrap();
        assert_abs_diff_eq!(report.rho_sub, 2.5 / 2.4, epsilon = 1e-12);
        assert!(!report.assumption1_ok);
        assert!(!report.assumption2_ok);
        assert!(report.require_ok().is_err());
    }

    #[test]
    fn complex_spectrum_warns() {
        // Triangular excitation keeps the spectrum of V real.
        let model = HawkesModel::new(
            vec![1.0, 1.0],
            Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap(),
            vec![2.0, 3.0],
            vec![MarkDistribution::Constant { value: 1.0 }; 2],
        )
        .unwrap();
        assert!(validate(&model).unwrap().warnings.is_empty());

        // Cyclic excitation: V = I - 0.9 P has a complex pair.
        let rotation_like = HawkesModel::new(
            vec![1.0, 1.0, 1.0],
            Matrix::from_rows(&[[0.0, 0.9, 0.0], [0.0, 0.0, 0.9], [0.9, 0.0, 0.0]]).unwrap(),
            vec![1.0, 1.0, 1.0],
            vec![MarkDistribution::Constant { value: 1.0 }; 3],
        )
        .unwrap();
        let report = validate(&rotation_like).unwrap();
        assert!(report.warnings.iter().any(|w| w.contains("complex")));
        assert!(report.eigs_v.iter().any(|e| e.im != 0.0));
        assert!(report.all_ok());
    }

    #[test]
    fn near_critical_warns() {
        let model = HawkesModel::new(
            vec![1.0],
            Matrix::from_rows(&[[1.0 - 1e-8]]).unwrap(),
            vec![1.0],
            vec![MarkDistribution::Constant { value: 1.0 }],
        )
        .unwrap();
        let report = validate(&model).unwrap();
        assert!(report.assumption1_ok);
        assert!(report.warnings.iter().any(|w| w.contains("criticality")));
    }

    #[test]
    fn constructor_rejects_bad_inputs() {
        let a = Matrix::zeros(2, 2);
        let exp1 = MarkDistribution::Exponential { rate: 1.0 };
        assert!(matches!(
            HawkesModel::new(vec![1.0], a.clone(), vec![1.0, 1.0], vec![exp1; 2]),
            Err(LabError::Dimension(_))
        ));
        assert!(
            HawkesModel::new(vec![1.0, -1.0], a.clone(), vec![1.0, 1.0], vec![exp1; 2]).is_err()
        );
        assert!(
            HawkesModel::new(vec![1.0, 1.0], a.clone(), vec![1.0, 0.0], vec![exp1; 2]).is_err()
        );
        assert!(HawkesModel::new(
            vec![1.0, 1.0],
            a.scale(-1.0).add(&Matrix::diag(&[-1.0, 0.0])),
            vec![1.0, 1.0],
            vec![exp1; 2]
        )
        .is_err());
        assert!(HawkesModel::new(
            vec![1.0, 1.0],
            a,
            vec![1.0, 1.0],
            vec![
                exp1,
                MarkDistribution::Gamma {
                    shape: 0.0,
                    rate: 1.0
                }
            ]
        )
        .is_err());
    }

    #[test]
    fn mark_moment_examples() {
        assert_eq!(
            mark_moments(&MarkDistribution::Exponential { rate: 1.0 }),
            (1.0, 2.0, 6.0)
        );
        assert_eq!(
            mark_moments(&MarkDistribution::Constant { value: 1.0 }),
            (1.0, 1.0, 1.0)
        );
        assert_eq!(
            mark_moments(&MarkDistribution::Gamma {
                shape: 2.0,
                rate: 1.0
            }),
            (2.0, 6.0, 24.0)
        );
    }

    #[test]
    fn samples_are_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dist in [
            MarkDistribution::Constant { value: 0.1 },
            MarkDistribution::Exponential { rate: 50.0 },
            MarkDistribution::Gamma {
                shape: 0.05,
                rate: 1.0,
            },
        ] {
            assert!((0..10_000).all(|_| dist.sample(&mut rng) > 0.0));
        }
    }

    #[test]
    fn json_round_trip_and_schema() {
        let model = HawkesModel::reference_bivariate(4.0).unwrap();
        let json = model.to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["d"], 2);
        assert_eq!(value["marks"][0]["kind"], "exponential");
        assert_eq!(value["marks"][0]["rate"], 1.0);
        assert_eq!(HawkesModel::from_json(&json).unwrap(), model);

        let bad = r#"{"d":3,"mu":[1,1],"alpha":[[0,0],[0,0]],"beta":[1,1],"marks":[{"kind":"constant","value":1},{"kind":"constant","value":1}]}"#;
        assert!(HawkesModel::from_json(bad).is_err());
        let gamma = r#"{"d":1,"mu":[1],"alpha":[[0.2]],"beta":[1],"marks":[{"kind":"gamma","shape":2,"rate":1}]}"#;
        let m = HawkesModel::from_json(gamma).unwrap();
        assert_eq!(
            m.marks()[0],
            MarkDistribution::Gamma {
                shape: 2.0,
                rate: 1.0
            }
        );
    }

    #[test]
    fn id_is_stable_and_parameter_sensitive() {
        let a = HawkesModel::reference_bivariate(4.0).unwrap();
        assert_eq!(a.id(), HawkesModel::reference_bivariate(4.0).unwrap().id());
        assert_ne!(a.id(), HawkesModel::reference_bivariate(6.0).unwrap().id());
        assert_eq!(a.id().len(), 16);
    }
}
