//! Simulation and verification laboratory for multivariate compound Hawkes
//! processes with exponential kernels.
//!
//! The intensity of component `i` follows
//!
//! ```text
//! λ^i_t = μ^i + Σ_k ∫_[0,t) α_ik e^{-β_i (t-s)} dL^k_s
//! ```
//!
//! where `L^k` is the cumulative sum of the positive marks attached to the
//! events of component `k`. The crate provides:
//!
//! * [`model`]: parameterization, mark laws and stability checks,
//! * [`linalg`]: the small dense kernels everything else relies on,
//! * [`simulator`]: exact thinning simulation with closed-form path integrals,
//! * [`moments`]: mean intensity and the limit covariances `C`, `C̃`, `Ĉ`,
//! * [`statistics`]: normalized functionals `F_T`, `Y_T`, `Y'_T`, `R_T`, `Γ_T`,
//! * [`coupling`]: the zero-baseline "tilde" process started from a single shock,
//! * [`mc`]: a reproducible parallel Monte Carlo harness,
//! * [`ks`]: Kolmogorov–Smirnov goodness-of-fit used by the residual checks.

pub mod coupling;
pub mod error;
pub mod ks;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod moments;
pub mod rng;
pub mod simulator;
pub mod statistics;

pub use error::{LabError, Result};
pub use linalg::Matrix;
pub use model::{HawkesModel, MarkDistribution, StabilityReport};
pub use moments::MomentSet;
pub use simulator::{EventRecord, SimulatedPath};
pub use statistics::CltSample;
