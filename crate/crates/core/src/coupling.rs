//! The zero-baseline shock process.
//!
//! Inserting an extra event of component `j` with mark `x` at time `t` into a
//! path perturbs every later intensity. The perturbation is itself a
//! (generalized) Hawkes process with the same kernels, no baseline, and
//! initial intensity `x·A_{·j}` at `t`. Its mean solves
//! `d/ds E[λ̃_s] = −V E[λ̃_s]`, hence
//!
//! ```text
//! E[λ̃_s] = x · e^{-V(s − t)} · A_{·j}.
//! ```
//!
//! Under subcriticality the shock dies out almost surely; paths are often
//! empty.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg;
use crate::model::HawkesModel;
use crate::simulator::{SimOptions, SimulatedPath, Simulator};

/// Shock processes are abandoned once their total intensity drops below this.
pub const DEATH_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TildeConfig {
    pub model: HawkesModel,
    /// Zero-based component of the inserted event.
    pub component: usize,
    pub start: f64,
    /// Mark of the inserted event.
    pub mark: f64,
    pub horizon: f64,
}

impl TildeConfig {
    pub fn check(&self) -> Result<()> {
        if self.component >= self.model.dim() {
            return Err(LabError::InvalidParameter(format!(
                "component {} out of range for dimension {}",
                self.component,
                self.model.dim()
            )));
        }
        if !(self.mark > 0.0 && self.mark.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "shock mark {} must be positive",
                self.mark
            )));
        }
        if !(self.start.is_finite() && self.horizon.is_finite() && self.horizon > self.start) {
            return Err(LabError::InvalidParameter(format!(
                "need start < horizon, got [{}, {}]",
                self.start, self.horizon
            )));
        }
        Ok(())
    }

    /// `x·A_{·j}`.
    pub fn initial_intensity(&self) -> Vec<f64> {
        self.model
            .alpha()
            .column(self.component)
            .into_iter()
            .map(|a| a * self.mark)
            .collect()
    }
}

/// Reusable simulator for many runs of one configuration.
#[derive(Debug, Clone)]
pub struct TildeSimulator {
    cfg: TildeConfig,
    sim: Simulator,
    baseline: Vec<f64>,
    initial: Vec<f64>,
}

impl TildeSimulator {
    pub fn new(cfg: &TildeConfig) -> Result<Self> {
        cfg.check()?;
        let sim = Simulator::new(&cfg.model)?.with_options(SimOptions {
            stop_below: DEATH_THRESHOLD,
            ..SimOptions::default()
        });
        Ok(Self {
            baseline: vec![0.0; cfg.model.dim()],
            initial: cfg.initial_intensity(),
            cfg: cfg.clone(),
            sim,
        })
    }

    pub fn with_options(mut self, options: SimOptions) -> Self {
        self.sim = self.sim.with_options(options);
        self
    }

    pub fn config(&self) -> &TildeConfig {
        &self.cfg
    }

    pub fn simulate(&self, seed: u64) -> Result<SimulatedPath> {
        self.sim.run(
            self.cfg.start,
            self.cfg.horizon,
            &self.baseline,
            &self.initial,
            seed,
        )
    }
}

/// Simulates one shock path on `[t, horizon]`.
pub fn simulate_tilde(cfg: &TildeConfig, seed: u64) -> Result<SimulatedPath> {
    TildeSimulator::new(cfg)?.simulate(seed)
}

/// `E[λ̃_s] = x e^{-V(s−t)} A_{·j}`.
pub fn tilde_mean(cfg: &TildeConfig, s: f64) -> Result<Vec<f64>> {
    cfg.check()?;
    if !(s >= cfg.start && s.is_finite()) {
        return Err(LabError::OutOfRange {
            t: s,
            start: cfg.start,
            end: f64::INFINITY,
        });
    }
    let decay = linalg::mat_exp(&cfg.model.v_matrix(), -(s - cfg.start))?;
    Ok(decay.matvec(&cfg.initial_intensity()))
}

/// Expected event counts on `[t, horizon]`: `V⁻¹(I − e^{-V(horizon−t)}) x A_{·j}`.
pub fn tilde_expected_counts(cfg: &TildeConfig) -> Result<Vec<f64>> {
    cfg.check()?;
    let v = cfg.model.v_matrix();
    let initial = cfg.initial_intensity();
    let decayed = linalg::mat_exp(&v, -(cfg.horizon - cfg.start))?.matvec(&initial);
    let diff: Vec<f64> = initial.iter().zip(decayed).map(|(a, b)| a - b).collect();
    linalg::solve(&v, &diff)
}
