//! Exact simulation of compound Hawkes paths by thinning.
//!
//! With exponential kernels the intensity vector is Markov: between events
//! each component relaxes toward its baseline,
//!
//! ```text
//! λ^i(t) = base_i + (λ^i(t0) − base_i) · e^{-β_i (t − t0)},
//! ```
//!
//! and at an event of component `j` with mark `y` it jumps by `y·A_{·j}`.
//! Because every excess `λ^i − base_i` is nonnegative and decays, the total
//! intensity at the last state change dominates the total intensity until the
//! next change. Candidates are drawn from that constant dominating rate and
//! accepted with probability `Σλ(t)/Λ̄`; nothing is discretized.
//!
//! The integrated intensity `∫ λ_t dt` over the horizon is accumulated in
//! closed form alongside the events.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::{validate, HawkesModel};
use crate::rng::{exponential, open_unit, path_rng, PathRng};

pub const DEFAULT_EVENT_CAP: usize = 10_000_000;

/// Spacing of the scheduled refreshes of the dominating rate when no event
/// occurs.
pub const DEFAULT_REFRESH_INTERVAL: f64 = 1.0;

/// One marked event. `component` is zero-based; exports are one-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub component: usize,
    pub mark: f64,
}

/// A simulated trajectory on `[start, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPath {
    pub model_id: String,
    pub start: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Baseline the path was simulated with (`μ`, or zero for shock paths).
    pub baseline: Vec<f64>,
    /// Intensity at `start`.
    pub initial_intensity: Vec<f64>,
    /// Events in increasing time order. Empty when events were not recorded.
    pub events: Vec<EventRecord>,
    /// Intensity at the horizon.
    pub lambda_t: Vec<f64>,
    /// Cumulative marks per component.
    pub l_t: Vec<f64>,
    /// Event counts per component.
    pub h_t: Vec<u64>,
    /// `∫_start^horizon λ_t dt`, in closed form.
    pub int_lambda: Vec<f64>,
}

/// Running totals of a path observed up to some time.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub l: Vec<f64>,
    pub h: Vec<u64>,
    pub int_lambda: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub event_cap: usize,
    pub refresh_interval: f64,
    pub record_events: bool,
    /// Stop early once the dominating rate falls below this value.
    pub stop_below: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            event_cap: DEFAULT_EVENT_CAP,
            refresh_interval: DEFAULT_REFRESH_INTERVAL,
            record_events: true,
            stop_below: 0.0,
        }
    }
}

/// Thinning simulator for one validated model.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: HawkesModel,
    model_id: String,
    options: SimOptions,
    /// Column-major copy of `A` so that `A_{·j}` is contiguous.
    alpha_cols: Vec<f64>,
    common_beta: Option<f64>,
}

impl Simulator {
    /// Validates the model once; fails with [`LabError::Unstable`] if any
    /// stability assumption is violated.
    pub fn new(model: &HawkesModel) -> Result<Self> {
        validate(model)?.require_ok()?;
        Ok(Self::new_unchecked(model))
    }

    fn new_unchecked(model: &HawkesModel) -> Self {
        let d = model.dim();
        let alpha = model.alpha();
        let alpha_cols = (0..d)
            .flat_map(|j| (0..d).map(move |i| alpha[(i, j)]))
            .collect();
        let beta0 = model.beta()[0];
        let common_beta = model.beta().iter().all(|b| *b == beta0).then_some(beta0);
        Self {
            model: model.clone(),
            model_id: model.id(),
            options: SimOptions::default(),
            alpha_cols,
            common_beta,
        }
    }

    pub fn with_options(mut self, options: SimOptions) -> Self {
        self.options = options;
        self
    }

    pub fn options(&self) -> &SimOptions {
        &self.options
    }

    pub fn model(&self) -> &HawkesModel {
        &self.model
    }

    /// Simulates `[0, horizon]` from the stationary-free start `λ_0 = μ`.
    pub fn simulate(&self, horizon: f64, seed: u64) -> Result<SimulatedPath> {
        let mu = self.model.mu().to_vec();
        self.run(0.0, horizon, &mu, &mu, seed)
    }

    /// General entry point: baseline `baseline`, intensity `initial` at time
    /// `start`, run until `horizon`.
    pub fn run(
        &self,
        start: f64,
        horizon: f64,
        baseline: &[f64],
        initial: &[f64],
        seed: u64,
    ) -> Result<SimulatedPath> {
        let mut rng = path_rng(seed);
        self.run_with_rng(start, horizon, baseline, initial, seed, &mut rng)
    }

    fn run_with_rng(
        &self,
        start: f64,
        horizon: f64,
        baseline: &[f64],
        initial: &[f64],
        seed: u64,
        rng: &mut PathRng,
    ) -> Result<SimulatedPath> {
        let d = self.model.dim();
        if !(start.is_finite() && horizon.is_finite() && horizon > start) {
            return Err(LabError::InvalidParameter(format!(
                "need finite start < horizon, got [{start}, {horizon}]"
            )));
        }
        if baseline.len() != d || initial.len() != d {
            return Err(LabError::Dimension(format!(
                "baseline and initial intensity must have length {d}"
            )));
        }
        if baseline
            .iter()
            .zip(initial)
            .any(|(b, l)| !(*b >= 0.0 && l >= b && l.is_finite()))
        {
            return Err(LabError::InvalidParameter(
                "initial intensity must dominate a nonnegative baseline".into(),
            ));
        }

        let beta = self.model.beta();
        let marks = self.model.marks();
        let opts = &self.options;

        let mut events = Vec::new();
        let mut l_t = vec![0.0; d];
        let mut h_t = vec![0u64; d];
        let mut n_events = 0usize;

        // Closed-form ∫λ over [start, horizon]: baseline part plus the decay
        // of the initial excess; each event adds its own decayed kernel mass.
        let span = horizon - start;
        let mut int_lambda: Vec<f64> = (0..d)
            .map(|i| {
                baseline[i] * span
                    + (initial[i] - baseline[i]) * (-(-beta[i] * span).exp_m1()) / beta[i]
            })
            .collect();

        // State: excess intensity above baseline at anchor time t0.
        let mut t0 = start;
        let mut excess: Vec<f64> = initial.iter().zip(baseline).map(|(l, b)| l - b).collect();
        let base_total: f64 = baseline.iter().sum();
        let mut bound = base_total + excess.iter().sum::<f64>();
        let mut clock = start;
        let mut lam = vec![0.0; d];
        let mut decay = vec![0.0; d];

        loop {
            if bound <= opts.stop_below || bound <= 0.0 {
                break;
            }
            let candidate = clock + exponential(rng, bound);
            if candidate >= horizon {
                break;
            }
            if candidate > t0 + opts.refresh_interval {
                // No candidate before the refresh point: restart the
                // exponential clock there with a tighter bound.
                let refresh_at = t0 + opts.refresh_interval;
                self.decay_factors(refresh_at - t0, &mut decay);
                for i in 0..d {
                    excess[i] *= decay[i];
                }
                t0 = refresh_at;
                clock = refresh_at;
                bound = base_total + excess.iter().sum::<f64>();
                continue;
            }
            clock = candidate;

            self.decay_factors(candidate - t0, &mut decay);
            let mut total = 0.0;
            for i in 0..d {
                lam[i] = baseline[i] + excess[i] * decay[i];
                total += lam[i];
            }
            let level = open_unit(rng) * bound;
            if level > total {
                continue;
            }

            // Accepted: the level is uniform on [0, total], so it also picks
            // the component in proportion to its intensity.
            let mut j = d - 1;
            let mut acc = 0.0;
            for (i, l) in lam.iter().enumerate() {
                acc += l;
                if level <= acc {
                    j = i;
                    break;
                }
            }
            let y = marks[j].sample(rng);

            n_events += 1;
            if n_events > opts.event_cap {
                return Err(LabError::Runaway {
                    cap: opts.event_cap,
                    time: candidate,
                });
            }
            l_t[j] += y;
            h_t[j] += 1;
            if opts.record_events {
                events.push(EventRecord {
                    time: candidate,
                    component: j,
                    mark: y,
                });
            }

            let col = &self.alpha_cols[j * d..(j + 1) * d];
            self.decay_factors(horizon - candidate, &mut decay);
            for i in 0..d {
                let jump = col[i] * y;
                int_lambda[i] += jump * (1.0 - decay[i]) / beta[i];
                excess[i] = lam[i] - baseline[i] + jump;
            }
            t0 = candidate;
            bound = base_total + excess.iter().sum::<f64>();
        }

        self.decay_factors(horizon - t0, &mut decay);
        let lambda_t = (0..d).map(|i| baseline[i] + excess[i] * decay[i]).collect();

        Ok(SimulatedPath {
            model_id: self.model_id.clone(),
            start,
            horizon,
            seed,
            baseline: baseline.to_vec(),
            initial_intensity: initial.to_vec(),
            events,
            lambda_t,
            l_t,
            h_t,
            int_lambda,
        })
    }

    #[inline]
    fn decay_factors(&self, dt: f64, out: &mut [f64]) {
        match self.common_beta {
            Some(b) => out.fill((-b * dt).exp()),
            None => {
                for (o, b) in out.iter_mut().zip(self.model.beta()) {
                    *o = (-b * dt).exp();
                }
            }
        }
    }
}

/// Simulates one path of `model` on `[0, horizon]`.
pub fn simulate(model: &HawkesModel, horizon: f64, seed: u64) -> Result<SimulatedPath> {
    Simulator::new(model)?.simulate(horizon, seed)
}

impl SimulatedPath {
    pub fn dim(&self) -> usize {
        self.l_t.len()
    }

    pub fn event_count(&self) -> u64 {
        self.h_t.iter().sum()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t >= self.start && t <= self.horizon {
            Ok(())
        } else {
            Err(LabError::OutOfRange {
                t,
                start: self.start,
                end: self.horizon,
            })
        }
    }

    fn check_model(&self, model: &HawkesModel) -> Result<()> {
        if model.dim() != self.dim() {
            return Err(LabError::Dimension(format!(
                "path has dimension {}, model {}",
                self.dim(),
                model.dim()
            )));
        }
        if self.events.is_empty() && self.event_count() > 0 {
            return Err(LabError::InvalidParameter(
                "path was simulated without recording events".into(),
            ));
        }
        Ok(())
    }

    /// Left-limit intensity `λ_{t-}`, summing the kernel over events before `t`.
    pub fn intensity_at(&self, model: &HawkesModel, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        self.check_model(model)?;
        let d = self.dim();
        let beta = model.beta();
        let alpha = model.alpha();
        let mut lam: Vec<f64> = (0..d)
            .map(|i| {
                self.baseline[i]
                    + (self.initial_intensity[i] - self.baseline[i])
                        * (-beta[i] * (t - self.start)).exp()
            })
            .collect();
        for ev in self.events.iter().take_while(|e| e.time < t) {
            for (i, l) in lam.iter_mut().enumerate() {
                *l += alpha[(i, ev.component)] * ev.mark * (-beta[i] * (t - ev.time)).exp();
            }
        }
        Ok(lam)
    }

    /// Cumulative marks, counts and integrated intensity over `[start, t]`.
    pub fn state_at(&self, model: &HawkesModel, t: f64) -> Result<PathState> {
        self.check_time(t)?;
        self.check_model(model)?;
        let d = self.dim();
        let beta = model.beta();
        let alpha = model.alpha();
        let span = t - self.start;
        let mut l = vec![0.0; d];
        let mut h = vec![0u64; d];
        let mut int_lambda: Vec<f64> = (0..d)
            .map(|i| {
                self.baseline[i] * span
                    + (self.initial_intensity[i] - self.baseline[i]) * (-(-beta[i] * span).exp_m1())
                        / beta[i]
            })
            .collect();
        for ev in self.events.iter().take_while(|e| e.time < t) {
            l[ev.component] += ev.mark;
            h[ev.component] += 1;
            for (i, acc) in int_lambda.iter_mut().enumerate() {
                *acc += alpha[(i, ev.component)] * ev.mark * (-(-beta[i] * (t - ev.time)).exp_m1())
                    / beta[i];
            }
        }
        Ok(PathState { l, h, int_lambda })
    }

    /// Time-rescaled inter-event gaps per component:
    /// `Λ^j(τ^j_k) − Λ^j(τ^j_{k−1})` with `Λ^j(t) = ∫_start^t λ^j`, the first
    /// gap measured from `start`. For a correct simulator these are i.i.d.
    /// `Exp(1)`.
    pub fn rescaled_gaps(&self, model: &HawkesModel) -> Result<Vec<Vec<f64>>> {
        self.check_model(model)?;
        let d = self.dim();
        let beta = model.beta();
        let alpha = model.alpha();
        let mut excess: Vec<f64> = self
            .initial_intensity
            .iter()
            .zip(&self.baseline)
            .map(|(l, b)| l - b)
            .collect();
        let mut compensator = vec![0.0; d];
        let mut last = vec![0.0; d];
        let mut gaps = vec![Vec::new(); d];
        let mut t_prev = self.start;
        for ev in &self.events {
            let dt = ev.time - t_prev;
            for i in 0..d {
                let decay = (-beta[i] * dt).exp();
                compensator[i] += self.baseline[i] * dt + excess[i] * (1.0 - decay) / beta[i];
                excess[i] *= decay;
            }
            let j = ev.component;
            gaps[j].push(compensator[j] - last[j]);
            last[j] = compensator[j];
            for (i, e) in excess.iter_mut().enumerate() {
                *e += alpha[(i, j)] * ev.mark;
            }
            t_prev = ev.time;
        }
        Ok(gaps)
    }

    /// Writes `time,component,mark` rows (components one-based).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time,component,mark")?;
        for ev in &self.events {
            writeln!(out, "{},{},{}", ev.time, ev.component + 1, ev.mark)?;
        }
        Ok(())
    }

    pub fn sidecar(&self) -> PathSidecar {
        PathSidecar {
            model_id: self.model_id.clone(),
            start: self.start,
            horizon: self.horizon,
            seed: self.seed,
            n_events: self.event_count(),
            l_t: self.l_t.clone(),
            h_t: self.h_t.clone(),
            int_lambda: self.int_lambda.clone(),
            lambda_t: self.lambda_t.clone(),
        }
    }
}

/// JSON companion of the CSV event export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSidecar {
    pub model_id: String,
    pub start: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
    pub n_events: u64,
    #[serde(rename = "L_T")]
    pub l_t: Vec<f64>,
    #[serde(rename = "H_T")]
    pub h_t: Vec<u64>,
    pub int_lambda: Vec<f64>,
    #[serde(rename = "lambda_T")]
    pub lambda_t: Vec<f64>,
}
