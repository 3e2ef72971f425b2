//! Monte Carlo harness.
//!
//! Paths are simulated in parallel, each from its own stream
//! `stream_seed(master_seed, index)`. Results are collected by index and
//! aggregated sequentially with compensated sums after every worker has
//! finished, so a summary depends on the configuration only and never on the
//! number of threads.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{tilde_expected_counts, tilde_mean, TildeConfig, TildeSimulator};
use crate::error::{LabError, Result};
use crate::linalg::{self, Matrix};
use crate::model::{short_hash, validate, HawkesModel};
use crate::moments::{self, check_time_fractions};
use crate::rng::{fill_standard_normal, path_rng, stream_seed};
use crate::simulator::{SimOptions, Simulator};
use crate::statistics::{batch_covariance, compensated_sum, CltContext, CovarianceEstimate};

/// Which normalized vector an experiment collects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Yprime,
    F,
    Y,
    Gamma { v_grid: Vec<f64> },
}

impl Statistic {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Yprime => "yprime",
            Self::F => "f",
            Self::Y => "y",
            Self::Gamma { .. } => "gamma",
        }
    }
}

/// Smooth test function with a closed-form Gaussian expectation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    /// `f(x) = exp(−scale·‖x‖²)`.
    ExpQuadratic { scale: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Self::ExpQuadratic { scale } => (-scale * x.iter().map(|v| v * v).sum::<f64>()).exp(),
        }
    }

    pub fn gaussian_reference(&self, sigma: &Matrix) -> Result<f64> {
        match *self {
            Self::ExpQuadratic { scale } => moments::exp_quadratic_expectation(sigma, scale),
        }
    }
}

impl Default for TestFunction {
    fn default() -> Self {
        Self::ExpQuadratic { scale: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bins_x: usize,
    pub bins_y: usize,
    /// `[[x_lo, x_hi], [y_lo, y_hi]]`.
    pub range: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: HawkesModel,
    pub statistic: Statistic,
    #[serde(alias = "T_list")]
    pub horizons: Vec<f64>,
    pub n_paths: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_function: Option<TestFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramSpec>,
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(LabError::NotEnoughSamples {
                needed: 2,
                got: self.n_paths,
            });
        }
        if self.horizons.is_empty() || self.horizons.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(LabError::InvalidParameter(format!(
                "horizons {:?} must be nonempty and positive",
                self.horizons
            )));
        }
        if let Statistic::Gamma { v_grid } = &self.statistic {
            check_time_fractions(v_grid)?;
        }
        if let Some(TestFunction::ExpQuadratic { scale }) = self.test_function {
            if !(scale >= 0.0 && scale.is_finite()) {
                return Err(LabError::InvalidParameter(format!(
                    "test function scale {scale} must be >= 0"
                )));
            }
        }
        if let Some(h) = &self.histogram {
            check_histogram(h)?;
            if self.statistic_dim() != 2 {
                return Err(LabError::Dimension(
                    "histograms need a two-dimensional statistic".into(),
                ));
            }
        }
        validate(&self.model)?.require_ok()
    }

    pub fn statistic_dim(&self) -> usize {
        match &self.statistic {
            Statistic::Gamma { v_grid } => v_grid.len() * self.model.dim(),
            _ => self.model.dim(),
        }
    }

    /// Short hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        short_hash(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionRecord {
    /// `(1/n) Σ f(X_k)`.
    pub estimate: f64,
    /// `E[f(G)]` for `G ∼ N(0, Σ)`.
    pub reference: f64,
    /// `estimate − reference`.
    pub discrepancy: f64,
    /// Standard error of the estimate.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRecord {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub covariance: Matrix,
    pub covariance_se: Matrix,
    pub theoretical_covariance: Matrix,
    pub z_scores: Matrix,
    pub max_abs_z: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test_function: Option<TestFunctionRecord>,
    /// Deterministic gap `Y_T − Y'_T`.
    pub centering_remainder: Vec<f64>,
    /// Largest `|Y_T − J F_T − R_T|` over all paths.
    pub max_decomposition_error: f64,
    pub mean_event_count: f64,
    #[serde(skip)]
    pub histogram: Option<HistogramPair>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub n_paths: usize,
    pub model_id: String,
    pub config_hash: String,
    pub statistic: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub provenance: Provenance,
    pub records: Vec<HorizonRecord>,
}

impl ExperimentSummary {
    /// `T,estimate,reference,discrepancy,se` rows for horizons with a test function.
    pub fn write_discrepancy_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "T,estimate,reference,discrepancy,se")?;
        for r in &self.records {
            if let Some(tf) = &r.test_function {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.horizon, tf.estimate, tf.reference, tf.discrepancy, tf.se
                )?;
            }
        }
        Ok(())
    }
}

/// Per-path output retained until aggregation.
struct PathResult {
    stat: Vec<f64>,
    f_value: f64,
    decomposition_error: f64,
    events: u64,
}

/// Limit covariance matching a statistic.
pub fn theoretical_covariance(model: &HawkesModel, statistic: &Statistic) -> Result<Matrix> {
    Ok(match statistic {
        Statistic::F => moments::limit_covariances(model)?.c,
        Statistic::Y | Statistic::Yprime => moments::limit_covariances(model)?.ctilde,
        Statistic::Gamma { v_grid } => moments::multimarginal_covariance(model, v_grid)?,
    })
}

/// Runs the experiment on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.check()?;
    let theory = theoretical_covariance(&cfg.model, &cfg.statistic)?;
    let reference = cfg
        .test_function
        .map(|tf| tf.gaussian_reference(&theory))
        .transpose()?;
    let v_grid = match &cfg.statistic {
        Statistic::Gamma { v_grid } => Some(v_grid.as_slice()),
        _ => None,
    };
    let sim = Simulator::new(&cfg.model)?.with_options(SimOptions {
        record_events: v_grid.is_some(),
        ..SimOptions::default()
    });

    let mut records = Vec::with_capacity(cfg.horizons.len());
    for (t_idx, &horizon) in cfg.horizons.iter().enumerate() {
        let started = Instant::now();
        let ctx = CltContext::new(&cfg.model, horizon)?;
        let offset = (t_idx * cfg.n_paths) as u64;
        let results: Vec<PathResult> = (0..cfg.n_paths)
            .into_par_iter()
            .map(|k| {
                let path =
                    sim.simulate(horizon, stream_seed(cfg.master_seed, offset + k as u64))?;
                let sample = ctx.sample(&path, v_grid)?;
                let decomposition_error = sample.decomposition_error(ctx.j());
                let stat = match &cfg.statistic {
                    Statistic::Yprime => sample.yprime_t,
                    Statistic::F => sample.f_t,
                    Statistic::Y => sample.y_t,
                    Statistic::Gamma { .. } => sample.gamma_t.expect("grid supplied"),
                };
                let f_value = cfg.test_function.map_or(0.0, |tf| tf.eval(&stat));
                Ok(PathResult {
                    stat,
                    f_value,
                    decomposition_error,
                    events: path.event_count(),
                })
            })
            .collect::<Result<_>>()?;

        // Sequential, index-ordered aggregation.
        let stats: Vec<&[f64]> = results.iter().map(|r| r.stat.as_slice()).collect();
        let est = batch_covariance(&stats)?;
        let test_function = reference.map(|reference| {
            let values = results.iter().map(|r| r.f_value);
            test_function_record(values, reference, cfg.n_paths)
        });
        let histogram = cfg
            .histogram
            .as_ref()
            .map(|spec| {
                let empirical = histogram2d(&stats, spec)?;
                let gaussian = sample_gaussian(
                    &theory,
                    cfg.n_paths,
                    stream_seed(cfg.master_seed, !(t_idx as u64)),
                )?;
                Ok::<_, LabError>(HistogramPair {
                    gaussian: histogram2d(&gaussian, spec)?,
                    empirical,
                })
            })
            .transpose()?;
        let centering_remainder = moments::centering_remainder(&cfg.model, horizon)?;
        let max_decomposition_error = results
            .iter()
            .map(|r| r.decomposition_error)
            .fold(0.0, f64::max);
        let mean_event_count =
            compensated_sum(results.iter().map(|r| r.events as f64)) / cfg.n_paths as f64;

        records.push(horizon_record(
            horizon,
            est,
            theory.clone(),
            test_function,
            centering_remainder,
            max_decomposition_error,
            mean_event_count,
            histogram,
            started.elapsed().as_secs_f64(),
        ));
    }

    Ok(ExperimentSummary {
        provenance: Provenance {
            master_seed: cfg.master_seed,
            n_paths: cfg.n_paths,
            model_id: cfg.model.id(),
            config_hash: cfg.hash(),
            statistic: cfg.statistic.name().to_string(),
            notes: Vec::new(),
        },
        records,
    })
}

#[allow(clippy::too_many_arguments)]
fn horizon_record(
    horizon: f64,
    est: CovarianceEstimate,
    theory: Matrix,
    test_function: Option<TestFunctionRecord>,
    centering_remainder: Vec<f64>,
    max_decomposition_error: f64,
    mean_event_count: f64,
    histogram: Option<HistogramPair>,
    wall_time_secs: f64,
) -> HorizonRecord {
    let z_scores = est.z_scores(&theory);
    HorizonRecord {
        horizon,
        max_abs_z: z_scores.max_abs(),
        z_scores,
        mean: est.mean,
        mean_se: est.mean_se,
        covariance: est.covariance,
        covariance_se: est.covariance_se,
        theoretical_covariance: theory,
        test_function,
        centering_remainder,
        max_decomposition_error,
        mean_event_count,
        histogram,
        wall_time_secs,
    }
}

fn test_function_record(
    values: impl Iterator<Item = f64> + Clone,
    reference: f64,
    n: usize,
) -> TestFunctionRecord {
    let nf = n as f64;
    let estimate = compensated_sum(values.clone()) / nf;
    let var = compensated_sum(values.map(|v| (v - estimate) * (v - estimate))) / (nf - 1.0);
    TestFunctionRecord {
        estimate,
        reference,
        discrepancy: estimate - reference,
        se: (var / nf).sqrt(),
    }
}

/// Runs `f` on a dedicated pool with `threads` workers (`None` = rayon default).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| LabError::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// `n` draws of `N(0, Σ)` as `L·z`, with `L` the Cholesky factor of `Σ` and
/// `z` standard normals from the polar method.
pub fn sample_gaussian(sigma: &Matrix, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let chol = linalg::cholesky(sigma)?;
    let k = sigma.rows();
    let mut rng = path_rng(seed);
    let mut z = vec![0.0; k];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        fill_standard_normal(&mut rng, &mut z);
        out.push(chol.lower.matvec(&z));
    }
    Ok(out)
}

/// Counts on a regular 2-D grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub edges_x: Vec<f64>,
    pub edges_y: Vec<f64>,
    /// `counts[ix][iy]`.
    pub counts: Vec<Vec<u64>>,
    pub in_range: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramPair {
    pub empirical: Histogram2d,
    pub gaussian: Histogram2d,
}

impl HistogramPair {
    /// `x_lo,x_hi,y_lo,y_hi,empirical,gaussian` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x_lo,x_hi,y_lo,y_hi,empirical,gaussian")?;
        let h = &self.empirical;
        for ix in 0..h.counts.len() {
            for iy in 0..h.counts[ix].len() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    h.edges_x[ix],
                    h.edges_x[ix + 1],
                    h.edges_y[iy],
                    h.edges_y[iy + 1],
                    h.counts[ix][iy],
                    self.gaussian.counts[ix][iy]
                )?;
            }
        }
        Ok(())
    }
}

fn check_histogram(spec: &HistogramSpec) -> Result<()> {
    let ok_axis = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] < r[1];
    if spec.bins_x == 0 || spec.bins_y == 0 || !ok_axis(spec.range[0]) || !ok_axis(spec.range[1]) {
        return Err(LabError::InvalidParameter(format!(
            "invalid histogram spec {spec:?}"
        )));
    }
    Ok(())
}

fn edges(range: [f64; 2], bins: usize) -> Vec<f64> {
    (0..=bins)
        .map(|k| {
            if k == bins {
                range[1]
            } else {
                range[0] + (range[1] - range[0]) * k as f64 / bins as f64
            }
        })
        .collect()
}

/// Index of the bin holding `x`; bins are `[e_k, e_{k+1})` except the last,
/// which is closed.
fn bin_of(x: f64, edges: &[f64]) -> Option<usize> {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    if !(x >= lo && x <= hi) {
        return None;
    }
    let mut idx = (((x - lo) / (hi - lo)) * bins as f64).floor() as usize;
    idx = idx.min(bins - 1);
    // Reconcile the arithmetic guess with the reported edges.
    while idx > 0 && x < edges[idx] {
        idx -= 1;
    }
    while idx + 1 < bins && x >= edges[idx + 1] {
        idx += 1;
    }
    Some(idx)
}

pub fn histogram2d<S: AsRef<[f64]>>(samples: &[S], spec: &HistogramSpec) -> Result<Histogram2d> {
    check_histogram(spec)?;
    let edges_x = edges(spec.range[0], spec.bins_x);
    let edges_y = edges(spec.range[1], spec.bins_y);
    let mut counts = vec![vec![0u64; spec.bins_y]; spec.bins_x];
    let mut in_range = 0;
    for s in samples {
        let s = s.as_ref();
        if s.len() != 2 {
            return Err(LabError::Dimension(format!(
                "histogram2d needs 2-D samples, got length {}",
                s.len()
            )));
        }
        if let (Some(ix), Some(iy)) = (bin_of(s[0], &edges_x), bin_of(s[1], &edges_y)) {
            counts[ix][iy] += 1;
            in_range += 1;
        }
    }
    Ok(Histogram2d {
        edges_x,
        edges_y,
        counts,
        in_range,
        total: samples.len() as u64,
    })
}

/// Monte Carlo mean of a vector quantity next to its exact value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanComparison {
    /// Time (or grid point) the quantity is evaluated at.
    pub t: f64,
    pub mc_mean: Vec<f64>,
    pub se: Vec<f64>,
    pub exact: Vec<f64>,
    pub z: Vec<f64>,
}

impl MeanComparison {
    fn from_samples(t: f64, samples: &[Vec<f64>], exact: Vec<f64>) -> Result<Self> {
        let est = batch_covariance(samples)?;
        let z = est
            .mean
            .iter()
            .zip(&est.mean_se)
            .zip(&exact)
            .map(|((m, se), e)| if m == e { 0.0 } else { (m - e) / se })
            .collect();
        Ok(Self {
            t,
            mc_mean: est.mean,
            se: est.mean_se,
            exact,
            z,
        })
    }

    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().fold(0.0, |m, z| m.max(z.abs()))
    }
}

/// MC mean of `λ_t` on a time grid against `E[λ_t]`.
pub fn mean_intensity_check(
    model: &HawkesModel,
    times: &[f64],
    n_paths: usize,
    master_seed: u64,
) -> Result<Vec<MeanComparison>> {
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(LabError::InvalidParameter(format!(
            "invalid time grid {times:?}"
        )));
    }
    let horizon = times
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE)
        * (1.0 + 1e-9);
    let sim = Simulator::new(model)?;
    let per_path: Vec<Vec<Vec<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let path = sim.simulate(horizon, stream_seed(master_seed, k as u64))?;
            times.iter().map(|&t| path.intensity_at(model, t)).collect()
        })
        .collect::<Result<_>>()?;
    times
        .iter()
        .enumerate()
        .map(|(q, &t)| {
            let samples: Vec<Vec<f64>> = per_path.iter().map(|p| p[q].clone()).collect();
            MeanComparison::from_samples(t, &samples, moments::mean_intensity(model, t)?)
        })
        .collect()
}

/// Result of the shock-process verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TildeCheck {
    pub config: TildeConfig,
    pub n_runs: usize,
    pub master_seed: u64,
    /// MC mean of `λ̃_s` against `x e^{-V(s−t)} A_{·j}`.
    pub intensity: Vec<MeanComparison>,
    /// MC mean of the event counts against their closed form.
    pub counts: MeanComparison,
    /// Per-component z-score of `mean(H̃) − mean(∫λ̃)`.
    pub compensator_z: Vec<f64>,
    pub empty_fraction: f64,
}

impl TildeCheck {
    pub fn max_abs_z(&self) -> f64 {
        self.intensity
            .iter()
            .map(MeanComparison::max_abs_z)
            .chain([self.counts.max_abs_z()])
            .chain(self.compensator_z.iter().map(|z| z.abs()))
            .fold(0.0, f64::max)
    }
}

pub fn tilde_check(
    cfg: &TildeConfig,
    grid: &[f64],
    n_runs: usize,
    master_seed: u64,
) -> Result<TildeCheck> {
    if grid.iter().any(|s| !(*s >= cfg.start && *s <= cfg.horizon)) {
        return Err(LabError::InvalidParameter(format!(
            "grid {grid:?} must lie in [{}, {}]",
            cfg.start, cfg.horizon
        )));
    }
    let sim = TildeSimulator::new(cfg)?;
    struct Run {
        lambdas: Vec<Vec<f64>>,
        counts: Vec<f64>,
        gap: Vec<f64>,
        empty: bool,
    }
    let runs: Vec<Run> = (0..n_runs)
        .into_par_iter()
        .map(|k| {
            let path = sim.simulate(stream_seed(master_seed, k as u64))?;
            let lambdas = grid
                .iter()
                .map(|&s| path.intensity_at(&cfg.model, s))
                .collect::<Result<_>>()?;
            let counts: Vec<f64> = path.h_t.iter().map(|h| *h as f64).collect();
            let gap = counts
                .iter()
                .zip(&path.int_lambda)
                .map(|(h, i)| h - i)
                .collect();
            Ok(Run {
                lambdas,
                counts,
                gap,
                empty: path.events.is_empty(),
            })
        })
        .collect::<Result<_>>()?;

    let intensity = grid
        .iter()
        .enumerate()
        .map(|(q, &s)| {
            let samples: Vec<Vec<f64>> = runs.iter().map(|r| r.lambdas[q].clone()).collect();
            MeanComparison::from_samples(s, &samples, tilde_mean(cfg, s)?)
        })
        .collect::<Result<_>>()?;
    let counts_samples: Vec<Vec<f64>> = runs.iter().map(|r| r.counts.clone()).collect();
    let counts =
        MeanComparison::from_samples(cfg.horizon, &counts_samples, tilde_expected_counts(cfg)?)?;
    let gaps: Vec<Vec<f64>> = runs.iter().map(|r| r.gap.clone()).collect();
    let gap_est = batch_covariance(&gaps)?;
    let compensator_z = gap_est
        .mean
        .iter()
        .zip(&gap_est.mean_se)
        .map(|(m, se)| if *m == 0.0 { 0.0 } else { m / se })
        .collect();
    let empty_fraction = runs.iter().filter(|r| r.empty).count() as f64 / n_runs.max(1) as f64;
    Ok(TildeCheck {
        config: cfg.clone(),
        n_runs,
        master_seed,
        intensity,
        counts,
        compensator_z,
        empty_fraction,
    })
}
