mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hawkes_lab::coupling::TildeConfig;
use hawkes_lab::mc::{self, ExperimentConfig, ExperimentSummary};
use hawkes_lab::model::validate;
use hawkes_lab::moments::{self, MomentSet};
use hawkes_lab::simulator::Simulator;
use hawkes_lab::{HawkesModel, LabError};
use serde::Serialize;

use config::{ExperimentSection, LoadedConfig};

#[derive(Debug, Parser)]
#[command(
    name = "hawkes-lab",
    version,
    about = "Compound Hawkes process simulation and CLT experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file; every section is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "HAWKES_LAB_THREADS")]
    threads: Option<usize>,
    /// Configuration override `key=value`, e.g. `beta=6` or `clt.n_paths=1000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the stability report; exit 2 if an assumption fails.
    Validate,
    /// Simulate one path and write its events and terminal state.
    Simulate,
    /// Write the derived moment matrices.
    Moments,
    /// Run one CLT experiment.
    Clt,
    /// Run the test-function discrepancy sweep over horizons.
    Sweep,
    /// Check the shock process against its mean.
    TildeCheck,
}

/// Failure classes, one per exit code.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Assumption(String),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Assumption(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Unstable(msg) => Self::Assumption(msg),
            LabError::Dimension(_)
            | LabError::InvalidParameter(_)
            | LabError::NotEnoughSamples { .. }
            | LabError::OutOfRange { .. }
            | LabError::Serde(_) => Self::Usage(e.into()),
            other => Self::Runtime(other.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::Runtime(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) => eprintln!("error: {e:#}"),
                Failure::Assumption(msg) => eprintln!("model fails assumptions: {msg}"),
                Failure::Runtime(e) => eprintln!("runtime error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let mut loaded = config::load(cli.config.as_deref(), &cli.overrides).map_err(Failure::Usage)?;
    if let Some(seed) = cli.seed {
        loaded.config.seed = seed;
        loaded.overrides.push(format!("seed={seed}"));
    }
    if cli.threads == Some(0) {
        return Err(Failure::Usage(anyhow::anyhow!(
            "--threads must be positive"
        )));
    }
    let threads = cli.threads;
    let out = cli.out.as_path();
    match cli.command {
        Command::Validate => cmd_validate(&loaded, out),
        Command::Simulate => cmd_simulate(&loaded, out),
        Command::Moments => cmd_moments(&loaded, out),
        Command::Clt => {
            let section = loaded.config.clt.clone();
            in_pool(threads, || {
                cmd_experiment(&loaded, &section, 4.0, out, "clt")
            })
        }
        Command::Sweep => {
            let section = loaded.config.sweep.clone();
            in_pool(threads, || {
                cmd_experiment(&loaded, &section, 6.0, out, "sweep")
            })
        }
        Command::TildeCheck => in_pool(threads, || cmd_tilde(&loaded, out)),
    }
}

fn in_pool(threads: Option<usize>, f: impl FnOnce() -> Outcome + Send) -> Outcome {
    mc::with_threads(threads, f)?
}

fn prepare_out(out: &Path) -> Outcome {
    fs::create_dir_all(out)
        .map_err(|e| Failure::Usage(anyhow::anyhow!("cannot create {}: {e}", out.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Stamp {
    model_id: String,
    seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
}

fn stamp(loaded: &LoadedConfig, model: &HawkesModel, default_note: Option<String>) -> Stamp {
    let mut notes: Vec<String> = default_note.into_iter().collect();
    notes.extend(loaded.override_notes());
    Stamp {
        model_id: model.id(),
        seed: loaded.config.seed,
        notes,
    }
}

fn cmd_validate(loaded: &LoadedConfig, _out: &Path) -> Outcome {
    let (model, _) = loaded.model(4.0).map_err(Failure::Usage)?;
    let report = validate(&model)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    report.require_ok()?;
    Ok(())
}

fn cmd_simulate(loaded: &LoadedConfig, out: &Path) -> Outcome {
    let (model, note) = loaded.model(4.0).map_err(Failure::Usage)?;
    let sim = Simulator::new(&model)?;
    let path = sim.simulate(loaded.config.simulate.horizon, loaded.config.seed)?;
    prepare_out(out)?;
    let mut w = BufWriter::new(File::create(out.join("path.csv"))?);
    path.write_csv(&mut w)?;
    w.flush()?;

    #[derive(Serialize)]
    struct PathFile {
        #[serde(flatten)]
        sidecar: hawkes_lab::simulator::PathSidecar,
        #[serde(skip_serializing_if = "Vec::is_empty")]
        notes: Vec<String>,
    }
    let notes = stamp(loaded, &model, note).notes;
    write_json(
        &out.join("path.json"),
        &PathFile {
            sidecar: path.sidecar(),
            notes,
        },
    )?;
    eprintln!("{} events written to {}", path.event_count(), out.display());
    Ok(())
}

fn cmd_moments(loaded: &LoadedConfig, out: &Path) -> Outcome {
    let (model, note) = loaded.model(4.0).map_err(Failure::Usage)?;
    let set = moments::limit_covariances(&model)?;

    #[derive(Serialize)]
    struct MomentsFile {
        #[serde(flatten)]
        moments: MomentSet,
        provenance: Stamp,
    }
    prepare_out(out)?;
    write_json(
        &out.join("moments.json"),
        &MomentsFile {
            moments: set,
            provenance: stamp(loaded, &model, note),
        },
    )?;
    eprintln!("moments written to {}", out.join("moments.json").display());
    Ok(())
}

fn cmd_experiment(
    loaded: &LoadedConfig,
    section: &ExperimentSection,
    default_beta: f64,
    out: &Path,
    name: &str,
) -> Outcome {
    let (model, note) = loaded.model(default_beta).map_err(Failure::Usage)?;
    let cfg = ExperimentConfig {
        model,
        statistic: section.statistic.clone(),
        horizons: section.horizons.clone(),
        n_paths: section.n_paths,
        master_seed: loaded.config.seed,
        test_function: section.test_function,
        histogram: section.histogram.clone(),
    };
    let mut summary: ExperimentSummary = mc::run_experiment(&cfg)?;
    summary.provenance.notes.extend(note);
    summary.provenance.notes.extend(loaded.override_notes());

    prepare_out(out)?;
    write_json(&out.join("summary.json"), &summary)?;
    if cfg.test_function.is_some() {
        let mut w = BufWriter::new(File::create(out.join("discrepancy.csv"))?);
        summary.write_discrepancy_csv(&mut w)?;
        w.flush()?;
    }
    let mut timing = Vec::new();
    for r in &summary.records {
        if let Some(h) = &r.histogram {
            let mut w = BufWriter::new(File::create(
                out.join(format!("histogram_T{}.csv", r.horizon)),
            )?);
            h.write_csv(&mut w)?;
            w.flush()?;
        }
        timing.push(serde_json::json!({"T": r.horizon, "wall_time_secs": r.wall_time_secs}));
        eprintln!(
            "{name} T={}: max|z|={:.2}{}  ({:.1}s)",
            r.horizon,
            r.max_abs_z,
            r.test_function
                .as_ref()
                .map(|t| format!(", discrepancy={:.5} (se {:.5})", t.discrepancy, t.se))
                .unwrap_or_default(),
            r.wall_time_secs
        );
    }
    // Timing is kept apart from the summary so the summary stays reproducible.
    write_json(&out.join("timing.json"), &timing)?;
    Ok(())
}

fn cmd_tilde(loaded: &LoadedConfig, out: &Path) -> Outcome {
    let (model, note) = loaded.model(4.0).map_err(Failure::Usage)?;
    let t = &loaded.config.tilde;
    if t.component == 0 {
        return Err(Failure::Usage(anyhow::anyhow!(
            "tilde.component is one-based"
        )));
    }
    let cfg = TildeConfig {
        model: model.clone(),
        component: t.component - 1,
        start: t.start,
        mark: t.mark,
        horizon: t.horizon,
    };
    let check = mc::tilde_check(&cfg, &t.grid, t.n_runs, loaded.config.seed)?;

    #[derive(Serialize)]
    struct TildeFile {
        #[serde(flatten)]
        check: mc::TildeCheck,
        max_abs_z: f64,
        provenance: Stamp,
    }
    prepare_out(out)?;
    let max_abs_z = check.max_abs_z();
    write_json(
        &out.join("tilde.json"),
        &TildeFile {
            check,
            max_abs_z,
            provenance: stamp(loaded, &model, note),
        },
    )?;
    eprintln!("tilde-check: max|z| = {max_abs_z:.2}");
    Ok(())
}
