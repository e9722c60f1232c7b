//! Running configured experiments and aggregating their outputs.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use abcaw::diagnostics::{
    efficiency_table, exact_mixture_posterior, kde_grid, write_density_csv, EfficiencyTable,
    VariantRuns,
};
use abcaw::engine::read_trace_csv;
use abcaw::particle::weighted_mean_var;
use abcaw::{run, ParticleSystem, RunTrace, Variant};
use serde::Serialize;

use crate::config::{ExperimentConfig, ModelConfig, Resolution};
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const RESOLVED: &str = "resolved.toml";
pub const EFFICIENCY: &str = "efficiency.csv";
pub const FAILED: &str = "FAILED";

const GRID_POINTS: usize = 201;

pub fn trace_file(variant: Variant, repeat: usize) -> String {
    format!("trace_{variant}_r{repeat:03}.csv")
}

pub fn population_file(variant: Variant, repeat: usize) -> String {
    format!("population_{variant}_r{repeat:03}.csv")
}

fn snapshot_file(variant: Variant, repeat: usize, step: usize) -> String {
    format!("snapshot_{variant}_r{repeat:03}_t{step}.csv")
}

#[derive(Debug, Clone, Serialize)]
pub struct RunEntry {
    pub variant: Variant,
    pub repeat: usize,
    pub sampler_seed: u64,
    pub data_seed: Option<u64>,
    pub seconds: f64,
    pub step_seconds: Vec<f64>,
    pub total_simulations: u64,
    pub total_sims_per_accepted: f64,
    pub trace: String,
    pub population: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    software: &'static str,
    version: &'static str,
    status: &'static str,
    error: Option<ErrorReport>,
    threads: usize,
    /// Fully resolved config; parsing it reproduces the experiment.
    config: String,
    resolution: &'a Resolution,
    runs: &'a [RunEntry],
    seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
    pub variant: Option<Variant>,
    pub repeat: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub out: PathBuf,
    pub threads: usize,
}

impl ExperimentOptions {
    pub fn parallel(&self) -> bool {
        self.threads > 1
    }
}

/// Summary returned by a successful experiment.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunEntry>,
    pub table: EfficiencyTable,
}

fn write_file(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write(&mut writer)?;
    writer.flush().map_err(|e| CliError::io(path, e))
}

/// Runs every variant for every repeat and writes traces, final
/// populations, the efficiency table and a manifest into `opts.out`.
///
/// On failure the outputs written so far are kept next to a `FAILED`
/// marker holding the error report.
pub fn run_experiment(
    config: &ExperimentConfig,
    resolution: &Resolution,
    opts: &ExperimentOptions,
) -> Result<ExperimentOutcome, CliError> {
    let out = &opts.out;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let _ = fs::remove_file(out.join(FAILED));
    fs::write(out.join(RESOLVED), config.to_toml()).map_err(|e| CliError::io(out, e))?;
    config.schedule()?;

    let started = Instant::now();
    let mut runs = Vec::new();
    let mut traces: BTreeMap<Variant, Vec<RunTrace>> = BTreeMap::new();
    let mut failure = None;

    'repeats: for repeat in 0..config.repeats {
        let model = match config.build_model(repeat) {
            Ok(m) => m,
            Err(e) => {
                failure = Some((e, None, repeat));
                break;
            }
        };
        for &variant in &config.variants {
            match run_one(config, model.as_ref(), repeat, variant, opts) {
                Ok((entry, trace)) => {
                    runs.push(entry);
                    traces.entry(variant).or_default().push(trace);
                }
                Err(e) => {
                    failure = Some((e, Some(variant), repeat));
                    break 'repeats;
                }
            }
        }
    }

    let fail = |e: CliError, variant, repeat| -> Result<ExperimentOutcome, CliError> {
        let report = ErrorReport {
            kind: e.kind(),
            message: e.to_string(),
            variant,
            repeat,
        };
        write_failure(config, resolution, opts, &runs, started, &report)?;
        Err(e)
    };
    if let Some((e, variant, repeat)) = failure {
        return fail(e, variant, Some(repeat));
    }
    let table = match build_table(&traces) {
        Ok(table) => table,
        Err(e) => return fail(e, None, None),
    };
    write_file(&out.join(EFFICIENCY), |w| Ok(table.write_csv(w)?))?;

    write_manifest(config, resolution, opts, &runs, started, None)?;
    Ok(ExperimentOutcome { runs, table })
}

fn run_one(
    config: &ExperimentConfig,
    model: &dyn abcaw::Model,
    repeat: usize,
    variant: Variant,
    opts: &ExperimentOptions,
) -> Result<(RunEntry, RunTrace), CliError> {
    let run_config = config.run_config(repeat, variant, opts.parallel());
    let schedule = config.schedule()?;
    let started = Instant::now();
    let trace = run(model, &schedule, &run_config)?;
    let seconds = started.elapsed().as_secs_f64();

    let trace_name = trace_file(variant, repeat);
    let population_name = population_file(variant, repeat);
    write_file(&opts.out.join(&trace_name), |w| Ok(trace.write_csv(w)?))?;
    write_file(&opts.out.join(&population_name), |w| {
        Ok(trace.final_population.write_csv(w)?)
    })?;
    for snapshot in &trace.snapshots {
        let name = snapshot_file(variant, repeat, snapshot.step());
        write_file(&opts.out.join(name), |w| Ok(snapshot.write_csv(w)?))?;
    }

    let entry = RunEntry {
        variant,
        repeat,
        sampler_seed: run_config.seed,
        data_seed: config.data_seed(repeat),
        seconds,
        step_seconds: trace.steps.iter().map(|s| s.seconds).collect(),
        total_simulations: trace.total_simulations(),
        total_sims_per_accepted: trace.total_sims_per_accepted(),
        trace: trace_name,
        population: population_name,
    };
    Ok((entry, trace))
}

fn build_table(traces: &BTreeMap<Variant, Vec<RunTrace>>) -> Result<EfficiencyTable, CliError> {
    let groups: Vec<VariantRuns> = traces
        .iter()
        .map(|(variant, runs)| VariantRuns {
            label: variant.to_string(),
            runs: runs.iter().map(|t| t.steps.clone()).collect(),
        })
        .collect();
    Ok(efficiency_table(&groups)?)
}

fn write_failure(
    config: &ExperimentConfig,
    resolution: &Resolution,
    opts: &ExperimentOptions,
    runs: &[RunEntry],
    started: Instant,
    report: &ErrorReport,
) -> Result<(), CliError> {
    let path = opts.out.join(FAILED);
    let body = serde_json::to_string_pretty(report).expect("error reports serialize");
    fs::write(&path, body + "\n").map_err(|e| CliError::io(&path, e))?;
    write_manifest(
        config,
        resolution,
        opts,
        runs,
        started,
        Some(report.clone()),
    )
}

fn write_manifest(
    config: &ExperimentConfig,
    resolution: &Resolution,
    opts: &ExperimentOptions,
    runs: &[RunEntry],
    started: Instant,
    error: Option<ErrorReport>,
) -> Result<(), CliError> {
    let manifest = Manifest {
        software: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        status: if error.is_some() { "failed" } else { "ok" },
        error,
        threads: opts.threads,
        config: config.to_toml(),
        resolution,
        runs,
        seconds: started.elapsed().as_secs_f64(),
    };
    let path = opts.out.join(MANIFEST);
    let body = serde_json::to_string_pretty(&manifest).expect("manifests serialize");
    fs::write(&path, body + "\n").map_err(|e| CliError::io(&path, e))
}

/// Files written by [`summarize`].
#[derive(Debug, Default)]
pub struct SummaryFiles {
    pub efficiency: PathBuf,
    pub densities: Vec<PathBuf>,
}

fn parse_output_name(name: &str, prefix: &str) -> Option<(Variant, usize)> {
    let stem = name.strip_prefix(prefix)?.strip_suffix(".csv")?;
    let (variant, repeat) = stem.rsplit_once("_r")?;
    Some((variant.parse().ok()?, repeat.parse().ok()?))
}

fn list_outputs(dir: &Path, prefix: &str) -> Result<Vec<(Variant, usize, PathBuf)>, CliError> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if let Some((variant, repeat)) = parse_output_name(name, prefix) {
            found.push((variant, repeat, path));
        }
    }
    found.sort_by_key(|a| (a.0, a.1));
    Ok(found)
}

/// Rebuilds the efficiency table from the trace files in `dir` and writes
/// weighted KDE grids of every final population. When `dir` holds a
/// normal mixture experiment the exact window posterior at the final
/// threshold is written alongside.
pub fn summarize(dir: &Path) -> Result<SummaryFiles, CliError> {
    let mut groups: BTreeMap<Variant, Vec<_>> = BTreeMap::new();
    for (variant, _, path) in list_outputs(dir, "trace_")? {
        let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
        groups
            .entry(variant)
            .or_default()
            .push(read_trace_csv(BufReader::new(file))?);
    }
    if groups.is_empty() {
        return Err(CliError::Validation(format!(
            "no trace files found in {}",
            dir.display()
        )));
    }
    let final_eps = groups
        .values()
        .flat_map(|runs| runs.iter())
        .filter_map(|steps| steps.last().map(|s| s.epsilon))
        .next();
    let groups: Vec<VariantRuns> = groups
        .into_iter()
        .map(|(variant, runs)| VariantRuns {
            label: variant.to_string(),
            runs,
        })
        .collect();
    let table = efficiency_table(&groups)?;
    let mut files = SummaryFiles {
        efficiency: dir.join(EFFICIENCY),
        densities: Vec::new(),
    };
    write_file(&files.efficiency, |w| Ok(table.write_csv(w)?))?;

    for (variant, repeat, path) in list_outputs(dir, "population_")? {
        let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
        let system = ParticleSystem::read_csv(BufReader::new(file))?;
        for dim in 0..system.theta_dim() {
            let (grid, density) = kde_on_span(&system, dim);
            let target = dir.join(format!(
                "density_{variant}_r{repeat:03}_theta{}.csv",
                dim + 1
            ));
            write_file(&target, |w| Ok(write_density_csv(&grid, &density, w)?))?;
            files.densities.push(target);
        }
    }

    let resolved = dir.join(RESOLVED);
    if let (Ok(text), Some(eps)) = (fs::read_to_string(&resolved), final_eps) {
        let config = ExperimentConfig::parse(&text)?;
        if matches!(config.model, ModelConfig::NormalMixture { observed } if observed == 0.0) {
            let grid = linspace(-3.0, 3.0, GRID_POINTS);
            let density = exact_mixture_posterior(eps, &grid);
            let target = dir.join("density_exact.csv");
            write_file(&target, |w| Ok(write_density_csv(&grid, &density, w)?))?;
            files.densities.push(target);
        }
    }
    Ok(files)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
        .collect()
}

fn kde_on_span(system: &ParticleSystem, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let column = system.theta_column(dim);
    let (_, var) = weighted_mean_var(&column, system.weights());
    let spread = var.sqrt();
    let ess = system.ess().max(2.0);
    let h = if spread > 0.0 {
        1.06 * spread * ess.powf(-0.2)
    } else {
        1e-6
    };
    let lo = column.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let grid = linspace(lo, hi, GRID_POINTS);
    let density = kde_grid(system, dim, &grid, h);
    (grid, density)
}
