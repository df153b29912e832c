//! Command-line front end: `sample`, `attack`, `verify` and `report`.
//!
//! Exit codes: 0 success, 1 failed check or numerical failure, 2 configuration
//! or I/O error. Relative paths in a run config resolve against the config
//! file's directory.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::attack::{run_attack, AttackConfig, AttackOutcome, AttackProblem, AttackTrace, ObjectiveMode};
use crate::divergence::PosteriorDraws;
use crate::error::{Error, Result};
use crate::measures::{recon_statistics, stat_errors, DataPoint, Dataset, Layout, StatErrors, WeightedEmpiricalMeasure};
use crate::models::{BuiltModel, ModelSpec};
use crate::samplers::{exact_gaussian_mean_draws, load_draws, rwm_chains, save_draws, SamplerConfig};
use crate::table;
use crate::verify;

pub const SEED_ENV: &str = "RECON_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMethod {
    /// Closed-form posterior of the Gaussian location model.
    Exact,
    Rwm,
}

fn default_thinning() -> usize {
    10
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub method: SamplerMethod,
    pub draws: usize,
    pub seed: u64,
    /// Required for `rwm`.
    #[serde(default)]
    pub step_scale: Option<f64>,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    /// Chain start; defaults to all ones.
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    /// Draws are split evenly across chains with seeds `seed, seed + 1, ...`.
    #[serde(default = "one")]
    pub chains: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Training data. For `attack` it turns on relative-error tracking.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Released posterior draws.
    #[serde(default)]
    pub draws: Option<PathBuf>,
    /// Released parameters of a non-Bayesian model.
    #[serde(default)]
    pub theta_star: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub sampler: Option<SamplerSection>,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
    pub output: OutputSection,
}

impl RunConfig {
    /// Parses, resolves relative paths and checks that every read path exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.data.dataset.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.data.draws.as_mut() {
            resolve(p);
        }
        resolve(&mut cfg.output.dir);
        for (key, p) in [("data.dataset", &cfg.data.dataset), ("data.draws", &cfg.data.draws)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::config(key, format!("file not found: {}", p.display())));
                }
            }
        }
        Ok(cfg)
    }

    /// Replaces every seed with `value` when it is set.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        let Some(raw) = value else { return Ok(()) };
        let seed: u64 = raw
            .trim()
            .parse()
            .map_err(|_| Error::config(SEED_ENV, format!("not an unsigned integer: {raw:?}")))?;
        if let Some(s) = self.sampler.as_mut() {
            s.seed = seed;
        }
        if let Some(a) = self.attack.as_mut() {
            a.seed = seed;
        }
        Ok(())
    }
}

#[derive(Parser)]
#[command(name = "score-recon", version, about = "Training-data reconstruction from released posteriors and parameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw posterior samples for the configured model and dataset.
    Sample {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a reconstruction and write trace, measure and summary files.
    Attack {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the built-in verification suite.
    Verify {
        /// Only run checks whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
    },
    /// Relative errors of a reconstruction against a dataset.
    Report {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        layout: PathBuf,
    },
}

/// Writes a line to stdout, ignoring a closed pipe.
fn say(line: impl std::fmt::Display) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFiniteObjective { .. } | Error::Domain(_) => 1,
        _ => 2,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let seed_env = std::env::var(SEED_ENV).ok();
    let result = match cli.command {
        Command::Sample { config } => load_config(&config, seed_env.as_deref()).and_then(|c| sample(&c)).map(|_| 0),
        Command::Attack { config } => load_config(&config, seed_env.as_deref()).and_then(|c| attack(&c)).map(|_| 0),
        Command::Verify { filter } => Ok(verify_command(filter.as_deref())),
        Command::Report { measure, data, layout } => report(&measure, &data, &layout).map(|errors| {
            say(serde_json::to_string_pretty(&errors).expect("errors serialise"));
            0
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}

fn load_config(path: &Path, seed: Option<&str>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply_seed_override(seed)?;
    Ok(cfg)
}

fn verify_command(filter: Option<&str>) -> i32 {
    let results = verify::run(filter);
    if results.is_empty() {
        eprintln!("error: no check matches the filter");
        return 2;
    }
    for r in &results {
        say(r.line());
    }
    if results.iter().all(|r| r.passed) {
        0
    } else {
        1
    }
}

/// Reads a dataset whose columns are either every coordinate or only the
/// free ones (frozen coordinates are then filled from the layout).
pub fn load_dataset(path: &Path, layout: &Layout) -> Result<Vec<DataPoint>> {
    let ds = Dataset::load(path)?;
    ds.points
        .iter()
        .enumerate()
        .map(|(i, p)| expand_point(p.coords(), layout).map_err(|reason| parse_error(path, i + 2, reason)))
        .collect()
}

fn parse_error(path: &Path, row: usize, reason: String) -> Error {
    Error::Parse {
        path: path.into(),
        row,
        reason,
    }
}

fn expand_point(values: &[f64], layout: &Layout) -> std::result::Result<DataPoint, String> {
    let full = if values.len() == layout.dim {
        values.to_vec()
    } else if values.len() == layout.free_dim() {
        let mut full = vec![0.0; layout.dim];
        for (&j, &v) in layout.free_indices().iter().zip(values) {
            full[j] = v;
        }
        for f in &layout.frozen {
            full[f.index] = f.value;
        }
        full
    } else {
        return Err(format!(
            "expected {} (all) or {} (free) coordinates, found {}",
            layout.dim,
            layout.free_dim(),
            values.len()
        ));
    };
    let p = DataPoint::new(full).map_err(|e| e.to_string())?;
    layout.check_point(&p).map_err(|e| e.to_string())?;
    Ok(p)
}

fn sampler_config(section: &SamplerSection, param_dim: usize) -> Result<SamplerConfig> {
    let step_scale = section
        .step_scale
        .ok_or_else(|| Error::config("sampler.step_scale", "required for rwm"))?;
    let init = section.init.clone().unwrap_or_else(|| vec![1.0; param_dim]);
    if init.len() != param_dim {
        return Err(Error::config("sampler.init", format!("expected {param_dim} values, found {}", init.len())));
    }
    if section.chains == 0 || section.draws % section.chains != 0 {
        return Err(Error::config("sampler.chains", "must be positive and divide sampler.draws"));
    }
    let cfg = SamplerConfig {
        draws: section.draws / section.chains,
        burn_in: section.burn_in,
        thinning: section.thinning,
        step_scale,
        seed: section.seed,
        init,
    };
    cfg.validate()?;
    Ok(cfg)
}

struct Sampled {
    draws: PosteriorDraws,
    acceptance_rate: Option<f64>,
}

fn draw_samples(cfg: &RunConfig, model: &dyn crate::models::LikelihoodModel) -> Result<Sampled> {
    let section = cfg
        .sampler
        .as_ref()
        .ok_or_else(|| Error::config("sampler", "section required to generate draws"))?;
    let path = cfg
        .data
        .dataset
        .as_ref()
        .ok_or_else(|| Error::config("data.dataset", "required to generate draws"))?;
    let data = load_dataset(path, model.layout())?;
    match section.method {
        SamplerMethod::Exact => {
            if !matches!(cfg.model, ModelSpec::GaussianMeanLocation { .. }) {
                return Err(Error::config("sampler.method", "exact draws need the gaussian_mean_location model"));
            }
            Ok(Sampled {
                draws: exact_gaussian_mean_draws(&data, section.draws, section.seed)?,
                acceptance_rate: None,
            })
        }
        SamplerMethod::Rwm => {
            let sc = sampler_config(section, model.param_dim())?;
            let out = rwm_chains(model, &data, &sc, section.chains)?;
            Ok(Sampled {
                draws: out.draws,
                acceptance_rate: Some(out.acceptance_rate),
            })
        }
    }
}

fn likelihood(cfg: &RunConfig) -> Result<Box<dyn crate::models::LikelihoodModel>> {
    match cfg.model.build()? {
        BuiltModel::Likelihood(m) => Ok(m),
        BuiltModel::Loss(_) => Err(Error::config("model.kind", "a likelihood model is required")),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn sample(cfg: &RunConfig) -> Result<()> {
    let model = likelihood(cfg)?;
    let sampled = draw_samples(cfg, model.as_ref())?;
    ensure_dir(&cfg.output.dir)?;
    let path = cfg.output.dir.join("draws.csv");
    save_draws(&path, &sampled.draws)?;
    match sampled.acceptance_rate {
        Some(a) => say(format!("wrote {} draws to {} (acceptance rate {a:.3})", sampled.draws.len(), path.display())),
        None => say(format!("wrote {} draws to {}", sampled.draws.len(), path.display())),
    }
    Ok(())
}

fn attack(cfg: &RunConfig) -> Result<()> {
    let config = cfg
        .attack
        .as_ref()
        .ok_or_else(|| Error::config("attack", "section required"))?;
    config.validate()?;
    let built = cfg.model.build()?;
    let layout = match &built {
        BuiltModel::Likelihood(m) => m.layout().clone(),
        BuiltModel::Loss(m) => m.layout().clone(),
    };
    let target = match &cfg.data.dataset {
        Some(p) => Some(WeightedEmpiricalMeasure::new(load_dataset(p, &layout)?, None)?),
        None => None,
    };
    let mut acceptance_rate = None;
    let outcome = match &built {
        BuiltModel::Likelihood(model) => {
            if config.objective == ObjectiveMode::Nonbayes {
                return Err(Error::config("attack.objective", "nonbayes needs a loss model"));
            }
            let draws = match &cfg.data.draws {
                Some(p) => load_draws(p)?,
                None => {
                    let s = draw_samples(cfg, model.as_ref())?;
                    acceptance_rate = s.acceptance_rate;
                    s.draws
                }
            };
            let problem = AttackProblem::Bayes {
                model: model.as_ref(),
                draws: &draws,
            };
            run_attack(&problem, config, target.as_ref(), None)?
        }
        BuiltModel::Loss(model) => {
            if config.objective != ObjectiveMode::Nonbayes {
                return Err(Error::config("attack.objective", "loss models need the nonbayes objective"));
            }
            let theta_star = cfg
                .data
                .theta_star
                .as_ref()
                .ok_or_else(|| Error::config("data.theta_star", "required for the nonbayes objective"))?;
            let problem = AttackProblem::NonBayes {
                model: model.as_ref(),
                theta_star,
            };
            run_attack(&problem, config, target.as_ref(), None)?
        }
    };
    emit_outputs(&outcome, cfg, acceptance_rate)?;
    let last = outcome.trace.last();
    say(format!(
        "{} iterations, objective {:.6e}, total mass {:.6}",
        config.iters, last.objective, last.stats.total_mass
    ));
    if let Some(e) = &last.errors {
        say(format!("max relative error over count, means and variances {:.4e}", e.tracked_max()));
    }
    say(format!("outputs in {}", cfg.output.dir.display()));
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    total_mass: f64,
    final_objective: f64,
    iterations: usize,
    stats: &'a crate::measures::ReconStats,
    moments: crate::measures::Moments,
    errors: Option<&'a StatErrors>,
    max_tracked_error: Option<f64>,
    plateau_change: f64,
    reached_plateau: bool,
    sampler_acceptance_rate: Option<f64>,
    trace_header: &'a crate::attack::TraceHeader,
    layout: &'a Layout,
    config: &'a RunConfig,
}

/// Writes `trace.csv`, `measure.csv` (weight then free coordinates),
/// `layout.json` and `summary.json` into the output directory.
pub fn emit_outputs(outcome: &AttackOutcome, cfg: &RunConfig, sampler_acceptance_rate: Option<f64>) -> Result<()> {
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let trace: &AttackTrace = &outcome.trace;
    table::write(&dir.join("trace.csv"), &trace.to_csv())?;
    table::write(&dir.join("measure.csv"), &render_measure(&outcome.measure, &trace.layout))?;
    let layout_json = serde_json::to_string_pretty(&trace.layout).expect("layout serialises");
    table::write(&dir.join("layout.json"), &(layout_json + "\n"))?;
    let last = trace.last();
    let summary = Summary {
        total_mass: last.stats.total_mass,
        final_objective: last.objective,
        iterations: trace.header.iters,
        stats: &last.stats,
        moments: last.stats.moments(&trace.layout),
        errors: last.errors.as_ref(),
        max_tracked_error: last.errors.as_ref().map(StatErrors::tracked_max),
        plateau_change: trace.plateau_change(),
        reached_plateau: trace.reached_plateau(),
        sampler_acceptance_rate,
        trace_header: &trace.header,
        layout: &trace.layout,
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::config("summary", e.to_string()))?;
    table::write(&dir.join("summary.json"), &(json + "\n"))
}

fn render_measure(measure: &WeightedEmpiricalMeasure, layout: &Layout) -> String {
    let free = layout.free_indices();
    let mut header = vec!["weight".to_string()];
    header.extend(free.iter().map(|&j| layout.name(j)));
    let rows = measure.iter().map(|(w, z)| {
        let mut row = vec![w];
        row.extend(free.iter().map(|&j| z[j]));
        row
    });
    table::render(&header, rows)
}

/// Reads a measure CSV written by `attack`: a `weight` column followed by
/// the free coordinates (or every coordinate).
pub fn load_measure(path: &Path, layout: &Layout) -> Result<WeightedEmpiricalMeasure> {
    let t = table::read(path)?;
    if t.header.first().map(String::as_str) != Some("weight") {
        return Err(parse_error(path, 1, "first column must be `weight`".into()));
    }
    if t.rows.is_empty() {
        return Err(parse_error(path, 1, "no rows after header".into()));
    }
    let mut weights = Vec::with_capacity(t.rows.len());
    let mut points = Vec::with_capacity(t.rows.len());
    for (i, row) in t.rows.iter().enumerate() {
        weights.push(row[0]);
        points.push(expand_point(&row[1..], layout).map_err(|r| parse_error(path, i + 2, r))?);
    }
    WeightedEmpiricalMeasure::new(points, Some(weights))
}

pub fn load_layout(path: &Path) -> Result<Layout> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let layout: Layout =
        serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    layout.validate()?;
    Ok(layout)
}

/// Relative errors of the statistics of `measure` against those of `data`.
pub fn report(measure: &Path, data: &Path, layout: &Path) -> Result<StatErrors> {
    let layout = load_layout(layout)?;
    let recon = load_measure(measure, &layout)?;
    let target = WeightedEmpiricalMeasure::new(load_dataset(data, &layout)?, None)?;
    stat_errors(
        &recon_statistics(&target, &layout)?,
        &recon_statistics(&recon, &layout)?,
        &layout,
    )
}
