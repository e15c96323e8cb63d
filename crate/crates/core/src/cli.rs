//! `subgp` command line: ingest → partition → train → predict → evaluate.
//!
//! Settings come from three layers, highest first: command-line flags, the
//! JSON file given by `--config`, built-in defaults. Every stage reads and
//! writes a workspace directory:
//!
//! ```text
//! workspace/
//!   catalog/      train.csv, test.csv, sidecar.json
//!   partition/    cells.json, members.csv, summary.json
//!   ensemble/     member_000.json …, manifest.json
//!   predictions/  predictions.csv [, density.csv]
//!   diagnostics/  diagnostics.json, pit.csv, scatter.csv
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::ensemble::{read_ensemble, sha256_hex, train_ensemble, write_ensemble, Predictor};
use crate::error::{Error, Result};
use crate::evaluate::{diagnose, generate_synthetic, write_diagnostics, SyntheticSpec, DEFAULT_COVERAGE_LEVELS};
use crate::gp::{GpOptions, VarianceMode};
use crate::ingest::{
    clip_outliers, read_catalog_csv, read_points_csv, read_raw_catalog, split_holdout, write_catalog_csv, Catalog,
    CatalogSidecar, HoldoutSplit,
};
use crate::partition::{
    default_grid, equal_volume_partition, partition_pipeline, read_partition, validate_bounds, write_partition,
    PartitionSummary,
};
use crate::sampler::{draw_subsample, SamplerConfig, DEFAULT_ETA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    #[default]
    Balanced,
    /// Uniform grid with boundaries at `j/m`; reported only, never trained on.
    EqualVolume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarianceArg {
    NoisyY,
    LatentZ,
}

impl From<VarianceArg> for VarianceMode {
    fn from(v: VarianceArg) -> Self {
        match v {
            VarianceArg::NoisyY => VarianceMode::NoisyY,
            VarianceArg::LatentZ => VarianceMode::LatentZ,
        }
    }
}

/// Fully resolved settings for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub catalog: Option<PathBuf>,
    pub workspace: PathBuf,
    pub n_min: usize,
    pub n_max: usize,
    /// Initial grid intervals per dimension; chosen from N and the bounds when absent.
    pub grid: Option<Vec<usize>>,
    pub eta: f64,
    pub n_members: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
    /// Worker threads; all available cores when absent.
    pub threads: Option<usize>,
    pub partition_mode: PartitionMode,
    pub variance_mode: VarianceMode,
    pub max_rejection_rate: f64,
    /// Drop training rows whose response lies more than this many sd from the mean.
    pub clip_sigma: Option<f64>,
    pub gp_starts: usize,
    pub gp_max_iter: usize,
    pub hpd_level: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            catalog: None,
            workspace: PathBuf::from("workspace"),
            n_min: 50,
            n_max: 150,
            grid: None,
            eta: DEFAULT_ETA,
            n_members: 50,
            holdout_fraction: 0.2,
            seed: 0,
            threads: None,
            partition_mode: PartitionMode::Balanced,
            variance_mode: VarianceMode::NoisyY,
            max_rejection_rate: 0.01,
            clip_sigma: None,
            gp_starts: GpOptions::default().starts,
            gp_max_iter: GpOptions::default().max_iter,
            hpd_level: 0.9,
        }
    }
}

/// One layer of settings; unset fields defer to the layer below.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub catalog: Option<PathBuf>,
    pub workspace: Option<PathBuf>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub grid: Option<Vec<usize>>,
    pub eta: Option<f64>,
    pub n_members: Option<usize>,
    pub holdout_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub partition_mode: Option<PartitionMode>,
    pub variance_mode: Option<VarianceMode>,
    pub max_rejection_rate: Option<f64>,
    pub clip_sigma: Option<f64>,
    pub gp_starts: Option<usize>,
    pub gp_max_iter: Option<usize>,
    pub hpd_level: Option<f64>,
}

impl ConfigLayer {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

macro_rules! overlay {
    ($cfg:ident, $layer:ident; $($field:ident),*; $($opt:ident),*) => {
        $(if let Some(v) = $layer.$field { $cfg.$field = v; })*
        $(if $layer.$opt.is_some() { $cfg.$opt = $layer.$opt; })*
    };
}

impl RunConfig {
    pub fn apply(mut self, layer: ConfigLayer) -> Self {
        overlay!(self, layer;
            workspace, n_min, n_max, eta, n_members, holdout_fraction, seed, partition_mode,
            variance_mode, max_rejection_rate, gp_starts, gp_max_iter, hpd_level;
            catalog, grid, threads, clip_sigma);
        self
    }

    /// Defaults, then the file layer, then the flag layer.
    pub fn resolve(file: Option<ConfigLayer>, flags: ConfigLayer) -> Result<Self> {
        let cfg = RunConfig::default().apply(file.unwrap_or_default()).apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        validate_bounds(self.n_min, self.n_max)?;
        if self.n_members == 0 {
            return Err(Error::config("n_members must be at least 1"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::config(format!(
                "holdout_fraction must lie in (0,1), got {}",
                self.holdout_fraction
            )));
        }
        if !(self.hpd_level > 0.0 && self.hpd_level < 1.0) {
            return Err(Error::config(format!(
                "hpd_level must lie in (0,1), got {}",
                self.hpd_level
            )));
        }
        if !(0.0..=1.0).contains(&self.max_rejection_rate) {
            return Err(Error::config("max_rejection_rate must lie in [0,1]"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads must be at least 1"));
        }
        if self.gp_starts == 0 {
            return Err(Error::config("gp_starts must be at least 1"));
        }
        if let Some(g) = &self.grid {
            if g.is_empty() || g.contains(&0) {
                return Err(Error::config("grid needs a positive interval count per dimension"));
            }
        }
        SamplerConfig {
            eta: self.eta,
            seed: self.seed,
        }
        .validate()
    }

    pub fn gp_options(&self) -> GpOptions {
        GpOptions {
            starts: self.gp_starts,
            max_iter: self.gp_max_iter,
            ..GpOptions::default()
        }
    }

    fn dir(&self, stage: &str) -> PathBuf {
        self.workspace.join(stage)
    }
}

#[derive(Debug, Parser)]
#[command(name = "subgp", version, about = "Ensemble GP regression on balanced partitions")]
pub struct Cli {
    /// JSON file with run settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed for the holdout split, sampler and optimizer starts.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Workspace directory (default `workspace`).
    #[arg(long, short = 'w', global = true)]
    pub workspace: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a raw catalog, derive features, normalize and split.
    Ingest(IngestArgs),
    /// Generate a synthetic catalog with known latent branches.
    Synth(SynthArgs),
    /// Build the balanced partition of the training inputs.
    Partition(PartitionArgs),
    /// Fit the GP ensemble on subsample draws.
    Train(TrainArgs),
    /// Predictive summaries for query points.
    Predict(PredictArgs),
    /// PIT, coverage and accuracy diagnostics on the held-out set.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw CSV with columns u,g,r,i,z,spec_z.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Fraction of rows held out for evaluation.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Fail when more than this fraction of rows is rejected.
    #[arg(long)]
    pub max_rejection_rate: Option<f64>,
    /// Drop training responses further than this many sd from the mean.
    #[arg(long)]
    pub clip_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Full generator description as JSON; overrides `--n` and `--noise-sd`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Rows for the built-in two-branch generator.
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    /// Noise sd of the built-in generator.
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Fraction of rows held out for evaluation.
    #[arg(long)]
    pub holdout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    /// Minimum points per cell.
    #[arg(long)]
    pub n_min: Option<usize>,
    /// Maximum points per cell.
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Initial grid intervals per dimension, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub mode: Option<PartitionMode>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Ensemble size (independent subsample draws).
    #[arg(long, visible_alias = "draws")]
    pub members: Option<usize>,
    /// Neighbour-conditioning scale η; large values approach uniform draws.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Optimizer starts per member.
    #[arg(long)]
    pub gp_starts: Option<usize>,
    /// Predict noisy responses or the latent function.
    #[arg(long, value_enum)]
    pub variance: Option<VarianceArg>,
    /// Write the sampler trace of member 0 as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Query CSV with `x1..xd` and optional `y`, `id` (default: held-out catalog).
    #[arg(long)]
    pub query: Option<PathBuf>,
    /// Output CSV (default `predictions/predictions.csv` in the workspace).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Probability content of the reported HPD region.
    #[arg(long)]
    pub hpd_level: Option<f64>,
    /// Also write the predictive density on this many grid nodes per query.
    #[arg(long)]
    pub density_grid: Option<usize>,
    /// Predict noisy responses or the latent function.
    #[arg(long, value_enum)]
    pub variance: Option<VarianceArg>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Coverage levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Predict noisy responses or the latent function.
    #[arg(long, value_enum)]
    pub variance: Option<VarianceArg>,
}

impl Cli {
    fn flag_layer(&self) -> ConfigLayer {
        let mut l = ConfigLayer {
            seed: self.seed,
            threads: self.threads,
            workspace: self.workspace.clone(),
            ..ConfigLayer::default()
        };
        match &self.command {
            Command::Ingest(a) => {
                l.catalog = a.input.clone();
                l.holdout_fraction = a.holdout;
                l.max_rejection_rate = a.max_rejection_rate;
                l.clip_sigma = a.clip_sigma;
            }
            Command::Synth(a) => l.holdout_fraction = a.holdout,
            Command::Partition(a) => {
                l.n_min = a.n_min;
                l.n_max = a.n_max;
                l.grid = a.grid.clone();
                l.partition_mode = a.mode;
            }
            Command::Train(a) => {
                l.n_members = a.members;
                l.eta = a.eta;
                l.gp_starts = a.gp_starts;
                l.variance_mode = a.variance.map(Into::into);
            }
            Command::Predict(a) => {
                l.hpd_level = a.hpd_level;
                l.variance_mode = a.variance.map(Into::into);
            }
            Command::Evaluate(a) => l.variance_mode = a.variance.map(Into::into),
        }
        l
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let file = self.config.as_deref().map(ConfigLayer::read).transpose()?;
        RunConfig::resolve(file, self.flag_layer())
    }
}

/// Parse arguments, run the command, and map errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.resolve()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Ingest(_) => cmd_ingest(&cfg),
        Command::Synth(a) => cmd_synth(&cfg, a),
        Command::Partition(_) => cmd_partition(&cfg),
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Predict(a) => cmd_predict(&cfg, a),
        Command::Evaluate(a) => cmd_evaluate(&cfg, a),
    })
}

const TRAIN_FILE: &str = "train.csv";
const TEST_FILE: &str = "test.csv";
const SIDECAR_FILE: &str = "sidecar.json";
const SUMMARY_FILE: &str = "summary.json";
const PREDICTIONS_FILE: &str = "predictions.csv";
const DENSITY_FILE: &str = "density.csv";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_catalog(cfg: &RunConfig, train: &Catalog, test: &Catalog, sidecar: &CatalogSidecar) -> Result<()> {
    let dir = cfg.dir("catalog");
    create_dir(&dir)?;
    write_catalog_csv(&dir.join(TRAIN_FILE), train)?;
    write_catalog_csv(&dir.join(TEST_FILE), test)?;
    write_json(&dir.join(SIDECAR_FILE), sidecar)
}

fn read_sidecar(cfg: &RunConfig) -> Result<CatalogSidecar> {
    read_json(&cfg.dir("catalog").join(SIDECAR_FILE))
}

fn read_split(cfg: &RunConfig, file: &str) -> Result<Catalog> {
    let sidecar = read_sidecar(cfg)?;
    read_catalog_csv(&cfg.dir("catalog").join(file), sidecar.state)
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let input = cfg
        .catalog
        .as_deref()
        .ok_or_else(|| Error::config("ingest needs --input or `catalog` in the config file"))?;
    let (raw, report) = read_raw_catalog(input)?;
    let rate = report.rejection_rate();
    println!(
        "read {} rows: {} accepted, {} rejected ({:.2}%)",
        report.rows_read,
        report.accepted,
        report.rejected.len(),
        100.0 * rate
    );
    for (line, reason) in report.rejected.iter().take(10) {
        println!("  line {line}: {reason}");
    }
    if rate > cfg.max_rejection_rate {
        return Err(Error::data(format!(
            "rejection rate {:.2}% exceeds the limit of {:.2}%",
            100.0 * rate,
            100.0 * cfg.max_rejection_rate
        )));
    }
    let (mut train, test, split) = split_holdout(&raw, cfg.holdout_fraction, cfg.seed)?;
    if let Some(k) = cfg.clip_sigma {
        let before = train.len();
        train = clip_outliers(&train, k)?;
        println!("clipped {} training rows beyond {k} sd", before - train.len());
    }
    let sidecar = CatalogSidecar {
        state: train.state.clone(),
        seed: cfg.seed,
        holdout_fraction: cfg.holdout_fraction,
        holdout_indices: split.test.clone(),
        rejected_rows: report.rejected.len(),
        branch_labels: None,
        synthetic: None,
    };
    write_catalog(cfg, &train, &test, &sidecar)?;
    println!(
        "wrote {} training and {} held-out rows to {}",
        train.len(),
        test.len(),
        cfg.dir("catalog").display()
    );
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig, args: &SynthArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(p) => read_json::<SyntheticSpec>(p)?,
        None => {
            let mut s = SyntheticSpec::two_branch(args.n, cfg.seed);
            if let Some(sd) = args.noise_sd {
                s.noise_sd = sd;
            }
            s
        }
    };
    let data = generate_synthetic(&spec)?;
    let split = HoldoutSplit::new(data.catalog.len(), cfg.holdout_fraction, cfg.seed)?;
    let train = data.catalog.subset(&split.train);
    let test = data.catalog.subset(&split.test);
    let sidecar = CatalogSidecar {
        state: data.catalog.state.clone(),
        seed: cfg.seed,
        holdout_fraction: cfg.holdout_fraction,
        holdout_indices: split.test.clone(),
        rejected_rows: 0,
        branch_labels: Some(data.labels),
        synthetic: Some(spec),
    };
    write_catalog(cfg, &train, &test, &sidecar)?;
    println!(
        "synthetic catalog: {} training and {} held-out rows in {}",
        train.len(),
        test.len(),
        cfg.dir("catalog").display()
    );
    Ok(())
}

fn print_summary(s: &PartitionSummary) {
    println!(
        "cells {} (nonempty {}, empty {}, oversize {}); cardinality min {} / mean {:.1} / max {}",
        s.cells, s.nonempty, s.empty, s.oversize, s.min_cardinality, s.mean_cardinality, s.max_cardinality
    );
}

pub fn cmd_partition(cfg: &RunConfig) -> Result<()> {
    let train = read_split(cfg, TRAIN_FILE)?;
    let dir = cfg.dir("partition");
    create_dir(&dir)?;
    let start = Instant::now();
    match cfg.partition_mode {
        PartitionMode::Balanced => {
            let (part, graph) = partition_pipeline(&train.x, cfg.n_min, cfg.n_max, cfg.grid.as_deref())?;
            let summary = part.summary();
            write_partition(&dir, &part, &graph)?;
            write_json(&dir.join(SUMMARY_FILE), &summary)?;
            print_summary(&summary);
            println!("graph edges {}", graph.edge_count());
        }
        PartitionMode::EqualVolume => {
            let grid = match &cfg.grid {
                Some(g) => g.clone(),
                None => default_grid(train.len(), train.dim(), cfg.n_min, cfg.n_max),
            };
            let part = equal_volume_partition(&train.x, &grid)?;
            let summary = part.summary();
            write_json(&dir.join("equal_volume_summary.json"), &summary)?;
            print_summary(&summary);
        }
    }
    println!("wall time {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn file_hash(path: &Path) -> Result<String> {
    std::fs::read(path)
        .map(|b| sha256_hex(&b))
        .map_err(|e| Error::io(path, e))
}

pub fn cmd_train(cfg: &RunConfig, args: &TrainArgs) -> Result<()> {
    let train = read_split(cfg, TRAIN_FILE)?;
    let pdir = cfg.dir("partition");
    let (part, graph) = read_partition(&pdir)?;
    if part.total_members() != train.len() {
        return Err(Error::config(format!(
            "partition covers {} rows but the training catalog has {}; rerun `subgp partition`",
            part.total_members(),
            train.len()
        )));
    }
    let sampler = SamplerConfig {
        eta: cfg.eta,
        seed: cfg.seed,
    };
    let start = Instant::now();
    let mut model = train_ensemble(&train, &part, &graph, cfg.n_members, &sampler, &cfg.gp_options())?;
    model.config.variance_mode = cfg.variance_mode;
    let extra = serde_json::json!({
        "run_config": cfg,
        "train_sha256": file_hash(&cfg.dir("catalog").join(TRAIN_FILE))?,
        "cells_sha256": file_hash(&pdir.join(crate::partition::CELLS_FILE))?,
        "threads": rayon::current_num_threads(),
    });
    let dir = cfg.dir("ensemble");
    let manifest = write_ensemble(&dir, &model, extra)?;
    println!(
        "trained {} members on {} points each in {:.2}s; wrote {}",
        model.len(),
        part.len(),
        start.elapsed().as_secs_f64(),
        dir.display()
    );
    for m in manifest.members.iter().take(3) {
        println!("  {} sha256 {}", m.file, m.sha256);
    }
    if let Some(path) = &args.trace {
        let draw = draw_subsample(
            &part,
            &graph,
            &train.y,
            &SamplerConfig {
                seed: model.seeds[0],
                ..sampler
            },
            true,
        )?;
        draw.write_trace(path)?;
        println!("sampler trace of member 0 written to {}", path.display());
    }
    Ok(())
}

fn load_model(cfg: &RunConfig) -> Result<crate::ensemble::EnsembleModel> {
    let dir = cfg.dir("ensemble");
    if !dir.is_dir() {
        return Err(Error::config(format!(
            "no ensemble at {}; run `subgp train` first",
            dir.display()
        )));
    }
    let (mut model, _) = read_ensemble(&dir)?;
    model.config.variance_mode = cfg.variance_mode;
    Ok(model)
}

fn format_intervals(r: &[(f64, f64)]) -> String {
    r.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(";")
}

pub fn cmd_predict(cfg: &RunConfig, args: &PredictArgs) -> Result<()> {
    let model = load_model(cfg)?;
    let query = args.query.clone().unwrap_or_else(|| cfg.dir("catalog").join(TEST_FILE));
    let (x, y, ids) = read_points_csv(&query).map_err(|e| match e {
        Error::InvalidRecord { index, reason } => Error::config(format!("{} line {index}: {reason}", query.display())),
        other => other,
    })?;
    if x.dim() != model.dim() {
        return Err(Error::config(format!(
            "{} has {} input columns but the model expects {}",
            query.display(),
            x.dim(),
            model.dim()
        )));
    }
    if let Some((k, _)) = x
        .rows()
        .enumerate()
        .find(|(_, r)| r.iter().any(|v| !(0.0..=1.0).contains(v)))
    {
        log::warn!("query row {} lies outside the unit cube", k + 2);
    }
    let level = cfg.hpd_level;
    let rows: Vec<Result<String>> = {
        use rayon::prelude::*;
        (0..x.len())
            .into_par_iter()
            .map(|j| {
                let mp = model.predictive(x.row(j));
                let id = ids.as_ref().map(|v| v[j].clone()).unwrap_or_else(|| j.to_string());
                let (yt, pit) = match &y {
                    Some(v) => (v[j].to_string(), mp.cdf(v[j]).to_string()),
                    None => (String::new(), String::new()),
                };
                Ok(format!(
                    "{id},{yt},{},{},{},{},{pit}",
                    mp.median(),
                    mp.quantile(0.05)?,
                    mp.quantile(0.95)?,
                    format_intervals(&mp.hpd_region(level)?),
                ))
            })
            .collect()
    };
    let out = args
        .output
        .clone()
        .unwrap_or_else(|| cfg.dir("predictions").join(PREDICTIONS_FILE));
    if let Some(parent) = out.parent() {
        create_dir(parent)?;
    }
    let file = File::create(&out).map_err(|e| Error::io(&out, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(&out, e);
    writeln!(w, "id,y_true,median,q05,q95,hpd_intervals,pit").map_err(io)?;
    for r in rows {
        writeln!(w, "{}", r?).map_err(io)?;
    }
    w.flush().map_err(io)?;
    if let Some(k) = args.density_grid {
        if k < 2 {
            return Err(Error::config("density grid needs at least 2 nodes"));
        }
        let path = out.with_file_name(DENSITY_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(&path, e);
        writeln!(w, "id,y,density").map_err(io)?;
        for j in 0..x.len() {
            let id = ids.as_ref().map(|v| v[j].clone()).unwrap_or_else(|| j.to_string());
            let (ys, ps) = model.predictive(x.row(j)).density_grid(k);
            for (a, b) in ys.iter().zip(&ps) {
                writeln!(w, "{id},{a},{b}").map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
    }
    println!("wrote {} predictions to {}", x.len(), out.display());
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<()> {
    let model = load_model(cfg)?;
    let test = read_split(cfg, TEST_FILE)?;
    if test.dim() != model.dim() {
        return Err(Error::config("held-out catalog and ensemble disagree on dimension"));
    }
    let levels = args.levels.clone().unwrap_or_else(|| DEFAULT_COVERAGE_LEVELS.to_vec());
    let (diag, points) = diagnose(&model, &test, &levels)?;
    let dir = cfg.dir("diagnostics");
    write_diagnostics(&dir, &diag, &points)?;
    println!(
        "{} held-out points: PIT chi2 {:.2} (p = {:.4}), median RMSE {:.4}, MAE {:.4}",
        diag.n_test, diag.chi2, diag.p_value, diag.rmse_median, diag.mae_median
    );
    for (level, c) in &diag.coverage_by_level {
        println!("  coverage at {level}: {c:.4}");
    }
    println!("wrote {}", dir.display());
    Ok(())
}
