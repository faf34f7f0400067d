//! `idp` subcommands. Each one is a plain function over parsed arguments so
//! tests can call it without spawning a process.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use idp_core::contextualizer::locality_report;
use idp_core::corpus::{ingest, Split};
use idp_core::session::{corpus_digest, curve_mean, run_simulation, CurvePoint, CurveSummary, TuningPoint};
use idp_core::synth::{keyword_records, ring_records, KeywordCorpusConfig, RingCorpusConfig};
use idp_core::{Corpus, SessionConfig};

/// Directory searched for relative `--config` paths that do not exist
/// relative to the working directory. `serve` without `--config` loads
/// every `*.toml` in it.
pub const CONFIG_DIR_ENV: &str = "IDP_CONFIG_DIR";

#[derive(Debug, Parser)]
#[command(name = "idp", version, about = "Interactive data programming: guided LF development and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest the configured dataset and print corpus statistics.
    Ingest(IngestArgs),
    /// Run simulated sessions and write learning-curve artifacts.
    Simulate(SimulateArgs),
    /// Compare curve means from `simulate` output dirs or curve CSVs.
    Report(ReportArgs),
    /// Per-quartile LF coverage and accuracy after a simulated run.
    Locality(LocalityArgs),
    /// Serve the HTTP session API.
    Serve(ServeArgs),
    /// Write a seeded synthetic dataset as JSONL.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Session config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config key, e.g. `selector.kind=random`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
}

impl ConfigArgs {
    /// File, then `--set` overrides in order, then the dedicated flags.
    pub fn load(&self) -> Result<SessionConfig> {
        let path = resolve_config_path(&self.config);
        let mut config = SessionConfig::load(&path)?;
        let mut assignments = self.overrides.clone();
        if let Some(s) = self.seed {
            assignments.push(format!("run.seed={s}"));
        }
        if let Some(n) = self.iterations {
            assignments.push(format!("run.iterations={n}"));
        }
        if let Some(n) = self.eval_every {
            assignments.push(format!("run.eval_every={n}"));
        }
        for a in &assignments {
            config.apply_override(a).with_context(|| format!("--set {a}"))?;
        }
        Ok(config)
    }
}

pub fn resolve_config_path(path: &Path) -> PathBuf {
    if path.is_absolute() || path.exists() {
        return path.to_path_buf();
    }
    match std::env::var_os(CONFIG_DIR_ENV) {
        Some(dir) => {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                candidate
            } else {
                path.to_path_buf()
            }
        }
        None => path.to_path_buf(),
    }
}

fn load_corpus(config: &SessionConfig) -> Result<Corpus> {
    ensure!(
        !config.dataset.path.as_os_str().is_empty(),
        "dataset.path is not set"
    );
    ingest(&config.dataset.path, config.dataset.format, &config.ingest)
        .with_context(|| format!("ingesting {}", config.dataset.path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => {
            let stats = cmd_ingest(&a)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Command::Simulate(a) => {
            let s = cmd_simulate(&a)?;
            match s.mean_of_means {
                Some(m) => println!("{} run(s), mean curve value {m:.4}; artifacts in {}", s.runs.len(), a.out.display()),
                None => println!("{} run(s), no curve points recorded; artifacts in {}", s.runs.len(), a.out.display()),
            }
        }
        Command::Report(a) => {
            let rows = cmd_report(&a)?;
            print!("{}", render_table(&rows));
        }
        Command::Locality(a) => {
            cmd_locality(&a)?;
        }
        Command::Serve(a) => cmd_serve(&a)?,
        Command::Generate(a) => {
            let n = cmd_generate(&a)?;
            println!("wrote {n} records to {}", a.out.display());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Also write the statistics as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub source: String,
    pub examples: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub primitives: usize,
    pub feature_dim: usize,
    pub gold_on_train: bool,
    pub gold_on_test: bool,
    pub digest: String,
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<CorpusStats> {
    let config = args.config.load()?;
    let corpus = load_corpus(&config)?;
    let stats = CorpusStats {
        source: config.dataset.path.display().to_string(),
        examples: corpus.len(),
        train: corpus.splits.train.len(),
        valid: corpus.splits.valid.len(),
        test: corpus.splits.test.len(),
        primitives: corpus.primitive_domain.len(),
        feature_dim: corpus.feature_dim,
        gold_on_train: corpus.has_gold(Split::Train),
        gold_on_test: corpus.has_gold(Split::Test),
        digest: corpus_digest(&corpus),
    };
    if let Some(out) = &args.out {
        write_file(out, serde_json::to_string_pretty(&stats)? + "\n")?;
    }
    Ok(stats)
}

// -------------------------------------------------------------- simulate

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Number of runs; run r uses seed `run.seed + r`.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub mean: Option<f64>,
    pub points: usize,
    pub truncated: bool,
    pub num_lfs: usize,
    pub percentile: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning: Option<Vec<TuningPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub seed_base: u64,
    pub iterations: usize,
    pub eval_every: usize,
    pub runs: Vec<RunSummary>,
    /// Mean over runs of each run's curve mean.
    pub mean_of_means: Option<f64>,
}

struct RunArtifacts {
    summary: RunSummary,
    curve: CurveSummary,
    trace: String,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulateSummary> {
    let mut config = args.config.load()?;
    if let Some(r) = args.runs {
        config.apply_override(&format!("run.runs={r}"))?;
    }
    let corpus = Arc::new(load_corpus(&config)?);
    ensure!(
        corpus.has_gold(Split::Train),
        "simulation needs gold labels on every train example"
    );
    let base = config.run.seed;
    // all runs finish before anything is written, so a failed run leaves no
    // partial artifacts behind
    let results: Vec<RunArtifacts> = (1..=config.run.runs)
        .into_par_iter()
        .map(|r| {
            let mut c = config.clone();
            c.run.seed = base + r as u64;
            let outcome = run_simulation(corpus.clone(), &c).with_context(|| format!("run {r}"))?;
            let mut trace = String::new();
            for report in outcome.session.trace() {
                trace.push_str(&serde_json::to_string(report)?);
                trace.push('\n');
            }
            Ok(RunArtifacts {
                summary: RunSummary {
                    run: r,
                    seed: c.run.seed,
                    mean: outcome.summary.mean,
                    points: outcome.summary.points.len(),
                    truncated: outcome.summary.truncated,
                    num_lfs: outcome.session.lfs().len(),
                    percentile: outcome.session.percentile(),
                    tuning: outcome.tuning,
                },
                curve: outcome.summary,
                trace,
            })
        })
        .collect::<Result<_>>()?;

    let means: Vec<f64> = results.iter().filter_map(|a| a.summary.mean).collect();
    let mean_of_means = (means.len() == results.len() && !means.is_empty())
        .then(|| means.iter().sum::<f64>() / means.len() as f64);
    let summary = SimulateSummary {
        seed_base: base,
        iterations: config.run.iterations,
        eval_every: config.run.eval_every,
        runs: results.iter().map(|a| a.summary.clone()).collect(),
        mean_of_means,
    };

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for a in &results {
        let dir = args.out.join(format!("run_{}", a.summary.run));
        fs::create_dir_all(&dir)?;
        let mut csv = Vec::new();
        a.curve.write_csv(&mut csv)?;
        write_file(&dir.join("curve.csv"), csv)?;
        write_file(&dir.join("trace.jsonl"), &a.trace)?;
        write_file(&dir.join("summary.json"), serde_json::to_string_pretty(&a.summary)? + "\n")?;
    }
    let curves: Vec<&[CurvePoint]> = results.iter().map(|a| a.curve.points.as_slice()).collect();
    let mean_curve = CurveSummary::from_points(mean_curve(&curves), results.iter().any(|a| a.curve.truncated));
    let mut csv = Vec::new();
    mean_curve.write_csv(&mut csv)?;
    write_file(&args.out.join("mean_curve.csv"), csv)?;
    write_file(&args.out.join("config.toml"), config.to_toml_string())?;
    write_file(&args.out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

/// Pointwise mean over runs, on the eval points every run reached.
pub fn mean_curve(curves: &[&[CurvePoint]]) -> Vec<CurvePoint> {
    let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| CurvePoint {
            iteration: curves[0][i].iteration,
            value: curves.iter().map(|c| c[i].value).sum::<f64>() / curves.len() as f64,
        })
        .collect()
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

// ---------------------------------------------------------------- report

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `simulate` output directories or curve CSV files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub mean: f64,
    pub grid: Vec<usize>,
}

#[derive(Debug, Deserialize)]
struct CurveRow {
    iteration: usize,
    metric: f64,
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurvePoint>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    reader
        .deserialize()
        .map(|row| {
            let r: CurveRow = row.with_context(|| format!("parsing {}", path.display()))?;
            Ok(CurvePoint {
                iteration: r.iteration,
                value: r.metric,
            })
        })
        .collect()
}

fn report_row(path: &Path) -> Result<ReportRow> {
    let name = path.display().to_string();
    if path.is_dir() {
        let text = fs::read_to_string(path.join("summary.json"))
            .with_context(|| format!("{} has no summary.json", path.display()))?;
        let summary: SimulateSummary = serde_json::from_str(&text)?;
        let points = read_curve_csv(&path.join("mean_curve.csv"))?;
        let mean = summary
            .mean_of_means
            .with_context(|| format!("{name}: no curve points recorded"))?;
        Ok(ReportRow {
            name,
            mean,
            grid: points.iter().map(|p| p.iteration).collect(),
        })
    } else {
        let points = read_curve_csv(path)?;
        let mean = curve_mean(&points).with_context(|| format!("{name}: empty curve"))?;
        Ok(ReportRow {
            name,
            mean,
            grid: points.iter().map(|p| p.iteration).collect(),
        })
    }
}

/// Rows sorted by descending mean; every input must share one eval grid.
pub fn cmd_report(args: &ReportArgs) -> Result<Vec<ReportRow>> {
    let mut rows = args.inputs.iter().map(|p| report_row(p)).collect::<Result<Vec<_>>>()?;
    if let Some(first) = rows.first() {
        for r in &rows[1..] {
            ensure!(
                r.grid == first.grid,
                "eval grids differ: {} has {:?}, {} has {:?}",
                first.name,
                first.grid,
                r.name,
                r.grid
            );
        }
    }
    rows.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.name.cmp(&b.name)));
    if let Some(out) = &args.out {
        let mut w = csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
        w.write_record(["name", "mean", "points"])?;
        for r in &rows {
            w.write_record([r.name.clone(), r.mean.to_string(), r.grid.len().to_string()])?;
        }
        w.flush()?;
    }
    Ok(rows)
}

pub fn render_table(rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(4);
    let mut s = format!("{:<width$}  {:>8}  {:>6}\n", "name", "mean", "points");
    for r in rows {
        s.push_str(&format!("{:<width$}  {:>8.4}  {:>6}\n", r.name, r.mean, r.grid.len()));
    }
    s
}

// -------------------------------------------------------------- locality

#[derive(Debug, Args)]
pub struct LocalityArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Number of distance buckets.
    #[arg(long, default_value_t = 4)]
    pub buckets: usize,
    /// CSV output path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs one simulated session (seed `run.seed`) and writes the locality CSV
/// for the LFs it created.
pub fn cmd_locality(args: &LocalityArgs) -> Result<idp_core::contextualizer::LocalityReport> {
    ensure!(args.buckets >= 1, "--buckets must be >= 1");
    let config = args.config.load()?;
    let corpus = Arc::new(load_corpus(&config)?);
    let outcome = run_simulation(corpus.clone(), &config)?;
    let lfs = outcome.session.lfs();
    if lfs.is_empty() {
        bail!("the simulated run created no LFs");
    }
    let report = locality_report(lfs, &corpus, config.refinement.distance, args.buckets)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_file(&args.out, buf)?;
    let mut stdout = std::io::stdout().lock();
    for (q, acc) in report.mean_accuracy.iter().enumerate() {
        match acc {
            Some(a) => writeln!(stdout, "bucket {}: coverage {:.4} accuracy {a:.4}", q + 1, report.mean_coverage[q])?,
            None => writeln!(stdout, "bucket {}: coverage {:.4} accuracy n/a", q + 1, report.mean_coverage[q])?,
        }
    }
    Ok(report)
}

// ----------------------------------------------------------------- serve

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Configs whose datasets are offered to sessions. Repeatable; defaults
    /// to every `*.toml` in `$IDP_CONFIG_DIR`.
    #[arg(long)]
    pub config: Vec<PathBuf>,
    /// Listen address; falls back to `$IDP_LISTEN`.
    #[arg(long)]
    pub listen: Option<SocketAddr>,
}

/// Dataset name: `dataset.name`, else the dataset file stem.
pub fn dataset_name(config: &SessionConfig) -> String {
    if !config.dataset.name.is_empty() {
        return config.dataset.name.clone();
    }
    config
        .dataset
        .path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn load_datasets(paths: &[PathBuf]) -> Result<HashMap<String, Arc<Corpus>>> {
    let paths: Vec<PathBuf> = if paths.is_empty() {
        let dir = std::env::var_os(CONFIG_DIR_ENV)
            .with_context(|| format!("no --config given and {CONFIG_DIR_ENV} is unset"))?;
        let mut found: Vec<PathBuf> = fs::read_dir(&dir)
            .with_context(|| format!("listing {}", Path::new(&dir).display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        found.sort();
        found
    } else {
        paths.iter().map(|p| resolve_config_path(p)).collect()
    };
    ensure!(!paths.is_empty(), "no dataset configs found");
    let mut datasets = HashMap::new();
    for p in &paths {
        let config = SessionConfig::load(p)?;
        let name = dataset_name(&config);
        ensure!(!name.is_empty(), "{}: dataset has no name", p.display());
        let corpus = load_corpus(&config)?;
        tracing::info!(%name, examples = corpus.len(), "dataset loaded");
        if datasets.insert(name.clone(), Arc::new(corpus)).is_some() {
            bail!("dataset name {name:?} is used twice");
        }
    }
    Ok(datasets)
}

pub fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let datasets = load_datasets(&args.config)?;
    let state = idp_service::AppState::new(datasets);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(idp_service::serve(state, args.listen))?;
    Ok(())
}

// -------------------------------------------------------------- generate

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorpusKind {
    /// Text documents with label-correlated keywords.
    Keyword,
    /// Primitive records whose keywords are accurate only near home.
    Ring,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub kind: CorpusKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of examples (default 2000).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<usize> {
    let records = match args.kind {
        CorpusKind::Keyword => {
            let mut c = KeywordCorpusConfig::default();
            c.n = args.n.unwrap_or(c.n);
            keyword_records(args.seed, &c).0
        }
        CorpusKind::Ring => {
            let mut c = RingCorpusConfig::default();
            c.n = args.n.unwrap_or(c.n);
            ring_records(args.seed, &c)
        }
    };
    let mut text = String::new();
    for r in &records {
        text.push_str(&r.to_json_line());
        text.push('\n');
    }
    write_file(&args.out, text)?;
    Ok(records.len())
}
