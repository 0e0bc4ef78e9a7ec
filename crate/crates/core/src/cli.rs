//! The `cci` command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or
//! validation error, 4 numeric degeneracy.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::datastore::{
    generate_fixture, load_store_as, read_jsonl, save_store, write_json, write_jsonl, Dataset,
    FixtureParams, Manifest, Role,
};
use crate::diagnostics::{rt_summary, RationalePick};
use crate::error::Error;
use crate::inference::Method;
use crate::numkit::Temperature;
use crate::parallel::Workers;
use crate::pipeline::{evaluate, infer_dataset, oracle_check, InferConfig, MPolicy};
use crate::search::{PredictionRecord, ScoringMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Default file names inside a fixture directory.
pub const IMAGES_FILE: &str = "images.ccie";
pub const CATEGORIES_FILE: &str = "categories.ccie";
pub const RATIONALES_FILE: &str = "rationales.ccie";
pub const PROMPTS_FILE: &str = "prompts.ccie";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "cci",
    version,
    about = "Conditional inference over contrastive embeddings"
)]
pub struct Cli {
    /// TOML file with default values for any flag; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for per-image work (0 = all cores, 1 = sequential).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic dataset.
    Fixtures(FixturesArgs),
    /// Predict a category and rationale set for every image.
    Infer(InferArgs),
    /// Score predictions with RR/RW/WR/WW.
    Eval(EvalArgs),
    /// Bayes-consistency (RT) summary per temperature and method.
    Rt(RtArgs),
    /// Compare the search against exhaustive enumeration.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long = "categories")]
    pub n_categories: Option<usize>,
    #[arg(long = "rationales")]
    pub n_rationales: Option<usize>,
    #[arg(long = "images")]
    pub n_images: Option<usize>,
    #[arg(long = "per-image")]
    pub per_image: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct DataArgs {
    /// Directory holding the default-named stores and manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub categories: Option<PathBuf>,
    #[arg(long)]
    pub rationales: Option<PathBuf>,
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SearchArgs {
    #[arg(long)]
    pub tau: Option<f64>,
    /// Rationales per image: "auto" (ground-truth count) or a number.
    #[arg(long)]
    pub m: Option<MPolicy>,
    #[arg(long)]
    pub k_beam: Option<usize>,
    /// Use the dedicated greedy driver (requires k_beam = 1).
    #[arg(long)]
    pub greedy: bool,
    /// "renormalized" or "static".
    #[arg(long)]
    pub scoring: Option<ScoringMode>,
    /// "cci" or "because".
    #[arg(long)]
    pub method: Option<Method>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Aggregate report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-image metrics (JSON lines).
    #[arg(long)]
    pub per_image: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RtArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated temperatures.
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use each image's first ground-truth rationale instead of sampling.
    #[arg(long)]
    pub first_rationale: bool,
    /// Full report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Summary table (TSV).
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Only check the first N images (by id).
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Optional defaults read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub categories: Option<PathBuf>,
    pub rationales: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub tau: Option<f64>,
    pub m: Option<String>,
    pub k_beam: Option<usize>,
    pub greedy: Option<bool>,
    pub scoring: Option<String>,
    pub method: Option<String>,
    pub taus: Option<Vec<f64>>,
    pub methods: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_numeric() {
            EXIT_NUMERIC
        } else if matches!(e, Error::InvalidConfig(_) | Error::InvalidTemperature(_)) {
            EXIT_USAGE
        } else {
            EXIT_DATA
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub images: PathBuf,
    pub categories: PathBuf,
    pub rationales: PathBuf,
    pub prompts: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub tau: Temperature,
    pub m: MPolicy,
    pub k_beam: usize,
    pub greedy: bool,
    pub scoring: ScoringMode,
    pub method: Method,
    pub seed: u64,
    pub workers: Workers,
}

impl RunConfig {
    fn resolve(
        data: &DataArgs,
        search: &SearchArgs,
        file: &FileConfig,
        workers: Option<usize>,
    ) -> CliResult<Self> {
        let dir = data.data.clone().or_else(|| file.data.clone());
        let pick = |flag: &Option<PathBuf>, conf: &Option<PathBuf>, default: &str| {
            flag.clone()
                .or_else(|| conf.clone())
                .or_else(|| dir.as_ref().map(|d| d.join(default)))
        };
        let required = |p: Option<PathBuf>, flag: &str| {
            p.ok_or_else(|| CliError::usage(format!("missing --{flag} (or --data)")))
        };
        let prompts = pick(&data.prompts, &file.prompts, PROMPTS_FILE);
        let m = match search.m {
            Some(m) => m,
            None => match &file.m {
                Some(s) => s.parse().map_err(CliError::usage)?,
                None => MPolicy::Auto,
            },
        };
        let scoring = match search.scoring {
            Some(s) => s,
            None => match &file.scoring {
                Some(s) => s.parse().map_err(CliError::usage)?,
                None => ScoringMode::default(),
            },
        };
        let method = match search.method {
            Some(s) => s,
            None => match &file.method {
                Some(s) => s.parse().map_err(CliError::usage)?,
                None => Method::default(),
            },
        };
        let tau = Temperature::new(search.tau.or(file.tau).unwrap_or(100.0))?;
        let cfg = RunConfig {
            images: required(pick(&data.images, &file.images, IMAGES_FILE), "images")?,
            categories: required(
                pick(&data.categories, &file.categories, CATEGORIES_FILE),
                "categories",
            )?,
            rationales: required(
                pick(&data.rationales, &file.rationales, RATIONALES_FILE),
                "rationales",
            )?,
            // a directory default only counts if the file is there
            prompts: match (&data.prompts, &file.prompts) {
                (None, None) => prompts.filter(|p| p.exists()),
                _ => prompts,
            },
            manifest: match (&data.manifest, &file.manifest) {
                (None, None) => pick(&None, &None, MANIFEST_FILE).filter(|p| p.exists()),
                _ => pick(&data.manifest, &file.manifest, MANIFEST_FILE),
            },
            tau,
            m,
            k_beam: search.k_beam.or(file.k_beam).unwrap_or(1),
            greedy: search.greedy || file.greedy.unwrap_or(false),
            scoring,
            method,
            seed: file.seed.unwrap_or(0),
            workers: Workers::from_count(workers.or(file.workers).unwrap_or(0)),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.method == Method::Because && self.prompts.is_none() {
            return Err(CliError::usage("--method because needs --prompts"));
        }
        if self.m == MPolicy::Auto && self.manifest.is_none() {
            return Err(CliError::usage("--m auto needs --manifest"));
        }
        if self.k_beam == 0 {
            return Err(CliError::usage("--k-beam must be at least 1"));
        }
        if self.greedy && self.k_beam != 1 {
            return Err(CliError::usage("--greedy requires --k-beam 1"));
        }
        Ok(())
    }

    fn load(&self) -> CliResult<(Dataset, Option<Manifest>)> {
        let images = load_store_as(&self.images, Role::Image)?;
        let categories = load_store_as(&self.categories, Role::Category)?;
        let rationales = load_store_as(&self.rationales, Role::Rationale)?;
        let prompts = self
            .prompts
            .as_ref()
            .map(|p| load_store_as(p, Role::PromptPair))
            .transpose()?;
        let dataset = Dataset::from_stores(&images, &categories, &rationales, prompts.as_ref())?;
        let manifest = self.manifest.as_ref().map(Manifest::load).transpose()?;
        if let Some(m) = &manifest {
            dataset.check_manifest(m)?;
        }
        Ok((dataset, manifest))
    }

    fn infer_config(&self) -> InferConfig {
        InferConfig {
            m: self.m,
            k_beam: self.k_beam,
            tau: self.tau,
            scoring: self.scoring,
            method: self.method,
            greedy: self.greedy,
        }
    }
}

fn read_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    })?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

/// Images to process: the manifest's when one is given, else the whole store.
fn image_ids(dataset: &Dataset, manifest: Option<&Manifest>) -> Vec<String> {
    match manifest {
        Some(m) => m.samples().iter().map(|s| s.image.clone()).collect(),
        None => dataset.images.names().to_vec(),
    }
}

fn cmd_fixtures(args: &FixturesArgs, file: &FileConfig) -> CliResult<String> {
    let d = FixtureParams::default();
    let params = FixtureParams {
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        dim: args.dim.unwrap_or(d.dim),
        n_categories: args.n_categories.unwrap_or(d.n_categories),
        n_rationales: args.n_rationales.unwrap_or(d.n_rationales),
        n_images: args.n_images.unwrap_or(d.n_images),
        rationales_per_image: args.per_image.unwrap_or(d.rationales_per_image),
        noise: args.noise.unwrap_or(d.noise),
    };
    let fx = generate_fixture(&params)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    save_store(&fx.images, args.out.join(IMAGES_FILE))?;
    save_store(&fx.categories, args.out.join(CATEGORIES_FILE))?;
    save_store(&fx.rationales, args.out.join(RATIONALES_FILE))?;
    save_store(&fx.prompts, args.out.join(PROMPTS_FILE))?;
    fx.manifest.save(args.out.join(MANIFEST_FILE))?;
    Ok(format!(
        "wrote {} images, {} categories, {} rationales (d={}, seed={}) to {}\n",
        fx.images.len(),
        fx.categories.len(),
        fx.rationales.len(),
        params.dim,
        params.seed,
        args.out.display()
    ))
}

fn cmd_infer(args: &InferArgs, file: &FileConfig, workers: Option<usize>) -> CliResult<String> {
    let cfg = RunConfig::resolve(&args.data, &args.search, file, workers)?;
    let (dataset, manifest) = cfg.load()?;
    let ids = image_ids(&dataset, manifest.as_ref());
    let preds = infer_dataset(
        &dataset,
        &ids,
        manifest.as_ref(),
        &cfg.infer_config(),
        cfg.workers,
    )?;
    ensure_parent(&args.out)?;
    write_jsonl(&args.out, &preds)?;
    Ok(format!(
        "{} predictions ({} method, tau={}, k_beam={}, {} scoring) -> {}\n",
        preds.len(),
        cfg.method,
        cfg.tau,
        cfg.k_beam,
        cfg.scoring,
        args.out.display()
    ))
}

fn cmd_eval(args: &EvalArgs, file: &FileConfig) -> CliResult<String> {
    let manifest_path = args
        .manifest
        .clone()
        .or_else(|| file.manifest.clone())
        .or_else(|| file.data.as_ref().map(|d| d.join(MANIFEST_FILE)))
        .ok_or_else(|| CliError::usage("missing --manifest"))?;
    let manifest = Manifest::load(&manifest_path)?;
    let preds: Vec<PredictionRecord> = read_jsonl(&args.predictions)?;
    let report = evaluate(&preds, &manifest)?;
    ensure_parent(&args.out)?;
    write_json(&args.out, &report.aggregate)?;
    if let Some(p) = &args.per_image {
        ensure_parent(p)?;
        write_jsonl(p, &report.per_image)?;
    }
    let a = report.aggregate;
    Ok(format!(
        "images\tRR\tRW\tWR\tWW\n{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\n",
        a.count, a.rr, a.rw, a.wr, a.ww
    ))
}

fn cmd_rt(args: &RtArgs, file: &FileConfig, workers: Option<usize>) -> CliResult<String> {
    let methods: Vec<Method> = match (&args.methods, &file.methods) {
        (Some(m), _) => m.clone(),
        (None, Some(m)) => m
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_, _>>()
            .map_err(CliError::usage)?,
        (None, None) => vec![Method::Cci],
    };
    let search = SearchArgs {
        method: Some(if methods.contains(&Method::Because) {
            Method::Because
        } else {
            Method::Cci
        }),
        ..Default::default()
    };
    let mut cfg = RunConfig::resolve(&args.data, &search, file, workers)?;
    if cfg.manifest.is_none() {
        return Err(CliError::usage("rt needs --manifest"));
    }
    cfg.seed = args.seed.or(file.seed).unwrap_or(0);
    let taus: Vec<Temperature> = args
        .taus
        .clone()
        .or_else(|| file.taus.clone())
        .unwrap_or_else(|| vec![0.5, 1.0, 10.0, 20.0, 50.0])
        .into_iter()
        .map(Temperature::new)
        .collect::<Result<_, _>>()?;
    if taus.is_empty() {
        return Err(CliError::usage("--taus is empty"));
    }
    let (dataset, manifest) = cfg.load()?;
    let manifest = manifest.expect("checked above");
    let pick = if args.first_rationale {
        RationalePick::First
    } else {
        RationalePick::Seeded(cfg.seed)
    };
    let summary = rt_summary(&dataset, &manifest, &taus, &methods, pick, cfg.workers)?;
    ensure_parent(&args.out)?;
    write_json(&args.out, &summary)?;
    let table = summary.to_tsv();
    if let Some(t) = &args.table {
        ensure_parent(t)?;
        fs::write(t, &table).map_err(|e| Error::io(t, e))?;
    }
    Ok(table)
}

fn cmd_oracle(args: &OracleArgs, file: &FileConfig, workers: Option<usize>) -> CliResult<String> {
    let cfg = RunConfig::resolve(&args.data, &args.search, file, workers)?;
    if cfg.method != Method::Cci {
        return Err(CliError::usage("oracle checks the cci search only"));
    }
    let (dataset, manifest) = cfg.load()?;
    let mut ids = image_ids(&dataset, manifest.as_ref());
    ids.sort();
    if let Some(n) = args.limit {
        ids.truncate(n);
    }
    let rows = oracle_check(
        &dataset,
        &ids,
        manifest.as_ref(),
        &cfg.infer_config(),
        cfg.workers,
    )?;
    ensure_parent(&args.out)?;
    write_jsonl(&args.out, &rows)?;
    let agree = rows.iter().filter(|r| r.same_winner).count();
    let max_gap = rows
        .iter()
        .map(|r| r.oracle_score - r.search_score)
        .fold(0.0, f64::max);
    Ok(format!(
        "{agree}/{} images match the oracle; largest score gap {max_gap:.3e}\n",
        rows.len()
    ))
}

/// Parses arguments and runs one command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(out) => {
            print!("{out}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// Runs a parsed command and returns its stdout text.
pub fn execute(cli: &Cli) -> CliResult<String> {
    let file = read_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Fixtures(a) => cmd_fixtures(a, &file),
        Command::Infer(a) => cmd_infer(a, &file, cli.workers),
        Command::Eval(a) => cmd_eval(a, &file),
        Command::Rt(a) => cmd_rt(a, &file, cli.workers),
        Command::Oracle(a) => cmd_oracle(a, &file, cli.workers),
    }
}
