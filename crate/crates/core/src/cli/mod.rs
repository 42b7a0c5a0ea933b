//! The `textmoments` command-line driver.
//!
//! Every subcommand accepts `--config FILE`, a flat `key = value` file whose
//! keys are the long flag names (`-` or `_`). Flags given on the command line
//! win over the file. Reports embed the fully resolved settings, contain no
//! timestamps, and are byte-identical across re-runs and thread counts.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

mod kv;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use kv::KvConfig;

use crate::adapt::{AdaptConfig, HyperGrid};
use crate::classify::PosteriorKind;
use crate::dataset::{FewShotDataset, Split};
use crate::error::{check_dim, Error, Result};
use crate::io::{read_dataset, write_dataset_with_manifest, Manifest};
use crate::mapper::{head_mse, train_text_stats_model, HeadMse, MapperReports, TextStatsModel, TrainConfig};
use crate::stats::DEFAULT_VAR_FLOOR;
use crate::synth::{generate_world, SynthConfig};
use crate::tasks::{
    oneclass_roc, run_protocol, HyperMode, MethodVariant, ProtocolConfig, ProtocolKind, ProtocolReport,
};

/// Version tag carried by every JSON report.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "textmoments", version, about = "Text-predicted class statistics for few-shot classification")]
struct Cli {
    /// Worker threads for episode evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic world and write it as an FSTS file plus manifest.
    SynthGen(SynthGenArgs),
    /// Train the mean and variance mappers on the base split.
    TrainMappers(TrainArgs),
    /// Standardized MSE of trained mappers against the constant baseline.
    EvalMse(MseArgs),
    /// Episodic one-class AUROC.
    EvalOneclass(OneClassArgs),
    /// Episodic N-way accuracy.
    EvalMulticlass(MultiClassArgs),
}

#[derive(Debug, Args)]
struct SynthGenArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output FSTS path; the manifest is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    domain_shift: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for mapper files and the training report.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    wd: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Square the per-pair residual norm in the training loss.
    #[arg(long)]
    squared_data_term: bool,
    /// Lower bound applied to predicted variances.
    #[arg(long)]
    var_floor: Option<f64>,
}

#[derive(Debug, Args)]
struct MseArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    mappers: Option<PathBuf>,
    /// Held-out split to report next to base: val or test.
    #[arg(long)]
    split: Option<Split>,
    /// A second dataset whose test split is reported as cross-domain.
    #[arg(long)]
    cross_domain_data: Option<PathBuf>,
    /// Output directory; JSON goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Mapper directory; needed only by text-informed variants.
    #[arg(long)]
    mappers: Option<PathBuf>,
    /// Comma-separated subset of baseline, M, C, MC.
    #[arg(long)]
    variants: Option<String>,
    /// Comma-separated shot counts.
    #[arg(long)]
    shots: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Validation grid: `v1,v2,...` for both coefficients or `alphas/betas`.
    #[arg(long)]
    grid: Option<String>,
    /// Skip validation and use `alpha,beta` in every episode.
    #[arg(long)]
    fixed_alpha_beta: Option<String>,
    /// Select `(alpha, beta)` per episode on held-out shots.
    #[arg(long)]
    validate: bool,
    /// Shrinkage used at zero shots when validating.
    #[arg(long)]
    zero_shot_beta: Option<f64>,
    /// root-distance or gaussian-log-density.
    #[arg(long)]
    posterior: Option<PosteriorKind>,
    /// Output directory for report.json and the CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OneClassArgs {
    #[command(flatten)]
    common: EvalArgs,
    /// Queries per episode.
    #[arg(long)]
    queries: Option<usize>,
}

#[derive(Debug, Args)]
struct MultiClassArgs {
    #[command(flatten)]
    common: EvalArgs,
    #[arg(long)]
    n_way: Option<usize>,
    #[arg(long)]
    q_per_class: Option<usize>,
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Settings(e.to_string()))?;
    execute(cli)
}

fn execute(cli: Cli) -> Result<()> {
    let Cli { threads, command } = cli;
    let go = move || match command {
        Command::SynthGen(a) => synth_gen(a),
        Command::TrainMappers(a) => train_mappers(a),
        Command::EvalMse(a) => eval_mse(a),
        Command::EvalOneclass(a) => eval_oneclass(a),
        Command::EvalMulticlass(a) => eval_multiclass(a),
    };
    match threads {
        None => go(),
        Some(0) => Err(Error::Settings("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Settings(e.to_string()))?
            .install(go),
    }
}

fn required<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::Settings(format!("missing --{name} (flag or config key)")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

// ---- synth-gen ----

#[derive(Serialize)]
struct SynthProvenance<'a> {
    generator: &'static str,
    config: &'a SynthConfig,
}

fn synth_gen(a: SynthGenArgs) -> Result<()> {
    let kv = KvConfig::load(a.config.as_deref())?;
    let d = SynthConfig::default();
    let config = SynthConfig {
        n_classes: kv.resolve(None, "n_classes", d.n_classes)?,
        n_base: kv.resolve(None, "n_base", d.n_base)?,
        n_val: kv.resolve(None, "n_val", d.n_val)?,
        n_test: kv.resolve(None, "n_test", d.n_test)?,
        feat_dim: kv.resolve(None, "feat_dim", d.feat_dim)?,
        text_dim: kv.resolve(None, "text_dim", d.text_dim)?,
        samples_per_class: kv.resolve(None, "samples_per_class", d.samples_per_class)?,
        mean_map_noise: kv.resolve(None, "mean_map_noise", d.mean_map_noise)?,
        var_map_noise: kv.resolve(None, "var_map_noise", d.var_map_noise)?,
        domain_shift: kv.resolve(a.domain_shift, "domain_shift", d.domain_shift)?,
        seed: kv.resolve(a.seed, "seed", d.seed)?,
        mean_scale: kv.resolve(None, "mean_scale", d.mean_scale)?,
        var_spread: kv.resolve(None, "var_spread", d.var_spread)?,
    };
    let out = required(kv.resolve_opt(a.out, "out")?, "out")?;
    kv.finish()?;

    let world = generate_world(&config)?;
    let mut manifest = Manifest::for_dataset(&world.dataset);
    manifest.provenance = serde_json::to_value(SynthProvenance {
        generator: "textmoments synth-gen",
        config: &config,
    })
    .map_err(|e| Error::Format(e.to_string()))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_dataset_with_manifest(&world.dataset, &out, &manifest)?;
    println!("wrote {} classes to {}", world.dataset.len(), out.display());
    Ok(())
}

// ---- train-mappers ----

#[derive(Serialize)]
struct TrainReportFile<'a> {
    schema_version: u32,
    command: &'static str,
    data: String,
    config: &'a TrainConfig,
    var_floor: f64,
    n_train_classes: usize,
    n_val_classes: usize,
    reports: &'a MapperReports,
    mse: Vec<HeadMse>,
}

#[derive(Serialize)]
struct TrainFailure<'a> {
    schema_version: u32,
    command: &'static str,
    data: String,
    config: &'a TrainConfig,
    error: String,
}

fn train_mappers(a: TrainArgs) -> Result<()> {
    let kv = KvConfig::load(a.config.as_deref())?;
    let d = TrainConfig::default();
    let config = TrainConfig {
        learning_rate: kv.resolve(a.lr, "lr", d.learning_rate)?,
        weight_decay: kv.resolve(a.wd, "wd", d.weight_decay)?,
        epochs: kv.resolve(a.epochs, "epochs", d.epochs)?,
        batch_size: kv.resolve(a.batch_size, "batch_size", d.batch_size)?,
        seed: kv.resolve(a.seed, "seed", d.seed)?,
        hidden_dim: kv.resolve(a.hidden, "hidden", d.hidden_dim)?,
        patience: kv.resolve(a.patience, "patience", d.patience)?,
        momentum: kv.resolve(a.momentum, "momentum", d.momentum)?,
        squared_data_term: kv.resolve_flag(a.squared_data_term, "squared_data_term")?,
    };
    let var_floor = kv.resolve(a.var_floor, "var_floor", DEFAULT_VAR_FLOOR)?;
    let data = required(kv.resolve_opt(a.data, "data")?, "data")?;
    let out = required(kv.resolve_opt(a.out, "out")?, "out")?;
    kv.finish()?;
    config.validate()?;
    if !(var_floor > 0.0 && var_floor.is_finite()) {
        return Err(Error::Settings(format!("var_floor must be > 0, got {var_floor}")));
    }

    let ds = read_dataset(&data)?;
    let train = ds.class_targets(Split::Base)?;
    let mut val = ds.class_targets(Split::Val)?;
    if val.is_empty() {
        // Early stopping then watches the training classes.
        val = train.clone();
    }
    create_dir(&out)?;
    let (mut model, reports) = match train_text_stats_model(&train, &val, &config) {
        Ok(r) => r,
        Err(e @ Error::Numerical(_)) => {
            write_json(
                &out.join("train_failure.json"),
                &TrainFailure {
                    schema_version: REPORT_SCHEMA_VERSION,
                    command: "train-mappers",
                    data: path_string(&data),
                    config: &config,
                    error: e.to_string(),
                },
            )?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    model.var_floor = var_floor;
    model.save(&out)?;
    let mut mse = head_mse(&model, "base", &train)?.to_vec();
    mse.extend(head_mse(&model, "val", &val)?);
    write_json(
        &out.join("train_report.json"),
        &TrainReportFile {
            schema_version: REPORT_SCHEMA_VERSION,
            command: "train-mappers",
            data: path_string(&data),
            config: &config,
            var_floor,
            n_train_classes: train.len(),
            n_val_classes: val.len(),
            reports: &reports,
            mse,
        },
    )?;
    println!(
        "trained mappers (best epochs {} / {}) into {}",
        reports.mean.best_epoch,
        reports.var.best_epoch,
        out.display()
    );
    Ok(())
}

// ---- eval-mse ----

#[derive(Serialize)]
struct MseReport {
    schema_version: u32,
    command: &'static str,
    data: String,
    mappers: String,
    split: Split,
    cross_domain_data: Option<String>,
    rows: Vec<HeadMse>,
}

fn load_model(dir: &Path, ds: &FewShotDataset) -> Result<TextStatsModel> {
    let model = TextStatsModel::load(dir)?;
    check_dim(model.text_dim(), ds.text_dim())?;
    check_dim(model.feat_dim(), ds.feat_dim())?;
    Ok(model)
}

fn eval_mse(a: MseArgs) -> Result<()> {
    let kv = KvConfig::load(a.config.as_deref())?;
    let data = required(kv.resolve_opt(a.data, "data")?, "data")?;
    let mappers = required(kv.resolve_opt(a.mappers, "mappers")?, "mappers")?;
    let split = kv.resolve(a.split, "split", Split::Val)?;
    let cd = kv.resolve_opt(a.cross_domain_data, "cross_domain_data")?;
    let out = kv.resolve_opt(a.out, "out")?;
    kv.finish()?;
    if split == Split::Base {
        return Err(Error::Settings("--split must be val or test".into()));
    }

    let ds = read_dataset(&data)?;
    let model = load_model(&mappers, &ds)?;
    let mut rows = head_mse(&model, "base", &ds.class_targets(Split::Base)?)?.to_vec();
    let held_out = ds.class_targets(split)?;
    if held_out.is_empty() {
        return Err(Error::Sampling(format!("no {split} classes in {}", data.display())));
    }
    rows.extend(head_mse(&model, &split.to_string(), &held_out)?);
    if let Some(cd_path) = &cd {
        let cd_ds = read_dataset(cd_path)?;
        check_dim(model.text_dim(), cd_ds.text_dim())?;
        check_dim(model.feat_dim(), cd_ds.feat_dim())?;
        rows.extend(head_mse(&model, "cross-domain-test", &cd_ds.class_targets(Split::Test)?)?);
    }

    let report = MseReport {
        schema_version: REPORT_SCHEMA_VERSION,
        command: "eval-mse",
        data: path_string(&data),
        mappers: path_string(&mappers),
        split,
        cross_domain_data: cd.as_deref().map(path_string),
        rows,
    };
    match out {
        Some(dir) => {
            create_dir(&dir)?;
            write_json(&dir.join("report.json"), &report)?;
            write_csv(&dir.join("mse.csv"), &report.rows)?;
        }
        None => {
            let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
            println!("{text}");
        }
    }
    Ok(())
}

// ---- eval-oneclass / eval-multiclass ----

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|e| Error::Settings(format!("invalid {what} entry {s:?}: {e}")))
        })
        .collect()
}

/// `0,0.5,1` for both coefficients, or `alphas/betas`.
pub fn parse_grid(text: &str) -> Result<HyperGrid> {
    let (a, b) = text.split_once('/').unwrap_or((text, text));
    HyperGrid::new(parse_list(a, "grid")?, parse_list(b, "grid")?)
}

pub fn parse_alpha_beta(text: &str) -> Result<AdaptConfig> {
    match parse_list::<f64>(text, "alpha,beta")?.as_slice() {
        &[alpha, beta] => AdaptConfig::new(alpha, beta),
        _ => Err(Error::Settings(format!("expected `alpha,beta`, got {text:?}"))),
    }
}

struct Resolved {
    data: PathBuf,
    mappers: Option<PathBuf>,
    variants: Vec<MethodVariant>,
    out: PathBuf,
}

/// Applies the shared evaluation settings on top of `config`.
fn resolve_eval(a: EvalArgs, kv: &KvConfig, config: &mut ProtocolConfig) -> Result<Resolved> {
    let data = required(kv.resolve_opt(a.data, "data")?, "data")?;
    let mappers = kv.resolve_opt(a.mappers, "mappers")?;
    let out = required(kv.resolve_opt(a.out, "out")?, "out")?;
    let variants = kv.resolve(a.variants, "variants", "baseline,M,C,MC".to_string())?;
    let variants: Vec<MethodVariant> = parse_list(&variants, "variant")?;
    if let Some(shots) = kv.resolve_opt(a.shots, "shots")? {
        config.shots = parse_list(&shots, "shots")?;
    }
    if config.shots.is_empty() {
        return Err(Error::Settings("no shot counts given".into()));
    }
    config.n_episodes = kv.resolve(a.episodes, "episodes", config.n_episodes)?;
    config.seed = kv.resolve(a.seed, "seed", config.seed)?;
    config.zero_shot_beta = kv.resolve(a.zero_shot_beta, "zero_shot_beta", config.zero_shot_beta)?;
    config.posterior = kv.resolve(a.posterior, "posterior", config.posterior)?;

    let fixed = kv.resolve_opt(a.fixed_alpha_beta, "fixed_alpha_beta")?;
    let grid = kv.resolve_opt(a.grid, "grid")?;
    let validate = kv.resolve_flag(a.validate, "validate")?;
    config.hyper = match (fixed, grid, validate) {
        (Some(_), Some(_), _) | (Some(_), None, true) => {
            return Err(Error::Settings(
                "--fixed-alpha-beta cannot be combined with --grid or --validate".into(),
            ))
        }
        (Some(f), None, false) => HyperMode::Fixed(parse_alpha_beta(&f)?),
        (None, Some(g), _) => HyperMode::Validate(parse_grid(&g)?),
        (None, None, true) => HyperMode::Validate(HyperGrid::default_grid()),
        (None, None, false) => config.hyper.clone(),
    };
    Ok(Resolved {
        data,
        mappers,
        variants,
        out,
    })
}

#[derive(Serialize)]
struct EvalReport<'a> {
    schema_version: u32,
    command: &'static str,
    data: String,
    mappers: Option<String>,
    variants: Vec<String>,
    #[serde(flatten)]
    report: &'a ProtocolReport,
}

#[derive(Serialize)]
struct CurveCsvRow<'a> {
    variant: &'a str,
    k: usize,
    metric: Option<f64>,
    ci: Option<f64>,
    ci_defined: bool,
    n_episodes: usize,
    seed: u64,
    mean_alpha: Option<f64>,
    mean_beta: Option<f64>,
    error: &'a str,
}

#[derive(Serialize)]
struct RocCsvRow<'a> {
    variant: &'a str,
    k: usize,
    episode: usize,
    threshold: f64,
    fpr: f64,
    tpr: f64,
}

/// Runs the protocol and writes `report.json`, `curve.csv` and `deltas.csv`.
fn run_eval(command: &'static str, r: &Resolved, config: &ProtocolConfig) -> Result<()> {
    let ds = read_dataset(&r.data)?;
    let needs_text = r.variants.iter().any(MethodVariant::uses_text);
    let model = match (&r.mappers, needs_text) {
        (Some(dir), true) => Some(load_model(dir, &ds)?),
        _ => None,
    };
    let predictor = model.as_ref().map(|m| m as &dyn crate::mapper::StatsPredictor);
    let report = run_protocol(&ds, config, &r.variants, predictor)?;

    create_dir(&r.out)?;
    write_json(
        &r.out.join("report.json"),
        &EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            command,
            data: path_string(&r.data),
            mappers: r.mappers.as_deref().map(path_string),
            variants: r.variants.iter().map(ToString::to_string).collect(),
            report: &report,
        },
    )?;
    let curve: Vec<CurveCsvRow> = report
        .rows
        .iter()
        .map(|row| {
            // Failed cells leave the numeric columns empty.
            let ok = |v: f64| row.is_ok().then_some(v);
            CurveCsvRow {
                variant: &row.variant,
                k: row.k,
                metric: ok(row.metric),
                ci: ok(row.ci),
                ci_defined: row.ci_defined,
                n_episodes: row.n_episodes,
                seed: row.seed,
                mean_alpha: ok(row.mean_alpha),
                mean_beta: ok(row.mean_beta),
                error: row.error.as_deref().unwrap_or(""),
            }
        })
        .collect();
    write_csv(&r.out.join("curve.csv"), &curve)?;
    write_csv(&r.out.join("deltas.csv"), &report.deltas)?;

    if matches!(config.kind, ProtocolKind::OneClass { .. }) {
        // ROC points of the first episode of every successful cell.
        let mut roc = Vec::new();
        for row in report.rows.iter().filter(|row| row.is_ok()) {
            let variant: MethodVariant = row.variant.parse()?;
            for p in oneclass_roc(&ds, config, variant, row.k, 0, predictor)? {
                roc.push(RocCsvRow {
                    variant: &row.variant,
                    k: row.k,
                    episode: 0,
                    threshold: p.threshold,
                    fpr: p.fpr,
                    tpr: p.tpr,
                });
            }
        }
        write_csv(&r.out.join("roc.csv"), &roc)?;
    }

    for row in &report.rows {
        match &row.error {
            None => println!(
                "{:<8} k={:<3} {} {:.4} ± {:.4}",
                row.variant, row.k, report.metric, row.metric, row.ci
            ),
            Some(e) => println!("{:<8} k={:<3} error: {e}", row.variant, row.k),
        }
    }
    Ok(())
}

fn eval_oneclass(a: OneClassArgs) -> Result<()> {
    let kv = KvConfig::load(a.common.config.as_deref())?;
    let mut config = ProtocolConfig::one_class(vec![0, 1, 2, 4, 8, 16]);
    let n_queries = kv.resolve(a.queries, "queries", 100)?;
    config.kind = ProtocolKind::OneClass { n_queries };
    let resolved = resolve_eval(a.common, &kv, &mut config)?;
    kv.finish()?;
    run_eval("eval-oneclass", &resolved, &config)
}

fn eval_multiclass(a: MultiClassArgs) -> Result<()> {
    let kv = KvConfig::load(a.common.config.as_deref())?;
    let mut config = ProtocolConfig::multi_class(vec![0, 1, 2, 4, 8, 16]);
    config.kind = ProtocolKind::MultiClass {
        n_way: kv.resolve(a.n_way, "n_way", 20)?,
        q_per_class: kv.resolve(a.q_per_class, "q_per_class", 15)?,
    };
    let resolved = resolve_eval(a.common, &kv, &mut config)?;
    kv.finish()?;
    run_eval("eval-multiclass", &resolved, &config)
}
