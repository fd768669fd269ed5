//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or validation
//! failure (bad flags, unknown notation, unreadable inputs).

mod oracles;
mod output;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{build_subsets, load_manifest, ContextSet, Manifest, Modality};
use crate::engine::{run_baseline, run_cross, run_full_analysis, AnalysisConfig, EngineError};
use crate::features::{parse_modalities, FeatureLayout};
use crate::metrics::Metric;
use crate::oracle::{protocol, train_builtin, BuiltinModel, Oracle, TrainConfig};
use crate::synth::{generate, plant_check, GeneratorSpec};

pub use oracles::{build_oracles, load_builtin, BuiltinConfig, OracleSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn config<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "capfi", version, about = "Context-aware permutation feature importance")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unpermuted Acc/AUC/F1 per oracle and context.
    Baseline(BaselineArgs),
    /// Permutation importance per oracle, context, feature and metric.
    #[command(alias = "capfi")]
    Importance(ImportanceArgs),
    /// Swap one feature from donor-context samples into a source context.
    Cross(CrossArgs),
    /// Generate a synthetic manifest from a generator spec.
    Synth(SynthArgs),
    /// Train the builtin logistic surrogate and write its weights.
    Train(TrainArgs),
    /// Serve a builtin model or a constant over the oracle protocol on stdio.
    ServeOracle(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Structured,
    Tabular,
    Plot,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Manifest to evaluate on.
    #[arg(long)]
    pub dataset: PathBuf,
    /// `builtin:<config.json>` or `exec:<command>`; repeatable.
    #[arg(long = "oracle", required = true)]
    pub oracles: Vec<OracleSpec>,
    /// Modalities fed to the oracles (comma list or `all`).
    #[arg(long, default_value = "all")]
    pub inputs: String,
    #[arg(long)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "structured,tabular,plot")]
    pub format: Vec<Format>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma list of notations or set expressions; default the 17 base sets.
    #[arg(long)]
    pub contexts: Option<String>,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub contexts: Option<String>,
    /// Features to permute; default every input modality.
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long, default_value = "acc,auc,f1")]
    pub metrics: String,
    /// Fixed repetition count; default the context cardinality.
    #[arg(long)]
    pub repetitions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CrossArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub donor: String,
    #[arg(long)]
    pub feature: Modality,
    #[arg(long, default_value_t = 20)]
    pub repetitions: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec (JSON).
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Move local-context embeddings into a binary sidecar next to the manifest.
    #[arg(long)]
    pub sidecar: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Weight dump to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Train on this context only.
    #[arg(long)]
    pub context: Option<String>,
    #[arg(long, default_value = "all")]
    pub inputs: String,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "surrogate")]
    pub name: String,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "model")]
pub struct ServeArgs {
    #[arg(long, group = "model")]
    pub weights: Option<PathBuf>,
    /// Answer every row with this score.
    #[arg(long, group = "model")]
    pub constant: Option<f64>,
}

/// Parse `args` (program name first) and run. Never panics on bad input.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("capfi: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli, argv: &[OsString]) -> Result<(), CliError> {
    match cli.command {
        Command::Baseline(a) => cmd_baseline(a, argv),
        Command::Importance(a) => cmd_importance(a, argv),
        Command::Cross(a) => cmd_cross(a, argv),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::ServeOracle(a) => cmd_serve(a),
    }
}

fn split_list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect()
}

fn load_dataset(path: &Path) -> Result<Manifest, CliError> {
    let m = load_manifest(path).map_err(config)?;
    for w in m.warnings() {
        eprintln!("capfi: warning: {w}");
    }
    Ok(m)
}

fn input_layout(manifest: &Manifest, inputs: &str) -> Result<FeatureLayout, CliError> {
    FeatureLayout::from_names(*manifest.dims(), &split_list(inputs)).map_err(config)
}

/// Resolve `--contexts`; `None` selects the base sets in taxonomy order.
pub fn resolve_contexts(manifest: &Manifest, spec: Option<&str>) -> Result<Vec<ContextSet>, CliError> {
    let index = build_subsets(manifest);
    let sets: Vec<ContextSet> = match spec {
        None => index.base_sets().cloned().collect(),
        Some(s) => split_list(s)
            .into_iter()
            .map(|e| index.evaluate(e).map_err(config))
            .collect::<Result<_, _>>()?,
    };
    if sets.is_empty() {
        return Err(CliError::Config("no contexts selected".into()));
    }
    Ok(sets)
}

fn resolve_one(manifest: &Manifest, expr: &str) -> Result<ContextSet, CliError> {
    build_subsets(manifest).evaluate(expr.trim()).map_err(config)
}

struct Prepared {
    manifest: Manifest,
    layout: FeatureLayout,
    oracles: Vec<Box<dyn Oracle>>,
}

impl Prepared {
    fn new(common: &CommonArgs) -> Result<Self, CliError> {
        let manifest = load_dataset(&common.dataset)?;
        let layout = input_layout(&manifest, &common.inputs)?;
        Ok(Prepared {
            oracles: Vec::new(),
            manifest,
            layout,
        })
    }

    fn start_oracles(&mut self, specs: &[OracleSpec]) -> Result<(), CliError> {
        self.oracles = build_oracles(specs, &self.manifest, &self.layout)?;
        Ok(())
    }

    fn oracle_refs(&self) -> Vec<&dyn Oracle> {
        self.oracles.iter().map(|o| o.as_ref()).collect()
    }
}

fn engine_error(e: EngineError) -> CliError {
    match e {
        EngineError::Oracle(_) => runtime(e),
        _ => config(e),
    }
}

fn prepare_out(dir: &Path, argv: &[OsString]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    output::write_run_log(dir, argv).map_err(runtime)
}

fn report_failures(failures: &[crate::engine::CellFailure], produced: usize) -> Result<(), CliError> {
    for f in failures {
        let feature = f.feature.map(|m| format!(" {m}")).unwrap_or_default();
        let metric = f.metric.map(|m| format!(" {m}")).unwrap_or_default();
        eprintln!("capfi: skipped {} on {}{feature}{metric}: {}", f.model, f.context, f.error);
    }
    if produced == 0 && !failures.is_empty() {
        return Err(CliError::Runtime("every cell failed; see the report's failures".into()));
    }
    Ok(())
}

fn cmd_baseline(a: BaselineArgs, argv: &[OsString]) -> Result<(), CliError> {
    let mut p = Prepared::new(&a.common)?;
    let contexts = resolve_contexts(&p.manifest, a.contexts.as_deref())?;
    prepare_out(&a.common.out, argv)?;
    p.start_oracles(&a.common.oracles)?;
    let report = run_baseline(&p.manifest, &p.oracle_refs(), &contexts, &p.layout, a.common.seed).map_err(engine_error)?;
    let out = &a.common.out;
    if a.common.format.contains(&Format::Structured) {
        output::write(out.join("baseline.json"), report.to_json())?;
    }
    if a.common.format.contains(&Format::Tabular) {
        output::write(out.join("baseline.csv"), output::baseline_csv(&report)?)?;
    }
    report_failures(&report.failures, report.rows.len())
}

fn cmd_importance(a: ImportanceArgs, argv: &[OsString]) -> Result<(), CliError> {
    let mut p = Prepared::new(&a.common)?;
    let contexts = resolve_contexts(&p.manifest, a.contexts.as_deref())?;
    let features = match &a.features {
        None => p.layout.modalities.clone(),
        Some(s) => {
            let mut f = parse_modalities(&split_list(s)).map_err(config)?;
            f.sort();
            f.dedup();
            if let Some(m) = f.iter().find(|m| !p.layout.contains(**m)) {
                return Err(CliError::Config(format!("feature `{m}` is not among the oracle inputs")));
            }
            f
        }
    };
    let metrics = split_list(&a.metrics)
        .into_iter()
        .map(|m| m.parse::<Metric>().map_err(config))
        .collect::<Result<Vec<_>, _>>()?;
    if metrics.is_empty() {
        return Err(CliError::Config("no metrics selected".into()));
    }
    if a.repetitions == Some(0) {
        return Err(CliError::Config("--repetitions must be at least 1".into()));
    }
    prepare_out(&a.common.out, argv)?;
    p.start_oracles(&a.common.oracles)?;
    let cfg = AnalysisConfig {
        layout: p.layout.clone(),
        metrics,
        seed: a.common.seed,
        repetitions: a.repetitions,
    };
    let report = run_full_analysis(&p.manifest, &p.oracle_refs(), &contexts, &features, &cfg).map_err(engine_error)?;
    let out = &a.common.out;
    if a.common.format.contains(&Format::Structured) {
        output::write(out.join("importance.json"), report.to_json())?;
    }
    if a.common.format.contains(&Format::Tabular) {
        output::write(out.join("importance.csv"), output::importance_csv(&report)?)?;
    }
    if a.common.format.contains(&Format::Plot) {
        output::write_plots(&out.join("plots"), &report)?;
    }
    report_failures(&report.failures, report.records.len())
}

fn cmd_cross(a: CrossArgs, argv: &[OsString]) -> Result<(), CliError> {
    let mut p = Prepared::new(&a.common)?;
    let source = resolve_one(&p.manifest, &a.source)?;
    let donor = resolve_one(&p.manifest, &a.donor)?;
    if source.is_empty() {
        return Err(CliError::Config(format!("source context `{}` is empty", source.notation)));
    }
    if donor.is_empty() {
        return Err(CliError::Config(format!("donor context `{}` is empty", donor.notation)));
    }
    if !p.layout.contains(a.feature) {
        return Err(CliError::Config(format!("feature `{}` is not among the oracle inputs", a.feature)));
    }
    if a.repetitions == 0 {
        return Err(CliError::Config("--repetitions must be at least 1".into()));
    }
    prepare_out(&a.common.out, argv)?;
    p.start_oracles(&a.common.oracles)?;
    let report = run_cross(
        &p.manifest,
        &p.oracle_refs(),
        a.feature,
        &source,
        &donor,
        &p.layout,
        a.common.seed,
        a.repetitions,
    )
    .map_err(engine_error)?;
    let out = &a.common.out;
    if a.common.format.contains(&Format::Structured) {
        output::write(out.join("cross.json"), report.to_json())?;
    }
    if a.common.format.contains(&Format::Tabular) {
        output::write(out.join("cross.csv"), output::cross_csv(&report)?)?;
    }
    report_failures(&report.failures, report.rows.len())
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let spec = GeneratorSpec::load(&a.spec).map_err(config)?;
    let manifest = generate(&spec).map_err(config)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(runtime)?;
    }
    if a.sidecar {
        let stem = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "manifest".into());
        let name = format!("{stem}.embeddings.bin");
        let (text, blob) = manifest.to_json_with_sidecar(&name);
        output::write(a.out.with_file_name(&name), blob)?;
        output::write(&a.out, text)?;
    } else {
        output::write(&a.out, manifest.to_json())?;
    }
    let mut stdout = std::io::stdout().lock();
    let _ = write!(stdout, "{}", build_subsets(&manifest).cardinality_table());
    let plant = plant_check(&manifest, &spec);
    for v in plant.violations() {
        eprintln!("capfi: warning: planted dependence on {v} not visible in the generated data");
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let manifest = load_dataset(&a.dataset)?;
    let layout = input_layout(&manifest, &a.inputs)?;
    let indices = match &a.context {
        Some(c) => resolve_one(&manifest, c)?.members,
        None => (0..manifest.len()).collect(),
    };
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: a.learning_rate.or(d.learning_rate),
        epochs: a.epochs.unwrap_or(d.epochs),
        l2: a.l2.unwrap_or(d.l2),
        seed: a.seed,
    };
    let model = train_builtin(&manifest, &indices, &layout, &cfg, &a.name).map_err(config)?;
    model.save(&a.out).map_err(runtime)?;
    let loss = model.loss_history().last().copied().unwrap_or(f64::NAN);
    println!("trained `{}` on {} samples, final loss {loss:.6}", a.name, indices.len());
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<(), CliError> {
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    let stats = if let Some(path) = &a.weights {
        let model = BuiltinModel::load(path).map_err(config)?;
        let layout = model.layout().fingerprint();
        let name = model.meta().name.clone();
        protocol::serve(stdin, stdout, &name, crate::TOOLKIT_VERSION, Some(&layout), |row| {
            model.predict_row(row)
        })
    } else {
        let c = a.constant.expect("clap enforces one of --weights/--constant");
        if !(0.0..=1.0).contains(&c) {
            return Err(CliError::Config(format!("--constant must lie in [0, 1], got {c}")));
        }
        protocol::serve(stdin, stdout, "constant", crate::TOOLKIT_VERSION, None, |_| c)
    };
    stats.map(|_| ()).map_err(runtime)
}
