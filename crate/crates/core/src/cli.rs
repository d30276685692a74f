//! Command-line front end: `ingest`, `run`, `train` and `predict`.
//!
//! Exit codes: 0 on success, 1 on a fatal error, 2 when a run finished but
//! skipped at least one fold.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{load_corpus, summarize, CorpusFormat, FieldMapping, JsonRecord, RumourCounts};
use crate::error::Error;
use crate::experiments::{run_experiment, ExperimentConfig, ExperimentPlan, ExperimentResults, FoldUnit, Method, Protocol};
use crate::multiclass::{predict_stance, train_stance_model, StanceExample, StanceModel, StanceModelRecord, TrainConfig};
use crate::text::{
    BrownClusterTable, FeatureMode, Featurizer, LabeledInstance, ResourceDigests, Resources, Vocabulary,
    BUNDLED_EMOTICONS, BUNDLED_STOPWORDS,
};

pub const SEED_ENV: &str = "STANCEKIT_SEED";
pub const MODEL_MAGIC: &str = "stancekit-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "stancekit", version, about = "Gaussian Process stance classification for rumour tweets")]
pub struct Cli {
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a corpus and print per-rumour label counts.
    Ingest(IngestArgs),
    /// Run an experiment grid from a TOML config.
    Run(RunArgs),
    /// Train one stance model and save it.
    Train(TrainArgs),
    /// Predict stances for new tweets with a saved model.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FieldArgs {
    #[arg(long)]
    pub field_tweet_id: Option<String>,
    #[arg(long)]
    pub field_text: Option<String>,
    #[arg(long)]
    pub field_rumour_id: Option<String>,
    #[arg(long)]
    pub field_event_id: Option<String>,
    #[arg(long)]
    pub field_label: Option<String>,
    #[arg(long)]
    pub field_order: Option<String>,
    #[arg(long)]
    pub field_retweet: Option<String>,
}

impl FieldArgs {
    fn apply(&self, mapping: &mut FieldMapping) {
        let pairs = [
            (&self.field_tweet_id, &mut mapping.tweet_id),
            (&self.field_text, &mut mapping.text),
            (&self.field_rumour_id, &mut mapping.rumour_id),
            (&self.field_event_id, &mut mapping.event_id),
            (&self.field_label, &mut mapping.label),
            (&self.field_order, &mut mapping.order),
            (&self.field_retweet, &mut mapping.retweet),
        ];
        for (arg, slot) in pairs {
            if let Some(v) = arg {
                *slot = v.clone();
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ResourceArgs {
    /// Brown paths file (`bits<TAB>word<TAB>count`); required for Brown features.
    #[arg(long)]
    pub brown_paths: Option<PathBuf>,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub emoticons: Option<PathBuf>,
    /// `brown` or `bow`.
    #[arg(long, value_parser = parse_feature_mode)]
    pub features: Option<FeatureMode>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub corpus: PathBuf,
    /// `jsonl` or `csv`; guessed from the extension otherwise.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
    #[command(flatten)]
    pub fields: FieldArgs,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    pub lenient: bool,
    /// Also write the parsed corpus as canonical JSONL.
    #[arg(long)]
    pub write_jsonl: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run config; relative paths inside it resolve against its directory.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
    #[command(flatten)]
    pub fields: FieldArgs,
    #[command(flatten)]
    pub resources: ResourceArgs,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `LOO` or `LPO`.
    #[arg(long, value_parser = parse_protocol)]
    pub protocol: Option<Protocol>,
    /// Target training sizes, comma separated.
    #[arg(long = "k", value_delimiter = ',')]
    pub target_train_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub test_offset: Option<usize>,
    /// `rumour` or `event`.
    #[arg(long, value_parser = parse_fold_unit)]
    pub fold_unit: Option<FoldUnit>,
    /// Methods, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub corpus: PathBuf,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
    #[command(flatten)]
    pub fields: FieldArgs,
    #[command(flatten)]
    pub resources: ResourceArgs,
    /// `GP`, `GPPooled` or `GPICM`.
    #[arg(long, default_value = "GPICM")]
    pub variant: Method,
    /// Rumour the model is meant for; unseen rumours share its task.
    #[arg(long)]
    pub target: String,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Train on retweets too.
    #[arg(long)]
    pub keep_retweets: bool,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// JSONL or CSV with tweet id, text and optionally rumour id.
    pub input: PathBuf,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
    #[command(flatten)]
    pub fields: FieldArgs,
    /// Write rows here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub lenient: bool,
}

fn parse_format(s: &str) -> Result<CorpusFormat, String> {
    match s.to_ascii_lowercase().as_str() {
        "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
        "csv" => Ok(CorpusFormat::Csv),
        _ => Err(format!("unknown corpus format {s:?}")),
    }
}

fn parse_feature_mode(s: &str) -> Result<FeatureMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "brown" => Ok(FeatureMode::Brown),
        "bow" => Ok(FeatureMode::Bow),
        _ => Err(format!("unknown feature mode {s:?}")),
    }
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    match s.to_ascii_lowercase().as_str() {
        "loo" => Ok(Protocol::Loo),
        "lpo" => Ok(Protocol::Lpo),
        _ => Err(format!("unknown protocol {s:?}")),
    }
}

fn parse_fold_unit(s: &str) -> Result<FoldUnit, String> {
    match s.to_ascii_lowercase().as_str() {
        "rumour" | "rumor" => Ok(FoldUnit::Rumour),
        "event" => Ok(FoldUnit::Event),
        _ => Err(format!("unknown fold unit {s:?}")),
    }
}

/// Experiment grid as written in a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanSection {
    pub protocol: Protocol,
    pub target_train_sizes: Vec<usize>,
    pub test_offset: Option<usize>,
    pub fold_unit: FoldUnit,
    pub methods: Vec<Method>,
}

impl Default for PlanSection {
    fn default() -> Self {
        let sweep = ExperimentPlan::lpo_sweep(Method::ALL.to_vec());
        Self {
            protocol: sweep.protocol,
            target_train_sizes: sweep.target_train_sizes,
            test_offset: sweep.test_offset,
            fold_unit: sweep.fold_unit,
            methods: sweep.methods,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub format: Option<CorpusFormat>,
    pub lenient: bool,
    pub fields: FieldMapping,
    pub features: FeatureMode,
    pub brown_paths: Option<PathBuf>,
    /// Bundled lists are used when unset.
    pub stopwords: Option<PathBuf>,
    pub emoticons: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub plan: PlanSection,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::new(),
            format: None,
            lenient: false,
            fields: FieldMapping::default(),
            features: FeatureMode::Brown,
            brown_paths: None,
            stopwords: None,
            emoticons: None,
            output_dir: PathBuf::from("results"),
            seed: 0,
            plan: PlanSection::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file and makes its relative paths absolute.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(parent)?;
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.output_dir);
        for p in [&mut self.brown_paths, &mut self.stopwords, &mut self.emoticons].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            protocol: self.plan.protocol,
            target_train_sizes: self.plan.target_train_sizes.clone(),
            test_offset: self.plan.test_offset,
            fold_unit: self.plan.fold_unit,
            seed: self.seed,
            methods: self.plan.methods.clone(),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.corpus.as_os_str().is_empty() {
            bail!("no corpus given");
        }
        for p in std::iter::once(&self.corpus).chain([&self.brown_paths, &self.stopwords, &self.emoticons].into_iter().flatten()) {
            if !p.is_file() {
                bail!("{} does not exist", p.display());
            }
        }
        if self.features == FeatureMode::Brown && self.brown_paths.is_none() {
            bail!("Brown features need brown_paths");
        }
        self.experiment.train.fit.validate()?;
        self.plan().validate()?;
        Ok(())
    }

    fn apply_args(&mut self, args: &RunArgs) {
        if let Some(p) = &args.corpus {
            self.corpus = p.clone();
        }
        if let Some(p) = &args.output_dir {
            self.output_dir = p.clone();
        }
        if args.format.is_some() {
            self.format = args.format;
        }
        args.fields.apply(&mut self.fields);
        let r = &args.resources;
        if r.brown_paths.is_some() {
            self.brown_paths = r.brown_paths.clone();
        }
        if r.stopwords.is_some() {
            self.stopwords = r.stopwords.clone();
        }
        if r.emoticons.is_some() {
            self.emoticons = r.emoticons.clone();
        }
        if let Some(f) = r.features {
            self.features = f;
        }
        if let Some(s) = args.seed {
            self.seed = s;
        }
        if let Some(p) = args.protocol {
            self.plan.protocol = p;
        }
        if let Some(k) = &args.target_train_sizes {
            self.plan.target_train_sizes = k.clone();
        }
        if args.test_offset.is_some() {
            self.plan.test_offset = args.test_offset;
        }
        if let Some(u) = args.fold_unit {
            self.plan.fold_unit = u;
        }
        if let Some(m) = &args.methods {
            self.plan.methods = m.clone();
        }
        if let Some(n) = args.max_iters {
            self.experiment.train.optimizer.max_iters = n;
        }
        if let Some(n) = args.restarts {
            self.experiment.train.optimizer.restarts = n;
        }
        self.lenient |= args.lenient;
    }
}

/// Applies `STANCEKIT_SEED` when it is set.
pub fn seed_override(seed: u64) -> anyhow::Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(std::env::VarError::NotPresent) => Ok(seed),
        Err(e) => Err(anyhow!("{SEED_ENV}: {e}")),
    }
}

/// Raw stopword and emoticon files, kept so a saved model can rebuild its pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSources {
    pub stopwords: String,
    pub emoticons: String,
}

impl ResourceSources {
    pub fn load(stopwords: Option<&Path>, emoticons: Option<&Path>) -> anyhow::Result<Self> {
        let read = |p: Option<&Path>, fallback: &str| -> anyhow::Result<String> {
            match p {
                Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
                None => Ok(fallback.to_string()),
            }
        };
        Ok(Self {
            stopwords: read(stopwords, BUNDLED_STOPWORDS)?,
            emoticons: read(emoticons, BUNDLED_EMOTICONS)?,
        })
    }

    pub fn build(&self) -> crate::Result<Resources> {
        Resources::from_strs(&self.stopwords, &self.emoticons)
    }
}

/// Everything needed to rebuild a [`Featurizer`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizerSpec {
    pub mode: FeatureMode,
    pub resources: ResourceSources,
    /// Serialised Brown table in Brown mode.
    pub brown_paths: Option<String>,
    /// Frozen vocabulary in bag-of-words mode.
    pub vocabulary: Option<Vec<String>>,
}

impl FeaturizerSpec {
    pub fn build(&self) -> crate::Result<Featurizer> {
        let resources = Arc::new(self.resources.build()?);
        match self.mode {
            FeatureMode::Brown => {
                let text = self
                    .brown_paths
                    .as_deref()
                    .ok_or_else(|| Error::ModelFormat("Brown featurizer without a cluster table".into()))?;
                let table = BrownClusterTable::parse(text, Path::new("<model>"))?;
                Ok(Featurizer::brown(resources, Arc::new(table)))
            }
            FeatureMode::Bow => {
                let words = self
                    .vocabulary
                    .clone()
                    .ok_or_else(|| Error::ModelFormat("bag-of-words featurizer without a vocabulary".into()))?;
                Ok(Featurizer::bow(resources, Vocabulary::from(words)))
            }
        }
    }
}

/// On-disk model: magic and version first, then the pipeline and the fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelContainer {
    pub magic: String,
    pub version: u32,
    pub featurizer: FeaturizerSpec,
    pub model: StanceModelRecord,
}

impl ModelContainer {
    pub fn new(featurizer: FeaturizerSpec, model: &StanceModel) -> Self {
        Self {
            magic: MODEL_MAGIC.into(),
            version: MODEL_VERSION,
            featurizer,
            model: model.to_record(),
        }
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(format!("not a model file: {e}")))?;
        match value.get("magic").and_then(Value::as_str) {
            Some(MODEL_MAGIC) => {}
            _ => return Err(Error::ModelFormat("missing stancekit magic header".into())),
        }
        match value.get("version").and_then(Value::as_u64) {
            Some(v) if v == u64::from(MODEL_VERSION) => {}
            Some(v) => {
                return Err(Error::ModelFormat(format!(
                    "model version {v} is not supported (expected {MODEL_VERSION})"
                )))
            }
            None => return Err(Error::ModelFormat("missing model version".into())),
        }
        serde_json::from_value(value).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn load(path: &Path) -> anyhow::Result<(Featurizer, StanceModel)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let container = Self::from_json(&text).with_context(|| format!("loading {}", path.display()))?;
        let featurizer = container.featurizer.build()?;
        let model = StanceModel::from_record(container.model)?;
        Ok((featurizer, model))
    }
}

fn load_instances(path: &Path, format: Option<CorpusFormat>, mapping: &FieldMapping, lenient: bool) -> anyhow::Result<Vec<LabeledInstance>> {
    let format = format.unwrap_or_else(|| CorpusFormat::from_path(path));
    let loaded = load_corpus(path, format, mapping, lenient)?;
    for e in &loaded.errors {
        eprintln!("warning: skipped {e}");
    }
    Ok(loaded.instances)
}

/// Rumour / supporting / denying / questioning / total table with a closing total row.
pub fn format_counts(counts: &[RumourCounts]) -> String {
    let mut rows: Vec<[String; 5]> = vec![["rumour", "supporting", "denying", "questioning", "total"].map(String::from)];
    let mut sums = [0usize; 4];
    for c in counts {
        let values = [c.supporting, c.denying, c.questioning, c.total()];
        for (s, v) in sums.iter_mut().zip(values) {
            *s += v;
        }
        rows.push([c.rumour_id.clone(), values[0].to_string(), values[1].to_string(), values[2].to_string(), values[3].to_string()]);
    }
    rows.push([
        "total".to_string(),
        sums[0].to_string(),
        sums[1].to_string(),
        sums[2].to_string(),
        sums[3].to_string(),
    ]);
    let widths: Vec<usize> = (0..5).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &rows {
        let _ = write!(out, "{:<w$}", r[0], w = widths[0]);
        for c in 1..5 {
            let _ = write!(out, "  {:>w$}", r[c], w = widths[c]);
        }
        out.push('\n');
    }
    out
}

pub fn cmd_ingest(args: &IngestArgs) -> anyhow::Result<()> {
    let mut mapping = FieldMapping::default();
    args.fields.apply(&mut mapping);
    let instances = load_instances(&args.corpus, args.format, &mapping, args.lenient)?;
    let counts = summarize(&instances);
    print!("{}", format_counts(&counts));
    let unlabeled: usize = counts.iter().map(|c| c.unlabeled).sum();
    if unlabeled > 0 {
        println!("{unlabeled} unlabeled instances");
    }
    if let Some(out) = &args.write_jsonl {
        let mut text = String::new();
        for inst in &instances {
            text.push_str(&serde_json::to_string(&JsonRecord::from(inst))?);
            text.push('\n');
        }
        std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn build_featurizer(
    mode: FeatureMode,
    sources: &ResourceSources,
    brown_paths: Option<&Path>,
) -> anyhow::Result<(Featurizer, Option<BrownClusterTable>)> {
    let resources = Arc::new(sources.build()?);
    match mode {
        FeatureMode::Brown => {
            let path = brown_paths.ok_or_else(|| anyhow!("Brown features need --brown-paths"))?;
            let table = BrownClusterTable::load(path)?;
            Ok((Featurizer::brown(resources, Arc::new(table.clone())), Some(table)))
        }
        FeatureMode::Bow => Ok((Featurizer::bow(resources, Vocabulary::new()), None)),
    }
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub results: ExperimentResults,
    pub output_dir: PathBuf,
    pub seconds: f64,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.results.skipped_folds.is_empty() {
            0
        } else {
            2
        }
    }
}

#[derive(Serialize)]
struct Report<'a> {
    seed: u64,
    seconds: f64,
    resources: ReportResources,
    #[serde(flatten)]
    results: &'a ExperimentResults,
}

#[derive(Serialize)]
struct ReportResources {
    #[serde(flatten)]
    digests: ResourceDigests,
    brown_sha256: Option<String>,
}

/// Runs the configured grid and writes `results.csv`, `report.json` and
/// `config.toml` (the resolved config) into the output directory.
pub fn execute_run(config: &RunConfig) -> anyhow::Result<RunSummary> {
    let started = Instant::now();
    config.validate()?;
    let instances = load_instances(&config.corpus, config.format, &config.fields, config.lenient)?;
    let sources = ResourceSources::load(config.stopwords.as_deref(), config.emoticons.as_deref())?;
    let (featurizer, table) = build_featurizer(config.features, &sources, config.brown_paths.as_deref())?;
    let plan = config.plan();
    let mut results = run_experiment(&instances, &plan, &config.experiment, &featurizer)?;
    for unit in &results.skipped_folds {
        results
            .warnings
            .push(format!("fold {unit} skipped: fewer than {} instances", plan.resolved_test_offset() + 1));
    }

    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("results.csv"), results.to_csv())?;
    std::fs::write(dir.join("config.toml"), toml::to_string(config)?)?;
    let seconds = started.elapsed().as_secs_f64();
    let report = Report {
        seed: config.seed,
        seconds,
        resources: ReportResources {
            digests: sources.build()?.digests(),
            brown_sha256: table.map(|t| t.digest().to_string()),
        },
        results: &results,
    };
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(RunSummary {
        results,
        output_dir: dir.clone(),
        seconds,
    })
}

/// Runs a config and maps the outcome to an exit code, reporting on stderr.
pub fn cmd_run(config: &RunConfig) -> i32 {
    match execute_run(config) {
        Ok(summary) => {
            for w in &summary.results.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "{} cells in {:.1}s, results in {}",
                summary.results.fold_results.len(),
                summary.seconds,
                summary.output_dir.display()
            );
            summary.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn resolve_run_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply_args(args);
    config.seed = seed_override(config.seed)?;
    Ok(config)
}

pub fn cmd_train(args: &TrainArgs) -> anyhow::Result<()> {
    let variant = args
        .variant
        .gp_variant()
        .ok_or_else(|| anyhow!("{} is not a GP variant; use GP, GPPooled or GPICM", args.variant))?;
    let mut mapping = FieldMapping::default();
    args.fields.apply(&mut mapping);
    let mut instances = load_instances(&args.corpus, args.format, &mapping, args.lenient)?;
    instances.retain(|i| i.label.is_some() && (args.keep_retweets || !i.looks_like_retweet()));
    if instances.is_empty() {
        bail!("no labeled training instances");
    }

    let r = &args.resources;
    let sources = ResourceSources::load(r.stopwords.as_deref(), r.emoticons.as_deref())?;
    let mode = r.features.unwrap_or(FeatureMode::Brown);
    let (mut featurizer, table) = build_featurizer(mode, &sources, r.brown_paths.as_deref())?;
    featurizer.fit(instances.iter().map(|i| i.text.as_str()));

    let train: Vec<StanceExample> = instances
        .iter()
        .map(|i| StanceExample {
            tweet_id: i.tweet_id.clone(),
            rumour_id: i.rumour_id.clone(),
            features: featurizer.encode(&i.text),
            label: i.label,
        })
        .collect();
    let mut cfg = TrainConfig::default();
    cfg.optimizer.seed = seed_override(args.seed)?;
    if let Some(n) = args.max_iters {
        cfg.optimizer.max_iters = n;
    }
    if let Some(n) = args.restarts {
        cfg.optimizer.restarts = n;
    }
    let model = train_stance_model(&train, variant, &args.target, &cfg)?;
    for w in model.warnings() {
        eprintln!("warning: {w}");
    }
    let spec = FeaturizerSpec {
        mode,
        resources: sources,
        brown_paths: table.map(|t| t.serialize()),
        vocabulary: featurizer.vocabulary().cloned().map(Vec::from),
    };
    let container = ModelContainer::new(spec, &model);
    std::fs::write(&args.output, container.to_json()?).with_context(|| format!("writing {}", args.output.display()))?;
    eprintln!("saved {} model for {:?} to {}", variant.name(), args.target, args.output.display());
    Ok(())
}

/// One tweet to classify.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictRow {
    pub tweet_id: String,
    pub text: String,
    pub rumour_id: Option<String>,
}

fn value_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn predict_row(
    get: impl Fn(&str) -> Option<String>,
    mapping: &FieldMapping,
) -> std::result::Result<PredictRow, String> {
    let tweet_id = get(&mapping.tweet_id)
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| format!("missing field {:?}", mapping.tweet_id))?;
    let text = get(&mapping.text).ok_or_else(|| format!("missing field {:?}", mapping.text))?;
    let rumour_id = get(&mapping.rumour_id).filter(|s| !s.trim().is_empty());
    Ok(PredictRow { tweet_id, text, rumour_id })
}

/// Parses prediction input. Malformed rows are errors naming their line,
/// or are collected and skipped when `lenient`.
pub fn parse_predict_input(
    contents: &str,
    path: &Path,
    format: CorpusFormat,
    mapping: &FieldMapping,
    lenient: bool,
) -> crate::Result<(Vec<PredictRow>, Vec<Error>)> {
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut push = |line: usize, row: std::result::Result<PredictRow, String>| -> crate::Result<()> {
        match row {
            Ok(r) => rows.push(r),
            Err(message) => {
                let err = Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message,
                };
                if !lenient {
                    return Err(err);
                }
                errors.push(err);
            }
        }
        Ok(())
    };
    match format {
        CorpusFormat::Jsonl => {
            for (i, line) in contents.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let row = match serde_json::from_str::<Value>(line) {
                    Ok(Value::Object(map)) => predict_row(|k| map.get(k).and_then(value_text), mapping),
                    Ok(_) => Err("expected a JSON object".to_string()),
                    Err(e) => Err(format!("invalid JSON: {e}")),
                };
                push(i + 1, row)?;
            }
        }
        CorpusFormat::Csv => {
            if contents.trim().is_empty() {
                return Ok((rows, errors));
            }
            let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(contents.as_bytes());
            let headers = reader.headers()?.clone();
            for record in reader.records() {
                let (line, row) = match record {
                    Ok(r) => {
                        let line = r.position().map_or(0, |p| p.line() as usize);
                        let row = predict_row(
                            |k| headers.iter().position(|h| h == k).and_then(|i| r.get(i)).map(str::to_string),
                            mapping,
                        );
                        (line, row)
                    }
                    Err(e) => (e.position().map_or(0, |p| p.line() as usize), Err(e.to_string())),
                };
                push(line, row)?;
            }
        }
    }
    Ok((rows, errors))
}

/// `tweet_id,label,p_support,p_deny,p_question` rows; nothing at all for no input.
pub fn predict_rows(featurizer: &Featurizer, model: &StanceModel, rows: &[PredictRow]) -> crate::Result<String> {
    let mut out = String::new();
    if rows.is_empty() {
        return Ok(out);
    }
    out.push_str("tweet_id,label,p_support,p_deny,p_question\n");
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in rows {
        let example = StanceExample {
            tweet_id: row.tweet_id.clone(),
            rumour_id: row.rumour_id.clone().unwrap_or_else(|| model.target_rumour.clone()),
            features: featurizer.encode(&row.text),
            label: None,
        };
        let p = predict_stance(model, &example)?;
        writer.write_record([
            row.tweet_id.clone(),
            p.label.to_string(),
            p.probabilities[0].to_string(),
            p.probabilities[1].to_string(),
            p.probabilities[2].to_string(),
        ])?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

pub fn cmd_predict(args: &PredictArgs) -> anyhow::Result<()> {
    let (featurizer, model) = ModelContainer::load(&args.model)?;
    let mut mapping = FieldMapping::default();
    args.fields.apply(&mut mapping);
    let contents = std::fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let format = args.format.unwrap_or_else(|| CorpusFormat::from_path(&args.input));
    let (rows, errors) = parse_predict_input(&contents, &args.input, format, &mapping, args.lenient)?;
    for e in &errors {
        eprintln!("warning: skipped {e}");
    }
    let out = predict_rows(&featurizer, &model, &rows)?;
    match &args.output {
        Some(path) => std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(out.as_bytes())?,
    }
    Ok(())
}

fn fatal(result: anyhow::Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Dispatches a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    match &cli.command {
        Command::Ingest(args) => fatal(cmd_ingest(args)),
        Command::Run(args) => match resolve_run_config(args) {
            Ok(config) => cmd_run(&config),
            Err(e) => {
                eprintln!("error: {e:#}");
                1
            }
        },
        Command::Train(args) => fatal(cmd_train(args)),
        Command::Predict(args) => fatal(cmd_predict(args)),
    }
}
