//! Command-line front end: `lexicon`, `generate`, `train-cavs`, `audit`, `synth`.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 nothing
//! computable, 4 I/O failure.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cav::{self, Cav, CavConfig, CavRole};
use crate::error::Error;
use crate::lexicon::{self, ChallengeTemplateSet, ConceptSpec, LexiconEntry, LexiconFilter, Pos};
use crate::refmodels::{self, SyntheticSpec};
use crate::stats::{self, SignificanceResult};
use crate::store::{self, EmbeddingStore, SetTag};
use crate::sufficiency::{self, ChallengeProbs, ThresholdCurve};
use crate::tcav::{self, ScoreRecord, TcavScores};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOTHING: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Stream(_) => EXIT_IO,
            _ => EXIT_INVALID,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "conceptaudit", version, about = "Audit text classifiers for concepts falsely learned as sufficient for the positive label")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter an emotion-intensity lexicon by category, intensity and POS.
    Lexicon(LexiconArgs),
    /// Expand a concept or challenge template spec into a texts file.
    Generate(GenerateArgs),
    /// Train concept and random-baseline CAVs from interchange stores.
    TrainCavs(TrainCavsArgs),
    /// Run TCAV and challenge-set measurements across models.
    Audit(AuditArgs),
    /// Write a synthetic planted-direction fixture.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct LexiconArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Comma-separated emotion categories; empty keeps all.
    #[arg(long, value_delimiter = ',', default_value = "disgust,anger")]
    pub categories: Vec<String>,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub min_intensity: f64,
    /// Comma-separated POS tags, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "adjective,verb-past,verb-past-participle")]
    pub pos: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// TOML file with a `[concept]` or `[challenge]` table.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

/// CAV training overrides shared by `train-cavs` and `audit`.
#[derive(Debug, Args, Default, Clone)]
pub struct CavOverrides {
    /// CAVs per concept (and random CAVs) [default: 20]
    #[arg(long)]
    pub p_repeats: Option<usize>,
    /// Concept examples per CAV subsample [default: 50]
    #[arg(long)]
    pub n_concept_sub: Option<usize>,
    /// Random examples per CAV subsample [default: 200]
    #[arg(long)]
    pub n_random_sub: Option<usize>,
    /// Use only the first N concept records
    #[arg(long)]
    pub concept_pool: Option<usize>,
    /// Use only the first N random records
    #[arg(long)]
    pub random_pool: Option<usize>,
    /// Subsampling seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gradient-descent iteration cap [default: 2000]
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Gradient-norm convergence tolerance [default: 1e-7]
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// L2 penalty of the linear separator [default: 0.001]
    #[arg(long)]
    pub l2_penalty: Option<f64>,
    /// Drop concept CAVs whose held-out balanced accuracy is below this [default: 0]
    #[arg(long, allow_negative_numbers = true)]
    pub min_separator_accuracy: Option<f64>,
}

impl CavOverrides {
    fn apply(&self, cfg: &mut CavConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        set!(p_repeats, n_concept_sub, n_random_sub, seed, max_iters, tolerance, l2_penalty, min_separator_accuracy);
        if self.concept_pool.is_some() {
            cfg.concept_pool = self.concept_pool;
        }
        if self.random_pool.is_some() {
            cfg.random_pool = self.random_pool;
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainCavsArgs {
    /// Interchange stores holding `concept` and `random` records (merged).
    #[arg(long = "store", required = true)]
    pub stores: Vec<PathBuf>,
    #[arg(long, default_value = "concept")]
    pub concept: String,
    #[arg(long)]
    pub output: PathBuf,
    /// TOML file with a `[cav]` table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub cav: CavOverrides,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// TOML audit configuration; relative paths resolve against its directory
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report directory [default: audit-report]
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Significance level of the two-sided Welch t-tests [default: 0.05]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Divide alpha by the number of tests per model
    #[arg(long)]
    pub bonferroni: Option<bool>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Concept names to audit [default: concept]
    #[arg(long, value_delimiter = ',')]
    pub concepts: Option<Vec<String>>,
    /// Report formats to write [default: all]
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<ReportFormat>>,
    /// `LABEL=PATH[,PATH...]`; appended after the config's models.
    #[arg(long = "model")]
    pub models: Vec<String>,
    #[command(flatten)]
    pub cav: CavOverrides,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file with `SyntheticSpec` fields (top level or under `[synth]`).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub concept_strength: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub context_strength: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub noise_sd: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub concept_signal: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub context_signal: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub bias: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Jsonl,
    Txt,
    Csv,
    Svg,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Lexicon(a) => cmd_lexicon(&a).map(|n| eprintln!("kept {n} lexicon words")),
        Command::Generate(a) => cmd_generate(&a).map(|n| eprintln!("wrote {n} texts")),
        Command::TrainCavs(a) => cmd_train_cavs(&a),
        Command::Audit(a) => {
            let outcome = cmd_audit(&a)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("report written to {}", outcome.output_dir.display());
            Ok(())
        }
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn require_exists(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::invalid(format!("input path {} does not exist", path.display())))
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    require_exists(path)?;
    fs::read_to_string(path).map_err(|e| Error::io(path, e).into())
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(file))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    let mut out = create(path)?;
    out.write_all(contents.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e).into())
}

fn parse_pos_list(items: &[String]) -> CliResult<BTreeSet<Pos>> {
    if items.iter().any(|p| p == "all") {
        return Ok(Pos::ALL.into_iter().collect());
    }
    items
        .iter()
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<Pos>().map_err(CliError::invalid))
        .collect()
}

fn load_lexicon(path: &Path) -> CliResult<Vec<LexiconEntry>> {
    require_exists(path)?;
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    lexicon::parse_lexicon(BufReader::new(file)).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// Returns how many entries were written.
pub fn cmd_lexicon(args: &LexiconArgs) -> CliResult<usize> {
    let entries = load_lexicon(&args.input)?;
    let filter = LexiconFilter {
        categories: args.categories.iter().filter(|c| !c.is_empty()).cloned().collect(),
        min_intensity: args.min_intensity,
        allowed_pos: parse_pos_list(&args.pos)?,
    };
    let kept = filter.apply(&entries)?;
    let mut out = create(&args.output)?;
    lexicon::write_lexicon(&kept, &mut out).map_err(|e| io_at(&args.output, e))?;
    Ok(kept.len())
}

fn io_at(path: &Path, e: Error) -> CliError {
    match e {
        Error::Stream(source) => Error::io(path, source).into(),
        other => other.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateFile {
    concept: Option<ConceptFile>,
    challenge: Option<ChallengeTemplateSet>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConceptFile {
    name: String,
    templates: Vec<String>,
    /// Defaults to the protected groups.
    #[serde(default = "protected_groups")]
    groups: Vec<String>,
    /// Lexicon path, relative to the spec file.
    lexicon: Option<PathBuf>,
    #[serde(default)]
    filter: Option<LexiconFilter>,
    /// Literal words, used in addition to the lexicon.
    #[serde(default)]
    words: Vec<String>,
}

fn protected_groups() -> Vec<String> {
    lexicon::PROTECTED_GROUPS.iter().map(|g| g.to_string()).collect()
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn base_dir(file: &Path) -> PathBuf {
    file.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn concept_spec_from_file(file: ConceptFile, base: &Path) -> CliResult<ConceptSpec> {
    let mut words = Vec::new();
    if let Some(lex) = &file.lexicon {
        let entries = load_lexicon(&resolve(base, lex))?;
        words = file.filter.unwrap_or_default().apply(&entries)?;
    }
    for w in &file.words {
        words.push(LexiconEntry::new(w.clone(), file.name.clone(), 1.0, Pos::Other)?);
    }
    Ok(ConceptSpec {
        name: file.name,
        templates: file.templates,
        groups: file.groups,
        words,
    })
}

/// Writes `text<TAB>set_tag` lines and returns how many.
pub fn cmd_generate(args: &GenerateArgs) -> CliResult<usize> {
    let raw = read_text(&args.spec)?;
    let file: GenerateFile =
        toml::from_str(&raw).map_err(|e| CliError::invalid(format!("{}: {e}", args.spec.display())))?;
    let lines: Vec<(String, SetTag)> = match (file.concept, file.challenge) {
        (Some(c), None) => {
            let spec = concept_spec_from_file(c, &base_dir(&args.spec))?;
            lexicon::expand_concept(&spec)?
                .into_iter()
                .map(|t| (t, SetTag::Concept))
                .collect()
        }
        (None, Some(ch)) => ch
            .expand()?
            .into_iter()
            .map(|t| {
                let tag = if t.abusive { SetTag::ChallengePos } else { SetTag::ChallengeNeg };
                (t.text, tag)
            })
            .collect(),
        _ => {
            return Err(CliError::invalid(format!(
                "{} must contain exactly one of [concept] or [challenge]",
                args.spec.display()
            )))
        }
    };
    let mut body = String::new();
    for (text, tag) in &lines {
        let _ = writeln!(body, "{text}\t{tag}");
    }
    write_file(&args.output, &body)?;
    Ok(lines.len())
}

fn load_stores(paths: &[PathBuf]) -> CliResult<EmbeddingStore> {
    let mut stores = Vec::new();
    for p in paths {
        require_exists(p)?;
        let s = store::read_store_file(p).map_err(|e| match e {
            Error::Io { .. } => CliError::from(e),
            other => CliError::invalid(format!("{}: {other}", p.display())),
        })?;
        stores.push(s);
    }
    Ok(EmbeddingStore::merge(&stores)?)
}

#[derive(Debug, Default, Deserialize)]
struct CavFile {
    #[serde(default)]
    cav: CavConfig,
}

pub fn cmd_train_cavs(args: &TrainCavsArgs) -> CliResult<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            let raw = read_text(p)?;
            toml::from_str::<CavFile>(&raw)
                .map_err(|e| CliError::invalid(format!("{}: {e}", p.display())))?
                .cav
        }
        None => CavConfig::default(),
    };
    args.cav.apply(&mut cfg);
    cfg.validate()?;
    let store = load_stores(&args.stores)?;
    let concept = store.embeddings(SetTag::Concept);
    let random = store.embeddings(SetTag::Random);
    let set = cav::train_cav_set(&args.concept, &concept, &random, &cfg)?;
    let baseline = cav::train_random_cav_set(&random, &cfg)?;
    let mut all = set.cavs;
    all.extend(baseline);
    let mut out = create(&args.output)?;
    cav::write_cavs(&all, &cfg, &mut out).map_err(|e| io_at(&args.output, e))?;
    eprintln!(
        "wrote {} concept and {} random CAVs ({} dropped below min_separator_accuracy)",
        all.len() - cfg.p_repeats,
        cfg.p_repeats,
        set.dropped
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub label: String,
    /// Stores shared by every concept (typically `random` and `input` records).
    #[serde(default)]
    pub stores: Vec<PathBuf>,
    /// Per-concept stores (`concept` and challenge records).
    #[serde(default)]
    pub concept_stores: BTreeMap<String, PathBuf>,
    /// Precomputed CAV files per concept; training is skipped when present.
    #[serde(default)]
    pub cav_files: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Execution only, like `threads`: reports stay identical wherever written.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub alpha: f64,
    /// Divide `alpha` by the number of t-tests run per model.
    pub bonferroni: bool,
    /// Execution only; never written into reports.
    #[serde(skip_serializing)]
    pub threads: usize,
    pub concepts: Vec<String>,
    pub formats: BTreeSet<ReportFormat>,
    pub cav: CavConfig,
    pub models: Vec<ModelConfig>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            output_dir: PathBuf::from("audit-report"),
            alpha: stats::DEFAULT_ALPHA,
            bonferroni: false,
            threads: 0,
            concepts: vec!["concept".into()],
            formats: [ReportFormat::Jsonl, ReportFormat::Txt, ReportFormat::Csv, ReportFormat::Svg]
                .into_iter()
                .collect(),
            cav: CavConfig::default(),
            models: Vec::new(),
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> CliResult<()> {
        self.cav.validate()?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(CliError::invalid(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if self.models.is_empty() {
            return Err(CliError::invalid("no models configured"));
        }
        if self.concepts.is_empty() {
            return Err(CliError::invalid("no concepts configured"));
        }
        let mut labels = BTreeSet::new();
        for m in &self.models {
            if !labels.insert(m.label.as_str()) {
                return Err(CliError::invalid(format!("duplicate model label `{}`", m.label)));
            }
            for p in m.stores.iter().chain(m.concept_stores.values()).chain(m.cav_files.values()) {
                require_exists(p)?;
            }
            for c in m.concept_stores.keys().chain(m.cav_files.keys()) {
                if !self.concepts.contains(c) {
                    return Err(CliError::invalid(format!(
                        "model `{}` references unknown concept `{c}`",
                        m.label
                    )));
                }
            }
        }
        let mut seen = BTreeSet::new();
        if let Some(c) = self.concepts.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(CliError::invalid(format!("duplicate concept `{c}`")));
        }
        Ok(())
    }

    fn tests_per_model(&self) -> usize {
        2 * self.concepts.len()
    }

    /// Per-test alpha after the optional Bonferroni division.
    pub fn effective_alpha(&self) -> f64 {
        if self.bonferroni {
            self.alpha / self.tests_per_model() as f64
        } else {
            self.alpha
        }
    }
}

/// Loads the config file (paths resolved against its directory) and
/// applies command-line overrides.
pub fn resolve_audit_config(args: &AuditArgs) -> CliResult<AuditConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let raw = read_text(path)?;
            let mut cfg: AuditConfig =
                toml::from_str(&raw).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
            let base = base_dir(path);
            for m in &mut cfg.models {
                for p in &mut m.stores {
                    *p = resolve(&base, p);
                }
                for p in m.concept_stores.values_mut().chain(m.cav_files.values_mut()) {
                    *p = resolve(&base, p);
                }
            }
            cfg.output_dir = resolve(&base, &cfg.output_dir);
            cfg
        }
        None => AuditConfig::default(),
    };
    if let Some(v) = &args.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.bonferroni {
        cfg.bonferroni = v;
    }
    if let Some(v) = args.threads {
        cfg.threads = v;
    }
    if let Some(v) = &args.concepts {
        cfg.concepts = v.clone();
    }
    if let Some(v) = &args.formats {
        cfg.formats = v.iter().copied().collect();
    }
    for spec in &args.models {
        let (label, paths) = spec
            .split_once('=')
            .ok_or_else(|| CliError::invalid(format!("--model expects LABEL=PATH[,PATH...], got `{spec}`")))?;
        cfg.models.push(ModelConfig {
            label: label.to_string(),
            stores: paths.split(',').filter(|p| !p.is_empty()).map(PathBuf::from).collect(),
            concept_stores: BTreeMap::new(),
            cav_files: BTreeMap::new(),
        });
    }
    args.cav.apply(&mut cfg.cav);
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TcavBlock {
    pub p_concept: usize,
    pub p_random: usize,
    pub dropped: usize,
    pub dir: SignificanceResult,
    pub mag: SignificanceResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChallengeBlock {
    pub auc: f64,
    pub false_suff: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub model: String,
    pub concept: String,
    pub tcav: Option<TcavBlock>,
    pub scores: Vec<ScoreRecord>,
    pub challenge: Option<(ChallengeBlock, ThresholdCurve)>,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct AuditOutcome {
    pub config: AuditConfig,
    pub cells: Vec<CellResult>,
    pub warnings: Vec<String>,
    pub output_dir: PathBuf,
}

pub fn cmd_audit(args: &AuditArgs) -> CliResult<AuditOutcome> {
    let cfg = resolve_audit_config(args)?;
    run_audit(cfg)
}

/// Runs the audit described by `cfg` and writes the report bundle.
pub fn run_audit(cfg: AuditConfig) -> CliResult<AuditOutcome> {
    cfg.validate()?;
    let cells = with_threads(cfg.threads, || compute_cells(&cfg))??;
    let warnings: Vec<String> = cells
        .iter()
        .flat_map(|c| c.warnings.iter().map(move |w| format!("{}/{}: {w}", c.model, c.concept)))
        .collect();
    if cells.iter().all(|c| c.tcav.is_none() && c.challenge.is_none()) {
        return Err(CliError {
            code: EXIT_NOTHING,
            message: format!("nothing computable: {}", warnings.join("; ")),
        });
    }
    write_reports(&cfg, &cells)?;
    Ok(AuditOutcome {
        output_dir: cfg.output_dir.clone(),
        config: cfg,
        cells,
        warnings,
    })
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::invalid(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T>(_threads: usize, f: impl FnOnce() -> T) -> CliResult<T> {
    Ok(f())
}

fn compute_cells(cfg: &AuditConfig) -> CliResult<Vec<CellResult>> {
    let mut cells = Vec::new();
    for model in &cfg.models {
        let base = load_stores(&model.stores)?;
        for concept in &cfg.concepts {
            let store = match model.concept_stores.get(concept) {
                Some(p) => EmbeddingStore::merge(&[base.clone(), load_stores(std::slice::from_ref(p))?])?,
                None => base.clone(),
            };
            let cavs = match model.cav_files.get(concept) {
                Some(p) => {
                    let file = fs::File::open(p).map_err(|e| Error::io(p, e))?;
                    Some(cav::read_cavs(BufReader::new(file))?)
                }
                None => None,
            };
            cells.push(audit_cell(cfg, &model.label, concept, &store, cavs));
        }
    }
    Ok(cells)
}

fn audit_cell(cfg: &AuditConfig, model: &str, concept: &str, store: &EmbeddingStore, cavs: Option<Vec<Cav>>) -> CellResult {
    let mut cell = CellResult {
        model: model.to_string(),
        concept: concept.to_string(),
        tcav: None,
        scores: Vec::new(),
        challenge: None,
        warnings: Vec::new(),
    };
    match tcav_block(cfg, concept, store, cavs) {
        Ok((block, scores)) => {
            cell.tcav = Some(block);
            cell.scores = scores;
        }
        Err(w) => cell.warnings.push(format!("TCAV skipped: {w}")),
    }
    let has_challenge = store.count(SetTag::ChallengePos) > 0 || store.count(SetTag::ChallengeNeg) > 0;
    if has_challenge {
        match ChallengeProbs::from_store(store) {
            Ok(probs) => {
                let curve = sufficiency::threshold_curve(&probs);
                if !probs.balanced {
                    cell.warnings.push(format!(
                        "challenge set is unbalanced ({} positive, {} negative)",
                        probs.pos_probs.len(),
                        probs.neg_probs.len()
                    ));
                }
                let block = ChallengeBlock {
                    auc: curve.auc,
                    false_suff: curve.false_suff,
                    n_pos: probs.pos_probs.len(),
                    n_neg: probs.neg_probs.len(),
                    balanced: probs.balanced,
                };
                cell.challenge = Some((block, curve));
            }
            Err(e) => cell.warnings.push(format!("challenge block skipped: {e}")),
        }
    } else {
        cell.warnings.push("challenge block skipped: no challenge_pos/challenge_neg records".into());
    }
    cell
}

fn tcav_block(
    cfg: &AuditConfig,
    concept: &str,
    store: &EmbeddingStore,
    cavs: Option<Vec<Cav>>,
) -> Result<(TcavBlock, Vec<ScoreRecord>), String> {
    let inputs = store.select(SetTag::Input);
    if inputs.is_empty() {
        return Err("no input records".into());
    }
    if let Some(r) = inputs.iter().find(|r| r.gradient.is_none()) {
        return Err(format!("input record `{}` has no gradient", r.id));
    }
    let (concept_cavs, random_cavs, dropped) = match cavs {
        Some(all) => {
            let (c, r): (Vec<Cav>, Vec<Cav>) = all.into_iter().partition(|c| c.role == CavRole::Concept);
            let c: Vec<Cav> = c.into_iter().filter(|c| c.concept == concept).collect();
            (c, r, 0)
        }
        None => {
            let concept_embs = store.embeddings(SetTag::Concept);
            let random_embs = store.embeddings(SetTag::Random);
            let set = cav::train_cav_set(concept, &concept_embs, &random_embs, &cfg.cav).map_err(|e| e.to_string())?;
            let random = cav::train_random_cav_set(&random_embs, &cfg.cav).map_err(|e| e.to_string())?;
            (set.cavs, random, set.dropped)
        }
    };
    if concept_cavs.len() < 2 || random_cavs.len() < 2 {
        return Err(format!(
            "need at least 2 concept and 2 random CAVs, have {} and {}",
            concept_cavs.len(),
            random_cavs.len()
        ));
    }
    let c: TcavScores = tcav::score_concept(&concept_cavs, &inputs).map_err(|e| e.to_string())?;
    let r: TcavScores = tcav::score_concept(&random_cavs, &inputs).map_err(|e| e.to_string())?;
    let alpha = cfg.effective_alpha();
    let dir = stats::welch_t_test(&c.dir_scores, &r.dir_scores, alpha).map_err(|e| e.to_string())?;
    let mag = stats::welch_t_test(&c.mag_scores, &r.mag_scores, alpha).map_err(|e| e.to_string())?;
    let mut scores = c.records(concept, CavRole::Concept);
    scores.extend(r.records(concept, CavRole::Random));
    Ok((
        TcavBlock {
            p_concept: c.len(),
            p_random: r.len(),
            dropped,
            dir,
            mag,
        },
        scores,
    ))
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ReportLine<'a> {
    Config {
        tool: &'static str,
        version: &'static str,
        effective_alpha: f64,
        config: &'a AuditConfig,
    },
    Tcav {
        model: &'a str,
        concept: &'a str,
        #[serde(flatten)]
        block: &'a TcavBlock,
    },
    Score {
        model: &'a str,
        #[serde(flatten)]
        score: &'a ScoreRecord,
    },
    FalseSuff {
        model: &'a str,
        concept: &'a str,
        #[serde(flatten)]
        block: &'a ChallengeBlock,
    },
    Ranking {
        concept: &'a str,
        by_tcav_mag: Vec<&'a str>,
        by_false_suff: Vec<&'a str>,
    },
    Warning {
        model: &'a str,
        concept: &'a str,
        message: &'a str,
    },
}

/// Model labels ordered by descending score; ties keep config order.
fn rank<'a>(cells: &[&'a CellResult], key: impl Fn(&CellResult) -> Option<f64>) -> Vec<&'a str> {
    let mut scored: Vec<(&str, f64)> = cells
        .iter()
        .filter_map(|c| key(c).map(|k| (c.model.as_str(), k)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored.into_iter().map(|(m, _)| m).collect()
}

pub fn report_jsonl(cfg: &AuditConfig, cells: &[CellResult]) -> CliResult<String> {
    let mut lines = vec![ReportLine::Config {
        tool: "conceptaudit",
        version: env!("CARGO_PKG_VERSION"),
        effective_alpha: cfg.effective_alpha(),
        config: cfg,
    }];
    for cell in cells {
        if let Some(block) = &cell.tcav {
            lines.push(ReportLine::Tcav {
                model: &cell.model,
                concept: &cell.concept,
                block,
            });
            lines.extend(cell.scores.iter().map(|score| ReportLine::Score {
                model: &cell.model,
                score,
            }));
        }
        if let Some((block, _)) = &cell.challenge {
            lines.push(ReportLine::FalseSuff {
                model: &cell.model,
                concept: &cell.concept,
                block,
            });
        }
        lines.extend(cell.warnings.iter().map(|w| ReportLine::Warning {
            model: &cell.model,
            concept: &cell.concept,
            message: w,
        }));
    }
    for concept in &cfg.concepts {
        let of: Vec<&CellResult> = cells.iter().filter(|c| &c.concept == concept).collect();
        lines.push(ReportLine::Ranking {
            concept,
            by_tcav_mag: rank(&of, |c| c.tcav.as_ref().map(|t| t.mag.mean_concept)),
            by_false_suff: rank(&of, |c| c.challenge.as_ref().map(|(b, _)| b.false_suff)),
        });
    }
    let mut out = String::new();
    for line in &lines {
        out.push_str(&store::to_json(line, "report").map_err(CliError::from)?);
        out.push('\n');
    }
    Ok(out)
}

fn mean_sd(mean: f64, sd: f64) -> String {
    format!("{mean:.2}({sd:.2})")
}

pub fn report_text(cfg: &AuditConfig, cells: &[CellResult]) -> String {
    let mut out = String::new();
    let width = cfg.models.iter().map(|m| m.label.len()).max().unwrap_or(5).max(10);
    let _ = writeln!(out, "conceptaudit {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(
        out,
        "P = {}, N_c = {}, N_r = {}, seed = {}, two-sided Welch t-test, alpha = {}{}",
        cfg.cav.p_repeats,
        cfg.cav.n_concept_sub,
        cfg.cav.n_random_sub,
        cfg.cav.seed,
        cfg.alpha,
        if cfg.bonferroni {
            format!(" (Bonferroni: {} per test)", cfg.effective_alpha())
        } else {
            String::new()
        }
    );
    let _ = writeln!(out, "Scores are mean(sd) over CAVs; * marks p < alpha against random CAVs.");
    for concept in &cfg.concepts {
        let of: Vec<&CellResult> = cells.iter().filter(|c| &c.concept == concept).collect();
        let _ = writeln!(out, "\n== {concept} ==");
        if of.iter().any(|c| c.tcav.is_some()) {
            let _ = writeln!(
                out,
                "{:<width$}  {:>12} {:>12} {:>1}  {:>12} {:>12} {:>1}",
                "model", "dir", "dir random", "", "mag", "mag random", ""
            );
            for c in &of {
                match &c.tcav {
                    Some(t) => {
                        let star = |s: &SignificanceResult| if s.significant { "*" } else { " " };
                        let _ = writeln!(
                            out,
                            "{:<width$}  {:>12} {:>12} {}  {:>12} {:>12} {}",
                            c.model,
                            mean_sd(t.dir.mean_concept, t.dir.sd_concept),
                            mean_sd(t.dir.mean_random, t.dir.sd_random),
                            star(&t.dir),
                            mean_sd(t.mag.mean_concept, t.mag.sd_concept),
                            mean_sd(t.mag.mean_random, t.mag.sd_random),
                            star(&t.mag),
                        );
                    }
                    None => {
                        let _ = writeln!(out, "{:<width$}  (no TCAV scores)", c.model);
                    }
                }
            }
        }
        if of.iter().any(|c| c.challenge.is_some()) {
            let _ = writeln!(out, "\n{:<width$}  {:>10} {:>8} {:>6} {:>6}", "model", "False_Suff", "AUC", "n_pos", "n_neg");
            let mut rows: Vec<_> = of.iter().filter_map(|c| c.challenge.as_ref().map(|(b, _)| (c, b))).collect();
            rows.sort_by(|a, b| b.1.false_suff.total_cmp(&a.1.false_suff));
            for (c, b) in rows {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>10.2} {:>8.3} {:>6} {:>6}{}",
                    c.model,
                    b.false_suff,
                    b.auc,
                    b.n_pos,
                    b.n_neg,
                    if b.balanced { "" } else { "  (unbalanced)" }
                );
            }
        }
    }
    if cfg.concepts.len() > 1 && cells.iter().any(|c| c.challenge.is_some()) {
        let _ = writeln!(out, "\n== False_Suff by concept ==");
        let _ = write!(out, "{:<width$}", "model");
        for concept in &cfg.concepts {
            let _ = write!(out, "  {concept:>10}");
        }
        out.push('\n');
        for m in &cfg.models {
            let _ = write!(out, "{:<width$}", m.label);
            for concept in &cfg.concepts {
                let v = cells
                    .iter()
                    .find(|c| c.model == m.label && &c.concept == concept)
                    .and_then(|c| c.challenge.as_ref())
                    .map_or("-".to_string(), |(b, _)| format!("{:.2}", b.false_suff));
                let _ = write!(out, "  {v:>10}");
            }
            out.push('\n');
        }
    }
    let warnings: Vec<_> = cells.iter().flat_map(|c| c.warnings.iter().map(move |w| (c, w))).collect();
    if !warnings.is_empty() {
        let _ = writeln!(out, "\nwarnings:");
        for (c, w) in warnings {
            let _ = writeln!(out, "  {}/{}: {w}", c.model, c.concept);
        }
    }
    out.lines().map(|l| l.trim_end().to_string() + "\n").collect()
}

/// File-name-safe form of a concept name.
fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn write_reports(cfg: &AuditConfig, cells: &[CellResult]) -> CliResult<()> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if cfg.formats.contains(&ReportFormat::Jsonl) {
        write_file(&dir.join("report.jsonl"), &report_jsonl(cfg, cells)?)?;
    }
    if cfg.formats.contains(&ReportFormat::Txt) {
        write_file(&dir.join("report.txt"), &report_text(cfg, cells))?;
    }
    for concept in &cfg.concepts {
        let curves: Vec<(String, ThresholdCurve)> = cells
            .iter()
            .filter(|c| &c.concept == concept)
            .filter_map(|c| c.challenge.as_ref().map(|(_, curve)| (c.model.clone(), curve.clone())))
            .collect();
        if curves.is_empty() {
            continue;
        }
        if cfg.formats.contains(&ReportFormat::Csv) {
            let mut csv = String::from("model,t_start,t_end,accuracy\n");
            for (model, curve) in &curves {
                for (s, e, a) in curve.segments() {
                    let _ = writeln!(csv, "{model},{s},{e},{a}");
                }
            }
            write_file(&dir.join(format!("curves_{}.csv", slug(concept))), &csv)?;
        }
        if cfg.formats.contains(&ReportFormat::Svg) {
            let svg = sufficiency::curves_svg(concept, &curves);
            write_file(&dir.join(format!("curves_{}.svg", slug(concept))), &svg)?;
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct SynthFile {
    synth: Option<SyntheticSpec>,
    #[serde(flatten)]
    top: SyntheticSpec,
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let mut spec = match &args.spec {
        Some(p) => {
            let raw = read_text(p)?;
            let file: SynthFile =
                toml::from_str(&raw).map_err(|e| CliError::invalid(format!("{}: {e}", p.display())))?;
            file.synth.unwrap_or(file.top)
        }
        None => SyntheticSpec::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { spec.$f = v; } )* };
    }
    set!(dim, concept_strength, context_strength, noise_sd, concept_signal, context_signal, bias, seed);
    let data = refmodels::generate_synthetic(&spec)?;
    let dir = &args.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let store_path = dir.join("store.jsonl");
    let mut out = create(&store_path)?;
    store::write_store(&data.store, &mut out).map_err(|e| io_at(&store_path, e))?;
    let mut texts = String::new();
    for (text, abusive) in &data.challenge_texts {
        let tag = if *abusive { SetTag::ChallengePos } else { SetTag::ChallengeNeg };
        let _ = writeln!(texts, "{text}\t{tag}");
    }
    write_file(&dir.join("challenge.tsv"), &texts)?;
    #[derive(Serialize)]
    struct HeadFile<'a> {
        spec: &'a SyntheticSpec,
        head: &'a refmodels::LinearHead,
        concept_direction: &'a [f64],
        context_direction: &'a [f64],
    }
    let head = HeadFile {
        spec: &spec,
        head: &data.head,
        concept_direction: &data.concept_direction,
        context_direction: &data.context_direction,
    };
    let json = serde_json::to_string_pretty(&head).map_err(|e| CliError::invalid(e.to_string()))?;
    write_file(&dir.join("head.json"), &(json + "\n"))?;
    eprintln!("wrote {} records to {}", data.store.len(), store_path.display());
    Ok(())
}
