//! Pipeline commands behind the `fairprobe` binary.
//!
//! Stages talk to each other only through files in the output directory:
//! `plan.jsonl` → `records.jsonl` → `labeled.jsonl` → `report.json`,
//! `report.md` and `report_csv/` (plus `scores.csv`, `comparison.json` and
//! `embeddings.txt` for hobby plans).

pub mod config;

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use fairprobe::backend::{
    run_plan, Backend, BackendError, CachedBackend, HttpBackend, MockBackend, MockProfile,
    ReplayCache, RunError, RunOptions, RunSummary, TrialRecord,
};
use fairprobe::categorize::{label_trials, LabelError, LabelSummary, LabeledRecord, NameTable};
use fairprobe::data::{self, DataError};
use fairprobe::experiment::{build_plan, PlanError, PlanInputs, PlanOptions, TrialSpec};
use fairprobe::jsonl::{self, JsonlError, LineWriter};
use fairprobe::polarity::{
    compare_groups, load_embeddings, score_records, train_skipgram, word_frequencies, write_scores,
    EmbeddingError, GenderAxis,
};
use fairprobe::report::{
    build_report, emit, AuditReport, PolaritySection, ReportError, ReportFormat,
};
use fairprobe::text::{words, StopWords};
use fairprobe::ExperimentKind;
use thiserror::Error;

pub use config::{AuditConfig, BackendKind, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::FileNotFound(_) => 3,
            CliError::Data(_) | CliError::Plan(_) | CliError::Jsonl(_) => 4,
            CliError::Backend(_) | CliError::Run(_) => 5,
            CliError::Label(_) | CliError::Report(_) | CliError::Embedding(_) => 6,
            CliError::Io { .. } => 7,
        }
    }
}

/// Artifact locations inside an output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub plan: PathBuf,
    pub records: PathBuf,
    pub labeled: PathBuf,
    pub report_json: PathBuf,
    pub report_md: PathBuf,
    pub report_csv: PathBuf,
    pub scores: PathBuf,
    pub comparison: PathBuf,
    pub embeddings: PathBuf,
}

impl OutputPaths {
    pub fn new(dir: &Path) -> Self {
        Self {
            plan: dir.join("plan.jsonl"),
            records: dir.join("records.jsonl"),
            labeled: dir.join("labeled.jsonl"),
            report_json: dir.join("report.json"),
            report_md: dir.join("report.md"),
            report_csv: dir.join("report_csv"),
            scores: dir.join("scores.csv"),
            comparison: dir.join("comparison.json"),
            embeddings: dir.join("embeddings.txt"),
        }
    }
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::FileNotFound(path.to_path_buf()))
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    require(path)?;
    Ok(jsonl::read(path)?)
}

fn names(cfg: &AuditConfig) -> Result<NameTable, CliError> {
    Ok(match &cfg.data.names {
        Some(p) => NameTable::from_entries(&data::load_names(p)?),
        None => NameTable::default(),
    })
}

fn stopwords(cfg: &AuditConfig) -> Result<StopWords, CliError> {
    Ok(match &cfg.data.stopwords {
        Some(p) => data::load_stopwords(p)?,
        None => data::default_stopwords(),
    })
}

fn reference(cfg: &AuditConfig) -> Result<fairprobe::report::ReferenceStats, CliError> {
    let mut r = match &cfg.data.reference_stats {
        Some(p) => data::load_reference_stats(p)?,
        None => data::default_reference_stats(),
    };
    if let Some(label) = &cfg.reference_label {
        r.source_label = label.clone();
    }
    Ok(r)
}

fn plan_inputs(cfg: &AuditConfig) -> Result<PlanInputs, CliError> {
    let d = &cfg.data;
    Ok(match cfg.kind {
        ExperimentKind::IndependenceOccupation => PlanInputs::Occupation(match &d.professions {
            Some(p) => data::load_professions(p)?,
            None => data::default_professions(),
        }),
        ExperimentKind::IndependenceHobby => PlanInputs::Hobby(match &d.names {
            Some(p) => data::load_names(p)?,
            None => data::default_names(),
        }),
        ExperimentKind::SepSufMedical => PlanInputs::Medical(match &d.questions {
            Some(p) => data::load_questions(p)?,
            None => data::default_questions(),
        }),
        ExperimentKind::SepSufSector => PlanInputs::Sector(match &d.sector_prompts {
            Some(p) => data::load_sector_prompts(p)?,
            None => data::default_sector_prompts(),
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanOutcome {
    pub path: PathBuf,
    pub plan_id: String,
    pub trials: usize,
}

/// Expands the configured experiment into `plan.jsonl`.
pub fn cmd_plan(cfg: &AuditConfig) -> Result<PlanOutcome, CliError> {
    let options = PlanOptions {
        replicates: cfg.replicates,
        cycle_wrong_options: cfg.cycle_wrong_options,
        control_replicates: cfg.control_replicates,
    };
    let plan = build_plan(&plan_inputs(cfg)?, &options)?;
    let path = OutputPaths::new(&cfg.out_dir).plan;
    jsonl::write(&path, &plan.specs).map_err(|e| CliError::io(&path, e))?;
    Ok(PlanOutcome {
        path,
        plan_id: plan.plan_id,
        trials: plan.specs.len(),
    })
}

/// The backend selected by the configuration, wrapped in the replay cache
/// when one is configured.
pub fn build_backend(cfg: &AuditConfig) -> Result<Box<dyn Backend>, CliError> {
    let inner: Box<dyn Backend> = match cfg.backend {
        BackendKind::Replay => {
            let dir = cfg.cache_dir.as_ref().ok_or_else(|| {
                CliError::Config("the replay backend needs backend.cache_dir".into())
            })?;
            return Ok(Box::new(CachedBackend::replay_only(ReplayCache::new(dir))));
        }
        BackendKind::Http => Box::new(HttpBackend::from_env(&cfg.http)?),
        BackendKind::Mock => {
            let mut profile = match &cfg.mock_profile {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                    serde_json::from_str::<MockProfile>(&text).map_err(|e| {
                        CliError::Config(format!("mock profile {}: {e}", path.display()))
                    })?
                }
                None => MockProfile::default(),
            };
            if let Some(seed) = cfg.seed {
                profile.rng_seed = seed;
            }
            Box::new(MockBackend::new(profile).map_err(|e| CliError::Config(e.to_string()))?)
        }
    };
    Ok(match &cfg.cache_dir {
        Some(dir) => Box::new(CachedBackend::record(inner, ReplayCache::new(dir))),
        None => inner,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    Preview { shown: usize },
    Completed { path: PathBuf, summary: RunSummary },
}

/// Runs a plan file into `records.jsonl`, or with `dry_run = Some(n)` prints
/// the first `n` rendered prompts to `out` without contacting any backend.
pub fn cmd_run(
    cfg: &AuditConfig,
    plan_path: &Path,
    dry_run: Option<usize>,
    out: &mut dyn Write,
) -> Result<RunOutcome, CliError> {
    let specs: Vec<TrialSpec> = read_jsonl(plan_path)?;
    if let Some(n) = dry_run {
        let shown = specs.len().min(n);
        for spec in &specs[..shown] {
            let prompt = spec
                .render()
                .map_err(|e| CliError::Plan(PlanError::Render(e)))?;
            writeln!(out, "--- {} ({})\n{prompt}\n", spec.trial_id, spec.item_id)
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
        }
        return Ok(RunOutcome::Preview { shown });
    }
    let backend = build_backend(cfg)?;
    let path = OutputPaths::new(&cfg.out_dir).records;
    let mut writer = LineWriter::create(&path).map_err(|e| CliError::io(&path, e))?;
    let opts = RunOptions {
        parallelism: cfg.parallelism,
        retry: cfg.retry,
    };
    let summary = run_plan(
        &specs,
        &cfg.params,
        backend.as_ref(),
        &opts,
        &mut |r: &TrialRecord| writer.push(r),
    )?;
    Ok(RunOutcome::Completed { path, summary })
}

/// Categorizes `records.jsonl` into `labeled.jsonl`.
pub fn cmd_label(
    cfg: &AuditConfig,
    records_path: &Path,
) -> Result<(PathBuf, LabelSummary), CliError> {
    let records: Vec<TrialRecord> = read_jsonl(records_path)?;
    let (labeled, summary) = label_trials(records, &names(cfg)?)?;
    let path = OutputPaths::new(&cfg.out_dir).labeled;
    jsonl::write(&path, &labeled).map_err(|e| CliError::io(&path, e))?;
    Ok((path, summary))
}

fn polarity_section(
    cfg: &AuditConfig,
    labeled: &[LabeledRecord],
    paths: &OutputPaths,
    written: &mut Vec<PathBuf>,
) -> Result<PolaritySection, CliError> {
    let stop = stopwords(cfg)?;
    let space = match &cfg.data.embeddings {
        Some(p) => load_embeddings(p)?,
        None => {
            // Trained on unfiltered tokens so the anchor pronouns stay in.
            let corpus: Vec<Vec<String>> = labeled
                .iter()
                .filter_map(|r| r.record.response_text.as_deref())
                .map(words)
                .collect();
            let space = train_skipgram(&corpus, &cfg.skipgram)?;
            space.save(&paths.embeddings)?;
            written.push(paths.embeddings.clone());
            space
        }
    };
    let axis = GenderAxis::from_space(&space, "she", "he")?;
    let (scores, excluded) = score_records(labeled, &axis, &space, &stop)?;
    write_scores(&paths.scores, &scores).map_err(|e| CliError::io(&paths.scores, e))?;
    written.push(paths.scores.clone());

    let (comparison, comparison_error) = match compare_groups(&scores) {
        Ok(c) => {
            let mut bytes = serde_json::to_vec_pretty(&c).expect("comparison serializes");
            bytes.push(b'\n');
            jsonl::write_atomic(&paths.comparison, &bytes)
                .map_err(|e| CliError::io(&paths.comparison, e))?;
            written.push(paths.comparison.clone());
            (Some(c), None)
        }
        Err(e) => (None, Some(e.to_string())),
    };

    let mut texts: BTreeMap<_, Vec<&str>> = BTreeMap::new();
    for r in labeled {
        if let (Some(g), Some(t)) = (r.a, r.record.response_text.as_deref()) {
            texts.entry(g).or_default().push(t);
        }
    }
    Ok(PolaritySection {
        comparison,
        comparison_error,
        scored: scores.len(),
        excluded,
        top_words: word_frequencies(&texts, &stop, cfg.top_k),
        embedding: space.metadata.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOutcome {
    pub report: AuditReport,
    pub files: Vec<PathBuf>,
}

/// Computes metrics over `labeled.jsonl` and writes the report files.
pub fn cmd_analyze(cfg: &AuditConfig, labeled_path: &Path) -> Result<AnalyzeOutcome, CliError> {
    let labeled: Vec<LabeledRecord> = read_jsonl(labeled_path)?;
    let paths = OutputPaths::new(&cfg.out_dir);
    let mut files = Vec::new();
    let is_hobby = labeled
        .first()
        .is_some_and(|r| r.record.spec.experiment_kind == ExperimentKind::IndependenceHobby);
    let polarity = if is_hobby {
        Some(polarity_section(cfg, &labeled, &paths, &mut files)?)
    } else {
        None
    };
    let report = build_report(
        &labeled,
        &reference(cfg)?,
        cfg.disparity_threshold,
        polarity,
    )?;
    for format in [
        ReportFormat::Json,
        ReportFormat::Markdown,
        ReportFormat::CsvBundle,
    ] {
        files.extend(emit(&report, format, &cfg.out_dir)?);
    }
    Ok(AnalyzeOutcome { report, files })
}

/// Re-renders the Markdown and CSV views of an existing `report.json`.
pub fn cmd_report(cfg: &AuditConfig, report_path: &Path) -> Result<Vec<PathBuf>, CliError> {
    require(report_path)?;
    let bytes = std::fs::read(report_path).map_err(|e| CliError::io(report_path, e))?;
    let report: AuditReport = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", report_path.display())))?;
    let mut files = Vec::new();
    for format in [ReportFormat::Markdown, ReportFormat::CsvBundle] {
        files.extend(emit(&report, format, &cfg.out_dir)?);
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllOutcome {
    pub plan: PlanOutcome,
    pub run: RunOutcome,
    pub label: Option<LabelSummary>,
    pub analysis: Option<AnalyzeOutcome>,
}

/// plan → run → label → analyze. A dry run stops after printing prompts.
pub fn cmd_all(
    cfg: &AuditConfig,
    dry_run: Option<usize>,
    out: &mut dyn Write,
) -> Result<AllOutcome, CliError> {
    let plan = cmd_plan(cfg)?;
    let run = cmd_run(cfg, &plan.path, dry_run, out)?;
    let RunOutcome::Completed { path, .. } = &run else {
        return Ok(AllOutcome {
            plan,
            run,
            label: None,
            analysis: None,
        });
    };
    let (labeled_path, label) = cmd_label(cfg, path)?;
    let analysis = cmd_analyze(cfg, &labeled_path)?;
    Ok(AllOutcome {
        plan,
        run,
        label: Some(label),
        analysis: Some(analysis),
    })
}
