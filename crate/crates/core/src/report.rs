//! Audit report assembly and rendering.
//!
//! Reports serialize to JSON at full precision, to a bundle of plot-ready
//! CSV files and to Markdown tables. Text renderings use four decimals and
//! leave undefined values empty.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::categorize::LabeledRecord;
use crate::experiment::{Attribute, ExperimentKind};
use crate::jsonl::write_atomic;
use crate::metrics::{
    confusion_by_group, disparity_flags, mutual_information, normalized_mutual_information,
    ConfusionCounts, DisparityFlag, GroupRates, JointDistribution, MetricsError, Rate, RateKind,
};
use crate::polarity::{EmbeddingMetadata, GroupComparison, WordCount};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("no records to report on")]
    NoRecords,
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Real-world female share per profession.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub fractions: BTreeMap<String, f64>,
    pub source_label: String,
}

impl ReferenceStats {
    /// Case-insensitive lookup.
    pub fn get(&self, profession: &str) -> Option<f64> {
        self.fractions.get(profession).copied().or_else(|| {
            self.fractions
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(profession))
                .map(|(_, v)| *v)
        })
    }

    /// Majority gender: female above one half, male below, none at exactly one half.
    pub fn majority(&self, profession: &str) -> Option<Option<Attribute>> {
        self.get(profession).map(majority_of)
    }
}

fn majority_of(fraction: f64) -> Option<Attribute> {
    if fraction > 0.5 {
        Some(Attribute::Female)
    } else if fraction < 0.5 {
        Some(Attribute::Male)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanMeta {
    pub plan_id: String,
    pub experiment_kind: ExperimentKind,
    pub record_count: usize,
    pub backend_ids: Vec<String>,
}

impl PlanMeta {
    pub fn from_records(records: &[LabeledRecord]) -> Result<Self, ReportError> {
        let first = records.first().ok_or(ReportError::NoRecords)?;
        let backend_ids: BTreeSet<&str> = records
            .iter()
            .map(|r| r.record.backend_id.as_str())
            .collect();
        Ok(Self {
            plan_id: first.record.spec.plan_id.clone(),
            experiment_kind: first.record.spec.experiment_kind,
            record_count: records.len(),
            backend_ids: backend_ids.into_iter().map(str::to_string).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfessionRow {
    pub profession: String,
    pub female: u64,
    pub male: u64,
    pub generated_female_fraction: Rate,
    pub reference_female_fraction: Option<f64>,
    /// Generated minus reference fraction.
    pub delta: Option<f64>,
    pub reference_majority: Option<Attribute>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceSection {
    pub nmi: Option<f64>,
    pub mutual_information: Option<f64>,
    /// Why `nmi` is absent.
    pub nmi_error: Option<String>,
    pub resolved: u64,
    pub professions: Vec<ProfessionRow>,
    pub stereotype_consistency_rate: Rate,
    pub consistent: u64,
    /// Resolved samples whose profession has a female or male reference majority.
    pub comparable: u64,
    pub reference_label: String,
    pub missing_reference: Vec<String>,
}

/// Gender by profession counts of the resolved occupation records. Rows are
/// `female`, `male`; columns are professions in first-appearance order
/// (unresolved records still contribute their column).
pub fn occupation_joint(records: &[LabeledRecord]) -> (Vec<String>, Vec<Vec<u64>>) {
    let mut professions: Vec<String> = Vec::new();
    let mut counts: Vec<[u64; 2]> = Vec::new();
    for r in records {
        let item = &r.record.spec.item_id;
        let j = match professions.iter().position(|p| p == item) {
            Some(j) => j,
            None => {
                professions.push(item.clone());
                counts.push([0, 0]);
                professions.len() - 1
            }
        };
        if r.unresolved {
            continue;
        }
        match r.a {
            Some(Attribute::Female) => counts[j][0] += 1,
            Some(Attribute::Male) => counts[j][1] += 1,
            None => {}
        }
    }
    let rows = vec![
        counts.iter().map(|c| c[0]).collect(),
        counts.iter().map(|c| c[1]).collect(),
    ];
    (professions, rows)
}

/// Per-profession generated against reference fractions, the stereotype
/// consistency rate and the NMI between gender and profession.
pub fn independence_report(
    professions: &[String],
    counts: &[Vec<u64>],
    reference: &ReferenceStats,
) -> IndependenceSection {
    let joint = JointDistribution::new(
        vec![
            Attribute::Female.as_str().into(),
            Attribute::Male.as_str().into(),
        ],
        professions.to_vec(),
        counts.to_vec(),
    );
    let (nmi, mi, nmi_error) = match joint {
        Ok(j) => match (normalized_mutual_information(&j), mutual_information(&j)) {
            (Ok(n), Ok(m)) => (Some(n), Some(m), None),
            (Err(e), Ok(m)) => (None, Some(m), Some(e.to_string())),
            (_, Err(e)) => (None, None, Some(e.to_string())),
        },
        Err(e) => (None, None, Some(e.to_string())),
    };
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    let (mut consistent, mut comparable, mut resolved) = (0u64, 0u64, 0u64);
    for (j, profession) in professions.iter().enumerate() {
        let (female, male) = (counts[0][j], counts[1][j]);
        resolved += female + male;
        let generated = Rate::ratio(female, female + male);
        let reference_fraction = reference.get(profession);
        if reference_fraction.is_none() {
            missing.push(profession.clone());
        }
        let majority = reference_fraction.and_then(majority_of);
        match majority {
            Some(Attribute::Female) => {
                consistent += female;
                comparable += female + male;
            }
            Some(Attribute::Male) => {
                consistent += male;
                comparable += female + male;
            }
            None => {}
        }
        rows.push(ProfessionRow {
            profession: profession.clone(),
            female,
            male,
            generated_female_fraction: generated,
            reference_female_fraction: reference_fraction,
            delta: generated
                .value()
                .zip(reference_fraction)
                .map(|(g, r)| g - r),
            reference_majority: majority,
        });
    }
    IndependenceSection {
        nmi,
        mutual_information: mi,
        nmi_error,
        resolved,
        professions: rows,
        stereotype_consistency_rate: Rate::ratio(consistent, comparable),
        consistent,
        comparable,
        reference_label: reference.source_label.clone(),
        missing_reference: missing,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationRow {
    pub counts: ConfusionCounts,
    pub fnr: Rate,
    pub fpr: Rate,
    pub tpr: Rate,
    pub tnr: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyRow {
    pub ppv: Rate,
    pub npv: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SepSufSection {
    pub separation: BTreeMap<Attribute, SeparationRow>,
    pub sufficiency: BTreeMap<Attribute, SufficiencyRow>,
    pub threshold: f64,
    pub flags: Vec<DisparityFlag>,
}

pub fn sep_suf_report(
    groups: &BTreeMap<Attribute, ConfusionCounts>,
    threshold: f64,
) -> SepSufSection {
    let rates: BTreeMap<Attribute, GroupRates> = groups
        .iter()
        .map(|(g, cm)| (*g, GroupRates::from_confusion(cm)))
        .collect();
    let separation = groups
        .iter()
        .map(|(g, cm)| {
            let e = rates[g].errors;
            (
                *g,
                SeparationRow {
                    counts: *cm,
                    fnr: e.fnr,
                    fpr: e.fpr,
                    tpr: e.tpr,
                    tnr: e.tnr,
                },
            )
        })
        .collect();
    let sufficiency = rates
        .iter()
        .map(|(g, r)| {
            (
                *g,
                SufficiencyRow {
                    ppv: r.predictive.ppv,
                    npv: r.predictive.npv,
                },
            )
        })
        .collect();
    SepSufSection {
        separation,
        sufficiency,
        threshold,
        flags: disparity_flags(&rates, threshold),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSection {
    pub control_trials: u64,
    pub resolved: u64,
    pub wrong: u64,
    pub unresolved: u64,
    /// Wrong answers over resolved control trials.
    pub relative_error: Rate,
}

/// Error fraction over the attribute-free control trials.
pub fn baseline_report(records: &[LabeledRecord]) -> BaselineSection {
    let mut s = BaselineSection {
        control_trials: 0,
        resolved: 0,
        wrong: 0,
        unresolved: 0,
        relative_error: Rate::UNDEFINED,
    };
    for r in records.iter().filter(|r| r.record.spec.control) {
        s.control_trials += 1;
        match r.correct {
            Some(ok) if !r.unresolved => {
                s.resolved += 1;
                if !ok {
                    s.wrong += 1;
                }
            }
            _ => s.unresolved += 1,
        }
    }
    s.relative_error = Rate::ratio(s.wrong, s.resolved);
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolaritySection {
    pub comparison: Option<GroupComparison>,
    pub comparison_error: Option<String>,
    pub scored: usize,
    /// Records without a score (no group, no response or no in-vocabulary word).
    pub excluded: usize,
    pub top_words: BTreeMap<Attribute, Vec<WordCount>>,
    pub embedding: EmbeddingMetadata,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnresolvedTally {
    pub total: u64,
    pub unresolved: u64,
    /// Failed backend calls, included in `unresolved`.
    pub failed: u64,
    pub by_group: BTreeMap<Attribute, u64>,
}

pub fn unresolved_tally(records: &[LabeledRecord]) -> UnresolvedTally {
    let mut t = UnresolvedTally::default();
    for r in records {
        t.total += 1;
        if r.unresolved {
            t.unresolved += 1;
            if let Some(g) = r.a {
                *t.by_group.entry(g).or_default() += 1;
            }
        }
        if r.failed() {
            t.failed += 1;
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub plan: PlanMeta,
    pub independence: Option<IndependenceSection>,
    pub sep_suf: Option<SepSufSection>,
    pub baseline: Option<BaselineSection>,
    pub polarity: Option<PolaritySection>,
    /// Copied from the separation/sufficiency disparity check.
    pub flags: Vec<DisparityFlag>,
    pub unresolved: UnresolvedTally,
}

/// Builds the report sections that apply to the records' experiment kind.
pub fn build_report(
    records: &[LabeledRecord],
    reference: &ReferenceStats,
    threshold: f64,
    polarity: Option<PolaritySection>,
) -> Result<AuditReport, ReportError> {
    let plan = PlanMeta::from_records(records)?;
    let mut report = AuditReport {
        schema_version: SCHEMA_VERSION,
        independence: None,
        sep_suf: None,
        baseline: None,
        polarity,
        flags: Vec::new(),
        unresolved: unresolved_tally(records),
        plan,
    };
    match report.plan.experiment_kind {
        ExperimentKind::IndependenceOccupation => {
            let (professions, counts) = occupation_joint(records);
            report.independence = Some(independence_report(&professions, &counts, reference));
        }
        ExperimentKind::IndependenceHobby => {}
        ExperimentKind::SepSufMedical | ExperimentKind::SepSufSector => {
            let grouped = confusion_by_group(records)?;
            let section = sep_suf_report(&grouped.groups, threshold);
            report.flags = section.flags.clone();
            report.sep_suf = Some(section);
            if records.iter().any(|r| r.record.spec.control) {
                report.baseline = Some(baseline_report(records));
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    CsvBundle,
    Markdown,
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

fn opt4(x: Option<f64>) -> String {
    x.map(f4).unwrap_or_default()
}

fn rate4(r: Rate) -> String {
    opt4(r.value())
}

/// Group label as used in the rendered tables.
pub fn group_label(g: Attribute) -> &'static str {
    g.pronoun()
}

pub fn to_json(report: &AuditReport) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
    out.push(b'\n');
    out
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// File name and contents of each CSV in the bundle.
pub fn to_csv_bundle(report: &AuditReport) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    if let Some(ind) = &report.independence {
        let rows = ind
            .professions
            .iter()
            .map(|p| {
                vec![
                    p.profession.clone(),
                    p.female.to_string(),
                    p.male.to_string(),
                    rate4(p.generated_female_fraction),
                    opt4(p.reference_female_fraction),
                    opt4(p.delta),
                ]
            })
            .collect();
        files.push((
            "independence.csv".into(),
            csv_bytes(
                &[
                    "profession",
                    "female",
                    "male",
                    "generated_female_fraction",
                    "reference_female_fraction",
                    "delta",
                ],
                rows,
            ),
        ));
        files.push((
            "independence_summary.csv".into(),
            csv_bytes(
                &[
                    "nmi",
                    "mutual_information",
                    "stereotype_consistency_rate",
                    "consistent",
                    "comparable",
                    "resolved",
                ],
                vec![vec![
                    opt4(ind.nmi),
                    opt4(ind.mutual_information),
                    rate4(ind.stereotype_consistency_rate),
                    ind.consistent.to_string(),
                    ind.comparable.to_string(),
                    ind.resolved.to_string(),
                ]],
            ),
        ));
    }
    if let Some(s) = &report.sep_suf {
        let rows = s
            .separation
            .iter()
            .map(|(g, row)| {
                let suf = &s.sufficiency[g];
                vec![
                    group_label(*g).to_string(),
                    row.counts.tp.to_string(),
                    row.counts.fp.to_string(),
                    row.counts.fn_.to_string(),
                    row.counts.tn.to_string(),
                    row.counts.unresolved.to_string(),
                    rate4(row.fnr),
                    rate4(row.fpr),
                    rate4(row.tpr),
                    rate4(row.tnr),
                    rate4(suf.npv),
                    rate4(suf.ppv),
                ]
            })
            .collect();
        files.push((
            "rates.csv".into(),
            csv_bytes(
                &[
                    "group",
                    "tp",
                    "fp",
                    "fn",
                    "tn",
                    "unresolved",
                    "fnr",
                    "fpr",
                    "tpr",
                    "tnr",
                    "npv",
                    "ppv",
                ],
                rows,
            ),
        ));
        let flag_rows = s
            .flags
            .iter()
            .map(|f| {
                vec![
                    f.rate.as_str().to_string(),
                    group_label(f.group_a).to_string(),
                    group_label(f.group_b).to_string(),
                    f4(f.value_a),
                    f4(f.value_b),
                    f4(f.gap),
                    opt4(f.ratio),
                    serde_json::to_value(f.rule)
                        .unwrap()
                        .as_str()
                        .unwrap()
                        .to_string(),
                ]
            })
            .collect();
        files.push((
            "flags.csv".into(),
            csv_bytes(
                &[
                    "rate", "group_a", "group_b", "value_a", "value_b", "gap", "ratio", "rule",
                ],
                flag_rows,
            ),
        ));
    }
    if let Some(b) = &report.baseline {
        files.push((
            "baseline.csv".into(),
            csv_bytes(
                &[
                    "control_trials",
                    "resolved",
                    "wrong",
                    "unresolved",
                    "relative_error",
                ],
                vec![vec![
                    b.control_trials.to_string(),
                    b.resolved.to_string(),
                    b.wrong.to_string(),
                    b.unresolved.to_string(),
                    rate4(b.relative_error),
                ]],
            ),
        ));
    }
    if let Some(p) = &report.polarity {
        if let Some(c) = &p.comparison {
            files.push((
                "polarity.csv".into(),
                csv_bytes(
                    &[
                        "mean_female",
                        "mean_male",
                        "u_statistic",
                        "p_value_two_sided",
                        "cohens_d",
                        "n_female",
                        "n_male",
                    ],
                    vec![vec![
                        f4(c.mean_female),
                        f4(c.mean_male),
                        f4(c.u_statistic),
                        f4(c.p_value_two_sided),
                        f4(c.cohens_d),
                        c.n_female.to_string(),
                        c.n_male.to_string(),
                    ]],
                ),
            ));
        }
        let rows = p
            .top_words
            .iter()
            .flat_map(|(g, words)| {
                words.iter().enumerate().map(move |(i, w)| {
                    vec![
                        g.as_str().to_string(),
                        (i + 1).to_string(),
                        w.token.clone(),
                        w.count.to_string(),
                    ]
                })
            })
            .collect();
        files.push((
            "word_frequencies.csv".into(),
            csv_bytes(&["group", "rank", "token", "count"], rows),
        ));
    }
    let u = &report.unresolved;
    files.push((
        "unresolved.csv".into(),
        csv_bytes(
            &["total", "unresolved", "failed"],
            vec![vec![
                u.total.to_string(),
                u.unresolved.to_string(),
                u.failed.to_string(),
            ]],
        ),
    ));
    files
}

fn flagged(flags: &[DisparityFlag], kind: RateKind) -> bool {
    flags.iter().any(|f| f.rate == kind)
}

pub fn to_markdown(report: &AuditReport) -> String {
    let mut md = String::new();
    let p = &report.plan;
    writeln!(md, "# Audit report: {}\n", p.experiment_kind).unwrap();
    writeln!(md, "- plan: `{}`", p.plan_id).unwrap();
    writeln!(md, "- records: {}", p.record_count).unwrap();
    writeln!(md, "- backends: {}", p.backend_ids.join(", ")).unwrap();
    let u = &report.unresolved;
    writeln!(
        md,
        "- unresolved: {} (failed calls: {})\n",
        u.unresolved, u.failed
    )
    .unwrap();

    if let Some(ind) = &report.independence {
        md.push_str("## Independence\n\n");
        match ind.nmi {
            Some(n) => writeln!(md, "- NMI(gender; profession): {}", f4(n)).unwrap(),
            None => writeln!(
                md,
                "- NMI(gender; profession): undefined ({})",
                ind.nmi_error.as_deref().unwrap_or("")
            )
            .unwrap(),
        }
        writeln!(
            md,
            "- stereotype consistency rate: {} ({} of {})",
            rate4(ind.stereotype_consistency_rate),
            ind.consistent,
            ind.comparable
        )
        .unwrap();
        writeln!(md, "- reference: {}", ind.reference_label).unwrap();
        if !ind.missing_reference.is_empty() {
            writeln!(
                md,
                "- no reference for: {}",
                ind.missing_reference.join(", ")
            )
            .unwrap();
        }
        md.push_str("\n| profession | female | male | generated | reference | delta |\n");
        md.push_str("|---|---|---|---|---|---|\n");
        for r in &ind.professions {
            writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} |",
                r.profession,
                r.female,
                r.male,
                rate4(r.generated_female_fraction),
                opt4(r.reference_female_fraction),
                r.delta.map(|d| format!("{d:+.4}")).unwrap_or_default()
            )
            .unwrap();
        }
        md.push('\n');
    }

    if let Some(s) = &report.sep_suf {
        md.push_str("## Separation and sufficiency\n\n");
        md.push_str("| group | FNR | FPR | NPV | PPV |\n|---|---|---|---|---|\n");
        let cell = |r: Rate, kind| {
            let mark = if flagged(&s.flags, kind) { "*" } else { "" };
            format!("{}{mark}", rate4(r))
        };
        for (g, row) in &s.separation {
            let suf = &s.sufficiency[g];
            writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                group_label(*g),
                cell(row.fnr, RateKind::Fnr),
                cell(row.fpr, RateKind::Fpr),
                cell(suf.npv, RateKind::Npv),
                cell(suf.ppv, RateKind::Ppv)
            )
            .unwrap();
        }
        if !s.flags.is_empty() {
            writeln!(
                md,
                "\n`*` group values differ beyond the {} threshold.",
                s.threshold
            )
            .unwrap();
            for f in &s.flags {
                writeln!(
                    md,
                    "- {}: {} {} vs {} {} (gap {}, ratio {})",
                    f.rate.as_str().to_uppercase(),
                    group_label(f.group_a),
                    f4(f.value_a),
                    group_label(f.group_b),
                    f4(f.value_b),
                    f4(f.gap),
                    opt4(f.ratio)
                )
                .unwrap();
            }
        }
        md.push('\n');
    }

    if let Some(b) = &report.baseline {
        md.push_str("## Baseline\n\n");
        writeln!(
            md,
            "- relative error without gender cues: {} ({} wrong of {} resolved, {} unresolved)\n",
            rate4(b.relative_error),
            b.wrong,
            b.resolved,
            b.unresolved
        )
        .unwrap();
    }

    if let Some(pol) = &report.polarity {
        md.push_str("## Polarity\n\n");
        match &pol.comparison {
            Some(c) => {
                md.push_str("| group | n | mean score |\n|---|---|---|\n");
                writeln!(md, "| female | {} | {} |", c.n_female, f4(c.mean_female)).unwrap();
                writeln!(md, "| male | {} | {} |", c.n_male, f4(c.mean_male)).unwrap();
                writeln!(
                    md,
                    "\n- Mann-Whitney U: {}, two-sided p: {}\n- Cohen's d: {}",
                    f4(c.u_statistic),
                    f4(c.p_value_two_sided),
                    f4(c.cohens_d)
                )
                .unwrap();
            }
            None => writeln!(
                md,
                "- comparison unavailable: {}",
                pol.comparison_error.as_deref().unwrap_or("")
            )
            .unwrap(),
        }
        writeln!(md, "- scored: {}, excluded: {}\n", pol.scored, pol.excluded).unwrap();
        for (g, words) in &pol.top_words {
            let list: Vec<String> = words
                .iter()
                .map(|w| format!("{} ({})", w.token, w.count))
                .collect();
            writeln!(md, "- top words, {}: {}", g.as_str(), list.join(", ")).unwrap();
        }
        md.push('\n');
    }
    md
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    write_atomic(path, bytes).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the report in `format` under `out_dir` and returns the paths
/// written: `report.json`, `report.md`, or the files of `report_csv/`.
pub fn emit(
    report: &AuditReport,
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    match format {
        ReportFormat::Json => {
            let path = out_dir.join("report.json");
            write(&path, &to_json(report))?;
            Ok(vec![path])
        }
        ReportFormat::Markdown => {
            let path = out_dir.join("report.md");
            write(&path, to_markdown(report).as_bytes())?;
            Ok(vec![path])
        }
        ReportFormat::CsvBundle => {
            let dir = out_dir.join("report_csv");
            let mut paths = Vec::new();
            for (name, bytes) in to_csv_bundle(report) {
                let path = dir.join(name);
                write(&path, &bytes)?;
                paths.push(path);
            }
            Ok(paths)
        }
    }
}
