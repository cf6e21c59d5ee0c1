//! Independence, separation and sufficiency statistics.
//!
//! Independence is measured as the normalized mutual information between the
//! sensitive attribute `A` and a content category `C`, estimated from
//! empirical counts (plug-in estimator, natural logarithms). Separation and
//! sufficiency compare per-group error rates and predictive values computed
//! from a 2x2 confusion matrix of ground truth `Y` against categorized
//! answer `C`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::categorize::LabeledRecord;
use crate::experiment::Attribute;

/// Tolerance on the sum of a probability vector.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Conventional disparity threshold (the "20% rule").
pub const DEFAULT_DISPARITY_THRESHOLD: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("joint distribution has no observations")]
    EmptyDistribution,
    #[error("count matrix is {rows}x{cols} but levels are {a_levels}x{c_levels}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        a_levels: usize,
        c_levels: usize,
    },
    #[error("marginal entropy of {0} is zero; normalized mutual information is undefined")]
    DegenerateMarginal(Marginal),
    #[error("record {0} has no ground truth")]
    MissingGroundTruth(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marginal {
    Attribute,
    Category,
}

impl fmt::Display for Marginal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Marginal::Attribute => "the attribute",
            Marginal::Category => "the category",
        })
    }
}

/// A ratio that is undefined when its denominator is zero.
/// Serializes as a number or `null`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rate(pub Option<f64>);

impl Rate {
    pub const UNDEFINED: Rate = Rate(None);

    pub fn ratio(numerator: u64, denominator: u64) -> Rate {
        if denominator == 0 {
            Rate(None)
        } else {
            Rate(Some(numerator as f64 / denominator as f64))
        }
    }

    pub fn value(self) -> Option<f64> {
        self.0
    }

    pub fn is_defined(self) -> bool {
        self.0.is_some()
    }

    /// One minus the rate, undefined stays undefined.
    pub fn complement(self) -> Rate {
        Rate(self.0.map(|v| 1.0 - v))
    }
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(probabilities: &[f64]) -> Result<f64, MetricsError> {
    let mut total = 0.0;
    for &p in probabilities {
        if !p.is_finite() || p < 0.0 {
            return Err(MetricsError::InvalidDistribution(format!(
                "probability {p} is not a finite non-negative number"
            )));
        }
        total += p;
    }
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(MetricsError::InvalidDistribution(format!(
            "probabilities sum to {total}"
        )));
    }
    Ok(-probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>())
}

/// Counts over (attribute, category) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub a_levels: Vec<String>,
    pub c_levels: Vec<String>,
    /// Row per attribute level, column per category level.
    pub counts: Vec<Vec<u64>>,
}

impl JointDistribution {
    pub fn new(
        a_levels: Vec<String>,
        c_levels: Vec<String>,
        counts: Vec<Vec<u64>>,
    ) -> Result<Self, MetricsError> {
        let shape_ok =
            counts.len() == a_levels.len() && counts.iter().all(|r| r.len() == c_levels.len());
        if !shape_ok {
            return Err(MetricsError::ShapeMismatch {
                rows: counts.len(),
                cols: counts.first().map_or(0, Vec::len),
                a_levels: a_levels.len(),
                c_levels: c_levels.len(),
            });
        }
        let joint = Self {
            a_levels,
            c_levels,
            counts,
        };
        if joint.total() == 0 {
            return Err(MetricsError::EmptyDistribution);
        }
        Ok(joint)
    }

    /// Unlabeled matrix; levels are named by index.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let rows = counts.len();
        let cols = counts.first().map_or(0, Vec::len);
        Self::new(
            (0..rows).map(|i| format!("a{i}")).collect(),
            (0..cols).map(|j| format!("c{j}")).collect(),
            counts,
        )
    }

    /// Tallies observed pairs. Levels appear in order of first occurrence
    /// unless supplied up front.
    pub fn from_pairs<I, A, C>(pairs: I) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = (A, C)>,
        A: Into<String>,
        C: Into<String>,
    {
        let mut a_levels: Vec<String> = Vec::new();
        let mut c_levels: Vec<String> = Vec::new();
        let mut cells: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for (a, c) in pairs {
            let (a, c) = (a.into(), c.into());
            let ai = index_of(&mut a_levels, a);
            let ci = index_of(&mut c_levels, c);
            *cells.entry((ai, ci)).or_default() += 1;
        }
        let mut counts = vec![vec![0u64; c_levels.len()]; a_levels.len()];
        for ((i, j), n) in cells {
            counts[i][j] = n;
        }
        Self::new(a_levels, c_levels, counts)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn a_marginal(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn c_marginal(&self) -> Vec<u64> {
        (0..self.c_levels.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn count(&self, a: &str, c: &str) -> u64 {
        match (
            self.a_levels.iter().position(|l| l == a),
            self.c_levels.iter().position(|l| l == c),
        ) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    /// Swaps the roles of attribute and category.
    pub fn transposed(&self) -> Self {
        let counts = (0..self.c_levels.len())
            .map(|j| self.counts.iter().map(|r| r[j]).collect())
            .collect();
        Self {
            a_levels: self.c_levels.clone(),
            c_levels: self.a_levels.clone(),
            counts,
        }
    }

    fn probabilities(&self, counts: impl IntoIterator<Item = u64>) -> Vec<f64> {
        let total = self.total() as f64;
        counts.into_iter().map(|n| n as f64 / total).collect()
    }

    pub fn entropy_a(&self) -> f64 {
        entropy(&self.probabilities(self.a_marginal())).expect("marginal is a distribution")
    }

    pub fn entropy_c(&self) -> f64 {
        entropy(&self.probabilities(self.c_marginal())).expect("marginal is a distribution")
    }

    pub fn entropy_joint(&self) -> f64 {
        entropy(&self.probabilities(self.counts.iter().flatten().copied()))
            .expect("joint is a distribution")
    }
}

fn index_of(levels: &mut Vec<String>, value: String) -> usize {
    match levels.iter().position(|l| *l == value) {
        Some(i) => i,
        None => {
            levels.push(value);
            levels.len() - 1
        }
    }
}

/// `H[p_a] + H[p_c] - H[p_ac]` in nats. Negative round-off is clamped to zero.
pub fn mutual_information(joint: &JointDistribution) -> Result<f64, MetricsError> {
    if joint.total() == 0 {
        return Err(MetricsError::EmptyDistribution);
    }
    let mi = joint.entropy_a() + joint.entropy_c() - joint.entropy_joint();
    Ok(mi.max(0.0))
}

/// Mutual information divided by the geometric mean of the marginal entropies.
pub fn normalized_mutual_information(joint: &JointDistribution) -> Result<f64, MetricsError> {
    let mi = mutual_information(joint)?;
    let ha = joint.entropy_a();
    let hc = joint.entropy_c();
    if ha <= 0.0 {
        return Err(MetricsError::DegenerateMarginal(Marginal::Attribute));
    }
    if hc <= 0.0 {
        return Err(MetricsError::DegenerateMarginal(Marginal::Category));
    }
    Ok((mi / (ha.sqrt() * hc.sqrt())).clamp(0.0, 1.0))
}

/// Cells of a 2x2 confusion matrix plus the responses that could not be
/// categorized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub unresolved: u64,
}

impl ConfusionCounts {
    pub fn resolved(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn total(&self) -> u64 {
        self.resolved() + self.unresolved
    }

    pub fn record(&mut self, y: u8, c: u8) {
        match (y, c) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fn_ += 1,
            (_, 1) => self.fp += 1,
            _ => self.tn += 1,
        }
    }

    pub fn scaled(&self, k: u64) -> Self {
        Self {
            tp: self.tp * k,
            fp: self.fp * k,
            fn_: self.fn_ * k,
            tn: self.tn * k,
            unresolved: self.unresolved * k,
        }
    }
}

/// Per-group confusion matrices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupedConfusion {
    pub groups: BTreeMap<Attribute, ConfusionCounts>,
}

impl GroupedConfusion {
    pub fn group(&self, attribute: Attribute) -> ConfusionCounts {
        self.groups.get(&attribute).copied().unwrap_or_default()
    }

    pub fn unresolved(&self) -> u64 {
        self.groups.values().map(|c| c.unresolved).sum()
    }
}

/// Tallies the (Y, C) cells of every attribute-bearing record per group.
/// Control records (no attribute) are skipped; unresolved records are
/// counted but excluded from the cells.
pub fn confusion_by_group(records: &[LabeledRecord]) -> Result<GroupedConfusion, MetricsError> {
    let mut grouped = GroupedConfusion::default();
    for r in records {
        let Some(attribute) = r.a else { continue };
        if r.record.spec.control {
            continue;
        }
        let y = r
            .record
            .spec
            .ground_truth
            .ok_or_else(|| MetricsError::MissingGroundTruth(r.record.spec.trial_id.clone()))?;
        let cell = grouped.groups.entry(attribute).or_default();
        match (r.unresolved, r.c) {
            (false, Some(c)) => cell.record(y, c),
            _ => cell.unresolved += 1,
        }
    }
    Ok(grouped)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateBundle {
    pub fnr: Rate,
    pub fpr: Rate,
    pub tpr: Rate,
    pub tnr: Rate,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictiveBundle {
    pub ppv: Rate,
    pub npv: Rate,
}

/// Group-wise error rates. TPR and TNR are the complements of FNR and FPR,
/// so `fnr + tpr == 1` and `fpr + tnr == 1` hold exactly.
pub fn error_rates(cm: &ConfusionCounts) -> RateBundle {
    let fnr = Rate::ratio(cm.fn_, cm.fn_ + cm.tp);
    let fpr = Rate::ratio(cm.fp, cm.fp + cm.tn);
    RateBundle {
        fnr,
        fpr,
        tpr: fnr.complement(),
        tnr: fpr.complement(),
    }
}

pub fn predictive_values(cm: &ConfusionCounts) -> PredictiveBundle {
    PredictiveBundle {
        ppv: Rate::ratio(cm.tp, cm.tp + cm.fp),
        npv: Rate::ratio(cm.tn, cm.tn + cm.fn_),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateKind {
    Fnr,
    Fpr,
    Ppv,
    Npv,
}

impl RateKind {
    pub const ALL: [RateKind; 4] = [RateKind::Fnr, RateKind::Fpr, RateKind::Npv, RateKind::Ppv];

    pub fn as_str(self) -> &'static str {
        match self {
            RateKind::Fnr => "fnr",
            RateKind::Fpr => "fpr",
            RateKind::Ppv => "ppv",
            RateKind::Npv => "npv",
        }
    }
}

/// Rates of one group, as compared by [`disparity_flags`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupRates {
    pub errors: RateBundle,
    pub predictive: PredictiveBundle,
}

impl GroupRates {
    pub fn from_confusion(cm: &ConfusionCounts) -> Self {
        Self {
            errors: error_rates(cm),
            predictive: predictive_values(cm),
        }
    }

    pub fn get(&self, kind: RateKind) -> Rate {
        match kind {
            RateKind::Fnr => self.errors.fnr,
            RateKind::Fpr => self.errors.fpr,
            RateKind::Ppv => self.predictive.ppv,
            RateKind::Npv => self.predictive.npv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisparityRule {
    Gap,
    Ratio,
    GapAndRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityFlag {
    pub rate: RateKind,
    pub group_a: Attribute,
    pub group_b: Attribute,
    pub value_a: f64,
    pub value_b: f64,
    pub gap: f64,
    /// min/max of the two values; absent when both are zero.
    pub ratio: Option<f64>,
    pub rule: DisparityRule,
    pub threshold: f64,
}

/// Flags every rate whose values differ across a pair of groups by more than
/// `threshold` in absolute terms, or whose min/max ratio falls below
/// `1 - threshold`. Pairs with an undefined value are skipped.
pub fn disparity_flags(
    groups: &BTreeMap<Attribute, GroupRates>,
    threshold: f64,
) -> Vec<DisparityFlag> {
    let entries: Vec<_> = groups.iter().collect();
    let mut flags = Vec::new();
    for kind in RateKind::ALL {
        for (i, (ga, ra)) in entries.iter().enumerate() {
            for (gb, rb) in &entries[i + 1..] {
                let (Some(va), Some(vb)) = (ra.get(kind).value(), rb.get(kind).value()) else {
                    continue;
                };
                let gap = (va - vb).abs();
                let hi = va.max(vb);
                let ratio = (hi > 0.0).then(|| va.min(vb) / hi);
                let by_gap = gap > threshold;
                let by_ratio = ratio.is_some_and(|r| r < 1.0 - threshold);
                let rule = match (by_gap, by_ratio) {
                    (true, true) => DisparityRule::GapAndRatio,
                    (true, false) => DisparityRule::Gap,
                    (false, true) => DisparityRule::Ratio,
                    (false, false) => continue,
                };
                flags.push(DisparityFlag {
                    rate: kind,
                    group_a: **ga,
                    group_b: **gb,
                    value_a: va,
                    value_b: vb,
                    gap,
                    ratio,
                    rule,
                    threshold,
                });
            }
        }
    }
    flags
}
