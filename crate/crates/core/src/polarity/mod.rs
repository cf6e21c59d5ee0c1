//! Gender polarity of generated text.
//!
//! Words are embedded (trained skip-gram vectors or a loaded word2vec text
//! file) and projected onto the axis through the "she" and "he" vectors,
//! measured from the axis midpoint. A sentence score is the mean projection
//! of its in-vocabulary, non-stopword tokens; positive scores lean female.

mod embedding;
mod skipgram;
mod stats;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::categorize::LabeledRecord;
use crate::experiment::Attribute;
use crate::jsonl::write_atomic;
use crate::text::{words, StopWords};

pub use embedding::{
    load_embeddings, parse_embeddings, EmbeddingError, EmbeddingMetadata, EmbeddingSource,
    EmbeddingSpace,
};
pub use skipgram::{train_skipgram, SkipGramParams};
pub use stats::{
    cohens_d, mann_whitney_u, mean, MannWhitney, PValueMethod, StatsError, EXACT_MAX_COMBINED,
};

/// Lowercase word tokens of `text` with stopwords removed, in order.
pub fn tokenize(text: &str, stopwords: &StopWords) -> Vec<String> {
    words(text)
        .into_iter()
        .filter(|w| !stopwords.contains(w))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderAxis {
    pub f_vec: Vec<f64>,
    pub m_vec: Vec<f64>,
    /// β = (f + m) / 2.
    pub midpoint: Vec<f64>,
    /// f − β.
    pub direction: Vec<f64>,
    /// (f − β) / ‖f − β‖.
    pub unit: Vec<f64>,
}

impl GenderAxis {
    pub fn new(f_vec: Vec<f64>, m_vec: Vec<f64>) -> Result<Self, EmbeddingError> {
        if f_vec.len() != m_vec.len() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: f_vec.len(),
                found: m_vec.len(),
                line: None,
            });
        }
        let midpoint: Vec<f64> = f_vec
            .iter()
            .zip(&m_vec)
            .map(|(f, m)| (f + m) / 2.0)
            .collect();
        let direction: Vec<f64> = f_vec.iter().zip(&midpoint).map(|(f, b)| f - b).collect();
        let norm = dot(&direction, &direction).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbeddingError::DegenerateAxis);
        }
        let unit = direction.iter().map(|x| x / norm).collect();
        Ok(Self {
            f_vec,
            m_vec,
            midpoint,
            direction,
            unit,
        })
    }

    /// Axis between two anchor tokens of `space`, the first being the
    /// positive end.
    pub fn from_space(
        space: &EmbeddingSpace,
        female: &str,
        male: &str,
    ) -> Result<Self, EmbeddingError> {
        let get = |t: &str| {
            space
                .get(t)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| EmbeddingError::MissingAnchorToken(t.to_string()))
        };
        Self::new(get(female)?, get(male)?)
    }

    /// The same axis pointing toward the male end.
    pub fn mirrored(&self) -> Self {
        Self::new(self.m_vec.clone(), self.f_vec.clone()).expect("non-degenerate axis")
    }

    pub fn dimension(&self) -> usize {
        self.unit.len()
    }
}

/// Scalar projection of the displacement `word_vec − β` onto the axis unit vector.
pub fn word_projection(axis: &GenderAxis, word_vec: &[f64]) -> Result<f64, EmbeddingError> {
    if word_vec.len() != axis.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: axis.dimension(),
            found: word_vec.len(),
            line: None,
        });
    }
    Ok(word_vec
        .iter()
        .zip(&axis.midpoint)
        .zip(&axis.unit)
        .map(|((w, b), u)| (w - b) * u)
        .sum())
}

/// Mean projection of the in-vocabulary, non-stopword tokens and the number
/// of tokens used. `None` when no token qualifies.
pub fn sentence_score(
    axis: &GenderAxis,
    tokens: &[String],
    space: &EmbeddingSpace,
    stopwords: &StopWords,
) -> Result<Option<(f64, usize)>, EmbeddingError> {
    let mut sum = 0.0;
    let mut used = 0usize;
    for t in tokens {
        if stopwords.contains(t) {
            continue;
        }
        if let Some(v) = space.get(t) {
            sum += word_projection(axis, v)?;
            used += 1;
        }
    }
    Ok((used > 0).then(|| (sum / used as f64, used)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub trial_id: String,
    pub group: Attribute,
    pub score: f64,
    pub words_used: usize,
}

/// Scores every resolved record that carries a group and a response.
/// Returns the scores and the number of records left without a score.
pub fn score_records(
    records: &[LabeledRecord],
    axis: &GenderAxis,
    space: &EmbeddingSpace,
    stopwords: &StopWords,
) -> Result<(Vec<SentenceScore>, usize), EmbeddingError> {
    let mut scores = Vec::new();
    let mut excluded = 0;
    for r in records {
        let (Some(group), Some(text)) = (r.a, r.record.response_text.as_deref()) else {
            excluded += 1;
            continue;
        };
        let tokens = tokenize(text, stopwords);
        match sentence_score(axis, &tokens, space, stopwords)? {
            Some((score, words_used)) => scores.push(SentenceScore {
                trial_id: r.record.spec.trial_id.clone(),
                group,
                score,
                words_used,
            }),
            None => excluded += 1,
        }
    }
    Ok((scores, excluded))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub mean_female: f64,
    pub mean_male: f64,
    /// U of the female sample.
    pub u_statistic: f64,
    pub p_value_two_sided: f64,
    pub p_value_method: PValueMethod,
    /// Positive when female scores are higher.
    pub cohens_d: f64,
    pub n_female: usize,
    pub n_male: usize,
}

pub fn compare_groups(scores: &[SentenceScore]) -> Result<GroupComparison, StatsError> {
    let pick = |g: Attribute| -> Vec<f64> {
        scores
            .iter()
            .filter(|s| s.group == g)
            .map(|s| s.score)
            .collect()
    };
    let female = pick(Attribute::Female);
    let male = pick(Attribute::Male);
    let mw = mann_whitney_u(&female, &male)?;
    let d = cohens_d(&female, &male)?;
    Ok(GroupComparison {
        mean_female: mean(&female),
        mean_male: mean(&male),
        u_statistic: mw.u,
        p_value_two_sided: mw.p_two_sided,
        p_value_method: mw.method,
        cohens_d: d,
        n_female: female.len(),
        n_male: male.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordCount {
    pub token: String,
    pub count: u64,
}

/// Top-`k` token counts per group, by count descending then token ascending.
pub fn word_frequencies<G, S>(
    texts: &BTreeMap<G, Vec<S>>,
    stopwords: &StopWords,
    k: usize,
) -> BTreeMap<G, Vec<WordCount>>
where
    G: Ord + Clone,
    S: AsRef<str>,
{
    texts
        .iter()
        .map(|(group, docs)| {
            let mut counts: HashMap<String, u64> = HashMap::new();
            for doc in docs {
                for t in tokenize(doc.as_ref(), stopwords) {
                    *counts.entry(t).or_default() += 1;
                }
            }
            let mut list: Vec<WordCount> = counts
                .into_iter()
                .map(|(token, count)| WordCount { token, count })
                .collect();
            list.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.token.cmp(&b.token)));
            list.truncate(k);
            (group.clone(), list)
        })
        .collect()
}

/// Writes `trial_id,group,score,words_used` rows.
pub fn scores_csv(scores: &[SentenceScore]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial_id", "group", "score", "words_used"])
        .expect("in-memory write");
    for s in scores {
        w.write_record([
            s.trial_id.as_str(),
            s.group.as_str(),
            &s.score.to_string(),
            &s.words_used.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_scores(path: &Path, scores: &[SentenceScore]) -> std::io::Result<()> {
    write_atomic(path, &scores_csv(scores))
}
