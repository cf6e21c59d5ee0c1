//! Skip-gram with negative sampling.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedding::{EmbeddingError, EmbeddingMetadata, EmbeddingSource, EmbeddingSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramParams {
    pub dimension: usize,
    pub window: usize,
    pub negative: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    /// Frequent-word subsampling threshold; 0 disables it.
    pub subsample: f64,
    pub seed: u64,
    /// Tokens that must survive `min_count` (the axis endpoints).
    pub anchors: Vec<String>,
}

impl Default for SkipGramParams {
    fn default() -> Self {
        Self {
            dimension: 100,
            window: 5,
            negative: 5,
            epochs: 5,
            min_count: 1,
            learning_rate: 0.025,
            min_learning_rate: 0.0001,
            subsample: 0.0,
            seed: 1,
            anchors: vec!["she".into(), "he".into()],
        }
    }
}

impl SkipGramParams {
    fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::InvalidParams(m.to_string()));
        if self.dimension == 0 {
            return bad("dimension must be positive");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.learning_rate <= 0.0 || self.min_learning_rate < 0.0 {
            return bad("learning rates must be positive");
        }
        if self.subsample < 0.0 {
            return bad("subsample must be non-negative");
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trains skip-gram vectors on pre-tokenized sentences. Deterministic for a
/// fixed `params.seed`.
pub fn train_skipgram(
    corpus: &[Vec<String>],
    params: &SkipGramParams,
) -> Result<EmbeddingSpace, EmbeddingError> {
    params.validate()?;
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for token in corpus.iter().flatten() {
        *counts.entry(token.as_str()).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    let mut vocab: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= params.min_count)
        .collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let index: HashMap<&str, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, (t, _))| (*t, i))
        .collect();
    for anchor in &params.anchors {
        if !index.contains_key(anchor.as_str()) {
            return Err(EmbeddingError::MissingAnchorToken(anchor.clone()));
        }
    }

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| {
            s.iter()
                .filter_map(|t| index.get(t.as_str()).copied())
                .collect()
        })
        .collect();
    let total_words: u64 = vocab.iter().map(|(_, c)| c).sum();

    let mut cumulative = Vec::with_capacity(vocab.len());
    let mut acc = 0.0;
    for (_, c) in &vocab {
        acc += (*c as f64).powf(0.75);
        cumulative.push(acc);
    }

    let dim = params.dimension;
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut syn0: Vec<f64> = (0..v * dim)
        .map(|_| (rng.random::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut syn1 = vec![0.0; v * dim];
    let mut neu1e = vec![0.0; dim];

    let planned = (params.epochs as u64 * total_words) as f64 + 1.0;
    let mut processed = 0u64;
    let threshold = params.subsample * total_words as f64;

    for _ in 0..params.epochs {
        for sentence in &sentences {
            let kept: Vec<usize> = if threshold > 0.0 {
                sentence
                    .iter()
                    .copied()
                    .filter(|&w| {
                        let f = vocab[w].1 as f64;
                        let keep = ((f / threshold).sqrt() + 1.0) * threshold / f;
                        keep >= rng.random::<f64>()
                    })
                    .collect()
            } else {
                sentence.clone()
            };
            for (pos, &word) in kept.iter().enumerate() {
                let alpha = (params.learning_rate * (1.0 - processed as f64 / planned))
                    .max(params.min_learning_rate);
                processed += 1;
                let span = params.window - rng.random_range(0..params.window);
                let lo = pos.saturating_sub(span);
                let hi = (pos + span).min(kept.len() - 1);
                for (c, &context) in kept.iter().enumerate().take(hi + 1).skip(lo) {
                    if c == pos {
                        continue;
                    }
                    let l1 = context * dim;
                    neu1e.iter_mut().for_each(|x| *x = 0.0);
                    for d in 0..=params.negative {
                        let (target, label) = if d == 0 {
                            (word, 1.0)
                        } else {
                            let u = rng.random::<f64>() * acc;
                            let t = cumulative.partition_point(|&x| x <= u).min(v - 1);
                            if t == word {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let l2 = target * dim;
                        let dot: f64 = (0..dim).map(|i| syn0[l1 + i] * syn1[l2 + i]).sum();
                        let g = (label - sigmoid(dot)) * alpha;
                        for i in 0..dim {
                            neu1e[i] += g * syn1[l2 + i];
                            syn1[l2 + i] += g * syn0[l1 + i];
                        }
                    }
                    for i in 0..dim {
                        syn0[l1 + i] += neu1e[i];
                    }
                }
            }
        }
    }

    let mut space = EmbeddingSpace::new(
        dim,
        EmbeddingMetadata {
            source: EmbeddingSource::Trained,
            corpus_size: Some(total_words),
            hyperparameters: Some(params.clone()),
        },
    );
    for (i, (token, _)) in vocab.iter().enumerate() {
        space.insert(token, syn0[i * dim..(i + 1) * dim].to_vec())?;
    }
    Ok(space)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentences(words: &[&str], n: usize) -> Vec<Vec<String>> {
        (0..n)
            .map(|i| {
                vec![
                    words[0].to_string(),
                    words[1 + i % (words.len() - 1)].to_string(),
                    words[1 + (i + 1) % (words.len() - 1)].to_string(),
                ]
            })
            .collect()
    }

    #[test]
    fn missing_anchor() {
        let corpus = sentences(&["she", "reads", "sings"], 10);
        assert!(matches!(
            train_skipgram(&corpus, &SkipGramParams::default()),
            Err(EmbeddingError::MissingAnchorToken(t)) if t == "he"
        ));
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(
            train_skipgram(&[vec![]], &SkipGramParams::default()),
            Err(EmbeddingError::EmptyCorpus)
        ));
    }

    #[test]
    fn seeded_training_is_deterministic() {
        let mut corpus = sentences(&["she", "reads", "sings"], 20);
        corpus.extend(sentences(&["he", "codes", "lifts"], 20));
        let params = SkipGramParams {
            dimension: 16,
            ..SkipGramParams::default()
        };
        let a = train_skipgram(&corpus, &params).unwrap();
        let b = train_skipgram(&corpus, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert_eq!(a.metadata.corpus_size, Some(120));
        let other = train_skipgram(&corpus, &SkipGramParams { seed: 2, ..params }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn min_count_prunes() {
        let mut corpus = sentences(&["she", "reads", "sings"], 4);
        corpus.extend(sentences(&["he", "codes", "lifts"], 4));
        corpus.push(vec!["rare".into(), "she".into()]);
        let space = train_skipgram(
            &corpus,
            &SkipGramParams {
                dimension: 4,
                min_count: 2,
                ..SkipGramParams::default()
            },
        )
        .unwrap();
        assert!(!space.contains("rare"));
        assert!(space.contains("she"));
    }
}
