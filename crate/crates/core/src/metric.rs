//! Run-time scoring: the probability a model assigns to "relevant".

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ContextResponsePair, PairLabel};
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::tokenizer::{encode_pair, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub pair_id: String,
    pub score: f64,
}

pub fn score(model: &EncoderModel, vocab: &Vocabulary, pair: &ContextResponsePair) -> Result<MetricScore> {
    let encoded = encode_pair(pair, vocab, model.config.max_seq_len);
    let p = model.class_probs(&encoded)?;
    let s = p[PairLabel::Relevant.index()];
    if !s.is_finite() {
        return Err(Error::NonFinite(format!("score for {}", pair.pair_id)));
    }
    Ok(MetricScore {
        pair_id: pair.pair_id.clone(),
        score: s,
    })
}

/// Scores in input order. Each score depends only on its own pair, so the
/// result is identical for any `parallelism`.
pub fn score_batch(
    model: &EncoderModel,
    vocab: &Vocabulary,
    pairs: &[ContextResponsePair],
    parallelism: usize,
) -> Result<Vec<MetricScore>> {
    if parallelism == 0 {
        return Err(Error::InvalidInput("parallelism must be at least 1".into()));
    }
    if parallelism == 1 {
        return pairs.iter().map(|p| score(model, vocab, p)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| pairs.par_iter().map(|p| score(model, vocab, p)).collect())
}

pub fn save_scores(path: &Path, scores: &[MetricScore]) -> Result<()> {
    jsonl::write(path, scores)
}

pub fn load_scores(path: &Path) -> Result<Vec<MetricScore>> {
    jsonl::read(path)
}
