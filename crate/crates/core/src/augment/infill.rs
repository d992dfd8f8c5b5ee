use std::collections::BTreeMap;
use std::ops::Range;

use log::info;
use rand::Rng;

use crate::corpus::{ContextResponsePair, Origin};
use crate::encoder::train::{train_epoch, EpochSettings, Example, LossWeights};
use crate::encoder::{EncoderModel, Optimizer};
use crate::error::{Error, Result};
use crate::seed::{derive, rng_from};
use crate::teacher::TrainConfig;
use crate::tokenizer::{encode_parts, is_special, tokenize, EncodedPair, MaskedSequence, Vocabulary, BLANK};

/// Predicts tokens for `[BLANK]` positions.
pub trait Infiller {
    fn vocab(&self) -> &Vocabulary;
    fn max_seq_len(&self) -> usize;
    /// One vocabulary-sized logit row per position.
    fn blank_logits(&self, encoded: &EncodedPair, positions: &[usize]) -> Result<Vec<Vec<f64>>>;
}

/// The encoder's own MLM head used as the infiller.
pub struct MlmInfiller<'a> {
    model: &'a EncoderModel,
    vocab: &'a Vocabulary,
}

impl<'a> MlmInfiller<'a> {
    pub fn new(model: &'a EncoderModel, vocab: &'a Vocabulary) -> Result<Self> {
        if !model.mlm_trained {
            return Err(Error::UntrainedInfiller);
        }
        if model.config.vocab_size != vocab.len() {
            return Err(Error::InvalidInput("infiller vocabulary size mismatch".into()));
        }
        Ok(MlmInfiller { model, vocab })
    }
}

impl Infiller for MlmInfiller<'_> {
    fn vocab(&self) -> &Vocabulary {
        self.vocab
    }

    fn max_seq_len(&self) -> usize {
        self.model.config.max_seq_len
    }

    fn blank_logits(&self, encoded: &EncodedPair, positions: &[usize]) -> Result<Vec<Vec<f64>>> {
        let out = self.model.forward(&encoded.ids, &encoded.type_mask, positions)?;
        Ok(out
            .mlm_logits
            .into_iter()
            .map(|row| row.into_iter().map(f64::from).collect())
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FillMode {
    Sample { temperature: f64 },
    Argmax,
}

fn pick(logits: &[f64], mode: FillMode, rng: &mut impl Rng) -> u32 {
    let candidates = (0..logits.len() as u32).filter(|&id| !is_special(id));
    match mode {
        FillMode::Argmax => candidates
            .fold(None::<u32>, |best, id| match best {
                Some(b) if logits[b as usize] >= logits[id as usize] => Some(b),
                _ => Some(id),
            })
            .unwrap_or(crate::tokenizer::UNK),
        FillMode::Sample { temperature } => {
            let ids: Vec<u32> = candidates.collect();
            let max = ids.iter().map(|&i| logits[i as usize]).fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = ids.iter().map(|&i| ((logits[i as usize] - max) / temperature).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            for (&id, w) in ids.iter().zip(&weights) {
                if u < *w {
                    return id;
                }
                u -= w;
            }
            *ids.last().unwrap_or(&crate::tokenizer::UNK)
        }
    }
}

/// Draw a span of `1..=min(span_max, n-1)` tokens out of `n`.
fn draw_span(n: usize, span_max: usize, rng: &mut impl Rng) -> Range<usize> {
    let len = rng.gen_range(1..=span_max.min(n - 1).max(1));
    let start = rng.gen_range(0..=n - len);
    start..start + len
}

/// Like [`mask_and_fill`], also returning the replaced token span.
pub fn mask_and_fill_with_span(
    pair: &ContextResponsePair,
    infiller: &(impl Infiller + ?Sized),
    span_max: usize,
    mode: FillMode,
    seed: u64,
) -> Result<(ContextResponsePair, Range<usize>)> {
    let mut tokens: Vec<String> = tokenize(&pair.response).into_iter().map(String::from).collect();
    let vocab = infiller.vocab();
    let mut encoded = encode_parts(&pair.context, &pair.response, vocab, infiller.max_seq_len());
    let r = encoded.response_range();
    // truncation may have cut the tail of a very long response
    let usable = r.len().min(tokens.len());
    if usable < 2 {
        return Err(Error::InvalidInput(format!(
            "pair {}: mask-and-fill needs a response of at least 2 tokens",
            pair.pair_id
        )));
    }
    let mut rng = rng_from(seed);
    let span = draw_span(usable, span_max.max(1), &mut rng);
    let positions: Vec<usize> = span.clone().map(|i| r.start + i).collect();
    for &p in &positions {
        encoded.ids[p] = BLANK;
    }
    let logits = infiller.blank_logits(&encoded, &positions)?;
    for (i, row) in span.clone().zip(&logits) {
        let id = pick(row, mode, &mut rng);
        tokens[i] = vocab.token(id).unwrap_or("[UNK]").to_string();
    }
    let out = ContextResponsePair {
        pair_id: format!("{}#{}", pair.pair_id, Origin::MaskAndFill),
        context: pair.context.clone(),
        response: tokens.join(" "),
        domain: pair.domain.clone(),
        origin: Origin::MaskAndFill,
        source_pair_id: Some(pair.root_pair_id().to_string()),
    };
    Ok((out, span))
}

/// Replace one contiguous response span with `[BLANK]`s and refill it from
/// the infiller's predictive distribution.
pub fn mask_and_fill(
    pair: &ContextResponsePair,
    infiller: &(impl Infiller + ?Sized),
    span_max: usize,
    mode: FillMode,
    seed: u64,
) -> Result<ContextResponsePair> {
    mask_and_fill_with_span(pair, infiller, span_max, mode, seed).map(|(p, _)| p)
}

/// Train an encoder whose MLM head fills `[BLANK]` spans in responses, the
/// same corruption [`mask_and_fill`] applies at generation time.
pub fn train_infiller(
    pairs: &[ContextResponsePair],
    vocab: &Vocabulary,
    config: &TrainConfig,
    span_max: usize,
) -> Result<EncoderModel> {
    config.validate()?;
    let model_cfg = config.model_config(vocab.len());
    let mut model = EncoderModel::new(model_cfg, derive(config.seed, &[&"infiller-init"]))?;
    let encoded: Vec<EncodedPair> = pairs
        .iter()
        .map(|p| encode_parts(&p.context, &p.response, vocab, config.max_seq_len))
        .collect();
    let mut opt = Optimizer::new(config.optimizer, config.lr, config.momentum, config.clip_norm);
    let settings = EpochSettings {
        batch_size: config.batch_size,
        weights: LossWeights {
            ce: 0.0,
            kl: 0.0,
            mlm: 1.0,
        },
        kl_direction: config.kl_direction,
    };
    for epoch in 0..config.epochs {
        let stats = train_epoch(
            &mut model,
            &mut opt,
            encoded.len(),
            derive(config.seed, &[&"infiller-order", &epoch]),
            &settings,
            |i| {
                let e = &encoded[i];
                let r = e.response_range();
                let mut ids = e.ids.clone();
                let mut targets = BTreeMap::new();
                if r.len() >= 2 {
                    let mut rng = rng_from(derive(config.seed, &[&"infiller-span", &epoch, &pairs[i].pair_id]));
                    for off in draw_span(r.len(), span_max.max(1), &mut rng) {
                        targets.insert(r.start + off, ids[r.start + off]);
                        ids[r.start + off] = BLANK;
                    }
                }
                Ok(Example {
                    input: e.clone(),
                    target: None,
                    noisy: None,
                    mlm: Some(MaskedSequence { ids, targets }),
                })
            },
        )?;
        info!("infiller epoch {epoch}: mlm {:.4}", stats.mean.mlm);
    }
    Ok(model)
}
