//! Teacher training on the human-labeled base set, and the training
//! configuration shared by every model in the pipeline.

use std::collections::BTreeSet;

use log::info;
use serde::{Deserialize, Serialize};

use crate::corpus::{ContextResponsePair, LabeledPair, PairLabel};
use crate::encoder::loss::KlDirection;
use crate::encoder::train::{argmax, train_epoch, EpochSettings, Example, LossWeights};
use crate::encoder::{loss, EncoderModel, ModelConfig, Optimizer, OptimizerKind, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::seed::derive;
use crate::selftrain::SoftLabel;
use crate::tokenizer::{encode_pair, EncodedPair, Vocabulary};

/// Encoder shape, without the data-dependent vocabulary size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub embed_std: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        ArchConfig {
            d_model: m.d_model,
            n_layers: m.n_layers,
            n_heads: m.n_heads,
            d_ff: m.d_ff,
            embed_std: m.embed_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossTerm {
    Ce,
    Mlm,
    Kl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub drop_prob: f64,
    pub replace_prob: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            drop_prob: 0.1,
            replace_prob: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentInit {
    #[default]
    FromScratch,
    FromTeacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// SGD only.
    pub momentum: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub max_seq_len: usize,
    pub mask_prob: f64,
    pub loss_flags: BTreeSet<LossTerm>,
    pub loss_weights: LossWeights,
    pub kl_direction: KlDirection,
    pub confidence_threshold: f64,
    pub noise: NoiseConfig,
    /// Validate every this many optimizer steps; 0 means once per epoch.
    pub eval_every: usize,
    pub val_fraction: f64,
    /// Student-only: pairs kept by class balancing (split evenly by class).
    pub target_size: usize,
    pub init: StudentInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchConfig::default(),
            epochs: 10,
            batch_size: 32,
            optimizer: OptimizerKind::Sgd,
            lr: 0.05,
            momentum: 0.9,
            clip_norm: 1.0,
            seed: 0,
            max_seq_len: 128,
            mask_prob: 0.15,
            loss_flags: BTreeSet::from([LossTerm::Ce]),
            loss_weights: LossWeights::default(),
            kl_direction: KlDirection::CleanToNoisy,
            confidence_threshold: 0.70,
            noise: NoiseConfig::default(),
            eval_every: 0,
            val_fraction: 0.1,
            target_size: 600_000,
            init: StudentInit::FromScratch,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("train config: {m}")));
        let t = self.confidence_threshold;
        if !(t > 1.0 / 3.0 && t < 1.0) {
            return bad(format!("confidence_threshold must be in (1/3, 1), got {t}"));
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return bad(format!("mask_prob must be in [0, 1], got {}", self.mask_prob));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must be in [0, 1), got {}", self.val_fraction));
        }
        for (n, p) in [("drop_prob", self.noise.drop_prob), ("replace_prob", self.noise.replace_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("noise.{n} must be in [0, 1], got {p}"));
            }
        }
        if self.max_seq_len < 8 {
            return bad("max_seq_len must be at least 8".into());
        }
        self.model_config(crate::tokenizer::NUM_SPECIALS + 1).validate()
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.arch.d_model,
            n_layers: self.arch.n_layers,
            n_heads: self.arch.n_heads,
            d_ff: self.arch.d_ff,
            max_seq_len: self.max_seq_len,
            embed_std: self.arch.embed_std,
        }
    }

    pub fn uses(&self, term: LossTerm) -> bool {
        self.loss_flags.contains(&term)
    }

    /// Weights with disabled terms zeroed.
    pub fn effective_weights(&self) -> LossWeights {
        let w = self.loss_weights;
        LossWeights {
            ce: if self.uses(LossTerm::Ce) { w.ce } else { 0.0 },
            kl: if self.uses(LossTerm::Kl) { w.kl } else { 0.0 },
            mlm: if self.uses(LossTerm::Mlm) { w.mlm } else { 0.0 },
        }
    }
}

/// Held-out evaluation of one checkpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val: EvalStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    /// Every optimizer step's loss in order.
    pub step_losses: Vec<f64>,
    pub best_step: usize,
    pub best_val_accuracy: f64,
    pub train_size: usize,
    pub val_size: usize,
}

/// Mean CE and accuracy of `model` against the targets.
pub fn evaluate_targets(model: &EncoderModel, data: &[(EncodedPair, [f64; NUM_CLASSES])]) -> Result<EvalStats> {
    use rayon::prelude::*;
    if data.is_empty() {
        return Ok(EvalStats::default());
    }
    let per: Vec<(f64, f64)> = data
        .par_iter()
        .map(|(e, t)| {
            let logits = model.classify(e)?;
            let hit = argmax(&loss::softmax(&logits)) == argmax(t);
            Ok((loss::loss_ce(&logits, t), f64::from(u8::from(hit))))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    Ok(EvalStats {
        loss: per.iter().map(|p| p.0).sum::<f64>() / n,
        accuracy: per.iter().map(|p| p.1).sum::<f64>() / n,
    })
}

/// Validation membership by hashed group key; pairs sharing a context share
/// a key and so land on the same side.
pub(crate) fn split_by_group<T>(
    items: Vec<T>,
    key: impl Fn(&T) -> String,
    fraction: f64,
    seed: u64,
) -> (Vec<T>, Vec<T>) {
    let buckets = 10_000u64;
    let cut = (fraction * buckets as f64).round() as u64;
    let mut train = Vec::new();
    let mut val = Vec::new();
    for it in items {
        if derive(seed, &[&"split", &key(&it)]) % buckets < cut {
            val.push(it);
        } else {
            train.push(it);
        }
    }
    (train, val)
}

pub(crate) fn context_key(pair: &ContextResponsePair) -> String {
    pair.context.join("\u{1f}")
}

/// Model plus its training trace.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: EncoderModel,
    pub report: TrainReport,
}

/// Minimize mean CE over the base set; returns the checkpoint with the best
/// validation accuracy (earliest on ties).
pub fn train_teacher(base: &[LabeledPair], vocab: &Vocabulary, config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    let present: BTreeSet<PairLabel> = base.iter().map(|p| p.label).collect();
    let missing: Vec<PairLabel> = PairLabel::ALL.into_iter().filter(|l| !present.contains(l)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing));
    }
    let encoded: Vec<(EncodedPair, [f64; NUM_CLASSES])> = base
        .iter()
        .map(|lp| (encode_pair(&lp.pair, vocab, config.max_seq_len), lp.label.one_hot()))
        .collect();
    let keyed: Vec<(String, (EncodedPair, [f64; NUM_CLASSES]))> =
        base.iter().map(|lp| context_key(&lp.pair)).zip(encoded).collect();
    let (train, val) = split_by_group(keyed, |(k, _)| k.clone(), config.val_fraction, config.seed);
    let train: Vec<_> = train.into_iter().map(|(_, x)| x).collect();
    let mut val: Vec<_> = val.into_iter().map(|(_, x)| x).collect();
    if val.is_empty() {
        // tiny sets: fall back to scoring on the training data
        val = train.clone();
    }
    fit_classifier(&train, &val, vocab, config, None, true)
}

/// Shared classifier loop: teacher (hard targets) and student (soft targets
/// plus optional KL/MLM via `extra`).
pub(crate) fn fit_classifier(
    train: &[(EncodedPair, [f64; NUM_CLASSES])],
    val: &[(EncodedPair, [f64; NUM_CLASSES])],
    vocab: &Vocabulary,
    config: &TrainConfig,
    extra: Option<&(dyn Fn(usize, usize) -> Result<Example> + Sync)>,
    keep_best: bool,
) -> Result<Trained> {
    let model = EncoderModel::new(config.model_config(vocab.len()), derive(config.seed, &[&"init"]))?;
    fit_from(model, train, val, config, extra, keep_best)
}

pub(crate) fn fit_from(
    mut model: EncoderModel,
    train: &[(EncodedPair, [f64; NUM_CLASSES])],
    val: &[(EncodedPair, [f64; NUM_CLASSES])],
    config: &TrainConfig,
    extra: Option<&(dyn Fn(usize, usize) -> Result<Example> + Sync)>,
    keep_best: bool,
) -> Result<Trained> {
    let mut opt = Optimizer::new(config.optimizer, config.lr, config.momentum, config.clip_norm);
    let settings = EpochSettings {
        batch_size: config.batch_size,
        weights: config.effective_weights(),
        kl_direction: config.kl_direction,
    };
    let mut report = TrainReport {
        train_size: train.len(),
        val_size: val.len(),
        ..TrainReport::default()
    };
    let mut best: Option<(f64, EncoderModel)> = None;
    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    for epoch in 0..config.epochs {
        let stats = train_epoch(
            &mut model,
            &mut opt,
            train.len(),
            derive(config.seed, &[&"order", &epoch]),
            &settings,
            |i| match extra {
                Some(make) => make(i, epoch),
                None => Ok(Example {
                    input: train[i].0.clone(),
                    target: Some(train[i].1),
                    noisy: None,
                    mlm: None,
                }),
            },
        )?;
        report.step_losses.extend(&stats.step_losses);
        let step = (epoch + 1) * steps_per_epoch;
        let v = evaluate_targets(&model, val)?;
        info!(
            "epoch {epoch}: loss {:.4} (ce {:.4} kl {:.4} mlm {:.4}) acc {:.3} | val loss {:.4} acc {:.3}",
            stats.mean.total, stats.mean.ce, stats.mean.kl, stats.mean.mlm, stats.mean.accuracy, v.loss, v.accuracy
        );
        report.records.push(EpochRecord {
            epoch,
            step,
            train_loss: stats.mean.total,
            train_accuracy: stats.mean.accuracy,
            val: v,
        });
        if best.as_ref().is_none_or(|(acc, _)| v.accuracy > *acc) {
            report.best_step = step;
            report.best_val_accuracy = v.accuracy;
            best = Some((v.accuracy, model.clone()));
        }
    }
    let model = match (keep_best, best) {
        (true, Some((_, m))) => m,
        _ => model,
    };
    Ok(Trained { model, report })
}

/// Teacher's class distribution for a pair.
pub fn teacher_predict(model: &EncoderModel, vocab: &Vocabulary, pair: &ContextResponsePair) -> Result<SoftLabel> {
    let encoded = encode_pair(pair, vocab, model.config.max_seq_len);
    SoftLabel::new(model.class_probs(&encoded)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for t in [1.0 / 3.0, 1.0, 0.2] {
            let c = TrainConfig {
                confidence_threshold: t,
                ..TrainConfig::default()
            };
            assert!(c.validate().is_err(), "{t}");
        }
        let c = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn loss_flags_parse_as_lowercase() {
        let c: TrainConfig = toml::from_str("loss_flags = [\"ce\", \"mlm\", \"kl\"]").unwrap();
        assert!(c.uses(LossTerm::Kl) && c.uses(LossTerm::Mlm) && c.uses(LossTerm::Ce));
        assert_eq!(c.effective_weights(), LossWeights::default());
        let c = TrainConfig::default();
        assert_eq!(c.effective_weights().kl, 0.0);
    }

    #[test]
    fn split_keeps_groups_together() {
        let items: Vec<(String, usize)> = (0..500).map(|i| (format!("ctx{}", i / 5), i)).collect();
        let (train, val) = split_by_group(items, |(k, _)| k.clone(), 0.1, 3);
        let tk: BTreeSet<_> = train.iter().map(|x| x.0.clone()).collect();
        let vk: BTreeSet<_> = val.iter().map(|x| x.0.clone()).collect();
        assert!(tk.is_disjoint(&vk));
        assert!(val.len() > 10 && val.len() < 100, "{}", val.len());
    }
}
