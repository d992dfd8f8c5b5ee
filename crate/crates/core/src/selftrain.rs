//! Pseudo-labeling, confidence filtering with class balancing, noise
//! injection, and student training with the composite objective.

use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ContextResponsePair, Origin, PairLabel};
use crate::encoder::train::{argmax, Example};
use crate::encoder::{EncoderModel, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::seed::{derive, rng_from};
use crate::teacher::{context_key, fit_from, split_by_group, LossTerm, NoiseConfig, StudentInit, Trained, TrainConfig};
use crate::tokenizer::{apply_mlm_mask, encode_pair, encode_parts, EncodedPair, Vocabulary, NUM_SPECIALS};

const SIMPLEX_TOL: f64 = 1e-6;

/// A probability distribution over (random, adversarial, relevant).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct SoftLabel {
    probs: [f64; NUM_CLASSES],
}

impl SoftLabel {
    pub fn new(probs: [f64; NUM_CLASSES]) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!("soft label {probs:?} is not on the simplex")));
        }
        Ok(SoftLabel { probs })
    }

    pub fn probs(&self) -> [f64; NUM_CLASSES] {
        self.probs
    }

    /// Argmax, ties toward the lower class index.
    pub fn hard_class(&self) -> PairLabel {
        PairLabel::from_index(argmax(&self.probs)).expect("three classes")
    }

    pub fn confidence(&self) -> f64 {
        self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl TryFrom<[f64; 3]> for SoftLabel {
    type Error = Error;
    fn try_from(p: [f64; 3]) -> Result<Self> {
        SoftLabel::new(p)
    }
}

impl From<SoftLabel> for [f64; 3] {
    fn from(s: SoftLabel) -> Self {
        s.probs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedPair {
    pub pair: ContextResponsePair,
    pub soft_label: SoftLabel,
}

impl AnnotatedPair {
    pub fn hard_class(&self) -> PairLabel {
        self.soft_label.hard_class()
    }

    pub fn confidence(&self) -> f64 {
        self.soft_label.confidence()
    }
}

#[derive(Serialize, Deserialize)]
struct AnnotatedRecord {
    pair_id: String,
    context: Vec<String>,
    response: String,
    origin: Origin,
    soft_label: SoftLabel,
    hard_class: PairLabel,
    confidence: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_pair_id: Option<String>,
}

pub fn save_annotated(path: &Path, data: &[AnnotatedPair]) -> Result<()> {
    jsonl::write(
        path,
        data.iter().map(|a| AnnotatedRecord {
            pair_id: a.pair.pair_id.clone(),
            context: a.pair.context.clone(),
            response: a.pair.response.clone(),
            origin: a.pair.origin,
            soft_label: a.soft_label,
            hard_class: a.hard_class(),
            confidence: a.confidence(),
            domain: a.pair.domain.clone(),
            source_pair_id: a.pair.source_pair_id.clone(),
        }),
    )
}

pub fn load_annotated(path: &Path) -> Result<Vec<AnnotatedPair>> {
    let records: Vec<AnnotatedRecord> = jsonl::read(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let soft_label = r.soft_label;
            if soft_label.hard_class() != r.hard_class {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("hard_class {} disagrees with soft_label", r.hard_class),
                });
            }
            let pair = ContextResponsePair {
                pair_id: r.pair_id,
                context: r.context,
                response: r.response,
                domain: r.domain,
                origin: r.origin,
                source_pair_id: r.source_pair_id,
            };
            Ok(AnnotatedPair { pair, soft_label })
        })
        .collect()
}

/// Teacher distribution for every pool pair, in input order.
pub fn pseudo_label(teacher: &EncoderModel, vocab: &Vocabulary, pool: &[ContextResponsePair]) -> Result<Vec<AnnotatedPair>> {
    pool.par_iter()
        .map(|pair| {
            Ok(AnnotatedPair {
                pair: pair.clone(),
                soft_label: crate::teacher::teacher_predict(teacher, vocab, pair)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Balanced {
    pub pairs: Vec<AnnotatedPair>,
    /// Retained per class, in `PairLabel` index order.
    pub counts: [usize; NUM_CLASSES],
    /// How far each class fell short of `target_size / 3`.
    pub shortfall: [usize; NUM_CLASSES],
    /// Pairs surviving the confidence threshold, before balancing.
    pub above_threshold: usize,
}

/// Keep pairs with confidence ≥ `threshold`, then sample `target_size / 3`
/// per hard class. Survivors keep their input order.
pub fn filter_and_balance(annotated: &[AnnotatedPair], threshold: f64, target_size: usize, seed: u64) -> Result<Balanced> {
    if !(threshold > 1.0 / 3.0 && threshold < 1.0) {
        return Err(Error::InvalidInput(format!("threshold must be in (1/3, 1), got {threshold}")));
    }
    let mut by_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, a) in annotated.iter().enumerate() {
        if a.confidence() >= threshold {
            by_class[a.hard_class().index()].push(i);
        }
    }
    let above_threshold = by_class.iter().map(Vec::len).sum();
    for label in PairLabel::ALL {
        if by_class[label.index()].is_empty() {
            return Err(Error::EmptyClass(label));
        }
    }
    let per_class = target_size / NUM_CLASSES;
    let mut keep = vec![false; annotated.len()];
    let mut counts = [0; NUM_CLASSES];
    let mut shortfall = [0; NUM_CLASSES];
    for label in PairLabel::ALL {
        let members = &by_class[label.index()];
        let mut rng = rng_from(derive(seed, &[&"balance", &label.as_str()]));
        let chosen: Vec<usize> = if members.len() <= per_class {
            shortfall[label.index()] = per_class - members.len();
            if members.len() < per_class {
                warn!("class {label}: {} of {per_class} requested pairs available", members.len());
            }
            members.clone()
        } else {
            members.choose_multiple(&mut rng, per_class).copied().collect()
        };
        counts[label.index()] = chosen.len();
        for i in chosen {
            keep[i] = true;
        }
    }
    let pairs = annotated.iter().zip(&keep).filter(|(_, k)| **k).map(|(a, _)| a.clone()).collect();
    Ok(Balanced {
        pairs,
        counts,
        shortfall,
        above_threshold,
    })
}

/// Per whitespace token: drop with `drop_prob`, otherwise swap for a uniform
/// non-special vocabulary token with `replace_prob`. At least one token
/// survives.
pub fn inject_noise(response: &str, noise: &NoiseConfig, vocab: &Vocabulary, seed: u64) -> String {
    let mut rng = rng_from(seed);
    let toks: Vec<&str> = response.split_whitespace().collect();
    let can_replace = vocab.len() > NUM_SPECIALS;
    let mut out: Vec<&str> = Vec::with_capacity(toks.len());
    for &t in &toks {
        if rng.gen_bool(noise.drop_prob) {
            continue;
        }
        if can_replace && rng.gen_bool(noise.replace_prob) {
            let id = rng.gen_range(NUM_SPECIALS as u32..vocab.len() as u32);
            out.push(vocab.token(id).expect("id in range"));
        } else {
            out.push(t);
        }
    }
    if out.is_empty() {
        if let Some(t) = toks.choose(&mut rng) {
            out.push(t);
        }
    }
    out.join(" ")
}

/// Train the student on filtered pseudo-labeled data. Noise and MLM masks
/// are redrawn each epoch from seeds derived from (epoch, pair_id); with KL
/// off the noise path is skipped entirely. The final model is returned.
pub fn train_student(
    data: &[AnnotatedPair],
    vocab: &Vocabulary,
    config: &TrainConfig,
    teacher: Option<&EncoderModel>,
) -> Result<Trained> {
    config.validate()?;
    if !config.uses(LossTerm::Ce) {
        return Err(Error::InvalidInput("student loss_flags must contain ce".into()));
    }
    if data.is_empty() {
        return Err(Error::InvalidInput("student training set is empty".into()));
    }
    let model = match config.init {
        StudentInit::FromScratch => EncoderModel::new(config.model_config(vocab.len()), derive(config.seed, &[&"init"]))?,
        StudentInit::FromTeacher => {
            let t = teacher.ok_or_else(|| Error::InvalidInput("init = from_teacher needs a teacher checkpoint".into()))?;
            if t.config != config.model_config(vocab.len()) {
                return Err(Error::InvalidInput("teacher architecture differs from the student config".into()));
            }
            t.clone()
        }
    };

    let (train, val) = split_by_group(data.to_vec(), |a| context_key(&a.pair), config.val_fraction, config.seed);
    let encode = |a: &AnnotatedPair| encode_pair(&a.pair, vocab, config.max_seq_len);
    let train_set: Vec<(EncodedPair, [f64; NUM_CLASSES])> = train.iter().map(|a| (encode(a), a.soft_label.probs())).collect();
    let val_set: Vec<(EncodedPair, [f64; NUM_CLASSES])> =
        val.iter().map(|a| (encode(a), a.hard_class().one_hot())).collect();
    info!("student: {} train / {} val pairs", train_set.len(), val_set.len());

    let use_kl = config.uses(LossTerm::Kl);
    let use_mlm = config.uses(LossTerm::Mlm);
    let make = |i: usize, epoch: usize| -> Result<Example> {
        let (input, target) = &train_set[i];
        let pair = &train[i].pair;
        let noisy = use_kl.then(|| {
            let seed = derive(config.seed, &[&"noise", &epoch, &pair.pair_id]);
            let r = inject_noise(&pair.response, &config.noise, vocab, seed);
            encode_parts(&pair.context, &r, vocab, config.max_seq_len)
        });
        let mlm = use_mlm.then(|| {
            let seed = derive(config.seed, &[&"mlm", &epoch, &pair.pair_id]);
            apply_mlm_mask(input, config.mask_prob, vocab.len(), seed)
        });
        Ok(Example {
            input: input.clone(),
            target: Some(*target),
            noisy,
            mlm,
        })
    };
    fit_from(model, &train_set, &val_set, config, Some(&make), false)
}
