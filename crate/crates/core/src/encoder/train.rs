//! Composite per-example objective (CE + consistency KL + MLM) and the
//! batch gradient that the teacher and student loops share.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{self, KlDirection};
use super::model::{EncoderModel, Weights, NUM_CLASSES};
use super::ops::Scalar;
use crate::error::Result;
use crate::tokenizer::{EncodedPair, MaskedSequence};

/// One training example. Each optional part switches its loss term on.
/// `noisy` requires `target`: the consistency term compares against the
/// clean prediction.
#[derive(Debug, Clone)]
pub struct Example {
    pub input: EncodedPair,
    pub target: Option<[f64; NUM_CLASSES]>,
    pub noisy: Option<EncodedPair>,
    pub mlm: Option<MaskedSequence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub ce: f64,
    pub kl: f64,
    pub mlm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            ce: 1.0,
            kl: 1.0,
            mlm: 1.0,
        }
    }
}

/// Mean loss terms over a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub kl: f64,
    pub mlm: f64,
    pub total: f64,
    /// Mean entropy of the CE targets; `ce >= target_entropy` always.
    pub target_entropy: f64,
    /// Fraction of examples whose clean argmax equals the target argmax.
    pub accuracy: f64,
}

impl LossBreakdown {
    fn add(&mut self, o: &LossBreakdown) {
        self.ce += o.ce;
        self.kl += o.kl;
        self.mlm += o.mlm;
        self.total += o.total;
        self.target_entropy += o.target_entropy;
        self.accuracy += o.accuracy;
    }

    fn scale(&mut self, s: f64) {
        self.ce *= s;
        self.kl *= s;
        self.mlm *= s;
        self.total *= s;
        self.target_entropy *= s;
        self.accuracy *= s;
    }
}

pub fn argmax(v: &[f64]) -> usize {
    // first maximum wins, so ties go to the lower index
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn to_f<F: Scalar>(v: &[f64]) -> Vec<F> {
    v.iter().map(|&x| F::of(x)).collect()
}

/// Loss terms and parameter gradient for a single example.
pub fn example_gradient<F: Scalar>(
    model: &EncoderModel<F>,
    ex: &Example,
    weights: &LossWeights,
    kl_direction: KlDirection,
) -> Result<(LossBreakdown, Weights<F>)> {
    let mut grads = model.zero_grads();
    let mut parts = LossBreakdown::default();

    if let Some(target) = &ex.target {
        let (out, cache) = model.forward_train(&ex.input.ids, &ex.input.type_mask, &[])?;
        let ce = loss::ce(&out.class_logits, target);
        parts.ce = ce.value;
        parts.target_entropy = -target.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
        parts.accuracy = f64::from(u8::from(argmax(&loss::softmax(&out.class_logits)) == argmax(target)));
        let mut d_class = [F::zero(); NUM_CLASSES];
        for (d, g) in d_class.iter_mut().zip(&ce.grad) {
            *d = F::of(weights.ce * g);
        }
        model.backward(&cache, &d_class, &[], &mut grads);

        if let Some(noisy) = &ex.noisy {
            let (nout, ncache) = model.forward_train(&noisy.ids, &noisy.type_mask, &[])?;
            let kl = loss::kl(&out.class_logits, &nout.class_logits, kl_direction);
            parts.kl = kl.value;
            let mut d = [F::zero(); NUM_CLASSES];
            for (dv, g) in d.iter_mut().zip(&kl.grad) {
                *dv = F::of(weights.kl * g);
            }
            model.backward(&ncache, &d, &[], &mut grads);
        }
    }

    if let Some(masked) = ex.mlm.as_ref().filter(|m| !m.targets.is_empty()) {
        let positions: Vec<usize> = masked.targets.keys().copied().collect();
        let (mout, mcache) = model.forward_train(&masked.ids, &ex.input.type_mask, &positions)?;
        let (value, rows) = loss::mlm(&mout.mlm_logits, &masked.targets);
        parts.mlm = value;
        let d_mlm: Vec<Vec<F>> = rows
            .iter()
            .map(|r| to_f::<F>(&r.iter().map(|g| weights.mlm * g).collect::<Vec<_>>()))
            .collect();
        model.backward(&mcache, &[F::zero(); NUM_CLASSES], &d_mlm, &mut grads);
    }

    parts.total = weights.ce * parts.ce + weights.kl * parts.kl + weights.mlm * parts.mlm;
    Ok((parts, grads))
}

/// Mean loss and mean gradient over a batch. Examples are processed in
/// parallel but summed in input order, so the result does not depend on
/// the thread count.
pub fn batch_gradient<F: Scalar>(
    model: &EncoderModel<F>,
    batch: &[Example],
    weights: &LossWeights,
    kl_direction: KlDirection,
) -> Result<(LossBreakdown, Weights<F>)> {
    let per_example: Vec<(LossBreakdown, Weights<F>)> = batch
        .par_iter()
        .map(|ex| example_gradient(model, ex, weights, kl_direction))
        .collect::<Result<_>>()?;
    let mut total = LossBreakdown::default();
    let mut grads = model.zero_grads();
    for (parts, g) in &per_example {
        total.add(parts);
        grads.add_assign(g);
    }
    let inv = 1.0 / batch.len().max(1) as f64;
    total.scale(inv);
    grads.scale(F::of(inv));
    Ok((total, grads))
}

/// Loss of one example without gradients (used by finite differences).
pub fn example_loss<F: Scalar>(
    model: &EncoderModel<F>,
    ex: &Example,
    weights: &LossWeights,
    kl_direction: KlDirection,
    clean_reference: Option<&[F; NUM_CLASSES]>,
) -> Result<f64> {
    let mut total = 0.0;
    if let Some(target) = &ex.target {
        let out = model.forward(&ex.input.ids, &ex.input.type_mask, &[])?;
        total += weights.ce * loss::ce(&out.class_logits, target).value;
        if let Some(noisy) = &ex.noisy {
            let nout = model.forward(&noisy.ids, &noisy.type_mask, &[])?;
            let reference = clean_reference.unwrap_or(&out.class_logits);
            total += weights.kl * loss::kl(reference, &nout.class_logits, kl_direction).value;
        }
    }
    if let Some(masked) = ex.mlm.as_ref().filter(|m| !m.targets.is_empty()) {
        let positions: Vec<usize> = masked.targets.keys().copied().collect();
        let mout = model.forward(&masked.ids, &ex.input.type_mask, &positions)?;
        total += weights.mlm * loss::mlm(&mout.mlm_logits, &masked.targets).0;
    }
    Ok(total)
}

/// Optimizer and objective settings for [`train_epoch`].
#[derive(Debug, Clone, Copy)]
pub struct EpochSettings {
    pub batch_size: usize,
    pub weights: LossWeights,
    pub kl_direction: KlDirection,
}

/// Statistics of one pass over the data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub mean: LossBreakdown,
    /// Total loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    /// Batches whose mean CE fell below the mean target entropy (must be 0).
    pub gibbs_violations: usize,
}

/// One epoch: visit `0..n_items` in a seeded random order, build each batch
/// with `make`, and take one optimizer step per batch.
pub fn train_epoch<F, M>(
    model: &mut EncoderModel<F>,
    opt: &mut super::Optimizer<F>,
    n_items: usize,
    order_seed: u64,
    settings: &EpochSettings,
    make: M,
) -> Result<EpochStats>
where
    F: Scalar,
    M: Fn(usize) -> Result<Example> + Sync,
{
    use rand::seq::SliceRandom;

    let mut order: Vec<usize> = (0..n_items).collect();
    order.shuffle(&mut crate::seed::rng_from(order_seed));
    let mut stats = EpochStats::default();
    let mut n_batches = 0usize;
    for chunk in order.chunks(settings.batch_size.max(1)) {
        let batch: Vec<Example> = chunk.par_iter().map(|&i| make(i)).collect::<Result<_>>()?;
        let (parts, grads) = batch_gradient(model, &batch, &settings.weights, settings.kl_direction)?;
        if batch.iter().any(|e| e.mlm.as_ref().is_some_and(|m| !m.targets.is_empty())) {
            model.mlm_trained = true;
        }
        if batch.iter().any(|e| e.target.is_some()) && parts.ce < parts.target_entropy - 1e-9 {
            stats.gibbs_violations += 1;
        }
        opt.step(model, &grads)?;
        stats.step_losses.push(parts.total);
        stats.mean.add(&parts);
        n_batches += 1;
    }
    stats.mean.scale(1.0 / n_batches.max(1) as f64);
    Ok(stats)
}
