#![allow(dead_code)]

use mdd_eval::encoder::train::{example_gradient, example_loss, Example, LossWeights};
use mdd_eval::encoder::{EncoderModel, KlDirection, ModelConfig, NUM_CLASSES};
use mdd_eval::seed::rng_from;
use mdd_eval::tokenizer::{apply_mlm_mask, EncodedPair, Segment, CLS, NUM_SPECIALS, SEP};
use rand::Rng;

pub fn tiny_config(vocab: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        d_ff: 16,
        max_seq_len: 16,
        embed_std: 0.5,
    }
}

/// Random `[CLS] ctx [SEP] resp [SEP]` sequence of exactly `len` tokens.
pub fn random_encoded(rng: &mut impl Rng, vocab: usize, len: usize) -> EncodedPair {
    let body = len - 3;
    let n_ctx = rng.gen_range(1..body);
    let mut ids = vec![CLS];
    ids.extend((0..n_ctx).map(|_| rng.gen_range(NUM_SPECIALS as u32..vocab as u32)));
    ids.push(SEP);
    ids.extend((0..body - n_ctx).map(|_| rng.gen_range(NUM_SPECIALS as u32..vocab as u32)));
    ids.push(SEP);
    let type_mask = (0..len)
        .map(|i| if i <= n_ctx + 1 { Segment::Context } else { Segment::Response })
        .collect();
    EncodedPair { ids, type_mask }
}

/// Tiny f64 model with a non-zero classifier head so every loss term has a
/// non-trivial gradient.
pub fn tiny_model(seed: u64, vocab: usize) -> EncoderModel<f64> {
    let mut m = EncoderModel::<f64>::new(tiny_config(vocab), seed).unwrap();
    let mut rng = rng_from(seed ^ 0xabc);
    for v in m.weights.cls_w.data.iter_mut().chain(m.weights.cls_b.data.iter_mut()) {
        *v = rng.gen_range(-0.5..0.5);
    }
    for v in m.weights.mlm_b.data.iter_mut() {
        *v = rng.gen_range(-0.2..0.2);
    }
    for l in m.weights.layers.iter_mut() {
        for v in l.ln1_g.data.iter_mut().chain(l.ln2_g.data.iter_mut()) {
            *v += rng.gen_range(-0.2..0.2);
        }
        for v in l.ln1_b.data.iter_mut().chain(l.b1.data.iter_mut()) {
            *v = rng.gen_range(-0.1..0.1);
        }
    }
    m
}

/// Per-block relative error `‖a − n‖ / max(‖a‖, ‖n‖)` between analytic and
/// central-difference gradients of one example's loss. Blocks whose
/// gradients are both (numerically) zero report 0.
pub fn gradient_check(
    model: &EncoderModel<f64>,
    ex: &Example,
    weights: &LossWeights,
    h: f64,
) -> Vec<(String, f64)> {
    let dir = KlDirection::CleanToNoisy;
    let reference: [f64; NUM_CLASSES] = model.classify(&ex.input).unwrap();
    let (_, analytic) = example_gradient(model, ex, weights, dir).unwrap();
    let mut probe = model.clone();
    let mut out = Vec::new();
    let names: Vec<String> = model.weights.blocks().into_iter().map(|(n, _)| n).collect();
    for (bi, name) in names.iter().enumerate() {
        let len = model.weights.blocks()[bi].1.data.len();
        let mut numeric = vec![0.0; len];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = model.weights.blocks()[bi].1.data[i];
            probe.weights.blocks_mut()[bi].1.data[i] = orig + h;
            let plus = example_loss(&probe, ex, weights, dir, Some(&reference)).unwrap();
            probe.weights.blocks_mut()[bi].1.data[i] = orig - h;
            let minus = example_loss(&probe, ex, weights, dir, Some(&reference)).unwrap();
            probe.weights.blocks_mut()[bi].1.data[i] = orig;
            *slot = (plus - minus) / (2.0 * h);
        }
        let a = &analytic.blocks()[bi].1.data;
        let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let denom = na.max(nn);
        // identically-zero blocks (e.g. key bias under softmax shift invariance)
        // are compared absolutely
        let rel = if denom < 1e-7 { diff } else { diff / denom };
        out.push((name.clone(), rel));
    }
    out
}

pub fn loss_only(ce: f64, kl: f64, mlm: f64) -> LossWeights {
    LossWeights { ce, kl, mlm }
}

/// One example exercising every loss term on a random tiny input.
pub fn random_example(seed: u64, vocab: usize, len: usize) -> Example {
    let mut rng = rng_from(seed);
    let input = random_encoded(&mut rng, vocab, len);
    let mut noisy = input.clone();
    let r = noisy.response_range();
    for p in r {
        if rng.gen_bool(0.5) {
            noisy.ids[p] = rng.gen_range(NUM_SPECIALS as u32..vocab as u32);
        }
    }
    let mut mlm = apply_mlm_mask(&input, 0.3, vocab, seed);
    if mlm.targets.is_empty() {
        mlm.targets.insert(1, input.ids[1]);
        mlm.ids[1] = mdd_eval::tokenizer::MASK;
    }
    let raw: Vec<f64> = (0..NUM_CLASSES).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    Example {
        input,
        target: Some([raw[0] / s, raw[1] / s, raw[2] / s]),
        noisy: Some(noisy),
        mlm: Some(mlm),
    }
}
