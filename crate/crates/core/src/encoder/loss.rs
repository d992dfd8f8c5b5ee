//! Cross-entropy, consistency KL, and masked-LM losses with their gradients
//! w.r.t. the logits. All reductions run in f64.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ops::Scalar;

/// Loss value plus d(loss)/d(logits).
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<f64> {
    let max = logits.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v.as_f64() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax<F: Scalar>(logits: &[F]) -> Vec<f64> {
    let max = logits.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v.as_f64() - lse).collect()
}

/// `-Σ target_k · log softmax(logits)_k`; target may be one-hot or soft.
pub fn ce<F: Scalar>(logits: &[F], target: &[f64]) -> LossGrad {
    assert_eq!(logits.len(), target.len());
    let logp = log_softmax(logits);
    let value = -target.iter().zip(&logp).map(|(t, l)| if *t == 0.0 { 0.0 } else { t * l }).sum::<f64>();
    let tsum: f64 = target.iter().sum();
    let grad = logp.iter().zip(target).map(|(l, t)| l.exp() * tsum - t).collect();
    LossGrad { value, grad }
}

pub fn loss_ce<F: Scalar>(logits: &[F], target: &[f64]) -> f64 {
    ce(logits, target).value
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// KL(clean ‖ noisy).
    #[default]
    CleanToNoisy,
    /// Mean of both directions.
    Symmetric,
}

/// Consistency loss between a clean reference distribution and the noisy
/// prediction. The clean side is treated as a constant: the gradient is
/// w.r.t. the noisy logits only.
pub fn kl<F: Scalar>(logits_clean: &[F], logits_noisy: &[F], direction: KlDirection) -> LossGrad {
    let logp = log_softmax(logits_clean);
    let logq = log_softmax(logits_noisy);
    let p: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
    let q: Vec<f64> = logq.iter().map(|v| v.exp()).collect();
    let forward: f64 = p.iter().zip(logp.iter().zip(&logq)).map(|(pk, (lp, lq))| pk * (lp - lq)).sum();
    let forward_grad: Vec<f64> = q.iter().zip(&p).map(|(qk, pk)| qk - pk).collect();
    match direction {
        KlDirection::CleanToNoisy => LossGrad {
            value: forward,
            grad: forward_grad,
        },
        KlDirection::Symmetric => {
            // d/dz_q KL(q‖p) = q ⊙ (a - Σ q a), a = log q - log p
            let a: Vec<f64> = logq.iter().zip(&logp).map(|(lq, lp)| lq - lp).collect();
            let reverse: f64 = q.iter().zip(&a).map(|(qk, ak)| qk * ak).sum();
            let grad = forward_grad
                .iter()
                .zip(q.iter().zip(&a))
                .map(|(fg, (qk, ak))| 0.5 * (fg + qk * (ak - reverse)))
                .collect();
            LossGrad {
                value: 0.5 * (forward + reverse),
                grad,
            }
        }
    }
}

pub fn loss_kl<F: Scalar>(logits_clean: &[F], logits_noisy: &[F]) -> f64 {
    kl(logits_clean, logits_noisy, KlDirection::CleanToNoisy).value
}

/// Mean cross-entropy over masked positions. `rows[i]` holds the logits for
/// the i-th target in position order. Empty targets give zero loss.
pub fn mlm<F: Scalar>(rows: &[Vec<F>], targets: &BTreeMap<usize, u32>) -> (f64, Vec<Vec<f64>>) {
    assert_eq!(rows.len(), targets.len());
    if targets.is_empty() {
        return (0.0, Vec::new());
    }
    let inv = 1.0 / targets.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(rows.len());
    for (row, (_, &t)) in rows.iter().zip(targets) {
        let logp = log_softmax(row);
        total -= logp[t as usize];
        let mut g: Vec<f64> = logp.iter().map(|l| l.exp() * inv).collect();
        g[t as usize] -= inv;
        grads.push(g);
    }
    (total * inv, grads)
}

pub fn loss_mlm<F: Scalar>(rows: &[Vec<F>], targets: &BTreeMap<usize, u32>) -> f64 {
    mlm(rows, targets).0
}
