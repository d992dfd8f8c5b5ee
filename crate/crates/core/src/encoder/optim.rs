use super::model::{EncoderModel, Weights};
use super::ops::Scalar;
use crate::error::{Error, Result};

/// Outcome of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Multiplier applied by clipping (1.0 when under the limit).
    pub clip_scale: f64,
}

fn clip_scale(norm: f64, clip_norm: f64) -> f64 {
    if clip_norm > 0.0 && norm > clip_norm {
        clip_norm / norm
    } else {
        1.0
    }
}

fn ensure_finite<F: Scalar>(w: &Weights<F>, what: &str) -> Result<()> {
    match w.first_non_finite() {
        Some(block) => Err(Error::NonFinite(format!("{what} {block}"))),
        None => Ok(()),
    }
}

/// Plain SGD with global-norm clipping: `θ ← θ − lr · min(1, c/‖g‖) · g`.
pub fn sgd_step<F: Scalar>(model: &mut EncoderModel<F>, grads: &Weights<F>, lr: f64, clip_norm: f64) -> Result<StepInfo> {
    assert!(lr >= 0.0, "learning rate must be non-negative");
    ensure_finite(grads, "gradient")?;
    let grad_norm = grads.l2_norm();
    let s = clip_scale(grad_norm, clip_norm);
    let step = F::of(lr * s);
    for ((_, p), (_, g)) in model.weights.blocks_mut().into_iter().zip(grads.blocks()) {
        for (pv, &gv) in p.data.iter_mut().zip(&g.data) {
            *pv = *pv - step * gv;
        }
    }
    ensure_finite(&model.weights, "parameter")?;
    Ok(StepInfo {
        grad_norm,
        clip_scale: s,
    })
}

/// SGD with heavy-ball momentum and global-norm clipping.
#[derive(Debug, Clone)]
pub struct Sgd<F> {
    pub lr: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    velocity: Option<Weights<F>>,
}

impl<F: Scalar> Sgd<F> {
    pub fn new(lr: f64, momentum: f64, clip_norm: f64) -> Self {
        Sgd {
            lr,
            momentum,
            clip_norm,
            velocity: None,
        }
    }

    pub fn step(&mut self, model: &mut EncoderModel<F>, grads: &Weights<F>) -> Result<StepInfo> {
        ensure_finite(grads, "gradient")?;
        let grad_norm = grads.l2_norm();
        let s = F::of(clip_scale(grad_norm, self.clip_norm));
        let mu = F::of(self.momentum);
        let lr = F::of(self.lr);
        let velocity = self.velocity.get_or_insert_with(|| model.zero_grads());
        for (((_, p), (_, v)), (_, g)) in model
            .weights
            .blocks_mut()
            .into_iter()
            .zip(velocity.blocks_mut())
            .zip(grads.blocks())
        {
            for ((pv, vv), &gv) in p.data.iter_mut().zip(v.data.iter_mut()).zip(&g.data) {
                *vv = mu * *vv + s * gv;
                *pv = *pv - lr * *vv;
            }
        }
        ensure_finite(&model.weights, "parameter")?;
        Ok(StepInfo {
            grad_norm,
            clip_scale: s.as_f64(),
        })
    }
}

/// Adam with bias correction; the gradient is clipped by global norm first.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    t: u64,
    moments: Option<(Weights<F>, Weights<F>)>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(lr: f64, clip_norm: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm,
            t: 0,
            moments: None,
        }
    }

    pub fn step(&mut self, model: &mut EncoderModel<F>, grads: &Weights<F>) -> Result<StepInfo> {
        ensure_finite(grads, "gradient")?;
        let grad_norm = grads.l2_norm();
        let s = F::of(clip_scale(grad_norm, self.clip_norm));
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (F::of(self.beta1), F::of(self.beta2));
        let one = F::one();
        let step = F::of(self.lr * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t)));
        let eps = F::of(self.eps);
        let (m, v) = self.moments.get_or_insert_with(|| (model.zero_grads(), model.zero_grads()));
        for ((((_, p), (_, mb)), (_, vb)), (_, g)) in model
            .weights
            .blocks_mut()
            .into_iter()
            .zip(m.blocks_mut())
            .zip(v.blocks_mut())
            .zip(grads.blocks())
        {
            for (((pv, mv), vv), &gv) in p.data.iter_mut().zip(mb.data.iter_mut()).zip(vb.data.iter_mut()).zip(&g.data) {
                let g = s * gv;
                *mv = b1 * *mv + (one - b1) * g;
                *vv = b2 * *vv + (one - b2) * g * g;
                *pv = *pv - step * *mv / (vv.sqrt() + eps);
            }
        }
        ensure_finite(&model.weights, "parameter")?;
        Ok(StepInfo {
            grad_norm,
            clip_scale: s.as_f64(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

/// Either optimizer behind one `step`.
#[derive(Debug, Clone)]
pub enum Optimizer<F> {
    Sgd(Sgd<F>),
    Adam(Adam<F>),
}

impl<F: Scalar> Optimizer<F> {
    pub fn new(kind: OptimizerKind, lr: f64, momentum: f64, clip_norm: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd(Sgd::new(lr, momentum, clip_norm)),
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(lr, clip_norm)),
        }
    }

    pub fn step(&mut self, model: &mut EncoderModel<F>, grads: &Weights<F>) -> Result<StepInfo> {
        match self {
            Optimizer::Sgd(o) => o.step(model, grads),
            Optimizer::Adam(o) => o.step(model, grads),
        }
    }
}
