//! Small pre-norm transformer encoder with a three-way classifier over the
//! `[CLS]` position and a weight-tied MLM head, with hand-written backward
//! passes.

mod checkpoint;
pub mod loss;
mod model;
pub mod ops;
mod optim;
pub mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use loss::{loss_ce, loss_kl, loss_mlm, softmax, KlDirection};
pub use model::{EncoderModel, ForwardCache, ForwardOutput, LayerWeights, ModelConfig, Tensor, Weights, NUM_CLASSES};
pub use ops::Scalar;
pub use optim::{sgd_step, Adam, Optimizer, OptimizerKind, Sgd, StepInfo};

use crate::error::Result;
use crate::tokenizer::EncodedPair;

impl<F: Scalar> EncoderModel<F> {
    /// Class logits for an encoded pair.
    pub fn classify(&self, encoded: &EncodedPair) -> Result<[F; NUM_CLASSES]> {
        Ok(self.forward(&encoded.ids, &encoded.type_mask, &[])?.class_logits)
    }

    /// Softmax over the class logits, in f64.
    pub fn class_probs(&self, encoded: &EncodedPair) -> Result<[f64; NUM_CLASSES]> {
        let p = softmax(&self.classify(encoded)?);
        Ok([p[0], p[1], p[2]])
    }
}
