use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{self, Scalar};
use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::tokenizer::Segment;

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    /// Std of the token/position/segment embedding init.
    pub embed_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            d_model: 128,
            n_layers: 2,
            n_heads: 4,
            d_ff: 512,
            max_seq_len: 128,
            embed_std: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("model config: {m}")));
        if self.vocab_size <= crate::tokenizer::NUM_SPECIALS {
            return bad("vocab_size must exceed the special-token count");
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad("d_model must be a positive multiple of n_heads");
        }
        if self.d_ff == 0 || self.max_seq_len < 8 {
            return bad("d_ff must be positive and max_seq_len at least 8");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<F> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::of(v); shape.iter().product()],
        }
    }

    fn normal(shape: &[usize], std: f64, rng: &mut impl Rng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| F::of(std * standard_normal(rng))).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::of(v.as_f64())).collect(),
        }
    }
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; u1 in (0, 1] keeps ln finite
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights<F> {
    pub ln1_g: Tensor<F>,
    pub ln1_b: Tensor<F>,
    pub wq: Tensor<F>,
    pub bq: Tensor<F>,
    pub wk: Tensor<F>,
    pub bk: Tensor<F>,
    pub wv: Tensor<F>,
    pub bv: Tensor<F>,
    pub wo: Tensor<F>,
    pub bo: Tensor<F>,
    pub ln2_g: Tensor<F>,
    pub ln2_b: Tensor<F>,
    pub w1: Tensor<F>,
    pub b1: Tensor<F>,
    pub w2: Tensor<F>,
    pub b2: Tensor<F>,
}

/// Every trainable parameter. Gradients and optimizer state use the same
/// shape so they can be walked in lockstep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights<F> {
    pub tok_emb: Tensor<F>,
    pub pos_emb: Tensor<F>,
    pub seg_emb: Tensor<F>,
    pub layers: Vec<LayerWeights<F>>,
    pub lnf_g: Tensor<F>,
    pub lnf_b: Tensor<F>,
    pub cls_w: Tensor<F>,
    pub cls_b: Tensor<F>,
    /// Output bias of the MLM head; its weights are tied to `tok_emb`.
    pub mlm_b: Tensor<F>,
}

impl<F> LayerWeights<F> {
    pub fn named(&self) -> [(&'static str, &Tensor<F>); 16] {
        [
            ("ln1_g", &self.ln1_g),
            ("ln1_b", &self.ln1_b),
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ln2_g", &self.ln2_g),
            ("ln2_b", &self.ln2_b),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut Tensor<F>); 16] {
        [
            ("ln1_g", &mut self.ln1_g),
            ("ln1_b", &mut self.ln1_b),
            ("wq", &mut self.wq),
            ("bq", &mut self.bq),
            ("wk", &mut self.wk),
            ("bk", &mut self.bk),
            ("wv", &mut self.wv),
            ("bv", &mut self.bv),
            ("wo", &mut self.wo),
            ("bo", &mut self.bo),
            ("ln2_g", &mut self.ln2_g),
            ("ln2_b", &mut self.ln2_b),
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
        ]
    }
}

impl<F: Scalar> Weights<F> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (v, d, f, s) = (cfg.vocab_size, cfg.d_model, cfg.d_ff, cfg.max_seq_len);
        let layer = || LayerWeights {
            ln1_g: Tensor::zeros(&[d]),
            ln1_b: Tensor::zeros(&[d]),
            wq: Tensor::zeros(&[d, d]),
            bq: Tensor::zeros(&[d]),
            wk: Tensor::zeros(&[d, d]),
            bk: Tensor::zeros(&[d]),
            wv: Tensor::zeros(&[d, d]),
            bv: Tensor::zeros(&[d]),
            wo: Tensor::zeros(&[d, d]),
            bo: Tensor::zeros(&[d]),
            ln2_g: Tensor::zeros(&[d]),
            ln2_b: Tensor::zeros(&[d]),
            w1: Tensor::zeros(&[d, f]),
            b1: Tensor::zeros(&[f]),
            w2: Tensor::zeros(&[f, d]),
            b2: Tensor::zeros(&[d]),
        };
        Weights {
            tok_emb: Tensor::zeros(&[v, d]),
            pos_emb: Tensor::zeros(&[s, d]),
            seg_emb: Tensor::zeros(&[2, d]),
            layers: (0..cfg.n_layers).map(|_| layer()).collect(),
            lnf_g: Tensor::zeros(&[d]),
            lnf_b: Tensor::zeros(&[d]),
            cls_w: Tensor::zeros(&[d, NUM_CLASSES]),
            cls_b: Tensor::zeros(&[NUM_CLASSES]),
            mlm_b: Tensor::zeros(&[v]),
        }
    }

    /// Random init: normal embeddings, scaled-normal projections, unit layer
    /// norms. The classifier head starts at zero so an untrained model is
    /// exactly uniform over the three classes.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let (v, d, f, s) = (cfg.vocab_size, cfg.d_model, cfg.d_ff, cfg.max_seq_len);
        let e = cfg.embed_std;
        let sd = 1.0 / (d as f64).sqrt();
        let sf = 1.0 / (f as f64).sqrt();
        let tok_emb = Tensor::normal(&[v, d], e, &mut rng);
        let pos_emb = Tensor::normal(&[s, d], e, &mut rng);
        let seg_emb = Tensor::normal(&[2, d], e, &mut rng);
        let layers = (0..cfg.n_layers)
            .map(|_| LayerWeights {
                ln1_g: Tensor::filled(&[d], 1.0),
                ln1_b: Tensor::zeros(&[d]),
                wq: Tensor::normal(&[d, d], sd, &mut rng),
                bq: Tensor::zeros(&[d]),
                wk: Tensor::normal(&[d, d], sd, &mut rng),
                bk: Tensor::zeros(&[d]),
                wv: Tensor::normal(&[d, d], sd, &mut rng),
                bv: Tensor::zeros(&[d]),
                wo: Tensor::normal(&[d, d], sd, &mut rng),
                bo: Tensor::zeros(&[d]),
                ln2_g: Tensor::filled(&[d], 1.0),
                ln2_b: Tensor::zeros(&[d]),
                w1: Tensor::normal(&[d, f], sd, &mut rng),
                b1: Tensor::zeros(&[f]),
                w2: Tensor::normal(&[f, d], sf, &mut rng),
                b2: Tensor::zeros(&[d]),
            })
            .collect();
        Weights {
            tok_emb,
            pos_emb,
            seg_emb,
            layers,
            lnf_g: Tensor::filled(&[d], 1.0),
            lnf_b: Tensor::zeros(&[d]),
            cls_w: Tensor::zeros(&[d, NUM_CLASSES]),
            cls_b: Tensor::zeros(&[NUM_CLASSES]),
            mlm_b: Tensor::zeros(&[v]),
        }
    }

    /// Named blocks in a fixed order.
    pub fn blocks(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out: Vec<(String, &Tensor<F>)> = vec![
            ("tok_emb".into(), &self.tok_emb),
            ("pos_emb".into(), &self.pos_emb),
            ("seg_emb".into(), &self.seg_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (name, t) in l.named() {
                out.push((format!("layers.{i}.{name}"), t));
            }
        }
        out.push(("lnf_g".into(), &self.lnf_g));
        out.push(("lnf_b".into(), &self.lnf_b));
        out.push(("cls_w".into(), &self.cls_w));
        out.push(("cls_b".into(), &self.cls_b));
        out.push(("mlm_b".into(), &self.mlm_b));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let mut out: Vec<(String, &mut Tensor<F>)> = vec![
            ("tok_emb".into(), &mut self.tok_emb),
            ("pos_emb".into(), &mut self.pos_emb),
            ("seg_emb".into(), &mut self.seg_emb),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (name, t) in l.named_mut() {
                out.push((format!("layers.{i}.{name}"), t));
            }
        }
        out.push(("lnf_g".into(), &mut self.lnf_g));
        out.push(("lnf_b".into(), &mut self.lnf_b));
        out.push(("cls_w".into(), &mut self.cls_w));
        out.push(("cls_b".into(), &mut self.cls_b));
        out.push(("mlm_b".into(), &mut self.mlm_b));
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, t)| t.data.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for (_, t) in self.blocks_mut() {
            t.data.fill(F::zero());
        }
    }

    /// `self += other`, block by block in a fixed order.
    pub fn add_assign(&mut self, other: &Weights<F>) {
        for ((_, a), (_, b)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x = *x + y;
            }
        }
    }

    pub fn scale(&mut self, s: F) {
        for (_, t) in self.blocks_mut() {
            for x in t.data.iter_mut() {
                *x = *x * s;
            }
        }
    }

    /// Global L2 norm, accumulated in f64.
    pub fn l2_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|(_, t)| t.data.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// First block containing a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.blocks()
            .into_iter()
            .find(|(_, t)| t.data.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| n)
    }

    pub fn cast<G: Scalar>(&self) -> Weights<G> {
        let mut out = Weights::<G>::zeros_like_shapes(self);
        for ((_, dst), (_, src)) in out.blocks_mut().into_iter().zip(self.blocks()) {
            *dst = src.cast();
        }
        out
    }

    fn zeros_like_shapes<G: Scalar>(other: &Weights<G>) -> Self {
        let d = other.lnf_g.shape[0];
        let cfg = ModelConfig {
            vocab_size: other.tok_emb.shape[0],
            d_model: d,
            n_layers: other.layers.len(),
            n_heads: 1,
            d_ff: other.layers.first().map_or(1, |l| l.b1.shape[0]),
            max_seq_len: other.pos_emb.shape[0],
            embed_std: 0.0,
        };
        Weights::zeros(&cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<F> {
    pub class_logits: [F; NUM_CLASSES],
    /// One vocabulary-sized logit row per requested MLM position.
    pub mlm_logits: Vec<Vec<F>>,
}

#[derive(Debug, Clone)]
struct LayerCache<F> {
    ln1_xhat: Vec<F>,
    ln1_rstd: Vec<F>,
    a: Vec<F>,
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    /// heads × n × n attention probabilities
    probs: Vec<F>,
    o: Vec<F>,
    ln2_xhat: Vec<F>,
    ln2_rstd: Vec<F>,
    c: Vec<F>,
    u: Vec<F>,
    g: Vec<F>,
}

/// Activations retained from a training forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    ids: Vec<u32>,
    segments: Vec<Segment>,
    mlm_positions: Vec<usize>,
    layers: Vec<LayerCache<F>>,
    lnf_xhat: Vec<F>,
    lnf_rstd: Vec<F>,
    h: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel<F = f32> {
    pub config: ModelConfig,
    pub weights: Weights<F>,
    /// Set once the MLM head has received at least one training update.
    pub mlm_trained: bool,
}

impl<F: Scalar> EncoderModel<F> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let weights = Weights::init(&config, seed);
        Ok(EncoderModel {
            config,
            weights,
            mlm_trained: false,
        })
    }

    pub fn cast<G: Scalar>(&self) -> EncoderModel<G> {
        EncoderModel {
            config: self.config.clone(),
            weights: self.weights.cast(),
            mlm_trained: self.mlm_trained,
        }
    }

    pub fn zero_grads(&self) -> Weights<F> {
        Weights::zeros(&self.config)
    }

    fn check_input(&self, ids: &[u32], segments: &[Segment], mlm_positions: &[usize]) -> Result<()> {
        if ids.is_empty() || ids.len() != segments.len() {
            return Err(Error::InvalidInput("ids and segments must be non-empty and aligned".into()));
        }
        if ids.len() > self.config.max_seq_len {
            return Err(Error::InvalidInput(format!(
                "sequence length {} exceeds max_seq_len {}",
                ids.len(),
                self.config.max_seq_len
            )));
        }
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab: self.config.vocab_size,
            });
        }
        if mlm_positions.iter().any(|&p| p >= ids.len()) {
            return Err(Error::InvalidInput("MLM position outside the sequence".into()));
        }
        Ok(())
    }

    /// Inference forward pass. Deterministic; there is no dropout anywhere.
    pub fn forward(&self, ids: &[u32], segments: &[Segment], mlm_positions: &[usize]) -> Result<ForwardOutput<F>> {
        self.forward_train(ids, segments, mlm_positions).map(|(out, _)| out)
    }

    pub fn forward_train(
        &self,
        ids: &[u32],
        segments: &[Segment],
        mlm_positions: &[usize],
    ) -> Result<(ForwardOutput<F>, ForwardCache<F>)> {
        self.check_input(ids, segments, mlm_positions)?;
        let w = &self.weights;
        let cfg = &self.config;
        let (n, d, f) = (ids.len(), cfg.d_model, cfg.d_ff);
        let (nh, dh) = (cfg.n_heads, cfg.head_dim());
        let scale = F::of(1.0 / (dh as f64).sqrt());

        let mut x = vec![F::zero(); n * d];
        for (i, (&id, &seg)) in ids.iter().zip(segments).enumerate() {
            let t = &w.tok_emb.data[id as usize * d..(id as usize + 1) * d];
            let p = &w.pos_emb.data[i * d..(i + 1) * d];
            let s = &w.seg_emb.data[seg as usize * d..(seg as usize + 1) * d];
            for j in 0..d {
                x[i * d + j] = t[j] + p[j] + s[j];
            }
        }

        let mut caches = Vec::with_capacity(cfg.n_layers);
        for lw in &w.layers {
            let (a, ln1_xhat, ln1_rstd) = ops::layer_norm(&x, &lw.ln1_g.data, &lw.ln1_b.data);
            let mut q = vec![F::zero(); n * d];
            let mut k = vec![F::zero(); n * d];
            let mut v = vec![F::zero(); n * d];
            ops::matmul(&a, &lw.wq.data, n, d, d, &mut q);
            ops::add_bias(&mut q, &lw.bq.data);
            ops::matmul(&a, &lw.wk.data, n, d, d, &mut k);
            ops::add_bias(&mut k, &lw.bk.data);
            ops::matmul(&a, &lw.wv.data, n, d, d, &mut v);
            ops::add_bias(&mut v, &lw.bv.data);

            let mut probs = vec![F::zero(); nh * n * n];
            let mut o = vec![F::zero(); n * d];
            for h in 0..nh {
                let off = h * dh;
                for i in 0..n {
                    let row = &mut probs[(h * n + i) * n..(h * n + i + 1) * n];
                    let qi = &q[i * d + off..i * d + off + dh];
                    for (j, r) in row.iter_mut().enumerate() {
                        let kj = &k[j * d + off..j * d + off + dh];
                        *r = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<F>() * scale;
                    }
                    ops::softmax_in_place(row);
                    let oi = &mut o[i * d + off..i * d + off + dh];
                    for (j, &p) in row.iter().enumerate() {
                        let vj = &v[j * d + off..j * d + off + dh];
                        for (ov, &vv) in oi.iter_mut().zip(vj) {
                            *ov = *ov + p * vv;
                        }
                    }
                }
            }
            let mut attn = vec![F::zero(); n * d];
            ops::matmul(&o, &lw.wo.data, n, d, d, &mut attn);
            ops::add_bias(&mut attn, &lw.bo.data);
            for (xv, &av) in x.iter_mut().zip(&attn) {
                *xv = *xv + av;
            }

            let (c, ln2_xhat, ln2_rstd) = ops::layer_norm(&x, &lw.ln2_g.data, &lw.ln2_b.data);
            let mut u = vec![F::zero(); n * f];
            ops::matmul(&c, &lw.w1.data, n, d, f, &mut u);
            ops::add_bias(&mut u, &lw.b1.data);
            let g: Vec<F> = u.iter().map(|&uv| ops::gelu(uv)).collect();
            let mut ffn = vec![F::zero(); n * d];
            ops::matmul(&g, &lw.w2.data, n, f, d, &mut ffn);
            ops::add_bias(&mut ffn, &lw.b2.data);
            for (xv, &fv) in x.iter_mut().zip(&ffn) {
                *xv = *xv + fv;
            }
            caches.push(LayerCache {
                ln1_xhat,
                ln1_rstd,
                a,
                q,
                k,
                v,
                probs,
                o,
                ln2_xhat,
                ln2_rstd,
                c,
                u,
                g,
            });
        }

        let (h, lnf_xhat, lnf_rstd) = ops::layer_norm(&x, &w.lnf_g.data, &w.lnf_b.data);

        let mut class_logits = [F::zero(); NUM_CLASSES];
        class_logits.copy_from_slice(&w.cls_b.data);
        for j in 0..d {
            let hv = h[j];
            for (c, l) in class_logits.iter_mut().enumerate() {
                *l = *l + hv * w.cls_w.data[j * NUM_CLASSES + c];
            }
        }

        let vocab = cfg.vocab_size;
        let mlm_logits = mlm_positions
            .iter()
            .map(|&p| {
                let hp = &h[p * d..(p + 1) * d];
                (0..vocab)
                    .map(|t| {
                        let e = &w.tok_emb.data[t * d..(t + 1) * d];
                        hp.iter().zip(e).map(|(&a, &b)| a * b).sum::<F>() + w.mlm_b.data[t]
                    })
                    .collect()
            })
            .collect();

        let cache = ForwardCache {
            ids: ids.to_vec(),
            segments: segments.to_vec(),
            mlm_positions: mlm_positions.to_vec(),
            layers: caches,
            lnf_xhat,
            lnf_rstd,
            h,
        };
        Ok((
            ForwardOutput {
                class_logits,
                mlm_logits,
            },
            cache,
        ))
    }

    /// Accumulate parameter gradients into `grads` given the loss gradient
    /// w.r.t. the class logits and each requested MLM logit row.
    pub fn backward(&self, cache: &ForwardCache<F>, d_class: &[F; NUM_CLASSES], d_mlm: &[Vec<F>], grads: &mut Weights<F>) {
        assert_eq!(d_mlm.len(), cache.mlm_positions.len(), "one MLM gradient row per position");
        let w = &self.weights;
        let cfg = &self.config;
        let n = cache.ids.len();
        let (d, f) = (cfg.d_model, cfg.d_ff);
        let (nh, dh) = (cfg.n_heads, cfg.head_dim());
        let scale = F::of(1.0 / (dh as f64).sqrt());
        let h = &cache.h;

        let mut dh_all = vec![F::zero(); n * d];
        for j in 0..d {
            let mut acc = F::zero();
            for (c, &dc) in d_class.iter().enumerate() {
                grads.cls_w.data[j * NUM_CLASSES + c] = grads.cls_w.data[j * NUM_CLASSES + c] + h[j] * dc;
                acc = acc + w.cls_w.data[j * NUM_CLASSES + c] * dc;
            }
            dh_all[j] = dh_all[j] + acc;
        }
        for (b, &dc) in grads.cls_b.data.iter_mut().zip(d_class) {
            *b = *b + dc;
        }

        for (&p, dl) in cache.mlm_positions.iter().zip(d_mlm) {
            let hp = &h[p * d..(p + 1) * d];
            let dhp = &mut dh_all[p * d..(p + 1) * d];
            for (t, &g) in dl.iter().enumerate() {
                if g == F::zero() {
                    continue;
                }
                grads.mlm_b.data[t] = grads.mlm_b.data[t] + g;
                let e = &w.tok_emb.data[t * d..(t + 1) * d];
                let de = &mut grads.tok_emb.data[t * d..(t + 1) * d];
                for j in 0..d {
                    dhp[j] = dhp[j] + g * e[j];
                    de[j] = de[j] + g * hp[j];
                }
            }
        }

        let mut dx = vec![F::zero(); n * d];
        ops::layer_norm_backward(
            &dh_all,
            &cache.lnf_xhat,
            &cache.lnf_rstd,
            &w.lnf_g.data,
            &mut grads.lnf_g.data,
            &mut grads.lnf_b.data,
            &mut dx,
        );

        for (li, lc) in cache.layers.iter().enumerate().rev() {
            let lw = &w.layers[li];
            let lg = &mut grads.layers[li];

            // feed-forward sublayer; dx is the residual gradient
            ops::colsum_acc(&dx, d, &mut lg.b2.data);
            ops::matmul_at_acc(&lc.g, &dx, n, f, d, &mut lg.w2.data);
            let mut du = vec![F::zero(); n * f];
            ops::matmul_bt_acc(&dx, &lw.w2.data, n, d, f, &mut du);
            for (dv, &uv) in du.iter_mut().zip(&lc.u) {
                *dv = *dv * ops::gelu_grad(uv);
            }
            ops::colsum_acc(&du, f, &mut lg.b1.data);
            ops::matmul_at_acc(&lc.c, &du, n, d, f, &mut lg.w1.data);
            let mut dc = vec![F::zero(); n * d];
            ops::matmul_bt_acc(&du, &lw.w1.data, n, f, d, &mut dc);
            ops::layer_norm_backward(
                &dc,
                &lc.ln2_xhat,
                &lc.ln2_rstd,
                &lw.ln2_g.data,
                &mut lg.ln2_g.data,
                &mut lg.ln2_b.data,
                &mut dx,
            );

            // attention sublayer
            ops::colsum_acc(&dx, d, &mut lg.bo.data);
            ops::matmul_at_acc(&lc.o, &dx, n, d, d, &mut lg.wo.data);
            let mut d_o = vec![F::zero(); n * d];
            ops::matmul_bt_acc(&dx, &lw.wo.data, n, d, d, &mut d_o);

            let mut dq = vec![F::zero(); n * d];
            let mut dk = vec![F::zero(); n * d];
            let mut dv = vec![F::zero(); n * d];
            let mut dp = vec![F::zero(); n];
            for hd in 0..nh {
                let off = hd * dh;
                for i in 0..n {
                    let prow = &lc.probs[(hd * n + i) * n..(hd * n + i + 1) * n];
                    let doi = &d_o[i * d + off..i * d + off + dh];
                    let mut dot = F::zero();
                    for j in 0..n {
                        let vj = &lc.v[j * d + off..j * d + off + dh];
                        dp[j] = doi.iter().zip(vj).map(|(&a, &b)| a * b).sum();
                        dot = dot + dp[j] * prow[j];
                        let dvj = &mut dv[j * d + off..j * d + off + dh];
                        for (x, &g) in dvj.iter_mut().zip(doi) {
                            *x = *x + prow[j] * g;
                        }
                    }
                    for j in 0..n {
                        let ds = prow[j] * (dp[j] - dot) * scale;
                        if ds == F::zero() {
                            continue;
                        }
                        for t in 0..dh {
                            dq[i * d + off + t] = dq[i * d + off + t] + ds * lc.k[j * d + off + t];
                            dk[j * d + off + t] = dk[j * d + off + t] + ds * lc.q[i * d + off + t];
                        }
                    }
                }
            }
            let mut da = vec![F::zero(); n * d];
            for (dmat, wmat, gw, gb) in [
                (&dq, &lw.wq, &mut lg.wq, &mut lg.bq),
                (&dk, &lw.wk, &mut lg.wk, &mut lg.bk),
                (&dv, &lw.wv, &mut lg.wv, &mut lg.bv),
            ] {
                ops::colsum_acc(dmat, d, &mut gb.data);
                ops::matmul_at_acc(&lc.a, dmat, n, d, d, &mut gw.data);
                ops::matmul_bt_acc(dmat, &wmat.data, n, d, d, &mut da);
            }
            ops::layer_norm_backward(
                &da,
                &lc.ln1_xhat,
                &lc.ln1_rstd,
                &lw.ln1_g.data,
                &mut lg.ln1_g.data,
                &mut lg.ln1_b.data,
                &mut dx,
            );
        }

        for (i, (&id, &seg)) in cache.ids.iter().zip(&cache.segments).enumerate() {
            let dxi = &dx[i * d..(i + 1) * d];
            for (dst, off) in [
                (&mut grads.tok_emb.data, id as usize * d),
                (&mut grads.pos_emb.data, i * d),
                (&mut grads.seg_emb.data, seg as usize * d),
            ] {
                for j in 0..d {
                    dst[off + j] = dst[off + j] + dxi[j];
                }
            }
        }
    }
}
