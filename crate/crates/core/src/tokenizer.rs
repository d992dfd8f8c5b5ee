//! Word-level tokenizer: whitespace and punctuation splitting, a frequency
//! ranked vocabulary with six reserved specials, pair encoding, and MLM
//! corruption.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::ContextResponsePair;
use crate::error::{Error, Result};
use crate::seed::rng_from;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;
pub const BLANK: u32 = 5;
pub const NUM_SPECIALS: usize = 6;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[BLANK]"];

const VOCAB_FORMAT: u32 = 1;

pub fn is_special(id: u32) -> bool {
    (id as usize) < NUM_SPECIALS
}

/// Split on whitespace, then break every non-alphanumeric character out as
/// its own token. Apostrophes and underscores stay inside words.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut start = None;
        for (i, c) in chunk.char_indices() {
            if c.is_alphanumeric() || c == '\'' || c == '_' {
                start.get_or_insert(i);
            } else {
                if let Some(s) = start.take() {
                    out.push(&chunk[s..i]);
                }
                out.push(&chunk[i..i + c.len_utf8()]);
            }
        }
        if let Some(s) = start {
            out.push(&chunk[s..]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    format: u32,
    tokens: Vec<String>,
    token_to_id: BTreeMap<String, u32>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if token_to_id.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vocabulary token `{t}`")));
            }
        }
        for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::InvalidInput(format!("special token {s} must have id {i}")));
            }
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token: tokens,
        })
    }

    /// Vocabulary holding only the six specials plus `words` in order.
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Result<Self> {
        let tokens = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(words.iter().map(|w| w.as_ref().to_string()))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Hex SHA-256 over the ordered token list; checkpoints pin it.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.id_to_token {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = VocabFile {
            format: VOCAB_FORMAT,
            tokens: self.id_to_token.clone(),
            token_to_id: self.token_to_id.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: VocabFile = serde_json::from_str(&text)?;
        if file.format != VOCAB_FORMAT {
            return Err(Error::InvalidInput(format!("unsupported vocabulary format {}", file.format)));
        }
        let vocab = Self::from_tokens(file.tokens)?;
        let consistent = file.token_to_id.len() == vocab.len()
            && file.token_to_id.iter().all(|(t, id)| vocab.get(t) == Some(*id));
        if !consistent {
            return Err(Error::InvalidInput("vocabulary map disagrees with token list".into()));
        }
        Ok(vocab)
    }
}

/// Rank tokens by descending frequency, ties lexicographic, dropping those
/// seen fewer than `min_freq` times. Specials always take ids 0..6.
pub fn build_vocab<'a>(
    corpus: impl IntoIterator<Item = &'a ContextResponsePair>,
    max_vocab: usize,
    min_freq: usize,
) -> Result<Vocabulary> {
    if max_vocab <= NUM_SPECIALS {
        return Err(Error::InvalidInput(format!("max_vocab must exceed {NUM_SPECIALS}")));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut n_pairs = 0usize;
    for pair in corpus {
        n_pairs += 1;
        for text in pair.context.iter().chain(std::iter::once(&pair.response)) {
            for tok in tokenize(text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    if n_pairs == 0 {
        return Err(Error::InvalidInput("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq && !SPECIAL_TOKENS.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_vocab - NUM_SPECIALS);
    let words: Vec<&str> = ranked.into_iter().map(|(t, _)| t).collect();
    Vocabulary::from_words(&words)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Context = 0,
    Response = 1,
}

/// `[CLS] context [SEP] response [SEP]`, inter-turn `[SEP]`s inside the context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub ids: Vec<u32>,
    pub type_mask: Vec<Segment>,
}

impl EncodedPair {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Index range of the response tokens (excluding the closing `[SEP]`).
    pub fn response_range(&self) -> std::ops::Range<usize> {
        let start = self
            .type_mask
            .iter()
            .position(|s| *s == Segment::Response)
            .unwrap_or(self.ids.len());
        start..self.ids.len().saturating_sub(1).max(start)
    }
}

fn ids_for(text: &str, vocab: &Vocabulary) -> Vec<u32> {
    tokenize(text).into_iter().map(|t| vocab.id(t)).collect()
}

pub fn encode_pair(pair: &ContextResponsePair, vocab: &Vocabulary, max_seq_len: usize) -> EncodedPair {
    encode_parts(&pair.context, &pair.response, vocab, max_seq_len)
}

pub fn encode_parts<S: AsRef<str>>(
    context: &[S],
    response: &str,
    vocab: &Vocabulary,
    max_seq_len: usize,
) -> EncodedPair {
    assert!(max_seq_len >= 8, "max_seq_len must be at least 8");
    let mut ctx: Vec<u32> = Vec::new();
    for (i, utt) in context.iter().enumerate() {
        if i > 0 {
            ctx.push(SEP);
        }
        ctx.extend(ids_for(utt.as_ref(), vocab));
    }
    let mut resp = ids_for(response, vocab);
    // three structural slots, and keep at least one context token
    let budget = max_seq_len - 3;
    if resp.len() > budget - 1 {
        resp.truncate(budget - 1);
    }
    let ctx_room = budget - resp.len();
    if ctx.len() > ctx_room {
        ctx.drain(..ctx.len() - ctx_room);
        while ctx.first() == Some(&SEP) && ctx.len() > 1 {
            ctx.remove(0);
        }
    }
    let mut ids = Vec::with_capacity(ctx.len() + resp.len() + 3);
    ids.push(CLS);
    ids.extend(&ctx);
    ids.push(SEP);
    let n_ctx = ids.len();
    ids.extend(&resp);
    ids.push(SEP);
    let type_mask = (0..ids.len())
        .map(|i| if i < n_ctx { Segment::Context } else { Segment::Response })
        .collect();
    EncodedPair { ids, type_mask }
}

/// Inverse of [`encode_pair`] up to whitespace and `[UNK]` substitution.
pub fn decode(encoded: &EncodedPair, vocab: &Vocabulary) -> (Vec<String>, String) {
    let words = |ids: &[u32]| -> String {
        ids.iter()
            .map(|&id| vocab.token(id).unwrap_or("[UNK]"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let r = encoded.response_range();
    let ctx_ids = &encoded.ids[1..r.start.saturating_sub(1).max(1)];
    let context = ctx_ids.split(|&id| id == SEP).map(words).collect();
    (context, words(&encoded.ids[r]))
}

/// Corruption split for selected MLM positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskScheme {
    pub mask_frac: f64,
    pub random_frac: f64,
}

impl Default for MaskScheme {
    fn default() -> Self {
        MaskScheme {
            mask_frac: 0.8,
            random_frac: 0.1,
        }
    }
}

impl MaskScheme {
    pub const ALWAYS_MASK: MaskScheme = MaskScheme {
        mask_frac: 1.0,
        random_frac: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    pub ids: Vec<u32>,
    /// Selected position → original id.
    pub targets: BTreeMap<usize, u32>,
}

pub fn apply_mlm_mask(encoded: &EncodedPair, mask_prob: f64, vocab_size: usize, seed: u64) -> MaskedSequence {
    apply_mlm_mask_with(encoded, mask_prob, vocab_size, seed, MaskScheme::default())
}

pub fn apply_mlm_mask_with(
    encoded: &EncodedPair,
    mask_prob: f64,
    vocab_size: usize,
    seed: u64,
    scheme: MaskScheme,
) -> MaskedSequence {
    assert!((0.0..=1.0).contains(&mask_prob), "mask_prob must be in [0, 1]");
    let mut rng = rng_from(seed);
    let mut ids = encoded.ids.clone();
    let mut targets = BTreeMap::new();
    for (pos, id) in ids.iter_mut().enumerate() {
        if is_special(*id) || !rng.gen_bool(mask_prob) {
            continue;
        }
        targets.insert(pos, *id);
        let u: f64 = rng.gen();
        if u < scheme.mask_frac {
            *id = MASK;
        } else if u < scheme.mask_frac + scheme.random_frac && vocab_size > NUM_SPECIALS {
            *id = rng.gen_range(NUM_SPECIALS as u32..vocab_size as u32);
        }
    }
    MaskedSequence { ids, targets }
}
