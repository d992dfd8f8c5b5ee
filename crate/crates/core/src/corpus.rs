//! Dialogue and context-response pair data model, JSONL ingestion, and pair
//! extraction.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

pub const MAX_CONTEXT: usize = 4;

/// Collapse internal whitespace runs to one space and trim both ends.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub domain: String,
    pub utterances: Vec<String>,
}

/// How a pair came to exist. Every pair carries one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Original,
    WordDrop,
    WordShuffle,
    WordRepeat,
    Paraphrase,
    Generated,
    RandomSameCorpus,
    RandomGeneratedPool,
    RandomParaphrasePool,
    MaskAndFill,
}

impl Origin {
    pub const ALL: [Origin; 10] = [
        Origin::Original,
        Origin::WordDrop,
        Origin::WordShuffle,
        Origin::WordRepeat,
        Origin::Paraphrase,
        Origin::Generated,
        Origin::RandomSameCorpus,
        Origin::RandomGeneratedPool,
        Origin::RandomParaphrasePool,
        Origin::MaskAndFill,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Original => "original",
            Origin::WordDrop => "word_drop",
            Origin::WordShuffle => "word_shuffle",
            Origin::WordRepeat => "word_repeat",
            Origin::Paraphrase => "paraphrase",
            Origin::Generated => "generated",
            Origin::RandomSameCorpus => "random_same_corpus",
            Origin::RandomGeneratedPool => "random_generated_pool",
            Origin::RandomParaphrasePool => "random_paraphrase_pool",
            Origin::MaskAndFill => "mask_and_fill",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_origin() -> Origin {
    Origin::Original
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextResponsePair {
    pub pair_id: String,
    pub context: Vec<String>,
    pub response: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub domain: String,
    #[serde(default = "default_origin")]
    pub origin: Origin,
    /// Pair this one was derived from; `None` for originals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_pair_id: Option<String>,
}

impl ContextResponsePair {
    pub fn validate(&self) -> Result<()> {
        if self.context.is_empty() || self.context.len() > MAX_CONTEXT {
            return Err(Error::InvalidInput(format!(
                "pair {}: context length {} outside 1..={MAX_CONTEXT}",
                self.pair_id,
                self.context.len()
            )));
        }
        if self.context.iter().any(|u| u.trim().is_empty()) {
            return Err(Error::InvalidInput(format!(
                "pair {}: empty context utterance",
                self.pair_id
            )));
        }
        if self.response.trim().is_empty() {
            return Err(Error::InvalidInput(format!(
                "pair {}: empty response",
                self.pair_id
            )));
        }
        Ok(())
    }

    /// The original pair at the root of this pair's provenance chain.
    pub fn root_pair_id(&self) -> &str {
        self.source_pair_id.as_deref().unwrap_or(&self.pair_id)
    }

    /// Dialogue id recovered from a `"{dialogue}:{turn}"` pair id.
    pub fn dialogue_id(&self) -> &str {
        dialogue_of(self.root_pair_id())
    }
}

/// Strip the trailing `:{turn}` from a pair id produced by [`extract_pairs`].
pub fn dialogue_of(pair_id: &str) -> &str {
    match pair_id.rsplit_once(':') {
        Some((head, tail)) if tail.chars().all(|c| c.is_ascii_digit()) && !tail.is_empty() => head,
        _ => pair_id,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    Random = 0,
    Adversarial = 1,
    Relevant = 2,
}

impl PairLabel {
    pub const ALL: [PairLabel; 3] = [PairLabel::Random, PairLabel::Adversarial, PairLabel::Relevant];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairLabel::Random => "random",
            PairLabel::Adversarial => "adversarial",
            PairLabel::Relevant => "relevant",
        }
    }
}

impl fmt::Display for PairLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub pair: ContextResponsePair,
    pub label: PairLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecord {
    pub pair: ContextResponsePair,
    pub human_score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DialogueRecord {
    id: String,
    utterances: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabeledPairRecord {
    pair_id: String,
    context: Vec<String>,
    response: String,
    label: PairLabel,
}

#[derive(Debug, Serialize, Deserialize)]
struct BenchmarkFileRecord {
    pair_id: String,
    context: Vec<String>,
    response: String,
    human_score: f64,
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Like [`jsonl::read`] but keeps the line number for post-parse checks.
fn read_numbered<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| parse_error(path, idx + 1, e.to_string()))?;
        out.push((idx + 1, rec));
    }
    Ok(out)
}

/// Load a dialogue JSONL file and tag every dialogue with `domain`.
///
/// Dialogues with an empty utterance or fewer than two utterances are skipped
/// with a warning; malformed lines and duplicate ids are hard errors.
pub fn load_dialogues(path: &Path, domain: &str) -> Result<Vec<Dialogue>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, rec) in read_numbered::<DialogueRecord>(path)? {
        if !seen.insert(rec.id.clone()) {
            return Err(parse_error(path, line, format!("duplicate dialogue id `{}`", rec.id)));
        }
        let utterances: Vec<String> = rec.utterances.iter().map(|u| normalize_ws(u)).collect();
        if utterances.iter().any(String::is_empty) {
            warn!("{}:{line}: dialogue `{}` has an empty utterance, skipped", path.display(), rec.id);
            continue;
        }
        if utterances.len() < 2 {
            warn!("{}:{line}: dialogue `{}` has fewer than 2 utterances, skipped", path.display(), rec.id);
            continue;
        }
        out.push(Dialogue {
            id: rec.id,
            domain: domain.to_string(),
            utterances,
        });
    }
    Ok(out)
}

pub fn save_dialogues(path: &Path, dialogues: &[Dialogue]) -> Result<()> {
    jsonl::write(
        path,
        dialogues.iter().map(|d| DialogueRecord {
            id: d.id.clone(),
            utterances: d.utterances.clone(),
        }),
    )
}

/// Every utterance after the first becomes a response; its context is the
/// last `min(t, max_context)` utterances before it.
pub fn extract_pairs(dialogues: &[Dialogue], max_context: usize) -> Result<Vec<ContextResponsePair>> {
    if !(1..=MAX_CONTEXT).contains(&max_context) {
        return Err(Error::InvalidInput(format!(
            "max_context must be in 1..={MAX_CONTEXT}, got {max_context}"
        )));
    }
    let mut out = Vec::new();
    for d in dialogues {
        for t in 1..d.utterances.len() {
            let start = t.saturating_sub(max_context);
            out.push(ContextResponsePair {
                pair_id: format!("{}:{t}", d.id),
                context: d.utterances[start..t].to_vec(),
                response: d.utterances[t].clone(),
                domain: d.domain.clone(),
                origin: Origin::Original,
                source_pair_id: None,
            });
        }
    }
    Ok(out)
}

fn make_pair(pair_id: String, context: Vec<String>, response: String, domain: &str) -> ContextResponsePair {
    ContextResponsePair {
        pair_id,
        context: context.iter().map(|u| normalize_ws(u)).collect(),
        response: normalize_ws(&response),
        domain: domain.to_string(),
        origin: Origin::Original,
        source_pair_id: None,
    }
}

pub fn load_labeled_pairs(path: &Path, domain: &str) -> Result<Vec<LabeledPair>> {
    read_numbered::<LabeledPairRecord>(path)?
        .into_iter()
        .map(|(line, r)| {
            let pair = make_pair(r.pair_id, r.context, r.response, domain);
            pair.validate().map_err(|e| parse_error(path, line, e.to_string()))?;
            Ok(LabeledPair { pair, label: r.label })
        })
        .collect()
}

pub fn save_labeled_pairs(path: &Path, pairs: &[LabeledPair]) -> Result<()> {
    jsonl::write(
        path,
        pairs.iter().map(|lp| LabeledPairRecord {
            pair_id: lp.pair.pair_id.clone(),
            context: lp.pair.context.clone(),
            response: lp.pair.response.clone(),
            label: lp.label,
        }),
    )
}

pub fn load_benchmark(path: &Path, domain: &str) -> Result<Vec<BenchmarkRecord>> {
    read_numbered::<BenchmarkFileRecord>(path)?
        .into_iter()
        .map(|(line, r)| {
            if !(1.0..=5.0).contains(&r.human_score) {
                return Err(parse_error(
                    path,
                    line,
                    format!("human_score {} outside [1, 5]", r.human_score),
                ));
            }
            let pair = make_pair(r.pair_id, r.context, r.response, domain);
            pair.validate().map_err(|e| parse_error(path, line, e.to_string()))?;
            Ok(BenchmarkRecord {
                pair,
                human_score: r.human_score,
            })
        })
        .collect()
}

pub fn save_benchmark(path: &Path, records: &[BenchmarkRecord]) -> Result<()> {
    jsonl::write(
        path,
        records.iter().map(|r| BenchmarkFileRecord {
            pair_id: r.pair.pair_id.clone(),
            context: r.pair.context.clone(),
            response: r.pair.response.clone(),
            human_score: r.human_score,
        }),
    )
}

/// Pool file row: the pair plus its provenance. `source_pair_id` equals the
/// pair's own id for originals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolRecord {
    pub pair_id: String,
    pub context: Vec<String>,
    pub response: String,
    pub origin: Origin,
    pub source_pair_id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub domain: String,
}

impl From<&ContextResponsePair> for PoolRecord {
    fn from(p: &ContextResponsePair) -> Self {
        PoolRecord {
            pair_id: p.pair_id.clone(),
            context: p.context.clone(),
            response: p.response.clone(),
            origin: p.origin,
            source_pair_id: p.root_pair_id().to_string(),
            domain: p.domain.clone(),
        }
    }
}

impl From<PoolRecord> for ContextResponsePair {
    fn from(r: PoolRecord) -> Self {
        let source_pair_id = (r.source_pair_id != r.pair_id).then_some(r.source_pair_id);
        ContextResponsePair {
            pair_id: r.pair_id,
            context: r.context,
            response: r.response,
            domain: r.domain,
            origin: r.origin,
            source_pair_id,
        }
    }
}

pub fn load_pool(path: &Path) -> Result<Vec<ContextResponsePair>> {
    read_numbered::<PoolRecord>(path)?
        .into_iter()
        .map(|(line, r)| {
            let pair = ContextResponsePair::from(r);
            pair.validate().map_err(|e| parse_error(path, line, e.to_string()))?;
            Ok(pair)
        })
        .collect()
}

pub fn save_pool(path: &Path, pairs: &[ContextResponsePair]) -> Result<()> {
    jsonl::write(path, pairs.iter().map(PoolRecord::from))
}
