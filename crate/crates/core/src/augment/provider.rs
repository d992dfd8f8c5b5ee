use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Whether a provider's output counts as a paraphrase of the response or as
/// a freshly generated reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Paraphrase,
    Generative,
}

/// Source of response variants (back-translation, a generative model, ...).
/// `transform` must return a non-empty string for any non-empty input.
pub trait ParaphraseProvider: Send + Sync {
    fn name(&self) -> &str;
    fn kind(&self) -> ProviderKind;
    fn transform(&self, text: &str, seed: u64) -> String;
}

/// Lexical substitution from a synonym table: each word that has entries is
/// replaced by a seeded choice with probability `swap_prob`.
#[derive(Debug, Clone)]
pub struct SynonymProvider {
    name: String,
    kind: ProviderKind,
    table: BTreeMap<String, Vec<String>>,
    pub swap_prob: f64,
}

impl SynonymProvider {
    pub fn new(name: impl Into<String>, kind: ProviderKind, table: BTreeMap<String, Vec<String>>) -> Self {
        let table = table.into_iter().filter(|(_, v)| !v.is_empty()).collect();
        SynonymProvider {
            name: name.into(),
            kind,
            table,
            swap_prob: 0.5,
        }
    }

    /// Load a JSON `{word: [synonym, ...]}` table.
    pub fn load(name: impl Into<String>, kind: ProviderKind, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: BTreeMap<String, Vec<String>> = serde_json::from_str(&text)?;
        Ok(Self::new(name, kind, table))
    }
}

impl ParaphraseProvider for SynonymProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> ProviderKind {
        self.kind
    }

    fn transform(&self, text: &str, seed: u64) -> String {
        let mut rng = rng_from(seed);
        let out: Vec<&str> = text
            .split_whitespace()
            .map(|w| match self.table.get(w) {
                Some(syns) if rng.gen_bool(self.swap_prob) => syns.choose(&mut rng).map_or(w, String::as_str),
                _ => w,
            })
            .filter(|w| !w.trim().is_empty())
            .collect();
        if out.is_empty() {
            return text.trim().to_string();
        }
        out.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_only_known_words() {
        let table = BTreeMap::from([("big".to_string(), vec!["large".to_string()])]);
        let mut p = SynonymProvider::new("syn", ProviderKind::Paraphrase, table);
        p.swap_prob = 1.0;
        assert_eq!(p.transform("a big dog", 1), "a large dog");
        assert_eq!(p.transform("nothing here", 1), "nothing here");
        assert_eq!(p.name(), "syn");
    }

    #[test]
    fn output_non_empty() {
        let table = BTreeMap::from([("x".to_string(), vec![" ".to_string()])]);
        let mut p = SynonymProvider::new("syn", ProviderKind::Paraphrase, table);
        p.swap_prob = 1.0;
        assert_eq!(p.transform("x", 3), "x");
    }
}
