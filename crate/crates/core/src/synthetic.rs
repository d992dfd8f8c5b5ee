//! Generator for the bundled multi-domain toy corpus.
//!
//! Every domain talks about the same set of concepts, but each concept is
//! mostly expressed with domain-specific words; only a few words per concept
//! are shared across domains. Dialogues stay on one concept and alternate
//! question and answer turns. A response is relevant when it continues the
//! alternation on the context's concept. Adversarial responses reuse words
//! from the context but drift to another concept or are scrambled, and random
//! responses come from unrelated dialogues.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::augment::{word_repeat, word_shuffle};
use crate::corpus::{
    save_benchmark, save_dialogues, save_labeled_pairs, BenchmarkRecord, ContextResponsePair, Dialogue, LabeledPair,
    Origin, PairLabel,
};
use crate::error::{Error, Result};
use crate::seed::{derive, rng_from, Rng as SeedRng};

const FILLERS: &[&str] = &[
    "i", "you", "we", "the", "a", "it", "is", "so", "really", "just", "think", "that", "and", "to", "of", "for", "my",
    "this", "very", "quite",
];
const QUESTION_WORDS: &[&str] = &["what", "how", "when", "where", "why", "which"];
const ANSWER_WORDS: &[&str] = &["yes", "sure", "well", "maybe", "probably", "honestly"];
const FILLER_SYNONYMS: &[(&str, &[&str])] = &[
    ("really", &["truly", "actually"]),
    ("very", &["quite", "rather"]),
    ("think", &["guess", "believe"]),
    ("just", &["simply"]),
    ("yes", &["yeah", "sure"]),
    ("maybe", &["perhaps"]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub domains: Vec<String>,
    pub dialogues_per_domain: usize,
    pub concepts: usize,
    pub shared_words_per_concept: usize,
    pub domain_words_per_concept: usize,
    pub style_words_per_domain: usize,
    /// Chance that a concept-word slot uses a cross-domain shared word.
    pub shared_word_prob: f64,
    pub min_turns: usize,
    pub max_turns: usize,
    /// Concept words per utterance, inclusive range.
    pub concept_words: (usize, usize),
    /// Filler words per utterance, inclusive range.
    pub filler_words: (usize, usize),
    /// Contexts in the labeled base set.
    pub base_contexts: usize,
    /// Responses per class for each base context.
    pub responses_per_class: usize,
    /// Benchmark contexts per domain, each with one response per class.
    pub benchmark_contexts: usize,
    pub annotators: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            domains: ["cafe", "travel", "clinic", "sports"].map(String::from).to_vec(),
            dialogues_per_domain: 50,
            concepts: 4,
            shared_words_per_concept: 2,
            domain_words_per_concept: 4,
            style_words_per_domain: 4,
            shared_word_prob: 0.35,
            min_turns: 4,
            max_turns: 6,
            concept_words: (3, 4),
            filler_words: (0, 1),
            base_contexts: 400,
            responses_per_class: 2,
            benchmark_contexts: 40,
            annotators: 3,
            seed: 2022,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("synthetic config: {m}")));
        if self.domains.len() < 2 {
            return bad("need at least two domains");
        }
        if self.concepts < 3 {
            return bad("need at least three concepts");
        }
        if self.min_turns < 3 || self.max_turns < self.min_turns {
            return bad("turn range must satisfy 3 <= min_turns <= max_turns");
        }
        if self.shared_words_per_concept == 0 || self.domain_words_per_concept < 2 {
            return bad("concepts need words");
        }
        if !(0.0..=1.0).contains(&self.shared_word_prob) {
            return bad("shared_word_prob must be in [0, 1]");
        }
        if self.dialogues_per_domain < 2 || self.base_contexts == 0 || self.benchmark_contexts == 0 {
            return bad("sizes must be positive");
        }
        if self.concept_words.0 == 0 || self.concept_words.1 < self.concept_words.0 || self.filler_words.1 < self.filler_words.0 {
            return bad("word ranges must be non-empty and concept words at least 1");
        }
        if self.annotators == 0 || self.responses_per_class == 0 {
            return bad("annotators and responses_per_class must be positive");
        }
        Ok(())
    }
}

/// The generated word lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    /// `shared[c]`: words for concept c used in every domain.
    pub shared: Vec<Vec<String>>,
    /// `specific[g][c]`: domain g's own words for concept c.
    pub specific: Vec<Vec<Vec<String>>>,
    pub style: Vec<Vec<String>>,
}

fn pseudo_words(n: usize, taken: &mut BTreeSet<String>, rng: &mut SeedRng) -> Vec<String> {
    const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr"];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).expect("non-empty"));
            w.push_str(VOWELS.choose(rng).expect("non-empty"));
        }
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

impl Lexicon {
    pub fn generate(cfg: &SyntheticConfig) -> Lexicon {
        let mut rng = rng_from(derive(cfg.seed, &[&"lexicon"]));
        let mut taken: BTreeSet<String> = FILLERS
            .iter()
            .chain(QUESTION_WORDS)
            .chain(ANSWER_WORDS)
            .map(|s| s.to_string())
            .chain(FILLER_SYNONYMS.iter().flat_map(|(_, v)| v.iter().map(|s| s.to_string())))
            .collect();
        let shared = (0..cfg.concepts)
            .map(|_| pseudo_words(cfg.shared_words_per_concept, &mut taken, &mut rng))
            .collect();
        let specific = (0..cfg.domains.len())
            .map(|_| {
                (0..cfg.concepts)
                    .map(|_| pseudo_words(cfg.domain_words_per_concept, &mut taken, &mut rng))
                    .collect()
            })
            .collect();
        let style = (0..cfg.domains.len())
            .map(|_| pseudo_words(cfg.style_words_per_domain, &mut taken, &mut rng))
            .collect();
        Lexicon { shared, specific, style }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Turn {
    Question,
    Answer,
}

impl Turn {
    fn next(self) -> Turn {
        match self {
            Turn::Question => Turn::Answer,
            Turn::Answer => Turn::Question,
        }
    }
}

struct Writer<'a> {
    cfg: &'a SyntheticConfig,
    lex: &'a Lexicon,
}

impl Writer<'_> {
    fn concept_word(&self, domain: usize, concept: usize, rng: &mut SeedRng) -> String {
        let pool = if rng.gen_bool(self.cfg.shared_word_prob) {
            &self.lex.shared[concept]
        } else {
            &self.lex.specific[domain][concept]
        };
        pool.choose(rng).expect("non-empty").clone()
    }

    /// `[type word] (filler | concept word)* [style]? [punct]`.
    fn utterance(&self, domain: usize, concepts: &[usize], turn: Turn, keep: &[String], rng: &mut SeedRng) -> String {
        let (lead, punct) = match turn {
            Turn::Question => (QUESTION_WORDS, "?"),
            Turn::Answer => (ANSWER_WORDS, "."),
        };
        let mut body: Vec<String> = keep.to_vec();
        let (lo, hi) = self.cfg.concept_words;
        let n_concept = rng.gen_range(lo..=hi).saturating_sub(keep.len()).max(1);
        for i in 0..n_concept {
            body.push(self.concept_word(domain, concepts[i % concepts.len()], rng));
        }
        for _ in 0..rng.gen_range(self.cfg.filler_words.0..=self.cfg.filler_words.1) {
            body.push(FILLERS.choose(rng).expect("non-empty").to_string());
        }
        body.shuffle(rng);
        let mut words = vec![lead.choose(rng).expect("non-empty").to_string()];
        words.extend(body);
        if rng.gen_bool(0.5) {
            words.push(self.lex.style[domain].choose(rng).expect("non-empty").clone());
        }
        words.push(punct.to_string());
        words.join(" ")
    }

    fn dialogue(&self, id: String, domain: usize, concept: usize, rng: &mut SeedRng) -> Dialogue {
        let turns = rng.gen_range(self.cfg.min_turns..=self.cfg.max_turns);
        let mut turn = Turn::Question;
        let utterances = (0..turns)
            .map(|_| {
                let u = self.utterance(domain, &[concept], turn, &[], rng);
                turn = turn.next();
                u
            })
            .collect();
        Dialogue {
            id,
            domain: self.cfg.domains[domain].clone(),
            utterances,
        }
    }

    fn other_concept(&self, concept: usize, rng: &mut SeedRng) -> usize {
        (concept + rng.gen_range(1..self.cfg.concepts)) % self.cfg.concepts
    }

    fn context_words(&self, context: &[String]) -> Vec<String> {
        let known: BTreeSet<&str> = FILLERS.iter().chain(QUESTION_WORDS).chain(ANSWER_WORDS).copied().collect();
        context
            .iter()
            .flat_map(|u| u.split_whitespace())
            .filter(|w| !known.contains(w) && *w != "?" && *w != ".")
            .map(String::from)
            .collect()
    }

    /// One response of `label` for a context on `concept` whose next turn is `turn`.
    fn response(
        &self,
        label: PairLabel,
        domain: usize,
        concept: usize,
        turn: Turn,
        context: &[String],
        rng: &mut SeedRng,
    ) -> String {
        match label {
            PairLabel::Relevant => self.utterance(domain, &[concept], turn, &[], rng),
            PairLabel::Adversarial => {
                let r: f64 = rng.gen();
                if r < 0.6 {
                    // echoes the context but moves to another concept
                    let mut words = self.context_words(context);
                    words.shuffle(rng);
                    words.truncate(1);
                    let drift = self.other_concept(concept, rng);
                    self.utterance(domain, &[drift], turn, &words, rng)
                } else if r < 0.8 {
                    let base = self.utterance(domain, &[concept], turn, &[], rng);
                    word_shuffle(&base, rng.gen())
                } else {
                    let base = self.utterance(domain, &[concept], turn, &[], rng);
                    word_repeat(&base, 0.5, 3, rng.gen())
                }
            }
            PairLabel::Random => {
                let other = self.other_concept(concept, rng);
                let t = if rng.gen_bool(0.5) { turn } else { turn.next() };
                self.utterance(domain, &[other], t, &[], rng)
            }
        }
    }

    fn human_score(&self, label: PairLabel, rng: &mut SeedRng) -> f64 {
        let base = match label {
            PairLabel::Relevant => 4.4,
            PairLabel::Adversarial => 2.7,
            PairLabel::Random => 1.4,
        };
        let n = self.cfg.annotators;
        let noise = Normal::new(0.0f64, 0.7).expect("valid std");
        let total: f64 = (0..n).map(|_| (base + noise.sample(rng)).round().clamp(1.0, 5.0)).sum();
        total / n as f64
    }

    /// A context (prefix of a fresh dialogue) plus its next turn type.
    fn context(&self, domain: usize, concept: usize, rng: &mut SeedRng) -> (Vec<String>, Turn) {
        let len = rng.gen_range(1..=3usize);
        let mut turn = if rng.gen_bool(0.5) { Turn::Question } else { Turn::Answer };
        let ctx = (0..len)
            .map(|_| {
                let u = self.utterance(domain, &[concept], turn, &[], rng);
                turn = turn.next();
                u
            })
            .collect();
        (ctx, turn)
    }
}

/// Everything the bundled fixture contains.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    pub lexicon: Lexicon,
    /// Raw dialogues per domain, in `config.domains` order.
    pub dialogues: Vec<Vec<Dialogue>>,
    /// Labeled base set from the first domain.
    pub base: Vec<LabeledPair>,
    pub benchmarks: BTreeMap<String, Vec<BenchmarkRecord>>,
    /// Paraphrase table (topic-preserving substitutions).
    pub paraphrase_table: BTreeMap<String, Vec<String>>,
    /// Generative table (substitutions that drift off-topic).
    pub generative_table: BTreeMap<String, Vec<String>>,
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let lex = Lexicon::generate(cfg);
    let w = Writer { cfg, lex: &lex };

    let mut dialogues = Vec::new();
    for (g, name) in cfg.domains.iter().enumerate() {
        let mut rng = rng_from(derive(cfg.seed, &[&"dialogues", name]));
        let ds = (0..cfg.dialogues_per_domain)
            .map(|i| w.dialogue(format!("{name}-{i:03}"), g, i % cfg.concepts, &mut rng))
            .collect();
        dialogues.push(ds);
    }

    let mut base = Vec::new();
    let mut rng = rng_from(derive(cfg.seed, &[&"base"]));
    for i in 0..cfg.base_contexts {
        let concept = i % cfg.concepts;
        let (ctx, turn) = w.context(0, concept, &mut rng);
        for label in PairLabel::ALL {
            for k in 0..cfg.responses_per_class {
                let response = w.response(label, 0, concept, turn, &ctx, &mut rng);
                base.push(LabeledPair {
                    pair: pair(format!("base-{i:03}:{}{k}", label.as_str()), &ctx, response, &cfg.domains[0]),
                    label,
                });
            }
        }
    }

    let mut benchmarks = BTreeMap::new();
    for (g, name) in cfg.domains.iter().enumerate() {
        let mut rng = rng_from(derive(cfg.seed, &[&"benchmark", name]));
        let mut records = Vec::new();
        for i in 0..cfg.benchmark_contexts {
            let concept = i % cfg.concepts;
            let (ctx, turn) = w.context(g, concept, &mut rng);
            for label in PairLabel::ALL {
                let response = w.response(label, g, concept, turn, &ctx, &mut rng);
                records.push(BenchmarkRecord {
                    pair: pair(format!("{name}-bench-{i:03}:{}", label.as_str()), &ctx, response, name),
                    human_score: w.human_score(label, &mut rng),
                });
            }
        }
        benchmarks.insert(name.clone(), records);
    }

    let mut paraphrase_table: BTreeMap<String, Vec<String>> = FILLER_SYNONYMS
        .iter()
        .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
        .collect();
    let mut generative_table = BTreeMap::new();
    for g in 0..cfg.domains.len() {
        for c in 0..cfg.concepts {
            let words = &lex.specific[g][c];
            let drift = &lex.specific[g][(c + 1) % cfg.concepts];
            for wd in words {
                let syn: Vec<String> = words.iter().filter(|x| *x != wd).take(2).cloned().collect();
                paraphrase_table.insert(wd.clone(), syn);
                generative_table.insert(wd.clone(), drift.clone());
            }
        }
    }

    Ok(SyntheticCorpus {
        config: cfg.clone(),
        lexicon: lex,
        dialogues,
        base,
        benchmarks,
        paraphrase_table,
        generative_table,
    })
}

fn pair(pair_id: String, context: &[String], response: String, domain: &str) -> ContextResponsePair {
    ContextResponsePair {
        pair_id,
        context: context.to_vec(),
        response,
        domain: domain.to_string(),
        origin: Origin::Original,
        source_pair_id: None,
    }
}

impl SyntheticCorpus {
    /// Lay the corpus out as `base.jsonl`, `corpora/<domain>.jsonl`,
    /// `benchmarks/<domain>.jsonl`, `paraphrase.json`, `generative.json`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        save_labeled_pairs(&dir.join("base.jsonl"), &self.base)?;
        for (name, ds) in self.config.domains.iter().zip(&self.dialogues) {
            save_dialogues(&dir.join("corpora").join(format!("{name}.jsonl")), ds)?;
        }
        for (name, records) in &self.benchmarks {
            save_benchmark(&dir.join("benchmarks").join(format!("{name}.jsonl")), records)?;
        }
        for (file, table) in [("paraphrase.json", &self.paraphrase_table), ("generative.json", &self.generative_table)] {
            let path = dir.join(file);
            let text = serde_json::to_string_pretty(table)? + "\n";
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_sized() {
        let cfg = SyntheticConfig::default();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dialogues.len(), 4);
        assert!(a.dialogues.iter().all(|d| d.len() == cfg.dialogues_per_domain));
        assert_eq!(a.base.len(), cfg.base_contexts * 3 * cfg.responses_per_class);
        assert_eq!(a.benchmarks.len(), 4);
        assert!(a.benchmarks.values().all(|b| b.len() == cfg.benchmark_contexts * 3));
        for r in a.benchmarks.values().flatten() {
            assert!((1.0..=5.0).contains(&r.human_score));
        }
    }

    #[test]
    fn lexicon_words_are_unique() {
        let lex = Lexicon::generate(&SyntheticConfig::default());
        let all: Vec<&String> = lex
            .shared
            .iter()
            .flatten()
            .chain(lex.specific.iter().flatten().flatten())
            .chain(lex.style.iter().flatten())
            .collect();
        let set: BTreeSet<&String> = all.iter().copied().collect();
        assert_eq!(set.len(), all.len());
    }
}
