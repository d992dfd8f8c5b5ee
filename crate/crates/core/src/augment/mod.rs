//! Candidate-response generation for the unlabeled multi-domain pool:
//! syntactic perturbations, random-utterance negatives, mask-and-fill, and
//! pluggable paraphrase/generation providers.

mod infill;
mod provider;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use infill::{mask_and_fill, mask_and_fill_with_span, train_infiller, FillMode, Infiller, MlmInfiller};
pub use provider::{ParaphraseProvider, ProviderKind, SynonymProvider};

use crate::corpus::{ContextResponsePair, Origin};
use crate::error::{Error, Result};
use crate::seed::{derive, rng_from};

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Drop each word with probability `drop_prob`; if every word is selected,
/// one uniformly chosen word survives.
pub fn word_drop(response: &str, drop_prob: f64, seed: u64) -> String {
    let toks = words(response);
    let mut rng = rng_from(seed);
    let kept: Vec<&str> = toks.iter().copied().filter(|_| !rng.gen_bool(drop_prob.clamp(0.0, 1.0))).collect();
    if kept.is_empty() {
        return toks.choose(&mut rng).copied().unwrap_or_default().to_string();
    }
    kept.join(" ")
}

/// Uniform (Fisher–Yates) permutation of the words.
pub fn word_shuffle(response: &str, seed: u64) -> String {
    let mut toks = words(response);
    toks.shuffle(&mut rng_from(seed));
    toks.join(" ")
}

/// Each word is independently selected with probability `repeat_prob` and
/// then written `k` times, `k` uniform in `2..=repeat_max`.
pub fn word_repeat(response: &str, repeat_prob: f64, repeat_max: usize, seed: u64) -> String {
    assert!(repeat_max >= 2, "repeat_max must be at least 2");
    let mut rng = rng_from(seed);
    let mut out = Vec::new();
    for tok in words(response) {
        let k = if rng.gen_bool(repeat_prob.clamp(0.0, 1.0)) {
            rng.gen_range(2..=repeat_max)
        } else {
            1
        };
        out.extend(std::iter::repeat_n(tok, k));
    }
    out.join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub dialogue_id: String,
    pub response: String,
}

/// Candidate responses for random negatives, each tagged with the dialogue
/// it came from.
#[derive(Debug, Clone, Default)]
pub struct ResponsePools {
    pub other_dialogue: Vec<PoolEntry>,
    pub generated: Vec<PoolEntry>,
    pub paraphrase: Vec<PoolEntry>,
    counts: [HashMap<String, usize>; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolVariant {
    SameCorpus,
    Generated,
    Paraphrase,
}

impl PoolVariant {
    fn idx(self) -> usize {
        self as usize
    }

    pub fn origin(self) -> Origin {
        match self {
            PoolVariant::SameCorpus => Origin::RandomSameCorpus,
            PoolVariant::Generated => Origin::RandomGeneratedPool,
            PoolVariant::Paraphrase => Origin::RandomParaphrasePool,
        }
    }
}

impl ResponsePools {
    pub fn new(other_dialogue: Vec<PoolEntry>, generated: Vec<PoolEntry>, paraphrase: Vec<PoolEntry>) -> Self {
        let mut pools = ResponsePools {
            other_dialogue,
            generated,
            paraphrase,
            counts: Default::default(),
        };
        for v in [PoolVariant::SameCorpus, PoolVariant::Generated, PoolVariant::Paraphrase] {
            let mut counts = HashMap::new();
            for e in pools.pool(v) {
                *counts.entry(e.dialogue_id.clone()).or_insert(0) += 1;
            }
            pools.counts[v.idx()] = counts;
        }
        pools
    }

    pub fn pool(&self, variant: PoolVariant) -> &[PoolEntry] {
        match variant {
            PoolVariant::SameCorpus => &self.other_dialogue,
            PoolVariant::Generated => &self.generated,
            PoolVariant::Paraphrase => &self.paraphrase,
        }
    }

    fn eligible(&self, variant: PoolVariant, dialogue: &str) -> usize {
        let own = self.counts[variant.idx()].get(dialogue).copied().unwrap_or(0);
        self.pool(variant).len() - own
    }
}

/// Replace the response with one drawn uniformly from `variant`'s pool,
/// never from the pair's own dialogue.
pub fn random_negative(
    pair: &ContextResponsePair,
    pools: &ResponsePools,
    variant: PoolVariant,
    seed: u64,
) -> Result<ContextResponsePair> {
    let dialogue = pair.dialogue_id();
    if pools.eligible(variant, dialogue) == 0 {
        return Err(Error::EmptyPool(format!(
            "{:?} pool has no response outside dialogue `{dialogue}`",
            variant
        )));
    }
    let pool = pools.pool(variant);
    let mut rng = rng_from(seed);
    // rejection sampling keeps the draw uniform over eligible entries
    let entry = loop {
        let e = &pool[rng.gen_range(0..pool.len())];
        if e.dialogue_id != dialogue {
            break e;
        }
    };
    Ok(derived(pair, entry.response.clone(), variant.origin(), None))
}

fn derived(src: &ContextResponsePair, response: String, origin: Origin, pair_id: Option<String>) -> ContextResponsePair {
    ContextResponsePair {
        pair_id: pair_id.unwrap_or_else(|| format!("{}#{}", src.pair_id, origin)),
        context: src.context.clone(),
        response,
        domain: src.domain.clone(),
        origin,
        source_pair_id: Some(src.root_pair_id().to_string()),
    }
}

/// Augmentation technique; one per non-original origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
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

impl Technique {
    pub const ALL: [Technique; 9] = [
        Technique::WordDrop,
        Technique::WordShuffle,
        Technique::WordRepeat,
        Technique::Paraphrase,
        Technique::Generated,
        Technique::RandomSameCorpus,
        Technique::RandomGeneratedPool,
        Technique::RandomParaphrasePool,
        Technique::MaskAndFill,
    ];

    pub fn origin(self) -> Origin {
        match self {
            Technique::WordDrop => Origin::WordDrop,
            Technique::WordShuffle => Origin::WordShuffle,
            Technique::WordRepeat => Origin::WordRepeat,
            Technique::Paraphrase => Origin::Paraphrase,
            Technique::Generated => Origin::Generated,
            Technique::RandomSameCorpus => Origin::RandomSameCorpus,
            Technique::RandomGeneratedPool => Origin::RandomGeneratedPool,
            Technique::RandomParaphrasePool => Origin::RandomParaphrasePool,
            Technique::MaskAndFill => Origin::MaskAndFill,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPlan {
    pub per_technique_count: usize,
    pub drop_prob: f64,
    pub repeat_prob: f64,
    pub repeat_max: usize,
    pub infill_span_max: usize,
    pub infill_temperature: f64,
    pub rng_seed: u64,
    pub techniques: Vec<Technique>,
}

impl Default for AugmentPlan {
    fn default() -> Self {
        AugmentPlan {
            per_technique_count: 10,
            drop_prob: 0.3,
            repeat_prob: 0.3,
            repeat_max: 3,
            infill_span_max: 4,
            infill_temperature: 1.0,
            rng_seed: 0,
            techniques: Technique::ALL.to_vec(),
        }
    }
}

impl AugmentPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("augment plan: {m}")));
        if self.per_technique_count < 1 {
            return bad("per_technique_count must be at least 1".into());
        }
        for (name, p) in [("drop_prob", self.drop_prob), ("repeat_prob", self.repeat_prob)] {
            if !(p > 0.0 && p <= 1.0) {
                return bad(format!("{name} must be in (0, 1], got {p}"));
            }
        }
        if self.repeat_max < 2 || self.infill_span_max < 1 {
            return bad("repeat_max must be >= 2 and infill_span_max >= 1".into());
        }
        if self.infill_temperature <= 0.0 {
            return bad("infill_temperature must be positive".into());
        }
        Ok(())
    }
}

fn providers_of<'a>(providers: &[&'a dyn ParaphraseProvider], kind: ProviderKind) -> Vec<&'a dyn ParaphraseProvider> {
    providers.iter().copied().filter(|p| p.kind() == kind).collect()
}

/// Pools built from the originals: their responses, and one provider output
/// per original for each provider kind.
pub fn build_pools(originals: &[ContextResponsePair], providers: &[&dyn ParaphraseProvider], seed: u64) -> ResponsePools {
    let entry = |p: &ContextResponsePair, response: String| PoolEntry {
        dialogue_id: p.dialogue_id().to_string(),
        response,
    };
    let transformed = |kind: ProviderKind| -> Vec<PoolEntry> {
        let ps = providers_of(providers, kind);
        if ps.is_empty() {
            return Vec::new();
        }
        originals
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let provider = ps[i % ps.len()];
                let s = derive(seed, &[&"pool", &provider.name(), &p.pair_id]);
                entry(p, provider.transform(&p.response, s))
            })
            .collect()
    };
    ResponsePools::new(
        originals.iter().map(|p| entry(p, p.response.clone())).collect(),
        transformed(ProviderKind::Generative),
        transformed(ProviderKind::Paraphrase),
    )
}

fn technique_name(t: Technique) -> &'static str {
    t.origin().as_str()
}

/// Augment every original: the original itself, then `per_technique_count`
/// candidates per enabled technique, ordered by pair id, technique, index.
///
/// Techniques whose provider kind is absent are skipped. Mask-and-fill is
/// skipped for single-token responses and requires an infiller.
pub fn build_mdd_pool(
    originals: &[ContextResponsePair],
    plan: &AugmentPlan,
    providers: &[&dyn ParaphraseProvider],
    infiller: Option<&(dyn Infiller + Sync)>,
) -> Result<Vec<ContextResponsePair>> {
    plan.validate()?;
    if originals.is_empty() {
        return Err(Error::InvalidInput("no original pairs to augment".into()));
    }
    let mut sorted: Vec<&ContextResponsePair> = originals.iter().collect();
    sorted.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    let mut techniques = plan.techniques.clone();
    techniques.sort();
    techniques.dedup();
    if techniques.contains(&Technique::MaskAndFill) && infiller.is_none() {
        return Err(Error::UntrainedInfiller);
    }
    let pools = build_pools(originals, providers, plan.rng_seed);
    let paraphrasers = providers_of(providers, ProviderKind::Paraphrase);
    let generators = providers_of(providers, ProviderKind::Generative);

    let per_original: Vec<Vec<ContextResponsePair>> = sorted
        .par_iter()
        .map(|&orig| -> Result<Vec<ContextResponsePair>> {
            let mut out = vec![orig.clone()];
            for &t in &techniques {
                for index in 0..plan.per_technique_count {
                    let seed = derive(plan.rng_seed, &[&orig.pair_id, &technique_name(t), &index]);
                    let id = Some(format!("{}#{}.{index}", orig.pair_id, technique_name(t)));
                    let r = &orig.response;
                    let made = match t {
                        Technique::WordDrop => Some(derived(orig, word_drop(r, plan.drop_prob, seed), t.origin(), id)),
                        Technique::WordShuffle => Some(derived(orig, word_shuffle(r, seed), t.origin(), id)),
                        Technique::WordRepeat => Some(derived(
                            orig,
                            word_repeat(r, plan.repeat_prob, plan.repeat_max, seed),
                            t.origin(),
                            id,
                        )),
                        Technique::Paraphrase | Technique::Generated => {
                            let ps = if t == Technique::Paraphrase { &paraphrasers } else { &generators };
                            if ps.is_empty() {
                                None
                            } else {
                                let p = ps[index % ps.len()];
                                Some(derived(orig, p.transform(r, seed), t.origin(), id))
                            }
                        }
                        Technique::RandomSameCorpus | Technique::RandomGeneratedPool | Technique::RandomParaphrasePool => {
                            let variant = match t {
                                Technique::RandomSameCorpus => PoolVariant::SameCorpus,
                                Technique::RandomGeneratedPool => PoolVariant::Generated,
                                _ => PoolVariant::Paraphrase,
                            };
                            if pools.pool(variant).is_empty() {
                                None
                            } else {
                                let mut p = random_negative(orig, &pools, variant, seed)?;
                                p.pair_id = id.unwrap_or_default();
                                Some(p)
                            }
                        }
                        Technique::MaskAndFill => {
                            let infiller = infiller.ok_or(Error::UntrainedInfiller)?;
                            if crate::tokenizer::tokenize(r).len() < 2 {
                                None
                            } else {
                                let mode = FillMode::Sample {
                                    temperature: plan.infill_temperature,
                                };
                                let mut p = mask_and_fill(orig, infiller, plan.infill_span_max, mode, seed)?;
                                p.pair_id = id.unwrap_or_default();
                                Some(p)
                            }
                        }
                    };
                    out.extend(made);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_original.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: &str, response: &str) -> ContextResponsePair {
        ContextResponsePair {
            pair_id: id.into(),
            context: vec!["hello there".into()],
            response: response.into(),
            domain: "d".into(),
            origin: Origin::Original,
            source_pair_id: None,
        }
    }

    #[test]
    fn drop_identity_and_floor() {
        assert_eq!(word_drop("a b c d", 1e-12, 4), "a b c d");
        let out = word_drop("a b c d", 1.0, 4);
        assert_eq!(words(&out).len(), 1);
        assert!(["a", "b", "c", "d"].contains(&out.as_str()));
        assert_eq!(word_drop("a b c d e f", 0.5, 9), word_drop("a b c d e f", 0.5, 9));
    }

    #[test]
    fn shuffle_cases() {
        assert_eq!(word_shuffle("hello", 3), "hello");
        let mut a = words(&word_shuffle("a b c", 3)).into_iter().map(String::from).collect::<Vec<_>>();
        a.sort();
        assert_eq!(a, vec!["a", "b", "c"]);
    }

    #[test]
    fn shuffle_two_seeds_valid_permutations() {
        let input = "t0 t1 t2 t3 t4 t5 t6 t7 t8 t9";
        let mut sorted_in: Vec<&str> = words(input);
        sorted_in.sort();
        let a = word_shuffle(input, 1);
        let b = word_shuffle(input, 2);
        for out in [&a, &b] {
            let mut s = words(out);
            s.sort();
            assert_eq!(s, sorted_in);
        }
        assert_ne!(a, b);
    }

    #[test]
    fn repeat_cases() {
        assert_eq!(word_repeat("a b c", 0.0, 3, 1), "a b c");
        // repeat_max 3 with k forced: 2..=2 range when repeat_max = 2
        assert_eq!(word_repeat("a", 1.0, 2, 1), "a a");
        let out = word_repeat("a", 1.0, 3, 5);
        assert!(out == "a a" || out == "a a a");
        let input = "x y z w";
        for s in 0..50 {
            assert!(words(&word_repeat(input, 0.5, 4, s)).len() >= 4);
        }
    }

    #[test]
    fn random_negative_single_and_excluded() {
        let pools = ResponsePools::new(
            vec![
                PoolEntry {
                    dialogue_id: "d1".into(),
                    response: "mine".into(),
                },
                PoolEntry {
                    dialogue_id: "d2".into(),
                    response: "theirs".into(),
                },
            ],
            vec![],
            vec![],
        );
        let p = pair("d1:1", "orig");
        let neg = random_negative(&p, &pools, PoolVariant::SameCorpus, 7).unwrap();
        assert_eq!(neg.response, "theirs");
        assert_eq!(neg.origin, Origin::RandomSameCorpus);
        assert_eq!(neg.source_pair_id.as_deref(), Some("d1:1"));

        let only_own = ResponsePools::new(
            vec![PoolEntry {
                dialogue_id: "d1".into(),
                response: "mine".into(),
            }],
            vec![],
            vec![],
        );
        assert!(matches!(
            random_negative(&p, &only_own, PoolVariant::SameCorpus, 7),
            Err(Error::EmptyPool(_))
        ));
        assert!(random_negative(&p, &only_own, PoolVariant::Generated, 7).is_err());
    }

    #[test]
    fn pool_counts_and_order() {
        let origs = vec![pair("b:1", "x y"), pair("a:1", "p q r")];
        let plan = AugmentPlan {
            per_technique_count: 10,
            techniques: vec![Technique::WordShuffle, Technique::WordDrop],
            ..AugmentPlan::default()
        };
        let out = build_mdd_pool(&origs[..1], &plan, &[], None).unwrap();
        assert_eq!(out.len(), 21);
        let out = build_mdd_pool(&origs, &plan, &[], None).unwrap();
        assert_eq!(out.len(), 42);
        assert_eq!(out[0].pair_id, "a:1");
        assert_eq!(out[1].origin, Origin::WordDrop);
        assert_eq!(out[21].pair_id, "b:1");
        assert!(out.iter().all(|p| p.validate().is_ok()));
    }

    #[test]
    fn missing_providers_skip_paraphrase_origins() {
        let origs = vec![pair("a:1", "p q r"), pair("b:1", "s t")];
        let plan = AugmentPlan {
            per_technique_count: 2,
            techniques: vec![
                Technique::Paraphrase,
                Technique::Generated,
                Technique::RandomParaphrasePool,
                Technique::RandomGeneratedPool,
                Technique::RandomSameCorpus,
            ],
            ..AugmentPlan::default()
        };
        let out = build_mdd_pool(&origs, &plan, &[], None).unwrap();
        assert!(out
            .iter()
            .all(|p| matches!(p.origin, Origin::Original | Origin::RandomSameCorpus)));
        assert_eq!(out.len(), 2 * (1 + 2));
    }

    #[test]
    fn mask_and_fill_requires_infiller() {
        let plan = AugmentPlan {
            techniques: vec![Technique::MaskAndFill],
            ..AugmentPlan::default()
        };
        assert!(matches!(
            build_mdd_pool(&[pair("a:1", "p q")], &plan, &[], None),
            Err(Error::UntrainedInfiller)
        ));
    }

    #[test]
    fn plan_validation() {
        assert!(AugmentPlan::default().validate().is_ok());
        for bad in [
            AugmentPlan {
                per_technique_count: 0,
                ..AugmentPlan::default()
            },
            AugmentPlan {
                drop_prob: 0.0,
                ..AugmentPlan::default()
            },
            AugmentPlan {
                repeat_max: 1,
                ..AugmentPlan::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
