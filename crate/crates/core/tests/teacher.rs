use mdd_eval::corpus::{ContextResponsePair, LabeledPair, Origin, PairLabel};
use mdd_eval::seed::rng_from;
use mdd_eval::teacher::{teacher_predict, train_teacher, ArchConfig, TrainConfig};
use mdd_eval::tokenizer::Vocabulary;
use rand::seq::SliceRandom;

const MARKERS: [&str; 3] = ["zorp", "blick", "quam"];
const FILLER: [&str; 8] = ["the", "cat", "sat", "on", "mat", "dog", "ran", "far"];

/// Class is decided solely by which marker word the response contains.
fn marker_set(n: usize, seed: u64) -> Vec<LabeledPair> {
    let mut rng = rng_from(seed);
    (0..n)
        .map(|i| {
            let label = PairLabel::ALL[i % 3];
            let mut words: Vec<&str> = FILLER.choose_multiple(&mut rng, 4).copied().collect();
            words.push(MARKERS[label.index()]);
            words.shuffle(&mut rng);
            let ctx: Vec<&str> = FILLER.choose_multiple(&mut rng, 3).copied().collect();
            LabeledPair {
                pair: ContextResponsePair {
                    pair_id: format!("m{}:1", i / 3),
                    context: vec![ctx.join(" ")],
                    response: words.join(" "),
                    domain: String::new(),
                    origin: Origin::Original,
                    source_pair_id: None,
                },
                label,
            }
        })
        .collect()
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        arch: ArchConfig { d_model: 16, n_layers: 1, n_heads: 2, d_ff: 32, embed_std: 0.1 },
        epochs: 50,
        batch_size: 8,
        lr: 0.05,
        max_seq_len: 24,
        val_fraction: 0.2,
        seed,
        ..TrainConfig::default()
    }
}

fn vocab() -> Vocabulary {
    let words: Vec<&str> = MARKERS.iter().chain(&FILLER).copied().collect();
    Vocabulary::from_words(&words).unwrap()
}

#[test]
fn separable_marker_set_is_learned() {
    let data = marker_set(60, 1);
    let vocab = vocab();
    let trained = train_teacher(&data, &vocab, &small_config(3)).unwrap();
    let last = trained.report.records.last().unwrap();
    eprintln!("best val {} at step {}, last {:?}", trained.report.best_val_accuracy, trained.report.best_step, last);
    assert_eq!(trained.report.best_val_accuracy, 1.0);
    for lp in marker_set(30, 99) {
        let p = teacher_predict(&trained.model, &vocab, &lp.pair).unwrap();
        assert_eq!(p.hard_class(), lp.label);
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn same_seed_same_loss() {
    let data = marker_set(30, 2);
    let vocab = vocab();
    let mut cfg = small_config(5);
    cfg.epochs = 3;
    let a = train_teacher(&data, &vocab, &cfg).unwrap();
    let b = train_teacher(&data, &vocab, &cfg).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.model.weights, b.model.weights);
}

#[test]
fn single_class_rejected() {
    let data: Vec<_> = marker_set(30, 2).into_iter().filter(|p| p.label == PairLabel::Random).collect();
    assert!(matches!(
        train_teacher(&data, &vocab(), &small_config(1)),
        Err(mdd_eval::Error::MissingClasses(ref m)) if m.len() == 2
    ));
}
