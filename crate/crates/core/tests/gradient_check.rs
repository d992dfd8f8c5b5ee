mod common;

use common::{gradient_check, loss_only, random_example, tiny_model};

const VOCAB: usize = 20;

fn worst(seed: u64, ce: f64, kl: f64, mlm: f64) -> (String, f64) {
    let model = tiny_model(seed, VOCAB);
    let ex = random_example(seed, VOCAB, 16);
    gradient_check(&model, &ex, &loss_only(ce, kl, mlm), 1e-5)
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

#[test]
fn cross_entropy_gradient() {
    for seed in 0..3 {
        let (block, err) = worst(seed, 1.0, 0.0, 0.0);
        assert!(err < 1e-4, "seed {seed}: {block} rel err {err:e}");
    }
}

#[test]
fn consistency_kl_gradient() {
    for seed in 0..3 {
        let (block, err) = worst(seed, 0.0, 1.0, 0.0);
        assert!(err < 1e-4, "seed {seed}: {block} rel err {err:e}");
    }
}

#[test]
fn masked_lm_gradient() {
    for seed in 0..3 {
        let (block, err) = worst(seed, 0.0, 0.0, 1.0);
        assert!(err < 1e-4, "seed {seed}: {block} rel err {err:e}");
    }
}

#[test]
fn composite_gradient() {
    let (block, err) = worst(11, 1.0, 1.0, 1.0);
    assert!(err < 1e-4, "{block} rel err {err:e}");
}
