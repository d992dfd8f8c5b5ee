//! Parameter sweeps over the synthetic corpus without touching the CLI.
//!
//! `cargo run --release --example tune -- sweep.toml` where the TOML may hold
//! `seeds = [..]`, `teacher_only = bool`, a `[synthetic]` table and a
//! `[pipeline]` table whose entries override the pipeline defaults.

use std::collections::BTreeMap;
use std::time::Instant;

use mdd_eval::augment::{ProviderKind, SynonymProvider};
use mdd_eval::pipeline::{run_experiment, PipelineConfig};
use mdd_eval::synthetic::{generate, SyntheticConfig};

#[derive(serde::Deserialize, Default)]
#[serde(default)]
struct Tune {
    synthetic: SyntheticConfig,
    pipeline: PipelineConfig,
    seeds: Vec<u64>,
    teacher_only: bool,
}

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let text = std::env::args().nth(1).map(std::fs::read_to_string).transpose()?.unwrap_or_default();
    // partial tables override the pipeline defaults field by field
    let mut table: toml::Table = toml::from_str(&text)?;
    let mut pipeline = toml::Table::try_from(PipelineConfig::default())?;
    if let Some(toml::Value::Table(user)) = table.remove("pipeline") {
        merge(&mut pipeline, user);
    }
    table.insert("pipeline".into(), toml::Value::Table(pipeline));
    let mut tune: Tune = table.try_into()?;
    if tune.seeds.is_empty() {
        tune.seeds = vec![0];
    }
    let corpus = generate(&tune.synthetic)?;
    let para = SynonymProvider::new("para", ProviderKind::Paraphrase, corpus.paraphrase_table.clone());
    let gen = SynonymProvider::new("gen", ProviderKind::Generative, corpus.generative_table.clone());
    let dialogues: Vec<_> = corpus.dialogues.iter().flatten().cloned().collect();
    let home = corpus.config.domains[0].clone();
    if tune.teacher_only {
        use mdd_eval::corpus::extract_pairs;
        for &s in &tune.seeds {
            let cfg = tune.pipeline.with_seed(s);
            let originals = extract_pairs(&dialogues, cfg.max_context)?;
            let vocab = mdd_eval::pipeline::vocabulary(&corpus.base, &originals, &cfg.vocab)?;
            let t = mdd_eval::teacher::train_teacher(&corpus.base, &vocab, &cfg.teacher)?;
            let rep = mdd_eval::evalharness::evaluate(&t.model, &vocab, &corpus.benchmarks, 1)?;
            let per: Vec<String> = rep.per_domain.iter().map(|(k, d)| format!("{k} {:.2}", d.spearman)).collect();
            println!("seed {s}: best val {:.3} @ {} | {}", t.report.best_val_accuracy, t.report.best_step, per.join(" "));
        }
        return Ok(());
    }
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    let start = Instant::now();
    for &s in &tune.seeds {
        let t = Instant::now();
        let r = run_experiment(&corpus.base, &dialogues, &corpus.benchmarks, &[&para, &gen], &tune.pipeline.with_seed(s))?;
        let line: Vec<String> = r.reports.iter().map(|(n, rep)| {
            let held: Vec<f64> = rep.per_domain.iter().filter(|(k, _)| **k != home).map(|(_, d)| d.spearman).collect();
            let avg = held.iter().sum::<f64>() / held.len() as f64;
            *sums.entry(n.clone()).or_default() += avg;
            let per: Vec<String> = held.iter().map(|d| format!("{d:.2}")).collect();
            format!("{n} {avg:.3} [{}] home {:.2}", per.join(" "), rep.per_domain[&home].spearman)
        }).collect();
        println!("seed {s} ({:.0}s) counts {:?}: {}", t.elapsed().as_secs_f64(), r.annotated_counts, line.join(" | "));
    }
    let n = tune.seeds.len() as f64;
    let avg: Vec<String> = sums.iter().map(|(k, v)| format!("{k} {:.3}", v / n)).collect();
    println!("mean: {}  total {:.0}s", avg.join("  "), start.elapsed().as_secs_f64());
    Ok(())
}

fn merge(dst: &mut toml::Table, src: toml::Table) {
    for (k, v) in src {
        match (dst.get_mut(&k), v) {
            (Some(toml::Value::Table(d)), toml::Value::Table(s)) => merge(d, s),
            (_, v) => {
                dst.insert(k, v);
            }
        }
    }
}
