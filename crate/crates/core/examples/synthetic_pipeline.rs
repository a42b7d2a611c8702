//! End-to-end run on the synthetic corpus: split, embed, label, train, boost
//! and evaluate, printing MAP@20 against the untrained baseline.
//!
//! `cargo run --release -p skillrank-core --example synthetic_pipeline [lr] [epochs] [batch]`

use std::time::Instant;

use skillrank_core::{
    build_weak_labels, compute_idf, embedding::dot, forward, generate_synthetic_corpus, mean_average_precision,
    rank_skills, split_dataset, train_head, FallbackEmbedder, LinearHead, NeighborhoodConfig, TrainConfig,
};

fn main() -> skillrank_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let start = Instant::now();

    let corpus = generate_synthetic_corpus(30, 10, 150, 7);
    let split = split_dataset(&corpus, 7)?;
    let embedder = FallbackEmbedder::default();
    let store = embedder.embed_all(corpus.iter().map(|r| r.title.as_str()))?;
    let store = &store;

    let same: Vec<f64> = corpus
        .chunks(10)
        .flat_map(|fam| {
            let a = store.get(&fam[0].title).unwrap();
            fam[1..].iter().map(move |r| dot(a, store.get(&r.title).unwrap()))
        })
        .collect();
    let mut cross = 0.0f64;
    for a in corpus.iter().step_by(10) {
        for b in corpus.iter().step_by(7) {
            if a.title.split(' ').next() != b.title.split(' ').next() {
                cross = cross.max(dot(store.get(&a.title).unwrap(), store.get(&b.title).unwrap()));
            }
        }
    }
    let min_same = same.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean_same = same.iter().sum::<f64>() / same.len() as f64;
    println!("within-family cosine: min {min_same:.3} mean {mean_same:.3}; max cross-family {cross:.3}");

    let labels = build_weak_labels(&split.train, store, &NeighborhoodConfig::default())?;
    let config = TrainConfig {
        learning_rate: arg(1, 1e-3),
        epochs: arg(2, 100.0) as usize,
        batch_size: arg(3, 32.0) as usize,
        patience: arg(2, 100.0) as usize,
        ..TrainConfig::default()
    };
    let (head, history) = train_head(&labels, &split.dev, store, &config)?;
    let last = history.epochs.last().unwrap();
    println!(
        "trained {} epochs (best {:?}), loss {:.5}, dev MAP {:?}",
        history.epochs.len(),
        history.best_epoch,
        last.train_loss,
        last.dev_map
    );

    let eval = |h: &LinearHead| {
        mean_average_precision(
            &split.test,
            |r| Ok(rank_skills(&forward(h, &embedder.embed(&r.title)?)?, h.skill_order(), 20)),
            20,
        )
    };
    let untrained = LinearHead::zeros(head.dimension(), head.skill_order().to_vec())?;
    println!("test MAP@20 trained {:.4}", eval(&head)?.mean_ap);
    println!("test MAP@20 untrained {:.4}", eval(&untrained)?.mean_ap);
    let idf = compute_idf(&split.train)?;
    println!("idf entries {}", idf.len());
    println!("elapsed {:?}", start.elapsed());
    Ok(())
}
