use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use skillrank_core::model::{load_checkpoint, save_checkpoint};
use skillrank_core::rng::SplitMix64;
use skillrank_core::{
    build_weak_labels, forward, generate_synthetic_corpus, split_dataset, train_head, EmbeddingStore,
    EmbeddingVector, Error, FallbackEmbedder, NeighborhoodConfig, SkillId, TitleRecord, TrainConfig, WeakLabelSet,
};

fn fixture() -> (Vec<TitleRecord>, EmbeddingStore) {
    let corpus = generate_synthetic_corpus(30, 10, 150, 7);
    let store = FallbackEmbedder::default()
        .embed_all(corpus.iter().map(|r| r.title.as_str()))
        .unwrap();
    (corpus, store)
}

/// Independent recomputation: explicit double loop over titles, then a count
/// per taxonomy skill.
fn brute_force_labels(train: &[TitleRecord], store: &EmbeddingStore, threshold: f64) -> BTreeMap<String, BTreeMap<SkillId, f64>> {
    let taxonomy: BTreeSet<&SkillId> = train.iter().flat_map(|r| &r.skills).collect();
    let mut out = BTreeMap::new();
    for a in train {
        let va = store.get(&a.title).unwrap();
        let mut members = Vec::new();
        for b in train {
            let vb = store.get(&b.title).unwrap();
            let mut sim = 0.0;
            for i in 0..va.len() {
                sim += va[i] * vb[i];
            }
            if a.title == b.title || sim >= threshold {
                members.push(b);
            }
        }
        let mut labels = BTreeMap::new();
        for &s in &taxonomy {
            let count = members.iter().filter(|m| m.skills.contains(s)).count();
            if count > 0 {
                labels.insert(s.clone(), count as f64 / members.len() as f64);
            }
        }
        out.insert(a.title.clone(), labels);
    }
    out
}

fn clustered_corpus(seed: u64, n: usize) -> (Vec<TitleRecord>, EmbeddingStore) {
    let mut rng = SplitMix64::new(seed);
    let d = 6;
    let centers: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.next_f64() - 0.5).collect()).collect();
    let mut store = EmbeddingStore::new(d, "test");
    let mut records = Vec::new();
    for i in 0..n {
        let c = &centers[rng.below(centers.len())];
        let v: Vec<f64> = c.iter().map(|x| x + 0.25 * (rng.next_f64() - 0.5)).collect();
        let title = format!("title {i}");
        store.insert(&title, EmbeddingVector::normalized(v).unwrap()).unwrap();
        let skills: Vec<String> = (0..1 + rng.below(4)).map(|_| format!("s{}", rng.below(8))).collect();
        records.push(TitleRecord::new(&title, &skills).unwrap());
    }
    (records, store)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weak_labels_match_brute_force(seed in any::<u64>(), n in 1usize..=50, threshold in 0.5f64..1.0) {
        let (train, store) = clustered_corpus(seed, n);
        let set = build_weak_labels(&train, &store, &NeighborhoodConfig::new(threshold).unwrap()).unwrap();
        prop_assert_eq!(&set.labels, &brute_force_labels(&train, &store, threshold));
        for rec in &train {
            let labels = &set.labels[&rec.title];
            for v in labels.values() {
                prop_assert!(*v > 0.0 && *v <= 1.0);
            }
            let min_own = rec.skills.iter().map(|s| labels[s]).fold(f64::INFINITY, f64::min);
            prop_assert!(min_own >= 1.0 / train.len() as f64);
        }
    }

    #[test]
    fn weak_labels_ignore_training_order(seed in any::<u64>(), n in 2usize..=40) {
        let (mut train, store) = clustered_corpus(seed, n);
        let cfg = NeighborhoodConfig::default();
        let before = build_weak_labels(&train, &store, &cfg).unwrap();
        SplitMix64::new(seed ^ 1).shuffle(&mut train);
        prop_assert_eq!(build_weak_labels(&train, &store, &cfg).unwrap(), before);
    }
}

#[test]
fn parallel_labels_equal_single_threaded() {
    let (corpus, store) = fixture();
    let cfg = NeighborhoodConfig::default();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| build_weak_labels(&corpus, &store, &cfg).unwrap());
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| build_weak_labels(&corpus, &store, &cfg).unwrap());
    assert_eq!(single, many);
}

#[test]
fn synthetic_generic_skills_label_one() {
    let (corpus, store) = fixture();
    let set = build_weak_labels(&corpus, &store, &NeighborhoodConfig::default()).unwrap();
    let generic = skillrank_core::SyntheticConfig::new(30, 10, 150, 7).generic_skill_ids();
    for labels in set.labels.values() {
        for g in &generic {
            assert_eq!(labels[g], 1.0);
        }
    }
    // Synonym titles actually share neighborhoods.
    assert!(set.labels.values().any(|l| l.values().any(|&v| v < 1.0)));
}

fn fixture_training() -> (WeakLabelSet, Vec<TitleRecord>, EmbeddingStore) {
    let (corpus, store) = fixture();
    let split = split_dataset(&corpus, 7).unwrap();
    let labels = build_weak_labels(&split.train, &store, &NeighborhoodConfig::default()).unwrap();
    (labels, split.dev, store)
}

#[test]
fn training_is_bit_reproducible() {
    let (labels, dev, store) = fixture_training();
    let config = TrainConfig {
        learning_rate: 10.0,
        batch_size: 8,
        epochs: 15,
        patience: 15,
        seed: 3,
        ..TrainConfig::default()
    };
    let bytes = || {
        let (head, history) = train_head(&labels, &dev, &store, &config).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&head, &mut buf).unwrap();
        (buf, history)
    };
    let (a, ha) = bytes();
    let (b, hb) = bytes();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let head = load_checkpoint(a.as_slice()).unwrap();
    let mut again = Vec::new();
    save_checkpoint(&head, &mut again).unwrap();
    assert_eq!(a, again);
}

#[test]
fn default_learning_rate_loss_is_nonincreasing() {
    let (labels, dev, store) = fixture_training();
    let config = TrainConfig {
        epochs: 40,
        patience: 40,
        ..TrainConfig::default()
    };
    let (_, history) = train_head(&labels, &dev, &store, &config).unwrap();
    assert_eq!(history.epochs.len(), 40);
    for w in history.epochs[10..].windows(2) {
        assert!(
            w[1].train_loss <= w[0].train_loss + 1e-6,
            "epoch {}: {} -> {}",
            w[1].epoch,
            w[0].train_loss,
            w[1].train_loss
        );
    }
}

#[test]
fn early_stopping_keeps_best_dev_epoch() {
    let (labels, dev, store) = fixture_training();
    let config = TrainConfig {
        learning_rate: 50.0,
        batch_size: 8,
        epochs: 300,
        patience: 5,
        ..TrainConfig::default()
    };
    let (_, history) = train_head(&labels, &dev, &store, &config).unwrap();
    let best = history.best_epoch.unwrap();
    let best_map = history.epochs[best - 1].dev_map.unwrap();
    assert!(history.epochs.iter().all(|e| e.dev_map.unwrap() <= best_map));
    if history.stopped_early {
        assert_eq!(history.epochs.len(), best + config.patience);
    }
}

#[test]
fn memorizes_independent_embeddings() {
    let mut rng = SplitMix64::new(21);
    let mut store = EmbeddingStore::new(10, "basis");
    let mut train = Vec::new();
    for i in 0..10 {
        let mut v = vec![0.0; 10];
        v[i] = 1.0;
        let title = format!("title {i}");
        store.insert(&title, EmbeddingVector::normalized(v).unwrap()).unwrap();
        let skills: Vec<String> = (0..1 + rng.below(3)).map(|_| format!("skill {}", rng.below(6))).collect();
        train.push(TitleRecord::new(&title, &skills).unwrap());
    }
    let labels = build_weak_labels(&train, &store, &NeighborhoodConfig::default()).unwrap();
    let config = TrainConfig {
        learning_rate: 20.0,
        batch_size: 10,
        epochs: 2000,
        patience: 2000,
        ..TrainConfig::default()
    };
    let (head, _) = train_head(&labels, &[], &store, &config).unwrap();
    let mut err = 0.0;
    let mut count = 0;
    for (title, target) in &labels.labels {
        let p = forward(&head, store.get(title).unwrap()).unwrap();
        for (j, s) in head.skill_order().iter().enumerate() {
            err += (p[j] - target.get(s).copied().unwrap_or(0.0)).abs();
            count += 1;
        }
    }
    let mean = err / count as f64;
    assert!(mean < 0.05, "mean abs error {mean}");
}

#[test]
fn training_rejects_bad_inputs() {
    let (_, _, store) = fixture_training();
    let empty = WeakLabelSet {
        threshold: 0.75,
        provider: "x".into(),
        labels: BTreeMap::new(),
    };
    assert!(matches!(
        train_head(&empty, &[], &store, &TrainConfig::default()),
        Err(Error::EmptyInput(_))
    ));
    let mut ghost = empty.clone();
    ghost
        .labels
        .insert("ghost title".into(), BTreeMap::from([(SkillId::new("x").unwrap(), 1.0)]));
    assert!(matches!(
        train_head(&ghost, &[], &store, &TrainConfig::default()),
        Err(Error::MissingEmbedding(_))
    ));
}
