mod support;

use polyvec::eval::{evaluate, AnalogyDataset, EvalIndex};
use polyvec::model::{Architecture, TrainConfig};
use polyvec::dict::{NgramConfig, Vocabulary};
use polyvec::trainer::Trainer;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(arch: Architecture) -> TrainConfig {
    TrainConfig {
        arch,
        dim: 24,
        epochs: 5,
        ngrams: NgramConfig {
            nmin: 3,
            nmax: 5,
            bucket_count: 20_000,
        },
        min_count: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn zipf_vocabulary_is_frequency_ranked() {
    let lines = support::zipf_lines(1, 200_000, 500, 20);
    let vocab = Vocabulary::build(lines.iter().flat_map(|l| l.split_whitespace()), 1);
    let counts: Vec<u64> = vocab.entries().iter().map(|e| e.count).collect();
    assert!(counts.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(vocab.word(0), "w0");
    assert_eq!(vocab.total_tokens(), 200_000);
}

#[test]
fn loss_decreases_over_epochs() {
    let lines = support::analogy_corpus(3, 8_000, 10).lines;
    for arch in [Architecture::Skipgram, Architecture::CbowPos] {
        let (model, stats) = Trainer::new(small(arch)).train_lines(&lines).unwrap();
        assert!(model.is_finite());
        assert_eq!(stats.epoch_loss.len(), 5);
        let (first, last) = (stats.epoch_loss[0], stats.epoch_loss[4]);
        assert!(last < first, "{arch:?}: {:?}", stats.epoch_loss);
        assert!(stats.final_lr.abs() < 1e-3);
    }
}

#[test]
fn co_occurring_pairs_score_higher() {
    // "ab" always appears next to "cd"; "ef" never meets "cd".
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let filler = ["gh", "ij", "kl", "mn", "op", "qr"];
    let lines: Vec<String> = (0..3000)
        .map(|i| {
            let mut words: Vec<&str> = filler.choose_multiple(&mut rng, 3).copied().collect();
            if i % 2 == 0 {
                words.extend(["ab", "cd"]);
            } else {
                words.push("ef");
            }
            words.join(" ")
        })
        .collect();
    let cfg = TrainConfig {
        window: 1,
        subsample: 0.0,
        ..small(Architecture::Skipgram)
    };
    let (model, _) = Trainer::new(cfg).train_lines(&lines).unwrap();
    let id = |w| model.vocab().id(w).unwrap();
    let near = model.pair_probability(id("ab"), id("cd"));
    let far = model.pair_probability(id("ef"), id("cd"));
    assert!(near > far, "{near} vs {far}");
    assert!(near > 0.5);
}

#[test]
fn planted_analogies_are_recovered() {
    let corpus = support::analogy_corpus(5, 20_000, 10);
    let ds = AnalogyDataset::parse(corpus.analogies.as_bytes()).unwrap();
    assert_eq!(ds.len(), corpus.questions);
    let cfg = TrainConfig {
        dim: 40,
        ..small(Architecture::CbowPos)
    };
    let (model, _) = Trainer::new(cfg).train_lines(&corpus.lines).unwrap();
    let report = evaluate(&EvalIndex::from_model(&model, 200_000, false).unwrap(), &ds);
    assert_eq!(report.coverage(), 1.0);
    assert!(report.accuracy() > 0.8, "{report}");
}

#[test]
fn frequency_restriction_keeps_top_words() {
    let lines = support::zipf_lines(2, 50_000, 300, 20);
    let cfg = TrainConfig {
        epochs: 1,
        dim: 8,
        min_count: 1,
        ..small(Architecture::Skipgram)
    };
    let (model, _) = Trainer::new(cfg).train_lines(&lines).unwrap();
    let index = EvalIndex::from_model(&model, 100, false).unwrap();
    assert_eq!(index.len(), 100);
    for (rank, word) in index.words().iter().enumerate() {
        assert_eq!(word, model.vocab().word(rank as u32));
    }
    assert!(!index.contains(model.vocab().word(100)));
}

#[test]
fn multi_worker_training_stays_finite() {
    let lines = support::analogy_corpus(6, 10_000, 10).lines;
    let cfg = TrainConfig {
        threads: 3,
        epochs: 2,
        ..small(Architecture::CbowPos)
    };
    let trainer = Trainer::new(cfg);
    let (model, stats) = trainer.train_lines(&lines).unwrap();
    assert!(model.is_finite());
    assert_eq!(stats.processed + stats.subsample_skipped + stats.oov_skipped, 2 * 90_000);
    if cfg!(feature = "parallel") {
        assert_eq!(trainer.threads(), 3);
    } else {
        assert_eq!(trainer.threads(), 1);
    }
}

#[test]
fn unknown_words_get_ngram_vectors() {
    let corpus = support::analogy_corpus(8, 5_000, 6);
    let (model, _) = Trainer::new(small(Architecture::Skipgram)).train_lines(&corpus.lines).unwrap();
    let v = model.vector("zzzqqq").unwrap();
    assert_eq!(v.len(), model.dim());
    assert!(v.iter().any(|&x| x != 0.0));
    assert!(model.word_vector("zzzqqq").is_err());
}
