//! Epoch driver for the embedding models, plus the configuration presets of
//! the model-variant ladder.
//!
//! Per sentence a worker: computes the learning rate from the global token
//! counter; subsamples the in-vocabulary tokens (one uniform draw per token
//! whose keep probability is below 1); then, for every kept center token,
//! draws a window radius `b ~ U[1, window]` and either runs one skipgram
//! step per context word (negatives drawn before each step) or one CBOW
//! step for the center (negatives drawn once). Windows never cross sentence
//! boundaries. With one worker and a fixed seed the result is bit-exact.

use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dict::{NgramConfig, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{
    Architecture, DataSource, EmbeddingModel, NegativeSampler, Scratch, SharedModel, TrainConfig,
};

/// Sentences longer than this are split into independent chunks.
pub const MAX_SENTENCE_TOKENS: usize = 1000;
const PROGRESS_INTERVAL: u64 = 10_000;
const OOV: u32 = u32::MAX;

/// Named configurations of the variant ladder. Each one adds to the
/// previous: 5-5 n-grams, then CBOW with position weights, then 10
/// negatives, then 10 epochs; `crawl` is the last one trained on
/// Wikipedia plus crawl data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Baseline,
    Ngram55,
    Cbow,
    CbowNeg10,
    CbowNeg10Ep10,
    Crawl,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Baseline,
        Preset::Ngram55,
        Preset::Cbow,
        Preset::CbowNeg10,
        Preset::CbowNeg10Ep10,
        Preset::Crawl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Baseline => "baseline",
            Preset::Ngram55 => "ngram55",
            Preset::Cbow => "cbow",
            Preset::CbowNeg10 => "cbow_neg10",
            Preset::CbowNeg10Ep10 => "cbow_neg10_ep10",
            Preset::Crawl => "crawl",
        }
    }

    pub fn config(self) -> TrainConfig {
        let base = TrainConfig::default();
        let ngram55 = NgramConfig {
            nmin: 5,
            nmax: 5,
            ..base.ngrams
        };
        match self {
            Preset::Baseline => base,
            Preset::Ngram55 => TrainConfig {
                ngrams: ngram55,
                ..base
            },
            Preset::Cbow => TrainConfig {
                arch: Architecture::CbowPos,
                ..Preset::Ngram55.config()
            },
            Preset::CbowNeg10 => TrainConfig {
                negatives: 10,
                ..Preset::Cbow.config()
            },
            Preset::CbowNeg10Ep10 => TrainConfig {
                epochs: 10,
                ..Preset::CbowNeg10.config()
            },
            Preset::Crawl => TrainConfig {
                data_source: DataSource::WikipediaAndCrawl,
                ..Preset::CbowNeg10Ep10.config()
            },
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_owned()))
    }
}

pub fn variant_preset(name: &str) -> Result<TrainConfig> {
    Ok(name.parse::<Preset>()?.config())
}

/// Sentences encoded as vocabulary ids; out-of-vocabulary tokens are kept
/// as placeholders so token accounting covers the whole corpus.
#[derive(Debug, Clone, Default)]
pub struct EncodedCorpus {
    sentences: Vec<Vec<u32>>,
    tokens: u64,
}

impl EncodedCorpus {
    pub fn encode<I, S>(lines: I, vocab: &Vocabulary) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut corpus = EncodedCorpus::default();
        for line in lines {
            let ids: Vec<u32> = line
                .as_ref()
                .split_whitespace()
                .map(|w| vocab.id(w).unwrap_or(OOV))
                .collect();
            for chunk in ids.chunks(MAX_SENTENCE_TOKENS) {
                corpus.tokens += chunk.len() as u64;
                corpus.sentences.push(chunk.to_vec());
            }
        }
        corpus
    }

    pub fn sentences(&self) -> impl Iterator<Item = impl Iterator<Item = Option<u32>> + '_> {
        self.sentences
            .iter()
            .map(|s| s.iter().map(|&id| (id != OOV).then_some(id)))
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn tokens(&self) -> u64 {
        self.tokens
    }
}

/// Snapshot reported to progress callbacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainProgress {
    pub tokens_processed: u64,
    pub current_lr: f32,
    pub epoch: usize,
    /// Exponential moving average of the per-example loss (of the reporting
    /// worker).
    pub running_loss: f64,
}

/// Token accounting and loss summary of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainStats {
    pub processed: u64,
    pub subsample_skipped: u64,
    pub oov_skipped: u64,
    pub examples: u64,
    /// Mean per-example loss of each epoch.
    pub epoch_loss: Vec<f64>,
    pub final_lr: f32,
}

#[derive(Debug, Default, Clone, Copy)]
struct WorkerStats {
    processed: u64,
    subsample_skipped: u64,
    oov_skipped: u64,
    examples: u64,
    loss: f64,
}

impl WorkerStats {
    fn merge(&mut self, o: &WorkerStats) {
        self.processed += o.processed;
        self.subsample_skipped += o.subsample_skipped;
        self.oov_skipped += o.oov_skipped;
        self.examples += o.examples;
        self.loss += o.loss;
    }
}

/// Linearly decayed learning rate after `done` of `planned` tokens.
pub fn learning_rate(lr0: f32, done: u64, planned: u64) -> f32 {
    if planned == 0 {
        return lr0;
    }
    lr0 * (1.0 - done as f64 / planned as f64).max(0.0) as f32
}

/// Seed of worker `index`'s random stream.
pub fn worker_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub struct Trainer<'a> {
    config: TrainConfig,
    progress: Option<&'a (dyn Fn(&TrainProgress) + Sync)>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig) -> Self {
        Trainer {
            config,
            progress: None,
        }
    }

    /// Reports progress roughly every 10k tokens per worker.
    pub fn with_progress(mut self, f: &'a (dyn Fn(&TrainProgress) + Sync)) -> Self {
        self.progress = Some(f);
        self
    }

    /// Number of workers that will actually run.
    pub fn threads(&self) -> usize {
        if cfg!(feature = "parallel") {
            self.config.threads.max(1)
        } else {
            1
        }
    }

    /// Builds the vocabulary from `lines` (whitespace-tokenized) and trains.
    pub fn train_lines<S: AsRef<str>>(&self, lines: &[S]) -> Result<(EmbeddingModel, TrainStats)> {
        let vocab = Vocabulary::build(
            lines.iter().flat_map(|l| l.as_ref().split_whitespace()),
            self.config.min_count,
        );
        if vocab.is_empty() {
            return Err(Error::Empty("vocabulary"));
        }
        let corpus = EncodedCorpus::encode(lines, &vocab);
        self.train(&corpus, vocab)
    }

    pub fn train(
        &self,
        corpus: &EncodedCorpus,
        vocab: Vocabulary,
    ) -> Result<(EmbeddingModel, TrainStats)> {
        let mut model = EmbeddingModel::new(vocab, self.config.clone())?;
        let stats = self.train_model(&mut model, corpus)?;
        Ok((model, stats))
    }

    /// Trains an already initialized model in place.
    pub fn train_model(
        &self,
        model: &mut EmbeddingModel,
        corpus: &EncodedCorpus,
    ) -> Result<TrainStats> {
        let cfg = &self.config;
        cfg.validate()?;
        let keep = model.vocab().keep_probabilities(cfg.subsample);
        let sampler = NegativeSampler::new(model.vocab());
        let planned = cfg.epochs as u64 * corpus.tokens();
        let counter = AtomicU64::new(0);

        let threads = self.threads().min(corpus.num_sentences().max(1));
        let shards = shard_sentences(&corpus.sentences, threads);
        let mut rngs: Vec<ChaCha8Rng> = (0..threads)
            .map(|i| ChaCha8Rng::seed_from_u64(worker_seed(cfg.seed, i)))
            .collect();

        let mut stats = TrainStats {
            final_lr: cfg.lr0,
            ..TrainStats::default()
        };
        let shared = SharedModel::new(model);
        let ctx = EpochContext {
            shared: &shared,
            cfg,
            keep: &keep,
            sampler: &sampler,
            counter: &counter,
            planned,
            progress: self.progress,
        };

        #[cfg(feature = "parallel")]
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::Config(e.to_string()))?,
            )
        } else {
            None
        };

        for epoch in 0..cfg.epochs {
            let mut epoch_stats = WorkerStats::default();
            #[cfg(feature = "parallel")]
            let per_worker: Vec<WorkerStats> = match &pool {
                Some(pool) => {
                    use rayon::prelude::*;
                    pool.install(|| {
                        rngs.par_iter_mut()
                            .zip(shards.par_iter())
                            .map(|(rng, shard)| ctx.run(epoch, shard, rng))
                            .collect()
                    })
                }
                None => rngs
                    .iter_mut()
                    .zip(&shards)
                    .map(|(rng, shard)| ctx.run(epoch, shard, rng))
                    .collect(),
            };
            #[cfg(not(feature = "parallel"))]
            let per_worker: Vec<WorkerStats> = rngs
                .iter_mut()
                .zip(&shards)
                .map(|(rng, shard)| ctx.run(epoch, shard, rng))
                .collect();

            for w in &per_worker {
                epoch_stats.merge(w);
            }
            stats.processed += epoch_stats.processed;
            stats.subsample_skipped += epoch_stats.subsample_skipped;
            stats.oov_skipped += epoch_stats.oov_skipped;
            stats.examples += epoch_stats.examples;
            stats.epoch_loss.push(if epoch_stats.examples > 0 {
                epoch_stats.loss / epoch_stats.examples as f64
            } else {
                0.0
            });
        }
        stats.final_lr = learning_rate(cfg.lr0, counter.load(Ordering::Relaxed), planned);
        Ok(stats)
    }
}

fn shard_sentences(sentences: &[Vec<u32>], parts: usize) -> Vec<&[Vec<u32>]> {
    if parts <= 1 {
        return vec![sentences];
    }
    let total: usize = sentences.iter().map(Vec::len).sum();
    let per = total.div_ceil(parts).max(1);
    let mut shards = Vec::with_capacity(parts);
    let (mut start, mut acc) = (0, 0);
    for (i, s) in sentences.iter().enumerate() {
        acc += s.len();
        if acc >= per && shards.len() + 1 < parts {
            shards.push(&sentences[start..=i]);
            start = i + 1;
            acc = 0;
        }
    }
    shards.push(&sentences[start..]);
    while shards.len() < parts {
        shards.push(&[]);
    }
    shards
}

struct EpochContext<'a, 'm> {
    shared: &'a SharedModel<'m>,
    cfg: &'a TrainConfig,
    keep: &'a [f64],
    sampler: &'a NegativeSampler,
    counter: &'a AtomicU64,
    planned: u64,
    progress: Option<&'a (dyn Fn(&TrainProgress) + Sync)>,
}

impl EpochContext<'_, '_> {
    fn run(&self, epoch: usize, shard: &[Vec<u32>], rng: &mut ChaCha8Rng) -> WorkerStats {
        let cfg = self.cfg;
        let mut stats = WorkerStats::default();
        let mut scratch = Scratch::new(cfg.dim);
        let mut kept: Vec<u32> = Vec::with_capacity(MAX_SENTENCE_TOKENS);
        let mut negatives = Vec::with_capacity(cfg.negatives);
        let mut context: Vec<(i32, u32)> = Vec::with_capacity(2 * cfg.window);
        let mut running_loss = f64::NAN;
        let mut since_report = 0u64;

        for sentence in shard {
            let done = self.counter.fetch_add(sentence.len() as u64, Ordering::Relaxed);
            let lr = learning_rate(cfg.lr0, done, self.planned);

            kept.clear();
            for &id in sentence {
                if id == OOV {
                    stats.oov_skipped += 1;
                    continue;
                }
                let p = self.keep[id as usize];
                if p < 1.0 && rng.gen::<f64>() >= p {
                    stats.subsample_skipped += 1;
                    continue;
                }
                kept.push(id);
            }
            stats.processed += kept.len() as u64;

            for pos in 0..kept.len() {
                let b = rng.gen_range(1..=cfg.window);
                let lo = pos.saturating_sub(b);
                let hi = (pos + b).min(kept.len() - 1);
                let center = kept[pos];
                match cfg.arch {
                    Architecture::Skipgram => {
                        for ctx in (lo..=hi).filter(|&c| c != pos) {
                            self.sampler
                                .sample_into(rng, kept[ctx], cfg.negatives, &mut negatives);
                            // SAFETY: hogwild contract of SharedModel.
                            let loss = unsafe {
                                self.shared
                                    .skipgram_step(center, kept[ctx], &negatives, lr, &mut scratch)
                            };
                            record(&mut stats, &mut running_loss, loss);
                        }
                    }
                    Architecture::CbowPos => {
                        context.clear();
                        context.extend(
                            (lo..=hi)
                                .filter(|&c| c != pos)
                                .map(|c| (c as i32 - pos as i32, kept[c])),
                        );
                        if context.is_empty() {
                            continue;
                        }
                        self.sampler
                            .sample_into(rng, center, cfg.negatives, &mut negatives);
                        // SAFETY: as above.
                        let loss = unsafe {
                            self.shared
                                .cbow_step(center, &context, &negatives, lr, &mut scratch)
                        };
                        record(&mut stats, &mut running_loss, loss);
                    }
                }
            }

            since_report += sentence.len() as u64;
            if since_report >= PROGRESS_INTERVAL {
                since_report = 0;
                if let Some(report) = self.progress {
                    report(&TrainProgress {
                        tokens_processed: done + sentence.len() as u64,
                        current_lr: lr,
                        epoch,
                        running_loss,
                    });
                }
            }
        }
        stats
    }
}

fn record(stats: &mut WorkerStats, running: &mut f64, loss: f32) {
    let loss = f64::from(loss);
    stats.loss += loss;
    stats.examples += 1;
    *running = if running.is_nan() {
        loss
    } else {
        0.99 * *running + 0.01 * loss
    };
}
