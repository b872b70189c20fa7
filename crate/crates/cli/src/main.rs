use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use polyvec::corpus::{run_pipeline, FilterConfig};
use polyvec::eval::{evaluate, AnalogyDataset, EvalIndex};
use polyvec::formats;
use polyvec::langid::{evaluate_langid, LangIdConfig, LangIdModel};
use polyvec::model::EmbeddingModel;
use polyvec::trainer::{Preset, TrainProgress, Trainer};
use polyvec::Error;

/// Multilingual subword word vectors: corpus preparation, training and
/// analogy evaluation.
#[derive(Parser)]
#[command(name = "polyvec", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a language identifier on labeled lines.
    LangidTrain(LangidTrainArgs),
    /// Predict the language of each stdin line.
    LangidPredict(LangidPredictArgs),
    /// Accuracy and throughput of a language identifier on labeled lines.
    LangidEval(LangidEvalArgs),
    /// Filter by language, deduplicate and tokenize stdin to stdout.
    Pipeline(PipelineArgs),
    /// Train word vectors on a tokenized corpus.
    Train(TrainArgs),
    /// Evaluate vectors on a word-analogy dataset.
    EvalAnalogy(EvalArgs),
    /// Nearest neighbours of a word (or of each stdin word).
    Nn(NnArgs),
    /// Write a model's word vectors as a .vec text file.
    ExportVec(ExportArgs),
    /// Write a model's vocabulary as word<TAB>count lines.
    ExportVocab(ExportArgs),
}

#[derive(Args)]
struct LangidTrainArgs {
    /// Labeled lines: `__label__<code> <text>` or `<code><TAB><text>`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    epoch: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f32,
    #[arg(long, default_value_t = 2)]
    minn: usize,
    #[arg(long, default_value_t = 4)]
    maxn: usize,
    #[arg(long, default_value_t = 1 << 21)]
    bucket: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct LangidPredictArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct LangidEvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labeled lines, same format as for training.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// Target language code.
    #[arg(long)]
    lang: String,
    /// Keep lines with strictly more characters than this.
    #[arg(long, default_value_t = 100)]
    min_chars: usize,
    #[arg(long, default_value_t = 0.8)]
    min_conf: f64,
    #[arg(long)]
    langid_model: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// baseline, ngram55, cbow, cbow_neg10, cbow_neg10_ep10 or crawl.
    #[arg(long, default_value = "baseline")]
    preset: String,
    /// Tokenized corpus, one sentence per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    /// Context window radius.
    #[arg(long)]
    ws: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    neg: Option<usize>,
    #[arg(long)]
    epoch: Option<usize>,
    #[arg(long)]
    minn: Option<usize>,
    #[arg(long)]
    maxn: Option<usize>,
    #[arg(long)]
    bucket: Option<u32>,
    #[arg(long)]
    min_count: Option<u64>,
    /// Subsampling threshold; 0 disables it.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Keep CBOW position vectors fixed at all ones.
    #[arg(long)]
    freeze_positions: bool,
    /// Also write the word vectors to this .vec file.
    #[arg(long)]
    vec_output: Option<PathBuf>,
    /// Suppress progress output on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct VectorSource {
    /// Binary model produced by `train`.
    #[arg(long, conflicts_with = "vectors", required_unless_present = "vectors")]
    model: Option<PathBuf>,
    /// .vec text file, rows in frequency order.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Number of most frequent words kept for evaluation.
    #[arg(long, default_value_t = 200_000)]
    restrict: usize,
    /// Lowercase both the vocabulary and the queries.
    #[arg(long)]
    lowercase: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    source: VectorSource,
    /// Analogy file: `: category` headers and `a b c d` lines.
    #[arg(long)]
    dataset: PathBuf,
    /// Emit the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct NnArgs {
    #[command(flatten)]
    source: VectorSource,
    /// Query word; queries are read from stdin when absent.
    #[arg(long)]
    word: Option<String>,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn read_labeled(path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = match line.strip_prefix("__label__") {
            Some(rest) => rest.split_once(' '),
            None => line.split_once('\t'),
        };
        let Some((label, text)) = parsed else {
            bail!("{}:{}: expected a labeled line", path.display(), n + 1);
        };
        out.push((label.to_owned(), text.to_owned()));
    }
    Ok(out)
}

fn langid_train(args: LangidTrainArgs) -> Result<()> {
    let examples = read_labeled(&args.input)?;
    let cfg = LangIdConfig {
        dim: args.dim,
        nmin: args.minn,
        nmax: args.maxn,
        buckets: args.bucket,
        epochs: args.epoch,
        lr: args.lr,
        seed: args.seed,
    };
    let (model, stats) = LangIdModel::train(&examples, &cfg)?;
    formats::save_langid(&args.output, &model)?;
    eprintln!(
        "labels: {}  examples: {}  unclassifiable: {}  final loss: {:.4}",
        model.labels().len(),
        stats.examples,
        stats.unclassifiable,
        stats.epoch_loss.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn langid_predict(args: LangidPredictArgs) -> Result<()> {
    let model = formats::load_langid(&args.model)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for line in io::stdin().lock().lines() {
        let line = line?;
        match model.predict(&line) {
            Ok(p) => writeln!(out, "{}\t{:.6}", p.label, p.confidence)?,
            Err(Error::Unclassifiable) => writeln!(out, "?\t0")?,
            Err(e) => return Err(e.into()),
        }
    }
    out.flush()?;
    Ok(())
}

fn langid_eval(args: LangidEvalArgs) -> Result<()> {
    let model = formats::load_langid(&args.model)?;
    let examples = read_labeled(&args.input)?;
    let e = evaluate_langid(&model, &examples);
    println!(
        "lines {}  accuracy {:.2}%  unclassifiable {}  time {:.3}s  lines/s {:.0}",
        e.lines,
        100.0 * e.accuracy(),
        e.unclassifiable,
        e.seconds,
        e.lines_per_second()
    );
    Ok(())
}

fn pipeline(args: PipelineArgs) -> Result<()> {
    let model = formats::load_langid(&args.langid_model)?;
    let cfg = FilterConfig {
        min_chars: args.min_chars,
        min_confidence: args.min_conf,
        target_language: args.lang,
    };
    let stdout = io::stdout();
    let out = BufWriter::new(stdout.lock());
    match run_pipeline(io::stdin().lock(), out, &cfg, &model) {
        Ok(stats) => {
            eprintln!("{}", serde_json::to_string_pretty(&stats)?);
            Ok(())
        }
        Err(failure) => {
            eprintln!("{}", serde_json::to_string_pretty(&failure.partial)?);
            Err(failure.into())
        }
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let preset: Preset = args.preset.parse()?;
    let mut cfg = preset.config();
    if let Some(v) = args.dim {
        cfg.dim = v;
    }
    if let Some(v) = args.ws {
        cfg.window = v;
    }
    if let Some(v) = args.lr {
        cfg.lr0 = v;
    }
    if let Some(v) = args.neg {
        cfg.negatives = v;
    }
    if let Some(v) = args.epoch {
        cfg.epochs = v;
    }
    if let Some(v) = args.minn {
        cfg.ngrams.nmin = v;
    }
    if let Some(v) = args.maxn {
        cfg.ngrams.nmax = v;
    }
    if let Some(v) = args.bucket {
        cfg.ngrams.bucket_count = v;
    }
    if let Some(v) = args.min_count {
        cfg.min_count = v;
    }
    if let Some(v) = args.t {
        cfg.subsample = v;
    }
    cfg.threads = args.threads;
    cfg.seed = args.seed;
    cfg.freeze_positions = args.freeze_positions;
    cfg.validate()?;

    let lines: Vec<String> = open(&args.input)?.lines().collect::<io::Result<_>>()?;
    let report = |p: &TrainProgress| {
        eprint!(
            "\repoch {:>3}  tokens {:>12}  lr {:.6}  loss {:.4}   ",
            p.epoch + 1,
            p.tokens_processed,
            p.current_lr,
            p.running_loss
        );
    };
    let trainer = Trainer::new(cfg);
    let trainer = if args.quiet { trainer } else { trainer.with_progress(&report) };
    let (model, stats) = trainer.train_lines(&lines)?;
    if !args.quiet {
        eprintln!();
        eprintln!(
            "{} ({}): vocab {}  tokens kept {}  subsampled {}  oov {}  epoch losses {:?}",
            preset.name(),
            model.config().arch.name(),
            model.vocab().len(),
            stats.processed,
            stats.subsample_skipped,
            stats.oov_skipped,
            stats
                .epoch_loss
                .iter()
                .map(|l| (l * 1e4).round() / 1e4)
                .collect::<Vec<_>>()
        );
    }
    formats::save_model(&args.output, &model)?;
    if let Some(path) = args.vec_output {
        formats::save_vec(path, &formats::model_vectors(&model))?;
    }
    Ok(())
}

fn load_index(source: &VectorSource) -> Result<(EvalIndex, Option<EmbeddingModel>)> {
    match (&source.model, &source.vectors) {
        (Some(path), _) => {
            let model = formats::load_model(path)?;
            let index = EvalIndex::from_model(&model, source.restrict, source.lowercase)?;
            Ok((index, Some(model)))
        }
        (None, Some(path)) => {
            let table = formats::load_vec(path)?;
            let index = EvalIndex::restrict_vocab(table.rows, source.restrict, source.lowercase)?;
            Ok((index, None))
        }
        (None, None) => bail!("either --model or --vectors is required"),
    }
}

fn eval_analogy(args: EvalArgs) -> Result<()> {
    let (index, _) = load_index(&args.source)?;
    let dataset = AnalogyDataset::parse(open(&args.dataset)?)?;
    let report = evaluate(&index, &dataset);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report.summary())?);
    } else {
        print!("{report}");
    }
    Ok(())
}

fn nn(args: NnArgs) -> Result<()> {
    let (index, model) = load_index(&args.source)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let query = |word: &str, out: &mut dyn Write| -> Result<()> {
        let hits = index.nearest_to_word(word, model.as_ref(), args.k)?;
        for (w, score) in hits {
            writeln!(out, "{w}\t{score:.6}")?;
        }
        Ok(())
    };
    match &args.word {
        Some(w) => query(w, &mut out)?,
        None => {
            for line in io::stdin().lock().lines() {
                let line = line?;
                let word = line.trim();
                if word.is_empty() {
                    continue;
                }
                writeln!(out, "# {word}")?;
                if let Err(e) = query(word, &mut out) {
                    writeln!(out, "! {e}")?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn export_vec(args: ExportArgs) -> Result<()> {
    let model = formats::load_model(&args.model)?;
    formats::save_vec(&args.output, &formats::model_vectors(&model))?;
    Ok(())
}

fn export_vocab(args: ExportArgs) -> Result<()> {
    let model = formats::load_model(&args.model)?;
    let mut out = create(&args.output)?;
    model.vocab().dump(&mut out)?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::LangidTrain(a) => langid_train(a),
        Command::LangidPredict(a) => langid_predict(a),
        Command::LangidEval(a) => langid_eval(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Train(a) => train(a),
        Command::EvalAnalogy(a) => eval_analogy(a),
        Command::Nn(a) => nn(a),
        Command::ExportVec(a) => export_vec(a),
        Command::ExportVocab(a) => export_vocab(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
