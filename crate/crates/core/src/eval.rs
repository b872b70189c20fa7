//! Word-analogy evaluation (3CosAdd) with coverage reporting, and cosine
//! nearest-neighbour queries.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::{dot, normalize};
use crate::model::EmbeddingModel;

/// `a : b :: c : d`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalogyQuestion {
    pub a: String,
    pub b: String,
    pub c: String,
    pub d: String,
    pub category: String,
}

/// Analogy questions grouped by category, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnalogyDataset {
    pub questions: Vec<AnalogyQuestion>,
}

pub const DEFAULT_CATEGORY: &str = "uncategorized";

impl AnalogyDataset {
    /// Parses the Google analogy format: `: category` headers followed by
    /// lines of four space-separated words. Blank lines are ignored.
    pub fn parse<R: BufRead>(input: R) -> Result<Self> {
        let mut category = DEFAULT_CATEGORY.to_owned();
        let mut questions = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix(':') {
                let name = name.trim();
                if name.is_empty() {
                    return Err(Error::parse(n + 1, "empty category name"));
                }
                category = name.to_owned();
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            let [a, b, c, d] = words[..] else {
                return Err(Error::parse(
                    n + 1,
                    format!("expected 4 words, found {}", words.len()),
                ));
            };
            questions.push(AnalogyQuestion {
                a: a.to_owned(),
                b: b.to_owned(),
                c: c.to_owned(),
                d: d.to_owned(),
                category: category.clone(),
            });
        }
        Ok(AnalogyDataset { questions })
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }
}

/// Frequency-ordered, L2-normalized vectors used for evaluation.
#[derive(Debug, Clone)]
pub struct EvalIndex {
    words: Vec<String>,
    lookup: HashMap<String, u32>,
    dim: usize,
    vectors: Vec<f32>,
    lowercase: bool,
}

impl EvalIndex {
    /// Keeps the first `k` entries of `vectors`, which must be in
    /// frequency-rank order. With `lowercase`, words are lowercased and the
    /// higher-ranked of two colliding entries wins.
    pub fn restrict_vocab<I, S, V>(vectors: I, k: usize, lowercase: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (S, V)>,
        S: AsRef<str>,
        V: AsRef<[f32]>,
    {
        if k == 0 {
            return Err(Error::Config("restriction size must be at least 1".into()));
        }
        let mut index = EvalIndex {
            words: Vec::new(),
            lookup: HashMap::new(),
            dim: 0,
            vectors: Vec::new(),
            lowercase,
        };
        for (word, vector) in vectors.into_iter().take(k) {
            let vector = vector.as_ref();
            if index.words.is_empty() {
                index.dim = vector.len();
            } else if vector.len() != index.dim {
                return Err(Error::Config(format!(
                    "vector for {:?} has dimension {}, expected {}",
                    word.as_ref(),
                    vector.len(),
                    index.dim
                )));
            }
            let word = if lowercase {
                word.as_ref().to_lowercase()
            } else {
                word.as_ref().to_owned()
            };
            if index.lookup.contains_key(&word) {
                continue;
            }
            index.lookup.insert(word.clone(), index.words.len() as u32);
            index.words.push(word);
            let start = index.vectors.len();
            index.vectors.extend_from_slice(vector);
            normalize(&mut index.vectors[start..]);
        }
        Ok(index)
    }

    /// Index over the `k` most frequent words of a trained model.
    pub fn from_model(model: &EmbeddingModel, k: usize, lowercase: bool) -> Result<Self> {
        let n = model.vocab().len().min(k);
        let vectors = (0..n as u32).map(|id| (model.vocab().word(id), model.word_vector_by_id(id)));
        Self::restrict_vocab(vectors, k, lowercase)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    fn key<'w>(&self, word: &'w str) -> std::borrow::Cow<'w, str> {
        if self.lowercase {
            word.to_lowercase().into()
        } else {
            word.into()
        }
    }

    /// Rank of `word` in the index.
    pub fn id(&self, word: &str) -> Option<u32> {
        self.lookup.get(self.key(word).as_ref()).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.id(word).is_some()
    }

    /// Normalized vector of the word at rank `id`.
    pub fn vector(&self, id: u32) -> &[f32] {
        let start = id as usize * self.dim;
        &self.vectors[start..start + self.dim]
    }

    /// Best-scoring rank by `dot(target, ·)` among non-excluded entries;
    /// equal scores go to the lower rank.
    fn best(&self, target: &[f32], exclude: &[u32]) -> Option<u32> {
        let mut best: Option<(u32, f32)> = None;
        for id in 0..self.len() as u32 {
            if exclude.contains(&id) {
                continue;
            }
            let score = dot(target, self.vector(id));
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((id, score));
            }
        }
        best.map(|(id, _)| id)
    }

    /// Answers `a : b :: c : ?` with the word whose normalized vector is
    /// closest in cosine to `x_b − x_a + x_c`, excluding `a`, `b` and `c`.
    /// Returns `None` when a query word is missing from the index (or no
    /// candidate remains).
    pub fn analogy_answer(&self, a: &str, b: &str, c: &str) -> Option<&str> {
        let (ia, ib, ic) = (self.id(a)?, self.id(b)?, self.id(c)?);
        let mut target: Vec<f32> = self
            .vector(ib)
            .iter()
            .zip(self.vector(ia))
            .zip(self.vector(ic))
            .map(|((&xb, &xa), &xc)| xb - xa + xc)
            .collect();
        normalize(&mut target);
        self.best(&target, &[ia, ib, ic])
            .map(|id| self.words[id as usize].as_str())
    }

    /// The `topk` highest-cosine entries for `query`, best first; ties by
    /// rank. A word query excludes the word itself.
    pub fn nearest_neighbors(&self, query: &[f32], exclude: Option<u32>, topk: usize) -> Vec<(String, f32)> {
        let mut q = query.to_vec();
        normalize(&mut q);
        let mut scored: Vec<(u32, f32)> = (0..self.len() as u32)
            .filter(|&id| Some(id) != exclude)
            .map(|id| (id, dot(&q, self.vector(id))))
            .collect();
        scored.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        scored.truncate(topk);
        scored
            .into_iter()
            .map(|(id, s)| (self.words[id as usize].clone(), s))
            .collect()
    }

    /// Neighbours of `word`. Words outside the index fall back to the
    /// model's vector for them (n-gram sum for unknown words) when a model
    /// is given.
    pub fn nearest_to_word(
        &self,
        word: &str,
        model: Option<&EmbeddingModel>,
        topk: usize,
    ) -> Result<Vec<(String, f32)>> {
        if topk == 0 {
            return Err(Error::Config("topk must be at least 1".into()));
        }
        if let Some(id) = self.id(word) {
            let q = self.vector(id).to_vec();
            return Ok(self.nearest_neighbors(&q, Some(id), topk));
        }
        match model {
            Some(m) => {
                let v = m.vector(word)?;
                Ok(self.nearest_neighbors(&v, None, topk))
            }
            None => Err(Error::UnknownWord(word.to_owned())),
        }
    }
}

/// Per-category tallies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CategoryReport {
    pub category: String,
    pub correct: u64,
    pub attempted: u64,
    pub skipped: u64,
}

impl CategoryReport {
    pub fn total(&self) -> u64 {
        self.attempted + self.skipped
    }

    /// Correct over attempted; 0 when nothing was attempted.
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct, self.attempted)
    }

    /// Attempted over total; 0 for an empty category.
    pub fn coverage(&self) -> f64 {
        ratio(self.attempted, self.total())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvaluationReport {
    pub categories: Vec<CategoryReport>,
}

#[derive(Serialize)]
struct ReportSummary<'a> {
    categories: Vec<CategoryRow<'a>>,
    overall: CategoryRow<'a>,
}

#[derive(Serialize)]
struct CategoryRow<'a> {
    category: &'a str,
    correct: u64,
    attempted: u64,
    skipped: u64,
    total: u64,
    accuracy: f64,
    coverage: f64,
}

impl<'a> CategoryRow<'a> {
    fn new(name: &'a str, r: &CategoryReport) -> Self {
        CategoryRow {
            category: name,
            correct: r.correct,
            attempted: r.attempted,
            skipped: r.skipped,
            total: r.total(),
            accuracy: r.accuracy(),
            coverage: r.coverage(),
        }
    }
}

impl EvaluationReport {
    pub fn overall(&self) -> CategoryReport {
        let mut all = CategoryReport {
            category: "overall".into(),
            ..CategoryReport::default()
        };
        for c in &self.categories {
            all.correct += c.correct;
            all.attempted += c.attempted;
            all.skipped += c.skipped;
        }
        all
    }

    pub fn accuracy(&self) -> f64 {
        self.overall().accuracy()
    }

    pub fn coverage(&self) -> f64 {
        self.overall().coverage()
    }

    pub fn total(&self) -> u64 {
        self.overall().total()
    }

    /// Serializable view with derived accuracy and coverage per row.
    pub fn summary(&self) -> impl Serialize + '_ {
        ReportSummary {
            categories: self
                .categories
                .iter()
                .map(|c| CategoryRow::new(&c.category, c))
                .collect(),
            overall: CategoryRow::new("overall", &self.overall()),
        }
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let overall = self.overall();
        let width = self
            .categories
            .iter()
            .map(|c| c.category.chars().count())
            .chain(std::iter::once(overall.category.len()))
            .max()
            .unwrap_or(8)
            .max(8);
        writeln!(
            f,
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}",
            "category", "correct", "attempt", "total", "acc%", "cov%"
        )?;
        let row = |f: &mut fmt::Formatter<'_>, c: &CategoryReport| {
            writeln!(
                f,
                "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8.1}  {:>8.1}",
                c.category,
                c.correct,
                c.attempted,
                c.total(),
                100.0 * c.accuracy(),
                100.0 * c.coverage()
            )
        };
        for c in &self.categories {
            row(f, c)?;
        }
        row(f, &overall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Skipped,
    Correct,
    Wrong,
}

fn judge(index: &EvalIndex, q: &AnalogyQuestion) -> Outcome {
    if !index.contains(&q.d) {
        return Outcome::Skipped;
    }
    match index.analogy_answer(&q.a, &q.b, &q.c) {
        None => Outcome::Skipped,
        Some(answer) if answer == index.key(&q.d) => Outcome::Correct,
        Some(_) => Outcome::Wrong,
    }
}

/// Scores every question. A question counts as attempted only when all four
/// of its words are in the index.
pub fn evaluate(index: &EvalIndex, dataset: &AnalogyDataset) -> EvaluationReport {
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Outcome> = {
        use rayon::prelude::*;
        dataset.questions.par_iter().map(|q| judge(index, q)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Outcome> = dataset.questions.iter().map(|q| judge(index, q)).collect();

    let mut report = EvaluationReport::default();
    let mut slots: HashMap<&str, usize> = HashMap::new();
    for (q, outcome) in dataset.questions.iter().zip(outcomes) {
        let slot = *slots.entry(&q.category).or_insert_with(|| {
            report.categories.push(CategoryReport {
                category: q.category.clone(),
                ..CategoryReport::default()
            });
            report.categories.len() - 1
        });
        let cat = &mut report.categories[slot];
        match outcome {
            Outcome::Skipped => cat.skipped += 1,
            Outcome::Correct => {
                cat.attempted += 1;
                cat.correct += 1;
            }
            Outcome::Wrong => cat.attempted += 1,
        }
    }
    report
}
