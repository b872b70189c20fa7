//! Skipgram with subword information and position-weighted CBOW, trained
//! with negative sampling.
//!
//! A word `w` is represented by `u_w`, the sum of its own input row and the
//! input rows of its hashed character n-grams. Skipgram predicts each
//! context word from `u_center`; CBOW predicts the center word from
//! `h = Σ_i c_i ⊙ u_{w_i}` where `c_i` is a learned vector for window
//! offset `i`.
//!
//! The free functions in this module are the pure forward/gradient kernels
//! (generic over the float type so they can be checked in `f64`). The
//! `*_step` methods are the in-place `f32` updates the trainer runs.

use std::marker::PhantomData;

use num_traits::Float;
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::WeightedAliasIndex;

use crate::dict::{char_ngrams, ngram_bucket, NgramConfig, Vocabulary};
use crate::error::{Error, Result};
use crate::math::{axpy, dot, log_sigmoid, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Skipgram,
    CbowPos,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Skipgram => "skipgram",
            Architecture::CbowPos => "cbow_pos",
        }
    }
}

/// Where a configuration is meant to get its training text from. Purely
/// descriptive; it does not change training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Wikipedia,
    WikipediaAndCrawl,
}

/// Hyperparameters for embedding training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub lr0: f32,
    pub ngrams: NgramConfig,
    pub min_count: u64,
    pub subsample: f64,
    pub seed: u64,
    pub threads: usize,
    /// Keep the CBOW position vectors at their initial all-ones value.
    pub freeze_positions: bool,
    pub data_source: DataSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: Architecture::Skipgram,
            dim: 100,
            window: 5,
            epochs: 5,
            negatives: 5,
            lr0: 0.05,
            ngrams: NgramConfig::default(),
            min_count: 5,
            subsample: 1e-4,
            seed: 1,
            threads: 1,
            freeze_positions: false,
            data_source: DataSource::Wikipedia,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.ngrams.validate()?;
        let positive = [
            ("dim", self.dim),
            ("window", self.window),
            ("negatives", self.negatives),
            ("threads", self.threads),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.ngrams.bucket_count == 0 {
            return Err(Error::Config("bucket count must be positive".into()));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.subsample >= 0.0) {
            return Err(Error::Config("subsampling threshold must be >= 0".into()));
        }
        if self.min_count == 0 {
            return Err(Error::Config("min_count must be positive".into()));
        }
        Ok(())
    }
}

/// Row-major dense `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Format(format!(
                "matrix data has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn uniform<R: Rng>(rows: usize, cols: usize, bound: f32, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(-bound, bound);
        let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Index of the position vector for window offset `offset` (never 0).
pub fn position_index(offset: i32, window: usize) -> usize {
    debug_assert!(offset != 0 && offset.unsigned_abs() as usize <= window);
    if offset < 0 {
        (offset + window as i32) as usize
    } else {
        (offset + window as i32 - 1) as usize
    }
}

/// Input-row indices of a vocabulary word: its own row, then its n-gram
/// buckets (offset past the word rows), in n-gram enumeration order.
/// Words containing a boundary marker are represented by their own row only.
fn subword_rows(id: u32, word: &str, nwords: usize, ngrams: &NgramConfig) -> Vec<u32> {
    let mut rows = vec![id];
    if let Ok(grams) = char_ngrams(word, ngrams) {
        rows.extend(
            grams
                .iter()
                .map(|g| (nwords as u64 + ngram_bucket(g, ngrams.bucket_count.into())) as u32),
        );
    }
    rows
}

/// Trained (or in-training) embedding model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    config: TrainConfig,
    vocab: Vocabulary,
    input: Matrix,
    output: Matrix,
    positions: Option<Matrix>,
    subwords: Vec<Vec<u32>>,
}

impl EmbeddingModel {
    /// Fresh model: input rows uniform in `[-1/dim, 1/dim]`, output rows
    /// zero, position vectors all ones.
    pub fn new(vocab: Vocabulary, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(Error::Empty("vocabulary"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let nwords = vocab.len();
        let dim = config.dim;
        let input = Matrix::uniform(
            nwords + config.ngrams.bucket_count as usize,
            dim,
            1.0 / dim as f32,
            &mut rng,
        );
        let output = Matrix::zeros(nwords, dim);
        let positions = match config.arch {
            Architecture::CbowPos => Some(Matrix::filled(2 * config.window, dim, 1.0)),
            Architecture::Skipgram => None,
        };
        Self::from_parts(config, vocab, input, output, positions)
    }

    /// Assembles a model from its stored parts, checking shapes.
    pub fn from_parts(
        config: TrainConfig,
        vocab: Vocabulary,
        input: Matrix,
        output: Matrix,
        positions: Option<Matrix>,
    ) -> Result<Self> {
        let nwords = vocab.len();
        let dim = config.dim;
        let want_input = nwords + config.ngrams.bucket_count as usize;
        if input.rows() != want_input || input.cols() != dim {
            return Err(Error::Format("input matrix shape mismatch".into()));
        }
        if output.rows() != nwords || output.cols() != dim {
            return Err(Error::Format("output matrix shape mismatch".into()));
        }
        match (&positions, config.arch) {
            (Some(p), Architecture::CbowPos) => {
                if p.rows() != 2 * config.window || p.cols() != dim {
                    return Err(Error::Format("position matrix shape mismatch".into()));
                }
            }
            (None, Architecture::Skipgram) => {}
            _ => {
                return Err(Error::Format(
                    "position vectors present iff the architecture is cbow_pos".into(),
                ))
            }
        }
        let subwords = vocab
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| subword_rows(i as u32, &e.word, nwords, &config.ngrams))
            .collect();
        Ok(EmbeddingModel {
            config,
            vocab,
            input,
            output,
            positions,
            subwords,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn input(&self) -> &Matrix {
        &self.input
    }

    pub fn input_mut(&mut self) -> &mut Matrix {
        &mut self.input
    }

    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn output_mut(&mut self) -> &mut Matrix {
        &mut self.output
    }

    pub fn positions(&self) -> Option<&Matrix> {
        self.positions.as_ref()
    }

    pub fn positions_mut(&mut self) -> Option<&mut Matrix> {
        self.positions.as_mut()
    }

    /// Input rows summed to form `u_w` for vocabulary word `id`.
    pub fn subwords(&self, id: u32) -> &[u32] {
        &self.subwords[id as usize]
    }

    pub fn is_finite(&self) -> bool {
        self.input.is_finite()
            && self.output.is_finite()
            && self.positions.as_ref().is_none_or(Matrix::is_finite)
    }

    /// `u_w` for a vocabulary word id.
    pub fn word_vector_by_id(&self, id: u32) -> Vec<f32> {
        let mut v = vec![0.0; self.dim()];
        for &row in self.subwords(id) {
            axpy(1.0, self.input.row(row as usize), &mut v);
        }
        v
    }

    /// `u_w` for an in-vocabulary word.
    pub fn word_vector(&self, word: &str) -> Result<Vec<f32>> {
        let id = self
            .vocab
            .id(word)
            .ok_or_else(|| Error::UnknownWord(word.to_owned()))?;
        Ok(self.word_vector_by_id(id))
    }

    /// Sum of the n-gram bucket rows of `word`, ignoring any word row.
    pub fn oov_vector(&self, word: &str) -> Result<Vec<f32>> {
        let grams = char_ngrams(word, &self.config.ngrams)?;
        if grams.is_empty() {
            return Err(Error::Unrepresentable(word.to_owned()));
        }
        let nwords = self.vocab.len();
        let mut v = vec![0.0; self.dim()];
        for g in &grams {
            let row = nwords + ngram_bucket(g, self.config.ngrams.bucket_count.into()) as usize;
            axpy(1.0, self.input.row(row), &mut v);
        }
        Ok(v)
    }

    /// Vector for any word: `u_w` when known, otherwise its n-gram sum.
    pub fn vector(&self, word: &str) -> Result<Vec<f32>> {
        match self.vocab.id(word) {
            Some(id) => Ok(self.word_vector_by_id(id)),
            None => self.oov_vector(word),
        }
    }

    /// One skipgram negative-sampling SGD step predicting `context` from
    /// `center`. Returns the loss before the update.
    pub fn skipgram_step(
        &mut self,
        center: u32,
        context: u32,
        negatives: &[u32],
        lr: f32,
        scratch: &mut Scratch,
    ) -> f32 {
        let shared = SharedModel::new(self);
        // SAFETY: `shared` borrows `self` mutably and is used on this thread only.
        unsafe { shared.skipgram_step(center, context, negatives, lr, scratch) }
    }

    /// One CBOW step predicting `center` from `(offset, word)` pairs.
    /// Returns the loss before the update.
    pub fn cbow_step(
        &mut self,
        center: u32,
        context: &[(i32, u32)],
        negatives: &[u32],
        lr: f32,
        scratch: &mut Scratch,
    ) -> Result<f32> {
        if context.is_empty() {
            return Err(Error::NoContext);
        }
        let shared = SharedModel::new(self);
        // SAFETY: as above.
        Ok(unsafe { shared.cbow_step(center, context, negatives, lr, scratch) })
    }

    /// `σ(u_center · v_target)`, the model's probability that `target`
    /// occurs in the context of `center`.
    pub fn pair_probability(&self, center: u32, target: u32) -> f32 {
        let h = self.word_vector_by_id(center);
        sigmoid(dot(&h, self.output.row(target as usize)))
    }
}

/// Reusable buffers for the in-place steps.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    h: Vec<f32>,
    grad_h: Vec<f32>,
    grad: Vec<f32>,
    coeffs: Vec<f32>,
    context_vectors: Vec<f32>,
}

impl Scratch {
    pub fn new(dim: usize) -> Self {
        Scratch {
            h: vec![0.0; dim],
            grad_h: vec![0.0; dim],
            grad: vec![0.0; dim],
            coeffs: Vec::new(),
            context_vectors: Vec::new(),
        }
    }

    fn reset(&mut self, dim: usize) {
        self.h.clear();
        self.h.resize(dim, 0.0);
        self.grad_h.clear();
        self.grad_h.resize(dim, 0.0);
        self.grad.resize(dim, 0.0);
    }
}

#[derive(Clone, Copy)]
struct RawMatrix {
    ptr: *mut f32,
    cols: usize,
}

impl RawMatrix {
    fn new(m: &mut Matrix) -> Self {
        RawMatrix {
            ptr: m.data.as_mut_ptr(),
            cols: m.cols,
        }
    }

    /// # Safety
    /// `i` must be in bounds and no `&mut` to the same row may be live on
    /// this thread.
    unsafe fn row<'a>(self, i: usize) -> &'a [f32] {
        std::slice::from_raw_parts(self.ptr.add(i * self.cols), self.cols)
    }

    /// # Safety
    /// `i` must be in bounds and no other reference to the same row may be
    /// live on this thread.
    #[allow(clippy::mut_from_ref)]
    unsafe fn row_mut<'a>(self, i: usize) -> &'a mut [f32] {
        std::slice::from_raw_parts_mut(self.ptr.add(i * self.cols), self.cols)
    }
}

/// Lock-free view of a model's parameters shared by training workers.
///
/// Workers read and write rows without synchronization (hogwild SGD); lost
/// or torn updates between threads are tolerated. Within one thread, every
/// row reference is dropped before the next one to the same row is taken.
pub(crate) struct SharedModel<'a> {
    input: RawMatrix,
    output: RawMatrix,
    positions: Option<RawMatrix>,
    subwords: &'a [Vec<u32>],
    dim: usize,
    window: usize,
    freeze_positions: bool,
    _model: PhantomData<&'a mut EmbeddingModel>,
}

unsafe impl Send for SharedModel<'_> {}
unsafe impl Sync for SharedModel<'_> {}

impl<'a> SharedModel<'a> {
    pub(crate) fn new(model: &'a mut EmbeddingModel) -> Self {
        SharedModel {
            input: RawMatrix::new(&mut model.input),
            output: RawMatrix::new(&mut model.output),
            positions: model.positions.as_mut().map(RawMatrix::new),
            subwords: &model.subwords,
            dim: model.config.dim,
            window: model.config.window,
            freeze_positions: model.config.freeze_positions,
            _model: PhantomData,
        }
    }

    unsafe fn add_word_vector(&self, id: u32, out: &mut [f32]) {
        for &row in &self.subwords[id as usize] {
            axpy(1.0, self.input.row(row as usize), out);
        }
    }

    unsafe fn update_word_rows(&self, id: u32, grad: &[f32], lr: f32) {
        for &row in &self.subwords[id as usize] {
            axpy(-lr, grad, self.input.row_mut(row as usize));
        }
    }

    /// Negative-sampling loss for `h`, accumulating `∂loss/∂h` into
    /// `scratch.grad_h` and applying the output-row updates.
    unsafe fn negative_sampling(
        &self,
        target: u32,
        negatives: &[u32],
        lr: f32,
        scratch: &mut Scratch,
    ) -> f32 {
        let h = &scratch.h;
        let coeffs = &mut scratch.coeffs;
        coeffs.clear();

        let score = dot(h, self.output.row(target as usize));
        let mut loss = -log_sigmoid(score);
        coeffs.push(sigmoid(score) - 1.0);
        for &neg in negatives {
            let score = dot(h, self.output.row(neg as usize));
            loss -= log_sigmoid(-score);
            coeffs.push(sigmoid(score));
        }

        let rows = std::iter::once(target).chain(negatives.iter().copied());
        for (&alpha, row) in coeffs.iter().zip(rows.clone()) {
            axpy(alpha, self.output.row(row as usize), &mut scratch.grad_h);
        }
        for (&alpha, row) in coeffs.iter().zip(rows) {
            axpy(-lr * alpha, h, self.output.row_mut(row as usize));
        }
        loss
    }

    pub(crate) unsafe fn skipgram_step(
        &self,
        center: u32,
        context: u32,
        negatives: &[u32],
        lr: f32,
        scratch: &mut Scratch,
    ) -> f32 {
        scratch.reset(self.dim);
        self.add_word_vector(center, &mut scratch.h);
        let loss = self.negative_sampling(context, negatives, lr, scratch);
        self.update_word_rows(center, &scratch.grad_h, lr);
        loss
    }

    pub(crate) unsafe fn cbow_step(
        &self,
        center: u32,
        context: &[(i32, u32)],
        negatives: &[u32],
        lr: f32,
        scratch: &mut Scratch,
    ) -> f32 {
        let dim = self.dim;
        scratch.reset(dim);
        scratch.context_vectors.clear();
        scratch.context_vectors.resize(context.len() * dim, 0.0);

        for (k, &(offset, word)) in context.iter().enumerate() {
            let u = &mut scratch.context_vectors[k * dim..(k + 1) * dim];
            self.add_word_vector(word, u);
            match self.positions {
                Some(pos) => {
                    let c = pos.row(position_index(offset, self.window));
                    for ((hj, &cj), &uj) in scratch.h.iter_mut().zip(c).zip(u.iter()) {
                        *hj += cj * uj;
                    }
                }
                None => axpy(1.0, u, &mut scratch.h),
            }
        }

        let loss = self.negative_sampling(center, negatives, lr, scratch);

        for (k, &(offset, word)) in context.iter().enumerate() {
            let u = &scratch.context_vectors[k * dim..(k + 1) * dim];
            match self.positions {
                Some(pos) => {
                    let idx = position_index(offset, self.window);
                    let c = pos.row(idx);
                    for ((gj, &cj), &g) in scratch.grad.iter_mut().zip(c).zip(&scratch.grad_h) {
                        *gj = cj * g;
                    }
                    if !self.freeze_positions {
                        let c = pos.row_mut(idx);
                        for ((cj, &uj), &g) in c.iter_mut().zip(u).zip(&scratch.grad_h) {
                            *cj += -lr * (uj * g);
                        }
                    }
                    self.update_word_rows(word, &scratch.grad, lr);
                }
                None => self.update_word_rows(word, &scratch.grad_h, lr),
            }
        }
        loss
    }
}

/// Draws negatives from the unigram distribution raised to the 3/4 power.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    dist: Option<WeightedAliasIndex<f64>>,
}

impl NegativeSampler {
    pub fn new(vocab: &Vocabulary) -> Self {
        let dist = if vocab.len() < 2 {
            None
        } else {
            let weights = vocab
                .entries()
                .iter()
                .map(|e| (e.count as f64).powf(0.75))
                .collect();
            WeightedAliasIndex::new(weights).ok()
        };
        NegativeSampler { dist }
    }

    /// Fills `out` with `k` samples, each different from `target`. A
    /// one-word vocabulary has nothing to contrast with and yields none.
    pub fn sample_into<R: Rng>(&self, rng: &mut R, target: u32, k: usize, out: &mut Vec<u32>) {
        out.clear();
        let Some(dist) = &self.dist else { return };
        while out.len() < k {
            let s = dist.sample(rng) as u32;
            if s != target {
                out.push(s);
            }
        }
    }
}

/// `h = Σ c_i ⊙ u_i` over the context positions present.
pub fn cbow_context<F: Float>(context: &[(&[F], &[F])]) -> Result<Vec<F>> {
    let (first_c, _) = context.first().ok_or(Error::NoContext)?;
    let mut h = vec![F::zero(); first_c.len()];
    for (c, u) in context {
        for ((hj, &cj), &uj) in h.iter_mut().zip(c.iter()).zip(u.iter()) {
            *hj = *hj + cj * uj;
        }
    }
    Ok(h)
}

/// `−ln σ(h·v_t) − Σ ln σ(−h·v_n)`.
pub fn ns_loss<F: Float>(h: &[F], target: &[F], negatives: &[&[F]]) -> F {
    let mut loss = -log_sigmoid(dot(h, target));
    for v in negatives {
        loss = loss - log_sigmoid(-dot(h, v));
    }
    loss
}

/// Exact gradients of [`ns_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct NsGradients<F> {
    pub h: Vec<F>,
    pub target: Vec<F>,
    pub negatives: Vec<Vec<F>>,
}

pub fn ns_gradients<F: Float>(h: &[F], target: &[F], negatives: &[&[F]]) -> NsGradients<F> {
    let scale = |alpha: F, v: &[F]| v.iter().map(|&x| alpha * x).collect::<Vec<F>>();
    let alpha_t = sigmoid(dot(h, target)) - F::one();
    let mut grad_h = scale(alpha_t, target);
    let mut grad_negs = Vec::with_capacity(negatives.len());
    for v in negatives {
        let alpha = sigmoid(dot(h, v));
        axpy(alpha, v, &mut grad_h);
        grad_negs.push(scale(alpha, h));
    }
    NsGradients {
        h: grad_h,
        target: scale(alpha_t, h),
        negatives: grad_negs,
    }
}

/// Gradient of one context position, given `g = ∂loss/∂h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextGradient<F> {
    /// `∂loss/∂u_i = c_i ⊙ g`; every row summed into `u_i` receives it.
    pub word: Vec<F>,
    /// `∂loss/∂c_i = u_i ⊙ g`.
    pub position: Vec<F>,
}

pub fn backprop_cbow<F: Float>(grad_h: &[F], context: &[(&[F], &[F])]) -> Vec<ContextGradient<F>> {
    context
        .iter()
        .map(|(c, u)| ContextGradient {
            word: c.iter().zip(grad_h).map(|(&cj, &g)| cj * g).collect(),
            position: u.iter().zip(grad_h).map(|(&uj, &g)| uj * g).collect(),
        })
        .collect()
}

/// Sum of the given rows.
pub fn sum_rows<F: Float>(rows: &[&[F]]) -> Vec<F> {
    let dim = rows.first().map_or(0, |r| r.len());
    let mut out = vec![F::zero(); dim];
    for r in rows {
        axpy(F::one(), r, &mut out);
    }
    out
}
