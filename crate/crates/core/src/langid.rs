//! Line-level language identification: a linear classifier over hashed
//! character n-grams (lengths 2 to 4) with a hierarchical softmax over the
//! labels.

use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hash::fnv1a_32;
use crate::math::{axpy, dot, log_sigmoid, sigmoid};
use crate::model::Matrix;

/// Hashed character n-grams of `line` with `nmin <= n <= nmax`, with
/// multiplicity. N-grams are taken over Unicode scalar values without any
/// normalization or padding.
pub fn extract_features(line: &str, nmin: usize, nmax: usize, buckets: u32) -> Vec<u32> {
    debug_assert!(nmin >= 1 && nmin <= nmax && buckets > 0);
    let chars: Vec<char> = line.chars().collect();
    let mut buf = String::new();
    let mut out = Vec::new();
    for n in nmin..=nmax.min(chars.len()) {
        for window in chars.windows(n) {
            buf.clear();
            buf.extend(window);
            out.push(fnv1a_32(buf.as_bytes()) % buckets);
        }
    }
    out
}

/// Binary Huffman tree over labels. Nodes `0..n` are the leaves (labels),
/// `n..2n-1` the internal nodes in creation order; the root is last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTree {
    labels: usize,
    counts: Vec<u64>,
    parent: Vec<Option<u32>>,
    /// Branch taken from the parent: `true` for the second-merged child.
    bit: Vec<bool>,
    paths: Vec<Vec<(u32, bool)>>,
}

impl HuffmanTree {
    /// Huffman's algorithm on `counts` (one per label). Equal weights merge
    /// in node order: leaves by label index, then internal nodes by
    /// creation.
    pub fn build(counts: &[u64]) -> Result<Self> {
        let n = counts.len();
        if n == 0 {
            return Err(Error::Empty("label set"));
        }
        if counts.contains(&0) {
            return Err(Error::Config("label counts must be positive".into()));
        }
        let mut all_counts = counts.to_vec();
        let mut parent = vec![None; 2 * n - 1];
        let mut bit = vec![false; 2 * n - 1];
        let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
            counts.iter().enumerate().map(|(i, &c)| Reverse((c, i))).collect();
        while heap.len() > 1 {
            let Reverse((c0, a)) = heap.pop().unwrap();
            let Reverse((c1, b)) = heap.pop().unwrap();
            let node = all_counts.len();
            all_counts.push(c0 + c1);
            parent[a] = Some(node as u32);
            parent[b] = Some(node as u32);
            bit[b] = true;
            heap.push(Reverse((c0 + c1, node)));
        }
        Self::from_topology(all_counts, parent, bit)
    }

    /// Rebuilds a tree from stored topology, checking that it is a full
    /// binary tree with a single root.
    pub fn from_topology(counts: Vec<u64>, parent: Vec<Option<u32>>, bit: Vec<bool>) -> Result<Self> {
        let nodes = counts.len();
        if nodes == 0 || nodes.is_multiple_of(2) || parent.len() != nodes || bit.len() != nodes {
            return Err(Error::Format("malformed label tree".into()));
        }
        let labels = nodes.div_ceil(2);
        let mut children = vec![[false; 2]; nodes];
        for (node, p) in parent.iter().enumerate() {
            match p {
                None if node == nodes - 1 => {}
                Some(p) if (*p as usize) > node && (*p as usize) >= labels && (*p as usize) < nodes => {
                    let slot = &mut children[*p as usize][bit[node] as usize];
                    if *slot {
                        return Err(Error::Format("label tree node has duplicate child".into()));
                    }
                    *slot = true;
                }
                _ => return Err(Error::Format("malformed label tree parent link".into())),
            }
        }
        if children[labels..].iter().any(|c| c != &[true, true]) {
            return Err(Error::Format("internal tree node without two children".into()));
        }
        let paths = (0..labels)
            .map(|leaf| {
                let mut path = Vec::new();
                let mut node = leaf;
                while let Some(p) = parent[node] {
                    path.push(((p as usize - labels) as u32, bit[node]));
                    node = p as usize;
                }
                path.reverse();
                path
            })
            .collect();
        Ok(HuffmanTree {
            labels,
            counts,
            parent,
            bit,
            paths,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.labels
    }

    pub fn num_internal(&self) -> usize {
        self.labels - 1
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn parents(&self) -> &[Option<u32>] {
        &self.parent
    }

    pub fn bits(&self) -> &[bool] {
        &self.bit
    }

    /// Root-to-leaf `(internal node index, branch)` pairs for `label`.
    pub fn path(&self, label: usize) -> &[(u32, bool)] {
        &self.paths[label]
    }

    /// Code bits of `label`, root first.
    pub fn code(&self, label: usize) -> Vec<bool> {
        self.paths[label].iter().map(|&(_, b)| b).collect()
    }

    pub fn code_lengths(&self) -> Vec<usize> {
        self.paths.iter().map(Vec::len).collect()
    }

    /// `Σ 2^(−len)` over the leaves.
    pub fn kraft_sum(&self) -> f64 {
        self.paths.iter().map(|p| 0.5f64.powi(p.len() as i32)).sum()
    }

    /// Exact check that `Σ 2^(−len) = 1`, done in integers by carrying leaf
    /// counts from the deepest level up.
    pub fn kraft_equality(&self) -> bool {
        let depth = self.paths.iter().map(Vec::len).max().unwrap_or(0);
        let mut per_level = vec![0u64; depth + 1];
        for p in &self.paths {
            per_level[p.len()] += 1;
        }
        let mut carry = 0u64;
        for d in (1..=depth).rev() {
            let total = per_level[d] + carry;
            if !total.is_multiple_of(2) {
                return false;
            }
            carry = total / 2;
        }
        per_level[0] + carry == 1
    }
}

/// Loss `−Σ ln σ(±θ_k·h)` along one label path and its gradients. The sign
/// is `+` for branch `true`.
pub fn path_loss_and_gradients<F: Float>(
    h: &[F],
    nodes: &[&[F]],
    branches: &[bool],
) -> (F, Vec<F>, Vec<Vec<F>>) {
    let mut loss = F::zero();
    let mut grad_h = vec![F::zero(); h.len()];
    let mut grad_nodes = Vec::with_capacity(nodes.len());
    for (theta, &b) in nodes.iter().zip(branches) {
        let s = dot(h, theta);
        let label = if b { F::one() } else { F::zero() };
        loss = loss - log_sigmoid(if b { s } else { -s });
        let alpha = sigmoid(s) - label;
        axpy(alpha, theta, &mut grad_h);
        grad_nodes.push(h.iter().map(|&x| alpha * x).collect());
    }
    (loss, grad_h, grad_nodes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LangIdConfig {
    pub dim: usize,
    pub nmin: usize,
    pub nmax: usize,
    pub buckets: u32,
    pub epochs: usize,
    pub lr: f32,
    pub seed: u64,
}

impl Default for LangIdConfig {
    fn default() -> Self {
        LangIdConfig {
            dim: 16,
            nmin: 2,
            nmax: 4,
            buckets: 1 << 21,
            epochs: 5,
            lr: 0.1,
            seed: 1,
        }
    }
}

impl LangIdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nmin == 0 || self.nmin > self.nmax {
            return Err(Error::Config("n-gram bounds must satisfy 1 <= nmin <= nmax".into()));
        }
        if self.dim == 0 || self.buckets == 0 {
            return Err(Error::Config("dim and buckets must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// A predicted language and its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LangIdModel {
    labels: Vec<String>,
    nmin: usize,
    nmax: usize,
    features: Matrix,
    nodes: Matrix,
    tree: HuffmanTree,
}

/// Summary of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LangIdStats {
    pub examples: u64,
    pub unclassifiable: u64,
    pub epoch_loss: Vec<f64>,
}

impl LangIdModel {
    /// Assembles a model from stored parts, checking shapes.
    pub fn from_parts(
        labels: Vec<String>,
        nmin: usize,
        nmax: usize,
        features: Matrix,
        nodes: Matrix,
        tree: HuffmanTree,
    ) -> Result<Self> {
        if labels.len() != tree.num_labels() {
            return Err(Error::Format("label count does not match tree".into()));
        }
        if nodes.rows() != tree.num_internal() || nodes.cols() != features.cols() {
            return Err(Error::Format("node matrix shape mismatch".into()));
        }
        if nmin == 0 || nmin > nmax || features.rows() == 0 {
            return Err(Error::Format("invalid feature configuration".into()));
        }
        Ok(LangIdModel {
            labels,
            nmin,
            nmax,
            features,
            nodes,
            tree,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn ngram_range(&self) -> (usize, usize) {
        (self.nmin, self.nmax)
    }

    pub fn buckets(&self) -> u32 {
        self.features.rows() as u32
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn nodes(&self) -> &Matrix {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut Matrix {
        &mut self.nodes
    }

    pub fn tree(&self) -> &HuffmanTree {
        &self.tree
    }

    pub fn extract(&self, line: &str) -> Vec<u32> {
        extract_features(line, self.nmin, self.nmax, self.buckets())
    }

    fn hidden(&self, feats: &[u32]) -> Vec<f32> {
        let mut h = vec![0.0; self.dim()];
        for &f in feats {
            axpy(1.0, self.features.row(f as usize), &mut h);
        }
        let scale = 1.0 / feats.len() as f32;
        h.iter_mut().for_each(|x| *x *= scale);
        h
    }

    fn label_probability(&self, h: &[f32], label: usize) -> f64 {
        self.tree
            .path(label)
            .iter()
            .map(|&(node, b)| {
                let s = f64::from(dot(h, self.nodes.row(node as usize)));
                if b { sigmoid(s) } else { sigmoid(-s) }
            })
            .product()
    }

    /// Probability of every label for `line`.
    pub fn probabilities(&self, line: &str) -> Result<Vec<f64>> {
        let feats = self.extract(line);
        if feats.is_empty() {
            return Err(Error::Unclassifiable);
        }
        let h = self.hidden(&feats);
        Ok((0..self.labels.len())
            .map(|l| self.label_probability(&h, l))
            .collect())
    }

    /// Most probable label and its probability; ties go to the lower label
    /// index.
    pub fn predict(&self, line: &str) -> Result<Prediction> {
        let probs = self.probabilities(line)?;
        let (best, p) = probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
        Ok(Prediction {
            label: self.labels[best].clone(),
            confidence: p,
        })
    }

    /// [`LangIdModel::predict`] over many lines, in parallel when enabled.
    pub fn predict_batch<S: AsRef<str> + Sync>(&self, lines: &[S]) -> Vec<Result<Prediction>> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            lines.par_iter().map(|l| self.predict(l.as_ref())).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            lines.iter().map(|l| self.predict(l.as_ref())).collect()
        }
    }

    /// Trains on `(label, line)` pairs with SGD on the hierarchical-softmax
    /// log-loss. Labels are ordered by first appearance; examples are
    /// visited in a fresh seeded shuffle each epoch and the learning rate
    /// decays linearly to zero.
    pub fn train<L, S>(examples: &[(L, S)], cfg: &LangIdConfig) -> Result<(Self, LangIdStats)>
    where
        L: AsRef<str>,
        S: AsRef<str>,
    {
        cfg.validate()?;
        let mut labels: Vec<String> = Vec::new();
        let mut label_ids: HashMap<String, usize> = HashMap::new();
        let mut counts: Vec<u64> = Vec::new();
        let mut data: Vec<(usize, Vec<u32>)> = Vec::new();
        let mut stats = LangIdStats::default();
        for (label, line) in examples {
            let feats = extract_features(line.as_ref(), cfg.nmin, cfg.nmax, cfg.buckets);
            if feats.is_empty() {
                stats.unclassifiable += 1;
                continue;
            }
            let next = labels.len();
            let id = *label_ids.entry(label.as_ref().to_owned()).or_insert_with(|| {
                labels.push(label.as_ref().to_owned());
                counts.push(0);
                next
            });
            counts[id] += 1;
            data.push((id, feats));
        }
        if data.is_empty() {
            return Err(Error::Empty("training corpus"));
        }
        let tree = HuffmanTree::build(&counts)?;

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let features = Matrix::uniform(cfg.buckets as usize, cfg.dim, 1.0 / cfg.dim as f32, &mut rng);
        let nodes = Matrix::zeros(tree.num_internal(), cfg.dim);
        let mut model = LangIdModel::from_parts(labels, cfg.nmin, cfg.nmax, features, nodes, tree)?;

        let planned = (cfg.epochs * data.len()) as f64;
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut seen = 0usize;
        let mut grad_h = vec![0.0f32; cfg.dim];
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0f64;
            for &i in &order {
                let lr = cfg.lr * (1.0 - seen as f64 / planned).max(0.0) as f32;
                seen += 1;
                let (label, feats) = &data[i];
                epoch_loss += f64::from(model.sgd_step(*label, feats, lr, &mut grad_h));
            }
            stats.epoch_loss.push(epoch_loss / data.len() as f64);
        }
        stats.examples = data.len() as u64;
        Ok((model, stats))
    }

    fn sgd_step(&mut self, label: usize, feats: &[u32], lr: f32, grad_h: &mut [f32]) -> f32 {
        let h = self.hidden(feats);
        grad_h.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for &(node, b) in self.tree.path(label) {
            let theta = self.nodes.row_mut(node as usize);
            let s = dot(&h, theta);
            loss -= log_sigmoid(if b { s } else { -s });
            let alpha = sigmoid(s) - if b { 1.0 } else { 0.0 };
            axpy(alpha, theta, grad_h);
            axpy(-lr * alpha, &h, theta);
        }
        // h is the mean of the rows, so each occurrence gets 1/m of ∂h
        let scale = -lr / feats.len() as f32;
        for &f in feats {
            axpy(scale, grad_h, self.features.row_mut(f as usize));
        }
        loss
    }
}

/// Accuracy and throughput of a model on labeled lines.
#[derive(Debug, Clone, PartialEq)]
pub struct LangIdEval {
    pub lines: u64,
    pub correct: u64,
    pub unclassifiable: u64,
    pub seconds: f64,
}

impl LangIdEval {
    pub fn accuracy(&self) -> f64 {
        if self.lines == 0 {
            0.0
        } else {
            self.correct as f64 / self.lines as f64
        }
    }

    pub fn lines_per_second(&self) -> f64 {
        if self.seconds > 0.0 {
            self.lines as f64 / self.seconds
        } else {
            f64::INFINITY
        }
    }
}

/// Scores `model` on `(label, line)` pairs; unclassifiable lines count as
/// errors.
pub fn evaluate_langid<L, S>(model: &LangIdModel, examples: &[(L, S)]) -> LangIdEval
where
    L: AsRef<str> + Sync,
    S: AsRef<str> + Sync,
{
    let start = std::time::Instant::now();
    let lines: Vec<&str> = examples.iter().map(|(_, s)| s.as_ref()).collect();
    let preds = model.predict_batch(&lines);
    let seconds = start.elapsed().as_secs_f64();
    let mut eval = LangIdEval {
        lines: examples.len() as u64,
        correct: 0,
        unclassifiable: 0,
        seconds,
    };
    for ((label, _), pred) in examples.iter().zip(preds) {
        match pred {
            Ok(p) if p.label == label.as_ref() => eval.correct += 1,
            Ok(_) => {}
            Err(_) => eval.unclassifiable += 1,
        }
    }
    eval
}
