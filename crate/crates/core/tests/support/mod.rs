//! Deterministic synthetic data shared by the integration tests.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ra", "tu", "ve", "so", "ni", "pa", "de", "zu", "fo", "ri", "ga", "be", "hu",
    "ne", "ta", "wo", "li", "sa", "ko", "mu", "ye",
];

fn pseudo_word(rng: &mut ChaCha8Rng, syllables: usize, used: &mut std::collections::HashSet<String>) -> String {
    loop {
        let w: String = (0..syllables)
            .map(|_| *SYLLABLES.choose(rng).unwrap())
            .collect();
        if used.insert(w.clone()) {
            return w;
        }
    }
}

/// A relation family: pairs `(left_i, right_i)` where both sides share the
/// private topic words of pair `i`, and each side has its own role words.
struct Family {
    name: &'static str,
    pairs: Vec<(String, String)>,
    topics: Vec<Vec<String>>,
    left_roles: Vec<String>,
    right_roles: Vec<String>,
}

pub struct AnalogyCorpus {
    pub lines: Vec<String>,
    /// Google analogy format.
    pub analogies: String,
    pub questions: usize,
}

/// Generates a corpus whose co-occurrence structure plants the vector-offset
/// relations `left_i : right_i :: left_j : right_j` for three families (one
/// of them morphological, sharing a suffix), plus the matching analogy file.
pub fn analogy_corpus(seed: u64, sentences: usize, pairs_per_family: usize) -> AnalogyCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = std::collections::HashSet::new();

    let mut families = Vec::new();
    for name in ["capital-country", "male-female", "singular-plural"] {
        let mut pairs = Vec::new();
        for _ in 0..pairs_per_family {
            let left = pseudo_word(&mut rng, 3, &mut used);
            let right = if name == "singular-plural" {
                let r = format!("{left}ren");
                used.insert(r.clone());
                r
            } else {
                pseudo_word(&mut rng, 3, &mut used)
            };
            pairs.push((left, right));
        }
        let topics = (0..pairs_per_family)
            .map(|_| (0..4).map(|_| pseudo_word(&mut rng, 4, &mut used)).collect())
            .collect();
        let left_roles = (0..6).map(|_| pseudo_word(&mut rng, 2, &mut used)).collect();
        let right_roles = (0..6).map(|_| pseudo_word(&mut rng, 2, &mut used)).collect();
        families.push(Family {
            name,
            pairs,
            topics,
            left_roles,
            right_roles,
        });
    }
    let fillers: Vec<String> = (0..40).map(|_| pseudo_word(&mut rng, 2, &mut used)).collect();

    let mut lines = Vec::with_capacity(sentences);
    for _ in 0..sentences {
        let fam = families.choose(&mut rng).unwrap();
        let i = rng.gen_range(0..fam.pairs.len());
        let right = rng.gen_bool(0.5);
        let (word, roles) = if right {
            (&fam.pairs[i].1, &fam.right_roles)
        } else {
            (&fam.pairs[i].0, &fam.left_roles)
        };
        let mut tokens: Vec<&str> = vec![word];
        for _ in 0..3 {
            tokens.push(fam.topics[i].choose(&mut rng).unwrap());
        }
        for _ in 0..2 {
            tokens.push(roles.choose(&mut rng).unwrap());
        }
        for _ in 0..3 {
            tokens.push(fillers.choose(&mut rng).unwrap());
        }
        tokens.shuffle(&mut rng);
        lines.push(tokens.join(" "));
    }

    let mut analogies = String::new();
    let mut questions = 0;
    for fam in &families {
        analogies.push_str(&format!(": {}\n", fam.name));
        for (i, (a, b)) in fam.pairs.iter().enumerate() {
            for (j, (c, d)) in fam.pairs.iter().enumerate() {
                if i != j {
                    analogies.push_str(&format!("{a} {b} {c} {d}\n"));
                    questions += 1;
                }
            }
        }
    }
    AnalogyCorpus {
        lines,
        analogies,
        questions,
    }
}

/// Zipf-distributed token stream over `vocab` synthetic words, as lines of
/// `line_len` tokens.
pub fn zipf_lines(seed: u64, tokens: usize, vocab: usize, line_len: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (1..=vocab).map(|r| 1.0 / r as f64).collect();
    let dist = rand::distributions::WeightedIndex::new(&weights).unwrap();
    let words: Vec<String> = (0..vocab).map(|i| format!("w{i}")).collect();
    let stream: Vec<&str> = (0..tokens)
        .map(|_| words[rng.sample(&dist)].as_str())
        .collect();
    stream.chunks(line_len).map(|c| c.join(" ")).collect()
}
