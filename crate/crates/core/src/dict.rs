//! Vocabulary construction, frequent-word subsampling and character n-gram
//! hashing for the subword models.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::hash::fnv1a_32;

pub const BOW: char = '<';
pub const EOW: char = '>';

/// One vocabulary entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub word: String,
    pub count: u64,
}

/// Frequency-ranked word table.
///
/// Entries are sorted by descending count; equal counts keep the order in
/// which the words first appeared in the corpus, so rank is fully
/// deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<Entry>,
    index: HashMap<String, u32>,
    min_count: u64,
    total_tokens: u64,
}

impl Vocabulary {
    /// Counts every token of `tokens` and keeps those seen at least
    /// `min_count` times.
    pub fn build<I, S>(tokens: I, min_count: u64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, (u64, usize)> = HashMap::new();
        let mut total = 0u64;
        for token in tokens {
            let token = token.as_ref();
            total += 1;
            let next = counts.len();
            match counts.get_mut(token) {
                Some(slot) => slot.0 += 1,
                None => {
                    counts.insert(token.to_owned(), (1, next));
                }
            }
        }

        let mut ranked: Vec<(String, u64, usize)> = counts
            .into_iter()
            .filter(|(_, (count, _))| *count >= min_count)
            .map(|(w, (c, first))| (w, c, first))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));

        let entries = ranked
            .into_iter()
            .map(|(word, count, _)| Entry { word, count })
            .collect();
        Self::from_parts(entries, min_count, total)
    }

    /// Assembles a vocabulary from already-ranked entries.
    pub fn from_parts(entries: Vec<Entry>, min_count: u64, total_tokens: u64) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.word.clone(), i as u32))
            .collect();
        Vocabulary {
            entries,
            index,
            min_count,
            total_tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn word(&self, id: u32) -> &str {
        &self.entries[id as usize].word
    }

    pub fn count(&self, id: u32) -> u64 {
        self.entries[id as usize].count
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Number of tokens in the corpus the vocabulary was counted from,
    /// including tokens pruned by `min_count`.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Per-word probability of keeping an occurrence under subsampling
    /// threshold `t`.
    pub fn keep_probabilities(&self, t: f64) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| keep_probability(e.count, self.total_tokens, t))
            .collect()
    }

    /// Writes `word<TAB>count` lines in rank order.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.entries {
            writeln!(out, "{}\t{}", e.word, e.count)?;
        }
        Ok(())
    }

    /// Reads a dump produced by [`Vocabulary::dump`]. The minimum count is
    /// taken to be the smallest count present and the token total the sum of
    /// the counts, since neither is part of the dump.
    pub fn load<R: BufRead>(input: R) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        let mut seen = HashMap::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(lineno, "expected word<TAB>count"))?;
            let count: u64 = count
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad count {count:?}")))?;
            if word.is_empty() {
                return Err(Error::parse(lineno, "empty word"));
            }
            if seen.insert(word.to_owned(), lineno).is_some() {
                return Err(Error::parse(lineno, format!("duplicate word {word:?}")));
            }
            if let Some(prev) = entries.last() {
                if prev.count < count {
                    return Err(Error::parse(lineno, "counts must be non-increasing"));
                }
            }
            entries.push(Entry {
                word: word.to_owned(),
                count,
            });
        }
        let total = entries.iter().map(|e| e.count).sum();
        let min_count = entries.last().map_or(1, |e| e.count);
        Ok(Self::from_parts(entries, min_count, total))
    }
}

/// Bounds and hash space for character n-grams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NgramConfig {
    pub nmin: usize,
    pub nmax: usize,
    pub bucket_count: u32,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            nmin: 3,
            nmax: 6,
            bucket_count: 2_000_000,
        }
    }
}

impl NgramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nmin == 0 || self.nmin > self.nmax {
            return Err(Error::Config(format!(
                "n-gram bounds must satisfy 1 <= nmin <= nmax, got {}..{}",
                self.nmin, self.nmax
            )));
        }
        Ok(())
    }
}

/// Character n-grams of `<word>`, without the full padded word itself.
pub fn char_ngrams(word: &str, cfg: &NgramConfig) -> Result<Vec<String>> {
    if word.is_empty() {
        return Err(Error::Unrepresentable(String::new()));
    }
    if word.contains([BOW, EOW]) {
        return Err(Error::ReservedMarker(word.to_owned()));
    }
    let padded: Vec<char> = std::iter::once(BOW)
        .chain(word.chars())
        .chain(std::iter::once(EOW))
        .collect();
    let len = padded.len();

    let mut out = Vec::new();
    for n in cfg.nmin..=cfg.nmax.min(len) {
        for start in 0..=len - n {
            if n == len {
                // the whole padded word lives in the word-id rows
                continue;
            }
            out.push(padded[start..start + n].iter().collect());
        }
    }
    Ok(out)
}

/// FNV-1a bucket of an n-gram's UTF-8 bytes.
pub fn ngram_bucket(ngram: &str, bucket_count: u64) -> u64 {
    debug_assert!(bucket_count > 0);
    u64::from(fnv1a_32(ngram.as_bytes())) % bucket_count
}

/// Probability of keeping one occurrence of a word with corpus frequency
/// `count / total`: `min(1, sqrt(t/f) + t/f)`. `t == 0` disables
/// subsampling.
pub fn keep_probability(count: u64, total: u64, t: f64) -> f64 {
    if t <= 0.0 || count == 0 || total == 0 {
        return 1.0;
    }
    let f = count as f64 / total as f64;
    let r = t / f;
    (r.sqrt() + r).min(1.0)
}

pub fn discard_probability(count: u64, total: u64, t: f64) -> f64 {
    1.0 - keep_probability(count, total, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(nmin: usize, nmax: usize) -> NgramConfig {
        NgramConfig {
            nmin,
            nmax,
            bucket_count: 1000,
        }
    }

    #[test]
    fn prunes_below_min_count() {
        let v = Vocabulary::build(["a", "a", "a", "b"], 2);
        assert_eq!(
            v.entries(),
            &[Entry {
                word: "a".into(),
                count: 3
            }]
        );
        assert_eq!(v.total_tokens(), 4);
    }

    #[test]
    fn ties_follow_first_occurrence() {
        let tokens = ["b", "a", "a", "b", "a", "b", "a", "b", "a", "b"];
        let v = Vocabulary::build(tokens, 5);
        assert_eq!(v.word(0), "b");
        assert_eq!(v.word(1), "a");

        let mut tokens = vec!["a"; 5];
        tokens.extend(vec!["b"; 5]);
        let v = Vocabulary::build(tokens, 5);
        assert_eq!(v.word(0), "a");
    }

    #[test]
    fn empty_corpus_gives_empty_vocab() {
        let v = Vocabulary::build(Vec::<String>::new(), 5);
        assert!(v.is_empty());
        assert_eq!(v.total_tokens(), 0);
    }

    #[test]
    fn dump_and_load() {
        let v = Vocabulary::build("x y x z x y".split(' '), 1);
        let mut buf = Vec::new();
        v.dump(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "x\t3\ny\t2\nz\t1\n");
        let back = Vocabulary::load(&buf[..]).unwrap();
        assert_eq!(back.entries(), v.entries());
        assert_eq!(back.total_tokens(), 6);
    }

    #[test]
    fn load_rejects_bad_lines() {
        assert!(matches!(
            Vocabulary::load(&b"a\t3\nb 2\n"[..]),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            Vocabulary::load(&b"a\t3\na\t2\n"[..]),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn ngrams_of_where() {
        assert_eq!(
            char_ngrams("where", &cfg(3, 3)).unwrap(),
            ["<wh", "whe", "her", "ere", "re>"]
        );
    }

    #[test]
    fn ngrams_exclude_full_padded_word() {
        assert!(char_ngrams("a", &cfg(3, 6)).unwrap().is_empty());
        assert_eq!(char_ngrams("ab", &cfg(2, 2)).unwrap(), ["<a", "ab", "b>"]);
        let grams = char_ngrams("ab", &cfg(2, 6)).unwrap();
        assert!(!grams.iter().any(|g| g == "<ab>"));
        assert_eq!(grams.len(), 3 + 2);
    }

    #[test]
    fn ngrams_count_characters_not_bytes() {
        let grams = char_ngrams("été", &cfg(3, 3)).unwrap();
        assert_eq!(grams, ["<ét", "été", "té>"]);
    }

    #[test]
    fn ngrams_reject_markers() {
        assert!(matches!(
            char_ngrams("a<b", &cfg(3, 6)),
            Err(Error::ReservedMarker(_))
        ));
    }

    #[test]
    fn bucket_golden_values() {
        assert_eq!(ngram_bucket("", 1 << 32), 2_166_136_261);
        assert_eq!(ngram_bucket("", 1000), 2_166_136_261 % 1000);
        assert_eq!(ngram_bucket("a", 1 << 32), 0xE40C_292C);
        assert_eq!(ngram_bucket("<wh", 2_000_000), ngram_bucket("<wh", 2_000_000));
    }

    #[test]
    fn subsampling_formula() {
        assert_eq!(keep_probability(1, 100_000, 1e-4), 1.0);
        assert_eq!(keep_probability(10, 100_000, 1e-4), 1.0);
        // f = 4t
        let p = keep_probability(4, 10_000, 1e-4);
        assert!((p - 0.75).abs() < 1e-12);
        assert_eq!(keep_probability(9_000, 10_000, 0.0), 1.0);
        assert!((discard_probability(4, 10_000, 1e-4) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0, 3).validate().is_err());
        assert!(cfg(4, 3).validate().is_err());
        assert!(cfg(5, 5).validate().is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ngram_count_formula(word in "[a-zé]{1,12}", nmin in 1usize..6, span in 0usize..4) {
                let c = NgramConfig { nmin, nmax: nmin + span, bucket_count: 97 };
                let grams = char_ngrams(&word, &c).unwrap();
                let padded = word.chars().count() + 2;
                let mut expected: usize = (c.nmin..=c.nmax)
                    .map(|n| (padded + 1).saturating_sub(n))
                    .sum();
                if (c.nmin..=c.nmax).contains(&padded) {
                    expected -= 1;
                }
                prop_assert_eq!(grams.len(), expected);
                let full = format!("<{word}>");
                prop_assert!(grams.iter().all(|g| *g != full));
            }

            #[test]
            fn vocab_counts_every_token(tokens in proptest::collection::vec("[a-e]", 0..200)) {
                let v = Vocabulary::build(&tokens, 1);
                prop_assert_eq!(v.total_tokens(), tokens.len() as u64);
                prop_assert_eq!(v.entries().iter().map(|e| e.count).sum::<u64>(), tokens.len() as u64);
                prop_assert!(v.entries().windows(2).all(|w| w[0].count >= w[1].count));
            }
        }
    }
}
