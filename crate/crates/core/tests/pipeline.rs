use std::io::{self, Read};

use polyvec::corpus::{run_pipeline, tokenize, FilterConfig};
use polyvec::langid::{LangIdConfig, LangIdModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sentence(rng: &mut ChaCha8Rng, alphabet: &[char], words: usize) -> String {
    (0..words)
        .map(|_| {
            let len = rng.gen_range(3..8);
            (0..len).map(|_| *alphabet.choose(rng).unwrap()).collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn setup() -> (LangIdModel, Vec<char>, Vec<char>) {
    let latin: Vec<char> = ('a'..='z').collect();
    let greek: Vec<char> = ('α'..='ω').collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let examples: Vec<(&str, String)> = (0..4000)
        .map(|i| {
            if i % 2 == 0 {
                ("en", sentence(&mut rng, &latin, 8))
            } else {
                ("el", sentence(&mut rng, &greek, 8))
            }
        })
        .collect();
    let cfg = LangIdConfig {
        buckets: 1 << 14,
        ..LangIdConfig::default()
    };
    (LangIdModel::train(&examples, &cfg).unwrap().0, latin, greek)
}

#[test]
fn mixed_stream_keeps_target_language_once_in_order() {
    let (model, latin, greek) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut input = String::new();
    let mut expected: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for i in 0..10_000 {
        let line = match i % 5 {
            0 => sentence(&mut rng, &greek, 30),
            1 => sentence(&mut rng, &latin, 2),
            2 if !expected.is_empty() => expected[rng.gen_range(0..expected.len())].clone(),
            _ => format!("{}, {}!", sentence(&mut rng, &latin, 15), sentence(&mut rng, &latin, 10)),
        };
        if line.chars().count() > 60 && line.is_ascii() && seen.insert(line.clone()) {
            expected.push(line.clone());
        }
        input.push_str(&line);
        input.push('\n');
    }

    let cfg = FilterConfig {
        min_chars: 60,
        min_confidence: 0.8,
        target_language: "en".into(),
    };
    let mut out = Vec::new();
    let stats = run_pipeline(input.as_bytes(), &mut out, &cfg, &model).unwrap();
    let out = String::from_utf8(out).unwrap();
    let want: Vec<String> = expected.iter().map(|l| tokenize(l).join(" ")).collect();
    assert_eq!(out.lines().collect::<Vec<_>>(), want);

    assert!(stats.is_consistent());
    assert_eq!(stats.lines_seen, 10_000);
    assert_eq!(stats.kept, expected.len() as u64);
    assert_eq!(stats.dropped_language, 2000);
    assert_eq!(stats.dropped_length, 2000);
    assert!(stats.dropped_dedup >= 1900);
    assert_eq!(
        stats.tokens_emitted,
        want.iter().map(|l| l.split(' ').count() as u64).sum::<u64>()
    );
}

#[test]
fn invalid_utf8_is_replaced_not_fatal() {
    let (model, ..) = setup();
    let mut input = b"abcdefgh ijklmno pqrstu vwxyz abc \xff\xfe def ghi jkl mno pqr\n".to_vec();
    input.extend_from_slice("lorem ipsum dolor sit amet consectetur adipiscing elit\n".as_bytes());
    let cfg = FilterConfig {
        min_chars: 20,
        min_confidence: 0.5,
        target_language: "en".into(),
    };
    let mut out = Vec::new();
    let stats = run_pipeline(input.as_slice(), &mut out, &cfg, &model).unwrap();
    assert_eq!(stats.lines_seen, 2);
    assert!(stats.is_consistent());
    assert!(String::from_utf8(out).is_ok());
}

struct FailingReader {
    data: io::Cursor<Vec<u8>>,
    fail_after: u64,
}

impl Read for FailingReader {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.data.position() >= self.fail_after {
            return Err(io::Error::new(io::ErrorKind::Other, "disk on fire"));
        }
        let limit = (self.fail_after - self.data.position()) as usize;
        let n = buf.len().min(limit);
        self.data.read(&mut buf[..n])
    }
}

#[test]
fn read_error_returns_partial_stats() {
    let (model, latin, _) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut text = String::new();
    for _ in 0..6000 {
        text.push_str(&sentence(&mut rng, &latin, 12));
        text.push('\n');
    }
    let fail_after = (text.len() * 4 / 5) as u64;
    let reader = io::BufReader::with_capacity(
        512,
        FailingReader {
            data: io::Cursor::new(text.into_bytes()),
            fail_after,
        },
    );
    assert!(reader.buffer().is_empty());
    let cfg = FilterConfig {
        min_chars: 10,
        ..FilterConfig::new("en")
    };
    let failure = run_pipeline(reader, io::sink(), &cfg, &model).unwrap_err();
    assert!(failure.to_string().contains("disk on fire") || failure.source.to_string().contains("disk on fire"));
    assert!(failure.partial.lines_seen >= 4096);
    assert!(failure.partial.lines_seen < 6000);
    assert!(failure.partial.is_consistent());
}
