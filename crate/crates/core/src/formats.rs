//! On-disk formats.
//!
//! * `.vec` text: a `count dim` header, then one `word v1 … vdim` line per
//!   word, floats printed with 9 significant digits.
//! * Embedding model binary: magic, version, training configuration,
//!   vocabulary, then the input, output and (optional) position matrices as
//!   little-endian `f32`.
//! * Language-ID model binary: magic, version, feature settings, labels,
//!   tree topology, feature and node matrices.
//!
//! Binary loaders read the whole file before building anything, so a
//! truncated or corrupt file never yields a partial model.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::dict::{Entry, NgramConfig, Vocabulary};
use crate::error::{Error, Result};
use crate::langid::{HuffmanTree, LangIdModel};
use crate::model::{Architecture, DataSource, EmbeddingModel, Matrix, TrainConfig};

pub const MODEL_MAGIC: [u8; 4] = *b"PVEM";
pub const MODEL_VERSION: u32 = 1;
pub const LANGID_MAGIC: [u8; 4] = *b"PVLI";
pub const LANGID_VERSION: u32 = 1;

/// `%.9g`-style rendering: 9 significant digits, trailing zeros trimmed.
/// Nine digits are enough to round-trip any `f32` exactly.
pub fn format_float(x: f32) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, x);
        trim_zeros(&fixed).to_owned()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes a `.vec` table.
pub fn write_vec<W, I, S, V>(mut out: W, dim: usize, rows: I) -> Result<()>
where
    W: Write,
    I: ExactSizeIterator<Item = (S, V)>,
    S: AsRef<str>,
    V: AsRef<[f32]>,
{
    writeln!(out, "{} {}", rows.len(), dim)?;
    for (word, vector) in rows {
        let (word, vector) = (word.as_ref(), vector.as_ref());
        if word.is_empty() || word.contains(char::is_whitespace) {
            return Err(Error::Config(format!("word {word:?} cannot be written to a .vec file")));
        }
        if vector.len() != dim {
            return Err(Error::Config(format!("vector for {word:?} has the wrong dimension")));
        }
        out.write_all(word.as_bytes())?;
        for &x in vector {
            write!(out, " {}", format_float(x))?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Word/vector table read from a `.vec` file, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VecTable {
    pub dim: usize,
    pub rows: Vec<(String, Vec<f32>)>,
}

impl VecTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn read_vec<R: BufRead>(input: R) -> Result<VecTable> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing header"))??;
    let mut fields = header.split_whitespace();
    let parse_field = |f: Option<&str>| -> Result<usize> {
        f.and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(1, format!("malformed header {header:?}")))
    };
    let count = parse_field(fields.next())?;
    let dim = parse_field(fields.next())?;
    if fields.next().is_some() {
        return Err(Error::parse(1, format!("malformed header {header:?}")));
    }

    let mut rows = Vec::with_capacity(count.min(1 << 20));
    let mut seen = HashSet::new();
    let mut lineno = 1;
    for line in lines {
        let line = line?;
        lineno += 1;
        if rows.len() == count {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::parse(lineno, format!("more rows than the {count} declared")));
        }
        let mut parts = line.split_whitespace();
        let word = parts
            .next()
            .ok_or_else(|| Error::parse(lineno, "empty row"))?;
        let vector = parts
            .map(|v| {
                v.parse::<f32>()
                    .map_err(|_| Error::parse(lineno, format!("bad float {v:?}")))
            })
            .collect::<Result<Vec<f32>>>()?;
        if vector.len() != dim {
            return Err(Error::parse(
                lineno,
                format!("expected {dim} values, found {}", vector.len()),
            ));
        }
        if !seen.insert(word.to_owned()) {
            return Err(Error::parse(lineno, format!("duplicate word {word:?}")));
        }
        rows.push((word.to_owned(), vector));
    }
    if rows.len() != count {
        return Err(Error::parse(
            lineno + 1,
            format!("unexpected end of file: {} of {count} rows", rows.len()),
        ));
    }
    Ok(VecTable { dim, rows })
}

pub fn save_vec<P: AsRef<Path>>(path: P, table: &VecTable) -> Result<()> {
    let out = BufWriter::new(File::create(path)?);
    write_vec(out, table.dim, table.rows.iter().map(|(w, v)| (w, v)))
}

pub fn load_vec<P: AsRef<Path>>(path: P) -> Result<VecTable> {
    read_vec(BufReader::new(File::open(path)?))
}

/// Vectors of every vocabulary word of `model`, in rank order.
pub fn model_vectors(model: &EmbeddingModel) -> VecTable {
    let rows = (0..model.vocab().len() as u32)
        .map(|id| (model.vocab().word(id).to_owned(), model.word_vector_by_id(id)))
        .collect();
    VecTable {
        dim: model.dim(),
        rows,
    }
}

fn write_str<W: Write>(out: &mut W, s: &str) -> io::Result<()> {
    out.write_u32::<LittleEndian>(s.len() as u32)?;
    out.write_all(s.as_bytes())
}

fn read_str<R: Read>(input: &mut R) -> Result<String> {
    let len = input.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len.min(1 << 20)];
    if len > buf.len() {
        return Err(Error::Format("string too long".into()));
    }
    input.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format("invalid UTF-8 string".into()))
}

fn write_matrix<W: Write>(out: &mut W, m: &Matrix) -> io::Result<()> {
    out.write_u64::<LittleEndian>(m.rows() as u64)?;
    out.write_u64::<LittleEndian>(m.cols() as u64)?;
    for &x in m.as_slice() {
        out.write_f32::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_matrix(input: &mut Cursor<&[u8]>) -> Result<Matrix> {
    let rows = input.read_u64::<LittleEndian>()? as usize;
    let cols = input.read_u64::<LittleEndian>()? as usize;
    let remaining = input.get_ref().len() as u64 - input.position();
    let values = rows
        .checked_mul(cols)
        .filter(|&n| (n as u64).saturating_mul(4) <= remaining)
        .ok_or_else(|| Error::Format("matrix larger than the file".into()))?;
    let mut data = vec![0.0f32; values];
    input.read_f32_into::<LittleEndian>(&mut data)?;
    Matrix::from_vec(rows, cols, data)
}

fn check_header(input: &mut Cursor<&[u8]>, magic: [u8; 4], version: u32) -> Result<()> {
    let mut found = [0u8; 4];
    input
        .read_exact(&mut found)
        .map_err(|_| Error::Format("file too short".into()))?;
    if found != magic {
        return Err(Error::Format("bad magic number".into()));
    }
    let found = input.read_u32::<LittleEndian>()?;
    if found != version {
        return Err(Error::Version {
            found,
            expected: version,
        });
    }
    Ok(())
}

fn truncated(e: Error) -> Error {
    match e {
        Error::Io(io) if io.kind() == io::ErrorKind::UnexpectedEof => {
            Error::Format("truncated file".into())
        }
        e => e,
    }
}

pub fn write_model<W: Write>(mut out: W, model: &EmbeddingModel) -> Result<()> {
    let c = model.config();
    out.write_all(&MODEL_MAGIC)?;
    out.write_u32::<LittleEndian>(MODEL_VERSION)?;
    out.write_u8(match c.arch {
        Architecture::Skipgram => 0,
        Architecture::CbowPos => 1,
    })?;
    for v in [c.dim, c.window, c.epochs, c.negatives, c.ngrams.nmin, c.ngrams.nmax, c.threads] {
        out.write_u64::<LittleEndian>(v as u64)?;
    }
    out.write_u32::<LittleEndian>(c.ngrams.bucket_count)?;
    out.write_f32::<LittleEndian>(c.lr0)?;
    out.write_u64::<LittleEndian>(c.min_count)?;
    out.write_f64::<LittleEndian>(c.subsample)?;
    out.write_u64::<LittleEndian>(c.seed)?;
    out.write_u8(c.freeze_positions as u8)?;
    out.write_u8(match c.data_source {
        DataSource::Wikipedia => 0,
        DataSource::WikipediaAndCrawl => 1,
    })?;

    let vocab = model.vocab();
    out.write_u64::<LittleEndian>(vocab.len() as u64)?;
    out.write_u64::<LittleEndian>(vocab.min_count())?;
    out.write_u64::<LittleEndian>(vocab.total_tokens())?;
    for e in vocab.entries() {
        write_str(&mut out, &e.word)?;
        out.write_u64::<LittleEndian>(e.count)?;
    }

    write_matrix(&mut out, model.input())?;
    write_matrix(&mut out, model.output())?;
    match model.positions() {
        Some(p) => {
            out.write_u8(1)?;
            write_matrix(&mut out, p)?;
        }
        None => out.write_u8(0)?,
    }
    out.flush()?;
    Ok(())
}

pub fn read_model(bytes: &[u8]) -> Result<EmbeddingModel> {
    parse_model(bytes).map_err(truncated)
}

fn parse_model(bytes: &[u8]) -> Result<EmbeddingModel> {
    let mut input = Cursor::new(bytes);
    check_header(&mut input, MODEL_MAGIC, MODEL_VERSION)?;
    let arch = match input.read_u8()? {
        0 => Architecture::Skipgram,
        1 => Architecture::CbowPos,
        other => return Err(Error::Format(format!("unknown architecture {other}"))),
    };
    let mut sizes = [0usize; 7];
    for s in &mut sizes {
        *s = input.read_u64::<LittleEndian>()? as usize;
    }
    let [dim, window, epochs, negatives, nmin, nmax, threads] = sizes;
    let bucket_count = input.read_u32::<LittleEndian>()?;
    let lr0 = input.read_f32::<LittleEndian>()?;
    let min_count = input.read_u64::<LittleEndian>()?;
    let subsample = input.read_f64::<LittleEndian>()?;
    let seed = input.read_u64::<LittleEndian>()?;
    let freeze_positions = input.read_u8()? != 0;
    let data_source = match input.read_u8()? {
        0 => DataSource::Wikipedia,
        1 => DataSource::WikipediaAndCrawl,
        other => return Err(Error::Format(format!("unknown data source {other}"))),
    };
    let config = TrainConfig {
        arch,
        dim,
        window,
        epochs,
        negatives,
        lr0,
        ngrams: NgramConfig {
            nmin,
            nmax,
            bucket_count,
        },
        min_count,
        subsample,
        seed,
        threads,
        freeze_positions,
        data_source,
    };

    let nwords = input.read_u64::<LittleEndian>()? as usize;
    let vocab_min = input.read_u64::<LittleEndian>()?;
    let total = input.read_u64::<LittleEndian>()?;
    let mut entries = Vec::with_capacity(nwords.min(1 << 20));
    for _ in 0..nwords {
        let word = read_str(&mut input)?;
        let count = input.read_u64::<LittleEndian>()?;
        entries.push(Entry { word, count });
    }
    let vocab = Vocabulary::from_parts(entries, vocab_min, total);

    let in_m = read_matrix(&mut input)?;
    let out_m = read_matrix(&mut input)?;
    let positions = match input.read_u8()? {
        0 => None,
        1 => Some(read_matrix(&mut input)?),
        _ => return Err(Error::Format("bad position-matrix flag".into())),
    };
    if input.position() != bytes.len() as u64 {
        return Err(Error::Format("trailing bytes after model".into()));
    }
    EmbeddingModel::from_parts(config, vocab, in_m, out_m, positions)
}

pub fn save_model<P: AsRef<Path>>(path: P, model: &EmbeddingModel) -> Result<()> {
    write_model(BufWriter::new(File::create(path)?), model)
}

pub fn load_model<P: AsRef<Path>>(path: P) -> Result<EmbeddingModel> {
    read_model(&std::fs::read(path)?)
}

pub fn write_langid<W: Write>(mut out: W, model: &LangIdModel) -> Result<()> {
    out.write_all(&LANGID_MAGIC)?;
    out.write_u32::<LittleEndian>(LANGID_VERSION)?;
    let (nmin, nmax) = model.ngram_range();
    out.write_u32::<LittleEndian>(nmin as u32)?;
    out.write_u32::<LittleEndian>(nmax as u32)?;
    out.write_u32::<LittleEndian>(model.labels().len() as u32)?;
    for l in model.labels() {
        write_str(&mut out, l)?;
    }
    let tree = model.tree();
    for ((&count, parent), &bit) in tree.counts().iter().zip(tree.parents()).zip(tree.bits()) {
        out.write_u64::<LittleEndian>(count)?;
        out.write_i64::<LittleEndian>(parent.map_or(-1, i64::from))?;
        out.write_u8(bit as u8)?;
    }
    write_matrix(&mut out, model.features())?;
    write_matrix(&mut out, model.nodes())?;
    out.flush()?;
    Ok(())
}

pub fn read_langid(bytes: &[u8]) -> Result<LangIdModel> {
    parse_langid(bytes).map_err(truncated)
}

fn parse_langid(bytes: &[u8]) -> Result<LangIdModel> {
    let mut input = Cursor::new(bytes);
    check_header(&mut input, LANGID_MAGIC, LANGID_VERSION)?;
    let nmin = input.read_u32::<LittleEndian>()? as usize;
    let nmax = input.read_u32::<LittleEndian>()? as usize;
    let nlabels = input.read_u32::<LittleEndian>()? as usize;
    if nlabels == 0 || nlabels > 1 << 20 {
        return Err(Error::Format("bad label count".into()));
    }
    let labels = (0..nlabels)
        .map(|_| read_str(&mut input))
        .collect::<Result<Vec<_>>>()?;
    let nodes = 2 * nlabels - 1;
    let (mut counts, mut parents, mut bits) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..nodes {
        counts.push(input.read_u64::<LittleEndian>()?);
        let p = input.read_i64::<LittleEndian>()?;
        parents.push(if p < 0 { None } else { Some(p as u32) });
        bits.push(input.read_u8()? != 0);
    }
    let tree = HuffmanTree::from_topology(counts, parents, bits)?;
    let features = read_matrix(&mut input)?;
    let node_m = read_matrix(&mut input)?;
    if input.position() != bytes.len() as u64 {
        return Err(Error::Format("trailing bytes after model".into()));
    }
    LangIdModel::from_parts(labels, nmin, nmax, features, node_m, tree)
}

pub fn save_langid<P: AsRef<Path>>(path: P, model: &LangIdModel) -> Result<()> {
    write_langid(BufWriter::new(File::create(path)?), model)
}

pub fn load_langid<P: AsRef<Path>>(path: P) -> Result<LangIdModel> {
    read_langid(&std::fs::read(path)?)
}
