//! Feature-to-nucleotide encoding.
//!
//! Every feature becomes a fixed-width codon: continuous values are
//! quantized into `L` levels, symbolic tokens are indexed in a sorted
//! codebook, and the index is written in base 4 (A=0, C=1, G=2, T=3), most
//! significant digit first. A record's sequence is the concatenation of its
//! codons in schema order, so all sequences under one model share a length.

use std::fmt::{self, Write as _};
use std::fs;
use std::hash::Hasher;
use std::io;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use fnv::FnvHasher;
use thiserror::Error;

use crate::dataset::{
    ConnectionRecord, FeatureGroup, FeatureKind, FeatureStats, FeatureSummary, FeatureValue,
    RecordSchema,
};

/// Default number of quantization levels for continuous features.
pub const DEFAULT_LEVELS: u64 = 256;
/// Widest codon a symbolic codebook may use (capacity 4^4 - 1 = 255).
pub const MAX_CODEBOOK_WIDTH: u32 = 4;

const MODEL_HEADER: &str = "#ENC v1";

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("feature {0} has more categories than a {MAX_CODEBOOK_WIDTH}-codon codebook can hold")]
    CapacityExceeded(String),
    #[error("levels must be at least 2 (got {0})")]
    InvalidLevels(u64),
    #[error("feature statistics do not match the schema")]
    StatsMismatch,
    #[error("record value kinds disagree with the encoder at feature {0}")]
    SchemaMismatch(usize),
    #[error("invalid nucleotide {0:?}")]
    InvalidNucleotide(char),
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed encoder model line {0}")]
    MalformedModel(usize),
    #[error("encoder model fingerprint mismatch (file says {stored}, content hashes to {computed})")]
    FingerprintMismatch { stored: String, computed: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Nucleotide {
    A = 0,
    C = 1,
    G = 2,
    T = 3,
}

impl Nucleotide {
    pub const ALL: [Nucleotide; 4] = [Nucleotide::A, Nucleotide::C, Nucleotide::G, Nucleotide::T];

    pub fn from_digit(d: u8) -> Option<Nucleotide> {
        Self::ALL.get(d as usize).copied()
    }

    pub fn digit(self) -> u8 {
        self as u8
    }

    pub fn as_byte(self) -> u8 {
        b"ACGT"[self as usize]
    }

    pub fn from_byte(b: u8) -> Option<Nucleotide> {
        match b {
            b'A' => Some(Nucleotide::A),
            b'C' => Some(Nucleotide::C),
            b'G' => Some(Nucleotide::G),
            b'T' => Some(Nucleotide::T),
            _ => None,
        }
    }
}

/// A string over {A,C,G,T}, stored as ASCII bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NucleotideSequence(Vec<u8>);

impl NucleotideSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        NucleotideSequence(Vec::with_capacity(n))
    }

    pub fn push(&mut self, n: Nucleotide) {
        self.0.push(n.as_byte());
    }

    pub fn extend_from(&mut self, other: &NucleotideSequence) {
        self.0.extend_from_slice(&other.0);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        // only ASCII ACGT is ever stored
        std::str::from_utf8(&self.0).expect("ascii")
    }

    pub fn iter(&self) -> impl Iterator<Item = Nucleotide> + '_ {
        self.0
            .iter()
            .map(|&b| Nucleotide::from_byte(b).expect("alphabet closure"))
    }

    pub fn slice(&self, range: Range<usize>) -> NucleotideSequence {
        NucleotideSequence(self.0[range].to_vec())
    }

    /// Writes `value` in base 4 with exactly `width` digits.
    pub fn push_base4(&mut self, value: u64, width: u32) {
        for pos in (0..width).rev() {
            let digit = (value >> (2 * pos)) & 3;
            self.0.push(b"ACGT"[digit as usize]);
        }
    }

    /// Reads the whole sequence as a base-4 number.
    pub fn to_base4(&self) -> u64 {
        self.iter().fold(0, |acc, n| (acc << 2) | n.digit() as u64)
    }
}

impl FromStr for NucleotideSequence {
    type Err = EncodingError;
    fn from_str(s: &str) -> Result<Self, EncodingError> {
        match s.bytes().find(|&b| Nucleotide::from_byte(b).is_none()) {
            Some(_) => {
                let bad = s.chars().find(|c| !"ACGT".contains(*c)).unwrap_or('?');
                Err(EncodingError::InvalidNucleotide(bad))
            }
            None => Ok(NucleotideSequence(s.as_bytes().to_vec())),
        }
    }
}

impl fmt::Display for NucleotideSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Smallest `k >= 1` with `4^k >= n`.
fn base4_width(n: u64) -> u32 {
    let mut k = 1;
    while k < 32 && (1u64 << (2 * k)) < n {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousQuantizer {
    pub min: f64,
    pub max: f64,
    pub levels: u64,
    pub codon_width: u32,
}

impl ContinuousQuantizer {
    pub fn new(min: f64, max: f64, levels: u64) -> Result<Self, EncodingError> {
        if !(2..=1 << 62).contains(&levels) {
            return Err(EncodingError::InvalidLevels(levels));
        }
        Ok(ContinuousQuantizer {
            min,
            max,
            levels,
            codon_width: base4_width(levels),
        })
    }

    /// Quantization level of `x`; values outside `[min, max]` clamp.
    pub fn level(&self, x: f64) -> u64 {
        if self.max <= self.min {
            return 0;
        }
        let t = ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0);
        ((t * self.levels as f64).floor() as u64).min(self.levels - 1)
    }

    pub fn encode(&self, x: f64) -> NucleotideSequence {
        let mut out = NucleotideSequence::with_capacity(self.codon_width as usize);
        self.encode_into(x, &mut out);
        out
    }

    fn encode_into(&self, x: f64, out: &mut NucleotideSequence) {
        out.push_base4(self.level(x), self.codon_width);
    }

    /// Lower edge of the bucket for `level`.
    pub fn representative(&self, level: u64) -> f64 {
        if self.max <= self.min {
            return self.min;
        }
        self.min + (self.max - self.min) * (level as f64 / self.levels as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryCodebook {
    categories: Vec<String>,
    pub codon_width: u32,
}

impl CategoryCodebook {
    /// Builds a codebook with the minimal width whose capacity `4^k - 1`
    /// holds every category, leaving the last codon as the unseen sentinel.
    pub fn new<I, S>(categories: I) -> Result<Self, usize>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut categories: Vec<String> = categories.into_iter().map(Into::into).collect();
        categories.sort();
        categories.dedup();
        let codon_width = base4_width(categories.len() as u64 + 1);
        if codon_width > MAX_CODEBOOK_WIDTH {
            return Err(categories.len());
        }
        Ok(CategoryCodebook {
            categories,
            codon_width,
        })
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn sentinel_index(&self) -> u64 {
        (1u64 << (2 * self.codon_width)) - 1
    }

    pub fn index_of(&self, token: &str) -> Option<u64> {
        self.categories
            .binary_search_by(|c| c.as_str().cmp(token))
            .ok()
            .map(|i| i as u64)
    }

    /// Encodes `token`; the flag is true when it fell back to the sentinel.
    pub fn encode(&self, token: &str) -> (NucleotideSequence, bool) {
        let mut out = NucleotideSequence::with_capacity(self.codon_width as usize);
        let unknown = self.encode_into(token, &mut out);
        (out, unknown)
    }

    fn encode_into(&self, token: &str, out: &mut NucleotideSequence) -> bool {
        match self.index_of(token) {
            Some(i) => {
                out.push_base4(i, self.codon_width);
                false
            }
            None => {
                out.push_base4(self.sentinel_index(), self.codon_width);
                true
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureEncoder {
    Continuous(ContinuousQuantizer),
    Symbolic(CategoryCodebook),
}

impl FeatureEncoder {
    pub fn codon_width(&self) -> u32 {
        match self {
            FeatureEncoder::Continuous(q) => q.codon_width,
            FeatureEncoder::Symbolic(c) => c.codon_width,
        }
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureEncoder::Continuous(_) => FeatureKind::Continuous,
            FeatureEncoder::Symbolic(_) => FeatureKind::Symbolic,
        }
    }
}

/// A fitted, frozen record encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    levels: u64,
    encoders: Vec<FeatureEncoder>,
    total_length: usize,
    fingerprint: String,
}

impl EncoderModel {
    pub fn from_parts(levels: u64, encoders: Vec<FeatureEncoder>) -> Self {
        let total_length = encoders.iter().map(|e| e.codon_width() as usize).sum();
        let mut model = EncoderModel {
            levels,
            encoders,
            total_length,
            fingerprint: String::new(),
        };
        model.fingerprint = fingerprint_hex(&model.canonical_body());
        model
    }

    pub fn levels(&self) -> u64 {
        self.levels
    }

    pub fn encoders(&self) -> &[FeatureEncoder] {
        &self.encoders
    }

    pub fn total_length(&self) -> usize {
        self.total_length
    }

    /// FNV-1a 64 of the canonical serialization, as 16 lowercase hex digits.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Byte range of each feature's codon within a record sequence.
    pub fn feature_spans(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.encoders
            .iter()
            .map(|e| {
                let end = start + e.codon_width() as usize;
                let span = start..end;
                start = end;
                span
            })
            .collect()
    }

    /// Contiguous span covered by each feature group, in schema order.
    /// Groups with no features are omitted.
    pub fn group_spans(&self, schema: &RecordSchema) -> Vec<(FeatureGroup, Range<usize>)> {
        let mut out: Vec<(FeatureGroup, Range<usize>)> = Vec::new();
        let groups = schema.features().iter().map(|d| &d.group);
        for (group, span) in groups.zip(self.feature_spans()) {
            match out.last_mut() {
                Some((g, r)) if g == group && r.end == span.start => r.end = span.end,
                _ => out.push((*group, span)),
            }
        }
        out
    }

    /// Encodes a record; also returns how many symbolic values hit the
    /// unseen-category sentinel.
    pub fn encode_record(
        &self,
        rec: &ConnectionRecord,
    ) -> Result<(NucleotideSequence, usize), EncodingError> {
        if rec.values.len() != self.encoders.len() {
            return Err(EncodingError::SchemaMismatch(
                rec.values.len().min(self.encoders.len()),
            ));
        }
        let mut seq = NucleotideSequence::with_capacity(self.total_length);
        let mut unknown = 0;
        for (i, (enc, value)) in self.encoders.iter().zip(&rec.values).enumerate() {
            match (enc, value) {
                (FeatureEncoder::Continuous(q), FeatureValue::Continuous(x)) => {
                    q.encode_into(*x, &mut seq)
                }
                (FeatureEncoder::Symbolic(c), FeatureValue::Symbolic(t)) => {
                    unknown += c.encode_into(t, &mut seq) as usize
                }
                _ => return Err(EncodingError::SchemaMismatch(i)),
            }
        }
        Ok((seq, unknown))
    }

    fn canonical_body(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MODEL_HEADER}").unwrap();
        writeln!(s, "levels={}", self.levels).unwrap();
        for (i, enc) in self.encoders.iter().enumerate() {
            match enc {
                FeatureEncoder::Continuous(q) => {
                    writeln!(s, "{i}|continuous|{}|{},{}", q.codon_width, q.min, q.max)
                }
                FeatureEncoder::Symbolic(c) => {
                    writeln!(s, "{i}|symbolic|{}|{}", c.codon_width, c.categories.join(","))
                }
            }
            .unwrap();
        }
        s
    }

    /// Canonical text form, terminated by the `fp=` line.
    pub fn to_text(&self) -> String {
        let mut s = self.canonical_body();
        writeln!(s, "fp={}", self.fingerprint).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self, EncodingError> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.first() != Some(&MODEL_HEADER) {
            return Err(EncodingError::MalformedModel(1));
        }
        let levels = lines
            .get(1)
            .and_then(|l| l.strip_prefix("levels="))
            .and_then(|v| v.parse::<u64>().ok())
            .ok_or(EncodingError::MalformedModel(2))?;
        if levels < 2 {
            return Err(EncodingError::InvalidLevels(levels));
        }
        let fp_line = lines.len();
        let stored = lines
            .last()
            .and_then(|l| l.strip_prefix("fp="))
            .filter(|_| fp_line > 2)
            .ok_or(EncodingError::MalformedModel(fp_line))?;

        let mut encoders = Vec::new();
        for (offset, line) in lines[2..fp_line - 1].iter().enumerate() {
            let line_no = offset + 3;
            let bad = || EncodingError::MalformedModel(line_no);
            let mut parts = line.splitn(4, '|');
            let index: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
            let kind: FeatureKind = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
            let width: u32 = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
            let payload = parts.next().ok_or_else(bad)?;
            if index != encoders.len() {
                return Err(bad());
            }
            let enc = match kind {
                FeatureKind::Continuous => {
                    let (lo, hi) = payload.split_once(',').ok_or_else(bad)?;
                    let min: f64 = lo.parse().map_err(|_| bad())?;
                    let max: f64 = hi.parse().map_err(|_| bad())?;
                    let q = ContinuousQuantizer::new(min, max, levels)?;
                    FeatureEncoder::Continuous(q)
                }
                FeatureKind::Symbolic => {
                    let c = CategoryCodebook::new(payload.split(',')).map_err(|_| bad())?;
                    FeatureEncoder::Symbolic(c)
                }
            };
            if enc.codon_width() != width {
                return Err(bad());
            }
            encoders.push(enc);
        }
        let model = EncoderModel::from_parts(levels, encoders);
        if model.fingerprint != stored {
            return Err(EncodingError::FingerprintMismatch {
                stored: stored.to_string(),
                computed: model.fingerprint,
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EncodingError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EncodingError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => EncodingError::MissingFile(path.display().to_string()),
            _ => EncodingError::Io(e),
        })?;
        Self::from_text(&text)
    }
}

fn fingerprint_hex(body: &str) -> String {
    let mut h = FnvHasher::default();
    h.write(body.as_bytes());
    format!("{:016x}", h.finish())
}

/// Fits one encoder per schema feature from training statistics.
pub fn fit_encoder(
    stats: &FeatureStats,
    schema: &RecordSchema,
    levels: u64,
) -> Result<EncoderModel, EncodingError> {
    if levels < 2 {
        return Err(EncodingError::InvalidLevels(levels));
    }
    if stats.features.len() != schema.len() {
        return Err(EncodingError::StatsMismatch);
    }
    let mut encoders = Vec::with_capacity(schema.len());
    for (desc, summary) in schema.features().iter().zip(&stats.features) {
        let enc = match (desc.kind, summary) {
            (FeatureKind::Continuous, FeatureSummary::Continuous { min, max }) => {
                FeatureEncoder::Continuous(ContinuousQuantizer::new(*min, *max, levels)?)
            }
            (FeatureKind::Symbolic, FeatureSummary::Symbolic { categories }) => {
                let c = CategoryCodebook::new(categories.iter().cloned())
                    .map_err(|_| EncodingError::CapacityExceeded(desc.name.clone()))?;
                FeatureEncoder::Symbolic(c)
            }
            _ => return Err(EncodingError::StatsMismatch),
        };
        encoders.push(enc);
    }
    Ok(EncoderModel::from_parts(levels, encoders))
}
