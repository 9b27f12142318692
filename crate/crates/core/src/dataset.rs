//! NSL-KDD / KDD Cup 99 record ingestion.
//!
//! A [`RecordSchema`] declares the 41 connection features, an
//! [`AttackTaxonomy`] folds the attack subtypes into four classes, and
//! [`RecordReader`] streams comma-separated lines into [`ConnectionRecord`]s.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

/// Number of connection features in a KDD record.
pub const FEATURE_COUNT: usize = 41;

const DEFAULT_SCHEMA: &str = include_str!("../data/kdd_schema.txt");
const DEFAULT_TAXONOMY: &str = include_str!("../data/taxonomy.txt");

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed schema line {0}")]
    MalformedSchemaLine(usize),
    #[error("duplicate feature index {0}")]
    DuplicateIndex(usize),
    #[error("duplicate feature name {0}")]
    DuplicateName(String),
    #[error("schema declares {0} features, expected 41")]
    WrongFeatureCount(usize),
    #[error("malformed taxonomy line {0}")]
    MalformedTaxonomyLine(usize),
    #[error("line {line}: expected 42 or 43 fields, got {got}")]
    ArityError { line: usize, got: usize },
    #[error("line {line}: field {field} is not a finite number")]
    NumericParseError { line: usize, field: usize },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("prefix length {n} out of range (dataset has {len} records)")]
    OutOfRange { n: usize, len: usize },
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => DatasetError::MissingFile(path.display().to_string()),
        _ => DatasetError::Io(e),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Continuous,
    Symbolic,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Continuous => "continuous",
            FeatureKind::Symbolic => "symbolic",
        }
    }
}

impl FromStr for FeatureKind {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "continuous" => Ok(FeatureKind::Continuous),
            "symbolic" => Ok(FeatureKind::Symbolic),
            _ => Err(()),
        }
    }
}

/// Feature families of the KDD record layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureGroup {
    /// Taken straight from packet headers.
    Basic,
    /// Derived from payload inspection (failed logins, shells, ...).
    Content,
    /// Two-second window statistics.
    TimeTraffic,
    /// Statistics over the last 100 connections to the same host.
    HostTraffic,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [
        FeatureGroup::Basic,
        FeatureGroup::Content,
        FeatureGroup::TimeTraffic,
        FeatureGroup::HostTraffic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::Basic => "basic",
            FeatureGroup::Content => "content",
            FeatureGroup::TimeTraffic => "time_traffic",
            FeatureGroup::HostTraffic => "host_traffic",
        }
    }
}

impl FromStr for FeatureGroup {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "basic" => Ok(FeatureGroup::Basic),
            "content" => Ok(FeatureGroup::Content),
            "time_traffic" => Ok(FeatureGroup::TimeTraffic),
            "host_traffic" => Ok(FeatureGroup::HostTraffic),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureDescriptor {
    pub index: usize,
    pub name: String,
    pub kind: FeatureKind,
    pub group: FeatureGroup,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordSchema {
    features: Vec<FeatureDescriptor>,
    allows_difficulty_column: bool,
}

impl RecordSchema {
    /// The bundled 41-feature NSL-KDD layout.
    pub fn kdd_default() -> Self {
        Self::parse(DEFAULT_SCHEMA).expect("bundled schema is valid")
    }

    /// Loads a schema file (`index,name,kind,group` per line, `#` comments).
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::parse(&read_text(path.as_ref())?)
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut slots: Vec<Option<FeatureDescriptor>> = Vec::new();
        let mut names = HashSet::new();
        let mut count = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let line_no = i + 1;
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 4 || parts[1].is_empty() {
                return Err(DatasetError::MalformedSchemaLine(line_no));
            }
            let index: usize = parts[0]
                .parse()
                .map_err(|_| DatasetError::MalformedSchemaLine(line_no))?;
            let kind = parts[2]
                .parse()
                .map_err(|_| DatasetError::MalformedSchemaLine(line_no))?;
            let group = parts[3]
                .parse()
                .map_err(|_| DatasetError::MalformedSchemaLine(line_no))?;
            if index >= slots.len() {
                slots.resize(index + 1, None);
            }
            if slots[index].is_some() {
                return Err(DatasetError::DuplicateIndex(index));
            }
            if !names.insert(parts[1].to_string()) {
                return Err(DatasetError::DuplicateName(parts[1].to_string()));
            }
            slots[index] = Some(FeatureDescriptor {
                index,
                name: parts[1].to_string(),
                kind,
                group,
            });
            count += 1;
        }
        if count != FEATURE_COUNT || slots.len() != FEATURE_COUNT {
            return Err(DatasetError::WrongFeatureCount(count));
        }
        let features = slots.into_iter().map(|s| s.expect("dense")).collect();
        Ok(RecordSchema {
            features,
            allows_difficulty_column: true,
        })
    }

    pub fn with_difficulty_column(mut self, allowed: bool) -> Self {
        self.allows_difficulty_column = allowed;
        self
    }

    pub fn allows_difficulty_column(&self) -> bool {
        self.allows_difficulty_column
    }

    pub fn features(&self) -> &[FeatureDescriptor] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Ground-truth class of a connection.
///
/// The derived order (`DoS < Probe < R2L < U2R`) is the default tie-break
/// order for multi-class hits; `Normal` sorts first but never competes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LabelClass {
    Normal,
    DoS,
    Probe,
    R2L,
    U2R,
}

impl LabelClass {
    pub const ATTACKS: [LabelClass; 4] = [
        LabelClass::DoS,
        LabelClass::Probe,
        LabelClass::R2L,
        LabelClass::U2R,
    ];

    pub fn is_attack(self) -> bool {
        self != LabelClass::Normal
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelClass::Normal => "normal",
            LabelClass::DoS => "dos",
            LabelClass::Probe => "probe",
            LabelClass::R2L => "r2l",
            LabelClass::U2R => "u2r",
        }
    }

    /// Position among the attack classes (DoS=0 .. U2R=3).
    pub fn attack_index(self) -> Option<usize> {
        LabelClass::ATTACKS.iter().position(|&c| c == self)
    }
}

impl fmt::Display for LabelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelClass {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "normal" => Ok(LabelClass::Normal),
            "dos" => Ok(LabelClass::DoS),
            "probe" => Ok(LabelClass::Probe),
            "r2l" => Ok(LabelClass::R2L),
            "u2r" => Ok(LabelClass::U2R),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackTaxonomy {
    subtype_to_class: HashMap<String, LabelClass>,
}

impl AttackTaxonomy {
    /// KDD Cup 99 task mapping of the 22 training subtypes.
    pub fn kdd_default() -> Self {
        Self::parse(DEFAULT_TAXONOMY).expect("bundled taxonomy is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::parse(&read_text(path.as_ref())?)
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut subtype_to_class = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (subtype, class) = line
                .split_once(',')
                .ok_or(DatasetError::MalformedTaxonomyLine(i + 1))?;
            let subtype = subtype.trim().to_lowercase();
            let class = class
                .trim()
                .to_lowercase()
                .parse::<LabelClass>()
                .ok()
                .filter(|c| c.is_attack())
                .ok_or(DatasetError::MalformedTaxonomyLine(i + 1))?;
            if subtype.is_empty() || subtype == "normal" {
                return Err(DatasetError::MalformedTaxonomyLine(i + 1));
            }
            subtype_to_class.insert(subtype, class);
        }
        Ok(AttackTaxonomy { subtype_to_class })
    }

    pub fn len(&self) -> usize {
        self.subtype_to_class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtype_to_class.is_empty()
    }

    pub fn class_of(&self, subtype: &str) -> Option<LabelClass> {
        self.subtype_to_class.get(subtype).copied()
    }

    pub fn subtypes(&self) -> impl Iterator<Item = (&str, LabelClass)> {
        self.subtype_to_class.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Maps a raw label token to its class. The token is lowercased once and a
    /// trailing KDD-99 style dot is stripped before lookup.
    pub fn normalize_label(&self, raw: &str) -> Result<LabelClass, DatasetError> {
        let token = raw.trim().to_lowercase();
        let token = token.strip_suffix('.').unwrap_or(&token);
        if token == "normal" {
            return Ok(LabelClass::Normal);
        }
        self.class_of(token)
            .ok_or_else(|| DatasetError::UnknownLabel(raw.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Continuous(f64),
    Symbolic(String),
}

impl FeatureValue {
    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureValue::Continuous(_) => FeatureKind::Continuous,
            FeatureValue::Symbolic(_) => FeatureKind::Symbolic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionRecord {
    pub values: Vec<FeatureValue>,
    pub label: Option<String>,
    pub label_class: Option<LabelClass>,
    /// 0-based physical line number in the source file.
    pub source_index: usize,
}

/// Streams [`ConnectionRecord`]s from a line source.
///
/// Fail-fast by default: the first bad line yields an error and ends the
/// stream. In skip mode bad lines are counted and dropped instead.
pub struct RecordReader<'a, R> {
    lines: io::Lines<R>,
    schema: &'a RecordSchema,
    taxonomy: Option<&'a AttackTaxonomy>,
    skip_bad: bool,
    skipped: usize,
    line_no: usize,
    done: bool,
}

impl<'a, R: BufRead> RecordReader<'a, R> {
    pub fn new(input: R, schema: &'a RecordSchema) -> Self {
        RecordReader {
            lines: input.lines(),
            schema,
            taxonomy: None,
            skip_bad: false,
            skipped: 0,
            line_no: 0,
            done: false,
        }
    }

    /// Resolve labels into [`LabelClass`] while parsing.
    pub fn with_taxonomy(mut self, taxonomy: &'a AttackTaxonomy) -> Self {
        self.taxonomy = Some(taxonomy);
        self
    }

    pub fn skip_bad(mut self, skip: bool) -> Self {
        self.skip_bad = skip;
        self
    }

    /// Lines dropped so far in skip mode.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    fn parse_line(&self, line: &str, line_no: usize) -> Result<ConnectionRecord, DatasetError> {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let got = fields.len();
        let arity_ok = got == FEATURE_COUNT + 1
            || (got == FEATURE_COUNT + 2 && self.schema.allows_difficulty_column());
        if !arity_ok {
            return Err(DatasetError::ArityError { line: line_no, got });
        }
        let mut values = Vec::with_capacity(FEATURE_COUNT);
        for (desc, field) in self.schema.features().iter().zip(&fields) {
            let value = match desc.kind {
                FeatureKind::Continuous => {
                    let x: f64 = field.parse().map_err(|_| DatasetError::NumericParseError {
                        line: line_no,
                        field: desc.index,
                    })?;
                    if !x.is_finite() {
                        return Err(DatasetError::NumericParseError {
                            line: line_no,
                            field: desc.index,
                        });
                    }
                    FeatureValue::Continuous(x)
                }
                FeatureKind::Symbolic => FeatureValue::Symbolic(field.to_string()),
            };
            values.push(value);
        }
        let label = fields[FEATURE_COUNT].to_string();
        let label_class = match self.taxonomy {
            Some(t) => Some(t.normalize_label(&label)?),
            None => None,
        };
        Ok(ConnectionRecord {
            values,
            label: Some(label),
            label_class,
            source_index: line_no - 1,
        })
    }
}

impl<R: BufRead> Iterator for RecordReader<'_, R> {
    type Item = Result<ConnectionRecord, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            };
            self.line_no += 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            match self.parse_line(trimmed, self.line_no) {
                Ok(rec) => return Some(Ok(rec)),
                Err(_) if self.skip_bad => self.skipped += 1,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
        None
    }
}

/// Parses a whole input into memory. Returns the records and the number of
/// skipped lines (always 0 unless `skip_bad`).
pub fn parse_records<R: BufRead>(
    input: R,
    schema: &RecordSchema,
    taxonomy: Option<&AttackTaxonomy>,
    skip_bad: bool,
) -> Result<(Vec<ConnectionRecord>, usize), DatasetError> {
    let mut reader = RecordReader::new(input, schema).skip_bad(skip_bad);
    if let Some(t) = taxonomy {
        reader = reader.with_taxonomy(t);
    }
    let mut records = Vec::new();
    for rec in reader.by_ref() {
        records.push(rec?);
    }
    Ok((records, reader.skipped()))
}

/// Opens `path` and parses it; a missing file maps to [`DatasetError::MissingFile`].
pub fn read_records_file(
    path: impl AsRef<Path>,
    schema: &RecordSchema,
    taxonomy: Option<&AttackTaxonomy>,
    skip_bad: bool,
) -> Result<(Vec<ConnectionRecord>, usize), DatasetError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => DatasetError::MissingFile(path.display().to_string()),
        _ => DatasetError::Io(e),
    })?;
    parse_records(io::BufReader::new(file), schema, taxonomy, skip_bad)
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSummary {
    Continuous { min: f64, max: f64 },
    Symbolic { categories: BTreeSet<String> },
}

/// Per-feature observed ranges and category sets.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub features: Vec<FeatureSummary>,
}

impl FeatureStats {
    pub fn from_records<'r, I>(records: I, schema: &RecordSchema) -> Result<Self, DatasetError>
    where
        I: IntoIterator<Item = &'r ConnectionRecord>,
    {
        let mut stats: Option<Vec<FeatureSummary>> = None;
        for rec in records {
            let s = stats.get_or_insert_with(|| {
                schema
                    .features()
                    .iter()
                    .map(|d| match d.kind {
                        FeatureKind::Continuous => FeatureSummary::Continuous {
                            min: f64::INFINITY,
                            max: f64::NEG_INFINITY,
                        },
                        FeatureKind::Symbolic => FeatureSummary::Symbolic {
                            categories: BTreeSet::new(),
                        },
                    })
                    .collect()
            });
            for (summary, value) in s.iter_mut().zip(&rec.values) {
                match (summary, value) {
                    (FeatureSummary::Continuous { min, max }, FeatureValue::Continuous(x)) => {
                        *min = min.min(*x);
                        *max = max.max(*x);
                    }
                    (FeatureSummary::Symbolic { categories }, FeatureValue::Symbolic(t))
                        if !categories.contains(t) =>
                    {
                        categories.insert(t.clone());
                    }
                    // kind mismatches are caught by the encoder
                    _ => {}
                }
            }
        }
        stats
            .map(|features| FeatureStats { features })
            .ok_or(DatasetError::EmptyDataset)
    }

    /// Elementwise union: min of mins, max of maxes, union of category sets.
    pub fn merge(&self, other: &FeatureStats) -> FeatureStats {
        let features = self
            .features
            .iter()
            .zip(&other.features)
            .map(|(a, b)| match (a, b) {
                (
                    FeatureSummary::Continuous { min: a0, max: a1 },
                    FeatureSummary::Continuous { min: b0, max: b1 },
                ) => FeatureSummary::Continuous {
                    min: a0.min(*b0),
                    max: a1.max(*b1),
                },
                (
                    FeatureSummary::Symbolic { categories: a },
                    FeatureSummary::Symbolic { categories: b },
                ) => FeatureSummary::Symbolic {
                    categories: a.union(b).cloned().collect(),
                },
                (a, _) => a.clone(),
            })
            .collect();
        FeatureStats { features }
    }
}

pub fn feature_stats(
    records: &[ConnectionRecord],
    schema: &RecordSchema,
) -> Result<FeatureStats, DatasetError> {
    FeatureStats::from_records(records, schema)
}

/// The first `n` records in original order.
pub fn prefix(records: &[ConnectionRecord], n: usize) -> Result<&[ConnectionRecord], DatasetError> {
    records.get(..n).ok_or(DatasetError::OutOfRange {
        n,
        len: records.len(),
    })
}
