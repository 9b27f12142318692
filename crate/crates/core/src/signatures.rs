//! Attack-signature database: build from encoded labelled records, persist,
//! reload, and merge.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::LabelClass;
use crate::encoding::NucleotideSequence;

const DB_HEADER: &str = "#IDSDB v1";
const DB_ALPHABET: &str = "alphabet=ACGT";

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("sequence {0} has a different length from the first sequence")]
    LengthMismatch(usize),
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported database version header {0:?}")]
    VersionMismatch(String),
    #[error("malformed database line {0}")]
    MalformedLine(usize),
    #[error("sequence duplicated within class at line {0}")]
    DuplicateSequenceInClass(usize),
    #[error("encoder fingerprints differ ({0} vs {1})")]
    FingerprintMismatch(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ConflictPolicy {
    /// Sequences that also occur with a Normal label are excluded.
    #[default]
    DropConflicts,
    KeepConflicts,
}

impl ConflictPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ConflictPolicy::DropConflicts => "drop_conflicts",
            ConflictPolicy::KeepConflicts => "keep_conflicts",
        }
    }
}

impl FromStr for ConflictPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "drop_conflicts" | "drop" => Ok(ConflictPolicy::DropConflicts),
            "keep_conflicts" | "keep" => Ok(ConflictPolicy::KeepConflicts),
            _ => Err(format!("unknown conflict policy {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub id: u32,
    pub class: LabelClass,
    pub sequence: NucleotideSequence,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureDatabase {
    pub encoder_fingerprint: String,
    pub policy: ConflictPolicy,
    pub conflict_count: u64,
    /// One list per attack class (DoS, Probe, R2L, U2R), ids ascending.
    signatures: [Vec<Signature>; 4],
}

impl SignatureDatabase {
    pub fn empty(encoder_fingerprint: impl Into<String>, policy: ConflictPolicy) -> Self {
        SignatureDatabase {
            encoder_fingerprint: encoder_fingerprint.into(),
            policy,
            conflict_count: 0,
            signatures: Default::default(),
        }
    }

    pub fn class_signatures(&self, class: LabelClass) -> &[Signature] {
        match class.attack_index() {
            Some(i) => &self.signatures[i],
            None => &[],
        }
    }

    /// All signatures in file order: class, then id.
    pub fn iter(&self) -> impl Iterator<Item = &Signature> {
        self.signatures.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.signatures.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-class signature counts in class order.
    pub fn class_counts(&self) -> [(LabelClass, usize); 4] {
        let mut out = [(LabelClass::DoS, 0); 4];
        for (i, c) in LabelClass::ATTACKS.iter().enumerate() {
            out[i] = (*c, self.signatures[i].len());
        }
        out
    }

    /// Rebuilds from an arbitrary list, ordering each class by id.
    fn from_signatures(
        encoder_fingerprint: String,
        policy: ConflictPolicy,
        conflict_count: u64,
        sigs: impl IntoIterator<Item = Signature>,
    ) -> Self {
        let mut db = SignatureDatabase::empty(encoder_fingerprint, policy);
        db.conflict_count = conflict_count;
        for s in sigs {
            let i = s.class.attack_index().expect("signatures carry attack classes");
            db.signatures[i].push(s);
        }
        for list in &mut db.signatures {
            list.sort_by_key(|s| s.id);
        }
        db
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{DB_HEADER}").unwrap();
        writeln!(s, "{DB_ALPHABET}").unwrap();
        writeln!(s, "encoder={}", self.encoder_fingerprint).unwrap();
        writeln!(s, "policy={}", self.policy.as_str()).unwrap();
        writeln!(s, "conflicts={}", self.conflict_count).unwrap();
        for sig in self.iter() {
            writeln!(
                s,
                "{}\t{}\t{}\t{}",
                sig.class.as_str(),
                sig.id,
                sig.support,
                sig.sequence
            )
            .unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, SignatureError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut header = |prefix: &str| -> Result<String, SignatureError> {
            let (no, line) = lines.next().ok_or(SignatureError::MalformedLine(0))?;
            line.strip_prefix(prefix)
                .map(str::to_string)
                .ok_or(SignatureError::MalformedLine(no))
        };
        let version = header("")?;
        if version != DB_HEADER {
            return Err(SignatureError::VersionMismatch(version));
        }
        if header("alphabet=")? != "ACGT" {
            return Err(SignatureError::MalformedLine(2));
        }
        let fingerprint = header("encoder=")?;
        if fingerprint.len() != 16 || !fingerprint.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(SignatureError::MalformedLine(3));
        }
        let policy = header("policy=")?
            .parse()
            .map_err(|_| SignatureError::MalformedLine(4))?;
        let conflicts = header("conflicts=")?
            .parse()
            .map_err(|_| SignatureError::MalformedLine(5))?;

        let mut seen: HashSet<(LabelClass, NucleotideSequence)> = HashSet::new();
        let mut ids = HashSet::new();
        let mut sigs = Vec::new();
        for (no, line) in lines {
            if line.is_empty() {
                continue;
            }
            let bad = || SignatureError::MalformedLine(no);
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 4 {
                return Err(bad());
            }
            let class: LabelClass = parts[0].parse().map_err(|_| bad())?;
            if !class.is_attack() {
                return Err(bad());
            }
            let id: u32 = parts[1].parse().map_err(|_| bad())?;
            let support: u64 = parts[2].parse().map_err(|_| bad())?;
            let sequence: NucleotideSequence = parts[3].parse().map_err(|_| bad())?;
            if support == 0 || sequence.is_empty() || !ids.insert(id) {
                return Err(bad());
            }
            if !seen.insert((class, sequence.clone())) {
                return Err(SignatureError::DuplicateSequenceInClass(no));
            }
            sigs.push(Signature {
                id,
                class,
                sequence,
                support,
            });
        }
        Ok(Self::from_signatures(fingerprint, policy, conflicts, sigs))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SignatureError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SignatureError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => SignatureError::MissingFile(path.display().to_string()),
            _ => SignatureError::Io(e),
        })?;
        Self::from_text(&text)
    }
}

/// Accumulates (class, sequence) observations in first-seen order.
#[derive(Default)]
struct Tally {
    order: Vec<(LabelClass, NucleotideSequence)>,
    support: HashMap<(LabelClass, NucleotideSequence), u64>,
    normals: HashSet<NucleotideSequence>,
}

impl Tally {
    fn observe(&mut self, seq: NucleotideSequence, class: LabelClass) {
        if class == LabelClass::Normal {
            self.normals.insert(seq);
            return;
        }
        let key = (class, seq);
        match self.support.get_mut(&key) {
            Some(n) => *n += 1,
            None => {
                self.support.insert(key.clone(), 1);
                self.order.push(key);
            }
        }
    }

    fn finish(self, fingerprint: &str, policy: ConflictPolicy) -> SignatureDatabase {
        let mut conflicts = 0;
        let mut next_id = 0u32;
        let mut sigs = Vec::with_capacity(self.order.len());
        for key in self.order {
            if policy == ConflictPolicy::DropConflicts && self.normals.contains(&key.1) {
                conflicts += 1;
                continue;
            }
            let support = self.support[&key];
            sigs.push(Signature {
                id: next_id,
                class: key.0,
                sequence: key.1,
                support,
            });
            next_id += 1;
        }
        SignatureDatabase::from_signatures(fingerprint.to_string(), policy, conflicts, sigs)
    }
}

/// Builds the database from whole-record sequences.
///
/// `conflict_count` counts distinct (class, sequence) pairs removed because
/// the same sequence also appeared labelled Normal.
pub fn build_database<I>(
    encoded: I,
    fingerprint: &str,
    policy: ConflictPolicy,
) -> Result<SignatureDatabase, SignatureError>
where
    I: IntoIterator<Item = (NucleotideSequence, LabelClass)>,
{
    let mut tally = Tally::default();
    let mut expected_len = None;
    for (i, (seq, class)) in encoded.into_iter().enumerate() {
        match expected_len {
            None => expected_len = Some(seq.len()),
            Some(n) if n != seq.len() => return Err(SignatureError::LengthMismatch(i)),
            _ => {}
        }
        tally.observe(seq, class);
    }
    Ok(tally.finish(fingerprint, policy))
}

/// Builds a database of per-feature-group subsequences: every record
/// contributes one signature candidate per span. Conflicts are judged per
/// subsequence against the Normal subsequences of the same span.
pub fn build_group_database<I>(
    encoded: I,
    spans: &[Range<usize>],
    fingerprint: &str,
    policy: ConflictPolicy,
) -> Result<SignatureDatabase, SignatureError>
where
    I: IntoIterator<Item = (NucleotideSequence, LabelClass)>,
{
    let mut tally = Tally::default();
    let needed = spans.iter().map(|r| r.end).max().unwrap_or(0);
    for (i, (seq, class)) in encoded.into_iter().enumerate() {
        if seq.len() < needed {
            return Err(SignatureError::LengthMismatch(i));
        }
        for span in spans {
            tally.observe(seq.slice(span.clone()), class);
        }
    }
    Ok(tally.finish(fingerprint, policy))
}

/// Union by (class, sequence) with supports and conflict counts summed.
/// Ids are reassigned: `a`'s signatures in file order, then `b`'s new ones.
pub fn merge_databases(
    a: &SignatureDatabase,
    b: &SignatureDatabase,
) -> Result<SignatureDatabase, SignatureError> {
    if a.encoder_fingerprint != b.encoder_fingerprint {
        return Err(SignatureError::FingerprintMismatch(
            a.encoder_fingerprint.clone(),
            b.encoder_fingerprint.clone(),
        ));
    }
    let mut index: HashMap<(LabelClass, &NucleotideSequence), usize> = HashMap::new();
    let mut merged: Vec<Signature> = Vec::with_capacity(a.len() + b.len());
    for sig in a.iter().chain(b.iter()) {
        match index.get(&(sig.class, &sig.sequence)) {
            Some(&i) => merged[i].support += sig.support,
            None => {
                index.insert((sig.class, &sig.sequence), merged.len());
                merged.push(Signature {
                    id: merged.len() as u32,
                    ..sig.clone()
                });
            }
        }
    }
    Ok(SignatureDatabase::from_signatures(
        a.encoder_fingerprint.clone(),
        a.policy,
        a.conflict_count + b.conflict_count,
        merged,
    ))
}
