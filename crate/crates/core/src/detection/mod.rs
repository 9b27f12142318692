//! Intrusion detection engine.
//!
//! A [`MatchEngine`] is built once from a [`SignatureDatabase`] and then
//! classifies encoded sessions in one of three modes:
//!
//! * `exact` - hash lookup of the whole-record sequence;
//! * `substring` - any signature occurring inside the sequence, found with
//!   an Aho-Corasick automaton;
//! * `weighted` - nearest signature under the positionwise L1 distance of
//!   letter-frequency weights, accepted when the distance is at most `tau`.
//!
//! Multi-class hits and equal distances resolve by class priority, then by
//! lowest signature id.

pub mod automaton;
mod weights;

use std::collections::HashMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::{ConnectionRecord, DatasetError, LabelClass};
use crate::encoding::{EncoderModel, EncodingError, NucleotideSequence};
use crate::parallel::Executor;
use crate::signatures::SignatureDatabase;

pub use automaton::{Automaton, AutomatonError, Match};
pub use weights::{weight_distance, weight_profile, WeightTable};

/// Absolute tolerance for distance comparisons.
pub const DISTANCE_EPS: f64 = 1e-12;

/// Records handed to the executor per batch in [`DetectStream`].
const STREAM_BATCH: usize = 8192;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("sequence length {got} does not match signature length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("encoder fingerprint {model} does not match database fingerprint {database}")]
    FingerprintMismatch { model: String, database: String },
    #[error("database mixes signature lengths; {0} mode needs whole-record signatures")]
    MixedLengths(DetectionMode),
    #[error("invalid detection config: {0}")]
    InvalidConfig(String),
    #[error("invalid weight table: {0}")]
    InvalidWeights(String),
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DetectionMode {
    #[default]
    Exact,
    Substring,
    Weighted,
}

impl fmt::Display for DetectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectionMode::Exact => "exact",
            DetectionMode::Substring => "substring",
            DetectionMode::Weighted => "weighted",
        })
    }
}

impl FromStr for DetectionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(DetectionMode::Exact),
            "substring" => Ok(DetectionMode::Substring),
            "weighted" => Ok(DetectionMode::Weighted),
            _ => Err(format!("unknown detection mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig {
    pub mode: DetectionMode,
    /// Weighted-mode acceptance threshold.
    pub tau: f64,
    /// Highest priority first.
    pub class_priority: [LabelClass; 4],
    pub weights: WeightTable,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            mode: DetectionMode::Exact,
            tau: 0.0,
            class_priority: LabelClass::ATTACKS,
            weights: WeightTable::default(),
        }
    }
}

impl DetectionConfig {
    pub fn with_mode(mode: DetectionMode) -> Self {
        DetectionConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(DetectionError::InvalidConfig(format!(
                "tau must be a finite value >= 0 (got {})",
                self.tau
            )));
        }
        let mut sorted = self.class_priority;
        sorted.sort();
        if sorted != LabelClass::ATTACKS {
            return Err(DetectionError::InvalidConfig(
                "class priority must be a permutation of dos, probe, r2l, u2r".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Normal,
    Attack(LabelClass),
}

impl Outcome {
    pub fn is_attack(self) -> bool {
        matches!(self, Outcome::Attack(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub source_index: usize,
    pub outcome: Outcome,
    pub matched_signature_id: Option<u32>,
    /// 0 for exact and substring hits; the weight distance in weighted mode.
    pub score: f64,
    pub unknown_count: usize,
}

impl Verdict {
    fn normal() -> Self {
        Verdict {
            source_index: 0,
            outcome: Outcome::Normal,
            matched_signature_id: None,
            score: 0.0,
            unknown_count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EngineWarning {
    /// Nothing to match against; every session classifies Normal.
    EmptyDatabase,
}

#[derive(Debug, Clone, Copy)]
struct SigRef {
    id: u32,
    class: LabelClass,
}

/// Immutable query structure over one signature database.
///
/// Signatures are held in rank order (class priority, then id), so the
/// lowest index among several hits is the winner.
#[derive(Debug, Clone)]
pub struct MatchEngine {
    config: DetectionConfig,
    encoder_fingerprint: String,
    ranked: Vec<SigRef>,
    /// Uniform signature length, if there is one.
    signature_len: Option<usize>,
    exact: HashMap<Vec<u8>, u32>,
    automaton: Option<(Automaton, Vec<u64>)>,
    /// Signature digits (0..4) laid out row by row in rank order.
    weighted_codes: Vec<u8>,
    diff: [[f64; 4]; 4],
    min_gap: f64,
    warnings: Vec<EngineWarning>,
}

fn digit(b: u8) -> u8 {
    match b {
        b'A' => 0,
        b'C' => 1,
        b'G' => 2,
        _ => 3,
    }
}

impl MatchEngine {
    pub fn build(db: &SignatureDatabase, config: DetectionConfig) -> Result<Self, DetectionError> {
        config.validate()?;
        let priority_pos = |c: LabelClass| {
            config
                .class_priority
                .iter()
                .position(|&p| p == c)
                .expect("validated permutation")
        };
        let mut sigs: Vec<_> = db.iter().collect();
        sigs.sort_by_key(|s| (priority_pos(s.class), s.id));

        let mut lengths = sigs.iter().map(|s| s.sequence.len());
        let first = lengths.next();
        let uniform = lengths.all(|l| Some(l) == first);
        let signature_len = if uniform { first } else { None };
        if !uniform && config.mode != DetectionMode::Substring {
            return Err(DetectionError::MixedLengths(config.mode));
        }

        let ranked = sigs
            .iter()
            .map(|s| SigRef {
                id: s.id,
                class: s.class,
            })
            .collect();

        let mut exact = HashMap::with_capacity(sigs.len());
        for (rank, s) in sigs.iter().enumerate() {
            exact
                .entry(s.sequence.as_bytes().to_vec())
                .or_insert(rank as u32);
        }

        let automaton = if config.mode == DetectionMode::Substring {
            let ac = Automaton::new(sigs.iter().map(|s| s.sequence.as_bytes()))?;
            let table = ac.min_rank_table(|p| p as u64);
            Some((ac, table))
        } else {
            None
        };

        let weighted_codes = if config.mode == DetectionMode::Weighted {
            sigs.iter()
                .flat_map(|s| s.sequence.as_bytes().iter().map(|&b| digit(b)))
                .collect()
        } else {
            Vec::new()
        };

        let diff = config.weights.diff_table();
        let min_gap = config.weights.min_gap();
        let mut warnings = Vec::new();
        if db.is_empty() {
            warnings.push(EngineWarning::EmptyDatabase);
        }
        Ok(MatchEngine {
            encoder_fingerprint: db.encoder_fingerprint.clone(),
            config,
            ranked,
            signature_len,
            exact,
            automaton,
            weighted_codes,
            diff,
            min_gap,
            warnings,
        })
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.config
    }

    pub fn encoder_fingerprint(&self) -> &str {
        &self.encoder_fingerprint
    }

    pub fn warnings(&self) -> &[EngineWarning] {
        &self.warnings
    }

    pub fn signature_count(&self) -> usize {
        self.ranked.len()
    }

    /// Number of distinct sequences in the exact index.
    pub fn exact_index_len(&self) -> usize {
        self.exact.len()
    }

    pub fn automaton(&self) -> Option<&Automaton> {
        self.automaton.as_ref().map(|(a, _)| a)
    }

    fn check_len(&self, seq: &NucleotideSequence) -> Result<(), DetectionError> {
        match self.signature_len {
            Some(expected) if expected != seq.len() => Err(DetectionError::LengthMismatch {
                expected,
                got: seq.len(),
            }),
            _ => Ok(()),
        }
    }

    fn hit(&self, rank: usize, score: f64) -> Verdict {
        let s = self.ranked[rank];
        Verdict {
            outcome: Outcome::Attack(s.class),
            matched_signature_id: Some(s.id),
            score,
            ..Verdict::normal()
        }
    }

    fn exact_lookup(&self, seq: &NucleotideSequence) -> Verdict {
        match self.exact.get(seq.as_bytes()) {
            Some(&rank) => self.hit(rank as usize, 0.0),
            None => Verdict::normal(),
        }
    }

    fn weighted_lookup(&self, seq: &NucleotideSequence) -> Verdict {
        let tau = self.config.tau;
        // any mismatching position costs at least min_gap
        if tau + DISTANCE_EPS < self.min_gap {
            return self.exact_lookup(seq);
        }
        let len = seq.len();
        if len == 0 {
            return Verdict::normal();
        }
        let probe: Vec<u8> = seq.as_bytes().iter().map(|&b| digit(b)).collect();
        let mut best: Option<(usize, f64)> = None;
        for (rank, row) in self.weighted_codes.chunks_exact(len).enumerate() {
            let bound = best.map_or(tau, |(_, d)| d.min(tau)) + DISTANCE_EPS;
            let mut acc = 0.0;
            let mut abandoned = false;
            for (&a, &b) in probe.iter().zip(row) {
                acc += self.diff[a as usize][b as usize];
                if acc > bound {
                    abandoned = true;
                    break;
                }
            }
            if abandoned {
                continue;
            }
            match best {
                Some((_, d)) if acc >= d - DISTANCE_EPS => {}
                _ => best = Some((rank, acc)),
            }
        }
        match best {
            Some((rank, d)) => self.hit(rank, d),
            None => Verdict::normal(),
        }
    }

    fn substring_lookup(&self, seq: &NucleotideSequence) -> Verdict {
        let (ac, table) = self.automaton.as_ref().expect("substring engine has an automaton");
        match ac.scan_min(seq.as_bytes(), table) {
            u64::MAX => Verdict::normal(),
            rank => self.hit(rank as usize, 0.0),
        }
    }

    /// Classifies one encoded session. `source_index` and `unknown_count` of
    /// the returned verdict are left at 0.
    pub fn classify(&self, seq: &NucleotideSequence) -> Result<Verdict, DetectionError> {
        match self.config.mode {
            DetectionMode::Exact => {
                self.check_len(seq)?;
                Ok(self.exact_lookup(seq))
            }
            DetectionMode::Weighted => {
                self.check_len(seq)?;
                Ok(self.weighted_lookup(seq))
            }
            DetectionMode::Substring => Ok(self.substring_lookup(seq)),
        }
    }

    fn classify_record(
        &self,
        rec: &ConnectionRecord,
        model: &EncoderModel,
    ) -> Result<Verdict, DetectionError> {
        let (seq, unknown_count) = model.encode_record(rec)?;
        let mut v = self.classify(&seq)?;
        v.source_index = rec.source_index;
        v.unknown_count = unknown_count;
        Ok(v)
    }
}

pub fn build_engine(
    db: &SignatureDatabase,
    config: DetectionConfig,
) -> Result<MatchEngine, DetectionError> {
    MatchEngine::build(db, config)
}

fn check_fingerprint(model: &EncoderModel, engine: &MatchEngine) -> Result<(), DetectionError> {
    if model.fingerprint() != engine.encoder_fingerprint() {
        return Err(DetectionError::FingerprintMismatch {
            model: model.fingerprint().to_string(),
            database: engine.encoder_fingerprint().to_string(),
        });
    }
    Ok(())
}

/// Encodes and classifies a materialized dataset; verdicts come back in
/// input order regardless of how many workers `exec` uses.
pub fn detect_records(
    records: &[ConnectionRecord],
    model: &EncoderModel,
    engine: &MatchEngine,
    exec: &Executor,
) -> Result<Vec<Verdict>, DetectionError> {
    check_fingerprint(model, engine)?;
    exec.map(records, |r| engine.classify_record(r, model))
        .into_iter()
        .collect()
}

/// Streaming form of [`detect_records`]; pulls records in batches and
/// stops after the first error.
pub struct DetectStream<'a, I> {
    records: I,
    model: &'a EncoderModel,
    engine: &'a MatchEngine,
    exec: &'a Executor,
    pending: std::vec::IntoIter<Result<Verdict, DetectionError>>,
    failed: bool,
}

pub fn detect_stream<'a, I>(
    records: I,
    model: &'a EncoderModel,
    engine: &'a MatchEngine,
    exec: &'a Executor,
) -> Result<DetectStream<'a, I::IntoIter>, DetectionError>
where
    I: IntoIterator<Item = Result<ConnectionRecord, DatasetError>>,
{
    check_fingerprint(model, engine)?;
    Ok(DetectStream {
        records: records.into_iter(),
        model,
        engine,
        exec,
        pending: Vec::new().into_iter(),
        failed: false,
    })
}

impl<I> Iterator for DetectStream<'_, I>
where
    I: Iterator<Item = Result<ConnectionRecord, DatasetError>>,
{
    type Item = Result<Verdict, DetectionError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if let Some(v) = self.pending.next() {
            self.failed = v.is_err();
            return Some(v);
        }
        let mut batch = Vec::with_capacity(STREAM_BATCH);
        let mut read_error = None;
        for rec in self.records.by_ref() {
            match rec {
                Ok(r) => batch.push(r),
                Err(e) => {
                    read_error = Some(DetectionError::from(e));
                    break;
                }
            }
            if batch.len() == STREAM_BATCH {
                break;
            }
        }
        let mut results = self
            .exec
            .map(&batch, |r| self.engine.classify_record(r, self.model));
        if let Some(e) = read_error {
            results.push(Err(e));
        }
        self.pending = results.into_iter();
        let v = self.pending.next()?;
        self.failed = v.is_err();
        Some(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signatures::{build_database, ConflictPolicy};

    const FP: &str = "00000000000000aa";

    fn seq(s: &str) -> NucleotideSequence {
        s.parse().unwrap()
    }

    fn db(entries: &[(&str, LabelClass)]) -> SignatureDatabase {
        build_database(
            entries.iter().map(|(s, c)| (seq(s), *c)),
            FP,
            ConflictPolicy::KeepConflicts,
        )
        .unwrap()
    }

    fn engine(entries: &[(&str, LabelClass)], config: DetectionConfig) -> MatchEngine {
        MatchEngine::build(&db(entries), config).unwrap()
    }

    #[test]
    fn empty_database_classifies_normal() {
        for mode in [DetectionMode::Exact, DetectionMode::Substring, DetectionMode::Weighted] {
            let e = engine(&[], DetectionConfig::with_mode(mode).tau(1.0));
            assert_eq!(e.warnings(), [EngineWarning::EmptyDatabase]);
            assert_eq!(e.classify(&seq("ACGT")).unwrap().outcome, Outcome::Normal);
        }
    }

    #[test]
    fn exact_examples() {
        let e = engine(&[("ACGT", LabelClass::DoS)], DetectionConfig::default());
        assert_eq!(e.exact_index_len(), 1);
        let v = e.classify(&seq("ACGT")).unwrap();
        assert_eq!(v.outcome, Outcome::Attack(LabelClass::DoS));
        assert_eq!(v.matched_signature_id, Some(0));
        assert_eq!(v.score, 0.0);
        let v = e.classify(&seq("ACGA")).unwrap();
        assert_eq!(v.outcome, Outcome::Normal);
        assert_eq!(v.matched_signature_id, None);
        assert!(matches!(
            e.classify(&seq("ACG")),
            Err(DetectionError::LengthMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn weighted_threshold_examples() {
        let strict = engine(
            &[("ACGT", LabelClass::DoS)],
            DetectionConfig::with_mode(DetectionMode::Weighted).tau(0.005),
        );
        assert_eq!(strict.classify(&seq("ACGA")).unwrap().outcome, Outcome::Normal);

        let loose = engine(
            &[("ACGT", LabelClass::DoS)],
            DetectionConfig::with_mode(DetectionMode::Weighted).tau(0.01),
        );
        let v = loose.classify(&seq("ACGA")).unwrap();
        assert_eq!(v.outcome, Outcome::Attack(LabelClass::DoS));
        assert!((v.score - 0.00889).abs() < 1e-12);
    }

    #[test]
    fn substring_examples() {
        let e = engine(
            &[("ACGT", LabelClass::DoS)],
            DetectionConfig::with_mode(DetectionMode::Substring),
        );
        assert_eq!(
            e.classify(&seq("AACGTT")).unwrap().outcome,
            Outcome::Attack(LabelClass::DoS)
        );
        assert_eq!(e.classify(&seq("AACGAT")).unwrap().outcome, Outcome::Normal);

        let mixed = SignatureDatabase::from_text(&format!(
            "#IDSDB v1\nalphabet=ACGT\nencoder={FP}\npolicy=drop_conflicts\nconflicts=0\nprobe\t0\t1\tCG\nprobe\t1\t1\tTTTT\n"
        ))
        .unwrap();
        let e = MatchEngine::build(&mixed, DetectionConfig::with_mode(DetectionMode::Substring)).unwrap();
        assert_eq!(
            e.classify(&seq("ACGT")).unwrap().outcome,
            Outcome::Attack(LabelClass::Probe)
        );
        assert!(matches!(
            MatchEngine::build(&mixed, DetectionConfig::default()),
            Err(DetectionError::MixedLengths(DetectionMode::Exact))
        ));
    }

    #[test]
    fn multi_class_hits_follow_priority() {
        let entries = [("ACGT", LabelClass::U2R), ("ACGT", LabelClass::Probe)];
        let v = engine(&entries, DetectionConfig::default())
            .classify(&seq("ACGT"))
            .unwrap();
        assert_eq!(v.outcome, Outcome::Attack(LabelClass::Probe));
        assert_eq!(v.matched_signature_id, Some(1));

        let config = DetectionConfig {
            class_priority: [LabelClass::U2R, LabelClass::R2L, LabelClass::Probe, LabelClass::DoS],
            ..Default::default()
        };
        let v = engine(&entries, config).classify(&seq("ACGT")).unwrap();
        assert_eq!(v.outcome, Outcome::Attack(LabelClass::U2R));

        // substring: two different patterns of two classes inside one text
        let e = engine(
            &[("TT", LabelClass::R2L), ("AC", LabelClass::DoS)],
            DetectionConfig::with_mode(DetectionMode::Substring),
        );
        assert_eq!(
            e.classify(&seq("GACTT")).unwrap().outcome,
            Outcome::Attack(LabelClass::DoS)
        );
    }

    #[test]
    fn weighted_ties_break_by_priority_then_id() {
        // both signatures sit at distance |w_A - w_T| from the probe
        let e = engine(
            &[("ACGA", LabelClass::R2L), ("ACGT", LabelClass::R2L), ("TCGT", LabelClass::Probe)],
            DetectionConfig::with_mode(DetectionMode::Weighted).tau(0.02),
        );
        let v = e.classify(&seq("ACGG")).unwrap();
        // ACGG vs ACGA: |wG-wA| = 0.06152; vs ACGT: |wG-wT| = 0.07041 -> neither within tau
        assert_eq!(v.outcome, Outcome::Normal);
        let v = e.classify(&seq("TCGA")).unwrap();
        // TCGA: vs ACGA 0.00889, vs TCGT 0.00889, vs ACGT 0.01778 -> probe wins the tie
        assert_eq!(v.outcome, Outcome::Attack(LabelClass::Probe));
        assert_eq!(v.matched_signature_id, Some(2));
        let v = e.classify(&seq("ACGA")).unwrap();
        assert_eq!((v.outcome, v.matched_signature_id, v.score), (Outcome::Attack(LabelClass::R2L), Some(0), 0.0));
    }

    #[test]
    fn invalid_configs() {
        let bad_tau = DetectionConfig::default().tau(-1.0);
        assert!(matches!(bad_tau.validate(), Err(DetectionError::InvalidConfig(_))));
        let bad_prio = DetectionConfig {
            class_priority: [LabelClass::DoS, LabelClass::DoS, LabelClass::R2L, LabelClass::U2R],
            ..Default::default()
        };
        assert!(bad_prio.validate().is_err());
    }
}
