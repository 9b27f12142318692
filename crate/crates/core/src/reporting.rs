//! Output engine: confusion counts, FP/FN series, alert logs.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::dataset::{ConnectionRecord, LabelClass};
use crate::detection::{detect_records, DetectionError, MatchEngine, Outcome, Verdict};
use crate::encoding::EncoderModel;
use crate::parallel::Executor;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{verdicts} verdicts but {truths} ground-truth labels")]
    LengthMismatch { verdicts: usize, truths: usize },
    #[error("series size {n} exceeds dataset length {len}")]
    OutOfRange { n: usize, len: usize },
    #[error("series sizes must be ascending")]
    UnsortedSizes,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Detection(#[from] DetectionError),
}

/// Ground-truth tally for one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassTally {
    /// Verdict named exactly this class.
    pub detected_as_class: u64,
    pub missed: u64,
}

/// Binary attack-vs-normal counts plus exact-class agreement per class.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    /// Indexed by class in `Normal, DoS, Probe, R2L, U2R` order.
    pub per_class: [ClassTally; 5],
}

fn class_slot(c: LabelClass) -> usize {
    match c {
        LabelClass::Normal => 0,
        other => 1 + other.attack_index().expect("attack class"),
    }
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn class(&self, c: LabelClass) -> ClassTally {
        self.per_class[class_slot(c)]
    }

    fn add(&mut self, outcome: Outcome, truth: LabelClass) {
        match (truth.is_attack(), outcome.is_attack()) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
        let predicted = match outcome {
            Outcome::Normal => LabelClass::Normal,
            Outcome::Attack(c) => c,
        };
        let tally = &mut self.per_class[class_slot(truth)];
        if predicted == truth {
            tally.detected_as_class += 1;
        } else {
            tally.missed += 1;
        }
    }
}

impl std::fmt::Display for ConfusionCounts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "tp={} fp={} tn={} fn={}",
            self.tp, self.fp, self.tn, self.fn_
        )?;
        for c in [
            LabelClass::Normal,
            LabelClass::DoS,
            LabelClass::Probe,
            LabelClass::R2L,
            LabelClass::U2R,
        ] {
            let t = self.class(c);
            writeln!(f, "{c}: detected={} missed={}", t.detected_as_class, t.missed)?;
        }
        Ok(())
    }
}

pub fn score_run(verdicts: &[Verdict], truths: &[LabelClass]) -> Result<ConfusionCounts, ReportError> {
    if verdicts.len() != truths.len() {
        return Err(ReportError::LengthMismatch {
            verdicts: verdicts.len(),
            truths: truths.len(),
        });
    }
    let mut counts = ConfusionCounts::default();
    for (v, &t) in verdicts.iter().zip(truths) {
        counts.add(v.outcome, t);
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeriesPoint {
    pub samples: usize,
    pub fp: u64,
    pub fn_: u64,
}

/// Cumulative FP/FN at each prefix size, from verdicts already computed.
pub fn series_from_verdicts(
    verdicts: &[Verdict],
    truths: &[LabelClass],
    sizes: &[usize],
) -> Result<Vec<SeriesPoint>, ReportError> {
    if verdicts.len() != truths.len() {
        return Err(ReportError::LengthMismatch {
            verdicts: verdicts.len(),
            truths: truths.len(),
        });
    }
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(ReportError::UnsortedSizes);
    }
    if let Some(&n) = sizes.iter().find(|&&n| n > verdicts.len()) {
        return Err(ReportError::OutOfRange {
            n,
            len: verdicts.len(),
        });
    }
    let mut out = Vec::with_capacity(sizes.len());
    let (mut fp, mut fn_) = (0u64, 0u64);
    let mut consumed = 0;
    for &n in sizes {
        for (v, t) in verdicts[consumed..n].iter().zip(&truths[consumed..n]) {
            match (t.is_attack(), v.outcome.is_attack()) {
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        consumed = n;
        out.push(SeriesPoint {
            samples: n,
            fp,
            fn_,
        });
    }
    Ok(out)
}

/// Classifies the largest requested prefix once and reports cumulative
/// FP/FN at every size.
pub fn fp_series(
    records: &[ConnectionRecord],
    truths: &[LabelClass],
    model: &EncoderModel,
    engine: &MatchEngine,
    sizes: &[usize],
    exec: &Executor,
) -> Result<Vec<SeriesPoint>, ReportError> {
    if records.len() != truths.len() {
        return Err(ReportError::LengthMismatch {
            verdicts: records.len(),
            truths: truths.len(),
        });
    }
    let largest = sizes.iter().copied().max().unwrap_or(0);
    if largest > records.len() {
        return Err(ReportError::OutOfRange {
            n: largest,
            len: records.len(),
        });
    }
    let verdicts = detect_records(&records[..largest], model, engine, exec)?;
    series_from_verdicts(&verdicts, &truths[..largest], sizes)
}

/// Up to 12 significant digits, trailing zeros trimmed; `0` for zero.
pub fn format_score(score: f64) -> String {
    if score == 0.0 {
        return "0".to_string();
    }
    let magnitude = score.abs().log10().floor() as i32;
    if !(-5..12).contains(&magnitude) {
        let s = format!("{:.11e}", score);
        let (mantissa, exp) = s.split_once('e').expect("exponent form");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{mantissa}e{exp}");
    }
    let decimals = (11 - magnitude).max(0) as usize;
    let s = format!("{:.*}", decimals, score);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// One alert line per verdict:
/// `source_index<TAB>outcome<TAB>class-or-dash<TAB>signature-id-or-dash<TAB>score`.
pub fn alert_line(v: &Verdict) -> String {
    match v.outcome {
        Outcome::Normal => format!("{}\tnormal\t-\t-\t{}", v.source_index, format_score(v.score)),
        Outcome::Attack(c) => format!(
            "{}\tattack\t{}\t{}\t{}",
            v.source_index,
            c,
            v.matched_signature_id
                .map_or_else(|| "-".to_string(), |id| id.to_string()),
            format_score(v.score)
        ),
    }
}

/// Streams alert lines to a writer.
pub struct AlertWriter<W: Write> {
    out: W,
    lines: usize,
}

impl<W: Write> AlertWriter<W> {
    pub fn new(out: W) -> Self {
        AlertWriter { out, lines: 0 }
    }

    pub fn write(&mut self, v: &Verdict) -> io::Result<()> {
        self.lines += 1;
        writeln!(self.out, "{}", alert_line(v))
    }

    pub fn lines_written(&self) -> usize {
        self.lines
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_alert_log(verdicts: &[Verdict], path: impl AsRef<Path>) -> Result<(), ReportError> {
    let mut w = AlertWriter::new(BufWriter::new(File::create(path)?));
    for v in verdicts {
        w.write(v)?;
    }
    w.finish()?;
    Ok(())
}

pub const SERIES_HEADER: &str = "samples,false_positives,false_negatives";

pub fn series_csv(series: &[SeriesPoint]) -> String {
    let mut s = String::from(SERIES_HEADER);
    s.push('\n');
    for p in series {
        s.push_str(&format!("{},{},{}\n", p.samples, p.fp, p.fn_));
    }
    s
}

pub fn write_series_csv(series: &[SeriesPoint], path: impl AsRef<Path>) -> Result<(), ReportError> {
    if series.windows(2).any(|w| w[0].samples >= w[1].samples) {
        return Err(ReportError::UnsortedSizes);
    }
    std::fs::write(path, series_csv(series))?;
    Ok(())
}
