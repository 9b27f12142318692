use std::fs;
use std::io;
use std::path::Path;

use super::DetectionError;
use crate::encoding::{Nucleotide, NucleotideSequence};

/// Per-nucleotide weights. Defaults are the relative frequencies of the
/// English letters a, c, g and t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightTable {
    weights: [f64; 4],
}

impl Default for WeightTable {
    fn default() -> Self {
        WeightTable {
            weights: [0.08167, 0.02782, 0.02015, 0.09056],
        }
    }
}

impl WeightTable {
    /// Weights in A, C, G, T order; they must be positive, finite and
    /// pairwise distinct.
    pub fn new(weights: [f64; 4]) -> Result<Self, DetectionError> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(DetectionError::InvalidWeights(format!(
                "weights must be positive and finite (got {w})"
            )));
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if weights[i] == weights[j] {
                    return Err(DetectionError::InvalidWeights(format!(
                        "weights for {} and {} are equal",
                        Nucleotide::ALL[i].as_byte() as char,
                        Nucleotide::ALL[j].as_byte() as char
                    )));
                }
            }
        }
        Ok(WeightTable { weights })
    }

    /// Parses `A=<real>` .. `T=<real>` lines (`#` comments allowed).
    pub fn parse(text: &str) -> Result<Self, DetectionError> {
        let mut weights = [None; 4];
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || DetectionError::InvalidWeights(format!("bad line {line:?}"));
            let (key, value) = line.split_once('=').ok_or_else(bad)?;
            let n = match key.trim() {
                "A" => 0,
                "C" => 1,
                "G" => 2,
                "T" => 3,
                _ => return Err(bad()),
            };
            let v: f64 = value.trim().parse().map_err(|_| bad())?;
            if weights[n].replace(v).is_some() {
                return Err(bad());
            }
        }
        let mut out = [0.0; 4];
        for (i, w) in weights.iter().enumerate() {
            out[i] = w.ok_or_else(|| {
                DetectionError::InvalidWeights(format!(
                    "missing weight for {}",
                    Nucleotide::ALL[i].as_byte() as char
                ))
            })?;
        }
        Self::new(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DetectionError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => DetectionError::MissingFile(path.display().to_string()),
            _ => DetectionError::Io(e),
        })?;
        Self::parse(&text)
    }

    pub fn weight(&self, n: Nucleotide) -> f64 {
        self.weights[n as usize]
    }

    pub fn weights(&self) -> [f64; 4] {
        self.weights
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, DetectionError> {
        Self::new(self.weights.map(|w| w * factor))
    }

    pub(crate) fn diff_table(&self) -> [[f64; 4]; 4] {
        let mut t = [[0.0; 4]; 4];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (self.weights[i] - self.weights[j]).abs();
            }
        }
        t
    }

    /// Smallest nonzero per-position distance.
    pub fn min_gap(&self) -> f64 {
        self.diff_table()
            .iter()
            .flatten()
            .copied()
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn weight_profile(seq: &NucleotideSequence, w: &WeightTable) -> Vec<f64> {
    seq.iter().map(|n| w.weight(n)).collect()
}

/// L1 distance between the weight profiles of two equal-length sequences.
pub fn weight_distance(
    a: &NucleotideSequence,
    b: &NucleotideSequence,
    w: &WeightTable,
) -> Result<f64, DetectionError> {
    if a.len() != b.len() {
        return Err(DetectionError::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (w.weight(x) - w.weight(y)).abs())
        .sum())
}
