//! Conceptual sensitivity and the TCAV direction / magnitude scores.
//!
//! The sensitivity of record `x` to a CAV `v` is the directional derivative
//! of the positive-class logit along `v`, which for a differentiable head is
//! `grad h(e_x) · v`. Gradients come precomputed in the records.
//!
//! * `dir` is the fraction of inputs with sensitivity strictly above zero.
//! * `mag` is the sum of the strictly positive sensitivities divided by the
//!   number of *all* inputs.
//!
//! Sums run sequentially in record order so results do not depend on
//! scheduling.

use serde::{Deserialize, Serialize};

use crate::cav::{Cav, CavRole};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::store::EmbeddingRecord;

pub fn sensitivity(record: &EmbeddingRecord, cav: &Cav) -> Result<f64> {
    let grad = record
        .gradient
        .as_deref()
        .ok_or_else(|| Error::MissingGradient(record.id.clone()))?;
    if grad.len() != cav.direction.len() {
        return Err(Error::DimensionMismatch {
            id: record.id.clone(),
            expected: cav.direction.len(),
            found: grad.len(),
        });
    }
    Ok(dot(grad, &cav.direction))
}

/// Sensitivities of every input to one CAV.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySeries {
    pub cav_index: usize,
    pub values: Vec<f64>,
}

impl SensitivitySeries {
    pub fn compute(records: &[&EmbeddingRecord], cav: &Cav) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("input set X"));
        }
        let values = records
            .iter()
            .map(|r| sensitivity(r, cav))
            .collect::<Result<Vec<_>>>()?;
        Ok(SensitivitySeries {
            cav_index: cav.rep_index,
            values,
        })
    }

    pub fn dir(&self) -> f64 {
        dir_of(&self.values)
    }

    pub fn mag(&self) -> f64 {
        mag_of(&self.values)
    }
}

fn dir_of(values: &[f64]) -> f64 {
    values.iter().filter(|&&s| s > 0.0).count() as f64 / values.len() as f64
}

fn mag_of(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    for &s in values {
        if s > 0.0 {
            sum += s;
        }
    }
    sum / values.len() as f64
}

pub fn tcav_dir(records: &[&EmbeddingRecord], cav: &Cav) -> Result<f64> {
    Ok(SensitivitySeries::compute(records, cav)?.dir())
}

pub fn tcav_mag(records: &[&EmbeddingRecord], cav: &Cav) -> Result<f64> {
    Ok(SensitivitySeries::compute(records, cav)?.mag())
}

/// One CAV's pair of scores, as emitted in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub concept: String,
    pub role: CavRole,
    pub cav_index: usize,
    pub dir: f64,
    pub mag: f64,
}

/// Per-CAV score distributions for one set of CAVs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TcavScores {
    pub dir_scores: Vec<f64>,
    pub mag_scores: Vec<f64>,
    pub cav_indices: Vec<usize>,
}

impl TcavScores {
    pub fn len(&self) -> usize {
        self.dir_scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dir_scores.is_empty()
    }

    pub fn records(&self, concept: &str, role: CavRole) -> Vec<ScoreRecord> {
        (0..self.len())
            .map(|i| ScoreRecord {
                concept: concept.to_string(),
                role,
                cav_index: self.cav_indices[i],
                dir: self.dir_scores[i],
                mag: self.mag_scores[i],
            })
            .collect()
    }
}

/// Scores every CAV against the input set `records`, preserving CAV order.
pub fn score_concept(cavs: &[Cav], records: &[&EmbeddingRecord]) -> Result<TcavScores> {
    if records.is_empty() {
        return Err(Error::Empty("input set X"));
    }
    let series = score_all(cavs, records)?;
    let mut out = TcavScores::default();
    for s in series {
        out.dir_scores.push(s.dir());
        out.mag_scores.push(s.mag());
        out.cav_indices.push(s.cav_index);
    }
    Ok(out)
}

#[cfg(feature = "parallel")]
fn score_all(cavs: &[Cav], records: &[&EmbeddingRecord]) -> Result<Vec<SensitivitySeries>> {
    use rayon::prelude::*;
    cavs.par_iter()
        .map(|c| SensitivitySeries::compute(records, c))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn score_all(cavs: &[Cav], records: &[&EmbeddingRecord]) -> Result<Vec<SensitivitySeries>> {
    cavs.iter()
        .map(|c| SensitivitySeries::compute(records, c))
        .collect()
}
