use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseType {
    /// Symmetric noise: a flipped label is drawn uniformly over all classes.
    Uniform,
    /// Asymmetric noise: class `i` flips to `(i + 1) mod k`.
    Pairwise,
    /// Class 0 stays clean; class `i` flips to `(i + 2) mod k`.
    Structured,
    /// Arbitrary row-stochastic matrix supplied by the caller.
    Custom,
}

impl fmt::Display for NoiseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NoiseType::Uniform => "uniform",
            NoiseType::Pairwise => "pairwise",
            NoiseType::Structured => "structured",
            NoiseType::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl FromStr for NoiseType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" | "symmetric" | "sym" => Ok(NoiseType::Uniform),
            "pairwise" | "asymmetric" | "asym" => Ok(NoiseType::Pairwise),
            "structured" => Ok(NoiseType::Structured),
            "custom" => Ok(NoiseType::Custom),
            other => Err(Error::validation(format!("unknown noise type `{other}`"))),
        }
    }
}

/// Row-stochastic label corruption model: `rows[i][j]` is the probability
/// that a sample of class `i` is observed with label `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    k: usize,
    noise_type: NoiseType,
    rate: f64,
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    /// Validates an arbitrary matrix. Rows must sum to one within 1e-12.
    pub fn from_rows(rows: Vec<Vec<f64>>, noise_type: NoiseType, rate: f64) -> Result<Self> {
        let m = Self {
            k: rows.len(),
            noise_type,
            rate,
            rows,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn identity(k: usize) -> Self {
        let rows = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            k,
            noise_type: NoiseType::Uniform,
            rate: 0.0,
            rows,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::validation(format!("transition matrix needs k >= 2, got {}", self.k)));
        }
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::validation(format!("noise rate {} outside [0, 1]", self.rate)));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.k {
                return Err(Error::validation(format!(
                    "transition row {i} has {} entries, expected {}",
                    row.len(),
                    self.k
                )));
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::validation(format!("transition row {i} has entry {v} outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::validation(format!("transition row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn noise_type(&self) -> NoiseType {
        self.noise_type
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    /// Mass row `i` places on labels other than `label`.
    pub fn off_label_mass(&self, i: usize, label: usize) -> f64 {
        self.rows[i]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != label)
            .map(|(_, v)| v)
            .sum()
    }

    /// Expected fraction of corrupted labels when true classes are balanced.
    pub fn expected_flip_rate(&self) -> f64 {
        (0..self.k).map(|i| 1.0 - self.rows[i][i]).sum::<f64>() / self.k as f64
    }

    /// `T_ii > max(max_{j != i} T_ij, max_{j != i} T_ji)` for every class.
    pub fn is_diagonally_dominant(&self) -> bool {
        (0..self.k).all(|i| {
            let diag = self.rows[i][i];
            (0..self.k)
                .filter(|&j| j != i)
                .all(|j| diag > self.rows[i][j] && diag > self.rows[j][i])
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TransitionMatrix = serde_json::from_str(s)?;
        if m.rows.len() != m.k {
            return Err(Error::validation(format!(
                "matrix declares k={} but has {} rows",
                m.k,
                m.rows.len()
            )));
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json()?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Builds the uniform, pairwise or structured corruption matrix.
///
/// * uniform: diagonal `1 - (k-1)r/k`, every off-diagonal entry `r/k`
/// * pairwise: diagonal `1 - r`, entry `(i, (i+1) mod k)` equal to `r`
/// * structured: row 0 is `e_0`; row `i > 0` keeps `1 - r` and sends `r` to
///   `(i+2) mod k` (all mass stays on the diagonal if that target is `i`)
pub fn make_transition(noise_type: NoiseType, rate: f64, k: usize) -> Result<TransitionMatrix> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::validation(format!("noise rate {rate} outside [0, 1]")));
    }
    if k < 2 {
        return Err(Error::validation(format!("need k >= 2, got {k}")));
    }
    if matches!(noise_type, NoiseType::Pairwise | NoiseType::Structured) && rate > 0.5 {
        log::warn!("{noise_type} noise at rate {rate} > 0.5 breaks diagonal dominance");
    }
    let kf = k as f64;
    let mut rows = vec![vec![0.0; k]; k];
    match noise_type {
        NoiseType::Uniform => {
            for (i, row) in rows.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if i == j { 1.0 - (kf - 1.0) * rate / kf } else { rate / kf };
                }
            }
        }
        NoiseType::Pairwise => {
            for (i, row) in rows.iter_mut().enumerate() {
                row[i] += 1.0 - rate;
                row[(i + 1) % k] += rate;
            }
        }
        NoiseType::Structured => {
            rows[0][0] = 1.0;
            for (i, row) in rows.iter_mut().enumerate().skip(1) {
                row[i] += 1.0 - rate;
                row[(i + 2) % k] += rate;
            }
        }
        NoiseType::Custom => {
            return Err(Error::validation(
                "custom matrices are built with TransitionMatrix::from_rows",
            ))
        }
    }
    TransitionMatrix::from_rows(rows, noise_type, rate)
}

/// Resamples every observed label from `T[true_label]`.
///
/// Datasets without ground truth treat their current labels as the truth and
/// keep them as `true_labels` in the output.
pub fn corrupt_labels(dataset: &Dataset, t: &TransitionMatrix, seed: u64) -> Result<Dataset> {
    if dataset.k() != t.k() {
        return Err(Error::validation(format!(
            "dataset has k={} but transition matrix has k={}",
            dataset.k(),
            t.k()
        )));
    }
    let truth: Vec<usize> = dataset.reference_labels().to_vec();
    let samplers = t
        .rows()
        .iter()
        .map(|row| WeightedIndex::new(row).map_err(|e| Error::validation(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = truth.iter().map(|&y| samplers[y].sample(&mut rng)).collect();
    Dataset::new(
        dataset.features().clone(),
        noisy,
        Some(truth),
        dataset.k(),
        dataset.ids().to_vec(),
    )
}
