//! Labeled feature datasets, synthetic generation and label corruption.
//!
//! A [`Dataset`] is an `N x D` feature matrix together with the observed
//! (possibly corrupted) labels, optional ground-truth labels and one string
//! identifier per row. Everything downstream consumes this type.

mod csv_io;
mod predictions;
mod synthetic;
mod transition;

use std::collections::HashSet;

use crate::error::{Error, Result};

pub use csv_io::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use predictions::{load_predictions, read_predictions, save_predictions, write_predictions};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use transition::{corrupt_labels, make_transition, NoiseType, TransitionMatrix};

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(dim) != Some(data.len()) {
            return Err(Error::validation(format!(
                "feature buffer has {} values, expected {rows} x {dim}",
                data.len()
            )));
        }
        Ok(Self { rows, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::validation(format!(
                    "row {i} has {} columns, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            dim,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact(0) panics, and a zero-width matrix still has rows
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copy of the rows listed in `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: indices.len(),
            dim: self.dim,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: FeatureMatrix,
    noisy_labels: Vec<usize>,
    true_labels: Option<Vec<usize>>,
    k: usize,
    ids: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: FeatureMatrix,
        noisy_labels: Vec<usize>,
        true_labels: Option<Vec<usize>>,
        k: usize,
        ids: Vec<String>,
    ) -> Result<Self> {
        let n = features.rows();
        if noisy_labels.len() != n {
            return Err(Error::validation(format!(
                "{} labels for {n} feature rows",
                noisy_labels.len()
            )));
        }
        if ids.len() != n {
            return Err(Error::validation(format!("{} ids for {n} feature rows", ids.len())));
        }
        if k < 1 {
            return Err(Error::validation("class count k must be positive"));
        }
        check_labels(&noisy_labels, k, "label")?;
        if let Some(truth) = &true_labels {
            if truth.len() != n {
                return Err(Error::validation(format!(
                    "{} true labels for {n} noisy labels",
                    truth.len()
                )));
            }
            check_labels(truth, k, "true_label")?;
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            let dim = features.dim().max(1);
            return Err(Error::validation(format!(
                "non-finite feature at row {}, column f{}",
                pos / dim,
                pos % dim
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::validation(format!("duplicate sample id `{id}`")));
            }
        }
        Ok(Self {
            features,
            noisy_labels,
            true_labels,
            k,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.noisy_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy_labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    pub fn true_labels(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Ground truth if present, otherwise the observed labels.
    pub fn reference_labels(&self) -> &[usize] {
        self.true_labels.as_deref().unwrap_or(&self.noisy_labels)
    }

    /// Whether the sample's observed label matches ground truth. `None` when
    /// the dataset carries no ground truth.
    pub fn is_truly_clean(&self, index: usize) -> Option<bool> {
        self.true_labels
            .as_ref()
            .map(|t| t[index] == self.noisy_labels[index])
    }

    /// Same dataset with the observed labels replaced.
    pub fn with_noisy_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Dataset::new(
            self.features.clone(),
            labels,
            self.true_labels.clone(),
            self.k,
            self.ids.clone(),
        )
    }

    pub fn without_true_labels(&self) -> Self {
        Self {
            true_labels: None,
            ..self.clone()
        }
    }

    /// Fraction of samples whose observed label differs from ground truth.
    pub fn noise_fraction(&self) -> Option<f64> {
        let truth = self.true_labels.as_ref()?;
        if truth.is_empty() {
            return Some(0.0);
        }
        let flipped = truth
            .iter()
            .zip(&self.noisy_labels)
            .filter(|(t, y)| t != y)
            .count();
        Some(flipped as f64 / truth.len() as f64)
    }
}

fn check_labels(labels: &[usize], k: usize, what: &str) -> Result<()> {
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(Error::validation(format!(
            "{what} {label} at row {row} is outside [0, {k})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let f = FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        Dataset::new(
            f,
            vec![0, 1, 0],
            Some(vec![0, 1, 1]),
            2,
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap()
    }

    #[test]
    fn noise_fraction_counts_mismatches() {
        assert!((tiny().noise_fraction().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_label() {
        let f = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let err = Dataset::new(f, vec![0, 2], None, 2, vec!["a".into(), "b".into()]);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_duplicate_ids_and_nan() {
        let f = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(Dataset::new(f, vec![0, 1], None, 2, vec!["a".into(), "a".into()]).is_err());
        let f = FeatureMatrix::from_rows(&[vec![1.0], vec![f64::NAN]]).unwrap();
        assert!(Dataset::new(f, vec![0, 1], None, 2, vec!["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn rejects_true_label_length_mismatch() {
        let f = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let r = Dataset::new(f, vec![0, 1], Some(vec![0]), 2, vec!["a".into(), "b".into()]);
        assert!(r.is_err());
    }

    #[test]
    fn select_rows_preserves_order() {
        let d = tiny();
        let sub = d.features().select_rows(&[2, 0]);
        assert_eq!(sub.row(0), &[1.0, 1.0]);
        assert_eq!(sub.row(1), &[1.0, 0.0]);
    }
}
