use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureMatrix};
use crate::error::{Error, Result};

/// Parameters of an isotropic Gaussian-blob dataset.
///
/// `separation` is the distance between class means measured in units of
/// `sigma`. A `sigma` of zero collapses every class onto its mean; class
/// means are then spaced in units of 1 so they stay distinct and nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub k: usize,
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// k=10, dim=32, 200 per class, separation 8, unit sigma.
    pub fn standard_benchmark(seed: u64) -> Self {
        Self {
            k: 10,
            dim: 32,
            per_class: 200,
            separation: 8.0,
            sigma: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::validation(format!("k must be >= 2, got {}", self.k)));
        }
        if self.dim < 2 {
            return Err(Error::validation(format!("dim must be >= 2, got {}", self.dim)));
        }
        if self.per_class < 1 {
            return Err(Error::validation("per_class must be >= 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::validation(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::validation(format!(
                "separation must be >= 0, got {}",
                self.separation
            )));
        }
        Ok(())
    }

    /// Class means; pairwise distance is at least `separation * sigma`.
    pub fn class_means(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let unit = if self.sigma > 0.0 { self.sigma } else { 1.0 };
        let spacing = self.separation * unit;
        if self.k <= self.dim {
            // Axis-aligned: |r e_a - r e_b| = r sqrt(2) = spacing.
            let radius = spacing * std::f64::consts::FRAC_1_SQRT_2;
            return Ok((0..self.k)
                .map(|c| {
                    let mut m = vec![0.0; self.dim];
                    m[c] = radius;
                    m
                })
                .collect());
        }
        // More classes than axes: random unit directions, rescaled so the
        // closest pair sits exactly `spacing` apart.
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x6d65_616e_735f_6b64);
        let dirs: Vec<Vec<f64>> = (0..self.k)
            .map(|_| loop {
                let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-8 {
                    break v.into_iter().map(|x| x / norm).collect();
                }
            })
            .collect();
        let mut min_dist = f64::INFINITY;
        for a in 0..self.k {
            for b in a + 1..self.k {
                let d = dirs[a]
                    .iter()
                    .zip(&dirs[b])
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                min_dist = min_dist.min(d);
            }
        }
        let scale = if min_dist > 0.0 { spacing / min_dist } else { spacing };
        Ok(dirs
            .into_iter()
            .map(|d| d.into_iter().map(|x| x * scale).collect())
            .collect())
    }
}

/// Draws `per_class` samples around each class mean. Rows are ordered class by
/// class; `true_labels` equals `noisy_labels`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let means = spec.class_means()?;
    let n = spec.k * spec.per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.per_class {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(m + spec.sigma * z);
            }
            labels.push(c);
        }
    }
    let width = n.to_string().len().max(5);
    let ids = (0..n).map(|i| format!("s{i:0width$}")).collect();
    let features = FeatureMatrix::new(n, spec.dim, data)?;
    Dataset::new(features, labels.clone(), Some(labels), spec.k, ids)
}
