use std::f64::consts::LN_2;

use crate::error::{Error, Result};

const NORMALIZATION_TOLERANCE: f64 = 1e-9;

pub(crate) fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::validation(format!("{what} has invalid entry {v}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::validation(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

/// `sum p_i ln(p_i / m_i)` with `0 ln 0 = 0`.
fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).ln())
        .sum()
}

/// Jensen-Shannon divergence in nats; lies in `[0, ln 2]`.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::validation(format!(
            "jsd of distributions with lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    check_distribution(p, "first distribution")?;
    check_distribution(q, "second distribution")?;
    Ok(jsd_unchecked(p, q))
}

pub(crate) fn jsd_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl_to_mixture(p, &m) + 0.5 * kl_to_mixture(q, &m)).clamp(0.0, LN_2)
}

/// JSD between a distribution and the one-hot vector of `label`.
pub fn jsd_to_label(p: &[f64], label: usize) -> Result<f64> {
    if label >= p.len() {
        return Err(Error::validation(format!("label {label} outside [0, {})", p.len())));
    }
    let mut onehot = vec![0.0; p.len()];
    onehot[label] = 1.0;
    jsd(p, &onehot)
}
