//! Numerical checks of the two ordering results behind the selectors.
//!
//! *Divergence ordering.* When the classifier's softmax equals a row of the
//! transition matrix, the JSD between the prediction and the observed label
//! depends only on `T[h][y]`, and a correctly labeled sample has smaller JSD
//! than a mislabeled one whenever the matrix is column-dominant. The
//! off-label mass gap is `1 - r` for uniform noise and `1 - r` or `1 - 2r`
//! for pairwise noise.
//!
//! *Row-sum ordering.* Within a label group, clean samples have a larger
//! mean affinity row sum than mislabeled ones unless the clean samples are
//! submerged (their total row-sum mass is below the noisy total). This is
//! checked by Monte Carlo on synthetic data.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::dataset::{corrupt_labels, generate_synthetic, NoiseType, SyntheticSpec, TransitionMatrix};
use crate::error::{Error, Result};
use crate::gmm::{mean, population_variance};
use crate::selection::class_row_sums;

const GAP_DEDUP_TOLERANCE: f64 = 1e-12;

/// Idealized classifier output for a sample predicted as `predicted_class`:
/// the corresponding transition row.
pub fn oracle_softmax(t: &TransitionMatrix, predicted_class: usize) -> Result<Vec<f64>> {
    if predicted_class >= t.k() {
        return Err(Error::validation(format!(
            "predicted class {predicted_class} outside [0, {})",
            t.k()
        )));
    }
    Ok(t.row(predicted_class).to_vec())
}

/// Closed-form JSD between `T[h_class]` and `onehot(label)`:
///
/// `½ (ln 2 · (1 + Σ_{i≠y} T_hi) + T_hy ln(2 T_hy / (1 + T_hy)) − ln(1 + T_hy))`
pub fn jsd_closed_form(t: &TransitionMatrix, h_class: usize, label: usize) -> Result<f64> {
    if h_class >= t.k() || label >= t.k() {
        return Err(Error::validation(format!(
            "indices ({h_class}, {label}) outside [0, {})",
            t.k()
        )));
    }
    let on = t.get(h_class, label);
    let off = t.off_label_mass(h_class, label);
    let middle = if on > 0.0 { on * (2.0 * on / (1.0 + on)).ln() } else { 0.0 };
    Ok(0.5 * (LN_2 * (1.0 + off) + middle - (1.0 + on).ln()))
}

/// Whether the divergence ordering is predicted to hold. `None` where no
/// claim is made (structured and custom matrices).
pub fn expected_ordering(noise_type: NoiseType, rate: f64) -> Option<bool> {
    match noise_type {
        NoiseType::Uniform => Some(rate < 1.0),
        NoiseType::Pairwise => Some(rate < 0.5),
        NoiseType::Structured | NoiseType::Custom => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyCase {
    pub label: usize,
    pub predicted: usize,
    pub jsd: f64,
    /// `Σ_{i≠y} T[predicted] − Σ_{i≠y} T[y]`.
    pub off_diagonal_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub noise_type: NoiseType,
    pub rate: f64,
    pub k: usize,
    /// Largest clean-sample JSD over all labels.
    pub jsd_clean: f64,
    /// Every (label, wrong prediction) pair.
    pub jsd_noisy: Vec<NoisyCase>,
    pub min_noisy: f64,
    /// Distinct off-label mass gaps, ascending.
    pub off_diagonal_gaps: Vec<f64>,
    /// For every label, clean JSD is strictly below every noisy case.
    pub ordering_holds: bool,
    pub diagonally_dominant: bool,
    pub expected_ordering: Option<bool>,
}

impl Theorem2Report {
    /// Observed ordering agrees with the prediction (vacuous when none).
    pub fn matches_expectation(&self) -> bool {
        self.expected_ordering.is_none_or(|e| e == self.ordering_holds)
    }
}

/// Evaluates the closed-form divergences for one transition matrix.
pub fn theorem2_report(t: &TransitionMatrix) -> Result<Theorem2Report> {
    let k = t.k();
    let mut jsd_clean = 0.0f64;
    let mut cases = Vec::with_capacity(k * (k - 1));
    let mut ordering_holds = true;
    for y in 0..k {
        let clean = jsd_closed_form(t, y, y)?;
        jsd_clean = jsd_clean.max(clean);
        let clean_off = t.off_label_mass(y, y);
        for h in (0..k).filter(|&h| h != y) {
            let j = jsd_closed_form(t, h, y)?;
            ordering_holds &= clean < j;
            cases.push(NoisyCase {
                label: y,
                predicted: h,
                jsd: j,
                off_diagonal_gap: t.off_label_mass(h, y) - clean_off,
            });
        }
    }
    let min_noisy = cases.iter().map(|c| c.jsd).fold(f64::INFINITY, f64::min);
    let mut gaps: Vec<f64> = cases.iter().map(|c| c.off_diagonal_gap).collect();
    gaps.sort_by(f64::total_cmp);
    gaps.dedup_by(|a, b| (*a - *b).abs() <= GAP_DEDUP_TOLERANCE);
    Ok(Theorem2Report {
        noise_type: t.noise_type(),
        rate: t.rate(),
        k,
        jsd_clean,
        jsd_noisy: cases,
        min_noisy,
        off_diagonal_gaps: gaps,
        ordering_holds,
        diagonally_dominant: t.is_diagonally_dominant(),
        expected_ordering: expected_ordering(t.noise_type(), t.rate()),
    })
}

pub fn verify_theorem2(noise_type: NoiseType, rates: &[f64], k: usize) -> Result<Vec<Theorem2Report>> {
    rates
        .iter()
        .map(|&r| theorem2_report(&crate::dataset::make_transition(noise_type, r, k)?))
        .collect()
}

/// `true` iff the clean row sums total less than the noisy ones.
pub fn submerged_check(clean_row_sums: &[f64], noisy_row_sums: &[f64]) -> Result<bool> {
    if clean_row_sums.is_empty() || noisy_row_sums.is_empty() {
        return Err(Error::validation("submerged check needs non-empty clean and noisy sets"));
    }
    Ok(clean_row_sums.iter().sum::<f64>() < noisy_row_sums.iter().sum::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Trial {
    pub trial: usize,
    pub mu_p: f64,
    /// `None` when the trial produced no mislabeled samples.
    pub mu_q: Option<f64>,
    pub sigma_p: f64,
    pub sigma_q: Option<f64>,
    pub submerged_classes: Vec<usize>,
    pub excluded_classes: Vec<usize>,
    pub ordering_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub trials: Vec<Theorem1Trial>,
    /// Pooled over all trials and classes.
    pub mu_p: f64,
    pub mu_q: Option<f64>,
    pub sigma_p: f64,
    pub sigma_q: Option<f64>,
    /// Some class in some trial had its clean samples submerged.
    pub submerged: bool,
    /// `mu_p > mu_q` in every trial that had mislabeled samples.
    pub ordering_holds: bool,
    /// No mislabeled samples anywhere; the ordering claim is vacuous.
    pub vacuous: bool,
    pub excluded_class_count: usize,
    /// Mean over (trial, class) of the summed squared deviations of noisy
    /// row sums, the empirical `B_n^2`.
    pub lyapunov_variance_sum: f64,
    /// Largest single noisy sample's share of its group's `B_n^2`.
    pub max_single_variance_share: f64,
    pub skewness_clean: f64,
    pub skewness_noisy: Option<f64>,
}

fn skewness(v: &[f64]) -> f64 {
    let m = mean(v);
    let var = population_variance(v);
    if var == 0.0 {
        return 0.0;
    }
    v.iter().map(|x| (x - m).powi(3)).sum::<f64>() / v.len() as f64 / var.powf(1.5)
}

/// Monte Carlo check of the row-sum ordering: generate, corrupt, and compare
/// the affinity row sums of truly clean and mislabeled members in each label
/// group. Trial `t` uses data seed `spec.seed + t`.
pub fn verify_theorem1(spec: &SyntheticSpec, noise: &TransitionMatrix, trials: usize, seed: u64) -> Result<Theorem1Report> {
    if trials < 1 {
        return Err(Error::validation("need at least one trial"));
    }
    spec.validate()?;
    if noise.k() != spec.k {
        return Err(Error::validation(format!(
            "transition matrix has k={} but spec has k={}",
            noise.k(),
            spec.k
        )));
    }
    let mut pooled_clean = Vec::new();
    let mut pooled_noisy = Vec::new();
    let mut reports = Vec::with_capacity(trials);
    let mut b_sums = Vec::new();
    let mut max_share = 0.0f64;
    let mut excluded_total = 0;

    for trial in 0..trials {
        let trial_spec = SyntheticSpec {
            seed: spec.seed.wrapping_add(trial as u64),
            ..spec.clone()
        };
        let base = generate_synthetic(&trial_spec)?;
        let data = corrupt_labels(&base, noise, seed.wrapping_add(trial as u64))?;
        let truth = data.true_labels().expect("corrupt_labels keeps ground truth");
        let mut clean_all = Vec::new();
        let mut noisy_all = Vec::new();
        let mut submerged_classes = Vec::new();
        let mut excluded = Vec::new();
        for g in class_row_sums(&data, data.features())? {
            let (clean, noisy): (Vec<_>, Vec<_>) = g
                .members
                .iter()
                .zip(&g.values)
                .partition(|(&i, _)| truth[i] == g.class_id);
            let clean: Vec<f64> = clean.into_iter().map(|(_, &v)| v).collect();
            let noisy: Vec<f64> = noisy.into_iter().map(|(_, &v)| v).collect();
            if clean.is_empty() {
                log::warn!("trial {trial}: class {} has no clean samples; excluded", g.class_id);
                excluded.push(g.class_id);
                continue;
            }
            if !noisy.is_empty() {
                if submerged_check(&clean, &noisy)? {
                    submerged_classes.push(g.class_id);
                }
                let mq = mean(&noisy);
                let b: f64 = noisy.iter().map(|a| (a - mq).powi(2)).sum();
                if b > 0.0 {
                    b_sums.push(b);
                    for a in &noisy {
                        max_share = max_share.max((a - mq).powi(2) / b);
                    }
                }
            }
            clean_all.extend(clean);
            noisy_all.extend(noisy);
        }
        excluded_total += excluded.len();
        if clean_all.is_empty() {
            return Err(Error::validation(format!("trial {trial}: no class has clean samples")));
        }
        let mu_p = mean(&clean_all);
        let (mu_q, sigma_q) = if noisy_all.is_empty() {
            (None, None)
        } else {
            (Some(mean(&noisy_all)), Some(population_variance(&noisy_all).sqrt()))
        };
        reports.push(Theorem1Trial {
            trial,
            mu_p,
            mu_q,
            sigma_p: population_variance(&clean_all).sqrt(),
            sigma_q,
            submerged_classes,
            excluded_classes: excluded,
            ordering_holds: mu_q.is_none_or(|q| mu_p > q),
        });
        pooled_clean.extend(clean_all);
        pooled_noisy.extend(noisy_all);
    }

    let vacuous = pooled_noisy.is_empty();
    Ok(Theorem1Report {
        mu_p: mean(&pooled_clean),
        mu_q: (!vacuous).then(|| mean(&pooled_noisy)),
        sigma_p: population_variance(&pooled_clean).sqrt(),
        sigma_q: (!vacuous).then(|| population_variance(&pooled_noisy).sqrt()),
        submerged: reports.iter().any(|t| !t.submerged_classes.is_empty()),
        ordering_holds: reports.iter().all(|t| t.ordering_holds),
        vacuous,
        excluded_class_count: excluded_total,
        lyapunov_variance_sum: if b_sums.is_empty() { 0.0 } else { mean(&b_sums) },
        max_single_variance_share: max_share,
        skewness_clean: skewness(&pooled_clean),
        skewness_noisy: (!vacuous).then(|| skewness(&pooled_noisy)),
        trials: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_transition;
    use crate::selection::{jsd, jsd_to_label};
    use proptest::prelude::*;

    #[test]
    fn oracle_softmax_rows() {
        let id = TransitionMatrix::identity(5);
        assert_eq!(oracle_softmax(&id, 3).unwrap(), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        let u = make_transition(NoiseType::Uniform, 0.4, 10).unwrap();
        let p = oracle_softmax(&u, 0).unwrap();
        assert!((p[0] - 0.64).abs() < 1e-15);
        assert!(p[1..].iter().all(|v| (v - 0.04).abs() < 1e-15));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(oracle_softmax(&u, 10).is_err());
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(jsd_closed_form(&TransitionMatrix::identity(4), 2, 2).unwrap(), 0.0);
        let u = make_transition(NoiseType::Uniform, 0.4, 10).unwrap();
        let closed = jsd_closed_form(&u, 0, 0).unwrap();
        let generic = jsd_to_label(&oracle_softmax(&u, 0).unwrap(), 0).unwrap();
        assert!((closed - generic).abs() < 1e-10);
        assert!(closed < jsd_closed_form(&u, 1, 0).unwrap());
        assert!(jsd_closed_form(&u, 10, 0).is_err());
    }

    #[test]
    fn uniform_gap_is_one_minus_r() {
        let r = &verify_theorem2(NoiseType::Uniform, &[0.4], 10).unwrap()[0];
        assert_eq!(r.off_diagonal_gaps.len(), 1);
        assert!((r.off_diagonal_gaps[0] - 0.6).abs() < 1e-12);
        assert!(r.ordering_holds && r.matches_expectation());
    }

    #[test]
    fn pairwise_ordering_flips_at_one_half() {
        let reps = verify_theorem2(NoiseType::Pairwise, &[0.49, 0.51], 10).unwrap();
        assert!(reps[0].ordering_holds);
        assert!(!reps[1].ordering_holds);
        assert!(reps[1].min_noisy < reps[1].jsd_clean);
        assert!(reps.iter().all(Theorem2Report::matches_expectation));
        // gaps are 1 - 2r and 1 - r
        let g = &reps[0].off_diagonal_gaps;
        assert_eq!(g.len(), 2);
        assert!((g[0] - 0.02).abs() < 1e-12 && (g[1] - 0.51).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_extremes() {
        for k in [2, 5, 9] {
            let r = &verify_theorem2(NoiseType::Uniform, &[0.0], k).unwrap()[0];
            assert_eq!(r.jsd_clean, 0.0);
            assert!(r.jsd_noisy.iter().all(|c| (c.jsd - LN_2).abs() < 1e-12));
        }
    }

    #[test]
    fn structured_is_reported_not_asserted() {
        let r = &verify_theorem2(NoiseType::Structured, &[0.3], 6).unwrap()[0];
        assert_eq!(r.expected_ordering, None);
        assert!(r.matches_expectation());
    }

    #[test]
    fn submerged_examples() {
        assert!(!submerged_check(&[3.0, 3.0], &[1.0, 1.0]).unwrap());
        assert!(submerged_check(&[1.0], &[5.0]).unwrap());
        assert!(!submerged_check(&[2.0, 2.0], &[4.0]).unwrap());
        assert!(submerged_check(&[], &[1.0]).is_err());
    }

    fn small_spec(separation: f64) -> SyntheticSpec {
        SyntheticSpec {
            k: 4,
            dim: 16,
            per_class: 60,
            separation,
            sigma: 1.0,
            seed: 21,
        }
    }

    #[test]
    fn row_sum_ordering_on_separated_data() {
        let t = make_transition(NoiseType::Uniform, 0.4, 4).unwrap();
        let r = verify_theorem1(&small_spec(8.0), &t, 2, 5).unwrap();
        assert!(r.ordering_holds && !r.submerged && !r.vacuous);
        assert!(r.mu_p > r.mu_q.unwrap());
        assert!(r.max_single_variance_share > 0.0 && r.max_single_variance_share < 1.0);
    }

    #[test]
    fn zero_noise_is_vacuous() {
        let r = verify_theorem1(&small_spec(8.0), &TransitionMatrix::identity(4), 1, 0).unwrap();
        assert!(r.vacuous && r.mu_q.is_none() && r.ordering_holds);
    }

    #[test]
    fn identical_class_distributions_give_no_gap() {
        let t = make_transition(NoiseType::Uniform, 0.4, 4).unwrap();
        let r = verify_theorem1(&small_spec(0.0), &t, 2, 5).unwrap();
        let gap = r.mu_p - r.mu_q.unwrap();
        assert!(gap.abs() < 0.2 * r.sigma_p, "gap {gap}, sigma {}", r.sigma_p);
    }

    proptest! {
        #[test]
        fn closed_form_matches_generic(k in 2usize..8, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..k).map(|_| {
                let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            }).collect();
            let t = TransitionMatrix::from_rows(rows, NoiseType::Custom, 0.0).unwrap();
            for h in 0..k {
                for y in 0..k {
                    let mut onehot = vec![0.0; k];
                    onehot[y] = 1.0;
                    let generic = jsd(t.row(h), &onehot).unwrap();
                    prop_assert!((jsd_closed_form(&t, h, y).unwrap() - generic).abs() < 1e-10);
                }
            }
        }
    }
}
