use serde::{Deserialize, Serialize};

use super::{Method, Partition};
use crate::affinity::group_by_label;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: usize,
    pub clean_size: usize,
    pub noisy_size: usize,
    pub clean_purity: f64,
    pub noisy_purity: f64,
    pub clean_recall: f64,
}

/// Quality of a partition against ground truth.
///
/// Purities of an empty set are 1 (nothing wrong was selected) and flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub method: Method,
    pub clean_purity: f64,
    pub noisy_purity: f64,
    pub clean_recall: f64,
    pub clean_size: usize,
    pub noisy_size: usize,
    pub truly_clean: usize,
    pub truly_noisy: usize,
    pub empty_clean_set: bool,
    pub empty_noisy_set: bool,
    pub agreement_ratio: Option<f64>,
    pub per_class: Vec<ClassReport>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

struct Counts {
    clean: usize,
    clean_hits: usize,
    noisy: usize,
    noisy_hits: usize,
    truly_clean: usize,
}

fn count(indices: impl Iterator<Item = usize>, mask: &[bool], truth: &[usize], labels: &[usize]) -> Counts {
    let mut c = Counts {
        clean: 0,
        clean_hits: 0,
        noisy: 0,
        noisy_hits: 0,
        truly_clean: 0,
    };
    for i in indices {
        let ok = truth[i] == labels[i];
        c.truly_clean += usize::from(ok);
        if mask[i] {
            c.clean += 1;
            c.clean_hits += usize::from(ok);
        } else {
            c.noisy += 1;
            c.noisy_hits += usize::from(!ok);
        }
    }
    c
}

pub fn evaluate_partition(partition: &Partition, dataset: &Dataset) -> Result<SelectionReport> {
    let truth = dataset
        .true_labels()
        .ok_or_else(|| Error::validation("evaluating a partition needs ground-truth labels"))?;
    if partition.len() != dataset.len() {
        return Err(Error::validation(format!(
            "partition covers {} samples, dataset has {}",
            partition.len(),
            dataset.len()
        )));
    }
    let labels = dataset.noisy_labels();
    let mask = partition.clean_mask();
    let all = count(0..dataset.len(), &mask, truth, labels);
    let per_class = group_by_label(labels)
        .into_iter()
        .map(|g| {
            let c = count(g.members.into_iter(), &mask, truth, labels);
            ClassReport {
                class_id: g.class_id,
                clean_size: c.clean,
                noisy_size: c.noisy,
                clean_purity: ratio(c.clean_hits, c.clean),
                noisy_purity: ratio(c.noisy_hits, c.noisy),
                clean_recall: ratio(c.clean_hits, c.truly_clean),
            }
        })
        .collect();
    Ok(SelectionReport {
        method: partition.method,
        clean_purity: ratio(all.clean_hits, all.clean),
        noisy_purity: ratio(all.noisy_hits, all.noisy),
        clean_recall: ratio(all.clean_hits, all.truly_clean),
        clean_size: all.clean,
        noisy_size: all.noisy,
        truly_clean: all.truly_clean,
        truly_noisy: dataset.len() - all.truly_clean,
        empty_clean_set: all.clean == 0,
        empty_noisy_set: all.noisy == 0,
        agreement_ratio: partition.agreement_ratio,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{corrupt_labels, generate_synthetic, make_transition, FeatureMatrix, NoiseType, SyntheticSpec};
    use crate::selection::GroupMode;

    fn small() -> Dataset {
        let f = FeatureMatrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        Dataset::new(
            f,
            vec![0, 0, 1, 1],
            Some(vec![0, 1, 1, 0]),
            2,
            (0..4).map(|i| i.to_string()).collect(),
        )
        .unwrap()
    }

    fn part(d: &Dataset, clean: &[usize]) -> Partition {
        let mask: Vec<bool> = (0..d.len()).map(|i| clean.contains(&i)).collect();
        Partition::from_mask(Method::Psdc, d.noisy_labels(), &mask, GroupMode::Bimodal).unwrap()
    }

    #[test]
    fn only_truly_clean_selected() {
        let d = small();
        let r = evaluate_partition(&part(&d, &[0, 2]), &d).unwrap();
        assert_eq!(r.clean_purity, 1.0);
        assert_eq!(r.noisy_purity, 1.0);
        assert_eq!(r.clean_recall, 1.0);
        assert_eq!((r.truly_clean, r.truly_noisy), (2, 2));
    }

    #[test]
    fn empty_clean_set_is_flagged() {
        let d = small();
        let r = evaluate_partition(&part(&d, &[]), &d).unwrap();
        assert_eq!(r.clean_purity, 1.0);
        assert!(r.empty_clean_set);
        assert_eq!(r.clean_recall, 0.0);
        assert_eq!(r.noisy_purity, 0.5);
    }

    #[test]
    fn everything_clean_matches_expected_uniform_rate() {
        let spec = SyntheticSpec {
            k: 10,
            dim: 2,
            per_class: 1000,
            separation: 1.0,
            sigma: 1.0,
            seed: 5,
        };
        let d = generate_synthetic(&spec).unwrap();
        let d = corrupt_labels(&d, &make_transition(NoiseType::Uniform, 0.4, 10).unwrap(), 6).unwrap();
        let all: Vec<usize> = (0..d.len()).collect();
        let r = evaluate_partition(&part(&d, &all), &d).unwrap();
        // expected clean fraction 1 - (k-1) r / k = 0.6 + 0.4 / k
        assert!((r.clean_purity - 0.64).abs() < 0.02, "{}", r.clean_purity);
    }

    #[test]
    fn requires_truth() {
        let d = small().without_true_labels();
        assert!(evaluate_partition(&part(&small(), &[0]), &d).is_err());
    }
}
