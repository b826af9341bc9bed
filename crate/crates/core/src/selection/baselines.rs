//! Comparator selectors: divergence- and loss-based global splits, a
//! raw-feature GMM, and anchored 2-means on affinity row sums.

use std::collections::BTreeMap;

use super::{
    check_distribution, classify_values, jsd_unchecked, ClassPartition, ClassValues, GroupMode, Keep, Method,
    Partition, SelectConfig,
};
use crate::affinity::group_by_label;
use crate::dataset::{Dataset, FeatureMatrix};
use crate::error::{Error, Result};

const PROB_FLOOR: f64 = 1e-12;

fn check_predictions(predictions: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
    if predictions.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} prediction rows for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let k = predictions.first().map_or(0, Vec::len);
    for (i, (p, &y)) in predictions.iter().zip(labels).enumerate() {
        if p.len() != k {
            return Err(Error::validation(format!("prediction row {i} has {} entries, expected {k}", p.len())));
        }
        if y >= k {
            return Err(Error::validation(format!("label {y} at row {i} outside [0, {k})")));
        }
        check_distribution(p, &format!("prediction row {i}"))?;
    }
    Ok(k)
}

fn global_split(method: Method, labels: &[usize], values: &[f64], config: &SelectConfig) -> Result<Partition> {
    config.validate()?;
    let d = classify_values(values, Keep::LowerMean, config, None)?;
    let mode = match d.mode {
        GroupMode::Bimodal => GroupMode::Global,
        other => other,
    };
    let mut p = Partition::from_mask(method, labels, &d.clean_mask, mode)?;
    p.global_gmm = Some(d.gmm);
    Ok(p)
}

/// Per-sample JSD to the one-hot observed label, clustered by one mixture over
/// all samples; the lower-divergence component is clean.
pub fn jsd_select(predictions: &[Vec<f64>], labels: &[usize], config: &SelectConfig) -> Result<Partition> {
    check_predictions(predictions, labels)?;
    let k = predictions.first().map_or(0, Vec::len);
    let values: Vec<f64> = predictions
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            let mut onehot = vec![0.0; k];
            onehot[y] = 1.0;
            jsd_unchecked(p, &onehot)
        })
        .collect();
    global_split(Method::Jsd, labels, &values, config)
}

/// `-ln p[label]`, with the probability floored at 1e-12.
pub fn cross_entropy_values(predictions: &[Vec<f64>], labels: &[usize]) -> Result<Vec<f64>> {
    check_predictions(predictions, labels)?;
    Ok(predictions
        .iter()
        .zip(labels)
        .map(|(p, &y)| -p[y].max(PROB_FLOOR).ln())
        .collect())
}

/// Small-loss selection: a mixture over per-sample cross-entropy, lower
/// component clean.
pub fn ce_select(predictions: &[Vec<f64>], labels: &[usize], config: &SelectConfig) -> Result<Partition> {
    let values = cross_entropy_values(predictions, labels)?;
    global_split(Method::Ce, labels, &values, config)
}

/// Per-class mixture over the mean coordinate of each raw feature vector,
/// higher component clean. A selector with no access to pairwise structure.
pub fn gmm_raw_select(dataset: &Dataset, features: &FeatureMatrix, config: &SelectConfig) -> Result<Partition> {
    config.validate()?;
    if features.rows() != dataset.len() {
        return Err(Error::validation("feature rows do not match dataset length"));
    }
    let dim = features.dim().max(1) as f64;
    let per_class = group_by_label(dataset.noisy_labels())
        .into_iter()
        .map(|g| {
            if g.members.len() < 2 {
                return Ok(ClassPartition {
                    class_id: g.class_id,
                    clean: g.members,
                    noisy: Vec::new(),
                    mode: GroupMode::Singleton,
                    gmm: None,
                    clean_component: None,
                    tied_means: false,
                });
            }
            let values: Vec<f64> = g
                .members
                .iter()
                .map(|&i| features.row(i).iter().sum::<f64>() / dim)
                .collect();
            let d = classify_values(&values, Keep::HigherMean, config, None)?;
            let (clean, noisy) = g.members.iter().zip(&d.clean_mask).partition::<Vec<_>, _>(|(_, &c)| c);
            Ok(ClassPartition {
                class_id: g.class_id,
                clean: clean.into_iter().map(|(&i, _)| i).collect(),
                noisy: noisy.into_iter().map(|(&i, _)| i).collect(),
                mode: d.mode,
                gmm: Some(d.gmm),
                clean_component: d.clean_component,
                tied_means: d.tied_means,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Partition::from_classes(Method::GmmRaw, dataset.len(), per_class)
}

/// Lloyd's 2-means in one dimension, centers initialized at min and max.
/// Returns the cluster id (0 = started at min) of every value and the final
/// centers. Ties go to cluster 0.
pub fn two_means(values: &[f64]) -> (Vec<usize>, [f64; 2]) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut centers = [lo, hi];
    let mut assign = vec![0usize; values.len()];
    if !(lo < hi) {
        return (assign, centers);
    }
    for _ in 0..1000 {
        let mut changed = false;
        for (a, &v) in assign.iter_mut().zip(values) {
            let c = usize::from((v - centers[1]).abs() < (v - centers[0]).abs());
            changed |= *a != c;
            *a = c;
        }
        let mut sums = [0.0; 2];
        let mut counts = [0usize; 2];
        for (&a, &v) in assign.iter().zip(values) {
            sums[a] += v;
            counts[a] += 1;
        }
        for c in 0..2 {
            if counts[c] > 0 {
                centers[c] = sums[c] / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    (assign, centers)
}

/// Anchored 2-means on per-class values: the cluster holding the majority of
/// the class's known-clean anchors is clean (ties go to the higher center).
pub fn kmeans_select(
    groups: &[ClassValues],
    anchors: &BTreeMap<usize, Vec<usize>>,
    len: usize,
) -> Result<Partition> {
    let per_class = groups
        .iter()
        .map(|g| {
            if g.members.len() != g.values.len() {
                return Err(Error::validation(format!("class {} has mismatched values", g.class_id)));
            }
            if g.members.len() < 2 {
                return Ok(ClassPartition {
                    class_id: g.class_id,
                    clean: g.members.clone(),
                    noisy: Vec::new(),
                    mode: GroupMode::Singleton,
                    gmm: None,
                    clean_component: None,
                    tied_means: false,
                });
            }
            let class_anchors = anchors
                .get(&g.class_id)
                .filter(|a| !a.is_empty())
                .ok_or_else(|| Error::validation(format!("class {} has no clean anchors", g.class_id)))?;
            let (assign, centers) = two_means(&g.values);
            let mut votes = [0usize; 2];
            for a in class_anchors {
                let pos = g
                    .members
                    .iter()
                    .position(|m| m == a)
                    .ok_or_else(|| Error::validation(format!("anchor {a} is not a member of class {}", g.class_id)))?;
                votes[assign[pos]] += 1;
            }
            let clean_cluster = match votes[0].cmp(&votes[1]) {
                std::cmp::Ordering::Greater => 0,
                std::cmp::Ordering::Less => 1,
                std::cmp::Ordering::Equal => usize::from(centers[1] >= centers[0]),
            };
            let (clean, noisy) = g.members.iter().zip(&assign).partition::<Vec<_>, _>(|(_, &a)| a == clean_cluster);
            Ok(ClassPartition {
                class_id: g.class_id,
                clean: clean.into_iter().map(|(&i, _)| i).collect(),
                noisy: noisy.into_iter().map(|(&i, _)| i).collect(),
                mode: GroupMode::Clustered,
                gmm: None,
                clean_component: None,
                tied_means: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Partition::from_classes(Method::Kmeans, len, per_class)
}

/// First `per_class` samples of each label group whose label matches ground
/// truth. Used only by the k-means comparator, which needs known-clean seeds.
pub fn clean_anchors_from_truth(dataset: &Dataset, per_class: usize) -> Result<BTreeMap<usize, Vec<usize>>> {
    let truth = dataset
        .true_labels()
        .ok_or_else(|| Error::validation("clean anchors need ground-truth labels"))?;
    Ok(group_by_label(dataset.noisy_labels())
        .into_iter()
        .map(|g| {
            let picks = g
                .members
                .iter()
                .copied()
                .filter(|&i| truth[i] == g.class_id)
                .take(per_class)
                .collect();
            (g.class_id, picks)
        })
        .collect())
}
