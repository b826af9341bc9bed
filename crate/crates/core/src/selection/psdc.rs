use super::{classify_values, ClassPartition, GroupMode, Keep, Method, Partition, SelectConfig};
use crate::affinity::{affinity_group, group_by_label};
use crate::dataset::{Dataset, FeatureMatrix};
use crate::error::{Error, Result};

/// One label group and the scalar statistic clustered for it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassValues {
    pub class_id: usize,
    pub members: Vec<usize>,
    pub values: Vec<f64>,
}

fn check_features(dataset: &Dataset, features: &FeatureMatrix) -> Result<()> {
    if features.rows() != dataset.len() {
        return Err(Error::validation(format!(
            "{} feature rows for {} samples",
            features.rows(),
            dataset.len()
        )));
    }
    Ok(())
}

/// Affinity row sums for every label group. Singleton groups get the value 1
/// (their self-similarity).
pub fn class_row_sums(dataset: &Dataset, features: &FeatureMatrix) -> Result<Vec<ClassValues>> {
    check_features(dataset, features)?;
    group_by_label(dataset.noisy_labels())
        .into_iter()
        .map(|g| {
            let values = if g.members.len() < 2 {
                vec![1.0; g.members.len()]
            } else {
                affinity_group(features, Some(dataset.ids()), g.class_id, &g.members)?.row_sums
            };
            Ok(ClassValues {
                class_id: g.class_id,
                members: g.members,
                values,
            })
        })
        .collect()
}

/// Pairwise similarity distribution clustering.
///
/// `features` replaces the dataset's own features (e.g. embeddings from a
/// model); pass `dataset.features()` to select on raw features. Ground-truth
/// labels are never read.
pub fn psdc_select(dataset: &Dataset, features: &FeatureMatrix, config: &SelectConfig) -> Result<Partition> {
    config.validate()?;
    let groups = class_row_sums(dataset, features)?;
    let per_class = groups
        .into_iter()
        .map(|g| split_group(g, config))
        .collect::<Result<Vec<_>>>()?;
    Partition::from_classes(Method::Psdc, dataset.len(), per_class)
}

fn split_group(g: ClassValues, config: &SelectConfig) -> Result<ClassPartition> {
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
    let d = classify_values(&g.values, Keep::HigherMean, config, Some(config.mass_ratio))?;
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
}
