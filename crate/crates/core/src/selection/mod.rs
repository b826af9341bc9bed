//! Clean/noisy partitioning of a labeled dataset.
//!
//! [`psdc_select`] groups samples by observed label, sums each group's cosine
//! affinity rows and keeps the samples that the higher-mean component of a
//! two-component GMM claims with posterior above `d_cutoff`. The JSD, CE,
//! raw-feature and k-means selectors exist as baselines and ablation rows,
//! and [`hybrid_select`] falls back to the JSD partition while PSDC and JSD
//! still disagree.

mod baselines;
mod divergence;
mod hybrid;
mod json;
mod psdc;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::affinity::group_by_label;
use crate::error::{Error, Result};
use crate::gmm::{fit_gmm, Component, EmConfig, Gmm1D};

pub use baselines::{
    ce_select, clean_anchors_from_truth, cross_entropy_values, gmm_raw_select, jsd_select, kmeans_select,
    two_means,
};
pub use divergence::{jsd, jsd_to_label};
pub(crate) use divergence::{check_distribution, jsd_unchecked};
pub use hybrid::{hybrid_select, HYBRID_AGREEMENT_THRESHOLD};
pub use json::{ClassEntry, PartitionFile};
pub use psdc::{class_row_sums, psdc_select, ClassValues};
pub use report::{evaluate_partition, ClassReport, SelectionReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Psdc,
    Jsd,
    Hybrid,
    GmmRaw,
    Ce,
    Kmeans,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Psdc => "psdc",
            Method::Jsd => "jsd",
            Method::Hybrid => "hybrid",
            Method::GmmRaw => "gmm_raw",
            Method::Ce => "ce",
            Method::Kmeans => "kmeans",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psdc" => Ok(Method::Psdc),
            "jsd" => Ok(Method::Jsd),
            "hybrid" => Ok(Method::Hybrid),
            "gmm_raw" | "gmm-raw" => Ok(Method::GmmRaw),
            "ce" => Ok(Method::Ce),
            "kmeans" | "k-means" => Ok(Method::Kmeans),
            other => Err(Error::validation(format!("unknown selection method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    /// Posterior threshold for admission to the clean set.
    pub d_cutoff: f64,
    pub em: EmConfig,
    /// Send a whole group to the clean set when its values form one mode.
    pub single_mode_fallback: bool,
    /// PSDC only: a split whose lower mean row sum is below this fraction of
    /// the higher one is kept even when the mixture shows no clear dip.
    pub mass_ratio: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            d_cutoff: 0.9,
            em: EmConfig::default(),
            single_mode_fallback: true,
            mass_ratio: 0.5,
        }
    }
}

impl SelectConfig {
    pub fn with_cutoff(d_cutoff: f64) -> Self {
        Self {
            d_cutoff,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_cutoff > 0.0 && self.d_cutoff < 1.0) {
            return Err(Error::validation(format!("d_cutoff {} outside (0, 1)", self.d_cutoff)));
        }
        if !(0.0..1.0).contains(&self.mass_ratio) {
            return Err(Error::validation(format!("mass_ratio {} outside [0, 1)", self.mass_ratio)));
        }
        self.em.validate()
    }
}

/// How a group's clean/noisy split was decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupMode {
    /// Posterior threshold on a two-mode mixture.
    Bimodal,
    /// The mixture did not separate into two modes; everything is clean.
    SingleMode,
    /// All values identical; everything is clean.
    Degenerate,
    /// A lone sample; clean by convention.
    Singleton,
    /// Split decided without a mixture (k-means).
    Clustered,
    /// Split decided by a global mixture over all samples.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPartition {
    pub class_id: usize,
    pub clean: Vec<usize>,
    pub noisy: Vec<usize>,
    pub mode: GroupMode,
    pub gmm: Option<Gmm1D>,
    pub clean_component: Option<Component>,
    /// Component means were equal; the first component was taken.
    pub tied_means: bool,
}

/// Clean/noisy split over sample indices `0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub method: Method,
    len: usize,
    clean: Vec<usize>,
    noisy: Vec<usize>,
    pub per_class: Vec<ClassPartition>,
    /// `|clean_psdc ∩ clean_jsd| / |clean_jsd|`, set by the hybrid rule.
    pub agreement_ratio: Option<f64>,
    /// Mixture fitted over all samples (JSD and CE selectors).
    pub global_gmm: Option<Gmm1D>,
}

impl Partition {
    /// Assembles the global sets from per-class splits; fails unless every
    /// index in `0..len` appears exactly once.
    pub fn from_classes(method: Method, len: usize, mut per_class: Vec<ClassPartition>) -> Result<Self> {
        per_class.sort_by_key(|c| c.class_id);
        let mut seen = vec![false; len];
        let mut clean = Vec::new();
        let mut noisy = Vec::new();
        for c in &per_class {
            for (&i, is_clean) in c.clean.iter().map(|i| (i, true)).chain(c.noisy.iter().map(|i| (i, false))) {
                if i >= len || seen[i] {
                    return Err(Error::validation(format!("sample index {i} duplicated or out of range")));
                }
                seen[i] = true;
                if is_clean {
                    clean.push(i);
                } else {
                    noisy.push(i);
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::validation(format!("sample index {missing} missing from partition")));
        }
        clean.sort_unstable();
        noisy.sort_unstable();
        Ok(Self {
            method,
            len,
            clean,
            noisy,
            per_class,
            agreement_ratio: None,
            global_gmm: None,
        })
    }

    /// Builds a partition from a per-sample clean mask, broken down by label.
    pub(crate) fn from_mask(method: Method, labels: &[usize], clean_mask: &[bool], mode: GroupMode) -> Result<Self> {
        let per_class = group_by_label(labels)
            .into_iter()
            .map(|g| {
                let (clean, noisy) = g.members.iter().partition(|&&i| clean_mask[i]);
                ClassPartition {
                    class_id: g.class_id,
                    clean,
                    noisy,
                    mode,
                    gmm: None,
                    clean_component: None,
                    tied_means: false,
                }
            })
            .collect();
        Self::from_classes(method, labels.len(), per_class)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn clean(&self) -> &[usize] {
        &self.clean
    }

    pub fn noisy(&self) -> &[usize] {
        &self.noisy
    }

    pub fn clean_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.len];
        for &i in &self.clean {
            m[i] = true;
        }
        m
    }
}

/// Which end of a mixture counts as clean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Keep {
    HigherMean,
    LowerMean,
}

pub(crate) struct GroupDecision {
    pub clean_mask: Vec<bool>,
    pub mode: GroupMode,
    pub gmm: Gmm1D,
    pub clean_component: Option<Component>,
    pub tied_means: bool,
}

/// Fits a mixture to `values` and thresholds the posterior of the kept
/// component at `config.d_cutoff`. `mass_ratio` enables the extra
/// separation rule for non-negative mass-like values.
pub(crate) fn classify_values(
    values: &[f64],
    keep: Keep,
    config: &SelectConfig,
    mass_ratio: Option<f64>,
) -> Result<GroupDecision> {
    let gmm = fit_gmm(values, &config.em)?;
    if gmm.degenerate {
        return Ok(GroupDecision {
            clean_mask: vec![true; values.len()],
            mode: GroupMode::Degenerate,
            gmm,
            clean_component: None,
            tied_means: false,
        });
    }
    let (lo, hi) = (gmm.means[0].min(gmm.means[1]), gmm.means[0].max(gmm.means[1]));
    let mass_split = mass_ratio.is_some_and(|r| hi > 0.0 && lo < r * hi);
    if config.single_mode_fallback && !mass_split && !gmm.is_bimodal(values) {
        return Ok(GroupDecision {
            clean_mask: vec![true; values.len()],
            mode: GroupMode::SingleMode,
            gmm,
            clean_component: None,
            tied_means: false,
        });
    }
    let (component, tied_means) = match keep {
        Keep::HigherMean => gmm.higher_mean_component(),
        Keep::LowerMean => gmm.lower_mean_component(),
    };
    let clean_mask = values
        .iter()
        .map(|&v| gmm.posterior_of(component, v) > config.d_cutoff)
        .collect();
    Ok(GroupDecision {
        clean_mask,
        mode: GroupMode::Bimodal,
        gmm,
        clean_component: Some(component),
        tied_means,
    })
}
