use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassPartition, GroupMode, Method, Partition};
use crate::error::{Error, Result};
use crate::gmm::{Component, Gmm1D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub clean: Vec<String>,
    pub noisy: Vec<String>,
    pub mode: GroupMode,
    pub gmm: Option<Gmm1D>,
    pub clean_component: Option<Component>,
    pub tied_means: bool,
}

/// On-disk partition, keyed by sample id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub method: Method,
    pub clean: Vec<String>,
    pub noisy: Vec<String>,
    pub per_class: BTreeMap<String, ClassEntry>,
    pub agreement_ratio: Option<f64>,
    #[serde(default)]
    pub global_gmm: Option<Gmm1D>,
}

impl Partition {
    pub fn to_file(&self, ids: &[String]) -> Result<PartitionFile> {
        if ids.len() != self.len() {
            return Err(Error::validation(format!(
                "{} ids for a partition of {} samples",
                ids.len(),
                self.len()
            )));
        }
        let names = |idx: &[usize]| idx.iter().map(|&i| ids[i].clone()).collect::<Vec<_>>();
        Ok(PartitionFile {
            method: self.method,
            clean: names(self.clean()),
            noisy: names(self.noisy()),
            per_class: self
                .per_class
                .iter()
                .map(|c| {
                    (
                        c.class_id.to_string(),
                        ClassEntry {
                            clean: names(&c.clean),
                            noisy: names(&c.noisy),
                            mode: c.mode,
                            gmm: c.gmm.clone(),
                            clean_component: c.clean_component,
                            tied_means: c.tied_means,
                        },
                    )
                })
                .collect(),
            agreement_ratio: self.agreement_ratio,
            global_gmm: self.global_gmm.clone(),
        })
    }

    /// Resolves ids back to indices; every id must appear exactly once.
    pub fn from_file(file: &PartitionFile, ids: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let resolve = |names: &[String]| {
            names
                .iter()
                .map(|n| {
                    index
                        .get(n.as_str())
                        .copied()
                        .ok_or_else(|| Error::validation(format!("unknown sample id `{n}` in partition")))
                })
                .collect::<Result<Vec<_>>>()
        };
        let per_class = file
            .per_class
            .iter()
            .map(|(key, e)| {
                let class_id = key
                    .parse()
                    .map_err(|_| Error::validation(format!("per_class key `{key}` is not a class id")))?;
                Ok(ClassPartition {
                    class_id,
                    clean: resolve(&e.clean)?,
                    noisy: resolve(&e.noisy)?,
                    mode: e.mode,
                    gmm: e.gmm.clone(),
                    clean_component: e.clean_component,
                    tied_means: e.tied_means,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut p = Partition::from_classes(file.method, ids.len(), per_class)?;
        let mut clean = resolve(&file.clean)?;
        clean.sort_unstable();
        if clean != p.clean() {
            return Err(Error::validation("top-level clean list disagrees with per-class entries"));
        }
        p.agreement_ratio = file.agreement_ratio;
        p.global_gmm = file.global_gmm.clone();
        Ok(p)
    }

    pub fn to_json(&self, ids: &[String]) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file(ids)?)?)
    }

    pub fn from_json(s: &str, ids: &[String]) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?, ids)
    }

    pub fn save(&self, ids: &[String], path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json(ids)?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load(ids: &[String], path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, ids)
    }
}
