//! Comparison of the selectors on corrupted synthetic data.
//!
//! Rows: PSDC row sums with a GMM, cross-entropy with a GMM, a GMM on raw
//! mean feature values, PSDC row sums with anchored 2-means, and JSD with a
//! GMM. CE and JSD read predictions of a prototype learner fit on all noisy
//! labels.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{corrupt_labels, generate_synthetic, make_transition, NoiseType, SyntheticSpec};
use crate::error::{Error, Result};
use crate::selection::{
    ce_select, class_row_sums, clean_anchors_from_truth, evaluate_partition, gmm_raw_select, jsd_select,
    kmeans_select, psdc_select, Method, SelectConfig,
};
use crate::semiloop::fit_prototypes;

pub const ABLATION_METHODS: [Method; 5] = [Method::Psdc, Method::Ce, Method::GmmRaw, Method::Kmeans, Method::Jsd];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub select: SelectConfig,
    /// Temperature of the prototype learner behind CE and JSD.
    pub temperature: f64,
    /// Truly clean samples per class handed to k-means as anchors.
    pub anchors_per_class: usize,
    pub noise_seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            select: SelectConfig::default(),
            temperature: 0.1,
            anchors_per_class: 3,
            noise_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub noise_type: NoiseType,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub noise_type: NoiseType,
    pub rate: f64,
    pub method: Method,
    pub clean_purity: f64,
    pub clean_recall: f64,
    pub clean_size: usize,
}

pub fn run_ablation(spec: &SyntheticSpec, scenarios: &[Scenario], config: &AblationConfig) -> Result<Vec<AblationRow>> {
    config.select.validate()?;
    if scenarios.is_empty() {
        return Err(Error::validation("no ablation scenarios given"));
    }
    let base = generate_synthetic(spec)?;
    let mut rows = Vec::with_capacity(scenarios.len() * ABLATION_METHODS.len());
    for s in scenarios {
        let t = make_transition(s.noise_type, s.rate, spec.k)?;
        let data = corrupt_labels(&base, &t, config.noise_seed)?;
        let labels = data.noisy_labels();
        let model = fit_prototypes(data.features(), labels, None, data.k(), config.temperature, None)?;
        let preds = model.predict_all(data.features())?;
        for method in ABLATION_METHODS {
            let p = match method {
                Method::Psdc => psdc_select(&data, data.features(), &config.select)?,
                Method::Ce => ce_select(&preds, labels, &config.select)?,
                Method::GmmRaw => gmm_raw_select(&data, data.features(), &config.select)?,
                Method::Kmeans => {
                    let anchors = clean_anchors_from_truth(&data, config.anchors_per_class)?;
                    kmeans_select(&class_row_sums(&data, data.features())?, &anchors, data.len())?
                }
                Method::Jsd => jsd_select(&preds, labels, &config.select)?,
                Method::Hybrid => unreachable!("not an ablation row"),
            };
            let r = evaluate_partition(&p, &data)?;
            rows.push(AblationRow {
                noise_type: s.noise_type,
                rate: s.rate,
                method,
                clean_purity: r.clean_purity,
                clean_recall: r.clean_recall,
                clean_size: r.clean_size,
            });
        }
    }
    Ok(rows)
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["noise_type", "rate", "method", "clean_purity", "clean_recall", "clean_size"])?;
    for r in rows {
        out.write_record([
            r.noise_type.to_string(),
            r.rate.to_string(),
            r.method.to_string(),
            r.clean_purity.to_string(),
            r.clean_recall.to_string(),
            r.clean_size.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Purity of `method` within one scenario's rows.
pub fn purity_of(rows: &[AblationRow], rate: f64, method: Method) -> Option<f64> {
    rows.iter()
        .find(|r| r.rate == rate && r.method == method)
        .map(|r| r.clean_purity)
}
