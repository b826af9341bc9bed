//! Semi-supervised selection loop with two prototype learners.
//!
//! Each learner is a set of class centroids that predicts with a softmax over
//! cosine similarities. Every round, each learner is refit on a clean set
//! chosen with the *other* learner's predictions (co-teaching), and the usual
//! labeled / unlabeled / regularization / contrastive losses are evaluated on
//! MixUp batches for bookkeeping. Features never change.

use std::f64::consts::LN_2;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::affinity::cosine;
use crate::dataset::{Dataset, FeatureMatrix};
use crate::error::{Error, Result};
use crate::selection::{
    check_distribution, evaluate_partition, hybrid_select, jsd_select, jsd_unchecked, psdc_select, Method, Partition,
    SelectConfig,
};

const PROB_FLOOR: f64 = 1e-12;
const CONTRASTIVE_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeModel {
    pub centroids: Vec<Vec<f64>>,
    /// Classes that have a usable centroid. Inactive classes get probability 0.
    pub active: Vec<bool>,
    pub temperature: f64,
}

impl PrototypeModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn predict_all(&self, features: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        features.iter_rows().map(|x| predict_soft(self, x)).collect()
    }
}

/// Weighted class means of `features` grouped by `labels`. Classes with no
/// samples keep their centroid from `previous`, or are marked inactive.
pub fn fit_prototypes(
    features: &FeatureMatrix,
    labels: &[usize],
    weights: Option<&[f64]>,
    k: usize,
    temperature: f64,
    previous: Option<&PrototypeModel>,
) -> Result<PrototypeModel> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::validation(format!("temperature {temperature} must be positive")));
    }
    if labels.len() != features.rows() {
        return Err(Error::validation(format!(
            "{} labels for {} feature rows",
            labels.len(),
            features.rows()
        )));
    }
    if let Some(w) = weights {
        if w.len() != labels.len() {
            return Err(Error::validation("weights length does not match labels"));
        }
        if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::validation(format!("invalid sample weight {bad}")));
        }
    }
    if let Some(p) = previous {
        if p.k() != k || p.centroids.first().is_some_and(|c| c.len() != features.dim()) {
            return Err(Error::validation("previous model has a different shape"));
        }
    }
    let dim = features.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut mass = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (i, (&y, x)) in labels.iter().zip(features.iter_rows()).enumerate() {
        if y >= k {
            return Err(Error::validation(format!("label {y} outside [0, {k})")));
        }
        let w = weights.map_or(1.0, |w| w[i]);
        count[y] += 1;
        mass[y] += w;
        for (s, v) in sums[y].iter_mut().zip(x) {
            *s += w * v;
        }
    }
    let mut centroids = Vec::with_capacity(k);
    let mut active = Vec::with_capacity(k);
    for c in 0..k {
        if count[c] == 0 {
            match previous {
                Some(p) => {
                    centroids.push(p.centroids[c].clone());
                    active.push(p.active[c]);
                }
                None => {
                    centroids.push(vec![0.0; dim]);
                    active.push(false);
                }
            }
            continue;
        }
        if mass[c] == 0.0 {
            return Err(Error::validation(format!("all weights are zero for class {c}")));
        }
        let centroid: Vec<f64> = sums[c].iter().map(|s| s / mass[c]).collect();
        active.push(centroid.iter().any(|v| *v != 0.0));
        centroids.push(centroid);
    }
    if !active.iter().any(|a| *a) {
        return Err(Error::validation("no class has a usable centroid"));
    }
    Ok(PrototypeModel {
        centroids,
        active,
        temperature,
    })
}

/// Softmax over `cosine(feature, centroid_c) / temperature` for active classes.
pub fn predict_soft(model: &PrototypeModel, feature: &[f64]) -> Result<Vec<f64>> {
    if feature.iter().all(|v| *v == 0.0) {
        return Err(Error::domain("cannot predict for a zero feature vector"));
    }
    let logits: Vec<Option<f64>> = model
        .centroids
        .iter()
        .zip(&model.active)
        .map(|(c, &a)| {
            if a {
                Ok(Some(cosine(feature, c)? / model.temperature))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let max = logits.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| l.map_or(0.0, |l| (l - max).exp())).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

fn mixup_with<R: Rng>(
    rng: &mut R,
    beta: &Beta<f64>,
    x1: &[f64],
    p1: &[f64],
    x2: &[f64],
    p2: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let l: f64 = beta.sample(rng);
    let l = l.max(1.0 - l);
    let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| l * u + (1.0 - l) * v).collect();
    (mix(x1, x2), mix(p1, p2))
}

fn beta_dist(beta_param: f64) -> Result<Beta<f64>> {
    Beta::new(beta_param, beta_param)
        .map_err(|e| Error::validation(format!("beta parameter {beta_param}: {e}")))
}

/// Convex mix weighted toward the first pair: `λ' = max(λ, 1 − λ)` with
/// `λ ~ Beta(beta_param, beta_param)`.
pub fn mixup(x1: &[f64], p1: &[f64], x2: &[f64], p2: &[f64], beta_param: f64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if x1.len() != x2.len() || p1.len() != p2.len() {
        return Err(Error::validation("mixup inputs have mismatched lengths"));
    }
    check_distribution(p1, "first target")?;
    check_distribution(p2, "second target")?;
    let beta = beta_dist(beta_param)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(mixup_with(&mut rng, &beta, x1, p1, x2, p2))
}

/// Cross-entropy `−Σ target_c ln pred_c`, with `pred` clamped at 1e-12.
pub fn loss_labeled(pred: &[f64], target: &[f64]) -> f64 {
    -pred
        .iter()
        .zip(target)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| t * p.max(PROB_FLOOR).ln())
        .sum::<f64>()
}

/// Squared L2 distance.
pub fn loss_unlabeled(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (t - p).powi(2)).sum()
}

/// `KL(prior ‖ mean prediction)`, with the mean clamped at 1e-12.
pub fn loss_reg(batch_preds: &[Vec<f64>], prior: &[f64]) -> Result<f64> {
    if batch_preds.is_empty() {
        return Err(Error::validation("regularizer needs a non-empty batch"));
    }
    if batch_preds.iter().any(|p| p.len() != prior.len()) {
        return Err(Error::validation("prediction length does not match prior"));
    }
    let n = batch_preds.len() as f64;
    Ok(prior
        .iter()
        .enumerate()
        .filter(|(_, &pi)| pi > 0.0)
        .map(|(c, &pi)| {
            let m = (batch_preds.iter().map(|p| p[c]).sum::<f64>() / n).max(PROB_FLOOR);
            pi * (pi / m).ln()
        })
        .sum::<f64>()
        .max(0.0))
}

pub fn uniform_prior(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// NT-Xent over consecutive row pairs `(0,1), (2,3), ...` with cosine
/// similarity and temperature `kappa`.
pub fn contrastive_loss(projections: &[Vec<f64>], kappa: f64) -> Result<f64> {
    let n = projections.len();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::validation(format!("contrastive loss needs an even, non-zero row count, got {n}")));
    }
    if !(kappa > 0.0) {
        return Err(Error::validation(format!("kappa {kappa} must be positive")));
    }
    let mut sim = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let s = cosine(&projections[i], &projections[j])? / kappa;
            sim[i][j] = s;
            sim[j][i] = s;
        }
    }
    let mut total = 0.0;
    for (i, row) in sim.iter().enumerate() {
        let others = || row.iter().enumerate().filter(move |&(b, _)| b != i).map(|(_, &s)| s);
        let max = others().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + others().map(|s| (s - max).exp()).sum::<f64>().ln();
        total += lse - row[i ^ 1];
    }
    Ok((total / n as f64).max(0.0))
}

pub fn total_loss(l_x: f64, l_u: f64, l_r: f64, l_c: f64, config: &LoopConfig) -> f64 {
    l_x + config.lambda_u * l_u + config.lambda_r * l_r + config.lambda_c * l_c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub rounds: usize,
    pub d_cutoff: f64,
    pub lambda_u: f64,
    pub lambda_r: f64,
    pub lambda_c: f64,
    pub kappa: f64,
    pub beta_param: f64,
    /// Rounds during which the hybrid JSD fallback is active.
    pub warmup_rounds: usize,
    /// Softmax temperature of the prototype learners.
    pub temperature: f64,
    pub seed: u64,
    /// Per-learner seeds; derived from `seed` when absent.
    #[serde(default)]
    pub model_seeds: Option<[u64; 2]>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            d_cutoff: 0.9,
            lambda_u: 30.0,
            lambda_r: 1.0,
            lambda_c: 0.025,
            kappa: 0.05,
            beta_param: 4.0,
            warmup_rounds: 3,
            temperature: 0.1,
            seed: 0,
            model_seeds: None,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::validation("rounds must be at least 1"));
        }
        for (name, v) in [
            ("lambda_u", self.lambda_u),
            ("lambda_r", self.lambda_r),
            ("lambda_c", self.lambda_c),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} = {v} must be a finite non-negative number")));
            }
        }
        if !(self.beta_param > 0.0) {
            return Err(Error::validation(format!("beta_param {} must be positive", self.beta_param)));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::validation(format!("kappa {} must be positive", self.kappa)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::validation(format!("temperature {} must be positive", self.temperature)));
        }
        self.select_config().validate()
    }

    pub fn select_config(&self) -> SelectConfig {
        SelectConfig::with_cutoff(self.d_cutoff)
    }

    pub fn seeds(&self) -> [u64; 2] {
        self.model_seeds
            .unwrap_or([self.seed, self.seed ^ 0x9E37_79B9_7F4A_7C15])
    }
}

/// One learner's view of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRound {
    /// Index of the learner whose predictions chose this learner's clean set.
    pub selected_with: usize,
    pub method: Method,
    pub agreement_ratio: Option<f64>,
    pub clean_purity: f64,
    pub clean_recall: f64,
    pub clean_size: usize,
    pub loss_x: f64,
    pub loss_u: f64,
    pub loss_r: f64,
    pub loss_c: f64,
    pub total_loss: f64,
}

/// Both learners' metrics for a round plus their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// `psdc`, `jsd`, or `jsd+psdc` when the learners disagree.
    pub method: String,
    pub clean_purity: f64,
    pub clean_recall: f64,
    pub clean_size: f64,
    pub total_loss: f64,
    pub agreement_ratio: Option<f64>,
    /// Accuracy of the averaged pseudo-labels on the noisy sets.
    pub pseudo_label_accuracy: Option<f64>,
    pub models: [ModelRound; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: LoopConfig,
    pub rounds: Vec<RoundRecord>,
    /// Nearest-centroid accuracy of the averaged learners on held-out data.
    pub test_accuracy: Option<f64>,
    pub models: [PrototypeModel; 2],
}

impl TrainReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(["round", "method", "clean_purity", "clean_recall", "clean_size", "total_loss"])?;
        for r in &self.rounds {
            out.write_record([
                r.round.to_string(),
                r.method.clone(),
                r.clean_purity.to_string(),
                r.clean_recall.to_string(),
                r.clean_size.to_string(),
                r.total_loss.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, json_path: impl AsRef<Path>, csv_path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json()?;
        s.push('\n');
        std::fs::write(json_path, s)?;
        self.write_csv(std::fs::File::create(csv_path)?)
    }
}

fn onehot(k: usize, c: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[c] = 1.0;
    v
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

fn round_seed(model_seed: u64, round: usize) -> u64 {
    model_seed ^ (round as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Initial learner: prototypes of a random half of the data under noisy labels.
fn initial_model(features: &FeatureMatrix, labels: &[usize], k: usize, temperature: f64, seed: u64) -> Result<PrototypeModel> {
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(labels.len().div_ceil(2));
    idx.sort_unstable();
    let sub_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    fit_prototypes(&features.select_rows(&idx), &sub_labels, None, k, temperature, None)
}

struct Bookkeeping {
    loss_x: f64,
    loss_u: f64,
    loss_r: f64,
    loss_c: f64,
}

struct LossInputs<'a> {
    features: &'a FeatureMatrix,
    labels: &'a [usize],
    clean: &'a [usize],
    noisy: &'a [usize],
    own_prev: &'a [Vec<f64>],
    other_prev: &'a [Vec<f64>],
    pseudo: &'a [Vec<f64>],
}

fn bookkeeping(model: &PrototypeModel, inp: &LossInputs<'_>, config: &LoopConfig, seed: u64) -> Result<Bookkeeping> {
    let k = model.k();
    let beta = beta_dist(config.beta_param)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = inp.labels.len();

    // co-refined targets for clean samples, pseudo-labels for the rest
    let mut targets: Vec<Vec<f64>> = inp.pseudo.to_vec();
    for &i in inp.clean {
        let y = inp.labels[i];
        let w = (1.0 - jsd_unchecked(&inp.other_prev[i], &onehot(k, y)) / LN_2).clamp(0.0, 1.0);
        targets[i] = inp.own_prev[i]
            .iter()
            .enumerate()
            .map(|(c, &p)| w * f64::from(u8::from(c == y)) + (1.0 - w) * p)
            .collect();
    }
    let mut mixed = |i: usize| {
        let j = rng.gen_range(0..n);
        mixup_with(&mut rng, &beta, inp.features.row(i), &targets[i], inp.features.row(j), &targets[j])
    };

    let mut loss_x = 0.0;
    for &i in inp.clean {
        let (x, p) = mixed(i);
        loss_x += loss_labeled(&predict_soft(model, &x)?, &p);
    }
    loss_x /= inp.clean.len() as f64;

    let mut loss_u = 0.0;
    let mut pairs = Vec::new();
    for (b, &u) in inp.noisy.iter().enumerate() {
        let (x, q) = mixed(u);
        loss_u += loss_unlabeled(&predict_soft(model, &x)?, &q);
        if b < CONTRASTIVE_BATCH {
            pairs.push(inp.features.row(u).to_vec());
            pairs.push(x);
        }
    }
    if !inp.noisy.is_empty() {
        loss_u /= inp.noisy.len() as f64;
    }
    let loss_c = if pairs.is_empty() {
        0.0
    } else {
        contrastive_loss(&pairs, config.kappa)?
    };
    let loss_r = loss_reg(&model.predict_all(inp.features)?, &uniform_prior(k))?;
    Ok(Bookkeeping {
        loss_x,
        loss_u,
        loss_r,
        loss_c,
    })
}

fn mean_of(a: f64, b: f64) -> f64 {
    0.5 * (a + b)
}

/// Runs the co-teaching loop. Selection sees only features, noisy labels and
/// predictions; ground truth is used for metrics alone and is required.
pub fn run_loop(dataset: &Dataset, config: &LoopConfig, holdout: Option<&Dataset>) -> Result<TrainReport> {
    config.validate()?;
    if dataset.true_labels().is_none() {
        return Err(Error::validation("training report needs ground-truth labels"));
    }
    if let Some(h) = holdout {
        if h.dim() != dataset.dim() || h.k() != dataset.k() {
            return Err(Error::validation("holdout shape differs from training data"));
        }
    }
    let view = dataset.without_true_labels();
    let features = view.features();
    let labels = view.noisy_labels();
    let k = view.k();
    let select = config.select_config();
    let seeds = config.seeds();

    let psdc = psdc_select(&view, features, &select)?;
    let mut models = [
        initial_model(features, labels, k, config.temperature, seeds[0])?,
        initial_model(features, labels, k, config.temperature, seeds[1])?,
    ];
    let mut rounds = Vec::with_capacity(config.rounds);

    for round in 1..=config.rounds {
        let preds = [models[0].predict_all(features)?, models[1].predict_all(features)?];
        let pseudo: Vec<Vec<f64>> = preds[0]
            .iter()
            .zip(&preds[1])
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| mean_of(*u, *v)).collect())
            .collect();

        let mut partitions: Vec<Partition> = Vec::with_capacity(2);
        for m in 0..2 {
            let other = 1 - m;
            let jsd = jsd_select(&preds[other], labels, &select)?;
            let hybrid = hybrid_select(&psdc, &jsd)?;
            let p = if round <= config.warmup_rounds {
                hybrid
            } else {
                let mut p = psdc.clone();
                p.agreement_ratio = hybrid.agreement_ratio;
                p
            };
            if p.clean().is_empty() {
                return Err(Error::EmptyCleanSet { round });
            }
            partitions.push(p);
        }

        let mut next = models.clone();
        let mut per_model = Vec::with_capacity(2);
        for m in 0..2 {
            let other = 1 - m;
            let p = &partitions[m];
            let clean_labels: Vec<usize> = p.clean().iter().map(|&i| labels[i]).collect();
            next[m] = fit_prototypes(
                &features.select_rows(p.clean()),
                &clean_labels,
                None,
                k,
                config.temperature,
                Some(&models[m]),
            )?;
            let book = bookkeeping(
                &next[m],
                &LossInputs {
                    features,
                    labels,
                    clean: p.clean(),
                    noisy: p.noisy(),
                    own_prev: &preds[m],
                    other_prev: &preds[other],
                    pseudo: &pseudo,
                },
                config,
                round_seed(seeds[m], round),
            )?;
            let report = evaluate_partition(p, dataset)?;
            per_model.push(ModelRound {
                selected_with: other,
                method: p.method,
                agreement_ratio: p.agreement_ratio,
                clean_purity: report.clean_purity,
                clean_recall: report.clean_recall,
                clean_size: report.clean_size,
                loss_x: book.loss_x,
                loss_u: book.loss_u,
                loss_r: book.loss_r,
                loss_c: book.loss_c,
                total_loss: total_loss(book.loss_x, book.loss_u, book.loss_r, book.loss_c, config),
            });
        }

        let truth = dataset.true_labels().expect("checked above");
        let mut hits = 0usize;
        let mut total = 0usize;
        for p in &partitions {
            for &u in p.noisy() {
                total += 1;
                hits += usize::from(argmax(&pseudo[u]) == truth[u]);
            }
        }
        let [a, b]: [ModelRound; 2] = per_model.try_into().expect("two learners");
        let mut methods = [a.method.to_string(), b.method.to_string()];
        methods.sort();
        rounds.push(RoundRecord {
            round,
            method: if methods[0] == methods[1] {
                methods[0].clone()
            } else {
                methods.join("+")
            },
            clean_purity: mean_of(a.clean_purity, b.clean_purity),
            clean_recall: mean_of(a.clean_recall, b.clean_recall),
            clean_size: mean_of(a.clean_size as f64, b.clean_size as f64),
            total_loss: mean_of(a.total_loss, b.total_loss),
            agreement_ratio: match (a.agreement_ratio, b.agreement_ratio) {
                (Some(x), Some(y)) => Some(mean_of(x, y)),
                _ => None,
            },
            pseudo_label_accuracy: (total > 0).then(|| hits as f64 / total as f64),
            models: [a, b],
        });
        models = next;
        log::info!("round {round}: clean purity {:.4}", rounds[round - 1].clean_purity);
    }

    let test_accuracy = match holdout {
        Some(h) => Some(ensemble_accuracy(&models, h)?),
        None => None,
    };
    Ok(TrainReport {
        config: config.clone(),
        rounds,
        test_accuracy,
        models,
    })
}

fn ensemble_accuracy(models: &[PrototypeModel; 2], data: &Dataset) -> Result<f64> {
    let truth = data.reference_labels();
    let mut hits = 0usize;
    for (x, &y) in data.features().iter_rows().zip(truth) {
        let a = predict_soft(&models[0], x)?;
        let b = predict_soft(&models[1], x)?;
        let avg: Vec<f64> = a.iter().zip(&b).map(|(u, v)| mean_of(*u, *v)).collect();
        hits += usize::from(argmax(&avg) == y);
    }
    Ok(hits as f64 / data.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{corrupt_labels, generate_synthetic, make_transition, NoiseType, SyntheticSpec};
    use proptest::prelude::*;

    fn fm(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn prototypes_are_weighted_means() {
        let x = fm(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let m = fit_prototypes(&x, &[0, 1], None, 2, 0.1, None).unwrap();
        assert_eq!(m.centroids, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);

        let x = fm(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let m = fit_prototypes(&x, &[0, 0], None, 2, 0.1, None).unwrap();
        assert_eq!(m.centroids[0], vec![2.0, 3.0]);
        assert!(!m.active[1]);
        let m = fit_prototypes(&x, &[0, 0], Some(&[1.0, 0.0]), 2, 0.1, None).unwrap();
        assert_eq!(m.centroids[0], vec![1.0, 2.0]);
        assert!(fit_prototypes(&x, &[0, 0], Some(&[0.0, 0.0]), 2, 0.1, None).is_err());
    }

    #[test]
    fn unrepresented_class_keeps_previous_centroid() {
        let x = fm(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let prev = fit_prototypes(&x, &[0, 1], None, 2, 0.1, None).unwrap();
        let m = fit_prototypes(&fm(&[vec![2.0, 2.0]]), &[0], None, 2, 0.1, Some(&prev)).unwrap();
        assert_eq!(m.centroids[1], vec![0.0, 1.0]);
        assert!(m.active[1]);
    }

    #[test]
    fn predictions() {
        let x = fm(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let m = fit_prototypes(&x, &[0, 1, 2], None, 3, 1e-3, None).unwrap();
        let p = predict_soft(&m, &[0.0, 0.0, 5.0]).unwrap();
        assert!(p[2] > 1.0 - 1e-12);
        let p = predict_soft(&m, &[1.0, 1.0, 1.0]).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        assert!(matches!(predict_soft(&m, &[0.0; 3]), Err(Error::Domain(_))));

        let half = fit_prototypes(&x, &[0, 0, 2], None, 3, 0.1, None).unwrap();
        assert_eq!(predict_soft(&half, &[0.0, 1.0, 0.0]).unwrap()[1], 0.0);
    }

    #[test]
    fn mixup_examples() {
        let x = [1.0, 2.0];
        let p = [0.3, 0.7];
        let (xm, pm) = mixup(&x, &p, &x, &p, 4.0, 9).unwrap();
        for (a, b) in xm.iter().zip(&x).chain(pm.iter().zip(&p)) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(mixup(&x, &[0.5, 0.6], &x, &p, 4.0, 0).is_err());
        assert!(mixup(&x, &p, &x, &p, 0.0, 0).is_err());
        assert_eq!(mixup(&[1.0], &[1.0], &[0.0], &[1.0], 4.0, 3).unwrap(), mixup(&[1.0], &[1.0], &[0.0], &[1.0], 4.0, 3).unwrap());
    }

    #[test]
    fn labeled_loss_examples() {
        assert_eq!(loss_labeled(&[0.0, 1.0], &[0.0, 1.0]), 0.0);
        let k = 7;
        let uniform = uniform_prior(k);
        assert!((loss_labeled(&uniform, &onehot(k, 3)) - (k as f64).ln()).abs() < 1e-12);
        let oracle = -0.5 * 0.25f64.ln() - 0.5 * 0.75f64.ln();
        let v = loss_labeled(&[0.25, 0.75], &[0.5, 0.5]);
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.8369882).abs() < 1e-7);
        assert!(loss_labeled(&[0.0, 1.0], &[1.0, 0.0]).is_finite());
    }

    #[test]
    fn unlabeled_loss_examples() {
        assert_eq!(loss_unlabeled(&[0.2, 0.8], &[0.2, 0.8]), 0.0);
        assert_eq!(loss_unlabeled(&[1.0, 0.0], &[0.0, 1.0]), 2.0);
        assert_eq!(loss_unlabeled(&[1.0, 0.0], &[0.5, 0.5]), 0.5);
    }

    #[test]
    fn reg_loss_examples() {
        let prior = uniform_prior(2);
        assert_eq!(loss_reg(&[vec![0.5, 0.5]], &prior).unwrap(), 0.0);
        assert_eq!(loss_reg(&[vec![0.0, 1.0], vec![1.0, 0.0]], &prior).unwrap(), 0.0);
        let oracle = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        let v = loss_reg(&[vec![0.25, 0.75]], &prior).unwrap();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.1438410).abs() < 1e-7);
        let clamp = loss_reg(&[vec![1.0, 0.0]], &prior).unwrap();
        assert!((clamp - (0.5 * (0.5f64 / 1.0).ln() + 0.5 * (0.5f64 / 1e-12).ln())).abs() < 1e-9);
        assert!(loss_reg(&[], &prior).is_err());
    }

    #[test]
    fn contrastive_examples() {
        assert_eq!(contrastive_loss(&[vec![1.0, 0.0], vec![2.0, 0.0]], 1.0).unwrap(), 0.0);
        let z = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]];
        let e = std::f64::consts::E;
        let oracle = -(e / (e + 2.0)).ln();
        let v = contrastive_loss(&z, 1.0).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 0.5514447).abs() < 1e-7);
        let swapped = vec![z[2].clone(), z[3].clone(), z[0].clone(), z[1].clone()];
        assert!((contrastive_loss(&swapped, 1.0).unwrap() - v).abs() < 1e-15);
        assert!(contrastive_loss(&z[..3], 1.0).is_err());
        assert!(contrastive_loss(&[vec![0.0, 0.0], vec![1.0, 0.0]], 1.0).is_err());
    }

    #[test]
    fn total_loss_examples() {
        let c = LoopConfig::default();
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.0, &c), 0.0);
        assert!((total_loss(1.0, 2.0, 3.0, 4.0, &c) - 64.1).abs() < 1e-12);
        let zero = LoopConfig {
            lambda_u: 0.0,
            lambda_r: 0.0,
            lambda_c: 0.0,
            ..c
        };
        assert_eq!(total_loss(1.5, 2.0, 3.0, 4.0, &zero), 1.5);
    }

    #[test]
    fn config_validation() {
        assert!(LoopConfig::default().validate().is_ok());
        for bad in [
            LoopConfig { rounds: 0, ..Default::default() },
            LoopConfig { lambda_u: -1.0, ..Default::default() },
            LoopConfig { beta_param: 0.0, ..Default::default() },
            LoopConfig { d_cutoff: 1.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    fn small(seed: u64) -> Dataset {
        let spec = SyntheticSpec {
            k: 4,
            dim: 12,
            per_class: 50,
            separation: 8.0,
            sigma: 1.0,
            seed,
        };
        generate_synthetic(&spec).unwrap()
    }

    #[test]
    fn noise_free_reaches_class_means() {
        let d = generate_synthetic(&SyntheticSpec::standard_benchmark(7)).unwrap();
        let r = run_loop(&d, &LoopConfig { rounds: 2, ..Default::default() }, None).unwrap();
        assert!(r.rounds.iter().all(|x| x.clean_purity == 1.0));
        for c in 0..d.k() {
            let members: Vec<usize> = (0..d.len()).filter(|&i| d.noisy_labels()[i] == c).collect();
            for j in 0..d.dim() {
                let m = members.iter().map(|&i| d.features().row(i)[j]).sum::<f64>() / members.len() as f64;
                for model in &r.models {
                    assert!((model.centroids[c][j] - m).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn loop_is_deterministic_and_cross_wired() {
        let d = corrupt_labels(&small(5), &make_transition(NoiseType::Uniform, 0.4, 4).unwrap(), 2).unwrap();
        let cfg = LoopConfig { rounds: 3, seed: 11, ..Default::default() };
        let a = run_loop(&d, &cfg, Some(&small(6))).unwrap();
        let b = run_loop(&d, &cfg, Some(&small(6))).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.rounds.len(), 3);
        for r in &a.rounds {
            for (m, mr) in r.models.iter().enumerate() {
                assert_ne!(mr.selected_with, m);
                assert!(mr.loss_x >= 0.0 && mr.loss_u >= 0.0 && mr.loss_r >= 0.0 && mr.loss_c >= 0.0);
            }
        }
        assert!(a.test_accuracy.unwrap() > 0.9);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("round,method,clean_purity,clean_recall,clean_size,total_loss\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn swapping_seeds_swaps_trajectories() {
        let d = corrupt_labels(&small(8), &make_transition(NoiseType::Uniform, 0.3, 4).unwrap(), 4).unwrap();
        let cfg = LoopConfig { rounds: 3, model_seeds: Some([17, 99]), ..Default::default() };
        let swapped = LoopConfig { model_seeds: Some([99, 17]), ..cfg.clone() };
        let a = run_loop(&d, &cfg, None).unwrap();
        let b = run_loop(&d, &swapped, None).unwrap();
        for (ra, rb) in a.rounds.iter().zip(&b.rounds) {
            assert_eq!(ra.models[0].total_loss, rb.models[1].total_loss);
            assert_eq!(ra.models[1].clean_size, rb.models[0].clean_size);
            assert_eq!(ra.clean_purity, rb.clean_purity);
            assert_eq!(ra.total_loss, rb.total_loss);
            assert_eq!(ra.method, rb.method);
        }
        assert_eq!(a.models[0], b.models[1]);
    }

    #[test]
    fn requires_ground_truth() {
        let d = small(1).without_true_labels();
        assert!(run_loop(&d, &LoopConfig::default(), None).is_err());
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.01f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn predictions_normalized(x in proptest::collection::vec(-5.0f64..5.0, 4), t in 0.01f64..2.0) {
            prop_assume!(x.iter().any(|v| v.abs() > 1e-6));
            let c = fm(&[vec![1.0, 0.5, 0.0, 0.0], vec![0.0, 1.0, -1.0, 0.2], vec![0.3, 0.0, 0.0, 2.0]]);
            let m = fit_prototypes(&c, &[0, 1, 2], None, 3, t, None).unwrap();
            let p = predict_soft(&m, &x).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn mixup_dominated_by_first((p1, p2) in (simplex(3), simplex(3)), seed in any::<u64>(), beta in 0.1f64..10.0) {
            let (x, pm) = mixup(&[1.0], &p1, &[0.0], &p2, beta, seed).unwrap();
            prop_assert!(x[0] >= 0.5 && x[0] <= 1.0);
            prop_assert!((pm.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn losses_non_negative((p, q) in (simplex(5), simplex(5))) {
            prop_assert!(loss_labeled(&p, &q) >= 0.0);
            prop_assert!(loss_unlabeled(&p, &q) >= 0.0);
            prop_assert!(loss_reg(&[p.clone(), q.clone()], &uniform_prior(5)).unwrap() >= 0.0);
        }
    }
}
