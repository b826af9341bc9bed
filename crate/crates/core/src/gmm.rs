//! Two-component univariate Gaussian mixture fitted by EM.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_WEIGHT: f64 = 1e-12;
const ABSOLUTE_VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    First,
    Second,
}

impl Component {
    pub fn index(self) -> usize {
        match self {
            Component::First => 0,
            Component::Second => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Component::First => Component::Second,
            Component::Second => Component::First,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Absolute log-likelihood change below which EM stops.
    pub tolerance: f64,
    /// Ratio applied to the sample variance to get the variance floor.
    pub variance_floor_ratio: f64,
    /// Absolute floor; overrides the ratio when set.
    pub variance_floor: Option<f64>,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-6,
            variance_floor_ratio: 1e-6,
            variance_floor: None,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::validation("max_iterations must be >= 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::validation("tolerance must be > 0"));
        }
        if !(self.variance_floor_ratio > 0.0) {
            return Err(Error::validation("variance_floor_ratio must be > 0"));
        }
        if let Some(f) = self.variance_floor {
            if !(f > 0.0) {
                return Err(Error::validation("variance_floor must be > 0"));
            }
        }
        Ok(())
    }

    fn floor_for(&self, sample_variance: f64) -> f64 {
        self.variance_floor
            .unwrap_or_else(|| (self.variance_floor_ratio * sample_variance).max(ABSOLUTE_VARIANCE_FLOOR))
    }
}

/// Fitted mixture. Component order follows initialization: the first
/// component starts at the lower percentile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm1D {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// All inputs were identical; both components sit on that value.
    pub degenerate: bool,
}

/// Starting parameters for EM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmInit {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
}

impl GmmInit {
    /// Means at the 10th and 90th percentiles (min/max when those coincide),
    /// both variances at the sample variance, equal weights.
    pub fn percentile(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut lo = percentile(&sorted, 0.1);
        let mut hi = percentile(&sorted, 0.9);
        if lo == hi {
            lo = sorted[0];
            hi = sorted[sorted.len() - 1];
        }
        let var = population_variance(values);
        Self {
            weights: [0.5, 0.5],
            means: [lo, hi],
            variances: [var, var],
        }
    }

    pub fn swapped(self) -> Self {
        Self {
            weights: [self.weights[1], self.weights[0]],
            means: [self.means[1], self.means[0]],
            variances: [self.variances[1], self.variances[0]],
        }
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn population_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64
}

fn log_normal_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl Gmm1D {
    /// Posterior responsibilities `(p_first, p_second)` at `x`.
    pub fn posterior(&self, x: f64) -> (f64, f64) {
        let l1 = self.weights[0].ln() + log_normal_density(x, self.means[0], self.variances[0]);
        let l2 = self.weights[1].ln() + log_normal_density(x, self.means[1], self.variances[1]);
        // logistic form keeps p1 + p2 == 1 to rounding
        let d = l1 - l2;
        let p1 = if d >= 0.0 {
            1.0 / (1.0 + (-d).exp())
        } else {
            let e = d.exp();
            e / (1.0 + e)
        };
        (p1, 1.0 - p1)
    }

    pub fn posterior_of(&self, component: Component, x: f64) -> f64 {
        let (p1, p2) = self.posterior(x);
        match component {
            Component::First => p1,
            Component::Second => p2,
        }
    }

    /// Component with the strictly greater mean. Ties resolve to the first
    /// component and set the flag.
    pub fn higher_mean_component(&self) -> (Component, bool) {
        match self.means[0].partial_cmp(&self.means[1]) {
            Some(std::cmp::Ordering::Greater) => (Component::First, false),
            Some(std::cmp::Ordering::Less) => (Component::Second, false),
            _ => (Component::First, true),
        }
    }

    pub fn lower_mean_component(&self) -> (Component, bool) {
        let (c, tie) = self.higher_mean_component();
        if tie {
            (Component::First, true)
        } else {
            (c.other(), false)
        }
    }

    /// Data log-likelihood under this mixture.
    pub fn log_likelihood_of(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .map(|&x| {
                log_sum_exp2(
                    self.weights[0].ln() + log_normal_density(x, self.means[0], self.variances[0]),
                    self.weights[1].ln() + log_normal_density(x, self.means[1], self.variances[1]),
                )
            })
            .sum()
    }

    /// Mixture density at `x`.
    pub fn density(&self, x: f64) -> f64 {
        (0..2)
            .map(|c| self.weights[c] * log_normal_density(x, self.means[c], self.variances[c]).exp())
            .sum()
    }

    /// Whether the fitted density has two modes, i.e. dips somewhere between
    /// the component means. A skewed single mode fitted with two components
    /// does not.
    pub fn has_two_modes(&self) -> bool {
        const GRID: usize = 1024;
        let (lo, hi) = if self.means[0] <= self.means[1] {
            (self.means[0], self.means[1])
        } else {
            (self.means[1], self.means[0])
        };
        if !(hi > lo) {
            return false;
        }
        let f: Vec<f64> = (0..=GRID)
            .map(|i| self.density(lo + (hi - lo) * i as f64 / GRID as f64))
            .collect();
        let (dip_at, dip) = f
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, 0.0));
        if dip_at == 0 || dip_at == GRID {
            return false;
        }
        let left = f[..dip_at].iter().copied().fold(0.0, f64::max);
        let right = f[dip_at + 1..].iter().copied().fold(0.0, f64::max);
        dip < left * (1.0 - 1e-9) && dip < right * (1.0 - 1e-9)
    }

    /// Whether the two components describe distinct modes rather than a
    /// split of one: the mixture must beat a single Gaussian on BIC and its
    /// density must have two modes.
    pub fn is_bimodal(&self, values: &[f64]) -> bool {
        if self.degenerate || values.len() < 2 {
            return false;
        }
        let n = values.len() as f64;
        let var = population_variance(values);
        if var == 0.0 {
            return false;
        }
        let single_ll = -0.5 * n * ((2.0 * PI * var).ln() + 1.0);
        let bic_single = 2.0 * n.ln() - 2.0 * single_ll;
        let bic_mixture = 5.0 * n.ln() - 2.0 * self.log_likelihood;
        bic_mixture < bic_single && self.has_two_modes()
    }
}

/// Fits a two-component mixture with the default percentile initialization.
pub fn fit_gmm(values: &[f64], config: &EmConfig) -> Result<Gmm1D> {
    fit_gmm_traced(values, config).map(|(g, _)| g)
}

/// Same as [`fit_gmm`], also returning the log-likelihood after
/// initialization and after every M-step.
pub fn fit_gmm_traced(values: &[f64], config: &EmConfig) -> Result<(Gmm1D, Vec<f64>)> {
    check_values(values)?;
    fit_gmm_from(values, GmmInit::percentile(values), config)
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::TooFewSamples(values.len()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(format!("non-finite value {v} passed to EM")));
    }
    Ok(())
}

/// Runs EM from explicit starting parameters.
pub fn fit_gmm_from(values: &[f64], init: GmmInit, config: &EmConfig) -> Result<(Gmm1D, Vec<f64>)> {
    check_values(values)?;
    config.validate()?;
    let sample_var = population_variance(values);
    let floor = config.floor_for(sample_var);
    let n = values.len();

    if values.iter().all(|&v| v == values[0]) {
        let g = Gmm1D {
            weights: [0.5, 0.5],
            means: [values[0]; 2],
            variances: [floor; 2],
            log_likelihood: n as f64 * log_normal_density(0.0, 0.0, floor),
            iterations: 0,
            converged: true,
            degenerate: true,
        };
        let ll = g.log_likelihood;
        return Ok((g, vec![ll]));
    }

    let mut g = Gmm1D {
        weights: init.weights,
        means: init.means,
        variances: [init.variances[0].max(floor), init.variances[1].max(floor)],
        log_likelihood: f64::NEG_INFINITY,
        iterations: 0,
        converged: false,
        degenerate: false,
    };
    let mut resp = vec![0.0; n];
    let mut ll = e_step(&g, values, &mut resp);
    let mut trace = vec![ll];

    for it in 1..=config.max_iterations {
        m_step(&mut g, values, &resp, floor);
        let next = e_step(&g, values, &mut resp);
        trace.push(next);
        g.iterations = it;
        let delta = next - ll;
        ll = next;
        if delta.abs() < config.tolerance {
            g.converged = true;
            break;
        }
    }
    g.log_likelihood = ll;
    Ok((g, trace))
}

/// Fills `resp` with first-component responsibilities; returns the
/// log-likelihood of the current parameters.
fn e_step(g: &Gmm1D, values: &[f64], resp: &mut [f64]) -> f64 {
    let lw = [g.weights[0].ln(), g.weights[1].ln()];
    let mut ll = 0.0;
    for (r, &x) in resp.iter_mut().zip(values) {
        let a = lw[0] + log_normal_density(x, g.means[0], g.variances[0]);
        let b = lw[1] + log_normal_density(x, g.means[1], g.variances[1]);
        let lse = log_sum_exp2(a, b);
        *r = (a - lse).exp();
        ll += lse;
    }
    ll
}

fn m_step(g: &mut Gmm1D, values: &[f64], resp: &[f64], floor: f64) {
    let n = values.len() as f64;
    let n1: f64 = resp.iter().sum();
    let n2 = n - n1;
    for (c, mass) in [(0usize, n1), (1usize, n2)] {
        if mass <= f64::MIN_POSITIVE {
            // empty component: keep its location, shrink its weight
            continue;
        }
        let w = |r: f64| if c == 0 { r } else { 1.0 - r };
        let mean = values.iter().zip(resp).map(|(&x, &r)| w(r) * x).sum::<f64>() / mass;
        let var = values
            .iter()
            .zip(resp)
            .map(|(&x, &r)| w(r) * (x - mean).powi(2))
            .sum::<f64>()
            / mass;
        g.means[c] = mean;
        g.variances[c] = var.max(floor);
    }
    let w1 = (n1 / n).clamp(MIN_WEIGHT, 1.0 - MIN_WEIGHT);
    g.weights = [w1, 1.0 - w1];
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn two_blobs(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Normal::new(0.0, 1.0).unwrap();
        let b = Normal::new(6.0, 1.0).unwrap();
        let mut v: Vec<f64> = (0..500).map(|_| a.sample(&mut rng)).collect();
        v.extend((0..500).map(|_| b.sample(&mut rng)));
        v
    }

    #[test]
    fn recovers_separated_mixture() {
        let v = two_blobs(5);
        // independent reference: per-half sample means
        let ref_lo = mean(&v[..500]);
        let ref_hi = mean(&v[500..]);
        let (g, trace) = fit_gmm_traced(&v, &EmConfig::default()).unwrap();
        let (hi, _) = g.higher_mean_component();
        let lo = hi.other();
        assert!((g.means[lo.index()] - 0.0).abs() < 0.2);
        assert!((g.means[hi.index()] - 6.0).abs() < 0.2);
        assert!((g.means[lo.index()] - ref_lo).abs() < 0.05);
        assert!((g.means[hi.index()] - ref_hi).abs() < 0.05);
        assert!((g.weights[0] - 0.5).abs() < 0.05);
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        assert!(g.converged);
        assert!(g.is_bimodal(&v));
    }

    #[test]
    fn two_point_masses() {
        let v = [0.0, 0.0, 0.0, 10.0, 10.0, 10.0];
        let cfg = EmConfig::default();
        let g = fit_gmm(&v, &cfg).unwrap();
        let mut means = g.means;
        means.sort_by(f64::total_cmp);
        assert!(means[0].abs() < 1e-6 && (means[1] - 10.0).abs() < 1e-6);
        let floor = cfg.floor_for(population_variance(&v));
        assert!(g.variances.iter().all(|&s| (s - floor).abs() < 1e-12));
        assert!(!g.degenerate);
    }

    #[test]
    fn constant_input_is_degenerate() {
        let g = fit_gmm(&[3.0; 7], &EmConfig::default()).unwrap();
        assert!(g.degenerate && g.converged);
        assert_eq!(g.means, [3.0, 3.0]);
        assert!(g.variances[0] > 0.0);
        assert!(!g.is_bimodal(&[3.0; 7]));
    }

    #[test]
    fn too_few_or_non_finite() {
        assert!(matches!(fit_gmm(&[1.0], &EmConfig::default()), Err(Error::TooFewSamples(1))));
        assert!(fit_gmm(&[1.0, f64::NAN], &EmConfig::default()).is_err());
        let bad = EmConfig {
            tolerance: 0.0,
            ..EmConfig::default()
        };
        assert!(fit_gmm(&[1.0, 2.0], &bad).is_err());
    }

    #[test]
    fn posterior_examples() {
        let g = Gmm1D {
            weights: [0.5, 0.5],
            means: [0.0, 10.0],
            variances: [1.0, 1.0],
            log_likelihood: 0.0,
            iterations: 0,
            converged: true,
            degenerate: false,
        };
        assert!(g.posterior(0.0).0 > 0.99);
        let (a, b) = g.posterior(5.0);
        assert!((a - 0.5).abs() < 1e-12 && (b - 0.5).abs() < 1e-12);
        let swapped = Gmm1D {
            means: [10.0, 0.0],
            ..g.clone()
        };
        let (p1, p2) = g.posterior(2.5);
        let (q1, q2) = swapped.posterior(2.5);
        assert!((p1 - q2).abs() < 1e-15 && (p2 - q1).abs() < 1e-15);
    }

    #[test]
    fn higher_mean_examples() {
        let mut g = fit_gmm(&[0.0, 1.0, 5.0, 6.0], &EmConfig::default()).unwrap();
        g.means = [2.0, 5.0];
        assert_eq!(g.higher_mean_component(), (Component::Second, false));
        g.means = [5.0, 2.0];
        assert_eq!(g.higher_mean_component(), (Component::First, false));
        g.means = [4.0, 4.0];
        assert_eq!(g.higher_mean_component(), (Component::First, true));
    }

    #[test]
    fn unimodal_sample_is_not_bimodal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = Normal::new(60.0, 5.0).unwrap();
        let v: Vec<f64> = (0..200).map(|_| n.sample(&mut rng)).collect();
        let g = fit_gmm(&v, &EmConfig::default()).unwrap();
        assert!(!g.is_bimodal(&v));
    }

    fn sorted_triples(g: &Gmm1D) -> Vec<(f64, f64, f64)> {
        let mut t = vec![
            (g.means[0], g.weights[0], g.variances[0]),
            (g.means[1], g.weights[1], g.variances[1]),
        ];
        t.sort_by(|a, b| a.0.total_cmp(&b.0));
        t
    }

    #[test]
    fn swapped_initialization_gives_same_mixture() {
        let v = two_blobs(9);
        let cfg = EmConfig {
            tolerance: 1e-10,
            max_iterations: 500,
            ..EmConfig::default()
        };
        let init = GmmInit::percentile(&v);
        let (a, _) = fit_gmm_from(&v, init, &cfg).unwrap();
        let (b, _) = fit_gmm_from(&v, init.swapped(), &cfg).unwrap();
        for (x, y) in sorted_triples(&a).iter().zip(sorted_triples(&b)) {
            assert!((x.0 - y.0).abs() < 1e-6 && (x.1 - y.1).abs() < 1e-6 && (x.2 - y.2).abs() < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn log_likelihood_is_monotone(v in proptest::collection::vec(-50.0f64..50.0, 2..60)) {
            let (_, trace) = fit_gmm_traced(&v, &EmConfig::default()).unwrap();
            for w in trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
            }
        }

        #[test]
        fn shift_equivariance(seed in 0u64..1000, shift in -100.0f64..100.0) {
            let v = two_blobs(seed);
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let cfg = EmConfig { tolerance: 1e-10, max_iterations: 500, ..EmConfig::default() };
            let a = fit_gmm(&v, &cfg).unwrap();
            let b = fit_gmm(&shifted, &cfg).unwrap();
            for c in 0..2 {
                prop_assert!((a.means[c] + shift - b.means[c]).abs() < 1e-6);
                prop_assert!((a.variances[c] - b.variances[c]).abs() < 1e-6);
                prop_assert!((a.weights[c] - b.weights[c]).abs() < 1e-6);
            }
        }

        #[test]
        fn scaling_preserves_higher_component(seed in 0u64..1000, scale in 0.01f64..100.0) {
            let v = two_blobs(seed);
            let scaled: Vec<f64> = v.iter().map(|x| x * scale).collect();
            let a = fit_gmm(&v, &EmConfig::default()).unwrap();
            let b = fit_gmm(&scaled, &EmConfig::default()).unwrap();
            prop_assert_eq!(a.higher_mean_component(), b.higher_mean_component());
        }

        #[test]
        fn posteriors_sum_to_one(x in -1e3f64..1e3, m1 in -10.0f64..10.0, m2 in -10.0f64..10.0, w in 0.01f64..0.99) {
            let g = Gmm1D {
                weights: [w, 1.0 - w],
                means: [m1, m2],
                variances: [0.5, 2.0],
                log_likelihood: 0.0, iterations: 0, converged: true, degenerate: false,
            };
            let (a, b) = g.posterior(x);
            prop_assert!((a + b - 1.0).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
