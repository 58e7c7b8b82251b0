//! Bagging-FIGS: FIGS models fit on bootstrap resamples, each restricted to a
//! fresh random feature subset at every iteration, with averaged predictions.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{FigsError, Result};
use crate::fit::{fit_with_sampler, FitConfig};
use crate::model::{FigsModel, FORMAT_VERSION};

/// Number of features offered to each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(d / 3)` for regression, `ceil(sqrt(d))` for classification.
    Auto,
    Third,
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize, task: Task) -> Result<usize> {
        let k = match self {
            MaxFeatures::Auto => match task {
                Task::Regression => d.div_ceil(3),
                Task::BinaryClassification => (d as f64).sqrt().ceil() as usize,
            },
            MaxFeatures::Third => d.div_ceil(3),
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::All => d,
            MaxFeatures::Count(k) => k,
        };
        if k == 0 || k > d {
            return Err(FigsError::InvalidConfig(format!("max_features resolves to {k} with {d} features")));
        }
        Ok(k)
    }
}

impl std::str::FromStr for MaxFeatures {
    type Err = FigsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(Self::Auto),
            "third" | "d/3" => Ok(Self::Third),
            "sqrt" => Ok(Self::Sqrt),
            "all" => Ok(Self::All),
            other => other
                .parse::<usize>()
                .map(Self::Count)
                .map_err(|_| FigsError::InvalidConfig(format!("unknown max_features rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub n_estimators: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub base: FitConfig,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { n_estimators: 100, max_features: MaxFeatures::Auto, bootstrap: true, base: FitConfig::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigsEnsemble {
    pub format_version: u32,
    pub config: EnsembleConfig,
    pub members: Vec<FigsModel>,
}

/// `n` indices drawn uniformly with replacement from `0..n`.
pub fn bootstrap_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// RNG stream of ensemble member `k`.
pub fn member_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

fn fit_member(data: &Dataset, config: &EnsembleConfig, k: usize, max_features: usize) -> Result<FigsModel> {
    let mut rng = member_rng(config.seed, k);
    let resampled;
    let train = if config.bootstrap {
        let idx = bootstrap_sample(data.n_samples(), &mut rng);
        resampled = data.select_rows(&idx)?;
        &resampled
    } else {
        data
    };
    let d = data.n_features();
    let mut sampler = |_: usize| -> Option<Vec<usize>> {
        (max_features < d).then(|| rand::seq::index::sample(&mut rng as &mut dyn RngCore, d, max_features).into_vec())
    };
    let (model, _) = fit_with_sampler(train, &config.base, &mut sampler)?;
    Ok(model.without_samples())
}

/// Fits `n_estimators` members in parallel. Member `k` draws its bootstrap
/// sample and feature subsets from [`member_rng`]`(seed, k)`, so the result
/// does not depend on scheduling.
pub fn fit_bagging_figs(data: &Dataset, config: &EnsembleConfig) -> Result<FigsEnsemble> {
    if config.n_estimators == 0 {
        return Err(FigsError::InvalidConfig("n_estimators must be >= 1".into()));
    }
    config.base.validate()?;
    let max_features = config.max_features.resolve(data.n_features(), config.base.task)?;
    let members = (0..config.n_estimators)
        .into_par_iter()
        .map(|k| fit_member(data, config, k, max_features))
        .collect::<Result<Vec<_>>>()?;
    Ok(FigsEnsemble { format_version: FORMAT_VERSION, config: config.clone(), members })
}

impl FigsEnsemble {
    pub fn task(&self) -> Task {
        self.config.base.task
    }

    /// Mean of member raw sums.
    pub fn predict_raw(&self, x: &[f64]) -> Result<f64> {
        let mut sum = 0.0;
        for m in &self.members {
            sum += m.predict_raw(x)?;
        }
        Ok(sum / self.members.len() as f64)
    }

    /// Mean of member predictions on the output scale (clamped
    /// probabilities for classification).
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut sum = 0.0;
        for m in &self.members {
            sum += m.predict(x)?;
        }
        Ok(sum / self.members.len() as f64)
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        data.rows().map(|x| self.predict(x)).collect()
    }
}

/// Arithmetic mean of member predictions at `x`.
pub fn predict_ensemble(ensemble: &FigsEnsemble, x: &[f64]) -> Result<f64> {
    ensemble.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::fit_figs;
    use std::collections::HashSet;

    fn data(n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
        let y = rows.iter().map(|r| r[0] + 2.0 * r[1] * r[2] + (r[3] > 0.5) as u8 as f64).collect();
        Dataset::from_rows(&rows, y).unwrap()
    }

    #[test]
    fn bootstrap_of_one_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(bootstrap_sample(1, &mut rng), vec![0]);
    }

    #[test]
    fn bootstrap_unique_fraction_near_one_minus_inv_e() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let idx = bootstrap_sample(n, &mut rng);
        assert!(idx.iter().all(|&i| i < n));
        let unique = idx.iter().collect::<HashSet<_>>().len() as f64 / n as f64;
        assert!((unique - (1.0 - (-1.0f64).exp())).abs() < 0.02, "{unique}");
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let a = bootstrap_sample(50, &mut member_rng(3, 2));
        let b = bootstrap_sample(50, &mut member_rng(3, 2));
        assert_eq!(a, b);
        assert_ne!(a, bootstrap_sample(50, &mut member_rng(3, 1)));
    }

    #[test]
    fn max_features_rules() {
        assert_eq!(MaxFeatures::Auto.resolve(9, Task::BinaryClassification).unwrap(), 3);
        assert_eq!(MaxFeatures::Auto.resolve(10, Task::Regression).unwrap(), 4);
        assert_eq!(MaxFeatures::Sqrt.resolve(10, Task::Regression).unwrap(), 4);
        assert!(MaxFeatures::Count(11).resolve(10, Task::Regression).is_err());
        assert_eq!("sqrt".parse::<MaxFeatures>().unwrap(), MaxFeatures::Sqrt);
        assert_eq!("5".parse::<MaxFeatures>().unwrap(), MaxFeatures::Count(5));
    }

    #[test]
    fn degenerate_ensemble_is_plain_figs() {
        let ds = data(150);
        let base = FitConfig::regression(8);
        let cfg = EnsembleConfig { n_estimators: 1, bootstrap: false, max_features: MaxFeatures::All, base: base.clone(), seed: 5 };
        let ens = fit_bagging_figs(&ds, &cfg).unwrap();
        assert!(ens.members[0].same_structure(&fit_figs(&ds, &base).unwrap()));
        let x = ds.row(3);
        assert_eq!(ens.predict(x).unwrap(), fit_figs(&ds, &base).unwrap().predict(x).unwrap());
    }

    #[test]
    fn members_respect_feature_subsets_and_differ() {
        let ds = data(150);
        let cfg = EnsembleConfig { n_estimators: 4, base: FitConfig::regression(5), seed: 1, ..Default::default() };
        let ens = fit_bagging_figs(&ds, &cfg).unwrap();
        assert_eq!(ens.members.len(), 4);
        assert!(!ens.members[0].same_structure(&ens.members[1]));
    }

    #[test]
    fn prediction_is_member_mean_and_order_free() {
        let ds = data(120);
        let cfg = EnsembleConfig { n_estimators: 6, base: FitConfig::regression(4), seed: 2, ..Default::default() };
        let mut ens = fit_bagging_figs(&ds, &cfg).unwrap();
        let x = ds.row(0);
        let mean: f64 = ens.members.iter().map(|m| m.predict(x).unwrap()).sum::<f64>() / 6.0;
        let p = ens.predict(x).unwrap();
        assert!((p - mean).abs() < 1e-12);
        ens.members.reverse();
        assert!((ens.predict(x).unwrap() - p).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let ds = data(80);
        let cfg = EnsembleConfig { n_estimators: 3, base: FitConfig::regression(3), seed: 9, ..Default::default() };
        let ens = fit_bagging_figs(&ds, &cfg).unwrap();
        let back: FigsEnsemble = serde_json::from_str(&serde_json::to_string(&ens).unwrap()).unwrap();
        assert_eq!(back.config, ens.config);
        for (a, b) in back.members.iter().zip(&ens.members) {
            assert!(a.same_structure(b));
        }
    }
}
