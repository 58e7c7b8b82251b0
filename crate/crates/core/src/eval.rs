//! Metrics and model diagnostics.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{FigsError, Result};
use crate::model::FigsModel;

/// Sensitivity floors used for clinical decision instruments.
pub const DEFAULT_SENSITIVITY_LEVELS: [f64; 4] = [0.92, 0.94, 0.96, 0.98];

/// Label-flip fractions used for the stability analysis.
pub const PERTURBATION_GRID: [f64; 3] = [0.01, 0.025, 0.05];

fn class_counts(labels: &[f64]) -> Result<(u64, u64)> {
    let mut pos = 0u64;
    let mut neg = 0u64;
    for &y in labels {
        if y == 1.0 {
            pos += 1;
        } else if y == 0.0 {
            neg += 1;
        } else {
            return Err(FigsError::InvalidData("labels must be 0 or 1".into()));
        }
    }
    if pos == 0 || neg == 0 {
        return Err(FigsError::SingleClass);
    }
    Ok((pos, neg))
}

fn check_scores(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(FigsError::DimensionMismatch { expected: labels.len(), got: scores.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(FigsError::NonFinite("scores"));
    }
    Ok(())
}

/// Area under the ROC curve, `P(s+ > s-) + P(s+ = s-) / 2`, from exact pair counts.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_scores(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut concordant, mut ties, mut neg_below) = (0u128, 0u128, 0u128);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut p, mut n) = (0u128, 0u128);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1.0 {
                p += 1;
            } else {
                n += 1;
            }
            i += 1;
        }
        concordant += p * neg_below;
        ties += p * n;
        neg_below += n;
    }
    Ok((2 * concordant + ties) as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// Coefficient of determination `1 - SSE / SST`.
pub fn r2(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() || targets.is_empty() {
        return Err(FigsError::DimensionMismatch { expected: targets.len(), got: predictions.len() });
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let sst: f64 = targets.iter().map(|y| (y - mean) * (y - mean)).sum();
    if sst == 0.0 {
        return Err(FigsError::InvalidData("R^2 is undefined for constant targets".into()));
    }
    let sse: f64 = predictions.iter().zip(targets).map(|(p, y)| (y - p) * (y - p)).sum();
    Ok(1.0 - sse / sst)
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> f64 {
    predictions.iter().zip(targets).map(|(p, y)| (y - p) * (y - p)).sum::<f64>() / targets.len() as f64
}

/// Largest specificity over thresholds `t` (positive when `score >= t`)
/// whose sensitivity is at least `level`.
pub fn specificity_at_sensitivity(scores: &[f64], labels: &[f64], level: f64) -> Result<f64> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(FigsError::InvalidConfig(format!("sensitivity level {level} not in (0, 1]")));
    }
    check_scores(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1.0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // Sensitivity only grows as the threshold drops; the first qualifying
        // threshold has the best specificity.
        if tp as f64 / pos as f64 >= level {
            return Ok((neg - fp) as f64 / neg as f64);
        }
    }
    Ok(0.0)
}

/// Fraction of splits for which some other split uses the same feature with
/// a threshold within `tolerance`.
pub fn repeated_split_fraction(model: &FigsModel, tolerance: f64) -> f64 {
    repeated_split_fraction_of(&all_splits(model), tolerance)
}

fn all_splits(model: &FigsModel) -> Vec<(usize, f64)> {
    model.trees().iter().flat_map(|t| t.splits().map(|(_, f, th)| (f, th))).collect()
}

pub fn repeated_split_fraction_of(splits: &[(usize, f64)], tolerance: f64) -> f64 {
    if splits.is_empty() {
        return 0.0;
    }
    let repeated = splits
        .iter()
        .enumerate()
        .filter(|&(i, &(f, t))| {
            splits.iter().enumerate().any(|(j, &(g, u))| j != i && g == f && (t - u).abs() <= tolerance)
        })
        .count();
    repeated as f64 / splits.len() as f64
}

pub fn split_feature_set(model: &FigsModel) -> BTreeSet<usize> {
    model.split_features()
}

/// Jaccard similarity of two feature sets.
pub fn stability_score(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> Result<f64> {
    let union = a.union(b).count();
    if union == 0 {
        return Err(FigsError::InvalidData("stability of two empty feature sets is undefined".into()));
    }
    Ok(a.intersection(b).count() as f64 / union as f64)
}

/// Flips exactly `round(p * n)` binary labels chosen uniformly without replacement.
pub fn label_flip_perturbation<R: Rng + ?Sized>(data: &Dataset, p: f64, rng: &mut R) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&p) {
        return Err(FigsError::InvalidConfig(format!("flip fraction {p} not in [0, 1]")));
    }
    data.check_binary_targets()?;
    let n = data.n_samples();
    let k = (p * n as f64).round() as usize;
    let mut y = data.targets().to_vec();
    for i in rand::seq::index::sample(rng, n, k) {
        y[i] = 1.0 - y[i];
    }
    data.clone().with_targets(y)
}

/// Stability of `fit` under label flips: the Jaccard score between the
/// feature set fit on `data` and the set fit on each perturbed copy, one
/// copy per seed.
pub fn stability_scores<F>(data: &Dataset, p: f64, seeds: &[u64], fit: F) -> Result<Vec<f64>>
where
    F: Fn(&Dataset) -> Result<BTreeSet<usize>>,
{
    use rand::SeedableRng;
    let reference = fit(data)?;
    seeds
        .iter()
        .map(|&s| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
            let perturbed = label_flip_perturbation(data, p, &mut rng)?;
            stability_score(&reference, &fit(&perturbed)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub n_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    pub mse: f64,
    /// Keyed by the level formatted as a decimal, e.g. `"0.92"`.
    pub spec_at_sens: BTreeMap<String, f64>,
    pub repeated_split_fraction: f64,
    pub n_trees: usize,
    pub splits_per_tree: Vec<usize>,
}

impl EvalReport {
    /// Metrics for raw scores from any tree-sum predictor. `models` supplies
    /// the structure statistics (all members for an ensemble).
    pub fn from_scores(
        task: Task,
        raw_scores: &[f64],
        outputs: &[f64],
        targets: &[f64],
        levels: &[f64],
        models: &[&FigsModel],
    ) -> Result<Self> {
        let (auc, r2_value, spec) = match task {
            Task::BinaryClassification => {
                let auc = roc_auc(raw_scores, targets)?;
                let mut spec = BTreeMap::new();
                for &l in levels {
                    spec.insert(format!("{l}"), specificity_at_sensitivity(raw_scores, targets, l)?);
                }
                (Some(auc), None, spec)
            }
            Task::Regression => (None, Some(r2(outputs, targets)?), BTreeMap::new()),
        };
        let splits: Vec<(usize, f64)> = models.iter().flat_map(|m| all_splits(m)).collect();
        Ok(Self {
            task,
            n_samples: targets.len(),
            auc,
            r2: r2_value,
            mse: mse(outputs, targets),
            spec_at_sens: spec,
            repeated_split_fraction: if models.len() == 1 {
                repeated_split_fraction_of(&splits, 0.01)
            } else {
                models.iter().map(|m| repeated_split_fraction(m, 0.01)).sum::<f64>() / models.len().max(1) as f64
            },
            n_trees: models.iter().map(|m| m.n_trees()).sum(),
            splits_per_tree: models.iter().flat_map(|m| m.splits_per_tree()).collect(),
        })
    }
}

/// Evaluates a single model on `data`.
pub fn evaluate(model: &FigsModel, data: &Dataset, levels: &[f64]) -> Result<EvalReport> {
    let raw = model.predict_raw_dataset(data)?;
    let out: Vec<f64> = raw.iter().map(|&r| model.output_scale(r)).collect();
    EvalReport::from_scores(model.task(), &raw, &out, data.targets(), levels, &[model])
}
