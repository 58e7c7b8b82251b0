//! Tabular training data.

use serde::{Deserialize, Serialize};

use crate::error::{FigsError, Result};

/// Learning task. Binary classification encodes labels as 0/1 and is fitted
/// with the variance criterion on residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryClassification,
}

/// Dense feature matrix (row-major) with targets and optional sample weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_samples: usize,
    n_features: usize,
    targets: Vec<f64>,
    weights: Option<Vec<f64>>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from rows. All rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(FigsError::InvalidData(format!(
                    "row {i} has {} features, expected {d}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(rows.len(), d, flat, targets)
    }

    /// Builds a dataset from a row-major buffer of `n_samples * n_features` values.
    pub fn from_flat(
        n_samples: usize,
        n_features: usize,
        features: Vec<f64>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        if n_samples == 0 {
            return Err(FigsError::InvalidData("dataset has no samples".into()));
        }
        if features.len() != n_samples * n_features {
            return Err(FigsError::DimensionMismatch {
                expected: n_samples * n_features,
                got: features.len(),
            });
        }
        if targets.len() != n_samples {
            return Err(FigsError::DimensionMismatch { expected: n_samples, got: targets.len() });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(FigsError::NonFinite("features"));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(FigsError::NonFinite("targets"));
        }
        Ok(Self { features, n_samples, n_features, targets, weights: None, feature_names: None })
    }

    /// Attaches per-sample weights. Weights must be finite, non-negative and have a positive sum.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        validate_weights(&weights, self.n_samples)?;
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn without_weights(mut self) -> Self {
        self.weights = None;
        self
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(FigsError::DimensionMismatch { expected: self.n_features, got: names.len() });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    /// Replaces the target vector, keeping features and weights.
    pub fn with_targets(mut self, targets: Vec<f64>) -> Result<Self> {
        if targets.len() != self.n_samples {
            return Err(FigsError::DimensionMismatch { expected: self.n_samples, got: targets.len() });
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(FigsError::NonFinite("targets"));
        }
        self.targets = targets;
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    #[inline]
    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.features[i * self.n_features + feature]
    }

    /// Weight of sample `i`; 1 when the dataset is unweighted.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0,
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features.max(1)).take(self.n_samples)
    }

    /// Weighted mean of the targets.
    pub fn weighted_target_mean(&self) -> f64 {
        let (mut sw, mut swy) = (0.0, 0.0);
        for (i, y) in self.targets.iter().enumerate() {
            let w = self.weight(i);
            sw += w;
            swy += w * y;
        }
        swy / sw
    }

    /// Row subset (repeats allowed), carrying targets, weights and names.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(FigsError::InvalidData("row selection is empty".into()));
        }
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n_samples {
                return Err(FigsError::InvalidData(format!("row index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        let weights = match &self.weights {
            Some(w) => {
                let sel: Vec<f64> = indices.iter().map(|&i| w[i]).collect();
                validate_weights(&sel, indices.len())?;
                Some(sel)
            }
            None => None,
        };
        Ok(Self {
            features,
            n_samples: indices.len(),
            n_features: self.n_features,
            targets,
            weights,
            feature_names: self.feature_names.clone(),
        })
    }

    /// Checks that targets are all 0 or 1.
    pub fn check_binary_targets(&self) -> Result<()> {
        if self.targets.iter().all(|&y| y == 0.0 || y == 1.0) {
            Ok(())
        } else {
            Err(FigsError::InvalidData("classification targets must be 0 or 1".into()))
        }
    }
}

fn validate_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(FigsError::DimensionMismatch { expected: n, got: weights.len() });
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(FigsError::NonFinite("weights"));
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(FigsError::InvalidData("weights must be non-negative".into()));
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(FigsError::InvalidData("weights must have a positive sum".into()));
    }
    Ok(())
}
