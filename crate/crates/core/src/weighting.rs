//! Group-probability weighting (G-FIGS) and class weights.
//!
//! Stage one estimates `P(G = g | x)` with an L2-regularized logistic
//! regression (or takes externally computed probabilities); stage two fits
//! one FIGS model per group on all samples, weighted by those probabilities.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{FigsError, Result};
use crate::fit::{fit_figs, FitConfig};
use crate::model::FigsModel;

/// Dataset with one discrete group label per sample.
#[derive(Debug, Clone)]
pub struct GroupedDataset {
    base: Dataset,
    groups: Vec<String>,
}

impl GroupedDataset {
    /// Every label must occur at least twice.
    pub fn new(base: Dataset, groups: Vec<String>) -> Result<Self> {
        if groups.len() != base.n_samples() {
            return Err(FigsError::DimensionMismatch { expected: base.n_samples(), got: groups.len() });
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for g in &groups {
            *counts.entry(g.as_str()).or_default() += 1;
        }
        if let Some((g, _)) = counts.iter().find(|(_, &c)| c < 2) {
            return Err(FigsError::InvalidData(format!("group `{g}` has fewer than 2 samples")));
        }
        Ok(Self { base, groups })
    }

    pub fn base(&self) -> &Dataset {
        &self.base
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    /// Distinct labels in sorted order.
    pub fn labels(&self) -> Vec<String> {
        self.groups.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn indicator(&self, group: &str) -> Vec<f64> {
        self.groups.iter().map(|g| f64::from(u8::from(g == group))).collect()
    }

    /// Swaps the base dataset (same number of samples).
    pub fn with_base(&self, base: Dataset) -> Result<Self> {
        Self::new(base, self.groups.clone())
    }
}

/// Logistic membership model settings. `c` is the inverse regularization
/// strength: the penalty is `||beta||^2 / (2c)` on standardized coefficients
/// (intercept unpenalized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MembershipConfig {
    pub c: f64,
    pub excluded_features: Vec<usize>,
    pub max_iterations: usize,
    pub tolerance: f64,
}

/// Inverse regularization strengths used for the logistic membership model.
pub const MEMBERSHIP_C_GRID: [f64; 2] = [2.8, 0.1];

impl Default for MembershipConfig {
    fn default() -> Self {
        Self { c: MEMBERSHIP_C_GRID[0], excluded_features: Vec::new(), max_iterations: 100, tolerance: 1e-8 }
    }
}

/// Fitted `P(G = target_group | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipModel {
    pub target_group: String,
    /// Every group observed at fit time, sorted.
    pub groups: Vec<String>,
    pub c: f64,
    pub intercept: f64,
    /// Coefficients on the standardized scale of `used_features`.
    pub coefficients: Vec<f64>,
    pub used_features: Vec<usize>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub excluded_features: Vec<usize>,
    pub n_features: usize,
    pub iterations: usize,
    /// Penalized negative log-likelihood at the start and after every
    /// accepted step (later entries accumulate the exact per-step changes).
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl MembershipModel {
    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(FigsError::DimensionMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(self.intercept
            + self
                .used_features
                .iter()
                .enumerate()
                .map(|(j, &f)| self.coefficients[j] * (x[f] - self.means[j]) / self.scales[j])
                .sum::<f64>())
    }

    /// Probability of the target group.
    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        self.linear_predictor(x).map(sigmoid)
    }

    /// `P(G = group | x)`. For two groups the non-target probability is the
    /// exact complement of the target probability.
    pub fn group_probability(&self, x: &[f64], group: &str) -> Result<f64> {
        if group == self.target_group {
            return self.probability(x);
        }
        if self.groups.len() == 2 && self.groups.iter().any(|g| g == group) {
            return self.probability(x).map(|p| 1.0 - p);
        }
        Err(FigsError::UnknownGroup(group.to_string()))
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `softplus(z + dz) - softplus(z)` without cancellation.
#[inline]
fn softplus_change(z: f64, dz: f64) -> f64 {
    let exact = if dz >= 0.0 {
        (sigmoid(z) * dz.exp_m1()).ln_1p()
    } else {
        // Mirror form keeps the log1p argument non-negative.
        dz + (sigmoid(-z) * (-dz).exp_m1()).ln_1p()
    };
    if exact.is_finite() {
        exact
    } else {
        // Steps large enough to overflow are far from any cancellation.
        softplus(z + dz) - softplus(z)
    }
}

/// Fits `P(G = target_group | x)` by Newton-IRLS with step halving on
/// standardized, non-excluded features.
pub fn fit_membership_model(grouped: &GroupedDataset, target_group: &str, config: &MembershipConfig) -> Result<MembershipModel> {
    if !(config.c.is_finite() && config.c > 0.0) {
        return Err(FigsError::InvalidConfig("membership c must be positive".into()));
    }
    let groups = grouped.labels();
    if groups.len() < 2 {
        return Err(FigsError::InvalidData("membership model needs two or more groups".into()));
    }
    if !groups.iter().any(|g| g == target_group) {
        return Err(FigsError::UnknownGroup(target_group.to_string()));
    }
    let data = grouped.base();
    let d = data.n_features();
    if let Some(&f) = config.excluded_features.iter().find(|&&f| f >= d) {
        return Err(FigsError::InvalidConfig(format!("excluded feature {f} out of range")));
    }
    let excluded: BTreeSet<usize> = config.excluded_features.iter().copied().collect();
    let used: Vec<usize> = (0..d).filter(|f| !excluded.contains(f)).collect();
    let n = data.n_samples();
    let nf = n as f64;

    let mut means = Vec::with_capacity(used.len());
    let mut scales = Vec::with_capacity(used.len());
    for &f in &used {
        let mean = (0..n).map(|i| data.value(i, f)).sum::<f64>() / nf;
        let var = (0..n).map(|i| (data.value(i, f) - mean).powi(2)).sum::<f64>() / nf;
        means.push(mean);
        scales.push(if var > 0.0 { var.sqrt() } else { 1.0 });
    }
    let p = used.len() + 1;
    let design = DMatrix::from_fn(n, p, |i, j| {
        if j == 0 {
            1.0
        } else {
            (data.value(i, used[j - 1]) - means[j - 1]) / scales[j - 1]
        }
    });
    let y = DVector::from_vec(grouped.indicator(target_group));
    let lambda = 1.0 / config.c;
    let objective = |beta: &DVector<f64>| -> f64 {
        let z = &design * beta;
        let nll: f64 = z.iter().zip(y.iter()).map(|(&z, &y)| softplus(z) - y * z).sum();
        nll + 0.5 * lambda * beta.rows(1, p - 1).norm_squared()
    };
    // objective(next) - objective(beta), summed termwise so that it stays
    // accurate when the two are equal to many digits.
    let objective_change = |beta: &DVector<f64>, next: &DVector<f64>| -> f64 {
        let z = &design * beta;
        let dz = &design * (next - beta);
        let nll: f64 =
            z.iter().zip(dz.iter()).zip(y.iter()).map(|((&z, &dz), &y)| softplus_change(z, dz) - y * dz).sum();
        let penalty: f64 = (1..p).map(|j| (next[j] - beta[j]) * (next[j] + beta[j])).sum();
        nll + 0.5 * lambda * penalty
    };

    let mut beta = DVector::zeros(p);
    let prevalence = y.sum() / nf;
    beta[0] = (prevalence / (1.0 - prevalence)).ln();
    let mut obj = objective(&beta);
    let mut trace = vec![obj];
    let mut iterations = 0;
    for _ in 0..config.max_iterations {
        iterations += 1;
        let z = &design * &beta;
        let probs: Vec<f64> = z.iter().map(|&z| sigmoid(z)).collect();
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..n {
            let row = design.row(i);
            let r = probs[i] - y[i];
            let w = probs[i] * (1.0 - probs[i]);
            for a in 0..p {
                grad[a] += row[a] * r;
                let wa = w * row[a];
                for b in a..p {
                    hess[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        for a in 1..p {
            grad[a] += lambda * beta[a];
            hess[(a, a)] += lambda;
        }
        let chol = hess.cholesky().ok_or(FigsError::Singular("membership IRLS"))?;
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &beta - &step * t;
            let change = objective_change(&beta, &candidate);
            if change <= 0.0 {
                accepted = Some((candidate, obj + change));
                break;
            }
            t *= 0.5;
        }
        let Some((next, next_obj)) = accepted else { break };
        let change = (&next - &beta).amax();
        beta = next;
        obj = next_obj;
        trace.push(obj);
        if change < config.tolerance {
            break;
        }
    }

    Ok(MembershipModel {
        target_group: target_group.to_string(),
        groups,
        c: config.c,
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        used_features: used,
        means,
        scales,
        excluded_features: excluded.into_iter().collect(),
        n_features: d,
        iterations,
        objective_trace: trace,
    })
}

/// `w_i = P(G = group | x_i)` for every sample of `data`.
pub fn membership_weights(model: &MembershipModel, data: &Dataset, group: &str) -> Result<Vec<f64>> {
    data.rows().map(|x| model.group_probability(x, group)).collect()
}

/// Positives weighted by the inverse positive prevalence, negatives by 1.
pub fn class_weights(labels: &[f64]) -> Result<Vec<f64>> {
    let w = positive_class_weight(labels)?;
    Ok(labels.iter().map(|&y| if y == 1.0 { w } else { 1.0 }).collect())
}

/// Inverse prevalence of the positive class, `n / n_positive`.
pub fn positive_class_weight(labels: &[f64]) -> Result<f64> {
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(FigsError::InvalidData("class labels must be 0 or 1".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1.0).count();
    if pos == 0 || pos == labels.len() {
        return Err(FigsError::SingleClass);
    }
    Ok(labels.len() as f64 / pos as f64)
}

/// Reads `sample_index,weight` rows (with header). Every index in `0..n`
/// must appear exactly once.
pub fn read_external_weights<R: Read>(reader: R, n: usize) -> Result<Vec<f64>> {
    #[derive(Deserialize)]
    struct Row {
        sample_index: usize,
        weight: f64,
    }
    let mut weights = vec![f64::NAN; n];
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    for row in rdr.deserialize() {
        let row: Row = row?;
        if row.sample_index >= n {
            return Err(FigsError::InvalidData(format!("sample_index {} out of range", row.sample_index)));
        }
        if !weights[row.sample_index].is_nan() {
            return Err(FigsError::InvalidData(format!("duplicate sample_index {}", row.sample_index)));
        }
        if !(row.weight.is_finite() && row.weight >= 0.0) {
            return Err(FigsError::InvalidData(format!("invalid weight for sample {}", row.sample_index)));
        }
        weights[row.sample_index] = row.weight;
    }
    if let Some(i) = weights.iter().position(|w| w.is_nan()) {
        return Err(FigsError::InvalidData(format!("missing weight for sample {i}")));
    }
    Ok(weights)
}

/// Where the per-group sample weights come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipSource {
    Logistic(MembershipConfig),
    /// One weight vector per group label.
    External(BTreeMap<String, Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GFigsConfig {
    pub fit: FitConfig,
    pub membership: MembershipSource,
    /// Multiply the membership weights by [`class_weights`] of the targets.
    pub class_weighted: bool,
}

/// One FIGS model per group, each fit on all samples weighted by that
/// group's membership probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GFigsModel {
    pub format_version: u32,
    pub per_group: BTreeMap<String, FigsModel>,
    /// Fitted membership models; empty when weights were supplied externally.
    pub membership: Vec<MembershipModel>,
}

impl GFigsModel {
    pub fn model(&self, group: &str) -> Result<&FigsModel> {
        self.per_group.get(group).ok_or_else(|| FigsError::UnknownGroup(group.to_string()))
    }

    pub fn predict(&self, x: &[f64], group: &str) -> Result<f64> {
        self.model(group)?.predict(x)
    }

    pub fn predict_raw(&self, x: &[f64], group: &str) -> Result<f64> {
        self.model(group)?.predict_raw(x)
    }

    pub fn split_features(&self) -> BTreeSet<usize> {
        self.per_group.values().flat_map(|m| m.split_features()).collect()
    }
}

/// Per-group sample weights plus the membership models that produced them.
pub type GroupWeights = (BTreeMap<String, Vec<f64>>, Vec<MembershipModel>);

/// Sample weights used for each group's outcome model, before dropping
/// zero-weight samples.
pub fn group_weights(grouped: &GroupedDataset, config: &GFigsConfig) -> Result<GroupWeights> {
    let labels = grouped.labels();
    let data = grouped.base();
    let (mut weights, models) = match &config.membership {
        MembershipSource::Logistic(mc) => {
            let models: Vec<MembershipModel> = if labels.len() == 2 {
                vec![fit_membership_model(grouped, &labels[0], mc)?]
            } else {
                labels.iter().map(|g| fit_membership_model(grouped, g, mc)).collect::<Result<_>>()?
            };
            let mut w = BTreeMap::new();
            for g in &labels {
                let model = models
                    .iter()
                    .find(|m| &m.target_group == g)
                    .unwrap_or(&models[0]);
                w.insert(g.clone(), membership_weights(model, data, g)?);
            }
            (w, models)
        }
        MembershipSource::External(ext) => {
            let mut w = BTreeMap::new();
            for g in &labels {
                let v = ext.get(g).ok_or_else(|| FigsError::UnknownGroup(g.clone()))?;
                if v.len() != data.n_samples() {
                    return Err(FigsError::DimensionMismatch { expected: data.n_samples(), got: v.len() });
                }
                w.insert(g.clone(), v.clone());
            }
            (w, Vec::new())
        }
    };
    let cw = if config.class_weighted { Some(class_weights(data.targets())?) } else { None };
    for w in weights.values_mut() {
        for (i, wi) in w.iter_mut().enumerate() {
            if let Some(cw) = &cw {
                *wi *= cw[i];
            }
            *wi *= data.weight(i);
        }
    }
    Ok((weights, models))
}

/// Fits G-FIGS. Samples whose combined weight is exactly zero are dropped
/// from that group's fit.
pub fn fit_gfigs(grouped: &GroupedDataset, config: &GFigsConfig) -> Result<GFigsModel> {
    let (weights, membership) = group_weights(grouped, config)?;
    let data = grouped.base();
    let fits: Vec<(String, Result<FigsModel>)> = weights
        .par_iter()
        .map(|(g, w)| {
            let fit = || -> Result<FigsModel> {
                let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
                let sub = data.select_rows(&keep)?;
                let sub_w: Vec<f64> = keep.iter().map(|&i| w[i]).collect();
                fit_figs(&sub.with_weights(sub_w)?, &config.fit)
            };
            (g.clone(), fit())
        })
        .collect();
    let mut per_group = BTreeMap::new();
    for (g, m) in fits {
        per_group.insert(g, m?);
    }
    Ok(GFigsModel { format_version: crate::model::FORMAT_VERSION, per_group, membership })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grouped(n: usize, seed: u64, signal: f64) -> GroupedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut groups = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let x0: f64 = rng.random();
            let x1: f64 = rng.random();
            let g = if rng.random::<f64>() < sigmoid(signal * (x0 - 0.5)) { "a" } else { "b" };
            rows.push(vec![x0, x1]);
            y.push(f64::from(u8::from(x1 > 0.5)));
            groups.push(g.to_string());
        }
        GroupedDataset::new(Dataset::from_rows(&rows, y).unwrap(), groups).unwrap()
    }

    #[test]
    fn identical_groups_give_prevalence() {
        let g = grouped(2000, 1, 0.0);
        let m = fit_membership_model(&g, "a", &MembershipConfig::default()).unwrap();
        let prevalence = g.indicator("a").iter().sum::<f64>() / 2000.0;
        for x in g.base().rows() {
            assert!((m.probability(x).unwrap() - prevalence).abs() < 0.05);
        }
    }

    #[test]
    fn weaker_regularization_is_more_extreme() {
        let g = grouped(500, 2, 12.0);
        let strong = fit_membership_model(&g, "a", &MembershipConfig { c: 0.001, ..Default::default() }).unwrap();
        let weak = fit_membership_model(&g, "a", &MembershipConfig { c: 2.8, ..Default::default() }).unwrap();
        let x = [0.95, 0.5];
        assert!(weak.probability(&x).unwrap() > strong.probability(&x).unwrap());
        assert!(weak.probability(&x).unwrap() > 0.9);
    }

    #[test]
    fn objective_never_increases() {
        let g = grouped(400, 3, 6.0);
        let m = fit_membership_model(&g, "b", &MembershipConfig::default()).unwrap();
        assert!(m.objective_trace.len() >= 2);
        for w in m.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn two_group_weights_are_complementary() {
        let g = grouped(300, 4, 5.0);
        let m = fit_membership_model(&g, "a", &MembershipConfig::default()).unwrap();
        let wa = membership_weights(&m, g.base(), "a").unwrap();
        let wb = membership_weights(&m, g.base(), "b").unwrap();
        for (a, b) in wa.iter().zip(&wb) {
            assert_eq!(a + b, 1.0);
            assert!(*a > 0.0 && *a < 1.0);
        }
        assert!(matches!(membership_weights(&m, g.base(), "zzz"), Err(FigsError::UnknownGroup(_))));
    }

    #[test]
    fn excluded_features_are_absent() {
        let g = grouped(300, 5, 5.0);
        let cfg = MembershipConfig { excluded_features: vec![0], ..Default::default() };
        let m = fit_membership_model(&g, "a", &cfg).unwrap();
        assert_eq!(m.used_features, vec![1]);
        assert_eq!(m.coefficients.len(), 1);
    }

    #[test]
    fn zero_coefficients_give_sigmoid_of_intercept() {
        let m = MembershipModel {
            target_group: "a".into(),
            groups: vec!["a".into(), "b".into()],
            c: 1.0,
            intercept: 0.3,
            coefficients: vec![0.0],
            used_features: vec![0],
            means: vec![0.0],
            scales: vec![1.0],
            excluded_features: vec![],
            n_features: 1,
            iterations: 0,
            objective_trace: vec![],
        };
        assert_eq!(m.probability(&[123.0]).unwrap(), sigmoid(0.3));
    }

    #[test]
    fn softplus_change_matches_direct_difference() {
        for z in [-40.0, -3.0, -0.2, 0.0, 0.7, 5.0, 40.0] {
            for dz in [-800.0, -2.0, -1e-3, -1e-9, 0.0, 1e-9, 1e-3, 2.0, 800.0] {
                let direct = softplus(z + dz) - softplus(z);
                let got = softplus_change(z, dz);
                assert!((got - direct).abs() <= 1e-12 * direct.abs().max(1.0), "z {z} dz {dz}: {got} vs {direct}");
            }
        }
        assert!(softplus_change(0.0, 1e-12) > 0.0);
    }

    #[test]
    fn class_weight_values() {
        assert_eq!(class_weights(&[1.0, 0.0]).unwrap(), vec![2.0, 1.0]);
        assert!(matches!(class_weights(&[1.0, 1.0]), Err(FigsError::SingleClass)));
        let mut labels = vec![0.0; 112];
        labels[0] = 1.0;
        assert_eq!(positive_class_weight(&labels).unwrap(), 112.0);
    }

    #[test]
    fn external_weights_parse_and_validate() {
        let w = read_external_weights("sample_index,weight\n1,0.25\n0,0.5\n".as_bytes(), 2).unwrap();
        assert_eq!(w, vec![0.5, 0.25]);
        assert!(read_external_weights("sample_index,weight\n0,0.5\n".as_bytes(), 2).is_err());
        assert!(read_external_weights("sample_index,weight\n0,0.5\n0,0.5\n".as_bytes(), 1).is_err());
        assert!(read_external_weights("sample_index,weight\n0,-1\n".as_bytes(), 1).is_err());
    }

    #[test]
    fn singleton_groups_are_rejected() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], vec![0.0, 1.0, 0.0]).unwrap();
        assert!(GroupedDataset::new(ds, vec!["a".into(), "a".into(), "b".into()]).is_err());
    }
}
