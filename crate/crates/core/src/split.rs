//! Split search: impurity decrease, best split per leaf, and the normalized
//! decision-stump representation of a split.

use crate::data::Dataset;
use crate::error::{FigsError, Result};

/// Two impurity decreases count as tied when they differ by at most this
/// fraction of the larger of the two decreases and the two parent SSEs.
/// Rounding error in a decrease scales with its parent's SSE, so equal
/// partitions found along different features always tie.
pub const TIE_RTOL: f64 = 1e-12;

/// Decreases at or below this fraction of the parent SSE are rounding noise.
pub const NOISE_RTOL: f64 = 1e-12;

/// Which tree a candidate split belongs to. `Existing` sorts before `New`,
/// which is the tie-break order used when committing splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TreeSlot {
    Existing(usize),
    New,
}

/// Best admissible split of one leaf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafSplit {
    pub feature: usize,
    pub threshold: f64,
    pub impurity_decrease: f64,
    /// Weighted SSE of the leaf's residuals about their mean.
    pub parent_sse: f64,
}

/// A potential split competing in one FIGS iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub tree: TreeSlot,
    pub leaf_id: usize,
    pub feature: usize,
    pub threshold: f64,
    pub impurity_decrease: f64,
    pub parent_sse: f64,
}

impl SplitCandidate {
    pub(crate) fn new(tree: TreeSlot, leaf_id: usize, split: LeafSplit) -> Self {
        Self {
            tree,
            leaf_id,
            feature: split.feature,
            threshold: split.threshold,
            impurity_decrease: split.impurity_decrease,
            parent_sse: split.parent_sse,
        }
    }

    fn tie_key(&self) -> (TreeSlot, usize, usize, f64) {
        (self.tree, self.leaf_id, self.feature, self.threshold)
    }

    /// True if `self` should be preferred over `other`: a clearly larger
    /// decrease, or a tie broken by (existing before new, tree index,
    /// leaf id, feature, threshold).
    pub fn beats(&self, other: &SplitCandidate) -> bool {
        let (a, b) = (self.impurity_decrease, other.impurity_decrease);
        let scale = self.parent_sse.max(other.parent_sse);
        if clearly_greater(a, b, scale) {
            return true;
        }
        if clearly_greater(b, a, scale) {
            return false;
        }
        let (ka, kb) = (self.tie_key(), other.tie_key());
        (ka.0, ka.1, ka.2)
            .cmp(&(kb.0, kb.1, kb.2))
            .then(ka.3.total_cmp(&kb.3))
            .is_lt()
    }
}

/// `a` exceeds `b` by more than the tie tolerance; `scale` is the larger
/// parent SSE of the two candidates.
#[inline]
pub fn clearly_greater(a: f64, b: f64, scale: f64) -> bool {
    a - b > TIE_RTOL * a.abs().max(b.abs()).max(scale)
}

/// Admissibility constraints shared by CART and FIGS split search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRules {
    pub min_samples_leaf: usize,
    pub min_impurity_decrease: f64,
}

impl Default for SplitRules {
    fn default() -> Self {
        Self { min_samples_leaf: 1, min_impurity_decrease: 0.0 }
    }
}

/// Weighted impurity decrease of partitioning `values` by `go_left`.
///
/// Computes `SSE(parent) - SSE(left) - SSE(right)` with weighted means and
/// clamps tiny negative results to zero.
pub fn weighted_impurity_decrease(values: &[f64], weights: &[f64], go_left: &[bool]) -> Result<f64> {
    if values.len() != weights.len() || values.len() != go_left.len() {
        return Err(FigsError::DimensionMismatch { expected: values.len(), got: weights.len().min(go_left.len()) });
    }
    if values.iter().chain(weights).any(|v| !v.is_finite()) {
        return Err(FigsError::NonFinite("split values"));
    }
    let side_sse = |side: Option<bool>| -> Result<f64> {
        let members = || {
            values
                .iter()
                .zip(weights)
                .zip(go_left)
                .filter(move |(_, &l)| side.is_none_or(|s| s == l))
                .map(|((&v, &w), _)| (v, w))
        };
        let (sw, swv) = members().fold((0.0, 0.0), |(a, b), (v, w)| (a + w, b + w * v));
        if members().next().is_none() || sw <= 0.0 {
            return Err(FigsError::InvalidSplit("empty or zero-weight side".into()));
        }
        let mean = swv / sw;
        Ok(members().map(|(v, w)| w * (v - mean) * (v - mean)).sum())
    };
    let left = side_sse(Some(true))?;
    let right = side_sse(Some(false))?;
    let parent = side_sse(None)?;
    Ok((parent - left - right).max(0.0))
}

/// Weighted summary of the residuals inside one leaf.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LeafStats {
    pub count: usize,
    pub positive_count: usize,
    pub weight: f64,
    pub mean: f64,
    pub centered_sum: f64,
    pub sse: f64,
}

impl LeafStats {
    pub fn compute(data: &Dataset, residuals: &[f64], sample_ids: impl Iterator<Item = usize> + Clone) -> Self {
        let (mut w_sum, mut wr_sum, mut count, mut positive) = (0.0, 0.0, 0, 0);
        for i in sample_ids.clone() {
            let w = data.weight(i);
            w_sum += w;
            wr_sum += w * residuals[i];
            count += 1;
            positive += usize::from(w > 0.0);
        }
        let mean = if w_sum > 0.0 { wr_sum / w_sum } else { 0.0 };
        let (mut centered_sum, mut sse) = (0.0, 0.0);
        for i in sample_ids {
            let w = data.weight(i);
            let c = residuals[i] - mean;
            centered_sum += w * c;
            sse += w * c * c;
        }
        Self { count, positive_count: positive, weight: w_sum, mean, centered_sum, sse }
    }

    pub fn can_split(&self, rules: &SplitRules) -> bool {
        self.count >= 2 * rules.min_samples_leaf && self.positive_count >= 2 && self.sse > 0.0
    }
}

/// Running left-side statistics for one (leaf, feature) sweep. Samples must
/// be pushed in non-decreasing order of the feature value.
#[derive(Debug, Clone)]
pub(crate) struct LeafScan {
    stats: LeafStats,
    feature: usize,
    n_left: usize,
    positive_left: usize,
    w_left: f64,
    s_left: f64,
    last: f64,
    best: Option<LeafSplit>,
}

impl LeafScan {
    pub fn new(stats: LeafStats, feature: usize) -> Self {
        Self {
            stats,
            feature,
            n_left: 0,
            positive_left: 0,
            w_left: 0.0,
            s_left: 0.0,
            last: f64::NEG_INFINITY,
            best: None,
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64, weight: f64, residual: f64, rules: &SplitRules) {
        if self.n_left > 0 && x > self.last {
            self.evaluate(midpoint(self.last, x), rules);
        }
        self.n_left += 1;
        self.positive_left += usize::from(weight > 0.0);
        self.w_left += weight;
        self.s_left += weight * (residual - self.stats.mean);
        self.last = x;
    }

    fn evaluate(&mut self, threshold: f64, rules: &SplitRules) {
        let s = &self.stats;
        let n_right = s.count - self.n_left;
        if self.n_left < rules.min_samples_leaf || n_right < rules.min_samples_leaf {
            return;
        }
        if self.positive_left == 0 || self.positive_left == s.positive_count {
            return;
        }
        let w_right = s.weight - self.w_left;
        let s_right = s.centered_sum - self.s_left;
        let decrease = (self.s_left * self.s_left / self.w_left + s_right * s_right / w_right
            - s.centered_sum * s.centered_sum / s.weight)
            .max(0.0);
        if decrease <= rules.min_impurity_decrease || decrease <= NOISE_RTOL * s.sse {
            return;
        }
        let better = match &self.best {
            None => true,
            Some(b) => clearly_greater(decrease, b.impurity_decrease, s.sse),
        };
        if better {
            self.best = Some(LeafSplit { feature: self.feature, threshold, impurity_decrease: decrease, parent_sse: s.sse });
        }
    }

    pub fn best(&self) -> Option<LeafSplit> {
        self.best
    }
}

/// Threshold strictly between two distinct values `a < b` such that `a` goes
/// left (`x <= t`) and `b` goes right.
#[inline]
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b || m < a {
        a
    } else {
        m
    }
}

/// Best admissible split of the leaf holding `sample_ids`, scanning every
/// feature in `feature_subset` (all features when `None`).
///
/// Thresholds are midpoints between consecutive distinct values; ties keep the
/// lowest feature, then the lowest threshold.
pub fn find_best_split(
    data: &Dataset,
    sample_ids: &[usize],
    residuals: &[f64],
    feature_subset: Option<&[usize]>,
    rules: &SplitRules,
) -> Result<Option<LeafSplit>> {
    if sample_ids.is_empty() {
        return Err(FigsError::InvalidSplit("leaf has no samples".into()));
    }
    if residuals.len() != data.n_samples() {
        return Err(FigsError::DimensionMismatch { expected: data.n_samples(), got: residuals.len() });
    }
    if sample_ids.iter().any(|&i| !residuals[i].is_finite()) {
        return Err(FigsError::NonFinite("residuals"));
    }
    let stats = LeafStats::compute(data, residuals, sample_ids.iter().copied());
    if !stats.can_split(rules) {
        return Ok(None);
    }
    let all: Vec<usize>;
    let features = match feature_subset {
        Some(f) => f,
        None => {
            all = (0..data.n_features()).collect();
            &all
        }
    };
    let mut order = sample_ids.to_vec();
    let mut best: Option<LeafSplit> = None;
    let mut sorted_features = features.to_vec();
    sorted_features.sort_unstable();
    sorted_features.dedup();
    for &f in &sorted_features {
        if f >= data.n_features() {
            return Err(FigsError::InvalidConfig(format!("feature {f} out of range")));
        }
        order.sort_by(|&a, &b| data.value(a, f).total_cmp(&data.value(b, f)).then(a.cmp(&b)));
        let mut scan = LeafScan::new(stats, f);
        for &i in &order {
            scan.push(data.value(i, f), data.weight(i), residuals[i], rules);
        }
        if let Some(s) = scan.best() {
            if best.is_none_or(|b| clearly_greater(s.impurity_decrease, b.impurity_decrease, stats.sse)) {
                best = Some(s);
            }
        }
    }
    Ok(best)
}

/// Normalized decision stump of splitting the node holding `sample_ids` on
/// `(feature, threshold)`, evaluated on every training sample (unit weights).
///
/// Left members get `N_R / sqrt(N N_L N_R)`, right members `-N_L / sqrt(N N_L N_R)`,
/// samples outside the node 0. The vector has unit norm.
pub fn stump_feature(data: &Dataset, sample_ids: &[usize], feature: usize, threshold: f64) -> Result<Vec<f64>> {
    if feature >= data.n_features() {
        return Err(FigsError::InvalidSplit(format!("feature {feature} out of range")));
    }
    let n_left = sample_ids.iter().filter(|&&i| data.value(i, feature) <= threshold).count();
    let n_right = sample_ids.len() - n_left;
    if n_left == 0 || n_right == 0 {
        return Err(FigsError::InvalidSplit("stump has an empty child".into()));
    }
    let (n, nl, nr) = (sample_ids.len() as f64, n_left as f64, n_right as f64);
    let norm = (n * nl * nr).sqrt();
    let mut psi = vec![0.0; data.n_samples()];
    for &i in sample_ids {
        psi[i] = if data.value(i, feature) <= threshold { nr / norm } else { -nl / norm };
    }
    Ok(psi)
}
