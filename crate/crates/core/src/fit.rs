//! Greedy tree-sum fitting. Each iteration gathers the best split of every
//! leaf of every tree plus a root split for a fresh tree (root value 0),
//! scored on the current residuals, and commits the single best one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backfit::backfit;
use crate::data::{Dataset, Task};
use crate::error::{FigsError, Result};
use crate::model::FigsModel;
use crate::split::{LeafScan, LeafSplit, LeafStats, SplitCandidate, SplitRules, TreeSlot};
use crate::tree::{Leaf, Tree};

/// Work size (samples x features x trees) above which the split scan runs in parallel.
const PARALLEL_SCAN_WORK: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub task: Task,
    /// Total number of splits across all trees.
    pub max_splits: usize,
    pub min_impurity_decrease: f64,
    pub min_samples_leaf: usize,
    /// `false` restricts fitting to a single tree (CART).
    pub allow_new_trees: bool,
    pub backfit_iterations: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            task: Task::Regression,
            max_splits: 10,
            min_impurity_decrease: 0.0,
            min_samples_leaf: 1,
            allow_new_trees: true,
            backfit_iterations: 0,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn regression(max_splits: usize) -> Self {
        Self { max_splits, ..Self::default() }
    }

    pub fn classification(max_splits: usize) -> Self {
        Self { task: Task::BinaryClassification, max_splits, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_impurity_decrease.is_finite() && self.min_impurity_decrease >= 0.0) {
            return Err(FigsError::InvalidConfig("min_impurity_decrease must be finite and >= 0".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(FigsError::InvalidConfig("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }

    pub(crate) fn rules(&self) -> SplitRules {
        SplitRules { min_samples_leaf: self.min_samples_leaf, min_impurity_decrease: self.min_impurity_decrease }
    }
}

/// One committed split, in commit order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitEvent {
    /// Index of the tree that received the split (after insertion for new trees).
    pub tree_index: usize,
    pub new_tree: bool,
    pub leaf_id: usize,
    pub feature: usize,
    pub threshold: f64,
    pub impurity_decrease: f64,
}

/// Fits a FIGS model.
pub fn fit_figs(data: &Dataset, config: &FitConfig) -> Result<FigsModel> {
    fit_figs_traced(data, config).map(|(m, _)| m)
}

/// Fits a single greedy CART tree (FIGS without new-tree candidates).
pub fn fit_cart(data: &Dataset, config: &FitConfig) -> Result<FigsModel> {
    let config = FitConfig { allow_new_trees: false, ..config.clone() };
    fit_figs(data, &config)
}

/// Fits a FIGS model and returns the committed splits in order.
pub fn fit_figs_traced(data: &Dataset, config: &FitConfig) -> Result<(FigsModel, Vec<SplitEvent>)> {
    fit_with_sampler(data, config, &mut |_| None)
}

/// Fitting with a per-iteration feature restriction: `sampler` is called
/// once per iteration and may return the subset of features every candidate
/// in that iteration is restricted to.
pub(crate) fn fit_with_sampler(
    data: &Dataset,
    config: &FitConfig,
    sampler: &mut dyn FnMut(usize) -> Option<Vec<usize>>,
) -> Result<(FigsModel, Vec<SplitEvent>)> {
    config.validate()?;
    if config.task == Task::BinaryClassification {
        data.check_binary_targets()?;
    }
    let training_mean = data.weighted_target_mean();
    let d = data.n_features();
    if config.max_splits == 0 || d == 0 {
        return Ok((FigsModel::constant(training_mean, config.task, d), Vec::new()));
    }

    let mut grower = Grower::new(data, config.rules());
    let mut events = Vec::new();
    while grower.total_splits < config.max_splits {
        let features = match sampler(d) {
            Some(mut f) => {
                f.sort_unstable();
                f.dedup();
                if f.iter().any(|&j| j >= d) {
                    return Err(FigsError::InvalidConfig("feature subset out of range".into()));
                }
                f
            }
            None => (0..d).collect(),
        };
        let allow_new = config.allow_new_trees || grower.trees.is_empty();
        let Some(best) = grower.best_candidate(&features, allow_new) else {
            break;
        };
        events.push(grower.commit(best)?);
    }

    if events.is_empty() {
        return Ok((FigsModel::constant(training_mean, config.task, d), events));
    }
    let trees = grower.trees.into_iter().map(|g| g.tree).collect();
    let mut model = FigsModel::new(trees, config.task, training_mean, d);
    if config.backfit_iterations > 0 {
        backfit(&mut model, data, config.backfit_iterations)?;
    }
    Ok((model, events))
}

struct GrowingTree {
    tree: Tree,
    /// Leaf id of every training sample.
    leaf_of: Vec<usize>,
}

struct Grower<'a> {
    data: &'a Dataset,
    rules: SplitRules,
    /// Sample indices sorted by each feature (ties by index).
    sorted: Vec<Vec<u32>>,
    residuals: Vec<f64>,
    trees: Vec<GrowingTree>,
    total_splits: usize,
    root_leaf: Vec<usize>,
}

impl<'a> Grower<'a> {
    fn new(data: &'a Dataset, rules: SplitRules) -> Self {
        let n = data.n_samples();
        let sorted = (0..data.n_features())
            .map(|f| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| {
                    data.value(a as usize, f).total_cmp(&data.value(b as usize, f)).then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Self {
            data,
            rules,
            sorted,
            residuals: data.targets().to_vec(),
            trees: Vec::new(),
            total_splits: 0,
            root_leaf: vec![0; n],
        }
    }

    fn leaf_map(&self, slot: TreeSlot) -> &[usize] {
        match slot {
            TreeSlot::Existing(k) => &self.trees[k].leaf_of,
            TreeSlot::New => &self.root_leaf,
        }
    }

    fn leaf_stats(&self, slot: TreeSlot) -> Vec<Option<LeafStats>> {
        let n_nodes = match slot {
            TreeSlot::Existing(k) => self.trees[k].tree.nodes().len(),
            TreeSlot::New => 1,
        };
        let leaf_of = self.leaf_map(slot);
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        for (i, &leaf) in leaf_of.iter().enumerate() {
            members[leaf].push(i);
        }
        members
            .into_iter()
            .map(|ids| {
                if ids.is_empty() {
                    return None;
                }
                let stats = LeafStats::compute(self.data, &self.residuals, ids.iter().copied());
                stats.can_split(&self.rules).then_some(stats)
            })
            .collect()
    }

    /// Best split per leaf of one tree restricted to one feature.
    fn scan(&self, slot: TreeSlot, stats: &[Option<LeafStats>], feature: usize) -> Vec<Option<LeafSplit>> {
        let mut scans: Vec<Option<LeafScan>> = stats.iter().map(|s| s.map(|s| LeafScan::new(s, feature))).collect();
        let leaf_of = self.leaf_map(slot);
        for &i in &self.sorted[feature] {
            let i = i as usize;
            if let Some(scan) = scans[leaf_of[i]].as_mut() {
                scan.push(self.data.value(i, feature), self.data.weight(i), self.residuals[i], &self.rules);
            }
        }
        scans.into_iter().map(|s| s.and_then(|s| s.best())).collect()
    }

    fn best_candidate(&self, features: &[usize], allow_new: bool) -> Option<SplitCandidate> {
        let mut slots: Vec<TreeSlot> = (0..self.trees.len()).map(TreeSlot::Existing).collect();
        if allow_new {
            slots.push(TreeSlot::New);
        }
        let stats: Vec<Vec<Option<LeafStats>>> = slots.iter().map(|&s| self.leaf_stats(s)).collect();
        let jobs: Vec<(usize, usize)> =
            (0..slots.len()).flat_map(|s| features.iter().map(move |&f| (s, f))).collect();
        let run = |&(s, f): &(usize, usize)| self.scan(slots[s], &stats[s], f);
        let work = self.data.n_samples() * jobs.len();
        let results: Vec<Vec<Option<LeafSplit>>> = if work >= PARALLEL_SCAN_WORK {
            jobs.par_iter().map(run).collect()
        } else {
            jobs.iter().map(run).collect()
        };

        // Fold in tie-break order: slot, leaf id, feature.
        let n_feat = features.len();
        let mut best: Option<SplitCandidate> = None;
        for (s, &slot) in slots.iter().enumerate() {
            for leaf in 0..stats[s].len() {
                for per_feature in &results[s * n_feat..(s + 1) * n_feat] {
                    if let Some(split) = per_feature[leaf] {
                        let cand = SplitCandidate::new(slot, leaf, split);
                        if best.is_none_or(|b| cand.beats(&b)) {
                            best = Some(cand);
                        }
                    }
                }
            }
        }
        best
    }

    fn commit(&mut self, cand: SplitCandidate) -> Result<SplitEvent> {
        let data = self.data;
        let (tree_index, new_tree) = match cand.tree {
            TreeSlot::Existing(k) => (k, false),
            TreeSlot::New => {
                let root = Leaf { value: 0.0, sample_ids: Some((0..data.n_samples()).collect()), weight_sum: 0.0 };
                self.trees.push(GrowingTree { tree: Tree::from_root(root), leaf_of: vec![0; data.n_samples()] });
                (self.trees.len() - 1, true)
            }
        };
        let grown = &mut self.trees[tree_index];
        let parent = grown
            .tree
            .leaf(cand.leaf_id)
            .ok_or_else(|| FigsError::InvalidSplit("candidate leaf is not a leaf".into()))?;
        let parent_value = parent.value;
        let members: Vec<usize> = match &parent.sample_ids {
            Some(ids) => ids.clone(),
            None => (0..data.n_samples()).filter(|&i| grown.leaf_of[i] == cand.leaf_id).collect(),
        };
        let (left_ids, right_ids): (Vec<usize>, Vec<usize>) =
            members.iter().partition(|&&i| data.value(i, cand.feature) <= cand.threshold);
        let child = |ids: Vec<usize>, residuals: &[f64]| {
            let (w, wr) = ids.iter().fold((0.0, 0.0), |(w, wr), &i| {
                let wi = data.weight(i);
                (w + wi, wr + wi * residuals[i])
            });
            let mean = wr / w;
            (mean, Leaf { value: parent_value + mean, sample_ids: Some(ids), weight_sum: w })
        };
        let (left_mean, left) = child(left_ids, &self.residuals);
        let (right_mean, right) = child(right_ids, &self.residuals);
        if !(left_mean.is_finite() && right_mean.is_finite()) {
            return Err(FigsError::InvalidSplit("child with zero weight".into()));
        }
        let left_members = left.sample_ids.clone().unwrap_or_default();
        let right_members = right.sample_ids.clone().unwrap_or_default();
        let (l, r) = grown.tree.split_leaf(cand.leaf_id, cand.feature, cand.threshold, left, right)?;
        for &i in &left_members {
            grown.leaf_of[i] = l;
            self.residuals[i] -= left_mean;
        }
        for &i in &right_members {
            grown.leaf_of[i] = r;
            self.residuals[i] -= right_mean;
        }
        self.total_splits += 1;
        Ok(SplitEvent {
            tree_index,
            new_tree,
            leaf_id: cand.leaf_id,
            feature: cand.feature,
            threshold: cand.threshold,
            impurity_decrease: cand.impurity_decrease,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_data() -> Dataset {
        Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]], vec![0.0, 0.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn zero_budget_predicts_mean() {
        let m = fit_figs(&step_data(), &FitConfig::regression(0)).unwrap();
        assert_eq!(m.n_trees(), 1);
        assert_eq!(m.total_splits(), 0);
        assert_eq!(m.predict(&[100.0]).unwrap(), 0.5);
    }

    #[test]
    fn cart_stump_on_step() {
        let m = fit_cart(&step_data(), &FitConfig::regression(1)).unwrap();
        assert_eq!(m.n_trees(), 1);
        let (_, f, t) = m.trees()[0].splits().next().unwrap();
        assert_eq!((f, t), (0, 2.5));
        assert_eq!(m.predict(&[1.5]).unwrap(), 0.0);
        assert_eq!(m.predict(&[3.5]).unwrap(), 1.0);
    }

    #[test]
    fn stops_when_nothing_left_to_split() {
        let m = fit_figs(&step_data(), &FitConfig::regression(10)).unwrap();
        assert_eq!(m.total_splits(), 1);
        assert_eq!(m.sse(&step_data()).unwrap(), 0.0);
    }

    #[test]
    fn constant_targets_give_constant_model() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0]], vec![3.0, 3.0]).unwrap();
        let m = fit_figs(&ds, &FitConfig::regression(5)).unwrap();
        assert_eq!(m.total_splits(), 0);
        assert_eq!(m.predict(&[0.0]).unwrap(), 3.0);
    }

    #[test]
    fn classification_requires_binary_targets() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0]], vec![0.0, 2.0]).unwrap();
        assert!(fit_figs(&ds, &FitConfig::classification(2)).is_err());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = FitConfig { min_samples_leaf: 0, ..FitConfig::default() };
        assert!(fit_figs(&step_data(), &cfg).is_err());
        let cfg = FitConfig { min_impurity_decrease: -1.0, ..FitConfig::default() };
        assert!(fit_figs(&step_data(), &cfg).is_err());
    }

    #[test]
    fn min_impurity_decrease_stops_growth() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]], vec![0.0, 0.1, 5.0, 5.1]).unwrap();
        let cfg = FitConfig { min_impurity_decrease: 0.01, ..FitConfig::regression(10) };
        let m = fit_figs(&ds, &cfg).unwrap();
        assert_eq!(m.total_splits(), 1);
    }

    #[test]
    fn additive_data_grows_two_trees() {
        // y = 1{x0 > 0.5} + 1{x1 > 0.5} on a balanced 4x4 grid.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                let (x0, x1) = (a as f64 / 4.0 + 0.1, b as f64 / 4.0 + 0.1);
                rows.push(vec![x0, x1]);
                y.push(f64::from(u8::from(x0 > 0.5)) + f64::from(u8::from(x1 > 0.5)));
            }
        }
        let ds = Dataset::from_rows(&rows, y).unwrap();
        let m = fit_figs(&ds, &FitConfig::regression(2)).unwrap();
        assert_eq!(m.n_trees(), 2);
        assert!(m.sse(&ds).unwrap() < 1e-24);
        let cart = fit_cart(&ds, &FitConfig::regression(2)).unwrap();
        assert!(cart.sse(&ds).unwrap() > 0.1);
    }
}
