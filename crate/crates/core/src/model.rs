//! Fitted tree-sum models and their JSON document format.

use std::collections::BTreeSet;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{Dataset, Task};
use crate::error::{FigsError, Result};
use crate::tree::{Leaf, Node, Tree};

pub const FORMAT_VERSION: u32 = 1;

/// Ordered list of trees whose leaf values are summed at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct FigsModel {
    trees: Vec<Tree>,
    task: Task,
    training_mean: f64,
    n_features: usize,
}

impl FigsModel {
    pub(crate) fn new(trees: Vec<Tree>, task: Task, training_mean: f64, n_features: usize) -> Self {
        Self { trees, task, training_mean, n_features }
    }

    /// Builds a model from fixed structures. Every split feature must be
    /// below `n_features`.
    pub fn from_trees(trees: Vec<Tree>, task: Task, training_mean: f64, n_features: usize) -> Result<Self> {
        if trees.is_empty() {
            return Err(FigsError::InvalidModel("model has no trees".into()));
        }
        if trees.iter().filter_map(Tree::max_feature).any(|f| f >= n_features) {
            return Err(FigsError::InvalidModel("split feature out of range".into()));
        }
        Ok(Self::new(trees, task, training_mean, n_features))
    }

    /// Zero-split model: one root leaf holding the training mean.
    pub fn constant(training_mean: f64, task: Task, n_features: usize) -> Self {
        Self::new(vec![Tree::constant(training_mean)], task, training_mean, n_features)
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub(crate) fn trees_mut(&mut self) -> &mut [Tree] {
        &mut self.trees
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn training_mean(&self) -> f64 {
        self.training_mean
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn total_splits(&self) -> usize {
        self.trees.iter().map(Tree::n_splits).sum()
    }

    pub fn total_leaves(&self) -> usize {
        self.trees.iter().map(Tree::n_leaves).sum()
    }

    pub fn splits_per_tree(&self) -> Vec<usize> {
        self.trees.iter().map(Tree::n_splits).collect()
    }

    /// Features used by any split in any tree.
    pub fn split_features(&self) -> BTreeSet<usize> {
        self.trees.iter().flat_map(|t| t.split_features()).collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(FigsError::DimensionMismatch { expected: self.n_features, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FigsError::NonFinite("prediction input"));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn raw_unchecked(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum()
    }

    /// Sum of the leaf values containing `x`.
    pub fn predict_raw(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.raw_unchecked(x))
    }

    /// Prediction on the output scale: the raw sum for regression, the sum
    /// clamped to [0, 1] for classification.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let raw = self.predict_raw(x)?;
        Ok(self.output_scale(raw))
    }

    /// Maps a raw tree-sum to the reported output (clamped to [0, 1] for classification).
    pub fn output_scale(&self, raw: f64) -> f64 {
        match self.task {
            Task::Regression => raw,
            Task::BinaryClassification => raw.clamp(0.0, 1.0),
        }
    }

    pub fn predict_raw_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.n_features() != self.n_features {
            return Err(FigsError::DimensionMismatch { expected: self.n_features, got: data.n_features() });
        }
        Ok(data.rows().map(|x| self.raw_unchecked(x)).collect())
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(self.predict_raw_dataset(data)?.into_iter().map(|r| self.output_scale(r)).collect())
    }

    /// Weighted training SSE of the raw tree-sum on `data`.
    pub fn sse(&self, data: &Dataset) -> Result<f64> {
        let preds = self.predict_raw_dataset(data)?;
        Ok(preds
            .iter()
            .zip(data.targets())
            .enumerate()
            .map(|(i, (p, y))| data.weight(i) * (y - p) * (y - p))
            .sum())
    }

    /// Bit-exact equality of tree structures, thresholds, leaf values, task
    /// and training mean.
    pub fn same_structure(&self, other: &FigsModel) -> bool {
        self.task == other.task
            && self.n_features == other.n_features
            && self.training_mean.to_bits() == other.training_mean.to_bits()
            && self.trees.len() == other.trees.len()
            && self.trees.iter().zip(&other.trees).all(|(a, b)| a.same_structure(b))
    }

    /// Drops recorded leaf memberships.
    pub fn without_samples(mut self) -> Self {
        self.trees.iter_mut().for_each(Tree::clear_samples);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TreeRecord {
    nodes: Vec<NodeRecord>,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    task: Task,
    training_mean: f64,
    n_features: usize,
    trees: Vec<TreeRecord>,
}

impl From<&Tree> for TreeRecord {
    fn from(tree: &Tree) -> Self {
        let nodes = tree
            .nodes()
            .iter()
            .enumerate()
            .map(|(id, node)| match *node {
                Node::Internal { feature, threshold, left, right } => NodeRecord {
                    id,
                    feature: Some(feature),
                    threshold: Some(threshold),
                    left: Some(left),
                    right: Some(right),
                    value: None,
                },
                Node::Leaf(ref leaf) => NodeRecord {
                    id,
                    feature: None,
                    threshold: None,
                    left: None,
                    right: None,
                    value: Some(leaf.value),
                },
            })
            .collect();
        TreeRecord { nodes }
    }
}

impl TryFrom<TreeRecord> for Tree {
    type Error = FigsError;

    fn try_from(record: TreeRecord) -> Result<Self> {
        let mut nodes = Vec::with_capacity(record.nodes.len());
        for (pos, r) in record.nodes.into_iter().enumerate() {
            if r.id != pos {
                return Err(FigsError::InvalidModel(format!("node id {} at position {pos}", r.id)));
            }
            let node = match (r.feature, r.threshold, r.left, r.right, r.value) {
                (Some(feature), Some(threshold), Some(left), Some(right), None) => {
                    Node::Internal { feature, threshold, left, right }
                }
                (None, None, None, None, Some(value)) => Node::Leaf(Leaf::new(value)),
                _ => return Err(FigsError::InvalidModel(format!("node {pos} is neither a split nor a leaf"))),
            };
            nodes.push(node);
        }
        Tree::from_nodes(nodes)
    }
}

impl Serialize for FigsModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ModelDocument {
            format_version: FORMAT_VERSION,
            task: self.task,
            training_mean: self.training_mean,
            n_features: self.n_features,
            trees: self.trees.iter().map(TreeRecord::from).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FigsModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let doc = ModelDocument::deserialize(deserializer)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(D::Error::custom(format!("unsupported format_version {}", doc.format_version)));
        }
        let trees = doc
            .trees
            .into_iter()
            .map(Tree::try_from)
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        FigsModel::from_trees(trees, doc.task, doc.training_mean, doc.n_features).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_tree_model(task: Task) -> FigsModel {
        let mut a = Tree::constant(0.0);
        a.split_leaf(0, 0, 0.5, Leaf::new(0.3), Leaf::new(-0.1)).unwrap();
        let mut b = Tree::constant(0.0);
        b.split_leaf(0, 1, 0.5, Leaf::new(0.5), Leaf::new(0.9)).unwrap();
        FigsModel::from_trees(vec![a, b], task, 0.4, 2).unwrap()
    }

    #[test]
    fn prediction_sums_tree_contributions() {
        let m = two_tree_model(Task::Regression);
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), 0.8);
        assert_eq!(m.total_splits(), 2);
        assert_eq!(m.total_leaves(), m.total_splits() + m.n_trees());
    }

    #[test]
    fn classification_clamps_but_keeps_raw() {
        let m = two_tree_model(Task::BinaryClassification);
        let x = [0.0, 1.0];
        assert_eq!(m.predict_raw(&x).unwrap(), 1.2);
        assert_eq!(m.predict(&x).unwrap(), 1.0);
    }

    #[test]
    fn constant_model_predicts_training_mean() {
        let m = FigsModel::constant(2.5, Task::Regression, 3);
        assert_eq!(m.predict(&[9.0, -1.0, 0.0]).unwrap(), 2.5);
        assert_eq!(m.total_splits(), 0);
        assert_eq!(m.total_leaves(), 1);
    }

    #[test]
    fn prediction_checks_input() {
        let m = two_tree_model(Task::Regression);
        assert!(matches!(m.predict(&[0.0]), Err(FigsError::DimensionMismatch { .. })));
        assert!(matches!(m.predict(&[0.0, f64::NAN]), Err(FigsError::NonFinite(_))));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut t = Tree::constant(0.0);
        t.split_leaf(0, 1, 0.1 + 0.2, Leaf::new(1.0 / 3.0), Leaf::new(-2.0f64.sqrt())).unwrap();
        let m = FigsModel::from_trees(vec![t], Task::Regression, std::f64::consts::PI, 2).unwrap();
        let back = FigsModel::from_json(&m.to_json().unwrap()).unwrap();
        assert!(back.same_structure(&m));
    }

    #[test]
    fn malformed_documents_are_rejected() {
        let doc = r#"{"format_version":1,"task":"regression","training_mean":0.0,"n_features":1,
            "trees":[{"nodes":[{"id":0,"feature":0,"threshold":0.5,"left":1,"right":2},{"id":1,"value":1.0}]}]}"#;
        assert!(FigsModel::from_json(doc).is_err());
        let doc = r#"{"format_version":9,"task":"regression","training_mean":0.0,"n_features":1,
            "trees":[{"nodes":[{"id":0,"value":1.0}]}]}"#;
        assert!(FigsModel::from_json(doc).is_err());
    }
}
