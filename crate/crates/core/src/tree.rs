//! Binary axis-aligned trees. Node ids are indices into the node vector;
//! samples with `x[feature] <= threshold` go left.

use std::collections::BTreeSet;

use crate::error::{FigsError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub value: f64,
    /// Training samples that reached this leaf. `None` for structures that
    /// were deserialized or built by hand.
    pub sample_ids: Option<Vec<usize>>,
    pub weight_sum: f64,
}

impl Leaf {
    pub fn new(value: f64) -> Self {
        Self { value, sample_ids: None, weight_sum: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf(Leaf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// A tree consisting of a single leaf.
    pub fn constant(value: f64) -> Self {
        Self { nodes: vec![Node::Leaf(Leaf::new(value))] }
    }

    pub(crate) fn from_root(root: Leaf) -> Self {
        Self { nodes: vec![Node::Leaf(root)] }
    }

    /// Builds a tree from a node list, checking that it forms a single binary
    /// tree rooted at node 0 whose children always have larger ids.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(FigsError::InvalidModel("tree has no nodes".into()));
        }
        let mut parents = vec![0usize; nodes.len()];
        for (id, node) in nodes.iter().enumerate() {
            match node {
                Node::Internal { threshold, left, right, .. } => {
                    if !threshold.is_finite() {
                        return Err(FigsError::InvalidModel(format!("node {id} has a non-finite threshold")));
                    }
                    for &child in [left, right] {
                        if child <= id || child >= nodes.len() {
                            return Err(FigsError::InvalidModel(format!("node {id} has invalid child {child}")));
                        }
                        parents[child] += 1;
                    }
                }
                Node::Leaf(leaf) => {
                    if !leaf.value.is_finite() {
                        return Err(FigsError::InvalidModel(format!("leaf {id} has a non-finite value")));
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(FigsError::InvalidModel("nodes do not form a single tree".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Internal { .. })).count()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.len() - self.n_splits()
    }

    pub fn leaf_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| matches!(n, Node::Leaf(_))).map(|(i, _)| i)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, &Leaf)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            Node::Leaf(l) => Some((i, l)),
            Node::Internal { .. } => None,
        })
    }

    /// `(node id, feature, threshold)` of every internal node.
    pub fn splits(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match *n {
            Node::Internal { feature, threshold, .. } => Some((i, feature, threshold)),
            Node::Leaf(_) => None,
        })
    }

    pub fn split_features(&self) -> BTreeSet<usize> {
        self.splits().map(|(_, f, _)| f).collect()
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.splits().map(|(_, f, _)| f).max()
    }

    /// Id of the leaf containing `x`.
    #[inline]
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Internal { feature, threshold, left, right } => {
                    id = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf(_) => return id,
            }
        }
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf(l) => l.value,
            Node::Internal { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn leaf(&self, id: usize) -> Option<&Leaf> {
        match &self.nodes[id] {
            Node::Leaf(l) => Some(l),
            Node::Internal { .. } => None,
        }
    }

    pub fn leaf_mut(&mut self, id: usize) -> Option<&mut Leaf> {
        match &mut self.nodes[id] {
            Node::Leaf(l) => Some(l),
            Node::Internal { .. } => None,
        }
    }

    /// Replaces leaf `id` with an internal node and appends its two children.
    /// Returns the ids of the new left and right leaves.
    pub fn split_leaf(&mut self, id: usize, feature: usize, threshold: f64, left: Leaf, right: Leaf) -> Result<(usize, usize)> {
        if self.leaf(id).is_none() {
            return Err(FigsError::InvalidSplit(format!("node {id} is not a leaf")));
        }
        let (l, r) = (self.nodes.len(), self.nodes.len() + 1);
        self.nodes.push(Node::Leaf(left));
        self.nodes.push(Node::Leaf(right));
        self.nodes[id] = Node::Internal { feature, threshold, left: l, right: r };
        Ok((l, r))
    }

    /// Same node layout, features, thresholds and leaf values (bit-exact),
    /// ignoring recorded sample memberships.
    pub fn same_structure(&self, other: &Tree) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.nodes.iter().zip(&other.nodes).all(|(a, b)| match (a, b) {
                (
                    Node::Internal { feature: fa, threshold: ta, left: la, right: ra },
                    Node::Internal { feature: fb, threshold: tb, left: lb, right: rb },
                ) => fa == fb && ta.to_bits() == tb.to_bits() && la == lb && ra == rb,
                (Node::Leaf(a), Node::Leaf(b)) => a.value.to_bits() == b.value.to_bits(),
                _ => false,
            })
    }

    pub(crate) fn clear_samples(&mut self) {
        for node in &mut self.nodes {
            if let Node::Leaf(l) = node {
                l.sample_ids = None;
            }
        }
    }
}
