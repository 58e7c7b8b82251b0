//! Cyclic refitting of leaf values with tree structures held fixed (block
//! coordinate descent on the stump design).

use crate::data::Dataset;
use crate::error::{FigsError, Result};
use crate::model::FigsModel;
use crate::tree::Tree;

/// Runs `iterations` full cycles over the trees. Each tree update replaces
/// the tree's leaf values by the weighted mean, within each leaf, of the
/// residual that excludes that tree.
///
/// Returns the weighted training SSE before the first update followed by the
/// SSE after every tree update.
pub fn backfit(model: &mut FigsModel, data: &Dataset, iterations: usize) -> Result<Vec<f64>> {
    if iterations == 0 {
        return Err(FigsError::InvalidConfig("backfit needs at least one iteration".into()));
    }
    let mut state = Backfitter::new(model, data)?;
    let mut trace = vec![state.sse()];
    for _ in 0..iterations {
        for k in 0..state.assign.len() {
            state.update_tree(model, k);
            trace.push(state.sse());
        }
    }
    Ok(trace)
}

/// Cycles until a full cycle changes the SSE by at most `sse_tol * max(1, SSE)`
/// and moves no leaf value by more than `value_tol`, capped at `max_cycles`.
/// Returns the number of cycles run.
pub(crate) fn backfit_to_convergence(
    model: &mut FigsModel,
    data: &Dataset,
    value_tol: f64,
    sse_tol: f64,
    max_cycles: usize,
) -> Result<usize> {
    let mut state = Backfitter::new(model, data)?;
    let mut sse = state.sse();
    for cycle in 1..=max_cycles {
        let mut max_change: f64 = 0.0;
        for k in 0..state.assign.len() {
            max_change = max_change.max(state.update_tree(model, k));
        }
        let next = state.sse();
        let sse_change = (sse - next).abs();
        sse = next;
        if sse_change <= sse_tol * sse.max(1.0) && max_change <= value_tol {
            return Ok(cycle);
        }
    }
    Ok(max_cycles)
}

/// Leaf id of every sample in every tree, after checking recorded leaf
/// memberships (when present) against routing.
pub(crate) fn assignments(model: &FigsModel, data: &Dataset) -> Result<Vec<Vec<usize>>> {
    if data.n_features() != model.n_features() {
        return Err(FigsError::DimensionMismatch { expected: model.n_features(), got: data.n_features() });
    }
    model
        .trees()
        .iter()
        .map(|tree| {
            let assign: Vec<usize> = data.rows().map(|x| tree.leaf_index(x)).collect();
            check_recorded(tree, &assign)?;
            Ok(assign)
        })
        .collect()
}

fn check_recorded(tree: &Tree, assign: &[usize]) -> Result<()> {
    let mut recorded = 0usize;
    let mut any = false;
    for (id, leaf) in tree.leaves() {
        let Some(ids) = &leaf.sample_ids else { continue };
        any = true;
        recorded += ids.len();
        if ids.iter().any(|&i| i >= assign.len() || assign[i] != id) {
            return Err(FigsError::StaleLeaves);
        }
    }
    if any && recorded != assign.len() {
        return Err(FigsError::StaleLeaves);
    }
    Ok(())
}

struct Backfitter<'a> {
    data: &'a Dataset,
    assign: Vec<Vec<usize>>,
    contrib: Vec<Vec<f64>>,
    total: Vec<f64>,
}

impl<'a> Backfitter<'a> {
    fn new(model: &FigsModel, data: &'a Dataset) -> Result<Self> {
        let assign = assignments(model, data)?;
        let contrib: Vec<Vec<f64>> = model
            .trees()
            .iter()
            .zip(&assign)
            .map(|(tree, a)| a.iter().map(|&leaf| tree.leaf(leaf).map_or(0.0, |l| l.value)).collect())
            .collect();
        let mut s = Self { data, assign, contrib, total: Vec::new() };
        s.resum();
        Ok(s)
    }

    fn resum(&mut self) {
        let n = self.data.n_samples();
        self.total = (0..n).map(|i| self.contrib.iter().map(|c| c[i]).sum()).collect();
    }

    fn sse(&self) -> f64 {
        self.data
            .targets()
            .iter()
            .zip(&self.total)
            .enumerate()
            .map(|(i, (y, f))| self.data.weight(i) * (y - f) * (y - f))
            .sum()
    }

    /// Refits tree `k`; returns the largest absolute leaf-value change.
    fn update_tree(&mut self, model: &mut FigsModel, k: usize) -> f64 {
        let tree = &mut model.trees_mut()[k];
        let n_nodes = tree.nodes().len();
        let mut w = vec![0.0; n_nodes];
        let mut wr = vec![0.0; n_nodes];
        let y = self.data.targets();
        for (i, &leaf) in self.assign[k].iter().enumerate() {
            let wi = self.data.weight(i);
            w[leaf] += wi;
            wr[leaf] += wi * (y[i] - self.total[i] + self.contrib[k][i]);
        }
        let mut max_change: f64 = 0.0;
        let leaf_ids: Vec<usize> = tree.leaf_ids().collect();
        for id in leaf_ids {
            if w[id] > 0.0 {
                let leaf = tree.leaf_mut(id).expect("leaf id");
                let value = wr[id] / w[id];
                max_change = max_change.max((value - leaf.value).abs());
                leaf.value = value;
                leaf.weight_sum = w[id];
            }
        }
        for (i, &leaf) in self.assign[k].iter().enumerate() {
            self.contrib[k][i] = tree.leaf(leaf).expect("leaf id").value;
        }
        // Summing afresh keeps results independent of how cycles are batched.
        self.resum();
        max_change
    }
}
