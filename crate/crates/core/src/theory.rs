//! Executable checks of the tree-sum theory: tree/block containment
//! (disentanglement) and oracle grid tree-sums whose leaf values are the
//! empirical risk minimizer over fixed cube partitions.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backfit::{assignments, backfit_to_convergence};
use crate::data::{Dataset, Task};
use crate::error::{FigsError, Result};
use crate::model::FigsModel;
use crate::synthetic::{generate, Block, GenKind, GenSpec};
use crate::tree::{Leaf, Tree};

/// Disjoint feature blocks of an additive model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub blocks: Vec<Vec<usize>>,
}

impl BlockSpec {
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for j in blocks.iter().flatten() {
            if !seen.insert(*j) {
                return Err(FigsError::InvalidConfig(format!("feature {j} appears in two blocks")));
            }
        }
        if blocks.iter().any(Vec::is_empty) {
            return Err(FigsError::InvalidConfig("empty block".into()));
        }
        Ok(Self { blocks })
    }

    pub fn from_components(blocks: &[Block]) -> Result<Self> {
        Self::new(blocks.iter().map(|b| b.features.clone()).collect())
    }

    /// Index of the block containing all of `features`, if any. An empty set
    /// is contained in block 0.
    pub fn containing_block(&self, features: &BTreeSet<usize>) -> Option<usize> {
        if features.is_empty() {
            return (!self.blocks.is_empty()).then_some(0);
        }
        self.blocks.iter().position(|b| features.iter().all(|f| b.contains(f)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisentanglementReport {
    pub tree_features: Vec<BTreeSet<usize>>,
    pub containing_block: Vec<Option<usize>>,
    pub pass: bool,
}

/// Passes iff every tree splits only on features of a single block.
pub fn disentanglement_report(model: &FigsModel, blocks: &BlockSpec) -> DisentanglementReport {
    let tree_features: Vec<BTreeSet<usize>> = model.trees().iter().map(Tree::split_features).collect();
    let containing_block: Vec<Option<usize>> = tree_features.iter().map(|f| blocks.containing_block(f)).collect();
    let pass = containing_block.iter().all(Option::is_some);
    DisentanglementReport { tree_features, containing_block, pass }
}

/// Cube side that balances the bias and variance terms of the oracle bound:
/// `(2 sigma^2 / (density * beta^2 * d_k * (n + 1)))^(1 / (d_k + 2))`.
pub fn side_length(sigma: f64, beta: f64, density_bound: f64, block_dim: usize, n: usize) -> f64 {
    let dk = block_dim as f64;
    let ratio = 2.0 * sigma * sigma / (density_bound * beta * beta * dk * (n as f64 + 1.0));
    ratio.powf(1.0 / (dk + 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockGrid {
    pub features: Vec<usize>,
    /// Side length from [`side_length`] before rounding.
    pub raw_side: f64,
    pub cells_per_axis: usize,
}

impl BlockGrid {
    pub fn side(&self) -> f64 {
        1.0 / self.cells_per_axis as f64
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_axis.pow(self.features.len() as u32)
    }

    /// Tree partitioning [0, 1]^{d_k} into `n_cells` cubes, all leaf values 0.
    pub fn to_tree(&self) -> Tree {
        let mut tree = Tree::constant(0.0);
        self.grow(&mut tree, 0, 0, 0, self.cells_per_axis);
        tree
    }

    fn grow(&self, tree: &mut Tree, leaf: usize, axis: usize, lo: usize, hi: usize) {
        let m = self.cells_per_axis;
        if hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let (l, r) = tree
                .split_leaf(leaf, self.features[axis], mid as f64 / m as f64, Leaf::new(0.0), Leaf::new(0.0))
                .expect("grown node is a leaf");
            self.grow(tree, l, axis, lo, mid);
            self.grow(tree, r, axis, mid, hi);
        } else if axis + 1 < self.features.len() {
            self.grow(tree, leaf, axis + 1, 0, m);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStructures {
    pub blocks: Vec<BlockGrid>,
}

/// Per-block cube grids with side `1 / ceil(1 / h_k)`, `h_k` from
/// [`side_length`]. `betas` holds one gradient bound per block; a zero bound
/// or `h_k >= 1` gives a single cell.
pub fn build_grid_structures(
    blocks: &BlockSpec,
    n: usize,
    sigma: f64,
    betas: &[f64],
    density_bound: f64,
) -> Result<GridStructures> {
    if betas.len() != blocks.blocks.len() {
        return Err(FigsError::DimensionMismatch { expected: blocks.blocks.len(), got: betas.len() });
    }
    if !(sigma > 0.0 && density_bound > 0.0) || betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) || n == 0 {
        return Err(FigsError::InvalidConfig("grid parameters must be positive".into()));
    }
    let grids = blocks
        .blocks
        .iter()
        .zip(betas)
        .map(|(features, &beta)| {
            let h = side_length(sigma, beta, density_bound, features.len(), n);
            let cells = if h >= 1.0 {
                log::info!("block {features:?}: side {h} >= 1, using a single cell");
                1
            } else {
                (1.0 / h).ceil() as usize
            };
            BlockGrid { features: features.clone(), raw_side: h, cells_per_axis: cells }
        })
        .collect();
    Ok(GridStructures { blocks: grids })
}

/// Least-squares tree-sum over fixed grid structures.
#[derive(Debug, Clone)]
pub struct ErmFit {
    pub model: FigsModel,
    /// Leaves of each tree that received no training samples (value 0).
    pub empty_leaves: Vec<BTreeSet<usize>>,
    pub cycles: usize,
}

impl ErmFit {
    /// Prediction at `x` and whether `x` lands in an empty cell of any tree.
    pub fn predict_flagged(&self, x: &[f64]) -> Result<(f64, bool)> {
        let value = self.model.predict_raw(x)?;
        let flagged = self.model.trees().iter().zip(&self.empty_leaves).any(|(t, e)| e.contains(&t.leaf_index(x)));
        Ok((value, flagged))
    }
}

const ERM_VALUE_TOL: f64 = 1e-12;
const ERM_SSE_TOL: f64 = 1e-10;
const ERM_MAX_CYCLES: usize = 10_000;

/// Minimizes training SSE over leaf values with the structures held fixed,
/// by backfitting to convergence. Empty cells keep value 0 and are flagged.
pub fn fit_erm_tree_sum(structures: &GridStructures, data: &Dataset) -> Result<ErmFit> {
    let d = data.n_features();
    if let Some(&f) = structures.blocks.iter().flat_map(|b| b.features.iter()).find(|&&f| f >= d) {
        return Err(FigsError::InvalidConfig(format!("block feature {f} out of range")));
    }
    let trees: Vec<Tree> = structures.blocks.iter().map(BlockGrid::to_tree).collect();
    let mut model = FigsModel::from_trees(trees, Task::Regression, data.weighted_target_mean(), d)?;
    let assign = assignments(&model, data)?;
    let empty_leaves = model
        .trees()
        .iter()
        .zip(&assign)
        .map(|(tree, a)| {
            let hit: BTreeSet<usize> = a.iter().copied().collect();
            tree.leaf_ids().filter(|id| !hit.contains(id)).collect()
        })
        .collect();
    let cycles = backfit_to_convergence(&mut model, data, ERM_VALUE_TOL, ERM_SSE_TOL, ERM_MAX_CYCLES)?;
    Ok(ErmFit { model, empty_leaves, cycles })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    /// Additive components of the regression function.
    pub components: Vec<Block>,
    /// Number of features; defaults to one past the largest block index.
    #[serde(default)]
    pub n_features: Option<usize>,
    pub n_grid: Vec<usize>,
    pub seeds: usize,
    pub sigma: f64,
    /// Gradient bound per block; derived from the components when omitted.
    #[serde(default)]
    pub betas: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub density_bound: f64,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn default_n_test() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub mean_mse: f64,
    /// Fraction of test points landing in an empty cell (excluded from the MSE).
    pub empty_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of log(mean MSE) against log(n).
    pub slope: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for replicate `(n, index, stream)` of an experiment.
pub fn derive_seed(base: u64, n: usize, index: usize, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(n as u64 ^ splitmix64(index as u64 ^ splitmix64(stream))))
}

/// Least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Test MSE of the oracle grid tree-sum across training sizes, and the
/// fitted log-log slope.
pub fn rate_experiment(config: &RateConfig) -> Result<RateReport> {
    if config.n_grid.len() < 4 || config.n_grid.windows(2).any(|w| w[1] <= w[0]) || config.n_grid[0] < 2 {
        return Err(FigsError::InvalidConfig("n_grid needs at least 4 increasing sizes".into()));
    }
    if config.seeds == 0 || config.n_test == 0 {
        return Err(FigsError::InvalidConfig("seeds and n_test must be >= 1".into()));
    }
    let blocks = BlockSpec::from_components(&config.components)?;
    let betas: Vec<f64> = match &config.betas {
        Some(b) => b.clone(),
        None => config.components.iter().map(|c| c.component.lipschitz(c.features.len())).collect(),
    };
    let kind = GenKind::BlockAdditive { blocks: config.components.clone() };
    let d = config.n_features.unwrap_or_else(|| kind.min_features());
    let jobs: Vec<(usize, usize)> =
        config.n_grid.iter().flat_map(|&n| (0..config.seeds).map(move |s| (n, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(n, s)| -> Result<(f64, f64)> {
            let train = generate(&GenSpec::new(kind.clone(), n, d, config.sigma, derive_seed(config.seed, n, s, 0)))?;
            let test = generate(&GenSpec::new(kind.clone(), config.n_test, d, 0.0, derive_seed(config.seed, n, s, 1)))?;
            let grid = build_grid_structures(&blocks, n, config.sigma, &betas, config.density_bound)?;
            let fit = fit_erm_tree_sum(&grid, &train.dataset)?;
            let (mut sse, mut kept, mut flagged) = (0.0, 0usize, 0usize);
            for (x, f) in test.dataset.rows().zip(&test.noiseless) {
                let (pred, empty) = fit.predict_flagged(x)?;
                if empty {
                    flagged += 1;
                } else {
                    sse += (pred - f) * (pred - f);
                    kept += 1;
                }
            }
            let mse = if kept > 0 { sse / kept as f64 } else { f64::NAN };
            Ok((mse, flagged as f64 / config.n_test as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<RateRow> = config
        .n_grid
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let chunk = &results[g * config.seeds..(g + 1) * config.seeds];
            RateRow {
                n,
                mean_mse: chunk.iter().map(|r| r.0).sum::<f64>() / config.seeds as f64,
                empty_fraction: chunk.iter().map(|r| r.1).sum::<f64>() / config.seeds as f64,
            }
        })
        .collect();
    if rows.iter().any(|r| !(r.mean_mse.is_finite() && r.mean_mse > 0.0)) {
        return Err(FigsError::InvalidData("degenerate MSE in rate experiment".into()));
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_mse.ln()).collect();
    Ok(RateReport { slope: ols_slope(&xs, &ys), rows })
}
