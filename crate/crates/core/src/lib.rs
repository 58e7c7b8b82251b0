//! Fast Interpretable Greedy-Tree Sums (FIGS).
//!
//! FIGS grows a sum of binary trees greedily: every iteration scores the best
//! split of each leaf of each tree, plus a root split for a brand-new tree,
//! against the current residuals and commits the single best one. With new
//! trees disabled the procedure is plain CART.
//!
//! Besides fitting, the crate provides instance-weighted per-group fitting
//! (G-FIGS), bagged ensembles, evaluation metrics and diagnostics, synthetic
//! generators, and oracle grid tree-sums for checking generalization rates.

pub mod backfit;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod fit;
pub mod model;
pub mod split;
pub mod synthetic;
pub mod theory;
pub mod tree;
pub mod weighting;

pub use backfit::backfit;
pub use data::{Dataset, Task};
pub use ensemble::{bootstrap_sample, fit_bagging_figs, predict_ensemble, EnsembleConfig, FigsEnsemble, MaxFeatures};
pub use error::{FigsError, Result};
pub use fit::{fit_cart, fit_figs, fit_figs_traced, FitConfig, SplitEvent};
pub use model::FigsModel;
pub use split::{find_best_split, stump_feature, weighted_impurity_decrease, LeafSplit, SplitCandidate, SplitRules, TreeSlot};
pub use tree::{Leaf, Node, Tree};
pub use weighting::{
    class_weights, fit_gfigs, fit_membership_model, membership_weights, GFigsConfig, GFigsModel, GroupedDataset,
    MembershipConfig, MembershipModel, MembershipSource,
};
