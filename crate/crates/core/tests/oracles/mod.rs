//! Slow, direct reference implementations used to check the library.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Decreases tie within this fraction of max(decreases, parent SSEs).
pub const TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub tree: usize,
    pub leaf: usize,
    pub feature: usize,
    pub threshold: f64,
    pub decrease: f64,
}

#[derive(Debug, Clone)]
enum ONode {
    Leaf { value: f64, members: Vec<usize> },
    Split,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sse(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum()
}

fn mid(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b || m < a {
        a
    } else {
        m
    }
}

fn greater(a: f64, b: f64, scale: f64) -> bool {
    a - b > TIE_RTOL * a.abs().max(b.abs()).max(scale)
}

/// Every admissible split of `members`, in (feature, threshold) order, with
/// its impurity decrease computed from scratch, plus the parent SSE.
fn leaf_splits(x: &[Vec<f64>], r: &[f64], members: &[usize]) -> (Vec<(usize, f64, f64)>, f64) {
    let vals: Vec<f64> = members.iter().map(|&i| r[i]).collect();
    let parent = sse(&vals);
    let mut out = Vec::new();
    if members.len() < 2 || parent <= 0.0 {
        return (out, parent);
    }
    #[allow(clippy::needless_range_loop)]
    for f in 0..x[0].len() {
        let mut distinct: Vec<f64> = members.iter().map(|&i| x[i][f]).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        for w in distinct.windows(2) {
            let t = mid(w[0], w[1]);
            let (l, rr): (Vec<f64>, Vec<f64>) = {
                let mut l = Vec::new();
                let mut rr = Vec::new();
                for &i in members {
                    if x[i][f] <= t {
                        l.push(r[i]);
                    } else {
                        rr.push(r[i]);
                    }
                }
                (l, rr)
            };
            let dec = (parent - sse(&l) - sse(&rr)).max(0.0);
            if dec > 0.0 && dec > 1e-12 * parent {
                out.push((f, t, dec));
            }
        }
    }
    (out, parent)
}

/// Greedy tree-sum growth by exhaustive enumeration: each step scores every
/// split of every leaf of every tree plus a new tree's root and commits the
/// best, ties going to the earliest (tree, leaf, feature, threshold) with new
/// trees last.
pub fn greedy_trace(x: &[Vec<f64>], y: &[f64], max_splits: usize, allow_new: bool) -> Vec<Step> {
    let n = y.len();
    let mut trees: Vec<Vec<ONode>> = Vec::new();
    let mut r = y.to_vec();
    let mut steps = Vec::new();
    while steps.len() < max_splits {
        let mut best: Option<(usize, usize, usize, f64, f64, f64)> = None;
        let mut consider = |tree: usize, leaf: usize, members: &[usize], r: &[f64]| {
            let (splits, parent) = leaf_splits(x, r, members);
            for (f, t, dec) in splits {
                if best.is_none_or(|b| greater(dec, b.4, parent.max(b.5))) {
                    best = Some((tree, leaf, f, t, dec, parent));
                }
            }
        };
        for (k, tree) in trees.iter().enumerate() {
            for (id, node) in tree.iter().enumerate() {
                if let ONode::Leaf { members, .. } = node {
                    consider(k, id, members, &r);
                }
            }
        }
        if allow_new || trees.is_empty() {
            let all: Vec<usize> = (0..n).collect();
            consider(trees.len(), 0, &all, &r);
        }
        let Some((k, leaf, f, t, dec, _)) = best else { break };
        if k == trees.len() {
            trees.push(vec![ONode::Leaf { value: 0.0, members: (0..n).collect() }]);
        }
        let tree = &mut trees[k];
        let ONode::Leaf { value, members } = std::mem::replace(&mut tree[leaf], ONode::Split) else { unreachable!() };
        let (left, right): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| x[i][f] <= t);
        for side in [left, right] {
            let m = mean(&side.iter().map(|&i| r[i]).collect::<Vec<_>>());
            for &i in &side {
                r[i] -= m;
            }
            tree.push(ONode::Leaf { value: value + m, members: side });
        }
        steps.push(Step { tree: k, leaf, feature: f, threshold: t, decrease: dec });
    }
    steps
}

/// AUC from all positive/negative pairs, ties counting one half.
pub fn pairwise_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let (mut wins, mut ties, mut pairs) = (0u64, 0u64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1.0 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0.0 {
                continue;
            }
            pairs += 1;
            if si > sj {
                wins += 1;
            } else if si == sj {
                ties += 1;
            }
        }
    }
    (2 * wins + ties) as f64 / (2 * pairs) as f64
}

/// Best specificity over every threshold `t` (each score and +inf) whose
/// rule `score >= t` reaches the sensitivity level.
pub fn sweep_specificity(scores: &[f64], labels: &[f64], level: f64) -> f64 {
    let pos = labels.iter().filter(|&&l| l == 1.0).count();
    let neg = labels.len() - pos;
    let mut best = 0.0f64;
    let candidates = scores.iter().copied().chain(std::iter::once(f64::INFINITY));
    for t in candidates {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l == 1.0).count();
        let tn = scores.iter().zip(labels).filter(|(s, l)| **s < t && **l == 0.0).count();
        if tp as f64 / pos as f64 >= level {
            best = best.max(tn as f64 / neg as f64);
        }
    }
    best
}

/// Minimum residual sum of squares of `y` on the columns of `design`.
pub fn least_squares_sse(design: &DMatrix<f64>, y: &[f64]) -> f64 {
    let b = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let beta = svd.solve(&b, 1e-10).expect("svd solve");
    let resid = &b - design * beta;
    resid.norm_squared()
}

/// Normalized decision-stump column for a split of `members` at
/// `x[feature] <= threshold`; zero outside `members`.
pub fn stump(x: &[Vec<f64>], members: &[usize], feature: usize, threshold: f64) -> Vec<f64> {
    let nl = members.iter().filter(|&&i| x[i][feature] <= threshold).count() as f64;
    let nn = members.len() as f64;
    let nr = nn - nl;
    let norm = (nn * nl * nr).sqrt();
    let mut psi = vec![0.0; x.len()];
    for &i in members {
        psi[i] = if x[i][feature] <= threshold { nr / norm } else { -nl / norm };
    }
    psi
}
