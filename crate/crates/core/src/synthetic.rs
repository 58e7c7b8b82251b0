//! Seeded generators for the simulation suite.
//!
//! Features are i.i.d. Uniform[0, 1] except for the toy model, which uses
//! Uniform[-1, 1] so its thresholds at 0 are interior. Targets get additive
//! Gaussian noise; the noiseless targets are returned alongside.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{FigsError, Result};

/// Function of the features in one additive block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Component {
    /// `coef * sum(x_j)`
    Linear { coef: f64 },
    /// `scale * prod(1{x_j > threshold})`
    AllAbove { threshold: f64, scale: f64 },
    /// `coef * prod(x_j)`
    Product { coef: f64 },
    /// `amplitude * sum(sin(2 pi frequency x_j))`
    Sine { amplitude: f64, frequency: f64 },
    Zero,
}

impl Component {
    pub fn eval(&self, xs: impl Iterator<Item = f64>) -> f64 {
        match *self {
            Component::Linear { coef } => coef * xs.sum::<f64>(),
            Component::AllAbove { threshold, scale } => {
                if xs.into_iter().all(|x| x > threshold) {
                    scale
                } else {
                    0.0
                }
            }
            Component::Product { coef } => coef * xs.product::<f64>(),
            Component::Sine { amplitude, frequency } => {
                amplitude * xs.map(|x| (2.0 * std::f64::consts::PI * frequency * x).sin()).sum::<f64>()
            }
            Component::Zero => 0.0,
        }
    }

    /// Upper bound on the gradient norm over [0, 1]^k, for `k` block features.
    pub fn lipschitz(&self, k: usize) -> f64 {
        match *self {
            Component::Linear { coef } => coef.abs() * (k as f64).sqrt(),
            Component::Product { coef } => coef.abs() * (k as f64).sqrt(),
            Component::Sine { amplitude, frequency } => {
                (amplitude * 2.0 * std::f64::consts::PI * frequency).abs() * (k as f64).sqrt()
            }
            Component::Zero => 0.0,
            Component::AllAbove { .. } => f64::INFINITY,
        }
    }
}

/// One additive block: a component applied to a set of feature indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub features: Vec<usize>,
    pub component: Component,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenKind {
    /// `1{x0 > 0} + 1{x1 > 0} * 1{x2 > 0}` on [-1, 1]^d. Samples come in
    /// mirrored blocks of 8 covering every sign pattern of `x0..x2`.
    Toy,
    /// `sum_{k<20} x_k`
    Linear,
    /// `prod_{k<8} 1{x_k > 0.1}`
    SingleInteraction,
    /// `sum_{k<5} x_{3k} x_{3k+1} x_{3k+2}`
    PolySum,
    /// Local spiky sparse: `sum_{k<5} 1{x_{3k}, x_{3k+1}, x_{3k+2} > 0.5}`
    Lss,
    /// `10 sin(pi x0 x1) + 20 (x2 - 0.5)^2 + 10 x3 + 5 x4`
    Friedman1,
    /// `sum_k f_k(x_{I_k})` over disjoint blocks.
    BlockAdditive { blocks: Vec<Block> },
    /// Two groups `a`/`b` with `P(b | x) = sigmoid(8 (x0 - 0.5))`. Binary
    /// outcome with `P(y = 1) = 0.1 + 0.8 * 1{x1 > 0.5, x2 > 0.5}` in group a and
    /// `0.1 + 0.8 * 1{x3 > 0.6}` in group b.
    GroupedClassification,
}

impl GenKind {
    /// Smallest `d` the generator supports.
    pub fn min_features(&self) -> usize {
        match self {
            GenKind::Toy => 3,
            GenKind::Linear => 20,
            GenKind::SingleInteraction => 8,
            GenKind::PolySum | GenKind::Lss => 15,
            GenKind::Friedman1 => 5,
            GenKind::BlockAdditive { blocks } => {
                blocks.iter().flat_map(|b| b.features.iter()).max().map_or(0, |m| m + 1)
            }
            GenKind::GroupedClassification => 4,
        }
    }

    pub fn task(&self) -> Task {
        match self {
            GenKind::GroupedClassification => Task::BinaryClassification,
            _ => Task::Regression,
        }
    }

    fn domain(&self) -> (f64, f64) {
        match self {
            GenKind::Toy => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    /// Noiseless regression function (success probability for the
    /// classification generator, group `b` when `in_group_b`).
    pub fn regression_function(&self, x: &[f64], in_group_b: bool) -> f64 {
        let ind = |c: bool| f64::from(u8::from(c));
        match self {
            GenKind::Toy => ind(x[0] > 0.0) + ind(x[1] > 0.0) * ind(x[2] > 0.0),
            GenKind::Linear => x[..20].iter().sum(),
            GenKind::SingleInteraction => ind(x[..8].iter().all(|&v| v > 0.1)),
            GenKind::PolySum => (0..5).map(|k| x[3 * k] * x[3 * k + 1] * x[3 * k + 2]).sum(),
            GenKind::Lss => (0..5).map(|k| ind(x[3 * k..3 * k + 3].iter().all(|&v| v > 0.5))).sum(),
            GenKind::Friedman1 => {
                10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
                    + 20.0 * (x[2] - 0.5).powi(2)
                    + 10.0 * x[3]
                    + 5.0 * x[4]
            }
            GenKind::BlockAdditive { blocks } => {
                blocks.iter().map(|b| b.component.eval(b.features.iter().map(|&j| x[j]))).sum()
            }
            GenKind::GroupedClassification => {
                if in_group_b {
                    0.1 + 0.8 * ind(x[3] > 0.6)
                } else {
                    0.1 + 0.8 * ind(x[1] > 0.5 && x[2] > 0.5)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    #[serde(flatten)]
    pub kind: GenKind,
    pub n: usize,
    pub d: usize,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

impl GenSpec {
    pub fn new(kind: GenKind, n: usize, d: usize, noise_sd: f64, seed: u64) -> Self {
        Self { kind, n, d, noise_sd, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(FigsError::InvalidConfig("n must be >= 1".into()));
        }
        if self.d < self.kind.min_features() {
            return Err(FigsError::InvalidConfig(format!(
                "generator needs at least {} features, got {}",
                self.kind.min_features(),
                self.d
            )));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(FigsError::InvalidConfig("noise_sd must be finite and >= 0".into()));
        }
        if let GenKind::BlockAdditive { blocks } = &self.kind {
            let mut seen = std::collections::BTreeSet::new();
            for j in blocks.iter().flat_map(|b| b.features.iter()) {
                if !seen.insert(*j) {
                    return Err(FigsError::InvalidConfig(format!("feature {j} appears in two blocks")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// Targets without observation noise.
    pub noiseless: Vec<f64>,
    pub groups: Option<Vec<String>>,
}

/// Draws a dataset. The same spec always yields the same bytes.
pub fn generate(spec: &GenSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.kind.domain();
    let grouped = matches!(spec.kind, GenKind::GroupedClassification);
    let mut features = Vec::with_capacity(spec.n * spec.d);
    let mut targets = Vec::with_capacity(spec.n);
    let mut noiseless = Vec::with_capacity(spec.n);
    let mut groups = grouped.then(|| Vec::with_capacity(spec.n));
    let toy = matches!(spec.kind, GenKind::Toy);
    let mut magnitudes = [0.0f64; 3];
    for i in 0..spec.n {
        let start = features.len();
        if toy {
            // Blocks of 8 consecutive samples share |x0|, |x1|, |x2| and take
            // all 8 sign patterns, so the sample is symmetric about 0 in each.
            if i % 8 == 0 {
                magnitudes = [0.0; 3].map(|_| 1.0 - rng.random::<f64>());
            }
            features.extend((0..spec.d).map(|j| match j {
                0..3 if (i >> j) & 1 == 1 => magnitudes[j],
                0..3 => -magnitudes[j],
                _ => lo + (hi - lo) * rng.random::<f64>(),
            }));
        } else {
            features.extend((0..spec.d).map(|_| lo + (hi - lo) * rng.random::<f64>()));
        }
        let x = &features[start..];
        if grouped {
            let p_b = 1.0 / (1.0 + (-8.0 * (x[0] - 0.5)).exp());
            let in_b = rng.random::<f64>() < p_b;
            let prob = spec.kind.regression_function(x, in_b);
            targets.push(f64::from(u8::from(rng.random::<f64>() < prob)));
            noiseless.push(prob);
            if let Some(g) = groups.as_mut() {
                g.push(if in_b { "b" } else { "a" }.to_string());
            }
        } else {
            let f = spec.kind.regression_function(x, false);
            let eps: f64 = if spec.noise_sd > 0.0 { spec.noise_sd * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
            noiseless.push(f);
            targets.push(f + eps);
        }
    }
    let dataset = Dataset::from_flat(spec.n, spec.d, features, targets)?
        .with_feature_names((0..spec.d).map(|j| format!("x{j}")).collect())?;
    Ok(SyntheticData { dataset, noiseless, groups })
}
