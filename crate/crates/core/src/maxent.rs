//! Maximum-entropy (multinomial logistic) baseline: the non-sequential
//! counterpart of the CRF, trained on tweets in isolation with the same
//! inverse-frequency class weighting.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::crf::CategoryWeights;
use crate::features::FeatureLayout;
use crate::label::{StanceLabel, NUM_LABELS};
use crate::numeric::{self, Mat};
use crate::optim::{lbfgs, LbfgsConfig};

const L: usize = NUM_LABELS;

#[derive(Debug, Clone, PartialEq)]
pub enum MaxEntError {
    DimensionMismatch { expected: usize, got: usize },
    /// Inverse-frequency weights need every category present.
    ZeroCount(StanceLabel),
    UnlabelledInstance,
    EmptyTrainingSet,
    OptimizationDiverged,
}

impl core::fmt::Display for MaxEntError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MaxEntError::DimensionMismatch { expected, got } => {
                write!(f, "feature width {got} does not match model width {expected}")
            }
            MaxEntError::ZeroCount(l) => write!(f, "no training instances for label {l}"),
            MaxEntError::UnlabelledInstance => f.write_str("unlabelled training instance"),
            MaxEntError::EmptyTrainingSet => f.write_str("no training instances"),
            MaxEntError::OptimizationDiverged => f.write_str("optimization diverged"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MaxEntError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntModel {
    /// 4 x d weight matrix.
    pub weights: Mat,
    pub bias: [f64; L],
    pub feature_layout: FeatureLayout,
}

impl MaxEntModel {
    pub fn zeros(dim: usize, feature_layout: FeatureLayout) -> Self {
        MaxEntModel {
            weights: Mat::zeros(L, dim),
            bias: [0.0; L],
            feature_layout,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }
}

/// softmax(weights . x + bias).
pub fn predict_proba(x: &[f64], model: &MaxEntModel) -> Result<[f64; L], MaxEntError> {
    if x.len() != model.dim() {
        return Err(MaxEntError::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    let mut scores = model.bias;
    for (y, s) in scores.iter_mut().enumerate() {
        *s += numeric::dot(model.weights.row(y), x);
    }
    let z = numeric::logsumexp(&scores);
    for s in scores.iter_mut() {
        *s = numeric::exp(*s - z);
    }
    Ok(scores)
}

/// Most probable label, ties broken by canonical order.
pub fn predict(x: &[f64], model: &MaxEntModel) -> Result<StanceLabel, MaxEntError> {
    let probs = predict_proba(x, model)?;
    let mut best = 0;
    for y in 1..L {
        if probs[y] > probs[best] {
            best = y;
        }
    }
    Ok(StanceLabel::from_index(best).unwrap())
}

/// Inverse-frequency weights w_c = N / (4 * count_c).
pub fn category_weights(counts: &[u64; L]) -> Result<CategoryWeights, MaxEntError> {
    let total: u64 = counts.iter().sum();
    let mut values = [0.0; L];
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(MaxEntError::ZeroCount(StanceLabel::from_index(i).unwrap()));
        }
        values[i] = total as f64 / (L as f64 * c as f64);
    }
    Ok(CategoryWeights::new(values).expect("weights are positive by construction"))
}

/// One labelled tweet.
#[derive(Debug, Clone)]
pub struct Instance {
    pub features: Vec<f64>,
    pub label: Option<StanceLabel>,
}

/// Weighted NLL and gradient in flat parameter space [weights, bias].
fn nll_grad_flat(
    flat: &[f64],
    dim: usize,
    instances: &[Instance],
    weights: &CategoryWeights,
    l2: f64,
    grad: &mut [f64],
) -> Result<f64, MaxEntError> {
    for g in grad.iter_mut() {
        *g = 0.0;
    }
    let w_at = |y: usize, j: usize| flat[y * dim + j];
    let bias_at = |y: usize| flat[L * dim + y];
    let mut loss = 0.0;
    for inst in instances {
        let gold = inst.label.ok_or(MaxEntError::UnlabelledInstance)?;
        if inst.features.len() != dim {
            return Err(MaxEntError::DimensionMismatch {
                expected: dim,
                got: inst.features.len(),
            });
        }
        let mut scores = [0.0; L];
        for (y, s) in scores.iter_mut().enumerate() {
            *s = bias_at(y);
            for (j, &xj) in inst.features.iter().enumerate() {
                *s += w_at(y, j) * xj;
            }
        }
        let z = numeric::logsumexp(&scores);
        let w = weights.get(gold);
        loss += w * (z - scores[gold.index()]);
        for y in 0..L {
            let p = numeric::exp(scores[y] - z);
            let coeff = w * (p - if y == gold.index() { 1.0 } else { 0.0 });
            for (j, &xj) in inst.features.iter().enumerate() {
                grad[y * dim + j] += coeff * xj;
            }
            grad[L * dim + y] += coeff;
        }
    }
    loss += 0.5 * l2 * numeric::dot(flat, flat);
    for (g, p) in grad.iter_mut().zip(flat) {
        *g += l2 * p;
    }
    Ok(loss)
}

/// Weighted NLL and gradient for a model (used by gradient-check tests and
/// by training).
pub fn nll_and_gradient(
    model: &MaxEntModel,
    instances: &[Instance],
    weights: &CategoryWeights,
    l2: f64,
) -> Result<(f64, Vec<f64>), MaxEntError> {
    let dim = model.dim();
    let mut flat = model.weights.data().to_vec();
    flat.extend_from_slice(&model.bias);
    let mut grad = alloc::vec![0.0; flat.len()];
    let loss = nll_grad_flat(&flat, dim, instances, weights, l2, &mut grad)?;
    Ok((loss, grad))
}

#[derive(Debug, Clone)]
pub struct MaxEntTrainConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MaxEntTrainConfig {
    fn default() -> Self {
        MaxEntTrainConfig {
            l2: 1e-2,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

/// L-BFGS from zero initialization; the objective is convex.
pub fn train(
    instances: &[Instance],
    weights: &CategoryWeights,
    config: &MaxEntTrainConfig,
    feature_layout: FeatureLayout,
) -> Result<MaxEntModel, MaxEntError> {
    let dim = instances
        .first()
        .map(|i| i.features.len())
        .ok_or(MaxEntError::EmptyTrainingSet)?;
    train_with_init(
        MaxEntModel::zeros(dim, feature_layout),
        instances,
        weights,
        config,
    )
}

/// Training from an explicit initialization (the optimum is unique, so any
/// init converges to the same objective value).
pub fn train_with_init(
    init: MaxEntModel,
    instances: &[Instance],
    weights: &CategoryWeights,
    config: &MaxEntTrainConfig,
) -> Result<MaxEntModel, MaxEntError> {
    let dim = init.dim();
    let mut failure: Option<MaxEntError> = None;
    let objective = |flat: &[f64], grad: &mut [f64]| -> f64 {
        match nll_grad_flat(flat, dim, instances, weights, config.l2, grad) {
            Ok(loss) => loss,
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        }
    };
    let mut x0 = init.weights.data().to_vec();
    x0.extend_from_slice(&init.bias);
    let cfg = LbfgsConfig {
        max_iter: config.max_iter,
        tol: config.tol,
        ..Default::default()
    };
    let outcome = lbfgs(objective, x0, &cfg);
    if let Some(e) = failure {
        return Err(e);
    }
    let outcome = outcome.map_err(|_| MaxEntError::OptimizationDiverged)?;
    let mut model = init;
    model.weights = Mat::from_data(L, dim, outcome.x[..L * dim].to_vec());
    model.bias.copy_from_slice(&outcome.x[L * dim..]);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_is_uniform() {
        let model = MaxEntModel::zeros(3, FeatureLayout::default());
        let p = predict_proba(&[0.5, -1.0, 2.0], &model).unwrap();
        for &x in &p {
            assert_relative_eq!(x, 0.25, epsilon = 1e-12);
        }
        assert!(matches!(
            predict_proba(&[1.0], &model),
            Err(MaxEntError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bias_shift_invariance_and_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut model = MaxEntModel::zeros(2, FeatureLayout::default());
        for y in 0..L {
            for j in 0..2 {
                model.weights.set(y, j, rng.gen_range(-1.0..1.0));
            }
            model.bias[y] = rng.gen_range(-1.0..1.0);
        }
        let x = [0.7, -0.3];
        let p = predict_proba(&x, &model).unwrap();
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-9);

        let mut shifted = model.clone();
        for b in shifted.bias.iter_mut() {
            *b += 5.0;
        }
        let q = predict_proba(&x, &shifted).unwrap();
        for y in 0..L {
            assert_relative_eq!(p[y], q[y], epsilon = 1e-12);
        }
    }

    #[test]
    fn inverse_frequency_weights_match_hand_arithmetic() {
        // per-category totals of the eight-event corpus
        let counts = [910u64, 344, 358, 2907];
        let w = category_weights(&counts).unwrap();
        assert_relative_eq!(
            w.get(StanceLabel::Deny),
            4519.0 / (4.0 * 344.0),
            epsilon = 1e-12
        );
        assert_relative_eq!(w.get(StanceLabel::Deny), 3.2842, epsilon = 1e-4);
        // identity: sum_c w_c * count_c = N
        let total: f64 = StanceLabel::ALL
            .iter()
            .map(|&l| w.get(l) * counts[l.index()] as f64)
            .sum();
        assert_relative_eq!(total, 4519.0, epsilon = 1e-9);

        let uniform = category_weights(&[5, 5, 5, 5]).unwrap();
        for &l in &StanceLabel::ALL {
            assert_relative_eq!(uniform.get(l), 1.0, epsilon = 1e-12);
        }

        assert_eq!(
            category_weights(&[1, 0, 1, 1]).err(),
            Some(MaxEntError::ZeroCount(StanceLabel::Deny))
        );
    }

    fn random_instances(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Instance> {
        (0..n)
            .map(|_| Instance {
                features: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                label: StanceLabel::from_index(rng.gen_range(0..4)),
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 3;
        for _ in 0..25 {
            let instances = random_instances(&mut rng, 6, dim);
            let weights = CategoryWeights::new([0.6, 1.8, 1.1, 0.5]).unwrap();
            let l2 = 0.02;
            let flat: Vec<f64> = (0..L * dim + L).map(|_| rng.gen_range(-0.7..0.7)).collect();
            let mut grad = vec![0.0; flat.len()];
            let _ = nll_grad_flat(&flat, dim, &instances, &weights, l2, &mut grad).unwrap();
            let eps = 1e-6;
            for k in 0..flat.len() {
                let mut plus = flat.clone();
                plus[k] += eps;
                let mut minus = flat.clone();
                minus[k] -= eps;
                let mut scratch = vec![0.0; flat.len()];
                let lp =
                    nll_grad_flat(&plus, dim, &instances, &weights, l2, &mut scratch).unwrap();
                let lm =
                    nll_grad_flat(&minus, dim, &instances, &weights, l2, &mut scratch).unwrap();
                let fd = (lp - lm) / (2.0 * eps);
                let denom =
                    numeric::max(numeric::max(numeric::abs(fd), numeric::abs(grad[k])), 1.0);
                assert!(
                    numeric::abs(fd - grad[k]) / denom < 1e-6,
                    "component {k}: fd={fd} analytic={}",
                    grad[k]
                );
            }
        }
    }

    #[test]
    fn separable_data_reaches_full_training_accuracy() {
        let mut instances = Vec::new();
        for rep in 0..5 {
            let _ = rep;
            for y in 0..L {
                let mut features = vec![0.0; L];
                features[y] = 1.0;
                instances.push(Instance {
                    features,
                    label: StanceLabel::from_index(y),
                });
            }
        }
        let model = train(
            &instances,
            &CategoryWeights::uniform(),
            &MaxEntTrainConfig {
                l2: 1e-4,
                max_iter: 300,
                tol: 1e-8,
            },
            FeatureLayout::default(),
        )
        .unwrap();
        for inst in &instances {
            assert_eq!(predict(&inst.features, &model).unwrap(), inst.label.unwrap());
        }
    }

    #[test]
    fn huge_l2_shrinks_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let instances = random_instances(&mut rng, 12, 2);
        let model = train(
            &instances,
            &CategoryWeights::uniform(),
            &MaxEntTrainConfig {
                l2: 1e6,
                max_iter: 200,
                tol: 1e-9,
            },
            FeatureLayout::default(),
        )
        .unwrap();
        let mut flat = model.weights.data().to_vec();
        flat.extend_from_slice(&model.bias);
        assert!(numeric::norm2(&flat) < 1e-3);
    }

    #[test]
    fn convexity_two_initializations_reach_same_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let instances = random_instances(&mut rng, 20, 3);
        let weights = CategoryWeights::new([1.2, 0.8, 1.0, 1.5]).unwrap();
        let cfg = MaxEntTrainConfig {
            l2: 0.1,
            max_iter: 500,
            tol: 1e-9,
        };
        let from_zero = train(&instances, &weights, &cfg, FeatureLayout::default()).unwrap();

        let mut init = MaxEntModel::zeros(3, FeatureLayout::default());
        for y in 0..L {
            for j in 0..3 {
                init.weights.set(y, j, rng.gen_range(-2.0..2.0));
            }
            init.bias[y] = rng.gen_range(-2.0..2.0);
        }
        let from_random = train_with_init(init, &instances, &weights, &cfg).unwrap();

        let (a, _) = nll_and_gradient(&from_zero, &instances, &weights, 0.1).unwrap();
        let (b, _) = nll_and_gradient(&from_random, &instances, &weights, 0.1).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-6);
    }
}
