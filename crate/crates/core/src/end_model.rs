//! Logistic regression trained on soft labels by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::label_model::Posterior;
use crate::sparse::SparseVec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Recorded for provenance; training itself is deterministic (zero init).
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            epochs: 500,
            l2: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.l2.is_nan() || self.l2 < 0.0 {
            return Err(Error::Config("end_model.learning_rate must be > 0 and l2 >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Accuracy,
    F1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: TrainConfig,
}

impl LinearModel {
    pub fn zero(dim: usize, config: TrainConfig) -> Self {
        LinearModel {
            weights: vec![0.0; dim],
            bias: 0.0,
            config,
        }
    }

    pub fn margin(&self, x: &SparseVec) -> f64 {
        x.dot_dense(&self.weights) + self.bias
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Mean soft cross-entropy plus `(l2/2)·‖w‖²` (bias unregularized).
pub fn objective(model: &LinearModel, data: &[(&SparseVec, f64)], l2: f64) -> f64 {
    let n = data.len() as f64;
    let ce: f64 = data
        .iter()
        .map(|(x, q)| {
            let z = model.margin(x);
            // -q ln σ(z) - (1-q) ln(1-σ(z))
            q * softplus(-z) + (1.0 - q) * softplus(z)
        })
        .sum();
    ce / n + 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`objective`] as `(∂w, ∂b)`.
pub fn gradient(model: &LinearModel, data: &[(&SparseVec, f64)], l2: f64) -> (Vec<f64>, f64) {
    let n = data.len() as f64;
    let mut gw: Vec<f64> = model.weights.iter().map(|w| l2 * w).collect();
    let mut gb = 0.0;
    for (x, q) in data {
        let r = (sigmoid(model.margin(x)) - q) / n;
        for (j, v) in x.iter() {
            gw[j as usize] += r * v;
        }
        gb += r;
    }
    (gw, gb)
}

/// Soft-label training set: covered posterior rows with `q = P(+1 | L)`.
pub fn training_set<'a>(corpus: &'a Corpus, posterior: &Posterior) -> Vec<(&'a SparseVec, f64)> {
    (0..posterior.len())
        .filter(|&r| posterior.covered[r])
        .map(|r| (&corpus.example(posterior.rows[r]).features, posterior.p_pos[r]))
        .collect()
}

pub fn train(corpus: &Corpus, posterior: &Posterior, config: &TrainConfig) -> Result<LinearModel> {
    train_with_trace(corpus, posterior, config).map(|(m, _)| m)
}

/// Trains and returns the objective value before each epoch plus the final one.
pub fn train_with_trace(
    corpus: &Corpus,
    posterior: &Posterior,
    config: &TrainConfig,
) -> Result<(LinearModel, Vec<f64>)> {
    let data = training_set(corpus, posterior);
    if data.is_empty() {
        return Err(Error::Untrainable);
    }
    Ok(fit_data(&data, corpus.feature_dim, config, true))
}

pub(crate) fn fit_data(
    data: &[(&SparseVec, f64)],
    dim: usize,
    config: &TrainConfig,
    trace: bool,
) -> (LinearModel, Vec<f64>) {
    let mut model = LinearModel::zero(dim, config.clone());
    let mut losses = Vec::new();
    for _ in 0..config.epochs {
        if trace {
            losses.push(objective(&model, data, config.l2));
        }
        let (gw, gb) = gradient(&model, data, config.l2);
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= config.learning_rate * g;
        }
        model.bias -= config.learning_rate * gb;
    }
    if trace {
        losses.push(objective(&model, data, config.l2));
    }
    (model, losses)
}

/// `score = σ(w·x + b)`; label is +1 iff `score >= 0.5`.
pub fn predict(model: &LinearModel, x: &SparseVec) -> (Label, f64) {
    let score = sigmoid(model.margin(x));
    let label = if score >= 0.5 { Label::Pos } else { Label::Neg };
    (label, score)
}

pub fn evaluate(model: &LinearModel, corpus: &Corpus, split: &[usize], metric: Metric) -> Result<f64> {
    let pairs: Vec<(Label, Label)> = split
        .iter()
        .map(|&i| {
            let e = corpus.example(i);
            (predict(model, &e.features).0, e.gold.unwrap_or(Label::Pos))
        })
        .collect();
    let missing = split.iter().filter(|&&i| corpus.gold(i).is_none()).count();
    if missing > 0 {
        return Err(Error::MissingGoldOnSplit(missing));
    }
    score_pairs(&pairs, metric)
}

/// Metric over `(predicted, gold)` pairs.
pub fn score_pairs(pairs: &[(Label, Label)], metric: Metric) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptySplit);
    }
    Ok(match metric {
        Metric::Accuracy => pairs.iter().filter(|(p, g)| p == g).count() as f64 / pairs.len() as f64,
        Metric::F1 => {
            let tp = pairs.iter().filter(|(p, g)| *p == Label::Pos && *g == Label::Pos).count() as f64;
            let fp = pairs.iter().filter(|(p, g)| *p == Label::Pos && *g == Label::Neg).count() as f64;
            let fneg = pairs.iter().filter(|(p, g)| *p == Label::Neg && *g == Label::Pos).count() as f64;
            if tp == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fneg)
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn l(v: i8) -> Label {
        Label::from_vote(v).unwrap()
    }

    #[test]
    fn two_separable_points_fit_perfectly() {
        let a = SparseVec::from_dense(&[1.0, 0.0]);
        let b = SparseVec::from_dense(&[0.0, 1.0]);
        let data = vec![(&a, 1.0), (&b, 0.0)];
        let (m, losses) = fit_data(&data, 2, &TrainConfig::default(), true);
        assert_eq!(predict(&m, &a).0, Label::Pos);
        assert_eq!(predict(&m, &b).0, Label::Neg);
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn symmetric_targets_keep_zero_weights() {
        let a = SparseVec::from_dense(&[1.0, 0.5]);
        let b = SparseVec::from_dense(&[0.2, 1.0]);
        let (m, _) = fit_data(&[(&a, 0.5), (&b, 0.5)], 2, &TrainConfig::default(), false);
        assert!(m.weights.iter().all(|&w| w == 0.0));
        assert_eq!(m.bias, 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let xs: Vec<SparseVec> = (0..5)
                .map(|_| SparseVec::from_dense(&(0..8).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
                .collect();
            let data: Vec<(&SparseVec, f64)> = xs.iter().map(|x| (x, rng.random_range(0.0..1.0))).collect();
            let mut m = LinearModel::zero(8, TrainConfig::default());
            for w in &mut m.weights {
                *w = rng.random_range(-1.0..1.0);
            }
            m.bias = rng.random_range(-1.0..1.0);
            let l2 = 0.1;
            let (gw, gb) = gradient(&m, &data, l2);
            let h = 1e-5;
            #[allow(clippy::needless_range_loop)]
        for j in 0..9 {
                let mut plus = m.clone();
                let mut minus = m.clone();
                if j < 8 {
                    plus.weights[j] += h;
                    minus.weights[j] -= h;
                } else {
                    plus.bias += h;
                    minus.bias -= h;
                }
                let fd = (objective(&plus, &data, l2) - objective(&minus, &data, l2)) / (2.0 * h);
                let an = if j < 8 { gw[j] } else { gb };
                let rel = (fd - an).abs() / an.abs().max(1e-3);
                assert!(rel < 1e-5, "coord {j}: fd {fd} vs analytic {an}");
            }
        }
    }

    #[test]
    fn zero_model_ties_to_positive() {
        let m = LinearModel::zero(3, TrainConfig::default());
        let (label, score) = predict(&m, &SparseVec::from_dense(&[1.0, 2.0, 0.0]));
        assert_eq!(score, 0.5);
        assert_eq!(label, Label::Pos);
    }

    #[test]
    fn large_margin_saturates() {
        let mut m = LinearModel::zero(1, TrainConfig::default());
        m.weights[0] = 100.0;
        let (label, score) = predict(&m, &SparseVec::from_dense(&[1.0]));
        assert_eq!(label, Label::Pos);
        assert!(score > 1.0 - 1e-12);
    }

    #[test]
    fn label_flip_negates_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<SparseVec> = (0..12)
            .map(|_| SparseVec::from_dense(&(0..4).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>()))
            .collect();
        let qs: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
        let data: Vec<(&SparseVec, f64)> = xs.iter().zip(&qs).map(|(x, &q)| (x, q)).collect();
        let flipped: Vec<(&SparseVec, f64)> = xs.iter().zip(&qs).map(|(x, &q)| (x, 1.0 - q)).collect();
        let cfg = TrainConfig { epochs: 200, ..Default::default() };
        let (a, _) = fit_data(&data, 4, &cfg, false);
        let (b, _) = fit_data(&flipped, 4, &cfg, false);
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa + wb).abs() < 1e-9);
        }
        for x in &xs {
            let (ma, mb) = (a.margin(x), b.margin(x));
            if ma.abs() > 1e-9 {
                assert_ne!(predict(&a, x).0, predict(&b, x).0);
            }
            assert!((ma + mb).abs() < 1e-9);
        }
    }

    #[test]
    fn metrics_by_hand() {
        let perfect = [(l(1), l(1)), (l(-1), l(-1))];
        assert_eq!(score_pairs(&perfect, Metric::Accuracy).unwrap(), 1.0);
        assert_eq!(score_pairs(&perfect, Metric::F1).unwrap(), 1.0);
        let half = [(l(1), l(1)), (l(1), l(-1)), (l(-1), l(1)), (l(-1), l(-1))];
        assert_eq!(score_pairs(&half, Metric::Accuracy).unwrap(), 0.5);
        assert_eq!(score_pairs(&half, Metric::F1).unwrap(), 0.5);
        let all_neg = [(l(-1), l(1)), (l(-1), l(-1))];
        assert_eq!(score_pairs(&all_neg, Metric::F1).unwrap(), 0.0);
        let nothing_pos = [(l(-1), l(-1))];
        assert_eq!(score_pairs(&nothing_pos, Metric::F1).unwrap(), 0.0);
        assert!(matches!(score_pairs(&[], Metric::Accuracy), Err(Error::EmptySplit)));
    }

    #[test]
    fn accuracy_is_order_invariant() {
        let mut pairs = vec![(l(1), l(1)), (l(1), l(-1)), (l(-1), l(-1)), (l(-1), l(-1)), (l(1), l(1))];
        let a = score_pairs(&pairs, Metric::F1).unwrap();
        pairs.reverse();
        assert_eq!(a, score_pairs(&pairs, Metric::F1).unwrap());
    }
}
