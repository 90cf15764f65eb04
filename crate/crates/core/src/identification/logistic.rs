//! Multinomial logistic regression over sparse features, trained by SGD.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Sparse feature vector: (feature index, value) pairs.
pub type Features = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 30,
            learning_rate: 1.0,
            l2: 1e-5,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxRegression {
    n_classes: usize,
    n_features: usize,
    /// Row-major, one row of `n_features` weights per class.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub best_epoch: usize,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

impl SoftmaxRegression {
    pub fn new(n_classes: usize, n_features: usize) -> Self {
        SoftmaxRegression {
            n_classes,
            n_features,
            weights: vec![0.0; n_classes * n_features],
            bias: vec![0.0; n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn predict_proba(&self, x: &[(usize, f64)]) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.n_classes)
            .map(|c| {
                let row = &self.weights[c * self.n_features..(c + 1) * self.n_features];
                self.bias[c]
                    + x.iter()
                        .filter(|(f, _)| *f < self.n_features)
                        .map(|&(f, v)| row[f] * v)
                        .sum::<f64>()
            })
            .collect();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in &mut z {
            *v = (*v - max).exp();
            total += *v;
        }
        z.iter_mut().for_each(|v| *v /= total);
        z
    }

    /// Argmax class, lowest index on ties.
    pub fn predict(&self, x: &[(usize, f64)]) -> usize {
        argmax(&self.predict_proba(x))
    }

    pub fn accuracy(&self, data: &[(Features, usize)]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data.iter().filter(|(x, y)| self.predict(x) == *y).count();
        hits as f64 / data.len() as f64
    }

    fn sgd_step(&mut self, x: &[(usize, f64)], y: usize, lr: f64, l2: f64) {
        let p = self.predict_proba(x);
        for (c, &pc) in p.iter().enumerate() {
            let g = pc - if c == y { 1.0 } else { 0.0 };
            self.bias[c] -= lr * g;
            let row = c * self.n_features;
            for &(f, v) in x {
                let w = &mut self.weights[row + f];
                *w -= lr * (g * v + l2 * *w);
            }
        }
    }

    /// Trains for `params.epochs` passes and keeps the parameters of the epoch
    /// with the best validation accuracy (the last epoch when `val` is empty).
    pub fn fit(
        train: &[(Features, usize)],
        val: &[(Features, usize)],
        n_classes: usize,
        n_features: usize,
        params: &TrainParams,
    ) -> (Self, FitReport) {
        let mut model = SoftmaxRegression::new(n_classes, n_features);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut best: Option<(f64, usize, SoftmaxRegression)> = None;
        for epoch in 1..=params.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let (x, y) = &train[i];
                model.sgd_step(x, *y, params.learning_rate, params.l2);
            }
            if !val.is_empty() {
                let acc = model.accuracy(val);
                if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                    best = Some((acc, epoch, model.clone()));
                }
            }
        }
        let (model, best_epoch, val_acc) = match best {
            Some((acc, epoch, m)) => (m, epoch, Some(acc)),
            None => (model, params.epochs, None),
        };
        let train_acc = model.accuracy(train);
        (
            model,
            FitReport {
                best_epoch,
                train_acc,
                val_acc,
            },
        )
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_disjoint_features() {
        let data: Vec<(Features, usize)> = (0..60)
            .map(|i| {
                let class = i % 3;
                (vec![(class * 2, 0.5), (class * 2 + 1, 0.5)], class)
            })
            .collect();
        let (m, report) = SoftmaxRegression::fit(&data, &data[..6], 3, 6, &TrainParams::default());
        assert_eq!(report.train_acc, 1.0);
        let p = m.predict_proba(&[(2, 1.0)]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(argmax(&p), 1);
    }

    #[test]
    fn unknown_features_are_ignored() {
        let m = SoftmaxRegression::new(2, 3);
        assert_eq!(m.predict_proba(&[(99, 1.0)]), vec![0.5, 0.5]);
        assert_eq!(m.predict(&[]), 0);
    }
}
