use std::sync::Arc;

use super::attention::masked_softmax_rows;
use super::rows_last;
use crate::{Real, Tensor, Var};

impl<'g, F: Real> Var<'g, F> {
    /// Mean squared error against a constant target.
    pub fn mse(self, target: Arc<Tensor<F>>) -> Var<'g, F> {
        let x = self.value();
        assert_eq!(x.shape(), target.shape(), "mse shape mismatch");
        let n = F::from_usize(x.numel());
        let loss = x
            .data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<F>()
            / n;
        self.graph.push_op(Tensor::scalar(loss), &[self], move || {
            Box::new(move |g, _| {
                let s = g.item() * F::from_f64(2.0) / n;
                vec![Some(x.zip_map(&target, |a, b| (a - b) * s))]
            })
        })
    }

    /// Mean softmax cross-entropy of `[rows, classes]` logits against
    /// integer labels.
    pub fn cross_entropy(self, labels: &[usize]) -> Var<'g, F> {
        let x = self.value();
        let (rows, k) = rows_last(x.shape());
        assert_eq!(labels.len(), rows);
        let mut probs = x.data().to_vec();
        masked_softmax_rows(&mut probs, k, None);
        let n = F::from_usize(rows);
        let loss = labels
            .iter()
            .enumerate()
            .map(|(r, &l)| -(probs[r * k + l].max(F::min_positive_value())).ln())
            .sum::<F>()
            / n;
        let labels = labels.to_vec();
        let shape = x.shape().to_vec();
        self.graph.push_op(Tensor::scalar(loss), &[self], move || {
            Box::new(move |g, _| {
                let s = g.item() / n;
                let mut d = probs.clone();
                for (r, &l) in labels.iter().enumerate() {
                    d[r * k + l] -= F::one();
                }
                for v in &mut d {
                    *v *= s;
                }
                vec![Some(Tensor::new(shape.clone(), d))]
            })
        })
    }
}

/// Row-wise softmax of a plain tensor over its last axis.
pub fn softmax_last<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let (_, k) = rows_last(x.shape());
    let mut d = x.data().to_vec();
    masked_softmax_rows(&mut d, k, None);
    Tensor::new(x.shape().to_vec(), d)
}
