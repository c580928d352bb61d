use std::sync::Arc;

use crate::linalg::{gemm_into, Mat};
use crate::{Real, Tensor, Var};

/// Row-wise softmax in place. Entries whose `valid` flag is false get
/// probability zero; a row with no valid entry becomes all zeros.
pub(crate) fn masked_softmax_rows<F: Real>(logits: &mut [F], cols: usize, valid: Option<&[bool]>) {
    for row in logits.chunks_mut(cols) {
        let mut max = F::neg_infinity();
        for (j, &v) in row.iter().enumerate() {
            if valid.is_none_or(|m| m[j]) && v > max {
                max = v;
            }
        }
        if max == F::neg_infinity() {
            row.fill(F::zero());
            continue;
        }
        let mut sum = F::zero();
        for (j, v) in row.iter_mut().enumerate() {
            if valid.is_none_or(|m| m[j]) {
                *v = (*v - max).exp();
                sum += *v;
            } else {
                *v = F::zero();
            }
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

impl<'g, F: Real> Var<'g, F> {
    /// Scaled dot-product attention `softmax(q kᵀ / √d) v` per batch element.
    ///
    /// `self` is `q [b, n, d]`, `k` is `[b, m, d]`, `v` is `[b, m, dv]`.
    /// `key_valid`, when given, is `[b * m]` and excludes keys from the
    /// softmax; a query whose keys are all excluded yields zeros.
    pub fn attention(
        self,
        k: Var<'g, F>,
        v: Var<'g, F>,
        key_valid: Option<Arc<Vec<bool>>>,
    ) -> Var<'g, F> {
        let (q, kv, vv) = (self.value(), k.value(), v.value());
        let &[b, n, d] = q.shape() else {
            panic!("attention q must be [b, n, d]")
        };
        let &[kb, m, kd] = kv.shape() else {
            panic!("attention k must be [b, m, d]")
        };
        let &[vb, vm, dv] = vv.shape() else {
            panic!("attention v must be [b, m, dv]")
        };
        assert!(kb == b && vb == b && kd == d && vm == m, "attention shape mismatch");
        if let Some(mask) = &key_valid {
            assert_eq!(mask.len(), b * m);
        }
        let scale = F::one() / F::from_usize(d).sqrt();
        let mut probs = vec![F::zero(); b * n * m];
        let mut out = vec![F::zero(); b * n * dv];
        for bi in 0..b {
            let p = &mut probs[bi * n * m..(bi + 1) * n * m];
            gemm_into(
                p,
                Mat::row_major(n, m),
                &q.data()[bi * n * d..],
                Mat::row_major(n, d),
                &kv.data()[bi * m * d..],
                Mat::row_major(m, d).t(),
                false,
            );
            for x in p.iter_mut() {
                *x *= scale;
            }
            let valid = key_valid.as_ref().map(|mk| &mk[bi * m..(bi + 1) * m]);
            masked_softmax_rows(p, m, valid);
            gemm_into(
                &mut out[bi * n * dv..(bi + 1) * n * dv],
                Mat::row_major(n, dv),
                p,
                Mat::row_major(n, m),
                &vv.data()[bi * m * dv..],
                Mat::row_major(m, dv),
                false,
            );
        }
        let out = Tensor::new(vec![b, n, dv], out);
        self.graph.push_op(out, &[self, k, v], move || {
            Box::new(move |g, need| {
                let gd = g.data();
                let mut dq = vec![F::zero(); b * n * d];
                let mut dk = vec![F::zero(); b * m * d];
                let mut dvv = vec![F::zero(); b * m * dv];
                let mut dp = vec![F::zero(); n * m];
                for bi in 0..b {
                    let p = &probs[bi * n * m..(bi + 1) * n * m];
                    let go = &gd[bi * n * dv..(bi + 1) * n * dv];
                    if need[2] {
                        gemm_into(
                            &mut dvv[bi * m * dv..(bi + 1) * m * dv],
                            Mat::row_major(m, dv),
                            p,
                            Mat::row_major(n, m).t(),
                            go,
                            Mat::row_major(n, dv),
                            false,
                        );
                    }
                    if !(need[0] || need[1]) {
                        continue;
                    }
                    gemm_into(
                        &mut dp,
                        Mat::row_major(n, m),
                        go,
                        Mat::row_major(n, dv),
                        &vv.data()[bi * m * dv..],
                        Mat::row_major(m, dv).t(),
                        false,
                    );
                    // softmax backward, folded with the 1/sqrt(d) scale
                    for i in 0..n {
                        let pr = &p[i * m..(i + 1) * m];
                        let dr = &mut dp[i * m..(i + 1) * m];
                        let dot: F = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum();
                        for j in 0..m {
                            dr[j] = pr[j] * (dr[j] - dot) * scale;
                        }
                    }
                    if need[0] {
                        gemm_into(
                            &mut dq[bi * n * d..(bi + 1) * n * d],
                            Mat::row_major(n, d),
                            &dp,
                            Mat::row_major(n, m),
                            &kv.data()[bi * m * d..],
                            Mat::row_major(m, d),
                            false,
                        );
                    }
                    if need[1] {
                        gemm_into(
                            &mut dk[bi * m * d..(bi + 1) * m * d],
                            Mat::row_major(m, d),
                            &dp,
                            Mat::row_major(n, m).t(),
                            &q.data()[bi * n * d..],
                            Mat::row_major(n, d),
                            false,
                        );
                    }
                }
                vec![
                    need[0].then(|| Tensor::new(vec![b, n, d], dq)),
                    need[1].then(|| Tensor::new(vec![b, m, d], dk)),
                    need[2].then(|| Tensor::new(vec![b, m, dv], dvv)),
                ]
            })
        })
    }
}
