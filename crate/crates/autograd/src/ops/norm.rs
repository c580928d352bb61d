use super::{batch_spatial_channels, rows_last};
use crate::{Real, Tensor, Var};

impl<'g, F: Real> Var<'g, F> {
    /// Group normalization over `[batch, .., channels]` with per-channel
    /// affine parameters.
    pub fn group_norm(
        self,
        groups: usize,
        gamma: Var<'g, F>,
        beta: Var<'g, F>,
        eps: F,
    ) -> Var<'g, F> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let (b, s, c) = batch_spatial_channels(&shape);
        assert!(groups > 0 && c % groups == 0, "{c} channels not divisible into {groups} groups");
        let (gv, bv) = (gamma.value(), beta.value());
        assert_eq!(gv.shape(), [c]);
        assert_eq!(bv.shape(), [c]);
        let cg = c / groups;
        let n = F::from_usize(s * cg);
        let xd = x.data();
        // per-sample statistics are accumulated per channel, then pooled
        // over each group's channels
        let group_stat = move |acc: &[F]| -> Vec<F> {
            (0..c).map(|ci| {
                let g0 = ci / cg * cg;
                acc[g0..g0 + cg].iter().copied().sum::<F>() / n
            }).collect()
        };
        let mut xhat = vec![F::zero(); xd.len()];
        let mut rstd = vec![F::zero(); b * c];
        for bi in 0..b {
            let xs = &xd[bi * s * c..(bi + 1) * s * c];
            let mut acc = vec![F::zero(); c];
            for row in xs.chunks_exact(c) {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            let mean = group_stat(&acc);
            acc.fill(F::zero());
            for row in xs.chunks_exact(c) {
                for ((a, &v), &m) in acc.iter_mut().zip(row).zip(&mean) {
                    *a += (v - m) * (v - m);
                }
            }
            let r: Vec<F> = group_stat(&acc).into_iter().map(|v| F::one() / (v + eps).sqrt()).collect();
            let xh = &mut xhat[bi * s * c..(bi + 1) * s * c];
            for (orow, row) in xh.chunks_exact_mut(c).zip(xs.chunks_exact(c)) {
                for (((o, &v), &m), &ri) in orow.iter_mut().zip(row).zip(&mean).zip(&r) {
                    *o = (v - m) * ri;
                }
            }
            rstd[bi * c..(bi + 1) * c].copy_from_slice(&r);
        }
        let mut out = vec![F::zero(); xd.len()];
        for (orow, row) in out.chunks_exact_mut(c).zip(xhat.chunks_exact(c)) {
            for (((o, &h), &gm), &bt) in orow.iter_mut().zip(row).zip(gv.data()).zip(bv.data()) {
                *o = h * gm + bt;
            }
        }
        self.graph
            .push_op(Tensor::new(shape.clone(), out), &[self, gamma, beta], move || {
                Box::new(move |g, need| {
                    let gd = g.data();
                    let gamma = gv.data();
                    let dgamma = need[1].then(|| {
                        let mut d = vec![F::zero(); c];
                        for (grow, hrow) in gd.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                            for ((a, &gv), &h) in d.iter_mut().zip(grow).zip(hrow) {
                                *a += gv * h;
                            }
                        }
                        Tensor::new(vec![c], d)
                    });
                    let dbeta = need[2].then(|| {
                        let mut d = vec![F::zero(); c];
                        for grow in gd.chunks_exact(c) {
                            for (a, &gv) in d.iter_mut().zip(grow) {
                                *a += gv;
                            }
                        }
                        Tensor::new(vec![c], d)
                    });
                    let dx = need[0].then(|| {
                        let mut dx = vec![F::zero(); gd.len()];
                        for bi in 0..b {
                            let span = bi * s * c..(bi + 1) * s * c;
                            let (gs, hs) = (&gd[span.clone()], &xhat[span.clone()]);
                            let mut a1 = vec![F::zero(); c];
                            let mut a2 = vec![F::zero(); c];
                            for (grow, hrow) in gs.chunks_exact(c).zip(hs.chunks_exact(c)) {
                                for ci in 0..c {
                                    let dh = grow[ci] * gamma[ci];
                                    a1[ci] += dh;
                                    a2[ci] += dh * hrow[ci];
                                }
                            }
                            let (m1, m2) = (group_stat(&a1), group_stat(&a2));
                            let r = &rstd[bi * c..(bi + 1) * c];
                            let dxs = &mut dx[span];
                            for ((drow, grow), hrow) in dxs.chunks_exact_mut(c).zip(gs.chunks_exact(c)).zip(hs.chunks_exact(c)) {
                                for ci in 0..c {
                                    let dh = grow[ci] * gamma[ci];
                                    drow[ci] = r[ci] * (dh - m1[ci] - hrow[ci] * m2[ci]);
                                }
                            }
                        }
                        Tensor::new(shape.clone(), dx)
                    });
                    vec![dx, dgamma, dbeta]
                })
            })
    }

    /// Layer normalization over the last axis.
    pub fn layer_norm(self, gamma: Var<'g, F>, beta: Var<'g, F>, eps: F) -> Var<'g, F> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let (rows, c) = rows_last(&shape);
        // a row is a group of one sample with a single spatial position
        self.reshape(vec![rows, 1, c])
            .group_norm(1, gamma, beta, eps)
            .reshape(shape)
    }
}
