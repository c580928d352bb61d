use std::sync::Arc;

use super::{batch_spatial_channels, rows_last};
use crate::linalg::{gemm_into, Mat};
use crate::{Real, Tensor, Var};

fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

impl<'g, F: Real> Var<'g, F> {
    pub fn add(self, other: Var<'g, F>) -> Var<'g, F> {
        let (a, b) = (self.value(), other.value());
        let out = a.zip_map(&b, |x, y| x + y);
        self.graph.push_op(out, &[self, other], || {
            Box::new(|g, _| vec![Some(g.clone()), Some(g.clone())])
        })
    }

    pub fn sub(self, other: Var<'g, F>) -> Var<'g, F> {
        let (a, b) = (self.value(), other.value());
        let out = a.zip_map(&b, |x, y| x - y);
        self.graph.push_op(out, &[self, other], || {
            Box::new(|g, _| vec![Some(g.clone()), Some(g.map(|v| -v))])
        })
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'g, F>) -> Var<'g, F> {
        let (a, b) = (self.value(), other.value());
        let out = a.zip_map(&b, |x, y| x * y);
        self.graph.push_op(out, &[self, other], || {
            Box::new(move |g, need| {
                vec![
                    need[0].then(|| g.zip_map(&b, |gv, y| gv * y)),
                    need[1].then(|| g.zip_map(&a, |gv, x| gv * x)),
                ]
            })
        })
    }

    pub fn scale(self, s: F) -> Var<'g, F> {
        let out = self.value().scale(s);
        self.graph
            .push_op(out, &[self], || Box::new(move |g, _| vec![Some(g.scale(s))]))
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(self, c: Arc<Tensor<F>>) -> Var<'g, F> {
        let out = self.value().zip_map(&c, |x, y| x * y);
        self.graph.push_op(out, &[self], || {
            Box::new(move |g, _| vec![Some(g.zip_map(&c, |gv, y| gv * y))])
        })
    }

    /// `x · sigmoid(x)`.
    pub fn silu(self) -> Var<'g, F> {
        let x = self.value();
        let out = x.map(|v| v * sigmoid(v));
        self.graph.push_op(out, &[self], || {
            Box::new(move |g, _| {
                vec![Some(g.zip_map(&x, |gv, v| {
                    let s = sigmoid(v);
                    gv * s * (F::one() + v * (F::one() - s))
                }))]
            })
        })
    }

    pub fn tanh(self) -> Var<'g, F> {
        let out = self.value().map(|v| v.tanh());
        let y = out.clone();
        self.graph.push_op(out, &[self], || {
            Box::new(move |g, _| vec![Some(g.zip_map(&y, |gv, t| gv * (F::one() - t * t)))])
        })
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Var<'g, F> {
        let shape = shape.into();
        let in_shape = self.shape();
        let out = (*self.value()).clone().reshape(shape);
        self.graph.push_op(out, &[self], || {
            Box::new(move |g, _| vec![Some(g.clone().reshape(in_shape.clone()))])
        })
    }

    /// `x [.., in] · w [in, out] (+ b [out])`.
    pub fn linear(self, w: Var<'g, F>, b: Option<Var<'g, F>>) -> Var<'g, F> {
        let x = self.value();
        let wv = w.value();
        let (rows, din) = rows_last(x.shape());
        assert_eq!(wv.rank(), 2, "linear weight must be [in, out]");
        assert_eq!(wv.dim(0), din, "linear input width mismatch");
        let dout = wv.dim(1);
        let mut out = vec![F::zero(); rows * dout];
        if let Some(b) = b {
            let bv = b.value();
            assert_eq!(bv.shape(), [dout], "linear bias shape");
            for r in 0..rows {
                out[r * dout..(r + 1) * dout].copy_from_slice(bv.data());
            }
        }
        gemm_into(
            &mut out,
            Mat::row_major(rows, dout),
            x.data(),
            Mat::row_major(rows, din),
            wv.data(),
            Mat::row_major(din, dout),
            b.is_some(),
        );
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = dout;
        let out = Tensor::new(shape, out);
        let mut parents = vec![self, w];
        parents.extend(b);
        let has_bias = b.is_some();
        self.graph.push_op(out, &parents, move || {
            Box::new(move |g, need| {
                let gd = g.data();
                let dx = need[0].then(|| {
                    let mut dx = vec![F::zero(); rows * din];
                    gemm_into(
                        &mut dx,
                        Mat::row_major(rows, din),
                        gd,
                        Mat::row_major(rows, dout),
                        wv.data(),
                        Mat::row_major(din, dout).t(),
                        false,
                    );
                    Tensor::new(x.shape().to_vec(), dx)
                });
                let dw = need[1].then(|| {
                    let mut dw = vec![F::zero(); din * dout];
                    gemm_into(
                        &mut dw,
                        Mat::row_major(din, dout),
                        x.data(),
                        Mat::row_major(rows, din).t(),
                        gd,
                        Mat::row_major(rows, dout),
                        false,
                    );
                    Tensor::new(vec![din, dout], dw)
                });
                let mut grads = vec![dx, dw];
                if has_bias {
                    grads.push(need[2].then(|| column_sums(gd, rows, dout)));
                }
                grads
            })
        })
    }

    /// Adds a per-sample channel vector `v [batch, channels]` to every
    /// position of `x [batch, .., channels]`.
    pub fn add_per_sample(self, v: Var<'g, F>) -> Var<'g, F> {
        let x = self.value();
        let vv = v.value();
        let (b, s, c) = batch_spatial_channels(x.shape());
        assert_eq!(vv.shape(), [b, c], "add_per_sample vector shape");
        let mut out = (*x).clone();
        let od = out.data_mut();
        for bi in 0..b {
            let row = &vv.data()[bi * c..(bi + 1) * c];
            for si in 0..s {
                let base = (bi * s + si) * c;
                for ci in 0..c {
                    od[base + ci] += row[ci];
                }
            }
        }
        self.graph.push_op(out, &[self, v], move || {
            Box::new(move |g, need| {
                let dv = need[1].then(|| {
                    let mut dv = vec![F::zero(); b * c];
                    let gd = g.data();
                    for bi in 0..b {
                        for si in 0..s {
                            let base = (bi * s + si) * c;
                            for ci in 0..c {
                                dv[bi * c + ci] += gd[base + ci];
                            }
                        }
                    }
                    Tensor::new(vec![b, c], dv)
                });
                vec![Some(g.clone()), dv]
            })
        })
    }

    /// Concatenates along `axis`.
    pub fn concat(parts: &[Var<'g, F>], axis: usize) -> Var<'g, F> {
        assert!(!parts.is_empty());
        let values: Vec<Arc<Tensor<F>>> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape().to_vec();
        assert!(axis < base.len());
        let outer: usize = base[..axis].iter().product();
        let inners: Vec<usize> = values
            .iter()
            .map(|v| {
                let s = v.shape();
                assert_eq!(s.len(), base.len(), "concat rank mismatch");
                for (d, (&x, &y)) in s.iter().zip(&base).enumerate() {
                    assert!(d == axis || x == y, "concat shape mismatch {s:?} vs {base:?}");
                }
                s[axis..].iter().product()
            })
            .collect();
        let total_inner: usize = inners.iter().sum();
        let mut data = Vec::with_capacity(outer * total_inner);
        for o in 0..outer {
            for (v, &inner) in values.iter().zip(&inners) {
                data.extend_from_slice(&v.data()[o * inner..(o + 1) * inner]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = values.iter().map(|v| v.dim(axis)).sum();
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        parts[0].graph.push_op(Tensor::new(shape, data), parts, move || {
            Box::new(move |g, need| {
                let gd = g.data();
                let mut offset = 0;
                let mut grads = Vec::with_capacity(inners.len());
                for (i, &inner) in inners.iter().enumerate() {
                    grads.push(need[i].then(|| {
                        let mut d = Vec::with_capacity(outer * inner);
                        for o in 0..outer {
                            let start = o * total_inner + offset;
                            d.extend_from_slice(&gd[start..start + inner]);
                        }
                        Tensor::new(shapes[i].clone(), d)
                    }));
                    offset += inner;
                }
                grads
            })
        })
    }

    /// Nearest-neighbour 2x upsampling of `[batch, h, w, c]`.
    pub fn upsample2x(self) -> Var<'g, F> {
        let x = self.value();
        let &[b, h, w, c] = x.shape() else {
            panic!("upsample2x expects [b, h, w, c]")
        };
        let (ho, wo) = (2 * h, 2 * w);
        let mut out = vec![F::zero(); b * ho * wo * c];
        let xd = x.data();
        for bi in 0..b {
            for y in 0..ho {
                for xx in 0..wo {
                    let src = ((bi * h + y / 2) * w + xx / 2) * c;
                    let dst = ((bi * ho + y) * wo + xx) * c;
                    out[dst..dst + c].copy_from_slice(&xd[src..src + c]);
                }
            }
        }
        self.graph
            .push_op(Tensor::new(vec![b, ho, wo, c], out), &[self], move || {
                Box::new(move |g, _| {
                    let gd = g.data();
                    let mut dx = vec![F::zero(); b * h * w * c];
                    for bi in 0..b {
                        for y in 0..ho {
                            for xx in 0..wo {
                                let src = ((bi * ho + y) * wo + xx) * c;
                                let dst = ((bi * h + y / 2) * w + xx / 2) * c;
                                for ci in 0..c {
                                    dx[dst + ci] += gd[src + ci];
                                }
                            }
                        }
                    }
                    vec![Some(Tensor::new(vec![b, h, w, c], dx))]
                })
            })
    }

    /// Mean over the spatial axes of `[batch, .., channels]`, giving
    /// `[batch, channels]`.
    pub fn mean_spatial(self) -> Var<'g, F> {
        let x = self.value();
        let in_shape = x.shape().to_vec();
        let (b, s, c) = batch_spatial_channels(&in_shape);
        let inv = F::one() / F::from_usize(s);
        let mut out = vec![F::zero(); b * c];
        for bi in 0..b {
            for si in 0..s {
                let base = (bi * s + si) * c;
                for ci in 0..c {
                    out[bi * c + ci] += x.data()[base + ci];
                }
            }
        }
        for v in &mut out {
            *v *= inv;
        }
        self.graph
            .push_op(Tensor::new(vec![b, c], out), &[self], move || {
                Box::new(move |g, _| {
                    let gd = g.data();
                    let mut dx = vec![F::zero(); b * s * c];
                    for bi in 0..b {
                        for si in 0..s {
                            let base = (bi * s + si) * c;
                            for ci in 0..c {
                                dx[base + ci] = gd[bi * c + ci] * inv;
                            }
                        }
                    }
                    vec![Some(Tensor::new(in_shape.clone(), dx))]
                })
            })
    }

    /// Divides each row (last axis) by its Euclidean norm.
    pub fn l2_normalize(self, eps: F) -> Var<'g, F> {
        let x = self.value();
        let (rows, d) = rows_last(x.shape());
        let mut out = (*x).clone();
        let mut norms = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &mut out.data_mut()[r * d..(r + 1) * d];
            let n = row.iter().map(|&v| v * v).sum::<F>().sqrt().max(eps);
            for v in row.iter_mut() {
                *v /= n;
            }
            norms.push(n);
        }
        let y = out.clone();
        self.graph.push_op(out, &[self], move || {
            Box::new(move |g, _| {
                let mut dx = g.clone();
                for r in 0..rows {
                    let yr = &y.data()[r * d..(r + 1) * d];
                    let gr = &g.data()[r * d..(r + 1) * d];
                    let dot: F = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    let dr = &mut dx.data_mut()[r * d..(r + 1) * d];
                    for i in 0..d {
                        dr[i] = (gr[i] - yr[i] * dot) / norms[r];
                    }
                }
                vec![Some(dx)]
            })
        })
    }

    /// Gathers rows of a `[vocab, d]` table, giving `[ids.len(), d]`.
    pub fn embedding(self, ids: &[usize]) -> Var<'g, F> {
        let table = self.value();
        assert_eq!(table.rank(), 2, "embedding table must be [vocab, d]");
        let (vocab, d) = (table.dim(0), table.dim(1));
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            assert!(i < vocab, "token {i} out of range for vocabulary {vocab}");
            out.extend_from_slice(&table.data()[i * d..(i + 1) * d]);
        }
        let ids = ids.to_vec();
        self.graph
            .push_op(Tensor::new(vec![ids.len(), d], out), &[self], move || {
                Box::new(move |g, _| {
                    let mut dt = vec![F::zero(); vocab * d];
                    for (r, &i) in ids.iter().enumerate() {
                        for k in 0..d {
                            dt[i * d + k] += g.data()[r * d + k];
                        }
                    }
                    vec![Some(Tensor::new(vec![vocab, d], dt))]
                })
            })
    }

    /// Repeats a tensor `n` times along a new leading axis.
    pub fn repeat_outer(self, n: usize) -> Var<'g, F> {
        let x = self.value();
        let in_shape = x.shape().to_vec();
        let mut shape = vec![n];
        shape.extend(&in_shape);
        let mut data = Vec::with_capacity(n * x.numel());
        for _ in 0..n {
            data.extend_from_slice(x.data());
        }
        self.graph.push_op(Tensor::new(shape, data), &[self], move || {
            Box::new(move |g, _| {
                let m: usize = in_shape.iter().product();
                let mut d = vec![F::zero(); m];
                for chunk in g.data().chunks(m) {
                    for (a, &b) in d.iter_mut().zip(chunk) {
                        *a += b;
                    }
                }
                vec![Some(Tensor::new(in_shape.clone(), d))]
            })
        })
    }

    /// Picks, per leading index, the slice from `other` where `take_other`
    /// is set and from `self` otherwise. Shapes must match.
    pub fn select_outer(self, other: Var<'g, F>, take_other: &[bool]) -> Var<'g, F> {
        let a = self.value();
        let b = other.value();
        assert_eq!(a.shape(), b.shape(), "select_outer shape mismatch");
        let n = a.dim(0);
        assert_eq!(take_other.len(), n);
        let inner = a.numel() / n.max(1);
        let mut out = (*a).clone();
        for (i, &t) in take_other.iter().enumerate() {
            if t {
                out.data_mut()[i * inner..(i + 1) * inner]
                    .copy_from_slice(&b.data()[i * inner..(i + 1) * inner]);
            }
        }
        let mask = take_other.to_vec();
        self.graph.push_op(out, &[self, other], move || {
            Box::new(move |g, need| {
                let split = |pick: bool| {
                    let mut d = g.clone();
                    for (i, &t) in mask.iter().enumerate() {
                        if t != pick {
                            d.data_mut()[i * inner..(i + 1) * inner].fill(F::zero());
                        }
                    }
                    d
                };
                vec![need[0].then(|| split(false)), need[1].then(|| split(true))]
            })
        })
    }

    /// Sum of all elements.
    pub fn sum_all(self) -> Var<'g, F> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let out = Tensor::scalar(x.sum());
        self.graph.push_op(out, &[self], move || {
            Box::new(move |g, _| vec![Some(Tensor::full(shape.clone(), g.item()))])
        })
    }

    /// `Σ x ⊙ w` for a constant weight tensor.
    pub fn dot_const(self, w: Arc<Tensor<F>>) -> Var<'g, F> {
        let x = self.value();
        assert_eq!(x.shape(), w.shape(), "dot_const shape mismatch");
        let s: F = x.data().iter().zip(w.data()).map(|(&a, &b)| a * b).sum();
        self.graph.push_op(Tensor::scalar(s), &[self], move || {
            Box::new(move |g, _| vec![Some(w.scale(g.item()))])
        })
    }
}

pub(crate) fn column_sums<F: Real>(data: &[F], rows: usize, cols: usize) -> Tensor<F> {
    let mut out = vec![F::zero(); cols];
    for r in 0..rows {
        for (o, &v) in out.iter_mut().zip(&data[r * cols..(r + 1) * cols]) {
            *o += v;
        }
    }
    Tensor::new(vec![cols], out)
}
