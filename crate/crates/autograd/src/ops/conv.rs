use std::sync::Arc;

use super::basic::column_sums;
use crate::linalg::{gemm_into, Mat};
use crate::{Real, Tensor, Var};

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    b: usize,
    h: usize,
    w: usize,
    cin: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.b * self.ho * self.wo
    }

    fn patch(&self) -> usize {
        self.k * self.k * self.cin
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Calls `f(row, patch_offset, input_offset)` for every in-bounds tap;
    /// each tap covers `cin` contiguous channels.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let ConvGeom {
            b,
            h,
            w,
            cin,
            k,
            stride,
            pad,
            ho,
            wo,
        } = *self;
        for bi in 0..b {
            for oy in 0..ho {
                for ox in 0..wo {
                    let row = (bi * ho + oy) * wo + ox;
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let src = ((bi * h + iy as usize) * w + ix as usize) * cin;
                            f(row, (ky * k + kx) * cin, src);
                        }
                    }
                }
            }
        }
    }
}

fn im2col<F: Real>(x: &[F], g: &ConvGeom) -> Vec<F> {
    let patch = g.patch();
    let mut cols = vec![F::zero(); g.rows() * patch];
    g.for_each_tap(|row, off, src| {
        let dst = row * patch + off;
        cols[dst..dst + g.cin].copy_from_slice(&x[src..src + g.cin]);
    });
    cols
}

fn col2im<F: Real>(cols: &[F], g: &ConvGeom) -> Vec<F> {
    let patch = g.patch();
    let mut x = vec![F::zero(); g.b * g.h * g.w * g.cin];
    g.for_each_tap(|row, off, src| {
        let s = row * patch + off;
        for (d, &v) in x[src..src + g.cin].iter_mut().zip(&cols[s..s + g.cin]) {
            *d += v;
        }
    });
    x
}

/// Stride-1 convolution without an im2col buffer. The input is zero padded
/// and every output position is computed on the padded grid, so each
/// kernel tap is one gemm over a uniformly strided view; rows that fall
/// outside the valid output are discarded.
#[derive(Clone, Copy)]
struct Shifted {
    hp: usize,
    wp: usize,
    /// Rows of the padded-grid output.
    m: usize,
}

impl Shifted {
    fn new(g: &ConvGeom) -> Self {
        let (hp, wp) = (g.h + 2 * g.pad, g.w + 2 * g.pad);
        let m = g.b * hp * wp - ((g.k - 1) * wp + g.k - 1);
        Self { hp, wp, m }
    }

    fn tap_offset(&self, g: &ConvGeom, ky: usize, kx: usize) -> usize {
        (ky * self.wp + kx) * g.cin
    }

    fn pad<F: Real>(&self, x: &[F], g: &ConvGeom) -> Vec<F> {
        let mut out = vec![F::zero(); g.b * self.hp * self.wp * g.cin];
        for bi in 0..g.b {
            for y in 0..g.h {
                let src = (bi * g.h + y) * g.w * g.cin;
                let dst = ((bi * self.hp + y + g.pad) * self.wp + g.pad) * g.cin;
                out[dst..dst + g.w * g.cin].copy_from_slice(&x[src..src + g.w * g.cin]);
            }
        }
        out
    }

    /// The `k` taps of one kernel row are adjacent in the padded input, so
    /// a kernel row reads one matrix of overlapping input rows.
    fn window(&self, g: &ConvGeom) -> Mat {
        Mat {
            rows: self.m,
            cols: g.k * g.cin,
            rs: g.cin,
            cs: 1,
        }
    }

    /// Padded-grid row of valid output `(b, y, x)`.
    fn grid_row(&self, bi: usize, y: usize, x: usize) -> usize {
        (bi * self.hp + y) * self.wp + x
    }

    fn gather<F: Real>(&self, grid: &[F], g: &ConvGeom, c: usize) -> Vec<F> {
        let mut out = Vec::with_capacity(g.rows() * c);
        for bi in 0..g.b {
            for y in 0..g.ho {
                let r = self.grid_row(bi, y, 0) * c;
                out.extend_from_slice(&grid[r..r + g.wo * c]);
            }
        }
        out
    }

    fn scatter<F: Real>(&self, valid: &[F], g: &ConvGeom, c: usize) -> Vec<F> {
        let mut grid = vec![F::zero(); self.m * c];
        for bi in 0..g.b {
            for y in 0..g.ho {
                let r = self.grid_row(bi, y, 0) * c;
                let src = (bi * g.ho + y) * g.wo * c;
                grid[r..r + g.wo * c].copy_from_slice(&valid[src..src + g.wo * c]);
            }
        }
        grid
    }
}

impl<'g, F: Real> Var<'g, F> {
    /// 2-D convolution of `[batch, h, w, cin]` with a `[k, k, cin, cout]`
    /// kernel, zero padding `pad` and the given stride.
    pub fn conv2d(
        self,
        weight: Var<'g, F>,
        bias: Option<Var<'g, F>>,
        stride: usize,
        pad: usize,
    ) -> Var<'g, F> {
        let x = self.value();
        let wv = weight.value();
        let &[b, h, w, cin] = x.shape() else {
            panic!("conv2d input must be [b, h, w, c], got {:?}", x.shape())
        };
        let &[k, k2, wcin, cout] = wv.shape() else {
            panic!("conv2d weight must be [k, k, cin, cout]")
        };
        assert_eq!(k, k2, "square kernels only");
        assert_eq!(wcin, cin, "conv2d channel mismatch");
        assert!(stride >= 1);
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        let geom = ConvGeom {
            b,
            h,
            w,
            cin,
            k,
            stride,
            pad,
            ho,
            wo,
        };
        if stride == 1 && !geom.is_pointwise() {
            return self.conv2d_shifted(weight, bias, geom, cout);
        }
        let rows = geom.rows();
        let patch = geom.patch();
        let cols: Arc<Vec<F>> = if geom.is_pointwise() {
            Arc::new(x.data().to_vec())
        } else {
            Arc::new(im2col(x.data(), &geom))
        };
        let mut out = vec![F::zero(); rows * cout];
        if let Some(bias) = bias {
            let bv = bias.value();
            assert_eq!(bv.shape(), [cout], "conv2d bias shape");
            for r in 0..rows {
                out[r * cout..(r + 1) * cout].copy_from_slice(bv.data());
            }
        }
        gemm_into(
            &mut out,
            Mat::row_major(rows, cout),
            &cols,
            Mat::row_major(rows, patch),
            wv.data(),
            Mat::row_major(patch, cout),
            bias.is_some(),
        );
        let out = Tensor::new(vec![b, ho, wo, cout], out);
        let mut parents = vec![self, weight];
        parents.extend(bias);
        let has_bias = bias.is_some();
        let in_shape = x.shape().to_vec();
        let w_shape = wv.shape().to_vec();
        self.graph.push_op(out, &parents, move || {
            Box::new(move |g, need| {
                let gd = g.data();
                let dx = need[0].then(|| {
                    let mut dcols = vec![F::zero(); rows * patch];
                    gemm_into(
                        &mut dcols,
                        Mat::row_major(rows, patch),
                        gd,
                        Mat::row_major(rows, cout),
                        wv.data(),
                        Mat::row_major(patch, cout).t(),
                        false,
                    );
                    let dx = if geom.is_pointwise() {
                        dcols
                    } else {
                        col2im(&dcols, &geom)
                    };
                    Tensor::new(in_shape.clone(), dx)
                });
                let dw = need[1].then(|| {
                    let mut dw = vec![F::zero(); patch * cout];
                    gemm_into(
                        &mut dw,
                        Mat::row_major(patch, cout),
                        &cols,
                        Mat::row_major(rows, patch).t(),
                        gd,
                        Mat::row_major(rows, cout),
                        false,
                    );
                    Tensor::new(w_shape.clone(), dw)
                });
                let mut grads = vec![dx, dw];
                if has_bias {
                    grads.push(need[2].then(|| column_sums(gd, rows, cout)));
                }
                grads
            })
        })
    }

    fn conv2d_shifted(
        self,
        weight: Var<'g, F>,
        bias: Option<Var<'g, F>>,
        geom: ConvGeom,
        cout: usize,
    ) -> Var<'g, F> {
        let wv = weight.value();
        let sh = Shifted::new(&geom);
        let (k, cin) = (geom.k, geom.cin);
        let xp = Arc::new(sh.pad(self.value().data(), &geom));
        let mut out = shifted_forward(&xp, &geom, &sh, wv.data(), cout);
        if let Some(bias) = bias {
            let bv = bias.value();
            assert_eq!(bv.shape(), [cout], "conv2d bias shape");
            for row in out.chunks_mut(cout) {
                for (o, &b) in row.iter_mut().zip(bv.data()) {
                    *o += b;
                }
            }
        }
        let out = Tensor::new(vec![geom.b, geom.ho, geom.wo, cout], out);
        let mut parents = vec![self, weight];
        parents.extend(bias);
        let has_bias = bias.is_some();
        let in_shape = self.value().shape().to_vec();
        let w_shape = wv.shape().to_vec();
        self.graph.push_op(out, &parents, move || {
            Box::new(move |g, need| {
                let dx = need[0].then(|| {
                    // full correlation of the output gradient with the
                    // flipped, transposed kernel
                    let mut wt = vec![F::zero(); wv.numel()];
                    let wd = wv.data();
                    for ky in 0..k {
                        for kx in 0..k {
                            let src = ((k - 1 - ky) * k + (k - 1 - kx)) * cin * cout;
                            let dst = (ky * k + kx) * cout * cin;
                            for ci in 0..cin {
                                for co in 0..cout {
                                    wt[dst + co * cin + ci] = wd[src + ci * cout + co];
                                }
                            }
                        }
                    }
                    let tg = ConvGeom {
                        b: geom.b,
                        h: geom.ho,
                        w: geom.wo,
                        cin: cout,
                        k,
                        stride: 1,
                        pad: k - 1 - geom.pad,
                        ho: geom.h,
                        wo: geom.w,
                    };
                    let tsh = Shifted::new(&tg);
                    let gp = tsh.pad(g.data(), &tg);
                    Tensor::new(in_shape.clone(), shifted_forward(&gp, &tg, &tsh, &wt, cin))
                });
                let dw = need[1].then(|| {
                    let gd = sh.scatter(g.data(), &geom, cout);
                    let kc = k * cin;
                    let mut dw = vec![F::zero(); k * kc * cout];
                    for ky in 0..k {
                        gemm_into(
                            &mut dw[ky * kc * cout..(ky + 1) * kc * cout],
                            Mat::row_major(kc, cout),
                            &xp[sh.tap_offset(&geom, ky, 0)..],
                            sh.window(&geom).t(),
                            &gd,
                            Mat::row_major(sh.m, cout),
                            false,
                        );
                    }
                    Tensor::new(w_shape.clone(), dw)
                });
                let mut grads = vec![dx, dw];
                if has_bias {
                    grads.push(need[2].then(|| column_sums(g.data(), geom.rows(), cout)));
                }
                grads
            })
        })
    }
}

/// Valid outputs of a stride-1 convolution over an already padded input.
fn shifted_forward<F: Real>(xp: &[F], g: &ConvGeom, sh: &Shifted, w: &[F], cout: usize) -> Vec<F> {
    let kc = g.k * g.cin;
    let mut grid = vec![F::zero(); sh.m * cout];
    for ky in 0..g.k {
        gemm_into(
            &mut grid,
            Mat::row_major(sh.m, cout),
            &xp[sh.tap_offset(g, ky, 0)..],
            sh.window(g),
            &w[ky * kc * cout..(ky + 1) * kc * cout],
            Mat::row_major(kc, cout),
            ky > 0,
        );
    }
    sh.gather(&grid, g, cout)
}
