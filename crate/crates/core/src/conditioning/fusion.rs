use customnet_autograd::{Graph, ParamStore, Real, Session, Tensor, Var};
use rand::Rng;

use crate::nn::{self, Init};

pub const POSE_DIM: usize = 4;

pub(crate) fn init_fusion<R: Rng>(init: &mut Init<'_, R>, d: usize) {
    init.linear("fuse.l1", d + POSE_DIM, d);
    init.linear("fuse.l2", d, d);
}

/// Two-layer MLP over `[embedding | pose]`: `[batch, d + 4] -> [batch, d]`.
pub fn fuse<'g, F: Real>(s: &Session<'g, F>, emb: Var<'g, F>, pose: Var<'g, F>) -> Var<'g, F> {
    let x = Var::concat(&[emb, pose], 1);
    nn::linear(s, "fuse.l2", nn::linear(s, "fuse.l1", x).silu())
}

/// Fuses one embedding with one pose vector.
pub fn fuse_object_pose<F: Real>(params: &ParamStore<F>, emb: &[f64], pose: [f64; 4]) -> Vec<f64> {
    let g = Graph::new();
    let s = Session::infer(&g, params);
    let e = s.input(Tensor::from_f64_slice(vec![1, emb.len()], emb));
    let p = s.input(Tensor::from_f64_slice(vec![1, 4], &pose));
    fuse(&s, e, p).value().data().iter().map(|v| v.as_f64()).collect()
}

fn dsilu(a: f64) -> f64 {
    let sig = 1.0 / (1.0 + (-a).exp());
    sig * (1.0 + a * (1.0 - sig))
}

/// Analytic Jacobian of the fused vector with respect to the pose, `d × 4`.
pub fn fusion_pose_jacobian<F: Real>(params: &ParamStore<F>, emb: &[f64], pose: [f64; 4]) -> Vec<[f64; 4]> {
    let get = |n: &str| params.get(n).unwrap_or_else(|| panic!("missing {n}")).cast::<f64>();
    let (w1, b1, w2) = (get("fuse.l1.w"), get("fuse.l1.b"), get("fuse.l2.w"));
    let d = emb.len();
    let hidden = w1.dim(1);
    let dout = w2.dim(1);
    let input: Vec<f64> = emb.iter().copied().chain(pose).collect();
    let pre: Vec<f64> = (0..hidden)
        .map(|j| b1.data()[j] + (0..d + 4).map(|i| input[i] * w1.data()[i * hidden + j]).sum::<f64>())
        .collect();
    (0..dout)
        .map(|o| {
            std::array::from_fn(|k| {
                (0..hidden)
                    .map(|j| w2.data()[j * dout + o] * dsilu(pre[j]) * w1.data()[(d + k) * hidden + j])
                    .sum()
            })
        })
        .collect()
}
