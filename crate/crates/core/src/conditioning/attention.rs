use std::sync::Arc;

use customnet_autograd::{Graph, Real, Tensor, Var};

/// `softmax(q k_oᵀ/√d) v_o + softmax(q k_bᵀ/√d) v_b` over `[batch, tokens,
/// width]` operands. `text_valid` masks keys of the second branch.
pub fn dual_attention<'g, F: Real>(
    q: Var<'g, F>,
    k_o: Var<'g, F>,
    v_o: Var<'g, F>,
    k_b: Var<'g, F>,
    v_b: Var<'g, F>,
    text_valid: Option<Arc<Vec<bool>>>,
) -> Var<'g, F> {
    q.attention(k_o, v_o, None).add(q.attention(k_b, v_b, text_valid))
}

/// The single-softmax variant: object and text keys share one softmax.
pub fn merged_attention<'g, F: Real>(
    q: Var<'g, F>,
    k_o: Var<'g, F>,
    v_o: Var<'g, F>,
    k_b: Var<'g, F>,
    v_b: Var<'g, F>,
    text_valid: Option<Arc<Vec<bool>>>,
) -> Var<'g, F> {
    let b = q.value().dim(0);
    let (mo, mb) = (k_o.value().dim(1), k_b.value().dim(1));
    let k = Var::concat(&[k_o, k_b], 1);
    let v = Var::concat(&[v_o, v_b], 1);
    let valid = text_valid.map(|tv| {
        let mut m = Vec::with_capacity(b * (mo + mb));
        for bi in 0..b {
            m.extend(std::iter::repeat_n(true, mo));
            m.extend_from_slice(&tv[bi * mb..(bi + 1) * mb]);
        }
        Arc::new(m)
    });
    q.attention(k, v, valid)
}

/// Dual cross-attention on plain matrices: `q [n, d]`, `k_o, v_o [m_o, d]`,
/// `k_b, v_b [m_b, d]`, giving `[n, d]`.
pub fn dual_cross_attention<F: Real>(
    q: &Tensor<F>,
    k_o: &Tensor<F>,
    v_o: &Tensor<F>,
    k_b: &Tensor<F>,
    v_b: &Tensor<F>,
) -> Tensor<F> {
    let g = Graph::new();
    let lift = |t: &Tensor<F>| {
        let mut shape = vec![1];
        shape.extend_from_slice(t.shape());
        g.constant(t.clone().reshape(shape))
    };
    let out = dual_attention(lift(q), lift(k_o), lift(v_o), lift(k_b), lift(v_b), None).value();
    (*out).clone().reshape(vec![q.dim(0), v_o.dim(1)])
}
