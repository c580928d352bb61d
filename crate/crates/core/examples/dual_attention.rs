//! The two-branch cross-attention on a hand-sized instance: one query
//! attending separately to the object token and to the caption tokens.

use customnet::conditioning::dual_cross_attention;
use customnet_autograd::Tensor;

fn show(name: &str, t: &Tensor<f64>) {
    let rows: Vec<String> = t
        .data()
        .chunks(t.dim(1))
        .map(|r| format!("[{}]", r.iter().map(|v| format!("{v:+.3}")).collect::<Vec<_>>().join(", ")))
        .collect();
    println!("{name:>12}: {}", rows.join(" "));
}

fn main() {
    let q = Tensor::new(vec![2, 3], vec![1.0, 0.0, 0.5, -0.5, 1.0, 0.0]);
    let k_obj = Tensor::new(vec![1, 3], vec![0.8, 0.1, 0.3]);
    let v_obj = Tensor::new(vec![1, 3], vec![1.0, 0.0, 0.0]);
    let k_txt = Tensor::new(vec![3, 3], vec![0.0, 1.0, 0.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.5]);
    let v_txt = Tensor::new(vec![3, 3], vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.5, 0.5]);

    let both = dual_cross_attention(&q, &k_obj, &v_obj, &k_txt, &v_txt);
    let zeros = Tensor::new(vec![3, 3], vec![0.0; 9]);
    let object_only = dual_cross_attention(&q, &k_obj, &v_obj, &k_txt, &zeros);
    let text_only = dual_cross_attention(&q, &k_obj, &Tensor::new(vec![1, 3], vec![0.0; 3]), &k_txt, &v_txt);

    show("object", &object_only);
    show("text", &text_only);
    show("sum", &both);
    // a single object token always receives all of its branch's weight
    println!("object branch returns v_obj for every query: {}", object_only.data().chunks(3).all(|r| r == [1.0, 0.0, 0.0]));
}
