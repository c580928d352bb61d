//! Independent attention oracle on nested vectors.

use std::time::{Duration, Instant};

use customnet::conditioning::dual_cross_attention;
use customnet_autograd::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Row-by-row softmax attention on nested vectors, no shared code with the
/// library: scores, max-shifted exponentials, normalization, weighted sum.
pub fn softmax_attend(q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = q[0].len() as f64;
    q.iter()
        .map(|qi| {
            let scores: Vec<f64> = k
                .iter()
                .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / d.sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            (0..v[0].len())
                .map(|c| e.iter().zip(v).map(|(w, vj)| w / z * vj[c]).sum())
                .collect()
        })
        .collect()
}

pub fn oracle(q: &[Vec<f64>], ko: &[Vec<f64>], vo: &[Vec<f64>], kb: &[Vec<f64>], vb: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let a = softmax_attend(q, ko, vo);
    let b = softmax_attend(q, kb, vb);
    a.iter()
        .zip(&b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, r)| p + r).collect())
        .collect()
}

pub fn rows(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

pub fn tensor(rows: &[Vec<f64>]) -> Tensor<f64> {
    Tensor::new(vec![rows.len(), rows[0].len()], rows.concat())
}

pub fn single_branch(q: &Tensor<f64>, k: &Tensor<f64>, v: &Tensor<f64>) -> Tensor<f64> {
    let g = Graph::new();
    let lift = |t: &Tensor<f64>| g.constant(t.clone().reshape(vec![1, t.dim(0), t.dim(1)]));
    let out = lift(q).attention(lift(k), lift(v), None).value();
    (*out).clone().reshape(vec![q.dim(0), v.dim(1)])
}

/// Runs `n` random instances against the oracle. Returns the worst
/// max-abs difference, whether every `V_b ≡ 0` reduction equalled the
/// single-branch attention exactly, and the elapsed time.
pub fn random_instances(n: usize, seed: u64) -> (f64, bool, Duration) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut exact = true;
    for _ in 0..n {
        let n = rng.random_range(1..=6);
        let mo = rng.random_range(1..=4);
        let mb = rng.random_range(1..=8);
        let d = rng.random_range(1..=16);
        let q = rows(&mut rng, n, d, 2.0);
        let ko = rows(&mut rng, mo, d, 2.0);
        let vo = rows(&mut rng, mo, d, 2.0);
        let kb = rows(&mut rng, mb, d, 2.0);
        let vb = rows(&mut rng, mb, d, 2.0);
        let got = dual_cross_attention(&tensor(&q), &tensor(&ko), &tensor(&vo), &tensor(&kb), &tensor(&vb));
        let want = tensor(&oracle(&q, &ko, &vo, &kb, &vb));
        worst = worst.max(got.max_abs_diff(&want));

        let zeros = vec![vec![0.0; d]; mb];
        let reduced = dual_cross_attention(&tensor(&q), &tensor(&ko), &tensor(&vo), &tensor(&kb), &tensor(&zeros));
        exact &= reduced == single_branch(&tensor(&q), &tensor(&ko), &tensor(&vo));
    }
    (worst, exact, start.elapsed())
}
