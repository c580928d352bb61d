//! Diffusion-core sanity checks shared by the unit suite and the
//! acceptance report.

use customnet::diffusion::{ddim_step, make_schedule, q_sample, NoiseSchedule};
use customnet_autograd::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn schedule() -> NoiseSchedule {
    make_schedule(1000, 1e-4, 0.02).unwrap()
}

pub fn strictly_decreasing(s: &NoiseSchedule) -> bool {
    s.alpha_bars().windows(2).all(|w| w[1] < w[0]) && s.alpha_bar(1) < 1.0 && s.alpha_bar(1000) > 0.0
}

/// `(t, sample variance, expected 1 - ᾱ_t, standard error)` of `q_sample`
/// around a constant `z0` with 1e5 draws.
pub fn q_sample_variances(seed: u64) -> Vec<(usize, f64, f64, f64)> {
    let s = schedule();
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z0 = Tensor::full(vec![n], 0.3);
    [50, 400, 900]
        .into_iter()
        .map(|t| {
            let eps = Tensor::<f64>::randn(vec![n], 1.0, &mut rng);
            let z = q_sample(&z0, t, &eps, &s).unwrap();
            let mean = z.sum() / n as f64;
            let var = z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let want = 1.0 - s.alpha_bar(t);
            // standard error of a Gaussian sample variance
            (t, var, want, want * (2.0 / (n - 1) as f64).sqrt())
        })
        .collect()
}

/// Worst max-abs error of a single DDIM step to t = 0 given the true noise.
pub fn ddim_inversion_error(seed: u64) -> f64 {
    let s = schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z0 = Tensor::<f64>::uniform(vec![4, 8, 8, 3], 1.0, &mut rng);
    let eps = Tensor::<f64>::randn(vec![4, 8, 8, 3], 1.0, &mut rng);
    [1, 250, 999]
        .into_iter()
        .map(|t| {
            let zt = q_sample(&z0, t, &eps, &s).unwrap();
            ddim_step(&zt, &eps, s.alpha_bar(t), 1.0, 0.0, None).max_abs_diff(&z0)
        })
        .fold(0.0, f64::max)
}

/// ε̂(z_t) = √(1−ᾱ)(z_t − √ᾱ m)/(ᾱ s² + 1 − ᾱ), the posterior-mean noise
/// for data N(m, s²), with parameters (m, log s).
pub struct GaussianToy {
    pub m: f64,
    pub log_s: f64,
}

impl GaussianToy {
    /// Loss and its gradient in (m, log s) over a batch.
    pub fn loss_grad(&self, z0: &[f64], eps: &[f64], ab: &[f64]) -> (f64, [f64; 2]) {
        let s2 = (2.0 * self.log_s).exp();
        let n = z0.len() as f64;
        let (mut loss, mut gm, mut gu) = (0.0, 0.0, 0.0);
        for i in 0..z0.len() {
            let (sa, sb) = (ab[i].sqrt(), (1.0 - ab[i]).sqrt());
            let zt = sa * z0[i] + sb * eps[i];
            let d = ab[i] * s2 + 1.0 - ab[i];
            let r = zt - sa * self.m;
            let e = sb * r / d;
            let diff = e - eps[i];
            loss += diff * diff / n;
            gm += 2.0 * diff * (-sb * sa / d) / n;
            gu += 2.0 * diff * (-sb * r / (d * d) * ab[i] * 2.0 * s2) / n;
        }
        (loss, [gm, gu])
    }
}

/// Fits the toy to data N(0.7, 0.02²) with Adam for 2000 steps of 256
/// draws. Returns the toy, the first-step loss and a held-out loss over
/// 20,000 draws.
pub fn fit_gaussian_toy(seed: u64) -> (GaussianToy, f64, f64) {
    let s = schedule();
    let (mean, std) = (0.7, 0.02);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |n: usize, rng: &mut ChaCha8Rng| {
        let z0: Vec<f64> = (0..n).map(|_| mean + std * { let v: f64 = StandardNormal.sample(rng); v }).collect();
        let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let ab: Vec<f64> = (0..n).map(|_| s.alpha_bar(rng.random_range(1..=1000))).collect();
        (z0, eps, ab)
    };
    let mut toy = GaussianToy { m: 0.0, log_s: 0.0 };
    let (b1, b2, lr) = (0.9, 0.999, 0.02);
    let (mut m1, mut v1) = ([0.0; 2], [0.0; 2]);
    let mut first = None;
    for step in 1..=2000 {
        let (z0, eps, ab) = draw(256, &mut rng);
        let (loss, g) = toy.loss_grad(&z0, &eps, &ab);
        first.get_or_insert(loss);
        for k in 0..2 {
            m1[k] = b1 * m1[k] + (1.0 - b1) * g[k];
            v1[k] = b2 * v1[k] + (1.0 - b2) * g[k] * g[k];
            let upd = lr * (m1[k] / (1.0 - b1.powi(step))) / ((v1[k] / (1.0 - b2.powi(step))).sqrt() + 1e-8);
            if k == 0 {
                toy.m -= upd;
            } else {
                toy.log_s -= upd;
            }
        }
    }
    let (z0, eps, ab) = draw(20_000, &mut rng);
    let (held_out, _) = toy.loss_grad(&z0, &eps, &ab);
    (toy, first.unwrap_or(f64::NAN), held_out)
}
