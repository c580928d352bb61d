//! Named-parameter layer helpers shared by the encoders and the U-Net.

use customnet_autograd::{ParamStore, Real, Session, Tensor, Var};
use rand::Rng;

pub const NORM_EPS: f64 = 1e-5;

pub(crate) fn linear<'g, F: Real>(s: &Session<'g, F>, name: &str, x: Var<'g, F>) -> Var<'g, F> {
    x.linear(s.param(&format!("{name}.w")), Some(s.param(&format!("{name}.b"))))
}

pub(crate) fn linear_nobias<'g, F: Real>(s: &Session<'g, F>, name: &str, x: Var<'g, F>) -> Var<'g, F> {
    x.linear(s.param(&format!("{name}.w")), None)
}

pub(crate) fn conv<'g, F: Real>(s: &Session<'g, F>, name: &str, x: Var<'g, F>, stride: usize, pad: usize) -> Var<'g, F> {
    x.conv2d(s.param(&format!("{name}.w")), Some(s.param(&format!("{name}.b"))), stride, pad)
}

pub(crate) fn group_norm<'g, F: Real>(s: &Session<'g, F>, name: &str, x: Var<'g, F>, groups: usize) -> Var<'g, F> {
    x.group_norm(
        groups,
        s.param(&format!("{name}.g")),
        s.param(&format!("{name}.b")),
        F::from_f64(NORM_EPS),
    )
}

pub(crate) fn layer_norm<'g, F: Real>(s: &Session<'g, F>, name: &str, x: Var<'g, F>) -> Var<'g, F> {
    x.layer_norm(s.param(&format!("{name}.g")), s.param(&format!("{name}.b")), F::from_f64(NORM_EPS))
}

/// Parameter initializer writing into a store.
pub(crate) struct Init<'a, R> {
    pub store: &'a mut ParamStore<f32>,
    pub rng: &'a mut R,
}

impl<R: Rng> Init<'_, R> {
    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) {
        self.store.insert(name, Tensor::randn(shape.to_vec(), std, self.rng));
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) {
        self.store.insert(name, Tensor::zeros(shape.to_vec()));
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) {
        self.store.insert(name, Tensor::full(shape.to_vec(), 1.0));
    }

    pub fn linear(&mut self, name: &str, din: usize, dout: usize) {
        self.normal(&format!("{name}.w"), &[din, dout], (1.0 / din as f64).sqrt());
        self.zeros(&format!("{name}.b"), &[dout]);
    }

    pub fn linear_nobias(&mut self, name: &str, din: usize, dout: usize) {
        self.normal(&format!("{name}.w"), &[din, dout], (1.0 / din as f64).sqrt());
    }

    pub fn linear_zero(&mut self, name: &str, din: usize, dout: usize) {
        self.zeros(&format!("{name}.w"), &[din, dout]);
        self.zeros(&format!("{name}.b"), &[dout]);
    }

    pub fn conv(&mut self, name: &str, k: usize, cin: usize, cout: usize) {
        self.normal(&format!("{name}.w"), &[k, k, cin, cout], (2.0 / (k * k * cin) as f64).sqrt());
        self.zeros(&format!("{name}.b"), &[cout]);
    }

    pub fn conv_zero(&mut self, name: &str, k: usize, cin: usize, cout: usize) {
        self.zeros(&format!("{name}.w"), &[k, k, cin, cout]);
        self.zeros(&format!("{name}.b"), &[cout]);
    }

    pub fn norm(&mut self, name: &str, c: usize) {
        self.ones(&format!("{name}.g"), &[c]);
        self.zeros(&format!("{name}.b"), &[c]);
    }
}
