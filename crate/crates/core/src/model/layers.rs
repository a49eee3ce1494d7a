//! Building blocks shared by the three networks.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::nn::{ops, Bound, ParamStore, Var};
use crate::tensor::{Float, Tensor};

/// Activation-pattern trace for piecewise-linear networks.
///
/// `Record` keeps every leaky-ReLU slope pattern of a forward pass. `Replay`
/// reruns the network as the linear map it is around that pass: the recorded
/// slopes are reused and biases dropped, so the output is the directional
/// derivative of the recorded pass along the new input.
pub enum Trace<T: Float> {
    Off,
    Record(Vec<Arc<Tensor<T>>>),
    Replay { slopes: Vec<Arc<Tensor<T>>>, cursor: usize },
}

impl<T: Float> Trace<T> {
    pub fn replay(slopes: Vec<Arc<Tensor<T>>>) -> Self {
        Trace::Replay { slopes, cursor: 0 }
    }

    pub fn is_replay(&self) -> bool {
        matches!(self, Trace::Replay { .. })
    }

    pub fn into_slopes(self) -> Vec<Arc<Tensor<T>>> {
        match self {
            Trace::Record(s) | Trace::Replay { slopes: s, .. } => s,
            Trace::Off => Vec::new(),
        }
    }
}

pub fn act<'g, T: Float>(x: &Var<'g, T>, slope: f32, trace: &mut Trace<T>) -> Var<'g, T> {
    match trace {
        Trace::Off => ops::leaky_relu(x, T::from_f64(slope as f64)).0,
        Trace::Record(slopes) => {
            let (y, s) = ops::leaky_relu(x, T::from_f64(slope as f64));
            slopes.push(s);
            y
        }
        Trace::Replay { slopes, cursor } => {
            let s = Arc::clone(&slopes[*cursor]);
            *cursor += 1;
            ops::mul_const(x, s)
        }
    }
}

/// Convolution with parameters `{name}.w` and optional `{name}.b`.
pub fn conv<'g, T: Float>(p: &Bound<'g, T>, name: &str, x: &Var<'g, T>, trace: &Trace<T>) -> Var<'g, T> {
    let w = p.var(&format!("{name}.w"));
    let b = if trace.is_replay() { None } else { p.try_var(&format!("{name}.b")) };
    ops::conv2d(x, w, b)
}

pub fn dense<'g, T: Float>(p: &Bound<'g, T>, name: &str, x: &Var<'g, T>, trace: &Trace<T>) -> Var<'g, T> {
    let w = p.var(&format!("{name}.w"));
    let b = if trace.is_replay() { None } else { p.try_var(&format!("{name}.b")) };
    ops::linear(x, w, b)
}

/// Spatially-adaptive modulation: `norm(x) ⊙ (1 + γ(sem)) + β(sem)`.
pub fn spade<'g, T: Float>(p: &Bound<'g, T>, name: &str, x: &Var<'g, T>, sem: &Var<'g, T>) -> Var<'g, T> {
    assert_eq!(x.shape()[2..], sem.shape()[2..], "SPADE feature/semantic spatial mismatch");
    let off = Trace::Off;
    let gamma = conv(p, &format!("{name}.gamma"), sem, &off);
    let beta = conv(p, &format!("{name}.beta"), sem, &off);
    let normed = ops::instance_norm(x, 1e-5);
    ops::add(&ops::mul(&normed, &ops::add_scalar(&gamma, T::one())), &beta)
}

/// Ordered list of parameter names and shapes for one network.
#[derive(Default)]
pub struct Layout {
    pub entries: Vec<(String, Vec<usize>, Init)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Zero-mean Gaussian with std `sqrt(2 / fan_in)`, times a gain.
    FanIn(f32),
    Zeros,
}

impl Layout {
    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, bias: bool) {
        self.conv_gain(name, cin, cout, k, bias, 1.0);
    }

    pub fn conv_gain(&mut self, name: &str, cin: usize, cout: usize, k: usize, bias: bool, gain: f32) {
        self.entries.push((format!("{name}.w"), vec![cout, cin, k, k], Init::FanIn(gain)));
        if bias {
            self.entries.push((format!("{name}.b"), vec![cout], Init::Zeros));
        }
    }

    pub fn dense(&mut self, name: &str, din: usize, dout: usize) {
        self.dense_gain(name, din, dout, 1.0);
    }

    pub fn dense_gain(&mut self, name: &str, din: usize, dout: usize, gain: f32) {
        self.entries.push((format!("{name}.w"), vec![dout, din], Init::FanIn(gain)));
        self.entries.push((format!("{name}.b"), vec![dout], Init::Zeros));
    }

    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut v: Vec<_> = self.entries.iter().map(|(n, s, _)| (n.clone(), s.clone())).collect();
        v.sort();
        v
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamStore {
        let mut store = ParamStore::new();
        for (name, shape, init) in &self.entries {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Zeros => vec![0.0; n],
                Init::FanIn(gain) => {
                    let fan_in: usize = shape[1..].iter().product();
                    let std = gain * (2.0 / fan_in as f32).sqrt();
                    let dist = Normal::new(0.0f32, std).expect("finite std");
                    (0..n).map(|_| dist.sample(rng)).collect()
                }
            };
            store.insert(name.clone(), Tensor::from_vec(shape, data).expect("layout shape"));
        }
        store
    }

    /// Checks that `store` has exactly this layout.
    pub fn check(&self, store: &ParamStore, what: &str) -> crate::Result<()> {
        let expected = self.shapes();
        let actual: Vec<_> = store.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect();
        if expected != actual {
            let diff: Vec<_> = expected.iter().filter(|e| !actual.contains(e)).map(|(n, s)| format!("{n}{s:?}")).collect();
            return Err(crate::Error::Shape(format!("{what} parameters do not match the architecture; expected {diff:?}")));
        }
        Ok(())
    }
}
