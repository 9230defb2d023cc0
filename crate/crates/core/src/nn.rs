//! Parameter containers shared by the generator, encoder and proxy networks.
//!
//! Every network is generic over its leaf type: `Net<Tensor>` holds weights,
//! `Net<Var>` holds the same weights bound into a [`Graph`]. The traversal
//! order of [`ParamTree::visit`] is the canonical parameter order used for
//! gradients, optimizer state and checkpoint names.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{dim_err, Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

pub(crate) const LEAKY_SLOPE: f64 = 0.2;

pub trait ParamTree<T> {
    type Of<U>;

    fn map_leaves<U>(&self, f: &mut dyn FnMut(&T) -> U) -> Self::Of<U>;
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &T));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut T));
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        format!("{prefix}/{name}")
    }
}

/// Square-kernel convolution weights `[cout, cin, k, k]` and bias `[cout]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv<T> {
    pub weight: T,
    pub bias: T,
}

/// Fully connected weights `[out, in]` and bias `[out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: T,
    pub bias: T,
}

impl<T> ParamTree<T> for Conv<T> {
    type Of<U> = Conv<U>;

    fn map_leaves<U>(&self, f: &mut dyn FnMut(&T) -> U) -> Conv<U> {
        Conv {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &T)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut T)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

impl<T> ParamTree<T> for Dense<T> {
    type Of<U> = Dense<U>;

    fn map_leaves<U>(&self, f: &mut dyn FnMut(&T) -> U) -> Dense<U> {
        Dense {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &T)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut T)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

impl<T, P: ParamTree<T>> ParamTree<T> for Vec<P> {
    type Of<U> = Vec<P::Of<U>>;

    fn map_leaves<U>(&self, f: &mut dyn FnMut(&T) -> U) -> Self::Of<U> {
        self.iter().map(|p| p.map_leaves(f)).collect()
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &T)) {
        for (i, p) in self.iter().enumerate() {
            p.visit(&join(prefix, &format!("{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut T)) {
        for (i, p) in self.iter_mut().enumerate() {
            p.visit_mut(&join(prefix, &format!("{i}")), f);
        }
    }
}

impl Conv<Var> {
    pub(crate) fn apply(&self, g: &mut Graph, x: Var, stride: usize) -> Var {
        let k = g.value(self.weight).dims()[2];
        g.conv2d(x, self.weight, Some(self.bias), stride, k / 2)
    }
}

impl Dense<Var> {
    pub(crate) fn apply(&self, g: &mut Graph, x: Var) -> Var {
        g.linear(x, self.weight, self.bias)
    }
}

/// Binds every tensor of a network into `g`.
pub fn bind<N: ParamTree<Tensor>>(net: &N, g: &mut Graph, trainable: bool) -> N::Of<Var> {
    net.map_leaves(&mut |t| g.leaf(t.clone(), trainable))
}

/// Tensors of a network in canonical order.
pub fn leaves<T: Clone, N: ParamTree<T>>(net: &N) -> Vec<T> {
    let mut out = Vec::new();
    net.visit("", &mut |_, t| out.push(t.clone()));
    out
}

/// Canonical parameter names under `prefix`.
pub fn names<T, N: ParamTree<T>>(net: &N, prefix: &str) -> Vec<String> {
    let mut out = Vec::new();
    net.visit(prefix, &mut |n, _| out.push(String::from(n)));
    out
}

pub fn parameter_count<N: ParamTree<Tensor>>(net: &N) -> usize {
    let mut n = 0;
    net.visit("", &mut |_, t| n += t.len());
    n
}

/// Overwrites every tensor from a name lookup, checking shapes.
pub fn load_named<N: ParamTree<Tensor>>(
    net: &mut N,
    prefix: &str,
    lookup: &mut dyn FnMut(&str) -> Option<Tensor>,
) -> Result<()> {
    let mut err = None;
    net.visit_mut(prefix, &mut |name, t| {
        if err.is_some() {
            return;
        }
        match lookup(name) {
            Some(src) if src.dims() == t.dims() => *t = src,
            Some(src) => err = Some(dim_err("parameter shape", t.dims(), src.dims())),
            None => err = Some(Error::InvalidArgument(format!("missing parameter {name}"))),
        }
    });
    err.map_or(Ok(()), Err)
}

/// Seeded Gaussian weight factory.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Init { rng }
    }

    pub fn normal(&mut self, dims: &[usize], std: f64) -> Tensor {
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = self.rng.sample(StandardNormal);
                z * std
            })
            .collect();
        Tensor::from_vec(dims, data).expect("init shape")
    }

    /// He-initialized convolution with zero bias.
    pub fn conv(&mut self, cout: usize, cin: usize, k: usize, gain: f64) -> Conv<Tensor> {
        let fan_in = (cin * k * k) as f64;
        Conv {
            weight: self.normal(&[cout, cin, k, k], gain / libm::sqrt(fan_in)),
            bias: Tensor::zeros(&[cout]),
        }
    }

    pub fn dense(&mut self, out: usize, inp: usize, gain: f64) -> Dense<Tensor> {
        Dense {
            weight: self.normal(&[out, inp], gain / libm::sqrt(inp as f64)),
            bias: Tensor::zeros(&[out]),
        }
    }

    pub fn dense_with_bias(&mut self, out: usize, inp: usize, gain: f64, bias_std: f64) -> Dense<Tensor> {
        let mut d = self.dense(out, inp, gain);
        d.bias = self.normal(&[out], bias_std);
        d
    }

    pub fn conv_with_bias(&mut self, cout: usize, cin: usize, k: usize, gain: f64, bias_std: f64) -> Conv<Tensor> {
        let mut c = self.conv(cout, cin, k, gain);
        c.bias = self.normal(&[cout], bias_std);
        c
    }
}
