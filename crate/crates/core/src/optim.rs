//! Adam optimizer over a network's canonical parameter list.

use alloc::vec::Vec;

use crate::nn::ParamTree;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Number of updates applied so far.
    pub t: u64,
}

impl Adam {
    pub fn new<N: ParamTree<Tensor>>(net: &N) -> Self {
        let mut m = Vec::new();
        net.visit("", &mut |_, t| m.push(Tensor::zeros(t.dims())));
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            v: m.clone(),
            m,
            t: 0,
        }
    }

    /// Applies one bias-corrected update with learning rate `lr`.
    pub fn step<N: ParamTree<Tensor>>(&mut self, net: &mut N, grads: &[Tensor], lr: f64) {
        assert_eq!(grads.len(), self.m.len(), "gradient count");
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let mut i = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        net.visit_mut("", &mut |_, p| {
            let g = grads[i].data();
            let m = ms[i].data_mut();
            let v = vs[i].data_mut();
            for (k, pv) in p.data_mut().iter_mut().enumerate() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                *pv -= lr * mh / (libm::sqrt(vh) + eps);
            }
            i += 1;
        });
    }
}
