//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is a Wengert list: every operation appends a node holding its
//! output value, and [`Graph::backward`] walks the list once in reverse. Nodes
//! that do not depend on a trainable leaf are never visited by the backward
//! pass, so frozen networks only pay for input gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{conv2d_backward, conv2d_forward, ConvGeom, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const NORM_EPS: f64 = 1e-10;

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Upsample2x(Var),
    InstanceNorm {
        x: Var,
        inv_std: Vec<f64>,
    },
    Modulate {
        x: Var,
        scale: Var,
        shift: Var,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Sigmoid(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Affine {
        x: Var,
        a: f64,
    },
    MaskMul {
        x: Var,
        mask: Vec<f64>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    ConcatChannels(Var, Var),
    MeanPool(Var),
    Row {
        x: Var,
        row: usize,
    },
    StackRows(Vec<Var>),
    MeanSquaredError(Var, Var),
    ChannelUnitNorm {
        x: Var,
        inv_norm: Vec<f64>,
    },
    Cosine {
        a: Var,
        b: Var,
        norm_a: f64,
        norm_b: f64,
    },
    WeightedSum(Vec<(Var, f64)>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` was unreachable.
    pub fn take_or_zeros(&mut self, v: Var, like: &Tensor) -> Tensor {
        self.grads[v.0].take().unwrap_or_else(|| Tensor::zeros(like.dims()))
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that gradients never flow into.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, t: Tensor, trainable: bool) -> Var {
        if trainable {
            self.param(t)
        } else {
            self.constant(t)
        }
    }

    /// Square-kernel convolution of a CHW tensor; `w` is `[cout, cin, k, k]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let (cin, h, wd) = self.value(x).chw();
        let wd_dims = self.value(w).dims();
        assert_eq!(wd_dims.len(), 4, "conv weight must be rank 4");
        assert_eq!(wd_dims[1], cin, "conv weight input channels");
        let geom = ConvGeom {
            cin,
            h,
            w: wd,
            cout: wd_dims[0],
            k: wd_dims[2],
            stride,
            pad,
        };
        let (oh, ow) = geom.out_hw();
        let out = conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let value = Tensor::from_vec(&[geom.cout, oh, ow], out).expect("conv output size");
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        self.push(value, Op::Conv2d { x, w, b, geom }, &inputs)
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2x(&mut self, x: Var) -> Var {
        let (c, h, w) = self.value(x).chw();
        let src = self.value(x).data();
        let mut out = vec![0.0; c * 4 * h * w];
        for ci in 0..c {
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    out[(ci * 2 * h + y) * 2 * w + xx] = src[(ci * h + y / 2) * w + xx / 2];
                }
            }
        }
        let value = Tensor::from_vec(&[c, 2 * h, 2 * w], out).unwrap();
        self.push(value, Op::Upsample2x(x), &[x])
    }

    /// Per-channel normalization to zero mean and unit (population) variance.
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Var {
        let (c, h, w) = self.value(x).chw();
        let n = (h * w) as f64;
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        let mut inv_std = vec![0.0; c];
        for ci in 0..c {
            let plane = &src[ci * h * w..(ci + 1) * h * w];
            let mean = plane.iter().sum::<f64>() / n;
            let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / libm::sqrt(var + eps);
            inv_std[ci] = is;
            for (o, v) in out[ci * h * w..(ci + 1) * h * w].iter_mut().zip(plane) {
                *o = (v - mean) * is;
            }
        }
        let value = Tensor::from_vec(&[c, h, w], out).unwrap();
        self.push(value, Op::InstanceNorm { x, inv_std }, &[x])
    }

    /// `x * (1 + scale[c]) + shift[c]` with per-channel `scale` and `shift`.
    pub fn modulate(&mut self, x: Var, scale: Var, shift: Var) -> Var {
        let (c, h, w) = self.value(x).chw();
        assert_eq!(self.value(scale).len(), c);
        assert_eq!(self.value(shift).len(), c);
        let src = self.value(x).data();
        let s = self.value(scale).data();
        let t = self.value(shift).data();
        let mut out = vec![0.0; src.len()];
        for ci in 0..c {
            let g = 1.0 + s[ci];
            for (o, v) in out[ci * h * w..(ci + 1) * h * w]
                .iter_mut()
                .zip(&src[ci * h * w..(ci + 1) * h * w])
            {
                *o = v * g + t[ci];
            }
        }
        let value = Tensor::from_vec(&[c, h, w], out).unwrap();
        self.push(value, Op::Modulate { x, scale, shift }, &[x, scale, shift])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(value, Op::LeakyRelu { x, slope }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| 1.0 / (1.0 + libm::exp(-v)));
        self.push(value, Op::Sigmoid(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dims(), self.value(b).dims(), "add shapes");
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push(value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dims(), self.value(b).dims(), "sub shapes");
        let mut value = self.value(a).clone();
        for (o, v) in value.data_mut().iter_mut().zip(self.value(b).data()) {
            *o -= v;
        }
        self.push(value, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise `a * x + b`.
    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        let value = self.value(x).map(|v| a * v + b);
        self.push(value, Op::Affine { x, a }, &[x])
    }

    /// Multiplies every channel of a CHW tensor by a fixed `h * w` mask.
    pub fn mask_mul(&mut self, x: Var, mask: &[f64]) -> Var {
        let (c, h, w) = self.value(x).chw();
        assert_eq!(mask.len(), h * w, "mask size");
        let mut value = self.value(x).clone();
        for ci in 0..c {
            for (o, m) in value.data_mut()[ci * h * w..(ci + 1) * h * w].iter_mut().zip(mask) {
                *o *= m;
            }
        }
        self.push(
            value,
            Op::MaskMul {
                x,
                mask: mask.to_vec(),
            },
            &[x],
        )
    }

    /// `w @ x + b` for a vector `x`; `w` is `[out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let wd = self.value(w).dims();
        let (out_n, in_n) = (wd[0], wd[1]);
        assert_eq!(self.value(x).len(), in_n, "linear input size");
        let xs = self.value(x).data();
        let ws = self.value(w).data();
        let mut out = self.value(b).data().to_vec();
        for (o, row) in out.iter_mut().zip(ws.chunks(in_n)) {
            *o += row.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
        }
        let value = Tensor::from_vec(&[out_n], out).unwrap();
        self.push(value, Op::Linear { x, w, b }, &[x, w, b])
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Var {
        let (ca, h, w) = self.value(a).chw();
        let (cb, hb, wb) = self.value(b).chw();
        assert_eq!((h, w), (hb, wb), "concat spatial size");
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        let value = Tensor::from_vec(&[ca + cb, h, w], data).unwrap();
        self.push(value, Op::ConcatChannels(a, b), &[a, b])
    }

    /// Global spatial mean, CHW -> C.
    pub fn mean_pool(&mut self, x: Var) -> Var {
        let (c, h, w) = self.value(x).chw();
        let n = (h * w) as f64;
        let out: Vec<f64> = self
            .value(x)
            .data()
            .chunks(h * w)
            .map(|p| p.iter().sum::<f64>() / n)
            .collect();
        let value = Tensor::from_vec(&[c], out).unwrap();
        self.push(value, Op::MeanPool(x), &[x])
    }

    /// Row `row` of a rank-2 tensor as a vector.
    pub fn row(&mut self, x: Var, row: usize) -> Var {
        let dims = self.value(x).dims();
        let d = dims[1];
        assert!(row < dims[0]);
        let value = Tensor::from_vec(&[d], self.value(x).data()[row * d..(row + 1) * d].to_vec()).unwrap();
        self.push(value, Op::Row { x, row }, &[x])
    }

    /// Stacks equal-length vectors into a `[rows.len(), d]` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        let d = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            assert_eq!(self.value(r).len(), d, "stack_rows length");
            data.extend_from_slice(self.value(r).data());
        }
        let value = Tensor::from_vec(&[rows.len(), d], data).unwrap();
        self.push(value, Op::StackRows(rows.to_vec()), rows)
    }

    /// Mean of squared elementwise differences, as a scalar.
    pub fn mean_squared_error(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dims(), self.value(b).dims(), "mse shapes");
        let n = self.value(a).len() as f64;
        let s: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        self.push(Tensor::scalar(s / n), Op::MeanSquaredError(a, b), &[a, b])
    }

    /// Normalizes the channel vector at every pixel to unit length.
    pub fn channel_unit_norm(&mut self, x: Var) -> Var {
        let (c, h, w) = self.value(x).chw();
        let p = h * w;
        let src = self.value(x).data();
        let mut inv_norm = vec![0.0; p];
        for (i, inv) in inv_norm.iter_mut().enumerate() {
            let s: f64 = (0..c).map(|ci| src[ci * p + i] * src[ci * p + i]).sum();
            *inv = 1.0 / libm::sqrt(s + NORM_EPS);
        }
        let mut out = vec![0.0; src.len()];
        for ci in 0..c {
            for i in 0..p {
                out[ci * p + i] = src[ci * p + i] * inv_norm[i];
            }
        }
        let value = Tensor::from_vec(&[c, h, w], out).unwrap();
        self.push(value, Op::ChannelUnitNorm { x, inv_norm }, &[x])
    }

    /// Cosine similarity of two vectors; zero (with zero gradient) if either is the zero vector.
    pub fn cosine(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).len(), self.value(b).len(), "cosine lengths");
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let dot: f64 = av.iter().zip(bv).map(|(x, y)| x * y).sum();
        let sa: f64 = av.iter().map(|x| x * x).sum();
        let sb: f64 = bv.iter().map(|x| x * x).sum();
        let (norm_a, norm_b) = (libm::sqrt(sa), libm::sqrt(sb));
        // sqrt(s * s) == s exactly, so identical inputs give exactly 1.
        let c = if sa == 0.0 || sb == 0.0 {
            0.0
        } else {
            (dot / libm::sqrt(sa * sb)).clamp(-1.0, 1.0)
        };
        self.push(Tensor::scalar(c), Op::Cosine { a, b, norm_a, norm_b }, &[a, b])
    }

    /// `sum_k weight_k * term_k` over scalar terms.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let s: f64 = terms.iter().map(|&(v, c)| c * self.value(v).item()).sum();
        let inputs: Vec<Var> = terms.iter().map(|t| t.0).collect();
        self.push(Tensor::scalar(s), Op::WeightedSum(terms.to_vec()), &inputs)
    }

    /// Backpropagates from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar");
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let mut dx = self.needs(*x).then(|| vec![0.0; self.value(*x).len()]);
                let mut dw = self.needs(*w).then(|| vec![0.0; self.value(*w).len()]);
                let mut db = b.filter(|b| self.needs(*b)).map(|b| vec![0.0; self.value(b).len()]);
                conv2d_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gd,
                    geom,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                if let Some(dx) = dx {
                    accumulate(grads, *x, self.value(*x), dx);
                }
                if let Some(dw) = dw {
                    accumulate(grads, *w, self.value(*w), dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    accumulate(grads, *b, self.value(*b), db);
                }
            }
            Op::Upsample2x(x) => {
                let (c, h, w) = self.value(*x).chw();
                let mut dx = vec![0.0; c * h * w];
                for ci in 0..c {
                    for y in 0..2 * h {
                        for xx in 0..2 * w {
                            dx[(ci * h + y / 2) * w + xx / 2] += gd[(ci * 2 * h + y) * 2 * w + xx];
                        }
                    }
                }
                accumulate(grads, *x, self.value(*x), dx);
            }
            Op::InstanceNorm { x, inv_std } => {
                let (c, h, w) = self.value(*x).chw();
                let p = h * w;
                let n = p as f64;
                let y = node.value.data();
                let mut dx = vec![0.0; c * p];
                for ci in 0..c {
                    let ys = &y[ci * p..(ci + 1) * p];
                    let gs = &gd[ci * p..(ci + 1) * p];
                    let mean_g = gs.iter().sum::<f64>() / n;
                    let mean_gy = gs.iter().zip(ys).map(|(a, b)| a * b).sum::<f64>() / n;
                    for i in 0..p {
                        dx[ci * p + i] = inv_std[ci] * (gs[i] - mean_g - ys[i] * mean_gy);
                    }
                }
                accumulate(grads, *x, self.value(*x), dx);
            }
            Op::Modulate { x, scale, shift } => {
                let (c, h, w) = self.value(*x).chw();
                let p = h * w;
                let xs = self.value(*x).data();
                let s = self.value(*scale).data();
                if self.needs(*x) {
                    let mut dx = vec![0.0; c * p];
                    for ci in 0..c {
                        for i in 0..p {
                            dx[ci * p + i] = gd[ci * p + i] * (1.0 + s[ci]);
                        }
                    }
                    accumulate(grads, *x, self.value(*x), dx);
                }
                if self.needs(*scale) {
                    let ds: Vec<f64> = (0..c)
                        .map(|ci| {
                            gd[ci * p..(ci + 1) * p]
                                .iter()
                                .zip(&xs[ci * p..(ci + 1) * p])
                                .map(|(a, b)| a * b)
                                .sum()
                        })
                        .collect();
                    accumulate(grads, *scale, self.value(*scale), ds);
                }
                if self.needs(*shift) {
                    let dt: Vec<f64> = gd.chunks(p).map(|ch| ch.iter().sum()).collect();
                    accumulate(grads, *shift, self.value(*shift), dt);
                }
            }
            Op::LeakyRelu { x, slope } => {
                let dx = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&v, &g)| if v > 0.0 { g } else { slope * g })
                    .collect();
                accumulate(grads, *x, self.value(*x), dx);
            }
            Op::Sigmoid(x) => {
                let dx = node.value.data().iter().zip(gd).map(|(&y, &g)| g * y * (1.0 - y)).collect();
                accumulate(grads, *x, self.value(*x), dx);
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.needs(v) {
                        accumulate(grads, v, self.value(v), gd.to_vec());
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    accumulate(grads, *a, self.value(*a), gd.to_vec());
                }
                if self.needs(*b) {
                    accumulate(grads, *b, self.value(*b), gd.iter().map(|v| -v).collect());
                }
            }
            Op::Affine { x, a } => {
                accumulate(grads, *x, self.value(*x), gd.iter().map(|v| a * v).collect());
            }
            Op::MaskMul { x, mask } => {
                let p = mask.len();
                let dx = gd.iter().enumerate().map(|(i, g)| g * mask[i % p]).collect();
                accumulate(grads, *x, self.value(*x), dx);
            }
            Op::Linear { x, w, b } => {
                let in_n = self.value(*w).dims()[1];
                let ws = self.value(*w).data();
                let xs = self.value(*x).data();
                if self.needs(*x) {
                    let mut dx = vec![0.0; in_n];
                    for (row, &go) in ws.chunks(in_n).zip(gd) {
                        for (d, &wv) in dx.iter_mut().zip(row) {
                            *d += go * wv;
                        }
                    }
                    accumulate(grads, *x, self.value(*x), dx);
                }
                if self.needs(*w) {
                    let mut dw = vec![0.0; ws.len()];
                    for (row, &go) in dw.chunks_mut(in_n).zip(gd) {
                        for (d, &xv) in row.iter_mut().zip(xs) {
                            *d = go * xv;
                        }
                    }
                    accumulate(grads, *w, self.value(*w), dw);
                }
                if self.needs(*b) {
                    accumulate(grads, *b, self.value(*b), gd.to_vec());
                }
            }
            Op::ConcatChannels(a, b) => {
                let na = self.value(*a).len();
                if self.needs(*a) {
                    accumulate(grads, *a, self.value(*a), gd[..na].to_vec());
                }
                if self.needs(*b) {
                    accumulate(grads, *b, self.value(*b), gd[na..].to_vec());
                }
            }
            Op::MeanPool(x) => {
                let (c, h, w) = self.value(*x).chw();
                let p = h * w;
                let mut dx = vec![0.0; c * p];
                for ci in 0..c {
                    let v = gd[ci] / p as f64;
                    dx[ci * p..(ci + 1) * p].fill(v);
                }
                accumulate(grads, *x, self.value(*x), dx);
            }
            Op::Row { x, row } => {
                let d = gd.len();
                let mut dx = vec![0.0; self.value(*x).len()];
                dx[row * d..(row + 1) * d].copy_from_slice(gd);
                accumulate(grads, *x, self.value(*x), dx);
            }
            Op::StackRows(rows) => {
                let d = self.value(rows[0]).len();
                for (i, &r) in rows.iter().enumerate() {
                    if self.needs(r) {
                        accumulate(grads, r, self.value(r), gd[i * d..(i + 1) * d].to_vec());
                    }
                }
            }
            Op::MeanSquaredError(a, b) => {
                let n = self.value(*a).len() as f64;
                let k = 2.0 * gd[0] / n;
                let diff: Vec<f64> = self
                    .value(*a)
                    .data()
                    .iter()
                    .zip(self.value(*b).data())
                    .map(|(x, y)| k * (x - y))
                    .collect();
                if self.needs(*b) {
                    accumulate(grads, *b, self.value(*b), diff.iter().map(|v| -v).collect());
                }
                if self.needs(*a) {
                    accumulate(grads, *a, self.value(*a), diff);
                }
            }
            Op::ChannelUnitNorm { x, inv_norm } => {
                let (c, h, w) = self.value(*x).chw();
                let p = h * w;
                let y = node.value.data();
                let mut dx = vec![0.0; c * p];
                for i in 0..p {
                    let dot: f64 = (0..c).map(|ci| y[ci * p + i] * gd[ci * p + i]).sum();
                    for ci in 0..c {
                        dx[ci * p + i] = (gd[ci * p + i] - y[ci * p + i] * dot) * inv_norm[i];
                    }
                }
                accumulate(grads, *x, self.value(*x), dx);
            }
            Op::Cosine { a, b, norm_a, norm_b } => {
                if *norm_a == 0.0 || *norm_b == 0.0 {
                    return;
                }
                let c = node.value.item();
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let nab = norm_a * norm_b;
                if self.needs(*a) {
                    let da = av
                        .iter()
                        .zip(bv)
                        .map(|(x, y)| gd[0] * (y / nab - c * x / (norm_a * norm_a)))
                        .collect();
                    accumulate(grads, *a, self.value(*a), da);
                }
                if self.needs(*b) {
                    let db = av
                        .iter()
                        .zip(bv)
                        .map(|(x, y)| gd[0] * (x / nab - c * y / (norm_b * norm_b)))
                        .collect();
                    accumulate(grads, *b, self.value(*b), db);
                }
            }
            Op::WeightedSum(terms) => {
                for &(v, c) in terms {
                    if self.needs(v) {
                        accumulate(grads, v, self.value(v), vec![c * gd[0]]);
                    }
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, like: &Tensor, delta: Vec<f64>) {
    match &mut grads[v.0] {
        Some(t) => {
            for (a, b) in t.data_mut().iter_mut().zip(&delta) {
                *a += b;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::from_vec(like.dims(), delta).expect("gradient shape"));
        }
    }
}
