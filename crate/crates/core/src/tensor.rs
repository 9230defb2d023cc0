//! Dense row-major `f64` tensors and the numeric kernels the graph is built on.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(dims: &[usize], value: f64) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(dim_err("Tensor::from_vec", n, data.len()));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            dims: vec![1],
            data: vec![value],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// `(channels, height, width)` of a rank-3 tensor.
    pub fn chw(&self) -> (usize, usize, usize) {
        debug_assert_eq!(self.dims.len(), 3, "expected a CHW tensor");
        (self.dims[0], self.dims[1], self.dims[2])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// `c = alpha * a * b + beta * c` over raw strided matrices.
///
/// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`; strides are in elements.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!((m - 1) * rsa + (k - 1) * csa < a.len());
        assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    }
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: every index touched by the kernel is bounded by the asserts above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Geometry of a square-kernel 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.h + 2 * self.pad - self.k) / self.stride + 1,
            (self.w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }
}

fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (oh, ow) = g.out_hw();
    let p = oh * ow;
    let mut col = vec![0.0; g.patch_len() * p];
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[oy * ow + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im_add(col: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let (oh, ow) = g.out_hw();
    let p = oh * ow;
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(x: &[f64], weight: &[f64], bias: Option<&[f64]>, g: &ConvGeom) -> Vec<f64> {
    let (oh, ow) = g.out_hw();
    let p = oh * ow;
    let kk = g.patch_len();
    let mut out = vec![0.0; g.cout * p];
    if let Some(b) = bias {
        for (co, chunk) in out.chunks_mut(p).enumerate() {
            chunk.fill(b[co]);
        }
    }
    let beta = if bias.is_some() { 1.0 } else { 0.0 };
    if g.k == 1 && g.stride == 1 && g.pad == 0 {
        gemm(g.cout, kk, p, 1.0, weight, (kk, 1), x, (p, 1), beta, &mut out, (p, 1));
    } else {
        let col = im2col(x, g);
        gemm(g.cout, kk, p, 1.0, weight, (kk, 1), &col, (p, 1), beta, &mut out, (p, 1));
    }
    out
}

/// Accumulates input, weight and bias gradients of a convolution.
pub(crate) fn conv2d_backward(
    x: &[f64],
    weight: &[f64],
    dout: &[f64],
    g: &ConvGeom,
    dx: Option<&mut [f64]>,
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    let (oh, ow) = g.out_hw();
    let p = oh * ow;
    let kk = g.patch_len();
    let direct = g.k == 1 && g.stride == 1 && g.pad == 0;
    if let Some(db) = db {
        for (co, chunk) in dout.chunks(p).enumerate() {
            db[co] += chunk.iter().sum::<f64>();
        }
    }
    if let Some(dw) = dw {
        if direct {
            gemm(g.cout, p, kk, 1.0, dout, (p, 1), x, (1, p), 1.0, dw, (kk, 1));
        } else {
            let col = im2col(x, g);
            gemm(g.cout, p, kk, 1.0, dout, (p, 1), &col, (1, p), 1.0, dw, (kk, 1));
        }
    }
    if let Some(dx) = dx {
        if direct {
            gemm(kk, g.cout, p, 1.0, weight, (1, kk), dout, (p, 1), 1.0, dx, (p, 1));
        } else {
            let mut dcol = vec![0.0; kk * p];
            gemm(kk, g.cout, p, 1.0, weight, (1, kk), dout, (p, 1), 0.0, &mut dcol, (p, 1));
            col2im_add(&dcol, g, dx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], w: &[f64], b: &[f64], g: &ConvGeom) -> Vec<f64> {
        let (oh, ow) = g.out_hw();
        let mut out = vec![0.0; g.cout * oh * ow];
        for co in 0..g.cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[co];
                    for ci in 0..g.cin {
                        for ky in 0..g.k {
                            for kx in 0..g.k {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                    continue;
                                }
                                acc += w[((co * g.cin + ci) * g.k + ky) * g.k + kx]
                                    * x[(ci * g.h + iy as usize) * g.w + ix as usize];
                            }
                        }
                    }
                    out[(co * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    fn ramp(n: usize, a: f64, b: f64) -> Vec<f64> {
        (0..n).map(|i| libm::sin(a * i as f64 + b)).collect()
    }

    #[test]
    fn conv_matches_naive_loop() {
        for &(k, stride, pad) in &[(3, 1, 1), (3, 2, 1), (1, 1, 0)] {
            let g = ConvGeom { cin: 3, h: 7, w: 6, cout: 4, k, stride, pad };
            let x = ramp(3 * 7 * 6, 0.37, 0.1);
            let w = ramp(4 * 3 * k * k, 0.91, 0.4);
            let b = ramp(4, 1.3, 0.2);
            let fast = conv2d_forward(&x, &w, Some(&b), &g);
            let slow = naive_conv(&x, &w, &b, &g);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <conv(x), y> must equal <x, conv^T(y)> and <w, dW(y)>.
        let g = ConvGeom { cin: 2, h: 5, w: 5, cout: 3, k: 3, stride: 2, pad: 1 };
        let (oh, ow) = g.out_hw();
        let x = ramp(2 * 25, 0.3, 0.0);
        let w = ramp(3 * 2 * 9, 0.7, 0.5);
        let y = ramp(3 * oh * ow, 1.1, 0.2);
        let out = conv2d_forward(&x, &w, None, &g);
        let lhs: f64 = out.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        conv2d_backward(&x, &w, &y, &g, Some(&mut dx), Some(&mut dw), None);
        let via_x: f64 = dx.iter().zip(&x).map(|(a, b)| a * b).sum();
        let via_w: f64 = dw.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((lhs - via_x).abs() < 1e-10);
        assert!((lhs - via_w).abs() < 1e-10);
    }
}
