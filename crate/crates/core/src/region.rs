//! Interest-region operations: mask dilation, Gaussian low-pass filtering,
//! the blur-radius schedule and the per-iteration uninterest filter.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, RegionMask};

/// Blur schedule over `iterations` refinement steps starting at `r_max` pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlurSchedule {
    pub r_max: f64,
    pub iterations: usize,
}

impl BlurSchedule {
    pub fn new(r_max: f64, iterations: usize) -> Result<Self> {
        let s = BlurSchedule { r_max, iterations };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_max >= 0.0) || !self.r_max.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!("r_max must be >= 0, got {}", self.r_max)));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidArgument("schedule needs at least one iteration".into()));
        }
        Ok(())
    }

    /// Radius at iteration `i` (1-based): linear from `r_max` at `i = 1` down to 0 at `i = N`.
    pub fn radius(&self, i: usize) -> Result<f64> {
        let n = self.iterations;
        if i < 1 || i > n {
            return Err(Error::IterationOutOfRange { i, n });
        }
        if i == n {
            return Ok(0.0);
        }
        Ok(self.r_max * (n - i) as f64 / (n - 1) as f64)
    }
}

/// Free-function form of [`BlurSchedule::radius`].
pub fn blur_radius(i: usize, sched: &BlurSchedule) -> Result<f64> {
    sched.radius(i)
}

/// Binary dilation with a `(2r+1) x (2r+1)` square structuring element.
pub fn dilate_mask(mask: &RegionMask, radius: usize) -> Result<RegionMask> {
    mask.ensure_binary()?;
    if radius == 0 {
        return Ok(mask.clone());
    }
    let (h, w) = (mask.height(), mask.width());
    // Separable: a square max filter is a row max followed by a column max.
    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            rows[y * w + x] = (lo..=hi).map(|xx| mask.get(y, xx)).fold(0.0, f64::max);
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).map(|yy| rows[yy * w + x]).fold(0.0, f64::max);
        }
    }
    RegionMask::from_vec(h, w, out)
}

/// Standard deviation used for a blur of radius `r`.
pub fn sigma_for_radius(r: f64) -> f64 {
    r / 2.0
}

/// Normalized 1-D Gaussian taps for radius `r`, half-width `ceil(3 sigma)`.
pub fn gaussian_kernel(r: f64) -> Vec<f64> {
    let sigma = sigma_for_radius(r);
    let half = libm::ceil(3.0 * sigma) as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Maps an out-of-range coordinate back into `0..n` by mirror reflection
/// about the edge pixels (the edge itself is not repeated).
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Per-channel Gaussian blur with `sigma = r / 2`; `r = 0` returns the input unchanged.
pub fn gaussian_lpf(img: &ImageBuffer, r: f64) -> Result<ImageBuffer> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!("blur radius must be >= 0, got {r}")));
    }
    if r == 0.0 {
        return Ok(img.clone());
    }
    let kernel = gaussian_kernel(r);
    let half = (kernel.len() / 2) as isize;
    let (c, h, w) = img.shape();
    let mut tmp = vec![0.0; c * h * w];
    let src = img.data();
    for ci in 0..c {
        for y in 0..h {
            let row = &src[(ci * h + y) * w..(ci * h + y + 1) * w];
            for x in 0..w {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    acc += kv * row[reflect_index(x as isize + k as isize - half, w)];
                }
                tmp[(ci * h + y) * w + x] = acc;
            }
        }
    }
    let mut out = vec![0.0; c * h * w];
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let yy = reflect_index(y as isize + k as isize - half, h);
                    acc += kv * tmp[(ci * h + yy) * w + x];
                }
                out[(ci * h + y) * w + x] = acc;
            }
        }
    }
    ImageBuffer::from_vec(c, h, w, out)
}

/// Encoder input at iteration `i`: the interest region kept sharp, the rest
/// blurred with the scheduled radius, and the untouched image at `i = N`.
pub fn uninterest_filter(img: &ImageBuffer, mask: &RegionMask, i: usize, sched: &BlurSchedule) -> Result<ImageBuffer> {
    img.check_mask(mask)?;
    let r = sched.radius(i)?;
    if i == sched.iterations {
        return Ok(img.clone());
    }
    let keep = img.masked(mask)?;
    let rest = gaussian_lpf(&img.masked(&mask.complement())?, r)?;
    let data = keep.data().iter().zip(rest.data()).map(|(a, b)| a + b).collect();
    ImageBuffer::from_vec(img.channels(), img.height(), img.width(), data)
}
