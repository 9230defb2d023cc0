//! Image and mask buffers.

use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

/// A `channels x height x width` image with values in `[0, 1]`, stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    tensor: Tensor,
}

impl ImageBuffer {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        ImageBuffer {
            tensor: Tensor::zeros(&[channels, height, width]),
        }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        ImageBuffer {
            tensor: Tensor::filled(&[channels, height, width], value),
        }
    }

    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        if tensor.dims().len() != 3 {
            return Err(dim_err("ImageBuffer", "[c, h, w]", tensor.dims()));
        }
        Ok(ImageBuffer { tensor })
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_tensor(Tensor::from_vec(&[channels, height, width], data)?)
    }

    pub fn channels(&self) -> usize {
        self.tensor.dims()[0]
    }

    pub fn height(&self) -> usize {
        self.tensor.dims()[1]
    }

    pub fn width(&self) -> usize {
        self.tensor.dims()[2]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.tensor.chw()
    }

    pub fn data(&self) -> &[f64] {
        self.tensor.data()
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        self.tensor.data_mut()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.tensor.data()[(c * self.height() + y) * self.width() + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let (h, w) = (self.height(), self.width());
        self.tensor.data_mut()[(c * h + y) * w + x] = v;
    }

    /// Pixelwise product with a mask (broadcast over channels).
    pub fn masked(&self, mask: &RegionMask) -> Result<ImageBuffer> {
        self.check_mask(mask)?;
        let p = mask.len();
        let mut out = self.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= mask.data()[i % p];
        }
        Ok(out)
    }

    pub fn check_same_shape(&self, other: &ImageBuffer) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(dim_err("image shape", self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn check_mask(&self, mask: &RegionMask) -> Result<()> {
        if (self.height(), self.width()) != (mask.height(), mask.width()) {
            return Err(dim_err(
                "mask shape",
                (self.height(), self.width()),
                (mask.height(), mask.width()),
            ));
        }
        Ok(())
    }

    /// Clamps every value into `[0, 1]`.
    pub fn clamp_unit(&mut self) {
        for v in self.data_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Box-filter downsampling by an integer factor.
    pub fn downsample(&self, factor: usize) -> Result<ImageBuffer> {
        let (c, h, w) = self.shape();
        if factor == 0 || h % factor != 0 || w % factor != 0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "cannot downsample {h}x{w} by {factor}"
            )));
        }
        let (oh, ow) = (h / factor, w / factor);
        let mut out = ImageBuffer::zeros(c, oh, ow);
        let norm = (factor * factor) as f64;
        for ci in 0..c {
            for y in 0..oh {
                for x in 0..ow {
                    let mut s = 0.0;
                    for dy in 0..factor {
                        for dx in 0..factor {
                            s += self.get(ci, y * factor + dy, x * factor + dx);
                        }
                    }
                    out.set(ci, y, x, s / norm);
                }
            }
        }
        Ok(out)
    }
}

/// A `height x width` mask with values in `[0, 1]`; 1 marks the interest region.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMask {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RegionMask {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self::filled(height, width, 1.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        RegionMask {
            height,
            width,
            data: alloc::vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(dim_err("RegionMask", height * width, data.len()));
        }
        if let Some((i, &v)) = data.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(alloc::format!(
                "mask value {v} at {i} outside [0, 1]"
            )));
        }
        Ok(RegionMask { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn ensure_binary(&self) -> Result<()> {
        match self.data.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
            Some((index, &value)) => Err(Error::NonBinaryMask { value, index }),
            None => Ok(()),
        }
    }

    /// `1 - mask`.
    pub fn complement(&self) -> RegionMask {
        RegionMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// Number of pixels equal to 1.
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1.0).count()
    }

    /// True when every pixel set in `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &RegionMask) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| a <= b)
    }
}
