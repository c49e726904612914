//! Dense real containers used throughout the crate.
//!
//! All layouts are row-major. `FeatureMap` is a single H×W×C image or
//! activation map, `Tensor4` adds a leading batch dimension (N×H×W×C), and
//! `Tensor` is a small arbitrary-rank container used for parameters and
//! serialization.

use crate::error::{Error, Result};

/// 2D real matrix (rows × cols).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }
}

/// Dense H×W×C activation map, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        FeatureMap { h, w, c, data: vec![0.0; h * w * c] }
    }

    pub fn from_data(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(Error::shape_mismatch(format!(
                "feature map data length {} does not match {}x{}x{}",
                data.len(),
                h,
                w,
                c
            )));
        }
        Ok(FeatureMap { h, w, c, data })
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.data[(y * self.w + x) * self.c + ch]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, ch: usize, value: f64) {
        self.data[(y * self.w + x) * self.c + ch] = value;
    }

    #[inline]
    pub fn add(&mut self, y: usize, x: usize, ch: usize, value: f64) {
        self.data[(y * self.w + x) * self.c + ch] += value;
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.h == other.h && self.w == other.w && self.c == other.c
    }

    /// Concatenates maps along the channel axis. All inputs must share H×W.
    pub fn concat_channels(parts: &[&FeatureMap]) -> Result<FeatureMap> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid_argument("concat of empty list"))?;
        let (h, w) = (first.h, first.w);
        for p in parts {
            if p.h != h || p.w != w {
                return Err(Error::shape_mismatch(format!(
                    "concat inputs {}x{} vs {}x{}",
                    p.h, p.w, h, w
                )));
            }
        }
        let c_total: usize = parts.iter().map(|p| p.c).sum();
        let mut out = FeatureMap::zeros(h, w, c_total);
        for y in 0..h {
            for x in 0..w {
                let mut co = 0;
                for p in parts {
                    for ch in 0..p.c {
                        out.set(y, x, co, p.at(y, x, ch));
                        co += 1;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Extracts channels `[from, to)` into a new map.
    pub fn slice_channels(&self, from: usize, to: usize) -> FeatureMap {
        assert!(from <= to && to <= self.c);
        let mut out = FeatureMap::zeros(self.h, self.w, to - from);
        for y in 0..self.h {
            for x in 0..self.w {
                for ch in from..to {
                    out.set(y, x, ch - from, self.at(y, x, ch));
                }
            }
        }
        out
    }
}

/// Batched N×H×W×C tensor, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        Tensor4 { n, h, w, c, data: vec![0.0; n * h * w * c] }
    }

    pub fn from_data(n: usize, h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * h * w * c {
            return Err(Error::shape_mismatch(format!(
                "tensor data length {} does not match {}x{}x{}x{}",
                data.len(),
                n,
                h,
                w,
                c
            )));
        }
        Ok(Tensor4 { n, h, w, c, data })
    }

    pub fn from_single(map: &FeatureMap) -> Self {
        Tensor4 { n: 1, h: map.h, w: map.w, c: map.c, data: map.data.clone() }
    }

    /// Copies sample `n` out of the batch.
    pub fn to_single(&self, n: usize) -> FeatureMap {
        assert!(n < self.n);
        let plane = self.h * self.w * self.c;
        FeatureMap {
            h: self.h,
            w: self.w,
            c: self.c,
            data: self.data[n * plane..(n + 1) * plane].to_vec(),
        }
    }

    #[inline]
    pub fn at(&self, n: usize, y: usize, x: usize, ch: usize) -> f64 {
        self.data[((n * self.h + y) * self.w + x) * self.c + ch]
    }

    #[inline]
    pub fn set(&mut self, n: usize, y: usize, x: usize, ch: usize, value: f64) {
        self.data[((n * self.h + y) * self.w + x) * self.c + ch] = value;
    }

    pub fn same_shape(&self, other: &Tensor4) -> bool {
        self.n == other.n && self.h == other.h && self.w == other.w && self.c == other.c
    }

    pub fn concat_channels(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
        if a.n != b.n || a.h != b.h || a.w != b.w {
            return Err(Error::shape_mismatch(format!(
                "concat inputs {}x{}x{} vs {}x{}x{}",
                a.n, a.h, a.w, b.n, b.h, b.w
            )));
        }
        let mut out = Tensor4::zeros(a.n, a.h, a.w, a.c + b.c);
        for n in 0..a.n {
            for y in 0..a.h {
                for x in 0..a.w {
                    for ch in 0..a.c {
                        out.set(n, y, x, ch, a.at(n, y, x, ch));
                    }
                    for ch in 0..b.c {
                        out.set(n, y, x, a.c + ch, b.at(n, y, x, ch));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Splits channels into `[0, split)` and `[split, c)`.
    pub fn split_channels(&self, split: usize) -> (Tensor4, Tensor4) {
        assert!(split <= self.c);
        let mut a = Tensor4::zeros(self.n, self.h, self.w, split);
        let mut b = Tensor4::zeros(self.n, self.h, self.w, self.c - split);
        for n in 0..self.n {
            for y in 0..self.h {
                for x in 0..self.w {
                    for ch in 0..split {
                        a.set(n, y, x, ch, self.at(n, y, x, ch));
                    }
                    for ch in split..self.c {
                        b.set(n, y, x, ch - split, self.at(n, y, x, ch));
                    }
                }
            }
        }
        (a, b)
    }
}

/// Arbitrary-rank parameter tensor (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Tensor { dims: dims.to_vec(), data: vec![0.0; len] }
    }

    pub fn from_data(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::shape_mismatch(format!(
                "tensor data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Tensor { dims: dims.to_vec(), data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}
