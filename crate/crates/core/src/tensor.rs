//! Dense NCHW feature maps and binary masks.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Extent of a 4-D feature map: batch, channels, height, width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn with_channels(self, c: usize) -> Self {
        Shape { c, ..self }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.n, self.c, self.h, self.w)
    }
}

/// Row-major `[batch, channels, height, width]` array of activations or
/// gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        FeatureMap {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(
                "FeatureMap::from_vec",
                format!("shape {shape} needs {} values, got {}", shape.len(), data.len()),
            ));
        }
        Ok(FeatureMap { shape, data })
    }

    /// Single-channel, single-item map from a row-major plane.
    pub fn from_plane(h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        Self::from_vec(Shape::new(1, 1, h, w), data)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        FeatureMap { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut T {
        let i = self.offset(n, c, y, x);
        &mut self.data[i]
    }

    /// The `h*w` slice holding channel `c` of batch item `n`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &mut self.data[start..start + p]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        FeatureMap {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_shape("FeatureMap::add_assign", other.shape)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.expect_shape("FeatureMap::dot", other.shape)?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn cast<U: Scalar>(&self) -> FeatureMap<U> {
        FeatureMap {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub(crate) fn expect_shape(&self, op: &'static str, want: Shape) -> Result<()> {
        if self.shape != want {
            return Err(Error::shape(op, format!("expected {want}, got {}", self.shape)));
        }
        Ok(())
    }

    /// Stacks maps with equal `n, h, w` along the channel axis.
    pub fn concat_channels(parts: &[&FeatureMap<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero maps".into()))?
            .shape;
        let mut c_total = 0;
        for p in parts {
            let s = p.shape;
            if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
                return Err(Error::shape(
                    "concat_channels",
                    format!("{s} incompatible with {first}"),
                ));
            }
            c_total += s.c;
        }
        let shape = first.with_channels(c_total);
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..first.n {
            for p in parts {
                let block = p.shape.c * p.shape.plane();
                data.extend_from_slice(&p.data[n * block..(n + 1) * block]);
            }
        }
        Ok(FeatureMap { shape, data })
    }

    /// Inverse of [`FeatureMap::concat_channels`] with one channel per part.
    pub fn split_channels(&self) -> Vec<FeatureMap<T>> {
        let s = self.shape;
        (0..s.c)
            .map(|c| {
                let mut data = Vec::with_capacity(s.n * s.plane());
                for n in 0..s.n {
                    data.extend_from_slice(self.plane(n, c));
                }
                FeatureMap {
                    shape: s.with_channels(1),
                    data,
                }
            })
            .collect()
    }

    /// Batch item `n` as its own map.
    pub fn item(&self, n: usize) -> FeatureMap<T> {
        let block = self.shape.c * self.shape.plane();
        FeatureMap {
            shape: Shape { n: 1, ..self.shape },
            data: self.data[n * block..(n + 1) * block].to_vec(),
        }
    }
}

/// Binary `h×w` mask stored as 0/1 bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x) as u8);
            }
        }
        Mask { height, width, data }
    }

    /// Accepts only 0/1 entries.
    pub fn from_bits(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(
                "Mask::from_bits",
                format!("{height}x{width} needs {} values, got {}", height * width, data.len()),
            ));
        }
        if data.iter().any(|&b| b > 1) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(Mask { height, width, data })
    }

    /// Thresholds a real plane: `v > threshold` is set.
    pub fn from_threshold<T: Scalar>(height: usize, width: usize, values: &[T], threshold: T) -> Self {
        debug_assert_eq!(values.len(), height * width);
        Mask {
            height,
            width,
            data: values.iter().map(|&v| (v > threshold) as u8).collect(),
        }
    }

    /// Interprets a real plane as a ground-truth mask, rejecting anything
    /// other than exact 0 or 1.
    pub fn from_binary_reals<T: Scalar>(height: usize, width: usize, values: &[T]) -> Result<Self> {
        let mut data = Vec::with_capacity(values.len());
        for &v in values {
            if v == T::zero() {
                data.push(0);
            } else if v == T::one() {
                data.push(1);
            } else {
                return Err(Error::InvalidArgument(format!("ground truth value {v} is not binary")));
            }
        }
        Self::from_bits(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    /// Out-of-range coordinates read as unset.
    #[inline]
    pub fn get_signed(&self, y: isize, x: isize) -> bool {
        y >= 0 && x >= 0 && (y as usize) < self.height && (x as usize) < self.width && self.get(y as usize, x as usize)
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&b| b as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&b| b == 0)
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(move |(i, _)| (i / w, i % w))
    }

    pub fn to_reals<T: Scalar>(&self) -> Vec<T> {
        self.data
            .iter()
            .map(|&b| if b != 0 { T::one() } else { T::zero() })
            .collect()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a & b)
    }

    pub fn or(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a | b)
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a & (1 - b))
    }

    fn zip(&self, other: &Mask, f: impl Fn(u8, u8) -> u8) -> Mask {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Number of set pixels among the 8 neighbours of `(y, x)`.
    pub fn neighbour_count(&self, y: usize, x: usize) -> usize {
        let mut k = 0;
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                if (dy, dx) != (0, 0) && self.get_signed(y as isize + dy, x as isize + dx) {
                    k += 1;
                }
            }
        }
        k
    }

    pub(crate) fn expect_dims(&self, op: &'static str, other: &Mask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(
                op,
                format!("{}x{} vs {}x{}", self.height, self.width, other.height, other.width),
            ));
        }
        Ok(())
    }
}
