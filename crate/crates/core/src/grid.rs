//! Pixel grids shared by every operator.
//!
//! An [`Image`] is an `n1 x n2` array of intensities stored row-major, with
//! `(i, j) = (row, column)` and 0-based indices. A [`Field`] carries `C`
//! scalars per pixel, stored pixel-interleaved; `Field<4>` holds four-direction
//! differences and their duals, `Field<2>` holds the classical gradient pair.

use std::fmt;

use crate::error::GridError;
use crate::linop::VectorSpace;

/// Smallest admissible side length of an image.
pub const MIN_SIDE: usize = 2;

#[derive(Clone, PartialEq)]
pub struct Image {
    n1: usize,
    n2: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Image({}x{})", self.n1, self.n2)
    }
}

fn check_dims(n1: usize, n2: usize) -> Result<(), GridError> {
    if n1 < MIN_SIDE || n2 < MIN_SIDE {
        return Err(GridError::TooSmall { n1, n2 });
    }
    Ok(())
}

impl Image {
    /// Builds an image from row-major data, rejecting non-finite values.
    pub fn new(n1: usize, n2: usize, data: Vec<f64>) -> Result<Self, GridError> {
        check_dims(n1, n2)?;
        if data.len() != n1 * n2 {
            return Err(GridError::LengthMismatch {
                expected: n1 * n2,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index: pos });
        }
        Ok(Self { n1, n2, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, GridError> {
        let n1 = rows.len();
        let n2 = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n2) {
            return Err(GridError::Ragged);
        }
        Self::new(n1, n2, rows.concat())
    }

    pub fn zeros(n1: usize, n2: usize) -> Result<Self, GridError> {
        Self::filled(n1, n2, 0.0)
    }

    pub fn filled(n1: usize, n2: usize, value: f64) -> Result<Self, GridError> {
        Self::new(n1, n2, vec![value; n1 * n2])
    }

    pub fn from_fn(
        n1: usize,
        n2: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, GridError> {
        let mut data = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                data.push(f(i, j));
            }
        }
        Self::new(n1, n2, data)
    }

    /// Zero image on the same grid. Infallible since `self` already satisfies
    /// the size invariant.
    pub fn zeros_like(&self) -> Self {
        Self {
            n1: self.n1,
            n2: self.n2,
            data: vec![0.0; self.data.len()],
        }
    }

    pub(crate) fn from_parts_unchecked(n1: usize, n2: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n1 * n2);
        Self { n1, n2, data }
    }

    #[inline]
    pub fn n1(&self) -> usize {
        self.n1
    }

    #[inline]
    pub fn n2(&self) -> usize {
        self.n2
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n2 + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n2 + j] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n1: self.n1,
            n2: self.n2,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_same_dims(&self, other: &Self) -> Result<(), GridError> {
        if self.dims() != other.dims() {
            return Err(GridError::DimMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }
}

/// `C` scalars per pixel.
#[derive(Clone, PartialEq)]
pub struct Field<const C: usize> {
    n1: usize,
    n2: usize,
    data: Vec<[f64; C]>,
}

pub type Field2 = Field<2>;
pub type Field4 = Field<4>;

impl<const C: usize> fmt::Debug for Field<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Field<{}>({}x{})", C, self.n1, self.n2)
    }
}

impl<const C: usize> Field<C> {
    pub fn zeros(n1: usize, n2: usize) -> Result<Self, GridError> {
        check_dims(n1, n2)?;
        Ok(Self {
            n1,
            n2,
            data: vec![[0.0; C]; n1 * n2],
        })
    }

    pub fn zeros_on(x: &Image) -> Self {
        Self {
            n1: x.n1,
            n2: x.n2,
            data: vec![[0.0; C]; x.len()],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            n1: self.n1,
            n2: self.n2,
            data: vec![[0.0; C]; self.data.len()],
        }
    }

    pub fn from_fn(
        n1: usize,
        n2: usize,
        mut f: impl FnMut(usize, usize) -> [f64; C],
    ) -> Result<Self, GridError> {
        check_dims(n1, n2)?;
        let mut data = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                let v = f(i, j);
                if v.iter().any(|c| !c.is_finite()) {
                    return Err(GridError::NonFinite { index: data.len() });
                }
                data.push(v);
            }
        }
        Ok(Self { n1, n2, data })
    }

    /// Builds a field from `C` row-major channel planes.
    pub fn from_channels(n1: usize, n2: usize, planes: [&[f64]; C]) -> Result<Self, GridError> {
        for p in &planes {
            if p.len() != n1 * n2 {
                return Err(GridError::LengthMismatch {
                    expected: n1 * n2,
                    found: p.len(),
                });
            }
        }
        Self::from_fn(n1, n2, |i, j| std::array::from_fn(|k| planes[k][i * n2 + j]))
    }

    #[inline]
    pub fn n1(&self) -> usize {
        self.n1
    }

    #[inline]
    pub fn n2(&self) -> usize {
        self.n2
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> [f64; C] {
        self.data[i * self.n2 + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut [f64; C] {
        &mut self.data[i * self.n2 + j]
    }

    #[inline]
    pub fn pixels(&self) -> &[[f64; C]] {
        &self.data
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [[f64; C]] {
        &mut self.data
    }

    /// Copy of channel `k` as an image-shaped row-major plane.
    pub fn channel(&self, k: usize) -> Vec<f64> {
        self.data.iter().map(|p| p[k]).collect()
    }

    /// Euclidean norm of the `C`-vector at every pixel.
    pub fn pixel_norms(&self) -> Vec<f64> {
        self.data.iter().map(pixel_norm).collect()
    }

    pub fn max_pixel_norm(&self) -> f64 {
        self.data.iter().map(pixel_norm).fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.data {
            for v in p.iter_mut() {
                *v *= c;
            }
        }
        out
    }

    pub fn ensure_same_dims(&self, other: &Self) -> Result<(), GridError> {
        if self.dims() != other.dims() {
            return Err(GridError::DimMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }

    pub fn ensure_dims_of(&self, x: &Image) -> Result<(), GridError> {
        if self.dims() != x.dims() {
            return Err(GridError::DimMismatch {
                left: self.dims(),
                right: x.dims(),
            });
        }
        Ok(())
    }
}

#[inline]
pub fn pixel_norm<const C: usize>(p: &[f64; C]) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Sum over pixels and channels of elementwise products.
pub fn inner_product<V: VectorSpace>(a: &V, b: &V) -> Result<f64, GridError> {
    if a.dims() != b.dims() {
        return Err(GridError::DimMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    Ok(a.dot(b))
}

/// Sum over pixels of the Euclidean norm of the per-pixel channel vector.
pub fn group_l21_norm<const C: usize>(v: &Field<C>) -> f64 {
    v.data.iter().map(pixel_norm).sum()
}

impl VectorSpace for Image {
    fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    fn zeros_like(&self) -> Self {
        Image::zeros_like(self)
    }

    fn slices(&self) -> Vec<&[f64]> {
        vec![&self.data]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.data]
    }
}

impl<const C: usize> VectorSpace for Field<C> {
    fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    fn zeros_like(&self) -> Self {
        Field::zeros_like(self)
    }

    fn slices(&self) -> Vec<&[f64]> {
        vec![self.data.as_flattened()]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.data.as_flattened_mut()]
    }
}
