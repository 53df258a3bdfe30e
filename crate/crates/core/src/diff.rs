//! Forward differences on the pixel grid.
//!
//! Channel `k` of the four-direction difference at `(i, j)` is
//! `x(i + di, j + dj) - x(i, j)` with offsets
//!
//! | k | (di, dj) | direction        |
//! |---|----------|------------------|
//! | 0 | (+1, 0)  | vertical         |
//! | 1 | (0, +1)  | horizontal       |
//! | 2 | (+1, +1) | main diagonal    |
//! | 3 | (-1, +1) | anti-diagonal    |
//!
//! A difference whose neighbour falls outside the grid is exactly zero
//! (Neumann boundary). The two-channel gradient is channels 0..2 of the same
//! table. Diagonal differences carry unit weight.
//!
//! Adjoints are the mechanical transpose of the zero-padded stencil: every
//! valid difference scatters `+u` onto the neighbour and `-u` onto the
//! centre, and dual values sitting where the difference is structurally zero
//! are ignored.

use crate::grid::{Field, Field2, Field4, Image};
use crate::linop::LinearOperator;

pub(crate) const OFFSETS: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];

/// Flat index of the forward neighbour used by channel `k` at `(i, j)`, or
/// `None` when the difference is structurally zero.
#[inline]
pub fn neighbor(k: usize, i: usize, j: usize, n1: usize, n2: usize) -> Option<usize> {
    let (di, dj) = OFFSETS[k];
    let a = i as isize + di;
    let b = j as isize + dj;
    if a < 0 || b < 0 || a >= n1 as isize || b >= n2 as isize {
        None
    } else {
        Some(a as usize * n2 + b as usize)
    }
}

/// Whether channel `k` can be nonzero at `(i, j)`.
#[inline]
pub fn channel_valid(k: usize, i: usize, j: usize, n1: usize, n2: usize) -> bool {
    neighbor(k, i, j, n1, n2).is_some()
}

/// The first `C` directions of the difference table (`C` = 2 or 4).
#[derive(Debug, Clone, Copy, Default)]
pub struct Difference<const C: usize>;

/// Classical forward-difference gradient.
pub type Gradient = Difference<2>;
/// Vertical, horizontal and both diagonal differences.
pub type FourDirection = Difference<4>;

impl<const C: usize> Difference<C> {
    const CHANNELS_OK: () = assert!(C >= 1 && C <= 4);

    pub fn forward(x: &Image) -> Field<C> {
        let () = Self::CHANNELS_OK;
        let (n1, n2) = x.dims();
        let xs = x.as_slice();
        let mut out = Field::<C>::zeros_on(x);
        for i in 0..n1 {
            for j in 0..n2 {
                let p = i * n2 + j;
                let cell = out.at_mut(i, j);
                for (k, c) in cell.iter_mut().enumerate() {
                    if let Some(q) = neighbor(k, i, j, n1, n2) {
                        *c = xs[q] - xs[p];
                    }
                }
            }
        }
        out
    }

    pub fn transpose(u: &Field<C>) -> Image {
        let () = Self::CHANNELS_OK;
        let (n1, n2) = u.dims();
        let mut out = vec![0.0; n1 * n2];
        for i in 0..n1 {
            for j in 0..n2 {
                let p = i * n2 + j;
                let cell = u.get(i, j);
                for (k, &c) in cell.iter().enumerate() {
                    if let Some(q) = neighbor(k, i, j, n1, n2) {
                        out[q] += c;
                        out[p] -= c;
                    }
                }
            }
        }
        Image::from_parts_unchecked(n1, n2, out)
    }

    /// Zeroes the entries of `u` where the corresponding difference is
    /// structurally zero.
    pub fn mask(u: &mut Field<C>) {
        let (n1, n2) = u.dims();
        for i in 0..n1 {
            for j in 0..n2 {
                let cell = u.at_mut(i, j);
                for (k, c) in cell.iter_mut().enumerate() {
                    if !channel_valid(k, i, j, n1, n2) {
                        *c = 0.0;
                    }
                }
            }
        }
    }
}

impl<const C: usize> LinearOperator for Difference<C> {
    type Domain = Image;
    type Range = Field<C>;

    fn apply(&self, x: &Image) -> Field<C> {
        Self::forward(x)
    }

    fn adjoint(&self, u: &Field<C>) -> Image {
        Self::transpose(u)
    }
}

pub fn apply_d2(x: &Image) -> Field2 {
    Gradient::forward(x)
}

pub fn apply_d2_adjoint(u: &Field2) -> Image {
    Gradient::transpose(u)
}

pub fn apply_d4(x: &Image) -> Field4 {
    FourDirection::forward(x)
}

pub fn apply_d4_adjoint(u: &Field4) -> Image {
    FourDirection::transpose(u)
}

/// Signed one-sided differences `x(i,j) - x(neighbour)` towards the
/// neighbours below, above, right and left, zero where the neighbour is
/// missing. Clamping at zero turns these into the upwind differences.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpwindDifference;

const UPWIND_OFFSETS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

#[inline]
fn upwind_neighbor(k: usize, i: usize, j: usize, n1: usize, n2: usize) -> Option<usize> {
    let (di, dj) = UPWIND_OFFSETS[k];
    let a = i as isize + di;
    let b = j as isize + dj;
    if a < 0 || b < 0 || a >= n1 as isize || b >= n2 as isize {
        None
    } else {
        Some(a as usize * n2 + b as usize)
    }
}

impl LinearOperator for UpwindDifference {
    type Domain = Image;
    type Range = Field4;

    fn apply(&self, x: &Image) -> Field4 {
        let (n1, n2) = x.dims();
        let xs = x.as_slice();
        let mut out = Field4::zeros_on(x);
        for i in 0..n1 {
            for j in 0..n2 {
                let p = i * n2 + j;
                let cell = out.at_mut(i, j);
                for (k, c) in cell.iter_mut().enumerate() {
                    if let Some(q) = upwind_neighbor(k, i, j, n1, n2) {
                        *c = xs[p] - xs[q];
                    }
                }
            }
        }
        out
    }

    fn adjoint(&self, u: &Field4) -> Image {
        let (n1, n2) = u.dims();
        let mut out = vec![0.0; n1 * n2];
        for i in 0..n1 {
            for j in 0..n2 {
                let p = i * n2 + j;
                for (k, &c) in u.get(i, j).iter().enumerate() {
                    if let Some(q) = upwind_neighbor(k, i, j, n1, n2) {
                        out[p] += c;
                        out[q] -= c;
                    }
                }
            }
        }
        Image::from_parts_unchecked(n1, n2, out)
    }
}

/// Clamped upwind differences `(x(i,j) - x(neighbour))+`, ordered
/// below, above, right, left.
pub fn apply_upwind(x: &Image) -> Field4 {
    let mut d = UpwindDifference.apply(x);
    for p in d.pixels_mut() {
        for v in p.iter_mut() {
            *v = v.max(0.0);
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::inner_product;
    use crate::linop::random_adjoint_residual;
    use proptest::prelude::*;

    fn fixture() -> Image {
        Image::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap()
    }

    #[test]
    fn constant_image_has_zero_differences() {
        let x = Image::filled(5, 4, 0.3).unwrap();
        assert!(apply_d4(&x).pixels().iter().all(|p| *p == [0.0; 4]));
        assert!(apply_upwind(&x).pixels().iter().all(|p| *p == [0.0; 4]));
    }

    #[test]
    fn d2_on_fixture() {
        let d = apply_d2(&fixture());
        assert_eq!(d.channel(0), vec![2.0, 2.0, 0.0, 0.0]);
        assert_eq!(d.channel(1), vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn d4_on_fixture_and_checkerboard() {
        let d = apply_d4(&fixture());
        assert_eq!(d.channel(2), vec![3.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.channel(3), vec![0.0, 0.0, -1.0, 0.0]);

        let chk = Image::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let d = apply_d4(&chk);
        assert_eq!(d.channel(0), vec![1.0, -1.0, 0.0, 0.0]);
        assert_eq!(d.channel(1), vec![1.0, 0.0, -1.0, 0.0]);
        assert_eq!(d.channel(2), vec![0.0, 0.0, 0.0, 0.0]);
        // x(0,1) - x(1,0) = 1 - 1
        assert_eq!(d.channel(3), vec![0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn d2_is_leading_channels_of_d4() {
        let x = Image::from_fn(6, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 / 4.0).unwrap();
        let d2 = apply_d2(&x);
        let d4 = apply_d4(&x);
        for (a, b) in d2.pixels().iter().zip(d4.pixels()) {
            assert_eq!(a[..], b[..2]);
        }
    }

    #[test]
    fn adjoint_of_single_entry() {
        let mut u = Field4::zeros(2, 2).unwrap();
        u.at_mut(0, 0)[0] = 1.0;
        assert_eq!(apply_d4_adjoint(&u).as_slice(), &[-1.0, 0.0, 1.0, 0.0]);
        assert_eq!(
            apply_d4_adjoint(&Field4::zeros(3, 3).unwrap()).as_slice(),
            &[0.0; 9]
        );
    }

    #[test]
    fn adjoint_identities_on_many_sizes() {
        for (n1, n2) in [(2, 2), (2, 7), (8, 8), (13, 5), (64, 64)] {
            let x = Image::zeros(n1, n2).unwrap();
            let f4 = Field4::zeros_on(&x);
            let f2 = Field2::zeros_on(&x);
            assert!(random_adjoint_residual(&FourDirection::default(), &x, &f4, 5, 11) <= 1e-12);
            assert!(random_adjoint_residual(&Gradient::default(), &x, &f2, 5, 12) <= 1e-12);
            assert!(random_adjoint_residual(&UpwindDifference, &x, &f4, 5, 13) <= 1e-12);
        }
    }

    #[test]
    fn upwind_on_fixture() {
        let u = apply_upwind(&fixture());
        // bottom-right pixel: above (4-2)=2, left (4-3)=1
        assert_eq!(u.get(1, 1), [0.0, 2.0, 0.0, 1.0]);
        assert_eq!(u.get(0, 0), [0.0; 4]);
    }

    #[test]
    fn upwind_keeps_only_positive_drops() {
        let row = Image::from_rows(&[&[4.0, 3.0, 1.0, 0.0], &[4.0, 3.0, 1.0, 0.0]]).unwrap();
        let u = apply_upwind(&row);
        // each pixel exceeds its right neighbour, never its left one
        for i in 0..2 {
            for j in 0..4 {
                let c = u.get(i, j);
                assert_eq!(c[3], 0.0);
                if j < 3 {
                    assert!(c[2] > 0.0);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn difference_is_linear(
            a in prop::collection::vec(-1.0f64..1.0, 20),
            b in prop::collection::vec(-1.0f64..1.0, 20),
            s in -2.0f64..2.0,
            t in -2.0f64..2.0,
        ) {
            let x = Image::new(4, 5, a.clone()).unwrap();
            let y = Image::new(4, 5, b.clone()).unwrap();
            let combo = Image::new(4, 5, a.iter().zip(&b).map(|(p, q)| s * p + t * q).collect()).unwrap();
            let lhs = apply_d4(&combo);
            let (dx, dy) = (apply_d4(&x), apply_d4(&y));
            for ((l, p), q) in lhs.pixels().iter().zip(dx.pixels()).zip(dy.pixels()) {
                for k in 0..4 {
                    prop_assert!((l[k] - (s * p[k] + t * q[k])).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn adjoint_identity_random_grids(n1 in 2usize..20, n2 in 2usize..20, seed in 0u64..1000) {
            let x = Image::zeros(n1, n2).unwrap();
            let u = Field4::zeros_on(&x);
            let r = random_adjoint_residual(&FourDirection::default(), &x, &u, 1, seed);
            prop_assert!(r <= 1e-10);
        }

        #[test]
        fn range_orthogonal_to_constants(vals in prop::collection::vec(-1.0f64..1.0, 36)) {
            let u = Field4::from_fn(3, 3, |i, j| {
                let b = 4 * (i * 3 + j);
                [vals[b], vals[b + 1], vals[b + 2], vals[b + 3]]
            }).unwrap();
            let ones = Image::filled(3, 3, 1.0).unwrap();
            // <D*u, 1> = <u, D1> = 0
            let s = inner_product(&apply_d4_adjoint(&u), &ones).unwrap();
            prop_assert!(s.abs() < 1e-12);
        }
    }
}
