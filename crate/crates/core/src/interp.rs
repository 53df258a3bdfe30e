//! Interpolation operators that relocate dual samples.
//!
//! Each channel of a difference field lives at a different point of the pixel
//! lattice: vertical differences on horizontal edge midpoints, horizontal
//! differences on vertical edge midpoints, diagonal differences on pixel
//! corners. An interpolation operator resamples all channels onto one common
//! location class:
//!
//! * [`Star::UpDown`]: midpoints between vertically adjacent pixels,
//! * [`Star::LeftRight`]: midpoints between horizontally adjacent pixels,
//! * [`Star::Center`]: pixel centres,
//! * [`Star::Plus`]: pixel corners.
//!
//! Every output channel is an average (one, two or four taps) of the same
//! input channel. Input samples outside the grid, or at positions where the
//! matching difference is structurally zero, read as zero. Adjoints are the
//! transpose of the tap tables below; nothing is transcribed by hand.
//!
//! The two-channel interpolated TV uses channels 0..2 of the `UpDown`,
//! `LeftRight` and `Center` tables, which coincide with its own operators.

use std::fmt;
use std::str::FromStr;

use crate::diff::{channel_valid, Difference};
use crate::error::GridError;
use crate::grid::{Field, Image};
use crate::linop::{LinearOperator, VectorSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Star {
    UpDown,
    LeftRight,
    Center,
    Plus,
}

impl Star {
    pub const ALL: [Star; 4] = [Star::UpDown, Star::LeftRight, Star::Center, Star::Plus];

    pub fn name(self) -> &'static str {
        match self {
            Star::UpDown => "updown",
            Star::LeftRight => "leftright",
            Star::Center => "center",
            Star::Plus => "plus",
        }
    }
}

impl fmt::Display for Star {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Star {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Star::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown location class `{s}`"))
    }
}

/// Tap tables for the two diagonal channels of the four-direction operators.
/// The first two channels are the same in every variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// The published tables, including `(L_plus u)_4(i, j) = u4(i, j + 1)`.
    #[default]
    AsPrinted,
    /// The published tables except `(L_plus u)_4(i, j) = u4(i, j)`.
    Unshifted,
    /// Tables rebuilt from sample positions: `u3(i, j)` sits at the corner
    /// `(i + 1/2, j + 1/2)` and `u4(i, j)` at `(i - 1/2, j + 1/2)`, and each
    /// output averages the samples nearest its target location.
    Geometric,
}

impl Stencil {
    pub const ALL: [Stencil; 3] = [Stencil::AsPrinted, Stencil::Unshifted, Stencil::Geometric];

    pub fn name(self) -> &'static str {
        match self {
            Stencil::AsPrinted => "printed",
            Stencil::Unshifted => "unshifted",
            Stencil::Geometric => "geometric",
        }
    }
}

impl fmt::Display for Stencil {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stencil {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stencil::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stencil `{s}` (expected printed, unshifted or geometric)"))
    }
}

/// One averaging tap: output `(i, j)` reads input `(i + di, j + dj)`.
#[derive(Debug, Clone, Copy)]
pub struct Tap {
    pub di: isize,
    pub dj: isize,
    pub weight: f64,
}

const fn t(di: isize, dj: isize, weight: f64) -> Tap {
    Tap { di, dj, weight }
}

const ID: &[Tap] = &[t(0, 0, 1.0)];

const UPDOWN: [&[Tap]; 4] = [
    ID,
    &[t(0, 0, 0.25), t(0, -1, 0.25), t(1, 0, 0.25), t(1, -1, 0.25)],
    &[t(0, 0, 0.5), t(-1, 0, 0.5)],
    &[t(0, 0, 0.5), t(0, 1, 0.5)],
];

const LEFTRIGHT: [&[Tap]; 4] = [
    &[t(0, 0, 0.25), t(-1, 0, 0.25), t(0, 1, 0.25), t(-1, 1, 0.25)],
    ID,
    &[t(0, 0, 0.5), t(0, -1, 0.5)],
    &[t(0, 1, 0.5), t(-1, 1, 0.5)],
];

const CENTER: [&[Tap]; 4] = [
    &[t(0, 0, 0.5), t(-1, 0, 0.5)],
    &[t(0, 0, 0.5), t(0, -1, 0.5)],
    &[t(0, 0, 0.25), t(0, -1, 0.25), t(-1, 0, 0.25), t(-1, -1, 0.25)],
    &[t(0, 0, 0.25), t(-1, 0, 0.25), t(0, 1, 0.25), t(-1, 1, 0.25)],
];

const PLUS: [&[Tap]; 4] = [
    &[t(0, 0, 0.5), t(0, 1, 0.5)],
    &[t(0, 0, 0.5), t(1, 0, 0.5)],
    ID,
    &[t(0, 1, 1.0)],
];

// diagonal channels rebuilt from sample positions
const GEO_UPDOWN: [&[Tap]; 2] = [&[t(0, 0, 0.5), t(0, -1, 0.5)], &[t(1, 0, 0.5), t(1, -1, 0.5)]];
const GEO_LEFTRIGHT: [&[Tap]; 2] = [&[t(0, 0, 0.5), t(-1, 0, 0.5)], &[t(0, 0, 0.5), t(1, 0, 0.5)]];
const GEO_CENTER_4: &[Tap] = &[t(0, 0, 0.25), t(1, 0, 0.25), t(0, -1, 0.25), t(1, -1, 0.25)];
const GEO_PLUS_4: &[Tap] = &[t(1, 0, 1.0)];

/// Taps producing output channel `channel` of the `star` operator.
pub fn taps(star: Star, channel: usize, stencil: Stencil) -> &'static [Tap] {
    match (star, channel, stencil) {
        (Star::Plus, 3, Stencil::Unshifted) => ID,
        (Star::UpDown, k @ 2..=3, Stencil::Geometric) => GEO_UPDOWN[k - 2],
        (Star::LeftRight, k @ 2..=3, Stencil::Geometric) => GEO_LEFTRIGHT[k - 2],
        (Star::Center, 3, Stencil::Geometric) => GEO_CENTER_4,
        (Star::Plus, 3, Stencil::Geometric) => GEO_PLUS_4,
        (Star::UpDown, k, _) => UPDOWN[k],
        (Star::LeftRight, k, _) => LEFTRIGHT[k],
        (Star::Center, k, _) => CENTER[k],
        (Star::Plus, k, _) => PLUS[k],
    }
}

#[inline]
fn source(
    tap: &Tap,
    k: usize,
    i: usize,
    j: usize,
    n1: usize,
    n2: usize,
) -> Option<(usize, usize)> {
    let a = i as isize + tap.di;
    let b = j as isize + tap.dj;
    if a < 0 || b < 0 || a >= n1 as isize || b >= n2 as isize {
        return None;
    }
    let (a, b) = (a as usize, b as usize);
    channel_valid(k, a, b, n1, n2).then_some((a, b))
}

/// A single interpolation operator acting on `C`-channel fields.
#[derive(Debug, Clone, Copy)]
pub struct Interp<const C: usize> {
    pub star: Star,
    pub stencil: Stencil,
}

impl<const C: usize> Interp<C> {
    pub fn new(star: Star) -> Self {
        Self {
            star,
            stencil: Stencil::default(),
        }
    }

    pub fn with_stencil(star: Star, stencil: Stencil) -> Self {
        Self { star, stencil }
    }

    /// Accumulates `scale * L u` into `out`.
    pub fn apply_into(&self, u: &Field<C>, scale: f64, out: &mut Field<C>) {
        let (n1, n2) = u.dims();
        for i in 0..n1 {
            for j in 0..n2 {
                let mut acc = [0.0; C];
                for (k, a) in acc.iter_mut().enumerate() {
                    for tap in taps(self.star, k, self.stencil) {
                        if let Some((p, q)) = source(tap, k, i, j, n1, n2) {
                            *a += tap.weight * u.get(p, q)[k];
                        }
                    }
                }
                let cell = out.at_mut(i, j);
                for k in 0..C {
                    cell[k] += scale * acc[k];
                }
            }
        }
    }

    /// Accumulates `scale * L* w` into `out`.
    pub fn adjoint_into(&self, w: &Field<C>, scale: f64, out: &mut Field<C>) {
        let (n1, n2) = w.dims();
        for i in 0..n1 {
            for j in 0..n2 {
                let cell = w.get(i, j);
                for (k, &wk) in cell.iter().enumerate() {
                    if wk == 0.0 {
                        continue;
                    }
                    for tap in taps(self.star, k, self.stencil) {
                        if let Some((p, q)) = source(tap, k, i, j, n1, n2) {
                            out.at_mut(p, q)[k] += scale * tap.weight * wk;
                        }
                    }
                }
            }
        }
    }
}

impl<const C: usize> LinearOperator for Interp<C> {
    type Domain = Field<C>;
    type Range = Field<C>;

    fn apply(&self, u: &Field<C>) -> Field<C> {
        let mut out = u.zeros_like();
        self.apply_into(u, 1.0, &mut out);
        out
    }

    fn adjoint(&self, w: &Field<C>) -> Field<C> {
        let mut out = w.zeros_like();
        self.adjoint_into(w, 1.0, &mut out);
        out
    }
}

/// Four-channel interpolation `L_star u`.
pub fn apply_l(star: Star, u: &Field<4>) -> Field<4> {
    Interp::<4>::new(star).apply(u)
}

pub fn apply_l_adjoint(star: Star, w: &Field<4>) -> Field<4> {
    Interp::<4>::new(star).adjoint(w)
}

/// Two-channel interpolation of the three-operator family. `Plus` is not part
/// of that family and is rejected.
pub fn apply_l_condat(star: Star, u: &Field<2>) -> Option<Field<2>> {
    (star != Star::Plus).then(|| Interp::<2>::new(star).apply(u))
}

pub fn apply_l_condat_adjoint(star: Star, w: &Field<2>) -> Option<Field<2>> {
    (star != Star::Plus).then(|| Interp::<2>::new(star).adjoint(w))
}

/// The set of location classes a constrained dual TV is built from.
#[derive(Debug, Clone)]
pub struct InterpSystem<const C: usize> {
    pub stars: Vec<Star>,
    pub stencil: Stencil,
}

impl InterpSystem<2> {
    /// Edge-midpoint and centre constraints on the two-channel gradient dual.
    pub fn condat() -> Self {
        Self {
            stars: vec![Star::UpDown, Star::LeftRight, Star::Center],
            stencil: Stencil::default(),
        }
    }
}

impl InterpSystem<4> {
    /// All four location classes on the four-direction dual.
    pub fn four_direction() -> Self {
        Self {
            stars: Star::ALL.to_vec(),
            stencil: Stencil::default(),
        }
    }

    pub fn four_direction_with(stencil: Stencil) -> Self {
        Self {
            stars: Star::ALL.to_vec(),
            stencil,
        }
    }
}

impl<const C: usize> InterpSystem<C> {
    pub fn operators(&self) -> impl Iterator<Item = Interp<C>> + '_ {
        self.stars
            .iter()
            .map(move |&s| Interp::with_stencil(s, self.stencil))
    }

    /// Largest per-pixel norm of `L_star u` over all stars and pixels.
    pub fn max_constraint(&self, u: &Field<C>) -> f64 {
        self.operators()
            .map(|op| op.apply(u).max_pixel_norm())
            .fold(0.0, f64::max)
    }

    pub fn stack(&self) -> StackedInterp<C> {
        StackedInterp {
            system: self.clone(),
        }
    }

    pub fn big(&self) -> BigL<C> {
        BigL {
            system: self.clone(),
        }
    }
}

/// Dual field of the split problem with its companion image: `(u, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lifted<const C: usize> {
    pub u: Field<C>,
    pub s: Image,
}

impl<const C: usize> Lifted<C> {
    pub fn zeros_on(x: &Image) -> Self {
        Self {
            u: Field::zeros_on(x),
            s: x.zeros_like(),
        }
    }
}

impl<const C: usize> VectorSpace for Lifted<C> {
    fn dims(&self) -> (usize, usize) {
        self.s.dims()
    }
    fn zeros_like(&self) -> Self {
        Self {
            u: self.u.zeros_like(),
            s: self.s.zeros_like(),
        }
    }
    fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.u.slices();
        v.extend(self.s.slices());
        v
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.u.slices_mut();
        v.extend(self.s.slices_mut());
        v
    }
}

/// One field per star plus the scalar block `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stacked<const C: usize> {
    pub v: Vec<Field<C>>,
    pub alpha: Image,
}

impl<const C: usize> Stacked<C> {
    pub fn zeros_on(x: &Image, stars: usize) -> Self {
        Self {
            v: (0..stars).map(|_| Field::zeros_on(x)).collect(),
            alpha: x.zeros_like(),
        }
    }
}

impl<const C: usize> VectorSpace for Stacked<C> {
    fn dims(&self) -> (usize, usize) {
        self.alpha.dims()
    }
    fn zeros_like(&self) -> Self {
        Self {
            v: self.v.iter().map(|f| f.zeros_like()).collect(),
            alpha: self.alpha.zeros_like(),
        }
    }
    fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.v.iter().flat_map(|f| f.slices()).collect();
        out.extend(self.alpha.slices());
        out
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.v.iter_mut().flat_map(|f| f.slices_mut()).collect();
        out.extend(self.alpha.slices_mut());
        out
    }
}

/// `u -> (L_star u)_star`, the constraint map of the dual TV evaluation.
#[derive(Debug, Clone)]
pub struct StackedInterp<const C: usize> {
    system: InterpSystem<C>,
}

/// Several fields of the same shape, one per star.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStack<const C: usize>(pub Vec<Field<C>>);

impl<const C: usize> VectorSpace for FieldStack<C> {
    fn dims(&self) -> (usize, usize) {
        self.0[0].dims()
    }
    fn zeros_like(&self) -> Self {
        Self(self.0.iter().map(|f| f.zeros_like()).collect())
    }
    fn slices(&self) -> Vec<&[f64]> {
        self.0.iter().flat_map(|f| f.slices()).collect()
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.0.iter_mut().flat_map(|f| f.slices_mut()).collect()
    }
}

impl<const C: usize> LinearOperator for StackedInterp<C> {
    type Domain = Field<C>;
    type Range = FieldStack<C>;

    fn apply(&self, u: &Field<C>) -> FieldStack<C> {
        FieldStack(self.system.operators().map(|op| op.apply(u)).collect())
    }

    fn adjoint(&self, w: &FieldStack<C>) -> Field<C> {
        let mut out = w.0[0].zeros_like();
        for (op, wk) in self.system.operators().zip(&w.0) {
            op.adjoint_into(wk, 1.0, &mut out);
        }
        out
    }
}

/// `(u, s) -> (L_star u ..., D*u - s)`.
#[derive(Debug, Clone)]
pub struct BigL<const C: usize> {
    system: InterpSystem<C>,
}

impl<const C: usize> BigL<C> {
    pub fn system(&self) -> &InterpSystem<C> {
        &self.system
    }
}

impl<const C: usize> LinearOperator for BigL<C> {
    type Domain = Lifted<C>;
    type Range = Stacked<C>;

    fn apply(&self, x: &Lifted<C>) -> Stacked<C> {
        let v = self.system.operators().map(|op| op.apply(&x.u)).collect();
        let mut alpha = Difference::<C>::transpose(&x.u);
        alpha.axpy(-1.0, &x.s);
        Stacked { v, alpha }
    }

    fn adjoint(&self, y: &Stacked<C>) -> Lifted<C> {
        let mut u = Difference::<C>::forward(&y.alpha);
        for (op, vk) in self.system.operators().zip(&y.v) {
            op.adjoint_into(vk, 1.0, &mut u);
        }
        let mut s = y.alpha.clone();
        s.scale(-1.0);
        Lifted { u, s }
    }
}

/// `(L_up u, L_lr u, L_c u, L_plus u, D*u - s)` for the four-direction family.
pub fn assemble_big_l(u: &Field<4>, s: &Image) -> Result<Stacked<4>, GridError> {
    u.ensure_dims_of(s)?;
    Ok(InterpSystem::four_direction().big().apply(&Lifted {
        u: u.clone(),
        s: s.clone(),
    }))
}

pub fn big_l_adjoint(v: &Stacked<4>) -> Result<Lifted<4>, GridError> {
    if v.v.len() != 4 {
        return Err(GridError::LengthMismatch {
            expected: 4,
            found: v.v.len(),
        });
    }
    for f in &v.v {
        f.ensure_dims_of(&v.alpha)?;
    }
    Ok(InterpSystem::four_direction().big().adjoint(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{apply_d4, FourDirection};
    use crate::linop::random_adjoint_residual;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_field<const C: usize>(n1: usize, n2: usize, seed: u64) -> Field<C> {
        let mut f = Field::<C>::zeros(n1, n2).unwrap();
        f.randomize(&mut ChaCha8Rng::seed_from_u64(seed));
        f
    }

    // Lattice position of sample (0, 0) of each difference channel, in pixel
    // units, and the location class each operator targets.
    const SAMPLE_AT: [(f64, f64); 4] = [(0.5, 0.0), (0.0, 0.5), (0.5, 0.5), (-0.5, 0.5)];

    fn target(star: Star) -> (f64, f64) {
        match star {
            Star::UpDown => (0.5, 0.0),
            Star::LeftRight => (0.0, 0.5),
            Star::Center => (0.0, 0.0),
            Star::Plus => (0.5, 0.5),
        }
    }

    fn misplaced(stencil: Stencil) -> Vec<(Star, usize)> {
        let mut out = Vec::new();
        for star in Star::ALL {
            for (k, at) in SAMPLE_AT.iter().enumerate() {
                let tt = taps(star, k, stencil);
                let w: f64 = tt.iter().map(|t| t.weight).sum();
                let ci = tt.iter().map(|t| t.weight * (t.di as f64 + at.0)).sum::<f64>() / w;
                let cj = tt.iter().map(|t| t.weight * (t.dj as f64 + at.1)).sum::<f64>() / w;
                if (ci, cj) != target(star) {
                    out.push((star, k));
                }
            }
        }
        out
    }

    #[test]
    fn stencils_average_onto_their_target_location() {
        use Star::*;
        assert!(misplaced(Stencil::Geometric).is_empty());
        assert_eq!(
            misplaced(Stencil::AsPrinted),
            vec![(UpDown, 2), (UpDown, 3), (LeftRight, 2), (LeftRight, 3), (Center, 3), (Plus, 3)]
        );
        assert_eq!(misplaced(Stencil::Unshifted), misplaced(Stencil::AsPrinted));
    }

    #[test]
    fn stencil_names_roundtrip() {
        for s in Stencil::ALL {
            assert_eq!(s.name().parse::<Stencil>().unwrap(), s);
        }
        assert!("shifted".parse::<Stencil>().is_err());
    }

    #[test]
    fn zero_maps_to_zero() {
        let z = Field::<4>::zeros(5, 5).unwrap();
        for s in Star::ALL {
            assert_eq!(apply_l(s, &z), z);
            assert_eq!(apply_l_adjoint(s, &z), z);
        }
        let z2 = Field::<2>::zeros(5, 5).unwrap();
        for s in [Star::UpDown, Star::LeftRight, Star::Center] {
            assert_eq!(apply_l_condat(s, &z2).unwrap(), z2);
        }
        assert!(apply_l_condat(Star::Plus, &z2).is_none());
    }

    #[test]
    fn impulse_spreads_over_four_pixels() {
        let mut u = Field::<4>::zeros(6, 6).unwrap();
        u.at_mut(3, 2)[1] = 1.0;
        let out = apply_l(Star::UpDown, &u);
        let expect = [(3, 2), (3, 3), (2, 2), (2, 3)];
        for i in 0..6 {
            for j in 0..6 {
                let want = if expect.contains(&(i, j)) { 0.25 } else { 0.0 };
                assert_eq!(out.get(i, j)[1], want, "({i},{j})");
                assert_eq!(out.get(i, j)[0], 0.0);
            }
        }
    }

    #[test]
    fn constant_field_reproduced_in_interior() {
        let c = [0.3, -0.2, 0.5, 0.1];
        let mut u = Field::<4>::from_fn(8, 8, |_, _| c).unwrap();
        FourDirection::mask(&mut u);
        for s in Star::ALL {
            let out = apply_l(s, &u);
            for i in 2..6 {
                for j in 2..6 {
                    for (got, want) in out.get(i, j).iter().zip(c) {
                        assert!((got - want).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn updown_adjoint_keeps_channel_one_impulse() {
        let mut w = Field::<4>::zeros(6, 6).unwrap();
        w.at_mut(2, 3)[0] = 1.0;
        assert_eq!(apply_l_adjoint(Star::UpDown, &w), w);
    }

    #[test]
    fn condat_center_is_two_point_average() {
        let u = random_field::<2>(6, 6, 3);
        let out = apply_l_condat(Star::Center, &u).unwrap();
        for i in 1..5 {
            for j in 1..5 {
                let want = 0.5 * (u.get(i, j)[0] + u.get(i - 1, j)[0]);
                assert!((out.get(i, j)[0] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adjoint_identities() {
        for (n1, n2) in [(2, 2), (3, 7), (8, 8), (31, 17), (64, 64)] {
            let f4 = Field::<4>::zeros(n1, n2).unwrap();
            let f2 = Field::<2>::zeros(n1, n2).unwrap();
            for s in Star::ALL {
                for stencil in Stencil::ALL {
                    let op = Interp::<4>::with_stencil(s, stencil);
                    assert!(random_adjoint_residual(&op, &f4, &f4, 3, 5) <= 1e-12);
                }
            }
            for s in [Star::UpDown, Star::LeftRight, Star::Center] {
                let op = Interp::<2>::new(s);
                assert!(random_adjoint_residual(&op, &f2, &f2, 3, 6) <= 1e-12);
            }
            let x = Image::zeros(n1, n2).unwrap();
            let big4 = InterpSystem::four_direction().big();
            let d4 = Lifted::<4>::zeros_on(&x);
            let r4 = Stacked::<4>::zeros_on(&x, 4);
            assert!(random_adjoint_residual(&big4, &d4, &r4, 3, 7) <= 1e-12);
            let big2 = InterpSystem::condat().big();
            let d2 = Lifted::<2>::zeros_on(&x);
            let r2 = Stacked::<2>::zeros_on(&x, 3);
            assert!(random_adjoint_residual(&big2, &d2, &r2, 3, 8) <= 1e-12);
        }
    }

    #[test]
    fn big_l_examples() {
        let x = Image::from_fn(5, 4, |i, j| (i as f64 - j as f64) * 0.1).unwrap();
        let u = Field::<4>::zeros_on(&x);
        let out = assemble_big_l(&u, &x.zeros_like()).unwrap();
        assert!(out.v.iter().all(|f| f.max_pixel_norm() == 0.0));
        assert_eq!(out.alpha.norm(), 0.0);

        let out = assemble_big_l(&u, &x).unwrap();
        assert_eq!(out.alpha, x.map(|v| -v));

        // only alpha nonzero: field part is D alpha, image part -alpha
        let mut v = Stacked::<4>::zeros_on(&x, 4);
        v.alpha = x.clone();
        let back = big_l_adjoint(&v).unwrap();
        assert_eq!(back.u, apply_d4(&x));
        assert_eq!(back.s, x.map(|v| -v));

        let bad = Image::zeros(3, 3).unwrap();
        assert!(assemble_big_l(&u, &bad).is_err());
    }

    #[test]
    fn composition_adjoint() {
        // (L_c L_up)* = L_up* L_c*
        let u = random_field::<4>(9, 7, 21);
        let w = random_field::<4>(9, 7, 22);
        let (a, b) = (Interp::<4>::new(Star::Center), Interp::<4>::new(Star::UpDown));
        let lhs = a.apply(&b.apply(&u)).dot(&w);
        let rhs = u.dot(&b.adjoint(&a.adjoint(&w)));
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn unit_ball_is_not_preserved_by_mixed_channel_averages() {
        // u1 = 1 at one pixel and u2 = 1 on three of the four up-down taps:
        // every input vector has norm 1 but the output vector does not.
        let mut u = Field::<4>::zeros(6, 6).unwrap();
        *u.at_mut(2, 2) = [1.0, 0.0, 0.0, 0.0];
        for (i, j) in [(2, 1), (3, 2), (3, 1)] {
            *u.at_mut(i, j) = [0.0, 1.0, 0.0, 0.0];
        }
        assert!(u.max_pixel_norm() <= 1.0);
        let out = apply_l(Star::UpDown, &u);
        assert!((out.get(2, 2)[0] - 1.0).abs() < 1e-15);
        assert!((out.get(2, 2)[1] - 0.75).abs() < 1e-15);
        assert!(out.max_pixel_norm() > 1.0);
    }

    proptest! {
        #[test]
        fn channelwise_bounds(seed in 0u64..500, n1 in 2usize..10, n2 in 2usize..10) {
            // each output channel averages same-channel inputs with weights
            // summing to at most 1
            let u = random_field::<4>(n1, n2, seed);
            let bound: [f64; 4] = std::array::from_fn(|k| {
                u.pixels().iter().map(|p| p[k].abs()).fold(0.0, f64::max)
            });
            for s in Star::ALL {
                let out = apply_l(s, &u);
                for p in out.pixels() {
                    for k in 0..4 {
                        prop_assert!(p[k].abs() <= bound[k] + 1e-15);
                    }
                }
            }
        }

        #[test]
        fn interp_is_linear(seed in 0u64..500, a in -2.0f64..2.0) {
            let u = random_field::<4>(5, 6, seed);
            let w = random_field::<4>(5, 6, seed + 1000);
            for s in Star::ALL {
                let mut combo = u.scaled(a);
                combo.axpy(1.0, &w);
                let lhs = apply_l(s, &combo);
                let mut rhs = apply_l(s, &u).scaled(a);
                rhs.axpy(1.0, &apply_l(s, &w));
                let mut diff = lhs.clone();
                diff.axpy(-1.0, &rhs);
                prop_assert!(diff.norm() < 1e-12);
            }
        }
    }
}
