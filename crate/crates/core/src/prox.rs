//! Proximal maps and projections used by the solvers, plus the block-average
//! downscale operator of the resolution-enhancement problem.

use crate::error::{GridError, ProxError};
use crate::grid::{pixel_norm, Field, Image};
use crate::linop::LinearOperator;

/// `argmin_z |z - x|^2 / (2 tau) + |z - y|^2 / 2`, i.e. `(x + tau y) / (1 + tau)`.
pub fn prox_quadratic(y: &Image, x: &Image, tau: f64) -> Result<Image, ProxError> {
    if !(tau > 0.0) {
        return Err(ProxError::NonPositiveStep(tau));
    }
    y.ensure_same_dims(x)?;
    let data = x
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(xv, yv)| (xv + tau * yv) / (1.0 + tau))
        .collect();
    Ok(Image::from_parts_unchecked(x.n1(), x.n2(), data))
}

pub(crate) fn prox_quadratic_in_place(y: &Image, x: &mut Image, tau: f64) {
    let inv = 1.0 / (1.0 + tau);
    for (xv, yv) in x.as_mut_slice().iter_mut().zip(y.as_slice()) {
        *xv = (*xv + tau * yv) * inv;
    }
}

/// Prox of `gamma * sum_p |v(p)|`: radial shrinkage of every pixel vector.
pub fn group_soft_threshold<const C: usize>(
    v: &Field<C>,
    gamma: f64,
) -> Result<Field<C>, ProxError> {
    if !(gamma >= 0.0) {
        return Err(ProxError::NegativeThreshold(gamma));
    }
    let mut out = v.clone();
    shrink_in_place(&mut out, gamma);
    Ok(out)
}

pub(crate) fn shrink_in_place<const C: usize>(v: &mut Field<C>, gamma: f64) {
    for p in v.pixels_mut() {
        let n = pixel_norm(p);
        let f = if n <= gamma { 0.0 } else { 1.0 - gamma / n };
        for c in p.iter_mut() {
            *c *= f;
        }
    }
}

/// Per-pixel radial projection onto the unit ball.
pub fn project_unit_ball<const C: usize>(v: &Field<C>) -> Field<C> {
    let mut out = v.clone();
    project_ball_in_place(&mut out, 1.0);
    out
}

/// Per-pixel projection onto the ball of radius `r`. Vectors within a few
/// ulps of the sphere are left alone so that projecting twice is exact.
pub(crate) fn project_ball_in_place<const C: usize>(v: &mut Field<C>, r: f64) {
    let limit = r * (1.0 + 4.0 * f64::EPSILON);
    for p in v.pixels_mut() {
        let n = pixel_norm(p);
        if n > limit {
            let f = r / n;
            for c in p.iter_mut() {
                *c *= f;
            }
        }
    }
}

/// Per-coordinate clamp to `[-r, r]`.
pub(crate) fn project_box_in_place<const C: usize>(v: &mut Field<C>, r: f64) {
    for p in v.pixels_mut() {
        for c in p.iter_mut() {
            *c = c.clamp(-r, r);
        }
    }
}

/// Projection onto `{u >= 0, |u| <= r}` per pixel. Clamping negatives and
/// then scaling radially is exact for this intersection.
pub(crate) fn project_nonneg_ball_in_place<const C: usize>(v: &mut Field<C>, r: f64) {
    for p in v.pixels_mut() {
        for c in p.iter_mut() {
            *c = c.max(0.0);
        }
    }
    project_ball_in_place(v, r);
}

/// Average over `m x m` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DownscaleOp {
    m: usize,
    n1: usize,
    n2: usize,
}

impl DownscaleOp {
    /// Operator mapping an `n1 x n2` image onto `(n1/m) x (n2/m)`.
    pub fn new(m: usize, n1: usize, n2: usize) -> Result<Self, ProxError> {
        if m < 2 {
            return Err(ProxError::BadScale(m));
        }
        if !n1.is_multiple_of(m) || !n2.is_multiple_of(m) {
            return Err(ProxError::NotDivisible { n1, n2, m });
        }
        if n1 / m < 2 || n2 / m < 2 {
            return Err(GridError::TooSmall {
                n1: n1 / m,
                n2: n2 / m,
            }
            .into());
        }
        Ok(Self { m, n1, n2 })
    }

    /// Operator whose output has the dims of `low`.
    pub fn for_low_res(m: usize, low: &Image) -> Result<Self, ProxError> {
        Self::new(m, low.n1() * m, low.n2() * m)
    }

    pub fn factor(&self) -> usize {
        self.m
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn output_dims(&self) -> (usize, usize) {
        (self.n1 / self.m, self.n2 / self.m)
    }

    fn check_input(&self, x: &Image) -> Result<(), ProxError> {
        if x.dims() != self.input_dims() {
            return Err(GridError::DimMismatch {
                left: x.dims(),
                right: self.input_dims(),
            }
            .into());
        }
        Ok(())
    }

    fn check_output(&self, y: &Image) -> Result<(), ProxError> {
        if y.dims() != self.output_dims() {
            return Err(GridError::DimMismatch {
                left: y.dims(),
                right: self.output_dims(),
            }
            .into());
        }
        Ok(())
    }

    fn down(&self, x: &Image) -> Image {
        let (o1, o2) = self.output_dims();
        let m = self.m;
        let inv = 1.0 / (m * m) as f64;
        let mut out = vec![0.0; o1 * o2];
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                out[(i / m) * o2 + j / m] += x.get(i, j);
            }
        }
        for v in &mut out {
            *v *= inv;
        }
        Image::from_parts_unchecked(o1, o2, out)
    }

    fn up(&self, y: &Image) -> Image {
        let m = self.m;
        let inv = 1.0 / (m * m) as f64;
        let data = (0..self.n1 * self.n2)
            .map(|p| y.get((p / self.n2) / m, (p % self.n2) / m) * inv)
            .collect();
        Image::from_parts_unchecked(self.n1, self.n2, data)
    }

    pub fn apply_checked(&self, x: &Image) -> Result<Image, ProxError> {
        self.check_input(x)?;
        Ok(self.down(x))
    }

    pub fn adjoint_checked(&self, y: &Image) -> Result<Image, ProxError> {
        self.check_output(y)?;
        Ok(self.up(y))
    }

    /// Block replication `m^2 A* y`, the natural feasible start.
    pub fn replicate(&self, y: &Image) -> Result<Image, ProxError> {
        let mut x = self.adjoint_checked(y)?;
        let mm = (self.m * self.m) as f64;
        for v in x.as_mut_slice() {
            *v *= mm;
        }
        Ok(x)
    }

    /// Euclidean projection onto `{x : A x = y}`: subtract each block's
    /// residual mean from every pixel of the block.
    pub fn project(&self, y: &Image, x: &Image) -> Result<Image, ProxError> {
        self.check_input(x)?;
        self.check_output(y)?;
        let mut out = x.clone();
        self.project_in_place(y, &mut out);
        Ok(out)
    }

    pub(crate) fn project_in_place(&self, y: &Image, x: &mut Image) {
        let r = self.down(x);
        let m = self.m;
        let n2 = self.n2;
        for (p, v) in x.as_mut_slice().iter_mut().enumerate() {
            let (bi, bj) = ((p / n2) / m, (p % n2) / m);
            *v -= r.get(bi, bj) - y.get(bi, bj);
        }
    }
}

impl LinearOperator for DownscaleOp {
    type Domain = Image;
    type Range = Image;

    fn apply(&self, x: &Image) -> Image {
        self.down(x)
    }

    fn adjoint(&self, y: &Image) -> Image {
        self.up(y)
    }
}

pub fn downscale_apply(a: &DownscaleOp, x: &Image) -> Result<Image, ProxError> {
    a.apply_checked(x)
}

pub fn downscale_adjoint(a: &DownscaleOp, y: &Image) -> Result<Image, ProxError> {
    a.adjoint_checked(y)
}

pub fn project_affine(a: &DownscaleOp, y: &Image, x: &Image) -> Result<Image, ProxError> {
    a.project(y, x)
}
