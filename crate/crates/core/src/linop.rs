//! Linear operator / adjoint contract and the numerical checks built on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A finite-dimensional real vector living on an `n1 x n2` grid.
///
/// Implementors expose their coordinates as one or more flat slices; the
/// provided methods derive the Euclidean structure from them.
pub trait VectorSpace: Clone {
    fn dims(&self) -> (usize, usize);
    fn zeros_like(&self) -> Self;
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn dot(&self, other: &Self) -> f64 {
        let a = self.slices();
        let b = other.slices();
        assert_eq!(a.len(), b.len(), "vector shape mismatch");
        a.iter()
            .zip(&b)
            .map(|(x, y)| {
                assert_eq!(x.len(), y.len(), "vector length mismatch");
                x.iter().zip(y.iter()).map(|(p, q)| p * q).sum::<f64>()
            })
            .sum()
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += a * x`
    fn axpy(&mut self, a: f64, x: &Self) {
        let src = x.slices();
        for (dst, s) in self.slices_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d += a * v;
            }
        }
    }

    fn scale(&mut self, a: f64) {
        for s in self.slices_mut() {
            for v in s.iter_mut() {
                *v *= a;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Fills every coordinate with an independent uniform sample in `[-1, 1]`.
    fn randomize(&mut self, rng: &mut impl Rng) {
        for s in self.slices_mut() {
            for v in s.iter_mut() {
                *v = rng.random_range(-1.0..=1.0);
            }
        }
    }
}

/// A linear map together with its adjoint.
pub trait LinearOperator {
    type Domain: VectorSpace;
    type Range: VectorSpace;

    fn apply(&self, x: &Self::Domain) -> Self::Range;
    fn adjoint(&self, y: &Self::Range) -> Self::Domain;
}

/// Relative adjoint mismatch `|<Ax,y> - <x,A*y>| / (1 + |<Ax,y>|)`.
pub fn adjoint_residual<Op: LinearOperator>(op: &Op, x: &Op::Domain, y: &Op::Range) -> f64 {
    let lhs = op.apply(x).dot(y);
    let rhs = x.dot(&op.adjoint(y));
    (lhs - rhs).abs() / (1.0 + lhs.abs())
}

/// Worst [`adjoint_residual`] over `trials` random pairs drawn from `seed`.
pub fn random_adjoint_residual<Op: LinearOperator>(
    op: &Op,
    domain: &Op::Domain,
    range: &Op::Range,
    trials: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = domain.zeros_like();
    let mut y = range.zeros_like();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        x.randomize(&mut rng);
        y.randomize(&mut rng);
        worst = worst.max(adjoint_residual(op, &x, &y));
    }
    worst
}

/// Power iteration on `A*A`, returning an estimate of the operator norm `|A|`.
///
/// The start vector is drawn from `seed`, so the estimate is reproducible.
/// Iteration stops once successive estimates of `|A|^2` agree to `1e-10`
/// relative, or after `max_iter` rounds.
pub fn estimate_norm<Op: LinearOperator>(
    op: &Op,
    domain: &Op::Domain,
    seed: u64,
    max_iter: usize,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = domain.zeros_like();
    x.randomize(&mut rng);
    let n = x.norm();
    if n == 0.0 {
        return 0.0;
    }
    x.scale(1.0 / n);
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let mut z = op.adjoint(&op.apply(&x));
        let next = z.norm();
        if next == 0.0 {
            return 0.0;
        }
        z.scale(1.0 / next);
        x = z;
        let done = (next - lambda).abs() <= 1e-10 * next;
        lambda = next;
        if done {
            break;
        }
    }
    lambda.sqrt()
}
