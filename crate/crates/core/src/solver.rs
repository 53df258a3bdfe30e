//! Primal-dual solvers for `min_x F(x) + lambda TV(x)`.
//!
//! Two fidelities are supported: quadratic denoising `F(x) = |x - y|^2 / 2`
//! and block-average upscaling `F(x) = I{A x = y}` (with `lambda = 1`).
//!
//! * Direct models (`iso`, `aniso`, `upwind`, `prn`) write the TV as the
//!   support function `lambda * sup_{u in S} <Kx, u>` and run an
//!   over-relaxed Chambolle-Pock iteration, primal step first:
//!
//!   ```text
//!   x~ = prox_{tau F}(x - tau K* u)
//!   u~ = P_{lambda S}(u + sigma K (2 x~ - x))
//!   (x, u) <- rho (x~, u~) + (1 - rho) (x, u)
//!   ```
//!
//!   `S` is the per-pixel unit ball (`iso`, `prn`), the box (`aniso`), or
//!   the non-negative part of the ball for `upwind`, whose `K` is the signed
//!   one-sided difference operator.
//!
//! * Interpolated models (`condat`, `new`) are split as
//!   `min F(x) + lambda sum_star |v_star|` subject to `C v + D x = 0`, with
//!   `v = (v_star..., alpha)`, `C = -L*` and `D x = (0, x)`, where `L` is the
//!   stacked operator `(u, s) -> (L_star u..., D*u - s)`. The iteration is
//!   Chambolle-Pock on the Lagrangian with multiplier `(u, s)`:
//!
//!   ```text
//!   x~ = prox_{tau F}(x - tau s)
//!   v~ = shrink(v_star + tau L_star u, tau lambda),  alpha~ = alpha + tau (D*u - s)
//!   (u, s)~ = (u, s) + sigma (C (2 v~ - v) + D (2 x~ - x))
//!   (x, v, u, s) <- mu (~) + (1 - mu) (current)
//!   ```
//!
//! Both loops are single-threaded and deterministic.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::diff::{Difference, UpwindDifference};
use crate::error::SolverError;
use crate::grid::{group_l21_norm, Field, Image};
use crate::interp::{BigL, InterpSystem, Lifted, Stencil, Stacked};
use crate::linop::{estimate_norm, LinearOperator, VectorSpace};
use crate::prox::{
    project_ball_in_place, project_box_in_place, project_nonneg_ball_in_place,
    prox_quadratic_in_place, shrink_in_place, DownscaleOp,
};
use crate::tv::{tv_closed_form, Model};

/// Step sizes, relaxation and budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tau: f64,
    pub sigma: f64,
    /// Over-relaxation of the direct-model iteration, in `(0, 2)`.
    pub rho: f64,
    /// Relaxation of the split iteration, in `(0, 2)`.
    pub mu: f64,
    pub iters: usize,
    /// Stop early once both the primal and the dual iterates are stationary,
    /// `|z_k+1 - z_k| <= residual_tol * max(|z_k|, 1)`, and, for the split
    /// form, the relative constraint residual is below it too.
    pub residual_tol: Option<f64>,
}

/// Default regularisation weight for denoising.
pub fn default_lambda(model: Model) -> f64 {
    match model {
        Model::Upwind => 0.155,
        Model::Iso => 0.12,
        Model::Condat => 0.12,
        Model::New => 0.075,
        Model::Aniso => 0.12,
        Model::Prn => 0.12,
    }
}

pub const DENOISE_ITERS: usize = 1000;
pub const UPSCALE_ITERS: usize = 5000;
pub const RHOMBUS_ITERS: usize = 20000;

impl SolverConfig {
    /// Denoising defaults. `sigma` for the direct models is `1 / (tau |K|^2)`
    /// with `|K|^2` bounded by 8 (two-channel gradient) or 16 (four channels).
    pub fn denoise_default(model: Model) -> Self {
        let (tau, sigma, rho, mu) = match model {
            Model::Upwind => (0.01, 1.0 / (0.01 * 16.0), 1.9, 1.0),
            Model::Iso | Model::Aniso => (0.01, 1.0 / (0.01 * 8.0), 1.9, 1.0),
            Model::Prn => (0.01, 1.0 / (0.01 * 16.0), 1.9, 1.0),
            Model::Condat => (0.99 / 8.0, 0.99 / 3.0, 1.0, 1.0),
            Model::New => (0.99 / 10.0, 0.99 / 10.0, 1.0, 1.0),
        };
        Self {
            tau,
            sigma,
            rho,
            mu,
            iters: DENOISE_ITERS,
            residual_tol: None,
        }
    }

    /// Upscaling defaults.
    pub fn upscale_default(model: Model) -> Self {
        let (tau, sigma, rho, mu) = match model {
            Model::Upwind => (0.02, 1.0 / (0.02 * 16.0), 1.9, 1.0),
            Model::Iso | Model::Aniso => (1.0 / 8.0, 0.1, 1.0, 1.0),
            Model::Prn => (1.0 / 16.0, 0.1, 1.0, 1.0),
            Model::Condat => (0.9 / 8.0, 0.9 / 3.0, 1.0, 1.0),
            Model::New => (0.9 / 30.0, 0.9 / 6.0, 1.0, 1.0),
        };
        Self {
            tau,
            sigma,
            rho,
            mu,
            iters: UPSCALE_ITERS,
            residual_tol: None,
        }
    }

    /// Denoising steps exactly as tabulated for the direct models, with
    /// `sigma = 16 / tau` (upwind, prn) or `8 / tau` (iso, aniso). These
    /// exceed the `tau sigma |K|^2 <= 1` bound and are kept only for
    /// reproduction; the interpolated models are unchanged.
    pub fn printed_table1(model: Model) -> Self {
        let mut cfg = Self::denoise_default(model);
        match model {
            Model::Upwind | Model::Prn => cfg.sigma = 16.0 / cfg.tau,
            Model::Iso | Model::Aniso => cfg.sigma = 8.0 / cfg.tau,
            Model::Condat | Model::New => {}
        }
        cfg
    }

    pub fn with_iters(mut self, iters: usize) -> Self {
        self.iters = iters;
        self
    }

    fn validate(&self) -> Result<(), SolverError> {
        let bad = |what: &str, v: f64| Err(SolverError::Config(format!("{what} = {v}")));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau", self.tau);
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma", self.sigma);
        }
        if !(self.rho > 0.0 && self.rho < 2.0) {
            return bad("rho", self.rho);
        }
        if !(self.mu > 0.0 && self.mu < 2.0) {
            return bad("mu", self.mu);
        }
        if self.iters == 0 {
            return Err(SolverError::Config("iters = 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Fidelity {
    Denoise { y: Image },
    Upscale { op: DownscaleOp, y: Image },
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub fidelity: Fidelity,
    pub model: Model,
    pub lambda: f64,
    pub stencil: Stencil,
}

impl ProblemSpec {
    pub fn denoise(y: Image, model: Model, lambda: f64) -> Self {
        Self {
            fidelity: Fidelity::Denoise { y },
            model,
            lambda,
            stencil: Stencil::default(),
        }
    }

    /// Upscaling always runs with `lambda = 1`.
    pub fn upscale(op: DownscaleOp, y: Image, model: Model) -> Self {
        Self {
            fidelity: Fidelity::Upscale { op, y },
            model,
            lambda: 1.0,
            stencil: Stencil::default(),
        }
    }

    /// Natural starting point: `y` for denoising, block replication of `y`
    /// for upscaling.
    pub fn initial_guess(&self) -> Result<Image, SolverError> {
        Ok(match &self.fidelity {
            Fidelity::Denoise { y } => y.clone(),
            Fidelity::Upscale { op, y } => op.replicate(y)?,
        })
    }

    fn validate(&self, x0: &Image) -> Result<(), SolverError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SolverError::Config(format!("lambda = {}", self.lambda)));
        }
        match &self.fidelity {
            Fidelity::Denoise { y } => y.ensure_same_dims(x0)?,
            Fidelity::Upscale { op, y } => {
                op.apply_checked(x0)?;
                op.adjoint_checked(y)?;
                if self.lambda != 1.0 {
                    return Err(SolverError::Config(
                        "upscaling is constrained and requires lambda = 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn prox_f(&self, x: &mut Image, tau: f64) {
        match &self.fidelity {
            Fidelity::Denoise { y } => prox_quadratic_in_place(y, x, tau),
            Fidelity::Upscale { op, y } => op.project_in_place(y, x),
        }
    }

    fn fidelity_value(&self, x: &Image) -> f64 {
        match &self.fidelity {
            Fidelity::Denoise { y } => {
                let mut d = x.clone();
                d.axpy(-1.0, y);
                0.5 * d.dot(&d)
            }
            Fidelity::Upscale { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub image: Image,
    /// Primal objective after every executed iteration. For the direct
    /// models this is `F(x) + lambda TV(x)`; for the split form it is
    /// `F(x) + lambda sum |v_star|`.
    pub objective: Vec<f64>,
    /// `|C v + D x| / max(|x|, 1)` after every iteration (split form only;
    /// empty for direct models).
    pub residual: Vec<f64>,
    pub iterations: usize,
    pub wall_time: Duration,
    /// `tau * sigma * |K|^2` with `|K|` from a power-method estimate.
    pub step_product: f64,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residual.last().copied().unwrap_or(0.0)
    }
}

/// Dispatches on the model family.
pub fn solve(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    x0: &Image,
) -> Result<SolveReport, SolverError> {
    if spec.model.is_interpolated() {
        solve_constrained(spec, cfg, x0)
    } else {
        solve_composite(spec, cfg, x0)
    }
}

#[derive(Debug, Clone, Copy)]
enum DualSet {
    Ball,
    Box,
    NonnegBall,
}

impl DualSet {
    fn project<const C: usize>(self, u: &mut Field<C>, r: f64) {
        match self {
            DualSet::Ball => project_ball_in_place(u, r),
            DualSet::Box => project_box_in_place(u, r),
            DualSet::NonnegBall => project_nonneg_ball_in_place(u, r),
        }
    }
}

const NORM_SEED: u64 = 0x7654_3210;
const NORM_ITERS: usize = 200;

fn check_steps(tau: f64, sigma: f64, norm: f64) -> f64 {
    let product = tau * sigma * norm * norm;
    if product > 1.0 {
        log::warn!(
            "tau*sigma*|K|^2 = {product:.3} exceeds 1 (tau = {tau}, sigma = {sigma}, |K| ~ {norm:.4}); \
             convergence is not guaranteed"
        );
    }
    product
}

/// Over-relaxed primal-dual iteration for the direct models.
pub fn solve_composite(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    x0: &Image,
) -> Result<SolveReport, SolverError> {
    cfg.validate()?;
    spec.validate(x0)?;
    match spec.model {
        Model::Iso => run_composite(&Difference::<2>, DualSet::Ball, spec, cfg, x0),
        Model::Aniso => run_composite(&Difference::<2>, DualSet::Box, spec, cfg, x0),
        Model::Prn => run_composite(&Difference::<4>, DualSet::Ball, spec, cfg, x0),
        Model::Upwind => run_composite(&UpwindDifference, DualSet::NonnegBall, spec, cfg, x0),
        Model::Condat | Model::New => Err(SolverError::WrongModel(spec.model.name())),
    }
}

fn run_composite<const C: usize, K>(
    op: &K,
    set: DualSet,
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    x0: &Image,
) -> Result<SolveReport, SolverError>
where
    K: LinearOperator<Domain = Image, Range = Field<C>>,
{
    let start = Instant::now();
    let step_product = check_steps(cfg.tau, cfg.sigma, estimate_norm(op, x0, NORM_SEED, NORM_ITERS));
    let (tau, sigma, rho, lambda) = (cfg.tau, cfg.sigma, cfg.rho, spec.lambda);
    let tv = |x: &Image| tv_closed_form(spec.model, x).unwrap_or(f64::NAN);

    let mut x = x0.clone();
    let mut u = Field::<C>::zeros_on(x0);
    let mut objective = Vec::with_capacity(cfg.iters);
    let mut iterations = 0;

    for it in 1..=cfg.iters {
        iterations = it;
        let mut x_t = x.clone();
        x_t.axpy(-tau, &op.adjoint(&u));
        spec.prox_f(&mut x_t, tau);

        let mut x_bar = x_t.clone();
        x_bar.scale(2.0);
        x_bar.axpy(-1.0, &x);
        let mut u_t = u.clone();
        u_t.axpy(sigma, &op.apply(&x_bar));
        set.project(&mut u_t, lambda);

        let prev = cfg.residual_tol.map(|_| (x.clone(), u.clone()));
        relax(&mut x, &x_t, rho);
        relax(&mut u, &u_t, rho);

        let obj = spec.fidelity_value(&x) + lambda * tv(&x);
        if !obj.is_finite() || !x.is_finite() {
            return Err(SolverError::Diverged { iteration: it });
        }
        objective.push(obj);

        if let (Some(tol), Some((x_prev, u_prev))) = (cfg.residual_tol, prev) {
            if stationary(&x_prev, &x, tol) && stationary(&u_prev, &u, tol) {
                break;
            }
        }
    }

    if let Fidelity::Upscale { op, y } = &spec.fidelity {
        op.project_in_place(y, &mut x);
    }
    Ok(SolveReport {
        image: x,
        objective,
        residual: Vec::new(),
        iterations,
        wall_time: start.elapsed(),
        step_product,
    })
}

fn relax<V: VectorSpace>(cur: &mut V, next: &V, w: f64) {
    if w == 1.0 {
        *cur = next.clone();
    } else {
        cur.scale(1.0 - w);
        cur.axpy(w, next);
    }
}

/// Primal block `(x, v)` of the split problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPrimal<const C: usize> {
    pub x: Image,
    pub v: Stacked<C>,
}

impl<const C: usize> VectorSpace for SplitPrimal<C> {
    fn dims(&self) -> (usize, usize) {
        self.x.dims()
    }
    fn zeros_like(&self) -> Self {
        Self {
            x: self.x.zeros_like(),
            v: self.v.zeros_like(),
        }
    }
    fn slices(&self) -> Vec<&[f64]> {
        let mut s = self.x.slices();
        s.extend(self.v.slices());
        s
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut s = self.x.slices_mut();
        s.extend(self.v.slices_mut());
        s
    }
}

/// `(x, v) -> C v + D x = -L* v + (0, x)`.
#[derive(Debug, Clone)]
pub struct ConstraintOp<const C: usize> {
    big: BigL<C>,
}

impl<const C: usize> ConstraintOp<C> {
    pub fn new(system: &InterpSystem<C>) -> Self {
        Self { big: system.big() }
    }
}

impl<const C: usize> LinearOperator for ConstraintOp<C> {
    type Domain = SplitPrimal<C>;
    type Range = Lifted<C>;

    fn apply(&self, p: &SplitPrimal<C>) -> Lifted<C> {
        let mut out = self.big.adjoint(&p.v);
        out.scale(-1.0);
        out.s.axpy(1.0, &p.x);
        out
    }

    fn adjoint(&self, d: &Lifted<C>) -> SplitPrimal<C> {
        let mut v = self.big.apply(d);
        v.scale(-1.0);
        SplitPrimal { x: d.s.clone(), v }
    }
}

/// Split-form primal-dual iteration for the interpolated models.
pub fn solve_constrained(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    x0: &Image,
) -> Result<SolveReport, SolverError> {
    cfg.validate()?;
    spec.validate(x0)?;
    match spec.model {
        Model::Condat => run_constrained(&InterpSystem::condat(), spec, cfg, x0),
        Model::New => run_constrained(&InterpSystem::four_direction_with(spec.stencil), spec, cfg, x0),
        other => Err(SolverError::WrongModel(other.name())),
    }
}

fn run_constrained<const C: usize>(
    system: &InterpSystem<C>,
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    x0: &Image,
) -> Result<SolveReport, SolverError> {
    let start = Instant::now();
    let k = ConstraintOp::new(system);
    let stars = system.stars.len();
    let mut p = SplitPrimal {
        x: x0.clone(),
        v: Stacked::<C>::zeros_on(x0, stars),
    };
    // alpha = -x on the constraint set
    p.v.alpha = x0.map(|v| -v);

    let step_product = check_steps(cfg.tau, cfg.sigma, estimate_norm(&k, &p, NORM_SEED, NORM_ITERS));
    let (tau, sigma, mu, lambda) = (cfg.tau, cfg.sigma, cfg.mu, spec.lambda);

    let mut d = Lifted::<C>::zeros_on(x0);
    let mut objective = Vec::with_capacity(cfg.iters);
    let mut residual = Vec::with_capacity(cfg.iters);
    let mut iterations = 0;

    for it in 1..=cfg.iters {
        iterations = it;
        // primal: (x, v) - tau K* (u, s)
        let mut p_t = p.clone();
        p_t.axpy(-tau, &k.adjoint(&d));
        spec.prox_f(&mut p_t.x, tau);
        for f in &mut p_t.v.v {
            shrink_in_place(f, tau * lambda);
        }

        // dual ascent on the extrapolated primal
        let mut p_bar = p_t.clone();
        p_bar.scale(2.0);
        p_bar.axpy(-1.0, &p);
        let mut d_t = d.clone();
        d_t.axpy(sigma, &k.apply(&p_bar));

        let prev = cfg.residual_tol.map(|_| (p.clone(), d.clone()));
        relax(&mut p, &p_t, mu);
        relax(&mut d, &d_t, mu);

        let obj = spec.fidelity_value(&p.x)
            + lambda * p.v.v.iter().map(group_l21_norm).sum::<f64>();
        if !obj.is_finite() || !p.x.is_finite() {
            return Err(SolverError::Diverged { iteration: it });
        }
        let res = k.apply(&p).norm() / p.x.norm().max(1.0);
        objective.push(obj);
        residual.push(res);

        if let (Some(tol), Some((p_prev, d_prev))) = (cfg.residual_tol, prev) {
            if res <= tol && stationary(&p_prev, &p, tol) && stationary(&d_prev, &d, tol) {
                break;
            }
        }
    }

    let mut image = p.x;
    if let Fidelity::Upscale { op, y } = &spec.fidelity {
        op.project_in_place(y, &mut image);
    }
    Ok(SolveReport {
        image,
        objective,
        residual,
        iterations,
        wall_time: start.elapsed(),
        step_product,
    })
}

fn stationary<V: VectorSpace + Clone>(prev: &V, next: &V, tol: f64) -> bool {
    let mut d = next.clone();
    d.axpy(-1.0, prev);
    d.norm() <= tol * prev.norm().max(1.0)
}

/// `|reference - x| / |denominator|` in Frobenius norm.
pub fn relative_error(reference: &Image, x: &Image, denominator: &Image) -> f64 {
    let mut d = reference.clone();
    d.axpy(-1.0, x);
    d.norm() / denominator.norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    /// `|x_ref - x| / |x_ref|`
    pub rel_err: f64,
    /// `|x_ref - x| / |x|`
    pub rel_err_denoised: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub best: usize,
}

impl SweepTable {
    pub fn best_row(&self) -> &SweepRow {
        &self.rows[self.best]
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rel_err).collect()
    }
}

/// Solves `template` once per `lambda` (in parallel) and tabulates the
/// error against `reference`.
pub fn lambda_sweep(
    template: &ProblemSpec,
    lambdas: &[f64],
    reference: &Image,
    cfg: &SolverConfig,
) -> Result<SweepTable, SolverError> {
    if lambdas.is_empty() {
        return Err(SolverError::Config("empty lambda list".into()));
    }
    let x0 = template.initial_guess()?;
    reference.ensure_same_dims(&x0)?;
    let rows = lambdas
        .par_iter()
        .map(|&lambda| {
            let spec = ProblemSpec {
                lambda,
                ..template.clone()
            };
            let report = solve(&spec, cfg, &x0)?;
            Ok(SweepRow {
                lambda,
                rel_err: relative_error(reference, &report.image, reference),
                rel_err_denoised: relative_error(reference, &report.image, &report.image),
                iterations: report.iterations,
            })
        })
        .collect::<Result<Vec<_>, SolverError>>()?;
    let best = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.rel_err.total_cmp(&b.1.rel_err))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(SweepTable { rows, best })
}

/// `n` points spaced geometrically from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// Number of strict local minima of a sequence, endpoints included.
pub fn count_local_minima(values: &[f64]) -> usize {
    let n = values.len();
    (0..n)
        .filter(|&i| {
            let left = i == 0 || values[i] < values[i - 1];
            let right = i + 1 == n || values[i] < values[i + 1];
            left && right
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::random_adjoint_residual;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_image(n1: usize, n2: usize, seed: u64) -> Image {
        let mut x = Image::zeros(n1, n2).unwrap();
        x.randomize(&mut ChaCha8Rng::seed_from_u64(seed));
        x
    }

    #[test]
    fn constraint_op_adjoint() {
        {
            let sys4 = InterpSystem::four_direction();
            let x = Image::zeros(7, 6).unwrap();
            let k = ConstraintOp::new(&sys4);
            let p = SplitPrimal {
                x: x.clone(),
                v: Stacked::<4>::zeros_on(&x, 4),
            };
            let d = Lifted::<4>::zeros_on(&x);
            assert!(random_adjoint_residual(&k, &p, &d, 5, 1) <= 1e-12);
        }
        let x = Image::zeros(5, 9).unwrap();
        let k = ConstraintOp::new(&InterpSystem::condat());
        let p = SplitPrimal {
            x: x.clone(),
            v: Stacked::<2>::zeros_on(&x, 3),
        };
        let d = Lifted::<2>::zeros_on(&x);
        assert!(random_adjoint_residual(&k, &p, &d, 5, 2) <= 1e-12);
    }

    #[test]
    fn zero_lambda_returns_data() {
        let y = rand_image(12, 10, 3);
        for model in Model::ALL {
            let spec = ProblemSpec::denoise(y.clone(), model, 0.0);
            let cfg = SolverConfig::denoise_default(model).with_iters(3000);
            let rep = solve(&spec, &cfg, &y).unwrap();
            assert!(rep.image.max_abs_diff(&y) <= 1e-8, "{model}: {}", rep.image.max_abs_diff(&y));
            assert_eq!(rep.objective.len(), rep.iterations);
            if model.is_interpolated() {
                assert!(rep.final_residual() <= 1e-8, "{model}");
            }
        }
    }

    #[test]
    fn constant_data_is_fixed() {
        let y = Image::filled(10, 10, 0.42).unwrap();
        for model in Model::ALL {
            let spec = ProblemSpec::denoise(y.clone(), model, 0.3);
            let cfg = SolverConfig::denoise_default(model).with_iters(200);
            let rep = solve(&spec, &cfg, &y).unwrap();
            assert!(rep.image.max_abs_diff(&y) <= 1e-12, "{model}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let y = rand_image(4, 4, 1);
        let spec = ProblemSpec::denoise(y.clone(), Model::Iso, 0.1);
        let mut cfg = SolverConfig::denoise_default(Model::Iso);
        cfg.tau = 0.0;
        assert!(matches!(solve(&spec, &cfg, &y), Err(SolverError::Config(_))));
        let cfg = SolverConfig::denoise_default(Model::Iso);
        assert!(solve_constrained(&spec, &cfg, &y).is_err());
        let spec = ProblemSpec::denoise(y.clone(), Model::New, 0.1);
        assert!(solve_composite(&spec, &cfg, &y).is_err());
        let other = rand_image(5, 4, 2);
        assert!(solve(&spec, &cfg, &other).is_err());
    }

    #[test]
    fn printed_steps_exceed_the_bound() {
        let y = rand_image(8, 8, 4);
        for model in [Model::Iso, Model::Upwind] {
            let spec = ProblemSpec::denoise(y.clone(), model, 0.1);
            let rep = solve(&spec, &SolverConfig::printed_table1(model).with_iters(5), &y).unwrap();
            assert!(rep.step_product > 1.0);
            let rep = solve(&spec, &SolverConfig::denoise_default(model).with_iters(5), &y).unwrap();
            assert!(rep.step_product <= 1.0);
        }
        assert_eq!(
            SolverConfig::printed_table1(Model::New),
            SolverConfig::denoise_default(Model::New)
        );
    }

    #[test]
    fn large_lambda_gives_the_mean() {
        let y = rand_image(16, 16, 9);
        let mean = y.mean();
        for model in Model::ALL {
            let spec = ProblemSpec::denoise(y.clone(), model, 1e6);
            let rep = solve(&spec, &SolverConfig::denoise_default(model), &y).unwrap();
            let dev = rep.image.as_slice().iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
            assert!(dev <= 1e-3, "{model}: {dev}");
        }
    }

    #[test]
    fn reports_are_deterministic_and_consistent() {
        let y = rand_image(9, 11, 5);
        for model in [Model::Prn, Model::New] {
            let spec = ProblemSpec::denoise(y.clone(), model, 0.2);
            let cfg = SolverConfig::denoise_default(model).with_iters(50);
            let a = solve(&spec, &cfg, &y).unwrap();
            let b = solve(&spec, &cfg, &y).unwrap();
            assert_eq!(a.image, b.image);
            assert_eq!(a.objective, b.objective);
            assert_eq!(a.objective.len(), 50);
            assert_eq!(a.residual.len(), if model.is_interpolated() { 50 } else { 0 });
        }
    }

    #[test]
    fn early_stop_on_residual_tol() {
        let y = rand_image(8, 8, 6);
        let spec = ProblemSpec::denoise(y.clone(), Model::Iso, 0.05);
        let mut cfg = SolverConfig::denoise_default(Model::Iso).with_iters(5000);
        cfg.residual_tol = Some(1e-6);
        let rep = solve(&spec, &cfg, &y).unwrap();
        assert!(rep.iterations < 5000);
        assert_eq!(rep.objective.len(), rep.iterations);
    }

    #[test]
    fn early_stop_waits_for_the_dual() {
        // zero duals leave the first primal step at x0; that is not a fixed point
        let y = rand_image(8, 8, 7);
        let mean = y.mean();
        for model in Model::ALL {
            let spec = ProblemSpec::denoise(y.clone(), model, 1e6);
            let mut cfg = SolverConfig::denoise_default(model).with_iters(20_000);
            cfg.residual_tol = Some(1e-8);
            let rep = solve(&spec, &cfg, &y).unwrap();
            assert!(rep.iterations > 1, "{model}");
            let dev = rep.image.as_slice().iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
            assert!(dev <= 1e-4, "{model}: {dev}");
        }
    }

    #[test]
    fn helpers() {
        let g = log_grid(0.01, 1.0, 3);
        assert!((g[1] - 0.1).abs() < 1e-15 && (g[2] - 1.0).abs() < 1e-15);
        assert_eq!(count_local_minima(&[3.0, 2.0, 1.0, 2.0]), 1);
        assert_eq!(count_local_minima(&[1.0, 2.0, 1.0, 2.0]), 2);
        assert_eq!(count_local_minima(&[1.0, 2.0, 3.0]), 1);
    }
}
