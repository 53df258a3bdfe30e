//! Experiment drivers shared by the command-line tool and the acceptance
//! suite: the upscaling comparison and the denoising lambda sweep.

use std::time::Duration;

use rayon::prelude::*;

use crate::error::SolverError;
use crate::grid::Image;
use crate::interp::Stencil;
use crate::io::{synth_fixture, Fixture};
use crate::linop::{LinearOperator, VectorSpace};
use crate::prox::DownscaleOp;
use crate::solver::{
    count_local_minima, lambda_sweep, relative_error, solve, ProblemSpec, SolverConfig, SweepTable,
};
use crate::tv::Model;

#[derive(Debug, Clone)]
pub struct UpscaleRow {
    pub model: Model,
    /// `|x_ref - x|_F`
    pub abs_err: f64,
    /// `|A x - y|_F`
    pub feasibility: f64,
    /// Final relative constraint residual (0 for the direct models).
    pub residual: f64,
    pub iterations: usize,
    pub wall_time: Duration,
}

/// Downscales `reference` by `m` and upscales it back with each model.
/// Models run in parallel; rows come back in the order given.
pub fn upscale_experiment(
    reference: &Image,
    m: usize,
    models: &[Model],
    iters: Option<usize>,
    stencil: Stencil,
) -> Result<Vec<UpscaleRow>, SolverError> {
    let op = DownscaleOp::new(m, reference.n1(), reference.n2())?;
    let y = op.apply(reference);
    models
        .par_iter()
        .map(|&model| {
            let mut spec = ProblemSpec::upscale(op, y.clone(), model);
            spec.stencil = stencil;
            let mut cfg = SolverConfig::upscale_default(model);
            if let Some(n) = iters {
                cfg.iters = n;
            }
            let x0 = spec.initial_guess()?;
            let rep = solve(&spec, &cfg, &x0)?;
            let mut r = op.apply(&rep.image);
            r.axpy(-1.0, &y);
            let mut e = rep.image.clone();
            e.axpy(-1.0, reference);
            Ok(UpscaleRow {
                model,
                abs_err: e.norm(),
                feasibility: r.norm(),
                residual: rep.final_residual(),
                iterations: rep.iterations,
                wall_time: rep.wall_time,
            })
        })
        .collect()
}

/// The rhombus upscaling comparison on an `n x n` synthetic rhombus.
pub fn rhombus_experiment(
    n: usize,
    m: usize,
    models: &[Model],
    iters: Option<usize>,
    stencil: Stencil,
) -> Result<Vec<UpscaleRow>, SolverError> {
    let reference = synth_fixture(Fixture::Rhombus(n), 0)
        .map_err(|e| SolverError::Config(e.to_string()))?;
    upscale_experiment(&reference, m, models, iters, stencil)
}

#[derive(Debug, Clone)]
pub struct DenoiseSweep {
    pub model: Model,
    pub table: SweepTable,
    /// `|clean - noisy| / |clean|`
    pub noisy_rel_err: f64,
    pub local_minima: usize,
    /// Constraint residual of the solve at the best lambda (0 for the direct
    /// models).
    pub best_residual: f64,
}

impl DenoiseSweep {
    pub fn best_rel_err(&self) -> f64 {
        self.table.best_row().rel_err
    }

    pub fn best_lambda(&self) -> f64 {
        self.table.best_row().lambda
    }
}

/// Sweeps `lambdas` for one model and re-solves at the best value to
/// report its constraint residual.
pub fn denoise_sweep(
    clean: &Image,
    noisy: &Image,
    model: Model,
    lambdas: &[f64],
    cfg: &SolverConfig,
    stencil: Stencil,
) -> Result<DenoiseSweep, SolverError> {
    let mut spec = ProblemSpec::denoise(noisy.clone(), model, 0.0);
    spec.stencil = stencil;
    let table = lambda_sweep(&spec, lambdas, clean, cfg)?;
    let best = ProblemSpec {
        lambda: table.best_row().lambda,
        ..spec
    };
    let best_residual = solve(&best, cfg, noisy)?.final_residual();
    Ok(DenoiseSweep {
        model,
        local_minima: count_local_minima(&table.errors()),
        noisy_rel_err: relative_error(clean, noisy, clean),
        table,
        best_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upscale_rows_follow_model_order_and_are_feasible() {
        let models = [Model::Upwind, Model::Iso, Model::Condat];
        let rows = rhombus_experiment(16, 4, &models, Some(50), Stencil::AsPrinted).unwrap();
        assert_eq!(rows.iter().map(|r| r.model).collect::<Vec<_>>(), models);
        assert!(rows.iter().all(|r| r.feasibility <= 1e-9 && r.iterations == 50));
    }

    #[test]
    fn sweep_reports_noisy_baseline() {
        let clean = synth_fixture(Fixture::Piecewise(16), 1).unwrap();
        let noisy = crate::io::add_gaussian_noise(&clean, 0.1, 2).unwrap();
        let cfg = SolverConfig::denoise_default(Model::Iso).with_iters(100);
        let s = denoise_sweep(&clean, &noisy, Model::Iso, &[0.01, 0.1], &cfg, Stencil::AsPrinted).unwrap();
        assert_eq!(s.table.rows.len(), 2);
        assert!(s.best_rel_err() < s.noisy_rel_err);
        assert_eq!(s.best_residual, 0.0);
    }
}
