//! Built-in verification: adjoint identities for every linear operator,
//! Moreau identities for the group-norm prox, and a comparison of the
//! published closed-form adjoints with the mechanically transposed ones.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diff::{Difference, UpwindDifference};
use crate::grid::{Field, Image};
use crate::interp::{Interp, InterpSystem, Lifted, Stacked, Star, Stencil};
use crate::linop::{random_adjoint_residual, LinearOperator, VectorSpace};
use crate::prox::{group_soft_threshold, project_unit_ball, DownscaleOp};
use crate::solver::{ConstraintOp, SplitPrimal};

pub const ADJOINT_TOL: f64 = 1e-10;
pub const MOREAU_TOL: f64 = 1e-12;
/// Published and mechanical values closer than this are reported as equal.
pub const FORMULA_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SelfCheckOptions {
    pub sizes: Vec<(usize, usize)>,
    pub trials: usize,
    pub seed: u64,
    /// Multiplies the adjoint of the centre interpolation operator by
    /// `1 + eps`, to demonstrate that the check catches a broken transpose.
    pub perturb: Option<f64>,
}

impl Default for SelfCheckOptions {
    fn default() -> Self {
        Self {
            sizes: vec![(2, 2), (3, 5), (8, 8), (17, 12), (64, 64)],
            trials: 3,
            seed: 2024,
            perturb: None,
        }
    }
}

/// One numeric identity and its worst value over all sizes and trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.tol
    }
}

/// Published closed-form adjoint versus the transpose used by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct FormulaCheck {
    pub name: &'static str,
    pub max_abs_diff: f64,
    /// What the published formula gets wrong, if anything.
    pub note: &'static str,
}

impl FormulaCheck {
    pub fn agrees(&self) -> bool {
        self.max_abs_diff <= FORMULA_TOL
    }
}

#[derive(Debug, Clone, Default)]
pub struct SelfCheckReport {
    pub adjoints: Vec<Check>,
    pub moreau: Vec<Check>,
    pub formulas: Vec<FormulaCheck>,
}

impl SelfCheckReport {
    /// All adjoint and Moreau identities hold. Formula disagreements are
    /// informational.
    pub fn passed(&self) -> bool {
        self.adjoints.iter().chain(&self.moreau).all(Check::passed)
    }

    pub fn discrepancies(&self) -> impl Iterator<Item = &FormulaCheck> {
        self.formulas.iter().filter(|f| !f.agrees())
    }
}

impl fmt::Display for SelfCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = |ok: bool| if ok { "ok" } else { "FAIL" };
        writeln!(f, "adjoint identities (max relative residual)")?;
        for c in &self.adjoints {
            writeln!(f, "  {:<28} {:>10.3e}  tol {:.0e}  {}", c.name, c.value, c.tol, status(c.passed()))?;
        }
        writeln!(f, "moreau identities (max abs error)")?;
        for c in &self.moreau {
            writeln!(f, "  {:<28} {:>10.3e}  tol {:.0e}  {}", c.name, c.value, c.tol, status(c.passed()))?;
        }
        writeln!(f, "published adjoint formulas vs mechanical transpose (interior pixels)")?;
        for c in &self.formulas {
            if c.agrees() {
                writeln!(f, "  {:<28} agrees", c.name)?;
            } else {
                writeln!(f, "  {:<28} differs (max |diff| {:.3e}): {}", c.name, c.max_abs_diff, c.note)?;
            }
        }
        write!(f, "result: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Wraps an operator and scales its adjoint.
struct ScaledAdjoint<Op> {
    op: Op,
    factor: f64,
}

impl<Op: LinearOperator> LinearOperator for ScaledAdjoint<Op> {
    type Domain = Op::Domain;
    type Range = Op::Range;
    fn apply(&self, x: &Op::Domain) -> Op::Range {
        self.op.apply(x)
    }
    fn adjoint(&self, y: &Op::Range) -> Op::Domain {
        let mut out = self.op.adjoint(y);
        out.scale(self.factor);
        out
    }
}

pub fn run_selfcheck(opts: &SelfCheckOptions) -> SelfCheckReport {
    let mut report = SelfCheckReport::default();
    let mut adj = |name: String, worst: &dyn Fn(&Image, u64) -> f64, sizes: &[(usize, usize)]| {
        let mut value: f64 = 0.0;
        for (idx, &(n1, n2)) in sizes.iter().enumerate() {
            let x = Image::zeros(n1, n2).expect("selfcheck sizes are at least 2x2");
            value = value.max(worst(&x, opts.seed + idx as u64));
        }
        report.adjoints.push(Check { name, value, tol: ADJOINT_TOL });
    };
    let t = opts.trials;
    let sizes = opts.sizes.as_slice();

    adj("D2".into(), &|x, s| random_adjoint_residual(&Difference::<2>, x, &Field::<2>::zeros_on(x), t, s), sizes);
    adj("D4".into(), &|x, s| random_adjoint_residual(&Difference::<4>, x, &Field::<4>::zeros_on(x), t, s), sizes);
    adj("upwind (signed)".into(), &|x, s| random_adjoint_residual(&UpwindDifference, x, &Field::<4>::zeros_on(x), t, s), sizes);

    for stencil in Stencil::ALL {
        for star in Star::ALL {
            let factor = match opts.perturb {
                Some(eps) if star == Star::Center && stencil == Stencil::AsPrinted => 1.0 + eps,
                _ => 1.0,
            };
            let op = ScaledAdjoint { op: Interp::<4>::with_stencil(star, stencil), factor };
            adj(
                format!("L_{star} [{stencil}]"),
                &|x, s| {
                    let f = Field::<4>::zeros_on(x);
                    random_adjoint_residual(&op, &f, &f, t, s)
                },
                sizes,
            );
        }
    }
    for star in [Star::UpDown, Star::LeftRight, Star::Center] {
        let op = Interp::<2>::new(star);
        adj(
            format!("L_{star} [2-channel]"),
            &|x, s| {
                let f = Field::<2>::zeros_on(x);
                random_adjoint_residual(&op, &f, &f, t, s)
            },
            sizes,
        );
    }

    for stencil in Stencil::ALL {
        let system = InterpSystem::four_direction_with(stencil);
        let big = system.big();
        adj(
            format!("big L [{stencil}]"),
            &|x, s| random_adjoint_residual(&big, &Lifted::<4>::zeros_on(x), &Stacked::<4>::zeros_on(x, 4), t, s),
            sizes,
        );
        let k = ConstraintOp::new(&system);
        adj(
            format!("constraint [{stencil}]"),
            &|x, s| {
                let p = SplitPrimal { x: x.clone(), v: Stacked::<4>::zeros_on(x, 4) };
                random_adjoint_residual(&k, &p, &Lifted::<4>::zeros_on(x), t, s)
            },
            sizes,
        );
    }
    let condat = InterpSystem::condat();
    let big2 = condat.big();
    adj(
        "big L [2-channel]".into(),
        &|x, s| random_adjoint_residual(&big2, &Lifted::<2>::zeros_on(x), &Stacked::<2>::zeros_on(x, 3), t, s),
        sizes,
    );
    let k2 = ConstraintOp::new(&condat);
    adj(
        "constraint [2-channel]".into(),
        &|x, s| {
            let p = SplitPrimal { x: x.clone(), v: Stacked::<2>::zeros_on(x, 3) };
            random_adjoint_residual(&k2, &p, &Lifted::<2>::zeros_on(x), t, s)
        },
        sizes,
    );

    for m in [2usize, 4] {
        let down_sizes: Vec<(usize, usize)> = [(4, 4), (8, 12), (16, 8), (64, 64)]
            .into_iter()
            .filter(|&(a, b)| a % m == 0 && b % m == 0 && a / m >= 2 && b / m >= 2)
            .collect();
        adj(
            format!("downscale m={m}"),
            &|x, s| {
                let op = DownscaleOp::new(m, x.n1(), x.n2()).expect("filtered sizes are divisible");
                let y = Image::zeros(x.n1() / m, x.n2() / m).expect("filtered sizes are >= 2");
                random_adjoint_residual(&op, x, &y, t, s)
            },
            &down_sizes,
        );
    }

    report.moreau.push(moreau_check::<2>(opts.seed));
    report.moreau.push(moreau_check::<4>(opts.seed + 1));
    report.formulas = published_formula_checks(opts.seed);
    report
}

/// `prox_{g |.|}(v) + g P_B(v / g) = v` for the per-pixel group norm.
fn moreau_check<const C: usize>(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for gamma in [0.05, 0.5, 1.0, 3.0] {
        let mut v = Field::<C>::zeros(16, 16).expect("fixed size");
        v.randomize(&mut rng);
        v.scale(2.0);
        let p = group_soft_threshold(&v, gamma).expect("gamma is positive");
        let mut q = project_unit_ball(&v.scaled(1.0 / gamma));
        q.scale(gamma);
        for ((a, b), c) in p.pixels().iter().zip(q.pixels()).zip(v.pixels()) {
            for k in 0..C {
                worst = worst.max((a[k] + b[k] - c[k]).abs());
            }
        }
    }
    Check {
        name: format!("group norm, {C} channels"),
        value: worst,
        tol: MOREAU_TOL,
    }
}

const FORMULA_N: usize = 8;

fn published_formula_checks(seed: u64) -> Vec<FormulaCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Image::zeros(FORMULA_N, FORMULA_N).expect("fixed size");
    let mut v = Stacked::<4>::zeros_on(&x, 4);
    v.randomize(&mut rng);
    let mut u = Field::<4>::zeros_on(&x);
    u.randomize(&mut rng);

    let mech = InterpSystem::four_direction().big().adjoint(&v);
    let d_star = Difference::<4>::transpose(&u);

    // v[star][channel] at (i + di, j + dj); stars in the order
    // updown, leftright, center, plus
    let at = |s: usize, k: usize, i: usize, j: usize, di: isize, dj: isize| {
        v.v[s].get((i as isize + di) as usize, (j as isize + dj) as usize)[k]
    };
    let al = |i: usize, j: usize, di: isize, dj: isize| {
        v.alpha.get((i as isize + di) as usize, (j as isize + dj) as usize)
    };
    let uu = |k: usize, i: usize, j: usize, di: isize, dj: isize| {
        u.get((i as isize + di) as usize, (j as isize + dj) as usize)[k]
    };
    const UD: usize = 0;
    const LR: usize = 1;
    const CE: usize = 2;
    const PL: usize = 3;

    let u1 = |i, j| {
        at(UD, 0, i, j, 0, 0)
            + 0.25 * (at(LR, 0, i, j, 0, 0) + at(LR, 0, i, j, 1, 0) + at(LR, 0, i, j, 0, -1) + at(LR, 0, i, j, 1, -1))
            + 0.5 * (at(CE, 0, i, j, 0, 0) + at(CE, 0, i, j, 1, 0))
            + 0.5 * (at(PL, 0, i, j, 0, 0) + at(PL, 0, i, j, 0, -1))
            + (al(i, j, 1, 0) - al(i, j, 0, 0))
    };
    let u2 = |i, j| {
        0.25 * (at(UD, 1, i, j, 0, 0) + at(UD, 1, i, j, 0, 1) + at(UD, 1, i, j, -1, 0) + at(UD, 1, i, j, -1, 1))
            + at(LR, 1, i, j, 0, 0)
            + 0.5 * (at(CE, 1, i, j, 0, 0) + at(CE, 1, i, j, 0, 1))
            + 0.5 * (at(PL, 1, i, j, 0, 0) + at(PL, 0, i, j, -1, 0))
            + (al(i, j, 0, 1) - al(i, j, 0, 0))
    };
    let u3 = |i, j| {
        0.5 * (at(UD, 2, i, j, 0, 0) + at(UD, 2, i, j, 1, 0))
            + 0.5 * (at(LR, 2, i, j, 0, 0) + at(LR, 2, i, j, 0, 1))
            + at(PL, 2, i, j, 0, 0)
            + 0.25 * (at(CE, 2, i, j, 0, 0) + at(CE, 2, i, j, 0, 1) + at(CE, 2, i, j, 1, 0) + at(CE, 2, i, j, 1, 1))
            + (al(i, j, 1, 1) - al(i, j, 0, 0))
    };
    let u4 = |i, j| {
        0.5 * (at(UD, 3, i, j, 0, 0) + at(UD, 3, i, j, 0, -1))
            + 0.5 * (at(LR, 3, i, j, 0, -1) + at(LR, 3, i, j, 1, -1))
            + at(PL, 3, i, j, 0, -1)
            + 0.25 * (at(CE, 3, i, j, 0, 0) + at(CE, 3, i, j, 1, 0) + at(CE, 3, i, j, 0, -1) + at(CE, 3, i, j, 1, -1))
            + (al(i, j, 1, 1) - al(i, j, 0, 0))
    };
    let s = |i, j| -al(i, j, 0, 0);
    let dstar = |i, j| {
        (uu(0, i, j, -1, 0) - uu(0, i, j, 0, 0))
            + (uu(1, i, j, -1, -1) - uu(1, i, j, 0, 0))
            + (uu(2, i, j, -1, -1) - uu(2, i, j, 0, 0))
            + (uu(2, i, j, -1, -1) - uu(2, i, j, 0, 0))
    };

    let interior_diff = |published: &dyn Fn(usize, usize) -> f64, mechanical: &dyn Fn(usize, usize) -> f64| {
        let mut worst: f64 = 0.0;
        for i in 1..FORMULA_N - 1 {
            for j in 1..FORMULA_N - 1 {
                worst = worst.max((published(i, j) - mechanical(i, j)).abs());
            }
        }
        worst
    };

    vec![
        FormulaCheck {
            name: "D* (four-direction)",
            max_abs_diff: interior_diff(&dstar, &|i, j| d_star.get(i, j)),
            note: "second bracket reads u2(n1-1,n2-1) instead of u2(n1,n2-1); the u4 bracket repeats u3",
        },
        FormulaCheck {
            name: "big L*: u1*",
            max_abs_diff: interior_diff(&u1, &|i, j| mech.u.get(i, j)[0]),
            note: "",
        },
        FormulaCheck {
            name: "big L*: u2*",
            max_abs_diff: interior_diff(&u2, &|i, j| mech.u.get(i, j)[1]),
            note: "corner term reads channel 1 (v_plus^1(n1-1,n2)) where channel 2 is needed",
        },
        FormulaCheck {
            name: "big L*: u3*",
            max_abs_diff: interior_diff(&u3, &|i, j| mech.u.get(i, j)[2]),
            note: "",
        },
        FormulaCheck {
            name: "big L*: u4*",
            max_abs_diff: interior_diff(&u4, &|i, j| mech.u.get(i, j)[3]),
            note: "alpha bracket copies u3* (alpha(n1+1,n2+1)); the transpose of the anti-diagonal difference needs alpha(n1-1,n2+1)",
        },
        FormulaCheck {
            name: "big L*: s*",
            max_abs_diff: interior_diff(&s, &|i, j| mech.s.get(i, j)),
            note: "",
        },
    ]
}
