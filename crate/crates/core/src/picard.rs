//! Picard iteration for `x' = f(x, t)` run as a repetitive process.
//!
//! Pass `k + 1` integrates `f` along the previous iterate, so the process is
//! `x_(k+1)' = f(y_k, t)`, `y_(k+1) = x_(k+1)`. Shifting by the true solution
//! `x*` puts the fixed point at the origin.

use std::sync::Arc;

use nalgebra::DVector;

use crate::engine::{run_drp_with, BoundarySpec, RunOptions, RunRecord};
use crate::error::{DrpError, Result};
use crate::pass::{integrate_pass, simulate_pass, Dynamics, DrpSystem, FnDynamics};
use crate::signal::{Signal, TimeGrid, VectorSequence};
use crate::systems::vdp_free_field;

type FieldFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;

/// Fine-grid refinement used for the reference solution.
pub const REFERENCE_REFINEMENT: usize = 10;

#[derive(Clone)]
pub struct PicardProblem {
    n: usize,
    field: Arc<FieldFn>,
    x_star0: DVector<f64>,
    grid: TimeGrid,
    reference: Signal,
    fine_reference: Signal,
}

impl std::fmt::Debug for PicardProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PicardProblem")
            .field("n", &self.n)
            .field("x_star0", &self.x_star0)
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

impl PicardProblem {
    /// Integrates the reference solution with RK4 on a grid ten times finer.
    pub fn new(
        field: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
        x_star0: DVector<f64>,
        grid: TimeGrid,
    ) -> Result<Self> {
        let n = x_star0.len();
        if n == 0 {
            return Err(DrpError::Dimension("Picard problem needs a nonempty state".into()));
        }
        let field: Arc<FieldFn> = Arc::new(field);
        let f = Arc::clone(&field);
        let ode = FnDynamics::new(n, 0, move |x, _, t, dx| f(x, t, dx), |_, _, _, _| {});
        let fine_grid = grid.refined(REFERENCE_REFINEMENT)?;
        let sys = DrpSystem::new(ode, fine_grid);
        let fine_reference = integrate_pass(&sys, &x_star0, &Signal::zeros(fine_grid, 0))?.state;
        let reference = fine_reference.downsample(REFERENCE_REFINEMENT)?;
        Ok(PicardProblem {
            n,
            field,
            x_star0,
            grid,
            reference,
            fine_reference,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn x_star0(&self) -> &DVector<f64> {
        &self.x_star0
    }

    /// `x*` on the problem grid.
    pub fn reference(&self) -> &Signal {
        &self.reference
    }

    pub fn field(&self, x: &[f64], t: f64, dx: &mut [f64]) {
        (self.field)(x, t, dx)
    }

    /// One unshifted iteration: `x0 + int_0^t f(y(s), s) ds` on the grid.
    pub fn step(&self, x0: &DVector<f64>, y: &Signal) -> Result<Signal> {
        let f = Arc::clone(&self.field);
        let n = self.n;
        let integrator = FnDynamics::new(n, n, move |_, u, t, dx| f(u, t, dx), |x, _, _, w| w.copy_from_slice(x));
        let sys = DrpSystem::new(integrator, self.grid).with_blowup_radius(f64::MAX);
        Ok(integrate_pass(&sys, x0, y)?.output)
    }
}

struct ShiftedPicard {
    n: usize,
    field: Arc<FieldFn>,
    fine_reference: Signal,
}

impl ShiftedPicard {
    fn reference_at(&self, t: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.fine_reference.value_at(t, &mut x);
        x
    }
}

impl Dynamics for ShiftedPicard {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn io_dim(&self) -> usize {
        self.n
    }

    fn field(&self, _x: &[f64], u: &[f64], t: f64, dx: &mut [f64]) {
        let xr = self.reference_at(t);
        let shifted: Vec<f64> = u.iter().zip(&xr).map(|(a, b)| a + b).collect();
        (self.field)(&shifted, t, dx);
        let mut base = vec![0.0; self.n];
        (self.field)(&xr, t, &mut base);
        for (d, b) in dx.iter_mut().zip(&base) {
            *d -= b;
        }
    }

    fn output(&self, x: &[f64], _u: &[f64], _t: f64, w: &mut [f64]) {
        w.copy_from_slice(x);
    }
}

/// The Picard process in coordinates centred on `x*`.
pub fn picard_drp(prob: &PicardProblem) -> DrpSystem {
    let dynamics = ShiftedPicard {
        n: prob.n,
        field: Arc::clone(&prob.field),
        fine_reference: prob.fine_reference.clone(),
    };
    DrpSystem::new(dynamics, prob.grid)
}

/// Runs `passes` iterations from the constant guess `x*(0)`. `x0_seq` holds the
/// absolute initial values of passes `1..=passes`. Norms are `|y_k - x*|_inf`.
pub fn run_picard(prob: &PicardProblem, passes: usize, x0_seq: &VectorSequence) -> Result<RunRecord> {
    let y0 = Signal::constant(prob.grid, prob.x_star0.as_slice());
    run_picard_from(prob, passes, x0_seq, &y0)
}

pub fn run_picard_from(
    prob: &PicardProblem,
    passes: usize,
    x0_seq: &VectorSequence,
    y0: &Signal,
) -> Result<RunRecord> {
    if y0.dim() != prob.n || y0.grid() != &prob.grid {
        return Err(DrpError::Dimension("initial iterate does not match the problem".into()));
    }
    let sys = picard_drp(prob);
    let boundary = BoundarySpec::new(y0.sub(&prob.reference)?, x0_seq.deviation(&prob.x_star0)?);
    let opts = RunOptions {
        keep_last: 1,
        ..RunOptions::default()
    };
    run_drp_with(&sys, &boundary, passes, &opts)
}

/// Per-pass ratios `e_(k+1) / e_k` while `e_k` stays above `floor`.
pub fn contraction_ratios(errors: &[f64], floor: f64) -> Vec<f64> {
    errors
        .windows(2)
        .take_while(|w| w[0] > floor)
        .map(|w| w[1] / w[0])
        .collect()
}

/// Bound `e T^(k+1) / (k+1)!` on the error of the `k`-th Picard iterate of `x' = x`, `x(0) = 1`.
pub fn exponential_envelope(horizon: f64, k: usize) -> f64 {
    let mut term = std::f64::consts::E;
    for j in 1..=k + 1 {
        term *= horizon / j as f64;
    }
    term
}

/// `x' = x`, `x(0) = 1`.
pub fn scalar_exponential(grid: TimeGrid) -> Result<PicardProblem> {
    PicardProblem::new(|x, _, dx| dx[0] = x[0], DVector::from_vec(vec![1.0]), grid)
}

/// Unforced Van der Pol oscillator with the time-varying damping.
pub fn van_der_pol_free(grid: TimeGrid, x0: DVector<f64>) -> Result<PicardProblem> {
    PicardProblem::new(vdp_free_field, x0, grid)
}

/// One pass of the shifted process from a zero initial state.
pub fn shifted_step(prob: &PicardProblem, y: &Signal) -> Result<Signal> {
    let sys = picard_drp(prob);
    Ok(simulate_pass(&sys, &DVector::zeros(prob.n), y)?.output)
}
