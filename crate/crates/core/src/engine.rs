//! Multi-pass iteration, convergence-rate fitting and the constructive
//! Lyapunov check.

use std::collections::VecDeque;
use std::io::{self, Write};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DrpError, Result};
use crate::pass::{random_polynomial_signal, simulate_pass, DrpSystem};
use crate::signal::{SequenceClass, Signal, TimeGrid, VectorSequence};

/// Boundary data: the initial pass profile `y0` and the initial states
/// `x_1(0), x_2(0), ...` of subsequent passes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub y0: Signal,
    pub x0: VectorSequence,
}

impl BoundarySpec {
    pub fn new(y0: Signal, x0: VectorSequence) -> Self {
        BoundarySpec { y0, x0 }
    }

    pub fn zero(sys: &DrpSystem, passes: usize) -> Self {
        BoundarySpec {
            y0: Signal::zeros(*sys.grid(), sys.io_dim()),
            x0: VectorSequence::zeros(sys.state_dim(), passes),
        }
    }

    /// Rate the initial-state sequence was generated with; 1 when unknown.
    pub fn declared_lambda(&self) -> f64 {
        match self.x0.class() {
            SequenceClass::ExponentialLambda { lambda, .. } => *lambda,
            _ => 1.0,
        }
    }

    /// `|y0|_inf + |x(0)|_(e_lambda)`.
    pub fn size(&self, lambda: f64) -> Result<f64> {
        Ok(self.y0.sup_norm() + self.x0.e_lambda_norm(lambda)?)
    }
}

/// Outcome of a log-linear rate fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateFit {
    Geometric { k_hat: f64, gamma_hat: f64 },
    /// Exact zeros from pass `from_pass` on.
    Deadbeat { from_pass: usize },
}

impl RateFit {
    pub fn gamma(&self) -> f64 {
        match self {
            RateFit::Geometric { gamma_hat, .. } => *gamma_hat,
            RateFit::Deadbeat { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassSnapshot {
    pub k: usize,
    pub state: Signal,
    pub output: Signal,
}

/// Per-pass norms of a multi-pass run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// `|y_k|_inf` for `k = 0..=K` (or up to the escaped pass).
    pub output_norms: Vec<f64>,
    /// `|x_k|_inf`; the entry for `k = 0` is 0 since pass 0 is given, not simulated.
    pub state_norms: Vec<f64>,
    /// The last few passes, oldest first.
    pub stored: Vec<PassSnapshot>,
    pub escape_pass: Option<usize>,
    /// `|y0| + |x(0)|_(e_lambda)` at the boundary's declared rate.
    pub boundary_size: f64,
    pub fit: Option<RateFit>,
}

impl RunRecord {
    pub fn passes(&self) -> usize {
        self.output_norms.len().saturating_sub(1)
    }

    /// CSV with header `k,output_sup_norm,state_sup_norm`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,output_sup_norm,state_sup_norm")?;
        for (k, (y, x)) in self.output_norms.iter().zip(&self.state_norms).enumerate() {
            writeln!(w, "{k},{y:.16e},{x:.16e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// How many trailing passes to keep in [`RunRecord::stored`].
    pub keep_last: usize,
    /// Measure `|y_k|` on components `start..start+len` only.
    pub norm_components: Option<(usize, usize)>,
    pub tail_fraction: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            keep_last: 2,
            norm_components: None,
            tail_fraction: 0.5,
        }
    }
}

pub fn run_drp(sys: &DrpSystem, boundary: &BoundarySpec, passes: usize) -> Result<RunRecord> {
    run_drp_with(sys, boundary, passes, &RunOptions::default())
}

/// Iterates `passes` passes: pass `k + 1` is driven by `y_k` from state `x_(k+1)(0)`.
/// Escape stops the run and is recorded, not returned as an error.
pub fn run_drp_with(
    sys: &DrpSystem,
    boundary: &BoundarySpec,
    passes: usize,
    opts: &RunOptions,
) -> Result<RunRecord> {
    if boundary.x0.len() < passes {
        return Err(DrpError::Dimension(format!(
            "{passes} passes need {passes} initial states, got {}",
            boundary.x0.len()
        )));
    }
    if boundary.x0.dim().is_some_and(|d| d != sys.state_dim()) {
        return Err(DrpError::Dimension("initial states do not match the state dimension".into()));
    }
    let measure = |s: &Signal| match opts.norm_components {
        Some((start, len)) => s.components(start, len).sup_norm(),
        None => s.sup_norm(),
    };

    let mut output_norms = vec![measure(&boundary.y0)];
    let mut state_norms = vec![0.0];
    let mut stored = VecDeque::with_capacity(opts.keep_last + 1);
    let mut escape_pass = None;
    let mut y = boundary.y0.clone();

    for k in 0..passes {
        let pass = simulate_pass(sys, &boundary.x0.items()[k], &y)?;
        if pass.escaped() {
            escape_pass = Some(k + 1);
            break;
        }
        output_norms.push(measure(&pass.output));
        state_norms.push(pass.state.sup_norm());
        if opts.keep_last > 0 {
            if stored.len() == opts.keep_last {
                stored.pop_front();
            }
            stored.push_back(PassSnapshot {
                k: k + 1,
                state: pass.state,
                output: pass.output.clone(),
            });
        }
        y = pass.output;
    }

    let mut rec = RunRecord {
        output_norms,
        state_norms,
        stored: stored.into(),
        escape_pass,
        boundary_size: boundary.size(boundary.declared_lambda())?,
        fit: None,
    };
    rec.fit = estimate_rate(&rec, opts.tail_fraction).ok();
    Ok(rec)
}

/// Least-squares fit of `ln |y_k|` against `k` over the trailing `tail_fraction`
/// of the run: `gamma_hat = exp(slope)`, `k_hat = exp(intercept) / boundary size`.
pub fn estimate_rate(rec: &RunRecord, tail_fraction: f64) -> Result<RateFit> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(DrpError::domain("tail_fraction", tail_fraction, "(0, 1]"));
    }
    let norms = &rec.output_norms;
    if let Some(first_zero) = norms.iter().position(|&v| v <= 1e-300) {
        if norms[first_zero..].iter().all(|&v| v <= 1e-300) {
            return Ok(RateFit::Deadbeat { from_pass: first_zero });
        }
    }
    let count = ((norms.len() as f64 * tail_fraction).ceil() as usize).min(norms.len());
    if count < 5 {
        return Err(DrpError::Numerical(format!("rate fit needs 5 tail points, have {count}")));
    }
    let start = norms.len() - count;
    let pts: Vec<(f64, f64)> = norms[start..]
        .iter()
        .enumerate()
        .map(|(i, &v)| ((start + i) as f64, v))
        .collect();
    if pts.iter().any(|&(_, v)| !v.is_finite()) {
        return Err(DrpError::Numerical("non-finite norm in the fit window".into()));
    }
    if pts.iter().any(|&(_, v)| v <= 1e-300) {
        return Ok(RateFit::Deadbeat {
            from_pass: pts.iter().position(|&(_, v)| v <= 1e-300).unwrap() + start,
        });
    }
    let nf = pts.len() as f64;
    let mean_k = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_l = pts.iter().map(|p| p.1.ln()).sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(k, v) in &pts {
        sxy += (k - mean_k) * (v.ln() - mean_l);
        sxx += (k - mean_k) * (k - mean_k);
    }
    let slope = sxy / sxx;
    let intercept = mean_l - slope * mean_k;
    let scale = if rec.boundary_size > 0.0 { rec.boundary_size } else { 1.0 };
    Ok(RateFit::Geometric {
        k_hat: intercept.exp() / scale,
        gamma_hat: slope.exp(),
    })
}

/// True iff `|y_k| <= K(lambda) gamma(lambda)^k (|y0| + |x(0)|_(e_lambda))` for
/// every recorded pass.
pub fn check_exp_bound(
    rec: &RunRecord,
    boundary: &BoundarySpec,
    k_fn: impl Fn(f64) -> f64,
    gamma_fn: impl Fn(f64) -> f64,
    lambda: f64,
) -> bool {
    let Ok(size) = boundary.size(lambda) else {
        return false;
    };
    let (kk, gamma) = (k_fn(lambda), gamma_fn(lambda));
    rec.output_norms
        .iter()
        .enumerate()
        .all(|(k, &y)| y <= kk * gamma.powi(k as i32) * size * (1.0 + 1e-12))
}

/// `V(y) = sum_{i=0}^{N-1} |F0^i(y)|_inf` for a zero-initial-state pass map `F0`.
pub struct LyapunovFunctional<F> {
    pass_map: F,
    horizon: usize,
}

pub fn build_lyapunov_functional<F>(pass_map: F, horizon: usize) -> Result<LyapunovFunctional<F>>
where
    F: Fn(&Signal) -> Result<Signal>,
{
    if horizon == 0 {
        return Err(DrpError::domain("N", 0.0, "[1, inf)"));
    }
    Ok(LyapunovFunctional { pass_map, horizon })
}

impl<F> LyapunovFunctional<F>
where
    F: Fn(&Signal) -> Result<Signal>,
{
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn apply(&self, y: &Signal) -> Result<Signal> {
        (self.pass_map)(y)
    }

    pub fn evaluate(&self, y: &Signal) -> Result<f64> {
        let mut total = y.sup_norm();
        let mut cur = y.clone();
        for _ in 1..self.horizon {
            cur = (self.pass_map)(&cur)?;
            total += cur.sup_norm();
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovReport {
    /// `min V(y) / |y|`.
    pub c1: f64,
    /// `max V(y) / |y|`.
    pub c2: f64,
    /// `min (V(y) - V(F0 y)) / |y|`.
    pub c3: f64,
    pub passed: bool,
}

/// Random smooth-plus-rough sample: a cubic polynomial with 10% grid noise.
pub fn random_lyapunov_sample<R: Rng + ?Sized>(grid: TimeGrid, dim: usize, rng: &mut R) -> Signal {
    let poly = random_polynomial_signal(grid, dim, rng);
    let amp = 0.1 * poly.sup_norm().max(1e-12);
    let data: Vec<f64> = poly
        .as_slice()
        .iter()
        .map(|v| v + amp * rng.random_range(-1.0..=1.0))
        .collect();
    Signal::from_samples(grid, dim, data).expect("finite sample")
}

/// Estimates `c1, c2, c3` of `c1|y| <= V(y) <= c2|y|`, `V(F0 y) - V(y) <= -c3|y|`
/// over random samples with `|y|_inf` in `(0.1 radius, radius]`.
pub fn lyapunov_decrease_check<F>(
    v: &LyapunovFunctional<F>,
    grid: TimeGrid,
    dim: usize,
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<LyapunovReport>
where
    F: Fn(&Signal) -> Result<Signal>,
{
    if samples == 0 {
        return Err(DrpError::domain("samples", 0.0, "[1, inf)"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(DrpError::domain("radius", radius, "(0, inf)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut c1, mut c2, mut c3) = (f64::INFINITY, 0.0_f64, f64::INFINITY);
    for _ in 0..samples {
        let raw = random_lyapunov_sample(grid, dim, &mut rng);
        let target = radius * rng.random_range(0.1..=1.0);
        let y = raw.scaled(target / raw.sup_norm());
        let norm = y.sup_norm();
        let vy = v.evaluate(&y)?;
        let v_next = v.evaluate(&v.apply(&y)?)?;
        c1 = c1.min(vy / norm);
        c2 = c2.max(vy / norm);
        c3 = c3.min((vy - v_next) / norm);
    }
    Ok(LyapunovReport {
        c1,
        c2,
        c3,
        passed: c3 > 0.0 && c2 > c3,
    })
}

/// Boundary with `y0` and initial states scaled so that `|y0| + |x(0)|_(e_1) = size`.
pub fn scaled_boundary(y0_shape: &Signal, x0_shape: &VectorSequence, size: f64) -> Result<BoundarySpec> {
    let total = y0_shape.sup_norm() + x0_shape.sup_norm();
    if total <= 0.0 {
        return Err(DrpError::Numerical("boundary shape is identically zero".into()));
    }
    let s = size / total;
    let items: Vec<DVector<f64>> = x0_shape.items().iter().map(|v| v * s).collect();
    let class = match x0_shape.class() {
        SequenceClass::ExponentialLambda { lambda, norm_bound, limit } => SequenceClass::ExponentialLambda {
            lambda: *lambda,
            norm_bound: norm_bound * s,
            limit: limit * s,
        },
        other => other.clone(),
    };
    Ok(BoundarySpec {
        y0: y0_shape.scaled(s),
        x0: VectorSequence::with_class(items, class)?,
    })
}
