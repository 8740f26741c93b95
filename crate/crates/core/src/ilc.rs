//! Iterative learning control as a repetitive process.
//!
//! The update `u_(k+1)(t) = Q(t) u_k(t) + l(e_k(t), t)` turns plant, reference
//! and update law into a process whose pass-to-pass carried vector is
//! `(e_k, u_k)`. Linearizing that process gives the feedthrough
//! `[D; I] [L, Q]`, whose spectral radius equals `rho(Q + L D)`; the learning
//! loop converges locally when it stays below one along the reference.
//!
//! For plants of relative degree above zero the error fed to `l` comes from a
//! learning output `psi(x, u, t)` (for instance the second derivative of the
//! output) instead of `y` itself.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{run_drp_with, BoundarySpec, RunOptions, RunRecord};
use crate::error::{DrpError, Result};
use crate::linearize::finite_difference_jacobians;
use crate::ltv::{spectral_radius, StabilityCertificate, Verdict};
use crate::pass::{integrate_pass, simulate_pass, Dynamics, DrpSystem};
use crate::signal::{Signal, TimeGrid, VectorSequence};
use crate::systems::{van_der_pol_plant, vdp_damping};

type VecFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;
type MatFn = dyn Fn(f64) -> DMatrix<f64> + Send + Sync;
type OutputFn = dyn Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync;
type OutputJacFn = dyn Fn(&[f64], &[f64], f64) -> DMatrix<f64> + Send + Sync;

/// Static (in time) update `l(e, t)` with `l(0, t) = 0`.
#[derive(Clone)]
pub struct UpdateLaw {
    dim: usize,
    law: Arc<VecFn>,
    gain: Option<Arc<MatFn>>,
}

impl UpdateLaw {
    pub fn new(dim: usize, law: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        UpdateLaw {
            dim,
            law: Arc::new(law),
            gain: None,
        }
    }

    /// `l(e, t) = gain * e`.
    pub fn linear(gain: DMatrix<f64>) -> Self {
        let g = gain.clone();
        UpdateLaw {
            dim: gain.nrows(),
            law: Arc::new(move |e, _, out| {
                let v = &g * DVector::from_column_slice(e);
                out.copy_from_slice(v.as_slice());
            }),
            gain: Some(Arc::new(move |_| gain.clone())),
        }
    }

    /// Supplies `dl/de (0, t)` exactly.
    pub fn with_gain(mut self, gain: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.gain = Some(Arc::new(gain));
        self
    }

    pub fn apply(&self, e: &[f64], t: f64, out: &mut [f64]) {
        (self.law)(e, t, out)
    }

    /// `dl/de` at `e = 0`: exact when supplied, central differences otherwise.
    pub fn gain_at(&self, t: f64) -> DMatrix<f64> {
        if let Some(g) = &self.gain {
            return g(t);
        }
        let m = self.dim;
        let eps = 1e-6;
        let mut jac = DMatrix::zeros(m, m);
        let (mut plus, mut minus) = (vec![0.0; m], vec![0.0; m]);
        let mut e = vec![0.0; m];
        for j in 0..m {
            e[j] = eps;
            self.apply(&e, t, &mut plus);
            e[j] = -eps;
            self.apply(&e, t, &mut minus);
            e[j] = 0.0;
            for r in 0..m {
                jac[(r, j)] = (plus[r] - minus[r]) / (2.0 * eps);
            }
        }
        jac
    }
}

/// Learning output `psi(x, u, t)` and its reference `psi_des`.
#[derive(Clone)]
pub struct LearningOutput {
    map: Arc<OutputFn>,
    input_jacobian: Option<Arc<OutputJacFn>>,
    pub reference: Signal,
}

impl LearningOutput {
    pub fn new(
        map: impl Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync + 'static,
        reference: Signal,
    ) -> Self {
        LearningOutput {
            map: Arc::new(map),
            input_jacobian: None,
            reference,
        }
    }

    pub fn with_input_jacobian(
        mut self,
        jac: impl Fn(&[f64], &[f64], f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.input_jacobian = Some(Arc::new(jac));
        self
    }

    fn eval(&self, x: &[f64], u: &[f64], t: f64, out: &mut [f64]) {
        (self.map)(x, u, t, out)
    }

    fn input_jacobian_at(&self, x: &[f64], u: &[f64], t: f64) -> DMatrix<f64> {
        if let Some(j) = &self.input_jacobian {
            return j(x, u, t);
        }
        let m = u.len();
        let mut jac = DMatrix::zeros(m, m);
        let mut up = u.to_vec();
        let (mut plus, mut minus) = (vec![0.0; m], vec![0.0; m]);
        for j in 0..m {
            let eps = (1e-6 * u[j].abs()).max(1e-6);
            up[j] = u[j] + eps;
            self.eval(x, &up, t, &mut plus);
            up[j] = u[j] - eps;
            self.eval(x, &up, t, &mut minus);
            up[j] = u[j];
            for r in 0..m {
                jac[(r, j)] = (plus[r] - minus[r]) / (2.0 * eps);
            }
        }
        jac
    }
}

/// Plant, reference and learning law.
#[derive(Clone)]
pub struct IlcProblem {
    pub plant: DrpSystem,
    pub y_des: Signal,
    /// Known feedforward achieving `y_des` from `x_star0`.
    pub u_star: Option<Signal>,
    pub update: UpdateLaw,
    pub learning_output: Option<LearningOutput>,
    pub q_filter: Option<Arc<MatFn>>,
    pub x_star0: DVector<f64>,
    /// Input of pass 0.
    pub u0: Signal,
}

impl IlcProblem {
    pub fn new(plant: DrpSystem, y_des: Signal, update: UpdateLaw, x_star0: DVector<f64>) -> Self {
        let u0 = Signal::zeros(*plant.grid(), plant.io_dim());
        IlcProblem {
            plant,
            y_des,
            u_star: None,
            update,
            learning_output: None,
            q_filter: None,
            x_star0,
            u0,
        }
    }

    pub fn with_q_filter(mut self, q: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.q_filter = Some(Arc::new(q));
        self
    }

    fn validate(&self) -> Result<()> {
        let m = self.plant.io_dim();
        let grid = self.plant.grid();
        let sig_ok = |s: &Signal| s.dim() == m && s.grid() == grid;
        if !sig_ok(&self.y_des) || !sig_ok(&self.u0) || self.u_star.as_ref().is_some_and(|u| !sig_ok(u)) {
            return Err(DrpError::Dimension("reference signals must match the plant io dimension and grid".into()));
        }
        if self.learning_output.as_ref().is_some_and(|l| !sig_ok(&l.reference)) {
            return Err(DrpError::Dimension("learning reference must match the plant io dimension".into()));
        }
        if self.update.dim != m {
            return Err(DrpError::Dimension(format!("update law acts on {} errors, plant has {m}", self.update.dim)));
        }
        if self.x_star0.len() != self.plant.state_dim() {
            return Err(DrpError::Dimension("x_star0 does not match the plant state".into()));
        }
        let mut l0 = vec![0.0; m];
        let zero = vec![0.0; m];
        for t in grid.times() {
            self.update.apply(&zero, t, &mut l0);
            if l0.iter().any(|v| v.abs() > 1e-12) {
                return Err(DrpError::Numerical(format!("update law does not vanish at e = 0 (t = {t})")));
            }
        }
        Ok(())
    }

    fn carried_dim(&self) -> usize {
        let m = self.plant.io_dim();
        if self.learning_output.is_some() {
            3 * m
        } else {
            2 * m
        }
    }
}

/// Reference trajectory the shifted process is centred on.
struct Reference {
    x: Signal,
    u: Signal,
}

/// Pass dynamics of the learning loop. Carried vector: `(e, u)` plus, when a
/// learning output is used, the plain tracking error `y - y_des` as a third block.
struct IlcDynamics {
    plant: Arc<dyn Dynamics>,
    n: usize,
    m: usize,
    update: UpdateLaw,
    learning: Option<LearningOutput>,
    q_filter: Option<Arc<MatFn>>,
    y_des: Signal,
    shift: Option<Reference>,
}

impl IlcDynamics {
    fn from_problem(prob: &IlcProblem, shift: Option<Reference>) -> Self {
        IlcDynamics {
            plant: Arc::clone(prob.plant.dynamics()),
            n: prob.plant.state_dim(),
            m: prob.plant.io_dim(),
            update: prob.update.clone(),
            learning: prob.learning_output.clone(),
            q_filter: prob.q_filter.clone(),
            y_des: prob.y_des.clone(),
            shift,
        }
    }

    /// Absolute plant input of the next pass, `Q u_k + l(e_k)`.
    fn next_input(&self, v: &[f64], t: f64, u_ref: &[f64]) -> Vec<f64> {
        let m = self.m;
        let e = &v[..m];
        let mut uk: Vec<f64> = v[m..2 * m].to_vec();
        if self.shift.is_some() {
            for (a, b) in uk.iter_mut().zip(u_ref) {
                *a += b;
            }
        }
        let mut next = match &self.q_filter {
            Some(q) => (q(t) * DVector::from_column_slice(&uk)).as_slice().to_vec(),
            None => uk,
        };
        let mut l = vec![0.0; m];
        self.update.apply(e, t, &mut l);
        for (a, b) in next.iter_mut().zip(&l) {
            *a += b;
        }
        next
    }

    fn reference_at(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        match &self.shift {
            Some(r) => {
                let mut x = vec![0.0; self.n];
                let mut u = vec![0.0; self.m];
                r.x.value_at(t, &mut x);
                r.u.value_at(t, &mut u);
                (x, u)
            }
            None => (vec![0.0; self.n], vec![0.0; self.m]),
        }
    }
}

impl Dynamics for IlcDynamics {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn io_dim(&self) -> usize {
        if self.learning.is_some() {
            3 * self.m
        } else {
            2 * self.m
        }
    }

    fn field(&self, x: &[f64], v: &[f64], t: f64, dx: &mut [f64]) {
        let (xr, ur) = self.reference_at(t);
        let u = self.next_input(v, t, &ur);
        if self.shift.is_some() {
            let xa: Vec<f64> = x.iter().zip(&xr).map(|(a, b)| a + b).collect();
            self.plant.field(&xa, &u, t, dx);
            let mut base = vec![0.0; self.n];
            self.plant.field(&xr, &ur, t, &mut base);
            for (d, b) in dx.iter_mut().zip(&base) {
                *d -= b;
            }
        } else {
            self.plant.field(x, &u, t, dx);
        }
    }

    fn output(&self, x: &[f64], v: &[f64], t: f64, w: &mut [f64]) {
        let m = self.m;
        let (xr, ur) = self.reference_at(t);
        let u = self.next_input(v, t, &ur);
        let xa: Vec<f64> = if self.shift.is_some() {
            x.iter().zip(&xr).map(|(a, b)| a + b).collect()
        } else {
            x.to_vec()
        };

        let mut y = vec![0.0; m];
        self.plant.output(&xa, &u, t, &mut y);
        let mut y_ref = vec![0.0; m];
        if self.shift.is_some() {
            self.plant.output(&xr, &ur, t, &mut y_ref);
        } else {
            self.y_des.value_at(t, &mut y_ref);
        }
        let track: Vec<f64> = y.iter().zip(&y_ref).map(|(a, b)| a - b).collect();

        match &self.learning {
            Some(lo) => {
                let mut psi = vec![0.0; m];
                lo.eval(&xa, &u, t, &mut psi);
                let mut psi_ref = vec![0.0; m];
                if self.shift.is_some() {
                    lo.eval(&xr, &ur, t, &mut psi_ref);
                } else {
                    lo.reference.value_at(t, &mut psi_ref);
                }
                for r in 0..m {
                    w[r] = psi[r] - psi_ref[r];
                    w[2 * m + r] = track[r];
                }
            }
            None => w[..m].copy_from_slice(&track),
        }
        for r in 0..m {
            w[m + r] = u[r] - ur[r];
        }
    }
}

/// Trajectory of the plant from `x_star0` under `u`.
fn reference_trajectory(prob: &IlcProblem, u: &Signal) -> Result<Signal> {
    Ok(integrate_pass(&prob.plant, &prob.x_star0, u)?.state)
}

/// The learning loop as a process in coordinates shifted to the reference
/// `(x*, u*)`; requires `u_star`. With a Q-filter other than the identity the
/// origin is an equilibrium only when `u* = 0`.
pub fn compose_ilc(prob: &IlcProblem) -> Result<DrpSystem> {
    prob.validate()?;
    let u_star = prob
        .u_star
        .clone()
        .ok_or_else(|| DrpError::Dimension("shifted composition needs u_star".into()))?;
    let x_star = reference_trajectory(prob, &u_star)?;
    let dynamics = IlcDynamics::from_problem(prob, Some(Reference { x: x_star, u: u_star }));
    Ok(DrpSystem::new(dynamics, *prob.plant.grid()).with_blowup_radius(prob.plant.blowup_radius()))
}

/// The learning loop in plant coordinates, as iterated by [`run_ilc`].
pub fn compose_ilc_absolute(prob: &IlcProblem) -> Result<DrpSystem> {
    prob.validate()?;
    let dynamics = IlcDynamics::from_problem(prob, None);
    Ok(DrpSystem::new(dynamics, *prob.plant.grid()).with_blowup_radius(prob.plant.blowup_radius()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlcCertificate {
    /// `rho(Q + L D)` per grid point.
    pub per_time_rho: Vec<f64>,
    /// `rho([D; I] [L, Q])` per grid point.
    pub block_form_rho: Vec<f64>,
    pub alpha: f64,
    pub argmax_time: f64,
    pub verdict: Verdict,
    pub max_discrepancy: f64,
}

/// Spectral certificate of the learning loop along the reference trajectory
/// (`u_star` when known, the pass-0 input otherwise).
pub fn ilc_certificate(prob: &IlcProblem) -> Result<IlcCertificate> {
    prob.validate()?;
    let m = prob.plant.io_dim();
    let nominal_u = prob.u_star.as_ref().unwrap_or(&prob.u0);
    let nominal_x = reference_trajectory(prob, nominal_u)?;
    let grid = *prob.plant.grid();
    let plant = prob.plant.dynamics().as_ref();

    let mut per_time = Vec::with_capacity(grid.len());
    let mut block = Vec::with_capacity(grid.len());
    for (i, t) in grid.times().enumerate() {
        let (x, u) = (nominal_x.sample(i), nominal_u.sample(i));
        let d = match &prob.learning_output {
            Some(lo) => lo.input_jacobian_at(x, u, t),
            None => plant
                .jacobians(x, u, t)
                .unwrap_or_else(|| finite_difference_jacobians(plant, x, u, t))
                .gu,
        };
        let l = prob.update.gain_at(t);
        let q = prob.q_filter.as_ref().map_or_else(|| DMatrix::identity(m, m), |q| q(t));
        if [&d, &l, &q].iter().any(|mat| mat.iter().any(|v| !v.is_finite())) {
            return Err(DrpError::Linearization {
                time: t,
                entry: "learning-loop Jacobian".into(),
            });
        }
        per_time.push(spectral_radius(&(&q + &l * &d))?);
        let mut left = DMatrix::zeros(2 * m, m);
        left.view_mut((0, 0), (m, m)).copy_from(&d);
        left.view_mut((m, 0), (m, m)).fill_with_identity();
        let mut right = DMatrix::zeros(m, 2 * m);
        right.view_mut((0, 0), (m, m)).copy_from(&l);
        right.view_mut((0, m), (m, m)).copy_from(&q);
        block.push(spectral_radius(&(left * right))?);
    }
    let summary = StabilityCertificate::from_profile(&grid, per_time.clone());
    let max_discrepancy = per_time
        .iter()
        .zip(&block)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(IlcCertificate {
        per_time_rho: per_time,
        block_form_rho: block,
        alpha: summary.alpha,
        argmax_time: summary.argmax_time,
        verdict: summary.verdict,
        max_discrepancy,
    })
}

/// `rho(I + L D)`, `rho(I + D L)` and `rho([D; I][L, I])` for one pair.
pub fn learning_spectra(d: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<(f64, f64, f64)> {
    let m = d.nrows();
    let eye = DMatrix::<f64>::identity(m, m);
    let ld = spectral_radius(&(&eye + l * d))?;
    let dl = spectral_radius(&(&eye + d * l))?;
    let mut left = DMatrix::zeros(2 * m, m);
    left.view_mut((0, 0), (m, m)).copy_from(d);
    left.view_mut((m, 0), (m, m)).fill_with_identity();
    let mut right = DMatrix::zeros(m, 2 * m);
    right.view_mut((0, 0), (m, m)).copy_from(l);
    right.view_mut((0, m), (m, m)).fill_with_identity();
    let block = spectral_radius(&(left * right))?;
    Ok((ld, dl, block))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlcRun {
    /// Norms are the tracking errors `|y_k - y_des|_inf`, `k = 0..=K`.
    pub record: RunRecord,
    /// Plant input of the last completed pass.
    pub final_input: Option<Signal>,
}

impl IlcRun {
    pub fn error_norms(&self) -> &[f64] {
        &self.record.output_norms
    }
}

/// Runs `passes` learning iterations after pass 0. Pass `j` starts from
/// `initial_states.items()[j]` (absolute plant states), so `passes + 1` are needed.
pub fn run_ilc(prob: &IlcProblem, passes: usize, initial_states: &VectorSequence) -> Result<IlcRun> {
    prob.validate()?;
    if passes == 0 {
        return Err(DrpError::domain("K", 0.0, "[1, inf)"));
    }
    if initial_states.len() < passes + 1 || initial_states.dim() != Some(prob.plant.state_dim()) {
        return Err(DrpError::Dimension(format!(
            "need {} plant initial states of dimension {}",
            passes + 1,
            prob.plant.state_dim()
        )));
    }
    let m = prob.plant.io_dim();
    let sys = compose_ilc_absolute(prob)?;

    // Pass 0 is a plain plant run with u0; its error seeds the carried vector.
    let pass0 = simulate_pass(&prob.plant, &initial_states.items()[0], &prob.u0)?;
    let track_block = if prob.learning_output.is_some() { 2 * m } else { 0 };
    if pass0.escaped() {
        return Ok(IlcRun {
            record: RunRecord {
                output_norms: vec![],
                state_norms: vec![],
                stored: vec![],
                escape_pass: Some(0),
                boundary_size: f64::NAN,
                fit: None,
            },
            final_input: None,
        });
    }
    let mut carried = Signal::zeros(*sys.grid(), prob.carried_dim());
    for (i, t) in sys.grid().times().enumerate() {
        let (x, u) = (pass0.state.sample(i), prob.u0.sample(i));
        let mut block = vec![0.0; m];
        let out = carried.sample_mut(i);
        out[m..2 * m].copy_from_slice(u);
        let e_track: Vec<f64> = pass0
            .output
            .sample(i)
            .iter()
            .zip(prob.y_des.sample(i))
            .map(|(a, b)| a - b)
            .collect();
        match &prob.learning_output {
            Some(lo) => {
                lo.eval(x, u, t, &mut block);
                for r in 0..m {
                    out[r] = block[r] - lo.reference.sample(i)[r];
                    out[2 * m + r] = e_track[r];
                }
            }
            None => out[..m].copy_from_slice(&e_track),
        }
    }

    let boundary = BoundarySpec::new(carried, initial_states.drop_front(1));
    let opts = RunOptions {
        keep_last: 1,
        norm_components: Some((track_block, m)),
        ..RunOptions::default()
    };
    let record = run_drp_with(&sys, &boundary, passes, &opts)?;
    let final_input = record.stored.last().map(|s| s.output.components(m, m));
    Ok(IlcRun { record, final_input })
}

/// Random initial states converging to `limit` at a rate drawn uniformly from
/// `lambda_range`, with e_lambda norm of the deviations equal to `e_lambda_norm`.
pub fn random_initial_states(
    limit: &DVector<f64>,
    lambda_range: (f64, f64),
    e_lambda_norm: f64,
    len: usize,
    seed: u64,
) -> Result<(f64, VectorSequence)> {
    let (lo, hi) = lambda_range;
    if !(0.0 < lo && lo <= hi && hi < 1.0) {
        return Err(DrpError::domain("lambda_range", lo, "0 < lo <= hi < 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = if lo == hi { lo } else { rng.random_range(lo..hi) };
    let seq = VectorSequence::e_lambda_random(limit.clone(), lambda, e_lambda_norm, len, &mut rng)?;
    Ok((lambda, seq))
}

/// Tracking `y_des = 0.1 cos(2 pi t)` with the actuated Van der Pol oscillator
/// through `u_(k+1) = u_k - (y''_k - y''_des)`, where `y'' = q2'` is read from
/// the model as a learning output.
pub fn van_der_pol_tracking(grid: TimeGrid) -> IlcProblem {
    let w = 2.0 * PI;
    let y_des = Signal::from_fn(grid, 1, |t, o| o[0] = 0.1 * (w * t).cos());
    let ydd_des = Signal::from_fn(grid, 1, |t, o| o[0] = -0.1 * w * w * (w * t).cos());
    // x* = (y_des, y_des'), u* = y_des'' + q1 - Xi (1 - q1^2) q2 along it.
    let u_star = Signal::from_fn(grid, 1, |t, o| {
        let q1 = 0.1 * (w * t).cos();
        let q2 = -0.1 * w * (w * t).sin();
        o[0] = -0.1 * w * w * (w * t).cos() + q1 - vdp_damping(t) * (1.0 - q1 * q1) * q2;
    });
    let psi = LearningOutput::new(
        |x, u, t, out| out[0] = -x[0] + vdp_damping(t) * (1.0 - x[0] * x[0]) * x[1] + u[0],
        ydd_des,
    )
    .with_input_jacobian(|_, _, _| DMatrix::from_element(1, 1, 1.0));
    let mut prob = IlcProblem::new(
        van_der_pol_plant(grid),
        y_des,
        UpdateLaw::linear(DMatrix::from_element(1, 1, -1.0)),
        DVector::from_vec(vec![0.1, 0.0]),
    );
    prob.u_star = Some(u_star);
    prob.learning_output = Some(psi);
    prob
}
