//! The single-pass operator: integrate `x' = f(x, u, t)` over one pass and read
//! the output `w = g(x, u, t)` on the grid.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{DrpError, Result};
use crate::signal::{max_abs, Signal, TimeGrid};

pub const DEFAULT_BLOWUP_RADIUS: f64 = 1e6;

/// Partial derivatives of `(f, g)` with respect to state and input.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobians {
    pub fx: DMatrix<f64>,
    pub fu: DMatrix<f64>,
    pub gx: DMatrix<f64>,
    pub gu: DMatrix<f64>,
}

impl Jacobians {
    pub fn max_abs_diff(&self, other: &Jacobians) -> f64 {
        [
            (&self.fx, &other.fx),
            (&self.fu, &other.fu),
            (&self.gx, &other.gx),
            (&self.gu, &other.gu),
        ]
        .iter()
        .map(|(a, b)| (*a - *b).amax())
        .fold(0.0, f64::max)
    }
}

/// The pair `(f, g)` defining one pass: state dimension `n`, input/output dimension `m`.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn io_dim(&self) -> usize;
    fn field(&self, x: &[f64], u: &[f64], t: f64, dx: &mut [f64]);
    fn output(&self, x: &[f64], u: &[f64], t: f64, w: &mut [f64]);

    /// Exact Jacobians, when the model knows them.
    fn jacobians(&self, _x: &[f64], _u: &[f64], _t: f64) -> Option<Jacobians> {
        None
    }
}

type FieldFn = dyn Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync;
type JacobianFn = dyn Fn(&[f64], &[f64], f64) -> Jacobians + Send + Sync;

/// [`Dynamics`] assembled from closures.
pub struct FnDynamics {
    n: usize,
    m: usize,
    field: Box<FieldFn>,
    output: Box<FieldFn>,
    jacobians: Option<Box<JacobianFn>>,
}

impl FnDynamics {
    pub fn new(
        n: usize,
        m: usize,
        field: impl Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync + 'static,
        output: impl Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        FnDynamics {
            n,
            m,
            field: Box::new(field),
            output: Box::new(output),
            jacobians: None,
        }
    }

    pub fn with_jacobians(
        mut self,
        jac: impl Fn(&[f64], &[f64], f64) -> Jacobians + Send + Sync + 'static,
    ) -> Self {
        self.jacobians = Some(Box::new(jac));
        self
    }
}

impl Dynamics for FnDynamics {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn io_dim(&self) -> usize {
        self.m
    }
    fn field(&self, x: &[f64], u: &[f64], t: f64, dx: &mut [f64]) {
        (self.field)(x, u, t, dx)
    }
    fn output(&self, x: &[f64], u: &[f64], t: f64, w: &mut [f64]) {
        (self.output)(x, u, t, w)
    }
    fn jacobians(&self, x: &[f64], u: &[f64], t: f64) -> Option<Jacobians> {
        self.jacobians.as_ref().map(|j| j(x, u, t))
    }
}

/// A differential repetitive process: pass dynamics on a fixed grid.
///
/// Pass `k + 1` is driven by the previous pass output `y_k` and starts from
/// its own boundary state `x_(k+1)(0)`.
#[derive(Clone)]
pub struct DrpSystem {
    dynamics: Arc<dyn Dynamics>,
    grid: TimeGrid,
    blowup_radius: f64,
}

impl fmt::Debug for DrpSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DrpSystem")
            .field("state_dim", &self.state_dim())
            .field("io_dim", &self.io_dim())
            .field("grid", &self.grid)
            .field("blowup_radius", &self.blowup_radius)
            .finish()
    }
}

impl DrpSystem {
    pub fn new(dynamics: impl Dynamics + 'static, grid: TimeGrid) -> Self {
        Self::from_arc(Arc::new(dynamics), grid)
    }

    pub fn from_arc(dynamics: Arc<dyn Dynamics>, grid: TimeGrid) -> Self {
        DrpSystem {
            dynamics,
            grid,
            blowup_radius: DEFAULT_BLOWUP_RADIUS,
        }
    }

    pub fn with_blowup_radius(mut self, radius: f64) -> Self {
        self.blowup_radius = radius;
        self
    }

    pub fn with_grid(&self, grid: TimeGrid) -> Self {
        DrpSystem {
            dynamics: Arc::clone(&self.dynamics),
            grid,
            blowup_radius: self.blowup_radius,
        }
    }

    pub fn dynamics(&self) -> &Arc<dyn Dynamics> {
        &self.dynamics
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn io_dim(&self) -> usize {
        self.dynamics.io_dim()
    }

    pub fn blowup_radius(&self) -> f64 {
        self.blowup_radius
    }

    /// Largest `|f(0,0,t)|`, `|g(0,0,t)|` over the grid.
    pub fn origin_defect(&self) -> f64 {
        let (n, m) = (self.state_dim(), self.io_dim());
        let zx = vec![0.0; n];
        let zu = vec![0.0; m];
        let mut dx = vec![0.0; n];
        let mut w = vec![0.0; m];
        self.grid
            .times()
            .map(|t| {
                self.dynamics.field(&zx, &zu, t, &mut dx);
                self.dynamics.output(&zx, &zu, t, &mut w);
                max_abs(&dx).max(max_abs(&w))
            })
            .fold(0.0, f64::max)
    }

    pub fn is_origin_anchored(&self) -> bool {
        self.origin_defect() <= 1e-12
    }

    /// The zero-initial-state pass map `y -> w`.
    pub fn zero_state_map(&self) -> impl Fn(&Signal) -> Result<Signal> + '_ {
        move |y: &Signal| {
            let x0 = DVector::zeros(self.state_dim());
            integrate_pass(self, &x0, y).map(|p| p.output)
        }
    }
}

/// State and output of one pass.
///
/// On escape, samples from `escape_index` onward are left at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PassResult {
    pub state: Signal,
    pub output: Signal,
    pub escape_index: Option<usize>,
}

impl PassResult {
    pub fn escaped(&self) -> bool {
        self.escape_index.is_some()
    }
}

fn check_input(sys: &DrpSystem, chi0: &DVector<f64>, u: &Signal) -> Result<()> {
    if chi0.len() != sys.state_dim() {
        return Err(DrpError::Dimension(format!(
            "initial state has dimension {}, system state dimension is {}",
            chi0.len(),
            sys.state_dim()
        )));
    }
    if u.dim() != sys.io_dim() || u.grid() != sys.grid() {
        return Err(DrpError::Dimension(format!(
            "input has dimension {} on {} points; system expects {} on {}",
            u.dim(),
            u.grid().len(),
            sys.io_dim(),
            sys.grid().len()
        )));
    }
    Ok(())
}

/// Runs one pass with classical RK4 at the grid step, reporting escape in the result.
///
/// Inputs at the RK4 half-steps are the average of adjacent samples.
pub fn simulate_pass(sys: &DrpSystem, chi0: &DVector<f64>, u: &Signal) -> Result<PassResult> {
    check_input(sys, chi0, u)?;
    let grid = *sys.grid();
    let dynamics = sys.dynamics.as_ref();
    let (n, m) = (sys.state_dim(), sys.io_dim());
    let h = grid.step();
    let radius = sys.blowup_radius;
    let bad = |v: &[f64]| v.iter().any(|x| !x.is_finite() || x.abs() > radius);

    let mut state = Signal::zeros(grid, n);
    let mut output = Signal::zeros(grid, m);

    let mut x = chi0.as_slice().to_vec();
    let mut w = vec![0.0; m];
    dynamics.output(&x, u.sample(0), 0.0, &mut w);
    if bad(&x) || bad(&w) {
        return Ok(PassResult {
            state,
            output,
            escape_index: Some(0),
        });
    }
    state.sample_mut(0).copy_from_slice(&x);
    output.sample_mut(0).copy_from_slice(&w);

    let mut um = vec![0.0; m];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    for i in 0..grid.intervals() {
        let t = grid.time(i);
        let t_mid = t + 0.5 * h;
        let t_next = grid.time(i + 1);
        u.midpoint_into(i, &mut um);

        dynamics.field(&x, u.sample(i), t, &mut k1);
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * h * k1[j];
        }
        dynamics.field(&tmp, &um, t_mid, &mut k2);
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * h * k2[j];
        }
        dynamics.field(&tmp, &um, t_mid, &mut k3);
        for j in 0..n {
            tmp[j] = x[j] + h * k3[j];
        }
        dynamics.field(&tmp, u.sample(i + 1), t_next, &mut k4);
        for j in 0..n {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        dynamics.output(&x, u.sample(i + 1), t_next, &mut w);
        if bad(&x) || bad(&w) {
            return Ok(PassResult {
                state,
                output,
                escape_index: Some(i + 1),
            });
        }
        state.sample_mut(i + 1).copy_from_slice(&x);
        output.sample_mut(i + 1).copy_from_slice(&w);
    }

    Ok(PassResult {
        state,
        output,
        escape_index: None,
    })
}

/// Runs one pass; escape is an error carrying the first bad grid index.
pub fn integrate_pass(sys: &DrpSystem, chi0: &DVector<f64>, u: &Signal) -> Result<PassResult> {
    let pass = simulate_pass(sys, chi0, u)?;
    match pass.escape_index {
        Some(index) => Err(DrpError::Escape {
            index,
            time: sys.grid().time(index),
        }),
        None => Ok(pass),
    }
}

/// Random polynomial of degree at most 3 per component, coefficients in `[-1, 1]`.
pub fn random_polynomial_signal<R: Rng + ?Sized>(grid: TimeGrid, dim: usize, rng: &mut R) -> Signal {
    let coeffs: Vec<[f64; 4]> = (0..dim)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..=1.0)))
        .collect();
    let horizon = grid.horizon();
    Signal::from_fn(grid, dim, |t, out| {
        let s = t / horizon;
        for (o, c) in out.iter_mut().zip(&coeffs) {
            *o = c[0] + s * (c[1] + s * (c[2] + s * c[3]));
        }
    })
}

/// A boundary pair `(chi0, u)` with `|chi0| + |u|_inf = radius`.
pub fn random_probe<R: Rng + ?Sized>(
    grid: TimeGrid,
    state_dim: usize,
    io_dim: usize,
    radius: f64,
    rng: &mut R,
) -> (DVector<f64>, Signal) {
    loop {
        let chi0 = DVector::from_fn(state_dim, |_, _| rng.random_range(-1.0..=1.0));
        let u = random_polynomial_signal(grid, io_dim, rng);
        let total = max_abs(chi0.as_slice()) + u.sup_norm();
        if total > 1e-9 {
            let scale = radius / total;
            return (chi0 * scale, u.scaled(scale));
        }
    }
}

/// Empirical local Lipschitz constants of the pass map.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate {
    pub state: f64,
    pub output: f64,
    /// `(state ratio, output ratio)` for every probe pair.
    pub ratios: Vec<(f64, f64)>,
}

/// Estimates the state and output Lipschitz constants of the pass operator on the
/// ball `|chi0| + |u|_inf < delta_bar` from all pairs among `probes` random points.
pub fn estimate_lipschitz(
    sys: &DrpSystem,
    delta_bar: f64,
    probes: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if !(delta_bar > 0.0 && delta_bar.is_finite()) {
        return Err(DrpError::domain("delta_bar", delta_bar, "(0, inf)"));
    }
    if probes < 2 {
        return Err(DrpError::domain("probes", probes as f64, "[2, inf)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<(DVector<f64>, Signal)> = (0..probes)
        .map(|_| {
            let r = delta_bar * rng.random_range(0.05..0.999);
            random_probe(*sys.grid(), sys.state_dim(), sys.io_dim(), r, &mut rng)
        })
        .collect();
    let passes: Vec<PassResult> = points
        .par_iter()
        .map(|(chi0, u)| integrate_pass(sys, chi0, u))
        .collect::<Result<_>>()?;

    let mut ratios = Vec::with_capacity(probes * (probes - 1) / 2);
    for i in 0..probes {
        for j in i + 1..probes {
            let du = points[i].1.sub(&points[j].1)?.sup_norm();
            let dx0 = max_abs((&points[i].0 - &points[j].0).as_slice());
            let denom = du + dx0;
            if denom <= 0.0 {
                continue;
            }
            let dstate = passes[i].state.sub(&passes[j].state)?.sup_norm();
            let dout = passes[i].output.sub(&passes[j].output)?.sup_norm();
            ratios.push((dstate / denom, dout / denom));
        }
    }
    let state = ratios.iter().map(|r| r.0).fold(0.0, f64::max);
    let output = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(LipschitzEstimate {
        state,
        output,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;

    fn scalar(
        field: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        output: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        grid: TimeGrid,
    ) -> DrpSystem {
        DrpSystem::new(
            FnDynamics::new(
                1,
                1,
                move |x, u, t, dx| dx[0] = field(x[0], u[0], t),
                move |x, u, t, w| w[0] = output(x[0], u[0], t),
            ),
            grid,
        )
    }

    #[test]
    fn identity_pass_through() {
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let sys = scalar(|_, _, _| 0.0, |_, u, _| u, grid);
        let u = Signal::from_fn(grid, 1, |t, o| o[0] = (3.0 * t).sin());
        let p = integrate_pass(&sys, &DVector::zeros(1), &u).unwrap();
        assert_eq!(p.output, u);
        assert_eq!(p.state.sup_norm(), 0.0);
    }

    #[test]
    fn exponential_growth_matches_analytic() {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let sys = scalar(|x, _, _| x, |x, _, _| x, grid);
        let p = integrate_pass(&sys, &DVector::from_element(1, 1.0), &Signal::zeros(grid, 1)).unwrap();
        let last = p.output.sample(1000)[0];
        assert!((last - std::f64::consts::E).abs() < 1e-9, "{last}");
    }

    #[test]
    fn rk4_order_on_exponential() {
        let err = |n: usize| {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let sys = scalar(|x, _, _| x, |x, _, _| x, grid);
            let p = integrate_pass(&sys, &DVector::from_element(1, 1.0), &Signal::zeros(grid, 1)).unwrap();
            let exact = Signal::from_fn(grid, 1, |t, o| o[0] = t.exp());
            p.output.sub(&exact).unwrap().sup_norm()
        };
        let order = (err(20) / err(40)).log2();
        assert!(order >= 3.5, "observed order {order}");
    }

    #[test]
    fn van_der_pol_unforced_stays_finite() {
        let grid = TimeGrid::new(2.0, 2000).unwrap();
        let sys = systems::van_der_pol_plant(grid);
        let p = simulate_pass(&sys, &DVector::from_vec(vec![0.1, 0.0]), &Signal::zeros(grid, 1)).unwrap();
        assert!(!p.escaped());
        assert!(p.state.sup_norm().is_finite());
    }

    #[test]
    fn escape_reports_first_bad_index() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        // x' = x^2 from 10 blows up at t = 0.1.
        let sys = scalar(|x, _, _| x * x, |x, _, _| x, grid);
        let err = integrate_pass(&sys, &DVector::from_element(1, 10.0), &Signal::zeros(grid, 1)).unwrap_err();
        match err {
            DrpError::Escape { index, .. } => assert!((8..=12).contains(&index), "{index}"),
            other => panic!("unexpected {other:?}"),
        }
        let p = simulate_pass(&sys, &DVector::from_element(1, 10.0), &Signal::zeros(grid, 1)).unwrap();
        assert!(p.escaped());
        assert!(p.state.as_slice().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn dimension_errors() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let sys = scalar(|x, _, _| x, |x, _, _| x, grid);
        assert!(integrate_pass(&sys, &DVector::zeros(2), &Signal::zeros(grid, 1)).is_err());
        assert!(integrate_pass(&sys, &DVector::zeros(1), &Signal::zeros(grid, 2)).is_err());
        let other = TimeGrid::new(1.0, 11).unwrap();
        assert!(integrate_pass(&sys, &DVector::zeros(1), &Signal::zeros(other, 1)).is_err());
    }

    #[test]
    fn determinism_and_zero_preservation() {
        let grid = TimeGrid::new(2.0, 400).unwrap();
        let sys = systems::van_der_pol_plant(grid);
        let u = Signal::from_fn(grid, 1, |t, o| o[0] = 0.01 * t.cos());
        let x0 = DVector::from_vec(vec![0.01, -0.02]);
        let a = integrate_pass(&sys, &x0, &u).unwrap();
        let b = integrate_pass(&sys, &x0, &u).unwrap();
        assert_eq!(a, b);
        let z = integrate_pass(&sys, &DVector::zeros(2), &Signal::zeros(grid, 1)).unwrap();
        assert_eq!(z.state.sup_norm(), 0.0);
        assert_eq!(z.output.sup_norm(), 0.0);
    }

    #[test]
    fn lipschitz_of_stable_lti_is_at_most_one() {
        let grid = TimeGrid::new(3.0, 300).unwrap();
        let sys = scalar(|x, u, _| -x + u, |x, _, _| x, grid);
        let est = estimate_lipschitz(&sys, 1.0, 12, 3).unwrap();
        assert!(est.state <= 1.0 + 1e-9, "{}", est.state);
        assert!(est.output <= 1.0 + 1e-9);
        assert!(est.ratios.iter().all(|r| r.0 <= est.state && r.1 <= est.output));
    }

    #[test]
    fn lipschitz_of_identity_map_is_one() {
        let grid = TimeGrid::new(1.0, 50).unwrap();
        // No state: the output ratio is exactly |du| / |du|.
        let sys = DrpSystem::new(FnDynamics::new(0, 1, |_, _, _, _| {}, |_, u, _, w| w[0] = u[0]), grid);
        let est = estimate_lipschitz(&sys, 0.5, 6, 11).unwrap();
        assert!((est.output - 1.0).abs() < 1e-12);
        assert!(estimate_lipschitz(&sys, 0.5, 1, 11).is_err());
    }
}
