//! Model library: the actuated Van der Pol plant and the linear and
//! cubic-perturbed families used to exercise the stability certificate.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::Result;
use crate::linearize::LtvQuadruple;
use crate::pass::{Dynamics, DrpSystem, FnDynamics, Jacobians};
use crate::signal::TimeGrid;

/// Time-varying damping `4 + 0.5 sin(2 pi 10 t)`.
pub fn vdp_damping(t: f64) -> f64 {
    4.0 + 0.5 * (2.0 * PI * 10.0 * t).sin()
}

/// Unforced Van der Pol vector field with [`vdp_damping`].
pub fn vdp_free_field(x: &[f64], t: f64, dx: &mut [f64]) {
    let (q1, q2) = (x[0], x[1]);
    dx[0] = q2;
    dx[1] = -q1 + vdp_damping(t) * (1.0 - q1 * q1) * q2;
}

fn vdp_jacobians(x: &[f64], _u: &[f64], t: f64) -> Jacobians {
    let (q1, q2) = (x[0], x[1]);
    let xi = vdp_damping(t);
    Jacobians {
        fx: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0 - 2.0 * xi * q1 * q2, xi * (1.0 - q1 * q1)]),
        fu: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        gx: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        gu: DMatrix::zeros(1, 1),
    }
}

/// Actuated Van der Pol oscillator in normal form, `y = q1`.
pub fn van_der_pol_plant(grid: TimeGrid) -> DrpSystem {
    DrpSystem::new(
        FnDynamics::new(
            2,
            1,
            |x, u, t, dx| {
                vdp_free_field(x, t, dx);
                dx[1] += u[0];
            },
            |x, _, _, w| w[0] = x[0],
        )
        .with_jacobians(vdp_jacobians),
        grid,
    )
}

/// Memoryless scalar process `y_(k+1) = d y_k` (one inert state).
pub fn d_only(grid: TimeGrid, d: f64) -> Result<LtvQuadruple> {
    LtvQuadruple::constant(
        grid,
        DMatrix::zeros(1, 1),
        DMatrix::zeros(1, 1),
        DMatrix::zeros(1, 1),
        DMatrix::from_element(1, 1, d),
    )
}

/// Constant `(A, B, C, D)`.
pub fn lti(grid: TimeGrid, a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<LtvQuadruple> {
    LtvQuadruple::constant(grid, a, b, c, d)
}

/// Smooth random LTV quadruple: each matrix is `M0 + M1 sin(2 pi t / T)` with
/// entries of `A` in `[-1, 1]`, `B`, `C` in `[-coupling, coupling]` and `D` in
/// `[-d_scale, d_scale]`.
pub fn random_ltv<R: Rng + ?Sized>(
    grid: TimeGrid,
    n: usize,
    m: usize,
    coupling: f64,
    d_scale: f64,
    rng: &mut R,
) -> Result<LtvQuadruple> {
    let mut draw = |r: usize, c: usize, s: f64| -> (DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::from_fn(r, c, |_, _| rng.random_range(-s..=s)),
            DMatrix::from_fn(r, c, |_, _| rng.random_range(-s..=s) * 0.5),
        )
    };
    let a = draw(n, n, 1.0);
    let b = draw(n, m, coupling);
    let c = draw(m, n, coupling);
    let d = draw(m, m, d_scale);
    let horizon = grid.horizon();
    LtvQuadruple::from_fn(grid, |t| {
        let s = (2.0 * PI * t / horizon).sin();
        (&a.0 + &a.1 * s, &b.0 + &b.1 * s, &c.0 + &c.1 * s, &d.0 + &d.1 * s)
    })
}

/// Constant-coefficient linear process plus componentwise cubic terms:
/// `f = A x + B u + kf .* x^3`, `g = C x + D u + kg .* u^3`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicFamily {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub kf: DVector<f64>,
    pub kg: DVector<f64>,
}

impl CubicFamily {
    pub fn system(&self, grid: TimeGrid) -> DrpSystem {
        DrpSystem::new(self.clone(), grid)
    }
}

impl Dynamics for CubicFamily {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn io_dim(&self) -> usize {
        self.d.nrows()
    }
    fn field(&self, x: &[f64], u: &[f64], _t: f64, dx: &mut [f64]) {
        for (r, out) in dx.iter_mut().enumerate() {
            let mut s = self.kf[r] * x[r].powi(3);
            for (j, xj) in x.iter().enumerate() {
                s += self.a[(r, j)] * xj;
            }
            for (j, uj) in u.iter().enumerate() {
                s += self.b[(r, j)] * uj;
            }
            *out = s;
        }
    }
    fn output(&self, x: &[f64], u: &[f64], _t: f64, w: &mut [f64]) {
        for (r, out) in w.iter_mut().enumerate() {
            let mut s = self.kg[r] * u[r].powi(3);
            for (j, xj) in x.iter().enumerate() {
                s += self.c[(r, j)] * xj;
            }
            for (j, uj) in u.iter().enumerate() {
                s += self.d[(r, j)] * uj;
            }
            *out = s;
        }
    }
    fn jacobians(&self, x: &[f64], u: &[f64], _t: f64) -> Option<Jacobians> {
        let mut fx = self.a.clone();
        for (r, xr) in x.iter().enumerate() {
            fx[(r, r)] += 3.0 * self.kf[r] * xr * xr;
        }
        let mut gu = self.d.clone();
        for (r, ur) in u.iter().enumerate() {
            gu[(r, r)] += 3.0 * self.kg[r] * ur * ur;
        }
        Some(Jacobians {
            fx,
            fu: self.b.clone(),
            gx: self.c.clone(),
            gu,
        })
    }
}

/// Cubic-perturbed family with a dominant feedthrough: diagonal `D` with entries
/// `d_diag`, weak coupling `B`, `C` of size `coupling`, and `A` possibly unstable
/// in time.
pub fn dominant_feedthrough_family<R: Rng + ?Sized>(
    d_diag: &[f64],
    n: usize,
    coupling: f64,
    rng: &mut R,
) -> CubicFamily {
    let m = d_diag.len();
    CubicFamily {
        a: DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..=1.0)),
        b: DMatrix::from_fn(n, m, |_, _| rng.random_range(-coupling..=coupling)),
        c: DMatrix::from_fn(m, n, |_, _| rng.random_range(-coupling..=coupling)),
        d: DMatrix::from_diagonal(&DVector::from_column_slice(d_diag)),
        kf: DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0)),
        kg: DVector::from_fn(m, |_, _| rng.random_range(-1.0..=1.0)),
    }
}
