//! Linearization at the origin and the nonlinear remainder.
//!
//! [`LtvQuadruple`] is the sampled `(A, B, C, D)` of a linear time-varying
//! process. Besides being the output of [`linearize_at_origin`], it is the
//! input of every spectral computation in [`crate::ltv`]; [`LtvQuadruple::to_system`]
//! turns it back into a pass system by interpolating the samples linearly in time.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{DrpError, Result};
use crate::pass::{integrate_pass, random_probe, Dynamics, DrpSystem, Jacobians};
use crate::signal::{max_abs, Signal, TimeGrid};

/// Sampled matrices of `x' = A(t) x + B(t) u`, `w = C(t) x + D(t) u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvQuadruple {
    grid: TimeGrid,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
    d: Vec<DMatrix<f64>>,
}

impl LtvQuadruple {
    pub fn new(
        grid: TimeGrid,
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        c: Vec<DMatrix<f64>>,
        d: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let len = grid.len();
        if [a.len(), b.len(), c.len(), d.len()].iter().any(|&l| l != len) {
            return Err(DrpError::Dimension(format!(
                "quadruple needs {len} samples of each matrix"
            )));
        }
        let n = a[0].nrows();
        let m = d[0].nrows();
        let shapes_ok = a.iter().all(|x| x.shape() == (n, n))
            && b.iter().all(|x| x.shape() == (n, m))
            && c.iter().all(|x| x.shape() == (m, n))
            && d.iter().all(|x| x.shape() == (m, m));
        if !shapes_ok {
            return Err(DrpError::Dimension(format!(
                "inconsistent quadruple shapes for n = {n}, m = {m}"
            )));
        }
        for (name, mats) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if let Some(i) = mats.iter().position(|x| x.iter().any(|v| !v.is_finite())) {
                return Err(DrpError::Linearization {
                    time: grid.time(i),
                    entry: name.to_string(),
                });
            }
        }
        Ok(LtvQuadruple { grid, a, b, c, d })
    }

    /// Samples `f(t) -> (A, B, C, D)` on the grid.
    pub fn from_fn(
        grid: TimeGrid,
        f: impl Fn(f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>),
    ) -> Result<Self> {
        let mut a = Vec::with_capacity(grid.len());
        let mut b = Vec::with_capacity(grid.len());
        let mut c = Vec::with_capacity(grid.len());
        let mut d = Vec::with_capacity(grid.len());
        for t in grid.times() {
            let (ai, bi, ci, di) = f(t);
            a.push(ai);
            b.push(bi);
            c.push(ci);
            d.push(di);
        }
        LtvQuadruple::new(grid, a, b, c, d)
    }

    pub fn constant(
        grid: TimeGrid,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self> {
        LtvQuadruple::from_fn(grid, |_| (a.clone(), b.clone(), c.clone(), d.clone()))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn state_dim(&self) -> usize {
        self.a[0].nrows()
    }
    pub fn io_dim(&self) -> usize {
        self.d[0].nrows()
    }
    pub fn a(&self) -> &[DMatrix<f64>] {
        &self.a
    }
    pub fn b(&self) -> &[DMatrix<f64>] {
        &self.b
    }
    pub fn c(&self) -> &[DMatrix<f64>] {
        &self.c
    }
    pub fn d(&self) -> &[DMatrix<f64>] {
        &self.d
    }

    /// Pass system whose coefficients interpolate the samples linearly in time.
    pub fn to_system(&self) -> DrpSystem {
        DrpSystem::new(LtvDynamics { quad: self.clone() }, self.grid)
    }
}

struct LtvDynamics {
    quad: LtvQuadruple,
}

impl LtvDynamics {
    /// Bracketing sample index and weight of the right neighbour.
    fn locate(&self, t: f64) -> (usize, f64) {
        let grid = &self.quad.grid;
        let s = (t / grid.step()).clamp(0.0, grid.intervals() as f64);
        let i = (s.floor() as usize).min(grid.intervals() - 1);
        (i, s - i as f64)
    }

    fn interp(mats: &[DMatrix<f64>], i: usize, w: f64) -> DMatrix<f64> {
        if w == 0.0 {
            mats[i].clone()
        } else {
            &mats[i] * (1.0 - w) + &mats[i + 1] * w
        }
    }

    /// `out = M(t) x + N(t) u` with both matrices interpolated at `(i, w)`.
    fn affine(
        m: &[DMatrix<f64>],
        nmat: &[DMatrix<f64>],
        i: usize,
        w: f64,
        x: &[f64],
        u: &[f64],
        out: &mut [f64],
    ) {
        out.fill(0.0);
        let mut acc = |mats: &[DMatrix<f64>], v: &[f64], weight: f64, idx: usize| {
            if weight == 0.0 {
                return;
            }
            let mat = &mats[idx];
            for r in 0..mat.nrows() {
                let mut s = 0.0;
                for (cidx, vc) in v.iter().enumerate() {
                    s += mat[(r, cidx)] * vc;
                }
                out[r] += weight * s;
            }
        };
        acc(m, x, 1.0 - w, i);
        acc(nmat, u, 1.0 - w, i);
        if w > 0.0 {
            acc(m, x, w, i + 1);
            acc(nmat, u, w, i + 1);
        }
    }
}

impl Dynamics for LtvDynamics {
    fn state_dim(&self) -> usize {
        self.quad.state_dim()
    }
    fn io_dim(&self) -> usize {
        self.quad.io_dim()
    }
    fn field(&self, x: &[f64], u: &[f64], t: f64, dx: &mut [f64]) {
        let (i, w) = self.locate(t);
        Self::affine(&self.quad.a, &self.quad.b, i, w, x, u, dx);
    }
    fn output(&self, x: &[f64], u: &[f64], t: f64, out: &mut [f64]) {
        let (i, w) = self.locate(t);
        Self::affine(&self.quad.c, &self.quad.d, i, w, x, u, out);
    }
    fn jacobians(&self, _x: &[f64], _u: &[f64], t: f64) -> Option<Jacobians> {
        let (i, w) = self.locate(t);
        Some(Jacobians {
            fx: Self::interp(&self.quad.a, i, w),
            fu: Self::interp(&self.quad.b, i, w),
            gx: Self::interp(&self.quad.c, i, w),
            gu: Self::interp(&self.quad.d, i, w),
        })
    }
}

/// Central-difference Jacobians of `(f, g)` at `(x, u, t)`.
///
/// Coordinate `j` is perturbed by `max(1e-6, 1e-6 |z_j|)`.
pub fn finite_difference_jacobians(dynamics: &dyn Dynamics, x: &[f64], u: &[f64], t: f64) -> Jacobians {
    let (n, m) = (dynamics.state_dim(), dynamics.io_dim());
    let mut fx = DMatrix::zeros(n, n);
    let mut fu = DMatrix::zeros(n, m);
    let mut gx = DMatrix::zeros(m, n);
    let mut gu = DMatrix::zeros(m, m);

    let mut xp = x.to_vec();
    let mut up = u.to_vec();
    let (mut f_plus, mut f_minus) = (vec![0.0; n], vec![0.0; n]);
    let (mut g_plus, mut g_minus) = (vec![0.0; m], vec![0.0; m]);

    for j in 0..n + m {
        let base = if j < n { x[j] } else { u[j - n] };
        let eps = (1e-6 * base.abs()).max(1e-6);
        let coord = |xp: &mut Vec<f64>, up: &mut Vec<f64>, v: f64| {
            if j < n {
                xp[j] = v
            } else {
                up[j - n] = v
            }
        };
        coord(&mut xp, &mut up, base + eps);
        dynamics.field(&xp, &up, t, &mut f_plus);
        dynamics.output(&xp, &up, t, &mut g_plus);
        coord(&mut xp, &mut up, base - eps);
        dynamics.field(&xp, &up, t, &mut f_minus);
        dynamics.output(&xp, &up, t, &mut g_minus);
        coord(&mut xp, &mut up, base);

        for r in 0..n {
            let v = (f_plus[r] - f_minus[r]) / (2.0 * eps);
            if j < n {
                fx[(r, j)] = v
            } else {
                fu[(r, j - n)] = v
            }
        }
        for r in 0..m {
            let v = (g_plus[r] - g_minus[r]) / (2.0 * eps);
            if j < n {
                gx[(r, j)] = v
            } else {
                gu[(r, j - n)] = v
            }
        }
    }
    Jacobians { fx, fu, gx, gu }
}

/// `(A, B, C, D)` of the process linearized at the origin, sampled on its grid.
///
/// Uses the model's own Jacobians when it supplies them, otherwise central differences.
pub fn linearize_at_origin(sys: &DrpSystem) -> Result<LtvQuadruple> {
    let dynamics = sys.dynamics().as_ref();
    let zx = vec![0.0; sys.state_dim()];
    let zu = vec![0.0; sys.io_dim()];
    let grid = *sys.grid();
    let jacs: Vec<Jacobians> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let t = grid.time(i);
            let j = dynamics
                .jacobians(&zx, &zu, t)
                .unwrap_or_else(|| finite_difference_jacobians(dynamics, &zx, &zu, t));
            for (name, mat) in [("df/dx", &j.fx), ("df/du", &j.fu), ("dg/dx", &j.gx), ("dg/du", &j.gu)] {
                if let Some(pos) = mat.iter().position(|v| !v.is_finite()) {
                    let (r, c) = (pos % mat.nrows().max(1), pos / mat.nrows().max(1));
                    return Err(DrpError::Linearization {
                        time: t,
                        entry: format!("{name}[{r},{c}]"),
                    });
                }
            }
            Ok(j)
        })
        .collect::<Result<_>>()?;

    let mut a = Vec::with_capacity(jacs.len());
    let mut b = Vec::with_capacity(jacs.len());
    let mut c = Vec::with_capacity(jacs.len());
    let mut d = Vec::with_capacity(jacs.len());
    for j in jacs {
        a.push(j.fx);
        b.push(j.fu);
        c.push(j.gx);
        d.push(j.gu);
    }
    LtvQuadruple::new(grid, a, b, c, d)
}

/// Pointwise remainder `(f - A x - B u, g - C x - D u)`, stacked as one signal of
/// dimension `n + m`.
pub fn residual_phi(sys: &DrpSystem, quad: &LtvQuadruple, chi: &Signal, u: &Signal) -> Result<Signal> {
    let (n, m) = (sys.state_dim(), sys.io_dim());
    if quad.state_dim() != n || quad.io_dim() != m || chi.dim() != n || u.dim() != m {
        return Err(DrpError::Dimension(format!(
            "residual needs state dim {n} and io dim {m}; got quadruple ({}, {}), signals ({}, {})",
            quad.state_dim(),
            quad.io_dim(),
            chi.dim(),
            u.dim()
        )));
    }
    if chi.grid() != quad.grid() || u.grid() != quad.grid() {
        return Err(DrpError::Dimension("residual signals must share the quadruple grid".into()));
    }
    let dynamics = sys.dynamics().as_ref();
    let grid = *quad.grid();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut phi = Signal::zeros(grid, n + m);
    for (i, t) in grid.times().enumerate() {
        let x = DVector::from_column_slice(chi.sample(i));
        let v = DVector::from_column_slice(u.sample(i));
        dynamics.field(x.as_slice(), v.as_slice(), t, &mut f);
        dynamics.output(x.as_slice(), v.as_slice(), t, &mut g);
        let lin_f = &quad.a[i] * &x + &quad.b[i] * &v;
        let lin_g = &quad.c[i] * &x + &quad.d[i] * &v;
        let out = phi.sample_mut(i);
        for r in 0..n {
            out[r] = f[r] - lin_f[r];
        }
        for r in 0..m {
            out[n + r] = g[r] - lin_g[r];
        }
    }
    Ok(phi)
}

/// One rung of the residual ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRow {
    pub scale: f64,
    /// Max over probes of `|phi|_inf / (|u|_inf + |chi0|)`.
    pub ratio: f64,
}

/// Residual-to-data ratio over a ladder of shrinking boundary sizes.
///
/// Each probe is a random pair `(chi0, u)` with `|chi0| + |u|_inf` equal to the rung's scale.
pub fn check_residual_asymptotics(
    sys: &DrpSystem,
    quad: &LtvQuadruple,
    scales: &[f64],
    probes: usize,
    seed: u64,
) -> Result<Vec<ResidualRow>> {
    if let Some(&bad) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(DrpError::domain("scale", bad, "(0, inf)"));
    }
    if scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(DrpError::Domain {
            name: "scales",
            value: f64::NAN,
            range: "strictly decreasing",
        });
    }
    if probes == 0 {
        return Err(DrpError::domain("probes", 0.0, "[1, inf)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scales
        .iter()
        .map(|&scale| {
            let seeds: Vec<u64> = (0..probes).map(|_| rng.random()).collect();
            let ratios: Vec<f64> = seeds
                .par_iter()
                .map(|&s| {
                    let mut r = ChaCha8Rng::seed_from_u64(s);
                    let (chi0, u) = random_probe(*sys.grid(), sys.state_dim(), sys.io_dim(), scale, &mut r);
                    let pass = integrate_pass(sys, &chi0, &u)?;
                    let phi = residual_phi(sys, quad, &pass.state, &u)?;
                    Ok(phi.sup_norm() / (u.sup_norm() + max_abs(chi0.as_slice())))
                })
                .collect::<Result<_>>()?;
            Ok(ResidualRow {
                scale,
                ratio: ratios.into_iter().fold(0.0, f64::max),
            })
        })
        .collect()
}

/// True when every rung's ratio is at most `slack` times the previous one.
pub fn ladder_non_increasing(rows: &[ResidualRow], slack: f64) -> bool {
    rows.windows(2).all(|w| w[1].ratio <= slack * w[0].ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pass::FnDynamics;
    use crate::systems;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 100).unwrap()
    }

    fn affine_scalar() -> DrpSystem {
        DrpSystem::new(
            FnDynamics::new(1, 1, |x, u, _, dx| dx[0] = -x[0] + u[0], |x, u, _, w| {
                w[0] = x[0] + 0.5 * u[0]
            }),
            grid(),
        )
    }

    #[test]
    fn already_linear_system() {
        let q = linearize_at_origin(&affine_scalar()).unwrap();
        for i in 0..q.grid().len() {
            assert!((q.a()[i][(0, 0)] + 1.0).abs() < 1e-9);
            assert!((q.b()[i][(0, 0)] - 1.0).abs() < 1e-9);
            assert!((q.c()[i][(0, 0)] - 1.0).abs() < 1e-9);
            assert!((q.d()[i][(0, 0)] - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn cubic_output_term_has_unit_feedthrough() {
        let sys = DrpSystem::new(
            FnDynamics::new(1, 1, |_, _, _, dx| dx[0] = 0.0, |_, u, _, w| w[0] = u[0] + u[0].powi(3)),
            grid(),
        );
        let q = linearize_at_origin(&sys).unwrap();
        assert!(q.d().iter().all(|d| (d[(0, 0)] - 1.0).abs() < 1e-10));
    }

    #[test]
    fn van_der_pol_linearization() {
        let g = TimeGrid::new(2.0, 200).unwrap();
        let sys = systems::van_der_pol_plant(g);
        let q = linearize_at_origin(&sys).unwrap();
        for (i, t) in g.times().enumerate() {
            let expect_a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, systems::vdp_damping(t)]);
            assert!((&q.a()[i] - expect_a).amax() < 1e-12);
            assert_eq!(q.b()[i], DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
        }
        // Hand-derived linear part agrees with central differences.
        let fd = finite_difference_jacobians(sys.dynamics().as_ref(), &[0.0, 0.0], &[0.0], 0.37);
        let exact = sys.dynamics().jacobians(&[0.0, 0.0], &[0.0], 0.37).unwrap();
        assert!(fd.max_abs_diff(&exact) < 1e-6);
    }

    #[test]
    fn residual_vanishes_for_linear_systems() {
        let sys = affine_scalar();
        let q = linearize_at_origin(&sys).unwrap();
        let u = Signal::from_fn(grid(), 1, |t, o| o[0] = t.sin());
        let pass = integrate_pass(&sys, &DVector::from_element(1, 0.3), &u).unwrap();
        let phi = residual_phi(&sys, &q, &pass.state, &u).unwrap();
        assert!(phi.sup_norm() <= 1e-9);
    }

    #[test]
    fn quadratic_output_residual_is_exact() {
        let sys = DrpSystem::new(
            FnDynamics::new(1, 1, |_, _, _, dx| dx[0] = 0.0, |_, u, _, w| w[0] = u[0] + u[0] * u[0]),
            grid(),
        );
        let q = linearize_at_origin(&sys).unwrap();
        let c = 0.01;
        let u = Signal::constant(grid(), &[c]);
        let phi = residual_phi(&sys, &q, &Signal::zeros(grid(), 1), &u).unwrap();
        for i in 0..grid().len() {
            assert!((phi.sample(i)[1] - c * c).abs() < 1e-12);
        }
        let rows = check_residual_asymptotics(&sys, &q, &[1e-1, 1e-2, 1e-3], 8, 5).unwrap();
        for r in &rows {
            assert!(r.ratio <= r.scale * (1.0 + 1e-6), "{r:?}");
            assert!(r.ratio >= 0.1 * r.scale, "{r:?}");
        }
    }

    #[test]
    fn van_der_pol_remainder_formula() {
        let g = TimeGrid::new(2.0, 200).unwrap();
        let sys = systems::van_der_pol_plant(g);
        let q = linearize_at_origin(&sys).unwrap();
        let chi = Signal::from_fn(g, 2, |t, o| {
            o[0] = 0.3 * t.cos();
            o[1] = -0.2 * (2.0 * t).sin();
        });
        let u = Signal::from_fn(g, 1, |t, o| o[0] = 0.1 * t);
        let phi = residual_phi(&sys, &q, &chi, &u).unwrap();
        for (i, t) in g.times().enumerate() {
            let (q1, q2) = (chi.sample(i)[0], chi.sample(i)[1]);
            let b2 = systems::vdp_damping(t) * (-q1 * q1 * q2);
            assert!(phi.sample(i)[0].abs() < 1e-12);
            assert!((phi.sample(i)[1] - b2).abs() < 1e-10);
            assert!(phi.sample(i)[2].abs() < 1e-12);
        }
    }

    #[test]
    fn residual_ladder_rejects_bad_scales() {
        let sys = affine_scalar();
        let q = linearize_at_origin(&sys).unwrap();
        assert!(check_residual_asymptotics(&sys, &q, &[1e-2, 1e-1], 2, 0).is_err());
        assert!(check_residual_asymptotics(&sys, &q, &[-1.0], 2, 0).is_err());
        let rows = check_residual_asymptotics(&sys, &q, &[1e-1, 1e-2], 4, 0).unwrap();
        assert!(rows.iter().all(|r| r.ratio < 1e-9));
    }

    #[test]
    fn ltv_system_interpolates_between_samples() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let q = LtvQuadruple::from_fn(g, |t| {
            (
                DMatrix::from_element(1, 1, t),
                DMatrix::zeros(1, 1),
                DMatrix::zeros(1, 1),
                DMatrix::from_element(1, 1, 2.0 * t),
            )
        })
        .unwrap();
        let sys = q.to_system();
        let mut out = [0.0];
        sys.dynamics().field(&[1.0], &[0.0], 0.125, &mut out);
        assert!((out[0] - 0.125).abs() < 1e-15);
        sys.dynamics().output(&[0.0], &[1.0], 1.0, &mut out);
        assert!((out[0] - 2.0).abs() < 1e-15);
    }
}
