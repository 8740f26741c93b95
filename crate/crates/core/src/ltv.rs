//! Spectral analysis of linear time-varying processes.
//!
//! For `x' = A x + B y_k`, `y_(k+1) = C x + D y_k` the zero-initial-state
//! pass-to-pass operator `G0` has spectral radius `alpha = sup_t rho(D(t))`;
//! exponential stability in the pass index holds iff `alpha < 1`. This module
//! computes the certificate, a lifted (matrix) discretization of `G0` for
//! Gelfand-formula cross-checks, the superposition form of the solution under
//! nonzero initial states, and the resulting `(K_G, gamma_G)` envelope.

use nalgebra::{DMatrix, DVector, Schur};
use rayon::prelude::*;

use crate::error::{DrpError, Result};
use crate::linearize::LtvQuadruple;
use crate::pass::{integrate_pass, DrpSystem};
use crate::signal::{Signal, TimeGrid, VectorSequence};

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(DrpError::Dimension(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(DrpError::Numerical("non-finite matrix entry".into()));
    }
    match m.nrows() {
        0 => Ok(0.0),
        1 => Ok(m[(0, 0)].abs()),
        _ => {
            let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000)
                .ok_or_else(|| DrpError::Numerical("Schur iteration did not converge".into()))?;
            Ok(schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max))
        }
    }
}

/// Induced infinity norm: max absolute row sum.
pub fn induced_inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    CertifiedStable,
    NotCertified,
}

/// `alpha = max_i rho(D(t_i))` with its per-time profile.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    pub alpha: f64,
    pub per_time_rho: Vec<f64>,
    /// Grid index where the maximum is attained.
    pub argmax: usize,
    pub argmax_time: f64,
    pub margin: f64,
    pub verdict: Verdict,
}

impl StabilityCertificate {
    pub fn from_profile(grid: &TimeGrid, per_time_rho: Vec<f64>) -> Self {
        let (argmax, alpha) = per_time_rho
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, r)| if r > best.1 { (i, r) } else { best });
        StabilityCertificate {
            alpha,
            argmax,
            argmax_time: grid.time(argmax),
            margin: 1.0 - alpha,
            verdict: if alpha < 1.0 {
                Verdict::CertifiedStable
            } else {
                Verdict::NotCertified
            },
            per_time_rho,
        }
    }

    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::CertifiedStable
    }
}

pub fn alpha_certificate(quad: &LtvQuadruple) -> Result<StabilityCertificate> {
    let rho: Vec<f64> = quad.d().par_iter().map(spectral_radius).collect::<Result<_>>()?;
    Ok(StabilityCertificate::from_profile(quad.grid(), rho))
}

/// Matrix of `G0` on the hat-function basis of the grid.
///
/// Row/column `i*m + c` is component `c` at grid node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedOperator {
    pub grid: TimeGrid,
    pub io_dim: usize,
    pub matrix: DMatrix<f64>,
}

impl LiftedOperator {
    /// Largest entry above the block diagonal.
    pub fn causality_leakage(&self) -> f64 {
        let m = self.io_dim;
        let mut leak = 0.0_f64;
        for i in 0..self.grid.len() {
            for j in i + 1..self.grid.len() {
                for r in 0..m {
                    for c in 0..m {
                        leak = leak.max(self.matrix[(i * m + r, j * m + c)].abs());
                    }
                }
            }
        }
        leak
    }

    pub fn apply(&self, y: &Signal) -> Result<Signal> {
        if y.dim() != self.io_dim || y.grid() != &self.grid {
            return Err(DrpError::Dimension("signal does not match the lifted operator".into()));
        }
        let v = &self.matrix * DVector::from_column_slice(y.as_slice());
        Signal::from_samples(self.grid, self.io_dim, v.as_slice().to_vec())
    }

    pub fn norm(&self) -> f64 {
        induced_inf_norm(&self.matrix)
    }
}

/// Builds the lifted `G0` column by column from zero-state passes driven by
/// unit hat inputs.
pub fn build_lifted_g0(quad: &LtvQuadruple) -> Result<LiftedOperator> {
    let sys = quad.to_system().with_blowup_radius(f64::MAX);
    let grid = *quad.grid();
    let m = quad.io_dim();
    let size = grid.len() * m;
    let x0 = DVector::zeros(quad.state_dim());
    let columns: Vec<Vec<f64>> = (0..size)
        .into_par_iter()
        .map(|col| {
            let mut u = vec![0.0; size];
            u[col] = 1.0;
            let u = Signal::from_samples(grid, m, u)?;
            Ok(integrate_pass(&sys, &x0, &u)?.output.into_vec())
        })
        .collect::<Result<_>>()?;
    let matrix = DMatrix::from_fn(size, size, |r, c| columns[c][r]);
    Ok(LiftedOperator {
        grid,
        io_dim: m,
        matrix,
    })
}

/// `ln |G0^k|` for `k = 1..=k_max`, with `-inf` once a power vanishes.
///
/// Powers are renormalized each step so the log-norm stays representable.
pub fn power_log_norms(g0: &LiftedOperator, k_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max);
    let mut power = g0.matrix.clone();
    let mut log_scale = 0.0;
    for _ in 0..k_max {
        let n = induced_inf_norm(&power);
        if n == 0.0 {
            out.resize(k_max, f64::NEG_INFINITY);
            break;
        }
        if !n.is_finite() {
            out.resize(k_max, f64::INFINITY);
            break;
        }
        out.push(n.ln() + log_scale);
        log_scale += n.ln();
        power = &g0.matrix * (power / n);
    }
    out
}

/// Gelfand roots `|G0^k|^(1/k)`, `k = 1..=k_max`; the last entry estimates `rho(G0)`.
pub fn gelfand_estimate(g0: &LiftedOperator, k_max: usize) -> Result<Vec<f64>> {
    if k_max == 0 {
        return Err(DrpError::domain("k_max", 0.0, "[1, inf)"));
    }
    Ok(power_log_norms(g0, k_max)
        .iter()
        .enumerate()
        .map(|(i, ln)| (ln / (i + 1) as f64).exp())
        .collect())
}

/// Constants with `|G0^k| <= m_bar * zeta^k` on the fitted range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBound {
    pub m_bar: f64,
    pub zeta: f64,
}

impl PowerBound {
    /// Smallest `N >= 1` with `m_bar * zeta^N < 1`.
    pub fn contraction_horizon(&self) -> usize {
        let mut n = 1;
        while self.m_bar * self.zeta.powi(n as i32) >= 1.0 {
            n += 1;
        }
        n
    }
}

/// Fits `(m_bar, zeta)` to the power norms of a stable lifted operator: `zeta`
/// is the final Gelfand root (floored at `1e-3`), `m_bar` the smallest constant
/// `>= 1` making the envelope hold for every `k <= k_max`.
pub fn fit_power_bound(g0: &LiftedOperator, k_max: usize) -> Result<PowerBound> {
    let logs = power_log_norms(g0, k_max.max(1));
    let last = *logs.last().unwrap();
    let zeta = (last / logs.len() as f64).exp().max(1e-3);
    if zeta >= 1.0 {
        return Err(DrpError::domain("zeta", zeta, "(0, 1)"));
    }
    let m_bar = logs
        .iter()
        .enumerate()
        .map(|(i, ln)| (ln - (i + 1) as f64 * zeta.ln()).exp())
        .fold(1.0, f64::max);
    Ok(PowerBound { m_bar, zeta })
}

/// Output responses to unit initial states under zero input, one per state coordinate.
pub fn natural_response(quad: &LtvQuadruple) -> Result<Vec<Signal>> {
    let sys = quad.to_system().with_blowup_radius(f64::MAX);
    let n = quad.state_dim();
    let zero = Signal::zeros(*quad.grid(), quad.io_dim());
    (0..n)
        .map(|j| {
            let mut x0 = DVector::zeros(n);
            x0[j] = 1.0;
            Ok(integrate_pass(&sys, &x0, &zero)?.output)
        })
        .collect()
}

/// Induced norm of the natural response `H : R^n -> signals`.
pub fn natural_response_norm(quad: &LtvQuadruple) -> Result<f64> {
    let columns = natural_response(quad)?;
    let rows = quad.grid().len() * quad.io_dim();
    Ok((0..rows)
        .map(|r| columns.iter().map(|s| s.as_slice()[r].abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// `y_k = G0^k y0 + sum_{i=1..k} G0^(k-i) H x_i(0)` for `k = 0..=K`, each term
/// propagated separately with zero-state passes (`G0`) and zero-input passes (`H`).
pub fn superposition_solution(
    quad: &LtvQuadruple,
    y0: &Signal,
    x0_seq: &VectorSequence,
    passes: usize,
) -> Result<Vec<Signal>> {
    let n = quad.state_dim();
    if y0.dim() != quad.io_dim() || y0.grid() != quad.grid() {
        return Err(DrpError::Dimension("y0 does not match the quadruple".into()));
    }
    if x0_seq.len() < passes || x0_seq.dim().is_some_and(|d| d != n) {
        return Err(DrpError::Dimension(format!(
            "need {passes} initial states of dimension {n}, got {} of {:?}",
            x0_seq.len(),
            x0_seq.dim()
        )));
    }
    let sys: DrpSystem = quad.to_system().with_blowup_radius(f64::MAX);
    let zero_state = DVector::zeros(n);
    let zero_input = Signal::zeros(*quad.grid(), quad.io_dim());
    let g0 = |y: &Signal| integrate_pass(&sys, &zero_state, y).map(|p| p.output);

    // terms[i] holds G0^(k-i) z_i at the current k.
    let mut terms: Vec<Signal> = vec![y0.clone()];
    let mut out = vec![y0.clone()];
    for k in 1..=passes {
        for term in terms.iter_mut() {
            *term = g0(term)?;
        }
        terms.push(integrate_pass(&sys, &x0_seq.items()[k - 1], &zero_input)?.output);
        let mut y = Signal::zeros(*quad.grid(), quad.io_dim());
        for term in &terms {
            y = y.add(term)?;
        }
        out.push(y);
    }
    Ok(out)
}

/// `(K_G, gamma_G)` with `lambda_bar = max(zeta, lambda)`,
/// `K_G = m_bar max(1, 2 |H| / (1 - lambda_bar))` and `gamma_G = (1 + lambda_bar) / 2`.
pub fn kg_gamma_bound(m_bar: f64, zeta: f64, h_norm: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(m_bar >= 1.0 && m_bar.is_finite()) {
        return Err(DrpError::domain("m_bar", m_bar, "[1, inf)"));
    }
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(DrpError::domain("zeta", zeta, "(0, 1)"));
    }
    if !(h_norm >= 0.0 && h_norm.is_finite()) {
        return Err(DrpError::domain("h_norm", h_norm, "[0, inf)"));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(DrpError::domain("lambda", lambda, "(0, 1)"));
    }
    let lambda_bar = zeta.max(lambda);
    let k_g = m_bar * (2.0 * h_norm / (1.0 - lambda_bar)).max(1.0);
    Ok((k_g, (1.0 + lambda_bar) / 2.0))
}
