//! Time grids, sampled signals and pass-indexed vector sequences.
//!
//! Every norm in the crate is the max-abs (infinity) norm: on vectors, on
//! sampled signals (max over samples) and, induced, on matrices (max abs row
//! sum). Sequences carry the exponential-weight norm
//! `sup_k lambda^-k |b_(k+1)|` used to measure how fast boundary data vanish.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{DrpError, Result};

/// Max-abs norm of a vector.
pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Uniform discretization `t_i = i * h`, `i = 0..=N`, of a pass `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, intervals: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(DrpError::Grid(format!("horizon must be positive, got {horizon}")));
        }
        if intervals == 0 {
            return Err(DrpError::Grid("at least one interval is required".into()));
        }
        Ok(TimeGrid { horizon, intervals })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of grid points, `N + 1`.
    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.intervals {
            self.horizon
        } else {
            i as f64 * self.step()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.time(i))
    }

    /// The same horizon with `factor` times as many intervals.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        TimeGrid::new(self.horizon, self.intervals * factor)
    }
}

/// A vector-valued trajectory sampled on a [`TimeGrid`].
///
/// Samples are stored row-major: sample `i` occupies `data[i*dim..(i+1)*dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    grid: TimeGrid,
    dim: usize,
    data: Vec<f64>,
}

impl Signal {
    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Signal {
            grid,
            dim,
            data: vec![0.0; grid.len() * dim],
        }
    }

    pub fn constant(grid: TimeGrid, value: &[f64]) -> Self {
        let mut data = Vec::with_capacity(grid.len() * value.len());
        for _ in 0..grid.len() {
            data.extend_from_slice(value);
        }
        Signal {
            grid,
            dim: value.len(),
            data,
        }
    }

    /// Samples `f(t, out)` at every grid point.
    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut s = Signal::zeros(grid, dim);
        for i in 0..grid.len() {
            let t = grid.time(i);
            f(t, s.sample_mut(i));
        }
        s
    }

    pub fn from_samples(grid: TimeGrid, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() * dim {
            return Err(DrpError::Dimension(format!(
                "expected {} samples of dimension {dim}, got {} values",
                grid.len(),
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(DrpError::Numerical(format!(
                "non-finite sample value at flat index {pos}"
            )));
        }
        Ok(Signal { grid, dim, data })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Linear interpolation halfway between samples `i` and `i + 1`.
    pub(crate) fn midpoint_into(&self, i: usize, out: &mut [f64]) {
        let a = self.sample(i);
        let b = self.sample(i + 1);
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = 0.5 * (x + y);
        }
    }

    /// Linear interpolation at time `t` (clamped to the horizon).
    pub fn value_at(&self, t: f64, out: &mut [f64]) {
        let s = (t / self.grid.step()).clamp(0.0, self.grid.intervals() as f64);
        let i = (s.floor() as usize).min(self.grid.intervals() - 1);
        let w = s - i as f64;
        let (a, b) = (self.sample(i), self.sample(i + 1));
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = if w == 0.0 { *x } else { (1.0 - w) * x + w * y };
        }
    }

    /// Max over samples of the max-abs vector norm.
    pub fn sup_norm(&self) -> f64 {
        max_abs(&self.data)
    }

    /// Scalar trajectory of one component.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.dim.max(1)).copied().collect()
    }

    /// Contiguous block of components `start..start+len` as a new signal.
    pub fn components(&self, start: usize, len: usize) -> Signal {
        let mut out = Signal::zeros(self.grid, len);
        for i in 0..self.grid.len() {
            out.sample_mut(i)
                .copy_from_slice(&self.sample(i)[start..start + len]);
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Signal {
        Signal {
            grid: self.grid,
            dim: self.dim,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    fn check_compatible(&self, other: &Signal) -> Result<()> {
        if self.dim != other.dim || self.grid != other.grid {
            return Err(DrpError::Dimension(format!(
                "signals differ: dim {} vs {}, {} vs {} grid points",
                self.dim,
                other.dim,
                self.grid.len(),
                other.grid.len()
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        self.check_compatible(other)?;
        Ok(Signal {
            grid: self.grid,
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        self.check_compatible(other)?;
        Ok(Signal {
            grid: self.grid,
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    /// Stacks two signals on the same grid component-wise.
    pub fn stack(&self, other: &Signal) -> Result<Signal> {
        if self.grid != other.grid {
            return Err(DrpError::Dimension("cannot stack signals on different grids".into()));
        }
        let dim = self.dim + other.dim;
        let mut data = Vec::with_capacity(self.grid.len() * dim);
        for i in 0..self.grid.len() {
            data.extend_from_slice(self.sample(i));
            data.extend_from_slice(other.sample(i));
        }
        Ok(Signal {
            grid: self.grid,
            dim,
            data,
        })
    }

    /// Every `factor`-th sample, landing on the grid with `intervals / factor` intervals.
    pub fn downsample(&self, factor: usize) -> Result<Signal> {
        if factor == 0 || self.grid.intervals() % factor != 0 {
            return Err(DrpError::Grid(format!(
                "cannot downsample {} intervals by {factor}",
                self.grid.intervals()
            )));
        }
        let grid = TimeGrid::new(self.grid.horizon(), self.grid.intervals() / factor)?;
        let mut out = Signal::zeros(grid, self.dim);
        for i in 0..grid.len() {
            out.sample_mut(i).copy_from_slice(self.sample(i * factor));
        }
        Ok(out)
    }
}

/// What is known about the infinite sequence a finite prefix stands for.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceClass {
    Arbitrary,
    /// Converges to `limit` (a `c0` sequence after subtracting the limit).
    Vanishing { limit: DVector<f64> },
    /// `|b_(k+1) - limit| <= norm_bound * lambda^k` for every generated item.
    ExponentialLambda {
        lambda: f64,
        norm_bound: f64,
        limit: DVector<f64>,
    },
}

/// Finite prefix `b_1, b_2, ...` of a sequence of vectors with a common dimension.
///
/// `items[k]` is `b_(k+1)`; for boundary data this is the initial state of pass `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSequence {
    items: Vec<DVector<f64>>,
    class: SequenceClass,
}

impl VectorSequence {
    pub fn new(items: Vec<DVector<f64>>) -> Result<Self> {
        if let Some(first) = items.first() {
            let dim = first.len();
            if let Some(bad) = items.iter().position(|v| v.len() != dim) {
                return Err(DrpError::Dimension(format!(
                    "item {bad} has dimension {}, expected {dim}",
                    items[bad].len()
                )));
            }
        }
        Ok(VectorSequence {
            items,
            class: SequenceClass::Arbitrary,
        })
    }

    /// Items with a caller-asserted generator class.
    pub fn with_class(items: Vec<DVector<f64>>, class: SequenceClass) -> Result<Self> {
        let mut seq = VectorSequence::new(items)?;
        seq.class = class;
        Ok(seq)
    }

    pub fn from_scalars(values: &[f64]) -> Self {
        VectorSequence {
            items: values.iter().map(|&x| DVector::from_element(1, x)).collect(),
            class: SequenceClass::Arbitrary,
        }
    }

    pub fn zeros(dim: usize, len: usize) -> Self {
        VectorSequence {
            items: vec![DVector::zeros(dim); len],
            class: SequenceClass::Vanishing {
                limit: DVector::zeros(dim),
            },
        }
    }

    pub fn constant(value: DVector<f64>, len: usize) -> Self {
        VectorSequence {
            items: vec![value; len],
            class: SequenceClass::Arbitrary,
        }
    }

    /// `b_(k+1) = limit + lambda^k * direction`.
    pub fn geometric(limit: DVector<f64>, direction: DVector<f64>, lambda: f64, len: usize) -> Result<Self> {
        check_lambda(lambda)?;
        let norm_bound = max_abs(direction.as_slice());
        let items = (0..len)
            .map(|k| &limit + &direction * lambda.powi(k as i32))
            .collect();
        Ok(VectorSequence {
            items,
            class: SequenceClass::ExponentialLambda {
                lambda,
                norm_bound,
                limit,
            },
        })
    }

    /// `b_(k+1) = limit + direction / (k + 1)`: converges, but slower than any geometric rate.
    pub fn harmonic(limit: DVector<f64>, direction: DVector<f64>, len: usize) -> Self {
        let items = (0..len).map(|k| &limit + &direction / (k as f64 + 1.0)).collect();
        VectorSequence {
            items,
            class: SequenceClass::Vanishing { limit },
        }
    }

    /// Random sequence converging to `limit` with `|b_(k+1) - limit| = norm_bound * lambda^k`.
    ///
    /// Each deviation points in a fresh direction drawn uniformly on the Euclidean
    /// unit sphere and rescaled to unit max-abs norm, so the e_lambda norm of the
    /// deviations is exactly `norm_bound`.
    pub fn e_lambda_random<R: Rng + ?Sized>(
        limit: DVector<f64>,
        lambda: f64,
        norm_bound: f64,
        len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        if !(norm_bound >= 0.0 && norm_bound.is_finite()) {
            return Err(DrpError::domain("norm_bound", norm_bound, "[0, inf)"));
        }
        let dim = limit.len();
        let items = (0..len)
            .map(|k| {
                let dir = random_unit_direction(dim, rng);
                &limit + dir * (norm_bound * lambda.powi(k as i32))
            })
            .collect();
        Ok(VectorSequence {
            items,
            class: SequenceClass::ExponentialLambda {
                lambda,
                norm_bound,
                limit,
            },
        })
    }

    pub fn items(&self) -> &[DVector<f64>] {
        &self.items
    }

    pub fn class(&self) -> &SequenceClass {
        &self.class
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.items.first().map(|v| v.len())
    }

    /// The tail `b_(kappa+1), b_(kappa+2), ...`.
    pub fn drop_front(&self, kappa: usize) -> Self {
        VectorSequence {
            items: self.items.iter().skip(kappa).cloned().collect(),
            class: SequenceClass::Arbitrary,
        }
    }

    /// Items minus `limit`; the generator class is re-centred at the origin.
    pub fn deviation(&self, limit: &DVector<f64>) -> Result<Self> {
        if self.dim().is_some_and(|d| d != limit.len()) {
            return Err(DrpError::Dimension(format!(
                "limit has dimension {}, sequence has {:?}",
                limit.len(),
                self.dim()
            )));
        }
        let class = match &self.class {
            SequenceClass::ExponentialLambda {
                lambda,
                norm_bound,
                limit: l,
            } if l == limit => SequenceClass::ExponentialLambda {
                lambda: *lambda,
                norm_bound: *norm_bound,
                limit: DVector::zeros(limit.len()),
            },
            SequenceClass::Vanishing { limit: l } if l == limit => SequenceClass::Vanishing {
                limit: DVector::zeros(limit.len()),
            },
            _ => SequenceClass::Arbitrary,
        };
        Ok(VectorSequence {
            items: self.items.iter().map(|v| v - limit).collect(),
            class,
        })
    }

    /// Largest item norm over the stored prefix (the e_1 norm).
    pub fn sup_norm(&self) -> f64 {
        self.items
            .iter()
            .map(|v| max_abs(v.as_slice()))
            .fold(0.0, f64::max)
    }

    /// `sup_k lambda^-k |b_(k+1)|` over the stored prefix.
    pub fn e_lambda_norm(&self, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        let ln_lambda = lambda.ln();
        Ok(self
            .items
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let n = max_abs(v.as_slice());
                let scale = lambda.powi(k as i32);
                if n == 0.0 {
                    0.0
                } else if scale > 1e-290 {
                    n / scale
                } else {
                    (n.ln() - k as f64 * ln_lambda).exp()
                }
            })
            .fold(0.0, f64::max))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(DrpError::domain("lambda", lambda, "(0, 1]"))
    }
}

fn random_unit_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    if dim == 0 {
        return DVector::zeros(0);
    }
    loop {
        // Gaussian via Box-Muller keeps the direction uniform on the sphere.
        let v = DVector::from_fn(dim, |_, _| {
            let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        let n = max_abs(v.as_slice());
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Rollout of `a_(k+1) = r a_k + b_(k+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionRollout {
    pub ratio: f64,
    /// `a_0, a_1, ..., a_len(b)`.
    pub terms: Vec<f64>,
    pub forcing: Vec<f64>,
}

impl RecursionRollout {
    /// Approximate limsup of the rollout (max over its last quarter).
    pub fn limsup(&self) -> f64 {
        tail_sup(&self.terms, 0.25)
    }

    /// `limsup b / (1 - r)`, the ceiling the rollout's limsup must respect.
    pub fn limsup_bound(&self) -> f64 {
        tail_sup(&self.forcing, 0.25) / (1.0 - self.ratio)
    }
}

/// Max over the last `fraction` of `values` (at least one element).
pub fn tail_sup(values: &[f64], fraction: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let count = ((values.len() as f64 * fraction).ceil() as usize).clamp(1, values.len());
    values[values.len() - count..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Rolls out the nonnegative recursion `a_(k+1) = r a_k + b_(k+1)` from `a0`.
pub fn forced_recursion(ratio: f64, a0: f64, forcing: &[f64]) -> Result<RecursionRollout> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DrpError::domain("r", ratio, "(0, 1)"));
    }
    if !(a0 >= 0.0) {
        return Err(DrpError::domain("a0", a0, "[0, inf)"));
    }
    if let Some(&bad) = forcing.iter().find(|&&b| !(b >= 0.0)) {
        return Err(DrpError::domain("b", bad, "[0, inf)"));
    }
    let mut terms = Vec::with_capacity(forcing.len() + 1);
    terms.push(a0);
    let mut a = a0;
    for &b in forcing {
        a = ratio * a + b;
        terms.push(a);
    }
    Ok(RecursionRollout {
        ratio,
        terms,
        forcing: forcing.to_vec(),
    })
}

/// Both sides of `k a^(k-1) <= 2/(1-a) * ((1+a)/2)^k`.
pub fn power_decay_bound(a: f64, k: u32) -> Result<(f64, f64)> {
    if !(a > 0.0 && a < 1.0) {
        return Err(DrpError::domain("a", a, "(0, 1)"));
    }
    let lhs = if k == 0 {
        0.0
    } else {
        k as f64 * a.powi(k as i32 - 1)
    };
    let rhs = 2.0 / (1.0 - a) * ((1.0 + a) / 2.0).powi(k as i32);
    Ok((lhs, rhs))
}
