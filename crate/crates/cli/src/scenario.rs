//! Builtin scenarios and resolution of a config plus flag overrides.

use std::path::PathBuf;

use drp_core::ilc::{random_initial_states, van_der_pol_tracking, IlcProblem};
use drp_core::pass::random_polynomial_signal;
use drp_core::picard::{scalar_exponential, van_der_pol_free, PicardProblem};
use drp_core::systems::{d_only, lti};
use drp_core::{DMatrix, DVector, LtvQuadruple, Signal, TimeGrid, VectorSequence};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{InitialStates, LinearModel, ProfileConfig, ScenarioConfig};

pub const BUILTINS: [&str; 6] = [
    "linear-stable",
    "linear-unstable",
    "lti",
    "vanderpol-ilc",
    "picard-exp",
    "picard-vdp",
];

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub passes: Option<usize>,
    pub intervals: Option<usize>,
    pub out: Option<PathBuf>,
    pub svg: bool,
}

pub enum Model {
    Linear(LtvQuadruple),
    Ilc(Box<IlcProblem>),
    Picard(Box<PicardProblem>),
}

pub struct Scenario {
    pub name: String,
    pub model: Model,
    pub passes: usize,
    pub seed: u64,
    pub y0: Option<Signal>,
    pub x0: VectorSequence,
    /// Rate drawn for random initial states.
    pub lambda: Option<f64>,
    pub blowup_radius: Option<f64>,
    pub out: Option<PathBuf>,
    pub svg: bool,
}

struct Defaults {
    horizon: f64,
    intervals: usize,
    passes: usize,
    seed: u64,
}

fn defaults(name: &str) -> Option<Defaults> {
    let d = |horizon, intervals, passes, seed| Defaults {
        horizon,
        intervals,
        passes,
        seed,
    };
    Some(match name {
        "linear-stable" | "linear-unstable" | "lti" => d(1.0, 100, 20, 0),
        "vanderpol-ilc" => d(2.0, 2000, 10, 1),
        "picard-exp" => d(1.0, 10_000, 10, 0),
        "picard-vdp" => d(0.5, 500, 25, 0),
        _ => return None,
    })
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(format!("model.{name}: rows have different lengths"));
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

fn linear_model(grid: TimeGrid, m: &LinearModel) -> Result<LtvQuadruple, String> {
    let (a, b, c, d) = (matrix("a", &m.a)?, matrix("b", &m.b)?, matrix("c", &m.c)?, matrix("d", &m.d)?);
    let (n, io) = (a.nrows(), d.nrows());
    if a.ncols() != n || b.shape() != (n, io) || c.shape() != (io, n) || d.ncols() != io {
        return Err(format!(
            "model: shapes a {:?}, b {:?}, c {:?}, d {:?} are inconsistent",
            a.shape(),
            b.shape(),
            c.shape(),
            d.shape()
        ));
    }
    lti(grid, a, b, c, d).map_err(|e| format!("model: {e}"))
}

fn vector(name: &str, v: &[f64], dim: usize) -> Result<DVector<f64>, String> {
    if v.len() != dim {
        return Err(format!("{name}: expected {dim} entries, got {}", v.len()));
    }
    Ok(DVector::from_column_slice(v))
}

fn initial_states(
    states: &InitialStates,
    limit: &DVector<f64>,
    len: usize,
    seed: u64,
) -> Result<(VectorSequence, Option<f64>), String> {
    let n = limit.len();
    let pick_limit = |l: &Option<Vec<f64>>| match l {
        Some(v) => vector("boundary.x0.limit", v, n),
        None => Ok(limit.clone()),
    };
    match states {
        InitialStates::Zero => Ok((VectorSequence::zeros(n, len), None)),
        InitialStates::Constant { value } => {
            Ok((VectorSequence::constant(vector("boundary.x0.value", value, n)?, len), None))
        }
        InitialStates::Geometric {
            limit,
            direction,
            lambda,
        } => {
            let seq = VectorSequence::geometric(
                pick_limit(limit)?,
                vector("boundary.x0.direction", direction, n)?,
                *lambda,
                len,
            )
            .map_err(|e| format!("boundary.x0: {e}"))?;
            Ok((seq, Some(*lambda)))
        }
        InitialStates::ELambda {
            limit,
            lambda_range,
            norm,
        } => {
            if !(*norm >= 0.0 && norm.is_finite()) {
                return Err(format!("boundary.x0.norm: {norm} is not a finite nonnegative number"));
            }
            let (lambda, seq) =
                random_initial_states(&pick_limit(limit)?, (lambda_range[0], lambda_range[1]), *norm, len, seed)
                    .map_err(|e| format!("boundary.x0: {e}"))?;
            Ok((seq, Some(lambda)))
        }
    }
}

fn profile(profile_cfg: &ProfileConfig, grid: TimeGrid, dim: usize, seed: u64) -> Result<Signal, String> {
    match profile_cfg {
        ProfileConfig::Zero => Ok(Signal::zeros(grid, dim)),
        ProfileConfig::Constant { value } => Ok(Signal::constant(grid, vector("boundary.y0.value", value, dim)?.as_slice())),
        ProfileConfig::RandomPolynomial { scale } => {
            if !(*scale >= 0.0 && scale.is_finite()) {
                return Err(format!("boundary.y0.scale: {scale} is not a finite nonnegative number"));
            }
            // Separate stream from the initial states.
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            let s = random_polynomial_signal(grid, dim, &mut rng);
            let norm = s.sup_norm();
            Ok(if norm > 0.0 { s.scaled(scale / norm) } else { s })
        }
    }
}

pub fn resolve(cfg: &ScenarioConfig, ov: &Overrides) -> Result<Scenario, String> {
    let name = cfg.scenario.as_str();
    let def = defaults(name).ok_or_else(|| {
        format!("scenario: unknown scenario `{name}` (expected one of {})", BUILTINS.join(", "))
    })?;
    let horizon = cfg.grid.horizon.unwrap_or(def.horizon);
    let intervals = ov.intervals.or(cfg.grid.intervals).unwrap_or(def.intervals);
    let grid = TimeGrid::new(horizon, intervals).map_err(|e| format!("grid: {e}"))?;
    let passes = ov.passes.or(cfg.passes).unwrap_or(def.passes);
    if passes == 0 {
        return Err("passes: must be at least 1".into());
    }
    let seed = ov.seed.or(cfg.seed).unwrap_or(def.seed);
    if let Some(r) = cfg.solver.blowup_radius {
        if !(r > 0.0) {
            return Err(format!("solver.blowup_radius: {r} must be positive"));
        }
    }
    if cfg.model.is_some() && name != "lti" {
        return Err(format!("model: only the `lti` scenario takes coefficients, not `{name}`"));
    }

    let model = match name {
        "linear-stable" => Model::Linear(d_only(grid, 0.5).map_err(|e| e.to_string())?),
        "linear-unstable" => Model::Linear(d_only(grid, 1.2).map_err(|e| e.to_string())?),
        "lti" => {
            let m = cfg.model.as_ref().ok_or("model: the `lti` scenario needs [model] with a, b, c, d")?;
            Model::Linear(linear_model(grid, m)?)
        }
        "vanderpol-ilc" => Model::Ilc(Box::new(van_der_pol_tracking(grid))),
        "picard-exp" => Model::Picard(Box::new(scalar_exponential(grid).map_err(|e| e.to_string())?)),
        _ => Model::Picard(Box::new(
            van_der_pol_free(grid, DVector::from_vec(vec![0.5, 0.0])).map_err(|e| e.to_string())?,
        )),
    };

    let (limit, len, default_x0) = match &model {
        Model::Linear(q) => (DVector::zeros(q.state_dim()), passes, InitialStates::Zero),
        Model::Ilc(p) => (
            p.x_star0.clone(),
            passes + 1,
            InitialStates::ELambda {
                limit: None,
                lambda_range: [0.2, 0.95],
                norm: 0.09,
            },
        ),
        Model::Picard(p) => (
            p.x_star0().clone(),
            passes,
            InitialStates::Constant {
                value: p.x_star0().as_slice().to_vec(),
            },
        ),
    };
    let (x0, lambda) = initial_states(cfg.boundary.x0.as_ref().unwrap_or(&default_x0), &limit, len, seed)?;

    let y0 = match (&model, &cfg.boundary.y0) {
        (Model::Linear(q), y0_cfg) => {
            let ones = ProfileConfig::Constant {
                value: vec![1.0; q.io_dim()],
            };
            Some(profile(y0_cfg.as_ref().unwrap_or(&ones), grid, q.io_dim(), seed)?)
        }
        (_, Some(_)) => {
            return Err(format!(
                "boundary.y0: `{name}` derives its first pass from the model; remove boundary.y0"
            ))
        }
        _ => None,
    };

    let model = match (model, cfg.solver.blowup_radius) {
        (Model::Ilc(mut p), Some(r)) => {
            p.plant = p.plant.clone().with_blowup_radius(r);
            Model::Ilc(p)
        }
        (m, _) => m,
    };

    Ok(Scenario {
        name: name.to_string(),
        model,
        passes,
        seed,
        y0,
        x0,
        lambda,
        blowup_radius: cfg.solver.blowup_radius,
        out: ov.out.clone().or_else(|| cfg.output.dir.clone()),
        svg: ov.svg || cfg.output.svg.unwrap_or(false),
    })
}
