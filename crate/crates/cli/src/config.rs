//! Scenario files: one scenario per TOML document, unknown keys rejected.

use std::path::PathBuf;

use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub passes: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Coefficients of the `lti` scenario.
    pub model: Option<LinearModel>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: Option<f64>,
    pub intervals: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub y0: Option<ProfileConfig>,
    pub x0: Option<InitialStates>,
}

/// Initial pass profile.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileConfig {
    Zero,
    Constant { value: Vec<f64> },
    /// Random cubic scaled to sup norm `scale`, drawn from the run seed.
    RandomPolynomial { scale: f64 },
}

/// Initial states of passes `1, 2, ...`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialStates {
    Zero,
    Constant {
        value: Vec<f64>,
    },
    /// `limit + norm lambda^k direction`.
    Geometric {
        limit: Option<Vec<f64>>,
        direction: Vec<f64>,
        lambda: f64,
    },
    /// Random directions, `lambda` uniform in `lambda_range`, e_lambda norm `norm`.
    ELambda {
        limit: Option<Vec<f64>>,
        lambda_range: [f64; 2],
        norm: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub blowup_radius: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub svg: Option<bool>,
}

/// Row-major coefficient matrices.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearModel {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
}

pub fn parse(text: &str) -> Result<ScenarioConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_document() {
        let cfg = parse(
            r#"
scenario = "lti"
passes = 12
seed = 3

[grid]
horizon = 1.0
intervals = 50

[boundary.y0]
kind = "constant"
value = [1.0]

[boundary.x0]
kind = "e-lambda"
lambda_range = [0.3, 0.6]
norm = 0.1

[model]
a = [[-1.0]]
b = [[0.1]]
c = [[0.1]]
d = [[0.5]]
"#,
        )
        .unwrap();
        assert_eq!(cfg.passes, Some(12));
        assert_eq!(cfg.boundary.y0, Some(ProfileConfig::Constant { value: vec![1.0] }));
        assert!(matches!(cfg.boundary.x0, Some(InitialStates::ELambda { norm, .. }) if norm == 0.1));
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = parse("scenario = \"linear-stable\"\n[grid]\nhorizon = 1.0\nsteps = 4\n").unwrap_err();
        assert!(err.contains("steps"), "{err}");
        assert!(err.contains("line 4"), "{err}");
    }

    #[test]
    fn scenario_is_required() {
        assert!(parse("passes = 3").is_err());
    }
}
