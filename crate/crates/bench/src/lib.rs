//! Benchmark fixtures.

use drp_core::systems::{lti, van_der_pol_plant};
use drp_core::{DMatrix, DrpSystem, LtvQuadruple, Signal, TimeGrid};

/// Van der Pol plant on `[0, 2]` with `intervals` steps and a sinusoidal input.
pub fn vdp_fixture(intervals: usize) -> (DrpSystem, Signal) {
    let grid = TimeGrid::new(2.0, intervals).expect("valid grid");
    let u = Signal::from_fn(grid, 1, |t, o| o[0] = (std::f64::consts::PI * t).sin());
    (van_der_pol_plant(grid), u)
}

/// Weakly coupled two-state LTI quadruple.
pub fn lti_fixture(intervals: usize) -> LtvQuadruple {
    let grid = TimeGrid::new(1.0, intervals).expect("valid grid");
    lti(
        grid,
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
        DMatrix::from_row_slice(2, 1, &[0.1, 0.1]),
        DMatrix::from_row_slice(1, 2, &[0.1, 0.0]),
        DMatrix::from_element(1, 1, 0.5),
    )
    .expect("finite coefficients")
}
