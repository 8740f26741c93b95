//! Randomized property suites over the sequence bounds, e_lambda norm
//! properties and the learning-loop spectral equivalence.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ilc::learning_spectra;
use crate::signal::{forced_recursion, power_decay_bound, VectorSequence};

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub violations: usize,
    /// Description of the first violating case.
    pub first_violation: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn run(name: &'static str, cases: usize, mut case: impl FnMut(usize) -> Option<String>) -> Self {
        let mut violations = 0;
        let mut first_violation = None;
        for i in 0..cases {
            if let Some(msg) = case(i) {
                violations += 1;
                first_violation.get_or_insert(format!("case {i}: {msg}"));
            }
        }
        SuiteReport {
            name,
            cases,
            violations,
            first_violation,
        }
    }
}

/// Default rollout length for the recursion suite.
pub const ROLLOUT_LEN: usize = 200;

/// Forcing `b_j <= beta + c mu^j` with limsup exactly `beta`; rollouts must obey
/// `a_k <= r^k a0 + beta/(1-r) + c k rho^(k-1)`, `rho = max(r, mu)`, and their
/// tail must respect `limsup b / (1 - r)` up to that transient.
pub fn recursion_suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SuiteReport::run("recursion", cases, |_| {
        let r: f64 = rng.random_range(0.01..0.9);
        let mu: f64 = rng.random_range(0.01..0.9);
        let a0 = rng.random_range(0.0..10.0);
        let c = rng.random_range(0.0..10.0);
        // A fifth of the cases have vanishing forcing.
        let beta = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..5.0) };
        let period = rng.random_range(2..10);
        let forcing: Vec<f64> = (1..=ROLLOUT_LEN)
            .map(|j| {
                let w = if j % period == 0 { 1.0 } else { rng.random::<f64>() };
                beta * w + c * mu.powi(j as i32) * rng.random::<f64>()
            })
            .collect();
        let roll = match forced_recursion(r, a0, &forcing) {
            Ok(roll) => roll,
            Err(e) => return Some(e.to_string()),
        };
        let rho = r.max(mu);
        let ceiling = beta / (1.0 - r);
        for (k, &a) in roll.terms.iter().enumerate() {
            let transient = r.powi(k as i32) * a0
                + if k == 0 { 0.0 } else { c * k as f64 * rho.powi(k as i32 - 1) };
            if a > (ceiling + transient) * (1.0 + 1e-12) + 1e-300 {
                return Some(format!("r={r} a_{k}={a} exceeds {}", ceiling + transient));
            }
        }
        let tail_start = roll.terms.len() - roll.terms.len().div_ceil(4);
        let slack = r.powi(tail_start as i32) * a0 + c * tail_start as f64 * rho.powi(tail_start as i32 - 1);
        if roll.limsup() > (roll.limsup_bound().max(ceiling) + slack) * (1.0 + 1e-12) {
            return Some(format!("r={r} tail {} above {}", roll.limsup(), roll.limsup_bound()));
        }
        if beta == 0.0 && roll.limsup() > 1e-6 * (1.0 + a0 + c) {
            return Some(format!("vanishing forcing left tail {}", roll.limsup()));
        }
        None
    })
}

/// `k a^(k-1) <= 2/(1-a) ((1+a)/2)^k`. With `inverted` the check is flipped,
/// which must report violations.
pub fn power_decay_suite(seed: u64, cases: usize, inverted: bool) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = if inverted { "power-decay-inverted" } else { "power-decay" };
    SuiteReport::run(name, cases, |_| {
        let a = rng.random_range(f64::EPSILON..1.0);
        let k = rng.random_range(0..=500u32);
        match power_decay_bound(a, k) {
            Ok((lhs, rhs)) => {
                let holds = if inverted { lhs > rhs } else { lhs <= rhs };
                (!holds).then(|| format!("a={a} k={k}: {lhs:e} vs {rhs:e}"))
            }
            Err(e) => Some(e.to_string()),
        }
    })
}

fn random_sequence(rng: &mut ChaCha8Rng) -> VectorSequence {
    let dim = rng.random_range(1..=4);
    let len = rng.random_range(1..=60);
    let decay = rng.random_range(0.05..1.2);
    let items = (0..len)
        .map(|k| {
            let scale = rng.random_range(0.0..3.0) * f64::powi(decay, k as i32);
            DVector::from_fn(dim, |_, _| scale * rng.random_range(-1.0..1.0))
        })
        .collect();
    VectorSequence::new(items).expect("items share a dimension")
}

/// Dropping `kappa` items scales the e_lambda norm by at most `lambda^kappa`.
pub fn shift_suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SuiteReport::run("shift", cases, |_| {
        let seq = random_sequence(&mut rng);
        let lambda = rng.random_range(0.05..=1.0);
        let kappa = rng.random_range(0..=seq.len());
        let full = seq.e_lambda_norm(lambda).ok()?;
        let dropped = seq.drop_front(kappa).e_lambda_norm(lambda).ok()?;
        let bound = lambda.powi(kappa as i32) * full;
        (dropped > bound * (1.0 + 1e-12)).then(|| format!("lambda={lambda} kappa={kappa}: {dropped} > {bound}"))
    })
}

/// `lambda1 <= lambda2` implies `|b|_(lambda2) <= |b|_(lambda1)`.
pub fn lambda_monotone_suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SuiteReport::run("lambda-monotone", cases, |_| {
        let seq = random_sequence(&mut rng);
        let x: f64 = rng.random_range(0.01..=1.0);
        let y: f64 = rng.random_range(0.01..=1.0);
        let (l1, l2) = (x.min(y), x.max(y));
        let n1 = seq.e_lambda_norm(l1).ok()?;
        let n2 = seq.e_lambda_norm(l2).ok()?;
        (n2 > n1 * (1.0 + 1e-12)).then(|| format!("{l1} -> {n1}, {l2} -> {n2}"))
    })
}

/// Spectral radius of `[D; I][L, I]` against `I + L D` and `I + D L`.
pub fn block_form_suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SuiteReport::run("block-form", cases, |_| {
        let m = rng.random_range(1..=4);
        let d = DMatrix::from_fn(m, m, |_, _| rng.random_range(-2.0..2.0));
        let l = DMatrix::from_fn(m, m, |_, _| rng.random_range(-2.0..2.0));
        match learning_spectra(&d, &l) {
            Ok((ld, dl, block)) => {
                let gap = (ld - block).abs().max((ld - dl).abs());
                (gap > 1e-8).then(|| format!("m={m}: {ld} {dl} {block}"))
            }
            Err(e) => Some(e.to_string()),
        }
    })
}

pub const SUITE_CASES: usize = 1000;
pub const BLOCK_FORM_CASES: usize = 500;

/// All suites at their default sizes.
pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    vec![
        recursion_suite(seed, SUITE_CASES),
        power_decay_suite(seed.wrapping_add(1), SUITE_CASES, false),
        shift_suite(seed.wrapping_add(2), SUITE_CASES),
        lambda_monotone_suite(seed.wrapping_add(3), SUITE_CASES),
        block_form_suite(seed.wrapping_add(4), BLOCK_FORM_CASES),
    ]
}
