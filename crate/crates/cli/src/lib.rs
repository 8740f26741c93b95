//! Scenario runner behind the `drp` binary.

pub mod config;
pub mod plot;
pub mod scenario;

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use drp_core::claims::{self, SuiteReport};
use drp_core::engine::run_drp;
use drp_core::ilc::{compose_ilc, ilc_certificate, run_ilc};
use drp_core::linearize::linearize_at_origin;
use drp_core::ltv::{alpha_certificate, StabilityCertificate};
use drp_core::picard::{contraction_ratios, picard_drp, run_picard};
use drp_core::{BoundarySpec, DrpError, RunRecord, Verdict};
use serde_json::json;

use crate::config::ScenarioConfig;
use crate::scenario::{resolve, Model, Overrides, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Certify,
    Simulate,
    Ilc,
    Picard,
    Claims,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Certify => "certify",
            Command::Simulate => "simulate",
            Command::Ilc => "ilc",
            Command::Picard => "picard",
            Command::Claims => "claims",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub scenario: Option<String>,
    pub overrides: Overrides,
    pub self_test: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Numerical failure or escape.
    Numerical(String),
    Config(String),
    Property(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => 1,
            CliError::Config(_) => 2,
            CliError::Property(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Numerical(m) | CliError::Config(m) | CliError::Property(m) => m,
        }
    }
}

fn numerical(e: DrpError) -> CliError {
    CliError::Numerical(e.to_string())
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Numerical(format!("{}: {e}", path.display()))
}

/// Reads `--config`, applies `--scenario` and the flag overrides.
pub fn load(opts: &Options) -> Result<Scenario, CliError> {
    let mut cfg = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            config::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(name) = &opts.scenario {
        cfg.scenario = name.clone();
    }
    if cfg.scenario.is_empty() {
        return Err(CliError::Config("no scenario: pass --config PATH or --scenario NAME".into()));
    }
    resolve(&cfg, &opts.overrides).map_err(CliError::Config)
}

/// Runs one subcommand, writing the report or CSV to `stdout`.
pub fn run(cmd: Command, opts: &Options, stdout: &mut dyn Write) -> Result<(), CliError> {
    if cmd == Command::Claims {
        return run_claims(opts, stdout);
    }
    let sc = load(opts)?;
    if sc.svg && sc.out.is_none() {
        return Err(CliError::Config("--svg needs an output directory (--out DIR or output.dir)".into()));
    }
    match cmd {
        Command::Certify => certify(&sc, stdout),
        Command::Simulate | Command::Ilc | Command::Picard => run_passes(cmd, &sc, stdout),
        Command::Claims => unreachable!(),
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::CertifiedStable => "certified-stable",
        Verdict::NotCertified => "not-certified",
    }
}

fn certificate_json(c: &StabilityCertificate) -> serde_json::Value {
    json!({
        "alpha": c.alpha,
        "margin": c.margin,
        "argmax_index": c.argmax,
        "argmax_time": c.argmax_time,
        "verdict": verdict_name(c.verdict),
    })
}

/// Plain decimal for moderate magnitudes, exponent form otherwise.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 || (1e-4..1e6).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn certify(sc: &Scenario, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut text = String::new();
    let _ = writeln!(text, "scenario: {}", sc.name);
    let mut doc = json!({ "scenario": sc.name });
    let summary = |text: &mut String, label: &str, alpha: f64, time: f64, verdict: Verdict| {
        let _ = writeln!(text, "{label}alpha: {}", fmt_num(alpha));
        let _ = writeln!(text, "{label}margin: {}", fmt_num(1.0 - alpha));
        let _ = writeln!(text, "{label}max at: t = {}", fmt_num(time));
        let _ = writeln!(text, "{label}verdict: {}", verdict_name(verdict));
    };
    match &sc.model {
        Model::Linear(q) => {
            let c = alpha_certificate(q).map_err(numerical)?;
            summary(&mut text, "", c.alpha, c.argmax_time, c.verdict);
            doc["system"] = certificate_json(&c);
        }
        Model::Picard(p) => {
            let q = linearize_at_origin(&picard_drp(p)).map_err(numerical)?;
            let c = alpha_certificate(&q).map_err(numerical)?;
            summary(&mut text, "", c.alpha, c.argmax_time, c.verdict);
            doc["system"] = certificate_json(&c);
        }
        Model::Ilc(p) => {
            let c = ilc_certificate(p).map_err(numerical)?;
            summary(&mut text, "", c.alpha, c.argmax_time, c.verdict);
            let _ = writeln!(text, "block-form discrepancy: {}", fmt_num(c.max_discrepancy));
            doc["learning_loop"] = json!({
                "alpha": c.alpha,
                "margin": 1.0 - c.alpha,
                "argmax_time": c.argmax_time,
                "verdict": verdict_name(c.verdict),
                "block_form_max_discrepancy": c.max_discrepancy,
            });
            // Same condition read off the finite-difference linearization of the shifted process.
            let q = linearize_at_origin(&compose_ilc(p).map_err(numerical)?).map_err(numerical)?;
            let shifted = alpha_certificate(&q).map_err(numerical)?;
            summary(&mut text, "shifted-process ", shifted.alpha, shifted.argmax_time, shifted.verdict);
            doc["system"] = certificate_json(&shifted);
        }
    }
    stdout.write_all(text.as_bytes()).map_err(|e| CliError::Numerical(e.to_string()))?;
    if let Some(dir) = &sc.out {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let path = dir.join("certificate.json");
        let body = serde_json::to_string_pretty(&doc).expect("plain JSON values") + "\n";
        fs::write(&path, body).map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}

/// `k,norm` rows with 17 significant digits.
pub fn norms_csv(norms: &[f64]) -> String {
    let mut s = String::from("k,norm\n");
    for (k, v) in norms.iter().enumerate() {
        let _ = writeln!(s, "{k},{v:.16e}");
    }
    s
}

fn run_passes(cmd: Command, sc: &Scenario, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (rec, label): (RunRecord, &str) = match (cmd, &sc.model) {
        (Command::Simulate, Model::Linear(q)) => {
            let mut sys = q.to_system();
            if let Some(r) = sc.blowup_radius {
                sys = sys.with_blowup_radius(r);
            }
            let y0 = sc.y0.clone().expect("linear scenarios carry y0");
            let rec = run_drp(&sys, &BoundarySpec::new(y0, sc.x0.clone()), sc.passes).map_err(numerical)?;
            (rec, "|y_k|")
        }
        (Command::Ilc, Model::Ilc(p)) => (run_ilc(p, sc.passes, &sc.x0).map_err(numerical)?.record, "|e_k|"),
        (Command::Picard, Model::Picard(p)) => {
            let rec = run_picard(p, sc.passes, &sc.x0).map_err(numerical)?;
            let norms = &rec.output_norms;
            let floor = 1e-8 * norms.first().copied().unwrap_or(0.0);
            if let Some(r) = contraction_ratios(norms, floor).into_iter().find(|r| *r > 0.9) {
                eprintln!("warning: per-pass contraction {r:.3} exceeds 0.9; the horizon may be too long");
            }
            (rec, "|y_k - x*|")
        }
        _ => {
            return Err(CliError::Config(format!(
                "scenario `{}` cannot be run by `{}`",
                sc.name,
                cmd.name()
            )))
        }
    };

    let csv = norms_csv(&rec.output_norms);
    match &sc.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            let path = dir.join(format!("{}.csv", cmd.name()));
            fs::write(&path, &csv).map_err(|e| io_error(&path, e))?;
            if sc.svg {
                let svg_path = dir.join(format!("{}.svg", cmd.name()));
                let title = format!("{} ({} passes)", sc.name, rec.passes());
                fs::write(&svg_path, plot::semilog_svg(&rec.output_norms, &title, label))
                    .map_err(|e| io_error(&svg_path, e))?;
            }
        }
        None => stdout.write_all(csv.as_bytes()).map_err(|e| CliError::Numerical(e.to_string()))?,
    }
    match rec.escape_pass {
        Some(k) => Err(CliError::Numerical(format!(
            "pass {k} left the blow-up radius; {} rows written",
            rec.output_norms.len()
        ))),
        None => Ok(()),
    }
}

fn report_line(r: &SuiteReport) -> String {
    let mut line = format!(
        "{:<16} {:>5} cases {:>5} violations  {}",
        r.name,
        r.cases,
        r.violations,
        if r.passed() { "PASS" } else { "FAIL" }
    );
    if let Some(first) = &r.first_violation {
        let _ = write!(line, "  first: {first}");
    }
    line
}

fn run_claims(opts: &Options, stdout: &mut dyn Write) -> Result<(), CliError> {
    let seed = opts.overrides.seed.unwrap_or(0);
    let reports = if opts.self_test {
        vec![claims::power_decay_suite(seed, claims::SUITE_CASES, true)]
    } else {
        claims::run_all(seed)
    };
    let mut text = format!("seed {seed}\n");
    for r in &reports {
        text.push_str(&report_line(r));
        text.push('\n');
    }
    stdout.write_all(text.as_bytes()).map_err(|e| CliError::Numerical(e.to_string()))?;
    if let Some(dir) = &opts.overrides.out {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let path = dir.join("claims.txt");
        fs::write(&path, &text).map_err(|e| io_error(&path, e))?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Property(format!("property violations in {}", failed.join(", "))))
    }
}
