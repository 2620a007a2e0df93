//! Randomized verification suites with deterministic per-trial seeds.
//!
//! Trial `t` of suite `s` draws from a ChaCha8 stream seeded with the master
//! seed and positioned on stream `(index(s) << 32) | t`, so results do not
//! depend on scheduling. Trials run on the rayon pool and are reduced with
//! `max`/`min`, which is order-independent.

pub mod fd;
pub mod sample;
mod suites;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{MtvError, Result};

pub const SUITE_NAMES: [&str; 11] = [
    "polarization",
    "hamiltonian_w",
    "closedness",
    "form_identity",
    "axiom_d",
    "gluing",
    "theorem_2_4_i",
    "axiom_e",
    "hilbert_round_trip",
    "fitting_orbits",
    "free_action",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub k: usize,
    pub b: usize,
    pub bprime: usize,
    pub trials: usize,
    pub seed: u64,
    pub tol_alg: f64,
    pub tol_fd: f64,
    pub fd_step: f64,
    pub suites: Vec<String>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            k: 3,
            b: 2,
            bprime: 1,
            trials: 20,
            seed: 42,
            tol_alg: 1e-10,
            tol_fd: 1e-4,
            fd_step: 1e-4,
            suites: vec!["all".into()],
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(MtvError::Usage("trials must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(MtvError::Usage("k must be at least 1".into()));
        }
        if self.b + self.bprime == 0 {
            return Err(MtvError::Usage("signature (0,0) has no factors".into()));
        }
        for (name, t) in [("tol_alg", self.tol_alg), ("tol_fd", self.tol_fd), ("fd_step", self.fd_step)] {
            if !(t.is_finite() && t > 0.0) {
                return Err(MtvError::Usage(format!("{name} must be positive")));
            }
        }
        if self.fd_step * self.fd_step <= f64::EPSILON {
            return Err(MtvError::StepUnderflow(self.fd_step));
        }
        self.suite_list()?;
        Ok(())
    }

    /// The requested suites in canonical order, `all` expanded.
    pub fn suite_list(&self) -> Result<Vec<&'static str>> {
        if self.suites.is_empty() {
            return Err(MtvError::Usage("no suites requested".into()));
        }
        let mut out = Vec::new();
        for s in &self.suites {
            if s == "all" {
                out.extend(SUITE_NAMES);
            } else {
                let name = SUITE_NAMES
                    .iter()
                    .find(|n| **n == s.as_str())
                    .ok_or_else(|| MtvError::Usage(format!("unknown suite {s:?}")))?;
                out.push(*name);
            }
        }
        let mut seen = Vec::new();
        out.retain(|n| {
            let fresh = !seen.contains(n);
            seen.push(*n);
            fresh
        });
        out.sort_by_key(|n| SUITE_NAMES.iter().position(|m| m == n));
        Ok(out)
    }
}

/// One measured quantity of a suite: its worst value over all trials and
/// the bound it must stay below.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// A negative control: its smallest value over all trials must exceed the
/// threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlReport {
    pub name: String,
    pub min_value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub trials: usize,
    pub max_residual: f64,
    pub passed: bool,
    pub checks: Vec<CheckReport>,
    pub controls: Vec<ControlReport>,
    pub errors: Vec<String>,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub version: String,
    pub config: SuiteConfig,
    pub suites: Vec<SuiteReport>,
    pub passed: bool,
}

impl Report {
    /// The report with timing fields zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Report {
        let mut r = self.clone();
        for s in &mut r.suites {
            s.wall_time_ms = 0.0;
        }
        r
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            out.push_str(&format!(
                "{:<20} {:>5} trials  max residual {:>10.3e}  {}\n",
                s.name,
                s.trials,
                s.max_residual,
                if s.passed { "PASS" } else { "FAIL" }
            ));
            for c in s.checks.iter().filter(|c| !c.passed) {
                out.push_str(&format!("    check {} = {:.3e} > {:.1e}\n", c.name, c.max_residual, c.tolerance));
            }
            for c in s.controls.iter().filter(|c| !c.passed) {
                out.push_str(&format!("    control {} = {:.3e} <= {:.1e}\n", c.name, c.min_value, c.threshold));
            }
            for e in s.errors.iter().take(3) {
                out.push_str(&format!("    error: {e}\n"));
            }
        }
        out.push_str(if self.passed { "overall: PASS\n" } else { "overall: FAIL\n" });
        out
    }
}

/// Values measured in one trial, keyed by check or control name.
#[derive(Debug, Default, Clone)]
pub(crate) struct Trial {
    pub checks: Vec<(&'static str, f64)>,
    pub controls: Vec<(&'static str, f64)>,
}

impl Trial {
    pub fn check(&mut self, name: &'static str, value: f64) {
        self.checks.push((name, value));
    }

    pub fn control(&mut self, name: &'static str, value: f64) {
        self.controls.push((name, value));
    }
}

/// Bounds for the named checks and controls of one suite.
pub(crate) struct Bounds {
    pub checks: Vec<(&'static str, f64)>,
    pub controls: Vec<(&'static str, f64)>,
}

pub(crate) fn trial_rng(seed: u64, suite: &str, trial: usize) -> ChaCha8Rng {
    let index = SUITE_NAMES.iter().position(|n| *n == suite).unwrap_or(SUITE_NAMES.len()) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index << 32) | trial as u64);
    rng
}

fn aggregate(name: &str, trials: usize, bounds: &Bounds, results: Vec<Result<Trial>>, elapsed: f64) -> SuiteReport {
    let mut errors = Vec::new();
    let mut checks: Vec<CheckReport> = bounds
        .checks
        .iter()
        .map(|(n, tol)| CheckReport { name: n.to_string(), max_residual: 0.0, tolerance: *tol, passed: true })
        .collect();
    let mut controls: Vec<ControlReport> = bounds
        .controls
        .iter()
        .map(|(n, th)| ControlReport { name: n.to_string(), min_value: f64::INFINITY, threshold: *th, passed: true })
        .collect();
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Err(e) => errors.push(format!("trial {t}: {e}")),
            Ok(trial) => {
                for (n, v) in trial.checks {
                    if let Some(c) = checks.iter_mut().find(|c| c.name == n) {
                        // NaN must fail, so compare through max with a NaN guard
                        c.max_residual = if v.is_nan() { f64::NAN } else { c.max_residual.max(v) };
                    }
                }
                for (n, v) in trial.controls {
                    if let Some(c) = controls.iter_mut().find(|c| c.name == n) {
                        c.min_value = c.min_value.min(v);
                    }
                }
            }
        }
    }
    for c in &mut checks {
        c.passed = c.max_residual <= c.tolerance;
    }
    for c in &mut controls {
        c.passed = c.min_value > c.threshold;
    }
    let max_residual = checks.iter().map(|c| c.max_residual).fold(0.0, f64::max);
    let passed = errors.is_empty() && checks.iter().all(|c| c.passed) && controls.iter().all(|c| c.passed);
    SuiteReport {
        name: name.to_string(),
        trials,
        max_residual,
        passed,
        checks,
        controls,
        errors,
        wall_time_ms: elapsed,
    }
}

/// Runs one suite by name.
pub fn run_one(config: &SuiteConfig, name: &str) -> Result<SuiteReport> {
    let (trials, bounds) = suites::plan(config, name)?;
    let start = Instant::now();
    let results: Vec<Result<Trial>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(config.seed, name, t);
            suites::run_trial(config, name, t, &mut rng)
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    Ok(aggregate(name, trials, &bounds, results, elapsed))
}

pub fn run_suite(config: &SuiteConfig) -> Result<Report> {
    config.validate()?;
    let suites = config
        .suite_list()?
        .into_iter()
        .map(|n| run_one(config, n))
        .collect::<Result<Vec<_>>>()?;
    let passed = suites.iter().all(|s| s.passed);
    Ok(Report { version: env!("CARGO_PKG_VERSION").to_string(), config: config.clone(), suites, passed })
}
