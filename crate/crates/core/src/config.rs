//! Experiment configuration: flat `key = value` lines, `#` comments,
//! comma-separated lists.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Reference sweep configuration shipped with the crate.
pub const REFERENCE_CONFIG: &str = include_str!("../configs/reference_sweep.cfg");

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub d: usize,
    /// Torus side length.
    pub length: f64,
    /// Nodes per axis.
    pub n: usize,
    pub lmax: usize,
    pub alpha: f64,
    /// Gaussian kernel parameter.
    pub a: f64,
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    pub cfl: f64,
    pub t_final: f64,
    /// Write a snapshot every this many steps; 0 disables snapshots.
    pub snapshot_stride: usize,
    pub out_dir: PathBuf,
    /// Amplitude of the initial director rotation `θ(x) = A sin(2πx₁/X)`.
    pub amplitude: f64,
    /// Number of equal intervals at which the kinetic and limit
    /// trajectories are compared.
    pub samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d: 1,
            length: 20.0,
            n: 64,
            lmax: 8,
            alpha: 8.0,
            a: 1.0,
            epsilons: vec![0.1, 0.05, 0.025],
            cfl: 0.5,
            t_final: 0.2,
            snapshot_stride: 0,
            out_dir: PathBuf::from("out"),
            amplitude: 0.5,
            samples: 20,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("invalid value '{v}' for key '{key}'")))
}

impl ExperimentConfig {
    pub fn reference() -> Self {
        REFERENCE_CONFIG.parse().expect("bundled configuration is valid")
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        text.parse()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.d == 1 || self.d == 2) {
            return fail(format!("d must be 1 or 2, got {}", self.d));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return fail(format!("X must be positive, got {}", self.length));
        }
        if !self.n.is_power_of_two() || self.n < 2 {
            return fail(format!("n must be a power of two, got {}", self.n));
        }
        if self.lmax < 4 {
            return fail(format!("lmax must be at least 4, got {}", self.lmax));
        }
        if !(self.alpha > 7.5 && self.alpha.is_finite()) {
            return fail(format!("alpha must exceed 7.5, got {}", self.alpha));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return fail(format!("kernel parameter a must be positive, got {}", self.a));
        }
        if self.epsilons.is_empty() {
            return fail("eps list is empty".into());
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return fail("eps values must be positive".into());
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return fail("eps values must be strictly decreasing".into());
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return fail(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return fail(format!("t_final must be positive, got {}", self.t_final));
        }
        if self.samples == 0 {
            return fail("samples must be positive".into());
        }
        if !self.amplitude.is_finite() {
            return fail("amplitude must be finite".into());
        }
        Ok(())
    }

    /// Sample times `k t_final / samples`, `k = 0..=samples`.
    pub fn sample_times(&self) -> Vec<f64> {
        (0..=self.samples).map(|k| self.t_final * k as f64 / self.samples as f64).collect()
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            match key {
                "d" => cfg.d = parse_value(key, value)?,
                "X" | "length" => cfg.length = parse_value(key, value)?,
                "n" => cfg.n = parse_value(key, value)?,
                "lmax" => cfg.lmax = parse_value(key, value)?,
                "alpha" => cfg.alpha = parse_value(key, value)?,
                "a" => cfg.a = parse_value(key, value)?,
                "eps" | "epsilons" => {
                    cfg.epsilons = value
                        .split(',')
                        .map(|v| parse_value(key, v.trim()))
                        .collect::<Result<_>>()?
                }
                "cfl" => cfg.cfl = parse_value(key, value)?,
                "t_final" => cfg.t_final = parse_value(key, value)?,
                "snapshot_stride" => cfg.snapshot_stride = parse_value(key, value)?,
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "amplitude" => cfg.amplitude = parse_value(key, value)?,
                "samples" => cfg.samples = parse_value(key, value)?,
                _ => return Err(Error::Config(format!("line {}: unknown key '{key}'", lineno + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
