//! Scan configuration: a TOML file with command-line overrides.
//!
//! ```toml
//! jobs = 4
//! warm_start = false
//! out = "runs/c1"
//!
//! [grid]
//! dx2 = 0.1
//! dy3 = 0.05
//! dz1 = { start = -0.30, stop = 0.30, step = 0.01 }
//!
//! [pipeline]
//! mo = "diabatic"
//! reference = { dx2 = 0.1, dy3 = 0.0, dz1 = -0.1 }
//! solver = { kind = "weighted", weights = [3.0, 2.0, 1.0] }
//! route = "rotation"
//! mode = { kind = "penalty", lambda = 1.0 }
//! ```

use std::path::{Path, PathBuf};

use evqe_core::geometry::{uniform_grid, Distortion};
use evqe_core::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "EVQE_OUT";
pub const DEFAULT_OUT: &str = "evqe-out";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Range(Range),
    Points(Vec<f64>),
}

/// Δz₁ values at fixed Δx₂ and Δy₃ (Å).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub dx2: f64,
    pub dy3: f64,
    pub dz1: Axis,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            dx2: 0.1,
            dy3: 0.05,
            dz1: Axis::Range(Range {
                start: -0.30,
                stop: 0.30,
                step: 0.01,
            }),
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<Distortion>, CliError> {
        let dz = match &self.dz1 {
            Axis::Range(r) => uniform_grid(r.start, r.stop, r.step)?,
            Axis::Points(p) => p.clone(),
        };
        if dz.is_empty() {
            return Err(CliError::Usage("grid is empty".into()));
        }
        let out: Vec<_> = dz.into_iter().map(|z| Distortion::new(self.dx2, self.dy3, z)).collect();
        if out.iter().any(|d| !d.is_finite()) {
            return Err(CliError::Usage("grid has non-finite values".into()));
        }
        Ok(out)
    }

    /// Parses `START:STOP:STEP` or `DX2,DY3,START:STOP:STEP`; a comma
    /// separated list may replace the range.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = || CliError::Usage(format!("cannot parse grid {text:?}"));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        let mut grid = GridSpec::default();
        let (fixed, axis) = match text.split_once(';') {
            Some((f, a)) => (Some(f), a),
            None if text.contains(':') && text.matches(',').count() == 2 => {
                let mut it = text.splitn(3, ',');
                let (a, b, c) = (it.next().ok_or_else(bad)?, it.next().ok_or_else(bad)?, it.next().ok_or_else(bad)?);
                grid.dx2 = num(a)?;
                grid.dy3 = num(b)?;
                (None, c)
            }
            None => (None, text),
        };
        if let Some(f) = fixed {
            let v: Vec<_> = f.split(',').map(num).collect::<Result<_, _>>()?;
            let [a, b] = v[..] else { return Err(bad()) };
            grid.dx2 = a;
            grid.dy3 = b;
        }
        grid.dz1 = if axis.contains(':') {
            let v: Vec<_> = axis.split(':').map(num).collect::<Result<_, _>>()?;
            let [start, stop, step] = v[..] else { return Err(bad()) };
            Axis::Range(Range { start, stop, step })
        } else {
            Axis::Points(axis.split(',').map(num).collect::<Result<_, _>>()?)
        };
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub grid: GridSpec,
    pub pipeline: PipelineConfig,
    /// Worker threads; 1 runs the points in order on the calling thread.
    pub jobs: usize,
    /// Seed each point's ensemble optimization with the previous point's t*.
    /// Forces sequential execution.
    pub warm_start: bool,
    pub out: Option<PathBuf>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            pipeline: PipelineConfig::default(),
            jobs: 1,
            warm_start: false,
            out: None,
        }
    }
}

impl ScanConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.jobs == 0 {
            return Err(CliError::Usage("jobs must be at least 1".into()));
        }
        self.grid.points()?;
        self.pipeline
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    /// `--out`, then `EVQE_OUT`, then the config file, then the default.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

/// Parses `DX2,DY3,DZ1`.
pub fn parse_distortion(text: &str) -> Result<Distortion, CliError> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("cannot parse distortion {text:?}")))?;
    let [a, b, c] = v[..] else {
        return Err(CliError::Usage(format!("distortion needs three values, got {text:?}")));
    };
    Ok(Distortion::new(a, b, c))
}

/// Parses `WA,WB,WC`.
pub fn parse_weights(text: &str) -> Result<[f64; 3], CliError> {
    let d = parse_distortion(text).map_err(|_| CliError::Usage(format!("cannot parse weights {text:?}")))?;
    Ok([d.dx2, d.dy3, d.dz1])
}
