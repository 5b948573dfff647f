//! Scan execution and the per-point JSON / scan-level CSV writers.

use std::fs;
use std::path::{Path, PathBuf};

use evqe_core::geometry::Distortion;
use evqe_core::pipeline::{run_point, PointReport, ScanContext, Stage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScanConfig;
use crate::plotdata::{emit_plotdata, figures_for, Table};
use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum PointOutcome {
    Ok(Box<PointReport>),
    Error { index: usize, distortion: Distortion, error: String },
}

impl PointOutcome {
    pub fn report(&self) -> Option<&PointReport> {
        match self {
            PointOutcome::Ok(r) => Some(r),
            PointOutcome::Error { .. } => None,
        }
    }

    pub fn index(&self) -> usize {
        match self {
            PointOutcome::Ok(r) => r.index,
            PointOutcome::Error { index, .. } => *index,
        }
    }

    pub fn failed(&self) -> bool {
        self.report().is_none_or(PointReport::failed)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanReport {
    pub stage: Stage,
    pub config: ScanConfig,
    pub points: Vec<PointOutcome>,
}

impl ScanReport {
    pub fn n_failed(&self) -> usize {
        self.points.iter().filter(|p| p.failed()).count()
    }

    pub fn reports(&self) -> impl Iterator<Item = &PointReport> {
        self.points.iter().filter_map(PointOutcome::report)
    }
}

fn outcome(ctx: &ScanContext, index: usize, d: Distortion, stage: Stage, warm: Option<&[f64]>) -> PointOutcome {
    match run_point(ctx, index, d, stage, warm) {
        Ok(r) => PointOutcome::Ok(Box::new(r)),
        Err(e) => PointOutcome::Error {
            index,
            distortion: d,
            error: e.to_string(),
        },
    }
}

/// Runs every grid point. Per-point failures are recorded and the scan
/// continues; points come back in grid order regardless of `jobs`.
pub fn run_scan(config: &ScanConfig, stage: Stage) -> Result<ScanReport, CliError> {
    config.validate()?;
    let grid = config.grid.points()?;
    let ctx = ScanContext::new(config.pipeline.clone())?;
    let points = if config.warm_start && stage != Stage::FciOnly {
        let mut warm: Option<Vec<f64>> = None;
        let mut out = Vec::with_capacity(grid.len());
        for (i, d) in grid.into_iter().enumerate() {
            let o = outcome(&ctx, i, d, stage, warm.as_deref());
            if let Some(e) = o.report().and_then(|r| r.ensemble.as_ref()) {
                warm = Some(e.t_star.clone());
            }
            out.push(o);
        }
        out
    } else if config.jobs == 1 {
        grid.into_iter().enumerate().map(|(i, d)| outcome(&ctx, i, d, stage, None)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", config.jobs)))?;
        pool.install(|| {
            grid.into_par_iter()
                .enumerate()
                .map(|(i, d)| outcome(&ctx, i, d, stage, None))
                .collect()
        })
    };
    Ok(ScanReport {
        stage,
        config: config.clone(),
        points,
    })
}

fn write_table(path: &Path, table: &Table) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `points/point_NNN.json`, `scan.csv`, one CSV per applicable
/// figure under `plotdata/`, and `summary.json`. Returns the files written.
pub fn write_outputs(report: &ScanReport, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let points_dir = dir.join("points");
    let plot_dir = dir.join("plotdata");
    fs::create_dir_all(&points_dir)?;
    fs::create_dir_all(&plot_dir)?;
    for p in &report.points {
        let path = points_dir.join(format!("point_{:03}.json", p.index()));
        fs::write(&path, serde_json::to_string_pretty(p)?)?;
        written.push(path);
    }
    let path = dir.join("scan.csv");
    write_table(&path, &scan_table(report))?;
    written.push(path);
    for fig in figures_for(report.stage) {
        let path = plot_dir.join(format!("{fig}.csv"));
        write_table(&path, &emit_plotdata(report, fig)?)?;
        written.push(path);
    }
    let summary = serde_json::json!({
        "stage": report.stage,
        "config": report.config,
        "points": report.points.len(),
        "failed": report.points.iter().filter(|p| p.failed()).map(PointOutcome::index).collect::<Vec<_>>(),
    });
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?)?;
    written.push(path);
    Ok(written)
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

/// One row per point: geometry, FCI roots, ensemble result, resolved
/// energies and, when present, the diabatic block.
pub fn scan_table(report: &ScanReport) -> Table {
    let header = [
        "index", "dx2", "dy3", "dz1", "status", "E0", "E1", "E2", "E_ens", "fci_gap", "spin_dev", "iterations",
        "E0_resolved", "E1_resolved", "E2_resolved", "H'_AA", "H'_BB", "H'_CC", "H'_AB", "H'_AC", "H'_BC", "d", "r",
        "flags",
    ];
    let rows = report
        .points
        .iter()
        .map(|p| match p {
            PointOutcome::Error { index, distortion: d, error } => {
                let mut row = vec![index.to_string(), fmt(d.dx2), fmt(d.dy3), fmt(d.dz1), "error".into()];
                row.resize(header.len() - 1, String::new());
                row.push(error.clone());
                row
            }
            PointOutcome::Ok(r) => {
                let d = r.distortion;
                let ens = r.ensemble.as_ref();
                let resolved = r.adiabatic.as_ref().map(|a| {
                    let mut s = a.resolution.diagonal;
                    s.sort_by(f64::total_cmp);
                    s
                });
                let dia = r.diabatic.as_ref();
                let h = |i: usize, j: usize| opt(dia.map(|x| x.h[i][j]));
                vec![
                    r.index.to_string(),
                    fmt(d.dx2),
                    fmt(d.dy3),
                    fmt(d.dz1),
                    if r.failed() { "flagged" } else { "ok" }.into(),
                    fmt(r.fci[0]),
                    fmt(r.fci[1]),
                    fmt(r.fci[2]),
                    opt(ens.map(|e| e.ensemble_energy)),
                    opt(ens.map(|e| e.fci_gap)),
                    opt(ens.map(|e| e.spin_deviation)),
                    ens.map(|e| e.iterations.to_string()).unwrap_or_default(),
                    opt(resolved.map(|s| s[0])),
                    opt(resolved.map(|s| s[1])),
                    opt(resolved.map(|s| s[2])),
                    h(0, 0),
                    h(1, 1),
                    h(2, 2),
                    h(0, 1),
                    h(0, 2),
                    h(1, 2),
                    opt(r.block_overlap.as_ref().map(|o| o.d)),
                    opt(dia.map(|x| x.overlap.r)),
                    r.flags.join("; "),
                ]
            }
        })
        .collect();
    Table {
        header: header.iter().map(|s| s.to_string()).collect(),
        rows,
    }
}
