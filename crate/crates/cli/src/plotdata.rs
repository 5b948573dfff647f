//! Per-figure CSV tables.
//!
//! | id    | columns |
//! |-------|---------|
//! | fig1b | dz1, E0..E3 (FCI roots) |
//! | fig3a | dz1, block-diagonal H_AA, H_BB, H_CC, E0..E2 |
//! | fig3b | dz1, O_AA, O_BB, O_CC, leakage_A..C |
//! | fig4b | dz1, H'_AA, H'_BB, H'_CC (resolved), E0..E2 |
//! | fig5a | dz1, d, r (before diabatization) |
//! | fig5b | dz1, the nine overlap entries O_JI |
//! | fig6a | dz1, diabatic H'_AA, H'_BB, H'_CC, E0..E2 |
//! | fig6b | dz1, the nine entries of the diabatized overlap |
//! | fig7  | dz1, off-diagonals before and after diabatization |

use evqe_core::pipeline::{PointReport, Stage};

use crate::scan::{fmt, ScanReport};
use crate::CliError;

pub const FIGURES: [&str; 9] = ["fig1b", "fig3a", "fig3b", "fig4b", "fig5a", "fig5b", "fig6a", "fig6b", "fig7"];

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

const LABELS: [&str; 3] = ["A", "B", "C"];

fn pairs() -> impl Iterator<Item = (usize, usize)> {
    (0..3).flat_map(|j| (0..3).map(move |i| (j, i)))
}

fn fci3(r: &PointReport) -> [f64; 3] {
    [r.fci[0], r.fci[1], r.fci[2]]
}

fn off_diagonal(m: &[[f64; 3]; 3]) -> [f64; 3] {
    [m[0][1], m[0][2], m[1][2]]
}

/// Figures a scan of the given stage can produce.
pub fn figures_for(stage: Stage) -> Vec<&'static str> {
    FIGURES
        .into_iter()
        .filter(|f| match *f {
            "fig1b" => true,
            "fig4b" => stage.adiabatic(),
            "fig6a" | "fig6b" | "fig7" => stage.diabatic(),
            _ => stage != Stage::FciOnly,
        })
        .collect()
}

type RowFn = fn(&PointReport) -> Option<Vec<f64>>;

fn layout(fig: &str) -> Option<(Vec<String>, RowFn)> {
    let e = |v: &mut Vec<String>| v.extend(["E0", "E1", "E2"].map(String::from));
    let (mut header, f): (Vec<String>, RowFn) = match fig {
        "fig1b" => (
            vec!["E0".into(), "E1".into(), "E2".into(), "E3".into()],
            |r| Some(r.fci.iter().take(4).cloned().collect()),
        ),
        "fig3a" => {
            let mut h: Vec<String> = LABELS.iter().map(|l| format!("H_{l}{l}")).collect();
            e(&mut h);
            (h, |r| {
                let b = r.block?;
                Some([b[0][0], b[1][1], b[2][2]].into_iter().chain(fci3(r)).collect())
            })
        }
        "fig3b" => {
            let h = LABELS
                .iter()
                .map(|l| format!("O_{l}{l}"))
                .chain(LABELS.iter().map(|l| format!("leakage_{l}")))
                .collect();
            (h, |r| {
                let o = r.block_overlap.as_ref()?;
                Some((0..3).map(|i| o.o[i][i]).chain(o.leakage).collect())
            })
        }
        "fig4b" => {
            let mut h: Vec<String> = LABELS.iter().map(|l| format!("H'_{l}{l}")).collect();
            e(&mut h);
            (h, |r| {
                let a = r.adiabatic.as_ref()?;
                Some(a.resolution.diagonal.into_iter().chain(fci3(r)).collect())
            })
        }
        "fig5a" => (vec!["d".into(), "r".into()], |r| {
            let o = r.block_overlap.as_ref()?;
            Some(vec![o.d, o.r])
        }),
        "fig5b" => (
            pairs().map(|(j, i)| format!("O_{}{}", LABELS[j], LABELS[i])).collect(),
            |r| {
                let o = r.block_overlap.as_ref()?;
                Some(pairs().map(|(j, i)| o.o[j][i]).collect())
            },
        ),
        "fig6a" => {
            let mut h: Vec<String> = LABELS.iter().map(|l| format!("H'_{l}{l}")).collect();
            e(&mut h);
            (h, |r| {
                let d = r.diabatic.as_ref()?;
                Some((0..3).map(|i| d.h[i][i]).chain(fci3(r)).collect())
            })
        }
        "fig6b" => (
            pairs().map(|(j, i)| format!("Ostar_{}{}", LABELS[j], LABELS[i])).collect(),
            |r| {
                let d = r.diabatic.as_ref()?;
                Some(pairs().map(|(j, i)| d.overlap.o[j][i]).collect())
            },
        ),
        "fig7" => (
            ["before", "after"]
                .iter()
                .flat_map(|w| ["AB", "AC", "BC"].map(|p| format!("H_{p}_{w}")))
                .collect(),
            |r| {
                let before = off_diagonal(&r.block?);
                let after = off_diagonal(&r.diabatic.as_ref()?.h);
                Some(before.into_iter().chain(after).collect())
            },
        ),
        _ => return None,
    };
    header.insert(0, "dz1".into());
    Some((header, f))
}

/// The CSV table for one figure id. Points lacking the needed stage or
/// that failed are skipped; rows follow grid order.
pub fn emit_plotdata(report: &ScanReport, fig: &str) -> Result<Table, CliError> {
    let (header, f) = layout(fig).ok_or_else(|| {
        CliError::Usage(format!("unknown figure id {fig:?}; expected one of {}", FIGURES.join(", ")))
    })?;
    let rows = report
        .reports()
        .filter_map(|r| {
            let values = f(r)?;
            Some(std::iter::once(fmt(r.distortion.dz1)).chain(values.into_iter().map(fmt)).collect())
        })
        .collect();
    Ok(Table { header, rows })
}
