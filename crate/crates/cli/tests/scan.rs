use std::fs;
use std::process::Command;

use evqe_cli::config::GridSpec;
use evqe_cli::{emit_plotdata, run_scan, write_outputs, ScanConfig, FIGURES};
use evqe_core::pipeline::Stage;
use evqe_core::scf::MoKind;

fn small_config(jobs: usize) -> ScanConfig {
    let mut c = ScanConfig {
        grid: GridSpec::parse("-0.05:0.05:0.05").unwrap(),
        jobs,
        ..Default::default()
    };
    c.pipeline.mo = MoKind::Diabatic;
    c
}

#[test]
fn sequential_runs_write_identical_csvs() {
    let c = small_config(1);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_outputs(&run_scan(&c, Stage::Full).unwrap(), a.path()).unwrap();
    write_outputs(&run_scan(&c, Stage::Full).unwrap(), b.path()).unwrap();
    let mut files = vec!["scan.csv".to_string()];
    files.extend(FIGURES.iter().map(|f| format!("plotdata/{f}.csv")));
    for f in files {
        let x = fs::read(a.path().join(&f)).unwrap();
        let y = fs::read(b.path().join(&f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn parallel_scan_matches_sequential() {
    let seq = run_scan(&small_config(1), Stage::Full).unwrap();
    let par = run_scan(&small_config(3), Stage::Full).unwrap();
    assert_eq!(seq.points.len(), par.points.len());
    for (s, p) in seq.reports().zip(par.reports()) {
        assert_eq!(s.index, p.index);
        let (es, ep) = (s.ensemble.as_ref().unwrap(), p.ensemble.as_ref().unwrap());
        assert!((es.ensemble_energy - ep.ensemble_energy).abs() < 1e-12);
        let (ds, dp) = (s.diabatic.as_ref().unwrap(), p.diabatic.as_ref().unwrap());
        for i in 0..3 {
            for j in 0..3 {
                assert!((ds.h[i][j] - dp.h[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn adiabatic_scan_matches_fci_and_figure_columns() {
    let mut c = ScanConfig {
        grid: GridSpec::parse("0.1,0.05;-0.2,0.0,0.25").unwrap(),
        jobs: 2,
        ..Default::default()
    };
    c.pipeline.mo = MoKind::CanonicalRohf;
    let report = run_scan(&c, Stage::Adiabatic).unwrap();
    assert_eq!(report.n_failed(), 0);
    for r in report.reports() {
        assert!(r.adiabatic.as_ref().unwrap().fci_error < 1e-6);
    }
    let t = emit_plotdata(&report, "fig4b").unwrap();
    assert_eq!(t.header, ["dz1", "H'_AA", "H'_BB", "H'_CC", "E0", "E1", "E2"]);
    assert_eq!(t.rows.len(), 3);
    for row in &t.rows {
        let v: Vec<f64> = row.iter().map(|x| x.parse().unwrap()).collect();
        let mut h = [v[1], v[2], v[3]];
        h.sort_by(f64::total_cmp);
        for i in 0..3 {
            assert!((h[i] - v[4 + i]).abs() < 1e-6);
        }
    }
    assert_eq!(emit_plotdata(&report, "fig5b").unwrap().header.len(), 10);
    assert!(emit_plotdata(&report, "fig7").unwrap().rows.is_empty());
    assert!(emit_plotdata(&report, "fig99").is_err());
}

#[test]
fn fig7_has_before_and_after_couplings() {
    let report = run_scan(&small_config(1), Stage::Diabatic).unwrap();
    let t = emit_plotdata(&report, "fig7").unwrap();
    assert_eq!(t.header.len(), 7);
    assert_eq!(t.header[1], "H_AB_before");
    assert_eq!(t.header[6], "H_BC_after");
    assert_eq!(t.rows.len(), 3);
}

#[test]
fn binary_reports_usage_errors_and_honours_out_env() {
    let exe = env!("CARGO_BIN_EXE_evqe");
    let bad = Command::new(exe).args(["adiabatic", "--solver", "bogus"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let bad_grid = Command::new(exe).args(["fci-only", "--grid", "x:y"]).output().unwrap();
    assert_eq!(bad_grid.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let ok = Command::new(exe)
        .args(["fci-only", "--grid", "0.0,0.1"])
        .env("EVQE_OUT", dir.path())
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let fig = fs::read_to_string(dir.path().join("plotdata/fig1b.csv")).unwrap();
    let mut lines = fig.lines();
    assert_eq!(lines.next(), Some("dz1,E0,E1,E2,E3"));
    assert_eq!(lines.count(), 2);
    assert!(dir.path().join("points/point_001.json").exists());
}
