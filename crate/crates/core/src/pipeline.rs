//! Per-geometry orchestration: integrals, orbitals, FCI reference, ensemble
//! VQE, eigenstate resolution and diabatization.

use std::sync::Arc;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::ansatz::{build_guccsd_pool, ExcitationPool};
use crate::diabat::{
    constrained_diabatic_optimize, optimal_diabatic_states, DiabaticCondition, DiabaticStates, Route,
    SubspaceOverlap,
};
use crate::evqe::{
    model_determinants, optimize_ensemble, EnsembleProblem, EnsembleResult, Initialization, OptimizeOptions, SpinMode,
};
use crate::geometry::{h4_at, Distortion, Geometry};
use crate::integrals::{cross_ao_overlap, sto3g_integrals, BasisRule};
use crate::optim::BfgsOptions;
use crate::qubits::{jordan_wigner, jw_s2, PauliSum};
use crate::resolve::{assign_adiabatic_order, off_diagonal_max, solve, Angles, CircuitProbe, Resolution, Solver, SubspaceProbe};
use crate::scf::{diabatic_mos, lowdin_orbitals, rohf, MoBasis, MoKind};
use crate::secondq::{ao_to_mo, fci_solve, Sector};
use crate::{Result, N_SPATIAL};

/// Which stages to run after the FCI reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    FciOnly,
    Adiabatic,
    Diabatic,
    Full,
}

impl Stage {
    pub fn adiabatic(self) -> bool {
        matches!(self, Stage::Adiabatic | Stage::Full)
    }

    pub fn diabatic(self) -> bool {
        matches!(self, Stage::Diabatic | Stage::Full)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiabatizationRoute {
    /// Rotate the converged states by the Procrustes-optimal angles.
    Rotation,
    /// Re-optimize the ensemble with the constraint r ≤ ε.
    Constrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    pub f_tol: f64,
    pub gradient_tol: f64,
    pub loose_gradient_tol: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        let b = OptimizeOptions::default().bfgs;
        Self {
            max_iterations: b.max_iterations,
            f_tol: b.f_tol,
            gradient_tol: b.gradient_tol,
            loose_gradient_tol: b.loose_gradient_tol,
        }
    }
}

impl OptimizerSettings {
    pub fn bfgs(&self) -> BfgsOptions {
        BfgsOptions {
            max_iterations: self.max_iterations,
            f_tol: self.f_tol,
            gradient_tol: self.gradient_tol,
            loose_gradient_tol: self.loose_gradient_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mo: MoKind,
    /// Geometry whose ROHF orbitals anchor the diabatic MO basis.
    pub reference: Distortion,
    pub repetitions: usize,
    pub mode: SpinMode,
    pub solver: Solver,
    pub route: DiabatizationRoute,
    /// Tolerance on r in the constrained diabatization.
    pub epsilon_r: f64,
    pub optimizer: OptimizerSettings,
    /// Number of FCI roots reported.
    pub fci_roots: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mo: MoKind::CanonicalRohf,
            reference: crate::geometry::default_diabatic_reference(),
            repetitions: 2,
            mode: SpinMode::default(),
            solver: Solver::Frobenius,
            route: DiabatizationRoute::Rotation,
            epsilon_r: 1e-8,
            optimizer: OptimizerSettings::default(),
            fci_roots: 4,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        let positive = [o.f_tol, o.gradient_tol, o.loose_gradient_tol, self.epsilon_r];
        if positive.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || o.max_iterations == 0 {
            return Err(crate::Error::Domain("optimizer tolerances must be non-negative and finite".into()));
        }
        if self.repetitions == 0 || self.fci_roots < 3 {
            return Err(crate::Error::Domain("need at least one repetition and three FCI roots".into()));
        }
        if let Solver::Weighted { weights } = self.solver {
            if !(weights[0] >= weights[1] && weights[1] >= weights[2] && weights[2] > 0.0) {
                return Err(crate::Error::Domain("weights must satisfy w_A ≥ w_B ≥ w_C > 0".into()));
            }
        }
        if !self.reference.is_finite() {
            return Err(crate::Error::Domain("non-finite reference distortion".into()));
        }
        Ok(())
    }
}

/// ROHF orbitals at the diabatic reference geometry.
#[derive(Debug, Clone)]
pub struct ReferenceOrbitals {
    pub geometry: Geometry,
    pub mo: MoBasis,
    pub hash: String,
}

/// Everything shared by the points of one scan.
#[derive(Debug, Clone)]
pub struct ScanContext {
    pub config: PipelineConfig,
    pub pool: Arc<ExcitationPool>,
    pub s2: PauliSum,
    pub reference: Option<ReferenceOrbitals>,
}

impl ScanContext {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let reference = if config.mo == MoKind::Diabatic {
            let geometry = h4_at(config.reference);
            let ao = sto3g_integrals(&geometry)?;
            let mo = rohf(&ao, 2, 1)?.mo;
            Some(ReferenceOrbitals {
                hash: geometry.hash(),
                geometry,
                mo,
            })
        } else {
            None
        };
        Ok(Self {
            pool: Arc::new(build_guccsd_pool(N_SPATIAL)?),
            s2: jw_s2(N_SPATIAL),
            reference,
            config,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub energies: [f64; 3],
    pub ensemble_energy: f64,
    /// Ensemble energy minus the sum of the three lowest FCI roots.
    pub fci_gap: f64,
    pub s2: [f64; 3],
    pub spin_deviation: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Smallest ensemble-energy iterate minus the FCI sum.
    pub min_trace_gap: f64,
    pub t_star: Vec<f64>,
}

impl EnsembleSummary {
    fn new(r: &EnsembleResult, fci_sum: f64) -> Self {
        Self {
            energies: r.energies,
            ensemble_energy: r.ensemble_energy,
            fci_gap: r.ensemble_energy - fci_sum,
            s2: r.s2,
            spin_deviation: r.spin_deviation,
            iterations: r.iterations,
            converged: r.converged,
            min_trace_gap: r.trace.iter().cloned().fold(f64::INFINITY, f64::min) - fci_sum,
            t_star: r.t_star.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdiabaticReport {
    pub resolution: Resolution,
    pub permutation: Vec<usize>,
    pub reordered: bool,
    /// max_I |sorted H′_II − E_I|.
    pub fci_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiabaticReport {
    pub route: DiabatizationRoute,
    /// Present for the rotation route.
    pub states: Option<DiabaticStates>,
    /// Present for the constrained route.
    pub constrained: Option<EnsembleSummary>,
    /// Overlap block after diabatization.
    pub overlap: SubspaceOverlap,
    /// H̆′ in the diabatic states.
    pub h: [[f64; 3]; 3],
    pub off_diagonal_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointReport {
    pub index: usize,
    pub distortion: Distortion,
    pub geometry_hash: String,
    pub mo: MoKind,
    pub e_nuc: f64,
    pub e_rohf: f64,
    pub fci: Vec<f64>,
    pub fci_s2: Vec<f64>,
    pub ensemble: Option<EnsembleSummary>,
    /// H̆(t*) over the unrotated model states.
    pub block: Option<[[f64; 3]; 3]>,
    pub block_overlap: Option<SubspaceOverlap>,
    pub adiabatic: Option<AdiabaticReport>,
    pub diabatic: Option<DiabaticReport>,
    pub flags: Vec<String>,
}

impl PointReport {
    pub fn failed(&self) -> bool {
        !self.flags.is_empty()
    }
}

fn rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

const ENERGY_TOL: f64 = 1e-6;
const SPIN_TOL: f64 = 1e-6;
const R_TOL: f64 = 1e-6;

fn orbitals(ctx: &ScanContext, geometry: &Geometry, ao: &crate::integrals::AoIntegrals, canonical: &MoBasis) -> Result<MoBasis> {
    match ctx.config.mo {
        MoKind::CanonicalRohf => Ok(canonical.clone()),
        MoKind::Lowdin => lowdin_orbitals(ao),
        MoKind::Diabatic => {
            let r = ctx.reference.as_ref().expect("reference built for diabatic runs");
            let m = cross_ao_overlap(&r.geometry, geometry, &BasisRule::sto3g_hydrogen())?;
            diabatic_mos(&r.mo, canonical, &m, &r.hash)
        }
    }
}

/// Runs the requested stages at one geometry. `warm` seeds the ensemble
/// optimization; by default every point starts from t = 0.
pub fn run_point(ctx: &ScanContext, index: usize, d: Distortion, stage: Stage, warm: Option<&[f64]>) -> Result<PointReport> {
    let cfg = &ctx.config;
    let geometry = h4_at(d);
    let ao = sto3g_integrals(&geometry)?;
    let scf = rohf(&ao, 2, 1)?;
    let mo = orbitals(ctx, &geometry, &ao, &scf.mo)?;
    let mi = ao_to_mo(&ao, &mo)?;
    let fci = fci_solve(&mi, Sector::DOUBLET)?;
    let fci_report = fci.report(&geometry.hash(), "", cfg.fci_roots, 0);
    let mut report = PointReport {
        index,
        distortion: d,
        geometry_hash: geometry.hash(),
        mo: cfg.mo,
        e_nuc: ao.e_nuc,
        e_rohf: scf.energy,
        fci: fci_report.roots.iter().map(|r| r.energy).collect(),
        fci_s2: fci_report.roots.iter().map(|r| r.s2).collect(),
        ensemble: None,
        block: None,
        block_overlap: None,
        adiabatic: None,
        diabatic: None,
        flags: Vec::new(),
    };
    if stage == Stage::FciOnly {
        return Ok(report);
    }
    let fci3 = [report.fci[0], report.fci[1], report.fci[2]];
    let fci_sum: f64 = fci3.iter().sum();

    let problem = EnsembleProblem::new(
        jordan_wigner(&mi),
        ctx.s2.clone(),
        model_determinants(),
        ctx.pool.clone(),
        cfg.repetitions,
        cfg.mode,
    )?;
    let opts = OptimizeOptions {
        init: match warm {
            Some(t) => Initialization::Warm { t: t.to_vec() },
            None => Initialization::Zeros,
        },
        bfgs: cfg.optimizer.bfgs(),
    };
    let ens = optimize_ensemble(&problem, &opts)?;
    let summary = EnsembleSummary::new(&ens, fci_sum);
    if summary.fci_gap.abs() > ENERGY_TOL {
        report.flags.push(format!("ensemble energy {:.3e} Ha from the FCI sum", summary.fci_gap));
    }
    if summary.spin_deviation > SPIN_TOL {
        report.flags.push(format!("spin deviation {:.3e}", summary.spin_deviation));
    }

    let probe = CircuitProbe::from_ensemble(&problem, &ens.t_star)?;
    let block = probe.matrix(&Angles::zero());
    report.block = Some(rows(&block));
    report.block_overlap = Some(SubspaceOverlap::new(&probe.overlap(&Angles::zero()))?);

    if stage.adiabatic() {
        let resolution = solve(&probe, cfg.solver)?;
        let (permutation, reordered) = assign_adiabatic_order(&resolution.diagonal);
        let mut sorted = resolution.diagonal;
        sorted.sort_by(f64::total_cmp);
        let fci_error = (0..3).map(|i| (sorted[i] - fci3[i]).abs()).fold(0.0, f64::max);
        if !resolution.converged {
            report.flags.push(format!("resolution off-diagonal {:.3e}", resolution.off_diagonal_max));
        }
        if resolution.fallback {
            report.flags.push("two-step solver fell back to Frobenius".into());
        }
        report.adiabatic = Some(AdiabaticReport {
            resolution,
            permutation,
            reordered,
            fci_error,
        });
    }

    if stage.diabatic() {
        let diabatic = match cfg.route {
            DiabatizationRoute::Rotation => {
                let states = optimal_diabatic_states(&probe, Route::Both)?;
                if states.reflection {
                    report.flags.push("Procrustes target is a rotoreflection".into());
                }
                if let Some(gap) = states.route_gap.filter(|g| *g > R_TOL) {
                    report.flags.push(format!("diabatization routes differ by {gap:.3e}"));
                }
                DiabaticReport {
                    route: cfg.route,
                    overlap: states.after.clone(),
                    h: states.h,
                    off_diagonal_max: states.off_diagonal_max,
                    states: Some(states),
                    constrained: None,
                }
            }
            DiabatizationRoute::Constrained => {
                let opts = OptimizeOptions {
                    init: Initialization::Warm { t: ens.t_star.clone() },
                    bfgs: cfg.optimizer.bfgs(),
                };
                let c = constrained_diabatic_optimize(
                    &problem,
                    &opts,
                    DiabaticCondition::Constraint { epsilon: cfg.epsilon_r },
                )?;
                let summary = EnsembleSummary::new(&c.ensemble, fci_sum);
                if summary.fci_gap.abs() > ENERGY_TOL {
                    report.flags.push(format!("constrained ensemble {:.3e} Ha from the FCI sum", summary.fci_gap));
                }
                let p = CircuitProbe::from_ensemble(&problem, &c.ensemble.t_star)?;
                let h = p.matrix(&Angles::zero());
                DiabaticReport {
                    route: cfg.route,
                    states: None,
                    overlap: c.overlap,
                    off_diagonal_max: off_diagonal_max(&h),
                    h: rows(&h),
                    constrained: Some(summary),
                }
            }
        };
        if diabatic.overlap.r > R_TOL {
            report.flags.push(format!("r = {:.3e} after diabatization", diabatic.overlap.r));
        }
        report.diabatic = Some(diabatic);
    }
    report.ensemble = Some(summary);
    Ok(report)
}
