//! Procrustes-optimal quasi-diabatic states.
//!
//! The overlap block `O_JI = ⟨Φ⁰_J|Φ_I⟩` between the model determinants and
//! the resolved states is split as `O = UΣWᵀ`. Its distance from a
//! block-diagonal form is `d = ‖Σ − I‖_F` and its distance from a symmetric
//! form is `r = ‖U − W‖_F`. Rotating the states by `R` gives `O·R`, and the
//! polar factor `B = UWᵀ` of the left polar form `O = (UΣUᵀ)·B` makes
//! `O·Bᵀ = UΣUᵀ` symmetric, so `R = Bᵀ` yields `r = 0`.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::ansatz::{Probe, ProbeSet};
use crate::evqe::{EnsembleProblem, EnsembleResult, OptimizeOptions, SpinMode};
use crate::optim::{augmented_lagrangian, bfgs, AugmentedLagrangianOptions, ConstrainedEval};
use crate::qubits::{SparseOperator, StateVector};
use crate::resolve::{
    angle_bfgs_options, lattice_starts, off_diagonal_max, overlap_with_gradient, reflection_c, rotation_xzy, Angles,
    SubspaceProbe,
};
use crate::{Error, Result};

const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub u: Matrix3<f64>,
    /// Singular values, descending.
    pub sigma: [f64; 3],
    pub w: Matrix3<f64>,
    /// ‖Σ − I‖_F.
    pub d: f64,
    /// ‖U − W‖_F.
    pub r: f64,
    /// UΣUᵀ.
    pub o_star: Matrix3<f64>,
    /// UWᵀ.
    pub b: Matrix3<f64>,
    pub det_sign: f64,
    pub rank_deficient: bool,
}

/// SVD of a 3×3 overlap block with singular values sorted descending and
/// singular vectors sign-fixed so that det U = +1 (and det W = +1 whenever
/// det O > 0).
pub fn decompose(o: &Matrix3<f64>) -> Result<Decomposition> {
    if o.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let svd = o.svd(true, true);
    let (u0, vt0) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut u = Matrix3::from_fn(|i, k| u0[(i, order[k])]);
    let mut w = Matrix3::from_fn(|i, k| vt0[(order[k], i)]);
    let sigma = order.map(|k| svd.singular_values[k]);
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
        w.column_mut(2).neg_mut();
    }
    let det = o.determinant();
    let sig = Matrix3::from_diagonal(&nalgebra::Vector3::from(sigma));
    Ok(Decomposition {
        d: (sig - Matrix3::identity()).norm(),
        r: (u - w).norm(),
        o_star: u * sig * u.transpose(),
        b: u * w.transpose(),
        det_sign: if det < 0.0 { -1.0 } else { 1.0 },
        rank_deficient: sigma[2] <= RANK_TOL,
        u,
        sigma,
        w,
    })
}

/// The Procrustes-optimal rotation target: the orthogonal polar factor `B`.
pub fn procrustes_qstar(o: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let dec = decompose(o)?;
    if dec.rank_deficient {
        return Err(Error::Conditioning(dec.sigma[2]));
    }
    Ok(dec.b)
}

/// r² = ‖U − W‖²_F and its gradient with respect to the entries of `O`.
pub fn r_squared_with_gradient(o: &Matrix3<f64>) -> Result<(f64, Matrix3<f64>)> {
    let dec = decompose(o)?;
    if dec.rank_deficient {
        return Err(Error::Conditioning(dec.sigma[2]));
    }
    let c = dec.w.transpose() * dec.u;
    let gm = Matrix3::from_fn(|i, j| (c[(j, i)] - c[(i, j)]) / (dec.sigma[i] + dec.sigma[j]));
    let dtrace = dec.u * gm * dec.w.transpose();
    Ok((dec.r * dec.r, dtrace * -2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub angles: Angles,
    /// The input had det = −1 and was factored as R(angles)·diag(1, 1, −1).
    pub reflection: bool,
    /// cos φ vanished and the split between θ and ψ was fixed by ψ = 0.
    pub gimbal: bool,
    pub residual: f64,
}

fn reconstruction_residual(q: &Matrix3<f64>, a: &Angles) -> f64 {
    (rotation_xzy(a) - q).abs().max()
}

/// Least-squares polish of extracted angles against `q`.
fn refit(q: &Matrix3<f64>, a: Angles) -> Result<Angles> {
    let r = bfgs(
        |x: &[f64]| {
            let a = Angles::from_slice(x);
            let diff = rotation_xzy(&a) - q;
            let g = (0..3)
                .map(|k| {
                    let dr = (rotation_xzy(&a.shifted(k, std::f64::consts::FRAC_PI_2))
                        - rotation_xzy(&a.shifted(k, -std::f64::consts::FRAC_PI_2)))
                        * 0.5;
                    2.0 * diff.dot(&dr)
                })
                .collect();
            Ok((diff.norm_squared(), g))
        },
        &a.to_array(),
        &angle_bfgs_options(),
    )?;
    Ok(Angles::from_slice(&r.x))
}

/// Angles with `R_x(θ)·R_z(φ)·R_y(ψ) = q`, or `= q·diag(1, 1, −1)` for an
/// improper `q`.
pub fn angles_from_rotation(q: &Matrix3<f64>) -> Result<Extraction> {
    let defect = (q.transpose() * q - Matrix3::identity()).abs().max();
    if defect > 1e-8 {
        return Err(Error::Contract(format!("matrix is not orthogonal (defect {defect:.2e})")));
    }
    let reflection = q.determinant() < 0.0;
    let q = if reflection { q * reflection_c() } else { *q };
    let phi = (-q[(0, 1)]).clamp(-1.0, 1.0).asin();
    let gimbal = phi.cos().abs() < 1e-8;
    let mut angles = if gimbal {
        Angles::new((-q[(1, 2)]).atan2(q[(2, 2)]), phi, 0.0)
    } else {
        Angles::new(q[(2, 1)].atan2(q[(1, 1)]), phi, q[(0, 2)].atan2(q[(0, 0)]))
    };
    if reconstruction_residual(&q, &angles) > 1e-13 {
        let polished = refit(&q, angles)?;
        if reconstruction_residual(&q, &polished) < reconstruction_residual(&q, &angles) {
            angles = polished;
        }
    }
    let residual = reconstruction_residual(&q, &angles);
    if residual > 1e-9 {
        return Err(Error::Extraction(residual));
    }
    Ok(Extraction {
        angles: angles.wrapped(),
        reflection,
        gimbal,
        residual,
    })
}

/// Overlap block of a resolved subspace with its model space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubspaceOverlap {
    /// O_JI, row J = model determinant, column I = state.
    pub o: [[f64; 3]; 3],
    /// Norm of each state outside the model space, sqrt(1 − Σ_J O_JI²).
    pub leakage: [f64; 3],
    pub sigma: [f64; 3],
    pub d: f64,
    pub r: f64,
    pub rank_deficient: bool,
}

fn rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

impl SubspaceOverlap {
    pub fn new(o: &Matrix3<f64>) -> Result<Self> {
        let dec = decompose(o)?;
        Ok(Self {
            o: rows(o),
            leakage: [0, 1, 2].map(|i| (1.0 - o.column(i).norm_squared()).max(0.0).sqrt()),
            sigma: dec.sigma,
            d: dec.d,
            r: dec.r,
            rank_deficient: dec.rank_deficient,
        })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.o[i][j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Angles read off the closed-form target `Bᵀ`.
    ClosedForm,
    /// r² minimized over the angles.
    Variational,
    /// Both, with an agreement check; the closed-form result is returned.
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiabaticStates {
    pub route: Route,
    pub angles: Angles,
    pub reflection: bool,
    pub gimbal: bool,
    pub before: SubspaceOverlap,
    pub after: SubspaceOverlap,
    /// UΣUᵀ of the overlap before rotation.
    pub o_star: [[f64; 3]; 3],
    /// H̆′ in the diabatic states.
    pub h: [[f64; 3]; 3],
    pub off_diagonal_max: f64,
    /// Angles found by r² minimization, when run.
    pub variational_angles: Option<Angles>,
    /// Largest entry difference between the two routes' rotated overlaps.
    pub route_gap: Option<f64>,
}

fn minimize_r_squared(probe: &dyn SubspaceProbe) -> Result<(Angles, f64)> {
    let mut best: Option<(f64, Angles)> = None;
    for start in lattice_starts() {
        let res = bfgs(
            |x: &[f64]| {
                let (o, d) = overlap_with_gradient(probe, &Angles::from_slice(x));
                let (r2, g) = r_squared_with_gradient(&o)?;
                Ok((r2, d.iter().map(|dk| g.dot(dk)).collect()))
            },
            &start.to_array(),
            &angle_bfgs_options(),
        )?;
        let a = Angles::from_slice(&res.x).wrapped();
        let r2 = res.f;
        if best.is_none_or(|(b, _)| r2 < b - 1e-14) {
            best = Some((r2, a));
        }
        if r2 < 1e-20 {
            break;
        }
    }
    let (r2, a) = best.expect("lattice is non-empty");
    Ok((a, r2.max(0.0).sqrt()))
}

/// Rotates the resolved states into the Procrustes-optimal diabatic states.
pub fn optimal_diabatic_states(probe: &dyn SubspaceProbe, route: Route) -> Result<DiabaticStates> {
    let o0 = probe.overlap(&Angles::zero());
    let before = SubspaceOverlap::new(&o0)?;
    if before.rank_deficient {
        return Err(Error::Conditioning(before.sigma[2]));
    }
    let reflection = o0.determinant() < 0.0;
    let reflected;
    let p: &dyn SubspaceProbe = if reflection {
        reflected = probe.reflected();
        &*reflected
    } else {
        probe
    };
    let dec = decompose(&p.overlap(&Angles::zero()))?;
    let closed = angles_from_rotation(&dec.b.transpose())?;
    let variational = match route {
        Route::ClosedForm => None,
        Route::Variational | Route::Both => Some(minimize_r_squared(p)?.0),
    };
    let angles = match (route, variational) {
        (Route::Variational, Some(v)) => v,
        _ => closed.angles,
    };
    let route_gap = match (route, variational) {
        (Route::Both, Some(v)) => Some((p.overlap(&closed.angles) - p.overlap(&v)).abs().max()),
        _ => None,
    };
    let o = p.overlap(&angles);
    let h = p.matrix(&angles);
    Ok(DiabaticStates {
        route,
        angles,
        reflection,
        gimbal: closed.gimbal,
        before,
        after: SubspaceOverlap::new(&o)?,
        o_star: rows(&dec.o_star),
        off_diagonal_max: off_diagonal_max(&h),
        h: rows(&h),
        variational_angles: variational,
        route_gap,
    })
}

/// How the diabatic condition enters the ensemble optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DiabaticCondition {
    /// r ≤ ε, enforced by the augmented Lagrangian.
    Constraint { epsilon: f64 },
    /// λ·r added to the objective.
    Penalty { lambda: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstrainedDiabatic {
    pub ensemble: EnsembleResult,
    pub overlap: SubspaceOverlap,
    pub converged: bool,
}

fn overlap_probes(problem: &EnsembleProblem) -> Result<ProbeSet> {
    let mut probes: Vec<Probe> = (0..3)
        .flat_map(|s| [Probe::Expectation { state: s, op: 0 }, Probe::Expectation { state: s, op: 1 }])
        .collect();
    for i in 0..3 {
        for j in 0..3 {
            probes.push(Probe::Amplitude {
                state: i,
                basis: problem.model[j].bits as usize,
            });
        }
    }
    Ok(ProbeSet {
        initial: problem.model.iter().map(StateVector::prepare_onv).collect(),
        operators: vec![
            SparseOperator::from_pauli_sum(&problem.hamiltonian)?,
            SparseOperator::from_pauli_sum(&problem.s2)?,
        ],
        probes,
    })
}

const OVERLAP_OFFSET: usize = 6;

/// Packs d(value)/d(O_JI) into the probe-gradient slots of [`overlap_probes`].
fn overlap_slot(j: usize, i: usize) -> usize {
    OVERLAP_OFFSET + 3 * i + j
}

fn overlap_from_values(p: &[f64]) -> Matrix3<f64> {
    Matrix3::from_fn(|j, i| p[overlap_slot(j, i)])
}

/// Spin deviation Σ_I |⟨S²⟩_I − S_I(S_I+1)| with its probe derivatives.
fn spin_terms(p: &[f64], targets: [f64; 3], d: &mut [f64], weight: f64) -> f64 {
    let mut v = 0.0;
    for i in 0..3 {
        let dev = p[2 * i + 1] - targets[i];
        v += dev.abs();
        d[2 * i + 1] += weight * if dev < -1e-12 { -1.0 } else { 1.0 };
    }
    weight * v
}

/// Ensemble VQE whose states are additionally required to be the
/// Procrustes-optimal diabatic states, starting from `opts.init`.
pub fn constrained_diabatic_optimize(
    problem: &EnsembleProblem,
    opts: &OptimizeOptions,
    condition: DiabaticCondition,
) -> Result<ConstrainedDiabatic> {
    let probes = overlap_probes(problem)?;
    let targets = problem.spin_targets.map(|s| s * (s + 1.0));
    let pool = &problem.pool;
    let n_probes = probes.probes.len();
    let (spin_lambda, spin_epsilon) = match problem.mode {
        SpinMode::Penalty { lambda } => (lambda, None),
        SpinMode::Constrained { epsilon } => (0.0, Some(epsilon)),
    };
    let x0 = crate::evqe::initial_point(problem, &opts.init)?;
    let energy_value = |p: &[f64], d: &mut [f64]| {
        let mut v = 0.0;
        for i in 0..3 {
            v += p[2 * i];
            d[2 * i] = 1.0;
        }
        v
    };
    let r_squared = |p: &[f64], d: &mut [f64], weight: f64| -> f64 {
        match r_squared_with_gradient(&overlap_from_values(p)) {
            Ok((r2, g)) => {
                for j in 0..3 {
                    for i in 0..3 {
                        d[overlap_slot(j, i)] += weight * g[(j, i)];
                    }
                }
                r2
            }
            Err(_) => f64::NAN,
        }
    };
    let (x, iterations, converged, trace) = match condition {
        DiabaticCondition::Penalty { lambda } => {
            let r = bfgs(
                |t: &[f64]| {
                    probes.value_and_gradient(pool, t, |p| {
                        let mut d = vec![0.0; n_probes];
                        let mut v = energy_value(p, &mut d);
                        v += spin_terms(p, targets, &mut d, spin_lambda);
                        let mut dr = vec![0.0; n_probes];
                        let r2 = r_squared(p, &mut dr, 1.0);
                        let r = r2.max(0.0).sqrt();
                        if r > 0.0 {
                            for (a, b) in d.iter_mut().zip(&dr) {
                                *a += lambda * b / (2.0 * r);
                            }
                        }
                        (v + lambda * r, d)
                    })
                },
                &x0,
                &opts.bfgs,
            )?;
            (r.x, r.iterations, r.converged, r.trace)
        }
        DiabaticCondition::Constraint { epsilon } => {
            let al = AugmentedLagrangianOptions {
                inner: opts.bfgs,
                feasibility_tol: 0.0,
                ..Default::default()
            };
            let r = augmented_lagrangian(
                |t: &[f64]| {
                    let (f, grad) = probes.value_and_gradient(pool, t, |p| {
                        let mut d = vec![0.0; n_probes];
                        let mut v = energy_value(p, &mut d);
                        v += spin_terms(p, targets, &mut d, spin_lambda);
                        (v, d)
                    })?;
                    let (r, r_grad) = probes.value_and_gradient(pool, t, |p| {
                        let mut d = vec![0.0; n_probes];
                        let r2 = r_squared(p, &mut d, 1.0);
                        let r = r2.max(0.0).sqrt();
                        let scale = if r > 0.0 { 0.5 / r } else { 0.0 };
                        d.iter_mut().for_each(|x| *x *= scale);
                        (r, d)
                    })?;
                    let mut c = vec![r - epsilon];
                    let mut c_grad = vec![r_grad];
                    if let Some(eps) = spin_epsilon {
                        let (dev, g) = probes.value_and_gradient(pool, t, |p| {
                            let mut d = vec![0.0; n_probes];
                            (spin_terms(p, targets, &mut d, 1.0), d)
                        })?;
                        c.push(dev - eps);
                        c_grad.push(g);
                    }
                    Ok(ConstrainedEval { f, grad, c, c_grad })
                },
                &x0,
                &al,
            )?;
            (r.x, r.inner_iterations, r.converged, r.trace)
        }
    };
    let ensemble = crate::evqe::summarize(problem, x, iterations, converged, trace)?;
    let overlap = SubspaceOverlap::new(&overlap_from_values(&probes.values(pool, &ensemble.t_star)))?;
    Ok(ConstrainedDiabatic {
        converged: ensemble.converged,
        ensemble,
        overlap,
    })
}
