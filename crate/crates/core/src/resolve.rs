//! Resolution of the optimized three-state subspace into eigenstates.
//!
//! Rotations of the model space are parameterized as
//! `R = R_x(θ)·R_z(φ)·R_y(ψ)`. Column `I` of `R` holds the coefficients of the
//! rotated model state `I` on the model determinants A, B, C. The states are
//! prepared by short circuits acting on qubits 1..3 of `|10001000⟩`, then
//! carried into the target space by the optimized ansatz. Diagonal elements
//! of `H̆′ = Rᵀ·H̆·R` depend on each angle as a degree-two trigonometric
//! polynomial with frequencies one and two in each angle, so exact
//! derivatives follow from a four-point shift rule.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::ansatz::{apply_ansatz, AnsatzParams, ExcitationPool};
use crate::evqe::EnsembleProblem;
use crate::optim::{bfgs, BfgsOptions};
use crate::qubits::{apply_circuit, Gate, SparseOperator, StateVector};
use crate::secondq::Determinant;
use crate::{Error, Result};

pub type SubspaceMatrix = Matrix3<f64>;

/// Prepared reference for every rotated-model circuit.
pub const CIRCUIT_START: &str = "10001000";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Angles {
    pub theta: f64,
    pub phi: f64,
    pub psi: f64,
}

/// Representative of `x` in [−π, π).
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

impl Angles {
    pub fn new(theta: f64, phi: f64, psi: f64) -> Self {
        Self { theta, phi, psi }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.theta, self.phi, self.psi]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self::new(x[0], x[1], x[2])
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn wrapped(self) -> Self {
        Self::new(wrap_angle(self.theta), wrap_angle(self.phi), wrap_angle(self.psi))
    }

    /// Same rotation angles shifted by multiples of 2π to lie nearest `previous`.
    pub fn unwrapped_against(self, previous: &Angles) -> Self {
        let near = |x: f64, p: f64| x + 2.0 * PI * ((p - x) / (2.0 * PI)).round();
        Self::new(
            near(self.theta, previous.theta),
            near(self.phi, previous.phi),
            near(self.psi, previous.psi),
        )
    }

    pub(crate) fn shifted(self, k: usize, by: f64) -> Self {
        let mut a = self.to_array();
        a[k] += by;
        Self::from_slice(&a)
    }
}

fn cross_matrix(n: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -n.z, n.y, n.z, 0.0, -n.x, -n.y, n.x, 0.0)
}

/// Rotation by `alpha` about the unit axis `n`.
pub fn rodrigues(n: &Vector3<f64>, alpha: f64) -> Result<Matrix3<f64>> {
    if (n.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Contract(format!("rotation axis has norm {}", n.norm())));
    }
    let k = cross_matrix(n);
    Ok(Matrix3::identity() + k * alpha.sin() + k * k * (1.0 - alpha.cos()))
}

/// R_x(θ)·R_z(φ)·R_y(ψ).
pub fn rotation_xzy(a: &Angles) -> Matrix3<f64> {
    let rx = rodrigues(&Vector3::x(), a.theta).expect("unit axis");
    let rz = rodrigues(&Vector3::z(), a.phi).expect("unit axis");
    let ry = rodrigues(&Vector3::y(), a.psi).expect("unit axis");
    rx * rz * ry
}

/// diag(1, 1, −1): the reflection realized by a Z gate on the always
/// occupied qubit 0 in the C circuit.
pub fn reflection_c() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateLabel {
    A,
    B,
    C,
}

impl StateLabel {
    pub const ALL: [StateLabel; 3] = [StateLabel::A, StateLabel::B, StateLabel::C];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Gate sequence turning `|10001000⟩` into the rotated model state `label`.
/// With `reflection`, state C is additionally negated.
pub fn rotated_model_circuit(label: StateLabel, a: &Angles, reflection: bool) -> Vec<Gate> {
    let (q1, q2, q3) = (1, 2, 3);
    let ry = |target, angle: f64| Gate::Ry { target, angle: 2.0 * angle };
    let cry = |control, target, angle: f64| Gate::CRy { control, target, angle: 2.0 * angle };
    let cx = |control, target| Gate::Cx { control, target };
    match label {
        StateLabel::A => vec![
            ry(q2, a.psi),
            cx(q2, q1),
            Gate::X(q1),
            cry(q1, q3, a.phi),
            cx(q3, q1),
            cx(q2, q3),
            cx(q3, q2),
            cry(q3, q2, a.theta),
            cx(q2, q3),
            Gate::Z(q3),
        ],
        StateLabel::B => vec![
            ry(q1, a.phi),
            cx(q1, q2),
            Gate::X(q2),
            cry(q2, q3, a.theta),
            cx(q3, q2),
            Gate::Z(q1),
        ],
        StateLabel::C => {
            let mut c = vec![
                ry(q1, a.psi),
                cx(q1, q3),
                Gate::X(q3),
                cry(q1, q2, a.phi),
                cx(q2, q1),
                cx(q3, q2),
                cry(q2, q3, a.theta),
                cx(q3, q2),
            ];
            if reflection {
                c.push(Gate::Z(0));
            }
            c
        }
    }
}

pub fn prepare_rotated_model_with(label: StateLabel, a: &Angles, reflection: bool) -> StateVector {
    let start = StateVector::prepare_onv(&Determinant::parse(CIRCUIT_START).expect("valid"));
    apply_circuit(&start, &rotated_model_circuit(label, a, reflection)).expect("well-formed circuit")
}

pub fn prepare_rotated_model(label: StateLabel, a: &Angles) -> StateVector {
    prepare_rotated_model_with(label, a, false)
}

/// Source of subspace quantities as functions of the rotation angles.
pub trait SubspaceProbe {
    /// H′_II for I = A, B, C.
    fn diagonal(&self, a: &Angles) -> [f64; 3];
    /// Full H̆′(a), off-diagonals included.
    fn matrix(&self, a: &Angles) -> SubspaceMatrix;
    /// O_JI = ⟨Φ⁰_J|Φ′_I(a)⟩.
    fn overlap(&self, a: &Angles) -> Matrix3<f64>;
    /// The same subspace with state C negated.
    fn reflected(&self) -> Box<dyn SubspaceProbe>;
}

/// Dense 3×3 stand-in for the circuits: H̆′ = RᵀHR, O = O₀R.
#[derive(Debug, Clone)]
pub struct MatrixProbe {
    pub h: SubspaceMatrix,
    pub o: Matrix3<f64>,
}

impl MatrixProbe {
    pub fn new(h: SubspaceMatrix) -> Self {
        Self { h, o: Matrix3::identity() }
    }
}

impl SubspaceProbe for MatrixProbe {
    fn diagonal(&self, a: &Angles) -> [f64; 3] {
        let m = self.matrix(a);
        [m[(0, 0)], m[(1, 1)], m[(2, 2)]]
    }

    fn matrix(&self, a: &Angles) -> SubspaceMatrix {
        let r = rotation_xzy(a);
        r.transpose() * self.h * r
    }

    fn overlap(&self, a: &Angles) -> Matrix3<f64> {
        self.o * rotation_xzy(a)
    }

    fn reflected(&self) -> Box<dyn SubspaceProbe> {
        let d = reflection_c();
        Box::new(MatrixProbe {
            h: d * self.h * d,
            o: self.o * d,
        })
    }
}

/// States Û(t*)·(rotated model circuit) on the emulator.
#[derive(Debug, Clone)]
pub struct CircuitProbe {
    pub pool: Arc<ExcitationPool>,
    pub params: AnsatzParams,
    pub hamiltonian: Arc<SparseOperator>,
    pub model: [Determinant; 3],
    pub reflection: bool,
}

impl CircuitProbe {
    pub fn states(&self, a: &Angles) -> [StateVector; 3] {
        StateLabel::ALL.map(|l| {
            let sv = prepare_rotated_model_with(l, a, self.reflection);
            apply_ansatz(&sv, &self.pool, &self.params).expect("parameters checked at construction")
        })
    }

    /// Probe for the optimized ensemble `t` of `problem`.
    pub fn from_ensemble(problem: &EnsembleProblem, t: &[f64]) -> Result<Self> {
        Self::new(
            problem.pool.clone(),
            AnsatzParams {
                t: t.to_vec(),
                repetitions: problem.repetitions,
            },
            Arc::new(SparseOperator::from_pauli_sum(&problem.hamiltonian)?),
            problem.model,
        )
    }

    pub fn new(
        pool: Arc<ExcitationPool>,
        params: AnsatzParams,
        hamiltonian: Arc<SparseOperator>,
        model: [Determinant; 3],
    ) -> Result<Self> {
        params.check(&pool)?;
        Ok(Self {
            pool,
            params,
            hamiltonian,
            model,
            reflection: false,
        })
    }
}

impl SubspaceProbe for CircuitProbe {
    fn diagonal(&self, a: &Angles) -> [f64; 3] {
        self.states(a).map(|s| self.hamiltonian.expectation(&s.amps))
    }

    fn matrix(&self, a: &Angles) -> SubspaceMatrix {
        let states = self.states(a);
        let h_states: Vec<_> = states.iter().map(|s| self.hamiltonian.apply(&s.amps)).collect();
        let m = SubspaceMatrix::from_fn(|i, j| {
            states[i].amps.iter().zip(&h_states[j]).map(|(x, y)| (x.conj() * y).re).sum()
        });
        (m + m.transpose()) * 0.5
    }

    fn overlap(&self, a: &Angles) -> Matrix3<f64> {
        let states = self.states(a);
        Matrix3::from_fn(|j, i| states[i].amplitude(&self.model[j]).re)
    }

    fn reflected(&self) -> Box<dyn SubspaceProbe> {
        Box::new(CircuitProbe {
            reflection: !self.reflection,
            ..self.clone()
        })
    }
}

/// Weight of the ±π/2 difference in the two-frequency shift rule
/// `f′ = [f(x+π/4) − f(x−π/4)] − ((√2 − 1)/2)·[f(x+π/2) − f(x−π/2)]`.
const HALF_PI_SHIFT_WEIGHT: f64 = (std::f64::consts::SQRT_2 - 1.0) / 2.0;

/// Exact derivative of a trigonometric polynomial with frequencies ≤ 2.
pub fn shift_derivative<F: FnMut(f64) -> f64>(mut f: F, x: f64) -> f64 {
    f(x + FRAC_PI_4) - f(x - FRAC_PI_4) - HALF_PI_SHIFT_WEIGHT * (f(x + FRAC_PI_2) - f(x - FRAC_PI_2))
}

/// Diagonal values and their exact angle derivatives `d[k][I] = ∂H′_II/∂a_k`.
pub fn diagonal_with_gradient(probe: &dyn SubspaceProbe, a: &Angles) -> ([f64; 3], [[f64; 3]; 3]) {
    let v = probe.diagonal(a);
    let mut d = [[0.0; 3]; 3];
    for (k, row) in d.iter_mut().enumerate() {
        let [p1, m1, p2, m2] =
            [FRAC_PI_4, -FRAC_PI_4, FRAC_PI_2, -FRAC_PI_2].map(|s| probe.diagonal(&a.shifted(k, s)));
        for i in 0..3 {
            row[i] = p1[i] - m1[i] - HALF_PI_SHIFT_WEIGHT * (p2[i] - m2[i]);
        }
    }
    (v, d)
}

/// Overlap block and its exact angle derivatives (π/2 shift rule).
pub fn overlap_with_gradient(probe: &dyn SubspaceProbe, a: &Angles) -> (Matrix3<f64>, [Matrix3<f64>; 3]) {
    let o = probe.overlap(a);
    let d = [0, 1, 2].map(|k| {
        (probe.overlap(&a.shifted(k, FRAC_PI_2)) - probe.overlap(&a.shifted(k, -FRAC_PI_2))) * 0.5
    });
    (o, d)
}

/// The zero start followed by the eight corners of (±π/3)³.
pub fn lattice_starts() -> Vec<Angles> {
    let mut out = vec![Angles::zero()];
    for s in 0..8 {
        let pick = |bit: usize| if s >> bit & 1 == 0 { -FRAC_PI_3 } else { FRAC_PI_3 };
        out.push(Angles::new(pick(2), pick(1), pick(0)));
    }
    out
}

pub(crate) fn angle_bfgs_options() -> BfgsOptions {
    BfgsOptions {
        max_iterations: 300,
        f_tol: 1e-15,
        gradient_tol: 1e-12,
        loose_gradient_tol: 1e-9,
    }
}

/// Minimizes `f(diagonal)` over the angles from each lattice start and keeps
/// the best value; among values tied within `tie`, the smallest rotation wins.
fn minimize_diagonal_objective<F>(probe: &dyn SubspaceProbe, f: F, tie: f64) -> Result<Angles>
where
    F: Fn(&[f64; 3]) -> (f64, [f64; 3]),
{
    let mut best: Option<(f64, Angles)> = None;
    for start in lattice_starts() {
        let res = bfgs(
            |x: &[f64]| {
                let a = Angles::from_slice(x);
                let (v, d) = diagonal_with_gradient(probe, &a);
                let (fv, df) = f(&v);
                let g = (0..3).map(|k| (0..3).map(|i| df[i] * d[k][i]).sum()).collect();
                Ok((fv, g))
            },
            &start.to_array(),
            &angle_bfgs_options(),
        )?;
        let a = Angles::from_slice(&res.x).wrapped();
        let value = f(&probe.diagonal(&a)).0;
        best = match best {
            None => Some((value, a)),
            Some((bv, ba)) => {
                if value < bv - tie || (value <= bv + tie && a.norm() < ba.norm()) {
                    Some((value.min(bv), a))
                } else {
                    Some((bv, ba))
                }
            }
        };
    }
    Ok(best.expect("lattice is non-empty").1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Solver {
    Frobenius,
    TwoStep,
    Weighted { weights: [f64; 3] },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Resolution {
    pub solver: Solver,
    pub angles: Angles,
    /// H̆′ at the returned angles.
    pub matrix: [[f64; 3]; 3],
    pub diagonal: [f64; 3],
    pub off_diagonal_max: f64,
    pub converged: bool,
    /// The two-step solver hit the φ ≡ π/2 branch and fell back to Frobenius.
    pub fallback: bool,
    /// Some diagonal energies coincide, so the state assignment is a gauge choice.
    pub degenerate: bool,
}

fn to_rows(m: &SubspaceMatrix) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

pub fn off_diagonal_max(m: &SubspaceMatrix) -> f64 {
    m[(0, 1)].abs().max(m[(0, 2)].abs()).max(m[(1, 2)].abs())
}

const OFF_DIAGONAL_TOL: f64 = 1e-6;
const DEGENERACY_TOL: f64 = 1e-6;

fn resolution(probe: &dyn SubspaceProbe, solver: Solver, angles: Angles, fallback: bool) -> Resolution {
    let m = probe.matrix(&angles);
    let diagonal = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
    let mut sorted = diagonal;
    sorted.sort_by(f64::total_cmp);
    let off = off_diagonal_max(&m);
    Resolution {
        solver,
        angles,
        matrix: to_rows(&m),
        diagonal,
        off_diagonal_max: off,
        converged: off < OFF_DIAGONAL_TOL,
        fallback,
        degenerate: sorted[1] - sorted[0] < DEGENERACY_TOL || sorted[2] - sorted[1] < DEGENERACY_TOL,
    }
}

/// Maximizes Σ H′_II² (equivalently minimizes the off-diagonal norm).
pub fn solve_frobenius(probe: &dyn SubspaceProbe) -> Result<Resolution> {
    let h0 = probe.diagonal(&Angles::zero());
    // The trace is invariant, so centering the diagonal changes f^F by a constant.
    let c = (h0[0] + h0[1] + h0[2]) / 3.0;
    let angles = minimize_diagonal_objective(
        probe,
        |v| {
            let f = -v.iter().map(|x| (x - c).powi(2)).sum::<f64>();
            (f, v.map(|x| -2.0 * (x - c)))
        },
        1e-10,
    )?;
    Ok(resolution(probe, Solver::Frobenius, angles, false))
}

/// Minimizes Σ w_I H′_II.
pub fn solve_weighted(probe: &dyn SubspaceProbe, weights: [f64; 3]) -> Result<Resolution> {
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Domain("weights must be positive".into()));
    }
    let h0 = probe.diagonal(&Angles::zero());
    let c = (h0[0] + h0[1] + h0[2]) / 3.0;
    let angles = minimize_diagonal_objective(
        probe,
        |v| {
            let f = (0..3).map(|i| weights[i] * (v[i] - c)).sum();
            (f, weights)
        },
        1e-10,
    )?;
    Ok(resolution(probe, Solver::Weighted { weights }, angles, false))
}

/// Newton iteration towards the stationary point of H′_BB(θ, φ, 0) nearest
/// the start. Gradients are exact; the Hessian is a central difference of
/// exact gradients.
fn stationary_bb(probe: &dyn SubspaceProbe) -> Option<(f64, f64)> {
    let grad = |t: f64, p: f64| {
        let gt = shift_derivative(|x| probe.diagonal(&Angles::new(x, p, 0.0))[1], t);
        let gp = shift_derivative(|x| probe.diagonal(&Angles::new(t, x, 0.0))[1], p);
        [gt, gp]
    };
    let h = 1e-5;
    let (mut t, mut p) = (0.0, 0.0);
    for _ in 0..100 {
        let g = grad(t, p);
        if g[0].abs().max(g[1].abs()) < 1e-13 {
            return Some((t, p));
        }
        let (tp, tm) = (grad(t + h, p), grad(t - h, p));
        let (pp, pm) = (grad(t, p + h), grad(t, p - h));
        let htt = (tp[0] - tm[0]) / (2.0 * h);
        let hpp = (pp[1] - pm[1]) / (2.0 * h);
        let htp = 0.5 * ((tp[1] - tm[1]) + (pp[0] - pm[0])) / (2.0 * h);
        let det = htt * hpp - htp * htp;
        if det.abs() < 1e-300 {
            return None;
        }
        let mut dt = -(hpp * g[0] - htp * g[1]) / det;
        let mut dp = -(htt * g[1] - htp * g[0]) / det;
        let len = (dt * dt + dp * dp).sqrt();
        if len > FRAC_PI_4 {
            dt *= FRAC_PI_4 / len;
            dp *= FRAC_PI_4 / len;
        }
        t += dt;
        p += dp;
        if len < 1e-15 {
            return Some((t, p));
        }
    }
    None
}

/// Stationary point of H′_CC(θ, φ, ψ) in ψ nearest zero, in closed form.
/// Column C is linear in (cos ψ, sin ψ), so H′_CC = a + b·cos 2ψ + c·sin 2ψ.
fn stationary_cc(probe: &dyn SubspaceProbe, theta: f64, phi: f64) -> f64 {
    let f = |psi: f64| probe.diagonal(&Angles::new(theta, phi, psi))[2];
    let (f0, f1, f2) = (f(0.0), f(FRAC_PI_4), f(FRAC_PI_2));
    let b = 0.5 * (f0 - f2);
    let c = f1 - 0.5 * (f0 + f2);
    if b.abs() + c.abs() < 1e-15 {
        return 0.0;
    }
    let base = 0.5 * c.atan2(b);
    [base - FRAC_PI_2, base, base + FRAC_PI_2]
        .into_iter()
        .min_by(|x, y| x.abs().total_cmp(&y.abs()))
        .expect("non-empty")
}

/// Two-step diagonalization: zero H′_AB and H′_BC through H′_BB(θ, φ, 0),
/// then H′_AC through H′_CC over ψ. Falls back to the Frobenius solver on
/// the cos φ ≈ 0 branch or if the first step fails.
pub fn solve_two_step(probe: &dyn SubspaceProbe) -> Result<Resolution> {
    let step1 = stationary_bb(probe).or_else(|| {
        bfgs(
            |x: &[f64]| {
                let (v, d) = diagonal_with_gradient(probe, &Angles::new(x[0], x[1], 0.0));
                Ok((v[1], vec![d[0][1], d[1][1]]))
            },
            &[0.0, 0.0],
            &angle_bfgs_options(),
        )
        .ok()
        .map(|r| (r.x[0], r.x[1]))
    });
    let Some((theta, phi)) = step1 else {
        let mut r = solve_frobenius(probe)?;
        r.solver = Solver::TwoStep;
        r.fallback = true;
        return Ok(r);
    };
    if phi.cos().abs() < 1e-6 {
        let m = probe.matrix(&Angles::new(theta, phi, 0.0));
        if m[(1, 2)].abs() > 1e-10 {
            let mut r = solve_frobenius(probe)?;
            r.solver = Solver::TwoStep;
            r.fallback = true;
            return Ok(r);
        }
    }
    let psi = stationary_cc(probe, theta, phi);
    let angles = Angles::new(theta, phi, psi).wrapped();
    Ok(resolution(probe, Solver::TwoStep, angles, false))
}

pub fn solve(probe: &dyn SubspaceProbe, solver: Solver) -> Result<Resolution> {
    match solver {
        Solver::Frobenius => solve_frobenius(probe),
        Solver::TwoStep => solve_two_step(probe),
        Solver::Weighted { weights } => solve_weighted(probe, weights),
    }
}

/// Permutation listing state indices by ascending energy, and whether it
/// differs from the identity.
pub fn assign_adiabatic_order(diagonal: &[f64]) -> (Vec<usize>, bool) {
    let mut perm: Vec<usize> = (0..diagonal.len()).collect();
    perm.sort_by(|&a, &b| diagonal[a].total_cmp(&diagonal[b]).then(a.cmp(&b)));
    let reordered = perm.iter().enumerate().any(|(i, &p)| i != p);
    (perm, reordered)
}
