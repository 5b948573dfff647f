//! Equal-weight three-state ensemble VQE with spin penalty or constraint.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzParams, ExcitationPool, Probe, ProbeSet};
use crate::optim::{augmented_lagrangian, bfgs, AugmentedLagrangianOptions, BfgsOptions, ConstrainedEval};
use crate::qubits::{PauliSum, SparseOperator, StateVector};
use crate::secondq::Determinant;
use crate::{Error, Result};

/// The three model determinants |Φ⁰_A⟩, |Φ⁰_B⟩, |Φ⁰_C⟩.
pub const MODEL_ONVS: [&str; 3] = ["11001000", "10101000", "10011000"];

pub fn model_determinants() -> [Determinant; 3] {
    MODEL_ONVS.map(|s| Determinant::parse(s).expect("valid model string"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpinMode {
    /// Adds λ·(spin deviation) to the ensemble energy.
    Penalty { lambda: f64 },
    /// Requires spin deviation ≤ ε.
    Constrained { epsilon: f64 },
}

impl Default for SpinMode {
    fn default() -> Self {
        SpinMode::Penalty { lambda: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleProblem {
    pub hamiltonian: PauliSum,
    pub s2: PauliSum,
    pub model: [Determinant; 3],
    pub pool: Arc<ExcitationPool>,
    pub repetitions: usize,
    /// Target total spin S_I for each state.
    pub spin_targets: [f64; 3],
    pub mode: SpinMode,
    probes: ProbeSet,
}

const H: usize = 0;
const S2: usize = 1;

impl EnsembleProblem {
    pub fn new(
        hamiltonian: PauliSum,
        s2: PauliSum,
        model: [Determinant; 3],
        pool: Arc<ExcitationPool>,
        repetitions: usize,
        mode: SpinMode,
    ) -> Result<Self> {
        let n = pool.n_qubits();
        if hamiltonian.n != n || s2.n != n {
            return Err(Error::Contract("operator and pool register sizes differ".into()));
        }
        for (i, d) in model.iter().enumerate() {
            if d.n != n || d.two_ms() != 1 {
                return Err(Error::Contract(format!("model determinant {d} is not an M_S = 1/2 state")));
            }
            if model[..i].contains(d) {
                return Err(Error::Contract(format!("model determinant {d} repeated")));
            }
        }
        if repetitions == 0 {
            return Err(Error::Contract("ansatz needs at least one repetition".into()));
        }
        let probes = ProbeSet {
            initial: model.iter().map(StateVector::prepare_onv).collect(),
            operators: vec![
                SparseOperator::from_pauli_sum(&hamiltonian)?,
                SparseOperator::from_pauli_sum(&s2)?,
            ],
            probes: (0..3)
                .flat_map(|s| [Probe::Expectation { state: s, op: H }, Probe::Expectation { state: s, op: S2 }])
                .collect(),
        };
        Ok(Self {
            hamiltonian,
            s2,
            model,
            pool,
            repetitions,
            spin_targets: [0.5; 3],
            mode,
            probes,
        })
    }

    pub fn n_params(&self) -> usize {
        self.pool.len() * self.repetitions
    }

    fn check(&self, t: &[f64]) -> Result<()> {
        AnsatzParams {
            t: t.to_vec(),
            repetitions: self.repetitions,
        }
        .check(&self.pool)
    }

    fn targets(&self) -> [f64; 3] {
        self.spin_targets.map(|s| s * (s + 1.0))
    }

    /// Per-state energies H_II(t).
    pub fn state_energies(&self, t: &[f64]) -> Result<[f64; 3]> {
        self.check(t)?;
        let v = self.probes.values(&self.pool, t);
        Ok([v[0], v[2], v[4]])
    }

    /// ⟨S²⟩ of each prepared state.
    pub fn spin_expectations(&self, t: &[f64]) -> Result<[f64; 3]> {
        self.check(t)?;
        let v = self.probes.values(&self.pool, t);
        Ok([v[1], v[3], v[5]])
    }

    pub fn ensemble_energy(&self, t: &[f64]) -> Result<f64> {
        Ok(self.state_energies(t)?.iter().sum())
    }

    /// Σ_I |⟨S²⟩_I − S_I(S_I+1)|.
    pub fn spin_deviation(&self, t: &[f64]) -> Result<f64> {
        let s = self.spin_expectations(t)?;
        Ok(s.iter().zip(self.targets()).map(|(v, g)| (v - g).abs()).sum())
    }

    /// The prepared states Û(t)|Φ⁰_I⟩.
    pub fn prepared_states(&self, t: &[f64]) -> Result<Vec<StateVector>> {
        self.check(t)?;
        let n = self.pool.n_qubits();
        Ok(self
            .probes
            .prepared(&self.pool, t)
            .into_iter()
            .map(|amps| StateVector { n, amps })
            .collect())
    }

    /// Energy part (`w_energy`) plus weighted spin deviation, with gradient.
    /// Only the lower side of |x| can have a kink and ⟨S²⟩ ≥ 3/4 holds in the
    /// M_S = 1/2 sector, so the deviation is differentiated as linear.
    fn energy_and_spin(&self, t: &[f64], w_energy: f64, w_spin: f64) -> Result<(f64, Vec<f64>)> {
        let targets = self.targets();
        self.probes.value_and_gradient(&self.pool, t, |p| {
            let mut v = 0.0;
            let mut d = vec![0.0; 6];
            for i in 0..3 {
                v += w_energy * p[2 * i];
                d[2 * i] = w_energy;
                let dev = p[2 * i + 1] - targets[i];
                v += w_spin * dev.abs();
                d[2 * i + 1] = w_spin * if dev < -1e-12 { -1.0 } else { 1.0 };
            }
            (v, d)
        })
    }

    /// Penalized objective E_ens + λ·deviation (λ = 0 in constrained mode) and its gradient.
    pub fn objective(&self, t: &[f64]) -> Result<(f64, Vec<f64>)> {
        let lambda = match self.mode {
            SpinMode::Penalty { lambda } => lambda,
            SpinMode::Constrained { .. } => 0.0,
        };
        self.energy_and_spin(t, 1.0, lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Initialization {
    Zeros,
    Random { seed: u64, scale: f64 },
    Warm { t: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    pub init: Initialization,
    pub bfgs: BfgsOptions,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            init: Initialization::Zeros,
            bfgs: BfgsOptions {
                max_iterations: 500,
                f_tol: 1e-10,
                gradient_tol: 1e-8,
                loose_gradient_tol: 1e-7,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub t_star: Vec<f64>,
    pub repetitions: usize,
    /// H_AA, H_BB, H_CC.
    pub energies: [f64; 3],
    pub ensemble_energy: f64,
    pub s2: [f64; 3],
    pub spin_deviation: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

impl EnsembleResult {
    pub fn params(&self) -> AnsatzParams {
        AnsatzParams {
            t: self.t_star.clone(),
            repetitions: self.repetitions,
        }
    }
}

pub(crate) fn initial_point(problem: &EnsembleProblem, init: &Initialization) -> Result<Vec<f64>> {
    let n = problem.n_params();
    match init {
        Initialization::Zeros => Ok(vec![0.0; n]),
        Initialization::Random { seed, scale } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok((0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect())
        }
        Initialization::Warm { t } => {
            problem.check(t)?;
            Ok(t.clone())
        }
    }
}

/// Minimizes the ensemble energy under the configured spin handling.
/// Non-convergence is reported through `converged`, never as an error.
pub fn optimize_ensemble(problem: &EnsembleProblem, opts: &OptimizeOptions) -> Result<EnsembleResult> {
    let x0 = initial_point(problem, &opts.init)?;
    let (x, iterations, converged, trace) = match problem.mode {
        SpinMode::Penalty { .. } => {
            let r = bfgs(|t: &[f64]| problem.objective(t), &x0, &opts.bfgs)?;
            (r.x, r.iterations, r.converged, r.trace)
        }
        SpinMode::Constrained { epsilon } => {
            let al = AugmentedLagrangianOptions {
                inner: opts.bfgs,
                feasibility_tol: 0.0,
                ..Default::default()
            };
            let r = augmented_lagrangian(
                |t: &[f64]| {
                    let (f, grad) = problem.energy_and_spin(t, 1.0, 0.0)?;
                    let (dev, c_grad) = problem.energy_and_spin(t, 0.0, 1.0)?;
                    Ok(ConstrainedEval {
                        f,
                        grad,
                        c: vec![dev - epsilon],
                        c_grad: vec![c_grad],
                    })
                },
                &x0,
                &al,
            )?;
            (r.x, r.inner_iterations, r.converged, r.trace)
        }
    };
    summarize(problem, x, iterations, converged, trace)
}

pub(crate) fn summarize(
    problem: &EnsembleProblem,
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
) -> Result<EnsembleResult> {
    let energies = problem.state_energies(&x)?;
    let s2 = problem.spin_expectations(&x)?;
    Ok(EnsembleResult {
        ensemble_energy: energies.iter().sum(),
        spin_deviation: problem.spin_deviation(&x)?,
        energies,
        s2,
        t_star: x,
        repetitions: problem.repetitions,
        iterations,
        converged,
        trace,
    })
}
