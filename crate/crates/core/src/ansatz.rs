//! Trotterized generalized UCCSD ansatz: the excitation pool, exact
//! application of the product of exponentials, and adjoint gradients.
//!
//! Generators are real anti-Hermitian operators `G = T − T†` with `T` a
//! product of ladder operators. Each `T` maps a basis state to at most one
//! other basis state, so `exp(tG)` is a set of independent plane rotations.
//! In one repetition the generators act in pool order, first generator first.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::qubits::{jw_product, PauliSum, SparseOperator, StateVector};
use crate::secondq::Determinant;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcitationKind {
    /// Spin-complemented `E_pq − E_qp` over spatial orbitals `p > q`.
    Single,
    /// `a†p a†q a_s a_r − h.c.` over spin-orbitals.
    Double,
}

/// Plane rotation data: `G|i⟩ = sign·|j⟩`, `G|j⟩ = −sign·|i⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Pair {
    i: u32,
    j: u32,
    sign: f64,
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub kind: ExcitationKind,
    /// `[p, q]` spatial for singles; `[p, q, r, s]` spin-orbitals for doubles.
    pub indices: Vec<usize>,
    /// JW image of the anti-Hermitian generator.
    pub pauli: PauliSum,
    /// Mutually commuting parts (α and β for singles), each a set of pairs.
    parts: Vec<Vec<Pair>>,
}

impl Generator {
    /// Applies exp(t·G) in place.
    pub fn apply_exp(&self, t: f64, amps: &mut [Complex64]) {
        if t == 0.0 {
            return;
        }
        let (s, c) = t.sin_cos();
        for part in &self.parts {
            for p in part {
                let (i, j) = (p.i as usize, p.j as usize);
                let (a, b) = (amps[i], amps[j]);
                amps[i] = a * c - b * (p.sign * s);
                amps[j] = b * c + a * (p.sign * s);
            }
        }
    }

    /// Re⟨λ|G|ψ⟩ without forming Gψ.
    fn re_matrix_element(&self, lambda: &[Complex64], psi: &[Complex64]) -> f64 {
        let mut acc = 0.0;
        for part in &self.parts {
            for p in part {
                let (i, j) = (p.i as usize, p.j as usize);
                let lj_pi = lambda[j].re * psi[i].re + lambda[j].im * psi[i].im;
                let li_pj = lambda[i].re * psi[j].re + lambda[i].im * psi[j].im;
                acc += p.sign * (lj_pi - li_pj);
            }
        }
        acc
    }

    /// G applied to a vector.
    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
        for part in &self.parts {
            for p in part {
                let (i, j) = (p.i as usize, p.j as usize);
                out[j] += psi[i] * p.sign;
                out[i] -= psi[j] * p.sign;
            }
        }
        out
    }

    pub fn label(&self) -> String {
        match self.kind {
            ExcitationKind::Single => format!("single {} {}", self.indices[0], self.indices[1]),
            ExcitationKind::Double => format!(
                "double {} {} {} {}",
                self.indices[0], self.indices[1], self.indices[2], self.indices[3]
            ),
        }
    }
}

/// Pairs of `T = ops` (written left to right) over all basis states.
fn excitation_pairs(n: usize, ops: &[(usize, bool)]) -> Vec<Pair> {
    let mut out = Vec::new();
    for b in 0..(1u64 << n) {
        if let Some((sign, d)) = Determinant::new(b, n).apply(ops) {
            if d.bits != b {
                out.push(Pair {
                    i: b as u32,
                    j: d.bits as u32,
                    sign,
                });
            }
        }
    }
    out
}

fn anti_hermitian_image(n: usize, ops: &[(usize, bool)]) -> PauliSum {
    let t = jw_product(n, ops);
    let adjoint: Vec<(usize, bool)> = ops.iter().rev().map(|&(q, d)| (q, !d)).collect();
    let td = jw_product(n, &adjoint);
    t.add(&td.scale(Complex64::new(-1.0, 0.0)))
}

#[derive(Debug, Clone)]
pub struct ExcitationPool {
    pub n_spatial: usize,
    pub generators: Vec<Generator>,
}

impl ExcitationPool {
    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn n_qubits(&self) -> usize {
        2 * self.n_spatial
    }

    /// Text dump: one generator per line with its index tuple, then the
    /// Pauli terms of its qubit image indented below it.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (k, g) in self.generators.iter().enumerate() {
            writeln!(out, "{k} {}", g.label()).unwrap();
            for line in g.pauli.to_text().lines() {
                writeln!(out, "    {line}").unwrap();
            }
        }
        out
    }
}

/// Spin-complemented generalized singles followed by all distinct
/// M_S-conserving generalized doubles, each block in lexicographic order.
pub fn build_guccsd_pool(n_spatial: usize) -> Result<ExcitationPool> {
    if n_spatial == 0 {
        return Err(Error::Domain("pool needs at least one spatial orbital".into()));
    }
    let n = 2 * n_spatial;
    if n > 16 {
        return Err(Error::Scale(n));
    }
    let mut generators = Vec::new();
    for p in 0..n_spatial {
        for q in 0..p {
            let alpha = [(p, true), (q, false)];
            let beta = [(p + n_spatial, true), (q + n_spatial, false)];
            let pauli = anti_hermitian_image(n, &alpha).add(&anti_hermitian_image(n, &beta));
            generators.push(Generator {
                kind: ExcitationKind::Single,
                indices: vec![p, q],
                pauli,
                parts: vec![excitation_pairs(n, &alpha), excitation_pairs(n, &beta)],
            });
        }
    }

    // Unordered spin-orbital pairs (p < q) grouped by the number of β modes.
    let beta_count = |a: usize, b: usize| (a >= n_spatial) as usize + (b >= n_spatial) as usize;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|p| (p + 1..n).map(move |q| (p, q))).collect();
    for (k, &(p, q)) in pairs.iter().enumerate() {
        for &(r, s) in &pairs[..k] {
            if beta_count(p, q) != beta_count(r, s) {
                continue;
            }
            let ops = [(p, true), (q, true), (s, false), (r, false)];
            generators.push(Generator {
                kind: ExcitationKind::Double,
                indices: vec![p, q, r, s],
                pauli: anti_hermitian_image(n, &ops),
                parts: vec![excitation_pairs(n, &ops)],
            });
        }
    }
    Ok(ExcitationPool { n_spatial, generators })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzParams {
    pub t: Vec<f64>,
    pub repetitions: usize,
}

impl AnsatzParams {
    pub fn zeros(pool: &ExcitationPool, repetitions: usize) -> Self {
        Self {
            t: vec![0.0; pool.len() * repetitions],
            repetitions,
        }
    }

    pub fn check(&self, pool: &ExcitationPool) -> Result<()> {
        if self.t.len() != pool.len() * self.repetitions {
            return Err(Error::Contract(format!(
                "{} parameters for {} generators × {} repetitions",
                self.t.len(),
                pool.len(),
                self.repetitions
            )));
        }
        if self.t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("non-finite ansatz parameter".into()));
        }
        Ok(())
    }
}

#[inline]
fn generator_at(pool: &ExcitationPool, k: usize) -> &Generator {
    &pool.generators[k % pool.len()]
}

pub fn apply_ansatz(sv: &StateVector, pool: &ExcitationPool, params: &AnsatzParams) -> Result<StateVector> {
    params.check(pool)?;
    if sv.n != pool.n_qubits() {
        return Err(Error::Contract("state and pool register sizes differ".into()));
    }
    let mut out = sv.clone();
    apply_raw(pool, &params.t, &mut out.amps);
    Ok(out)
}

fn apply_raw(pool: &ExcitationPool, t: &[f64], amps: &mut [Complex64]) {
    for (k, &tk) in t.iter().enumerate() {
        generator_at(pool, k).apply_exp(tk, amps);
    }
}

/// A scalar read off a prepared state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    /// ⟨ψ_state|A_op|ψ_state⟩ for a Hermitian operator.
    Expectation { state: usize, op: usize },
    /// Re⟨basis|ψ_state⟩.
    Amplitude { state: usize, basis: usize },
}

/// Smooth objectives of probe values on states prepared by one ansatz from
/// several initial states.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    pub initial: Vec<StateVector>,
    pub operators: Vec<SparseOperator>,
    pub probes: Vec<Probe>,
}

impl ProbeSet {
    pub fn prepared(&self, pool: &ExcitationPool, t: &[f64]) -> Vec<Vec<Complex64>> {
        self.initial
            .iter()
            .map(|s| {
                let mut amps = s.amps.clone();
                apply_raw(pool, t, &mut amps);
                amps
            })
            .collect()
    }

    fn probe_values(&self, states: &[Vec<Complex64>]) -> Vec<f64> {
        self.probes
            .iter()
            .map(|p| match *p {
                Probe::Expectation { state, op } => self.operators[op].expectation(&states[state]),
                Probe::Amplitude { state, basis } => states[state][basis].re,
            })
            .collect()
    }

    pub fn values(&self, pool: &ExcitationPool, t: &[f64]) -> Vec<f64> {
        self.probe_values(&self.prepared(pool, t))
    }

    /// Value and gradient of `f(probes)`, where `f` returns its value and
    /// the partial derivatives with respect to each probe value.
    pub fn value_and_gradient<F>(&self, pool: &ExcitationPool, t: &[f64], f: F) -> Result<(f64, Vec<f64>)>
    where
        F: Fn(&[f64]) -> (f64, Vec<f64>),
    {
        let mut psi = self.prepared(pool, t);
        let values = self.probe_values(&psi);
        let (value, dvalues) = f(&values);
        if !value.is_finite() || dvalues.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFinite);
        }
        let dim = psi.first().map_or(0, Vec::len);
        let zero = Complex64::new(0.0, 0.0);
        let mut lambda = vec![vec![zero; dim]; psi.len()];
        let mut scratch = vec![zero; dim];
        for (p, &w) in self.probes.iter().zip(&dvalues) {
            if w == 0.0 {
                continue;
            }
            match *p {
                Probe::Expectation { state, op } => {
                    self.operators[op].apply_into(&psi[state], &mut scratch);
                    for (l, a) in lambda[state].iter_mut().zip(&scratch) {
                        *l += a * (2.0 * w);
                    }
                }
                Probe::Amplitude { state, basis } => lambda[state][basis] += w,
            }
        }
        let mut grad = vec![0.0; t.len()];
        for k in (0..t.len()).rev() {
            let g = generator_at(pool, k);
            let mut acc = 0.0;
            for (l, s) in lambda.iter_mut().zip(psi.iter_mut()) {
                acc += g.re_matrix_element(l, s);
                g.apply_exp(-t[k], s);
                g.apply_exp(-t[k], l);
            }
            grad[k] = acc;
        }
        Ok((value, grad))
    }
}
