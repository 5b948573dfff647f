//! Pauli-string algebra, the Jordan-Wigner mapping and a dense state-vector
//! emulator.
//!
//! Qubit `q` is spin-orbital `q`. Basis states are indexed by their ket string
//! read as a binary number with qubit 0 leftmost, so qubit `q` is bit
//! `n - 1 - q` of the index. Pauli masks use the same layout.
//!
//! A Pauli string with masks `(x, z)` denotes `i^{|x∧z|} X^x Z^z`, which is the
//! Hermitian tensor product of the letters (`Y = iXZ`).

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::secondq::{Determinant, MoIntegrals};
use crate::{Error, Result};

const DROP_TOL: f64 = 1e-14;
const DENSE_LIMIT: usize = 12;
const SPARSE_LIMIT: usize = 24;

#[inline]
fn i_pow(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

#[inline]
fn qubit_bit(n: usize, q: usize) -> u64 {
    1u64 << (n - 1 - q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliString {
    pub x: u64,
    pub z: u64,
    pub coeff: Complex64,
}

impl PauliString {
    pub fn identity(coeff: Complex64) -> Self {
        Self { x: 0, z: 0, coeff }
    }

    /// Builds from letters such as `"IZXY"`; letter `k` acts on qubit `k`.
    pub fn from_letters(letters: &str, coeff: Complex64) -> Result<Self> {
        let n = letters.chars().count();
        if n > 64 {
            return Err(Error::Parse("Pauli string longer than 64 qubits".into()));
        }
        let (mut x, mut z) = (0u64, 0u64);
        for (q, c) in letters.chars().enumerate() {
            let bit = qubit_bit(n, q);
            match c {
                'I' => {}
                'X' => x |= bit,
                'Z' => z |= bit,
                'Y' => {
                    x |= bit;
                    z |= bit;
                }
                other => return Err(Error::Parse(format!("Pauli letter {other:?}"))),
            }
        }
        Ok(Self { x, z, coeff })
    }

    /// Single-qubit letter on qubit `q` of an `n`-qubit register.
    pub fn single(n: usize, q: usize, letter: char, coeff: Complex64) -> Result<Self> {
        let mut s: Vec<char> = vec!['I'; n];
        if q >= n {
            return Err(Error::Structural(format!("qubit {q} outside {n}-qubit register")));
        }
        s[q] = letter;
        Self::from_letters(&s.into_iter().collect::<String>(), coeff)
    }

    pub fn letters(&self, n: usize) -> String {
        (0..n)
            .map(|q| {
                let b = qubit_bit(n, q);
                match (self.x & b != 0, self.z & b != 0) {
                    (false, false) => 'I',
                    (true, false) => 'X',
                    (false, true) => 'Z',
                    (true, true) => 'Y',
                }
            })
            .collect()
    }

    #[inline]
    fn y_count(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    /// Product `self · other`, coefficients included.
    #[inline]
    pub fn mul(&self, other: &PauliString) -> PauliString {
        let x = self.x ^ other.x;
        let z = self.z ^ other.z;
        let a3 = (x & z).count_ones();
        let k = self.y_count() + other.y_count() + 4 * 64 - a3 + 2 * (self.z & other.x).count_ones();
        PauliString {
            x,
            z,
            coeff: self.coeff * other.coeff * i_pow(k),
        }
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()).is_multiple_of(2)
    }

    /// P|b⟩ = phase · |b ⊕ x⟩ for the coefficient-free string.
    #[inline]
    pub fn act(&self, b: u64) -> (Complex64, u64) {
        let sign = if (self.z & b).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
        (i_pow(self.y_count()) * sign, b ^ self.x)
    }
}

/// Canonical sum of Pauli strings over `n` qubits: one term per letter
/// pattern, sorted by masks, negligible terms dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    pub n: usize,
    pub terms: Vec<PauliString>,
}

impl PauliSum {
    pub fn zero(n: usize) -> Self {
        Self { n, terms: Vec::new() }
    }

    pub fn identity(n: usize, c: f64) -> Self {
        Self::from_terms(n, vec![PauliString::identity(Complex64::new(c, 0.0))])
    }

    pub fn from_terms(n: usize, terms: Vec<PauliString>) -> Self {
        let mut acc: HashMap<(u64, u64), Complex64> = HashMap::new();
        for t in terms {
            *acc.entry((t.x, t.z)).or_default() += t.coeff;
        }
        Self::from_map(n, acc)
    }

    fn from_map(n: usize, acc: HashMap<(u64, u64), Complex64>) -> Self {
        let mut terms: Vec<PauliString> = acc
            .into_iter()
            .filter(|(_, c)| c.norm() >= DROP_TOL)
            .map(|((x, z), coeff)| PauliString { x, z, coeff })
            .collect();
        terms.sort_by_key(|t| (t.x, t.z));
        Self { n, terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &PauliSum) -> PauliSum {
        assert_eq!(self.n, other.n, "register sizes differ");
        Self::from_terms(self.n, self.terms.iter().chain(&other.terms).copied().collect())
    }

    pub fn scale(&self, c: Complex64) -> PauliSum {
        Self::from_terms(
            self.n,
            self.terms
                .iter()
                .map(|t| PauliString { coeff: t.coeff * c, ..*t })
                .collect(),
        )
    }

    pub fn mul(&self, other: &PauliSum) -> PauliSum {
        assert_eq!(self.n, other.n, "register sizes differ");
        let mut acc: HashMap<(u64, u64), Complex64> = HashMap::new();
        for a in &self.terms {
            for b in &other.terms {
                let p = a.mul(b);
                *acc.entry((p.x, p.z)).or_default() += p.coeff;
            }
        }
        Self::from_map(self.n, acc)
    }

    pub fn adjoint(&self) -> PauliSum {
        Self {
            n: self.n,
            terms: self
                .terms
                .iter()
                .map(|t| PauliString { coeff: t.coeff.conj(), ..*t })
                .collect(),
        }
    }

    /// Largest imaginary coefficient; zero for a Hermitian sum.
    pub fn hermiticity_defect(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.im.abs()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn commutator_norm(&self, other: &PauliSum) -> f64 {
        let ab = self.mul(other);
        let ba = other.mul(self);
        let diff = ab.add(&ba.scale(Complex64::new(-1.0, 0.0)));
        diff.terms.iter().map(|t| t.coeff.norm_sqr()).sum::<f64>().sqrt()
    }

    /// One term per line: `re LETTERS` for real coefficients, otherwise
    /// `(re,im) LETTERS`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.terms {
            if t.coeff.im == 0.0 {
                writeln!(out, "{:.17e} {}", t.coeff.re, t.letters(self.n)).unwrap();
            } else {
                writeln!(out, "({:.17e},{:.17e}) {}", t.coeff.re, t.coeff.im, t.letters(self.n)).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<PauliSum> {
        let mut n = None;
        let mut terms = Vec::new();
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("Pauli coefficient {s:?}: {e}")))
        };
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (c, letters) = line
                .rsplit_once(char::is_whitespace)
                .ok_or_else(|| Error::Parse(format!("Pauli term {line:?}")))?;
            let c = c.trim();
            let coeff = if let Some(inner) = c.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
                let (re, im) = inner
                    .split_once(',')
                    .ok_or_else(|| Error::Parse(format!("complex coefficient {c:?}")))?;
                Complex64::new(num(re)?, num(im)?)
            } else {
                Complex64::new(num(c)?, 0.0)
            };
            let len = letters.chars().count();
            if *n.get_or_insert(len) != len {
                return Err(Error::Parse("Pauli strings of different lengths".into()));
            }
            terms.push(PauliString::from_letters(letters, coeff)?);
        }
        let n = n.ok_or_else(|| Error::Parse("empty Pauli sum".into()))?;
        Ok(PauliSum::from_terms(n, terms))
    }
}

/// Row-compressed operator in the computational basis.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub dim: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
    real: bool,
}

impl SparseOperator {
    pub fn from_pauli_sum(op: &PauliSum) -> Result<Self> {
        if op.n > SPARSE_LIMIT {
            return Err(Error::Scale(op.n));
        }
        let dim = 1usize << op.n;
        let mut rows: Vec<HashMap<usize, Complex64>> = vec![HashMap::new(); dim];
        for t in &op.terms {
            for b in 0..dim as u64 {
                let (phase, out) = t.act(b);
                *rows[out as usize].entry(b as usize).or_default() += phase * t.coeff;
            }
        }
        let mut row_start = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_start.push(0);
        for row in rows {
            let mut entries: Vec<(usize, Complex64)> =
                row.into_iter().filter(|(_, v)| v.norm() >= DROP_TOL).collect();
            entries.sort_by_key(|e| e.0);
            for (c, v) in entries {
                cols.push(c);
                vals.push(v);
            }
            row_start.push(cols.len());
        }
        let real = vals.iter().all(|v| v.im == 0.0);
        Ok(Self {
            dim,
            row_start,
            cols,
            vals,
            real,
        })
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        let range = self.row_start[row]..self.row_start[row + 1];
        match self.cols[range.clone()].binary_search(&col) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        self.apply_into(v, &mut out);
        out
    }

    pub fn apply_into(&self, v: &[Complex64], out: &mut [Complex64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            for k in self.row_start[r]..self.row_start[r + 1] {
                s += self.vals[k] * v[self.cols[k]];
            }
            *o = s;
        }
    }

    /// ⟨v|A|v⟩ for a Hermitian operator.
    pub fn expectation(&self, v: &[Complex64]) -> f64 {
        let mut s = Complex64::new(0.0, 0.0);
        for r in 0..self.dim {
            if v[r] == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut row = Complex64::new(0.0, 0.0);
            for k in self.row_start[r]..self.row_start[r + 1] {
                row += self.vals[k] * v[self.cols[k]];
            }
            s += v[r].conj() * row;
        }
        s.re
    }

    pub fn is_real(&self) -> bool {
        self.real
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub n: usize,
    pub amps: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    X(usize),
    Z(usize),
    Ry { target: usize, angle: f64 },
    Cx { control: usize, target: usize },
    CRy { control: usize, target: usize, angle: f64 },
    /// exp(−i·angle/2·P) for the coefficient-free string P.
    PauliRotation { string: PauliString, angle: f64 },
}

impl Gate {
    fn validate(&self, n: usize) -> Result<()> {
        let check = |q: usize| {
            if q >= n {
                Err(Error::Structural(format!("qubit {q} outside {n}-qubit register")))
            } else {
                Ok(())
            }
        };
        match *self {
            Gate::X(q) | Gate::Z(q) => check(q),
            Gate::Ry { target, angle } => {
                check(target)?;
                finite(angle)
            }
            Gate::Cx { control, target } => pair(control, target, n),
            Gate::CRy { control, target, angle } => {
                pair(control, target, n)?;
                finite(angle)
            }
            Gate::PauliRotation { string, angle } => {
                let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
                if (string.x | string.z) & !mask != 0 {
                    return Err(Error::Structural("Pauli string exceeds register".into()));
                }
                finite(angle)
            }
        }
    }
}

fn finite(angle: f64) -> Result<()> {
    if angle.is_finite() {
        Ok(())
    } else {
        Err(Error::Structural("non-finite gate angle".into()))
    }
}

fn pair(control: usize, target: usize, n: usize) -> Result<()> {
    if control == target {
        return Err(Error::Structural(format!("control and target both qubit {control}")));
    }
    if control >= n || target >= n {
        return Err(Error::Structural(format!("qubit outside {n}-qubit register")));
    }
    Ok(())
}

impl StateVector {
    pub fn zero_state(n: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1usize << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { n, amps }
    }

    pub fn prepare_onv(d: &Determinant) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1usize << d.n];
        amps[d.bits as usize] = Complex64::new(1.0, 0.0);
        Self { n: d.n, amps }
    }

    pub fn from_amplitudes(n: usize, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != 1usize << n {
            return Err(Error::Contract(format!("{} amplitudes for {n} qubits", amps.len())));
        }
        Ok(Self { n, amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn amplitude(&self, d: &Determinant) -> Complex64 {
        self.amps[d.bits as usize]
    }

    pub fn inner_product(&self, other: &StateVector) -> Complex64 {
        assert_eq!(self.n, other.n, "register sizes differ");
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn expectation(&self, op: &PauliSum) -> Result<f64> {
        if op.n != self.n {
            return Err(Error::Contract("operator and state sizes differ".into()));
        }
        if !op.is_hermitian(1e-12) {
            return Err(Error::Contract(format!(
                "operator is not Hermitian (imaginary coefficient {:.3e})",
                op.hermiticity_defect()
            )));
        }
        let mut total = Complex64::new(0.0, 0.0);
        for t in &op.terms {
            let mut s = Complex64::new(0.0, 0.0);
            for (b, a) in self.amps.iter().enumerate() {
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                let (phase, out) = t.act(b as u64);
                s += self.amps[out as usize].conj() * phase * a;
            }
            total += t.coeff * s;
        }
        if total.im.abs() > 1e-10 {
            return Err(Error::Contract(format!("complex expectation {total}")));
        }
        Ok(total.re)
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n)?;
        let n = self.n;
        match *gate {
            Gate::X(q) => {
                let m = qubit_bit(n, q) as usize;
                for b in 0..self.dim() {
                    if b & m == 0 {
                        self.amps.swap(b, b | m);
                    }
                }
            }
            Gate::Z(q) => {
                let m = qubit_bit(n, q) as usize;
                for (b, a) in self.amps.iter_mut().enumerate() {
                    if b & m != 0 {
                        *a = -*a;
                    }
                }
            }
            Gate::Ry { target, angle } => self.rotate_y(None, target, angle),
            Gate::CRy { control, target, angle } => self.rotate_y(Some(control), target, angle),
            Gate::Cx { control, target } => {
                let c = qubit_bit(n, control) as usize;
                let t = qubit_bit(n, target) as usize;
                for b in 0..self.dim() {
                    if b & c != 0 && b & t == 0 {
                        self.amps.swap(b, b | t);
                    }
                }
            }
            Gate::PauliRotation { string, angle } => {
                let (s, c) = (0.5 * angle).sin_cos();
                let unit = PauliString { coeff: Complex64::new(1.0, 0.0), ..string };
                let old = self.amps.clone();
                let minus_i_s = Complex64::new(0.0, -s);
                for (b, a) in old.iter().enumerate() {
                    let (phase, out) = unit.act(b as u64);
                    self.amps[out as usize] += minus_i_s * phase * a;
                }
                for (b, a) in old.iter().enumerate() {
                    self.amps[b] += (c - 1.0) * a;
                }
            }
        }
        Ok(())
    }

    fn rotate_y(&mut self, control: Option<usize>, target: usize, angle: f64) {
        let (s, c) = (0.5 * angle).sin_cos();
        let t = qubit_bit(self.n, target) as usize;
        let cmask = control.map_or(0, |q| qubit_bit(self.n, q) as usize);
        for b in 0..self.dim() {
            if b & t != 0 || b & cmask != cmask {
                continue;
            }
            let a0 = self.amps[b];
            let a1 = self.amps[b | t];
            self.amps[b] = a0 * c - a1 * s;
            self.amps[b | t] = a0 * s + a1 * c;
        }
    }
}

pub fn apply_circuit(sv: &StateVector, circuit: &[Gate]) -> Result<StateVector> {
    for g in circuit {
        g.validate(sv.n)?;
    }
    let mut out = sv.clone();
    for g in circuit {
        out.apply_gate(g)?;
    }
    Ok(out)
}

fn pauli_matrix(x: bool, z: bool) -> [[Complex64; 2]; 2] {
    let o = Complex64::new(0.0, 0.0);
    let l = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match (x, z) {
        (false, false) => [[l, o], [o, l]],
        (true, false) => [[o, l], [l, o]],
        (false, true) => [[l, o], [o, -l]],
        (true, true) => [[o, -i], [i, o]],
    }
}

/// Dense matrix by Kronecker products of the single-qubit letters.
pub fn pauli_sum_matrix(op: &PauliSum) -> Result<DMatrix<Complex64>> {
    if op.n > DENSE_LIMIT {
        return Err(Error::Scale(op.n));
    }
    let dim = 1usize << op.n;
    let mut total = DMatrix::<Complex64>::zeros(dim, dim);
    for t in &op.terms {
        let mut m = DMatrix::<Complex64>::from_element(1, 1, t.coeff);
        for q in 0..op.n {
            let b = qubit_bit(op.n, q);
            let p = pauli_matrix(t.x & b != 0, t.z & b != 0);
            let p = DMatrix::from_fn(2, 2, |r, c| p[r][c]);
            m = m.kronecker(&p);
        }
        total += m;
    }
    Ok(total)
}

/// Jordan-Wigner image of a†_q (`dagger`) or a_q on `n` modes.
pub fn jw_ladder(n: usize, q: usize, dagger: bool) -> PauliSum {
    let mut z = 0u64;
    for k in 0..q {
        z |= qubit_bit(n, k);
    }
    let b = qubit_bit(n, q);
    let half = Complex64::new(0.5, 0.0);
    let y_coeff = if dagger { Complex64::new(0.0, -0.5) } else { Complex64::new(0.0, 0.5) };
    // Z-string times (X ∓ iY)/2; the Z-string commutes past nothing on qubit q.
    let zs = PauliString { x: 0, z, coeff: Complex64::new(1.0, 0.0) };
    let x = PauliString { x: b, z: 0, coeff: half };
    let y = PauliString { x: b, z: b, coeff: y_coeff };
    PauliSum::from_terms(n, vec![zs.mul(&x), zs.mul(&y)])
}

/// Jordan-Wigner image of a ladder-operator product written left to right.
pub fn jw_product(n: usize, ops: &[(usize, bool)]) -> PauliSum {
    let mut acc = PauliSum::identity(n, 1.0);
    for &(q, dagger) in ops {
        acc = acc.mul(&jw_ladder(n, q, dagger));
    }
    acc
}

/// Qubit image of the electronic Hamiltonian, including e_nuc·I.
pub fn jordan_wigner(mi: &MoIntegrals) -> PauliSum {
    let n = mi.n_spin_orbitals();
    let ladders: Vec<[PauliSum; 2]> = (0..n)
        .map(|q| [jw_ladder(n, q, false), jw_ladder(n, q, true)])
        .collect();
    let mut acc: HashMap<(u64, u64), Complex64> = HashMap::new();
    let mut push = |sum: &PauliSum, c: f64| {
        for t in &sum.terms {
            *acc.entry((t.x, t.z)).or_default() += t.coeff * c;
        }
    };
    push(&PauliSum::identity(n, 1.0), mi.e_nuc);
    for p in 0..n {
        for q in 0..n {
            let h = mi.h_so(p, q);
            if h != 0.0 {
                push(&ladders[p][1].mul(&ladders[q][0]), h);
            }
        }
    }
    for p in 0..n {
        for q in 0..n {
            if p == q {
                continue;
            }
            let pq = ladders[p][1].mul(&ladders[q][1]);
            for r in 0..n {
                for s in 0..n {
                    if r == s {
                        continue;
                    }
                    let v = mi.phys_so(p, q, r, s);
                    if v == 0.0 {
                        continue;
                    }
                    // a†p a†q a_s a_r
                    let sr = ladders[s][0].mul(&ladders[r][0]);
                    push(&pq.mul(&sr), 0.5 * v);
                }
            }
        }
    }
    let mut h = PauliSum::from_map(n, acc);
    // The fermionic operator is Hermitian; drop round-off imaginary parts.
    for t in &mut h.terms {
        t.coeff.im = 0.0;
    }
    PauliSum::from_terms(n, h.terms)
}

/// Total particle number.
pub fn number_operator(n: usize) -> PauliSum {
    let mut out = PauliSum::zero(n);
    for q in 0..n {
        out = out.add(&jw_product(n, &[(q, true), (q, false)]));
    }
    out
}

/// Ŝz for `n_spatial` α modes followed by as many β modes.
pub fn sz_operator(n_spatial: usize) -> PauliSum {
    let n = 2 * n_spatial;
    let mut out = PauliSum::zero(n);
    for p in 0..n_spatial {
        out = out.add(&jw_product(n, &[(p, true), (p, false)]).scale(Complex64::new(0.5, 0.0)));
        out = out.add(
            &jw_product(n, &[(p + n_spatial, true), (p + n_spatial, false)]).scale(Complex64::new(-0.5, 0.0)),
        );
    }
    out
}

/// Ŝ² = Ŝ₋Ŝ₊ + Ŝz(Ŝz + 1).
pub fn jw_s2(n_spatial: usize) -> PauliSum {
    let n = 2 * n_spatial;
    let mut s_plus = PauliSum::zero(n);
    let mut s_minus = PauliSum::zero(n);
    for p in 0..n_spatial {
        s_plus = s_plus.add(&jw_product(n, &[(p, true), (p + n_spatial, false)]));
        s_minus = s_minus.add(&jw_product(n, &[(p + n_spatial, true), (p, false)]));
    }
    let sz = sz_operator(n_spatial);
    let out = s_minus.mul(&s_plus).add(&sz.mul(&sz.add(&PauliSum::identity(n, 1.0))));
    let mut terms = out.terms;
    for t in &mut terms {
        t.coeff.im = 0.0;
    }
    PauliSum::from_terms(n, terms)
}
