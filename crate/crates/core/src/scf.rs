//! Molecular-orbital bases: canonical ROHF orbitals, symmetric (Löwdin)
//! orthogonalization, and Procrustes-matched diabatic orbitals.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::integrals::{AoIntegrals, Eri};
use crate::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const DIIS_SUBSPACE: usize = 8;
const DAMPING: f64 = 0.3;
const DAMPED_ITERATIONS: usize = 5;
const ENERGY_TOL: f64 = 1e-10;
const DENSITY_TOL: f64 = 1e-8;
const RANDOM_GUESSES: u64 = 6;
const GUESS_SEED: u64 = 0x05ee_d0f4_ba5e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoKind {
    #[serde(alias = "canonical")]
    CanonicalRohf,
    Lowdin,
    Diabatic,
}

impl MoKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MoKind::CanonicalRohf => "canonical-rohf",
            MoKind::Lowdin => "lowdin",
            MoKind::Diabatic => "diabatic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "canonical-rohf" | "canonical" | "rohf" => Ok(MoKind::CanonicalRohf),
            "lowdin" => Ok(MoKind::Lowdin),
            "diabatic" => Ok(MoKind::Diabatic),
            other => Err(Error::Parse(format!("unknown MO kind {other:?}"))),
        }
    }
}

/// AO→MO coefficients; columns are orbitals.
#[derive(Debug, Clone, PartialEq)]
pub struct MoBasis {
    pub c: DMatrix<f64>,
    pub kind: MoKind,
    /// Hash of the reference geometry (diabatic bases only).
    pub reference: Option<String>,
    pub orbital_energies: Option<DVector<f64>>,
}

impl MoBasis {
    pub fn n(&self) -> usize {
        self.c.ncols()
    }

    /// max |CᵀSC − I|.
    pub fn orthonormality_defect(&self, s: &DMatrix<f64>) -> f64 {
        let m = self.c.transpose() * s * &self.c;
        (m - DMatrix::identity(self.n(), self.n())).abs().max()
    }

    /// Plain-text export: `#` header lines followed by one row per AO.
    pub fn to_text(&self, geometry_hash: &str) -> String {
        let mut out = String::new();
        writeln!(out, "# kind {}", self.kind.as_str()).unwrap();
        writeln!(out, "# geometry {geometry_hash}").unwrap();
        if let Some(r) = &self.reference {
            writeln!(out, "# reference {r}").unwrap();
        }
        if let Some(e) = &self.orbital_energies {
            let vals: Vec<String> = e.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "# orbital_energies {}", vals.join(" ")).unwrap();
        }
        for i in 0..self.c.nrows() {
            let row: Vec<String> = (0..self.c.ncols())
                .map(|j| format!("{:.17e}", self.c[(i, j)]))
                .collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
        out
    }

    /// Inverse of [`MoBasis::to_text`]; returns the basis and the geometry hash.
    pub fn from_text(text: &str) -> Result<(Self, String)> {
        let mut kind = None;
        let mut geometry = String::new();
        let mut reference = None;
        let mut energies = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("MO coefficient {s:?}: {e}")))
        };
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(header) = line.strip_prefix('#') {
                let mut parts = header.split_whitespace();
                match parts.next() {
                    Some("kind") => kind = Some(MoKind::parse(parts.next().unwrap_or(""))?),
                    Some("geometry") => geometry = parts.next().unwrap_or("").to_string(),
                    Some("reference") => reference = parts.next().map(str::to_string),
                    Some("orbital_energies") => {
                        let v: Result<Vec<f64>> = parts.map(num).collect();
                        energies = Some(DVector::from_vec(v?));
                    }
                    _ => {}
                }
                continue;
            }
            rows.push(line.split_whitespace().map(num).collect::<Result<_>>()?);
        }
        let kind = kind.ok_or_else(|| Error::Parse("missing '# kind' header".into()))?;
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse("MO matrix must be square and non-empty".into()));
        }
        if energies.as_ref().is_some_and(|e: &DVector<f64>| e.len() != n) {
            return Err(Error::Parse("orbital energy count does not match".into()));
        }
        let c = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Ok((
            Self {
                c,
                kind,
                reference,
                orbital_energies: energies,
            },
            geometry,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct RohfSolution {
    pub mo: MoBasis,
    /// Total energy including nuclear repulsion.
    pub energy: f64,
    pub iterations: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
}

/// Flips column signs so the largest-magnitude entry of each column is positive.
pub fn fix_column_phases(c: &mut DMatrix<f64>) {
    for j in 0..c.ncols() {
        let mut best = 0;
        for i in 1..c.nrows() {
            if c[(i, j)].abs() > c[(best, j)].abs() + 1e-12 {
                best = i;
            }
        }
        if c[(best, j)] < 0.0 {
            c.column_mut(j).neg_mut();
        }
    }
}

/// S^{-1/2}.
fn inverse_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = s.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if !(min >= 1e-10) {
        return Err(Error::Conditioning(min));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

pub fn lowdin_orbitals(ao: &AoIntegrals) -> Result<MoBasis> {
    Ok(MoBasis {
        c: inverse_sqrt(&ao.s)?,
        kind: MoKind::Lowdin,
        reference: None,
        orbital_energies: None,
    })
}

/// Coulomb and exchange matrices J[D], K[D].
fn coulomb_exchange(eri: &Eri, d: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = eri.dim();
    let mut j = DMatrix::zeros(n, n);
    let mut k = DMatrix::zeros(n, n);
    for m in 0..n {
        for v in 0..n {
            let mut js = 0.0;
            let mut ks = 0.0;
            for l in 0..n {
                for s in 0..n {
                    js += eri.get(m, v, l, s) * d[(l, s)];
                    ks += eri.get(m, l, v, s) * d[(l, s)];
                }
            }
            j[(m, v)] = js;
            k[(m, v)] = ks;
        }
    }
    (j, k)
}

fn density(c: &DMatrix<f64>, nocc: usize) -> DMatrix<f64> {
    let occ = c.columns(0, nocc);
    occ * occ.transpose()
}

struct Fock {
    alpha: DMatrix<f64>,
    beta: DMatrix<f64>,
    energy: f64,
}

fn uhf_focks(ao: &AoIntegrals, h: &DMatrix<f64>, da: &DMatrix<f64>, db: &DMatrix<f64>) -> Fock {
    let (ja, ka) = coulomb_exchange(&ao.eri, da);
    let (jb, kb) = coulomb_exchange(&ao.eri, db);
    let j = ja + jb;
    let alpha = h + &j - ka;
    let beta = h + &j - kb;
    let energy = 0.5 * ((h + &alpha).component_mul(da).sum() + (h + &beta).component_mul(db).sum())
        + ao.e_nuc;
    Fock {
        alpha,
        beta,
        energy,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Shell {
    Closed,
    Open,
    Virtual,
}

fn shell_of(p: usize, n_alpha: usize, n_beta: usize) -> Shell {
    if p < n_beta {
        Shell::Closed
    } else if p < n_alpha {
        Shell::Open
    } else {
        Shell::Virtual
    }
}

/// Single-matrix ROHF Fock in the current MO basis and its orbital gradient.
fn effective_fock_mo(
    fa: &DMatrix<f64>,
    fb: &DMatrix<f64>,
    n_alpha: usize,
    n_beta: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = fa.nrows();
    let mut f = DMatrix::zeros(n, n);
    let mut grad = DMatrix::zeros(n, n);
    for p in 0..n {
        for q in 0..n {
            let avg = 0.5 * (fa[(p, q)] + fb[(p, q)]);
            let (sp, sq) = (shell_of(p, n_alpha, n_beta), shell_of(q, n_alpha, n_beta));
            f[(p, q)] = match (sp, sq) {
                (Shell::Closed, Shell::Open) | (Shell::Open, Shell::Closed) => fb[(p, q)],
                (Shell::Open, Shell::Virtual) | (Shell::Virtual, Shell::Open) => fa[(p, q)],
                _ => avg,
            };
            if sp != sq {
                grad[(p, q)] = f[(p, q)];
            }
        }
    }
    (f, grad)
}

struct Diis {
    focks: Vec<DMatrix<f64>>,
    errors: Vec<DMatrix<f64>>,
}

impl Diis {
    fn new() -> Self {
        Self {
            focks: Vec::new(),
            errors: Vec::new(),
        }
    }

    fn push(&mut self, f: DMatrix<f64>, e: DMatrix<f64>) {
        if self.focks.len() == DIIS_SUBSPACE {
            self.focks.remove(0);
            self.errors.remove(0);
        }
        self.focks.push(f);
        self.errors.push(e);
    }

    fn extrapolate(&self) -> Option<DMatrix<f64>> {
        let m = self.focks.len();
        if m < 2 {
            return None;
        }
        let mut b = DMatrix::zeros(m + 1, m + 1);
        for i in 0..m {
            for j in 0..m {
                b[(i, j)] = self.errors[i].component_mul(&self.errors[j]).sum();
            }
            b[(i, m)] = -1.0;
            b[(m, i)] = -1.0;
        }
        let scale = (0..m).map(|i| b[(i, i)]).fold(0.0, f64::max);
        if scale <= 0.0 {
            return None;
        }
        for i in 0..m {
            for j in 0..m {
                b[(i, j)] /= scale;
            }
        }
        let mut rhs = DVector::zeros(m + 1);
        rhs[m] = -1.0;
        let coef = b.svd(true, true).solve(&rhs, 1e-14).ok()?;
        let mut f = DMatrix::zeros(self.focks[0].nrows(), self.focks[0].ncols());
        for i in 0..m {
            f += &self.focks[i] * coef[i];
        }
        Some(f)
    }
}

/// One ROHF run from a starting set of orthonormal orbitals (given in the
/// orthogonalized basis, C = X·C').
fn rohf_from(
    ao: &AoIntegrals,
    x: &DMatrix<f64>,
    start: DMatrix<f64>,
    n_alpha: usize,
    n_beta: usize,
) -> Result<RohfSolution> {
    let h = ao.core_hamiltonian();
    let mut cp = start;
    let mut c = x * &cp;
    let mut diis = Diis::new();
    let mut previous_f: Option<DMatrix<f64>> = None;
    let mut last_energy = f64::NAN;
    let mut last_density: Option<DMatrix<f64>> = None;
    let (mut de, mut dd) = (f64::INFINITY, f64::INFINITY);

    for iteration in 1..=MAX_ITERATIONS {
        let da = density(&c, n_alpha);
        let db = density(&c, n_beta);
        let fock = uhf_focks(ao, &h, &da, &db);
        let total = &da + &db;
        de = (fock.energy - last_energy).abs();
        dd = last_density
            .as_ref()
            .map_or(f64::INFINITY, |d| (&total - d).abs().max());
        if !fock.energy.is_finite() {
            return Err(Error::NonFinite);
        }
        let fa_mo = c.transpose() * &fock.alpha * &c;
        let fb_mo = c.transpose() * &fock.beta * &c;
        let (f_mo, grad_mo) = effective_fock_mo(&fa_mo, &fb_mo, n_alpha, n_beta);
        if iteration > 1 && de < ENERGY_TOL && dd < DENSITY_TOL {
            let mut eig_c = c.clone();
            fix_column_phases(&mut eig_c);
            let energies = DVector::from_iterator(f_mo.nrows(), (0..f_mo.nrows()).map(|p| f_mo[(p, p)]));
            return Ok(RohfSolution {
                mo: MoBasis {
                    c: eig_c,
                    kind: MoKind::CanonicalRohf,
                    reference: None,
                    orbital_energies: Some(energies),
                },
                energy: fock.energy,
                iterations: iteration,
                n_alpha,
                n_beta,
            });
        }
        last_energy = fock.energy;
        last_density = Some(total);

        // Effective Fock and gradient in the orthogonalized AO basis.
        let f_orth = &cp * &f_mo * cp.transpose();
        let err = &cp * (&grad_mo - grad_mo.transpose()) * cp.transpose();
        let f_used = if iteration <= DAMPED_ITERATIONS {
            let f = match &previous_f {
                Some(prev) => &f_orth * (1.0 - DAMPING) + prev * DAMPING,
                None => f_orth.clone(),
            };
            diis.push(f_orth, err);
            f
        } else {
            diis.push(f_orth.clone(), err);
            diis.extrapolate().unwrap_or(f_orth)
        };
        previous_f = Some(f_used.clone());

        let eig = f_used.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        cp = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |i, j| {
            eig.eigenvectors[(i, order[j])]
        });
        c = x * &cp;
    }
    Err(Error::Convergence {
        iterations: MAX_ITERATIONS,
        delta_e: de,
        delta_d: dd,
    })
}

fn sorted_eigenvectors(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    DMatrix::from_fn(m.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])])
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    a.qr().q()
}

/// Deterministic starting orbitals: core Hamiltonian, generalized Wolfsberg-
/// Helmholz, then seeded random rotations of the core guess.
fn starting_guesses(ao: &AoIntegrals, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let n = ao.nbf();
    let h = ao.core_hamiltonian();
    let core = sorted_eigenvectors(&(x.transpose() * &h * x));
    let gwh = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            h[(i, i)]
        } else {
            0.875 * ao.s[(i, j)] * (h[(i, i)] + h[(j, j)])
        }
    });
    let gwh = sorted_eigenvectors(&(x.transpose() * gwh * x));
    let mut rng = ChaCha8Rng::seed_from_u64(GUESS_SEED);
    let mut out = vec![core.clone(), gwh];
    for _ in 0..RANDOM_GUESSES {
        out.push(&core * random_orthogonal(n, &mut rng));
    }
    out
}

/// Restricted open-shell Hartree-Fock with Aufbau occupations. Several
/// deterministic starting points are converged and the lowest-energy
/// solution is returned.
pub fn rohf(ao: &AoIntegrals, n_alpha: usize, n_beta: usize) -> Result<RohfSolution> {
    let n = ao.nbf();
    if n_alpha < n_beta || n_alpha > n {
        return Err(Error::Domain(format!(
            "infeasible occupation (n_alpha = {n_alpha}, n_beta = {n_beta}) for {n} orbitals"
        )));
    }
    let x = inverse_sqrt(&ao.s)?;
    let mut best: Option<RohfSolution> = None;
    let mut first_err = None;
    for guess in starting_guesses(ao, &x) {
        match rohf_from(ao, &x, guess, n_alpha, n_beta) {
            Ok(sol) => {
                if best.as_ref().is_none_or(|b| sol.energy < b.energy - 1e-12) {
                    best = Some(sol);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one guess was tried"))
}

/// Orthogonal factor V·Uᵀ of the SVD O = UΣVᵀ; fails when O is too close
/// to singular for the matching to be meaningful.
pub fn procrustes_transform(o: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = o.clone().svd(true, true);
    let min = svd.singular_values.min();
    if min < 1e-6 {
        return Err(Error::IllMatchedReference(min));
    }
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    Ok(vt.transpose() * u.transpose())
}

/// Rotates `current` to maximal overlap with `reference`, using the cross AO
/// overlap `m` = ⟨χ(reference geometry)|χ(current geometry)⟩.
pub fn diabatic_mos(
    reference: &MoBasis,
    current: &MoBasis,
    m: &DMatrix<f64>,
    reference_hash: &str,
) -> Result<MoBasis> {
    let o = reference.c.transpose() * m * &current.c;
    let t = procrustes_transform(&o)?;
    Ok(MoBasis {
        c: &current.c * t,
        kind: MoKind::Diabatic,
        reference: Some(reference_hash.to_string()),
        orbital_energies: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{h4_at, td_reference, Atom, Distortion, Geometry};
    use crate::integrals::{cross_ao_overlap, sto3g_integrals, BasisRule};

    #[test]
    fn hydrogen_atom_energy_is_core_integral() {
        let g = Geometry::from_atoms(vec![Atom::hydrogen([0.0, 0.0, 0.0])]).unwrap();
        let ao = sto3g_integrals(&g).unwrap();
        let sol = rohf(&ao, 1, 0).unwrap();
        assert!((sol.energy - (ao.t[(0, 0)] + ao.v[(0, 0)])).abs() < 1e-14);
    }

    #[test]
    fn infeasible_occupations_rejected() {
        let ao = sto3g_integrals(&td_reference()).unwrap();
        assert!(rohf(&ao, 1, 2).is_err());
        assert!(rohf(&ao, 5, 0).is_err());
    }

    #[test]
    fn tetrahedral_reference_energy() {
        let ao = sto3g_integrals(&td_reference()).unwrap();
        let sol = rohf(&ao, 2, 1).unwrap();
        // pyscf ROHF/STO-3G with identical Å→Bohr conversion.
        assert!((sol.energy - -1.514999599039).abs() < 1e-8, "{}", sol.energy);
        assert!(sol.mo.orthonormality_defect(&ao.s) < 1e-10);
    }

    #[test]
    fn distorted_point_energy_and_phases() {
        let ao = sto3g_integrals(&h4_at(Distortion::new(0.1, 0.05, 0.2))).unwrap();
        let sol = rohf(&ao, 2, 1).unwrap();
        assert!((sol.energy - -1.531539916041).abs() < 1e-8, "{}", sol.energy);
        let e = sol.mo.orbital_energies.as_ref().unwrap();
        for j in 0..4 {
            let col = sol.mo.c.column(j);
            let big = col.iter().cloned().fold(0.0_f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(big > 0.0);
        }
        assert!(e.len() == 4);
    }

    #[test]
    fn lowdin_properties() {
        let g = h4_at(Distortion::new(0.1, 0.05, -0.2));
        let ao = sto3g_integrals(&g).unwrap();
        let mo = lowdin_orbitals(&ao).unwrap();
        assert!(mo.orthonormality_defect(&ao.s) < 1e-12);
        assert!((&mo.c - mo.c.transpose()).abs().max() < 1e-12);

        let mut unit = ao.clone();
        unit.s = DMatrix::identity(4, 4);
        let mo = lowdin_orbitals(&unit).unwrap();
        assert!((mo.c - DMatrix::<f64>::identity(4, 4)).abs().max() < 1e-14);

        unit.s[(0, 1)] = 1.0;
        unit.s[(1, 0)] = 1.0;
        assert!(matches!(lowdin_orbitals(&unit), Err(Error::Conditioning(_))));
    }

    #[test]
    fn diabatic_self_match_and_nearby() {
        let rule = BasisRule::sto3g_hydrogen();
        let g0 = h4_at(Distortion::new(0.1, 0.0, -0.1));
        let ao0 = sto3g_integrals(&g0).unwrap();
        let ref_mo = rohf(&ao0, 2, 1).unwrap().mo;
        let m = cross_ao_overlap(&g0, &g0, &rule).unwrap();
        let same = diabatic_mos(&ref_mo, &ref_mo, &m, &g0.hash()).unwrap();
        let o = ref_mo.c.transpose() * &m * &same.c;
        assert!((o - DMatrix::<f64>::identity(4, 4)).abs().max() < 1e-10);

        for dz in [-0.15, -0.05, 0.0] {
            let g = h4_at(Distortion::new(0.1, 0.05, dz));
            let ao = sto3g_integrals(&g).unwrap();
            let cur = rohf(&ao, 2, 1).unwrap().mo;
            let m = cross_ao_overlap(&g0, &g, &rule).unwrap();
            let dia = diabatic_mos(&ref_mo, &cur, &m, &g0.hash()).unwrap();
            assert!(dia.orthonormality_defect(&ao.s) < 1e-10);
            let o = ref_mo.c.transpose() * &m * &dia.c;
            for p in 0..4 {
                assert!(o[(p, p)] > 0.99, "dz = {dz}: {o}");
            }
            assert_eq!(dia.kind, MoKind::Diabatic);
        }
    }

    #[test]
    fn procrustes_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let o = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.9 } else { 0.0 })
            + DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>() * 0.3 - 0.15);
        let t = procrustes_transform(&o).unwrap();
        assert!((t.transpose() * &t - DMatrix::<f64>::identity(4, 4)).abs().max() < 1e-12);
        let id = DMatrix::<f64>::identity(4, 4);
        let best = (&o * &t - &id).norm();
        for _ in 0..100 {
            let other = random_orthogonal(4, &mut rng);
            assert!((&o * other - &id).norm() >= best - 1e-12);
        }
        assert!(matches!(
            procrustes_transform(&DMatrix::zeros(4, 4)),
            Err(Error::IllMatchedReference(_))
        ));
    }

    #[test]
    fn text_round_trip() {
        let ao = sto3g_integrals(&td_reference()).unwrap();
        let mo = rohf(&ao, 2, 1).unwrap().mo;
        let text = mo.to_text("abc123");
        let (back, hash) = MoBasis::from_text(&text).unwrap();
        assert_eq!(hash, "abc123");
        assert_eq!(back, mo);
        assert!(MoBasis::from_text("1 2\n3 4\n").is_err());
        assert!(MoBasis::from_text("# kind lowdin\n1 2\n3\n").is_err());
    }
}
