//! Second-quantized electronic Hamiltonian in an MO basis, the determinant
//! basis, Slater-Condon matrix elements and the dense FCI reference solver.
//!
//! Spin-orbital `q < n_spatial` is α orbital `q`; `q ≥ n_spatial` is β orbital
//! `q - n_spatial`. A determinant is stored as its occupation string read as a
//! binary number, leftmost character (spin-orbital 0) most significant, so
//! numeric order coincides with lexicographic order of the strings.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::integrals::{AoIntegrals, Eri};
use crate::scf::{MoBasis, MoKind};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct MoIntegrals {
    pub h: DMatrix<f64>,
    pub g: Eri,
    pub e_nuc: f64,
    pub basis_kind: MoKind,
}

impl MoIntegrals {
    pub fn n_spatial(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_spin_orbitals(&self) -> usize {
        2 * self.n_spatial()
    }

    /// One-electron integral between spin-orbitals.
    #[inline]
    pub fn h_so(&self, p: usize, q: usize) -> f64 {
        let n = self.n_spatial();
        if p / n != q / n {
            return 0.0;
        }
        self.h[(p % n, q % n)]
    }

    /// Physicists' ⟨pq|rs⟩ between spin-orbitals.
    #[inline]
    pub fn phys_so(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        let n = self.n_spatial();
        if p / n != r / n || q / n != s / n {
            return 0.0;
        }
        self.g.get(p % n, r % n, q % n, s % n)
    }

    /// Antisymmetrized ⟨pq||rs⟩.
    #[inline]
    pub fn anti_so(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.phys_so(p, q, r, s) - self.phys_so(p, q, s, r)
    }
}

pub fn ao_to_mo(ao: &AoIntegrals, mo: &MoBasis) -> Result<MoIntegrals> {
    let n = ao.nbf();
    if mo.c.nrows() != n || mo.c.ncols() != n {
        return Err(Error::Contract(format!(
            "MO matrix is {}x{}, basis has {n} functions",
            mo.c.nrows(),
            mo.c.ncols()
        )));
    }
    let c = &mo.c;
    let h = c.transpose() * ao.core_hamiltonian() * c;

    // Quarter transformations, one index at a time.
    let idx = |p: usize, q: usize, r: usize, s: usize| ((p * n + q) * n + r) * n + s;
    let mut a = vec![0.0; n * n * n * n];
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                for s in 0..n {
                    a[idx(p, q, r, s)] = ao.eri.get(p, q, r, s);
                }
            }
        }
    }
    for axis in 0..4 {
        let mut b = vec![0.0; n * n * n * n];
        for i0 in 0..n {
            for i1 in 0..n {
                for i2 in 0..n {
                    for i3 in 0..n {
                        let mut sum = 0.0;
                        for k in 0..n {
                            let mut ix = [i0, i1, i2, i3];
                            let m = ix[axis];
                            ix[axis] = k;
                            sum += c[(k, m)] * a[idx(ix[0], ix[1], ix[2], ix[3])];
                        }
                        b[idx(i0, i1, i2, i3)] = sum;
                    }
                }
            }
        }
        a = b;
    }
    let mut g = Eri::zeros(n);
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                for s in 0..n {
                    g.set(p, q, r, s, a[idx(p, q, r, s)]);
                }
            }
        }
    }
    Ok(MoIntegrals {
        h: (&h + h.transpose()) * 0.5,
        g,
        e_nuc: ao.e_nuc,
        basis_kind: mo.kind,
    })
}

/// Occupation-number vector over `n` spin-orbitals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Determinant {
    pub bits: u64,
    pub n: usize,
}

#[inline]
fn mode_bit(n: usize, q: usize) -> u64 {
    1u64 << (n - 1 - q)
}

impl Determinant {
    pub fn new(bits: u64, n: usize) -> Self {
        debug_assert!(n <= 64 && (n == 64 || bits >> n == 0));
        Self { bits, n }
    }

    pub fn from_occupied(n: usize, occupied: &[usize]) -> Self {
        let bits = occupied.iter().fold(0, |b, &q| b | mode_bit(n, q));
        Self { bits, n }
    }

    /// Parses a ket string such as `"11001000"`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('|').trim_end_matches('⟩').trim_end_matches('>');
        if s.is_empty() || s.len() > 64 || !s.chars().all(|c| c == '0' || c == '1') {
            return Err(Error::Parse(format!("occupation string {s:?}")));
        }
        Ok(Self {
            bits: u64::from_str_radix(s, 2).expect("validated"),
            n: s.len(),
        })
    }

    #[inline]
    pub fn is_occupied(&self, q: usize) -> bool {
        self.bits & mode_bit(self.n, q) != 0
    }

    pub fn occupied(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| self.is_occupied(q)).collect()
    }

    pub fn n_electrons(&self) -> usize {
        self.bits.count_ones() as usize
    }

    /// 2·M_S, with the first half of the modes α.
    pub fn two_ms(&self) -> i32 {
        let half = self.n / 2;
        let alpha = (0..half).filter(|&q| self.is_occupied(q)).count() as i32;
        let beta = (half..self.n).filter(|&q| self.is_occupied(q)).count() as i32;
        alpha - beta
    }

    /// (−1) raised to the number of occupied modes before `q`.
    #[inline]
    fn parity_before(&self, q: usize) -> f64 {
        if q == 0 || (self.bits >> (self.n - q)).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// a_q|self⟩ as (sign, result), or None if it vanishes.
    #[inline]
    pub fn annihilate(&self, q: usize) -> Option<(f64, Determinant)> {
        if !self.is_occupied(q) {
            return None;
        }
        let sign = self.parity_before(q);
        Some((sign, Determinant::new(self.bits ^ mode_bit(self.n, q), self.n)))
    }

    /// a†_q|self⟩ as (sign, result), or None if it vanishes.
    #[inline]
    pub fn create(&self, q: usize) -> Option<(f64, Determinant)> {
        if self.is_occupied(q) {
            return None;
        }
        let sign = self.parity_before(q);
        Some((sign, Determinant::new(self.bits | mode_bit(self.n, q), self.n)))
    }

    /// Applies a product of ladder operators written left to right as
    /// `(mode, is_creation)`; the rightmost acts first.
    pub fn apply(&self, ops: &[(usize, bool)]) -> Option<(f64, Determinant)> {
        let mut sign = 1.0;
        let mut d = *self;
        for &(q, dagger) in ops.iter().rev() {
            let (s, next) = if dagger { d.create(q)? } else { d.annihilate(q)? };
            sign *= s;
            d = next;
        }
        Some((sign, d))
    }
}

impl fmt::Display for Determinant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n {
            f.write_str(if self.is_occupied(q) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Particle-number and spin-projection sector; `two_ms` = None means all M_S.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sector {
    pub n_el: usize,
    pub two_ms: Option<i32>,
}

impl Sector {
    /// Three electrons, M_S = +1/2.
    pub const DOUBLET: Sector = Sector {
        n_el: 3,
        two_ms: Some(1),
    };
}

/// All determinants of the sector in ascending (lexicographic) order.
pub fn determinant_basis(n_spatial: usize, n_el: usize, two_ms: Option<i32>) -> Result<Vec<Determinant>> {
    let n = 2 * n_spatial;
    if n > 64 || n_el > n {
        return Err(Error::Domain(format!(
            "{n_el} electrons in {n} spin-orbitals"
        )));
    }
    let mut out = Vec::new();
    if n_el == 0 {
        out.push(Determinant::new(0, n));
        return Ok(out.into_iter().filter(|_| two_ms.is_none_or(|m| m == 0)).collect());
    }
    // Gosper's hack enumerates fixed-popcount words in increasing order.
    let limit: u128 = 1u128 << n;
    let mut v: u128 = (1u128 << n_el) - 1;
    while v < limit {
        let d = Determinant::new(v as u64, n);
        if two_ms.is_none_or(|m| d.two_ms() == m) {
            out.push(d);
        }
        let t = v | (v - 1);
        let w = (t + 1) | (((!t & (t + 1)) - 1) >> (v.trailing_zeros() + 1));
        v = w;
    }
    Ok(out)
}

/// ⟨di|Ĥ|dj⟩ including nuclear repulsion on the diagonal.
pub fn slater_condon_element(di: &Determinant, dj: &Determinant, mi: &MoIntegrals) -> f64 {
    if di.n_electrons() != dj.n_electrons() || di.n != dj.n {
        return 0.0;
    }
    let diff = di.bits ^ dj.bits;
    match diff.count_ones() {
        0 => {
            let occ = dj.occupied();
            let mut e = mi.e_nuc;
            for (k, &i) in occ.iter().enumerate() {
                e += mi.h_so(i, i);
                for &j in &occ[..k] {
                    e += mi.anti_so(i, j, i, j);
                }
            }
            e
        }
        2 => {
            let n = dj.n;
            let mode = |bits: u64| n - 1 - bits.trailing_zeros() as usize;
            let a = mode(diff & di.bits);
            let i = mode(diff & dj.bits);
            let (sign, _) = dj.apply(&[(a, true), (i, false)]).expect("single excitation");
            let mut v = mi.h_so(a, i);
            for k in dj.occupied() {
                if k != i {
                    v += mi.anti_so(a, k, i, k);
                }
            }
            sign * v
        }
        4 => {
            let split = |bits: u64| {
                let modes: Vec<usize> = (0..di.n).filter(|&q| bits & mode_bit(di.n, q) != 0).collect();
                (modes[0], modes[1])
            };
            let (a, b) = split(diff & di.bits);
            let (i, j) = split(diff & dj.bits);
            let (sign, _) = dj
                .apply(&[(a, true), (b, true), (j, false), (i, false)])
                .expect("double excitation");
            sign * mi.anti_so(a, b, i, j)
        }
        _ => 0.0,
    }
}

pub fn hamiltonian_matrix(dets: &[Determinant], mi: &MoIntegrals) -> DMatrix<f64> {
    let n = dets.len();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = slater_condon_element(&dets[i], &dets[j], mi);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Sorted eigen-decomposition with each eigenvector's largest component positive.
pub fn sorted_eigensystem(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::from_fn(m.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    crate::scf::fix_column_phases(&mut vectors);
    (values, vectors)
}

#[derive(Debug, Clone)]
pub struct FciSolution {
    pub determinants: Vec<Determinant>,
    pub eigenvalues: DVector<f64>,
    /// Columns are eigenvectors over `determinants`.
    pub eigenvectors: DMatrix<f64>,
}

pub fn fci_solve(mi: &MoIntegrals, sector: Sector) -> Result<FciSolution> {
    let dets = determinant_basis(mi.n_spatial(), sector.n_el, sector.two_ms)?;
    if dets.is_empty() {
        return Err(Error::Domain(format!("empty sector {sector:?}")));
    }
    let h = hamiltonian_matrix(&dets, mi);
    let (eigenvalues, eigenvectors) = sorted_eigensystem(&h);
    Ok(FciSolution {
        determinants: dets,
        eigenvalues,
        eigenvectors,
    })
}

/// Ŝ² = Ŝ₋Ŝ₊ + Ŝz(Ŝz + 1) over the given determinants.
pub fn s2_matrix(dets: &[Determinant]) -> DMatrix<f64> {
    let n = dets.first().map_or(0, |d| d.n);
    let half = n / 2;
    let index: std::collections::HashMap<u64, usize> =
        dets.iter().enumerate().map(|(k, d)| (d.bits, k)).collect();
    let mut s2 = DMatrix::zeros(dets.len(), dets.len());
    for (col, d) in dets.iter().enumerate() {
        let sz = 0.5 * d.two_ms() as f64;
        s2[(col, col)] += sz * (sz + 1.0);
        for p in 0..half {
            for q in 0..half {
                // a†_{pβ} a_{pα} a†_{qα} a_{qβ}
                let ops = [(p + half, true), (p, false), (q, true), (q + half, false)];
                if let Some((sign, out)) = d.apply(&ops) {
                    if let Some(&row) = index.get(&out.bits) {
                        s2[(row, col)] += sign;
                    }
                }
            }
        }
    }
    s2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FciRoot {
    pub energy: f64,
    pub s2: f64,
    /// (occupation string, coefficient) for the largest components.
    pub leading: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FciReport {
    pub geometry_hash: String,
    pub geometry_xyz: String,
    pub roots: Vec<FciRoot>,
}

impl FciSolution {
    pub fn report(&self, geometry_hash: &str, geometry_xyz: &str, n_roots: usize, n_leading: usize) -> FciReport {
        let s2 = s2_matrix(&self.determinants);
        let roots = (0..n_roots.min(self.eigenvalues.len()))
            .map(|k| {
                let v = self.eigenvectors.column(k);
                let mut comps: Vec<(usize, f64)> = v.iter().cloned().enumerate().collect();
                comps.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
                FciRoot {
                    energy: self.eigenvalues[k],
                    s2: (v.transpose() * &s2 * v)[(0, 0)],
                    leading: comps
                        .into_iter()
                        .take(n_leading)
                        .map(|(i, c)| (self.determinants[i].to_string(), c))
                        .collect(),
                }
            })
            .collect();
        FciReport {
            geometry_hash: geometry_hash.to_string(),
            geometry_xyz: geometry_xyz.to_string(),
            roots,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{h4_at, td_reference, Distortion};
    use crate::integrals::sto3g_integrals;
    use crate::scf::{lowdin_orbitals, rohf};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn integrals_at(d: Distortion) -> (AoIntegrals, MoBasis) {
        let ao = sto3g_integrals(&h4_at(d)).unwrap();
        let mo = rohf(&ao, 2, 1).unwrap().mo;
        (ao, mo)
    }

    /// ⟨di|Ĥ|dj⟩ by applying every ladder product of the Hamiltonian to dj.
    fn brute_force_element(di: &Determinant, dj: &Determinant, mi: &MoIntegrals) -> f64 {
        let n = mi.n_spin_orbitals();
        let mut v = if di == dj { mi.e_nuc } else { 0.0 };
        for p in 0..n {
            for q in 0..n {
                if let Some((s, out)) = dj.apply(&[(p, true), (q, false)]) {
                    if out == *di {
                        v += s * mi.h_so(p, q);
                    }
                }
                for r in 0..n {
                    for t in 0..n {
                        if let Some((s, out)) = dj.apply(&[(p, true), (q, true), (t, false), (r, false)]) {
                            if out == *di {
                                v += 0.5 * s * mi.phys_so(p, q, r, t);
                            }
                        }
                    }
                }
            }
        }
        v
    }

    #[test]
    fn sector_sizes() {
        assert_eq!(determinant_basis(4, 3, None).unwrap().len(), 56);
        assert_eq!(determinant_basis(4, 3, Some(1)).unwrap().len(), 24);
        assert_eq!(determinant_basis(4, 0, Some(0)).unwrap().len(), 1);
        assert!(determinant_basis(4, 3, Some(7)).unwrap().is_empty());
        assert!(determinant_basis(4, 9, None).is_err());
        let dets = determinant_basis(4, 3, Some(1)).unwrap();
        assert!(dets.windows(2).all(|w| w[0].to_string() < w[1].to_string()));
        assert!(dets.iter().all(|d| d.n_electrons() == 3 && d.two_ms() == 1));
    }

    #[test]
    fn determinant_strings_and_signs() {
        let d = Determinant::parse("|11001000⟩").unwrap();
        assert_eq!(d.bits, 200);
        assert_eq!(d.occupied(), vec![0, 1, 4]);
        assert_eq!(d.to_string(), "11001000");
        assert_eq!(Determinant::from_occupied(8, &[0, 1, 4]), d);
        // a_4 passes two occupied modes, a_1 passes one.
        assert_eq!(d.annihilate(4).unwrap().0, 1.0);
        assert_eq!(d.annihilate(1).unwrap().0, -1.0);
        assert!(d.annihilate(2).is_none());
        assert!(d.create(0).is_none());
        assert!(Determinant::parse("1102").is_err());
    }

    #[test]
    fn identity_transform_preserves_integrals() {
        let ao = sto3g_integrals(&td_reference()).unwrap();
        let id = MoBasis {
            c: DMatrix::identity(4, 4),
            kind: MoKind::Lowdin,
            reference: None,
            orbital_energies: None,
        };
        let mi = ao_to_mo(&ao, &id).unwrap();
        assert!((&mi.h - ao.core_hamiltonian()).abs().max() < 1e-14);
        for p in 0..4 {
            for q in 0..4 {
                for r in 0..4 {
                    for s in 0..4 {
                        assert!((mi.g.get(p, q, r, s) - ao.eri.get(p, q, r, s)).abs() < 1e-14);
                    }
                }
            }
        }
        let bad = MoBasis {
            c: DMatrix::identity(3, 3),
            ..id
        };
        assert!(ao_to_mo(&ao, &bad).is_err());
    }

    #[test]
    fn rohf_energy_reassembles_from_mo_integrals() {
        for d in [Distortion::new(0.0, 0.0, 0.0), Distortion::new(0.1, 0.05, 0.2)] {
            let ao = sto3g_integrals(&h4_at(d)).unwrap();
            let sol = rohf(&ao, 2, 1).unwrap();
            let mi = ao_to_mo(&ao, &sol.mo).unwrap();
            let phi = Determinant::parse("11001000").unwrap();
            let e = slater_condon_element(&phi, &phi, &mi);
            assert!((e - sol.energy).abs() < 1e-8);
            assert!((mi.h.clone() - mi.h.transpose()).abs().max() < 1e-12);
            assert!(mi.g.symmetry_defect() < 1e-12);
        }
    }

    #[test]
    fn slater_condon_matches_ladder_algebra() {
        let (ao, mo) = integrals_at(Distortion::new(0.1, 0.05, -0.25));
        let mi = ao_to_mo(&ao, &mo).unwrap();
        let dets = determinant_basis(4, 3, None).unwrap();
        for di in &dets {
            for dj in &dets {
                let a = slater_condon_element(di, dj, &mi);
                let b = brute_force_element(di, dj, &mi);
                assert!((a - b).abs() < 1e-12, "{di} {dj}: {a} vs {b}");
            }
        }
        let a = Determinant::parse("11100000").unwrap();
        let b = Determinant::parse("00011100").unwrap();
        assert_eq!(slater_condon_element(&a, &b, &mi), 0.0);
    }

    #[test]
    fn closed_form_diagonal() {
        let (ao, mo) = integrals_at(Distortion::new(0.1, 0.05, 0.2));
        let mi = ao_to_mo(&ao, &mo).unwrap();
        let g = |p, q, r, s| mi.g.get(p, q, r, s);
        let h = &mi.h;
        let expected = mi.e_nuc + 2.0 * h[(0, 0)] + h[(1, 1)] + g(0, 0, 0, 0) + 2.0 * g(0, 0, 1, 1)
            - g(0, 1, 1, 0);
        let phi = Determinant::parse("11001000").unwrap();
        assert!((slater_condon_element(&phi, &phi, &mi) - expected).abs() < 1e-12);
    }

    #[test]
    fn tetrahedral_degeneracy_and_reference_values() {
        let ao = sto3g_integrals(&td_reference()).unwrap();
        let mo = rohf(&ao, 2, 1).unwrap();
        let mi = ao_to_mo(&ao, &mo.mo).unwrap();
        let fci = fci_solve(&mi, Sector::DOUBLET).unwrap();
        let e = &fci.eigenvalues;
        assert!((e[0] - e[1]).abs() < 1e-8 && (e[1] - e[2]).abs() < 1e-8);
        // Independent FCI/STO-3G run.
        assert!((e[0] - -1.563620058700).abs() < 1e-8);
        assert!((e[3] - -1.282458721753).abs() < 1e-8);
        assert!(e[0] <= mo.energy);
    }

    #[test]
    fn distorted_reference_values() {
        let cases = [
            (Distortion::new(0.1, 0.05, 0.2), [-1.585337760801, -1.552577210777, -1.532971551312]),
            (Distortion::new(0.1, 0.0, -0.1), [-1.598767480106, -1.564559321393, -1.522860525406]),
            (Distortion::new(0.1, 0.05, -0.3), [-1.616418894421, -1.596634061025, -1.443401125651]),
        ];
        for (d, want) in cases {
            let (ao, mo) = integrals_at(d);
            let fci = fci_solve(&ao_to_mo(&ao, &mo).unwrap(), Sector::DOUBLET).unwrap();
            for k in 0..3 {
                assert!((fci.eigenvalues[k] - want[k]).abs() < 1e-8, "{d:?} root {k}");
            }
        }
    }

    #[test]
    fn gauge_invariance_across_bases() {
        let g = h4_at(Distortion::new(0.1, 0.05, 0.13));
        let ao = sto3g_integrals(&g).unwrap();
        let rohf_mo = rohf(&ao, 2, 1).unwrap().mo;
        let low = lowdin_orbitals(&ao).unwrap();
        let a = fci_solve(&ao_to_mo(&ao, &rohf_mo).unwrap(), Sector::DOUBLET).unwrap();
        let b = fci_solve(&ao_to_mo(&ao, &low).unwrap(), Sector::DOUBLET).unwrap();
        assert!((a.eigenvalues - b.eigenvalues).abs().max() < 1e-10);
    }

    #[test]
    fn spin_matrix_properties() {
        let dets = determinant_basis(4, 3, Some(1)).unwrap();
        let s2 = s2_matrix(&dets);
        assert_eq!(s2, s2.transpose());
        let k = dets.iter().position(|d| d.to_string() == "11001000").unwrap();
        assert!((s2[(k, k)] - 0.75).abs() < 1e-14);
        for v in s2.clone().symmetric_eigen().eigenvalues.iter() {
            assert!((v - 0.75).abs() < 1e-10 || (v - 3.75).abs() < 1e-10, "{v}");
        }
        let (ao, mo) = integrals_at(Distortion::new(0.1, 0.05, 0.2));
        let h = hamiltonian_matrix(&dets, &ao_to_mo(&ao, &mo).unwrap());
        assert!((&h * &s2 - &s2 * &h).norm() < 1e-10);
        let fci = fci_solve(&ao_to_mo(&ao, &mo).unwrap(), Sector::DOUBLET).unwrap();
        let report = fci.report("h", "", 4, 3);
        for r in &report.roots[..3] {
            assert!((r.s2 - 0.75).abs() < 1e-8);
        }
        assert!((report.roots[3].s2 - 3.75).abs() < 1e-8);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("leading"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_rotation_keeps_spectrum(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (ao, mo) = integrals_at(Distortion::new(0.1, 0.05, 0.1));
            let q = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>() - 0.5).qr().q();
            let rotated = MoBasis { c: &mo.c * q, ..mo.clone() };
            let a = fci_solve(&ao_to_mo(&ao, &mo).unwrap(), Sector::DOUBLET).unwrap();
            let b = fci_solve(&ao_to_mo(&ao, &rotated).unwrap(), Sector::DOUBLET).unwrap();
            prop_assert!((a.eigenvalues - b.eigenvalues).abs().max() < 1e-10);
        }
    }
}
