//! Closed-form integrals over contracted s-type Gaussians.
//!
//! All primitives are normalized s functions `(2a/π)^{3/4} exp(-a r²)`; the
//! contraction coefficients refer to normalized primitives and every shell
//! is renormalized on construction so that its self-overlap is one.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Vector3};

use crate::geometry::{Geometry, ANGSTROM_TO_BOHR};
use crate::{Error, Result};

const STO3G_HYDROGEN: &str = include_str!("../data/sto-3g-h.basis");

/// Below this argument the Boys function uses its Taylor series.
const BOYS_SERIES_SWITCH: f64 = 1e-7;

/// F0(x) = ∫₀¹ exp(-x u²) du.
pub fn boys_f0(x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!("Boys function argument {x}")));
    }
    Ok(f0(x))
}

#[inline]
fn f0(x: f64) -> f64 {
    if x < BOYS_SERIES_SWITCH {
        1.0 - x / 3.0 + x * x / 10.0
    } else {
        let s = x.sqrt();
        0.5 * (PI / x).sqrt() * libm::erf(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    /// Gaussian exponent, 1/Bohr².
    pub exponent: f64,
    /// Coefficient multiplying the normalized primitive.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisShell {
    /// Center in Bohr.
    pub center: Vector3<f64>,
    pub primitives: Vec<Primitive>,
}

impl BasisShell {
    /// Builds a normalized s shell. Fails on an empty contraction or on a
    /// non-positive exponent.
    pub fn new(center: Vector3<f64>, primitives: Vec<Primitive>) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::Contract("shell without primitives".into()));
        }
        if primitives.iter().any(|p| !(p.exponent > 0.0)) {
            return Err(Error::Domain("non-positive Gaussian exponent".into()));
        }
        let mut shell = Self { center, primitives };
        let norm = overlap_shells(&shell, &shell).sqrt();
        for p in &mut shell.primitives {
            p.coefficient /= norm;
        }
        Ok(shell)
    }
}

/// Per-element contraction template, loaded from the text basis format.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRule {
    pub shells: Vec<Vec<Primitive>>,
}

impl BasisRule {
    /// Parses `exponent coefficient` lines; blank lines separate shells and
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut shells = Vec::new();
        let mut current = Vec::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                if raw.trim().is_empty() && !current.is_empty() {
                    shells.push(std::mem::take(&mut current));
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::Parse(format!("basis line {raw:?}")));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("basis number {s:?}: {e}")))
            };
            current.push(Primitive {
                exponent: parse(fields[0])?,
                coefficient: parse(fields[1])?,
            });
        }
        if !current.is_empty() {
            shells.push(current);
        }
        if shells.is_empty() {
            return Err(Error::Parse("basis file defines no shells".into()));
        }
        Ok(Self { shells })
    }

    pub fn sto3g_hydrogen() -> Self {
        Self::parse(STO3G_HYDROGEN).expect("bundled basis file is valid")
    }

    pub fn shells_for(&self, geometry: &Geometry) -> Result<Vec<BasisShell>> {
        let mut out = Vec::with_capacity(geometry.len() * self.shells.len());
        for center in geometry.positions_bohr() {
            for prims in &self.shells {
                out.push(BasisShell::new(center, prims.clone())?);
            }
        }
        Ok(out)
    }
}

/// Dense two-electron tensor (pq|rs) in chemists' notation.
#[derive(Debug, Clone, PartialEq)]
pub struct Eri {
    n: usize,
    data: Vec<f64>,
}

impl Eri {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn offset(&self, p: usize, q: usize, r: usize, s: usize) -> usize {
        ((p * self.n + q) * self.n + r) * self.n + s
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.data[self.offset(p, q, r, s)]
    }

    #[inline]
    pub fn set(&mut self, p: usize, q: usize, r: usize, s: usize, v: f64) {
        let o = self.offset(p, q, r, s);
        self.data[o] = v;
    }

    /// Writes `v` into all eight permutationally equivalent slots.
    pub fn set_symmetric(&mut self, p: usize, q: usize, r: usize, s: usize, v: f64) {
        for (a, b, c, d) in [
            (p, q, r, s),
            (q, p, r, s),
            (p, q, s, r),
            (q, p, s, r),
            (r, s, p, q),
            (s, r, p, q),
            (r, s, q, p),
            (s, r, q, p),
        ] {
            self.set(a, b, c, d, v);
        }
    }

    /// Largest deviation from 8-fold permutational symmetry.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        let v = self.get(p, q, r, s);
                        for w in [
                            self.get(q, p, r, s),
                            self.get(p, q, s, r),
                            self.get(r, s, p, q),
                            self.get(s, r, q, p),
                        ] {
                            worst = worst.max((v - w).abs());
                        }
                    }
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct AoIntegrals {
    pub s: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub eri: Eri,
    pub e_nuc: f64,
}

impl AoIntegrals {
    pub fn nbf(&self) -> usize {
        self.s.nrows()
    }

    /// Core Hamiltonian T + V.
    pub fn core_hamiltonian(&self) -> DMatrix<f64> {
        &self.t + &self.v
    }
}

#[inline]
fn gaussian_product(a: f64, ra: &Vector3<f64>, b: f64, rb: &Vector3<f64>) -> (f64, Vector3<f64>, f64) {
    let p = a + b;
    let center = (ra * a + rb * b) / p;
    let k = (-a * b / p * (ra - rb).norm_squared()).exp();
    (p, center, k)
}

#[inline]
fn prim_norm(a: f64) -> f64 {
    (2.0 * a / PI).powf(0.75)
}

fn overlap_shells(x: &BasisShell, y: &BasisShell) -> f64 {
    let mut sum = 0.0;
    for pa in &x.primitives {
        for pb in &y.primitives {
            let (p, _, k) = gaussian_product(pa.exponent, &x.center, pb.exponent, &y.center);
            sum += pa.coefficient
                * pb.coefficient
                * prim_norm(pa.exponent)
                * prim_norm(pb.exponent)
                * (PI / p).powf(1.5)
                * k;
        }
    }
    sum
}

fn kinetic_shells(x: &BasisShell, y: &BasisShell) -> f64 {
    let r2 = (x.center - y.center).norm_squared();
    let mut sum = 0.0;
    for pa in &x.primitives {
        for pb in &y.primitives {
            let (a, b) = (pa.exponent, pb.exponent);
            let p = a + b;
            let mu = a * b / p;
            let ovl = (PI / p).powf(1.5) * (-mu * r2).exp();
            sum += pa.coefficient
                * pb.coefficient
                * prim_norm(a)
                * prim_norm(b)
                * mu
                * (3.0 - 2.0 * mu * r2)
                * ovl;
        }
    }
    sum
}

fn nuclear_shells(x: &BasisShell, y: &BasisShell, nuclei: &[(Vector3<f64>, f64)]) -> f64 {
    let mut sum = 0.0;
    for pa in &x.primitives {
        for pb in &y.primitives {
            let (p, center, k) = gaussian_product(pa.exponent, &x.center, pb.exponent, &y.center);
            let pref = pa.coefficient * pb.coefficient * prim_norm(pa.exponent) * prim_norm(pb.exponent);
            for (rc, z) in nuclei {
                sum -= pref * z * 2.0 * PI / p * k * f0(p * (center - rc).norm_squared());
            }
        }
    }
    sum
}

fn eri_shells(a: &BasisShell, b: &BasisShell, c: &BasisShell, d: &BasisShell) -> f64 {
    let mut sum = 0.0;
    for pa in &a.primitives {
        for pb in &b.primitives {
            let (p, rp, kab) = gaussian_product(pa.exponent, &a.center, pb.exponent, &b.center);
            let cab = pa.coefficient * pb.coefficient * prim_norm(pa.exponent) * prim_norm(pb.exponent);
            for pc in &c.primitives {
                for pd in &d.primitives {
                    let (q, rq, kcd) =
                        gaussian_product(pc.exponent, &c.center, pd.exponent, &d.center);
                    let ccd = pc.coefficient
                        * pd.coefficient
                        * prim_norm(pc.exponent)
                        * prim_norm(pd.exponent);
                    let arg = p * q / (p + q) * (rp - rq).norm_squared();
                    sum += cab * ccd * 2.0 * PI.powf(2.5) / (p * q * (p + q).sqrt())
                        * kab
                        * kcd
                        * f0(arg);
                }
            }
        }
    }
    sum
}

fn check_distinct(geometry: &Geometry) -> Result<Vec<Vector3<f64>>> {
    let pos = geometry.positions_bohr();
    for i in 0..pos.len() {
        for j in 0..i {
            if (pos[i] - pos[j]).norm() < 1e-8 {
                return Err(Error::DegenerateGeometry(j + 1, i + 1));
            }
        }
    }
    Ok(pos)
}

/// Σ_{A<B} Z_A Z_B / r_AB in Hartree.
pub fn nuclear_repulsion(geometry: &Geometry) -> Result<f64> {
    let pos = check_distinct(geometry)?;
    let mut e = 0.0;
    for i in 0..pos.len() {
        for j in 0..i {
            e += geometry.atoms[i].charge() * geometry.atoms[j].charge() / (pos[i] - pos[j]).norm();
        }
    }
    Ok(e)
}

pub fn compute_ao_integrals(geometry: &Geometry, shells: &[BasisShell]) -> Result<AoIntegrals> {
    geometry.validate()?;
    let pos = check_distinct(geometry)?;
    for shell in shells {
        if !pos.iter().any(|c| (c - shell.center).norm() < 1e-10) {
            return Err(Error::Contract("basis shell is not centered on an atom".into()));
        }
    }
    let nuclei: Vec<(Vector3<f64>, f64)> = pos
        .iter()
        .zip(&geometry.atoms)
        .map(|(r, a)| (*r, a.charge()))
        .collect();

    let n = shells.len();
    let mut s = DMatrix::zeros(n, n);
    let mut t = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let sij = if i == j { 1.0 } else { overlap_shells(&shells[i], &shells[j]) };
            let tij = kinetic_shells(&shells[i], &shells[j]);
            let vij = nuclear_shells(&shells[i], &shells[j], &nuclei);
            s[(i, j)] = sij;
            s[(j, i)] = sij;
            t[(i, j)] = tij;
            t[(j, i)] = tij;
            v[(i, j)] = vij;
            v[(j, i)] = vij;
        }
    }

    let mut eri = Eri::zeros(n);
    for p in 0..n {
        for q in 0..=p {
            let pq = p * (p + 1) / 2 + q;
            for r in 0..n {
                for u in 0..=r {
                    let ru = r * (r + 1) / 2 + u;
                    if ru > pq {
                        continue;
                    }
                    let val = eri_shells(&shells[p], &shells[q], &shells[r], &shells[u]);
                    eri.set_symmetric(p, q, r, u, val);
                }
            }
        }
    }

    Ok(AoIntegrals {
        s,
        t,
        v,
        eri,
        e_nuc: nuclear_repulsion(geometry)?,
    })
}

/// Convenience: STO-3G integrals for an all-hydrogen geometry.
pub fn sto3g_integrals(geometry: &Geometry) -> Result<AoIntegrals> {
    let shells = BasisRule::sto3g_hydrogen().shells_for(geometry)?;
    compute_ao_integrals(geometry, &shells)
}

/// M_μν = ⟨χ_μ(gA)|χ_ν(gB)⟩ for the same basis rule placed on both geometries.
pub fn cross_ao_overlap(ga: &Geometry, gb: &Geometry, rule: &BasisRule) -> Result<DMatrix<f64>> {
    let sa = rule.shells_for(ga)?;
    let sb = rule.shells_for(gb)?;
    Ok(DMatrix::from_fn(sa.len(), sb.len(), |i, j| {
        overlap_shells(&sa[i], &sb[j])
    }))
}

/// Bohr per Å, re-exported for callers converting distances by hand.
pub const BOHR_PER_ANGSTROM: f64 = ANGSTROM_TO_BOHR;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{h4_at, td_reference, Atom, Distortion};

    fn bohr_atoms(coords: &[[f64; 3]]) -> Geometry {
        Geometry::from_atoms(
            coords
                .iter()
                .map(|c| Atom::hydrogen([c[0] / ANGSTROM_TO_BOHR, c[1] / ANGSTROM_TO_BOHR, c[2] / ANGSTROM_TO_BOHR]))
                .collect(),
        )
        .unwrap()
    }

    /// Trapezoid/Simpson quadrature of the defining integral, independent of erf.
    fn f0_quadrature(x: f64) -> f64 {
        let n = 20_000;
        let h = 1.0 / n as f64;
        let f = |u: f64| (-x * u * u).exp();
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn boys_reference_values() {
        assert_eq!(boys_f0(0.0).unwrap(), 1.0);
        assert!((boys_f0(1.0).unwrap() - 0.746824132812).abs() < 1e-12);
        let asym = 0.5 * (PI / 50.0).sqrt();
        assert!(((boys_f0(50.0).unwrap() - asym) / asym).abs() < 1e-10);
        assert!(boys_f0(-1.0).is_err());
        assert!(boys_f0(f64::NAN).is_err());
        assert!(boys_f0(f64::INFINITY).is_err());
    }

    #[test]
    fn boys_matches_quadrature_and_is_continuous() {
        for &x in &[1e-9, 1e-7, 1e-5, 0.01, 0.3, 2.0, 7.5, 20.0] {
            let q = f0_quadrature(x);
            assert!(((boys_f0(x).unwrap() - q) / q).abs() < 1e-12, "x = {x}");
        }
        let below = f0(BOYS_SERIES_SWITCH * (1.0 - 1e-9));
        let above = f0(BOYS_SERIES_SWITCH * (1.0 + 1e-9));
        assert!((below - above).abs() < 1e-14);
    }

    #[test]
    fn basis_file_parsing() {
        let rule = BasisRule::sto3g_hydrogen();
        assert_eq!(rule.shells.len(), 1);
        assert_eq!(rule.shells[0].len(), 3);
        assert_eq!(rule.shells[0][0].exponent, 3.42525091);
        let two = BasisRule::parse("# two shells\n1.0 1.0\n\n0.5 0.3 # tail\n0.1 0.7\n").unwrap();
        assert_eq!(two.shells.len(), 2);
        assert_eq!(two.shells[1].len(), 2);
        assert!(BasisRule::parse("1.0\n").is_err());
        assert!(BasisRule::parse("# nothing\n").is_err());
    }

    #[test]
    fn shell_validation() {
        let c = Vector3::zeros();
        assert!(BasisShell::new(c, vec![]).is_err());
        assert!(BasisShell::new(c, vec![Primitive { exponent: -1.0, coefficient: 1.0 }]).is_err());
    }

    #[test]
    fn single_hydrogen_atom() {
        // Closed-form evaluation with the standard STO-3G set, renormalized
        // contraction (mpmath, 30 digits): T = 0.760031883567, V = -1.226613733124.
        let g = bohr_atoms(&[[0.0, 0.0, 0.0]]);
        let ao = sto3g_integrals(&g).unwrap();
        assert_eq!(ao.s[(0, 0)], 1.0);
        assert!((ao.t[(0, 0)] - 0.760031883567).abs() < 1e-11);
        assert!((ao.v[(0, 0)] - -1.226613733124).abs() < 1e-11);
        assert_eq!(ao.e_nuc, 0.0);
    }

    #[test]
    fn h2_overlap() {
        let g = bohr_atoms(&[[0.0, 0.0, 0.0], [0.0, 0.0, 1.4]]);
        let ao = sto3g_integrals(&g).unwrap();
        assert!((ao.s[(0, 1)] - 0.6593).abs() < 1e-3);
        // pyscf int1e_ovlp: 0.659318206134864
        assert!((ao.s[(0, 1)] - 0.659318206135).abs() < 1e-9);
        assert!((ao.e_nuc - 1.0 / 1.4).abs() < 1e-15);
    }

    #[test]
    fn nuclear_repulsion_values() {
        let g1 = bohr_atoms(&[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!((nuclear_repulsion(&g1).unwrap() - 1.0).abs() < 1e-15);
        let g2 = bohr_atoms(&[[0.0, 0.0, 0.0], [0.0, 0.0, 2.0]]);
        assert!((nuclear_repulsion(&g2).unwrap() - 0.5).abs() < 1e-15);

        // Hand evaluation of the six Table-1 pair distances.
        let td = td_reference();
        let mut e = 0.0;
        for i in 0..4 {
            for j in 0..i {
                let a = td.atoms[i].position;
                let b = td.atoms[j].position;
                let d2: f64 = (0..3).map(|k| (a[k] - b[k]).powi(2)).sum();
                e += 1.0 / (d2.sqrt() * 1.8897259886);
            }
        }
        assert!((nuclear_repulsion(&td).unwrap() - e).abs() < 1e-13);
        assert!((e - 2.269523583963).abs() < 1e-10);

        let bad = bohr_atoms(&[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert!(matches!(nuclear_repulsion(&bad), Err(Error::DegenerateGeometry(1, 2))));
        assert!(sto3g_integrals(&bad).is_err());
    }

    #[test]
    fn h4_integral_symmetries() {
        let ao = sto3g_integrals(&h4_at(Distortion::new(0.1, 0.05, 0.2))).unwrap();
        let n = ao.nbf();
        for i in 0..n {
            assert!((ao.s[(i, i)] - 1.0).abs() < 1e-12);
        }
        assert_eq!(ao.s, ao.s.transpose());
        assert_eq!(ao.t, ao.t.transpose());
        assert_eq!(ao.v, ao.v.transpose());
        assert_eq!(ao.eri.symmetry_defect(), 0.0);
        let eig = ao.s.clone().symmetric_eigen().eigenvalues;
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn cross_overlap_properties() {
        let rule = BasisRule::sto3g_hydrogen();
        let g = h4_at(Distortion::new(0.1, 0.05, 0.2));
        let ao = sto3g_integrals(&g).unwrap();
        let m = cross_ao_overlap(&g, &g, &rule).unwrap();
        assert!((m - &ao.s).abs().max() < 1e-14);

        let far = g.translated([100.0, 0.0, 0.0]);
        assert!(cross_ao_overlap(&g, &far, &rule).unwrap().abs().max() < 1e-10);

        let td = td_reference();
        let cs = h4_at(Distortion::new(0.1, 0.0, -0.1));
        let m = cross_ao_overlap(&td, &cs, &rule).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(m[(i, i)] > m[(i, j)].abs());
                }
            }
        }
    }

    #[test]
    fn translation_and_rotation_invariance() {
        let g = h4_at(Distortion::new(0.1, 0.05, -0.17));
        let base = sto3g_integrals(&g).unwrap();
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0).into_inner();
        for moved in [g.translated([0.7, -1.3, 2.9]), g.rotated(&rot)] {
            let ao = sto3g_integrals(&moved).unwrap();
            assert!((&ao.s - &base.s).abs().max() < 1e-12);
            assert!((&ao.t - &base.t).abs().max() < 1e-12);
            assert!((&ao.v - &base.v).abs().max() < 1e-12);
            assert!((ao.e_nuc - base.e_nuc).abs() < 1e-12);
            for p in 0..4 {
                for q in 0..4 {
                    for r in 0..4 {
                        for s in 0..4 {
                            assert!((ao.eri.get(p, q, r, s) - base.eri.get(p, q, r, s)).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }
}
