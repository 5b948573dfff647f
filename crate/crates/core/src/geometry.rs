//! Nuclear configurations of H4+: the tetrahedral reference, its distortions
//! along the (dx2, dy3, dz1) coordinates, and scan grids.

use std::fmt::Write as _;
use std::ops::Add;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// 1 Å in Bohr.
pub const ANGSTROM_TO_BOHR: f64 = 1.8897259886;

/// Tetrahedral H4+ (FCI/STO-3G optimized), Å, atoms H1..H4.
const TD_COORDS: [[f64; 3]; 4] = [
    [0.000000000000, 0.000000000000, 1.142278716718],
    [0.807713026596, 0.000000000000, 0.000000000000],
    [-0.403856513298, 0.699500000000, 0.000000000000],
    [-0.403856513298, -0.699500000000, 0.000000000000],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Reference,
    Distorted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub label: String,
    /// Position in Å.
    pub position: [f64; 3],
}

impl Atom {
    pub fn hydrogen(position: [f64; 3]) -> Self {
        Self {
            label: "H".to_string(),
            position,
        }
    }

    pub fn position_bohr(&self) -> Vector3<f64> {
        Vector3::from(self.position) * ANGSTROM_TO_BOHR
    }

    /// Nuclear charge. Only hydrogen is supported by the bundled basis.
    pub fn charge(&self) -> f64 {
        match self.label.as_str() {
            "H" => 1.0,
            "He" => 2.0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub atoms: Vec<Atom>,
    pub provenance: Provenance,
}

/// Shifts (Å) applied to the tetrahedral reference: atom 2 along x,
/// atom 3 along y, atom 1 along z.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    pub dx2: f64,
    pub dy3: f64,
    pub dz1: f64,
}

impl Distortion {
    pub fn new(dx2: f64, dy3: f64, dz1: f64) -> Self {
        Self { dx2, dy3, dz1 }
    }

    pub fn is_finite(&self) -> bool {
        self.dx2.is_finite() && self.dy3.is_finite() && self.dz1.is_finite()
    }
}

impl Add for Distortion {
    type Output = Distortion;

    fn add(self, rhs: Distortion) -> Distortion {
        Distortion::new(self.dx2 + rhs.dx2, self.dy3 + rhs.dy3, self.dz1 + rhs.dz1)
    }
}

pub fn td_reference() -> Geometry {
    Geometry {
        atoms: TD_COORDS.iter().map(|&p| Atom::hydrogen(p)).collect(),
        provenance: Provenance::Reference,
    }
}

pub fn distort(base: &Geometry, d: Distortion) -> Result<Geometry> {
    if base.atoms.len() != 4 {
        return Err(Error::Contract(format!(
            "distortion needs 4 atoms, got {}",
            base.atoms.len()
        )));
    }
    if !d.is_finite() {
        return Err(Error::Domain("non-finite distortion".into()));
    }
    let mut g = base.clone();
    g.atoms[0].position[2] += d.dz1;
    g.atoms[1].position[0] += d.dx2;
    g.atoms[2].position[1] += d.dy3;
    g.provenance = Provenance::Distorted;
    Ok(g)
}

/// Convenience: the tetrahedral reference distorted by `d`.
pub fn h4_at(d: Distortion) -> Geometry {
    distort(&td_reference(), d).expect("reference geometry has four atoms")
}

impl Geometry {
    pub fn from_atoms(atoms: Vec<Atom>) -> Result<Self> {
        let g = Self {
            atoms,
            provenance: Provenance::Distorted,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::Contract("geometry has no atoms".into()));
        }
        if self
            .atoms
            .iter()
            .any(|a| a.position.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Domain("non-finite coordinate".into()));
        }
        Ok(())
    }

    /// Checks the H4+ invariants: four hydrogens with finite coordinates.
    pub fn validate_h4(&self) -> Result<()> {
        self.validate()?;
        if self.atoms.len() != 4 || self.atoms.iter().any(|a| a.label != "H") {
            return Err(Error::Contract("expected four H atoms".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn positions_bohr(&self) -> Vec<Vector3<f64>> {
        self.atoms.iter().map(Atom::position_bohr).collect()
    }

    pub fn translated(&self, shift: [f64; 3]) -> Geometry {
        let mut g = self.clone();
        for a in &mut g.atoms {
            for k in 0..3 {
                a.position[k] += shift[k];
            }
        }
        g
    }

    /// Applies a 3x3 rotation (row-major) to all positions.
    pub fn rotated(&self, rot: &nalgebra::Matrix3<f64>) -> Geometry {
        let mut g = self.clone();
        for a in &mut g.atoms {
            let p = rot * Vector3::from(a.position);
            a.position = [p.x, p.y, p.z];
        }
        g
    }

    /// XYZ text: atom count, comment line, then `label x y z` in Å.
    pub fn to_xyz(&self, comment: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.atoms.len());
        let _ = writeln!(out, "{}", comment.replace('\n', " "));
        for a in &self.atoms {
            let _ = writeln!(
                out,
                "{} {:.12} {:.12} {:.12}",
                a.label, a.position[0], a.position[1], a.position[2]
            );
        }
        out
    }

    pub fn from_xyz(text: &str) -> Result<Geometry> {
        let mut lines = text.lines();
        let count: usize = lines
            .next()
            .ok_or_else(|| Error::Parse("empty XYZ input".into()))?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("atom count: {e}")))?;
        lines.next();
        let mut atoms = Vec::with_capacity(count);
        for line in lines.filter(|l| !l.trim().is_empty()).take(count) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 4 {
                return Err(Error::Parse(format!("bad XYZ line: {line:?}")));
            }
            let mut position = [0.0; 3];
            for k in 0..3 {
                position[k] = fields[k + 1]
                    .parse()
                    .map_err(|e| Error::Parse(format!("coordinate {:?}: {e}", fields[k + 1])))?;
            }
            atoms.push(Atom {
                label: fields[0].to_string(),
                position,
            });
        }
        if atoms.len() != count {
            return Err(Error::Parse(format!(
                "expected {count} atoms, found {}",
                atoms.len()
            )));
        }
        Geometry::from_atoms(atoms)
    }

    /// Short content hash of the coordinates, used to tag exported MO files.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for a in &self.atoms {
            hasher.update(a.label.as_bytes());
            for x in a.position {
                hasher.update(x.to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Uniform grid from `start` to `stop` inclusive. Points are computed as
/// `start + i*step` and rounded to 1e-10 Å so repeated runs agree bitwise.
pub fn uniform_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::Domain(format!(
            "invalid grid [{start}, {stop}] step {step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| ((start + i as f64 * step) * 1e10).round() / 1e10)
        .collect())
}

/// The default Δz1 scan at fixed Δx2 = 0.1 Å and Δy3 = 0.05 Å.
pub fn default_scan() -> Vec<Distortion> {
    uniform_grid(-0.30, 0.30, 0.01)
        .expect("static grid")
        .into_iter()
        .map(|dz1| Distortion::new(0.1, 0.05, dz1))
        .collect()
}

/// Reference distortion for diabatic orbitals (a Cs geometry).
pub fn default_diabatic_reference() -> Distortion {
    Distortion::new(0.1, 0.0, -0.1)
}
