//! Weighted atomic measures produced by the particle simulators.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Atom {
    pub position: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<Atom>,
    pub total_mass: f64,
}

impl EmpiricalMeasure {
    /// Build from particle positions with uniform per-particle mass.
    /// When `compact` is set, bitwise-equal positions are merged into one atom
    /// (the exact-coalescence case, epsilon = 0); otherwise atoms are kept
    /// one per particle.
    pub fn from_particles(positions: &[f64], mass_per_particle: f64, compact: bool) -> Self {
        let total_mass = mass_per_particle * positions.len() as f64;
        let atoms = if compact {
            let mut sorted: Vec<f64> = positions.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut atoms: Vec<Atom> = Vec::new();
            for &p in &sorted {
                match atoms.last_mut() {
                    Some(a) if a.position.to_bits() == p.to_bits() => a.mass += mass_per_particle,
                    _ => atoms.push(Atom {
                        position: p,
                        mass: mass_per_particle,
                    }),
                }
            }
            atoms
        } else {
            positions
                .iter()
                .map(|&position| Atom {
                    position,
                    mass: mass_per_particle,
                })
                .collect()
        };
        EmpiricalMeasure { atoms, total_mass }
    }

    pub fn from_atoms(atoms: Vec<Atom>) -> Self {
        let total_mass = atoms.iter().map(|a| a.mass).sum();
        EmpiricalMeasure { atoms, total_mass }
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Integral of `phi` against the measure.
    pub fn integrate<F: Fn(f64) -> f64>(&self, phi: F) -> f64 {
        self.atoms.iter().map(|a| a.mass * phi(a.position)).sum()
    }

    /// Integral of `phi` against the normalized measure. This is the single
    /// route used for conditioned-moment reporting, so normalizing first and
    /// dividing by the mass afterwards are the same arithmetic.
    pub fn integrate_normalized<F: Fn(f64) -> f64>(&self, phi: F) -> f64 {
        self.integrate(phi) / self.total_mass
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    pub fn second_moment(&self) -> f64 {
        self.integrate(|x| x * x)
    }

    /// Normalize to a probability measure. Empty or zero-mass measures are left untouched.
    pub fn normalized(&self) -> EmpiricalMeasure {
        if self.total_mass <= 0.0 {
            return self.clone();
        }
        let s = 1.0 / self.total_mass;
        EmpiricalMeasure {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    position: a.position,
                    mass: a.mass * s,
                })
                .collect(),
            total_mass: 1.0,
        }
    }
}
