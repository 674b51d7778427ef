//! Named initial distributions for particle systems and density fields.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum InitialLaw {
    Point { x: f64 },
    Uniform { a: f64, b: f64 },
    Normal { mean: f64, sd: f64 },
    TwoAtoms { x1: f64, p: f64, x2: f64 },
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            InitialLaw::Point { x } => x.is_finite(),
            InitialLaw::Uniform { a, b } => a.is_finite() && b.is_finite() && a < b,
            InitialLaw::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && *sd >= 0.0,
            InitialLaw::TwoAtoms { x1, p, x2 } => {
                x1.is_finite() && x2.is_finite() && (0.0..=1.0).contains(p)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid initial law: {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialLaw::Point { x } => x,
            InitialLaw::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            InitialLaw::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            InitialLaw::TwoAtoms { x1, p, x2 } => {
                if rng.random::<f64>() < p {
                    x1
                } else {
                    x2
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            InitialLaw::Point { x } => x,
            InitialLaw::Uniform { a, b } => 0.5 * (a + b),
            InitialLaw::Normal { mean, .. } => mean,
            InitialLaw::TwoAtoms { x1, p, x2 } => p * x1 + (1.0 - p) * x2,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            InitialLaw::Point { x } => x * x,
            InitialLaw::Uniform { a, b } => (a * a + a * b + b * b) / 3.0,
            InitialLaw::Normal { mean, sd } => mean * mean + sd * sd,
            InitialLaw::TwoAtoms { x1, p, x2 } => p * x1 * x1 + (1.0 - p) * x2 * x2,
        }
    }

    pub fn variance(&self) -> f64 {
        self.second_moment() - self.mean().powi(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_mass_sampling_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let law = InitialLaw::Point { x: -2.5 };
        for _ in 0..10 {
            assert_eq!(law.sample(&mut rng), -2.5);
        }
    }

    #[test]
    fn uniform_lln() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let law = InitialLaw::Uniform { a: 0.0, b: 1.0 };
        let n = 10_000;
        let mean = (0..n).map(|_| law.sample(&mut rng)).sum::<f64>() / n as f64;
        let tol = 4.0 / (12.0f64 * n as f64).sqrt();
        assert!((mean - 0.5).abs() < tol);
    }

    #[test]
    fn moments_match_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let law = InitialLaw::TwoAtoms {
            x1: -1.0,
            p: 0.25,
            x2: 2.0,
        };
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = law.sample(&mut rng);
            s1 += x;
            s2 += x * x;
        }
        assert!((s1 / n as f64 - law.mean()).abs() < 0.02);
        assert!((s2 / n as f64 - law.second_moment()).abs() < 0.05);
    }
}
