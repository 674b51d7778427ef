//! The test-function battery: quadratic polynomials and gaussian bumps.
//!
//! Both families are closed under the heat flow, which is what makes the
//! first-moment oracle exact: `T_t phi` with `T_t` the semigroup of
//! `(rho_eps / 2) d^2/dx^2` is convolution with `Normal(0, rho_eps * t)`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::initial::InitialLaw;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `c0 + c1 x + c2 x^2`
    Poly { c0: f64, c1: f64, c2: f64 },
    /// `amplitude * exp(-(x - center)^2 / (2 width^2))`
    GaussBump { amplitude: f64, center: f64, width: f64 },
}

impl TestFunction {
    pub fn identity() -> Self {
        TestFunction::Poly { c0: 0.0, c1: 1.0, c2: 0.0 }
    }

    pub fn square() -> Self {
        TestFunction::Poly { c0: 0.0, c1: 0.0, c2: 1.0 }
    }

    pub fn one() -> Self {
        TestFunction::Poly { c0: 1.0, c1: 0.0, c2: 0.0 }
    }

    /// The standard bump `exp(-x^2 / 2)`.
    pub fn unit_bump() -> Self {
        TestFunction::GaussBump { amplitude: 1.0, center: 0.0, width: 1.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Poly { c0, c1, c2 } => c0 + x * (c1 + x * c2),
            TestFunction::GaussBump { amplitude, center, width } => {
                let z = x - center;
                amplitude * (-z * z / (2.0 * width * width)).exp()
            }
        }
    }

    /// Whether the function is bounded; the dual battery flags polynomial
    /// (unbounded) test functions per run.
    pub fn is_bounded(&self) -> bool {
        match *self {
            TestFunction::Poly { c1, c2, .. } => c1 == 0.0 && c2 == 0.0,
            TestFunction::GaussBump { .. } => true,
        }
    }

    /// Heat flow: returns `T phi` for convolution with `Normal(0, v)`.
    /// Both families are closed under this map.
    pub fn heat(&self, v: f64) -> TestFunction {
        assert!(v >= 0.0, "heat variance must be >= 0");
        match *self {
            TestFunction::Poly { c0, c1, c2 } => TestFunction::Poly { c0: c0 + c2 * v, c1, c2 },
            TestFunction::GaussBump { amplitude, center, width } => {
                let w2 = width * width + v;
                TestFunction::GaussBump {
                    amplitude: amplitude * width / w2.sqrt(),
                    center,
                    width: w2.sqrt(),
                }
            }
        }
    }

    /// Exact integral of the function against a named initial law.
    pub fn integrate_against(&self, mu: &InitialLaw) -> f64 {
        match *self {
            TestFunction::Poly { c0, c1, c2 } => {
                c0 + c1 * mu.mean() + c2 * mu.second_moment()
            }
            TestFunction::GaussBump { amplitude, center, width } => match *mu {
                InitialLaw::Point { x } => self.eval(x),
                InitialLaw::TwoAtoms { x1, p, x2 } => p * self.eval(x1) + (1.0 - p) * self.eval(x2),
                InitialLaw::Normal { mean, sd } => {
                    // gaussian-gaussian convolution evaluated at the mean
                    self.heat(sd * sd).eval(mean)
                }
                InitialLaw::Uniform { a, b } => {
                    let s = width * std::f64::consts::SQRT_2;
                    amplitude * width * (std::f64::consts::PI / 2.0).sqrt()
                        * (erf((b - center) / s) - erf((a - center) / s))
                        / (b - a)
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent quadrature oracle: trapezoid of phi against a density.
    fn quad_against_normal(phi: &TestFunction, mean: f64, sd: f64) -> f64 {
        let n = 400_000;
        let lo = mean - 10.0 * sd;
        let hi = mean + 10.0 * sd;
        let dx = (hi - lo) / n as f64;
        let dens = |x: f64| {
            (-(x - mean) * (x - mean) / (2.0 * sd * sd)).exp()
                / (sd * (2.0 * std::f64::consts::PI).sqrt())
        };
        let mut acc = 0.5 * (phi.eval(lo) * dens(lo) + phi.eval(hi) * dens(hi));
        for k in 1..n {
            let x = lo + k as f64 * dx;
            acc += phi.eval(x) * dens(x);
        }
        acc * dx
    }

    #[test]
    fn heat_flow_of_poly_matches_quadrature() {
        let phi = TestFunction::Poly { c0: 0.3, c1: -1.0, c2: 2.0 };
        let v: f64 = 0.7;
        let flowed = phi.heat(v);
        // T_v phi(x0) = E[phi(x0 + N(0, v))]
        for &x0 in &[0.0, 1.3, -2.0] {
            let oracle = quad_against_normal(&phi, x0, v.sqrt());
            assert!((flowed.eval(x0) - oracle).abs() < 1e-8);
        }
    }

    #[test]
    fn heat_flow_of_bump_matches_quadrature() {
        let phi = TestFunction::GaussBump { amplitude: 0.8, center: 0.5, width: 1.2 };
        let v: f64 = 0.4;
        let flowed = phi.heat(v);
        for &x0 in &[0.0, 1.0, -1.7] {
            let oracle = quad_against_normal(&phi, x0, v.sqrt());
            assert!((flowed.eval(x0) - oracle).abs() < 1e-8);
        }
    }

    #[test]
    fn bump_against_uniform_matches_quadrature() {
        let phi = TestFunction::GaussBump { amplitude: 1.0, center: 0.2, width: 0.9 };
        let mu = InitialLaw::Uniform { a: -1.0, b: 2.0 };
        let n = 300_000;
        let (a, b) = (-1.0, 2.0);
        let dx = (b - a) / n as f64;
        let mut acc = 0.5 * (phi.eval(a) + phi.eval(b));
        for k in 1..n {
            acc += phi.eval(a + k as f64 * dx);
        }
        let oracle = acc * dx / (b - a);
        assert!((phi.integrate_against(&mu) - oracle).abs() < 1e-8);
    }

    #[test]
    fn heat_preserves_mean_function() {
        let phi = TestFunction::identity();
        let flowed = phi.heat(3.0);
        assert_eq!(phi, flowed);
    }
}
