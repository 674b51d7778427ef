//! Moment duality: the pure-death chain, its exact marginal, and Monte Carlo
//! evaluation of the dual moment identity.
//!
//! The dual functional is never represented symbolically. Each replicate runs
//! the chain forward on [0, t], then realizes the composed semigroup/merge
//! operators by the reversed-chain particle representation: draw M_t points,
//! diffuse each inter-jump segment under the joint environment covariance,
//! duplicate a coordinate at each reversed jump, and evaluate f at the end.

use rand::Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::initial::InitialLaw;
use crate::kernel::{IncrementSampler, KernelSpec};
use crate::stats::mean_stderr;
use crate::testfn::TestFunction;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeathChainTrajectory {
    pub m0: usize,
    pub gamma: f64,
    /// Strictly increasing jump times, at most m0 - 1 of them.
    pub jump_times: Vec<f64>,
    /// Merge pair per jump, 0-based `(i, j)` with `i < j < level-before-jump`.
    pub merge_pairs: Vec<(usize, usize)>,
}

impl DeathChainTrajectory {
    /// Level of the chain at time `t` (right-continuous step function).
    pub fn level_at(&self, t: f64) -> usize {
        self.m0 - self.jump_times.iter().filter(|&&tau| tau <= t).count()
    }
}

/// Run the death chain from level `m0` until absorption at level 1 or
/// `horizon`, whichever comes first. Holding rate at level l is
/// `gamma * l * (l - 1) / 2`; the merged pair is uniform among C(l, 2).
pub fn simulate_death_chain<R: Rng + ?Sized>(
    m0: usize,
    gamma: f64,
    horizon: f64,
    rng: &mut R,
) -> DeathChainTrajectory {
    let mut jump_times = Vec::new();
    let mut merge_pairs = Vec::new();
    let mut t = 0.0;
    let mut level = m0;
    while level >= 2 && gamma > 0.0 {
        let rate = gamma * (level * (level - 1)) as f64 / 2.0;
        t += rng.sample(Exp::new(rate).expect("positive rate"));
        if t > horizon {
            break;
        }
        let i = rng.random_range(0..level);
        let mut j = rng.random_range(0..level - 1);
        if j >= i {
            j += 1;
        }
        jump_times.push(t);
        merge_pairs.push((i.min(j), i.max(j)));
        level -= 1;
    }
    DeathChainTrajectory {
        m0,
        gamma,
        jump_times,
        merge_pairs,
    }
}

/// Exact marginal law of the chain level at time `t`, as a probability vector
/// indexed by level - 1 over {1, ..., m0}.
///
/// Computed by uniformization: p(t) = sum_k Poisson(Lambda t; k) * e_{m0} P^k
/// with Lambda the largest death rate. All terms are nonnegative, so the sum
/// is stable for any m0 and t, unlike the explicit eigenexpansion whose
/// alternating terms cancel catastrophically once m0 is large.
pub fn death_chain_marginal(m0: usize, gamma: f64, t: f64) -> Vec<f64> {
    assert!(m0 >= 1 && gamma >= 0.0 && t >= 0.0);
    let mut out = vec![0.0; m0];
    let rates: Vec<f64> = (1..=m0)
        .map(|l| gamma * (l * (l - 1)) as f64 / 2.0)
        .collect();
    let big = rates[m0 - 1];
    let a = big * t;
    if a == 0.0 {
        out[m0 - 1] = 1.0;
        return out;
    }
    let mut v = vec![0.0; m0];
    v[m0 - 1] = 1.0;
    let mut cum = 0.0;
    let mut k = 0usize;
    loop {
        let w = (-a + k as f64 * a.ln() - ln_gamma(k as f64 + 1.0)).exp();
        for (o, &p) in out.iter_mut().zip(&v) {
            *o += w * p;
        }
        cum += w;
        if (cum >= 1.0 - 1e-14 && k as f64 >= a) || k > 1_000_000 {
            break;
        }
        // v <- v P for the uniformized jump matrix
        let mut nv = vec![0.0; m0];
        for l in (1..=m0).rev() {
            let p = v[l - 1];
            if p == 0.0 {
                continue;
            }
            let q = rates[l - 1] / big;
            nv[l - 1] += p * (1.0 - q);
            if l >= 2 {
                nv[l - 2] += p * q;
            }
        }
        v = nv;
        k += 1;
    }
    // remaining Poisson tail: the level vector has essentially converged, so
    // assigning the tail mass to the current v keeps the sum at exactly 1
    let tail = 1.0 - cum;
    if tail > 0.0 {
        for (o, &p) in out.iter_mut().zip(&v) {
            *o += tail * p;
        }
    }
    out
}

/// Advance a point set jointly for duration `d` with Euler substeps of at
/// most `dt_max` under the environment covariance.
fn diffuse<R: Rng + ?Sized>(
    sampler: &mut IncrementSampler,
    points: &mut [f64],
    d: f64,
    dt_max: f64,
    rng: &mut R,
    buf: &mut Vec<f64>,
) -> Result<()> {
    if d <= 0.0 {
        return Ok(());
    }
    let n = (d / dt_max).ceil().max(1.0) as usize;
    let dt = d / n as f64;
    for _ in 0..n {
        sampler.sample_into(points, dt, rng, buf)?;
        for (p, inc) in points.iter_mut().zip(buf.iter()) {
            *p += inc;
        }
    }
    Ok(())
}

/// Realize a reversed merge: from l-1 points build l points where positions
/// `i` and `j` both receive the last point and the rest fill in order.
fn duplicate(points: &[f64], i: usize, j: usize) -> Vec<f64> {
    let l = points.len() + 1;
    debug_assert!(i < j && j < l);
    let last = points[points.len() - 1];
    let mut rest = points[..points.len() - 1].iter();
    (0..l)
        .map(|pos| {
            if pos == i || pos == j {
                last
            } else {
                *rest.next().unwrap()
            }
        })
        .collect()
}

/// Monte Carlo estimate of the dual expectation E[<mu^{M_t}, F_t>] for an
/// m-variable function f. Returns (estimate, stderr).
///
/// Replicates whose f-evaluation is non-finite are discarded and counted;
/// more than 1% discards fails the run.
#[allow(clippy::too_many_arguments)]
pub fn dual_moment_estimate<R, F>(
    mu: &InitialLaw,
    f: F,
    m: usize,
    t: f64,
    kernel: &KernelSpec,
    gamma: f64,
    n_reps: usize,
    dt_max: f64,
    rng: &mut R,
) -> Result<(f64, f64)>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    if m < 1 || n_reps == 0 || !(t >= 0.0) || !(dt_max > 0.0) {
        return Err(Error::InvalidArgument(
            "dual estimate needs m >= 1, n_reps >= 1, t >= 0, dt_max > 0".into(),
        ));
    }
    kernel.validate()?;
    mu.validate()?;
    let mut sampler = IncrementSampler::new(kernel);
    let mut buf = Vec::new();
    let mut vals = Vec::with_capacity(n_reps);
    let mut discarded = 0usize;
    for _ in 0..n_reps {
        let chain = simulate_death_chain(m, gamma, t, rng);
        let k = chain.jump_times.len();
        let mut points: Vec<f64> = (0..m - k).map(|_| mu.sample(rng)).collect();
        // reversed traversal: segment [tau_K, t], then each jump, ending with [0, tau_1]
        let mut upper = t;
        for idx in (0..k).rev() {
            let tau = chain.jump_times[idx];
            diffuse(&mut sampler, &mut points, upper - tau, dt_max, rng, &mut buf)?;
            let (i, j) = chain.merge_pairs[idx];
            points = duplicate(&points, i, j);
            upper = tau;
        }
        diffuse(&mut sampler, &mut points, upper, dt_max, rng, &mut buf)?;
        let y = f(&points);
        if y.is_finite() {
            vals.push(y);
        } else {
            discarded += 1;
        }
    }
    if discarded * 100 > n_reps {
        return Err(Error::TooManyDiscards {
            discarded,
            total: n_reps,
        });
    }
    if vals.is_empty() {
        return Err(Error::Numeric("all replicates discarded".into()));
    }
    Ok(mean_stderr(&vals))
}

/// Exact first moment E<Z(t), phi> = <mu, T_t phi>: phi flowed by the heat
/// semigroup of (rho_eps / 2) d^2/dx^2 and integrated against mu in closed
/// form.
pub fn first_moment_exact(
    mu: &InitialLaw,
    phi: &TestFunction,
    t: f64,
    kernel: &KernelSpec,
) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument("t must be >= 0".into()));
    }
    kernel.validate()?;
    mu.validate()?;
    Ok(phi.heat(kernel.rho_eps() * t).integrate_against(mu))
}

/// Monte Carlo of the two-particle moment formula
/// E[<Z,phi><Z,psi>] = e^{-gamma t} <mu^2, T_t^2 phi psi>
///                   + int_0^t gamma e^{-gamma s} <mu T_{t-s}^1, Psi_12(T_s^2 phi psi)> ds
/// by drawing the merge time s ~ Exp(gamma): s >= t gives the un-merged pair
/// term, s < t moves a single particle for t - s (exact Gaussian step, the
/// one-particle semigroup is an honest heat flow), duplicates it, and runs
/// the correlated pair for the remaining s.
#[allow(clippy::too_many_arguments)]
pub fn second_moment_dual<R: Rng + ?Sized>(
    mu: &InitialLaw,
    phi: &TestFunction,
    psi: &TestFunction,
    t: f64,
    kernel: &KernelSpec,
    gamma: f64,
    n_reps: usize,
    dt_max: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n_reps == 0 || !(t >= 0.0) || !(dt_max > 0.0) || !(gamma > 0.0) {
        return Err(Error::InvalidArgument(
            "second moment dual needs n_reps >= 1, t >= 0, dt_max > 0, gamma > 0".into(),
        ));
    }
    kernel.validate()?;
    mu.validate()?;
    let rho_eps = kernel.rho_eps();
    let mut sampler = IncrementSampler::new(kernel);
    let mut buf = Vec::new();
    let mut vals = Vec::with_capacity(n_reps);
    let mut discarded = 0usize;
    for _ in 0..n_reps {
        let s = rng.sample(Exp::new(gamma).expect("positive gamma"));
        let mut pair;
        if s >= t {
            pair = vec![mu.sample(rng), mu.sample(rng)];
            diffuse(&mut sampler, &mut pair, t, dt_max, rng, &mut buf)?;
        } else {
            let sd = (rho_eps * (t - s)).sqrt();
            let z = mu.sample(rng) + sd * rng.sample::<f64, _>(StandardNormal);
            pair = vec![z, z];
            diffuse(&mut sampler, &mut pair, s, dt_max, rng, &mut buf)?;
        }
        let y = phi.eval(pair[0]) * psi.eval(pair[1]);
        if y.is_finite() {
            vals.push(y);
        } else {
            discarded += 1;
        }
    }
    if discarded * 100 > n_reps {
        return Err(Error::TooManyDiscards {
            discarded,
            total: n_reps,
        });
    }
    Ok(mean_stderr(&vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::SQRT_PI;
    use crate::stats::{ci95_overlap, tv_distance};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn level_one_chain_never_jumps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = simulate_death_chain(1, 1.0, 100.0, &mut rng);
        assert!(c.jump_times.is_empty());
        assert_eq!(c.level_at(50.0), 1);
    }

    #[test]
    fn chain_invariants_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let c = simulate_death_chain(10, 2.0, 0.8, &mut rng);
            assert!(c.jump_times.len() <= 9);
            assert!(c.jump_times.windows(2).all(|w| w[0] < w[1]));
            for (k, &(i, j)) in c.merge_pairs.iter().enumerate() {
                let pre_level = 10 - k;
                assert!(i < j && j < pre_level);
            }
        }
    }

    #[test]
    fn two_level_jump_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = 0.7;
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| simulate_death_chain(2, 1.0, t, &mut rng).level_at(t) == 1)
            .count();
        let p = hits as f64 / n as f64;
        let target = 1.0 - (-t as f64).exp();
        let se = (target * (1.0 - target) / n as f64).sqrt();
        assert!((p - target).abs() < 4.0 * se);
    }

    #[test]
    fn mean_absorption_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        let times: Vec<f64> = (0..n)
            .map(|_| *simulate_death_chain(32, 1.0, 1e6, &mut rng).jump_times.last().unwrap())
            .collect();
        let (mean, se) = mean_stderr(&times);
        let target = 2.0 * (1.0 - 1.0 / 32.0);
        assert!((mean - target).abs() < 4.0 * se, "mean {mean}, target {target}");
    }

    #[test]
    fn marginal_at_zero_is_indicator() {
        let p = death_chain_marginal(5, 1.0, 0.0);
        assert_eq!(p, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn marginal_closed_forms() {
        for &t in &[0.1, 0.5, 2.0] {
            let p2 = death_chain_marginal(2, 1.0, t);
            assert!((p2[0] - (1.0 - (-t as f64).exp())).abs() < 1e-12);
            let p3 = death_chain_marginal(3, 1.0, t);
            let target = 1.5 * ((-t as f64).exp() - (-3.0 * t as f64).exp());
            assert!((p3[1] - target).abs() < 1e-10, "t={t}: {} vs {target}", p3[1]);
        }
    }

    #[test]
    fn marginal_sums_to_one() {
        for &(m0, t) in &[(2usize, 0.3), (16, 0.25), (64, 0.25), (64, 2.0)] {
            let p = death_chain_marginal(m0, 1.0, t);
            let s: f64 = p.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "m0={m0} t={t}: sum {s}");
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn marginal_matches_matrix_exponential_oracle() {
        // independent oracle: scaling-and-squaring exponential of the
        // bidiagonal generator
        for &(m0, gamma, t) in &[(8usize, 1.0, 0.5), (64, 1.0, 0.25), (20, 3.0, 0.1)] {
            let mut q = DMatrix::<f64>::zeros(m0, m0);
            for l in 2..=m0 {
                let rate = gamma * (l * (l - 1)) as f64 / 2.0;
                q[(l - 1, l - 1)] = -rate;
                q[(l - 1, l - 2)] = rate;
            }
            let expm = (q.transpose() * t).exp();
            let p = death_chain_marginal(m0, gamma, t);
            for l in 0..m0 {
                assert!(
                    (p[l] - expm[(l, m0 - 1)]).abs() < 1e-10,
                    "m0={m0} level {}: {} vs {}",
                    l + 1,
                    p[l],
                    expm[(l, m0 - 1)]
                );
            }
        }
    }

    #[test]
    fn marginal_matches_simulation_in_tv() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m0, gamma, t) = (6usize, 1.0, 0.5);
        let n = 10_000;
        let mut counts = vec![0.0; m0];
        for _ in 0..n {
            counts[simulate_death_chain(m0, gamma, t, &mut rng).level_at(t) - 1] += 1.0;
        }
        for c in counts.iter_mut() {
            *c /= n as f64;
        }
        let exact = death_chain_marginal(m0, gamma, t);
        assert!(tv_distance(&counts, &exact) < 0.03);
    }

    #[test]
    fn first_moment_exact_examples() {
        let kernel = KernelSpec::gaussian(1.0, 1.0, 0.5);
        let mu = InitialLaw::Normal { mean: 0.7, sd: 0.3 };
        // heat flow preserves the mean
        let v = first_moment_exact(&mu, &TestFunction::identity(), 3.0, &kernel).unwrap();
        assert!((v - 0.7).abs() < 1e-14);
        // second moment from a point mass grows at rate rho_eps
        let v2 = first_moment_exact(
            &InitialLaw::Point { x: 0.0 },
            &TestFunction::square(),
            0.4,
            &kernel,
        )
        .unwrap();
        assert!((v2 - (0.25 + SQRT_PI) * 0.4).abs() < 1e-12);
        // t = 0 is plain integration
        let phi = TestFunction::unit_bump();
        let v0 = first_moment_exact(&mu, &phi, 0.0, &kernel).unwrap();
        assert!((v0 - phi.integrate_against(&mu)).abs() < 1e-14);
    }

    #[test]
    fn dual_single_particle_matches_exact_first_moment() {
        let kernel = KernelSpec::gaussian(1.0, 1.0, 0.5);
        let mu = InitialLaw::Point { x: 0.0 };
        let phi = TestFunction::unit_bump();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (est, se) = dual_moment_estimate(
            &mu,
            |x| phi.eval(x[0]),
            1,
            0.25,
            &kernel,
            1.0,
            4000,
            0.05,
            &mut rng,
        )
        .unwrap();
        let exact = first_moment_exact(&mu, &phi, 0.25, &kernel).unwrap();
        assert!((est - exact).abs() < 3.0 * se, "{est} vs {exact} (se {se})");
    }

    #[test]
    fn dual_at_time_zero_is_iid_sampling() {
        let kernel = KernelSpec::gaussian(1.0, 1.0, 0.5);
        let mu = InitialLaw::Normal { mean: 0.0, sd: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (est, se) = dual_moment_estimate(
            &mu,
            |x| x[0] * x[1],
            2,
            0.0,
            &kernel,
            1.0,
            20_000,
            0.05,
            &mut rng,
        )
        .unwrap();
        // independent coordinates: E[X1 X2] = mean^2 = 0
        assert!(est.abs() < 4.0 * se);
    }

    #[test]
    fn dual_gamma_zero_is_correlated_heat_flow() {
        let kernel = KernelSpec::gaussian(1.0, 1.0, 0.0);
        let mu = InitialLaw::Point { x: 0.0 };
        let t = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (est, se) = dual_moment_estimate(
            &mu,
            |x| x[0] * x[1],
            2,
            t,
            &kernel,
            0.0,
            8000,
            0.02,
            &mut rng,
        )
        .unwrap();
        let target = SQRT_PI * t; // rho(0) * t: both start coincident
        assert!((est - target).abs() < 3.0 * se, "{est} vs {target} (se {se})");
    }

    #[test]
    fn duality_against_forward_lookdown() {
        use crate::initial::InitialLaw;
        use crate::lookdown::{simulate, ResamplingModel, SimulationConfig};
        let kernel = KernelSpec::gaussian(1.0, 1.0, 0.5);
        let mu = InitialLaw::Point { x: 0.0 };
        let phi = TestFunction::unit_bump();
        let t = 0.25;
        // forward: E<Z(t)^2, phi x phi> from the lookdown system
        let cfg = SimulationConfig {
            m: 64,
            gamma: 1.0,
            model: ResamplingModel::Lookdown,
            horizon: t,
            dt_max: 0.01,
            record_times: vec![t],
            initial: mu,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fwd: Vec<f64> = (0..200)
            .map(|_| {
                let tr = simulate(&kernel, &cfg, &mut rng).unwrap();
                let v = tr.records[0].measure.integrate(|x| phi.eval(x));
                v * v
            })
            .collect();
        let forward = mean_stderr(&fwd);
        let dual = dual_moment_estimate(
            &mu,
            |x| phi.eval(x[0]) * phi.eval(x[1]),
            2,
            t,
            &kernel,
            1.0,
            2000,
            0.01,
            &mut rng,
        )
        .unwrap();
        assert!(ci95_overlap(forward, dual), "{forward:?} vs {dual:?}");
    }

    #[test]
    fn second_moment_dual_trivials() {
        let kernel = KernelSpec::gaussian(1.0, 1.0, 0.5);
        let mu = InitialLaw::Normal { mean: 0.4, sd: 0.5 };
        let one = TestFunction::one();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        // phi = psi = 1: every replicate is exactly 1
        let (est, se) =
            second_moment_dual(&mu, &one, &one, 0.8, &kernel, 1.0, 500, 0.05, &mut rng).unwrap();
        assert_eq!(est, 1.0);
        assert_eq!(se, 0.0);
        // t = 0: product of independent first moments
        let phi = TestFunction::unit_bump();
        let (est0, se0) =
            second_moment_dual(&mu, &phi, &phi, 0.0, &kernel, 1.0, 20_000, 0.05, &mut rng).unwrap();
        let target = phi.integrate_against(&mu).powi(2);
        assert!((est0 - target).abs() < 4.0 * se0.max(1e-6));
    }

    #[test]
    fn second_moment_dual_agrees_with_dual_estimate() {
        let kernel = KernelSpec::gaussian(1.0, 1.0, 0.5);
        let mu = InitialLaw::Point { x: 0.0 };
        let phi = TestFunction::unit_bump();
        let t = 0.25;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = second_moment_dual(&mu, &phi, &phi, t, &kernel, 1.0, 4000, 0.01, &mut rng).unwrap();
        let b = dual_moment_estimate(
            &mu,
            |x| phi.eval(x[0]) * phi.eval(x[1]),
            2,
            t,
            &kernel,
            1.0,
            4000,
            0.01,
            &mut rng,
        )
        .unwrap();
        assert!(ci95_overlap(a, b), "{a:?} vs {b:?}");
    }

    #[test]
    fn stderr_scales_with_reps() {
        let kernel = KernelSpec::gaussian(1.0, 1.0, 0.5);
        let mu = InitialLaw::Point { x: 0.0 };
        let phi = TestFunction::unit_bump();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut ses = Vec::new();
        for &n in &[1000usize, 4000, 16_000] {
            let (_, se) = dual_moment_estimate(
                &mu,
                |x| phi.eval(x[0]) * phi.eval(x[1]),
                2,
                0.1,
                &kernel,
                1.0,
                n,
                0.02,
                &mut rng,
            )
            .unwrap();
            ses.push(se);
        }
        // each 4x in reps should halve the stderr, up to noise
        assert!(ses[1] / ses[0] > 0.3 && ses[1] / ses[0] < 0.7, "{ses:?}");
        assert!(ses[2] / ses[1] > 0.3 && ses[2] / ses[1] < 0.7, "{ses:?}");
    }

    #[test]
    fn discard_accounting_rejects_bad_functions() {
        let kernel = KernelSpec::gaussian(1.0, 1.0, 0.5);
        let mu = InitialLaw::Point { x: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let err = dual_moment_estimate(
            &mu,
            |_| f64::NAN,
            2,
            0.1,
            &kernel,
            1.0,
            200,
            0.05,
            &mut rng,
        );
        assert!(matches!(err, Err(Error::TooManyDiscards { .. })));
    }
}
