//! Atomicity statistics, the weak-atomic distance bracket, flow
//! order-preservation checks, and the lineage-law test.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dual::death_chain_marginal;
use crate::error::{Error, Result};
use crate::kernel::{IncrementSampler, KernelSpec};
use crate::measure::EmpiricalMeasure;
use crate::stats::tv_distance;

/// Z*(R) = sum of squared atom masses. Expects a compacted measure.
pub fn atom_statistic(mu: &EmpiricalMeasure) -> f64 {
    mu.atoms.iter().map(|a| a.mass * a.mass).sum()
}

/// Default grid for the Phi-profile: 32 log-spaced scales in [1e-3, 1].
pub fn default_eps_grid() -> Vec<f64> {
    let n = 32;
    (0..n)
        .map(|k| {
            let t = k as f64 / (n - 1) as f64;
            1e-3f64.powf(1.0 - t)
        })
        .collect()
}

/// Exact double sum sum_{i,j} m_i m_j Phi(|x_i - x_j| / eps) with
/// Phi(u) = (1 - u)_+, one value per grid scale.
pub fn weak_atomic_profile(mu: &EmpiricalMeasure, eps_grid: &[f64]) -> Vec<f64> {
    eps_grid
        .iter()
        .map(|&eps| {
            let mut acc = 0.0;
            for a in &mu.atoms {
                for b in &mu.atoms {
                    let u = (a.position - b.position).abs() / eps;
                    if u < 1.0 {
                        acc += a.mass * b.mass * (1.0 - u);
                    }
                }
            }
            acc
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomReport {
    pub atom_statistic: f64,
    pub atom_count: usize,
    pub largest_atom: f64,
    pub phi_profile: Vec<f64>,
}

pub fn atom_report(mu: &EmpiricalMeasure, eps_grid: &[f64]) -> AtomReport {
    AtomReport {
        atom_statistic: atom_statistic(mu),
        atom_count: mu.atoms.len(),
        largest_atom: mu.atoms.iter().map(|a| a.mass).fold(0.0, f64::max),
        phi_profile: weak_atomic_profile(mu, eps_grid),
    }
}

fn cdf(atoms: &[(f64, f64)], x: f64) -> f64 {
    atoms
        .iter()
        .take_while(|&&(p, _)| p <= x)
        .map(|&(_, m)| m)
        .sum()
}

fn cdf_left(atoms: &[(f64, f64)], x: f64) -> f64 {
    atoms
        .iter()
        .take_while(|&&(p, _)| p < x)
        .map(|&(_, m)| m)
        .sum()
}

fn sorted_atoms(mu: &EmpiricalMeasure) -> Vec<(f64, f64)> {
    let total = mu.total_mass;
    let mut v: Vec<(f64, f64)> = mu
        .atoms
        .iter()
        .map(|a| (a.position, a.mass / total))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// sup_x [F(x - h) - G(x)] for step CDFs; candidates are the jump points of
/// either side (right value and left limit).
fn shift_gap(f: &[(f64, f64)], g: &[(f64, f64)], h: f64) -> f64 {
    let mut gap = f64::NEG_INFINITY;
    let candidates = f
        .iter()
        .map(|&(p, _)| p + h)
        .chain(g.iter().map(|&(p, _)| p));
    for x in candidates {
        gap = gap.max(cdf(f, x - h) - cdf(g, x));
        gap = gap.max(cdf_left(f, x - h) - cdf_left(g, x));
    }
    gap
}

/// Lévy metric between the normalized CDFs, by bisection on the feasibility
/// condition F(x-h) - h <= G(x) <= F(x+h) + h.
fn levy_metric(f: &[(f64, f64)], g: &[(f64, f64)]) -> f64 {
    let feasible = |h: f64| shift_gap(f, g, h) <= h && shift_gap(g, f, h) <= h;
    if feasible(0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // h = 1 is always feasible for probability measures
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// W1 between normalized atomic measures on the line: integral of |F - G|.
fn wasserstein1(f: &[(f64, f64)], g: &[(f64, f64)]) -> f64 {
    let mut xs: Vec<f64> = f.iter().chain(g.iter()).map(|&(p, _)| p).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut acc = 0.0;
    for w in xs.windows(2) {
        acc += (cdf(f, w[0]) - cdf(g, w[0])).abs() * (w[1] - w[0]);
    }
    acc
}

/// Bracket for the weak-atomic distance: the Phi-profile sup-difference is
/// exact on the grid; the Prohorov term is bracketed below by half the Lévy
/// metric and above by sqrt(W1). Inputs are normalized internally.
pub fn weak_atomic_distance(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    eps_grid: &[f64],
) -> (f64, f64) {
    let pm = weak_atomic_profile(&mu.normalized(), eps_grid);
    let pn = weak_atomic_profile(&nu.normalized(), eps_grid);
    let phi_sup = pm
        .iter()
        .zip(&pn)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let f = sorted_atoms(mu);
    let g = sorted_atoms(nu);
    let lower = phi_sup + 0.5 * levy_metric(&f, &g);
    let upper = phi_sup + wasserstein1(&f, &g).sqrt();
    (lower, upper)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderTestResult {
    pub crossing_count: usize,
    pub trajectory: Vec<Vec<f64>>,
}

/// Evolve sorted points under the pure common noise (epsilon = 0) and count
/// adjacent-order violations at substep boundaries: pairs adjacent in the
/// previous step's order that come out inverted. The continuous flow is
/// order-preserving, so crossings are pure discretization artifacts and their
/// count should fall as dt does.
pub fn order_preservation_test<R: Rng + ?Sized>(
    kernel: &KernelSpec,
    initial_points: &[f64],
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<OrderTestResult> {
    kernel.validate()?;
    if kernel.epsilon != 0.0 {
        return Err(Error::InvalidArgument(
            "order test requires epsilon = 0".into(),
        ));
    }
    if initial_points.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("initial points must be sorted".into()));
    }
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidArgument("need dt > 0, horizon > 0".into()));
    }
    let mut sampler = IncrementSampler::new(kernel);
    let mut pos = initial_points.to_vec();
    let mut buf = Vec::new();
    let mut order: Vec<usize> = (0..pos.len()).collect();
    let mut crossings = 0usize;
    let mut trajectory = vec![pos.clone()];
    let steps = (horizon / dt).round().max(1.0) as usize;
    for _ in 0..steps {
        sampler.sample_into(&pos, dt, rng, &mut buf)?;
        for (p, d) in pos.iter_mut().zip(&buf) {
            *p += d;
        }
        crossings += order
            .windows(2)
            .filter(|w| pos[w[0]] > pos[w[1]])
            .count();
        order.sort_by(|&a, &b| pos[a].total_cmp(&pos[b]));
        trajectory.push(pos.clone());
    }
    Ok(OrderTestResult {
        crossing_count: crossings,
        trajectory,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineageLawResult {
    pub tv_distance: f64,
    pub pass: bool,
    pub sample_size: usize,
}

/// TV distance between the empirical lineage-count distribution of an
/// ensemble and the exact death-chain marginal; passes iff < 0.05 with at
/// least 2000 samples.
pub fn lineage_law_test(counts: &[usize], m: usize, gamma: f64, t: f64) -> Result<LineageLawResult> {
    if counts.iter().any(|&c| c == 0 || c > m) {
        return Err(Error::InvalidArgument(
            "lineage counts must lie in 1..=m".into(),
        ));
    }
    let exact = death_chain_marginal(m, gamma, t);
    let mut empirical = vec![0.0; m];
    for &c in counts {
        empirical[c - 1] += 1.0 / counts.len() as f64;
    }
    let tv = tv_distance(&empirical, &exact);
    Ok(LineageLawResult {
        tv_distance: tv,
        pass: tv < 0.05 && counts.len() >= 2000,
        sample_size: counts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::simulate_death_chain;
    use crate::measure::EmpiricalMeasure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn from_weights(pts: &[(f64, f64)]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_atoms(
            pts.iter()
                .map(|&(p, m)| crate::measure::Atom {
                    position: p,
                    mass: m,
                })
                .collect(),
        )
    }

    #[test]
    fn atom_statistic_examples() {
        assert_eq!(atom_statistic(&from_weights(&[(0.0, 1.0)])), 1.0);
        let m = 8;
        let equal: Vec<(f64, f64)> = (0..m).map(|i| (i as f64, 1.0 / m as f64)).collect();
        assert!((atom_statistic(&from_weights(&equal)) - 1.0 / m as f64).abs() < 1e-15);
        let two = from_weights(&[(0.0, 0.75), (1.0, 0.25)]);
        assert!((atom_statistic(&two) - 0.625).abs() < 1e-15);
    }

    #[test]
    fn profile_examples() {
        let grid = [0.25, 0.5, 1.0];
        let single = weak_atomic_profile(&from_weights(&[(3.0, 1.0)]), &grid);
        assert!(single.iter().all(|&v| v == 1.0));

        let far = weak_atomic_profile(&from_weights(&[(0.0, 0.5), (1.5, 0.5)]), &grid);
        assert!(far.iter().all(|&v| (v - 0.5).abs() < 1e-15));

        let near = weak_atomic_profile(&from_weights(&[(0.0, 0.5), (0.5, 0.5)]), &[1.0]);
        assert!((near[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn distance_of_identical_measures_is_zero() {
        let mu = from_weights(&[(0.0, 0.3), (0.7, 0.7)]);
        let (lo, hi) = weak_atomic_distance(&mu, &mu, &default_eps_grid());
        assert_eq!(lo, 0.0);
        assert!(hi < 1e-12);
    }

    #[test]
    fn upper_bound_vanishes_for_nearby_deltas() {
        let grid = default_eps_grid();
        for &d in &[0.1, 0.01, 0.001] {
            let mu = from_weights(&[(0.0, 1.0)]);
            let nu = from_weights(&[(d, 1.0)]);
            let (lo, hi) = weak_atomic_distance(&mu, &nu, &grid);
            assert!(lo <= hi);
            assert!(hi < 2.0 * d.sqrt() + 0.2, "d {d} hi {hi}");
        }
        let (_, hi1) = weak_atomic_distance(
            &from_weights(&[(0.0, 1.0)]),
            &from_weights(&[(0.1, 1.0)]),
            &grid,
        );
        let (_, hi2) = weak_atomic_distance(
            &from_weights(&[(0.0, 1.0)]),
            &from_weights(&[(0.001, 1.0)]),
            &grid,
        );
        assert!(hi2 < hi1);
    }

    #[test]
    fn phi_term_enters_the_lower_bound() {
        // delta_0 vs (delta_0 + delta_1)/2: profiles at eps=1 are 1 vs 0.5
        let mu = from_weights(&[(0.0, 1.0)]);
        let nu = from_weights(&[(0.0, 0.5), (1.0, 0.5)]);
        let (lo, hi) = weak_atomic_distance(&mu, &nu, &[1.0]);
        assert!(lo >= 0.5);
        assert!(lo <= hi);
    }

    #[test]
    fn bracket_ordered_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grid = default_eps_grid();
        for _ in 0..1000 {
            use rand::Rng;
            let make = |rng: &mut ChaCha8Rng| {
                let n = rng.random_range(1..6);
                let raw: Vec<(f64, f64)> = (0..n)
                    .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(0.01..1.0)))
                    .collect();
                let tot: f64 = raw.iter().map(|&(_, m)| m).sum();
                from_weights(
                    &raw.iter()
                        .map(|&(p, m)| (p, m / tot))
                        .collect::<Vec<_>>(),
                )
            };
            let mu = make(&mut rng);
            let nu = make(&mut rng);
            let (lo, hi) = weak_atomic_distance(&mu, &nu, &grid);
            assert!(lo <= hi + 1e-12, "lo {lo} hi {hi}");
            assert!(lo >= 0.0 && hi.is_finite());
        }
    }

    #[test]
    fn coincident_points_never_cross() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let kernel = KernelSpec::gaussian(1.0, 1.0, 0.0);
        let pts = [0.3; 8];
        let res = order_preservation_test(&kernel, &pts, 0.5, 0.01, &mut rng).unwrap();
        assert_eq!(res.crossing_count, 0);
        for snap in &res.trajectory {
            assert!(snap.iter().all(|&x| x == snap[0]));
        }
    }

    #[test]
    fn fully_correlated_kernel_translates_rigidly() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        // bandwidth huge compared to the point spread: correlation 1 - O(1e-11)
        let kernel = KernelSpec::gaussian(1.0, 1e6, 0.0);
        let pts: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let res = order_preservation_test(&kernel, &pts, 0.5, 0.01, &mut rng).unwrap();
        assert_eq!(res.crossing_count, 0);
    }

    #[test]
    fn dt_halving_reduces_crossings_in_most_paired_runs() {
        let kernel = KernelSpec::gaussian(1.0, 1.0, 0.0);
        let pts: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let mut wins = 0;
        let n = 60;
        for seed in 0..n {
            let mut r1 = ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut r2 = ChaCha8Rng::seed_from_u64(1000 + seed);
            let coarse = order_preservation_test(&kernel, &pts, 0.5, 0.02, &mut r1).unwrap();
            let fine = order_preservation_test(&kernel, &pts, 0.5, 0.01, &mut r2).unwrap();
            if fine.crossing_count <= coarse.crossing_count {
                wins += 1;
            }
        }
        assert!(wins * 10 >= n * 9, "wins {wins}/{n}");
    }

    #[test]
    fn order_test_rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let eps = KernelSpec::gaussian(1.0, 1.0, 0.5);
        assert!(order_preservation_test(&eps, &[0.0, 1.0], 0.5, 0.01, &mut rng).is_err());
        let k0 = KernelSpec::gaussian(1.0, 1.0, 0.0);
        assert!(order_preservation_test(&k0, &[1.0, 0.0], 0.5, 0.01, &mut rng).is_err());
    }

    #[test]
    fn lineage_law_at_time_zero_and_large_gamma() {
        let m = 16;
        let at_m = vec![m; 2500];
        let res = lineage_law_test(&at_m, m, 1.0, 0.0).unwrap();
        assert!(res.tv_distance < 1e-9 && res.pass);

        let at_one = vec![1usize; 2500];
        let res = lineage_law_test(&at_one, m, 200.0, 1.0).unwrap();
        assert!(res.tv_distance < 1e-3 && res.pass);
    }

    #[test]
    fn lineage_law_matches_simulated_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (m, gamma, t) = (64, 1.0, 0.2);
        let counts: Vec<usize> = (0..2000)
            .map(|_| simulate_death_chain(m, gamma, t, &mut rng).level_at(t))
            .collect();
        let res = lineage_law_test(&counts, m, gamma, t).unwrap();
        assert!(res.pass, "tv {}", res.tv_distance);
    }

    #[test]
    fn small_sample_cannot_pass() {
        let res = lineage_law_test(&vec![16usize; 100], 16, 1.0, 0.0).unwrap();
        assert!(!res.pass);
    }
}
