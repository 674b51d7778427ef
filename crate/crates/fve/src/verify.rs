//! Verification suites: each criterion runs a sized experiment against an
//! exact or independently derived target and reports pass/fail with the
//! numbers that decided it. The acceptance test and the `verify` subcommand
//! share these implementations.

use crate::config::{EnsembleSection, Experiment, KernelSection, ModelSection, OutputSection, RunConfig};
use crate::diagnostics::{lineage_law_test, order_preservation_test};
use crate::dual::{dual_moment_estimate, first_moment_exact};
use crate::error::{Error, Result};
use crate::initial::InitialLaw;
use crate::kernel::KernelSpec;
use crate::lookdown::{simulate_batched, ParticleSystem, ParticleSystemState, ResamplingModel, SimulationConfig};
use crate::run::{accepted_attempts, pool, replay_attempt, run, summary_json, trajectories_csv, Overrides};
use crate::seed::{derive_rng, derive_seed};
use crate::spde::{density_moments, solve_density, stability_bound, DensityField};
use crate::stats::{ci95_overlap, mean_stderr};
use crate::testfn::TestFunction;

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub name: &'static str,
    pub pass: bool,
    pub warn: bool,
    pub detail: String,
}

impl CriterionResult {
    fn new(name: &'static str, pass: bool, detail: String) -> Self {
        CriterionResult {
            name,
            pass,
            warn: false,
            detail,
        }
    }

    pub fn line(&self) -> String {
        let status = if self.pass {
            if self.warn {
                "PASS (warn)"
            } else {
                "PASS"
            }
        } else {
            "FAIL"
        };
        format!("{}: {} — {}", self.name, status, self.detail)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Params {
    pub master_seed: u64,
    /// Override for the main ensemble size of each criterion; None keeps the
    /// full sizes. Reduced runs still report, possibly failing.
    pub reps: Option<usize>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            master_seed: 42,
            reps: None,
        }
    }
}

/// Per-criterion master seed, so criteria never share replicate streams.
fn sub_seed(master: u64, tag: u64) -> u64 {
    u64::from_le_bytes(derive_seed(master, tag)[..8].try_into().unwrap())
}

fn std_kernel() -> KernelSpec {
    KernelSpec::gaussian(1.0, 1.0, 0.5)
}

fn lookdown_config(m: usize, n_reps: usize, horizon: f64, seed: u64) -> RunConfig {
    RunConfig {
        experiment: Experiment::Lookdown,
        kernel: KernelSection::Gaussian {
            amplitude: 1.0,
            bandwidth: 1.0,
            epsilon: 0.5,
        },
        model: ModelSection {
            m: Some(m),
            gamma: 1.0,
            horizon,
            dt_max: 0.01,
            record_times: vec![horizon],
            grid_half_width: None,
            grid_dx: None,
            dt: None,
            delta: None,
            inner_reps: None,
            suite: None,
            input: None,
            test_function: None,
        },
        initial: InitialLaw::Point { x: 0.0 },
        ensemble: EnsembleSection {
            n_reps,
            master_seed: seed,
        },
        output: OutputSection::default(),
    }
}

/// Criteria 1 and 2: one lookdown ensemble, two checks.
pub fn moments_criteria(params: Params) -> Result<Vec<CriterionResult>> {
    let n = params.reps.unwrap_or(400);
    let cfg = lookdown_config(128, n, 0.5, sub_seed(params.master_seed, 1));
    let res = run(&cfg, &Overrides::default())?;
    let mean = res.pooled["mean"];
    let pass1 = mean.mean.abs() < 4.0 * mean.stderr;
    let c1 = CriterionResult::new(
        "mean-preservation",
        pass1,
        format!(
            "|E<Z,x>| = {:.4e} vs 4*se = {:.4e} (m=128, n={n}, t=0.5)",
            mean.mean.abs(),
            4.0 * mean.stderr
        ),
    );
    let m2 = res.pooled["m2"];
    let target = std_kernel().rho_eps() * 0.5;
    let tol = (4.0 * m2.stderr).max(0.01 * target);
    let pass2 = (m2.mean - target).abs() < tol;
    let c2 = CriterionResult::new(
        "second-moment-growth",
        pass2,
        format!(
            "E<Z,x^2> = {:.5} vs rho_eps*t = {:.5}, tol {:.4e}",
            m2.mean, target, tol
        ),
    );
    Ok(vec![c1, c2])
}

fn forward_phi_moments(
    m: usize,
    n: usize,
    t: f64,
    phi: &TestFunction,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let kernel = std_kernel();
    let cfg = SimulationConfig {
        m,
        gamma: 1.0,
        model: ResamplingModel::Lookdown,
        horizon: t,
        dt_max: 0.01,
        record_times: vec![t],
        initial: InitialLaw::Point { x: 0.0 },
    };
    let mut p2 = Vec::with_capacity(n);
    let mut p3 = Vec::with_capacity(n);
    for k in 0..n {
        let mut rng = derive_rng(seed, k as u64);
        let traj = simulate_batched(&kernel, &cfg, &mut rng)?;
        let p = traj.records[0].measure.integrate(|x| phi.eval(x));
        p2.push(p * p);
        p3.push(p * p * p);
    }
    Ok((p2, p3))
}

/// Criterion 3: forward pair and triple moments against the dual estimator.
pub fn duality_criterion(params: Params) -> Result<CriterionResult> {
    let seed = sub_seed(params.master_seed, 3);
    let n = params.reps.unwrap_or(400);
    let t = 0.25;
    let phi = TestFunction::unit_bump(); // e^{-x^2/2}
    let (p2, p3) = forward_phi_moments(256, n, t, &phi, seed)?;
    let fwd2 = mean_stderr(&p2);
    let fwd3 = mean_stderr(&p3);

    let kernel = std_kernel();
    let mu = InitialLaw::Point { x: 0.0 };
    let mut rng2 = derive_rng(seed, 1_000_001);
    let dual2 = dual_moment_estimate(
        &mu,
        |xs: &[f64]| xs.iter().map(|&x| phi.eval(x)).product(),
        2,
        t,
        &kernel,
        1.0,
        2000,
        0.01,
        &mut rng2,
    )?;
    let mut rng3 = derive_rng(seed, 1_000_002);
    let dual3 = dual_moment_estimate(
        &mu,
        |xs: &[f64]| xs.iter().map(|&x| phi.eval(x)).product(),
        3,
        t,
        &kernel,
        1.0,
        2000,
        0.01,
        &mut rng3,
    )?;
    let ok2 = ci95_overlap(fwd2, dual2);
    let ok3 = ci95_overlap(fwd3, dual3);
    Ok(CriterionResult::new(
        "duality",
        ok2 && ok3,
        format!(
            "pair fwd {:.4}±{:.4} vs dual {:.4}±{:.4} ({}); triple fwd {:.4}±{:.4} vs dual {:.4}±{:.4} ({})",
            fwd2.0, fwd2.1, dual2.0, dual2.1, if ok2 { "overlap" } else { "disjoint" },
            fwd3.0, fwd3.1, dual3.0, dual3.1, if ok3 { "overlap" } else { "disjoint" },
        ),
    ))
}

/// Criterion 4: empirical lineage-count law vs the exact death-chain marginal.
pub fn lineage_criterion(params: Params) -> Result<CriterionResult> {
    let seed = sub_seed(params.master_seed, 4);
    let n = params.reps.unwrap_or(2000);
    let (m, gamma, t) = (64usize, 1.0, 0.2);
    let kernel = KernelSpec::gaussian(1.0, 1.0, 0.0);
    let cfg = SimulationConfig {
        m,
        gamma,
        model: ResamplingModel::Lookdown,
        horizon: t,
        dt_max: 0.01,
        record_times: vec![t],
        initial: InitialLaw::Uniform { a: -1.0, b: 1.0 },
    };
    let mut counts = Vec::with_capacity(n);
    for k in 0..n {
        let mut rng = derive_rng(seed, k as u64);
        let traj = simulate_batched(&kernel, &cfg, &mut rng)?;
        counts.push(traj.records[0].lineage_count);
    }
    let res = lineage_law_test(&counts, m, gamma, t)?;
    Ok(CriterionResult::new(
        "lineage-law",
        res.pass,
        format!(
            "TV = {:.4} (< 0.05 required, n = {})",
            res.tv_distance, res.sample_size
        ),
    ))
}

fn partition_ids(positions: &[f64]) -> Vec<u64> {
    // label each particle by the bits of its position; equal labels = one atom
    positions.iter().map(|p| p.to_bits()).collect()
}

/// Criterion 5: Z* monotone on every pure-common-noise path, coalesced pairs
/// stay bitwise coalesced, and individual noise keeps all atoms distinct.
pub fn atomicity_criterion(params: Params) -> Result<CriterionResult> {
    let seed = sub_seed(params.master_seed, 5);
    let kernel0 = KernelSpec::gaussian(1.0, 1.0, 0.0);

    // (a) Z* non-decreasing along every path
    let record_times: Vec<f64> = (1..=5).map(|i| i as f64 * 0.05).collect();
    let cfg = SimulationConfig {
        m: 64,
        gamma: 1.0,
        model: ResamplingModel::Lookdown,
        horizon: 0.25,
        dt_max: 0.01,
        record_times,
        initial: InitialLaw::Uniform { a: -1.0, b: 1.0 },
    };
    let paths = 100;
    let mut zstar_monotone = 0usize;
    let mut count_monotone = 0usize;
    let mut zstar_mean = vec![0.0f64; cfg.record_times.len()];
    for k in 0..paths {
        let mut rng = derive_rng(seed, k as u64);
        let traj = simulate_batched(&kernel0, &cfg, &mut rng)?;
        let zs: Vec<f64> = traj
            .records
            .iter()
            .map(|r| crate::diagnostics::atom_statistic(&r.measure))
            .collect();
        if zs.windows(2).all(|w| w[1] >= w[0]) {
            zstar_monotone += 1;
        }
        for (acc, z) in zstar_mean.iter_mut().zip(&zs) {
            *acc += z / paths as f64;
        }
        let counts: Vec<usize> = traj.records.iter().map(|r| r.measure.atoms.len()).collect();
        if counts.windows(2).all(|w| w[1] <= w[0]) {
            count_monotone += 1;
        }
    }
    let zstar_mean_monotone = zstar_mean.windows(2).all(|w| w[1] >= w[0]);

    // (b) coalesced pairs stay coalesced, checked on exact event-driven paths
    let mut permanence_ok = true;
    'outer: for k in 0..20u64 {
        let mut rng = derive_rng(seed, 10_000 + k);
        let state =
            ParticleSystemState::init(16, &InitialLaw::Uniform { a: -1.0, b: 1.0 }, 2.0, ResamplingModel::Lookdown, &mut rng)?;
        let mut system = ParticleSystem::new(&kernel0, state)?;
        let mut labels = partition_ids(&system.state.positions);
        let mut t = 0.0;
        loop {
            let (wait, i, j) = system.next_event(&mut rng);
            let target = (t + wait).min(0.5);
            let mut remaining = target - t;
            while remaining > 0.0 {
                let dt = remaining.min(0.01);
                system.step_diffusion(dt, &mut rng)?;
                remaining -= dt;
            }
            // diffusion must not split any coalesced pair
            let now = partition_ids(&system.state.positions);
            for a in 0..labels.len() {
                for b in (a + 1)..labels.len() {
                    if labels[a] == labels[b] && now[a] != now[b] {
                        permanence_ok = false;
                        break 'outer;
                    }
                }
            }
            t = target;
            if t >= 0.5 {
                break;
            }
            system.apply_event(i, j)?;
            labels = partition_ids(&system.state.positions);
        }
    }

    // (c) epsilon > 0: no two positions bitwise equal at any record time
    let kernel_eps = std_kernel();
    let cfg_eps = SimulationConfig {
        m: 64,
        gamma: 1.0,
        model: ResamplingModel::Lookdown,
        horizon: 0.25,
        dt_max: 0.01,
        record_times: (1..=5).map(|i| i as f64 * 0.05).collect(),
        initial: InitialLaw::Point { x: 0.0 },
    };
    let mut distinct_ok = true;
    for k in 0..50u64 {
        let mut rng = derive_rng(seed, 20_000 + k);
        let traj = simulate_batched(&kernel_eps, &cfg_eps, &mut rng)?;
        for rec in &traj.records {
            let mut bits: Vec<u64> = rec.measure.atoms.iter().map(|a| a.position.to_bits()).collect();
            bits.sort_unstable();
            if bits.windows(2).any(|w| w[0] == w[1]) {
                distinct_ok = false;
            }
        }
    }

    // Pathwise Z* monotonicity is required by the stated criterion but is
    // arithmetically false for the finite system: a resampling event moves a
    // single particle between atoms, and whenever the donor atom is at least
    // two particles larger than the recipient (sizes (k, l) -> (k-1, l+1)
    // with l + 1 < k), the sum of squared masses strictly drops. Z* is a
    // submartingale, not a monotone path functional; the coarsening that is
    // pathwise monotone is the atom count. Both are reported; the pass flag
    // holds the criterion to its stated (unattainable) form.
    let pass = zstar_monotone == paths && permanence_ok && distinct_ok;
    Ok(CriterionResult::new(
        "atomicity",
        pass,
        format!(
            "Z* monotone on {zstar_monotone}/{paths} paths (single-particle block switches (k,l)->(k-1,l+1) with l+1<k lower it); \
             Z* ensemble mean monotone: {zstar_mean_monotone}; atom count non-increasing on {count_monotone}/{paths} paths; \
             coalescence permanent: {permanence_ok}; eps>0 atoms distinct: {distinct_ok}"
        ),
    ))
}

fn overlap_with_budget(a: (f64, f64), b: (f64, f64), budget: f64) -> bool {
    let scale = a.0.abs().max(b.0.abs());
    (a.0 - b.0).abs() <= 1.96 * (a.1 + b.1) + budget * scale
}

/// Criterion 6: SPDE field moments vs the lookdown baseline, plus spatial
/// convergence of the deterministic sub-case.
pub fn spde_criterion(params: Params) -> Result<CriterionResult> {
    let seed = sub_seed(params.master_seed, 6);
    let kernel = std_kernel();
    let (t, gamma) = (0.25, 1.0);
    let (l, dx) = (8.0, 0.05);
    let dt = 0.5 * stability_bound(dx, kernel.rho_eps());
    let fields = params.reps.map(|r| r.max(2)).unwrap_or(200);
    let field0 = DensityField::from_initial_law(&InitialLaw::Point { x: 0.0 }, l, dx)?;

    let mut s_m1 = Vec::with_capacity(fields);
    let mut s_m2 = Vec::with_capacity(fields);
    let mut s_m1sq = Vec::with_capacity(fields);
    let mut s_m2sq = Vec::with_capacity(fields);
    for k in 0..fields {
        let mut rng = derive_rng(seed, k as u64);
        let traj = solve_density(&field0, &kernel, gamma, t, dt, &[t], &mut rng)?;
        let snap = &traj.snapshots[0];
        let m1 = density_moments(snap, |x| x);
        let m2 = density_moments(snap, |x| x * x);
        s_m1.push(m1);
        s_m2.push(m2);
        s_m1sq.push(m1 * m1);
        s_m2sq.push(m2 * m2);
    }

    let n = params.reps.unwrap_or(400);
    let cfg = SimulationConfig {
        m: 512,
        gamma,
        model: ResamplingModel::Lookdown,
        horizon: t,
        dt_max: 0.005,
        record_times: vec![t],
        initial: InitialLaw::Point { x: 0.0 },
    };
    let mut l_m1 = Vec::with_capacity(n);
    let mut l_m2 = Vec::with_capacity(n);
    let mut l_m1sq = Vec::with_capacity(n);
    let mut l_m2sq = Vec::with_capacity(n);
    for k in 0..n {
        let mut rng = derive_rng(seed, 1_000_000 + k as u64);
        let traj = simulate_batched(&kernel, &cfg, &mut rng)?;
        let m1 = traj.records[0].measure.mean();
        let m2 = traj.records[0].measure.second_moment();
        l_m1.push(m1);
        l_m2.push(m2);
        l_m1sq.push(m1 * m1);
        l_m2sq.push(m2 * m2);
    }

    let budget = 0.05;
    let pairs = [
        ("E<Z,x>", mean_stderr(&s_m1), mean_stderr(&l_m1)),
        ("E<Z,x>^2", mean_stderr(&s_m1sq), mean_stderr(&l_m1sq)),
        ("E<Z,x2>", mean_stderr(&s_m2), mean_stderr(&l_m2)),
        ("E<Z,x2>^2", mean_stderr(&s_m2sq), mean_stderr(&l_m2sq)),
    ];
    let mut all_ok = true;
    let mut details = Vec::new();
    for (name, a, b) in pairs {
        let ok = overlap_with_budget(a, b, budget);
        all_ok &= ok;
        details.push(format!(
            "{name}: spde {:.4}±{:.4} vs particles {:.4}±{:.4} ({})",
            a.0,
            a.1,
            b.0,
            b.1,
            if ok { "ok" } else { "off" }
        ));
    }

    // deterministic sub-case: gamma = 0, h = 0, grid halving
    let det_kernel = KernelSpec::gaussian(0.0, 1.0, 0.5);
    let sd0 = 0.3;
    let det_t = 0.2;
    let sup_err = |dx: f64| -> Result<f64> {
        let f0 = DensityField::from_initial_law(
            &InitialLaw::Normal { mean: 0.0, sd: sd0 },
            4.0,
            dx,
        )?;
        let dt = 0.5 * stability_bound(dx, det_kernel.rho_eps());
        let mut rng = derive_rng(seed, 2_000_000);
        let traj = solve_density(&f0, &det_kernel, 0.0, det_t, dt, &[det_t], &mut rng)?;
        let snap = &traj.snapshots[0];
        let var = sd0 * sd0 + det_kernel.rho_eps() * det_t;
        let err = snap
            .grid()
            .zip(&snap.values)
            .map(|(x, &z)| {
                let exact = (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
                (z - exact).abs()
            })
            .fold(0.0f64, f64::max);
        Ok(err)
    };
    let e_coarse = sup_err(0.1)?;
    let e_fine = sup_err(0.05)?;
    let ratio = e_coarse / e_fine;
    let second_order = ratio > 2.5;
    details.push(format!(
        "grid halving: sup-err {:.3e} -> {:.3e}, ratio {:.2} (> 2.5 required)",
        e_coarse, e_fine, ratio
    ));

    Ok(CriterionResult::new(
        "spde-consistency",
        all_ok && second_order,
        details.join("; "),
    ))
}

/// Criterion 7: the conditioned branching system against the exact FVE
/// second moment, over the delta ladder.
pub fn conditioning_criterion(params: Params) -> Result<CriterionResult> {
    let seed = sub_seed(params.master_seed, 7);
    let kernel = std_kernel();
    let (n0, gamma, horizon) = (500usize, 1.0, 0.3);
    let needed = params.reps.unwrap_or(200);
    let baseline = first_moment_exact(
        &InitialLaw::Point { x: 0.0 },
        &TestFunction::square(),
        horizon,
        &kernel,
    )?;

    let cfg_for = |delta: f64, seed: u64| RunConfig {
        experiment: Experiment::Sdsm,
        kernel: KernelSection::Gaussian {
            amplitude: 1.0,
            bandwidth: 1.0,
            epsilon: 0.5,
        },
        model: ModelSection {
            m: Some(n0),
            gamma,
            horizon,
            dt_max: 0.005,
            record_times: vec![horizon],
            grid_half_width: None,
            grid_dx: None,
            dt: None,
            delta: Some(delta),
            inner_reps: None,
            suite: None,
            input: None,
            test_function: None,
        },
        initial: InitialLaw::Point { x: 0.0 },
        ensemble: EnsembleSection {
            n_reps: needed,
            master_seed: seed,
        },
        output: OutputSection::default(),
    };

    // attempt budgets sized from the band-exit probability of the mass path;
    // the 0.1 rung is a bounded probe — its acceptance probability is ~1e-16
    let ladder: [(f64, usize); 3] = [(0.3, 200_000), (0.2, 6_000_000), (0.1, 300_000)];
    let mut gaps: Vec<(f64, f64, f64, usize)> = Vec::new(); // (delta, gap, se, accepted)
    let mut details = Vec::new();
    let mut final_overlap = false;
    let mut final_complete = false;
    for (i, &(delta, max_attempts)) in ladder.iter().enumerate() {
        let rung_seed = sub_seed(seed, 100 + i as u64);
        match accepted_attempts(n0, gamma, horizon, delta, horizon, needed, max_attempts, rung_seed)
        {
            Ok((accepted, rate)) if accepted.len() >= needed => {
                let cfg = cfg_for(delta, rung_seed);
                let mut vals = Vec::with_capacity(needed);
                for &a in &accepted {
                    let (_, traj) = replay_attempt(&cfg, a)?;
                    let m = &traj.records[0].measure;
                    vals.push(m.integrate_normalized(|x| x * x));
                }
                let (mean, se) = mean_stderr(&vals);
                let gap = (mean - baseline).abs();
                details.push(format!(
                    "delta={delta}: {} accepted (rate {:.2e}), E<w,x2> = {:.4}±{:.4}, gap {:.4}",
                    accepted.len(),
                    rate,
                    mean,
                    se,
                    gap
                ));
                if delta == 0.1 {
                    final_complete = true;
                    final_overlap = (mean - baseline).abs() <= 1.96 * se;
                }
                gaps.push((delta, gap, se, accepted.len()));
            }
            Ok((accepted, rate)) => {
                details.push(format!(
                    "delta={delta}: only {} of {needed} accepted in {max_attempts} attempts (rate {:.2e})",
                    accepted.len(),
                    rate
                ));
            }
            Err(Error::ZeroAcceptance) => {
                details.push(format!(
                    "delta={delta}: 0 accepted in {max_attempts} attempts; the band-exit probability of the mass path makes this rung unreachable at any feasible budget"
                ));
            }
            Err(e) => return Err(e),
        }
    }

    let monotone = gaps.windows(2).all(|w| w[1].1 <= w[0].1 + 1.96 * (w[0].2 + w[1].2));
    let pass = final_complete && final_overlap;
    let mut out = CriterionResult::new(
        "conditioning",
        pass,
        format!(
            "baseline {:.4}; {}; monotone trend: {}",
            baseline,
            details.join("; "),
            monotone
        ),
    );
    out.warn = !monotone;
    Ok(out)
}

/// Criterion 8: dt-halving reduces crossing counts; degenerate cases never cross.
pub fn flow_criterion(params: Params) -> Result<CriterionResult> {
    let seed = sub_seed(params.master_seed, 8);
    let kernel = KernelSpec::gaussian(1.0, 1.0, 0.0);
    let pts: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
    let pairs = params.reps.unwrap_or(200);
    let mut wins = 0usize;
    for k in 0..pairs {
        let mut r1 = derive_rng(seed, k as u64);
        let mut r2 = derive_rng(seed, k as u64);
        let coarse = order_preservation_test(&kernel, &pts, 0.5, 0.02, &mut r1)?;
        let fine = order_preservation_test(&kernel, &pts, 0.5, 0.01, &mut r2)?;
        if fine.crossing_count <= coarse.crossing_count {
            wins += 1;
        }
    }
    let mut rng = derive_rng(seed, 1_000_000);
    let coincident = order_preservation_test(&kernel, &[0.4; 10], 0.5, 0.01, &mut rng)?;
    let wide = KernelSpec::gaussian(1.0, 1e6, 0.0);
    let rigid = order_preservation_test(&wide, &pts, 0.5, 0.01, &mut rng)?;
    let pass = wins * 10 >= pairs * 9 && coincident.crossing_count == 0 && rigid.crossing_count == 0;
    Ok(CriterionResult::new(
        "order-preservation",
        pass,
        format!(
            "dt-halving non-increasing in {wins}/{pairs} paired runs; coincident crossings {}, fully-correlated crossings {}",
            coincident.crossing_count, rigid.crossing_count
        ),
    ))
}

/// Criterion 9: byte-identical reruns and shuffle-invariant pooling.
pub fn determinism_criterion(params: Params) -> Result<CriterionResult> {
    let seed = sub_seed(params.master_seed, 9);
    let cfg = lookdown_config(16, params.reps.unwrap_or(12), 0.2, seed);
    let a = run(&cfg, &Overrides::default())?;
    let b = run(&cfg, &Overrides::default())?;
    let bytes_equal =
        summary_json(&a) == summary_json(&b) && trajectories_csv(&a) == trajectories_csv(&b);

    let mut shuffled = a.replicates.clone();
    shuffled.reverse();
    if shuffled.len() > 3 {
        shuffled.swap(1, 3);
    }
    let repooled = pool(&shuffled);
    let shuffle_invariant = a.pooled.iter().all(|(k, s)| {
        repooled
            .get(k)
            .is_some_and(|r| r.mean.to_bits() == s.mean.to_bits() && r.stderr.to_bits() == s.stderr.to_bits())
    });
    Ok(CriterionResult::new(
        "determinism",
        bytes_equal && shuffle_invariant,
        format!("byte-identical reruns: {bytes_equal}; shuffle-invariant pooling: {shuffle_invariant}"),
    ))
}

pub const SUITES: &[&str] = &[
    "moments",
    "duality",
    "atomicity",
    "spde",
    "conditioning",
    "flow",
    "determinism",
    "all",
];

/// Run one named suite (or "all") and return its criterion results.
pub fn run_suite(suite: &str, params: Params) -> Result<Vec<CriterionResult>> {
    let mut out = Vec::new();
    let want = |name: &str| suite == "all" || suite == name;
    if !SUITES.contains(&suite) {
        return Err(Error::InvalidArgument(format!(
            "unknown suite '{suite}'; expected one of {}",
            SUITES.join(", ")
        )));
    }
    if want("moments") {
        out.extend(moments_criteria(params)?);
    }
    if want("duality") {
        out.push(duality_criterion(params)?);
    }
    if want("atomicity") {
        out.push(lineage_criterion(params)?);
        out.push(atomicity_criterion(params)?);
    }
    if want("spde") {
        out.push(spde_criterion(params)?);
    }
    if want("conditioning") {
        out.push(conditioning_criterion(params)?);
    }
    if want("flow") {
        out.push(flow_criterion(params)?);
    }
    if want("determinism") {
        out.push(determinism_criterion(params)?);
    }
    Ok(out)
}
