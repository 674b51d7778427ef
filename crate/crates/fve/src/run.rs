//! Ensemble orchestration: replicate dispatch, pooling, and persistence.
//!
//! Replicate k draws its stream from (master_seed, k); results are collected
//! in index order, so outputs are byte-identical across reruns and worker
//! counts. Wall time is logged to stderr only — the persisted artifacts stay
//! reproducible bit-for-bit.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, RunConfig};
use crate::diagnostics::{atom_report, default_eps_grid, AtomReport};
use crate::dual::dual_moment_estimate;
use crate::error::{Error, Result};
use crate::lookdown::{simulate_batched, RunStatus, SimulationConfig};
use crate::measure::{Atom, EmpiricalMeasure};
use crate::sdsm::{replay_sdsm, simulate_mass_skeleton, simulate_sdsm, MassSkeleton};
use crate::seed::derive_rng;
use crate::spde::{density_moments, solve_density, stability_bound, DensityField};
use crate::testfn::TestFunction;

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub rep: usize,
    pub time: f64,
    pub key: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PooledStat {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub rep: usize,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub experiment: String,
    pub config_hash: String,
    pub code_version: String,
    pub n_reps: usize,
    pub failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
    pub pooled: BTreeMap<String, PooledStat>,
    pub replicates: Vec<ReplicateSummary>,
    #[serde(skip)]
    pub rows: Vec<TrajectoryRow>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Index-ordered pooling: the pooled mean is the plain (equal-mass) mean of
/// the replicate summaries, computed after sorting by replicate index, so a
/// shuffled input yields bit-identical results.
pub fn pool(replicates: &[ReplicateSummary]) -> BTreeMap<String, PooledStat> {
    let mut order: Vec<&ReplicateSummary> = replicates.iter().collect();
    order.sort_by_key(|r| r.rep);
    let keys: BTreeSet<&String> = order.iter().flat_map(|r| r.values.keys()).collect();
    let mut pooled = BTreeMap::new();
    for key in keys {
        let vals: Vec<f64> = order
            .iter()
            .filter_map(|r| r.values.get(key).copied())
            .collect();
        let (mean, stderr) = crate::stats::mean_stderr(&vals);
        pooled.insert(
            key.clone(),
            PooledStat {
                mean,
                stderr,
                n: vals.len(),
            },
        );
    }
    pooled
}

fn record_rows(
    rep: usize,
    time: f64,
    measure: &EmpiricalMeasure,
    extra: &[(&str, f64)],
    rows: &mut Vec<TrajectoryRow>,
) {
    let mut push = |key: &str, value: f64| {
        rows.push(TrajectoryRow {
            rep,
            time,
            key: key.to_string(),
            value,
        })
    };
    push("mass", measure.total_mass);
    push("mean", measure.mean());
    push("m2", measure.second_moment());
    push("z_star", crate::diagnostics::atom_statistic(measure));
    for &(k, v) in extra {
        push(k, v);
    }
}

fn particle_replicate(
    cfg: &RunConfig,
    rep: usize,
) -> Result<(ReplicateSummary, Vec<TrajectoryRow>)> {
    let kernel = cfg.kernel.to_spec();
    let scfg = SimulationConfig {
        m: cfg.model.m.expect("validated"),
        gamma: cfg.model.gamma,
        model: cfg.resampling_model(),
        horizon: cfg.model.horizon,
        dt_max: cfg.model.dt_max,
        record_times: cfg.model.record_times.clone(),
        initial: cfg.initial.clone(),
    };
    let mut rng = derive_rng(cfg.ensemble.master_seed, rep as u64);
    let traj = simulate_batched(&kernel, &scfg, &mut rng)?;
    if traj.status != RunStatus::Completed {
        return Err(Error::Numeric(format!("replicate {rep} diverged")));
    }
    let mut rows = Vec::new();
    for rec in &traj.records {
        record_rows(
            rep,
            rec.time,
            &rec.measure,
            &[("lineages", rec.lineage_count as f64)],
            &mut rows,
        );
    }
    let last = traj.records.last().expect("validated nonempty records");
    let mut values = BTreeMap::new();
    values.insert("mean".into(), last.measure.mean());
    values.insert("m2".into(), last.measure.second_moment());
    values.insert(
        "z_star".into(),
        crate::diagnostics::atom_statistic(&last.measure),
    );
    values.insert("lineages".into(), last.lineage_count as f64);
    Ok((ReplicateSummary { rep, values }, rows))
}

fn dual_replicate(cfg: &RunConfig, rep: usize) -> Result<(ReplicateSummary, Vec<TrajectoryRow>)> {
    let kernel = cfg.kernel.to_spec();
    let m = cfg.model.m.expect("validated");
    let t = cfg.model.horizon;
    let inner = cfg.model.inner_reps.unwrap_or(100);
    let phi = cfg
        .model
        .test_function
        .clone()
        .unwrap_or_else(TestFunction::unit_bump);
    let mut rng = derive_rng(cfg.ensemble.master_seed, rep as u64);
    let f = |xs: &[f64]| xs.iter().map(|&x| phi.eval(x)).product::<f64>();
    let (est, se) = dual_moment_estimate(
        &cfg.initial,
        f,
        m,
        t,
        &kernel,
        cfg.model.gamma,
        inner,
        cfg.model.dt_max,
        &mut rng,
    )?;
    let mut values = BTreeMap::new();
    values.insert("dual_estimate".into(), est);
    values.insert("dual_inner_stderr".into(), se);
    let rows = vec![TrajectoryRow {
        rep,
        time: t,
        key: "dual_estimate".into(),
        value: est,
    }];
    Ok((ReplicateSummary { rep, values }, rows))
}

fn spde_replicate(cfg: &RunConfig, rep: usize) -> Result<(ReplicateSummary, Vec<TrajectoryRow>)> {
    let kernel = cfg.kernel.to_spec();
    let l = cfg.model.grid_half_width.expect("validated");
    let dx = cfg.model.grid_dx.expect("validated");
    let dt = cfg
        .model
        .dt
        .unwrap_or_else(|| 0.5 * stability_bound(dx, kernel.rho_eps()));
    let field0 = DensityField::from_initial_law(&cfg.initial, l, dx)?;
    let mut rng = derive_rng(cfg.ensemble.master_seed, rep as u64);
    let traj = solve_density(
        &field0,
        &kernel,
        cfg.model.gamma,
        cfg.model.horizon,
        dt,
        &cfg.model.record_times,
        &mut rng,
    )?;
    let phi = cfg.model.test_function.clone();
    let mut rows = Vec::new();
    let mut values = BTreeMap::new();
    for snap in &traj.snapshots {
        let mut extra = vec![
            ("mass", density_moments(snap, |_| 1.0)),
            ("mean", density_moments(snap, |x| x)),
            ("m2", density_moments(snap, |x| x * x)),
        ];
        if let Some(phi) = &phi {
            extra.push(("phi", density_moments(snap, |x| phi.eval(x))));
        }
        for &(k, v) in &extra {
            rows.push(TrajectoryRow {
                rep,
                time: snap.time,
                key: k.to_string(),
                value: v,
            });
        }
        values = extra
            .iter()
            .map(|&(k, v)| (k.to_string(), v))
            .collect();
    }
    Ok((ReplicateSummary { rep, values }, rows))
}

fn sdsm_summary(
    rep: usize,
    traj: &crate::sdsm::SdsmTrajectory,
) -> (ReplicateSummary, Vec<TrajectoryRow>) {
    let mut rows = Vec::new();
    let mut values = BTreeMap::new();
    for rec in &traj.records {
        record_rows(rep, rec.time, &rec.measure, &[], &mut rows);
    }
    if let Some(last) = traj.records.last() {
        values.insert("mass".into(), last.measure.total_mass);
        values.insert("mean".into(), last.measure.mean());
        values.insert("m2".into(), last.measure.second_moment());
        if last.measure.total_mass > 0.0 {
            values.insert(
                "m2_norm".into(),
                last.measure.integrate_normalized(|x| x * x),
            );
        }
    }
    values.insert("extinct".into(), traj.extinct as u8 as f64);
    (ReplicateSummary { rep, values }, rows)
}

fn sdsm_replicate(cfg: &RunConfig, rep: usize) -> Result<(ReplicateSummary, Vec<TrajectoryRow>)> {
    let kernel = cfg.kernel.to_spec();
    let mut rng = derive_rng(cfg.ensemble.master_seed, rep as u64);
    let traj = simulate_sdsm(
        cfg.model.m.expect("validated"),
        &kernel,
        &cfg.initial,
        cfg.model.gamma,
        cfg.model.horizon,
        cfg.model.dt_max,
        &cfg.model.record_times,
        &mut rng,
    )?;
    Ok(sdsm_summary(rep, &traj))
}

/// Scan attempt indices in fixed-size blocks, testing only the cheap mass
/// skeleton, until `needed` attempts pass the band. Returns the accepted
/// attempt indices (in order) and the acceptance rate over the scanned
/// prefix. Deterministic: block boundaries are fixed, so the scanned prefix
/// is a pure function of (seed, needed, band).
pub fn accepted_attempts(
    n0: usize,
    gamma: f64,
    horizon: f64,
    delta: f64,
    t_cond: f64,
    needed: usize,
    max_attempts: usize,
    master_seed: u64,
) -> Result<(Vec<usize>, f64)> {
    const BLOCK: usize = 4096;
    let mut accepted = Vec::with_capacity(needed);
    let mut scanned = 0usize;
    while scanned < max_attempts && accepted.len() < needed {
        let hi = (scanned + BLOCK).min(max_attempts);
        let mut found: Vec<usize> = (scanned..hi)
            .into_par_iter()
            .filter(|&a| {
                let mut rng = derive_rng(master_seed, a as u64);
                let sk =
                    simulate_mass_skeleton(n0, gamma, horizon, Some((delta, t_cond)), &mut rng);
                !sk.truncated && sk.sup_mass_deviation(t_cond) < delta
            })
            .collect();
        found.sort_unstable();
        accepted.extend(found);
        scanned = hi;
    }
    if accepted.is_empty() {
        return Err(Error::ZeroAcceptance);
    }
    let rate = accepted.len() as f64 / scanned as f64;
    accepted.truncate(needed);
    Ok((accepted, rate))
}

/// Replay one accepted attempt: the skeleton is re-drawn from the attempt's
/// stream (identical draws, since the accepted path never hit the band) and
/// the spatial system follows from the same stream.
pub fn replay_attempt(
    cfg: &RunConfig,
    attempt: usize,
) -> Result<(MassSkeleton, crate::sdsm::SdsmTrajectory)> {
    let kernel = cfg.kernel.to_spec();
    let mut rng = derive_rng(cfg.ensemble.master_seed, attempt as u64);
    let sk = simulate_mass_skeleton(
        cfg.model.m.expect("validated"),
        cfg.model.gamma,
        cfg.model.horizon,
        None,
        &mut rng,
    );
    let traj = replay_sdsm(
        &sk,
        &kernel,
        &cfg.initial,
        cfg.model.dt_max,
        &cfg.model.record_times,
        &mut rng,
    )?;
    Ok((sk, traj))
}

fn run_sdsm_conditioned(cfg: &RunConfig, delta: f64) -> Result<(Vec<ReplicateSummary>, Vec<TrajectoryRow>, f64)> {
    let n0 = cfg.model.m.expect("validated");
    let needed = cfg.ensemble.n_reps;
    let max_attempts = needed.saturating_mul(50_000);
    let (accepted, rate) = accepted_attempts(
        n0,
        cfg.model.gamma,
        cfg.model.horizon,
        delta,
        cfg.model.horizon,
        needed,
        max_attempts,
        cfg.ensemble.master_seed,
    )?;
    if accepted.len() < needed {
        return Err(Error::TooManyDiscards {
            discarded: max_attempts - accepted.len(),
            total: max_attempts,
        });
    }
    let replayed: Vec<Result<_>> = accepted
        .par_iter()
        .enumerate()
        .map(|(rep, &a)| replay_attempt(cfg, a).map(|(_, traj)| sdsm_summary(rep, &traj)))
        .collect();
    let mut summaries = Vec::with_capacity(needed);
    let mut rows = Vec::new();
    for r in replayed {
        let (s, mut rs) = r?;
        summaries.push(s);
        rows.append(&mut rs);
    }
    Ok((summaries, rows, rate))
}

/// Diagnose: read an atom CSV (columns time,position,mass), group rows into
/// one empirical measure per time, and emit atom reports as JSON.
pub fn diagnose(cfg: &RunConfig) -> Result<String> {
    let input = cfg
        .model
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("diagnose needs model.input".into()))?;
    let mut reader = csv::Reader::from_path(input).map_err(|e| Error::Serde(e.to_string()))?;
    let mut groups: Vec<(f64, Vec<Atom>)> = Vec::new();
    for row in reader.deserialize::<(f64, f64, f64)>() {
        let (time, position, mass) = row.map_err(|e| Error::Serde(e.to_string()))?;
        match groups.iter_mut().find(|(t, _)| *t == time) {
            Some((_, atoms)) => atoms.push(Atom { position, mass }),
            None => groups.push((time, vec![Atom { position, mass }])),
        }
    }
    if groups.is_empty() {
        return Err(Error::Config("diagnose input has no rows".into()));
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let grid = default_eps_grid();
    #[derive(Serialize)]
    struct Entry {
        time: f64,
        report: AtomReport,
    }
    let entries: Vec<Entry> = groups
        .into_iter()
        .map(|(time, atoms)| Entry {
            time,
            report: atom_report(&EmpiricalMeasure::from_atoms(atoms), &grid),
        })
        .collect();
    serde_json::to_string_pretty(&entries).map_err(|e| Error::Serde(e.to_string()))
}

pub fn summary_json(res: &EnsembleResult) -> String {
    serde_json::to_string_pretty(res).expect("summary serializes")
}

pub fn trajectories_csv(res: &EnsembleResult) -> String {
    let mut out = String::from("rep,time,key,value\n");
    for r in &res.rows {
        out.push_str(&format!("{},{},{},{}\n", r.rep, r.time, r.key, r.value));
    }
    out
}

pub fn persist(res: &EnsembleResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("summary.json"), summary_json(res))?;
    std::fs::write(dir.join("trajectories.csv"), trajectories_csv(res))?;
    Ok(())
}

/// Run the configured experiment over the ensemble. Verify and diagnose have
/// dedicated entry points (`verify::run_suite`, `diagnose`).
pub fn run(base: &RunConfig, overrides: &Overrides) -> Result<EnsembleResult> {
    let mut cfg = base.clone();
    if let Some(seed) = overrides.seed {
        cfg.ensemble.master_seed = seed;
    }
    if let Some(reps) = overrides.reps {
        cfg.ensemble.n_reps = reps;
    }
    if let Some(out) = &overrides.out {
        cfg.output.dir = Some(out.to_string_lossy().into_owned());
    }
    cfg.validate()?;

    let body = || run_inner(&cfg);
    let result = match std::env::var("FVE_WORKERS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .map_err(|_| Error::Config("FVE_WORKERS must be a positive integer".into()))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            pool.install(body)
        }
        Err(_) => body(),
    }?;

    if let Some(dir) = &cfg.output.dir {
        persist(&result, Path::new(dir))?;
    }
    Ok(result)
}

fn run_inner(cfg: &RunConfig) -> Result<EnsembleResult> {
    let started = std::time::Instant::now();
    let n = cfg.ensemble.n_reps;
    let mut acceptance_rate = None;

    let (summaries, rows, failures) = match cfg.experiment {
        Experiment::Verify | Experiment::Diagnose => {
            return Err(Error::InvalidArgument(format!(
                "experiment '{}' has a dedicated entry point",
                cfg.experiment.name()
            )));
        }
        Experiment::Sdsm if cfg.model.delta.is_some() => {
            let (s, r, rate) = run_sdsm_conditioned(cfg, cfg.model.delta.unwrap())?;
            acceptance_rate = Some(rate);
            (s, r, 0)
        }
        _ => {
            let per_rep = |rep: usize| -> Result<(ReplicateSummary, Vec<TrajectoryRow>)> {
                match cfg.experiment {
                    Experiment::Lookdown | Experiment::Moran => particle_replicate(cfg, rep),
                    Experiment::Dual => dual_replicate(cfg, rep),
                    Experiment::Spde => spde_replicate(cfg, rep),
                    Experiment::Sdsm => sdsm_replicate(cfg, rep),
                    _ => unreachable!(),
                }
            };
            let results: Vec<Result<_>> = (0..n).into_par_iter().map(per_rep).collect();
            let mut summaries = Vec::with_capacity(n);
            let mut rows = Vec::new();
            let mut failures = 0usize;
            for r in results {
                match r {
                    Ok((s, mut rs)) => {
                        summaries.push(s);
                        rows.append(&mut rs);
                    }
                    Err(_) => failures += 1,
                }
            }
            if failures * 100 > n {
                return Err(Error::TooManyDiscards {
                    discarded: failures,
                    total: n,
                });
            }
            (summaries, rows, failures)
        }
    };

    let pooled = pool(&summaries);
    let result = EnsembleResult {
        experiment: cfg.experiment.name().to_string(),
        config_hash: format!("{:016x}", cfg.hash()),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        n_reps: summaries.len(),
        failures,
        acceptance_rate,
        pooled,
        replicates: summaries,
        rows,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    eprintln!(
        "[fve] {} n_reps={} failures={} wall={:.2}s",
        result.experiment, result.n_reps, result.failures, result.wall_time_s
    );
    Ok(result)
}
