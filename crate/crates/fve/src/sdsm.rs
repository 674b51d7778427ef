//! Branching particle system in the common environment: each particle
//! carries mass 1/n0, moves like the lookdown particles, and dies or splits
//! in two (probability 1/2 each) at individual rate gamma * n0.
//!
//! The total-mass path depends only on the event times and coins, never on
//! positions, so it is exposed as a standalone skeleton: conditioning by
//! rejection can test the mass band on the cheap skeleton alone and replay
//! the full spatial system (same seed, skeleton drawn first) only for
//! accepted attempts.

use rand::Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::initial::InitialLaw;
use crate::kernel::{IncrementSampler, KernelSpec};
use crate::measure::EmpiricalMeasure;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MassEvent {
    pub time: f64,
    pub split: bool,
}

/// The autonomous total-mass process: alive count starts at n0 and moves by
/// +/-1 at each event; mass(t) = alive(t) / n0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MassSkeleton {
    pub n0: usize,
    pub gamma: f64,
    pub horizon: f64,
    pub events: Vec<MassEvent>,
    /// Simulation stopped early because the mass left a requested band.
    pub truncated: bool,
}

impl MassSkeleton {
    pub fn alive_at(&self, t: f64) -> usize {
        let mut alive = self.n0 as isize;
        for e in &self.events {
            if e.time > t {
                break;
            }
            alive += if e.split { 1 } else { -1 };
        }
        alive.max(0) as usize
    }

    pub fn mass_at(&self, t: f64) -> f64 {
        self.alive_at(t) as f64 / self.n0 as f64
    }

    /// Exact sup of |mass - 1| over [0, t_end]: the path is constant between
    /// events, so scanning event values suffices.
    pub fn sup_mass_deviation(&self, t_end: f64) -> f64 {
        let n0 = self.n0 as f64;
        let mut alive = self.n0 as isize;
        let mut sup = 0.0f64;
        for e in &self.events {
            if e.time > t_end {
                break;
            }
            alive += if e.split { 1 } else { -1 };
            sup = sup.max((alive as f64 / n0 - 1.0).abs());
        }
        sup
    }

    pub fn extinction_time(&self) -> Option<f64> {
        let mut alive = self.n0 as isize;
        for e in &self.events {
            alive += if e.split { 1 } else { -1 };
            if alive == 0 {
                return Some(e.time);
            }
        }
        None
    }
}

/// Run the mass skeleton to `horizon` or extinction. When `band` is
/// `Some((delta, t_cond))` the run aborts as soon as the mass leaves
/// `(1 - delta, 1 + delta)` at a time <= t_cond, marking the skeleton
/// truncated — only useful for rejection sampling, where such an attempt is
/// discarded anyway.
pub fn simulate_mass_skeleton<R: Rng + ?Sized>(
    n0: usize,
    gamma: f64,
    horizon: f64,
    band: Option<(f64, f64)>,
    rng: &mut R,
) -> MassSkeleton {
    let mut events = Vec::new();
    let mut alive = n0;
    let mut t = 0.0;
    let mut truncated = false;
    while alive > 0 && gamma > 0.0 {
        let rate = gamma * n0 as f64 * alive as f64;
        t += rng.sample(Exp::new(rate).expect("positive rate"));
        if t > horizon {
            break;
        }
        let split = rng.random::<bool>();
        alive = if split { alive + 1 } else { alive - 1 };
        events.push(MassEvent { time: t, split });
        if let Some((delta, t_cond)) = band {
            if t <= t_cond && (alive as f64 / n0 as f64 - 1.0).abs() >= delta {
                truncated = true;
                break;
            }
        }
    }
    MassSkeleton {
        n0,
        gamma,
        horizon,
        events,
        truncated,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdsmRecord {
    pub time: f64,
    pub measure: EmpiricalMeasure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdsmTrajectory {
    pub records: Vec<SdsmRecord>,
    pub skeleton: MassSkeleton,
    pub extinct: bool,
}

/// Spatial replay of a mass skeleton. Positions advance on the dt_max
/// substep grid; branch events only remove a particle or copy one in place,
/// so processing them at frozen positions within a substep keeps the weak
/// error at the Euler order while avoiding a joint-increment draw per event.
pub fn replay_sdsm<R: Rng + ?Sized>(
    skeleton: &MassSkeleton,
    kernel: &KernelSpec,
    initial: &InitialLaw,
    dt_max: f64,
    record_times: &[f64],
    rng: &mut R,
) -> Result<SdsmTrajectory> {
    kernel.validate()?;
    initial.validate()?;
    if skeleton.truncated {
        return Err(Error::InvalidArgument(
            "cannot replay a band-truncated skeleton".into(),
        ));
    }
    if !(dt_max > 0.0) {
        return Err(Error::InvalidArgument("dt_max must be > 0".into()));
    }
    if record_times.windows(2).any(|w| w[0] > w[1])
        || record_times
            .iter()
            .any(|&t| t < 0.0 || t > skeleton.horizon)
    {
        return Err(Error::Config(
            "record_times must be sorted within [0, horizon]".into(),
        ));
    }
    let n0 = skeleton.n0;
    let mass_per = 1.0 / n0 as f64;
    let compact = kernel.epsilon == 0.0;
    let mut sampler = IncrementSampler::new(kernel);
    let mut buf = Vec::new();
    let mut positions: Vec<f64> = (0..n0).map(|_| initial.sample(rng)).collect();
    let mut records = Vec::with_capacity(record_times.len());
    let mut rt_iter = record_times.iter().copied().peekable();
    let mut ev_iter = skeleton.events.iter().peekable();
    let mut t = 0.0;

    loop {
        while rt_iter.peek().is_some_and(|&rt| rt <= t) {
            let rt = rt_iter.next().unwrap();
            records.push(SdsmRecord {
                time: rt,
                measure: EmpiricalMeasure::from_particles(&positions, mass_per, compact),
            });
        }
        if t >= skeleton.horizon {
            break;
        }
        let mut target = rt_iter.peek().copied().unwrap_or(skeleton.horizon);
        target = target.min(t + dt_max).min(skeleton.horizon);
        // branch events in (t, target] at frozen positions
        while ev_iter.peek().is_some_and(|e| e.time <= target) {
            let e = ev_iter.next().unwrap();
            if positions.is_empty() {
                continue;
            }
            let i = rng.random_range(0..positions.len());
            if e.split {
                let x = positions[i];
                positions.push(x);
            } else {
                positions.swap_remove(i);
            }
        }
        if !positions.is_empty() {
            sampler.sample_into(&positions, target - t, rng, &mut buf)?;
            for (p, d) in positions.iter_mut().zip(&buf) {
                *p += d;
            }
            if positions.iter().any(|p| !p.is_finite()) {
                return Err(Error::Numeric("branching system position overflow".into()));
            }
        }
        t = target;
    }
    Ok(SdsmTrajectory {
        records,
        extinct: positions.is_empty(),
        skeleton: skeleton.clone(),
    })
}

/// Simulate the branching system: draw the mass skeleton first, then the
/// spatial replay from the same stream, so a run is reproducible from its
/// seed and the skeleton alone can be re-derived cheaply.
#[allow(clippy::too_many_arguments)]
pub fn simulate_sdsm<R: Rng + ?Sized>(
    n0: usize,
    kernel: &KernelSpec,
    initial: &InitialLaw,
    gamma: f64,
    horizon: f64,
    dt_max: f64,
    record_times: &[f64],
    rng: &mut R,
) -> Result<SdsmTrajectory> {
    if n0 < 2 {
        return Err(Error::InvalidArgument("n0 must be >= 2".into()));
    }
    if gamma < 0.0 || !(horizon >= 0.0) {
        return Err(Error::InvalidArgument("need gamma >= 0, horizon >= 0".into()));
    }
    let skeleton = simulate_mass_skeleton(n0, gamma, horizon, None, rng);
    replay_sdsm(&skeleton, kernel, initial, dt_max, record_times, rng)
}

/// Rejection filter for the conditioning limit: keep trajectories whose mass
/// stays within (1 - delta, 1 + delta) up to t_cond. Returns kept indices and
/// the acceptance rate.
pub fn condition_total_mass(
    ensemble: &[SdsmTrajectory],
    delta: f64,
    t_cond: f64,
) -> Result<(Vec<usize>, f64)> {
    if !(delta > 0.0) || !(t_cond >= 0.0) || ensemble.is_empty() {
        return Err(Error::InvalidArgument(
            "conditioning needs delta > 0, t_cond >= 0, nonempty ensemble".into(),
        ));
    }
    let kept: Vec<usize> = ensemble
        .iter()
        .enumerate()
        .filter(|(_, tr)| tr.skeleton.sup_mass_deviation(t_cond) < delta)
        .map(|(i, _)| i)
        .collect();
    if kept.is_empty() {
        return Err(Error::ZeroAcceptance);
    }
    let rate = kept.len() as f64 / ensemble.len() as f64;
    Ok((kept, rate))
}
