//! Explicit solver for the density equation of the epsilon > 0 process on a
//! periodic interval [-L, L].
//!
//! Per step: (i) individual diffusion (eps^2 / 2) * discrete Laplacian;
//! (ii) Wright-Fisher resampling noise: Gaussian sqrt(gamma Z) v kicks in
//! well-occupied cells, the exact critical-Feller transition (compound
//! Poisson-Gamma) in sparse ones so that empty cells stay empty; the
//! mean-correction term is realized by dividing by the post-kick mass, which
//! is the same noise to leading order but keeps the field nonnegative;
//! (iii) common-noise transport: the displacement field u = (h conv w) is
//! accumulated per cell and the field is pushed forward by a conservative
//! deposit once the displacement reaches a few cells, because re-gridding
//! sqrt(dt)-sized shifts every step injects spurious diffusion of order
//! dx^2 per step. The environment part rho(0)/2 of the generator is carried
//! by the random transport itself, so it must not appear in (i).

use rand::Rng;
use rand_distr::{Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::initial::InitialLaw;
use crate::kernel::KernelSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityField {
    /// Half-width of the periodic domain [-L, L).
    pub l: f64,
    pub dx: f64,
    /// Density values at x_k = -L + k dx, k = 0..n-1.
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    /// Discretize a named initial law on [-L, L), normalized to unit mass.
    pub fn from_initial_law(law: &InitialLaw, l: f64, dx: f64) -> Result<Self> {
        if !(l > 0.0 && dx > 0.0 && dx < l) {
            return Err(Error::InvalidArgument("need 0 < dx < L".into()));
        }
        law.validate()?;
        let n = (2.0 * l / dx).round() as usize;
        let x = |k: usize| -l + k as f64 * dx;
        let mut values = vec![0.0; n];
        match *law {
            InitialLaw::Point { x: p } => {
                let k = (((p + l) / dx).round() as isize).rem_euclid(n as isize) as usize;
                values[k] = 1.0 / dx;
            }
            InitialLaw::TwoAtoms { x1, p, x2 } => {
                let k1 = (((x1 + l) / dx).round() as isize).rem_euclid(n as isize) as usize;
                let k2 = (((x2 + l) / dx).round() as isize).rem_euclid(n as isize) as usize;
                values[k1] += p / dx;
                values[k2] += (1.0 - p) / dx;
            }
            InitialLaw::Uniform { a, b } => {
                for (k, v) in values.iter_mut().enumerate() {
                    let xk = x(k);
                    if xk >= a && xk <= b {
                        *v = 1.0 / (b - a);
                    }
                }
            }
            InitialLaw::Normal { mean, sd } => {
                if sd <= 0.0 {
                    return Err(Error::InvalidArgument(
                        "degenerate normal: use the point law".into(),
                    ));
                }
                let c = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
                for (k, v) in values.iter_mut().enumerate() {
                    let z = (x(k) - mean) / sd;
                    *v = c * (-0.5 * z * z).exp();
                }
            }
        }
        let mut field = DensityField {
            l,
            dx,
            values,
            time: 0.0,
        };
        field.renormalize()?;
        Ok(field)
    }

    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        let (l, dx) = (self.l, self.dx);
        (0..self.values.len()).map(move |k| -l + k as f64 * dx)
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx
    }

    fn renormalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Numeric(format!("field mass degenerate: {m}")));
        }
        let s = 1.0 / m;
        for v in &mut self.values {
            *v *= s;
        }
        Ok(())
    }
}

/// Quadrature of phi against the field (rectangle rule, exact trapezoid on
/// the periodic grid).
pub fn density_moments<F: Fn(f64) -> f64>(field: &DensityField, phi: F) -> f64 {
    field
        .grid()
        .zip(&field.values)
        .map(|(x, &z)| z * phi(x))
        .sum::<f64>()
        * field.dx
}

/// One step's worth of the two independent driving sheets, cell-wise
/// N(0, dt/dx) increments.
pub struct NoiseSlice {
    pub v_incr: Vec<f64>,
    pub w_incr: Vec<f64>,
}

impl NoiseSlice {
    pub fn draw<R: Rng + ?Sized>(n: usize, dt: f64, dx: f64, rng: &mut R) -> Self {
        let sd = (dt / dx).sqrt();
        let mut sample = |_| sd * rng.sample::<f64, _>(StandardNormal);
        NoiseSlice {
            v_incr: (0..n).map(&mut sample).collect(),
            w_incr: (0..n).map(&mut sample).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpdeTrajectory {
    pub snapshots: Vec<DensityField>,
    /// Steps that had to clip stray negative mass beyond 1e-9.
    pub mass_drift_warnings: usize,
    /// Largest mass seen in the outermost cells, times dx; should stay tiny.
    pub max_boundary_mass: f64,
}

pub fn stability_bound(dx: f64, rho_eps: f64) -> f64 {
    0.5 * dx * dx / (2.0 * rho_eps)
}

/// Pending common-noise displacement is flushed once any cell has moved this
/// many cells; remapping more often re-grids sub-cell shifts and acts as
/// artificial diffusion, less often stretches the frozen-coefficient window.
const REMAP_CELLS: f64 = 3.0;

/// Gaussian resampling kicks are valid once the expected offspring count
/// Z / (q dt) is this large; below it the exact Feller transition is used.
const GAUSSIAN_OCCUPANCY: f64 = 100.0;

/// Push every cell's mass along its accumulated displacement, depositing
/// linearly between the two enclosing cells (conservative, nonnegative).
fn remap(values: &mut Vec<f64>, scratch: &mut Vec<f64>, shift: &mut [f64], l: f64, dx: f64) {
    let n = values.len();
    scratch.clear();
    scratch.resize(n, 0.0);
    for (k, (&z, u)) in values.iter().zip(shift.iter_mut()).enumerate() {
        let p = (-l + k as f64 * dx + *u + l) / dx;
        let kf = p.floor();
        let f = p - kf;
        let kf = (kf as isize).rem_euclid(n as isize) as usize;
        scratch[kf] += (1.0 - f) * z;
        scratch[(kf + 1) % n] += f * z;
        *u = 0.0;
    }
    std::mem::swap(values, scratch);
}

/// Integrate the density field to `horizon`, snapshotting at `record_times`
/// (sorted, within [0, horizon]). Steps have length `dt` except where
/// truncated to hit record times exactly.
pub fn solve_density<R: Rng + ?Sized>(
    initial: &DensityField,
    kernel: &KernelSpec,
    gamma: f64,
    horizon: f64,
    dt: f64,
    record_times: &[f64],
    rng: &mut R,
) -> Result<SpdeTrajectory> {
    kernel.validate()?;
    if kernel.epsilon <= 0.0 {
        return Err(Error::InvalidArgument(
            "density solver requires epsilon > 0".into(),
        ));
    }
    if gamma < 0.0 || !(horizon >= 0.0) {
        return Err(Error::InvalidArgument("need gamma >= 0, horizon >= 0".into()));
    }
    if record_times.windows(2).any(|w| w[0] > w[1])
        || record_times.iter().any(|&t| t < 0.0 || t > horizon)
    {
        return Err(Error::Config(
            "record_times must be sorted within [0, horizon]".into(),
        ));
    }
    let rho_eps = kernel.rho_eps();
    let bound = stability_bound(initial.dx, rho_eps);
    if !(dt > 0.0) || dt > bound {
        return Err(Error::Unstable { dt, bound });
    }

    let n = initial.values.len();
    let dx = initial.dx;
    let eps2 = kernel.epsilon * kernel.epsilon;
    // circulant kernel table: h at signed grid offsets, minimal periodic image
    let span = n as f64 * dx;
    let h_table: Vec<f64> = (0..n)
        .map(|d| {
            let mut r = d as f64 * dx;
            if r > span / 2.0 {
                r -= span;
            }
            kernel.h_eval(r)
        })
        .collect();
    let h_is_zero = h_table.iter().all(|&h| h == 0.0);

    let mut field = initial.clone();
    let mut traj = SpdeTrajectory {
        snapshots: Vec::new(),
        mass_drift_warnings: 0,
        max_boundary_mass: 0.0,
    };
    let mut records = record_times.iter().copied().peekable();
    let mut new = vec![0.0; n];
    let mut shift = vec![0.0; n];
    let mut max_shift = 0.0f64;
    // q dt is the per-step Feller offspring mass unit: the exact transition of
    // dZ = sqrt(gamma Z / dx) dB over dt is Gamma(Poisson(Z / (q dt)), q dt)
    let q = gamma / (2.0 * dx);

    loop {
        let at_record = records.peek().is_some_and(|&rt| rt <= field.time);
        if at_record || field.time >= horizon {
            if max_shift > 0.0 {
                remap(&mut field.values, &mut new, &mut shift, initial.l, dx);
                field.renormalize()?;
                max_shift = 0.0;
            }
            while records.peek().is_some_and(|&rt| rt <= field.time) {
                records.next();
                traj.snapshots.push(field.clone());
            }
            if field.time >= horizon {
                break;
            }
        }
        let mut step = dt.min(horizon - field.time);
        if let Some(&rt) = records.peek() {
            step = step.min(rt - field.time);
        }
        let noise = NoiseSlice::draw(n, step, dx, rng);

        // individual diffusion only: the environment part of the generator is
        // carried by the random transport below
        {
            let z = &field.values;
            for k in 0..n {
                let km = if k == 0 { n - 1 } else { k - 1 };
                let kp = if k == n - 1 { 0 } else { k + 1 };
                new[k] = z[k] + step * 0.5 * eps2 * (z[kp] - 2.0 * z[k] + z[km]) / (dx * dx);
            }
            std::mem::swap(&mut field.values, &mut new);
        }

        // resampling noise; the weak-form mean correction is the subsequent
        // renormalization (post-kick mass is exactly 1 + integral of kicks)
        if gamma > 0.0 {
            let mut clipped = 0.0;
            for (zk, &vk) in field.values.iter_mut().zip(&noise.v_incr) {
                if *zk <= 0.0 {
                    *zk = 0.0;
                    continue;
                }
                let occupancy = *zk / (q * step);
                if occupancy > GAUSSIAN_OCCUPANCY {
                    *zk += (gamma * *zk).sqrt() * vk;
                    if *zk < 0.0 {
                        clipped -= *zk;
                        *zk = 0.0;
                    }
                } else {
                    let count = rng.sample(Poisson::new(occupancy).expect("positive rate"));
                    *zk = if count > 0.0 {
                        rng.sample(Gamma::new(count, q * step).expect("valid gamma"))
                    } else {
                        0.0
                    };
                }
            }
            if clipped * dx > 1e-9 {
                traj.mass_drift_warnings += 1;
            }
            field.renormalize()?;
        }

        // accumulate the common-noise displacement u = h conv w per cell
        if !h_is_zero {
            for (k, u) in shift.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, &wj) in noise.w_incr.iter().enumerate() {
                    let d = if k >= j { k - j } else { n - (j - k) };
                    acc += h_table[d] * wj;
                }
                *u += acc * dx;
                max_shift = max_shift.max(u.abs());
            }
        }
        field.time += step;

        if max_shift >= REMAP_CELLS * dx {
            remap(&mut field.values, &mut new, &mut shift, initial.l, dx);
            field.renormalize()?;
            max_shift = 0.0;
        }
        if field.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "field blew up at t = {}",
                field.time
            )));
        }
        let boundary = (field.values[0]
            + field.values[1]
            + field.values[n - 2]
            + field.values[n - 1])
            * dx;
        traj.max_boundary_mass = traj.max_boundary_mass.max(boundary);
    }
    Ok(traj)
}
