//! Synthetic closed-loop motor-drive population.
//!
//! Stands in for a hardware dataset: each drive is a PD-controlled inertia
//! behind a high-ratio gearbox whose kinematic error injects a sinusoidal
//! current disturbance at once and twice the gearbox input frequency.
//! Episodes follow smoothed trapezoidal velocity trajectories through
//! pseudorandom position checkpoints and are recorded at 1 kHz.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Asymmetric inertial load: gravity torque `amplitude * sin(theta + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadParams {
    pub amplitude: f64,
    pub phase: f64,
}

/// Physical and controller parameters of one synthetic drive.
///
/// Angles are radians at the gearbox output; current is a fraction of the
/// drive's full-scale current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    /// Inertia (normalized units).
    pub j: f64,
    /// Viscous damping.
    pub b: f64,
    /// Torque-per-current gain.
    pub kt: f64,
    /// Position loop gain.
    pub kp: f64,
    /// Velocity loop gain.
    pub kd: f64,
    /// Gearbox reduction ratio.
    pub r: f64,
    /// Fundamental disturbance amplitude, fraction of full-scale current.
    pub a1: f64,
    /// Second-harmonic disturbance amplitude.
    pub a2: f64,
    /// Fundamental disturbance phase, radians.
    pub phi1: f64,
    /// Second-harmonic disturbance phase, radians.
    pub phi2: f64,
    /// Optional asymmetric inertial load for the loaded condition.
    pub load: Option<LoadParams>,
    /// Position measurement noise, radians (standard deviation).
    pub noise_std: f64,
}

impl DriveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.j > 0.0 && self.kt > 0.0 && self.kp > 0.0 && self.kd > 0.0) {
            return Err(Error::InvalidParam(
                "J, kt, kp, kd must be positive".into(),
            ));
        }
        if self.a1 < 0.0 || self.a2 < 0.0 {
            return Err(Error::InvalidParam("a1, a2 must be nonnegative".into()));
        }
        if !(self.r > 0.0) {
            return Err(Error::InvalidParam("r must be positive".into()));
        }
        Ok(())
    }
}

/// Simulator constants shared by the whole population. Chosen so that the
/// closed loop is well damped and the gear-mesh line is plainly visible in
/// the velocity-error spectrum at the maximum speed; all overridable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub j: f64,
    pub b: f64,
    pub kt: f64,
    pub kp: f64,
    pub kd: f64,
    pub r: f64,
    pub a1: f64,
    pub a2: f64,
    pub load_amplitude: f64,
    pub noise_std: f64,
    /// Maximum speed at the gearbox output, rad/s.
    pub vmax: f64,
    /// Maximum acceleration, rad/s^2.
    pub amax: f64,
    pub dt: f64,
    /// Relative perturbation applied per drive to J, b, kt.
    pub spread_physical: f64,
    /// Relative perturbation applied per drive to a1, a2.
    pub spread_amplitude: f64,
    /// Disturbance amplitude multiplier for outlier drives.
    pub outlier_factor: f64,
    /// Velocity-measurement filter cutoff, Hz.
    pub vel_filter_hz: f64,
    pub checkpoints_per_episode: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            j: 0.1,
            b: 0.05,
            kt: 1.0,
            kp: 400.0,
            kd: 40.0,
            r: 100.0,
            a1: 0.1,
            a2: 0.02,
            load_amplitude: 0.2,
            noise_std: 1e-5,
            vmax: std::f64::consts::PI,
            amax: 4.0 * std::f64::consts::PI,
            dt: 1e-3,
            spread_physical: 0.03,
            spread_amplitude: 0.2,
            outlier_factor: 5.0,
            vel_filter_hz: 200.0,
            checkpoints_per_episode: 10,
        }
    }
}

/// One recorded episode: reference and measured signals at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub t: Vec<f64>,
    pub ref_pos: Vec<f64>,
    pub ref_vel: Vec<f64>,
    pub meas_pos: Vec<f64>,
    pub meas_vel: Vec<f64>,
    pub current: Vec<f64>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.t.len() > 1 {
            self.t[1] - self.t[0]
        } else {
            1e-3
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if [
            self.ref_pos.len(),
            self.ref_vel.len(),
            self.meas_pos.len(),
            self.meas_vel.len(),
            self.current.len(),
        ]
        .iter()
        .any(|l| *l != n)
        {
            return Err(Error::dim("Episode", "channel lengths differ"));
        }
        if n > 2 {
            let dt = self.dt();
            for w in self.t.windows(2) {
                if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                    return Err(Error::InvalidParam("non-uniform sample times".into()));
                }
            }
        }
        Ok(())
    }
}

/// Smoothed trapezoidal velocity trajectory through absolute position
/// checkpoints, starting at rest at position 0.
///
/// Returns `(ref_pos, ref_vel)` sampled at `dt`. The discrete trapezoid
/// integral of `ref_vel` lands on every checkpoint exactly (to rounding), the
/// velocity is bounded by `vmax` and the sample-to-sample velocity increment
/// by `amax * dt`.
pub fn gen_trajectory(
    checkpoints: &[f64],
    vmax: f64,
    amax: f64,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if checkpoints.is_empty() {
        return Err(Error::Trajectory("no checkpoints".into()));
    }
    if !(vmax > 0.0) || !(amax > 0.0) || !(dt > 0.0) {
        return Err(Error::Trajectory(
            "vmax, amax and dt must be positive".into(),
        ));
    }
    if checkpoints.iter().any(|c| !c.is_finite()) {
        return Err(Error::Trajectory("non-finite checkpoint".into()));
    }

    let dwell = (0.25 / dt).round() as usize;
    // Jerk smoothing window, ~50 ms, odd length.
    let smooth = {
        let l = (0.05 / dt).round() as usize | 1;
        l.max(1)
    };

    let mut vel: Vec<f64> = vec![0.0; dwell];
    let mut pos_cursor = 0.0f64;
    for &target in checkpoints {
        let d = target - pos_cursor;
        let move_samples = move_profile(d, vmax, amax, dt)?;
        if vel.len() + move_samples.len() > 50_000_000 {
            return Err(Error::Trajectory(
                "trajectory exceeds the sample budget; checkpoints unreachable at these limits"
                    .into(),
            ));
        }
        vel.extend_from_slice(&move_samples);
        vel.extend(std::iter::repeat(0.0).take(dwell));
        pos_cursor = target;
    }

    // Centered moving average with zero extension preserves the plain sum of
    // the sequence, and the trapezoid integral equals that sum because the
    // profile is zero at both ends.
    let vel = moving_average(&vel, smooth);

    let mut pos = Vec::with_capacity(vel.len());
    let mut p = 0.0f64;
    pos.push(p);
    for k in 1..vel.len() {
        p += 0.5 * dt * (vel[k - 1] + vel[k]);
        pos.push(p);
    }
    Ok((pos, vel))
}

/// Rest-to-rest velocity samples for a signed displacement `d` whose discrete
/// trapezoid integral equals `d` exactly.
fn move_profile(d: f64, vmax: f64, amax: f64, dt: f64) -> Result<Vec<f64>> {
    let dist = d.abs();
    if dist < 1e-15 {
        return Ok(vec![]);
    }
    let sign = d.signum();

    // Samples needed to ramp to vmax at amax.
    let n_ramp_full = (vmax / (amax * dt)).ceil().max(1.0) as usize;
    let ramp_area_full = vmax * (n_ramp_full as f64 * dt); // both ramps combined

    if dist >= ramp_area_full {
        // Trapezoid: ramp to vmax, cruise, ramp down. The cruise velocity is
        // trimmed slightly below vmax so the integral is exact.
        let cruise_area = dist - ramp_area_full;
        let n_cruise = (cruise_area / (vmax * dt)).ceil() as usize;
        let v_cruise = if n_cruise > 0 {
            cruise_area / (n_cruise as f64 * dt)
        } else {
            vmax
        };
        let mut v = Vec::with_capacity(2 * n_ramp_full + n_cruise + 2);
        for k in 1..=n_ramp_full {
            v.push(sign * vmax * k as f64 / n_ramp_full as f64);
        }
        v.extend(std::iter::repeat(sign * v_cruise).take(n_cruise));
        for k in (0..n_ramp_full).rev() {
            v.push(sign * vmax * k as f64 / n_ramp_full as f64);
        }
        Ok(v)
    } else {
        // Triangle: pick the number of ramp samples from the accel limit,
        // then solve the peak velocity for an exact integral.
        let t_half = (dist / amax).sqrt();
        let n_half = (t_half / dt).ceil().max(1.0) as usize;
        let v_peak = dist / (n_half as f64 * dt);
        let mut v = Vec::with_capacity(2 * n_half);
        for k in 1..=n_half {
            v.push(sign * v_peak * k as f64 / n_half as f64);
        }
        for k in (0..n_half).rev() {
            v.push(sign * v_peak * k as f64 / n_half as f64);
        }
        Ok(v)
    }
}

fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 || x.is_empty() {
        return x.to_vec();
    }
    let half = window / 2;
    let n = x.len();
    let mut out = vec![0.0; n + 2 * half];
    let inv = 1.0 / window as f64;
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..window {
            let idx = (k + j) as isize - 2 * half as isize;
            if idx >= 0 && (idx as usize) < n {
                acc += x[idx as usize];
            }
        }
        *o = acc * inv;
    }
    out
}

/// Integrate one drive over a reference trajectory.
///
/// PD current command at the sample rate from measured position/velocity,
/// explicit integration at `dt/10` substeps, gear-mesh disturbance
/// `a1 sin(r theta + phi1) + a2 sin(2 r theta + phi2)` applied as an input
/// current, measured position with additive noise, measured velocity via a
/// first-order-filtered finite difference.
pub fn simulate_drive(
    p: &DriveParams,
    ref_pos: &[f64],
    ref_vel: &[f64],
    dt: f64,
    loaded: bool,
    vel_filter_hz: f64,
    seed: u64,
) -> Result<Episode> {
    p.validate()?;
    if ref_pos.len() != ref_vel.len() {
        return Err(Error::dim("simulate_drive", "reference channel lengths"));
    }
    let n = ref_pos.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let load = if loaded {
        Some(p.load.ok_or_else(|| {
            Error::InvalidParam("loaded simulation requires load parameters".into())
        })?)
    } else {
        None
    };

    let substeps = 10usize;
    let h = dt / substeps as f64;
    let alpha = 1.0 - (-2.0 * std::f64::consts::PI * vel_filter_hz * dt).exp();

    let mut theta = if n > 0 { ref_pos[0] } else { 0.0 };
    let mut omega = if n > 0 { ref_vel[0] } else { 0.0 };

    let mut t = Vec::with_capacity(n);
    let mut meas_pos = Vec::with_capacity(n);
    let mut meas_vel = Vec::with_capacity(n);
    let mut current = Vec::with_capacity(n);

    let mut prev_meas = theta + p.noise_std * normal(&mut rng);
    let mut vel_f = if n > 0 { ref_vel[0] } else { 0.0 };

    for k in 0..n {
        let (mp, mv) = if k == 0 {
            (prev_meas, vel_f)
        } else {
            let mp = theta + p.noise_std * normal(&mut rng);
            let raw = (mp - prev_meas) / dt;
            vel_f += alpha * (raw - vel_f);
            prev_meas = mp;
            (mp, vel_f)
        };

        let i_cmd = p.kp * (ref_pos[k] - mp) + p.kd * (ref_vel[k] - mv);

        t.push(k as f64 * dt);
        meas_pos.push(mp);
        meas_vel.push(mv);
        current.push(i_cmd);

        // Advance the plant over [k dt, (k+1) dt) holding i_cmd.
        for _ in 0..substeps {
            let i_dist = p.a1 * (p.r * theta + p.phi1).sin() + p.a2 * (2.0 * p.r * theta + p.phi2).sin();
            let tau_load = load.map_or(0.0, |l| l.amplitude * (theta + l.phase).sin());
            let accel = (p.kt * (i_cmd + i_dist) - p.b * omega - tau_load) / p.j;
            omega += h * accel;
            theta += h * omega;
        }
        if !(theta.is_finite() && omega.is_finite()) {
            return Err(Error::NonFinite { step: k });
        }
    }

    Ok(Episode {
        t,
        ref_pos: ref_pos.to_vec(),
        ref_vel: ref_vel.to_vec(),
        meas_pos,
        meas_vel,
        current,
    })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

/// Deterministic sub-seed derivation (splitmix64 over the master seed and a
/// stream index) so per-drive and per-episode streams are order-independent.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58476D1CE4E5B9))
        .wrapping_add(0x94D049BB133111EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Generate a population of `n` drives; the last `outliers` drives get their
/// disturbance amplitudes multiplied by `cfg.outlier_factor` (applied to the
/// nominal amplitudes, not the perturbed ones).
pub fn gen_population(n: usize, seed: u64, outliers: usize, cfg: &SimConfig) -> Result<Vec<DriveParams>> {
    if n < 1 {
        return Err(Error::InvalidParam("population size must be >= 1".into()));
    }
    if outliers > n {
        return Err(Error::InvalidParam("more outliers than drives".into()));
    }
    let mut population = Vec::with_capacity(n);
    for drive in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, drive as u64));
        let rel = |rng: &mut ChaCha8Rng, spread: f64| 1.0 + rng.gen_range(-spread..=spread);
        let is_outlier = drive >= n - outliers;
        let (a1, a2) = if is_outlier {
            (cfg.a1 * cfg.outlier_factor, cfg.a2 * cfg.outlier_factor)
        } else {
            (
                cfg.a1 * rel(&mut rng, cfg.spread_amplitude),
                cfg.a2 * rel(&mut rng, cfg.spread_amplitude),
            )
        };
        population.push(DriveParams {
            j: cfg.j * rel(&mut rng, cfg.spread_physical),
            b: cfg.b * rel(&mut rng, cfg.spread_physical),
            kt: cfg.kt * rel(&mut rng, cfg.spread_physical),
            kp: cfg.kp,
            kd: cfg.kd,
            r: cfg.r,
            a1,
            a2,
            phi1: rng.gen_range(0.0..2.0 * std::f64::consts::PI),
            phi2: rng.gen_range(0.0..2.0 * std::f64::consts::PI),
            load: Some(LoadParams {
                amplitude: cfg.load_amplitude * rel(&mut rng, 0.1),
                phase: rng.gen_range(0.0..2.0 * std::f64::consts::PI),
            }),
            noise_std: cfg.noise_std,
        });
    }
    Ok(population)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Unloaded,
    Loaded,
}

impl Condition {
    pub fn dir_name(self) -> &'static str {
        match self {
            Condition::Unloaded => "unloaded",
            Condition::Loaded => "loaded",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One episode entry in the dataset manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub drive: usize,
    pub episode: usize,
    pub condition: Condition,
    pub split: Split,
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub n_drives: usize,
    pub episodes_per_drive: usize,
    pub seed: u64,
    pub outliers: usize,
    pub dt: f64,
    pub episodes: Vec<EpisodeEntry>,
}

impl Manifest {
    pub fn select(
        &self,
        drive: usize,
        condition: Condition,
        split: Split,
    ) -> impl Iterator<Item = &EpisodeEntry> {
        self.episodes.iter().filter(move |e| {
            e.drive == drive && e.condition == condition && e.split == split
        })
    }
}

/// Write a full synthetic dataset: per-episode CSVs, the population
/// parameters and a manifest with the train/test split. Half of each drive's
/// episodes are loaded; within each condition the last tenth (at least one)
/// are test episodes.
pub fn write_dataset(
    dir: &Path,
    n_drives: usize,
    episodes_per_drive: usize,
    seed: u64,
    outliers: usize,
    cfg: &SimConfig,
) -> Result<Manifest> {
    if episodes_per_drive < 2 || episodes_per_drive % 2 != 0 {
        return Err(Error::InvalidParam(
            "episodes_per_drive must be even and >= 2".into(),
        ));
    }
    let population = gen_population(n_drives, seed, outliers, cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    write_json(&dir.join("params.json"), &(&population, cfg))?;

    let per_condition = episodes_per_drive / 2;
    let n_test = (per_condition / 10).max(1).min(per_condition.saturating_sub(1)).max(
        if per_condition == 1 { 1 } else { 1 },
    );

    let mut entries = Vec::new();
    for (drive, params) in population.iter().enumerate() {
        for condition in [Condition::Unloaded, Condition::Loaded] {
            let cond_offset = match condition {
                Condition::Unloaded => 0,
                Condition::Loaded => per_condition,
            };
            let subdir = dir
                .join(format!("drive_{drive:02}"))
                .join(condition.dir_name());
            std::fs::create_dir_all(&subdir)
                .map_err(|e| Error::io(subdir.display().to_string(), e))?;
            for ep in 0..per_condition {
                let episode_index = cond_offset + ep;
                let stream = (drive as u64) << 20 | episode_index as u64;
                let traj_seed = derive_seed(seed, stream.wrapping_add(0x5151_0000));
                let noise_seed = derive_seed(seed, stream.wrapping_add(0xA0A0_0000));
                let mut rng = ChaCha8Rng::seed_from_u64(traj_seed);
                let checkpoints: Vec<f64> = (0..cfg.checkpoints_per_episode)
                    .map(|_| rng.gen_range(-2.0 * std::f64::consts::PI..=2.0 * std::f64::consts::PI))
                    .collect();
                let (ref_pos, ref_vel) = gen_trajectory(&checkpoints, cfg.vmax, cfg.amax, cfg.dt)?;
                let episode = simulate_drive(
                    params,
                    &ref_pos,
                    &ref_vel,
                    cfg.dt,
                    condition == Condition::Loaded,
                    cfg.vel_filter_hz,
                    noise_seed,
                )?;
                let file = subdir.join(format!("ep{ep:03}.csv"));
                write_episode(&file, &episode)?;
                let split = if ep >= per_condition - n_test {
                    Split::Test
                } else {
                    Split::Train
                };
                entries.push(EpisodeEntry {
                    drive,
                    episode: ep,
                    condition,
                    split,
                    path: file
                        .strip_prefix(dir)
                        .unwrap_or(&file)
                        .to_string_lossy()
                        .into_owned(),
                });
            }
        }
    }

    let manifest = Manifest {
        n_drives,
        episodes_per_drive,
        seed,
        outliers,
        dt: cfg.dt,
        episodes: entries,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::MalformedJson {
            path: path.display().to_string(),
            details: e.to_string(),
        })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedJson {
        path: path.display().to_string(),
        details: e.to_string(),
    })
}

const EPISODE_HEADER: &str = "t,ref_pos,ref_vel,meas_pos,meas_vel,current";

/// Write one episode CSV with full-precision (shortest round-trip) floats.
pub fn write_episode(path: &Path, ep: &Episode) -> Result<()> {
    ep.validate()?;
    let mut out = String::with_capacity(ep.len() * 64 + 64);
    out.push_str(EPISODE_HEADER);
    out.push('\n');
    for k in 0..ep.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            ep.t[k], ep.ref_pos[k], ep.ref_vel[k], ep.meas_pos[k], ep.meas_vel[k], ep.current[k]
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read one episode CSV; malformed rows report their 1-based line number.
pub fn read_episode(path: &Path) -> Result<Episode> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines().enumerate();
    let display = path.display().to_string();
    match lines.next() {
        Some((_, header)) if header.trim_end() == EPISODE_HEADER => {}
        Some((_, header)) => {
            return Err(Error::MalformedFile {
                path: display,
                line: 1,
                details: format!("unexpected header {header:?}"),
            })
        }
        None => {
            return Err(Error::MalformedFile {
                path: display,
                line: 1,
                details: "empty file".into(),
            })
        }
    }
    let mut ep = Episode {
        t: vec![],
        ref_pos: vec![],
        ref_vel: vec![],
        meas_pos: vec![],
        meas_vel: vec![],
        current: vec![],
    };
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next = |name: &str| -> Result<f64> {
            fields
                .next()
                .ok_or_else(|| Error::MalformedFile {
                    path: display.clone(),
                    line: lineno,
                    details: format!("missing field {name}"),
                })?
                .parse::<f64>()
                .map_err(|e| Error::MalformedFile {
                    path: display.clone(),
                    line: lineno,
                    details: format!("bad {name}: {e}"),
                })
        };
        ep.t.push(next("t")?);
        ep.ref_pos.push(next("ref_pos")?);
        ep.ref_vel.push(next("ref_vel")?);
        ep.meas_pos.push(next("meas_pos")?);
        ep.meas_vel.push(next("meas_vel")?);
        ep.current.push(next("current")?);
        if fields.next().is_some() {
            return Err(Error::MalformedFile {
                path: display,
                line: lineno,
                details: "trailing fields".into(),
            });
        }
    }
    ep.validate()?;
    Ok(ep)
}

/// Read the manifest of a dataset directory.
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Err(Error::MissingArtifact {
            artifact: path.display().to_string(),
            stage: "simulate".into(),
        });
    }
    read_json(&path)
}

/// Read the population parameters of a dataset directory.
pub fn read_population(dir: &Path) -> Result<(Vec<DriveParams>, SimConfig)> {
    let path = dir.join("params.json");
    if !path.exists() {
        return Err(Error::MissingArtifact {
            artifact: path.display().to_string(),
            stage: "simulate".into(),
        });
    }
    read_json(&path)
}

/// Load the episodes of one (drive, condition, split) selection.
pub fn load_episodes(
    dir: &Path,
    manifest: &Manifest,
    drive: usize,
    condition: Condition,
    split: Split,
) -> Result<Vec<Episode>> {
    manifest
        .select(drive, condition, split)
        .map(|e| read_episode(&dir.join(&e.path)))
        .collect()
}

pub fn dataset_dir(root: &Path) -> PathBuf {
    root.join("dataset")
}
