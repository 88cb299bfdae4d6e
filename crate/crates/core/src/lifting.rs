//! Lifting functions, retraction, and gearbox phase calibration.
//!
//! Two lifting families are provided: the identity (`Linear`) lifting and the
//! drive lifting that appends `sin(r * theta + phi)` to the state. The
//! original states always sit at the head of the lifted state, so retraction
//! is a truncation.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Episode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LiftingKind {
    Linear,
    /// Appends `sin(r * x_0 + phi)` where `x_0` is the position coordinate.
    DriveSinusoid { r: f64, phi: f64 },
}

/// Lifting configuration: the kind plus the original state/input dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftingConfig {
    #[serde(flatten)]
    pub kind: LiftingKind,
    pub state_dim: usize,
    pub input_dim: usize,
}

impl LiftingConfig {
    pub fn linear(state_dim: usize, input_dim: usize) -> Self {
        Self {
            kind: LiftingKind::Linear,
            state_dim,
            input_dim,
        }
    }

    pub fn drive_sinusoid(r: f64, phi: f64, state_dim: usize, input_dim: usize) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::InvalidParam("reduction ratio r must be > 0".into()));
        }
        if !(0.0..2.0 * std::f64::consts::PI).contains(&phi) {
            return Err(Error::InvalidParam(format!(
                "phi must lie in [0, 2pi), got {phi}"
            )));
        }
        if state_dim == 0 {
            return Err(Error::InvalidParam(
                "drive lifting needs at least the position state".into(),
            ));
        }
        Ok(Self {
            kind: LiftingKind::DriveSinusoid { r, phi },
            state_dim,
            input_dim,
        })
    }

    /// Replace the calibrated phase (drive lifting only).
    pub fn with_phi(mut self, phi: f64) -> Self {
        if let LiftingKind::DriveSinusoid { r, .. } = self.kind {
            self.kind = LiftingKind::DriveSinusoid {
                r,
                phi: wrap_angle(phi),
            };
        }
        self
    }

    /// Dimension of the state-dependent lifted vector.
    pub fn p_theta(&self) -> usize {
        match self.kind {
            LiftingKind::Linear => self.state_dim,
            LiftingKind::DriveSinusoid { .. } => self.state_dim + 1,
        }
    }

    /// Dimension of the input-dependent lifted vector.
    pub fn p_upsilon(&self) -> usize {
        self.input_dim
    }

    pub fn p_total(&self) -> usize {
        self.p_theta() + self.p_upsilon()
    }
}

/// Lifted sample: state-dependent part and input-dependent part.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedState {
    pub theta_part: DVector<f64>,
    pub upsilon_part: DVector<f64>,
}

/// Lift a (state, input) sample.
pub fn lift(cfg: &LiftingConfig, x: &[f64], u: &[f64]) -> Result<LiftedState> {
    if x.len() != cfg.state_dim {
        return Err(Error::dim(
            "lift",
            format!("state has {} entries, expected {}", x.len(), cfg.state_dim),
        ));
    }
    if u.len() != cfg.input_dim {
        return Err(Error::dim(
            "lift",
            format!("input has {} entries, expected {}", u.len(), cfg.input_dim),
        ));
    }
    let theta_part = lift_state(cfg, x)?;
    Ok(LiftedState {
        theta_part,
        upsilon_part: DVector::from_column_slice(u),
    })
}

/// State-dependent lifting only.
pub fn lift_state(cfg: &LiftingConfig, x: &[f64]) -> Result<DVector<f64>> {
    if x.len() != cfg.state_dim {
        return Err(Error::dim("lift_state", "state length"));
    }
    match cfg.kind {
        LiftingKind::Linear => Ok(DVector::from_column_slice(x)),
        LiftingKind::DriveSinusoid { r, phi } => {
            let mut v = DVector::zeros(cfg.state_dim + 1);
            for (i, xi) in x.iter().enumerate() {
                v[i] = *xi;
            }
            v[cfg.state_dim] = (r * x[0] + phi).sin();
            Ok(v)
        }
    }
}

/// Recover the original state from the head of the lifted state.
pub fn retract(cfg: &LiftingConfig, theta_part: &[f64]) -> Result<DVector<f64>> {
    if theta_part.len() != cfg.p_theta() {
        return Err(Error::dim(
            "retract",
            format!(
                "lifted state has {} entries, expected {}",
                theta_part.len(),
                cfg.p_theta()
            ),
        ));
    }
    Ok(DVector::from_column_slice(&theta_part[..cfg.state_dim]))
}

pub fn wrap_angle(phi: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let mut w = phi % tau;
    if w < 0.0 {
        w += tau;
    }
    w
}

/// Options for [`calibrate_phase`]' constant-velocity segmentation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// Number of candidate phases evaluated in [0, 2pi).
    pub n_samples: usize,
    /// Minimum segment duration, seconds.
    pub min_duration_s: f64,
    /// Allowed reference-velocity deviation from the segment mean, as a
    /// fraction of the max speed seen in the data.
    pub vel_tol_frac: f64,
    /// Minimum segment mean speed (fraction of max speed); standstill dwell
    /// carries no phase information.
    pub min_speed_frac: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            min_duration_s: 0.5,
            vel_tol_frac: 0.01,
            min_speed_frac: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub phi: f64,
    pub n_segments: usize,
    pub n_skipped: usize,
    /// Per-segment optimal phases (for diagnostics).
    pub segment_phis: Vec<f64>,
}

/// Calibrate the lifting sinusoid phase from constant-velocity segments.
///
/// Each episode is cut into maximal runs where the reference velocity stays
/// within `vel_tol_frac * vmax` of its running band and the mean speed is
/// non-negligible. Per segment, the normalized velocity tracking error is
/// correlated against `sin(r * theta + phi_hat)` over `n_samples` candidate
/// phases; the per-segment optima are combined with the circular mean.
pub fn calibrate_phase(
    episodes: &[Episode],
    cfg: &LiftingConfig,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    let r = match cfg.kind {
        LiftingKind::DriveSinusoid { r, .. } => r,
        LiftingKind::Linear => {
            return Err(Error::InvalidParam(
                "phase calibration applies to the drive lifting only".into(),
            ))
        }
    };
    if episodes.is_empty() {
        return Err(Error::EmptyEpisodes);
    }
    if opts.n_samples == 0 {
        return Err(Error::InvalidParam("n_samples must be > 0".into()));
    }

    let vmax = episodes
        .iter()
        .flat_map(|e| e.ref_vel.iter())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    if vmax == 0.0 {
        return Err(Error::NoSegments);
    }

    let mut segment_phis = Vec::new();
    let mut n_skipped = 0usize;
    for ep in episodes {
        ep.validate()?;
        let dt = ep.dt();
        let min_len = (opts.min_duration_s / dt).ceil() as usize;
        for (start, end) in constant_velocity_runs(&ep.ref_vel, opts.vel_tol_frac * vmax) {
            if end - start < min_len {
                continue;
            }
            let mean_speed = ep.ref_vel[start..end]
                .iter()
                .map(|v| v.abs())
                .sum::<f64>()
                / (end - start) as f64;
            if mean_speed < opts.min_speed_frac * vmax {
                continue;
            }
            match segment_phase(
                &ep.meas_pos[start..end],
                &ep.meas_vel[start..end],
                &ep.ref_vel[start..end],
                r,
                opts.n_samples,
            ) {
                Some(phi) => segment_phis.push(phi),
                None => n_skipped += 1,
            }
        }
    }

    if segment_phis.is_empty() {
        return Err(Error::NoSegments);
    }

    let (mut s, mut c) = (0.0f64, 0.0f64);
    for phi in &segment_phis {
        s += phi.sin();
        c += phi.cos();
    }
    let n = segment_phis.len() as f64;
    let phi = wrap_angle((s / n).atan2(c / n));
    Ok(CalibrationResult {
        phi,
        n_segments: segment_phis.len(),
        n_skipped,
        segment_phis,
    })
}

/// Maximal runs where the signal's running min/max band stays within
/// `2 * tol` (equivalently, deviation from the running mean below `tol`).
fn constant_velocity_runs(v: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0usize;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (k, &x) in v.iter().enumerate() {
        let (nlo, nhi) = (lo.min(x), hi.max(x));
        if nhi - nlo <= 2.0 * tol {
            lo = nlo;
            hi = nhi;
        } else {
            if k > start + 1 {
                runs.push((start, k));
            }
            start = k;
            lo = x;
            hi = x;
        }
    }
    if v.len() > start + 1 {
        runs.push((start, v.len()));
    }
    runs
}

/// Best phase for one segment: argmax over the sampled phases of the inner
/// product between the normalized velocity tracking error and the lifted
/// sinusoid. Returns `None` for a degenerate zero-energy error signal.
fn segment_phase(
    meas_pos: &[f64],
    meas_vel: &[f64],
    ref_vel: &[f64],
    r: f64,
    n_samples: usize,
) -> Option<f64> {
    let n = meas_pos.len();
    let mut err: Vec<f64> = meas_vel
        .iter()
        .zip(ref_vel)
        .map(|(m, rv)| m - rv)
        .collect();
    let mean = err.iter().sum::<f64>() / n as f64;
    for e in err.iter_mut() {
        *e -= mean;
    }
    let energy = err.iter().map(|e| e * e).sum::<f64>().sqrt();
    if energy <= 1e-12 {
        return None;
    }
    for e in err.iter_mut() {
        *e /= energy;
    }

    // <err, sin(r theta + phi)> = cos(phi) <err, sin(r theta)> + sin(phi) <err, cos(r theta)>,
    // so two correlations cover every candidate phase.
    let (mut ip_sin, mut ip_cos) = (0.0f64, 0.0f64);
    for (e, th) in err.iter().zip(meas_pos) {
        let arg = r * th;
        ip_sin += e * arg.sin();
        ip_cos += e * arg.cos();
    }

    let tau = 2.0 * std::f64::consts::PI;
    let mut best = (f64::NEG_INFINITY, 0.0f64);
    for i in 0..n_samples {
        let phi = tau * i as f64 / n_samples as f64;
        let val = phi.cos() * ip_sin + phi.sin() * ip_cos;
        if val > best.0 {
            best = (val, phi);
        }
    }
    Some(best.1)
}
