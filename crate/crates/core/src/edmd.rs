//! Koopman matrix approximation from snapshot data.
//!
//! Least squares `U = Theta_+ Psi^+`, EDMD through the Gram matrices
//! `G = Theta_+ Psi^T / q`, `H = Psi Psi^T / q` with Tikhonov regularization
//! `U = G (H + (alpha/q) I)^{-1}`, a population-wide stability bisection on
//! alpha, and the retract/re-lift rollout used for local-error prediction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::{lift, lift_state, retract, LiftingConfig};
use crate::lti::{self, StateSpace};
use crate::sim::Episode;

/// Lifted snapshot matrices: `psi` holds psi_0..psi_{q-1} column-wise,
/// `theta_plus` holds theta_1..theta_q.
#[derive(Debug, Clone)]
pub struct SnapshotMatrices {
    pub psi: DMatrix<f64>,
    pub theta_plus: DMatrix<f64>,
    pub cfg: LiftingConfig,
    pub dt: f64,
    /// Set when q < p (fewer snapshots than lifted dimensions).
    pub underdetermined: bool,
}

impl SnapshotMatrices {
    pub fn new(
        psi: DMatrix<f64>,
        theta_plus: DMatrix<f64>,
        cfg: LiftingConfig,
        dt: f64,
    ) -> Result<Self> {
        if psi.ncols() != theta_plus.ncols() {
            return Err(Error::dim("SnapshotMatrices", "column counts differ"));
        }
        if psi.nrows() != cfg.p_total() || theta_plus.nrows() != cfg.p_theta() {
            return Err(Error::dim(
                "SnapshotMatrices",
                format!(
                    "Psi is {}x{}, Theta+ is {}x{}, lifting expects p={} p_theta={}",
                    psi.nrows(),
                    psi.ncols(),
                    theta_plus.nrows(),
                    theta_plus.ncols(),
                    cfg.p_total(),
                    cfg.p_theta()
                ),
            ));
        }
        if psi.iter().any(|v| !v.is_finite()) || theta_plus.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: 0 });
        }
        let underdetermined = psi.ncols() < psi.nrows();
        Ok(Self {
            psi,
            theta_plus,
            cfg,
            dt,
            underdetermined,
        })
    }

    pub fn q(&self) -> usize {
        self.psi.ncols()
    }
}

/// Koopman matrix `U = [A | B]` plus the lifting configuration it was
/// identified with.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    pub u: DMatrix<f64>,
    pub cfg: LiftingConfig,
    pub dt: f64,
    pub alpha: f64,
    /// RMS of the fit residual entries.
    pub residual_rms: f64,
    /// Set when a singular `H` at alpha = 0 forced a pseudoinverse fallback.
    pub pinv_fallback: bool,
}

impl KoopmanModel {
    pub fn p_theta(&self) -> usize {
        self.cfg.p_theta()
    }

    pub fn p_upsilon(&self) -> usize {
        self.cfg.p_upsilon()
    }

    /// The `A` partition (p_theta x p_theta).
    pub fn a_block(&self) -> DMatrix<f64> {
        self.u.columns(0, self.p_theta()).into_owned()
    }

    /// The `B` partition (p_theta x p_upsilon).
    pub fn b_block(&self) -> DMatrix<f64> {
        self.u.columns(self.p_theta(), self.p_upsilon()).into_owned()
    }

    pub fn is_schur(&self) -> bool {
        lti::spectral_radius(&self.a_block()) < 1.0 - lti::SCHUR_TOL
    }

    pub fn spectral_radius(&self) -> f64 {
        lti::spectral_radius(&self.a_block())
    }

    /// LTI view of the lifted dynamics with the full lifted state as output.
    pub fn lti_realization(&self) -> StateSpace {
        let p = self.p_theta();
        let m = self.p_upsilon();
        StateSpace::new(
            self.a_block(),
            self.b_block(),
            DMatrix::identity(p, p),
            DMatrix::zeros(p, m),
            self.dt,
        )
        .expect("partition dimensions are consistent")
    }

    /// LTI view from the input to the original (measured) states.
    pub fn measured_realization(&self) -> StateSpace {
        let p = self.p_theta();
        let m = self.cfg.state_dim;
        let mut c = DMatrix::zeros(m, p);
        for i in 0..m {
            c[(i, i)] = 1.0;
        }
        StateSpace::new(
            self.a_block(),
            self.b_block(),
            c,
            DMatrix::zeros(m, self.p_upsilon()),
            self.dt,
        )
        .expect("partition dimensions are consistent")
    }
}

/// Stack lifted snapshot pairs from a list of episodes. Episodes are lifted
/// independently, so no pair straddles an episode boundary; `q` is the sum of
/// per-episode lengths minus one each.
pub fn build_snapshots(episodes: &[Episode], cfg: &LiftingConfig) -> Result<SnapshotMatrices> {
    if episodes.is_empty() {
        return Err(Error::EmptyEpisodes);
    }
    let mut q_total = 0usize;
    for ep in episodes {
        ep.validate()?;
        if ep.len() < 2 {
            return Err(Error::InvalidParam(
                "every episode needs at least 2 samples".into(),
            ));
        }
        q_total += ep.len() - 1;
    }

    let p = cfg.p_total();
    let p_th = cfg.p_theta();
    let mut psi = DMatrix::zeros(p, q_total);
    let mut theta_plus = DMatrix::zeros(p_th, q_total);
    let mut col = 0usize;
    for ep in episodes {
        for k in 0..ep.len() - 1 {
            let x = [ep.meas_pos[k], ep.meas_vel[k]];
            let u = [ep.current[k]];
            let lifted = lift(cfg, &x[..cfg.state_dim], &u[..cfg.input_dim])?;
            for i in 0..p_th {
                psi[(i, col)] = lifted.theta_part[i];
            }
            for i in 0..cfg.p_upsilon() {
                psi[(p_th + i, col)] = lifted.upsilon_part[i];
            }
            let xn = [ep.meas_pos[k + 1], ep.meas_vel[k + 1]];
            let lifted_next = lift_state(cfg, &xn[..cfg.state_dim])?;
            for i in 0..p_th {
                theta_plus[(i, col)] = lifted_next[i];
            }
            col += 1;
        }
    }
    let dt = episodes[0].dt();
    SnapshotMatrices::new(psi, theta_plus, *cfg, dt)
}

/// Moore-Penrose pseudoinverse with relative singular-value cutoff.
pub fn pinv(m: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |a, s| a.max(*s));
    let cutoff = rel_cutoff * smax;
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let mut sinv = DMatrix::zeros(vt.nrows(), u.ncols());
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > cutoff {
            sinv[(i, i)] = 1.0 / s;
        }
    }
    vt.transpose() * sinv * u.transpose()
}

const PINV_CUTOFF: f64 = 1e-12;

fn finish_model(
    s: &SnapshotMatrices,
    u: DMatrix<f64>,
    alpha: f64,
    pinv_fallback: bool,
) -> KoopmanModel {
    let resid = &s.theta_plus - &u * &s.psi;
    let residual_rms = (resid.norm_squared() / (resid.nrows() * resid.ncols()).max(1) as f64).sqrt();
    KoopmanModel {
        u,
        cfg: s.cfg,
        dt: s.dt,
        alpha,
        residual_rms,
        pinv_fallback,
    }
}

/// Plain least squares `U = Theta_+ Psi^+` (minimum-norm on rank deficiency).
pub fn fit_least_squares(s: &SnapshotMatrices) -> Result<KoopmanModel> {
    if s.psi.norm() == 0.0 {
        return Err(Error::InvalidParam("Psi is identically zero".into()));
    }
    let u = &s.theta_plus * pinv(&s.psi, PINV_CUTOFF);
    Ok(finish_model(s, u, 0.0, false))
}

/// EDMD with Tikhonov regularization: `U = G (H + (alpha/q) I)^{-1}` where
/// `G = Theta_+ Psi^T / q` and `H = Psi Psi^T / q`. At `alpha = 0` a singular
/// `H` falls back to its pseudoinverse, flagged on the model.
pub fn fit_edmd_tikhonov(s: &SnapshotMatrices, alpha: f64) -> Result<KoopmanModel> {
    if alpha < 0.0 {
        return Err(Error::InvalidParam("alpha must be nonnegative".into()));
    }
    let q = s.q() as f64;
    let g = &s.theta_plus * s.psi.transpose() / q;
    let mut h = &s.psi * s.psi.transpose() / q;
    let p = h.nrows();
    for i in 0..p {
        h[(i, i)] += alpha / q;
    }
    let (u, fallback) = match h.clone().cholesky() {
        Some(chol) => {
            // U H = G  =>  H U^T = G^T (H symmetric).
            let ut = chol.solve(&g.transpose());
            (ut.transpose(), false)
        }
        None => (&g * pinv(&h, PINV_CUTOFF), true),
    };
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: 0 });
    }
    Ok(finish_model(s, u, alpha, fallback))
}

#[derive(Debug, Clone)]
pub struct StabilizedPopulation {
    pub alpha: f64,
    pub models: Vec<KoopmanModel>,
    pub bisection_steps: usize,
}

/// Smallest alpha (to tolerance `tol`) for which every fitted A-block is
/// Schur, found by bisection on [0, alpha_max].
pub fn min_stabilizing_alpha(
    snapshots: &[SnapshotMatrices],
    alpha_max: f64,
    tol: f64,
) -> Result<StabilizedPopulation> {
    if snapshots.is_empty() {
        return Err(Error::EmptyEpisodes);
    }
    if !(alpha_max > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidParam("alpha_max and tol must be > 0".into()));
    }

    let fit_all = |alpha: f64| -> Result<(Vec<KoopmanModel>, f64)> {
        let mut models = Vec::with_capacity(snapshots.len());
        let mut worst = 0.0f64;
        for s in snapshots {
            let m = fit_edmd_tikhonov(s, alpha)?;
            worst = worst.max(m.spectral_radius());
            models.push(m);
        }
        Ok((models, worst))
    };

    let stable = |worst: f64| worst < 1.0 - lti::SCHUR_TOL;

    let (models0, worst0) = fit_all(0.0)?;
    if stable(worst0) {
        return Ok(StabilizedPopulation {
            alpha: 0.0,
            models: models0,
            bisection_steps: 0,
        });
    }
    let (mut hi_models, worst_hi) = fit_all(alpha_max)?;
    if !stable(worst_hi) {
        return Err(Error::AlphaMaxInsufficient {
            alpha_max,
            worst_rho: worst_hi,
        });
    }

    let mut lo = 0.0f64;
    let mut hi = alpha_max;
    let mut steps = 0usize;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let (models, worst) = fit_all(mid)?;
        if stable(worst) {
            hi = mid;
            hi_models = models;
        } else {
            lo = mid;
        }
        steps += 1;
    }
    Ok(StabilizedPopulation {
        alpha: hi,
        models: hi_models,
        bisection_steps: steps,
    })
}

/// Outcome of a local-error rollout. `nonfinite_at` marks the step where the
/// state stopped being finite; the trajectory is truncated just before it.
#[derive(Debug, Clone)]
pub struct LocalPrediction {
    /// Columns x_0 .. x_T in original coordinates.
    pub states: DMatrix<f64>,
    pub nonfinite_at: Option<usize>,
}

/// Roll the model forward with retraction and re-lifting at every step:
/// `theta^+ = A theta(x_k) + B upsilon(x_k, u_k)`, `x_{k+1} = retract(theta^+)`.
pub fn predict_local(
    model: &KoopmanModel,
    x0: &[f64],
    inputs: &DMatrix<f64>,
) -> Result<LocalPrediction> {
    let m = model.cfg.state_dim;
    if x0.len() != m {
        return Err(Error::dim("predict_local", "x0 length"));
    }
    if inputs.nrows() != model.cfg.input_dim {
        return Err(Error::dim("predict_local", "input rows"));
    }
    let steps = inputs.ncols();
    let a = model.a_block();
    let b = model.b_block();

    let mut states = DMatrix::zeros(m, steps + 1);
    let mut x = DVector::from_column_slice(x0);
    states.set_column(0, &x);
    for k in 0..steps {
        let u: Vec<f64> = inputs.column(k).iter().copied().collect();
        let lifted = lift(&model.cfg, x.as_slice(), &u)?;
        let theta_next = &a * &lifted.theta_part + &b * &lifted.upsilon_part;
        x = retract(&model.cfg, theta_next.as_slice())?;
        if x.iter().any(|v| !v.is_finite()) {
            let states = states.columns(0, k + 1).into_owned();
            return Ok(LocalPrediction {
                states,
                nonfinite_at: Some(k + 1),
            });
        }
        states.set_column(k + 1, &x);
    }
    Ok(LocalPrediction {
        states,
        nonfinite_at: None,
    })
}

/// JSON shape for [`KoopmanModel`].
#[derive(Serialize, Deserialize)]
struct KoopmanModelRepr {
    #[serde(rename = "U")]
    u: Vec<Vec<f64>>,
    p_theta: usize,
    p_upsilon: usize,
    cfg: LiftingConfig,
    dt: f64,
    alpha: f64,
    residual_rms: f64,
    #[serde(default)]
    pinv_fallback: bool,
}

impl Serialize for KoopmanModel {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        KoopmanModelRepr {
            u: crate::lti::mat_to_rows(&self.u),
            p_theta: self.p_theta(),
            p_upsilon: self.p_upsilon(),
            cfg: self.cfg,
            dt: self.dt,
            alpha: self.alpha,
            residual_rms: self.residual_rms,
            pinv_fallback: self.pinv_fallback,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for KoopmanModel {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = KoopmanModelRepr::deserialize(de)?;
        let u = crate::lti::rows_to_mat(&repr.u, repr.p_theta + repr.p_upsilon)
            .map_err(serde::de::Error::custom)?;
        if u.nrows() != repr.cfg.p_theta() || u.ncols() != repr.cfg.p_total() {
            return Err(serde::de::Error::custom(format!(
                "U is {}x{}, lifting expects {}x{}",
                u.nrows(),
                u.ncols(),
                repr.cfg.p_theta(),
                repr.cfg.p_total()
            )));
        }
        Ok(KoopmanModel {
            u,
            cfg: repr.cfg,
            dt: repr.dt,
            alpha: repr.alpha,
            residual_rms: repr.residual_rms,
            pinv_fallback: repr.pinv_fallback,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::LiftingKind;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn episode_from_arrays(pos: Vec<f64>, vel: Vec<f64>, current: Vec<f64>) -> Episode {
        let n = pos.len();
        let dt = 1e-3;
        Episode {
            t: (0..n).map(|k| k as f64 * dt).collect(),
            ref_pos: pos.clone(),
            ref_vel: vel.clone(),
            meas_pos: pos,
            meas_vel: vel,
            current,
        }
    }

    /// Noiseless data from x+ = A x + B u under the linear lifting.
    fn linear_system_episode(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        steps: usize,
        seed: u64,
    ) -> Episode {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut x = DVector::from_column_slice(&[0.1, -0.2]);
        let mut pos = vec![x[0]];
        let mut vel = vec![x[1]];
        let mut current = Vec::new();
        for _ in 0..steps {
            let u = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            current.push(u);
            x = a * &x + b * u;
            pos.push(x[0]);
            vel.push(x[1]);
        }
        current.push(0.0);
        episode_from_arrays(pos, vel, current)
    }

    fn stable_ab(seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut a = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let rho = crate::lti::spectral_radius(&a);
        a *= 0.85 / rho.max(1e-9);
        let b = DMatrix::from_fn(2, 1, |_, _| rng.gen_range(-1.0..1.0));
        (a, b)
    }

    #[test]
    fn snapshot_counts() {
        let cfg = LiftingConfig::linear(2, 1);
        let ep2 = episode_from_arrays(vec![0.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0]);
        let s = build_snapshots(&[ep2], &cfg).unwrap();
        assert_eq!(s.q(), 1);

        let ep3 = episode_from_arrays(vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]);
        let ep4 = episode_from_arrays(vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]);
        let s = build_snapshots(&[ep3, ep4], &cfg).unwrap();
        assert_eq!(s.q(), 5);
        assert!(build_snapshots(&[], &cfg).is_err());
    }

    #[test]
    fn linear_lifting_reproduces_raw_data() {
        let (a, b) = stable_ab(1);
        let ep = linear_system_episode(&a, &b, 20, 2);
        let cfg = LiftingConfig::linear(2, 1);
        let s = build_snapshots(&[ep.clone()], &cfg).unwrap();
        for k in 0..s.q() {
            assert_eq!(s.psi[(0, k)], ep.meas_pos[k]);
            assert_eq!(s.psi[(1, k)], ep.meas_vel[k]);
            assert_eq!(s.psi[(2, k)], ep.current[k]);
            assert_eq!(s.theta_plus[(0, k)], ep.meas_pos[k + 1]);
        }
    }

    #[test]
    fn least_squares_identity_dynamics() {
        // x+ = x with zero input: U = [I | 0].
        let pos: Vec<f64> = vec![0.7; 30];
        let vel: Vec<f64> = vec![-0.3; 30];
        let mut current: Vec<f64> = vec![0.0; 30];
        // Nonzero input column elsewhere would be unobservable; keep u = 0 and
        // accept the zero column from the minimum-norm solution.
        current.iter_mut().for_each(|c| *c = 0.0);
        let ep = episode_from_arrays(pos, vel, current);
        let cfg = LiftingConfig::linear(2, 1);
        let s = build_snapshots(&[ep], &cfg).unwrap();
        let m = fit_least_squares(&s).unwrap();
        // The data only spans one direction, so check U on that subspace.
        let x = DVector::from_column_slice(&[0.7, -0.3, 0.0]);
        let got = &m.u * &x;
        assert!((got[0] - 0.7).abs() < 1e-10);
        assert!((got[1] + 0.3).abs() < 1e-10);
    }

    #[test]
    fn least_squares_recovers_scalar_system() {
        // x+ = 0.9 x + 0.1 u over a PRBS input, 1-state linear lifting.
        let mut rng = StdRng::seed_from_u64(3);
        let mut x = 0.0f64;
        let mut pos = vec![x];
        let mut current = Vec::new();
        for _ in 0..200 {
            let u = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            current.push(u);
            x = 0.9 * x + 0.1 * u;
            pos.push(x);
        }
        current.push(0.0);
        let n = pos.len();
        let ep = Episode {
            t: (0..n).map(|k| k as f64 * 1e-3).collect(),
            ref_pos: pos.clone(),
            ref_vel: vec![0.0; n],
            meas_pos: pos,
            meas_vel: vec![0.0; n],
            current,
        };
        let cfg = LiftingConfig::linear(1, 1);
        let s = build_snapshots(&[ep], &cfg).unwrap();
        let m = fit_least_squares(&s).unwrap();
        assert!((m.u[(0, 0)] - 0.9).abs() < 1e-10);
        assert!((m.u[(0, 1)] - 0.1).abs() < 1e-10);
        assert!(m.residual_rms < 1e-12);
    }

    #[test]
    fn least_squares_handles_duplicate_columns() {
        let (a, b) = stable_ab(4);
        let ep = linear_system_episode(&a, &b, 50, 5);
        let cfg = LiftingConfig::linear(2, 1);
        let s = build_snapshots(&[ep.clone(), ep], &cfg).unwrap();
        // Duplicated episodes duplicate every column; pinv still succeeds.
        let m = fit_least_squares(&s).unwrap();
        assert!(m.u.iter().all(|v| v.is_finite()));
        assert!(m.residual_rms < 1e-9);
    }

    #[test]
    fn edmd_alpha_zero_matches_least_squares() {
        let (a, b) = stable_ab(6);
        let ep = linear_system_episode(&a, &b, 400, 7);
        let cfg = LiftingConfig::linear(2, 1);
        let s = build_snapshots(&[ep], &cfg).unwrap();
        let ls = fit_least_squares(&s).unwrap();
        let ed = fit_edmd_tikhonov(&s, 0.0).unwrap();
        assert!((&ls.u - &ed.u).norm() < 1e-10, "{}", (&ls.u - &ed.u).norm());
        // Exact recovery of the generator.
        assert!((ed.a_block() - &a).norm() < 1e-8);
        assert!((ed.b_block() - &b).norm() < 1e-8);
        assert!(ed.residual_rms < 1e-9);
    }

    #[test]
    fn ridge_shrinks_u_norm() {
        let (a, b) = stable_ab(8);
        let ep = linear_system_episode(&a, &b, 300, 9);
        let cfg = LiftingConfig::linear(2, 1);
        let s = build_snapshots(&[ep], &cfg).unwrap();
        let ladder = [0.0, 1.0, 10.0, 100.0, 1e4];
        let mut prev = f64::INFINITY;
        for alpha in ladder {
            let m = fit_edmd_tikhonov(&s, alpha).unwrap();
            let norm = m.u.norm();
            assert!(norm <= prev * (1.0 + 1e-12), "alpha {alpha}: {norm} > {prev}");
            prev = norm;
        }
        // Huge alpha shrinks strongly: ||U||_F <= ||G||_F * q / alpha.
        let m = fit_edmd_tikhonov(&s, 1e9).unwrap();
        assert!(m.u.norm() < 1e-3, "{}", m.u.norm());
    }

    #[test]
    fn bisection_matches_scan_oracle() {
        // Data from an unstable scalar system; ridge pulls the fitted pole
        // inside the unit circle at some alpha*.
        let mut x = 0.5f64;
        let mut pos = vec![x];
        let mut current = vec![];
        let mut rng = StdRng::seed_from_u64(10);
        for _ in 0..40 {
            let u = if rng.gen_bool(0.5) { 0.3 } else { -0.3 };
            current.push(u);
            x = 1.02 * x + 0.05 * u;
            pos.push(x);
        }
        current.push(0.0);
        let n = pos.len();
        let ep = Episode {
            t: (0..n).map(|k| k as f64 * 1e-3).collect(),
            ref_pos: pos.clone(),
            ref_vel: vec![0.0; n],
            meas_pos: pos,
            meas_vel: vec![0.0; n],
            current,
        };
        let cfg = LiftingConfig::linear(1, 1);
        let s = build_snapshots(&[ep], &cfg).unwrap();

        // 0.01-step scan oracle.
        let mut oracle = None;
        let mut alpha = 0.0f64;
        while alpha <= 50.0 {
            let m = fit_edmd_tikhonov(&s, alpha).unwrap();
            if m.is_schur() {
                oracle = Some(alpha);
                break;
            }
            alpha += 0.01;
        }
        let oracle = oracle.expect("scan found a stabilizing alpha");
        assert!(oracle > 0.0);

        let tol = 0.005;
        let res = min_stabilizing_alpha(std::slice::from_ref(&s), 50.0, tol).unwrap();
        assert!(
            (res.alpha - oracle).abs() <= tol + 0.01,
            "bisection {} vs scan {}",
            res.alpha,
            oracle
        );
        assert!(res.models.iter().all(|m| m.is_schur()));
    }

    #[test]
    fn bisection_trivial_and_error_cases() {
        let (a, b) = stable_ab(11);
        let ep = linear_system_episode(&a, &b, 200, 12);
        let cfg = LiftingConfig::linear(2, 1);
        let s = build_snapshots(&[ep], &cfg).unwrap();
        let res = min_stabilizing_alpha(std::slice::from_ref(&s), 10.0, 0.5).unwrap();
        assert!(res.alpha <= 0.5);

        // A population of three stable datasets: returned alpha stabilizes all.
        let mut sets = Vec::new();
        for seed in 20..23 {
            let (a, b) = stable_ab(seed);
            let ep = linear_system_episode(&a, &b, 200, seed + 100);
            sets.push(build_snapshots(&[ep], &cfg).unwrap());
        }
        let res = min_stabilizing_alpha(&sets, 100.0, 0.5).unwrap();
        assert_eq!(res.models.len(), 3);
        assert!(res.models.iter().all(|m| m.is_schur()));
    }

    #[test]
    fn predict_local_identity_model_is_constant() {
        let cfg = LiftingConfig::linear(2, 1);
        let mut u = DMatrix::zeros(2, 3);
        u[(0, 0)] = 1.0;
        u[(1, 1)] = 1.0;
        let model = KoopmanModel {
            u,
            cfg,
            dt: 1e-3,
            alpha: 0.0,
            residual_rms: 0.0,
            pinv_fallback: false,
        };
        let inputs = DMatrix::zeros(1, 10);
        let pred = predict_local(&model, &[0.4, -0.7], &inputs).unwrap();
        for k in 0..=10 {
            assert_eq!(pred.states[(0, k)], 0.4);
            assert_eq!(pred.states[(1, k)], -0.7);
        }
    }

    #[test]
    fn predict_local_linear_matches_plain_simulation() {
        let (a, b) = stable_ab(30);
        let cfg = LiftingConfig::linear(2, 1);
        let mut u = DMatrix::zeros(2, 3);
        u.view_mut((0, 0), (2, 2)).copy_from(&a);
        u.view_mut((0, 2), (2, 1)).copy_from(&b);
        let model = KoopmanModel {
            u,
            cfg,
            dt: 1e-3,
            alpha: 0.0,
            residual_rms: 0.0,
            pinv_fallback: false,
        };
        let mut rng = StdRng::seed_from_u64(31);
        let inputs = DMatrix::from_fn(1, 50, |_, _| rng.gen_range(-1.0..1.0));
        let pred = predict_local(&model, &[0.1, 0.2], &inputs).unwrap();
        let ss = model.lti_realization();
        let (states, _) = ss
            .simulate(&DVector::from_column_slice(&[0.1, 0.2]), &inputs)
            .unwrap();
        assert!((&pred.states - &states).norm() < 1e-12);
    }

    #[test]
    fn relift_keeps_sinusoid_consistent_where_naive_rollout_drifts() {
        // A drive-lifted model whose third coordinate must stay sin(r x0 + phi)
        // under predict_local, while the naive lifted-LTI rollout lets it drift.
        let cfg = LiftingConfig::drive_sinusoid(100.0, 0.3, 2, 1).unwrap();
        // Hand-built plausible lifted dynamics (not fitted; structure is what
        // matters): position integrates velocity, velocity leaks and reads the
        // sinusoid, sinusoid roughly persists.
        let dt = 1e-3;
        let u = DMatrix::from_row_slice(
            3,
            4,
            &[
                1.0, dt, 0.0, 0.0, //
                0.0, 0.995, 2e-3, 1e-3, //
                0.0, 0.0, 0.999, 0.0,
            ],
        );
        let model = KoopmanModel {
            u: u.clone(),
            cfg,
            dt,
            alpha: 0.0,
            residual_rms: 0.0,
            pinv_fallback: false,
        };
        let steps = 400;
        let inputs = DMatrix::from_fn(1, steps, |_, k| if k % 40 < 20 { 0.5 } else { -0.5 });
        let x0 = [0.0, 1.0];
        let pred = predict_local(&model, &x0, &inputs).unwrap();
        assert!(pred.nonfinite_at.is_none());

        // Re-lift invariant at every step.
        for k in 0..=steps {
            let x = [pred.states[(0, k)], pred.states[(1, k)]];
            let lifted = lift_state(&cfg, &x).unwrap();
            let expect = match cfg.kind {
                LiftingKind::DriveSinusoid { r, phi } => (r * x[0] + phi).sin(),
                _ => unreachable!(),
            };
            assert!((lifted[2] - expect).abs() < 1e-12);
        }

        // Naive rollout: iterate the lifted LTI without retraction.
        let a = model.a_block();
        let b = model.b_block();
        let mut theta = lift_state(&cfg, &x0).unwrap();
        let mut max_violation = 0.0f64;
        for k in 0..steps {
            theta = &a * &theta + &b * inputs.column(k);
            let expect = (100.0 * theta[0] + 0.3).sin();
            max_violation = max_violation.max((theta[2] - expect).abs());
        }
        assert!(
            max_violation > 1e-3,
            "naive rollout stayed consistent ({max_violation}), test is vacuous"
        );
    }

    #[test]
    fn koopman_model_json_round_trip() {
        let cfg = LiftingConfig::drive_sinusoid(100.0, 1.1, 2, 1).unwrap();
        let model = KoopmanModel {
            u: DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.1),
            cfg,
            dt: 1e-3,
            alpha: 42.0,
            residual_rms: 1e-4,
            pinv_fallback: false,
        };
        let js = serde_json::to_string(&model).unwrap();
        assert!(js.contains("\"p_theta\":3"));
        let back: KoopmanModel = serde_json::from_str(&js).unwrap();
        assert_eq!(model, back);
    }
}
