//! Discrete-time LTI state-space algebra.
//!
//! Frequency responses, H2/Hinf norms, stability tests, Lyapunov solves and
//! feedback interconnections. All values are immutable after construction and
//! every operation is a pure function of its inputs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spectral-radius margin below 1 required by [`StateSpace::is_schur`].
pub const SCHUR_TOL: f64 = 1e-9;

/// Discrete-time state-space realization (A, B, C, D) with sample period `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    dt: f64,
}

impl StateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        dt: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dim(
                "StateSpace",
                format!("A must be square, got {}x{}", a.nrows(), a.ncols()),
            ));
        }
        if b.nrows() != n {
            return Err(Error::dim(
                "StateSpace",
                format!("B has {} rows, expected {}", b.nrows(), n),
            ));
        }
        if c.ncols() != n {
            return Err(Error::dim(
                "StateSpace",
                format!("C has {} cols, expected {}", c.ncols(), n),
            ));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::dim(
                "StateSpace",
                format!(
                    "D is {}x{}, expected {}x{}",
                    d.nrows(),
                    d.ncols(),
                    c.nrows(),
                    b.ncols()
                ),
            ));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParam(format!("dt must be > 0, got {dt}")));
        }
        Ok(Self { a, b, c, d, dt })
    }

    /// Static (state-free) system `y = D u`.
    pub fn from_static(d: DMatrix<f64>, dt: f64) -> Result<Self> {
        let p = d.nrows();
        let m = d.ncols();
        Self::new(
            DMatrix::zeros(0, 0),
            DMatrix::zeros(0, m),
            DMatrix::zeros(p, 0),
            d,
            dt,
        )
    }

    /// Static scalar gain.
    pub fn from_gain(g: f64, dt: f64) -> Result<Self> {
        Self::from_static(DMatrix::from_element(1, 1, g), dt)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Largest eigenvalue magnitude of A (0 for state-free systems).
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    /// Schur stability: spectral radius of A below `1 - SCHUR_TOL`.
    pub fn is_schur(&self) -> bool {
        self.spectral_radius() < 1.0 - SCHUR_TOL
    }

    /// Frequency response `C (e^{j theta} I - A)^{-1} B + D` sampled on `grid`.
    pub fn freq_response(&self, grid: &FrequencyGrid) -> Result<FreqResponse> {
        let n = self.n_states();
        let ac = self.a.map(|v| Complex64::new(v, 0.0));
        let bc = self.b.map(|v| Complex64::new(v, 0.0));
        let cc = self.c.map(|v| Complex64::new(v, 0.0));
        let dc = self.d.map(|v| Complex64::new(v, 0.0));
        let mut samples = Vec::with_capacity(grid.len());
        for &theta in grid.thetas() {
            if n == 0 {
                samples.push(dc.clone());
                continue;
            }
            let z = Complex64::from_polar(1.0, theta);
            let mut m = -ac.clone();
            for i in 0..n {
                m[(i, i)] += z;
            }
            let lu = m.lu();
            // LU rarely hits exact zero pivots in floating point; reject
            // numerically singular resolvents via the pivot spread.
            let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
            let u = lu.u();
            for i in 0..n {
                let p = u[(i, i)].norm();
                dmin = dmin.min(p);
                dmax = dmax.max(p);
            }
            if dmin <= 1e-13 * dmax {
                return Err(Error::SingularResolvent { theta });
            }
            let x = lu
                .solve(&bc)
                .ok_or(Error::SingularResolvent { theta })?;
            samples.push(&cc * x + &dc);
        }
        FreqResponse::new(grid.clone(), samples)
    }

    /// H2 norm: `sqrt(trace(C P C^T) + trace(D^T D))` with
    /// `A P A^T - P + B B^T = 0`. Errors if the system is unstable.
    pub fn h2_norm(&self) -> Result<f64> {
        if !self.is_schur() {
            return Err(Error::Unstable {
                rho: self.spectral_radius(),
            });
        }
        let gram = if self.n_states() == 0 {
            0.0
        } else {
            let p = solve_dlyap(&self.a, &(&self.b * self.b.transpose()))?;
            (&self.c * &p * self.c.transpose()).trace()
        };
        let dd = (self.d.transpose() * &self.d).trace();
        // Rounding can leave a tiny negative trace for near-zero norms.
        Ok((gram + dd).max(0.0).sqrt())
    }

    /// Hinf norm evaluated on a grid: the peak over `grid` of the largest
    /// singular value of the frequency response. This is a lower bound of the
    /// true supremum; refine the grid to tighten it. Errors if unstable.
    pub fn hinf_norm(&self, grid: &FrequencyGrid) -> Result<f64> {
        if !self.is_schur() {
            return Err(Error::Unstable {
                rho: self.spectral_radius(),
            });
        }
        let resp = self.freq_response(grid)?;
        Ok(resp
            .sigma_max()
            .into_iter()
            .fold(0.0f64, |acc, s| acc.max(s)))
    }

    /// Series interconnection: the output of `self` feeds `other`,
    /// so the combined transfer matrix is `G_other(z) G_self(z)`.
    pub fn series(&self, other: &StateSpace) -> Result<StateSpace> {
        if other.n_inputs() != self.n_outputs() {
            return Err(Error::dim(
                "series",
                format!(
                    "downstream expects {} inputs, upstream has {} outputs",
                    other.n_inputs(),
                    self.n_outputs()
                ),
            ));
        }
        if (self.dt - other.dt).abs() > 1e-12 * self.dt.max(other.dt) {
            return Err(Error::InvalidParam(format!(
                "sample period mismatch: {} vs {}",
                self.dt, other.dt
            )));
        }
        let (n1, n2) = (self.n_states(), other.n_states());
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&other.b * &self.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&other.a);
        let mut b = DMatrix::zeros(n1 + n2, self.n_inputs());
        b.view_mut((0, 0), (n1, self.n_inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.n_inputs()))
            .copy_from(&(&other.b * &self.d));
        let mut c = DMatrix::zeros(other.n_outputs(), n1 + n2);
        c.view_mut((0, 0), (other.n_outputs(), n1))
            .copy_from(&(&other.d * &self.c));
        c.view_mut((0, n1), (other.n_outputs(), n2))
            .copy_from(&other.c);
        let d = &other.d * &self.d;
        StateSpace::new(a, b, c, d, self.dt)
    }

    /// Keep only the listed output rows and input columns.
    pub fn channel(&self, outputs: &[usize], inputs: &[usize]) -> Result<StateSpace> {
        for &r in outputs {
            if r >= self.n_outputs() {
                return Err(Error::dim("channel", format!("output index {r} out of range")));
            }
        }
        for &cidx in inputs {
            if cidx >= self.n_inputs() {
                return Err(Error::dim("channel", format!("input index {cidx} out of range")));
            }
        }
        let c = DMatrix::from_fn(outputs.len(), self.n_states(), |i, j| self.c[(outputs[i], j)]);
        let b = DMatrix::from_fn(self.n_states(), inputs.len(), |i, j| self.b[(i, inputs[j])]);
        let d = DMatrix::from_fn(outputs.len(), inputs.len(), |i, j| {
            self.d[(outputs[i], inputs[j])]
        });
        StateSpace::new(self.a.clone(), b, c, d, self.dt)
    }

    /// Simulate from `x0` over the input columns of `u`; returns (states, outputs)
    /// with `states` holding x_0..x_T (T+1 columns) and `outputs` y_0..y_{T-1}.
    pub fn simulate(&self, x0: &DVector<f64>, u: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if x0.len() != self.n_states() {
            return Err(Error::dim("simulate", "x0 length"));
        }
        if u.nrows() != self.n_inputs() {
            return Err(Error::dim("simulate", "input rows"));
        }
        let steps = u.ncols();
        let mut states = DMatrix::zeros(self.n_states(), steps + 1);
        let mut outputs = DMatrix::zeros(self.n_outputs(), steps);
        let mut x = x0.clone();
        states.set_column(0, &x);
        for k in 0..steps {
            let uk = u.column(k);
            outputs.set_column(k, &(&self.c * &x + &self.d * uk));
            x = &self.a * &x + &self.b * uk;
            states.set_column(k + 1, &x);
        }
        Ok((states, outputs))
    }

    /// Impulse response samples h_0 = D, h_k = C A^{k-1} B.
    pub fn impulse(&self, len: usize) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        out.push(self.d.clone());
        let mut akb = self.b.clone();
        for _ in 1..len {
            out.push(&self.c * &akb);
            akb = &self.a * &akb;
        }
        out
    }
}

/// Eigenvalue magnitude bound of a square real matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.norm()))
}

/// Solve the discrete Lyapunov equation `A P A^T - P + Q = 0`.
///
/// Uses the Kronecker vectorization `(A (x) A - I) vec(P) = -vec(Q)`; intended
/// for the moderate state dimensions that occur here. When `Q` is symmetric
/// the result is symmetrized exactly.
pub fn solve_dlyap(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::dim("solve_dlyap", "A and Q must be square of equal size"));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let mut kron = a.kronecker(a);
    for i in 0..n * n {
        kron[(i, i)] -= 1.0;
    }
    let rhs = DVector::from_fn(n * n, |i, _| -q[(i % n, i / n)]);
    let sol = kron.lu().solve(&rhs).ok_or(Error::LyapunovSingular)?;
    let mut p = DMatrix::from_fn(n, n, |i, j| sol[j * n + i]);
    let symmetric_q = (q - q.transpose()).norm() <= 1e-12 * (1.0 + q.norm());
    if symmetric_q {
        p = (&p + p.transpose()) * 0.5;
    }
    Ok(p)
}

/// Close the lower loop of a partitioned system with the controller `K`.
///
/// The last `n_ctrl` inputs of `sys` are the control channel `u` and the last
/// `n_meas` outputs are the measurement channel `y`; `K` maps `y` to `u`. The
/// result maps the remaining inputs `w` to the remaining outputs `z`.
pub fn feedback_lft(
    sys: &StateSpace,
    n_meas: usize,
    n_ctrl: usize,
    k: &StateSpace,
) -> Result<StateSpace> {
    let nw = sys
        .n_inputs()
        .checked_sub(n_ctrl)
        .ok_or_else(|| Error::dim("feedback_lft", "n_ctrl exceeds plant inputs"))?;
    let nz = sys
        .n_outputs()
        .checked_sub(n_meas)
        .ok_or_else(|| Error::dim("feedback_lft", "n_meas exceeds plant outputs"))?;
    if k.n_inputs() != n_meas || k.n_outputs() != n_ctrl {
        return Err(Error::dim(
            "feedback_lft",
            format!(
                "controller is {}x{}, expected {}x{}",
                k.n_outputs(),
                k.n_inputs(),
                n_ctrl,
                n_meas
            ),
        ));
    }
    let n = sys.n_states();
    let nk = k.n_states();

    let b1 = sys.b.columns(0, nw).into_owned();
    let b2 = sys.b.columns(nw, n_ctrl).into_owned();
    let c1 = sys.c.rows(0, nz).into_owned();
    let c2 = sys.c.rows(nz, n_meas).into_owned();
    let d11 = sys.d.view((0, 0), (nz, nw)).into_owned();
    let d12 = sys.d.view((0, nw), (nz, n_ctrl)).into_owned();
    let d21 = sys.d.view((nz, 0), (n_meas, nw)).into_owned();
    let d22 = sys.d.view((nz, nw), (n_meas, n_ctrl)).into_owned();

    let (ak, bk, ck, dk) = (&k.a, &k.b, &k.c, &k.d);

    // Well-posedness: (I - Dk D22) must be invertible.
    let mut delta = DMatrix::identity(n_ctrl, n_ctrl);
    delta -= dk * &d22;
    let delta_inv = delta
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParam("algebraic loop: I - Dk*Dyu is singular".into()))?;

    let dk_eff = &delta_inv * dk; // (I - Dk D22)^{-1} Dk
    let ck_eff = &delta_inv * ck; // (I - Dk D22)^{-1} Ck

    let mut a = DMatrix::zeros(n + nk, n + nk);
    a.view_mut((0, 0), (n, n))
        .copy_from(&(&sys.a + &b2 * &dk_eff * &c2));
    a.view_mut((0, n), (n, nk)).copy_from(&(&b2 * &ck_eff));
    a.view_mut((n, 0), (nk, n))
        .copy_from(&(bk * (&c2 + &d22 * &dk_eff * &c2)));
    a.view_mut((n, n), (nk, nk))
        .copy_from(&(ak + bk * &d22 * &ck_eff));

    let mut b = DMatrix::zeros(n + nk, nw);
    b.view_mut((0, 0), (n, nw))
        .copy_from(&(&b1 + &b2 * &dk_eff * &d21));
    b.view_mut((n, 0), (nk, nw))
        .copy_from(&(bk * (&d21 + &d22 * &dk_eff * &d21)));

    let mut c = DMatrix::zeros(nz, n + nk);
    c.view_mut((0, 0), (nz, n))
        .copy_from(&(&c1 + &d12 * &dk_eff * &c2));
    c.view_mut((0, n), (nz, nk)).copy_from(&(&d12 * &ck_eff));

    let d = &d11 + &d12 * &dk_eff * &d21;

    StateSpace::new(a, b, c, d, sys.dt)
}

/// Discrete frequencies `theta = 2 pi dt f` in (0, pi], strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrequencyGrid {
    thetas: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(thetas: Vec<f64>) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        for w in thetas.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidGrid(format!(
                    "not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        let first = thetas[0];
        let last = *thetas.last().unwrap();
        if !(first > 0.0) || last > std::f64::consts::PI + 1e-15 {
            return Err(Error::InvalidGrid(format!(
                "values must lie in (0, pi], got range [{first}, {last}]"
            )));
        }
        Ok(Self { thetas })
    }

    /// `n` logarithmically spaced points from `lo` to `hi` (radians/sample).
    pub fn log_spaced(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid("need at least 2 points".into()));
        }
        let (llo, lhi) = (lo.ln(), hi.ln());
        let mut thetas: Vec<f64> = (0..n)
            .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
            .collect();
        // exp/ln round trips can overshoot the endpoints slightly.
        thetas[0] = lo;
        thetas[n - 1] = hi;
        Self::new(thetas)
    }

    /// Default analysis grid: 512 log-spaced points on [1e-4, pi].
    pub fn default_grid() -> Self {
        Self::log_spaced(512, 1e-4, std::f64::consts::PI).expect("default grid is valid")
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }
    pub fn len(&self) -> usize {
        self.thetas.len()
    }
    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// Continuous-time frequencies in Hz for sample period `dt`.
    pub fn hz(&self, dt: f64) -> Vec<f64> {
        self.thetas
            .iter()
            .map(|t| t / (2.0 * std::f64::consts::PI * dt))
            .collect()
    }
}

impl TryFrom<Vec<f64>> for FrequencyGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FrequencyGrid> for Vec<f64> {
    fn from(g: FrequencyGrid) -> Vec<f64> {
        g.thetas
    }
}

/// Complex transfer-matrix samples on a frequency grid.
#[derive(Debug, Clone)]
pub struct FreqResponse {
    grid: FrequencyGrid,
    samples: Vec<DMatrix<Complex64>>,
}

impl FreqResponse {
    pub fn new(grid: FrequencyGrid, samples: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::dim(
                "FreqResponse",
                format!("{} samples for {} grid points", samples.len(), grid.len()),
            ));
        }
        if let Some(first) = samples.first() {
            let shape = first.shape();
            if samples.iter().any(|s| s.shape() != shape) {
                return Err(Error::dim("FreqResponse", "inconsistent sample shapes"));
            }
        }
        Ok(Self { grid, samples })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }
    pub fn samples(&self) -> &[DMatrix<Complex64>] {
        &self.samples
    }
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
    pub fn shape(&self) -> (usize, usize) {
        self.samples.first().map_or((0, 0), |s| s.shape())
    }

    /// Largest singular value at each grid point.
    pub fn sigma_max(&self) -> Vec<f64> {
        self.samples.iter().map(|s| sigma_max(s)).collect()
    }
}

/// Largest singular value of a complex matrix (0 when empty).
pub fn sigma_max(m: &DMatrix<Complex64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |acc, s| acc.max(*s))
}

/// JSON shape for [`StateSpace`]: row-major nested arrays plus `dt`.
#[derive(Serialize, Deserialize)]
struct StateSpaceRepr {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d: Vec<Vec<f64>>,
    dt: f64,
}

pub(crate) fn mat_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub(crate) fn rows_to_mat(rows: &[Vec<f64>], ncols_hint: usize) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(ncols_hint, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::dim("matrix json", "ragged rows"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl Serialize for StateSpace {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        StateSpaceRepr {
            a: mat_to_rows(&self.a),
            b: mat_to_rows(&self.b),
            c: mat_to_rows(&self.c),
            d: mat_to_rows(&self.d),
            dt: self.dt,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for StateSpace {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = StateSpaceRepr::deserialize(de)?;
        let n = repr.a.len();
        let a = rows_to_mat(&repr.a, n).map_err(serde::de::Error::custom)?;
        let m = repr.b.first().map_or_else(|| repr.d.first().map_or(0, |r| r.len()), |r| r.len());
        let b = rows_to_mat(&repr.b, m).map_err(serde::de::Error::custom)?;
        let c = rows_to_mat(&repr.c, n).map_err(serde::de::Error::custom)?;
        let d = rows_to_mat(&repr.d, m).map_err(serde::de::Error::custom)?;
        // Empty-B/C row lists lose their column counts in JSON; rebuild them.
        let b = if b.nrows() == 0 && d.ncols() > 0 && n == 0 {
            DMatrix::zeros(0, d.ncols())
        } else {
            b
        };
        let c = if c.nrows() == d.nrows() && c.ncols() == 0 && n == 0 {
            DMatrix::zeros(d.nrows(), 0)
        } else {
            c
        };
        StateSpace::new(a, b, c, d, repr.dt).map_err(serde::de::Error::custom)
    }
}
