//! Polar Newton-Raphson power flow in double precision, started flat
//! unless told otherwise. Plain full Newton: no damping, no limits.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::netmodel::{build_admittance, BusKind, Network};
use crate::numerics::Precision;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NrConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NrConfig {
    fn default() -> Self {
        NrConfig {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

/// Angles and magnitudes of every bus in network order. Only the angles of
/// non-slack buses and the magnitudes of PQ buses are unknowns.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NrState {
    pub theta: Vec<f64>,
    pub vmag: Vec<f64>,
}

impl NrState {
    /// Zero angles, unit PQ magnitudes, setpoints elsewhere.
    pub fn flat(net: &Network) -> Self {
        let vmag = net
            .buses()
            .iter()
            .map(|b| match b.kind {
                BusKind::PQ => 1.0,
                BusKind::PV => b.v_set.unwrap_or(1.0),
                BusKind::Slack => b.reference_voltage().norm(),
            })
            .collect();
        NrState {
            theta: vec![0.0; net.len()],
            vmag,
        }
    }

    /// State from complex voltages; PV and slack magnitudes are reset to
    /// their setpoints.
    pub fn from_voltages(net: &Network, v: &[Complex64]) -> Self {
        let mut s = Self::flat(net);
        for (i, b) in net.buses().iter().enumerate() {
            if b.kind != BusKind::Slack {
                s.theta[i] = v[i].arg();
            }
            if b.kind == BusKind::PQ {
                s.vmag[i] = v[i].norm();
            }
        }
        s
    }

    pub fn voltages(&self) -> Vec<Complex64> {
        self.theta
            .iter()
            .zip(&self.vmag)
            .map(|(&t, &m)| Complex64::from_polar(m, t))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NrResult {
    pub converged: bool,
    pub iterations: usize,
    pub state: NrState,
    /// Final stacked mismatch vector.
    pub mismatch: Vec<f64>,
    /// Infinity norm of the mismatch before each step, and after the last.
    pub history: Vec<f64>,
    pub singular_jacobian: bool,
}

/// Unknown layout shared by the mismatch and the Jacobian.
struct Layout {
    angles: Vec<usize>,
    mags: Vec<usize>,
}

impl Layout {
    fn new(net: &Network) -> Self {
        let angles = net.non_slack().collect();
        let mags = net
            .non_slack()
            .filter(|&i| net.bus(i).kind == BusKind::PQ)
            .collect();
        Layout { angles, mags }
    }

    fn len(&self) -> usize {
        self.angles.len() + self.mags.len()
    }
}

fn conductance(net: &Network) -> (DMatrix<f64>, DMatrix<f64>) {
    let y = build_admittance(net, Precision::DOUBLE).to_c64();
    let n = net.len();
    (
        DMatrix::from_fn(n, n, |i, k| y[i][k].re),
        DMatrix::from_fn(n, n, |i, k| y[i][k].im),
    )
}

fn injections(g: &DMatrix<f64>, b: &DMatrix<f64>, s: &NrState) -> (Vec<f64>, Vec<f64>) {
    let n = s.theta.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        for k in 0..n {
            let (gik, bik) = (g[(i, k)], b[(i, k)]);
            if gik == 0.0 && bik == 0.0 {
                continue;
            }
            let t = s.theta[i] - s.theta[k];
            let vv = s.vmag[i] * s.vmag[k];
            p[i] += vv * (gik * t.cos() + bik * t.sin());
            q[i] += vv * (gik * t.sin() - bik * t.cos());
        }
    }
    (p, q)
}

/// Scheduled minus computed: `P` at every non-slack bus, then `Q` at every
/// PQ bus, each in bus order.
pub fn polar_mismatch(net: &Network, state: &NrState) -> Vec<f64> {
    let (g, b) = conductance(net);
    mismatch_with(net, &Layout::new(net), &g, &b, state)
}

fn mismatch_with(net: &Network, lay: &Layout, g: &DMatrix<f64>, b: &DMatrix<f64>, s: &NrState) -> Vec<f64> {
    let (p, q) = injections(g, b, s);
    let mut out = Vec::with_capacity(lay.len());
    for &i in &lay.angles {
        out.push(net.bus(i).injection().re - p[i]);
    }
    for &i in &lay.mags {
        out.push(net.bus(i).injection().im - q[i]);
    }
    out
}

/// Derivative of the computed injections with respect to the unknowns
/// (the negative of the mismatch Jacobian).
pub fn polar_jacobian(net: &Network, state: &NrState) -> DMatrix<f64> {
    let (g, b) = conductance(net);
    jacobian_with(&Layout::new(net), &g, &b, state)
}

fn jacobian_with(lay: &Layout, g: &DMatrix<f64>, b: &DMatrix<f64>, s: &NrState) -> DMatrix<f64> {
    let (p, q) = injections(g, b, s);
    let mut j = DMatrix::zeros(lay.len(), lay.len());
    let v = &s.vmag;
    let rows = lay.angles.iter().map(|&i| (i, true)).chain(lay.mags.iter().map(|&i| (i, false)));
    for (r, (i, is_p)) in rows.enumerate() {
        let cols = lay.angles.iter().map(|&k| (k, true)).chain(lay.mags.iter().map(|&k| (k, false)));
        for (c, (k, is_angle)) in cols.enumerate() {
            let (gik, bik) = (g[(i, k)], b[(i, k)]);
            let t = s.theta[i] - s.theta[k];
            let (cs, sn) = (gik * t.cos() + bik * t.sin(), gik * t.sin() - bik * t.cos());
            j[(r, c)] = match (is_p, is_angle, i == k) {
                (true, true, true) => -q[i] - b[(i, i)] * v[i] * v[i],
                (true, true, false) => v[i] * v[k] * sn,
                (true, false, true) => p[i] / v[i] + g[(i, i)] * v[i],
                (true, false, false) => v[i] * cs,
                (false, true, true) => p[i] - g[(i, i)] * v[i] * v[i],
                (false, true, false) => -v[i] * v[k] * cs,
                (false, false, true) => q[i] / v[i] - b[(i, i)] * v[i],
                (false, false, false) => v[i] * sn,
            };
        }
    }
    j
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

pub fn nr_solve(net: &Network, init: Option<NrState>, cfg: NrConfig) -> NrResult {
    let lay = Layout::new(net);
    let (g, b) = conductance(net);
    let mut state = init.unwrap_or_else(|| NrState::flat(net));
    let mut history = Vec::new();
    let mut singular = false;
    let mut iterations = 0;
    let mut mismatch = mismatch_with(net, &lay, &g, &b, &state);
    loop {
        let norm = inf_norm(&mismatch);
        history.push(norm);
        if norm < cfg.tol {
            break;
        }
        if !norm.is_finite() || iterations == cfg.max_iter {
            break;
        }
        let jac = jacobian_with(&lay, &g, &b, &state);
        let Some(dx) = jac.lu().solve(&DVector::from_vec(mismatch.clone())) else {
            singular = true;
            break;
        };
        for (c, &i) in lay.angles.iter().enumerate() {
            state.theta[i] += dx[c];
        }
        for (c, &i) in lay.mags.iter().enumerate() {
            state.vmag[i] += dx[lay.angles.len() + c];
        }
        iterations += 1;
        mismatch = mismatch_with(net, &lay, &g, &b, &state);
    }
    let converged = history.last().is_some_and(|&n| n < cfg.tol);
    NrResult {
        converged,
        iterations,
        state,
        mismatch,
        history,
        singular_jacobian: singular,
    }
}
