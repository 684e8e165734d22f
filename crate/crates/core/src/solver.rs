//! End-to-end solve: series, diagonal Padé ladder at `s = 1`, verdict,
//! residuals, and parameter sweeps with boundary bisection.
//!
//! A point is Feasible when the top rungs of the ladder agree within
//! `eps_sol` and the recovered voltages satisfy the power flow to
//! `eps_res`. Near the feasibility boundary the ladder converges too slowly
//! for that; the top Padé value then seeds a Newton refinement, accepted
//! only if the refined solution is no farther from the top Padé value
//! than the upper half of the ladder spreads around it. A point is Infeasible when the ladder does not settle and a
//! genuine Padé pole sits on the real axis in `(0, 1 + delta)`.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::helm::{compute_series, ratio_diagnostics, HelmError, SeriesSet};
use crate::netmodel::{BusKind, Network, NetworkError};
use crate::nr::{nr_solve, NrConfig, NrState};
use crate::numerics::{PComplex, Precision};
use crate::pade::{cfraction_from_series, pade_from_series, zero_pole, PadeError};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Series(#[from] HelmError),
    #[error(transparent)]
    Pade(#[from] PadeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolveConfig {
    pub max_order: usize,
    pub precision: Precision,
    pub eps_sol: f64,
    pub eps_res: f64,
    pub delta: f64,
    /// Number of top diagonal degrees compared for stabilization.
    pub ladder_window: usize,
    pub refine: bool,
}

/// Working precision for a given series order: enough headroom for the
/// growth of the Padé systems, never below 256 bits.
pub fn default_precision(order: usize) -> Precision {
    let bits = (order as u32 * 5).div_ceil(2).div_ceil(64) * 64;
    Precision::new(bits.max(256))
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig::with_order(200)
    }
}

impl SolveConfig {
    pub fn with_order(order: usize) -> Self {
        SolveConfig {
            max_order: order,
            precision: default_precision(order),
            eps_sol: 1e-8,
            eps_res: 1e-8,
            delta: 0.05,
            ladder_window: 4,
            refine: true,
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if self.max_order < 10 {
            return Err(SolveError::Config(format!("order {} is below 10", self.max_order)));
        }
        if !(self.eps_sol > 0.0 && self.eps_res > 0.0 && self.delta > 0.0) {
            return Err(SolveError::Config("tolerances must be positive".into()));
        }
        if self.ladder_window < 2 {
            return Err(SolveError::Config("ladder window must be at least 2".into()));
        }
        Ok(())
    }

    /// Diagonal degree evaluated at the top of the ladder.
    pub fn top_degree(&self) -> usize {
        (self.max_order - 1) / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Feasible,
    Infeasible,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Feasible => "Feasible",
            Verdict::Infeasible => "Infeasible",
            Verdict::Inconclusive => "Inconclusive",
        })
    }
}

/// Power mismatch of one bus. For PV buses only the real part is
/// constrained and the magnitude defect is reported separately.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BusMismatch {
    pub power: Complex64,
    pub magnitude_defect: Option<f64>,
}

impl BusMismatch {
    pub fn worst(&self) -> f64 {
        self.power.norm().max(self.magnitude_defect.map_or(0.0, f64::abs))
    }
}

/// Mismatch at every non-slack bus (slack entry is `None`), plus the slack
/// injection `S_r` that balances the network.
pub fn residual(net: &Network, v: &[Complex64]) -> (Vec<Option<BusMismatch>>, Complex64) {
    let y = crate::netmodel::build_admittance(net, Precision::new(64)).to_c64();
    let mut slack = Complex64::default();
    let out = net
        .buses()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let current: Complex64 = (0..net.len()).map(|k| y[i][k] * v[k]).sum();
            let computed = v[i] * current.conj();
            match b.kind {
                BusKind::Slack => {
                    slack = computed;
                    None
                }
                BusKind::PQ => Some(BusMismatch {
                    power: (b.injection() - computed).conj(),
                    magnitude_defect: None,
                }),
                BusKind::PV => Some(BusMismatch {
                    power: Complex64::new(b.injection().re - computed.re, 0.0),
                    magnitude_defect: Some(v[i].norm() - b.v_set.unwrap_or(0.0)),
                }),
            }
        })
        .collect();
    (out, slack)
}

/// Computed complex injection `V_i conj((Y V)_i)` at every bus.
fn injections(net: &Network, v: &[Complex64]) -> Vec<Complex64> {
    let y = crate::netmodel::build_admittance(net, Precision::new(64)).to_c64();
    (0..net.len())
        .map(|i| {
            let current: Complex64 = (0..net.len()).map(|k| y[i][k] * v[k]).sum();
            v[i] * current.conj()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BusReport {
    pub id: String,
    pub kind: BusKind,
    pub voltage: Complex64,
    pub magnitude: f64,
    /// `None` for the slack bus.
    pub residual: Option<BusMismatch>,
    /// Reactive generation of PV buses: from the power series when the
    /// ladder settled on its own, otherwise from the refined voltages.
    pub q_gen: Option<f64>,
    /// Reactive generation from the Padé value of the power series.
    pub q_series: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub verdict: Verdict,
    pub guidance: Option<String>,
    /// Empty for Infeasible points.
    pub buses: Vec<BusReport>,
    pub slack_power: Option<Complex64>,
    pub max_residual: Option<f64>,
    /// Largest `|V(M) - V(M_top)|` over the top ladder rungs and all buses.
    pub ladder_spread: f64,
    /// Same over the upper half of the ladder; a Newton-refined solution
    /// must lie within this distance of the top Padé value.
    pub trend_spread: f64,
    /// The voltages come from Newton refinement of the Padé value.
    pub refined: bool,
    pub branch_point: Option<Complex64>,
    pub radius: f64,
    pub nearest_positive_real_pole: Option<f64>,
    /// Bus whose series supplied the pole and ratio diagnostics.
    pub diagnostic_bus: String,
    pub pade_degree: usize,
    pub order: usize,
    pub precision: u32,
    #[serde(skip)]
    pub timing: Duration,
}

impl SolveReport {
    pub fn magnitudes(&self) -> Vec<(String, f64)> {
        self.buses.iter().map(|b| (b.id.clone(), b.magnitude)).collect()
    }

    pub fn magnitude(&self, id: &str) -> Option<f64> {
        self.buses.iter().find(|b| b.id == id).map(|b| b.magnitude)
    }
}

/// Diagonal Padé values at `s = 1` for degrees `first..=top` of one
/// coefficient sequence, highest degree last. `None` where a convergent
/// has a pole at `s = 1`.
fn ladder_values(coeffs: &[PComplex], first: usize, top: usize) -> Result<Vec<Option<Complex64>>, PadeError> {
    let cf = cfraction_from_series(coeffs, 2 * top)?;
    let values = cf.convergent_values(&PComplex::one(coeffs[0].prec()));
    let last = values.last().cloned().flatten();
    Ok((first..=top)
        .map(|m| {
            // A terminated fraction is exact from its depth on.
            match values.get(2 * m) {
                Some(v) => v.as_ref().map(|z| z.to_c64()),
                None if cf.terminated => last.as_ref().map(|z| z.to_c64()),
                None => None,
            }
        })
        .collect())
}

/// Largest distance of any rung from the top rung.
fn spread(rungs: &[Option<Complex64>]) -> f64 {
    let Some(Some(top)) = rungs.last() else {
        return f64::INFINITY;
    };
    rungs
        .iter()
        .map(|r| r.map_or(f64::INFINITY, |z| (z - top).norm()))
        .fold(0.0, f64::max)
}

pub fn solve(net: &Network, cfg: &SolveConfig) -> Result<SolveReport, SolveError> {
    cfg.validate()?;
    let start = Instant::now();
    let set = compute_series(net, cfg.precision, cfg.max_order)?;
    let mut report = classify(net, &set, cfg)?;
    report.timing = start.elapsed();
    Ok(report)
}

/// Verdict and report from an already computed series.
pub fn classify(net: &Network, set: &SeriesSet, cfg: &SolveConfig) -> Result<SolveReport, SolveError> {
    let top = cfg.top_degree().min(set.order() / 2);
    let window = cfg.ladder_window.min(top - top / 2 + 1);
    let n = net.len();
    let slack = net.slack();

    let mut pade_v = vec![net.reference_voltage(); n];
    let mut q_series = vec![None; n];
    let mut worst = 0.0f64;
    let mut worst_bus = net.non_slack().start;
    let mut trend = 0.0f64;
    for i in net.non_slack() {
        let rungs = ladder_values(&set.bus(i).c, top / 2, top)?;
        let s = spread(&rungs[rungs.len() - window..]);
        if s > worst || s.is_nan() {
            worst = s;
            worst_bus = i;
        }
        trend = trend.max(spread(&rungs));
        pade_v[i] = rungs.last().cloned().flatten().unwrap_or(Complex64::new(f64::NAN, f64::NAN));
        if set.bus(i).kind == BusKind::PV {
            let g = ladder_values(&set.bus(i).g, top, top)?;
            q_series[i] = g.last().cloned().flatten().map(|z| z.im);
        }
    }
    let ladder_spread = if worst.is_nan() { f64::INFINITY } else { worst };
    let stabilized = ladder_spread <= cfg.eps_sol;

    let diag = ratio_diagnostics(&set.bus(worst_bus).c);
    let pa = pade_from_series(&set.bus(worst_bus).c, top, top)?;
    let nearest_pole = match zero_pole(&pa) {
        Ok(zp) => zp.nearest_positive_real_pole(cfg.delta),
        Err(PadeError::Numerics(_)) => None,
        Err(e) => return Err(e.into()),
    };

    let mut report = SolveReport {
        verdict: Verdict::Inconclusive,
        guidance: None,
        buses: Vec::new(),
        slack_power: None,
        max_residual: None,
        ladder_spread,
        trend_spread: trend,
        refined: false,
        branch_point: diag.branch_point,
        radius: diag.radius,
        nearest_positive_real_pole: nearest_pole,
        diagnostic_bus: net.bus(worst_bus).id.clone(),
        pade_degree: top,
        order: set.order(),
        precision: set.precision().bits(),
        timing: Duration::ZERO,
    };

    let finite = pade_v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    let worst_mismatch = |v: &[Complex64]| -> f64 {
        residual(net, v).0.iter().flatten().map(BusMismatch::worst).fold(0.0, f64::max)
    };

    let mut accepted: Option<(Vec<Complex64>, bool)> = None;
    if finite && stabilized && worst_mismatch(&pade_v) <= cfg.eps_res {
        accepted = Some((pade_v.clone(), false));
    } else if finite && cfg.refine && ladder_spread.is_finite() {
        let nr = nr_solve(
            net,
            Some(NrState::from_voltages(net, &pade_v)),
            NrConfig {
                tol: cfg.eps_res * 1e-3,
                max_iter: 20,
            },
        );
        if nr.converged {
            let v = nr.state.voltages();
            let moved = (0..n).map(|i| (v[i] - pade_v[i]).norm()).fold(0.0, f64::max);
            if moved <= trend.max(cfg.eps_sol) && worst_mismatch(&v) <= cfg.eps_res {
                accepted = Some((v, true));
            }
        }
    }

    let pole_in_window = nearest_pole.is_some_and(|x| x < 1.0 + cfg.delta);
    let shown = match &accepted {
        Some((v, refined)) => {
            report.verdict = Verdict::Feasible;
            report.refined = *refined;
            Some(v.clone())
        }
        None if !stabilized && pole_in_window => {
            report.verdict = Verdict::Infeasible;
            None
        }
        None => {
            report.guidance = Some(format!(
                "ladder spread {ladder_spread:.3e} at degree {top}; raise the order (--order) or the precision (--precision)"
            ));
            finite.then(|| pade_v.clone())
        }
    };
    if let Some(v) = shown {
        let (mism, slack_power) = residual(net, &v);
        let computed = injections(net, &v);
        report.max_residual = Some(mism.iter().flatten().map(BusMismatch::worst).fold(0.0, f64::max));
        report.slack_power = Some(slack_power);
        report.buses = net
            .buses()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let q_net = (b.kind == BusKind::PV).then(|| computed[i].im);
                BusReport {
                    id: b.id.clone(),
                    kind: b.kind,
                    voltage: v[i],
                    magnitude: v[i].norm(),
                    residual: mism[i],
                    q_gen: if report.refined || i == slack { q_net } else { q_series[i].or(q_net) },
                    q_series: q_series[i],
                }
            })
            .collect();
    }
    Ok(report)
}

/// A sweep over one numeric network field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSpec {
    /// `BUS.FIELD`, e.g. `bus6.p_gen`.
    pub path: String,
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

impl std::str::FromStr for SweepSpec {
    type Err = String;

    /// `BUS.FIELD:FROM:TO:STEP`.
    fn from_str(text: &str) -> Result<Self, String> {
        let parts: Vec<&str> = text.split(':').collect();
        let [path, from, to, step] = parts.as_slice() else {
            return Err(format!("expected BUS.FIELD:FROM:TO:STEP, got `{text}`"));
        };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
        let spec = SweepSpec {
            path: path.to_string(),
            from: num(from)?,
            to: num(to)?,
            step: num(step)?,
        };
        if !(spec.step > 0.0) || !spec.from.is_finite() || !spec.to.is_finite() {
            return Err("step must be positive and bounds finite".into());
        }
        Ok(spec)
    }
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        let (lo, hi) = if self.from <= self.to { (self.from, self.to) } else { (self.to, self.from) };
        let count = ((hi - lo) / self.step + 1e-9).floor() as usize;
        // Rounded so that e.g. 24 steps of 0.05 from -0.2 print as 1.
        (0..=count)
            .map(|k| ((lo + k as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub report: Option<SolveReport>,
    pub error: Option<String>,
}

impl SweepPoint {
    pub fn is_feasible(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.verdict == Verdict::Feasible)
    }
}

/// Feasibility transition between `inside` (Feasible) and `outside`,
/// bracketed to within `step / 100`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Boundary {
    pub inside: f64,
    pub outside: f64,
    pub estimate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub path: String,
    pub points: Vec<SweepPoint>,
    pub boundaries: Vec<Boundary>,
}

fn solve_at(net: &Network, path: &str, value: f64, cfg: &SolveConfig) -> SweepPoint {
    let mut local = net.clone();
    let outcome = local
        .set_field(path, value)
        .map_err(SolveError::from)
        .and_then(|_| solve(&local, cfg));
    match outcome {
        Ok(r) => SweepPoint {
            value,
            report: Some(r),
            error: None,
        },
        Err(e) => SweepPoint {
            value,
            report: None,
            error: Some(e.to_string()),
        },
    }
}

/// Independent solves at every sweep value, in parallel on the current
/// rayon pool, then bisection of each Feasible/non-Feasible transition.
/// Points are returned in increasing parameter order.
pub fn sweep(net: &Network, spec: &SweepSpec, cfg: &SolveConfig) -> Result<SweepResult, SolveError> {
    cfg.validate()?;
    net.get_field(&spec.path)?;
    let points: Vec<SweepPoint> = spec
        .values()
        .into_par_iter()
        .map(|x| solve_at(net, &spec.path, x, cfg))
        .collect();
    let tol = spec.step / 100.0;
    let brackets: Vec<(f64, f64)> = points
        .windows(2)
        .filter(|w| w[0].is_feasible() != w[1].is_feasible())
        .map(|w| if w[0].is_feasible() { (w[0].value, w[1].value) } else { (w[1].value, w[0].value) })
        .collect();
    let boundaries = brackets
        .into_par_iter()
        .map(|(mut inside, mut outside)| {
            while (outside - inside).abs() > tol {
                let mid = 0.5 * (inside + outside);
                if solve_at(net, &spec.path, mid, cfg).is_feasible() {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            Boundary {
                inside,
                outside,
                estimate: 0.5 * (inside + outside),
            }
        })
        .collect();
    Ok(SweepResult {
        path: spec.path.clone(),
        points,
        boundaries,
    })
}

impl SweepResult {
    /// One row per point: parameter, verdict, `|V|` per bus, `Q` per PV
    /// bus, Fabry estimate, nearest positive real pole.
    pub fn to_csv(&self, net: &Network) -> String {
        use std::fmt::Write as _;
        let ids: Vec<&str> = net.buses().iter().map(|b| b.id.as_str()).collect();
        let pv: Vec<&str> = net
            .buses()
            .iter()
            .filter(|b| b.kind == BusKind::PV)
            .map(|b| b.id.as_str())
            .collect();
        let mut out = String::from("param,verdict");
        for id in &ids {
            let _ = write!(out, ",vmag_{id}");
        }
        for id in &pv {
            let _ = write!(out, ",q_{id}");
        }
        out.push_str(",sb_re,sb_im,nearest_pole\n");
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for p in &self.points {
            let _ = write!(out, "{:e}", p.value);
            let Some(r) = &p.report else {
                let _ = writeln!(out, ",Error{}", ",".repeat(ids.len() + pv.len() + 3));
                continue;
            };
            let _ = write!(out, ",{}", r.verdict);
            for id in &ids {
                let _ = write!(out, ",{}", opt(r.magnitude(id)));
            }
            for id in &pv {
                let q = r.buses.iter().find(|b| b.id == *id).and_then(|b| b.q_gen);
                let _ = write!(out, ",{}", opt(q));
            }
            let _ = writeln!(
                out,
                ",{},{},{}",
                opt(r.branch_point.map(|z| z.re)),
                opt(r.branch_point.map(|z| z.im)),
                opt(r.nearest_positive_real_pole)
            );
        }
        out
    }
}
