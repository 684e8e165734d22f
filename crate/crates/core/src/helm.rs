//! Holomorphic embedding: the germ at `s = 0` and the order-by-order power
//! series of every bus voltage.
//!
//! Each non-slack bus carries the series of `V(s)` and `1/V(s)`. Voltage
//! controlled buses additionally carry `Vbar(s) = M^2 / V(s)` and the
//! complex power pair `S(s)`, `Sbar(s) = 2P - S(s)`. The reflected series
//! `W(s) = conj(V(conj s))` never needs storing: its coefficients are the
//! conjugates of the `V` coefficients.

use std::fmt::Write as _;

use rug::Float;
use thiserror::Error;

use crate::netmodel::{build_admittance, AdmittanceMatrix, BusKind, Network};
use crate::numerics::{lu_factor, lu_solve, LuFactors, NumericsError, PComplex, Precision};

#[derive(Debug, Error, PartialEq)]
pub enum HelmError {
    #[error("network has no non-slack bus")]
    Trivial,
    #[error("bus admittance system is singular (disconnected or ill-posed network): {0}")]
    Singular(NumericsError),
    #[error("voltage setpoint of bus `{0}` must be nonzero")]
    ZeroSetpoint(String),
    #[error("series for bus `{0}` has zero constant term")]
    ZeroGerm(String),
}

/// Coefficient arrays of one bus. `cbar`, `g`, `gbar` are empty for buses
/// that are not voltage controlled.
#[derive(Clone, Debug, PartialEq)]
pub struct BusSeries {
    pub id: String,
    pub kind: BusKind,
    pub c: Vec<PComplex>,
    pub d: Vec<PComplex>,
    pub cbar: Vec<PComplex>,
    pub g: Vec<PComplex>,
    pub gbar: Vec<PComplex>,
}

impl BusSeries {
    pub fn series(&self, which: SeriesKind) -> &[PComplex] {
        match which {
            SeriesKind::C => &self.c,
            SeriesKind::D => &self.d,
            SeriesKind::Cbar => &self.cbar,
            SeriesKind::G => &self.g,
            SeriesKind::Gbar => &self.gbar,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesKind {
    C,
    D,
    Cbar,
    G,
    Gbar,
}

impl SeriesKind {
    pub const ALL: [SeriesKind; 5] = [
        SeriesKind::C,
        SeriesKind::D,
        SeriesKind::Cbar,
        SeriesKind::G,
        SeriesKind::Gbar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SeriesKind::C => "c",
            SeriesKind::D => "d",
            SeriesKind::Cbar => "cbar",
            SeriesKind::G => "g",
            SeriesKind::Gbar => "gbar",
        }
    }
}

/// Series of every bus in network order; the slack (last) holds the
/// constant reference voltage.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSet {
    prec: Precision,
    order: usize,
    buses: Vec<BusSeries>,
    /// Per bus: conjugated scheduled injection (PQ) or `P` (PV).
    injection_conj: Vec<PComplex>,
    /// `2P` per PV bus, zero elsewhere.
    two_p: Vec<PComplex>,
    /// `M^2` per PV bus, zero elsewhere.
    m_sq: Vec<PComplex>,
}

impl SeriesSet {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn precision(&self) -> Precision {
        self.prec
    }

    pub fn buses(&self) -> &[BusSeries] {
        &self.buses
    }

    pub fn bus(&self, i: usize) -> &BusSeries {
        &self.buses[i]
    }

    pub fn find(&self, id: &str) -> Option<&BusSeries> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// `V_i(s)` coefficients of every bus, slack included.
    pub fn voltages(&self) -> Vec<&[PComplex]> {
        self.buses.iter().map(|b| b.c.as_slice()).collect()
    }

    /// Largest relative violation of the four per-order identities over all
    /// computed orders: `V * (1/V) = 1`, `V * Vbar = M^2`, `S + Sbar = 2P`
    /// and the `Sbar` definition. Relative to the largest term in each sum.
    pub fn invariant_violation(&self) -> f64 {
        let p = self.prec;
        let mut worst = 0.0f64;
        let mut record = |value: &PComplex, target: &PComplex, scale: f64| {
            let e = (value - target).abs_f64();
            if e > 0.0 {
                worst = worst.max(e / scale.max(f64::MIN_POSITIVE));
            }
        };
        let zero = PComplex::zero(p);
        for (i, b) in self.buses.iter().enumerate() {
            if b.kind == BusKind::Slack {
                continue;
            }
            for n in 0..=self.order {
                let (sum, scale) = convolve_at(&b.c, &b.d, n);
                let one = PComplex::one(p);
                record(&sum, if n == 0 { &one } else { &zero }, scale);
                if b.kind == BusKind::PV {
                    let (sum, scale) = convolve_at(&b.c, &b.cbar, n);
                    record(&sum, if n == 0 { &self.m_sq[i] } else { &zero }, scale);
                    let s = &b.g[n] + &b.gbar[n];
                    let scale = b.g[n].abs_f64().max(b.gbar[n].abs_f64());
                    record(&s, if n == 0 { &self.two_p[i] } else { &zero }, scale.max(1.0));
                }
            }
        }
        worst
    }

    /// Partial sums `sum_{n<=upto} c_n s^n` for every bus.
    pub fn partial_sums(&self, s: &PComplex, upto: usize) -> Vec<PComplex> {
        self.buses
            .iter()
            .map(|b| horner(&b.c[..=upto.min(self.order)], s))
            .collect()
    }

    /// CSV dump: `bus,series,n,re,im`, values printed with enough decimal
    /// digits to round-trip at the working precision.
    pub fn to_csv(&self) -> String {
        let digits = self.prec.decimal_digits();
        let mut out = String::from("bus,series,n,re,im\n");
        for b in &self.buses {
            for kind in SeriesKind::ALL {
                for (n, z) in b.series(kind).iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        b.id,
                        kind.name(),
                        n,
                        decimal(&z.re, digits),
                        decimal(&z.im, digits)
                    );
                }
            }
        }
        out
    }
}

pub(crate) fn decimal(x: &Float, digits: usize) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    x.to_string_radix(10, Some(digits))
}

fn horner(coeffs: &[PComplex], s: &PComplex) -> PComplex {
    let mut acc = coeffs.last().cloned().unwrap_or_else(|| PComplex::zero(s.prec()));
    for c in coeffs.iter().rev().skip(1) {
        acc = &(&acc * s) + c;
    }
    acc
}

/// `sum_{m=0..n} a[m] b[n-m]` and the largest term magnitude.
fn convolve_at(a: &[PComplex], b: &[PComplex], n: usize) -> (PComplex, f64) {
    let mut s = PComplex::zero(a[0].prec());
    let mut scale = 0.0f64;
    for m in 0..=n {
        let t = &a[m] * &b[n - m];
        scale = scale.max(t.abs_f64());
        s += &t;
    }
    (s, scale)
}

/// LU factors of the admittance matrix with the slack row and column
/// removed. One factorization serves every order.
pub fn reduced_lu(net: &Network, y: &AdmittanceMatrix) -> Result<LuFactors, HelmError> {
    let idx: Vec<usize> = net.non_slack().collect();
    if idx.is_empty() {
        return Err(HelmError::Trivial);
    }
    lu_factor(&y.submatrix(&idx)).map_err(HelmError::Singular)
}

/// Order-0 series: every voltage equals the reference, powers follow from
/// the constraint equations at `s = 0`.
pub fn germ(net: &Network, y: &AdmittanceMatrix) -> Result<SeriesSet, HelmError> {
    let prec = y.precision();
    let vr = PComplex::from_c64(prec, net.reference_voltage());
    let d0 = vr.recip();
    let n = net.len();
    let mut injection_conj = Vec::with_capacity(n);
    let mut two_p = Vec::with_capacity(n);
    let mut m_sq = Vec::with_capacity(n);
    let mut buses = Vec::with_capacity(n);
    for b in net.buses() {
        let s = b.injection();
        injection_conj.push(PComplex::from_f64(prec, s.re, -s.im));
        two_p.push(PComplex::from_f64(prec, 2.0 * s.re, 0.0));
        let m = if b.kind == BusKind::PV {
            let m = b.v_set.unwrap_or(0.0);
            if m == 0.0 {
                return Err(HelmError::ZeroSetpoint(b.id.clone()));
            }
            m
        } else {
            0.0
        };
        let msq = &PComplex::from_f64(prec, m, 0.0) * &PComplex::from_f64(prec, m, 0.0);
        let mut bs = BusSeries {
            id: b.id.clone(),
            kind: b.kind,
            c: vec![vr.clone()],
            d: Vec::new(),
            cbar: Vec::new(),
            g: Vec::new(),
            gbar: Vec::new(),
        };
        if b.kind != BusKind::Slack {
            bs.d.push(d0.clone());
        }
        if b.kind == BusKind::PV {
            bs.cbar.push(&msq * &d0);
        }
        m_sq.push(msq);
        buses.push(bs);
    }
    let mut set = SeriesSet {
        prec,
        order: 0,
        buses,
        injection_conj,
        two_p,
        m_sq,
    };
    for i in net.non_slack() {
        if set.buses[i].kind == BusKind::PV {
            let g0 = power_coefficient(&set, y, i, 0);
            let gbar0 = &set.two_p[i] - &g0;
            set.buses[i].g.push(g0);
            set.buses[i].gbar.push(gbar0);
        }
    }
    Ok(set)
}

/// `g_i[n] = c_i[0] (h_i[n] - sum_{m=1..n} g_i[n-m] d_i[m])`, where `h` is
/// the conjugated current sum over the closed neighbourhood, taking `Vbar`
/// for voltage-controlled neighbours and the reflected `W` otherwise.
fn power_coefficient(set: &SeriesSet, y: &AdmittanceMatrix, i: usize, n: usize) -> PComplex {
    let prec = set.prec;
    let mut h = PComplex::zero(prec);
    for (k, bk) in set.buses.iter().enumerate() {
        let yik = y.get(i, k);
        if yik.is_zero() {
            continue;
        }
        let v = if bk.kind == BusKind::PV {
            bk.cbar[n].clone()
        } else if n < bk.c.len() {
            bk.c[n].conj()
        } else {
            PComplex::zero(prec)
        };
        h.add_mul(&yik.conj(), &v);
    }
    let b = &set.buses[i];
    for m in 1..=n {
        h.sub_mul(&b.g[n - m], &b.d[m]);
    }
    &b.c[0] * &h
}

/// Extends `state` to order `upto`. `lu` must factor the slack-reduced
/// admittance matrix of the same network at the same precision.
pub fn extend(
    state: &mut SeriesSet,
    y: &AdmittanceMatrix,
    lu: &LuFactors,
    upto: usize,
) -> Result<(), HelmError> {
    let prec = state.prec;
    let ns = lu.dim();
    let slack = state.buses.len() - 1;
    for n in state.order + 1..=upto {
        let rhs: Vec<PComplex> = (0..ns)
            .map(|i| {
                let b = &state.buses[i];
                match b.kind {
                    BusKind::PV => {
                        let mut acc = PComplex::zero(prec);
                        for m in 0..n {
                            acc.add_mul(&b.gbar[n - 1 - m], &b.d[m].conj());
                        }
                        acc
                    }
                    _ => &state.injection_conj[i] * &b.d[n - 1].conj(),
                }
            })
            .collect();
        let cn = lu_solve(lu, &rhs);
        for (i, c) in cn.into_iter().enumerate() {
            state.buses[i].c.push(c);
        }
        state.buses[slack].c.push(PComplex::zero(prec));

        for i in 0..ns {
            let b = &mut state.buses[i];
            let d0 = b.d[0].clone();
            let mut acc = PComplex::zero(prec);
            for m in 0..n {
                acc.add_mul(&b.c[n - m], &b.d[m]);
            }
            b.d.push(-(&acc * &d0));
            if b.kind == BusKind::PV {
                let mut acc = PComplex::zero(prec);
                for m in 0..n {
                    acc.add_mul(&b.c[n - m], &b.cbar[m]);
                }
                b.cbar.push(-(&acc * &d0));
            }
        }
        // Power coefficients need this order's cbar and c of all neighbours.
        let g: Vec<Option<PComplex>> = (0..ns)
            .map(|i| (state.buses[i].kind == BusKind::PV).then(|| power_coefficient(state, y, i, n)))
            .collect();
        for (i, gi) in g.into_iter().enumerate() {
            if let Some(gi) = gi {
                let b = &mut state.buses[i];
                b.gbar.push(-&gi);
                b.g.push(gi);
            }
        }
        state.order = n;
    }
    Ok(())
}

/// Germ plus extension to `order` at precision `prec`.
pub fn compute_series(net: &Network, prec: Precision, order: usize) -> Result<SeriesSet, HelmError> {
    let y = build_admittance(net, prec);
    let lu = reduced_lu(net, &y)?;
    let mut set = germ(net, &y)?;
    for b in set.buses() {
        if b.c[0].is_zero() {
            return Err(HelmError::ZeroGerm(b.id.clone()));
        }
    }
    extend(&mut set, &y, &lu, order)?;
    Ok(set)
}

/// Radius and Fabry estimates from the tail of a coefficient sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioDiagnostics {
    /// Geometric mean of `|c_n / c_{n+1}|` over the top quarter of orders;
    /// infinite for a terminating series.
    pub radius: f64,
    /// `radius` times the circular mean direction of `c_n / c_{n+1}`.
    /// `None` when the tail is identically zero.
    pub branch_point: Option<num_complex::Complex64>,
    /// Ratios that entered the estimate.
    pub samples: usize,
}

/// Ratio-test diagnostics for one coefficient sequence. Needs at least 9
/// coefficients.
pub fn ratio_diagnostics(coeffs: &[PComplex]) -> RatioDiagnostics {
    assert!(coeffs.len() >= 9, "ratio diagnostics need order >= 8");
    let order = coeffs.len() - 1;
    let start = order - order.div_ceil(4);
    let mut log_sum = 0.0f64;
    let (mut cos_sum, mut sin_sum) = (0.0f64, 0.0f64);
    let mut samples = 0usize;
    for n in start..order {
        let (a, b) = (&coeffs[n], &coeffs[n + 1]);
        if a.is_zero() || b.is_zero() {
            continue;
        }
        let r = a / b;
        log_sum += a.log2_abs() - b.log2_abs();
        let theta = r.arg().to_f64();
        cos_sum += theta.cos();
        sin_sum += theta.sin();
        samples += 1;
    }
    if samples == 0 {
        return RatioDiagnostics {
            radius: f64::INFINITY,
            branch_point: None,
            samples,
        };
    }
    let radius = (log_sum / samples as f64).exp2();
    let theta = sin_sum.atan2(cos_sum);
    RatioDiagnostics {
        radius,
        branch_point: Some(num_complex::Complex64::from_polar(radius, theta)),
        samples,
    }
}

impl SeriesSet {
    /// Ratio diagnostics of the voltage series of bus `i`.
    pub fn ratio_diagnostics(&self, i: usize) -> RatioDiagnostics {
        ratio_diagnostics(&self.buses[i].c)
    }
}

/// Largest power mismatch at the non-slack buses when the order-`upto`
/// partial sums at `s = 1` are taken as the voltages. Evaluated at the
/// series precision.
pub fn partial_sum_mismatch(set: &SeriesSet, net: &Network, upto: usize) -> f64 {
    let prec = set.precision();
    let v = set.partial_sums(&PComplex::one(prec), upto);
    let y = build_admittance(net, prec);
    let mut worst = 0.0f64;
    for i in net.non_slack() {
        let mut current = PComplex::zero(prec);
        for (k, vk) in v.iter().enumerate() {
            current.add_mul(y.get(i, k), vk);
        }
        let s = &v[i] * &current.conj();
        let b = net.bus(i);
        let target = PComplex::from_c64(prec, b.injection());
        let e = match b.kind {
            BusKind::PV => {
                let m = b.v_set.unwrap_or(0.0);
                let dp = (&s - &target).re.to_f64().abs();
                dp.max((v[i].abs().to_f64() - m).abs())
            }
            _ => (&s - &target).abs_f64(),
        };
        worst = worst.max(e);
    }
    worst
}
