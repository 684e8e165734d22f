//! Network data model: buses, series branches, JSON input and the bus
//! admittance matrix.
//!
//! Loads are given as positive consumed power and enter the power flow as
//! negative injections. The slack bus is always stored last; the remaining
//! buses keep their input order.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{CMatrix, PComplex, Precision};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusKind {
    #[serde(rename = "slack", alias = "Slack", alias = "SLACK")]
    Slack,
    #[serde(rename = "pq", alias = "PQ")]
    PQ,
    #[serde(rename = "pv", alias = "PV")]
    PV,
}

impl fmt::Display for BusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BusKind::Slack => "slack",
            BusKind::PQ => "pq",
            BusKind::PV => "pv",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: String,
    pub kind: BusKind,
    /// Consumed complex power (PQ buses).
    pub s_load: Option<Complex64>,
    /// Active generation (PV buses).
    pub p_gen: Option<f64>,
    /// Voltage magnitude setpoint (PV buses; slack magnitude if given).
    pub v_set: Option<f64>,
    /// Reference phasor (slack only), argument zero.
    pub v_slack: Option<Complex64>,
}

impl Bus {
    pub fn slack(id: &str, magnitude: f64) -> Self {
        Bus {
            id: id.to_string(),
            kind: BusKind::Slack,
            s_load: None,
            p_gen: None,
            v_set: None,
            v_slack: Some(Complex64::new(magnitude, 0.0)),
        }
    }

    pub fn pq(id: &str, load: Complex64) -> Self {
        Bus {
            id: id.to_string(),
            kind: BusKind::PQ,
            s_load: Some(load),
            p_gen: None,
            v_set: None,
            v_slack: None,
        }
    }

    pub fn pv(id: &str, p_gen: f64, v_set: f64) -> Self {
        Bus {
            id: id.to_string(),
            kind: BusKind::PV,
            s_load: None,
            p_gen: Some(p_gen),
            v_set: Some(v_set),
            v_slack: None,
        }
    }

    /// Scheduled complex injection `S_i`. For PV buses only the real part is
    /// meaningful.
    pub fn injection(&self) -> Complex64 {
        match self.kind {
            BusKind::PQ => -self.s_load.unwrap_or_default(),
            BusKind::PV => Complex64::new(self.p_gen.unwrap_or(0.0), 0.0),
            BusKind::Slack => Complex64::default(),
        }
    }

    /// Slack reference phasor, defaulting to `1.00`.
    pub fn reference_voltage(&self) -> Complex64 {
        self.v_slack
            .or(self.v_set.map(|m| Complex64::new(m, 0.0)))
            .unwrap_or(Complex64::new(1.0, 0.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub from: String,
    pub to: String,
    /// Series impedance `R + jX`.
    pub z: Complex64,
}

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("malformed network document: {0}")]
    Malformed(String),
    #[error("duplicate bus id `{0}`")]
    DuplicateBus(String),
    #[error("branch {from}-{to} references unknown bus `{missing}`")]
    UnknownBus {
        from: String,
        to: String,
        missing: String,
    },
    #[error("branch {0}-{1} has zero impedance")]
    ZeroImpedance(String, String),
    #[error("missing slack bus")]
    MissingSlack,
    #[error("multiple slack buses: {0:?}")]
    MultipleSlack(Vec<String>),
    #[error("invalid bus `{id}`: {reason}")]
    InvalidBus { id: String, reason: String },
    #[error("invalid branch {from}-{to}: {reason}")]
    InvalidBranch {
        from: String,
        to: String,
        reason: String,
    },
    #[error("no bus matches `{0}`")]
    NoSuchBus(String),
    #[error("unknown or non-numeric field `{field}` on bus `{bus}`")]
    NoSuchField { bus: String, field: String },
}

/// Something wrong with a network, reported as data rather than an error.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Diagnostic {
    MissingSlack,
    MultipleSlack(Vec<String>),
    DisconnectedGraph { unreachable: Vec<String> },
    IsolatedBus(String),
    Schema { bus: String, reason: String },
    BadBranch { from: String, to: String, reason: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::MissingSlack => write!(f, "missing slack"),
            Diagnostic::MultipleSlack(ids) => write!(f, "multiple slack: {}", ids.join(", ")),
            Diagnostic::DisconnectedGraph { unreachable } => {
                write!(f, "disconnected graph: {} unreachable from slack", unreachable.join(", "))
            }
            Diagnostic::IsolatedBus(id) => write!(f, "isolated bus {id}"),
            Diagnostic::Schema { bus, reason } => write!(f, "schema: bus {bus}: {reason}"),
            Diagnostic::BadBranch { from, to, reason } => write!(f, "branch {from}-{to}: {reason}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    index: HashMap<String, usize>,
}

impl Network {
    /// Assembles a network without validation. Buses are reordered so the
    /// slack (the first one, if several) comes last.
    pub fn from_parts(buses: Vec<Bus>, branches: Vec<Branch>) -> Self {
        let mut ordered: Vec<Bus> = Vec::with_capacity(buses.len());
        let mut slack = None;
        for b in buses {
            if b.kind == BusKind::Slack && slack.is_none() {
                slack = Some(b);
            } else {
                ordered.push(b);
            }
        }
        ordered.extend(slack);
        let index = ordered
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.clone(), i))
            .collect();
        Network {
            buses: ordered,
            branches,
            index,
        }
    }

    /// Validating constructor used by the parser.
    pub fn new(buses: Vec<Bus>, branches: Vec<Branch>) -> Result<Self, NetworkError> {
        let mut seen = HashSet::new();
        for b in &buses {
            if !seen.insert(b.id.as_str()) {
                return Err(NetworkError::DuplicateBus(b.id.clone()));
            }
        }
        let slacks: Vec<String> = buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .map(|b| b.id.clone())
            .collect();
        match slacks.len() {
            0 => return Err(NetworkError::MissingSlack),
            1 => {}
            _ => return Err(NetworkError::MultipleSlack(slacks)),
        }
        for b in &buses {
            if let Some(reason) = bus_schema_problem(b) {
                return Err(NetworkError::InvalidBus {
                    id: b.id.clone(),
                    reason,
                });
            }
        }
        let mut pairs = HashSet::new();
        for br in &branches {
            for end in [&br.from, &br.to] {
                if !seen.contains(end.as_str()) {
                    return Err(NetworkError::UnknownBus {
                        from: br.from.clone(),
                        to: br.to.clone(),
                        missing: end.clone(),
                    });
                }
            }
            if br.z == Complex64::default() {
                return Err(NetworkError::ZeroImpedance(br.from.clone(), br.to.clone()));
            }
            if let Some(reason) = branch_problem(br, &mut pairs) {
                return Err(NetworkError::InvalidBranch {
                    from: br.from.clone(),
                    to: br.to.clone(),
                    reason,
                });
            }
        }
        Ok(Self::from_parts(buses, branches))
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    pub fn bus(&self, i: usize) -> &Bus {
        &self.buses[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Looks a bus up by id, accepting `6` for `bus6` and vice versa.
    pub fn resolve_bus(&self, name: &str) -> Result<usize, NetworkError> {
        if let Some(i) = self.index_of(name) {
            return Ok(i);
        }
        let alt = match name.strip_prefix("bus") {
            Some(rest) => rest.to_string(),
            None => format!("bus{name}"),
        };
        self.index_of(&alt)
            .ok_or_else(|| NetworkError::NoSuchBus(name.to_string()))
    }

    /// Index of the slack bus (always the last one in a validated network).
    pub fn slack(&self) -> usize {
        self.buses.len() - 1
    }

    /// Indices of the non-slack buses, in solve order.
    pub fn non_slack(&self) -> std::ops::Range<usize> {
        0..self.buses.len().saturating_sub(1)
    }

    pub fn reference_voltage(&self) -> Complex64 {
        self.buses[self.slack()].reference_voltage()
    }

    /// Sets a numeric field addressed as `BUS.FIELD`. Fields: `p_gen`,
    /// `v_set`, `v_slack`, `p_load`, `q_load`.
    pub fn set_field(&mut self, path: &str, value: f64) -> Result<(), NetworkError> {
        let (bus, field) = path
            .rsplit_once('.')
            .ok_or_else(|| NetworkError::NoSuchField {
                bus: path.to_string(),
                field: String::new(),
            })?;
        let i = self.resolve_bus(bus)?;
        let b = &mut self.buses[i];
        let bad = || NetworkError::NoSuchField {
            bus: bus.to_string(),
            field: field.to_string(),
        };
        match (field, b.kind) {
            ("p_gen", BusKind::PV) => b.p_gen = Some(value),
            ("v_set", BusKind::PV) => b.v_set = Some(value),
            ("v_set" | "v_slack", BusKind::Slack) => {
                b.v_slack = Some(Complex64::new(value, 0.0));
                b.v_set = None;
            }
            ("p_load", BusKind::PQ) => b.s_load.get_or_insert_with(Default::default).re = value,
            ("q_load", BusKind::PQ) => b.s_load.get_or_insert_with(Default::default).im = value,
            _ => return Err(bad()),
        }
        Ok(())
    }

    pub fn get_field(&self, path: &str) -> Result<f64, NetworkError> {
        let (bus, field) = path.rsplit_once('.').ok_or_else(|| NetworkError::NoSuchField {
            bus: path.to_string(),
            field: String::new(),
        })?;
        let b = &self.buses[self.resolve_bus(bus)?];
        let v = match field {
            "p_gen" => b.p_gen,
            "v_set" if b.kind == BusKind::Slack => Some(b.reference_voltage().re),
            "v_set" => b.v_set,
            "v_slack" => b.v_slack.map(|v| v.re),
            "p_load" => b.s_load.map(|s| s.re),
            "q_load" => b.s_load.map(|s| s.im),
            _ => None,
        };
        v.ok_or_else(|| NetworkError::NoSuchField {
            bus: bus.to_string(),
            field: field.to_string(),
        })
    }

    /// Neighbours of each bus (open neighbourhood), by index.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.buses.len()];
        for br in &self.branches {
            if let (Some(a), Some(b)) = (self.index_of(&br.from), self.index_of(&br.to)) {
                if a != b {
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
        }
        for n in adj.iter_mut() {
            n.sort_unstable();
            n.dedup();
        }
        adj
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&NetworkDoc::from(self)).expect("network serializes")
    }
}

fn bus_schema_problem(b: &Bus) -> Option<String> {
    let positive = |v: Option<f64>| v.is_some_and(|m| m.is_finite() && m > 0.0);
    match b.kind {
        BusKind::PV => {
            if b.p_gen.is_none() {
                return Some("PV bus needs p_gen".into());
            }
            if b.v_set.is_none() {
                return Some("PV bus needs v_set".into());
            }
            if !positive(b.v_set) {
                return Some("v_set must be positive".into());
            }
            if b.s_load.is_some() {
                return Some("PV bus cannot carry s_load".into());
            }
        }
        BusKind::PQ => {
            if b.s_load.is_none() {
                return Some("PQ bus needs s_load".into());
            }
            if b.p_gen.is_some() || b.v_set.is_some() {
                return Some("PQ bus takes s_load only".into());
            }
        }
        BusKind::Slack => {
            if let Some(v) = b.v_slack {
                if v.im != 0.0 {
                    return Some("slack voltage argument must be zero".into());
                }
                if !(v.re > 0.0) {
                    return Some("slack voltage magnitude must be positive".into());
                }
                if b.v_set.is_some_and(|m| m != v.re) {
                    return Some("v_set and v_slack disagree".into());
                }
            } else if b.v_set.is_some() && !positive(b.v_set) {
                return Some("v_set must be positive".into());
            }
        }
    }
    None
}

fn branch_problem<'a>(br: &'a Branch, pairs: &mut HashSet<(&'a str, &'a str)>) -> Option<String> {
    if br.from == br.to {
        return Some("branch connects a bus to itself".into());
    }
    let key = if br.from < br.to {
        (br.from.as_str(), br.to.as_str())
    } else {
        (br.to.as_str(), br.from.as_str())
    };
    if !pairs.insert(key) {
        return Some("parallel branch; combine it with the existing one".into());
    }
    if !(br.z.re.is_finite() && br.z.im.is_finite()) {
        return Some("impedance must be finite".into());
    }
    None
}

/// Structural checks for a network that may not have come through the
/// parser. Returns an empty list for a well-posed network.
pub fn validate(net: &Network) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let slacks: Vec<String> = net
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .map(|b| b.id.clone())
        .collect();
    match slacks.len() {
        0 => out.push(Diagnostic::MissingSlack),
        1 => {}
        _ => out.push(Diagnostic::MultipleSlack(slacks)),
    }
    for b in &net.buses {
        if let Some(reason) = bus_schema_problem(b) {
            out.push(Diagnostic::Schema {
                bus: b.id.clone(),
                reason,
            });
        }
    }
    let mut pairs = HashSet::new();
    for br in &net.branches {
        let missing = [&br.from, &br.to]
            .into_iter()
            .find(|id| net.index_of(id).is_none());
        let reason = if let Some(id) = missing {
            Some(format!("unknown bus {id}"))
        } else if br.z == Complex64::default() {
            Some("zero impedance".to_string())
        } else {
            branch_problem(br, &mut pairs)
        };
        if let Some(reason) = reason {
            out.push(Diagnostic::BadBranch {
                from: br.from.clone(),
                to: br.to.clone(),
                reason,
            });
        }
    }
    let adj = net.adjacency();
    for (i, n) in adj.iter().enumerate() {
        if n.is_empty() && net.len() > 1 {
            out.push(Diagnostic::IsolatedBus(net.buses[i].id.clone()));
        }
    }
    if let Some(root) = net.buses.iter().position(|b| b.kind == BusKind::Slack) {
        let mut seen = vec![false; net.len()];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        let unreachable: Vec<String> = seen
            .iter()
            .enumerate()
            .filter(|(_, s)| !**s)
            .map(|(i, _)| net.buses[i].id.clone())
            .collect();
        if !unreachable.is_empty() {
            out.push(Diagnostic::DisconnectedGraph { unreachable });
        }
    }
    out
}

/// Bus admittance matrix `Y` in network bus order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmittanceMatrix {
    matrix: CMatrix,
    bus_ids: Vec<String>,
}

impl AdmittanceMatrix {
    pub fn n(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn get(&self, i: usize, k: usize) -> &PComplex {
        &self.matrix[(i, k)]
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn bus_ids(&self) -> &[String] {
        &self.bus_ids
    }

    pub fn precision(&self) -> Precision {
        self.matrix[(0, 0)].prec()
    }

    /// Double-precision copy, row-major.
    pub fn to_c64(&self) -> Vec<Vec<Complex64>> {
        (0..self.n())
            .map(|i| (0..self.n()).map(|k| self.get(i, k).to_c64()).collect())
            .collect()
    }

    /// Principal submatrix over the given indices.
    pub fn submatrix(&self, idx: &[usize]) -> CMatrix {
        CMatrix::from_fn(idx.len(), idx.len(), |a, b| self.matrix[(idx[a], idx[b])].clone())
    }
}

/// `Y_ii = sum 1/Z_ik`, `Y_ik = -1/Z_ik`, computed at `prec` from the
/// branch impedances.
pub fn build_admittance(net: &Network, prec: Precision) -> AdmittanceMatrix {
    let n = net.len();
    let mut m = CMatrix::zeros(n, n, prec);
    for br in &net.branches {
        let (Some(a), Some(b)) = (net.index_of(&br.from), net.index_of(&br.to)) else {
            continue;
        };
        let y = PComplex::from_c64(prec, br.z).recip();
        m[(a, a)] += &y;
        m[(b, b)] += &y;
        m[(a, b)] -= &y;
        m[(b, a)] -= &y;
    }
    AdmittanceMatrix {
        matrix: m,
        bus_ids: net.buses.iter().map(|b| b.id.clone()).collect(),
    }
}

// JSON document shape.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    buses: Vec<BusDoc>,
    branches: Vec<BranchDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusDoc {
    id: String,
    kind: BusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s_load: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_gen: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v_set: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v_slack: Option<SlackVoltage>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SlackVoltage {
    Magnitude(f64),
    Phasor([f64; 2]),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchDoc {
    from: String,
    to: String,
    z: [f64; 2],
}

impl From<&Network> for NetworkDoc {
    fn from(net: &Network) -> Self {
        NetworkDoc {
            buses: net
                .buses
                .iter()
                .map(|b| BusDoc {
                    id: b.id.clone(),
                    kind: b.kind,
                    s_load: b.s_load.map(|s| [s.re, s.im]),
                    p_gen: b.p_gen,
                    v_set: b.v_set,
                    v_slack: b.v_slack.map(|v| SlackVoltage::Phasor([v.re, v.im])),
                })
                .collect(),
            branches: net
                .branches
                .iter()
                .map(|br| BranchDoc {
                    from: br.from.clone(),
                    to: br.to.clone(),
                    z: [br.z.re, br.z.im],
                })
                .collect(),
        }
    }
}

pub fn parse_network(text: &str) -> Result<Network, NetworkError> {
    let doc: NetworkDoc =
        serde_json::from_str(text).map_err(|e| NetworkError::Malformed(e.to_string()))?;
    let buses = doc
        .buses
        .into_iter()
        .map(|b| Bus {
            id: b.id,
            kind: b.kind,
            s_load: b.s_load.map(|[p, q]| Complex64::new(p, q)),
            p_gen: b.p_gen,
            v_set: b.v_set,
            v_slack: b.v_slack.map(|v| match v {
                SlackVoltage::Magnitude(m) => Complex64::new(m, 0.0),
                SlackVoltage::Phasor([re, im]) => Complex64::new(re, im),
            }),
        })
        .collect();
    let branches = doc
        .branches
        .into_iter()
        .map(|b| Branch {
            from: b.from,
            to: b.to,
            z: Complex64::new(b.z[0], b.z[1]),
        })
        .collect();
    Network::new(buses, branches)
}

/// The seven-bus test network with bus 6 generation `p6`.
pub fn seven_bus(p6: f64) -> Network {
    let c = Complex64::new;
    let buses = vec![
        Bus::slack("slack", 1.0),
        Bus::pq("bus1", c(0.20, 0.10)),
        Bus::pq("bus2", c(0.10, 0.05)),
        Bus::pq("bus3", c(0.20, 0.10)),
        Bus::pq("bus4", c(0.20, 0.10)),
        Bus::pv("bus5", 1.00, 1.10),
        Bus::pv("bus6", p6, 1.10),
    ];
    let br = |a: &str, b: &str, r: f64, x: f64| Branch {
        from: a.into(),
        to: b.into(),
        z: c(r, x),
    };
    let branches = vec![
        br("slack", "bus1", 0.70, 0.40),
        br("bus1", "bus3", 0.50, 0.50),
        br("bus3", "bus6", 0.40, 0.50),
        br("bus1", "bus2", 0.40, 0.60),
        br("bus3", "bus5", 0.30, 0.50),
        br("bus2", "bus5", 0.30, 0.60),
        br("bus6", "bus4", 0.60, 0.80),
        br("bus3", "bus4", 0.50, 0.80),
    ];
    Network::new(buses, branches).expect("seven-bus data is valid")
}
