//! Network data model, topology configurations and case-file ingestion.

use std::collections::{BTreeMap, VecDeque};

use num_complex::Complex64;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::powerflow::VoltVarCurve;
use crate::sampling::{range_from_fractions, InjectionRange, RangeOverride};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("case file: missing `{0}`")]
    MissingMatrix(&'static str),
    #[error("case file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("configuration `{name}` disconnects bus {bus} from the slack bus")]
    Disconnected { name: String, bus: usize },
    #[error("configuration `{name}`: line index {line} does not exist")]
    UnknownLine { name: String, line: usize },
    #[error("native case at `{path}`: {msg}")]
    Schema { path: String, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Slack,
    Pq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    /// External 1-based id.
    pub id: usize,
    pub kind: BusKind,
    pub v_min: f64,
    pub v_max: f64,
    /// Net active injection, generation positive (pu).
    pub p_nom: f64,
    pub q_nom: f64,
    /// Shunt conductance / susceptance at 1 pu voltage (pu).
    #[serde(default)]
    pub g_sh: f64,
    #[serde(default)]
    pub b_sh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltvar: Option<VoltVarCurve>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineStatus {
    Closed,
    Open,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b_sh: f64,
    pub status: LineStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub name: String,
    /// (line index, status) pairs applied on top of the base topology.
    pub line_status_overrides: Vec<(usize, LineStatus)>,
}

impl Configuration {
    pub fn nominal() -> Self {
        Self {
            name: "nominal".to_string(),
            line_status_overrides: Vec::new(),
        }
    }
}

/// Bus voltage limits applied to every PQ bus of a study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            v_min: 0.9,
            v_max: 1.05,
        }
    }
}

impl Network {
    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated network has a slack bus")
    }

    /// Internal indices of the PQ buses in bus order.
    pub fn pq_indices(&self) -> Vec<usize> {
        (0..self.buses.len())
            .filter(|&i| self.buses[i].kind == BusKind::Pq)
            .collect()
    }

    pub fn pq_ids(&self) -> Vec<usize> {
        self.pq_indices().iter().map(|&i| self.buses[i].id).collect()
    }

    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Checks the structural invariants and connectivity.
    pub fn validate(&self) -> Result<(), NetError> {
        let slacks = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slacks != 1 {
            return Err(NetError::Invalid(format!(
                "expected exactly one slack bus, found {slacks}"
            )));
        }
        if !(self.base_mva > 0.0) {
            return Err(NetError::Invalid("base_mva must be positive".into()));
        }
        let mut seen = BTreeMap::new();
        for (k, b) in self.buses.iter().enumerate() {
            if seen.insert(b.id, k).is_some() {
                return Err(NetError::Invalid(format!("duplicate bus id {}", b.id)));
            }
            if b.kind == BusKind::Pq && !(b.v_min < b.v_max) {
                return Err(NetError::Invalid(format!(
                    "bus {}: v_min {} must be below v_max {}",
                    b.id, b.v_min, b.v_max
                )));
            }
            if let Some(c) = &b.voltvar {
                c.validate()
                    .map_err(|e| NetError::Invalid(format!("bus {}: {e}", b.id)))?;
            }
        }
        for (k, l) in self.lines.iter().enumerate() {
            if !seen.contains_key(&l.from) || !seen.contains_key(&l.to) {
                return Err(NetError::Invalid(format!(
                    "line {k} references an undeclared bus ({} - {})",
                    l.from, l.to
                )));
            }
            if l.from == l.to {
                return Err(NetError::Invalid(format!("line {k} is a self loop")));
            }
            if l.r < 0.0 || (l.r == 0.0 && l.x == 0.0) {
                return Err(NetError::Invalid(format!(
                    "line {k} has invalid impedance r={} x={}",
                    l.r, l.x
                )));
            }
        }
        if let Some(bus) = self.first_unreachable() {
            return Err(NetError::Invalid(format!(
                "bus {bus} is not reachable from the slack bus"
            )));
        }
        Ok(())
    }

    /// External id of the first bus not reachable over closed lines, if any.
    pub fn first_unreachable(&self) -> Option<usize> {
        let n = self.buses.len();
        let Some(s) = self.buses.iter().position(|b| b.kind == BusKind::Slack) else {
            return self.buses.first().map(|b| b.id);
        };
        let adj = self.adjacency();
        let mut seen = vec![false; n];
        let mut q = VecDeque::from([s]);
        seen[s] = true;
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    q.push_back(v);
                }
            }
        }
        (0..n).find(|&i| !seen[i]).map(|i| self.buses[i].id)
    }

    /// Neighbor lists (internal indices) over closed lines.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let n = self.buses.len();
        let idx: BTreeMap<usize, usize> =
            self.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            if l.status != LineStatus::Closed {
                continue;
            }
            if let (Some(&a), Some(&b)) = (idx.get(&l.from), idx.get(&l.to)) {
                if !adj[a].contains(&b) {
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
        }
        adj
    }

    /// External ids of the neighbors of bus `id`.
    pub fn neighbors(&self, id: usize) -> Vec<usize> {
        let Some(k) = self.index_of(id) else {
            return Vec::new();
        };
        let mut out: Vec<usize> = self.adjacency()[k].iter().map(|&j| self.buses[j].id).collect();
        out.sort_unstable();
        out
    }

    /// PQ buses of degree one (ends of radial branches), by external id.
    pub fn leaf_buses(&self) -> Vec<usize> {
        let adj = self.adjacency();
        let mut out: Vec<usize> = (0..self.buses.len())
            .filter(|&i| self.buses[i].kind == BusKind::Pq && adj[i].len() == 1)
            .map(|i| self.buses[i].id)
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_radial(&self) -> bool {
        let closed = self.lines.iter().filter(|l| l.status == LineStatus::Closed).count();
        closed + 1 == self.buses.len() && self.first_unreachable().is_none()
    }

    /// Applies per-bus limits to every PQ bus.
    pub fn with_limits(mut self, lim: Limits) -> Self {
        for b in &mut self.buses {
            if b.kind == BusKind::Pq {
                b.v_min = lim.v_min;
                b.v_max = lim.v_max;
            }
        }
        self
    }

    /// Scales all nominal injections.
    pub fn scaled_injections(mut self, factor: f64) -> Self {
        for b in &mut self.buses {
            b.p_nom *= factor;
            b.q_nom *= factor;
        }
        self
    }

    /// Index of the line joining two buses (either orientation).
    pub fn find_line(&self, a: usize, b: usize) -> Option<usize> {
        self.lines
            .iter()
            .position(|l| (l.from == a && l.to == b) || (l.from == b && l.to == a))
    }
}

/// Dense nodal admittance matrix in internal bus order.
pub fn build_admittance(net: &Network) -> Vec<Vec<Complex64>> {
    let n = net.buses.len();
    let idx: BTreeMap<usize, usize> = net.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for l in &net.lines {
        if l.status != LineStatus::Closed {
            continue;
        }
        let (Some(&a), Some(&b)) = (idx.get(&l.from), idx.get(&l.to)) else {
            continue;
        };
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(l.r, l.x);
        let ysh = Complex64::new(0.0, l.b_sh / 2.0);
        y[a][b] -= ys;
        y[b][a] -= ys;
        y[a][a] += ys + ysh;
        y[b][b] += ys + ysh;
    }
    for (k, bus) in net.buses.iter().enumerate() {
        y[k][k] += Complex64::new(bus.g_sh, bus.b_sh);
    }
    y
}

/// Returns a copy of `net` with the configuration's line statuses applied.
pub fn apply_configuration(net: &Network, cfg: &Configuration) -> Result<Network, NetError> {
    let mut out = net.clone();
    for &(k, st) in &cfg.line_status_overrides {
        let Some(l) = out.lines.get_mut(k) else {
            return Err(NetError::UnknownLine {
                name: cfg.name.clone(),
                line: k,
            });
        };
        l.status = st;
    }
    if let Some(bus) = out.first_unreachable() {
        return Err(NetError::Disconnected {
            name: cfg.name.clone(),
            bus,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// MATPOWER subset

struct Matrix {
    rows: Vec<Vec<f64>>,
}

fn strip_comments(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| match l.find('%') {
            Some(p) => l[..p].to_string(),
            None => l.to_string(),
        })
        .collect()
}

/// Finds `mpc.<name> = [ ... ];` and parses its rows.
fn find_matrix(lines: &[String], name: &'static str) -> Result<Option<(Matrix, usize, usize)>, NetError> {
    let head = Regex::new(&format!(r"^\s*mpc\.{name}\s*=\s*\[(.*)$")).unwrap();
    let mut start = None;
    for (k, l) in lines.iter().enumerate() {
        if let Some(c) = head.captures(l) {
            start = Some((k, c[1].to_string()));
            break;
        }
    }
    let Some((k0, first)) = start else {
        return Ok(None);
    };
    let mut rows = Vec::new();
    let mut cur: Vec<f64> = Vec::new();
    let mut k = k0;
    let mut body = first;
    loop {
        let (content, closed) = match body.find(']') {
            Some(p) => (body[..p].to_string(), true),
            None => (body.clone(), false),
        };
        for piece in content.split_inclusive(';') {
            let (tokens, ends) = match piece.strip_suffix(';') {
                Some(t) => (t, true),
                None => (piece, false),
            };
            for tok in tokens.split(|c: char| c.is_whitespace() || c == ',') {
                if tok.is_empty() {
                    continue;
                }
                let v: f64 = tok.parse().map_err(|_| NetError::Parse {
                    line: k + 1,
                    msg: format!("non-numeric token `{tok}` in mpc.{name}"),
                })?;
                cur.push(v);
            }
            if ends && !cur.is_empty() {
                rows.push(std::mem::take(&mut cur));
            }
        }
        // A newline also terminates a row.
        if !cur.is_empty() {
            rows.push(std::mem::take(&mut cur));
        }
        if closed {
            break;
        }
        k += 1;
        if k >= lines.len() {
            return Err(NetError::Parse {
                line: k0 + 1,
                msg: format!("unterminated matrix mpc.{name}"),
            });
        }
        body = lines[k].clone();
    }
    Ok(Some((Matrix { rows }, k0, k)))
}

fn column(m: &Matrix, name: &str, col: usize, line: usize) -> Result<(), NetError> {
    for r in &m.rows {
        if r.len() <= col {
            return Err(NetError::Parse {
                line,
                msg: format!("mpc.{name} row has {} columns, need at least {}", r.len(), col + 1),
            });
        }
    }
    Ok(())
}

const PD: usize = 2;
const QD: usize = 3;
const GS: usize = 4;
const BS: usize = 5;
const BASE_KV: usize = 9;
const VMAX: usize = 11;
const VMIN: usize = 12;
const BR_R: usize = 2;
const BR_X: usize = 3;
const BR_B: usize = 4;
const BR_STATUS: usize = 10;

/// Parses the MATPOWER case subset used by radial distribution feeders.
///
/// Besides the `baseMVA`, `bus` and `branch` assignments, the unit
/// conversion statements that distribution cases append after the data
/// (impedances in ohms, loads in kW, a power-factor split of PD into PD/QD)
/// are recognized and applied in file order.
pub fn parse_matpower(text: &str) -> Result<Network, NetError> {
    let lines = strip_comments(text);
    let base_re = Regex::new(r"mpc\.baseMVA\s*=\s*([-+0-9.eE]+)\s*;").unwrap();
    let mut base_mva = None;
    for l in &lines {
        if let Some(c) = base_re.captures(l) {
            base_mva = c[1].parse::<f64>().ok();
        }
    }
    let base_mva = base_mva.ok_or(NetError::MissingMatrix("mpc.baseMVA"))?;
    let (mut bus, bus_l0, bus_l1) = find_matrix(&lines, "bus")?.ok_or(NetError::MissingMatrix("mpc.bus"))?;
    let (mut branch, br_l0, br_l1) =
        find_matrix(&lines, "branch")?.ok_or(NetError::MissingMatrix("mpc.branch"))?;
    column(&bus, "bus", VMIN, bus_l0 + 1)?;
    column(&branch, "branch", BR_STATUS, br_l0 + 1)?;

    // Statements outside the matrices, in order.
    let mut skip = vec![false; lines.len()];
    for k in bus_l0..=bus_l1 {
        skip[k] = true;
    }
    for k in br_l0..=br_l1 {
        skip[k] = true;
    }
    for (_, a, b) in ["gen", "gencost", "areas"]
        .iter()
        .filter_map(|n| find_matrix(&lines, n).ok().flatten().map(|(_, a, b)| (n, a, b)))
    {
        for s in skip.iter_mut().take(b + 1).skip(a) {
            *s = true;
        }
    }
    apply_trailer(&lines, &skip, &mut bus, &mut branch, base_mva)?;

    let mut buses = Vec::with_capacity(bus.rows.len());
    for r in &bus.rows {
        let kind = match r[1] as i64 {
            3 => BusKind::Slack,
            1 | 2 => BusKind::Pq,
            4 => continue,
            t => {
                return Err(NetError::Parse {
                    line: bus_l0 + 1,
                    msg: format!("unsupported bus type {t}"),
                })
            }
        };
        buses.push(Bus {
            id: r[0] as usize,
            kind,
            v_min: r[VMIN],
            v_max: r[VMAX],
            p_nom: -r[PD] / base_mva,
            q_nom: -r[QD] / base_mva,
            g_sh: r[GS] / base_mva,
            b_sh: r[BS] / base_mva,
            voltvar: None,
        });
    }
    let lines_out = branch
        .rows
        .iter()
        .map(|r| Line {
            from: r[0] as usize,
            to: r[1] as usize,
            r: r[BR_R],
            x: r[BR_X],
            b_sh: r[BR_B],
            status: if r[BR_STATUS] == 0.0 {
                LineStatus::Open
            } else {
                LineStatus::Closed
            },
        })
        .collect();
    let net = Network {
        base_mva,
        buses,
        lines: lines_out,
    };
    net.validate()?;
    Ok(net)
}

fn apply_trailer(
    lines: &[String],
    skip: &[bool],
    bus: &mut Matrix,
    branch: &mut Matrix,
    base_mva: f64,
) -> Result<(), NetError> {
    let num = r"[-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?";
    let ident_or_num = format!(r"([A-Za-z_]\w*|{num})");
    let re_kv = Regex::new(&format!(
        r"^([A-Za-z_]\w*)\s*=\s*mpc\.bus\(\s*1\s*,\s*BASE_KV\s*\)\s*\*\s*({num})$"
    ))
    .unwrap();
    let re_sb = Regex::new(&format!(r"^([A-Za-z_]\w*)\s*=\s*mpc\.baseMVA\s*\*\s*({num})$")).unwrap();
    let re_const = Regex::new(&format!(r"^([A-Za-z_]\w*)\s*=\s*({num})$")).unwrap();
    let re_z = Regex::new(
        r"^mpc\.branch\(\s*:\s*,\s*\[\s*BR_R\s*,?\s*BR_X\s*\]\s*\)\s*=\s*mpc\.branch\(\s*:\s*,\s*\[\s*BR_R\s*,?\s*BR_X\s*\]\s*\)\s*/\s*\(\s*([A-Za-z_]\w*)\s*\^\s*2\s*/\s*([A-Za-z_]\w*)\s*\)$",
    )
    .unwrap();
    let re_kw = Regex::new(&format!(
        r"^mpc\.bus\(\s*:\s*,\s*\[\s*PD\s*,?\s*QD\s*\]\s*\)\s*=\s*mpc\.bus\(\s*:\s*,\s*\[\s*PD\s*,?\s*QD\s*\]\s*\)\s*/\s*({num})$"
    ))
    .unwrap();
    let re_qd = Regex::new(&format!(
        r"^mpc\.bus\(\s*:\s*,\s*QD\s*\)\s*=\s*mpc\.bus\(\s*:\s*,\s*PD\s*\)\s*\*\s*sin\(\s*acos\(\s*{ident_or_num}\s*\)\s*\)$"
    ))
    .unwrap();
    let re_pd = Regex::new(&format!(
        r"^mpc\.bus\(\s*:\s*,\s*PD\s*\)\s*=\s*mpc\.bus\(\s*:\s*,\s*PD\s*\)\s*\*\s*{ident_or_num}$"
    ))
    .unwrap();
    let mut vars: BTreeMap<String, f64> = BTreeMap::new();
    let value = |vars: &BTreeMap<String, f64>, s: &str, line: usize| -> Result<f64, NetError> {
        if let Ok(v) = s.parse::<f64>() {
            return Ok(v);
        }
        vars.get(s).copied().ok_or(NetError::Parse {
            line,
            msg: format!("undefined variable `{s}`"),
        })
    };
    for (k, l) in lines.iter().enumerate() {
        if skip[k] {
            continue;
        }
        for stmt in l.split(';') {
            let st = stmt.trim();
            if st.is_empty() {
                continue;
            }
            let line = k + 1;
            if let Some(c) = re_kv.captures(st) {
                let kv = bus.rows[0].get(BASE_KV).copied().unwrap_or(0.0);
                vars.insert(c[1].to_string(), kv * c[2].parse::<f64>().unwrap());
            } else if let Some(c) = re_sb.captures(st) {
                vars.insert(c[1].to_string(), base_mva * c[2].parse::<f64>().unwrap());
            } else if let Some(c) = re_z.captures(st) {
                let vb = value(&vars, &c[1], line)?;
                let sb = value(&vars, &c[2], line)?;
                let zb = vb * vb / sb;
                for r in &mut branch.rows {
                    r[BR_R] /= zb;
                    r[BR_X] /= zb;
                }
            } else if let Some(c) = re_kw.captures(st) {
                let d: f64 = c[1].parse().unwrap();
                for r in &mut bus.rows {
                    r[PD] /= d;
                    r[QD] /= d;
                }
            } else if let Some(c) = re_qd.captures(st) {
                let pf = value(&vars, &c[1], line)?;
                let f = pf.acos().sin();
                for r in &mut bus.rows {
                    r[QD] = r[PD] * f;
                }
            } else if let Some(c) = re_pd.captures(st) {
                let pf = value(&vars, &c[1], line)?;
                for r in &mut bus.rows {
                    r[PD] *= pf;
                }
            } else if let Some(c) = re_const.captures(st) {
                vars.insert(c[1].to_string(), c[2].parse::<f64>().unwrap());
            } else if st.starts_with("mpc.bus") || st.starts_with("mpc.branch") {
                return Err(NetError::Parse {
                    line,
                    msg: format!("unsupported statement `{st}`"),
                });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Native format

pub const NATIVE_FORMAT: &str = "voltplace.case";
pub const NATIVE_VERSION: u32 = 1;

/// A fully specified study loaded from the native format.
#[derive(Clone, Debug, PartialEq)]
pub struct Study {
    pub network: Network,
    pub configurations: Vec<Configuration>,
    pub injection_range: InjectionRange,
    pub limits: Limits,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeDoc {
    format: String,
    version: u32,
    network: Network,
    #[serde(default)]
    configurations: Vec<NativeConfig>,
    #[serde(default)]
    injection_range: Option<NativeRange>,
    #[serde(default)]
    limits: Option<Limits>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeConfig {
    name: String,
    #[serde(default)]
    overrides: Vec<NativeOverride>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    from: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    to: Option<usize>,
    status: LineStatus,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
enum NativeRange {
    Fractions {
        lo: f64,
        hi: f64,
        #[serde(default)]
        overrides: Vec<RangeOverride>,
    },
    Explicit {
        p_min: Vec<f64>,
        p_max: Vec<f64>,
        q_min: Vec<f64>,
        q_max: Vec<f64>,
    },
}

fn schema_err(path: &str, msg: impl Into<String>) -> NetError {
    NetError::Schema {
        path: path.to_string(),
        msg: msg.into(),
    }
}

/// Loads a native case document. Without configurations the as-given
/// topology is returned as the single nominal configuration; without a
/// range the default 50%–150% box is used.
pub fn load_native(text: &str) -> Result<Study, NetError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: NativeDoc = serde_path_to_error::deserialize(de).map_err(|e| NetError::Schema {
        path: e.path().to_string(),
        msg: e.inner().to_string(),
    })?;
    if doc.format != NATIVE_FORMAT {
        return Err(schema_err("format", format!("expected `{NATIVE_FORMAT}`")));
    }
    if doc.version != NATIVE_VERSION {
        return Err(schema_err("version", format!("unsupported version {}", doc.version)));
    }
    let net = doc.network;
    let ids: Vec<usize> = net.buses.iter().map(|b| b.id).collect();
    for (k, l) in net.lines.iter().enumerate() {
        if !ids.contains(&l.from) {
            return Err(schema_err(&format!("network.lines[{k}].from"), format!("bus {} is not declared", l.from)));
        }
        if !ids.contains(&l.to) {
            return Err(schema_err(&format!("network.lines[{k}].to"), format!("bus {} is not declared", l.to)));
        }
    }
    net.validate()?;
    let mut configurations = Vec::new();
    for (ci, c) in doc.configurations.iter().enumerate() {
        let mut ov = Vec::new();
        for (k, o) in c.overrides.iter().enumerate() {
            let path = format!("configurations[{ci}].overrides[{k}]");
            let idx = match (o.line, o.from, o.to) {
                (Some(i), None, None) => {
                    if i >= net.lines.len() {
                        return Err(schema_err(&format!("{path}.line"), format!("line {i} does not exist")));
                    }
                    i
                }
                (None, Some(a), Some(b)) => net
                    .find_line(a, b)
                    .ok_or_else(|| schema_err(&path, format!("no line between {a} and {b}")))?,
                _ => return Err(schema_err(&path, "give either `line` or both `from` and `to`")),
            };
            ov.push((idx, o.status));
        }
        let cfg = Configuration {
            name: c.name.clone(),
            line_status_overrides: ov,
        };
        apply_configuration(&net, &cfg)?;
        configurations.push(cfg);
    }
    if configurations.is_empty() {
        configurations.push(Configuration::nominal());
    }
    let limits = doc.limits.unwrap_or_default();
    let npq = net.pq_indices().len();
    let injection_range = match doc.injection_range {
        None => range_from_fractions(&net, 0.5, 1.5, &[]).map_err(|e| schema_err("injection_range", e.to_string()))?,
        Some(NativeRange::Fractions { lo, hi, overrides }) => range_from_fractions(&net, lo, hi, &overrides)
            .map_err(|e| schema_err("injection_range", e.to_string()))?,
        Some(NativeRange::Explicit { p_min, p_max, q_min, q_max }) => {
            for (name, v) in [("p_min", &p_min), ("p_max", &p_max), ("q_min", &q_min), ("q_max", &q_max)] {
                if v.len() != npq {
                    return Err(schema_err(
                        &format!("injection_range.{name}"),
                        format!("expected {npq} entries, found {}", v.len()),
                    ));
                }
            }
            let r = InjectionRange { p_min, p_max, q_min, q_max };
            r.validate().map_err(|e| schema_err("injection_range", e.to_string()))?;
            r
        }
    };
    Ok(Study {
        network: net,
        configurations,
        injection_range,
        limits,
    })
}

/// Serializes a study to the native format (explicit injection range).
pub fn to_native(study: &Study) -> String {
    let doc = NativeDoc {
        format: NATIVE_FORMAT.to_string(),
        version: NATIVE_VERSION,
        network: study.network.clone(),
        configurations: study
            .configurations
            .iter()
            .filter(|c| !(c.name == "nominal" && c.line_status_overrides.is_empty()))
            .map(|c| NativeConfig {
                name: c.name.clone(),
                overrides: c
                    .line_status_overrides
                    .iter()
                    .map(|&(i, s)| NativeOverride {
                        line: Some(i),
                        from: None,
                        to: None,
                        status: s,
                    })
                    .collect(),
            })
            .collect(),
        injection_range: Some(NativeRange::Explicit {
            p_min: study.injection_range.p_min.clone(),
            p_max: study.injection_range.p_max.clone(),
            q_min: study.injection_range.q_min.clone(),
            q_max: study.injection_range.q_max.clone(),
        }),
        limits: Some(study.limits),
    };
    serde_json::to_string_pretty(&doc).expect("study serializes")
}
