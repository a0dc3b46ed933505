//! Single-hop network model: traffic flows, feasible schedules, conflicts.
//!
//! A network is fully described by the number of flows `F` and the set of
//! feasible schedules `S` (subsets of flows that can be served in the same
//! slot). Node identities play no role in any computation, so the underlying
//! graph is never materialized. Schedules are stored as bitmasks over at
//! most [`MAX_FLOWS`] flows; weight evaluation over schedules is the
//! simulator's hot path.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::arrivals::{ArrivalSpec, SizeDistribution};

/// Hard cap on the number of flows (schedules are u64 bitmasks).
pub const MAX_FLOWS: usize = 64;

/// Index of a traffic flow, in `[0, F)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowId(pub usize);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A nonempty set of flows that can be served simultaneously in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Schedule {
    mask: u64,
}

impl Schedule {
    /// Builds a schedule from flow indices. Indices must be below
    /// [`MAX_FLOWS`]; range checking against the network's flow count
    /// happens in [`NetworkSpec::validate`].
    pub fn from_flows<I: IntoIterator<Item = usize>>(flows: I) -> Result<Self, ModelError> {
        let mut mask = 0u64;
        for f in flows {
            if f >= MAX_FLOWS {
                return Err(ModelError::FlowIdOutOfRange {
                    flow: f,
                    num_flows: MAX_FLOWS,
                });
            }
            mask |= 1 << f;
        }
        if mask == 0 {
            return Err(ModelError::EmptySchedule);
        }
        Ok(Schedule { mask })
    }

    pub fn contains(&self, f: FlowId) -> bool {
        f.0 < MAX_FLOWS && self.mask & (1 << f.0) != 0
    }

    /// Iterates member flows in increasing index order.
    pub fn flows(&self) -> impl Iterator<Item = FlowId> + '_ {
        let mask = self.mask;
        (0..MAX_FLOWS).filter_map(move |f| (mask & (1 << f) != 0).then_some(FlowId(f)))
    }

    /// Number of member flows.
    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }
}

impl Serialize for Schedule {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.flows().map(|f| f.0))
    }
}

impl<'de> Deserialize<'de> for Schedule {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let flows = Vec::<usize>::deserialize(deserializer)?;
        Schedule::from_flows(flows).map_err(D::Error::custom)
    }
}

/// A validated single-hop network: `F` flows plus the feasible-schedule set.
///
/// Construction goes through [`NetworkSpec::validate`], which normalizes the
/// schedule list (members sorted by the bitmask representation, duplicates
/// removed) and rejects specs in which some flow can never be served.
/// Immutable afterwards and freely shareable across threads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NetworkSpec {
    name: String,
    num_flows: usize,
    schedules: Vec<Schedule>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("network must have at least one flow")]
    NoFlows,
    #[error("network has {0} flows, more than the supported {MAX_FLOWS}")]
    TooManyFlows(usize),
    #[error("schedule must contain at least one flow")]
    EmptySchedule,
    #[error("flow {flow} is out of range for a network with {num_flows} flows")]
    FlowIdOutOfRange { flow: usize, num_flows: usize },
    #[error("flow {0} does not appear in any feasible schedule")]
    FlowNeverServed(usize),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("preset '{name}' is too large: {reason}")]
    PresetTooLarge { name: String, reason: String },
}

impl NetworkSpec {
    /// Validates and normalizes a raw specification.
    ///
    /// Rejects empty schedules, out-of-range flow indices, and flows that no
    /// schedule can ever serve. Duplicate schedules (as sets) are dropped,
    /// keeping first-occurrence order.
    pub fn validate(
        name: impl Into<String>,
        num_flows: usize,
        schedules: Vec<Vec<usize>>,
    ) -> Result<Self, ModelError> {
        if num_flows == 0 {
            return Err(ModelError::NoFlows);
        }
        if num_flows > MAX_FLOWS {
            return Err(ModelError::TooManyFlows(num_flows));
        }
        let mut normalized: Vec<Schedule> = Vec::with_capacity(schedules.len());
        let mut covered = 0u64;
        for raw in &schedules {
            if raw.is_empty() {
                return Err(ModelError::EmptySchedule);
            }
            for &f in raw {
                if f >= num_flows {
                    return Err(ModelError::FlowIdOutOfRange { flow: f, num_flows });
                }
            }
            let s = Schedule::from_flows(raw.iter().copied())?;
            if !normalized.contains(&s) {
                covered |= s.mask();
                normalized.push(s);
            }
        }
        let all = full_mask(num_flows);
        if covered != all {
            let missing = (!covered & all).trailing_zeros() as usize;
            return Err(ModelError::FlowNeverServed(missing));
        }
        Ok(NetworkSpec {
            name: name.into(),
            num_flows,
            schedules: normalized,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_flows(&self) -> usize {
        self.num_flows
    }

    pub fn schedules(&self) -> &[Schedule] {
        &self.schedules
    }

    pub fn flows(&self) -> impl Iterator<Item = FlowId> {
        (0..self.num_flows).map(FlowId)
    }

    /// Two flows conflict when no feasible schedule contains both.
    pub fn conflicts(&self, f: FlowId, g: FlowId) -> Result<bool, ModelError> {
        for id in [f, g] {
            if id.0 >= self.num_flows {
                return Err(ModelError::FlowIdOutOfRange {
                    flow: id.0,
                    num_flows: self.num_flows,
                });
            }
        }
        let pair = (1u64 << f.0) | (1u64 << g.0);
        Ok(!self.schedules.iter().any(|s| s.mask() & pair == pair))
    }
}

impl<'de> Deserialize<'de> for NetworkSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            name: String,
            num_flows: usize,
            schedules: Vec<Vec<usize>>,
        }
        let raw = Raw::deserialize(deserializer)?;
        NetworkSpec::validate(raw.name, raw.num_flows, raw.schedules).map_err(D::Error::custom)
    }
}

fn full_mask(num_flows: usize) -> u64 {
    if num_flows == 64 {
        u64::MAX
    } else {
        (1u64 << num_flows) - 1
    }
}

/// Default heavy-tailed arrival process used by presets: zeta file sizes
/// with tail index 1.5 (infinite size variance), one file per ten slots.
fn default_heavy() -> ArrivalSpec {
    ArrivalSpec::new(0.1, SizeDistribution::Zeta { tail_index: 1.5 })
        .expect("preset arrival spec is valid")
}

/// Bernoulli traffic at rate `lambda`: single-packet files with
/// file probability `lambda`.
fn bernoulli(lambda: f64) -> ArrivalSpec {
    ArrivalSpec::new(lambda, SizeDistribution::Constant { packets: 1 })
        .expect("preset arrival spec is valid")
}

/// Builds one of the named example networks together with default per-flow
/// arrival processes (flow 0 heavy-tailed, others Bernoulli, at admissible
/// rates).
///
/// Recognized names: `fig1`, `fig3`, `switch2x2`, `ring6`, `parallel<n>`,
/// `switch<n>` (n ≤ 5), `grid<n>` (n ≤ 4). The numeric suffix may also be
/// written in parentheses, e.g. `parallel(4)`.
pub fn preset(name: &str) -> Result<(NetworkSpec, Vec<ArrivalSpec>), ModelError> {
    let trimmed = name.trim();
    match trimmed {
        "fig1" => {
            let spec = NetworkSpec::validate("fig1", 2, vec![vec![0], vec![1]])?;
            return Ok((spec, vec![default_heavy(), bernoulli(0.3)]));
        }
        "fig3" => {
            let spec = NetworkSpec::validate("fig3", 3, vec![vec![0, 1], vec![2]])?;
            return Ok((spec, vec![default_heavy(), bernoulli(0.3), bernoulli(0.3)]));
        }
        "switch2x2" => return switch_preset(2),
        "ring6" => {
            let spec = NetworkSpec::validate(
                "ring6",
                6,
                vec![vec![0, 3], vec![1, 4], vec![2, 5]],
            )?;
            let mut arrivals = vec![default_heavy()];
            arrivals.extend(std::iter::repeat(bernoulli(0.25)).take(5));
            return Ok((spec, arrivals));
        }
        _ => {}
    }
    if let Some(n) = parse_sized(trimmed, "parallel") {
        return parallel_preset(n);
    }
    if let Some(n) = parse_sized(trimmed, "switch") {
        return switch_preset(n);
    }
    if let Some(n) = parse_sized(trimmed, "grid") {
        return grid_preset(n);
    }
    Err(ModelError::UnknownPreset(trimmed.to_string()))
}

/// Parses `prefix<n>` or `prefix(<n>)`.
fn parse_sized(name: &str, prefix: &str) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    let digits = rest
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .unwrap_or(rest);
    digits.parse().ok()
}

fn parallel_preset(n: usize) -> Result<(NetworkSpec, Vec<ArrivalSpec>), ModelError> {
    if n == 0 || n > MAX_FLOWS {
        return Err(ModelError::PresetTooLarge {
            name: format!("parallel{n}"),
            reason: format!("need 1..={MAX_FLOWS} queues"),
        });
    }
    let schedules = (0..n).map(|f| vec![f]).collect();
    let spec = NetworkSpec::validate(format!("parallel{n}"), n, schedules)?;
    let mut arrivals = vec![default_heavy()];
    if n > 1 {
        let lambda = 0.5 / (n - 1) as f64;
        arrivals.extend(std::iter::repeat(bernoulli(lambda)).take(n - 1));
    }
    Ok((spec, arrivals))
}

fn switch_preset(n: usize) -> Result<(NetworkSpec, Vec<ArrivalSpec>), ModelError> {
    if n == 0 || n > 5 {
        return Err(ModelError::PresetTooLarge {
            name: format!("switch{n}"),
            reason: "schedule set is all n! matchings; supported for n <= 5".to_string(),
        });
    }
    // Flow (i, j) connects input i to output j; index i*n + j. Feasible
    // schedules are the perfect matchings: one permutation each.
    let mut schedules = Vec::new();
    let mut perm: Vec<usize> = (0..n).collect();
    permutations(&mut perm, 0, &mut |p| {
        schedules.push(p.iter().enumerate().map(|(i, &j)| i * n + j).collect());
    });
    let spec = NetworkSpec::validate(format!("switch{n}x{n}"), n * n, schedules)?;
    let rate = 0.72 / n as f64;
    let heavy = ArrivalSpec::new(
        rate / zeta_mean(1.5),
        SizeDistribution::Zeta { tail_index: 1.5 },
    )
    .expect("preset arrival spec is valid");
    let mut arrivals = vec![heavy];
    arrivals.extend(std::iter::repeat(bernoulli(rate)).take(n * n - 1));
    Ok((spec, arrivals))
}

fn zeta_mean(beta: f64) -> f64 {
    crate::arrivals::zeta(beta) / crate::arrivals::zeta(beta + 1.0)
}

fn permutations(perm: &mut Vec<usize>, k: usize, emit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        emit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permutations(perm, k + 1, emit);
        perm.swap(k, i);
    }
}

fn grid_preset(n: usize) -> Result<(NetworkSpec, Vec<ArrivalSpec>), ModelError> {
    if !(2..=4).contains(&n) {
        return Err(ModelError::PresetTooLarge {
            name: format!("grid{n}"),
            reason: "maximal-matching enumeration supported for n in 2..=4".to_string(),
        });
    }
    // Nodes (r, c); flows are the grid edges under one-hop interference, so
    // feasible schedules are the maximal matchings of the grid graph.
    let node = |r: usize, c: usize| r * n + c;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for r in 0..n {
        for c in 0..n - 1 {
            edges.push((node(r, c), node(r, c + 1)));
        }
    }
    for r in 0..n - 1 {
        for c in 0..n {
            edges.push((node(r, c), node(r + 1, c)));
        }
    }
    let mut schedules = Vec::new();
    let mut chosen = Vec::new();
    maximal_matchings(&edges, 0, 0u64, &mut chosen, &mut schedules);
    let spec = NetworkSpec::validate(format!("grid{n}x{n}"), edges.len(), schedules)?;
    let heavy = ArrivalSpec::new(
        0.1 / zeta_mean(1.5),
        SizeDistribution::Zeta { tail_index: 1.5 },
    )
    .expect("preset arrival spec is valid");
    let mut arrivals = vec![heavy];
    arrivals.extend(std::iter::repeat(bernoulli(0.1)).take(edges.len() - 1));
    Ok((spec, arrivals))
}

/// Enumerates all matchings of `edges` by include/exclude recursion and
/// keeps the maximal ones (no remaining edge has both endpoints free).
fn maximal_matchings(
    edges: &[(usize, usize)],
    idx: usize,
    used_nodes: u64,
    chosen: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if idx == edges.len() {
        let maximal = !edges
            .iter()
            .any(|&(a, b)| used_nodes & (1 << a) == 0 && used_nodes & (1 << b) == 0);
        if maximal && !chosen.is_empty() {
            out.push(chosen.clone());
        }
        return;
    }
    let (a, b) = edges[idx];
    if used_nodes & (1 << a) == 0 && used_nodes & (1 << b) == 0 {
        chosen.push(idx);
        maximal_matchings(edges, idx + 1, used_nodes | (1 << a) | (1 << b), chosen, out);
        chosen.pop();
    }
    maximal_matchings(edges, idx + 1, used_nodes, chosen, out);
}
