//! Initiations: the first directed edge of every ordered author pair,
//! classified by the weak-component context it lands in.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::authors::Role;
use crate::error::{Error, Result};
use crate::graph::{Edge, NetworkState, TemporalGraph, UnionFind};
use crate::ids::{AuthorId, IdTables, Timestamp};
use crate::table::{read_rows, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InitiationType {
    JoiningComponent,
    BridgingComponent,
    JoiningIsolates,
    IntraComponent,
}

impl InitiationType {
    pub const ALL: [InitiationType; 4] = [
        InitiationType::JoiningComponent,
        InitiationType::BridgingComponent,
        InitiationType::JoiningIsolates,
        InitiationType::IntraComponent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InitiationType::JoiningComponent => "JoiningComponent",
            InitiationType::BridgingComponent => "BridgingComponent",
            InitiationType::JoiningIsolates => "JoiningIsolates",
            InitiationType::IntraComponent => "IntraComponent",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for InitiationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitiationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InitiationType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown initiation type `{s}`")))
    }
}

/// An unclassified initiation, straight off the edge stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingInitiation {
    pub initiator: AuthorId,
    pub receiver: AuthorId,
    pub time: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Initiation {
    pub initiator: AuthorId,
    pub receiver: AuthorId,
    pub time: Timestamp,
    pub itype: InitiationType,
    pub is_reciprocal: bool,
    pub initiator_was_isolate: bool,
}

/// Anything that can answer weak-component questions.
pub trait Components {
    /// 1 for an isolate (or a node never seen).
    fn component_size(&self, a: AuthorId) -> u32;
    fn same_component(&self, a: AuthorId, b: AuthorId) -> bool;
}

impl Components for UnionFind {
    fn component_size(&self, a: AuthorId) -> u32 {
        if a.index() >= self.len() {
            1
        } else {
            self.set_size(a.0)
        }
    }

    fn same_component(&self, a: AuthorId, b: AuthorId) -> bool {
        a == b || (a.index() < self.len() && b.index() < self.len() && self.find(a.0) == self.find(b.0))
    }
}

impl Components for NetworkState {
    fn component_size(&self, a: AuthorId) -> u32 {
        NetworkState::component_size(self, a).max(1)
    }

    fn same_component(&self, a: AuthorId, b: AuthorId) -> bool {
        self.same_wcc(a, b)
    }
}

/// Unique edges in stream order; ties already ordered by `(source, target)`.
pub fn extract_initiations(edges: &[Edge]) -> Vec<PendingInitiation> {
    let mut out: Vec<PendingInitiation> = edges
        .iter()
        .map(|e| PendingInitiation {
            initiator: e.source,
            receiver: e.target,
            time: e.first_time,
        })
        .collect();
    out.sort_by_key(|p| (p.time, p.initiator, p.receiver));
    out
}

/// Type of the edge `initiator→receiver` given the components before it,
/// plus whether the initiator was the unconnected side.
pub fn classify_initiation<C: Components + ?Sized>(
    components: &C,
    initiator: AuthorId,
    receiver: AuthorId,
) -> Result<(InitiationType, bool)> {
    if initiator == receiver {
        return Err(Error::InvalidEdge(format!("initiation from {initiator} to itself")));
    }
    if components.same_component(initiator, receiver) {
        return Ok((InitiationType::IntraComponent, false));
    }
    let a_isolate = components.component_size(initiator) < 2;
    let b_isolate = components.component_size(receiver) < 2;
    let itype = match (a_isolate, b_isolate) {
        (true, true) => InitiationType::JoiningIsolates,
        (true, false) | (false, true) => InitiationType::JoiningComponent,
        (false, false) => InitiationType::BridgingComponent,
    };
    Ok((itype, a_isolate))
}

/// True iff `receiver→initiator` formed strictly before `time`.
pub fn reciprocal_flag(graph: &TemporalGraph, initiator: AuthorId, receiver: AuthorId, time: Timestamp) -> bool {
    graph
        .edge_time(receiver, initiator)
        .is_some_and(|t| t < time)
}

/// Classify the whole edge stream, one edge at a time.
pub fn classify_initiations(graph: &TemporalGraph) -> Vec<Initiation> {
    let pending = extract_initiations(graph.edges());
    let mut components = UnionFind::new(graph.capacity());
    pending
        .into_iter()
        .map(|p| {
            let (itype, initiator_was_isolate) = classify_initiation(&components, p.initiator, p.receiver)
                .expect("graph edges are never self loops");
            components.union(p.initiator.0, p.receiver.0);
            Initiation {
                initiator: p.initiator,
                receiver: p.receiver,
                time: p.time,
                itype,
                is_reciprocal: reciprocal_flag(graph, p.initiator, p.receiver, p.time),
                initiator_was_isolate,
            }
        })
        .collect()
}

/// Counts and shares for one window (or the whole stream).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowStats {
    pub start: Timestamp,
    pub total: usize,
    pub counts: BTreeMap<InitiationType, usize>,
    /// Absent when the window holds no initiations.
    pub shares: Option<BTreeMap<InitiationType, f64>>,
    pub reciprocal_share: Option<f64>,
    /// Among Joining Component initiations, share started by the unconnected author.
    pub joining_initiator_isolate_share: Option<f64>,
    pub bridging_plus_isolates_share: Option<f64>,
}

impl WindowStats {
    fn from_slice(start: Timestamp, items: &[Initiation]) -> Self {
        let mut counts = [0usize; 4];
        let mut reciprocal = 0usize;
        let mut jc_isolate = 0usize;
        for i in items {
            counts[i.itype.slot()] += 1;
            reciprocal += usize::from(i.is_reciprocal);
            if i.itype == InitiationType::JoiningComponent && i.initiator_was_isolate {
                jc_isolate += 1;
            }
        }
        let total = items.len();
        let share = |n: usize, d: usize| (d > 0).then(|| n as f64 / d as f64);
        let jc = counts[InitiationType::JoiningComponent.slot()];
        WindowStats {
            start,
            total,
            counts: InitiationType::ALL.iter().map(|&t| (t, counts[t.slot()])).collect(),
            shares: (total > 0).then(|| {
                InitiationType::ALL
                    .iter()
                    .map(|&t| (t, counts[t.slot()] as f64 / total as f64))
                    .collect()
            }),
            reciprocal_share: share(reciprocal, total),
            joining_initiator_isolate_share: share(jc_isolate, jc),
            bridging_plus_isolates_share: share(
                counts[InitiationType::BridgingComponent.slot()]
                    + counts[InitiationType::JoiningIsolates.slot()],
                total,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineStats {
    pub window: Timestamp,
    pub overall: WindowStats,
    /// Contiguous windows from the first to the last initiation, keyed by start.
    pub windows: BTreeMap<Timestamp, WindowStats>,
}

/// Windows are aligned to multiples of `window` seconds since the epoch.
pub fn timeline_stats(initiations: &[Initiation], window: Timestamp) -> Result<TimelineStats> {
    if window <= 0 {
        return Err(Error::Invalid("timeline window must be positive".into()));
    }
    let mut sorted = initiations.to_vec();
    sorted.sort_by_key(|i| (i.time, i.initiator, i.receiver));
    let start_of = |t: Timestamp| t.div_euclid(window) * window;
    let mut windows = BTreeMap::new();
    if let (Some(first), Some(last)) = (sorted.first(), sorted.last()) {
        let mut start = start_of(first.time);
        let end = start_of(last.time);
        let mut lo = 0;
        while start <= end {
            let hi = lo + sorted[lo..].partition_point(|i| i.time < start + window);
            windows.insert(start, WindowStats::from_slice(start, &sorted[lo..hi]));
            lo = hi;
            start += window;
        }
    }
    Ok(TimelineStats {
        window,
        overall: WindowStats::from_slice(sorted.first().map_or(0, |i| i.time), &sorted),
        windows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReciprocityCell {
    pub initiations: usize,
    pub reciprocated: usize,
    /// Absent when there were no initiations.
    pub probability: Option<f64>,
}

/// `P(receiver later reciprocates | initiator role, receiver role)`,
/// indexed `[initiator][receiver]` in [`Role::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoleReciprocity {
    pub roles: [Role; 3],
    pub cells: [[ReciprocityCell; 3]; 3],
}

/// Over dyad-opening initiations (not themselves reciprocations); an
/// opener counts as reciprocated when the reverse edge forms later.
pub fn reciprocation_rate_by_role<F>(initiations: &[Initiation], role_of: F) -> RoleReciprocity
where
    F: Fn(AuthorId) -> Option<Role>,
{
    let first: HashMap<(AuthorId, AuthorId), Timestamp> = initiations
        .iter()
        .map(|i| ((i.initiator, i.receiver), i.time))
        .collect();
    let mut tallies = [[(0usize, 0usize); 3]; 3];
    for i in initiations.iter().filter(|i| !i.is_reciprocal) {
        let (Some(ra), Some(rb)) = (role_of(i.initiator), role_of(i.receiver)) else {
            continue;
        };
        let later = first
            .get(&(i.receiver, i.initiator))
            .is_some_and(|&t| t > i.time);
        let cell = &mut tallies[ra.slot()][rb.slot()];
        cell.0 += 1;
        cell.1 += usize::from(later);
    }
    let cells = tallies.map(|row| {
        row.map(|(n, r)| ReciprocityCell {
            initiations: n,
            reciprocated: r,
            probability: (n > 0).then(|| r as f64 / n as f64),
        })
    });
    RoleReciprocity {
        roles: Role::ALL,
        cells,
    }
}

pub const INITIATION_COLUMNS: [&str; 6] = [
    "initiator",
    "receiver",
    "time",
    "itype",
    "is_reciprocal",
    "initiator_was_isolate",
];

pub fn write_initiations<W: Write>(mut out: W, initiations: &[Initiation], ids: &IdTables) -> std::io::Result<()> {
    writeln!(out, "{}", INITIATION_COLUMNS.join(","))?;
    for i in initiations {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            ids.author_name(i.initiator),
            ids.author_name(i.receiver),
            i.time,
            i.itype,
            i.is_reciprocal,
            i.initiator_was_isolate
        )?;
    }
    Ok(())
}

fn parse_bool(row: &crate::table::Row<'_>, field: &str) -> Result<bool> {
    match row.require(field)? {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(row.error(field, format!("`{other}` is not a boolean"))),
    }
}

/// Read an initiations export, interning author names into `ids`.
pub fn read_initiations(path: &Path, ids: &mut IdTables) -> Result<Vec<Initiation>> {
    let mut out = Vec::new();
    read_rows(path, Format::Csv, &INITIATION_COLUMNS, |row| {
        let itype_raw = row.require("itype")?;
        out.push(Initiation {
            initiator: ids.author(row.require("initiator")?),
            receiver: ids.author(row.require("receiver")?),
            time: row
                .parse_i64("time")?
                .ok_or_else(|| row.error("time", "required value is missing"))?,
            itype: itype_raw.parse().map_err(|_| row.error("itype", format!("unknown type `{itype_raw}`")))?,
            is_reciprocal: parse_bool(row, "is_reciprocal")?,
            initiator_was_isolate: parse_bool(row, "initiator_was_isolate")?,
        });
        Ok(())
    })?;
    Ok(out)
}
