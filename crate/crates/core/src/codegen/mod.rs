//! Device configuration: a backend-neutral instruction set, lowering from
//! provisioning results, and a deterministic text format.
//!
//! Switches and middleboxes get flow tables. A tagged packet matches on its
//! VLAN tag alone; untagged packets arriving from a host are classified by
//! header and get their first tag pushed. Hosts get filters that rate-limit,
//! drop, or record packet functions performed at the host.

mod emit;
mod lower;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::policy::Predicate;
use crate::predicate::Conjunct;
use crate::rate::Rate;
use crate::topology::NodeKind;

pub use emit::{
    parse_filters, parse_flows, parse_manifest, parse_programs, parse_queues, render, EmitError, MANIFEST_FILE,
    QUEUES_FILE,
};
pub use lower::{lower, CATCH_ALL_PRIORITY, CLASSIFY_PRIORITY, TAGGED_PRIORITY};

/// Lowest and highest usable VLAN tag.
pub const FIRST_TAG: u16 = 2;
pub const LAST_TAG: u16 = 4094;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CodegenError {
    #[error("{needed} VLAN tags needed but only {available} are available", available = LAST_TAG - FIRST_TAG + 1)]
    TagSpaceExhausted { needed: usize },
    #[error("device `{device}` has no queue support but carries the guarantee of `{statement}`")]
    NoQueueSupport { device: String, statement: String },
    #[error("guaranteed path of `{statement}` passes through host `{host}`")]
    PathThroughHost { statement: String, host: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowMatch {
    pub in_port: Option<u32>,
    pub tag: Option<u16>,
    pub header: Conjunct,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlowAction {
    /// Perform a packet function at this device.
    Apply(String),
    PushTag(u16),
    SetTag(u16),
    PopTag,
    Output(u32),
    Enqueue { port: u32, queue: u32 },
    /// Process the packet again at this device, as the next path position.
    Resubmit,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowRule {
    pub priority: u32,
    pub matches: FlowMatch,
    pub actions: Vec<FlowAction>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Out,
    In,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterAction {
    Drop,
    RateLimit(Rate),
    Apply(String),
    /// The packet occupies the next path position at the same host.
    Stay,
    /// Send through this port instead of the default uplink.
    Output(u32),
}

/// Every filter whose predicate matches a packet applies, in file order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HostFilter {
    pub direction: Direction,
    pub predicate: Predicate,
    pub actions: Vec<FilterAction>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueueConfig {
    pub port: u32,
    pub queue: u32,
    pub min_rate: Rate,
    pub statement: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeviceProgram {
    pub device: String,
    pub kind: NodeKind,
    /// Sorted by descending priority, then match.
    pub rules: Vec<FlowRule>,
    pub filters: Vec<HostFilter>,
    pub queues: Vec<QueueConfig>,
}

/// Tags handed out during lowering.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TagAssignment {
    /// Per sink tree (in plan order): automaton state to tag.
    pub trees: Vec<BTreeMap<usize, u16>>,
    /// Per guaranteed statement: tag at each switch or middlebox position
    /// after the first.
    pub guaranteed: BTreeMap<String, Vec<u16>>,
}

impl TagAssignment {
    pub fn count(&self) -> usize {
        self.trees.iter().map(BTreeMap::len).sum::<usize>()
            + self.guaranteed.values().map(Vec::len).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Programs {
    pub devices: BTreeMap<String, DeviceProgram>,
    pub tags: TagAssignment,
}

impl Programs {
    /// `(device, function)` for every function some rule or filter applies.
    pub fn manifest(&self) -> BTreeSet<(String, String)> {
        let mut out = BTreeSet::new();
        for (name, d) in &self.devices {
            for r in &d.rules {
                for a in &r.actions {
                    if let FlowAction::Apply(f) = a {
                        out.insert((name.clone(), f.clone()));
                    }
                }
            }
            for filter in &d.filters {
                for a in &filter.actions {
                    if let FilterAction::Apply(f) = a {
                        out.insert((name.clone(), f.clone()));
                    }
                }
            }
        }
        out
    }

    pub fn rule_count(&self) -> usize {
        self.devices.values().map(|d| d.rules.len()).sum()
    }

    pub fn filter_count(&self) -> usize {
        self.devices.values().map(|d| d.filters.len()).sum()
    }

    pub fn queue_count(&self) -> usize {
        self.devices.values().map(|d| d.queues.len()).sum()
    }
}

impl fmt::Display for FlowMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(p) = self.in_port {
            parts.push(format!("in_port={p}"));
        }
        if let Some(t) = self.tag {
            parts.push(format!("tag={t}"));
        }
        if !self.header.is_top() || parts.is_empty() {
            parts.push(self.header.to_string());
        }
        f.write_str(&parts.join(","))
    }
}

impl fmt::Display for FlowAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowAction::Apply(func) => write!(f, "apply:{func}"),
            FlowAction::PushTag(t) => write!(f, "push_tag:{t}"),
            FlowAction::SetTag(t) => write!(f, "set_tag:{t}"),
            FlowAction::PopTag => f.write_str("pop_tag"),
            FlowAction::Output(p) => write!(f, "output:{p}"),
            FlowAction::Enqueue { port, queue } => write!(f, "enqueue:{port}:{queue}"),
            FlowAction::Resubmit => f.write_str("resubmit"),
        }
    }
}

impl fmt::Display for FilterAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterAction::Drop => f.write_str("drop"),
            FilterAction::RateLimit(r) => write!(f, "rate-limit:{}", r.0),
            FilterAction::Apply(func) => write!(f, "apply:{func}"),
            FilterAction::Stay => f.write_str("stay"),
            FilterAction::Output(p) => write!(f, "output:{p}"),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Out => "out",
            Direction::In => "in",
        })
    }
}
