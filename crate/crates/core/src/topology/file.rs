//! `topology.json` reader and writer.
//!
//! ```json
//! {
//!   "format": 1,
//!   "nodes": [
//!     {"id": "h1", "kind": "host", "mac": "00:00:00:00:00:01", "ip": "10.0.0.1"},
//!     {"id": "s1", "kind": "switch"},
//!     {"id": "m1", "kind": "middlebox"}
//!   ],
//!   "links": [{"u": "h1", "v": "s1", "capacity": "100MB/s"}],
//!   "placements": [{"function": "nat", "nodes": ["m1"]}]
//! }
//! ```
//!
//! Capacities are integers (bytes per second) or rate literals. `queues`
//! may be set per node; it defaults to true for switches and middleboxes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Node, NodeKind, Topology, TopologyError};
use crate::policy::ast::{format_ipv4, format_mac, parse_ipv4, parse_mac};
use crate::rate::Rate;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub format: u32,
    pub nodes: Vec<NodeEntry>,
    #[serde(default)]
    pub links: Vec<LinkEntry>,
    #[serde(default)]
    pub placements: Vec<PlacementEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queues: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    pub u: String,
    pub v: String,
    pub capacity: Rate,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct PlacementEntry {
    pub function: String,
    pub nodes: Vec<String>,
}

impl TopologyFile {
    pub fn parse(text: &str) -> Result<TopologyFile, TopologyError> {
        serde_json::from_str(text).map_err(|e| TopologyError::Malformed(e.to_string()))
    }

    pub fn to_topology(&self) -> Result<Topology, TopologyError> {
        if self.format != 1 {
            return Err(TopologyError::Format(self.format));
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for entry in &self.nodes {
            let mut node = Node::new(entry.id.clone(), entry.kind);
            if let Some(mac) = &entry.mac {
                node.mac = Some(parse_mac(mac).ok_or_else(|| TopologyError::BadAddress(mac.clone()))?);
            }
            if let Some(ip) = &entry.ip {
                node.ip = Some(parse_ipv4(ip).ok_or_else(|| TopologyError::BadAddress(ip.clone()))?);
            }
            if let Some(q) = entry.queues {
                node.queues = q;
            }
            nodes.push(node);
        }
        let links = self
            .links
            .iter()
            .map(|l| (l.u.clone(), l.v.clone(), l.capacity))
            .collect();
        let mut placements: BTreeMap<_, std::collections::BTreeSet<String>> = BTreeMap::new();
        for p in &self.placements {
            let entry = placements.entry(p.function.clone()).or_default();
            entry.extend(p.nodes.iter().cloned());
            if p.nodes.is_empty() {
                return Err(TopologyError::EmptyPlacement(p.function.clone()));
            }
        }
        Topology::new(nodes, links, placements)
    }

    /// Canonical document for a topology, with every host address explicit.
    pub fn from_topology(t: &Topology) -> TopologyFile {
        TopologyFile {
            format: 1,
            nodes: t
                .nodes()
                .iter()
                .map(|n| NodeEntry {
                    id: n.id.clone(),
                    kind: n.kind,
                    mac: n.mac.map(format_mac),
                    ip: n.ip.map(format_ipv4),
                    queues: (n.queues != Node::default_queues(n.kind)).then_some(n.queues),
                })
                .collect(),
            links: t
                .links()
                .iter()
                .map(|l| LinkEntry {
                    u: t.name(l.u).to_string(),
                    v: t.name(l.v).to_string(),
                    capacity: l.capacity,
                })
                .collect(),
            placements: t
                .placements()
                .iter()
                .map(|(f, nodes)| PlacementEntry {
                    function: f.clone(),
                    nodes: nodes.iter().cloned().collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology documents always serialize") + "\n"
    }
}

impl Topology {
    pub fn from_json(text: &str) -> Result<Topology, TopologyError> {
        TopologyFile::parse(text)?.to_topology()
    }

    pub fn to_json(&self) -> String {
        TopologyFile::from_topology(self).to_json()
    }
}
