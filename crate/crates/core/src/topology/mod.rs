//! Physical network: nodes, undirected capacitated links, and the placement
//! of packet functions.

mod file;
mod generate;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::{Alphabet, FunctionTable};
use crate::policy::ast::{format_ipv4, format_mac, Field};
use crate::rate::Rate;

pub use file::TopologyFile;
pub use generate::{balanced_tree, fat_tree, from_graphml, linear, zoo_like};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("malformed topology document: {0}")]
    Malformed(String),
    #[error("unsupported topology format version {0}")]
    Format(u32),
    #[error("`{0}` is not a valid node identifier")]
    BadId(String),
    #[error("node `{0}` is defined more than once")]
    DuplicateNode(String),
    #[error("link {0}-{1} references an unknown node")]
    DanglingLink(String, String),
    #[error("link {0}-{0} connects a node to itself")]
    SelfLink(String),
    #[error("link {0}-{1} is defined more than once")]
    DuplicateLink(String, String),
    #[error("link {0}-{1} has zero capacity")]
    ZeroCapacity(String, String),
    #[error("function `{function}` is placed at unknown node `{node}`")]
    UnknownPlacementNode { function: String, node: String },
    #[error("function `{0}` has no placement")]
    EmptyPlacement(String),
    #[error("function name `{0}` is also a node identifier")]
    FunctionNameClash(String),
    #[error("address `{0}` is malformed")]
    BadAddress(String),
    #[error("address {0} is assigned to more than one host")]
    DuplicateAddress(String),
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Host,
    Switch,
    Middlebox,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub mac: Option<u64>,
    pub ip: Option<u64>,
    /// Whether output ports support min-rate queues.
    pub queues: bool,
}

impl Node {
    pub fn new(id: impl Into<String>, kind: NodeKind) -> Node {
        Node {
            id: id.into(),
            kind,
            mac: None,
            ip: None,
            queues: Node::default_queues(kind),
        }
    }

    /// Switches and middleboxes have queue-capable ports unless told otherwise.
    pub fn default_queues(kind: NodeKind) -> bool {
        kind != NodeKind::Host
    }

    pub fn is_host(&self) -> bool {
        self.kind == NodeKind::Host
    }
}

/// Undirected link, stored with `u < v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Link {
    pub u: usize,
    pub v: usize,
    pub capacity: Rate,
}

pub type NodeId = usize;
pub type LinkId = usize;

/// Validated topology with nodes sorted by id. Node indices double as
/// location indices in [`Topology::alphabet`].
#[derive(Clone, Debug)]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    index: HashMap<String, NodeId>,
    /// Neighbors sorted by node index, with the connecting link.
    adjacency: Vec<Vec<(NodeId, LinkId)>>,
    link_index: HashMap<(NodeId, NodeId), LinkId>,
    placements: FunctionTable,
}

fn valid_id(id: &str) -> bool {
    let mut chars = id.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && id != "at"
}

impl Topology {
    /// Validates and canonicalizes a topology. Hosts without addresses get
    /// the lowest unused MAC and `10.0.0.0/8` address in id order.
    pub fn new(
        mut nodes: Vec<Node>,
        links: Vec<(String, String, Rate)>,
        placements: FunctionTable,
    ) -> Result<Topology, TopologyError> {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if !valid_id(&n.id) {
                return Err(TopologyError::BadId(n.id.clone()));
            }
            if index.insert(n.id.clone(), i).is_some() {
                return Err(TopologyError::DuplicateNode(n.id.clone()));
            }
        }
        assign_addresses(&mut nodes)?;

        let mut canonical = Vec::new();
        let mut link_index = HashMap::new();
        for (a, b, capacity) in links {
            let (Some(&ia), Some(&ib)) = (index.get(&a), index.get(&b)) else {
                return Err(TopologyError::DanglingLink(a, b));
            };
            if ia == ib {
                return Err(TopologyError::SelfLink(a));
            }
            if capacity == Rate::ZERO {
                return Err(TopologyError::ZeroCapacity(a, b));
            }
            let (u, v) = (ia.min(ib), ia.max(ib));
            if link_index.insert((u, v), usize::MAX).is_some() {
                return Err(TopologyError::DuplicateLink(a, b));
            }
            canonical.push(Link { u, v, capacity });
        }
        canonical.sort_by_key(|l| (l.u, l.v));
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, l) in canonical.iter().enumerate() {
            link_index.insert((l.u, l.v), i);
            link_index.insert((l.v, l.u), i);
            adjacency[l.u].push((l.v, i));
            adjacency[l.v].push((l.u, i));
        }
        adjacency.iter_mut().for_each(|a| a.sort_unstable());

        for (function, locs) in &placements {
            if index.contains_key(function) {
                return Err(TopologyError::FunctionNameClash(function.clone()));
            }
            if !valid_id(function) {
                return Err(TopologyError::BadId(function.clone()));
            }
            if locs.is_empty() {
                return Err(TopologyError::EmptyPlacement(function.clone()));
            }
            for node in locs {
                if !index.contains_key(node) {
                    return Err(TopologyError::UnknownPlacementNode {
                        function: function.clone(),
                        node: node.clone(),
                    });
                }
            }
        }
        Ok(Topology {
            nodes,
            links: canonical,
            index,
            adjacency,
            link_index,
            placements,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id]
    }

    pub fn id_of(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id].id
    }

    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, LinkId)] {
        &self.adjacency[id]
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        self.link_index.get(&(a, b)).copied()
    }

    /// Capacity of the link between two nodes; symmetric.
    pub fn capacity(&self, a: NodeId, b: NodeId) -> Option<Rate> {
        self.link_between(a, b).map(|l| self.links[l].capacity)
    }

    /// Port number on `at` that leads to `towards` (1-based, in neighbor order).
    pub fn port(&self, at: NodeId, towards: NodeId) -> Option<u32> {
        self.adjacency[at]
            .iter()
            .position(|(n, _)| *n == towards)
            .map(|p| p as u32 + 1)
    }

    /// Neighbor reached through a port.
    pub fn port_peer(&self, at: NodeId, port: u32) -> Option<NodeId> {
        let idx = (port as usize).checked_sub(1)?;
        self.adjacency[at].get(idx).map(|(n, _)| *n)
    }

    pub fn placements(&self) -> &FunctionTable {
        &self.placements
    }

    pub fn hosts(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|i| self.nodes[*i].is_host())
    }

    pub fn switches(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|i| self.nodes[*i].kind == NodeKind::Switch)
    }

    /// All locations, in node-index order.
    pub fn alphabet(&self) -> Alphabet {
        Alphabet::new(self.nodes.iter().map(|n| n.id.clone()))
    }

    /// Host whose MAC or IP address equals `value` in the given source or
    /// destination address field.
    pub fn host_by_address(&self, field: Field, value: u64) -> Option<NodeId> {
        self.hosts().find(|&h| {
            let n = &self.nodes[h];
            match field {
                Field::EthSrc | Field::EthDst => n.mac == Some(value),
                Field::IpSrc | Field::IpDst => n.ip == Some(value),
                _ => false,
            }
        })
    }

    pub fn describe(&self) -> String {
        format!(
            "{} nodes ({} hosts, {} switches), {} links",
            self.nodes.len(),
            self.hosts().count(),
            self.switches().count(),
            self.links.len()
        )
    }
}

fn assign_addresses(nodes: &mut [Node]) -> Result<(), TopologyError> {
    let mut macs = BTreeSet::new();
    let mut ips = BTreeSet::new();
    for n in nodes.iter().filter(|n| n.is_host()) {
        if let Some(m) = n.mac {
            if !macs.insert(m) {
                return Err(TopologyError::DuplicateAddress(format_mac(m)));
            }
        }
        if let Some(ip) = n.ip {
            if !ips.insert(ip) {
                return Err(TopologyError::DuplicateAddress(format_ipv4(ip)));
            }
        }
    }
    let mut next_mac = 1u64;
    let mut next_ip = 0x0a00_0001u64;
    for n in nodes.iter_mut().filter(|n| n.kind == NodeKind::Host) {
        if n.mac.is_none() {
            while macs.contains(&next_mac) {
                next_mac += 1;
            }
            n.mac = Some(next_mac);
            macs.insert(next_mac);
        }
        if n.ip.is_none() {
            while ips.contains(&next_ip) {
                next_ip += 1;
            }
            n.ip = Some(next_ip);
            ips.insert(next_ip);
        }
    }
    Ok(())
}

/// Builder used by generators and tests.
#[derive(Default)]
pub struct TopologyBuilder {
    nodes: Vec<Node>,
    links: Vec<(String, String, Rate)>,
    placements: BTreeMap<String, BTreeSet<String>>,
}

impl TopologyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn host(mut self, id: &str) -> Self {
        self.nodes.push(Node::new(id, NodeKind::Host));
        self
    }

    pub fn switch(mut self, id: &str) -> Self {
        self.nodes.push(Node::new(id, NodeKind::Switch));
        self
    }

    pub fn middlebox(mut self, id: &str) -> Self {
        self.nodes.push(Node::new(id, NodeKind::Middlebox));
        self
    }

    pub fn node(mut self, node: Node) -> Self {
        self.nodes.push(node);
        self
    }

    pub fn link(mut self, a: &str, b: &str, capacity: Rate) -> Self {
        self.links.push((a.to_string(), b.to_string(), capacity));
        self
    }

    pub fn place(mut self, function: &str, nodes: &[&str]) -> Self {
        self.placements
            .entry(function.to_string())
            .or_default()
            .extend(nodes.iter().map(|s| s.to_string()));
        self
    }

    pub fn build(self) -> Result<Topology, TopologyError> {
        Topology::new(self.nodes, self.links, self.placements)
    }
}
