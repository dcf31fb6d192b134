//! Follows one packet through device programs.

use thiserror::Error;

use crate::automata::Nfa;
use crate::codegen::{Direction, FilterAction, FlowAction, FlowRule, Programs};
use crate::predicate::{eval, Packet};
use crate::rate::Rate;
use crate::topology::{LinkId, NodeId, Topology};

/// Upper bound on devices visited before a packet is declared looping.
pub const HOP_LIMIT: usize = 4096;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("no rule on `{device}` matches the packet")]
    NoMatchingRule { device: String },
    #[error("host `{host}` drops the packet")]
    Dropped { host: String },
    #[error("packet reaches host `{host}` still tagged")]
    TaggedAtHost { host: String },
    #[error("host `{host}` has no uplink")]
    NoUplink { host: String },
    #[error("`{device}` outputs to nonexistent port {port}")]
    BadPort { device: String, port: u32 },
    #[error("packet visited more than {HOP_LIMIT} locations")]
    Loop,
    #[error("`{0}` is not a host")]
    NotAHost(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub locations: Vec<NodeId>,
    /// `(position in locations, function)`.
    pub functions: Vec<(usize, String)>,
    /// Links crossed, in order.
    pub links: Vec<LinkId>,
    /// `(device, port, queue)` for every enqueue.
    pub queues: Vec<(NodeId, u32, u32)>,
    /// `(host, filter index, limit)` for every rate-limit filter that matched.
    pub rate_limits: Vec<(NodeId, usize, Rate)>,
    pub delivered: NodeId,
}

impl Trace {
    pub fn names<'a>(&self, topo: &'a Topology) -> Vec<&'a str> {
        self.locations.iter().map(|l| topo.name(*l)).collect()
    }

    /// Functions in the order they were performed.
    pub fn function_names(&self) -> Vec<&str> {
        self.functions.iter().map(|(_, f)| f.as_str()).collect()
    }
}

fn matches(rule: &FlowRule, in_port: u32, tag: Option<u16>, packet: &Packet) -> bool {
    rule.matches.in_port.is_none_or(|p| p == in_port) && rule.matches.tag == tag && rule.matches.header.matches(packet)
}

/// Sends `packet` from host `src` and follows it to the host that receives it.
pub fn replay(programs: &Programs, topo: &Topology, src: NodeId, packet: &Packet) -> Result<Trace, ReplayError> {
    let name = |n: NodeId| topo.name(n).to_string();
    if !topo.node(src).is_host() {
        return Err(ReplayError::NotAHost(name(src)));
    }
    let mut t = Trace {
        locations: vec![src],
        functions: Vec::new(),
        links: Vec::new(),
        queues: Vec::new(),
        rate_limits: Vec::new(),
        delivered: src,
    };
    let mut uplink = None;
    let program = &programs.devices[topo.name(src)];
    for (i, f) in program.filters.iter().enumerate() {
        if f.direction != Direction::Out || !eval(&f.predicate, packet) {
            continue;
        }
        for a in &f.actions {
            match a {
                FilterAction::Drop => return Err(ReplayError::Dropped { host: name(src) }),
                FilterAction::RateLimit(r) => t.rate_limits.push((src, i, *r)),
                FilterAction::Apply(func) => t.functions.push((t.locations.len() - 1, func.clone())),
                FilterAction::Stay => t.locations.push(src),
                FilterAction::Output(p) => uplink = Some(*p),
            }
        }
    }
    let first_port = match uplink {
        Some(p) => p,
        None => crate::besteffort::attachment(topo, src)
            .and_then(|a| topo.port(src, a))
            .ok_or_else(|| ReplayError::NoUplink { host: name(src) })?,
    };
    let (mut at, mut in_port) = cross(topo, &mut t, src, first_port)?;
    let mut tag: Option<u16> = None;
    loop {
        if t.locations.len() > HOP_LIMIT {
            return Err(ReplayError::Loop);
        }
        t.locations.push(at);
        if topo.node(at).is_host() {
            if tag.is_some() {
                return Err(ReplayError::TaggedAtHost { host: name(at) });
            }
            let program = &programs.devices[topo.name(at)];
            for f in program.filters.iter().filter(|f| f.direction == Direction::In) {
                if !eval(&f.predicate, packet) {
                    continue;
                }
                for a in &f.actions {
                    match a {
                        FilterAction::Apply(func) => t.functions.push((t.locations.len() - 1, func.clone())),
                        FilterAction::Stay => t.locations.push(at),
                        FilterAction::Drop => return Err(ReplayError::Dropped { host: name(at) }),
                        FilterAction::RateLimit(_) | FilterAction::Output(_) => {}
                    }
                }
            }
            t.delivered = at;
            return Ok(t);
        }
        let program = &programs.devices[topo.name(at)];
        let rule = program
            .rules
            .iter()
            .find(|r| matches(r, in_port, tag, packet))
            .ok_or_else(|| ReplayError::NoMatchingRule { device: name(at) })?;
        let mut out = None;
        for a in &rule.actions {
            match a {
                FlowAction::Apply(func) => t.functions.push((t.locations.len() - 1, func.clone())),
                FlowAction::PushTag(x) | FlowAction::SetTag(x) => tag = Some(*x),
                FlowAction::PopTag => tag = None,
                FlowAction::Output(p) => out = Some(*p),
                FlowAction::Enqueue { port, queue } => {
                    t.queues.push((at, *port, *queue));
                    out = Some(*port);
                }
                FlowAction::Resubmit => {}
            }
        }
        match out {
            Some(p) => (at, in_port) = cross(topo, &mut t, at, p)?,
            None if rule.actions.contains(&FlowAction::Resubmit) => {}
            None => return Err(ReplayError::NoMatchingRule { device: name(at) }),
        }
    }
}

fn cross(topo: &Topology, t: &mut Trace, at: NodeId, port: u32) -> Result<(NodeId, u32), ReplayError> {
    let bad = || ReplayError::BadPort {
        device: topo.name(at).to_string(),
        port,
    };
    let peer = topo.port_peer(at, port).ok_or_else(bad)?;
    t.links.push(topo.link_between(at, peer).ok_or_else(bad)?);
    Ok((peer, topo.port(peer, at).ok_or_else(bad)?))
}

/// Whether some run of `nfa` reads exactly the locations of a trace and
/// performs exactly its functions, at the same positions.
pub fn nfa_accepts_trace(nfa: &Nfa, locations: &[NodeId], functions: &[(usize, String)]) -> bool {
    let mut current = vec![nfa.start()];
    for (i, &loc) in locations.iter().enumerate() {
        let want: Option<&str> = functions.iter().find(|(p, _)| *p == i).map(|(_, f)| f.as_str());
        if functions.iter().filter(|(p, _)| *p == i).count() > 1 {
            return false;
        }
        let mut next: Vec<usize> = current
            .iter()
            .flat_map(|&q| nfa.successors(q).iter().copied())
            .filter(|&q2| {
                nfa.incoming(q2)
                    .is_some_and(|l| l.symbols.contains(loc) && l.function.as_deref() == want)
            })
            .collect();
        next.sort_unstable();
        next.dedup();
        if next.is_empty() {
            return false;
        }
        current = next;
    }
    current.iter().any(|&q| nfa.is_accepting(q))
}
