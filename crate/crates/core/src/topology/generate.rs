//! Synthetic topologies for benchmarks and tests.

use std::collections::BTreeSet;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Topology, TopologyBuilder, TopologyError};
use crate::rate::Rate;

/// k-ary fat tree: k²/4 core switches, k pods of k/2 aggregation and k/2
/// edge switches, and k/2 hosts per edge switch.
pub fn fat_tree(k: usize, capacity: Rate) -> Result<Topology, TopologyError> {
    if k < 2 || k % 2 != 0 {
        return Err(TopologyError::InvalidParams(format!("fat-tree arity {k} must be even and at least 2")));
    }
    let half = k / 2;
    let mut b = TopologyBuilder::new();
    for c in 0..half * half {
        b = b.switch(&format!("c{c}"));
    }
    for pod in 0..k {
        for j in 0..half {
            let agg = format!("a{pod}_{j}");
            let edge = format!("e{pod}_{j}");
            b = b.switch(&agg).switch(&edge);
            for m in 0..half {
                b = b.link(&agg, &format!("c{}", j * half + m), capacity);
            }
            for x in 0..half {
                let host = format!("h{pod}_{j}_{x}");
                b = b.host(&host).link(&host, &edge, capacity);
            }
        }
        for j in 0..half {
            for i in 0..half {
                b = b.link(&format!("a{pod}_{j}"), &format!("e{pod}_{i}"), capacity);
            }
        }
    }
    b.build()
}

/// Complete tree of switches `depth` levels deep with `fanout` children per
/// switch; the leaves below the last switch level are hosts.
pub fn balanced_tree(depth: usize, fanout: usize, capacity: Rate) -> Result<Topology, TopologyError> {
    if depth == 0 || fanout == 0 {
        return Err(TopologyError::InvalidParams("depth and fanout must be at least 1".into()));
    }
    let mut b = TopologyBuilder::new().switch("s0");
    let mut level = vec!["s0".to_string()];
    let mut next_switch = 1;
    let mut next_host = 0;
    for d in 1..=depth {
        let mut children = Vec::new();
        for parent in &level {
            for _ in 0..fanout {
                let name = if d == depth {
                    next_host += 1;
                    let n = format!("h{next_host}");
                    b = b.host(&n);
                    n
                } else {
                    let n = format!("s{next_switch}");
                    next_switch += 1;
                    b = b.switch(&n);
                    n
                };
                b = b.link(parent, &name, capacity);
                children.push(name);
            }
        }
        level = children;
    }
    b.build()
}

/// Chain of `switches` switches, each with `hosts_per_switch` hosts.
pub fn linear(switches: usize, hosts_per_switch: usize, capacity: Rate) -> Result<Topology, TopologyError> {
    if switches == 0 {
        return Err(TopologyError::InvalidParams("need at least one switch".into()));
    }
    let mut b = TopologyBuilder::new();
    for i in 1..=switches {
        let s = format!("s{i}");
        b = b.switch(&s);
        if i > 1 {
            b = b.link(&format!("s{}", i - 1), &s, capacity);
        }
        for j in 1..=hosts_per_switch {
            let h = if hosts_per_switch == 1 {
                format!("h{i}")
            } else {
                format!("h{i}_{j}")
            };
            b = b.host(&h).link(&h, &s, capacity);
        }
    }
    b.build()
}

/// Random connected switch graph in the style of wide-area topology
/// datasets: a random spanning tree plus `extra_links` chords, one host per
/// switch.
pub fn zoo_like(switches: usize, extra_links: usize, seed: u64, capacity: Rate) -> Result<Topology, TopologyError> {
    if switches < 2 {
        return Err(TopologyError::InvalidParams("need at least two switches".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = BTreeSet::new();
    for i in 1..switches {
        let j = rng.random_range(0..i);
        edges.insert((j, i));
    }
    let max_edges = switches * (switches - 1) / 2;
    let target = (edges.len() + extra_links).min(max_edges);
    while edges.len() < target {
        let a = rng.random_range(0..switches);
        let b = rng.random_range(0..switches);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let mut b = TopologyBuilder::new();
    for i in 0..switches {
        let (s, h) = (format!("s{i}"), format!("h{i}"));
        b = b.switch(&s).host(&h).link(&h, &s, capacity);
    }
    for (x, y) in edges {
        b = b.link(&format!("s{x}"), &format!("s{y}"), capacity);
    }
    b.build()
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Converts a GraphML graph: every graph node becomes a switch `s_<id>` with
/// one attached host `h_<id>`, every edge a link. All links get `capacity`.
/// Self-loops and parallel edges are dropped.
pub fn from_graphml(text: &str, capacity: Rate) -> Result<Topology, TopologyError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| TopologyError::Malformed(e.to_string()))?;
    let mut b = TopologyBuilder::new();
    let mut ids = BTreeSet::new();
    for node in doc.descendants().filter(|n| n.has_tag_name("node") || n.tag_name().name() == "node") {
        let id = node
            .attribute("id")
            .ok_or_else(|| TopologyError::Malformed("graph node without id".into()))?;
        let clean = sanitize(id);
        if !ids.insert(clean.clone()) {
            return Err(TopologyError::DuplicateNode(format!("s_{clean}")));
        }
        let (s, h) = (format!("s_{clean}"), format!("h_{clean}"));
        b = b.switch(&s).host(&h).link(&h, &s, capacity);
    }
    let mut seen = BTreeSet::new();
    for edge in doc.descendants().filter(|n| n.tag_name().name() == "edge") {
        let (Some(src), Some(dst)) = (edge.attribute("source"), edge.attribute("target")) else {
            return Err(TopologyError::Malformed("graph edge without endpoints".into()));
        };
        let (a, c) = (sanitize(src), sanitize(dst));
        if a == c || !seen.insert((a.clone().min(c.clone()), a.clone().max(c.clone()))) {
            continue;
        }
        b = b.link(&format!("s_{a}"), &format!("s_{c}"), capacity);
    }
    b.build()
}
