//! Product of the physical topology with a statement's path automaton.
//!
//! Vertex `(u, q)` means "at location `u`, the automaton is in state `q`".
//! A walk from the source to the sink projects onto a sequence of locations
//! accepted by the automaton in which consecutive entries are equal or
//! adjacent, and every such sequence lifts to a walk.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::automata::Nfa;
use crate::topology::{LinkId, NodeId, NodeKind, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Vertex {
    Source,
    Sink,
    Product { location: NodeId, state: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    /// From the source into the first location.
    Enter,
    /// From the last location to the sink.
    Exit,
    /// Stays at one location while the automaton advances.
    Stationary(NodeId),
    /// Crosses a physical link from `from` to `to`.
    Link { from: NodeId, to: NodeId, link: LinkId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    /// Function performed at the entered location.
    pub function: Option<String>,
}

/// Restricts walks to start at one host, end at another, and never pass
/// through any other host.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Endpoints {
    pub src: NodeId,
    pub dst: NodeId,
}

/// The product graph for one statement.
#[derive(Clone, Debug)]
pub struct LogicalGraph {
    locations: usize,
    states: usize,
    edges: Vec<Edge>,
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
}

/// A walk projected onto physical locations.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhysicalPath {
    pub locations: Vec<NodeId>,
    /// `(position in locations, function)` for every function performed.
    pub functions: Vec<(usize, String)>,
}

impl PhysicalPath {
    pub fn names<'a>(&self, topo: &'a Topology) -> Vec<&'a str> {
        self.locations.iter().map(|l| topo.name(*l)).collect()
    }

    /// Locations with consecutive repeats removed.
    pub fn hops(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = Vec::with_capacity(self.locations.len());
        for &l in &self.locations {
            if out.last() != Some(&l) {
                out.push(l);
            }
        }
        out
    }
}

impl LogicalGraph {
    pub fn build(nfa: &Nfa, topo: &Topology, endpoints: Option<Endpoints>) -> LogicalGraph {
        let locations = topo.nodes().len();
        let states = nfa.num_states();
        let n = locations * states + 2;
        let mut g = LogicalGraph {
            locations,
            states,
            edges: Vec::new(),
            out: vec![Vec::new(); n],
            inc: vec![Vec::new(); n],
        };
        let allowed = |loc: NodeId| match endpoints {
            Some(ep) => topo.node(loc).kind != NodeKind::Host || loc == ep.src || loc == ep.dst,
            None => true,
        };
        let (source, sink) = (g.source(), g.sink());
        for &q2 in nfa.successors(nfa.start()) {
            let label = nfa.incoming(q2).expect("successors are labelled");
            for v in label.symbols.iter() {
                if endpoints.is_some_and(|ep| ep.src != v) {
                    continue;
                }
                g.push(source, g.vertex_index(v, q2), EdgeKind::Enter, label.function.clone());
            }
        }
        for u in 0..locations {
            if !allowed(u) {
                continue;
            }
            for q in 0..states {
                let from = g.vertex_index(u, q);
                for &q2 in nfa.successors(q) {
                    let label = nfa.incoming(q2).expect("successors are labelled");
                    if label.symbols.contains(u) {
                        g.push(from, g.vertex_index(u, q2), EdgeKind::Stationary(u), label.function.clone());
                    }
                    for &(v, link) in topo.neighbors(u) {
                        if label.symbols.contains(v) && allowed(v) {
                            let kind = EdgeKind::Link { from: u, to: v, link };
                            g.push(from, g.vertex_index(v, q2), kind, label.function.clone());
                        }
                    }
                }
                if nfa.is_accepting(q) && endpoints.is_none_or(|ep| ep.dst == u) {
                    g.push(from, sink, EdgeKind::Exit, None);
                }
            }
        }
        g
    }

    fn push(&mut self, from: usize, to: usize, kind: EdgeKind, function: Option<String>) {
        let id = self.edges.len();
        self.edges.push(Edge { from, to, kind, function });
        self.out[from].push(id);
        self.inc[to].push(id);
    }

    pub fn vertex_index(&self, location: NodeId, state: usize) -> usize {
        location * self.states + state
    }

    pub fn vertex(&self, index: usize) -> Vertex {
        if index == self.source() {
            Vertex::Source
        } else if index == self.sink() {
            Vertex::Sink
        } else {
            Vertex::Product {
                location: index / self.states,
                state: index % self.states,
            }
        }
    }

    pub fn source(&self) -> usize {
        self.locations * self.states
    }

    pub fn sink(&self) -> usize {
        self.locations * self.states + 1
    }

    pub fn num_vertices(&self) -> usize {
        self.locations * self.states + 2
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.inc[v]
    }

    /// Projects a source-to-sink walk given as edge indices.
    pub fn project(&self, walk: &[usize]) -> PhysicalPath {
        let mut path = PhysicalPath {
            locations: Vec::new(),
            functions: Vec::new(),
        };
        for &e in walk {
            let edge = &self.edges[e];
            if let Vertex::Product { location, .. } = self.vertex(edge.to) {
                path.locations.push(location);
                if let Some(f) = &edge.function {
                    path.functions.push((path.locations.len() - 1, f.clone()));
                }
            }
        }
        path
    }

    /// A walk with the fewest physical link crossings (stationary moves are
    /// free), restricted to edges accepted by `usable`. Ties are broken
    /// towards lower edge indices.
    pub fn cheapest_walk(&self, usable: impl Fn(usize) -> bool) -> Option<Vec<usize>> {
        let n = self.num_vertices();
        let mut dist = vec![usize::MAX; n];
        let mut via = vec![usize::MAX; n];
        let mut deque = VecDeque::from([self.source()]);
        dist[self.source()] = 0;
        while let Some(v) = deque.pop_front() {
            for &e in &self.out[v] {
                if !usable(e) {
                    continue;
                }
                let edge = &self.edges[e];
                let w = usize::from(matches!(edge.kind, EdgeKind::Link { .. }));
                let nd = dist[v] + w;
                if nd < dist[edge.to] {
                    dist[edge.to] = nd;
                    via[edge.to] = e;
                    if w == 0 {
                        deque.push_front(edge.to);
                    } else {
                        deque.push_back(edge.to);
                    }
                }
            }
        }
        if dist[self.sink()] == usize::MAX {
            return None;
        }
        let mut walk = Vec::new();
        let mut cur = self.sink();
        while cur != self.source() {
            let e = via[cur];
            walk.push(e);
            cur = self.edges[e].from;
        }
        walk.reverse();
        Some(walk)
    }

    pub fn has_path(&self) -> bool {
        self.cheapest_walk(|_| true).is_some()
    }

    /// Graphviz rendering.
    pub fn to_dot(&self, topo: &Topology) -> String {
        let mut out = String::from("digraph logical {\n  rankdir=LR;\n");
        let label = |v: usize| match self.vertex(v) {
            Vertex::Source => "s".to_string(),
            Vertex::Sink => "t".to_string(),
            Vertex::Product { location, state } => format!("{},q{}", topo.name(location), state),
        };
        let mut used = vec![false; self.num_vertices()];
        for e in &self.edges {
            used[e.from] = true;
            used[e.to] = true;
        }
        for (v, _) in used.iter().enumerate().filter(|(_, u)| **u) {
            let _ = writeln!(out, "  v{} [label=\"{}\"];", v, label(v));
        }
        for e in &self.edges {
            let style = match e.kind {
                EdgeKind::Stationary(_) => " [style=dashed]",
                _ => "",
            };
            let _ = writeln!(out, "  v{} -> v{}{};", e.from, e.to, style);
        }
        out.push_str("}\n");
        out
    }
}
