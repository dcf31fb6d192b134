//! Path-selection model: one binary per product-graph edge, flow
//! conservation per product vertex, and per-link reservation accounting.

use std::fmt::Write as _;

use crate::logical::{EdgeKind, Endpoints, LogicalGraph};
use crate::rate::Rate;
use crate::topology::{LinkId, Topology};

/// Optimization criterion for guaranteed paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Objective {
    /// Minimize hop count weighted by each statement's guarantee.
    WeightedShortest,
    /// Minimize the largest fraction of any link's capacity reserved.
    MinMaxRatio,
    /// Minimize the largest bandwidth reserved on any link.
    MinMaxReserved,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::WeightedShortest => "shortest",
            Objective::MinMaxRatio => "minmax-ratio",
            Objective::MinMaxReserved => "minmax-reserved",
        }
    }

    pub fn from_name(name: &str) -> Option<Objective> {
        [
            Objective::WeightedShortest,
            Objective::MinMaxRatio,
            Objective::MinMaxReserved,
        ]
        .into_iter()
        .find(|o| o.name() == name)
    }
}

/// One statement that needs a guaranteed path.
#[derive(Clone, Debug)]
pub struct Commodity {
    pub statement: String,
    pub guarantee: Rate,
    pub endpoints: Endpoints,
    pub graph: LogicalGraph,
}

#[derive(Clone, Debug)]
pub struct ProvisionModel {
    pub commodities: Vec<Commodity>,
    pub objective: Objective,
    pub capacities: Vec<Rate>,
    /// `link_edges[link]` lists `(commodity, edge)` pairs crossing the link
    /// in either direction.
    pub link_edges: Vec<Vec<(usize, usize)>>,
}

impl ProvisionModel {
    pub fn new(commodities: Vec<Commodity>, topo: &Topology, objective: Objective) -> ProvisionModel {
        let mut link_edges = vec![Vec::new(); topo.links().len()];
        for (i, c) in commodities.iter().enumerate() {
            for (e, edge) in c.graph.edges().iter().enumerate() {
                if let EdgeKind::Link { link, .. } = edge.kind {
                    link_edges[link].push((i, e));
                }
            }
        }
        ProvisionModel {
            commodities,
            objective,
            capacities: topo.links().iter().map(|l| l.capacity).collect(),
            link_edges,
        }
    }

    pub fn num_edge_variables(&self) -> usize {
        self.commodities.iter().map(|c| c.graph.edges().len()).sum()
    }

    /// One conservation row per product vertex of every commodity.
    pub fn num_conservation_rows(&self) -> usize {
        self.commodities.iter().map(|c| c.graph.num_vertices()).sum()
    }

    /// One reservation row per physical link.
    pub fn num_reservation_rows(&self) -> usize {
        self.capacities.len()
    }

    /// Edges of commodity `i` crossing `link`.
    pub fn edges_on_link(&self, i: usize, link: LinkId) -> impl Iterator<Item = usize> + '_ {
        self.link_edges[link]
            .iter()
            .filter(move |(c, _)| *c == i)
            .map(|(_, e)| *e)
    }

    /// CPLEX LP text with rates in bytes per second.
    pub fn to_lp(&self) -> String {
        let x = |i: usize, e: usize| format!("x_{i}_{e}");
        let mut out = String::new();
        let _ = writeln!(out, "\\ objective: {}", self.objective.name());
        out.push_str("Minimize\n obj:");
        match self.objective {
            Objective::WeightedShortest => {
                let mut any = false;
                for (i, c) in self.commodities.iter().enumerate() {
                    for (e, edge) in c.graph.edges().iter().enumerate() {
                        if matches!(edge.kind, EdgeKind::Link { .. }) {
                            let _ = write!(out, " + {} {}", c.guarantee.0, x(i, e));
                            any = true;
                        }
                    }
                }
                if !any {
                    out.push_str(" 0 rmax");
                }
            }
            Objective::MinMaxRatio => out.push_str(" rmax"),
            Objective::MinMaxReserved => out.push_str(" Rmax"),
        }
        out.push_str("\nSubject To\n");
        for (i, c) in self.commodities.iter().enumerate() {
            let g = &c.graph;
            for v in 0..g.num_vertices() {
                let rhs = if v == g.source() {
                    1
                } else if v == g.sink() {
                    -1
                } else {
                    0
                };
                let _ = write!(out, " flow_{i}_{v}:");
                if g.out_edges(v).is_empty() && g.in_edges(v).is_empty() {
                    out.push_str(" 0 rmax");
                }
                for &e in g.out_edges(v) {
                    let _ = write!(out, " + {}", x(i, e));
                }
                for &e in g.in_edges(v) {
                    let _ = write!(out, " - {}", x(i, e));
                }
                let _ = writeln!(out, " = {rhs}");
            }
        }
        for (l, cap) in self.capacities.iter().enumerate() {
            let _ = write!(out, " reserve_{l}:");
            for &(i, e) in &self.link_edges[l] {
                let _ = write!(out, " + {} {}", self.commodities[i].guarantee.0, x(i, e));
            }
            let _ = writeln!(out, " - {} r_{l} = 0", cap.0);
            let _ = writeln!(out, " ratio_{l}: r_{l} - rmax <= 0");
            let _ = writeln!(out, " reserved_{l}: {} r_{l} - Rmax <= 0", cap.0);
        }
        out.push_str(" cap: rmax <= 1\nBinary\n");
        for (i, c) in self.commodities.iter().enumerate() {
            for e in 0..c.graph.edges().len() {
                let _ = writeln!(out, " {}", x(i, e));
            }
        }
        out.push_str("End\n");
        out
    }
}
