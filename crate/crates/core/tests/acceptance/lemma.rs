//! Product-graph walks versus directly enumerated regex-accepted walks.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use provlang::automata::{compile, FunctionTable};
use provlang::logical::{Endpoints, LogicalGraph};
use provlang::policy::PathExpr;
use provlang::topology::{NodeId, Topology, TopologyBuilder};
use provlang::Rate;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::common::oracles::{word_matches, Pos};
use crate::{check, rng, within, Outcome};

const MAX_LEN: usize = 6;

/// Connected topology with 2 to 6 nodes: a random switch tree with chords,
/// and up to two hosts hanging off random switches.
pub fn random_topology(r: &mut ChaCha8Rng, max_nodes: usize, hosts: usize) -> Topology {
    let switches = r.random_range(1.max(2usize.saturating_sub(hosts))..=max_nodes - hosts);
    let mut b = TopologyBuilder::new();
    let mut edges = BTreeSet::new();
    for s in 0..switches {
        b = b.switch(&format!("s{s}"));
        if s > 0 {
            edges.insert((r.random_range(0..s), s));
        }
    }
    for _ in 0..r.random_range(0..=switches) {
        let (a, c) = (r.random_range(0..switches), r.random_range(0..switches));
        if a < c {
            edges.insert((a, c));
        }
    }
    for (a, c) in edges {
        b = b.link(&format!("s{a}"), &format!("s{c}"), Rate::mbps(100));
    }
    for h in 0..hosts {
        let s = r.random_range(0..switches);
        b = b.host(&format!("h{h}")).link(&format!("h{h}"), &format!("s{s}"), Rate::mbps(100));
    }
    b.build().expect("generated topology is valid")
}

/// Random expression with at most `ops` operators over `names` and `.`.
fn random_expr(r: &mut ChaCha8Rng, names: &[String], ops: &mut usize) -> PathExpr {
    if *ops == 0 || r.random_bool(0.3) {
        return if r.random_bool(0.25) {
            PathExpr::Dot
        } else {
            PathExpr::sym(names[r.random_range(0..names.len())].clone())
        };
    }
    *ops -= 1;
    match r.random_range(0..4) {
        0 => PathExpr::Seq(vec![random_expr(r, names, ops), random_expr(r, names, ops)]),
        1 => PathExpr::Alt(vec![random_expr(r, names, ops), random_expr(r, names, ops)]),
        2 => PathExpr::Star(Box::new(random_expr(r, names, ops))),
        _ => PathExpr::Not(Box::new(random_expr(r, names, ops))),
    }
}

/// Location sequences of every source-to-sink walk with at most `MAX_LEN`
/// product vertices.
fn product_walks(g: &LogicalGraph) -> BTreeSet<Vec<NodeId>> {
    fn go(g: &LogicalGraph, v: usize, walk: &mut Vec<usize>, depth: usize, out: &mut BTreeSet<Vec<NodeId>>) {
        for &e in g.out_edges(v) {
            let to = g.edges()[e].to;
            walk.push(e);
            if to == g.sink() {
                out.insert(g.project(walk).locations);
            } else if depth < MAX_LEN {
                go(g, to, walk, depth + 1, out);
            }
            walk.pop();
        }
    }
    let mut out = BTreeSet::new();
    go(g, g.source(), &mut Vec::new(), 0, &mut out);
    out
}

/// Every physical walk of at most `MAX_LEN` locations (consecutive
/// locations equal or adjacent) that the expression accepts.
fn accepted_walks(topo: &Topology, expr: &PathExpr, endpoints: Option<Endpoints>) -> BTreeSet<Vec<NodeId>> {
    let n = topo.nodes().len();
    let allowed = |v: NodeId| match endpoints {
        Some(ep) => !topo.node(v).is_host() || v == ep.src || v == ep.dst,
        None => true,
    };
    let mut out = BTreeSet::new();
    let mut layer: Vec<Vec<NodeId>> = (0..n)
        .filter(|&v| endpoints.is_none_or(|ep| ep.src == v))
        .map(|v| vec![v])
        .collect();
    for _ in 0..MAX_LEN {
        for w in &layer {
            let last = *w.last().expect("walks are nonempty");
            let word: Vec<Pos> = w.iter().map(|&l| Pos::at(topo.name(l))).collect();
            if endpoints.is_none_or(|ep| ep.dst == last) && word_matches(expr, &word, &|_| false) {
                out.insert(w.clone());
            }
        }
        layer = layer
            .iter()
            .flat_map(|w| {
                let last = *w.last().expect("walks are nonempty");
                (0..n)
                    .filter(move |&v| (v == last || topo.link_between(last, v).is_some()) && allowed(v))
                    .map(move |v| {
                        let mut next = w.clone();
                        next.push(v);
                        next
                    })
            })
            .collect();
    }
    out
}

pub fn product_graph_projection() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let (mut instances, mut walks, mut pinned) = (0, 0usize, 0);
    while instances < 500 {
        let hosts = r.random_range(0..=2);
        let topo = random_topology(&mut r, 6, hosts);
        let names: Vec<String> = topo.nodes().iter().map(|n| n.id.clone()).collect();
        let mut ops = 4;
        let expr = random_expr(&mut r, &names, &mut ops);
        let nfa = compile(&expr, &topo.alphabet(), &FunctionTable::new()).map_err(|e| e.to_string())?;
        let endpoints = (hosts == 2 && r.random_bool(0.5)).then(|| Endpoints {
            src: topo.id_of("h0").expect("host exists"),
            dst: topo.id_of("h1").expect("host exists"),
        });
        let graph = LogicalGraph::build(&nfa, &topo, endpoints);
        check!(
            graph.num_vertices() == topo.nodes().len() * nfa.num_states() + 2,
            "instance {instances}: vertex count"
        );
        let projected = product_walks(&graph);
        let direct = accepted_walks(&topo, &expr, endpoints);
        if projected != direct {
            let only_graph = projected.difference(&direct).next();
            let only_regex = direct.difference(&projected).next();
            return Err(format!(
                "instance {instances} ({}, {:?}): graph-only {:?}, regex-only {:?}",
                provlang::policy::print_path(&expr),
                endpoints,
                only_graph.map(|w| w.iter().map(|&l| topo.name(l)).collect::<Vec<_>>()),
                only_regex.map(|w| w.iter().map(|&l| topo.name(l)).collect::<Vec<_>>()),
            ));
        }
        walks += direct.len();
        pinned += usize::from(endpoints.is_some());
        instances += 1;
    }
    within(start, Duration::from_secs(60), "500 instances")?;
    Ok(format!("{instances} instances ({pinned} with endpoints), {walks} walks matched"))
}
