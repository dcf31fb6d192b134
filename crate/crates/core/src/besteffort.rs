//! Sink trees for statements without guarantees.
//!
//! For each path expression, the product of its automaton with the
//! non-host locations is searched breadth-first backwards from an egress
//! switch. A tree vertex is a `(location, state)` pair; its next hop is the
//! neighbouring vertex one step closer to the egress. Hosts only appear at
//! the ends of a route: the source host's symbol is read before the ingress
//! switch and the destination's after the egress switch.
//!
//! Destination hosts behind one egress switch share a tree when the same
//! automaton states let them be read and accepted. Building a tree touches at
//! most `|L| * |Q|` vertices for `|L|` switches and middleboxes.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::automata::{AutomataError, Nfa};
use crate::logical::PhysicalPath;
use crate::policy::{is_synthesized_catch_all, Field, PathExpr, Policy, Statement};
use crate::predicate::{to_dnf, Conjunct, FieldSet};
use crate::provision::statement_automaton;
use crate::rate::Rate;
use crate::topology::{NodeId, Topology};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BestEffortError {
    #[error("statement `{statement}`: {source}")]
    Automata { statement: String, source: AutomataError },
}

/// Best-effort statements sharing one path expression.
#[derive(Clone, Debug)]
pub struct PathClass {
    pub path: PathExpr,
    pub nfa: Nfa,
    pub statements: Vec<String>,
}

pub type TreeVertex = (NodeId, usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SinkTree {
    pub sink: NodeId,
    pub class: usize,
    /// Destination hosts attached to `sink` that this tree delivers to.
    pub hosts: Vec<NodeId>,
    /// States at the sink from which the destination can be read and
    /// accepted.
    pub targets: BTreeSet<usize>,
    /// Hop distance to the sink for every vertex that reaches it.
    pub dist: BTreeMap<TreeVertex, usize>,
    /// Next vertex towards the sink; absent for sink vertices.
    pub next: BTreeMap<TreeVertex, TreeVertex>,
}

impl SinkTree {
    /// Automaton states used by the tree's vertices, ascending.
    pub fn states(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.dist.keys().map(|(_, q)| *q).collect();
        set.into_iter().collect()
    }

    /// Vertices from `start` to a sink vertex.
    pub fn walk_from(&self, start: TreeVertex) -> Vec<TreeVertex> {
        let mut out = vec![start];
        let mut cur = start;
        while let Some(&n) = self.next.get(&cur) {
            out.push(n);
            cur = n;
        }
        out
    }
}

/// Where one source/destination pair of a statement is forwarded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BestEffortRoute {
    pub statement: String,
    pub src: NodeId,
    pub dst: NodeId,
    pub tree: usize,
    /// First tree vertex, at the source's attachment switch.
    pub entry: TreeVertex,
    /// Function performed at each consecutive visit of the source host.
    pub src_steps: Vec<Option<String>>,
    /// Function performed at each consecutive visit of the destination host.
    pub dst_steps: Vec<Option<String>>,
    pub path: PhysicalPath,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Unreachable {
    pub statement: String,
    pub src: NodeId,
    pub dst: NodeId,
}

#[derive(Clone, Debug)]
pub struct BestEffortPlan {
    pub classes: Vec<PathClass>,
    pub trees: Vec<SinkTree>,
    pub routes: Vec<BestEffortRoute>,
    /// Source/destination pairs whose path expression admits no route.
    pub unreachable: Vec<Unreachable>,
}

impl BestEffortPlan {
    pub fn route(&self, statement: &str, src: NodeId, dst: NodeId) -> Option<&BestEffortRoute> {
        self.routes
            .iter()
            .find(|r| r.statement == statement && r.src == src && r.dst == dst)
    }
}

/// Header constraints every packet sent (`as_source`) or received by host `h`
/// satisfies.
pub fn host_conjunct(topo: &Topology, h: NodeId, as_source: bool) -> Conjunct {
    let node = topo.node(h);
    let (eth, ip) = if as_source {
        (Field::EthSrc, Field::IpSrc)
    } else {
        (Field::EthDst, Field::IpDst)
    };
    let mut c = Conjunct::top();
    if let Some(mac) = node.mac {
        c = c.with(eth, FieldSet::single(mac)).expect("fresh field");
    }
    if let Some(addr) = node.ip {
        c = c.with(ip, FieldSet::single(addr)).expect("fresh field");
    }
    c
}

/// Host pairs `(src, dst)` that some packet matching the statement travels
/// between. The synthesized catch-all may connect any pair.
pub fn statement_pairs(policy: &Policy, stmt: &Statement, topo: &Topology) -> Vec<(NodeId, NodeId)> {
    let hosts: Vec<NodeId> = topo.hosts().collect();
    let all = || {
        hosts
            .iter()
            .flat_map(|&s| hosts.iter().filter(move |&&d| d != s).map(move |&d| (s, d)))
            .collect::<Vec<_>>()
    };
    if is_synthesized_catch_all(policy, stmt) {
        return all();
    }
    let srcs: Vec<Conjunct> = hosts.iter().map(|&h| host_conjunct(topo, h, true)).collect();
    let dsts: Vec<Conjunct> = hosts.iter().map(|&h| host_conjunct(topo, h, false)).collect();
    let mut pairs = BTreeSet::new();
    for conj in to_dnf(&stmt.predicate).conjuncts() {
        let from: Vec<(usize, Conjunct)> = srcs
            .iter()
            .enumerate()
            .filter_map(|(i, s)| conj.intersect(s).map(|c| (i, c)))
            .collect();
        for (i, c) in from {
            for (j, d) in dsts.iter().enumerate() {
                if i != j && c.intersect(d).is_some() {
                    pairs.insert((hosts[i], hosts[j]));
                }
            }
        }
    }
    pairs.into_iter().collect()
}

/// The switch or middlebox a host sends through: its lowest-id non-host
/// neighbour.
pub fn attachment(topo: &Topology, h: NodeId) -> Option<NodeId> {
    topo.neighbors(h)
        .iter()
        .map(|(n, _)| *n)
        .find(|n| !topo.node(*n).is_host())
}

fn reads(nfa: &Nfa, q: usize, loc: NodeId) -> bool {
    nfa.incoming(q).is_some_and(|l| l.symbols.contains(loc))
}

/// Shortest run reading `host` one or more times from each of `from`,
/// returned for every reachable state.
fn host_runs(nfa: &Nfa, from: &[usize], host: NodeId) -> BTreeMap<usize, Vec<usize>> {
    let mut runs: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for &q in from {
        for r in nfa.step(q, host) {
            if !runs.contains_key(&r) {
                runs.insert(r, vec![r]);
                queue.push_back(r);
            }
        }
    }
    while let Some(q) = queue.pop_front() {
        let run = runs[&q].clone();
        for r in nfa.step(q, host) {
            if !runs.contains_key(&r) {
                let mut longer = run.clone();
                longer.push(r);
                runs.insert(r, longer);
                queue.push_back(r);
            }
        }
    }
    runs
}

/// Shortest accepting run reading `host` one or more times after `q`.
fn finish_at(nfa: &Nfa, q: usize, host: NodeId) -> Option<Vec<usize>> {
    host_runs(nfa, &[q], host)
        .into_values()
        .filter(|run| nfa.is_accepting(*run.last().expect("runs are nonempty")))
        .min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))
}

fn predecessors(nfa: &Nfa) -> Vec<Vec<usize>> {
    let mut pred = vec![Vec::new(); nfa.num_states()];
    for q in 0..nfa.num_states() {
        if q == nfa.start() {
            continue;
        }
        for &r in nfa.successors(q) {
            pred[r].push(q);
        }
    }
    for p in &mut pred {
        p.sort_unstable();
        p.dedup();
    }
    pred
}

fn build_tree(
    nfa: &Nfa,
    pred: &[Vec<usize>],
    topo: &Topology,
    sink: NodeId,
    class: usize,
    targets: BTreeSet<usize>,
    hosts: Vec<NodeId>,
) -> SinkTree {
    let mut dist = BTreeMap::new();
    let mut next = BTreeMap::new();
    let mut queue = VecDeque::new();
    for &q in &targets {
        dist.insert((sink, q), 0);
        queue.push_back((sink, q));
    }
    while let Some((v, q2)) = queue.pop_front() {
        let d = dist[&(v, q2)];
        let mut froms: Vec<NodeId> = topo
            .neighbors(v)
            .iter()
            .map(|(u, _)| *u)
            .filter(|u| !topo.node(*u).is_host())
            .collect();
        froms.push(v);
        froms.sort_unstable();
        for u in froms {
            for &q in &pred[q2] {
                if reads(nfa, q, u) && !dist.contains_key(&(u, q)) {
                    dist.insert((u, q), d + 1);
                    next.insert((u, q), (v, q2));
                    queue.push_back((u, q));
                }
            }
        }
    }
    SinkTree {
        sink,
        class,
        hosts,
        targets,
        dist,
        next,
    }
}

fn functions_of(nfa: &Nfa, states: &[usize]) -> Vec<Option<String>> {
    states
        .iter()
        .map(|q| nfa.incoming(*q).and_then(|l| l.function.clone()))
        .collect()
}

/// Computes sink trees and per-pair routes for every statement whose local
/// guarantee is absent or zero.
pub fn build_sink_trees(
    policy: &Policy,
    topo: &Topology,
    guarantees: &BTreeMap<String, Rate>,
) -> Result<BestEffortPlan, BestEffortError> {
    let mut classes: Vec<PathClass> = Vec::new();
    let mut stmt_pairs: Vec<(String, usize, Vec<(NodeId, NodeId)>)> = Vec::new();
    for stmt in &policy.statements {
        if guarantees.get(&stmt.id).is_some_and(|g| *g > Rate::ZERO) {
            continue;
        }
        let class = match classes.iter().position(|c| c.path == stmt.path) {
            Some(i) => i,
            None => {
                let nfa = statement_automaton(stmt, topo).map_err(|e| match e {
                    crate::provision::ProvisionError::Automata { statement, source } => {
                        BestEffortError::Automata { statement, source }
                    }
                    other => unreachable!("compiling a path only fails in the automaton: {other}"),
                })?;
                classes.push(PathClass {
                    path: stmt.path.clone(),
                    nfa,
                    statements: Vec::new(),
                });
                classes.len() - 1
            }
        };
        classes[class].statements.push(stmt.id.clone());
        stmt_pairs.push((stmt.id.clone(), class, statement_pairs(policy, stmt, topo)));
    }

    // Group destinations by (egress, class, target states).
    let mut groups: BTreeMap<(NodeId, usize, BTreeSet<usize>), BTreeSet<NodeId>> = BTreeMap::new();
    let mut dest_key: BTreeMap<(usize, NodeId), Option<(NodeId, BTreeSet<usize>)>> = BTreeMap::new();
    for (_, class, pairs) in &stmt_pairs {
        for &(_, d) in pairs {
            dest_key.entry((*class, d)).or_insert_with(|| {
                let nfa = &classes[*class].nfa;
                let egress = attachment(topo, d)?;
                let targets: BTreeSet<usize> = (0..nfa.num_states())
                    .filter(|&q| q != nfa.start() && reads(nfa, q, egress) && finish_at(nfa, q, d).is_some())
                    .collect();
                if targets.is_empty() {
                    return None;
                }
                groups
                    .entry((egress, *class, targets.clone()))
                    .or_default()
                    .insert(d);
                Some((egress, targets))
            });
        }
    }
    let preds: Vec<Vec<Vec<usize>>> = classes.iter().map(|c| predecessors(&c.nfa)).collect();
    let mut tree_index = BTreeMap::new();
    let mut trees = Vec::with_capacity(groups.len());
    for ((sink, class, targets), hosts) in groups {
        tree_index.insert((sink, class, targets.clone()), trees.len());
        let nfa = &classes[class].nfa;
        trees.push(build_tree(nfa, &preds[class], topo, sink, class, targets, hosts.into_iter().collect()));
    }

    let mut routes = Vec::new();
    let mut unreachable = Vec::new();
    for (statement, class, pairs) in &stmt_pairs {
        let nfa = &classes[*class].nfa;
        let mut starts: BTreeMap<NodeId, BTreeMap<usize, Vec<usize>>> = BTreeMap::new();
        for &(s, d) in pairs {
            let route = (|| {
                let (egress, targets) = dest_key[&(*class, d)].clone()?;
                let t = tree_index[&(egress, *class, targets)];
                let tree = &trees[t];
                let ingress = attachment(topo, s)?;
                let runs = starts
                    .entry(s)
                    .or_insert_with(|| host_runs(nfa, &[nfa.start()], s));
                let mut best: Option<(usize, usize, Vec<usize>)> = None;
                for (&q, run) in runs.iter() {
                    for q1 in nfa.step(q, ingress) {
                        if let Some(&dd) = tree.dist.get(&(ingress, q1)) {
                            let cand = (run.len() + dd, q1, run.clone());
                            if best.as_ref().is_none_or(|b| cand < *b) {
                                best = Some(cand);
                            }
                        }
                    }
                }
                let (_, q1, src_run) = best?;
                let walk = tree.walk_from((ingress, q1));
                let (_, q_end) = *walk.last().expect("walks are nonempty");
                let dst_run = finish_at(nfa, q_end, d)?;
                let mut locations = vec![s; src_run.len()];
                let mut states = src_run.clone();
                for &(l, q) in &walk {
                    locations.push(l);
                    states.push(q);
                }
                locations.extend(std::iter::repeat_n(d, dst_run.len()));
                states.extend(&dst_run);
                let functions = functions_of(nfa, &states)
                    .into_iter()
                    .enumerate()
                    .filter_map(|(i, f)| f.map(|f| (i, f)))
                    .collect();
                Some(BestEffortRoute {
                    statement: statement.clone(),
                    src: s,
                    dst: d,
                    tree: t,
                    entry: (ingress, q1),
                    src_steps: functions_of(nfa, &src_run),
                    dst_steps: functions_of(nfa, &dst_run),
                    path: PhysicalPath { locations, functions },
                })
            })();
            match route {
                Some(r) => routes.push(r),
                None => unreachable.push(Unreachable {
                    statement: statement.clone(),
                    src: s,
                    dst: d,
                }),
            }
        }
    }
    Ok(BestEffortPlan {
        classes,
        trees,
        routes,
        unreachable,
    })
}
