use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use super::*;
use crate::besteffort::{attachment, host_conjunct, BestEffortPlan, SinkTree, TreeVertex};
use crate::policy::{is_synthesized_catch_all, Field, Policy, Predicate, Statement};
use crate::predicate::{implies, to_dnf, Dnf};
use crate::provision::Route;
use crate::topology::{NodeId, Topology};

/// Priority of classification rules for the synthesized catch-all.
pub const CATCH_ALL_PRIORITY: u32 = 1;
/// Base priority of classification rules; the number of constrained header
/// fields is added.
pub const CLASSIFY_PRIORITY: u32 = 100;
/// Priority of rules matching on a tag.
pub const TAGGED_PRIORITY: u32 = 2000;

#[derive(Default)]
struct Builder {
    rules: BTreeMap<NodeId, BTreeMap<(Reverse<u32>, FlowMatch), Vec<FlowAction>>>,
    filters: BTreeMap<NodeId, Vec<HostFilter>>,
    drops: BTreeMap<NodeId, Vec<HostFilter>>,
    limits: BTreeMap<NodeId, Vec<HostFilter>>,
    queues: BTreeMap<(NodeId, u32), BTreeMap<String, (u32, Rate)>>,
    next_tag: u32,
    tags_needed: usize,
}

impl Builder {
    fn rule(&mut self, at: NodeId, priority: u32, matches: FlowMatch, actions: Vec<FlowAction>) {
        self.rules
            .entry(at)
            .or_default()
            .insert((Reverse(priority), matches), actions);
    }

    fn tag(&mut self) -> u16 {
        self.tags_needed += 1;
        let t = self.next_tag;
        self.next_tag += 1;
        u16::try_from(t.min(u32::from(LAST_TAG))).expect("clamped to the tag range")
    }

    /// Queue id on `(device, port)` reserved for `statement`, adding `rate`
    /// to its minimum.
    fn queue(&mut self, device: NodeId, port: u32, statement: &str, rate: Rate) -> u32 {
        let slot = self.queues.entry((device, port)).or_default();
        let fresh = slot.len() as u32 + 1;
        let entry = slot.entry(statement.to_string()).or_insert((fresh, Rate::ZERO));
        entry.1 = Rate(entry.1 .0 + rate.0);
        entry.0
    }
}

/// Header fields that identify a host on the wire: its MAC address, or its
/// IP address when it has no MAC.
fn host_id(topo: &Topology, h: NodeId, as_source: bool) -> Conjunct {
    let full = host_conjunct(topo, h, as_source);
    let eth = if as_source { Field::EthSrc } else { Field::EthDst };
    match full.get(eth) {
        Some(set) => Conjunct::atom(eth, set.clone()).expect("host addresses are satisfiable"),
        None => full,
    }
}

/// `stmt`'s predicate restricted to packets from or to host `h`.
fn restrict(stmt: &Statement, topo: &Topology, h: NodeId, as_source: bool) -> Predicate {
    let id = host_id(topo, h, as_source).to_predicate();
    if implies(&stmt.predicate, &id) {
        stmt.predicate.clone()
    } else {
        stmt.predicate.clone().and(id)
    }
}

fn header_matches(policy: &Policy, stmt: &Statement, dnf: &Dnf, topo: &Topology, s: NodeId, d: NodeId) -> Vec<(u32, Conjunct)> {
    let dst = host_id(topo, d, false);
    if is_synthesized_catch_all(policy, stmt) {
        return vec![(CATCH_ALL_PRIORITY, dst)];
    }
    let src = host_conjunct(topo, s, true);
    dnf.conjuncts()
        .iter()
        .filter(|c| {
            c.intersect(&src)
                .and_then(|c| c.intersect(&host_conjunct(topo, d, false)))
                .is_some()
        })
        .filter_map(|c| c.intersect(&dst))
        .map(|c| (CLASSIFY_PRIORITY + c.constraints().len() as u32, c))
        .collect()
}

fn host_steps(steps: &[Option<String>]) -> Vec<FilterAction> {
    let mut out = Vec::new();
    for (i, f) in steps.iter().enumerate() {
        if i > 0 {
            out.push(FilterAction::Stay);
        }
        if let Some(f) = f {
            out.push(FilterAction::Apply(f.clone()));
        }
    }
    out
}

fn port(topo: &Topology, at: NodeId, towards: NodeId) -> u32 {
    topo.port(at, towards).expect("consecutive path locations are adjacent")
}

fn tree_actions(
    topo: &Topology,
    nfa: &crate::automata::Nfa,
    tree: &SinkTree,
    tags: &BTreeMap<usize, u16>,
    (v, q): TreeVertex,
    tagged: bool,
    deliver: Option<NodeId>,
) -> Vec<FlowAction> {
    let mut acts = Vec::new();
    if let Some(f) = nfa.incoming(q).and_then(|l| l.function.clone()) {
        acts.push(FlowAction::Apply(f));
    }
    match (tree.next.get(&(v, q)), deliver) {
        (Some(&(v2, q2)), _) => {
            acts.push(if tagged { FlowAction::SetTag(tags[&q2]) } else { FlowAction::PushTag(tags[&q2]) });
            acts.push(if v2 == v { FlowAction::Resubmit } else { FlowAction::Output(port(topo, v, v2)) });
        }
        (None, Some(h)) => {
            if tagged {
                acts.push(FlowAction::PopTag);
            }
            acts.push(FlowAction::Output(port(topo, v, h)));
        }
        (None, None) => unreachable!("sink vertices are lowered per host"),
    }
    acts
}

/// Lowers guaranteed routes, best-effort sink trees and per-statement caps
/// into device programs.
pub fn lower(
    policy: &Policy,
    topo: &Topology,
    guaranteed: &[Route],
    plan: &BestEffortPlan,
    caps: &BTreeMap<String, Rate>,
) -> Result<Programs, CodegenError> {
    let mut b = Builder {
        next_tag: u32::from(FIRST_TAG),
        ..Builder::default()
    };
    let dnfs: BTreeMap<&str, Dnf> = policy
        .statements
        .iter()
        .filter(|s| !is_synthesized_catch_all(policy, s))
        .map(|s| (s.id.as_str(), to_dnf(&s.predicate)))
        .collect();
    let empty = Dnf(Vec::new());
    let dnf_of = |id: &str| dnfs.get(id).unwrap_or(&empty);
    let mut tags = TagAssignment::default();

    // Sink trees.
    for tree in &plan.trees {
        let nfa = &plan.classes[tree.class].nfa;
        let map: BTreeMap<usize, u16> = tree.states().into_iter().map(|q| (q, b.tag())).collect();
        let vertex_actions = |vertex, tagged, deliver| tree_actions(topo, nfa, tree, &map, vertex, tagged, deliver);
        for &(v, q) in tree.dist.keys() {
            let base = FlowMatch {
                in_port: None,
                tag: Some(map[&q]),
                header: Conjunct::top(),
            };
            if tree.next.contains_key(&(v, q)) {
                b.rule(v, TAGGED_PRIORITY, base, vertex_actions((v, q), true, None));
            } else {
                for &h in &tree.hosts {
                    let m = FlowMatch {
                        header: host_id(topo, h, false),
                        ..base.clone()
                    };
                    b.rule(v, TAGGED_PRIORITY, m, vertex_actions((v, q), true, Some(h)));
                }
            }
        }
        tags.trees.push(map);
    }

    for route in &plan.routes {
        let tree = &plan.trees[route.tree];
        let nfa = &plan.classes[tree.class].nfa;
        let stmt = policy.statement(&route.statement).expect("routes name policy statements");
        let (s, d) = (route.src, route.dst);
        let (ingress, _) = route.entry;
        let acts = tree_actions(topo, nfa, tree, &tags.trees[route.tree], route.entry, false, Some(d));
        for (prio, header) in header_matches(policy, stmt, dnf_of(&stmt.id), topo, s, d) {
            let m = FlowMatch {
                in_port: Some(port(topo, ingress, s)),
                tag: None,
                header,
            };
            b.rule(ingress, prio, m, acts.clone());
        }
        let out = host_steps(&route.src_steps);
        if !out.is_empty() {
            b.filters.entry(s).or_default().push(HostFilter {
                direction: Direction::Out,
                predicate: restrict(stmt, topo, d, false),
                actions: out,
            });
        }
        let inn = host_steps(&route.dst_steps);
        if !inn.is_empty() {
            b.filters.entry(d).or_default().push(HostFilter {
                direction: Direction::In,
                predicate: restrict(stmt, topo, s, true),
                actions: inn,
            });
        }
    }

    for u in &plan.unreachable {
        let stmt = policy.statement(&u.statement).expect("pairs name policy statements");
        b.drops.entry(u.src).or_default().push(HostFilter {
            direction: Direction::Out,
            predicate: restrict(stmt, topo, u.dst, false),
            actions: vec![FilterAction::Drop],
        });
    }

    // Guaranteed paths.
    for route in guaranteed {
        let stmt = policy.statement(&route.statement).expect("routes name policy statements");
        let locs = &route.path.locations;
        let (s, d) = (route.endpoints.src, route.endpoints.dst);
        let k = locs.iter().take_while(|&&l| l == s).count();
        let m = locs.iter().rev().take_while(|&&l| l == d).count();
        let interior = k..locs.len() - m;
        for &l in &locs[interior.clone()] {
            if topo.node(l).is_host() {
                return Err(CodegenError::PathThroughHost {
                    statement: stmt.id.clone(),
                    host: topo.name(l).to_string(),
                });
            }
        }
        let funcs: BTreeMap<usize, &str> = route.path.functions.iter().map(|(i, f)| (*i, f.as_str())).collect();
        let step = |i: usize| funcs.get(&i).map(|f| f.to_string());
        // The first switch classifies by header, so it needs no tag.
        let pos_tags: Vec<u16> = interior.clone().skip(1).map(|_| b.tag()).collect();
        let tag_at = |i: usize| pos_tags[i - k - 1];
        let position_actions = |b: &mut Builder, i: usize, tagged: bool| -> Result<Vec<FlowAction>, CodegenError> {
            let v = locs[i];
            let mut acts = Vec::new();
            if let Some(f) = step(i) {
                acts.push(FlowAction::Apply(f));
            }
            let next = locs[i + 1];
            if next == v {
                acts.push(if tagged { FlowAction::SetTag(tag_at(i + 1)) } else { FlowAction::PushTag(tag_at(i + 1)) });
                acts.push(FlowAction::Resubmit);
                return Ok(acts);
            }
            if !topo.node(v).queues {
                return Err(CodegenError::NoQueueSupport {
                    device: topo.name(v).to_string(),
                    statement: stmt.id.clone(),
                });
            }
            if interior.contains(&(i + 1)) {
                acts.push(if tagged { FlowAction::SetTag(tag_at(i + 1)) } else { FlowAction::PushTag(tag_at(i + 1)) });
            } else if tagged {
                acts.push(FlowAction::PopTag);
            }
            let p = port(topo, v, next);
            let queue = b.queue(v, p, &stmt.id, route.guarantee);
            acts.push(FlowAction::Enqueue { port: p, queue });
            Ok(acts)
        };
        if !interior.is_empty() {
            let first = locs[k];
            let acts = position_actions(&mut b, k, false)?;
            for (prio, header) in header_matches(policy, stmt, dnf_of(&stmt.id), topo, s, d) {
                let m = FlowMatch {
                    in_port: Some(port(topo, first, s)),
                    tag: None,
                    header,
                };
                b.rule(first, prio, m, acts.clone());
            }
            for i in interior.clone().skip(1) {
                let acts = position_actions(&mut b, i, true)?;
                let m = FlowMatch {
                    in_port: None,
                    tag: Some(tag_at(i)),
                    header: Conjunct::top(),
                };
                b.rule(locs[i], TAGGED_PRIORITY, m, acts);
            }
        }
        let mut out = host_steps(&(0..k).map(step).collect::<Vec<_>>());
        if attachment(topo, s) != Some(locs[k]) {
            out.push(FilterAction::Output(port(topo, s, locs[k])));
        }
        if !out.is_empty() {
            b.filters.entry(s).or_default().push(HostFilter {
                direction: Direction::Out,
                predicate: stmt.predicate.clone(),
                actions: out,
            });
        }
        let inn = host_steps(&(locs.len() - m..locs.len()).map(step).collect::<Vec<_>>());
        if !inn.is_empty() {
            b.filters.entry(d).or_default().push(HostFilter {
                direction: Direction::In,
                predicate: stmt.predicate.clone(),
                actions: inn,
            });
        }
        tags.guaranteed.insert(stmt.id.clone(), pos_tags);
    }

    if b.tags_needed > usize::from(LAST_TAG - FIRST_TAG + 1) {
        return Err(CodegenError::TagSpaceExhausted { needed: b.tags_needed });
    }

    // Caps, split over the hosts the statement's traffic leaves from.
    for (id, cap) in caps {
        let Some(stmt) = policy.statement(id) else { continue };
        let mut sources: BTreeSet<NodeId> = guaranteed
            .iter()
            .filter(|r| &r.statement == id)
            .map(|r| r.endpoints.src)
            .collect();
        sources.extend(plan.routes.iter().filter(|r| &r.statement == id).map(|r| r.src));
        let n = sources.len() as u64;
        for (i, s) in sources.into_iter().enumerate() {
            let share = cap.0 / n + if i == 0 { cap.0 % n } else { 0 };
            b.limits.entry(s).or_default().push(HostFilter {
                direction: Direction::Out,
                predicate: stmt.predicate.clone(),
                actions: vec![FilterAction::RateLimit(Rate(share))],
            });
        }
    }

    let mut devices = BTreeMap::new();
    for (id, node) in topo.nodes().iter().enumerate() {
        let rules = b
            .rules
            .remove(&id)
            .unwrap_or_default()
            .into_iter()
            .map(|((Reverse(priority), matches), actions)| FlowRule { priority, matches, actions })
            .collect();
        let mut filters = b.drops.remove(&id).unwrap_or_default();
        filters.extend(b.filters.remove(&id).unwrap_or_default());
        filters.extend(b.limits.remove(&id).unwrap_or_default());
        let mut queues = Vec::new();
        for ((_, p), slot) in b.queues.range((id, 0)..=(id, u32::MAX)) {
            for (statement, (queue, min_rate)) in slot {
                queues.push(QueueConfig {
                    port: *p,
                    queue: *queue,
                    min_rate: *min_rate,
                    statement: statement.clone(),
                });
            }
        }
        queues.sort();
        devices.insert(
            node.id.clone(),
            DeviceProgram {
                device: node.id.clone(),
                kind: node.kind,
                rules,
                filters,
                queues,
            },
        );
    }
    Ok(Programs { devices, tags })
}
