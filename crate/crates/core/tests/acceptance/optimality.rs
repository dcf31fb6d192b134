//! Solver optimality against exhaustive enumeration of path combinations.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use provlang::policy::{Field, Formula, PathExpr, Policy, Predicate, Statement, Term};
use provlang::provision::{provision_guaranteed, Objective, ProvisionError, SolveStatus};
use provlang::topology::{LinkId, NodeId, Topology, TopologyBuilder};
use provlang::Rate;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::common::oracles::Re;
use crate::{check, rng, within, Outcome};

const OBJECTIVES: [Objective; 3] = [Objective::WeightedShortest, Objective::MinMaxRatio, Objective::MinMaxReserved];
const MAX_COMBINATIONS: usize = 10_000;

struct Instance {
    topo: Topology,
    policy: Policy,
    guarantees: BTreeMap<String, Rate>,
    /// Per statement, the distinct link multisets of its accepted walks.
    candidates: Vec<Vec<Vec<LinkId>>>,
}

fn random_topology(r: &mut ChaCha8Rng) -> Topology {
    let hosts = r.random_range(2..=3);
    let switches = r.random_range(3..=8 - hosts);
    let caps = [150, 200, 300, 400];
    let mut edges = BTreeSet::new();
    for s in 1..switches {
        edges.insert((r.random_range(0..s), s));
    }
    for _ in 0..r.random_range(0..=6) {
        let (a, c) = (r.random_range(0..switches), r.random_range(0..switches));
        if a < c {
            edges.insert((a, c));
        }
    }
    let mut b = TopologyBuilder::new();
    for s in 0..switches {
        b = b.switch(&format!("s{s}"));
    }
    for (a, c) in edges {
        let cap = Rate::mbps(caps[r.random_range(0..caps.len())]);
        b = b.link(&format!("s{a}"), &format!("s{c}"), cap);
    }
    for h in 0..hosts {
        let cap = Rate::mbps(caps[r.random_range(0..caps.len())]);
        b = b.host(&format!("h{h}")).link(&format!("h{h}"), &format!("s{}", r.random_range(0..switches)), cap);
    }
    b.build().expect("generated topology is valid")
}

fn random_path(r: &mut ChaCha8Rng, switches: &[String], src: &str, dst: &str) -> PathExpr {
    let any = PathExpr::any_path;
    let pick = |r: &mut ChaCha8Rng| PathExpr::sym(switches[r.random_range(0..switches.len())].clone());
    match r.random_range(0..5) {
        0 => any(),
        1 => PathExpr::Seq(vec![any(), pick(r), any()]),
        2 => PathExpr::Seq(vec![any(), pick(r), any(), pick(r), any()]),
        3 => PathExpr::Not(Box::new(PathExpr::Seq(vec![any(), pick(r), any()]))),
        _ => {
            let mut allowed: Vec<PathExpr> = vec![PathExpr::sym(src), PathExpr::sym(dst)];
            allowed.extend(switches.iter().filter(|_| r.random_bool(0.7)).map(|s| PathExpr::sym(s.clone())));
            PathExpr::Star(Box::new(PathExpr::Alt(allowed)))
        }
    }
}

/// Link multisets of every walk from `src` to `dst` accepted by `re` that
/// avoids other hosts. A walk that revisits the same (location, residual
/// language) pair contains a removable loop that only adds reservations, so
/// such walks are skipped without losing any optimum.
fn candidate_walks(topo: &Topology, src: NodeId, dst: NodeId, re: &Re) -> Vec<Vec<LinkId>> {
    struct Search<'a> {
        topo: &'a Topology,
        src: NodeId,
        dst: NodeId,
        on_path: HashSet<(NodeId, Re)>,
        links: Vec<LinkId>,
        found: BTreeSet<Vec<LinkId>>,
    }
    impl Search<'_> {
        fn visit(&mut self, at: NodeId, residual: Re) {
            if at == self.dst && residual.nullable() {
                let mut key = self.links.clone();
                key.sort_unstable();
                self.found.insert(key);
            }
            let mut moves: Vec<(NodeId, Option<LinkId>)> = vec![(at, None)];
            moves.extend(self.topo.neighbors(at).iter().map(|&(v, l)| (v, Some(l))));
            for (v, link) in moves {
                if self.topo.node(v).is_host() && v != self.src && v != self.dst {
                    continue;
                }
                let next = residual.derive(self.topo.name(v));
                if next == Re::Empty || self.on_path.contains(&(v, next.clone())) {
                    continue;
                }
                self.on_path.insert((v, next.clone()));
                self.links.extend(link);
                self.visit(v, next.clone());
                if link.is_some() {
                    self.links.pop();
                }
                self.on_path.remove(&(v, next));
            }
        }
    }
    let first = re.derive(topo.name(src));
    if first == Re::Empty {
        return Vec::new();
    }
    let mut s = Search {
        topo,
        src,
        dst,
        on_path: HashSet::from([(src, first.clone())]),
        links: Vec::new(),
        found: BTreeSet::new(),
    };
    s.visit(src, first);
    s.found.into_iter().collect()
}

fn random_instance(r: &mut ChaCha8Rng) -> Option<Instance> {
    let topo = random_topology(r);
    let hosts: Vec<NodeId> = topo.hosts().collect();
    let switches: Vec<String> = topo.switches().map(|s| topo.name(s).to_string()).collect();
    let mut statements = Vec::new();
    let mut guarantees = BTreeMap::new();
    let mut formula = Formula::True;
    let mut candidates = Vec::new();
    for i in 0..r.random_range(1..=4) {
        let src = hosts[r.random_range(0..hosts.len())];
        let dst = loop {
            let d = hosts[r.random_range(0..hosts.len())];
            if d != src {
                break d;
            }
        };
        let id = format!("t{i}");
        let mac = |n: NodeId| topo.node(n).mac.expect("hosts have addresses");
        let predicate = Predicate::all([
            Predicate::eq(Field::EthSrc, mac(src)),
            Predicate::eq(Field::EthDst, mac(dst)),
            Predicate::eq(Field::TcpDst, 1000 + i),
        ]);
        let path = random_path(r, &switches, topo.name(src), topo.name(dst));
        let walks = candidate_walks(&topo, src, dst, &Re::from_path(&path));
        if walks.is_empty() {
            return None;
        }
        candidates.push(walks);
        let rate = Rate::mbps([25, 50, 75, 100][r.random_range(0..4)]);
        guarantees.insert(id.clone(), rate);
        formula = formula.and(Formula::Min(Term::of(&[&id]), rate));
        statements.push(Statement::new(id, predicate, path));
    }
    let combinations = candidates.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.len()));
    if combinations.is_none_or(|c| c > MAX_COMBINATIONS) {
        return None;
    }
    Some(Instance {
        topo,
        policy: Policy { statements, formula },
        guarantees,
        candidates,
    })
}

/// Objective of one link multiset per statement, or `None` if a link is
/// overloaded. Both directions of a link share its capacity.
fn evaluate(inst: &Instance, choice: &[&Vec<LinkId>], objective: Objective) -> Option<BigRational> {
    let links = inst.topo.links();
    let mut reserved = vec![0u128; links.len()];
    let mut weighted = 0u128;
    for (walk, stmt) in choice.iter().zip(&inst.policy.statements) {
        let g = u128::from(inst.guarantees[&stmt.id].0);
        for &l in walk.iter() {
            reserved[l] += g;
            weighted += g;
        }
    }
    if reserved.iter().zip(links).any(|(r, l)| *r > u128::from(l.capacity.0)) {
        return None;
    }
    let int = |v: u128| BigRational::from_integer(BigInt::from(v));
    Some(match objective {
        Objective::WeightedShortest => int(weighted),
        Objective::MinMaxReserved => int(reserved.iter().copied().max().unwrap_or(0)),
        Objective::MinMaxRatio => reserved
            .iter()
            .zip(links)
            .map(|(r, l)| BigRational::new(BigInt::from(*r), BigInt::from(l.capacity.0)))
            .max()
            .unwrap_or_else(|| int(0)),
    })
}

fn brute_force(inst: &Instance, objective: Objective) -> Option<BigRational> {
    let mut best: Option<BigRational> = None;
    let mut index = vec![0usize; inst.candidates.len()];
    loop {
        let choice: Vec<&Vec<LinkId>> = index.iter().zip(&inst.candidates).map(|(&i, c)| &c[i]).collect();
        if let Some(v) = evaluate(inst, &choice, objective) {
            if best.as_ref().is_none_or(|b| v < *b) {
                best = Some(v);
            }
        }
        let mut k = 0;
        loop {
            if k == index.len() {
                return best;
            }
            index[k] += 1;
            if index[k] < inst.candidates[k].len() {
                break;
            }
            index[k] = 0;
            k += 1;
        }
    }
}

fn route_links(inst: &Instance, locations: &[NodeId]) -> Vec<LinkId> {
    let mut links: Vec<LinkId> = locations
        .windows(2)
        .filter(|w| w[0] != w[1])
        .map(|w| inst.topo.link_between(w[0], w[1]).expect("routes follow links"))
        .collect();
    links.sort_unstable();
    links
}

pub fn solver_matches_brute_force() -> Outcome {
    let start = Instant::now();
    let mut r = rng(3);
    let (mut instances, mut infeasible, mut combos) = (0, 0, 0usize);
    while instances < 120 {
        let Some(inst) = random_instance(&mut r) else { continue };
        combos += inst.candidates.iter().map(Vec::len).product::<usize>();
        for objective in OBJECTIVES {
            let want = brute_force(&inst, objective);
            let got = provision_guaranteed(&inst.policy, &inst.topo, &inst.guarantees, objective, Duration::from_secs(30));
            match (got, want) {
                (Ok(sol), Some(best)) => {
                    check!(sol.status == SolveStatus::Optimal, "instance {instances}: solver timed out");
                    check!(
                        sol.value == best,
                        "instance {instances} {}: solver {} vs brute force {best}",
                        objective.name(),
                        sol.value
                    );
                    let chosen: Vec<Vec<LinkId>> = inst
                        .policy
                        .statements
                        .iter()
                        .map(|s| route_links(&inst, &sol.route(&s.id).expect("every statement is routed").path.locations))
                        .collect();
                    let refs: Vec<&Vec<LinkId>> = chosen.iter().collect();
                    check!(
                        evaluate(&inst, &refs, objective).as_ref() == Some(&best),
                        "instance {instances} {}: reported routes do not achieve {best}",
                        objective.name()
                    );
                }
                (Err(ProvisionError::Infeasible), None) => infeasible += 1,
                (got, want) => {
                    return Err(format!(
                        "instance {instances} {}: solver {:?} vs brute force {want:?}",
                        objective.name(),
                        got.map(|s| s.value)
                    ))
                }
            }
        }
        instances += 1;
    }
    within(start, Duration::from_secs(120), "120 instances")?;
    Ok(format!(
        "{instances} instances x 3 objectives, {infeasible} infeasible agreed, {combos} combinations"
    ))
}
