//! Packet replay and a fluid bandwidth simulator over compiled programs.
//!
//! Rates are exact rationals in bytes per second. Each epoch, every flow
//! first receives its guarantee (capped by its offered rate), then the water
//! level of all unsatisfied flows rises together; a flow stops rising when
//! its offer is met or a link or rate limit on its path saturates. A flow
//! whose guarantee is above the water level keeps its guarantee.

mod fill;
mod replay;

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Deserialize;
use thiserror::Error;

use crate::besteffort::host_conjunct;
use crate::codegen::Programs;
use crate::policy::Policy;
use crate::predicate::{to_dnf, Conjunct, Packet};
use crate::rate::Rate;
use crate::topology::{NodeId, Topology};

pub use fill::{water_fill, Resource};
pub use replay::{nfa_accepts_trace, replay, ReplayError, Trace, HOP_LIMIT};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("flow `{flow}` names unknown statement `{statement}`")]
    UnknownStatement { flow: String, statement: String },
    #[error("flow `{flow}` names unknown host `{host}`")]
    UnknownHost { flow: String, host: String },
    #[error("no packet of statement `{statement}` travels from `{src}` to `{dst}`")]
    NoPacket { statement: String, src: String, dst: String },
    #[error("flow `{flow}`: {source}")]
    Replay { flow: String, source: ReplayError },
    #[error("flow `{flow}` reaches `{reached}` instead of its destination")]
    Misdelivered { flow: String, reached: String },
    #[error("demands line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// One flow's offered load over the epochs `start..stop`.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct FlowDemand {
    pub id: String,
    pub statement: String,
    pub src: String,
    pub dst: String,
    pub offered: Rate,
    pub start: u64,
    pub stop: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    GuaranteeUnmet,
    CapExceeded,
    LinkOverloaded,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub epoch: u64,
    pub kind: ViolationKind,
    /// Flow id, host name or link endpoints.
    pub subject: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpochResult {
    pub epoch: u64,
    pub rates: BTreeMap<String, BigRational>,
    /// Load on each link, indexed by link id.
    pub link_load: Vec<BigRational>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimResult {
    pub epochs: Vec<EpochResult>,
    pub violations: Vec<Violation>,
    /// Flows dropped by a host filter; they never get bandwidth.
    pub dropped: Vec<String>,
}

impl SimResult {
    pub fn rate(&self, epoch: u64, flow: &str) -> Option<&BigRational> {
        self.epochs.iter().find(|e| e.epoch == epoch)?.rates.get(flow)
    }

    /// `epoch,flow,rate_exact,rate_bytes_per_s` rows with a header. The exact
    /// rate is a reduced fraction or an integer.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "flow", "rate_exact", "rate_bytes_per_s"]).expect("in-memory write");
        for e in &self.epochs {
            for (flow, r) in &e.rates {
                let approx = format!("{:.3}", r.to_f64().unwrap_or(f64::NAN));
                w.write_record([&e.epoch.to_string(), flow, &r.to_string(), &approx]).expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}

/// Reads demands from CSV with the header `id,statement,src,dst,offered,start,stop`.
/// The offered rate accepts rate literals such as `90MB/s` or plain bytes per
/// second. Lines starting with `#` are skipped.
pub fn parse_demands(text: &str) -> Result<Vec<FlowDemand>, SimError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e: csv::Error| SimError::Csv {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })
        })
        .collect()
}

/// A packet of `statement` sent from `src` to `dst`, if one exists.
pub fn representative_packet(policy: &Policy, topo: &Topology, statement: &str, src: NodeId, dst: NodeId) -> Option<Packet> {
    let stmt = policy.statement(statement)?;
    let ends = host_conjunct(topo, src, true).intersect(&host_conjunct(topo, dst, false))?;
    to_dnf(&stmt.predicate)
        .conjuncts()
        .iter()
        .find_map(|c: &Conjunct| c.intersect(&ends))
        .map(|c| c.witness())
}

struct Routed {
    demand: FlowDemand,
    links: Vec<usize>,
    queues: Vec<(NodeId, u32, u32)>,
    limits: Vec<(NodeId, usize, Rate)>,
}

fn int(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Runs every epoch from 0 up to the last flow's stop time.
pub fn simulate(
    programs: &Programs,
    policy: &Policy,
    topo: &Topology,
    demands: &[FlowDemand],
) -> Result<SimResult, SimError> {
    let mut routed = Vec::new();
    let mut dropped = Vec::new();
    for d in demands {
        if policy.statement(&d.statement).is_none() {
            return Err(SimError::UnknownStatement {
                flow: d.id.clone(),
                statement: d.statement.clone(),
            });
        }
        let host = |h: &str| {
            topo.id_of(h).filter(|&n| topo.node(n).is_host()).ok_or_else(|| SimError::UnknownHost {
                flow: d.id.clone(),
                host: h.to_string(),
            })
        };
        let (src, dst) = (host(&d.src)?, host(&d.dst)?);
        let packet = representative_packet(policy, topo, &d.statement, src, dst).ok_or_else(|| SimError::NoPacket {
            statement: d.statement.clone(),
            src: d.src.clone(),
            dst: d.dst.clone(),
        })?;
        match replay(programs, topo, src, &packet) {
            Ok(trace) => {
                if trace.delivered != dst {
                    return Err(SimError::Misdelivered {
                        flow: d.id.clone(),
                        reached: topo.name(trace.delivered).to_string(),
                    });
                }
                routed.push(Routed {
                    demand: d.clone(),
                    links: trace.links,
                    queues: trace.queues,
                    limits: trace.rate_limits,
                });
            }
            Err(ReplayError::Dropped { .. }) => dropped.push(d.id.clone()),
            Err(source) => {
                return Err(SimError::Replay {
                    flow: d.id.clone(),
                    source,
                })
            }
        }
    }

    let queue_rate: BTreeMap<(NodeId, u32, u32), Rate> = programs
        .devices
        .values()
        .flat_map(|p| {
            let dev = topo.id_of(&p.device).expect("programs match the topology");
            p.queues.iter().map(move |q| ((dev, q.port, q.queue), q.min_rate))
        })
        .collect();
    // Rate-limit filters become extra resources after the physical links.
    let mut limit_index: BTreeMap<(NodeId, usize), (usize, Rate)> = BTreeMap::new();
    for r in &routed {
        for &(h, i, rate) in &r.limits {
            let next = topo.links().len() + limit_index.len();
            limit_index.entry((h, i)).or_insert((next, rate));
        }
    }
    let mut capacities: Vec<BigRational> = topo.links().iter().map(|l| int(l.capacity.0)).collect();
    capacities.resize(topo.links().len() + limit_index.len(), BigRational::zero());
    for &(idx, rate) in limit_index.values() {
        capacities[idx] = int(rate.0);
    }

    let horizon = demands.iter().map(|d| d.stop).max().unwrap_or(0);
    let mut epochs = Vec::new();
    let mut violations = Vec::new();
    for epoch in 0..horizon {
        let active: Vec<&Routed> = routed
            .iter()
            .filter(|r| r.demand.start <= epoch && epoch < r.demand.stop)
            .collect();
        // A queue's minimum rate is shared by the active flows using it.
        let mut by_queue: BTreeMap<(NodeId, u32, u32), Vec<usize>> = BTreeMap::new();
        for (i, r) in active.iter().enumerate() {
            for q in &r.queues {
                by_queue.entry(*q).or_default().push(i);
            }
        }
        let mut guarantee: Vec<Option<BigRational>> = vec![None; active.len()];
        for (q, users) in &by_queue {
            let pool = int(queue_rate.get(q).map_or(0, |r| r.0));
            let offers: Vec<BigRational> = users.iter().map(|&i| int(active[i].demand.offered.0)).collect();
            let shares = water_fill(&[Resource { capacity: pool, users: (0..users.len()).collect() }], &offers, &vec![BigRational::zero(); users.len()]);
            for (k, &i) in users.iter().enumerate() {
                let s = shares[k].clone();
                guarantee[i] = Some(match guarantee[i].take() {
                    Some(g) => g.min(s),
                    None => s,
                });
            }
        }
        let offers: Vec<BigRational> = active.iter().map(|r| int(r.demand.offered.0)).collect();
        let floors: Vec<BigRational> = guarantee
            .iter()
            .map(|g| g.clone().unwrap_or_else(BigRational::zero))
            .collect();
        let mut users: Vec<Vec<usize>> = vec![Vec::new(); capacities.len()];
        for (i, r) in active.iter().enumerate() {
            let mut res: Vec<usize> = r.links.clone();
            res.extend(r.limits.iter().map(|(h, f, _)| limit_index[&(*h, *f)].0));
            res.sort_unstable();
            res.dedup();
            for l in res {
                users[l].push(i);
            }
        }
        let resources: Vec<Resource> = capacities
            .iter()
            .zip(users)
            .map(|(c, u)| Resource { capacity: c.clone(), users: u })
            .collect();
        let rates = water_fill(&resources, &offers, &floors);

        let mut link_load = vec![BigRational::zero(); topo.links().len()];
        for (i, r) in active.iter().enumerate() {
            for &l in &r.links {
                link_load[l] += &rates[i];
            }
        }
        for (l, load) in link_load.iter().enumerate() {
            if *load > capacities[l] {
                let link = topo.link(l);
                violations.push(Violation {
                    epoch,
                    kind: ViolationKind::LinkOverloaded,
                    subject: format!("{}-{}", topo.name(link.u), topo.name(link.v)),
                });
            }
        }
        for (&(h, _), &(idx, _)) in &limit_index {
            let used: BigRational = resources[idx].users.iter().map(|&i| rates[i].clone()).sum();
            if used > capacities[idx] {
                violations.push(Violation {
                    epoch,
                    kind: ViolationKind::CapExceeded,
                    subject: topo.name(h).to_string(),
                });
            }
        }
        for (i, g) in guarantee.iter().enumerate() {
            if let Some(g) = g {
                if rates[i] < *g {
                    violations.push(Violation {
                        epoch,
                        kind: ViolationKind::GuaranteeUnmet,
                        subject: active[i].demand.id.clone(),
                    });
                }
            }
        }
        epochs.push(EpochResult {
            epoch,
            rates: active.iter().zip(rates).map(|(r, x)| (r.demand.id.clone(), x)).collect(),
            link_load,
        });
    }
    Ok(SimResult {
        epochs,
        violations,
        dropped,
    })
}
