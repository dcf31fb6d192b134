//! A tree of negotiators run as a deterministic discrete-event simulation.
//!
//! Every time step has two passes. Going up, each node proposes the total
//! demand below it to its parent. Going down, each parent divides its own
//! allocation among its children with the tree's scheme, verifies that the
//! shares fit, and answers each proposal with a grant (the full amount) or a
//! deny carrying the smaller amount it can give. Leaves then divide their
//! allocation among their flows.

use std::collections::BTreeMap;

use serde::Deserialize;

use super::adapt::{step_aimd, step_mmfs_bytes, AimdParams};
use super::NegotiatorError;
use crate::rate::Rate;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Aimd(AimdParams),
    Mmfs,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegotiatorNode {
    pub id: String,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Flows governed directly by this node.
    pub flows: Vec<String>,
    /// Bandwidth this node may hand out, in bytes per second.
    pub allocation: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum MessageKind {
    Propose,
    Verify,
    Grant,
    Deny,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub time: u64,
    pub kind: MessageKind,
    pub from: String,
    pub to: String,
    pub amount: u64,
}

/// One row of a demand trace: from `time` on, `flow` demands `demand`.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct DemandSample {
    pub time: u64,
    pub flow: String,
    pub demand: Rate,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllocationRecord {
    pub time: u64,
    pub flow: String,
    pub allocation: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdaptationLog {
    pub allocations: Vec<AllocationRecord>,
    pub messages: Vec<Message>,
    /// `(time, node)` whenever a node's shares exceeded its allocation.
    pub violations: Vec<(u64, String)>,
}

impl AdaptationLog {
    /// `time,flow,allocation` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time", "flow", "allocation"]).expect("in-memory write");
        for r in &self.allocations {
            w.write_record([r.time.to_string(), r.flow.clone(), r.allocation.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    pub fn allocation(&self, time: u64, flow: &str) -> Option<u64> {
        self.allocations
            .iter()
            .find(|r| r.time == time && r.flow == flow)
            .map(|r| r.allocation)
    }
}

/// Reads a demand trace with the header `time,flow,demand`. Demands accept
/// rate literals such as `40MB/s` or plain bytes per second.
pub fn parse_demand_trace(text: &str) -> Result<Vec<DemandSample>, NegotiatorError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e: csv::Error| NegotiatorError::Csv {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegotiatorTree {
    pub nodes: Vec<NegotiatorNode>,
    pub scheme: Scheme,
    /// Per-flow allocations after the last step.
    pub flow_allocations: BTreeMap<String, u64>,
}

impl NegotiatorTree {
    /// A tree with only a root that may hand out `cap`.
    pub fn new(root: impl Into<String>, cap: Rate, scheme: Scheme) -> NegotiatorTree {
        NegotiatorTree {
            nodes: vec![NegotiatorNode {
                id: root.into(),
                parent: None,
                children: Vec::new(),
                flows: Vec::new(),
                allocation: cap.0,
            }],
            scheme,
            flow_allocations: BTreeMap::new(),
        }
    }

    pub fn add_child(&mut self, parent: usize, id: impl Into<String>) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(NegotiatorNode {
            id: id.into(),
            parent: Some(parent),
            children: Vec::new(),
            flows: Vec::new(),
            allocation: 0,
        });
        self.nodes[parent].children.push(idx);
        idx
    }

    pub fn add_flow(&mut self, node: usize, flow: impl Into<String>) {
        let flow = flow.into();
        self.flow_allocations.insert(flow.clone(), 0);
        self.nodes[node].flows.push(flow);
    }

    /// Parents before children.
    fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        out
    }

    /// Divides `cap` among `current` holders wanting `wanted`.
    fn divide(&self, current: &[u64], wanted: &[u64], cap: u64) -> Vec<u64> {
        match &self.scheme {
            Scheme::Aimd(p) => step_aimd(current, wanted, cap, p),
            Scheme::Mmfs => step_mmfs_bytes(wanted, cap),
        }
    }

    /// Runs time steps `0..steps` against a demand trace and logs every
    /// flow's allocation and every message.
    pub fn run(&mut self, trace: &[DemandSample], steps: u64) -> AdaptationLog {
        let mut samples: Vec<&DemandSample> = trace.iter().collect();
        samples.sort_by_key(|s| s.time);
        let mut demand: BTreeMap<&str, u64> = BTreeMap::new();
        let mut next_sample = 0;
        let mut log = AdaptationLog::default();
        let order = self.preorder();

        for time in 0..steps {
            while next_sample < samples.len() && samples[next_sample].time <= time {
                let s = samples[next_sample];
                demand.insert(&s.flow, s.demand.0);
                next_sample += 1;
            }
            // Upward pass: total demand below each node.
            let mut wanted = vec![0u64; self.nodes.len()];
            for &n in order.iter().rev() {
                let node = &self.nodes[n];
                let own: u64 = node.flows.iter().map(|f| demand.get(f.as_str()).copied().unwrap_or(0)).sum();
                let below: u64 = node.children.iter().map(|&c| wanted[c]).sum();
                wanted[n] = own.saturating_add(below);
                if let Some(p) = node.parent {
                    log.messages.push(Message {
                        time,
                        kind: MessageKind::Propose,
                        from: node.id.clone(),
                        to: self.nodes[p].id.clone(),
                        amount: wanted[n],
                    });
                }
            }
            // Downward pass: children first get their shares, then flows.
            for &n in &order {
                let cap = self.nodes[n].allocation;
                let kids = self.nodes[n].children.clone();
                let flows = self.nodes[n].flows.clone();
                let current: Vec<u64> = kids
                    .iter()
                    .map(|&c| self.nodes[c].allocation)
                    .chain(flows.iter().map(|f| self.flow_allocations[f]))
                    .collect();
                let asks: Vec<u64> = kids
                    .iter()
                    .map(|&c| wanted[c])
                    .chain(flows.iter().map(|f| demand.get(f.as_str()).copied().unwrap_or(0)))
                    .collect();
                let shares = self.divide(&current, &asks, cap);
                let total: u64 = shares.iter().sum();
                if !kids.is_empty() {
                    log.messages.push(Message {
                        time,
                        kind: MessageKind::Verify,
                        from: self.nodes[n].id.clone(),
                        to: self.nodes[n].id.clone(),
                        amount: total,
                    });
                }
                if total > cap {
                    log.violations.push((time, self.nodes[n].id.clone()));
                }
                for (k, &c) in kids.iter().enumerate() {
                    let kind = if shares[k] >= wanted[c] {
                        MessageKind::Grant
                    } else {
                        MessageKind::Deny
                    };
                    log.messages.push(Message {
                        time,
                        kind,
                        from: self.nodes[n].id.clone(),
                        to: self.nodes[c].id.clone(),
                        amount: shares[k],
                    });
                    self.nodes[c].allocation = shares[k];
                }
                for (k, f) in flows.iter().enumerate() {
                    let a = shares[kids.len() + k];
                    self.flow_allocations.insert(f.clone(), a);
                    log.allocations.push(AllocationRecord {
                        time,
                        flow: f.clone(),
                        allocation: a,
                    });
                }
            }
        }
        log
    }
}
