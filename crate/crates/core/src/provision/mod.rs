//! Path selection for statements with bandwidth guarantees.

mod model;
mod solver;

use std::collections::BTreeMap;
use std::time::Duration;

use num_rational::BigRational;
use thiserror::Error;

pub use model::{Commodity, Objective, ProvisionModel};
pub use solver::SolveStats;

use crate::automata::{compile, AutomataError, Nfa};
use crate::logical::{Endpoints, LogicalGraph, PhysicalPath};
use crate::policy::{Field, Policy, Statement};
use crate::predicate::{to_dnf, FieldSet};
use crate::rate::Rate;
use crate::topology::{NodeId, Topology};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProvisionError {
    #[error("statement `{0}` has no path satisfying its path expression")]
    NoPath(String),
    #[error("guarantees cannot all be met within link capacities")]
    Infeasible,
    #[error("no feasible path assignment found within {0:?}")]
    Timeout(Duration),
    #[error("statement `{statement}`: {reason}")]
    Endpoints { statement: String, reason: String },
    #[error("statement `{statement}`: {source}")]
    Automata { statement: String, source: AutomataError },
    #[error("guarantee names unknown statement `{0}`")]
    UnknownStatement(String),
    #[error("LP solver failure: {0}")]
    Solver(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// The time limit was hit; the solution is the best one found.
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Route {
    pub statement: String,
    pub guarantee: Rate,
    pub endpoints: Endpoints,
    /// Edge indices of the walk in the statement's product graph.
    pub walk: Vec<usize>,
    pub path: PhysicalPath,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProvisionSolution {
    pub status: SolveStatus,
    pub objective: Objective,
    /// Exact objective value: bytes per second for the weighted-shortest and
    /// min-max reserved criteria, a capacity fraction for min-max ratio.
    pub value: BigRational,
    pub routes: Vec<Route>,
    /// Bandwidth reserved on each link, indexed by link id.
    pub reserved: Vec<Rate>,
    pub stats: SolveStats,
}

impl ProvisionSolution {
    pub fn route(&self, statement: &str) -> Option<&Route> {
        self.routes.iter().find(|r| r.statement == statement)
    }

    /// Largest fraction of any link's capacity that is reserved.
    pub fn max_ratio(&self, topo: &Topology) -> BigRational {
        self.reserved
            .iter()
            .zip(topo.links())
            .map(|(r, l)| BigRational::new(r.0.into(), l.capacity.0.into()))
            .max()
            .unwrap_or_else(|| BigRational::from_integer(0.into()))
    }

    pub fn max_reserved(&self) -> Rate {
        self.reserved.iter().copied().max().unwrap_or(Rate::ZERO)
    }
}

fn address_host(
    topo: &Topology,
    conj: &crate::predicate::Conjunct,
    fields: [Field; 2],
) -> Result<NodeId, String> {
    for field in fields {
        if let Some(FieldSet::Allowed(values)) = conj.get(field) {
            if values.len() == 1 {
                let v = *values.iter().next().expect("one value");
                return topo
                    .host_by_address(field, v)
                    .ok_or_else(|| format!("{} {} is not a known host", field.name(), field.format_value(v)));
            }
        }
    }
    Err(format!(
        "a guarantee needs {} or {} pinned to one host",
        fields[0].name(),
        fields[1].name()
    ))
}

/// The single source and destination host a statement's traffic runs
/// between. Guarantees are reserved along one path, so the predicate must
/// pin both ends.
pub fn statement_endpoints(stmt: &Statement, topo: &Topology) -> Result<Endpoints, ProvisionError> {
    let err = |reason: String| ProvisionError::Endpoints {
        statement: stmt.id.clone(),
        reason,
    };
    let dnf = to_dnf(&stmt.predicate);
    let mut found: Option<Endpoints> = None;
    for conj in dnf.conjuncts() {
        let src = address_host(topo, conj, [Field::EthSrc, Field::IpSrc]).map_err(err)?;
        let dst = address_host(topo, conj, [Field::EthDst, Field::IpDst]).map_err(err)?;
        let ep = Endpoints { src, dst };
        if found.is_some_and(|f| f != ep) {
            return Err(err("predicate covers more than one host pair".into()));
        }
        found = Some(ep);
    }
    let ep = found.ok_or_else(|| err("predicate matches no packets".into()))?;
    if ep.src == ep.dst {
        return Err(err("source and destination are the same host".into()));
    }
    Ok(ep)
}

/// Compiles a statement's path expression against the topology.
pub fn statement_automaton(stmt: &Statement, topo: &Topology) -> Result<Nfa, ProvisionError> {
    compile(&stmt.path, &topo.alphabet(), topo.placements()).map_err(|source| ProvisionError::Automata {
        statement: stmt.id.clone(),
        source,
    })
}

/// Builds the model for the statements named in `guarantees`, in policy
/// order. Statements with a zero guarantee are left out.
pub fn build_model(
    policy: &Policy,
    topo: &Topology,
    guarantees: &BTreeMap<String, Rate>,
    objective: Objective,
) -> Result<ProvisionModel, ProvisionError> {
    if let Some(unknown) = guarantees.keys().find(|id| policy.statement(id).is_none()) {
        return Err(ProvisionError::UnknownStatement(unknown.clone()));
    }
    let mut commodities = Vec::new();
    for stmt in &policy.statements {
        let Some(&guarantee) = guarantees.get(&stmt.id) else {
            continue;
        };
        if guarantee == Rate::ZERO {
            continue;
        }
        let endpoints = statement_endpoints(stmt, topo)?;
        let nfa = statement_automaton(stmt, topo)?;
        let graph = LogicalGraph::build(&nfa, topo, Some(endpoints));
        if !graph.has_path() {
            return Err(ProvisionError::NoPath(stmt.id.clone()));
        }
        commodities.push(Commodity {
            statement: stmt.id.clone(),
            guarantee,
            endpoints,
            graph,
        });
    }
    Ok(ProvisionModel::new(commodities, topo, objective))
}

/// Solves a model and extracts one path per commodity.
pub fn solve(model: &ProvisionModel, timeout: Duration) -> Result<ProvisionSolution, ProvisionError> {
    let outcome = solver::solve(model, timeout)?;
    let best = outcome.best;
    let routes = model
        .commodities
        .iter()
        .zip(best.walks)
        .map(|(c, walk)| Route {
            statement: c.statement.clone(),
            guarantee: c.guarantee,
            endpoints: c.endpoints,
            path: c.graph.project(&walk),
            walk,
        })
        .collect();
    Ok(ProvisionSolution {
        status: if outcome.timed_out {
            SolveStatus::Timeout
        } else {
            SolveStatus::Optimal
        },
        objective: model.objective,
        value: best.value,
        routes,
        reserved: best
            .reserved
            .iter()
            .map(|r| Rate(u64::try_from(*r).expect("reservations fit within capacity")))
            .collect(),
        stats: outcome.stats,
    })
}

/// Selects guaranteed paths for every statement with a positive local
/// guarantee. Best-effort statements never enter the model.
pub fn provision_guaranteed(
    policy: &Policy,
    topo: &Topology,
    guarantees: &BTreeMap<String, Rate>,
    objective: Objective,
    timeout: Duration,
) -> Result<ProvisionSolution, ProvisionError> {
    let model = build_model(policy, topo, guarantees, objective)?;
    solve(&model, timeout)
}

/// Exact objective of an explicit path choice, or `None` if it overloads a
/// link. Walks are edge-index sequences in each commodity's product graph.
pub fn objective_of(model: &ProvisionModel, walks: &[Vec<usize>]) -> Option<BigRational> {
    solver::evaluate(model, walks).map(|a| a.value)
}
