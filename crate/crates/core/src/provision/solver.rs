//! Depth-first branch-and-bound over the edge variables, with LP relaxations
//! solved by `microlp` and warm-started from the parent node.
//!
//! Edges that lie on no source-to-sink walk, and stationary self-loops, are
//! fixed to zero before the relaxation is built: dropping them from any
//! feasible point keeps it feasible and never worsens the objective.

use std::time::{Duration, Instant};

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, SolveOutcome, Solution, Variable};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use super::model::{Objective, ProvisionModel};
use super::ProvisionError;
use crate::logical::{EdgeKind, LogicalGraph};

const INTEGRALITY: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Assignment {
    pub walks: Vec<Vec<usize>>,
    pub reserved: Vec<u128>,
    pub value: BigRational,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub lp_solves: usize,
    pub branch_nodes: usize,
}

pub(crate) struct Outcome {
    pub best: Assignment,
    pub timed_out: bool,
    pub stats: SolveStats,
}

/// Exact objective and per-link reservations of one walk per commodity, or
/// `None` when some link is over capacity.
pub(crate) fn evaluate(model: &ProvisionModel, walks: &[Vec<usize>]) -> Option<Assignment> {
    let mut reserved = vec![0u128; model.capacities.len()];
    let mut weighted_hops = 0u128;
    for (c, walk) in model.commodities.iter().zip(walks) {
        for &e in walk {
            if let EdgeKind::Link { link, .. } = c.graph.edges()[e].kind {
                reserved[link] += u128::from(c.guarantee.0);
                weighted_hops += u128::from(c.guarantee.0);
            }
        }
    }
    if reserved.iter().zip(&model.capacities).any(|(r, cap)| *r > u128::from(cap.0)) {
        return None;
    }
    let int = |v: u128| BigRational::from_integer(BigInt::from(v));
    let value = match model.objective {
        Objective::WeightedShortest => int(weighted_hops),
        Objective::MinMaxReserved => int(reserved.iter().copied().max().unwrap_or(0)),
        Objective::MinMaxRatio => reserved
            .iter()
            .zip(&model.capacities)
            .map(|(r, cap)| BigRational::new(BigInt::from(*r), BigInt::from(cap.0)))
            .max()
            .unwrap_or_else(BigRational::zero),
    };
    Some(Assignment { walks: walks.to_vec(), reserved, value })
}

/// Edges that lie on some source-to-sink walk, excluding self-loops.
fn useful_edges(g: &LogicalGraph) -> Vec<bool> {
    let reach = |start: usize, forward: bool| {
        let mut seen = vec![false; g.num_vertices()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            let edges = if forward { g.out_edges(v) } else { g.in_edges(v) };
            for &e in edges {
                let w = if forward { g.edges()[e].to } else { g.edges()[e].from };
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    };
    let fwd = reach(g.source(), true);
    let bwd = reach(g.sink(), false);
    g.edges()
        .iter()
        .map(|e| e.from != e.to && fwd[e.from] && bwd[e.to])
        .collect()
}

struct Relaxation {
    problem: Problem,
    /// `x[i][e]` for useful edges.
    x: Vec<Vec<Option<Variable>>>,
    /// Scale applied to rates so that coefficients stay near one.
    scale: f64,
}

fn relaxation(model: &ProvisionModel) -> Relaxation {
    let scale = model.capacities.iter().map(|c| c.0).max().unwrap_or(1).max(1) as f64;
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let ratio_obj = f64::from(u8::from(model.objective == Objective::MinMaxRatio));
    let reserved_obj = f64::from(u8::from(model.objective == Objective::MinMaxReserved));
    let rmax = p.add_var(ratio_obj, (0.0, 1.0));
    let big_rmax = p.add_var(reserved_obj, (0.0, f64::INFINITY));
    let mut x = Vec::with_capacity(model.commodities.len());
    for c in &model.commodities {
        let g = &c.graph;
        let useful = useful_edges(g);
        let weight = c.guarantee.0 as f64 / scale;
        let vars: Vec<Option<Variable>> = g
            .edges()
            .iter()
            .zip(&useful)
            .map(|(edge, &keep)| {
                keep.then(|| {
                    let is_link = matches!(edge.kind, EdgeKind::Link { .. });
                    let obj = if model.objective == Objective::WeightedShortest && is_link {
                        weight
                    } else {
                        0.0
                    };
                    p.add_var(obj, (0.0, 1.0))
                })
            })
            .collect();
        for v in 0..g.num_vertices() {
            let mut row = LinearExpr::empty();
            let mut any = false;
            for &e in g.out_edges(v) {
                if let Some(var) = vars[e] {
                    row.add(var, 1.0);
                    any = true;
                }
            }
            for &e in g.in_edges(v) {
                if let Some(var) = vars[e] {
                    row.add(var, -1.0);
                    any = true;
                }
            }
            let rhs = if v == g.source() {
                1.0
            } else if v == g.sink() {
                -1.0
            } else {
                0.0
            };
            if any {
                p.add_constraint(row, ComparisonOp::Eq, rhs);
            }
        }
        x.push(vars);
    }
    for (l, cap) in model.capacities.iter().enumerate() {
        let mut row = LinearExpr::empty();
        let mut any = false;
        for &(i, e) in &model.link_edges[l] {
            if let Some(var) = x[i][e] {
                row.add(var, model.commodities[i].guarantee.0 as f64 / scale);
                any = true;
            }
        }
        if !any {
            continue;
        }
        let c = cap.0 as f64 / scale;
        let r = p.add_var(0.0, (0.0, f64::INFINITY));
        row.add(r, -c);
        p.add_constraint(row, ComparisonOp::Eq, 0.0);
        p.add_constraint([(r, 1.0), (rmax, -1.0)], ComparisonOp::Le, 0.0);
        p.add_constraint([(r, c), (big_rmax, -1.0)], ComparisonOp::Le, 0.0);
    }
    Relaxation { problem: p, x, scale }
}

/// The objective in the relaxation's scaled units.
fn scaled(model: &ProvisionModel, value: &BigRational, scale: f64) -> f64 {
    let v = value.to_f64().unwrap_or(f64::INFINITY);
    match model.objective {
        Objective::MinMaxRatio => v,
        _ => v / scale,
    }
}

/// Routes commodities one at a time on their cheapest walk that fits in the
/// remaining capacity.
fn greedy(model: &ProvisionModel) -> Option<Assignment> {
    let mut residual: Vec<u128> = model.capacities.iter().map(|c| u128::from(c.0)).collect();
    let mut walks = Vec::with_capacity(model.commodities.len());
    for c in &model.commodities {
        let need = u128::from(c.guarantee.0);
        let walk = c.graph.cheapest_walk(|e| match c.graph.edges()[e].kind {
            EdgeKind::Link { link, .. } => residual[link] >= need,
            _ => true,
        })?;
        for &e in &walk {
            if let EdgeKind::Link { link, .. } = c.graph.edges()[e].kind {
                residual[link] = residual[link].checked_sub(need)?;
            }
        }
        walks.push(walk);
    }
    evaluate(model, &walks)
}

fn better(candidate: &Assignment, incumbent: &Option<Assignment>) -> bool {
    match incumbent {
        None => true,
        Some(inc) => match candidate.value.cmp(&inc.value) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Equal => candidate.walks < inc.walks,
            std::cmp::Ordering::Greater => false,
        },
    }
}

fn lp_error(e: microlp::Error) -> Option<ProvisionError> {
    match e {
        microlp::Error::Infeasible => None,
        other => Some(ProvisionError::Solver(other.to_string())),
    }
}

pub(crate) fn solve(model: &ProvisionModel, timeout: Duration) -> Result<Outcome, ProvisionError> {
    let deadline = Instant::now() + timeout;
    let mut stats = SolveStats::default();
    if model.commodities.is_empty() {
        let best = evaluate(model, &[]).expect("no reservations");
        return Ok(Outcome { best, timed_out: false, stats });
    }
    let relax = relaxation(model);
    let mut incumbent = greedy(model);
    let root = match relax.problem.solve() {
        Ok(SolveOutcome::Solution(s)) => s,
        Ok(SolveOutcome::Interrupted(_)) => return Err(ProvisionError::Timeout(timeout)),
        Err(e) => return Err(lp_error(e).unwrap_or(ProvisionError::Infeasible)),
    };
    stats.lp_solves += 1;
    let order: Vec<(usize, usize, Variable)> = relax
        .x
        .iter()
        .enumerate()
        .flat_map(|(i, vars)| vars.iter().enumerate().filter_map(move |(e, v)| v.map(|v| (i, e, v))))
        .collect();
    let mut stack: Vec<Solution> = vec![root];
    let mut timed_out = false;
    while let Some(node) = stack.pop() {
        if Instant::now() > deadline {
            timed_out = true;
            break;
        }
        stats.branch_nodes += 1;
        if let Some(inc) = &incumbent {
            let bound = scaled(model, &inc.value, relax.scale);
            if node.objective() >= bound - 1e-9 * bound.abs().max(1.0) {
                continue;
            }
        }
        let fractional = order.iter().find(|(_, _, v)| {
            let val = node.var_value(*v);
            val > INTEGRALITY && val < 1.0 - INTEGRALITY
        });
        match fractional {
            None => {
                let mut walks = Vec::with_capacity(model.commodities.len());
                for (i, c) in model.commodities.iter().enumerate() {
                    let chosen = |e: usize| relax.x[i][e].is_some_and(|v| node.var_value(v) > 0.5);
                    match c.graph.cheapest_walk(chosen) {
                        Some(w) => walks.push(w),
                        None => return Err(ProvisionError::Solver("integral point without a walk".into())),
                    }
                }
                if let Some(candidate) = evaluate(model, &walks) {
                    if better(&candidate, &incumbent) {
                        incumbent = Some(candidate);
                    }
                }
            }
            Some(&(_, _, var)) => {
                for val in [0.0, 1.0] {
                    stats.lp_solves += 1;
                    match node.clone().fix_var(var, val) {
                        Ok(SolveOutcome::Solution(s)) => stack.push(s),
                        Ok(SolveOutcome::Interrupted(_)) => timed_out = true,
                        Err(e) => {
                            if let Some(err) = lp_error(e) {
                                return Err(err);
                            }
                        }
                    }
                }
            }
        }
    }
    match incumbent {
        Some(best) => Ok(Outcome { best, timed_out, stats }),
        None if timed_out => Err(ProvisionError::Timeout(timeout)),
        None => Err(ProvisionError::Infeasible),
    }
}
