//! End-to-end compilation of policy text against a topology.

use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::besteffort::{build_sink_trees, BestEffortError, BestEffortPlan};
use crate::codegen::{lower, CodegenError, Programs};
use crate::localize::{localize, LocalizeError, LocalizedFormula, SplitScheme};
use crate::policy::{load, print_path, Policy, PolicyError};
use crate::provision::{build_model, solve, Objective, ProvisionError, ProvisionSolution, SolveStatus};
use crate::topology::Topology;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CompileError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Localize(#[from] LocalizeError),
    #[error(transparent)]
    Provision(#[from] ProvisionError),
    #[error(transparent)]
    BestEffort(#[from] BestEffortError),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompileOptions {
    pub objective: Objective,
    pub timeout: Duration,
    pub split: SplitScheme,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            objective: Objective::WeightedShortest,
            timeout: crate::provision::DEFAULT_TIMEOUT,
            split: SplitScheme::Equal,
        }
    }
}

/// Wall-clock time per stage, in milliseconds.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub frontend_ms: f64,
    pub localize_ms: f64,
    pub model_build_ms: f64,
    pub solve_ms: f64,
    pub best_effort_ms: f64,
    pub codegen_ms: f64,
}

#[derive(Clone, Debug)]
pub struct Compiled {
    /// Normalized policy, including the catch-all statement if one was added.
    pub policy: Policy,
    pub localized: LocalizedFormula,
    pub solution: ProvisionSolution,
    pub plan: BestEffortPlan,
    pub programs: Programs,
    pub timings: StageTimings,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

pub fn compile(source: &str, topo: &Topology, options: &CompileOptions) -> Result<Compiled, CompileError> {
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let policy = load(source)?;
    timings.frontend_ms = ms(t);
    compile_policy(policy, topo, options, timings)
}

/// Compiles an already normalized policy.
pub fn compile_policy(
    policy: Policy,
    topo: &Topology,
    options: &CompileOptions,
    mut timings: StageTimings,
) -> Result<Compiled, CompileError> {
    let t = Instant::now();
    let localized = localize(&policy.formula, &options.split)?;
    timings.localize_ms = ms(t);
    let guarantees = localized.guarantees();

    let t = Instant::now();
    let model = build_model(&policy, topo, &guarantees, options.objective)?;
    timings.model_build_ms = ms(t);
    let t = Instant::now();
    let solution = solve(&model, options.timeout)?;
    timings.solve_ms = ms(t);

    let t = Instant::now();
    let plan = build_sink_trees(&policy, topo, &guarantees)?;
    timings.best_effort_ms = ms(t);

    let t = Instant::now();
    let programs = lower(&policy, topo, &solution.routes, &plan, &localized.caps())?;
    timings.codegen_ms = ms(t);
    Ok(Compiled {
        policy,
        localized,
        solution,
        plan,
        programs,
        timings,
    })
}

/// Hex SHA-256 over every compile input and the tool version.
pub fn session_hash(policy_text: &[u8], topology_text: &[u8], options: &CompileOptions) -> String {
    let mut h = Sha256::new();
    let mut field = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field(env!("CARGO_PKG_VERSION").as_bytes());
    field(policy_text);
    field(topology_text);
    field(options.objective.name().as_bytes());
    field(&options.timeout.as_millis().to_le_bytes());
    field(format!("{:?}", options.split).as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct RouteReport {
    pub statement: String,
    pub kind: &'static str,
    pub src: String,
    pub dst: String,
    pub path: Vec<String>,
    pub functions: Vec<(usize, String)>,
    /// Bytes per second reserved; zero for best-effort routes.
    pub guarantee: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompileReport {
    pub session: String,
    pub objective: &'static str,
    pub status: &'static str,
    pub objective_value: String,
    pub statements: Vec<StatementReport>,
    pub routes: Vec<RouteReport>,
    pub unreachable: Vec<(String, String, String)>,
    /// `(link endpoints, bytes per second)` for links with a reservation.
    pub reservations: Vec<(String, u64)>,
    pub rules: usize,
    pub filters: usize,
    pub queues: usize,
    pub tags: usize,
    pub timings_ms: StageTimings,
}

#[derive(Clone, Debug, Serialize)]
pub struct StatementReport {
    pub id: String,
    pub path: String,
    pub cap: Option<u64>,
    pub guarantee: Option<u64>,
}

impl Compiled {
    pub fn report(&self, topo: &Topology, session: String) -> CompileReport {
        let caps = self.localized.caps();
        let guarantees = self.localized.guarantees();
        let names = |locs: &[usize]| locs.iter().map(|l| topo.name(*l).to_string()).collect::<Vec<_>>();
        let mut routes: Vec<RouteReport> = self
            .solution
            .routes
            .iter()
            .map(|r| RouteReport {
                statement: r.statement.clone(),
                kind: "guaranteed",
                src: topo.name(r.endpoints.src).into(),
                dst: topo.name(r.endpoints.dst).into(),
                path: names(&r.path.locations),
                functions: r.path.functions.clone(),
                guarantee: r.guarantee.0,
            })
            .collect();
        routes.extend(self.plan.routes.iter().map(|r| RouteReport {
            statement: r.statement.clone(),
            kind: "best-effort",
            src: topo.name(r.src).into(),
            dst: topo.name(r.dst).into(),
            path: names(&r.path.locations),
            functions: r.path.functions.clone(),
            guarantee: 0,
        }));
        let reservations = self
            .solution
            .reserved
            .iter()
            .enumerate()
            .filter(|(_, r)| r.0 > 0)
            .map(|(l, r)| {
                let link = topo.link(l);
                (format!("{}-{}", topo.name(link.u), topo.name(link.v)), r.0)
            })
            .collect();
        CompileReport {
            session,
            objective: self.solution.objective.name(),
            status: match self.solution.status {
                SolveStatus::Optimal => "optimal",
                SolveStatus::Timeout => "timeout",
            },
            objective_value: self.solution.value.to_string(),
            statements: self
                .policy
                .statements
                .iter()
                .map(|s| StatementReport {
                    id: s.id.clone(),
                    path: print_path(&s.path),
                    cap: caps.get(&s.id).map(|r| r.0),
                    guarantee: guarantees.get(&s.id).map(|r| r.0),
                })
                .collect(),
            routes,
            unreachable: self
                .plan
                .unreachable
                .iter()
                .map(|u| (u.statement.clone(), topo.name(u.src).into(), topo.name(u.dst).into()))
                .collect(),
            reservations,
            rules: self.programs.rule_count(),
            filters: self.programs.filter_count(),
            queues: self.programs.queue_count(),
            tags: self.programs.tags.count(),
            timings_ms: self.timings.clone(),
        }
    }
}
