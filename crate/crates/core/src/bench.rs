//! Timing rows for compiling connectivity policies on generated topologies.

use std::time::Duration;

use serde::Serialize;

use crate::besteffort::host_conjunct;
use crate::compile::{compile_policy, CompileError, CompileOptions, StageTimings};
use crate::policy::{normalize, Formula, PathExpr, Policy, Statement, Term};
use crate::rate::Rate;
use crate::topology::Topology;

/// One statement per ordered host pair. The first `guaranteed` pairs get a
/// guarantee of `rate`; the rest are best-effort.
pub fn all_pairs_policy(topo: &Topology, guaranteed: usize, rate: Rate) -> Policy {
    let hosts: Vec<usize> = topo.hosts().collect();
    let mut statements = Vec::new();
    let mut formula = Formula::True;
    for &s in &hosts {
        for &d in &hosts {
            if s == d {
                continue;
            }
            let id = format!("{}_{}", topo.name(s), topo.name(d));
            let pred = host_conjunct(topo, s, true)
                .intersect(&host_conjunct(topo, d, false))
                .expect("distinct hosts have compatible addresses")
                .to_predicate();
            if statements.len() < guaranteed {
                formula = formula.and(Formula::Min(Term::of(&[&id]), rate));
            }
            statements.push(Statement::new(id, pred, PathExpr::any_path()));
        }
    }
    Policy { statements, formula }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub topology: String,
    pub traffic_classes: usize,
    pub hosts: usize,
    pub switches: usize,
    pub model_build_ms: f64,
    pub solve_ms: f64,
    pub best_effort_ms: f64,
}

pub const BENCH_HEADER: [&str; 7] = [
    "topology",
    "traffic_classes",
    "hosts",
    "switches",
    "model_build_ms",
    "solve_ms",
    "best_effort_ms",
];

/// Compiles the all-pairs policy on `topo` and reports stage times.
pub fn bench_topology(
    name: &str,
    topo: &Topology,
    guaranteed: usize,
    timeout: Duration,
) -> Result<BenchRow, CompileError> {
    let pairs = all_pairs_policy(topo, guaranteed, Rate::mbps(1));
    let traffic_classes = pairs.statements.len();
    let policy = normalize(&pairs)?;
    let options = CompileOptions {
        timeout,
        ..CompileOptions::default()
    };
    let c = compile_policy(policy, topo, &options, StageTimings::default())?;
    Ok(BenchRow {
        topology: name.to_string(),
        traffic_classes,
        hosts: topo.hosts().count(),
        switches: topo.switches().count(),
        model_build_ms: round_ms(c.timings.model_build_ms),
        solve_ms: round_ms(c.timings.solve_ms),
        best_effort_ms: round_ms(c.timings.best_effort_ms),
    })
}

fn round_ms(ms: f64) -> f64 {
    (ms * 1e3).round() / 1e3
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(BENCH_HEADER).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{balanced_tree, fat_tree};

    #[test]
    fn empty_suite_is_header_only() {
        assert_eq!(
            rows_to_csv(&[]),
            "topology,traffic_classes,hosts,switches,model_build_ms,solve_ms,best_effort_ms\n"
        );
    }

    #[test]
    fn balanced_tree_row() {
        let topo = balanced_tree(3, 3, Rate::mbps(1000)).unwrap();
        let row = bench_topology("bt-3-3", &topo, 0, Duration::from_secs(60)).unwrap();
        let h = topo.hosts().count();
        assert_eq!(row.traffic_classes, h * (h - 1));
        assert_eq!(row.switches, topo.switches().count());
        let csv = rows_to_csv(&[row]);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with(&format!("bt-3-3,{},{h},", h * (h - 1))));
    }

    #[test]
    fn guaranteed_pairs_go_through_the_solver() {
        let topo = fat_tree(4, Rate::mbps(1000)).unwrap();
        let row = bench_topology("ft-4", &topo, 4, Duration::from_secs(60)).unwrap();
        assert_eq!(row.hosts, 16);
        assert_eq!(row.traffic_classes, 16 * 15);
    }
}
