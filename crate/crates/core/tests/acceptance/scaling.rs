//! Growth of refinement-check time with regex size and statement count,
//! measured as the slope of a log-log least-squares fit.

use std::time::Instant;

use provlang::negotiator::verify_refinement;
use provlang::policy::{Field, Formula, PathExpr, Policy, Predicate, Statement, Term};
use provlang::Rate;
use rand::RngExt;

use crate::{check, rng, Outcome};

fn slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    cov / var
}

/// Best of three wall-clock runs, in seconds. The verdict must be accept.
fn time_accept(original: &Policy, refined: &Policy) -> Result<f64, String> {
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let start = Instant::now();
        let verdict = verify_refinement(original, refined);
        best = best.min(start.elapsed().as_secs_f64());
        check!(verdict.is_accept(), "expected accept, got {verdict:?}");
    }
    Ok(best)
}

fn single(path: PathExpr) -> Policy {
    Policy {
        statements: vec![Statement::new("a", Predicate::True, path)],
        formula: Formula::True,
    }
}

/// Original `(w1 | ... | wm)*` over two-letter words; refined is a fixed
/// concatenation of `m` of those words, so it is included.
fn regex_pair(target: usize, seed: u64) -> (Policy, Policy, usize) {
    let mut r = rng(seed);
    let letters = ["l0", "l1", "l2", "l3", "l4", "l5"];
    let m = (target - 2) / 3;
    let words: Vec<[&str; 2]> = (0..m)
        .map(|_| [letters[r.random_range(0..6)], letters[r.random_range(0..6)]])
        .collect();
    let word = |w: &[&str; 2]| PathExpr::Seq(w.iter().map(|s| PathExpr::sym(*s)).collect());
    let original = PathExpr::Star(Box::new(PathExpr::Alt(words.iter().map(word).collect())));
    let refined = PathExpr::Seq((0..m).flat_map(|_| words[r.random_range(0..m)].map(PathExpr::sym)).collect());
    let size = original.size().max(refined.size());
    (single(original), single(refined), size)
}

fn balanced_or(mut preds: Vec<Predicate>) -> Predicate {
    while preds.len() > 1 {
        let mut next = Vec::with_capacity(preds.len().div_ceil(2));
        let mut it = preds.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => Predicate::Or(Box::new(a), Box::new(b)),
                None => a,
            });
        }
        preds = next;
    }
    preds.pop().unwrap_or(Predicate::False)
}

/// Original: one statement for all traffic. Refined: one statement per TCP
/// port below `n - 1`, plus one for everything else.
fn partition_pair(n: usize) -> (Policy, Policy) {
    let original = Policy {
        statements: vec![Statement::new("all", Predicate::True, PathExpr::any_path())],
        formula: Formula::Max(Term::of(&["all"]), Rate::mbps(n as u64)),
    };
    let ports: Vec<Predicate> = (0..n as u64 - 1).map(|p| Predicate::eq(Field::TcpDst, p)).collect();
    let mut statements: Vec<Statement> = ports
        .iter()
        .enumerate()
        .map(|(i, p)| Statement::new(format!("p{i}"), p.clone(), PathExpr::any_path()))
        .collect();
    statements.push(Statement::new(
        "rest",
        Predicate::Not(Box::new(balanced_or(ports))),
        PathExpr::any_path(),
    ));
    let ids: Vec<String> = statements.iter().map(|s| s.id.clone()).collect();
    let refined = Policy {
        statements,
        formula: Formula::Max(
            Term {
                ids,
                constant: Rate::ZERO,
            },
            Rate::mbps(n as u64),
        ),
    };
    (original, refined)
}

pub fn verification_scaling() -> Outcome {
    let mut regex_points = Vec::new();
    for (i, target) in [50, 100, 200, 300, 400, 500].into_iter().enumerate() {
        let (original, refined, size) = regex_pair(target, 60 + i as u64);
        regex_points.push((size as f64, time_accept(&original, &refined)?));
    }
    let mut predicate_points = Vec::new();
    for n in [1_000, 2_000, 4_000, 7_000, 10_000] {
        let (original, refined) = partition_pair(n);
        predicate_points.push((n as f64, time_accept(&original, &refined)?));
    }
    let (regex_slope, predicate_slope) = (slope(&regex_points), slope(&predicate_points));
    let detail = format!(
        "regex exponent {regex_slope:.2} (size {}..{}), predicate exponent {predicate_slope:.2} (1e3..1e4 statements)",
        regex_points[0].0, regex_points[regex_points.len() - 1].0
    );
    check!(regex_slope <= 2.3, "regex exponent too large: {detail}; points {regex_points:?}");
    check!(predicate_slope <= 1.3, "predicate exponent too large: {detail}; points {predicate_points:?}");
    Ok(detail)
}
