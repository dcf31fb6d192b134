use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::parser::{HostAddr, Program, RateClause, StatementItem};
use super::{validate, PolicyError};

/// Expands set definitions and `foreach` blocks into core statements.
///
/// Each `(s, d)` tuple of `cross(A, B)` becomes a statement whose predicate
/// is `src = s and dst = d and <body>`, using the Ethernet fields for MAC
/// literals and the IP fields for IPv4 literals. Expanded statements are
/// named `fe<block>_<tuple>` and each `at` clause adds a per-statement term
/// to the global formula.
pub fn desugar(program: Program) -> Result<Policy, PolicyError> {
    let mut sets: BTreeMap<String, Vec<HostAddr>> = BTreeMap::new();
    for def in program.sets {
        if sets.insert(def.name.clone(), def.values).is_some() {
            return Err(PolicyError::DuplicateSet(def.name));
        }
    }
    let explicit: BTreeSet<String> = program
        .items
        .iter()
        .filter_map(|item| match item {
            StatementItem::Core(s) => Some(s.id.clone()),
            StatementItem::Foreach(_) => None,
        })
        .collect();

    let mut statements = Vec::new();
    let mut clauses = Vec::new();
    let mut block = 0usize;
    for item in program.items {
        match item {
            StatementItem::Core(s) => statements.push(s),
            StatementItem::Foreach(fe) => {
                let lookup = |name: &str| -> Result<&Vec<HostAddr>, PolicyError> {
                    let set = sets
                        .get(name)
                        .ok_or_else(|| PolicyError::UnknownSet(name.to_string()))?;
                    if set.is_empty() {
                        return Err(PolicyError::EmptySet(name.to_string()));
                    }
                    Ok(set)
                };
                let srcs = lookup(&fe.sets.0)?;
                let dsts = lookup(&fe.sets.1)?;
                let mut n = 0usize;
                for s in srcs {
                    for d in dsts {
                        let id = format!("fe{block}_{n}");
                        n += 1;
                        if explicit.contains(&id) {
                            return Err(PolicyError::IdCollision(id));
                        }
                        let predicate = Predicate::Eq(s.src_field(), s.value())
                            .and(Predicate::Eq(d.dst_field(), d.value()))
                            .and(fe.predicate.clone());
                        for clause in &fe.clauses {
                            let term = Term {
                                ids: vec![id.clone()],
                                constant: crate::rate::Rate::ZERO,
                            };
                            clauses.push(match clause {
                                RateClause::Max(r) => Formula::Max(term, *r),
                                RateClause::Min(r) => Formula::Min(term, *r),
                            });
                        }
                        statements.push(Statement {
                            id,
                            predicate,
                            path: fe.path.clone(),
                        });
                    }
                }
                block += 1;
            }
        }
    }
    let formula = program.formula.unwrap_or(Formula::True).and(Formula::all(clauses));
    let policy = Policy { statements, formula };
    validate(&policy)?;
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use crate::policy::{parse, PolicyError};

    const SUGAR: &str = "srcs := {00:00:00:00:00:01, 00:00:00:00:00:03}\n\
                         dsts := {10.0.0.1, 10.0.0.2, 10.0.0.3}\n\
                         foreach (s,d) in cross(srcs,dsts):\n  tcp.dst = 80 -> .* at max(1MB/s)";

    #[test]
    fn cross_cardinality() {
        let p = parse(SUGAR).unwrap();
        assert_eq!(p.statements.len(), 6);
        assert_eq!(p.formula.conjuncts().unwrap().len(), 6);
    }

    #[test]
    fn empty_set_rejected() {
        let err = parse("a := {}\nb := {10.0.0.1}\nforeach (s,d) in cross(a,b): true -> .*").unwrap_err();
        assert_eq!(err, PolicyError::EmptySet("a".into()));
    }

    #[test]
    fn collision_rejected() {
        let src = "a := {10.0.0.1}\n[fe0_0 : true -> .*]\nforeach (s,d) in cross(a,a): true -> .*";
        assert_eq!(parse(src).unwrap_err(), PolicyError::IdCollision("fe0_0".into()));
    }

    #[test]
    fn unknown_set_rejected() {
        let err = parse("foreach (s,d) in cross(a,b): true -> .*").unwrap_err();
        assert_eq!(err, PolicyError::UnknownSet("a".into()));
    }
}
