use num_bigint::BigUint;

use super::ast::*;
use super::{validate, PolicyError};
use crate::predicate::{self, Conjunct};

/// The predicate of the statement that completes a policy: everything not
/// matched by `others`.
pub fn catch_all_predicate<'a>(others: impl IntoIterator<Item = &'a Predicate>) -> Predicate {
    Predicate::any(others.into_iter().cloned()).negate()
}

/// True when `stmt` is the completion statement that [`normalize`] appends.
/// Such a statement is disjoint from the rest by construction, so analyses
/// can skip expanding its (potentially large) negated predicate.
pub fn is_synthesized_catch_all(policy: &Policy, stmt: &Statement) -> bool {
    stmt.is_catch_all()
        && stmt.path == PathExpr::any_path()
        && stmt.predicate
            == catch_all_predicate(
                policy
                    .statements
                    .iter()
                    .filter(|s| !s.is_catch_all())
                    .map(|s| &s.predicate),
            )
}

/// Rejects overlapping statements and appends a catch-all statement when the
/// statements do not cover every packet.
pub fn normalize(policy: &Policy) -> Result<Policy, PolicyError> {
    validate(policy)?;
    for s in &policy.statements {
        if s.predicate.mentions_payload() {
            return Err(PolicyError::PayloadUnsupported(s.id.clone()));
        }
    }
    let explicit: Vec<&Statement> = policy
        .statements
        .iter()
        .filter(|s| !is_synthesized_catch_all(policy, s))
        .collect();
    if explicit.len() < policy.statements.len() {
        // Already completed; the explicit part must still be disjoint.
        check_disjoint(&explicit)?;
        return Ok(policy.clone());
    }
    let covered = check_disjoint(&explicit)?;
    let mut out = policy.clone();
    if covered < predicate::universe_size() {
        if policy.statement(CATCH_ALL_ID).is_some() {
            return Err(PolicyError::IdCollision(CATCH_ALL_ID.to_string()));
        }
        out.statements.push(Statement::new(
            CATCH_ALL_ID,
            catch_all_predicate(explicit.iter().map(|s| &s.predicate)),
            PathExpr::any_path(),
        ));
    }
    Ok(out)
}

/// Returns the number of packets covered by the statements.
fn check_disjoint(statements: &[&Statement]) -> Result<BigUint, PolicyError> {
    let dnfs: Vec<_> = statements
        .iter()
        .map(|s| predicate::to_dnf(&s.predicate))
        .collect();
    let items: Vec<(usize, &Conjunct)> = dnfs
        .iter()
        .enumerate()
        .flat_map(|(i, d)| d.conjuncts().iter().map(move |c| (i, c)))
        .collect();
    if let Some(o) = predicate::find_overlaps(&items, |_, _| true, true).into_iter().next() {
        return Err(PolicyError::Overlap {
            first: statements[o.first].id.clone(),
            second: statements[o.second].id.clone(),
            witness: o.witness.to_string(),
        });
    }
    Ok(dnfs.iter().map(predicate::count).sum())
}
