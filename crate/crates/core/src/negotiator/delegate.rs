//! Projection of a policy onto part of the network.

use std::collections::BTreeSet;

use crate::automata::compile;
use crate::policy::{is_synthesized_catch_all, normalize, Formula, PathExpr, Policy, Predicate, Statement, Term};
use crate::predicate::{implies, satisfiable};
use crate::topology::Topology;

use super::NegotiatorError;

/// The traffic and locations handed to a child negotiator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scope {
    /// `None` means every location.
    pub locations: Option<BTreeSet<String>>,
    pub traffic: Predicate,
}

impl Scope {
    pub fn all() -> Scope {
        Scope {
            locations: None,
            traffic: Predicate::True,
        }
    }

    /// Paths made only of scope locations.
    pub fn path_language(&self) -> Option<PathExpr> {
        let locs = self.locations.as_ref()?;
        Some(PathExpr::Alt(locs.iter().map(PathExpr::sym).collect()).star())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delegation {
    pub parent: Policy,
    /// The parent with predicates narrowed to the scope traffic but paths
    /// left alone; the sub-policy refines it.
    pub restricted: Policy,
    pub sub: Policy,
    pub scope: Scope,
    /// Sub-policy statements whose path language became empty.
    pub unsatisfiable: Vec<String>,
}

/// Narrows every statement to the scope traffic, dropping statements left
/// with no packets. Caps carry over to the surviving statements; a guarantee
/// carries over only when none of its statements lost traffic, since the
/// child cannot promise bandwidth for packets outside its scope.
fn restrict(parent: &Policy, scope: &Scope) -> Result<Policy, NegotiatorError> {
    let atoms = parent.formula.conjuncts().ok_or(NegotiatorError::UnsupportedFormula)?;
    let mut statements = Vec::new();
    let mut narrowed = BTreeSet::new();
    for s in parent.statements.iter().filter(|s| !is_synthesized_catch_all(parent, s)) {
        if scope.traffic == Predicate::True || implies(&s.predicate, &scope.traffic) {
            statements.push(s.clone());
            continue;
        }
        let p = s.predicate.clone().and(scope.traffic.clone());
        narrowed.insert(s.id.as_str());
        if satisfiable(&p) {
            statements.push(Statement::new(s.id.clone(), p, s.path.clone()));
        }
    }
    let kept: BTreeSet<&str> = statements.iter().map(|s| s.id.as_str()).collect();
    let formula = Formula::all(atoms.into_iter().filter_map(|a| match a {
        Formula::Max(t, n) => {
            let ids: Vec<String> = t.ids.iter().filter(|i| kept.contains(i.as_str())).cloned().collect();
            (!ids.is_empty()).then(|| {
                Formula::Max(
                    Term {
                        ids,
                        constant: t.constant,
                    },
                    *n,
                )
            })
        }
        Formula::Min(t, _) => t
            .ids
            .iter()
            .all(|i| kept.contains(i.as_str()) && !narrowed.contains(i.as_str()))
            .then(|| a.clone()),
        _ => None,
    }));
    Ok(Policy { statements, formula })
}

/// Projects `parent` onto `scope`: predicates are intersected with the scope
/// traffic and paths with the language of scope locations.
pub fn delegate(parent: &Policy, scope: &Scope, topo: &Topology) -> Result<Delegation, NegotiatorError> {
    if let Some(locs) = &scope.locations {
        if locs.is_empty() {
            return Err(NegotiatorError::EmptyScope);
        }
        if let Some(l) = locs.iter().find(|l| topo.id_of(l).is_none()) {
            return Err(NegotiatorError::UnknownLocation(l.clone()));
        }
    }
    if !satisfiable(&scope.traffic) {
        return Err(NegotiatorError::EmptyScope);
    }
    if *scope == Scope::all() {
        return Ok(Delegation {
            parent: parent.clone(),
            restricted: parent.clone(),
            sub: parent.clone(),
            scope: scope.clone(),
            unsatisfiable: Vec::new(),
        });
    }
    let restricted = restrict(parent, scope)?;
    let mut sub = restricted.clone();
    if let Some(lang) = scope.path_language() {
        for s in &mut sub.statements {
            s.path = s.path.clone().intersect(lang.clone());
        }
    }
    let alphabet = topo.alphabet();
    let functions = topo.placements();
    let mut unsatisfiable = Vec::new();
    for s in &sub.statements {
        if compile(&s.path, &alphabet, functions)?.is_empty() {
            unsatisfiable.push(s.id.clone());
        }
    }
    Ok(Delegation {
        parent: parent.clone(),
        restricted: normalize(&restricted)?,
        sub: normalize(&sub)?,
        scope: scope.clone(),
        unsatisfiable,
    })
}
