//! Checks that a refined policy implies the policy it refines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigUint;

use crate::automata::{compile, includes, Alphabet, FunctionTable, Nfa};
use crate::localize::{localize, SplitScheme};
use crate::policy::{is_synthesized_catch_all, print_path, Formula, PathExpr, Policy, Statement, Term};
use crate::predicate::{count_conjunct, find_overlaps, subtract, to_dnf, Conjunct, Dnf, Packet};
use crate::rate::Rate;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(Rejection),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }

    pub fn rejection(&self) -> Option<&Rejection> {
        match self {
            Verdict::Accept => None,
            Verdict::Reject(r) => Some(r),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rejection {
    /// A path allowed by `refined` is not allowed by `original` for packets
    /// both statements match.
    PathNotIncluded {
        original: String,
        refined: String,
        counterexample: Vec<String>,
    },
    /// The refined caps on traffic of an original cap term do not stay within
    /// its bound. `total` is `None` when some of that traffic is uncapped.
    CapExceeded {
        original: Vec<String>,
        refined: Vec<String>,
        total: Option<Rate>,
        bound: Rate,
    },
    /// The refined guarantees on traffic of an original guarantee term fall
    /// short of its bound.
    GuaranteeNotImplied {
        original: Vec<String>,
        refined: Vec<String>,
        total: Rate,
        bound: Rate,
    },
    /// Two refined statements share a packet.
    Overlapping {
        first: String,
        second: String,
        witness: Packet,
    },
    /// A packet is matched on one side only. The statement that matches it is
    /// named; the other side is `None`.
    NotPartition {
        original: Option<String>,
        refined: Option<String>,
        witness: Packet,
    },
    /// A bandwidth formula uses `or` or `!`.
    UnsupportedFormula,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids = |v: &[String]| v.join(" + ");
        match self {
            Rejection::PathNotIncluded {
                original,
                refined,
                counterexample,
            } => write!(
                f,
                "path [{}] is allowed for `{refined}` but not for `{original}`",
                counterexample.join(" ")
            ),
            Rejection::CapExceeded {
                original,
                refined,
                total: Some(total),
                bound,
            } => write!(
                f,
                "caps of {} sum to {total}, above the bound {bound} on {}",
                ids(refined),
                ids(original)
            ),
            Rejection::CapExceeded {
                original,
                refined,
                total: None,
                bound,
            } => write!(f, "{} is not fully capped, but {} is capped at {bound}", ids(refined), ids(original)),
            Rejection::GuaranteeNotImplied {
                original,
                refined,
                total,
                bound,
            } => write!(
                f,
                "guarantees of {} sum to {total}, below the guarantee {bound} on {}",
                if refined.is_empty() { "no statements".to_string() } else { ids(refined) },
                ids(original)
            ),
            Rejection::Overlapping { first, second, witness } => {
                write!(f, "refined statements `{first}` and `{second}` both match {witness:?}")
            }
            Rejection::NotPartition {
                original,
                refined,
                witness,
            } => match (original, refined) {
                (Some(o), _) => write!(f, "packet {witness:?} of `{o}` is not matched by the refined policy"),
                (None, Some(r)) => write!(f, "packet {witness:?} of `{r}` is not matched by the original policy"),
                (None, None) => write!(f, "packet {witness:?} is matched on one side only"),
            },
            Rejection::UnsupportedFormula => f.write_str("bandwidth formulas with `or` or `!` cannot be compared"),
        }
    }
}

/// Statements that take part in the coverage comparison; the completion
/// statement added by normalization is excluded.
fn explicit(policy: &Policy) -> Vec<&Statement> {
    policy
        .statements
        .iter()
        .filter(|s| !is_synthesized_catch_all(policy, s))
        .collect()
}

fn catch_all(policy: &Policy) -> Option<&Statement> {
    policy.statements.iter().find(|s| is_synthesized_catch_all(policy, s))
}

/// A packet in `c` but outside every conjunct of `cover`.
fn uncovered(c: &Conjunct, cover: &[&Conjunct]) -> Option<Packet> {
    let mut rest = vec![c.clone()];
    for d in cover {
        rest = rest.iter().flat_map(|r| subtract(r, d)).collect();
        if rest.is_empty() {
            return None;
        }
    }
    rest.first().map(Conjunct::witness)
}

/// Decides whether `refined` is a valid refinement of `original`: its
/// statements partition the traffic of the original ones, every path a
/// refined statement allows is allowed by each original statement sharing
/// packets with it, and its bandwidth formula implies the original one.
pub fn verify_refinement(original: &Policy, refined: &Policy) -> Verdict {
    match check(original, refined) {
        Ok(()) => Verdict::Accept,
        Err(r) => Verdict::Reject(r),
    }
}

fn check(original: &Policy, refined: &Policy) -> Result<(), Rejection> {
    let orig = explicit(original);
    let refi = explicit(refined);
    let orig_dnf: Vec<Dnf> = orig.iter().map(|s| to_dnf(&s.predicate)).collect();
    let refi_dnf: Vec<Dnf> = refi.iter().map(|s| to_dnf(&s.predicate)).collect();

    // Owners 0..orig.len() are original statements, the rest refined ones.
    let n = orig.len();
    let items: Vec<(usize, &Conjunct)> = orig_dnf
        .iter()
        .chain(&refi_dnf)
        .enumerate()
        .flat_map(|(i, d)| d.0.iter().map(move |c| (i, c)))
        .collect();
    let overlaps = find_overlaps(&items, |a, b| a >= n || b >= n, false);
    let mut pairs: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut back: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for o in &overlaps {
        if o.first >= n {
            return Err(Rejection::Overlapping {
                first: refi[o.first - n].id.clone(),
                second: refi[o.second - n].id.clone(),
                witness: o.witness.clone(),
            });
        }
        pairs.entry(o.first).or_default().insert(o.second - n);
        back.entry(o.second - n).or_default().insert(o.first);
    }

    // Coverage: each side's conjuncts must lie inside the other side's.
    let coverage = |own: &[Dnf], other: &[Dnf], links: &BTreeMap<usize, BTreeSet<usize>>| {
        for (i, d) in own.iter().enumerate() {
            let partners: Vec<&Conjunct> = links
                .get(&i)
                .into_iter()
                .flatten()
                .flat_map(|&j| other[j].0.iter())
                .collect();
            for c in &d.0 {
                let covered: BigUint = partners.iter().filter_map(|p| c.intersect(p)).map(|x| count_conjunct(&x)).sum();
                if covered != count_conjunct(c) {
                    let witness = uncovered(c, &partners).unwrap_or_else(|| c.witness());
                    return Err((i, witness));
                }
            }
        }
        Ok(())
    };
    // The refined side may repeat a packet only across its own statements,
    // which was rejected above, so counting per conjunct is exact once the
    // conjuncts of one statement are disjoint.
    let orig_dis: Vec<Dnf> = orig_dnf.iter().map(crate::predicate::disjointize).collect();
    let refi_dis: Vec<Dnf> = refi_dnf.iter().map(crate::predicate::disjointize).collect();
    coverage(&orig_dis, &refi_dis, &pairs).map_err(|(i, witness)| Rejection::NotPartition {
        original: Some(orig[i].id.clone()),
        refined: None,
        witness,
    })?;
    coverage(&refi_dis, &orig_dis, &back).map_err(|(i, witness)| Rejection::NotPartition {
        original: None,
        refined: Some(refi[i].id.clone()),
        witness,
    })?;

    // With equal coverage, the completion statements match the same packets.
    let mut pair_ids: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (&o, rs) in &pairs {
        pair_ids
            .entry(orig[o].id.as_str())
            .or_default()
            .extend(rs.iter().map(|&r| refi[r].id.as_str()));
    }
    if let (Some(o), Some(r)) = (catch_all(original), catch_all(refined)) {
        pair_ids.entry(o.id.as_str()).or_default().insert(r.id.as_str());
    }

    check_paths(original, refined, &pair_ids)?;
    check_bandwidth(original, refined, &pair_ids)
}

fn check_paths(original: &Policy, refined: &Policy, pairs: &BTreeMap<&str, BTreeSet<&str>>) -> Result<(), Rejection> {
    let alphabet = Alphabet::for_expressions(original.statements.iter().chain(&refined.statements).map(|s| &s.path));
    // Function names are compared as plain symbols: a refinement may only
    // demand functions the original already demands at the same positions.
    let functions = FunctionTable::new();
    let mut cache: BTreeMap<(bool, String), Nfa> = BTreeMap::new();
    // Forwarding paths are never empty, so only nonempty refined words count.
    let nonempty = PathExpr::Seq(vec![PathExpr::Dot, PathExpr::any_path()]);
    let mut nfa = |refined_side: bool, stmt: &Statement| -> Nfa {
        cache
            .entry((refined_side, stmt.id.clone()))
            .or_insert_with(|| {
                let expr = if refined_side {
                    stmt.path.clone().intersect(nonempty.clone())
                } else {
                    stmt.path.clone()
                };
                compile(&expr, &alphabet, &functions).expect("every symbol is in the alphabet of all paths")
            })
            .clone()
    };
    for (o, rs) in pairs {
        let os = original.statement(o).expect("paired statements exist");
        let on = nfa(false, os);
        for r in rs {
            let rs = refined.statement(r).expect("paired statements exist");
            let rn = nfa(true, rs);
            if let Some(counterexample) = includes(&rn, &on).counterexample {
                return Err(Rejection::PathNotIncluded {
                    original: format!("{o}: {}", print_path(&os.path)),
                    refined: format!("{r}: {}", print_path(&rs.path)),
                    counterexample,
                });
            }
        }
    }
    Ok(())
}

fn atoms(f: &Formula) -> Result<Vec<(bool, &Term, Rate)>, Rejection> {
    f.conjuncts()
        .ok_or(Rejection::UnsupportedFormula)?
        .into_iter()
        .map(|a| match a {
            Formula::Max(t, n) => Ok((true, t, *n)),
            Formula::Min(t, n) => Ok((false, t, *n)),
            _ => Err(Rejection::UnsupportedFormula),
        })
        .collect()
}

fn term_ids(t: &Term) -> BTreeSet<&str> {
    t.ids.iter().map(String::as_str).collect()
}

fn check_bandwidth(original: &Policy, refined: &Policy, pairs: &BTreeMap<&str, BTreeSet<&str>>) -> Result<(), Rejection> {
    let orig_atoms = atoms(&original.formula)?;
    let refi_atoms = atoms(&refined.formula)?;
    let local = localize(&refined.formula, &SplitScheme::Equal).map_err(|_| Rejection::UnsupportedFormula)?;
    let caps = local.caps();
    let guarantees = local.guarantees();
    let owned = |v: &BTreeSet<&str>| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();

    for (is_cap, term, bound) in orig_atoms {
        let ids = term_ids(term);
        let target = Rate(bound.0.saturating_sub(term.constant.0));
        let touching: BTreeSet<&str> = ids.iter().filter_map(|o| pairs.get(o)).flatten().copied().collect();
        if is_cap {
            // Best bound from per-statement caps or from one refined cap
            // whose term covers all the touching statements.
            let summed: Option<u128> = touching
                .iter()
                .map(|r| caps.get(*r).map(|c| u128::from(c.0)))
                .sum();
            let whole = refi_atoms
                .iter()
                .filter(|(c, t, _)| *c && touching.is_subset(&term_ids(t)))
                .map(|(_, t, n)| u128::from(n.0.saturating_sub(t.constant.0)))
                .min();
            let total = match (summed, whole) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            if total.is_none_or(|t| t > u128::from(target.0)) {
                return Err(Rejection::CapExceeded {
                    original: term.ids.clone(),
                    refined: owned(&touching),
                    total: total.map(|t| Rate(u64::try_from(t).unwrap_or(u64::MAX))),
                    bound: target,
                });
            }
        } else {
            // Only refined statements whose traffic lies wholly inside the
            // term count towards its guarantee.
            let inside: BTreeSet<&str> = touching
                .iter()
                .filter(|r| {
                    pairs
                        .iter()
                        .filter(|(_, rs)| rs.contains(*r))
                        .all(|(o, _)| ids.contains(o))
                })
                .copied()
                .collect();
            let summed: u128 = inside.iter().filter_map(|r| guarantees.get(*r)).map(|g| u128::from(g.0)).sum();
            let whole = refi_atoms
                .iter()
                .filter(|(c, t, _)| !*c && term_ids(t).is_subset(&inside))
                .map(|(_, t, n)| u128::from(n.0.saturating_sub(t.constant.0)))
                .max()
                .unwrap_or(0);
            let total = summed.max(whole);
            if total < u128::from(target.0) {
                return Err(Rejection::GuaranteeNotImplied {
                    original: term.ids.clone(),
                    refined: owned(&inside),
                    total: Rate(u64::try_from(total).unwrap_or(u64::MAX)),
                    bound: target,
                });
            }
        }
    }
    Ok(())
}
