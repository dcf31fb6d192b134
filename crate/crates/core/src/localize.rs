//! Splits bandwidth terms over several statements into per-statement bounds
//! whose conjunction implies the original formula.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::policy::{Formula, Term};
use crate::rate::Rate;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LocalizeError {
    #[error("bandwidth formulas with `or` or `!` cannot be localized")]
    UnsupportedFragment,
    #[error("constant {constant} in a cap already exceeds its bound {bound}")]
    ConstantExceedsBound { constant: Rate, bound: Rate },
    #[error("term has no statement identifiers")]
    EmptyTerm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bound {
    Max,
    Min,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum SplitScheme {
    #[default]
    Equal,
    /// Proportional to per-statement weights; missing weights count as 1.
    Weighted(BTreeMap<String, u64>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LocalAtom {
    pub bound: Bound,
    pub statement: String,
    pub rate: Rate,
    /// Index of the conjunct of the original formula this atom came from.
    pub origin: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LocalizedFormula {
    pub atoms: Vec<LocalAtom>,
}

impl LocalizedFormula {
    /// Tightest cap per statement.
    pub fn caps(&self) -> BTreeMap<String, Rate> {
        let mut out: BTreeMap<String, Rate> = BTreeMap::new();
        for a in self.atoms.iter().filter(|a| a.bound == Bound::Max) {
            out.entry(a.statement.clone())
                .and_modify(|r| *r = (*r).min(a.rate))
                .or_insert(a.rate);
        }
        out
    }

    /// Largest guarantee per statement.
    pub fn guarantees(&self) -> BTreeMap<String, Rate> {
        let mut out: BTreeMap<String, Rate> = BTreeMap::new();
        for a in self.atoms.iter().filter(|a| a.bound == Bound::Min) {
            out.entry(a.statement.clone())
                .and_modify(|r| *r = (*r).max(a.rate))
                .or_insert(a.rate);
        }
        out
    }

    pub fn to_formula(&self) -> Formula {
        Formula::all(self.atoms.iter().map(|a| {
            let term = Term::of(&[&a.statement]);
            match a.bound {
                Bound::Max => Formula::Max(term, a.rate),
                Bound::Min => Formula::Min(term, a.rate),
            }
        }))
    }
}

/// Whether per-statement rates satisfy a formula. Missing statements count
/// as zero.
pub fn holds(formula: &Formula, rates: &BTreeMap<String, u64>) -> bool {
    let total = |t: &Term| -> u128 {
        t.ids
            .iter()
            .map(|id| u128::from(rates.get(id).copied().unwrap_or(0)))
            .sum::<u128>()
            + u128::from(t.constant.0)
    };
    match formula {
        Formula::True => true,
        Formula::Max(t, n) => total(t) <= u128::from(n.0),
        Formula::Min(t, n) => total(t) >= u128::from(n.0),
        Formula::And(a, b) => holds(a, rates) && holds(b, rates),
        Formula::Or(a, b) => holds(a, rates) || holds(b, rates),
        Formula::Not(a) => !holds(a, rates),
    }
}

/// Splits `amount` over the distinct identifiers of a term. Each identifier
/// gets an integer share; shares times multiplicities sum to at most
/// `amount`, and exactly `amount` when no identifier repeats.
fn split(ids: &[String], amount: u64, scheme: &SplitScheme) -> Vec<(String, u64)> {
    let mut mult: BTreeMap<&str, u64> = BTreeMap::new();
    for id in ids {
        *mult.entry(id.as_str()).or_default() += 1;
    }
    let weight = |id: &str| match scheme {
        SplitScheme::Equal => 1,
        SplitScheme::Weighted(w) => w.get(id).copied().unwrap_or(1),
    };
    let mut total_weight: u128 = mult.iter().map(|(id, m)| u128::from(weight(id)) * u128::from(*m)).sum();
    let uniform = total_weight == 0;
    if uniform {
        total_weight = mult.values().map(|m| u128::from(*m)).sum();
    }
    let mut shares: Vec<(String, u64)> = mult
        .iter()
        .map(|(id, _)| {
            let w = if uniform { 1 } else { u128::from(weight(id)) };
            let share = u128::from(amount) * w / total_weight;
            (id.to_string(), u64::try_from(share).expect("share is at most amount"))
        })
        .collect();
    let used: u128 = shares.iter().map(|(id, s)| u128::from(*s) * u128::from(mult[id.as_str()])).sum();
    let remainder = u64::try_from(u128::from(amount) - used).expect("remainder is at most amount");
    let first = &mut shares[0];
    first.1 += remainder / mult[first.0.as_str()];
    shares
}

/// Rewrites a conjunction of bandwidth terms into single-statement atoms.
pub fn localize(formula: &Formula, scheme: &SplitScheme) -> Result<LocalizedFormula, LocalizeError> {
    let conjuncts = formula.conjuncts().ok_or(LocalizeError::UnsupportedFragment)?;
    let mut atoms = Vec::new();
    for (origin, atom) in conjuncts.into_iter().enumerate() {
        let (bound, term, n) = match atom {
            Formula::Max(t, n) => (Bound::Max, t, *n),
            Formula::Min(t, n) => (Bound::Min, t, *n),
            _ => unreachable!("conjuncts are bandwidth atoms"),
        };
        if term.ids.is_empty() {
            return Err(LocalizeError::EmptyTerm);
        }
        let amount = match bound {
            Bound::Max => n.0.checked_sub(term.constant.0).ok_or(LocalizeError::ConstantExceedsBound {
                constant: term.constant,
                bound: n,
            })?,
            Bound::Min => n.0.saturating_sub(term.constant.0),
        };
        for (statement, share) in split(&term.ids, amount, scheme) {
            atoms.push(LocalAtom {
                bound,
                statement,
                rate: Rate(share),
                origin,
            });
        }
    }
    Ok(LocalizedFormula { atoms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parser::parse_formula;

    fn local(src: &str) -> LocalizedFormula {
        localize(&parse_formula(src).unwrap(), &SplitScheme::Equal).unwrap()
    }

    #[test]
    fn splits_cap_equally() {
        let l = local("max(x + y, 50MB/s)");
        assert_eq!(l.to_formula(), parse_formula("max(x, 25MB/s) and max(y, 25MB/s)").unwrap());
    }

    #[test]
    fn single_terms_pass_through() {
        let f = parse_formula("max(x, 50MB/s) and min(y, 10MB/s)").unwrap();
        assert_eq!(localize(&f, &SplitScheme::Equal).unwrap().to_formula(), f);
    }

    #[test]
    fn remainder_goes_to_first_identifier() {
        let l = local("max(z + y + x, 100)");
        let caps = l.caps();
        assert_eq!(caps["x"], Rate(34));
        assert_eq!(caps["y"], Rate(33));
        assert_eq!(caps["z"], Rate(33));
    }

    #[test]
    fn weighted_split() {
        let w = SplitScheme::Weighted(BTreeMap::from([("x".into(), 2), ("y".into(), 1), ("z".into(), 1)]));
        let l = localize(&parse_formula("max(x + y + z, 100)").unwrap(), &w).unwrap();
        let caps = l.caps();
        assert_eq!((caps["x"], caps["y"], caps["z"]), (Rate(50), Rate(25), Rate(25)));
    }

    #[test]
    fn guarantees_split_too() {
        let l = local("min(x + y, 100MB/s)");
        assert_eq!(l.guarantees()["x"], Rate::mbps(50));
        assert_eq!(l.guarantees()["y"], Rate::mbps(50));
    }

    #[test]
    fn is_idempotent() {
        let once = local("max(x + y, 50MB/s) and min(z, 100MB/s) and max(a + b + c, 7)");
        let twice = localize(&once.to_formula(), &SplitScheme::Equal).unwrap();
        assert_eq!(once.to_formula(), twice.to_formula());
    }

    #[test]
    fn rejects_disjunction() {
        let f = parse_formula("max(x, 1) or max(y, 1)").unwrap();
        assert_eq!(localize(&f, &SplitScheme::Equal), Err(LocalizeError::UnsupportedFragment));
    }

    #[test]
    fn constant_is_subtracted() {
        let l = local("max(x + y + 10, 50)");
        assert_eq!(l.caps()["x"], Rate(20));
        assert!(matches!(
            localize(&parse_formula("max(x + 60, 50)").unwrap(), &SplitScheme::Equal),
            Err(LocalizeError::ConstantExceedsBound { .. })
        ));
    }
}
