//! Regular expressions over network locations.
//!
//! Expressions compile to an ε-free NFA in which every state other than the
//! start has a single incoming label: the set of locations that may be
//! visited on entering the state, plus the packet function performed there
//! when the state came from a function name. The logical topology relies on
//! that shape to recover where each function runs.

mod compile;
mod inclusion;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::policy::ast::PathExpr;

pub use compile::{compile, Dfa};
pub use inclusion::{includes, Inclusion};

/// Function name to the locations able to perform it.
pub type FunctionTable = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AutomataError {
    #[error("path symbol `{0}` is neither a location nor a placed function")]
    UnknownSymbol(String),
    #[error("function `{0}` has no placement location")]
    Unplaced(String),
}

/// Symbol used for "any location not named in the expressions" when
/// expressions are compared without a topology.
pub const OTHER_SYMBOL: &str = "#other";

/// Finite ordered set of location names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Alphabet {
    pub fn new(symbols: impl IntoIterator<Item = impl Into<String>>) -> Alphabet {
        let set: BTreeSet<String> = symbols.into_iter().map(Into::into).collect();
        let symbols: Vec<String> = set.into_iter().collect();
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Alphabet { symbols, index }
    }

    /// Every symbol named in `exprs` plus [`OTHER_SYMBOL`], which stands for
    /// all remaining locations.
    pub fn for_expressions<'a>(exprs: impl IntoIterator<Item = &'a PathExpr>) -> Alphabet {
        let mut names: BTreeSet<String> = exprs
            .into_iter()
            .flat_map(|e| e.symbols().into_iter().map(str::to_string))
            .collect();
        names.insert(OTHER_SYMBOL.to_string());
        Alphabet::new(names)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.symbols[i]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

/// Bit set over alphabet indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymSet {
    words: Vec<u64>,
}

impl SymSet {
    pub fn empty(n: usize) -> SymSet {
        SymSet {
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn full(n: usize) -> SymSet {
        let mut s = SymSet::empty(n);
        (0..n).for_each(|i| s.insert(i));
        s
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words.get(i / 64).is_some_and(|w| w & (1 << (i % 64)) != 0)
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, w)| {
            (0..64).filter(move |b| w & (1 << b) != 0).map(move |b| wi * 64 + b)
        })
    }
}

/// Label on the transitions entering a state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Incoming {
    pub symbols: SymSet,
    /// Packet function performed at the entered location, if any.
    pub function: Option<String>,
}

/// ε-free NFA with per-state incoming labels.
#[derive(Clone, Debug)]
pub struct Nfa {
    alphabet: Alphabet,
    start: usize,
    accepting: Vec<bool>,
    succ: Vec<Vec<usize>>,
    incoming: Vec<Option<Incoming>>,
}

impl Nfa {
    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn num_states(&self) -> usize {
        self.succ.len()
    }

    pub fn is_accepting(&self, q: usize) -> bool {
        self.accepting[q]
    }

    /// Label on transitions into `q`; `None` only for a start state without
    /// incoming transitions.
    pub fn incoming(&self, q: usize) -> Option<&Incoming> {
        self.incoming[q].as_ref()
    }

    pub fn successors(&self, q: usize) -> &[usize] {
        &self.succ[q]
    }

    /// States reached from `q` on symbol index `sym`.
    pub fn step(&self, q: usize, sym: usize) -> impl Iterator<Item = usize> + '_ {
        self.succ[q]
            .iter()
            .copied()
            .filter(move |r| self.incoming[*r].as_ref().is_some_and(|l| l.symbols.contains(sym)))
    }

    pub fn step_set(&self, states: &BTreeSet<usize>, sym: usize) -> BTreeSet<usize> {
        states.iter().flat_map(|q| self.step(*q, sym)).collect()
    }

    pub fn accepts<S: AsRef<str>>(&self, word: &[S]) -> bool {
        let mut current = BTreeSet::from([self.start]);
        for s in word {
            let Some(sym) = self.alphabet.index_of(s.as_ref()) else {
                return false;
            };
            current = self.step_set(&current, sym);
            if current.is_empty() {
                return false;
            }
        }
        current.iter().any(|q| self.accepting[*q])
    }

    pub fn is_empty(&self) -> bool {
        self.shortest_word().is_none()
    }

    /// A shortest accepted word.
    pub fn shortest_word(&self) -> Option<Vec<String>> {
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; self.num_states()];
        let mut seen = vec![false; self.num_states()];
        let mut queue = std::collections::VecDeque::from([self.start]);
        seen[self.start] = true;
        while let Some(q) = queue.pop_front() {
            if self.accepting[q] {
                let mut word = Vec::new();
                let mut cur = q;
                while let Some((p, sym)) = prev[cur] {
                    word.push(self.alphabet.name(sym).to_string());
                    cur = p;
                }
                word.reverse();
                return Some(word);
            }
            for &r in &self.succ[q] {
                if !seen[r] {
                    seen[r] = true;
                    let sym = self.incoming[r]
                        .as_ref()
                        .and_then(|l| l.symbols.iter().next())
                        .expect("non-start states carry a nonempty label");
                    prev[r] = Some((q, sym));
                    queue.push_back(r);
                }
            }
        }
        None
    }
}

impl fmt::Display for Nfa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.num_states() {
            let mark = if self.accepting[q] { "*" } else { " " };
            let label = match &self.incoming[q] {
                Some(l) => {
                    let names: Vec<&str> = l.symbols.iter().map(|i| self.alphabet.name(i)).collect();
                    match &l.function {
                        Some(func) => format!("{{{}}}@{}", names.join(","), func),
                        None => format!("{{{}}}", names.join(",")),
                    }
                }
                None => "start".to_string(),
            };
            writeln!(f, "{mark}{q} {label} -> {:?}", self.succ[q])?;
        }
        Ok(())
    }
}

/// Replaces each function name with the alternation of its locations.
pub fn substitute_functions(expr: &PathExpr, functions: &FunctionTable) -> Result<PathExpr, AutomataError> {
    Ok(match expr {
        PathExpr::Symbol(s) => match functions.get(s) {
            Some(locs) if locs.is_empty() => return Err(AutomataError::Unplaced(s.clone())),
            Some(locs) if locs.len() == 1 => PathExpr::sym(locs.iter().next().unwrap().clone()),
            Some(locs) => PathExpr::Alt(locs.iter().map(|l| PathExpr::sym(l.clone())).collect()),
            None => expr.clone(),
        },
        PathExpr::Dot => PathExpr::Dot,
        PathExpr::Seq(items) => PathExpr::Seq(
            items
                .iter()
                .map(|i| substitute_functions(i, functions))
                .collect::<Result<_, _>>()?,
        ),
        PathExpr::Alt(items) => PathExpr::Alt(
            items
                .iter()
                .map(|i| substitute_functions(i, functions))
                .collect::<Result<_, _>>()?,
        ),
        PathExpr::Star(a) => substitute_functions(a, functions)?.star(),
        PathExpr::Not(a) => substitute_functions(a, functions)?.complement(),
    })
}
