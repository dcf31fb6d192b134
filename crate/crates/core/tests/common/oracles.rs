//! Reference implementations used only to check the library: a direct
//! regex matcher over words, Brzozowski derivatives, and level-based
//! water-filling. None of them share code with the crate.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use provlang::policy::PathExpr;

/// One position of a path: the location and, if one was performed there,
/// the packet-processing function.
#[derive(Clone, Debug)]
pub struct Pos {
    pub loc: String,
    pub func: Option<String>,
}

impl Pos {
    pub fn at(loc: &str) -> Pos {
        Pos {
            loc: loc.to_string(),
            func: None,
        }
    }
}

/// End offsets `j` such that `word[i..j]` matches `expr`. A symbol naming a
/// function matches exactly the positions where that function ran; every
/// other symbol and `.` match plain positions only.
fn ends(expr: &PathExpr, word: &[Pos], i: usize, is_function: &dyn Fn(&str) -> bool) -> BTreeSet<usize> {
    let n = word.len();
    match expr {
        PathExpr::Dot => (i < n && word[i].func.is_none()).then_some(i + 1).into_iter().collect(),
        PathExpr::Symbol(s) => {
            let hit = i < n
                && if is_function(s) {
                    word[i].func.as_deref() == Some(s.as_str())
                } else {
                    word[i].func.is_none() && word[i].loc == *s
                };
            hit.then_some(i + 1).into_iter().collect()
        }
        PathExpr::Seq(items) => {
            let mut cur = BTreeSet::from([i]);
            for item in items {
                cur = cur.iter().flat_map(|&k| ends(item, word, k, is_function)).collect();
            }
            cur
        }
        PathExpr::Alt(items) => items.iter().flat_map(|a| ends(a, word, i, is_function)).collect(),
        PathExpr::Star(a) => {
            let mut reach = BTreeSet::from([i]);
            let mut frontier = vec![i];
            while let Some(k) = frontier.pop() {
                for j in ends(a, word, k, is_function) {
                    if reach.insert(j) {
                        frontier.push(j);
                    }
                }
            }
            reach
        }
        PathExpr::Not(a) => {
            let inner = ends(a, word, i, is_function);
            (i..=n).filter(|j| !inner.contains(j)).collect()
        }
    }
}

pub fn word_matches(expr: &PathExpr, word: &[Pos], is_function: &dyn Fn(&str) -> bool) -> bool {
    ends(expr, word, 0, is_function).contains(&word.len())
}

/// Regular expressions normalized up to associativity, commutativity and
/// idempotence of union, which keeps the set of derivatives finite.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Re {
    Empty,
    Eps,
    Any,
    Sym(String),
    Cat(Box<Re>, Box<Re>),
    Or(BTreeSet<Re>),
    Star(Box<Re>),
    Not(Box<Re>),
}

impl Re {
    pub fn from_path(expr: &PathExpr) -> Re {
        match expr {
            PathExpr::Dot => Re::Any,
            PathExpr::Symbol(s) => Re::Sym(s.clone()),
            PathExpr::Seq(items) => items.iter().rev().fold(Re::Eps, |acc, i| cat(Re::from_path(i), acc)),
            PathExpr::Alt(items) => or(items.iter().map(Re::from_path)),
            PathExpr::Star(a) => star(Re::from_path(a)),
            PathExpr::Not(a) => not(Re::from_path(a)),
        }
    }

    pub fn nullable(&self) -> bool {
        match self {
            Re::Empty | Re::Any | Re::Sym(_) => false,
            Re::Eps | Re::Star(_) => true,
            Re::Cat(a, b) => a.nullable() && b.nullable(),
            Re::Or(items) => items.iter().any(Re::nullable),
            Re::Not(a) => !a.nullable(),
        }
    }

    pub fn derive(&self, sym: &str) -> Re {
        match self {
            Re::Empty | Re::Eps => Re::Empty,
            Re::Any => Re::Eps,
            Re::Sym(s) => {
                if s == sym {
                    Re::Eps
                } else {
                    Re::Empty
                }
            }
            Re::Cat(a, b) => {
                let left = cat(a.derive(sym), (**b).clone());
                if a.nullable() {
                    or([left, b.derive(sym)])
                } else {
                    left
                }
            }
            Re::Or(items) => or(items.iter().map(|i| i.derive(sym))),
            Re::Star(a) => cat(a.derive(sym), self.clone()),
            Re::Not(a) => not(a.derive(sym)),
        }
    }
}

fn cat(a: Re, b: Re) -> Re {
    match (a, b) {
        (Re::Empty, _) | (_, Re::Empty) => Re::Empty,
        (Re::Eps, x) | (x, Re::Eps) => x,
        (Re::Cat(x, y), z) => cat(*x, cat(*y, z)),
        (x, y) => Re::Cat(Box::new(x), Box::new(y)),
    }
}

fn or(items: impl IntoIterator<Item = Re>) -> Re {
    let mut set = BTreeSet::new();
    for i in items {
        match i {
            Re::Empty => {}
            Re::Or(inner) => set.extend(inner),
            other => {
                set.insert(other);
            }
        }
    }
    match set.len() {
        0 => Re::Empty,
        1 => set.into_iter().next().expect("one item"),
        _ => Re::Or(set),
    }
}

fn star(a: Re) -> Re {
    match a {
        Re::Empty | Re::Eps => Re::Eps,
        s @ Re::Star(_) => s,
        other => Re::Star(Box::new(other)),
    }
}

fn not(a: Re) -> Re {
    match a {
        Re::Not(inner) => *inner,
        other => Re::Not(Box::new(other)),
    }
}

fn int(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Max-min fair shares as `min(d_i, level)`, where `level` solves
/// `sum_i min(d_i, level) = capacity` (every demand is met if they fit).
pub fn water_level_shares(demands: &[u64], capacity: u64) -> Vec<BigRational> {
    let total: u64 = demands.iter().sum();
    if total <= capacity {
        return demands.iter().map(|&d| int(d)).collect();
    }
    let mut sorted = demands.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as u64;
    let mut below = 0u64;
    let mut level = int(0);
    for (k, &d) in sorted.iter().enumerate() {
        // Level in the segment where the `k` smallest demands are saturated.
        let candidate = BigRational::new(BigInt::from(capacity - below), BigInt::from(n - k as u64));
        if candidate <= int(d) {
            level = candidate;
            break;
        }
        below += d;
    }
    demands.iter().map(|&d| int(d).min(level.clone())).collect()
}
