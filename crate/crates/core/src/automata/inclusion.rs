use std::collections::{BTreeSet, HashMap, VecDeque};

use super::Nfa;

/// Outcome of a language inclusion check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inclusion {
    /// A shortest word accepted by the left automaton and rejected by the
    /// right one; `None` when inclusion holds.
    pub counterexample: Option<Vec<String>>,
}

impl Inclusion {
    pub fn holds(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Interned state sets of the determinized right-hand automaton.
#[derive(Default)]
struct Subsets {
    sets: Vec<BTreeSet<usize>>,
    ids: HashMap<BTreeSet<usize>, usize>,
    accepts: Vec<bool>,
}

impl Subsets {
    fn intern(&mut self, set: BTreeSet<usize>, nfa: &Nfa) -> usize {
        if let Some(&id) = self.ids.get(&set) {
            return id;
        }
        let id = self.sets.len();
        self.accepts.push(set.iter().any(|q| nfa.is_accepting(*q)));
        self.ids.insert(set.clone(), id);
        self.sets.push(set);
        id
    }
}

/// Decides `L(a) ⊆ L(b)` by breadth-first search over `a` paired with the
/// lazily determinized `b`. Both automata must share an alphabet.
pub fn includes(a: &Nfa, b: &Nfa) -> Inclusion {
    assert_eq!(
        a.alphabet().symbols(),
        b.alphabet().symbols(),
        "inclusion requires a common alphabet"
    );
    let mut subsets = Subsets::default();
    let mut step_memo: HashMap<(usize, usize), usize> = HashMap::new();

    let start = (a.start(), subsets.intern(BTreeSet::from([b.start()]), b));
    let mut prev: HashMap<(usize, usize), ((usize, usize), usize)> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    let mut seen = std::collections::HashSet::from([start]);

    let rebuild = |end: (usize, usize), prev: &HashMap<(usize, usize), ((usize, usize), usize)>| {
        let mut word = Vec::new();
        let mut cur = end;
        while let Some(&(p, sym)) = prev.get(&cur) {
            word.push(a.alphabet().name(sym).to_string());
            cur = p;
        }
        word.reverse();
        word
    };

    while let Some(node @ (q, sub)) = queue.pop_front() {
        if a.is_accepting(q) && !subsets.accepts[sub] {
            return Inclusion {
                counterexample: Some(rebuild(node, &prev)),
            };
        }
        for &r in a.successors(q) {
            let label = a.incoming(r).expect("successor states are labelled");
            for sym in label.symbols.iter() {
                let next_sub = match step_memo.get(&(sub, sym)) {
                    Some(&s) => s,
                    None => {
                        let set = b.step_set(&subsets.sets[sub], sym);
                        let id = subsets.intern(set, b);
                        step_memo.insert((sub, sym), id);
                        id
                    }
                };
                let next = (r, next_sub);
                if seen.insert(next) {
                    prev.insert(next, (node, sym));
                    queue.push_back(next);
                }
            }
        }
    }
    Inclusion {
        counterexample: None,
    }
}
