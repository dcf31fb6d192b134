use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::{Alphabet, AutomataError, FunctionTable, Incoming, Nfa, SymSet};
use crate::policy::ast::PathExpr;

/// Compiles a path expression. Symbols resolve first against `functions`
/// (becoming a labelled atom over the function's locations), then against
/// the alphabet. `.` matches every symbol and `!a` is the complement of `a`
/// relative to the alphabet.
pub fn compile(expr: &PathExpr, alphabet: &Alphabet, functions: &FunctionTable) -> Result<Nfa, AutomataError> {
    let mut b = Builder::new(alphabet, functions);
    let entry = b.node();
    let exit = b.fragment(expr, entry)?;
    Ok(b.eliminate(entry, exit))
}

struct Builder<'a> {
    alphabet: &'a Alphabet,
    functions: &'a FunctionTable,
    eps: Vec<Vec<usize>>,
    atoms: Vec<Vec<(usize, usize)>>,
    labels: Vec<Incoming>,
}

impl<'a> Builder<'a> {
    fn new(alphabet: &'a Alphabet, functions: &'a FunctionTable) -> Self {
        Builder {
            alphabet,
            functions,
            eps: Vec::new(),
            atoms: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn node(&mut self) -> usize {
        self.eps.push(Vec::new());
        self.atoms.push(Vec::new());
        self.eps.len() - 1
    }

    fn atom(&mut self, from: usize, label: Incoming) -> usize {
        let to = self.node();
        self.labels.push(label);
        self.atoms[from].push((self.labels.len() - 1, to));
        to
    }

    fn symbol_label(&self, name: &str) -> Result<Incoming, AutomataError> {
        let n = self.alphabet.len();
        if let Some(locations) = self.functions.get(name) {
            let mut symbols = SymSet::empty(n);
            for loc in locations {
                let i = self
                    .alphabet
                    .index_of(loc)
                    .ok_or_else(|| AutomataError::UnknownSymbol(loc.clone()))?;
                symbols.insert(i);
            }
            if symbols.is_empty() {
                return Err(AutomataError::Unplaced(name.to_string()));
            }
            return Ok(Incoming {
                symbols,
                function: Some(name.to_string()),
            });
        }
        let i = self
            .alphabet
            .index_of(name)
            .ok_or_else(|| AutomataError::UnknownSymbol(name.to_string()))?;
        let mut symbols = SymSet::empty(n);
        symbols.insert(i);
        Ok(Incoming {
            symbols,
            function: None,
        })
    }

    fn fragment(&mut self, expr: &PathExpr, entry: usize) -> Result<usize, AutomataError> {
        match expr {
            PathExpr::Dot => {
                let label = Incoming {
                    symbols: SymSet::full(self.alphabet.len()),
                    function: None,
                };
                Ok(self.atom(entry, label))
            }
            PathExpr::Symbol(name) => {
                let label = self.symbol_label(name)?;
                Ok(self.atom(entry, label))
            }
            PathExpr::Seq(items) => items.iter().try_fold(entry, |at, item| self.fragment(item, at)),
            PathExpr::Alt(items) => {
                let exit = self.node();
                for item in items {
                    let start = self.node();
                    self.eps[entry].push(start);
                    let end = self.fragment(item, start)?;
                    self.eps[end].push(exit);
                }
                Ok(exit)
            }
            PathExpr::Star(body) => {
                let hub = self.node();
                self.eps[entry].push(hub);
                let end = self.fragment(body, hub)?;
                self.eps[end].push(hub);
                Ok(hub)
            }
            PathExpr::Not(body) => {
                let inner = compile(body, self.alphabet, self.functions)?;
                let dfa = Dfa::determinize(&inner).complement();
                let exit = self.node();
                let nodes: Vec<usize> = (0..dfa.num_states()).map(|_| self.node()).collect();
                self.eps[entry].push(nodes[dfa.start]);
                for d in 0..dfa.num_states() {
                    let mut by_target: BTreeMap<usize, SymSet> = BTreeMap::new();
                    for (sym, &t) in dfa.trans[d].iter().enumerate() {
                        by_target
                            .entry(t)
                            .or_insert_with(|| SymSet::empty(self.alphabet.len()))
                            .insert(sym);
                    }
                    for (t, symbols) in by_target {
                        let mid = self.atom(
                            nodes[d],
                            Incoming {
                                symbols,
                                function: None,
                            },
                        );
                        self.eps[mid].push(nodes[t]);
                    }
                    if dfa.accepting[d] {
                        self.eps[nodes[d]].push(exit);
                    }
                }
                Ok(exit)
            }
        }
    }

    fn closure(&self, from: usize) -> Vec<usize> {
        let mut seen = vec![false; self.eps.len()];
        let mut stack = vec![from];
        let mut out = Vec::new();
        seen[from] = true;
        while let Some(n) = stack.pop() {
            out.push(n);
            for &m in &self.eps[n] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        out
    }

    /// Position construction: the states are the entry plus the target of
    /// every atom, so each state inherits the atom's label.
    fn eliminate(self, entry: usize, exit: usize) -> Nfa {
        let mut position = vec![usize::MAX; self.eps.len()];
        let mut nodes = vec![entry];
        let mut incoming = vec![None];
        position[entry] = 0;
        for list in &self.atoms {
            for &(label, target) in list {
                position[target] = nodes.len();
                nodes.push(target);
                incoming.push(Some(self.labels[label].clone()));
            }
        }
        let mut succ = vec![Vec::new(); nodes.len()];
        let mut accepting = vec![false; nodes.len()];
        for (p, &n) in nodes.iter().enumerate() {
            for m in self.closure(n) {
                accepting[p] |= m == exit;
                for &(_, target) in &self.atoms[m] {
                    succ[p].push(position[target]);
                }
            }
            succ[p].sort_unstable();
            succ[p].dedup();
        }
        prune(Nfa {
            alphabet: self.alphabet.clone(),
            start: 0,
            accepting,
            succ,
            incoming,
        })
    }
}

/// Drops states unreachable from the start or unable to reach acceptance.
fn prune(nfa: Nfa) -> Nfa {
    let n = nfa.num_states();
    let mut reach = vec![false; n];
    let mut stack = vec![nfa.start];
    reach[nfa.start] = true;
    while let Some(q) = stack.pop() {
        for &r in &nfa.succ[q] {
            if !reach[r] {
                reach[r] = true;
                stack.push(r);
            }
        }
    }
    let mut pred = vec![Vec::new(); n];
    for q in 0..n {
        for &r in &nfa.succ[q] {
            pred[r].push(q);
        }
    }
    let mut coreach = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|q| nfa.accepting[*q]).collect();
    stack.iter().for_each(|q| coreach[*q] = true);
    while let Some(q) = stack.pop() {
        for &p in &pred[q] {
            if !coreach[p] {
                coreach[p] = true;
                stack.push(p);
            }
        }
    }
    let keep: Vec<usize> = (0..n)
        .filter(|&q| q == nfa.start || (reach[q] && coreach[q]))
        .collect();
    let mut renumber = vec![usize::MAX; n];
    for (new, &old) in keep.iter().enumerate() {
        renumber[old] = new;
    }
    Nfa {
        start: renumber[nfa.start],
        accepting: keep.iter().map(|&q| nfa.accepting[q]).collect(),
        succ: keep
            .iter()
            .map(|&q| {
                nfa.succ[q]
                    .iter()
                    .filter(|r| renumber[**r] != usize::MAX)
                    .map(|r| renumber[*r])
                    .collect()
            })
            .collect(),
        incoming: keep.iter().map(|&q| nfa.incoming[q].clone()).collect(),
        alphabet: nfa.alphabet,
    }
}

/// Complete deterministic automaton produced by subset construction. State
/// sets that are empty become an explicit sink.
#[derive(Clone, Debug)]
pub struct Dfa {
    pub start: usize,
    pub accepting: Vec<bool>,
    /// `trans[state][symbol]`
    pub trans: Vec<Vec<usize>>,
}

impl Dfa {
    pub fn determinize(nfa: &Nfa) -> Dfa {
        let n_sym = nfa.alphabet().len();
        let mut ids: HashMap<BTreeSet<usize>, usize> = HashMap::new();
        let mut sets = Vec::new();
        let mut queue = VecDeque::new();
        let start = BTreeSet::from([nfa.start()]);
        ids.insert(start.clone(), 0);
        sets.push(start);
        queue.push_back(0);
        let mut trans: Vec<Vec<usize>> = Vec::new();
        while let Some(d) = queue.pop_front() {
            if trans.len() <= d {
                trans.resize(d + 1, Vec::new());
            }
            let mut row = Vec::with_capacity(n_sym);
            for sym in 0..n_sym {
                let next = nfa.step_set(&sets[d], sym);
                let id = match ids.get(&next) {
                    Some(&id) => id,
                    None => {
                        let id = sets.len();
                        ids.insert(next.clone(), id);
                        sets.push(next);
                        queue.push_back(id);
                        id
                    }
                };
                row.push(id);
            }
            trans[d] = row;
        }
        trans.resize(sets.len(), Vec::new());
        let accepting = sets
            .iter()
            .map(|s| s.iter().any(|q| nfa.is_accepting(*q)))
            .collect();
        Dfa {
            start: 0,
            accepting,
            trans,
        }
    }

    pub fn complement(mut self) -> Dfa {
        self.accepting.iter_mut().for_each(|a| *a = !*a);
        self
    }

    pub fn num_states(&self) -> usize {
        self.trans.len()
    }

    pub fn accepts(&self, word: &[usize]) -> bool {
        let end = word.iter().fold(self.start, |d, &s| self.trans[d][s]);
        self.accepting[end]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parser::parse_path;

    fn alphabet() -> Alphabet {
        Alphabet::new(["h1", "h2", "m1", "s1"])
    }

    fn nfa(src: &str) -> Nfa {
        compile(&parse_path(src).unwrap(), &alphabet(), &FunctionTable::new()).unwrap()
    }

    #[test]
    fn universal_language_has_one_state() {
        let a = nfa(".*");
        assert_eq!(a.num_states(), 2);
        assert!(a.accepts::<&str>(&[]));
        assert!(a.accepts(&["h1", "s1", "m1"]));
        // The start state plus one looping position state.
        assert_eq!(a.successors(1), &[1]);
    }

    #[test]
    fn endpoints() {
        let a = nfa("h1 .* h2");
        assert!(a.accepts(&["h1", "s1", "h2"]));
        assert!(!a.accepts(&["h1", "s1"]));
    }

    #[test]
    fn complement_excludes_symbol() {
        let a = nfa("!(.* m1 .*)");
        assert!(!a.accepts(&["h1", "m1", "h2"]));
        assert!(a.accepts(&["h1", "s1", "h2"]));
        assert!(a.accepts::<&str>(&[]));
    }

    #[test]
    fn unknown_symbol() {
        let err = compile(&parse_path("zz").unwrap(), &alphabet(), &FunctionTable::new()).unwrap_err();
        assert_eq!(err, AutomataError::UnknownSymbol("zz".into()));
    }

    #[test]
    fn function_atoms_are_labelled() {
        let functions = FunctionTable::from([("dpi".to_string(), BTreeSet::from(["m1".to_string()]))]);
        let a = compile(&parse_path(".* dpi .*").unwrap(), &alphabet(), &functions).unwrap();
        assert!(a.accepts(&["h1", "m1", "h2"]));
        assert!(!a.accepts(&["h1", "h2"]));
        let labelled = (0..a.num_states())
            .filter(|q| a.incoming(*q).and_then(|l| l.function.as_deref()) == Some("dpi"))
            .count();
        assert_eq!(labelled, 1);
    }

    #[test]
    fn empty_language_prunes_to_start() {
        let a = nfa("!.* h1");
        assert!(a.is_empty());
        assert_eq!(a.num_states(), 1);
    }
}
