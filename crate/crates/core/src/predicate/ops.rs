use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;

use super::dnf::{count, to_dnf};
use super::{Conjunct, Dnf, FieldSet, Packet};
use crate::policy::ast::{Field, Predicate};

pub fn satisfiable(p: &Predicate) -> bool {
    !to_dnf(p).is_empty()
}

/// A packet satisfying both predicates, or `None` when they are disjoint.
pub fn overlap_witness(p: &Predicate, q: &Predicate) -> Option<Packet> {
    dnf_overlap(&to_dnf(p), &to_dnf(q))
}

pub fn disjoint(p: &Predicate, q: &Predicate) -> bool {
    overlap_witness(p, q).is_none()
}

fn dnf_overlap(a: &Dnf, b: &Dnf) -> Option<Packet> {
    a.0.iter()
        .flat_map(|x| b.0.iter().map(move |y| (x, y)))
        .find_map(|(x, y)| x.intersect(y))
        .map(|c| c.witness())
}

/// Conjunction of two DNFs.
pub fn intersect(a: &Dnf, b: &Dnf) -> Dnf {
    let mut out: Vec<Conjunct> = a
        .0
        .iter()
        .flat_map(|x| b.0.iter().filter_map(move |y| x.intersect(y)))
        .collect();
    out.sort();
    out.dedup();
    Dnf(out)
}

/// Every packet satisfying `p` also satisfies `q`.
pub fn implies(p: &Predicate, q: &Predicate) -> bool {
    let dp = to_dnf(p);
    count(&dp) == count(&intersect(&dp, &to_dnf(q)))
}

pub fn equivalent(p: &Predicate, q: &Predicate) -> bool {
    implies(p, q) && implies(q, p)
}

/// True iff `parts` are pairwise disjoint and their union is exactly
/// `original`.
pub fn covers_partition(original: &Predicate, parts: &[Predicate]) -> bool {
    let parts: Vec<Dnf> = parts.iter().map(to_dnf).collect();
    let items: Vec<(usize, &Conjunct)> = parts
        .iter()
        .enumerate()
        .flat_map(|(i, d)| d.0.iter().map(move |c| (i, c)))
        .collect();
    if !find_overlaps(&items, |_, _| true, true).is_empty() {
        return false;
    }
    let orig = to_dnf(original);
    let target = count(&orig);
    let inside: BigUint = parts.iter().map(|d| count(&intersect(d, &orig))).sum();
    let total: BigUint = parts.iter().map(count).sum();
    inside == target && total == target
}

/// Two owners whose conjuncts share at least one packet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Overlap {
    pub first: usize,
    pub second: usize,
    pub witness: Packet,
}

const PAIRWISE_THRESHOLD: usize = 8;

/// Finds overlapping conjuncts belonging to different owners.
///
/// `relevant(a, b)` filters owner pairs (called with `a < b`). Candidate
/// pairs are narrowed by recursively bucketing conjuncts on the values they
/// allow for each field, so sets of mostly disjoint predicates are checked
/// in near-linear time. With `first_only` the search stops at the first hit.
/// Results are sorted by owner pair.
pub fn find_overlaps(
    items: &[(usize, &Conjunct)],
    relevant: impl Fn(usize, usize) -> bool,
    first_only: bool,
) -> Vec<Overlap> {
    let mut search = Search {
        items,
        relevant: &relevant,
        first_only,
        found: BTreeMap::new(),
        checked: BTreeSet::new(),
    };
    let all: Vec<usize> = (0..items.len()).collect();
    search.run(all, 0);
    search
        .found
        .into_iter()
        .map(|((first, second), witness)| Overlap {
            first,
            second,
            witness,
        })
        .collect()
}

struct Search<'a, F> {
    items: &'a [(usize, &'a Conjunct)],
    relevant: &'a F,
    first_only: bool,
    found: BTreeMap<(usize, usize), Packet>,
    checked: BTreeSet<(usize, usize)>,
}

impl<F: Fn(usize, usize) -> bool> Search<'_, F> {
    fn done(&self) -> bool {
        self.first_only && !self.found.is_empty()
    }

    fn run(&mut self, members: Vec<usize>, field_idx: usize) {
        if self.done() || members.len() < 2 {
            return;
        }
        if members.len() <= PAIRWISE_THRESHOLD || field_idx == Field::ALL.len() {
            self.pairwise(&members);
            return;
        }
        let field = Field::ALL[field_idx];
        let mut buckets: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let mut wild = Vec::new();
        for &m in &members {
            match self.items[m].1.get(field) {
                Some(FieldSet::Allowed(values)) => {
                    for v in values {
                        buckets.entry(*v).or_default().push(m);
                    }
                }
                _ => wild.push(m),
            }
        }
        if buckets.len() < 2 || wild.len() * 2 > members.len() {
            self.run(members, field_idx + 1);
            return;
        }
        for (_, mut bucket) in buckets {
            bucket.extend_from_slice(&wild);
            self.run(bucket, field_idx + 1);
            if self.done() {
                return;
            }
        }
    }

    fn pairwise(&mut self, members: &[usize]) {
        for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                let (a, b) = (i.min(j), i.max(j));
                let (oa, ob) = (self.items[a].0, self.items[b].0);
                if oa == ob {
                    continue;
                }
                let key = (oa.min(ob), oa.max(ob));
                if self.found.contains_key(&key) || !(self.relevant)(key.0, key.1) {
                    continue;
                }
                if !self.checked.insert((a, b)) {
                    continue;
                }
                if let Some(c) = self.items[a].1.intersect(self.items[b].1) {
                    self.found.insert(key, c.witness());
                    if self.first_only {
                        return;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parser::parse_predicate;

    fn p(s: &str) -> Predicate {
        parse_predicate(s).unwrap()
    }

    #[test]
    fn distinct_ports_are_disjoint() {
        assert!(disjoint(&p("tcp.dst = 80"), &p("tcp.dst = 22")));
    }

    #[test]
    fn partition_halves_are_disjoint() {
        assert!(disjoint(
            &p("ip.proto = tcp and tcp.dst = 80"),
            &p("ip.proto = tcp and tcp.dst != 80")
        ));
    }

    #[test]
    fn overlap_has_witness() {
        let a = p("ip.proto = tcp");
        let b = p("ip.proto = tcp and tcp.dst = 80");
        let w = overlap_witness(&a, &b).unwrap();
        assert!(super::super::eval(&a, &w) && super::super::eval(&b, &w));
    }

    #[test]
    fn tcp_partition_is_total() {
        let orig = p("ip.proto = tcp");
        let parts = [
            p("ip.proto = tcp and tcp.dst = 80"),
            p("ip.proto = tcp and tcp.dst != 80"),
        ];
        assert!(covers_partition(&orig, &parts));
        assert!(!covers_partition(&orig, &parts[..1]));
    }

    #[test]
    fn implicit_protocol_dependency() {
        assert!(implies(&p("tcp.dst = 80"), &p("ip.proto = 6")));
        assert!(!implies(&p("tcp.dst != 80"), &p("ip.proto = 6")));
    }

    #[test]
    fn bucketed_search_matches_pairwise() {
        let preds: Vec<Predicate> = (0..40u64)
            .map(|i| {
                let base = format!("ip.src = {} and tcp.dst = {}", i % 7, i % 5);
                if i == 33 {
                    p(&format!("ip.src = {}", 33 % 7))
                } else {
                    p(&base)
                }
            })
            .collect();
        let dnfs: Vec<Dnf> = preds.iter().map(to_dnf).collect();
        let items: Vec<(usize, &Conjunct)> = dnfs
            .iter()
            .enumerate()
            .flat_map(|(i, d)| d.0.iter().map(move |c| (i, c)))
            .collect();
        let fast: Vec<(usize, usize)> = find_overlaps(&items, |_, _| true, false)
            .into_iter()
            .map(|o| (o.first, o.second))
            .collect();
        let mut slow = Vec::new();
        for i in 0..preds.len() {
            for j in i + 1..preds.len() {
                if !disjoint(&preds[i], &preds[j]) {
                    slow.push((i, j));
                }
            }
        }
        assert_eq!(fast, slow);
    }
}
