use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::{Conjunct, Dnf, FieldSet};
use crate::policy::ast::{Field, Predicate, PROTO_TCP, PROTO_UDP};

/// Disjunctive normal form. `false` yields the empty disjunction.
pub fn to_dnf(p: &Predicate) -> Dnf {
    let mut conjuncts = build(p, false);
    conjuncts.sort();
    conjuncts.dedup();
    Dnf(conjuncts)
}

fn build(p: &Predicate, negated: bool) -> Vec<Conjunct> {
    match (p, negated) {
        (Predicate::True, false) | (Predicate::False, true) => vec![Conjunct::top()],
        (Predicate::True, true) | (Predicate::False, false) => vec![],
        (Predicate::Eq(field, v), neg) => {
            let set = if neg {
                FieldSet::Excluded([*v].into())
            } else {
                FieldSet::single(*v)
            };
            Conjunct::atom(*field, set).into_iter().collect()
        }
        (Predicate::Payload(_), _) => panic!("payload predicates have no header semantics"),
        (Predicate::Not(a), neg) => build(a, !neg),
        (Predicate::And(a, b), false) | (Predicate::Or(a, b), true) => {
            let left = build(a, negated);
            if left.is_empty() {
                return left;
            }
            let right = build(b, negated);
            let mut out = Vec::with_capacity(left.len() * right.len());
            for l in &left {
                for r in &right {
                    if let Some(c) = l.intersect(r) {
                        out.push(c);
                    }
                }
            }
            out.sort();
            out.dedup();
            out
        }
        (Predicate::Or(a, b), false) | (Predicate::And(a, b), true) => {
            let mut out = build(a, negated);
            out.extend(build(b, negated));
            out
        }
    }
}

/// `c ∧ ¬d` as pairwise disjoint conjuncts.
pub fn subtract(c: &Conjunct, d: &Conjunct) -> Vec<Conjunct> {
    if c.intersect(d).is_none() {
        return vec![c.clone()];
    }
    let mut out = Vec::new();
    // ¬(d1 ∧ d2 ∧ …) = ¬d1 ∨ (d1 ∧ ¬d2) ∨ (d1 ∧ d2 ∧ ¬d3) ∨ …
    let mut prefix = c.clone();
    for (field, set) in d.constraints() {
        if let Some(piece) = prefix.clone().with(*field, set.complement()) {
            out.push(piece);
        }
        match prefix.with(*field, set.clone()) {
            Some(next) => prefix = next,
            None => break,
        }
    }
    out
}

/// Rewrites a DNF so that its conjuncts are pairwise disjoint.
pub fn disjointize(dnf: &Dnf) -> Dnf {
    let mut done: Vec<Conjunct> = Vec::new();
    for c in &dnf.0 {
        let mut pieces = vec![c.clone()];
        for d in &done {
            pieces = pieces.iter().flat_map(|p| subtract(p, d)).collect();
            if pieces.is_empty() {
                break;
            }
        }
        done.extend(pieces);
    }
    Dnf(done)
}

fn card(c: &Conjunct, field: Field) -> BigUint {
    let domain = field.domain_size();
    BigUint::from(c.get(field).map_or(domain, |s| s.cardinality(domain)))
}

/// Number of packets matching a conjunct.
pub fn count_conjunct(c: &Conjunct) -> BigUint {
    let mut base = BigUint::one();
    for field in [Field::EthSrc, Field::EthDst, Field::EthTyp, Field::IpSrc, Field::IpDst] {
        base *= card(c, field);
    }
    let proto = c.get(Field::IpProto);
    let has = |p: u64| proto.is_none_or(|s| s.contains(p));
    let mut per_proto = BigUint::zero();
    let mut transport_protos = 0u32;
    if has(PROTO_TCP) {
        per_proto += card(c, Field::TcpSrc) * card(c, Field::TcpDst);
        transport_protos += 1;
    }
    if has(PROTO_UDP) {
        per_proto += card(c, Field::UdpSrc) * card(c, Field::UdpDst);
        transport_protos += 1;
    }
    let proto_values = proto.map_or(Field::IpProto.domain_size(), |s| {
        s.cardinality(Field::IpProto.domain_size())
    });
    per_proto += BigUint::from(proto_values - u128::from(transport_protos));
    base * per_proto
}

/// Exact number of packets matching a DNF.
pub fn count(dnf: &Dnf) -> BigUint {
    disjointize(dnf).0.iter().map(count_conjunct).sum()
}

/// Size of the packet universe.
pub fn universe_size() -> BigUint {
    count_conjunct(&Conjunct::top())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parser::parse_predicate;

    #[test]
    fn tcp_port_is_one_conjunct() {
        let dnf = to_dnf(&parse_predicate("ip.proto = tcp and tcp.dst = 80").unwrap());
        assert_eq!(dnf.0.len(), 1);
        let c = &dnf.0[0];
        assert_eq!(c.constraints().len(), 2);
        assert_eq!(c.get(Field::IpProto), Some(&FieldSet::single(6)));
        assert_eq!(c.get(Field::TcpDst), Some(&FieldSet::single(80)));
    }

    #[test]
    fn single_negation_is_cofinite() {
        let dnf = to_dnf(&parse_predicate("!(tcp.dst = 80)").unwrap());
        assert_eq!(dnf.0.len(), 1);
        assert_eq!(dnf.0[0].get(Field::TcpDst), Some(&FieldSet::Excluded([80].into())));
    }

    #[test]
    fn counts_partition_the_universe() {
        let p = parse_predicate("tcp.dst = 80").unwrap();
        let pos = count(&to_dnf(&p));
        let neg = count(&to_dnf(&p.clone().negate()));
        assert_eq!(pos + neg, universe_size());
    }

    #[test]
    fn subtract_yields_disjoint_pieces() {
        let c = Conjunct::top();
        let d = Conjunct::atom(Field::TcpDst, FieldSet::single(80))
            .unwrap()
            .with(Field::EthSrc, FieldSet::single(1))
            .unwrap();
        let pieces = subtract(&c, &d);
        for (i, a) in pieces.iter().enumerate() {
            for b in &pieces[i + 1..] {
                assert!(a.intersect(b).is_none());
            }
        }
        let total: BigUint = pieces.iter().map(count_conjunct).sum::<BigUint>() + count_conjunct(&d);
        assert_eq!(total, universe_size());
    }
}
