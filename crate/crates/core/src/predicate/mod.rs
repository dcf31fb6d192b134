//! Decision procedures over header predicates.
//!
//! Atoms are equalities, so every conjunction normalizes to one finite or
//! co-finite value set per field. Transport fields only exist on packets of
//! the matching IP protocol: `tcp.dst = 80` implies `ip.proto = 6`, while
//! `tcp.dst != 80` also holds for every non-TCP packet.
//!
//! Functions in this module require predicates without payload atoms and
//! panic otherwise; `normalize` rejects payload atoms before they get here.

mod dnf;
mod ops;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::policy::ast::{Field, Predicate, PROTO_TCP, PROTO_UDP};

pub use dnf::{count, count_conjunct, disjointize, subtract, to_dnf, universe_size};
pub use ops::{
    covers_partition, disjoint, equivalent, find_overlaps, implies, intersect, overlap_witness,
    satisfiable, Overlap,
};

/// Values a single field may take within a conjunct.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldSet {
    Allowed(BTreeSet<u64>),
    Excluded(BTreeSet<u64>),
}

impl FieldSet {
    pub fn single(v: u64) -> FieldSet {
        FieldSet::Allowed(BTreeSet::from([v]))
    }

    pub fn contains(&self, v: u64) -> bool {
        match self {
            FieldSet::Allowed(s) => s.contains(&v),
            FieldSet::Excluded(s) => !s.contains(&v),
        }
    }

    pub fn intersect(&self, other: &FieldSet) -> FieldSet {
        use FieldSet::*;
        match (self, other) {
            (Allowed(a), Allowed(b)) => Allowed(a.intersection(b).copied().collect()),
            (Allowed(a), Excluded(e)) | (Excluded(e), Allowed(a)) => {
                Allowed(a.difference(e).copied().collect())
            }
            (Excluded(a), Excluded(b)) => Excluded(a.union(b).copied().collect()),
        }
    }

    pub fn complement(&self) -> FieldSet {
        match self {
            FieldSet::Allowed(s) => FieldSet::Excluded(s.clone()),
            FieldSet::Excluded(s) => FieldSet::Allowed(s.clone()),
        }
    }

    /// Number of values of a field with `domain` values that lie in the set.
    pub fn cardinality(&self, domain: u128) -> u128 {
        match self {
            FieldSet::Allowed(s) => s.len() as u128,
            FieldSet::Excluded(s) => domain - s.len() as u128,
        }
    }

    /// Smallest member within `0..=max`.
    pub fn min_member(&self, max: u64) -> Option<u64> {
        match self {
            FieldSet::Allowed(s) => s.iter().next().copied(),
            FieldSet::Excluded(s) => {
                let mut candidate = 0u64;
                for &v in s {
                    if v == candidate {
                        candidate += 1;
                    } else if v > candidate {
                        break;
                    }
                }
                (candidate <= max).then_some(candidate)
            }
        }
    }
}

/// Conjunction of per-field constraints. Fields not in the map are
/// unconstrained. A conjunct built through the public constructors is always
/// satisfiable.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Conjunct {
    constraints: BTreeMap<Field, FieldSet>,
}

impl Conjunct {
    /// The conjunct satisfied by every packet.
    pub fn top() -> Conjunct {
        Conjunct::default()
    }

    pub fn atom(field: Field, set: FieldSet) -> Option<Conjunct> {
        Conjunct::top().with(field, set)
    }

    pub fn constraints(&self) -> &BTreeMap<Field, FieldSet> {
        &self.constraints
    }

    pub fn get(&self, field: Field) -> Option<&FieldSet> {
        self.constraints.get(&field)
    }

    pub fn is_top(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Adds a constraint, returning `None` when the result is unsatisfiable.
    pub fn with(mut self, field: Field, set: FieldSet) -> Option<Conjunct> {
        let merged = match self.constraints.remove(&field) {
            Some(existing) => existing.intersect(&set),
            None => set,
        };
        self.constraints.insert(field, merged);
        self.normalized()
    }

    pub fn intersect(&self, other: &Conjunct) -> Option<Conjunct> {
        let mut out = self.clone();
        for (field, set) in &other.constraints {
            let merged = match out.constraints.remove(field) {
                Some(existing) => existing.intersect(set),
                None => set.clone(),
            };
            out.constraints.insert(*field, merged);
        }
        out.normalized()
    }

    fn normalized(mut self) -> Option<Conjunct> {
        let mut proto_forced: Option<FieldSet> = None;
        let mut force = |set: FieldSet| {
            proto_forced = Some(match proto_forced.take() {
                Some(p) => p.intersect(&set),
                None => set,
            });
        };
        let fields: Vec<Field> = self.constraints.keys().copied().collect();
        for field in fields {
            let domain = field.domain_size();
            let set = self.constraints[&field].clone();
            let full_exclusion = matches!(&set, FieldSet::Excluded(s) if s.len() as u128 == domain);
            match (field.required_proto(), &set) {
                (_, FieldSet::Allowed(s)) if s.is_empty() => return None,
                (_, FieldSet::Excluded(s)) if s.is_empty() => {
                    self.constraints.remove(&field);
                }
                (None, _) if full_exclusion => return None,
                (Some(proto), _) if full_exclusion => {
                    // The field cannot take any value, so the packet must not carry it.
                    self.constraints.remove(&field);
                    force(FieldSet::Excluded(BTreeSet::from([proto])));
                }
                (Some(proto), FieldSet::Allowed(_)) => force(FieldSet::single(proto)),
                _ => {}
            }
        }
        if let Some(forced) = proto_forced {
            let merged = match self.constraints.remove(&Field::IpProto) {
                Some(existing) => existing.intersect(&forced),
                None => forced,
            };
            self.constraints.insert(Field::IpProto, merged);
        }
        if let Some(proto) = self.constraints.get(&Field::IpProto) {
            if proto.cardinality(Field::IpProto.domain_size()) == 0 {
                return None;
            }
            if matches!(proto, FieldSet::Excluded(s) if s.is_empty()) {
                self.constraints.remove(&Field::IpProto);
            }
        }
        // Exclusions on transport fields are vacuous when the protocol rules
        // the field out.
        let proto = self.constraints.get(&Field::IpProto).cloned();
        if let Some(proto) = proto {
            self.constraints.retain(|field, set| match field.required_proto() {
                Some(req) => proto.contains(req) || matches!(set, FieldSet::Allowed(_)),
                None => true,
            });
            for (field, set) in &self.constraints {
                if let (Some(req), FieldSet::Allowed(_)) = (field.required_proto(), set) {
                    if !proto.contains(req) {
                        return None;
                    }
                }
            }
        }
        Some(self)
    }

    pub fn matches(&self, packet: &Packet) -> bool {
        self.constraints.iter().all(|(field, set)| match packet.get(*field) {
            Some(v) => set.contains(v),
            None => matches!(set, FieldSet::Excluded(_)),
        })
    }

    /// Smallest packet (field by field) satisfying the conjunct.
    pub fn witness(&self) -> Packet {
        let pick = |field: Field| -> u64 {
            self.constraints
                .get(&field)
                .and_then(|s| s.min_member(field.max_value()))
                .unwrap_or(0)
        };
        let mut values = BTreeMap::new();
        for field in Field::ALL {
            if field.required_proto().is_none() {
                values.insert(field, pick(field));
            }
        }
        let proto = values[&Field::IpProto];
        for field in Field::ALL {
            if field.required_proto() == Some(proto) {
                values.insert(field, pick(field));
            }
        }
        Packet { values }
    }

    pub fn to_predicate(&self) -> Predicate {
        let mut parts = Vec::new();
        for (field, set) in &self.constraints {
            match set {
                FieldSet::Allowed(s) => {
                    parts.push(Predicate::any(s.iter().map(|v| Predicate::Eq(*field, *v))))
                }
                FieldSet::Excluded(s) => {
                    parts.extend(s.iter().map(|v| Predicate::Eq(*field, *v).negate()))
                }
            }
        }
        Predicate::all(parts)
    }
}

impl fmt::Display for Conjunct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.constraints.is_empty() {
            return f.write_str("*");
        }
        let mut first = true;
        for (field, set) in &self.constraints {
            let (op, values) = match set {
                FieldSet::Allowed(s) => ("=", s),
                FieldSet::Excluded(s) => ("!=", s),
            };
            let rendered: Vec<String> = values.iter().map(|v| field.format_value(*v)).collect();
            if !first {
                f.write_str(",")?;
            }
            first = false;
            write!(f, "{}{}{}", field.name(), op, rendered.join("|"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("malformed match `{0}`")]
pub struct ParseConjunctError(pub String);

/// Parses the `Display` form back. Unsatisfiable text is an error.
impl std::str::FromStr for Conjunct {
    type Err = ParseConjunctError;

    fn from_str(text: &str) -> Result<Conjunct, ParseConjunctError> {
        let err = || ParseConjunctError(text.to_string());
        let mut c = Conjunct::top();
        if text == "*" {
            return Ok(c);
        }
        for part in text.split(',') {
            let (name, negated, values) = match part.split_once("!=") {
                Some((n, v)) => (n, true, v),
                None => {
                    let (n, v) = part.split_once('=').ok_or_else(err)?;
                    (n, false, v)
                }
            };
            let field = Field::from_name(name).ok_or_else(err)?;
            let values = values
                .split('|')
                .map(|v| field.parse_value(v))
                .collect::<Option<BTreeSet<u64>>>()
                .ok_or_else(err)?;
            let set = if negated {
                FieldSet::Excluded(values)
            } else {
                FieldSet::Allowed(values)
            };
            c = c.with(field, set).ok_or_else(err)?;
        }
        Ok(c)
    }
}

/// Disjunction of satisfiable conjuncts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Dnf(pub Vec<Conjunct>);

impl Dnf {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn conjuncts(&self) -> &[Conjunct] {
        &self.0
    }

    pub fn matches(&self, packet: &Packet) -> bool {
        self.0.iter().any(|c| c.matches(packet))
    }
}

/// Concrete packet header. Transport fields are present only when the IP
/// protocol carries them.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Packet {
    values: BTreeMap<Field, u64>,
}

impl Default for Packet {
    fn default() -> Packet {
        Packet::new()
    }
}

impl Packet {
    /// All-zero packet with no transport header.
    pub fn new() -> Packet {
        let values = Field::ALL
            .into_iter()
            .filter(|f| f.required_proto().is_none())
            .map(|f| (f, 0))
            .collect();
        Packet { values }
    }

    pub fn get(&self, field: Field) -> Option<u64> {
        self.values.get(&field).copied()
    }

    /// Sets a field. Setting `ip.proto` adds or drops transport fields to
    /// match; setting a transport field also sets `ip.proto`.
    pub fn set(&mut self, field: Field, value: u64) -> &mut Packet {
        if let Some(proto) = field.required_proto() {
            if self.values.get(&Field::IpProto) != Some(&proto) {
                self.set(Field::IpProto, proto);
            }
        }
        if field == Field::IpProto {
            self.values.retain(|f, _| f.required_proto().is_none());
            for f in Field::ALL {
                if f.required_proto() == Some(value) {
                    self.values.insert(f, 0);
                }
            }
        }
        self.values.insert(field, value);
        self
    }

    pub fn with(mut self, field: Field, value: u64) -> Packet {
        self.set(field, value);
        self
    }

    pub fn fields(&self) -> impl Iterator<Item = (Field, u64)> + '_ {
        self.values.iter().map(|(f, v)| (*f, *v))
    }

    pub fn is_tcp(&self) -> bool {
        self.get(Field::IpProto) == Some(PROTO_TCP)
    }

    pub fn is_udp(&self) -> bool {
        self.get(Field::IpProto) == Some(PROTO_UDP)
    }
}

impl fmt::Display for Packet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .values
            .iter()
            .map(|(field, v)| format!("{}={}", field.name(), field.format_value(*v)))
            .collect();
        f.write_str(&parts.join(" "))
    }
}

/// Evaluates a predicate on a concrete packet.
pub fn eval(p: &Predicate, packet: &Packet) -> bool {
    match p {
        Predicate::True => true,
        Predicate::False => false,
        Predicate::Eq(field, v) => packet.get(*field) == Some(*v),
        Predicate::Payload(_) => panic!("payload predicates have no header semantics"),
        Predicate::And(a, b) => eval(a, packet) && eval(b, packet),
        Predicate::Or(a, b) => eval(a, packet) || eval(b, packet),
        Predicate::Not(a) => !eval(a, packet),
    }
}
