use std::fmt;

use crate::rate::Rate;

/// Identifier given to the statement synthesized by normalization to make a
/// policy total.
pub const CATCH_ALL_ID: &str = "_default";

/// Packet header fields understood by the predicate language.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    EthSrc,
    EthDst,
    EthTyp,
    IpSrc,
    IpDst,
    IpProto,
    TcpSrc,
    TcpDst,
    UdpSrc,
    UdpDst,
}

pub const PROTO_TCP: u64 = 6;
pub const PROTO_UDP: u64 = 17;

impl Field {
    pub const ALL: [Field; 10] = [
        Field::EthSrc,
        Field::EthDst,
        Field::EthTyp,
        Field::IpSrc,
        Field::IpDst,
        Field::IpProto,
        Field::TcpSrc,
        Field::TcpDst,
        Field::UdpSrc,
        Field::UdpDst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::EthSrc => "eth.src",
            Field::EthDst => "eth.dst",
            Field::EthTyp => "eth.typ",
            Field::IpSrc => "ip.src",
            Field::IpDst => "ip.dst",
            Field::IpProto => "ip.proto",
            Field::TcpSrc => "tcp.src",
            Field::TcpDst => "tcp.dst",
            Field::UdpSrc => "udp.src",
            Field::UdpDst => "udp.dst",
        }
    }

    pub fn from_name(name: &str) -> Option<Field> {
        let canonical = match name {
            "ethSrc" => "eth.src",
            "ethDst" => "eth.dst",
            "ethTyp" | "ethType" | "eth.type" => "eth.typ",
            "ipSrc" => "ip.src",
            "ipDst" => "ip.dst",
            "ipProto" => "ip.proto",
            "tcpSrc" => "tcp.src",
            "tcpDst" => "tcp.dst",
            "udpSrc" => "udp.src",
            "udpDst" => "udp.dst",
            other => other,
        };
        Field::ALL.into_iter().find(|f| f.name() == canonical)
    }

    pub fn bits(self) -> u32 {
        match self {
            Field::EthSrc | Field::EthDst => 48,
            Field::EthTyp => 16,
            Field::IpSrc | Field::IpDst => 32,
            Field::IpProto => 8,
            Field::TcpSrc | Field::TcpDst | Field::UdpSrc | Field::UdpDst => 16,
        }
    }

    /// Number of distinct values the field can take.
    pub fn domain_size(self) -> u128 {
        1u128 << self.bits()
    }

    pub fn max_value(self) -> u64 {
        ((1u128 << self.bits()) - 1) as u64
    }

    /// Transport fields only exist on packets of the matching IP protocol.
    pub fn required_proto(self) -> Option<u64> {
        match self {
            Field::TcpSrc | Field::TcpDst => Some(PROTO_TCP),
            Field::UdpSrc | Field::UdpDst => Some(PROTO_UDP),
            _ => None,
        }
    }

    pub fn parse_value(self, text: &str) -> Option<u64> {
        let value = match self {
            Field::EthSrc | Field::EthDst => parse_mac(text).or_else(|| parse_number(text))?,
            Field::IpSrc | Field::IpDst => parse_ipv4(text).or_else(|| parse_number(text))?,
            Field::IpProto => match text {
                "tcp" => PROTO_TCP,
                "udp" => PROTO_UDP,
                "icmp" => 1,
                _ => parse_number(text)?,
            },
            Field::EthTyp => match text {
                "ip" | "ipv4" => 0x0800,
                "arp" => 0x0806,
                _ => parse_number(text)?,
            },
            _ => parse_number(text)?,
        };
        (value <= self.max_value()).then_some(value)
    }

    pub fn format_value(self, value: u64) -> String {
        match self {
            Field::EthSrc | Field::EthDst => format_mac(value),
            Field::IpSrc | Field::IpDst => format_ipv4(value),
            _ => value.to_string(),
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn parse_number(text: &str) -> Option<u64> {
    if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()
    } else {
        text.parse().ok()
    }
}

pub fn parse_mac(text: &str) -> Option<u64> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 6 {
        return None;
    }
    parts.iter().try_fold(0u64, |acc, p| {
        if p.is_empty() || p.len() > 2 {
            return None;
        }
        u8::from_str_radix(p, 16).ok().map(|b| (acc << 8) | u64::from(b))
    })
}

pub fn format_mac(value: u64) -> String {
    (0..6)
        .rev()
        .map(|i| format!("{:02x}", (value >> (8 * i)) & 0xff))
        .collect::<Vec<_>>()
        .join(":")
}

pub fn parse_ipv4(text: &str) -> Option<u64> {
    let parts: Vec<&str> = text.split('.').collect();
    if parts.len() != 4 {
        return None;
    }
    parts
        .iter()
        .try_fold(0u64, |acc, p| p.parse::<u8>().ok().map(|b| (acc << 8) | u64::from(b)))
}

pub fn format_ipv4(value: u64) -> String {
    (0..4)
        .rev()
        .map(|i| ((value >> (8 * i)) & 0xff).to_string())
        .collect::<Vec<_>>()
        .join(".")
}

/// Boolean formula over header fields.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Predicate {
    True,
    False,
    Eq(Field, u64),
    /// Payload match atom. Parsed but not supported by any analysis.
    Payload(String),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn eq(field: Field, value: u64) -> Predicate {
        Predicate::Eq(field, value)
    }

    pub fn and(self, other: Predicate) -> Predicate {
        Predicate::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Predicate) -> Predicate {
        Predicate::Or(Box::new(self), Box::new(other))
    }

    pub fn negate(self) -> Predicate {
        Predicate::Not(Box::new(self))
    }

    /// Conjunction of all predicates (`true` when empty).
    pub fn all(preds: impl IntoIterator<Item = Predicate>) -> Predicate {
        preds
            .into_iter()
            .reduce(Predicate::and)
            .unwrap_or(Predicate::True)
    }

    /// Disjunction of all predicates (`false` when empty).
    pub fn any(preds: impl IntoIterator<Item = Predicate>) -> Predicate {
        preds
            .into_iter()
            .reduce(Predicate::or)
            .unwrap_or(Predicate::False)
    }

    pub fn mentions_payload(&self) -> bool {
        match self {
            Predicate::Payload(_) => true,
            Predicate::And(a, b) | Predicate::Or(a, b) => a.mentions_payload() || b.mentions_payload(),
            Predicate::Not(a) => a.mentions_payload(),
            _ => false,
        }
    }
}

/// Regular expression over locations and packet-function names.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathExpr {
    Dot,
    Symbol(String),
    Seq(Vec<PathExpr>),
    Alt(Vec<PathExpr>),
    Star(Box<PathExpr>),
    Not(Box<PathExpr>),
}

impl PathExpr {
    pub fn sym(name: impl Into<String>) -> PathExpr {
        PathExpr::Symbol(name.into())
    }

    /// `.*`
    pub fn any_path() -> PathExpr {
        PathExpr::Star(Box::new(PathExpr::Dot))
    }

    pub fn star(self) -> PathExpr {
        PathExpr::Star(Box::new(self))
    }

    pub fn complement(self) -> PathExpr {
        PathExpr::Not(Box::new(self))
    }

    /// Language intersection expressed with complement and union.
    pub fn intersect(self, other: PathExpr) -> PathExpr {
        PathExpr::Alt(vec![self.complement(), other.complement()]).complement()
    }

    /// Number of nodes in the expression tree.
    pub fn size(&self) -> usize {
        match self {
            PathExpr::Dot | PathExpr::Symbol(_) => 1,
            PathExpr::Seq(items) | PathExpr::Alt(items) => {
                1 + items.iter().map(PathExpr::size).sum::<usize>()
            }
            PathExpr::Star(a) | PathExpr::Not(a) => 1 + a.size(),
        }
    }

    pub fn symbols(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_symbols(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_symbols<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            PathExpr::Dot => {}
            PathExpr::Symbol(s) => out.push(s),
            PathExpr::Seq(items) | PathExpr::Alt(items) => {
                items.iter().for_each(|i| i.collect_symbols(out))
            }
            PathExpr::Star(a) | PathExpr::Not(a) => a.collect_symbols(out),
        }
    }
}

/// Sum of statement identifiers plus a constant.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    pub ids: Vec<String>,
    pub constant: Rate,
}

impl Term {
    pub fn of(ids: &[&str]) -> Term {
        Term {
            ids: ids.iter().map(|s| s.to_string()).collect(),
            constant: Rate::ZERO,
        }
    }
}

/// Bandwidth formula: caps (`max`) and guarantees (`min`) combined with
/// boolean connectives.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    Max(Term, Rate),
    Min(Term, Rate),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Not(Box<Formula>),
}

impl Formula {
    pub fn and(self, other: Formula) -> Formula {
        match (self, other) {
            (Formula::True, f) | (f, Formula::True) => f,
            (a, b) => Formula::And(Box::new(a), Box::new(b)),
        }
    }

    pub fn all(items: impl IntoIterator<Item = Formula>) -> Formula {
        items.into_iter().fold(Formula::True, Formula::and)
    }

    /// Flattens a conjunction into its atoms. Returns `None` when the formula
    /// contains disjunction or negation.
    pub fn conjuncts(&self) -> Option<Vec<&Formula>> {
        let mut out = Vec::new();
        fn walk<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) -> bool {
            match f {
                Formula::True => true,
                Formula::Max(..) | Formula::Min(..) => {
                    out.push(f);
                    true
                }
                Formula::And(a, b) => walk(a, out) && walk(b, out),
                Formula::Or(..) | Formula::Not(..) => false,
            }
        }
        walk(self, &mut out).then_some(out)
    }

    pub fn identifiers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        fn walk<'a>(f: &'a Formula, out: &mut Vec<&'a str>) {
            match f {
                Formula::True => {}
                Formula::Max(t, _) | Formula::Min(t, _) => out.extend(t.ids.iter().map(String::as_str)),
                Formula::And(a, b) | Formula::Or(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Formula::Not(a) => walk(a, out),
            }
        }
        walk(self, &mut out);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Statement {
    pub id: String,
    pub predicate: Predicate,
    pub path: PathExpr,
}

impl Statement {
    pub fn new(id: impl Into<String>, predicate: Predicate, path: PathExpr) -> Statement {
        Statement {
            id: id.into(),
            predicate,
            path,
        }
    }

    pub fn is_catch_all(&self) -> bool {
        self.id == CATCH_ALL_ID
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Policy {
    pub statements: Vec<Statement>,
    pub formula: Formula,
}

impl Policy {
    pub fn statement(&self, id: &str) -> Option<&Statement> {
        self.statements.iter().find(|s| s.id == id)
    }

    pub fn statement_index(&self, id: &str) -> Option<usize> {
        self.statements.iter().position(|s| s.id == id)
    }
}
