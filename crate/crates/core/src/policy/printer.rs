//! Concrete syntax printer. Output re-parses to the same tree.

use super::ast::*;

pub fn print_policy(policy: &Policy) -> String {
    let mut out = String::from("[");
    for (i, s) in policy.statements.iter().enumerate() {
        out.push_str(if i == 0 { " " } else { ";\n  " });
        out.push_str(&format!(
            "{} : {} -> {}",
            s.id,
            print_predicate(&s.predicate),
            print_path(&s.path)
        ));
    }
    out.push_str(" ]");
    if policy.formula != Formula::True {
        out.push_str(",\n");
        out.push_str(&print_formula(&policy.formula));
    }
    out.push('\n');
    out
}

pub fn print_predicate(p: &Predicate) -> String {
    pred(p, 0)
}

/// Precedence levels: or = 0, and = 1, prefix negation = 2.
fn pred(p: &Predicate, ctx: u8) -> String {
    let (prec, text) = match p {
        Predicate::True => (3, "true".to_string()),
        Predicate::False => (3, "false".to_string()),
        Predicate::Eq(f, v) => (3, format!("{} = {}", f.name(), f.format_value(*v))),
        Predicate::Payload(s) => (3, format!("payload = \"{s}\"")),
        Predicate::Not(inner) => match inner.as_ref() {
            Predicate::Eq(f, v) => (3, format!("{} != {}", f.name(), f.format_value(*v))),
            other => (2, format!("!{}", pred(other, 3))),
        },
        Predicate::And(a, b) => (1, format!("{} and {}", pred(a, 1), pred(b, 2))),
        Predicate::Or(a, b) => (0, format!("{} or {}", pred(a, 0), pred(b, 1))),
    };
    if prec < ctx {
        format!("({text})")
    } else {
        text
    }
}

pub fn print_path(p: &PathExpr) -> String {
    path(p, 0)
}

/// Precedence levels: alternation = 0, sequence = 1, prefix `!` = 2,
/// postfix `*` = 3.
fn path(p: &PathExpr, ctx: u8) -> String {
    let (prec, text) = match p {
        PathExpr::Dot => (4, ".".to_string()),
        PathExpr::Symbol(s) => (4, s.clone()),
        PathExpr::Alt(items) => (
            0,
            items.iter().map(|i| path(i, 1)).collect::<Vec<_>>().join(" | "),
        ),
        PathExpr::Seq(items) => (
            1,
            items.iter().map(|i| path(i, 2)).collect::<Vec<_>>().join(" "),
        ),
        PathExpr::Not(a) => (2, format!("!{}", path(a, 2))),
        PathExpr::Star(a) => (3, format!("{}*", path(a, 4))),
    };
    if prec < ctx {
        format!("({text})")
    } else {
        text
    }
}

pub fn print_formula(f: &Formula) -> String {
    formula(f, 0)
}

fn term(t: &Term) -> String {
    let mut parts: Vec<String> = t.ids.clone();
    if t.constant.0 > 0 || parts.is_empty() {
        parts.push(t.constant.to_string());
    }
    parts.join(" + ")
}

fn formula(f: &Formula, ctx: u8) -> String {
    let (prec, text) = match f {
        Formula::True => (3, "true".to_string()),
        Formula::Max(t, r) => (3, format!("max({}, {})", term(t), r)),
        Formula::Min(t, r) => (3, format!("min({}, {})", term(t), r)),
        Formula::Not(a) => (2, format!("!{}", formula(a, 3))),
        Formula::And(a, b) => (1, format!("{} and {}", formula(a, 1), formula(b, 2))),
        Formula::Or(a, b) => (0, format!("{} or {}", formula(a, 0), formula(b, 1))),
    };
    if prec < ctx {
        format!("({text})")
    } else {
        text
    }
}
