//! Text form of device programs.
//!
//! * `<device>.flows`: one rule per line, `priority<TAB>match<TAB>actions`,
//!   for every switch and middlebox.
//! * `<host>.filters`: `direction<TAB>predicate<TAB>actions` for every host.
//! * `queues.conf`: `device<TAB>port<TAB>queue<TAB>min_bytes_per_s<TAB>statement`.
//! * `middlebox.manifest`: `device<TAB>function`.
//!
//! Lines starting with `#` are comments. Output is byte-for-byte
//! deterministic for a given set of programs.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::*;
use crate::policy::parser::parse_predicate;
use crate::policy::print_predicate;
use crate::topology::Topology;

pub const QUEUES_FILE: &str = "queues.conf";
pub const MANIFEST_FILE: &str = "middlebox.manifest";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{file}:{line}: {message}")]
pub struct EmitError {
    pub file: String,
    pub line: usize,
    pub message: String,
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

pub fn render_flows(program: &DeviceProgram) -> String {
    let mut out = format!("# flow table for {}\n# priority\tmatch\tactions\n", program.device);
    for r in &program.rules {
        out.push_str(&format!("{}\t{}\t{}\n", r.priority, r.matches, join(&r.actions)));
    }
    out
}

pub fn render_filters(program: &DeviceProgram) -> String {
    let mut out = format!("# host filters for {}\n# direction\tpredicate\tactions\n", program.device);
    for f in &program.filters {
        out.push_str(&format!("{}\t{}\t{}\n", f.direction, print_predicate(&f.predicate), join(&f.actions)));
    }
    out
}

pub fn render_queues(programs: &Programs) -> String {
    let mut out = String::from("# device\tport\tqueue\tmin_bytes_per_s\tstatement\n");
    for (name, d) in &programs.devices {
        for q in &d.queues {
            out.push_str(&format!("{name}\t{}\t{}\t{}\t{}\n", q.port, q.queue, q.min_rate.0, q.statement));
        }
    }
    out
}

pub fn render_manifest(programs: &Programs) -> String {
    let mut out = String::from("# device\tfunction\n");
    for (device, function) in programs.manifest() {
        out.push_str(&format!("{device}\t{function}\n"));
    }
    out
}

/// Every output file, keyed by file name.
pub fn render(programs: &Programs) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();
    for (name, d) in &programs.devices {
        if d.kind == NodeKind::Host {
            files.insert(format!("{name}.filters"), render_filters(d));
        } else {
            files.insert(format!("{name}.flows"), render_flows(d));
        }
    }
    files.insert(QUEUES_FILE.to_string(), render_queues(programs));
    files.insert(MANIFEST_FILE.to_string(), render_manifest(programs));
    files
}

fn fields<'a, const N: usize>(line: &'a str, err: &impl Fn(String) -> EmitError) -> Result<[&'a str; N], EmitError> {
    let parts: Vec<&str> = line.split('\t').collect();
    parts
        .try_into()
        .map_err(|p: Vec<&str>| err(format!("expected {N} tab-separated fields, found {}", p.len())))
}

fn number<T: std::str::FromStr>(text: &str, err: &impl Fn(String) -> EmitError) -> Result<T, EmitError> {
    text.parse().map_err(|_| err(format!("bad number `{text}`")))
}

fn parse_match(text: &str, err: &impl Fn(String) -> EmitError) -> Result<FlowMatch, EmitError> {
    let mut m = FlowMatch {
        in_port: None,
        tag: None,
        header: Conjunct::top(),
    };
    let mut rest = text;
    if let Some(r) = rest.strip_prefix("in_port=") {
        let (v, tail) = r.split_once(',').unwrap_or((r, ""));
        m.in_port = Some(number(v, err)?);
        rest = tail;
    }
    if let Some(r) = rest.strip_prefix("tag=") {
        let (v, tail) = r.split_once(',').unwrap_or((r, ""));
        m.tag = Some(number(v, err)?);
        rest = tail;
    }
    if !rest.is_empty() {
        m.header = rest.parse().map_err(|e: crate::predicate::ParseConjunctError| err(e.to_string()))?;
    }
    Ok(m)
}

fn parse_flow_action(text: &str, err: &impl Fn(String) -> EmitError) -> Result<FlowAction, EmitError> {
    let (name, arg) = text.split_once(':').unwrap_or((text, ""));
    Ok(match name {
        "apply" if !arg.is_empty() => FlowAction::Apply(arg.to_string()),
        "push_tag" => FlowAction::PushTag(number(arg, err)?),
        "set_tag" => FlowAction::SetTag(number(arg, err)?),
        "pop_tag" => FlowAction::PopTag,
        "output" => FlowAction::Output(number(arg, err)?),
        "enqueue" => {
            let (p, q) = arg.split_once(':').ok_or_else(|| err(format!("bad action `{text}`")))?;
            FlowAction::Enqueue {
                port: number(p, err)?,
                queue: number(q, err)?,
            }
        }
        "resubmit" => FlowAction::Resubmit,
        _ => return Err(err(format!("unknown action `{text}`"))),
    })
}

fn parse_filter_action(text: &str, err: &impl Fn(String) -> EmitError) -> Result<FilterAction, EmitError> {
    let (name, arg) = text.split_once(':').unwrap_or((text, ""));
    Ok(match name {
        "drop" => FilterAction::Drop,
        "rate-limit" => FilterAction::RateLimit(Rate(number(arg, err)?)),
        "apply" if !arg.is_empty() => FilterAction::Apply(arg.to_string()),
        "stay" => FilterAction::Stay,
        "output" => FilterAction::Output(number(arg, err)?),
        _ => return Err(err(format!("unknown action `{text}`"))),
    })
}

pub fn parse_flows(file: &str, text: &str) -> Result<Vec<FlowRule>, EmitError> {
    let mut rules = Vec::new();
    for (n, line) in lines(text) {
        let err = |message: String| EmitError {
            file: file.to_string(),
            line: n,
            message,
        };
        let [prio, m, acts] = fields(line, &err)?;
        rules.push(FlowRule {
            priority: number(prio, &err)?,
            matches: parse_match(m, &err)?,
            actions: acts.split(',').map(|a| parse_flow_action(a, &err)).collect::<Result<_, _>>()?,
        });
    }
    Ok(rules)
}

pub fn parse_filters(file: &str, text: &str) -> Result<Vec<HostFilter>, EmitError> {
    let mut filters = Vec::new();
    for (n, line) in lines(text) {
        let err = |message: String| EmitError {
            file: file.to_string(),
            line: n,
            message,
        };
        let [dir, pred, acts] = fields(line, &err)?;
        let direction = match dir {
            "out" => Direction::Out,
            "in" => Direction::In,
            _ => return Err(err(format!("unknown direction `{dir}`"))),
        };
        filters.push(HostFilter {
            direction,
            predicate: parse_predicate(pred).map_err(|e| err(e.to_string()))?,
            actions: acts.split(',').map(|a| parse_filter_action(a, &err)).collect::<Result<_, _>>()?,
        });
    }
    Ok(filters)
}

pub fn parse_queues(text: &str) -> Result<Vec<(String, QueueConfig)>, EmitError> {
    let mut out = Vec::new();
    for (n, line) in lines(text) {
        let err = |message: String| EmitError {
            file: QUEUES_FILE.to_string(),
            line: n,
            message,
        };
        let [device, port, queue, rate, statement] = fields(line, &err)?;
        out.push((
            device.to_string(),
            QueueConfig {
                port: number(port, &err)?,
                queue: number(queue, &err)?,
                min_rate: Rate(number(rate, &err)?),
                statement: statement.to_string(),
            },
        ));
    }
    Ok(out)
}

pub fn parse_manifest(text: &str) -> Result<BTreeSet<(String, String)>, EmitError> {
    let mut out = BTreeSet::new();
    for (n, line) in lines(text) {
        let err = |message: String| EmitError {
            file: MANIFEST_FILE.to_string(),
            line: n,
            message,
        };
        let [device, function] = fields(line, &err)?;
        out.insert((device.to_string(), function.to_string()));
    }
    Ok(out)
}

/// Reads programs back from rendered files. Tag assignments are not part of
/// the text and come back empty.
pub fn parse_programs(files: &BTreeMap<String, String>, topo: &Topology) -> Result<Programs, EmitError> {
    let missing = |file: String| EmitError {
        file,
        line: 0,
        message: "file missing".into(),
    };
    let mut queues: BTreeMap<String, Vec<QueueConfig>> = BTreeMap::new();
    let qtext = files.get(QUEUES_FILE).ok_or_else(|| missing(QUEUES_FILE.into()))?;
    for (device, q) in parse_queues(qtext)? {
        queues.entry(device).or_default().push(q);
    }
    let mut devices = BTreeMap::new();
    for node in topo.nodes() {
        let mut program = DeviceProgram {
            device: node.id.clone(),
            kind: node.kind,
            rules: Vec::new(),
            filters: Vec::new(),
            queues: queues.remove(&node.id).unwrap_or_default(),
        };
        if node.is_host() {
            let file = format!("{}.filters", node.id);
            let text = files.get(&file).ok_or_else(|| missing(file.clone()))?;
            program.filters = parse_filters(&file, text)?;
        } else {
            let file = format!("{}.flows", node.id);
            let text = files.get(&file).ok_or_else(|| missing(file.clone()))?;
            program.rules = parse_flows(&file, text)?;
        }
        devices.insert(node.id.clone(), program);
    }
    if let Some(device) = queues.into_keys().next() {
        return Err(EmitError {
            file: QUEUES_FILE.into(),
            line: 0,
            message: format!("unknown device `{device}`"),
        });
    }
    Ok(Programs {
        devices,
        tags: TagAssignment::default(),
    })
}
