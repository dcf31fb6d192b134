use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use provlang::bench::{bench_topology, rows_to_csv};
use provlang::codegen::render;
use provlang::compile::{compile, session_hash, CompileError, CompileOptions};
use provlang::negotiator::{
    delegate, parse_demand_trace, verify_refinement, AimdParams, NegotiatorTree, Rejection, Scheme, Scope, Verdict,
};
use provlang::policy::{load, parser::parse_predicate, print_policy, Predicate};
use provlang::provision::{Objective, ProvisionError, SolveStatus};
use provlang::sim::{parse_demands, simulate};
use provlang::topology::{balanced_tree, fat_tree, from_graphml, linear, zoo_like, Topology};
use provlang::Rate;

#[derive(Parser)]
#[command(name = "provlang", version, about = "Compile, verify and simulate network provisioning policies")]
struct Cli {
    /// Report format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Shortest,
    MinmaxRatio,
    MinmaxReserved,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Objective {
        match o {
            ObjectiveArg::Shortest => Objective::WeightedShortest,
            ObjectiveArg::MinmaxRatio => Objective::MinMaxRatio,
            ObjectiveArg::MinmaxReserved => Objective::MinMaxReserved,
        }
    }
}

#[derive(clap::Args)]
struct CompileArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    topology: PathBuf,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Shortest)]
    objective: ObjectiveArg,
    /// Solver time limit in seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout_s: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a policy and write device configurations to a directory.
    Compile {
        #[command(flatten)]
        args: CompileArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check that a refined policy implies the original.
    Verify { original: PathBuf, refined: PathBuf },
    /// Project a policy onto a set of locations and/or traffic.
    Delegate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        topology: PathBuf,
        /// Comma-separated locations; every location when omitted.
        #[arg(long, value_delimiter = ',')]
        locations: Option<Vec<String>>,
        /// Predicate restricting the delegated traffic.
        #[arg(long, default_value = "true")]
        traffic: String,
        /// Write the sub-policy here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compile a policy, then simulate flow rates for a demand file.
    Simulate {
        #[command(flatten)]
        args: CompileArgs,
        /// CSV with `id,statement,src,dst,offered,start,stop`.
        #[arg(long)]
        demands: PathBuf,
        /// Write per-epoch rates as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run bandwidth adaptation over a demand trace.
    Negotiate {
        /// CSV with `time,flow,demand`.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        cap: Rate,
        #[arg(long, value_enum, default_value_t = SchemeArg::Aimd)]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 100)]
        steps: u64,
        #[arg(long, default_value = "1MB/s")]
        alpha: Rate,
        /// Multiplicative decrease as a fraction, e.g. `1/2`.
        #[arg(long, default_value = "1/2")]
        beta: String,
        /// Write the allocation log as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time all-pairs compiles over a suite of topologies.
    Bench {
        #[arg(long, value_enum)]
        suite: Suite,
        /// fat-tree: arities `4,6`; balanced-tree: `depth:fanout` pairs.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<String>,
        /// Directory of GraphML files for the zoo suite.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Number of host pairs that get a 1 MB/s guarantee.
        #[arg(long, default_value_t = 0)]
        guaranteed: usize,
        #[arg(long, default_value_t = 60.0)]
        timeout_s: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a GraphML graph into a topology document.
    ImportZoo {
        graphml: PathBuf,
        #[arg(long, default_value = "1GB/s")]
        capacity: Rate,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a topology document.
    GenTopo {
        #[command(subcommand)]
        kind: TopoKind,
        #[arg(long, global = true, default_value = "1GB/s")]
        capacity: Rate,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Aimd,
    Mmfs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Zoo,
    FatTree,
    BalancedTree,
}

#[derive(Subcommand)]
enum TopoKind {
    FatTree {
        #[arg(long)]
        k: usize,
    },
    BalancedTree {
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        fanout: usize,
    },
    Linear {
        #[arg(long)]
        switches: usize,
        #[arg(long, default_value_t = 1)]
        hosts_per_switch: usize,
    },
    ZooLike {
        #[arg(long)]
        switches: usize,
        #[arg(long, default_value_t = 0)]
        extra_links: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(code: u8, kind: &'static str, message: impl ToString) -> Failure {
        Failure {
            code,
            kind,
            message: message.to_string(),
        }
    }

    fn input(message: impl ToString) -> Failure {
        Failure::new(2, "invalid-input", message)
    }
}

impl From<CompileError> for Failure {
    fn from(e: CompileError) -> Failure {
        match &e {
            CompileError::Provision(ProvisionError::Infeasible | ProvisionError::NoPath(_)) => {
                Failure::new(3, "infeasible", e)
            }
            CompileError::Provision(ProvisionError::Timeout(_)) => Failure::new(4, "timeout", e),
            CompileError::Policy(_) => Failure::new(2, "policy", e),
            _ => Failure::new(2, "compile", e),
        }
    }
}

/// Success output: a JSON report and its text rendering.
struct Report {
    json: Value,
    text: String,
    code: u8,
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_topology(path: &Path) -> Result<(Topology, String), Failure> {
    let text = read(path)?;
    let topo = Topology::from_json(&text).map_err(|e| Failure::new(2, "topology", e))?;
    Ok((topo, text))
}

fn options(args: &CompileArgs) -> Result<CompileOptions, Failure> {
    if !(args.timeout_s.is_finite() && args.timeout_s > 0.0) {
        return Err(Failure::new(1, "usage", "--timeout-s must be a positive number"));
    }
    Ok(CompileOptions {
        objective: args.objective.into(),
        timeout: Duration::from_secs_f64(args.timeout_s),
        ..CompileOptions::default()
    })
}

fn cmd_compile(args: &CompileArgs, out: &Path) -> Result<Report, Failure> {
    let policy_text = read(&args.policy)?;
    let (topo, topo_text) = load_topology(&args.topology)?;
    let opts = options(args)?;
    let compiled = compile(&policy_text, &topo, &opts)?;
    let session = session_hash(policy_text.as_bytes(), topo_text.as_bytes(), &opts);
    let report = compiled.report(&topo, session);
    for (name, text) in render(&compiled.programs) {
        write(&out.join(name), &text)?;
    }
    let json = serde_json::to_value(&report).expect("reports serialize");
    write(
        &out.join("report.json"),
        &(serde_json::to_string_pretty(&json).expect("reports serialize") + "\n"),
    )?;
    let mut text = format!(
        "status {} ({} objective {})\n",
        report.status, report.objective, report.objective_value
    );
    for r in &report.routes {
        text.push_str(&format!("{} {} {}->{}: {}\n", r.kind, r.statement, r.src, r.dst, r.path.join(" ")));
    }
    text.push_str(&format!(
        "{} rules, {} filters, {} queues, {} tags written to {}\n",
        report.rules,
        report.filters,
        report.queues,
        report.tags,
        out.display()
    ));
    let code = if compiled.solution.status == SolveStatus::Timeout { 4 } else { 0 };
    Ok(Report { json, text, code })
}

fn reason(r: &Rejection) -> &'static str {
    match r {
        Rejection::PathNotIncluded { .. } => "path-not-included",
        Rejection::CapExceeded { .. } => "cap-exceeded",
        Rejection::GuaranteeNotImplied { .. } => "guarantee-not-implied",
        Rejection::Overlapping { .. } => "overlapping-statements",
        Rejection::NotPartition { .. } => "not-a-partition",
        Rejection::UnsupportedFormula => "unsupported-formula",
    }
}

fn cmd_verify(original: &Path, refined: &Path) -> Result<Report, Failure> {
    let load_file = |p: &Path| load(&read(p)?).map_err(|e| Failure::new(2, "policy", format!("{}: {e}", p.display())));
    let (o, r) = (load_file(original)?, load_file(refined)?);
    Ok(match verify_refinement(&o, &r) {
        Verdict::Accept => Report {
            json: json!({ "verdict": "accept" }),
            text: "accept\n".into(),
            code: 0,
        },
        Verdict::Reject(rej) => {
            let mut json = json!({ "verdict": "reject", "reason": reason(&rej), "message": rej.to_string() });
            if let Rejection::PathNotIncluded { counterexample, .. } = &rej {
                json["counterexample"] = json!(counterexample);
            }
            Report {
                json,
                text: format!("reject: {rej}\n"),
                code: 5,
            }
        }
    })
}

fn cmd_delegate(
    policy: &Path,
    topology: &Path,
    locations: Option<&[String]>,
    traffic: &str,
    out: Option<&Path>,
) -> Result<Report, Failure> {
    let parent = load(&read(policy)?).map_err(|e| Failure::new(2, "policy", e))?;
    let (topo, _) = load_topology(topology)?;
    let traffic: Predicate = parse_predicate(traffic).map_err(|e| Failure::new(2, "policy", e))?;
    let scope = Scope {
        locations: locations.map(|l| l.iter().cloned().collect::<BTreeSet<_>>()),
        traffic,
    };
    let d = delegate(&parent, &scope, &topo).map_err(|e| Failure::new(2, "delegate", e))?;
    let text = print_policy(&d.sub) + "\n";
    if let Some(out) = out {
        write(out, &text)?;
    }
    Ok(Report {
        json: json!({ "policy": text, "unsatisfiable": d.unsatisfiable }),
        text: if out.is_some() {
            format!("unsatisfiable statements: {}\n", d.unsatisfiable.join(", "))
        } else {
            text
        },
        code: 0,
    })
}

fn cmd_simulate(args: &CompileArgs, demands: &Path, out: Option<&Path>) -> Result<Report, Failure> {
    let (topo, _) = load_topology(&args.topology)?;
    let compiled = compile(&read(&args.policy)?, &topo, &options(args)?)?;
    let demands = parse_demands(&read(demands)?).map_err(|e| Failure::new(2, "demands", e))?;
    let result = simulate(&compiled.programs, &compiled.policy, &topo, &demands)
        .map_err(|e| Failure::new(2, "simulate", e))?;
    let csv = result.to_csv();
    if let Some(out) = out {
        write(out, &csv)?;
    }
    let violations: Vec<Value> = result
        .violations
        .iter()
        .map(|v| json!({ "epoch": v.epoch, "kind": format!("{:?}", v.kind), "subject": v.subject }))
        .collect();
    let mut text = if out.is_some() { String::new() } else { csv };
    for v in &result.violations {
        text.push_str(&format!("# violation at epoch {}: {:?} {}\n", v.epoch, v.kind, v.subject));
    }
    Ok(Report {
        json: json!({
            "epochs": result.epochs.len(),
            "violations": violations,
            "dropped": result.dropped,
        }),
        text,
        code: 0,
    })
}

fn parse_beta(text: &str) -> Result<num_rational::Ratio<u64>, Failure> {
    let bad = || Failure::new(1, "usage", format!("--beta `{text}` must be a fraction below one, like 1/2"));
    let (n, d) = text.split_once('/').ok_or_else(bad)?;
    let (n, d): (u64, u64) = (n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?);
    if d == 0 || n >= d {
        return Err(bad());
    }
    Ok(num_rational::Ratio::new(n, d))
}

fn cmd_negotiate(
    trace: &Path,
    cap: Rate,
    scheme: SchemeArg,
    steps: u64,
    params: AimdParams,
    out: Option<&Path>,
) -> Result<Report, Failure> {
    let samples = parse_demand_trace(&read(trace)?).map_err(|e| Failure::new(2, "trace", e))?;
    let scheme = match scheme {
        SchemeArg::Aimd => Scheme::Aimd(params),
        SchemeArg::Mmfs => Scheme::Mmfs,
    };
    let mut tree = NegotiatorTree::new("root", cap, scheme);
    let flows: BTreeSet<&str> = samples.iter().map(|s| s.flow.as_str()).collect();
    for f in flows {
        tree.add_flow(0, f);
    }
    let log = tree.run(&samples, steps);
    let csv = log.to_csv();
    if let Some(out) = out {
        write(out, &csv)?;
    }
    Ok(Report {
        json: json!({
            "steps": steps,
            "messages": log.messages.len(),
            "violations": log.violations.len(),
            "final": tree.flow_allocations,
        }),
        text: if out.is_some() { String::new() } else { csv },
        code: 0,
    })
}

fn cmd_bench(
    suite: Suite,
    sizes: &[String],
    dataset: Option<&Path>,
    guaranteed: usize,
    timeout_s: f64,
    out: Option<&Path>,
) -> Result<Report, Failure> {
    let capacity = Rate::mbps(1000);
    let mut topologies: Vec<(String, Topology)> = Vec::new();
    let bad_size = |s: &str| Failure::new(1, "usage", format!("bad size `{s}`"));
    match suite {
        Suite::Zoo => {
            let dir = dataset.ok_or_else(|| Failure::new(1, "usage", "the zoo suite needs --dataset"))?;
            let entries = fs::read_dir(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
            let mut files: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "graphml"))
                .collect();
            files.sort();
            for f in files {
                let topo = from_graphml(&read(&f)?, capacity).map_err(|e| Failure::new(2, "topology", e))?;
                let name = f.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
                topologies.push((name, topo));
            }
        }
        Suite::FatTree => {
            for s in sizes {
                let k: usize = s.parse().map_err(|_| bad_size(s))?;
                let topo = fat_tree(k, capacity).map_err(|e| Failure::new(1, "usage", e))?;
                topologies.push((format!("fat-tree-{k}"), topo));
            }
        }
        Suite::BalancedTree => {
            for s in sizes {
                let (d, f) = s.split_once(':').ok_or_else(|| bad_size(s))?;
                let (d, f): (usize, usize) = (d.parse().map_err(|_| bad_size(s))?, f.parse().map_err(|_| bad_size(s))?);
                let topo = balanced_tree(d, f, capacity).map_err(|e| Failure::new(1, "usage", e))?;
                topologies.push((format!("balanced-tree-{d}-{f}"), topo));
            }
        }
    }
    let timeout = Duration::from_secs_f64(timeout_s.max(0.001));
    let mut rows = Vec::new();
    for (name, topo) in &topologies {
        rows.push(bench_topology(name, topo, guaranteed, timeout)?);
    }
    let csv = rows_to_csv(&rows);
    if let Some(out) = out {
        write(out, &csv)?;
    }
    Ok(Report {
        json: serde_json::to_value(&rows).expect("rows serialize"),
        text: if out.is_some() { String::new() } else { csv },
        code: 0,
    })
}

fn emit_topology(topo: &Topology, out: Option<&Path>) -> Result<Report, Failure> {
    let text = topo.to_json();
    if let Some(out) = out {
        write(out, &text)?;
    }
    Ok(Report {
        json: json!({
            "nodes": topo.nodes().len(),
            "links": topo.links().len(),
            "hosts": topo.hosts().count(),
            "switches": topo.switches().count(),
        }),
        text: if out.is_some() { String::new() } else { text },
        code: 0,
    })
}

fn run(cli: &Cli) -> Result<Report, Failure> {
    match &cli.command {
        Command::Compile { args, out } => cmd_compile(args, out),
        Command::Verify { original, refined } => cmd_verify(original, refined),
        Command::Delegate {
            policy,
            topology,
            locations,
            traffic,
            out,
        } => cmd_delegate(policy, topology, locations.as_deref(), traffic, out.as_deref()),
        Command::Simulate { args, demands, out } => cmd_simulate(args, demands, out.as_deref()),
        Command::Negotiate {
            trace,
            cap,
            scheme,
            steps,
            alpha,
            beta,
            out,
        } => {
            let params = AimdParams {
                alpha: *alpha,
                beta: parse_beta(beta)?,
            };
            cmd_negotiate(trace, *cap, *scheme, *steps, params, out.as_deref())
        }
        Command::Bench {
            suite,
            sizes,
            dataset,
            guaranteed,
            timeout_s,
            out,
        } => cmd_bench(*suite, sizes, dataset.as_deref(), *guaranteed, *timeout_s, out.as_deref()),
        Command::ImportZoo { graphml, capacity, out } => {
            let topo = from_graphml(&read(graphml)?, *capacity).map_err(|e| Failure::new(2, "topology", e))?;
            emit_topology(&topo, out.as_deref())
        }
        Command::GenTopo { kind, capacity, out } => {
            let topo = match *kind {
                TopoKind::FatTree { k } => fat_tree(k, *capacity),
                TopoKind::BalancedTree { depth, fanout } => balanced_tree(depth, fanout, *capacity),
                TopoKind::Linear {
                    switches,
                    hosts_per_switch,
                } => linear(switches, hosts_per_switch, *capacity),
                TopoKind::ZooLike {
                    switches,
                    extra_links,
                    seed,
                } => zoo_like(switches, extra_links, seed, *capacity),
            }
            .map_err(|e| Failure::new(1, "usage", e))?;
            emit_topology(&topo, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let diag = json!({ "error": { "kind": "usage", "code": 1, "message": e.to_string() } });
            eprintln!("{diag}");
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(report) => {
            match cli.format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report.json).expect("reports serialize")),
                Format::Text => print!("{}", report.text),
            }
            ExitCode::from(report.code)
        }
        Err(f) => {
            let diag = json!({ "error": { "kind": f.kind, "code": f.code, "message": f.message } });
            match cli.format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&diag).expect("diagnostics serialize")),
                Format::Text => eprintln!("{diag}"),
            }
            ExitCode::from(f.code)
        }
    }
}
