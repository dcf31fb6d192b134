use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_provlang")).args(args).output().expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn compile_service_chain_places_nat_at_m1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "--format",
        "json",
        "compile",
        "--policy",
        &fixture("service_chain.policy"),
        "--topology",
        &fixture("middlebox.topology.json"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json_stdout(&out);
    assert_eq!(report["status"], "optimal");
    assert_eq!(report["objective"], "shortest");
    let manifest = std::fs::read_to_string(dir.path().join("middlebox.manifest")).unwrap();
    assert!(manifest.lines().any(|l| l == "m1\tnat"));
    for f in ["s1.flows", "m1.flows", "h1.filters", "h2.filters", "queues.conf", "report.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let timings = &report["timings_ms"];
    for stage in ["frontend_ms", "localize_ms", "model_build_ms", "solve_ms", "best_effort_ms", "codegen_ms"] {
        assert!(timings[stage].is_number(), "{stage}");
    }
}

#[test]
fn identical_inputs_give_identical_files() {
    let compile_into = |dir: &tempfile::TempDir| {
        let out = run(&[
            "compile",
            "--policy",
            &fixture("service_chain.policy"),
            "--topology",
            &fixture("middlebox.topology.json"),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    compile_into(&a);
    compile_into(&b);
    for f in ["s1.flows", "m1.flows", "h1.filters", "queues.conf", "middlebox.manifest"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let session = |d: &tempfile::TempDir| {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("report.json")).unwrap()).unwrap();
        v["session"].as_str().unwrap().to_string()
    };
    assert_eq!(session(&a), session(&b));
}

#[test]
fn over_subscribed_guarantees_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "--format",
        "json",
        "compile",
        "--policy",
        &fixture("infeasible.policy"),
        "--topology",
        &fixture("line.topology.json"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json_stdout(&out)["error"]["kind"], "infeasible");
}

#[test]
fn fat_tree_all_pairs_compiles() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("ft4.json");
    let gen = run(&["gen-topo", "fat-tree", "--k", "4", "--out", topo.to_str().unwrap()]);
    assert_eq!(gen.status.code(), Some(0));
    let policy = dir.path().join("empty.policy");
    std::fs::write(&policy, "[ x : tcp.dst = 80 -> .* ], max(x, 10MB/s)\n").unwrap();
    let out = run(&[
        "--format",
        "json",
        "compile",
        "--policy",
        policy.to_str().unwrap(),
        "--topology",
        topo.to_str().unwrap(),
        "--timeout-s",
        "30",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json_stdout(&out);
    assert!(report["unreachable"].as_array().unwrap().is_empty());
    // Both statements connect every ordered pair of the 16 hosts.
    assert_eq!(report["routes"].as_array().unwrap().len(), 2 * 16 * 15);
}

#[test]
fn verify_accepts_the_refinement() {
    let out = run(&["verify", &fixture("refine_original.policy"), &fixture("refine_refined.policy")]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "accept\n");
}

#[test]
fn verify_rejections_exit_5_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    let refined = std::fs::read_to_string(fixture("refine_refined.policy")).unwrap();
    let over = dir.path().join("over.policy");
    std::fs::write(&over, refined.replace("max(x, 50MB/s)", "max(x, 80MB/s)")).unwrap();
    let out = run(&["--format", "json", "verify", &fixture("refine_original.policy"), over.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(json_stdout(&out)["reason"], "cap-exceeded");

    let wide = dir.path().join("wide.policy");
    std::fs::write(&wide, refined.replace(".* log .*", ".*")).unwrap();
    let out = run(&["--format", "json", "verify", &fixture("refine_refined.policy"), wide.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5));
    let v = json_stdout(&out);
    assert_eq!(v["reason"], "path-not-included");
    let path: Vec<&str> = v["counterexample"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect();
    assert!(!path.is_empty() && !path.contains(&"log"));
}

#[test]
fn delegate_prints_the_sub_policy() {
    let out = run(&[
        "--format",
        "json",
        "delegate",
        "--policy",
        &fixture("service_chain.policy"),
        "--topology",
        &fixture("middlebox.topology.json"),
        "--locations",
        "h1,s1,h2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_stdout(&out);
    // z needs nat, which only m1 performs.
    assert_eq!(v["unsatisfiable"], serde_json::json!(["z"]));
}

#[test]
fn simulate_hadoop_gets_ninety() {
    let out = run(&[
        "simulate",
        "--policy",
        &fixture("hadoop.policy"),
        "--topology",
        &fixture("hadoop.topology.json"),
        "--demands",
        &fixture("hadoop_demands.csv"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l == "0,shuffle,90,90.000"), "{text}");
    assert!(text.lines().any(|l| l == "3,bulk,100,100.000"), "{text}");
}

#[test]
fn negotiate_logs_allocations() {
    let out = run(&[
        "negotiate",
        "--trace",
        &fixture("adapt_trace.csv"),
        "--cap",
        "10MB/s",
        "--scheme",
        "mmfs",
        "--steps",
        "101",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("time,flow,allocation\n"));
    assert!(text.contains("\n0,tenant_a,5000000\n"));
    assert!(text.contains("\n100,tenant_a,8000000\n100,tenant_b,2000000\n"));
}

#[test]
fn bench_rows_and_empty_suite() {
    let out = run(&["bench", "--suite", "balanced-tree", "--sizes", "3:3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "topology,traffic_classes,hosts,switches,model_build_ms,solve_ms,best_effort_ms");
    assert!(lines[1].starts_with("balanced-tree-3-3,702,27,13,"), "{}", lines[1]);

    let empty = run(&["bench", "--suite", "fat-tree"]);
    assert_eq!(String::from_utf8_lossy(&empty.stdout).lines().count(), 1);

    let missing = run(&["bench", "--suite", "zoo"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn import_zoo_attaches_one_host_per_switch() {
    let out = run(&["--format", "json", "import-zoo", &fixture("ring.graphml")]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_stdout(&out);
    assert_eq!(v["switches"], 4);
    assert_eq!(v["hosts"], 4);
    assert_eq!(v["links"], 5 + 4);
}

#[test]
fn errors_are_structured() {
    let out = run(&["verify", "/nonexistent/a.policy", "/nonexistent/b.policy"]);
    assert_eq!(out.status.code(), Some(2));
    let diag: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(diag["error"]["code"], 2);

    let bad = run(&["compile", "--objective", "fastest"]);
    assert_eq!(bad.status.code(), Some(1));
    let diag: Value = serde_json::from_slice(&bad.stderr).unwrap();
    assert_eq!(diag["error"]["kind"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.policy");
    std::fs::write(&broken, "[ x : tcp.dst = -> .* ]").unwrap();
    let out = run(&[
        "compile",
        "--policy",
        broken.to_str().unwrap(),
        "--topology",
        &fixture("middlebox.topology.json"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let diag: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(diag["error"]["kind"], "policy");
}
