mod common;

use common::{random_functions, run, run_ok};
use serde_json::Value;

#[test]
fn every_subcommand_runs_on_a_small_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = d.join("input.jsonl");
    std::fs::write(&input, random_functions(12, 5)).unwrap();
    let cfg = d.join("run.cfg");
    std::fs::write(&cfg, "seed = 3\nmax_items = 300\nsets = 200\nbatch = 8\n").unwrap();
    let c = cfg.to_str().unwrap();
    run_ok(d, &["--config", c, "ingest", input.to_str().unwrap()]);
    for args in [
        vec!["strands"],
        vec!["symexec"],
        vec!["normalize"],
        vec!["corpus", "--task", "synth", "--n", "60"],
        vec!["corpus", "--task", "ssm"],
        vec!["tok-train", "--max-vocab", "400"],
        vec!["corpus", "--task", "elm"],
        vec!["corpus", "--task", "exec"],
        vec!["corpus", "--task", "pairs", "--pair-task", "strand-sim"],
        vec!["pretrain", "--steps", "3"],
        vec!["embed", "--task", "strand-sim"],
        vec!["bench", "--task", "strand-sim", "-k", "1,5"],
        vec!["bench", "--task", "opcode-outlier", "--runs", "2"],
        vec!["finetune", "--task", "exec", "--epochs", "1"],
        vec!["bench", "--task", "exec"],
        vec!["finetune", "--task", "block-sim", "--epochs", "1"],
        vec!["embed", "--task", "block-sim", "--mode", "finetuned"],
        vec!["bench", "--task", "block-sim", "--mode", "finetuned"],
        vec!["finetune", "--task", "function-sim", "--epochs", "1"],
        vec!["embed", "--task", "function-sim", "--mode", "finetuned"],
        vec!["bench", "--task", "function-sim", "--mode", "finetuned", "-k", "1"],
        vec!["finetune", "--task", "strand-compiler", "--epochs", "1"],
        vec!["bench", "--task", "strand-compiler"],
    ] {
        let mut full = vec!["--config", c];
        full.extend(args);
        run_ok(d, &full);
    }
    let results = std::fs::read_to_string(d.join("results-strand-sim.csv")).unwrap();
    assert_eq!(results.lines().next(), Some("task,split,metric,k,value,seed"));
    assert_eq!(results.lines().filter(|l| l.contains(",intrinsic,")).count(), 6);
    let outlier = std::fs::read_to_string(d.join("results-opcode-outlier.csv")).unwrap();
    assert!(outlier.contains("accuracy_mean") && outlier.contains("accuracy_std"));
    for m in ["ingest", "strands", "pretrain", "bench-exec", "finetune-exec", "corpus-ssm"] {
        let text = std::fs::read_to_string(d.join(format!("{}.manifest.json", m))).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["seed"], 3, "{}", m);
        assert!(!v["outputs"].as_object().unwrap().is_empty(), "{}", m);
    }
}

#[test]
fn failures_exit_nonzero_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(d, &["pretrain"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "missing-input");

    let bad = d.join("bad.jsonl");
    std::fs::write(&bad, "{\"function_id\":\"f\",\"binary_id\":\"b\",\"blocks\":[]}\n{\"function_id\":\"g\"}\n").unwrap();
    let out = run(d, &["ingest", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!((v["error"].as_str(), v["line"].as_u64(), v["field"].as_str()), (Some("schema"), Some(2), Some("binary_id")));

    let out = run(d, &["bench", "--task", "no-such-task"]);
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "usage");
}
