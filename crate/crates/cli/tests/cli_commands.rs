mod support;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use support::*;

fn numqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_numqa"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn core_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core").join(rel)
}

fn run_mock(data: &Path, script: &Path, spec: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--dataset",
        "tatqa",
        "--data-path",
        data.to_str().unwrap(),
        "--spec",
        spec,
        "--mock-script",
        script.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    numqa(&args)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn mock_run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_tatqa(dir.path(), 3);
    let script = cot_script(dir.path(), 3, |i| i == 2);
    let out = dir.path().join("run");
    let o = run_mock(&data, &script, "cot", &out, &["--concurrency", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("accuracy  66.7%"), "{}", stdout(&o));

    let records = fs::read_to_string(out.join("records.jsonl")).unwrap();
    let ids: Vec<String> = records
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["doc_id"].as_str().unwrap().to_owned())
        .collect();
    assert_eq!(ids, ["tatqa-dev-0", "tatqa-dev-1", "tatqa-dev-2"]);

    let manifest = read_json(&out.join("manifest.json"));
    let docs = manifest["documents"].as_array().unwrap();
    assert_eq!(docs.len(), 3);
    for d in docs {
        let transcript = read_json(&out.join(d["transcript"].as_str().unwrap()));
        let keys: Vec<&Value> = transcript["turns"].as_array().unwrap().iter().map(|t| &t["cache_key"]).collect();
        assert_eq!(d["cache_keys"].as_array().unwrap().iter().collect::<Vec<_>>(), keys);
        for key in &keys {
            let k = key.as_str().unwrap();
            assert!(out.join("cache/objects").join(&k[..2]).join(format!("{k}.json")).is_file());
        }
    }
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["accuracy"]["accuracy"]["count"], 2);
    assert!(out.join("report.txt").is_file());
}

#[test]
fn rerun_is_served_from_cache_with_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_tatqa(dir.path(), 4);
    let script = cot_script(dir.path(), 4, |i| i % 2 == 1);
    let out = dir.path().join("run");
    assert!(run_mock(&data, &script, "cot", &out, &[]).status.success());
    let first = fs::read(out.join("records.jsonl")).unwrap();
    let first_report = fs::read(out.join("report.json")).unwrap();

    assert!(run_mock(&data, &script, "cot", &out, &[]).status.success());
    assert_eq!(fs::read(out.join("records.jsonl")).unwrap(), first);
    assert_eq!(fs::read(out.join("report.json")).unwrap(), first_report);
    let stats = read_json(&out.join("run_stats.json"));
    assert_eq!(stats["backend_calls"], 0);
    assert_eq!(stats["cache_hits"], 4);
}

#[test]
fn report_renders_layouts_and_rejects_missing_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_tatqa(dir.path(), 4);
    let cot = dir.path().join("cot");
    let script = cot_script(dir.path(), 4, |i| i < 2);
    assert!(run_mock(&data, &script, "cot", &cot, &[]).status.success());

    // i-critic: documents 0 and 1 updated to the right answer, 2 and 3 maintained.
    let docs = (0..4)
        .map(|i| {
            let first = if i < 2 { gold(i) + 1 } else { gold(i) };
            let mut turns = vec![turn(&cot_reply(i, first)), turn(&cot_reply(i, gold(i)))];
            if i < 2 {
                turns.push(turn(&cot_reply(i, gold(i))));
            }
            (doc_id(i), turns)
        })
        .collect::<BTreeMap<_, _>>();
    let script = write_script(dir.path(), "icritic.json", docs);
    let icritic = dir.path().join("icritic");
    assert!(run_mock(&data, &script, "cot+i-critic", &icritic, &[]).status.success());

    let o = numqa(&["report", cot.to_str().unwrap(), icritic.to_str().unwrap(), "--layout", "table1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("50.0%") && text.contains("100.0%"), "{text}");
    assert!(text.contains("+50.0"), "{text}");

    let o = numqa(&["report", icritic.to_str().unwrap(), "--layout", "table4", "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(json["layout"], "table4");

    let o = numqa(&["report", dir.path().join("nope").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("io error"));
}

#[test]
fn replay_passes_goldens_and_diffs_a_tampered_script() {
    let c3 = core_path("tests/fixtures/c3_critic.json");
    let c5 = core_path("tests/fixtures/c5_calculator.json");
    let o = numqa(&["replay", c3.to_str().unwrap(), c5.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("PASS").count(), 2);

    let dir = tempfile::tempdir().unwrap();
    let mut script = read_json(&c3);
    let respond = script["turns"][2]["respond"].as_str().unwrap().replacen("29,215\"\n}", "29,216\"\n}", 1);
    script["turns"][2]["respond"] = Value::String(respond);
    let tampered = dir.path().join("tampered.json");
    fs::write(&tampered, serde_json::to_string(&script).unwrap()).unwrap();
    let o = numqa(&["replay", tampered.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
    let text = stdout(&o);
    assert!(text.contains("FAIL"), "{text}");
    assert!(text.contains("-    \"answer\": \"$29,215\"") && text.contains("+    \"answer\": \"$29,216\""), "{text}");
}

#[test]
fn template_dump_prints_the_marked_template() {
    let o = numqa(&["template", "dump", "cot"]);
    assert!(o.status.success());
    let golden = fs::read_to_string(core_path("tests/golden/c1_cot_template.txt")).unwrap();
    assert_eq!(stdout(&o), format!("{golden}\n"));
    assert_eq!(numqa(&["template", "dump", "nope"]).status.code(), Some(2));
}

#[test]
fn ingest_prints_the_reconciliation() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_tatqa(dir.path(), 5);
    let o = numqa(&["ingest", "--dataset", "tatqa", "--data-path", data.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains('5'), "{}", stdout(&o));
    let strict = numqa(&["ingest", "--dataset", "tatqa", "--data-path", data.to_str().unwrap(), "--strict"]);
    assert_eq!(strict.status.code(), Some(5));
}

#[test]
fn seeded_slices_pick_the_same_documents() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_tatqa(dir.path(), 30);
    let script = cot_script(dir.path(), 30, |_| false);
    let ids = |out: &str, seed: &str| {
        let out = dir.path().join(out);
        let o = run_mock(&data, &script, "cot", &out, &["--slice", "5", "--seed", seed, "--no-cache"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let manifest = read_json(&out.join("manifest.json"));
        manifest["documents"]
            .as_array()
            .unwrap()
            .iter()
            .map(|d| d["doc_id"].as_str().unwrap().to_owned())
            .collect::<Vec<_>>()
    };
    let a = ids("a", "3");
    assert_eq!(a.len(), 5);
    assert_eq!(a, ids("b", "3"));
    assert_ne!(a, ids("c", "4"));
}

#[test]
fn usage_and_backend_errors_have_their_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_tatqa(dir.path(), 2);
    let out = dir.path().join("run");
    // No script for document 1: the gateway fails for it.
    let docs = BTreeMap::from([(doc_id(0), vec![turn(&cot_reply(0, gold(0)))])]);
    let script = write_script(dir.path(), "partial.json", docs);
    let o = run_mock(&data, &script, "cot", &out, &[]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tatqa-dev-1"));
    assert_eq!(fs::read_to_string(out.join("records.jsonl")).unwrap().lines().count(), 1);

    let o = run_mock(&data, &script, "cot", &out, &["--oracle"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_mock(&dir.path().join("missing.json"), &script, "cot", &out, &[]);
    assert_eq!(o.status.code(), Some(3));
}
