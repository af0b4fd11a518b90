mod common;

use std::fs;

use serde_json::{json, Value};

use common::{cli, scripted_fixture, MockServer};

fn lines(path: &std::path::Path) -> Vec<Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn two_records_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let (data, config) = scripted_fixture(dir.path(), 1);
    let out = dir.path().join("out.jsonl");
    let (code, _, err) = cli(&["run", "--dataset", &data, "--config", &config, "--output", out.to_str().unwrap()], &[]);
    assert_eq!(code, 0, "{err}");

    let out_lines = lines(&out);
    assert_eq!(out_lines.len(), 2);
    let a = out_lines.iter().find(|l| l["id"] == "a").unwrap();
    assert_eq!(a["summary"], "She won the race.");
    assert_eq!(a["stop_reason"], "sample_ended");
    assert_eq!(a["method"], "sample_select");
    assert_eq!(a["eval"]["rouge1_f1"], 1.0);
    let b = out_lines.iter().find(|l| l["id"] == "b").unwrap();
    assert_eq!(b["summary"], "It rained all day. The roads were closed.");
    assert_eq!(b["rounds"].as_array().unwrap().len(), 2);
    assert!(b["eval"].get("rouge1_f1").is_none());

    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out.jsonl.report.json")).unwrap()).unwrap();
    assert_eq!(report["n_docs"], 2);
    assert_eq!(report["n_failed"], 0);
    assert_eq!(report["rouge1_f1_mean"], 1.0);
    assert_eq!(report["rouge1_f1_count"], 1);
    assert!(report["generated_at"].is_string());
}

#[test]
fn dataset_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (_, config) = scripted_fixture(dir.path(), 1);
    let out = dir.path().join("out.jsonl");
    let cases = [
        "{\"id\": \"a\", \"article\": \"x\"}\n{\"id\": \"a\", \"article\": \"y\"}\n",
        "{\"id\": \"a\", \"article\": \"  \"}\n",
        "{\"id\": \"a\"}\n",
        "not json\n",
    ];
    for (i, body) in cases.iter().enumerate() {
        let data = dir.path().join(format!("bad{i}.jsonl"));
        fs::write(&data, body).unwrap();
        let (code, _, err) =
            cli(&["run", "--dataset", data.to_str().unwrap(), "--config", &config, "--output", out.to_str().unwrap()], &[]);
        assert_eq!(code, 1, "case {i}: {err}");
    }
    let (code, _, _) = cli(&["run", "--dataset", "/nonexistent.jsonl", "--output", out.to_str().unwrap()], &[]);
    assert_eq!(code, 1);
}

#[test]
fn bad_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = scripted_fixture(dir.path(), 1);
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[generation]\nn = 0\n").unwrap();
    let out = dir.path().join("out.jsonl");
    let (code, _, err) = cli(&["run", "--dataset", &data, "--config", config.to_str().unwrap(), "--output", out.to_str().unwrap()], &[]);
    assert_eq!(code, 1);
    assert!(err.contains("n must be"), "{err}");
}

#[test]
fn failing_document_writes_error_line_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let (data, config) = scripted_fixture(dir.path(), 1);
    let script = dir.path().join("script.json");
    let mut body = common::two_document_script();
    body["documents"]["b"][1][2] = json!({"error": "model overloaded"});
    fs::write(&script, body.to_string()).unwrap();
    let out = dir.path().join("out.jsonl");
    let (code, _, _) = cli(&["run", "--dataset", &data, "--config", &config, "--output", out.to_str().unwrap()], &[]);
    assert_eq!(code, 2);
    let out_lines = lines(&out);
    assert_eq!(out_lines.len(), 2);
    let a = out_lines.iter().find(|l| l["id"] == "a").unwrap();
    assert!(a.get("error").is_none());
    let b = out_lines.iter().find(|l| l["id"] == "b").unwrap();
    assert_eq!(b["stop_reason"], "failed");
    assert!(b["error"].as_str().unwrap().contains("model overloaded"));
    assert!(b.get("summary").is_none());
    // The completed first round is kept.
    assert_eq!(b["rounds"].as_array().unwrap().len(), 1);
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out.jsonl.report.json")).unwrap()).unwrap();
    assert_eq!(report["n_failed"], 1);
    assert_eq!(report["n_docs"], 1);
}

#[test]
fn parallel_workers_produce_the_same_lines() {
    let dir = tempfile::tempdir().unwrap();
    let (data, config) = scripted_fixture(dir.path(), 1);
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let (code, _, err) =
            cli(&["run", "--dataset", &data, "--config", &config, "--output", out.to_str().unwrap(), "--workers", workers], &[]);
        assert_eq!(code, 0, "{err}");
        let mut l: Vec<String> = fs::read_to_string(out).unwrap().lines().map(String::from).collect();
        l.sort();
        l
    };
    assert_eq!(run("one.jsonl", "1"), run("four.jsonl", "4"));
}

#[test]
fn replay_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let (data, config) = scripted_fixture(dir.path(), 1);
    let out = dir.path().join("out.jsonl");
    let (code, _, _) = cli(&["run", "--dataset", &data, "--config", &config, "--output", out.to_str().unwrap()], &[]);
    assert_eq!(code, 0);
    let (code, stdout, _) = cli(&["replay", out.to_str().unwrap()], &[]);
    assert_eq!(code, 0, "{stdout}");

    let original = fs::read_to_string(&out).unwrap();
    let mut first: Value = serde_json::from_str(original.lines().next().unwrap()).unwrap();
    let score = first["rounds"][0]["candidates"][1]["score"].as_f64().unwrap();
    first["rounds"][0]["candidates"][1]["score"] = json!(score + 0.5);
    let rest: Vec<&str> = original.lines().skip(1).collect();
    let tampered = dir.path().join("tampered.jsonl");
    fs::write(&tampered, format!("{}\n{}\n", first, rest.join("\n"))).unwrap();
    let (code, stdout, _) = cli(&["replay", tampered.to_str().unwrap()], &[]);
    assert_ne!(code, 0);
    assert!(stdout.contains("mismatch"), "{stdout}");

    let mut chosen: Value = serde_json::from_str(original.lines().next().unwrap()).unwrap();
    chosen["rounds"][0]["chosen"] = json!(2);
    fs::write(&tampered, format!("{chosen}\n")).unwrap();
    assert_ne!(cli(&["replay", tampered.to_str().unwrap()], &[]).0, 0);

    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    assert_eq!(cli(&["replay", empty.to_str().unwrap()], &[]).0, 1);
    fs::write(&empty, "{\"id\": 3}\n").unwrap();
    assert_eq!(cli(&["replay", empty.to_str().unwrap()], &[]).0, 1);
}

#[test]
fn remote_backend_via_flags_and_api_key() {
    let server = MockServer::start(|req| {
        let prompt = req.body["prompt"].as_str().unwrap();
        let text = if prompt.starts_with("PROMPT") { "Rain fell." } else { "Wrong prompt." };
        (200, json!({"text": text, "finish_reason": "stop"}).to_string())
    });
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    fs::write(&data, "{\"id\": \"x\", \"article\": \"Storm news.\"}\n").unwrap();
    let template = dir.path().join("prompt.txt");
    fs::write(&template, "PROMPT {article}\nSummary:").unwrap();
    let out = dir.path().join("out.jsonl");
    let (code, _, err) = cli(
        &[
            "run", "--dataset", data.to_str().unwrap(), "--output", out.to_str().unwrap(),
            "--backend-url", &server.url, "--n", "2", "--top-p", "0.8", "--temperature", "0.7",
            "--max-sentence-tokens", "16", "--prompt-template-file", template.to_str().unwrap(),
            "--retries", "0", "--timeout-secs", "5",
        ],
        &[("SAMPLE_SELECT_API_KEY", "secret")],
    );
    assert_eq!(code, 0, "{err}");
    let line: Value = serde_json::from_str(fs::read_to_string(&out).unwrap().trim()).unwrap();
    assert_eq!(line["summary"], "Rain fell.");
    let seen = server.seen();
    assert_eq!(seen.len(), 2);
    for s in &seen {
        assert_eq!(s.authorization.as_deref(), Some("Bearer secret"));
        assert_eq!(s.body["max_tokens"], 16);
        assert_eq!(s.body["top_p"], 0.8);
        assert_eq!(s.body["temperature"], 0.7);
    }
    assert_ne!(seen[0].body["seed"], seen[1].body["seed"]);
}

#[test]
fn remote_backend_outage_is_a_failed_line() {
    let server = MockServer::start(|_| (500, "{}".into()));
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    fs::write(&data, "{\"id\": \"x\", \"article\": \"Storm news.\"}\n").unwrap();
    let out = dir.path().join("out.jsonl");
    let (code, _, _) = cli(
        &["run", "--dataset", data.to_str().unwrap(), "--output", out.to_str().unwrap(), "--backend-url", &server.url, "--retries", "2"],
        &[],
    );
    assert_eq!(code, 2);
    assert_eq!(server.hits() % 3, 0);
}

#[test]
fn method_flag_selects_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    fs::write(&data, "{\"id\": \"x\", \"article\": \"Storm news.\"}\n").unwrap();
    let config = dir.path().join("c.toml");
    fs::write(&config, "[backend]\nkind = \"markov\"\nseed = 3\n").unwrap();
    let out = dir.path().join("out.jsonl");
    for method in ["greedy", "nucleus", "beam", "independent", "selfcheck_select"] {
        let (code, _, err) = cli(
            &["run", "--dataset", data.to_str().unwrap(), "--config", config.to_str().unwrap(), "--output", out.to_str().unwrap(), "--method", method],
            &[],
        );
        assert_eq!(code, 0, "{method}: {err}");
        let line: Value = serde_json::from_str(fs::read_to_string(&out).unwrap().trim()).unwrap();
        assert_eq!(line["method"], method);
    }
    let (code, _, _) = cli(&["run", "--dataset", data.to_str().unwrap(), "--output", out.to_str().unwrap(), "--method", "dola"], &[]);
    assert_ne!(code, 0);
}
