//! End-to-end tests of the binary: exit codes, output contracts, and
//! byte-stable transcripts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_knapsack-auction"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir =
        std::env::temp_dir().join(format!("knapsack-auction-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_example_config(dir: &Path) -> PathBuf {
    let path = dir.join("example.json");
    let output = run(&["example-config", "--out", path.to_str().unwrap()]);
    assert!(output.status.success());
    path
}

fn is_prime_trial(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

#[test]
fn gen_params_produces_verified_primes() {
    let dir = tmp_dir("gen");
    let out = dir.join("params.json");
    let output = run(&[
        "gen-params",
        "--q-bits",
        "10",
        "--seed",
        "fixed",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let params: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let q: u64 = params["q"].as_str().unwrap().parse().unwrap();
    let p: u64 = params["p"].as_str().unwrap().parse().unwrap();
    let mu: u64 = params["mu"].as_str().unwrap().parse().unwrap();
    assert!(is_prime_trial(q), "q = {q}");
    assert!(is_prime_trial(p), "p = {p}");
    assert_eq!(mu * q + 1, p);
    assert!((512..1024).contains(&q), "q = {q} is not 10 bits");
}

#[test]
fn gen_params_missing_out_is_a_usage_error() {
    let output = run(&["gen-params", "--q-bits", "10", "--seed", "fixed"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn gen_params_below_minimum_bits_fails() {
    let dir = tmp_dir("gen-small");
    let out = dir.join("params.json");
    let output = run(&[
        "gen-params",
        "--q-bits",
        "4",
        "--seed",
        "s",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("q_bits"));
}

#[test]
fn run_example_prints_the_expected_outcome() {
    let dir = tmp_dir("run");
    let config = write_example_config(&dir);
    let transcript = dir.join("run.transcript");
    let output = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--transcript-out",
        transcript.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let text = stdout(&output);
    assert_eq!(text.lines().next(), Some("highest=80 second=40 winner=B4"));
    assert!(text.contains("pays 40 tokens"));
    assert!(transcript.exists());
}

#[test]
fn run_is_byte_deterministic() {
    let dir = tmp_dir("det");
    let config = write_example_config(&dir);
    let mut transcripts = Vec::new();
    let mut outputs = Vec::new();
    for i in 0..2 {
        let t = dir.join(format!("run-{i}.transcript"));
        let output = run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--transcript-out",
            t.to_str().unwrap(),
            "--mode",
            "malicious",
        ]);
        assert_eq!(output.status.code(), Some(0));
        outputs.push(stdout(&output));
        transcripts.push(std::fs::read(&t).unwrap());
    }
    assert_eq!(transcripts[0], transcripts[1]);
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn duplicate_bids_in_honest_mode_abort_with_tie_diagnosis() {
    let dir = tmp_dir("tie");
    let config_path = dir.join("tie.json");
    let output = run(&["example-config", "--out", config_path.to_str().unwrap()]);
    assert!(output.status.success());
    let mut config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&config_path).unwrap()).unwrap();
    config["bids"] = serde_json::json!([3, 3, 4, 8]);
    // pinned share rows cannot apply once codes repeat
    config["fixed"]
        .as_object_mut()
        .unwrap()
        .remove("share_rows");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let output = run(&["run", "--config", config_path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(
        stderr(&output).contains("unsolvable_knapsack"),
        "stderr: {}",
        stderr(&output)
    );
}

#[test]
fn missing_config_is_a_config_error() {
    let output = run(&["run", "--config", "/definitely/not/here.json"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn verify_accepts_honest_transcripts_in_both_modes() {
    let dir = tmp_dir("verify");
    let config = write_example_config(&dir);
    for mode in ["honest", "malicious"] {
        let transcript = dir.join(format!("{mode}.transcript"));
        let output = run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--transcript-out",
            transcript.to_str().unwrap(),
            "--mode",
            mode,
        ]);
        assert_eq!(output.status.code(), Some(0));
        let output = run(&[
            "verify",
            "--transcript",
            transcript.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--mode",
            mode,
        ]);
        assert_eq!(output.status.code(), Some(0), "{}", stdout(&output));
        assert!(stdout(&output).lines().all(|l| l.starts_with("PASS")));
    }
}

#[test]
fn verify_flags_an_edited_commitment_with_its_seq() {
    let dir = tmp_dir("edited");
    let config = write_example_config(&dir);
    let transcript = dir.join("malicious.transcript");
    let output = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--transcript-out",
        transcript.to_str().unwrap(),
        "--mode",
        "malicious",
    ]);
    assert_eq!(output.status.code(), Some(0));

    // push one committed sum out of the subgroup (4506 has order 2 mod 4507)
    let text = std::fs::read_to_string(&transcript).unwrap();
    let edited: Vec<String> = text
        .lines()
        .map(|line| {
            if line.contains("\"kind\":\"sum_commit\"") {
                let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
                v["body"]["commit"] = serde_json::json!("4506");
                serde_json::to_string(&v).unwrap()
            } else {
                line.to_string()
            }
        })
        .collect();
    std::fs::write(&transcript, edited.join("\n") + "\n").unwrap();

    let output = run(&[
        "verify",
        "--transcript",
        transcript.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--mode",
        "malicious",
    ]);
    assert_eq!(output.status.code(), Some(3));
    let report = stdout(&output);
    assert!(report.contains("FAIL"), "{report}");
    assert!(
        report.contains("seq "),
        "failing check must name the seq: {report}"
    );
}

#[test]
fn verify_rejects_bidder_only_records_addressed_to_the_seller() {
    let dir = tmp_dir("channel");
    let config = write_example_config(&dir);
    let transcript = dir.join("honest.transcript");
    let output = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--transcript-out",
        transcript.to_str().unwrap(),
        "--mode",
        "malicious",
    ]);
    assert_eq!(output.status.code(), Some(0));

    let mut text = std::fs::read_to_string(&transcript).unwrap();
    let next_seq = text.lines().count();
    text.push_str(&format!(
        "{{\"seq\":\"{next_seq}\",\"phase\":\"done\",\"channel\":\"bidder_only\",\"from\":\"b1\",\"to\":\"seller\",\"kind\":\"masked_code_commit\",\"body\":{{\"commit\":\"64\"}}}}\n"
    ));
    std::fs::write(&transcript, text).unwrap();

    let output = run(&[
        "verify",
        "--transcript",
        transcript.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--mode",
        "malicious",
    ]);
    assert_eq!(output.status.code(), Some(3));
    assert!(stdout(&output).contains("FAIL channel-discipline"));
}

#[test]
fn verify_reports_parse_errors_as_config_failures() {
    let dir = tmp_dir("parse");
    let config = write_example_config(&dir);
    let transcript = dir.join("truncated.transcript");
    std::fs::write(&transcript, "{\"seq\":\"0\",\"phase\":\"init\"").unwrap();
    let output = run(&[
        "verify",
        "--transcript",
        transcript.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("parse error"));
}

#[test]
fn adversary_config_aborts_with_culprit() {
    let dir = tmp_dir("adversary");
    let config_path = dir.join("lying.json");
    let output = run(&["example-config", "--out", config_path.to_str().unwrap()]);
    assert!(output.status.success());
    let mut config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&config_path).unwrap()).unwrap();
    config["mode"] = serde_json::json!("malicious_detecting");
    config["adversary"] = serde_json::json!({
        "rules": [{
            "matches": { "kind": "flags_announce" },
            "action": { "mutate_field": { "path": "flags.5", "value": "1" } }
        }]
    });
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let output = run(&["run", "--config", config_path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let err = stderr(&output);
    assert!(err.contains("proof2_failed"), "{err}");
    assert!(err.contains("seller"), "{err}");
}
