//! End-to-end tests of the `mpgmerge` binary: exit codes, artifact layout,
//! and byte-reproducibility of the logs and reports.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpgmerge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn report_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

/// A config small enough that train/eval finish in well under a second.
fn tiny_config_eta(dir: &Path, eta: f64, trainer_extra: &str, eval_scenarios: usize) -> PathBuf {
    let text = format!(
        r#"
seeds = [0, 1]

[scenario]
n_leaders = 1
n_followers = 1

[network]
hidden = [8, 8]

[sim]
n_steps = 30

[trainer]
eta = {eta}
epochs = 3
batch_size = 4
probe_size = 8
{trainer_extra}

[eval]
n_scenarios = {eval_scenarios}
"#
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn tiny_config(dir: &Path, trainer_extra: &str, eval_scenarios: usize) -> PathBuf {
    tiny_config_eta(dir, 1e-4, trainer_extra, eval_scenarios)
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn log_lines(path: &Path) -> Vec<serde_json::Value> {
    String::from_utf8(read(path))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).expect("JSON line"))
        .collect()
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[test]
fn generated_structured_games_verify_and_the_counterexample_fails() {
    for kind in ["self-reward", "pairwise", "mixed"] {
        let out = run(&["verify", "--generate", kind, "--seed", "7"]);
        assert_eq!(code(&out), 0, "{kind}: {}", stderr(&out));
        let report = report_json(&out);
        assert!(report["passed"].as_bool().unwrap());
        assert!(report["max_violation"].as_f64().unwrap() < 1e-8);
    }

    let out = run(&["verify", "--generate", "counterexample", "--seed", "7"]);
    assert_eq!(code(&out), 1);
    let report = report_json(&out);
    assert!(!report["passed"].as_bool().unwrap());
    assert!(report["max_violation"].as_f64().unwrap() > 1e-2);
}

#[test]
fn generator_aliases_match_their_canonical_names() {
    for (alias, canonical) in
        [("theorem3", "self-reward"), ("theorem4", "pairwise"), ("theorem5", "mixed")]
    {
        let a = run(&["verify", "--generate", alias, "--seed", "3"]);
        let c = run(&["verify", "--generate", canonical, "--seed", "3"]);
        assert_eq!(code(&a), 0, "{alias}: {}", stderr(&a));
        assert_eq!(
            report_json(&a)["max_violation"],
            report_json(&c)["max_violation"],
            "{alias} and {canonical} generated different games"
        );
    }
}

#[test]
fn emitted_games_reverify_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let game = dir.path().join("game.txt");
    let out = run(&["verify", "--generate", "pairwise", "--emit", game.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let reread = run(&["verify", "--input", game.to_str().unwrap()]);
    assert_eq!(code(&reread), 0, "{}", stderr(&reread));
    assert!(report_json(&reread)["passed"].as_bool().unwrap());
}

#[test]
fn missing_and_malformed_verify_inputs_exit_two() {
    let out = run(&["verify", "--input", "/definitely/not/here.txt"]);
    assert_eq!(code(&out), 2);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "this is not a game file\n").unwrap();
    let out = run(&["verify", "--input", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("parsing game file"), "{}", stderr(&out));

    // clap rejects the conflicting pair and the empty invocation itself
    let out = run(&["verify", "--input", "x", "--generate", "mixed"]);
    assert_eq!(code(&out), 2);
    let out = run(&["verify"]);
    assert_eq!(code(&out), 2);
}

// ---------------------------------------------------------------------------
// train / train-single
// ---------------------------------------------------------------------------

#[test]
fn training_writes_reproducible_artifacts_and_a_fully_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "", 4);
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");

    for out in [&out1, &out2] {
        let res = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
    }

    assert_eq!(read(&out1.join("log.jsonl")), read(&out2.join("log.jsonl")));
    assert_eq!(read(&out1.join("params.json")), read(&out2.join("params.json")));
    assert!(out1.join("log.timing.jsonl").is_file());

    // The echoed config must state every setting, including the ones the
    // input file never mentioned.
    let resolved: toml::Value =
        toml::from_str(&String::from_utf8(read(&out1.join("resolved_config.toml"))).unwrap())
            .unwrap();
    assert_eq!(resolved["trainer"]["epochs"].as_integer(), Some(3));
    assert_eq!(resolved["rewards"]["w_speed"].as_float(), Some(1.0));
    assert_eq!(resolved["sim"]["v_max"].as_float(), Some(30.0));
    assert_eq!(resolved["eval"]["scenario_seed"].as_integer(), Some(1000));
    assert_eq!(resolved["idm"]["t_headway"].as_float(), Some(1.5));
    assert_eq!(resolved["ingest"]["window"].as_integer(), Some(21));

    let logs = log_lines(&out1.join("log.jsonl"));
    assert_eq!(logs.len(), 2 * 3, "two seeds, three epochs each");
}

#[test]
fn zero_step_size_training_logs_a_flat_objective() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config_eta(dir.path(), 0.0, "frozen_batch = true", 4);
    let out = dir.path().join("run");
    let res = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    let logs = log_lines(&out.join("log.jsonl"));
    for seed in [0, 1] {
        let objectives: Vec<f64> = logs
            .iter()
            .filter(|l| l["seed"].as_u64() == Some(seed))
            .map(|l| l["mean_objective"].as_f64().unwrap())
            .collect();
        assert_eq!(objectives.len(), 3);
        assert!(objectives.windows(2).all(|w| w[0] == w[1]), "seed {seed}: {objectives:?}");
    }
    assert!(logs.iter().all(|l| l["action_difference"].as_f64() == Some(0.0)));
}

#[test]
fn single_agent_training_writes_the_same_artifact_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "", 4);
    let out = dir.path().join("run");
    let res =
        run(&["train-single", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    for name in ["params.json", "log.jsonl", "log.timing.jsonl", "resolved_config.toml"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
}

#[test]
fn unknown_config_keys_are_rejected_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    std::fs::write(&cfg, "[trainer]\nlearning_rate = 0.5\n").unwrap();
    let out = dir.path().join("run");
    let res = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("learning_rate"), "{}", stderr(&res));
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[test]
fn eval_pairs_bundles_by_seed_and_averages_over_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "", 4);
    let train_out = dir.path().join("train");
    let res =
        run(&["train", "--config", cfg.to_str().unwrap(), "--out", train_out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    let params = train_out.join("params.json");
    let net = format!("net:{}", params.display());
    let ne = format!("ne:{}", params.display());
    let eval1 = dir.path().join("eval1");
    let eval2 = dir.path().join("eval2");
    for out in [&eval1, &eval2] {
        let res = run(&[
            "eval",
            "--config",
            cfg.to_str().unwrap(),
            "--ego",
            &net,
            "--others",
            &ne,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
    }

    let report: serde_json::Value =
        serde_json::from_slice(&read(&eval1.join("report.json"))).unwrap();
    let seeds: Vec<u64> =
        report["entries"].as_array().unwrap().iter().map(|e| e["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, vec![0, 1]);
    assert_eq!(report["entries"][0]["report"]["n_scenarios"].as_u64(), Some(4));
    assert!(report["mean"]["collision_rate"].is_number());
    assert!(report["mean"]["avg_min_gap"].is_number());
    assert_eq!(report["battery"]["kind"].as_str(), Some("sampled"));

    assert_eq!(read(&eval1.join("report.json")), read(&eval2.join("report.json")));
    assert_eq!(read(&eval1.join("traces.jsonl")), read(&eval2.join("traces.jsonl")));
    assert!(!read(&eval1.join("traces.jsonl")).is_empty());
}

#[test]
fn eval_on_an_empty_battery_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "", 0);
    let out = dir.path().join("eval");
    let res = run(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--ego",
        "idm",
        "--others",
        "const",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("empty scenario battery"), "{}", stderr(&res));
}

#[test]
fn eval_rejects_unloadable_policies_and_oversized_batteries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "", 4);
    let out = dir.path().join("eval");

    let res = run(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--ego",
        "net:/nope/params.json",
        "--others",
        "idm",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 2);

    // more seeds than bundle entries
    let train_out = dir.path().join("train");
    let res =
        run(&["train", "--config", cfg.to_str().unwrap(), "--out", train_out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let net = format!("net:{}", train_out.join("params.json").display());
    let res = run(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--ego",
        &net,
        "--others",
        "idm",
        "--seeds",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("--seeds 5"), "{}", stderr(&res));
}

// ---------------------------------------------------------------------------
// ingest + replay
// ---------------------------------------------------------------------------

/// One on-ramp vehicle plus four target-lane leaders and four followers,
/// each long enough to survive the default smoothing window.
fn nine_vehicle_recording() -> String {
    let mut rows = String::new();
    for t in 0..25 {
        rows.push_str(&format!("50 {t} {:.3} 3.5\n", 80.0 + 1.2 * t as f64));
    }
    for (k, x0) in [95.0, 110.0, 125.0, 140.0].into_iter().enumerate() {
        for t in 0..25 {
            rows.push_str(&format!("{} {t} {:.3} 0.0\n", k + 1, x0 + 1.3 * t as f64));
        }
    }
    for (k, x0) in [65.0, 50.0, 35.0, 20.0].into_iter().enumerate() {
        for t in 0..25 {
            rows.push_str(&format!("{} {t} {:.3} -0.4\n", k + 5, x0 + 1.1 * t as f64));
        }
    }
    rows
}

#[test]
fn replay_over_the_nine_vehicle_fixture_traces_nine_vehicles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "", 4);
    let data = dir.path().join("recording.txt");
    std::fs::write(&data, nine_vehicle_recording()).unwrap();

    let ingest_out = dir.path().join("ingest");
    let res = run(&[
        "ingest",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        ingest_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&ingest_out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["scenarios"].as_array().unwrap().len(), 1);
    assert_eq!(manifest["ego_ids"].as_array().unwrap(), &vec![serde_json::json!(50)]);
    assert_eq!(manifest["scenarios"][0]["tracks"].as_array().unwrap().len(), 8);
    let tracks: serde_json::Value =
        serde_json::from_slice(&read(&ingest_out.join("tracks.json"))).unwrap();
    assert_eq!(tracks["tracks"].as_array().unwrap().len(), 9);
    assert_eq!(tracks["excluded_short"].as_u64(), Some(0));

    let replay_out = dir.path().join("replay");
    let res = run(&[
        "replay",
        "--config",
        cfg.to_str().unwrap(),
        "--manifest",
        ingest_out.join("manifest.json").to_str().unwrap(),
        "--ego",
        "idm",
        "--out",
        replay_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    let trace = String::from_utf8(read(&replay_out.join("traces.jsonl"))).unwrap();
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(first["kind"].as_str(), Some("step"));
    assert_eq!(first["x"].as_array().unwrap().len(), 9);
    assert_eq!(first["lane"][0].as_str(), Some("Ramp"));
    let last: serde_json::Value = serde_json::from_str(trace.lines().last().unwrap()).unwrap();
    assert_eq!(last["kind"].as_str(), Some("end"));
    assert_eq!(last["final_x"].as_array().unwrap().len(), 9);

    let report: serde_json::Value =
        serde_json::from_slice(&read(&replay_out.join("report.json"))).unwrap();
    assert_eq!(report["battery"]["kind"].as_str(), Some("replay"));
    assert!(report["entries"][0]["seed"].is_null());
}

#[test]
fn replay_surroundings_demand_a_matching_time_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "", 4);
    let data = dir.path().join("recording.txt");
    std::fs::write(&data, nine_vehicle_recording()).unwrap();
    let ingest_out = dir.path().join("ingest");
    let res = run(&[
        "ingest",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        ingest_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    // 20 ms simulation steps cannot consume a 10 Hz recording
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[sim]\ndt = 0.02\n").unwrap();
    let res = run(&[
        "replay",
        "--config",
        bad.to_str().unwrap(),
        "--manifest",
        ingest_out.join("manifest.json").to_str().unwrap(),
        "--out",
        dir.path().join("replay").to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 2);
}
