use std::fs;
use std::process::{Command, Output};

fn chainotp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chainotp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn list_names_bundled_scenarios() {
    let out = chainotp(&["list"]);
    assert!(out.status.success());
    let names = stdout(&out);
    for name in [
        "honest-3-sessions",
        "stolen-client",
        "replay",
        "ledger-delay",
    ] {
        assert!(names.lines().any(|l| l == name), "{name}");
    }
}

#[test]
fn honest_run_grants_three_sessions() {
    let out = chainotp(&["run", "honest-3-sessions", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let run: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let granted = run["actions"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|a| a["result"]["outcome"]["kind"] == "granted")
        .count();
    assert_eq!(granted, 3);
    assert_eq!(run["final_state"]["registry_size"], 1);
    assert_eq!(run["exit_status"], 0);
}

#[test]
fn stolen_client_prints_evidence_tx() {
    let out = chainotp(&["run", "stolen-client"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let line = text
        .lines()
        .find(|l| l.contains("check u0 expect=evidence"))
        .unwrap();
    let tx = line
        .split("tx ")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap();
    assert_eq!(tx.len(), 64);
    assert!(tx.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn same_seed_same_bytes() {
    let a = chainotp(&["run", "replay", "--json", "--seed", "99"]);
    let b = chainotp(&["run", "replay", "--json", "--seed", "99"]);
    let c = chainotp(&["run", "replay", "--json", "--seed", "100"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn failed_expectation_exits_one() {
    let dir = std::env::temp_dir().join(format!("chainotp-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.scn");
    fs::write(
        &path,
        "version = 1\nrng_seed = 1\nn_otps = 2\nusers = 1\nchain_profile = mainnet-like\n\
         [schedule]\nbootstrap u0\nauth u0\nauth u0\nauth u0\n",
    )
    .unwrap();
    let out = chainotp(&["run", path.to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL line  10"));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn parse_errors_exit_two_with_line() {
    let dir = std::env::temp_dir().join(format!("chainotp-cli-parse-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join("broken.scn");
    fs::write(
        &path,
        "version = 1\nrng_seed = 1\nn_otps = 4\nusers = 1\nchain_profile = mainnet-like\n\
         [schedule]\nbootstrap u0\nauth u3\n",
    )
    .unwrap();
    let out = chainotp(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 8"), "{err}");

    let missing = chainotp(&["run", "no-such-scenario"]);
    assert_eq!(missing.status.code(), Some(2));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn report_has_reference_figures() {
    let out = chainotp(&["report", "honest-3-sessions", "--json"]);
    assert!(out.status.success());
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["deploy_gas"], 292_000);
    assert_eq!(r["auth_gas"], 48_000);
    let rate = |name: &str| {
        r["profiles"]
            .as_array()
            .unwrap()
            .iter()
            .find(|p| p["profile"] == name)
            .unwrap()["max_auth_per_second"]
            .clone()
    };
    assert_eq!(rate("mainnet-like"), 52);
    assert_eq!(rate("consortium-like"), 562);
    let million = r["storage"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["users"] == 1_000_000)
        .unwrap();
    assert_eq!(million["state_bytes"], 16_000_000);
}

#[test]
fn chain_dump_is_written() {
    let path = std::env::temp_dir().join(format!("chainotp-dump-{}.txt", std::process::id()));
    let out = chainotp(&[
        "run",
        "honest-3-sessions",
        "--quiet",
        "--dump-chain",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let dump = fs::read_to_string(&path).unwrap();
    assert!(chainotp::ledger::parse_dump(&dump).is_ok());
    fs::remove_file(&path).ok();
}
