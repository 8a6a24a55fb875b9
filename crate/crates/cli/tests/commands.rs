use std::io::{BufRead, BufReader};
use std::process::{Command, Output, Stdio};

use angel_core::trace::{Trace, TraceLine};
use angel_core::{CellCoord, Rat};

fn angel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_angel")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn params_solves_and_checks() {
    let o = angel(&["params"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("Q = 97") && text.contains("delta = 1/2328") && text.contains("rho1 = 8537"));
    assert!(angel(&["params", "--xi", "0.9"]).status.success());
    assert!(stdout(&angel(&["params", "--xi", "0.9"])).contains("Q = 241"));
    assert_eq!(angel(&["params", "--xi", "1/2"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("p.txt");
    std::fs::write(&f, text.replace("sigma = 1/1180084608288", "sigma = 1/1000")).unwrap();
    let o = angel(&["params", "--check", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("violates"));
}

#[test]
fn play_writes_a_trace_that_verifies_and_mutations_fail() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.txt");
    let o = angel(&["play", "--devil", "wall", "--seed", "4", "--horizon", "150", "--depth", "1", "--trace-out", t.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("survived = true"));
    let o = angel(&["verify", t.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("findings = 0"));

    let mut trace = Trace::parse(&std::fs::read_to_string(&t).unwrap()).unwrap();
    for l in trace.lines.iter_mut() {
        if let TraceLine::Devil { index: 3, delta, .. } = l {
            delta.insert(0, (CellCoord::new(-50, 9), Rat::ONE));
        }
    }
    let bad = trace.to_text();
    let b = dir.path().join("bad.txt");
    std::fs::write(&b, bad).unwrap();
    let o = angel(&["verify", b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("3 devil_allowed"), "{}", stdout(&o));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("cfg-trace.txt");
    let c = dir.path().join("angel.conf");
    std::fs::write(&c, format!("# match settings\ndevil = zero\nhorizon = 30\ntrace-out = {}\n", t.display())).unwrap();
    let o = angel(&["play", "--config", c.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("moves = 30"));
    let first = std::fs::read_to_string(&t).unwrap().lines().next().unwrap().to_string();
    assert!(first.contains("\"devil\":\"zero\""));
    let o = angel(&["play", "--config", c.to_str().unwrap(), "--horizon", "12"]);
    assert!(stdout(&o).contains("moves = 12"));
}

#[test]
fn toy_mode_is_watermarked_and_fuzz_refuses_it() {
    let o = angel(&["play", "--toy", "--horizon", "40"]);
    assert!(stdout(&o).starts_with("# not theorem-covered"));
    let o = angel(&["fuzz", "--toy", "--trials", "10"]);
    assert_eq!(o.status.code(), Some(2));
    let o = angel(&["fuzz", "--trials", "100", "--seed", "3"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).matches("counterexamples = 0").count(), 7);
}

#[test]
fn play_through_the_service_matches_the_local_game() {
    let mut server = Command::new(env!("CARGO_BIN_EXE_angel"))
        .args(["serve", "--addr", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").unwrap().to_string();
    let dir = tempfile::tempdir().unwrap();
    let remote = dir.path().join("remote.txt");
    let local = dir.path().join("local.txt");
    let common = ["--devil", "random", "--seed", "8", "--horizon", "60"];
    let o = angel(&[&["play", "--server", &url, "--trace-out", remote.to_str().unwrap()][..], &common[..]].concat());
    let _ = server.kill();
    let _ = server.wait();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = angel(&[&["play", "--trace-out", local.to_str().unwrap()][..], &common[..]].concat());
    assert!(o.status.success());
    assert_eq!(std::fs::read(&remote).unwrap(), std::fs::read(&local).unwrap());
}
