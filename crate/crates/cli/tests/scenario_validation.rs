use std::collections::HashSet;
use std::process::Command;

use infoplan::scenario::Scenario;

const BASE: &str = r#"
version = 1
seed = 5

[model]
kind = "vehicle"
maneuver = "lane_change"
x0 = [0.0, 0.0, 0.0, 8.0, 0.0, 0.0]

[prior]
lower = [1425.0, 1.07, 1.58]
upper = [1575.0, 1.19, 1.75]

[k_box]
lower = [8.0, -1.0]
upper = [10.0, 1.0]

[cubature]
n = [2, 2, 2]

[schedule]
dt = 0.5
t_f = 9.0

[[obstacles]]
center = [40.0, 3.7]
generators = [[2.4, 0.0], [0.0, 1.1]]
first = 0
last = 17

[atlas]
source = "sample"
n_k = 5

[planner]
n_starts = 2
k0 = [9.0, 0.0]

[evaluate]
grid_n = 5
"#;

fn edit(from: &str, to: &str) -> String {
    assert!(BASE.contains(from), "fixture lacks {from:?}");
    BASE.replacen(from, to, 1)
}

fn malformed() -> Vec<(&'static str, String)> {
    vec![
        ("syntax", edit("seed = 5", "seed = = 5")),
        ("missing version", edit("version = 1", "")),
        ("future version", edit("version = 1", "version = 2")),
        ("unknown top-level key", edit("seed = 5", "seed = 5\nmood = \"sunny\"")),
        ("negative seed", edit("seed = 5", "seed = -5")),
        ("unknown model kind", edit("kind = \"vehicle\"", "kind = \"hovercraft\"")),
        ("unknown maneuver", edit("\"lane_change\"", "\"u_turn\"")),
        ("short x0", edit("x0 = [0.0, 0.0, 0.0, 8.0, 0.0, 0.0]", "x0 = [0.0, 0.0, 8.0]")),
        ("negative vehicle constant", edit("maneuver = \"lane_change\"", "maneuver = \"lane_change\"\nparams = { izz = -1.0 }")),
        ("prior axes", edit("lower = [1425.0, 1.07, 1.58]", "lower = [1425.0, 1.07]")),
        ("prior inverted", edit("upper = [1575.0, 1.19, 1.75]", "upper = [1575.0, 1.19, 1.50]")),
        ("k box outside maneuver range", edit("upper = [10.0, 1.0]", "upper = [12.0, 1.0]")),
        ("cubature axes", edit("n = [2, 2, 2]", "n = [2, 2]")),
        ("cubature zero", edit("n = [2, 2, 2]", "n = [2, 0, 2]")),
        ("schedule divisibility", edit("t_f = 9.0", "t_f = 9.2")),
        ("schedule step", edit("dt = 0.5", "dt = -0.5")),
        ("obstacle generator length", edit("[[2.4, 0.0], [0.0, 1.1]]", "[[2.4, 0.0, 1.0], [0.0, 1.1]]")),
        ("obstacle interval range", edit("first = 0\nlast = 17", "first = 9\nlast = 3")),
        ("atlas grid", edit("n_k = 5", "n_k = 1")),
        ("atlas source", edit("source = \"sample\"", "source = \"oracle\"")),
        ("planner starts", edit("n_starts = 2", "n_starts = 0")),
        ("planner k0 outside K", edit("k0 = [9.0, 0.0]", "k0 = [11.0, 0.0]")),
        ("evaluate grid", edit("grid_n = 5", "grid_n = 1")),
        ("obstacles without atlas", edit("[atlas]\nsource = \"sample\"\nn_k = 5\n", "")),
    ]
}

#[test]
fn base_fixture_is_valid() {
    Scenario::from_toml(BASE).unwrap();
}

#[test]
fn every_malformed_scenario_gets_its_own_diagnostic() {
    let cases = malformed();
    assert!(cases.len() >= 20);
    let mut seen = HashSet::new();
    for (name, text) in &cases {
        let err = match Scenario::from_toml(text) {
            Ok(_) => panic!("{name}: accepted"),
            Err(e) => e.to_string(),
        };
        assert!(seen.insert(err.clone()), "{name}: diagnostic repeats another case: {err}");
    }
}

#[test]
fn diagnostics_name_the_field() {
    let cases: Vec<(&str, &str)> = vec![
        ("k box outside maneuver range", "k_box[0]"),
        ("cubature zero", "cubature.n[1]"),
        ("schedule divisibility", "schedule.t_f"),
        ("obstacle generator length", "obstacles[0].generators[0]"),
        ("planner k0 outside K", "planner.k0"),
        ("prior inverted", "prior[2]"),
    ];
    let all = malformed();
    for (name, field) in cases {
        let text = &all.iter().find(|(n, _)| *n == name).unwrap().1;
        let err = Scenario::from_toml(text).unwrap_err();
        assert_eq!(err.field, field, "{name}: {err}");
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_infoplan"))
}

#[test]
fn invalid_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in malformed() {
        let path = dir.path().join("s.toml");
        std::fs::write(&path, text).unwrap();
        let out = bin().args(["validate", "--scenario"]).arg(&path).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "{name}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains("invalid scenario"), "{name}: {stderr}");
    }
    let out = bin().args(["plan", "--scenario", "/no/such/file.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["plan", "--bogus-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_atlas_file_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(
        &path,
        edit("source = \"sample\"\nn_k = 5", "source = \"file\"\npath = \"absent.json\""),
    )
    .unwrap();
    let out = bin().args(["validate", "--scenario"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.json"));
}
