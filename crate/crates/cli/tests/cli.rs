use std::fs;
use std::process::{Command, Output};

fn prufer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prufer"))
        .args(args)
        .env_remove("PRUFER_WORKERS")
        .output()
        .expect("run prufer")
}

fn stdout(args: &[&str]) -> String {
    let out = prufer(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    prufer(args).status.code().unwrap()
}

#[test]
fn decode_worked_example() {
    assert_eq!(
        stdout(&["decode", "--n", "7", "--string", "4,3,2,2,7"]),
        "7; 1-4, 3-4, 2-3, 2-5, 2-7, 6-7\n"
    );
    assert_eq!(
        stdout(&["encode", "--tree", "7; 1-4, 3-4, 2-3, 2-5, 2-7, 6-7"]),
        "7; 4,3,2,2,7\n"
    );
}

#[test]
fn codec_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let strings = dir.path().join("strings.txt");
    fs::write(&strings, "# comment\n7; 4,3,2,2,7\n\n5; 1,1,1\n").unwrap();
    let trees = dir.path().join("trees.txt");
    fs::write(
        &trees,
        stdout(&["decode", "--input", strings.to_str().unwrap()]),
    )
    .unwrap();
    assert_eq!(
        stdout(&["encode", "--input", trees.to_str().unwrap()]),
        "7; 4,3,2,2,7\n5; 1,1,1\n"
    );
}

#[test]
fn dist_of_identical_and_different_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    fs::write(&a, "7; 1-4, 3-4, 2-3, 2-5, 2-7, 6-7\n").unwrap();
    fs::write(&b, "7; 1-4, 3-4, 2-3, 2-5, 2-6, 6-7\n").unwrap();
    let (a, b) = (a.to_str().unwrap(), b.to_str().unwrap());
    assert_eq!(stdout(&["dist", "--tree-a", a, "--tree-b", a]), "0\n");
    assert_eq!(stdout(&["dist", "--tree-a", a, "--tree-b", b]), "1\n");
}

#[test]
fn enumerate_three_vertices() {
    let out = stdout(&["enumerate", "--n", "3", "--mu", "1"]);
    assert_eq!(
        out,
        "n,mu,ell,count,total,prob_rational,prob_decimal\n3,1,1,6,6,1/1,1.0\n"
    );
}

#[test]
fn mutate_reports() {
    let out = stdout(&[
        "mutate",
        "--n",
        "7",
        "--string",
        "4,3,2,2,7",
        "--mu",
        "5",
        "--value",
        "6",
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["delta"], 1);
    assert_eq!(v["E"], true);
    assert_eq!(v["tree_star"], "7; 1-4, 3-4, 2-3, 2-5, 2-6, 6-7");

    let random = ["mutate", "--random", "--seed", "42", "--trace"];
    assert_eq!(stdout(&random), stdout(&random));
    assert_ne!(
        stdout(&random),
        stdout(&["mutate", "--random", "--seed", "43", "--trace"])
    );
}

#[test]
fn trace_is_json_lines() {
    let out = stdout(&[
        "trace",
        "--n",
        "7",
        "--string",
        "4,3,2,2,7",
        "--mu",
        "2",
        "--value",
        "6",
    ]);
    let lines: Vec<serde_json::Value> = out
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 7);
    let header = &lines[0];
    for key in [
        "n",
        "mu",
        "delta_total",
        "flags",
        "tau0",
        "tau_delta",
        "b_at_tau0",
    ] {
        assert!(header.get(key).is_some(), "{key}");
    }
    let total: i64 = lines[1..]
        .iter()
        .map(|s| s["delta_j"].as_i64().unwrap())
        .sum();
    assert_eq!(header["delta_total"].as_i64().unwrap(), total);
    for key in [
        "j", "y", "ystar", "delta_j", "a", "b", "c", "z", "zstar", "case", "H", "Hstar",
    ] {
        assert!(lines[1].get(key).is_some(), "{key}");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(
        code(&["decode", "--n", "7", "--string", "4,3,2,2,7", "--bogus"]),
        2
    );
    assert_eq!(
        code(&[
            "mutate",
            "--n",
            "7",
            "--string",
            "4,3,2,2,7",
            "--mu",
            "5",
            "--value",
            "7"
        ]),
        2
    );
    assert_eq!(
        code(&[
            "mutate",
            "--n",
            "7",
            "--string",
            "4,3,2,2,7",
            "--mu",
            "9",
            "--value",
            "1"
        ]),
        2
    );
    assert_eq!(code(&["simulate", "--n", "10", "--samples", "5"]), 2);
    assert_eq!(
        code(&["simulate", "--n", "10", "--mu", "9", "--samples", "5"]),
        2
    );
    assert_eq!(code(&["enumerate", "--n", "10"]), 3);
    assert_eq!(code(&["enumerate", "--n", "8", "--cap", "7"]), 3);
    assert_eq!(code(&["decode", "--n", "7", "--string", "4,3"]), 4);
    assert_eq!(code(&["encode", "--tree", "4; 1-2, 2-3, 3-1"]), 4);
    assert_eq!(
        code(&[
            "dist",
            "--tree-a",
            "/nonexistent",
            "--tree-b",
            "/nonexistent"
        ]),
        4
    );
}

/// CSV and JSON outputs of the same run carry the same fields and values.
#[test]
fn schema_round_trip() {
    let runs: [&[&str]; 4] = [
        &["enumerate", "--n", "5", "--mu", "2"],
        &[
            "simulate",
            "--n",
            "30",
            "--mu",
            "4,20",
            "--samples",
            "2000",
            "--seed",
            "1",
            "--max-ell",
            "3",
        ],
        &["simulate", "--n", "30", "--marginal", "--samples", "500"],
        &[
            "sweep",
            "--n",
            "40",
            "--alphas",
            "0.2,0.5",
            "--samples",
            "500",
        ],
    ];
    for args in runs {
        let csv_text = stdout(args);
        let mut json_args = args.to_vec();
        json_args.extend(["--format", "json"]);
        let json_text = stdout(&json_args);

        let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
        let headers: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
        let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
        let objects: Vec<serde_json::Map<String, serde_json::Value>> = json_text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert!(!records.is_empty(), "{args:?}");
        assert_eq!(records.len(), objects.len(), "{args:?}");
        for (rec, obj) in records.iter().zip(&objects) {
            let keys: Vec<&String> = obj.keys().collect();
            assert_eq!(keys.len(), headers.len());
            for (h, field) in headers.iter().zip(rec.iter()) {
                let v = &obj[h];
                let as_text = match v {
                    serde_json::Value::Null => String::new(),
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                if let (Ok(a), Ok(b)) = (field.parse::<f64>(), as_text.parse::<f64>()) {
                    assert_eq!(a, b, "{args:?} {h}");
                } else {
                    assert_eq!(field, as_text, "{args:?} {h}");
                }
            }
        }
    }
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.csv");
    let p = path.to_str().unwrap();
    assert_eq!(stdout(&["enumerate", "--n", "4", "--out", p]), "");
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("n,mu,ell,count,total,prob_rational,prob_decimal\n4,all,1,"));
}

#[test]
fn workers_env_does_not_change_results() {
    let args = [
        "simulate",
        "--n",
        "60",
        "--mu",
        "30",
        "--samples",
        "3000",
        "--seed",
        "8",
    ];
    let one = Command::new(env!("CARGO_BIN_EXE_prufer"))
        .args(args)
        .env("PRUFER_WORKERS", "1")
        .output()
        .unwrap();
    let many = Command::new(env!("CARGO_BIN_EXE_prufer"))
        .args(args)
        .env("PRUFER_WORKERS", "7")
        .output()
        .unwrap();
    assert!(one.status.success());
    assert_eq!(one.stdout, many.stdout);
}
