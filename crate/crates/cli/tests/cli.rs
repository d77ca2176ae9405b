use std::path::PathBuf;
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fx(rel: &str) -> String {
    root().join("fixtures").join(rel).display().to_string()
}

fn drcgra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drcgra")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("drcgra-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn analyze_line_format() {
    let out = drcgra(&["analyze", &fx("patterns/scenario4.dfg")]);
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "dep 3->3 slot=0 diff=1 pattern=BackgroundMemory mem=1 path_len=4\n"
    );
}

#[test]
fn every_command_is_byte_deterministic() {
    let d = scratch("det");
    let trace = |i: usize| d.join(format!("t{i}.log")).display().to_string();
    let out = |i: usize, ext: &str| d.join(format!("o{i}.{ext}")).display().to_string();
    let mut runs: Vec<Vec<Vec<u8>>> = Vec::new();
    for i in 0..2 {
        let (t, csv1, csv2, json) = (trace(i), out(i, "sweep.csv"), out(i, "suite.csv"), out(i, "json"));
        let cmds: Vec<Vec<String>> = vec![
            vec!["analyze".into(), fx("consecutive.dfg")],
            vec!["map".into(), fx("wrf/wrf_mem.dfg")],
            vec![
                "sim".into(),
                fx("patterns/scenario3.dfg"),
                "--mode".into(),
                "dr".into(),
                "--threads".into(),
                "32".into(),
                "--trace".into(),
                t.clone(),
            ],
            vec!["sweep".into(), "--exp".into(), fx("wrf/exp_nomem.json"), "--out".into(), csv1.clone()],
            vec!["suite".into(), "--dir".into(), fx("patterns"), "--out".into(), csv2.clone()],
            vec!["trace".into(), "--in".into(), fx("trace/stream_small.trc"), "--out".into(), json.clone()],
        ];
        let mut bytes = Vec::new();
        for c in &cmds {
            let args: Vec<&str> = c.iter().map(String::as_str).collect();
            let o = drcgra(&args);
            assert!(o.status.success(), "{c:?}: {}", String::from_utf8_lossy(&o.stderr));
            bytes.push(o.stdout);
        }
        for f in [t, csv1, csv2, json] {
            bytes.push(std::fs::read(f).unwrap());
        }
        runs.push(bytes);
    }
    assert_eq!(runs[0], runs[1]);
    std::fs::remove_dir_all(&d).unwrap();
}

#[test]
fn errors_carry_codes_and_exit_status() {
    let d = scratch("err");
    let bad = d.join("bad.dfg");
    std::fs::write(&bad, "node 0 const 1\nedge 0 99 0\n").unwrap();
    let o = drcgra(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[E-DANGLING]"));

    std::fs::write(&bad, "node 0 const 1\nnode 1 add\nedge 0 1 1\nback 1 1 0 3\nlivein x 1 0 0 0 0\nliveout 1\n")
        .unwrap();
    let grid = d.join("grid.json");
    std::fs::write(&grid, r#"{"rows": 8, "cols": 8, "token_buffer_depth": 1}"#).unwrap();
    let o =
        drcgra(&["sim", bad.to_str().unwrap(), "--mode", "dr", "--threads", "16", "--grid", grid.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[E-DEADLOCK]"));

    let trc = d.join("x.trc");
    std::fs::write(&trc, "r,1\nr,1,2,3\n").unwrap();
    let o = drcgra(&["trace", "--in", trc.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(7));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[E-TRACE-MIXED]"));

    let o = drcgra(&["sim", &fx("accumulator.dfg"), "--mode", "dr", "--threads", "0"]);
    assert_eq!(o.status.code(), Some(5));
    std::fs::remove_dir_all(&d).unwrap();
}
