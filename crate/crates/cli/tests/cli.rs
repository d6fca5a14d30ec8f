use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stdgm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stdgm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("STDGM_THREADS")
        .output()
        .unwrap()
}

fn error_report(o: &Output) -> serde_json::Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).expect("stderr is one JSON object")
}

const LINKED: [&str; 4] = ["--sim-kind", "linked-cluster", "--link", "1,2,6,30,0.02"];

#[test]
fn unknown_flag_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stdgm(&["graph", "--no-such-flag"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_report(&o)["error"], "usage");
}

#[test]
fn missing_threshold_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stdgm(&["graph", "--sim-kind", "poisson"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(stdgm(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn two_components_rejected_for_partial_and_graph() {
    let tmp = tempfile::tempdir().unwrap();
    for cmd in ["partial", "graph"] {
        let o = stdgm(&[cmd, "--sim-kind", "poisson", "--rates", "300,300", "--xi", "0.5"], tmp.path());
        assert_eq!(o.status.code(), Some(1));
        let r = error_report(&o);
        assert_eq!(r["error"], "contract");
        assert!(r["message"].as_str().unwrap().contains("d >= 3"));
    }
}

#[test]
fn pipeline_recovers_planted_edge_at_calibrated_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["pipeline", "--seed", "3", "--xi", "null:q95"];
    args.extend(LINKED);
    let o = stdgm(&args, tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dot = fs::read_to_string(tmp.path().join("graph.dot")).unwrap();
    let edges: Vec<&str> = dot.lines().filter(|l| l.contains(" -- ")).collect();
    assert_eq!(edges.len(), 1, "{dot}");
    assert!(edges[0].trim_start().starts_with("\"c1\" -- \"c2\""));
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("events.json")).unwrap()).unwrap();
    assert_eq!(sidecar["truth_edges"], serde_json::json!([[1, 2]]));
    for f in ["calibration.csv", "classical.csv", "spectra.csv", "polar.csv", "partial.csv", "invert.csv", "graph.json"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn per_slice_writes_one_graph_per_step() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stdgm(&["graph", "--sim-kind", "poisson", "--t-steps", "4", "--xi", "0.9", "--per-slice"], tmp.path());
    assert!(o.status.success());
    for t in 1..=4 {
        assert!(tmp.path().join(format!("slice_{t}.dot")).exists());
    }
    assert!(!tmp.path().join("slice_5.dot").exists());
    assert!(tmp.path().join("graph.dot").exists());
    let persistence = fs::read_to_string(tmp.path().join("persistence.csv")).unwrap();
    assert_eq!(persistence.lines().filter(|l| !l.starts_with('#')).count(), 1 + 3 * 4);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# grid\np_max = 8\nq_min = -8\nq_max = 8\nsim_kind = poisson\nxi = 0.5\nformat = json\n").unwrap();
    let out = tmp.path().join("o");
    let o = stdgm(&["graph", "--config", cfg.to_str().unwrap(), "--q-min", "-6", "--q-max", "6"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let g: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("graph.json")).unwrap()).unwrap();
    assert_eq!(g["grid"]["p_max"], 8);
    assert_eq!(g["grid"]["q_min"], -6);
    assert_eq!(g["grid"]["q_max"], 6);
    assert_eq!(g["provenance"]["config"]["spectral"]["q_max"], 6);

    fs::write(&cfg, "pmax = 8\n").unwrap();
    let o = stdgm(&["graph", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_threads_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_stdgm"))
        .args(["spectra", "--sim-kind", "poisson", "--out"])
        .arg(tmp.path())
        .env("STDGM_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn every_csv_carries_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["pipeline", "--xi", "0.95", "--t-steps", "2"];
    args.extend(LINKED);
    assert!(stdgm(&args, tmp.path()).status.success());
    let mut hash = None;
    for e in fs::read_dir(tmp.path()).unwrap() {
        let path = e.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let h = match path.extension().and_then(|x| x.to_str()) {
            Some("csv") => {
                for key in ["# grid: ", "# normalisation: ", "# smoothing: ", "# config: "] {
                    assert!(text.lines().any(|l| l.starts_with(key)), "{} lacks {key}", path.display());
                }
                text.lines().find_map(|l| l.strip_prefix("# config_hash: ")).map(str::to_string)
            }
            Some("dot") => {
                assert!(text.contains("normalisation=") && text.contains("smoothing="));
                text.split("config_hash=\"").nth(1).map(|r| r[..64].to_string())
            }
            _ => continue,
        };
        let h = h.unwrap_or_else(|| panic!("{} has no config hash", path.display()));
        assert_eq!(hash.get_or_insert(h.clone()), &h);
    }
}

#[test]
fn ingest_removes_duplicates_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("raw.csv");
    fs::write(
        &input,
        "lon,lat,date,category\n2,10,2016-04-03,a\n4,20,2016-05-09,b\n3,15,2016-06-11,c\n3,15,2016-06-11,c\n2.5,12,2016-07-30,a\n",
    )
    .unwrap();
    let first = tmp.path().join("first");
    let o = stdgm(&["ingest", "--input", input.to_str().unwrap(), "--col", "x=lon,y=lat,time=date,type=category"], &first);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1 duplicate removed"));
    let events = fs::read_to_string(first.join("events.csv")).unwrap();
    let rows = |t: &str| t.lines().filter(|l| !l.starts_with('#')).skip(1).map(str::to_string).collect::<Vec<_>>();
    assert_eq!(rows(&events).len(), 4);
    assert!(rows(&events)[2].ends_with(",3,c"));

    let second = tmp.path().join("second");
    let o = stdgm(&["ingest", "--input", first.join("events.csv").to_str().unwrap(), "--time-is-index"], &second);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&fs::read_to_string(second.join("events.csv")).unwrap()), rows(&events));
}
