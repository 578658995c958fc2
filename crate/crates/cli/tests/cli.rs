use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rlnoc(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlnoc"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn core_data(file: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data")
        .join(file)
        .to_string_lossy()
        .into_owned()
}

#[test]
fn gen_topology_writes_rings() {
    let dir = tempfile::tempdir().unwrap();
    let o = rlnoc(dir.path(), &["gen-topology", "--grid", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("10 rings"));
    let text = fs::read_to_string(dir.path().join("topology.json")).unwrap();
    assert!(text.contains("\"rings\""));
}

#[test]
fn generated_flowset_round_trips_through_analyze_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let o = rlnoc(dir.path(), &["gen-flowset", "--grid", "4", "--flows", "12", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let file = dir.path().join("flowset.json");
    let file = file.to_str().unwrap();

    let o = rlnoc(dir.path(), &["analyze", file, "--mode", "both"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("analysis.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 12);
    assert!(stdout(&o).contains("proposed: schedulable"), "{}", stdout(&o));

    let o = rlnoc(dir.path(), &["simulate", file, "--mode", "both", "--seed", "5", "--protocol-check"]);
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    for mode in ["baseline", "proposed"] {
        let trace = fs::read_to_string(dir.path().join(format!("trace_{mode}.csv"))).unwrap();
        assert!(trace.starts_with("flow_id,packet_seq,release,inject_start,eject_end,deflections,latency,violated_bound\n"));
        assert!(trace.lines().skip(1).all(|l| l.ends_with(",false")));
        assert!(dir.path().join(format!("summary_{mode}.csv")).exists());
    }
}

#[test]
fn single_flow_without_deflections_has_equal_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("one.json");
    fs::write(
        &file,
        r#"{"rows": 4, "cols": 4, "flows": [{"id": 0, "T": 1000, "D": 1000, "L": 16, "J": 0, "src": 0, "dst": 5, "maxloop": 0}]}"#,
    )
    .unwrap();
    let o = rlnoc(dir.path(), &["analyze", file.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("analysis.csv")).unwrap();
    let r: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(6).unwrap()).collect();
    assert_eq!(r.len(), 2);
    assert_eq!(r[0], r[1]);
}

#[test]
fn malformed_flowset_names_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    fs::write(&file, "{\"rows\": 4, \"cols\": 4,\n \"flows\": [{\"id\": 0, \"T\": 10, \"D\": 10, \"L\": 4, \"J\": 0, \"src\": 0}]}").unwrap();
    let o = rlnoc(dir.path(), &["analyze", file.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("dst") && err.contains("line 2"), "{err}");
}

#[test]
fn bound_violation_exits_nonzero() {
    // two flows saturating one ejection link: unschedulable, so latencies overrun the bounds
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("hog.json");
    fs::write(
        &file,
        r#"{"rows": 2, "cols": 2, "flows": [
            {"id": 0, "T": 40, "D": 40, "L": 30, "J": 0, "src": 0, "dst": 1},
            {"id": 1, "T": 40, "D": 40, "L": 30, "J": 0, "src": 2, "dst": 1}]}"#,
    )
    .unwrap();
    let o = rlnoc(dir.path(), &["simulate", file.to_str().unwrap(), "--mode", "baseline", "--horizon", "400"]);
    assert_eq!(o.status.code(), Some(2), "{}\n{}", stdout(&o), stderr(&o));
    let trace = fs::read_to_string(dir.path().join("trace_baseline.csv")).unwrap();
    assert!(trace.lines().any(|l| l.ends_with(",true")));
}

#[test]
fn sweep_row_count_follows_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    fs::write(
        &cfg,
        r#"{"grids": [4], "flows": {"start": 20, "end": 60, "step": 20}, "flowsets_per_point": 3, "packet_ranges": [[16, 48]], "seed": 9}"#,
    )
    .unwrap();
    let o = rlnoc(dir.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--jobs", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 4 * 2);
    let again = tempfile::tempdir().unwrap();
    rlnoc(again.path(), &["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(csv, fs::read_to_string(again.path().join("sweep.csv")).unwrap());
    assert!(fs::read_to_string(dir.path().join("sweep_config.json")).unwrap().contains("\"seed\": 9"));
}

#[test]
fn default_sweep_config_parses() {
    let text = fs::read_to_string(core_data("fig3.json")).unwrap();
    let config = rlnoc_core::bench::SweepConfig::parse(&text).unwrap();
    // 14 load points x 4 maxloop values x 2 modes per grid and packet range
    assert_eq!(config.flows.values().len() * config.maxloops.len() * 2, 112);
}

#[test]
fn improve_reports_and_rejects_oversized_traffic() {
    let dir = tempfile::tempdir().unwrap();
    let traffic = core_data("av_sample.json");
    let o = rlnoc(dir.path(), &["improve", "--traffic", &traffic, "--grid", "4", "--mappings", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("pooled mean"));
    let csv = fs::read_to_string(dir.path().join("improvement.csv")).unwrap();
    assert!(csv.starts_with("mapping_id,flow_id,R_base,R_prop,improvement_pct\n"));
    assert_eq!(csv.lines().count(), 1 + 5 * 39);

    let o = rlnoc(dir.path(), &["improve", "--traffic", &traffic, "--grid", "3"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("endpoints"));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rlnoc"))
        .env("RLNOC_OUT", dir.path())
        .args(["gen-topology", "--grid", "3"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("topology.json").exists());
}
