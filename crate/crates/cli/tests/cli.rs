use std::path::Path;
use std::process::Command;

use relief_core::build_rts24;
use relief_core::netmodel::write_case;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn relief(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_relief"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

/// Data rows of a titled CSV block in the printed report.
fn block(stdout: &str, name: &str) -> Vec<Vec<String>> {
    let title = format!("## {name}");
    stdout
        .lines()
        .skip_while(|l| *l != title)
        .skip(2)
        .take_while(|l| !l.is_empty())
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn case_file(dir: &Path, edit: impl FnOnce(&mut relief_core::SystemCase)) -> String {
    let mut case = build_rts24();
    edit(&mut case);
    let path = dir.join("case.json");
    write_case(&case, &path).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn clear_reports_ten_gencos_and_ten_discos() {
    let r = relief(&["clear"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(block(&r.stdout, "stage1_gencos").len(), 10);
    assert_eq!(block(&r.stdout, "stage1_demands").len(), 10);
    assert!(r.stdout.contains("# defaulted:"));
    assert!(r.stdout.contains("FAIL overload: line 23"));
}

#[test]
fn missing_case_file_is_an_input_error() {
    let r = relief(&["clear", "--case", "/nonexistent/case.json"]);
    assert_eq!(r.code, 2);
    assert_eq!(r.stderr.lines().count(), 1, "{}", r.stderr);
    assert!(r.stderr.contains("/nonexistent/case.json"));
}

#[test]
fn hour_out_of_range_is_an_input_error() {
    assert_eq!(relief(&["clear", "--hour", "25"]).code, 2);
}

#[test]
fn infeasible_bounds_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = case_file(dir.path(), |c| {
        for g in &mut c.gencos {
            g.p_min = g.p_max;
        }
    });
    let r = relief(&["clear", "--case", &path, "--hour", "1"]);
    assert_eq!(r.code, 1, "{}", r.stderr);
    assert!(r.stderr.contains("infeasible"));
}

#[test]
fn facts_without_devices_names_the_missing_spec() {
    let dir = tempfile::tempdir().unwrap();
    let path = case_file(dir.path(), |c| c.facts.clear());
    let r = relief(&["cmp", "--case", &path, "--facts", "on"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("FACTS device specification"), "{}", r.stderr);
}

#[test]
fn uncongested_lossless_case_needs_no_redispatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = case_file(dir.path(), |c| {
        for l in &mut c.lines {
            l.r = 0.0;
            l.p_max *= 10.0;
        }
    });
    let r = relief(&["cmp", "--case", &path, "--facts", "off", "--dr", "off", "--hour", "1"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let summary = block(&r.stdout, "cmp_summary");
    let cost: f64 = summary[0][0].parse().unwrap();
    assert!(cost.abs() < 1e-2, "cost {cost}");
    assert!(block(&r.stdout, "cmp_facts").is_empty());
}

#[test]
fn joint_cmp_reports_both_setpoints() {
    let r = relief(&["cmp", "--facts", "on", "--dr", "on"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let facts = block(&r.stdout, "cmp_facts");
    let devices: Vec<&str> = facts.iter().map(|row| row[0].as_str()).collect();
    assert_eq!(devices, ["tcsc", "statcom"]);
    assert_eq!(block(&r.stdout, "cmp_lmp").len(), 24);
}

#[test]
fn compare_gives_four_cases_and_passing_trends() {
    let r = relief(&["compare"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = block(&r.stdout, "compare");
    let cases: Vec<&str> = rows.iter().map(|row| row[0].as_str()).collect();
    assert_eq!(cases, ["none", "dr_only", "facts_only", "joint"]);
    assert!(rows.iter().all(|row| row[1] == "ok"));
    assert!(r.stdout.contains("PASS monotone relief"));
    assert!(r.stdout.contains("PASS lmp smoothing"));
    assert!(r.stdout.contains("PASS loss reduction"));
}

#[test]
fn pem_block_has_two_points_per_farm() {
    let r = relief(&["pem"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let points = block(&r.stdout, "pem_points");
    assert_eq!(points.len(), 6);
    let total: f64 = points.iter().map(|row| row[8].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-5);
}

#[test]
fn sampled_columns_repeat_for_a_fixed_seed() {
    let args = ["pem", "--samples", "300", "--seed", "7"];
    let a = relief(&args);
    let b = relief(&args);
    assert_eq!(a.code, 0, "{}", a.stderr);
    let summary = block(&a.stdout, "pem_summary");
    assert_eq!(summary[0].len(), 7);
    assert_eq!(summary, block(&b.stdout, "pem_summary"));
    assert!(a.stdout.contains("pem lmp mean agrees with sampling"));
}

#[test]
fn out_dir_holds_deterministic_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let r = relief(&["cmp", "--out", d.to_str().unwrap()]);
        assert_eq!(r.code, 0, "{}", r.stderr);
    }
    for name in ["report.json", "cmp_lmp.csv", "cmp_flows.csv", "stage1_gencos.csv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["manifest"]["subcommand"], "cmp");
    assert!(report["manifest"].get("wall_clock_s").is_none());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["wall_clock_s"].as_f64().unwrap() > 0.0);
    let header = std::fs::read_to_string(a.join("cmp_lmp.csv")).unwrap();
    assert!(header.starts_with("bus,lmp_usd_per_mwh\n"));
}

#[test]
fn report_covers_the_whole_day() {
    let r = relief(&["report", "--facts", "off", "--dr", "off"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(block(&r.stdout, "day").len(), 24);
    assert_eq!(block(&r.stdout, "day_load_profile").len(), 24);
    assert!(r.stdout.contains("PASS all hours solved"));
    assert!(r.stdout.contains("PASS dr flattens the load"));
}
