use hbn_cce::config::{preset, RunConfig};
use std::path::Path;
use std::process::{Command, Output};

fn hbn_cce(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hbn-cce"));
    cmd.args(args).env_remove("HBN_CCE_OUTPUT_DIR").env_remove("HBN_CCE_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

/// A cheap configuration: the `keep` strongest spins of a 6 Å bath at 50 mT.
fn small_config(keep: Option<usize>) -> RunConfig {
    let mut c = preset("figure-4").unwrap();
    c.lattice.radius = 6.0;
    c.keep_strongest = keep;
    c.sweep = None;
    c.ablations.clear();
    c.point.policy.max_order = 2;
    c.point.policy.r_bath = 6.0;
    c.point.policy.core_conditioning = 0;
    c.point.times = hbn_cce::sweep::TimeGrid::Fixed { t_max_us: 1.0, points: 41 };
    c
}

fn write(dir: &Path, name: &str, c: &RunConfig) -> String {
    let p = dir.join(name);
    std::fs::write(&p, c.to_json()).unwrap();
    p.display().to_string()
}

#[test]
fn validate_reports_ok_with_bath_preview() {
    let o = hbn_cce(&["validate", "--preset", "table-1"], &[]);
    assert!(o.status.success(), "{}", text(&o));
    let out = text(&o);
    assert!(out.starts_with("OK: 3627 bath spins"), "{out}");
}

#[test]
fn validate_rejects_negative_e_and_reports_all_problems() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(None);
    c.point.central.e_mhz = -5.0;
    c.point.first_shell_polarization = 2.0;
    let o = hbn_cce(&["validate", &write(dir.path(), "c.json", &c)], &[]);
    assert_eq!(o.status.code(), Some(1));
    let out = text(&o);
    assert!(out.contains("E is a magnitude"), "{out}");
    assert!(out.contains("first_shell_polarization"), "{out}");
}

#[test]
fn validate_lists_missing_hyperfine_sites() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(None);
    let full = c.dataset().unwrap();
    let kept: Vec<_> = full.entries().iter().filter(|e| e.position[2].abs() < 1.0).copied().collect();
    let partial = hbn_cce::bath::HyperfineDataset::new(kept, full.reference(hbn_cce::constants::Element::B), full.reference(hbn_cce::constants::Element::N)).unwrap();
    let csv = dir.path().join("partial.csv");
    partial.save_csv(&csv).unwrap();
    let mut c = c;
    c.hyperfine_dataset = Some(hbn_cce::config::DatasetSource {
        path: csv,
        boron_reference: partial.reference(hbn_cce::constants::Element::B),
        nitrogen_reference: partial.reference(hbn_cce::constants::Element::N),
    });
    let o = hbn_cce(&["validate", &write(dir.path(), "c.json", &c)], &[]);
    assert_eq!(o.status.code(), Some(1));
    let out = text(&o);
    assert!(out.contains("N (") || out.contains("B ("), "{out}");
}

#[test]
fn unknown_keys_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    let mut v: serde_json::Value = serde_json::from_str(&small_config(None).to_json()).unwrap();
    v["bogus"] = serde_json::json!(true);
    std::fs::write(&p, v.to_string()).unwrap();
    let o = hbn_cce(&["validate", p.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
}

#[test]
fn oracle_check_passes_on_two_spins_and_refuses_large_baths() {
    let dir = tempfile::tempdir().unwrap();
    let two = write(dir.path(), "two.json", &small_config(Some(2)));
    let o = hbn_cce(&["oracle-check", &two], &[]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("PASS"));

    let big = write(dir.path(), "big.json", &small_config(Some(10)));
    let o = hbn_cce(&["oracle-check", &big], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("too large"), "{}", text(&o));
}

#[test]
fn run_writes_hashed_outputs_and_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(None);
    c.sweep = Some(hbn_cce::sweep::SweepSpec::new(hbn_cce::sweep::SweepAxis::Bz, vec![20.0, 400.0]));
    let cfg = write(dir.path(), "c.json", &c);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let o = hbn_cce(&["run", &cfg, "--output-dir", out_a.to_str().unwrap(), "--threads", "1"], &[]);
    assert!(o.status.success(), "{}", text(&o));
    let o = hbn_cce(&["run", &cfg], &[("HBN_CCE_OUTPUT_DIR", out_b.to_str().unwrap()), ("HBN_CCE_THREADS", "1")]);
    assert!(o.status.success(), "{}", text(&o));

    let hash = c.sha256();
    let sweep = std::fs::read_to_string(out_a.join("sweep.csv")).unwrap();
    let mut lines = sweep.lines();
    assert_eq!(lines.next(), Some(format!("# config_sha256={hash}").as_str()));
    assert_eq!(lines.next(), Some("point,T2_us,stretch_n,region,degraded_fraction"));
    assert_eq!(sweep.lines().count(), 4);
    assert_eq!(hbn_cce::output::csv_config_hash(&out_a.join("sweep.csv")).unwrap(), Some(hash.clone()));
    for name in ["census.json", "provenance.json"] {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_a.join(name)).unwrap()).unwrap();
        assert_eq!(v["config_sha256"], hash, "{name}");
    }
    let prov: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_a.join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["threads"], 1);
    assert!(prov["constants_version"].is_string());
    for name in ["sweep.csv", "census.json"] {
        assert_eq!(std::fs::read(out_a.join(name)).unwrap(), std::fs::read(out_b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn empty_sweep_is_a_warning_noop() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(None);
    c.sweep = Some(hbn_cce::sweep::SweepSpec::new(hbn_cce::sweep::SweepAxis::Bz, Vec::new()));
    let cfg = write(dir.path(), "c.json", &c);
    let out = dir.path().join("out");
    let o = hbn_cce(&["run", &cfg, "--output-dir", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("no points"), "{}", text(&o));
    assert!(!out.join("sweep.csv").exists());
}

#[test]
fn preset_prints_loadable_json() {
    let o = hbn_cce(&["preset", "figure-5"], &[]);
    assert!(o.status.success());
    let c = RunConfig::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(c, preset("figure-5").unwrap());
}
