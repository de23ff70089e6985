mod common;

use std::process::Command;

#[test]
fn corrupted_streams_recover() {
    let detail = common::cleaning_recovery(100).unwrap_or_else(|e| panic!("{e}"));
    println!("{detail}");
}

#[test]
fn heavy_corruption_recovers() {
    use browsetrace::synth;
    for seed in 0..20 {
        let t = common::random_trace(seed);
        let (corrupted, manifest) = synth::corrupt(&t.events, 0.5, 1.0, seed);
        let out = browsetrace::cleaning::clean(corrupted, usize::MAX).unwrap();
        assert_eq!(out.report.duplicates_removed, manifest.duplicates());
        let closes = t.events.iter().filter(|e| matches!(e.kind, browsetrace::EventKind::SessionClose { .. })).count();
        assert_eq!(out.report.sessions_closed_by_estimate, closes);
    }
}

#[test]
fn cli_gen_manifest_matches_clean_report() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_browsetrace");
    let (trace, manifest, report) = (dir.path().join("t.ndjsonl"), dir.path().join("m.txt"), dir.path().join("r.txt"));
    let ok = Command::new(bin)
        .args(["gen", "--random", "4", "--seed", "4", "--duplicates", "0.2", "--drop-closes", "0.5", "--out"])
        .arg(&trace)
        .arg("--manifest")
        .arg(&manifest)
        .status()
        .unwrap();
    assert!(ok.success());
    let ok = Command::new(bin)
        .args(["clean", "--in"])
        .arg(&trace)
        .arg("--out")
        .arg(dir.path().join("c.ndjsonl"))
        .arg("--report")
        .arg(&report)
        .status()
        .unwrap();
    assert!(ok.success());
    let m = std::fs::read_to_string(&manifest).unwrap();
    let dups = m.lines().filter(|l| l.starts_with("duplicate ")).count();
    let dropped = m.lines().filter(|l| l.starts_with("dropped ")).count();
    let r = std::fs::read_to_string(&report).unwrap();
    let get = |k: &str| -> usize { r.lines().find_map(|l| l.strip_prefix(&format!("{k}="))).unwrap().parse().unwrap() };
    assert!(dups > 0 && dropped > 0);
    assert_eq!(get("duplicates_removed"), dups);
    assert_eq!(get("sessions_closed_by_estimate") + get("windows_closed_by_estimate"), dropped);
}
