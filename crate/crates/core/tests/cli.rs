use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn quopt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quopt"))
        .current_dir(dir)
        .env_remove("QUOPT_JOBS")
        .args(args)
        .output()
        .expect("run quopt")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_sphere(dir: &Path) {
    let out = quopt(dir, &["phantom", "--kind", "sphere", "--grid", "24", "--pitch", "0.1", "--radius", "0.6", "-o", "ph.qvol"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

fn stack_bytes(dir: &Path) -> Vec<Vec<u8>> {
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "qstk"))
        .collect();
    names.sort();
    names.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&quopt(tmp.path(), &[])), 2);
    assert_eq!(code(&quopt(tmp.path(), &["frobnicate"])), 2);
    assert_eq!(code(&quopt(tmp.path(), &["extract", "-i", "x", "-o", "y", "--method", "lockin"])), 2);
    assert_eq!(code(&quopt(tmp.path(), &["reconstruct", "-i", "x", "-o", "y", "--filter", "cosine"])), 2);
}

#[test]
fn bad_input_files_exit_3() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("junk.qvol"), b"not a volume").unwrap();
    let out = quopt(tmp.path(), &["simulate", "--phantom", "junk.qvol", "-o", "s"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let out = quopt(tmp.path(), &["simulate", "--phantom", "missing.qvol", "-o", "s"]);
    assert_eq!(code(&out), 3);
    let out = quopt(tmp.path(), &["extract", "-i", ".", "-o", "e"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn fringe_bin_beyond_nyquist_is_rejected() {
    let tmp = TempDir::new().unwrap();
    small_sphere(tmp.path());
    assert_eq!(code(&quopt(tmp.path(), &["simulate", "--phantom", "ph.qvol", "-o", "s", "--angles", "4"])), 0);
    let out = quopt(tmp.path(), &["extract", "-i", "s", "-o", "e", "--bin", "20"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("out of range"), "{}", stderr(&out));
}

#[test]
fn full_chain_writes_expected_files() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_sphere(dir);
    std::fs::write(dir.join("scan.cfg"), "# short scan\nn_steps = 32\nperiods = 4\nangles = 30\n").unwrap();
    let out = quopt(dir, &["simulate", "--phantom", "ph.qvol", "--config", "scan.cfg", "--angles", "36", "-o", "s"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stack_bytes(&dir.join("s")).len(), 36);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("s/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["resolved"]["n_steps"], "32");
    assert_eq!(manifest["resolved"]["angles"], "36");

    let out = quopt(dir, &["extract", "-i", "s", "-o", "e", "--window", "hann"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["vis_000.pfm", "amp_035.pfm", "phase_010.pfm", "vis_000.pgm", "extract.json"] {
        assert!(dir.join("e").join(f).exists(), "{f}");
    }
    let info: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("e/extract.json")).unwrap()).unwrap();
    assert_eq!(info["bins"][0], 4);

    let out = quopt(dir, &["reconstruct", "-i", "e", "-o", "r", "--filter", "shepp-logan", "--cor", "auto"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.join("r/volume.qvol").exists());
    assert!(dir.join("r/slices/slice_012.pgm").exists());
    assert!(dir.join("r/slices/slice_023.pfm").exists());
}

#[test]
fn reruns_from_manifest_and_job_counts_are_identical() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_sphere(dir);
    let base = ["simulate", "--phantom", "ph.qvol", "--angles", "12", "--noise", "poisson", "--seed", "9"];
    let out = quopt(dir, &[&base[..], &["-o", "a", "--jobs", "1"]].concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = Command::new(env!("CARGO_BIN_EXE_quopt"))
        .current_dir(dir)
        .env("QUOPT_JOBS", "3")
        .args([&base[..], &["-o", "b"]].concat())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let out = quopt(dir, &["simulate", "--manifest", "a/manifest.json", "-o", "c"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let a = stack_bytes(&dir.join("a"));
    assert_eq!(a.len(), 12);
    assert_eq!(a, stack_bytes(&dir.join("b")));
    assert_eq!(a, stack_bytes(&dir.join("c")));

    let out = quopt(dir, &["simulate", "--manifest", "a/manifest.json", "--seed", "10", "-o", "d"]);
    assert_eq!(code(&out), 0);
    assert_ne!(a, stack_bytes(&dir.join("d")));
}

#[test]
fn roundtrip_reports_and_exits_by_threshold() {
    let tmp = TempDir::new().unwrap();
    let out = quopt(tmp.path(), &["roundtrip", "--kind", "helix", "-o", "rt"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{text}{}", stderr(&out));
    assert!(text.contains("nrmse") && text.contains("support IoU"));
    assert!(tmp.path().join("rt/report.json").exists());

    let out = quopt(tmp.path(), &["roundtrip", "--kind", "sphere", "--grid", "40", "--pitch", "0.1", "--angles", "3"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stdout));
}
