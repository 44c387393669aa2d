//! Command-line behavior: exit codes, JSON output, overwrite protection,
//! and the self-test runtime bound.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cwls"))
}

fn sample_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/noise_free.epoch")
}

fn embedded_truth(text: &str) -> [f64; 3] {
    let vals: Vec<f64> = text
        .lines()
        .find(|l| l.starts_with("# truth_euler_rad"))
        .expect("truth comment")
        .split_whitespace()
        .skip(2)
        .map(|t| t.parse().unwrap())
        .collect();
    [vals[0], vals[1], vals[2]]
}

#[test]
fn solve_outputs_truth_on_sample_file() {
    let text = std::fs::read_to_string(sample_path()).unwrap();
    let truth = embedded_truth(&text);
    let out = bin().arg("solve").arg(sample_path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let yaw = json["yaw_deg"].as_f64().unwrap().to_radians();
    let pitch = json["pitch_deg"].as_f64().unwrap().to_radians();
    let roll = json["roll_deg"].as_f64().unwrap().to_radians();
    assert!((yaw - truth[0]).abs() < 1e-8, "yaw {yaw} vs {}", truth[0]);
    assert!((pitch - truth[1]).abs() < 1e-8);
    assert!((roll - truth[2]).abs() < 1e-8);
    assert!(json["cost"].as_f64().unwrap() < 1e-12);
}

#[test]
fn solve_oracle_path_uses_ntrue() {
    let out = bin()
        .arg("solve")
        .arg(sample_path())
        .arg("--oracle")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["method"], "oracle");
}

#[test]
fn corrupted_los_line_exits_one_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(sample_path()).unwrap();
    let mut corrupted = String::new();
    let mut bad_line = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.starts_with("los 2") && bad_line == 0 {
            corrupted.push_str("los 2 0.1 broken 0.3\n");
            bad_line = i + 1;
        } else {
            corrupted.push_str(line);
            corrupted.push('\n');
        }
    }
    let path = dir.path().join("bad.epoch");
    std::fs::write(&path, corrupted).unwrap();
    let out = bin().arg("solve").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains(&format!("line {bad_line}")),
        "stderr should cite line {bad_line}: {stderr}"
    );
}

#[test]
fn solver_failure_exits_two() {
    // An unsolvable file: baseline far too short for any integer
    // hypothesis, so the candidate pool is empty.
    let dir = tempfile::tempdir().unwrap();
    let text = "\
lambda 1.9029367279836487e-1
sats 4
baselines 1
xb 0.01
los 0 0.0 0.0 1.0
los 1 0.8 0.0 0.6
los 2 0.0 0.8 0.6
los 3 -0.8 0.0 0.6
dd 1 1 0.4 0.0
dd 1 2 0.4 0.0
dd 1 3 0.4 0.0
";
    let path = dir.path().join("unsolvable.epoch");
    std::fs::write(&path, text).unwrap();
    let out = bin().arg("solve").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn campaign_refuses_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "sats = 4\nbaselines = 1\nsigma_psi_mm = 1\ntrials = 5\nseed = 3\n")
        .unwrap();
    let out_dir = dir.path().join("out");
    let first = bin()
        .arg("campaign")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(first.status.success());
    let second = bin()
        .arg("campaign")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(second.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&second.stderr);
    assert!(stderr.contains("--force"), "{stderr}");
    let forced = bin()
        .arg("campaign")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .arg("--force")
        .output()
        .unwrap();
    assert!(forced.status.success());
}

#[test]
fn campaign_csv_grid_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(
        &cfg,
        "sats = 4,5\nbaselines = 1\nsigma_psi_mm = 9,1\ntrials = 10\nseed = 3\nmethods = cwls, cils\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let run = bin()
        .arg("campaign")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let csv = std::fs::read_to_string(out_dir.join("success_rate_b1.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "sats,method,9mm,1mm");
    // 2 satellite counts x 2 methods, no holes.
    assert_eq!(lines.len(), 5);
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 4);
    }
    assert!(out_dir.join("report.json").exists());
    assert!(out_dir.join("error_cdf.csv").exists());
}

#[test]
fn solve_flag_variants_stay_exact_on_clean_data() {
    // Phase-only and diagonal-weight modes still solve the noise-free
    // sample exactly.
    for flags in [&["--phase-only"][..], &["--diagonal-q"], &["--method", "cils", "--cils-box", "1"]] {
        let out = bin()
            .arg("solve")
            .arg(sample_path())
            .args(flags)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{flags:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(json["cost"].as_f64().unwrap() < 1e-10, "{flags:?}");
    }
}

#[test]
fn selftest_passes_quickly() {
    let t0 = std::time::Instant::now();
    let out = bin().arg("selftest").output().unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("PASS"));
    assert!(!stdout.contains("FAIL"));
    assert!(elapsed < 60.0, "selftest took {elapsed:.1}s");
}
