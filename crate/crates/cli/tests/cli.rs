use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use phasekin::io::write_phase;
use phasekin::{GridSpec, PhaseField};

fn run(dir: &Path, cmd: &str, config: &str, extra: &[&str]) -> (i32, PathBuf, String) {
    let cfg = dir.join(format!("{cmd}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_phasekin"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("runs"))
        .args(extra)
        .output()
        .unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    let stderr = String::from_utf8(out.stderr).unwrap();
    let run_dir = stdout.lines().last().map(PathBuf::from).unwrap_or_default();
    (out.status.code().unwrap_or(-1), run_dir, format!("{stdout}{stderr}"))
}

fn manifest_value(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("manifest lacks {key}"))
        .to_string()
}

#[test]
fn transform_stored_field() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = GridSpec::new(2, 8, 4.0).unwrap();
    let f = PhaseField::from_fn(grid, |x, v| (-0.5 * (x[0] * x[0] + x[1] * x[1]) - 0.5 * (v[0] * v[0] + v[1] * v[1])).exp());
    let input = tmp.path().join("f.bin");
    write_phase(&input, &f).unwrap();
    let cfg = format!("[data]\ninput = {:?}\n", input.display().to_string());
    let (code, dir, log) = run(tmp.path(), "transform", &cfg, &[]);
    assert_eq!(code, 0, "{log}");
    assert!(dir.join("density.bin").exists() && dir.join("density.txt").exists());
    let res: f64 = manifest_value(&dir, "roundtrip_residual").parse().unwrap();
    assert!(res <= 1e-12, "{res}");
}

#[test]
fn evolve_boltzmann_small_maxwell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "[grid]\nn = 8\nlx = 4.0\n[kernel]\nn_omega = 8\n[solver]\nn_t = 6\nwrite_fields = false\n";
    let (code, dir, log) = run(tmp.path(), "evolve-boltzmann", cfg, &[]);
    assert_eq!(code, 0, "{log}");
    let res: f64 = manifest_value(&dir, "final_residual").parse().unwrap();
    let tol: f64 = manifest_value(&dir, "tol").parse().unwrap();
    assert!(res <= tol);
    let traj = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,h_norm,zeta_l1,hermitian_residual,mass,momentum_1,momentum_2,energy"));
    assert_eq!(traj.lines().count(), 7);
}

#[test]
fn verify_estimates_reduced_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "[estimates]\nmagnitudes = [0.0, 1.0, 10.0]\ndirections = 2\nplane_radius = 200.0\nexp_samples = 20000\n";
    let (code, dir, log) = run(tmp.path(), "verify-estimates", cfg, &[]);
    assert_eq!(code, 0, "{log}");
    let summary = fs::read_to_string(dir.join("summary.txt")).unwrap();
    assert!(summary.lines().count() >= 9);
    assert!(summary.lines().all(|l| l.starts_with("PASS")), "{summary}");
    let sweeps = fs::read_to_string(dir.join("sweeps.csv")).unwrap();
    assert!(sweeps.starts_with("abs_w,direction,integral,value,tail,quad_n"));
}

#[test]
fn outputs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "seed = 3\n[grid]\nn = 8\nlx = 4.0\n[data]\nperturb = 0.2\n";
    let (c1, d1, _) = run(tmp.path(), "norms", cfg, &[]);
    let first = fs::read(d1.join("norms.csv")).unwrap();
    fs::remove_dir_all(&d1).unwrap();
    let (c2, d2, _) = run(tmp.path(), "norms", cfg, &[]);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(d1, d2);
    assert_eq!(first, fs::read(d2.join("norms.csv")).unwrap());
    // a different seed is a different run
    let (_, d3, _) = run(tmp.path(), "norms", cfg, &["--seed", "4"]);
    assert_ne!(d1, d3);
    assert_ne!(first, fs::read(d3.join("norms.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, log) = run(tmp.path(), "norms", "[grid]\nn = 12\n", &[]);
    assert_eq!(code, 1);
    assert!(log.contains("grid.n"), "{log}");
    let (code, _, log) = run(tmp.path(), "norms", "[grid]\nsize = 8\n", &[]);
    assert_eq!(code, 1);
    assert!(log.contains("line 2") && log.contains("size"), "{log}");
    let (code, dir, log) = run(tmp.path(), "norms", "[grid]\nn = 8\n[norms]\nkappa = 800.0\n", &[]);
    assert_eq!(code, 2, "{log}");
    assert!(manifest_value(&dir, "error").contains("overflow"));
}
