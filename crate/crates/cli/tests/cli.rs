use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use dualband_core::dataset::read_dataset;
use dualband_core::scene::Scene;

fn dualband(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualband"))
        .args(args)
        .env_remove("DUALBAND_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dualband(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Coarse LOS grid: 16 x 8 users.
fn tiny_beam_dataset(dir: &Path) -> PathBuf {
    let out = dir.join("ds");
    ok(&["dataset", "beam", "--demo", "los", "--grid-spacing", "4", "--snr", "10", "-o", p(&out)]);
    out.join("beam.bcm")
}

fn tiny_train(dir: &Path, dataset: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec![
        "train",
        "--dataset",
        p(dataset),
        "--hidden-layers",
        "2",
        "--width",
        "32",
        "-o",
        p(&out),
    ];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn demo_los_scene_has_no_blockage() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("los.toml");
    ok(&["scene", "--demo", "los", "--output", p(&file), "-o", p(dir.path())]);
    let scene = Scene::load(&file).unwrap();
    assert!(scene.blockage.is_none());
    assert!(dir.path().join("run-config.toml").is_file());
}

#[test]
fn demo_blockage_scene_has_screen_and_two_reflectors() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("blockage.toml");
    ok(&["scene", "--demo", "blockage", "--output", p(&file), "-o", p(dir.path())]);
    let scene = Scene::load(&file).unwrap();
    let screen = scene.blockage.expect("screen");
    assert_eq!(screen.max[2] - screen.min[2], 6.0);
    assert_eq!(scene.reflectors.len(), 2);
}

#[test]
fn shipped_scene_files_match_the_demos() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes");
    let los = Scene::load(&root.join("los-demo.toml")).unwrap();
    let blk = Scene::load(&root.join("blockage-demo.toml")).unwrap();
    assert_eq!(los, dualband_core::scene::demo_los_scene());
    assert_eq!(blk, dualband_core::scene::demo_blockage_scene());
}

#[test]
fn conflicting_flags_are_a_usage_error() {
    let out = dualband(&["scene", "--demo", "los", "--scene", "x.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cannot be used with"));
}

#[test]
fn invalid_geometry_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    let text = dualband_core::scene::demo_los_scene()
        .to_toml_string()
        .unwrap()
        .replace("spacing = 0.25", "spacing = -1.0");
    std::fs::write(&file, text).unwrap();
    let out = dualband(&["scene", "--scene", p(&file), "-o", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("spacing"), "{}", stderr(&out));
}

#[test]
fn malformed_config_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "jobs = 2\nsnr_db = [oops]\n").unwrap();
    let out = dualband(&["scene", "--demo", "los", "--config", p(&cfg), "-o", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn beam_and_blockage_dataset_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let beam = read_dataset(&tiny_beam_dataset(dir.path())).unwrap();
    assert_eq!(beam.manifest.label_dim, 64);
    assert_eq!(beam.manifest.input_dim, 2 * 4 * 32);
    let out = dir.path().join("blk");
    ok(&["dataset", "blockage", "--grid-spacing", "1.5", "-o", p(&out)]);
    let blk = read_dataset(&out.join("blockage.bcm")).unwrap();
    assert_eq!(blk.manifest.label_dim, 2);
    assert!(blk.manifest.class_counts.iter().all(|&c| c > 0));
}

#[test]
fn dataset_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&["dataset", "blockage", "--grid-spacing", "1.5", "--threshold", "2", "--snr", "5", "-o", p(&out)]);
        (
            std::fs::read_to_string(out.join("blockage.bcm")).unwrap(),
            std::fs::read(out.join("blockage.bct")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "snr_db = [5.0]\ngrid_spacing = 4.0\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["dataset", "beam", "--config", p(&cfg), "-o", p(&a)]);
    ok(&["dataset", "beam", "--config", p(&cfg), "--snr", "-7", "-o", p(&b)]);
    assert_eq!(read_dataset(&a.join("beam.bcm")).unwrap().manifest.snr_db, 5.0);
    assert_eq!(read_dataset(&b.join("beam.bcm")).unwrap().manifest.snr_db, -7.0);
    let echoed = std::fs::read_to_string(b.join("run-config.toml")).unwrap();
    assert!(echoed.contains("snr_db = [-7.0]"), "{echoed}");
    assert!(echoed.contains("grid_spacing = 4.0"), "{echoed}");
}

#[test]
fn output_root_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dualband"))
        .args(["scene", "--demo", "los"])
        .env("DUALBAND_OUTPUT_ROOT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("scene").join("scene.toml").is_file());
}

#[test]
fn tiny_training_run_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_beam_dataset(dir.path());
    let t = Instant::now();
    let out = tiny_train(dir.path(), &ds, "tr", &["--epochs", "2"]);
    assert!(t.elapsed() < Duration::from_secs(10));
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    assert!(out.join("model.ckm").is_file() && out.join("model.ckb").is_file());
}

#[test]
fn zero_learning_rate_keeps_initial_weights() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_beam_dataset(dir.path());
    let initial = tiny_train(dir.path(), &ds, "init", &["--epochs", "0"]);
    let frozen = tiny_train(dir.path(), &ds, "lr0", &["--epochs", "2", "--lr", "0"]);
    let moved = tiny_train(dir.path(), &ds, "lr", &["--epochs", "2"]);
    let blob = |d: &Path| std::fs::read(d.join("model.ckb")).unwrap();
    assert_eq!(blob(&initial), blob(&frozen));
    assert_ne!(blob(&initial), blob(&moved));
}

#[test]
fn transfer_run_respects_epoch_budget() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_beam_dataset(dir.path());
    let beam = tiny_train(dir.path(), &ds, "beam", &["--epochs", "1", "--precision", "f64"]);
    let blk = dir.path().join("blk");
    ok(&["dataset", "blockage", "--grid-spacing", "1.5", "-o", p(&blk)]);
    let out = dir.path().join("tl");
    let ckm = beam.join("model.ckm");
    ok(&[
        "train",
        "--dataset",
        p(&blk.join("blockage.bcm")),
        "--transfer-from",
        p(&ckm),
        "--freeze-base",
        "--epochs",
        "3",
        "-o",
        p(&out),
    ]);
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(history.lines().count() - 1 <= 3);
    let ckm = std::fs::read_to_string(out.join("model.ckm")).unwrap();
    assert!(ckm.contains("precision = \"f64\""), "{ckm}");

    let clash = dualband(&[
        "train",
        "--dataset",
        p(&blk.join("blockage.bcm")),
        "--transfer-from",
        p(&beam.join("model.ckm")),
        "--precision",
        "f32",
        "-o",
        p(&dir.path().join("clash")),
    ]);
    assert_eq!(clash.status.code(), Some(1));
}

#[test]
fn divergence_exits_nonzero_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_beam_dataset(dir.path());
    let out = dualband(&[
        "train",
        "--dataset",
        p(&ds),
        "--hidden-layers",
        "1",
        "--width",
        "8",
        "--epochs",
        "2",
        "--lr",
        "1e300",
        "--precision",
        "f64",
        "-o",
        p(&dir.path().join("nan")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("layer 0"), "{err}");
}

#[test]
fn eval_csv_schema_and_topk_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_beam_dataset(dir.path());
    let tr = tiny_train(dir.path(), &ds, "tr", &["--epochs", "2"]);
    let out = dir.path().join("ev");
    ok(&["eval", "--checkpoint", p(&tr.join("model.ckm")), "--dataset", p(&ds), "--k", "1,3", "-o", p(&out)]);
    let csv = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("snr_db,k,accuracy,mean_rate,upper_bound_rate"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1][2] >= rows[0][2]);
    assert!(rows[1][3] >= rows[0][3] && rows[1][3] <= rows[1][4]);
}

#[test]
fn missing_checkpoint_is_a_clear_error() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_beam_dataset(dir.path());
    let out = dualband(&["eval", "--checkpoint", "/nonexistent/model.ckm", "--dataset", p(&ds)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("checkpoint /nonexistent/model.ckm does not exist"));
}

#[test]
fn antenna_sweep_emits_one_table_per_array() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw");
    let args = [
        "sweep",
        "--grid-spacing",
        "4",
        "--snr=-10:10:10",
        "--mmw-antennas",
        "16,32",
        "--hidden-layers",
        "1",
        "--width",
        "16",
        "--epochs",
        "1",
        "--jobs",
        "3",
        "-o",
    ];
    let mut a = args.to_vec();
    a.push(p(&out));
    ok(&a);
    for m in [16, 32] {
        let csv = std::fs::read_to_string(out.join(format!("sweep_mmw{m}.csv"))).unwrap();
        let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 3 * 2);
        let snrs: Vec<f64> = rows.iter().step_by(2).map(|r| r[0]).collect();
        assert_eq!(snrs, vec![-10.0, 0.0, 10.0]);
        for pair in rows.chunks(2) {
            assert!(pair[1][2] >= pair[0][2]);
        }
    }
    // Job count does not change results.
    let serial = dir.path().join("serial");
    let mut a = args.to_vec();
    let jobs = a.len() - 2;
    a[jobs] = "1";
    a.push(p(&serial));
    ok(&a);
    assert_eq!(
        std::fs::read(out.join("sweep_mmw32.csv")).unwrap(),
        std::fs::read(serial.join("sweep_mmw32.csv")).unwrap()
    );
}

#[test]
fn exported_channels_import_back() {
    let dir = tempfile::tempdir().unwrap();
    let ex = dir.path().join("ex");
    ok(&["export-channels", "--demo", "los", "--grid-spacing", "5", "-o", p(&ex)]);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["dataset", "beam", "--channels", p(&ex.join("channels.bim")), "-o", p(&a)]);
    ok(&["dataset", "beam", "--demo", "los", "--grid-spacing", "5", "-o", p(&b)]);
    let a = read_dataset(&a.join("beam.bcm")).unwrap();
    let b = read_dataset(&b.join("beam.bcm")).unwrap();
    assert_eq!(a.records, b.records);
}
