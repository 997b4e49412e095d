use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deepstack::RunConfig;

const SMALL: &str = "\
dataset = synth-bars
widths = 12,6
epochs = 4
synth_n = 200
synth_side = 6
samples = 100
probe_epochs = 10
finetune_epochs = 5
";

fn deepstack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepstack"))
        .args(args)
        .current_dir(dir)
        .env("DEEPSTACK_CACHE", dir.join("cache"))
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = deepstack(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// `SMALL` with the keys set in `extra` replaced.
fn merged(extra: &str) -> String {
    let key = |l: &str| l.split('=').next().unwrap().trim().to_string();
    let overridden: Vec<String> = extra.lines().map(key).collect();
    let mut text: String = SMALL.lines().filter(|l| !overridden.contains(&key(l))).map(|l| format!("{l}\n")).collect();
    text.push_str(extra);
    text
}

fn setup(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, merged(extra)).unwrap();
    (dir, conf)
}

#[test]
fn single_layer_joint_and_layerwise_write_identical_models() {
    let (dir, _) = setup("depth = 1\nwidths = 10\n");
    let d = dir.path();
    ok(d, &["--config", "run.conf", "--out", "j", "--seed", "3", "train"]);
    fs::write(d.join("l.conf"), merged("depth = 1\nwidths = 10\nscheme = layerwise\n")).unwrap();
    ok(d, &["--config", "l.conf", "--out", "l", "--seed", "3", "train"]);
    let a = fs::read(d.join("j/model.daej")).unwrap();
    let b = fs::read(d.join("l/model.daej")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn train_writes_echo_log_and_manifest() {
    let (dir, _) = setup("");
    let d = dir.path();
    ok(d, &["--config", "run.conf", "--out", "o", "--seed", "5", "train"]);
    let echo = RunConfig::load(&d.join("o/resolved.conf")).unwrap();
    let mut expected = RunConfig::load(&d.join("run.conf")).unwrap();
    expected.seed = 5;
    expected.out = "o".into();
    assert_eq!(echo, expected);
    let log = fs::read_to_string(d.join("o/trainlog-joint-synth-bars-p0.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch,train_err,valid_err,seconds,penalty_1,penalty_2");
    assert_eq!(lines.len(), 5);
    let split = deepstack::ledger::read_split_manifest(&d.join("o/split.csv")).unwrap();
    assert_eq!(split.iter().map(Vec::len).collect::<Vec<_>>(), vec![120, 40, 40]);
}

#[test]
fn layerwise_writes_one_log_per_layer() {
    let (dir, _) = setup("scheme = layerwise\n");
    ok(dir.path(), &["--config", "run.conf", "--out", "o", "train"]);
    for part in 1..=2 {
        assert!(dir.path().join(format!("o/trainlog-layerwise-synth-bars-p0-part{part}.csv")).is_file());
    }
}

#[test]
fn missing_dataset_exits_2_naming_cache_path() {
    let (dir, _) = setup("dataset = mnist\n");
    let out = deepstack(dir.path(), &["--config", "run.conf", "train"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&dir.path().join("cache").join("mnist").display().to_string()), "{err}");
}

#[test]
fn usage_and_config_errors_exit_2() {
    let (dir, _) = setup("lerning_rate = 0.1\n");
    let out = deepstack(dir.path(), &["--config", "run.conf", "train"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run.conf:9: unknown key 'lerning_rate'"), "{err}");
    assert_eq!(code(&deepstack(dir.path(), &["train", "--no-such-flag"])), 2);
    assert_eq!(code(&deepstack(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&deepstack(dir.path(), &["--config", "absent.conf", "train"])), 2);
}

#[test]
fn runtime_failures_exit_1() {
    let (dir, _) = setup("");
    fs::write(dir.path().join("junk.daej"), b"DAEJ\x01\0\0\0").unwrap();
    let out = deepstack(dir.path(), &["--config", "run.conf", "eval-gen", "--model", "junk.daej"]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let out = deepstack(dir.path(), &["--config", "run.conf", "probe", "--model", "nowhere.daej"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn sample_counts_and_determinism() {
    let (dir, _) = setup("");
    let d = dir.path();
    ok(d, &["--config", "run.conf", "--out", "o", "train"]);
    let args = ["--config", "run.conf", "--out", "o", "--seed", "2", "sample", "--steps", "40", "--thinning", "4", "--nearest"];
    ok(d, &args);
    let csv = fs::read_to_string(d.join("o/samples.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 11);
    assert!(lines[0].starts_with("step,x1,") && lines[0].ends_with(",x36,nearest"));
    assert!(lines[1].starts_with("4,") && lines[10].starts_with("40,"));
    let (w, h, _) = deepstack::pgm::parse_pgm(&fs::read(d.join("o/samples.pgm")).unwrap()).map(|(w, h, p)| (w, h, p.len())).unwrap();
    // 10 tiles of 6x6 in a 4-column grid
    assert_eq!((w, h), (4 * 6 + 3, 3 * 6 + 2));
    let pgm = fs::read(d.join("o/samples.pgm")).unwrap();
    ok(d, &args);
    assert_eq!(fs::read_to_string(d.join("o/samples.csv")).unwrap(), csv);
    assert_eq!(fs::read(d.join("o/samples.pgm")).unwrap(), pgm);
}

#[test]
fn ledger_rows_reproduce_on_rerun() {
    let (dir, _) = setup("");
    let d = dir.path();
    ok(d, &["--config", "run.conf", "--out", "o", "train"]);
    for cmd in ["eval-gen", "probe", "finetune"] {
        let a = ok(d, &["--config", "run.conf", "--out", "o", cmd]);
        let b = ok(d, &["--config", "run.conf", "--out", "o", "--threads", "2", cmd]);
        assert_eq!(a, b, "{cmd}");
    }
    let gen = fs::read_to_string(d.join("o/generative.csv")).unwrap();
    let lines: Vec<&str> = gen.lines().collect();
    assert_eq!(lines[0], "dataset,scheme,depth,mean_ll,stderr,sigma,S,seed");
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], lines[2]);
    assert!(lines[1].starts_with("synth-bars,joint,2,") && lines[1].ends_with(",100,0"));
    let cls = fs::read_to_string(d.join("o/classification.csv")).unwrap();
    let lines: Vec<&str> = cls.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[1], lines[2]);
    assert_eq!(lines[3], lines[4]);
    assert!(lines[1].contains(",probe,") && lines[3].contains(",finetune,"));
}

#[test]
fn grid_is_deterministic_across_thread_counts() {
    let (dir, _) = setup("grid_learning_rates = 0.01,0.002\ngrid_noise = 0.1,0.4\n");
    let d = dir.path();
    ok(d, &["--config", "run.conf", "--out", "a", "--threads", "1", "grid"]);
    ok(d, &["--config", "run.conf", "--out", "b", "--threads", "3", "grid"]);
    let a = fs::read_to_string(d.join("a/grid.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(d.join("b/grid.csv")).unwrap());
    assert_eq!(a.lines().count(), 5);
    assert_eq!(fs::read(d.join("a/model.daej")).unwrap(), fs::read(d.join("b/model.daej")).unwrap());
}

#[test]
fn report_groups_schemes_and_marks_best() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("classification.csv"),
        "dataset,scheme,depth,stage,error,ci,seed\nrect,joint,2,probe,1.39,0.1,0\nrect,layerwise,2,probe,1.48,0.1,0\n",
    )
    .unwrap();
    fs::write(d.join("trainlog-joint-rect-p0.csv"), "epoch,train_err,valid_err,seconds,penalty_1,penalty_2\n1,3,4,0.1,0,0\n2,2,3,0.2,0,0\n").unwrap();
    let text = ok(d, &["--out", "rep", "report", "--runs", "."]);
    let row: Vec<&str> = text.lines().filter(|l| l.contains("rect") && l.contains("probe")).collect();
    assert_eq!(row.len(), 1);
    assert!(row[0].contains("joint=1.3900±0.1000*") && row[0].contains("layerwise=1.4800±0.1000"), "{}", row[0]);
    assert!(!row[0].contains("1.4800±0.1000*"));
    let curve = fs::read_to_string(d.join("rep/curve-joint-rect-p0.csv")).unwrap();
    assert_eq!(curve, "epoch,train,valid\n1,3,4\n2,2,3\n");
    assert!(d.join("rep/report-classification.csv").is_file());
    assert!(d.join("rep/report.txt").is_file());
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = deepstack(dir.path(), &["--out", ".", "report"]);
    assert_ne!(code(&out), 0);
}

fn write_rect_files(dir: &Path, n_train: usize, n_test: usize) {
    let row = |i: usize| {
        let mut s = String::new();
        for j in 0..784 {
            s.push_str(if (i + j) % 7 == 0 { "1 " } else { "0 " });
        }
        format!("{s}{}\n", i % 2)
    };
    fs::write(dir.join("rectangles_train.amat"), (0..n_train).map(row).collect::<String>()).unwrap();
    fs::write(dir.join("rectangles_test.amat"), (0..n_test).map(row).collect::<String>()).unwrap();
}

#[test]
fn fetch_from_directory_then_train_on_a_subset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("src")).unwrap();
    write_rect_files(&d.join("src"), 1200, 30);
    ok(d, &["fetch", "rect", "--from", "src"]);
    let sums = fs::read_to_string(d.join("cache/rect/SHA256SUMS")).unwrap();
    assert_eq!(sums.lines().count(), 2);
    fs::write(d.join("run.conf"), "dataset = rect\nwidths = 8\ndepth = 1\nepochs = 1\nn_train = 40\nn_valid = 10\n").unwrap();
    ok(d, &["--config", "run.conf", "--out", "o", "train"]);
    let split = deepstack::ledger::read_split_manifest(&d.join("o/split.csv")).unwrap();
    assert_eq!(split.iter().map(Vec::len).collect::<Vec<_>>(), vec![40, 10, 30]);

    // a damaged cache file fails verification
    let test = d.join("cache/rect/rectangles_test.amat");
    let mut bytes = fs::read(&test).unwrap();
    bytes[0] ^= 1;
    fs::write(&test, bytes).unwrap();
    let out = deepstack(d, &["--config", "run.conf", "--out", "o", "train"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn fetch_variation_without_source_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = deepstack(dir.path(), &["fetch", "convex"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&deepstack(dir.path(), &["fetch", "cifar"])), 2);
}
