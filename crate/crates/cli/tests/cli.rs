use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use fedscan::model::ModelConfig;
use fedscan::store::{load_checkpoint, parse_reports, read_reports, RoundReport};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const TINY: &str = r#"
[model]
input_hw = 8
slices = 2
growth_rate = 2
block_layout = [2]
gru_hidden = 4

[data]
n = 20

[partition]
num_clients = 2

[federation]
rounds = 2
batch_size = 4
"#;

fn fedscan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedscan"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn workspace(config: &str) -> TempDir {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("run.toml"), config).unwrap();
    tmp
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn tree_digest(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let digest = Sha256::digest(fs::read(&path).unwrap()).to_vec();
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), digest));
            }
        }
    }
    out.sort();
    out
}

fn tiny_model() -> ModelConfig {
    ModelConfig { input_hw: 8, slices: 2, growth_rate: 2, block_layout: vec![2], gru_hidden: 4, ..ModelConfig::default() }
}

#[test]
fn gen_data_writes_one_file_per_volume_and_a_manifest() {
    let tmp = workspace(TINY);
    let o = fedscan(tmp.path(), &["gen-data", "-c", "run.toml", "--set", "data.n=10", "--out", "d"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let volumes = fs::read_dir(tmp.path().join("d/volumes")).unwrap().count();
    assert_eq!(volumes, 10);
    let manifest = fs::read_to_string(tmp.path().join("d/manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().count(), 11);
    assert_eq!(manifest.lines().filter(|l| l.contains("\teval\t")).count(), 2);
}

#[test]
fn gen_data_reruns_are_byte_identical() {
    let tmp = workspace(TINY);
    for out in ["a", "b"] {
        assert!(fedscan(tmp.path(), &["gen-data", "-c", "run.toml", "--out", out]).status.success());
    }
    let a = tree_digest(&tmp.path().join("a"));
    let b = tree_digest(&tmp.path().join("b"));
    // The echoed config names its own output dir only through output.dir,
    // which both runs share.
    assert_eq!(a, b);
    assert!(a.len() > 20);
}

#[test]
fn invalid_key_is_named_and_rejected_before_writing() {
    let tmp = workspace("[federation]\nrouns = 3\n");
    let o = fedscan(tmp.path(), &["train-fed", "-c", "run.toml", "--set", "output.dir=out"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rouns"), "{}", stderr(&o));
    assert!(!tmp.path().join("out").exists());

    let o = fedscan(tmp.path(), &["gen-data", "--set", "data.bogus=1", "--out", "out"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn invalid_values_exit_with_validation_status() {
    let tmp = workspace(TINY);
    for set in ["federation.fraction=0", "data.eval_fraction=1.5", "model.input_hw=0", "partition.alpha=-1"] {
        let o = fedscan(tmp.path(), &["train-fed", "-c", "run.toml", "--set", set]);
        assert_eq!(o.status.code(), Some(1), "{set}: {}", stderr(&o));
    }
    let o = fedscan(tmp.path(), &["train-fed", "-c", "missing.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = workspace(TINY);
    fs::write(tmp.path().join("blocker"), b"file").unwrap();
    let o = fedscan(tmp.path(), &["gen-data", "-c", "run.toml", "--out", "blocker/sub"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = fedscan(tmp.path(), &["train-central", "-c", "run.toml", "--set", "output.dir=blocker/sub"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn minimal_federated_run_is_fast_and_reproducible() {
    let tmp = workspace(TINY);
    let start = Instant::now();
    let first = fedscan(tmp.path(), &["train-fed", "-c", "run.toml", "--set", "output.dir=one"]);
    assert!(start.elapsed() < Duration::from_secs(60));
    assert!(first.status.success(), "{}", stderr(&first));
    let second = fedscan(tmp.path(), &["train-fed", "-c", "run.toml", "--set", "output.dir=two"]);
    assert!(second.status.success());
    let one = fs::read(tmp.path().join("one/reports.txt")).unwrap();
    assert_eq!(one, fs::read(tmp.path().join("two/reports.txt")).unwrap());
    assert_eq!(
        fs::read(tmp.path().join("one/checkpoint.fsck")).unwrap(),
        fs::read(tmp.path().join("two/checkpoint.fsck")).unwrap()
    );
    // Rerunning into the same directory replaces the reports rather than appending.
    assert!(fedscan(tmp.path(), &["train-fed", "-c", "run.toml", "--set", "output.dir=one"]).status.success());
    assert_eq!(one, fs::read(tmp.path().join("one/reports.txt")).unwrap());
    assert_eq!(stdout(&first).as_bytes(), one.as_slice());
}

#[test]
fn full_participation_lists_every_client() {
    let tmp = workspace(TINY);
    let o = fedscan(
        tmp.path(),
        &["train-fed", "-c", "run.toml", "--set", "partition.num_clients=3", "--set", "output.dir=o"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let reports = read_reports(tmp.path().join("o/reports.txt")).unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r.clients == vec![0, 1, 2]));
}

#[test]
fn central_training_matches_a_single_client_federation() {
    let tmp = workspace(TINY);
    let c = fedscan(tmp.path(), &["train-central", "-c", "run.toml", "--set", "output.dir=c"]);
    let f = fedscan(
        tmp.path(),
        &["train-fed", "-c", "run.toml", "--set", "partition.num_clients=1", "--set", "output.dir=f"],
    );
    assert!(c.status.success() && f.status.success());
    // Same weights and the same metadata, so the files agree byte for byte.
    assert_eq!(
        fs::read(tmp.path().join("c/checkpoint.fsck")).unwrap(),
        fs::read(tmp.path().join("f/checkpoint.fsck")).unwrap()
    );
}

#[test]
fn central_loss_does_not_increase_at_default_settings() {
    let tmp = workspace("[federation]\nrounds = 8\n");
    let o = fedscan(tmp.path(), &["train-central", "-c", "run.toml", "--set", "output.dir=o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reports = read_reports(tmp.path().join("o/reports.txt")).unwrap();
    let losses: Vec<f64> = reports.iter().map(|r| r.train_loss.unwrap()).collect();
    assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
    assert!(reports.iter().all(|r| r.clients.is_empty() && r.uplink == 0));
    let (params, meta) = load_checkpoint(tmp.path().join("o/checkpoint.fsck"), ModelConfig::default().config_hash()).unwrap();
    assert_eq!(meta.round, 8);
    assert_eq!(meta.parameter_count, params.parameter_count() as u64);
}

#[test]
fn evaluate_reproduces_the_last_report() {
    let tmp = workspace(TINY);
    assert!(fedscan(tmp.path(), &["train-fed", "-c", "run.toml", "--set", "output.dir=o"]).status.success());
    assert!(fedscan(tmp.path(), &["gen-data", "-c", "run.toml", "--out", "d"]).status.success());
    let o = fedscan(
        tmp.path(),
        &["evaluate", "-c", "run.toml", "--checkpoint", "o/checkpoint.fsck", "--data-dir", "d"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let printed = parse_reports(&stdout(&o)).unwrap();
    assert_eq!(printed.len(), 1);
    let got = &printed[0];
    let last: RoundReport = read_reports(tmp.path().join("o/reports.txt")).unwrap().pop().unwrap();
    assert_eq!(got.round, last.round);
    assert_eq!(got.eval_loss.to_bits(), last.eval_loss.to_bits());
    assert_eq!(got.accuracy.to_bits(), last.accuracy.to_bits());
    assert_eq!(got.ap, last.ap);
    assert_eq!(got.mean_ap, last.mean_ap);
}

#[test]
fn evaluate_rejects_empty_data_and_mismatched_checkpoints() {
    let tmp = workspace(TINY);
    assert!(fedscan(tmp.path(), &["train-central", "-c", "run.toml", "--set", "output.dir=o"]).status.success());
    assert!(fedscan(tmp.path(), &["gen-data", "-c", "run.toml", "--out", "d"]).status.success());
    fs::create_dir(tmp.path().join("empty")).unwrap();
    let o = fedscan(tmp.path(), &["evaluate", "-c", "run.toml", "--checkpoint", "o/checkpoint.fsck", "--data-dir", "empty"]);
    assert!(!o.status.success());

    fs::create_dir(tmp.path().join("header_only")).unwrap();
    fs::write(tmp.path().join("header_only/manifest.tsv"), "file\tsplit\n").unwrap();
    let o = fedscan(
        tmp.path(),
        &["evaluate", "-c", "run.toml", "--checkpoint", "o/checkpoint.fsck", "--data-dir", "header_only"],
    );
    assert_eq!(o.status.code(), Some(1));

    let o = fedscan(
        tmp.path(),
        &["evaluate", "-c", "run.toml", "--set", "model.gru_hidden=5", "--checkpoint", "o/checkpoint.fsck", "--data-dir", "d"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hash mismatch"), "{}", stderr(&o));

    let bytes = fs::read(tmp.path().join("o/checkpoint.fsck")).unwrap();
    fs::write(tmp.path().join("cut.fsck"), &bytes[..bytes.len() - 3]).unwrap();
    let o = fedscan(tmp.path(), &["evaluate", "-c", "run.toml", "--checkpoint", "cut.fsck", "--data-dir", "d"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_checks_volume_geometry() {
    let tmp = workspace(TINY);
    assert!(fedscan(tmp.path(), &["train-central", "-c", "run.toml", "--set", "output.dir=o"]).status.success());
    assert!(fedscan(tmp.path(), &["gen-data", "-c", "run.toml", "--set", "model.slices=3", "--out", "d3"]).status.success());
    let o = fedscan(tmp.path(), &["evaluate", "-c", "run.toml", "--checkpoint", "o/checkpoint.fsck", "--data-dir", "d3"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn partition_writes_every_training_index_once() {
    let tmp = workspace(TINY);
    let o = fedscan(tmp.path(), &["partition", "-c", "run.toml", "--set", "partition.alpha=0.2", "--out", "p"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(tmp.path().join("p/partition.tsv")).unwrap();
    let mut all: Vec<usize> = table
        .lines()
        .skip(1)
        .flat_map(|l| l.rsplit('\t').next().unwrap().split(',').filter(|s| !s.is_empty()).map(|s| s.parse().unwrap()).collect::<Vec<usize>>())
        .collect();
    all.sort_unstable();
    assert_eq!(all, (0..16).collect::<Vec<_>>());
}

#[test]
fn gradcheck_passes_on_the_default_config_and_catches_corruption() {
    let tmp = TempDir::new().unwrap();
    let o = fedscan(tmp.path(), &["gradcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    let err: f64 = line
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("max_relative_error="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(err <= 1e-4);
    let o = fedscan(tmp.path(), &["gradcheck", "--corrupt-gradient"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn checkpoint_belongs_to_its_model() {
    let tmp = workspace(TINY);
    assert!(fedscan(tmp.path(), &["train-central", "-c", "run.toml", "--set", "output.dir=o"]).status.success());
    let path = tmp.path().join("o/checkpoint.fsck");
    assert!(load_checkpoint(&path, tiny_model().config_hash()).is_ok());
    assert!(load_checkpoint(&path, ModelConfig::default().config_hash()).is_err());
}
