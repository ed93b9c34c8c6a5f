//! Subcommand bodies. Each one validates everything it can before it
//! creates a directory or writes a file.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fedscan::autodiff::gradient_check;
use fedscan::data::{
    generate_dataset, group_distribution, load_volume, partition_dirichlet, save_volume, train_eval_split,
    VolumeSample, NUM_GROUPS,
};
use fedscan::fed::{evaluate_model, run_central, run_federated, RunOptions, RunOutput};
use fedscan::labels::Hemorrhage;
use fedscan::model::{gradcheck_fixture, loss_and_gradient, ModelConfig};
use fedscan::store::{append_report, load_checkpoint, save_checkpoint, CheckpointMeta, RoundReport};

use crate::config::RunConfig;
use crate::error::{CliError, Context, Stage};

pub const MANIFEST: &str = "manifest.tsv";
pub const VOLUME_DIR: &str = "volumes";
pub const PARTITION_FILE: &str = "partition.tsv";
pub const REPORTS: &str = "reports.txt";
pub const CHECKPOINT: &str = "checkpoint.fsck";
pub const CONFIG_ECHO: &str = "config.toml";

/// A gradient check passes strictly below this relative error.
pub const GRADCHECK_THRESHOLD: f64 = 1e-4;

pub type CmdResult = Result<(), CliError>;

fn prepare_dir(dir: &Path, config: &RunConfig) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| CliError::io(Stage::Config, format!("{}: {e}", dir.display())))?;
    let echo = dir.join(CONFIG_ECHO);
    fs::write(&echo, config.to_toml()).map_err(|e| CliError::io(Stage::Config, format!("{}: {e}", echo.display())))
}

fn emit(out: &mut dyn Write, text: &str) -> CmdResult {
    out.write_all(text.as_bytes()).at(Stage::Report)
}

fn split(config: &RunConfig) -> (Vec<VolumeSample>, Vec<VolumeSample>) {
    let all = generate_dataset(config.data.n, &config.model, config.data.seed);
    train_eval_split(all, config.data.eval_fraction)
}

fn volume_name(i: usize) -> String {
    format!("vol_{i:05}.fscn")
}

/// Writes `volumes/vol_NNNNN.fscn` for every generated volume and a
/// tab-separated manifest: file, split, then one 0/1 column per label.
pub fn gen_data(config: &RunConfig, dir: &Path, out: &mut dyn Write) -> CmdResult {
    let (train, eval) = split(config);
    prepare_dir(dir, config)?;
    let volumes = dir.join(VOLUME_DIR);
    fs::create_dir_all(&volumes).map_err(|e| CliError::io(Stage::Data, format!("{}: {e}", volumes.display())))?;

    let mut manifest = String::from("file\tsplit");
    for label in Hemorrhage::ALL {
        write!(manifest, "\t{}", label.name()).unwrap();
    }
    manifest.push('\n');
    let tagged = train.iter().map(|s| ("train", s)).chain(eval.iter().map(|s| ("eval", s)));
    for (i, (part, sample)) in tagged.enumerate() {
        let name = volume_name(i);
        let path = volumes.join(&name);
        save_volume(sample, &path).map_err(|e| CliError::from_core(Stage::Data, e))
            .map_err(|e| CliError { message: format!("{}: {}", path.display(), e.message), ..e })?;
        write!(manifest, "{VOLUME_DIR}/{name}\t{part}").unwrap();
        for b in sample.volume_labels {
            write!(manifest, "\t{}", u8::from(b)).unwrap();
        }
        manifest.push('\n');
    }
    fs::write(dir.join(MANIFEST), manifest).at(Stage::Data)?;
    emit(out, &format!("wrote {} train and {} eval volumes to {}\n", train.len(), eval.len(), dir.display()))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub file: PathBuf,
    pub split: String,
}

pub fn read_manifest(data_dir: &Path) -> Result<Vec<ManifestRow>, CliError> {
    let path = data_dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(Stage::Data, format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next()) {
            (Some(file), Some(split)) => rows.push(ManifestRow { file: data_dir.join(file), split: split.to_string() }),
            _ => return Err(CliError::io(Stage::Data, format!("{}: line {}: expected file and split", path.display(), i + 1))),
        }
    }
    Ok(rows)
}

/// Load the volumes of `split` (`train`, `eval` or `all`) listed in the
/// manifest of `data_dir`, checking them against the model geometry.
pub fn load_split(data_dir: &Path, split: &str, model: &ModelConfig) -> Result<Vec<VolumeSample>, CliError> {
    let rows = read_manifest(data_dir)?;
    let mut samples = Vec::new();
    for row in rows.iter().filter(|r| split == "all" || r.split == split) {
        let sample = load_volume(&row.file)
            .map_err(|e| CliError::from_core(Stage::Data, e))
            .map_err(|e| CliError { message: format!("{}: {}", row.file.display(), e.message), ..e })?;
        let shape = sample.volume.shape();
        if shape != [model.slices, 1, model.input_hw, model.input_hw] {
            return Err(CliError::invalid(
                Stage::Data,
                format!(
                    "{} has shape {shape:?}, model expects [{}, 1, {}, {}]",
                    row.file.display(),
                    model.slices,
                    model.input_hw,
                    model.input_hw
                ),
            ));
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(CliError::invalid(Stage::Data, format!("no `{split}` volumes listed in {}", data_dir.join(MANIFEST).display())));
    }
    Ok(samples)
}

/// Partition the training split and write one row per client: id, shard
/// size, label-group counts and the comma-separated indices.
pub fn partition(config: &RunConfig, dir: &Path, out: &mut dyn Write) -> CmdResult {
    let (train, _) = split(config);
    let shards = partition_dirichlet(&train, &config.partition).at(Stage::Partition)?;
    prepare_dir(dir, config)?;
    let mut table = String::from("client\tsize");
    for g in 0..NUM_GROUPS {
        write!(table, "\tgroup{g}").unwrap();
    }
    table.push_str("\tindices\n");
    let mut summary = String::new();
    for (c, shard) in shards.iter().enumerate() {
        let dist = group_distribution(&train, shard);
        write!(table, "{c}\t{}", shard.len()).unwrap();
        for share in dist {
            write!(table, "\t{}", (share * shard.len() as f64).round() as usize).unwrap();
        }
        let indices: Vec<String> = shard.iter().map(usize::to_string).collect();
        writeln!(table, "\t{}", indices.join(",")).unwrap();
        writeln!(summary, "client {c}: {} volumes", shard.len()).unwrap();
    }
    fs::write(dir.join(PARTITION_FILE), table).at(Stage::Partition)?;
    emit(out, &summary)
}

fn finish(config: &RunConfig, dir: &Path, run: &RunOutput, out: &mut dyn Write) -> CmdResult {
    let reports = dir.join(REPORTS);
    if reports.exists() {
        fs::remove_file(&reports).at(Stage::Report)?;
    }
    let mut lines = String::new();
    for r in &run.reports {
        append_report(r, &reports).at(Stage::Report)?;
        lines.push_str(&r.to_line());
        lines.push('\n');
    }
    let meta = CheckpointMeta {
        config_hash: config.model.config_hash(),
        round: config.federation.rounds,
        parameter_count: run.params.parameter_count() as u64,
        seed: config.federation.seed,
    };
    save_checkpoint(&run.params, &meta, dir.join(CHECKPOINT)).at(Stage::Checkpoint)?;
    emit(out, &lines)
}

fn options(config: &RunConfig) -> RunOptions {
    RunOptions { timings: config.output.timings }
}

pub fn train_central(config: &RunConfig, out: &mut dyn Write) -> CmdResult {
    let dir = &config.output.dir;
    let (train, eval) = split(config);
    prepare_dir(dir, config)?;
    let run = run_central(&config.model, &config.federation, &train, &eval, options(config)).at(Stage::Train)?;
    finish(config, dir, &run, out)
}

pub fn train_fed(config: &RunConfig, out: &mut dyn Write) -> CmdResult {
    let dir = &config.output.dir;
    let (train, eval) = split(config);
    let shards = partition_dirichlet(&train, &config.partition).at(Stage::Partition)?;
    let clients = config.federation.clients(&shards);
    prepare_dir(dir, config)?;
    let run = run_federated(&config.model, &config.federation, &clients, &train, &eval, options(config))
        .at(Stage::Train)?;
    finish(config, dir, &run, out)
}

/// Score a checkpoint on the volumes of `split` in `data_dir` and print the
/// result as a report line.
pub fn evaluate(config: &RunConfig, checkpoint: &Path, data_dir: &Path, split: &str, out: &mut dyn Write) -> CmdResult {
    if !matches!(split, "train" | "eval" | "all") {
        return Err(CliError::invalid(Stage::Evaluate, format!("split `{split}` is not train, eval or all")));
    }
    let (params, meta) = load_checkpoint(checkpoint, config.model.config_hash())
        .map_err(|e| CliError::from_core(Stage::Checkpoint, e))
        .map_err(|e| CliError { message: format!("{}: {}", checkpoint.display(), e.message), ..e })?;
    let samples = load_split(data_dir, split, &config.model)?;
    let result = evaluate_model(&params, &config.model, &samples).at(Stage::Evaluate)?;
    let report = RoundReport {
        round: meta.round,
        clients: Vec::new(),
        train_loss: None,
        eval_loss: result.eval_loss,
        accuracy: result.summary.accuracy,
        ap: result.summary.per_label_ap,
        mean_ap: result.summary.mean_ap,
        uplink: 0,
        downlink: 0,
        wall_s: 0.0,
    };
    emit(out, &format!("{}\n", report.to_line()))
}

/// Finite-difference check of the full model on the seeded fixture. With
/// `corrupt_gradient` the analytic gradient is scaled by 1.001 first, which
/// must make the check fail.
pub fn gradcheck(config: &RunConfig, corrupt_gradient: bool, out: &mut dyn Write) -> CmdResult {
    let (params, batch) = gradcheck_fixture(&config.model, config.gradcheck.seed).at(Stage::Gradcheck)?;
    let refs: Vec<&VolumeSample> = batch.iter().collect();
    let loss = |p: &fedscan::ModelParams| {
        let (l, g) = loss_and_gradient(p, &config.model, &refs)?;
        Ok((l, if corrupt_gradient { g.map(|x| x * 1.001) } else { g }))
    };
    let report = gradient_check(loss, &params, config.gradcheck.eps).at(Stage::Gradcheck)?;
    let worst = report.worst.as_ref().map_or("-".to_string(), |(name, i)| format!("{name}[{i}]"));
    emit(
        out,
        &format!(
            "max_relative_error={} coordinates={} worst={worst}\n",
            report.max_relative_error, report.coordinates_checked
        ),
    )?;
    if report.max_relative_error < GRADCHECK_THRESHOLD {
        Ok(())
    } else {
        Err(CliError::numeric(
            Stage::Gradcheck,
            format!("max relative error {} is not below {GRADCHECK_THRESHOLD}", report.max_relative_error),
        ))
    }
}
