//! `dualband`: scene generation, dataset construction, training, evaluation
//! and sweeps for sub-6 GHz driven mmWave beam and blockage prediction.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{parse_snr_list, Demo, Precision, RunConfig, TrainOverrides};
use dualband_core::codebook::{build_steering_codebook, Codebook};
use dualband_core::dataset::{
    beam_labels, build_beam_dataset_from_channels, build_blockage_dataset, dataset_paths, export_external_channels,
    import_external_channels, read_dataset, select_marked_region, write_dataset, BuildOptions, Dataset, DatasetKind,
    Labeling, Normalization,
};
use dualband_core::eval::{blockage_report, reports_to_csv, BlockageReport, EvalReport};
use dualband_core::experiment::{experiment_split, run_beam_experiment, BeamExperiment, BeamOutcome};
use dualband_core::mlp::{
    checkpoint_precision, init_model, load_checkpoint, save_checkpoint, train, Checkpoint, CheckpointInfo, MlpModel,
    Samples, Scalar,
};
use dualband_core::scene::{generate_dual_band_samples, realize_channels, DualBandChannels, Scene};

#[derive(Parser)]
#[command(name = "dualband", version, about = "Sub-6 GHz driven mmWave beam and blockage prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a validated scene file from a demo template or an existing scene.
    Scene(SceneCmd),
    /// Build a beam or blockage dataset from a scene or imported channels.
    Dataset(DatasetCmd),
    /// Train a network on a dataset, optionally starting from a checkpoint.
    Train(TrainCmd),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalCmd),
    /// Train and evaluate one beam model per (array size, SNR) point.
    Sweep(SweepCmd),
    /// Export traced channel pairs in the external tensor format.
    ExportChannels(ExportCmd),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration. Flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory [default: $DUALBAND_OUTPUT_ROOT/<command> or runs/<command>]
    #[arg(long, short, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SceneArgs {
    /// Scene description file.
    #[arg(long, value_name = "FILE", conflicts_with = "demo")]
    scene: Option<PathBuf>,
    /// Built-in demo scene.
    #[arg(long, value_enum)]
    demo: Option<Demo>,
    #[arg(long, value_name = "N")]
    sub6_antennas: Option<usize>,
    /// mmWave array size; `sweep` accepts a comma-separated list.
    #[arg(long, value_name = "N", value_delimiter = ',')]
    mmw_antennas: Option<Vec<usize>>,
    /// User grid spacing in meters.
    #[arg(long, value_name = "M")]
    grid_spacing: Option<f64>,
}

#[derive(Args)]
struct NetArgs {
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long = "epochs")]
    max_epochs: Option<usize>,
    /// Initial learning rate.
    #[arg(long = "lr")]
    initial_lr: Option<f64>,
    #[arg(long)]
    lr_drop_factor: Option<f64>,
    #[arg(long)]
    lr_drop_epoch: Option<usize>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum)]
    precision: Option<Precision>,
    #[arg(long)]
    init_seed: Option<u64>,
    #[arg(long)]
    shuffle_seed: Option<u64>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct SceneCmd {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scene: SceneArgs,
    /// Drop the blockage screen.
    #[arg(long)]
    no_blockage: bool,
    /// Scene file to write [default: <out>/scene.toml]
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Beam,
    Blockage,
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelArg {
    GroundTruth,
    PowerRule,
}

#[derive(Args)]
struct DatasetCmd {
    #[arg(value_enum)]
    kind: KindArg,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scene: SceneArgs,
    /// External channel manifest (.bim) instead of a traced scene.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["scene", "demo"])]
    channels: Option<PathBuf>,
    /// Sub-6 GHz input SNR in dB (`inf` for clean inputs).
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<f64>,
    #[arg(long)]
    codebook_size: Option<usize>,
    #[arg(long, value_enum)]
    labeling: Option<LabelArg>,
    /// Power-rule threshold; implies power-rule labeling.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    common: Common,
    /// Dataset manifest (.bcm) or stem.
    #[arg(long, value_name = "FILE")]
    dataset: PathBuf,
    #[command(flatten)]
    net: NetArgs,
    /// Checkpoint whose hidden layers initialize the network; its head is replaced.
    #[arg(long, value_name = "FILE")]
    transfer_from: Option<PathBuf>,
    /// Update only the output layer.
    #[arg(long)]
    freeze_base: bool,
    /// Share of the training split to use.
    #[arg(long)]
    subsample: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Test,
    All,
}

#[derive(Args)]
struct EvalCmd {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    #[arg(long, value_name = "FILE")]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    net: NetArgs,
    /// `start:step:end` or a comma-separated list, in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
    #[arg(long)]
    codebook_size: Option<usize>,
    #[arg(long)]
    subsample: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Sweep points trained concurrently.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ExportCmd {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scene: SceneArgs,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if self.out.is_some() {
            cfg.output_dir = self.out.clone();
        }
        Ok(cfg)
    }
}

impl SceneArgs {
    /// Scene selection and overrides for commands that use one array size.
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        self.apply_common(cfg);
        match self.mmw_antennas.as_deref() {
            None => {}
            Some([m]) => cfg.mmw_antennas = Some(*m),
            Some(list) => bail!("--mmw-antennas takes one value here, got {}", list.len()),
        }
        Ok(())
    }

    fn apply_common(&self, cfg: &mut RunConfig) {
        if self.scene.is_some() || self.demo.is_some() {
            cfg.scene = self.scene.clone();
            cfg.demo = self.demo;
            cfg.channels = None;
        }
        if self.sub6_antennas.is_some() {
            cfg.sub6_antennas = self.sub6_antennas;
        }
        if self.grid_spacing.is_some() {
            cfg.grid_spacing = self.grid_spacing;
        }
    }
}

impl NetArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.network.hidden_layers, self.hidden_layers);
        set(&mut cfg.network.width, self.width);
        set(&mut cfg.network.dropout_rate, self.dropout);
        cfg.train.merge(&TrainOverrides {
            initial_lr: self.initial_lr,
            lr_drop_factor: self.lr_drop_factor,
            lr_drop_epoch: self.lr_drop_epoch,
            momentum: self.momentum,
            l2: self.l2,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            freeze_base: None,
        });
        set(&mut cfg.precision, self.precision);
        set(&mut cfg.seeds.init, self.init_seed);
        set(&mut cfg.seeds.shuffle, self.shuffle_seed);
        set(&mut cfg.seeds.split, self.split_seed);
    }
}

fn trace(scene: &Scene) -> Result<Vec<DualBandChannels>> {
    let samples = generate_dual_band_samples(scene).context("tracing the scene")?;
    Ok(realize_channels(scene, &samples)?)
}

fn codebook_for(cfg: &RunConfig, pairs: &[DualBandChannels]) -> Result<Codebook> {
    let first = pairs.first().context("no users in the channel set")?;
    let array = first.mmw.array;
    Ok(build_steering_codebook(&array, cfg.codebook_size.unwrap_or(array.num_antennas))?)
}

fn single_snr(cfg: &RunConfig) -> Result<f64> {
    match cfg.snr_db.as_slice() {
        [snr] => Ok(*snr),
        other => bail!("dataset construction takes one SNR, the configuration lists {}", other.len()),
    }
}

fn print_manifest(dataset: &Dataset, stem: &Path) {
    let m = &dataset.manifest;
    println!("wrote {}", dataset_paths(stem).0.display());
    println!(
        "kind {:?}, {} records, input_dim {}, label_dim {}, snr {} dB, normalization {:.6e}",
        m.kind, m.record_count, m.input_dim, m.label_dim, m.snr_db, m.normalization_factor
    );
    println!("class counts {:?}, ties {}, config digest {}", m.class_counts, m.tie_count, m.config_digest);
}

fn cmd_scene(cmd: SceneCmd) -> Result<()> {
    let mut cfg = cmd.common.load()?;
    cmd.scene.apply(&mut cfg)?;
    cfg.validate()?;
    if cfg.scene.is_none() && cfg.demo.is_none() {
        bail!("scene needs --demo or --scene");
    }
    let mut scene = cfg.resolve_scene(Demo::Los)?;
    if cmd.no_blockage {
        scene = scene.without_blockage();
    }
    let dir = cfg.output_dir("scene");
    cfg.echo_into(&dir)?;
    let path = cmd.output.unwrap_or_else(|| dir.join("scene.toml"));
    scene.save(&path)?;
    println!(
        "wrote {}: {} users, {} screen(s), {} reflector(s), {} sub-6 / {} mmWave antennas",
        path.display(),
        scene.user_region.len(),
        scene.blockage.is_some() as usize,
        scene.reflectors.len(),
        scene.sub6.array.num_antennas,
        scene.mmw.array.num_antennas
    );
    Ok(())
}

fn cmd_dataset(cmd: DatasetCmd) -> Result<()> {
    let mut cfg = cmd.common.load()?;
    cmd.scene.apply(&mut cfg)?;
    if cmd.channels.is_some() {
        cfg.channels = cmd.channels.clone();
        cfg.scene = None;
        cfg.demo = None;
    }
    if let Some(s) = cmd.snr {
        cfg.snr_db = vec![s];
    }
    set(&mut cfg.codebook_size, cmd.codebook_size.map(Some));
    set(&mut cfg.train_fraction, cmd.train_fraction);
    set(&mut cfg.seeds.noise, cmd.noise_seed);
    match (cmd.labeling, cmd.threshold) {
        (Some(LabelArg::GroundTruth), Some(_)) => bail!("--threshold applies to power-rule labeling only"),
        (Some(LabelArg::GroundTruth), None) => cfg.labeling = Labeling::GroundTruth,
        (_, Some(threshold)) => cfg.labeling = Labeling::PowerRule { threshold },
        (Some(LabelArg::PowerRule), None) => {
            if !matches!(cfg.labeling, Labeling::PowerRule { .. }) {
                cfg.labeling = Labeling::PowerRule { threshold: 2.0 };
            }
        }
        (None, None) => {}
    }
    cfg.validate()?;
    let options = BuildOptions {
        snr_db: single_snr(&cfg)?,
        normalization: Normalization::CleanCorpus,
        seed: cfg.seeds.noise,
        train_fraction: cfg.train_fraction,
    };
    let dir = cfg.output_dir("dataset");
    cfg.echo_into(&dir)?;

    let (dataset, stem) = match cmd.kind {
        KindArg::Beam => {
            let pairs = match &cfg.channels {
                Some(path) => import_external_channels(path)?,
                None => trace(&cfg.resolve_scene(Demo::Los)?)?,
            };
            let cb = codebook_for(&cfg, &pairs)?;
            (build_beam_dataset_from_channels(&pairs, &cb, &options)?, dir.join("beam"))
        }
        KindArg::Blockage => {
            let (blocked, clear) = match &cfg.channels {
                Some(path) => import_external_channels(path)?.into_iter().partition(|p| p.los_blocked),
                None => {
                    let scene = cfg.resolve_scene(Demo::Blockage)?;
                    if scene.blockage.is_none() {
                        bail!("scene {:?} has no blockage screen", scene.name);
                    }
                    select_marked_region(&trace(&scene)?, &trace(&scene.without_blockage())?)?
                }
            };
            let codebook = match cfg.labeling {
                Labeling::PowerRule { .. } => Some(codebook_for(&cfg, &blocked)?),
                Labeling::GroundTruth => None,
            };
            let ds = build_blockage_dataset(&blocked, &clear, cfg.labeling, codebook.as_ref(), &options)?;
            (ds, dir.join("blockage"))
        }
    };
    write_dataset(&dataset, &stem)?;
    print_manifest(&dataset, &stem);
    Ok(())
}

fn run_train<T: Scalar>(cfg: &RunConfig, dataset: &Dataset, transfer: Option<&Path>, dir: &Path) -> Result<()> {
    let m = &dataset.manifest;
    let config = cfg.train.resolve(m.kind, cfg.seeds.shuffle);
    let (train_idx, test_idx) = experiment_split(m.record_count, m.train_fraction, cfg.subsample, cfg.seeds.split)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| dataset.records[i].clone()).collect::<Vec<_>>();
    let train_set = Samples::<T>::from_records(&pick(&train_idx))?;
    let test_set = Samples::<T>::from_records(&pick(&test_idx))?;
    let (mut model, prior_epochs): (MlpModel<T>, usize) = match transfer {
        Some(path) => {
            let source = load_checkpoint::<T>(path)?;
            if source.model.input_dim() != m.input_dim {
                bail!(
                    "checkpoint {} takes {} inputs, the dataset has {}",
                    path.display(),
                    source.model.input_dim(),
                    m.input_dim
                );
            }
            (source.model.transfer_head(m.label_dim, cfg.seeds.init)?, source.info.epoch)
        }
        None => (
            init_model::<T>(
                m.input_dim,
                cfg.network.hidden_layers,
                cfg.network.width,
                m.label_dim,
                cfg.network.dropout_rate,
                cfg.seeds.init,
            )?,
            0,
        ),
    };
    eprintln!(
        "training {} parameters ({}) on {} records, validating on {}",
        model.parameter_count(),
        T::NAME,
        train_set.len(),
        test_set.len()
    );
    let history = train(&mut model, &train_set, &config, Some(&test_set))?;
    let history_path = dir.join("history.csv");
    std::fs::write(&history_path, history.to_csv()).with_context(|| format!("writing {}", history_path.display()))?;
    let stem = dir.join("model");
    let info = CheckpointInfo {
        epoch: prior_epochs + history.epochs.len(),
        seed: cfg.seeds.init,
        train_config: Some(config),
    };
    save_checkpoint(&Checkpoint { model, info }, &stem)?;
    println!("wrote {} and {}", stem.with_extension("ckm").display(), history_path.display());
    if let Some(acc) = history.final_validation_top1() {
        println!("{} epochs, final validation top-1 {acc:.4}", history.epochs.len());
    }
    Ok(())
}

fn existing(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} {} does not exist", path.display());
    }
    Ok(())
}

fn cmd_train(cmd: TrainCmd) -> Result<()> {
    let mut cfg = cmd.common.load()?;
    cmd.net.apply(&mut cfg);
    set(&mut cfg.subsample, cmd.subsample);
    if cmd.freeze_base {
        cfg.train.freeze_base = Some(true);
    }
    cfg.validate()?;
    let dataset = read_dataset(&cmd.dataset)?;
    if let Some(path) = &cmd.transfer_from {
        existing(path, "checkpoint")?;
        let tag = Precision::from_tag(&checkpoint_precision(path)?)?;
        if cmd.net.precision.is_some_and(|p| p != tag) {
            bail!("--precision {} disagrees with the {} checkpoint {}", cfg.precision.tag(), tag.tag(), path.display());
        }
        cfg.precision = tag;
    }
    let dir = cfg.output_dir("train");
    cfg.echo_into(&dir)?;
    match cfg.precision {
        Precision::F32 => run_train::<f32>(&cfg, &dataset, cmd.transfer_from.as_deref(), &dir),
        Precision::F64 => run_train::<f64>(&cfg, &dataset, cmd.transfer_from.as_deref(), &dir),
    }
}

fn write_blockage_csv(path: &Path, snr: f64, rows: &[(&str, BlockageReport)]) -> Result<()> {
    let mut out = String::from("snr_db,reference,accuracy,true_positive,false_negative,false_positive,true_negative\n");
    for (name, r) in rows {
        let c = r.confusion;
        out.push_str(&format!(
            "{snr},{name},{},{},{},{},{}\n",
            r.accuracy, c.true_positive, c.false_negative, c.false_positive, c.true_negative
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn run_eval<T: Scalar>(cfg: &RunConfig, checkpoint: &Path, dataset: &Dataset, idx: &[usize], dir: &Path) -> Result<()> {
    let model = load_checkpoint::<T>(checkpoint)?.model;
    let m = &dataset.manifest;
    if model.input_dim() != m.input_dim || model.output_dim() != m.label_dim {
        bail!(
            "checkpoint maps {} -> {}, dataset is {} -> {}",
            model.input_dim(),
            model.output_dim(),
            m.input_dim,
            m.label_dim
        );
    }
    let records: Vec<_> = idx.iter().map(|&i| dataset.records[i].clone()).collect();
    let samples = Samples::<T>::from_records(&records)?;
    match m.kind {
        DatasetKind::Beam => {
            let profiles = dataset.rate_profiles.as_ref().context("beam dataset carries no rate profiles")?;
            let kmax = cfg.ks.iter().copied().max().unwrap_or(1).min(m.label_dim);
            let ranked = model.rank_batch(samples.inputs.view(), kmax, 1024)?;
            let sub: Vec<_> = idx.iter().map(|&i| profiles[i].clone()).collect();
            let report = EvalReport::for_beams(m.snr_db, &ranked, &sub, &cfg.ks)?;
            let path = dir.join("eval.csv");
            std::fs::write(&path, reports_to_csv(std::slice::from_ref(&report)))?;
            println!("wrote {}", path.display());
            for &k in &cfg.ks {
                println!("top-{k} accuracy {:.4}, mean rate {:.4}", report.top(k), report.rate(k));
            }
            println!("upper bound rate {:.4}", report.upper_bound_rate);
        }
        DatasetKind::Blockage => {
            let predicted: Vec<usize> =
                model.rank_batch(samples.inputs.view(), 1, 1024)?.into_iter().map(|r| r[0]).collect();
            let truth: Vec<usize> = records
                .iter()
                .map(|r| if r.meta.blocked_ground_truth { 0 } else { 1 })
                .collect();
            let labels = blockage_report(&predicted, &samples.classes())?;
            let gt = blockage_report(&predicted, &truth)?;
            let path = dir.join("blockage.csv");
            write_blockage_csv(&path, m.snr_db, &[("labels", labels), ("ground-truth", gt)])?;
            println!("wrote {}", path.display());
            println!("accuracy {:.4} against the labels, {:.4} against ground truth", labels.accuracy, gt.accuracy);
        }
    }
    Ok(())
}

fn cmd_eval(cmd: EvalCmd) -> Result<()> {
    let mut cfg = cmd.common.load()?;
    set(&mut cfg.ks, cmd.k);
    set(&mut cfg.seeds.split, cmd.split_seed);
    cfg.validate()?;
    existing(&cmd.checkpoint, "checkpoint")?;
    let dataset = read_dataset(&cmd.dataset)?;
    let idx = match cmd.split {
        SplitArg::All => (0..dataset.records.len()).collect(),
        SplitArg::Test => {
            experiment_split(dataset.records.len(), dataset.manifest.train_fraction, 1.0, cfg.seeds.split)?.1
        }
    };
    let precision = Precision::from_tag(&checkpoint_precision(&cmd.checkpoint)?)?;
    cfg.precision = precision;
    let dir = cfg.output_dir("eval");
    cfg.echo_into(&dir)?;
    match precision {
        Precision::F32 => run_eval::<f32>(&cfg, &cmd.checkpoint, &dataset, &idx, &dir),
        Precision::F64 => run_eval::<f64>(&cfg, &cmd.checkpoint, &dataset, &idx, &dir),
    }
}

struct Point {
    report: EvalReport,
    history_csv: String,
}

fn sweep_point<T: Scalar>(
    pairs: &[DualBandChannels],
    cb: &Codebook,
    profiles: &[dualband_core::codebook::RateProfile],
    exp: &BeamExperiment,
) -> Result<Point> {
    let out: BeamOutcome<T> = run_beam_experiment(pairs, cb, profiles, exp)?;
    Ok(Point {
        report: out.report,
        history_csv: out.history.to_csv(),
    })
}

/// Runs `f` over `0..n` on up to `jobs` threads and returns results in index order.
fn parallel<R: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> Result<R> + Sync) -> Result<Vec<R>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.min(n).max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect()
}

fn snr_label(snr: f64) -> String {
    if snr.is_infinite() {
        "inf".into()
    } else {
        format!("{snr}")
    }
}

fn cmd_sweep(cmd: SweepCmd) -> Result<()> {
    let mut cfg = cmd.common.load()?;
    cmd.scene.apply_common(&mut cfg);
    set(&mut cfg.sweep_mmw_antennas, cmd.scene.mmw_antennas.clone());
    cmd.net.apply(&mut cfg);
    if let Some(text) = &cmd.snr {
        cfg.snr_db = parse_snr_list(text)?;
    }
    set(&mut cfg.codebook_size, cmd.codebook_size.map(Some));
    set(&mut cfg.subsample, cmd.subsample);
    set(&mut cfg.seeds.noise, cmd.noise_seed);
    set(&mut cfg.ks, cmd.k.clone());
    set(&mut cfg.jobs, cmd.jobs);
    cfg.validate()?;
    if cfg.channels.is_some() {
        bail!("sweep traces a scene; imported channels are not supported");
    }
    let dir = cfg.output_dir("sweep");
    cfg.echo_into(&dir)?;

    let base = cfg.resolve_scene(Demo::Los)?;
    let sizes = if cfg.sweep_mmw_antennas.is_empty() {
        vec![base.mmw.array.num_antennas]
    } else {
        cfg.sweep_mmw_antennas.clone()
    };
    let train_config = cfg.train.resolve(DatasetKind::Beam, cfg.seeds.shuffle);
    for m in sizes {
        let mut scene = base.clone();
        scene.mmw.array.num_antennas = m;
        scene.validate()?;
        let pairs = trace(&scene)?;
        let cb = build_steering_codebook(&scene.mmw.array, cfg.codebook_size.unwrap_or(m))?;
        let profiles = beam_labels(&pairs, &cb)?;
        eprintln!("{m} mmWave antennas: {} users, {}-beam codebook", pairs.len(), cb.len());
        let points = parallel(cfg.snr_db.len(), cfg.jobs, |i| {
            let exp = BeamExperiment {
                snr_db: cfg.snr_db[i],
                train_fraction: cfg.train_fraction,
                subsample: cfg.subsample,
                split_seed: cfg.seeds.split,
                noise_seed: cfg.seeds.noise,
                init_seed: cfg.seeds.init,
                network: cfg.network,
                train: train_config,
                ks: cfg.ks.clone(),
                track_validation: false,
            };
            let p = match cfg.precision {
                Precision::F32 => sweep_point::<f32>(&pairs, &cb, &profiles, &exp),
                Precision::F64 => sweep_point::<f64>(&pairs, &cb, &profiles, &exp),
            }?;
            eprintln!(
                "  {m} antennas, {} dB: top-1 {:.4}, top-{} {:.4}",
                exp.snr_db,
                p.report.top(1),
                cfg.ks.iter().max().unwrap_or(&1),
                p.report.top(*cfg.ks.iter().max().unwrap_or(&1))
            );
            Ok(p)
        })?;
        for p in &points {
            let path = dir.join(format!("history_mmw{m}_snr{}.csv", snr_label(p.report.snr_db)));
            std::fs::write(&path, &p.history_csv).with_context(|| format!("writing {}", path.display()))?;
        }
        let reports: Vec<EvalReport> = points.into_iter().map(|p| p.report).collect();
        let path = dir.join(format!("sweep_mmw{m}.csv"));
        std::fs::write(&path, reports_to_csv(&reports)).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_export(cmd: ExportCmd) -> Result<()> {
    let mut cfg = cmd.common.load()?;
    cmd.scene.apply(&mut cfg)?;
    cfg.validate()?;
    let scene = cfg.resolve_scene(Demo::Los)?;
    let dir = cfg.output_dir("export-channels");
    cfg.echo_into(&dir)?;
    let pairs = trace(&scene)?;
    let stem = dir.join("channels");
    export_external_channels(&pairs, &stem, None)?;
    println!("wrote {} ({} users)", stem.with_extension("bim").display(), pairs.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Scene(c) => cmd_scene(c),
        Command::Dataset(c) => cmd_dataset(c),
        Command::Train(c) => cmd_train(c),
        Command::Eval(c) => cmd_eval(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::ExportChannels(c) => cmd_export(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
