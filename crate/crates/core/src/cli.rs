//! The `vidsteg` command line: one subcommand per workflow step, each writing
//! into its own run directory that starts with a manifest.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::experiments::{
    run_goodness_matrix, run_leak_curve, run_probe, run_threshold_sweep, LeakCodec, LeakConfig, ProbeDecoder, ProbeSpec,
};
use crate::labeling::{label_clip, segment_histogram, segments_of, write_histogram_csv, write_labels_csv, FrameLabel};
use crate::lsb::{lsb_decode_frames, lsb_encode_frames};
use crate::media::{load_clip, load_dataset, prepare_pairs, save_frames, ClipPair, Frame, PreparedData, VideoClip};
use crate::nets::{load_bundle, save_bundle, ModelBundle};
use crate::pipeline::{decode_clip, encode_clip, evaluate, ContainerClip, Method};
use crate::training::{train_hr, train_hr_gan, train_ror, TrainConfig, TrainOutput};

#[derive(Debug, Parser)]
#[command(name = "vidsteg", version, about = "Hide one video inside another with reference/residual networks")]
pub struct Cli {
    /// TOML config with `[train]`, `[leak]` and `[data]` tables.
    #[arg(long, global = true, env = "VIDSTEG_CONFIG")]
    pub config: Option<PathBuf>,
    /// Root seed; overrides every seed in the config.
    #[arg(long, global = true, env = "VIDSTEG_SEED")]
    pub seed: Option<u64>,
    /// Root of the run directories.
    #[arg(long, global = true, env = "VIDSTEG_OUT", default_value = "results")]
    pub out: PathBuf,
    /// Run directory name; defaults to a UTC timestamp.
    #[arg(long, global = true, env = "VIDSTEG_RUN_ID")]
    pub run_id: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Split a clip collection, label every clip and write the statistics.
    Prepare(DataArgs),
    /// Jointly train both hiding/reveal branches.
    Train(TrainArgs),
    /// Train the RoR classifier of a checkpoint.
    TrainRor(TrainRorArgs),
    /// Hide a secret clip inside a cover clip.
    Hide(HideArgs),
    /// Decode a container clip from its pixels alone.
    Reveal(RevealArgs),
    /// APD scores for LSB, the image model or the video model.
    Evaluate(EvaluateArgs),
    /// Hide with 4-bit LSB substitution.
    LsbHide(LsbHideArgs),
    /// Read the secret back out of LSB containers.
    LsbReveal(LsbRevealArgs),
    /// Perturb container patches and map the change in the decoded secret.
    Probe(ProbeArgs),
    /// Adversary accuracy against the number of leaked pairs.
    LeakCurve(LeakArgs),
    /// Container APD for every cover/secret combination.
    Goodness(GoodnessArgs),
    /// Reference/residual counts and segment lengths per threshold.
    ThresholdSweep(SweepArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Directory of clip directories.
    #[arg(long, default_value = "data/sample")]
    pub data: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Add the adversarial discriminator loss.
    #[arg(long)]
    pub gan: bool,
    /// Overrides `train.max_steps`.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Also train the RoR classifier after the hiding/reveal networks.
    #[arg(long)]
    pub with_ror: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainRorArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HideArgs {
    #[arg(long)]
    pub cover: PathBuf,
    #[arg(long)]
    pub secret: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Labeling threshold; defaults to `train.threshold`.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RevealArgs {
    #[arg(long)]
    pub container: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Required for the image and video methods.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Which pairs to score.
    #[arg(long, value_enum, default_value = "test")]
    pub subset: Subset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LsbHideArgs {
    #[arg(long)]
    pub cover: PathBuf,
    #[arg(long)]
    pub secret: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LsbRevealArgs {
    #[arg(long)]
    pub container: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecKind {
    Lsb,
    Model,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProbeArgs {
    /// Cover frame (PNG).
    #[arg(long)]
    pub cover: PathBuf,
    /// Secret frame (PNG).
    #[arg(long)]
    pub secret: PathBuf,
    #[arg(long, value_enum, default_value = "model")]
    pub codec: CodecKind,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LeakArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub codec: CodecKind,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Overrides `leak.budgets`.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GoodnessArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Use at most this many clips as covers and as secrets.
    #[arg(long, default_value_t = 10)]
    pub clips: usize,
    #[arg(long, default_value_t = 3)]
    pub top_k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [5.0, 10.0, 15.0, 20.0, 25.0, 30.68, 40.0, 50.0, 75.0, 100.0])]
    pub thresholds: Vec<f64>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prepare(_) => "prepare",
            Command::Train(_) => "train",
            Command::TrainRor(_) => "train-ror",
            Command::Hide(_) => "hide",
            Command::Reveal(_) => "reveal",
            Command::Evaluate(_) => "evaluate",
            Command::LsbHide(_) => "lsb-hide",
            Command::LsbReveal(_) => "lsb-reveal",
            Command::Probe(_) => "probe",
            Command::LeakCurve(_) => "leak-curve",
            Command::Goodness(_) => "goodness",
            Command::ThresholdSweep(_) => "threshold-sweep",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// train / validation / test shares of the clip collection.
    pub split: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { split: [0.5, 0.25, 0.25] }
    }
}

/// Everything a run can be configured with.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub leak: LeakConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self, Error> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(Error::io(p))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.train.seed = cfg.seed;
        cfg.leak.seed = cfg.seed;
        cfg.train.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub argv: Vec<String>,
    pub args: Command,
    pub config: RunConfig,
    pub seed: u64,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub run_dir: PathBuf,
    pub outputs: Vec<PathBuf>,
}

/// Crate version plus a digest of the running executable.
fn code_version() -> String {
    let digest = std::env::current_exe()
        .ok()
        .and_then(|p| fs::read(p).ok())
        .map(|b| hex::encode(&Sha256::digest(&b)[..8]))
        .unwrap_or_else(|| "unknown".into());
    format!("{}+{digest}", env!("CARGO_PKG_VERSION"))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn start(cli: &Cli, cfg: &RunConfig, argv: Vec<String>) -> anyhow::Result<Self> {
        let id = cli.run_id.clone().unwrap_or_else(|| chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string());
        let dir = cli.out.join(cli.command.name()).join(id);
        if dir.join("manifest.json").exists() {
            anyhow::bail!("run directory {} is already in use", dir.display());
        }
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let run = Run {
            manifest: RunManifest {
                subcommand: cli.command.name(),
                argv,
                args: cli.command.clone(),
                config: cfg.clone(),
                seed: cfg.seed,
                code_version: code_version(),
                started_at: now(),
                finished_at: None,
                run_dir: dir.clone(),
                outputs: vec![],
            },
            dir,
        };
        run.write_manifest()?;
        Ok(run)
    }

    fn write_manifest(&self) -> anyhow::Result<()> {
        let path = self.dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&self.manifest)?)
            .with_context(|| format!("writing {}", path.display()))
    }

    fn output(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.manifest.outputs.push(p.clone());
        p
    }

    fn finish(mut self) -> anyhow::Result<PathBuf> {
        self.manifest.finished_at = Some(now());
        self.write_manifest()?;
        Ok(self.dir)
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn load_prepared(data: &Path, cfg: &RunConfig) -> anyhow::Result<PreparedData> {
    let clips = load_dataset(data)?.into_iter().map(Arc::new).collect();
    Ok(prepare_pairs(clips, cfg.data.split, cfg.seed)?)
}

fn load_model(path: &Path) -> anyhow::Result<ModelBundle> {
    Ok(load_bundle(path).with_context(|| format!("loading {}", path.display()))?.0)
}

fn require_model(model: &Option<PathBuf>, what: &str) -> anyhow::Result<ModelBundle> {
    match model {
        Some(p) => load_model(p),
        None => Err(Error::Config(format!("{what} needs --model")).into()),
    }
}

fn execute(cli: &Cli, cfg: &RunConfig, run: &mut Run) -> anyhow::Result<()> {
    match &cli.command {
        Command::Prepare(a) => {
            let data = load_prepared(&a.data, cfg)?;
            fs::write(run.output("split.txt"), data.split.to_text())?;
            let labeled = data
                .clips
                .iter()
                .map(|c| label_clip(Arc::clone(c), cfg.train.threshold))
                .collect::<Result<Vec<_>, _>>()?;
            write_labels_csv(&labeled, &run.output("labels.csv"))?;
            let segments: Vec<_> = labeled.iter().flat_map(segments_of).collect();
            write_histogram_csv(&segment_histogram(&segments), &run.output("segment_lengths.csv"))?;
            #[derive(Serialize)]
            struct PairRow<'a> {
                subset: &'a str,
                cover_id: &'a str,
                secret_id: &'a str,
            }
            let mut w = csv::Writer::from_path(run.output("pairs.csv"))?;
            for (subset, pairs) in [("train", &data.train), ("validation", &data.validation), ("test", &data.test)] {
                for p in pairs.iter() {
                    w.serialize(PairRow { subset, cover_id: p.cover.id(), secret_id: p.secret.id() })?;
                }
            }
            w.flush()?;
            let refs: usize = labeled.iter().map(|l| l.reference_count()).sum();
            let res: usize = labeled.iter().map(|l| l.residual_count()).sum();
            println!("{} clips, {refs} reference frames, {res} residual frames", labeled.len());
        }
        Command::Train(a) => {
            let data = load_prepared(&a.data.data, cfg)?;
            let mut tc = cfg.train.clone();
            if let Some(s) = a.steps {
                tc.max_steps = s;
            }
            let out = TrainOutput { dir: Some(run.dir.join("checkpoints")) };
            let train = if a.gan { train_hr_gan } else { train_hr };
            let (mut bundle, report) = train(&data.train, &data.validation, &tc, &out)?;
            report.write_csv(&run.output("train_log.csv"))?;
            if a.with_ror {
                let ror = train_ror(&mut bundle, &data.train, &data.validation, &tc)?;
                write_json(&ror, &run.output("ror.json"))?;
                println!("RoR held-out accuracy {:.4}", ror.heldout_accuracy);
            }
            save_bundle(&bundle, &tc.digest(), &run.output("model.safetensors"))?;
            write_json(&report, &run.output("report.json"))?;
            println!("best validation loss {:.5} at step {}", report.best_val_loss, report.best_step);
        }
        Command::TrainRor(a) => {
            let data = load_prepared(&a.data.data, cfg)?;
            let mut bundle = load_model(&a.model)?;
            let report = train_ror(&mut bundle, &data.train, &data.validation, &cfg.train)?;
            save_bundle(&bundle, &cfg.train.digest(), &run.output("model.safetensors"))?;
            write_json(&report, &run.output("ror.json"))?;
            println!("RoR held-out accuracy {:.4}", report.heldout_accuracy);
        }
        Command::Hide(a) => {
            let bundle = load_model(&a.model)?;
            let cover = load_clip(&a.cover)?;
            let secret = Arc::new(load_clip(&a.secret)?);
            let threshold = a.threshold.unwrap_or(cfg.train.threshold);
            let enc = encode_clip(&bundle, &cover, secret, threshold)?;
            enc.container.save(&run.output("container"))?;
            write_labels_csv(&[enc.labeled], &run.output("labels.csv"))?;
            println!("{} container frames", enc.container.len());
        }
        Command::Reveal(a) => {
            let bundle = load_model(&a.model)?;
            let container = ContainerClip::load(&a.container)?;
            let dec = decode_clip(&bundle, &container)?;
            save_frames(&dec.frames, &run.output("decoded"))?;
            #[derive(Serialize)]
            struct DecisionRow {
                frame_idx: usize,
                p1: f64,
                p2: f64,
                verdict: FrameLabel,
                fallback: bool,
            }
            let mut w = csv::Writer::from_path(run.output("decisions.csv"))?;
            for (t, d) in dec.decisions.iter().enumerate() {
                w.serialize(DecisionRow {
                    frame_idx: t,
                    p1: d.p1,
                    p2: d.p2,
                    verdict: d.verdict,
                    fallback: dec.fallbacks.contains(&t),
                })?;
            }
            w.flush()?;
            println!("{} decoded frames", dec.frames.len());
        }
        Command::Evaluate(a) => {
            let data = load_prepared(&a.data.data, cfg)?;
            let bundle = match (a.method, &a.model) {
                (Method::Lsb, None) => None,
                _ => Some(require_model(&a.model, "evaluate --method image/video")?),
            };
            let pairs: Vec<ClipPair> = match a.subset {
                Subset::Train => data.train,
                Subset::Validation => data.validation,
                Subset::Test => data.test,
                Subset::All => [data.train, data.validation, data.test].concat(),
            };
            let ev = evaluate(bundle.as_ref(), &pairs, cfg.train.threshold, a.method)?;
            run.output("records.csv");
            run.output("summary.csv");
            ev.write(&run.dir)?;
            println!(
                "{:?}: container-cover APD {:.4}, secret-decoded APD {:.4} over {} frames",
                a.method, ev.summary.apd_container_cover, ev.summary.apd_secret_decoded, ev.summary.frames
            );
        }
        Command::LsbHide(a) => {
            let cover = load_clip(&a.cover)?;
            let secret = load_clip(&a.secret)?;
            if cover.len() != secret.len() {
                return Err(Error::LengthMismatch(cover.len(), secret.len()).into());
            }
            save_frames(&lsb_encode_frames(cover.frames(), secret.frames())?, &run.output("container"))?;
        }
        Command::LsbReveal(a) => {
            let container = load_clip(&a.container)?;
            save_frames(&lsb_decode_frames(container.frames()), &run.output("decoded"))?;
        }
        Command::Probe(a) => {
            let cover = Frame::load(&a.cover)?;
            let secret = Frame::load(&a.secret)?;
            let spec = ProbeSpec::corners(cover.height(), cover.width());
            let bundle;
            let (container, decoder) = match a.codec {
                CodecKind::Lsb => (lsb_encode_frames(&[cover], &[secret])?.remove(0), ProbeDecoder::Lsb),
                CodecKind::Model => {
                    bundle = require_model(&a.model, "probe --codec model")?;
                    let c = bundle.hide(FrameLabel::Reference, &[&cover], &[&secret])?.remove(0);
                    (c, ProbeDecoder::RNet(&bundle, FrameLabel::Reference))
                }
            };
            let result = run_probe(decoder, &container, &spec)?;
            container.save(&run.output("container.png"))?;
            spec.apply(&container)?.save(&run.output("modified.png"))?;
            result.heat_map()?.save(&run.output("change_map.png"))?;
            #[derive(Serialize)]
            struct Summary<'a> {
                spec: &'a ProbeSpec,
                changed_outside: usize,
                changed_inside: usize,
                max_change_outside: f32,
            }
            write_json(
                &Summary {
                    spec: &spec,
                    changed_outside: result.changed_outside,
                    changed_inside: result.changed_inside,
                    max_change_outside: result.max_change_outside,
                },
                &run.output("probe.json"),
            )?;
            println!("{} changed pixels outside the patches", result.changed_outside);
        }
        Command::LeakCurve(a) => {
            let data = load_prepared(&a.data.data, cfg)?;
            let mut lc = cfg.leak.clone();
            if let Some(b) = &a.budgets {
                lc.budgets = b.clone();
            }
            lc.threshold = cfg.train.threshold;
            let pairs = [data.train, data.validation, data.test].concat();
            let bundle = match a.codec {
                CodecKind::Lsb => None,
                CodecKind::Model => Some(require_model(&a.model, "leak-curve --codec model")?),
            };
            let codec = bundle.as_ref().map_or(LeakCodec::Lsb, LeakCodec::Model);
            let curve = run_leak_curve(codec, &pairs, &lc)?;
            curve.write_csv(&run.output("leak_curve.csv"))?;
            for p in &curve.points {
                println!("{:>6} {:.4}", p.budget, p.accuracy);
            }
        }
        Command::Goodness(a) => {
            let bundle = load_model(&a.model)?;
            let clips: Vec<Arc<VideoClip>> =
                load_dataset(&a.data.data)?.into_iter().take(a.clips).map(Arc::new).collect();
            let m = run_goodness_matrix(&bundle, &clips, &clips, cfg.train.threshold)?;
            for f in ["matrix.csv", "covers.csv", "secrets.csv", "extremes.csv"] {
                run.output(f);
            }
            m.write(&run.dir, a.top_k)?;
            if let (Some(best), Some(worst)) = (m.cover_ranking().first(), m.cover_ranking().last()) {
                println!(
                    "best cover {} ({:.3}), worst cover {} ({:.3})",
                    best.clip_id, best.mean_apd, worst.clip_id, worst.mean_apd
                );
            }
        }
        Command::ThresholdSweep(a) => {
            if let Some(t) = a.thresholds.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
                return Err(Error::InvalidThreshold(*t).into());
            }
            let clips: Vec<Arc<VideoClip>> = load_dataset(&a.data.data)?.into_iter().map(Arc::new).collect();
            let sweep = run_threshold_sweep(&clips, &a.thresholds)?;
            for f in ["counts.csv", "segment_lengths.csv", "apd_to_first.csv"] {
                run.output(f);
            }
            sweep.write(&run.dir)?;
            for r in &sweep.rows {
                println!("{:>8.2} {:>5} {:>5} {:.3}", r.threshold, r.reference_count, r.residual_count, r.ratio);
            }
        }
    }
    Ok(())
}

fn is_usage_error(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<Error>(),
        Some(Error::Config(_) | Error::InvalidThreshold(_) | Error::InvalidFractions(_))
    )
}

/// Parses `argv`, runs the subcommand and maps failures to exit codes:
/// 2 for usage and configuration errors, 1 for everything else.
pub fn main_with<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cfg = match RunConfig::load(cli.config.as_deref(), cli.seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("vidsteg: {e}");
            return ExitCode::from(if matches!(e, Error::Io { .. }) { 1 } else { 2 });
        }
    };
    let argv_text = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = Run::start(&cli, &cfg, argv_text).and_then(|mut run| {
        execute(&cli, &cfg, &mut run)?;
        run.finish()
    });
    match result {
        Ok(dir) => {
            println!("run directory: {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("vidsteg: {e:#}");
            ExitCode::from(if is_usage_error(&e) { 2 } else { 1 })
        }
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    main_with(std::env::args_os())
}
