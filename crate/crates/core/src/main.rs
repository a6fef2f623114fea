use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use joint_asr::audio::{read_wav, resample, write_wav, Waveform, CANONICAL_SAMPLE_RATE};
use joint_asr::augment::{mix_at_snr, noise_vocode, sine_wave_speech, SnrSpec, VocodeSpec};
use joint_asr::corpus::{synth_corpus, SyntheticUtterance};
use joint_asr::experiments::{
    eval_items_from_corpus, eval_items_from_manifest, render_plot, run_augment, run_babble, AugmentOptions, BabbleOptions,
    EvalItem, ResultTable, Scorer,
};
use joint_asr::model::{load_checkpoint, save_checkpoint, Checkpoint, JointModel, ModelConfig, Preset};
use joint_asr::training::{evaluate, train, write_log_csv, AudioRef, Dataset, Manifest, ManifestRecord, TrainConfig};
use joint_asr::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "joint-asr", version, about = "Joint speech and speaker recognition with adversarial evaluation")]
struct Cli {
    /// Seed for initialisation, shuffling, pairing and sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON file with `model` and `training` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Serial evaluation with a fixed reduction order.
    #[arg(long, global = true)]
    deterministic: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on a manifest (or a synthetic corpus when none is given).
    Train(TrainArgs),
    /// Score a checkpoint on clean audio.
    Eval(EvalArgs),
    /// One-off augmentation of audio files.
    #[command(subcommand)]
    Augment(AugmentCommand),
    /// Run an evaluation protocol and write its result table.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Render a result table as an SVG line plot.
    Plot(PlotArgs),
    /// Write a synthetic corpus of WAV files with a manifest.
    SynthCorpus(SynthArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// JSON Lines manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Synthetic utterances used when no manifest is given.
    #[arg(long, default_value_t = 24)]
    synth_utterances: usize,
    #[arg(long, default_value_t = 4)]
    synth_speakers: usize,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Trained checkpoint; an untrained tiny model is used when absent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Speech-only model when no checkpoint is given.
    #[arg(long)]
    ablation: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model preset (v1, v2, v3, tiny); overrides the config file.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    ablation: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Write hypotheses and scores as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum AugmentCommand {
    /// Augment one WAV file (resampled to 16 kHz first).
    Wav(AugmentWavArgs),
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["snr", "vocode_channels", "sinewave"]))]
struct AugmentWavArgs {
    input: PathBuf,
    /// Mix with `--noise` at this SNR in dB (`inf` for none).
    #[arg(long, requires = "noise", allow_hyphen_values = true)]
    snr: Option<String>,
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    vocode_channels: Option<usize>,
    #[arg(long)]
    sinewave: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum ExperimentCommand {
    /// Multi-talker babble sweep over SNR.
    Babble(BabbleArgs),
    /// Noise-vocoded and sine-wave speech.
    Augment(AugmentExpArgs),
}

#[derive(Args, Debug)]
struct BabbleArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    /// Comma-separated SNRs in dB; `inf` is clean speech.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snrs: Option<Vec<String>>,
    #[arg(long)]
    out: PathBuf,
    /// Write the pairings as JSON.
    #[arg(long)]
    pairs_out: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AugmentExpArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1000)]
    vocode_n: usize,
    #[arg(long, default_value_t = 795)]
    sine_n: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    table: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    title: Option<String>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 24)]
    utterances: usize,
    #[arg(long, default_value_t = 4)]
    speakers: usize,
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    model: ModelConfig,
    training: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::preset(Preset::Tiny),
            training: TrainConfig::default(),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

enum Data {
    Manifest(Manifest),
    Synthetic(Vec<SyntheticUtterance>),
}

impl Data {
    fn load(args: &DataArgs, seed: u64) -> Result<Self> {
        match &args.manifest {
            Some(p) if p.exists() => Ok(Data::Manifest(Manifest::load(p)?)),
            other => {
                if let Some(p) = other {
                    log::warn!("{} not found; using a synthetic corpus", p.display());
                }
                Ok(Data::Synthetic(synth_corpus(args.synth_utterances, args.synth_speakers, seed)))
            }
        }
    }

    fn speakers(&self) -> Vec<String> {
        match self {
            Data::Manifest(m) => m.speakers.clone(),
            Data::Synthetic(c) => {
                let mut s: Vec<String> = c.iter().map(|u| u.speaker_id.clone()).collect();
                s.sort();
                s.dedup();
                s
            }
        }
    }

    fn dataset(&self, joint: bool) -> Result<Dataset> {
        match self {
            Data::Manifest(m) => Dataset::from_manifest(m, joint),
            Data::Synthetic(c) => Dataset::from_synthetic(c, joint),
        }
    }

    fn eval_items(&self) -> Result<Vec<EvalItem>> {
        match self {
            Data::Manifest(m) => eval_items_from_manifest(m),
            Data::Synthetic(c) => Ok(eval_items_from_corpus(c)),
        }
    }
}

fn load_model(args: &ModelArgs, cfg: &RunConfig, data: &Data, seed: u64) -> Result<Checkpoint> {
    if let Some(p) = &args.checkpoint {
        if p.exists() {
            return load_checkpoint(p);
        }
        log::warn!("{} not found; using an untrained model", p.display());
    }
    let speakers = data.speakers();
    let mut config = cfg.model.clone();
    if args.ablation {
        config = config.ablation();
    }
    config.n_speakers = speakers.len().max(1);
    Ok(Checkpoint {
        model: JointModel::init(config, seed)?,
        speakers,
    })
}

fn write_table(table: &ResultTable, out: &Path, plot: Option<&Path>, title: &str) -> Result<()> {
    table.write(out)?;
    println!("{}", table.to_csv()?.trim_end());
    if let Some(p) = plot {
        render_plot(table, title, p)?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_16k(path: &Path) -> Result<Waveform> {
    resample(&read_wav(path)?, CANONICAL_SAMPLE_RATE)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let seed = cli.seed;
    if cli.deterministic {
        log::info!("deterministic mode");
    }
    match cli.command {
        Command::Train(a) => {
            let data = Data::load(&a.data, seed)?;
            let mut config = a.preset.map(ModelConfig::preset).unwrap_or_else(|| cfg.model.clone());
            if a.ablation {
                config = config.ablation();
            }
            let ds = data.dataset(config.use_speaker_branch)?;
            config.n_speakers = ds.speakers.len().max(1);
            let mut tc = cfg.training.clone();
            tc.seed = seed;
            if let Some(e) = a.epochs {
                tc.epochs = e;
            }
            if let Some(b) = a.batch_size {
                tc.batch_size = b;
            }
            let report = train(&config, &ds, &tc)?;
            save_checkpoint(&a.out, &report.checkpoint.model, &report.checkpoint.speakers)?;
            if let Some(p) = &a.log {
                write_log_csv(&report.log, p)?;
            }
            println!("trained {} steps ({} skipped); checkpoint {}", report.steps, report.skipped_steps, a.out.display());
        }
        Command::Eval(a) => {
            let data = Data::load(&a.data, seed)?;
            let ckpt = load_model(&a.model, &cfg, &data, seed)?;
            let ds = data.dataset(ckpt.model.config.use_speaker_branch)?;
            let items: Vec<usize> = (0..ds.len()).collect();
            let summary = evaluate(&ckpt.model, &ds, &items)?;
            println!(
                "n={} cer={:.6} std={:.6} sra={}",
                items.len(),
                summary.cer_mean,
                summary.cer_std,
                summary.sra.map(|s| format!("{s:.6}")).unwrap_or_default()
            );
            if let Some(p) = &a.out {
                let hyps: Vec<_> = ds
                    .examples
                    .iter()
                    .zip(&summary.hypotheses)
                    .map(|(ex, h)| serde_json::json!({"id": ex.id, "reference": ex.transcript, "hypothesis": h}))
                    .collect();
                let report = serde_json::json!({
                    "cer_mean": summary.cer_mean,
                    "cer_std": summary.cer_std,
                    "sra": summary.sra,
                    "items": hyps,
                });
                write_json(p, &report)?;
            }
        }
        Command::Augment(AugmentCommand::Wav(a)) => {
            let input = read_16k(&a.input)?;
            let out = if let Some(snr) = &a.snr {
                let snr: SnrSpec = snr.parse()?;
                let noise = read_16k(a.noise.as_deref().expect("clap requires --noise"))?;
                let mix = mix_at_snr(&input, &noise, snr)?;
                if mix.peak_scale != 1.0 {
                    log::info!("mixture rescaled by {:.6} to stay within full scale", mix.peak_scale);
                }
                mix.mixed
            } else if let Some(ch) = a.vocode_channels {
                noise_vocode(&input, &VocodeSpec::new(ch), seed)?
            } else {
                sine_wave_speech(&input)?
            };
            write_wav(&a.out, &out)?;
        }
        Command::Experiment(ExperimentCommand::Babble(a)) => {
            let data = Data::load(&a.data, seed)?;
            let ckpt = load_model(&a.model, &cfg, &data, seed)?;
            let snrs = match &a.snrs {
                Some(v) => v.iter().map(|s| s.parse()).collect::<Result<Vec<SnrSpec>>>()?,
                None => SnrSpec::babble_grid(),
            };
            let opts = BabbleOptions {
                n_pairs: a.pairs,
                snrs,
                seed,
            };
            let items = data.eval_items()?;
            let scorer = Scorer {
                model: &ckpt.model,
                speakers: &ckpt.speakers,
            };
            let run = run_babble(scorer, &items, &opts)?;
            if let Some(p) = &a.pairs_out {
                write_json(p, &run.pairs)?;
            }
            write_table(&run.table, &a.out, a.plot.as_deref(), "CER under multi-talker babble")?;
        }
        Command::Experiment(ExperimentCommand::Augment(a)) => {
            let data = Data::load(&a.data, seed)?;
            let ckpt = load_model(&a.model, &cfg, &data, seed)?;
            let opts = AugmentOptions {
                vocode_n: a.vocode_n,
                sine_n: a.sine_n,
                seed,
                ..AugmentOptions::default()
            };
            let items = data.eval_items()?;
            let scorer = Scorer {
                model: &ckpt.model,
                speakers: &ckpt.speakers,
            };
            let run = run_augment(scorer, &items, &opts)?;
            write_table(&run.table, &a.out, a.plot.as_deref(), "CER on noise-vocoded and sine-wave speech")?;
        }
        Command::Plot(a) => {
            let table = ResultTable::read(&a.table)?;
            let title = a.title.unwrap_or_else(|| format!("CER by condition ({})", table.rows.first().map_or("", |r| &r.experiment)));
            render_plot(&table, &title, &a.out)?;
        }
        Command::SynthCorpus(a) => {
            fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
                path: a.out_dir.clone(),
                source: e,
            })?;
            let corpus = synth_corpus(a.utterances, a.speakers, seed);
            let mut records = Vec::with_capacity(corpus.len());
            for u in &corpus {
                let name = format!("{}.wav", u.id);
                write_wav(a.out_dir.join(&name), &u.waveform)?;
                records.push(ManifestRecord {
                    id: Some(u.id.clone()),
                    audio: AudioRef::Wav(name.into()),
                    transcript: u.transcript.clone(),
                    speaker_id: u.speaker_id.clone(),
                });
            }
            let path = a.out_dir.join("manifest.jsonl");
            Manifest::new(records).save(&path)?;
            println!("{} utterances; manifest {}", corpus.len(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
