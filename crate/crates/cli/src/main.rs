mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lead_core::corpus::{synth_generate_with, Corpus, RawRecording, Split, SplitAssignment, SubjectWindows};
use lead_core::model::{Checkpoint, Model, ModelConfig};
use lead_core::signal::{preprocess_trial, FrequencyBand, Montage};
use lead_core::train_eval::{
    band_ablation, evaluate, finetune, pretrain, region_ablation, ChannelRegion, DatasetReport, MetricsReport, Phase,
    SplitCorpus,
};
use lead_core::{LeadError, Result};
use log::info;

use config::RunConfig;

/// Variable holding the log filter (e.g. `info`, `debug`).
const LOG_ENV: &str = "LEAD_LOG";

#[derive(Parser)]
#[command(name = "lead", version, about = "EEG contrastive pre-training, fine-tuning and subject-level detection")]
#[command(after_help = "Log verbosity comes from the LEAD_LOG environment variable (default: info).\n\
Exit codes: 0 ok, 2 config, 3 shape, 4 data, 5 format, 6 numeric, 7 io.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; every section is optional.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Corpora {
    /// Corpus directory (manifest.toml + tensor files). Repeat for several corpora.
    #[arg(long = "corpus", required = true)]
    corpus: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus from the [synth] section.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Generator seed; overrides synth.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Write raw LEADR recordings instead of a preprocessed corpus.
        #[arg(long)]
        raw: bool,
    },
    /// Preprocess a directory of raw LEADR recordings into a corpus.
    Preprocess {
        #[command(flatten)]
        common: Common,
        /// Directory of *.leadr files.
        #[arg(long)]
        input: PathBuf,
        /// Electrode coordinate file; overrides preprocess.montage.
        #[arg(long)]
        montage: Option<PathBuf>,
        /// Output corpus directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Contrastive pre-training on every window of the given corpora.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        corpora: Corpora,
        /// Training seed; overrides pretrain.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output checkpoint (LEADW).
        #[arg(long)]
        out: PathBuf,
    },
    /// Supervised fine-tuning over the training splits of all corpora.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        corpora: Corpora,
        /// Starting checkpoint; a fresh model when absent.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Training seed; overrides finetune.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output checkpoint (LEADW).
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample- and subject-level metrics of a checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        corpora: Corpora,
        #[arg(long)]
        checkpoint: PathBuf,
        /// train, val, test or all.
        #[arg(long, default_value = "test")]
        split: String,
        /// Metrics report (JSON); stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate with band-limited input or a masked scalp region.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        corpora: Corpora,
        #[arg(long)]
        checkpoint: PathBuf,
        /// delta, theta, alpha, beta, gamma or all.
        #[arg(long, conflicts_with = "region", required_unless_present = "region")]
        band: Option<String>,
        /// frontopolar, frontal, temporal, parietal, occipital or central.
        #[arg(long)]
        region: Option<String>,
        /// train, val, test or all.
        #[arg(long, default_value = "test")]
        split: String,
        /// Metrics report (JSON); stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_corpora(dirs: &[PathBuf]) -> Result<Vec<Corpus>> {
    dirs.iter().map(|d| Corpus::load(d)).collect()
}

fn splits(cfg: &RunConfig, corpora: &[Corpus]) -> Result<Vec<SplitAssignment>> {
    corpora.iter().map(|c| c.split(cfg.split.ratios(), cfg.split.seed)).collect()
}

fn parse_split(s: &str) -> Result<Option<Split>> {
    if s.eq_ignore_ascii_case("all") {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

/// Model config from the run config, with data dimensions taken from the
/// first corpus when the config leaves them at their defaults.
fn model_config(cfg: &RunConfig, corpora: &[Corpus]) -> Result<ModelConfig> {
    let mut m = cfg.model_config();
    if cfg.model.is_none() {
        if let Some(c) = corpora.first() {
            m.n_times = c.n_times();
            m.n_channels = c.n_channels();
            m.n_classes = c.n_classes();
        }
    }
    m.validate()?;
    Ok(m)
}

fn write_checkpoint(model: &Model<f32>, out: &Path) -> Result<()> {
    Checkpoint::from_model(model).write(out)?;
    info!("wrote {}", out.display());
    Ok(())
}

/// The checkpoint's model, checked against the config's [model] section if
/// one is given.
fn load_model(cfg: &RunConfig, path: &Path) -> Result<Model<f32>> {
    let ck = Checkpoint::read(path)?;
    let mc = cfg.model.clone().unwrap_or_else(|| ck.config.clone());
    ck.to_model(&mc).map_err(|e| e.in_file(path))
}

fn emit(report: &MetricsReport, out: Option<&Path>) -> Result<()> {
    report.validate()?;
    for d in &report.datasets {
        eprintln!(
            "{} [{}{}] samples {}: acc {:.4} f1 {:.4} | subjects {}: acc {:.4} f1 {:.4}",
            d.dataset_id,
            d.split,
            d.condition.as_deref().map(|c| format!(", {c}")).unwrap_or_default(),
            d.n_samples,
            d.sample_accuracy,
            d.sample_macro_f1,
            d.subjects.len(),
            d.subject_accuracy,
            d.subject_macro_f1
        );
    }
    let json = report.to_json()?;
    match out {
        Some(p) => std::fs::write(p, json).map_err(|e| LeadError::io(p, e)),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn eval_each(
    cfg: &RunConfig,
    corpora: &[Corpus],
    split: &str,
    run: impl Fn(&Corpus, &[usize], &str) -> Result<DatasetReport>,
) -> Result<MetricsReport> {
    let which = parse_split(split)?;
    let assignments = splits(cfg, corpora)?;
    let mut report = MetricsReport::default();
    for (c, a) in corpora.iter().zip(&assignments) {
        let (idx, name) = match which {
            Some(s) => (c.indices_in(a, s)?, s.name().to_string()),
            None => ((0..c.samples.len()).collect(), "all".to_string()),
        };
        report.datasets.push(run(c, &idx, &name)?);
    }
    Ok(report)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, seed, out, raw } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let mut spec = cfg.synth.clone();
            if let Some(s) = seed {
                spec.seed = s;
            }
            if raw {
                std::fs::create_dir_all(&out).map_err(|e| LeadError::io(&out, e))?;
                let recs = lead_core::corpus::synth_raw(&spec)?;
                for r in &recs {
                    let path = out.join(format!("sub-{:04}.{}", r.subject_id, lead_core::corpus::raw::EXTENSION));
                    r.write(&path)?;
                }
                eprintln!("{}: {} raw recordings", out.display(), recs.len());
            } else {
                let corpus = synth_generate_with(&spec, &cfg.preprocess.signal)?;
                corpus.save(&out)?;
                eprintln!("{}: {} subjects, {} samples", out.display(), corpus.n_subjects(), corpus.samples.len());
            }
            Ok(())
        }
        Command::Preprocess { common, input, montage, out } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let pre = &cfg.preprocess;
            let montage = match montage.as_deref().or(pre.montage.as_deref()) {
                Some(p) => Montage::load(p)?,
                None => Montage::standard(),
            };
            let mut files: Vec<PathBuf> = std::fs::read_dir(&input)
                .map_err(|e| LeadError::io(&input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == lead_core::corpus::raw::EXTENSION))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(LeadError::Data(format!("{}: no .leadr recordings", input.display())));
            }
            let mut subjects = Vec::with_capacity(files.len());
            for f in &files {
                let rec = RawRecording::read(f)?;
                let trial = rec.to_trial(&montage).map_err(|e| e.in_file(f))?;
                let windows = preprocess_trial(&trial, &pre.signal, &montage).map_err(|e| e.in_file(f))?;
                subjects.push(SubjectWindows {
                    subject_id: rec.subject_id,
                    label: rec.label,
                    windows,
                });
            }
            let provenance = vec![format!("preprocessed {} recordings", files.len())];
            let corpus = Corpus::from_subjects(&pre.dataset_id, &pre.class_names, pre.signal.win, subjects, provenance)?;
            corpus.save(&out)?;
            eprintln!("{}: {} subjects, {} samples", out.display(), corpus.n_subjects(), corpus.samples.len());
            Ok(())
        }
        Command::Pretrain { common, corpora, seed, out } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let train = cfg.pretrain.resolve(Phase::Pretrain, seed)?;
            let corpora = load_corpora(&corpora.corpus)?;
            let mc = model_config(&cfg, &corpora)?;
            let refs: Vec<&Corpus> = corpora.iter().collect();
            let outcome = pretrain::<f32>(&refs, &mc, &train)?;
            eprintln!("pretrain losses: {:?}", outcome.epoch_losses);
            write_checkpoint(&outcome.model, &out)
        }
        Command::Finetune { common, corpora, init, seed, out } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let train = cfg.finetune.resolve(Phase::Finetune, seed)?;
            let corpora = load_corpora(&corpora.corpus)?;
            let mc = model_config(&cfg, &corpora)?;
            let start = init.as_deref().map(|p| Checkpoint::read(p)?.to_model(&mc).map_err(|e| e.in_file(p))).transpose()?;
            let assignments = splits(&cfg, &corpora)?;
            let sets: Vec<SplitCorpus> = corpora
                .iter()
                .zip(&assignments)
                .map(|(corpus, split)| SplitCorpus { corpus, split })
                .collect();
            let outcome = finetune(start, &sets, &mc, &train)?;
            eprintln!(
                "finetune: best epoch {} mean val F1 {:.4}{}",
                outcome.best_epoch,
                outcome.best_val_f1,
                if outcome.used_swa { " (weight average)" } else { "" }
            );
            write_checkpoint(&outcome.model, &out)
        }
        Command::Evaluate { common, corpora, checkpoint, split, out } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let model = load_model(&cfg, &checkpoint)?;
            let corpora = load_corpora(&corpora.corpus)?;
            let report = eval_each(&cfg, &corpora, &split, |c, idx, name| evaluate(&model, c, idx, name))?;
            emit(&report, out.as_deref())
        }
        Command::Ablate { common, corpora, checkpoint, band, region, split, out } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let model = load_model(&cfg, &checkpoint)?;
            let corpora = load_corpora(&corpora.corpus)?;
            let report = match (band, region) {
                (Some(b), _) => {
                    let band: FrequencyBand = b.parse()?;
                    eval_each(&cfg, &corpora, &split, |c, idx, name| band_ablation(&model, c, idx, name, band))?
                }
                (None, Some(r)) => {
                    let region: ChannelRegion = r.parse()?;
                    eval_each(&cfg, &corpora, &split, |c, idx, name| region_ablation(&model, c, idx, name, region))?
                }
                (None, None) => return Err(LeadError::Config("ablate needs --band or --region".into())),
            };
            emit(&report, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = e.category();
            eprintln!("error [{}]: {e}", cat.as_str());
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}
