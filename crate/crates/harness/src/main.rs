use std::fs::{self, File};
use std::path::PathBuf;
use std::process::ExitCode;

use advbench::campaign::{obtain_model, run_campaign, CampaignError};
use advbench::config::{load_config, CampaignConfig, ConfigError};
use advbench::records::read_records;
use advbench::report::{compute_stats, render_report, write_decisions, Report};
use advbench_core::asr::{AcousticModel, Transcript};
use advbench_core::attacks::{stage1_cw, stage2_qin, thresholds_for, Victim};
use advbench_core::dsp::{read_wav, write_wav};
use advbench_core::experiments::{build_corpus, synth_speech, Language};
use anyhow::Context;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "advbench", version, about = "Targeted audio adversarial examples against toy CTC recognizers")]
struct Cli {
    /// TOML campaign config; every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the corpus and train (or load) the recognizer for one language.
    Train {
        #[arg(long)]
        lang: Language,
    },
    /// Synthesise a transcript to a WAV file.
    Synth {
        #[arg(long)]
        lang: Language,
        text: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Attack a single clip: Stage 1, then Stage 2 on success.
    Attack {
        #[arg(long)]
        lang: Language,
        /// Checkpoint to attack; trained from the config when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// WAV to attack; otherwise `--text` is synthesised.
        #[arg(long)]
        wav: Option<PathBuf>,
        #[arg(long, required_unless_present = "wav")]
        text: Option<String>,
        #[arg(long)]
        target: String,
        #[arg(long)]
        skip_stage2: bool,
    },
    /// Run the configured campaign.
    Campaign,
    /// Recompute decisions.csv and the decision tables from records.csv.
    Stats {
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Re-render report.md from records.csv.
    Report {
        #[arg(long)]
        records: Option<PathBuf>,
    },
}

fn config(cli: &Cli) -> Result<CampaignConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => CampaignConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_records(cfg: &CampaignConfig, path: &Option<PathBuf>) -> anyhow::Result<Vec<advbench::RunRecord>> {
    let path = path.clone().unwrap_or_else(|| cfg.out.join("records.csv"));
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_records(file)?)
}

fn run(cli: &Cli, cfg: &CampaignConfig) -> anyhow::Result<ExitCode> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    match &cli.cmd {
        Cmd::Train { lang } => {
            let corpus = build_corpus(*lang, cfg.corpus.phrases, cfg.seed);
            let m = obtain_model(cfg, &corpus, &cfg.out)?;
            println!(
                "{lang}: {} epochs, final loss {}, held-out CER {:.4}",
                m.summary.epochs,
                m.summary.final_loss.map_or("n/a".into(), |l| format!("{l:.4}")),
                m.summary.heldout_cer
            );
        }
        Cmd::Synth { lang, text, output } => {
            let clip = synth_speech(&Transcript::new(text.as_str()), lang.definition(), cfg.seed)?;
            write_wav(&clip, output)?;
            println!("{} samples written to {}", clip.len(), output.display());
        }
        Cmd::Attack {
            lang,
            checkpoint,
            wav,
            text,
            target,
            skip_stage2,
        } => {
            let model = match checkpoint {
                Some(p) => AcousticModel::load(p)?,
                None => obtain_model(cfg, &build_corpus(*lang, cfg.corpus.phrases, cfg.seed), &cfg.out)?.model,
            };
            let clip = match (wav, text) {
                (Some(p), _) => read_wav(p)?,
                (None, Some(t)) => synth_speech(&Transcript::new(t.as_str()), lang.definition(), cfg.seed)?,
                (None, None) => unreachable!("clap requires one of --wav and --text"),
            };
            let victim = Victim::greedy(&model)?;
            let target = Transcript::new(target.as_str());
            println!("original decodes as {:?}", victim.transcribe(&clip.samples)?.as_str());
            let s1 = stage1_cw(&victim, &clip, &target, &cfg.stage1, cfg.seed)?;
            println!("stage 1: {}", s1.result.to_json());
            if let Some(adv) = &s1.result.adv_clip {
                write_wav(adv, cfg.out.join("attack-s1.wav"))?;
            }
            if let (false, Some(delta)) = (*skip_stage2, s1.best_delta.as_deref()) {
                let thr = thresholds_for(&clip)?;
                let s2 = stage2_qin(&victim, &clip, Some(delta), &target, &cfg.stage2, &thr)?;
                println!("stage 2: {}", s2.result.to_json());
                if let Some(adv) = &s2.result.adv_clip {
                    write_wav(adv, cfg.out.join("attack-s2.wav"))?;
                }
            }
            if !s1.result.success {
                return Ok(ExitCode::from(3));
            }
        }
        Cmd::Campaign => {
            let out = match run_campaign(cfg) {
                Err(CampaignError::Config(e)) => return Err(e.into()),
                r => r?,
            };
            let n = out.report.records.len();
            let failed = out.report.records.iter().filter(|r| !r.success).count();
            println!("{n} records, {failed} unsuccessful; artifacts in {}", out.out.display());
            if out.any_failed() {
                return Ok(ExitCode::from(3));
            }
        }
        Cmd::Stats { records } => {
            let recs = load_records(cfg, records)?;
            match compute_stats(&recs, cfg.stats.alpha_star, cfg.stats.m)? {
                Some(st) => {
                    let path = cfg.out.join("decisions.csv");
                    write_decisions(&st, File::create(&path)?)?;
                    for t in st.welch.iter().chain(&st.kruskal) {
                        println!("{}", t.to_markdown());
                    }
                }
                None => println!("statistical tests need both languages and at least one of experiments 1–4"),
            }
        }
        Cmd::Report { records } => {
            let recs = load_records(cfg, records)?;
            let report = Report {
                stats: compute_stats(&recs, cfg.stats.alpha_star, cfg.stats.m)?,
                records: recs,
                training: Vec::new(),
                notes: Vec::new(),
            };
            let path = cfg.out.join("report.md");
            fs::write(&path, render_report(&report))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Info })
        .parse_default_env()
        .init();
    let cfg = match config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cli, &cfg) {
        Ok(code) => code,
        Err(e) if e.is::<ConfigError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
