//! `nfvc`: operator front end for the conditional normalizing-flow voice
//! engine: generate a synthetic corpus, train by exact maximum likelihood,
//! synthesize, convert voices, sample new speakers and run the objective
//! evaluations.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

mod commands;
mod specs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nfvc_core::error::Error;

#[derive(Parser)]
#[command(name = "nfvc", version, about = "Conditional normalizing-flow voice modeling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic training corpus with known speaker identities.
    DataGen {
        /// Corpus configuration JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the flow (and speaker generator) on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Training configuration JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory: checkpoint.nfvc, nll.csv, report.json, config echo.
        #[arg(long)]
        out: PathBuf,
        /// Resume from an existing checkpoint (continues the step counter).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Sample a latent from the prior and decode it to features.
    Tts {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Utterance request JSON (phonemes, durations, accent, speaker).
        #[arg(long)]
        utterance: PathBuf,
        /// One of: "Flow-TTS", "Flow-TTS with f0".
        #[arg(long, default_value = "Flow-TTS")]
        profile: String,
        #[arg(long, default_value_t = 0.7)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output feature tensor file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render a dataset utterance under a different speaker.
    Vc {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset holding the source utterance.
        #[arg(long)]
        dataset: PathBuf,
        /// Id of the source utterance within the dataset.
        #[arg(long)]
        utterance_id: String,
        /// Target training speaker id.
        #[arg(long)]
        target_speaker: Option<String>,
        /// Voices JSON from gen-speakers (with --voice-id) as the target.
        #[arg(long)]
        voices: Option<PathBuf>,
        #[arg(long)]
        voice_id: Option<String>,
        /// One of: "Flow-VC", "Flow-VC w/o f0".
        #[arg(long, default_value = "Flow-VC")]
        profile: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample new speaker embeddings from the locale-conditioned generator.
    GenSpeakers {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        locale: String,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output voices JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Objective evaluations: secs, variance, nn, pca.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        metric: commands::Metric,
        /// Report output directory.
        #[arg(long)]
        out: PathBuf,
        /// Voices JSON for the new-voice metrics.
        #[arg(long)]
        new_voices: Option<PathBuf>,
        /// Cap the number of utterances scored by secs.
        #[arg(long)]
        limit: Option<usize>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::NonFinite(_) | Error::Singular(_) | Error::TrainAborted { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::DataGen { config, out } => commands::data_gen(config.as_deref(), out),
        Command::Train {
            dataset,
            config,
            out,
            resume,
        } => commands::train(dataset, config.as_deref(), out, resume.as_deref()),
        Command::Tts {
            checkpoint,
            utterance,
            profile,
            temperature,
            seed,
            out,
        } => commands::tts(checkpoint, utterance, profile, *temperature, *seed, out),
        Command::Vc {
            checkpoint,
            dataset,
            utterance_id,
            target_speaker,
            voices,
            voice_id,
            profile,
            out,
        } => commands::vc(
            checkpoint,
            dataset,
            utterance_id,
            target_speaker.as_deref(),
            voices.as_deref(),
            voice_id.as_deref(),
            profile,
            out,
        ),
        Command::GenSpeakers {
            checkpoint,
            locale,
            count,
            seed,
            out,
        } => commands::gen_speakers(checkpoint, locale, *count, *seed, out),
        Command::Eval {
            checkpoint,
            dataset,
            metric,
            out,
            new_voices,
            limit,
        } => commands::eval_cmd(checkpoint, dataset, *metric, out, new_voices.as_deref(), *limit),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
