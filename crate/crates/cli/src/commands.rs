//! Subcommand implementations.

use std::path::Path;

use nfvc_core::checkpoint::{Checkpoint, CheckpointMeta, OptimizerMeta};
use nfvc_core::conditioning::dataset::{write_tensor_f32, Dataset, Split};
use nfvc_core::conditioning::{SpeakerEmbedding, Utterance};
use nfvc_core::diffcore::optim::Adam;
use nfvc_core::error::{Error, Result};
use nfvc_core::eval;
use nfvc_core::eval::report::{new_voice_report_csv, scatter_svg, write_csv, ScatterGroup};
use nfvc_core::flow::{train_with, TrainExample, TrainingReport};
use nfvc_core::model::{ExampleSpeaker, SpeakerMode, VoiceModel};
use nfvc_core::modes::{self, Profile};
use nfvc_core::speakergen::{ExportedVoice, SpeakerGenConfig, SpeakerGenerator};
use nfvc_core::synthworld::{self, CorpusStats, SynthConfig};

use crate::specs::{read_config, write_json, SpeakerRef, TrainSpec, UtteranceSpec};

// ── data-gen ─────────────────────────────────────────────────────────

pub fn data_gen(config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg: SynthConfig = match config {
        Some(p) => read_config(p)?,
        None => SynthConfig::default(),
    };
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    let dataset = synthworld::gen_corpus(cfg.clone(), out)?;
    write_json(&out.join("synth_config.json"), &cfg)?;
    let train = dataset.entries(Some(Split::Train)).count();
    let eval_n = dataset.entries(Some(Split::Eval)).count();
    println!(
        "wrote dataset to {}: {train} train + {eval_n} eval utterances, {} speakers, {} locales",
        out.display(),
        dataset.manifest.speakers.len(),
        dataset.manifest.locales.len()
    );
    Ok(())
}

// ── train ────────────────────────────────────────────────────────────

fn build_examples(
    dataset: &Dataset,
    split: Split,
    mode: SpeakerMode,
    centroids: &[(String, SpeakerEmbedding)],
) -> Result<Vec<TrainExample>> {
    dataset
        .entries(Some(split))
        .map(|entry| {
            let utt = dataset.load_utterance(entry)?;
            let speaker = match mode {
                SpeakerMode::External => {
                    let emb = centroids
                        .iter()
                        .find(|(id, _)| *id == utt.speaker_id)
                        .map(|(_, e)| e.clone())
                        .ok_or_else(|| {
                            Error::Data(format!("no centroid for speaker '{}'", utt.speaker_id))
                        })?;
                    ExampleSpeaker::Vector(emb)
                }
                SpeakerMode::Lookup => {
                    let idx = dataset
                        .manifest
                        .speakers
                        .iter()
                        .position(|s| s.id == utt.speaker_id)
                        .ok_or_else(|| {
                            Error::Data(format!("speaker '{}' not in manifest", utt.speaker_id))
                        })?;
                    ExampleSpeaker::TableIndex(idx)
                }
            };
            Ok(TrainExample {
                utterance: utt,
                speaker,
            })
        })
        .collect()
}

fn checkpoint_meta(
    model: &VoiceModel,
    dataset: &Dataset,
    stats: &CorpusStats,
    optimizer: Option<&Adam>,
    speakergen: Option<&SpeakerGenerator>,
) -> CheckpointMeta {
    CheckpointMeta {
        model: model.cfg.clone(),
        actnorms_initialized: model.flow.actnorms_initialized(),
        optimizer: optimizer.map(|o| OptimizerMeta {
            config: o.config().clone(),
            step: o.step_count(),
        }),
        speakergen: speakergen.map(|g| g.cfg.clone()),
        toy_stats: Some(stats.clone()),
        locales: dataset.manifest.locales.clone(),
        phoneme_names: dataset
            .manifest
            .phoneme_inventory
            .iter()
            .map(|p| p.name.clone())
            .collect(),
        centroid_ids: Vec::new(), // filled from `centroids` on save
    }
}

pub fn train(dataset_dir: &Path, config: Option<&Path>, out: &Path, resume: Option<&Path>) -> Result<()> {
    let mut spec: TrainSpec = match config {
        Some(p) => read_config(p)?,
        None => TrainSpec::default(),
    };
    let dataset = Dataset::open(dataset_dir)?;
    spec.model.bins = dataset.manifest.feature_bins as usize;
    spec.model.n_phonemes = dataset.manifest.phoneme_inventory.len();
    spec.model.n_accents = dataset.manifest.locales.len();
    spec.model.n_speakers = dataset.manifest.speakers.len();

    let (mut model, mut optimizer) = match resume {
        Some(ck_path) => {
            let ck = Checkpoint::load(ck_path)?;
            spec.model = ck.meta.model.clone();
            let opt = ck
                .optimizer
                .ok_or_else(|| Error::Data("checkpoint has no training state to resume".into()))?;
            println!("resuming from {} at step {}", ck_path.display(), opt.step_count());
            (ck.model, opt)
        }
        None => (
            VoiceModel::new(spec.model.clone())?,
            Adam::new(spec.train.optimizer.clone()),
        ),
    };

    let stats = CorpusStats::compute(&dataset, spec.model.speaker_embed_dim, spec.proj_seed)?;
    let centroids = synthworld::speaker_centroids(&dataset, &stats)?;
    let examples = build_examples(&dataset, Split::Train, spec.model.speaker_mode, &centroids)?;

    std::fs::create_dir_all(out)?;
    write_json(&out.join("train_config.json"), &spec)?;
    let ck_path = out.join("checkpoint.nfvc");

    let report: TrainingReport = {
        let dataset = &dataset;
        let stats = &stats;
        let centroids = &centroids;
        let ck_path = &ck_path;
        train_with(
            &mut model,
            &examples,
            &spec.train,
            &mut optimizer,
            |snap| {
                println!("epoch {:>3}: nll/element {:.4}", snap.epoch + 1, snap.mean_nll);
                Checkpoint {
                    meta: checkpoint_meta(snap.model, dataset, stats, Some(snap.optimizer), None),
                    model: snap.model.clone(),
                    optimizer: Some(snap.optimizer.clone()),
                    speakergen: None,
                    centroids: centroids.clone(),
                }
                .save(ck_path)
            },
        )?
    };

    // NLL trace: one row per epoch.
    let rows: Vec<Vec<String>> = report
        .epoch_nll
        .iter()
        .enumerate()
        .map(|(i, v)| vec![(i + 1).to_string(), format!("{v:.6}")])
        .collect();
    write_csv(out.join("nll.csv"), "epoch,mean_nll_per_element", &rows)?;

    // Speaker generator over the per-speaker reference embeddings.
    let generator = if spec.fit_speaker_generator {
        let pool = synthworld::speaker_pool(&dataset, &stats)?;
        let mut gen = SpeakerGenerator::new(SpeakerGenConfig {
            embed_dim: spec.model.speaker_embed_dim,
            n_locales: dataset.manifest.locales.len(),
            ..SpeakerGenConfig::default()
        });
        let sg_report = gen.train(&pool, &spec.speakergen)?;
        println!(
            "speaker generator: loglik {:.4} -> {:.4}",
            sg_report.initial_loglik,
            sg_report.epoch_loglik.last().copied().unwrap_or(f64::NAN)
        );
        write_json(&out.join("speakergen_report.json"), &sg_report)?;
        Some(gen)
    } else {
        None
    };

    Checkpoint {
        meta: checkpoint_meta(&model, &dataset, &stats, Some(&optimizer), generator.as_ref()),
        model,
        optimizer: Some(optimizer),
        speakergen: generator,
        centroids,
    }
    .save(&ck_path)?;
    write_json(&out.join("report.json"), &report)?;

    let final_nll = report.epoch_nll.last().copied().unwrap_or(report.initial_nll);
    println!(
        "done: nll/element {:.4} -> {:.4} over {} epochs; checkpoint at {}",
        report.initial_nll,
        final_nll,
        report.epoch_nll.len(),
        ck_path.display()
    );
    Ok(())
}

// ── shared synthesis plumbing ────────────────────────────────────────

fn resolve_speaker(ck: &Checkpoint, spec: &SpeakerRef) -> Result<ExampleSpeaker> {
    let given = [
        spec.id.is_some(),
        spec.values.is_some(),
        spec.voices_file.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if given != 1 {
        return Err(Error::Config(
            "speaker must give exactly one of: id, values, voices_file (+ voice_id)".into(),
        ));
    }
    if let Some(id) = &spec.id {
        return match ck.meta.model.speaker_mode {
            SpeakerMode::External => Ok(ExampleSpeaker::Vector(ck.centroid(id)?.clone())),
            SpeakerMode::Lookup => {
                let idx = ck
                    .meta
                    .centroid_ids
                    .iter()
                    .position(|cid| cid == id)
                    .ok_or_else(|| Error::Data(format!("unknown speaker '{id}'")))?;
                Ok(ExampleSpeaker::TableIndex(idx))
            }
        };
    }
    if let Some(values) = &spec.values {
        return Ok(ExampleSpeaker::Vector(SpeakerEmbedding::new(values.clone())?));
    }
    let file = spec.voices_file.as_ref().unwrap();
    let voice_id = spec
        .voice_id
        .as_ref()
        .ok_or_else(|| Error::Config("voices_file also needs voice_id".into()))?;
    let voices: Vec<ExportedVoice> = read_config(Path::new(file))?;
    let voice = voices
        .iter()
        .find(|v| v.id == *voice_id)
        .ok_or_else(|| Error::Data(format!("voice '{voice_id}' not found in {file}")))?;
    Ok(ExampleSpeaker::Vector(SpeakerEmbedding::new(voice.values.clone())?))
}

fn utterance_from_spec(ck: &Checkpoint, spec: &UtteranceSpec, profile: Profile) -> Result<Utterance> {
    let phoneme_ids = spec
        .phonemes
        .iter()
        .map(|name| {
            ck.meta
                .phoneme_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Data(format!("unknown phoneme '{name}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let accent_id = ck
        .meta
        .locales
        .iter()
        .position(|l| *l == spec.accent)
        .ok_or_else(|| Error::Data(format!("unknown accent/locale '{}'", spec.accent)))?;
    let frames: usize = spec.durations.iter().map(|&d| d as usize).sum();
    let f0_hz = match &spec.f0_hz {
        Some(f0) => f0.clone(),
        None if profile.uses_oracle_f0() => {
            return Err(Error::Config(format!(
                "profile '{profile}' needs oracle f0 but the utterance spec has none"
            )));
        }
        None => vec![0.0; frames],
    };
    if profile.uses_oracle_f0() && f0_hz.iter().all(|&f| f == 0.0) {
        eprintln!("warning: utterance has no voiced frames; normalized f0 is all zeros");
    }
    let utt = Utterance {
        id: "request".into(),
        speaker_id: spec.speaker.id.clone().unwrap_or_else(|| "external".into()),
        accent_id,
        phoneme_ids,
        durations: spec.durations.iter().map(|&d| d as usize).collect(),
        f0_hz,
        mel: None,
    };
    utt.validate()?;
    Ok(utt)
}

// ── tts ──────────────────────────────────────────────────────────────

pub fn tts(
    checkpoint: &Path,
    utterance: &Path,
    profile: &str,
    temperature: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let profile: Profile = profile.parse()?;
    if profile.is_vc() {
        return Err(Error::Config(format!(
            "profile '{profile}' is a conversion profile; use the vc command"
        )));
    }
    let ck = Checkpoint::load(checkpoint)?;
    let spec: UtteranceSpec = read_config(utterance)?;
    let utt = utterance_from_spec(&ck, &spec, profile)?;
    let speaker = resolve_speaker(&ck, &spec.speaker)?;
    let cond = ck.model.condition_set(&utt, &speaker, profile.uses_oracle_f0())?;
    let mel = modes::tts_synthesize(&ck.model, &cond, temperature, seed)?;
    write_tensor_f32(out, mel.tensor())?;
    println!(
        "synthesized {} frames x {} bins ({profile}, temperature {temperature}, seed {seed}) -> {}",
        mel.frames(),
        mel.bins(),
        out.display()
    );
    Ok(())
}

// ── vc ───────────────────────────────────────────────────────────────

#[allow(clippy::too_many_arguments)]
pub fn vc(
    checkpoint: &Path,
    dataset_dir: &Path,
    utterance_id: &str,
    target_speaker: Option<&str>,
    voices: Option<&Path>,
    voice_id: Option<&str>,
    profile: &str,
    out: &Path,
) -> Result<()> {
    let profile: Profile = profile.parse()?;
    if !profile.is_vc() {
        return Err(Error::Config(format!(
            "profile '{profile}' is a sampling profile; use the tts command"
        )));
    }
    let ck = Checkpoint::load(checkpoint)?;
    let dataset = Dataset::open(dataset_dir)?;
    let entry = dataset.entry(utterance_id)?;
    let utt = dataset.load_utterance(entry)?;
    let mel = utt.mel.clone().expect("dataset utterances carry features");

    let source = resolve_speaker(
        &ck,
        &SpeakerRef {
            id: Some(utt.speaker_id.clone()),
            ..SpeakerRef::default()
        },
    )?;
    let target_ref = SpeakerRef {
        id: target_speaker.map(str::to_string),
        voices_file: voices.map(|p| p.display().to_string()),
        voice_id: voice_id.map(str::to_string),
        values: None,
    };
    let resolved_target = resolve_speaker(&ck, &target_ref)?;
    let target = materialize(&ck, resolved_target)?;

    let cond = ck.model.condition_set(&utt, &source, profile.uses_oracle_f0())?;
    let converted = modes::vc_convert(&ck.model, &mel, &cond, &target)?;
    write_tensor_f32(out, converted.tensor())?;
    println!(
        "converted '{utterance_id}' ({} frames, {profile}) -> {}",
        converted.frames(),
        out.display()
    );
    Ok(())
}

// ── gen-speakers ─────────────────────────────────────────────────────

pub fn gen_speakers(checkpoint: &Path, locale: &str, count: usize, seed: u64, out: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let generator = ck
        .speakergen
        .as_ref()
        .ok_or_else(|| Error::Data("checkpoint has no trained speaker generator".into()))?;
    let locale_idx = ck
        .meta
        .locales
        .iter()
        .position(|l| l == locale)
        .ok_or_else(|| Error::Data(format!("unknown locale '{locale}'")))?;
    let spec = generator.forward(locale_idx)?;
    let voices: Vec<ExportedVoice> = (0..count)
        .map(|i| {
            let emb = spec.sample(seed.wrapping_add(i as u64));
            ExportedVoice {
                id: format!("new_{i:03}"),
                locale: locale.to_string(),
                values: emb.values().to_vec(),
            }
        })
        .collect();
    write_json(out, &voices)?;
    println!("sampled {count} voices for locale '{locale}' (seed {seed}) -> {}", out.display());
    Ok(())
}

// ── eval ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Metric {
    Secs,
    Variance,
    Nn,
    Pca,
}

/// Speaker embedding a conversion should condition on for a training
/// speaker id, consistent with how the model was trained.
fn conversion_embedding(ck: &Checkpoint, id: &str) -> Result<SpeakerEmbedding> {
    let resolved = resolve_speaker(
        ck,
        &SpeakerRef {
            id: Some(id.to_string()),
            ..SpeakerRef::default()
        },
    )?;
    materialize(ck, resolved)
}

/// Concrete vector for a resolved speaker source.
fn materialize(ck: &Checkpoint, speaker: ExampleSpeaker) -> Result<SpeakerEmbedding> {
    match speaker {
        ExampleSpeaker::Vector(v) => Ok(v),
        ExampleSpeaker::TableIndex(i) => SpeakerEmbedding::new(
            ck.model
                .speaker_table
                .as_ref()
                .expect("lookup mode has a table")
                .row(i)?,
        ),
    }
}

fn load_voices(path: &Path) -> Result<Vec<(String, SpeakerEmbedding)>> {
    let voices: Vec<ExportedVoice> = read_config(path)?;
    voices
        .into_iter()
        .map(|v| Ok((v.id, SpeakerEmbedding::new(v.values)?)))
        .collect()
}

pub fn eval_cmd(
    checkpoint: &Path,
    dataset_dir: &Path,
    metric: Metric,
    out: &Path,
    new_voices: Option<&Path>,
    limit: Option<usize>,
) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let dataset = Dataset::open(dataset_dir)?;
    std::fs::create_dir_all(out)?;
    let stats = ck
        .meta
        .toy_stats
        .clone()
        .ok_or_else(|| Error::Data("checkpoint carries no encoder statistics".into()))?;

    match metric {
        Metric::Secs => {
            // Convert held-out utterances to the cyclically next speaker and
            // score the result against both identities.
            let mut entries: Vec<_> = dataset.entries(Some(Split::Eval)).collect();
            if entries.is_empty() {
                entries = dataset.entries(Some(Split::Train)).collect();
            }
            if let Some(n) = limit {
                entries.truncate(n);
            }
            let mut rows = Vec::new();
            let mut sum_tgt = 0.0;
            let mut sum_src = 0.0;
            for entry in &entries {
                let utt = dataset.load_utterance(entry)?;
                let src_idx = ck
                    .centroids
                    .iter()
                    .position(|(id, _)| *id == utt.speaker_id)
                    .ok_or_else(|| Error::Data(format!("no centroid for '{}'", utt.speaker_id)))?;
                let tgt_idx = (src_idx + 1) % ck.centroids.len();
                let mel = utt.mel.clone().unwrap();
                // condition with the same embedding source training used;
                // similarity is always scored against the encoder centroids
                let source = ExampleSpeaker::Vector(conversion_embedding(&ck, &ck.centroids[src_idx].0)?);
                let target = conversion_embedding(&ck, &ck.centroids[tgt_idx].0)?;
                let cond = ck.model.condition_set(&utt, &source, ck.meta.model.oracle_f0)?;
                let converted = modes::vc_convert(&ck.model, &mel, &cond, &target)?;
                let emb = synthworld::toy_encode(&converted, &stats)?;
                let secs_tgt = eval::cosine_similarity(&emb, &ck.centroids[tgt_idx].1)?;
                let secs_src = eval::cosine_similarity(&emb, &ck.centroids[src_idx].1)?;
                sum_tgt += secs_tgt;
                sum_src += secs_src;
                rows.push(vec![
                    utt.id.clone(),
                    ck.centroids[src_idx].0.clone(),
                    ck.centroids[tgt_idx].0.clone(),
                    format!("{secs_tgt:.6}"),
                    format!("{secs_src:.6}"),
                ]);
            }
            write_csv(
                out.join("secs.csv"),
                "utterance,source,target,secs_target,secs_source",
                &rows,
            )?;
            println!(
                "secs over {} conversions: mean vs target {:.4}, mean vs source {:.4} -> {}",
                rows.len(),
                sum_tgt / rows.len().max(1) as f64,
                sum_src / rows.len().max(1) as f64,
                out.join("secs.csv").display()
            );
        }
        Metric::Variance => {
            let pool: Vec<SpeakerEmbedding> = ck.centroids.iter().map(|(_, e)| e.clone()).collect();
            let v_pool = eval::variance_sum(&pool)?;
            let mut rows = vec![vec![
                "training_pool".to_string(),
                pool.len().to_string(),
                format!("{v_pool:.6}"),
            ]];
            if let Some(path) = new_voices {
                let new: Vec<SpeakerEmbedding> =
                    load_voices(path)?.into_iter().map(|(_, e)| e).collect();
                let v_new = eval::variance_sum(&new)?;
                rows.push(vec![
                    "new_voices".to_string(),
                    new.len().to_string(),
                    format!("{v_new:.6}"),
                ]);
                println!(
                    "variance sum: pool {v_pool:.4}, new {v_new:.4} (ratio {:.3})",
                    v_new / v_pool
                );
            } else {
                println!("variance sum: pool {v_pool:.4}");
            }
            write_csv(out.join("variance.csv"), "set,count,variance_sum", &rows)?;
        }
        Metric::Nn => {
            let path = new_voices
                .ok_or_else(|| Error::Config("metric nn needs --new-voices".into()))?;
            let new: Vec<SpeakerEmbedding> = load_voices(path)?.into_iter().map(|(_, e)| e).collect();
            let pool: Vec<SpeakerEmbedding> = ck.centroids.iter().map(|(_, e)| e.clone()).collect();
            let report = eval::new_voice_distance_report(&new, &pool)?;
            new_voice_report_csv(out.join("nn_report.csv"), &report)?;
            println!(
                "nearest-neighbor report over {} new voices: fraction beyond NN2NN {:.3} -> {}",
                report.rows.len(),
                report.fraction_beyond_nn2nn,
                out.join("nn_report.csv").display()
            );
        }
        Metric::Pca => {
            let mut embeddings: Vec<SpeakerEmbedding> =
                ck.centroids.iter().map(|(_, e)| e.clone()).collect();
            let mut ids: Vec<(String, &str)> = ck
                .centroids
                .iter()
                .map(|(id, _)| (id.clone(), "training"))
                .collect();
            if let Some(path) = new_voices {
                for (id, e) in load_voices(path)? {
                    embeddings.push(e);
                    ids.push((id, "new"));
                }
            }
            let fit = eval::pca_fit(&embeddings, 0.9)?;
            let rows: Vec<Vec<String>> = ids
                .iter()
                .zip(&fit.coords_2d)
                .map(|((id, group), (x, y))| {
                    vec![id.clone(), group.to_string(), format!("{x:.6}"), format!("{y:.6}")]
                })
                .collect();
            write_csv(out.join("pca_coords.csv"), "id,group,pc1,pc2", &rows)?;
            let train_pts: Vec<(f64, f64)> = ids
                .iter()
                .zip(&fit.coords_2d)
                .filter(|((_, g), _)| *g == "training")
                .map(|(_, &p)| p)
                .collect();
            let new_pts: Vec<(f64, f64)> = ids
                .iter()
                .zip(&fit.coords_2d)
                .filter(|((_, g), _)| *g == "new")
                .map(|(_, &p)| p)
                .collect();
            scatter_svg(
                out.join("pca_scatter.svg"),
                "speaker embedding space (first two principal components)",
                &[
                    ScatterGroup {
                        label: "training",
                        color: "#1f77b4",
                        points: &train_pts,
                    },
                    ScatterGroup {
                        label: "new",
                        color: "#d62728",
                        points: &new_pts,
                    },
                ],
            )?;
            println!(
                "pca: {} components reach 90% explained variance; coords + scatter -> {}",
                fit.k,
                out.display()
            );
        }
    }
    Ok(())
}

