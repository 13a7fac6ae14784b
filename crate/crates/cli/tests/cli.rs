//! End-to-end tests of the `nfvc` binary: every subcommand, the exit-code
//! contract, and determinism of the artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn nfvc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nfvc"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = nfvc().args(args).output().expect("spawn nfvc");
    assert!(
        out.status.success(),
        "nfvc {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_expect_code(args: &[&str], code: i32) -> Output {
    let out = nfvc().args(args).output().expect("spawn nfvc");
    assert_eq!(
        out.status.code(),
        Some(code),
        "nfvc {:?} exited {:?}\nstderr: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Shared tiny corpus + 1-epoch training run.
struct Fixture {
    root: PathBuf,
    _keep: tempfile::TempDir,
}

impl Fixture {
    fn data(&self) -> String {
        self.root.join("data").display().to_string()
    }
    fn ckpt(&self) -> String {
        self.root.join("run/checkpoint.nfvc").display().to_string()
    }
    fn run_dir(&self) -> String {
        self.root.join("run").display().to_string()
    }
    fn path(&self, rel: &str) -> String {
        self.root.join(rel).display().to_string()
    }
}

fn fixture() -> &'static Fixture {
    static FIX: OnceLock<Fixture> = OnceLock::new();
    FIX.get_or_init(|| {
        let keep = tempfile::tempdir().expect("tempdir");
        let root = keep.path().to_path_buf();
        std::fs::write(
            root.join("synth.json"),
            r#"{"n_speakers": 6, "n_train": 30, "n_eval": 6, "min_frames": 8, "max_frames": 16, "seed": 11}"#,
        )
        .unwrap();
        std::fs::write(
            root.join("train.json"),
            r#"{"model": {"n_steps": 2, "hidden": 8, "speaker_embed_dim": 16, "phoneme_embed_dim": 4, "accent_embed_dim": 4},
                "train": {"epochs": 1},
                "speakergen": {"epochs": 30}}"#,
        )
        .unwrap();
        std::fs::write(
            root.join("utt.json"),
            r#"{"phonemes": ["ph00", "ph03", "ph01"], "durations": [4, 5, 3],
                "accent": "loc0", "speaker": {"id": "spk2"}}"#,
        )
        .unwrap();
        let synth = root.join("synth.json").display().to_string();
        let train = root.join("train.json").display().to_string();
        let data = root.join("data").display().to_string();
        let run = root.join("run").display().to_string();
        run_ok(&["data-gen", "--config", &synth, "--out", &data]);
        run_ok(&["train", "--dataset", &data, "--config", &train, "--out", &run]);
        Fixture { root, _keep: keep }
    })
}

/// Checkpoint metadata JSON, parsed straight from the documented layout.
fn checkpoint_meta(path: &Path) -> serde_json::Value {
    let bytes = std::fs::read(path).unwrap();
    assert_eq!(&bytes[0..4], b"NFVC");
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    serde_json::from_slice(&bytes[16..16 + meta_len]).unwrap()
}

// ── data-gen ─────────────────────────────────────────────────────────

#[test]
fn data_gen_same_seed_same_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"n_speakers": 4, "n_train": 12, "n_eval": 2, "seed": 3}"#).unwrap();
    let a = dir.path().join("a").display().to_string();
    let b = dir.path().join("b").display().to_string();
    let cfg = cfg.display().to_string();
    run_ok(&["data-gen", "--config", &cfg, "--out", &a]);
    run_ok(&["data-gen", "--config", &cfg, "--out", &b]);
    let ma = std::fs::read(Path::new(&a).join("manifest.json")).unwrap();
    let mb = std::fs::read(Path::new(&b).join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn data_gen_default_config_yields_200_train_utterances() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d").display().to_string();
    run_ok(&["data-gen", "--out", &out]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(&out).join("manifest.json")).unwrap())
            .unwrap();
    let train_count = manifest["utterances"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|u| u["split"] == "train")
        .count();
    assert_eq!(train_count, 200);
    // config echo lands next to the data
    assert!(Path::new(&out).join("synth_config.json").exists());
}

#[test]
fn data_gen_unknown_config_key_rejected_with_key_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"n_speakerz": 4}"#).unwrap();
    let out = run_expect_code(
        &[
            "data-gen",
            "--config",
            &cfg.display().to_string(),
            "--out",
            &dir.path().join("x").display().to_string(),
        ],
        2,
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("n_speakerz"), "stderr: {stderr}");
}

// ── train ────────────────────────────────────────────────────────────

#[test]
fn train_zero_epochs_writes_initialized_checkpoint() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.json");
    std::fs::write(&cfg, r#"{"train": {"epochs": 0}, "fit_speaker_generator": false}"#).unwrap();
    let out = dir.path().join("run0").display().to_string();
    run_ok(&[
        "train",
        "--dataset",
        &f.data(),
        "--config",
        &cfg.display().to_string(),
        "--out",
        &out,
    ]);
    assert!(Path::new(&out).join("checkpoint.nfvc").exists());
    // nll.csv has the header and exactly epochs (= 0) data rows
    let nll = std::fs::read_to_string(Path::new(&out).join("nll.csv")).unwrap();
    assert_eq!(nll.lines().count(), 1, "{nll}");
}

#[test]
fn train_nll_csv_rows_equal_epochs() {
    let f = fixture();
    let nll = std::fs::read_to_string(Path::new(&f.run_dir()).join("nll.csv")).unwrap();
    let rows: Vec<&str> = nll.lines().collect();
    assert_eq!(rows[0], "epoch,mean_nll_per_element");
    assert_eq!(rows.len() - 1, 1); // fixture trains one epoch
}

#[test]
fn train_resume_continues_step_counter() {
    let f = fixture();
    let meta = checkpoint_meta(Path::new(&f.ckpt()));
    let steps_before = meta["optimizer"]["step"].as_u64().unwrap();
    assert!(steps_before > 0);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.json");
    std::fs::write(&cfg, r#"{"train": {"epochs": 1}, "fit_speaker_generator": false}"#).unwrap();
    let out2 = dir.path().join("run2").display().to_string();
    run_ok(&[
        "train",
        "--dataset",
        &f.data(),
        "--config",
        &cfg.display().to_string(),
        "--out",
        &out2,
        "--resume",
        &f.ckpt(),
    ]);
    let meta2 = checkpoint_meta(&Path::new(&out2).join("checkpoint.nfvc"));
    let steps_after = meta2["optimizer"]["step"].as_u64().unwrap();
    assert!(
        steps_after > steps_before,
        "step counter did not continue: {steps_before} -> {steps_after}"
    );
}

// ── tts / vc ─────────────────────────────────────────────────────────

fn read_tensor(path: &Path) -> (Vec<usize>, Vec<f32>) {
    let b = std::fs::read(path).unwrap();
    let ndim = u32::from_le_bytes(b[0..4].try_into().unwrap()) as usize;
    let mut shape = Vec::new();
    for i in 0..ndim {
        shape.push(u32::from_le_bytes(b[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize);
    }
    let off = 4 + 4 * ndim;
    let data = b[off..]
        .chunks(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    (shape, data)
}

#[test]
fn tts_is_seed_reproducible_with_expected_shape() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let o1 = dir.path().join("a.bin").display().to_string();
    let o2 = dir.path().join("b.bin").display().to_string();
    let base = [
        "tts",
        "--checkpoint",
        &f.ckpt(),
        "--utterance",
        &f.path("utt.json"),
        "--seed",
        "9",
    ];
    run_ok(&[&base[..], &["--out", &o1]].concat());
    run_ok(&[&base[..], &["--out", &o2]].concat());
    assert_eq!(std::fs::read(&o1).unwrap(), std::fs::read(&o2).unwrap());
    let (shape, _) = read_tensor(Path::new(&o1));
    assert_eq!(shape, vec![12, 8]); // sum(durations) x feature bins
}

#[test]
fn tts_with_f0_profile_requires_oracle_f0() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = run_expect_code(
        &[
            "tts",
            "--checkpoint",
            &f.ckpt(),
            "--utterance",
            &f.path("utt.json"),
            "--profile",
            "Flow-TTS with f0",
            "--out",
            &dir.path().join("x.bin").display().to_string(),
        ],
        2,
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("f0"));
}

#[test]
fn vc_to_same_speaker_recovers_source() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("same.bin").display().to_string();
    // utt_eval_0030 belongs to spk0 (round-robin over 6 speakers, index 30)
    run_ok(&[
        "vc",
        "--checkpoint",
        &f.ckpt(),
        "--dataset",
        &f.data(),
        "--utterance-id",
        "utt_eval_0030",
        "--target-speaker",
        "spk0",
        "--out",
        &out,
    ]);
    let (shape, converted) = read_tensor(Path::new(&out));
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(Path::new(&f.data()).join("manifest.json")).unwrap(),
    )
    .unwrap();
    let entry = manifest["utterances"]
        .as_array()
        .unwrap()
        .iter()
        .find(|u| u["id"] == "utt_eval_0030")
        .unwrap();
    assert_eq!(entry["speaker"], "spk0");
    let mel_file = entry["mel_file"].as_str().unwrap();
    let (src_shape, source) = read_tensor(&Path::new(&f.data()).join(mel_file));
    assert_eq!(shape, src_shape);
    let worst = converted
        .iter()
        .zip(&source)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    // outputs pass through 32-bit files; identity conversion survives that
    assert!(worst <= 1e-4, "identity conversion error {worst}");
}

#[test]
fn unknown_profile_rejected() {
    let f = fixture();
    run_expect_code(
        &[
            "tts",
            "--checkpoint",
            &f.ckpt(),
            "--utterance",
            &f.path("utt.json"),
            "--profile",
            "Flow-XL",
            "--out",
            "/dev/null",
        ],
        2,
    );
    // a VC profile on the tts command is a config error too
    run_expect_code(
        &[
            "tts",
            "--checkpoint",
            &f.ckpt(),
            "--utterance",
            &f.path("utt.json"),
            "--profile",
            "Flow-VC",
            "--out",
            "/dev/null",
        ],
        2,
    );
}

// ── gen-speakers ─────────────────────────────────────────────────────

#[test]
fn gen_speakers_zero_count_and_determinism() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("none.json").display().to_string();
    run_ok(&[
        "gen-speakers",
        "--checkpoint",
        &f.ckpt(),
        "--locale",
        "loc0",
        "--count",
        "0",
        "--out",
        &empty,
    ]);
    let voices: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&empty).unwrap()).unwrap();
    assert_eq!(voices.as_array().unwrap().len(), 0);

    let v1 = dir.path().join("v1.json").display().to_string();
    let v2 = dir.path().join("v2.json").display().to_string();
    for out in [&v1, &v2] {
        run_ok(&[
            "gen-speakers",
            "--checkpoint",
            &f.ckpt(),
            "--locale",
            "loc1",
            "--count",
            "120",
            "--seed",
            "21",
            "--out",
            out,
        ]);
    }
    assert_eq!(std::fs::read(&v1).unwrap(), std::fs::read(&v2).unwrap());
    let voices: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&v1).unwrap()).unwrap();
    assert_eq!(voices.as_array().unwrap().len(), 120);
    assert_eq!(voices[0]["locale"], "loc1");
}

// ── eval ─────────────────────────────────────────────────────────────

#[test]
fn eval_pca_emits_svg_and_csv() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let voices = dir.path().join("v.json").display().to_string();
    run_ok(&[
        "gen-speakers",
        "--checkpoint",
        &f.ckpt(),
        "--locale",
        "loc0",
        "--count",
        "8",
        "--out",
        &voices,
    ]);
    let out = dir.path().join("reports").display().to_string();
    run_ok(&[
        "eval",
        "--checkpoint",
        &f.ckpt(),
        "--dataset",
        &f.data(),
        "--metric",
        "pca",
        "--new-voices",
        &voices,
        "--out",
        &out,
    ]);
    let svg = std::fs::read_to_string(Path::new(&out).join("pca_scatter.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    let csv = std::fs::read_to_string(Path::new(&out).join("pca_coords.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6 + 8); // header + centroids + new voices

    run_ok(&[
        "eval",
        "--checkpoint",
        &f.ckpt(),
        "--dataset",
        &f.data(),
        "--metric",
        "secs",
        "--limit",
        "3",
        "--out",
        &out,
    ]);
    let secs = std::fs::read_to_string(Path::new(&out).join("secs.csv")).unwrap();
    assert_eq!(secs.lines().count(), 1 + 3);
}

#[test]
fn eval_unknown_metric_rejected() {
    let f = fixture();
    run_expect_code(
        &[
            "eval",
            "--checkpoint",
            &f.ckpt(),
            "--dataset",
            &f.data(),
            "--metric",
            "wer",
            "--out",
            "/tmp/x",
        ],
        2,
    );
}

// ── exit codes on damaged inputs ─────────────────────────────────────

#[test]
fn corrupted_magic_is_a_data_error() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = std::fs::read(f.ckpt()).unwrap();
    bytes[0] = b'Z';
    let bad = dir.path().join("bad.nfvc");
    std::fs::write(&bad, bytes).unwrap();
    run_expect_code(
        &[
            "gen-speakers",
            "--checkpoint",
            &bad.display().to_string(),
            "--locale",
            "loc0",
            "--count",
            "1",
            "--out",
            "/dev/null",
        ],
        3,
    );
}

#[test]
fn nan_parameters_are_a_numeric_failure() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = std::fs::read(f.ckpt()).unwrap();
    let n = bytes.len();
    bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
    let bad = dir.path().join("nan.nfvc");
    std::fs::write(&bad, bytes).unwrap();
    run_expect_code(
        &[
            "gen-speakers",
            "--checkpoint",
            &bad.display().to_string(),
            "--locale",
            "loc0",
            "--count",
            "1",
            "--out",
            "/dev/null",
        ],
        4,
    );
}

#[test]
fn missing_dataset_is_a_data_error() {
    let f = fixture();
    run_expect_code(
        &[
            "vc",
            "--checkpoint",
            &f.ckpt(),
            "--dataset",
            "/nonexistent/place",
            "--utterance-id",
            "x",
            "--target-speaker",
            "spk0",
            "--out",
            "/dev/null",
        ],
        3,
    );
}
