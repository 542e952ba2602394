use std::path::Path;
use std::process::{Command, Output};

use talkplay_core::datasynth::read_conversations;
use talkplay_core::Modality;

fn talkplay(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_talkplay"))
        .current_dir(dir)
        .args(["--log", "warn"])
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "talkplay {}\nstdout:\n{}\nstderr:\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn full_pipeline_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let gen = talkplay(
        d,
        &["fixture", "generate", "--tracks", "64", "--genres", "4", "--playlists", "40", "--dim", "8", "--seed", "3", "--out", "fx"],
    );
    assert!(stdout(&gen).contains("64 tracks"));
    talkplay(d, &["catalog", "validate", "fx"]);
    talkplay(d, &["catalog", "split", "fx", "--test-size", "4", "--seed", "1", "--out", "split.json"]);
    talkplay(
        d,
        &["item2vec", "train", "fx", "--split", "split.json", "--dim", "8", "--epochs", "2", "--out", "playlist.tpemb"],
    );

    let mut inputs = vec![];
    for m in Modality::ALL {
        let emb = if m == Modality::Playlist { "playlist.tpemb".to_string() } else { format!("fx/{}.tpemb", m.name()) };
        let cbk = format!("{}.cbk", m.name());
        talkplay(d, &["quantize", "fit", &emb, "--k", "4", "--seed", "2", "--out", &cbk]);
        inputs.push(cbk);
        inputs.push(emb);
    }
    talkplay(d, &["quantize", "assign", "audio.cbk", "fx/audio.tpemb", "--out", "audio.tsv"]);
    let assigned = std::fs::read_to_string(d.join("audio.tsv")).unwrap();
    assert_eq!(assigned.lines().count(), 64);

    let mut args = vec!["tokenize", "items"];
    args.extend(inputs.iter().map(String::as_str));
    args.extend(["--out", "items.tok"]);
    talkplay(d, &args);

    talkplay(
        d,
        &["synth", "rule", "--catalog", "fx", "--split", "split.json", "--subset", "train", "--seed", "4", "--out", "train.jsonl"],
    );
    talkplay(
        d,
        &["synth", "rule", "--catalog", "fx", "--split", "split.json", "--subset", "test", "--seed", "5", "--out", "test.jsonl"],
    );
    assert_eq!(read_conversations(&d.join("test.jsonl")).unwrap().len(), 4);
    assert_eq!(read_conversations(&d.join("train.jsonl")).unwrap().len(), 36);

    talkplay(d, &["tokenize", "convos", "--items", "items.tok", "--convos", "train.jsonl", "--out", "train.tokens"]);
    std::fs::write(
        d.join("model.toml"),
        "[model]\nd_model = 16\nn_layers = 1\nn_heads = 2\ncontext_len = 128\nseed = 1\n\n\
         [train]\nlearning_rate = 3e-3\nbatch_size = 8\nepochs = 1\nseed = 2\n",
    )
    .unwrap();
    let trained = talkplay(d, &["model", "train", "--data", "train.tokens", "--config", "model.toml", "--out", "run"]);
    assert!(stdout(&trained).starts_with("loss "));
    assert!(d.join("run/model.ckpt").exists());

    // resuming to two epochs continues the same report
    let toml = std::fs::read_to_string(d.join("model.toml")).unwrap().replace("epochs = 1", "epochs = 2");
    std::fs::write(d.join("model.toml"), toml).unwrap();
    talkplay(d, &["model", "train", "--data", "train.tokens", "--config", "model.toml", "--out", "run", "--resume"]);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("run/train_report.json")).unwrap()).unwrap();
    assert_eq!(report["epoch_losses"].as_array().unwrap().len(), 2);

    std::fs::write(d.join("prompt.txt"), "something upbeat please").unwrap();
    let g = talkplay(d, &["model", "generate", "--ckpt", "run", "--prompt-file", "prompt.txt", "--seed", "9"]);
    assert!(stdout(&g).starts_with("<|playlist-"));

    talkplay(d, &["recsys", "index", "--items", "items.tok", "--catalog", "fx", "--out", "index.bin"]);
    let q = talkplay(
        d,
        &[
            "recsys",
            "query",
            "--index",
            "index.bin",
            "--tokens",
            "<|playlist-0|><|semantic-1|><|metadata-2|><|lyrics-3|><|audio-0|>",
            "--top",
            "5",
        ],
    );
    let lines: Vec<String> = stdout(&q).lines().map(str::to_string).collect();
    assert!(!lines.is_empty() && lines.len() <= 5);
    assert!(lines[0].starts_with("1\t"));

    let e = talkplay(
        d,
        &[
            "eval", "run", "--ckpt", "run", "--index", "index.bin", "--convos", "test.jsonl", "--seed", "1", "--ablation",
            "--out", "eval.json",
        ],
    );
    assert!(stdout(&e).contains("Quadratic (coarse-to-fine)"));
    let eval: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["ablation"].as_array().unwrap().len(), 5);
    assert_eq!(eval["leave_one_out"]["rows"].as_array().unwrap().len(), 5);
    talkplay(d, &["eval", "bm25", "--catalog", "fx", "--convos", "test.jsonl", "--out", "bm25.json"]);
    talkplay(
        d,
        &["eval", "plot", "--report", "model=eval.json", "--report", "bm25=bm25.json", "--out", "mrr.svg"],
    );
    let svg = std::fs::read_to_string(d.join("mrr.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("bm25"));
}

#[test]
fn llm_synthesis_needs_its_key() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    talkplay(d, &["fixture", "generate", "--tracks", "16", "--genres", "2", "--playlists", "4", "--out", "fx"]);
    std::fs::write(
        d.join("llm.toml"),
        "endpoint = \"http://127.0.0.1:9/v1/chat/completions\"\nmodel = \"m\"\nkey_env = \"TALKPLAY_TEST_ABSENT_KEY\"\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_talkplay"))
        .current_dir(d)
        .env_remove("TALKPLAY_TEST_ABSENT_KEY")
        .args(["synth", "llm", "--provider-config", "llm.toml", "--catalog", "fx", "--out", "c.jsonl"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("TALKPLAY_TEST_ABSENT_KEY"));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["recsys", "query", "--index", "missing.bin", "--tokens", "x"],
        vec!["serve", "--config", "missing.toml"],
        vec!["catalog", "validate", "nowhere"],
    ] {
        let out = Command::new(env!("CARGO_BIN_EXE_talkplay")).current_dir(tmp.path()).args(&args).output().unwrap();
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty());
    }
}
