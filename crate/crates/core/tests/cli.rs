use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use agnet::cli::RunConfig;
use agnet::data::{generate_synthetic, read_features, SyntheticConfig};

fn agnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agnet")).args(args).output().expect("binary runs")
}

fn succeed(args: &[&str]) -> String {
    let out = agnet(args);
    assert!(out.status.success(), "agnet {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fail(args: &[&str]) -> String {
    let out = agnet(args);
    assert!(!out.status.success(), "agnet {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn small_dataset(root: &Path, extra: &[&str]) -> PathBuf {
    let ds = root.join("ds");
    let base = ["generate", "--out", &s(&ds), "--n-videos", "8", "--segments", "40", "--seed", "5"];
    succeed(&[&base[..], extra].concat());
    ds
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn generate_writes_one_feature_file_per_video_and_stream() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), &[]);
    for stream in ["main", "att"] {
        let dir = ds.join("features/view0").join(stream);
        let files = files_under(&dir);
        assert_eq!(files.len(), 8);
        for f in files {
            assert_eq!(&fs::read(&f).unwrap()[..4], b"TSF1");
            let seq = read_features(&f).unwrap();
            assert_eq!(seq.steps(), 40);
        }
    }
}

#[test]
fn generation_is_deterministic_per_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (da, db) = (small_dataset(a.path(), &[]), small_dataset(b.path(), &[]));
    let (fa, fb) = (files_under(&da), files_under(&db));
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(&da).unwrap(), y.strip_prefix(&db).unwrap());
        if x.file_name().unwrap() == "run_config.toml" {
            continue;
        }
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{} differs", x.display());
    }

    let c = tempfile::tempdir().unwrap();
    let ds = c.path().join("ds");
    succeed(&["generate", "--out", &s(&ds), "--n-videos", "8", "--segments", "40", "--seed", "6"]);
    assert_ne!(fs::read(ds.join("annotations.tsv")).unwrap(), fs::read(da.join("annotations.tsv")).unwrap());
}

#[test]
fn generate_rejects_zero_videos() {
    let tmp = tempfile::tempdir().unwrap();
    let err = fail(&["generate", "--out", &s(&tmp.path().join("ds")), "--n-videos", "0"]);
    assert!(err.contains("n_videos"), "{err}");
}

#[test]
fn bottleneck_trains_quickly_with_default_recipe() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    succeed(&["generate", "--out", &s(&ds)]);
    let out = tmp.path().join("bn");
    let start = Instant::now();
    succeed(&["train", "--dataset", &s(&ds), "--out", &s(&out), "--model", "bottleneck"]);
    assert!(start.elapsed().as_secs() < 60, "took {:?}", start.elapsed());
    let log = fs::read_to_string(out.join("train_log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 301);

    let RunConfig::Train(run) = RunConfig::load(&out.join("run_config.toml")).unwrap() else {
        panic!("train run expected");
    };
    assert_eq!((run.lr, run.factor, run.patience, run.epochs, run.batch), (0.001, 0.3, 10, 300, 2));
    assert_eq!((run.arch.blocks, run.arch.hidden, run.arch.beta), (5, 512, 0.125));
}

#[test]
fn agnet_without_attention_stream_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), &[]);
    fs::remove_dir_all(ds.join("features/view0/att")).unwrap();
    let out = s(&tmp.path().join("tr"));
    let err = fail(&["train", "--dataset", &s(&ds), "--out", &out, "--epochs", "1", "--hidden", "8"]);
    assert!(err.contains("attention"), "{err}");
    // the temporal baseline needs only the main stream
    succeed(&["train", "--dataset", &s(&ds), "--out", &out, "--model", "sdtcn", "--epochs", "1", "--hidden", "8"]);
}

#[test]
fn fusing_a_checkpoint_with_itself_changes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), &[]);
    let tr = tmp.path().join("tr");
    succeed(&["train", "--dataset", &s(&ds), "--out", &s(&tr), "--epochs", "2", "--hidden", "16", "--blocks", "2"]);
    let ck = s(&tr.join("model.agn"));
    let ev = tmp.path().join("ev");
    succeed(&["eval", "--checkpoint", &ck, "--dataset", &s(&ds), "--out", &s(&ev), "--fuse-with", &ck]);
    let single = fs::read_to_string(ev.join("results.tsv")).unwrap();
    assert_eq!(single, fs::read_to_string(ev.join("results_fused.tsv")).unwrap());
    let header = single.lines().next().unwrap();
    assert_eq!(header, "class_id\tname\tinstances\tframe_ap\tevent_ap@0.3\tevent_ap@0.5\tevent_ap@0.7");
    assert!(single.lines().last().unwrap().starts_with("mAP\tall\t"));
}

#[test]
fn eval_rejects_class_count_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), &[]);
    let tr = tmp.path().join("tr");
    succeed(&["train", "--dataset", &s(&ds), "--out", &s(&tr), "--model", "bottleneck", "--epochs", "1"]);
    let other = tmp.path().join("other");
    succeed(&["generate", "--out", &s(&other), "--n-videos", "8", "--segments", "40", "--classes", "6"]);
    let err = fail(&[
        "eval", "--checkpoint", &s(&tr.join("model.agn")), "--dataset", &s(&other), "--out", &s(&tmp.path().join("ev")),
    ]);
    assert!(err.contains("classes"), "{err}");
}

#[test]
fn inspect_counts_match_the_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), &[]);
    let stdout = succeed(&["inspect", "--dataset", &s(&ds), "--out", &s(&tmp.path().join("ins"))]);
    let expected = generate_synthetic(&SyntheticConfig {
        n_videos: 8,
        segments_per_video: 40,
        seed: 5,
        ..SyntheticConfig::default()
    })
    .unwrap()
    .class_counts;
    let rows: Vec<(usize, usize)> = stdout
        .lines()
        .skip(1)
        .take_while(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), expected.len());
    for w in rows.windows(2) {
        assert!(w[0].1 >= w[1].1, "ranking not sorted: {rows:?}");
    }
    for (class, n) in rows {
        assert_eq!(n, expected[class], "class {class}");
    }
}

#[test]
fn exported_attention_has_one_row_per_block() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), &[]);
    let tr = tmp.path().join("tr");
    succeed(&["train", "--dataset", &s(&ds), "--out", &s(&tr), "--epochs", "1", "--hidden", "16", "--blocks", "3"]);
    let ex = tmp.path().join("ex");
    succeed(&[
        "export-attention", "--checkpoint", &s(&tr.join("model.agn")), "--dataset", &s(&ds), "--out", &s(&ex),
        "--video", "vid0002",
    ]);
    let text = fs::read_to_string(ex.join("attention_vid0002.tsv")).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().map(|l| l.split('\t').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert_eq!(row.len(), 40);
        assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    let sd = tmp.path().join("sd");
    succeed(&["train", "--dataset", &s(&ds), "--out", &s(&sd), "--model", "sdtcn", "--epochs", "1", "--hidden", "8"]);
    fail(&["export-attention", "--checkpoint", &s(&sd.join("model.agn")), "--dataset", &s(&ds), "--out", &s(&ex)]);
}

#[test]
fn empty_dataset_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), &[]);
    let ann = ds.join("annotations.tsv");
    let header = fs::read_to_string(&ann).unwrap().lines().next().unwrap().to_string();
    fs::write(&ann, header + "\n").unwrap();
    let err = fail(&["inspect", "--dataset", &s(&ds), "--out", &s(&tmp.path().join("ins"))]);
    assert!(err.contains("no videos"), "{err}");
}

#[test]
fn replay_reproduces_a_training_run() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), &[]);
    let tr = tmp.path().join("tr");
    succeed(&["train", "--dataset", &s(&ds), "--out", &s(&tr), "--epochs", "2", "--hidden", "8", "--seed", "3"]);
    let again = tmp.path().join("again");
    succeed(&["replay", "--config", &s(&tr.join("run_config.toml")), "--out", &s(&again)]);
    for name in ["model.agn", "train_log.tsv"] {
        assert_eq!(fs::read(tr.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }
}
