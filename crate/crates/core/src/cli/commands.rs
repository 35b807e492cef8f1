use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};

use super::config::{EvalRun, ExportRun, GenerateRun, InspectRun, RunConfig, SplitKind, SplitSpec, TrainRun};
use super::SplitArgs;
use crate::data::{
    dataset_stats, generate_synthetic, read_manifest, split_by_tag, split_cross_subject, split_cross_view,
    upsample_to_frames, Dataset, DatasetManifest, Interval, Split, Stream,
};
use crate::eval::{evaluate, write_results, Evaluation};
use crate::io_util::write_atomic;
use crate::model::{export_attention, fuse_predictions, read_checkpoint, write_checkpoint, AgnetConfig, ModelKind, ModelState};
use crate::tensor::TimeMatrix;
use crate::train::{fit, AdamState, PlateauSchedule, TrainConfig};

const CV_TRAIN_CAMERAS: [u32; 5] = [1, 3, 4, 6, 7];
const CV_TEST_CAMERAS: [u32; 2] = [2, 5];

/// Fills in default groups from the dataset manifest.
pub fn resolve_split(dataset: &Path, args: &SplitArgs) -> anyhow::Result<SplitSpec> {
    let manifest = read_manifest(&dataset.join("manifest.tsv"))?;
    let groups: BTreeSet<u32> = match args.split {
        SplitKind::CrossSubject => manifest.entries.iter().map(|e| e.subject).collect(),
        SplitKind::CrossView => manifest.entries.iter().map(|e| e.camera).collect(),
        SplitKind::File => {
            return Ok(SplitSpec {
                kind: SplitKind::File,
                train: Vec::new(),
                test: Vec::new(),
            })
        }
    };
    let complement = |chosen: &[u32]| groups.iter().copied().filter(|g| !chosen.contains(g)).collect::<Vec<_>>();
    let (train, test) = match (args.train_groups.is_empty(), args.test_groups.is_empty()) {
        (false, false) => (args.train_groups.clone(), args.test_groups.clone()),
        (false, true) => (args.train_groups.clone(), complement(&args.train_groups)),
        (true, false) => (complement(&args.test_groups), args.test_groups.clone()),
        (true, true) => match args.split {
            SplitKind::CrossView => (CV_TRAIN_CAMERAS.to_vec(), CV_TEST_CAMERAS.to_vec()),
            _ => {
                let all: Vec<u32> = groups.iter().copied().collect();
                let k = ((all.len() as f64 * 11.0 / 18.0).round() as usize).clamp(1, all.len().saturating_sub(1).max(1));
                (all[..k].to_vec(), all[k..].to_vec())
            }
        },
    };
    Ok(SplitSpec {
        kind: args.split,
        train,
        test,
    })
}

fn apply_split(manifest: &DatasetManifest, spec: &SplitSpec) -> crate::Result<Split> {
    match spec.kind {
        SplitKind::CrossSubject => split_cross_subject(manifest, &spec.train, &spec.test),
        SplitKind::CrossView => split_cross_view(manifest, &spec.train, &spec.test),
        SplitKind::File => split_by_tag(manifest, "train", "test"),
    }
}

/// Frame-resolution probabilities for each video, replicated from segment outputs.
pub fn predict_videos(model: &ModelState, ds: &Dataset, ids: &[String], view: usize) -> anyhow::Result<Vec<TimeMatrix>> {
    let needs_att = model.kind().uses_attention();
    if needs_att && !ds.has_stream(view, Stream::Attention) {
        bail!("attention-stream features for view {view} are missing from {}", ds.root.display());
    }
    ids.iter()
        .map(|id| {
            let main = ds.features(view, Stream::Main, id)?;
            let att = if needs_att {
                Some(ds.features(view, Stream::Attention, id)?.to_matrix())
            } else {
                None
            };
            let probs = model.predict(&main.to_matrix(), att.as_ref())?;
            Ok(upsample_to_frames(&probs, main.segment_len, ds.annotation(id)?.total_frames)?)
        })
        .collect()
}

pub fn execute(run: &RunConfig) -> anyhow::Result<()> {
    if let RunConfig::Generate(r) = run {
        r.synthetic.validate()?;
    }
    std::fs::create_dir_all(run.out()).with_context(|| format!("creating {}", run.out().display()))?;
    run.save()?;
    match run {
        RunConfig::Generate(r) => generate(r),
        RunConfig::Train(r) => train(r),
        RunConfig::Eval(r) => eval(r),
        RunConfig::Inspect(r) => inspect(r),
        RunConfig::ExportAttention(r) => export(r),
    }
}

fn generate(r: &GenerateRun) -> anyhow::Result<()> {
    let data = generate_synthetic(&r.synthetic)?;
    Dataset::write_synthetic(&r.out, &data)?;
    let stats = dataset_stats(&data.annotations, &data.manifest, data.classes.len())?;
    write_atomic(&r.out.join("stats.tsv"), stats.to_tsv(&data.classes).as_bytes())?;
    println!(
        "generated {} videos, {} classes, {:.1} instances per video, max concurrency {}",
        stats.videos,
        data.classes.len(),
        stats.instances_per_video,
        stats.max_concurrency()
    );
    Ok(())
}

fn train(r: &TrainRun) -> anyhow::Result<()> {
    let ds = Dataset::load(&r.dataset)?;
    let split = apply_split(&ds.manifest, &r.split)?;
    let samples = ds.samples(&split.train, r.view, r.model.uses_attention())?;
    let first = &samples[0];
    let mut cfg = AgnetConfig::new(
        r.model,
        first.main.channels(),
        first.attention.as_ref().map_or(0, |a| a.channels()),
        ds.n_classes(),
    );
    cfg.n_blocks = r.arch.blocks;
    cfg.hidden = r.arch.hidden;
    cfg.beta = r.arch.beta;
    cfg.kernel_size = r.arch.kernel_size;
    cfg.dropout_p = r.arch.dropout;
    let model = ModelState::init(cfg, r.seed)?;
    let mut adam = AdamState::new(r.lr);
    let mut schedule = PlateauSchedule::with(r.lr, r.factor, r.patience)?;
    schedule.min_lr = r.min_lr;
    let config = TrainConfig {
        epochs: r.epochs,
        batch_size: r.batch,
        seed: r.seed,
    };
    let outcome = fit(model, &samples, None, &config, &mut adam, &mut schedule)?;
    write_checkpoint(&r.out.join("model.agn"), &outcome.model)?;
    let mut log = String::from("epoch\tlr\ttrain_loss\theldout_loss\n");
    for e in &outcome.log {
        let _ = writeln!(log, "{e}");
    }
    write_atomic(&r.out.join("train_log.tsv"), log.as_bytes())?;
    let last = outcome.log.last().expect("at least one epoch");
    println!(
        "trained {} on {} videos for {} epochs: final loss {:.6}, lr {}",
        r.model,
        samples.len(),
        outcome.log.len(),
        last.train_loss,
        last.lr
    );
    Ok(())
}

fn load_compatible(path: &Path, ds: &Dataset) -> anyhow::Result<ModelState> {
    let model = read_checkpoint(path)?;
    if model.config().n_classes != ds.n_classes() {
        bail!(
            "checkpoint {} predicts {} classes but the dataset has {}",
            path.display(),
            model.config().n_classes,
            ds.n_classes()
        );
    }
    Ok(model)
}

fn eval(r: &EvalRun) -> anyhow::Result<()> {
    let ds = Dataset::load(&r.dataset)?;
    let model = load_compatible(&r.checkpoint, &ds)?;
    let ids = apply_split(&ds.manifest, &r.split)?.test;
    let labels: Vec<TimeMatrix> = ids.iter().map(|id| ds.frame_labels(id)).collect::<crate::Result<_>>()?;
    let gt: Vec<Vec<Interval>> = ids
        .iter()
        .map(|id| Ok(ds.annotation(id)?.intervals.clone()))
        .collect::<crate::Result<_>>()?;
    let mut counts = vec![0usize; ds.n_classes()];
    gt.iter().flatten().for_each(|iv| counts[iv.class] += 1);

    let report = |name: &str, probs: &[TimeMatrix]| -> anyhow::Result<Evaluation> {
        let result = evaluate(probs, &labels, &gt, r.tau, &r.iou)?;
        write_results(&r.out.join(name), &result, &ds.classes, &counts)?;
        let events: Vec<String> = result.events.iter().map(|(t, e)| format!("event@{t} {:.4}", e.mean)).collect();
        println!("{name}: frame {:.4} {}", result.frame.mean, events.join(" "));
        Ok(result)
    };
    let probs = predict_videos(&model, &ds, &ids, r.view)?;
    report("results.tsv", &probs)?;
    if let Some(second) = &r.fuse_with {
        let other = load_compatible(second, &ds)?;
        let probs2 = predict_videos(&other, &ds, &ids, r.fuse_view)?;
        report("results_second.tsv", &probs2)?;
        let fused: Vec<TimeMatrix> = probs
            .iter()
            .zip(&probs2)
            .map(|(a, b)| fuse_predictions(a, b))
            .collect::<crate::Result<_>>()?;
        report("results_fused.tsv", &fused)?;
    }
    Ok(())
}

fn inspect(r: &InspectRun) -> anyhow::Result<()> {
    let ds = Dataset::load(&r.dataset)?;
    let stats = dataset_stats(&ds.annotations, &ds.manifest, ds.n_classes())?;
    let table = stats.to_tsv(&ds.classes);
    write_atomic(&r.out.join("stats.tsv"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn export(r: &ExportRun) -> anyhow::Result<()> {
    let ds = Dataset::load(&r.dataset)?;
    let model = load_compatible(&r.checkpoint, &ds)?;
    if model.kind() != ModelKind::Agnet {
        bail!("checkpoint {} is a {} model and has no attention maps", r.checkpoint.display(), model.kind());
    }
    let ids = if r.videos.is_empty() { ds.video_ids() } else { r.videos.clone() };
    for id in &ids {
        let main = ds.features(r.view, Stream::Main, id)?.to_matrix();
        let att = ds.features(r.view, Stream::Attention, id)?.to_matrix();
        let maps = export_attention(&model.forward_agnet(&main, &att)?)?;
        let mut text = String::new();
        for row in &maps {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            text.push_str(&cells.join("\t"));
            text.push('\n');
        }
        write_atomic(&r.out.join(format!("attention_{id}.tsv")), text.as_bytes())?;
    }
    println!("exported attention for {} videos", ids.len());
    Ok(())
}
