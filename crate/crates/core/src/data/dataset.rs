//! Dataset directory layout:
//!
//! ```text
//! classes.txt
//! annotations.tsv
//! manifest.tsv
//! features/view<v>/main/<video>.tsf
//! features/view<v>/att/<video>.tsf
//! ```

use std::path::{Path, PathBuf};

use super::synth::SyntheticDataset;
use super::{
    labels_to_matrix, read_annotations, read_class_list, read_features, read_manifest, render_annotations,
    render_class_list, render_manifest, write_features, AnnotationSet, DatasetManifest, FeatureSequence, Resolution,
};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::tensor::TimeMatrix;
use crate::train::VideoSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Main,
    Attention,
}

impl Stream {
    fn dir_name(self) -> &'static str {
        match self {
            Stream::Main => "main",
            Stream::Attention => "att",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub annotations: Vec<AnnotationSet>,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self> {
        let classes = read_class_list(&root.join("classes.txt"))?;
        let annotations = read_annotations(&root.join("annotations.tsv"), &classes)?;
        let manifest = read_manifest(&root.join("manifest.tsv"))?;
        if annotations.is_empty() {
            return Err(Error::InvalidArgument(format!("dataset {} has no videos", root.display())));
        }
        if let Some(a) = annotations.iter().find(|a| manifest.get(&a.video).is_none()) {
            return Err(Error::InvalidArgument(format!("video {} is missing from the manifest", a.video)));
        }
        Ok(Self {
            root: root.to_path_buf(),
            classes,
            annotations,
            manifest,
        })
    }

    /// Writes every file of a generated dataset under `root`.
    pub fn write_synthetic(root: &Path, data: &SyntheticDataset) -> Result<()> {
        write_atomic(&root.join("classes.txt"), render_class_list(&data.classes).as_bytes())?;
        write_atomic(
            &root.join("annotations.tsv"),
            render_annotations(&data.annotations, &data.classes).as_bytes(),
        )?;
        write_atomic(&root.join("manifest.tsv"), render_manifest(&data.manifest).as_bytes())?;
        for (v, view) in data.views.iter().enumerate() {
            for (stream, seqs) in [(Stream::Main, &view.main), (Stream::Attention, &view.attention)] {
                for seq in seqs {
                    write_features(&feature_path(root, v, stream, &seq.video), seq)?;
                }
            }
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn video_ids(&self) -> Vec<String> {
        self.annotations.iter().map(|a| a.video.clone()).collect()
    }

    pub fn annotation(&self, video: &str) -> Result<&AnnotationSet> {
        self.annotations
            .iter()
            .find(|a| a.video == video)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown video {video:?}")))
    }

    pub fn feature_path(&self, view: usize, stream: Stream, video: &str) -> PathBuf {
        feature_path(&self.root, view, stream, video)
    }

    /// True when every video has a feature file for this view and stream.
    pub fn has_stream(&self, view: usize, stream: Stream) -> bool {
        self.annotations
            .iter()
            .all(|a| self.feature_path(view, stream, &a.video).is_file())
    }

    pub fn features(&self, view: usize, stream: Stream, video: &str) -> Result<FeatureSequence> {
        let seq = read_features(&self.feature_path(view, stream, video))?;
        let ann = self.annotation(video)?;
        let expected = ann.total_frames.div_ceil(seq.segment_len);
        if seq.steps() != expected {
            return Err(Error::shape(
                "Dataset::features",
                format!(
                    "{video}: {} segments of {} frames for {} annotated frames",
                    seq.steps(),
                    seq.segment_len,
                    ann.total_frames
                ),
            ));
        }
        Ok(seq)
    }

    pub fn frame_labels(&self, video: &str) -> Result<TimeMatrix> {
        labels_to_matrix(self.annotation(video)?, self.n_classes(), Resolution::Frames)
    }

    /// Training samples at segment resolution. With `with_attention`, a missing
    /// attention file is an error naming the stream.
    pub fn samples(&self, ids: &[String], view: usize, with_attention: bool) -> Result<Vec<VideoSample>> {
        ids.iter()
            .map(|id| {
                let main = self.features(view, Stream::Main, id)?;
                let attention = if with_attention {
                    let path = self.feature_path(view, Stream::Attention, id);
                    if !path.is_file() {
                        return Err(Error::InvalidArgument(format!(
                            "attention-stream features missing for {id} (expected {})",
                            path.display()
                        )));
                    }
                    Some(self.features(view, Stream::Attention, id)?.to_matrix())
                } else {
                    None
                };
                let labels = labels_to_matrix(self.annotation(id)?, self.n_classes(), Resolution::Segments(main.segment_len))?;
                VideoSample::new(id.clone(), main.to_matrix(), attention, labels)
            })
            .collect()
    }
}

fn feature_path(root: &Path, view: usize, stream: Stream, video: &str) -> PathBuf {
    root.join("features")
        .join(format!("view{view}"))
        .join(stream.dir_name())
        .join(format!("{video}.tsf"))
}
