//! Feature and annotation files, label alignment, class merging, splits,
//! dataset statistics, and a synthetic untrimmed multi-label generator.

mod annotations;
mod dataset;
mod features;
mod labels;
mod merge;
mod split;
mod stats;
mod synth;

pub use annotations::{
    parse_annotations, parse_class_list, parse_manifest, read_annotations, read_class_list, read_manifest,
    render_annotations, render_class_list, render_manifest,
};
pub use dataset::{Dataset, Stream};
pub use features::{decode_features, encode_features, read_features, write_features, FeatureSequence, FEATURE_MAGIC};
pub use labels::{labels_to_matrix, upsample_to_frames, Resolution};
pub use merge::{merge_classes, MergeMap};
pub use split::{split_by_tag, split_cross_subject, split_cross_view, Split};
pub use stats::{dataset_stats, ClassStats, DatasetStats};
pub use synth::{generate_annotations, generate_synthetic, zipf_weights, SyntheticConfig, SyntheticDataset};

/// Frames per feature segment unless configured otherwise.
pub const DEFAULT_SEGMENT_LEN: usize = 16;

/// Largest number of simultaneously active classes the generator produces.
pub const MAX_CONCURRENCY: usize = 4;

/// One labeled activity: class id over frames `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interval {
    pub class: usize,
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// All labeled intervals of one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSet {
    pub video: String,
    pub intervals: Vec<Interval>,
    pub total_frames: usize,
}

impl AnnotationSet {
    pub fn empty(video: impl Into<String>, total_frames: usize) -> Self {
        Self {
            video: video.into(),
            intervals: Vec::new(),
            total_frames,
        }
    }

    /// Number of active labels at every frame.
    pub fn concurrency(&self) -> Vec<usize> {
        let mut diff = vec![0i64; self.total_frames + 1];
        for iv in &self.intervals {
            diff[iv.start] += 1;
            diff[iv.end] -= 1;
        }
        let mut level = 0i64;
        diff[..self.total_frames]
            .iter()
            .map(|d| {
                level += d;
                level as usize
            })
            .collect()
    }
}

/// Per-video recording metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub video: String,
    pub subject: u32,
    pub camera: u32,
    /// Optional predefined split membership, e.g. `train` or `test`.
    pub tag: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn get(&self, video: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.video == video)
    }
}
