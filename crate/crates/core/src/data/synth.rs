//! Synthetic untrimmed multi-label videos.
//!
//! Class ids double as frequency ranks: class `c` is drawn with probability
//! proportional to `(c + 1)^-s`. Interval boundaries fall on segment boundaries,
//! so segment labels are exact. Features are per-segment: a sum of fixed unit
//! class signatures over the active classes, a per-subject offset orthogonal to
//! the signatures (main stream only), and white Gaussian noise whose per-channel
//! variance is `1 / (snr * channels)`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    labels_to_matrix, AnnotationSet, DatasetManifest, FeatureSequence, Interval, ManifestEntry, Resolution,
    MAX_CONCURRENCY,
};
use crate::error::{Error, Result};
use crate::tensor::TimeMatrix;

const PLACEMENT_ATTEMPTS: usize = 50;
const STREAM_DURATIONS: u64 = 0;
const STREAM_ANNOTATIONS: u64 = 1;
const STREAM_SIGNATURES: u64 = 2;
const STREAM_VIEW_BASE: u64 = 16;

/// A long activity made of shorter elementary ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composite {
    pub class: usize,
    pub parts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_classes: usize,
    /// Zipf exponent of the class frequency law.
    pub zipf_s: f64,
    pub composites: Vec<Composite>,
    /// Median duration, in frames, of the shortest and longest elementary class.
    /// Medians in between are log-spaced and assigned to classes in seeded order.
    pub min_duration: f64,
    pub max_duration: f64,
    /// Standard deviation of log-duration within a class.
    pub duration_spread: f64,
    /// Composite median duration as a multiple of `max_duration`.
    pub composite_scale: f64,
    /// Mean number of labeled intervals per video (Poisson).
    pub instances_per_video: f64,
    pub n_videos: usize,
    pub segments_per_video: usize,
    pub segment_len: usize,
    pub input_channels: usize,
    pub attention_channels: usize,
    pub snr: f64,
    pub attention_snr: f64,
    /// Norm of each subject's main-stream offset.
    pub subject_scale: f64,
    pub n_subjects: usize,
    pub n_cameras: usize,
    /// Synchronized recordings per video, each with independent noise.
    pub n_views: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            zipf_s: 1.0,
            composites: Vec::new(),
            min_duration: 48.0,
            max_duration: 480.0,
            duration_spread: 0.4,
            composite_scale: 2.0,
            instances_per_video: 12.0,
            n_videos: 24,
            segments_per_video: 200,
            segment_len: super::DEFAULT_SEGMENT_LEN,
            input_channels: 32,
            attention_channels: 16,
            snr: 4.0,
            attention_snr: 4.0,
            subject_scale: 0.5,
            n_subjects: 18,
            n_cameras: 7,
            n_views: 1,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// Long, dense videos with 51 classes, 5 of them composites over 16
    /// elementary constituents, about 76 intervals per video.
    pub fn tsu_scale() -> Self {
        let groups: [&[usize]; 5] = [&[10, 11, 12, 13], &[14, 15, 16, 17], &[18, 19, 20], &[21, 22, 23], &[24, 25]];
        Self {
            n_classes: 51,
            composites: groups
                .iter()
                .enumerate()
                .map(|(i, parts)| Composite {
                    class: 5 + i,
                    parts: parts.to_vec(),
                })
                .collect(),
            min_duration: 32.0,
            max_duration: 1600.0,
            duration_spread: 0.5,
            instances_per_video: 76.0,
            n_videos: 18,
            segments_per_video: 1500,
            input_channels: 64,
            attention_channels: 64,
            ..Self::default()
        }
    }

    pub fn frames_per_video(&self) -> usize {
        self.segments_per_video * self.segment_len
    }

    pub fn composite(&self, class: usize) -> Option<&Composite> {
        self.composites.iter().find(|c| c.class == class)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_classes == 0 || self.n_videos == 0 || self.segments_per_video == 0 || self.segment_len == 0 {
            return fail("n_classes, n_videos, segments_per_video and segment_len must be >= 1".into());
        }
        if self.input_channels == 0 || self.attention_channels == 0 {
            return fail("feature widths must be >= 1".into());
        }
        if self.n_subjects == 0 || self.n_cameras == 0 || self.n_views == 0 {
            return fail("n_subjects, n_cameras and n_views must be >= 1".into());
        }
        if !(self.min_duration > 0.0 && self.min_duration <= self.max_duration && self.max_duration.is_finite()) {
            return fail(format!(
                "durations must satisfy 0 < min <= max, got {} and {}",
                self.min_duration, self.max_duration
            ));
        }
        if !(self.duration_spread >= 0.0 && self.duration_spread.is_finite() && self.composite_scale > 0.0) {
            return fail("duration_spread must be >= 0 and composite_scale > 0".into());
        }
        if !(self.zipf_s >= 0.0 && self.zipf_s.is_finite()) {
            return fail(format!("zipf_s must be finite and >= 0, got {}", self.zipf_s));
        }
        if !(self.instances_per_video >= 0.0 && self.instances_per_video.is_finite()) {
            return fail("instances_per_video must be finite and >= 0".into());
        }
        if !(self.snr > 0.0 && self.attention_snr > 0.0) || self.subject_scale.is_nan() || self.subject_scale < 0.0 {
            return fail("snr values must be > 0 and subject_scale >= 0".into());
        }
        for (i, comp) in self.composites.iter().enumerate() {
            if comp.class >= self.n_classes || self.composites[..i].iter().any(|c| c.class == comp.class) {
                return fail(format!("composite class {} is out of range or repeated", comp.class));
            }
            if comp.parts.len() < 2 {
                return fail(format!("composite {} needs at least 2 constituents", comp.class));
            }
            for (j, &p) in comp.parts.iter().enumerate() {
                if p >= self.n_classes || self.composite(p).is_some() || comp.parts[..j].contains(&p) {
                    return fail(format!(
                        "constituent {p} of composite {} must be a distinct elementary class",
                        comp.class
                    ));
                }
            }
        }
        let capacity = (MAX_CONCURRENCY * self.frames_per_video()) as f64;
        let mass = self.expected_duration_mass();
        if mass > capacity {
            return fail(format!(
                "infeasible packing: expected {mass:.0} labeled frames per video exceed {capacity} ({MAX_CONCURRENCY} tracks)"
            ));
        }
        Ok(())
    }

    /// Expected labeled frames per video from the class mix and duration laws.
    fn expected_duration_mass(&self) -> f64 {
        let w = zipf_weights(self.n_classes, self.zipf_s);
        let mean_factor = (self.duration_spread.powi(2) / 2.0).exp();
        let per_instance: f64 = (0..self.n_classes)
            .map(|c| {
                let median = match self.composite(c) {
                    Some(_) => self.composite_scale * self.max_duration,
                    None => (self.min_duration * self.max_duration).sqrt(),
                };
                w[c] * (median * mean_factor).min(self.frames_per_video() as f64)
            })
            .sum();
        self.instances_per_video * per_instance
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.n_classes)
            .map(|c| match self.composite(c) {
                Some(_) => format!("composite{c:02}"),
                None => format!("action{c:02}"),
            })
            .collect()
    }

    /// Median duration in frames per class.
    pub fn class_medians(&self) -> Vec<f64> {
        let mut rng = stream(self.seed, STREAM_DURATIONS);
        let elementary: Vec<usize> = (0..self.n_classes).filter(|&c| self.composite(c).is_none()).collect();
        let n = elementary.len();
        let mut ladder: Vec<f64> = (0..n)
            .map(|i| {
                let f = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
                self.min_duration * (self.max_duration / self.min_duration).powf(f)
            })
            .collect();
        ladder.shuffle(&mut rng);
        let mut medians = vec![self.composite_scale * self.max_duration; self.n_classes];
        for (c, m) in elementary.into_iter().zip(ladder) {
            medians[c] = m;
        }
        medians
    }
}

/// Normalised `rank^-s` for ranks `1..=n`.
pub fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-s)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Segment-resolution bookkeeping for one video under construction.
struct Canvas {
    occupancy: Vec<usize>,
    by_class: Vec<Vec<(usize, usize)>>,
    placed: Vec<Interval>,
}

impl Canvas {
    fn new(segments: usize, n_classes: usize) -> Self {
        Self {
            occupancy: vec![0; segments],
            by_class: vec![Vec::new(); n_classes],
            placed: Vec::new(),
        }
    }

    /// Room for `extra` more labels over `[s, e)` and no same-class overlap or contact.
    fn fits(&self, class: usize, s: usize, e: usize, extra: usize) -> bool {
        self.occupancy[s..e].iter().all(|&o| o + extra <= MAX_CONCURRENCY)
            && self.by_class[class].iter().all(|&(a, b)| e < a || b < s)
    }

    fn put(&mut self, class: usize, s: usize, e: usize) {
        self.occupancy[s..e].iter_mut().for_each(|o| *o += 1);
        self.by_class[class].push((s, e));
        self.placed.push(Interval { class, start: s, end: e });
    }
}

fn sample_segments<R: Rng>(rng: &mut R, median: f64, spread: f64, segment_len: usize, max: usize, min: usize) -> usize {
    let frames = if spread > 0.0 {
        LogNormal::new(median.ln(), spread).expect("validated parameters").sample(rng)
    } else {
        median
    };
    ((frames / segment_len as f64).round() as usize).clamp(min.min(max), max)
}

fn place_elementary<R: Rng>(canvas: &mut Canvas, rng: &mut R, class: usize, len: usize) -> bool {
    let segments = canvas.occupancy.len();
    for _ in 0..PLACEMENT_ATTEMPTS {
        let s = rng.random_range(0..=segments - len);
        if canvas.fits(class, s, s + len, 1) {
            canvas.put(class, s, s + len);
            return true;
        }
    }
    false
}

/// Places the composite span and 2 to 4 of its constituents, in random order,
/// in consecutive sub-slots of the span. Either all of it is placed or nothing.
fn place_composite<R: Rng>(canvas: &mut Canvas, rng: &mut R, comp: &Composite, len: usize) -> bool {
    let segments = canvas.occupancy.len();
    let max_parts = comp.parts.len().min(4).min(len);
    if max_parts < 2 {
        return false;
    }
    for _ in 0..PLACEMENT_ATTEMPTS {
        let k = rng.random_range(2..=max_parts);
        let mut parts = comp.parts.clone();
        parts.shuffle(rng);
        parts.truncate(k);
        let s = rng.random_range(0..=segments - len);
        if !canvas.fits(comp.class, s, s + len, 1) {
            continue;
        }
        let mut pieces = Vec::with_capacity(k);
        for (j, &p) in parts.iter().enumerate() {
            let (lo, hi) = (s + j * len / k, s + (j + 1) * len / k);
            let slot = hi - lo;
            let plen = rng.random_range(slot.div_ceil(2).max(1)..=slot);
            let ps = lo + rng.random_range(0..=slot - plen);
            pieces.push((p, ps, ps + plen));
        }
        if pieces.iter().all(|&(p, a, b)| canvas.fits(p, a, b, 2)) {
            canvas.put(comp.class, s, s + len);
            for (p, a, b) in pieces {
                canvas.put(p, a, b);
            }
            return true;
        }
    }
    false
}

/// Annotation sets only; deterministic in the config.
pub fn generate_annotations(config: &SyntheticConfig) -> Result<Vec<AnnotationSet>> {
    config.validate()?;
    let medians = config.class_medians();
    let zipf = WeightedIndex::new(zipf_weights(config.n_classes, config.zipf_s))
        .map_err(|e| Error::Config(format!("class weights: {e}")))?;
    let mut rng = stream(config.seed, STREAM_ANNOTATIONS);
    let segments = config.segments_per_video;
    let seg_len = config.segment_len;
    let mut sets = Vec::with_capacity(config.n_videos);
    for i in 0..config.n_videos {
        let target = if config.instances_per_video > 0.0 {
            Poisson::new(config.instances_per_video)
                .expect("validated rate")
                .sample(&mut rng) as usize
        } else {
            0
        };
        let mut canvas = Canvas::new(segments, config.n_classes);
        let mut failures = 0;
        while canvas.placed.len() < target && failures <= 4 * target + PLACEMENT_ATTEMPTS {
            let class = zipf.sample(&mut rng);
            let ok = match config.composite(class) {
                Some(comp) => {
                    let len = sample_segments(&mut rng, medians[class], config.duration_spread, seg_len, segments, 4);
                    place_composite(&mut canvas, &mut rng, comp, len)
                }
                None => {
                    let len = sample_segments(&mut rng, medians[class], config.duration_spread, seg_len, segments, 1);
                    place_elementary(&mut canvas, &mut rng, class, len)
                }
            };
            if !ok {
                failures += 1;
            }
        }
        let mut intervals: Vec<Interval> = canvas
            .placed
            .into_iter()
            .map(|iv| Interval {
                class: iv.class,
                start: iv.start * seg_len,
                end: iv.end * seg_len,
            })
            .collect();
        intervals.sort_by_key(|iv| (iv.start, iv.class));
        sets.push(AnnotationSet {
            video: video_id(i),
            intervals,
            total_frames: config.frames_per_video(),
        });
    }
    Ok(sets)
}

fn video_id(i: usize) -> String {
    format!("vid{i:04}")
}

/// Main-stream and attention-stream features of every video for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewFeatures {
    pub main: Vec<FeatureSequence>,
    pub attention: Vec<FeatureSequence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub classes: Vec<String>,
    pub annotations: Vec<AnnotationSet>,
    pub manifest: DatasetManifest,
    pub views: Vec<ViewFeatures>,
    /// Generated intervals per class.
    pub class_counts: Vec<usize>,
}

/// `n` unit vectors in `dim` dimensions; the first `min(n, dim)` are orthonormal.
fn signatures<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    while out.len() < n {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if out.len() < dim {
            for u in &out {
                let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(x, a)| *x -= d * a);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            out.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    out
}

/// Random vector of norm `scale` orthogonal to `basis` (zero if no room is left).
fn orthogonal_offset<R: Rng>(rng: &mut R, basis: &[Vec<f64>], dim: usize, scale: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    for _ in 0..2 {
        for u in basis.iter().take(dim) {
            let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(x, a)| *x -= d * a);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if basis.len() >= dim || norm < 1e-9 {
        return vec![0.0; dim];
    }
    v.into_iter().map(|x| scale * x / norm).collect()
}

fn render<R: Rng>(labels: &TimeMatrix, sigs: &[Vec<f64>], offset: Option<&[f64]>, snr: f64, rng: &mut R) -> TimeMatrix {
    let dim = sigs[0].len();
    let sigma = (1.0 / (snr * dim as f64)).sqrt();
    let mut m = TimeMatrix::zeros(labels.steps(), dim);
    for t in 0..labels.steps() {
        let row = m.row_mut(t);
        for (c, sig) in sigs.iter().enumerate() {
            if labels.get(t, c) > 0.0 {
                row.iter_mut().zip(sig).for_each(|(x, s)| *x += s);
            }
        }
        if let Some(off) = offset {
            row.iter_mut().zip(off).for_each(|(x, o)| *x += o);
        }
        for x in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x += sigma * z;
        }
    }
    m
}

/// Annotations, manifest, and features for every view. Deterministic in the config.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    let annotations = generate_annotations(config)?;
    let mut class_counts = vec![0; config.n_classes];
    for a in &annotations {
        for iv in &a.intervals {
            class_counts[iv.class] += 1;
        }
    }
    let manifest = DatasetManifest {
        entries: (0..config.n_videos)
            .map(|i| ManifestEntry {
                video: video_id(i),
                subject: 1 + (i % config.n_subjects) as u32,
                camera: 1 + (i % config.n_cameras) as u32,
                tag: Some(if i % 4 == 3 { "test" } else { "train" }.to_string()),
            })
            .collect(),
    };

    let mut rng = stream(config.seed, STREAM_SIGNATURES);
    let main_sigs = signatures(&mut rng, config.n_classes, config.input_channels);
    let att_sigs = signatures(&mut rng, config.n_classes, config.attention_channels);
    let offsets: Vec<Vec<f64>> = (0..config.n_subjects)
        .map(|_| orthogonal_offset(&mut rng, &main_sigs, config.input_channels, config.subject_scale))
        .collect();

    let labels: Vec<TimeMatrix> = annotations
        .iter()
        .map(|a| labels_to_matrix(a, config.n_classes, Resolution::Segments(config.segment_len)))
        .collect::<Result<_>>()?;
    let mut views = Vec::with_capacity(config.n_views);
    for v in 0..config.n_views {
        let mut rng = stream(config.seed, STREAM_VIEW_BASE + v as u64);
        let mut view = ViewFeatures {
            main: Vec::with_capacity(config.n_videos),
            attention: Vec::with_capacity(config.n_videos),
        };
        for (i, (ann, lab)) in annotations.iter().zip(&labels).enumerate() {
            let offset = &offsets[i % config.n_subjects];
            let main = render(lab, &main_sigs, Some(offset), config.snr, &mut rng);
            let att = render(lab, &att_sigs, None, config.attention_snr, &mut rng);
            view.main.push(FeatureSequence::from_matrix(&ann.video, &main, config.segment_len)?);
            view.attention.push(FeatureSequence::from_matrix(&ann.video, &att, config.segment_len)?);
        }
        views.push(view);
    }
    Ok(SyntheticDataset {
        classes: config.class_names(),
        annotations,
        manifest,
        views,
        class_counts,
    })
}
