use super::AnnotationSet;
use crate::error::{Error, Result};
use crate::tensor::TimeMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Frames,
    /// Segments of the given number of frames. A segment is positive for a class
    /// when at least half of its frames carry that class; the final segment may be
    /// shorter and is judged on its own length.
    Segments(usize),
}

/// Binary multi-label target with one column per class.
pub fn labels_to_matrix(ann: &AnnotationSet, n_classes: usize, resolution: Resolution) -> Result<TimeMatrix> {
    if let Some(iv) = ann.intervals.iter().find(|iv| iv.class >= n_classes) {
        return Err(Error::InvalidArgument(format!(
            "class id {} out of range for {n_classes} classes",
            iv.class
        )));
    }
    let total = ann.total_frames;
    match resolution {
        Resolution::Frames => {
            let mut m = TimeMatrix::zeros(total, n_classes);
            for iv in &ann.intervals {
                for t in iv.start..iv.end.min(total) {
                    m.set(t, iv.class, 1.0);
                }
            }
            Ok(m)
        }
        Resolution::Segments(len) => {
            if len == 0 {
                return Err(Error::InvalidArgument("segment length must be >= 1".into()));
            }
            let n_seg = total.div_ceil(len);
            let mut covered = vec![0usize; n_seg * n_classes];
            let frames = labels_to_matrix(ann, n_classes, Resolution::Frames)?;
            for t in 0..total {
                for (c, &v) in frames.row(t).iter().enumerate() {
                    if v > 0.0 {
                        covered[(t / len) * n_classes + c] += 1;
                    }
                }
            }
            let mut m = TimeMatrix::zeros(n_seg, n_classes);
            for s in 0..n_seg {
                let seg_frames = len.min(total - s * len);
                for c in 0..n_classes {
                    if 2 * covered[s * n_classes + c] >= seg_frames {
                        m.set(s, c, 1.0);
                    }
                }
            }
            Ok(m)
        }
    }
}

/// Replicates each segment row over its frames, truncated to `total_frames`.
pub fn upsample_to_frames(segment_probs: &TimeMatrix, segment_len: usize, total_frames: usize) -> Result<TimeMatrix> {
    if segment_len == 0 || segment_probs.steps() * segment_len < total_frames {
        return Err(Error::InvalidArgument(format!(
            "{} segments of {segment_len} frames cannot cover {total_frames} frames",
            segment_probs.steps()
        )));
    }
    let c = segment_probs.channels();
    let mut data = Vec::with_capacity(total_frames * c);
    for t in 0..total_frames {
        data.extend_from_slice(segment_probs.row(t / segment_len));
    }
    TimeMatrix::new(total_frames, c, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Interval;

    fn ann(intervals: &[(usize, usize, usize)], total: usize) -> AnnotationSet {
        AnnotationSet {
            video: "v".into(),
            intervals: intervals
                .iter()
                .map(|&(class, start, end)| Interval { class, start, end })
                .collect(),
            total_frames: total,
        }
    }

    #[test]
    fn frame_labels() {
        let m = labels_to_matrix(&ann(&[(2, 3, 5)], 6), 3, Resolution::Frames).unwrap();
        for t in 0..6 {
            for c in 0..3 {
                let want = if c == 2 && (t == 3 || t == 4) { 1.0 } else { 0.0 };
                assert_eq!(m.get(t, c), want);
            }
        }
    }

    #[test]
    fn half_coverage_boundary() {
        let seven = labels_to_matrix(&ann(&[(0, 0, 7)], 32), 1, Resolution::Segments(16)).unwrap();
        assert_eq!(seven.channel(0), vec![0.0, 0.0]);
        let eight = labels_to_matrix(&ann(&[(0, 8, 24)], 32), 1, Resolution::Segments(16)).unwrap();
        assert_eq!(eight.channel(0), vec![1.0, 1.0]);
    }

    #[test]
    fn partial_last_segment_judged_on_its_length() {
        let m = labels_to_matrix(&ann(&[(0, 16, 18)], 20), 1, Resolution::Segments(16)).unwrap();
        assert_eq!(m.channel(0), vec![0.0, 1.0]);
    }

    #[test]
    fn empty_annotation_is_all_zero() {
        let m = labels_to_matrix(&ann(&[], 40), 4, Resolution::Segments(16)).unwrap();
        assert_eq!(m.shape(), (3, 4));
        assert!(m.as_slice().iter().all(|&v| v == 0.0));
        assert!(labels_to_matrix(&ann(&[(4, 0, 1)], 4), 4, Resolution::Frames).is_err());
    }

    #[test]
    fn upsampling() {
        let seg = TimeMatrix::from_rows(&[[0.1, 0.2], [0.3, 0.4]]).unwrap();
        let f = upsample_to_frames(&seg, 16, 32).unwrap();
        assert_eq!(f.steps(), 32);
        assert!((0..16).all(|t| f.row(t) == seg.row(0)));
        let f = upsample_to_frames(&seg, 16, 20).unwrap();
        assert_eq!(f.steps(), 20);
        assert!((16..20).all(|t| f.row(t) == seg.row(1)));
        let flat = upsample_to_frames(&TimeMatrix::filled(3, 2, 0.25), 16, 40).unwrap();
        assert!(flat.as_slice().iter().all(|&v| v == 0.25));
        assert!(upsample_to_frames(&seg, 16, 33).is_err());
    }
}
