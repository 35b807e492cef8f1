use std::fmt::Write as _;

use super::{AnnotationSet, DatasetManifest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub class: usize,
    pub instances: usize,
    /// Mean interval length in frames (0 when there are no instances).
    pub mean_duration: f64,
    /// Population variance of interval length.
    pub var_duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub videos: usize,
    pub per_class: Vec<ClassStats>,
    /// `concurrency[k]` counts frames with exactly `k` active labels.
    pub concurrency: Vec<usize>,
    pub instances_per_video: f64,
}

impl DatasetStats {
    pub fn labeled_frames(&self) -> usize {
        self.concurrency.iter().skip(1).sum()
    }

    pub fn max_concurrency(&self) -> usize {
        self.concurrency.iter().rposition(|&n| n > 0).unwrap_or(0)
    }

    /// Class ids ordered by instance count, descending; ties by id.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.per_class.len()).collect();
        order.sort_by(|&a, &b| self.per_class[b].instances.cmp(&self.per_class[a].instances));
        order
    }

    /// Tab-separated report: per-class rows, a blank line, the concurrency
    /// histogram, a blank line, then global figures.
    pub fn to_tsv(&self, names: &[String]) -> String {
        let mut out = String::from("class_id\tname\tinstances\tmean_duration\tvar_duration\n");
        for c in self.ranking() {
            let s = &self.per_class[c];
            let name = names.get(c).map_or("?", String::as_str);
            let _ = writeln!(
                out,
                "{c}\t{name}\t{}\t{:.3}\t{:.3}",
                s.instances, s.mean_duration, s.var_duration
            );
        }
        out.push_str("\nconcurrent_labels\tframes\n");
        for (k, n) in self.concurrency.iter().enumerate() {
            let _ = writeln!(out, "{k}\t{n}");
        }
        let _ = write!(
            out,
            "\nvideos\t{}\ninstances\t{}\ninstances_per_video\t{:.3}\nlabeled_frames\t{}\n",
            self.videos,
            self.per_class.iter().map(|s| s.instances).sum::<usize>(),
            self.instances_per_video,
            self.labeled_frames()
        );
        out
    }
}

/// Counts and duration moments per class, the per-frame concurrency histogram,
/// and instances per video. Every annotated video must appear in the manifest
/// when the manifest is non-empty.
pub fn dataset_stats(annotations: &[AnnotationSet], manifest: &DatasetManifest, n_classes: usize) -> Result<DatasetStats> {
    if annotations.is_empty() {
        return Err(Error::InvalidArgument("no videos to summarise".into()));
    }
    if !manifest.entries.is_empty() {
        if let Some(a) = annotations.iter().find(|a| manifest.get(&a.video).is_none()) {
            return Err(Error::InvalidArgument(format!("video {} is not in the manifest", a.video)));
        }
    }
    let mut durations: Vec<Vec<f64>> = vec![Vec::new(); n_classes];
    let mut concurrency: Vec<usize> = vec![0];
    for a in annotations {
        for iv in &a.intervals {
            durations
                .get_mut(iv.class)
                .ok_or_else(|| Error::InvalidArgument(format!("class id {} out of range", iv.class)))?
                .push(iv.len() as f64);
        }
        for k in a.concurrency() {
            if k >= concurrency.len() {
                concurrency.resize(k + 1, 0);
            }
            concurrency[k] += 1;
        }
    }
    let per_class = durations
        .iter()
        .enumerate()
        .map(|(class, d)| {
            let n = d.len();
            let mean = if n == 0 { 0.0 } else { d.iter().sum::<f64>() / n as f64 };
            let var = if n == 0 {
                0.0
            } else {
                d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64
            };
            ClassStats {
                class,
                instances: n,
                mean_duration: mean,
                var_duration: var,
            }
        })
        .collect::<Vec<_>>();
    let total: usize = per_class.iter().map(|s| s.instances).sum();
    Ok(DatasetStats {
        videos: annotations.len(),
        per_class,
        concurrency,
        instances_per_video: total as f64 / annotations.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Interval;

    #[test]
    fn single_interval() {
        let a = AnnotationSet {
            video: "v".into(),
            intervals: vec![Interval {
                class: 0,
                start: 5,
                end: 15,
            }],
            total_frames: 20,
        };
        let s = dataset_stats(&[a], &DatasetManifest::default(), 2).unwrap();
        assert_eq!(s.per_class[0].instances, 1);
        assert_eq!(s.per_class[0].mean_duration, 10.0);
        assert_eq!(s.per_class[0].var_duration, 0.0);
        assert_eq!(s.concurrency, vec![10, 10]);
        assert_eq!(s.labeled_frames(), 10);
        assert_eq!(s.instances_per_video, 1.0);
        assert!(s.to_tsv(&["a".into(), "b".into()]).starts_with("class_id\tname"));
    }

    #[test]
    fn histogram_accounts_for_every_labeled_frame() {
        let iv = |class, start, end| Interval { class, start, end };
        let a = AnnotationSet {
            video: "v".into(),
            intervals: vec![iv(0, 0, 10), iv(1, 5, 15), iv(2, 8, 9)],
            total_frames: 20,
        };
        let s = dataset_stats(&[a.clone()], &DatasetManifest::default(), 3).unwrap();
        let covered = a.concurrency().iter().filter(|&&k| k > 0).count();
        assert_eq!(s.labeled_frames(), covered);
        assert_eq!(s.concurrency, vec![5, 10, 4, 1]);
        assert_eq!(s.max_concurrency(), 3);
        assert_eq!(s.per_class[1].var_duration, 0.0);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(dataset_stats(&[], &DatasetManifest::default(), 1).is_err());
    }
}
