use super::{AnnotationSet, Interval};
use crate::error::{Error, Result};

/// Total map from source class ids to a smaller target label space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeMap {
    targets: Vec<usize>,
    n_targets: usize,
}

impl MergeMap {
    pub fn new(targets: Vec<usize>, n_targets: usize) -> Result<Self> {
        if let Some(&t) = targets.iter().find(|&&t| t >= n_targets) {
            return Err(Error::InvalidArgument(format!("target {t} out of range for {n_targets} classes")));
        }
        Ok(Self { targets, n_targets })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            targets: (0..n).collect(),
            n_targets: n,
        }
    }

    /// Builds the map from source and target names; targets are numbered in
    /// order of first appearance.
    pub fn from_names(sources: &[String], pairs: &[(String, String)]) -> Result<(Self, Vec<String>)> {
        let mut target_names: Vec<String> = Vec::new();
        let mut targets = Vec::with_capacity(sources.len());
        for s in sources {
            let (_, t) = pairs
                .iter()
                .find(|(src, _)| src == s)
                .ok_or_else(|| Error::InvalidArgument(format!("class {s:?} missing from merge map")))?;
            let id = match target_names.iter().position(|n| n == t) {
                Some(i) => i,
                None => {
                    target_names.push(t.clone());
                    target_names.len() - 1
                }
            };
            targets.push(id);
        }
        let n = target_names.len();
        Ok((Self { targets, n_targets: n }, target_names))
    }

    pub fn n_sources(&self) -> usize {
        self.targets.len()
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn target(&self, source: usize) -> Option<usize> {
        self.targets.get(source).copied()
    }
}

/// Relabels every interval and coalesces overlapping or touching intervals that
/// land on the same target from different source classes into their union.
///
/// Output intervals keep the order of each group's earliest member.
pub fn merge_classes(ann: &AnnotationSet, map: &MergeMap) -> Result<AnnotationSet> {
    let relabeled: Vec<(usize, Interval)> = ann
        .intervals
        .iter()
        .map(|iv| {
            map.target(iv.class)
                .map(|t| (iv.class, Interval { class: t, ..*iv }))
                .ok_or_else(|| Error::InvalidArgument(format!("class {} missing from merge map", iv.class)))
        })
        .collect::<Result<_>>()?;

    let n = relabeled.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            let ((si, a), (sj, b)) = (relabeled[i], relabeled[j]);
            if a.class == b.class && si != sj && a.start <= b.end && b.start <= a.end {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: Vec<Option<Interval>> = vec![None; n];
    for (i, (_, iv)) in relabeled.iter().enumerate() {
        let r = find(&mut parent, i);
        groups[r] = Some(match groups[r] {
            Some(g) => Interval {
                class: g.class,
                start: g.start.min(iv.start),
                end: g.end.max(iv.end),
            },
            None => *iv,
        });
    }
    Ok(AnnotationSet {
        video: ann.video.clone(),
        intervals: groups.into_iter().flatten().collect(),
        total_frames: ann.total_frames,
    })
}
