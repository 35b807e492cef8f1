use std::collections::BTreeSet;

use super::DatasetManifest;
use crate::error::{Error, Result};

/// Disjoint train and test video ids, in manifest order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

fn partition(
    manifest: &DatasetManifest,
    key: impl Fn(&super::ManifestEntry) -> u32,
    train: &[u32],
    test: &[u32],
    what: &str,
) -> Result<Split> {
    let (tr, te): (BTreeSet<u32>, BTreeSet<u32>) = (train.iter().copied().collect(), test.iter().copied().collect());
    if tr.is_empty() || te.is_empty() {
        return Err(Error::InvalidArgument(format!("train and test {what} sets must both be non-empty")));
    }
    if let Some(x) = tr.intersection(&te).next() {
        return Err(Error::InvalidArgument(format!("{what} {x} is in both train and test")));
    }
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for e in &manifest.entries {
        let k = key(e);
        if tr.contains(&k) {
            split.train.push(e.video.clone());
        } else if te.contains(&k) {
            split.test.push(e.video.clone());
        } else {
            return Err(Error::InvalidArgument(format!(
                "video {} has {what} {k}, which is in neither set",
                e.video
            )));
        }
    }
    Ok(split)
}

pub fn split_cross_subject(manifest: &DatasetManifest, train: &[u32], test: &[u32]) -> Result<Split> {
    partition(manifest, |e| e.subject, train, test, "subject")
}

pub fn split_cross_view(manifest: &DatasetManifest, train: &[u32], test: &[u32]) -> Result<Split> {
    partition(manifest, |e| e.camera, train, test, "camera")
}

/// Uses the manifest's split tags; untagged videos belong to neither side.
pub fn split_by_tag(manifest: &DatasetManifest, train_tag: &str, test_tag: &str) -> Result<Split> {
    let pick = |tag: &str| -> Vec<String> {
        manifest
            .entries
            .iter()
            .filter(|e| e.tag.as_deref() == Some(tag))
            .map(|e| e.video.clone())
            .collect()
    };
    let split = Split {
        train: pick(train_tag),
        test: pick(test_tag),
    };
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "manifest tags give {} train and {} test videos",
            split.train.len(),
            split.test.len()
        )));
    }
    Ok(split)
}
