//! Line-oriented text formats.
//!
//! Annotations and manifests are tab-separated with a header naming the columns;
//! columns may appear in any order. Blank lines and lines starting with `#` are
//! skipped. An annotation record whose class is `-` declares a video with no
//! labeled activity (its start and end are ignored).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{AnnotationSet, DatasetManifest, Interval, ManifestEntry};
use crate::error::{Error, Result};
use crate::io_util::read_text;

const ANNOTATION_COLUMNS: [&str; 5] = ["video", "class", "start", "end", "total"];
const MANIFEST_COLUMNS: [&str; 3] = ["video", "subject", "camera"];

/// Non-comment lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

struct Table<'a> {
    columns: HashMap<&'a str, usize>,
    width: usize,
    path: &'a Path,
}

impl<'a> Table<'a> {
    fn header(line: usize, header: &'a str, required: &[&str], path: &'a Path) -> Result<Self> {
        let columns: HashMap<&str, usize> = header.split('\t').map(str::trim).enumerate().map(|(i, c)| (c, i)).collect();
        if let Some(missing) = required.iter().find(|c| !columns.contains_key(*c)) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("header lacks column {missing:?}"),
            });
        }
        Ok(Self {
            width: header.split('\t').count(),
            columns,
            path,
        })
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    fn row<'r>(&self, line: usize, text: &'r str) -> Result<Vec<&'r str>> {
        let fields: Vec<&str> = text.split('\t').map(str::trim).collect();
        if fields.len() != self.width {
            return Err(self.err(line, format!("expected {} fields, found {}", self.width, fields.len())));
        }
        Ok(fields)
    }

    fn field<'r>(&self, fields: &[&'r str], name: &str) -> &'r str {
        fields[self.columns[name]]
    }

    fn number<T: std::str::FromStr>(&self, line: usize, fields: &[&str], name: &str) -> Result<T> {
        let raw = self.field(fields, name);
        raw.parse()
            .map_err(|_| self.err(line, format!("{name} is not a non-negative integer: {raw:?}")))
    }
}

/// One class name per line; the line index (ignoring blanks and comments) is the id.
pub fn parse_class_list(text: &str, path: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = Vec::new();
    for (line, l) in records(text) {
        let name = l.trim();
        if name == "-" || name.contains('\t') {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("invalid class name {name:?}"),
            });
        }
        if names.iter().any(|n| n == name) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("duplicate class name {name:?}"),
            });
        }
        names.push(name.to_string());
    }
    Ok(names)
}

pub fn render_class_list(names: &[String]) -> String {
    names.iter().map(|n| format!("{n}\n")).collect()
}

pub fn read_class_list(path: &Path) -> Result<Vec<String>> {
    parse_class_list(&read_text(path)?, path)
}

/// Videos are returned in order of first appearance.
pub fn parse_annotations(text: &str, classes: &[String], path: &Path) -> Result<Vec<AnnotationSet>> {
    let ids: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut lines = records(text);
    let Some((hl, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    let table = Table::header(hl, header, &ANNOTATION_COLUMNS, path)?;
    let mut sets: Vec<AnnotationSet> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (line, l) in lines {
        let f = table.row(line, l)?;
        let video = table.field(&f, "video");
        let total: usize = table.number(line, &f, "total")?;
        let slot = *index.entry(video.to_string()).or_insert_with(|| {
            sets.push(AnnotationSet::empty(video, total));
            sets.len() - 1
        });
        if sets[slot].total_frames != total {
            return Err(table.err(
                line,
                format!("video {video} declared with {total} frames, earlier {}", sets[slot].total_frames),
            ));
        }
        let class_name = table.field(&f, "class");
        if class_name == "-" {
            continue;
        }
        let class = *ids
            .get(class_name)
            .ok_or_else(|| table.err(line, format!("unknown class {class_name:?}")))?;
        let start: usize = table.number(line, &f, "start")?;
        let end: usize = table.number(line, &f, "end")?;
        if start >= end {
            return Err(table.err(line, format!("start {start} is not before end {end}")));
        }
        if end > total {
            return Err(table.err(line, format!("end {end} exceeds total frames {total}")));
        }
        sets[slot].intervals.push(Interval { class, start, end });
    }
    Ok(sets)
}

pub fn render_annotations(sets: &[AnnotationSet], classes: &[String]) -> String {
    let mut out = ANNOTATION_COLUMNS.join("\t");
    out.push('\n');
    for s in sets {
        if s.intervals.is_empty() {
            let _ = writeln!(out, "{}\t-\t-\t-\t{}", s.video, s.total_frames);
        }
        for iv in &s.intervals {
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", s.video, classes[iv.class], iv.start, iv.end, s.total_frames);
        }
    }
    out
}

pub fn read_annotations(path: &Path, classes: &[String]) -> Result<Vec<AnnotationSet>> {
    parse_annotations(&read_text(path)?, classes, path)
}

/// Manifest columns `video`, `subject`, `camera`, and an optional `split` tag
/// (`-` for none).
pub fn parse_manifest(text: &str, path: &Path) -> Result<DatasetManifest> {
    let mut lines = records(text);
    let Some((hl, header)) = lines.next() else {
        return Ok(DatasetManifest::default());
    };
    let table = Table::header(hl, header, &MANIFEST_COLUMNS, path)?;
    let mut manifest = DatasetManifest::default();
    for (line, l) in lines {
        let f = table.row(line, l)?;
        let video = table.field(&f, "video");
        if manifest.get(video).is_some() {
            return Err(table.err(line, format!("video {video} listed twice")));
        }
        let tag = table
            .columns
            .get("split")
            .map(|&i| f[i])
            .filter(|t| *t != "-")
            .map(str::to_string);
        manifest.entries.push(ManifestEntry {
            video: video.to_string(),
            subject: table.number(line, &f, "subject")?,
            camera: table.number(line, &f, "camera")?,
            tag,
        });
    }
    Ok(manifest)
}

pub fn render_manifest(manifest: &DatasetManifest) -> String {
    let mut out = String::from("video\tsubject\tcamera\tsplit\n");
    for e in &manifest.entries {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", e.video, e.subject, e.camera, e.tag.as_deref().unwrap_or("-"));
    }
    out
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    parse_manifest(&read_text(path)?, path)
}
