use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dfc::ChangePointSet;
use crate::efc::VideoLabel;
use crate::error::{Error, Result};

pub const ANNOTATION_HEADER: &str = "video_id,start,end,class_id";

/// One labelled action instance, snippets `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub start: usize,
    pub end: usize,
    pub class_id: usize,
}

/// Annotations of a single video, sorted by start.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoTruth {
    pub video_id: String,
    pub annotations: Vec<Annotation>,
}

impl VideoTruth {
    /// Video-level label: multi-hot over the annotated classes, l1-normalised.
    pub fn label(&self, num_classes: usize) -> Result<VideoLabel> {
        if self.annotations.is_empty() {
            return Err(Error::LabelUndefined(format!(
                "video {} has no annotations",
                self.video_id
            )));
        }
        VideoLabel::from_classes(self.annotations.iter().map(|a| a.class_id), num_classes)
    }

    /// All annotation endpoints strictly inside `(0, len)`.
    pub fn change_points(&self, len: usize) -> ChangePointSet {
        self.annotations
            .iter()
            .flat_map(|a| [a.start, a.end])
            .filter(|&p| p > 0 && p < len)
            .collect()
    }

    pub fn check_length(&self, len: usize) -> Result<()> {
        match self.annotations.iter().find(|a| a.end > len) {
            Some(a) => Err(Error::Malformed {
                what: "annotation",
                reason: format!(
                    "video {}: segment [{}, {}) exceeds {} snippets",
                    self.video_id, a.start, a.end, len
                ),
            }),
            None => Ok(()),
        }
    }
}

/// Annotations for a set of videos, keyed by video id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub videos: BTreeMap<String, VideoTruth>,
}

impl GroundTruth {
    pub fn get(&self, video_id: &str) -> Option<&VideoTruth> {
        self.videos.get(video_id)
    }

    pub fn insert(&mut self, truth: VideoTruth) {
        self.videos.insert(truth.video_id.clone(), truth);
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(ANNOTATION_HEADER);
        out.push('\n');
        for v in self.videos.values() {
            for a in &v.annotations {
                let _ = writeln!(out, "{},{},{},{}", v.video_id, a.start, a.end, a.class_id);
            }
        }
        out
    }
}

/// Parses annotation CSV text; `origin` is used in error messages.
pub fn parse_annotations(text: &str, origin: &Path) -> Result<GroundTruth> {
    let invalid = |line: usize, reason: String| Error::Validation {
        path: origin.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == ANNOTATION_HEADER => {}
        Some((_, h)) => {
            return Err(invalid(
                1,
                format!("expected header `{ANNOTATION_HEADER}`, found `{h}`"),
            ))
        }
        None => return Err(invalid(1, "missing header line".into())),
    }

    let mut rows: BTreeMap<String, Vec<(usize, Annotation)>> = BTreeMap::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(invalid(line, format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |i: usize, name: &str| {
            fields[i]
                .parse::<usize>()
                .map_err(|_| invalid(line, format!("{name} `{}` is not a non-negative integer", fields[i])))
        };
        let ann = Annotation {
            start: num(1, "start")?,
            end: num(2, "end")?,
            class_id: num(3, "class_id")?,
        };
        if ann.start >= ann.end {
            return Err(invalid(
                line,
                format!("empty or reversed segment [{}, {})", ann.start, ann.end),
            ));
        }
        rows.entry(fields[0].to_string()).or_default().push((line, ann));
    }
    if rows.is_empty() {
        return Err(Error::LabelUndefined(format!("{}: no annotations", origin.display())));
    }

    let mut gt = GroundTruth::default();
    for (video_id, mut anns) in rows {
        anns.sort_by_key(|(_, a)| (a.start, a.end));
        for pair in anns.windows(2) {
            let ((_, a), (line, b)) = (&pair[0], &pair[1]);
            if b.start < a.end {
                return Err(invalid(
                    *line,
                    format!(
                        "segment [{}, {}) overlaps [{}, {}) in {video_id}",
                        b.start, b.end, a.start, a.end
                    ),
                ));
            }
        }
        gt.insert(VideoTruth {
            video_id,
            annotations: anns.into_iter().map(|(_, a)| a).collect(),
        });
    }
    Ok(gt)
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, path)
}

pub fn write_annotations(path: impl AsRef<Path>, gt: &GroundTruth) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, gt.to_csv()).map_err(|e| Error::io(path, e))
}
