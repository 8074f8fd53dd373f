//! On-disk corpus: `<corpus>/<split>/<video_id>.feat` plus `<corpus>/<split>/annotations.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use ahlm_core::dataio::{
    encode_features, parse_annotations, read_features, Corpus, FeatureSequence, GroundTruth, Video, VideoTruth,
};
use anyhow::{bail, Context, Result};

use crate::output::Outputs;

pub const TRAIN: &str = "train";
pub const TEST: &str = "test";
pub const ANNOTATION_FILE: &str = "annotations.csv";
pub const FEATURE_EXT: &str = "feat";

pub fn add_split(out: &mut Outputs, dir: &Path, videos: &[Video]) {
    for v in videos {
        out.add(
            dir.join(format!("{}.{FEATURE_EXT}", v.id())),
            encode_features(v.features.data()),
        );
    }
    out.add(dir.join(ANNOTATION_FILE), Corpus::truth_of(videos).to_csv());
}

fn feature_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir)
        .with_context(|| format!("corpus split {} not found; run `ahlm gen-data` first", dir.display()))?;
    let mut files = Vec::new();
    for e in entries {
        let p = e.with_context(|| format!("cannot list {}", dir.display()))?.path();
        if p.extension().is_some_and(|x| x == FEATURE_EXT) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Deletes feature files in `dir` that `keep` does not list.
pub fn remove_stale(dir: &Path, keep: &[&Path]) -> Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    for f in feature_files(dir)? {
        if !keep.contains(&f.as_path()) {
            fs::remove_file(&f).with_context(|| format!("cannot remove stale {}", f.display()))?;
        }
    }
    Ok(())
}

/// One split with its annotations, sorted by video id.
pub struct Split {
    pub videos: Vec<FeatureSequence>,
    pub truth: GroundTruth,
}

impl Split {
    pub fn truth_of(&self, v: &FeatureSequence) -> &VideoTruth {
        self.truth.get(&v.video_id).expect("checked at load")
    }
}

pub fn read_split(dir: &Path) -> Result<Split> {
    let files = feature_files(dir)?;
    if files.is_empty() {
        bail!(
            "no .{FEATURE_EXT} files in {}; run `ahlm gen-data` first",
            dir.display()
        );
    }
    let ann_path = dir.join(ANNOTATION_FILE);
    let text = fs::read_to_string(&ann_path).with_context(|| format!("cannot read {}", ann_path.display()))?;
    let mut truth = parse_annotations(&text, &ann_path)?;
    let mut videos = Vec::with_capacity(files.len());
    for f in &files {
        let v = read_features(f)?;
        let t = truth.videos.entry(v.video_id.clone()).or_insert_with(|| VideoTruth {
            video_id: v.video_id.clone(),
            annotations: Vec::new(),
        });
        t.check_length(v.len())?;
        videos.push(v);
    }
    if let Some(id) = truth
        .videos
        .keys()
        .find(|id| !videos.iter().any(|v| &v.video_id == *id))
    {
        bail!("{} annotates `{id}`, which has no feature file", ann_path.display());
    }
    Ok(Split { videos, truth })
}
