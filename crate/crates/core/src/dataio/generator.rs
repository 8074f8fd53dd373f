//! Synthetic piecewise-stationary corpus.
//!
//! Each video alternates background and action regimes. A regime of class `c`
//! emits `prototype[c] + drift(t) + noise`, where the drift is a slow sinusoid
//! along a random unit direction. The background prototype is the last row.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::annotations::{Annotation, GroundTruth, VideoTruth};
use super::features::FeatureSequence;
use crate::error::{Error, Result};
use crate::numerics::{cosine_similarity, Matrix};

/// Prototype rows are redrawn while any pair has `|cos|` above this.
const MAX_PROTOTYPE_COSINE: f64 = 0.5;
const PROTOTYPE_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub seed: u64,
    pub num_train: usize,
    pub num_test: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Norm of generated prototypes.
    pub prototype_norm: f64,
    /// Explicit `(C + 1) × F` prototypes, background last. Generated when absent.
    pub prototypes: Option<Vec<Vec<f64>>>,
    pub noise_sigma: f64,
    /// Drift amplitude as a multiple of `noise_sigma`.
    pub drift_ratio: f64,
    pub drift_period_min: f64,
    pub drift_period_max: f64,
    pub min_segments: usize,
    pub max_segments: usize,
    pub min_segment_len: usize,
    /// Expected share of snippets that are background.
    pub background_fraction: f64,
    /// Probability that a video starts (and, independently, ends) on an action.
    pub edge_action_prob: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            seed: 0,
            num_train: 128,
            num_test: 32,
            t_min: 80,
            t_max: 200,
            feature_dim: 16,
            num_classes: 3,
            prototype_norm: 4.0,
            prototypes: None,
            noise_sigma: 0.25,
            drift_ratio: 0.3,
            drift_period_min: 20.0,
            drift_period_max: 60.0,
            min_segments: 1,
            max_segments: 3,
            min_segment_len: 8,
            background_fraction: 0.5,
            edge_action_prob: 0.2,
        }
    }
}

impl GenSpec {
    pub fn num_videos(&self) -> usize {
        self.num_train + self.num_test
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("generator: {msg}")));
        if self.feature_dim == 0 || self.num_classes == 0 {
            return bad("feature_dim and num_classes must be >= 1".into());
        }
        if self.num_videos() == 0 {
            return bad("corpus must contain at least one video".into());
        }
        if self.t_min == 0 || self.t_min > self.t_max {
            return bad(format!("invalid length range [{}, {}]", self.t_min, self.t_max));
        }
        if self.min_segments == 0 || self.min_segments > self.max_segments {
            return bad(format!(
                "invalid segment count range [{}, {}]",
                self.min_segments, self.max_segments
            ));
        }
        if self.min_segment_len == 0 {
            return bad("min_segment_len must be >= 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        if !(self.drift_ratio >= 0.0 && self.drift_ratio.is_finite()) {
            return bad(format!("drift_ratio must be finite and >= 0, got {}", self.drift_ratio));
        }
        if !(self.drift_period_min > 0.0 && self.drift_period_min <= self.drift_period_max) {
            return bad("drift periods must satisfy 0 < min <= max".into());
        }
        if !(0.0..1.0).contains(&self.background_fraction) {
            return bad("background_fraction must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.edge_action_prob) {
            return bad("edge_action_prob must lie in [0, 1]".into());
        }
        if !(self.prototype_norm > 0.0 && self.prototype_norm.is_finite()) {
            return bad("prototype_norm must be positive".into());
        }
        // Worst case: max actions separated and flanked by background.
        let regimes = 2 * self.max_segments + 1;
        if regimes * self.min_segment_len > self.t_min {
            return Err(Error::Infeasible(format!(
                "{regimes} regimes of at least {} snippets do not fit in t_min = {}",
                self.min_segment_len, self.t_min
            )));
        }
        if let Some(p) = &self.prototypes {
            check_prototypes(p, self.num_classes + 1, self.feature_dim)?;
        }
        Ok(())
    }
}

fn check_prototypes(p: &[Vec<f64>], rows: usize, dim: usize) -> Result<()> {
    if p.len() != rows || p.iter().any(|r| r.len() != dim) {
        return Err(Error::Config(format!("prototypes must be {rows} rows of length {dim}")));
    }
    for i in 0..rows {
        for j in 0..i {
            let c = cosine_similarity(&p[i], &p[j]);
            if c.abs() > 1.0 - 1e-9 || p[i].iter().all(|v| *v == 0.0) {
                return Err(Error::Config(format!("prototypes {j} and {i} are collinear")));
            }
        }
    }
    Ok(())
}

/// One generated video.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub features: FeatureSequence,
    pub truth: VideoTruth,
}

impl Video {
    pub fn id(&self) -> &str {
        &self.features.video_id
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub videos: Vec<Video>,
    pub num_train: usize,
    /// `(C + 1) × F`, background last.
    pub prototypes: Matrix,
}

impl Corpus {
    pub fn train(&self) -> &[Video] {
        &self.videos[..self.num_train]
    }

    pub fn test(&self) -> &[Video] {
        &self.videos[self.num_train..]
    }

    pub fn truth_of(videos: &[Video]) -> GroundTruth {
        let mut gt = GroundTruth::default();
        for v in videos {
            gt.insert(v.truth.clone());
        }
        gt
    }
}

pub fn video_id(index: usize) -> String {
    format!("video_{index:04}")
}

fn video_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn make_prototypes(spec: &GenSpec) -> Result<Matrix> {
    if let Some(p) = &spec.prototypes {
        return Matrix::from_rows(p);
    }
    let rows = spec.num_classes + 1;
    let mut rng = video_rng(spec.seed, PROTOTYPE_STREAM);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(rows);
    let mut attempts = 0;
    while out.len() < rows {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::Infeasible(format!(
                "cannot draw {rows} prototypes in {} dims with |cos| <= {MAX_PROTOTYPE_COSINE}",
                spec.feature_dim
            )));
        }
        let cand: Vec<f64> = unit_gaussian(&mut rng, spec.feature_dim)
            .into_iter()
            .map(|x| x * spec.prototype_norm)
            .collect();
        if out
            .iter()
            .all(|p| cosine_similarity(p, &cand).abs() <= MAX_PROTOTYPE_COSINE)
        {
            out.push(cand);
        }
    }
    Matrix::from_rows(&out)
}

/// Splits `total` into `parts` lengths, each at least `min`.
fn split_lengths(rng: &mut ChaCha8Rng, total: usize, parts: usize, min: usize) -> Vec<usize> {
    let spare = total - parts * min;
    let mut cuts: Vec<usize> = (0..parts - 1).map(|_| rng.random_range(0..=spare)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(spare)) {
        out.push(min + c - prev);
        prev = c;
    }
    out
}

/// Regime layout: `(length, Some(class))` for actions, `(length, None)` for background.
fn layout(rng: &mut ChaCha8Rng, spec: &GenSpec, len: usize) -> Vec<(usize, Option<usize>)> {
    let actions = rng.random_range(spec.min_segments..=spec.max_segments);
    let lead = !rng.random_bool(spec.edge_action_prob);
    let trail = !rng.random_bool(spec.edge_action_prob);
    let backgrounds = actions - 1 + lead as usize + trail as usize;
    let class = rng.random_range(0..spec.num_classes);
    let m = spec.min_segment_len;

    let (action_total, background_total) = if backgrounds == 0 {
        (len, 0)
    } else {
        let target = (spec.background_fraction * len as f64).round() as usize;
        let bg = target.clamp(backgrounds * m, len - actions * m);
        (len - bg, bg)
    };
    let action_lens = split_lengths(rng, action_total, actions, m);
    let mut bg_lens = if backgrounds > 0 {
        split_lengths(rng, background_total, backgrounds, m)
    } else {
        Vec::new()
    }
    .into_iter();

    let mut out = Vec::with_capacity(actions + backgrounds);
    if lead {
        out.push((bg_lens.next().expect("lead background"), None));
    }
    for (i, a) in action_lens.into_iter().enumerate() {
        if i > 0 {
            out.push((bg_lens.next().expect("gap background"), None));
        }
        out.push((a, Some(class)));
    }
    if trail {
        out.push((bg_lens.next().expect("trail background"), None));
    }
    out
}

struct Drift {
    direction: Vec<f64>,
    period: f64,
    phase: f64,
}

fn generate_video(spec: &GenSpec, prototypes: &Matrix, index: usize) -> Result<Video> {
    let mut rng = video_rng(spec.seed, index as u64);
    let len = rng.random_range(spec.t_min..=spec.t_max);
    let regimes = layout(&mut rng, spec, len);
    let f = spec.feature_dim;
    let amp = spec.drift_ratio * spec.noise_sigma;
    let bg_row = spec.num_classes;

    let mut data = Vec::with_capacity(len * f);
    let mut annotations = Vec::new();
    let mut start = 0;
    for (rlen, class) in regimes {
        let drift = Drift {
            direction: unit_gaussian(&mut rng, f),
            period: rng.random_range(spec.drift_period_min..=spec.drift_period_max),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        };
        let proto = prototypes.row(class.unwrap_or(bg_row));
        for k in 0..rlen {
            let wave = amp * (std::f64::consts::TAU * k as f64 / drift.period + drift.phase).sin();
            for (p, d) in proto.iter().zip(&drift.direction) {
                let eps: f64 = rng.sample(StandardNormal);
                data.push(p + wave * d + spec.noise_sigma * eps);
            }
        }
        if let Some(class_id) = class {
            annotations.push(Annotation {
                start,
                end: start + rlen,
                class_id,
            });
        }
        start += rlen;
    }
    debug_assert_eq!(start, len);
    let id = video_id(index);
    Ok(Video {
        features: FeatureSequence::new(id.clone(), Matrix::from_vec(len, f, data)?)?,
        truth: VideoTruth {
            video_id: id,
            annotations,
        },
    })
}

/// Deterministic corpus for `spec`; the first `num_train` videos form the training split.
pub fn generate_corpus(spec: &GenSpec) -> Result<Corpus> {
    spec.validate()?;
    let prototypes = make_prototypes(spec)?;
    let videos = (0..spec.num_videos())
        .map(|i| generate_video(spec, &prototypes, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        videos,
        num_train: spec.num_train,
        prototypes,
    })
}

/// A video made only of background snippets, drawn with the corpus statistics.
pub fn background_video(spec: &GenSpec, prototypes: &Matrix, len: usize, stream: u64) -> Result<FeatureSequence> {
    let mut rng = video_rng(spec.seed ^ 0x6267, stream);
    let f = spec.feature_dim;
    let proto = prototypes.row(spec.num_classes);
    let data = (0..len * f)
        .map(|i| {
            let eps: f64 = rng.sample(StandardNormal);
            proto[i % f] + spec.noise_sigma * eps
        })
        .collect();
    FeatureSequence::new(format!("background_{stream:04}"), Matrix::from_vec(len, f, data)?)
}
