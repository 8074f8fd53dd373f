use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ahlm_core::boundary::{extract_segments, lcs_prune, Segment};
use ahlm_core::checkpoint::Checkpoint;
use ahlm_core::dataio::{generate_corpus, GenSpec};
use ahlm_core::dfc::{detect_sequence, elbo_grad_check, train_dfc, ChangePointSet, DfcModel, ElboNoise};
use ahlm_core::efc::{cas_forward, classification_accuracy, efc_grad_check, train_efc, EfcModel, VideoLabel};
use ahlm_core::eval::{changepoint_f1, map_report, ChangePointScore, Prediction};
use ahlm_core::TrainTrace;
use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{RunConfig, SNIPPET_SECONDS};
use crate::corpus::{self, read_split, Split, TEST, TRAIN};
use crate::output::Outputs;

pub const DFC_CHECKPOINT: &str = "dfc.ckpt";
pub const EFC_CHECKPOINT: &str = "efc.ckpt";
pub const LOSS_TRACE: &str = "loss_trace.csv";
pub const SEGMENTS: &str = "segments.csv";
pub const SEGMENT_HEADER: &str = "video_id,start,end,class_id,score";
pub const CHANGEPOINTS: &str = "changepoints.csv";
pub const CHANGEPOINT_HEADER: &str = "video_id,point,kept";
pub const DETECTIONS: &str = "detections.txt";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";
pub const CLASS_AP: &str = "class_ap.csv";
pub const GRADCHECK: &str = "gradcheck.txt";
/// Largest relative gradient error `gradcheck` accepts.
pub const GRAD_TOLERANCE: f64 = 1e-3;

/// Output locations of one run, resolved against the `--out` root.
pub struct Layout {
    pub corpus: PathBuf,
    pub checkpoints: PathBuf,
    pub results: PathBuf,
}

impl Layout {
    pub fn new(root: &Path, cfg: &RunConfig) -> Self {
        Layout {
            corpus: root.join(&cfg.paths.corpus),
            checkpoints: root.join(&cfg.paths.checkpoints),
            results: root.join(&cfg.paths.results),
        }
    }
}

pub fn gen_data(cfg: &RunConfig, root: &Path) -> Result<String> {
    let dirs = Layout::new(root, cfg);
    let corpus = generate_corpus(&cfg.data)?;
    let mut out = Outputs::default();
    corpus::add_split(&mut out, &dirs.corpus.join(TRAIN), corpus.train());
    corpus::add_split(&mut out, &dirs.corpus.join(TEST), corpus.test());
    out.add_manifest(&dirs.corpus, "gen-data", cfg);
    let keep: Vec<PathBuf> = out.paths().map(Path::to_path_buf).collect();
    out.commit()?;
    let keep: Vec<&Path> = keep.iter().map(PathBuf::as_path).collect();
    corpus::remove_stale(&dirs.corpus.join(TRAIN), &keep)?;
    corpus::remove_stale(&dirs.corpus.join(TEST), &keep)?;
    Ok(format!(
        "wrote {} train and {} test videos to {}",
        corpus.num_train,
        corpus.videos.len() - corpus.num_train,
        dirs.corpus.display()
    ))
}

fn labels(split: &Split, num_classes: usize) -> Result<Vec<VideoLabel>> {
    split
        .videos
        .iter()
        .map(|v| {
            split
                .truth_of(v)
                .label(num_classes)
                .with_context(|| format!("training video {}", v.video_id))
        })
        .collect()
}

fn trace_csv(dfc: &TrainTrace, efc: &TrainTrace) -> String {
    let mut s = String::from("model,epoch,loss\n");
    for (name, tr) in [("dfc", dfc), ("efc", efc)] {
        for (e, l) in tr.epoch_loss.iter().enumerate() {
            let _ = writeln!(s, "{name},{},{l}", e + 1);
        }
    }
    s
}

pub fn train(cfg: &RunConfig, root: &Path) -> Result<String> {
    let dirs = Layout::new(root, cfg);
    let split = read_split(&dirs.corpus.join(TRAIN))?;
    let y = labels(&split, cfg.efc.num_classes)?;
    let start = Instant::now();
    let mut dfc = DfcModel::new(cfg.dfc.clone(), cfg.seed)?;
    let dfc_trace = train_dfc(&mut dfc, &split.videos, &cfg.train_dfc)?;
    let mut efc = EfcModel::new(cfg.efc.clone(), cfg.seed)?;
    let efc_trace = train_efc(&mut efc, &split.videos, &y, &cfg.train_efc)?;

    let mut out = Outputs::default();
    out.add(dirs.checkpoints.join(DFC_CHECKPOINT), dfc.to_checkpoint());
    out.add(dirs.checkpoints.join(EFC_CHECKPOINT), efc.to_checkpoint());
    out.add(dirs.checkpoints.join(LOSS_TRACE), trace_csv(&dfc_trace, &efc_trace));
    out.add_manifest(&dirs.checkpoints, "train", cfg);
    out.commit()?;
    let last = |t: &TrainTrace| t.epoch_loss.last().copied().unwrap_or(f64::NAN);
    Ok(format!(
        "trained on {} videos in {:.1}s; final loss dfc {:.4}, efc {:.4}",
        split.videos.len(),
        start.elapsed().as_secs_f64(),
        last(&dfc_trace),
        last(&efc_trace)
    ))
}

fn load_models(dirs: &Layout) -> Result<(DfcModel, EfcModel)> {
    let load = |name: &str| {
        let p = dirs.checkpoints.join(name);
        if !p.exists() {
            bail!("checkpoint {} not found; run `ahlm train` first", p.display());
        }
        Ok(p)
    };
    let dfc = DfcModel::load(load(DFC_CHECKPOINT)?)?;
    let efc = EfcModel::load(load(EFC_CHECKPOINT)?)?;
    Ok((dfc, efc))
}

pub fn detect(cfg: &RunConfig, root: &Path) -> Result<String> {
    let dirs = Layout::new(root, cfg);
    let (dfc, efc) = load_models(&dirs)?;
    let split = read_split(&dirs.corpus.join(TEST))?;
    let mut segments = format!("{SEGMENT_HEADER}\n");
    let mut points = format!("{CHANGEPOINT_HEADER}\n");
    let mut readable = String::new();
    let mut count = 0;
    for v in &split.videos {
        let x = v.data();
        let detected = detect_sequence(&dfc, x)?;
        let kept = lcs_prune(&detected, x, &cfg.lcs)?;
        for p in detected.iter() {
            let _ = writeln!(points, "{},{p},{}", v.video_id, u8::from(kept.contains(p)));
        }
        let segs = extract_segments(&kept, &cas_forward(&efc, x)?, &cfg.lcs)?;
        for s in &segs {
            let _ = writeln!(
                segments,
                "{},{},{},{},{}",
                v.video_id, s.start, s.end, s.class_id, s.score
            );
            let _ = writeln!(
                readable,
                "{} {:.2}s-{:.2}s class {} score {:.3}",
                v.video_id,
                s.start as f64 * SNIPPET_SECONDS,
                s.end as f64 * SNIPPET_SECONDS,
                s.class_id,
                s.score
            );
        }
        count += segs.len();
    }
    let mut out = Outputs::default();
    out.add(dirs.results.join(SEGMENTS), segments);
    out.add(dirs.results.join(CHANGEPOINTS), points);
    out.add(dirs.results.join(DETECTIONS), readable);
    out.add_manifest(&dirs.results, "detect", cfg);
    out.commit()?;
    Ok(format!("{count} segments over {} videos", split.videos.len()))
}

fn field<T: std::str::FromStr>(raw: Option<&str>, path: &Path, line: usize, name: &str) -> Result<T> {
    raw.and_then(|s| s.trim().parse().ok())
        .with_context(|| format!("{}:{line}: bad or missing `{name}`", path.display()))
}

fn read_csv(path: &Path, header: &str, hint: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}; {hint}", path.display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => bail!("{}: expected header `{header}`", path.display()),
    }
    Ok(lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::to_string).collect()))
        .collect())
}

pub fn read_segments(path: &Path) -> Result<Vec<Prediction>> {
    read_csv(path, SEGMENT_HEADER, "run `ahlm detect` first")?
        .into_iter()
        .map(|(line, f)| {
            let get = |i: usize| f.get(i).map(String::as_str);
            let id = get(0)
                .filter(|s| !s.is_empty())
                .with_context(|| format!("{}:{line}: missing video_id", path.display()))?;
            let seg = Segment::new(
                field(get(1), path, line, "start")?,
                field(get(2), path, line, "end")?,
                field(get(3), path, line, "class_id")?,
                field(get(4), path, line, "score")?,
            )
            .with_context(|| format!("{}:{line}", path.display()))?;
            Ok(Prediction::new(id, seg))
        })
        .collect()
}

/// Raw detected change-points per video.
fn read_changepoints(path: &Path) -> Result<Vec<(String, usize)>> {
    read_csv(path, CHANGEPOINT_HEADER, "run `ahlm detect` first")?
        .into_iter()
        .map(|(line, f)| Ok((f[0].clone(), field(f.get(1).map(String::as_str), path, line, "point")?)))
        .collect()
}

pub fn eval(cfg: &RunConfig, root: &Path) -> Result<String> {
    let dirs = Layout::new(root, cfg);
    let split = read_split(&dirs.corpus.join(TEST))?;
    let preds = read_segments(&dirs.results.join(SEGMENTS))?;
    if let Some(p) = preds.iter().find(|p| split.truth.get(&p.video_id).is_none()) {
        bail!("{} names unknown video `{}`", SEGMENTS, p.video_id);
    }
    let mut report = map_report(&preds, &split.truth, &cfg.eval.thresholds)?;

    let cp_path = dirs.results.join(CHANGEPOINTS);
    if cp_path.exists() {
        let raw = read_changepoints(&cp_path)?;
        let scores: Vec<ChangePointScore> = split
            .videos
            .iter()
            .map(|v| {
                let det: ChangePointSet = raw
                    .iter()
                    .filter(|(id, _)| *id == v.video_id)
                    .map(|(_, p)| *p)
                    .collect();
                changepoint_f1(&det, &split.truth_of(v).change_points(v.len()), cfg.eval.tolerance)
            })
            .collect();
        report = report.with_changepoints(cfg.eval.tolerance, ChangePointScore::micro(&scores));
    }

    let mut text = report.to_text();
    let ckpt = dirs.checkpoints.join(EFC_CHECKPOINT);
    let mut accuracy = None;
    if ckpt.exists() {
        let efc = EfcModel::load(&ckpt)?;
        let (videos, y): (Vec<_>, Vec<_>) = split
            .videos
            .iter()
            .filter(|v| !split.truth_of(v).annotations.is_empty())
            .map(|v| Ok((v.clone(), split.truth_of(v).label(cfg.efc.num_classes)?)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let acc = classification_accuracy(&efc, &videos, &y)?;
        let _ = writeln!(text, "classification_accuracy={acc}");
        accuracy = Some(acc);
    }
    let json = serde_json::json!({ "report": report, "classification_accuracy": accuracy });

    let mut out = Outputs::default();
    out.add(dirs.results.join(REPORT_TEXT), text.clone());
    out.add(
        dirs.results.join(REPORT_JSON),
        serde_json::to_string_pretty(&json)? + "\n",
    );
    out.add(dirs.results.join(CLASS_AP), report.to_csv());
    out.add_manifest(&dirs.results, "eval", cfg);
    out.commit()?;
    Ok(text)
}

/// Snippets used for the gradient check: the start of one generated video.
fn gradcheck_input(cfg: &RunConfig, len: usize) -> Result<ahlm_core::numerics::Matrix> {
    let spec = GenSpec {
        num_train: 1,
        num_test: 0,
        ..cfg.data.clone()
    };
    let corpus = generate_corpus(&spec)?;
    Ok(corpus.videos[0].features.slice(0, len)?.data().clone())
}

pub fn gradcheck(cfg: &RunConfig, root: &Path) -> Result<String> {
    const EPS: f64 = 1e-4;
    const PER_TENSOR: usize = 24;
    let dirs = Layout::new(root, cfg);
    let start = Instant::now();

    let mut dfc = DfcModel::new(cfg.dfc.clone(), cfg.seed)?;
    let x2 = gradcheck_input(cfg, 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = ElboNoise::draw(&mut rng, 2, &dfc.config);
    let mut dfc_err: f64 = 0.0;
    for decisions in [[false], [true]] {
        let r = elbo_grad_check(&mut dfc, &x2, &noise, &decisions, EPS, PER_TENSOR)?;
        dfc_err = dfc_err.max(r.max_rel_error);
    }

    let mut efc = EfcModel::new(cfg.efc.clone(), cfg.seed)?;
    let x = gradcheck_input(cfg, 16)?;
    let y = VideoLabel::from_classes([0], cfg.efc.num_classes)?;
    let efc_err = efc_grad_check(&mut efc, &x, &y, EPS, PER_TENSOR)?.max_rel_error;

    let text = format!("dfc_max_rel_error={dfc_err}\nefc_max_rel_error={efc_err}\ntolerance={GRAD_TOLERANCE}\n");
    let mut out = Outputs::default();
    out.add(dirs.results.join(GRADCHECK), text.clone());
    out.add_manifest(&dirs.results, "gradcheck", cfg);
    out.commit()?;
    if !(dfc_err < GRAD_TOLERANCE && efc_err < GRAD_TOLERANCE) {
        bail!("gradient check failed:\n{text}");
    }
    Ok(format!("{text}seconds={:.1}", start.elapsed().as_secs_f64()))
}
