use super::lcs::{lcs_prune, LcsConfig};
use super::segment::Segment;
use crate::dfc::{detect_sequence, ChangePointSet, DfcModel};
use crate::efc::{cas_forward, Branch, CasMap, EfcModel};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Action class with the largest mean foreground-weighted logit over `[start, end)`.
fn interval_class(cas: &CasMap, start: usize, end: usize) -> usize {
    let n = (end - start) as f64;
    let mut best = (0, f64::NEG_INFINITY);
    for c in 0..cas.num_classes() {
        let m = (start..end)
            .map(|t| cas.logits.get(t, c) * cas.attention.get(t, Branch::Foreground.index()))
            .sum::<f64>()
            / n;
        if m > best.1 {
            best = (c, m);
        }
    }
    best.0
}

/// Intervals between consecutive cuts whose mean foreground attention reaches `threshold`.
pub(crate) fn kept_intervals(cuts: &[usize], fg: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    cuts.windows(2)
        .map(|w| (w[0], w[1]))
        .filter(|&(s, e)| e > s && fg[s..e].iter().sum::<f64>() / (e - s) as f64 >= threshold)
        .collect()
}

/// Turns change-points into scored action segments.
///
/// The sequence ends act as extra boundaries. Intervals whose mean foreground
/// attention reaches the threshold are kept; neighbours with the same class merge.
pub fn extract_segments(points: &ChangePointSet, cas: &CasMap, cfg: &LcsConfig) -> Result<Vec<Segment>> {
    let len = cas.len();
    if points.iter().any(|p| p > len) {
        return Err(Error::shape(
            "extract_segments",
            format!("points within [0, {len}]"),
            format!("{points:?}"),
        ));
    }
    let mut cuts = vec![0];
    cuts.extend(points.iter().filter(|&p| p > 0 && p < len));
    cuts.push(len);
    cuts.dedup();

    let probs = cas.probabilities();
    let mut spans: Vec<(usize, usize, usize)> = Vec::new();
    for (s, e) in kept_intervals(&cuts, &cas.branch_attention(Branch::Foreground), cfg.fg_threshold) {
        let c = interval_class(cas, s, e);
        match spans.last_mut() {
            Some(last) if last.1 == s && last.2 == c => last.1 = e,
            _ => spans.push((s, e, c)),
        }
    }
    spans
        .into_iter()
        .map(|(s, e, c)| {
            let score = (s..e).map(|t| probs.get(t, c)).sum::<f64>() / (e - s) as f64;
            Segment::new(s, e, c, score)
        })
        .collect()
}

/// Full inference on one video: detect, prune, classify snippets, extract.
pub fn localize(dfc: &DfcModel, efc: &EfcModel, x: &Matrix, cfg: &LcsConfig) -> Result<Vec<Segment>> {
    cfg.validate()?;
    let points = detect_sequence(dfc, x)?;
    let pruned = lcs_prune(&points, x, cfg)?;
    let cas = cas_forward(efc, x)?;
    extract_segments(&pruned, &cas, cfg)
}
