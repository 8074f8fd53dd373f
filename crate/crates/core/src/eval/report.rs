use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::changepoint::ChangePointScore;
use super::detection::{average_precision, Prediction};
use crate::dataio::GroundTruth;
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLDS: [f64; 7] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    /// mAP at each threshold, aligned with `thresholds`.
    pub map: Vec<f64>,
    pub average_map: f64,
    /// AP per class that has ground truth, aligned with `thresholds`.
    pub class_ap: BTreeMap<usize, Vec<f64>>,
    pub changepoints: Option<(usize, ChangePointScore)>,
}

impl EvalReport {
    pub fn with_changepoints(mut self, tolerance: usize, score: ChangePointScore) -> Self {
        self.changepoints = Some((tolerance, score));
        self
    }

    /// One `key=value` line per metric.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (t, m) in self.thresholds.iter().zip(&self.map) {
            let _ = writeln!(out, "map@{t:.2}={m}");
        }
        let _ = writeln!(out, "avg_map={}", self.average_map);
        for (c, aps) in &self.class_ap {
            for (t, ap) in self.thresholds.iter().zip(aps) {
                let _ = writeln!(out, "ap.class{c}@{t:.2}={ap}");
            }
        }
        if let Some((w, s)) = &self.changepoints {
            let _ = writeln!(out, "cp_tolerance={w}");
            let _ = writeln!(out, "cp_precision={}", s.precision);
            let _ = writeln!(out, "cp_recall={}", s.recall);
            let _ = writeln!(out, "cp_f1={}", s.f1);
        }
        out
    }

    /// Per-class AP table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class_id,iou,ap\n");
        for (c, aps) in &self.class_ap {
            for (t, ap) in self.thresholds.iter().zip(aps) {
                let _ = writeln!(out, "{c},{t:.2},{ap}");
            }
        }
        out
    }
}

/// Mean AP over the classes present in `truth`, per threshold, then averaged.
pub fn map_report(predictions: &[Prediction], truth: &GroundTruth, thresholds: &[f64]) -> Result<EvalReport> {
    if thresholds.is_empty() {
        return Err(Error::Eval("no IoU thresholds given".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Eval(format!("IoU threshold {t} outside [0, 1]")));
    }
    let classes: BTreeSet<usize> = truth
        .videos
        .values()
        .flat_map(|v| v.annotations.iter().map(|a| a.class_id))
        .collect();
    if classes.is_empty() {
        return Err(Error::Eval("ground truth contains no annotations".into()));
    }
    let class_ap: BTreeMap<usize, Vec<f64>> = classes
        .iter()
        .map(|&c| {
            let aps = thresholds
                .iter()
                .map(|&t| average_precision(predictions, truth, t, c).expect("class has ground truth"))
                .collect();
            (c, aps)
        })
        .collect();
    let map: Vec<f64> = (0..thresholds.len())
        .map(|i| class_ap.values().map(|aps| aps[i]).sum::<f64>() / class_ap.len() as f64)
        .collect();
    let average_map = map.iter().sum::<f64>() / map.len() as f64;
    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        map,
        average_map,
        class_ap,
        changepoints: None,
    })
}
