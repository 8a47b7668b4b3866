//! Evaluation against ground truth: matching, precision/recall reports,
//! confusion matrices and threshold sweeps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detection::BoxF;
use crate::error::{Error, Result};

/// Annotated object in one image. Ground truth is evaluation-only input;
/// the learning pipeline never reads it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GtObject {
    pub category: String,
    pub bbox: BoxF,
    /// Optional named part boxes.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parts: BTreeMap<String, BoxF>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GtImage {
    pub file: String,
    pub objects: Vec<GtObject>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub images: Vec<GtImage>,
}

impl GroundTruth {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let data = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&data).map_err(|e| Error::ModelFormat(format!("ground truth: {e}")))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let data = serde_json::to_string_pretty(self).expect("ground truth serializes");
        std::fs::write(path, data).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// A detection reduced to what matching needs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: BoxF,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchCounts {
    pub fn add(&mut self, other: &MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Metrics with the definitional formulas applied to one counts triple.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub counts: MatchCounts,
    pub precision: f64,
    pub recall: f64,
}

impl MetricsReport {
    pub fn from_counts(counts: MatchCounts) -> Self {
        let tp = counts.tp as f64;
        let precision = if counts.tp + counts.fp == 0 {
            0.0
        } else {
            tp / (counts.tp + counts.fp) as f64
        };
        let recall = if counts.tp + counts.fn_ == 0 {
            0.0
        } else {
            tp / (counts.tp + counts.fn_) as f64
        };
        Self {
            counts,
            precision,
            recall,
        }
    }
}

/// Greedy one-to-one matching for one image: detections in descending
/// score order claim the unclaimed truth box of highest overlap at or
/// above the threshold. Ties in score break on box coordinates so the
/// result is independent of input order.
pub fn match_detections(
    detections: &[ScoredBox],
    truths: &[BoxF],
    iou_threshold: f64,
) -> MatchCounts {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        let da = &detections[a];
        let db = &detections[b];
        db.score
            .partial_cmp(&da.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(da.bbox.x.partial_cmp(&db.bbox.x).unwrap_or(std::cmp::Ordering::Equal))
            .then(da.bbox.y.partial_cmp(&db.bbox.y).unwrap_or(std::cmp::Ordering::Equal))
            .then(da.bbox.w.partial_cmp(&db.bbox.w).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut claimed = vec![false; truths.len()];
    let mut tp = 0;
    for &i in &order {
        let mut best: Option<(usize, f64)> = None;
        for (t, tb) in truths.iter().enumerate() {
            if claimed[t] {
                continue;
            }
            let iou = detections[i].bbox.iou(tb);
            if iou >= iou_threshold && best.map_or(true, |(_, b)| iou > b) {
                best = Some((t, iou));
            }
        }
        if let Some((t, _)) = best {
            claimed[t] = true;
            tp += 1;
        }
    }
    MatchCounts {
        tp,
        fp: detections.len() - tp,
        fn_: truths.len() - tp,
    }
}

/// Aggregate matching over an image set (detections and truths aligned by
/// index).
pub fn match_corpus(
    per_image_detections: &[Vec<ScoredBox>],
    per_image_truths: &[Vec<BoxF>],
    iou_threshold: f64,
) -> MetricsReport {
    assert_eq!(
        per_image_detections.len(),
        per_image_truths.len(),
        "detections and truth refer to different image sets"
    );
    let mut counts = MatchCounts::default();
    for (dets, truths) in per_image_detections.iter().zip(per_image_truths) {
        counts.add(&match_detections(dets, truths, iou_threshold));
    }
    MetricsReport::from_counts(counts)
}

/// Entry (i, j): fraction of category-i query images in which model j
/// emitted at least one detection. `NaN` rows flag empty query sets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub categories: Vec<String>,
    /// Row-major: rows = query category, columns = model.
    pub rates: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    /// `hits[i][j]` = number of category-i images with >= 1 detection by
    /// model j; `totals[i]` = number of category-i images.
    pub fn from_hits(categories: Vec<String>, hits: &[Vec<usize>], totals: &[usize]) -> Self {
        let rates = hits
            .iter()
            .zip(totals)
            .map(|(row, &n)| {
                row.iter()
                    .map(|&h| {
                        if n == 0 {
                            f64::NAN
                        } else {
                            h as f64 / n as f64
                        }
                    })
                    .collect()
            })
            .collect();
        Self { categories, rates }
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("query\\model");
        for c in &self.categories {
            out.push_str(&format!(" {c:>10}"));
        }
        out.push('\n');
        for (i, c) in self.categories.iter().enumerate() {
            out.push_str(&format!("{c:>11}"));
            for v in &self.rates[i] {
                if v.is_nan() {
                    out.push_str("        NaN");
                } else {
                    out.push_str(&format!(" {v:>10.3}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CurvePoint {
    pub cutoff: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
}

/// Precision/recall at each score cutoff (detections below the cutoff are
/// dropped before matching). Recall is monotone as the cutoff decreases.
pub fn threshold_sweep(
    per_image_detections: &[Vec<ScoredBox>],
    per_image_truths: &[Vec<BoxF>],
    iou_threshold: f64,
    cutoffs: &[f64],
) -> Vec<CurvePoint> {
    let mut points = Vec::with_capacity(cutoffs.len());
    for &cut in cutoffs {
        assert!(cut.is_finite(), "score cutoffs must be finite");
        let filtered: Vec<Vec<ScoredBox>> = per_image_detections
            .iter()
            .map(|dets| dets.iter().filter(|d| d.score >= cut).copied().collect())
            .collect();
        let report = match_corpus(&filtered, per_image_truths, iou_threshold);
        points.push(CurvePoint {
            cutoff: cut,
            precision: report.precision,
            recall: report.recall,
            tp: report.counts.tp,
            fp: report.counts.fp,
        });
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoxF {
        BoxF { x, y, w, h }
    }

    fn sb(b: BoxF, score: f64) -> ScoredBox {
        ScoredBox { bbox: b, score }
    }

    #[test]
    fn perfect_detections_have_no_errors() {
        let truths = vec![bx(0.0, 0.0, 10.0, 10.0), bx(50.0, 0.0, 10.0, 10.0)];
        let dets: Vec<ScoredBox> = truths.iter().map(|b| sb(*b, 1.0)).collect();
        let c = match_detections(&dets, &truths, 0.5);
        assert_eq!(c, MatchCounts { tp: 2, fp: 0, fn_: 0 });
    }

    #[test]
    fn zero_detections_count_all_truths_missed() {
        let truths = vec![bx(0.0, 0.0, 10.0, 10.0); 5];
        let c = match_detections(&[], &truths, 0.5);
        assert_eq!(c, MatchCounts { tp: 0, fp: 0, fn_: 5 });
    }

    #[test]
    fn greedy_matching_equals_optimal_on_small_instance() {
        // 3 detections over 2 truths, one overlap below threshold
        let truths = vec![bx(0.0, 0.0, 10.0, 10.0), bx(20.0, 0.0, 10.0, 10.0)];
        let dets = vec![
            sb(bx(1.0, 0.0, 10.0, 10.0), 0.9),  // matches truth 0
            sb(bx(21.0, 0.0, 10.0, 10.0), 0.8), // matches truth 1
            sb(bx(8.0, 8.0, 10.0, 10.0), 0.7),  // below threshold on both
        ];
        let c = match_detections(&dets, &truths, 0.5);

        // oracle: exhaustive one-to-one assignment maximizing matches
        let candidates: Vec<Vec<usize>> = dets
            .iter()
            .map(|d| {
                truths
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| d.bbox.iou(t) >= 0.5)
                    .map(|(t, _)| t)
                    .collect()
            })
            .collect();
        let mut best = 0;
        // brute force over assignments of each detection to a truth or none
        let mut stack = vec![(0usize, 0u32, 0usize)];
        while let Some((i, used, tp)) = stack.pop() {
            if i == dets.len() {
                best = best.max(tp);
                continue;
            }
            stack.push((i + 1, used, tp));
            for &t in &candidates[i] {
                if used & (1 << t) == 0 {
                    stack.push((i + 1, used | (1 << t), tp + 1));
                }
            }
        }
        assert_eq!(c.tp, best);
        assert_eq!(c.fp, dets.len() - best);
        assert_eq!(c.fn_, truths.len() - best);
    }

    #[test]
    fn matching_is_stable_under_input_permutation() {
        let truths = vec![bx(0.0, 0.0, 10.0, 10.0)];
        let a = sb(bx(0.0, 0.0, 10.0, 10.0), 1.0);
        let b = sb(bx(2.0, 0.0, 10.0, 10.0), 1.0);
        let c1 = match_detections(&[a, b], &truths, 0.3);
        let c2 = match_detections(&[b, a], &truths, 0.3);
        assert_eq!(c1, c2);
    }

    #[test]
    fn published_face_detection_arithmetic() {
        // definitional check on published counts: TP=2965, FP=54,
        // positives=3306 -> precision 2965/3019 = 98.2%, recall 89.7%
        let report = MetricsReport::from_counts(MatchCounts {
            tp: 2965,
            fp: 54,
            fn_: 3306 - 2965,
        });
        assert_eq!(report.precision, 2965.0 / 3019.0);
        assert_eq!(report.recall, 2965.0 / 3306.0);
        assert_eq!((report.precision * 1000.0).round() / 10.0, 98.2);
        assert_eq!((report.recall * 1000.0).round() / 10.0, 89.7);
    }

    #[test]
    fn confusion_matrix_rates_and_nan_flag() {
        let m = ConfusionMatrix::from_hits(
            vec!["a".into(), "b".into()],
            &[vec![9, 1], vec![0, 0]],
            &[10, 0],
        );
        assert_eq!(m.rates[0][0], 0.9);
        assert!(m.rates[1][0].is_nan());
    }

    #[test]
    fn sweep_matches_per_cutoff_recomputation() {
        let truths = vec![vec![bx(0.0, 0.0, 10.0, 10.0), bx(30.0, 0.0, 10.0, 10.0)]];
        let dets = vec![vec![
            sb(bx(0.0, 0.0, 10.0, 10.0), 3.0),
            sb(bx(30.0, 0.0, 10.0, 10.0), 1.0),
            sb(bx(60.0, 0.0, 10.0, 10.0), 2.0),
        ]];
        let cutoffs = [4.0, 2.5, 1.5, 0.0];
        let points = threshold_sweep(&dets, &truths, 0.5, &cutoffs);
        // cutoff above max score -> recall 0
        assert_eq!(points[0].recall, 0.0);
        // cutoff below min -> the matcher's raw recall
        let raw = match_corpus(&dets, &truths, 0.5);
        assert_eq!(points[3].recall, raw.recall);
        // recall monotone in decreasing cutoff
        for w in points.windows(2) {
            assert!(w[1].recall >= w[0].recall);
        }
        // oracle: recompute each point independently
        for (p, &cut) in points.iter().zip(&cutoffs) {
            let filtered: Vec<Vec<ScoredBox>> = dets
                .iter()
                .map(|ds| ds.iter().filter(|d| d.score >= cut).copied().collect())
                .collect();
            let r = match_corpus(&filtered, &truths, 0.5);
            assert_eq!(p.precision, r.precision);
            assert_eq!(p.recall, r.recall);
        }
    }
}
