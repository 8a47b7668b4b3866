//! Streaming pairwise statistics over co-detected word pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dictionary::WordDetection;
use crate::util::RunningMoments;

/// Running moments of the three pair statistics, stored once per
/// unordered pair under the canonical ordering i < j.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct PairAccum {
    /// (x_j - x_i) / (ex_i + ex_j)
    pub off_x: RunningMoments,
    /// (y_j - y_i) / (ey_i + ey_j)
    pub off_y: RunningMoments,
    /// log(ex_j / ex_i)
    pub log_scale: RunningMoments,
}

impl PairAccum {
    pub fn count(&self) -> u64 {
        self.off_x.count
    }
}

/// Corpus-wide pair statistics plus per-word occurrence and extent
/// statistics (the latter provide the per-node scale normalization used
/// when assembling precision matrices at learning time).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PairStats {
    pairs: BTreeMap<(usize, usize), PairAccum>,
    pub word_counts: Vec<u64>,
    word_log_extent_x: Vec<RunningMoments>,
    word_log_extent_y: Vec<RunningMoments>,
    pub image_count: u64,
    /// Samples dropped because of non-positive extents.
    pub skipped_samples: u64,
}

impl PairStats {
    pub fn new(word_universe: usize) -> Self {
        Self {
            pairs: BTreeMap::new(),
            word_counts: vec![0; word_universe],
            word_log_extent_x: vec![RunningMoments::default(); word_universe],
            word_log_extent_y: vec![RunningMoments::default(); word_universe],
            image_count: 0,
            skipped_samples: 0,
        }
    }

    pub fn word_universe(&self) -> usize {
        self.word_counts.len()
    }

    /// Accumulate every co-occurring pair of distinct words in one image.
    pub fn push_image(&mut self, detections: &[WordDetection]) {
        self.image_count += 1;
        for d in detections {
            if d.word < self.word_counts.len() {
                self.word_counts[d.word] += 1;
                if d.extent_x > 0.0 && d.extent_y > 0.0 {
                    self.word_log_extent_x[d.word].push(d.extent_x.ln());
                    self.word_log_extent_y[d.word].push(d.extent_y.ln());
                }
            }
        }
        for (a, da) in detections.iter().enumerate() {
            for db in detections.iter().skip(a + 1) {
                if da.word == db.word {
                    continue;
                }
                // orient by ascending word id so the canonical pair is fed
                // consistently regardless of detection order
                let (lo, hi) = if da.word < db.word { (da, db) } else { (db, da) };
                if lo.extent_x <= 0.0
                    || lo.extent_y <= 0.0
                    || hi.extent_x <= 0.0
                    || hi.extent_y <= 0.0
                {
                    self.skipped_samples += 1;
                    continue;
                }
                let acc = self.pairs.entry((lo.word, hi.word)).or_default();
                acc.off_x
                    .push((hi.x - lo.x) / (lo.extent_x + hi.extent_x));
                acc.off_y
                    .push((hi.y - lo.y) / (lo.extent_y + hi.extent_y));
                acc.log_scale.push((hi.extent_x / lo.extent_x).ln());
            }
        }
    }

    /// Commutative merge of independently accumulated batches.
    pub fn merge(&mut self, other: &PairStats) {
        assert_eq!(self.word_counts.len(), other.word_counts.len());
        for (k, v) in &other.pairs {
            let acc = self.pairs.entry(*k).or_default();
            acc.off_x.merge(&v.off_x);
            acc.off_y.merge(&v.off_y);
            acc.log_scale.merge(&v.log_scale);
        }
        for (a, b) in self.word_counts.iter_mut().zip(&other.word_counts) {
            *a += b;
        }
        for (a, b) in self
            .word_log_extent_x
            .iter_mut()
            .zip(&other.word_log_extent_x)
        {
            a.merge(b);
        }
        for (a, b) in self
            .word_log_extent_y
            .iter_mut()
            .zip(&other.word_log_extent_y)
        {
            a.merge(b);
        }
        self.image_count += other.image_count;
        self.skipped_samples += other.skipped_samples;
    }

    /// Canonical accumulator for the unordered pair {i, j}.
    pub fn pair(&self, i: usize, j: usize) -> Option<&PairAccum> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.pairs.get(&key)
    }

    /// Directed statistics i -> j: means flip sign when the canonical
    /// storage order is reversed; variances are direction-free.
    /// Returns (mean_x, mean_y, mean_log_scale, var_x, var_y, var_log_scale, n).
    pub fn directed(&self, i: usize, j: usize) -> Option<(f64, f64, f64, f64, f64, f64, u64)> {
        let acc = self.pair(i, j)?;
        let sign = if i < j { 1.0 } else { -1.0 };
        Some((
            sign * acc.off_x.mean,
            sign * acc.off_y.mean,
            sign * acc.log_scale.mean,
            acc.off_x.variance(),
            acc.off_y.variance(),
            acc.log_scale.variance(),
            acc.count(),
        ))
    }

    /// Var(off_x) + Var(off_y) + Var(log scale ratio); `None` when the
    /// pair has fewer than `min_support` samples (treated as infinite).
    pub fn combined_variance(&self, i: usize, j: usize, min_support: u64) -> Option<f64> {
        let acc = self.pair(i, j)?;
        if acc.count() < min_support {
            return None;
        }
        Some(acc.off_x.variance() + acc.off_y.variance() + acc.log_scale.variance())
    }

    /// Geometric mean of the observed x-extent of a word (its learning-
    /// time scale), or `fallback` when the word was never seen.
    pub fn mean_extent_x(&self, word: usize, fallback: f64) -> f64 {
        let m = &self.word_log_extent_x[word];
        if m.count == 0 {
            fallback
        } else {
            m.mean.exp()
        }
    }

    pub fn mean_extent_y(&self, word: usize, fallback: f64) -> f64 {
        let m = &self.word_log_extent_y[word];
        if m.count == 0 {
            fallback
        } else {
            m.mean.exp()
        }
    }

    pub fn iter_pairs(&self) -> impl Iterator<Item = (&(usize, usize), &PairAccum)> {
        self.pairs.iter()
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    /// Plain-text table (pair, n, means, variances), sorted by pair.
    pub fn to_table(&self) -> String {
        let mut out = String::from(
            "# i j n mean_off_x mean_off_y mean_log_scale var_off_x var_off_y var_log_scale\n",
        );
        for ((i, j), acc) in &self.pairs {
            out.push_str(&format!(
                "{} {} {} {:.9} {:.9} {:.9} {:.9e} {:.9e} {:.9e}\n",
                i,
                j,
                acc.count(),
                acc.off_x.mean,
                acc.off_y.mean,
                acc.log_scale.mean,
                acc.off_x.variance(),
                acc.off_y.variance(),
                acc.log_scale.variance()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(word: usize, x: f64, y: f64, ex: f64, ey: f64) -> WordDetection {
        WordDetection {
            word,
            x,
            y,
            extent_x: ex,
            extent_y: ey,
            distance: 0.0,
        }
    }

    #[test]
    fn direct_formula_example() {
        // x_i = 100, x_j = 160, ex_i = 20, ex_j = 40 -> off_x = 1.0
        let mut stats = PairStats::new(4);
        stats.push_image(&[det(0, 100.0, 0.0, 20.0, 20.0), det(1, 160.0, 0.0, 40.0, 40.0)]);
        let acc = stats.pair(0, 1).unwrap();
        assert!((acc.off_x.mean - 1.0).abs() < 1e-12);
        // extent ratio 40/20 -> log 2
        assert!((acc.log_scale.mean - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_extent_sample_skipped_and_counted() {
        let mut stats = PairStats::new(4);
        stats.push_image(&[det(0, 0.0, 0.0, 0.0, 10.0), det(1, 5.0, 0.0, 10.0, 10.0)]);
        assert_eq!(stats.skipped_samples, 1);
        assert!(stats.pair(0, 1).is_none());
    }

    #[test]
    fn rigid_pair_has_zero_combined_variance() {
        let mut stats = PairStats::new(4);
        for k in 0..30 {
            let base = k as f64 * 13.0;
            stats.push_image(&[
                det(0, base, base, 10.0, 10.0),
                det(1, base + 15.0, base + 5.0, 20.0, 20.0),
            ]);
        }
        let v = stats.combined_variance(0, 1, 20).unwrap();
        assert!(v.abs() < 1e-12, "combined variance {v}");
    }

    #[test]
    fn pair_seen_once_is_excluded() {
        let mut stats = PairStats::new(4);
        stats.push_image(&[det(0, 0.0, 0.0, 10.0, 10.0), det(1, 5.0, 0.0, 10.0, 10.0)]);
        assert!(stats.combined_variance(0, 1, 2).is_none());
    }

    #[test]
    fn directed_view_is_antisymmetric() {
        let mut stats = PairStats::new(4);
        for k in 0..10 {
            stats.push_image(&[
                det(2, k as f64, 0.0, 10.0, 10.0),
                det(3, k as f64 + 30.0 + k as f64 * 0.1, 2.0, 15.0, 15.0),
            ]);
        }
        let fwd = stats.directed(2, 3).unwrap();
        let bwd = stats.directed(3, 2).unwrap();
        assert!((fwd.0 + bwd.0).abs() < 1e-9);
        assert!((fwd.2 + bwd.2).abs() < 1e-9);
        assert!((fwd.3 - bwd.3).abs() < 1e-12);
        assert_eq!(fwd.6, bwd.6);
    }

    #[test]
    fn merge_is_order_independent() {
        let images: Vec<Vec<WordDetection>> = (0..24)
            .map(|k| {
                let t = k as f64;
                vec![
                    det(0, t * 3.0, t, 10.0 + (t * 0.7).sin(), 10.0),
                    det(1, t * 3.0 + 20.0 + (t * 1.3).cos(), t + 4.0, 12.0, 12.0),
                    det(2, t * 3.0 - 8.0, t + 9.0, 9.0, 9.0),
                ]
            })
            .collect();
        let mut seq = PairStats::new(4);
        for img in &images {
            seq.push_image(img);
        }
        // merge image-wise batches in reversed order
        let mut rev = PairStats::new(4);
        for img in images.iter().rev() {
            let mut batch = PairStats::new(4);
            batch.push_image(img);
            rev.merge(&batch);
        }
        for (key, a) in seq.iter_pairs() {
            let b = rev.pair(key.0, key.1).unwrap();
            assert_eq!(a.count(), b.count());
            assert!((a.off_x.mean - b.off_x.mean).abs() < 1e-9);
            assert!((a.off_x.variance() - b.off_x.variance()).abs() < 1e-9);
            assert!((a.log_scale.variance() - b.log_scale.variance()).abs() < 1e-9);
        }
    }

    #[test]
    fn statistics_are_translation_and_scale_invariant() {
        let base = vec![
            det(0, 12.0, 40.0, 10.0, 8.0),
            det(1, 50.0, 70.0, 20.0, 16.0),
            det(2, 90.0, 10.0, 14.0, 11.2),
        ];
        let transform = |d: &WordDetection, dx: f64, dy: f64, alpha: f64| WordDetection {
            word: d.word,
            x: (d.x + dx) * alpha,
            y: (d.y + dy) * alpha,
            extent_x: d.extent_x * alpha,
            extent_y: d.extent_y * alpha,
            distance: d.distance,
        };
        let mut a = PairStats::new(4);
        a.push_image(&base);
        let moved: Vec<WordDetection> =
            base.iter().map(|d| transform(d, 137.0, -55.0, 3.7)).collect();
        let mut b = PairStats::new(4);
        b.push_image(&moved);
        for (key, pa) in a.iter_pairs() {
            let pb = b.pair(key.0, key.1).unwrap();
            assert!((pa.off_x.mean - pb.off_x.mean).abs() < 1e-12);
            assert!((pa.off_y.mean - pb.off_y.mean).abs() < 1e-12);
            assert!((pa.log_scale.mean - pb.log_scale.mean).abs() < 1e-12);
        }
    }
}
