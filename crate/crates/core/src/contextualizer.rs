//! Lineage-aware refinement: an LF keeps its votes only within a radius of
//! the development example it was written from. The radius is a
//! nearest-rank percentile of the distances from that example to the train
//! split.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Example};
use crate::distance::{distance, DistanceKind};
use crate::error::{Error, Result};
use crate::lf::{apply_lf, LabelingFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementConfig {
    pub enabled: bool,
    /// `p` in (0, 100].
    pub percentile: f64,
    pub distance: DistanceKind,
    /// Pick `percentile` from `grid` by validation soft-label accuracy
    /// (simulated runs only).
    pub tune: bool,
    pub grid: Vec<f64>,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            enabled: false,
            percentile: 100.0,
            distance: DistanceKind::Cosine,
            tune: false,
            grid: vec![25.0, 50.0, 75.0, 100.0],
        }
    }
}

fn valid_percentile(p: f64) -> bool {
    p > 0.0 && p <= 100.0
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if !valid_percentile(self.percentile) {
            return Err(Error::Config(format!(
                "refinement.percentile must be in (0, 100], got {}",
                self.percentile
            )));
        }
        if self.tune && (self.grid.is_empty() || !self.grid.iter().all(|&p| valid_percentile(p))) {
            return Err(Error::Config("refinement.grid must hold percentiles in (0, 100]".into()));
        }
        Ok(())
    }
}

/// Distances from the LF's lineage example to every train example, in train
/// order.
pub fn lineage_distances(lf: &LabelingFunction, corpus: &Corpus, kind: DistanceKind) -> Result<Vec<f64>> {
    let anchor = &corpus.example(lf.lineage_example).features;
    corpus
        .splits
        .train
        .iter()
        .map(|&i| distance(anchor, &corpus.example(i).features, kind))
        .collect()
}

/// Nearest-rank percentile: the value at 0-based index `ceil(p/100·n) - 1` of
/// the ascending sort.
pub fn nearest_rank(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = (p * n as f64 / 100.0).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn refinement_radius(lf: &LabelingFunction, corpus: &Corpus, config: &RefinementConfig) -> Result<f64> {
    refinement_radius_at(lf, corpus, config.distance, config.percentile)
}

pub fn refinement_radius_at(lf: &LabelingFunction, corpus: &Corpus, kind: DistanceKind, p: f64) -> Result<f64> {
    let d = lineage_distances(lf, corpus, kind)?;
    if d.is_empty() {
        return Err(Error::TooFewExamples { needed: 1, got: 0 });
    }
    Ok(nearest_rank(&d, p))
}

/// An LF restricted to a ball around its lineage example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedLf {
    pub lf: LabelingFunction,
    pub radius: f64,
    pub kind: DistanceKind,
}

impl RefinedLf {
    pub fn vote(&self, corpus: &Corpus, x: &Example) -> Result<i8> {
        let v = apply_lf(&self.lf, x);
        if v == 0 || x.id == self.lf.lineage_example {
            return Ok(v);
        }
        let anchor = &corpus.example(self.lf.lineage_example).features;
        let d = distance(anchor, &x.features, self.kind)?;
        Ok(if d <= self.radius { v } else { 0 })
    }
}

pub fn refine_lf(lf: &LabelingFunction, radius: f64, config: &RefinementConfig) -> RefinedLf {
    debug_assert!(radius >= 0.0);
    RefinedLf {
        lf: *lf,
        radius,
        kind: config.distance,
    }
}

/// Coverage and accuracy of one LF in one distance bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityRow {
    pub lf_id: usize,
    pub quartile: usize,
    pub coverage: f64,
    /// `None` when the LF covers nothing in the bucket.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub buckets: usize,
    pub rows: Vec<LocalityRow>,
    /// Per bucket: mean coverage over LFs, mean accuracy over LFs with a
    /// defined accuracy in that bucket.
    pub mean_coverage: Vec<f64>,
    pub mean_accuracy: Vec<Option<f64>>,
}

impl LocalityReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        fn fmt(a: Option<f64>) -> String {
            a.map(|v| v.to_string()).unwrap_or_default()
        }
        writeln!(w, "lf_id,quartile,coverage,accuracy")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.lf_id, r.quartile + 1, r.coverage, fmt(r.accuracy))?;
        }
        for q in 0..self.buckets {
            writeln!(w, "mean,{},{},{}", q + 1, self.mean_coverage[q], fmt(self.mean_accuracy[q]))?;
        }
        Ok(())
    }
}

/// Splits `n` sorted positions into `k` contiguous buckets whose sizes differ
/// by at most one.
pub fn equal_count_buckets(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|q| {
            let len = base + usize::from(q < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// For each LF, orders the train split by distance to the lineage example,
/// cuts it into `buckets` equal-count groups and measures the unrefined LF's
/// coverage and gold accuracy in each.
pub fn locality_report(
    lfs: &[LabelingFunction],
    corpus: &Corpus,
    kind: DistanceKind,
    buckets: usize,
) -> Result<LocalityReport> {
    let train = &corpus.splits.train;
    if train.len() < buckets {
        return Err(Error::TooFewExamples {
            needed: buckets,
            got: train.len(),
        });
    }
    let missing = train.iter().filter(|&&i| corpus.gold(i).is_none()).count();
    if missing > 0 {
        return Err(Error::MissingGoldOnSplit(missing));
    }
    let ranges = equal_count_buckets(train.len(), buckets);
    let mut rows = Vec::with_capacity(lfs.len() * buckets);
    for (lf_id, lf) in lfs.iter().enumerate() {
        let d = lineage_distances(lf, corpus, kind)?;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(train[a].cmp(&train[b])));
        for (q, range) in ranges.iter().enumerate() {
            let (mut covered, mut correct) = (0usize, 0usize);
            for &pos in &order[range.clone()] {
                let x = corpus.example(train[pos]);
                let v = apply_lf(lf, x);
                if v != 0 {
                    covered += 1;
                    if Some(lf.label) == x.gold {
                        correct += 1;
                    }
                }
            }
            rows.push(LocalityRow {
                lf_id,
                quartile: q,
                coverage: covered as f64 / range.len() as f64,
                accuracy: (covered > 0).then(|| correct as f64 / covered as f64),
            });
        }
    }
    let mut mean_coverage = vec![0.0; buckets];
    let mut mean_accuracy = vec![None; buckets];
    for q in 0..buckets {
        let in_bucket: Vec<&LocalityRow> = rows.iter().filter(|r| r.quartile == q).collect();
        if !in_bucket.is_empty() {
            mean_coverage[q] = in_bucket.iter().map(|r| r.coverage).sum::<f64>() / in_bucket.len() as f64;
        }
        let accs: Vec<f64> = in_bucket.iter().filter_map(|r| r.accuracy).collect();
        if !accs.is_empty() {
            mean_accuracy[q] = Some(accs.iter().sum::<f64>() / accs.len() as f64);
        }
    }
    Ok(LocalityReport {
        buckets,
        rows,
        mean_coverage,
        mean_accuracy,
    })
}
