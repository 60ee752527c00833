use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::Metric;
use crate::structure::TableStructure;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitScore {
    pub n: usize,
    /// `None` for an empty split.
    pub mean: Option<f64>,
}

impl SplitScore {
    fn of(scores: impl Iterator<Item = f64>) -> Self {
        let (n, sum) = scores.fold((0, 0.0), |(n, s), v| (n + 1, s + v));
        SplitScore {
            n,
            mean: (n > 0).then(|| sum / n as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub all: SplitScore,
    /// Ground truth without merged cells.
    pub simple: SplitScore,
    /// Ground truth with at least one merged cell.
    pub complex: SplitScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub complex: bool,
    pub scores: IndexMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub n: usize,
    pub metrics: Vec<MetricSummary>,
    pub samples: Vec<SampleScore>,
}

impl EvalReport {
    pub fn summary(&self, m: Metric) -> Option<&MetricSummary> {
        self.metrics.iter().find(|s| s.metric == m)
    }
}

/// One prediction to score.
#[derive(Clone, Debug)]
pub struct ScoredPair<'a> {
    pub id: &'a str,
    pub pred: &'a TableStructure,
    pub gt: &'a TableStructure,
}

/// Aggregate and per-sample scores with the simple/complex split taken from
/// the ground truth.
pub fn evaluate(pairs: &[ScoredPair<'_>], metrics: &[Metric]) -> EvalReport {
    let samples: Vec<SampleScore> = pairs
        .iter()
        .map(|p| SampleScore {
            id: p.id.to_string(),
            complex: p.gt.is_complex(),
            scores: metrics.iter().map(|m| (m.name().to_string(), m.score(p.pred, p.gt))).collect(),
        })
        .collect();
    let summaries = metrics
        .iter()
        .map(|m| {
            let pick = |keep: fn(&SampleScore) -> bool| SplitScore::of(samples.iter().filter(|s| keep(s)).map(|s| s.scores[m.name()]));
            MetricSummary {
                metric: *m,
                all: pick(|_| true),
                simple: pick(|s| !s.complex),
                complex: pick(|s| s.complex),
            }
        })
        .collect();
    EvalReport {
        schema: REPORT_SCHEMA,
        n: samples.len(),
        metrics: summaries,
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_means() {
        let simple = TableStructure::from_anchors(1, 2, 0, &[(0, 0, 1, 1), (0, 1, 1, 1)]).unwrap();
        let merged = TableStructure::from_anchors(1, 2, 0, &[(0, 0, 1, 2)]).unwrap();
        let pairs = [
            ScoredPair { id: "a", pred: &simple, gt: &simple },
            ScoredPair { id: "b", pred: &merged, gt: &merged },
            ScoredPair { id: "c", pred: &simple, gt: &merged },
        ];
        let r = evaluate(&pairs, &[Metric::Steds, Metric::Car]);
        let s = r.summary(Metric::Steds).unwrap();
        assert_eq!(s.simple, SplitScore { n: 1, mean: Some(1.0) });
        assert_eq!(s.complex.n, 2);
        assert!(s.complex.mean.unwrap() < 1.0);
        assert_eq!(r.samples[2].scores.len(), 2);
        let empty = evaluate(&[], &[Metric::Grits]);
        assert_eq!(empty.metrics[0].all.mean, None);
    }
}
