//! Point-level precision, recall and F1 against ground truth.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cloud::Label;
use crate::error::{Error, Result};
use crate::threshold::Channel;

/// Counts and scores of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame_id: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// `tp / (tp + fp)`, absent when nothing was predicted.
    pub precision: Option<f64>,
    /// `tp / (tp + fn)`, absent when there is nothing to find.
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub channel: Option<Channel>,
    pub frames: Vec<FrameScore>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean; zero when both scores are zero.
pub fn f1_score(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    let (p, r) = (precision?, recall?);
    Some(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
}

fn scores(tp: u64, fp: u64, fn_: u64) -> (Option<f64>, Option<f64>, Option<f64>) {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    (p, r, f1_score(p, r))
}

impl EvalReport {
    pub fn from_counts(frame_id: impl Into<String>, tp: u64, fp: u64, fn_: u64) -> Self {
        let (precision, recall, f1) = scores(tp, fp, fn_);
        EvalReport {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
            channel: None,
            frames: vec![FrameScore {
                frame_id: frame_id.into(),
                tp,
                fp,
                fn_,
                precision,
                recall,
                f1,
            }],
        }
    }

    pub fn with_channel(mut self, channel: Channel) -> Self {
        self.channel = Some(channel);
        self
    }

    /// Unweighted mean over frames of each defined per-frame score.
    pub fn macro_average(&self) -> (Option<f64>, Option<f64>, Option<f64>) {
        let mean = |get: fn(&FrameScore) -> Option<f64>| {
            let v: Vec<f64> = self.frames.iter().filter_map(get).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        (mean(|f| f.precision), mean(|f| f.recall), mean(|f| f.f1))
    }
}

/// Scores `predicted` against `truth`; only `marking` counts as positive.
pub fn evaluate(predicted: &[Label], truth: &[Label]) -> Result<EvalReport> {
    if predicted.len() != truth.len() {
        return Err(Error::Structural(format!(
            "{} predicted labels against {} ground-truth labels",
            predicted.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, t) in predicted.iter().zip(truth) {
        match (p.is_marking(), t.is_marking()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(EvalReport::from_counts("", tp, fp, fn_))
}

/// Micro-average: sums counts, then recomputes the scores. Frames are
/// concatenated in order.
pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport> {
    if reports.is_empty() {
        return Err(Error::Usage("cannot aggregate zero reports".into()));
    }
    let tp = reports.iter().map(|r| r.tp).sum();
    let fp = reports.iter().map(|r| r.fp).sum();
    let fn_ = reports.iter().map(|r| r.fn_).sum();
    let (precision, recall, f1) = scores(tp, fp, fn_);
    let channel = reports[0]
        .channel
        .filter(|c| reports.iter().all(|r| r.channel == Some(*c)));
    Ok(EvalReport {
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
        channel,
        frames: reports.iter().flat_map(|r| r.frames.iter().cloned()).collect(),
    })
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub channel: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl ReportRow {
    pub fn new(dataset: impl Into<String>, report: &EvalReport) -> Self {
        ReportRow {
            dataset: dataset.into(),
            channel: report.channel.map(|c| c.to_string()).unwrap_or_else(|| "-".into()),
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
        }
    }
}

/// Tab-separated table with a header row; scores in percent, `-` when
/// undefined.
pub fn render_table(rows: &[ReportRow]) -> String {
    let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v));
    let mut out = String::from("dataset\tchannel\tprecision\trecall\tf1\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.dataset,
            r.channel,
            pct(r.precision),
            pct(r.recall),
            pct(r.f1)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    fn labels(tp: usize, fp: usize, fn_: usize, tn: usize) -> (Vec<Label>, Vec<Label>) {
        let mut p = Vec::new();
        let mut t = Vec::new();
        for _ in 0..tp {
            p.push(Marking);
            t.push(Marking);
        }
        for _ in 0..fp {
            p.push(Marking);
            t.push(Road);
        }
        for _ in 0..fn_ {
            p.push(Other);
            t.push(Marking);
        }
        for _ in 0..tn {
            p.push(Other);
            t.push(Other);
        }
        (p, t)
    }

    #[test]
    fn ninety_five_percent() {
        let (p, t) = labels(95, 5, 5, 40);
        let r = evaluate(&p, &t).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (95, 5, 5));
        assert!((r.precision.unwrap() - 0.95).abs() < 1e-12);
        assert!((r.recall.unwrap() - 0.95).abs() < 1e-12);
        assert!((r.f1.unwrap() - 0.95).abs() < 1e-12);
    }

    #[test]
    fn nothing_to_score() {
        let r = evaluate(&[Other, Road], &[Road, Other]).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (None, None, None));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(evaluate(&[Other], &[]), Err(Error::Structural(_))));
    }

    #[test]
    fn aggregate_sums_counts() {
        let a = EvalReport::from_counts("a", 10, 0, 0);
        let b = EvalReport::from_counts("b", 0, 10, 0);
        let m = aggregate(&[a.clone(), b]).unwrap();
        assert_eq!(m.precision, Some(0.5));
        assert_eq!(m.recall, Some(1.0));
        assert_eq!(m.frames.len(), 2);
        assert_eq!(aggregate(std::slice::from_ref(&a)).unwrap(), a);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn table_layout() {
        let r = EvalReport::from_counts("x", 95, 5, 5).with_channel(Channel::Reflectivity);
        let t = render_table(&[ReportRow::new("test_track", &r)]);
        assert_eq!(
            t,
            "dataset\tchannel\tprecision\trecall\tf1\ntest_track\treflectivity\t95.00\t95.00\t95.00\n"
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pair() -> impl Strategy<Value = (Vec<Label>, Vec<Label>)> {
            let label = prop_oneof![Just(Road), Just(Marking), Just(Other)];
            proptest::collection::vec((label.clone(), label), 0..200).prop_map(|v| v.into_iter().unzip())
        }

        proptest! {
            #[test]
            fn swap_symmetry((p, t) in pair()) {
                let a = evaluate(&p, &t).unwrap();
                let b = evaluate(&t, &p).unwrap();
                prop_assert_eq!((a.tp, a.fp, a.fn_), (b.tp, b.fn_, b.fp));
            }

            #[test]
            fn f1_between_p_and_r((p, t) in pair()) {
                let r = evaluate(&p, &t).unwrap();
                if let (Some(pr), Some(rc), Some(f)) = (r.precision, r.recall, r.f1) {
                    prop_assert!(f >= pr.min(rc) - 1e-12 && f <= pr.max(rc) + 1e-12);
                }
            }

            #[test]
            fn micro_equals_concatenation(frames in proptest::collection::vec(pair(), 1..8)) {
                let reports: Vec<EvalReport> = frames.iter().map(|(p, t)| evaluate(p, t).unwrap()).collect();
                let agg = aggregate(&reports).unwrap();
                let p: Vec<Label> = frames.iter().flat_map(|f| f.0.clone()).collect();
                let t: Vec<Label> = frames.iter().flat_map(|f| f.1.clone()).collect();
                let whole = evaluate(&p, &t).unwrap();
                prop_assert_eq!((agg.tp, agg.fp, agg.fn_), (whole.tp, whole.fp, whole.fn_));
                prop_assert_eq!((agg.precision, agg.recall, agg.f1), (whole.precision, whole.recall, whole.f1));
            }
        }
    }
}
