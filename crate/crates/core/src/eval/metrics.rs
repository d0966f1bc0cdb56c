use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::eval::LooPredictions;

/// Retrieval decision rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Criterion {
    /// Label of the nearest neighbour.
    Top1,
    /// Label held by at least `floor(n/2) + 1` of the top `n`.
    MajorityVote(usize),
}

impl Criterion {
    pub const STANDARD: [Criterion; 4] = [
        Criterion::Top1,
        Criterion::MajorityVote(3),
        Criterion::MajorityVote(5),
        Criterion::MajorityVote(10),
    ];

    /// Number of neighbours the rule looks at.
    pub fn depth(self) -> usize {
        match self {
            Criterion::Top1 => 1,
            Criterion::MajorityVote(n) => n,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::Top1 => f.write_str("top-1"),
            Criterion::MajorityVote(n) => write!(f, "MV@{n}"),
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("top-1") || s.eq_ignore_ascii_case("top1") {
            return Ok(Criterion::Top1);
        }
        let n = s
            .strip_prefix("MV@")
            .or_else(|| s.strip_prefix("mv@"))
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Invalid(format!("unknown criterion `{s}`")))?;
        Ok(Criterion::MajorityVote(n))
    }
}

impl TryFrom<String> for Criterion {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Criterion> for String {
    fn from(c: Criterion) -> String {
        c.to_string()
    }
}

/// Which representation a report was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    BinaryMonogram,
    RealMonogram,
    ImageUnimodal,
    SequenceUnimodal,
    ImageLatent,
    SequenceLatent,
}

impl Representation {
    pub fn tag(self) -> &'static str {
        match self {
            Representation::BinaryMonogram => "binary-monogram",
            Representation::RealMonogram => "real-monogram",
            Representation::ImageUnimodal => "image-unimodal",
            Representation::SequenceUnimodal => "sequence-unimodal",
            Representation::ImageLatent => "image-latent",
            Representation::SequenceLatent => "sequence-latent",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// How abstentions (no quorum) enter the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbstainPolicy {
    /// Abstentions count as wrong predictions.
    AsError,
    /// Abstained cases are dropped before scoring.
    Excluded,
}

impl fmt::Display for AbstainPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AbstainPolicy::AsError => "as-error",
            AbstainPolicy::Excluded => "excluded",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassCounts {
    /// Zero when nothing was predicted as this class.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2PR / (P + R)`, zero when `P + R = 0`.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Keyed by every class present in the truth labels.
    pub per_class: BTreeMap<String, ClassCounts>,
    /// Cases scored (after exclusion, if any).
    pub total: usize,
    pub abstained: usize,
}

/// Accuracy plus macro-averaged precision, recall and F1 over the classes
/// present in `truth`. `None` predictions are abstentions.
pub fn compute_metrics<S: AsRef<str>>(predictions: &[Option<String>], truth: &[S], policy: AbstainPolicy) -> Result<Metrics> {
    check_len(truth.len(), predictions.len())?;
    if truth.is_empty() {
        return Err(Error::Empty("prediction list"));
    }
    let classes: BTreeSet<&str> = truth.iter().map(AsRef::as_ref).collect();
    let mut per_class: BTreeMap<String, ClassCounts> =
        classes.iter().map(|&c| (c.to_owned(), ClassCounts::default())).collect();
    let mut correct = 0;
    let mut total = 0;
    let mut abstained = 0;
    for (pred, t) in predictions.iter().zip(truth) {
        let t = t.as_ref();
        if pred.is_none() {
            abstained += 1;
            if policy == AbstainPolicy::Excluded {
                continue;
            }
        }
        total += 1;
        match pred.as_deref() {
            Some(p) if p == t => {
                correct += 1;
                per_class.get_mut(t).expect("truth class").tp += 1;
            }
            other => {
                per_class.get_mut(t).expect("truth class").fn_ += 1;
                if let Some(counts) = other.and_then(|p| per_class.get_mut(p)) {
                    counts.fp += 1;
                }
            }
        }
    }
    let k = per_class.len() as f64;
    let mean = |f: fn(&ClassCounts) -> f64| per_class.values().map(f).sum::<f64>() / k;
    if total == 0 {
        log::warn!("every prediction abstained; metrics are zero");
    }
    Ok(Metrics {
        accuracy: ratio(correct, total),
        macro_precision: mean(ClassCounts::precision),
        macro_recall: mean(ClassCounts::recall),
        macro_f1: mean(ClassCounts::f1),
        per_class,
        total,
        abstained,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub representation: Representation,
    pub criterion: Criterion,
    pub fold: usize,
    pub policy: AbstainPolicy,
    pub metrics: Metrics,
}

/// Metrics for every criterion in `loo`, under both abstention policies.
pub fn reports_from_predictions(loo: &LooPredictions, representation: Representation, fold: usize) -> Result<Vec<MetricsReport>> {
    let mut out = Vec::new();
    for (&criterion, preds) in &loo.predictions {
        for policy in [AbstainPolicy::AsError, AbstainPolicy::Excluded] {
            out.push(MetricsReport {
                representation,
                criterion,
                fold,
                policy,
                metrics: compute_metrics(preds, &loo.truth, policy)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricValues {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldSummary {
    pub representation: Representation,
    pub criterion: Criterion,
    pub policy: AbstainPolicy,
    pub folds: Vec<MetricsReport>,
    pub mean: MetricValues,
    /// Sample standard deviation (`n - 1`); zero for a single fold.
    pub std: MetricValues,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Group per-fold reports by (representation, criterion, policy).
pub fn summarize(reports: &[MetricsReport]) -> Vec<FoldSummary> {
    let mut groups: BTreeMap<(Representation, Criterion, AbstainPolicy), Vec<MetricsReport>> = BTreeMap::new();
    for r in reports {
        groups
            .entry((r.representation, r.criterion, r.policy))
            .or_default()
            .push(r.clone());
    }
    groups
        .into_iter()
        .map(|((representation, criterion, policy), folds)| {
            let stat = |f: fn(&Metrics) -> f64| mean_std(&folds.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
            let acc = stat(|m| m.accuracy);
            let p = stat(|m| m.macro_precision);
            let r = stat(|m| m.macro_recall);
            let f1 = stat(|m| m.macro_f1);
            FoldSummary {
                representation,
                criterion,
                policy,
                mean: MetricValues {
                    accuracy: acc.0,
                    macro_precision: p.0,
                    macro_recall: r.0,
                    macro_f1: f1.0,
                },
                std: MetricValues {
                    accuracy: acc.1,
                    macro_precision: p.1,
                    macro_recall: r.1,
                    macro_f1: f1.1,
                },
                folds,
            }
        })
        .collect()
}

/// `representation,criterion,fold,accuracy,macro_p,macro_r,macro_f1` for the
/// reports matching `policy`.
pub fn write_reports_csv<W: Write>(mut w: W, reports: &[MetricsReport], policy: AbstainPolicy) -> std::io::Result<()> {
    writeln!(w, "representation,criterion,fold,accuracy,macro_p,macro_r,macro_f1")?;
    let mut rows: Vec<&MetricsReport> = reports.iter().filter(|r| r.policy == policy).collect();
    rows.sort_by_key(|r| (r.representation, r.criterion, r.fold));
    for r in rows {
        let m = &r.metrics;
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            r.representation, r.criterion, r.fold, m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1
        )?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(mut w: W, summaries: &[FoldSummary], policy: AbstainPolicy) -> std::io::Result<()> {
    writeln!(
        w,
        "representation,criterion,folds,accuracy_mean,accuracy_std,macro_p_mean,macro_p_std,macro_r_mean,macro_r_std,macro_f1_mean,macro_f1_std"
    )?;
    for s in summaries.iter().filter(|s| s.policy == policy) {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.representation,
            s.criterion,
            s.folds.len(),
            s.mean.accuracy,
            s.std.accuracy,
            s.mean.macro_precision,
            s.std.macro_precision,
            s.mean.macro_recall,
            s.std.macro_recall,
            s.mean.macro_f1,
            s.std.macro_f1
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(labels: &[&str]) -> Vec<Option<String>> {
        labels.iter().map(|l| Some((*l).to_owned())).collect()
    }

    #[test]
    fn all_correct() {
        let m = compute_metrics(&p(&["A", "B", "B"]), &["A", "B", "B"], AbstainPolicy::AsError).unwrap();
        assert_eq!(
            (m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn hand_computed_binary_case() {
        // Confusion: A->A 1, A->B 1, B->A 1, B->B 1. P = R = F1 = 0.5 per class.
        let m = compute_metrics(&p(&["A", "B", "A", "B"]), &["A", "A", "B", "B"], AbstainPolicy::AsError).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.macro_f1, 0.5);
        assert_eq!(m.per_class["A"], ClassCounts { tp: 1, fp: 1, fn_: 1 });
    }

    #[test]
    fn never_predicted_class_lowers_macro_f1() {
        let truth = ["A", "A", "A", "A", "B"];
        let m = compute_metrics(&p(&["A"; 5]), &truth, AbstainPolicy::AsError).unwrap();
        assert_eq!(m.accuracy, 0.8);
        assert_eq!(m.per_class["B"].precision(), 0.0);
        assert_eq!(m.per_class["B"].f1(), 0.0);
        assert!(m.macro_f1 < m.accuracy);
    }

    #[test]
    fn abstention_policies() {
        let preds = vec![Some("A".to_owned()), None, Some("B".to_owned()), None];
        let truth = ["A", "A", "B", "B"];
        let e = compute_metrics(&preds, &truth, AbstainPolicy::AsError).unwrap();
        assert_eq!(e.accuracy, 0.5);
        assert_eq!(e.abstained, 2);
        let x = compute_metrics(&preds, &truth, AbstainPolicy::Excluded).unwrap();
        assert_eq!(x.accuracy, 1.0);
        assert_eq!(x.total, 2);
    }

    #[test]
    fn empty_is_error() {
        assert!(compute_metrics::<&str>(&[], &[], AbstainPolicy::AsError).is_err());
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[0.8, 0.9]);
        assert!((m - 0.85).abs() < 1e-12);
        assert!((s - 0.070_710_678).abs() < 1e-8);
        assert_eq!(mean_std(&[0.3]), (0.3, 0.0));
    }

    #[test]
    fn criterion_parsing() {
        for c in Criterion::STANDARD {
            assert_eq!(c.to_string().parse::<Criterion>().unwrap(), c);
        }
        assert_eq!(Criterion::MajorityVote(5).to_string(), "MV@5");
        assert!("MV@0".parse::<Criterion>().is_err());
        assert!("top-2".parse::<Criterion>().is_err());
    }
}
