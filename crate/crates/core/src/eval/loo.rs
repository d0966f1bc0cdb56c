use std::collections::BTreeMap;

use crate::archive::{hit_order, majority_vote, Archive, Metric, RetrievalHit};
use crate::datamodel::{Dataset, Modality};
use crate::error::{check_len, Result};
use crate::eval::metrics::{reports_from_predictions, Criterion, MetricsReport, Representation};
use crate::scalar::euclidean;
use crate::Scalar;

/// Anything that can rank its own items by distance to one of them.
pub trait NeighborSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn case_id(&self, i: usize) -> &str;

    fn label(&self, i: usize) -> &str;

    /// The `k` nearest items to item `i`, never including `i` itself.
    fn neighbors(&self, i: usize, k: usize) -> Result<Vec<RetrievalHit>>;
}

pub struct ArchiveNeighbors<'a, T> {
    pub archive: &'a Archive<T>,
    pub metric: Metric,
}

impl<T: Scalar> NeighborSource for ArchiveNeighbors<'_, T> {
    fn len(&self) -> usize {
        self.archive.len()
    }

    fn case_id(&self, i: usize) -> &str {
        &self.archive.entries()[i].case_id
    }

    fn label(&self, i: usize) -> &str {
        &self.archive.entries()[i].label
    }

    fn neighbors(&self, i: usize, k: usize) -> Result<Vec<RetrievalHit>> {
        let entry = &self.archive.entries()[i];
        self.archive
            .search_topk(&entry.monogram(), k, self.metric, Some(&entry.case_id))
    }
}

/// Plain vectors searched by Euclidean distance.
pub struct VectorNeighbors<'a, T> {
    ids: Vec<&'a str>,
    labels: Vec<&'a str>,
    vectors: Vec<&'a [T]>,
}

impl<'a, T: Scalar> VectorNeighbors<'a, T> {
    pub fn new(ids: Vec<&'a str>, labels: Vec<&'a str>, vectors: Vec<&'a [T]>) -> Result<Self> {
        check_len(ids.len(), labels.len())?;
        check_len(ids.len(), vectors.len())?;
        if let Some(first) = vectors.first() {
            for v in &vectors {
                check_len(first.len(), v.len())?;
            }
        }
        Ok(Self { ids, labels, vectors })
    }

    pub fn from_dataset(dataset: &'a Dataset<T>, modality: Modality) -> Self {
        Self {
            ids: dataset.cases().iter().map(|c| c.case_id.as_str()).collect(),
            labels: dataset.labels(),
            vectors: dataset.vectors(modality),
        }
    }
}

impl<T: Scalar> NeighborSource for VectorNeighbors<'_, T> {
    fn len(&self) -> usize {
        self.ids.len()
    }

    fn case_id(&self, i: usize) -> &str {
        self.ids[i]
    }

    fn label(&self, i: usize) -> &str {
        self.labels[i]
    }

    fn neighbors(&self, i: usize, k: usize) -> Result<Vec<RetrievalHit>> {
        let q = self.vectors[i];
        let mut hits: Vec<RetrievalHit> = (0..self.len())
            .filter(|&j| j != i)
            .map(|j| RetrievalHit {
                case_id: self.ids[j].to_owned(),
                label: self.labels[j].to_owned(),
                distance: euclidean(q, self.vectors[j]).as_f64(),
            })
            .collect();
        hits.sort_by(hit_order);
        hits.truncate(k);
        Ok(hits)
    }
}

/// Per-case predictions of a leave-one-out run. `None` marks an abstention.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LooPredictions {
    pub case_ids: Vec<String>,
    pub truth: Vec<String>,
    pub predictions: BTreeMap<Criterion, Vec<Option<String>>>,
}

/// Query every item against all others. Criteria deeper than the number
/// of remaining items are skipped with a warning.
pub fn leave_one_out_on<S: NeighborSource + ?Sized>(source: &S, criteria: &[Criterion]) -> Result<LooPredictions> {
    let n = source.len();
    let available = n.saturating_sub(1);
    let mut active = Vec::new();
    for &c in criteria {
        if c.depth() > available {
            log::warn!("skipping {c}: needs {} neighbours, only {available} available", c.depth());
        } else if !active.contains(&c) {
            active.push(c);
        }
    }
    let mut out = LooPredictions {
        case_ids: (0..n).map(|i| source.case_id(i).to_owned()).collect(),
        truth: (0..n).map(|i| source.label(i).to_owned()).collect(),
        predictions: active.iter().map(|&c| (c, Vec::with_capacity(n))).collect(),
    };
    let Some(depth) = active.iter().map(|c| c.depth()).max() else {
        return Ok(out);
    };
    for i in 0..n {
        let hits = source.neighbors(i, depth)?;
        for &c in &active {
            let pred = match c {
                Criterion::Top1 => Some(hits[0].label.clone()),
                Criterion::MajorityVote(k) => majority_vote(&hits, k)?.predicted,
            };
            out.predictions.get_mut(&c).expect("active criterion").push(pred);
        }
    }
    Ok(out)
}

pub fn leave_one_out<T: Scalar>(archive: &Archive<T>, metric: Metric, criteria: &[Criterion]) -> Result<LooPredictions> {
    leave_one_out_on(&ArchiveNeighbors { archive, metric }, criteria)
}

/// Leave-one-out Euclidean retrieval on one modality of a (scaled) dataset.
pub fn unimodal_baseline<T: Scalar>(
    dataset: &Dataset<T>,
    modality: Modality,
    criteria: &[Criterion],
    fold: usize,
) -> Result<Vec<MetricsReport>> {
    let loo = leave_one_out_on(&VectorNeighbors::from_dataset(dataset, modality), criteria)?;
    let representation = match modality {
        Modality::Image => Representation::ImageUnimodal,
        Modality::Sequence => Representation::SequenceUnimodal,
    };
    reports_from_predictions(&loo, representation, fold)
}
