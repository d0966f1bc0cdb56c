//! Monogram archive with exhaustive top-k search and majority voting.
//!
//! File layout:
//!
//! ```text
//! #monogram-archive version=1 width=64 threshold=0
//! case_id,label,0123456789ABCDEF,r0,r1,...,r63
//! ```
//!
//! The hex code is the 64-bit word whose bit 0 (least significant) is the
//! first entry of the monogram.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datamodel::validate_token;
use crate::error::{check_len, Error, Result};
use crate::monogram::{binarize, Monogram, Threshold, CODE_BITS};
use crate::scalar::{all_finite, cosine, euclidean, Scalar};

pub const ARCHIVE_VERSION: u32 = 1;
const HEADER_PREFIX: &str = "#monogram-archive";

/// Number of differing bits.
#[inline]
pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

pub fn euclidean_code<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_len(a.len(), b.len())?;
    Ok(euclidean(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Popcount of XOR on the 64-bit codes.
    #[default]
    Hamming,
    /// L2 distance between real codes.
    Euclidean,
    /// `1 - cos` between real codes.
    Cosine,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Hamming => "hamming",
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(Metric::Hamming),
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::Invalid(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry<T> {
    pub case_id: String,
    pub label: String,
    pub bits: u64,
    pub real_code: Vec<T>,
}

impl<T: Scalar> ArchiveEntry<T> {
    pub fn new(case_id: impl Into<String>, label: impl Into<String>, monogram: Monogram<T>) -> Self {
        Self {
            case_id: case_id.into(),
            label: label.into(),
            bits: monogram.bits,
            real_code: monogram.real_code,
        }
    }

    pub fn monogram(&self) -> Monogram<T> {
        Monogram {
            bits: self.bits,
            real_code: self.real_code.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalHit {
    pub case_id: String,
    pub label: String,
    pub distance: f64,
}

/// Orders by ascending distance, then ascending case id.
pub(crate) fn hit_order(a: &RetrievalHit, b: &RetrievalHit) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.case_id.cmp(&b.case_id))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive<T> {
    threshold: Threshold,
    entries: Vec<ArchiveEntry<T>>,
    by_id: HashMap<String, usize>,
}

impl<T: Scalar> Archive<T> {
    pub fn new(threshold: Threshold) -> Self {
        Self {
            threshold,
            entries: Vec::new(),
            by_id: HashMap::new(),
        }
    }

    pub fn build(threshold: Threshold, entries: impl IntoIterator<Item = ArchiveEntry<T>>) -> Result<Self> {
        let mut archive = Self::new(threshold);
        for e in entries {
            archive.insert(e)?;
        }
        Ok(archive)
    }

    pub fn threshold(&self) -> Threshold {
        self.threshold
    }

    pub fn entries(&self) -> &[ArchiveEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, case_id: &str) -> Option<&ArchiveEntry<T>> {
        self.by_id.get(case_id).map(|&i| &self.entries[i])
    }

    /// Add an entry; rejects duplicate ids and codes whose bits disagree with
    /// the real code under this archive's threshold.
    pub fn insert(&mut self, entry: ArchiveEntry<T>) -> Result<()> {
        validate_token(&entry.case_id, "case_id")?;
        validate_token(&entry.label, "label")?;
        check_len(CODE_BITS, entry.real_code.len())?;
        if !all_finite(&entry.real_code) {
            return Err(Error::NonFinite(format!("real code of `{}`", entry.case_id)));
        }
        if self.by_id.contains_key(&entry.case_id) {
            return Err(Error::Ingestion(format!("duplicate case_id `{}` in archive", entry.case_id)));
        }
        let expected = binarize(&entry.real_code, self.threshold)?;
        if expected != entry.bits {
            return Err(Error::Invalid(format!(
                "case `{}`: bits {:016X} disagree with real code ({expected:016X}) under threshold {}",
                entry.case_id, entry.bits, self.threshold
            )));
        }
        self.by_id.insert(entry.case_id.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    fn distance(&self, entry: &ArchiveEntry<T>, query: &Monogram<T>, metric: Metric) -> f64 {
        match metric {
            Metric::Hamming => f64::from(hamming(entry.bits, query.bits)),
            Metric::Euclidean => euclidean(&entry.real_code, &query.real_code).as_f64(),
            Metric::Cosine => cosine(&entry.real_code, &query.real_code).map_or(1.0, |c| 1.0 - c.as_f64()),
        }
    }

    /// The `k` nearest entries, ties broken by ascending case id. `exclude`
    /// removes one case (leave-one-out). Asking for more hits than remain
    /// returns all of them with a warning.
    pub fn search_topk(
        &self,
        query: &Monogram<T>,
        k: usize,
        metric: Metric,
        exclude: Option<&str>,
    ) -> Result<Vec<RetrievalHit>> {
        if k == 0 {
            return Err(Error::Invalid("k must be >= 1".into()));
        }
        if metric != Metric::Hamming {
            check_len(CODE_BITS, query.real_code.len())?;
        }
        let mut hits: Vec<RetrievalHit> = self
            .entries
            .iter()
            .filter(|e| Some(e.case_id.as_str()) != exclude)
            .map(|e| RetrievalHit {
                case_id: e.case_id.clone(),
                label: e.label.clone(),
                distance: self.distance(e, query, metric),
            })
            .collect();
        if k > hits.len() {
            log::warn!("requested top-{k} but only {} entries are searchable", hits.len());
        }
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, hit_order);
            hits.truncate(k);
        }
        hits.sort_by(hit_order);
        Ok(hits)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{HEADER_PREFIX} version={ARCHIVE_VERSION} width={CODE_BITS} threshold={}",
            self.threshold
        )?;
        for e in &self.entries {
            write!(w, "{},{},{:016X}", e.case_id, e.label, e.bits)?;
            for x in &e.real_code {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, Ok(l))) if l.trim().is_empty() => continue,
                Some((_, Ok(l))) => break l,
                Some((_, Err(e))) => return Err(Error::io("<archive>", e)),
                None => return Err(Error::Parse { line: 1, msg: "missing archive header".into() }),
            }
        };
        let threshold = parse_header(&header)?;
        let mut archive = Self::new(threshold);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::io("<archive>", e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: lineno, msg };
            let mut fields = line.split(',');
            let id = fields.next().ok_or_else(|| perr("missing case_id".into()))?;
            let label = fields.next().ok_or_else(|| perr("missing label".into()))?;
            let hex = fields.next().ok_or_else(|| perr("missing code".into()))?;
            if hex.len() != 16 {
                return Err(perr(format!("code `{hex}` is not 16 hex digits")));
            }
            let bits = u64::from_str_radix(hex, 16).map_err(|_| perr(format!("bad hex code `{hex}`")))?;
            let real_code = fields
                .map(|f| f.parse::<T>().map_err(|_| perr(format!("bad real value `{f}`"))))
                .collect::<Result<Vec<T>>>()?;
            if real_code.len() != CODE_BITS {
                return Err(Error::Schema {
                    line: lineno,
                    msg: format!("expected {CODE_BITS} real values, got {}", real_code.len()),
                });
            }
            archive
                .insert(ArchiveEntry {
                    case_id: id.to_owned(),
                    label: label.to_owned(),
                    bits,
                    real_code,
                })
                .map_err(|e| perr(e.to_string()))?;
        }
        Ok(archive)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

fn parse_header(line: &str) -> Result<Threshold> {
    let err = |msg: String| Error::Parse { line: 1, msg };
    let rest = line
        .trim()
        .strip_prefix(HEADER_PREFIX)
        .ok_or_else(|| err("missing `#monogram-archive` header".into()))?;
    let mut fields = BTreeMap::new();
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("bad header field `{kv}`")))?;
        fields.insert(k, v);
    }
    match fields.get("version") {
        Some(v) if *v == ARCHIVE_VERSION.to_string() => {}
        other => return Err(err(format!("unsupported archive version {other:?}"))),
    }
    match fields.get("width") {
        Some(w) if *w == CODE_BITS.to_string() => {}
        other => return Err(err(format!("unsupported code width {other:?}"))),
    }
    let t = fields.get("threshold").ok_or_else(|| err("missing threshold".into()))?;
    Threshold::parse(t).map_err(|e| err(e.to_string()))
}

/// Majority vote over the top `n` hits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteResult {
    pub n: usize,
    /// `None` when no label reaches the quorum.
    pub predicted: Option<String>,
    /// Count of the most frequent label among the top `n`.
    pub support: usize,
}

/// `floor(n / 2) + 1`.
pub fn quorum(n: usize) -> usize {
    n / 2 + 1
}

pub fn majority_vote(hits: &[RetrievalHit], n: usize) -> Result<VoteResult> {
    if n == 0 {
        return Err(Error::Invalid("vote depth must be >= 1".into()));
    }
    if hits.len() < n {
        return Err(Error::Invalid(format!("majority vote over {n} needs {n} hits, got {}", hits.len())));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for h in &hits[..n] {
        *counts.entry(h.label.as_str()).or_default() += 1;
    }
    let (label, support) = counts
        .into_iter()
        .fold(("", 0), |best, (l, c)| if c > best.1 { (l, c) } else { best });
    Ok(VoteResult {
        n,
        predicted: (support >= quorum(n)).then(|| label.to_owned()),
        support,
    })
}
