//! Case records, embedding dumps, min-max scaling, fold assignment and the
//! synthetic two-modality generator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::{all_finite, Scalar};

pub const DEFAULT_EMBEDDING_DIM: usize = 768;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    Image,
    Sequence,
}

impl Modality {
    pub fn tag(self) -> &'static str {
        match self {
            Modality::Image => "image",
            Modality::Sequence => "sequence",
        }
    }

    pub fn other(self) -> Modality {
        match self {
            Modality::Image => Modality::Sequence,
            Modality::Sequence => Modality::Image,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(Modality::Image),
            "sequence" => Ok(Modality::Sequence),
            other => Err(Error::Invalid(format!("unknown modality `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    pub modality: Modality,
    pub values: Vec<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(modality: Modality, values: Vec<T>) -> Result<Self> {
        if !all_finite(&values) {
            return Err(Error::NonFinite(format!("{modality} embedding")));
        }
        Ok(Self { modality, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord<T> {
    pub case_id: String,
    pub label: String,
    pub image: Embedding<T>,
    pub sequence: Embedding<T>,
}

impl<T> CaseRecord<T> {
    pub fn embedding(&self, modality: Modality) -> &Embedding<T> {
        match modality {
            Modality::Image => &self.image,
            Modality::Sequence => &self.sequence,
        }
    }
}

/// Declared embedding width per modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub image_dim: usize,
    pub sequence_dim: usize,
}

impl Schema {
    pub fn dim(&self, modality: Modality) -> usize {
        match modality {
            Modality::Image => self.image_dim,
            Modality::Sequence => self.sequence_dim,
        }
    }
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            image_dim: DEFAULT_EMBEDDING_DIM,
            sequence_dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

/// A set of complete cases with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub schema: Schema,
    cases: Vec<CaseRecord<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(schema: Schema, cases: Vec<CaseRecord<T>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for case in &cases {
            validate_token(&case.case_id, "case_id")?;
            validate_token(&case.label, "label")?;
            if !seen.insert(case.case_id.as_str()) {
                return Err(Error::Ingestion(format!(
                    "duplicate case_id `{}`",
                    case.case_id
                )));
            }
            for m in [Modality::Image, Modality::Sequence] {
                let e = case.embedding(m);
                if e.modality != m {
                    return Err(Error::Invalid(format!(
                        "case `{}`: {m} slot holds a {} embedding",
                        case.case_id, e.modality
                    )));
                }
                check_len(schema.dim(m), e.dim())?;
                if !all_finite(&e.values) {
                    return Err(Error::NonFinite(format!("case `{}` {m}", case.case_id)));
                }
            }
        }
        Ok(Self { schema, cases })
    }

    pub fn cases(&self) -> &[CaseRecord<T>] {
        &self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.cases.iter().map(|c| c.label.as_str()).collect()
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.cases.iter().map(|c| c.label.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    pub fn find(&self, case_id: &str) -> Option<&CaseRecord<T>> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset<T> {
        Dataset {
            schema: self.schema,
            cases: indices.iter().map(|&i| self.cases[i].clone()).collect(),
        }
    }

    pub fn vectors(&self, modality: Modality) -> Vec<&[T]> {
        self.cases
            .iter()
            .map(|c| c.embedding(modality).values.as_slice())
            .collect()
    }

    /// Rescale both modalities with the given parameters.
    pub fn scaled(&self, scaler: &Scaler<T>) -> Result<Dataset<T>> {
        let cases = self
            .cases
            .iter()
            .map(|c| {
                Ok(CaseRecord {
                    case_id: c.case_id.clone(),
                    label: c.label.clone(),
                    image: apply_minmax(&scaler.image, &c.image)?,
                    sequence: apply_minmax(&scaler.sequence, &c.sequence)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            schema: self.schema,
            cases,
        })
    }
}

pub(crate) fn validate_token(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.contains(',') || s.chars().any(char::is_whitespace) || s.starts_with('#')
    {
        Err(Error::Ingestion(format!(
            "{what} `{s}` must be non-empty without commas, whitespace or a leading `#`"
        )))
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Embedding dump format
// ---------------------------------------------------------------------------

/// One line of an embedding dump.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpRow<T> {
    pub case_id: String,
    pub label: String,
    pub tag: String,
    pub values: Vec<T>,
}

/// Line-oriented embedding file: a `#dims tag=width ...` header, then
/// `case_id,label,tag,v1,...,vl` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDump<T> {
    pub dims: BTreeMap<String, usize>,
    pub rows: Vec<DumpRow<T>>,
}

impl<T: Scalar> EmbeddingDump<T> {
    pub fn new(dims: BTreeMap<String, usize>) -> Self {
        Self {
            dims,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, case_id: &str, label: &str, tag: &str, values: Vec<T>) -> Result<()> {
        validate_token(case_id, "case_id")?;
        validate_token(label, "label")?;
        let dim = *self
            .dims
            .get(tag)
            .ok_or_else(|| Error::Invalid(format!("tag `{tag}` not declared")))?;
        check_len(dim, values.len())?;
        self.rows.push(DumpRow {
            case_id: case_id.to_owned(),
            label: label.to_owned(),
            tag: tag.to_owned(),
            values,
        });
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut dims: Option<BTreeMap<String, usize>> = None;
        let mut rows = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::io("<dump>", e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#dims") {
                if dims.is_some() || !rows.is_empty() {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "header must appear once, before any row".into(),
                    });
                }
                dims = Some(parse_dims(rest, lineno)?);
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let dims = dims.as_ref().ok_or_else(|| Error::Parse {
                line: lineno,
                msg: "row before `#dims` header".into(),
            })?;
            let mut fields = line.split(',');
            let mut next = |what: &str| {
                fields
                    .next()
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| Error::Parse {
                        line: lineno,
                        msg: format!("missing {what}"),
                    })
            };
            let case_id = next("case_id")?.to_owned();
            let label = next("label")?.to_owned();
            let tag = next("modality tag")?.to_owned();
            let values = fields
                .map(|f| {
                    let f = f.trim();
                    f.parse::<T>().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("invalid number `{f}`"),
                    })
                })
                .collect::<Result<Vec<T>>>()?;
            if !all_finite(&values) {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "non-finite value".into(),
                });
            }
            let dim = *dims.get(&tag).ok_or_else(|| Error::Schema {
                line: lineno,
                msg: format!("tag `{tag}` not declared in header"),
            })?;
            if values.len() != dim {
                return Err(Error::Schema {
                    line: lineno,
                    msg: format!(
                        "case `{case_id}` {tag}: expected {dim} values, got {}",
                        values.len()
                    ),
                });
            }
            if !seen.insert((case_id.clone(), tag.clone())) {
                return Err(Error::Ingestion(format!(
                    "duplicate case_id `{case_id}` for tag `{tag}` at line {lineno}"
                )));
            }
            rows.push(DumpRow {
                case_id,
                label,
                tag,
                values,
            });
        }
        Ok(Self {
            dims: dims.unwrap_or_default(),
            rows,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "#dims")?;
        for (tag, dim) in &self.dims {
            write!(w, " {tag}={dim}")?;
        }
        writeln!(w)?;
        for row in &self.rows {
            write!(w, "{},{},{}", row.case_id, row.label, row.tag)?;
            for v in &row.values {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

fn parse_dims(rest: &str, line: usize) -> Result<BTreeMap<String, usize>> {
    let mut dims = BTreeMap::new();
    for item in rest.split_whitespace() {
        let (tag, dim) = item.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("bad header entry `{item}`"),
        })?;
        let dim: usize = dim.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad dimension in `{item}`"),
        })?;
        dims.insert(tag.to_owned(), dim);
    }
    Ok(dims)
}

/// Result of [`load_dataset`].
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub dataset: Dataset<T>,
    /// Cases dropped because one modality was missing.
    pub rejected: usize,
}

/// Read an embedding dump and pair image/sequence rows into complete cases.
///
/// With `schema` given, the header must agree with it; otherwise the header
/// defines the widths.
pub fn load_dataset<T: Scalar>(path: &Path, schema: Option<Schema>) -> Result<Loaded<T>> {
    let dump = EmbeddingDump::<T>::read(path)?;
    dataset_from_dump(dump, schema)
}

pub fn dataset_from_dump<T: Scalar>(
    dump: EmbeddingDump<T>,
    schema: Option<Schema>,
) -> Result<Loaded<T>> {
    let header = |m: Modality| dump.dims.get(m.tag()).copied();
    let schema = match schema {
        Some(s) => {
            for m in [Modality::Image, Modality::Sequence] {
                if let Some(d) = header(m) {
                    if d != s.dim(m) {
                        return Err(Error::Schema {
                            line: 1,
                            msg: format!("header declares {m}={d}, expected {}", s.dim(m)),
                        });
                    }
                }
            }
            s
        }
        None => Schema {
            image_dim: header(Modality::Image).unwrap_or(0),
            sequence_dim: header(Modality::Sequence).unwrap_or(0),
        },
    };

    type Partial<T> = (String, Option<Vec<T>>, Option<Vec<T>>);
    let mut order: Vec<String> = Vec::new();
    let mut parts: HashMap<String, Partial<T>> = HashMap::new();
    for row in dump.rows {
        let modality: Modality = row.tag.parse().map_err(|_| {
            Error::Ingestion(format!(
                "case `{}`: unexpected tag `{}` in a dataset file",
                row.case_id, row.tag
            ))
        })?;
        let entry = parts.entry(row.case_id.clone()).or_insert_with(|| {
            order.push(row.case_id.clone());
            (row.label.clone(), None, None)
        });
        if entry.0 != row.label {
            return Err(Error::Ingestion(format!(
                "case `{}` has conflicting labels `{}` and `{}`",
                row.case_id, entry.0, row.label
            )));
        }
        match modality {
            Modality::Image => entry.1 = Some(row.values),
            Modality::Sequence => entry.2 = Some(row.values),
        }
    }

    let mut cases = Vec::with_capacity(order.len());
    let mut rejected = 0;
    for id in order {
        let (label, f, g) = parts.remove(&id).expect("case recorded in order");
        match (f, g) {
            (Some(f), Some(g)) => cases.push(CaseRecord {
                case_id: id,
                label,
                image: Embedding::new(Modality::Image, f)?,
                sequence: Embedding::new(Modality::Sequence, g)?,
            }),
            _ => rejected += 1,
        }
    }
    if rejected > 0 {
        log::warn!("rejected {rejected} case(s) lacking one modality");
    }
    Ok(Loaded {
        dataset: Dataset::new(schema, cases)?,
        rejected,
    })
}

pub fn dataset_to_dump<T: Scalar>(dataset: &Dataset<T>) -> EmbeddingDump<T> {
    let dims = BTreeMap::from([
        (Modality::Image.tag().to_owned(), dataset.schema.image_dim),
        (Modality::Sequence.tag().to_owned(), dataset.schema.sequence_dim),
    ]);
    let mut dump = EmbeddingDump::new(dims);
    for c in dataset.cases() {
        for e in [&c.image, &c.sequence] {
            dump.rows.push(DumpRow {
                case_id: c.case_id.clone(),
                label: c.label.clone(),
                tag: e.modality.tag().to_owned(),
                values: e.values.clone(),
            });
        }
    }
    dump
}

pub fn save_dataset<T: Scalar>(dataset: &Dataset<T>, path: &Path) -> Result<()> {
    dataset_to_dump(dataset).write(path)
}

// ---------------------------------------------------------------------------
// Min-max scaling
// ---------------------------------------------------------------------------

/// Per-dimension range of one modality, fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams<T> {
    pub modality: Modality,
    pub min: Vec<T>,
    pub max: Vec<T>,
}

impl<T: Scalar> ScaleParams<T> {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn is_constant(&self, i: usize) -> bool {
        self.min[i] == self.max[i]
    }

    pub fn constant_dims(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.is_constant(i)).collect()
    }
}

/// Both modalities' scaling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler<T> {
    pub image: ScaleParams<T>,
    pub sequence: ScaleParams<T>,
}

impl<T: Scalar> Scaler<T> {
    pub fn fit(dataset: &Dataset<T>) -> Result<Self> {
        Ok(Self {
            image: fit_minmax(dataset, Modality::Image)?,
            sequence: fit_minmax(dataset, Modality::Sequence)?,
        })
    }

    pub fn params(&self, modality: Modality) -> &ScaleParams<T> {
        match modality {
            Modality::Image => &self.image,
            Modality::Sequence => &self.sequence,
        }
    }
}

pub fn fit_minmax<T: Scalar>(dataset: &Dataset<T>, modality: Modality) -> Result<ScaleParams<T>> {
    let vectors = dataset.vectors(modality);
    let first = vectors.first().ok_or(Error::Empty("dataset"))?;
    let mut min = first.to_vec();
    let mut max = first.to_vec();
    for v in &vectors[1..] {
        for (i, &x) in v.iter().enumerate() {
            min[i] = min[i].min(x);
            max[i] = max[i].max(x);
        }
    }
    Ok(ScaleParams { modality, min, max })
}

/// `(x - min) / (max - min)` clamped to `[0, 1]`; constant dimensions map to 0.
pub fn apply_minmax<T: Scalar>(params: &ScaleParams<T>, e: &Embedding<T>) -> Result<Embedding<T>> {
    if params.modality != e.modality {
        return Err(Error::Invalid(format!(
            "{} scale params applied to a {} embedding",
            params.modality, e.modality
        )));
    }
    check_len(params.dim(), e.dim())?;
    let values = e
        .values
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let range = params.max[i] - params.min[i];
            if range <= T::zero() {
                T::zero()
            } else {
                ((x - params.min[i]) / range).max(T::zero()).min(T::one())
            }
        })
        .collect();
    Ok(Embedding {
        modality: e.modality,
        values,
    })
}

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub folds: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, case_id: &str) -> Option<usize> {
        self.folds.get(case_id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.folds.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(train, test)` indices into `dataset` for the given fold.
    pub fn split<T: Scalar>(&self, dataset: &Dataset<T>, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, c) in dataset.cases().iter().enumerate() {
            if self.fold_of(&c.case_id) == Some(fold) {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Stratified, seeded k-fold assignment.
///
/// Each class is shuffled and dealt round-robin; the dealing position carries
/// over between classes so fold sizes differ by at most one.
pub fn make_folds<T: Scalar>(dataset: &Dataset<T>, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Invalid(format!("fold count {k} < 2")));
    }
    if k > dataset.len() {
        return Err(Error::Invalid(format!(
            "fold count {k} exceeds dataset size {}",
            dataset.len()
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for c in dataset.cases() {
        by_class.entry(&c.label).or_default().push(&c.case_id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = BTreeMap::new();
    let mut slot = 0;
    for (class, mut ids) in by_class {
        if ids.len() < k {
            log::warn!(
                "class `{class}` has {} case(s) < {k} folds; stratification relaxed",
                ids.len()
            );
        }
        ids.shuffle(&mut rng);
        for id in ids {
            folds.insert(id.to_owned(), slot % k);
            slot += 1;
        }
    }
    Ok(FoldAssignment { k, folds })
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

/// Additive prototype-plus-noise model.
///
/// Every class owns one unit-norm Gaussian prototype per modality; a case's
/// embedding is `signal * prototype + noise * N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub image_dim: usize,
    pub sequence_dim: usize,
    pub image_signal: f64,
    pub sequence_signal: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 2,
            per_class: 100,
            image_dim: 64,
            sequence_dim: 64,
            image_signal: 0.5,
            sequence_signal: 0.5,
            noise: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Invalid("synth: classes must be >= 2".into()));
        }
        if self.per_class < 2 {
            return Err(Error::Invalid("synth: per_class must be >= 2".into()));
        }
        if self.image_dim == 0 || self.sequence_dim == 0 {
            return Err(Error::Invalid("synth: dimensions must be positive".into()));
        }
        for (name, s) in [
            ("image_signal", self.image_signal),
            ("sequence_signal", self.sequence_signal),
        ] {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Invalid(format!("synth: {name} {s} outside [0, 1]")));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Invalid("synth: noise must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub fn synth_generate<T: Scalar>(cfg: &SynthConfig) -> Result<Dataset<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut prototype = |dim: usize| -> Vec<f64> {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        v.into_iter().map(|x| x / norm).collect()
    };
    let protos: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.classes)
        .map(|_| (prototype(cfg.image_dim), prototype(cfg.sequence_dim)))
        .collect();

    let mut sample = |proto: &[f64], signal: f64| -> Vec<T> {
        proto
            .iter()
            .map(|&p| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::of(signal * p + cfg.noise * z)
            })
            .collect()
    };
    let width = (cfg.classes * cfg.per_class).to_string().len().max(4);
    let mut cases = Vec::with_capacity(cfg.classes * cfg.per_class);
    for i in 0..cfg.per_class {
        for (c, (pf, pg)) in protos.iter().enumerate() {
            let n = i * cfg.classes + c;
            cases.push(CaseRecord {
                case_id: format!("case-{n:0width$}"),
                label: format!("class-{c}"),
                image: Embedding {
                    modality: Modality::Image,
                    values: sample(pf, cfg.image_signal),
                },
                sequence: Embedding {
                    modality: Modality::Sequence,
                    values: sample(pg, cfg.sequence_signal),
                },
            });
        }
    }
    Dataset::new(
        Schema {
            image_dim: cfg.image_dim,
            sequence_dim: cfg.sequence_dim,
        },
        cases,
    )
}
