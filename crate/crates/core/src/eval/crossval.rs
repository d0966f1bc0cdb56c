use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::archive::{Archive, ArchiveEntry, Metric};
use crate::datamodel::{Dataset, FoldAssignment, Modality, Scaler};
use crate::error::Result;
use crate::eval::loo::{leave_one_out, leave_one_out_on, unimodal_baseline, VectorNeighbors};
use crate::eval::metrics::{reports_from_predictions, summarize, Criterion, FoldSummary, MetricsReport, Representation};
use crate::latent::{encode_dataset, reconstruction_report, train_hybrid_on, AeHyper, Direction, ReconstructionReport, TrainReport};
use crate::monogram::{generate_monograms, train_fusion, FusionHyper, FusionNetwork, Threshold};
use crate::Scalar;

/// Everything one cross-validation run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub ae_image: AeHyper,
    pub ae_sequence: AeHyper,
    pub fusion: FusionHyper,
    pub threshold: Threshold,
    pub criteria: Vec<Criterion>,
    /// Metric used for the real-valued monogram search.
    pub real_metric: Metric,
    /// Also evaluate the 128-d latents as unimodal representations.
    pub latent_baselines: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ae_image: Direction::ImageToSeq.default_hyper(),
            ae_sequence: Direction::SeqToImage.default_hyper(),
            fusion: FusionHyper::default(),
            threshold: Threshold::default(),
            criteria: Criterion::STANDARD.to_vec(),
            real_metric: Metric::Euclidean,
            latent_baselines: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.ae_image.validate()?;
        self.ae_sequence.validate()?;
        self.fusion.validate()?;
        if self.criteria.is_empty() {
            return Err(crate::Error::Invalid("no evaluation criteria".into()));
        }
        Ok(())
    }
}

fn fold_seed(base: u64, fold: usize) -> u64 {
    base.wrapping_add((fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Artifacts of one evaluated fold.
#[derive(Debug, Clone)]
pub struct FoldRun<T> {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub ae_image: TrainReport,
    pub ae_sequence: TrainReport,
    pub fusion: TrainReport,
    pub reconstruction: ReconstructionReport,
    /// Monograms of the test cases only.
    pub archive: Archive<T>,
}

#[derive(Debug, Clone)]
pub struct CvOutcome<T> {
    pub reports: Vec<MetricsReport>,
    pub summaries: Vec<FoldSummary>,
    pub runs: Vec<FoldRun<T>>,
    pub skipped: Vec<usize>,
}

fn class_count<T: Scalar>(ds: &Dataset<T>) -> usize {
    ds.labels().into_iter().collect::<BTreeSet<_>>().len()
}

/// Train on each fold's complement, build an archive from the held-out
/// fold and run leave-one-out inside it, for the monogram and every
/// baseline representation.
pub fn cross_validate<T: Scalar>(dataset: &Dataset<T>, folds: &FoldAssignment, cfg: &PipelineConfig) -> Result<CvOutcome<T>> {
    cfg.validate()?;
    let mut reports = Vec::new();
    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    for fold in 0..folds.k {
        let (train_idx, test_idx) = folds.split(dataset, fold);
        let train = dataset.subset(&train_idx);
        let test = dataset.subset(&test_idx);
        if class_count(&test) < 2 || class_count(&train) < 2 {
            log::warn!("fold {fold}: fewer than two classes in a split, skipped");
            skipped.push(fold);
            continue;
        }
        log::info!("fold {fold}: {} train / {} test cases", train.len(), test.len());
        let run = run_fold(&train, &test, fold, cfg, &mut reports)?;
        runs.push(run);
    }
    let summaries = summarize(&reports);
    Ok(CvOutcome {
        reports,
        summaries,
        runs,
        skipped,
    })
}

fn run_fold<T: Scalar>(
    train: &Dataset<T>,
    test: &Dataset<T>,
    fold: usize,
    cfg: &PipelineConfig,
    reports: &mut Vec<MetricsReport>,
) -> Result<FoldRun<T>> {
    let scaler = Scaler::fit(train)?;
    let train = train.scaled(&scaler)?;
    let test = test.scaled(&scaler)?;

    let ae_i_hyper = AeHyper {
        seed: fold_seed(cfg.ae_image.seed, fold),
        ..cfg.ae_image.clone()
    };
    let ae_s_hyper = AeHyper {
        seed: fold_seed(cfg.ae_sequence.seed, fold),
        ..cfg.ae_sequence.clone()
    };
    let (a_i, ae_image) = train_hybrid_on(&train, Direction::ImageToSeq, &ae_i_hyper)?;
    let (a_s, ae_sequence) = train_hybrid_on(&train, Direction::SeqToImage, &ae_s_hyper)?;

    let train_latents = encode_dataset(&a_i, &a_s, &train)?;
    let test_latents = encode_dataset(&a_i, &a_s, &test)?;
    let fusion_hyper = FusionHyper {
        seed: fold_seed(cfg.fusion.seed, fold),
        ..cfg.fusion.clone()
    };
    let q = FusionNetwork::new(fusion_hyper.seed);
    let (q, fusion) = train_fusion(q, &train_latents, &fusion_hyper)?;

    let monograms = generate_monograms(&q, &test_latents, cfg.threshold)?;
    let archive = Archive::build(
        cfg.threshold,
        test_latents
            .iter()
            .zip(monograms)
            .map(|(l, m)| ArchiveEntry::new(l.case_id.clone(), l.label.clone(), m)),
    )?;

    let binary = leave_one_out(&archive, Metric::Hamming, &cfg.criteria)?;
    reports.extend(reports_from_predictions(&binary, Representation::BinaryMonogram, fold)?);
    let real = leave_one_out(&archive, cfg.real_metric, &cfg.criteria)?;
    reports.extend(reports_from_predictions(&real, Representation::RealMonogram, fold)?);
    reports.extend(unimodal_baseline(&test, Modality::Image, &cfg.criteria, fold)?);
    reports.extend(unimodal_baseline(&test, Modality::Sequence, &cfg.criteria, fold)?);
    if cfg.latent_baselines {
        let ids: Vec<&str> = test_latents.iter().map(|l| l.case_id.as_str()).collect();
        let labels: Vec<&str> = test_latents.iter().map(|l| l.label.as_str()).collect();
        for (repr, vectors) in [
            (Representation::ImageLatent, test_latents.iter().map(|l| l.u.as_slice()).collect::<Vec<_>>()),
            (Representation::SequenceLatent, test_latents.iter().map(|l| l.v.as_slice()).collect()),
        ] {
            let src = VectorNeighbors::new(ids.clone(), labels.clone(), vectors)?;
            let loo = leave_one_out_on(&src, &cfg.criteria)?;
            reports.extend(reports_from_predictions(&loo, repr, fold)?);
        }
    }

    Ok(FoldRun {
        fold,
        train_size: train.len(),
        test_size: test.len(),
        ae_image,
        ae_sequence,
        fusion,
        reconstruction: reconstruction_report(&a_i, &a_s, &test)?,
        archive,
    })
}
