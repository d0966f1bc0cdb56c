use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use monogram_core::archive::{Archive, ArchiveEntry, Metric, RetrievalHit};
use monogram_core::datamodel::{dataset_to_dump, load_dataset, make_folds, synth_generate, Dataset, EmbeddingDump, Scaler, SynthConfig};
use monogram_core::eval::{
    cross_validate, pca_project, pca_to_dump, sample_per_class, write_bit_grids_csv, write_reports_csv, write_summary_csv,
    xor_dissimilarity, AbstainPolicy,
};
use monogram_core::latent::{
    encode_dataset, latents_from_dump, latents_to_dump, reconstruction_report, train_hybrid_on, Direction, HybridAutoencoder,
    LatentPair,
};
use monogram_core::monogram::{generate_monograms, train_fusion, FusionHyper, FusionNetwork, Threshold};
use monogram_core::nn::{read_checkpoint, write_checkpoint, ModelKind};
use serde::Serialize;

use crate::args::*;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{Manifest, OutputDir};

const MANIFEST: &str = "manifest.json";
const SCALER: &str = "scaler.json";
const AE_IMAGE: &str = "ae_image.ckpt";
const AE_SEQUENCE: &str = "ae_sequence.ckpt";
const LATENTS: &str = "latents.csv";
const FUSION: &str = "fusion.ckpt";
const ARCHIVE: &str = "archive.txt";

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| (*s).to_owned()).collect()
}

fn manifest<C: Serialize>(command: &'static str, seed: Option<u64>, inputs: Vec<PathBuf>, config: C) -> Manifest<C> {
    Manifest {
        tool: "monogram",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        inputs,
        outputs: Vec::new(),
        config,
    }
}

fn parse_threshold(s: &str) -> CliResult<Threshold> {
    Threshold::parse(s).map_err(|e| CliError::Usage(e.to_string()))
}

fn dataset_path(flag: Option<&PathBuf>, cfg: &RunConfig) -> CliResult<PathBuf> {
    flag.or(cfg.dataset.as_ref())
        .cloned()
        .ok_or_else(|| CliError::Usage("no dataset given (--dataset or `dataset` in the config)".into()))
}

fn read_dataset(path: &Path, cfg: &RunConfig) -> CliResult<Dataset<f32>> {
    let loaded = load_dataset::<f32>(path, cfg.schema)?;
    if loaded.rejected > 0 {
        log::warn!("{}: {} incomplete cases ignored", path.display(), loaded.rejected);
    }
    Ok(loaded.dataset)
}

fn apply_ae(cfg: &mut RunConfig, o: &AeOverrides) {
    let p = &mut cfg.pipeline;
    if let Some(e) = o.ae_image_epochs {
        p.ae_image.epochs = e;
    }
    if let Some(lr) = o.ae_image_lr {
        p.ae_image.lr = lr;
    }
    if let Some(e) = o.ae_sequence_epochs {
        p.ae_sequence.epochs = e;
    }
    if let Some(lr) = o.ae_sequence_lr {
        p.ae_sequence.lr = lr;
    }
}

fn apply_fusion(cfg: &mut RunConfig, o: &FusionOverrides) {
    let f = &mut cfg.pipeline.fusion;
    if let Some(e) = o.fusion_epochs {
        f.epochs = e;
    }
    if let Some(lr) = o.fusion_lr {
        f.lr = lr;
    }
    if let Some(a) = o.alpha {
        f.alpha = a;
    }
    if let Some(b) = o.batch_size {
        f.batch_size = b;
    }
}

fn save_model(out: &mut OutputDir, name: &str, kind: ModelKind, mlp: &monogram_core::nn::Mlp<f32>) -> CliResult<()> {
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, kind, mlp)?;
    out.write_with(name, |w| w.write_all(&bytes))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn load_autoencoder(path: &Path, direction: Direction) -> CliResult<HybridAutoencoder<f32>> {
    let (kind, mlp) = read_checkpoint::<f32, _>(open(path)?)?;
    if kind != direction.model_kind() {
        return Err(CliError::Core(monogram_core::Error::Checkpoint(format!(
            "{}: holds a {kind:?} model, expected {:?}",
            path.display(),
            direction.model_kind()
        ))));
    }
    Ok(HybridAutoencoder::from_mlp(direction, mlp)?)
}

struct Models {
    scaler: Scaler<f32>,
    image_to_seq: HybridAutoencoder<f32>,
    seq_to_image: HybridAutoencoder<f32>,
}

fn load_models(dir: &Path) -> CliResult<Models> {
    let scaler_path = dir.join(SCALER);
    let scaler = serde_json::from_reader(open(&scaler_path)?)
        .map_err(|e| CliError::Core(monogram_core::Error::Parse { line: e.line(), msg: format!("{}: {e}", scaler_path.display()) }))?;
    Ok(Models {
        scaler,
        image_to_seq: load_autoencoder(&dir.join(AE_IMAGE), Direction::ImageToSeq)?,
        seq_to_image: load_autoencoder(&dir.join(AE_SEQUENCE), Direction::SeqToImage)?,
    })
}

fn load_fusion(path: &Path) -> CliResult<FusionNetwork<f32>> {
    let (kind, mlp) = read_checkpoint::<f32, _>(open(path)?)?;
    if kind != ModelKind::Fusion {
        return Err(CliError::Core(monogram_core::Error::Checkpoint(format!(
            "{}: holds a {kind:?} model, not a fusion network",
            path.display()
        ))));
    }
    Ok(FusionNetwork::from_mlp(mlp)?)
}

fn load_latents(path: &Path) -> CliResult<Vec<LatentPair<f32>>> {
    Ok(latents_from_dump(EmbeddingDump::read(path)?)?)
}

pub fn synth(args: &SynthArgs, force: bool) -> CliResult<()> {
    let cfg = SynthConfig {
        classes: args.classes,
        per_class: args.per_class,
        image_dim: args.image_dim,
        sequence_dim: args.sequence_dim,
        image_signal: args.image_signal,
        sequence_signal: args.sequence_signal,
        noise: args.noise,
        seed: args.seed,
    };
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut out = OutputDir::new(&args.out, force)?;
    out.claim(&names(&["dataset.csv", MANIFEST]))?;
    let ds = synth_generate::<f32>(&cfg)?;
    let dump = dataset_to_dump(&ds);
    out.write_with("dataset.csv", |w| dump.write_to(w))?;
    out.write_manifest(manifest("synth", Some(cfg.seed), Vec::new(), cfg))
}

pub fn train_ae(args: &TrainAeArgs, mut cfg: RunConfig, force: bool) -> CliResult<()> {
    apply_ae(&mut cfg, &args.ae);
    if let Some(seed) = args.seed {
        cfg.pipeline.ae_image.seed = seed;
        cfg.pipeline.ae_sequence.seed = seed;
    }
    let data = dataset_path(args.dataset.as_ref(), &cfg)?;
    cfg.dataset = Some(data.clone());
    cfg.validate()?;
    let mut out = OutputDir::new(&args.out, force)?;
    out.claim(&names(&[SCALER, AE_IMAGE, AE_SEQUENCE, "ae_image_loss.csv", "ae_sequence_loss.csv", MANIFEST]))?;

    let ds = read_dataset(&data, &cfg)?;
    let scaler = Scaler::fit(&ds)?;
    let scaled = ds.scaled(&scaler)?;
    let (a_i, r_i) = train_hybrid_on(&scaled, Direction::ImageToSeq, &cfg.pipeline.ae_image)?;
    let (a_s, r_s) = train_hybrid_on(&scaled, Direction::SeqToImage, &cfg.pipeline.ae_sequence)?;

    let scaler_json = serde_json::to_string(&scaler).map_err(|e| CliError::Config(e.to_string()))?;
    out.write_with(SCALER, |w| writeln!(w, "{scaler_json}"))?;
    save_model(&mut out, AE_IMAGE, ModelKind::ImageToSeq, &a_i.net)?;
    save_model(&mut out, AE_SEQUENCE, ModelKind::SeqToImage, &a_s.net)?;
    out.write_with("ae_image_loss.csv", |w| r_i.write_csv(w))?;
    out.write_with("ae_sequence_loss.csv", |w| r_s.write_csv(w))?;
    let seed = cfg.pipeline.ae_image.seed;
    out.write_manifest(manifest("train-ae", Some(seed), vec![data], cfg))
}

pub fn encode(args: &EncodeArgs, cfg: RunConfig, force: bool) -> CliResult<()> {
    let data = dataset_path(args.dataset.as_ref(), &cfg)?;
    let mut out = OutputDir::new(&args.out, force)?;
    out.claim(&names(&[LATENTS, MANIFEST]))?;
    let models = load_models(&args.models)?;
    let ds = read_dataset(&data, &cfg)?.scaled(&models.scaler)?;
    let latents = encode_dataset(&models.image_to_seq, &models.seq_to_image, &ds)?;
    let dump = latents_to_dump(&latents)?;
    out.write_with(LATENTS, |w| dump.write_to(w))?;
    out.write_manifest(manifest("encode", None, vec![data, args.models.clone()], ()))
}

pub fn train_fusion_cmd(args: &TrainFusionArgs, mut cfg: RunConfig, force: bool) -> CliResult<()> {
    apply_fusion(&mut cfg, &args.fusion);
    if let Some(seed) = args.seed {
        cfg.pipeline.fusion.seed = seed;
    }
    cfg.validate()?;
    let hyper: FusionHyper = cfg.pipeline.fusion.clone();
    let mut out = OutputDir::new(&args.out, force)?;
    out.claim(&names(&[FUSION, "fusion_loss.csv", MANIFEST]))?;
    let latents = load_latents(&args.latents)?;
    let dim = latents.first().map_or(0, |l| l.u.len());
    let q = if dim == monogram_core::latent::LATENT_DIM {
        FusionNetwork::new(hyper.seed)
    } else {
        FusionNetwork::with_shape(dim, &monogram_core::monogram::TRUNK_HIDDEN, hyper.seed)?
    };
    let (q, report) = train_fusion(q, &latents, &hyper)?;
    save_model(&mut out, FUSION, ModelKind::Fusion, q.trunk())?;
    out.write_with("fusion_loss.csv", |w| report.write_csv(w))?;
    out.write_manifest(manifest("train-fusion", Some(hyper.seed), vec![args.latents.clone()], hyper))
}

pub fn index(args: &IndexArgs, cfg: RunConfig, force: bool) -> CliResult<()> {
    let threshold = match &args.threshold {
        Some(t) => parse_threshold(t)?,
        None => cfg.pipeline.threshold,
    };
    let mut out = OutputDir::new(&args.out, force)?;
    out.claim(&names(&[ARCHIVE, MANIFEST]))?;
    let latents = load_latents(&args.latents)?;
    let q = load_fusion(&args.fusion)?;
    let monograms = generate_monograms(&q, &latents, threshold)?;
    let archive = Archive::build(
        threshold,
        latents
            .iter()
            .zip(monograms)
            .map(|(l, m)| ArchiveEntry::new(l.case_id.clone(), l.label.clone(), m)),
    )?;
    out.write_with(ARCHIVE, |w| archive.write_to(w))?;
    #[derive(Serialize)]
    struct IndexConfig {
        threshold: String,
        entries: usize,
    }
    let config = IndexConfig {
        threshold: threshold.to_string(),
        entries: archive.len(),
    };
    out.write_manifest(manifest("index", None, vec![args.latents.clone(), args.fusion.clone()], config))
}

fn print_hits<W: Write>(w: &mut W, query: &str, hits: &[RetrievalHit]) -> std::io::Result<()> {
    for (rank, h) in hits.iter().enumerate() {
        writeln!(w, "{query},{},{},{},{}", rank + 1, h.case_id, h.label, h.distance)?;
    }
    Ok(())
}

pub fn search<W: Write>(args: &SearchArgs, cfg: RunConfig, stdout: &mut W) -> CliResult<()> {
    let metric: Metric = args.metric.parse().map_err(|e: monogram_core::Error| CliError::Usage(e.to_string()))?;
    if args.k == 0 {
        return Err(CliError::Usage("--k must be >= 1".into()));
    }
    let archive = Archive::<f32>::load(&args.archive)?;
    let io = |e| CliError::io("<stdout>", e);
    writeln!(stdout, "query,rank,case_id,label,distance").map_err(io)?;
    match (&args.case_id, &args.query) {
        (Some(id), None) => {
            let entry = archive
                .get(id)
                .ok_or_else(|| CliError::Usage(format!("case `{id}` is not in the archive")))?;
            let exclude = args.exclude_self.then_some(id.as_str());
            let hits = archive.search_topk(&entry.monogram(), args.k, metric, exclude)?;
            print_hits(stdout, id, &hits).map_err(io)?;
        }
        (None, Some(query)) => {
            let models = load_models(args.models.as_deref().expect("clap requires --models"))?;
            let q = load_fusion(args.fusion.as_deref().expect("clap requires --fusion"))?;
            let ds = read_dataset(query, &cfg)?.scaled(&models.scaler)?;
            let latents = encode_dataset(&models.image_to_seq, &models.seq_to_image, &ds)?;
            let monograms = generate_monograms(&q, &latents, archive.threshold())?;
            for (l, m) in latents.iter().zip(&monograms) {
                let exclude = args.exclude_self.then_some(l.case_id.as_str());
                let hits = archive.search_topk(m, args.k, metric, exclude)?;
                print_hits(stdout, &l.case_id, &hits).map_err(io)?;
            }
        }
        _ => return Err(CliError::Usage("give exactly one of --case-id or --query".into())),
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs, mut cfg: RunConfig, force: bool) -> CliResult<()> {
    apply_ae(&mut cfg, &args.ae);
    apply_fusion(&mut cfg, &args.fusion);
    if let Some(k) = args.folds {
        cfg.folds = k;
    }
    if let Some(s) = args.fold_seed {
        cfg.fold_seed = s;
    }
    if let Some(t) = &args.threshold {
        cfg.pipeline.threshold = parse_threshold(t)?;
    }
    let data = dataset_path(args.dataset.as_ref(), &cfg)?;
    cfg.dataset = Some(data.clone());
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| CliError::Usage("no output directory given (--out or `output` in the config)".into()))?;
    cfg.output = Some(out_dir.clone());
    cfg.validate()?;

    let mut files = names(&["metrics.csv", "metrics_excluded.csv", "summary.csv", "summary_excluded.csv", MANIFEST]);
    for fold in 0..cfg.folds {
        for f in ["ae_image_loss.csv", "ae_sequence_loss.csv", "fusion_loss.csv", "reconstruction.csv", ARCHIVE] {
            files.push(format!("fold-{fold}/{f}"));
        }
    }
    let mut out = OutputDir::new(&out_dir, force)?;
    out.claim(&files)?;

    let ds = read_dataset(&data, &cfg)?;
    let folds = make_folds(&ds, cfg.folds, cfg.fold_seed).map_err(|e| CliError::Config(e.to_string()))?;
    let outcome = cross_validate(&ds, &folds, &cfg.pipeline)?;
    if outcome.runs.is_empty() {
        return Err(CliError::Core(monogram_core::Error::Invalid("every fold was skipped".into())));
    }
    let reports = &outcome.reports;
    out.write_with("metrics.csv", |w| write_reports_csv(w, reports, AbstainPolicy::AsError))?;
    out.write_with("metrics_excluded.csv", |w| write_reports_csv(w, reports, AbstainPolicy::Excluded))?;
    out.write_with("summary.csv", |w| write_summary_csv(w, &outcome.summaries, AbstainPolicy::AsError))?;
    out.write_with("summary_excluded.csv", |w| write_summary_csv(w, &outcome.summaries, AbstainPolicy::Excluded))?;
    for run in &outcome.runs {
        let dir = format!("fold-{}", run.fold);
        out.write_with(&format!("{dir}/ae_image_loss.csv"), |w| run.ae_image.write_csv(w))?;
        out.write_with(&format!("{dir}/ae_sequence_loss.csv"), |w| run.ae_sequence.write_csv(w))?;
        out.write_with(&format!("{dir}/fusion_loss.csv"), |w| run.fusion.write_csv(w))?;
        out.write_with(&format!("{dir}/reconstruction.csv"), |w| run.reconstruction.write_csv(w))?;
        out.write_with(&format!("{dir}/{ARCHIVE}"), |w| run.archive.write_to(w))?;
    }
    for fold in &outcome.skipped {
        log::warn!("fold {fold} skipped");
    }
    let seed = cfg.fold_seed;
    out.write_manifest(manifest("evaluate", Some(seed), vec![data], cfg))
}

pub fn report_xor(args: &XorArgs, force: bool) -> CliResult<()> {
    let mut out = OutputDir::new(&args.out, force)?;
    out.claim(&names(&["xor_matrix.csv", "xor_bits.csv", "xor_summary.csv", MANIFEST]))?;
    let archive = Archive::<f32>::load(&args.archive)?;
    let sample = sample_per_class(archive.entries(), args.per_class, args.seed);
    if sample.is_empty() {
        return Err(CliError::Core(monogram_core::Error::Empty("archive")));
    }
    let matrix = xor_dissimilarity(&sample, &sample);
    out.write_with("xor_matrix.csv", |w| matrix.write_csv(w))?;
    let pairs: Vec<(&ArchiveEntry<f32>, &ArchiveEntry<f32>)> = sample
        .iter()
        .enumerate()
        .flat_map(|(i, a)| sample[i + 1..].iter().map(move |b| (a, b)))
        .collect();
    out.write_with("xor_bits.csv", |w| write_bit_grids_csv(w, &pairs))?;
    let (intra, inter) = matrix.class_means();
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_owned(), |v| format!("{v:.6}"));
    let ratio = intra.zip(inter).filter(|&(_, b)| b > 0.0).map(|(a, b)| a / b);
    out.write_with("xor_summary.csv", |w| {
        writeln!(w, "intra_mean,inter_mean,ratio")?;
        writeln!(w, "{},{},{}", fmt(intra), fmt(inter), fmt(ratio))
    })?;
    #[derive(Serialize)]
    struct XorConfig {
        per_class: usize,
        sampled: usize,
    }
    let config = XorConfig {
        per_class: args.per_class,
        sampled: sample.len(),
    };
    out.write_manifest(manifest("report xor", Some(args.seed), vec![args.archive.clone()], config))
}

pub fn report_pca(args: &PcaArgs, force: bool) -> CliResult<()> {
    let mut out = OutputDir::new(&args.out, force)?;
    out.claim(&names(&["pca.csv", "pca_variance.csv", MANIFEST]))?;
    let dump = EmbeddingDump::<f32>::read(&args.input)?;
    let rows: Vec<_> = dump.rows.iter().filter(|r| r.tag == args.tag).collect();
    if rows.is_empty() {
        return Err(CliError::Usage(format!("no rows tagged `{}` in {}", args.tag, args.input.display())));
    }
    let vectors: Vec<&[f32]> = rows.iter().map(|r| r.values.as_slice()).collect();
    let pca = pca_project(&vectors, args.components)?;
    let ids: Vec<&str> = rows.iter().map(|r| r.case_id.as_str()).collect();
    let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    let projected = pca_to_dump(&ids, &labels, &pca)?;
    out.write_with("pca.csv", |w| projected.write_to(w))?;
    out.write_with("pca_variance.csv", |w| {
        writeln!(w, "component,variance,ratio")?;
        for (i, (v, r)) in pca.explained_variance.iter().zip(&pca.explained_ratio).enumerate() {
            writeln!(w, "{},{v:.9},{r:.9}", i + 1)?;
        }
        Ok(())
    })?;
    #[derive(Serialize)]
    struct PcaConfig<'a> {
        tag: &'a str,
        requested: usize,
        kept: usize,
    }
    let config = PcaConfig {
        tag: &args.tag,
        requested: args.components,
        kept: pca.components.len(),
    };
    out.write_manifest(manifest("report pca", None, vec![args.input.clone()], config))
}

pub fn report_reconstruction(args: &ReconstructionArgs, cfg: RunConfig, force: bool) -> CliResult<()> {
    let data = dataset_path(args.dataset.as_ref(), &cfg)?;
    let mut out = OutputDir::new(&args.out, force)?;
    out.claim(&names(&["reconstruction.csv", MANIFEST]))?;
    let models = load_models(&args.models)?;
    let ds = read_dataset(&data, &cfg)?.scaled(&models.scaler)?;
    let report = reconstruction_report(&models.image_to_seq, &models.seq_to_image, &ds)?;
    out.write_with("reconstruction.csv", |w| report.write_csv(w))?;
    for s in &report.summaries {
        log::info!("{}: median cosine {:?}, mean MSE {:.6}", s.modality, s.median_cosine, s.mean_mse);
    }
    out.write_manifest(manifest("report reconstruction", None, vec![data, args.models.clone()], ()))
}

pub(crate) fn stdout_writer() -> BufWriter<std::io::Stdout> {
    BufWriter::new(std::io::stdout())
}
