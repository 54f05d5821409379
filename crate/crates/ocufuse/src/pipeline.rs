//! End-to-end evaluation: subject split, per-condition fitting on the tuning
//! half, scoring on the reporting half, and reliability analysis.

use std::collections::BTreeSet;

use log::{info, warn};
use ocufuse_core::evalkit::{
    all_session_pairs, evaluate_protocol, fido_check, EvalReport, FidoResult, FittedMethod, ProtocolData, FIDO_FAR,
};
use ocufuse_core::fusion::{
    compute_matcher_weights, sf1_weight_sweep, AggregationSpec, FusionWeights, RankFusionConfig, RankVariant,
    SweepRow, WeightReport,
};
use ocufuse_core::metriclearn::{fusion_inputs, train_ef1, Ef1Config, FusionSample, LinearFusionModel};
use ocufuse_core::reliability::{
    fit_exponential, intercorrelation, kcc_report, normality_report, ExpFit, FeatureMatrix,
};
use ocufuse_core::synthgen::{gen_embeddings, SynthEmbeddingConfig};
use ocufuse_core::{split_subjects, EmbeddingSet, Modality, SubjectSplit};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, MethodName, RunConfig, Sf2WeightMode, SynthModality};
use crate::error::{CliError, CliResult};
use crate::io::ModelFile;

pub fn synth_config(cfg: &RunConfig, modality: Modality) -> SynthEmbeddingConfig {
    let (m, label): (&SynthModality, &str) = match modality {
        Modality::Periocular => (&cfg.synth.periocular, "synth-periocular"),
        _ => (&cfg.synth.gaze, "synth-gaze"),
    };
    SynthEmbeddingConfig {
        modality,
        n_subjects: cfg.synth.n_subjects,
        rounds: cfg.synth.rounds,
        chunks_per_round: m.chunks_per_round,
        dim: m.dim,
        within_spread: m.within_spread,
        between_spread: m.between_spread,
        persistence: m.persistence,
        nuisance_dims: m.nuisance_dims,
        nuisance_spread: m.nuisance_spread,
        identity_dims: m.identity_dims,
        seed: derive_seed(cfg.seed, label),
    }
}

pub struct Inputs {
    pub gaze: EmbeddingSet,
    pub periocular: EmbeddingSet,
}

impl Inputs {
    pub fn synthesize(cfg: &RunConfig) -> CliResult<Self> {
        Ok(Self {
            gaze: gen_embeddings(&synth_config(cfg, Modality::Gaze))?,
            periocular: gen_embeddings(&synth_config(cfg, Modality::Periocular))?,
        })
    }

    /// Files named in the config, or synthetic data when none are given.
    pub fn from_config(cfg: &RunConfig) -> CliResult<Self> {
        match (&cfg.paths.gaze_embeddings, &cfg.paths.periocular_embeddings) {
            (Some(g), Some(p)) => {
                for path in [g, p] {
                    if !path.is_file() {
                        return Err(CliError::validation(format!(
                            "embeddings file {} does not exist",
                            path.display()
                        )));
                    }
                }
                Ok(Self {
                    gaze: crate::io::load_embeddings(g, Some(Modality::Gaze))?,
                    periocular: crate::io::load_embeddings(p, Some(Modality::Periocular))?,
                })
            }
            _ => Self::synthesize(cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrrCell {
    pub far_pct: f64,
    pub frr_pct: f64,
    pub frr_interpolated_pct: f64,
    pub unreachable: bool,
    pub low_resolution: bool,
}

/// One (condition, method) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub gaze_seconds: f64,
    pub images: usize,
    pub method: String,
    pub eer_pct: f64,
    pub frr: Vec<FrrCell>,
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub fido: Option<FidoResult>,
    /// Gaze weight for score-level methods.
    pub w_g: Option<f64>,
}

impl Cell {
    pub fn from_report(report: &EvalReport, w_g: Option<f64>) -> CliResult<Self> {
        let fido = match report.frr_for(FIDO_FAR) {
            Some(_) => Some(fido_check(report, report.condition.gaze_seconds)?),
            None => None,
        };
        Ok(Self {
            gaze_seconds: report.condition.gaze_seconds,
            images: report.condition.images,
            method: report.condition.method.clone(),
            eer_pct: report.eer * 100.0,
            frr: report
                .frr_at
                .iter()
                .map(|f| FrrCell {
                    far_pct: f.far_target * 100.0,
                    frr_pct: f.frr * 100.0,
                    frr_interpolated_pct: f.frr_interpolated * 100.0,
                    unreachable: f.unreachable,
                    low_resolution: f.low_resolution,
                })
                .collect(),
            n_genuine: report.n_genuine,
            n_impostor: report.n_impostor,
            fido,
            w_g,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellsFile {
    pub seed: u64,
    pub cells: Vec<Cell>,
}

/// Tuning-half artefacts of one condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionFit {
    pub gaze_seconds: f64,
    pub images: usize,
    pub sf1_sweep: Vec<SweepRow>,
    pub sf1_w_g: f64,
    pub sf2: Vec<WeightReport>,
    #[serde(skip)]
    pub ef1: Option<(AggregationSpec, ModelFile)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityEntry {
    pub gaze_seconds: f64,
    pub images: usize,
    pub source: String,
    pub n_features: usize,
    /// `None` when the subject count is too small for the normality screen.
    pub normal_count: Option<usize>,
    pub intercorrelation_median: f64,
    pub intercorrelation_max: f64,
    pub kcc_min: f64,
    pub kcc_median: f64,
    pub kcc_max: f64,
    #[serde(skip)]
    pub per_feature: Vec<(f64, Option<bool>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityOutput {
    pub entries: Vec<ReliabilityEntry>,
    /// EER (fraction) against median KCC over EMA, PIA and EF1 cells.
    pub eer_vs_kcc: Option<ExpFit>,
}

pub struct RunOutput {
    pub split: SubjectSplit,
    pub cells: Vec<Cell>,
    pub fits: Vec<ConditionFit>,
    pub reliability: Option<ReliabilityOutput>,
}

fn sessions(cfg: &RunConfig, inputs: &Inputs) -> Vec<String> {
    match &cfg.protocol.sessions {
        Some(s) => s.clone(),
        None => {
            let g: BTreeSet<&str> = inputs.gaze.sessions();
            let p: BTreeSet<&str> = inputs.periocular.sessions();
            g.intersection(&p).map(|s| s.to_string()).collect()
        }
    }
}

fn conditions(cfg: &RunConfig) -> Vec<AggregationSpec> {
    let mut out = Vec::new();
    for &k in &cfg.protocol.image_counts {
        for &n in &cfg.protocol.gaze_chunks {
            out.push(AggregationSpec {
                gaze_chunks: n,
                periocular_images: k,
            });
        }
    }
    out
}

/// Lowest tuning EER; ties go to the smaller gaze weight.
pub fn best_sweep_weight(rows: &[SweepRow]) -> f64 {
    let mut best = &rows[0];
    for r in rows {
        if r.eer < best.eer {
            best = r;
        }
    }
    best.w_g
}

pub fn ef1_config(cfg: &RunConfig) -> Ef1Config {
    Ef1Config {
        out_dim: cfg.ef1.out_dim,
        learning_rate: cfg.ef1.learning_rate,
        max_epochs: cfg.ef1.max_epochs,
        validate_every: cfg.ef1.validate_every,
        seed: cfg.seed,
        ..Ef1Config::default()
    }
}

/// Splits the tuning subjects into EF1 training and validation subjects.
pub fn ef1_subjects(cfg: &RunConfig, tuning: &BTreeSet<String>) -> CliResult<SubjectSplit> {
    Ok(split_subjects(tuning, derive_seed(cfg.seed, "ef1-validation"))?)
}

struct ConditionResult {
    fit: ConditionFit,
    cells: Vec<Cell>,
    samples: Vec<FusionSample>,
    model: Option<LinearFusionModel>,
}

fn run_condition(
    cfg: &RunConfig,
    inputs: &Inputs,
    split: &SubjectSplit,
    pairs: &[ocufuse_core::evalkit::SessionPair],
    spec: AggregationSpec,
    shared_sf2: Option<&[WeightReport]>,
) -> CliResult<ConditionResult> {
    let far_targets = cfg.far_targets();
    let methods = &cfg.protocol.methods;
    let wants = |m: MethodName| methods.contains(&m);
    let window = cfg.protocol.window_seconds;
    let tuning = ProtocolData::build(&inputs.gaze, &inputs.periocular, &split.part_a, pairs, spec)?;
    let report = ProtocolData::build(&inputs.gaze, &inputs.periocular, &split.part_b, pairs, spec)?;
    for (name, d) in [("tuning", &tuning), ("reporting", &report)] {
        if !d.skipped.is_empty() {
            warn!("{name} half: {} subjects lack some session or modality and were skipped", d.skipped.len());
        }
    }
    let gaze_seconds = spec.gaze_chunks as f64 * window;
    info!("condition {gaze_seconds} s / {} images: fitting on {} tuning subjects", spec.periocular_images, tuning.subjects.len());

    let sf1_sweep = sf1_weight_sweep(&tuning.score_pairs()?, cfg.fusion.sweep_steps, &far_targets)?;
    let sf1_w_g = best_sweep_weight(&sf1_sweep);

    let sf2 = match shared_sf2 {
        Some(shared) => shared.to_vec(),
        None => {
            let (sims, truth) = tuning.rank_inputs()?;
            let mut out = Vec::new();
            for variant in [RankVariant::RankOpt, RankVariant::Rank1Opt] {
                out.push(compute_matcher_weights(&sims, &truth, &RankFusionConfig::new(variant, cfg.fusion.w_opt)?)?);
            }
            out
        }
    };

    let mut model = None;
    let mut ef1_file = None;
    if wants(MethodName::Ef1) {
        let parts = ef1_subjects(cfg, &split.part_a)?;
        let train = fusion_inputs(&inputs.gaze, &inputs.periocular, &parts.part_a, spec)?;
        let val = fusion_inputs(&inputs.gaze, &inputs.periocular, &parts.part_b, spec)?;
        let outcome = train_ef1(&train, &val, &ef1_config(cfg))?;
        if !outcome.paper_conformant {
            info!("EF1 uses non-reference dimensions (in {}, out {})", outcome.model.in_dim(), outcome.model.out_dim());
        }
        info!("EF1 best epoch {}", outcome.best_epoch);
        ef1_file = Some((spec, ModelFile::new(&outcome.model, outcome.log.clone())));
        model = Some(outcome.model);
    }

    let mut cells = Vec::new();
    for &m in methods {
        let (method, w_g) = match m {
            MethodName::Ema => (FittedMethod::Ema, Some(1.0)),
            MethodName::Pia => (FittedMethod::Pia, Some(0.0)),
            MethodName::Sf1 => (FittedMethod::Sf1(FusionWeights::new(sf1_w_g)?), Some(sf1_w_g)),
            MethodName::Sf2RankOpt | MethodName::Sf2Rank1Opt => {
                let variant = if m == MethodName::Sf2RankOpt {
                    RankVariant::RankOpt
                } else {
                    RankVariant::Rank1Opt
                };
                let w = sf2
                    .iter()
                    .find(|r| r.variant == variant)
                    .ok_or_else(|| CliError::Internal("missing SF2 weights".into()))?
                    .fusion_weights()?;
                (
                    FittedMethod::Sf2 {
                        label: m.label().into(),
                        weights: w,
                    },
                    Some(w.w_g),
                )
            }
            MethodName::Ef1 => (FittedMethod::Ef1(model.clone().expect("trained above")), None),
            MethodName::Ef2 => (FittedMethod::Ef2, None),
        };
        let r = evaluate_protocol(&report, &method, &far_targets, window)?;
        cells.push(Cell::from_report(&r, w_g)?);
    }
    let samples = if cfg.reliability.enabled {
        fusion_inputs(&inputs.gaze, &inputs.periocular, &split.part_b.iter().filter(|s| report.subjects.contains(s)).cloned().collect(), spec)?
    } else {
        Vec::new()
    };
    Ok(ConditionResult {
        fit: ConditionFit {
            gaze_seconds,
            images: spec.periocular_images,
            sf1_sweep,
            sf1_w_g,
            sf2,
            ef1: ef1_file,
        },
        cells,
        samples,
        model,
    })
}

fn feature_matrix(samples: &[FusionSample], f: impl Fn(&FusionSample) -> CliResult<Vec<f64>>) -> CliResult<FeatureMatrix> {
    let subjects: BTreeSet<&str> = samples.iter().map(|s| s.subject.as_str()).collect();
    let rounds: BTreeSet<&str> = samples.iter().map(|s| s.session.as_str()).collect();
    let mut by_key = std::collections::BTreeMap::new();
    for s in samples {
        by_key.insert((s.subject.as_str(), s.session.as_str()), f(s)?);
    }
    let dim = by_key.values().next().map_or(0, Vec::len);
    let mut values = Vec::with_capacity(subjects.len() * rounds.len() * dim);
    let mut kept = Vec::new();
    for s in &subjects {
        if rounds.iter().all(|r| by_key.contains_key(&(*s, *r))) {
            for r in &rounds {
                values.extend_from_slice(&by_key[&(*s, *r)]);
            }
            kept.push(s.to_string());
        }
    }
    Ok(FeatureMatrix::new(kept, rounds.iter().map(|r| r.to_string()).collect(), dim, values)?)
}

fn reliability_entry(
    cfg: &RunConfig,
    spec: AggregationSpec,
    source: &str,
    m: &FeatureMatrix,
) -> CliResult<ReliabilityEntry> {
    let kcc = kcc_report(m)?;
    let seed = derive_seed(cfg.seed, "normality");
    let normal = match normality_report(m, cfg.reliability.reference_draws, cfg.reliability.band, seed) {
        Ok(r) => Some(r),
        Err(ocufuse_core::Error::InvalidArgument(msg)) => {
            warn!("{source}: normality screen skipped: {msg}");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let corr = intercorrelation(m, cfg.reliability.corr)?;
    if !corr.excluded.is_empty() {
        warn!("{source}: {} zero-variance features left out of intercorrelation", corr.excluded.len());
    }
    Ok(ReliabilityEntry {
        gaze_seconds: spec.gaze_chunks as f64 * cfg.protocol.window_seconds,
        images: spec.periocular_images,
        source: source.into(),
        n_features: m.n_features(),
        normal_count: normal.as_ref().map(|n| n.count_normal),
        intercorrelation_median: corr.median_abs,
        intercorrelation_max: corr.max_abs,
        kcc_min: kcc.min,
        kcc_median: kcc.median,
        kcc_max: kcc.max,
        per_feature: kcc
            .per_feature_w
            .iter()
            .enumerate()
            .map(|(i, w)| (*w, normal.as_ref().map(|n| n.per_feature_normal[i])))
            .collect(),
    })
}

pub fn run_pipeline(cfg: &RunConfig, inputs: &Inputs) -> CliResult<RunOutput> {
    let subjects: BTreeSet<&str> = inputs.gaze.subjects().intersection(&inputs.periocular.subjects()).copied().collect();
    let split = split_subjects(subjects, cfg.seed)?;
    let sessions = sessions(cfg, inputs);
    if sessions.len() < 2 {
        return Err(CliError::validation(format!(
            "need at least two sessions present in both modalities, found {}",
            sessions.len()
        )));
    }
    let pairs = all_session_pairs(&sessions);
    info!(
        "{} tuning / {} reporting subjects, {} session pairs",
        split.part_a.len(),
        split.part_b.len(),
        pairs.len()
    );
    let specs = conditions(cfg);
    let shared = match cfg.fusion.sf2_weights {
        Sf2WeightMode::Shared => Some(run_condition(cfg, inputs, &split, &pairs, specs[0], None)?.fit.sf2),
        Sf2WeightMode::PerCondition => None,
    };
    let results = specs
        .par_iter()
        .map(|&spec| run_condition(cfg, inputs, &split, &pairs, spec, shared.as_deref()))
        .collect::<CliResult<Vec<_>>>()?;

    let reliability = if cfg.reliability.enabled {
        let mut entries = Vec::new();
        let (mut kccs, mut eers) = (Vec::new(), Vec::new());
        for (spec, r) in specs.iter().zip(&results) {
            let mut sources: Vec<(&str, FeatureMatrix)> = vec![
                ("EMA", feature_matrix(&r.samples, |s| Ok(s.gaze.clone()))?),
                ("PIA", feature_matrix(&r.samples, |s| Ok(s.periocular.clone()))?),
            ];
            if let Some(model) = &r.model {
                sources.push(("EF1", feature_matrix(&r.samples, |s| Ok(model.apply(&s.input()?)?))?));
            }
            for (source, m) in &sources {
                let e = reliability_entry(cfg, *spec, source, m)?;
                if let Some(cell) = r.cells.iter().find(|c| c.method == *source) {
                    kccs.push(e.kcc_median);
                    eers.push(cell.eer_pct / 100.0);
                }
                entries.push(e);
            }
        }
        let eer_vs_kcc = if kccs.len() >= 3 {
            match fit_exponential(&kccs, &eers) {
                Ok(f) => Some(f),
                Err(e) => {
                    warn!("EER-vs-KCC fit skipped: {e}");
                    None
                }
            }
        } else {
            None
        };
        Some(ReliabilityOutput { entries, eer_vs_kcc })
    } else {
        None
    };
    let mut cells = Vec::new();
    let mut fits = Vec::new();
    for r in results {
        cells.extend(r.cells);
        fits.push(r.fit);
    }
    Ok(RunOutput {
        split,
        cells,
        fits,
        reliability,
    })
}
