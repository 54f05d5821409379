//! Command-line interface.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use ocufuse_core::evalkit::{Condition, EvalReport};
use ocufuse_core::fusion::{sf1_weight_sweep, AggregationSpec, FusionWeights, ScorePair};
use ocufuse_core::gazeprep::{standardize_and_fill, velocity_windows, PrepConfig, VelocityWindow};
use ocufuse_core::metriclearn::{
    fusion_inputs, train_ef1, train_toy_encoder, MiniBatchSpec, MsLossConfig, OneCycleSchedule,
};
use ocufuse_core::reliability::{intercorrelation, kcc_report, normality_report, FeatureMatrix};
use ocufuse_core::synthgen::{gen_gaze_recording, round_id, subject_id, GazeSubjectParams};
use ocufuse_core::{split_subjects, EmbeddingRecord, EmbeddingSet, Modality};
use serde::Serialize;
use serde_json::json;

use crate::config::{derive_seed, parse_far_targets, FrrMode, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io;
use crate::pipeline::{self, best_sweep_weight, Cell, CellsFile, Inputs, RunOutput};
use crate::report;

#[derive(Debug, Parser)]
#[command(name = "ocufuse", version, about = "Gaze and periocular biometric fusion toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub frr_mode: Option<FrrMode>,
    /// Configuration override `dotted.key=value`, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Comma-separated FAR targets in percent.
    #[arg(long, global = true, value_name = "PCT,...")]
    pub far_targets: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Gaze,
    Periocular,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic embeddings, sample gaze recordings and a manifest config.
    Synth,
    /// Turn gaze CSV recordings into velocity windows; optionally train the toy encoder.
    Prep {
        /// A gaze CSV file or a directory of `{subject}_{session}.csv` files.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        train_encoder: bool,
        #[arg(long, default_value_t = 32)]
        embed_dim: usize,
        /// Encoder epochs; the warm-up covers the first 30%.
        #[arg(long, default_value_t = 100)]
        epochs: u32,
    },
    /// Train the EF1 linear fusion model on the tuning half.
    TrainEf1 {
        #[arg(long)]
        gaze_chunks: Option<usize>,
        #[arg(long)]
        images: Option<usize>,
    },
    /// Fuse gaze and periocular scores from a score-pair CSV with SF1.
    Fuse {
        #[arg(long)]
        scores: PathBuf,
        /// Gaze weight; chosen by the EER sweep when absent.
        #[arg(long)]
        w_g: Option<f64>,
    },
    /// EER and FRR at the FAR targets for a score-pair CSV.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        w_g: f64,
        /// Verification time recorded in the FIDO check.
        #[arg(long, default_value_t = 5.0)]
        seconds: f64,
    },
    /// Kendall's W, normality and intercorrelation of embedding features.
    Reliability {
        #[arg(long, value_enum, default_value_t = ModalityArg::Both)]
        modality: ModalityArg,
    },
    /// Render report.md and report.csv from a cells.json file.
    Report {
        #[arg(long)]
        cells: PathBuf,
    },
    /// FIDO pass/fail for every cell of a cells.json file.
    FidoCheck {
        #[arg(long)]
        cells: PathBuf,
    },
    /// Full evaluation over all conditions and methods.
    Run,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn resolve_config(g: &GlobalArgs) -> CliResult<RunConfig> {
    let mut overrides = g.set.clone();
    if let Some(s) = g.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(o) = &g.out {
        overrides.push(format!("out_dir={}", json!(o.to_string_lossy())));
    }
    if let Some(m) = g.frr_mode {
        overrides.push(format!("frr_mode={}", serde_json::to_string(&m).expect("enum")));
    }
    if let Some(list) = &g.far_targets {
        overrides.push(format!("far_targets_pct={}", json!(parse_far_targets(list)?)));
    }
    if g.threads == Some(0) {
        return Err(CliError::validation("--threads must be positive"));
    }
    RunConfig::load(g.config.as_deref(), &overrides)
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(&cli.global)?;
    if let Some(n) = cli.global.threads {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            warn!("thread pool already initialised; --threads ignored");
        }
    }
    let out = cfg.out_dir.clone();
    match &cli.command {
        Command::Synth => cmd_synth(&cfg, &out),
        Command::Prep {
            input,
            train_encoder,
            embed_dim,
            epochs,
        } => cmd_prep(&cfg, &out, input, *train_encoder, *embed_dim, *epochs),
        Command::TrainEf1 { gaze_chunks, images } => cmd_train_ef1(&cfg, &out, *gaze_chunks, *images),
        Command::Fuse { scores, w_g } => cmd_fuse(&cfg, &out, scores, *w_g),
        Command::Eval { scores, w_g, seconds } => cmd_eval(&cfg, &out, scores, *w_g, *seconds),
        Command::Reliability { modality } => cmd_reliability(&cfg, &out, *modality),
        Command::Report { cells } => {
            let file: CellsFile = io::read_json(cells)?;
            write_reports(&out, &file.cells, cfg.frr_mode)
        }
        Command::FidoCheck { cells } => cmd_fido(&out, cells),
        Command::Run => cmd_run(&cfg, &out),
    }
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let inputs = Inputs::synthesize(cfg)?;
    let params = GazeSubjectParams::default();
    let n = cfg.synth.gaze_recording_subjects;
    let mut recordings = Vec::new();
    for s in 0..n {
        for r in 0..cfg.synth.rounds {
            let (subject, session) = (subject_id(s, n), round_id(r));
            let seed = derive_seed(cfg.seed, &format!("gaze-recording/{subject}/{session}"));
            let rec = gen_gaze_recording(
                &params,
                &subject,
                &session,
                cfg.synth.gaze_recording_seconds,
                ocufuse_core::gazeprep::DEFAULT_SAMPLE_RATE_HZ,
                seed,
            )?;
            recordings.push(rec);
        }
    }
    let gaze_path = out.join("gaze_embeddings.jsonl");
    let peri_path = out.join("periocular_embeddings.jsonl");
    io::save_embeddings(&inputs.gaze, &gaze_path)?;
    io::save_embeddings(&inputs.periocular, &peri_path)?;
    for rec in &recordings {
        io::save_gaze_csv(rec, &out.join("gaze").join(io::gaze_file_name(&rec.subject_id, &rec.session_id)))?;
    }
    let mut manifest = cfg.clone();
    manifest.paths.gaze_embeddings = Some(gaze_path);
    manifest.paths.periocular_embeddings = Some(peri_path);
    io::write_json(&out.join("config.json"), &manifest)?;
    println!(
        "wrote {} gaze and {} periocular embeddings, {} gaze recordings to {}",
        inputs.gaze.len(),
        inputs.periocular.len(),
        recordings.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct WindowRow<'a> {
    subject: &'a str,
    session: &'a str,
    window_index: u32,
    samples: &'a [[f64; 2]],
}

fn cmd_prep(cfg: &RunConfig, out: &Path, input: &Path, train: bool, embed_dim: usize, epochs: u32) -> CliResult<()> {
    let files: Vec<PathBuf> = if input.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(input)
            .map_err(|e| CliError::io(input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        v.sort();
        v
    } else {
        vec![input.to_path_buf()]
    };
    if files.is_empty() {
        return Err(CliError::input(input, "no gaze CSV files found"));
    }
    let prep = PrepConfig::default();
    let mut windows: Vec<(String, String, VelocityWindow)> = Vec::new();
    for f in &files {
        let (subject, session) = io::parse_gaze_file_name(f)
            .ok_or_else(|| CliError::input(f, "file name must be {subject}_{session}.csv"))?;
        let rec = io::load_gaze_csv(f, &subject, &session)?;
        let p = velocity_windows(&rec, &prep)?;
        if p.too_short {
            warn!("{}: shorter than the differentiation window", f.display());
        }
        if p.windows.is_empty() {
            warn!("{}: shorter than one {} s window, skipped", f.display(), prep.window_seconds);
        }
        windows.extend(p.windows.into_iter().map(|w| (subject.clone(), session.clone(), w)));
    }
    if windows.is_empty() {
        return Err(CliError::input(input, "no complete velocity window in any recording"));
    }
    let mut subjects: BTreeMap<String, usize> = BTreeMap::new();
    for (s, _, _) in &windows {
        let next = subjects.len();
        subjects.entry(s.clone()).or_insert(next);
    }
    let trained = if train {
        if subjects.len() < 2 {
            return Err(CliError::validation("encoder training needs at least two subjects"));
        }
        if embed_dim == 0 || epochs < 2 {
            return Err(CliError::validation("--embed-dim must be positive and --epochs at least 2"));
        }
        let labels: Vec<usize> = windows.iter().map(|(s, _, _)| subjects[s]).collect();
        let raw: Vec<VelocityWindow> = windows.iter().map(|(_, _, w)| w.clone()).collect();
        let spec = MiniBatchSpec {
            classes_per_batch: subjects.len().min(16),
            ..MiniBatchSpec::default()
        };
        let schedule = OneCycleSchedule {
            warm_epochs: (epochs * 3 / 10).max(1),
            total_epochs: epochs,
            ..OneCycleSchedule::default()
        };
        info!("training toy encoder on {} windows of {} subjects", raw.len(), subjects.len());
        let outcome = train_toy_encoder(
            &raw,
            &labels,
            embed_dim,
            spec,
            schedule,
            MsLossConfig::default(),
            derive_seed(cfg.seed, "toy-encoder"),
        )?;
        let std_windows = standardize_and_fill(&raw, &outcome.stats);
        let mut records = Vec::with_capacity(std_windows.len());
        for ((s, r, _), w) in windows.iter().zip(&std_windows) {
            records.push(EmbeddingRecord::new(
                s.clone(),
                r.clone(),
                Modality::Gaze,
                w.window_index,
                outcome.encoder.apply(&w.flatten())?,
            ));
        }
        Some((outcome, EmbeddingSet::new(records)?))
    } else {
        None
    };
    let mut lines = Vec::new();
    for (s, r, w) in &windows {
        serde_json::to_writer(
            &mut lines,
            &WindowRow {
                subject: s,
                session: r,
                window_index: w.window_index,
                samples: &w.samples,
            },
        )
        .map_err(|e| CliError::Internal(e.to_string()))?;
        lines.push(b'\n');
    }
    io::write_atomic(&out.join("velocity_windows.jsonl"), &lines)?;
    if let Some((outcome, set)) = trained {
        io::save_embeddings(&set, &out.join("gaze_embeddings.jsonl"))?;
        io::write_json(
            &out.join("encoder.json"),
            &json!({
                "in_dim": outcome.encoder.in_dim(),
                "out_dim": outcome.encoder.out_dim(),
                "seed": outcome.encoder.seed(),
                "weights": outcome.encoder.weights(),
                "standardization": outcome.stats,
                "epoch_losses": outcome.epoch_losses,
                "learning_rates": outcome.learning_rates,
            }),
        )?;
    }
    println!("{} windows from {} recordings", windows.len(), files.len());
    Ok(())
}

fn cmd_train_ef1(cfg: &RunConfig, out: &Path, gaze_chunks: Option<usize>, images: Option<usize>) -> CliResult<()> {
    let spec = AggregationSpec {
        gaze_chunks: gaze_chunks.unwrap_or_else(|| *cfg.protocol.gaze_chunks.iter().max().expect("validated")),
        periocular_images: images.unwrap_or_else(|| *cfg.protocol.image_counts.iter().max().expect("validated")),
    };
    spec.validate()?;
    let inputs = Inputs::from_config(cfg)?;
    let subjects: std::collections::BTreeSet<&str> = inputs.gaze.subjects();
    let split = split_subjects(subjects, cfg.seed)?;
    let parts = pipeline::ef1_subjects(cfg, &split.part_a)?;
    let train = fusion_inputs(&inputs.gaze, &inputs.periocular, &parts.part_a, spec)?;
    let val = fusion_inputs(&inputs.gaze, &inputs.periocular, &parts.part_b, spec)?;
    let outcome = train_ef1(&train, &val, &pipeline::ef1_config(cfg))?;
    let path = out.join("models").join(model_name(spec));
    io::save_model(&io::ModelFile::new(&outcome.model, outcome.log), &path)?;
    println!("best epoch {}; model written to {}", outcome.best_epoch, path.display());
    Ok(())
}

pub fn model_name(spec: AggregationSpec) -> String {
    format!("ef1_g{}_i{}.json", spec.gaze_chunks, spec.periocular_images)
}

#[derive(Serialize)]
struct FusedRow<'a> {
    probe_subject: &'a str,
    gallery_subject: &'a str,
    score: f64,
    genuine: u8,
}

fn sweep_rows(cfg: &RunConfig, rows: &[ocufuse_core::fusion::SweepRow]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["w_g".to_string(), "eer_pct".to_string()];
    for f in &cfg.far_targets_pct {
        header.push(format!("frr_at_{}_pct", report::far_label(*f)));
    }
    let body = rows
        .iter()
        .map(|r| {
            let mut v = vec![format!("{}", r.w_g), format!("{}", r.eer * 100.0)];
            v.extend(r.frr.iter().map(|f| format!("{}", f.frr * 100.0)));
            v
        })
        .collect();
    (header, body)
}

fn cmd_fuse(cfg: &RunConfig, out: &Path, scores: &Path, w_g: Option<f64>) -> CliResult<()> {
    let pairs = io::load_score_pairs(scores)?;
    let sweep = sf1_weight_sweep(&pairs, cfg.fusion.sweep_steps, &cfg.far_targets())?;
    let w = match w_g {
        Some(w) => FusionWeights::new(w)?,
        None => FusionWeights::new(best_sweep_weight(&sweep))?,
    };
    let fused: Vec<FusedRow> = pairs
        .iter()
        .map(|p| FusedRow {
            probe_subject: &p.probe,
            gallery_subject: &p.gallery,
            score: ocufuse_core::fusion::sf1_fuse(p.s_gaze, p.s_periocular, w),
            genuine: u8::from(p.genuine),
        })
        .collect();
    let (header, rows) = sweep_rows(cfg, &sweep);
    io::write_csv(&out.join("fused_scores.csv"), &fused)?;
    io::write_table(&out.join("sf1_sweep.csv"), &header, &rows)?;
    println!("SF1 with w_g = {} over {} pairs", w.w_g, pairs.len());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, out: &Path, scores: &Path, w_g: f64, seconds: f64) -> CliResult<()> {
    if !(seconds > 0.0) {
        return Err(CliError::validation("--seconds must be positive"));
    }
    let pairs = io::load_score_pairs(scores)?;
    let fars = cfg.far_targets();
    let mut cells = Vec::new();
    for (label, w) in [
        ("EMA", FusionWeights::gaze_only()),
        ("PIA", FusionWeights::periocular_only()),
        ("SF1", FusionWeights::new(w_g)?),
    ] {
        let set = ScorePair::fused_scores(&pairs, w)?;
        let condition = Condition {
            gaze_seconds: seconds,
            images: 0,
            method: label.into(),
        };
        let report = EvalReport::from_scores(condition, &set, &fars)?;
        cells.push(Cell::from_report(&report, Some(w.w_g))?);
    }
    io::write_json(&out.join("cells.json"), &CellsFile { seed: cfg.seed, cells: cells.clone() })?;
    write_reports(out, &cells, cfg.frr_mode)?;
    for c in &cells {
        println!("{}: EER {:.3}%", c.method, c.eer_pct);
    }
    Ok(())
}

fn cmd_reliability(cfg: &RunConfig, out: &Path, modality: ModalityArg) -> CliResult<()> {
    let inputs = Inputs::from_config(cfg)?;
    let mut sets = Vec::new();
    if modality != ModalityArg::Periocular {
        sets.push((Modality::Gaze, &inputs.gaze));
    }
    if modality != ModalityArg::Gaze {
        sets.push((Modality::Periocular, &inputs.periocular));
    }
    let mut summary = Vec::new();
    let mut rows = Vec::new();
    for (m, set) in sets {
        let fm = FeatureMatrix::from_embeddings(set, m)?;
        let kcc = kcc_report(&fm)?;
        let norm = normality_report(
            &fm,
            cfg.reliability.reference_draws,
            cfg.reliability.band,
            derive_seed(cfg.seed, "normality"),
        )?;
        let corr = intercorrelation(&fm, cfg.reliability.corr)?;
        for (i, (w, n)) in kcc.per_feature_w.iter().zip(&norm.per_feature_normal).enumerate() {
            rows.push(vec![m.as_str().to_string(), i.to_string(), format!("{w}"), n.to_string()]);
        }
        summary.push(json!({
            "modality": m.as_str(),
            "n_subjects": fm.n_subjects(),
            "n_rounds": fm.n_rounds(),
            "n_features": fm.n_features(),
            "kcc_min": kcc.min,
            "kcc_median": kcc.median,
            "kcc_max": kcc.max,
            "normal_count": norm.count_normal,
            "intercorrelation": corr,
        }));
    }
    io::write_json(&out.join("reliability.json"), &summary)?;
    io::write_table(
        &out.join("reliability.csv"),
        &["modality", "feature", "kcc", "normal"].map(String::from),
        &rows,
    )?;
    println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| CliError::Internal(e.to_string()))?);
    Ok(())
}

fn cmd_fido(out: &Path, cells: &Path) -> CliResult<()> {
    let file: CellsFile = io::read_json(cells)?;
    let mut rows = Vec::new();
    for c in &file.cells {
        let line = match &c.fido {
            Some(f) => format!(
                "{} {} s {} images: FRR {:.3}% {}",
                c.method,
                c.gaze_seconds,
                c.images,
                f.frr * 100.0,
                if f.pass { "PASS" } else { "FAIL" }
            ),
            None => format!("{} {} s {} images: no FRR at FAR 0.002%", c.method, c.gaze_seconds, c.images),
        };
        println!("{line}");
        rows.push(json!({
            "method": c.method,
            "gaze_seconds": c.gaze_seconds,
            "images": c.images,
            "fido": c.fido,
        }));
    }
    io::write_json(&out.join("fido.json"), &rows)
}

pub fn write_reports(out: &Path, cells: &[Cell], mode: FrrMode) -> CliResult<()> {
    io::write_table(
        &out.join("report.csv"),
        &report::csv_header(cells, mode),
        &report::csv_rows(cells, mode),
    )?;
    io::write_atomic(&out.join("report.md"), report::markdown(cells, mode).as_bytes())
}

/// Writes every artefact of a finished run.
pub fn write_run(cfg: &RunConfig, out: &Path, run: &RunOutput) -> CliResult<()> {
    io::write_json(&out.join("config.json"), cfg)?;
    io::write_json(&out.join("split.json"), &json!({
        "seed": run.split.seed,
        "tuning": run.split.part_a,
        "reporting": run.split.part_b,
    }))?;
    io::write_json(&out.join("cells.json"), &CellsFile { seed: cfg.seed, cells: run.cells.clone() })?;
    write_reports(out, &run.cells, cfg.frr_mode)?;
    io::write_json(&out.join("weights.json"), &run.fits)?;
    let mut header = vec!["gaze_seconds".to_string(), "images".to_string()];
    let mut rows = Vec::new();
    for fit in &run.fits {
        let (h, body) = sweep_rows(cfg, &fit.sf1_sweep);
        if rows.is_empty() {
            header.extend(h);
        }
        for r in body {
            let mut row = vec![format!("{}", fit.gaze_seconds), fit.images.to_string()];
            row.extend(r);
            rows.push(row);
        }
        if let Some((spec, model)) = &fit.ef1 {
            io::save_model(model, &out.join("models").join(model_name(*spec)))?;
        }
    }
    io::write_table(&out.join("sf1_sweep.csv"), &header, &rows)?;
    if let Some(rel) = &run.reliability {
        io::write_json(&out.join("reliability.json"), rel)?;
        let mut rows = Vec::new();
        for e in &rel.entries {
            for (i, (w, n)) in e.per_feature.iter().enumerate() {
                rows.push(vec![
                    format!("{}", e.gaze_seconds),
                    e.images.to_string(),
                    e.source.clone(),
                    i.to_string(),
                    format!("{w}"),
                    n.map_or(String::new(), |n| n.to_string()),
                ]);
            }
        }
        io::write_table(
            &out.join("reliability.csv"),
            &["gaze_seconds", "images", "source", "feature", "kcc", "normal"].map(String::from),
            &rows,
        )?;
    }
    Ok(())
}

fn cmd_run(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let inputs = Inputs::from_config(cfg)?;
    let run = pipeline::run_pipeline(cfg, &inputs)?;
    write_run(cfg, out, &run)?;
    print!("{}", report::markdown(&run.cells, cfg.frr_mode));
    Ok(())
}
