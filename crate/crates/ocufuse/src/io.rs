//! File formats: embedding JSON-Lines, gaze CSV, score-pair CSV, model and
//! report JSON. Every writer goes through a temporary file and a rename so
//! readers never see partial output.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use ocufuse_core::fusion::ScorePair;
use ocufuse_core::gazeprep::GazeRecording;
use ocufuse_core::metriclearn::{LinearFusionModel, TrainingLogEntry};
use ocufuse_core::{EmbeddingRecord, EmbeddingSet, Modality};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[derive(Deserialize)]
struct RawRecord {
    subject: String,
    session: String,
    modality: Modality,
    chunk: u32,
    vector: Vec<Option<f64>>,
}

/// Reads an embedding JSON-Lines file. An empty file gives an empty set.
pub fn load_embeddings(path: &Path, expected: Option<Modality>) -> CliResult<EmbeddingSet> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let parse_err = |line: usize, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let no = i + 1;
        if line.trim().is_empty() {
            return Err(parse_err(no, "blank line".into()));
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| parse_err(no, e.to_string()))?;
        if let Some(m) = expected {
            if raw.modality != m {
                return Err(CliError::input(
                    path,
                    format!("line {no}: modality {} where {m} was expected", raw.modality),
                ));
            }
        }
        let vector = raw
            .vector
            .iter()
            .enumerate()
            .map(|(j, v)| {
                v.ok_or_else(|| {
                    CliError::Core(ocufuse_core::Error::Data(format!(
                        "{}:{no}: coordinate {j} is null (NaN is not representable)",
                        path.display()
                    )))
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        records.push(EmbeddingRecord::new(raw.subject, raw.session, raw.modality, raw.chunk, vector));
    }
    EmbeddingSet::new(records).map_err(|e| match e {
        ocufuse_core::Error::Schema(m) => {
            ocufuse_core::Error::Schema(format!("{}: {m}", path.display())).into()
        }
        ocufuse_core::Error::Data(m) => ocufuse_core::Error::Data(format!("{}: {m}", path.display())).into(),
        other => other.into(),
    })
}

/// One JSON object per line, in the set's record order.
pub fn save_embeddings(set: &EmbeddingSet, path: &Path) -> CliResult<()> {
    let mut out = Vec::with_capacity(set.len() * 64);
    for r in set.records() {
        serde_json::to_writer(&mut out, r).map_err(|e| CliError::Internal(e.to_string()))?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

/// Gaze CSV with header `t_s,x_deg,y_deg`.
pub fn save_gaze_csv(rec: &GazeRecording, path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t_s", "x_deg", "y_deg"]).map_err(|e| CliError::Internal(e.to_string()))?;
    for (i, (x, y)) in rec.horizontal_deg.iter().zip(&rec.vertical_deg).enumerate() {
        let t = i as f64 / rec.sample_rate_hz;
        w.serialize((t, x, y)).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Reads a gaze CSV; the sample rate is recovered from the median time step.
pub fn load_gaze_csv(path: &Path, subject: &str, session: &str) -> CliResult<GazeRecording> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::input(path, e))?;
    let headers = r.headers().map_err(|e| CliError::input(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t_s", "x_deg", "y_deg"] {
        return Err(CliError::input(path, "expected header t_s,x_deg,y_deg"));
    }
    let (mut t, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (i, row) in r.deserialize::<(f64, f64, f64)>().enumerate() {
        let (ti, xi, yi) = row.map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?;
        t.push(ti);
        x.push(xi);
        y.push(yi);
    }
    if t.len() < 2 {
        return Err(CliError::input(path, "need at least two samples"));
    }
    let mut dt: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    dt.sort_by(f64::total_cmp);
    let step = dt[dt.len() / 2];
    if !(step > 0.0) {
        return Err(CliError::input(path, "timestamps must increase"));
    }
    let rate = (1e6 / step).round() / 1e6;
    Ok(GazeRecording::new(subject, session, rate, x, y)?)
}

/// Gaze files are named `<subject>_<session>.csv`.
pub fn gaze_file_name(subject: &str, session: &str) -> String {
    format!("{subject}_{session}.csv")
}

pub fn parse_gaze_file_name(path: &Path) -> Option<(String, String)> {
    let stem = path.file_stem()?.to_str()?;
    let (subject, session) = stem.rsplit_once('_')?;
    Some((subject.to_string(), session.to_string()))
}

#[derive(Serialize, Deserialize)]
struct PairRow {
    probe_subject: String,
    gallery_subject: String,
    s_gaze: f64,
    s_periocular: f64,
    genuine: u8,
}

pub fn save_score_pairs(pairs: &[ScorePair], path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in pairs {
        w.serialize(PairRow {
            probe_subject: p.probe.clone(),
            gallery_subject: p.gallery.clone(),
            s_gaze: p.s_gaze,
            s_periocular: p.s_periocular,
            genuine: u8::from(p.genuine),
        })
        .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn load_score_pairs(path: &Path) -> CliResult<Vec<ScorePair>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::input(path, e))?;
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<PairRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if row.genuine > 1 {
            return Err(CliError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("genuine must be 0 or 1, got {}", row.genuine),
            });
        }
        out.push(ScorePair {
            probe: row.probe_subject,
            gallery: row.gallery_subject,
            s_gaze: row.s_gaze,
            s_periocular: row.s_periocular,
            genuine: row.genuine == 1,
        });
    }
    Ok(out)
}

/// On-disk EF1 model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub in_dim: usize,
    pub out_dim: usize,
    pub seed: u64,
    pub weights: Vec<f64>,
    pub training_log: Vec<TrainingLogEntry>,
}

impl ModelFile {
    pub fn new(model: &LinearFusionModel, training_log: Vec<TrainingLogEntry>) -> Self {
        Self {
            in_dim: model.in_dim(),
            out_dim: model.out_dim(),
            seed: model.seed(),
            weights: model.weights().to_vec(),
            training_log,
        }
    }

    pub fn model(&self) -> CliResult<LinearFusionModel> {
        Ok(LinearFusionModel::from_weights(
            self.out_dim,
            self.in_dim,
            self.weights.clone(),
            self.seed,
        )?)
    }
}

pub fn save_model(file: &ModelFile, path: &Path) -> CliResult<()> {
    write_json(path, file)
}

pub fn load_model(path: &Path) -> CliResult<LinearFusionModel> {
    read_json::<ModelFile>(path)?.model().map_err(|e| match e {
        CliError::Core(c) => CliError::input(path, c),
        other => other,
    })
}

/// Writes CSV rows serialized from `rows` (header from field names).
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// CSV with an explicit header and pre-formatted cells.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Internal(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(path, &bytes)
}
