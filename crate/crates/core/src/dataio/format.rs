//! On-disk dataset layout.
//!
//! ```text
//! <dir>/dataset.json                 {"version": "nbci-dataset-v1", "sessions": [...]}
//! <dir>/session_000.json             session manifest
//! <dir>/session_000_trial_000.csv    t,ch1,...,chN   (one row per sample)
//! ```
//!
//! The session manifest carries `subject_id`, `condition`, `sample_rate_hz`,
//! `blocks: [{kind, duration_s}]`, `seed`, `channel_ids` and the trial list.
//! Extra `hbr_*`, `hbt_*`, `deoxy_*` or `total_*` columns are accepted and
//! ignored. Values are written in shortest round-trip form, so a save/load
//! cycle is lossless.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{BlockKind, BlockTiming, Condition, DataError, Session, SessionSet, TaskLabel, Trial};

pub const DATASET_INDEX: &str = "dataset.json";
pub const DATASET_VERSION: &str = "nbci-dataset-v1";

const IGNORED_PREFIXES: [&str; 4] = ["hbr_", "hbt_", "deoxy_", "total_"];

#[derive(Serialize, Deserialize)]
struct DatasetIndex {
    version: String,
    sessions: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct BlockEntry {
    kind: BlockKind,
    duration_s: f64,
}

#[derive(Serialize, Deserialize)]
struct TrialEntry {
    file: String,
    label: TaskLabel,
}

#[derive(Serialize, Deserialize)]
struct SessionManifest {
    subject_id: String,
    condition: Condition,
    sample_rate_hz: f64,
    blocks: Vec<BlockEntry>,
    seed: u64,
    channel_ids: Vec<u16>,
    trials: Vec<TrialEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(file: &Path, line: usize, field: &str, message: impl Into<String>) -> DataError {
    DataError::Parse {
        file: file.to_path_buf(),
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn json_err(file: &Path, e: serde_json::Error) -> DataError {
    parse_err(file, e.line(), "json", e.to_string())
}

pub fn save_dataset(set: &SessionSet, dir: impl AsRef<Path>) -> Result<(), DataError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut names = Vec::with_capacity(set.sessions.len());
    for (si, session) in set.sessions.iter().enumerate() {
        let name = format!("session_{si:03}.json");
        let mut trials = Vec::with_capacity(session.trials().len());
        for (ti, trial) in session.trials().iter().enumerate() {
            let file = format!("session_{si:03}_trial_{ti:03}.csv");
            write_trial_csv(&dir.join(&file), trial)?;
            trials.push(TrialEntry {
                file,
                label: trial.label(),
            });
        }
        let manifest = SessionManifest {
            subject_id: session.subject_id().to_string(),
            condition: session.condition(),
            sample_rate_hz: session.sample_rate_hz(),
            blocks: session
                .block_timing()
                .blocks()
                .into_iter()
                .map(|(kind, duration_s)| BlockEntry { kind, duration_s })
                .collect(),
            seed: session.seed(),
            channel_ids: session.channel_ids().to_vec(),
            trials,
        };
        write_json(&dir.join(&name), &manifest)?;
        names.push(name);
    }
    write_json(
        &dir.join(DATASET_INDEX),
        &DatasetIndex {
            version: DATASET_VERSION.into(),
            sessions: names,
        },
    )
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DataError> {
    let text = serde_json::to_string_pretty(value).expect("manifest serialises");
    fs::write(path, text).map_err(io_err(path))
}

fn write_trial_csv(path: &Path, trial: &Trial) -> Result<(), DataError> {
    let mut buf = String::with_capacity(trial.samples().len() * 20);
    buf.push('t');
    for id in trial.channel_ids() {
        buf.push_str(&format!(",ch{id}"));
    }
    buf.push('\n');
    let fs_hz = trial.sample_rate_hz();
    for (i, column) in trial.samples().columns().into_iter().enumerate() {
        buf.push_str(&format!("{}", i as f64 / fs_hz));
        for v in column {
            buf.push_str(&format!(",{v}"));
        }
        buf.push('\n');
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(buf.as_bytes()).map_err(io_err(path))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<SessionSet, DataError> {
    let dir = dir.as_ref();
    let index_path = dir.join(DATASET_INDEX);
    let text = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
    let index: DatasetIndex = serde_json::from_str(&text).map_err(|e| json_err(&index_path, e))?;
    if index.version != DATASET_VERSION {
        return Err(parse_err(
            &index_path,
            1,
            "version",
            format!("unsupported dataset version `{}`", index.version),
        ));
    }
    let sessions = index
        .sessions
        .iter()
        .map(|name| load_session(dir, name))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SessionSet::new(sessions))
}

fn load_session(dir: &Path, name: &str) -> Result<Session, DataError> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m: SessionManifest = serde_json::from_str(&text).map_err(|e| json_err(&path, e))?;
    let timing = timing_from_blocks(&path, &m.blocks)?;
    super::validate_channel_ids(&m.channel_ids).map_err(|msg| parse_err(&path, 1, "channel_ids", msg))?;
    let trials = m
        .trials
        .iter()
        .map(|entry| {
            let csv = dir.join(&entry.file);
            let samples = read_trial_csv(&csv, &m.channel_ids)?;
            Trial::new(samples, entry.label, m.sample_rate_hz, m.channel_ids.clone())
                .map_err(|e| parse_err(&csv, 1, "trial", e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Session::with_montage(
        trials,
        timing,
        m.condition,
        m.subject_id,
        m.seed,
        m.channel_ids,
        m.sample_rate_hz,
    )
    .map_err(|e| parse_err(&path, 1, "session", e.to_string()))
}

fn timing_from_blocks(path: &Path, blocks: &[BlockEntry]) -> Result<BlockTiming, DataError> {
    let kinds: Vec<BlockKind> = blocks.iter().map(|b| b.kind).collect();
    if kinds != [BlockKind::Rest, BlockKind::Task, BlockKind::Rest] {
        return Err(parse_err(path, 1, "blocks", "blocks must be [rest, task, rest]"));
    }
    Ok(BlockTiming {
        rest_pre_s: blocks[0].duration_s,
        task_s: blocks[1].duration_s,
        rest_post_s: blocks[2].duration_s,
    })
}

fn read_trial_csv(path: &Path, channel_ids: &[u16]) -> Result<Array2<f64>, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "header", "missing header row"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") {
        return Err(parse_err(path, 1, "t", "first column must be `t`"));
    }
    // Positions of the oxy-Hb columns and their channel ids.
    let mut oxy = Vec::new();
    for (pos, name) in cols.iter().enumerate().skip(1) {
        if IGNORED_PREFIXES.iter().any(|p| name.starts_with(p)) {
            continue;
        }
        let id = name
            .strip_prefix("ch")
            .and_then(|n| n.parse::<u16>().ok())
            .ok_or_else(|| parse_err(path, 1, name, "expected a `chN` column"))?;
        if let Some(&(_, prev)) = oxy.last() {
            if id <= prev {
                return Err(parse_err(
                    path,
                    1,
                    name,
                    format!("channel ids must be strictly increasing ({prev} then {id})"),
                ));
            }
        }
        oxy.push((pos, id));
    }
    if oxy.len() != channel_ids.len() {
        return Err(parse_err(
            path,
            1,
            "header",
            format!(
                "channel count mismatch: {} channel columns, {} declared",
                oxy.len(),
                channel_ids.len()
            ),
        ));
    }
    if let Some(((_, id), want)) = oxy.iter().zip(channel_ids).find(|((_, id), want)| id != *want) {
        return Err(parse_err(
            path,
            1,
            &format!("ch{id}"),
            format!("column is ch{id}, manifest declares ch{want}"),
        ));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); oxy.len()];
    let mut rows = 0;
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(parse_err(
                path,
                ln + 1,
                "row",
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        fields[0]
            .parse::<f64>()
            .map_err(|e| parse_err(path, ln + 1, "t", e.to_string()))?;
        for (slot, &(pos, _)) in oxy.iter().enumerate() {
            let v = fields[pos]
                .parse::<f64>()
                .map_err(|e| parse_err(path, ln + 1, cols[pos], e.to_string()))?;
            columns[slot].push(v);
        }
        rows += 1;
    }
    let flat: Vec<f64> = columns.into_iter().flatten().collect();
    Array2::from_shape_vec((oxy.len(), rows), flat)
        .map_err(|e| parse_err(path, 1, "shape", e.to_string()))
}
