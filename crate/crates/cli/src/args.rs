//! Command-line flags and their config-file mirror.
//!
//! Every subcommand flag can also be set in a TOML config file given with
//! `--config`. Keys are the long flag names without the leading dashes.
//! Top-level keys apply to every subcommand; a table named after a subcommand
//! applies to that subcommand only and wins over top-level keys. Flags given
//! on the command line win over both.
//!
//! ```toml
//! seed = 7
//! hop = 14
//!
//! [train]
//! group = "both"
//! c-grid = [0.1, 1.0, 10.0]
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Parser)]
#[command(name = "nbci", version, about = "Hemodynamic BCI pipeline: data, channel selection, ensembles, online decoding")]
pub struct Cli {
    /// TOML file mirroring the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
    /// Rank channels by recursive channel elimination.
    Rce(RceArgs),
    /// Train the E1/E2 ensembles.
    Train(TrainArgs),
    /// Evaluate a trained ensemble on a dataset.
    Eval(EvalArgs),
    /// Replay a dataset through the online decoder and send commands over UDP.
    Stream(StreamArgs),
    /// Run the haptic device simulator.
    Haptic(HapticArgs),
    /// Check that streamed decoding matches batch decoding window for window.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Rce(_) => "rce",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Stream(_) => "stream",
            Command::Haptic(_) => "haptic",
            Command::Replay(_) => "replay",
        }
    }
}

/// PCA components per channel: an integer count or a variance fraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Components {
    Fixed(usize),
    Variance(f64),
}

impl FromStr for Components {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(k) = s.parse::<usize>() {
            return Ok(Components::Fixed(k));
        }
        match s.parse::<f64>() {
            Ok(f) if f > 0.0 && f <= 1.0 => Ok(Components::Variance(f)),
            _ => Err(format!("`{s}` is neither a component count nor a variance fraction in (0, 1]")),
        }
    }
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenerateArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of sessions (default 2).
    #[arg(long)]
    pub sessions: Option<usize>,
    /// Trials per session (default 20).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Response amplitude in noise standard deviations (default 1.0).
    #[arg(long)]
    pub snr: Option<f64>,
    /// MI or AOMI (default MI).
    #[arg(long)]
    pub condition: Option<String>,
    /// Montage size (default 45).
    #[arg(long)]
    pub n_channels: Option<u16>,
    /// Channels responding to both tasks.
    #[arg(long, value_delimiter = ',')]
    pub task: Option<Vec<u16>>,
    /// Channels responding to RIGHT only (default 5,12,19,26 when no channel set is given).
    #[arg(long, value_delimiter = ',')]
    pub right: Option<Vec<u16>>,
    /// Channels responding to LEFT only (default 8,15,30,37 when no channel set is given).
    #[arg(long, value_delimiter = ',')]
    pub left: Option<Vec<u16>>,
    /// Drift amplitude (default 0.5).
    #[arg(long)]
    pub drift: Option<f64>,
    /// Hemodynamic peak delay in seconds, 4 to 8 (default 5).
    #[arg(long)]
    pub hrf_peak: Option<f64>,
}

/// Windowing and feature flags shared by the training and decoding commands.
#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FeatureArgs {
    /// Window hop in samples (default 14).
    #[arg(long)]
    pub hop: Option<usize>,
    /// Seconds skipped at the start of every block (default 0).
    #[arg(long)]
    pub settle: Option<f64>,
    /// PCA components per channel: a count, or a variance fraction (default 0.95).
    #[arg(long)]
    pub components: Option<Components>,
    /// Standardise every feature with its training mean and deviation.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RceArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Channel report (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Channels to keep (default 20).
    #[arg(long)]
    pub target_channels: Option<usize>,
    /// Cross-validation folds (default 10).
    #[arg(long)]
    pub folds: Option<usize>,
    /// SVM penalty (default 1.0).
    #[arg(long)]
    pub c: Option<f64>,
    /// full or fast (default full).
    #[arg(long)]
    pub mode: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub features: FeatureArgs,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for the ensemble bundles.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// E1, E2 or both.
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Channels to train on; by default they are chosen by RCE.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<u16>>,
    /// Take the channels from an `rce` report instead.
    #[arg(long)]
    pub ranking: Option<PathBuf>,
    /// Channels kept when RCE runs inline (default 20).
    #[arg(long)]
    pub target_channels: Option<usize>,
    /// Cross-validation folds (default 10).
    #[arg(long)]
    pub folds: Option<usize>,
    /// Vote threshold (default 4).
    #[arg(long)]
    pub k: Option<usize>,
    /// Ensemble size (default 6).
    #[arg(long)]
    pub n: Option<usize>,
    /// Candidate penalties searched per member (default 1.0).
    #[arg(long, value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub features: FeatureArgs,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalArgs {
    /// Ensemble bundle (JSON).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Override the vote threshold stored in the bundle.
    #[arg(long)]
    pub k: Option<usize>,
    /// Write the ROC curve as CSV.
    #[arg(long)]
    pub roc: Option<PathBuf>,
    /// Write the full evaluation report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub features: FeatureArgs,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct StreamArgs {
    /// Dataset directory to replay.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// E1 bundle.
    #[arg(long)]
    pub e1: Option<PathBuf>,
    /// E2 bundle.
    #[arg(long)]
    pub e2: Option<PathBuf>,
    /// Local UDP port (default 7801).
    #[arg(long)]
    pub port: Option<u16>,
    /// Simulator address (default 127.0.0.1:7802).
    #[arg(long)]
    pub peer: Option<String>,
    /// Replay speed relative to real time; omit to replay as fast as possible.
    #[arg(long)]
    pub speed: Option<f64>,
    /// AUC gate (default 0.70).
    #[arg(long)]
    pub gate: Option<f64>,
    /// Retransmissions per command (default 3).
    #[arg(long)]
    pub retries: Option<u32>,
    /// ACK timeout in milliseconds (default 200).
    #[arg(long)]
    pub ack_timeout_ms: Option<u64>,
    /// Decode without sending anything.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dry_run: Option<bool>,
    /// Write the stream report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub features: FeatureArgs,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct HapticArgs {
    /// UDP port to listen on (default 7802).
    #[arg(long)]
    pub port: Option<u16>,
    /// Address to bind (default 127.0.0.1).
    #[arg(long)]
    pub bind: Option<String>,
    /// Step per command in cm (default 1.0).
    #[arg(long)]
    pub step: Option<f64>,
    /// Exit after this many seconds without traffic.
    #[arg(long)]
    pub idle: Option<f64>,
    /// Write the position trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReplayArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// E1 bundle.
    #[arg(long)]
    pub e1: Option<PathBuf>,
    /// E2 bundle.
    #[arg(long)]
    pub e2: Option<PathBuf>,
    /// AUC gate (default 0.70).
    #[arg(long)]
    pub gate: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub features: FeatureArgs,
}

fn strip_nulls(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

/// Parsed config file.
#[derive(Debug, Default)]
pub struct ConfigFile {
    pub path: Option<PathBuf>,
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let table: toml::Table = text.parse().map_err(|e| format!("config {}: {e}", path.display()))?;
        Ok(ConfigFile {
            path: Some(path.to_path_buf()),
            table,
        })
    }

    /// Flags of `section` with file values filled in where the command line
    /// left them unset.
    pub fn merge<T: Serialize + DeserializeOwned>(&self, section: &str, cli: &T) -> Result<T, String> {
        let mut merged = Map::new();
        for (k, v) in &self.table {
            if !v.is_table() {
                merged.insert(k.clone(), serde_json::to_value(v).map_err(|e| e.to_string())?);
            }
        }
        if let Some(toml::Value::Table(sub)) = self.table.get(section) {
            for (k, v) in sub {
                merged.insert(k.clone(), serde_json::to_value(v).map_err(|e| e.to_string())?);
            }
        }
        merged.extend(strip_nulls(serde_json::to_value(cli).map_err(|e| e.to_string())?));
        serde_json::from_value(Value::Object(merged)).map_err(|e| match &self.path {
            Some(p) => format!("config {}: {e}", p.display()),
            None => e.to_string(),
        })
    }
}
