mod args;
mod manifest;

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use clap::{CommandFactory, Parser};
use log::{info, warn};
use nirs_bci::channel_select::RceMode;
use nirs_bci::dataio::{generate_synthetic, load_dataset, save_dataset, BlockTiming, Condition, GeneratorConfig, SessionSet};
use nirs_bci::ensemble::{check_threshold, Decision, Ensemble, Group};
use nirs_bci::error::ErrorKind;
use nirs_bci::features::WindowConfig;
use nirs_bci::metrics::write_roc_csv;
use nirs_bci::online::{
    run_stream, CommandSender, DecoderConfig, Delivery, SenderConfig, Simulator, StreamConfig, DEFAULT_DECODER_PORT,
    DEFAULT_SIMULATOR_PORT,
};
use nirs_bci::pca::ComponentCount;
use nirs_bci::pipeline::{batch_votes, count_mismatches, select_channels, train_group, train_pair, PipelineConfig};
use serde::Serialize;
use thiserror::Error;

use args::{Cli, Command, Components, ConfigFile, FeatureArgs};
use manifest::{artifacts, default_path, Rerun, RunManifest};

const LATERAL_RIGHT: [u16; 4] = [5, 12, 19, 26];
const LATERAL_LEFT: [u16; 4] = [8, 15, 30, 37];

#[derive(Debug, Error)]
enum CliError {
    /// Subcommand and message; printed with that subcommand's usage.
    #[error("{1}")]
    Usage(&'static str, String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(..) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<nirs_bci::Error> for CliError {
    fn from(e: nirs_bci::Error) -> Self {
        match e.kind() {
            ErrorKind::Usage => CliError::Usage("", e.to_string()),
            ErrorKind::Data => CliError::Data(e.to_string()),
            ErrorKind::Numeric => CliError::Numeric(e.to_string()),
        }
    }
}

fn data_err(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

type Result<T, E = CliError> = std::result::Result<T, E>;

/// What a subcommand read and wrote, for the run manifest.
#[derive(Default)]
struct Run {
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    primary_output: Option<PathBuf>,
}

fn required<T: Clone>(sub: &'static str, flag: &str, v: &Option<T>) -> Result<T> {
    v.clone()
        .ok_or_else(|| CliError::Usage(sub, format!("the argument '--{flag}' is required")))
}

fn window_config(f: &FeatureArgs, len: usize) -> WindowConfig {
    let d = WindowConfig::default();
    WindowConfig {
        len,
        hop: f.hop.unwrap_or(d.hop),
        settle_s: f.settle.unwrap_or(d.settle_s),
    }
}

fn pipeline_config(f: &FeatureArgs) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        window: window_config(f, nirs_bci::DEFAULT_WINDOW_LEN),
        ..PipelineConfig::default()
    };
    if let Some(c) = f.components {
        cfg.features.count = match c {
            Components::Fixed(k) => ComponentCount::Fixed(k),
            Components::Variance(v) => ComponentCount::Variance(v),
        };
    }
    if let Some(s) = f.standardize {
        cfg.features.standardize = s;
    }
    cfg
}

fn load_set(dir: &Path) -> Result<SessionSet> {
    Ok(load_dataset(dir).map_err(nirs_bci::Error::from)?)
}

fn load_ensemble(path: &Path) -> Result<Ensemble> {
    let text = fs::read_to_string(path).map_err(data_err(path.display()))?;
    Ensemble::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(data_err(dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value).expect("report serialises");
    fs::write(path, text).map_err(data_err(path.display()))
}

fn join_ids(ids: &[u16]) -> String {
    ids.iter().map(u16::to_string).collect::<Vec<_>>().join(",")
}

fn pair_channels(sub: &'static str, e1: &Ensemble, e2: &Ensemble) -> Result<Vec<u16>> {
    let ids = |e: &Ensemble| e.features.as_ref().map(|f| f.channel_ids.clone());
    match (ids(e1), ids(e2)) {
        (Some(a), Some(b)) if a == b => Ok(a),
        (Some(_), Some(_)) => Err(CliError::Usage(sub, "E1 and E2 were trained on different channels".into())),
        _ => Err(CliError::Data("ensemble bundle carries no feature spec".into())),
    }
}

fn generate(a: &args::GenerateArgs) -> Result<Run> {
    let out = required("generate", "out", &a.out)?;
    let d = GeneratorConfig::default();
    let condition: Condition = match &a.condition {
        Some(c) => c.parse().map_err(|e: String| CliError::Usage("generate", e))?,
        None => Condition::Mi,
    };
    let set = |v: &Option<Vec<u16>>| v.iter().flatten().copied().collect::<BTreeSet<u16>>();
    let (mut right, mut left) = (set(&a.right), set(&a.left));
    let task = set(&a.task);
    if a.task.is_none() && a.right.is_none() && a.left.is_none() {
        right = LATERAL_RIGHT.into_iter().collect();
        left = LATERAL_LEFT.into_iter().collect();
    }
    let cfg = GeneratorConfig {
        n_channels: a.n_channels.unwrap_or(d.n_channels),
        task_channels: task,
        right_channels: right,
        left_channels: left,
        hrf_peak_delay_s: a.hrf_peak.unwrap_or(d.hrf_peak_delay_s),
        snr: a.snr.unwrap_or(d.snr),
        drift_amplitude: a.drift.unwrap_or(d.drift_amplitude),
        condition,
        trials_per_session: a.trials.unwrap_or(20),
        seed: a.seed.unwrap_or(0),
        ..d
    };
    let sessions = a.sessions.unwrap_or(2);
    let data = generate_synthetic(&cfg, sessions, BlockTiming::default()).map_err(nirs_bci::Error::from)?;
    save_dataset(&data, &out).map_err(nirs_bci::Error::from)?;
    println!(
        "wrote {} sessions x {} trials, {} channels, condition {:?}, to {}",
        sessions,
        cfg.trials_per_session,
        cfg.n_channels,
        condition,
        out.display()
    );
    Ok(Run {
        seed: Some(cfg.seed),
        outputs: vec![out.clone()],
        primary_output: Some(out),
        ..Run::default()
    })
}

fn rce(a: &args::RceArgs) -> Result<Run> {
    let data = required("rce", "data", &a.data)?;
    let mut cfg = pipeline_config(&a.features);
    cfg.rce.target = a.target_channels.unwrap_or(cfg.rce.target);
    cfg.rce.folds = a.folds.unwrap_or(cfg.rce.folds);
    cfg.rce.c = a.c.unwrap_or(cfg.rce.c);
    cfg.rce.seed = a.seed.unwrap_or(0);
    cfg.rce.mode = match a.mode.as_deref().map(str::to_ascii_lowercase).as_deref() {
        None | Some("full") => RceMode::Full,
        Some("fast") => RceMode::Fast,
        Some(m) => return Err(CliError::Usage("rce", format!("unknown mode `{m}` (expected full or fast)"))),
    };
    let set = load_set(&data)?;
    let ranking = select_channels(&set, &cfg)?;
    println!("channels={}", join_ids(&ranking.survivors));
    println!("eliminated={}", join_ids(&ranking.ranked));
    println!("generalization {:?}", ranking.generalization);
    let mut run = Run {
        seed: Some(cfg.rce.seed),
        inputs: vec![data],
        ..Run::default()
    };
    if let Some(out) = &a.out {
        write_json(out, &ranking)?;
        run.outputs.push(out.clone());
        run.primary_output = Some(out.clone());
    }
    Ok(run)
}

fn ranking_survivors(path: &Path) -> Result<Vec<u16>> {
    let text = fs::read_to_string(path).map_err(data_err(path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_value(v["survivors"].clone())
        .map_err(|e| CliError::Data(format!("{}: no channel list: {e}", path.display())))
}

fn train(a: &args::TrainArgs) -> Result<Run> {
    let group = required("train", "group", &a.group)?;
    let data = required("train", "data", &a.data)?;
    let out = required("train", "out", &a.out)?;
    let groups: Vec<Group> = if group.eq_ignore_ascii_case("both") {
        vec![Group::E1, Group::E2]
    } else {
        vec![group.parse().map_err(|e: String| CliError::Usage("train", e))?]
    };
    let seed = a.seed.unwrap_or(0);
    let mut cfg = pipeline_config(&a.features);
    cfg.rce.seed = seed;
    cfg.rce.target = a.target_channels.unwrap_or(cfg.rce.target);
    cfg.rce.folds = a.folds.unwrap_or(cfg.rce.folds);
    cfg.ensemble.seed = seed;
    cfg.ensemble.folds = a.folds.unwrap_or(cfg.ensemble.folds);
    cfg.ensemble.k = a.k.unwrap_or(cfg.ensemble.k);
    cfg.ensemble.n = a.n.unwrap_or(cfg.ensemble.n);
    if let Some(grid) = &a.c_grid {
        cfg.ensemble.c_grid = grid.clone();
    }
    check_threshold(cfg.ensemble.n, cfg.ensemble.k).map_err(|e| CliError::Usage("train", e.to_string()))?;

    let set = load_set(&data)?;
    let mut inputs = vec![data];
    let channels = match (&a.channels, &a.ranking) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage("train", "--channels and --ranking are mutually exclusive".into()))
        }
        (Some(c), None) => c.clone(),
        (None, Some(r)) => {
            inputs.push(r.clone());
            ranking_survivors(r)?
        }
        (None, None) => {
            info!("selecting {} channels by RCE", cfg.rce.target);
            select_channels(&set, &cfg)?.survivors
        }
    };
    println!("channels={}", join_ids(&channels));

    let ensembles = if groups.len() == 2 {
        let (e1, e2) = train_pair(&set, &channels, &cfg)?;
        vec![e1, e2]
    } else {
        vec![train_group(&set, &channels, groups[0], &cfg)?]
    };
    fs::create_dir_all(&out).map_err(data_err(out.display()))?;
    let mut outputs = Vec::new();
    for e in &ensembles {
        let path = out.join(format!("{}.json", e.group.to_string().to_ascii_lowercase()));
        fs::write(&path, e.to_json()).map_err(data_err(path.display()))?;
        let c: Vec<String> = e.members.iter().map(|m| format!("{}", m.c)).collect();
        println!(
            "{}: {} members, k={}, C=[{}] -> {}",
            e.group,
            e.members.len(),
            e.k,
            c.join(","),
            path.display()
        );
        outputs.push(path);
    }
    Ok(Run {
        seed: Some(seed),
        inputs,
        outputs,
        primary_output: Some(out),
    })
}

fn eval(a: &args::EvalArgs) -> Result<Run> {
    let model = required("eval", "model", &a.model)?;
    let data = required("eval", "data", &a.data)?;
    let mut e = load_ensemble(&model)?;
    if let Some(k) = a.k {
        check_threshold(e.members.len(), k).map_err(|err| CliError::Usage("eval", err.to_string()))?;
        e.k = k;
    }
    let len = e.features.as_ref().map_or(nirs_bci::DEFAULT_WINDOW_LEN, |f| f.window_len);
    let set = load_set(&data)?;
    let ev = nirs_bci::pipeline::evaluate_group(&e, &set, &window_config(&a.features, len))?;
    let count = |d: Decision| ev.decisions.iter().filter(|x| **x == d).count();
    println!("{} AUC={:.4} region={}", e.group, ev.roc.auc, ev.roc.region);
    println!(
        "votes k={}/{}: positive={} negative={} unknown={} of {}",
        e.k,
        e.members.len(),
        count(Decision::Positive),
        count(Decision::Negative),
        ev.unknown,
        ev.decisions.len()
    );
    let mut run = Run {
        inputs: vec![model, data],
        ..Run::default()
    };
    if let Some(path) = &a.roc {
        let f = fs::File::create(path).map_err(data_err(path.display()))?;
        write_roc_csv(&ev.roc, std::io::BufWriter::new(f)).map_err(data_err(path.display()))?;
        run.outputs.push(path.clone());
    }
    if let Some(path) = &a.report {
        write_json(path, &ev)?;
        run.outputs.push(path.clone());
    }
    run.primary_output = a.report.clone().or(a.roc.clone());
    Ok(run)
}

struct Decoding {
    set: SessionSet,
    e1: Ensemble,
    e2: Ensemble,
    channels: Vec<u16>,
    stream: StreamConfig,
    inputs: Vec<PathBuf>,
}

fn decoding_setup(
    sub: &'static str,
    data: &Option<PathBuf>,
    e1: &Option<PathBuf>,
    e2: &Option<PathBuf>,
    gate: Option<f64>,
    features: &FeatureArgs,
) -> Result<Decoding> {
    let data = required(sub, "data", data)?;
    let p1 = required(sub, "e1", e1)?;
    let p2 = required(sub, "e2", e2)?;
    let (e1, e2) = (load_ensemble(&p1)?, load_ensemble(&p2)?);
    if e1.group != Group::E1 || e2.group != Group::E2 {
        return Err(CliError::Usage(sub, format!("expected E1 and E2 bundles, got {} and {}", e1.group, e2.group)));
    }
    let channels = pair_channels(sub, &e1, &e2)?;
    let len = e1.features.as_ref().map_or(nirs_bci::DEFAULT_WINDOW_LEN, |f| f.window_len);
    let d = DecoderConfig::default();
    let stream = StreamConfig {
        window: window_config(features, len),
        decoder: DecoderConfig {
            gate: gate.unwrap_or(d.gate),
            ..d
        },
        ..StreamConfig::default()
    };
    Ok(Decoding {
        set: load_set(&data)?,
        e1,
        e2,
        channels,
        stream,
        inputs: vec![data, p1, p2],
    })
}

fn replay(a: &args::ReplayArgs) -> Result<Run> {
    let d = decoding_setup("replay", &a.data, &a.e1, &a.e2, a.gate, &a.features)?;
    let batch = batch_votes(&d.e1, &d.e2, &d.set, &d.stream.window)?;
    let report = run_stream(&d.set, &d.channels, &d.e1, &d.e2, &d.stream, |_| Ok(()))?;
    let mismatches = count_mismatches(&batch, &report.outcomes);
    println!(
        "windows: batch={} streamed={}; task periods={} accuracy={:.1}%",
        batch.len(),
        report.outcomes.len(),
        report.periods.len(),
        100.0 * report.accuracy()
    );
    if mismatches == 0 {
        println!("offline==online: OK (0 mismatches)");
    } else {
        println!("offline==online: MISMATCH ({mismatches} mismatches)");
        return Err(CliError::Numeric(format!(
            "{mismatches} of {} windows decoded differently online",
            batch.len()
        )));
    }
    Ok(Run {
        inputs: d.inputs,
        ..Run::default()
    })
}

fn stream(a: &args::StreamArgs) -> Result<Run> {
    let mut d = decoding_setup("stream", &a.data, &a.e1, &a.e2, a.gate, &a.features)?;
    d.stream.speed = a.speed;
    let dry = a.dry_run.unwrap_or(false);
    let mut sender = if dry {
        None
    } else {
        let peer = a.peer.clone().unwrap_or_else(|| format!("127.0.0.1:{DEFAULT_SIMULATOR_PORT}"));
        let cfg = SenderConfig {
            retries: a.retries.unwrap_or(SenderConfig::default().retries),
            ack_timeout: a
                .ack_timeout_ms
                .map_or(SenderConfig::default().ack_timeout, Duration::from_millis),
        };
        let local = format!("0.0.0.0:{}", a.port.unwrap_or(DEFAULT_DECODER_PORT));
        Some(CommandSender::bind(&local, &peer, cfg).map_err(data_err(format!("bind {local} -> {peer}")))?)
    };
    let report = run_stream(&d.set, &d.channels, &d.e1, &d.e2, &d.stream, |cmd| {
        info!("seq={} {:?} auc_e1={:.3} auc_e2={:.3}", cmd.seq, cmd.direction, cmd.auc_e1, cmd.auc_e2);
        if let Some(tx) = sender.as_mut() {
            if let Delivery::Lost { .. } = tx.send(cmd)? {
                warn!("command {} lost after retries", cmd.seq);
            }
        }
        Ok(())
    })?;
    for p in &report.periods {
        println!(
            "session {} trial {} {}: {:?} after {} commands",
            p.session,
            p.trial,
            p.label.as_str(),
            p.decision,
            p.commands
        );
    }
    println!(
        "periods={} accuracy={:.1}% decode max={:.2}ms mean={:.2}ms",
        report.periods.len(),
        100.0 * report.accuracy(),
        report.max_decode_ms,
        report.mean_decode_ms
    );
    if let Some(tx) = sender.as_mut() {
        tx.drain_states(Duration::from_millis(100)).map_err(data_err("udp"))?;
        let s = &tx.stats;
        println!("sent={} datagrams={} acked={} lost={}", s.commands, s.datagrams, s.acked, s.lost);
        if let Some((seq, pos)) = s.last_state {
            println!("haptic position={pos:.2}cm at seq={seq}");
        }
    }
    let mut run = Run {
        inputs: d.inputs,
        ..Run::default()
    };
    if let Some(path) = &a.report {
        write_json(path, &report)?;
        run.outputs.push(path.clone());
        run.primary_output = Some(path.clone());
    }
    Ok(run)
}

fn haptic(a: &args::HapticArgs) -> Result<Run> {
    let addr = format!(
        "{}:{}",
        a.bind.as_deref().unwrap_or("127.0.0.1"),
        a.port.unwrap_or(DEFAULT_SIMULATOR_PORT)
    );
    let mut sim = Simulator::bind(&addr, a.step.unwrap_or(1.0)).map_err(data_err(format!("bind {addr}")))?;
    let local = sim.local_addr().map_err(data_err("udp"))?;
    println!("listening on {local}");
    let idle = match a.idle {
        Some(s) if s.is_finite() && s > 0.0 => Some(Duration::from_secs_f64(s)),
        Some(s) => return Err(CliError::Usage("haptic", format!("--idle must be positive, got {s}"))),
        None => None,
    };
    let stop = AtomicBool::new(false);
    let stdout = std::io::stdout();
    sim.run(&stop, idle, |seq, pos| {
        let mut out = stdout.lock();
        let _ = writeln!(out, "seq={seq} position={pos:.2}");
        let _ = out.flush();
    })
    .map_err(data_err("udp"))?;
    let s = &sim.stats;
    println!(
        "received={} applied={} stale={} dropped={} malformed={} final position={:.2}cm",
        s.received, s.applied, s.stale, s.dropped, s.malformed, sim.state.position
    );
    let mut run = Run::default();
    if let Some(path) = &a.trace {
        let mut text = String::from("seq,position_cm\n");
        for (seq, pos) in &sim.trace {
            text.push_str(&format!("{seq},{pos}\n"));
        }
        fs::write(path, text).map_err(data_err(path.display()))?;
        run.outputs.push(path.clone());
        run.primary_output = Some(path.clone());
    }
    Ok(run)
}

fn settings<T>(sub: &'static str, file: &ConfigFile, cli: &T) -> Result<(T, serde_json::Value)>
where
    T: Serialize + serde::de::DeserializeOwned,
{
    let merged = file.merge(sub, cli).map_err(|e| CliError::Usage(sub, e))?;
    let value = serde_json::to_value(&merged).expect("settings serialise");
    Ok((merged, value))
}

fn dispatch(cli: &Cli, file: &ConfigFile) -> Result<(serde_json::Value, Run)> {
    macro_rules! run {
        ($args:expr, $f:ident) => {{
            let (merged, value) = settings(cli.command.name(), file, $args)?;
            Ok((value, $f(&merged)?))
        }};
    }
    match &cli.command {
        Command::Generate(a) => run!(a, generate),
        Command::Rce(a) => run!(a, rce),
        Command::Train(a) => run!(a, train),
        Command::Eval(a) => run!(a, eval),
        Command::Stream(a) => run!(a, stream),
        Command::Haptic(a) => run!(a, haptic),
        Command::Replay(a) => run!(a, replay),
    }
}

fn record(cli: &Cli, file: &ConfigFile, value: serde_json::Value, run: Run) -> Result<()> {
    let sub = cli.command.name();
    let inputs = artifacts(&run.inputs).map_err(data_err("hashing inputs"))?;
    let mut m = RunManifest::new(sub, file.path.clone(), run.seed, value, inputs);
    m.outputs = artifacts(&run.outputs).map_err(data_err("hashing outputs"))?;
    let path = cli
        .manifest
        .clone()
        .unwrap_or_else(|| default_path(sub, run.primary_output.as_deref()));
    match m.write(&path).map_err(data_err(path.display()))? {
        Rerun::Reproduced => println!("manifest {}: rerun reproduced previous outputs", path.display()),
        Rerun::Diverged(paths) => {
            let list: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
            return Err(CliError::Numeric(format!(
                "rerun with identical inputs produced different outputs: {}",
                list.join(", ")
            )));
        }
        Rerun::First | Rerun::InputsChanged => info!("manifest written to {}", path.display()),
    }
    Ok(())
}

fn usage_exit(sub: &str, msg: &str) -> ExitCode {
    let mut cmd = Cli::command();
    let err = match cmd.find_subcommand_mut(sub) {
        Some(s) if !sub.is_empty() => {
            let mut s = s.clone().bin_name(format!("nbci {sub}"));
            s.error(clap::error::ErrorKind::MissingRequiredArgument, msg)
        }
        _ => cmd.error(clap::error::ErrorKind::InvalidValue, msg),
    };
    let _ = err.print();
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let file = match ConfigFile::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(msg) => return usage_exit("", &msg),
    };
    let result = dispatch(&cli, &file).and_then(|(value, run)| record(&cli, &file, value, run));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(sub, msg)) => usage_exit(sub, &msg),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
