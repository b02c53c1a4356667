//! `isac` command-line front end.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use isac_core::detect::Detection;
use isac_core::dsp::{estimate_channel, estimate_noise_floor, ClutterMapAccumulator, NoiseRegion, DEFAULT_DIVISION_EPSILON};
use isac_core::harness::{
    model_report, replay, reference_violations, Chain, ChainConfig, ClutterRemoval, ModelReport, RangeSweep,
    ReplayThresholds, RunConfig, RunMetrics, ScenarioSource,
};
use isac_core::linkbudget::{linear_to_db, snr_unit_range, LinkBudgetParams};
use isac_core::scene::raw::{read_frame, read_header, write_frame, write_header, RawHeader};
use isac_core::scene::{frame_truth, synthesize_frame};

#[derive(Parser)]
#[command(name = "isac", version, about = "OFDM radar UAV detection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Interference PSDs, achievable distance and window-limited r_max.
    Linkbudget(LinkbudgetArgs),
    /// Synthesize a scenario: ground truth and optionally a raw I/Q dump.
    Simulate(SimulateArgs),
    /// Raw dump to range-Doppler periodograms.
    Process(ProcessArgs),
    /// Raw dump to CFAR detections with replica flags.
    Detect(DetectArgs),
    /// Full chain with tracking, scored against ground truth.
    Replay(ReplayArgs),
    /// Model report, optionally next to the metrics of a replay run.
    Report(ReportArgs),
}

#[derive(Args)]
struct ParamsArg {
    /// Link-budget parameter file (TOML); the reference FR2 parameters when omitted.
    #[arg(long)]
    params: Option<PathBuf>,
}

impl ParamsArg {
    fn load(&self) -> Result<LinkBudgetParams> {
        match &self.params {
            None => Ok(LinkBudgetParams::fr2_reference()),
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Ok(LinkBudgetParams::from_toml(&text)?)
            }
        }
    }
}

#[derive(Args)]
struct LinkbudgetArgs {
    #[command(flatten)]
    params: ParamsArg,
    /// Also tabulate SINR over `start:stop:step` metres.
    #[arg(long, value_name = "START:STOP:STEP")]
    sweep_range: Option<RangeSweep>,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
    /// Exit nonzero if r_max, r_cp or r_limit miss the reference figures.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Run configuration (TOML) with scenario and chain settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in experiment (`exp1`, `exp2`) or a scenario TOML file.
    #[arg(long)]
    scenario: Option<String>,
    /// Overrides the scenario's random seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::for_experiment(self.scenario.as_deref().unwrap_or("exp2"))
                .or_else(|_| -> Result<RunConfig> {
                    let path = PathBuf::from(self.scenario.as_deref().unwrap_or_default());
                    Ok(RunConfig {
                        scenario: ScenarioSource::File(path),
                        seed: None,
                        chain: ChainConfig::default(),
                    })
                })?,
        };
        if let (Some(_), Some(name)) = (&self.config, &self.scenario) {
            cfg.scenario = match RunConfig::for_experiment(name) {
                Ok(_) => ScenarioSource::Experiment(name.clone()),
                Err(_) => ScenarioSource::File(name.into()),
            };
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        Ok(cfg)
    }
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `range,doppler`, got '{s}'"))?;
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("'{x}': {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn parse_window(s: &str) -> Result<[u64; 2], String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected `start:end`, got '{s}'"))?;
    let parse = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("'{x}': {e}"));
    Ok([parse(a)?, parse(b)?])
}

/// Processing overrides shared by `process`, `detect` and `replay`.
#[derive(Args)]
struct ChainArgs {
    /// Static clutter removal.
    #[arg(long, value_parser = ["eca-c", "crap", "none"])]
    clutter: Option<String>,
    /// Frames used for the CRAP clutter map.
    #[arg(long)]
    acquire: Option<usize>,
    /// CFAR false-alarm probability.
    #[arg(long)]
    pfa: Option<f64>,
    /// CFAR training cells per side, `range,doppler`.
    #[arg(long, value_name = "R,D", value_parser = parse_pair)]
    train: Option<(usize, usize)>,
    /// CFAR guard cells per side, `range,doppler`.
    #[arg(long, value_name = "R,D", value_parser = parse_pair)]
    guard: Option<(usize, usize)>,
    /// Keep TDD Doppler replicas in the detection list.
    #[arg(long)]
    no_replica_suppression: bool,
}

impl ChainArgs {
    fn apply(&self, cfg: &mut ChainConfig) -> Result<()> {
        if let Some(c) = &self.clutter {
            cfg.clutter = c.parse::<ClutterRemoval>().map_err(anyhow::Error::msg)?;
        }
        if let Some(n) = self.acquire {
            cfg.clutter_map.acquisition_frames = n;
        }
        if let Some(pfa) = self.pfa {
            cfg.cfar.pfa = pfa;
        }
        if let Some(t) = self.train {
            cfg.cfar.training = t;
        }
        if let Some(g) = self.guard {
            cfg.cfar.guard = g;
        }
        if self.no_replica_suppression {
            cfg.replica_suppression = false;
        }
        cfg.cfar.validate()?;
        Ok(())
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Half-open frame range `start:end`; whole scenario when omitted.
    #[arg(long, value_name = "START:END", value_parser = parse_window)]
    frames: Option<[u64; 2]>,
    /// Also write `frames.raw` (about 28 MB per full-size frame).
    #[arg(long)]
    raw: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct DumpArgs {
    /// Raw dump written by `simulate --raw`.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    params: ParamsArg,
    /// Run configuration (TOML); only its `[chain]` table is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ProcessArgs {
    #[command(flatten)]
    dump: DumpArgs,
    /// Write each power map as little-endian f32 next to `periodograms.json`.
    #[arg(long)]
    write_periodograms: bool,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    dump: DumpArgs,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    chain: ChainArgs,
    /// Frame window `start:end`, repeatable; the tracker restarts per window.
    #[arg(long = "frames", value_name = "START:END", value_parser = parse_window)]
    frames: Vec<[u64; 2]>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Exit nonzero when accuracy or SINR thresholds are violated.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    params: ParamsArg,
    #[arg(long, value_name = "START:STOP:STEP")]
    sweep_range: Option<RangeSweep>,
    /// Replay output directory holding `metrics.json`.
    #[arg(long)]
    run: Option<PathBuf>,
    /// Directory for the report files; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit nonzero on any model or replay threshold violation.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Linkbudget(a) => linkbudget(a),
        Command::Simulate(a) => simulate(a).map(|()| Vec::new()),
        Command::Process(a) => process(a).map(|()| Vec::new()),
        Command::Detect(a) => detect(a).map(|()| Vec::new()),
        Command::Replay(a) => run_replay(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(violations) if violations.is_empty() => ExitCode::SUCCESS,
        Ok(violations) => {
            for v in violations {
                eprintln!("check failed: {v}");
            }
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[derive(Serialize)]
struct LinkbudgetJson<'a> {
    snr_unit_range_db: f64,
    #[serde(flatten)]
    report: &'a ModelReport,
}

fn linkbudget(a: LinkbudgetArgs) -> Result<Vec<String>> {
    let p = a.params.load()?;
    let mut r = model_report(&p, a.sweep_range.unwrap_or(RangeSweep { start: 1.0, stop: 1.0, step: 1.0 }))?;
    if a.sweep_range.is_none() {
        r.curve.clear();
    }
    let snr0 = linear_to_db(snr_unit_range(&p)?);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    if a.json {
        serde_json::to_writer_pretty(&mut out, &LinkbudgetJson { snr_unit_range_db: snr0, report: &r })?;
        writeln!(out)?;
    } else {
        writeln!(out, "SNR at 1 m {snr0:10.3} dB")?;
        write!(out, "{}", r.summary())?;
        if a.sweep_range.is_some() {
            writeln!(out)?;
            r.write_curve_csv(&mut out)?;
        }
    }
    Ok(if a.check { reference_violations(&r.max_range) } else { Vec::new() })
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = a.scenario.run_config()?;
    let s = cfg.scenario()?;
    let total = s.frame_count();
    let [start, end] = a.frames.unwrap_or([0, total]);
    if start >= end || end > total {
        bail!("frame range {start}:{end} invalid for {total} frames");
    }
    if a.raw && a.frames.is_none() {
        bail!("--raw needs an explicit --frames range; a full scenario dump would be {} GB", total * 28 / 1000);
    }
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("scenario.toml"), s.to_toml())?;

    let mut truth = csv::Writer::from_path(a.out.join("truth.csv"))?;
    let mut raw = if a.raw {
        let header = RawHeader {
            n_subcarriers: s.params.n_subcarriers,
            n_symbols: s.symbols_per_frame,
            f_c: s.params.f_c,
            delta_f: s.params.delta_f,
            l_cp: s.params.l_cp,
            dl_mask: s.dl_mask.clone(),
        };
        let mut w = BufWriter::new(File::create(a.out.join("frames.raw"))?);
        write_header(&mut w, &header)?;
        Some((w, header))
    } else {
        None
    };
    for k in start..end {
        match &mut raw {
            Some((w, header)) => {
                let f = synthesize_frame(&s, k, None)?;
                write_frame(w, header, &f.tx, &f.rx)?;
                for t in &f.truth {
                    truth.serialize(t)?;
                }
            }
            None => {
                for t in frame_truth(&s, k)? {
                    truth.serialize(t)?;
                }
            }
        }
    }
    truth.flush()?;
    if let Some((mut w, _)) = raw {
        w.flush()?;
    }
    println!("{}: frames {start}..{end} written to {}", s.name, a.out.display());
    Ok(())
}

/// Chain over a raw dump. Numerology comes from the dump header; the rest of
/// the link budget from `--params`. All frames share one clutter map, taken
/// from the first `acquisition_frames` frames of the dump.
fn open_dump(a: &DumpArgs) -> Result<(RawHeader, Chain, BufReader<File>)> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::from_toml(&fs::read_to_string(path)?)?.chain,
        None => ChainConfig::default(),
    };
    a.chain.apply(&mut cfg)?;
    let mut r = BufReader::new(File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?);
    let h = read_header(&mut r)?;
    let mut p = a.params.load()?;
    p.f_c = h.f_c;
    p.delta_f = h.delta_f;
    p.l_cp = h.l_cp;
    p.n_subcarriers = h.n_subcarriers;
    let mut chain = Chain::new(&p, &h.dl_mask, 1, cfg)?;
    if chain.needs_clutter_map() {
        let n = chain.cfg.clutter_map.acquisition_frames;
        let mut acc: Option<ClutterMapAccumulator> = None;
        let mut last = 0;
        while acc.as_ref().map_or(0, ClutterMapAccumulator::count) < n {
            let Some((tx, rx)) = read_frame(&mut r, &h)? else {
                bail!("dump ended during clutter acquisition; pass a smaller --acquire");
            };
            last = rx.frame_index;
            let ch = estimate_channel(&tx, &rx, DEFAULT_DIVISION_EPSILON)?;
            match &mut acc {
                None => acc = Some(ClutterMapAccumulator::new(&ch)),
                Some(m) => m.push(&ch)?,
            }
        }
        let map = acc.expect("at least one acquisition frame").finish(last, chain.cfg.clutter_map.stale_after);
        chain.set_clutter_map(0, map)?;
    }
    Ok((h, chain, r))
}

#[derive(Serialize)]
struct FrameRow {
    frame_index: u64,
    time_s: f64,
    noise_floor: f64,
    peak_range_m: f64,
    peak_velocity_mps: f64,
    peak_power: f64,
}

#[derive(Serialize)]
struct PeriodogramLayout {
    n_range: usize,
    n_doppler: usize,
    range_bin_m: f64,
    velocity_bin_mps: f64,
    doppler_bin_hz: f64,
    /// Cell (r, d) is value `d * n_range + r`; Doppler bins are in FFT order.
    layout: &'static str,
}

fn process(a: ProcessArgs) -> Result<()> {
    let (h, chain, mut r) = open_dump(&a.dump)?;
    fs::create_dir_all(&a.dump.out)?;
    let mut rows = csv::Writer::from_path(a.dump.out.join("frames.csv"))?;
    let mut layout_written = false;
    let mut count = 0;
    while let Some((tx, rx)) = read_frame(&mut r, &h)? {
        let ch = estimate_channel(&tx, &rx, DEFAULT_DIVISION_EPSILON)?;
        let mut p = chain.periodogram(&ch, 0)?;
        let (rb, db, peak) = p.argmax();
        rows.serialize(FrameRow {
            frame_index: rx.frame_index,
            time_s: rx.timestamp,
            noise_floor: estimate_noise_floor(&mut p, &NoiseRegion::everything())?,
            peak_range_m: p.range_m(rb as f64),
            peak_velocity_mps: p.velocity_mps(db as f64),
            peak_power: peak,
        })?;
        if a.write_periodograms {
            if !layout_written {
                let layout = PeriodogramLayout {
                    n_range: p.n_range(),
                    n_doppler: p.n_doppler(),
                    range_bin_m: p.range_bin_m,
                    velocity_bin_mps: p.velocity_bin_mps,
                    doppler_bin_hz: p.doppler_bin_hz,
                    layout: "doppler-major f32 little-endian",
                };
                fs::write(a.dump.out.join("periodograms.json"), serde_json::to_string_pretty(&layout)?)?;
                layout_written = true;
            }
            let bytes: Vec<u8> = p.raw().iter().flat_map(|&x| (x as f32).to_le_bytes()).collect();
            fs::write(a.dump.out.join(format!("periodogram_{:06}.f32", rx.frame_index)), bytes)?;
        }
        count += 1;
    }
    rows.flush()?;
    println!("{count} frames processed into {}", a.dump.out.display());
    Ok(())
}

#[derive(Serialize)]
struct DetectionRow {
    frame_index: u64,
    time_s: f64,
    range_m: f64,
    velocity_mps: f64,
    sinr_db: f64,
    flags: String,
}

impl DetectionRow {
    fn new(d: &Detection, time_s: f64) -> Self {
        Self {
            frame_index: d.frame_index,
            time_s,
            range_m: d.range_m,
            velocity_mps: d.velocity_mps,
            sinr_db: d.sinr_db,
            flags: d.flags.label(),
        }
    }
}

fn detect(a: DetectArgs) -> Result<()> {
    let (h, chain, mut r) = open_dump(&a.dump)?;
    fs::create_dir_all(&a.dump.out)?;
    let mut rows = csv::Writer::from_path(a.dump.out.join("detections.csv"))?;
    let (mut frames, mut total, mut active) = (0, 0, 0);
    while let Some((tx, rx)) = read_frame(&mut r, &h)? {
        let ch = estimate_channel(&tx, &rx, DEFAULT_DIVISION_EPSILON)?;
        let out = chain.process(&ch, 0)?;
        for d in &out.detections {
            rows.serialize(DetectionRow::new(d, rx.timestamp))?;
        }
        frames += 1;
        total += out.detections.len();
        active += out.detections.iter().filter(|d| !d.flags.replica_suppressed).count();
    }
    rows.flush()?;
    println!("{frames} frames, {total} detections, {active} after replica suppression");
    Ok(())
}

fn print_metrics(m: &RunMetrics) {
    println!("scenario          {}", m.scenario);
    println!("clutter removal   {}", m.clutter);
    println!("frames            {}", m.frames_processed);
    println!(
        "detection rate    {:.3} ({} of {} covered frames)",
        m.detection_rate, m.detected_frames, m.truth_frames
    );
    if let Some(q) = &m.range_error_quantiles {
        println!(
            "range error       q50 {:.3} m, q95 {:.3} m over {} matches (bias {:+.3} m removed)",
            q.q50, q.q95, q.matched, q.bias_m
        );
    }
    if let Some(r) = m.max_matched_range_m {
        println!("max matched range {r:.1} m");
    }
    if let Some(s) = m.min_validated_sinr_db {
        println!("min valid SINR    {s:.2} dB");
    }
    println!("tracks            {} valid, {} false", m.valid_track_count, m.false_track_count);
}

fn run_replay(a: ReplayArgs) -> Result<Vec<String>> {
    let mut cfg = a.scenario.run_config()?;
    a.chain.apply(&mut cfg.chain)?;
    if !a.frames.is_empty() {
        cfg.chain.frames = a.frames.clone();
    }
    let s = cfg.scenario()?;
    let out = replay(&s, &cfg.chain)?;
    out.write_artifacts(&a.out)?;
    fs::write(a.out.join("run.toml"), cfg.to_toml())?;
    print_metrics(&out.metrics);
    let t = &out.metrics.timing;
    println!("timing            {:.3} s/frame mean, {:.3} s max", t.mean_s, t.max_s);
    Ok(if a.check {
        ReplayThresholds::for_scenario(&out.metrics.scenario).violations(&out.metrics)
    } else {
        Vec::new()
    })
}

fn report(a: ReportArgs) -> Result<Vec<String>> {
    let p = a.params.load()?;
    let r = model_report(&p, a.sweep_range.unwrap_or_default())?;
    let mut violations = if a.check { reference_violations(&r.max_range) } else { Vec::new() };
    let metrics: Option<RunMetrics> = match &a.run {
        Some(dir) => {
            let path = dir.join("metrics.json");
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            Some(serde_json::from_str(&text)?)
        }
        None => None,
    };
    if let (true, Some(m)) = (a.check, &metrics) {
        violations.extend(ReplayThresholds::for_scenario(&m.scenario).violations(m));
    }
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("model_summary.txt"), r.summary())?;
            r.write_curve_csv(BufWriter::new(File::create(dir.join("sinr_curve.csv"))?))?;
            fs::write(dir.join("model.json"), serde_json::to_string_pretty(&r)?)?;
            print!("{}", r.summary());
        }
        None => {
            print!("{}", r.summary());
            println!();
            r.write_curve_csv(io::stdout().lock())?;
        }
    }
    if let Some(m) = &metrics {
        println!();
        print_metrics(m);
        if !m.sinr_curve.is_empty() {
            let diffs: Vec<f64> = m.sinr_curve.iter().map(|b| b.measured_sinr_db - b.model_sinr_db).collect();
            let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let worst = diffs.iter().copied().map(f64::abs).fold(0.0, f64::max);
            println!("measured - model  {mean:+.2} dB mean, {worst:.2} dB worst over {} range bins", diffs.len());
        }
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_and_windows() {
        assert_eq!(parse_pair("8,4").unwrap(), (8, 4));
        assert!(parse_pair("8").is_err());
        assert!(parse_pair("a,1").is_err());
        assert_eq!(parse_window("10:20").unwrap(), [10, 20]);
        assert!(parse_window("10").is_err());
    }

    #[test]
    fn chain_overrides() {
        let args = ChainArgs {
            clutter: Some("crap".into()),
            acquire: Some(5),
            pfa: Some(1e-3),
            train: Some((4, 6)),
            guard: Some((1, 2)),
            no_replica_suppression: true,
        };
        let mut cfg = ChainConfig::default();
        args.apply(&mut cfg).unwrap();
        assert_eq!(cfg.clutter, ClutterRemoval::Crap);
        assert_eq!(cfg.clutter_map.acquisition_frames, 5);
        assert_eq!(cfg.cfar.pfa, 1e-3);
        assert_eq!((cfg.cfar.training, cfg.cfar.guard), ((4, 6), (1, 2)));
        assert!(!cfg.replica_suppression);
        let bad = ChainArgs { pfa: Some(2.0), ..args };
        assert!(bad.apply(&mut cfg).is_err());
    }
}
