//! `lppls` command-line tool.
//!
//! Exit status: 0 on success (and for `fit`, a qualified fit), 2 for a
//! disqualified fit or an empty post-mortem selection, 1 for usage, data
//! and configuration errors.

mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use lppls::indicator::{scan, write_points_csv};
use lppls::model::Window;
use lppls::optimizer::{calibrate, SearchBox};
use lppls::postmortem::{collect_fits, read_store, report, write_store, PostMortemError};
use lppls::qualify::qualify;
use lppls::synth::generate;
use lppls::timeseries::DateLookup;
use lppls::{BubbleSign, FitResult, PriceSeries, RowPolicy, SynthSpec};
use serde::Serialize;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "lppls", version, about = "LPPLS bubble detection on daily price series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calibrate and qualify a single window.
    Fit(FitArgs),
    /// Confidence indicators over a range of endpoints.
    Scan(ScanArgs),
    /// Densities and quantiles of a qualified-fit cluster.
    Postmortem(PostMortemArgs),
    /// Generate a synthetic bubble series.
    Synth(SynthArgs),
    /// Peak, valley and drawdown over a date range.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV with a Date column and a price column.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Price column; "Adj Close" then "Close" when omitted.
    #[arg(long)]
    column: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct Tuning {
    #[arg(long)]
    restarts: Option<usize>,
    /// Evaluation budget per restart.
    #[arg(long)]
    max_evals: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    lomb_alpha: Option<f64>,
    /// One of 0.01, 0.05, 0.10.
    #[arg(long)]
    ar1_alpha: Option<f64>,
    #[arg(long)]
    max_rel_error: Option<f64>,
    #[arg(long)]
    oscillation_min: Option<f64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// First date of the window (rolled forward to a trading day).
    #[arg(long)]
    t1: Option<NaiveDate>,
    /// Last date of the window (rolled back to a trading day).
    #[arg(long)]
    t2: Option<NaiveDate>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Debug, Args)]
struct ScanArgs {
    #[command(flatten)]
    common: Common,
    /// First endpoint.
    #[arg(long)]
    start: Option<NaiveDate>,
    /// Last endpoint.
    #[arg(long)]
    end: Option<NaiveDate>,
    #[arg(long)]
    max_window: Option<usize>,
    #[arg(long)]
    min_window: Option<usize>,
    #[arg(long)]
    step: Option<usize>,
    /// Worker threads; 1 runs serially.
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SignArg {
    Positive,
    Negative,
}

impl From<SignArg> for BubbleSign {
    fn from(s: SignArg) -> Self {
        match s {
            SignArg::Positive => BubbleSign::Positive,
            SignArg::Negative => BubbleSign::Negative,
        }
    }
}

#[derive(Debug, Args)]
struct PostMortemArgs {
    #[command(flatten)]
    common: Common,
    /// Fit store written by `scan`.
    #[arg(long)]
    store: Option<PathBuf>,
    /// First endpoint of the cluster.
    #[arg(long)]
    start: Option<NaiveDate>,
    /// Last endpoint of the cluster.
    #[arg(long)]
    end: Option<NaiveDate>,
    #[arg(long, value_enum)]
    sign: Option<SignArg>,
    /// Comma-separated quantile levels.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    PaperLike,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    tc: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c2: Option<f64>,
    #[arg(long)]
    n_days: Option<usize>,
    /// Standard deviation of the log-price noise.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    start_date: Option<NaiveDate>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    column: Option<String>,
    /// First date of the range; the series start when omitted.
    #[arg(long)]
    start: Option<NaiveDate>,
    /// Last date of the range; the series end when omitted.
    #[arg(long)]
    end: Option<NaiveDate>,
}

fn base_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &common.csv {
        cfg.input = Some(p.clone());
    }
    if let Some(c) = &common.column {
        cfg.column = Some(c.clone());
    }
    if let Some(o) = &common.out {
        cfg.output = Some(o.clone());
    }
    if let Some(s) = common.seed {
        cfg.scan.optimizer.seed = s;
    }
    Ok(cfg)
}

fn apply_tuning(cfg: &mut RunConfig, t: &Tuning) {
    let opt = &mut cfg.scan.optimizer;
    if let Some(v) = t.restarts {
        opt.restarts = v;
    }
    if let Some(v) = t.max_evals {
        opt.max_evaluations = v;
    }
    if let Some(v) = t.population {
        opt.population_size = v;
    }
    let f = &mut cfg.scan.filters;
    if let Some(v) = t.lomb_alpha {
        f.lomb_alpha = v;
    }
    if let Some(v) = t.ar1_alpha {
        f.ar1_alpha = v;
    }
    if let Some(v) = t.max_rel_error {
        f.max_rel_error = v;
    }
    if let Some(v) = t.oscillation_min {
        f.oscillation_min = v;
    }
}

fn load_series(cfg: &RunConfig) -> Result<PriceSeries> {
    let path = cfg.input()?;
    PriceSeries::load_csv(path, cfg.column.as_deref(), RowPolicy::Strict)
        .with_context(|| format!("loading {}", path.display()))
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    t1_date: NaiveDate,
    t2_date: NaiveDate,
    tc_date: Option<NaiveDate>,
    qualified: bool,
    fit: &'a FitResult,
}

fn cmd_fit(args: FitArgs) -> Result<ExitCode> {
    let mut cfg = base_config(&args.common)?;
    apply_tuning(&mut cfg, &args.tuning);
    if let Some(d) = args.t1 {
        cfg.t1 = Some(d);
    }
    if let Some(d) = args.t2 {
        cfg.t2 = Some(d);
    }
    cfg.scan.validate()?;
    let (Some(t1), Some(t2)) = (cfg.t1, cfg.t2) else {
        bail!("fit needs both --t1 and --t2");
    };
    if t1 >= t2 {
        bail!("t1 ({t1}) must precede t2 ({t2})");
    }
    let series = load_series(&cfg)?;
    let i1 = series.date_to_index(t1, DateLookup::NearestFollowing)?;
    let i2 = series.dates().partition_point(|d| *d <= t2);
    if i2 == 0 {
        bail!("t2 ({t2}) precedes the first observation");
    }
    let i2 = i2 - 1;
    if i1 >= i2 {
        bail!("no trading days between {t1} and {t2}");
    }
    let w = Window::new(i1, i2)?;
    let dir = cfg.echo()?;

    let bbox = SearchBox::for_window(w, &cfg.scan.search);
    let mut fit = calibrate(&series, w, &bbox, &cfg.scan.optimizer)?;
    let q = qualify(&fit, &series, &cfg.scan.filters);
    fit.qualification = Some(q);
    let out = FitReport {
        t1_date: series.dates()[i1],
        t2_date: series.dates()[i2],
        tc_date: fit.is_converged().then(|| series.nearest_date(fit.params.tc)),
        qualified: q.passed,
        fit: &fit,
    };
    write_json(dir.join("fit.json"), &out)?;
    let p = &fit.params;
    println!(
        "window {}..{}  tc {:.2} ({})  m {:.4}  omega {:.4}  B {:.6}  cost {:.6e}  {}",
        out.t1_date,
        out.t2_date,
        p.tc,
        out.tc_date.map_or("-".to_string(), |d| d.to_string()),
        p.m,
        p.omega,
        p.b,
        fit.cost,
        if q.passed { "qualified" } else { "disqualified" }
    );
    Ok(if q.passed { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_scan(args: ScanArgs) -> Result<ExitCode> {
    let mut cfg = base_config(&args.common)?;
    apply_tuning(&mut cfg, &args.tuning);
    let sc = &mut cfg.scan;
    if let Some(d) = args.start {
        sc.endpoint_start = Some(d);
    }
    if let Some(d) = args.end {
        sc.endpoint_end = Some(d);
    }
    if let Some(v) = args.max_window {
        sc.max_window = v;
    }
    if let Some(v) = args.min_window {
        sc.min_window = v;
    }
    if let Some(v) = args.step {
        sc.window_step = v;
    }
    if let Some(v) = args.workers {
        cfg.workers = Some(v);
    }
    if cfg.workers == Some(0) {
        bail!("--workers must be positive");
    }
    cfg.scan.validate()?;
    let series = load_series(&cfg)?;
    let dir = cfg.echo()?;

    let out = scan(&series, &cfg.scan, cfg.workers)?;
    let mut w = create(dir.join("indicator.csv"))?;
    write_points_csv(&mut w, &out.points)?;
    w.flush()?;
    let mut w = create(dir.join("fits.jsonl"))?;
    write_store(&mut w, &out.fits)?;
    w.flush()?;

    let peak = |f: fn(&lppls::ConfidencePoint) -> f64| out.points.iter().map(f).fold(0.0, f64::max);
    println!(
        "{} endpoints, {} qualified fits, max positive CI {:.3}, max negative CI {:.3}",
        out.points.len(),
        out.fits.len(),
        peak(|p| p.positive_ci),
        peak(|p| p.negative_ci)
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_postmortem(args: PostMortemArgs) -> Result<ExitCode> {
    let mut cfg = base_config(&args.common)?;
    let pm = &mut cfg.postmortem;
    if let Some(p) = args.store {
        pm.store = Some(p);
    }
    if let Some(d) = args.start {
        pm.start = Some(d);
    }
    if let Some(d) = args.end {
        pm.end = Some(d);
    }
    if let Some(s) = args.sign {
        pm.sign = s.into();
    }
    if let Some(l) = args.levels {
        pm.levels = l;
    }
    let pm = cfg.postmortem.clone();
    let Some(store_path) = pm.store else {
        bail!("postmortem needs --store");
    };
    let (Some(start), Some(end)) = (pm.start, pm.end) else {
        bail!("postmortem needs --start and --end");
    };
    if let Some(l) = pm.levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        bail!("quantile level {l} outside [0, 1]");
    }
    let series = load_series(&cfg)?;
    let file = File::open(&store_path).with_context(|| format!("opening {}", store_path.display()))?;
    let store = read_store(BufReader::new(file))?;
    let fits = match collect_fits(&store, start, end, pm.sign) {
        Ok(f) => f,
        Err(PostMortemError::EmptySelection) => {
            eprintln!("empty selection: no qualified fits with endpoints in {start}..{end}");
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(e.into()),
    };
    let dir = cfg.echo()?;
    let rep = report(&fits, &series, &pm.levels)?;
    write_json(dir.join("postmortem.json"), &rep)?;
    let mut w = create(dir.join("tc_density.csv"))?;
    rep.tc_density.write_csv(&mut w, &series)?;
    w.flush()?;
    let mut w = create(dir.join("t1_density.csv"))?;
    rep.t1_density.write_csv(&mut w, &series)?;
    w.flush()?;

    println!("{} fits, earliest t1 {}, tc mode {}", rep.n_fits, rep.t1_earliest, rep.tc_mode_date);
    for q in &rep.tc_quantiles {
        println!("  tc q{:.2} {}", q.level, q.date);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = args.out {
        cfg.output = Some(o);
    }
    let mut spec = match (args.preset, cfg.synth) {
        (Some(Preset::PaperLike), _) | (None, None) => SynthSpec::paper_like(),
        (None, Some(s)) => s,
    };
    let p = &mut spec.params;
    for (slot, v) in [
        (&mut p.tc, args.tc),
        (&mut p.m, args.m),
        (&mut p.omega, args.omega),
        (&mut p.a, args.a),
        (&mut p.b, args.b),
        (&mut p.c1, args.c1),
        (&mut p.c2, args.c2),
        (&mut spec.noise_sigma, args.noise),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if let Some(n) = args.n_days {
        spec.n_days = n;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(d) = args.start_date {
        spec.start_date = d;
    }
    spec.validate()?;
    cfg.synth = Some(spec);
    let series = generate(&spec)?;
    let dir = cfg.echo()?;
    let mut w = create(dir.join("series.csv"))?;
    series.write_csv(&mut w)?;
    w.flush()?;
    println!(
        "{} days {}..{}, tc {} ({})",
        series.len(),
        series.first_date(),
        series.last_date(),
        spec.params.tc,
        series.nearest_date(spec.params.tc)
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_stats(args: StatsArgs) -> Result<ExitCode> {
    let series = PriceSeries::load_csv(&args.csv, args.column.as_deref(), RowPolicy::Strict)
        .with_context(|| format!("loading {}", args.csv.display()))?;
    let start = args.start.unwrap_or(series.first_date());
    let end = args.end.unwrap_or(series.last_date());
    let stats = series.crash_stats(start, end)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Postmortem(a) => cmd_postmortem(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Stats(a) => cmd_stats(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
