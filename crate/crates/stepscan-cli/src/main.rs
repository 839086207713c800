// SPDX-License-Identifier: MIT OR Apache-2.0

#![forbid(unsafe_code)]

mod input;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use stepscan::confidence::{enumerate_region, fit_changepoints, region_threshold, RegionMode, RegionSpec};
use stepscan::expfam::{segment_meanvar, MeanVarConfig};
use stepscan::power::{cbs_power, local_power, marginal_power, PowerSpec};
use stepscan::pvalue::{pvalue, solve_threshold, Constraint, ScanSpec};
use stepscan::segment::{
    segment_cbs, segment_lr, segment_nz, segment_seq, segment_wbs, SearchConfig, Segmentation, Speedup,
};
use stepscan::sim::{run_detection_study, standard_procedures, Generator, JumpLaw, Procedure, Scenario};
use stepscan::stats::{PartialSums, Sequence, VariancePolicy};
use stepscan::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_VALIDATION: u8 = 4;
const EXIT_NUMERICAL: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "stepscan", version, about = "Change-point scans with analytic false-positive control")]
struct Cli {
    /// Emit a JSON report instead of tab-separated text.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment a data file.
    Segment(SegmentArgs),
    /// Solve for the threshold at a false-positive level.
    Threshold(ScanArgs),
    /// Approximate false-positive probability at a threshold.
    Pvalue(ScanArgs),
    /// Confidence-region threshold, and the region itself when a file is given.
    Confidence(ConfidenceArgs),
    /// Detection power of the local contrast or the interval statistic.
    Power(PowerArgs),
    /// Random change-point detection study.
    Simulate(SimulateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ProcedureKind {
    Lr,
    Seq,
    Nz,
    Cbs,
    Multi,
    Wbs,
    Meanvar,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum VarianceKind {
    Diff,
    Sample,
    Local,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("level").required(true).args(["alpha", "threshold"])))]
struct SegmentArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value_t = ProcedureKind::Lr)]
    procedure: ProcedureKind,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 1)]
    m0: usize,
    #[arg(long)]
    m1: Option<usize>,
    /// Window half-widths for `nz`, e.g. `1-30` or `10,20,30`.
    #[arg(long, default_value = "1-30")]
    windows: String,
    #[arg(long, value_enum, default_value_t = VarianceKind::Diff)]
    variance: VarianceKind,
    /// Known noise variance; overrides `--variance`.
    #[arg(long)]
    known_variance: Option<f64>,
    /// Use the thinned background search.
    #[arg(long)]
    pruned: bool,
    #[arg(long, default_value_t = 5000)]
    intervals: usize,
    /// Also emit observation-level partial sums.
    #[arg(long)]
    cusum: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum StatKind {
    Lr,
    Seq,
    Nz,
    Cbs,
    Multi,
    Mv,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[arg(long, value_enum)]
    stat: StatKind,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    m0: usize,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Threshold (for `pvalue`).
    #[arg(long)]
    b: Option<f64>,
    /// Dimension for `mv`.
    #[arg(long, default_value_t = 2)]
    dim: u32,
    #[arg(long, default_value = "1-30")]
    windows: String,
    /// Bound each side of the background separately.
    #[arg(long)]
    per_side: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModeKind {
    Joint,
    Tau,
}

#[derive(Args, Debug)]
struct ConfidenceArgs {
    file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeKind::Tau)]
    mode: ModeKind,
    /// Change sizes in noise units, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    deltas: Vec<f64>,
    /// Number of change-points.
    #[arg(long = "M", alias = "changes")]
    n_changes: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 15)]
    window: usize,
}

#[derive(Args, Debug)]
struct PowerArgs {
    #[arg(long, allow_hyphen_values = true)]
    delta: f64,
    #[arg(long)]
    b: f64,
    #[arg(long)]
    h1: Option<usize>,
    #[arg(long)]
    h2: Option<usize>,
    /// Pulse length for the interval statistic.
    #[arg(long)]
    pulse: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Number of change-points per replication.
    #[arg(long = "M", alias = "changes")]
    n_changes: usize,
    #[arg(long, default_value_t = 500)]
    m: usize,
    #[arg(long, default_value_t = 200)]
    reps: usize,
}

/// Everything needed to repeat a run.
#[derive(Debug, Serialize, Deserialize)]
struct RunReport {
    command: String,
    argv: Vec<String>,
    input_digest: Option<String>,
    results: Value,
    warnings: Vec<String>,
    elapsed_ms: u128,
}

#[derive(Debug)]
enum Failure {
    Parse(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => EXIT_PARSE,
            Failure::Lib(e) if e.is_numerical() => EXIT_NUMERICAL,
            Failure::Lib(_) => EXIT_VALIDATION,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Parse(m) => write!(f, "input error: {m}"),
            Failure::Lib(e) => write!(f, "{e}"),
        }
    }
}

struct Output {
    results: Value,
    tsv: String,
    warnings: Vec<String>,
    digest: Option<String>,
}

fn parse_windows(text: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::Lib(Error::Domain(format!("cannot read window set {text:?}")));
    let mut out = Vec::new();
    for part in text.split(',').filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.trim().parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn scan_spec(args: &ScanArgs) -> Result<ScanSpec, Failure> {
    let m = args.m;
    let spec = match args.stat {
        StatKind::Lr => ScanSpec::lr(m),
        StatKind::Seq => ScanSpec::seq(m),
        StatKind::Nz => ScanSpec::nz(m, parse_windows(&args.windows)?),
        StatKind::Cbs => ScanSpec::cbs(m, 0.0),
        StatKind::Multi => ScanSpec::cbs(m, 1.0),
        StatKind::Mv => ScanSpec::lr_multivariate(m, args.dim),
    };
    let m1 = args.m1.unwrap_or(m.saturating_sub(1));
    let constraint = if args.per_side { Constraint::PerSide } else { Constraint::Total };
    Ok(spec.with_bounds(args.m0, m1).with_constraint(constraint))
}

fn read_groups(path: &PathBuf) -> Result<(Vec<input::Group>, String), Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Failure::Parse(format!("{} is not UTF-8", path.display())))?;
    let groups = input::parse(&text).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
    Ok((groups, input::digest(&bytes)))
}

fn procedure_spec(kind: ProcedureKind, m: usize, args: &SegmentArgs) -> Result<ScanSpec, Failure> {
    let m1 = args.m1.unwrap_or(m.saturating_sub(1));
    Ok(match kind {
        ProcedureKind::Lr | ProcedureKind::Wbs => ScanSpec::lr(m).with_bounds(args.m0, m1),
        ProcedureKind::Seq => ScanSpec::seq(m),
        ProcedureKind::Nz => ScanSpec::nz(m, parse_windows(&args.windows)?),
        ProcedureKind::Cbs => ScanSpec::cbs(m, 0.0),
        ProcedureKind::Multi => ScanSpec::cbs(m, 1.0),
        ProcedureKind::Meanvar => ScanSpec::lr_multivariate(m, 2).with_bounds(2, m1),
    })
}

fn cmd_segment(args: &SegmentArgs, seed: u64) -> Result<Output, Failure> {
    let (groups, digest) = read_groups(&args.file)?;
    let policy = match (args.known_variance, args.variance) {
        (Some(v), _) => VariancePolicy::Known(v),
        (None, VarianceKind::Diff) => VariancePolicy::EstimateDiff,
        (None, VarianceKind::Sample) => VariancePolicy::EstimateSample,
        (None, VarianceKind::Local) => VariancePolicy::Local,
    };
    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    let mut tsv = String::from("group\tn\tsigma\tthreshold\tchange_after\tbackground_start\tbackground_end\tz\tdelta\n");
    let mut cusum_rows = String::new();
    for g in &groups {
        let label = if g.name.is_empty() { "all" } else { g.name.as_str() };
        let m = g.values.len();
        let seq = Sequence::new(g.values.clone(), policy)?;
        let b = match (args.threshold, args.alpha) {
            (Some(b), _) => b,
            (None, Some(alpha)) if args.procedure == ProcedureKind::Meanvar => {
                let cfg = MeanVarConfig {
                    alpha,
                    seed,
                    m1: args.m1,
                    ..MeanVarConfig::default()
                };
                stepscan::expfam::calibrate_meanvar(m, &cfg)?.calibrated
            }
            (None, Some(alpha)) => solve_threshold(&procedure_spec(args.procedure, m, args)?, alpha)?.b,
            (None, None) => unreachable!("clap requires one of alpha or threshold"),
        };
        let sigma = match seq.sigma() {
            Ok(s) => s,
            Err(Error::Degenerate(_)) => {
                warnings.push(format!("group {label}: estimated standard deviation is zero; nothing to detect"));
                rows.push(json!({"group": label, "n": m, "sigma": 0.0, "threshold": b, "detections": []}));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mut cfg = SearchConfig::new(b).with_seed(seed);
        cfg.m0 = args.m0;
        cfg.m1 = args.m1;
        if args.pruned {
            cfg = cfg.with_speedup(Speedup::Pruned);
        }
        let seg: Segmentation = match args.procedure {
            ProcedureKind::Lr => segment_lr(&seq, &cfg)?,
            ProcedureKind::Seq => segment_seq(&seq, &cfg)?,
            ProcedureKind::Nz => segment_nz(&seq, &parse_windows(&args.windows)?, b)?,
            ProcedureKind::Cbs => segment_cbs(&seq, b, 0.0, &cfg)?,
            ProcedureKind::Multi => segment_cbs(&seq, b, 1.0, &cfg)?,
            ProcedureKind::Wbs => segment_wbs(&seq, b, args.intervals, seed)?,
            ProcedureKind::Meanvar => {
                let mv = MeanVarConfig {
                    threshold: Some(b),
                    m1: args.m1,
                    seed,
                    ..MeanVarConfig::default()
                };
                segment_meanvar(&seq, &mv)?.0
            }
        };
        let dets: Vec<Value> = seg
            .detections
            .iter()
            .map(|d| {
                let _ = writeln!(
                    tsv,
                    "{label}\t{m}\t{sigma:.6}\t{b:.4}\t{}\t{}\t{}\t{:.4}\t{:.4}",
                    d.j,
                    d.i + 1,
                    d.k,
                    d.z,
                    d.delta_hat
                );
                json!({
                    "change_after": d.j,
                    "position": g.positions[d.j - 1],
                    "background": [d.i + 1, d.k],
                    "z": d.z,
                    "delta": d.delta_hat,
                })
            })
            .collect();
        let mut row = json!({"group": label, "n": m, "sigma": sigma, "threshold": b, "detections": dets});
        if args.cusum {
            let sums = PartialSums::new(&g.values);
            let cs: Vec<f64> = (1..=m).map(|t| sums.at(t)).collect();
            for (t, (v, c)) in g.values.iter().zip(&cs).enumerate() {
                let _ = writeln!(cusum_rows, "{label}\t{}\t{v}\t{c}", t + 1);
            }
            row["cusum"] = json!(cs);
        }
        rows.push(row);
    }
    if args.cusum {
        tsv.push_str("\ngroup\tindex\tvalue\tcusum\n");
        tsv.push_str(&cusum_rows);
    }
    Ok(Output {
        results: json!({"procedure": format!("{:?}", args.procedure).to_lowercase(), "groups": rows}),
        tsv,
        warnings,
        digest: Some(digest),
    })
}

fn cmd_threshold(args: &ScanArgs) -> Result<Output, Failure> {
    let spec = scan_spec(args)?;
    let r = solve_threshold(&spec, args.alpha)?;
    let mut warnings = Vec::new();
    if !r.trustworthy {
        warnings.push("approximation exceeds 0.5 near the solution".into());
    }
    Ok(Output {
        tsv: format!("statistic\tm\talpha\tb\tprob\n{}\t{}\t{}\t{:.4}\t{:.5}\n", r.method, args.m, args.alpha, r.b, r.prob),
        results: json!({"spec": spec, "alpha": args.alpha, "b": r.b, "prob": r.prob}),
        warnings,
        digest: None,
    })
}

fn cmd_pvalue(args: &ScanArgs) -> Result<Output, Failure> {
    let b = args
        .b
        .ok_or_else(|| Failure::Lib(Error::Domain("pvalue needs --b".into())))?;
    let spec = scan_spec(args)?;
    let r = pvalue(&spec, b)?;
    let mut warnings = Vec::new();
    if !r.trustworthy {
        warnings.push(format!("raw value {:.3} is beyond the range where the approximation is reliable", r.raw));
    }
    Ok(Output {
        tsv: format!("statistic\tm\tb\tprob\n{}\t{}\t{b}\t{:.5}\n", r.method, args.m, r.prob),
        results: json!({"spec": spec, "b": b, "prob": r.prob, "raw": r.raw}),
        warnings,
        digest: None,
    })
}

fn cmd_confidence(args: &ConfidenceArgs) -> Result<Output, Failure> {
    let mode = match args.mode {
        ModeKind::Joint => RegionMode::JointTauMu,
        ModeKind::Tau => RegionMode::TauOnly,
    };
    let n = args.n_changes.unwrap_or(args.deltas.len());
    if n == 0 {
        return Err(Failure::Lib(Error::Domain("give --deltas or --M".into())));
    }
    let Some(path) = &args.file else {
        if args.deltas.len() != n {
            return Err(Failure::Lib(Error::Domain(format!("need {n} change sizes, got {}", args.deltas.len()))));
        }
        let b = region_threshold(&args.deltas, args.alpha, mode)?;
        return Ok(Output {
            tsv: format!("mode\tdeltas\talpha\tb\n{:?}\t{:?}\t{}\t{b:.4}\n", args.mode, args.deltas, args.alpha),
            results: json!({"deltas": args.deltas, "alpha": args.alpha, "b": b}),
            warnings: Vec::new(),
            digest: None,
        });
    };
    let (groups, digest) = read_groups(path)?;
    if groups.len() != 1 {
        return Err(Failure::Lib(Error::Domain("confidence regions take a single group".into())));
    }
    let seq = Sequence::new(groups[0].values.clone(), VariancePolicy::EstimateDiff)?;
    let center = fit_changepoints(&seq, n)?;
    let mut spec = RegionSpec::new(center.clone(), args.alpha, mode);
    spec.window = args.window;
    if !args.deltas.is_empty() {
        spec.deltas = Some(args.deltas.clone());
    }
    let region = enumerate_region(&seq, &spec)?;
    let mut warnings = Vec::new();
    if region.truncated {
        warnings.push("region touches the search window; widen --window".into());
    }
    let mut tsv = format!("# estimate {:?}  threshold {:.4}\nchange_points\tstatistic\n", center, region.threshold);
    for t in &region.accepted {
        let cps: Vec<String> = t.taus.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(tsv, "{}\t{:.4}", cps.join(","), t.t_stat);
    }
    Ok(Output {
        results: json!({"estimate": center, "region": region}),
        tsv,
        warnings,
        digest: Some(digest),
    })
}

fn cmd_power(args: &PowerArgs) -> Result<Output, Failure> {
    if let Some(n0) = args.pulse {
        let p = cbs_power(args.delta, n0, args.b)?;
        return Ok(Output {
            tsv: format!("delta\tpulse\tb\tpower\n{}\t{n0}\t{}\t{p:.4}\n", args.delta, args.b),
            results: json!({"delta": args.delta, "pulse": n0, "b": args.b, "power": p}),
            warnings: Vec::new(),
            digest: None,
        });
    }
    let (Some(h1), Some(h2)) = (args.h1, args.h2) else {
        return Err(Failure::Lib(Error::Domain("give --h1 and --h2, or --pulse".into())));
    };
    let spec = PowerSpec::new(args.delta, h1, h2, args.b)?;
    let (marg, local) = (marginal_power(&spec)?, local_power(&spec)?);
    Ok(Output {
        tsv: format!(
            "delta\th1\th2\tb\tmarginal\tlocal\n{}\t{h1}\t{h2}\t{}\t{marg:.4}\t{local:.4}\n",
            args.delta, args.b
        ),
        results: json!({"spec": spec, "marginal": marg, "local": local}),
        warnings: Vec::new(),
        digest: None,
    })
}

fn cmd_simulate(args: &SimulateArgs, seed: u64) -> Result<Output, Failure> {
    let scenario = Scenario {
        generator: Generator::RandomChanges {
            n_changes: args.n_changes,
            m: args.m,
            jump: JumpLaw::default(),
            min_spacing: 1,
        },
        reps: args.reps,
        seed,
        policy: VariancePolicy::Known(1.0),
    };
    let procedures: Vec<Procedure> = standard_procedures();
    let report = run_detection_study(&scenario, &procedures)?;
    let mut tsv = String::from("procedure\tcorrect\tunder\tover\n");
    for c in &report.cards {
        let _ = writeln!(tsv, "{}\t{}\t{}\t{}", c.procedure, c.correct, c.under, c.over);
    }
    let _ = writeln!(tsv, "# easy {}  impossible {}", report.easy, report.impossible);
    let cards: Vec<Value> = report
        .cards
        .iter()
        .map(|c| json!({"procedure": c.procedure, "correct": c.correct, "under": c.under, "over": c.over}))
        .collect();
    Ok(Output {
        results: json!({"scenario": scenario, "cards": cards, "easy": report.easy, "impossible": report.impossible}),
        tsv,
        warnings: Vec::new(),
        digest: None,
    })
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    match &cli.command {
        Command::Segment(a) => cmd_segment(a, cli.seed),
        Command::Threshold(a) => cmd_threshold(a),
        Command::Pvalue(a) => cmd_pvalue(a),
        Command::Confidence(a) => cmd_confidence(a),
        Command::Power(a) => cmd_power(a),
        Command::Simulate(a) => cmd_simulate(a, cli.seed),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Segment(_) => "segment",
        Command::Threshold(_) => "threshold",
        Command::Pvalue(_) => "pvalue",
        Command::Confidence(_) => "confidence",
        Command::Power(_) => "power",
        Command::Simulate(_) => "simulate",
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let start = Instant::now();
    match run(&cli) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            if cli.json {
                let report = RunReport {
                    command: command_name(&cli.command).into(),
                    argv: argv[1..].to_vec(),
                    input_digest: out.digest,
                    results: out.results,
                    warnings: out.warnings,
                    elapsed_ms: start.elapsed().as_millis(),
                };
                match serde_json::to_string_pretty(&report) {
                    Ok(s) => println!("{s}"),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(EXIT_NUMERICAL);
                    }
                }
            } else {
                print!("{}", out.tsv);
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
