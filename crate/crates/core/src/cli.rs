//! The `damphase` command-line tool.
//!
//! ```text
//! damphase scan    --config scan.toml --out results/
//! damphase trial   --config trial.toml [--out trial/]
//! damphase oracle  --kernel lse --n 198 --temps 0.1,0.3 [--out curve.csv]
//! damphase compare --map results/map.csv --oracle curve.csv --alphas 0.05
//! ```
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 runtime or
//! numerical failure, 3 some scan cells had failing trials.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{parse_byte_size, Config, GridSpec, KernelSection, OracleSection};
use crate::energy::{KernelKind, KernelSpec};
use crate::error::{Error, Result};
use crate::oracle::{phi_eq_curve, read_curve_csv, write_curve_csv, DensityOfStates};
use crate::rng::{SeedStream, CHAIN, PATTERNS};
use crate::sampler::{run_trial_traced, TrialConfig, TraceRow};
use crate::scan::{
    classify, fmt_float, gnuplot_script, oracle_for_map, read_map_csv, run_grid, write_map_csv, write_phase_csv,
    AlignmentMap, MapRow, Phase,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "damphase", version, about = "Finite-temperature retrieval maps for dense associative memories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Settings that take precedence over the configuration file.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "DAMPHASE_WORKERS")]
    pub workers: Option<usize>,
    /// Memory budget for in-flight pattern sets, e.g. `8GB`.
    #[arg(long, global = true, env = "DAMPHASE_MEMORY_BUDGET")]
    pub memory_budget: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan the (alpha, T) grid and write map.csv, phase.csv, manifest.toml and plot.gp.
    Scan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one traced trial; writes trace.csv and manifest.toml to --out, or the trace to stdout.
    Trial {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the single-basin equilibrium alignment over a temperature grid.
    Oracle(OracleArgs),
    /// Compare map alignments with oracle curves.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    /// Configuration supplying [kernel] and [oracle]; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub kernel: Option<KernelKind>,
    #[arg(long)]
    pub beta_net: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated temperatures.
    #[arg(long, value_delimiter = ',')]
    pub temps: Option<Vec<f64>>,
    /// `marginal` or `surface-area`.
    #[arg(long)]
    pub density: Option<DensityOfStates>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub map: PathBuf,
    /// Oracle curves, one per compared alpha in order, or a single curve for all.
    #[arg(long = "oracle", required = true, num_args = 1..)]
    pub oracle: Vec<PathBuf>,
    /// Comma-separated loads (default: every alpha in the map).
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
    /// Agreement tolerance on |mean_alignment − phi_eq|.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
    /// Also write the comparison table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Maps an error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Format(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Scan { config, out } => cmd_scan(&config, &out, &cli.overrides).map(|o| o.exit_code),
        Command::Trial { config, out } => cmd_trial(&config, out.as_deref(), &cli.overrides).map(|_| EXIT_OK),
        Command::Oracle(args) => cmd_oracle(&args, &cli.overrides).map(|_| EXIT_OK),
        Command::Compare(args) => {
            let report = cmd_compare(&args)?;
            print!("{}", report.render());
            Ok(EXIT_OK)
        }
    }
}

fn apply_overrides(mut config: Config, o: &Overrides) -> Result<Config> {
    if let Some(seed) = o.seed {
        config.seed = seed;
    }
    if let Some(w) = o.workers {
        config.run.workers = Some(w);
    }
    if let Some(m) = &o.memory_budget {
        parse_byte_size(m)?;
        config.run.memory_budget = Some(m.clone());
    }
    config.validate()?;
    Ok(config)
}

fn workers(config: &Config) -> usize {
    config
        .run
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start {workers} workers: {e}")))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct OutputDir {
    dir: PathBuf,
    digests: BTreeMap<String, String>,
}

impl OutputDir {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), digests: BTreeMap::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.digests.insert(name.to_string(), format!("sha256:{}", sha256_hex(bytes)));
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct CellTiming {
    pub alpha: f64,
    #[serde(rename = "T")]
    pub temperature: f64,
    pub seconds: f64,
}

/// Provenance record written next to every output. Its `[config]` table is
/// the effective configuration, so `--config manifest.toml` reruns the
/// command exactly.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub workers: usize,
    pub total_seconds: f64,
    pub outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<CellTiming>,
    pub config: Config,
}

impl RunManifest {
    fn new(command: &str, config: &Config, workers: usize, started: Instant) -> Self {
        Self {
            manifest_version: MANIFEST_VERSION,
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            workers,
            total_seconds: started.elapsed().as_secs_f64(),
            outputs: BTreeMap::new(),
            cells: Vec::new(),
            config: config.clone(),
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("cannot serialize manifest: {e}")))
    }
}

#[derive(Debug)]
pub struct ScanOutcome {
    pub map: AlignmentMap,
    pub exit_code: i32,
    pub warnings: Vec<String>,
}

pub fn cmd_scan(config_path: &Path, out: &Path, overrides: &Overrides) -> Result<ScanOutcome> {
    let started = Instant::now();
    let config = apply_overrides(Config::load(config_path)?, overrides)?;
    let schedule = config.schedule()?;
    let kernel = config.grid_kernel()?;
    let options = config.scan_options()?;
    let workers = workers(&config);

    let mut warnings = Vec::new();
    for p in schedule.plan()? {
        if let Some(w) = kernel.at(p.n)?.basin_warning(p.n) {
            warnings.push(format!("alpha = {}: {w}", p.alpha));
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let pool = pool(workers)?;
    let (map, oracle) = pool.install(|| -> Result<_> {
        let map = run_grid(&schedule, &kernel, &options, config.seed)?;
        let oracle = oracle_for_map(&map, config.classify.density_of_states);
        Ok((map, oracle))
    })?;

    let mut report = String::new();
    let mut oracle_values = Vec::with_capacity(oracle.len());
    for (cell, res) in map.cells.iter().zip(oracle) {
        for e in &cell.errors {
            report.push_str(&format!("alpha={} T={}: {e}\n", cell.alpha, cell.temperature));
        }
        match res {
            Ok(v) => oracle_values.push(Some(v)),
            Err(e) => {
                let msg = format!("alpha={} T={}: oracle unavailable, cell unclassified: {e}", cell.alpha, cell.temperature);
                eprintln!("warning: {msg}");
                warnings.push(msg);
                oracle_values.push(None);
            }
        }
    }
    let phases = classify(&map, &oracle_values, config.classify.threshold_fraction)?;

    let mut dir = OutputDir::create(out)?;
    let mut buf = Vec::new();
    write_map_csv(&map, &phases, &mut buf)?;
    dir.write("map.csv", &buf)?;
    buf.clear();
    write_phase_csv(&phases, &mut buf)?;
    dir.write("phase.csv", &buf)?;
    dir.write("plot.gp", gnuplot_script("map.csv").as_bytes())?;
    if !report.is_empty() {
        dir.write("errors.txt", report.as_bytes())?;
    } else {
        let stale = out.join("errors.txt");
        if stale.exists() {
            fs::remove_file(stale)?;
        }
    }

    let mut manifest = RunManifest::new("scan", &config, workers, started);
    manifest.outputs = dir.digests.clone();
    manifest.cells = map
        .cells
        .iter()
        .map(|c| CellTiming { alpha: c.alpha, temperature: c.temperature, seconds: c.seconds })
        .collect();
    fs::write(out.join("manifest.toml"), manifest.to_toml_string()?)?;

    let exit_code = if map.all_failed() {
        eprintln!("error: every trial failed; see {}", out.join("errors.txt").display());
        EXIT_RUNTIME
    } else if map.has_errors() {
        eprintln!("warning: some trials failed; see {}", out.join("errors.txt").display());
        EXIT_PARTIAL
    } else {
        EXIT_OK
    };
    Ok(ScanOutcome { map, exit_code, warnings })
}

fn trace_csv_writer<W: Write>(w: W) -> Result<csv::Writer<W>> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["step", "phi1", "energy", "accepted"])?;
    Ok(out)
}

fn trace_record(row: &TraceRow) -> [String; 4] {
    [
        row.step.to_string(),
        fmt_float(row.phi1),
        fmt_float(row.energy),
        u8::from(row.accepted).to_string(),
    ]
}

/// Runs the single trial described by `[single]`, streaming its trace.
pub fn cmd_trial(config_path: &Path, out: Option<&Path>, overrides: &Overrides) -> Result<crate::sampler::TrialResult> {
    let started = Instant::now();
    let config = apply_overrides(Config::load(config_path)?, overrides)?;
    let single = config
        .single
        .clone()
        .ok_or_else(|| Error::Config("`single`: the trial command needs a [single] section with n, m and temperature".into()))?;
    let spec: KernelSpec = config.grid_kernel()?.at(single.n)?;
    if let Some(w) = spec.basin_warning(single.n) {
        eprintln!("warning: {w}");
    }
    let root = SeedStream::new(config.seed);
    let patterns = crate::geometry::PatternSet::sample(single.n, single.m, &mut root.path(&[PATTERNS, 0, 0]).rng())?;
    let trial = TrialConfig::new(single.temperature, config.trial.protocol()?, root.path(&[CHAIN, 0, 0, 0]));

    let mut buf = Vec::new();
    let result = {
        let mut writer = trace_csv_writer(&mut buf)?;
        let mut failure: Option<csv::Error> = None;
        let result = run_trial_traced(&patterns, &spec, &trial, |row| {
            if failure.is_none() {
                if let Err(e) = writer.write_record(trace_record(&row)) {
                    failure = Some(e);
                }
            }
        })?;
        if let Some(e) = failure {
            return Err(e.into());
        }
        writer.flush()?;
        result
    };

    let summary = format!(
        "mean_alignment={} acceptance_rate={} final_alignment={} wall_rejections={} phi_init={}",
        result.mean_alignment, result.acceptance_rate, result.final_alignment, result.wall_rejections, result.phi_init
    );
    match out {
        Some(dir_path) => {
            let mut dir = OutputDir::create(dir_path)?;
            dir.write("trace.csv", &buf)?;
            let mut manifest = RunManifest::new("trial", &config, 1, started);
            manifest.outputs = dir.digests;
            fs::write(dir_path.join("manifest.toml"), manifest.to_toml_string()?)?;
            println!("{summary}");
        }
        None => {
            std::io::stdout().write_all(&buf)?;
            eprintln!("{summary}");
        }
    }
    Ok(result)
}

/// Evaluates the oracle curve and returns it; writes CSV to `--out` (with a
/// manifest alongside) or to stdout.
pub fn cmd_oracle(args: &OracleArgs, overrides: &Overrides) -> Result<Vec<(f64, f64)>> {
    let started = Instant::now();
    let mut config = match &args.config {
        Some(path) => Config::load(path)?,
        None => {
            let kind = args
                .kernel
                .ok_or_else(|| Error::Config("`kernel`: pass --kernel or a --config with a [kernel] section".into()))?;
            Config::with_kernel(KernelSection { kind, beta_net: None, b: None, epsilon: KernelSpec::DEFAULT_EPSILON })
        }
    };
    if let Some(kind) = args.kernel {
        config.kernel.kind = kind;
    }
    if args.beta_net.is_some() || args.b.is_some() {
        config.kernel.beta_net = args.beta_net;
        config.kernel.b = args.b;
    }
    if let Some(d) = args.density {
        config.classify.density_of_states = d;
    }
    let n = args
        .n
        .or(config.oracle.as_ref().map(|o| o.n))
        .ok_or_else(|| Error::Config("`oracle.n`: pass --n or set [oracle] n".into()))?;
    let temps_spec = args
        .temps
        .clone()
        .map(GridSpec::List)
        .or_else(|| config.oracle.as_ref().and_then(|o| o.temps.clone()));
    config.oracle = Some(OracleSection { n, temps: temps_spec });
    let config = apply_overrides(config, overrides)?;
    let temps = config.oracle_temps()?;
    let kernel = config.grid_kernel()?.at(n)?;
    let workers = workers(&config);

    let curve = pool(workers)?.install(|| phi_eq_curve(n, &kernel, &temps, config.classify.density_of_states))?;
    if kernel.kind() == KernelKind::Lse {
        if let Some(w) = curve.windows(2).find(|w| w[1].1 > w[0].1 + 1e-9) {
            return Err(Error::Numerical(format!(
                "oracle curve not monotone: phi_eq({}) = {} < phi_eq({}) = {}",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
    }

    let mut buf = Vec::new();
    write_curve_csv(&curve, &mut buf)?;
    match &args.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, &buf)?;
            let mut manifest = RunManifest::new("oracle", &config, workers, started);
            let name = path.file_name().map_or_else(|| "curve.csv".into(), |s| s.to_string_lossy().into_owned());
            manifest.outputs.insert(name, format!("sha256:{}", sha256_hex(&buf)));
            fs::write(path.with_extension("manifest.toml"), manifest.to_toml_string()?)?;
        }
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(curve)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub alpha: f64,
    pub temperature: f64,
    pub mean_alignment: f64,
    pub phi_eq: f64,
    pub abs_diff: f64,
    /// False from the first non-retrieval cell onward (in increasing T).
    pub pre_transition: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub tolerance: f64,
    /// Largest |Δ| over pre-transition rows; NaN when there are none.
    pub max_abs_diff: f64,
}

impl CompareReport {
    pub fn agrees(&self) -> bool {
        self.max_abs_diff <= self.tolerance
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:>10} {:>8} {:>14} {:>10} {:>10}  note\n", "alpha", "T", "mean_alignment", "phi_eq", "|diff|");
        for r in &self.rows {
            s.push_str(&format!(
                "{:>10.4} {:>8.4} {:>14.6} {:>10.6} {:>10.6}  {}\n",
                r.alpha,
                r.temperature,
                r.mean_alignment,
                r.phi_eq,
                r.abs_diff,
                if r.pre_transition { "" } else { "post-transition (excluded)" }
            ));
        }
        let verdict = if self.max_abs_diff.is_nan() {
            "no pre-transition rows".to_string()
        } else if self.agrees() {
            format!("agree (tolerance {})", self.tolerance)
        } else {
            format!("disagree (tolerance {})", self.tolerance)
        };
        s.push_str(&format!("max |diff| before the transition: {}; {verdict}\n", self.max_abs_diff));
        s
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(["alpha", "T", "mean_alignment", "phi_eq", "abs_diff", "pre_transition"])?;
        for r in &self.rows {
            out.write_record([
                fmt_float(r.alpha),
                fmt_float(r.temperature),
                fmt_float(r.mean_alignment),
                fmt_float(r.phi_eq),
                fmt_float(r.abs_diff),
                r.pre_transition.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn cmd_compare(args: &CompareArgs) -> Result<CompareReport> {
    let rows: Vec<MapRow> = read_map_csv(&read_file(&args.map)?[..])?;
    let mut available: Vec<f64> = Vec::new();
    for r in &rows {
        if !available.iter().any(|&a| close(a, r.alpha)) {
            available.push(r.alpha);
        }
    }
    let alphas = if args.alphas.is_empty() { available.clone() } else { args.alphas.clone() };
    if args.oracle.len() != 1 && args.oracle.len() != alphas.len() {
        return Err(Error::Config(format!(
            "`oracle`: got {} curves for {} alphas; pass one per alpha or a single curve",
            args.oracle.len(),
            alphas.len()
        )));
    }
    let curves: Vec<Vec<(f64, f64)>> = args
        .oracle
        .iter()
        .map(|p| read_curve_csv(&read_file(p)?[..]))
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    for (i, &alpha) in alphas.iter().enumerate() {
        let curve = &curves[if curves.len() == 1 { 0 } else { i }];
        let mut selected: Vec<&MapRow> = rows.iter().filter(|r| close(r.alpha, alpha)).collect();
        if selected.is_empty() {
            let list: Vec<String> = available.iter().map(|a| a.to_string()).collect();
            return Err(Error::Config(format!("`alphas`: {alpha} not in the map; available: {}", list.join(", "))));
        }
        selected.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));
        let mut pre = true;
        for r in selected {
            let phi = curve
                .iter()
                .find(|(t, _)| close(*t, r.temperature))
                .map(|&(_, p)| p)
                .ok_or_else(|| Error::Format(format!("oracle curve for alpha = {alpha} has no T = {}", r.temperature)))?;
            pre &= r.phase == Phase::Retrieval;
            out.push(CompareRow {
                alpha,
                temperature: r.temperature,
                mean_alignment: r.mean_alignment,
                phi_eq: phi,
                abs_diff: (r.mean_alignment - phi).abs(),
                pre_transition: pre,
            });
        }
    }
    let max_abs_diff = out
        .iter()
        .filter(|r| r.pre_transition)
        .map(|r| r.abs_diff)
        .fold(f64::NAN, f64::max);
    let report = CompareReport { rows: out, tolerance: args.tolerance, max_abs_diff };
    if let Some(path) = &args.out {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        fs::write(path, buf)?;
    }
    Ok(report)
}
