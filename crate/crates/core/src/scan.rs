//! Grid scans over load `α` and temperature `T`.
//!
//! Each load fixes the pattern count `M(α)` (a power law between `m_min` and
//! `m_max`), the dimension `N = round(ln M / α)` and the trial count `N_tr`
//! (linear from `ntr_max` down to `ntr_min`). Every (α, T) cell runs `N_tr`
//! independent trials; the resulting [`AlignmentMap`] is then labelled
//! against the single-basin oracle by [`classify`].
//!
//! # Work units and randomness
//!
//! By default one pattern set is drawn per (α, trial) and shared by the
//! chains at every temperature, which then advance in lockstep through one
//! fused alignment product. With `share_patterns = false` every (α, T,
//! trial) gets its own pattern set. Either way each unit draws from streams
//! addressed by its grid coordinates (see [`crate::rng`]), so the map is a
//! pure function of the master seed and the configuration.
//!
//! Units are grouped into chunks whose estimated footprint fits the memory
//! budget; chunks run one after another, units within a chunk in parallel.

use std::ops::Range;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{KernelKind, KernelSpec};
use crate::error::{invalid, Error, Result};
use crate::geometry::PatternSet;
use crate::oracle::{phi_eq, DensityOfStates, OracleSpec};
use crate::rng::{SeedStream, CHAIN, PATTERNS};
use crate::sampler::{run_shared_batch, run_trial, TrialConfig, TrialProtocol, TrialResult};

pub const DEFAULT_THRESHOLD_FRACTION: f64 = 0.5;
pub const DEFAULT_MEMORY_BUDGET: u64 = 8_000_000_000;

/// `start, start + step, …` up to `stop` inclusive (with a relative slack of
/// 10⁻⁹ steps), each value rounded to 12 decimals so that `0.01·30` prints
/// as `0.3`.
pub fn grid_by_step(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(invalid(format!("bad grid: start {start}, stop {stop}, step {step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanSchedule {
    pub alpha_grid: Vec<f64>,
    pub temp_grid: Vec<f64>,
    pub m_min: usize,
    pub m_max: usize,
    pub gamma: f64,
    /// Desk-scale cap applied after the power law; `N` follows the capped `M`.
    pub m_cap: Option<usize>,
    pub ntr_max: usize,
    pub ntr_min: usize,
    pub memory_budget: u64,
}

impl Default for ScanSchedule {
    fn default() -> Self {
        Self {
            alpha_grid: grid_by_step(0.01, 0.55, 0.01).expect("static grid"),
            temp_grid: grid_by_step(0.025, 2.0, 0.05).expect("static grid"),
            m_min: 20_000,
            m_max: 500_000,
            gamma: 10.0,
            m_cap: None,
            ntr_max: 512,
            ntr_min: 64,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

impl ScanSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid.is_empty() || !strictly_increasing(&self.alpha_grid) {
            return Err(invalid("alpha grid must be non-empty and strictly increasing"));
        }
        if self.alpha_grid.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(invalid("alpha grid values must be positive and finite"));
        }
        if self.temp_grid.is_empty() || !strictly_increasing(&self.temp_grid) {
            return Err(invalid("temperature grid must be non-empty and strictly increasing"));
        }
        if self.temp_grid.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(invalid("temperatures must be positive and finite"));
        }
        if self.m_min < 2 || self.m_min > self.m_max {
            return Err(invalid(format!("need 2 <= m_min <= m_max, got {} and {}", self.m_min, self.m_max)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.m_cap.is_some_and(|c| c < 2) {
            return Err(invalid("m_cap must be at least 2"));
        }
        if self.ntr_min < 1 || self.ntr_min > self.ntr_max {
            return Err(invalid(format!("need 1 <= ntr_min <= ntr_max, got {} and {}", self.ntr_min, self.ntr_max)));
        }
        if self.memory_budget == 0 {
            return Err(invalid("memory budget must be positive"));
        }
        Ok(())
    }

    fn alpha_fraction(&self, alpha: f64) -> Result<f64> {
        let lo = self.alpha_grid.first().copied().ok_or_else(|| invalid("empty alpha grid"))?;
        let hi = *self.alpha_grid.last().expect("non-empty");
        let slack = 1e-12 * hi.abs().max(1.0);
        if !(alpha >= lo - slack && alpha <= hi + slack) {
            return Err(invalid(format!("alpha = {alpha} outside the grid range [{lo}, {hi}]")));
        }
        Ok(if hi > lo { ((alpha - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
    }

    /// Per-load parameters for every point of the alpha grid.
    pub fn plan(&self) -> Result<Vec<AlphaPlan>> {
        self.validate()?;
        self.alpha_grid
            .iter()
            .enumerate()
            .map(|(index, &alpha)| {
                let m_raw = m_of_alpha(alpha, self)?;
                let m = self.m_cap.map_or(m_raw, |c| m_raw.min(c));
                Ok(AlphaPlan {
                    index,
                    alpha,
                    m,
                    n: n_of_alpha(alpha, m)?,
                    n_trials: ntr_of_alpha(alpha, self)?,
                })
            })
            .collect()
    }
}

/// `M = round(m_min + (m_max − m_min)·x^γ)` with `x` the position of `α` in
/// the grid range.
pub fn m_of_alpha(alpha: f64, schedule: &ScanSchedule) -> Result<usize> {
    let x = schedule.alpha_fraction(alpha)?;
    let span = (schedule.m_max - schedule.m_min) as f64;
    Ok((schedule.m_min as f64 + span * x.powf(schedule.gamma)).round() as usize)
}

/// `N = round(ln M / α)`.
pub fn n_of_alpha(alpha: f64, m: usize) -> Result<usize> {
    if m < 2 {
        return Err(invalid(format!("need M >= 2, got {m}")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    let n = ((m as f64).ln() / alpha).round();
    if n < 2.0 {
        return Err(invalid(format!("alpha = {alpha} too large for M = {m}: N = {n} < 2")));
    }
    Ok(n as usize)
}

/// `N_tr = round(ntr_max + (ntr_min − ntr_max)·x)`.
pub fn ntr_of_alpha(alpha: f64, schedule: &ScanSchedule) -> Result<usize> {
    let x = schedule.alpha_fraction(alpha)?;
    let (hi, lo) = (schedule.ntr_max as f64, schedule.ntr_min as f64);
    Ok((hi + (lo - hi) * x).round() as usize)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaPlan {
    pub index: usize,
    pub alpha: f64,
    pub m: usize,
    pub n: usize,
    pub n_trials: usize,
}

/// How a kernel's sharpness carries across cells of different `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharpness {
    /// Fixed `β_net`, so `b = N·β_net` varies per cell.
    BetaNet(f64),
    /// Fixed `b`, so `β_net = b/N` varies per cell.
    B(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridKernel {
    pub kind: KernelKind,
    pub sharpness: Sharpness,
    pub epsilon: f64,
}

impl GridKernel {
    pub fn lse(beta_net: f64) -> Self {
        Self { kind: KernelKind::Lse, sharpness: Sharpness::BetaNet(beta_net), epsilon: KernelSpec::DEFAULT_EPSILON }
    }

    pub fn lsr_fixed_b(b: f64) -> Self {
        Self { kind: KernelKind::Lsr, sharpness: Sharpness::B(b), epsilon: KernelSpec::DEFAULT_EPSILON }
    }

    pub fn lsr_fixed_beta(beta_net: f64) -> Self {
        Self { kind: KernelKind::Lsr, sharpness: Sharpness::BetaNet(beta_net), epsilon: KernelSpec::DEFAULT_EPSILON }
    }

    /// The concrete kernel in dimension `n`.
    pub fn at(&self, n: usize) -> Result<KernelSpec> {
        let beta = match self.sharpness {
            Sharpness::BetaNet(beta) => beta,
            Sharpness::B(b) => {
                if self.kind == KernelKind::Lse {
                    return Err(invalid("fixed-b mode applies to LSR kernels only"));
                }
                b / n as f64
            }
        };
        KernelSpec::new(self.kind, beta, self.epsilon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanOptions {
    pub protocol: TrialProtocol,
    pub share_patterns: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { protocol: TrialProtocol::default(), share_patterns: true }
    }
}

/// Trial-averaged results at one (α, T).
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub alpha_index: usize,
    pub temp_index: usize,
    pub alpha: f64,
    pub temperature: f64,
    pub n: usize,
    pub m: usize,
    pub planned_trials: usize,
    /// Time-averaged target alignment of each successful trial, in trial order.
    pub trial_alignments: Vec<f64>,
    pub mean_alignment: f64,
    /// Standard error of the mean; NaN with fewer than two trials.
    pub stderr: f64,
    pub acceptance: f64,
    pub errors: Vec<String>,
    /// Wall time attributed to the cell; lockstep units split theirs evenly.
    pub seconds: f64,
}

impl Cell {
    pub fn n_trials(&self) -> usize {
        self.trial_alignments.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentMap {
    pub alphas: Vec<f64>,
    pub temps: Vec<f64>,
    pub kernel: GridKernel,
    /// Row-major: all temperatures of the first alpha, then the next.
    pub cells: Vec<Cell>,
}

impl AlignmentMap {
    pub fn cell(&self, alpha_index: usize, temp_index: usize) -> &Cell {
        &self.cells[alpha_index * self.temps.len() + temp_index]
    }

    pub fn has_errors(&self) -> bool {
        self.cells.iter().any(|c| !c.errors.is_empty())
    }

    /// True when no trial anywhere succeeded.
    pub fn all_failed(&self) -> bool {
        self.cells.iter().all(|c| c.n_trials() == 0)
    }
}

#[derive(Clone, Copy, Debug)]
struct Unit {
    alpha: usize,
    temp: Option<usize>,
    trial: usize,
}

struct UnitOutput {
    unit: Unit,
    results: Vec<Result<TrialResult>>,
    seconds: f64,
}

/// Greedy consecutive grouping of items so that each group's summed size
/// stays within `budget`; an oversized item gets a group of its own.
pub fn plan_chunks(sizes: &[u64], budget: u64) -> Vec<Range<usize>> {
    let mut chunks = Vec::new();
    let (mut start, mut used) = (0, 0u64);
    for (i, &s) in sizes.iter().enumerate() {
        if i > start && used.saturating_add(s) > budget {
            chunks.push(start..i);
            start = i;
            used = 0;
        }
        used = used.saturating_add(s);
    }
    if start < sizes.len() {
        chunks.push(start..sizes.len());
    }
    chunks
}

/// Estimated bytes held by one unit: its pattern matrix plus per-chain
/// state, proposal and alignment buffers.
pub fn unit_footprint(n: usize, m: usize, chains: usize) -> u64 {
    let f = std::mem::size_of::<f64>() as u64;
    2 * f * (n as u64 * m as u64) + f * chains as u64 * (3 * n as u64 + m as u64)
}

pub fn run_grid(schedule: &ScanSchedule, kernel: &GridKernel, options: &ScanOptions, master_seed: u64) -> Result<AlignmentMap> {
    let plans = schedule.plan()?;
    options.protocol.validate()?;
    let specs: Vec<KernelSpec> = plans.iter().map(|p| kernel.at(p.n)).collect::<Result<_>>()?;
    let temps = &schedule.temp_grid;
    let root = SeedStream::new(master_seed);

    let mut units = Vec::new();
    for p in &plans {
        for trial in 0..p.n_trials {
            if options.share_patterns {
                units.push(Unit { alpha: p.index, temp: None, trial });
            } else {
                units.extend((0..temps.len()).map(|t| Unit { alpha: p.index, temp: Some(t), trial }));
            }
        }
    }
    let sizes: Vec<u64> = units
        .iter()
        .map(|u| {
            let p = &plans[u.alpha];
            unit_footprint(p.n, p.m, if u.temp.is_some() { 1 } else { temps.len() })
        })
        .collect();

    let run_unit = |u: Unit| -> UnitOutput {
        let start = Instant::now();
        let p = &plans[u.alpha];
        let (a, trial) = (u.alpha as u64, u.trial as u64);
        let temp_indices: Vec<usize> = match u.temp {
            Some(t) => vec![t],
            None => (0..temps.len()).collect(),
        };
        let pattern_path = match u.temp {
            Some(t) => vec![PATTERNS, a, t as u64, trial],
            None => vec![PATTERNS, a, trial],
        };
        let configs: Vec<TrialConfig> = temp_indices
            .iter()
            .map(|&t| TrialConfig::new(temps[t], options.protocol, root.path(&[CHAIN, a, t as u64, trial])))
            .collect();
        let results = match PatternSet::sample(p.n, p.m, &mut root.path(&pattern_path).rng()) {
            Ok(patterns) if configs.len() == 1 => vec![run_trial(&patterns, &specs[u.alpha], &configs[0])],
            Ok(patterns) => run_shared_batch(&patterns, &specs[u.alpha], &configs),
            Err(e) => configs.iter().map(|_| Err(Error::Numerical(e.to_string()))).collect(),
        };
        UnitOutput { unit: u, results, seconds: start.elapsed().as_secs_f64() }
    };

    let mut outputs: Vec<UnitOutput> = Vec::with_capacity(units.len());
    for chunk in plan_chunks(&sizes, schedule.memory_budget) {
        let done: Vec<UnitOutput> = units[chunk].par_iter().map(|&u| run_unit(u)).collect();
        outputs.extend(done);
    }

    let mut cells: Vec<Cell> = Vec::with_capacity(plans.len() * temps.len());
    for p in &plans {
        for (t, &temperature) in temps.iter().enumerate() {
            cells.push(Cell {
                alpha_index: p.index,
                temp_index: t,
                alpha: p.alpha,
                temperature,
                n: p.n,
                m: p.m,
                planned_trials: p.n_trials,
                trial_alignments: Vec::new(),
                mean_alignment: f64::NAN,
                stderr: f64::NAN,
                acceptance: f64::NAN,
                errors: Vec::new(),
                seconds: 0.0,
            });
        }
    }
    let mut acceptance_sums = vec![0.0; cells.len()];
    // Units were generated in (alpha, trial[, temp]) order, so trials reach
    // each cell in increasing order.
    for out in outputs {
        let share = out.seconds / out.results.len().max(1) as f64;
        for (j, res) in out.results.into_iter().enumerate() {
            let t = out.unit.temp.unwrap_or(j);
            let idx = out.unit.alpha * temps.len() + t;
            let cell = &mut cells[idx];
            cell.seconds += share;
            match res {
                Ok(r) => {
                    cell.trial_alignments.push(r.mean_alignment);
                    acceptance_sums[idx] += r.acceptance_rate;
                }
                Err(e) => cell.errors.push(format!("trial {}: {e}", out.unit.trial)),
            }
        }
    }
    for (cell, acc) in cells.iter_mut().zip(acceptance_sums) {
        let k = cell.n_trials();
        if k == 0 {
            continue;
        }
        let mean = cell.trial_alignments.iter().sum::<f64>() / k as f64;
        cell.mean_alignment = mean;
        cell.acceptance = acc / k as f64;
        if k > 1 {
            let ss: f64 = cell.trial_alignments.iter().map(|x| (x - mean) * (x - mean)).sum();
            cell.stderr = (ss / (k - 1) as f64).sqrt() / (k as f64).sqrt();
        }
    }

    Ok(AlignmentMap { alphas: schedule.alpha_grid.clone(), temps: temps.clone(), kernel: *kernel, cells })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Retrieval,
    NonRetrieval,
    Unknown,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Retrieval => "retrieval",
            Phase::NonRetrieval => "non-retrieval",
            Phase::Unknown => "unknown",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retrieval" => Ok(Phase::Retrieval),
            "non-retrieval" => Ok(Phase::NonRetrieval),
            "unknown" => Ok(Phase::Unknown),
            other => Err(Error::Format(format!("unknown phase label `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseCell {
    pub alpha: f64,
    pub temperature: f64,
    pub n: usize,
    pub phi_eq: Option<f64>,
    /// `mean_alignment / φ_eq`.
    pub ratio: Option<f64>,
    pub phase: Phase,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMap {
    pub threshold_fraction: f64,
    pub cells: Vec<PhaseCell>,
}

/// Oracle `φ_eq` at each cell's (N, T) and kernel, evaluated in parallel.
pub fn oracle_for_map(map: &AlignmentMap, measure: DensityOfStates) -> Vec<Result<f64>> {
    map.cells
        .par_iter()
        .map(|c| {
            let spec = map.kernel.at(c.n)?;
            phi_eq(&OracleSpec::new(c.n, c.temperature, spec).with_measure(measure))
        })
        .collect()
}

/// A cell is retrieval iff its mean alignment reaches `threshold_fraction·φ_eq`.
/// Cells without an oracle value or without successful trials are unknown.
pub fn classify(map: &AlignmentMap, oracle: &[Option<f64>], threshold_fraction: f64) -> Result<PhaseMap> {
    if oracle.len() != map.cells.len() {
        return Err(invalid(format!("{} oracle values for {} cells", oracle.len(), map.cells.len())));
    }
    if !(threshold_fraction > 0.0) || !threshold_fraction.is_finite() {
        return Err(invalid(format!("threshold fraction must be positive, got {threshold_fraction}")));
    }
    let cells = map
        .cells
        .iter()
        .zip(oracle)
        .map(|(c, &phi)| {
            let usable = c.n_trials() > 0 && c.mean_alignment.is_finite();
            let (ratio, phase) = match phi {
                Some(p) if usable => {
                    let phase = if c.mean_alignment >= threshold_fraction * p { Phase::Retrieval } else { Phase::NonRetrieval };
                    (Some(c.mean_alignment / p), phase)
                }
                _ => (None, Phase::Unknown),
            };
            PhaseCell { alpha: c.alpha, temperature: c.temperature, n: c.n, phi_eq: phi, ratio, phase }
        })
        .collect();
    Ok(PhaseMap { threshold_fraction, cells })
}

pub(crate) fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_float)
}

fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

pub const MAP_HEADER: [&str; 9] = ["alpha", "T", "N", "M", "n_trials", "mean_alignment", "stderr", "acceptance", "phase"];
pub const PHASE_HEADER: [&str; 6] = ["alpha", "T", "N", "phi_eq", "ratio", "phase"];

pub fn write_map_csv<W: std::io::Write>(map: &AlignmentMap, phases: &PhaseMap, w: W) -> Result<()> {
    if phases.cells.len() != map.cells.len() {
        return Err(invalid("phase map does not match the alignment map"));
    }
    let mut out = csv_writer(w);
    out.write_record(MAP_HEADER)?;
    for (c, p) in map.cells.iter().zip(&phases.cells) {
        out.write_record([
            fmt_float(c.alpha),
            fmt_float(c.temperature),
            c.n.to_string(),
            c.m.to_string(),
            c.n_trials().to_string(),
            fmt_float(c.mean_alignment),
            fmt_float(c.stderr),
            fmt_float(c.acceptance),
            p.phase.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_phase_csv<W: std::io::Write>(phases: &PhaseMap, w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(PHASE_HEADER)?;
    for p in &phases.cells {
        out.write_record([
            fmt_float(p.alpha),
            fmt_float(p.temperature),
            p.n.to_string(),
            fmt_opt(p.phi_eq),
            fmt_opt(p.ratio),
            p.phase.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One row of `map.csv` as read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct MapRow {
    pub alpha: f64,
    pub temperature: f64,
    pub n: usize,
    pub m: usize,
    pub n_trials: usize,
    pub mean_alignment: f64,
    pub stderr: f64,
    pub acceptance: f64,
    pub phase: Phase,
}

pub fn read_map_csv<R: std::io::Read>(r: R) -> Result<Vec<MapRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(MAP_HEADER) {
        return Err(Error::Format(format!(
            "map header must be `{}`, got `{}`",
            MAP_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.records()
        .enumerate()
        .map(|(line, rec)| {
            let rec = rec?;
            let field = |i: usize| &rec[i];
            let bad = |i: usize| Error::Format(format!("row {}: bad `{}` value `{}`", line + 1, MAP_HEADER[i], &rec[i]));
            let f = |i: usize| field(i).parse::<f64>().map_err(|_| bad(i));
            let u = |i: usize| field(i).parse::<usize>().map_err(|_| bad(i));
            Ok(MapRow {
                alpha: f(0)?,
                temperature: f(1)?,
                n: u(2)?,
                m: u(3)?,
                n_trials: u(4)?,
                mean_alignment: f(5)?,
                stderr: f(6)?,
                acceptance: f(7)?,
                phase: field(8).parse()?,
            })
        })
        .collect()
}

/// A gnuplot script rendering the mean-alignment heat map from `map_csv`.
pub fn gnuplot_script(map_csv: &str) -> String {
    format!(
        "# gnuplot -p plot.gp\n\
         set datafile separator ','\n\
         set xlabel 'alpha'\n\
         set ylabel 'T'\n\
         set cblabel 'mean alignment'\n\
         set cbrange [0:1]\n\
         set view map\n\
         set key off\n\
         splot '{map_csv}' every ::1 using 1:2:6 with points pointtype 5 pointsize 1.5 palette\n"
    )
}
