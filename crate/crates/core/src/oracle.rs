//! Single-basin Boltzmann prediction of the equilibrium alignment.
//!
//! ```text
//! φ_eq(T) = ∫ φ n(φ) e^{−N u(φ)/T} dφ / ∫ n(φ) e^{−N u(φ)/T} dφ
//! ```
//!
//! over `[−1, 1]` (LSE) or `(φ_c, 1]` (LSR), with `u` from
//! [`single_basin_energy_density`]. Only the retrieval basin of one isolated
//! pattern is modelled; the prediction measures thermal broadening, not
//! escape to other patterns.
//!
//! # Density of states
//!
//! Two conventions are available. [`DensityOfStates::Marginal`] (default) is
//! the exact marginal of `φ = x·ξ/N` for `x` uniform on the sphere,
//! `∝ (1 − φ²)^{(N−3)/2}`: the `(N−2)`-sphere of radius `√(N(1−φ²))` times
//! the arc-length factor `dφ/ds ∝ (1 − φ²)^{−1/2}`.
//! [`DensityOfStates::SurfaceArea`] is the bare area
//! `[N(1 − φ²)]^{(N−2)/2}` without that factor. The two agree to `O(1/N)`;
//! at small `N` only the marginal matches direct sampling on the sphere.
//!
//! # Quadrature
//!
//! Integrals are taken in the polar angle `θ` (`φ = cos θ`), where the
//! integrand `sin^{N−2}θ e^{−N u/T}` (marginal form) has no endpoint
//! singularities. The log-weight is located on a coarse grid, its peak
//! refined by golden-section search, and the domain clipped to where the
//! log-weight is within [`LOG_WINDOW`] of the peak; everything outside
//! carries relative mass below `e^{−60}`. A composite midpoint rule on that
//! window is refined by doubling until successive estimates agree.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{single_basin_energy_density, KernelKind, KernelSpec};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_POINTS: usize = 200_000;

/// Width, in log-weight units, of the integration window below the peak.
pub const LOG_WINDOW: f64 = 60.0;

/// Target change between successive doublings.
pub const CONVERGED: f64 = 1e-8;
/// Largest change tolerated after two doublings before giving up.
pub const MAX_CHANGE: f64 = 1e-6;

const COARSE_POINTS: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityOfStates {
    #[default]
    Marginal,
    SurfaceArea,
}

impl DensityOfStates {
    fn exponent(self, n: usize) -> f64 {
        match self {
            DensityOfStates::Marginal => (n as f64 - 3.0) / 2.0,
            DensityOfStates::SurfaceArea => (n as f64 - 2.0) / 2.0,
        }
    }
}

impl std::str::FromStr for DensityOfStates {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "marginal" => Ok(Self::Marginal),
            "surface-area" => Ok(Self::SurfaceArea),
            other => Err(invalid(format!("unknown density of states `{other}` (marginal or surface-area)"))),
        }
    }
}

/// `ln n(φ)` up to an additive constant: `e · ln(N(1 − φ²))` with `e` the
/// convention's exponent. Zero density (`−∞`) for `|φ| ≥ 1`.
pub fn log_density_of_states(phi: f64, n: usize, measure: DensityOfStates) -> f64 {
    if !(phi.abs() < 1.0) {
        return f64::NEG_INFINITY;
    }
    let e = measure.exponent(n);
    if e == 0.0 {
        0.0
    } else {
        e * (n as f64 * (1.0 - phi) * (1.0 + phi)).ln()
    }
}

/// The same function in the angle variable, `1 − φ² = sin²θ`.
fn log_density_at_angle(theta: f64, n: usize, measure: DensityOfStates) -> f64 {
    let e = measure.exponent(n);
    if e == 0.0 {
        0.0
    } else {
        let s = theta.sin();
        e * (n as f64 * s * s).ln()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleSpec {
    pub n: usize,
    /// `f64::INFINITY` selects the entropy-only limit `u ≡ 0`.
    pub temperature: f64,
    pub kernel: KernelSpec,
    pub points: usize,
    pub measure: DensityOfStates,
}

impl OracleSpec {
    pub fn new(n: usize, temperature: f64, kernel: KernelSpec) -> Self {
        Self {
            n,
            temperature,
            kernel,
            points: DEFAULT_POINTS,
            measure: DensityOfStates::default(),
        }
    }

    pub fn with_points(mut self, points: usize) -> Self {
        self.points = points;
        self
    }

    pub fn with_measure(mut self, measure: DensityOfStates) -> Self {
        self.measure = measure;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid(format!("oracle dimension must be >= 2, got {}", self.n)));
        }
        if !(self.temperature > 0.0) {
            return Err(invalid(format!("oracle temperature must be positive, got {}", self.temperature)));
        }
        if self.points < 16 {
            return Err(invalid("oracle needs at least 16 quadrature points"));
        }
        if self.kernel.kind() == KernelKind::Lsr && self.kernel.sharpness(self.n) <= 1.0 {
            return Err(invalid(format!(
                "LSR oracle needs b > 1, got b = {} at N = {}",
                self.kernel.sharpness(self.n),
                self.n
            )));
        }
        Ok(())
    }

    /// Lower alignment bound of the integration domain.
    pub fn phi_min(&self) -> f64 {
        match self.kernel.kind() {
            KernelKind::Lse => -1.0,
            KernelKind::Lsr => self.kernel.support_threshold(self.n),
        }
    }

    fn theta_max(&self) -> f64 {
        self.phi_min().acos()
    }

    fn log_weight(&self, theta: f64) -> f64 {
        if !(theta > 0.0 && theta < self.theta_max()) {
            return f64::NEG_INFINITY;
        }
        let energy = if self.temperature.is_infinite() {
            0.0
        } else {
            match single_basin_energy_density(theta.cos(), self.n, &self.kernel) {
                Ok(u) => self.n as f64 * u / self.temperature,
                Err(_) => return f64::NEG_INFINITY,
            }
        };
        log_density_at_angle(theta, self.n, self.measure) + theta.sin().ln() - energy
    }
}

/// A converged quadrature estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleEstimate {
    pub phi_eq: f64,
    /// |estimate(2k) − estimate(k)| at the accepted refinement.
    pub change: f64,
    pub points: usize,
}

pub fn phi_eq(spec: &OracleSpec) -> Result<f64> {
    phi_eq_detailed(spec).map(|e| e.phi_eq)
}

pub fn phi_eq_detailed(spec: &OracleSpec) -> Result<OracleEstimate> {
    spec.validate()?;
    let window = Window::locate(spec)?;
    let k = spec.points;
    let r1 = window.integrate(spec, k);
    let r2 = window.integrate(spec, 2 * k);
    let mut best = OracleEstimate { phi_eq: r2, change: (r2 - r1).abs(), points: 2 * k };
    if best.change >= CONVERGED {
        let r3 = window.integrate(spec, 4 * k);
        best = OracleEstimate { phi_eq: r3, change: (r3 - r2).abs(), points: 4 * k };
        if !(best.change <= MAX_CHANGE) {
            return Err(Error::Numerical(format!(
                "oracle quadrature did not converge for N = {}, T = {}: estimates {r1}, {r2}, {r3} \
                 on window theta in [{}, {}]",
                spec.n, spec.temperature, window.lo, window.hi
            )));
        }
    }
    let lo = spec.phi_min();
    if !(best.phi_eq > lo && best.phi_eq < 1.0) || !best.phi_eq.is_finite() {
        return Err(Error::Numerical(format!(
            "oracle estimate {} outside ({lo}, 1) for N = {}, T = {}",
            best.phi_eq, spec.n, spec.temperature
        )));
    }
    Ok(best)
}

struct Window {
    lo: f64,
    hi: f64,
    peak: f64,
}

impl Window {
    fn locate(spec: &OracleSpec) -> Result<Self> {
        let theta_max = spec.theta_max();
        let h = theta_max / COARSE_POINTS as f64;
        let grid: Vec<f64> = (0..COARSE_POINTS).map(|i| (i as f64 + 0.5) * h).collect();
        let values: Vec<f64> = grid.iter().map(|&t| spec.log_weight(t)).collect();
        let (imax, &lmax_coarse) = values
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| if *cur.1 > *best.1 { cur } else { best });
        if !lmax_coarse.is_finite() {
            return Err(Error::Numerical(format!(
                "Boltzmann weight vanishes on the whole domain (N = {}, T = {})",
                spec.n, spec.temperature
            )));
        }

        let a = if imax == 0 { 0.0 } else { grid[imax - 1] };
        let b = if imax + 1 == COARSE_POINTS { theta_max } else { grid[imax + 1] };
        let peak = golden_max(|t| spec.log_weight(t), a, b);
        let lmax = spec.log_weight(peak).max(lmax_coarse);
        let peak = if spec.log_weight(peak) >= lmax_coarse { peak } else { grid[imax] };
        let cut = lmax - LOG_WINDOW;
        let below = |t: f64| spec.log_weight(t) < cut;

        let mut i = imax;
        while i > 0 && values[i - 1] >= cut {
            i -= 1;
        }
        let lo = if i == 0 {
            0.0
        } else {
            let inner = if i == imax { peak } else { grid[i] };
            bisect(grid[i - 1], inner, below)
        };

        let mut j = imax;
        while j + 1 < COARSE_POINTS && values[j + 1] >= cut {
            j += 1;
        }
        let hi = if j + 1 == COARSE_POINTS {
            theta_max
        } else {
            let inner = if j == imax { peak } else { grid[j] };
            bisect(grid[j + 1], inner, below)
        };
        Ok(Self { lo, hi: hi.max(lo), peak })
    }

    fn integrate(&self, spec: &OracleSpec, k: usize) -> f64 {
        let lref = spec.log_weight(self.peak);
        let h = (self.hi - self.lo) / k as f64;
        let (num, den) = (0..k)
            .map(|i| {
                let t = self.lo + (i as f64 + 0.5) * h;
                let w = (spec.log_weight(t) - lref).exp();
                (t.cos() * w, w)
            })
            .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        num / den
    }
}

/// Maximizes a unimodal function on `[a, b]`.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 4.0 * f64::EPSILON * (a.abs() + b.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Boundary between `outside` (where `is_outside` holds) and `inside`.
fn bisect<F: Fn(f64) -> bool>(mut outside: f64, mut inside: f64, is_outside: F) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (outside + inside);
        if mid == outside || mid == inside {
            break;
        }
        if is_outside(mid) {
            outside = mid;
        } else {
            inside = mid;
        }
    }
    outside
}

/// `φ_eq` at each temperature, evaluated in parallel; order follows `temps`.
pub fn phi_eq_curve(n: usize, kernel: &KernelSpec, temps: &[f64], measure: DensityOfStates) -> Result<Vec<(f64, f64)>> {
    if temps.is_empty() {
        return Err(invalid("temperature grid is empty"));
    }
    temps
        .par_iter()
        .map(|&t| phi_eq(&OracleSpec::new(n, t, *kernel).with_measure(measure)).map(|p| (t, p)))
        .collect()
}

/// Writes a `T,phi_eq` curve with 17 significant digits.
pub fn write_curve_csv<W: std::io::Write>(curve: &[(f64, f64)], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["T", "phi_eq"])?;
    for &(t, p) in curve {
        out.write_record([format!("{t:.16e}"), format!("{p:.16e}")])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_curve_csv<R: std::io::Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["T", "phi_eq"] {
        return Err(Error::Format(format!("oracle curve header must be `T,phi_eq`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let parse = |i: usize| {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad number `{}` in oracle curve: {e}", &rec[i])))
            };
            Ok((parse(0)?, parse(1)?))
        })
        .collect()
}
