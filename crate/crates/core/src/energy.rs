//! The log-sum-exp (LSE) and log-sum-ReLU (LSR) Hamiltonians.
//!
//! Both are evaluated from alignment vectors through `d² = 2N(1 − φ)`:
//!
//! ```text
//! H_LSE = −β⁻¹ ln Σ_μ exp[−β N (1 − φ^μ)]
//! H_LSR = −β⁻¹ ln Σ_μ max[ε, 1 − b (1 − φ^μ)],   b = N β
//! ```
//!
//! An LSR state is *in support* when at least one term exceeds the floor ε.
//! The energy value keeps the floored terms; the sampler enforces the hard
//! wall through [`EnergyValue::in_support`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Lse,
    Lsr,
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelKind::Lse => "lse",
            KernelKind::Lsr => "lsr",
        })
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lse" => Ok(KernelKind::Lse),
            "lsr" => Ok(KernelKind::Lsr),
            other => Err(invalid(format!("unknown kernel `{other}` (expected lse or lsr)"))),
        }
    }
}

/// Kernel family plus sharpness. `beta_net` is the inverse squared kernel
/// width; the LSR support is governed by the rescaled sharpness
/// `b = N·beta_net`, which depends on the dimension it is evaluated at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    kind: KernelKind,
    beta_net: f64,
    epsilon: f64,
}

impl KernelSpec {
    pub const DEFAULT_EPSILON: f64 = 1e-12;

    pub fn new(kind: KernelKind, beta_net: f64, epsilon: f64) -> Result<Self> {
        if !(beta_net > 0.0 && beta_net.is_finite()) {
            return Err(invalid(format!("beta_net must be positive and finite, got {beta_net}")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        Ok(Self { kind, beta_net, epsilon })
    }

    pub fn lse(beta_net: f64) -> Result<Self> {
        Self::new(KernelKind::Lse, beta_net, Self::DEFAULT_EPSILON)
    }

    pub fn lsr(beta_net: f64) -> Result<Self> {
        Self::new(KernelKind::Lsr, beta_net, Self::DEFAULT_EPSILON)
    }

    /// LSR kernel with rescaled sharpness `b` at dimension `n` (β = b/N).
    pub fn lsr_with_sharpness(b: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("dimension must be positive"));
        }
        Self::lsr(b / n as f64)
    }

    pub fn with_epsilon(self, epsilon: f64) -> Result<Self> {
        Self::new(self.kind, self.beta_net, epsilon)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn beta_net(&self) -> f64 {
        self.beta_net
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `b = N·β_net`.
    pub fn sharpness(&self, n: usize) -> f64 {
        n as f64 * self.beta_net
    }

    /// `φ_c = 1 − 1/b`, the alignment a pattern needs to enter the LSR support.
    pub fn support_threshold(&self, n: usize) -> f64 {
        1.0 - 1.0 / self.sharpness(n)
    }

    /// LSR kernels with `b ≤ 1` have no nontrivial retrieval basin. This is a
    /// warning, not an error: the simulation is still well defined.
    pub fn basin_warning(&self, n: usize) -> Option<String> {
        let b = self.sharpness(n);
        (self.kind == KernelKind::Lsr && b <= 1.0).then(|| {
            format!("b = N*beta_net = {b} <= 1 at N = {n}: no nontrivial retrieval basin")
        })
    }

    /// Energy of a state with alignments `phi` in dimension `n`.
    pub fn energy(&self, phi: &[f64], n: usize) -> EnergyValue {
        match self.kind {
            KernelKind::Lse => lse_unchecked(phi, n, self.beta_net),
            KernelKind::Lsr => lsr_unchecked(phi, n, self.beta_net, self.epsilon),
        }
    }
}

/// A Hamiltonian value. For LSR states outside the support `value` is the
/// floored energy `−β⁻¹ ln(M ε)`; the idealized energy is `+∞`
/// ([`EnergyValue::effective`]).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyValue {
    pub value: f64,
    pub in_support: bool,
}

impl EnergyValue {
    /// The energy seen by the Metropolis rule: `+∞` outside the support.
    pub fn effective(&self) -> f64 {
        if self.in_support {
            self.value
        } else {
            f64::INFINITY
        }
    }
}

/// `ln Σ exp(t)`, shifted by the maximum so it never overflows.
pub fn log_sum_exp(terms: &[f64]) -> Result<f64> {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if terms.is_empty() {
        return Err(invalid("log_sum_exp of an empty slice"));
    }
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return Ok(max);
    }
    let sum: f64 = terms.iter().map(|&t| (t - max).exp()).sum();
    Ok(max + sum.ln())
}

fn check_phi(phi: &[f64], n: usize) -> Result<()> {
    if phi.is_empty() {
        return Err(invalid("alignment vector must be non-empty"));
    }
    if n < 2 {
        return Err(invalid(format!("dimension must be >= 2, got {n}")));
    }
    Ok(())
}

pub fn lse_energy(phi: &[f64], n: usize, spec: &KernelSpec) -> Result<EnergyValue> {
    if spec.kind != KernelKind::Lse {
        return Err(invalid("lse_energy called with an LSR kernel"));
    }
    check_phi(phi, n)?;
    Ok(lse_unchecked(phi, n, spec.beta_net))
}

pub fn lsr_energy(phi: &[f64], n: usize, spec: &KernelSpec) -> Result<EnergyValue> {
    if spec.kind != KernelKind::Lsr {
        return Err(invalid("lsr_energy called with an LSE kernel"));
    }
    check_phi(phi, n)?;
    Ok(lsr_unchecked(phi, n, spec.beta_net, spec.epsilon))
}

// With t_μ = −βN(1 − φ^μ) the shifted exponents are βN(φ^μ − φ_max), so the
// log-sum-exp is formed directly from alignments without a terms buffer.
fn lse_unchecked(phi: &[f64], n: usize, beta: f64) -> EnergyValue {
    let scale = beta * n as f64;
    let phi_max = max_of(phi);
    let sum = fastexp::shifted_exp_sum(phi, scale, phi_max);
    EnergyValue {
        value: n as f64 * (1.0 - phi_max) - sum.ln() / beta,
        in_support: true,
    }
}

/// Largest entry, four lanes at a time (inputs are never NaN).
fn max_of(phi: &[f64]) -> f64 {
    let mut m = [f64::NEG_INFINITY; 4];
    let chunks = phi.chunks_exact(4);
    let tail = chunks.remainder();
    for c in chunks {
        for i in 0..4 {
            m[i] = if c[i] > m[i] { c[i] } else { m[i] };
        }
    }
    tail.iter().chain(&m[1..]).fold(m[0], |a, &b| if b > a { b } else { a })
}

/// `Σ exp(s·(φ − φ_max))` through a polynomial exponential built from IEEE
/// add, multiply and integer bit operations only, so the AVX2 and portable
/// paths agree bit for bit.
pub(crate) mod fastexp {
    const LOG2_E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 0.693_147_180_369_123_816_49;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    const SHIFT: f64 = 6_755_399_441_055_744.0; // 1.5·2^52
    /// Arguments below this are flushed to zero: e^−708 < 10⁻³⁰⁷.
    pub const FLOOR: f64 = -708.0;

    /// Taylor coefficients `1/i!` of `e^r` up to `r¹³`.
    const A: [f64; 14] = [
        1.0,
        1.0,
        0.5,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 120.0,
        1.0 / 720.0,
        1.0 / 5_040.0,
        1.0 / 40_320.0,
        1.0 / 362_880.0,
        1.0 / 3_628_800.0,
        1.0 / 39_916_800.0,
        1.0 / 479_001_600.0,
        1.0 / 6_227_020_800.0,
    ];

    /// Estrin evaluation of the series on `|r| ≤ ln2/2`.
    #[inline(always)]
    fn series(r: f64) -> f64 {
        let r2 = r * r;
        let r4 = r2 * r2;
        let r8 = r4 * r4;
        let q: [f64; 7] = std::array::from_fn(|i| A[2 * i] + A[2 * i + 1] * r);
        let s0 = q[0] + q[1] * r2;
        let s1 = q[2] + q[3] * r2;
        let s2 = q[4] + q[5] * r2;
        let u0 = s0 + s1 * r4;
        let u1 = s2 + q[6] * r4;
        u0 + u1 * r8
    }

    /// `e^x` for `x ≤ 0`, relative error below 10⁻¹⁵; zero below [`FLOOR`].
    #[inline(always)]
    pub fn exp_nonpositive(x: f64) -> f64 {
        let xc = if x > FLOOR { x } else { FLOOR };
        let t = xc * LOG2_E + SHIFT;
        let k = t - SHIFT;
        let r = (xc - k * LN2_HI) - k * LN2_LO;
        let p = series(r);
        // The low mantissa bits of t hold k; shifting drops everything else.
        let two_k = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
        if x < FLOOR {
            0.0
        } else {
            p * two_k
        }
    }

    fn sum_portable(phi: &[f64], scale: f64, phi_max: f64) -> f64 {
        let mut acc = [0.0f64; 4];
        let chunks = phi.chunks_exact(4);
        let tail = chunks.remainder();
        for c in chunks {
            for i in 0..4 {
                acc[i] += exp_nonpositive(scale * (c[i] - phi_max));
            }
        }
        let mut sum = (acc[0] + acc[2]) + (acc[1] + acc[3]);
        for &p in tail {
            sum += exp_nonpositive(scale * (p - phi_max));
        }
        sum
    }

    /// The same operations as [`sum_portable`], four lanes at a time.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn sum_avx2(phi: &[f64], scale: f64, phi_max: f64) -> f64 {
        use std::arch::x86_64::*;
        let (vs, vm) = (_mm256_set1_pd(scale), _mm256_set1_pd(phi_max));
        let (floor, log2e, shift) = (_mm256_set1_pd(FLOOR), _mm256_set1_pd(LOG2_E), _mm256_set1_pd(SHIFT));
        let (hi, lo) = (_mm256_set1_pd(LN2_HI), _mm256_set1_pd(LN2_LO));
        let bias = _mm256_set1_epi64x(1023);
        let mut acc = _mm256_setzero_pd();
        let chunks = phi.chunks_exact(4);
        let tail = chunks.remainder();
        for c in chunks {
            let x = _mm256_mul_pd(vs, _mm256_sub_pd(_mm256_loadu_pd(c.as_ptr()), vm));
            let keep = _mm256_cmp_pd::<_CMP_GT_OQ>(x, floor);
            let xc = _mm256_blendv_pd(floor, x, keep);
            let t = _mm256_add_pd(_mm256_mul_pd(xc, log2e), shift);
            let k = _mm256_sub_pd(t, shift);
            let r = _mm256_sub_pd(_mm256_sub_pd(xc, _mm256_mul_pd(k, hi)), _mm256_mul_pd(k, lo));
            let r2 = _mm256_mul_pd(r, r);
            let r4 = _mm256_mul_pd(r2, r2);
            let r8 = _mm256_mul_pd(r4, r4);
            let q: [__m256d; 7] =
                std::array::from_fn(|i| _mm256_add_pd(_mm256_set1_pd(A[2 * i]), _mm256_mul_pd(_mm256_set1_pd(A[2 * i + 1]), r)));
            let s0 = _mm256_add_pd(q[0], _mm256_mul_pd(q[1], r2));
            let s1 = _mm256_add_pd(q[2], _mm256_mul_pd(q[3], r2));
            let s2 = _mm256_add_pd(q[4], _mm256_mul_pd(q[5], r2));
            let u0 = _mm256_add_pd(s0, _mm256_mul_pd(s1, r4));
            let u1 = _mm256_add_pd(s2, _mm256_mul_pd(q[6], r4));
            let p = _mm256_add_pd(u0, _mm256_mul_pd(u1, r8));
            let two_k = _mm256_castsi256_pd(_mm256_slli_epi64::<52>(_mm256_add_epi64(_mm256_castpd_si256(t), bias)));
            let live = _mm256_cmp_pd::<_CMP_GE_OQ>(x, floor);
            acc = _mm256_add_pd(acc, _mm256_and_pd(_mm256_mul_pd(p, two_k), live));
        }
        let mut lanes = [0.0f64; 4];
        _mm256_storeu_pd(lanes.as_mut_ptr(), acc);
        let mut sum = (lanes[0] + lanes[2]) + (lanes[1] + lanes[3]);
        for &p in tail {
            sum += exp_nonpositive(scale * (p - phi_max));
        }
        sum
    }

    pub fn shifted_exp_sum(phi: &[f64], scale: f64, phi_max: f64) -> f64 {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports AVX2, checked above.
                return unsafe { sum_avx2(phi, scale, phi_max) };
            }
        }
        sum_portable(phi, scale, phi_max)
    }

    #[cfg(test)]
    pub fn shifted_exp_sum_portable(phi: &[f64], scale: f64, phi_max: f64) -> f64 {
        sum_portable(phi, scale, phi_max)
    }
}

fn lsr_unchecked(phi: &[f64], n: usize, beta: f64, epsilon: f64) -> EnergyValue {
    let b = beta * n as f64;
    let mut acc = [0.0f64; 4];
    let mut active = false;
    let chunks = phi.chunks_exact(4);
    let tail = chunks.remainder();
    for c in chunks {
        for i in 0..4 {
            let t = 1.0 - b * (1.0 - c[i]);
            active |= t > epsilon;
            acc[i] += t.max(epsilon);
        }
    }
    let mut sum = (acc[0] + acc[2]) + (acc[1] + acc[3]);
    for &p in tail {
        let t = 1.0 - b * (1.0 - p);
        active |= t > epsilon;
        sum += t.max(epsilon);
    }
    EnergyValue {
        value: -sum.ln() / beta,
        in_support: active,
    }
}

/// Per-coordinate energy `u(φ)` of an isolated pattern: `1 − φ` for LSE and
/// `−b⁻¹ ln[1 − b(1 − φ)]` for LSR, so that `N·u(φ)` is the single-pattern
/// Hamiltonian.
pub fn single_basin_energy_density(phi: f64, n: usize, spec: &KernelSpec) -> Result<f64> {
    if !(-1.0..=1.0).contains(&phi) {
        return Err(Error::Domain(format!("alignment {phi} outside [-1, 1]")));
    }
    match spec.kind {
        KernelKind::Lse => Ok(1.0 - phi),
        KernelKind::Lsr => {
            let b = spec.sharpness(n);
            let arg = 1.0 - b * (1.0 - phi);
            if arg <= 0.0 {
                return Err(Error::Domain(format!(
                    "alignment {phi} is at or below the LSR support threshold {}",
                    spec.support_threshold(n)
                )));
            }
            Ok(-arg.ln() / b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn fast_exponential_accuracy() {
        for i in 0..=200_000 {
            let x = -708.0 * i as f64 / 200_000.0;
            let (got, want) = (fastexp::exp_nonpositive(x), x.exp());
            assert!((got - want).abs() <= 1e-15 * want, "x = {x}: {got} vs {want}");
        }
        assert_eq!(fastexp::exp_nonpositive(0.0), 1.0);
        assert_eq!(fastexp::exp_nonpositive(-709.0), 0.0);
        assert_eq!(fastexp::exp_nonpositive(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn fast_exponential_sum_is_isa_independent() {
        let phi: Vec<f64> = (0..1003).map(|i| ((i * 7919) % 2001) as f64 / 1000.0 - 1.0).collect();
        for scale in [1.0, 33.0, 990.0] {
            let a = fastexp::shifted_exp_sum(&phi, scale, 1.0);
            let b = fastexp::shifted_exp_sum_portable(&phi, scale, 1.0);
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn log_sum_exp_examples() {
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - LN2).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[5.0]).unwrap(), 5.0);
        let v = log_sum_exp(&[-1e6, -1e6 - 700.0]).unwrap();
        assert!(v.is_finite());
        assert!((v + 1e6).abs() < 1e-9);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(log_sum_exp(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn log_sum_exp_handles_large_values() {
        let v = log_sum_exp(&[1000.0, 1001.0, 1002.0]).unwrap();
        let expected = 1002.0 + ((-2.0f64).exp() + (-1.0f64).exp() + 1.0).ln();
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn lse_examples() {
        let spec = KernelSpec::lse(1.0).unwrap();
        assert_eq!(lse_energy(&[1.0], 10, &spec).unwrap().value, 0.0);
        for phi in [-1.0, -0.3, 0.2, 0.999] {
            let h = lse_energy(&[phi], 17, &spec).unwrap().value;
            assert!((h - 17.0 * (1.0 - phi)).abs() < 1e-12);
        }
        for beta in [0.5, 1.0, 3.0] {
            let spec = KernelSpec::lse(beta).unwrap();
            let h = lse_energy(&[1.0, 1.0], 10, &spec).unwrap().value;
            assert!((h + LN2 / beta).abs() < 1e-14);
        }
    }

    #[test]
    fn lse_matches_generic_log_sum_exp() {
        let spec = KernelSpec::lse(0.7).unwrap();
        let n = 40;
        let phi = [0.9, 0.1, -0.2, 0.85, 0.3];
        let terms: Vec<f64> = phi.iter().map(|p| -0.7 * n as f64 * (1.0 - p)).collect();
        let via_terms = -log_sum_exp(&terms).unwrap() / 0.7;
        let direct = lse_energy(&phi, n, &spec).unwrap().value;
        assert!((via_terms - direct).abs() < 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn lsr_examples() {
        let b = 3.41;
        let n = 50;
        let spec = KernelSpec::lsr_with_sharpness(b, n).unwrap();
        let phi_c = spec.support_threshold(n);
        assert!((phi_c - (1.0 - 1.0 / b)).abs() < 1e-15);

        let e = lsr_energy(&[1.0], n, &spec).unwrap();
        assert!(e.value.abs() < 1e-15 && e.in_support);

        let e = lsr_energy(&[phi_c], n, &spec).unwrap();
        assert!(!e.in_support);
        let floor = -spec.epsilon().ln() / spec.beta_net();
        assert!((e.value - floor).abs() < 1e-9 * floor);
        assert_eq!(e.effective(), f64::INFINITY);

        let e = lsr_energy(&[1.0, phi_c], n, &spec).unwrap();
        assert!(e.in_support);
        assert!((e.value + (1.0 + spec.epsilon()).ln() / spec.beta_net()).abs() < 1e-20);
    }

    #[test]
    fn kernel_mismatch_and_empty_inputs_are_rejected() {
        let lse = KernelSpec::lse(1.0).unwrap();
        let lsr = KernelSpec::lsr(1.0).unwrap();
        assert!(lse_energy(&[0.5], 4, &lsr).is_err());
        assert!(lsr_energy(&[0.5], 4, &lse).is_err());
        assert!(lse_energy(&[], 4, &lse).is_err());
        assert!(KernelSpec::lse(0.0).is_err());
        assert!(KernelSpec::lse(1.0).unwrap().with_epsilon(1.0).is_err());
    }

    #[test]
    fn basin_warning_only_for_flat_lsr() {
        assert!(KernelSpec::lsr_with_sharpness(0.9, 30).unwrap().basin_warning(30).is_some());
        assert!(KernelSpec::lsr_with_sharpness(1.0, 30).unwrap().basin_warning(30).is_some());
        assert!(KernelSpec::lsr_with_sharpness(3.41, 30).unwrap().basin_warning(30).is_none());
        assert!(KernelSpec::lse(0.001).unwrap().basin_warning(30).is_none());
    }

    #[test]
    fn single_basin_density_examples() {
        let lse = KernelSpec::lse(1.0).unwrap();
        assert_eq!(single_basin_energy_density(1.0, 9, &lse).unwrap(), 0.0);
        assert_eq!(single_basin_energy_density(0.5, 9, &lse).unwrap(), 0.5);

        let n = 40;
        let lsr = KernelSpec::lsr_with_sharpness(3.41, n).unwrap();
        assert_eq!(single_basin_energy_density(1.0, n, &lsr).unwrap(), 0.0);
        let phi_c = lsr.support_threshold(n);
        let near = single_basin_energy_density(phi_c + 1e-12, n, &lsr).unwrap();
        assert!(near > 7.0);
        assert!(matches!(single_basin_energy_density(phi_c - 1e-9, n, &lsr), Err(Error::Domain(_))));
    }

    #[test]
    fn density_times_n_is_single_pattern_energy() {
        let n = 30;
        let lse = KernelSpec::lse(1.3).unwrap();
        let lsr = KernelSpec::lsr_with_sharpness(3.41, n).unwrap();
        for phi in [0.75, 0.8, 0.95, 1.0] {
            let u = single_basin_energy_density(phi, n, &lse).unwrap();
            assert!((n as f64 * u - lse.energy(&[phi], n).value).abs() < 1e-12);
            let u = single_basin_energy_density(phi, n, &lsr).unwrap();
            assert!((n as f64 * u - lsr.energy(&[phi], n).value).abs() < 1e-9);
        }
    }

    #[test]
    fn single_pattern_energies_decrease_with_alignment() {
        let n = 25;
        let lse = KernelSpec::lse(1.0).unwrap();
        let lsr = KernelSpec::lsr_with_sharpness(3.41, n).unwrap();
        let phi_c = lsr.support_threshold(n);
        let grid = |lo: f64| (1..=1000).map(move |i| lo + (1.0 - lo) * i as f64 / 1000.0);
        let mut prev = f64::INFINITY;
        for phi in grid(-1.0) {
            let h = lse.energy(&[phi], n).value;
            assert!(h < prev);
            prev = h;
        }
        let mut prev = f64::INFINITY;
        for phi in grid(phi_c) {
            let e = lsr.energy(&[phi], n);
            assert!(e.in_support && e.value < prev);
            prev = e.value;
        }
    }

    #[test]
    fn lsr_approaches_lse_near_the_pattern() {
        let n = 60;
        let b = 3.41;
        let lsr = KernelSpec::lsr_with_sharpness(b, n).unwrap();
        let lse = KernelSpec::lse(1.0).unwrap();
        for i in 0..50 {
            let gap = 0.1 / b * i as f64 / 50.0;
            let phi = 1.0 - gap;
            let d = (lsr.energy(&[phi], n).value - lse.energy(&[phi], n).value).abs();
            assert!(d <= n as f64 * b * gap * gap + 1e-12, "gap {gap}: {d}");
        }
    }

    #[test]
    fn extreme_alignments_stay_finite_at_scale() {
        let (n, m) = (990, 20_000);
        let lse = KernelSpec::lse(1.0).unwrap();
        let mut phi = vec![-1.0; m];
        let h = lse.energy(&phi, n).value;
        assert!(h.is_finite());
        assert!((h - (2.0 * n as f64 - (m as f64).ln())).abs() < 1e-9);
        phi[123] = 1.0;
        let h = lse.energy(&phi, n).value;
        assert!(h.is_finite() && h.abs() < 1e-12);
        let all_up = vec![1.0; m];
        assert!((lse.energy(&all_up, n).value + (m as f64).ln()).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn log_sum_exp_translation(terms in prop::collection::vec(-800.0f64..50.0, 1..50), c in -1e4f64..1e4) {
            let base = log_sum_exp(&terms).unwrap();
            let shifted: Vec<f64> = terms.iter().map(|t| t + c).collect();
            let moved = log_sum_exp(&shifted).unwrap();
            prop_assert!((moved - (base + c)).abs() <= 1e-12 * (base.abs() + c.abs()).max(1.0));
        }

        #[test]
        fn lse_sandwich(phi in prop::collection::vec(-1.0f64..=1.0, 1..200), n in 2usize..1000, beta in 0.05f64..4.0) {
            let spec = KernelSpec::lse(beta).unwrap();
            let h = spec.energy(&phi, n).value;
            let max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let top = n as f64 * (1.0 - max);
            let ln_m = (phi.len() as f64).ln();
            let slack = 1e-9 * top.max(1.0);
            prop_assert!(h <= top + slack);
            prop_assert!(h >= top - ln_m / beta - slack);
        }

        #[test]
        fn in_support_energies_are_finite(phi in prop::collection::vec(-1.0f64..=1.0, 1..100), n in 2usize..1000, b in 1.01f64..50.0) {
            let spec = KernelSpec::lsr_with_sharpness(b, n).unwrap();
            let e = spec.energy(&phi, n);
            prop_assert!(e.value.is_finite());
            let expected = phi.iter().any(|p| 1.0 - b * (1.0 - p) > spec.epsilon());
            prop_assert_eq!(e.in_support, expected);
        }
    }
}
