//! Vectors on the sphere of radius √N, stored patterns, and alignments.
//!
//! The alignment product `φ^μ = x·ξ^μ / N` over all stored patterns is the
//! dominant cost of every Monte Carlo step (O(N·M)). Patterns are stored
//! pattern-contiguous so the product streams memory linearly, and several
//! states can be evaluated against one [`PatternSet`] in a single pass
//! ([`batch_alignments_into`]), which turns the matrix-vector product into a
//! matrix-matrix product.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};

/// Relative tolerance on `‖x‖² = N`.
pub const NORM_TOL: f64 = 1e-10;

const DEGENERATE_NORM: f64 = 1e-12;

/// A state on the sphere `‖x‖² = N`, `N ≥ 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereState {
    components: Vec<f64>,
}

impl SphereState {
    /// Projects `v` onto the sphere; see [`renormalize`].
    pub fn from_vec(v: Vec<f64>) -> Result<Self> {
        renormalize(v)
    }

    /// Wraps `v` without rescaling; fails unless it already lies on the sphere.
    pub fn try_new(v: Vec<f64>) -> Result<Self> {
        check_on_sphere(&v)?;
        Ok(Self { components: v })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.components
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.components
    }

    /// `x·y / N`.
    pub fn alignment_with(&self, other: &[f64]) -> f64 {
        assert_eq!(other.len(), self.dim(), "dimension mismatch");
        kernel::dot(&self.components, other) / self.dim() as f64
    }
}

fn check_on_sphere(v: &[f64]) -> Result<()> {
    let n = v.len();
    if n < 2 {
        return Err(invalid(format!("sphere dimension must be >= 2, got {n}")));
    }
    let norm2 = kernel::dot(v, v);
    if !((norm2 - n as f64).abs() <= NORM_TOL * n as f64) {
        return Err(invalid(format!(
            "vector is not on the radius-sqrt(N) sphere: |x|^2 = {norm2}, N = {n}"
        )));
    }
    Ok(())
}

/// Rescales `v` to norm √N: `x ← √N v/‖v‖`.
///
/// A zero (or non-finite) vector is rejected; the sampler treats that as a
/// degenerate proposal and draws again.
pub fn renormalize(mut v: Vec<f64>) -> Result<SphereState> {
    let n = v.len();
    if n < 2 {
        return Err(invalid(format!("sphere dimension must be >= 2, got {n}")));
    }
    if !renormalize_in_place(&mut v) {
        return Err(invalid("cannot renormalize a zero or non-finite vector"));
    }
    Ok(SphereState { components: v })
}

/// In-place variant used on the hot path. Returns `false` if `v` is degenerate.
pub(crate) fn renormalize_in_place(v: &mut [f64]) -> bool {
    let norm2 = kernel::dot(v, v);
    if !(norm2.is_finite() && norm2 > 0.0) {
        return false;
    }
    let scale = (v.len() as f64 / norm2).sqrt();
    v.iter_mut().for_each(|x| *x *= scale);
    true
}

/// Stored patterns, each on the radius-√N sphere.
///
/// Storage is pattern-contiguous: pattern `μ` occupies
/// `data[μ·N .. (μ+1)·N]`. A second, panel-interleaved copy (blocks of
/// [`kernel::PANEL`] patterns, component-major within a block) feeds the
/// alignment product.
#[derive(Clone, Debug)]
pub struct PatternSet {
    dim: usize,
    count: usize,
    data: Vec<f64>,
    panels: Vec<f64>,
}

impl PartialEq for PatternSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.count == other.count && self.data == other.data
    }
}

impl PatternSet {
    fn from_parts(dim: usize, count: usize, data: Vec<f64>) -> Self {
        let panels = kernel::pack_panels(&data, dim, count);
        Self { dim, count, data, panels }
    }

    /// Draws `m` independent patterns uniformly on the sphere (standard
    /// normal vectors rescaled to norm √N).
    pub fn sample<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("pattern dimension must be >= 2, got {n}")));
        }
        if m < 1 {
            return Err(invalid("pattern count must be >= 1"));
        }
        let mut data = vec![0.0; n * m];
        for pattern in data.chunks_exact_mut(n) {
            loop {
                for x in pattern.iter_mut() {
                    *x = StandardNormal.sample(rng);
                }
                if renormalize_in_place(pattern) {
                    break;
                }
            }
        }
        Ok(Self::from_parts(n, m, data))
    }

    /// Builds a set from explicit patterns; each must already be on the sphere.
    pub fn from_patterns(patterns: &[SphereState]) -> Result<Self> {
        let first = patterns.first().ok_or_else(|| invalid("pattern set must be non-empty"))?;
        let dim = first.dim();
        let mut data = Vec::with_capacity(dim * patterns.len());
        for p in patterns {
            if p.dim() != dim {
                return Err(invalid("patterns have mixed dimensions"));
            }
            data.extend_from_slice(p.as_slice());
        }
        Ok(Self::from_parts(dim, patterns.len(), data))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn pattern(&self, mu: usize) -> &[f64] {
        &self.data[mu * self.dim..(mu + 1) * self.dim]
    }

    /// The retrieval target (pattern index 0).
    pub fn target(&self) -> &[f64] {
        self.pattern(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Bytes held by both copies of the pattern matrix.
    pub fn footprint(&self) -> usize {
        (self.data.len() + self.panels.len()) * std::mem::size_of::<f64>()
    }

    /// Writes the binary dump: magic, version, N, M (u64 little-endian)
    /// followed by the N×M matrix in row-major order as f64 little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        for h in [DUMP_VERSION, self.dim as u64, self.count as u64] {
            w.write_all(&h.to_le_bytes())?;
        }
        let mut row = Vec::with_capacity(self.count * 8);
        for i in 0..self.dim {
            row.clear();
            for mu in 0..self.count {
                row.extend_from_slice(&self.data[mu * self.dim + i].to_le_bytes());
            }
            w.write_all(&row)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Format("not a pattern-set dump (bad magic)".into()));
        }
        let mut header = [0u64; 3];
        for h in header.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *h = u64::from_le_bytes(b);
        }
        let [version, n, m] = header;
        if version != DUMP_VERSION {
            return Err(Error::Format(format!("unsupported pattern-set dump version {version}")));
        }
        let (n, m) = (n as usize, m as usize);
        if n < 2 || m < 1 {
            return Err(Error::Format(format!("invalid dump dimensions N = {n}, M = {m}")));
        }
        let mut data = vec![0.0; n * m];
        let mut b = [0u8; 8];
        for i in 0..n {
            for mu in 0..m {
                r.read_exact(&mut b)?;
                data[mu * n + i] = f64::from_le_bytes(b);
            }
        }
        let set = Self::from_parts(n, m, data);
        for p in set.iter() {
            check_on_sphere(p).map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(set)
    }
}

const DUMP_MAGIC: &[u8; 8] = b"DAMPATS\0";
const DUMP_VERSION: u64 = 1;

/// Samples a pattern set from a ChaCha8 generator seeded with `seed`.
pub fn sample_patterns(n: usize, m: usize, seed: u64) -> Result<PatternSet> {
    PatternSet::sample(n, m, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// A random unit vector orthogonal to `reference`.
///
/// Draws an isotropic Gaussian vector, removes its component along
/// `reference` (twice, to mop up cancellation error) and normalizes.
pub fn random_orthogonal_unit<R: Rng + ?Sized>(reference: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let n = reference.len();
    if n < 2 {
        return Err(invalid(format!("dimension must be >= 2, got {n}")));
    }
    let ref_norm2 = kernel::dot(reference, reference);
    if !(ref_norm2 > 0.0 && ref_norm2.is_finite()) {
        return Err(invalid("reference vector must be non-zero"));
    }
    let mut u = vec![0.0; n];
    loop {
        for x in u.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        for _ in 0..2 {
            let c = kernel::dot(&u, reference) / ref_norm2;
            u.iter_mut().zip(reference).for_each(|(x, r)| *x -= c * r);
        }
        let norm = kernel::dot(&u, &u).sqrt();
        if norm > DEGENERATE_NORM {
            u.iter_mut().for_each(|x| *x /= norm);
            return Ok(u);
        }
    }
}

/// A state at alignment `phi_init` with `pattern`:
/// `x = φ ξ + √(1−φ²) √N û⊥` with `û⊥` a random unit vector orthogonal to `ξ`.
pub fn init_near_pattern<R: Rng + ?Sized>(pattern: &[f64], phi_init: f64, rng: &mut R) -> Result<SphereState> {
    if !(phi_init > 0.0 && phi_init <= 1.0) {
        return Err(invalid(format!("phi_init must lie in (0, 1], got {phi_init}")));
    }
    check_on_sphere(pattern)?;
    let n = pattern.len() as f64;
    let u = random_orthogonal_unit(pattern, rng)?;
    let perp = (1.0 - phi_init * phi_init).sqrt() * n.sqrt();
    let components = pattern.iter().zip(&u).map(|(p, u)| phi_init * p + perp * u).collect();
    Ok(SphereState { components })
}

/// Alignments `φ^μ` of one state with every stored pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentVector(Vec<f64>);

impl AlignmentVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Alignment with the retrieval target.
    pub fn target(&self) -> f64 {
        self.0[0]
    }
}

impl std::ops::Deref for AlignmentVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn alignments(state: &SphereState, patterns: &PatternSet) -> Result<AlignmentVector> {
    let mut out = vec![0.0; patterns.len()];
    alignments_into(state.as_slice(), patterns, &mut out)?;
    Ok(AlignmentVector(out))
}

/// Hot-path form of [`alignments`]; `out.len()` must equal `M`.
pub fn alignments_into(state: &[f64], patterns: &PatternSet, out: &mut [f64]) -> Result<()> {
    batch_alignments_into(state, 1, patterns, out)
}

/// Alignments of `k` states, packed contiguously in `states` (`k·N` values),
/// against one pattern set. `out[s·M + μ]` receives `φ^μ` of state `s`.
///
/// Each entry is computed with exactly the arithmetic of the single-state
/// product, so batched and sequential evaluation agree bit for bit.
pub fn batch_alignments_into(states: &[f64], k: usize, patterns: &PatternSet, out: &mut [f64]) -> Result<()> {
    let n = patterns.dim();
    if states.len() != k * n {
        return Err(invalid(format!(
            "state buffer holds {} values, expected {k} states of dimension {n}",
            states.len()
        )));
    }
    if out.len() != k * patterns.len() {
        return Err(invalid("alignment buffer has the wrong length"));
    }
    kernel::alignments(states, k, n, &patterns.panels, patterns.len(), out);
    Ok(())
}

pub fn batch_alignments(states: &[SphereState], patterns: &PatternSet) -> Result<Vec<AlignmentVector>> {
    let n = patterns.dim();
    if let Some(bad) = states.iter().find(|s| s.dim() != n) {
        return Err(invalid(format!("state of dimension {} against patterns of dimension {n}", bad.dim())));
    }
    let packed: Vec<f64> = states.iter().flat_map(|s| s.as_slice().iter().copied()).collect();
    let m = patterns.len();
    let mut out = vec![0.0; states.len() * m];
    batch_alignments_into(&packed, states.len(), patterns, &mut out)?;
    Ok(out.chunks_exact(m).map(|c| AlignmentVector(c.to_vec())).collect())
}

pub(crate) mod kernel {
    const LANES: usize = 8;

    /// Dot product with a fixed 8-lane accumulation order. The order is part
    /// of the contract: vectorized and scalar builds produce identical bits.
    #[inline(always)]
    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        let mut acc = [0.0f64; LANES];
        let ca = a.chunks_exact(LANES);
        let cb = b.chunks_exact(LANES);
        let (ra, rb) = (ca.remainder(), cb.remainder());
        for (x, y) in ca.zip(cb) {
            for i in 0..LANES {
                acc[i] += x[i] * y[i];
            }
        }
        let mut tail = 0.0;
        for (x, y) in ra.iter().zip(rb) {
            tail += x * y;
        }
        ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
    }

    /// Patterns per interleaved panel.
    pub const PANEL: usize = 8;
    /// States sharing one pass over a panel.
    const GROUP: usize = 4;

    /// Repacks pattern-contiguous data into panels: element `i` of pattern
    /// `PANEL·p + j` goes to `panels[(p·N + i)·PANEL + j]`; the last panel is
    /// zero-padded.
    pub fn pack_panels(data: &[f64], n: usize, m: usize) -> Vec<f64> {
        let count = m.div_ceil(PANEL);
        let mut panels = vec![0.0; count * n * PANEL];
        for (mu, pattern) in data.chunks_exact(n).enumerate() {
            let (p, j) = (mu / PANEL, mu % PANEL);
            for (i, &x) in pattern.iter().enumerate() {
                panels[(p * n + i) * PANEL + j] = x;
            }
        }
        panels
    }

    /// `C` states against one panel. Every output is the plain sequential
    /// sum `Σ_i x_i ξ_i` (no fused multiply-add), so the result does not
    /// depend on `C`, on the batch it came from, or on the instruction set.
    #[inline(always)]
    fn panel_block<const C: usize>(states: &[f64], n: usize, panel: &[f64], acc: &mut [[f64; PANEL]; GROUP]) {
        for a in acc.iter_mut().take(C) {
            *a = [0.0; PANEL];
        }
        for (i, v) in panel.chunks_exact(PANEL).enumerate() {
            for c in 0..C {
                let x = states[c * n + i];
                for j in 0..PANEL {
                    acc[c][j] += x * v[j];
                }
            }
        }
    }

    #[inline(always)]
    fn alignments_generic(states: &[f64], k: usize, n: usize, panels: &[f64], m: usize, out: &mut [f64]) {
        let inv_n = 1.0 / n as f64;
        let mut acc = [[0.0; PANEL]; GROUP];
        for (p, panel) in panels.chunks_exact(n * PANEL).enumerate() {
            let base = p * PANEL;
            let width = PANEL.min(m - base);
            let mut s0 = 0;
            while s0 < k {
                let c = GROUP.min(k - s0);
                let block = &states[s0 * n..(s0 + c) * n];
                match c {
                    4 => panel_block::<4>(block, n, panel, &mut acc),
                    3 => panel_block::<3>(block, n, panel, &mut acc),
                    2 => panel_block::<2>(block, n, panel, &mut acc),
                    _ => panel_block::<1>(block, n, panel, &mut acc),
                }
                for (dc, a) in acc.iter().take(c).enumerate() {
                    let row = &mut out[(s0 + dc) * m + base..(s0 + dc) * m + base + width];
                    for (o, v) in row.iter_mut().zip(a) {
                        *o = v * inv_n;
                    }
                }
                s0 += c;
            }
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn alignments_avx2(states: &[f64], k: usize, n: usize, patterns: &[f64], m: usize, out: &mut [f64]) {
        alignments_generic(states, k, n, patterns, m, out)
    }

    pub fn alignments(states: &[f64], k: usize, n: usize, patterns: &[f64], m: usize, out: &mut [f64]) {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports AVX2, checked above.
                unsafe { alignments_avx2(states, k, n, patterns, m, out) };
                return;
            }
        }
        alignments_generic(states, k, n, patterns, m, out)
    }

    #[cfg(test)]
    pub fn alignments_portable(states: &[f64], k: usize, n: usize, patterns: &[f64], m: usize, out: &mut [f64]) {
        alignments_generic(states, k, n, patterns, m, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn norm2(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum()
    }

    #[test]
    fn sampled_columns_lie_on_sphere() {
        let p = sample_patterns(2, 1, 3).unwrap();
        assert!((norm2(p.pattern(0)) - 2.0).abs() < 2.0 * NORM_TOL);
        let p = sample_patterns(37, 50, 4).unwrap();
        for col in p.iter() {
            assert!((norm2(col) - 37.0).abs() < 37.0 * NORM_TOL);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_patterns(100, 5, 99).unwrap();
        let b = sample_patterns(100, 5, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_patterns(100, 5, 100).unwrap());
    }

    #[test]
    fn pairwise_overlaps_have_variance_one_over_n() {
        let (n, m) = (500, 1000);
        let p = sample_patterns(n, m, 12).unwrap();
        let (mut sum, mut sum2, mut count) = (0.0, 0.0, 0.0);
        for a in 0..m {
            for b in a + 1..m {
                let phi = kernel::dot(p.pattern(a), p.pattern(b)) / n as f64;
                sum += phi;
                sum2 += phi * phi;
                count += 1.0;
            }
        }
        let mean = sum / count;
        let var = sum2 / count - mean * mean;
        assert!(mean.abs() < 0.01, "mean overlap {mean}");
        assert!((var * n as f64 - 1.0).abs() < 0.2, "variance {var}");
    }

    #[test]
    fn sampling_rejects_bad_shapes() {
        assert!(matches!(sample_patterns(1, 3, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(sample_patterns(3, 0, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn orthogonal_unit_in_two_dimensions() {
        let r = [2f64.sqrt(), 0.0];
        let mut g = rng(1);
        for _ in 0..20 {
            let u = random_orthogonal_unit(&r, &mut g).unwrap();
            assert_eq!(u[0].abs(), 0.0);
            assert!((u[1].abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn orthogonal_unit_postconditions() {
        let mut g = rng(2);
        for n in [2, 3, 10, 257, 1000] {
            let p = PatternSet::sample(n, 1, &mut g).unwrap();
            let u = random_orthogonal_unit(p.target(), &mut g).unwrap();
            assert!((norm2(&u).sqrt() - 1.0).abs() < 1e-10);
            assert!(kernel::dot(&u, p.target()).abs() < 1e-8 * (n as f64).sqrt());
        }
    }

    #[test]
    fn init_at_one_is_the_pattern() {
        let mut g = rng(3);
        let p = PatternSet::sample(20, 1, &mut g).unwrap();
        let x = init_near_pattern(p.target(), 1.0, &mut g).unwrap();
        assert_eq!(x.as_slice(), p.target());
    }

    #[test]
    fn init_hits_requested_alignment() {
        let mut g = rng(4);
        let p = PatternSet::sample(64, 1, &mut g).unwrap();
        for phi in [0.9, 0.75, 0.3] {
            let x = init_near_pattern(p.target(), phi, &mut g).unwrap();
            assert!((x.alignment_with(p.target()) - phi).abs() < 1e-8);
            assert!((norm2(x.as_slice()) - 64.0).abs() < 64.0 * NORM_TOL);
        }
    }

    #[test]
    fn init_rejects_out_of_range_alignment() {
        let mut g = rng(5);
        let p = PatternSet::sample(8, 1, &mut g).unwrap();
        for phi in [0.0, -0.5, 1.0 + 1e-9, f64::NAN] {
            assert!(matches!(init_near_pattern(p.target(), phi, &mut g), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn alignment_extremes() {
        let mut g = rng(6);
        let p = PatternSet::sample(50, 3, &mut g).unwrap();
        let x = SphereState::try_new(p.target().to_vec()).unwrap();
        assert!((alignments(&x, &p).unwrap()[0] - 1.0).abs() < 1e-14);
        let neg = SphereState::try_new(p.target().iter().map(|v| -v).collect()).unwrap();
        assert!((alignments(&neg, &p).unwrap()[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn alignments_concentrate_for_independent_vectors() {
        let mut g = rng(7);
        let n = 4000;
        let p = PatternSet::sample(n, 200, &mut g).unwrap();
        let x = PatternSet::sample(n, 1, &mut g).unwrap();
        let x = SphereState::try_new(x.target().to_vec()).unwrap();
        let a = alignments(&x, &p).unwrap();
        // |φ| ~ N(0, 1/N); 5/√N bounds 200 draws comfortably.
        assert!(a.iter().all(|v| v.abs() < 5.0 / (n as f64).sqrt()));
    }

    #[test]
    fn alignments_reject_dimension_mismatch() {
        let p = sample_patterns(10, 4, 1).unwrap();
        let x = renormalize(vec![1.0; 9]).unwrap();
        assert!(matches!(alignments(&x, &p), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn renormalize_examples() {
        let x = renormalize(vec![3.0, 4.0]).unwrap();
        let r2 = 2f64.sqrt();
        assert!((x.as_slice()[0] - 3.0 * r2 / 5.0).abs() < 1e-15);
        assert!((x.as_slice()[1] - 4.0 * r2 / 5.0).abs() < 1e-15);
        assert!(matches!(renormalize(vec![0.0; 4]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn renormalize_is_scale_invariant() {
        let p = sample_patterns(31, 1, 8).unwrap();
        let doubled: Vec<f64> = p.target().iter().map(|v| 2.0 * v).collect();
        let x = renormalize(doubled).unwrap();
        for (a, b) in x.as_slice().iter().zip(p.target()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn avx2_and_portable_paths_agree_bitwise() {
        let p = sample_patterns(27, 301, 9).unwrap();
        let states = sample_patterns(27, 7, 10).unwrap();
        let mut fast = vec![0.0; 7 * 301];
        let mut slow = vec![0.0; 7 * 301];
        kernel::alignments(&states.data, 7, 27, &p.panels, 301, &mut fast);
        kernel::alignments_portable(&states.data, 7, 27, &p.panels, 301, &mut slow);
        assert_eq!(fast, slow);
    }

    #[test]
    fn product_is_the_sequential_sum() {
        let p = sample_patterns(13, 21, 19).unwrap();
        let states = sample_patterns(13, 6, 20).unwrap();
        let mut got = vec![0.0; 6 * 21];
        batch_alignments_into(&states.data, 6, &p, &mut got).unwrap();
        for s in 0..6 {
            for mu in 0..21 {
                let mut sum = 0.0;
                for i in 0..13 {
                    sum += states.pattern(s)[i] * p.pattern(mu)[i];
                }
                assert_eq!(got[s * 21 + mu], sum * (1.0 / 13.0));
            }
        }
    }

    #[test]
    fn binary_dump_round_trip() {
        let p = sample_patterns(5, 7, 11).unwrap();
        let mut buf = Vec::new();
        p.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 5 * 7 * 8);
        assert_eq!(&buf[..8], DUMP_MAGIC);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 5);
        // Row-major N×M: the second payload value is coordinate 0 of pattern 1.
        assert_eq!(f64::from_le_bytes(buf[40..48].try_into().unwrap()), p.pattern(1)[0]);
        assert_eq!(PatternSet::read_binary(&buf[..]).unwrap(), p);
        buf[0] = b'X';
        assert!(matches!(PatternSet::read_binary(&buf[..]), Err(Error::Format(_))));
    }

    fn householder(v: &[f64], x: &[f64]) -> Vec<f64> {
        let c = 2.0 * kernel::dot(v, x) / kernel::dot(v, v);
        x.iter().zip(v).map(|(a, b)| a - c * b).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn renormalize_is_idempotent(v in prop::collection::vec(-10.0f64..10.0, 2..64)) {
            prop_assume!(norm2(&v) > 1e-6);
            let once = renormalize(v).unwrap();
            let twice = renormalize(once.as_slice().to_vec()).unwrap();
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                prop_assert!((a - b).abs() <= 2.0 * f64::EPSILON * a.abs().max(1.0));
            }
        }

        #[test]
        fn init_then_measure_recovers_phi(n in 2usize..400, phi in 0.01f64..=1.0, seed in any::<u64>()) {
            let mut g = rng(seed);
            let p = PatternSet::sample(n, 1, &mut g).unwrap();
            let x = init_near_pattern(p.target(), phi, &mut g).unwrap();
            prop_assert!((x.alignment_with(p.target()) - phi).abs() < 1e-8);
            prop_assert!((norm2(x.as_slice()) - n as f64).abs() < n as f64 * NORM_TOL);
        }

        #[test]
        fn alignments_are_rotation_invariant(n in 2usize..80, seed in any::<u64>()) {
            let mut g = rng(seed);
            let p = PatternSet::sample(n, 6, &mut g).unwrap();
            let x = PatternSet::sample(n, 1, &mut g).unwrap();
            let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut g)).collect();
            let rotated: Vec<SphereState> = p.iter().map(|c| SphereState::try_new(householder(&v, c)).unwrap()).collect();
            let rp = PatternSet::from_patterns(&rotated).unwrap();
            let rx = SphereState::try_new(householder(&v, x.target())).unwrap();
            let x = SphereState::try_new(x.target().to_vec()).unwrap();
            let before = alignments(&x, &p).unwrap();
            let after = alignments(&rx, &rp).unwrap();
            for (a, b) in before.iter().zip(after.iter()) {
                prop_assert!((a - b).abs() < 1e-8);
            }
        }

        #[test]
        fn batched_equals_sequential(n in 2usize..70, m in 1usize..40, k in 1usize..6, seed in any::<u64>()) {
            let mut g = rng(seed);
            let p = PatternSet::sample(n, m, &mut g).unwrap();
            let s = PatternSet::sample(n, k, &mut g).unwrap();
            let states: Vec<SphereState> = s.iter().map(|c| SphereState::try_new(c.to_vec()).unwrap()).collect();
            let batched = batch_alignments(&states, &p).unwrap();
            for (st, b) in states.iter().zip(&batched) {
                let single = alignments(st, &p).unwrap();
                for (x, y) in single.iter().zip(b.iter()) {
                    prop_assert!((x - y).abs() <= 1e-12 * n as f64);
                }
            }
        }
    }
}
