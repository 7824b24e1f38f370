//! Metropolis–Hastings dynamics on the sphere.
//!
//! One Monte Carlo step is one full-vector proposal
//!
//! ```text
//! x' = √N (x + σ η) / ‖x + σ η‖,   η ~ N(0, I_N),   σ = 2.4 T / √N
//! ```
//!
//! accepted with probability `min(1, e^{−ΔH/T})`. LSR candidates outside
//! the support of every pattern are rejected outright (hard wall). The
//! proposal density depends only on the angle between `x` and `x'`, so it
//! is symmetric with respect to the surface measure and the plain
//! Metropolis ratio is exact.
//!
//! Every step re-evaluates all alignments of the candidate state. Chains
//! that share a pattern set can be advanced in lockstep
//! ([`run_shared_batch`]) so the per-step products fuse into one
//! matrix-matrix product; each chain still consumes exactly the random
//! draws it would consume alone, so the results are bit-identical to
//! [`run_trial`].

use rand::{Rng, RngExt};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::energy::{EnergyValue, KernelSpec};
use crate::error::{invalid, Error, Result};
use crate::geometry::{self, init_near_pattern, PatternSet, SphereState};
use crate::rng::SeedStream;

/// Proposal gain: `σ = PROPOSAL_GAIN · T / √N`.
pub const PROPOSAL_GAIN: f64 = 2.4;

/// Redraws of `φ_init` allowed when an LSR start lands outside the support.
pub const INIT_RETRIES: usize = 100;

/// Step counts and initialization window shared by all trials of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialProtocol {
    pub n_eq: usize,
    pub n_samp: usize,
    /// `φ_init ~ U[lo, hi)`; a degenerate interval `lo == hi` pins `φ_init`.
    pub phi_init_range: (f64, f64),
}

impl Default for TrialProtocol {
    fn default() -> Self {
        Self {
            n_eq: 16_384,
            n_samp: 4_096,
            phi_init_range: (0.75, 1.0),
        }
    }
}

impl TrialProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.n_samp < 1 {
            return Err(invalid("n_samp must be >= 1"));
        }
        let (lo, hi) = self.phi_init_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(invalid(format!("phi_init range [{lo}, {hi}) must lie inside (0, 1]")));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.n_eq + self.n_samp
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialConfig {
    pub temperature: f64,
    pub protocol: TrialProtocol,
    pub stream: SeedStream,
}

impl TrialConfig {
    pub fn new(temperature: f64, protocol: TrialProtocol, stream: SeedStream) -> Self {
        Self { temperature, protocol, stream }
    }

    pub fn validate(&self) -> Result<()> {
        check_temperature(self.temperature)?;
        self.protocol.validate()
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("temperature must be positive and finite, got {t}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialResult {
    /// Time average of the target alignment over the sampling steps.
    pub mean_alignment: f64,
    /// Accepted proposals over all steps (equilibration included).
    pub acceptance_rate: f64,
    pub final_alignment: f64,
    /// Proposals rejected by the LSR hard wall.
    pub wall_rejections: u64,
    pub phi_init: f64,
    pub init_attempts: usize,
}

/// One row of a trial trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub phi1: f64,
    pub energy: f64,
    pub accepted: bool,
}

pub fn proposal_scale(temperature: f64, n: usize) -> f64 {
    PROPOSAL_GAIN * temperature / (n as f64).sqrt()
}

/// Draws a candidate `√N (x + σ η)/‖x + σ η‖` with `σ = 2.4 T/√N`.
pub fn propose<R: Rng + ?Sized>(state: &SphereState, temperature: f64, rng: &mut R) -> Result<SphereState> {
    check_temperature(temperature)?;
    let mut out = vec![0.0; state.dim()];
    propose_into(state.as_slice(), proposal_scale(temperature, state.dim()), rng, &mut out);
    Ok(SphereState::try_new(out).expect("renormalized proposal lies on the sphere"))
}

fn propose_into<R: Rng + ?Sized>(current: &[f64], sigma: f64, rng: &mut R, out: &mut [f64]) {
    loop {
        for (o, x) in out.iter_mut().zip(current) {
            let eta: f64 = StandardNormal.sample(rng);
            *o = x + sigma * eta;
        }
        if geometry::renormalize_in_place(out) {
            return;
        }
    }
}

/// Metropolis decision. Out-of-support candidates are rejected without a
/// draw; otherwise one uniform `u` is drawn and the move accepted iff
/// `u < e^{−ΔH/T}`. `ΔH = −∞` (leaving an out-of-support state) always
/// accepts.
pub fn accept<R: Rng + ?Sized>(delta_h: f64, temperature: f64, candidate_in_support: bool, rng: &mut R) -> bool {
    if !candidate_in_support {
        return false;
    }
    let u: f64 = rng.random();
    u < (-delta_h / temperature).exp()
}

/// A Metropolis chain targeting pattern 0 of a pattern set.
#[derive(Clone, Debug)]
pub struct MetropolisChain {
    rng: ChaCha8Rng,
    spec: KernelSpec,
    temperature: f64,
    sigma: f64,
    state: Vec<f64>,
    energy: EnergyValue,
    phi1: f64,
    steps: u64,
    accepted: u64,
    wall_rejections: u64,
    phi_init: f64,
    init_attempts: usize,
}

impl MetropolisChain {
    /// Initializes near the target with `φ_init ~ U(phi_init_range)`. LSR
    /// starts outside the support are redrawn up to [`INIT_RETRIES`] times.
    pub fn new(
        patterns: &PatternSet,
        spec: KernelSpec,
        temperature: f64,
        phi_init_range: (f64, f64),
        stream: SeedStream,
    ) -> Result<Self> {
        check_temperature(temperature)?;
        let n = patterns.dim();
        let (lo, hi) = phi_init_range;
        let mut rng = stream.rng();
        let mut align = vec![0.0; patterns.len()];
        let mut phi_init = lo;
        for attempt in 1..=INIT_RETRIES + 1 {
            phi_init = if lo < hi { rng.random_range(lo..hi) } else { lo };
            let x = init_near_pattern(patterns.target(), phi_init, &mut rng)?.into_vec();
            geometry::alignments_into(&x, patterns, &mut align)?;
            let energy = spec.energy(&align, n);
            if energy.in_support {
                return Ok(Self {
                    rng,
                    spec,
                    temperature,
                    sigma: proposal_scale(temperature, n),
                    state: x,
                    energy,
                    phi1: align[0],
                    steps: 0,
                    accepted: 0,
                    wall_rejections: 0,
                    phi_init,
                    init_attempts: attempt,
                });
            }
        }
        Err(Error::TrialSetup {
            b: spec.sharpness(n),
            phi_c: spec.support_threshold(n),
            phi_init,
            attempts: INIT_RETRIES + 1,
        })
    }

    /// One proposal + decision, evaluating alignments into `scratch`
    /// (resized to `M` as needed).
    pub fn step(&mut self, patterns: &PatternSet, proposal: &mut Vec<f64>, scratch: &mut Vec<f64>) -> bool {
        proposal.resize(self.state.len(), 0.0);
        scratch.resize(patterns.len(), 0.0);
        self.draw_proposal(proposal);
        geometry::alignments_into(proposal, patterns, scratch).expect("buffers sized to the pattern set");
        self.resolve(proposal, scratch)
    }

    fn draw_proposal(&mut self, out: &mut [f64]) {
        propose_into(&self.state, self.sigma, &mut self.rng, out);
    }

    fn resolve(&mut self, proposal: &[f64], alignments: &[f64]) -> bool {
        let candidate = self.spec.energy(alignments, self.state.len());
        let delta = candidate.effective() - self.energy.effective();
        self.steps += 1;
        if !candidate.in_support {
            self.wall_rejections += 1;
        }
        let ok = accept(delta, self.temperature, candidate.in_support, &mut self.rng);
        if ok {
            self.state.copy_from_slice(proposal);
            self.energy = candidate;
            self.phi1 = alignments[0];
            self.accepted += 1;
        }
        ok
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    /// Energy of the current state as tracked through accepted moves.
    pub fn energy(&self) -> EnergyValue {
        self.energy
    }

    /// Alignment of the current state with the target pattern.
    pub fn phi1(&self) -> f64 {
        self.phi1
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    pub fn phi_init(&self) -> f64 {
        self.phi_init
    }
}

struct Recorder {
    n_eq: usize,
    n_samp: usize,
    sum_phi: f64,
}

impl Recorder {
    fn new(protocol: &TrialProtocol) -> Self {
        Self { n_eq: protocol.n_eq, n_samp: protocol.n_samp, sum_phi: 0.0 }
    }

    fn record(&mut self, step: usize, chain: &MetropolisChain) {
        if step >= self.n_eq {
            self.sum_phi += chain.phi1;
        }
    }

    fn finish(self, chain: &MetropolisChain) -> TrialResult {
        TrialResult {
            mean_alignment: self.sum_phi / self.n_samp as f64,
            acceptance_rate: chain.acceptance_rate(),
            final_alignment: chain.phi1,
            wall_rejections: chain.wall_rejections,
            phi_init: chain.phi_init,
            init_attempts: chain.init_attempts,
        }
    }
}

pub fn run_trial(patterns: &PatternSet, spec: &KernelSpec, config: &TrialConfig) -> Result<TrialResult> {
    run_trial_traced(patterns, spec, config, |_| {})
}

/// [`run_trial`] with a callback receiving one [`TraceRow`] per step.
pub fn run_trial_traced<F: FnMut(TraceRow)>(
    patterns: &PatternSet,
    spec: &KernelSpec,
    config: &TrialConfig,
    mut sink: F,
) -> Result<TrialResult> {
    config.validate()?;
    let mut chain = MetropolisChain::new(
        patterns,
        *spec,
        config.temperature,
        config.protocol.phi_init_range,
        config.stream,
    )?;
    let mut rec = Recorder::new(&config.protocol);
    let (mut proposal, mut scratch) = (Vec::new(), Vec::new());
    for step in 0..config.protocol.total_steps() {
        let accepted = chain.step(patterns, &mut proposal, &mut scratch);
        rec.record(step, &chain);
        sink(TraceRow {
            step,
            phi1: chain.phi1,
            energy: chain.energy.effective(),
            accepted,
        });
    }
    Ok(rec.finish(&chain))
}

/// Independent trials, each with its own pattern set from `patterns_for(i)`,
/// run in parallel on the current rayon pool. Results come back in input
/// order and do not depend on the pool size.
pub fn run_trial_batch<F>(patterns_for: F, spec: &KernelSpec, configs: &[TrialConfig]) -> Vec<Result<TrialResult>>
where
    F: Fn(usize) -> Result<PatternSet> + Sync,
{
    configs
        .par_iter()
        .enumerate()
        .map(|(i, c)| patterns_for(i).and_then(|p| run_trial(&p, spec, c)))
        .collect()
}

/// Chains sharing one pattern set, advanced in lockstep with one fused
/// alignment product per step. Equivalent, bit for bit, to calling
/// [`run_trial`] on each config. A chain that fails to initialize yields an
/// error in its slot without affecting the others.
pub fn run_shared_batch(patterns: &PatternSet, spec: &KernelSpec, configs: &[TrialConfig]) -> Vec<Result<TrialResult>> {
    let n = patterns.dim();
    let m = patterns.len();
    let mut slots: Vec<Result<(MetropolisChain, Recorder)>> = configs
        .iter()
        .map(|c| {
            c.validate()?;
            let chain = MetropolisChain::new(patterns, *spec, c.temperature, c.protocol.phi_init_range, c.stream)?;
            Ok((chain, Recorder::new(&c.protocol)))
        })
        .collect();
    let totals: Vec<usize> = configs.iter().map(|c| c.protocol.total_steps()).collect();
    let longest = totals.iter().copied().max().unwrap_or(0);

    let mut active: Vec<usize> = Vec::with_capacity(slots.len());
    let mut proposals: Vec<f64> = Vec::new();
    let mut align: Vec<f64> = Vec::new();
    for step in 0..longest {
        active.clear();
        active.extend((0..slots.len()).filter(|&i| slots[i].is_ok() && step < totals[i]));
        let k = active.len();
        proposals.resize(k * n, 0.0);
        align.resize(k * m, 0.0);
        for (j, &i) in active.iter().enumerate() {
            if let Ok((chain, _)) = &mut slots[i] {
                chain.draw_proposal(&mut proposals[j * n..(j + 1) * n]);
            }
        }
        geometry::batch_alignments_into(&proposals, k, patterns, &mut align).expect("buffers sized to the batch");
        for (j, &i) in active.iter().enumerate() {
            if let Ok((chain, rec)) = &mut slots[i] {
                chain.resolve(&proposals[j * n..(j + 1) * n], &align[j * m..(j + 1) * m]);
                rec.record(step, chain);
            }
        }
    }
    slots
        .into_iter()
        .map(|s| s.map(|(chain, rec)| rec.finish(&chain)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_patterns;
    use crate::rng::CHAIN;
    use rand_chacha::rand_core::SeedableRng;

    fn cfg(t: f64, n_eq: usize, n_samp: usize, seed: u64) -> TrialConfig {
        TrialConfig::new(
            t,
            TrialProtocol { n_eq, n_samp, phi_init_range: (0.75, 1.0) },
            SeedStream::new(seed).child(CHAIN),
        )
    }

    #[test]
    fn proposal_scale_formula() {
        assert!((proposal_scale(1.0, 100) - 0.24).abs() < 1e-15);
    }

    #[test]
    fn proposals_stay_on_sphere_and_shrink_with_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sample_patterns(100, 1, 2).unwrap();
        let x = SphereState::try_new(p.target().to_vec()).unwrap();
        for t in [1e-6, 0.1, 1.0, 5.0] {
            let y = propose(&x, t, &mut rng).unwrap();
            let norm2: f64 = y.as_slice().iter().map(|v| v * v).sum();
            assert!((norm2 - 100.0).abs() < 1e-8);
            let dist: f64 = y.as_slice().iter().zip(x.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            // ‖x' − x‖ = O(σ√N) = O(2.4 T).
            assert!(dist < 10.0 * 2.4 * t, "T = {t}: moved {dist}");
        }
        assert!(propose(&x, 0.0, &mut rng).is_err());
    }

    #[test]
    fn acceptance_rule_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..1000).all(|_| accept(0.0, 0.7, true, &mut rng)));
        assert!((0..1000).all(|_| !accept(-5.0, 0.7, false, &mut rng)));
        assert!(accept(f64::NEG_INFINITY, 0.7, true, &mut rng));

        let t = 0.3;
        let draws = 100_000;
        let hits = (0..draws).filter(|_| accept(t * std::f64::consts::LN_2, t, true, &mut rng)).count();
        let sd = (draws as f64 * 0.25).sqrt();
        assert!((hits as f64 - draws as f64 / 2.0).abs() < 3.0 * sd, "{hits}");
    }

    #[test]
    fn zero_temperature_trial_stays_at_pattern() {
        let p = sample_patterns(40, 1, 5).unwrap();
        let spec = KernelSpec::lse(1.0).unwrap();
        let mut c = cfg(1e-6, 200, 200, 6);
        c.protocol.phi_init_range = (1.0, 1.0);
        let r = run_trial(&p, &spec, &c).unwrap();
        assert!(r.mean_alignment > 1.0 - 1e-3);
        assert!(r.final_alignment > 0.999);
    }

    #[test]
    fn trials_are_deterministic() {
        let p = sample_patterns(30, 50, 7).unwrap();
        let spec = KernelSpec::lse(1.0).unwrap();
        let c = cfg(0.5, 100, 100, 8);
        assert_eq!(run_trial(&p, &spec, &c).unwrap(), run_trial(&p, &spec, &c).unwrap());
    }

    #[test]
    fn trace_has_one_row_per_step() {
        let p = sample_patterns(10, 3, 9).unwrap();
        let spec = KernelSpec::lse(1.0).unwrap();
        let mut rows = Vec::new();
        let r = run_trial_traced(&p, &spec, &cfg(0.4, 37, 11, 10), |row| rows.push(row)).unwrap();
        assert_eq!(rows.len(), 48);
        assert_eq!(rows.last().unwrap().phi1, r.final_alignment);
        let mean: f64 = rows[37..].iter().map(|r| r.phi1).sum::<f64>() / 11.0;
        assert!((mean - r.mean_alignment).abs() < 1e-14);
        let acc = rows.iter().filter(|r| r.accepted).count() as f64 / 48.0;
        assert!((acc - r.acceptance_rate).abs() < 1e-14);
    }

    #[test]
    fn lsr_init_failure_is_reported() {
        // b = 40 puts φ_c = 0.975 above most of the φ_init window; a pinned
        // φ_init = 0.8 can never start in support.
        let n = 20;
        let p = sample_patterns(n, 10, 11).unwrap();
        let spec = KernelSpec::lsr_with_sharpness(40.0, n).unwrap();
        let mut c = cfg(0.5, 10, 10, 12);
        c.protocol.phi_init_range = (0.8, 0.8);
        match run_trial(&p, &spec, &c) {
            Err(Error::TrialSetup { b, phi_c, attempts, .. }) => {
                assert!((b - 40.0).abs() < 1e-12);
                assert!((phi_c - 0.975).abs() < 1e-12);
                assert_eq!(attempts, INIT_RETRIES + 1);
            }
            other => panic!("expected setup error, got {other:?}"),
        }
    }

    #[test]
    fn lsr_init_retries_until_in_support() {
        let n = 20;
        let p = sample_patterns(n, 10, 13).unwrap();
        // φ_c = 0.9: roughly 60% of draws from [0.75, 1) fall short.
        let spec = KernelSpec::lsr_with_sharpness(10.0, n).unwrap();
        let attempts: Vec<usize> = (0..40)
            .map(|s| run_trial(&p, &spec, &cfg(0.2, 5, 5, 100 + s)).unwrap().init_attempts)
            .collect();
        assert!(attempts.iter().any(|&a| a > 1));
    }

    #[test]
    fn lsr_chain_never_leaves_support() {
        let n = 12;
        let p = sample_patterns(n, 200, 14).unwrap();
        let spec = KernelSpec::lsr_with_sharpness(3.41, n).unwrap();
        let mut chain = MetropolisChain::new(&p, spec, 2.0, (0.75, 1.0), SeedStream::new(15)).unwrap();
        let (mut prop, mut scratch) = (Vec::new(), Vec::new());
        let mut align = vec![0.0; p.len()];
        for _ in 0..20_000 {
            chain.step(&p, &mut prop, &mut scratch);
            assert!(chain.energy().in_support);
        }
        geometry::alignments_into(chain.state(), &p, &mut align).unwrap();
        assert!(spec.energy(&align, n).in_support);
        assert!(chain.wall_rejections > 0);
    }

    #[test]
    fn chain_stays_on_sphere_and_energy_bookkeeping_holds() {
        let n = 16;
        let p = sample_patterns(n, 40, 16).unwrap();
        let spec = KernelSpec::lse(1.0).unwrap();
        let mut chain = MetropolisChain::new(&p, spec, 0.8, (0.75, 1.0), SeedStream::new(17)).unwrap();
        let (mut prop, mut scratch) = (Vec::new(), Vec::new());
        let mut align = vec![0.0; p.len()];
        for step in 1..=100_000 {
            chain.step(&p, &mut prop, &mut scratch);
            if step == 10_000 {
                geometry::alignments_into(chain.state(), &p, &mut align).unwrap();
                let fresh = spec.energy(&align, n).value;
                let tracked = chain.energy().value;
                assert!((fresh - tracked).abs() <= 1e-8 * fresh.abs().max(1.0));
                assert_eq!(align[0], chain.phi1());
            }
        }
        let norm2: f64 = chain.state().iter().map(|v| v * v).sum();
        assert!((norm2 - n as f64).abs() < 1e-8);
    }

    #[test]
    fn shared_batch_matches_individual_trials_bitwise() {
        let p = sample_patterns(21, 64, 18).unwrap();
        for spec in [KernelSpec::lse(1.0).unwrap(), KernelSpec::lsr_with_sharpness(3.41, 21).unwrap()] {
            let configs: Vec<TrialConfig> = [0.1, 0.5, 1.0, 2.0]
                .iter()
                .enumerate()
                .map(|(i, &t)| cfg(t, 50 + 10 * i, 40, 19 + i as u64))
                .collect();
            let batch = run_shared_batch(&p, &spec, &configs);
            for (c, b) in configs.iter().zip(batch) {
                assert_eq!(run_trial(&p, &spec, c).unwrap(), b.unwrap());
            }
        }
    }

    #[test]
    fn batch_of_one_is_run_trial() {
        let spec = KernelSpec::lse(1.0).unwrap();
        let c = cfg(0.3, 30, 30, 20);
        let batch = run_trial_batch(|_| sample_patterns(9, 5, 21), &spec, &[c]);
        let single = run_trial(&sample_patterns(9, 5, 21).unwrap(), &spec, &c).unwrap();
        assert_eq!(batch.into_iter().next().unwrap().unwrap(), single);
    }

    #[test]
    fn batch_results_do_not_depend_on_worker_count() {
        let spec = KernelSpec::lse(1.0).unwrap();
        let configs: Vec<TrialConfig> = (0..6).map(|i| cfg(0.2 + 0.3 * i as f64, 40, 40, 30 + i)).collect();
        let run = |workers| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .unwrap()
                .install(|| run_trial_batch(|i| sample_patterns(12, 30, 50 + i as u64), &spec, &configs))
                .into_iter()
                .map(|r| r.unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn one_failing_trial_does_not_abort_batch() {
        let n = 20;
        let spec = KernelSpec::lsr_with_sharpness(40.0, n).unwrap();
        let mut bad = cfg(0.5, 5, 5, 40);
        bad.protocol.phi_init_range = (0.8, 0.8);
        let mut good = cfg(0.5, 5, 5, 41);
        good.protocol.phi_init_range = (1.0, 1.0);
        let out = run_trial_batch(|_| sample_patterns(n, 4, 42), &spec, &[bad, good]);
        assert!(out[0].is_err() && out[1].is_ok());
        let shared = run_shared_batch(&sample_patterns(n, 4, 42).unwrap(), &spec, &[bad, good]);
        assert!(shared[0].is_err());
        assert_eq!(shared[1].as_ref().unwrap(), out[1].as_ref().unwrap());
    }

    fn mean_acceptance(p: &PatternSet, spec: &KernelSpec, t: f64, salt: u64) -> f64 {
        (0..32)
            .map(|k| run_trial(p, spec, &cfg(t, 200, 200, salt + k)).unwrap().acceptance_rate)
            .sum::<f64>()
            / 32.0
    }

    #[test]
    fn acceptance_falls_with_temperature() {
        // M = 1, N = 50, 32 trials per temperature.
        let p = sample_patterns(50, 1, 60).unwrap();
        let spec = KernelSpec::lse(1.0).unwrap();
        let temps = [0.1, 0.3, 0.6, 1.0, 1.5];
        let rates: Vec<f64> = temps
            .iter()
            .enumerate()
            .map(|(ti, &t)| mean_acceptance(&p, &spec, t, 1000 * ti as u64))
            .collect();
        for w in rates.windows(2) {
            assert!(w[1] < w[0], "acceptance not decreasing: {rates:?}");
        }
    }

    #[test]
    fn acceptance_recovers_at_high_temperature() {
        // Once the step angle is O(1), ΔH/T ~ N/T shrinks and acceptance climbs back.
        let p = sample_patterns(50, 1, 60).unwrap();
        let spec = KernelSpec::lse(1.0).unwrap();
        let mid = mean_acceptance(&p, &spec, 1.5, 0);
        let hot = mean_acceptance(&p, &spec, 4.0, 100);
        assert!(hot > mid + 0.005, "{mid} vs {hot}");
    }
}
