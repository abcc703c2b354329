//! Laplace noise, privacy-parameter formulas and empirical privacy checks.
//!
//! # Noise generation
//!
//! Every [`NoiseStream`] is a ChaCha20 generator (`rand_chacha::ChaCha20Rng`)
//! keyed by the 64-bit seed through `seed_from_u64`, with a 64-bit stream id
//! selecting an independent substream. Draw `i` of a stream consumes exactly
//! the `i`-th `u64` of the keystream, so draws are addressable by index and
//! two draw counters never share keystream words.
//!
//! A `u64` word `w` becomes a Laplace variate by inverse CDF:
//!
//! ```text
//! u = ((w >> 11) + 0.5) / 2^53                 // u ∈ (0, 1), never 0 or 1
//! x = scale · ln(2u)          if u < 1/2
//! x = −scale · ln(2(1 − u))   otherwise
//! ```
//!
//! Both `2u` and `1 − u` are exact in binary floating point, so the output
//! depends only on `ln`.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Substream used for solver noise.
pub const NOISE_STREAM: u64 = 0;
/// Substream used for the random arrival order of the online solver.
pub const PERMUTATION_STREAM: u64 = 1;
/// Substream used by the synthetic instance generators.
pub const GENERATOR_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    pub epsilon: f64,
    /// `δ = 0` selects pure differential privacy where a solver supports it.
    pub delta: f64,
    /// Failure probability used in the parameter diagnostics.
    pub beta: f64,
}

impl PrivacySpec {
    pub const DEFAULT_BETA: f64 = 0.05;

    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        Self::with_beta(epsilon, delta, Self::DEFAULT_BETA)
    }

    pub fn with_beta(epsilon: f64, delta: f64, beta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {epsilon}"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!(
                "delta must be in [0, 1), got {delta}"
            )));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be in (0, 1), got {beta}"
            )));
        }
        Ok(Self {
            epsilon,
            delta,
            beta,
        })
    }
}

/// Seeded, index-addressable stream of Laplace variates.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    scale: f64,
    seed: u64,
    stream: u64,
    draws_emitted: u64,
    rng: ChaCha20Rng,
}

impl NoiseStream {
    pub fn new(scale: f64, seed: u64) -> Self {
        Self::with_stream(scale, seed, NOISE_STREAM)
    }

    /// `scale` 0 gives the deterministic all-zero stream.
    pub fn with_stream(scale: f64, seed: u64, stream: u64) -> Self {
        assert!(
            scale >= 0.0 && scale.is_finite(),
            "noise scale must be finite and >= 0"
        );
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            scale,
            seed,
            stream,
            draws_emitted: 0,
            rng,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn draws_emitted(&self) -> u64 {
        self.draws_emitted
    }

    /// Positions the stream so the next draw is draw number `index`.
    pub fn seek(&mut self, index: u64) {
        // two 32-bit keystream words per draw
        self.rng.set_word_pos(index as u128 * 2);
        self.draws_emitted = index;
    }

    /// Next Laplace(scale) variate.
    pub fn draw(&mut self) -> f64 {
        let word = self.rng.next_u64();
        self.draws_emitted += 1;
        if self.scale == 0.0 {
            return 0.0;
        }
        laplace_from_word(word, self.scale)
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for slot in out {
            *slot = self.draw();
        }
    }
}

/// Inverse-CDF transform of one 64-bit word into a Laplace(scale) variate.
pub fn laplace_from_word(word: u64, scale: f64) -> f64 {
    const TWO_POW_53: f64 = 9_007_199_254_740_992.0;
    let k = word >> 11;
    if k < 1 << 52 {
        scale * (2.0 * ((k as f64 + 0.5) / TWO_POW_53)).ln()
    } else {
        // 1 - u computed exactly so the top word stays finite
        let tail = (((1u64 << 53) - 1 - k) as f64 + 0.5) / TWO_POW_53;
        -scale * (2.0 * tail).ln()
    }
}

/// Per-coordinate, per-round budget of the dual multiplicative-weights
/// solver: `ε / sqrt(8 T m ln(2/δ))`.
pub fn per_step_epsilon_dmw(spec: &PrivacySpec, rounds: usize, m: usize) -> Result<f64> {
    if spec.delta <= 0.0 {
        return Err(Error::InvalidParameter(
            "the dual multiplicative-weights solver needs delta > 0".into(),
        ));
    }
    if rounds == 0 || m == 0 {
        return Err(Error::InvalidParameter("rounds and m must be >= 1".into()));
    }
    let denom = (8.0 * rounds as f64 * m as f64 * (2.0 / spec.delta).ln()).sqrt();
    Ok(spec.epsilon / denom)
}

/// Laplace scale of the online solver: `m/ε` when `δ = 0`, otherwise
/// `sqrt(8 m ln(1/δ)) / ε`.
pub fn sigma_domw(spec: &PrivacySpec, m: usize) -> f64 {
    let m = m as f64;
    if spec.delta == 0.0 {
        m / spec.epsilon
    } else {
        (8.0 * m * (1.0 / spec.delta).ln()).sqrt() / spec.epsilon
    }
}

/// Total ε of a `T`-fold adaptive composition of ε-DP mechanisms at slack
/// `δ′`: `ε sqrt(2T ln(1/δ′)) + T ε (e^ε − 1)`.
pub fn composition_epsilon(eps_step: f64, rounds: usize, delta_prime: f64) -> f64 {
    let t = rounds as f64;
    eps_step * (2.0 * t * (1.0 / delta_prime).ln()).sqrt() + t * eps_step * eps_step.exp_m1()
}

/// Parses a seed given in decimal or as `0x`-prefixed hex.
pub fn parse_seed(text: &str) -> Result<u64> {
    let t = text.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse::<u64>(),
    };
    parsed.map_err(|e| Error::InvalidParameter(format!("bad seed {text:?}: {e}")))
}

// ---------------------------------------------------------------------------
// Empirical audit
// ---------------------------------------------------------------------------

pub const AUDIT_BINS: usize = 200;
/// Central mass covered by the histogram range.
pub const AUDIT_COVERAGE: f64 = 0.999;
/// Bins with fewer samples on either side are skipped.
pub const AUDIT_MIN_COUNT: u64 = 100;
/// Standard errors subtracted from each bin's log ratio before taking the max.
pub const AUDIT_Z: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditConfig {
    pub scale: f64,
    pub input_a: f64,
    pub input_b: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditResult {
    /// Max over bins of `|ln(c_a/c_b)| − z·se`, floored at 0; infinite when
    /// the mechanism is detected as non-private.
    pub estimate: f64,
    /// Uncorrected max over bins of `|ln(c_a/c_b)|`.
    pub raw_estimate: f64,
    pub non_private: bool,
    pub bins_used: usize,
}

/// Histogram-ratio audit of a Laplace mechanism with budget `eps_step` on two
/// neighbouring inputs (0 and 1). `eps_step = ∞` means scale 0.
pub fn audit_mechanism(eps_step: f64, trials: usize, seed: u64) -> AuditResult {
    let scale = if eps_step.is_infinite() {
        0.0
    } else {
        1.0 / eps_step
    };
    audit_laplace(&AuditConfig {
        scale,
        input_a: 0.0,
        input_b: 1.0,
        trials,
        seed,
    })
}

pub fn audit_laplace(cfg: &AuditConfig) -> AuditResult {
    let sample = |input: f64, stream: u64| -> Vec<f64> {
        let mut noise = NoiseStream::with_stream(cfg.scale, cfg.seed, stream);
        (0..cfg.trials).map(|_| input + noise.draw()).collect()
    };
    let a = sample(cfg.input_a, 0);
    let b = sample(cfg.input_b, 1);

    let mut pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let tail = (1.0 - AUDIT_COVERAGE) / 2.0;
    let lo = quantile_sorted(&pooled, tail);
    let hi = quantile_sorted(&pooled, 1.0 - tail);

    let bins = if hi > lo { AUDIT_BINS } else { 1 };
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let histogram = |xs: &[f64]| -> Vec<u64> {
        let mut counts = vec![0u64; bins];
        for &x in xs {
            if x < lo || x > hi {
                continue;
            }
            let idx = (((x - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        counts
    };
    let ca = histogram(&a);
    let cb = histogram(&b);

    let mut estimate = 0.0_f64;
    let mut raw_estimate = 0.0_f64;
    let mut bins_used = 0;
    let mut non_private = false;
    for (&x, &y) in ca.iter().zip(&cb) {
        if (x >= AUDIT_MIN_COUNT && y == 0) || (y >= AUDIT_MIN_COUNT && x == 0) {
            non_private = true;
        }
        if x < AUDIT_MIN_COUNT || y < AUDIT_MIN_COUNT {
            continue;
        }
        bins_used += 1;
        let (x, y) = (x as f64, y as f64);
        let ratio = (x / y).ln().abs();
        let se = (1.0 / x + 1.0 / y).sqrt();
        raw_estimate = raw_estimate.max(ratio);
        estimate = estimate.max(ratio - AUDIT_Z * se);
    }
    if non_private {
        estimate = f64::INFINITY;
        raw_estimate = f64::INFINITY;
    }
    AuditResult {
        estimate,
        raw_estimate,
        non_private,
        bins_used,
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

// ---------------------------------------------------------------------------
// Concentration checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationConfig {
    pub p_max: f64,
    /// Per-step budget; the noise scale is `1/eps_step` (0 when infinite).
    pub eps_step: f64,
    pub m: usize,
    pub rounds: usize,
    pub beta: f64,
    pub trials: usize,
    pub seed: u64,
    /// Multiplies the threshold; 1 is the bound as stated.
    pub threshold_scale: f64,
}

impl ConcentrationConfig {
    fn scale(&self) -> f64 {
        if self.eps_step.is_infinite() {
            0.0
        } else {
            1.0 / self.eps_step
        }
    }

    /// `p_max sqrt(8 T ln(6/β)) / ε′`, times `threshold_scale`.
    pub fn inner_product_bound(&self) -> f64 {
        self.threshold_scale
            * self.p_max
            * (8.0 * self.rounds as f64 * (6.0 / self.beta).ln()).sqrt()
            * self.scale()
    }

    /// Truncation level `ln(T)/ε′`.
    pub fn truncation_level(&self) -> f64 {
        (self.rounds as f64).ln() * self.scale()
    }

    fn run_trials<F>(&self, trial: F) -> f64
    where
        F: Fn(&mut NoiseStream) -> bool + Sync,
    {
        let violations = (0..self.trials as u64)
            .into_par_iter()
            .filter(|&t| {
                let mut noise = NoiseStream::with_stream(self.scale(), self.seed, t);
                trial(&mut noise)
            })
            .count();
        violations as f64 / self.trials as f64
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = j;
        }
    }
    best
}

/// Fraction of trials in which `Σ_t ⟨q^(t), ν^(t)⟩` exceeds
/// [`ConcentrationConfig::inner_product_bound`]. The adversary puts all of
/// `p_max` on the coordinate whose running noise sum is largest so far, so
/// `q^(t)` depends only on `ν^(1..t−1)`.
pub fn concentration_check_inner_product(cfg: &ConcentrationConfig) -> f64 {
    let bound = cfg.inner_product_bound();
    cfg.run_trials(|noise| {
        let mut running = vec![0.0; cfg.m];
        let mut nu = vec![0.0; cfg.m];
        let mut total = 0.0;
        for _ in 0..cfg.rounds {
            let j = argmax(&running);
            noise.fill(&mut nu);
            total += cfg.p_max * nu[j];
            for (r, v) in running.iter_mut().zip(&nu) {
                *r += v;
            }
        }
        total > bound
    })
}

/// Fraction of trials in which the truncation overflow
/// `Σ_t Σ_j q_j^(t) max{0, ν_j^(t) − ln(T)/ε′}` exceeds twice the
/// inner-product bound. `q^(t)` places `p_max` on the (up to) two coordinates
/// with the largest overflow so far, so `‖q‖₁ ≤ 2 p_max` and `‖q‖∞ ≤ p_max`.
pub fn concentration_check_overflow(cfg: &ConcentrationConfig) -> f64 {
    let bound = 2.0 * cfg.inner_product_bound();
    let level = cfg.truncation_level();
    cfg.run_trials(|noise| {
        let mut running = vec![0.0; cfg.m];
        let mut nu = vec![0.0; cfg.m];
        let mut total = 0.0;
        for _ in 0..cfg.rounds {
            let first = argmax(&running);
            let second = (0..cfg.m)
                .filter(|&j| j != first)
                .fold(None, |best: Option<usize>, j| match best {
                    Some(b) if running[b] >= running[j] => Some(b),
                    _ => Some(j),
                });
            noise.fill(&mut nu);
            let overflow: Vec<f64> = nu.iter().map(|v| (v - level).max(0.0)).collect();
            total += cfg.p_max * overflow[first];
            if let Some(s) = second {
                total += cfg.p_max * overflow[s];
            }
            for (r, o) in running.iter_mut().zip(&overflow) {
                *r += o;
            }
        }
        total > bound
    })
}
