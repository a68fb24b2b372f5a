//! Two-sided paired permutation test on the mean difference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Largest sample size enumerated exactly.
pub const EXACT_LIMIT: usize = 20;
pub const MONTE_CARLO_SAMPLES: usize = 100_000;
pub const DEFAULT_SEED: u64 = 0;

// Absorbs float noise when comparing resampled statistics with the observed one.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PermutationMode {
    /// Exact up to `EXACT_LIMIT` pairs, Monte Carlo beyond.
    Auto {
        seed: u64,
    },
    Exact,
    MonteCarlo {
        samples: usize,
        seed: u64,
    },
}

impl Default for PermutationMode {
    fn default() -> Self {
        PermutationMode::Auto { seed: DEFAULT_SEED }
    }
}

fn mean_abs(diffs: &[f64], signs: impl Fn(usize) -> bool) -> f64 {
    let sum: f64 = diffs
        .iter()
        .enumerate()
        .map(|(i, d)| if signs(i) { -d } else { *d })
        .sum();
    (sum / diffs.len() as f64).abs()
}

/// p-value for H0: the paired values are exchangeable. Empty input gives 1.
pub fn paired_permutation_test(pairs: &[(f64, f64)], mode: PermutationMode) -> f64 {
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    if diffs.is_empty() {
        return 1.0;
    }
    let observed = mean_abs(&diffs, |_| false);
    let n = diffs.len();
    let (exact, samples, seed) = match mode {
        PermutationMode::Exact => (true, 0, 0),
        PermutationMode::Auto { seed } => (n <= EXACT_LIMIT, MONTE_CARLO_SAMPLES, seed),
        PermutationMode::MonteCarlo { samples, seed } => (false, samples.max(1), seed),
    };
    if exact {
        assert!(n < 64, "exact enumeration over {n} pairs is infeasible");
        let total = 1u64 << n;
        let hits = (0..total)
            .filter(|mask| mean_abs(&diffs, |i| mask >> i & 1 == 1) >= observed - TIE_EPS)
            .count();
        hits as f64 / total as f64
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flips = vec![false; n];
        let mut hits = 0usize;
        for _ in 0..samples {
            for f in flips.iter_mut() {
                *f = rng.gen::<bool>();
            }
            if mean_abs(&diffs, |i| flips[i]) >= observed - TIE_EPS {
                hits += 1;
            }
        }
        hits as f64 / samples as f64
    }
}
