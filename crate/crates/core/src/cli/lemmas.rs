//! Randomized checks of the two summation inequalities behind the regret
//! bounds.

use serde::{Deserialize, Serialize};

use crate::metrics::{bound_holds, corollary_bound, lemma_self_normalized, lemma_sqrt_sum_scan};
use crate::numerics::SeededRng;

pub const SQRT_SUM_HORIZON: u64 = 1_000_000;
pub const MAX_SEQUENCE_LEN: usize = 1000;
pub const MAX_ENTRY: f64 = 1e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub sqrt_sum_horizon: u64,
    pub sqrt_sum_violations: usize,
    pub trials: usize,
    pub self_normalized_violations: usize,
    pub corollary_violations: usize,
    /// Largest lhs/rhs observed; stays below 1 when every trial passes.
    pub worst_self_normalized_ratio: f64,
    pub worst_corollary_ratio: f64,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.sqrt_sum_violations == 0
            && self.self_normalized_violations == 0
            && self.corollary_violations == 0
    }
}

/// Draws one nonnegative sequence with entries in [0, 1e3]. Alternates
/// dense uniform draws, sparse sequences with zero runs, and heavy-tailed
/// spikes so that the zero-prefix convention and the tight regime are
/// both exercised.
fn draw_sequence(rng: &mut SeededRng, trial: usize) -> Vec<f64> {
    let len = 1 + (rng.next_u64() % MAX_SEQUENCE_LEN as u64) as usize;
    (0..len)
        .map(|_| match trial % 3 {
            0 => rng.uniform_in(0.0, MAX_ENTRY),
            1 => {
                if rng.uniform() < 0.8 {
                    0.0
                } else {
                    rng.uniform_in(0.0, MAX_ENTRY)
                }
            }
            _ => MAX_ENTRY * rng.uniform().powi(8),
        })
        .collect()
}

pub fn run_lemmas(trials: usize, seed: u64) -> LemmaReport {
    let sqrt_sum_violations = lemma_sqrt_sum_scan(SQRT_SUM_HORIZON);
    let mut rng = SeededRng::new(seed);
    let mut report = LemmaReport {
        sqrt_sum_horizon: SQRT_SUM_HORIZON,
        sqrt_sum_violations,
        trials,
        self_normalized_violations: 0,
        corollary_violations: 0,
        worst_self_normalized_ratio: 0.0,
        worst_corollary_ratio: 0.0,
    };
    for trial in 0..trials {
        let b = draw_sequence(&mut rng, trial);
        let (lhs, rhs) = lemma_self_normalized(&b).expect("entries are nonnegative");
        if !bound_holds(lhs, rhs) {
            report.self_normalized_violations += 1;
        }
        if rhs > 0.0 {
            report.worst_self_normalized_ratio = report.worst_self_normalized_ratio.max(lhs / rhs);
        }

        let bound = rng.uniform_in(0.1, MAX_ENTRY.sqrt());
        let a: Vec<f64> = b.iter().map(|_| rng.uniform_in(-bound, bound)).collect();
        let (lhs, rhs) = corollary_bound(&a, bound).expect("entries respect the bound");
        if !bound_holds(lhs, rhs) {
            report.corollary_violations += 1;
        }
        report.worst_corollary_ratio = report.worst_corollary_ratio.max(lhs / rhs);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_batch_passes() {
        let r = run_lemmas(60, 4);
        assert!(r.passed(), "{r:?}");
        assert!(r.worst_self_normalized_ratio < 1.0);
        assert!(r.worst_self_normalized_ratio > 0.5);
    }

    #[test]
    fn sequences_respect_limits() {
        let mut rng = SeededRng::new(1);
        for trial in 0..30 {
            let b = draw_sequence(&mut rng, trial);
            assert!((1..=MAX_SEQUENCE_LEN).contains(&b.len()));
            assert!(b.iter().all(|v| (0.0..=MAX_ENTRY).contains(v)));
        }
    }
}
