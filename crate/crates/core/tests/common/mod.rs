//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use onell_core::bitstring::{BitVector, RngStream, Target};
use onell_core::ga::{run_iteration, GaState, ParameterSet};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson χ² p-value of `counts` against `probs` (cells with zero
/// probability must have zero counts).
pub fn chi_square_p(counts: &BTreeMap<(usize, u64), u64>, probs: &BTreeMap<(usize, u64), f64>) -> f64 {
    let total: u64 = counts.values().sum();
    for k in counts.keys() {
        assert!(probs.contains_key(k), "observed impossible outcome {k:?}");
    }
    let mut stat = 0.0;
    let mut cells = 0;
    for (k, &p) in probs {
        if p <= 0.0 {
            continue;
        }
        let e = p * total as f64;
        let o = *counts.get(k).unwrap_or(&0) as f64;
        stat += (o - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}

pub fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exhaustive one-iteration kernel for tiny `n`: probability of each
/// `(next fitness, evaluations used)` pair, enumerating every mutation
/// strength, every set of flipped positions, every tie choice and every
/// crossover outcome.
pub fn enumerate_kernel(x: &[bool], z: &[bool], lm: usize, alpha: f64, lc: usize, beta: f64) -> BTreeMap<(usize, u64), f64> {
    let n = x.len();
    let p = (alpha * lm as f64 / n as f64).min(1.0);
    let c = (beta / lc as f64).clamp(1.0 / n as f64, 1.0);
    let f = |y: &[bool]| y.iter().zip(z).filter(|(a, b)| a == b).count();
    let fx = f(x);
    let positive = 1.0 - (1.0 - p).powi(n as i32);
    let mut out = BTreeMap::new();
    for ell in 1..=n {
        let p_ell = binom(n, ell) * p.powi(ell as i32) * (1.0 - p).powi((n - ell) as i32) / positive;
        let subsets: Vec<u32> = (0u32..1 << n).filter(|m| m.count_ones() as usize == ell).collect();
        let apply = |m: u32| -> Vec<bool> { (0..n).map(|i| x[i] ^ (m >> i & 1 == 1)).collect() };
        // all λ_m-tuples of mutants
        let tuples = subsets.len().pow(lm as u32);
        for t in 0..tuples {
            let mut idx = t;
            let mut mutants = Vec::with_capacity(lm);
            for _ in 0..lm {
                mutants.push(subsets[idx % subsets.len()]);
                idx /= subsets.len();
            }
            let p_tuple = p_ell / tuples as f64;
            let best = mutants.iter().map(|&m| f(&apply(m))).max().unwrap();
            let winners: Vec<u32> = mutants.iter().copied().filter(|&m| f(&apply(m)) == best).collect();
            for &w in &winners {
                let p_w = p_tuple / winners.len() as f64;
                let diff: Vec<usize> = (0..n).filter(|&i| w >> i & 1 == 1).collect();
                // each child keeps a subset of the winner's flips
                let child_outcomes = 1usize << diff.len();
                let combos = child_outcomes.pow(lc as u32);
                for cb in 0..combos {
                    let mut idx = cb;
                    let mut prob = p_w;
                    let mut evals = lm as u64;
                    let mut y_best = best;
                    for _ in 0..lc {
                        let s = idx % child_outcomes;
                        idx /= child_outcomes;
                        let k = s.count_ones() as usize;
                        prob *= c.powi(k as i32) * (1.0 - c).powi((diff.len() - k) as i32);
                        if k == 0 || k == diff.len() {
                            continue;
                        }
                        let mut m = 0u32;
                        for (j, &i) in diff.iter().enumerate() {
                            if s >> j & 1 == 1 {
                                m |= 1 << i;
                            }
                        }
                        evals += 1;
                        y_best = y_best.max(f(&apply(m)));
                    }
                    if prob == 0.0 {
                        continue;
                    }
                    let next = if y_best >= fx { y_best } else { fx };
                    *out.entry((next, evals)).or_insert(0.0) += prob;
                }
            }
        }
    }
    out
}

pub fn empirical_kernel(x: &[bool], z: &[bool], params: ParameterSet, trials: u64, seed: u64) -> BTreeMap<(usize, u64), u64> {
    let target = Target::new(BitVector::from_bits(z.to_vec()).unwrap());
    let x0 = BitVector::from_bits(x.to_vec()).unwrap();
    let mut rng = RngStream::new(seed, 0);
    let mut counts = BTreeMap::new();
    for _ in 0..trials {
        let mut state = GaState::new(x0.clone(), &target).unwrap();
        let out = run_iteration(&mut state, &params, &target, &mut rng).unwrap();
        *counts.entry((state.fx(), out.evals_used)).or_insert(0) += 1;
    }
    counts
}
