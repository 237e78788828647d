//! Direct evaluators used as ground truth, and the hashing reduction for
//! element distinctness.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strings `x_{u,w}` held by player `u` about pair `{u, w}`, keyed by `(u, w)`.
pub type PairStrings = BTreeMap<(usize, usize), Vec<bool>>;

/// 1 iff some coordinate is set in every input.
pub fn disj(inputs: &[Vec<bool>]) -> bool {
    let n = inputs.first().map_or(0, Vec::len);
    (0..n).any(|i| inputs.iter().all(|x| x[i]))
}

/// 1 iff all inputs are pairwise different.
pub fn ed(inputs: &[Vec<bool>]) -> bool {
    let mut v: Vec<&Vec<bool>> = inputs.iter().collect();
    v.sort();
    v.windows(2).all(|w| w[0] != w[1])
}

fn pair_values(x: &PairStrings, k: usize) -> Result<Vec<bool>> {
    let mut out = Vec::new();
    for u in 0..k {
        for w in u + 1..k {
            let (a, b) = match (x.get(&(u, w)), x.get(&(w, u))) {
                (Some(a), Some(b)) if a.len() == b.len() => (a, b),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "missing or mismatched strings for pair ({u},{w})"
                    )))
                }
            };
            out.push(a.iter().zip(b).any(|(&p, &q)| p && q));
        }
    }
    Ok(out)
}

/// OR over unordered pairs of two-party disjointness (1 iff the pair's strings intersect).
pub fn or_disj(x: &PairStrings, k: usize) -> Result<bool> {
    Ok(pair_values(x, k)?.into_iter().any(|v| v))
}

/// AND over unordered pairs of two-party disjointness.
pub fn and_disj(x: &PairStrings, k: usize) -> Result<bool> {
    Ok(pair_values(x, k)?.into_iter().all(|v| v))
}

/// Repeated multiply-add-shift hashing of `n`-bit strings down to
/// `r` blocks of `w` bits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdHash {
    pub family: String,
    pub n: usize,
    pub w: usize,
    pub r: usize,
    /// Word size in bits.
    pub word: usize,
    pub params: Vec<(u128, u128)>,
}

fn ceil_log2(x: usize) -> usize {
    (usize::BITS - x.saturating_sub(1).leading_zeros()) as usize
}

impl EdHash {
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if n == 0 || n > 60 {
            return Err(Error::InvalidInput("hashing supports 1 ≤ n ≤ 60".into()));
        }
        let w = 2 * ceil_log2(k) + 2;
        let r = ceil_log2(3 * k * k);
        let word = (2 * n).max(n + w);
        let mask = (1u128 << word) - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..r)
            .map(|_| (rng.gen::<u128>() & mask, rng.gen::<u128>() & mask))
            .collect();
        Ok(EdHash {
            family: "multiply-add-shift".into(),
            n,
            w,
            r,
            word,
            params,
        })
    }

    pub fn out_bits(&self) -> usize {
        self.r * self.w
    }

    /// Hash tuple, most significant bit of each block first.
    pub fn apply(&self, x: &[bool]) -> Vec<bool> {
        let v = x.iter().fold(0u128, |acc, &b| acc << 1 | u128::from(b));
        let mask = (1u128 << self.word) - 1;
        let mut out = Vec::with_capacity(self.out_bits());
        for &(a, b) in &self.params {
            let h = (a.wrapping_mul(v).wrapping_add(b) & mask) >> (self.word - self.w);
            out.extend((0..self.w).rev().map(|i| h >> i & 1 == 1));
        }
        out
    }
}

/// Hashes every input with shared randomness.
pub fn ed_hash_reduce(inputs: &[Vec<bool>], seed: u64) -> Result<(EdHash, Vec<Vec<bool>>)> {
    let n = inputs.first().map_or(0, Vec::len);
    let h = EdHash::new(n, inputs.len(), seed)?;
    let out = inputs.iter().map(|x| h.apply(x)).collect();
    Ok((h, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    #[test]
    fn small_cases() {
        assert!(disj(&[b("101"), b("011"), b("111")]));
        assert!(!disj(&[b("100"), b("011")]));
        assert!(!ed(&[b("01"), b("01")]));
        assert!(ed(&[b("01"), b("11"), b("00")]));
        let mut x = PairStrings::new();
        for u in 0..3 {
            for w in 0..3 {
                if u != w {
                    x.insert((u, w), b("11"));
                }
            }
        }
        assert!(and_disj(&x, 3).unwrap());
        x.insert((0, 1), b("00"));
        assert!(!and_disj(&x, 3).unwrap());
        assert!(or_disj(&x, 3).unwrap());
    }

    #[test]
    fn hashing_is_a_function() {
        let (h, out) = ed_hash_reduce(&[b("1011"), b("1011"), b("1011")], 7).unwrap();
        assert_eq!(out[0].len(), h.out_bits());
        assert!(out.windows(2).all(|w| w[0] == w[1]));
    }
}
