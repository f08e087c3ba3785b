//! Extensible rank-1 lattice rules with random shifts.
//!
//! Points are enumerated in base-2 radical-inverse order,
//! `x_n = frac(φ(n)·z + Δ)`, so the first `2^m` points form the classical
//! lattice with `N = 2^m` and every prefix is reused when `N` grows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Generating vector shipped with the crate (see [`LatticeRule::cbc`]).
const DEFAULT_VECTOR: &str = include_str!("../../data/lattice_z.txt");

/// Parameters of the shipped vector.
pub const DEFAULT_LOG2_N: u32 = 16;
pub const DEFAULT_CANDIDATES: usize = 128;
pub const DEFAULT_CBC_SEED: u64 = 0x6c61_7474_6963_6531;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeRule {
    z: Vec<u64>,
}

/// Base-2 radical inverse of `n` as a 64-bit binary fraction.
#[inline]
pub fn radical_inverse_bits(n: u64) -> u64 {
    n.reverse_bits()
}

pub fn radical_inverse(n: u64) -> f64 {
    radical_inverse_bits(n) as f64 / 2f64.powi(64)
}

impl LatticeRule {
    pub fn new(z: Vec<u64>) -> Result<Self> {
        if z.is_empty() || z.iter().any(|v| *v == 0) {
            return Err(Error::Config("generating vector entries must be positive".into()));
        }
        Ok(Self { z })
    }

    /// The shipped vector truncated to `dimension` coordinates.
    pub fn default_for(dimension: usize) -> Result<Self> {
        let z = parse_vector(DEFAULT_VECTOR)?;
        if dimension > z.len() {
            return Err(Error::Config(format!(
                "the shipped generating vector has {} coordinates, {dimension} requested",
                z.len()
            )));
        }
        Self::new(z[..dimension].to_vec())
    }

    pub fn from_text(text: &str, dimension: usize) -> Result<Self> {
        let z = parse_vector(text)?;
        if dimension > z.len() {
            return Err(Error::Config(format!("generating vector has {} coordinates, {dimension} requested", z.len())));
        }
        Self::new(z[..dimension].to_vec())
    }

    pub fn dimension(&self) -> usize {
        self.z.len()
    }

    pub fn generating_vector(&self) -> &[u64] {
        &self.z
    }

    /// Unshifted point `frac(φ(n)·z)`.
    pub fn point(&self, n: u64) -> Vec<f64> {
        let r = radical_inverse_bits(n);
        // (r / 2^64)·z mod 1 is exact in wrapping 64-bit arithmetic.
        self.z
            .iter()
            .map(|z| r.wrapping_mul(*z) as f64 / 2f64.powi(64))
            .collect()
    }

    /// Component-by-component construction for `N = 2^log2_n` points with
    /// product weights `γ_j = 1/j²`, minimizing the shift-averaged worst-case
    /// error in the Korobov space of smoothness one over `candidates` random
    /// odd candidates per coordinate.
    pub fn cbc(dimension: usize, log2_n: u32, candidates: usize, seed: u64) -> Self {
        let n = 1usize << log2_n;
        let mask = (n - 1) as u64;
        let two_pi2 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
        let omega: Vec<f64> = (0..n)
            .map(|k| {
                let x = k as f64 / n as f64;
                two_pi2 * (x * x - x + 1.0 / 6.0)
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prod = vec![1.0f64; n];
        let mut z = Vec::with_capacity(dimension);
        for j in 1..=dimension {
            let gamma = 1.0 / (j * j) as f64;
            let cands: Vec<u64> = if j == 1 {
                vec![1]
            } else {
                (0..candidates).map(|_| 2 * rng.random_range(0..(n as u64 / 4)) + 1).collect()
            };
            let mut best = (f64::INFINITY, cands[0]);
            for c in cands {
                let mut e = 0.0;
                for (k, p) in prod.iter().enumerate() {
                    e += p * (1.0 + gamma * omega[((k as u64).wrapping_mul(c) & mask) as usize]);
                }
                if e < best.0 {
                    best = (e, c);
                }
            }
            let c = best.1;
            for (k, p) in prod.iter_mut().enumerate() {
                *p *= 1.0 + gamma * omega[((k as u64).wrapping_mul(c) & mask) as usize];
            }
            z.push(c);
        }
        Self { z }
    }

    /// Squared shift-averaged worst-case error of the first `2^log2_n` points.
    pub fn worst_case_error_sq(&self, log2_n: u32) -> f64 {
        let n = 1u64 << log2_n;
        let two_pi2 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
        let mut sum = 0.0;
        for k in 0..n {
            let mut p = 1.0;
            for (j, z) in self.z.iter().enumerate() {
                let x = ((k.wrapping_mul(*z)) % n) as f64 / n as f64;
                p *= 1.0 + two_pi2 * (x * x - x + 1.0 / 6.0) / ((j + 1) * (j + 1)) as f64;
            }
            sum += p;
        }
        sum / n as f64 - 1.0
    }

    pub fn to_text(&self, log2_n: u32, candidates: usize, seed: u64) -> String {
        let mut s = format!(
            "# rank-1 lattice generating vector, CBC with weights 1/j^2, N = 2^{log2_n}, \
             {candidates} random candidates per coordinate, seed {seed:#x}\n"
        );
        for z in &self.z {
            s.push_str(&format!("{z}\n"));
        }
        s
    }
}

fn parse_vector(text: &str) -> Result<Vec<u64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<u64>()
                .map_err(|e| Error::Config(format!("bad generating vector entry {l:?}: {e}")))
        })
        .collect()
}

/// `R` independent uniform shifts in `[0, 1)^s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSet {
    shifts: Vec<Vec<f64>>,
}

impl ShiftSet {
    pub fn new(shifts: Vec<Vec<f64>>) -> Result<Self> {
        if shifts.len() < 2 {
            return Err(Error::Config(format!("at least 2 random shifts are needed, got {}", shifts.len())));
        }
        if shifts.iter().flatten().any(|v| !(0.0..1.0).contains(v)) {
            return Err(Error::Config("shift coordinates must lie in [0, 1)".into()));
        }
        Ok(Self { shifts })
    }

    pub fn random<R: Rng>(count: usize, dimension: usize, rng: &mut R) -> Result<Self> {
        Self::new(
            (0..count)
                .map(|_| (0..dimension).map(|_| rng.random::<f64>()).collect())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    pub fn shift(&self, i: usize) -> &[f64] {
        &self.shifts[i]
    }
}

/// Shifted point `frac(φ(n)·z + Δ)`.
pub fn lattice_point(rule: &LatticeRule, n: u64, shift: &[f64]) -> Vec<f64> {
    rule.point(n)
        .into_iter()
        .zip(shift)
        .map(|(x, d)| {
            let y = x + d;
            if y >= 1.0 {
                y - 1.0
            } else {
                y
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_and_hand_example() {
        let r = LatticeRule::new(vec![1, 3]).unwrap();
        assert_eq!(lattice_point(&r, 0, &[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(radical_inverse(1), 0.5);
        assert_eq!(r.point(1), vec![0.5, 0.5]);
        assert_eq!(radical_inverse(6), 0.375);
    }

    #[test]
    fn prefix_is_the_classical_lattice() {
        let r = LatticeRule::default_for(5).unwrap();
        let n = 64u64;
        let mut pts: Vec<Vec<u64>> = (0..n)
            .map(|k| r.point(k).iter().map(|x| (x * n as f64).round() as u64).collect())
            .collect();
        pts.sort();
        let mut expected: Vec<Vec<u64>> = (0..n)
            .map(|k| r.generating_vector().iter().map(|z| (k * z) % n).collect())
            .collect();
        expected.sort();
        assert_eq!(pts, expected);
    }

    #[test]
    fn shipped_vector_is_usable() {
        let r = LatticeRule::default_for(250).unwrap();
        assert!(r.generating_vector().iter().skip(1).all(|z| z % 2 == 1 && *z < 1 << DEFAULT_LOG2_N));
        assert!(LatticeRule::default_for(251).is_err());
    }

    #[test]
    fn cbc_beats_random_vector() {
        let cbc = LatticeRule::cbc(8, 10, 32, 7);
        let naive = LatticeRule::new(vec![1, 3, 5, 7, 9, 11, 13, 15]).unwrap();
        assert!(cbc.worst_case_error_sq(10) < naive.worst_case_error_sq(10));
    }

    #[test]
    fn shifts_validated() {
        assert!(ShiftSet::new(vec![vec![0.1]]).is_err());
        assert!(ShiftSet::new(vec![vec![0.1], vec![1.0]]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = ShiftSet::random(10, 3, &mut rng).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.shift(9).len(), 3);
    }
}
