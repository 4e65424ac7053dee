//! DMD modulation patterns.
//!
//! Hadamard patterns come from the Sylvester construction: row `i` of the
//! order-`N²` matrix is mapped to `{0, 1}` by `(h + 1) / 2` and reshaped
//! row-major to `N`x`N`. Rows are kept in natural Sylvester order, including
//! the all-ones row 0.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpiError};
use crate::stream::{Domain, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Hadamard,
    Random,
}

/// `count` binary masks of `side`x`side` pixels, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    side: usize,
    count: usize,
    kind: PatternKind,
    seed: Option<u64>,
    masks: Vec<u8>,
}

impl PatternSet {
    /// Builds a set from explicit masks. Every value must be 0 or 1.
    pub fn from_masks(side: usize, masks: Vec<Vec<u8>>) -> Result<Self> {
        let pixels = side * side;
        let count = masks.len();
        let mut flat = Vec::with_capacity(count * pixels);
        for (i, m) in masks.into_iter().enumerate() {
            if m.len() != pixels {
                return Err(SpiError::DimensionMismatch {
                    expected: format!("{pixels} pixels"),
                    actual: format!("{} pixels in pattern {i}", m.len()),
                });
            }
            if m.iter().any(|&v| v > 1) {
                return Err(SpiError::InvalidParameter(format!(
                    "pattern {i} is not binary"
                )));
            }
            flat.extend(m);
        }
        Ok(PatternSet {
            side,
            count,
            kind: PatternKind::Random,
            seed: None,
            masks: flat,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> usize {
        self.side * self.side
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn pattern(&self, i: usize) -> &[u8] {
        let n = self.pixels();
        &self.masks[i * n..(i + 1) * n]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u8]> {
        self.masks.chunks_exact(self.pixels().max(1))
    }

    /// True for a complete Sylvester set, whose all-ones row couples the
    /// DC term into pixel 0.
    pub fn is_full_hadamard(&self) -> bool {
        self.kind == PatternKind::Hadamard && self.count == self.pixels()
    }

    /// Ensemble-average pattern `<P(x)>`, accumulated in ascending pattern order.
    pub fn mean_pattern(&self) -> Vec<f64> {
        let n = self.pixels();
        let mut acc = vec![0.0; n];
        for p in self.iter() {
            for (a, &v) in acc.iter_mut().zip(p) {
                *a += v as f64;
            }
        }
        let k = self.count as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }
}

fn check_power_of_two(n: usize) -> Result<u32> {
    if n == 0 || !n.is_power_of_two() {
        return Err(SpiError::NotPowerOfTwo(n));
    }
    Ok(n.trailing_zeros())
}

/// Sign of `H[row][col]` in the Sylvester matrix: `(-1)^popcount(row & col)`.
#[inline]
pub fn sylvester_entry(row: usize, col: usize) -> i8 {
    if (row & col).count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Sylvester Hadamard matrix of the given order, built by the recursion
/// `H_2n = [[H, H], [H, -H]]`.
pub fn sylvester_hadamard(order: usize) -> Result<Vec<Vec<i8>>> {
    check_power_of_two(order)?;
    let mut h = vec![vec![1i8]];
    while h.len() < order {
        let n = h.len();
        let mut next = vec![vec![0i8; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                let v = h[i][j];
                next[i][j] = v;
                next[i][j + n] = v;
                next[i + n][j] = v;
                next[i + n][j + n] = -v;
            }
        }
        h = next;
    }
    Ok(h)
}

/// Complete binary Hadamard set for an `side`x`side` DMD area (`side²` patterns).
pub fn hadamard_pattern_set(side: usize) -> Result<PatternSet> {
    check_power_of_two(side)?;
    let n = side * side;
    // The bit-parity form equals the recursive construction (checked in tests)
    // and avoids materialising an n x n i8 matrix.
    let mut masks = vec![0u8; n * n];
    for (i, row) in masks.chunks_exact_mut(n).enumerate() {
        for (j, m) in row.iter_mut().enumerate() {
            *m = ((sylvester_entry(i, j) + 1) / 2) as u8;
        }
    }
    Ok(PatternSet {
        side,
        count: n,
        kind: PatternKind::Hadamard,
        seed: None,
        masks,
    })
}

/// I.i.d. Bernoulli(1/2) masks. Pattern `i` reads stream `i` of the
/// random-pattern domain, one word per pixel.
pub fn random_pattern_set(side: usize, count: usize, seed: u64) -> Result<PatternSet> {
    if side == 0 || count == 0 {
        return Err(SpiError::InvalidParameter(format!(
            "random patterns need side >= 1 and count >= 1, got side={side} count={count}"
        )));
    }
    let n = side * side;
    let mut masks = vec![0u8; n * count];
    for (i, row) in masks.chunks_exact_mut(n).enumerate() {
        let mut s = StreamKey::new(seed, Domain::RandomPatterns, i as u64).open();
        for m in row.iter_mut() {
            *m = s.next_bit() as u8;
        }
    }
    Ok(PatternSet {
        side,
        count,
        kind: PatternKind::Random,
        seed: Some(seed),
        masks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matmul_t(h: &[Vec<i8>]) -> Vec<Vec<i64>> {
        let n = h.len();
        let mut out = vec![vec![0i64; n]; n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out[i][j] += h[i][k] as i64 * h[j][k] as i64;
                }
            }
        }
        out
    }

    #[test]
    fn sylvester_small_orders() {
        assert_eq!(sylvester_hadamard(1).unwrap(), vec![vec![1]]);
        assert_eq!(
            sylvester_hadamard(2).unwrap(),
            vec![vec![1, 1], vec![1, -1]]
        );
        let h4 = sylvester_hadamard(4).unwrap();
        let g = matmul_t(&h4);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(g[i][j], if i == j { 4 } else { 0 });
            }
        }
        assert!(matches!(
            sylvester_hadamard(6),
            Err(SpiError::NotPowerOfTwo(6))
        ));
        assert!(sylvester_hadamard(0).is_err());
    }

    #[test]
    fn parity_form_matches_recursion() {
        let h = sylvester_hadamard(64).unwrap();
        for (i, row) in h.iter().enumerate() {
            assert_eq!(row[0], 1);
            assert_eq!(h[0][i], 1);
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, sylvester_entry(i, j));
            }
        }
    }

    #[test]
    fn hadamard_set_examples() {
        let set = hadamard_pattern_set(2).unwrap();
        assert_eq!(set.count(), 4);
        assert_eq!(set.pattern(0), &[1, 1, 1, 1]);
        assert_eq!(set.pattern(1), &[1, 0, 1, 0]);
        assert!(set.is_full_hadamard());
        assert!(matches!(
            hadamard_pattern_set(3),
            Err(SpiError::NotPowerOfTwo(3))
        ));

        let big = hadamard_pattern_set(64).unwrap();
        assert_eq!(big.count(), 4096);
        assert_eq!(big.pattern(4095).len(), 64 * 64);
    }

    #[test]
    fn binary_map_inverts_to_sylvester_rows() {
        for side in [2, 4, 8] {
            let set = hadamard_pattern_set(side).unwrap();
            let h = sylvester_hadamard(side * side).unwrap();
            for (p, row) in set.iter().zip(&h) {
                for (&b, &s) in p.iter().zip(row) {
                    assert_eq!(2 * b as i8 - 1, s);
                }
            }
        }
    }

    #[test]
    fn mean_pattern_is_half_off_dc() {
        let set = hadamard_pattern_set(8).unwrap();
        let mean = set.mean_pattern();
        assert_eq!(mean[0], 1.0);
        assert!(mean[1..].iter().all(|&m| m == 0.5));
    }

    #[test]
    fn centered_patterns_orthogonal_off_dc() {
        for side in [2usize, 4, 8] {
            let set = hadamard_pattern_set(side).unwrap();
            let mean = set.mean_pattern();
            let n = side * side;
            for x in 1..n {
                for y in 1..n {
                    let s: f64 = set
                        .iter()
                        .map(|p| (p[x] as f64 - mean[x]) * (p[y] as f64 - mean[y]))
                        .sum();
                    let expected = if x == y { (n as f64) / 4.0 } else { 0.0 };
                    assert_eq!(s, expected, "side {side} x {x} y {y}");
                }
            }
        }
    }

    #[test]
    fn random_set_determinism_and_seed_sensitivity() {
        let a = random_pattern_set(8, 4, 11).unwrap();
        let b = random_pattern_set(8, 4, 11).unwrap();
        let c = random_pattern_set(8, 4, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.seed(), Some(11));
        assert!(random_pattern_set(0, 1, 0).is_err());
        assert!(random_pattern_set(1, 0, 0).is_err());
    }

    #[test]
    fn random_set_balanced() {
        let set = random_pattern_set(64, 4096, 3).unwrap();
        let ones: u64 = set.iter().flatten().map(|&v| v as u64).sum();
        let mean = ones as f64 / (4096.0 * 4096.0);
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }
}
