//! Counter-based deterministic random streams.
//!
//! A [`KeyedStream`] is addressed by a master seed plus a list of integer
//! keys (agent id, phase tag, draw index, ...). The output depends only on
//! that address and the position within the stream, so work can be split
//! across threads in any order and still reproduce bit for bit.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Phase tags used to separate independent uses of the same seed.
pub mod tag {
    pub const POPULATION: u64 = 0x706f_7075;
    pub const ARMS: u64 = 0x6172_6d73;
    pub const EXPOSURE: u64 = 0x6578_706f;
    pub const VOI: u64 = 0x766f_6921;
    pub const VERIFY: u64 = 0x7665_7269;
}

/// FNV-1a hash, for turning labels into stream keys.
pub fn label(name: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in name.as_bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

#[derive(Clone, Debug)]
pub struct KeyedStream {
    key: u64,
    counter: u64,
}

impl KeyedStream {
    pub fn new(seed: u64, keys: &[u64]) -> Self {
        let mut key = mix64(seed ^ 0xD134_2543_DE82_EF95);
        for &k in keys {
            key = mix64(key ^ mix64(k.wrapping_add(GOLDEN)));
        }
        Self { key, counter: 0 }
    }

    /// Child stream addressed by one more key.
    pub fn derive(&self, k: u64) -> Self {
        Self {
            key: mix64(self.key ^ mix64(k.wrapping_add(GOLDEN))),
            counter: 0,
        }
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }
}

impl RngCore for KeyedStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(GOLDEN);
        mix64(self.key ^ self.counter)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_address_same_output() {
        let mut a = KeyedStream::new(7, &[1, 2, 3]);
        let mut b = KeyedStream::new(7, &[1, 2, 3]);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = KeyedStream::new(7, &[1, 2, 4]);
        let mut d = KeyedStream::new(7, &[1, 2, 3]);
        assert_ne!(c.next_u64(), d.next_u64());
    }

    #[test]
    fn derive_matches_extended_key() {
        let mut a = KeyedStream::new(11, &[5]).derive(9);
        let mut b = KeyedStream::new(11, &[5, 9]);
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn uniform_moments() {
        let mut s = KeyedStream::new(1, &[]);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.uniform()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005);
        assert!((var - 1.0 / 12.0).abs() < 0.002);
    }

    #[test]
    fn normal_moments() {
        let mut s = KeyedStream::new(2, &[tag::VOI]);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.01);
    }

    #[test]
    fn below_is_in_range_and_roughly_uniform() {
        let mut s = KeyedStream::new(3, &[]);
        let mut counts = [0usize; 5];
        for _ in 0..50_000 {
            counts[s.below(5) as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 400.0);
        }
    }
}
