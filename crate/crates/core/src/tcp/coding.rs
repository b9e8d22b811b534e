use serde::{Deserialize, Serialize};

use super::TcpError;

/// Coefficients live in the prime field of this size.
pub const FIELD_SIZE: u32 = 8191;

/// Arithmetic in GF(8191).
pub mod gf {
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    use super::FIELD_SIZE as Q;

    pub fn add(a: u32, b: u32) -> u32 {
        (a + b) % Q
    }

    pub fn sub(a: u32, b: u32) -> u32 {
        (a + Q - b) % Q
    }

    pub fn mul(a: u32, b: u32) -> u32 {
        a * b % Q
    }

    pub fn inv(a: u32) -> u32 {
        debug_assert!(!a.is_multiple_of(Q));
        let (mut base, mut e, mut acc) = (a % Q, Q - 2, 1u32);
        while e > 0 {
            if e & 1 == 1 {
                acc = mul(acc, base);
            }
            base = mul(base, base);
            e >>= 1;
        }
        acc
    }

    pub fn random_vector(len: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
        (0..len).map(|_| rng.random_range(0..Q)).collect()
    }

    /// Row rank by Gaussian elimination, stopping early once `target` is reached.
    pub fn rank(rows: &[Vec<u32>], target: usize) -> usize {
        let mut basis: Vec<(usize, Vec<u32>)> = Vec::new();
        for row in rows {
            if basis.len() >= target {
                break;
            }
            let mut v = row.clone();
            for (piv, b) in &basis {
                let f = v[*piv];
                if f != 0 {
                    for (x, y) in v.iter_mut().zip(b) {
                        *x = sub(*x, mul(f, *y));
                    }
                }
            }
            if let Some(piv) = v.iter().position(|&x| x != 0) {
                let s = inv(v[piv]);
                for x in v.iter_mut() {
                    *x = mul(*x, s);
                }
                basis.push((piv, v));
            }
        }
        basis.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMode {
    /// G received coded packets recover up to G missing data packets.
    #[default]
    Abstract,
    /// Rank test on coefficient vectors over GF(8191).
    Field,
}

/// Coded packets received for a block.
#[derive(Debug, Clone, Copy)]
pub enum CodedReceipt<'a> {
    Count(u32),
    /// One coefficient vector of length W per coded packet.
    Vectors(&'a [Vec<u32>]),
}

/// Whether the block's W data packets can be reconstructed from the data
/// packets that arrived (`received[k]` for packet k) plus the coded ones.
pub fn decode_check(received: &[bool], coded: CodedReceipt<'_>) -> Result<bool, TcpError> {
    let missing: Vec<usize> = received.iter().enumerate().filter(|(_, &r)| !r).map(|(k, _)| k).collect();
    match coded {
        CodedReceipt::Count(g) => Ok(missing.len() <= g as usize),
        CodedReceipt::Vectors(vs) => {
            if let Some(v) = vs.iter().find(|v| v.len() != received.len()) {
                return Err(TcpError::Domain(format!(
                    "coefficient vector of length {} for a block of {}",
                    v.len(),
                    received.len()
                )));
            }
            if missing.is_empty() {
                return Ok(true);
            }
            if vs.len() < missing.len() {
                return Ok(false);
            }
            // known data packets cancel out; only the missing columns matter
            let reduced: Vec<Vec<u32>> = vs.iter().map(|v| missing.iter().map(|&k| v[k]).collect()).collect();
            Ok(gf::rank(&reduced, missing.len()) == missing.len())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{stream_id, stream_rng, StreamKind};
    use rand::Rng;

    #[test]
    fn field_basics() {
        assert_eq!(gf::mul(gf::inv(5), 5), 1);
        assert_eq!(gf::inv(8190), 8190);
        assert_eq!(gf::sub(3, 5), 8189);
        assert_eq!(gf::rank(&[vec![1, 2], vec![2, 4]], 2), 1);
        assert_eq!(gf::rank(&[vec![1, 2], vec![0, 4]], 2), 2);
    }

    #[test]
    fn abstract_decoding() {
        assert!(decode_check(&[true; 5], CodedReceipt::Count(0)).unwrap());
        // four packets, only P1 arrives, three coded packets make up the rest
        let got = [true, false, false, false];
        assert!(decode_check(&got, CodedReceipt::Count(3)).unwrap());
        assert!(!decode_check(&got, CodedReceipt::Count(2)).unwrap());
    }

    #[test]
    fn field_decoding() {
        let got = [true, false, false, false];
        let mut rng = stream_rng(3, stream_id(StreamKind::Coding, 0));
        let vs: Vec<Vec<u32>> = (0..3).map(|_| gf::random_vector(4, &mut rng)).collect();
        assert!(decode_check(&got, CodedReceipt::Vectors(&vs)).unwrap());
        let dup = vec![vs[0].clone(), vs[0].clone(), vs[1].clone()];
        assert!(!decode_check(&got, CodedReceipt::Vectors(&dup)).unwrap());
        assert!(decode_check(&got, CodedReceipt::Vectors(&[vec![1, 2]])).is_err());
    }

    #[test]
    fn modes_agree_on_random_trials() {
        let mut rng = stream_rng(9, stream_id(StreamKind::Coding, 1));
        let trials = 10_000;
        let mut disagree = 0;
        for _ in 0..trials {
            let w = rng.random_range(1..=20usize);
            let got: Vec<bool> = (0..w).map(|_| rng.random_bool(0.6)).collect();
            let g = rng.random_range(0..=w as u32);
            let vs: Vec<Vec<u32>> = (0..g).map(|_| gf::random_vector(w, &mut rng)).collect();
            let a = decode_check(&got, CodedReceipt::Count(g)).unwrap();
            let f = decode_check(&got, CodedReceipt::Vectors(&vs)).unwrap();
            // the field can only fall short of the abstract rule, never exceed it
            assert!(!f || a);
            if a != f {
                disagree += 1;
            }
        }
        assert!((disagree as f64) < 0.01 * trials as f64, "{disagree}");
    }
}
