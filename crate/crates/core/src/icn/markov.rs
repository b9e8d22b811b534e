use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::IcnError;
use crate::sim::NodeId;

/// How a mobile moves among its gateways, one step per super slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MobilityModel {
    /// Deterministic round trip through the contact list.
    Shuttle,
    /// Next gateway with `forward`, stay with `stay`, previous with `back`.
    Cyclic { forward: f64, stay: f64, back: f64 },
    Matrix { rows: Vec<Vec<f64>> },
}

impl MobilityModel {
    pub fn matrix(&self, n: usize) -> Vec<Vec<f64>> {
        match self {
            MobilityModel::Shuttle => (0..n)
                .map(|i| {
                    let mut r = vec![0.0; n];
                    r[(i + 1) % n] = 1.0;
                    r
                })
                .collect(),
            MobilityModel::Cyclic { forward, stay, back } => (0..n)
                .map(|i| {
                    let mut r = vec![0.0; n];
                    r[i] += stay;
                    r[(i + 1) % n] += forward;
                    r[(i + n - 1) % n] += back;
                    r
                })
                .collect(),
            MobilityModel::Matrix { rows } => rows.clone(),
        }
    }
}

/// A mobile's Markov chain over its gateway contact list.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMobile {
    pub gateways: Vec<NodeId>,
    pub matrix: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
    pub current: usize,
}

impl MarkovMobile {
    /// Rows must be distributions and the chain irreducible. Periodic chains
    /// such as the shuttle are accepted; their π is still unique.
    pub fn new(gateways: Vec<NodeId>, matrix: Vec<Vec<f64>>) -> Result<Self, IcnError> {
        let n = gateways.len();
        if n == 0 {
            return Err(IcnError::Mobility("mobile has no gateways".into()));
        }
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
            return Err(IcnError::Mobility(format!("transition matrix must be {n}x{n}")));
        }
        for (i, r) in matrix.iter().enumerate() {
            if r.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(IcnError::Mobility(format!("row {i} has an entry outside [0,1]")));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(IcnError::Mobility(format!("row {i} sums to {s}")));
            }
        }
        if !irreducible(&matrix) {
            return Err(IcnError::Mobility("transition matrix is not irreducible".into()));
        }
        let stationary = stationary_distribution(&matrix);
        Ok(Self { gateways, matrix, stationary, current: 0 })
    }

    pub fn gateway(&self) -> NodeId {
        self.gateways[self.current]
    }

    /// Sample the next gateway from the current row.
    pub fn step(&mut self, rng: &mut ChaCha8Rng) -> NodeId {
        let u: f64 = rng.random();
        let row = &self.matrix[self.current];
        let mut acc = 0.0;
        let mut next = row.iter().rposition(|&p| p > 0.0).unwrap_or(self.current);
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = j;
                break;
            }
        }
        self.current = next;
        self.gateway()
    }
}

fn irreducible(p: &[Vec<f64>]) -> bool {
    let n = p.len();
    (0..n).all(|start| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if p[i][j] > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    })
}

/// Solve π(P − I) = 0 with Σπ = 1 by Gaussian elimination.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    // rows of A are equations; A = (P − I)ᵀ with the last row replaced by ones
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[n - 1][j] = 1.0;
    }
    a[n - 1][n] = 1.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap_or(col);
        a.swap(col, piv);
        let d = a[col][col];
        if d.abs() < 1e-300 {
            continue;
        }
        for k in col..=n {
            a[col][k] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for k in col..=n {
                        a[r][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    (0..n).map(|i| a[i][n]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{stream_rng, StreamKind, stream_id};

    fn gws(n: u32) -> Vec<NodeId> {
        (0..n).map(NodeId).collect()
    }

    #[test]
    fn shuttle_alternates() {
        let mut m = MarkovMobile::new(gws(2), MobilityModel::Shuttle.matrix(2)).unwrap();
        let mut rng = stream_rng(1, stream_id(StreamKind::Mobility, 0));
        let seq: Vec<_> = (0..4).map(|_| m.step(&mut rng).0).collect();
        assert_eq!(seq, vec![1, 0, 1, 0]);
        assert!((m.stationary[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cyclic_chain_frequencies() {
        let model = MobilityModel::Cyclic { forward: 0.8, stay: 0.1, back: 0.1 };
        let mut m = MarkovMobile::new(gws(3), model.matrix(3)).unwrap();
        for p in &m.stationary {
            assert!((p - 1.0 / 3.0).abs() < 1e-9);
        }
        let mut rng = stream_rng(7, stream_id(StreamKind::Mobility, 0));
        let (mut fwd, mut stay, mut back) = (0usize, 0usize, 0usize);
        let steps = 100_000;
        let mut visits = [0usize; 3];
        for _ in 0..steps {
            let before = m.current;
            m.step(&mut rng);
            visits[m.current] += 1;
            match (m.current + 3 - before) % 3 {
                1 => fwd += 1,
                0 => stay += 1,
                _ => back += 1,
            }
        }
        let f = |c: usize| c as f64 / steps as f64;
        assert!((f(fwd) - 0.8).abs() < 0.02);
        assert!((f(stay) - 0.1).abs() < 0.02);
        assert!((f(back) - 0.1).abs() < 0.02);
        for v in visits {
            assert!((f(v) - 1.0 / 3.0).abs() < 0.02);
        }
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(MarkovMobile::new(gws(2), vec![vec![0.5, 0.4], vec![1.0, 0.0]]).is_err());
        assert!(MarkovMobile::new(gws(2), vec![vec![1.0, 0.0], vec![0.0, 1.0]]).is_err());
    }
}
