//! Dense two-phase simplex for the small programs used as reference oracles.

use thiserror::Error;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LpError {
    #[error("program is infeasible")]
    Infeasible,
    #[error("program is unbounded")]
    Unbounded,
    #[error("row has {got} coefficients, expected {expected}")]
    Shape { got: usize, expected: usize },
}

/// minimize c·x subject to rows and x ≥ 0.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    vars: usize,
    cost: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LinearProgram {
    pub fn new(vars: usize) -> Self {
        Self { vars, cost: vec![0.0; vars], rows: Vec::new() }
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn set_cost(&mut self, cost: Vec<f64>) -> Result<(), LpError> {
        if cost.len() != self.vars {
            return Err(LpError::Shape { got: cost.len(), expected: self.vars });
        }
        self.cost = cost;
        Ok(())
    }

    pub fn constrain(&mut self, coef: Vec<f64>, rel: Relation, rhs: f64) -> Result<(), LpError> {
        if coef.len() != self.vars {
            return Err(LpError::Shape { got: coef.len(), expected: self.vars });
        }
        self.rows.push((coef, rel, rhs));
        Ok(())
    }

    /// Sparse helper: `terms` are (variable, coefficient) pairs.
    pub fn constrain_terms(&mut self, terms: &[(usize, f64)], rel: Relation, rhs: f64) {
        let mut coef = vec![0.0; self.vars];
        for &(v, c) in terms {
            coef[v] += c;
        }
        self.rows.push((coef, rel, rhs));
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self).run()
    }
}

struct Tableau {
    // m constraint rows, each with `cols` coefficients followed by the rhs
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    vars: usize,
    artificial_from: usize,
    cost: Vec<f64>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let mut slack = 0;
        let mut art = 0;
        for (_, rel, rhs) in &lp.rows {
            let rel = effective(*rel, *rhs);
            match rel {
                Relation::Le => slack += 1,
                Relation::Ge => {
                    slack += 1;
                    art += 1
                }
                Relation::Eq => art += 1,
            }
        }
        let cols = lp.vars + slack + art;
        let artificial_from = lp.vars + slack;
        let mut a = vec![vec![0.0; cols + 1]; m];
        let mut basis = vec![0; m];
        let (mut s, mut r) = (lp.vars, artificial_from);
        for (i, (coef, rel, rhs)) in lp.rows.iter().enumerate() {
            let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
            for (j, c) in coef.iter().enumerate() {
                a[i][j] = sign * c;
            }
            a[i][cols] = sign * rhs;
            match effective(*rel, *rhs) {
                Relation::Le => {
                    a[i][s] = 1.0;
                    basis[i] = s;
                    s += 1;
                }
                Relation::Ge => {
                    a[i][s] = -1.0;
                    s += 1;
                    a[i][r] = 1.0;
                    basis[i] = r;
                    r += 1;
                }
                Relation::Eq => {
                    a[i][r] = 1.0;
                    basis[i] = r;
                    r += 1;
                }
            }
        }
        Self { a, basis, cols, vars: lp.vars, artificial_from, cost: lp.cost.clone() }
    }

    fn run(mut self) -> Result<LpSolution, LpError> {
        if self.artificial_from < self.cols {
            let mut phase1 = vec![0.0; self.cols];
            for c in phase1.iter_mut().skip(self.artificial_from) {
                *c = 1.0;
            }
            self.optimize(&phase1, self.cols)?;
            if self.value(&phase1) > 1e-7 {
                return Err(LpError::Infeasible);
            }
            self.evict_artificials();
        }
        let mut cost = vec![0.0; self.cols];
        cost[..self.vars].copy_from_slice(&self.cost);
        self.optimize(&cost, self.artificial_from)?;
        let mut x = vec![0.0; self.vars];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.vars {
                x[b] = self.a[i][self.cols].max(0.0);
            }
        }
        let objective = x.iter().zip(&self.cost).map(|(x, c)| x * c).sum();
        Ok(LpSolution { x, objective })
    }

    fn value(&self, cost: &[f64]) -> f64 {
        self.basis
            .iter()
            .enumerate()
            .map(|(i, &b)| cost[b] * self.a[i][self.cols])
            .sum()
    }

    /// Bland's rule: lowest-index improving column, lowest-index leaving basic variable.
    fn optimize(&mut self, cost: &[f64], usable: usize) -> Result<(), LpError> {
        loop {
            let mut entering = None;
            for j in 0..usable {
                if self.basis.contains(&j) {
                    continue;
                }
                let reduced = cost[j]
                    - self
                        .basis
                        .iter()
                        .enumerate()
                        .map(|(i, &b)| cost[b] * self.a[i][j])
                        .sum::<f64>();
                if reduced < -EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.a.len() {
                let aij = self.a[i][j];
                if aij > EPS {
                    let ratio = self.a[i][self.cols] / aij;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - EPS
                                || (ratio <= best + EPS && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let Some((i, _)) = leave else { return Err(LpError::Unbounded) };
            self.pivot(i, j);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[row].clone();
        for (i, r) in self.a.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f.abs() > 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[row] = col;
    }

    fn evict_artificials(&mut self) {
        let mut i = 0;
        while i < self.a.len() {
            if self.basis[i] >= self.artificial_from {
                match (0..self.artificial_from).find(|&j| self.a[i][j].abs() > EPS) {
                    Some(j) => self.pivot(i, j),
                    None => {
                        // redundant row
                        self.a.remove(i);
                        self.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }
}

fn effective(rel: Relation, rhs: f64) -> Relation {
    if rhs >= 0.0 {
        rel
    } else {
        match rel {
            Relation::Le => Relation::Ge,
            Relation::Ge => Relation::Le,
            Relation::Eq => Relation::Eq,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn textbook_max() {
        // max 3x + 5y st x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.set_cost(vec![-3.0, -5.0]).unwrap();
        lp.constrain(vec![1.0, 0.0], Relation::Le, 4.0).unwrap();
        lp.constrain(vec![0.0, 2.0], Relation::Le, 12.0).unwrap();
        lp.constrain(vec![3.0, 2.0], Relation::Le, 18.0).unwrap();
        let s = lp.solve().unwrap();
        assert_abs_diff_eq!(s.x[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[1], 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.objective, -36.0, epsilon = 1e-9);
    }

    #[test]
    fn equality_and_ge() {
        // min x + y st x + y = 3, x ≥ 1, y ≥ 0.5
        let mut lp = LinearProgram::new(2);
        lp.set_cost(vec![1.0, 2.0]).unwrap();
        lp.constrain(vec![1.0, 1.0], Relation::Eq, 3.0).unwrap();
        lp.constrain(vec![1.0, 0.0], Relation::Ge, 1.0).unwrap();
        lp.constrain(vec![0.0, 1.0], Relation::Ge, 0.5).unwrap();
        let s = lp.solve().unwrap();
        assert_abs_diff_eq!(s.x[0], 2.5, epsilon = 1e-9);
        assert_abs_diff_eq!(s.objective, 3.5, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.constrain(vec![1.0], Relation::Le, 1.0).unwrap();
        lp.constrain(vec![1.0], Relation::Ge, 2.0).unwrap();
        assert_eq!(lp.solve(), Err(LpError::Infeasible));

        let mut lp = LinearProgram::new(1);
        lp.set_cost(vec![-1.0]).unwrap();
        lp.constrain(vec![1.0], Relation::Ge, 2.0).unwrap();
        assert_eq!(lp.solve(), Err(LpError::Unbounded));
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.set_cost(vec![1.0, 1.0]).unwrap();
        lp.constrain(vec![1.0, 1.0], Relation::Eq, 2.0).unwrap();
        lp.constrain(vec![2.0, 2.0], Relation::Eq, 4.0).unwrap();
        let s = lp.solve().unwrap();
        assert_abs_diff_eq!(s.objective, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn negative_rhs() {
        // -x ≤ -3  ⇔ x ≥ 3
        let mut lp = LinearProgram::new(1);
        lp.set_cost(vec![1.0]).unwrap();
        lp.constrain(vec![-1.0], Relation::Le, -3.0).unwrap();
        assert_abs_diff_eq!(lp.solve().unwrap().x[0], 3.0, epsilon = 1e-9);
    }
}
