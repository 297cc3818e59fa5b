//! Dense two-phase tableau simplex with Bland's rule.

use alloc::{vec, vec::Vec};

use super::LpStatus;

/// Pivot and feasibility threshold.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min c.x` subject to the rows and `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row duals `y` with `c - y A >= 0` at optimality, in the rows' original
    /// orientation (nonpositive for `<=` rows of a minimization).
    pub duals: Vec<f64>,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Reduced costs, with the negated objective value in the last entry.
    obj: Vec<f64>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    row.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            self.obj.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
        }
        self.basis[r] = c;
    }

    fn set_costs(&mut self, cost: &[f64]) {
        self.obj = vec![0.0; self.width + 1];
        self.obj[..cost.len()].copy_from_slice(cost);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = if b < cost.len() { cost[b] } else { 0.0 };
            if cb != 0.0 {
                for j in 0..=self.width {
                    self.obj[j] -= cb * self.rows[i][j];
                }
            }
        }
    }

    /// Runs Bland's rule over columns `0..eligible`. Returns false when unbounded.
    fn optimize(&mut self, eligible: usize) -> bool {
        loop {
            let Some(enter) = (0..eligible).find(|&j| self.obj[j] < -EPS) else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[enter];
                if a > EPS {
                    let ratio = row[self.width] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - EPS || (ratio <= lr + EPS && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, enter),
                None => return false,
            }
        }
    }
}

pub fn solve(lp: &LinearProgram) -> SimplexResult {
    let n = lp.cost.len();
    let m = lp.rows.len();

    // Normalize to nonnegative right-hand sides.
    let mut signs = vec![1.0; m];
    let mut rels = Vec::with_capacity(m);
    for (i, row) in lp.rows.iter().enumerate() {
        let rel = if row.rhs < 0.0 {
            signs[i] = -1.0;
            match row.relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            }
        } else {
            row.relation
        };
        rels.push(rel);
    }

    // Column layout: structural | one slack/surplus per inequality | one artificial per row.
    let mut aux_col = vec![None; m];
    let mut next = n;
    for (i, rel) in rels.iter().enumerate() {
        if *rel != Relation::Eq {
            aux_col[i] = Some(next);
            next += 1;
        }
    }
    let art_start = next;
    let width = art_start + m;

    let mut rows = vec![vec![0.0; width + 1]; m];
    let mut basis = vec![0; m];
    // column whose tableau image is B^{-1} e_i, used to read duals
    let mut identity_col = vec![0; m];
    for (i, row) in lp.rows.iter().enumerate() {
        let s = signs[i];
        for (j, a) in row.coeffs.iter().enumerate() {
            rows[i][j] = s * a;
        }
        rows[i][width] = s * row.rhs;
        rows[i][art_start + i] = 1.0;
        match (rels[i], aux_col[i]) {
            (Relation::Le, Some(c)) => {
                rows[i][c] = 1.0;
                basis[i] = c;
                identity_col[i] = c;
            }
            (Relation::Ge, Some(c)) => {
                rows[i][c] = -1.0;
                basis[i] = art_start + i;
                identity_col[i] = art_start + i;
            }
            _ => {
                basis[i] = art_start + i;
                identity_col[i] = art_start + i;
            }
        }
    }
    let mut tab = Tableau { rows, basis, obj: Vec::new(), width };

    // Phase 1: minimize the sum of artificials that start in the basis.
    let needs_phase1 = tab.basis.iter().any(|&b| b >= art_start);
    if needs_phase1 {
        let mut cost1 = vec![0.0; width];
        for &b in &tab.basis {
            if b >= art_start {
                cost1[b] = 1.0;
            }
        }
        tab.set_costs(&cost1);
        tab.optimize(art_start);
        let infeasibility = -tab.obj[width];
        let scale = 1.0 + lp.rows.iter().fold(0.0f64, |a, r| a.max(r.rhs.abs()));
        if infeasibility > EPS * scale {
            return SimplexResult { status: LpStatus::Infeasible, x: vec![0.0; n], objective: f64::NAN, duals: vec![0.0; m] };
        }
        // drive zero-level artificials out of the basis where possible
        for r in 0..m {
            if tab.basis[r] >= art_start {
                if let Some(c) = (0..art_start).find(|&j| tab.rows[r][j].abs() > EPS) {
                    tab.pivot(r, c);
                }
            }
        }
    }

    // Phase 2
    tab.set_costs(&lp.cost);
    if !tab.optimize(art_start) {
        return SimplexResult { status: LpStatus::Unbounded, x: vec![0.0; n], objective: f64::NEG_INFINITY, duals: vec![0.0; m] };
    }

    let mut x = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rows[i][width];
        }
    }
    let objective = lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
    let duals = (0..m).map(|i| -tab.obj[identity_col[i]] * signs[i]).collect();
    SimplexResult { status: LpStatus::Optimal, x, objective, duals }
}
