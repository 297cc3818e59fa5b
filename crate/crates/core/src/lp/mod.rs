//! Optimal stationary benchmark.
//!
//! Each system's performance region is the convex hull of its per-action
//! performance vectors `(f_hat, g_hat)`. The best stationary performance is
//! therefore the linear program
//!
//! ```text
//! min   sum_n sum_a theta[n][a] f_hat[n][a]
//! s.t.  sum_n sum_a theta[n][a] g_hat[n][a][l] <= d_l      for every l
//!       sum_a theta[n][a] = 1,  theta >= 0                  for every n
//! ```
//!
//! over hull weights `theta`. `>=` constraints are negated into `<=` rows.
//! A brute-force grid search over the same weights serves as an independent
//! oracle for small instances.

mod simplex;

use alloc::{format, vec, vec::Vec};

pub use simplex::{LinearProgram, Relation, Row, SimplexResult};

use crate::model::{PerformanceVector, RenewalSystemModel};
use crate::{Error, Result};

/// Largest number of grid points [`brute_force_oracle`] will visit.
pub const GRID_LIMIT: f64 = 1e7;

/// Feasibility slack for grid points, absorbing summation rounding only.
const GRID_FEAS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintDirection {
    Le,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryLp {
    pub systems: Vec<Vec<PerformanceVector>>,
    pub bounds: Vec<f64>,
    pub directions: Vec<ConstraintDirection>,
}

impl StationaryLp {
    pub fn new(
        systems: Vec<Vec<PerformanceVector>>,
        bounds: Vec<f64>,
        directions: Vec<ConstraintDirection>,
    ) -> Result<Self> {
        let lp = Self { systems, bounds, directions };
        lp.check()?;
        Ok(lp)
    }

    /// All constraints `<=`, performance vectors taken from the models.
    pub fn from_models(models: &[RenewalSystemModel], bounds: Vec<f64>) -> Result<Self> {
        let dim = bounds.len();
        Self::new(
            models.iter().map(RenewalSystemModel::performance_vectors).collect(),
            bounds,
            vec![ConstraintDirection::Le; dim],
        )
    }

    fn check(&self) -> Result<()> {
        let dim = self.bounds.len();
        if self.directions.len() != dim {
            return Err(Error::LengthMismatch { expected: dim, found: self.directions.len() });
        }
        if self.systems.is_empty() {
            return Err(Error::EmptyModelList);
        }
        for sys in &self.systems {
            if sys.is_empty() {
                return Err(Error::EmptyActionSet);
            }
            for v in sys {
                if v.g_hat.len() != dim {
                    return Err(Error::LengthMismatch { expected: dim, found: v.g_hat.len() });
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    fn sign(&self, l: usize) -> f64 {
        match self.directions[l] {
            ConstraintDirection::Le => 1.0,
            ConstraintDirection::Ge => -1.0,
        }
    }

    /// `sum_n sum_a theta g_hat` in the original orientation.
    fn achieved(&self, weights: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (sys, w) in self.systems.iter().zip(weights) {
            for (v, p) in sys.iter().zip(w) {
                out.iter_mut().zip(&v.g_hat).for_each(|(a, g)| *a += p * g);
            }
        }
        out
    }

    fn objective(&self, weights: &[Vec<f64>]) -> f64 {
        self.systems
            .iter()
            .zip(weights)
            .map(|(sys, w)| sys.iter().zip(w).map(|(v, p)| p * v.f_hat).sum::<f64>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    /// Hull weights per system.
    pub weights: Vec<Vec<f64>>,
    /// `sum_n g_bar^n_l` in the original constraint orientation.
    pub achieved: Vec<f64>,
    /// Nonnegative Lagrange multiplier estimates of the coupling constraints.
    /// Not certified; empty for the grid oracle.
    pub multipliers: Vec<f64>,
}

impl LpSolution {
    fn without_point(status: LpStatus, lp: &StationaryLp) -> Self {
        Self {
            status,
            objective: f64::NAN,
            weights: lp.systems.iter().map(|s| vec![0.0; s.len()]).collect(),
            achieved: vec![f64::NAN; lp.dim()],
            multipliers: Vec::new(),
        }
    }
}

pub fn solve_lp(lp: &StationaryLp) -> Result<LpSolution> {
    lp.check()?;
    let dim = lp.dim();
    let sizes: Vec<usize> = lp.systems.iter().map(Vec::len).collect();
    let n_vars: usize = sizes.iter().sum();

    let cost: Vec<f64> = lp.systems.iter().flatten().map(|v| v.f_hat).collect();
    let mut rows = Vec::with_capacity(dim + sizes.len());
    for l in 0..dim {
        let s = lp.sign(l);
        rows.push(Row {
            coeffs: lp.systems.iter().flatten().map(|v| s * v.g_hat[l]).collect(),
            relation: Relation::Le,
            rhs: s * lp.bounds[l],
        });
    }
    let mut offset = 0;
    for &k in &sizes {
        let mut coeffs = vec![0.0; n_vars];
        coeffs[offset..offset + k].iter_mut().for_each(|c| *c = 1.0);
        rows.push(Row { coeffs, relation: Relation::Eq, rhs: 1.0 });
        offset += k;
    }

    let res = simplex::solve(&LinearProgram { cost, rows });
    if res.status != LpStatus::Optimal {
        return Ok(LpSolution::without_point(res.status, lp));
    }
    let mut weights = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &k in &sizes {
        weights.push(res.x[offset..offset + k].iter().map(|w| w.max(0.0)).collect::<Vec<_>>());
        offset += k;
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective(&weights),
        achieved: lp.achieved(&weights),
        multipliers: res.duals[..dim].iter().map(|y| (-y).max(0.0)).collect(),
        weights,
    })
}

/// All weight vectors with entries in `{0, 1/grid, ..., 1}` summing to one.
fn simplex_grid(k: usize, grid: u32) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: u32, grid: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<f64>>) {
        if k == 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / grid as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(k - 1, left - c, grid, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, grid, grid, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Exhaustive search over a weight grid of resolution `1/grid` per system.
/// Returns the best exactly feasible grid point.
pub fn brute_force_oracle(lp: &StationaryLp, grid: u32) -> Result<LpSolution> {
    lp.check()?;
    if grid == 0 {
        return Err(Error::InvalidParameter("grid must be positive".into()));
    }
    let free: usize = lp.systems.iter().map(|s| s.len() - 1).sum();
    let points = libm::pow(grid as f64, free as f64);
    if points > GRID_LIMIT {
        return Err(Error::GridTooLarge { points, limit: GRID_LIMIT });
    }
    let dim = lp.dim();
    // per system: candidate weights with their (f, signed g) contributions
    let candidates: Vec<Vec<(Vec<f64>, f64, Vec<f64>)>> = lp
        .systems
        .iter()
        .map(|sys| {
            simplex_grid(sys.len(), grid)
                .into_iter()
                .map(|w| {
                    let f = sys.iter().zip(&w).map(|(v, p)| p * v.f_hat).sum();
                    let g = (0..dim)
                        .map(|l| lp.sign(l) * sys.iter().zip(&w).map(|(v, p)| p * v.g_hat[l]).sum::<f64>())
                        .collect();
                    (w, f, g)
                })
                .collect()
        })
        .collect();
    let limits: Vec<f64> = (0..dim).map(|l| lp.sign(l) * lp.bounds[l]).collect();

    struct Search<'a> {
        candidates: &'a [Vec<(Vec<f64>, f64, Vec<f64>)>],
        limits: &'a [f64],
        choice: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }
    impl Search<'_> {
        fn go(&mut self, n: usize, f: f64, g: &[f64]) {
            if n == self.candidates.len() {
                let feasible = g.iter().zip(self.limits).all(|(a, b)| *a <= b + GRID_FEAS_TOL);
                if feasible && self.best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                    self.best = Some((f, self.choice.clone()));
                }
                return;
            }
            let mut acc = vec![0.0; g.len()];
            for (i, (_, cf, cg)) in self.candidates[n].iter().enumerate() {
                acc.iter_mut().zip(g.iter().zip(cg)).for_each(|(a, (x, y))| *a = x + y);
                self.choice.push(i);
                self.go(n + 1, f + cf, &acc);
                self.choice.pop();
            }
        }
    }
    let mut search = Search { candidates: &candidates, limits: &limits, choice: Vec::new(), best: None };
    search.go(0, 0.0, &vec![0.0; dim]);

    match search.best {
        None => Ok(LpSolution::without_point(LpStatus::Infeasible, lp)),
        Some((_, choice)) => {
            let weights: Vec<Vec<f64>> =
                choice.iter().enumerate().map(|(n, &i)| candidates[n][i].0.clone()).collect();
            Ok(LpSolution {
                status: LpStatus::Optimal,
                objective: lp.objective(&weights),
                achieved: lp.achieved(&weights),
                multipliers: Vec::new(),
                weights,
            })
        }
    }
}

/// Per-system hull points `(f_bar*, g_bar*) = sum_a theta (f_hat, g_hat)`.
pub fn extract_reference_point(lp: &StationaryLp, sol: &LpSolution) -> Result<Vec<PerformanceVector>> {
    if sol.status != LpStatus::Optimal {
        return Err(Error::NotOptimal(sol.status));
    }
    if sol.weights.len() != lp.systems.len() {
        return Err(Error::LengthMismatch { expected: lp.systems.len(), found: sol.weights.len() });
    }
    lp.systems
        .iter()
        .zip(&sol.weights)
        .map(|(sys, w)| {
            if w.len() != sys.len() {
                return Err(Error::LengthMismatch { expected: sys.len(), found: w.len() });
            }
            let mut point = PerformanceVector { f_hat: 0.0, g_hat: vec![0.0; lp.dim()] };
            for (v, p) in sys.iter().zip(w) {
                point.f_hat += p * v.f_hat;
                point.g_hat.iter_mut().zip(&v.g_hat).for_each(|(a, g)| *a += p * g);
            }
            Ok(point)
        })
        .collect()
}

/// Converts hull weights `theta` (fractions of time) into per-frame selection
/// probabilities `p_a ~ theta_a / t_hat(a)` of a randomized stationary policy.
pub fn stationary_policy_weights(models: &[RenewalSystemModel], sol: &LpSolution) -> Result<Vec<Vec<f64>>> {
    if sol.status != LpStatus::Optimal {
        return Err(Error::NotOptimal(sol.status));
    }
    if sol.weights.len() != models.len() {
        return Err(Error::LengthMismatch { expected: models.len(), found: sol.weights.len() });
    }
    models
        .iter()
        .zip(&sol.weights)
        .enumerate()
        .map(|(n, (model, theta))| {
            if theta.len() != model.len() {
                return Err(Error::LengthMismatch { expected: model.len(), found: theta.len() });
            }
            let raw: Vec<f64> = theta.iter().zip(model.triples()).map(|(w, t)| w / t.t_hat).collect();
            let total: f64 = raw.iter().sum();
            if !(total > 0.0) {
                return Err(Error::InvalidWeights(format!("system {n} has no positive hull weight")));
            }
            Ok(raw.iter().map(|p| p / total).collect())
        })
        .collect()
}
