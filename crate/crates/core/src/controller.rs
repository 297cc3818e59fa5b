//! Virtual queues and the per-frame ratio subproblem.
//!
//! At the start of each frame a system picks the action minimizing
//!
//! ```text
//! (V * y_hat(a) + <Q, z_hat(a)>) / t_hat(a)
//! ```
//!
//! which equals `V * f_hat(a) + <Q, g_hat(a)>`. Three solvers are provided:
//! plain enumeration, a Dinkelbach iteration on the ratio parameter, and
//! enumeration over the vertices of a convex hull of triples (optimizing over
//! the hull reduces to picking a single vertex).

use alloc::{vec, vec::Vec};

use crate::model::{PerformanceTriple, RenewalSystemModel};
use crate::{Error, Result};

/// Default termination tolerance of [`solve_bisection`].
pub const DEFAULT_BISECTION_TOL: f64 = 1e-9;

/// The trade-off parameter `V > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TradeoffParameter(f64);

impl TradeoffParameter {
    pub fn new(v: f64) -> Result<Self> {
        if v > 0.0 && v.is_finite() {
            Ok(Self(v))
        } else {
            Err(Error::NonPositiveTradeoff(v))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Nonnegative virtual queue backlogs, one per constraint.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VirtualQueueVector {
    q: Vec<f64>,
}

impl VirtualQueueVector {
    /// All-zero queues.
    pub fn new(dim: usize) -> Self {
        Self { q: vec![0.0; dim] }
    }

    /// Queues at given values; negative or NaN entries are rejected.
    pub fn from_values(q: Vec<f64>) -> Result<Self> {
        if q.iter().all(|v| *v >= 0.0) {
            Ok(Self { q })
        } else {
            Err(Error::InvalidParameter("virtual queues must be nonnegative".into()))
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// In-place `Q_l <- max(Q_l + z_l - d_l, 0)`.
    pub fn update(&mut self, z_slot_sum: &[f64], d_slot: &[f64]) -> Result<()> {
        check_len(self.q.len(), z_slot_sum.len())?;
        check_len(self.q.len(), d_slot.len())?;
        for ((q, z), d) in self.q.iter_mut().zip(z_slot_sum).zip(d_slot) {
            *q = (*q + z - d).max(0.0);
        }
        Ok(())
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}

/// Returns the queues after one slot: `max(q + z - d, 0)` componentwise.
pub fn queue_update(
    q: &VirtualQueueVector,
    z_slot_sum: &[f64],
    d_slot: &[f64],
) -> Result<VirtualQueueVector> {
    let mut next = q.clone();
    next.update(z_slot_sum, d_slot)?;
    Ok(next)
}

/// The chosen action (or hull vertex) and the achieved ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemSolution {
    pub action: usize,
    pub value: f64,
}

/// `(v * y + <q, z>) / t`, the frame ratio objective of one triple.
///
/// Every solver and the key-feature check evaluate the objective through this
/// function, so equal choices produce bit-identical values.
pub fn frame_ratio(triple: &PerformanceTriple, q: &[f64], v: f64) -> f64 {
    (v * triple.y_hat + dot(q, &triple.z_hat)) / triple.t_hat
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_weight(v: f64) -> Result<()> {
    // V = 0 is a meaningful subproblem (pure queue pressure), so only
    // negative or non-finite weights are rejected here.
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTradeoff(v))
    }
}

fn argmin_ratio<'a, I>(triples: I, q: &[f64], v: f64) -> Option<SubproblemSolution>
where
    I: IntoIterator<Item = &'a PerformanceTriple>,
{
    let mut best: Option<SubproblemSolution> = None;
    for (action, triple) in triples.into_iter().enumerate() {
        let value = frame_ratio(triple, q, v);
        // strict comparison keeps the lowest index on ties
        if best.is_none_or(|b| value < b.value) {
            best = Some(SubproblemSolution { action, value });
        }
    }
    best
}

/// Exact minimization by enumerating the action set. Ties go to the lowest
/// action index. `v` may be zero.
pub fn solve_enumerate(
    model: &RenewalSystemModel,
    q: &VirtualQueueVector,
    v: f64,
) -> Result<SubproblemSolution> {
    check_weight(v)?;
    check_len(model.dim(), q.dim())?;
    argmin_ratio(model.triples(), q.as_slice(), v).ok_or(Error::EmptyActionSet)
}

/// Result of the Dinkelbach iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DinkelbachOutcome {
    pub solution: SubproblemSolution,
    pub iterations: u32,
    /// `min_a (V y(a) + <q, z(a)> - theta* t(a))` at the returned ratio.
    pub inner_minimum: f64,
}

/// Root-finding on the ratio `theta`: minimize `V y + <q, z> - theta T` over
/// the actions, move `theta` to the minimizer's ratio, and stop once the
/// inner minimum is within `tol` of zero.
pub fn solve_bisection(
    model: &RenewalSystemModel,
    q: &VirtualQueueVector,
    v: f64,
    tol: f64,
) -> Result<DinkelbachOutcome> {
    if !(tol > 0.0) {
        return Err(Error::NonPositiveTolerance(tol));
    }
    check_weight(v)?;
    check_len(model.dim(), q.dim())?;
    let triples = model.actions();
    let first = triples.first().ok_or(Error::EmptyActionSet)?;
    let q = q.as_slice();

    let mut current = SubproblemSolution { action: 0, value: frame_ratio(&first.triple, q, v) };
    let mut iterations = 0;
    // theta strictly decreases through distinct action ratios, so the loop
    // visits each action at most once
    loop {
        iterations += 1;
        let theta = current.value;
        let mut inner = f64::INFINITY;
        let mut inner_action = current.action;
        for (action, spec) in triples.iter().enumerate() {
            let t = &spec.triple;
            let h = v * t.y_hat + dot(q, &t.z_hat) - theta * t.t_hat;
            if h < inner {
                inner = h;
                inner_action = action;
            }
        }
        if inner >= -tol || iterations as usize > triples.len() {
            return Ok(DinkelbachOutcome { solution: current, iterations, inner_minimum: inner });
        }
        let next = frame_ratio(&triples[inner_action].triple, q, v);
        if !(next < theta) {
            // rounding stalled progress; theta is already optimal to working precision
            return Ok(DinkelbachOutcome { solution: current, iterations, inner_minimum: inner });
        }
        current = SubproblemSolution { action: inner_action, value: next };
    }
}

/// Minimizes the frame ratio over the convex hull of `vertices`, which
/// reduces to picking the best vertex.
pub fn solve_hull_vertices(
    vertices: &[PerformanceTriple],
    q: &VirtualQueueVector,
    v: f64,
) -> Result<SubproblemSolution> {
    check_weight(v)?;
    if vertices.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    for vertex in vertices {
        if !(vertex.t_hat >= 1.0) {
            return Err(Error::FrameLengthBelowOne(vertex.t_hat));
        }
        check_len(q.dim(), vertex.dim())?;
    }
    argmin_ratio(vertices, q.as_slice(), v).ok_or(Error::EmptyActionSet)
}

/// True iff `solution.value <= V f_hat(a) + <q, g_hat(a)>` for every action.
///
/// Checking the generating points suffices for the whole performance region
/// because the right-hand side is linear in `(f, g)` and the region is their
/// convex hull.
pub fn assert_key_feature(
    model: &RenewalSystemModel,
    solution: &SubproblemSolution,
    q: &VirtualQueueVector,
    v: f64,
) -> bool {
    model.triples().all(|t| solution.value <= frame_ratio(t, q.as_slice(), v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActionSpec, FrameSpec};

    fn model_from(triples: &[(f64, &[f64], f64)]) -> RenewalSystemModel {
        let actions = triples
            .iter()
            .map(|&(y, z, t)| {
                ActionSpec::new(
                    PerformanceTriple::new(y, z.to_vec(), t),
                    FrameSpec::constant(1, 0.0, vec![0.0; z.len()]),
                )
            })
            .collect();
        RenewalSystemModel::with_derived_bounds(actions, 1.0).unwrap()
    }

    fn queues(q: &[f64]) -> VirtualQueueVector {
        VirtualQueueVector::from_values(q.to_vec()).unwrap()
    }

    #[test]
    fn queue_update_examples() {
        assert_eq!(queue_update(&queues(&[5.0]), &[3.0], &[4.0]).unwrap().as_slice(), &[4.0]);
        assert_eq!(queue_update(&queues(&[0.0]), &[0.0], &[2.0]).unwrap().as_slice(), &[0.0]);
        assert_eq!(
            queue_update(&queues(&[1.0, 2.0]), &[0.5, 3.0], &[1.0, 1.0]).unwrap().as_slice(),
            &[0.5, 4.0]
        );
        assert!(matches!(
            queue_update(&queues(&[1.0]), &[0.5, 3.0], &[1.0]),
            Err(Error::LengthMismatch { expected: 1, found: 2 })
        ));
        assert!(VirtualQueueVector::from_values(vec![-1.0]).is_err());
    }

    #[test]
    fn tradeoff_must_be_positive() {
        assert!(TradeoffParameter::new(0.0).is_err());
        assert!(TradeoffParameter::new(-2.0).is_err());
        assert!(TradeoffParameter::new(f64::NAN).is_err());
        assert_eq!(TradeoffParameter::new(3.0).unwrap().get(), 3.0);
    }

    #[test]
    fn enumerate_two_actions() {
        let model = model_from(&[(2.0, &[1.0], 2.0), (4.0, &[0.0], 2.0)]);
        let sol = solve_enumerate(&model, &queues(&[4.0]), 1.0).unwrap();
        assert_eq!(sol, SubproblemSolution { action: 1, value: 2.0 });
    }

    #[test]
    fn enumerate_breaks_ties_by_lowest_index() {
        let model = model_from(&[(0.0, &[1.0], 2.0), (0.0, &[3.0], 5.0), (0.0, &[2.0], 1.0)]);
        let sol = solve_enumerate(&model, &queues(&[0.0]), 7.0).unwrap();
        assert_eq!(sol, SubproblemSolution { action: 0, value: 0.0 });
    }

    #[test]
    fn enumerate_server_modes_without_penalty_weight() {
        let p = 3.0;
        let modes: [(f64, f64, f64, f64); 3] =
            [(5.5, 15.0, 16.0, 2.5), (4.6, 21.0, 20.0, 4.3), (3.8, 17.0, 13.0, 3.7)];
        let triples: Vec<(f64, Vec<f64>, f64)> = modes
            .iter()
            .enumerate()
            .map(|(i, &(h, mu, e, idle))| {
                let mut z = vec![0.0; 3];
                z[i] = -mu;
                (e + p * idle, z, h + idle)
            })
            .collect();
        let refs: Vec<(f64, &[f64], f64)> = triples.iter().map(|(y, z, t)| (*y, z.as_slice(), *t)).collect();
        let model = model_from(&refs);
        let sol = solve_enumerate(&model, &queues(&[1.0, 1.0, 1.0]), 0.0).unwrap();
        assert_eq!(sol.action, 1);
        assert!((sol.value + 21.0 / 8.9).abs() < 1e-12);
        assert!((sol.value + 2.3596).abs() < 1e-4);
    }

    #[test]
    fn enumerate_errors() {
        let model = model_from(&[(1.0, &[1.0], 1.0)]);
        assert!(matches!(solve_enumerate(&model, &queues(&[]), 1.0), Err(Error::LengthMismatch { .. })));
        assert!(solve_enumerate(&model, &queues(&[0.0]), -1.0).is_err());
    }

    #[test]
    fn bisection_matches_enumeration() {
        let model = model_from(&[(2.0, &[1.0], 2.0), (4.0, &[0.0], 2.0)]);
        let out = solve_bisection(&model, &queues(&[4.0]), 1.0, 1e-9).unwrap();
        assert!((out.solution.value - 2.0).abs() <= 1e-9);
        assert_eq!(out.solution.action, 1);
        assert!(out.inner_minimum >= -1e-9 && out.inner_minimum <= 0.0);
    }

    #[test]
    fn bisection_single_action_is_a_fixed_point() {
        let model = model_from(&[(3.0, &[1.0], 4.0)]);
        let out = solve_bisection(&model, &queues(&[2.0]), 1.0, 1e-9).unwrap();
        assert_eq!(out.solution, SubproblemSolution { action: 0, value: 5.0 / 4.0 });
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn bisection_rejects_bad_tolerance() {
        let model = model_from(&[(3.0, &[1.0], 4.0)]);
        assert_eq!(
            solve_bisection(&model, &queues(&[2.0]), 1.0, 0.0).unwrap_err(),
            Error::NonPositiveTolerance(0.0)
        );
    }

    #[test]
    fn hull_vertices_examples() {
        let verts = [PerformanceTriple::new(2.0, vec![1.0], 2.0), PerformanceTriple::new(4.0, vec![0.0], 2.0)];
        let sol = solve_hull_vertices(&verts, &queues(&[4.0]), 1.0).unwrap();
        assert_eq!(sol, SubproblemSolution { action: 1, value: 2.0 });
        let sol = solve_hull_vertices(&verts[..1], &queues(&[4.0]), 1.0).unwrap();
        assert_eq!(sol.action, 0);
        assert_eq!(solve_hull_vertices(&[], &queues(&[4.0]), 1.0).unwrap_err(), Error::EmptyActionSet);
        let short = [PerformanceTriple::new(1.0, vec![1.0], 0.9)];
        assert_eq!(
            solve_hull_vertices(&short, &queues(&[4.0]), 1.0).unwrap_err(),
            Error::FrameLengthBelowOne(0.9)
        );
    }

    #[test]
    fn key_feature_detects_inflated_value() {
        let model = model_from(&[(2.0, &[1.0], 2.0), (4.0, &[0.0], 2.0)]);
        let q = queues(&[4.0]);
        let sol = solve_enumerate(&model, &q, 1.0).unwrap();
        assert!(assert_key_feature(&model, &sol, &q, 1.0));
        // max objective is 3
        let bad = SubproblemSolution { action: 0, value: 3.0 + 1.0 };
        assert!(!assert_key_feature(&model, &bad, &q, 1.0));
    }
}
