//! Renewal system models: performance triples, frame distributions and
//! frame sampling.
//!
//! Every system has a finite action set. Each action carries the declared
//! conditional expectations of its frame totals (a [`PerformanceTriple`]) and
//! a [`FrameSpec`] describing how frames are drawn. A frame is a sequence of
//! independent phases; each phase has a random length, per-slot credits, and
//! an amount credited on its last slot. Frame-level totals can also be spread
//! uniformly across all slots of the frame.

use alloc::{format, vec, vec::Vec};

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Geometric};

use crate::stats::RunningMean;
use crate::{Error, Result};

/// Residual-lifetime estimates backed by fewer conditional samples than this
/// are reported but never flagged.
pub const MIN_RESIDUAL_SAMPLES: u64 = 30;

const MAX_STORED_VIOLATIONS: usize = 64;

/// Index of an action within its own system's action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

/// Expected frame totals under one action: penalty, metrics and length.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceTriple {
    pub y_hat: f64,
    pub z_hat: Vec<f64>,
    pub t_hat: f64,
}

impl PerformanceTriple {
    pub fn new(y_hat: f64, z_hat: Vec<f64>, t_hat: f64) -> Self {
        Self { y_hat, z_hat, t_hat }
    }

    pub fn dim(&self) -> usize {
        self.z_hat.len()
    }
}

/// Per-slot averages `(y/T, z/T)` of a triple.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceVector {
    pub f_hat: f64,
    pub g_hat: Vec<f64>,
}

pub fn performance_vector(triple: &PerformanceTriple) -> Result<PerformanceVector> {
    // written so that NaN is rejected too
    if !(triple.t_hat >= 1.0) {
        return Err(Error::FrameLengthBelowOne(triple.t_hat));
    }
    Ok(PerformanceVector {
        f_hat: triple.y_hat / triple.t_hat,
        g_hat: triple.z_hat.iter().map(|z| z / triple.t_hat).collect(),
    })
}

/// Distribution of a phase length in slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LengthDist {
    Deterministic(u64),
    /// Uniform on the integers `lo..=hi`.
    UniformInt { lo: u64, hi: u64 },
    /// Geometric on `{1, 2, ...}` with success probability `1 / mean`.
    Geometric { mean: f64 },
}

impl LengthDist {
    fn validate(&self) -> Result<()> {
        match *self {
            LengthDist::Deterministic(k) if k >= 1 => Ok(()),
            LengthDist::UniformInt { lo, hi } if lo >= 1 && lo <= hi => Ok(()),
            LengthDist::Geometric { mean } if mean.is_finite() && mean >= 1.0 => Ok(()),
            other => Err(Error::InvalidDistribution(format!(
                "phase length {other:?} must be supported on positive integers"
            ))),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LengthDist::Deterministic(k) => k as f64,
            LengthDist::UniformInt { lo, hi } => (lo + hi) as f64 / 2.0,
            LengthDist::Geometric { mean } => mean,
        }
    }

    pub fn min(&self) -> u64 {
        match *self {
            LengthDist::Deterministic(k) => k,
            LengthDist::UniformInt { lo, .. } => lo,
            LengthDist::Geometric { .. } => 1,
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            LengthDist::Deterministic(k) => k,
            LengthDist::UniformInt { lo, hi } => rng.random_range(lo..=hi),
            LengthDist::Geometric { mean } => {
                // rand_distr counts failures before the first success
                let geo = Geometric::new(1.0 / mean).expect("validated mean >= 1");
                geo.sample(rng) + 1
            }
        }
    }
}

/// Distribution of an amount credited once per phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmountDist {
    Constant(f64),
    /// `scale * k` with `k` uniform on the integers `lo..=hi`.
    UniformInt { lo: i64, hi: i64, scale: f64 },
}

impl AmountDist {
    pub const ZERO: AmountDist = AmountDist::Constant(0.0);

    fn validate(&self) -> Result<()> {
        match *self {
            AmountDist::Constant(c) if c.is_finite() => Ok(()),
            AmountDist::UniformInt { lo, hi, scale } if lo <= hi && scale.is_finite() => Ok(()),
            other => Err(Error::InvalidDistribution(format!("amount {other:?}"))),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            AmountDist::Constant(c) => c,
            AmountDist::UniformInt { lo, hi, scale } => scale * (lo + hi) as f64 / 2.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        match *self {
            AmountDist::Constant(c) => c.abs(),
            AmountDist::UniformInt { lo, hi, scale } => {
                (lo.unsigned_abs().max(hi.unsigned_abs())) as f64 * scale.abs()
            }
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            AmountDist::Constant(c) => c,
            AmountDist::UniformInt { lo, hi, scale } => scale * rng.random_range(lo..=hi) as f64,
        }
    }
}

/// One phase of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpec {
    pub length: LengthDist,
    pub slot_penalty: f64,
    pub slot_metrics: Vec<f64>,
    /// Credited on the last slot of the phase.
    pub end_penalty: AmountDist,
    pub end_metrics: Vec<AmountDist>,
}

impl PhaseSpec {
    /// A phase with no credits, for `dim` metrics.
    pub fn new(length: LengthDist, dim: usize) -> Self {
        Self {
            length,
            slot_penalty: 0.0,
            slot_metrics: vec![0.0; dim],
            end_penalty: AmountDist::ZERO,
            end_metrics: vec![AmountDist::ZERO; dim],
        }
    }

    pub fn with_slot_penalty(mut self, penalty: f64) -> Self {
        self.slot_penalty = penalty;
        self
    }

    pub fn with_slot_metrics(mut self, metrics: Vec<f64>) -> Self {
        self.slot_metrics = metrics;
        self
    }

    pub fn with_end_penalty(mut self, amount: AmountDist) -> Self {
        self.end_penalty = amount;
        self
    }

    pub fn with_end_metric(mut self, metric: usize, amount: AmountDist) -> Self {
        self.end_metrics[metric] = amount;
        self
    }
}

/// How the frames of one action are drawn: a sum of independent phases.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSpec {
    pub phases: Vec<PhaseSpec>,
    /// Frame total spread uniformly over every slot of the frame.
    pub spread_penalty: f64,
    pub spread_metrics: Vec<f64>,
}

impl FrameSpec {
    pub fn new(phases: Vec<PhaseSpec>, dim: usize) -> Self {
        Self { phases, spread_penalty: 0.0, spread_metrics: vec![0.0; dim] }
    }

    /// Frames of fixed length with constant per-slot values.
    pub fn constant(length: u64, penalty: f64, metrics: Vec<f64>) -> Self {
        let dim = metrics.len();
        let phase = PhaseSpec::new(LengthDist::Deterministic(length), dim)
            .with_slot_penalty(penalty)
            .with_slot_metrics(metrics);
        Self::new(vec![phase], dim)
    }

    pub fn with_spread_penalty(mut self, total: f64) -> Self {
        self.spread_penalty = total;
        self
    }

    pub fn with_spread_metrics(mut self, totals: Vec<f64>) -> Self {
        self.spread_metrics = totals;
        self
    }

    pub fn dim(&self) -> usize {
        self.spread_metrics.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::InvalidDistribution("frame has no phases".into()));
        }
        let dim = self.dim();
        if !self.spread_penalty.is_finite() || self.spread_metrics.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite spread total".into()));
        }
        for phase in &self.phases {
            phase.length.validate()?;
            if phase.slot_metrics.len() != dim {
                return Err(Error::LengthMismatch { expected: dim, found: phase.slot_metrics.len() });
            }
            if phase.end_metrics.len() != dim {
                return Err(Error::LengthMismatch { expected: dim, found: phase.end_metrics.len() });
            }
            if !phase.slot_penalty.is_finite() || phase.slot_metrics.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDistribution("non-finite per-slot credit".into()));
            }
            phase.end_penalty.validate()?;
            phase.end_metrics.iter().try_for_each(AmountDist::validate)?;
        }
        Ok(())
    }

    pub fn min_length(&self) -> u64 {
        self.phases.iter().map(|p| p.length.min()).sum()
    }

    /// Exact expected frame totals implied by the phase distributions.
    pub fn expected_triple(&self) -> PerformanceTriple {
        let dim = self.dim();
        let mut y = self.spread_penalty;
        let mut z = self.spread_metrics.clone();
        let mut t = 0.0;
        for phase in &self.phases {
            let len = phase.length.mean();
            t += len;
            y += phase.slot_penalty * len + phase.end_penalty.mean();
            for l in 0..dim {
                z[l] += phase.slot_metrics[l] * len + phase.end_metrics[l].mean();
            }
        }
        PerformanceTriple::new(y, z, t)
    }

    /// Largest per-slot magnitudes any sampled frame can produce.
    pub fn slot_bounds(&self) -> SlotBounds {
        let min_len = self.min_length().max(1) as f64;
        let spread_y = self.spread_penalty.abs() / min_len;
        let spread_z = self.spread_metrics.iter().fold(0.0f64, |m, v| m.max(v.abs())) / min_len;
        let mut bounds = SlotBounds { y_max: 0.0, z_max: 0.0 };
        for phase in &self.phases {
            let y = phase.slot_penalty.abs() + phase.end_penalty.max_abs() + spread_y;
            bounds.y_max = bounds.y_max.max(y);
            for (slot, end) in phase.slot_metrics.iter().zip(&phase.end_metrics) {
                bounds.z_max = bounds.z_max.max(slot.abs() + end.max_abs() + spread_z);
            }
        }
        bounds
    }

    /// Draws one frame into `out`, reusing its buffers.
    pub fn sample_into<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut FrameOutcome) {
        let dim = self.dim();
        out.reset(dim);
        for phase in &self.phases {
            let len = phase.length.sample(rng);
            let start = out.penalty.len();
            for _ in 0..len {
                out.penalty.push(phase.slot_penalty);
                out.metrics.extend_from_slice(&phase.slot_metrics);
            }
            let last = start + len as usize - 1;
            out.penalty[last] += phase.end_penalty.sample(rng);
            for l in 0..dim {
                out.metrics[last * dim + l] += phase.end_metrics[l].sample(rng);
            }
        }
        let length = out.penalty.len();
        out.length = length as u64;
        if self.spread_penalty != 0.0 {
            let share = self.spread_penalty / length as f64;
            out.penalty.iter_mut().for_each(|y| *y += share);
        }
        for l in 0..dim {
            if self.spread_metrics[l] != 0.0 {
                let share = self.spread_metrics[l] / length as f64;
                for slot in 0..length {
                    out.metrics[slot * dim + l] += share;
                }
            }
        }
    }
}

/// Declared per-slot magnitude bounds `|y[t]| <= y_max`, `|z_l[t]| <= z_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotBounds {
    pub y_max: f64,
    pub z_max: f64,
}

impl SlotBounds {
    pub fn join(self, other: SlotBounds) -> SlotBounds {
        SlotBounds { y_max: self.y_max.max(other.y_max), z_max: self.z_max.max(other.z_max) }
    }
}

/// An action: its declared expectations and its frame distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    pub triple: PerformanceTriple,
    pub frame: FrameSpec,
}

impl ActionSpec {
    pub fn new(triple: PerformanceTriple, frame: FrameSpec) -> Self {
        Self { triple, frame }
    }

    /// Declares the exact expectations implied by `frame`.
    pub fn from_frame(frame: FrameSpec) -> Self {
        Self { triple: frame.expected_triple(), frame }
    }
}

/// One renewal system with a finite action set.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalSystemModel {
    actions: Vec<ActionSpec>,
    bounds: SlotBounds,
    residual_bound: f64,
    dim: usize,
}

impl RenewalSystemModel {
    pub fn new(actions: Vec<ActionSpec>, bounds: SlotBounds, residual_bound: f64) -> Result<Self> {
        let first = actions.first().ok_or(Error::EmptyActionSet)?;
        let dim = first.triple.dim();
        for action in &actions {
            if action.triple.dim() != dim {
                return Err(Error::LengthMismatch { expected: dim, found: action.triple.dim() });
            }
            if action.frame.dim() != dim {
                return Err(Error::LengthMismatch { expected: dim, found: action.frame.dim() });
            }
            if !(action.triple.t_hat >= 1.0) {
                return Err(Error::FrameLengthBelowOne(action.triple.t_hat));
            }
            action.frame.validate()?;
        }
        if !(residual_bound >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "residual bound must be at least 1, got {residual_bound}"
            )));
        }
        if !(bounds.y_max >= 0.0 && bounds.z_max >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid slot bounds {bounds:?}")));
        }
        Ok(Self { actions, bounds, residual_bound, dim })
    }

    /// Like [`RenewalSystemModel::new`] with the tightest bounds the frame
    /// distributions guarantee.
    pub fn with_derived_bounds(actions: Vec<ActionSpec>, residual_bound: f64) -> Result<Self> {
        let bounds = actions
            .iter()
            .map(|a| a.frame.slot_bounds())
            .fold(SlotBounds { y_max: 0.0, z_max: 0.0 }, SlotBounds::join);
        Self::new(actions, bounds, residual_bound)
    }

    pub fn actions(&self) -> &[ActionSpec] {
        &self.actions
    }

    pub fn action(&self, id: ActionId) -> Result<&ActionSpec> {
        self.actions
            .get(id.0)
            .ok_or(Error::InvalidAction { index: id.0, count: self.actions.len() })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Number of constrained metrics `L`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> SlotBounds {
        self.bounds
    }

    pub fn residual_bound(&self) -> f64 {
        self.residual_bound
    }

    pub fn triples(&self) -> impl Iterator<Item = &PerformanceTriple> + '_ {
        self.actions.iter().map(|a| &a.triple)
    }

    pub fn performance_vectors(&self) -> Vec<PerformanceVector> {
        self.triples()
            .map(|t| performance_vector(t).expect("validated t_hat >= 1"))
            .collect()
    }
}

/// One sampled renewal frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameOutcome {
    pub length: u64,
    pub penalty: Vec<f64>,
    /// Row-major `length x dim` per-slot metrics.
    pub metrics: Vec<f64>,
    dim: usize,
}

impl FrameOutcome {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Self::default() }
    }

    fn reset(&mut self, dim: usize) {
        self.dim = dim;
        self.length = 0;
        self.penalty.clear();
        self.metrics.clear();
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metrics_at(&self, slot: usize) -> &[f64] {
        &self.metrics[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn total_penalty(&self) -> f64 {
        self.penalty.iter().sum()
    }

    pub fn total_metrics(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.dim];
        for row in self.metrics.chunks_exact(self.dim.max(1)) {
            totals.iter_mut().zip(row).for_each(|(t, v)| *t += v);
        }
        totals
    }

    pub fn within_bounds(&self, bounds: &SlotBounds) -> bool {
        self.penalty.iter().all(|y| y.abs() <= bounds.y_max)
            && self.metrics.iter().all(|z| z.abs() <= bounds.z_max)
    }
}

pub fn sample_frame<R: RngCore + ?Sized>(
    model: &RenewalSystemModel,
    action: ActionId,
    rng: &mut R,
) -> Result<FrameOutcome> {
    let mut out = FrameOutcome::new(model.dim());
    model.action(action)?.frame.sample_into(rng, &mut out);
    Ok(out)
}

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    fn from(acc: &RunningMean) -> Self {
        Self { mean: acc.mean(), std_error: acc.std_error() }
    }

    /// Distance from `declared` in standard errors.
    pub fn z_score(&self, declared: f64) -> f64 {
        let diff = (self.mean - declared).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.std_error
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Penalty,
    Metric(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundViolation {
    pub frame: u64,
    pub slot: u64,
    pub quantity: Quantity,
    pub value: f64,
    pub bound: f64,
}

/// Empirical `E[(T - s)^2 | T >= s]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualEstimate {
    pub s: u64,
    pub conditional_count: u64,
    pub estimate: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionReport {
    pub action: ActionId,
    pub samples: u64,
    pub declared: PerformanceTriple,
    pub penalty: Estimate,
    pub metrics: Vec<Estimate>,
    pub length: Estimate,
    pub violation_count: u64,
    /// The first few violations in sampling order.
    pub violations: Vec<BoundViolation>,
    pub residuals: Vec<ResidualEstimate>,
}

impl ActionReport {
    /// Largest distance between an empirical mean and its declaration, in
    /// standard errors.
    pub fn max_z_score(&self) -> f64 {
        let mut worst = self.penalty.z_score(self.declared.y_hat).max(self.length.z_score(self.declared.t_hat));
        for (est, declared) in self.metrics.iter().zip(&self.declared.z_hat) {
            worst = worst.max(est.z_score(*declared));
        }
        worst
    }

    pub fn flagged_residuals(&self) -> impl Iterator<Item = &ResidualEstimate> + '_ {
        self.residuals.iter().filter(|r| r.flagged)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub residual_bound: f64,
    pub bounds: SlotBounds,
    pub actions: Vec<ActionReport>,
}

impl ValidationReport {
    pub fn violation_count(&self) -> u64 {
        self.actions.iter().map(|a| a.violation_count).sum()
    }

    pub fn flagged_residual_count(&self) -> usize {
        self.actions.iter().map(|a| a.flagged_residuals().count()).sum()
    }

    /// No bound violations and no flagged residual estimates.
    pub fn is_clean(&self) -> bool {
        self.violation_count() == 0 && self.flagged_residual_count() == 0
    }
}

/// Samples every action `samples_per_action` times (at least once) and checks
/// the declared slot bounds, the residual-lifetime bound and the declared
/// expectations.
pub fn validate_model<R: RngCore + ?Sized>(
    model: &RenewalSystemModel,
    samples_per_action: u64,
    rng: &mut R,
) -> ValidationReport {
    let samples = samples_per_action.max(1);
    let bounds = model.bounds();
    let mut out = FrameOutcome::new(model.dim());
    let actions = model
        .actions()
        .iter()
        .enumerate()
        .map(|(index, action)| {
            let mut penalty = RunningMean::new();
            let mut metrics = vec![RunningMean::new(); model.dim()];
            let mut length = RunningMean::new();
            // histogram of frame lengths
            let mut hist: Vec<u64> = Vec::new();
            let mut violations = Vec::new();
            let mut violation_count = 0;
            for frame in 0..samples {
                action.frame.sample_into(rng, &mut out);
                penalty.push(out.total_penalty());
                for (acc, total) in metrics.iter_mut().zip(out.total_metrics()) {
                    acc.push(total);
                }
                length.push(out.length as f64);
                let len = out.length as usize;
                if hist.len() <= len {
                    hist.resize(len + 1, 0);
                }
                hist[len] += 1;

                for slot in 0..len {
                    let mut check = |quantity, value: f64, bound: f64| {
                        if value.abs() > bound {
                            violation_count += 1;
                            if violations.len() < MAX_STORED_VIOLATIONS {
                                violations.push(BoundViolation {
                                    frame,
                                    slot: slot as u64,
                                    quantity,
                                    value,
                                    bound,
                                });
                            }
                        }
                    };
                    check(Quantity::Penalty, out.penalty[slot], bounds.y_max);
                    for (l, &z) in out.metrics_at(slot).iter().enumerate() {
                        check(Quantity::Metric(l), z, bounds.z_max);
                    }
                }
            }
            ActionReport {
                action: ActionId(index),
                samples,
                declared: action.triple.clone(),
                penalty: Estimate::from(&penalty),
                metrics: metrics.iter().map(Estimate::from).collect(),
                length: Estimate::from(&length),
                violation_count,
                violations,
                residuals: residual_estimates(&hist, model.residual_bound()),
            }
        })
        .collect();
    ValidationReport { residual_bound: model.residual_bound(), bounds, actions }
}

fn residual_estimates(hist: &[u64], bound: f64) -> Vec<ResidualEstimate> {
    // suffix sums of count, T and T^2 over lengths >= s
    let n = hist.len();
    let mut count = vec![0u64; n + 1];
    let mut sum = vec![0.0; n + 1];
    let mut sum_sq = vec![0.0; n + 1];
    for t in (0..n).rev() {
        let c = hist[t] as f64;
        let tf = t as f64;
        count[t] = count[t + 1] + hist[t];
        sum[t] = sum[t + 1] + c * tf;
        sum_sq[t] = sum_sq[t + 1] + c * tf * tf;
    }
    (0..n)
        .filter(|&s| count[s] > 0)
        .map(|s| {
            let sf = s as f64;
            let c = count[s] as f64;
            let estimate = (sum_sq[s] - 2.0 * sf * sum[s] + sf * sf * c) / c;
            ResidualEstimate {
                s: s as u64,
                conditional_count: count[s],
                estimate,
                flagged: count[s] >= MIN_RESIDUAL_SAMPLES && estimate > bound,
            }
        })
        .collect()
}
