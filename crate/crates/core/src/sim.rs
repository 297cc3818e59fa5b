//! Slotted-time simulation of `N` asynchronous renewal systems sharing `L`
//! virtual queues.
//!
//! Slot `t` proceeds as follows:
//!
//! 1. every system whose previous frame ended at `t - 1` observes `Q[t]`,
//!    picks an action under the policy and draws its next frame;
//! 2. each system contributes the penalty and metrics of slot `t` of its
//!    current frame;
//! 3. the external process draws `d[t]`;
//! 4. `Q[t + 1] = max(Q[t] + sum_n z^n[t] - d[t], 0)`.
//!
//! All systems start their first frame at slot 0. Randomness comes from
//! independent ChaCha8 streams derived from one seed: stream 0 drives the
//! external process and stream `n + 1` drives system `n`, so adding a system
//! never perturbs the draws of the others.
//!
//! Diagnostics plug in through [`Observer`], which sees every frame decision
//! and every slot.

use alloc::{format, vec, vec::Vec};

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::controller::{
    solve_bisection, solve_enumerate, solve_hull_vertices, SubproblemSolution,
    TradeoffParameter, VirtualQueueVector,
};
use crate::model::{FrameOutcome, PerformanceVector, RenewalSystemModel};
use crate::stats::{RatioEstimator, RunningMean};
use crate::{Error, Result};

/// Queue trajectories keep at most this many points.
pub const TRAJECTORY_POINTS: u64 = 10_000;

/// Default Poisson truncation, in standard deviations above the mean.
pub const DEFAULT_CAP_SIGMAS: f64 = 10.0;

/// The random stream for `stream` under master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-slot distribution of one external process component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalDist {
    Deterministic(f64),
    /// Uniform on the integers `lo..=hi`.
    UniformInt { lo: i64, hi: i64 },
    /// Poisson, clipped to `cap`.
    Poisson { mean: f64, cap: f64 },
}

impl ArrivalDist {
    /// Poisson with the default cap `ceil(mean + 10 sqrt(mean))`.
    pub fn poisson(mean: f64) -> Self {
        Self::poisson_with_sigmas(mean, DEFAULT_CAP_SIGMAS)
    }

    pub fn poisson_with_sigmas(mean: f64, sigmas: f64) -> Self {
        ArrivalDist::Poisson { mean, cap: libm::ceil(mean + sigmas * libm::sqrt(mean)) }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ArrivalDist::Deterministic(v) if v.is_finite() => Ok(()),
            ArrivalDist::UniformInt { lo, hi } if lo <= hi => Ok(()),
            ArrivalDist::Poisson { mean, cap } if mean > 0.0 && mean.is_finite() && cap >= 0.0 => Ok(()),
            other => Err(Error::InvalidDistribution(format!("external process {other:?}"))),
        }
    }

    /// Nominal mean; the Poisson cap is ignored.
    pub fn mean(&self) -> f64 {
        match *self {
            ArrivalDist::Deterministic(v) => v,
            ArrivalDist::UniformInt { lo, hi } => (lo + hi) as f64 / 2.0,
            ArrivalDist::Poisson { mean, .. } => mean,
        }
    }

    pub fn max_abs(&self) -> f64 {
        match *self {
            ArrivalDist::Deterministic(v) => v.abs(),
            ArrivalDist::UniformInt { lo, hi } => lo.unsigned_abs().max(hi.unsigned_abs()) as f64,
            ArrivalDist::Poisson { cap, .. } => cap,
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ArrivalDist::Deterministic(v) => v,
            ArrivalDist::UniformInt { lo, hi } => rng.random_range(lo..=hi) as f64,
            ArrivalDist::Poisson { mean, cap } => {
                let poisson = Poisson::new(mean).expect("validated mean > 0");
                let draw: f64 = poisson.sample(rng);
                draw.min(cap)
            }
        }
    }
}

/// One component of `d[t]`. `negate` flips the sign of every draw, which is
/// how `>=` constraints are expressed in the internal `<=` form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalSpec {
    pub dist: ArrivalDist,
    pub negate: bool,
}

impl ArrivalSpec {
    pub fn new(dist: ArrivalDist) -> Self {
        Self { dist, negate: false }
    }

    pub fn negated(dist: ArrivalDist) -> Self {
        Self { dist, negate: true }
    }

    pub fn mean(&self) -> f64 {
        if self.negate {
            -self.dist.mean()
        } else {
            self.dist.mean()
        }
    }
}

/// The i.i.d. external process `d[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalProcess {
    pub components: Vec<ArrivalSpec>,
}

impl ExternalProcess {
    pub fn new(components: Vec<ArrivalSpec>) -> Result<Self> {
        components.iter().try_for_each(|c| c.dist.validate())?;
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Signed nominal means, the constraint bounds `d_l`.
    pub fn means(&self) -> Vec<f64> {
        self.components.iter().map(ArrivalSpec::mean).collect()
    }

    /// `d_max` of the boundedness assumption.
    pub fn d_max(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.dist.max_abs()))
    }

    pub fn sample_into<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (slot, comp) in out.iter_mut().zip(&self.components) {
            let x = comp.dist.sample(rng);
            *slot = if comp.negate { -x } else { x };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Enumerate,
    Bisection { tol: f64 },
    HullVertices,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    /// Minimize the drift-plus-penalty ratio at every frame start.
    DppRatio { v: TradeoffParameter, solver: SolverKind },
    /// Pick each frame's action independently with fixed per-system
    /// probabilities.
    RandomizedStationary { weights: Vec<Vec<f64>> },
}

impl PolicySpec {
    pub fn dpp(v: f64) -> Result<Self> {
        Ok(PolicySpec::DppRatio { v: TradeoffParameter::new(v)?, solver: SolverKind::Enumerate })
    }

    pub fn tradeoff(&self) -> Option<f64> {
        match self {
            PolicySpec::DppRatio { v, .. } => Some(v.get()),
            PolicySpec::RandomizedStationary { .. } => None,
        }
    }
}

/// A frame decision as seen by observers.
#[derive(Debug)]
pub struct Decision<'a> {
    pub slot: u64,
    pub system: usize,
    pub action: usize,
    /// Present for the drift-plus-penalty ratio policy.
    pub solution: Option<SubproblemSolution>,
    /// `Q[t]` at the decision slot.
    pub queues: &'a VirtualQueueVector,
    pub outcome: &'a FrameOutcome,
}

/// Everything that happened in one slot.
#[derive(Debug)]
pub struct SlotRecord<'a> {
    pub slot: u64,
    /// `Q[t]`.
    pub queues: &'a [f64],
    /// `y^n[t]` per system.
    pub penalty: &'a [f64],
    /// Row-major `N x L` values `z^n_l[t]`.
    pub metrics: &'a [f64],
    /// `sum_n z^n[t]`.
    pub metric_sum: &'a [f64],
    /// `d[t]`.
    pub external: &'a [f64],
    /// `Q[t + 1]`.
    pub next_queues: &'a [f64],
    /// Whether each system's current frame ends with this slot.
    pub frame_ends: &'a [bool],
}

pub trait Observer {
    fn on_decision(&mut self, _decision: &Decision<'_>) {}
    fn on_slot(&mut self, _record: &SlotRecord<'_>) {}
}

impl Observer for () {}

impl<T: Observer + ?Sized> Observer for &mut T {
    fn on_decision(&mut self, decision: &Decision<'_>) {
        (**self).on_decision(decision)
    }
    fn on_slot(&mut self, record: &SlotRecord<'_>) {
        (**self).on_slot(record)
    }
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn on_decision(&mut self, decision: &Decision<'_>) {
        self.0.on_decision(decision);
        self.1.on_decision(decision);
    }
    fn on_slot(&mut self, record: &SlotRecord<'_>) {
        self.0.on_slot(record);
        self.1.on_slot(record);
    }
}

impl<T: Observer> Observer for Option<T> {
    fn on_decision(&mut self, decision: &Decision<'_>) {
        if let Some(inner) = self {
            inner.on_decision(decision)
        }
    }
    fn on_slot(&mut self, record: &SlotRecord<'_>) {
        if let Some(inner) = self {
            inner.on_slot(record)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub slots: u64,
    pub seed: u64,
    pub record_trajectory: bool,
}

impl RunConfig {
    pub fn new(slots: u64, seed: u64) -> Self {
        Self { slots, seed, record_trajectory: false }
    }

    pub fn with_trajectory(mut self) -> Self {
        self.record_trajectory = true;
        self
    }
}

/// Downsampled `Q[t]` at `t = 0, stride, 2 stride, ...` plus the final `Q[T]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueueTrajectory {
    pub stride: u64,
    pub points: Vec<(u64, Vec<f64>)>,
}

/// Time averages and raw accumulators of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub slots: u64,
    /// `(1/T) sum_t sum_n y^n[t]`.
    pub avg_penalty: f64,
    /// `(1/T) sum_t sum_n z^n[t]`.
    pub avg_metrics: Vec<f64>,
    /// `(1/T) sum_t Q[t]` over `t = 0..T`.
    pub avg_queues: Vec<f64>,
    /// `Q[T]`.
    pub final_queues: Vec<f64>,
    /// Realized `(1/T) sum_t d[t]`.
    pub avg_external: Vec<f64>,
    pub queue_trajectory: Option<QueueTrajectory>,
    /// Frames started per system, including any still running at `T`.
    pub frames_per_system: Vec<u64>,
    /// Slots of completed frames plus elapsed slots of the current frame.
    pub slots_covered: Vec<u64>,
    pub penalty_sum: f64,
    pub metric_sums: Vec<f64>,
    pub queue_sums: Vec<f64>,
    pub external_sums: Vec<f64>,
    pub system_penalty_sums: Vec<f64>,
    /// Row-major `N x L`.
    pub system_metric_sums: Vec<f64>,
}

impl RunMetrics {
    pub fn systems(&self) -> usize {
        self.system_penalty_sums.len()
    }

    pub fn system_avg_penalty(&self, system: usize) -> f64 {
        self.system_penalty_sums[system] / self.slots as f64
    }

    pub fn system_avg_metrics(&self, system: usize) -> Vec<f64> {
        let dim = self.metric_sums.len();
        self.system_metric_sums[system * dim..(system + 1) * dim]
            .iter()
            .map(|s| s / self.slots as f64)
            .collect()
    }
}

fn check_inputs(models: &[RenewalSystemModel], external: &ExternalProcess, slots: u64) -> Result<usize> {
    let first = models.first().ok_or(Error::EmptyModelList)?;
    let dim = first.dim();
    for m in models {
        if m.dim() != dim {
            return Err(Error::LengthMismatch { expected: dim, found: m.dim() });
        }
    }
    if external.dim() != dim {
        return Err(Error::LengthMismatch { expected: dim, found: external.dim() });
    }
    if slots == 0 {
        return Err(Error::ZeroSlots);
    }
    Ok(dim)
}

enum Chooser {
    Dpp { v: f64, solver: SolverKind },
    Stationary(Vec<WeightedIndex<f64>>),
}

fn chooser(models: &[RenewalSystemModel], policy: &PolicySpec) -> Result<Chooser> {
    match policy {
        PolicySpec::DppRatio { v, solver } => {
            if let SolverKind::Bisection { tol } = *solver {
                if !(tol > 0.0) {
                    return Err(Error::NonPositiveTolerance(tol));
                }
            }
            Ok(Chooser::Dpp { v: v.get(), solver: *solver })
        }
        PolicySpec::RandomizedStationary { weights } => {
            if weights.len() != models.len() {
                return Err(Error::LengthMismatch { expected: models.len(), found: weights.len() });
            }
            let mut out = Vec::with_capacity(weights.len());
            for (n, (w, model)) in weights.iter().zip(models).enumerate() {
                if w.len() != model.len() {
                    return Err(Error::LengthMismatch { expected: model.len(), found: w.len() });
                }
                let sum: f64 = w.iter().sum();
                if w.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidWeights(format!(
                        "system {n}: weights must be nonnegative and sum to 1, got {w:?}"
                    )));
                }
                let index = WeightedIndex::new(w)
                    .map_err(|e| Error::InvalidWeights(format!("system {n}: {e}")))?;
                out.push(index);
            }
            Ok(Chooser::Stationary(out))
        }
    }
}

/// Simulates `config.slots` slots. Deterministic given `config.seed`.
pub fn run<O: Observer>(
    models: &[RenewalSystemModel],
    external: &ExternalProcess,
    policy: &PolicySpec,
    config: &RunConfig,
    mut observer: O,
) -> Result<RunMetrics> {
    let dim = check_inputs(models, external, config.slots)?;
    let chooser = chooser(models, policy)?;
    let n_sys = models.len();
    let slots = config.slots;

    let mut ext_rng = stream_rng(config.seed, 0);
    let mut sys_rngs: Vec<ChaCha8Rng> = (0..n_sys).map(|n| stream_rng(config.seed, n as u64 + 1)).collect();
    let vertex_lists: Vec<Vec<_>> = match chooser {
        Chooser::Dpp { solver: SolverKind::HullVertices, .. } => {
            models.iter().map(|m| m.triples().cloned().collect()).collect()
        }
        _ => Vec::new(),
    };

    let mut q = VirtualQueueVector::new(dim);
    let mut next_q = VirtualQueueVector::new(dim);
    let mut frames: Vec<FrameOutcome> = (0..n_sys).map(|_| FrameOutcome::new(dim)).collect();
    let mut pos = vec![0usize; n_sys];
    let mut completed_slots = vec![0u64; n_sys];
    let mut frames_started = vec![0u64; n_sys];

    let mut penalty = vec![0.0; n_sys];
    let mut metrics = vec![0.0; n_sys * dim];
    let mut metric_sum = vec![0.0; dim];
    let mut d = vec![0.0; dim];
    let mut frame_ends = vec![false; n_sys];

    let mut penalty_sum = 0.0;
    let mut metric_sums = vec![0.0; dim];
    let mut queue_sums = vec![0.0; dim];
    let mut external_sums = vec![0.0; dim];
    let mut system_penalty_sums = vec![0.0; n_sys];
    let mut system_metric_sums = vec![0.0; n_sys * dim];

    let stride = slots.div_ceil(TRAJECTORY_POINTS).max(1);
    let mut trajectory = config.record_trajectory.then(|| QueueTrajectory { stride, points: Vec::new() });

    for t in 0..slots {
        if let Some(traj) = trajectory.as_mut() {
            if t % stride == 0 {
                traj.points.push((t, q.as_slice().to_vec()));
            }
        }
        for n in 0..n_sys {
            if pos[n] as u64 == frames[n].length {
                completed_slots[n] += frames[n].length;
                let model = &models[n];
                let (action, solution) = match &chooser {
                    Chooser::Dpp { v, solver } => {
                        let sol = match solver {
                            SolverKind::Enumerate => solve_enumerate(model, &q, *v)?,
                            SolverKind::Bisection { tol } => solve_bisection(model, &q, *v, *tol)?.solution,
                            SolverKind::HullVertices => solve_hull_vertices(&vertex_lists[n], &q, *v)?,
                        };
                        (sol.action, Some(sol))
                    }
                    Chooser::Stationary(indices) => (indices[n].sample(&mut sys_rngs[n]), None),
                };
                model.actions()[action].frame.sample_into(&mut sys_rngs[n], &mut frames[n]);
                pos[n] = 0;
                frames_started[n] += 1;
                observer.on_decision(&Decision {
                    slot: t,
                    system: n,
                    action,
                    solution,
                    queues: &q,
                    outcome: &frames[n],
                });
            }
        }

        metric_sum.iter_mut().for_each(|z| *z = 0.0);
        let mut slot_penalty = 0.0;
        for n in 0..n_sys {
            let frame = &frames[n];
            let y = frame.penalty[pos[n]];
            penalty[n] = y;
            slot_penalty += y;
            system_penalty_sums[n] += y;
            let row = frame.metrics_at(pos[n]);
            for l in 0..dim {
                metrics[n * dim + l] = row[l];
                metric_sum[l] += row[l];
                system_metric_sums[n * dim + l] += row[l];
            }
            pos[n] += 1;
            frame_ends[n] = pos[n] as u64 == frame.length;
        }

        external.sample_into(&mut ext_rng, &mut d);
        next_q.clone_from(&q);
        next_q.update(&metric_sum, &d)?;

        penalty_sum += slot_penalty;
        for l in 0..dim {
            metric_sums[l] += metric_sum[l];
            queue_sums[l] += q.as_slice()[l];
            external_sums[l] += d[l];
        }

        observer.on_slot(&SlotRecord {
            slot: t,
            queues: q.as_slice(),
            penalty: &penalty,
            metrics: &metrics,
            metric_sum: &metric_sum,
            external: &d,
            next_queues: next_q.as_slice(),
            frame_ends: &frame_ends,
        });
        core::mem::swap(&mut q, &mut next_q);
    }

    if let Some(traj) = trajectory.as_mut() {
        traj.points.push((slots, q.as_slice().to_vec()));
    }
    let slots_covered = (0..n_sys).map(|n| completed_slots[n] + pos[n] as u64).collect();
    let per_slot = |v: &[f64]| v.iter().map(|s| s / slots as f64).collect::<Vec<_>>();
    Ok(RunMetrics {
        slots,
        avg_penalty: penalty_sum / slots as f64,
        avg_metrics: per_slot(&metric_sums),
        avg_queues: per_slot(&queue_sums),
        final_queues: q.as_slice().to_vec(),
        avg_external: per_slot(&external_sums),
        queue_trajectory: trajectory,
        frames_per_system: frames_started,
        slots_covered,
        penalty_sum,
        metric_sums,
        queue_sums,
        external_sums,
        system_penalty_sums,
        system_metric_sums,
    })
}

/// Checks the key-feature inequality at every drift-plus-penalty decision.
#[derive(Debug)]
pub struct KeyFeatureCheck<'a> {
    models: &'a [RenewalSystemModel],
    v: f64,
    pub checked: u64,
    pub violations: u64,
}

impl<'a> KeyFeatureCheck<'a> {
    pub fn new(models: &'a [RenewalSystemModel], v: f64) -> Self {
        Self { models, v, checked: 0, violations: 0 }
    }
}

impl Observer for KeyFeatureCheck<'_> {
    fn on_decision(&mut self, decision: &Decision<'_>) {
        if let Some(sol) = &decision.solution {
            self.checked += 1;
            let model = &self.models[decision.system];
            if !crate::controller::assert_key_feature(model, sol, decision.queues, self.v) {
                self.violations += 1;
            }
        }
    }
}

/// Checks `Q_l[t + 1] >= sum_{s <= t} (sum_n z_l^n[s] - d_l[s])` after every
/// slot, starting from `Q[0] = 0`.
///
/// The running sum is accumulated with the same operation order as the queue
/// update, so the comparison is exact in floating point.
#[derive(Debug, Clone, Default)]
pub struct SamplePathCheck {
    cumulative: Vec<f64>,
    pub checked: u64,
    pub violations: u64,
}

impl SamplePathCheck {
    pub fn new(dim: usize) -> Self {
        Self { cumulative: vec![0.0; dim], checked: 0, violations: 0 }
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }
}

impl Observer for SamplePathCheck {
    fn on_slot(&mut self, record: &SlotRecord<'_>) {
        for l in 0..self.cumulative.len() {
            let c = &mut self.cumulative[l];
            *c = *c + record.metric_sum[l] - record.external[l];
            self.checked += 1;
            if !(record.next_queues[l] >= *c) {
                self.violations += 1;
            }
        }
    }
}

/// `C_0 = L z_max (N z_max + d_max) B`.
pub fn drift_constant(dim: usize, z_max: f64, systems: usize, d_max: f64, residual_bound: f64) -> f64 {
    dim as f64 * z_max * (systems as f64 * z_max + d_max) * residual_bound
}

/// Per-frame sums of `X^n[t] = V (y^n[t] - f^n) + <Q[t], z^n[t] - g^n>`
/// against a reference point of the performance regions, minus `C_0`.
#[derive(Debug, Clone)]
pub struct DriftDiagnostic {
    pub reference: Vec<PerformanceVector>,
    pub v: f64,
    pub c0: f64,
    frame_sums: Vec<f64>,
    excess: Vec<RunningMean>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSummary {
    pub frames: u64,
    pub mean_excess: f64,
    pub std_error: f64,
    /// Mean excess is at most 3 standard errors above zero.
    pub holds: bool,
}

impl DriftDiagnostic {
    pub fn new(reference: Vec<PerformanceVector>, v: f64, c0: f64) -> Self {
        let n = reference.len();
        Self { reference, v, c0, frame_sums: vec![0.0; n], excess: vec![RunningMean::new(); n] }
    }

    /// Uses `C_0` from the models' declared bounds and the external process.
    pub fn for_models(
        models: &[RenewalSystemModel],
        external: &ExternalProcess,
        reference: Vec<PerformanceVector>,
        v: f64,
    ) -> Result<Self> {
        if reference.len() != models.len() {
            return Err(Error::LengthMismatch { expected: models.len(), found: reference.len() });
        }
        for (r, m) in reference.iter().zip(models) {
            if r.g_hat.len() != m.dim() {
                return Err(Error::LengthMismatch { expected: m.dim(), found: r.g_hat.len() });
            }
        }
        let z_max = models.iter().fold(0.0f64, |a, m| a.max(m.bounds().z_max));
        let b = models.iter().fold(1.0f64, |a, m| a.max(m.residual_bound()));
        let dim = models.first().map_or(0, RenewalSystemModel::dim);
        let c0 = drift_constant(dim, z_max, models.len(), external.d_max(), b);
        Ok(Self::new(reference, v, c0))
    }

    pub fn summaries(&self) -> Vec<DriftSummary> {
        self.excess
            .iter()
            .map(|acc| {
                let se = acc.std_error();
                DriftSummary {
                    frames: acc.count(),
                    mean_excess: acc.mean(),
                    std_error: se,
                    holds: acc.count() > 0 && acc.mean() <= 3.0 * se,
                }
            })
            .collect()
    }
}

impl Observer for DriftDiagnostic {
    fn on_slot(&mut self, record: &SlotRecord<'_>) {
        let dim = record.queues.len();
        for (n, reference) in self.reference.iter().enumerate() {
            let mut x = self.v * (record.penalty[n] - reference.f_hat);
            for l in 0..dim {
                x += record.queues[l] * (record.metrics[n * dim + l] - reference.g_hat[l]);
            }
            self.frame_sums[n] += x;
            if record.frame_ends[n] {
                self.excess[n].push(self.frame_sums[n] - self.c0);
                self.frame_sums[n] = 0.0;
            }
        }
    }
}

/// Per-system renewal-reward estimators over completed frames.
#[derive(Debug, Clone)]
pub struct FrameStats {
    dim: usize,
    pending: Vec<(f64, Vec<f64>, f64)>,
    penalty: Vec<RatioEstimator>,
    metrics: Vec<Vec<RatioEstimator>>,
}

impl FrameStats {
    pub fn new(systems: usize, dim: usize) -> Self {
        Self {
            dim,
            pending: vec![(0.0, vec![0.0; dim], 0.0); systems],
            penalty: vec![RatioEstimator::new(); systems],
            metrics: vec![vec![RatioEstimator::new(); dim]; systems],
        }
    }

    pub fn penalty(&self, system: usize) -> &RatioEstimator {
        &self.penalty[system]
    }

    pub fn metric(&self, system: usize, l: usize) -> &RatioEstimator {
        &self.metrics[system][l]
    }
}

impl Observer for FrameStats {
    fn on_decision(&mut self, decision: &Decision<'_>) {
        let out = decision.outcome;
        self.pending[decision.system] = (out.total_penalty(), out.total_metrics(), out.length as f64);
    }

    fn on_slot(&mut self, record: &SlotRecord<'_>) {
        for (n, &ended) in record.frame_ends.iter().enumerate() {
            if ended {
                let (y, z, t) = &self.pending[n];
                self.penalty[n].push(*y, *t);
                for l in 0..self.dim {
                    self.metrics[n][l].push(z[l], *t);
                }
            }
        }
    }
}

/// Empirical and predicted per-slot averages of one system under a
/// randomized stationary policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemAverages {
    pub empirical_f: f64,
    pub empirical_g: Vec<f64>,
    /// Renewal-reward prediction `sum p y_hat / sum p t_hat`.
    pub predicted_f: f64,
    pub predicted_g: Vec<f64>,
    pub f_std_error: f64,
    pub g_std_error: Vec<f64>,
    pub completed_frames: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarySweep {
    pub metrics: RunMetrics,
    pub systems: Vec<SystemAverages>,
}

/// The per-slot averages a stationary policy with frame probabilities
/// `weights` converges to: ratios of expected frame totals.
pub fn renewal_reward_prediction(model: &RenewalSystemModel, weights: &[f64]) -> PerformanceVector {
    let mut y = 0.0;
    let mut t = 0.0;
    let mut z = vec![0.0; model.dim()];
    for (p, triple) in weights.iter().zip(model.triples()) {
        y += p * triple.y_hat;
        t += p * triple.t_hat;
        z.iter_mut().zip(&triple.z_hat).for_each(|(a, b)| *a += p * b);
    }
    PerformanceVector { f_hat: y / t, g_hat: z.iter().map(|v| v / t).collect() }
}

/// Runs a randomized stationary policy and compares each system's time
/// averages with the renewal-reward prediction.
pub fn run_stationary_sweep(
    models: &[RenewalSystemModel],
    external: &ExternalProcess,
    weights: &[Vec<f64>],
    slots: u64,
    seed: u64,
) -> Result<StationarySweep> {
    let dim = check_inputs(models, external, slots)?;
    let policy = PolicySpec::RandomizedStationary { weights: weights.to_vec() };
    let mut stats = FrameStats::new(models.len(), dim);
    let metrics = run(models, external, &policy, &RunConfig::new(slots, seed), &mut stats)?;
    let systems = models
        .iter()
        .enumerate()
        .map(|(n, model)| {
            let predicted = renewal_reward_prediction(model, &weights[n]);
            SystemAverages {
                empirical_f: metrics.system_avg_penalty(n),
                empirical_g: metrics.system_avg_metrics(n),
                predicted_f: predicted.f_hat,
                predicted_g: predicted.g_hat,
                f_std_error: stats.penalty(n).std_error(),
                g_std_error: (0..dim).map(|l| stats.metric(n, l).std_error()).collect(),
                completed_frames: stats.penalty(n).count(),
            }
        })
        .collect();
    Ok(StationarySweep { metrics, systems })
}
