//! Multi-server energy-aware scheduling.
//!
//! `N` servers serve `L` job classes. At each frame start a server picks one
//! class (its mode). The frame is a geometric service phase, after which a
//! uniformly distributed number of jobs of that class is credited, followed by
//! a geometric idle phase that burns `idle_power` per slot. Serving a class
//! costs a fixed energy total per frame, spread over the frame's slots.
//!
//! Each class `l` requires time-average service at least its arrival rate.
//! Internally the metrics are negated job counts and the external process is
//! the negated arrival count, so `sum_n mu_l >= lambda_l` becomes the `<=`
//! constraint `sum_n (-mu_l) <= -lambda_l`, and the virtual queue update is
//! exactly `Q_l <- max(Q_l + lambda_l[t] - sum_n mu_l[t], 0)`.

use alloc::{format, vec, vec::Vec};

use crate::controller::frame_ratio;
use crate::lp::StationaryLp;
use crate::model::{
    ActionSpec, AmountDist, FrameSpec, LengthDist, PerformanceTriple, PhaseSpec, RenewalSystemModel,
};
use crate::sim::{ArrivalDist, ArrivalSpec, ExternalProcess, DEFAULT_CAP_SIGMAS};
use crate::{Error, Result};

/// Residual-lifetime bound declared for the preset. The exact maximum of
/// `E[(T - s)^2 | T >= s]` over the three modes is about 110 (at `s = 0`).
pub const TABLE1_RESIDUAL_BOUND: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerClassParams {
    /// Mean arrivals per slot.
    pub arrival_rate: f64,
    /// Mean service phase length.
    pub service_mean: f64,
    /// Jobs served per frame are uniform on `lo..=hi`.
    pub service_count: (i64, i64),
    /// Energy per frame for serving this class.
    pub energy: f64,
    /// Mean idle phase length.
    pub idle_mean: f64,
}

impl ServerClassParams {
    pub fn service_count_mean(&self) -> f64 {
        (self.service_count.0 + self.service_count.1) as f64 / 2.0
    }

    fn validate(&self, class: usize) -> Result<()> {
        let (lo, hi) = self.service_count;
        let ok = self.arrival_rate > 0.0
            && self.arrival_rate.is_finite()
            && self.service_mean >= 1.0
            && self.idle_mean >= 1.0
            && self.service_mean.is_finite()
            && self.idle_mean.is_finite()
            && self.energy.is_finite()
            && 0 <= lo
            && lo <= hi;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDistribution(format!("class {class} parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingInstance {
    pub n_servers: usize,
    pub idle_power: f64,
    pub classes: Vec<ServerClassParams>,
    /// Poisson arrivals are clipped at `ceil(lambda + cap_sigmas sqrt(lambda))`.
    pub cap_sigmas: f64,
    pub residual_bound: f64,
}

impl SchedulingInstance {
    /// Five homogeneous servers, three job classes, idle power 3.
    pub fn table1() -> Self {
        let class = |arrival_rate, service_mean, service_count, energy, idle_mean| ServerClassParams {
            arrival_rate,
            service_mean,
            service_count,
            energy,
            idle_mean,
        };
        Self {
            n_servers: 5,
            idle_power: 3.0,
            classes: vec![
                class(2.0, 5.5, (9, 21), 16.0, 2.5),
                class(3.0, 4.6, (15, 27), 20.0, 4.3),
                class(4.0, 3.8, (11, 23), 13.0, 3.7),
            ],
            cap_sigmas: DEFAULT_CAP_SIGMAS,
            residual_bound: TABLE1_RESIDUAL_BOUND,
        }
    }

    pub fn dim(&self) -> usize {
        self.classes.len()
    }

    pub fn arrival_rates(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.arrival_rate).collect()
    }

    /// `(y_hat, z_hat, t_hat)` of serving `mode`, in the negated metric convention.
    pub fn mode_triple(&self, mode: usize) -> Result<PerformanceTriple> {
        let c = self.classes.get(mode).ok_or(Error::InvalidMode { mode, classes: self.dim() })?;
        let mut z = vec![0.0; self.dim()];
        z[mode] = -c.service_count_mean();
        Ok(PerformanceTriple::new(c.energy + self.idle_power * c.idle_mean, z, c.service_mean + c.idle_mean))
    }

    fn mode_frame(&self, mode: usize) -> FrameSpec {
        let dim = self.dim();
        let c = &self.classes[mode];
        let (lo, hi) = c.service_count;
        let service = PhaseSpec::new(LengthDist::Geometric { mean: c.service_mean }, dim)
            .with_end_metric(mode, AmountDist::UniformInt { lo, hi, scale: -1.0 });
        let idle =
            PhaseSpec::new(LengthDist::Geometric { mean: c.idle_mean }, dim).with_slot_penalty(self.idle_power);
        FrameSpec::new(vec![service, idle], dim).with_spread_penalty(c.energy)
    }

    fn validate(&self) -> Result<()> {
        if self.n_servers == 0 {
            return Err(Error::EmptyModelList);
        }
        if self.classes.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        if !(self.idle_power >= 0.0 && self.idle_power.is_finite()) {
            return Err(Error::InvalidParameter(format!("idle power {}", self.idle_power)));
        }
        if !(self.cap_sigmas >= 0.0) {
            return Err(Error::InvalidParameter(format!("cap sigmas {}", self.cap_sigmas)));
        }
        self.classes.iter().enumerate().try_for_each(|(l, c)| c.validate(l))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltInstance {
    pub models: Vec<RenewalSystemModel>,
    pub external: ExternalProcess,
    pub lp: StationaryLp,
}

/// Models, external process and benchmark LP of a scheduling instance.
pub fn build_instance(inst: &SchedulingInstance) -> Result<BuiltInstance> {
    inst.validate()?;
    let actions = (0..inst.dim())
        .map(|mode| Ok(ActionSpec::new(inst.mode_triple(mode)?, inst.mode_frame(mode))))
        .collect::<Result<Vec<_>>>()?;
    let server = RenewalSystemModel::with_derived_bounds(actions, inst.residual_bound)?;
    let models = vec![server; inst.n_servers];
    let external = ExternalProcess::new(
        inst.classes
            .iter()
            .map(|c| ArrivalSpec::negated(ArrivalDist::poisson_with_sigmas(c.arrival_rate, inst.cap_sigmas)))
            .collect(),
    )?;
    let lp = StationaryLp::from_models(&models, external.means())?;
    Ok(BuiltInstance { models, external, lp })
}

/// `(V (e + p I) - <q, mu e_mode>) / (H + I)` for serving class `mode`.
pub fn scheduling_objective(inst: &SchedulingInstance, mode: usize, q: &[f64], v: f64) -> Result<f64> {
    let c = inst.classes.get(mode).ok_or(Error::InvalidMode { mode, classes: inst.dim() })?;
    if q.len() != inst.dim() {
        return Err(Error::LengthMismatch { expected: inst.dim(), found: q.len() });
    }
    let energy = c.energy + inst.idle_power * c.idle_mean;
    Ok((v * energy - q[mode] * c.service_count_mean()) / (c.service_mean + c.idle_mean))
}

/// Generic ratio objective of `mode` under the negated-metric mapping.
pub fn mapped_objective(inst: &SchedulingInstance, mode: usize, q: &[f64], v: f64) -> Result<f64> {
    Ok(frame_ratio(&inst.mode_triple(mode)?, q, v))
}
