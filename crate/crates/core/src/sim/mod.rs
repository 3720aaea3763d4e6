//! Discrete-event simulation of the network, used as the independent oracle
//! for every analytic result in this crate.
//!
//! Two topologies are simulated:
//!
//! * **decoupled**: one aggregated primary class and one secondary class
//!   sharing `N` servers under preemptive-resume priority; this is the model
//!   the Markov chain and the closed forms describe;
//! * **coupled**: the original layout of `N` independent primary queues
//!   (one per channel) and `M` secondary stations that hunt for idle
//!   channels and are displaced when a primary returns.
//!
//! Every run is deterministic for a fixed seed: each arrival and service
//! process draws from its own stream, all streams are derived from the
//! master seed through a fixed splitmix64 rule, and replications run on
//! seeds derived from the master seed and the replication index.

mod coupled;
mod decoupled;
mod log;
mod rng;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::scalar::{count, num, Scalar};

pub use coupled::{run_coupled, run_coupled_logged, CoupledSpec};
pub use decoupled::{run_decoupled, run_decoupled_logged};
pub use log::{EventLog, LogClass, LogEventKind, LogRecord};
pub use rng::replication_seed;

/// Scalar that can drive the simulator's exponential sampling.
pub trait SimScalar: Scalar {
    /// Draws an exponential variate with the given rate (strictly positive).
    fn sample_exp<R: Rng + ?Sized>(rng: &mut R, rate: Self) -> Self;
}

impl SimScalar for f64 {
    fn sample_exp<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
        rng.sample(rand_distr::Exp::new(rate).expect("exponential rate must be positive"))
    }
}

impl SimScalar for f32 {
    fn sample_exp<R: Rng + ?Sized>(rng: &mut R, rate: f32) -> f32 {
        rng.sample(rand_distr::Exp::new(rate).expect("exponential rate must be positive"))
    }
}

/// Which network layout to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Decoupled,
    Coupled,
}

/// Simulation run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub topology: Topology,
    /// Departures discarded before measurement starts.
    pub warmup_departures: u64,
    /// Departures measured after warmup; must be at least ten per server.
    pub measured_departures: u64,
    pub replications: u32,
    /// Hard cap on processed events per replication; a formula-based budget
    /// applies when absent.
    #[serde(default)]
    pub max_events: Option<u64>,
}

impl SimConfig {
    /// Config with the default warmup (20% of the measured window).
    pub fn new(seed: u64, measured_departures: u64, replications: u32) -> Self {
        Self {
            seed,
            topology: Topology::Decoupled,
            warmup_departures: measured_departures / 5,
            measured_departures,
            replications,
            max_events: None,
        }
    }

    pub fn validate(&self, n_servers: u32) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::InvalidSimConfig(
                "at least one replication is required".into(),
            ));
        }
        if self.measured_departures < 10 * u64::from(n_servers) {
            return Err(Error::InvalidSimConfig(format!(
                "measured departures {} must be at least ten per server ({})",
                self.measured_departures,
                10 * u64::from(n_servers)
            )));
        }
        Ok(())
    }

    pub(crate) fn event_budget(&self) -> u64 {
        self.max_events.unwrap_or_else(|| {
            self.warmup_departures
                .saturating_add(self.measured_departures)
                .saturating_mul(200)
                .max(1_000_000)
        })
    }
}

/// 95% confidence-interval half-widths across replications, per metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CiHalfwidths<F> {
    pub d_pu: Option<F>,
    pub d_su: Option<F>,
    pub w_pu: Option<F>,
    pub w_su: Option<F>,
    pub mean_q_pu: F,
    pub mean_q_su: F,
}

/// Point estimates from a simulation run. Delay metrics are absent for a
/// class that produced no measured departures; confidence intervals are
/// present when the estimate aggregates at least two replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimEstimate<F> {
    pub d_pu: Option<F>,
    pub d_su: Option<F>,
    pub w_pu: Option<F>,
    pub w_su: Option<F>,
    pub mean_q_pu: F,
    pub mean_q_su: F,
    pub ci: Option<CiHalfwidths<F>>,
    pub replications: u32,
    pub events_processed: u64,
    pub seed: u64,
}

fn student_t_975(df: u32) -> f64 {
    StudentsT::new(0.0, 1.0, f64::from(df))
        .expect("degrees of freedom must be positive")
        .inverse_cdf(0.975)
}

fn mean_and_halfwidth<F: Scalar>(values: &[F], t_quantile: F) -> (F, F) {
    let n = count::<F>(values.len());
    let mean = values.iter().copied().sum::<F>() / n;
    let var = values
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<F>()
        / (n - F::one());
    (mean, t_quantile * (var / n).sqrt())
}

fn optional_series<F: Scalar>(
    reps: &[SimEstimate<F>],
    metric: impl Fn(&SimEstimate<F>) -> Option<F>,
) -> Option<Vec<F>> {
    reps.iter().map(metric).collect()
}

/// Runs independent replications of `runner` and aggregates them.
///
/// Replication `r` runs on a config whose seed is derived from the master
/// seed and `r` by a fixed splitting rule, so the whole estimate is
/// deterministic for a fixed master seed. Replications execute in parallel;
/// aggregation walks them in replication order.
pub fn replicate<F, R>(cfg: &SimConfig, runner: R) -> Result<SimEstimate<F>>
where
    F: SimScalar,
    R: Fn(&SimConfig) -> Result<SimEstimate<F>> + Sync,
{
    cfg.validate(1)?;
    if cfg.replications < 2 {
        return Err(Error::InvalidSimConfig(
            "confidence intervals require at least two replications".into(),
        ));
    }
    let results: Vec<Result<SimEstimate<F>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let mut rep_cfg = *cfg;
            rep_cfg.seed = replication_seed(cfg.seed, r);
            rep_cfg.replications = 1;
            runner(&rep_cfg)
        })
        .collect();
    let mut reps = Vec::with_capacity(results.len());
    for result in results {
        reps.push(result?);
    }

    let t = num::<F>(student_t_975(cfg.replications - 1));
    let series = |metric: fn(&SimEstimate<F>) -> Option<F>| -> (Option<F>, Option<F>) {
        match optional_series(&reps, metric) {
            Some(values) => {
                let (mean, hw) = mean_and_halfwidth(&values, t);
                (Some(mean), Some(hw))
            }
            None => (None, None),
        }
    };
    let (d_pu, ci_d_pu) = series(|r| r.d_pu);
    let (d_su, ci_d_su) = series(|r| r.d_su);
    let (w_pu, ci_w_pu) = series(|r| r.w_pu);
    let (w_su, ci_w_su) = series(|r| r.w_su);
    let q_pu: Vec<F> = reps.iter().map(|r| r.mean_q_pu).collect();
    let q_su: Vec<F> = reps.iter().map(|r| r.mean_q_su).collect();
    let (mean_q_pu, ci_q_pu) = mean_and_halfwidth(&q_pu, t);
    let (mean_q_su, ci_q_su) = mean_and_halfwidth(&q_su, t);

    Ok(SimEstimate {
        d_pu,
        d_su,
        w_pu,
        w_su,
        mean_q_pu,
        mean_q_su,
        ci: Some(CiHalfwidths {
            d_pu: ci_d_pu,
            d_su: ci_d_su,
            w_pu: ci_w_pu,
            w_su: ci_w_su,
            mean_q_pu: ci_q_pu,
            mean_q_su: ci_q_su,
        }),
        replications: cfg.replications,
        events_processed: reps.iter().map(|r| r.events_processed).sum(),
        seed: cfg.seed,
    })
}

/// Future-event entry ordered by time with a monotone sequence tiebreak, so
/// the processing order is total and deterministic.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scheduled<F, E> {
    pub time: F,
    pub seq: u64,
    pub event: E,
}

impl<F: Scalar, E> PartialEq for Scheduled<F, E> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl<F: Scalar, E> Eq for Scheduled<F, E> {}

impl<F: Scalar, E> PartialOrd for Scheduled<F, E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<F: Scalar, E> Ord for Scheduled<F, E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .partial_cmp(&other.time)
            .expect("event times are never NaN")
            .then(self.seq.cmp(&other.seq))
    }
}

/// Shared measurement-window bookkeeping for both topologies.
#[derive(Debug)]
pub(crate) struct Window<F> {
    warmup_target: u64,
    measured_target: u64,
    departures: u64,
    pub measuring: bool,
    window_start: F,
    last_event_time: F,
    pub area_q_pu: F,
    pub area_q_su: F,
}

impl<F: Scalar> Window<F> {
    pub fn new(cfg: &SimConfig) -> Self {
        Self {
            warmup_target: cfg.warmup_departures,
            measured_target: cfg.measured_departures,
            departures: 0,
            measuring: cfg.warmup_departures == 0,
            window_start: F::zero(),
            last_event_time: F::zero(),
            area_q_pu: F::zero(),
            area_q_su: F::zero(),
        }
    }

    /// Advances the queue-length integrals up to `now`.
    pub fn advance(&mut self, now: F, q_pu: usize, q_su: usize) {
        if self.measuring {
            let dt = now - self.last_event_time;
            self.area_q_pu += dt * count(q_pu);
            self.area_q_su += dt * count(q_su);
        }
        self.last_event_time = now;
    }

    /// Counts one departure; returns `true` while inside the measured window
    /// (the departure that completes the warmup is itself discarded). Call
    /// after [`Window::advance`].
    pub fn record_departure(&mut self, now: F) -> bool {
        self.departures += 1;
        if !self.measuring && self.departures >= self.warmup_target {
            self.measuring = true;
            self.window_start = now;
            self.last_event_time = now;
            self.area_q_pu = F::zero();
            self.area_q_su = F::zero();
            return false;
        }
        self.measuring
    }

    pub fn done(&self) -> bool {
        self.departures >= self.warmup_target + self.measured_target
    }

    pub fn duration(&self) -> F {
        self.last_event_time - self.window_start
    }
}
