//! Event-driven simulation of the original coupled topology: `N` independent
//! primary queues (one per channel) and `M` secondary stations sharing
//! whatever channels are momentarily free of primary traffic.
//!
//! A secondary head-of-line packet seizes the lowest-indexed idle channel.
//! When a primary packet arrives at a channel occupied by a secondary one,
//! the secondary packet is preempted, keeps its remaining work, and either
//! resumes immediately on another idle channel or returns to the head of its
//! station queue. Channels that fall idle are offered to the stations in
//! round-robin order.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::log::{EventLog, LogClass, LogEventKind, LogRecord};
use super::rng::{self, stream_rng};
use super::{Scheduled, SimConfig, SimEstimate, SimScalar, Window};
use crate::error::{Error, Result};
use crate::model::{ClassParams, NetworkModel};
use crate::scalar::{as_f64, count, Scalar};

/// Parameters of the coupled topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledSpec<F> {
    /// Aggregate primary arrival rate per channel; the length defines `N`.
    pub per_channel_pu_lambda: Vec<F>,
    /// Primary service rate, shared by all channels.
    pub mu_pu: F,
    /// One `(lambda, mu)` pair per secondary station.
    pub su_stations: Vec<ClassParams<F>>,
}

impl<F: Scalar> CoupledSpec<F> {
    pub fn n_channels(&self) -> usize {
        self.per_channel_pu_lambda.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_channel_pu_lambda.is_empty() {
            return Err(Error::InvalidParameter(
                "the coupled topology needs at least one channel".into(),
            ));
        }
        if !self.mu_pu.is_finite() || self.mu_pu <= F::zero() {
            return Err(Error::InvalidParameter(format!(
                "primary service rate {} must be finite and > 0",
                self.mu_pu
            )));
        }
        for (ch, &l) in self.per_channel_pu_lambda.iter().enumerate() {
            if !l.is_finite() || l < F::zero() {
                return Err(Error::InvalidParameter(format!(
                    "channel {ch} arrival rate {l} must be finite and >= 0"
                )));
            }
            if l >= self.mu_pu {
                return Err(Error::InvalidParameter(format!(
                    "channel {ch} arrival rate {l} must stay below the service rate {}",
                    self.mu_pu
                )));
            }
        }
        for station in &self.su_stations {
            station.validate()?;
        }
        let rho_total = self.total_utilization();
        if rho_total >= count(self.n_channels()) {
            return Err(Error::Unstable {
                rho_total: as_f64(rho_total),
                n_servers: self.n_channels() as u32,
            });
        }
        Ok(())
    }

    fn total_utilization(&self) -> F {
        let pu: F = self
            .per_channel_pu_lambda
            .iter()
            .map(|&l| l / self.mu_pu)
            .sum();
        let su: F = self.su_stations.iter().map(|s| s.utilization()).sum();
        pu + su
    }

    /// The decoupled model this topology aggregates into, when it exists:
    /// primary rates sum across channels, station rates sum across stations.
    /// `None` when the stations' service rates differ, since the aggregated
    /// secondary class has no single service rate then.
    pub fn aggregate_model(&self) -> Option<NetworkModel<F>> {
        let mu_su = self.su_stations.first().map(|s| s.mu)?;
        if self.su_stations.iter().any(|s| s.mu != mu_su) {
            return None;
        }
        let lambda_pu: F = self.per_channel_pu_lambda.iter().copied().sum();
        let lambda_su: F = self.su_stations.iter().map(|s| s.lambda).sum();
        NetworkModel::new(
            self.n_channels() as u32,
            ClassParams {
                lambda: lambda_pu,
                mu: self.mu_pu,
            },
            ClassParams {
                lambda: lambda_su,
                mu: mu_su,
            },
        )
        .ok()
    }
}

#[derive(Debug, Clone, Copy)]
enum Event {
    PuArrival { channel: usize },
    SuArrival { station: usize },
    PuDeparture { channel: usize },
    SuDeparture { channel: usize, token: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Job<F> {
    arrival: F,
    remaining: F,
}

#[derive(Debug, Clone, Copy)]
struct ActiveSu<F> {
    token: u64,
    station: usize,
    arrival: F,
    finish: F,
}

#[derive(Debug)]
struct Channel<F> {
    pu_queue: VecDeque<Job<F>>,
    su: Option<ActiveSu<F>>,
}

impl<F> Channel<F> {
    fn empty() -> Self {
        Self {
            pu_queue: VecDeque::new(),
            su: None,
        }
    }

    fn idle(&self) -> bool {
        self.pu_queue.is_empty() && self.su.is_none()
    }
}

struct Sim<'a, F: SimScalar> {
    spec: &'a CoupledSpec<F>,
    now: F,
    seq: u64,
    next_token: u64,
    queue: BinaryHeap<Reverse<Scheduled<F, Event>>>,
    channels: Vec<Channel<F>>,
    stations: Vec<VecDeque<Job<F>>>,
    next_station: usize,
    channel_arrivals: Vec<ChaCha8Rng>,
    channel_services: Vec<ChaCha8Rng>,
    station_arrivals: Vec<ChaCha8Rng>,
    station_services: Vec<ChaCha8Rng>,
    window: Window<F>,
    pu_delay_sum: F,
    pu_departures: u64,
    su_delay_sums: Vec<F>,
    su_departures: Vec<u64>,
    events_processed: u64,
    log: Option<EventLog>,
}

impl<'a, F: SimScalar> Sim<'a, F> {
    fn new(spec: &'a CoupledSpec<F>, cfg: &SimConfig, with_log: bool) -> Self {
        let n = spec.n_channels();
        let m = spec.su_stations.len();
        Self {
            spec,
            now: F::zero(),
            seq: 0,
            next_token: 0,
            queue: BinaryHeap::new(),
            channels: (0..n).map(|_| Channel::empty()).collect(),
            stations: vec![VecDeque::new(); m],
            next_station: 0,
            channel_arrivals: (0..n)
                .map(|ch| stream_rng(cfg.seed, rng::CHANNEL_ARRIVALS_BASE + ch as u64))
                .collect(),
            channel_services: (0..n)
                .map(|ch| stream_rng(cfg.seed, rng::CHANNEL_SERVICES_BASE + ch as u64))
                .collect(),
            station_arrivals: (0..m)
                .map(|st| stream_rng(cfg.seed, rng::STATION_ARRIVALS_BASE + st as u64))
                .collect(),
            station_services: (0..m)
                .map(|st| stream_rng(cfg.seed, rng::STATION_SERVICES_BASE + st as u64))
                .collect(),
            window: Window::new(cfg),
            pu_delay_sum: F::zero(),
            pu_departures: 0,
            su_delay_sums: vec![F::zero(); m],
            su_departures: vec![0; m],
            events_processed: 0,
            log: with_log.then(EventLog::default),
        }
    }

    fn schedule(&mut self, time: F, event: Event) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Scheduled { time, seq, event }));
    }

    fn schedule_pu_arrival(&mut self, channel: usize) {
        let lambda = self.spec.per_channel_pu_lambda[channel];
        if lambda > F::zero() {
            let gap = F::sample_exp(&mut self.channel_arrivals[channel], lambda);
            self.schedule(self.now + gap, Event::PuArrival { channel });
        }
    }

    fn schedule_su_arrival(&mut self, station: usize) {
        let lambda = self.spec.su_stations[station].lambda;
        if lambda > F::zero() {
            let gap = F::sample_exp(&mut self.station_arrivals[station], lambda);
            self.schedule(self.now + gap, Event::SuArrival { station });
        }
    }

    fn pu_total(&self) -> usize {
        self.channels.iter().map(|c| c.pu_queue.len()).sum()
    }

    fn su_total(&self) -> usize {
        let waiting: usize = self.stations.iter().map(|s| s.len()).sum();
        let active = self.channels.iter().filter(|c| c.su.is_some()).count();
        waiting + active
    }

    fn find_idle_channel(&self) -> Option<usize> {
        self.channels.iter().position(Channel::idle)
    }

    fn start_su(&mut self, channel: usize, station: usize, job: Job<F>) {
        let token = self.next_token;
        self.next_token += 1;
        let finish = self.now + job.remaining;
        self.channels[channel].su = Some(ActiveSu {
            token,
            station,
            arrival: job.arrival,
            finish,
        });
        self.schedule(finish, Event::SuDeparture { channel, token });
    }

    fn start_pu_service(&mut self, channel: usize) {
        let head = self.channels[channel]
            .pu_queue
            .front()
            .expect("primary service needs a queued packet");
        self.schedule(self.now + head.remaining, Event::PuDeparture { channel });
    }

    /// Offers a freshly idle channel to the stations, round-robin.
    fn offer_channel(&mut self, channel: usize) {
        let station_count = self.stations.len();
        for k in 0..station_count {
            let station = (self.next_station + k) % station_count;
            if let Some(job) = self.stations[station].pop_front() {
                self.start_su(channel, station, job);
                self.next_station = (station + 1) % station_count;
                return;
            }
        }
    }

    fn record(&mut self, kind: LogEventKind, class: LogClass, channel: Option<usize>) {
        if self.log.is_none() {
            return;
        }
        let record = LogRecord {
            time: as_f64(self.now),
            kind,
            class,
            channel,
            pu_total: self.pu_total(),
            su_total: self.su_total(),
            pu_in_service: self.channels.iter().filter(|c| !c.pu_queue.is_empty()).count(),
            su_in_service: self.channels.iter().filter(|c| c.su.is_some()).count(),
        };
        if let Some(log) = &mut self.log {
            log.records.push(record);
        }
    }

    fn handle(&mut self, event: Event) {
        match event {
            Event::PuArrival { channel } => {
                let job = Job {
                    arrival: self.now,
                    remaining: F::sample_exp(&mut self.channel_services[channel], self.spec.mu_pu),
                };
                self.channels[channel].pu_queue.push_back(job);
                if self.channels[channel].pu_queue.len() == 1 {
                    // The channel was free of primaries; displace a secondary
                    // packet if one is transmitting here.
                    if let Some(active) = self.channels[channel].su.take() {
                        let bounced = Job {
                            arrival: active.arrival,
                            remaining: active.finish - self.now,
                        };
                        match self.find_idle_channel() {
                            Some(other) => self.start_su(other, active.station, bounced),
                            None => self.stations[active.station].push_front(bounced),
                        }
                    }
                    self.start_pu_service(channel);
                }
                self.schedule_pu_arrival(channel);
                self.record(LogEventKind::Arrival, LogClass::Pu, Some(channel));
            }
            Event::SuArrival { station } => {
                let job = Job {
                    arrival: self.now,
                    remaining: F::sample_exp(
                        &mut self.station_services[station],
                        self.spec.su_stations[station].mu,
                    ),
                };
                match self.find_idle_channel() {
                    Some(channel) => self.start_su(channel, station, job),
                    None => self.stations[station].push_back(job),
                }
                self.schedule_su_arrival(station);
                self.record(LogEventKind::Arrival, LogClass::Su, None);
            }
            Event::PuDeparture { channel } => {
                let job = self.channels[channel]
                    .pu_queue
                    .pop_front()
                    .expect("primary departures are never stale");
                if self.window.record_departure(self.now) {
                    self.pu_delay_sum += self.now - job.arrival;
                    self.pu_departures += 1;
                }
                if self.channels[channel].pu_queue.is_empty() {
                    self.offer_channel(channel);
                } else {
                    self.start_pu_service(channel);
                }
                self.record(LogEventKind::Departure, LogClass::Pu, Some(channel));
            }
            Event::SuDeparture { channel, token } => {
                let stale = self.channels[channel]
                    .su
                    .is_none_or(|active| active.token != token);
                if stale {
                    return; // this service was preempted
                }
                let active = self.channels[channel].su.take().unwrap();
                if self.window.record_departure(self.now) {
                    self.su_delay_sums[active.station] += self.now - active.arrival;
                    self.su_departures[active.station] += 1;
                }
                self.offer_channel(channel);
                self.record(LogEventKind::Departure, LogClass::Su, Some(channel));
            }
        }
    }

    fn run(mut self, cfg: &SimConfig) -> Result<(SimEstimate<F>, Option<EventLog>)> {
        for ch in 0..self.spec.n_channels() {
            self.schedule_pu_arrival(ch);
        }
        for st in 0..self.spec.su_stations.len() {
            self.schedule_su_arrival(st);
        }
        let budget = cfg.event_budget();
        while !self.window.done() {
            let Some(Reverse(next)) = self.queue.pop() else {
                return Err(Error::InvalidSimConfig(
                    "event queue drained before the departure target; the topology \
                     generates too little traffic to measure"
                        .into(),
                ));
            };
            self.events_processed += 1;
            if self.events_processed > budget {
                return Err(Error::EventBudgetExceeded {
                    events: self.events_processed,
                });
            }
            self.now = next.time;
            self.window.advance(self.now, self.pu_total(), self.su_total());
            self.handle(next.event);
        }

        let duration = self.window.duration();
        let d_pu = (self.pu_departures > 0)
            .then(|| self.pu_delay_sum / F::from_u64(self.pu_departures).unwrap());
        // Secondary metrics average the per-station means over stations that
        // produced measured departures.
        let mut d_su_sum = F::zero();
        let mut w_su_sum = F::zero();
        let mut counted_stations = 0u32;
        for (st, &departures) in self.su_departures.iter().enumerate() {
            if departures > 0 {
                let mean = self.su_delay_sums[st] / F::from_u64(departures).unwrap();
                d_su_sum += mean;
                w_su_sum += mean - self.spec.su_stations[st].mean_service_time();
                counted_stations += 1;
            }
        }
        let d_su = (counted_stations > 0).then(|| d_su_sum / F::from_u32(counted_stations).unwrap());
        let w_su = (counted_stations > 0).then(|| w_su_sum / F::from_u32(counted_stations).unwrap());
        let estimate = SimEstimate {
            d_pu,
            d_su,
            w_pu: d_pu.map(|d| d - self.spec.mu_pu.recip()),
            w_su,
            mean_q_pu: self.window.area_q_pu / duration,
            mean_q_su: self.window.area_q_su / duration,
            ci: None,
            replications: 1,
            events_processed: self.events_processed,
            seed: cfg.seed,
        };
        Ok((estimate, self.log))
    }
}

/// Runs one replication of the coupled topology.
pub fn run_coupled<F: SimScalar>(spec: &CoupledSpec<F>, cfg: &SimConfig) -> Result<SimEstimate<F>> {
    spec.validate()?;
    cfg.validate(spec.n_channels() as u32)?;
    Sim::new(spec, cfg, false).run(cfg).map(|(est, _)| est)
}

/// Runs one replication of the coupled topology and captures the event log.
pub fn run_coupled_logged<F: SimScalar>(
    spec: &CoupledSpec<F>,
    cfg: &SimConfig,
) -> Result<(SimEstimate<F>, EventLog)> {
    spec.validate()?;
    cfg.validate(spec.n_channels() as u32)?;
    Sim::new(spec, cfg, true)
        .run(cfg)
        .map(|(est, log)| (est, log.expect("log was requested")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmn;
    use crate::sim::{replicate, run_decoupled};

    fn station(lambda: f64, mu: f64) -> ClassParams<f64> {
        ClassParams::new(lambda, mu).unwrap()
    }

    #[test]
    fn identical_seeds_give_identical_estimates() {
        let spec = CoupledSpec {
            per_channel_pu_lambda: vec![0.4; 3],
            mu_pu: 1.0,
            su_stations: vec![station(0.5, 1.0), station(0.4, 1.0)],
        };
        let cfg = SimConfig::new(55, 2_000, 1);
        let a = run_coupled(&spec, &cfg).unwrap();
        let b = run_coupled(&spec, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn silent_stations_leave_independent_mm1_channels() {
        let spec = CoupledSpec {
            per_channel_pu_lambda: vec![0.3, 0.5, 0.7],
            mu_pu: 1.0,
            su_stations: vec![station(0.0, 1.0)],
        };
        let cfg = SimConfig::new(13, 30_000, 8);
        let est = replicate(&cfg, |c| run_coupled(&spec, c)).unwrap();
        // Pooled mean delay across channels is the arrival-weighted mean of
        // the per-channel M/M/1 delays.
        let total_lambda: f64 = spec.per_channel_pu_lambda.iter().sum();
        let expected: f64 = spec
            .per_channel_pu_lambda
            .iter()
            .map(|&l| l / (1.0 - l) / total_lambda)
            .sum();
        let d = est.d_pu.unwrap();
        let ci = est.ci.unwrap().d_pu.unwrap();
        assert!(
            (d - expected).abs() <= 3.0 * ci,
            "sim {d} vs analytic {expected} (ci {ci})"
        );
        assert_eq!(est.d_su, None);
    }

    #[test]
    fn silent_primaries_turn_one_station_into_mmn() {
        let spec = CoupledSpec {
            per_channel_pu_lambda: vec![0.0; 4],
            mu_pu: 1.0,
            su_stations: vec![station(2.5, 1.0)],
        };
        let cfg = SimConfig::new(29, 30_000, 8);
        let est = replicate(&cfg, |c| run_coupled(&spec, c)).unwrap();
        let expected = mmn::total_delay(&spec.su_stations[0], 4).unwrap();
        let d = est.d_su.unwrap();
        let ci = est.ci.unwrap().d_su.unwrap();
        assert!(
            (d - expected).abs() <= 3.0 * ci,
            "sim {d} vs analytic {expected} (ci {ci})"
        );
    }

    #[test]
    fn aggregation_approximates_the_decoupled_model() {
        // One tagged station under heavy traffic, the regime the aggregation
        // argument targets: with the secondary queue rarely empty, both
        // layouts drain it at the service rate times the mean free-channel
        // count, which the aggregation preserves exactly.
        let spec = CoupledSpec {
            per_channel_pu_lambda: vec![0.8; 5],
            mu_pu: 1.0,
            su_stations: vec![station(0.9, 1.0)],
        };
        let aggregate = spec.aggregate_model().unwrap();
        assert_eq!(aggregate.n_servers, 5);
        assert_eq!(aggregate.pu.lambda, 4.0);
        let cfg = SimConfig::new(17, 60_000, 8);
        let coupled = replicate(&cfg, |c| run_coupled(&spec, c)).unwrap();
        let decoupled = replicate(&cfg, |c| run_decoupled(&aggregate, c)).unwrap();
        let (a, b) = (coupled.d_su.unwrap(), decoupled.d_su.unwrap());
        assert!(
            (a - b).abs() <= 0.10 * b,
            "coupled {a} vs decoupled {b} differ by more than 10%"
        );
    }

    #[test]
    fn aggregate_model_requires_uniform_station_rates() {
        let spec = CoupledSpec {
            per_channel_pu_lambda: vec![0.1; 2],
            mu_pu: 1.0,
            su_stations: vec![station(0.2, 1.0), station(0.2, 2.0)],
        };
        assert_eq!(spec.aggregate_model(), None);
    }

    #[test]
    fn validation_rejects_overloaded_channels() {
        let spec = CoupledSpec {
            per_channel_pu_lambda: vec![1.5],
            mu_pu: 1.0,
            su_stations: vec![],
        };
        assert!(matches!(
            spec.validate(),
            Err(Error::InvalidParameter(_))
        ));
        let spec = CoupledSpec {
            per_channel_pu_lambda: vec![0.9, 0.9],
            mu_pu: 1.0,
            su_stations: vec![station(0.5, 1.0)],
        };
        assert!(matches!(spec.validate(), Err(Error::Unstable { .. })));
    }

    #[test]
    fn log_keeps_channels_busy_while_work_waits() {
        let spec = CoupledSpec {
            per_channel_pu_lambda: vec![0.5; 3],
            mu_pu: 1.0,
            su_stations: vec![station(0.6, 1.0), station(0.6, 1.0)],
        };
        let mut cfg = SimConfig::new(3, 500, 1);
        cfg.warmup_departures = 0;
        let (_, log) = run_coupled_logged(&spec, &cfg).unwrap();
        for r in &log.records {
            // A channel serves at most one packet of either class, so no
            // more services than channels.
            assert!(r.pu_in_service + r.su_in_service <= 3, "at {r:?}");
            // Secondary work never waits while a channel sits entirely idle.
            let idle = 3 - r.pu_in_service - r.su_in_service;
            let su_waiting = r.su_total - r.su_in_service;
            assert!(idle == 0 || su_waiting == 0, "at {r:?}");
        }
    }
}
