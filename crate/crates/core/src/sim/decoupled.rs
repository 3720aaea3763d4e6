//! Event-driven simulation of the decoupled model: one aggregated primary
//! class and one secondary class on `N` shared servers, preemptive-resume
//! priority for the primary.
//!
//! Service requirements are drawn when a packet arrives, from the class's
//! service stream, so the draw sequence depends only on the arrival order.
//! A primary arrival that finds every server busy but at least one secondary
//! in service preempts the most-recently-started secondary service; the
//! preempted packet keeps its remaining work and returns to the head of the
//! secondary queue (it arrived before every packet waiting there, so FIFO
//! order is preserved).

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand_chacha::ChaCha8Rng;

use super::log::{EventLog, LogClass, LogEventKind, LogRecord};
use super::rng::{self, stream_rng};
use super::{Scheduled, SimConfig, SimEstimate, SimScalar, Window};
use crate::error::{Error, Result};
use crate::model::NetworkModel;
use crate::scalar::as_f64;

#[derive(Debug, Clone, Copy)]
enum Event {
    PuArrival,
    SuArrival,
    PuDeparture { token: u64 },
    SuDeparture { token: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Job<F> {
    arrival: F,
    remaining: F,
}

#[derive(Debug, Clone, Copy)]
struct ActivePu<F> {
    token: u64,
    arrival: F,
}

#[derive(Debug, Clone, Copy)]
struct ActiveSu<F> {
    token: u64,
    arrival: F,
    started: F,
    finish: F,
}

struct Sim<'a, F: SimScalar> {
    model: &'a NetworkModel<F>,
    n: usize,
    now: F,
    seq: u64,
    next_token: u64,
    queue: BinaryHeap<Reverse<Scheduled<F, Event>>>,
    pu_wait: VecDeque<Job<F>>,
    su_wait: VecDeque<Job<F>>,
    pu_active: Vec<ActivePu<F>>,
    su_active: Vec<ActiveSu<F>>,
    pu_arrivals: ChaCha8Rng,
    pu_services: ChaCha8Rng,
    su_arrivals: ChaCha8Rng,
    su_services: ChaCha8Rng,
    window: Window<F>,
    pu_delay_sum: F,
    pu_departures: u64,
    su_delay_sum: F,
    su_departures: u64,
    events_processed: u64,
    log: Option<EventLog>,
}

impl<'a, F: SimScalar> Sim<'a, F> {
    fn new(model: &'a NetworkModel<F>, cfg: &SimConfig, with_log: bool) -> Self {
        Self {
            model,
            n: model.n_servers as usize,
            now: F::zero(),
            seq: 0,
            next_token: 0,
            queue: BinaryHeap::new(),
            pu_wait: VecDeque::new(),
            su_wait: VecDeque::new(),
            pu_active: Vec::with_capacity(model.n_servers as usize),
            su_active: Vec::with_capacity(model.n_servers as usize),
            pu_arrivals: stream_rng(cfg.seed, rng::PU_ARRIVALS),
            pu_services: stream_rng(cfg.seed, rng::PU_SERVICES),
            su_arrivals: stream_rng(cfg.seed, rng::SU_ARRIVALS),
            su_services: stream_rng(cfg.seed, rng::SU_SERVICES),
            window: Window::new(cfg),
            pu_delay_sum: F::zero(),
            pu_departures: 0,
            su_delay_sum: F::zero(),
            su_departures: 0,
            events_processed: 0,
            log: with_log.then(EventLog::default),
        }
    }

    fn schedule(&mut self, time: F, event: Event) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Scheduled { time, seq, event }));
    }

    fn schedule_pu_arrival(&mut self) {
        if self.model.pu.lambda > F::zero() {
            let gap = F::sample_exp(&mut self.pu_arrivals, self.model.pu.lambda);
            self.schedule(self.now + gap, Event::PuArrival);
        }
    }

    fn schedule_su_arrival(&mut self) {
        if self.model.su.lambda > F::zero() {
            let gap = F::sample_exp(&mut self.su_arrivals, self.model.su.lambda);
            self.schedule(self.now + gap, Event::SuArrival);
        }
    }

    fn pu_total(&self) -> usize {
        self.pu_wait.len() + self.pu_active.len()
    }

    fn su_total(&self) -> usize {
        self.su_wait.len() + self.su_active.len()
    }

    fn busy(&self) -> usize {
        self.pu_active.len() + self.su_active.len()
    }

    fn start_pu(&mut self, job: Job<F>) {
        let token = self.next_token;
        self.next_token += 1;
        self.pu_active.push(ActivePu {
            token,
            arrival: job.arrival,
        });
        self.schedule(self.now + job.remaining, Event::PuDeparture { token });
    }

    fn start_su(&mut self, job: Job<F>) {
        let token = self.next_token;
        self.next_token += 1;
        let finish = self.now + job.remaining;
        self.su_active.push(ActiveSu {
            token,
            arrival: job.arrival,
            started: self.now,
            finish,
        });
        self.schedule(finish, Event::SuDeparture { token });
    }

    /// Preempts the most-recently-started secondary service and returns its
    /// job with the remaining work preserved.
    fn preempt_newest_su(&mut self) -> Job<F> {
        let idx = self
            .su_active
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| {
                x.started
                    .partial_cmp(&y.started)
                    .expect("service times are never NaN")
                    .then(x.token.cmp(&y.token))
            })
            .map(|(idx, _)| idx)
            .expect("preemption requires an active secondary service");
        let active = self.su_active.swap_remove(idx);
        Job {
            arrival: active.arrival,
            remaining: active.finish - self.now,
        }
    }

    fn record(&mut self, kind: LogEventKind, class: LogClass) {
        let record = LogRecord {
            time: as_f64(self.now),
            kind,
            class,
            channel: None,
            pu_total: self.pu_total(),
            su_total: self.su_total(),
            pu_in_service: self.pu_active.len(),
            su_in_service: self.su_active.len(),
        };
        if let Some(log) = &mut self.log {
            log.records.push(record);
        }
    }

    fn handle(&mut self, event: Event) {
        match event {
            Event::PuArrival => {
                let job = Job {
                    arrival: self.now,
                    remaining: F::sample_exp(&mut self.pu_services, self.model.pu.mu),
                };
                if self.pu_active.len() < self.n {
                    if self.busy() == self.n {
                        let preempted = self.preempt_newest_su();
                        self.su_wait.push_front(preempted);
                    }
                    self.start_pu(job);
                } else {
                    self.pu_wait.push_back(job);
                }
                self.schedule_pu_arrival();
                self.record(LogEventKind::Arrival, LogClass::Pu);
            }
            Event::SuArrival => {
                let job = Job {
                    arrival: self.now,
                    remaining: F::sample_exp(&mut self.su_services, self.model.su.mu),
                };
                if self.busy() < self.n {
                    self.start_su(job);
                } else {
                    self.su_wait.push_back(job);
                }
                self.schedule_su_arrival();
                self.record(LogEventKind::Arrival, LogClass::Su);
            }
            Event::PuDeparture { token } => {
                let idx = self
                    .pu_active
                    .iter()
                    .position(|a| a.token == token)
                    .expect("primary departures are never stale");
                let active = self.pu_active.swap_remove(idx);
                if self.window.record_departure(self.now) {
                    self.pu_delay_sum += self.now - active.arrival;
                    self.pu_departures += 1;
                }
                if let Some(job) = self.pu_wait.pop_front() {
                    self.start_pu(job);
                } else if let Some(job) = self.su_wait.pop_front() {
                    self.start_su(job);
                }
                self.record(LogEventKind::Departure, LogClass::Pu);
            }
            Event::SuDeparture { token } => {
                let Some(idx) = self.su_active.iter().position(|a| a.token == token) else {
                    return; // stale: this service was preempted
                };
                let active = self.su_active.swap_remove(idx);
                if self.window.record_departure(self.now) {
                    self.su_delay_sum += self.now - active.arrival;
                    self.su_departures += 1;
                }
                if let Some(job) = self.su_wait.pop_front() {
                    self.start_su(job);
                }
                self.record(LogEventKind::Departure, LogClass::Su);
            }
        }
    }

    fn run(mut self, cfg: &SimConfig) -> Result<(SimEstimate<F>, Option<EventLog>)> {
        self.schedule_pu_arrival();
        self.schedule_su_arrival();
        let budget = cfg.event_budget();
        while !self.window.done() {
            let Some(Reverse(next)) = self.queue.pop() else {
                return Err(Error::InvalidSimConfig(
                    "event queue drained before the departure target; the model \
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
        let d_su = (self.su_departures > 0)
            .then(|| self.su_delay_sum / F::from_u64(self.su_departures).unwrap());
        let estimate = SimEstimate {
            d_pu,
            d_su,
            w_pu: d_pu.map(|d| d - self.model.pu.mean_service_time()),
            w_su: d_su.map(|d| d - self.model.su.mean_service_time()),
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

/// Runs one replication of the decoupled model.
pub fn run_decoupled<F: SimScalar>(
    model: &NetworkModel<F>,
    cfg: &SimConfig,
) -> Result<SimEstimate<F>> {
    model.validate()?;
    model.require_stable()?;
    cfg.validate(model.n_servers)?;
    Sim::new(model, cfg, false).run(cfg).map(|(est, _)| est)
}

/// Runs one replication of the decoupled model and captures the event log.
pub fn run_decoupled_logged<F: SimScalar>(
    model: &NetworkModel<F>,
    cfg: &SimConfig,
) -> Result<(SimEstimate<F>, EventLog)> {
    model.validate()?;
    model.require_stable()?;
    cfg.validate(model.n_servers)?;
    Sim::new(model, cfg, true)
        .run(cfg)
        .map(|(est, log)| (est, log.expect("log was requested")))
}
