//! Closed-form M/M/N analytics for the high-priority class, which sees the
//! system as a plain M/M/N queue regardless of the secondary load.
//!
//! All factorial sums are accumulated in log space so the formulas remain
//! usable far beyond the server counts where `rho^N / N!` overflows.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ClassParams;
use crate::scalar::{as_f64, count, num, Scalar};

/// Bundle of the closed-form M/M/N quantities for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MmnResult<F> {
    /// Probability that the system is empty.
    pub p_o: F,
    /// Mean total delay (queueing + service) in seconds.
    pub total_delay: F,
    /// Mean number in system, `lambda * total_delay`.
    pub mean_queue_length: F,
}

/// Streaming log-sum-exp accumulator: tracks the running maximum and the
/// rescaled partial sum so terms of wildly different magnitude can be added
/// without overflow.
struct LogSumExp<F> {
    max: F,
    sum: F,
}

impl<F: Scalar> LogSumExp<F> {
    fn new() -> Self {
        Self {
            max: F::neg_infinity(),
            sum: F::zero(),
        }
    }

    fn push(&mut self, ln_term: F) {
        if ln_term == F::neg_infinity() {
            return;
        }
        if ln_term <= self.max {
            self.sum += (ln_term - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - ln_term).exp() + F::one();
            self.max = ln_term;
        }
    }

    fn ln_sum(&self) -> F {
        if self.max == F::neg_infinity() {
            F::neg_infinity()
        } else {
            self.max + self.sum.ln()
        }
    }
}

fn check_load<F: Scalar>(rho: F, n: u32) -> Result<()> {
    if !rho.is_finite() || rho < F::zero() {
        return Err(Error::InvalidParameter(format!(
            "offered load {rho} must be finite and >= 0"
        )));
    }
    if rho >= num(f64::from(n)) {
        return Err(Error::Unstable {
            rho_total: as_f64(rho),
            n_servers: n,
        });
    }
    Ok(())
}

/// Returns `(ln of the waiting-state term, ln of the full normalizing sum)`
/// for the Erlang formulas at load `rho` on `n` servers. Requires rho > 0.
fn erlang_log_terms<F: Scalar>(rho: F, n: u32) -> (F, F) {
    let ln_rho = rho.ln();
    let n_f = num::<F>(f64::from(n));
    let mut lse = LogSumExp::new();
    let mut ln_factorial = F::zero();
    for k in 0..n {
        if k > 0 {
            ln_factorial += num::<F>(f64::from(k)).ln();
        }
        lse.push(num::<F>(f64::from(k)) * ln_rho - ln_factorial);
    }
    ln_factorial += n_f.ln();
    let ln_wait_term = n_f * ln_rho - ln_factorial + (n_f / (n_f - rho)).ln();
    lse.push(ln_wait_term);
    (ln_wait_term, lse.ln_sum())
}

/// Probability that an M/M/N system at offered load `rho` is empty.
pub fn erlang_idle_probability<F: Scalar>(rho: F, n: u32) -> Result<F> {
    check_load(rho, n)?;
    if rho == F::zero() {
        return Ok(F::one());
    }
    let (_, ln_sum) = erlang_log_terms(rho, n);
    Ok((-ln_sum).exp())
}

/// Probability that an arriving packet must wait (all servers busy), the
/// Erlang-C value at offered load `rho` on `n` servers.
pub fn erlang_c<F: Scalar>(rho: F, n: u32) -> Result<F> {
    check_load(rho, n)?;
    if rho == F::zero() {
        return Ok(F::zero());
    }
    let (ln_wait_term, ln_sum) = erlang_log_terms(rho, n);
    Ok((ln_wait_term - ln_sum).exp())
}

/// Mean total delay (queueing + service) of an M/M/N queue.
pub fn total_delay<F: Scalar>(params: &ClassParams<F>, n: u32) -> Result<F> {
    params.validate()?;
    if params.lambda == F::zero() {
        return Err(Error::UndefinedDelay);
    }
    let rho = params.utilization();
    let c = erlang_c(rho, n)?;
    let n_f = num::<F>(f64::from(n));
    Ok((F::one() + c / (n_f - rho)) / params.mu)
}

/// Stationary queue-length probabilities `pi_0 ..= pi_k_max` of an M/M/N
/// birth-death chain. The head follows `rho^k / k!`, the tail decays
/// geometrically at ratio `rho / n`.
pub fn queue_length_pmf<F: Scalar>(params: &ClassParams<F>, n: u32, k_max: usize) -> Result<Vec<F>> {
    params.validate()?;
    let rho = params.utilization();
    check_load(rho, n)?;
    let mut pmf = Vec::with_capacity(k_max + 1);
    let mut term = erlang_idle_probability(rho, n)?;
    pmf.push(term);
    for k in 0..k_max {
        let divisor = count::<F>((k + 1).min(n as usize));
        term = term * rho / divisor;
        pmf.push(term);
    }
    Ok(pmf)
}

/// Tail mass the PMF support is allowed to drop.
pub const PMF_TAIL_TOLERANCE: f64 = 1e-12;

/// Hard cap on the PMF support length.
pub const PMF_SUPPORT_CAP: usize = 1_000_000;

/// Smallest `k_max` whose cumulative mass exceeds `1 - PMF_TAIL_TOLERANCE`,
/// capped at [`PMF_SUPPORT_CAP`].
pub fn default_k_max<F: Scalar>(params: &ClassParams<F>, n: u32) -> Result<usize> {
    params.validate()?;
    let rho = params.utilization();
    check_load(rho, n)?;
    let target = F::one() - num(PMF_TAIL_TOLERANCE);
    let mut term = erlang_idle_probability(rho, n)?;
    let mut cumulative = term;
    let mut k = 0usize;
    while cumulative <= target && k < PMF_SUPPORT_CAP {
        let divisor = count::<F>((k + 1).min(n as usize));
        term = term * rho / divisor;
        cumulative += term;
        k += 1;
    }
    Ok(k)
}

/// Evaluates the full M/M/N bundle for one class.
pub fn analyze<F: Scalar>(params: &ClassParams<F>, n: u32) -> Result<MmnResult<F>> {
    let p_o = erlang_idle_probability(params.utilization(), n)?;
    let total_delay = total_delay(params, n)?;
    Ok(MmnResult {
        p_o,
        total_delay,
        mean_queue_length: params.lambda * total_delay,
    })
}
