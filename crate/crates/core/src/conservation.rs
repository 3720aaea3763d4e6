//! Work-conservation identities for the two-class system and the performance
//! vectors they induce under either priority ordering.
//!
//! The single-server law fixes the weighted waiting-time sum of any
//! work-conserving multi-class M/M/1 system. Its multi-server counterpart
//! fixes `rho_pu * D_pu + rho_su * D_su` on N servers; combined with the fact
//! that the prioritized class sees a plain M/M/N queue, it yields closed-form
//! delays for both classes under both orderings. The multi-server identity is
//! validated empirically against the Markov chain and the simulator rather
//! than proven.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mmn;
use crate::model::{ClassParams, NetworkModel};
use crate::scalar::{as_f64, num, Scalar};

/// Which class holds absolute preemptive priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PriorityOrdering {
    PuPriority,
    SuPriority,
}

/// Delays and waiting times of both classes under one priority ordering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerformanceVector<F> {
    pub d_pu: F,
    pub d_su: F,
    pub w_pu: F,
    pub w_su: F,
    pub ordering: PriorityOrdering,
}

/// The four vertex waiting times of the two-class achievable region:
/// `a`/`c` are the primary/secondary waits under primary priority, `b`/`d`
/// the same under secondary priority. Valid vertices satisfy `a < b` and
/// `d < c` strictly whenever both classes carry traffic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionVertices<F> {
    pub a: F,
    pub b: F,
    pub c: F,
    pub d: F,
    pub model: NetworkModel<F>,
}

impl<F: Scalar> RegionVertices<F> {
    pub fn new(a: F, b: F, c: F, d: F, model: NetworkModel<F>) -> Result<Self> {
        for (name, w) in [("a", a), ("b", b), ("c", c), ("d", d)] {
            if !w.is_finite() || w < F::zero() {
                return Err(Error::InvalidParameter(format!(
                    "vertex waiting time {name} = {w} must be finite and >= 0"
                )));
            }
        }
        if a >= b || d >= c {
            return Err(Error::DegenerateRegion);
        }
        Ok(Self { a, b, c, d, model })
    }
}

/// Fixed weighted waiting-time sum of a work-conserving single-server
/// multi-class queue: `sum(rho_i / mu_i) / (1 - sum(rho_i))`.
pub fn kleinrock_weighted_sum<F: Scalar>(classes: &[ClassParams<F>]) -> Result<F> {
    let mut rho_total = F::zero();
    let mut residual = F::zero();
    for class in classes {
        class.validate()?;
        let rho = class.utilization();
        rho_total += rho;
        residual += rho / class.mu;
    }
    if rho_total >= F::one() {
        return Err(Error::Unstable {
            rho_total: as_f64(rho_total),
            n_servers: 1,
        });
    }
    if rho_total == F::zero() {
        return Ok(F::zero());
    }
    Ok(residual / (F::one() - rho_total))
}

/// The conserved value of `rho_pu * D_pu + rho_su * D_su` on N servers.
///
/// Evaluated as `C(N, rho) * V / (N - rho) + V` with `V = rho_pu/mu_pu +
/// rho_su/mu_su` and `C` the Erlang waiting probability, which is the
/// factorial sum of the law folded through the same log-space machinery as
/// the M/M/N formulas. Returns 0 when neither class carries traffic.
pub fn conservation_sum<F: Scalar>(model: &NetworkModel<F>) -> Result<F> {
    model.validate()?;
    model.require_stable()?;
    let u = model.utilization();
    if u.total == F::zero() {
        return Ok(F::zero());
    }
    let v = u.pu / model.pu.mu + u.su / model.su.mu;
    let n_f = num::<F>(f64::from(model.n_servers));
    let c = mmn::erlang_c(u.total, model.n_servers)?;
    Ok(c * v / (n_f - u.total) + v)
}

/// Secondary total delay under primary priority, obtained by removing the
/// primary's M/M/N share from the conserved sum.
pub fn secondary_delay_from_law<F: Scalar>(model: &NetworkModel<F>) -> Result<F> {
    model.validate()?;
    model.require_stable()?;
    if model.su.lambda == F::zero() {
        return Err(Error::UndefinedDelay);
    }
    let u = model.utilization();
    let total = conservation_sum(model)?;
    let pu_share = if model.pu.lambda == F::zero() {
        F::zero()
    } else {
        u.pu * mmn::total_delay(&model.pu, model.n_servers)?
    };
    Ok((total - pu_share) / u.su)
}

/// Closed-form delays and waits of both classes under the given ordering.
/// The prioritized class takes the plain M/M/N delay; the other class is
/// recovered from the conserved sum.
pub fn performance_vector<F: Scalar>(
    model: &NetworkModel<F>,
    ordering: PriorityOrdering,
) -> Result<PerformanceVector<F>> {
    model.validate()?;
    model.require_stable()?;
    if model.pu.lambda == F::zero() || model.su.lambda == F::zero() {
        return Err(Error::UndefinedDelay);
    }
    let (d_pu, d_su) = match ordering {
        PriorityOrdering::PuPriority => {
            let d_pu = mmn::total_delay(&model.pu, model.n_servers)?;
            let d_su = secondary_delay_from_law(model)?;
            (d_pu, d_su)
        }
        PriorityOrdering::SuPriority => {
            let swapped = NetworkModel {
                n_servers: model.n_servers,
                pu: model.su,
                su: model.pu,
            };
            let d_su = mmn::total_delay(&swapped.pu, swapped.n_servers)?;
            let d_pu = secondary_delay_from_law(&swapped)?;
            (d_pu, d_su)
        }
    };
    Ok(PerformanceVector {
        d_pu,
        d_su,
        w_pu: d_pu - model.pu.mean_service_time(),
        w_su: d_su - model.su.mean_service_time(),
        ordering,
    })
}

/// The two absolute-priority operating points as region vertices.
pub fn region_vertices<F: Scalar>(model: &NetworkModel<F>) -> Result<RegionVertices<F>> {
    let pu_first = performance_vector(model, PriorityOrdering::PuPriority)?;
    let su_first = performance_vector(model, PriorityOrdering::SuPriority)?;
    RegionVertices::new(pu_first.w_pu, su_first.w_pu, pu_first.w_su, su_first.w_su, *model)
}
