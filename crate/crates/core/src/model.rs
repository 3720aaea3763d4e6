//! Network parameters, utilization/stability checks, and parameter
//! transforms (access-delay composition, primary-traffic aggregation,
//! sensing overhead, detection/channel imperfections).
//!
//! Rates are packets/second and times are seconds throughout. All values are
//! immutable after construction; transforms return new models so baseline and
//! refined variants can be compared side by side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{as_f64, num, Scalar};

/// Arrival/service rates of one traffic class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassParams<F> {
    /// Arrival rate in packets/second. Zero is legal (degenerate class).
    pub lambda: F,
    /// Service rate in packets/second. Strictly positive.
    pub mu: F,
}

impl<F: Scalar> ClassParams<F> {
    pub fn new(lambda: F, mu: F) -> Result<Self> {
        let p = Self { lambda, mu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < F::zero() {
            return Err(Error::InvalidParameter(format!(
                "arrival rate {} must be finite and >= 0",
                self.lambda
            )));
        }
        if !self.mu.is_finite() || self.mu <= F::zero() {
            return Err(Error::InvalidParameter(format!(
                "service rate {} must be finite and > 0",
                self.mu
            )));
        }
        Ok(())
    }

    /// Offered load lambda / mu.
    pub fn utilization(&self) -> F {
        self.lambda / self.mu
    }

    /// Mean service time 1 / mu.
    pub fn mean_service_time(&self) -> F {
        self.mu.recip()
    }
}

/// Per-class utilizations plus their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Utilization<F> {
    pub pu: F,
    pub su: F,
    pub total: F,
}

/// Stability verdict carrying the total utilization it was decided on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Stability<F> {
    Stable { rho_total: F },
    Unstable { rho_total: F },
}

impl<F: Scalar> Stability<F> {
    pub fn is_stable(&self) -> bool {
        matches!(self, Stability::Stable { .. })
    }

    pub fn rho_total(&self) -> F {
        match *self {
            Stability::Stable { rho_total } | Stability::Unstable { rho_total } => rho_total,
        }
    }
}

/// The decoupled two-class network: `n_servers` channels, an aggregated
/// primary class and a tagged secondary class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkModel<F> {
    pub n_servers: u32,
    pub pu: ClassParams<F>,
    pub su: ClassParams<F>,
}

impl<F: Scalar> NetworkModel<F> {
    pub fn new(n_servers: u32, pu: ClassParams<F>, su: ClassParams<F>) -> Result<Self> {
        let m = Self { n_servers, pu, su };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_servers == 0 {
            return Err(Error::InvalidParameter(
                "server count must be at least 1".into(),
            ));
        }
        self.pu.validate()?;
        self.su.validate()
    }

    /// Per-class and total offered load.
    pub fn utilization(&self) -> Utilization<F> {
        let pu = self.pu.utilization();
        let su = self.su.utilization();
        Utilization {
            pu,
            su,
            total: pu + su,
        }
    }

    /// Stable iff rho_pu + rho_su < n_servers, strictly.
    pub fn check_stability(&self) -> Stability<F> {
        let rho_total = self.utilization().total;
        if rho_total < num(f64::from(self.n_servers)) {
            Stability::Stable { rho_total }
        } else {
            Stability::Unstable { rho_total }
        }
    }

    /// Errors with [`Error::Unstable`] unless the model is strictly stable.
    pub fn require_stable(&self) -> Result<()> {
        match self.check_stability() {
            Stability::Stable { .. } => Ok(()),
            Stability::Unstable { rho_total } => Err(Error::Unstable {
                rho_total: as_f64(rho_total),
                n_servers: self.n_servers,
            }),
        }
    }

    /// Folds half-duplex sensing overhead into the secondary service rate:
    /// mu_su shrinks by the fraction of time spent sensing while the primary
    /// side is untouched. The refined model must itself be stable.
    pub fn apply_sensing(&self, sensing: &SensingConfig<F>) -> Result<Self> {
        self.require_stable()?;
        sensing.validate()?;
        let p_d = sensing.sensing_fraction();
        let refined = Self {
            n_servers: self.n_servers,
            pu: self.pu,
            su: ClassParams {
                lambda: self.su.lambda,
                mu: self.su.mu * (F::one() - p_d),
            },
        };
        refined.require_refined_stable()
    }

    /// Folds misdetection and packet-error losses into both service rates via
    /// the geometric retransmission argument. The refined model must itself
    /// be stable.
    pub fn apply_imperfections(&self, imperfections: &ImperfectionConfig<F>) -> Result<Self> {
        self.require_stable()?;
        imperfections.validate()?;
        let refined = Self {
            n_servers: self.n_servers,
            pu: ClassParams {
                lambda: self.pu.lambda,
                mu: self.pu.mu * imperfections.p_d * (F::one() - imperfections.per_pu),
            },
            su: ClassParams {
                lambda: self.su.lambda,
                mu: self.su.mu * imperfections.p_d * (F::one() - imperfections.per_su),
            },
        };
        refined.require_refined_stable()
    }

    fn require_refined_stable(self) -> Result<Self> {
        match self.check_stability() {
            Stability::Stable { .. } => Ok(self),
            Stability::Unstable { rho_total } => Err(Error::RefinementInstability {
                rho_prime: as_f64(rho_total),
                n_servers: self.n_servers,
            }),
        }
    }
}

/// Access-delay timing of the tagged secondary user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessTiming<F> {
    /// Medium-access delay in seconds (protocol-dependent; an input here).
    pub d_access: F,
    /// Transmission time of one packet in seconds.
    pub t_s: F,
}

impl<F: Scalar> AccessTiming<F> {
    pub fn new(d_access: F, t_s: F) -> Result<Self> {
        let t = Self { d_access, t_s };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.d_access.is_finite() || self.d_access < F::zero() {
            return Err(Error::InvalidParameter(format!(
                "access delay {} must be finite and >= 0",
                self.d_access
            )));
        }
        if !self.t_s.is_finite() || self.t_s <= F::zero() {
            return Err(Error::InvalidParameter(format!(
                "transmission time {} must be finite and > 0",
                self.t_s
            )));
        }
        Ok(())
    }

    /// Secondary service rate 1 / (d_access + t_s).
    pub fn service_rate(&self) -> F {
        (self.d_access + self.t_s).recip()
    }
}

/// Periodic sensing schedule: each channel is sensed for `delta_t` seconds
/// every `t_period` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingConfig<F> {
    pub delta_t: F,
    pub t_period: F,
}

impl<F: Scalar> SensingConfig<F> {
    pub fn new(delta_t: F, t_period: F) -> Result<Self> {
        let s = Self { delta_t, t_period };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta_t.is_finite() || self.delta_t <= F::zero() {
            return Err(Error::InvalidParameter(format!(
                "sensing length {} must be finite and > 0",
                self.delta_t
            )));
        }
        if !self.t_period.is_finite() || self.t_period <= self.delta_t {
            return Err(Error::InvalidParameter(format!(
                "sensing period {} must be finite and exceed the sensing length {}",
                self.t_period, self.delta_t
            )));
        }
        Ok(())
    }

    /// Fraction of time a channel is consumed by sensing, in (0, 1).
    pub fn sensing_fraction(&self) -> F {
        self.delta_t / self.t_period
    }
}

/// Detection and channel-error parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImperfectionConfig<F> {
    /// Detection probability in (0, 1].
    pub p_d: F,
    /// Primary packet error rate in [0, 1).
    pub per_pu: F,
    /// Secondary packet error rate in [0, 1).
    pub per_su: F,
}

impl<F: Scalar> ImperfectionConfig<F> {
    pub fn new(p_d: F, per_pu: F, per_su: F) -> Result<Self> {
        let c = Self { p_d, per_pu, per_su };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_d.is_nan() || self.p_d <= F::zero() || self.p_d > F::one() {
            return Err(Error::InvalidParameter(format!(
                "detection probability {} must lie in (0, 1]",
                self.p_d
            )));
        }
        for (name, per) in [("primary", self.per_pu), ("secondary", self.per_su)] {
            if per.is_nan() || per < F::zero() || per >= F::one() {
                return Err(Error::InvalidParameter(format!(
                    "{name} packet error rate {per} must lie in [0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Sums per-channel primary arrival rates into the aggregate rate of the
/// decoupled model.
pub fn aggregate_primary<F: Scalar>(per_channel_rates: &[F]) -> Result<F> {
    if per_channel_rates.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot aggregate an empty set of channels".into(),
        ));
    }
    let mut total = F::zero();
    for (idx, &rate) in per_channel_rates.iter().enumerate() {
        if !rate.is_finite() || rate < F::zero() {
            return Err(Error::InvalidParameter(format!(
                "per-channel rate #{idx} ({rate}) must be finite and >= 0"
            )));
        }
        total += rate;
    }
    Ok(total)
}

/// Probability that a packet is lost: not detected, or hit by a channel
/// error. Monotone decreasing in `p_d`, increasing in `per`.
pub fn packet_loss_probability<F: Scalar>(p_d: F, per: F) -> Result<F> {
    for (name, p) in [("detection probability", p_d), ("packet error rate", per)] {
        if p.is_nan() || p < F::zero() || p > F::one() {
            return Err(Error::InvalidParameter(format!(
                "{name} {p} must lie in [0, 1]"
            )));
        }
    }
    Ok(F::one() - p_d * (F::one() - per))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(n: u32, l1: f64, m1: f64, l2: f64, m2: f64) -> NetworkModel<f64> {
        NetworkModel::new(
            n,
            ClassParams::new(l1, m1).unwrap(),
            ClassParams::new(l2, m2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn utilization_matches_rates() {
        let m = model(10, 0.3e4, 0.5e4, 4e4, 1e4);
        let u = m.utilization();
        assert_eq!(u.pu, 0.6);
        assert_eq!(u.su, 4.0);
        assert_eq!(u.total, 4.6);
    }

    #[test]
    fn utilization_zero_traffic() {
        let m = model(10, 0.0, 0.5e4, 0.0, 1e4);
        let u = m.utilization();
        assert_eq!((u.pu, u.su, u.total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn utilization_heavy_traffic_from_rates() {
        // The load is computed from the rates; 2.7e4 / 0.5e4 is 5.4 even
        // though figure captions elsewhere round it differently.
        let m = model(10, 2.7e4, 0.5e4, 4e4, 1e4);
        let u = m.utilization();
        assert_eq!(u.pu, 5.4);
        assert_eq!(u.su, 4.0);
        assert_eq!(u.total, 9.4);
    }

    #[test]
    fn stability_verdicts() {
        assert!(model(10, 0.3e4, 0.5e4, 4e4, 1e4).check_stability().is_stable());
        assert!(model(10, 2.73e4, 0.5e4, 4e4, 1e4).check_stability().is_stable());
        // rho_total == N is excluded by the strict inequality.
        let boundary = model(10, 3e4, 0.5e4, 4e4, 1e4);
        assert_eq!(boundary.utilization().total, 10.0);
        assert!(!boundary.check_stability().is_stable());
        assert!(matches!(
            boundary.require_stable(),
            Err(Error::Unstable { n_servers: 10, .. })
        ));
    }

    #[test]
    fn stability_is_symmetric_in_class_labels() {
        let m = model(7, 1.2e3, 0.9e3, 2.1e3, 1.7e3);
        let swapped = model(7, 2.1e3, 1.7e3, 1.2e3, 0.9e3);
        assert_eq!(
            m.check_stability().rho_total(),
            swapped.check_stability().rho_total()
        );
        assert_eq!(
            m.check_stability().is_stable(),
            swapped.check_stability().is_stable()
        );
    }

    #[test]
    fn access_timing_service_rate() {
        assert_eq!(AccessTiming::new(0.0, 1e-4).unwrap().service_rate(), 1e4);
        assert_eq!(AccessTiming::new(1e-4, 1e-4).unwrap().service_rate(), 5e3);
        assert_eq!(AccessTiming::new(9e-4, 1e-4).unwrap().service_rate(), 1e3);
    }

    #[test]
    fn aggregate_primary_sums_rates() {
        let rates = [0.03e4; 10];
        assert_eq!(aggregate_primary(&rates).unwrap(), 0.3e4);
        assert_eq!(aggregate_primary(&[0.0; 10]).unwrap(), 0.0);
        assert_eq!(aggregate_primary(&[1.0, 2.0, 3.0]).unwrap(), 6.0);
        assert!(matches!(
            aggregate_primary::<f64>(&[]),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn sensing_scales_secondary_only() {
        let m = model(10, 0.3e4, 0.5e4, 4e4, 1e4);
        let s = SensingConfig::new(0.1, 1.0).unwrap();
        let refined = m.apply_sensing(&s).unwrap();
        assert_eq!(refined.pu, m.pu);
        assert_eq!(refined.su.lambda, m.su.lambda);
        assert_eq!(refined.su.mu, 0.9e4);
        let rho2 = refined.su.utilization();
        assert!((rho2 - 4.0 / 0.9).abs() < 1e-15 * rho2);
    }

    #[test]
    fn vanishing_sensing_length_leaves_model_unchanged() {
        let m = model(10, 0.3e4, 0.5e4, 4e4, 1e4);
        let s = SensingConfig::new(1e-300, 1.0).unwrap();
        let refined = m.apply_sensing(&s).unwrap();
        assert_eq!(refined, m);
    }

    #[test]
    fn sensing_can_destabilize() {
        let m = model(10, 2.7e4, 0.5e4, 4e4, 1e4); // rho = 9.4
        let s = SensingConfig::new(0.2, 1.0).unwrap(); // rho2 -> 5, rho' = 10.4
        match m.apply_sensing(&s) {
            Err(Error::RefinementInstability { rho_prime, n_servers: 10 }) => {
                assert!(rho_prime >= 10.0);
            }
            other => panic!("expected refinement instability, got {other:?}"),
        }
    }

    #[test]
    fn perfect_imperfections_are_identity() {
        let m = model(10, 0.3e4, 0.5e4, 4e4, 1e4);
        let c = ImperfectionConfig::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(m.apply_imperfections(&c).unwrap(), m);
    }

    #[test]
    fn imperfections_scale_both_rates() {
        let m = model(10, 0.01e4, 0.5e4, 0.01e4, 1e4);
        let c = ImperfectionConfig::new(0.9, 0.1, 0.0).unwrap();
        let refined = m.apply_imperfections(&c).unwrap();
        assert!((refined.pu.mu - 0.405e4).abs() < 1e-9);
        assert_eq!(refined.su.mu, 0.9e4);
        assert_eq!(refined.pu.lambda, m.pu.lambda);
    }

    #[test]
    fn imperfections_can_destabilize() {
        let m = model(10, 2.7e4, 0.5e4, 4e4, 1e4); // rho = 9.4
        // Effective rates shrink to a quarter: rho' = 37.6.
        let c = ImperfectionConfig::new(0.5, 0.5, 0.5).unwrap();
        assert!(matches!(
            m.apply_imperfections(&c),
            Err(Error::RefinementInstability { .. })
        ));
    }

    #[test]
    fn packet_loss_examples() {
        assert_eq!(packet_loss_probability(1.0f64, 0.0).unwrap(), 0.0);
        assert_eq!(packet_loss_probability(0.0f64, 0.3).unwrap(), 1.0);
        assert!((packet_loss_probability(0.9f64, 0.1).unwrap() - 0.19).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ClassParams::new(-1.0, 1.0).is_err());
        assert!(ClassParams::new(1.0, 0.0).is_err());
        assert!(ClassParams::new(f64::NAN, 1.0).is_err());
        assert!(NetworkModel::new(
            0,
            ClassParams::new(1.0, 2.0).unwrap(),
            ClassParams::new(1.0, 2.0).unwrap()
        )
        .is_err());
        assert!(SensingConfig::new(0.0, 1.0).is_err());
        assert!(SensingConfig::new(1.0, 1.0).is_err());
        assert!(ImperfectionConfig::new(0.0, 0.0, 0.0).is_err());
        assert!(ImperfectionConfig::new(0.5, 1.0, 0.0).is_err());
        assert!(packet_loss_probability(1.5, 0.0).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn stable_model() -> impl Strategy<Value = NetworkModel<f64>> {
            (1u32..=16, 1e-2f64..1e5, 1e-2f64..1e5, 0.0f64..0.95, 0.0f64..0.95).prop_map(
                |(n, mu1, mu2, x1, x2)| {
                    // Split a sub-critical total load between the classes.
                    let rho1 = x1 * f64::from(n);
                    let rho2 = x2 * (f64::from(n) - rho1).max(0.0) * 0.99;
                    model_from(n, rho1 * mu1, mu1, rho2 * mu2, mu2)
                },
            )
        }

        fn model_from(n: u32, l1: f64, m1: f64, l2: f64, m2: f64) -> NetworkModel<f64> {
            NetworkModel::new(
                n,
                ClassParams::new(l1, m1).unwrap(),
                ClassParams::new(l2, m2).unwrap(),
            )
            .unwrap()
        }

        proptest! {
            #[test]
            fn sensing_preserves_primary_bits(m in stable_model(), p in 1e-6f64..0.999) {
                let headroom = 1.0 - m.su.utilization()
                    / (f64::from(m.n_servers) - m.pu.utilization());
                prop_assume!(p < headroom);
                let s = SensingConfig { delta_t: p, t_period: 1.0 };
                if let Ok(refined) = m.apply_sensing(&s) {
                    prop_assert_eq!(refined.pu.lambda.to_bits(), m.pu.lambda.to_bits());
                    prop_assert_eq!(refined.pu.mu.to_bits(), m.pu.mu.to_bits());
                    let expected = m.pu.utilization() + m.su.utilization() / (1.0 - p);
                    let got = refined.utilization().total;
                    prop_assert!((got - expected).abs() <= 4.0 * f64::EPSILON * expected.max(1.0));
                }
            }

            #[test]
            fn packet_loss_monotone(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0, e1 in 0.0f64..=1.0, e2 in 0.0f64..=1.0) {
                let (p_lo, p_hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
                let (e_lo, e_hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
                // Decreasing in detection probability at fixed error rate.
                prop_assert!(
                    packet_loss_probability(p_hi, e_lo).unwrap()
                        <= packet_loss_probability(p_lo, e_lo).unwrap()
                );
                // Increasing in error rate at fixed detection probability.
                prop_assert!(
                    packet_loss_probability(p_lo, e_lo).unwrap()
                        <= packet_loss_probability(p_lo, e_hi).unwrap()
                );
            }

            #[test]
            fn stability_symmetric(m in stable_model()) {
                let swapped = NetworkModel { n_servers: m.n_servers, pu: m.su, su: m.pu };
                prop_assert_eq!(
                    m.check_stability().is_stable(),
                    swapped.check_stability().is_stable()
                );
            }
        }
    }
}
